//! Characterizing what the trained classifier keys on: occlusion-based word
//! influence, stereotype-lexicon differentials, and surfacing strongly
//! gendered replies to weakly gendered posts.
//!
//! Everything here reads an immutable model; analyses are per-comment pure
//! functions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biasmodel::Prediction;
use crate::corpus::Gender;
use crate::error::{Error, Result};

const ENGLISH_WORDS: &str = include_str!("../data/english_words.txt");

/// Takes the `n` comments with maximal prediction score for the class
/// (ties broken by comment id). `truncated` is set when fewer than `n`
/// comments exist.
pub fn top_confident(
    predictions: &[Prediction],
    n: usize,
    class: Gender,
) -> (Vec<Prediction>, bool) {
    let mut sorted: Vec<Prediction> = predictions.to_vec();
    sorted.sort_by(|a, b| {
        let ka = class_score(a, class);
        let kb = class_score(b, class);
        kb.partial_cmp(&ka)
            .unwrap()
            .then_with(|| a.comment_id.cmp(&b.comment_id))
    });
    let truncated = sorted.len() < n;
    sorted.truncate(n);
    (sorted, truncated)
}

fn class_score(p: &Prediction, class: Gender) -> f64 {
    match class {
        Gender::F => p.score,
        Gender::M => 1.0 - p.score,
    }
}

/// Mean prediction-score drop when a word's occurrences are masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingEntry {
    pub word: String,
    /// score(original) - score(masked), averaged over every occurrence.
    pub mean_delta: f64,
    pub occurrences: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskingReport {
    /// Sorted by mean delta, descending.
    pub entries: Vec<MaskingEntry>,
    pub comments_scored: usize,
    pub comments_skipped: usize,
}

impl MaskingReport {
    pub fn influence_of(&self, word: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.word == word)
            .map(|e| e.mean_delta)
    }
}

/// Occlusion attribution: for every token occurrence in every comment,
/// re-score the comment with that occurrence omitted and average the score
/// drop per word. Single-token comments are skipped (masking would leave
/// nothing to score); masked comments shorter than the training-time length
/// filter are still scored, since the filter is a training-time rule.
pub fn masking_influence<F>(score: F, comments: &[(String, Vec<String>)]) -> Result<MaskingReport>
where
    F: Fn(&[String]) -> Result<f64>,
{
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut scored = 0;
    let mut skipped = 0;
    for (_id, tokens) in comments {
        if tokens.len() < 2 {
            skipped += 1;
            continue;
        }
        let original = score(tokens)?;
        scored += 1;
        for i in 0..tokens.len() {
            let masked: Vec<String> = tokens
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, t)| t.clone())
                .collect();
            let delta = original - score(&masked)?;
            let entry = sums.entry(tokens[i].clone()).or_insert((0.0, 0));
            entry.0 += delta;
            entry.1 += 1;
        }
    }
    let mut entries: Vec<MaskingEntry> = sums
        .into_iter()
        .map(|(word, (sum, count))| MaskingEntry {
            word,
            mean_delta: sum / count as f64,
            occurrences: count,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_delta
            .partial_cmp(&a.mean_delta)
            .unwrap()
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(MaskingReport {
        entries,
        comments_scored: scored,
        comments_skipped: skipped,
    })
}

// ---------------------------------------------------------------------------
// Lemmatization and the English heuristic
// ---------------------------------------------------------------------------

/// Lightweight suffix-stripping lemmatizer, applied identically to comment
/// tokens and lexicon words so that inflected forms collapse together.
/// One reduction pass applies the first matching rule (`sses -> ss`,
/// `ies -> y`, strip `ing`/`ed`/`ly`/`es`, strip a plural `s` not after
/// ss/us/is, strip a trailing `e`); passes repeat until nothing changes, so
/// the result is a fixpoint and lemmatization is idempotent.
pub fn lemmatize(word: &str) -> String {
    let mut w = word.to_string();
    loop {
        let next = lemmatize_pass(&w);
        if next == w {
            return w;
        }
        w = next;
    }
}

fn lemmatize_pass(word: &str) -> String {
    let mut w = word.to_string();
    let n = w.len();
    if n >= 5 && w.ends_with("sses") {
        w.truncate(n - 2);
    } else if n >= 5 && w.ends_with("ies") {
        w.truncate(n - 3);
        w.push('y');
    } else if n >= 6 && w.ends_with("ing") {
        w.truncate(n - 3);
    } else if n >= 5 && w.ends_with("ed") {
        w.truncate(n - 2);
    } else if n >= 5 && w.ends_with("ly") {
        w.truncate(n - 2);
    } else if n >= 5 && w.ends_with("es") {
        w.truncate(n - 2);
    } else if n >= 4
        && w.ends_with('s')
        && !w.ends_with("ss")
        && !w.ends_with("us")
        && !w.ends_with("is")
    {
        w.truncate(n - 1);
    }
    if w.len() >= 4 && w.ends_with('e') {
        w.truncate(w.len() - 1);
    }
    w
}

/// Heuristic non-English filter: the fraction of alphabetic tokens found in
/// a bundled common-word list must reach `threshold`. Comments with no
/// alphabetic tokens pass.
#[derive(Debug, Clone)]
pub struct EnglishFilter {
    words: BTreeSet<String>,
    threshold: f64,
}

impl EnglishFilter {
    pub fn bundled(threshold: f64) -> EnglishFilter {
        let words = ENGLISH_WORDS
            .split_whitespace()
            .map(|w| w.to_string())
            .collect();
        EnglishFilter { words, threshold }
    }

    pub fn is_english(&self, tokens: &[String]) -> bool {
        let alpha: Vec<&String> = tokens
            .iter()
            .filter(|t| t.chars().any(|c| c.is_alphabetic()))
            .collect();
        if alpha.is_empty() {
            return true;
        }
        let hits = alpha.iter().filter(|t| self.words.contains(t.as_str())).count();
        hits as f64 / alpha.len() as f64 >= self.threshold
    }
}

// ---------------------------------------------------------------------------
// Lexicon differentials
// ---------------------------------------------------------------------------

/// One category's word list; words are stored lemmatized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryLexicon {
    pub name: String,
    pub words: BTreeSet<String>,
}

impl CategoryLexicon {
    pub fn new(name: &str, words: impl IntoIterator<Item = String>) -> Result<CategoryLexicon> {
        let words: BTreeSet<String> = words.into_iter().map(|w| lemmatize(&w)).collect();
        if words.is_empty() {
            return Err(Error::Analysis(format!("lexicon {name:?} is empty")));
        }
        Ok(CategoryLexicon {
            name: name.to_string(),
            words,
        })
    }
}

/// Loads one-category-per-file word lists from a directory; the file stem
/// names the category.
pub fn load_lexicons_dir(dir: &Path) -> Result<Vec<CategoryLexicon>> {
    let mut lexicons = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
        .collect();
    paths.sort();
    for path in paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unnamed")
            .to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let words = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.to_string());
        lexicons.push(CategoryLexicon::new(&name, words)?);
    }
    if lexicons.is_empty() {
        return Err(Error::Analysis(format!("no lexicon files in {dir:?}")));
    }
    Ok(lexicons)
}

/// The default stereotype-category lexicons bundled with the crate.
pub fn bundled_lexicons() -> Vec<CategoryLexicon> {
    let files: [(&str, &str); 7] = [
        ("arrogant", include_str!("../data/lexicons/arrogant.txt")),
        ("beautiful", include_str!("../data/lexicons/beautiful.txt")),
        ("domestic", include_str!("../data/lexicons/domestic.txt")),
        ("intelligent", include_str!("../data/lexicons/intelligent.txt")),
        ("sexual", include_str!("../data/lexicons/sexual.txt")),
        ("strong", include_str!("../data/lexicons/strong.txt")),
        ("weak", include_str!("../data/lexicons/weak.txt")),
    ];
    files
        .iter()
        .map(|(name, text)| {
            CategoryLexicon::new(name, text.lines().map(|l| l.trim().to_string()))
                .expect("bundled lexicons are non-empty")
        })
        .collect()
}

/// A comment ready for analysis: substituted tokens, gold gender, and the
/// model's prediction score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredComment {
    pub comment_id: String,
    pub tokens: Vec<String>,
    pub gold: Gender,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDifferential {
    pub category: String,
    /// freq(high-confidence set) - freq(random gold-F sample).
    pub differential: f64,
    pub freq_high: f64,
    pub freq_comparison: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconDifferential {
    pub threshold: f64,
    pub high_set_size: usize,
    pub comparison_size: usize,
    /// Sorted by differential, descending.
    pub categories: Vec<CategoryDifferential>,
}

#[derive(Debug, Clone)]
pub struct DifferentialConfig {
    /// Prediction-score threshold for the high-confidence set.
    pub threshold: f64,
    pub seed: u64,
    /// Optional non-English comment filter.
    pub english: Option<EnglishFilter>,
}

impl Default for DifferentialConfig {
    fn default() -> Self {
        DifferentialConfig {
            threshold: 0.99,
            seed: 1,
            english: None,
        }
    }
}

fn category_frequency(
    comments: &[&ScoredComment],
    lexicon: &CategoryLexicon,
) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for c in comments {
        for tok in &c.tokens {
            total += 1;
            if lexicon.words.contains(&lemmatize(tok)) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Compares lexicon-category frequencies between the comments the model is
/// most confident about and random samples of gold-F comments.
///
/// The high-confidence set is every comment with `score >= threshold`; the
/// comparison set is an equal-size random sample of gold-F comments, drawn
/// twice with different seeds and averaged. Counts are normalized by total
/// tokens per set; comment text and lexicons are lemmatized with the same
/// rules; negation is not handled.
pub fn lexicon_differential(
    items: &[ScoredComment],
    lexicons: &[CategoryLexicon],
    cfg: &DifferentialConfig,
) -> Result<LexiconDifferential> {
    let filtered: Vec<&ScoredComment> = items
        .iter()
        .filter(|c| {
            cfg.english
                .as_ref()
                .map(|f| f.is_english(&c.tokens))
                .unwrap_or(true)
        })
        .collect();
    let high: Vec<&ScoredComment> = filtered
        .iter()
        .copied()
        .filter(|c| c.score >= cfg.threshold)
        .collect();
    if high.is_empty() {
        return Err(Error::Analysis(format!(
            "no comments reach prediction score {}; lower the threshold",
            cfg.threshold
        )));
    }
    let pool: Vec<&ScoredComment> = filtered
        .iter()
        .copied()
        .filter(|c| c.gold == Gender::F)
        .collect();
    let k = high.len().min(pool.len());

    let sample = |seed: u64| -> Vec<&ScoredComment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.choose_multiple(&mut rng, k).copied().collect()
    };
    let cmp_a = sample(cfg.seed);
    let cmp_b = sample(cfg.seed.wrapping_add(1));

    let mut categories: Vec<CategoryDifferential> = lexicons
        .iter()
        .map(|lex| {
            let freq_high = category_frequency(&high, lex);
            let freq_cmp =
                0.5 * (category_frequency(&cmp_a, lex) + category_frequency(&cmp_b, lex));
            CategoryDifferential {
                category: lex.name.clone(),
                differential: freq_high - freq_cmp,
                freq_high,
                freq_comparison: freq_cmp,
            }
        })
        .collect();
    categories.sort_by(|a, b| {
        b.differential
            .partial_cmp(&a.differential)
            .unwrap()
            .then_with(|| a.category.cmp(&b.category))
    });
    Ok(LexiconDifferential {
        threshold: cfg.threshold,
        high_set_size: high.len(),
        comparison_size: k,
        categories,
    })
}

// ---------------------------------------------------------------------------
// Example surfacing
// ---------------------------------------------------------------------------

/// A strongly gendered reply under a weakly gendered post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacedExample {
    pub post_id: String,
    pub comment_id: String,
    pub post_score: f64,
    pub comment_score: f64,
}

/// Selection rule for likely-unsolicited bias: the comment's own prediction
/// score exceeds `comment_threshold` while its parent post's propensity
/// score stays below `post_threshold`. Raising the comment threshold never
/// grows the result; raising the post threshold never shrinks it.
pub fn surface_examples(
    post_scores: &HashMap<String, f64>,
    comment_predictions: &[(Prediction, String)],
    post_threshold: f64,
    comment_threshold: f64,
) -> Result<Vec<SurfacedExample>> {
    let mut out = Vec::new();
    for (pred, post_id) in comment_predictions {
        let post_score = *post_scores.get(post_id).ok_or_else(|| {
            Error::Analysis(format!("no propensity score for post {post_id}"))
        })?;
        if pred.score > comment_threshold && post_score < post_threshold {
            out.push(SurfacedExample {
                post_id: post_id.clone(),
                comment_id: pred.comment_id.clone(),
                post_score,
                comment_score: pred.score,
            });
        }
    }
    out.sort_by(|a, b| {
        b.comment_score
            .partial_cmp(&a.comment_score)
            .unwrap()
            .then_with(|| a.comment_id.cmp(&b.comment_id))
    });
    Ok(out)
}
