//! Word–label association scores and per-comment confound vectors.
//!
//! [`compute_log_odds`] implements prior-smoothed log-odds with an
//! informative Dirichlet prior, one-vs-rest per label: the prior count for a
//! word is proportional to its overall corpus frequency, which keeps scores
//! finite for label-exclusive words. [`ConfoundModel`] turns those scores
//! into a multinomial over training-set authors for each comment; that
//! distribution is the demotion target the adversary trains against.
//!
//! Count aggregation is a commutative reduction and tables are immutable
//! after construction.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Gender;
use crate::error::{Error, Result};

/// Total prior mass for the Dirichlet prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorAlpha {
    /// 0.01 x total token count, so each word's prior count is 1% of its
    /// observed count.
    Auto,
    Fixed(f64),
}

impl Default for PriorAlpha {
    fn default() -> Self {
        PriorAlpha::Auto
    }
}

impl PriorAlpha {
    fn resolve(self, total_tokens: f64) -> Result<f64> {
        let a0 = match self {
            PriorAlpha::Auto => 0.01 * total_tokens,
            PriorAlpha::Fixed(v) => v,
        };
        if !(a0 > 0.0) {
            return Err(Error::Config(format!("prior alpha must be positive, got {a0}")));
        }
        Ok(a0)
    }
}

/// Word-by-label log-odds scores. Positive means associated with the label
/// (versus the union of all other labels).
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsTable {
    pub labels: Vec<String>,
    pub vocab: Vec<String>,
    pub prior_alpha: f64,
    word_index: HashMap<String, usize>,
    /// scores[word][label]
    scores: Vec<Vec<f64>>,
}

impl LogOddsTable {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn score(&self, word: &str, label_idx: usize) -> Option<f64> {
        self.word_index(word).map(|w| self.scores[w][label_idx])
    }

    pub fn scores_for_label(&self, label_idx: usize) -> impl Iterator<Item = (&str, f64)> {
        self.vocab
            .iter()
            .enumerate()
            .map(move |(w, word)| (word.as_str(), self.scores[w][label_idx]))
    }

    /// Three-column text serialization: word, label, score.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let io_err = |e: std::io::Error| Error::io("<log-odds>", e);
        for (wi, word) in self.vocab.iter().enumerate() {
            for (li, label) in self.labels.iter().enumerate() {
                writeln!(w, "{word}\t{label}\t{}", self.scores[wi][li]).map_err(io_err)?;
            }
        }
        Ok(())
    }
}

/// Aggregates token counts for one label's documents.
pub fn count_tokens<'a, I>(docs: I) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts = BTreeMap::new();
    for doc in docs {
        for tok in doc {
            *counts.entry(tok.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Computes prior-smoothed log-odds scores for every (word, label) pair,
/// comparing each label's subcorpus against the union of all others.
///
/// With exactly two labels the scores are antisymmetric:
/// `lo(w, a) == -lo(w, b)` for every word.
pub fn compute_log_odds(
    grouped_counts: &[(String, BTreeMap<String, u64>)],
    prior: PriorAlpha,
) -> Result<LogOddsTable> {
    if grouped_counts.len() < 2 {
        return Err(Error::Stats(format!(
            "log-odds needs at least 2 labels, got {}",
            grouped_counts.len()
        )));
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    let mut label_totals = Vec::with_capacity(grouped_counts.len());
    for (label, counts) in grouped_counts {
        let n: u64 = counts.values().sum();
        if n == 0 {
            return Err(Error::Stats(format!("label {label:?} has no tokens")));
        }
        label_totals.push(n as f64);
        for (w, &c) in counts {
            *totals.entry(w.as_str()).or_insert(0) += c;
        }
    }
    if totals.is_empty() {
        return Err(Error::Stats("empty vocabulary".to_string()));
    }
    if totals.len() < 2 {
        return Err(Error::Stats(
            "log-odds is degenerate with a single-word vocabulary".to_string(),
        ));
    }
    let grand_total: f64 = label_totals.iter().sum();
    let alpha0 = prior.resolve(grand_total)?;

    let vocab: Vec<String> = totals.keys().map(|w| w.to_string()).collect();
    let word_index: HashMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let labels: Vec<String> = grouped_counts.iter().map(|(l, _)| l.clone()).collect();

    // Per-label word counts in vocab order.
    let mut counts: Vec<Vec<f64>> = vec![vec![0.0; labels.len()]; vocab.len()];
    for (li, (_, group)) in grouped_counts.iter().enumerate() {
        for (w, &c) in group {
            counts[word_index[w]][li] = c as f64;
        }
    }

    let mut scores = vec![vec![0.0; labels.len()]; vocab.len()];
    for (wi, word) in vocab.iter().enumerate() {
        let total_w = totals[word.as_str()] as f64;
        let alpha_w = alpha0 * total_w / grand_total;
        for li in 0..labels.len() {
            let y_k = counts[wi][li];
            let n_k = label_totals[li];
            let y_rest = total_w - y_k;
            let n_rest = grand_total - n_k;
            let odds_k = (y_k + alpha_w) / (n_k + alpha0 - y_k - alpha_w);
            let odds_rest = (y_rest + alpha_w) / (n_rest + alpha0 - y_rest - alpha_w);
            scores[wi][li] = odds_k.ln() - odds_rest.ln();
        }
    }

    Ok(LogOddsTable {
        labels,
        vocab,
        prior_alpha: alpha0,
        word_index,
        scores,
    })
}

/// A word with its feminine-association score (positive = F-associated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarWord {
    pub word: String,
    pub score: f64,
}

/// Ranks post words by gender polarity: log-odds of each word in F-authored
/// posts versus M-authored posts, sorted by |score| descending. Run before
/// and after matching to see how much lexical polarity matching removes.
pub fn diagnose_gender_polarity(posts: &[(Vec<String>, Gender)]) -> Result<Vec<PolarWord>> {
    let f_docs: Vec<&[String]> = posts
        .iter()
        .filter(|(_, g)| *g == Gender::F)
        .map(|(t, _)| t.as_slice())
        .collect();
    let m_docs: Vec<&[String]> = posts
        .iter()
        .filter(|(_, g)| *g == Gender::M)
        .map(|(t, _)| t.as_slice())
        .collect();
    let grouped = vec![
        ("F".to_string(), count_tokens(f_docs)),
        ("M".to_string(), count_tokens(m_docs)),
    ];
    let table = compute_log_odds(&grouped, PriorAlpha::Auto)?;
    let f_idx = table.label_index("F").expect("F label present");
    let mut ranked: Vec<PolarWord> = table
        .scores_for_label(f_idx)
        .map(|(word, score)| PolarWord {
            word: word.to_string(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .abs()
            .partial_cmp(&a.score.abs())
            .unwrap()
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(ranked)
}

/// A valid multinomial over training-set authors for one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundVector {
    pub comment_id: String,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundConfig {
    /// Words below this training-set count are excluded from the vocabulary.
    pub min_count: u64,
    pub prior_alpha: PriorAlpha,
}

impl Default for ConfoundConfig {
    fn default() -> Self {
        ConfoundConfig {
            min_count: 5,
            prior_alpha: PriorAlpha::Auto,
        }
    }
}

/// Per-author word likelihoods and priors, fit on training comments only.
///
/// `p(k)` is the proportion of training comments addressed to author `k`;
/// `p(w|k)` is the sigmoid of the author-vs-rest log-odds of `w`, normalized
/// over the vocabulary. [`ConfoundModel::vector`] evaluates
/// `p(k) * prod_i p(w_i|k)` in log space and normalizes to a multinomial.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundModel {
    pub authors: Vec<String>,
    pub prior: Vec<f64>,
    vocab: Vec<String>,
    word_index: HashMap<String, usize>,
    /// log_pwk[word][author] = ln p(word | author)
    log_pwk: Vec<Vec<f64>>,
}

fn ln_sigmoid(x: f64) -> f64 {
    if x < 0.0 {
        x - x.exp().ln_1p()
    } else {
        -(-x).exp().ln_1p()
    }
}

impl ConfoundModel {
    pub fn from_parts(
        authors: Vec<String>,
        prior: Vec<f64>,
        vocab: Vec<String>,
        log_pwk: Vec<Vec<f64>>,
    ) -> Result<ConfoundModel> {
        if authors.len() != prior.len() || vocab.len() != log_pwk.len() {
            return Err(Error::Stats("confound model shape mismatch".to_string()));
        }
        let word_index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(ConfoundModel {
            authors,
            prior,
            vocab,
            word_index,
            log_pwk,
        })
    }

    pub fn dimension(&self) -> usize {
        self.authors.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// The multinomial over training authors for one comment. Words outside
    /// the vocabulary are skipped (a uniform likelihood contribution); a
    /// comment with no in-vocabulary words falls back to the prior exactly.
    pub fn vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut log_scores: Vec<f64> = self.prior.iter().map(|p| p.ln()).collect();
        let mut any = false;
        for tok in tokens {
            if let Some(&wi) = self.word_index.get(tok) {
                any = true;
                for (k, ls) in log_scores.iter_mut().enumerate() {
                    *ls += self.log_pwk[wi][k];
                }
            }
        }
        if !any {
            return self.prior.clone();
        }
        let max = log_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = log_scores.iter().map(|&ls| (ls - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= z;
        }
        probs
    }
}

/// Fits a [`ConfoundModel`] on training comments. The author label set is
/// the set of authors that actually appear, sorted by id; dev/test authors
/// never enter the vector.
pub fn build_confound_model(
    comments: &[(&[String], &str)],
    cfg: &ConfoundConfig,
) -> Result<ConfoundModel> {
    if comments.is_empty() {
        return Err(Error::Stats("no training comments for confound model".to_string()));
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for (tokens, _) in comments {
        for t in tokens.iter() {
            *totals.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let keep: std::collections::BTreeSet<&str> = totals
        .iter()
        .filter(|(_, &c)| c >= cfg.min_count)
        .map(|(&w, _)| w)
        .collect();
    if keep.len() < 2 {
        return Err(Error::Stats(format!(
            "confound vocabulary has {} words above min_count {}; need at least 2",
            keep.len(),
            cfg.min_count
        )));
    }

    let mut by_author: BTreeMap<&str, BTreeMap<String, u64>> = BTreeMap::new();
    let mut comment_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for (tokens, author) in comments {
        *comment_counts.entry(author).or_insert(0) += 1;
        let entry = by_author.entry(author).or_default();
        for t in tokens.iter() {
            if keep.contains(t.as_str()) {
                *entry.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }

    // An author whose comments contain no in-vocabulary words cannot enter
    // the log-odds table; drop them from the label set (the vector dimension
    // tracks authors with usable training text).
    let grouped: Vec<(String, BTreeMap<String, u64>)> = by_author
        .iter()
        .filter(|(_, counts)| !counts.is_empty())
        .map(|(author, counts)| (author.to_string(), counts.clone()))
        .collect();
    if grouped.len() < 2 {
        return Err(Error::Stats(
            "confound model needs at least 2 authors with in-vocabulary comments".to_string(),
        ));
    }
    let table = compute_log_odds(&grouped, cfg.prior_alpha)?;

    let authors: Vec<String> = table.labels.clone();
    let total_comments: f64 = authors
        .iter()
        .map(|a| comment_counts[a.as_str()] as f64)
        .sum();
    let prior: Vec<f64> = authors
        .iter()
        .map(|a| comment_counts[a.as_str()] as f64 / total_comments)
        .collect();

    // p(w|k) = sigmoid(lo(w,k)) normalized over the vocabulary, in log space.
    let vocab = table.vocab.clone();
    let mut log_pwk = vec![vec![0.0; authors.len()]; vocab.len()];
    for k in 0..authors.len() {
        let sigmas: Vec<f64> = (0..vocab.len())
            .map(|wi| ln_sigmoid(table.score(&vocab[wi], k).unwrap()))
            .collect();
        let max = sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ln_z = max + sigmas.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
        for (wi, &ls) in sigmas.iter().enumerate() {
            log_pwk[wi][k] = ls - ln_z;
        }
    }

    ConfoundModel::from_parts(authors, prior, vocab, log_pwk)
}

/// Builds one confound vector per training comment.
pub fn build_confound_vectors(
    comments: &[(&str, &[String], &str)],
    cfg: &ConfoundConfig,
) -> Result<(ConfoundModel, Vec<ConfoundVector>)> {
    let labeled: Vec<(&[String], &str)> = comments
        .iter()
        .map(|(_, tokens, author)| (*tokens, *author))
        .collect();
    let model = build_confound_model(&labeled, cfg)?;
    let vectors = comments
        .iter()
        .map(|(id, tokens, _)| ConfoundVector {
            comment_id: id.to_string(),
            probs: model.vector(tokens),
        })
        .collect();
    Ok((model, vectors))
}

#[derive(Serialize, Deserialize)]
struct ConfoundHeader {
    format: String,
    version: u32,
    authors: Vec<String>,
}

/// Writes confound vectors as a text container: one JSON header line, then
/// one `comment_id<TAB>p1 p2 ...` row per comment.
pub fn write_confound_vectors<W: Write>(
    mut w: W,
    authors: &[String],
    vectors: &[ConfoundVector],
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<confound-vectors>", e);
    let header = ConfoundHeader {
        format: "confound-vectors".to_string(),
        version: 1,
        authors: authors.to_vec(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io_err)?;
    for v in vectors {
        let probs: Vec<String> = v.probs.iter().map(|p| p.to_string()).collect();
        writeln!(w, "{}\t{}", v.comment_id, probs.join(" ")).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_confound_vectors<R: BufRead>(mut r: R) -> Result<(Vec<String>, Vec<ConfoundVector>)> {
    let path = || std::path::PathBuf::from("<confound-vectors>");
    let mut header_line = String::new();
    r.read_line(&mut header_line)
        .map_err(|e| Error::io(path(), e))?;
    let header: ConfoundHeader =
        serde_json::from_str(header_line.trim()).map_err(|e| Error::ArtifactFormat {
            path: path(),
            reason: format!("bad header: {e}"),
        })?;
    if header.format != "confound-vectors" || header.version != 1 {
        return Err(Error::ArtifactFormat {
            path: path(),
            reason: format!("unsupported container {}/{}", header.format, header.version),
        });
    }
    let mut vectors = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| Error::ArtifactFormat {
            path: path(),
            reason: format!("row {}: missing tab", i + 2),
        })?;
        let probs: std::result::Result<Vec<f64>, _> =
            rest.split_whitespace().map(str::parse::<f64>).collect();
        let probs = probs.map_err(|e| Error::ArtifactFormat {
            path: path(),
            reason: format!("row {}: {e}", i + 2),
        })?;
        if probs.len() != header.authors.len() {
            return Err(Error::ArtifactFormat {
                path: path(),
                reason: format!("row {}: expected {} entries", i + 2, header.authors.len()),
            });
        }
        vectors.push(ConfoundVector {
            comment_id: id.to_string(),
            probs,
        });
    }
    Ok((header.authors, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    #[test]
    fn identical_distributions_score_zero() {
        let grouped = vec![
            ("a".to_string(), counts(&[("x", 3), ("y", 7)])),
            ("b".to_string(), counts(&[("x", 3), ("y", 7)])),
        ];
        let table = compute_log_odds(&grouped, PriorAlpha::Auto).unwrap();
        for w in ["x", "y"] {
            for li in 0..2 {
                assert!(table.score(w, li).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_label_antisymmetry() {
        let grouped = vec![
            ("F".to_string(), counts(&[("a", 5), ("b", 1), ("c", 9)])),
            ("M".to_string(), counts(&[("a", 2), ("c", 4), ("d", 6)])),
        ];
        let table = compute_log_odds(&grouped, PriorAlpha::Auto).unwrap();
        for w in ["a", "b", "c", "d"] {
            let f = table.score(w, 0).unwrap();
            let m = table.score(w, 1).unwrap();
            assert!((f + m).abs() < 1e-9, "word {w}: {f} vs {m}");
            assert!(f.is_finite());
        }
    }

    #[test]
    fn planted_word_ranks_top() {
        let posts = vec![
            (toks(&["sexual", "assault", "bill"]), Gender::F),
            (toks(&["sexual", "harassment", "policy"]), Gender::F),
            (toks(&["spending", "bill", "policy"]), Gender::M),
            (toks(&["spending", "cuts", "vote"]), Gender::M),
        ];
        let ranked = diagnose_gender_polarity(&posts).unwrap();
        assert!(ranked[0].word == "sexual" || ranked[0].word == "spending");
        let sexual = ranked.iter().find(|p| p.word == "sexual").unwrap();
        assert!(sexual.score > 0.0, "planted F word must be F-associated");
    }

    #[test]
    fn degenerate_ranking_when_identical() {
        let posts = vec![
            (toks(&["same", "words"]), Gender::F),
            (toks(&["same", "words"]), Gender::M),
        ];
        let ranked = diagnose_gender_polarity(&posts).unwrap();
        assert!(ranked.iter().all(|p| p.score.abs() < 1e-9));
    }

    #[test]
    fn rejects_empty_and_single_label() {
        assert!(compute_log_odds(&[], PriorAlpha::Auto).is_err());
        let one = vec![("a".to_string(), counts(&[("x", 1)]))];
        assert!(compute_log_odds(&one, PriorAlpha::Auto).is_err());
    }

    #[test]
    fn table_serializes_three_columns() {
        let grouped = vec![
            ("F".to_string(), counts(&[("a", 5), ("b", 1)])),
            ("M".to_string(), counts(&[("a", 2), ("b", 4)])),
        ];
        let table = compute_log_odds(&grouped, PriorAlpha::Auto).unwrap();
        let mut buf = Vec::new();
        table.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for line in text.lines() {
            assert_eq!(line.split('\t').count(), 3, "line {line:?}");
        }
        assert!(text.contains("a\tF\t"));
        assert!(text.contains("b\tM\t"));
    }

    #[test]
    fn rejects_nonpositive_prior() {
        let grouped = vec![
            ("a".to_string(), counts(&[("x", 1), ("y", 1)])),
            ("b".to_string(), counts(&[("x", 1), ("y", 1)])),
        ];
        assert!(compute_log_odds(&grouped, PriorAlpha::Fixed(0.0)).is_err());
        assert!(compute_log_odds(&grouped, PriorAlpha::Fixed(-1.0)).is_err());
    }

    #[test]
    fn confound_prior_fallback_when_words_cancel() {
        // a1 gets two one-token comments, a2 one two-token comment: per-word
        // counts are identical, so all log-odds are 0 and word likelihoods
        // cancel, leaving the (2/3, 1/3) comment prior.
        let w1 = toks(&["w1"]);
        let w2 = toks(&["w2"]);
        let both = toks(&["w1", "w2"]);
        let comments: Vec<(&[String], &str)> = vec![
            (&w1, "a1"),
            (&w2, "a1"),
            (&both, "a2"),
        ];
        let cfg = ConfoundConfig {
            min_count: 1,
            ..Default::default()
        };
        let model = build_confound_model(&comments, &cfg).unwrap();
        let v = model.vector(&toks(&["w1"]));
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confound_forced_proportionality() {
        // Equal priors, one word with p(w|a1) = 2 * p(w|a2) -> (2/3, 1/3).
        let model = ConfoundModel::from_parts(
            vec!["a1".to_string(), "a2".to_string()],
            vec![0.5, 0.5],
            vec!["w".to_string(), "z".to_string()],
            vec![
                vec![(0.2f64).ln(), (0.1f64).ln()],
                vec![(0.8f64).ln(), (0.9f64).ln()],
            ],
        )
        .unwrap();
        let v = model.vector(&toks(&["w"]));
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confound_all_oov_falls_back_to_prior() {
        let w1 = toks(&["w1", "w1"]);
        let w2 = toks(&["w2", "w2"]);
        let comments: Vec<(&[String], &str)> = vec![(&w1, "a1"), (&w2, "a2")];
        let cfg = ConfoundConfig {
            min_count: 1,
            ..Default::default()
        };
        let model = build_confound_model(&comments, &cfg).unwrap();
        let v = model.vector(&toks(&["unseen", "tokens"]));
        assert_eq!(v, model.prior);
    }

    #[test]
    fn confound_vectors_are_multinomials_even_for_huge_comments() {
        let a = toks(&["x", "x", "y"]);
        let b = toks(&["y", "y", "x"]);
        let comments: Vec<(&[String], &str)> = vec![(&a, "a1"), (&b, "a2")];
        let cfg = ConfoundConfig {
            min_count: 1,
            ..Default::default()
        };
        let model = build_confound_model(&comments, &cfg).unwrap();
        let long: Vec<String> = (0..10_000)
            .map(|i| if i % 2 == 0 { "x" } else { "y" }.to_string())
            .collect();
        let v = model.vector(&long);
        assert!(v.iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn confound_dimension_tracks_present_authors() {
        let a = toks(&["x", "y", "x"]);
        let b = toks(&["y", "x", "y"]);
        let comments: Vec<(&[String], &str)> = vec![(&a, "a1"), (&b, "a3")];
        let cfg = ConfoundConfig {
            min_count: 1,
            ..Default::default()
        };
        let model = build_confound_model(&comments, &cfg).unwrap();
        assert_eq!(model.authors, vec!["a1".to_string(), "a3".to_string()]);
        assert_eq!(model.dimension(), 2);
    }

    #[test]
    fn confound_container_round_trip() {
        let authors = vec!["a1".to_string(), "a2".to_string()];
        let vectors = vec![
            ConfoundVector {
                comment_id: "c1".to_string(),
                probs: vec![0.25, 0.75],
            },
            ConfoundVector {
                comment_id: "c2".to_string(),
                probs: vec![0.5, 0.5],
            },
        ];
        let mut buf = Vec::new();
        write_confound_vectors(&mut buf, &authors, &vectors).unwrap();
        let (authors2, vectors2) = read_confound_vectors(&buf[..]).unwrap();
        assert_eq!(authors, authors2);
        assert_eq!(vectors, vectors2);
    }
}
