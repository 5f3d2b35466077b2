//! Corpus ingestion, normalization, and author-disjoint splits.
//!
//! The data model mirrors the comment-reply setting: an [`Author`] writes
//! [`Post`]s, each post attracts [`Comment`]s, and the author's gender is the
//! label the downstream classifier predicts from comment text. Ingestion
//! lowercases and tokenizes everything; overt gendered terms and addressee
//! names are neutralized by [`apply_substitutions`] before any statistics or
//! training see the text.
//!
//! Ingestion, tokenization, and substitution are pure per-record functions;
//! split assignment is sequential and seeded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder token substituted for addressee name tokens.
pub const NAME_PLACEHOLDER: &str = "⟨name⟩";

/// Default minimum comment length kept by [`filter_short`].
pub const DEFAULT_MIN_TOKENS: usize = 4;

const DEFAULT_SUBSTITUTIONS: &str = include_str!("../data/substitutions.tsv");

/// Binary addressee gender label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    /// Parses an input label. `W` is accepted as an alias for `F` (the raw
    /// data labels women with `W`); anything else is rejected.
    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim() {
            "M" | "m" => Some(Gender::M),
            "F" | "f" | "W" | "w" => Some(Gender::F),
            _ => None,
        }
    }

    /// Class index used by models: M = 0, F = 1 (F is the positive class).
    pub fn class_index(self) -> usize {
        match self {
            Gender::M => 0,
            Gender::F => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Gender> {
        match idx {
            0 => Some(Gender::M),
            1 => Some(Gender::F),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::M => write!(f, "M"),
            Gender::F => write!(f, "F"),
        }
    }
}

/// The addressee: the person whose posts attract comments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub author_id: String,
    pub gender: Gender,
    /// Lowercased name tokens (first + last), possibly empty.
    pub name_tokens: Vec<String>,
}

/// A post written by an author; its text is the observed confounding variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub author_id: String,
    pub tokens: Vec<String>,
}

/// A comment replying to a post. `subst_tokens` is the substituted view used
/// by all statistics and models; substitution is 1:1 on tokens so the two
/// sequences always have equal length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub post_id: String,
    pub raw_tokens: Vec<String>,
    pub subst_tokens: Vec<String>,
}

/// An ingested corpus with resolved author/post references.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub authors: Vec<Author>,
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    author_index: HashMap<String, usize>,
    post_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_parts(
        authors: Vec<Author>,
        posts: Vec<Post>,
        comments: Vec<Comment>,
    ) -> Result<Corpus> {
        let mut author_index = HashMap::new();
        for (i, a) in authors.iter().enumerate() {
            if author_index.insert(a.author_id.clone(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate author id {:?}", a.author_id)));
            }
        }
        let mut post_index = HashMap::new();
        for (i, p) in posts.iter().enumerate() {
            if post_index.insert(p.post_id.clone(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate post id {:?}", p.post_id)));
            }
            if p.tokens.is_empty() {
                return Err(Error::Corpus(format!("post {:?} has no tokens", p.post_id)));
            }
            if !author_index.contains_key(&p.author_id) {
                return Err(Error::Corpus(format!(
                    "post {:?} references unknown author {:?}",
                    p.post_id, p.author_id
                )));
            }
        }
        for c in &comments {
            if !post_index.contains_key(&c.post_id) {
                return Err(Error::Corpus(format!(
                    "comment {:?} references unknown post {:?}",
                    c.comment_id, c.post_id
                )));
            }
            if c.raw_tokens.len() != c.subst_tokens.len() {
                return Err(Error::Corpus(format!(
                    "comment {:?}: substituted token count differs from raw",
                    c.comment_id
                )));
            }
        }
        Ok(Corpus {
            authors,
            posts,
            comments,
            author_index,
            post_index,
        })
    }

    pub fn author(&self, author_id: &str) -> Option<&Author> {
        self.author_index.get(author_id).map(|&i| &self.authors[i])
    }

    pub fn post(&self, post_id: &str) -> Option<&Post> {
        self.post_index.get(post_id).map(|&i| &self.posts[i])
    }

    pub fn author_of_post(&self, post: &Post) -> &Author {
        self.author(&post.author_id).expect("post author resolves")
    }

    pub fn author_of_comment(&self, comment: &Comment) -> &Author {
        let post = self.post(&comment.post_id).expect("comment post resolves");
        self.author_of_post(post)
    }

    /// Gender of the addressee of a comment.
    pub fn comment_gender(&self, comment: &Comment) -> Gender {
        self.author_of_comment(comment).gender
    }

    /// Restricts the corpus to the given authors, carrying their posts and
    /// comments along.
    pub fn subset(&self, author_ids: &BTreeSet<String>) -> Corpus {
        let authors: Vec<Author> = self
            .authors
            .iter()
            .filter(|a| author_ids.contains(&a.author_id))
            .cloned()
            .collect();
        let posts: Vec<Post> = self
            .posts
            .iter()
            .filter(|p| author_ids.contains(&p.author_id))
            .cloned()
            .collect();
        let post_ids: BTreeSet<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();
        let comments: Vec<Comment> = self
            .comments
            .iter()
            .filter(|c| post_ids.contains(c.post_id.as_str()))
            .cloned()
            .collect();
        Corpus::from_parts(authors, posts, comments).expect("subset of a valid corpus is valid")
    }

    /// Returns a copy with `subst_tokens` recomputed from `raw_tokens` using
    /// the lexicon and each comment's addressee name tokens.
    pub fn with_substitutions(&self, lexicon: &SubstitutionLexicon) -> Corpus {
        let mut out = self.clone();
        for c in &mut out.comments {
            let author = {
                let post_idx = self.post_index[&c.post_id];
                let author_idx = self.author_index[&self.posts[post_idx].author_id];
                &self.authors[author_idx]
            };
            c.subst_tokens = apply_substitutions(&c.raw_tokens, lexicon, &author.name_tokens);
        }
        out
    }

    /// Returns a copy keeping only comments with at least `min_tokens`
    /// substituted tokens.
    pub fn with_min_comment_tokens(&self, min_tokens: usize) -> Corpus {
        let mut out = self.clone();
        out.comments = filter_short(std::mem::take(&mut out.comments), min_tokens);
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let io_err = |e: std::io::Error| Error::io("<jsonl>", e);
        for a in &self.authors {
            serde_json::to_writer(&mut w, &Record::Author(a.clone()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        for p in &self.posts {
            serde_json::to_writer(&mut w, &Record::Post(p.clone()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        for c in &self.comments {
            serde_json::to_writer(&mut w, &Record::Comment(c.clone()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Corpus> {
        let mut authors = Vec::new();
        let mut posts = Vec::new();
        let mut comments = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::ArtifactFormat {
                path: "<jsonl>".into(),
                reason: format!("line {}: {}", i + 1, e),
            })?;
            match rec {
                Record::Author(a) => authors.push(a),
                Record::Post(p) => posts.push(p),
                Record::Comment(c) => comments.push(c),
            }
        }
        Corpus::from_parts(authors, posts, comments)
    }

    pub fn write_jsonl_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    pub fn read_jsonl_path(path: &Path) -> Result<Corpus> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Corpus::read_jsonl(std::io::BufReader::new(f))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Author(Author),
    Post(Post),
    Comment(Comment),
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

// Clitic suffixes split off after an apostrophe: warren's -> warren 's,
// don't -> don 't. Words whose apostrophe suffix is not in this set stay
// whole (ma'am, y'all, o'clock).
const CLITICS: &[&str] = &["s", "t", "re", "ve", "ll", "d", "m", "em"];

/// Lowercases and tokenizes text.
///
/// Rules, frozen by the fixture tests below: text is lowercased, curly
/// apostrophes are normalized to `'`, whitespace separates tokens, and every
/// non-alphanumeric character other than an apostrophe becomes its own
/// token. An apostrophe splits off a trailing clitic (`'s`, `'t`, `'re`,
/// `'ve`, `'ll`, `'d`, `'m`, `'em`); otherwise it stays inside the word.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase().replace('\u{2019}', "'");
    let mut out = Vec::new();
    let mut run = String::new();
    for chunk in lower.split_whitespace() {
        for ch in chunk.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                run.push(ch);
            } else {
                if !run.is_empty() {
                    emit_word(&std::mem::take(&mut run), &mut out);
                }
                out.push(ch.to_string());
            }
        }
        if !run.is_empty() {
            emit_word(&std::mem::take(&mut run), &mut out);
        }
    }
    out
}

fn emit_word(word: &str, out: &mut Vec<String>) {
    let mut w = word;
    // Leading apostrophes are their own tokens unless the remainder is a
    // bare clitic ('em).
    while let Some(rest) = w.strip_prefix('\'') {
        if CLITICS.contains(&rest) {
            out.push(w.to_string());
            return;
        }
        out.push("'".to_string());
        w = rest;
    }
    let bytes = w.as_bytes();
    let mut trailing = 0;
    while trailing < bytes.len() && bytes[bytes.len() - 1 - trailing] == b'\'' {
        trailing += 1;
    }
    let core = &w[..w.len() - trailing];
    if !core.is_empty() {
        match core.rfind('\'') {
            Some(pos) if pos > 0 && CLITICS.contains(&&core[pos + 1..]) => {
                out.push(core[..pos].to_string());
                out.push(core[pos..].to_string());
            }
            _ => out.push(core.to_string()),
        }
    }
    for _ in 0..trailing {
        out.push("'".to_string());
    }
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

/// Maps overt gendered terms to neutral placeholder tokens.
///
/// Both members of a gendered pair map to the same placeholder, and no
/// placeholder may itself appear as a term, which makes substitution
/// idempotent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubstitutionLexicon {
    map: BTreeMap<String, String>,
}

impl SubstitutionLexicon {
    pub fn empty() -> SubstitutionLexicon {
        SubstitutionLexicon::default()
    }

    /// The curated default list shipped with the crate (60+ gendered pairs).
    pub fn default_lexicon() -> SubstitutionLexicon {
        SubstitutionLexicon::parse(DEFAULT_SUBSTITUTIONS)
            .expect("bundled substitution lexicon parses")
    }

    /// Parses a two-column (term, placeholder) tab-separated file. Lines
    /// starting with `#` and blank lines are skipped.
    pub fn parse(text: &str) -> Result<SubstitutionLexicon> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let term = parts.next().unwrap_or("").trim();
            let placeholder = parts.next().unwrap_or("").trim();
            if term.is_empty() || placeholder.is_empty() {
                return Err(Error::Config(format!(
                    "substitution lexicon line {}: expected `term<TAB>placeholder`",
                    i + 1
                )));
            }
            map.insert(term.to_string(), placeholder.to_string());
        }
        let placeholders: BTreeSet<&String> = map.values().collect();
        for term in map.keys() {
            if placeholders.contains(term) || term == NAME_PLACEHOLDER {
                return Err(Error::Config(format!(
                    "substitution lexicon term {:?} is also a placeholder; substitution would not be idempotent",
                    term
                )));
            }
        }
        Ok(SubstitutionLexicon { map })
    }

    pub fn from_path(path: &Path) -> Result<SubstitutionLexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SubstitutionLexicon::parse(&text)
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.map.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Replaces overt gendered terms with their placeholders and any token equal
/// to one of the addressee's name tokens with [`NAME_PLACEHOLDER`]. The
/// lexicon wins when a name token collides with a lexicon term. Total and
/// 1:1 on tokens.
pub fn apply_substitutions(
    tokens: &[String],
    lexicon: &SubstitutionLexicon,
    name_tokens: &[String],
) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if let Some(p) = lexicon.get(t) {
                p.to_string()
            } else if name_tokens.iter().any(|n| n == t) {
                NAME_PLACEHOLDER.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}

/// Keeps only comments with at least `min_tokens` substituted tokens.
pub fn filter_short(comments: Vec<Comment>, min_tokens: usize) -> Vec<Comment> {
    comments
        .into_iter()
        .filter(|c| c.subst_tokens.len() >= min_tokens)
        .collect()
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// One raw input row: a single comment plus its addressee and post context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub author_id: String,
    pub gender: String,
    pub author_name: String,
    pub post_id: String,
    pub post_text: String,
    pub comment_text: String,
}

impl RawRow {
    /// Serializes the row in the delimiter-separated ingest format.
    pub fn to_line(&self, delim: char) -> String {
        [
            &self.author_id,
            &self.gender,
            &self.author_name,
            &self.post_id,
            &self.post_text,
            &self.comment_text,
        ]
        .iter()
        .map(|s| s.replace(delim, " "))
        .collect::<Vec<_>>()
        .join(&delim.to_string())
    }
}

/// Parses one delimiter-separated line into a [`RawRow`]. `row` is 1-based
/// and reported in errors.
pub fn parse_row(line: &str, delim: char, row: usize) -> Result<RawRow> {
    let fields: Vec<&str> = line.split(delim).collect();
    if fields.len() != 6 {
        return Err(Error::MalformedRow {
            row,
            reason: format!("expected 6 columns, found {}", fields.len()),
        });
    }
    Ok(RawRow {
        author_id: fields[0].trim().to_string(),
        gender: fields[1].trim().to_string(),
        author_name: fields[2].trim().to_string(),
        post_id: fields[3].trim().to_string(),
        post_text: fields[4].to_string(),
        comment_text: fields[5].to_string(),
    })
}

/// Counts from one ingest run. Detailed rejection records are capped; the
/// per-reason counters are complete.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_rejected: usize,
    pub reasons: BTreeMap<String, u64>,
    pub sample_rejections: Vec<Rejection>,
    pub n_authors: usize,
    pub n_posts: usize,
    pub n_comments: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

const MAX_SAMPLE_REJECTIONS: usize = 100;

impl IngestReport {
    fn reject(&mut self, row: usize, reason: String) {
        self.rows_rejected += 1;
        *self.reasons.entry(reason.clone()).or_insert(0) += 1;
        if self.sample_rejections.len() < MAX_SAMPLE_REJECTIONS {
            self.sample_rejections.push(Rejection { row, reason });
        }
    }
}

/// Builds a corpus from raw rows. Rows that fail to parse or violate the
/// data contract (unknown gender label, conflicting author gender or post
/// text, empty post) are rejected and counted; everything else is
/// deduplicated, lowercased, and tokenized. `subst_tokens` starts as a copy
/// of `raw_tokens`; the preprocess stage recomputes it.
pub fn ingest<I>(rows: I) -> (Corpus, IngestReport)
where
    I: IntoIterator<Item = (usize, Result<RawRow>)>,
{
    let mut report = IngestReport::default();
    let mut authors: Vec<Author> = Vec::new();
    let mut author_index: HashMap<String, usize> = HashMap::new();
    let mut posts: Vec<Post> = Vec::new();
    let mut post_index: HashMap<String, usize> = HashMap::new();
    let mut comments: Vec<Comment> = Vec::new();

    for (row_no, row) in rows {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.reject(row_no, e.to_string());
                continue;
            }
        };
        let gender = match Gender::parse(&row.gender) {
            Some(g) => g,
            None => {
                report.reject(row_no, format!("unknown gender label {:?}", row.gender));
                continue;
            }
        };
        if row.author_id.is_empty() || row.post_id.is_empty() {
            report.reject(row_no, "empty author or post id".to_string());
            continue;
        }
        let post_tokens = tokenize(&row.post_text);
        if post_tokens.is_empty() {
            report.reject(row_no, "empty post text".to_string());
            continue;
        }

        if let Some(&ai) = author_index.get(&row.author_id) {
            if authors[ai].gender != gender {
                report.reject(
                    row_no,
                    format!("author {:?} gender conflicts with earlier row", row.author_id),
                );
                continue;
            }
        }
        if let Some(&pi) = post_index.get(&row.post_id) {
            if posts[pi].tokens != post_tokens {
                report.reject(
                    row_no,
                    format!("post {:?} text conflicts with earlier row", row.post_id),
                );
                continue;
            }
            if posts[pi].author_id != row.author_id {
                report.reject(
                    row_no,
                    format!("post {:?} author conflicts with earlier row", row.post_id),
                );
                continue;
            }
        }

        let author_idx = *author_index.entry(row.author_id.clone()).or_insert_with(|| {
            authors.push(Author {
                author_id: row.author_id.clone(),
                gender,
                name_tokens: tokenize(&row.author_name),
            });
            authors.len() - 1
        });
        debug_assert_eq!(authors[author_idx].gender, gender);

        post_index.entry(row.post_id.clone()).or_insert_with(|| {
            posts.push(Post {
                post_id: row.post_id.clone(),
                author_id: row.author_id.clone(),
                tokens: post_tokens.clone(),
            });
            posts.len() - 1
        });

        let raw_tokens = tokenize(&row.comment_text);
        comments.push(Comment {
            comment_id: format!("c{row_no}"),
            post_id: row.post_id.clone(),
            raw_tokens: raw_tokens.clone(),
            subst_tokens: raw_tokens,
        });
        report.rows_kept += 1;
    }

    report.n_authors = authors.len();
    report.n_posts = posts.len();
    report.n_comments = comments.len();
    let corpus = Corpus::from_parts(authors, posts, comments)
        .expect("ingest maintains referential integrity");
    (corpus, report)
}

/// Reads delimiter-separated rows (default delimiter: tab) and ingests them.
pub fn ingest_reader<R: BufRead>(reader: R, delim: char) -> Result<(Corpus, IngestReport)> {
    let mut rows: Vec<(usize, Result<RawRow>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<ingest>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push((i + 1, parse_row(&line, delim, i + 1)));
    }
    Ok(ingest(rows))
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Author-level split assignment; the sets are pairwise disjoint.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Author-disjoint train/dev/test corpora.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub assignment: SplitAssignment,
}

/// Partitions authors into train/dev/test so that the comment-count ratios
/// approximate `ratios`. All posts and comments follow their author, which
/// enforces zero addressee overlap between subsets. Deterministic for a
/// fixed seed.
///
/// Authors are visited in seeded shuffled order and assigned greedily to the
/// split with the largest remaining comment deficit; a split with a nonzero
/// ratio that is still empty takes priority, so small corpora always
/// populate every requested split.
pub fn split_by_author(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<CorpusSplit> {
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Config("split ratios must be non-negative".to_string()));
    }
    if corpus.authors.len() < 3 {
        return Err(Error::Corpus(format!(
            "need at least 3 authors to split, have {}",
            corpus.authors.len()
        )));
    }

    let mut comments_per_author: HashMap<&str, f64> = HashMap::new();
    for c in &corpus.comments {
        let author_id = &corpus.post(&c.post_id).expect("comment post resolves").author_id;
        *comments_per_author.entry(author_id.as_str()).or_insert(0.0) += 1.0;
    }
    let total_comments: f64 = comments_per_author.values().sum();

    let mut order: Vec<usize> = (0..corpus.authors.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut assigned_comments = [0.0f64; 3];
    let mut assigned_authors = [0usize; 3];
    let mut buckets: [Vec<String>; 3] = Default::default();
    for &ai in &order {
        let author = &corpus.authors[ai];
        let weight = comments_per_author
            .get(author.author_id.as_str())
            .copied()
            .unwrap_or(0.0);
        let deficit =
            |s: usize| ratios[s] * total_comments.max(1.0) - assigned_comments[s];
        let empty_nonzero: Vec<usize> = (0..3)
            .filter(|&s| ratios[s] > 0.0 && assigned_authors[s] == 0)
            .collect();
        let candidates: Vec<usize> = if empty_nonzero.is_empty() {
            (0..3).filter(|&s| ratios[s] > 0.0).collect()
        } else {
            empty_nonzero
        };
        let &target = candidates
            .iter()
            .max_by(|&&a, &&b| deficit(a).partial_cmp(&deficit(b)).unwrap())
            .expect("at least one split has nonzero ratio");
        assigned_comments[target] += weight;
        assigned_authors[target] += 1;
        buckets[target].push(author.author_id.clone());
    }

    for b in &mut buckets {
        b.sort();
    }
    let [train_ids, dev_ids, test_ids] = buckets;
    let assignment = SplitAssignment {
        train: train_ids,
        dev: dev_ids,
        test: test_ids,
    };
    Ok(split_from_assignment(corpus, assignment))
}

/// Materializes sub-corpora from a stored assignment.
pub fn split_from_assignment(corpus: &Corpus, assignment: SplitAssignment) -> CorpusSplit {
    let set = |ids: &[String]| ids.iter().cloned().collect::<BTreeSet<String>>();
    CorpusSplit {
        train: corpus.subset(&set(&assignment.train)),
        dev: corpus.subset(&set(&assignment.dev)),
        test: corpus.subset(&set(&assignment.test)),
        assignment,
    }
}

impl SplitAssignment {
    /// The pairwise-disjointness invariant, checkable on every run.
    pub fn is_disjoint(&self) -> bool {
        let train: BTreeSet<&String> = self.train.iter().collect();
        let dev: BTreeSet<&String> = self.dev.iter().collect();
        let test: BTreeSet<&String> = self.test.iter().collect();
        train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test)
    }
}
