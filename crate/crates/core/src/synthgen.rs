//! Synthetic corpora with planted, fully-documented signals.
//!
//! Every generated corpus comes with a ground-truth manifest that records
//! which tokens are author-specific confounds, which are genuine gender
//! signals, which are overt terms, and exactly what was injected into each
//! comment. That manifest is the oracle the confound-demotion claims are
//! tested against: a planted confound must lose influence under demotion, a
//! planted bias token must not.
//!
//! Generation is pure and seeded; each author draws from a derived seed.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RawRow;
use crate::error::{Error, Result};

/// Controls for one synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub authors_per_gender: usize,
    pub posts_per_author: usize,
    pub comments_per_author: usize,
    /// Background vocabulary size; background tokens are drawn Zipfian.
    pub base_vocab: usize,
    /// Inclusive background-token length range for posts.
    pub post_len: (usize, usize),
    /// Inclusive background-token length range for comments.
    pub comment_len: (usize, usize),
    /// Probability a comment carries its addressee's author-specific
    /// confound token.
    pub confound_prob: f64,
    /// How many copies of the confound token an injection plants. More
    /// copies make the comment identify its author more sharply.
    pub confound_repeats: usize,
    /// Probability an F-addressed comment carries the F bias token.
    pub bias_prob_f: f64,
    /// Probability an M-addressed comment carries the M bias token.
    pub bias_prob_m: f64,
    /// Observed-confound strength: probability a post carries its author's
    /// gender topic token.
    pub topic_strength: f64,
    /// Probability a comment mentions the addressee's first name.
    pub name_prob: f64,
    /// Probability a comment carries an overt gendered term (substituted
    /// away during preprocessing).
    pub overt_prob: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            authors_per_gender: 12,
            posts_per_author: 6,
            comments_per_author: 18,
            base_vocab: 150,
            post_len: (6, 12),
            comment_len: (5, 8),
            confound_prob: 0.85,
            confound_repeats: 1,
            bias_prob_f: 0.5,
            bias_prob_m: 0.05,
            topic_strength: 0.6,
            name_prob: 0.05,
            overt_prob: 0.1,
            seed: 17,
        }
    }
}

pub const BIAS_TOKEN_F: &str = "biasf";
pub const BIAS_TOKEN_M: &str = "biasm";
pub const TOPIC_TOKEN_F: &str = "topicf";
pub const TOPIC_TOKEN_M: &str = "topicm";
pub const OVERT_TOKEN_F: &str = "queen";
pub const OVERT_TOKEN_M: &str = "king";

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.authors_per_gender == 0 {
            violations.push("authors_per_gender must be >= 1".to_string());
        }
        if self.confound_repeats == 0 {
            violations.push("confound_repeats must be >= 1".to_string());
        }
        if self.posts_per_author == 0 {
            violations.push("posts_per_author must be >= 1".to_string());
        }
        if self.comments_per_author == 0 {
            violations.push("comments_per_author must be >= 1".to_string());
        }
        if self.base_vocab == 0 {
            violations.push("base_vocab must be >= 1".to_string());
        }
        for (name, p) in [
            ("confound_prob", self.confound_prob),
            ("bias_prob_f", self.bias_prob_f),
            ("bias_prob_m", self.bias_prob_m),
            ("topic_strength", self.topic_strength),
            ("name_prob", self.name_prob),
            ("overt_prob", self.overt_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                violations.push(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, (lo, hi)) in [("post_len", self.post_len), ("comment_len", self.comment_len)] {
            if lo == 0 || hi < lo {
                violations.push(format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(violations))
        }
    }

    /// The author-specific confound token for one author.
    pub fn confound_token(author_id: &str) -> String {
        format!("conf{author_id}")
    }
}

/// What was planted where; reconstructs every injection decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    /// author id -> that author's confound token.
    pub confound_tokens: BTreeMap<String, String>,
    pub bias_token_f: String,
    pub bias_token_m: String,
    pub topic_token_f: String,
    pub topic_token_m: String,
    pub overt_token_f: String,
    pub overt_token_m: String,
    /// comment id (as assigned by ingest: `c<row>`) -> injected tokens.
    pub injections: BTreeMap<String, Vec<String>>,
    /// post id -> injected topic tokens.
    pub post_injections: BTreeMap<String, Vec<String>>,
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize) -> Zipf {
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            acc += 1.0 / (i + 1) as f64;
            cumulative.push(acc);
        }
        Zipf { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c < u)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a corpus in the canonical ingest row format plus its
/// ground-truth manifest. Byte-identical for a fixed spec.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<RawRow>, GroundTruth)> {
    spec.validate()?;
    let zipf = Zipf::new(spec.base_vocab);

    let mut confound_tokens = BTreeMap::new();
    let mut injections: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut post_injections: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut rows: Vec<RawRow> = Vec::new();

    let authors: Vec<(String, char)> = (0..spec.authors_per_gender)
        .map(|i| (format!("f{i}"), 'F'))
        .chain((0..spec.authors_per_gender).map(|i| (format!("m{i}"), 'M')))
        .collect();

    for (author_index, (author_id, gender)) in authors.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ splitmix(author_index as u64));
        let confound = SynthSpec::confound_token(author_id);
        confound_tokens.insert(author_id.clone(), confound.clone());
        let name = format!("First{author_id} Last{author_id}");
        let first_name_token = format!("first{author_id}");
        let (topic, bias, bias_prob, overt) = if *gender == 'F' {
            (TOPIC_TOKEN_F, BIAS_TOKEN_F, spec.bias_prob_f, OVERT_TOKEN_F)
        } else {
            (TOPIC_TOKEN_M, BIAS_TOKEN_M, spec.bias_prob_m, OVERT_TOKEN_M)
        };

        // Posts first: the observed confound lives in post text.
        let mut posts: Vec<(String, String)> = Vec::new();
        for j in 0..spec.posts_per_author {
            let post_id = format!("p{author_id}x{j}");
            let len = rng.gen_range(spec.post_len.0..=spec.post_len.1);
            let mut tokens: Vec<String> =
                (0..len).map(|_| format!("word{}", zipf.sample(&mut rng))).collect();
            let mut planted = Vec::new();
            if rng.gen_bool(spec.topic_strength) {
                let pos = rng.gen_range(0..=tokens.len());
                tokens.insert(pos, topic.to_string());
                planted.push(topic.to_string());
            }
            post_injections.insert(post_id.clone(), planted);
            posts.push((post_id, tokens.join(" ")));
        }

        for j in 0..spec.comments_per_author {
            let (post_id, post_text) = &posts[j % posts.len()];
            let len = rng.gen_range(spec.comment_len.0..=spec.comment_len.1);
            let mut tokens: Vec<String> =
                (0..len).map(|_| format!("word{}", zipf.sample(&mut rng))).collect();
            let mut planted = Vec::new();
            let inject = |tokens: &mut Vec<String>,
                              planted: &mut Vec<String>,
                              rng: &mut ChaCha8Rng,
                              tok: &str,
                              p: f64| {
                if p > 0.0 && rng.gen_bool(p) {
                    let pos = rng.gen_range(0..=tokens.len());
                    tokens.insert(pos, tok.to_string());
                    planted.push(tok.to_string());
                }
            };
            if spec.confound_prob > 0.0 && rng.gen_bool(spec.confound_prob) {
                for _ in 0..spec.confound_repeats {
                    let pos = rng.gen_range(0..=tokens.len());
                    tokens.insert(pos, confound.clone());
                    planted.push(confound.clone());
                }
            }
            inject(&mut tokens, &mut planted, &mut rng, bias, bias_prob);
            inject(&mut tokens, &mut planted, &mut rng, overt, spec.overt_prob);
            inject(&mut tokens, &mut planted, &mut rng, &first_name_token, spec.name_prob);

            // ingest assigns c<row>, rows are 1-based
            let row_no = rows.len() + 1;
            injections.insert(format!("c{row_no}"), planted);
            rows.push(RawRow {
                author_id: author_id.clone(),
                gender: gender.to_string(),
                author_name: name.clone(),
                post_id: post_id.clone(),
                post_text: post_text.clone(),
                comment_text: tokens.join(" "),
            });
        }
    }

    let truth = GroundTruth {
        spec: *spec,
        confound_tokens,
        bias_token_f: BIAS_TOKEN_F.to_string(),
        bias_token_m: BIAS_TOKEN_M.to_string(),
        topic_token_f: TOPIC_TOKEN_F.to_string(),
        topic_token_m: TOPIC_TOKEN_M.to_string(),
        overt_token_f: OVERT_TOKEN_F.to_string(),
        overt_token_m: OVERT_TOKEN_M.to_string(),
        injections,
        post_injections,
    };
    Ok((rows, truth))
}

/// Serializes rows in the tab-separated ingest format.
pub fn rows_to_tsv(rows: &[RawRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.to_line('\t'));
        out.push('\n');
    }
    out
}
