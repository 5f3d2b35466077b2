//! Propensity estimation and greedy matching.
//!
//! The propensity score of a post is the model's probability that its
//! author is F given only the post text; every comment under a post shares
//! that post's score. F posts are greedily matched without replacement to
//! the nearest-scoring M post inside a caliper, unmatched posts are
//! discarded, and comments under each matched pair are downsampled to equal
//! counts, producing a training set whose post content is balanced across
//! genders.
//!
//! Scoring is parallelizable per post; matching itself is inherently
//! sequential and runs single-threaded over a pre-sorted candidate index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Gender};
use crate::error::{Error, Result};
use crate::nn::{
    softmax, Adam, EncoderConfig, EncoderKind, FeedForward, Params, Tape, TextEncoder, Vocab,
};

/// Hyperparameters for the propensity estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityHyper {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the tanh layer between the encoder and the softmax.
    pub ff_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub vocab_min_count: u64,
    pub seed: u64,
}

impl Default for PropensityHyper {
    fn default() -> Self {
        PropensityHyper {
            encoder: EncoderKind::BiLstm,
            embed_dim: 32,
            hidden_dim: 32,
            ff_dim: 32,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            vocab_min_count: 1,
            seed: 1,
        }
    }
}

/// Encoder + two feedforward layers with a terminal softmax over {M, F}.
pub struct PropensityModel {
    pub vocab: Vocab,
    pub hyper: PropensityHyper,
    params: Params,
    encoder: TextEncoder,
    head: FeedForward,
}

impl PropensityModel {
    fn build(vocab: Vocab, hyper: PropensityHyper) -> PropensityModel {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut params = Params::new();
        let encoder = TextEncoder::new(
            &mut params,
            &mut rng,
            EncoderConfig {
                kind: hyper.encoder,
                vocab_size: vocab.len(),
                embed_dim: hyper.embed_dim,
                hidden_dim: hyper.hidden_dim,
            },
        );
        let head = FeedForward::new(
            &mut params,
            &mut rng,
            "head",
            encoder.output_dim(),
            hyper.ff_dim,
            2,
        );
        PropensityModel {
            vocab,
            hyper,
            params,
            encoder,
            head,
        }
    }

    /// P(author gender = F | post tokens). Errors on empty input.
    pub fn score_tokens(&self, tokens: &[String]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::Model("cannot score an empty post".to_string()));
        }
        let ids = self.vocab.encode(tokens);
        let mut tape = Tape::new(&self.params);
        let h = self.encoder.encode(&mut tape, &ids)?;
        let logits = self.head.logits(&mut tape, h);
        let probs = softmax(tape.value(logits));
        Ok(probs[Gender::F.class_index()])
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Held-out accuracy with the 0.5-tie-to-M rule.
    pub fn accuracy(&self, posts: &[(Vec<String>, Gender)]) -> f64 {
        if posts.is_empty() {
            return 0.0;
        }
        let correct = posts
            .iter()
            .filter(|(tokens, gender)| {
                let e = self.score_tokens(tokens).unwrap_or(0.5);
                let predicted = if e > 0.5 { Gender::F } else { Gender::M };
                predicted == *gender
            })
            .count();
        correct as f64 / posts.len() as f64
    }

    pub fn checkpoint(&self) -> crate::biasmodel::Checkpoint {
        crate::biasmodel::Checkpoint::for_propensity(self)
    }

    pub(crate) fn from_restored(vocab: Vocab, hyper: PropensityHyper, params_data: &std::collections::BTreeMap<String, crate::nn::Tensor>) -> Result<PropensityModel> {
        let mut model = PropensityModel::build(vocab, hyper);
        model.params.load_named_map(params_data)?;
        Ok(model)
    }
}

/// Trains the propensity estimator with cross-entropy on (post, gender)
/// pairs, keeping the checkpoint with the best dev accuracy (training
/// accuracy when `dev` is empty).
pub fn train_propensity_model(
    train: &[(Vec<String>, Gender)],
    dev: &[(Vec<String>, Gender)],
    hyper: PropensityHyper,
) -> Result<PropensityModel> {
    if train.is_empty() {
        return Err(Error::Model("no training posts".to_string()));
    }
    let genders: HashSet<Gender> = train.iter().map(|(_, g)| *g).collect();
    if genders.len() < 2 {
        return Err(Error::Model(
            "propensity training needs posts from both genders".to_string(),
        ));
    }
    let vocab = Vocab::build(train.iter().map(|(t, _)| t.as_slice()), hyper.vocab_min_count);
    let mut model = PropensityModel::build(vocab, hyper);
    let all_ids: Vec<crate::nn::ParamId> = model.params.ids().collect();
    let mut opt = Adam::new(hyper.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, model.params.snapshot());

    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1 + epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size.max(1)) {
            let mut tape = Tape::new(&model.params);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let (tokens, gender) = &train[i];
                if tokens.is_empty() {
                    continue;
                }
                let ids = model.vocab.encode(tokens);
                let h = model.encoder.encode(&mut tape, &ids)?;
                let logits = model.head.logits(&mut tape, h);
                let ls = tape.log_softmax(logits);
                losses.push(tape.pick_neg(ls, gender.class_index()));
            }
            if losses.is_empty() {
                continue;
            }
            let w = 1.0 / losses.len() as f64;
            let total = tape.weighted_sum(losses.into_iter().map(|l| (l, w)).collect());
            let grads = tape.backward(total);
            opt.step(&mut model.params, &grads, &all_ids);
        }
        let eval_set = if dev.is_empty() { train } else { dev };
        let acc = model.accuracy(eval_set);
        if acc >= best.0 {
            best = (acc, model.params.snapshot());
        }
    }
    model.params.restore(&best.1);
    Ok(model)
}

/// One post's propensity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityScore {
    pub post_id: String,
    pub e: f64,
}

/// Scores every post; scores land in [0, 1] and identical text gets an
/// identical score.
pub fn score_posts(
    model: &PropensityModel,
    posts: &[crate::corpus::Post],
) -> Result<Vec<PropensityScore>> {
    posts
        .iter()
        .map(|p| {
            Ok(PropensityScore {
                post_id: p.post_id.clone(),
                e: model.score_tokens(&p.tokens)?,
            })
        })
        .collect()
}

/// Caliper: the maximum |e_F - e_M| allowed inside a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Caliper {
    /// 0.2 x the standard deviation of logit(e) over all scored posts.
    Auto,
    Fixed(f64),
}

impl Default for Caliper {
    fn default() -> Self {
        Caliper::Auto
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub caliper: Caliper,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            caliper: Caliper::Auto,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub post_f: String,
    pub post_m: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub pairs: Vec<MatchedPair>,
    /// The resolved caliper value actually applied.
    pub caliper: f64,
    pub discarded_f: usize,
}

fn logit(e: f64) -> f64 {
    let e = e.clamp(1e-6, 1.0 - 1e-6);
    (e / (1.0 - e)).ln()
}

/// Resolves [`Caliper::Auto`] against the pooled score distribution.
pub fn resolve_caliper(caliper: Caliper, all_scores: &[f64]) -> Result<f64> {
    let value = match caliper {
        Caliper::Fixed(c) => c,
        Caliper::Auto => {
            if all_scores.is_empty() {
                return Err(Error::Config(
                    "cannot resolve auto caliper without scores".to_string(),
                ));
            }
            let logits: Vec<f64> = all_scores.iter().map(|&e| logit(e)).collect();
            let mean = logits.iter().sum::<f64>() / logits.len() as f64;
            let var = logits.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logits.len() as f64;
            0.2 * var.sqrt()
        }
    };
    if !(value > 0.0) {
        return Err(Error::Config(format!(
            "caliper must be positive, got {value}"
        )));
    }
    Ok(value)
}

/// Greedy nearest-neighbor matching without replacement.
///
/// F posts are the queries, processed hardest-first (descending |e - 0.5|,
/// seeded random tie order): each takes the unmatched M post with the
/// smallest |e_F - e_M| and is discarded when no candidate lies within the
/// caliper. Candidate-distance ties break on the smaller post id.
/// Deterministic for a fixed seed and input. An empty result is not an
/// error; callers decide.
pub fn greedy_match(
    f_posts: &[PropensityScore],
    m_posts: &[PropensityScore],
    config: &MatchConfig,
) -> Result<MatchOutcome> {
    let all: Vec<f64> = f_posts.iter().chain(m_posts).map(|s| s.e).collect();
    let caliper = resolve_caliper(config.caliper, &all)?;

    // Hardest-to-match first: extreme scores have the fewest candidates.
    let mut queries: Vec<&PropensityScore> = f_posts.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    queries.shuffle(&mut rng);
    queries.sort_by(|a, b| {
        let ka = (a.e - 0.5).abs();
        let kb = (b.e - 0.5).abs();
        kb.partial_cmp(&ka).unwrap()
    });

    // Candidate pool sorted by score; ties by post id for determinism.
    let mut pool: Vec<&PropensityScore> = m_posts.iter().collect();
    pool.sort_by(|a, b| {
        a.e.partial_cmp(&b.e)
            .unwrap()
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    let mut used = vec![false; pool.len()];

    let mut pairs = Vec::new();
    let mut discarded_f = 0;
    for q in queries {
        let start = pool.partition_point(|s| s.e < q.e);
        let mut left = (0..start).rev().find(|&i| !used[i]);
        let mut right = (start..pool.len()).find(|&i| !used[i]);
        // Nudge each side to its nearest unused candidate, then compare.
        if let Some(i) = left {
            debug_assert!(!used[i]);
            left = Some(i);
        }
        if let Some(i) = right {
            debug_assert!(!used[i]);
            right = Some(i);
        }
        let lv = left.map(|i| ((pool[i].e - q.e).abs(), i));
        let rv = right.map(|i| ((pool[i].e - q.e).abs(), i));
        let best = match (lv, rv) {
            (None, None) => None,
            (Some(l), None) => Some(l),
            (None, Some(r)) => Some(r),
            (Some(l), Some(r)) => {
                if l.0 < r.0 {
                    Some(l)
                } else if r.0 < l.0 {
                    Some(r)
                } else if pool[l.1].post_id <= pool[r.1].post_id {
                    Some(l)
                } else {
                    Some(r)
                }
            }
        };
        match best {
            Some((delta, idx)) if delta <= caliper => {
                used[idx] = true;
                pairs.push(MatchedPair {
                    post_f: q.post_id.clone(),
                    post_m: pool[idx].post_id.clone(),
                    delta,
                });
            }
            _ => discarded_f += 1,
        }
    }
    pairs.sort_by(|a, b| a.post_f.cmp(&b.post_f));
    Ok(MatchOutcome {
        pairs,
        caliper,
        discarded_f,
    })
}

/// The gender-balanced comment training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedTrainingSet {
    /// Pairs that survived comment balancing.
    pub pairs: Vec<MatchedPair>,
    /// Balanced comment ids, sorted; exactly 50/50 F/M by construction.
    pub comment_ids: Vec<String>,
}

/// Downsamples comments so both sides of every pair contribute equally.
/// Pairs where either side has no comments are dropped. Seeded and
/// deterministic.
pub fn balance_comments(
    pairs: &[MatchedPair],
    comments_by_post: &BTreeMap<String, Vec<String>>,
    seed: u64,
) -> MatchedTrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept_pairs = Vec::new();
    let mut comment_ids = Vec::new();
    for pair in pairs {
        let empty = Vec::new();
        let f_side = comments_by_post.get(&pair.post_f).unwrap_or(&empty);
        let m_side = comments_by_post.get(&pair.post_m).unwrap_or(&empty);
        if f_side.is_empty() || m_side.is_empty() {
            continue;
        }
        let k = f_side.len().min(m_side.len());
        for side in [f_side, m_side] {
            if side.len() == k {
                comment_ids.extend(side.iter().cloned());
            } else {
                let mut chosen: Vec<String> = side.choose_multiple(&mut rng, k).cloned().collect();
                chosen.sort();
                comment_ids.append(&mut chosen);
            }
        }
        kept_pairs.push(pair.clone());
    }
    comment_ids.sort();
    MatchedTrainingSet {
        pairs: kept_pairs,
        comment_ids,
    }
}

/// Builds the matched training set directly from a corpus.
pub fn matched_set_from_corpus(
    corpus: &Corpus,
    pairs: &[MatchedPair],
    seed: u64,
) -> MatchedTrainingSet {
    let mut by_post: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in &corpus.comments {
        by_post
            .entry(c.post_id.clone())
            .or_default()
            .push(c.comment_id.clone());
    }
    for ids in by_post.values_mut() {
        ids.sort();
    }
    balance_comments(pairs, &by_post, seed)
}

/// Post-hoc auditor: every pair within the caliper, no post reused, per-pair
/// comment counts equal, and the balanced set exactly 50/50 by gender.
pub fn audit_matched_set(
    corpus: &Corpus,
    scores: &HashMap<String, f64>,
    outcome: &MatchOutcome,
    set: &MatchedTrainingSet,
) -> Result<()> {
    let mut seen: HashSet<&str> = HashSet::new();
    for pair in &outcome.pairs {
        if !seen.insert(&pair.post_f) || !seen.insert(&pair.post_m) {
            return Err(Error::Stats(format!(
                "post reused across pairs: ({}, {})",
                pair.post_f, pair.post_m
            )));
        }
        let ef = scores
            .get(&pair.post_f)
            .ok_or_else(|| Error::Stats(format!("no score for {}", pair.post_f)))?;
        let em = scores
            .get(&pair.post_m)
            .ok_or_else(|| Error::Stats(format!("no score for {}", pair.post_m)))?;
        if (ef - em).abs() > outcome.caliper + 1e-12 {
            return Err(Error::Stats(format!(
                "pair ({}, {}) violates caliper {}",
                pair.post_f, pair.post_m, outcome.caliper
            )));
        }
    }
    let comment_by_id: HashMap<&str, &crate::corpus::Comment> = corpus
        .comments
        .iter()
        .map(|c| (c.comment_id.as_str(), c))
        .collect();
    let mut per_post: HashMap<&str, usize> = HashMap::new();
    let mut balance: i64 = 0;
    for id in &set.comment_ids {
        let comment = comment_by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Stats(format!("unknown comment id {id}")))?;
        *per_post.entry(comment.post_id.as_str()).or_insert(0) += 1;
        match corpus.comment_gender(comment) {
            Gender::F => balance += 1,
            Gender::M => balance -= 1,
        }
    }
    for pair in &set.pairs {
        let nf = per_post.get(pair.post_f.as_str()).copied().unwrap_or(0);
        let nm = per_post.get(pair.post_m.as_str()).copied().unwrap_or(0);
        if nf != nm || nf == 0 {
            return Err(Error::Stats(format!(
                "pair ({}, {}) has unbalanced comment counts {nf} vs {nm}",
                pair.post_f, pair.post_m
            )));
        }
    }
    if balance != 0 {
        return Err(Error::Stats(format!(
            "matched comment set is not gender balanced (F - M = {balance})"
        )));
    }
    Ok(())
}

// --- artifact serialization -------------------------------------------------

pub fn write_scores<W: Write>(mut w: W, scores: &[PropensityScore]) -> Result<()> {
    for s in scores {
        writeln!(w, "{}\t{}", s.post_id, s.e).map_err(|e| Error::io("<scores>", e))?;
    }
    Ok(())
}

pub fn read_scores<R: BufRead>(r: R) -> Result<Vec<PropensityScore>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<scores>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, e) = line.split_once('\t').ok_or_else(|| Error::ArtifactFormat {
            path: "<scores>".into(),
            reason: format!("row {}: missing tab", i + 1),
        })?;
        out.push(PropensityScore {
            post_id: id.to_string(),
            e: e.trim().parse().map_err(|err| Error::ArtifactFormat {
                path: "<scores>".into(),
                reason: format!("row {}: {err}", i + 1),
            })?,
        });
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(mut w: W, outcome: &MatchOutcome) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<pairs>", e);
    writeln!(w, "# caliper\t{}", outcome.caliper).map_err(io_err)?;
    writeln!(w, "# discarded_f\t{}", outcome.discarded_f).map_err(io_err)?;
    for p in &outcome.pairs {
        writeln!(w, "{}\t{}\t{}", p.post_f, p.post_m, p.delta).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(r: R) -> Result<MatchOutcome> {
    let mut caliper = None;
    let mut discarded_f = 0;
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<pairs>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# caliper\t") {
            caliper = rest.trim().parse::<f64>().ok();
            continue;
        }
        if let Some(rest) = line.strip_prefix("# discarded_f\t") {
            discarded_f = rest.trim().parse().unwrap_or(0);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::ArtifactFormat {
                path: "<pairs>".into(),
                reason: format!("row {}: expected 3 columns", i + 1),
            });
        }
        pairs.push(MatchedPair {
            post_f: fields[0].to_string(),
            post_m: fields[1].to_string(),
            delta: fields[2].parse().map_err(|e| Error::ArtifactFormat {
                path: "<pairs>".into(),
                reason: format!("row {}: {e}", i + 1),
            })?,
        });
    }
    Ok(MatchOutcome {
        pairs,
        caliper: caliper.ok_or_else(|| Error::ArtifactFormat {
            path: "<pairs>".into(),
            reason: "missing caliper header".to_string(),
        })?,
        discarded_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: &str, e: f64) -> PropensityScore {
        PropensityScore {
            post_id: id.to_string(),
            e,
        }
    }

    #[test]
    fn greedy_picks_nearest_neighbor() {
        let f = [score("f1", 0.9)];
        let m = [score("m1", 0.88), score("m2", 0.2)];
        let cfg = MatchConfig {
            caliper: Caliper::Fixed(0.05),
            seed: 1,
        };
        let out = greedy_match(&f, &m, &cfg).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.pairs[0].post_m, "m1");
        assert!((out.pairs[0].delta - 0.02).abs() < 1e-12);
        assert_eq!(out.discarded_f, 0);
    }

    #[test]
    fn caliper_discards_unmatchable() {
        let f = [score("f1", 0.9)];
        let m = [score("m1", 0.2)];
        let cfg = MatchConfig {
            caliper: Caliper::Fixed(0.05),
            seed: 1,
        };
        let out = greedy_match(&f, &m, &cfg).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.discarded_f, 1);
    }

    #[test]
    fn no_matches_is_empty_not_error() {
        let f = [score("f1", 0.99)];
        let cfg = MatchConfig {
            caliper: Caliper::Fixed(0.1),
            seed: 1,
        };
        let out = greedy_match(&f, &[], &cfg).unwrap();
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn matching_without_replacement() {
        let f = [score("f1", 0.5), score("f2", 0.5)];
        let m = [score("m1", 0.5)];
        let cfg = MatchConfig {
            caliper: Caliper::Fixed(0.1),
            seed: 1,
        };
        let out = greedy_match(&f, &m, &cfg).unwrap();
        assert_eq!(out.pairs.len(), 1);
        assert_eq!(out.discarded_f, 1);
    }

    #[test]
    fn match_deterministic_for_seed() {
        let f: Vec<PropensityScore> = (0..50)
            .map(|i| score(&format!("f{i}"), 0.3 + (i as f64) * 0.01))
            .collect();
        let m: Vec<PropensityScore> = (0..50)
            .map(|i| score(&format!("m{i}"), 0.32 + (i as f64) * 0.009))
            .collect();
        let cfg = MatchConfig {
            caliper: Caliper::Fixed(0.05),
            seed: 42,
        };
        let a = greedy_match(&f, &m, &cfg).unwrap();
        let b = greedy_match(&f, &m, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_caliper_positive_and_degenerate_rejected() {
        let scores = [0.1, 0.2, 0.5, 0.8, 0.9];
        let c = resolve_caliper(Caliper::Auto, &scores).unwrap();
        assert!(c > 0.0);
        // identical scores -> zero spread -> rejected as a caliper
        assert!(resolve_caliper(Caliper::Auto, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn balance_min_rule_and_drop() {
        let pairs = vec![
            MatchedPair {
                post_f: "pf".to_string(),
                post_m: "pm".to_string(),
                delta: 0.0,
            },
            MatchedPair {
                post_f: "pf2".to_string(),
                post_m: "pm2".to_string(),
                delta: 0.0,
            },
        ];
        let mut by_post = BTreeMap::new();
        by_post.insert(
            "pf".to_string(),
            (0..10).map(|i| format!("cf{i}")).collect::<Vec<_>>(),
        );
        by_post.insert(
            "pm".to_string(),
            (0..4).map(|i| format!("cm{i}")).collect::<Vec<_>>(),
        );
        by_post.insert("pf2".to_string(), vec!["x".to_string()]);
        // pm2 has no comments -> pair dropped
        let set = balance_comments(&pairs, &by_post, 7);
        assert_eq!(set.pairs.len(), 1);
        assert_eq!(set.comment_ids.len(), 8);
        let f_count = set
            .comment_ids
            .iter()
            .filter(|c| c.starts_with("cf"))
            .count();
        assert_eq!(f_count, 4);
    }

    #[test]
    fn balance_deterministic() {
        let pairs = vec![MatchedPair {
            post_f: "pf".to_string(),
            post_m: "pm".to_string(),
            delta: 0.0,
        }];
        let mut by_post = BTreeMap::new();
        by_post.insert(
            "pf".to_string(),
            (0..20).map(|i| format!("cf{i}")).collect::<Vec<_>>(),
        );
        by_post.insert(
            "pm".to_string(),
            (0..3).map(|i| format!("cm{i}")).collect::<Vec<_>>(),
        );
        let a = balance_comments(&pairs, &by_post, 9);
        let b = balance_comments(&pairs, &by_post, 9);
        assert_eq!(a, b);
    }

    fn separable_posts(n: usize) -> Vec<(Vec<String>, Gender)> {
        // Token "pink" appears iff the author is F.
        (0..n)
            .map(|i| {
                let gender = if i % 2 == 0 { Gender::F } else { Gender::M };
                let mut tokens = vec![
                    format!("filler{}", i % 5),
                    "the".to_string(),
                    "post".to_string(),
                ];
                if gender == Gender::F {
                    tokens.push("pink".to_string());
                } else {
                    tokens.push("blue".to_string());
                }
                (tokens, gender)
            })
            .collect()
    }

    #[test]
    fn trains_on_separable_signal() {
        let train = separable_posts(80);
        let dev = separable_posts(24);
        let hyper = PropensityHyper {
            embed_dim: 12,
            hidden_dim: 12,
            ff_dim: 8,
            epochs: 12,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let model = train_propensity_model(&train, &dev, hyper).unwrap();
        let held_out = separable_posts(30);
        let acc = model.accuracy(&held_out);
        assert!(acc >= 0.95, "held-out accuracy {acc} on separable corpus");
        let mean = |g: Gender| {
            let items: Vec<f64> = held_out
                .iter()
                .filter(|(_, gg)| *gg == g)
                .map(|(t, _)| model.score_tokens(t).unwrap())
                .collect();
            items.iter().sum::<f64>() / items.len() as f64
        };
        assert!(mean(Gender::F) > mean(Gender::M));
    }

    #[test]
    fn unlearnable_labels_stay_near_chance() {
        // Same text for both genders: nothing learnable.
        let train: Vec<(Vec<String>, Gender)> = (0..80)
            .map(|i| {
                let gender = if i % 2 == 0 { Gender::F } else { Gender::M };
                (
                    vec!["same".to_string(), "words".to_string(), "here".to_string()],
                    gender,
                )
            })
            .collect();
        let hyper = PropensityHyper {
            embed_dim: 8,
            hidden_dim: 8,
            ff_dim: 8,
            epochs: 3,
            ..Default::default()
        };
        let model = train_propensity_model(&train, &[], hyper).unwrap();
        let acc = model.accuracy(&train);
        // majority rate is 0.5; allow +-5 points
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn single_gender_training_errors() {
        let train: Vec<(Vec<String>, Gender)> = (0..10)
            .map(|_| (vec!["x".to_string()], Gender::F))
            .collect();
        assert!(train_propensity_model(&train, &[], PropensityHyper::default()).is_err());
    }

    #[test]
    fn scores_in_unit_interval_and_deterministic() {
        let train = separable_posts(20);
        let hyper = PropensityHyper {
            embed_dim: 6,
            hidden_dim: 6,
            ff_dim: 6,
            epochs: 1,
            ..Default::default()
        };
        let model = train_propensity_model(&train, &[], hyper).unwrap();
        let tokens = vec!["pink".to_string(), "post".to_string()];
        let a = model.score_tokens(&tokens).unwrap();
        let b = model.score_tokens(&tokens).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
        assert!(model.score_tokens(&[]).is_err());
    }

    #[test]
    fn scores_artifact_round_trip() {
        let scores = vec![score("p1", 0.123456789), score("p2", 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_scores(&mut buf, &scores).unwrap();
        let back = read_scores(&buf[..]).unwrap();
        assert_eq!(scores, back);
    }

    #[test]
    fn pairs_artifact_round_trip() {
        let outcome = MatchOutcome {
            pairs: vec![MatchedPair {
                post_f: "a".to_string(),
                post_m: "b".to_string(),
                delta: 0.0125,
            }],
            caliper: 0.07,
            discarded_f: 3,
        };
        let mut buf = Vec::new();
        write_pairs(&mut buf, &outcome).unwrap();
        let back = read_pairs(&buf[..]).unwrap();
        assert_eq!(outcome, back);
    }
}
