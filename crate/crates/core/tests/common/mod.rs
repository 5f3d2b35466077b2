//! Independent oracles and fixture builders shared by the integration and
//! acceptance suites.
//!
//! Everything in this module is deliberately naive: direct loops and direct
//! products, no code shared with the library paths under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

/// Brute-force prior-smoothed log-odds of `word` in `label`'s subcorpus
/// versus the union of all other labels, evaluated from first principles.
/// The prior count for a word is `alpha0 * count(word) / total_tokens`.
pub fn brute_force_log_odds(
    groups: &[(String, BTreeMap<String, u64>)],
    alpha0: f64,
    word: &str,
    label: &str,
) -> f64 {
    let mut total_tokens = 0.0;
    let mut total_word = 0.0;
    for (_, counts) in groups {
        for (w, &c) in counts {
            total_tokens += c as f64;
            if w == word {
                total_word += c as f64;
            }
        }
    }
    let alpha_w = alpha0 * total_word / total_tokens;

    let mut y_in = 0.0;
    let mut n_in = 0.0;
    let mut y_out = 0.0;
    let mut n_out = 0.0;
    for (l, counts) in groups {
        for (w, &c) in counts {
            if l == label {
                n_in += c as f64;
                if w == word {
                    y_in += c as f64;
                }
            } else {
                n_out += c as f64;
                if w == word {
                    y_out += c as f64;
                }
            }
        }
    }
    let odds_in = (y_in + alpha_w) / (n_in + alpha0 - y_in - alpha_w);
    let odds_out = (y_out + alpha_w) / (n_out + alpha0 - y_out - alpha_w);
    odds_in.ln() - odds_out.ln()
}

/// Auto prior mass used by the library: one percent of the total token
/// count.
pub fn auto_alpha0(groups: &[(String, BTreeMap<String, u64>)]) -> f64 {
    let total: u64 = groups
        .iter()
        .map(|(_, c)| c.values().sum::<u64>())
        .sum();
    0.01 * total as f64
}

/// Brute-force confound vector: p(k) * prod_i p(w_i | k) evaluated as a
/// direct product (no log space), normalized at the end.
///
/// Mirrors the contract: authors sorted by id, p(k) from comment
/// proportions, p(w|k) = sigmoid(log-odds) normalized over the vocabulary,
/// out-of-vocabulary words skipped, all-OOV falls back to the prior.
pub fn brute_force_confound_vector(
    train: &[(Vec<String>, String)],
    min_count: u64,
    query: &[String],
) -> (Vec<String>, Vec<f64>) {
    // vocabulary after the count cutoff
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for (tokens, _) in train {
        for t in tokens {
            *totals.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let vocab: Vec<String> = totals
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(w, _)| w.clone())
        .collect();

    // per-author counts over the kept vocabulary
    let mut groups: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut comment_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (tokens, author) in train {
        *comment_counts.entry(author.clone()).or_insert(0) += 1;
        let g = groups.entry(author.clone()).or_default();
        for t in tokens {
            if vocab.contains(t) {
                *g.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    let grouped: Vec<(String, BTreeMap<String, u64>)> = groups
        .into_iter()
        .filter(|(_, c)| !c.is_empty())
        .collect();
    let authors: Vec<String> = grouped.iter().map(|(a, _)| a.clone()).collect();
    let alpha0 = auto_alpha0(&grouped);

    let total_comments: f64 = authors
        .iter()
        .map(|a| comment_counts[a] as f64)
        .sum();
    let prior: Vec<f64> = authors
        .iter()
        .map(|a| comment_counts[a] as f64 / total_comments)
        .collect();

    // p(w|k) tables via direct sigmoid normalization
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut p_w_k: Vec<BTreeMap<String, f64>> = Vec::new();
    for author in &authors {
        let mut sig: BTreeMap<String, f64> = BTreeMap::new();
        for w in &vocab {
            sig.insert(
                w.clone(),
                sigmoid(brute_force_log_odds(&grouped, alpha0, w, author)),
            );
        }
        let z: f64 = sig.values().sum();
        p_w_k.push(sig.into_iter().map(|(w, s)| (w, s / z)).collect());
    }

    let in_vocab: Vec<&String> = query.iter().filter(|t| vocab.contains(*t)).collect();
    if in_vocab.is_empty() {
        return (authors, prior);
    }
    let mut scores: Vec<f64> = prior.clone();
    for (k, score) in scores.iter_mut().enumerate() {
        for w in &in_vocab {
            *score *= p_w_k[k][w.as_str()];
        }
    }
    let z: f64 = scores.iter().sum();
    let probs = scores.into_iter().map(|s| s / z).collect();
    (authors, probs)
}

/// Central-difference gradient audit. Returns (parameters checked, max
/// relative error, failures) where a parameter fails when
/// `|analytic - numeric| > rtol * max(|analytic|, |numeric|) + atol`.
pub fn finite_difference_check<F>(
    params: &mut biaslens::nn::Params,
    grads: &biaslens::nn::Grads,
    mut loss: F,
    rtol: f64,
    atol: f64,
) -> (usize, f64, Vec<String>)
where
    F: FnMut(&biaslens::nn::Params) -> f64,
{
    let h = 1e-6;
    let ids: Vec<biaslens::nn::ParamId> = params.ids().collect();
    let mut checked = 0;
    let mut max_rel: f64 = 0.0;
    let mut failures = Vec::new();
    for id in ids {
        let len = params.tensor(id).data.len();
        for j in 0..len {
            let orig = params.tensor(id).data[j];
            params.tensor_mut(id).data[j] = orig + h;
            let up = loss(params);
            params.tensor_mut(id).data[j] = orig - h;
            let down = loss(params);
            params.tensor_mut(id).data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map(|g| g[j]).unwrap_or(0.0);
            let err = (analytic - numeric).abs();
            let bound = rtol * analytic.abs().max(numeric.abs()) + atol;
            let denom = analytic.abs().max(numeric.abs()).max(atol);
            max_rel = max_rel.max(err / denom);
            if err > bound {
                failures.push(format!(
                    "{}[{}]: analytic {analytic} vs numeric {numeric}",
                    params.tensor(id).name,
                    j
                ));
            }
            checked += 1;
        }
    }
    (checked, max_rel, failures)
}

/// Random grouped word counts: every label non-empty, at least two word
/// types overall.
pub fn random_grouped_counts<R: Rng>(
    rng: &mut R,
    n_labels: usize,
    max_types: usize,
    max_tokens: usize,
) -> Vec<(String, BTreeMap<String, u64>)> {
    let n_types = rng.gen_range(2..=max_types);
    let vocab: Vec<String> = (0..n_types).map(|i| format!("w{i}")).collect();
    let mut remaining = max_tokens;
    let mut groups = Vec::new();
    for label_idx in 0..n_labels {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let budget = (remaining / (n_labels - label_idx)).max(2);
        let n_tokens = rng.gen_range(1..=budget);
        remaining = remaining.saturating_sub(n_tokens);
        for _ in 0..n_tokens {
            let w = &vocab[rng.gen_range(0..vocab.len())];
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
        groups.push((format!("label{label_idx}"), counts));
    }
    groups
}

/// Random 3-author toy corpus for the confound oracle.
pub fn random_confound_corpus<R: Rng>(rng: &mut R) -> Vec<(Vec<String>, String)> {
    let vocab: Vec<String> = (0..rng.gen_range(4..10)).map(|i| format!("w{i}")).collect();
    let mut corpus = Vec::new();
    for author in ["a1", "a2", "a3"] {
        let n_comments = rng.gen_range(2..6);
        for _ in 0..n_comments {
            let len = rng.gen_range(1..8);
            let tokens: Vec<String> = (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                .collect();
            corpus.push((tokens, author.to_string()));
        }
    }
    corpus
}
