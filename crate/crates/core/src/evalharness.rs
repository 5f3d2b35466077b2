//! Held-out metrics, zero-shot transfer evaluation, and random baselines.
//!
//! All metrics treat F as the positive class unless told otherwise; the
//! transfer protocol maps a predicted F onto "gender-tagged". Reports carry
//! a `degenerate` flag instead of erroring when a configuration predicts no
//! positives, so ablations with collapsed recall still tabulate.

use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biasmodel::{BiasModel, Prediction};
use crate::corpus::{apply_substitutions, tokenize, Gender, SubstitutionLexicon};
use crate::error::{Error, Result};

/// Binary classification metrics with explicit support counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub positive_class: String,
    pub support_positive: usize,
    pub support_negative: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// Set when precision or recall was forced to 0 because no positives
    /// were predicted or none exist in gold.
    pub degenerate: bool,
}

/// Scores (predicted positive, gold positive) pairs.
pub fn evaluate_binary(items: &[(bool, bool)], positive_class: &str) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::Eval("cannot evaluate an empty prediction set".to_string()));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for &(predicted, gold) in items {
        match (predicted, gold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut degenerate = false;
    let precision = if tp + fp == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (tp + tn) as f64 / items.len() as f64;
    Ok(EvalReport {
        precision,
        recall,
        f1,
        accuracy,
        positive_class: positive_class.to_string(),
        support_positive: tp + fn_,
        support_negative: fp + tn,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        degenerate,
    })
}

/// Standard held-out evaluation: every prediction must have a gold gender;
/// F is the positive class.
pub fn evaluate(predictions: &[Prediction], gold: &HashMap<String, Gender>) -> Result<EvalReport> {
    evaluate_with_positive(predictions, gold, Gender::F)
}

/// Held-out evaluation with a caller-selected positive class.
pub fn evaluate_with_positive(
    predictions: &[Prediction],
    gold: &HashMap<String, Gender>,
    positive: Gender,
) -> Result<EvalReport> {
    let items: Result<Vec<(bool, bool)>> = predictions
        .iter()
        .map(|p| {
            let g = gold.get(&p.comment_id).ok_or_else(|| {
                Error::Eval(format!("no gold label for comment {}", p.comment_id))
            })?;
            Ok((p.predicted_gender() == positive, *g == positive))
        })
        .collect();
    evaluate_binary(&items?, &positive.to_string())
}

/// A microaggression-style post with its bias-type tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedPost {
    pub post_id: String,
    pub tokens: Vec<String>,
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Gender,
    Other,
}

/// Reads tagged posts from a three-column file (post_id, tag, text). Any
/// tag other than `gender` counts as `other`; posts whose text tokenizes to
/// nothing are dropped. Text goes through the same tokenization and
/// substitution pipeline as training data (there is no addressee, so no
/// name scrubbing applies).
pub fn read_tagged_posts<R: BufRead>(
    reader: R,
    delim: char,
    lexicon: &SubstitutionLexicon,
) -> Result<Vec<TaggedPost>> {
    let mut posts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<tagged-posts>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, delim).collect();
        if fields.len() != 3 {
            return Err(Error::MalformedRow {
                row: i + 1,
                reason: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let tag = if fields[1].trim().eq_ignore_ascii_case("gender") {
            Tag::Gender
        } else {
            Tag::Other
        };
        let tokens = apply_substitutions(&tokenize(fields[2]), lexicon, &[]);
        if tokens.is_empty() {
            continue;
        }
        posts.push(TaggedPost {
            post_id: fields[0].trim().to_string(),
            tokens,
            tag,
        });
    }
    Ok(posts)
}

/// Zero-shot transfer: the model is never trained on tagged posts; a
/// predicted F counts as "gender-tagged".
pub fn transfer_eval(model: &BiasModel, posts: &[TaggedPost]) -> Result<EvalReport> {
    let items: Result<Vec<(bool, bool)>> = posts
        .iter()
        .map(|p| {
            let pred = model.predict_tokens(&p.post_id, &p.tokens)?;
            Ok((pred.predicted_gender() == Gender::F, p.tag == Tag::Gender))
        })
        .collect();
    evaluate_binary(&items?, "gender-tagged")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Guesses positive with probability 0.5.
    Uniform,
    /// Guesses positive with the gold positive rate.
    ClassPrior,
}

/// Simulates a random guesser against gold labels drawn from the tag
/// distribution, scored exactly like the transfer evaluation.
///
/// Closed-form expectations: uniform accuracy -> 0.5; class-prior accuracy
/// -> p^2 + (1-p)^2.
pub fn random_baseline(
    kind: BaselineKind,
    positive_rate: f64,
    n: usize,
    seed: u64,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::Eval("baseline needs n >= 1".to_string()));
    }
    if !(0.0..=1.0).contains(&positive_rate) {
        return Err(Error::Eval(format!(
            "positive rate must lie in [0, 1], got {positive_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guess_rate = match kind {
        BaselineKind::Uniform => 0.5,
        BaselineKind::ClassPrior => positive_rate,
    };
    let items: Vec<(bool, bool)> = (0..n)
        .map(|_| {
            let gold = rng.gen_bool(positive_rate);
            let guess = rng.gen_bool(guess_rate);
            (guess, gold)
        })
        .collect();
    evaluate_binary(&items, "gender-tagged")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let items: Vec<(bool, bool)> = (0..10).map(|i| (i % 2 == 0, i % 2 == 0)).collect();
        let r = evaluate_binary(&items, "F").unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn majority_class_on_imbalanced_set() {
        // 82% M test set, everything predicted M: acc = 0.82, F1 = 0, flagged.
        let items: Vec<(bool, bool)> = (0..100).map(|i| (false, i < 18)).collect();
        let r = evaluate_binary(&items, "F").unwrap();
        assert!((r.accuracy - 0.82).abs() < 1e-12);
        assert_eq!(r.f1, 0.0);
        assert!(r.degenerate);
        assert_eq!(r.support_positive, 18);
        assert_eq!(r.support_negative, 82);
    }

    #[test]
    fn empty_input_errors() {
        assert!(evaluate_binary(&[], "F").is_err());
    }

    #[test]
    fn no_gold_positives_flags_not_errors() {
        let items = vec![(true, false), (false, false)];
        let r = evaluate_binary(&items, "F").unwrap();
        assert!(r.degenerate);
        assert_eq!(r.recall, 0.0);
    }

    #[test]
    fn f1_harmonic_identity() {
        let items = vec![
            (true, true),
            (true, false),
            (false, true),
            (false, false),
            (true, true),
        ];
        let r = evaluate_binary(&items, "F").unwrap();
        let expected = 2.0 * r.precision * r.recall / (r.precision + r.recall);
        assert!((r.f1 - expected).abs() < 1e-9);
    }

    #[test]
    fn label_swap_symmetry() {
        let items = vec![
            (true, true),
            (true, false),
            (false, true),
            (false, false),
            (true, true),
            (false, true),
        ];
        let pos = evaluate_binary(&items, "F").unwrap();
        let swapped: Vec<(bool, bool)> = items.iter().map(|&(p, g)| (!p, !g)).collect();
        let neg = evaluate_binary(&swapped, "M").unwrap();
        // (tp, fp, fn, tn) -> (tn, fn, fp, tp)
        assert_eq!(neg.true_positives, pos.true_negatives);
        assert_eq!(neg.false_positives, pos.false_negatives);
        assert_eq!(neg.false_negatives, pos.false_positives);
        assert_eq!(neg.true_negatives, pos.true_positives);
        assert_eq!(neg.accuracy, pos.accuracy);
    }

    #[test]
    fn uniform_baseline_converges_to_half() {
        let r = random_baseline(BaselineKind::Uniform, 0.561, 10_000, 7).unwrap();
        assert!((r.accuracy - 0.5).abs() <= 0.02, "accuracy {}", r.accuracy);
    }

    #[test]
    fn class_prior_baseline_matches_closed_form() {
        let p: f64 = 0.561;
        let expected = p * p + (1.0 - p) * (1.0 - p); // ~0.508
        assert!((expected - 0.508).abs() < 1e-3);
        let n = 10_000;
        let r = random_baseline(BaselineKind::ClassPrior, p, n, 11).unwrap();
        let sd = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (r.accuracy - expected).abs() <= 1.96 * sd,
            "accuracy {} outside binomial bounds of {expected}",
            r.accuracy
        );
    }

    #[test]
    fn baseline_deterministic_under_seed() {
        let a = random_baseline(BaselineKind::ClassPrior, 0.561, 1000, 3).unwrap();
        let b = random_baseline(BaselineKind::ClassPrior, 0.561, 1000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_input_validation() {
        assert!(random_baseline(BaselineKind::Uniform, 0.5, 0, 1).is_err());
        assert!(random_baseline(BaselineKind::Uniform, 1.5, 10, 1).is_err());
    }

    #[test]
    fn tagged_posts_parse_and_substitute() {
        let lex = SubstitutionLexicon::default_lexicon();
        let data = "p1\tgender\tyou're too pretty to be a woman in science\n\
                    p2\trace\tsome other post text\n\
                    p3\tgender\t\n";
        let posts = read_tagged_posts(data.as_bytes(), '\t', &lex).unwrap();
        assert_eq!(posts.len(), 2); // empty text dropped
        assert_eq!(posts[0].tag, Tag::Gender);
        assert_eq!(posts[1].tag, Tag::Other);
        assert!(posts[0].tokens.contains(&"⟨person⟩".to_string()));
    }

    #[test]
    fn tagged_support_counts_reflect_distribution() {
        // 561 of 1000 gender-tagged: support counts must reproduce the mix.
        let items: Vec<(bool, bool)> = (0..1000).map(|i| (i % 3 == 0, i < 561)).collect();
        let r = evaluate_binary(&items, "gender-tagged").unwrap();
        assert_eq!(r.support_positive, 561);
        assert_eq!(r.support_negative, 439);
    }
}
