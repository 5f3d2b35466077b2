//! The central classifier: encoder + gender head + adversary ensemble.
//!
//! Training alternates two phases. The main phase minimizes
//! `CE(c(h_x), y) + mean_j KL(adv_j(h_x) || Uniform_K)` over encoder and
//! classifier parameters, pushing the hidden representation to predict the
//! addressee's gender while giving the adversaries nothing to work with.
//! The adversary phase minimizes the cross-entropy between each adversary's
//! output and the comment's confound vector `t_i` over adversary parameters
//! only. With demotion disabled the model trains with plain cross-entropy.
//!
//! Phase alternation is order-dependent and runs single-threaded; a trained
//! model is immutable and can be shared freely for prediction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Gender;
use crate::error::{Error, Result};
use crate::nn::{
    softmax, Adam, EncoderConfig, EncoderKind, FeedForward, Linear, NodeId, ParamId, Params, Tape,
    TextEncoder, Vocab,
};
use crate::propensity::{PropensityHyper, PropensityModel};

/// Alternating-phase schedule. `base_epochs` applies when demotion is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub classifier_epochs: usize,
    pub adversary_epochs: usize,
    pub cycles: usize,
    pub base_epochs: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            classifier_epochs: 3,
            adversary_epochs: 10,
            cycles: 3,
            base_epochs: 5,
        }
    }
}

impl TrainSchedule {
    fn validate(&self) -> Result<()> {
        if self.classifier_epochs == 0
            || self.adversary_epochs == 0
            || self.cycles == 0
            || self.base_epochs == 0
        {
            return Err(Error::Config(
                "all schedule counts must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasHyper {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub learning_rate: f64,
    /// Separate Adam step size for the adversary phase; `None` follows
    /// `learning_rate`.
    pub adversary_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub vocab_min_count: u64,
    pub n_adversaries: usize,
    pub demotion: bool,
    pub seed: u64,
    pub schedule: TrainSchedule,
}

impl Default for BiasHyper {
    fn default() -> Self {
        BiasHyper {
            encoder: EncoderKind::BiLstm,
            embed_dim: 32,
            hidden_dim: 32,
            ff_dim: 32,
            learning_rate: 1e-4,
            adversary_learning_rate: None,
            batch_size: 64,
            vocab_min_count: 1,
            n_adversaries: 2,
            demotion: false,
            seed: 1,
            schedule: TrainSchedule::default(),
        }
    }
}

/// A comment with its gold addressee gender.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComment {
    pub comment_id: String,
    pub tokens: Vec<String>,
    pub gender: Gender,
}

/// Model output for one comment. `score` is the softmax probability of F,
/// the prediction score used throughout the analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub comment_id: String,
    /// [P(M), P(F)], sums to 1.
    pub dist: [f64; 2],
    pub score: f64,
}

impl Prediction {
    /// A score of exactly 0.5 classifies as M, keeping F precision
    /// conservative.
    pub fn predicted_gender(&self) -> Gender {
        if self.score > 0.5 {
            Gender::F
        } else {
            Gender::M
        }
    }
}

pub struct BiasModel {
    pub vocab: Vocab,
    pub hyper: BiasHyper,
    /// Confound vector dimensionality; 0 when the model was trained without
    /// demotion.
    pub adversary_dim: usize,
    params: Params,
    encoder: TextEncoder,
    classifier: FeedForward,
    adversaries: Vec<Linear>,
}

impl BiasModel {
    /// Deterministically constructs a model skeleton from the hyper seed.
    pub fn build(vocab: Vocab, hyper: BiasHyper, adversary_dim: usize) -> BiasModel {
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
        let classifier = FeedForward::new(
            &mut params,
            &mut rng,
            "classifier",
            encoder.output_dim(),
            hyper.ff_dim,
            2,
        );
        let adversaries = (0..hyper.n_adversaries)
            .filter(|_| adversary_dim > 0)
            .map(|j| {
                Linear::new(
                    &mut params,
                    &mut rng,
                    &format!("adversary{j}"),
                    encoder.output_dim(),
                    adversary_dim,
                )
            })
            .collect();
        BiasModel {
            vocab,
            hyper,
            adversary_dim,
            params,
            encoder,
            classifier,
            adversaries,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn main_param_ids(&self) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| !self.params.tensor(id).name.starts_with("adversary"))
            .collect()
    }

    fn adversary_param_ids(&self) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| self.params.tensor(id).name.starts_with("adversary"))
            .collect()
    }

    /// The encoder's hidden vector for a comment; deterministic at
    /// inference, errors on empty input.
    pub fn encode_tokens(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let ids = self.vocab.encode(tokens);
        let mut tape = Tape::new(&self.params);
        let h = self.encoder.encode(&mut tape, &ids)?;
        Ok(tape.value(h).to_vec())
    }

    /// P(F | comment tokens).
    pub fn score_tokens(&self, tokens: &[String]) -> Result<f64> {
        Ok(self.predict_tokens("", tokens)?.score)
    }

    pub fn predict_tokens(&self, comment_id: &str, tokens: &[String]) -> Result<Prediction> {
        if tokens.is_empty() {
            return Err(Error::Model("cannot predict on an empty comment".to_string()));
        }
        let ids = self.vocab.encode(tokens);
        let mut tape = Tape::new(&self.params);
        let h = self.encoder.encode(&mut tape, &ids)?;
        let logits = self.classifier.logits(&mut tape, h);
        let probs = softmax(tape.value(logits));
        Ok(Prediction {
            comment_id: comment_id.to_string(),
            dist: [probs[0], probs[1]],
            score: probs[Gender::F.class_index()],
        })
    }

    pub fn accuracy(&self, items: &[LabeledComment]) -> f64 {
        if items.is_empty() {
            return 0.0;
        }
        let correct = items
            .iter()
            .filter(|it| {
                self.predict_tokens(&it.comment_id, &it.tokens)
                    .map(|p| p.predicted_gender() == it.gender)
                    .unwrap_or(false)
            })
            .count();
        correct as f64 / items.len() as f64
    }

    fn encode_on(&self, tape: &mut Tape, tokens: &[String]) -> Result<NodeId> {
        let ids = self.vocab.encode(tokens);
        self.encoder.encode(tape, &ids)
    }
}

/// Builds the main objective on a fresh tape and returns (tape, loss node):
/// batch mean of `CE(c(h_x), y) + mean_j KL(adv_j(h_x) || U_K)`. Gradients
/// flow through the adversary outputs, but the main training phase only
/// steps encoder and classifier parameters.
pub fn main_loss_tape<'m>(
    model: &'m BiasModel,
    batch: &[(&[String], Gender)],
) -> Result<(Tape<'m>, NodeId)> {
    if batch.is_empty() {
        return Err(Error::Model("empty batch".to_string()));
    }
    let mut tape = Tape::new(&model.params);
    let mut per_example = Vec::with_capacity(batch.len());
    for (tokens, gender) in batch {
        let h = model.encode_on(&mut tape, tokens)?;
        let logits = model.classifier.logits(&mut tape, h);
        let ls = tape.log_softmax(logits);
        let ce = tape.pick_neg(ls, gender.class_index());
        if model.adversaries.is_empty() {
            per_example.push(ce);
        } else {
            let mut terms = vec![(ce, 1.0)];
            let adv_w = 1.0 / model.adversaries.len() as f64;
            for adv in &model.adversaries {
                let alogits = adv.logits(&mut tape, h);
                let als = tape.log_softmax(alogits);
                let kl = tape.kl_uniform(als);
                terms.push((kl, adv_w));
            }
            per_example.push(tape.weighted_sum(terms));
        }
    }
    let w = 1.0 / per_example.len() as f64;
    let total = tape.weighted_sum(per_example.into_iter().map(|l| (l, w)).collect());
    Ok((tape, total))
}

/// Scalar value of the main objective on a batch.
pub fn main_loss(model: &BiasModel, batch: &[(&[String], Gender)]) -> Result<f64> {
    let (tape, node) = main_loss_tape(model, batch)?;
    Ok(tape.scalar(node))
}

/// Builds the adversary objective on a fresh tape: batch mean over ensemble
/// members of `CE(adv_j(h_x), t_i)`. The adversary phase steps adversary
/// parameters only, leaving the encoder bit-unchanged.
pub fn adversary_loss_tape<'m>(
    model: &'m BiasModel,
    batch: &[(&[String], &[f64])],
) -> Result<(Tape<'m>, NodeId)> {
    if batch.is_empty() {
        return Err(Error::Model("empty batch".to_string()));
    }
    if model.adversaries.is_empty() {
        return Err(Error::Model(
            "model has no adversaries; train with demotion enabled".to_string(),
        ));
    }
    let mut tape = Tape::new(&model.params);
    let mut per_example = Vec::with_capacity(batch.len());
    for (tokens, target) in batch {
        if target.len() != model.adversary_dim {
            return Err(Error::Model(format!(
                "confound vector has dimension {}, adversary expects {}",
                target.len(),
                model.adversary_dim
            )));
        }
        let h = model.encode_on(&mut tape, tokens)?;
        let adv_w = 1.0 / model.adversaries.len() as f64;
        let terms: Vec<(NodeId, f64)> = model
            .adversaries
            .iter()
            .map(|adv| {
                let alogits = adv.logits(&mut tape, h);
                let als = tape.log_softmax(alogits);
                (tape.dot_neg(als, target.to_vec()), adv_w)
            })
            .collect();
        per_example.push(tape.weighted_sum(terms));
    }
    let w = 1.0 / per_example.len() as f64;
    let total = tape.weighted_sum(per_example.into_iter().map(|l| (l, w)).collect());
    Ok((tape, total))
}

pub fn adversary_loss(model: &BiasModel, batch: &[(&[String], &[f64])]) -> Result<f64> {
    let (tape, node) = adversary_loss_tape(model, batch)?;
    Ok(tape.scalar(node))
}

fn epoch_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(counter + 1)))
}

/// Trains a bias model.
///
/// Demotion off: plain cross-entropy for `schedule.base_epochs` epochs.
/// Demotion on: `schedule.cycles` alternations of a main phase
/// (`classifier_epochs` epochs stepping encoder + classifier) and an
/// adversary phase (`adversary_epochs` epochs stepping adversaries only);
/// every training comment must have a confound vector. The checkpoint with
/// the best dev gender accuracy is returned (training accuracy when `dev`
/// is empty).
pub fn train(
    train_set: &[LabeledComment],
    confounds: Option<&HashMap<String, Vec<f64>>>,
    dev: &[LabeledComment],
    hyper: BiasHyper,
) -> Result<BiasModel> {
    if train_set.is_empty() {
        return Err(Error::Model("empty training set".to_string()));
    }
    hyper.schedule.validate()?;
    let genders: HashSet<Gender> = train_set.iter().map(|c| c.gender).collect();
    if genders.len() < 2 {
        return Err(Error::Model(
            "bias model training needs comments addressed to both genders".to_string(),
        ));
    }

    let adversary_dim = if hyper.demotion {
        let confounds = confounds.ok_or_else(|| {
            Error::Model("demotion training requires confound vectors".to_string())
        })?;
        let mut dim = None;
        for c in train_set {
            let t = confounds.get(&c.comment_id).ok_or_else(|| {
                Error::Model(format!("no confound vector for comment {}", c.comment_id))
            })?;
            match dim {
                None => dim = Some(t.len()),
                Some(d) if d != t.len() => {
                    return Err(Error::Model(
                        "confound vectors have inconsistent dimensions".to_string(),
                    ))
                }
                _ => {}
            }
        }
        dim.unwrap_or(0)
    } else {
        0
    };

    let vocab = Vocab::build(
        train_set.iter().map(|c| c.tokens.as_slice()),
        hyper.vocab_min_count,
    );
    let mut model = BiasModel::build(vocab, hyper, adversary_dim);
    let main_ids = model.main_param_ids();
    let adv_ids = model.adversary_param_ids();
    let mut best = (f64::NEG_INFINITY, model.params.snapshot());
    let mut epoch_counter = 0u64;

    let run_main_epoch = |model: &mut BiasModel,
                              opt: &mut Adam,
                              counter: u64|
     -> Result<()> {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut epoch_rng(hyper.seed, counter));
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let batch: Vec<(&[String], Gender)> = chunk
                .iter()
                .map(|&i| (train_set[i].tokens.as_slice(), train_set[i].gender))
                .collect();
            let (tape, loss) = main_loss_tape(model, &batch)?;
            let grads = tape.backward(loss);
            drop(tape);
            opt.step(&mut model.params, &grads, &main_ids);
        }
        Ok(())
    };

    if hyper.demotion {
        let confounds = confounds.expect("checked above");
        let mut main_opt = Adam::new(hyper.learning_rate);
        let mut adv_opt = Adam::new(hyper.adversary_learning_rate.unwrap_or(hyper.learning_rate));
        for _cycle in 0..hyper.schedule.cycles {
            for _ in 0..hyper.schedule.classifier_epochs {
                run_main_epoch(&mut model, &mut main_opt, epoch_counter)?;
                epoch_counter += 1;
                let eval_set = if dev.is_empty() { train_set } else { dev };
                let acc = model.accuracy(eval_set);
                if acc >= best.0 {
                    best = (acc, model.params.snapshot());
                }
            }
            for _ in 0..hyper.schedule.adversary_epochs {
                let mut order: Vec<usize> = (0..train_set.len()).collect();
                order.shuffle(&mut epoch_rng(hyper.seed, epoch_counter));
                epoch_counter += 1;
                for chunk in order.chunks(hyper.batch_size.max(1)) {
                    let batch: Vec<(&[String], &[f64])> = chunk
                        .iter()
                        .map(|&i| {
                            let c = &train_set[i];
                            (c.tokens.as_slice(), confounds[&c.comment_id].as_slice())
                        })
                        .collect();
                    let (tape, loss) = adversary_loss_tape(&model, &batch)?;
                    let grads = tape.backward(loss);
                    drop(tape);
                    adv_opt.step(&mut model.params, &grads, &adv_ids);
                }
            }
        }
    } else {
        let mut opt = Adam::new(hyper.learning_rate);
        for _ in 0..hyper.schedule.base_epochs {
            run_main_epoch(&mut model, &mut opt, epoch_counter)?;
            epoch_counter += 1;
            let eval_set = if dev.is_empty() { train_set } else { dev };
            let acc = model.accuracy(eval_set);
            if acc >= best.0 {
                best = (acc, model.params.snapshot());
            }
        }
    }

    model.params.restore(&best.1);
    Ok(model)
}

/// Scores a list of (comment_id, tokens) pairs.
pub fn predict_comments(
    model: &BiasModel,
    comments: &[(&str, &[String])],
) -> Result<Vec<Prediction>> {
    comments
        .iter()
        .map(|(id, tokens)| model.predict_tokens(id, tokens))
        .collect()
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Versioned model container: vocabulary, every parameter tensor by name,
/// the full hyperparameter/schedule configuration, and the confound
/// dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub vocab: Vec<String>,
    pub adversary_dim: usize,
    pub bias_hyper: Option<BiasHyper>,
    pub propensity_hyper: Option<PropensityHyper>,
    pub tensors: BTreeMap<String, crate::nn::Tensor>,
}

pub const CHECKPOINT_FORMAT: &str = "biaslens-model";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn for_bias(model: &BiasModel) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: "bias".to_string(),
            vocab: model.vocab.words().to_vec(),
            adversary_dim: model.adversary_dim,
            bias_hyper: Some(model.hyper),
            propensity_hyper: None,
            tensors: model.params.to_named_map(),
        }
    }

    pub fn for_propensity(model: &PropensityModel) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: "propensity".to_string(),
            vocab: model.vocab.words().to_vec(),
            adversary_dim: 0,
            bias_hyper: None,
            propensity_hyper: Some(model.hyper),
            tensors: model.params().to_named_map(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Model(format!(
                "unsupported checkpoint container {}/{}",
                self.format, self.version
            )));
        }
        Ok(())
    }

    pub fn into_bias_model(self) -> Result<BiasModel> {
        self.validate()?;
        let hyper = self
            .bias_hyper
            .ok_or_else(|| Error::Model("checkpoint is not a bias model".to_string()))?;
        let vocab = Vocab::from_words(self.vocab);
        let mut model = BiasModel::build(vocab, hyper, self.adversary_dim);
        model.params.load_named_map(&self.tensors)?;
        Ok(model)
    }

    pub fn into_propensity_model(self) -> Result<PropensityModel> {
        self.validate()?;
        let hyper = self
            .propensity_hyper
            .ok_or_else(|| Error::Model("checkpoint is not a propensity model".to_string()))?;
        let vocab = Vocab::from_words(self.vocab);
        PropensityModel::from_restored(vocab, hyper, &self.tensors)
    }

    pub fn write_json_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json_path(path: &Path) -> Result<Checkpoint> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(f))?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
