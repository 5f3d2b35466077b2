//! Minimal neural-network toolkit: named f64 parameter tensors, a
//! reverse-mode autodiff tape, recurrent/bag-of-words text encoders, and
//! Adam.
//!
//! Everything here is sequential and seeded. That is deliberate: the
//! training contracts require bit-identical runs for a fixed seed and
//! analytic gradients that survive a finite-difference audit on every
//! parameter, both of which are easiest to guarantee with plain f64 loops.

pub mod layers;
pub mod optim;
pub mod tape;

pub use layers::{EncoderConfig, EncoderKind, FeedForward, Linear, LstmCell, TextEncoder};
pub use optim::Adam;
pub use tape::{Grads, NodeId, Tape};

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Handle to one parameter tensor inside a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A named 2-D parameter tensor (vectors are `rows x 1`), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// The set of parameter tensors of one model, keyed by insertion order and
/// name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "tensor {name} shape mismatch");
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.tensors.len());
        self.by_name.insert(name.to_string(), id.0);
        self.tensors.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        id
    }

    /// Glorot-style uniform init in `[-s, s]` with `s = sqrt(6 / (rows+cols))`.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect();
        self.add(name, rows, cols, data)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.data.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) {
        assert_eq!(snapshot.len(), self.tensors.len());
        for (t, s) in self.tensors.iter_mut().zip(snapshot) {
            t.data.copy_from_slice(s);
        }
    }

    pub fn to_named_map(&self) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .map(|t| (t.name.clone(), t.clone()))
            .collect()
    }

    /// Overwrites tensor data by name; shapes must match the constructed
    /// model exactly.
    pub fn load_named_map(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        for t in &mut self.tensors {
            let src = map.get(&t.name).ok_or_else(|| {
                Error::Model(format!("checkpoint missing tensor {:?}", t.name))
            })?;
            if src.rows != t.rows || src.cols != t.cols {
                return Err(Error::Model(format!(
                    "checkpoint tensor {:?} has shape {}x{}, expected {}x{}",
                    t.name, src.rows, src.cols, t.rows, t.cols
                )));
            }
            t.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Token vocabulary with id 0 reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub const UNK: &str = "<unk>";

impl Vocab {
    /// Builds a vocabulary from documents, keeping tokens with at least
    /// `min_count` occurrences, ordered by descending count then token.
    pub fn build<'a, I>(docs: I, min_count: u64) -> Vocab
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in docs {
            for tok in doc {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && w != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut words = Vec::with_capacity(kept.len() + 1);
        words.push(UNK.to_string());
        words.extend(kept.into_iter().map(|(w, _)| w.to_string()));
        Vocab::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Numerically stable softmax (inference-side helper; training goes through
/// the tape's log-softmax).
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
