//! Text encoders and feedforward heads built on the tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::{ParamId, Params};
use crate::error::{Error, Result};

/// One LSTM direction: four gates with separate input/recurrent weights.
#[derive(Debug, Clone)]
pub struct LstmCell {
    w: [ParamId; 4],
    u: [ParamId; 4],
    b: [ParamId; 4],
    hidden: usize,
}

const GATES: [&str; 4] = ["i", "f", "g", "o"];

impl LstmCell {
    pub fn new<R: Rng>(
        params: &mut Params,
        rng: &mut R,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
    ) -> LstmCell {
        let mut w = Vec::new();
        let mut u = Vec::new();
        let mut b = Vec::new();
        for gate in GATES {
            w.push(params.add_glorot(&format!("{prefix}.w_{gate}"), hidden, input_dim, rng));
            u.push(params.add_glorot(&format!("{prefix}.u_{gate}"), hidden, hidden, rng));
            b.push(params.add_zeros(&format!("{prefix}.b_{gate}"), hidden, 1));
        }
        LstmCell {
            w: [w[0], w[1], w[2], w[3]],
            u: [u[0], u[1], u[2], u[3]],
            b: [b[0], b[1], b[2], b[3]],
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn gate(&self, tape: &mut Tape, idx: usize, x: NodeId, h: NodeId) -> NodeId {
        let wx = tape.matvec(self.w[idx], x);
        let uh = tape.matvec(self.u[idx], h);
        let sum = tape.add(wx, uh);
        tape.add_bias(sum, self.b[idx])
    }

    /// One step: returns (h', c').
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> (NodeId, NodeId) {
        let pre_i = self.gate(tape, 0, x, h);
        let pre_f = self.gate(tape, 1, x, h);
        let pre_g = self.gate(tape, 2, x, h);
        let pre_o = self.gate(tape, 3, x, h);
        let i = tape.sigmoid(pre_i);
        let f = tape.sigmoid(pre_f);
        let g = tape.tanh(pre_g);
        let o = tape.sigmoid(pre_o);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc);
        (h_next, c_next)
    }
}

/// Two feedforward layers with a tanh in between; the caller applies
/// softmax/log-softmax to the returned logits.
#[derive(Debug, Clone)]
pub struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FeedForward {
    pub fn new<R: Rng>(
        params: &mut Params,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        mid_dim: usize,
        out_dim: usize,
    ) -> FeedForward {
        FeedForward {
            w1: params.add_glorot(&format!("{prefix}.w1"), mid_dim, in_dim, rng),
            b1: params.add_zeros(&format!("{prefix}.b1"), mid_dim, 1),
            w2: params.add_glorot(&format!("{prefix}.w2"), out_dim, mid_dim, rng),
            b2: params.add_zeros(&format!("{prefix}.b2"), out_dim, 1),
        }
    }

    pub fn logits(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let h = tape.matvec(self.w1, x);
        let h = tape.add_bias(h, self.b1);
        let h = tape.tanh(h);
        let out = tape.matvec(self.w2, h);
        tape.add_bias(out, self.b2)
    }
}

/// Single affine layer.
#[derive(Debug, Clone)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut Params,
        rng: &mut R,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Linear {
        Linear {
            w: params.add_glorot(&format!("{prefix}.w"), out_dim, in_dim, rng),
            b: params.add_zeros(&format!("{prefix}.b"), out_dim, 1),
        }
    }

    pub fn logits(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let out = tape.matvec(self.w, x);
        tape.add_bias(out, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Bidirectional LSTM; the encoding is the concatenation of the final
    /// hidden state of each direction.
    BiLstm,
    /// Mean of the token embeddings.
    BagOfEmbeddings,
}

impl Default for EncoderKind {
    fn default() -> Self {
        EncoderKind::BiLstm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

/// Turns a token-id sequence into a fixed-dimension hidden vector.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    cfg: EncoderConfig,
    embedding: ParamId,
    fwd: Option<LstmCell>,
    bwd: Option<LstmCell>,
}

impl TextEncoder {
    pub fn new<R: Rng>(params: &mut Params, rng: &mut R, cfg: EncoderConfig) -> TextEncoder {
        let embedding = params.add_glorot("encoder.embedding", cfg.vocab_size, cfg.embed_dim, rng);
        let (fwd, bwd) = match cfg.kind {
            EncoderKind::BiLstm => (
                Some(LstmCell::new(params, rng, "encoder.fwd", cfg.embed_dim, cfg.hidden_dim)),
                Some(LstmCell::new(params, rng, "encoder.bwd", cfg.embed_dim, cfg.hidden_dim)),
            ),
            EncoderKind::BagOfEmbeddings => (None, None),
        };
        TextEncoder {
            cfg,
            embedding,
            fwd,
            bwd,
        }
    }

    pub fn config(&self) -> EncoderConfig {
        self.cfg
    }

    pub fn output_dim(&self) -> usize {
        match self.cfg.kind {
            EncoderKind::BiLstm => 2 * self.cfg.hidden_dim,
            EncoderKind::BagOfEmbeddings => self.cfg.embed_dim,
        }
    }

    /// Encodes a non-empty token-id sequence; deterministic at inference.
    pub fn encode(&self, tape: &mut Tape, token_ids: &[usize]) -> Result<NodeId> {
        if token_ids.is_empty() {
            return Err(Error::Model("cannot encode an empty token sequence".to_string()));
        }
        let embeds: Vec<NodeId> = token_ids
            .iter()
            .map(|&t| tape.embed(self.embedding, t))
            .collect();
        match self.cfg.kind {
            EncoderKind::BagOfEmbeddings => Ok(tape.mean(embeds)),
            EncoderKind::BiLstm => {
                let fwd = self.fwd.as_ref().unwrap();
                let bwd = self.bwd.as_ref().unwrap();
                let mut h = tape.zeros(fwd.hidden());
                let mut c = tape.zeros(fwd.hidden());
                for &e in &embeds {
                    let (h2, c2) = fwd.step(tape, e, h, c);
                    h = h2;
                    c = c2;
                }
                let fwd_last = h;
                let mut h = tape.zeros(bwd.hidden());
                let mut c = tape.zeros(bwd.hidden());
                for &e in embeds.iter().rev() {
                    let (h2, c2) = bwd.step(tape, e, h, c);
                    h = h2;
                    c = c2;
                }
                Ok(tape.concat(fwd_last, h))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder(kind: EncoderKind) -> (Params, TextEncoder) {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = TextEncoder::new(
            &mut params,
            &mut rng,
            EncoderConfig {
                kind,
                vocab_size: 10,
                embed_dim: 5,
                hidden_dim: 4,
            },
        );
        (params, enc)
    }

    #[test]
    fn encode_is_deterministic_and_shaped() {
        for kind in [EncoderKind::BiLstm, EncoderKind::BagOfEmbeddings] {
            let (params, enc) = encoder(kind);
            let mut tape = Tape::new(&params);
            let a = enc.encode(&mut tape, &[1, 2, 3]).unwrap();
            let b = enc.encode(&mut tape, &[1, 2, 3]).unwrap();
            assert_eq!(tape.value(a), tape.value(b));
            assert_eq!(tape.value(a).len(), enc.output_dim());
        }
    }

    #[test]
    fn different_inputs_encode_differently() {
        let (params, enc) = encoder(EncoderKind::BiLstm);
        let mut tape = Tape::new(&params);
        let a = enc.encode(&mut tape, &[1, 2, 3]).unwrap();
        let b = enc.encode(&mut tape, &[3, 2, 1]).unwrap();
        assert_ne!(tape.value(a), tape.value(b));
    }

    #[test]
    fn empty_input_errors() {
        let (params, enc) = encoder(EncoderKind::BiLstm);
        let mut tape = Tape::new(&params);
        assert!(enc.encode(&mut tape, &[]).is_err());
    }
}
