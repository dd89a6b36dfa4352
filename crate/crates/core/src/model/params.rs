use rand::Rng;

use super::tensor::Tensor;
use super::{Architecture, FusionMode};
use crate::gazetteer::CODES;

/// Two-layer tagger: `tanh(x·w1 + b1)·w2 + b2`, hidden width equal to the
/// input width.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Mlp {
        Mlp {
            w1: Tensor::glorot(input, input, rng),
            b1: Tensor::zeros(&[input]),
            w2: Tensor::glorot(input, output, rng),
            b2: Tensor::zeros(&[output]),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.shape()[0]
    }
}

/// One transformer-style block: windowed single-head self-attention and a
/// tanh feed-forward layer, each with a residual connection and layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParameters {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ff1_w: Tensor,
    pub ff1_b: Tensor,
    pub ff2_w: Tensor,
    pub ff2_b: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

impl EncoderParameters {
    fn new<R: Rng>(h: usize, ffn: usize, rng: &mut R) -> EncoderParameters {
        EncoderParameters {
            wq: Tensor::glorot(h, h, rng),
            bq: Tensor::zeros(&[h]),
            wk: Tensor::glorot(h, h, rng),
            bk: Tensor::zeros(&[h]),
            wv: Tensor::glorot(h, h, rng),
            bv: Tensor::zeros(&[h]),
            wo: Tensor::glorot(h, h, rng),
            bo: Tensor::zeros(&[h]),
            ln1_gain: Tensor::filled(&[h], 1.0),
            ln1_bias: Tensor::zeros(&[h]),
            ff1_w: Tensor::glorot(h, ffn, rng),
            ff1_b: Tensor::zeros(&[ffn]),
            ff2_w: Tensor::glorot(ffn, h, rng),
            ff2_b: Tensor::zeros(&[h]),
            ln2_gain: Tensor::filled(&[h], 1.0),
            ln2_bias: Tensor::zeros(&[h]),
        }
    }
}

/// Every trainable tensor of a model. Gradients and optimizer moments use
/// the same structure.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub token_embeddings: Tensor,
    pub encoder: EncoderParameters,
    /// `M × K × d`
    pub gaz_embeddings: Option<Tensor>,
    pub tagger_r: Option<Mlp>,
    pub tagger_g: Option<Mlp>,
    pub tagger_rg: Option<Mlp>,
}

/// Parameter groups, addressed by the first component of a tensor name.
pub const GROUPS: &[&str] = &[
    "token_embeddings",
    "encoder",
    "gaz_embeddings",
    "tagger_r",
    "tagger_g",
    "tagger_rg",
];

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl ModelParameters {
    /// Fresh parameters for an architecture: fan-based uniform matrices, zero
    /// biases, unit layer-norm gains, Gaussian(σ = 0.1) gazetteer embeddings.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> ModelParameters {
        let h = arch.hidden;
        let token_embeddings = Tensor::glorot(arch.vocab, h, rng);
        let encoder = EncoderParameters::new(h, arch.ffn, rng);
        let mut p = ModelParameters {
            token_embeddings,
            encoder,
            gaz_embeddings: None,
            tagger_r: None,
            tagger_g: None,
            tagger_rg: None,
        };
        p.add_missing(arch, rng);
        p
    }

    /// Initializes whatever the architecture's mode needs and is not yet
    /// present, leaving existing tensors untouched.
    pub fn add_missing<R: Rng>(&mut self, arch: &Architecture, rng: &mut R) {
        let (h, g, c) = (arch.hidden, arch.gazetteers * arch.gaz_dim, arch.tags);
        if arch.mode != FusionMode::NerOnly && self.gaz_embeddings.is_none() {
            self.gaz_embeddings = Some(Tensor::gaussian(&[arch.gazetteers, CODES, arch.gaz_dim], 0.1, rng));
        }
        match arch.mode {
            FusionMode::NerOnly => {
                if self.tagger_r.is_none() {
                    self.tagger_r = Some(Mlp::new(h, c, rng));
                }
            }
            FusionMode::Late => {
                if self.tagger_r.is_none() {
                    self.tagger_r = Some(Mlp::new(h, c, rng));
                }
                if self.tagger_g.is_none() {
                    self.tagger_g = Some(Mlp::new(g, c, rng));
                }
            }
            FusionMode::Early => {
                if self.tagger_rg.is_none() {
                    self.tagger_rg = Some(Mlp::new(h + g, c, rng));
                }
            }
        }
    }

    pub fn zeros_like(&self) -> ModelParameters {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        z
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let e = &self.encoder;
        let mut v: Vec<(&'static str, &Tensor)> = vec![
            ("token_embeddings", &self.token_embeddings),
            ("encoder.wq", &e.wq),
            ("encoder.bq", &e.bq),
            ("encoder.wk", &e.wk),
            ("encoder.bk", &e.bk),
            ("encoder.wv", &e.wv),
            ("encoder.bv", &e.bv),
            ("encoder.wo", &e.wo),
            ("encoder.bo", &e.bo),
            ("encoder.ln1_gain", &e.ln1_gain),
            ("encoder.ln1_bias", &e.ln1_bias),
            ("encoder.ff1_w", &e.ff1_w),
            ("encoder.ff1_b", &e.ff1_b),
            ("encoder.ff2_w", &e.ff2_w),
            ("encoder.ff2_b", &e.ff2_b),
            ("encoder.ln2_gain", &e.ln2_gain),
            ("encoder.ln2_bias", &e.ln2_bias),
        ];
        if let Some(t) = &self.gaz_embeddings {
            v.push(("gaz_embeddings", t));
        }
        for (names, mlp) in [
            (
                ["tagger_r.w1", "tagger_r.b1", "tagger_r.w2", "tagger_r.b2"],
                &self.tagger_r,
            ),
            (
                ["tagger_g.w1", "tagger_g.b1", "tagger_g.w2", "tagger_g.b2"],
                &self.tagger_g,
            ),
            (
                ["tagger_rg.w1", "tagger_rg.b1", "tagger_rg.w2", "tagger_rg.b2"],
                &self.tagger_rg,
            ),
        ] {
            if let Some(m) = mlp {
                v.extend([
                    (names[0], &m.w1),
                    (names[1], &m.b1),
                    (names[2], &m.w2),
                    (names[3], &m.b2),
                ]);
            }
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let e = &mut self.encoder;
        let mut v: Vec<(&'static str, &mut Tensor)> = vec![
            ("token_embeddings", &mut self.token_embeddings),
            ("encoder.wq", &mut e.wq),
            ("encoder.bq", &mut e.bq),
            ("encoder.wk", &mut e.wk),
            ("encoder.bk", &mut e.bk),
            ("encoder.wv", &mut e.wv),
            ("encoder.bv", &mut e.bv),
            ("encoder.wo", &mut e.wo),
            ("encoder.bo", &mut e.bo),
            ("encoder.ln1_gain", &mut e.ln1_gain),
            ("encoder.ln1_bias", &mut e.ln1_bias),
            ("encoder.ff1_w", &mut e.ff1_w),
            ("encoder.ff1_b", &mut e.ff1_b),
            ("encoder.ff2_w", &mut e.ff2_w),
            ("encoder.ff2_b", &mut e.ff2_b),
            ("encoder.ln2_gain", &mut e.ln2_gain),
            ("encoder.ln2_bias", &mut e.ln2_bias),
        ];
        if let Some(t) = &mut self.gaz_embeddings {
            v.push(("gaz_embeddings", t));
        }
        for (names, mlp) in [
            (
                ["tagger_r.w1", "tagger_r.b1", "tagger_r.w2", "tagger_r.b2"],
                &mut self.tagger_r,
            ),
            (
                ["tagger_g.w1", "tagger_g.b1", "tagger_g.w2", "tagger_g.b2"],
                &mut self.tagger_g,
            ),
            (
                ["tagger_rg.w1", "tagger_rg.b1", "tagger_rg.w2", "tagger_rg.b2"],
                &mut self.tagger_rg,
            ),
        ] {
            if let Some(m) = mlp {
                let Mlp { w1, b1, w2, b2 } = m;
                v.extend([(names[0], w1), (names[1], b1), (names[2], w2), (names[3], b2)]);
            }
        }
        v
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors_mut().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Global L2 norm over the tensors accepted by `include`.
    pub fn norm(&self, include: impl Fn(&str) -> bool) -> f64 {
        self.tensors()
            .iter()
            .filter(|(n, _)| include(n))
            .flat_map(|(_, t)| t.data().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}
