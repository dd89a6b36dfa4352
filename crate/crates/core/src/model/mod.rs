//! The differentiable model: token encoder, gazetteer branch, taggers,
//! fusion, and the analytic backward pass.
//!
//! ```text
//! r_t   = Encoder(x)_t                      token branch
//! Eg_t  = [E[0][z0_t]; ...; E[M-1][zM-1_t]] gazetteer branch
//! g_t   = Σ_{|t-t'|<=w} softmax_t'(Eg_t·Eg_t' / sqrt(M·d)) Eg_t'
//!
//! ner_only: y_t = softmax(Tagger_R(r_t))
//! early:    y_t = softmax(Tagger_RG([r_t ; g_t]))
//! late:     y_t = softmax(max(Tagger_R(r_t), Tagger_G(g_t)))
//! ```
//!
//! Everything is `f64`. Gradients of the late-fusion max go to the NER
//! branch on exact ties.

pub mod attention;
pub mod checkpoint;
pub mod params;
pub mod tensor;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{repair, Corpus, Sentence, TagId, TagScheme};
use crate::error::{Error, Result};
use crate::gazetteer::{GazetteerAnnotation, GazetteerSet};
use attention::{
    attend, attend_backward, gazetteer_attention, gazetteer_attention_backward, lookup_gazetteer_embedding,
    lookup_gazetteer_embedding_backward, AttentionWeights,
};
pub use params::{group_of, EncoderParameters, Mlp, ModelParameters, GROUPS};
pub use tensor::Tensor;
use tensor::{
    layer_norm, layer_norm_backward, linear, linear_backward, sinusoidal_positions, softmax, LayerNormCache, Mat,
};
pub use vocab::{Vocab, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionMode {
    NerOnly,
    Early,
    Late,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::NerOnly => "ner_only",
            FusionMode::Early => "early",
            FusionMode::Late => "late",
        }
    }

    pub fn uses_gazetteers(self) -> bool {
        self != FusionMode::NerOnly
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ner_only" => Ok(FusionMode::NerOnly),
            "early" => Ok(FusionMode::Early),
            "late" => Ok(FusionMode::Late),
            _ => Err(Error::Config(format!(
                "unknown fusion mode {s:?} (ner_only|early|late)"
            ))),
        }
    }
}

/// Denominator of the gazetteer attention scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionScale {
    /// sqrt(M·d), the width of the attended vectors
    Full,
    /// sqrt(d)
    PerGazetteer,
}

/// Value operand of the gazetteer attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionValue {
    /// weights applied to the window rows `Eg_t'`
    Window,
    /// weights applied to the query row `Eg_t`; the output is `Eg_t` itself
    Query,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub mode: FusionMode,
    pub attention: bool,
    pub vocab: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub encoder_window: usize,
    pub gazetteers: usize,
    pub gaz_dim: usize,
    pub gaz_window: usize,
    pub tags: usize,
    pub scale: AttentionScale,
    pub value: AttentionValue,
}

impl Architecture {
    fn gaz_scale(&self) -> f64 {
        let width = match self.scale {
            AttentionScale::Full => self.gazetteers * self.gaz_dim,
            AttentionScale::PerGazetteer => self.gaz_dim,
        };
        1.0 / (width as f64).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.ffn == 0 || self.max_len == 0 || self.vocab == 0 || self.tags == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.mode.uses_gazetteers() && (self.gazetteers == 0 || self.gaz_dim == 0) {
            return Err(Error::Config("fusion needs at least one gazetteer and d >= 1".into()));
        }
        Ok(())
    }
}

/// Stochastic perturbations applied during training.
pub struct Noise<'a> {
    pub dropout: f64,
    /// probability of replacing a token id by the unknown id
    pub word_dropout: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Per-token output of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenPrediction {
    /// `o^r_t`; absent in early fusion
    pub ner_logits: Option<Vec<f64>>,
    /// `o^g_t`; present in late fusion only
    pub gaz_logits: Option<Vec<f64>>,
    /// logits fed to the final softmax
    pub fused_logits: Vec<f64>,
    pub distribution: Vec<f64>,
    pub tag: TagId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub tokens: Vec<TokenPrediction>,
}

impl Prediction {
    pub fn tags(&self) -> Vec<TagId> {
        self.tokens.iter().map(|t| t.tag).collect()
    }
}

/// A training instance with precomputed ids and gazetteer codes.
#[derive(Clone, Debug)]
pub struct Example {
    pub ids: Vec<usize>,
    pub annotation: Option<GazetteerAnnotation>,
    pub gold: Vec<TagId>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub arch: Architecture,
    pub vocab: Vocab,
    pub scheme: TagScheme,
    pub gazetteer_names: Vec<String>,
    pub params: ModelParameters,
    positions: Mat,
}

struct EncoderTrace {
    ids: Vec<usize>,
    mask_in: Option<Vec<f64>>,
    x_in: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    attn: AttentionWeights,
    ctx: Mat,
    ln1: LayerNormCache,
    x1: Mat,
    ff_act: Mat,
    ln2: LayerNormCache,
    mask_r: Option<Vec<f64>>,
    r_out: Mat,
}

struct GazTrace {
    eg: Mat,
    attn: Option<AttentionWeights>,
    mask_g: Option<Vec<f64>>,
    g_out: Mat,
}

struct MlpTrace {
    x: Mat,
    hidden: Mat,
    out: Mat,
}

struct Trace {
    enc: EncoderTrace,
    gaz: Option<GazTrace>,
    tagger_r: Option<MlpTrace>,
    tagger_g: Option<MlpTrace>,
    tagger_rg: Option<MlpTrace>,
    logits: Mat,
}

fn mlp_forward(m: &Mlp, x: Mat) -> MlpTrace {
    let hidden = linear(&x, &m.w1, &m.b1).map(f64::tanh);
    let out = linear(&hidden, &m.w2, &m.b2);
    MlpTrace { x, hidden, out }
}

fn mlp_backward(m: &Mlp, trace: &MlpTrace, dout: &Mat, grad: &mut Mlp) -> Mat {
    let dhidden = linear_backward(&trace.hidden, &m.w2, dout, &mut grad.w2, &mut grad.b2);
    let dpre = Mat {
        rows: dhidden.rows,
        cols: dhidden.cols,
        data: dhidden
            .data
            .iter()
            .zip(&trace.hidden.data)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect(),
    };
    linear_backward(&trace.x, &m.w1, &dpre, &mut grad.w1, &mut grad.b1)
}

fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

fn apply_mask(x: &Mat, mask: &Option<Vec<f64>>) -> Mat {
    match mask {
        Some(m) => Mat {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().zip(m).map(|(a, b)| a * b).collect(),
        },
        None => x.clone(),
    }
}

impl Model {
    pub fn new<R: Rng>(
        arch: Architecture,
        vocab: Vocab,
        scheme: TagScheme,
        gazetteer_names: Vec<String>,
        rng: &mut R,
    ) -> Result<Model> {
        let params = ModelParameters::init(&arch, rng);
        Model::from_parts(arch, vocab, scheme, gazetteer_names, params)
    }

    pub fn from_parts(
        arch: Architecture,
        vocab: Vocab,
        scheme: TagScheme,
        gazetteer_names: Vec<String>,
        params: ModelParameters,
    ) -> Result<Model> {
        arch.validate()?;
        if arch.vocab != vocab.len() || arch.tags != scheme.len() {
            return Err(Error::Schema(format!(
                "architecture expects vocab {} / tags {}, got {} / {}",
                arch.vocab,
                arch.tags,
                vocab.len(),
                scheme.len()
            )));
        }
        if arch.mode.uses_gazetteers() && gazetteer_names.len() != arch.gazetteers {
            return Err(Error::Schema(format!(
                "architecture expects {} gazetteers, got {}",
                arch.gazetteers,
                gazetteer_names.len()
            )));
        }
        let needed = match arch.mode {
            FusionMode::NerOnly => params.tagger_r.is_some(),
            FusionMode::Late => {
                params.tagger_r.is_some() && params.tagger_g.is_some() && params.gaz_embeddings.is_some()
            }
            FusionMode::Early => params.tagger_rg.is_some() && params.gaz_embeddings.is_some(),
        };
        if !needed {
            return Err(Error::Schema(format!(
                "parameters lack tensors required by {} mode",
                arch.mode
            )));
        }
        let positions = sinusoidal_positions(arch.max_len, arch.hidden);
        Ok(Model {
            arch,
            vocab,
            scheme,
            gazetteer_names,
            params,
            positions,
        })
    }

    pub fn mode(&self) -> FusionMode {
        self.arch.mode
    }

    /// Switches to another fusion mode, keeping every existing tensor and
    /// initializing the ones the new mode adds.
    pub fn extend_to<R: Rng>(
        &self,
        mode: FusionMode,
        attention: bool,
        gazetteers: &[String],
        rng: &mut R,
    ) -> Result<Model> {
        let mut arch = self.arch.clone();
        arch.mode = mode;
        arch.attention = attention;
        let names = if self.gazetteer_names.is_empty() {
            gazetteers.to_vec()
        } else if gazetteers.is_empty() || gazetteers == self.gazetteer_names.as_slice() {
            self.gazetteer_names.clone()
        } else {
            return Err(Error::Schema(format!(
                "model was built for gazetteers {:?}, got {:?}",
                self.gazetteer_names, gazetteers
            )));
        };
        arch.gazetteers = names.len();
        let mut params = self.params.clone();
        params.add_missing(&arch, rng);
        Model::from_parts(arch, self.vocab.clone(), self.scheme.clone(), names, params)
    }

    /// The NER branch of a late-fusion model on its own. Consumes no
    /// gazetteer input.
    pub fn unplug_gazetteer(&self) -> Result<Model> {
        if self.arch.mode != FusionMode::Late {
            return Err(Error::Invalid(format!(
                "only a late-fusion model has a separable NER branch (this one is {})",
                self.arch.mode
            )));
        }
        let mut arch = self.arch.clone();
        arch.mode = FusionMode::NerOnly;
        arch.attention = false;
        let mut params = self.params.clone();
        params.gaz_embeddings = None;
        params.tagger_g = None;
        Model::from_parts(
            arch,
            self.vocab.clone(),
            self.scheme.clone(),
            self.gazetteer_names.clone(),
            params,
        )
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.arch.max_len {
            return Err(Error::Invalid(format!(
                "sentence of {len} tokens exceeds max_len {}",
                self.arch.max_len
            )));
        }
        Ok(())
    }

    fn encoder_forward(&self, ids: &[usize], noise: &mut Option<Noise<'_>>) -> EncoderTrace {
        let p = &self.params;
        let e = &p.encoder;
        let h = self.arch.hidden;
        let len = ids.len();
        let ids: Vec<usize> = match noise {
            Some(n) if n.word_dropout > 0.0 => ids
                .iter()
                .map(|&id| if n.rng.gen::<f64>() < n.word_dropout { UNK } else { id })
                .collect(),
            _ => ids.to_vec(),
        };
        let mut x0 = Mat::zeros(len, h);
        for (t, &id) in ids.iter().enumerate() {
            let row = x0.row_mut(t);
            for ((o, &emb), &pos) in row
                .iter_mut()
                .zip(p.token_embeddings.row(id))
                .zip(self.positions.row(t))
            {
                *o = emb + pos;
            }
        }
        let mask_in = match noise {
            Some(n) if n.dropout > 0.0 => Some(dropout_mask(len * h, n.dropout, n.rng)),
            _ => None,
        };
        let x_in = apply_mask(&x0, &mask_in);
        let q = linear(&x_in, &e.wq, &e.bq);
        let k = linear(&x_in, &e.wk, &e.bk);
        let v = linear(&x_in, &e.wv, &e.bv);
        let (ctx, attn) = attend(&q, &k, &v, self.arch.encoder_window, 1.0 / (h as f64).sqrt());
        let a = linear(&ctx, &e.wo, &e.bo);
        let (x1, ln1) = layer_norm(&x_in.add(&a), &e.ln1_gain, &e.ln1_bias);
        let ff_act = linear(&x1, &e.ff1_w, &e.ff1_b).map(f64::tanh);
        let f2 = linear(&ff_act, &e.ff2_w, &e.ff2_b);
        let (r, ln2) = layer_norm(&x1.add(&f2), &e.ln2_gain, &e.ln2_bias);
        let mask_r = match noise {
            Some(n) if n.dropout > 0.0 => Some(dropout_mask(len * h, n.dropout, n.rng)),
            _ => None,
        };
        let r_out = apply_mask(&r, &mask_r);
        EncoderTrace {
            ids,
            mask_in,
            x_in,
            q,
            k,
            v,
            attn,
            ctx,
            ln1,
            x1,
            ff_act,
            ln2,
            mask_r,
            r_out,
        }
    }

    fn encoder_backward(&self, tr: &EncoderTrace, dr_out: &Mat, grads: &mut ModelParameters) {
        let e = &self.params.encoder;
        let h = self.arch.hidden;
        let g = &mut grads.encoder;
        let dr = apply_mask(dr_out, &tr.mask_r);
        let du2 = layer_norm_backward(&tr.ln2, &e.ln2_gain, &dr, &mut g.ln2_gain, &mut g.ln2_bias);
        let dff_act = linear_backward(&tr.ff_act, &e.ff2_w, &du2, &mut g.ff2_w, &mut g.ff2_b);
        let dff_pre = dff_act.hadamard(&tr.ff_act.map(|a| 1.0 - a * a));
        let mut dx1 = linear_backward(&tr.x1, &e.ff1_w, &dff_pre, &mut g.ff1_w, &mut g.ff1_b);
        dx1.add_assign(&du2);
        let du1 = layer_norm_backward(&tr.ln1, &e.ln1_gain, &dx1, &mut g.ln1_gain, &mut g.ln1_bias);
        let dctx = linear_backward(&tr.ctx, &e.wo, &du1, &mut g.wo, &mut g.bo);
        let (dq, dk, dv) = attend_backward(&tr.q, &tr.k, &tr.v, &tr.attn, &dctx, 1.0 / (h as f64).sqrt());
        let mut dx_in = du1;
        dx_in.add_assign(&linear_backward(&tr.x_in, &e.wq, &dq, &mut g.wq, &mut g.bq));
        dx_in.add_assign(&linear_backward(&tr.x_in, &e.wk, &dk, &mut g.wk, &mut g.bk));
        dx_in.add_assign(&linear_backward(&tr.x_in, &e.wv, &dv, &mut g.wv, &mut g.bv));
        let dx0 = apply_mask(&dx_in, &tr.mask_in);
        for (t, &id) in tr.ids.iter().enumerate() {
            let row = grads.token_embeddings.row_mut(id);
            for (a, &b) in row.iter_mut().zip(dx0.row(t)) {
                *a += b;
            }
        }
    }

    fn gazetteer_forward(&self, annotation: &GazetteerAnnotation, noise: &mut Option<Noise<'_>>) -> GazTrace {
        let table = self
            .params
            .gaz_embeddings
            .as_ref()
            .expect("gazetteer embeddings present");
        let eg = lookup_gazetteer_embedding(table, annotation);
        let (g, attn) = if self.arch.attention {
            let (g, attn) = gazetteer_attention(&eg, self.arch.gaz_window, self.arch.gaz_scale());
            match self.arch.value {
                AttentionValue::Window => (g, Some(attn)),
                AttentionValue::Query => (eg.clone(), None),
            }
        } else {
            (eg.clone(), None)
        };
        let mask_g = match noise {
            Some(n) if n.dropout > 0.0 => Some(dropout_mask(g.data.len(), n.dropout, n.rng)),
            _ => None,
        };
        let g_out = apply_mask(&g, &mask_g);
        GazTrace {
            eg,
            attn,
            mask_g,
            g_out,
        }
    }

    fn gazetteer_backward(
        &self,
        tr: &GazTrace,
        annotation: &GazetteerAnnotation,
        dg_out: &Mat,
        grads: &mut ModelParameters,
    ) {
        let dg = apply_mask(dg_out, &tr.mask_g);
        let deg = match &tr.attn {
            Some(attn) => gazetteer_attention_backward(&tr.eg, attn, &dg, self.arch.gaz_scale()),
            None => dg,
        };
        let dtable = grads.gaz_embeddings.as_mut().expect("gazetteer embedding gradient");
        lookup_gazetteer_embedding_backward(annotation, &deg, dtable);
    }

    fn check_annotation(&self, len: usize, annotation: Option<&GazetteerAnnotation>) -> Result<()> {
        if !self.arch.mode.uses_gazetteers() {
            return Ok(());
        }
        let a =
            annotation.ok_or_else(|| Error::Schema(format!("{} mode needs a gazetteer annotation", self.arch.mode)))?;
        if a.gazetteers() != self.arch.gazetteers || (a.len() != len && len > 0) {
            return Err(Error::Schema(format!(
                "annotation is {}×{}, expected {}×{len}",
                a.gazetteers(),
                a.len(),
                self.arch.gazetteers
            )));
        }
        Ok(())
    }

    fn forward_trace(
        &self,
        ids: &[usize],
        annotation: Option<&GazetteerAnnotation>,
        mut noise: Option<Noise<'_>>,
    ) -> Result<Trace> {
        self.check_len(ids.len())?;
        self.check_annotation(ids.len(), annotation)?;
        let p = &self.params;
        let enc = self.encoder_forward(ids, &mut noise);
        let gaz = match self.arch.mode {
            FusionMode::NerOnly => None,
            _ => Some(self.gazetteer_forward(annotation.unwrap(), &mut noise)),
        };
        let mut trace = Trace {
            enc,
            gaz,
            tagger_r: None,
            tagger_g: None,
            tagger_rg: None,
            logits: Mat::zeros(0, 0),
        };
        match self.arch.mode {
            FusionMode::NerOnly => {
                let r = mlp_forward(p.tagger_r.as_ref().unwrap(), trace.enc.r_out.clone());
                trace.logits = r.out.clone();
                trace.tagger_r = Some(r);
            }
            FusionMode::Early => {
                let x = trace.enc.r_out.concat_cols(&trace.gaz.as_ref().unwrap().g_out);
                let rg = mlp_forward(p.tagger_rg.as_ref().unwrap(), x);
                trace.logits = rg.out.clone();
                trace.tagger_rg = Some(rg);
            }
            FusionMode::Late => {
                let r = mlp_forward(p.tagger_r.as_ref().unwrap(), trace.enc.r_out.clone());
                let g = mlp_forward(p.tagger_g.as_ref().unwrap(), trace.gaz.as_ref().unwrap().g_out.clone());
                trace.logits = Mat {
                    rows: r.out.rows,
                    cols: r.out.cols,
                    data: r.out.data.iter().zip(&g.out.data).map(|(&a, &b)| a.max(b)).collect(),
                };
                trace.tagger_r = Some(r);
                trace.tagger_g = Some(g);
            }
        }
        Ok(trace)
    }

    fn backward(
        &self,
        trace: &Trace,
        annotation: Option<&GazetteerAnnotation>,
        dlogits: &Mat,
        grads: &mut ModelParameters,
    ) {
        let p = &self.params;
        match self.arch.mode {
            FusionMode::NerOnly => {
                let tr = trace.tagger_r.as_ref().unwrap();
                let dr = mlp_backward(
                    p.tagger_r.as_ref().unwrap(),
                    tr,
                    dlogits,
                    grads.tagger_r.as_mut().unwrap(),
                );
                self.encoder_backward(&trace.enc, &dr, grads);
            }
            FusionMode::Early => {
                let tr = trace.tagger_rg.as_ref().unwrap();
                let dx = mlp_backward(
                    p.tagger_rg.as_ref().unwrap(),
                    tr,
                    dlogits,
                    grads.tagger_rg.as_mut().unwrap(),
                );
                let (dr, dg) = dx.split_cols(self.arch.hidden);
                self.gazetteer_backward(trace.gaz.as_ref().unwrap(), annotation.unwrap(), &dg, grads);
                self.encoder_backward(&trace.enc, &dr, grads);
            }
            FusionMode::Late => {
                let tr_r = trace.tagger_r.as_ref().unwrap();
                let tr_g = trace.tagger_g.as_ref().unwrap();
                let mut d_or = Mat::zeros(dlogits.rows, dlogits.cols);
                let mut d_og = Mat::zeros(dlogits.rows, dlogits.cols);
                for i in 0..dlogits.data.len() {
                    // ties route to the NER branch
                    if tr_r.out.data[i] >= tr_g.out.data[i] {
                        d_or.data[i] = dlogits.data[i];
                    } else {
                        d_og.data[i] = dlogits.data[i];
                    }
                }
                let dg = mlp_backward(
                    p.tagger_g.as_ref().unwrap(),
                    tr_g,
                    &d_og,
                    grads.tagger_g.as_mut().unwrap(),
                );
                self.gazetteer_backward(trace.gaz.as_ref().unwrap(), annotation.unwrap(), &dg, grads);
                let dr = mlp_backward(
                    p.tagger_r.as_ref().unwrap(),
                    tr_r,
                    &d_or,
                    grads.tagger_r.as_mut().unwrap(),
                );
                self.encoder_backward(&trace.enc, &dr, grads);
            }
        }
    }

    /// Encoder output `r`, `T × h`. Dropout applies only when `noise` is given.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], noise: Option<Noise<'_>>) -> Result<Mat> {
        self.check_len(tokens.len())?;
        if tokens.is_empty() {
            return Ok(Mat::zeros(0, self.arch.hidden));
        }
        let ids = self.vocab.ids(tokens);
        let mut noise = noise;
        Ok(self.encoder_forward(&ids, &mut noise).r_out)
    }

    pub fn forward_ids(&self, ids: &[usize], annotation: Option<&GazetteerAnnotation>) -> Result<Prediction> {
        if ids.is_empty() {
            self.check_annotation(0, annotation)?;
            return Ok(Prediction { tokens: Vec::new() });
        }
        let trace = self.forward_trace(ids, annotation, None)?;
        Ok(self.prediction_of(&trace))
    }

    /// Evaluation-mode forward pass over raw tokens.
    pub fn forward<S: AsRef<str>>(&self, tokens: &[S], annotation: Option<&GazetteerAnnotation>) -> Result<Prediction> {
        self.forward_ids(&self.vocab.ids(tokens), annotation)
    }

    /// Annotates with `gazetteers` (when the mode uses them) and predicts.
    pub fn predict<S: AsRef<str>>(&self, tokens: &[S], gazetteers: Option<&GazetteerSet>) -> Result<Prediction> {
        let annotation = self.annotate(tokens, gazetteers)?;
        self.forward(tokens, annotation.as_ref())
    }

    pub fn annotate<S: AsRef<str>>(
        &self,
        tokens: &[S],
        gazetteers: Option<&GazetteerSet>,
    ) -> Result<Option<GazetteerAnnotation>> {
        if !self.arch.mode.uses_gazetteers() {
            return Ok(None);
        }
        let set = gazetteers.ok_or_else(|| Error::Schema(format!("{} mode needs gazetteers", self.arch.mode)))?;
        self.check_gazetteers(set)?;
        Ok(Some(set.annotate(tokens)))
    }

    /// Gazetteer sets must match the trained set's names and order.
    pub fn check_gazetteers(&self, set: &GazetteerSet) -> Result<()> {
        if set.names() != self.gazetteer_names {
            return Err(Error::Schema(format!(
                "model was trained with gazetteers {:?}, got {:?}",
                self.gazetteer_names,
                set.names()
            )));
        }
        Ok(())
    }

    /// Predicts every sentence of a corpus; the result carries repaired
    /// predicted tags.
    pub fn predict_corpus(&self, corpus: &Corpus, gazetteers: Option<&GazetteerSet>) -> Result<Corpus> {
        let scheme = &self.scheme;
        let sentences = corpus
            .sentences
            .iter()
            .map(|s| {
                let pred = self.predict(&s.tokens, gazetteers)?;
                Ok(Sentence::labeled(s.tokens.clone(), repair(&pred.tags(), scheme)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::new(corpus.name.clone(), scheme.clone(), sentences))
    }

    fn prediction_of(&self, trace: &Trace) -> Prediction {
        let logits = &trace.logits;
        let tokens = (0..logits.rows)
            .map(|t| {
                let fused = logits.row(t).to_vec();
                let distribution = softmax(&fused);
                let tag = argmax(&distribution);
                TokenPrediction {
                    ner_logits: trace.tagger_r.as_ref().map(|r| r.out.row(t).to_vec()),
                    gaz_logits: trace.tagger_g.as_ref().map(|g| g.out.row(t).to_vec()),
                    fused_logits: fused,
                    distribution,
                    tag,
                }
            })
            .collect();
        Prediction { tokens }
    }

    /// Mean token cross-entropy over a batch and its gradient.
    pub fn loss_and_gradients(
        &self,
        batch: &[Example],
        mut noise: Option<Noise<'_>>,
    ) -> Result<(f64, ModelParameters)> {
        let mut grads = self.params.zeros_like();
        let tokens: usize = batch.iter().map(|e| e.ids.len()).sum();
        if tokens == 0 {
            return Err(Error::Invalid("batch has no tokens".into()));
        }
        let n = tokens as f64;
        let mut loss = 0.0;
        for ex in batch {
            if ex.ids.is_empty() {
                continue;
            }
            if ex.gold.len() != ex.ids.len() {
                return Err(Error::Schema("gold tags and tokens differ in length".into()));
            }
            let sub = noise.as_mut().map(|n| Noise {
                dropout: n.dropout,
                word_dropout: n.word_dropout,
                rng: &mut *n.rng,
            });
            let trace = self.forward_trace(&ex.ids, ex.annotation.as_ref(), sub)?;
            let mut dlogits = Mat::zeros(trace.logits.rows, trace.logits.cols);
            for (t, &gold) in ex.gold.iter().enumerate() {
                let y = softmax(trace.logits.row(t));
                loss -= y[gold].ln();
                let d = dlogits.row_mut(t);
                for c in 0..y.len() {
                    d[c] = (y[c] - if c == gold { 1.0 } else { 0.0 }) / n;
                }
            }
            self.backward(&trace, ex.annotation.as_ref(), &dlogits, &mut grads);
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                loss,
                sentences: batch.len(),
                tokens,
            });
        }
        Ok((loss, grads))
    }

    /// Converts labeled sentences into training examples.
    pub fn examples(&self, corpus: &Corpus, gazetteers: Option<&GazetteerSet>) -> Result<Vec<Example>> {
        corpus
            .sentences
            .iter()
            .map(|s| {
                let gold = s
                    .tags
                    .clone()
                    .ok_or_else(|| Error::Invalid("training sentences need gold tags".into()))?;
                self.check_len(s.len())?;
                Ok(Example {
                    ids: self.vocab.ids(&s.tokens),
                    annotation: self.annotate(&s.tokens, gazetteers)?,
                    gold,
                })
            })
            .collect()
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::Iobes;
    use rand::SeedableRng;

    pub(crate) fn tiny(mode: FusionMode, attention: bool) -> Model {
        let scheme = TagScheme::new(&["M"]).unwrap();
        let vocab = Vocab::from_tokens(["take", "sodium", "daily", "now"].map(String::from));
        let arch = Architecture {
            mode,
            attention,
            vocab: vocab.len(),
            hidden: 4,
            ffn: 6,
            max_len: 16,
            encoder_window: 2,
            gazetteers: 2,
            gaz_dim: 2,
            gaz_window: 1,
            tags: scheme.len(),
            scale: AttentionScale::Full,
            value: AttentionValue::Window,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Model::new(arch, vocab, scheme, vec!["a".into(), "b".into()], &mut rng).unwrap()
    }

    fn ann(len: usize) -> GazetteerAnnotation {
        let mut a = GazetteerAnnotation::outside(2, len);
        a.codes[0][1] = Iobes::S;
        a
    }

    #[test]
    fn too_long_sentence_is_an_error() {
        let m = tiny(FusionMode::NerOnly, false);
        let toks = vec!["take"; 17];
        assert!(m.forward(&toks, None).is_err());
    }

    #[test]
    fn encode_shape_and_eval_determinism() {
        let m = tiny(FusionMode::NerOnly, false);
        let r = m.encode(&["sodium"], None).unwrap();
        assert_eq!((r.rows, r.cols), (1, 4));
        let mut rng1 = ChaCha8Rng::seed_from_u64(1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let a = m
            .encode(
                &["take", "sodium"],
                Some(Noise {
                    dropout: 0.5,
                    word_dropout: 0.0,
                    rng: &mut rng1,
                }),
            )
            .unwrap();
        let b = m
            .encode(
                &["take", "sodium"],
                Some(Noise {
                    dropout: 0.5,
                    word_dropout: 0.0,
                    rng: &mut rng2,
                }),
            )
            .unwrap();
        assert_eq!(a, b);
        let e1 = m.encode(&["take", "sodium"], None).unwrap();
        assert_ne!(a, e1);
    }

    #[test]
    fn distributions_sum_to_one() {
        for mode in [FusionMode::NerOnly, FusionMode::Early, FusionMode::Late] {
            let m = tiny(mode, true);
            let p = m.forward(&["take", "sodium", "now"], Some(&ann(3))).unwrap();
            for t in &p.tokens {
                assert!((t.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            assert_eq!(p.tokens[0].gaz_logits.is_some(), mode == FusionMode::Late);
            assert_eq!(p.tokens[0].ner_logits.is_some(), mode != FusionMode::Early);
        }
    }

    #[test]
    fn unplug_rules() {
        assert!(tiny(FusionMode::Early, true).unplug_gazetteer().is_err());
        assert!(tiny(FusionMode::NerOnly, true).unplug_gazetteer().is_err());
        let late = tiny(FusionMode::Late, true);
        let r = late.unplug_gazetteer().unwrap();
        assert_eq!(r.params.tagger_r, late.params.tagger_r);
        assert_eq!(r.params.encoder, late.params.encoder);
        let p = r.forward(&["take", "sodium"], None).unwrap();
        let full = late.forward(&["take", "sodium"], Some(&ann(2))).unwrap();
        for (a, b) in p.tokens.iter().zip(&full.tokens) {
            assert_eq!(a.ner_logits, b.ner_logits);
        }
    }

    #[test]
    fn annotation_shape_is_checked() {
        let m = tiny(FusionMode::Late, true);
        assert!(m.forward(&["take"], None).is_err());
        assert!(m
            .forward(&["take", "now"], Some(&GazetteerAnnotation::outside(1, 2)))
            .is_err());
    }
}
