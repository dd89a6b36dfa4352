//! Mini-batch Adam training with dropout, gradient clipping, parameter
//! freezing and early stopping on dev micro-F1.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::gazetteer::GazetteerSet;
use crate::kv::{parse_bool, KeyValues};
use crate::model::{
    group_of, Architecture, AttentionScale, AttentionValue, FusionMode, Model, ModelParameters, Noise, Vocab, GROUPS,
};
use crate::synth::mix;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    /// probability of replacing a training token by the unknown token
    pub word_dropout: f64,
    /// gazetteer embedding width `d`
    pub d: usize,
    /// gazetteer attention window `w`
    pub w: usize,
    pub h: usize,
    pub ffn: usize,
    pub encoder_window: usize,
    pub max_len: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub early_stopping: bool,
    pub seed: u64,
    pub mode: FusionMode,
    pub attention: bool,
    /// global gradient norm limit; 0 disables clipping
    pub clip_norm: f64,
    /// linear warmup length in optimizer steps; 0 disables warmup
    pub warmup_steps: usize,
    pub min_count: usize,
    pub attention_scale: AttentionScale,
    pub attention_value: AttentionValue,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            dropout: 0.1,
            word_dropout: 0.0,
            d: 8,
            w: 5,
            h: 64,
            ffn: 128,
            encoder_window: 64,
            max_len: 256,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            early_stopping: true,
            seed: 1,
            mode: FusionMode::Late,
            attention: true,
            clip_norm: 5.0,
            warmup_steps: 0,
            min_count: 1,
            attention_scale: AttentionScale::Full,
            attention_value: AttentionValue::Window,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "dropout",
    "word_dropout",
    "d",
    "w",
    "h",
    "ffn",
    "encoder_window",
    "max_len",
    "batch_size",
    "max_epochs",
    "patience",
    "early_stopping",
    "seed",
    "mode",
    "attention",
    "clip_norm",
    "warmup_steps",
    "min_count",
    "attention_scale",
    "attention_value",
];

fn scale_name(s: AttentionScale) -> &'static str {
    match s {
        AttentionScale::Full => "full",
        AttentionScale::PerGazetteer => "per_gazetteer",
    }
}

fn value_name(v: AttentionValue) -> &'static str {
    match v {
        AttentionValue::Window => "window",
        AttentionValue::Query => "query",
    }
}

impl TrainConfig {
    /// Reads the training keys of `kv` over the defaults. Keys outside
    /// [`TRAIN_KEYS`] are ignored here; callers that own the whole file
    /// reject them.
    pub fn from_kv(kv: &KeyValues) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            dropout: kv.parse_or("dropout", d.dropout)?,
            word_dropout: kv.parse_or("word_dropout", d.word_dropout)?,
            d: kv.parse_or("d", d.d)?,
            w: kv.parse_or("w", d.w)?,
            h: kv.parse_or("h", d.h)?,
            ffn: kv.parse_or("ffn", d.ffn)?,
            encoder_window: kv.parse_or("encoder_window", d.encoder_window)?,
            max_len: kv.parse_or("max_len", d.max_len)?,
            batch_size: kv.parse_or("batch_size", d.batch_size)?,
            max_epochs: kv.parse_or("max_epochs", d.max_epochs)?,
            patience: kv.parse_or("patience", d.patience)?,
            early_stopping: kv
                .get("early_stopping")
                .map(parse_bool)
                .transpose()?
                .unwrap_or(d.early_stopping),
            seed: kv.parse_or("seed", d.seed)?,
            mode: kv.parse_or("mode", d.mode)?,
            attention: kv.get("attention").map(parse_bool).transpose()?.unwrap_or(d.attention),
            clip_norm: kv.parse_or("clip_norm", d.clip_norm)?,
            warmup_steps: kv.parse_or("warmup_steps", d.warmup_steps)?,
            min_count: kv.parse_or("min_count", d.min_count)?,
            attention_scale: match kv.get("attention_scale") {
                None => d.attention_scale,
                Some("full") => AttentionScale::Full,
                Some("per_gazetteer") => AttentionScale::PerGazetteer,
                Some(v) => {
                    return Err(Error::Config(format!(
                        "attention_scale must be full|per_gazetteer, got {v:?}"
                    )))
                }
            },
            attention_value: match kv.get("attention_value") {
                None => d.attention_value,
                Some("window") => AttentionValue::Window,
                Some("query") => AttentionValue::Query,
                Some(v) => {
                    return Err(Error::Config(format!(
                        "attention_value must be window|query, got {v:?}"
                    )))
                }
            },
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("learning_rate", self.learning_rate);
        kv.set("dropout", self.dropout);
        kv.set("word_dropout", self.word_dropout);
        kv.set("d", self.d);
        kv.set("w", self.w);
        kv.set("h", self.h);
        kv.set("ffn", self.ffn);
        kv.set("encoder_window", self.encoder_window);
        kv.set("max_len", self.max_len);
        kv.set("batch_size", self.batch_size);
        kv.set("max_epochs", self.max_epochs);
        kv.set("patience", self.patience);
        kv.set("early_stopping", self.early_stopping);
        kv.set("seed", self.seed);
        kv.set("mode", self.mode);
        kv.set("attention", if self.attention { "on" } else { "off" });
        kv.set("clip_norm", self.clip_norm);
        kv.set("warmup_steps", self.warmup_steps);
        kv.set("min_count", self.min_count);
        kv.set("attention_scale", scale_name(self.attention_scale));
        kv.set("attention_value", value_name(self.attention_value));
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.word_dropout) {
            return bad("dropout and word_dropout must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.h == 0 || self.ffn == 0 || self.d == 0 {
            return bad("batch_size, max_epochs, h, ffn and d must be >= 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be >= 0");
        }
        Ok(())
    }

    pub fn architecture(&self, vocab: usize, gazetteers: usize, tags: usize) -> Architecture {
        Architecture {
            mode: self.mode,
            attention: self.attention,
            vocab,
            hidden: self.h,
            ffn: self.ffn,
            max_len: self.max_len,
            encoder_window: self.encoder_window,
            gazetteers,
            gaz_dim: self.d,
            gaz_window: self.w,
            tags,
            scale: self.attention_scale,
            value: self.attention_value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
    pub wall_time_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: Option<f64>,
    pub checkpoint: Option<String>,
    pub config: std::collections::BTreeMap<String, String>,
}

impl RunRecord {
    /// One JSON line per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch serializes") + "\n")
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

struct Adam {
    m: ModelParameters,
    v: ModelParameters,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(p: &ModelParameters) -> Adam {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParameters, grads: &ModelParameters, lr: f64, frozen: &BTreeSet<String>) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((name, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            if frozen.contains(group_of(name)) {
                continue;
            }
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Resolves freeze group names, rejecting unknown ones.
pub fn freeze_set<S: AsRef<str>>(names: &[S]) -> Result<BTreeSet<String>> {
    names
        .iter()
        .map(|n| {
            let n = n.as_ref().trim();
            if GROUPS.contains(&n) {
                Ok(n.to_string())
            } else {
                Err(Error::Config(format!(
                    "unknown parameter group {n:?} (known: {})",
                    GROUPS.join(", ")
                )))
            }
        })
        .collect()
}

/// Trains a fresh model.
pub fn train(
    config: &TrainConfig,
    train: &Corpus,
    dev: &Corpus,
    gazetteers: Option<&GazetteerSet>,
    freeze: &[String],
) -> Result<(Model, RunRecord)> {
    let vocab = Vocab::build([train], config.min_count);
    let names = gazetteers.map(|g| g.names()).unwrap_or_default();
    let arch = config.architecture(vocab.len(), names.len(), train.scheme.len());
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0x1D));
    let model = Model::new(arch, vocab, train.scheme.clone(), names, &mut rng)?;
    train_from(model, config, train, dev, gazetteers, freeze)
}

/// Continues training `model`. Its vocabulary and architecture are kept;
/// the optimizer state starts fresh.
pub fn train_from(
    mut model: Model,
    config: &TrainConfig,
    train: &Corpus,
    dev: &Corpus,
    gazetteers: Option<&GazetteerSet>,
    freeze: &[String],
) -> Result<(Model, RunRecord)> {
    config.validate()?;
    if train.is_empty() || train.token_count() == 0 {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    for c in [train, dev] {
        if c.scheme.entity_types() != model.scheme.entity_types() {
            return Err(Error::Schema(format!(
                "corpus {} has types {:?}, model has {:?}",
                c.name,
                c.scheme.entity_types(),
                model.scheme.entity_types()
            )));
        }
    }
    let frozen = freeze_set(freeze)?;
    let examples: Vec<_> = model
        .examples(train, gazetteers)?
        .into_iter()
        .filter(|e| !e.ids.is_empty())
        .collect();
    let mut adam = Adam::new(&model.params);
    let snapshot = config.to_kv();
    let mut record = RunRecord {
        seed: config.seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_f1: None,
        checkpoint: None,
        config: snapshot
            .keys()
            .map(|k| (k.to_string(), snapshot.get(k).unwrap_or_default().to_string()))
            .collect(),
    };
    let mut best: Option<(f64, ModelParameters)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(
            config.seed,
            0x5_0000 + epoch as u64,
        )));
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0xD_0000 + epoch as u64));
        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let tokens: usize = batch.iter().map(|e| e.ids.len()).sum();
            let noise = Noise {
                dropout: config.dropout,
                word_dropout: config.word_dropout,
                rng: &mut noise_rng,
            };
            let (loss, mut grads) = model.loss_and_gradients(&batch, Some(noise))?;
            loss_sum += loss * tokens as f64;
            token_sum += tokens;
            for (name, g) in grads.tensors_mut() {
                if frozen.contains(group_of(name)) {
                    g.fill(0.0);
                }
            }
            if config.clip_norm > 0.0 {
                let norm = grads.norm(|_| true);
                if norm > config.clip_norm {
                    let s = config.clip_norm / norm;
                    for (_, g) in grads.tensors_mut() {
                        g.data_mut().iter_mut().for_each(|x| *x *= s);
                    }
                }
            }
            let warm = if config.warmup_steps > 0 {
                ((adam.step + 1) as f64 / config.warmup_steps as f64).min(1.0)
            } else {
                1.0
            };
            adam.update(&mut model.params, &grads, config.learning_rate * warm, &frozen);
        }
        if !model.params.is_finite() {
            return Err(Error::NonFinite {
                loss: f64::NAN,
                sentences: examples.len(),
                tokens: token_sum,
            });
        }
        let train_loss = loss_sum / token_sum as f64;
        let dev_f1 = if dev.is_empty() {
            None
        } else {
            let pred = model.predict_corpus(dev, gazetteers)?;
            let f1 = evaluate(&pred, dev)?.micro_f1;
            if f1.is_nan() {
                return Err(Error::Invalid(format!("dev F1 is NaN after epoch {epoch}")));
            }
            Some(f1)
        };
        record.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_f1,
            wall_time_ms: started.elapsed().as_millis() as u64,
        });
        match dev_f1 {
            Some(f1) if best.as_ref().map_or(true, |(b, _)| f1 > *b) => {
                best = Some((f1, model.params.clone()));
                record.best_epoch = epoch;
                record.best_dev_f1 = Some(f1);
                since_best = 0;
            }
            Some(_) => since_best += 1,
            None => record.best_epoch = epoch,
        }
        if config.early_stopping && since_best >= config.patience {
            break;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, record))
}

/// Uniform sentence sample without replacement, in original order.
pub fn subsample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if fraction == 1.0 {
        return Ok(corpus.clone());
    }
    let n = (fraction * corpus.len() as f64).round() as usize;
    if n == 0 {
        return Err(Error::Invalid(format!(
            "fraction {fraction} of {} sentences is empty",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5AB));
    let mut idx = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    idx.sort_unstable();
    let sentences = idx.into_iter().map(|i| corpus.sentences[i].clone()).collect();
    Ok(Corpus::new(corpus.name.clone(), corpus.scheme.clone(), sentences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TagScheme};

    fn corpus(n: usize) -> Corpus {
        let scheme = TagScheme::new(&["M"]).unwrap();
        let sentences = (0..n)
            .map(|i| Sentence::labeled(vec![format!("w{i}"), "x".into()], vec![scheme.id_of("S-M").unwrap(), 0]))
            .collect();
        Corpus::new("c", scheme, sentences)
    }

    #[test]
    fn subsample_sizes_and_determinism() {
        let c = corpus(100);
        assert_eq!(subsample(&c, 1.0, 3).unwrap(), c);
        let a = subsample(&c, 0.2, 3).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, subsample(&c, 0.2, 3).unwrap());
        assert_ne!(a, subsample(&c, 0.2, 4).unwrap());
        assert!(subsample(&corpus(2), 0.1, 1).is_err());
        assert!(subsample(&c, 0.0, 1).is_err());
    }

    #[test]
    fn config_round_trips_through_kv() {
        let mut c = TrainConfig::default();
        c.mode = FusionMode::Early;
        c.attention = false;
        c.learning_rate = 1e-3;
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
        let mut kv = KeyValues::new();
        kv.set("dropout", 1.0);
        assert!(TrainConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn unknown_freeze_group_is_rejected() {
        assert!(freeze_set(&["encoder", "decoder"]).is_err());
    }
}
