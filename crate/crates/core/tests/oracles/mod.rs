//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use std::collections::HashSet;

use gazfuse::corpus::{Iobes, Span, TagScheme};
use gazfuse::gazetteer::GazetteerAnnotation;
use gazfuse::model::{Architecture, AttentionScale, AttentionValue, Example, FusionMode, Model, Vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Greedy leftmost-longest matching by exhaustive comparison against every
/// dictionary entry. Tokens and entries must already be normalized.
pub fn brute_force_match(entries: &[Vec<String>], tokens: &[String]) -> Vec<Iobes> {
    let mut out = vec![Iobes::O; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let best = entries
            .iter()
            .filter(|e| !e.is_empty() && i + e.len() <= tokens.len() && tokens[i..i + e.len()] == e[..])
            .map(|e| e.len())
            .max();
        match best {
            Some(1) => {
                out[i] = Iobes::S;
                i += 1;
            }
            Some(n) => {
                out[i] = Iobes::B;
                for o in &mut out[i + 1..i + n - 1] {
                    *o = Iobes::I;
                }
                out[i + n - 1] = Iobes::E;
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

/// Dense attention with explicit masking of out-of-window positions.
pub fn dense_attention(x: &[Vec<f64>], window: usize, scale: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    (0..n)
        .map(|t| {
            let scores: Vec<f64> = (0..n)
                .map(|u| {
                    if t.abs_diff(u) <= window {
                        dot(&x[t], &x[u]) * scale
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..x[0].len())
                .map(|c| (0..n).map(|u| e[u] / z * x[u][c]).sum())
                .collect()
        })
        .collect()
}

/// TP / FP / FN by plain set operations.
pub fn span_counts(gold: &[Span], pred: &[Span]) -> (usize, usize, usize) {
    let g: HashSet<&Span> = gold.iter().collect();
    let p: HashSet<&Span> = pred.iter().collect();
    let tp = g.intersection(&p).count();
    (tp, p.len() - tp, g.len() - tp)
}

/// One gradient coordinate that disagrees with central differences.
#[derive(Debug)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic gradient coordinate with the central difference
/// `(L(p+ε) - L(p-ε)) / 2ε`. A coordinate passes when its relative error is
/// within `tol` or both values are below `floor` in magnitude.
pub fn gradient_check(model: &Model, batch: &[Example], eps: f64, tol: f64, floor: f64) -> (usize, Vec<Mismatch>) {
    let (_, grads) = model.loss_and_gradients(batch, None).expect("loss");
    let mut probe = model.clone();
    let mut checked = 0;
    let mut bad = Vec::new();
    for (name, g) in grads.tensors() {
        for i in 0..g.len() {
            let orig = probe.params.get(name).unwrap().data()[i];
            probe.params.get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let (lp, _) = probe.loss_and_gradients(batch, None).unwrap();
            probe.params.get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let (lm, _) = probe.loss_and_gradients(batch, None).unwrap();
            probe.params.get_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = g.data()[i];
            let scale = analytic.abs().max(numeric.abs());
            checked += 1;
            if scale > floor && (analytic - numeric).abs() / scale > tol {
                bad.push(Mismatch {
                    tensor: name.to_string(),
                    index: i,
                    analytic,
                    numeric,
                });
            }
        }
    }
    (checked, bad)
}

/// Two-type model small enough for exhaustive finite differences.
pub fn tiny_model(mode: FusionMode, attention: bool, scale: AttentionScale, value: AttentionValue) -> Model {
    let scheme = TagScheme::new(&["Drug", "Dose"]).unwrap();
    let vocab = Vocab::from_tokens(["take", "aspirin", "10", "mg", "daily", "now"].map(String::from));
    let arch = Architecture {
        mode,
        attention,
        vocab: vocab.len(),
        hidden: 4,
        ffn: 5,
        max_len: 8,
        encoder_window: 2,
        gazetteers: 2,
        gaz_dim: 2,
        gaz_window: 2,
        tags: scheme.len(),
        scale,
        value,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    Model::new(arch, vocab, scheme, vec!["drug".into(), "dose".into()], &mut rng).unwrap()
}

/// Two sentences, one with an unknown word.
pub fn tiny_batch(model: &Model) -> Vec<Example> {
    use Iobes::*;
    let s = &model.scheme;
    let tag = |t: &str| s.id_of(t).unwrap();
    let a = GazetteerAnnotation {
        codes: vec![vec![O, S, O, O, B], vec![O, O, B, E, O]],
    };
    let b = GazetteerAnnotation {
        codes: vec![vec![S, O, O], vec![O, B, E]],
    };
    let needs = model.arch.mode != FusionMode::NerOnly;
    vec![
        Example {
            ids: model.vocab.ids(&["take", "aspirin", "10", "mg", "daily"]),
            annotation: needs.then_some(a),
            gold: vec![0, tag("S-Drug"), tag("B-Dose"), tag("E-Dose"), 0],
        },
        Example {
            ids: model.vocab.ids(&["aspirin", "unknownword", "now"]),
            annotation: needs.then_some(b),
            gold: vec![tag("S-Drug"), 0, 0],
        },
    ]
}
