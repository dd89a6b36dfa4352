//! Windowed scaled dot-product self-attention.
//!
//! Position `t` attends to every `t'` with `|t - t'| <= window` inside the
//! sentence, itself included. The same kernel serves the token encoder
//! (separate query/key/value projections) and the gazetteer branch, where
//! queries, keys and values are all the gazetteer embedding rows.

use super::tensor::{dot, Mat, Tensor};
use crate::corpus::Iobes;
use crate::gazetteer::{GazetteerAnnotation, CODES};

/// Attention weights of one call: `weights[t]` covers positions
/// `lo[t] ..= lo[t] + weights[t].len() - 1`.
#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub lo: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionWeights {
    /// Dense `T × T` matrix of the weights, zero outside the window.
    pub fn dense(&self) -> Mat {
        let n = self.lo.len();
        let mut m = Mat::zeros(n, n);
        for t in 0..n {
            for (k, &w) in self.weights[t].iter().enumerate() {
                m.row_mut(t)[self.lo[t] + k] = w;
            }
        }
        m
    }
}

fn window_bounds(t: usize, len: usize, window: usize) -> (usize, usize) {
    (t.saturating_sub(window), (t + window).min(len - 1))
}

pub fn attend(q: &Mat, k: &Mat, v: &Mat, window: usize, scale: f64) -> (Mat, AttentionWeights) {
    let len = q.rows;
    let mut out = Mat::zeros(len, v.cols);
    let mut lo_all = Vec::with_capacity(len);
    let mut weights = Vec::with_capacity(len);
    for t in 0..len {
        let (lo, hi) = window_bounds(t, len, window);
        let scores: Vec<f64> = (lo..=hi).map(|u| dot(q.row(t), k.row(u)) * scale).collect();
        let w = super::tensor::softmax(&scores);
        let o = out.row_mut(t);
        for (i, u) in (lo..=hi).enumerate() {
            for (oc, &vc) in o.iter_mut().zip(v.row(u)) {
                *oc += w[i] * vc;
            }
        }
        lo_all.push(lo);
        weights.push(w);
    }
    (out, AttentionWeights { lo: lo_all, weights })
}

/// Gradients of [`attend`] with respect to queries, keys and values.
pub fn attend_backward(q: &Mat, k: &Mat, v: &Mat, attn: &AttentionWeights, dout: &Mat, scale: f64) -> (Mat, Mat, Mat) {
    let len = q.rows;
    let mut dq = Mat::zeros(len, q.cols);
    let mut dk = Mat::zeros(len, k.cols);
    let mut dv = Mat::zeros(len, v.cols);
    for t in 0..len {
        let lo = attn.lo[t];
        let w = &attn.weights[t];
        let d = dout.row(t);
        let dw: Vec<f64> = (0..w.len()).map(|i| dot(d, v.row(lo + i))).collect();
        let mean: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        for i in 0..w.len() {
            let u = lo + i;
            for (dvc, &dc) in dv.row_mut(u).iter_mut().zip(d) {
                *dvc += w[i] * dc;
            }
            let ds = w[i] * (dw[i] - mean) * scale;
            if ds != 0.0 {
                for (a, &b) in dq.row_mut(t).iter_mut().zip(k.row(u)) {
                    *a += ds * b;
                }
                for (a, &b) in dk.row_mut(u).iter_mut().zip(q.row(t)) {
                    *a += ds * b;
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Concatenates, for every token, the embedding of its code in each
/// gazetteer: row `t` is `[E[0][z0_t]; E[1][z1_t]; ...]`, width `M·d`.
pub fn lookup_gazetteer_embedding(table: &Tensor, annotation: &GazetteerAnnotation) -> Mat {
    let (m, k, d) = (table.shape()[0], table.shape()[1], table.shape()[2]);
    assert_eq!(k, CODES);
    assert_eq!(annotation.gazetteers(), m, "annotation has wrong gazetteer count");
    let len = annotation.len();
    let mut eg = Mat::zeros(len, m * d);
    for t in 0..len {
        let row = eg.row_mut(t);
        for j in 0..m {
            let z = annotation.codes[j][t] as usize;
            row[j * d..(j + 1) * d].copy_from_slice(table.row(j * CODES + z));
        }
    }
    eg
}

/// Scatters the gradient of [`lookup_gazetteer_embedding`] into `dtable`.
pub fn lookup_gazetteer_embedding_backward(annotation: &GazetteerAnnotation, deg: &Mat, dtable: &mut Tensor) {
    let d = dtable.shape()[2];
    for t in 0..deg.rows {
        let row = deg.row(t);
        for (j, codes) in annotation.codes.iter().enumerate() {
            let z: Iobes = codes[t];
            let target = dtable.row_mut(j * CODES + z as usize);
            for (a, &b) in target.iter_mut().zip(&row[j * d..(j + 1) * d]) {
                *a += b;
            }
        }
    }
}

/// Context-aware gazetteer embedding: windowed self-attention over the
/// gazetteer embedding rows, scores scaled by `scale`.
pub fn gazetteer_attention(eg: &Mat, window: usize, scale: f64) -> (Mat, AttentionWeights) {
    attend(eg, eg, eg, window, scale)
}

pub fn gazetteer_attention_backward(eg: &Mat, attn: &AttentionWeights, dg: &Mat, scale: f64) -> Mat {
    let (dq, dk, dv) = attend_backward(eg, eg, eg, attn, dg, scale);
    dq.add(&dk).add(&dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense reference: full score matrix with masked entries set to -inf.
    fn dense_reference(x: &Mat, window: usize, scale: f64) -> Mat {
        let n = x.rows;
        let mut out = Mat::zeros(n, x.cols);
        for t in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|u| {
                    if t.abs_diff(u) <= window {
                        dot(x.row(t), x.row(u)) * scale
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for u in 0..n {
                for c in 0..x.cols {
                    out.row_mut(t)[c] += e[u] / z * x.row(u)[c];
                }
            }
        }
        out
    }

    #[test]
    fn zero_window_is_identity() {
        let x = Mat::from_rows(&[vec![1.0, -2.0], vec![0.3, 0.7], vec![5.0, 1.0]]);
        let (g, _) = gazetteer_attention(&x, 0, 0.5);
        assert_eq!(g, x);
    }

    #[test]
    fn identical_rows_are_fixed_points() {
        let x = Mat::from_rows(&vec![vec![0.25, -1.5]; 4]);
        let (g, _) = gazetteer_attention(&x, 2, 1.0);
        for (a, b) in g.data.iter().zip(&x.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn three_token_window_one_matches_dense() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.5, -1.0], vec![-2.0, 1.5]]);
        let scale = 1.0 / 2f64.sqrt();
        let (g, w) = gazetteer_attention(&x, 1, scale);
        let r = dense_reference(&x, 1, scale);
        for (a, b) in g.data.iter().zip(&r.data) {
            assert!((a - b).abs() < 1e-12);
        }
        let dense = w.dense();
        assert_eq!(dense.row(0)[2], 0.0);
        assert_eq!(dense.row(2)[0], 0.0);
    }

    #[test]
    fn lookup_concatenates_rows() {
        let mut table = Tensor::zeros(&[1, CODES, 2]);
        for k in 0..CODES {
            table.row_mut(k).copy_from_slice(&[k as f64, 10.0 * k as f64]);
        }
        let ann = GazetteerAnnotation {
            codes: vec![vec![Iobes::S, Iobes::O]],
        };
        let eg = lookup_gazetteer_embedding(&table, &ann);
        assert_eq!(eg.row(0), &[4.0, 40.0]);
        assert_eq!(eg.row(1), &[0.0, 0.0]);

        let table2 = Tensor::zeros(&[2, CODES, 3]);
        let ann2 = GazetteerAnnotation::outside(2, 4);
        assert_eq!(lookup_gazetteer_embedding(&table2, &ann2).cols, 6);
    }
}
