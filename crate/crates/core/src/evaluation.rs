//! Exact-match span micro-F1 with per-type breakdowns and surface-form
//! filters.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{surface_form, Corpus, Span};
use crate::error::{Error, Result};

/// Normalized token sequences of entity mentions.
pub type SurfaceForms = HashSet<Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub entity_type: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gold_spans: usize,
    pub predicted_spans: usize,
    pub per_type: Vec<TypeScores>,
    pub filter: Option<String>,
}

/// Precision, recall and F1 from counts; every undefined ratio is 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Which side of the comparison a surface-form filter applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterScope {
    GoldAndPredicted,
    GoldOnly,
}

fn check_aligned(pred: &Corpus, gold: &Corpus) -> Result<()> {
    if pred.scheme.entity_types() != gold.scheme.entity_types() {
        return Err(Error::Schema(format!(
            "prediction types {:?} differ from gold types {:?}",
            pred.scheme.entity_types(),
            gold.scheme.entity_types()
        )));
    }
    if pred.len() != gold.len() {
        return Err(Error::Schema(format!(
            "prediction has {} sentences, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, g)) in pred.sentences.iter().zip(&gold.sentences).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Schema(format!(
                "sentence {i}: prediction has {} tokens, gold has {}",
                p.len(),
                g.len()
            )));
        }
        if p.tags.is_none() || g.tags.is_none() {
            return Err(Error::Schema(format!("sentence {i} is missing tags")));
        }
    }
    Ok(())
}

fn report(gold: &[Span], pred: &[Span], types: &[String], filter: Option<String>) -> EvalReport {
    let gold_set: HashSet<Span> = gold.iter().copied().collect();
    let pred_set: HashSet<Span> = pred.iter().copied().collect();
    let mut per: BTreeMap<usize, (usize, usize, usize)> = (0..types.len()).map(|t| (t, (0, 0, 0))).collect();
    for s in &pred_set {
        let e = per.get_mut(&s.entity_type).expect("known type");
        if gold_set.contains(s) {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    for s in &gold_set {
        if !pred_set.contains(s) {
            per.get_mut(&s.entity_type).expect("known type").2 += 1;
        }
    }
    let (tp, fp, fn_) = per
        .values()
        .fold((0, 0, 0), |a, &(t, p, n)| (a.0 + t, a.1 + p, a.2 + n));
    let (micro_precision, micro_recall, micro_f1) = prf(tp, fp, fn_);
    let per_type = per
        .into_iter()
        .map(|(t, (tp, fp, fn_))| {
            let (precision, recall, f1) = prf(tp, fp, fn_);
            TypeScores {
                entity_type: types[t].clone(),
                precision,
                recall,
                f1,
                support: tp + fn_,
                tp,
                fp,
                fn_,
            }
        })
        .collect();
    EvalReport {
        micro_precision,
        micro_recall,
        micro_f1,
        tp,
        fp,
        fn_,
        gold_spans: gold_set.len(),
        predicted_spans: pred_set.len(),
        per_type,
        filter,
    }
}

/// Span micro-F1. Predicted tags are repaired before span extraction.
pub fn evaluate(pred: &Corpus, gold: &Corpus) -> Result<EvalReport> {
    check_aligned(pred, gold)?;
    Ok(report(&gold.spans(), &pred.spans(), gold.scheme.entity_types(), None))
}

fn surface(corpus: &Corpus, span: &Span) -> Vec<String> {
    surface_form(&corpus.sentences[span.sentence].tokens[span.start..=span.end])
}

/// Micro-F1 over the spans whose surface form satisfies `keep`.
pub fn evaluate_where(
    pred: &Corpus,
    gold: &Corpus,
    keep: impl Fn(&[String]) -> bool,
    scope: FilterScope,
    descriptor: &str,
) -> Result<EvalReport> {
    check_aligned(pred, gold)?;
    let gold_spans: Vec<Span> = gold.spans().into_iter().filter(|s| keep(&surface(gold, s))).collect();
    let pred_spans: Vec<Span> = match scope {
        FilterScope::GoldAndPredicted => pred.spans().into_iter().filter(|s| keep(&surface(pred, s))).collect(),
        FilterScope::GoldOnly => pred.spans(),
    };
    Ok(report(
        &gold_spans,
        &pred_spans,
        gold.scheme.entity_types(),
        Some(descriptor.to_string()),
    ))
}

/// Micro-F1 restricted to mentions never seen in `seen`, applied to gold and
/// predicted spans alike.
pub fn evaluate_unseen(pred: &Corpus, gold: &Corpus, seen: &SurfaceForms) -> Result<EvalReport> {
    evaluate_where(
        pred,
        gold,
        |s| !seen.contains(s),
        FilterScope::GoldAndPredicted,
        "unseen-mentions-only",
    )
}

/// Micro-F1 restricted to mentions from `pool`.
pub fn evaluate_pool(pred: &Corpus, gold: &Corpus, pool: &SurfaceForms, descriptor: &str) -> Result<EvalReport> {
    evaluate_where(
        pred,
        gold,
        |s| pool.contains(s),
        FilterScope::GoldAndPredicted,
        descriptor,
    )
}

/// Surface forms of every gold span in `corpora`.
pub fn surface_forms<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> SurfaceForms {
    let mut out = SurfaceForms::new();
    for c in corpora {
        for s in c.spans() {
            out.insert(surface(c, &s));
        }
    }
    out
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Aligned text table, one row per type plus the micro average.
    pub fn render_table(&self) -> String {
        let width = self
            .per_type
            .iter()
            .map(|t| t.entity_type.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut s = String::new();
        if let Some(f) = &self.filter {
            let _ = writeln!(s, "filter: {f}");
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "type", "precision", "recall", "f1", "support"
        );
        for t in &self.per_type {
            let _ = writeln!(
                s,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                t.entity_type, t.precision, t.recall, t.f1, t.support
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
            "micro", self.micro_precision, self.micro_recall, self.micro_f1, self.gold_spans
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TagScheme};

    fn corpus(tags: Vec<Vec<&str>>) -> Corpus {
        let scheme = TagScheme::new(&["M"]).unwrap();
        let sentences = tags
            .into_iter()
            .map(|t| {
                let tokens = (0..t.len()).map(|i| format!("w{i}")).collect();
                Sentence::labeled(tokens, t.iter().map(|x| scheme.id_of(x).unwrap()).collect())
            })
            .collect();
        Corpus::new("c", scheme, sentences)
    }

    #[test]
    fn identity_is_perfect() {
        let g = corpus(vec![vec!["S-M", "O", "B-M", "E-M"]]);
        let r = evaluate(&g, &g).unwrap();
        assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn one_hit_one_spurious() {
        let g = corpus(vec![vec!["S-M", "O", "S-M", "O"]]);
        let p = corpus(vec![vec!["S-M", "O", "O", "S-M"]]);
        let r = evaluate(&p, &g).unwrap();
        assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (0.5, 0.5, 0.5));
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    }

    #[test]
    fn all_seen_gives_zero_support() {
        let g = corpus(vec![vec!["S-M", "O"]]);
        let seen = surface_forms([&g]);
        let r = evaluate_unseen(&g, &g, &seen).unwrap();
        assert_eq!((r.gold_spans, r.micro_f1), (0, 0.0));
    }

    #[test]
    fn mismatch_is_an_error() {
        let g = corpus(vec![vec!["S-M", "O"]]);
        let p = corpus(vec![vec!["S-M"]]);
        assert!(evaluate(&p, &g).is_err());
    }
}
