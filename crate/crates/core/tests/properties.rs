mod oracles;

use gazfuse::corpus::{encode_spans, is_valid_path, repair, spans_of, Corpus, Sentence, Span, TagScheme};
use gazfuse::evaluation::{evaluate, evaluate_unseen, surface_forms};
use gazfuse::gazetteer::{Gazetteer, GazetteerAnnotation, GazetteerSet};
use gazfuse::model::attention::attend;
use gazfuse::model::checkpoint;
use gazfuse::model::tensor::{softmax, Mat};
use gazfuse::model::{AttentionScale, AttentionValue, FusionMode};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from)
}

fn phrase(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 1..=max)
}

fn matrix() -> impl Strategy<Value = Mat> {
    (1usize..10, 1usize..5).prop_flat_map(|(t, d)| {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), t).prop_map(|rows| Mat::from_rows(&rows))
    })
}

fn spans(len: usize, types: usize) -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec((any::<bool>(), 0usize..3, 0..types), len).prop_map(move |draws| {
        let mut out = Vec::new();
        let mut t = 0;
        while t < len {
            let (open, extra, ty) = draws[t];
            if open {
                let end = (t + extra).min(len - 1);
                out.push(Span::new(0, t, end, ty));
                t = end + 1;
            } else {
                t += 1;
            }
        }
        out
    })
}

fn scheme() -> TagScheme {
    TagScheme::new(&["A", "B"]).unwrap()
}

fn corpus(tags: &[Vec<usize>]) -> Corpus {
    let sentences = tags
        .iter()
        .map(|t| Sentence::labeled((0..t.len()).map(|i| format!("w{i}")).collect(), t.clone()))
        .collect();
    Corpus::new("p", scheme(), sentences)
}

fn tagged(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_len).prop_flat_map(|n| spans(n, 2).prop_map(move |s| encode_spans(n, &s, &scheme()).unwrap()))
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(z in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_are_convex_combinations(x in matrix(), w in 0usize..6) {
        let (out, weights) = attend(&x, &x, &x, w, 0.7);
        for (t, ws) in weights.weights.iter().enumerate() {
            prop_assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(ws.len() <= 2 * w + 1);
            for c in 0..x.cols {
                let col: Vec<f64> = (0..x.rows).map(|u| x.row(u)[c]).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.row(t)[c] >= lo - 1e-12 && out.row(t)[c] <= hi + 1e-12);
            }
        }
        prop_assert_eq!(attend(&x, &x, &x, 0, 0.7).0, x);
    }

    #[test]
    fn full_window_matches_dense_reference(x in matrix(), scale in 0.1f64..2.0) {
        let (out, _) = attend(&x, &x, &x, x.rows, scale);
        let rows: Vec<Vec<f64>> = (0..x.rows).map(|i| x.row(i).to_vec()).collect();
        for (t, r) in oracles::dense_attention(&rows, x.rows, scale).iter().enumerate() {
            for (a, b) in out.row(t).iter().zip(r) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matcher_agrees_with_brute_force(entries in prop::collection::vec(phrase(3), 0..10), tokens in prop::collection::vec(word(), 0..20)) {
        let g = Gazetteer::build("g", &entries).unwrap();
        prop_assert_eq!(g.match_tokens(&tokens), oracles::brute_force_match(&entries, &tokens));
    }

    #[test]
    fn matching_ignores_case(entries in prop::collection::vec(phrase(3), 1..8), tokens in prop::collection::vec(word(), 0..15)) {
        let g = Gazetteer::build("g", &entries).unwrap();
        let upper: Vec<String> = tokens.iter().map(|t| t.to_uppercase()).collect();
        prop_assert_eq!(g.match_tokens(&tokens), g.match_tokens(&upper));
    }

    #[test]
    fn match_codes_form_valid_paths(entries in prop::collection::vec(phrase(4), 0..10), tokens in prop::collection::vec(word(), 0..20)) {
        let g = Gazetteer::build("g", &entries).unwrap();
        let codes = g.match_tokens(&tokens);
        prop_assert!(gazfuse::corpus::is_valid_iobes(codes.into_iter().map(|c| (c, Some(0)))));
    }

    #[test]
    fn insert_then_remove_restores_annotation(entries in prop::collection::vec(phrase(3), 0..8), extra in phrase(3), tokens in prop::collection::vec(word(), 0..15)) {
        prop_assume!(!entries.contains(&extra));
        let mut g = Gazetteer::build("g", &entries).unwrap();
        let before = g.match_tokens(&tokens);
        prop_assert!(g.insert(extra.clone()));
        prop_assert!(g.remove(&extra));
        prop_assert_eq!(g.match_tokens(&tokens), before);
    }

    #[test]
    fn spans_round_trip_through_tags((n, s) in (1usize..20).prop_flat_map(|n| (Just(n), spans(n, 2)))) {
        let tags = encode_spans(n, &s, &scheme()).unwrap();
        prop_assert!(is_valid_path(&tags, &scheme()));
        prop_assert_eq!(spans_of(0, &tags, &scheme()), s);
    }

    #[test]
    fn repair_is_valid_idempotent_and_conservative(tags in prop::collection::vec(0usize..9, 0..25)) {
        let s = scheme();
        let fixed = repair(&tags, &s);
        prop_assert!(is_valid_path(&fixed, &s));
        prop_assert_eq!(repair(&fixed, &s), fixed.clone());
        if is_valid_path(&tags, &s) {
            prop_assert_eq!(fixed, tags);
        }
    }

    #[test]
    fn precision_and_recall_swap_with_arguments(pairs in prop::collection::vec((tagged(10), tagged(10)), 1..5)) {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = pairs.into_iter().map(|(a, mut b)| { b.resize(a.len(), 0); let b = repair(&b, &scheme()); (a, b) }).collect();
        let a = corpus(&pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>());
        let b = corpus(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
        let ab = evaluate(&a, &b).unwrap();
        let ba = evaluate(&b, &a).unwrap();
        prop_assert_eq!(ab.micro_precision, ba.micro_recall);
        prop_assert_eq!(ab.micro_recall, ba.micro_precision);
        prop_assert_eq!(ab.micro_f1, ba.micro_f1);
        prop_assert!((0.0..=1.0).contains(&ab.micro_f1));
    }

    #[test]
    fn self_evaluation_is_perfect(tags in prop::collection::vec(tagged(12), 1..5)) {
        let c = corpus(&tags);
        let r = evaluate(&c, &c).unwrap();
        prop_assert_eq!(r.fp + r.fn_, 0);
        if r.gold_spans > 0 {
            prop_assert_eq!(r.micro_f1, 1.0);
        }
    }

    #[test]
    fn adding_a_correct_prediction_never_lowers_recall(gold in tagged(12)) {
        let g = corpus(std::slice::from_ref(&gold));
        let empty = corpus(&[vec![0; gold.len()]]);
        let spans = g.spans();
        prop_assume!(!spans.is_empty());
        let one = encode_spans(gold.len(), &spans[..1], &scheme()).unwrap();
        let r0 = evaluate(&empty, &g).unwrap();
        let r1 = evaluate(&corpus(&[one]), &g).unwrap();
        prop_assert!(r1.micro_recall > r0.micro_recall);
        prop_assert_eq!(r1.micro_precision, 1.0);
    }

    #[test]
    fn unseen_filter_with_nothing_seen_is_plain_evaluation(pairs in prop::collection::vec((tagged(8), tagged(8)), 1..4)) {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = pairs.into_iter().map(|(a, mut b)| { b.resize(a.len(), 0); let b = repair(&b, &scheme()); (a, b) }).collect();
        let gold = corpus(&pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>());
        let pred = corpus(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
        let plain = evaluate(&pred, &gold).unwrap();
        let filtered = evaluate_unseen(&pred, &gold, &Default::default()).unwrap();
        prop_assert_eq!((plain.tp, plain.fp, plain.fn_), (filtered.tp, filtered.fp, filtered.fn_));
        let all = evaluate_unseen(&pred, &gold, &surface_forms([&gold, &pred])).unwrap();
        prop_assert_eq!(all.gold_spans + all.predicted_spans, 0);
    }
}

fn late_model() -> gazfuse::model::Model {
    oracles::tiny_model(FusionMode::Late, true, AttentionScale::Full, AttentionValue::Window)
}

fn annotation(len: usize, codes: &[usize]) -> GazetteerAnnotation {
    use gazfuse::corpus::Iobes;
    let code = |i: usize| Iobes::from_index(i % 5).unwrap();
    let rows: Vec<Vec<Iobes>> = (0..2)
        .map(|m| (0..len).map(|t| code(codes[(t + m) % codes.len()])).collect())
        .collect();
    GazetteerAnnotation { codes: rows }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn late_fusion_is_the_elementwise_max(tokens in prop::collection::vec(prop::sample::select(vec!["take", "aspirin", "mg", "zzz"]), 1..7), codes in prop::collection::vec(0usize..5, 1..5)) {
        let m = late_model();
        let ann = annotation(tokens.len(), &codes);
        let p = m.forward(&tokens, Some(&ann)).unwrap();
        for t in &p.tokens {
            let r = t.ner_logits.as_ref().unwrap();
            let g = t.gaz_logits.as_ref().unwrap();
            for ((f, a), b) in t.fused_logits.iter().zip(r).zip(g) {
                prop_assert_eq!(*f, a.max(*b));
                prop_assert!(*f >= *a && *f >= *b);
            }
            prop_assert_eq!(t.tag, gazfuse::model::argmax(&t.fused_logits));
        }
    }

    #[test]
    fn unplugged_model_reproduces_the_ner_branch_bit_for_bit(tokens in prop::collection::vec(prop::sample::select(vec!["take", "aspirin", "mg", "zzz"]), 1..7), codes in prop::collection::vec(0usize..5, 1..5)) {
        let m = late_model();
        let r = m.unplug_gazetteer().unwrap();
        let fused = m.forward(&tokens, Some(&annotation(tokens.len(), &codes))).unwrap();
        let alone = r.forward(&tokens, None).unwrap();
        for (a, b) in fused.tokens.iter().zip(&alone.tokens) {
            prop_assert_eq!(a.ner_logits.as_ref().unwrap(), &b.fused_logits);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions(tokens in prop::collection::vec(prop::sample::select(vec!["take", "aspirin", "mg", "zzz"]), 1..7), codes in prop::collection::vec(0usize..5, 1..5)) {
        let m = late_model();
        let back = checkpoint::parse(&checkpoint::render(&m)).unwrap();
        prop_assert_eq!(&back.params, &m.params);
        let ann = annotation(tokens.len(), &codes);
        prop_assert_eq!(back.forward(&tokens, Some(&ann)).unwrap(), m.forward(&tokens, Some(&ann)).unwrap());
    }
}

#[test]
fn gazetteer_hot_swap_changes_only_matches() {
    let m = late_model();
    let names = m.gazetteer_names.clone();
    let mut set = GazetteerSet::new(names.iter().map(|n| Gazetteer::empty(n.as_str())).collect()).unwrap();
    let tokens = ["take", "zzz", "mg"];
    let before = m.predict(&tokens, Some(&set)).unwrap();
    let params = m.params.clone();
    set.add_entries(&names[0], [["zzz"]]).unwrap();
    let after = m.predict(&tokens, Some(&set)).unwrap();
    assert_eq!(m.params, params);
    assert_ne!(before.tokens[1].gaz_logits, after.tokens[1].gaz_logits);
    set.remove_entries(&names[0], [["zzz"]]).unwrap();
    assert_eq!(m.predict(&tokens, Some(&set)).unwrap(), before);
}
