mod oracles;

use gazfuse::model::{AttentionScale, AttentionValue, FusionMode, Model};
use oracles::{tiny_batch as batch, tiny_model as tiny};

fn check(model: &Model) {
    let (checked, bad) = oracles::gradient_check(model, &batch(model), 1e-4, 1e-4, 1e-8);
    assert!(checked > 100);
    assert!(
        bad.is_empty(),
        "{} of {checked} coordinates disagree, first: {:?}",
        bad.len(),
        bad.first()
    );
}

#[test]
fn gradients_match_finite_differences_in_every_mode() {
    for mode in [FusionMode::NerOnly, FusionMode::Early, FusionMode::Late] {
        for attention in [false, true] {
            check(&tiny(mode, attention, AttentionScale::Full, AttentionValue::Window));
        }
    }
}

#[test]
fn gradients_match_under_debug_attention_forms() {
    check(&tiny(
        FusionMode::Late,
        true,
        AttentionScale::PerGazetteer,
        AttentionValue::Window,
    ));
    check(&tiny(
        FusionMode::Early,
        true,
        AttentionScale::Full,
        AttentionValue::Query,
    ));
}

#[test]
fn late_fusion_ties_route_to_the_ner_branch() {
    let mut m = tiny(FusionMode::Late, true, AttentionScale::Full, AttentionValue::Window);
    for name in ["tagger_r", "tagger_g"] {
        m.params.get_mut(&format!("{name}.w2")).unwrap().fill(0.0);
        m.params.get_mut(&format!("{name}.b2")).unwrap().fill(0.25);
    }
    let (_, grads) = m.loss_and_gradients(&batch(&m), None).unwrap();
    assert!(grads.get("tagger_r.b2").unwrap().data().iter().any(|&g| g != 0.0));
    assert!(grads.get("tagger_g.b2").unwrap().data().iter().all(|&g| g == 0.0));
    assert!(grads.get("gaz_embeddings").unwrap().data().iter().all(|&g| g == 0.0));
}

#[test]
fn loss_of_uniform_prediction_is_log_tag_count() {
    let mut m = tiny(FusionMode::NerOnly, false, AttentionScale::Full, AttentionValue::Window);
    m.params.get_mut("tagger_r.w2").unwrap().fill(0.0);
    let (loss, _) = m.loss_and_gradients(&batch(&m), None).unwrap();
    assert!((loss - (m.scheme.len() as f64).ln()).abs() < 1e-12);
}
