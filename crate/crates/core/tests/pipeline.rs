use autonlu_core::bundle::{load, save, BundleModel, InferenceManager};
use autonlu_core::corpus::{parse_bracket_ner, Corpus, NerSample};
use autonlu_core::ood::OodMethod;
use autonlu_core::pipeline::{plan_training, train_classification, train_ner, PipelineConfig};
use autonlu_core::quality::Evaluator;
use autonlu_core::synthetic::{intent_corpus, plant_label_noise, separable_corpus};
use autonlu_core::train::Method;

#[test]
fn plan_matches_trained_method() {
    for (per_class, upsample) in [(6, false), (10, false), (10, true), (120, true)] {
        let corpus = intent_corpus(per_class, 0).unwrap();
        let cfg = PipelineConfig { upsample, ood: Default::default(), ..Default::default() };
        let planned = plan_training(&corpus, None, &cfg).unwrap();
        let out = train_classification(&corpus, None, &cfg, None).unwrap();
        assert_eq!(planned.method, out.report.method, "per_class {per_class}");
    }
}

#[test]
fn quality_filtering_reduces_training_set() {
    let (noisy, _) = plant_label_noise(&separable_corpus(3, 40, 0).unwrap(), 0.1, 1).unwrap();
    let cfg = PipelineConfig { evaluators: vec![Evaluator::Retag], ..Default::default() };
    let out = train_classification(&noisy, None, &cfg, None).unwrap();
    let q = out.report.quality.unwrap();
    assert!(q.removed > 0);
    assert_eq!(q.removed, q.flagged);
}

#[test]
fn trained_bundle_matches_report() {
    let corpus = intent_corpus(20, 4).unwrap();
    let cfg = PipelineConfig { upsample: false, ..Default::default() };
    let out = train_classification(&corpus, None, &cfg, None).unwrap();
    assert_eq!(out.report.ood.as_ref().unwrap().method, OodMethod::MaxSoftmaxProb);
    let dir = tempfile::tempdir().unwrap();
    let saved = save(&out.model, dir.path()).unwrap();
    let loaded = load(dir.path()).unwrap();
    assert_eq!(saved.meta, loaded.meta);
    assert_eq!(loaded.meta.method, Method::ContrastiveFewShot.to_string());
    let mgr = InferenceManager::from_bundle(loaded);
    let p = mgr.predict(&["order a pizza for delivery"]).unwrap();
    assert_eq!(p[0].label, "order_food");
}

fn ner_corpus(n: usize) -> Corpus<NerSample> {
    let cities = ["paris", "rome", "oslo", "lima", "cairo"];
    let samples = (0..n)
        .map(|i| {
            let c = cities[i % cities.len()];
            parse_bracket_ner(&format!("book a flight to [{c}](CITY) on [monday](DAY) for trip {i}")).unwrap()
        })
        .collect();
    Corpus::new(samples).unwrap()
}

#[test]
fn ner_pipeline_round_trip() {
    let corpus = ner_corpus(40);
    let out = train_ner(&corpus, None, &PipelineConfig::default()).unwrap();
    assert_eq!(out.report.method, Method::TokenClassification);
    assert!(out.report.entities.as_ref().unwrap().strict.f1 > 0.9);
    let dir = tempfile::tempdir().unwrap();
    save(&out.model, dir.path()).unwrap();
    let mgr = InferenceManager::load(dir.path()).unwrap();
    assert!(matches!(mgr.bundle().model, BundleModel::Token(_)));
    let spans = mgr.predict_entities(&["book a flight to rome on monday for trip 99"]).unwrap();
    let labels: Vec<&str> = spans[0].iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["CITY", "DAY"]);
}
