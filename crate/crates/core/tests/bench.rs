use autonlu_core::bench::{build_benchmark, replay, run_protocol, BenchmarkConfig, BenchmarkManifest, OodType, Protocol};
use autonlu_core::ood::OUT_OF_SCOPE;
use autonlu_core::pipeline::PipelineConfig;
use autonlu_core::synthetic::{intent_corpus, separable_corpus};

fn config(protocol: Protocol) -> BenchmarkConfig {
    BenchmarkConfig { protocol, seed: 4, ..Default::default() }
}

#[test]
fn class_assignment_and_budgets() {
    let corpus = separable_corpus(10, 120, 0).unwrap();
    let far = intent_corpus(30, 0).unwrap();
    let b = build_benchmark(&corpus, Some(&far), &config(Protocol::OodInTest)).unwrap();
    let m = &b.manifest;
    assert_eq!(m.id_classes.len(), 8);
    assert_eq!(m.mid_classes.len(), 2);
    assert!(m.mid_classes.iter().all(|c| !m.id_classes.contains(c)));
    assert!(b.train.labels().iter().all(|l| m.id_classes.contains(l)));
    assert_eq!(b.assembly().test_budget, 12);
    assert_eq!(b.ood_test_count(), 12);
    assert!(b.assembly().missing.is_empty());
    let count = |t: OodType| b.test_types.iter().filter(|x| **x == Some(t)).count();
    assert_eq!((count(OodType::Mid), count(OodType::Far), count(OodType::VeryFar)), (4, 4, 4));
    assert!(!b.train.labels().contains(&OUT_OF_SCOPE.to_string()));
}

#[test]
fn ood_aware_training_volume() {
    let corpus = separable_corpus(10, 120, 0).unwrap();
    let far = intent_corpus(30, 0).unwrap();
    let b = build_benchmark(&corpus, Some(&far), &config(Protocol::OodAware)).unwrap();
    let id_train = b.manifest.train_ids.len();
    let ood_train = b.train.class_counts()[OUT_OF_SCOPE];
    assert_eq!(ood_train, id_train / 2);
    assert_eq!(b.assembly().train_budgets.values().sum::<usize>(), id_train / 2);
}

#[test]
fn retention_and_few_shot() {
    let mut samples = separable_corpus(6, 120, 0).unwrap().into_samples();
    samples.extend(separable_corpus(8, 40, 1).unwrap().into_samples().into_iter().filter(|s| s.label == "class_7"));
    let corpus = autonlu_core::corpus::Corpus::new(samples).unwrap();
    let b = build_benchmark(&corpus, None, &config(Protocol::OodInTest)).unwrap();
    assert!(b.manifest.dropped_classes.contains(&"class_7".to_string()));
    assert!(b.assembly().missing.contains(&OodType::Far));

    let cfg = BenchmarkConfig { n_shot_range: Some((5, 20)), ..config(Protocol::OodInTest) };
    let few = build_benchmark(&corpus, None, &cfg).unwrap();
    assert!(!few.manifest.dropped_classes.contains(&"class_7".to_string()));
    for (label, &n) in few.train.class_counts() {
        assert!((5..=20).contains(&n), "{label}: {n}");
        assert!(n <= corpus.class_counts()[label]);
        assert_eq!(few.manifest.shots[label], n);
    }
}

#[test]
fn manifest_replays_exactly() {
    let corpus = separable_corpus(10, 120, 0).unwrap();
    let far = intent_corpus(30, 0).unwrap();
    let b = build_benchmark(&corpus, Some(&far), &config(Protocol::OodAware)).unwrap();
    let json = serde_json::to_string(&b.manifest).unwrap();
    let back: BenchmarkManifest = serde_json::from_str(&json).unwrap();
    let r = replay(&back, &corpus, Some(&far)).unwrap();
    assert_eq!(r.train.samples(), b.train.samples());
    assert_eq!(r.test.samples(), b.test.samples());
    let again = build_benchmark(&corpus, Some(&far), &config(Protocol::OodAware)).unwrap();
    assert_eq!(again.manifest, b.manifest);
}

#[test]
fn not_enough_classes() {
    let mut samples = separable_corpus(3, 20, 0).unwrap().into_samples();
    samples.extend(separable_corpus(4, 120, 0).unwrap().into_samples().into_iter().filter(|s| s.label == "class_3"));
    let corpus = autonlu_core::corpus::Corpus::new(samples).unwrap();
    assert!(matches!(
        build_benchmark(&corpus, None, &config(Protocol::OodInTest)),
        Err(autonlu_core::Error::NotEnoughClasses { available: 1, required: 2 })
    ));
}

#[test]
fn protocols_on_separable_data() {
    let corpus = separable_corpus(10, 120, 0).unwrap();
    let far = intent_corpus(30, 0).unwrap();
    let pipe = PipelineConfig { ood: autonlu_core::pipeline::OodConfig { method: "mahalanobis".into(), ..Default::default() }, ..Default::default() };
    let b = build_benchmark(&corpus, Some(&far), &config(Protocol::OodInTest)).unwrap();
    let r = run_protocol(&b, &pipe).unwrap();
    assert_eq!(r.report.f1_ood, Some(1.0));
    assert_eq!(run_protocol(&b, &pipe).unwrap(), r);

    let b = build_benchmark(&corpus, Some(&far), &config(Protocol::OodAware)).unwrap();
    let r = run_protocol(&b, &PipelineConfig::default()).unwrap();
    assert!(r.report.per_class.contains_key(OUT_OF_SCOPE));
    let in_scope: Vec<f64> = r.report.per_class.iter().filter(|(l, _)| *l != OUT_OF_SCOPE).map(|(_, m)| m.f1).collect();
    let mean = in_scope.iter().sum::<f64>() / in_scope.len() as f64;
    assert!((r.report.f1_in_scope - mean).abs() < 1e-12);
}
