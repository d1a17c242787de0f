use autonlu_core::corpus::{parse_bracket_ner, AnyCorpus, Corpus, NerCorpus};
use autonlu_core::quality::{
    diagnose, dynamic_tune, eval_label_aggregation, eval_pvi, eval_retag, DawidSkeneConfig, Evaluator,
    QualityConfig,
};
use autonlu_core::synthetic::{plant_label_noise, separable_corpus};
use autonlu_core::train::{train_token, TokenConfig};

fn precision_recall(flagged: &[usize], planted: &[usize]) -> (f64, f64) {
    let tp = flagged.iter().filter(|i| planted.binary_search(i).is_ok()).count() as f64;
    (tp / flagged.len().max(1) as f64, tp / planted.len().max(1) as f64)
}

#[test]
fn clean_corpus_is_rarely_retagged() {
    let cfg = QualityConfig::default();
    let clean = separable_corpus(4, 100, 3).unwrap();
    let r = eval_retag(&clean, &cfg.featurizer, &cfg.linear, cfg.k_folds, 0).unwrap();
    let frac = r.flags.iter().filter(|&&f| f).count() as f64 / clean.len() as f64;
    assert!(frac <= 0.02, "{frac}");
}

#[test]
fn planted_flips_are_found() {
    let cfg = QualityConfig::default();
    let clean = separable_corpus(4, 100, 5).unwrap();
    let (noisy, flipped) = plant_label_noise(&clean, 0.05, 5).unwrap();

    let r = eval_retag(&noisy, &cfg.featurizer, &cfg.linear, cfg.k_folds, 0).unwrap();
    for &i in &flipped {
        assert!(r.flags[i], "flipped sample {i} not retagged");
    }

    let d = dynamic_tune(&noisy, &cfg.featurizer, &cfg.linear, cfg.epochs, 0).unwrap();
    assert_eq!(d.trace.len() * d.trace.epochs(), noisy.len() * cfg.epochs);
    let p = eval_pvi(&d.trace, &d.null_trace).unwrap();
    let negative = flipped.iter().filter(|&&i| p.scores[i] < 0.0).count() as f64;
    assert!(negative / flipped.len() as f64 >= 0.9);
}

#[test]
fn null_model_ignores_input() {
    let cfg = QualityConfig::default();
    let corpus = separable_corpus(3, 20, 1).unwrap();
    let d = dynamic_tune(&corpus, &cfg.featurizer, &cfg.linear, 3, 0).unwrap();
    for i in 0..corpus.len() {
        for j in 0..corpus.len() {
            if corpus.samples()[i].label == corpus.samples()[j].label {
                assert_eq!(d.null_trace.final_gold_prob(i), d.null_trace.final_gold_prob(j));
            }
        }
    }
    let again = dynamic_tune(&corpus, &cfg.featurizer, &cfg.linear, 3, 0).unwrap();
    assert_eq!(d, again);
}

#[test]
fn union_of_flags_covers_noise() {
    let cfg = QualityConfig::default();
    let (noisy, flipped) = plant_label_noise(&separable_corpus(4, 200, 0).unwrap(), 0.1, 0).unwrap();
    let evaluators = [Evaluator::Cartography, Evaluator::Pvi, Evaluator::Retag];
    let out = diagnose(&AnyCorpus::Classification(noisy), &evaluators, &cfg).unwrap();
    let (precision, recall) = precision_recall(&out.flagged_ids(), &flipped);
    assert!(recall >= 0.7 && precision >= 0.5, "p {precision} r {recall}");
    assert_eq!(out.kept_ids.len(), out.filtered.len());
    for id in &out.kept_ids {
        assert!(!out.flags.contains_key(id));
    }
    assert_eq!(out.cartography.as_ref().unwrap().len(), 800);
}

#[test]
fn filtering_does_not_add_flags() {
    let cfg = QualityConfig::default();
    let (noisy, _) = plant_label_noise(&separable_corpus(3, 60, 2).unwrap(), 0.1, 2).unwrap();
    let evaluators = [Evaluator::Uncertainty, Evaluator::Pvi, Evaluator::Retag];
    let first = diagnose(&AnyCorpus::Classification(noisy), &evaluators, &cfg).unwrap();
    let second = diagnose(&first.filtered, &evaluators, &cfg).unwrap();
    assert!(second.flags.len() <= first.flags.len());
}

fn cities(n: usize) -> NerCorpus {
    let names = ["paris", "rome", "oslo", "lima", "cairo", "quito", "riga", "bern"];
    let templates = ["fly to [{}](CITY)", "hotels in [{}](CITY) tonight", "weather for [{}](CITY)"];
    Corpus::new(
        (0..n)
            .map(|i| parse_bracket_ner(&templates[i % 3].replace("{}", names[(i / 3) % names.len()])).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn label_aggregation_on_clean_tokens() {
    let corpus = cities(48);
    let tagger = train_token(&corpus, &TokenConfig::default()).unwrap();
    let out = eval_label_aggregation(&corpus, &tagger, 10, 0.2, &DawidSkeneConfig::default(), 0).unwrap();
    assert_eq!(out.token_flags.len(), 48);
    let flagged: usize = out.token_flags.iter().map(|t| t.iter().filter(|&&f| f).count()).sum();
    assert_eq!(flagged, 0);

    let any = AnyCorpus::Token(corpus);
    let report = diagnose(&any, &[Evaluator::LabelAggregation], &QualityConfig::default()).unwrap();
    assert!(report.token_flags.is_some());
    assert_eq!(report.filtered.len() + report.flags.len(), 48);
}

#[test]
fn label_aggregation_flags_a_missed_entity() {
    let mut samples = cities(48).into_samples();
    samples[0] = parse_bracket_ner("fly to paris").unwrap();
    let corpus = Corpus::new(samples).unwrap();
    let tagger = train_token(&corpus, &TokenConfig::default()).unwrap();
    let out = eval_label_aggregation(&corpus, &tagger, 10, 0.2, &DawidSkeneConfig::default(), 0).unwrap();
    assert!(out.token_flags[0][2], "{:?}", out.token_flags[0]);
}
