//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use autonlu_core::bench::{build_benchmark, far_ood_pairing, replay, run_protocol, BenchmarkManifest};
use autonlu_core::bundle::{save, BundleModel, InferenceManager};
use autonlu_core::corpus::{
    load_classification, stratified_split, write_classification_jsonl, AnyCorpus, ClassificationCorpus, Task,
};
use autonlu_core::llmgen::{test_set_delta, GenerationClient, LlmUpsampler};
use autonlu_core::pipeline::{plan_training, train_classification, train_ner, PipelineConfig};
use autonlu_core::quality::{diagnose as run_diagnose, write_data_map, Evaluator};
use autonlu_core::train::{Method, PerturbationUpsampler, RegimeDecision, Upsampler};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, TransportKind};
use crate::error::{io_err, CliError};
use crate::{AugmentArgs, BenchArgs, DiagnoseArgs, GenTestArgs, PredictArgs, TrainArgs};

type CmdResult = Result<(), CliError>;

fn load_config(path: &Path, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = Config::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> CmdResult {
    let line = serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| CliError::Internal(format!("cannot write output: {e}")))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn classification(corpus: AnyCorpus, command: &str) -> Result<ClassificationCorpus, CliError> {
    match corpus {
        AnyCorpus::Classification(c) => Ok(c),
        AnyCorpus::Token(_) => Err(CliError::Usage(format!("`{command}` needs a classification corpus"))),
    }
}

fn client(cfg: &Config, transport: TransportKind) -> Result<GenerationClient, CliError> {
    Ok(match transport {
        TransportKind::Mock => GenerationClient::mock(cfg.llm()),
        TransportKind::Http => GenerationClient::from_env(cfg.llm())?,
    })
}

pub fn train(a: &TrainArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let mut cfg = load_config(&a.config.config, seed)?;
    if let Some(m) = &a.method {
        cfg.method.name = m.clone();
    }
    if let Some(m) = &a.ood_method {
        cfg.ood.ood_method = m.clone();
    }
    if let Some(f) = a.threshold_factor {
        cfg.ood.threshold_factor = f;
    }
    cfg.validate()?;
    let corpus = cfg.train_corpus()?;
    let test = cfg.test_corpus()?;
    let pcfg = cfg.pipeline();

    let decision = match (&corpus, &test) {
        (AnyCorpus::Classification(c), t) => {
            let t = match t {
                Some(AnyCorpus::Classification(t)) => Some(t),
                _ => None,
            };
            plan_training(c, t, &pcfg)?
        }
        (AnyCorpus::Token(c), _) => RegimeDecision::direct(Method::TokenClassification, c.n_min()),
    };
    emit(out, &json!({ "regime": decision }))?;
    if a.dry_run {
        return Ok(());
    }

    let outcome = match corpus {
        AnyCorpus::Classification(c) => {
            let test = match test {
                Some(AnyCorpus::Classification(t)) => Some(t),
                _ => None,
            };
            let llm = if cfg.llm.upsample { Some(client(&cfg, cfg.llm.transport)?) } else { None };
            let mut up = llm.as_ref().map(|cl| LlmUpsampler::new(cl, pcfg.perturbation.clone()));
            let up: Option<&mut dyn Upsampler> = up.as_mut().map(|u| u as &mut dyn Upsampler);
            train_classification(&c, test.as_ref(), &pcfg, up)?
        }
        AnyCorpus::Token(c) => {
            let test = match test {
                Some(AnyCorpus::Token(t)) => Some(t),
                Some(AnyCorpus::Classification(_)) => unreachable!("one format per config"),
                None => None,
            };
            train_ner(&c, test.as_ref(), &pcfg)?
        }
    };

    create_dir(&a.out)?;
    let model_dir = a.out.join("model");
    save(&outcome.model, &model_dir)?;
    let metrics = a.out.join("metrics.json");
    write_json(&metrics, &outcome.report)?;
    let r = &outcome.report;
    emit(
        out,
        &json!({
            "method": r.method,
            "train_size": r.train_size,
            "test_size": r.test_size,
            "macro_f1": r.closed_set.as_ref().map(|c| c.macro_f1),
            "routed_macro_f1": r.routed.as_ref().map(|c| c.macro_f1),
            "entity_f1": r.entities.as_ref().map(|e| e.strict.f1),
            "bundle": model_dir,
            "metrics": metrics,
        }),
    )
}

fn input_text(line: &str) -> String {
    if line.trim_start().starts_with('{') {
        if let Ok(serde_json::Value::Object(o)) = serde_json::from_str::<serde_json::Value>(line) {
            if let Some(serde_json::Value::String(t)) = o.get("text") {
                return t.clone();
            }
        }
    }
    line.to_string()
}

pub fn predict(a: &PredictArgs, out: &mut dyn Write) -> CmdResult {
    let mut mgr = InferenceManager::load(&a.bundle)?;
    if let Some(b) = a.batch_size {
        mgr = mgr.with_ceiling(b);
    }
    let lines: Vec<String> = match &a.input {
        Some(p) => fs::read_to_string(p).map_err(|e| io_err(p, e))?.lines().map(str::to_string).collect(),
        None => std::io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("cannot read stdin: {e}")))?,
    };
    let texts: Vec<String> = lines.iter().filter(|l| !l.trim().is_empty()).map(|l| input_text(l)).collect();
    if texts.is_empty() {
        return Ok(());
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    match mgr.task() {
        Task::Classification => {
            for p in mgr.predict(&refs)? {
                emit(out, &p)?;
            }
        }
        Task::TokenClassification => {
            for (text, entities) in refs.iter().zip(mgr.predict_entities(&refs)?) {
                emit(out, &json!({ "text": text, "entities": entities }))?;
            }
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(format!("CSV output failed: {e}"))
}

pub fn diagnose(a: &DiagnoseArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config.config, seed)?;
    let corpus = cfg.train_corpus()?;
    let evaluators: Vec<Evaluator> = if !a.evaluators.is_empty() {
        a.evaluators.iter().map(|s| Evaluator::from_str(s.trim())).collect::<Result<_, _>>()?
    } else {
        cfg.quality.evaluators.clone().unwrap_or_else(|| Evaluator::defaults_for(corpus.task()))
    };
    let qcfg = cfg.pipeline().quality;
    let report = run_diagnose(&corpus, &evaluators, &qcfg)?;
    create_dir(&a.out)?;

    let scores_path = a.out.join("scores.csv");
    let mut w = csv::Writer::from_path(&scores_path).map_err(csv_err)?;
    let mut header = vec!["id".to_string(), "text".to_string(), "label".to_string()];
    header.extend(evaluators.iter().map(|e| e.name().to_string()));
    header.push("flags".into());
    w.write_record(&header).map_err(csv_err)?;
    let rows: Vec<(String, String)> = match &corpus {
        AnyCorpus::Classification(c) => c.samples().iter().map(|s| (s.text.clone(), s.label.clone())).collect(),
        AnyCorpus::Token(c) => c
            .samples()
            .iter()
            .map(|s| {
                let labels: Vec<&str> = s.entities.iter().map(|e| e.label.as_str()).collect();
                (s.text.clone(), labels.join(" "))
            })
            .collect(),
    };
    for (id, (text, label)) in rows.into_iter().enumerate() {
        let mut rec = vec![id.to_string(), text, label];
        let scores = report.scores.get(&id);
        for e in &evaluators {
            rec.push(scores.and_then(|s| s.get(e.name())).map_or(String::new(), |v| format!("{v:.6}")));
        }
        let flags: Vec<&str> = report.flags.get(&id).map_or(Vec::new(), |f| f.iter().map(String::as_str).collect());
        rec.push(flags.join(";"));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(&scores_path, e))?;

    if let Some(points) = &report.cartography {
        write_data_map(points, &a.out)?;
    }

    let filtered_path = a.out.join("filtered.jsonl");
    match &report.filtered {
        AnyCorpus::Classification(c) => write_classification_jsonl(&filtered_path, c.samples())?,
        AnyCorpus::Token(c) => {
            let mut s = String::new();
            for sample in c.samples() {
                s.push_str(&serde_json::to_string(sample).map_err(|e| CliError::Internal(e.to_string()))?);
                s.push('\n');
            }
            fs::write(&filtered_path, s).map_err(|e| io_err(&filtered_path, e))?;
        }
    }

    let per_evaluator: BTreeMap<&str, usize> =
        evaluators.iter().map(|&e| (e.name(), report.flagged_by(e).len())).collect();
    let summary = json!({
        "task": corpus.task(),
        "evaluators": evaluators,
        "samples": corpus.len(),
        "flagged": report.flagged_ids().len(),
        "kept": report.kept_ids.len(),
        "per_evaluator": per_evaluator,
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    emit(out, &summary)
}

pub fn bench(a: &BenchArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config.config, seed)?;
    let corpus = classification(cfg.train_corpus()?, "bench")?;
    let far = if let Some(p) = &cfg.bench.far_ood {
        Some(load_classification(cfg.resolve(p))?)
    } else if let Some(name) = &cfg.dataset.name {
        let far_name = far_ood_pairing(name, &cfg.bench.pairings)?;
        let p = cfg.bench.sources.get(&far_name).ok_or_else(|| {
            CliError::Usage(format!("far-OOD dataset `{far_name}` has no path in bench.sources"))
        })?;
        Some(load_classification(cfg.resolve(p))?)
    } else {
        None
    };

    let benchmark = match &a.replay {
        Some(p) => {
            let raw = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let manifest: BenchmarkManifest =
                serde_json::from_str(&raw).map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))?;
            replay(&manifest, &corpus, far.as_ref())?
        }
        None => build_benchmark(&corpus, far.as_ref(), &cfg.benchmark())?,
    };
    let pcfg: PipelineConfig = cfg.pipeline();
    let report = run_protocol(&benchmark, &pcfg)?;

    create_dir(&a.out)?;
    write_json(&a.out.join("manifest.json"), &benchmark.manifest)?;
    write_json(&a.out.join("report.json"), &report)?;
    emit(
        out,
        &json!({
            "protocol": report.protocol,
            "id_classes": benchmark.manifest.id_classes.len(),
            "train_size": benchmark.train.len(),
            "test_size": benchmark.test.len(),
            "ood_test": benchmark.ood_test_count(),
            "macro_f1": report.report.macro_f1,
            "f1_in_scope": report.report.f1_in_scope,
            "f1_ood": report.report.f1_ood,
        }),
    )
}

pub fn gen_test(a: &GenTestArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let mut cfg = load_config(&a.config.config, seed)?;
    if let Some(t) = &a.transport {
        cfg.llm.transport = serde_json::from_value(json!(t))
            .map_err(|_| CliError::Usage(format!("invalid value `{t}` for --transport; expected mock or http")))?;
    }
    let per_class = a.per_class.unwrap_or(cfg.llm.per_class);
    let corpus = classification(cfg.train_corpus()?, "gen-test")?;
    let llm = client(&cfg, cfg.llm.transport)?;
    let generated = llm.generate_test_set(&corpus, per_class)?;

    let pcfg = cfg.pipeline();
    let (train_part, real_test) = match cfg.test_corpus()? {
        Some(t) => (corpus.clone(), classification(t, "gen-test")?),
        None => {
            let split = stratified_split(&corpus, pcfg.test_fraction, pcfg.seed)?;
            (split.train, split.test)
        }
    };
    let outcome = train_classification(&train_part, Some(&real_test), &pcfg, None)?;
    let BundleModel::Classification { classifier, .. } = &outcome.model else {
        return Err(CliError::Internal("expected a classification model".into()));
    };
    let delta = test_set_delta(classifier, &real_test, &generated)?;

    create_dir(&a.out)?;
    let set_path = a.out.join("generated.jsonl");
    let mut lines = String::new();
    for (s, hash) in generated.samples.iter().zip(&generated.provenance) {
        lines.push_str(&json!({"text": s.text, "label": s.label, "prompt_hash": hash}).to_string());
        lines.push('\n');
    }
    fs::write(&set_path, lines).map_err(|e| io_err(&set_path, e))?;
    let report = json!({
        "per_class": per_class,
        "counts": generated.counts(),
        "balanced": generated.is_balanced(),
        "rejected": generated.rejected,
        "shortfall": generated.shortfall,
        "requests": llm.request_count(),
        "domain": llm.cached_domain(),
        "delta": delta,
    });
    write_json(&a.out.join("gen_report.json"), &report)?;
    emit(
        out,
        &json!({
            "samples": generated.samples.len(),
            "balanced": generated.is_balanced(),
            "rejected": generated.rejected,
            "original_macro_f1": delta.original.macro_f1,
            "generated_macro_f1": delta.generated.macro_f1,
            "macro_f1_delta": delta.macro_f1_delta,
        }),
    )
}

pub fn augment(a: &AugmentArgs, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config.config, seed)?;
    let corpus = classification(cfg.train_corpus()?, "augment")?;
    let target = a.target.unwrap_or(cfg.upsample_target());
    let pcfg = cfg.pipeline();
    let perturbation = autonlu_core::augment::PerturbationConfig {
        seed: pcfg.seed ^ pcfg.perturbation.seed,
        ..pcfg.perturbation.clone()
    };
    let llm = if a.llm || cfg.llm.upsample { Some(client(&cfg, cfg.llm.transport)?) } else { None };
    let mut up: Box<dyn Upsampler + '_> = match &llm {
        Some(cl) => Box::new(LlmUpsampler::new(cl, perturbation)),
        None => Box::new(PerturbationUpsampler { config: perturbation }),
    };

    let mut samples = corpus.samples().to_vec();
    let mut added: BTreeMap<String, usize> = BTreeMap::new();
    for (label, &count) in corpus.class_counts() {
        if count >= target {
            continue;
        }
        let seeds: Vec<&str> = corpus.samples().iter().filter(|s| &s.label == label).map(|s| s.text.as_str()).collect();
        let texts = up.generate(label, &seeds, target - count)?;
        added.insert(label.clone(), texts.len());
        for t in texts {
            samples.push(autonlu_core::corpus::ClassificationSample::new(t, label.clone())?);
        }
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_classification_jsonl(&a.out, &samples)?;
    emit(out, &json!({ "written": samples.len(), "target": target, "added": added }))
}
