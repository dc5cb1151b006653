//! Subcommand implementations. Each per-seed artifact lives in
//! `<out>/seed-<N>/`; cross-seed summaries sit directly in `<out>/`.

use std::path::{Path, PathBuf};

use grail_core::data::{generate_synthetic, stratified_split, Split};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::girl::{
    girl_train, pseudo_label_baseline, supervised_train, GirlConfig, TrainOutcome, Unlabeled,
};
use grail_core::math::{pca_project, write_trajectory_csv, ParameterVector};
use grail_core::metrics::MatchCounts;
use grail_core::{gradient_check, TaskModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{GradcheckConfig, Method, RunConfig, Task};
use crate::error::{Context, Failure};
use crate::files::{read_string, seed_dir, write_atomic, write_json, write_jsonl, write_with};
use crate::tasks::{Ee, ModelShape, Ner, Pair, Re, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Synth,
    Split,
    Pretrain,
    Train,
    Eval,
    Gradcheck,
    ExportTrajectory,
}

/// Resolved invocation: the config plus command-line overrides.
pub struct Invocation {
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

pub fn run(command: Command, inv: &Invocation) -> Result<(), Failure> {
    match command {
        Command::Gradcheck => gradcheck(inv),
        Command::ExportTrajectory => export_trajectory(inv),
        _ => match inv.config.task {
            Task::Ner => run_task::<Ner>(command, inv),
            Task::Re => run_task::<Re>(command, inv),
            Task::Ee => run_task::<Ee>(command, inv),
        },
    }
}

fn run_task<K: TaskKind>(command: Command, inv: &Invocation) -> Result<(), Failure> {
    match command {
        Command::Synth => synth::<K>(inv),
        Command::Split => {
            let corpus = train_corpus::<K>(&inv.config)?;
            for &seed in &inv.seeds {
                let split = make_split::<K>(&inv.config, &corpus, seed)?;
                let dir = seed_dir(&inv.out, seed);
                write_atomic(&dir.join("split.json"), split.manifest_json().as_bytes())?;
                println!(
                    "seed {seed}: {} labeled, {} unlabeled, {} held back",
                    split.labeled.len(),
                    split.unlabeled.len(),
                    split.held_back.len()
                );
            }
            Ok(())
        }
        Command::Pretrain => {
            let corpus = train_corpus::<K>(&inv.config)?;
            for &seed in &inv.seeds {
                pretrain::<K>(inv, &corpus, seed)?;
            }
            Ok(())
        }
        Command::Train => {
            let corpus = train_corpus::<K>(&inv.config)?;
            for &seed in &inv.seeds {
                train::<K>(inv, &corpus, seed)?;
            }
            Ok(())
        }
        Command::Eval => eval::<K>(inv),
        Command::Gradcheck | Command::ExportTrajectory => unreachable!("task-independent commands"),
    }
}

// ---------------------------------------------------------------------------
// Corpus and split
// ---------------------------------------------------------------------------

fn synth<K: TaskKind>(inv: &Invocation) -> Result<(), Failure> {
    let mut spec = inv.config.synth.clone();
    if let Some(&seed) = inv.seeds.first() {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec).invalid("[synth]")?;
    let templates = corpus.template_ids();
    let records = K::from_synth(corpus);
    write_with(&inv.out.join(K::CORPUS_FILE), |buf| K::render(&records, buf))?;
    write_json(
        &inv.out.join("synth.json"),
        &json!({
            "task": K::NAME,
            "sentences": spec.sentences,
            "noise": spec.noise,
            "lexicon": spec.lexicon_size,
            "seed": spec.seed,
            "templates": templates,
        }),
    )?;
    println!("wrote {} sentences to {}", records.len(), inv.out.join(K::CORPUS_FILE).display());
    Ok(())
}

fn train_corpus<K: TaskKind>(config: &RunConfig) -> Result<Vec<K::Record>, Failure> {
    let records = match &config.train {
        Some(path) => K::read(path)?,
        None => K::from_synth(generate_synthetic(&config.synth).invalid("[synth]")?),
    };
    if records.is_empty() {
        return Err(Failure::validation("training corpus is empty"));
    }
    Ok(records)
}

fn make_split<K: TaskKind>(config: &RunConfig, corpus: &[K::Record], seed: u64) -> Result<Split, Failure> {
    stratified_split(corpus, K::class, &config.split_for(seed)).invalid("[split]")
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile<L> {
    task: String,
    method: String,
    seed: u64,
    encoder: EncoderConfig,
    head_hidden: usize,
    labels: L,
    params: Vec<f64>,
}

fn shape(config: &RunConfig) -> ModelShape {
    ModelShape {
        encoder: config.encoder,
        head_hidden: config.head_hidden,
    }
}

fn save_model<K: TaskKind>(
    dir: &Path,
    prep: &Prepared<K>,
    shape: &ModelShape,
    method: &str,
    seed: u64,
    params: &ParameterVector,
) -> Result<(), Failure> {
    debug_assert_eq!(params.len(), prep.model.layout().len());
    write_with(&dir.join("vocab.txt"), |buf| prep.vocab.write(buf))?;
    write_json(
        &dir.join("model.json"),
        &ModelFile {
            task: K::NAME.to_string(),
            method: method.to_string(),
            seed,
            encoder: shape.encoder,
            head_hidden: shape.head_hidden,
            labels: &prep.labels,
            params: params.values().to_vec(),
        },
    )
}

struct Loaded<K: TaskKind> {
    model: K::Model,
    params: ParameterVector,
    method: String,
}

fn load_model<K: TaskKind>(dir: &Path) -> Result<Loaded<K>, Failure> {
    let model_path = dir.join("model.json");
    let vocab_path = dir.join("vocab.txt");
    let file: ModelFile<K::Labels> =
        serde_json::from_str(&read_string(&model_path)?).invalid(model_path.display())?;
    if file.task != K::NAME {
        return Err(Failure::validation(format!(
            "{} holds a `{}` model but the config task is `{}`",
            model_path.display(),
            file.task,
            K::NAME
        )));
    }
    let vocab = Vocabulary::read(crate::files::open(&vocab_path)?).invalid(vocab_path.display())?;
    let shape = ModelShape {
        encoder: file.encoder,
        head_hidden: file.head_hidden,
    };
    let model = K::build(vocab, &file.labels, &shape)?;
    let params = ParameterVector::from_values(model.layout().clone(), file.params).invalid(model_path.display())?;
    Ok(Loaded {
        model,
        params,
        method: file.method,
    })
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Prepared<K: TaskKind> {
    model: K::Model,
    vocab: Vocabulary,
    labels: K::Labels,
    labeled: Vec<Pair<K>>,
    unlabeled: Vec<Pair<K>>,
    split: Split,
}

fn prepare<K: TaskKind>(config: &RunConfig, corpus: &[K::Record], seed: u64) -> Result<Prepared<K>, Failure> {
    let split = make_split::<K>(config, corpus, seed)?;
    let labeled = pick(corpus, &split.labeled);
    let unlabeled = pick(corpus, &split.unlabeled);
    let vocab = Vocabulary::build(
        labeled.iter().chain(&unlabeled).map(K::tokens),
        config.min_count,
    )
    .invalid("[encoder] min_count")?;
    let labels = K::labels(corpus)?;
    let model = K::build(vocab.clone(), &labels, &shape(config))?;
    let labeled = K::examples(&model, &labeled).invalid("labeled data")?;
    let unlabeled = K::examples(&model, &unlabeled).invalid("unlabeled data")?;
    Ok(Prepared {
        model,
        vocab,
        labels,
        labeled,
        unlabeled,
        split,
    })
}

fn write_common(dir: &Path, config: &RunConfig, split: &Split) -> Result<(), Failure> {
    write_atomic(&dir.join("config.ini"), config.source.as_bytes())?;
    write_atomic(&dir.join("split.json"), split.manifest_json().as_bytes())
}

fn pretrain_rows(losses: &[f64]) -> Vec<Value> {
    losses
        .iter()
        .enumerate()
        .map(|(epoch, loss)| json!({ "epoch": epoch, "loss": loss }))
        .collect()
}

fn pretrain<K: TaskKind>(inv: &Invocation, corpus: &[K::Record], seed: u64) -> Result<(), Failure> {
    let config = &inv.config;
    let prep = prepare::<K>(config, corpus, seed)?;
    let dir = seed_dir(&inv.out, seed).join("pretrain");
    let params = prep.model.init_params(seed);
    let out = supervised_train(&prep.model, params, prep.labeled.clone(), &config.girl_for(seed))
        .runtime(format!("pretraining seed {seed}"))?;
    write_common(&dir, config, &prep.split)?;
    write_jsonl(&dir.join("pretrain.jsonl"), &pretrain_rows(&out.log.pretrain_losses))?;
    save_model(&dir, &prep, &shape(config), "pretrain", seed, &out.learner.params)?;
    let last = out.log.pretrain_losses.last().copied().unwrap_or(f64::NAN);
    println!("seed {seed}: pretrained {} epochs, final loss {last:.6}", out.log.pretrain_losses.len());
    Ok(())
}

fn train<K: TaskKind>(inv: &Invocation, corpus: &[K::Record], seed: u64) -> Result<(), Failure> {
    let config = &inv.config;
    let prep = prepare::<K>(config, corpus, seed)?;
    let dir = seed_dir(&inv.out, seed);
    let girl_cfg: GirlConfig = config.girl_for(seed);
    let params = prep.model.init_params(seed);
    let (inputs, golds): (Vec<_>, Vec<_>) = prep.unlabeled.iter().cloned().unzip();
    let unlabeled = Unlabeled::with_hidden_gold(inputs, golds).runtime("unlabeled data")?;
    let outcome: TrainOutcome<_, _> = match config.method {
        Method::Supervised => supervised_train(&prep.model, params, prep.labeled.clone(), &girl_cfg),
        Method::PseudoLabeling => {
            pseudo_label_baseline(&prep.model, params, prep.labeled.clone(), &unlabeled, config.threshold, &girl_cfg)
        }
        Method::Girl => girl_train(&prep.model, params, prep.labeled.clone(), &unlabeled, &girl_cfg),
    }
    .runtime(format!("training seed {seed}"))?;

    let log = &outcome.log;
    write_common(&dir, config, &prep.split)?;
    write_jsonl(&dir.join("pretrain.jsonl"), &pretrain_rows(&log.pretrain_losses))?;
    write_atomic(&dir.join("run.jsonl"), log.steps_jsonl().as_bytes())?;
    write_jsonl(&dir.join("segments.jsonl"), &log.segments)?;
    write_jsonl(&dir.join("snapshots.jsonl"), &log.snapshots)?;
    let prf = |c: Option<MatchCounts>| c.map(|c| c.prf());
    write_json(
        &dir.join("train.json"),
        &json!({
            "task": K::NAME,
            "method": config.method.name(),
            "seed": seed,
            "labeled": prep.split.labeled.len(),
            "unlabeled": prep.split.unlabeled.len(),
            "pool_size": outcome.pool.len(),
            "steps": log.steps.len(),
            "selected": log.steps.iter().filter(|s| s.selected).count(),
            "optimizer_steps": outcome.learner.optimizer.step_count(),
            "pseudo_all": prf(log.pseudo_all),
            "pseudo_selected": prf(log.pseudo_selected),
        }),
    )?;
    save_model(&dir, &prep, &shape(config), config.method.name(), seed, &outcome.learner.params)?;
    println!(
        "seed {seed}: {} finished, pool {} after {} episode steps",
        config.method.name(),
        outcome.pool.len(),
        log.steps.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn test_records<K: TaskKind>(config: &RunConfig, dir: &Path) -> Result<Vec<K::Record>, Failure> {
    if let Some(path) = &config.test {
        return K::read(path);
    }
    let corpus = train_corpus::<K>(config)?;
    let manifest = dir.join("split.json");
    let split = Split::from_manifest(&read_string(&manifest)?, corpus.len()).invalid(manifest.display())?;
    if split.held_back.is_empty() {
        return Err(Failure::validation(
            "no [data] test file and the split holds nothing back for testing",
        ));
    }
    Ok(pick(&corpus, &split.held_back))
}

fn score<K: TaskKind>(
    loaded: &Loaded<K>,
    records: &[K::Record],
    what: &str,
    seed: u64,
) -> Result<Map<String, Value>, Failure> {
    let examples = K::examples(&loaded.model, records).invalid(what)?;
    let mut preds = Vec::with_capacity(examples.len());
    let mut counts = MatchCounts::default();
    for (x, gold) in &examples {
        let pred = loaded.model.predict(&loaded.params, x).runtime("prediction")?;
        counts += loaded.model.match_counts(&pred, gold);
        preds.push(pred);
    }
    let golds: Vec<_> = examples.into_iter().map(|(_, y)| y).collect();
    let prf = counts.prf();
    let mut m = Map::new();
    m.insert("task".into(), json!(K::NAME));
    m.insert("method".into(), json!(loaded.method));
    m.insert("seed".into(), json!(seed));
    m.insert("precision".into(), json!(prf.precision));
    m.insert("recall".into(), json!(prf.recall));
    m.insert("f1".into(), json!(prf.f1));
    m.extend(K::extra_metrics(&preds, &golds).runtime("metrics")?);
    Ok(m)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(runs: &[Map<String, Value>], path: &[&str]) -> Value {
    let values: Vec<f64> = runs
        .iter()
        .filter_map(|r| {
            let mut v = r.get(path[0])?;
            for key in &path[1..] {
                v = v.get(key)?;
            }
            v.as_f64()
        })
        .collect();
    let (mean, std) = mean_std(&values);
    json!({ "mean": mean, "std": std })
}

fn eval<K: TaskKind>(inv: &Invocation) -> Result<(), Failure> {
    let mut runs = Vec::new();
    let valid = inv.config.valid.as_deref().map(K::read).transpose()?;
    for &seed in &inv.seeds {
        let dir = seed_dir(&inv.out, seed);
        let loaded = load_model::<K>(&dir)?;
        if let Some(records) = &valid {
            write_json(&dir.join("metrics.valid.json"), &score(&loaded, records, "validation data", seed)?)?;
        }
        let metrics = score(&loaded, &test_records::<K>(&inv.config, &dir)?, "test data", seed)?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        println!(
            "seed {seed}: P {:.4} R {:.4} F1 {:.4}",
            metrics["precision"].as_f64().unwrap_or(0.0),
            metrics["recall"].as_f64().unwrap_or(0.0),
            metrics["f1"].as_f64().unwrap_or(0.0)
        );
        runs.push(metrics);
    }
    let mut summary = Map::new();
    summary.insert("task".into(), json!(K::NAME));
    summary.insert("method".into(), runs[0]["method"].clone());
    summary.insert("seeds".into(), json!(inv.seeds));
    for key in ["precision", "recall", "f1"] {
        summary.insert(key.into(), aggregate(&runs, &[key]));
    }
    for sub in ["trig_c", "arg_c"] {
        if runs[0].contains_key(sub) {
            let mut m = Map::new();
            for key in ["precision", "recall", "f1"] {
                m.insert(key.into(), aggregate(&runs, &[sub, key]));
            }
            summary.insert(sub.into(), Value::Object(m));
        }
    }
    summary.insert("runs".into(), Value::Array(runs.into_iter().map(Value::Object).collect()));
    let f1 = &summary["f1"];
    println!(
        "F1 over {} seed(s): {:.4} ± {:.4}",
        inv.seeds.len(),
        f1["mean"].as_f64().unwrap_or(0.0),
        f1["std"].as_f64().unwrap_or(0.0)
    );
    write_json(&inv.out.join("metrics.json"), &summary)
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct GradcheckRow {
    task: &'static str,
    draws: usize,
    parameters: usize,
    max_relative_error: f64,
    passed: bool,
}

fn gradcheck_task<K: TaskKind>(cfg: &GradcheckConfig, seed: u64) -> Result<GradcheckRow, Failure> {
    let mut spec = grail_core::data::SynthSpec::new(K::SYNTH, cfg.draws, seed);
    spec.lexicon_size = 8;
    let records = K::from_synth(generate_synthetic(&spec).runtime("gradcheck corpus")?);
    let vocab = Vocabulary::build(records.iter().map(K::tokens), 1).runtime("gradcheck vocabulary")?;
    let labels = K::labels(&records)?;
    let shape = ModelShape {
        encoder: EncoderConfig {
            emb_dim: 4,
            window: 1,
            hidden_dim: 5,
            max_len: 64,
        },
        head_hidden: 4,
    };
    let model = K::build(vocab, &labels, &shape)?;
    let examples = K::examples(&model, &records).runtime("gradcheck examples")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (draw, (x, y)) in examples.iter().enumerate() {
        let mut params = model.init_params(seed.wrapping_add(draw as u64));
        for v in params.values_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        let err = gradient_check(&model, &params, x, y, cfg.eps).runtime(format!("{} gradient check", K::NAME))?;
        worst = worst.max(err);
    }
    Ok(GradcheckRow {
        task: K::NAME,
        draws: examples.len(),
        parameters: model.layout().len(),
        max_relative_error: worst,
        passed: worst < cfg.tolerance,
    })
}

fn gradcheck(inv: &Invocation) -> Result<(), Failure> {
    let cfg = &inv.config.gradcheck;
    let seed = inv.seeds[0];
    let rows = vec![
        gradcheck_task::<Ner>(cfg, seed)?,
        gradcheck_task::<Re>(cfg, seed)?,
        gradcheck_task::<Ee>(cfg, seed)?,
    ];
    for r in &rows {
        println!(
            "{:<3} draws {:>3}  params {:>6}  max relative error {:.3e}  {}",
            r.task,
            r.draws,
            r.parameters,
            r.max_relative_error,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    write_json(
        &inv.out.join("gradcheck.json"),
        &json!({ "seed": seed, "eps": cfg.eps, "tolerance": cfg.tolerance, "models": rows }),
    )?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.task).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "gradient check above tolerance {:e} for: {}",
            cfg.tolerance,
            failed.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------------
// Trajectory export
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct SnapshotRow {
    step: u64,
    values: Vec<f64>,
}

fn export_trajectory(inv: &Invocation) -> Result<(), Failure> {
    for &seed in &inv.seeds {
        let dir = seed_dir(&inv.out, seed);
        let path = dir.join("snapshots.jsonl");
        let text = read_string(&path)?;
        let mut steps = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: SnapshotRow =
                serde_json::from_str(line).invalid(format!("{} line {}", path.display(), i + 1))?;
            steps.push(row.step);
            values.push(row.values);
        }
        if values.len() < 3 {
            return Err(Failure::validation(format!(
                "{} has {} snapshots; at least 3 are needed",
                path.display(),
                values.len()
            )));
        }
        let projection = pca_project(&values, 2).invalid(path.display())?;
        write_with(&dir.join("trajectory.csv"), |buf| write_trajectory_csv(&steps, &projection, buf))?;
        let total: f64 = projection.variances.iter().sum();
        write_json(
            &dir.join("trajectory.json"),
            &json!({ "snapshots": values.len(), "variances": projection.variances, "top_two_variance": total }),
        )?;
        println!("seed {seed}: projected {} snapshots", values.len());
    }
    Ok(())
}

