//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.
//!
//! Criteria 1 to 5 exercise the library against independent oracles written
//! here; 6 is the desk-scale self-training comparison; 7 to 9 drive the
//! `grail` binary.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{run, snapshot_tree, write_config};
use grail_core::data::{
    conll_entity_types, generate_synthetic, ner_class, ner_examples, stratified_split, ConllSentence,
    SplitMode, SplitSpec, SynthCorpus, SynthSpec, SynthTask,
};
use grail_core::ee::{Argument, CrfView, EeModel, EeSchema, EventGraph};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::girl::{
    act, compute_standard_gradient, girl_train, pseudo_gradient, pseudo_label_baseline, reward,
    restrict, rl_episode, supervised_pretrain, EpisodeOptions, GirlConfig, GradientScope, Learner, RlState,
    Unlabeled,
};
use grail_core::math::{AdamWConfig, GradientVector, Layout, ParameterVector};
use grail_core::ner::{decode_spans, span_f1, NerModel, Span, TagSet};
use grail_core::re::{ReInput, ReModel, RelationLabels};
use grail_core::{gradient_check, TaskModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        emb_dim: 4,
        window: 1,
        hidden_dim: 5,
        max_len: 16,
    }
}

fn word_vocab() -> Vocabulary {
    Vocabulary::build([WORDS.to_vec()], 1).unwrap()
}

fn sentence(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                "unseen".to_string()
            } else {
                WORDS[rng.gen_range(0..WORDS.len())].to_string()
            }
        })
        .collect()
}

fn jittered(model: &impl TaskModel, seed: u64, rng: &mut ChaCha8Rng) -> ParameterVector {
    let mut p = model.init_params(seed);
    for v in p.values_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    p
}

fn random_spans(rng: &mut ChaCha8Rng, len: usize, types: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.4) {
            let end = (i + rng.gen_range(1..=2)).min(len);
            spans.push(Span {
                start: i,
                end,
                label: rng.gen_range(0..types),
            });
            i = end;
        } else {
            i += 1;
        }
    }
    spans
}

fn synthetic_ner(sentences: usize, noise: f64, seed: u64) -> Vec<ConllSentence> {
    let spec = SynthSpec {
        noise,
        ..SynthSpec::new(SynthTask::Ner, sentences, seed)
    };
    match generate_synthetic(&spec).unwrap() {
        SynthCorpus::Ner(v) => v.into_iter().map(|g| g.record).collect(),
        _ => unreachable!(),
    }
}

type NerPair = (Vec<String>, Vec<usize>);

struct NerSetup {
    model: NerModel,
    tags: TagSet,
    labeled: Vec<NerPair>,
    unlabeled: Unlabeled<Vec<String>, Vec<usize>>,
    test: Vec<NerPair>,
}

fn ner_setup(corpus: &[ConllSentence], labeled: f64, unlabeled: f64, seed: u64, config: EncoderConfig) -> NerSetup {
    let spec = SplitSpec {
        mode: SplitMode::Fraction(labeled),
        unlabeled_fraction: unlabeled,
        segments: 10,
        seed,
    };
    let split = stratified_split(corpus, ner_class, &spec).unwrap();
    let tags = TagSet::new(conll_entity_types(corpus)).unwrap();
    let ex = ner_examples(corpus, &tags).unwrap();
    let pick = |ids: &[usize]| -> Vec<NerPair> { ids.iter().map(|&i| (ex[i].tokens.clone(), ex[i].tags.clone())).collect() };
    let labeled = pick(&split.labeled);
    let unl = pick(&split.unlabeled);
    let vocab = Vocabulary::build(labeled.iter().chain(&unl).map(|(t, _)| t.iter()), 1).unwrap();
    let (inputs, gold): (Vec<_>, Vec<_>) = unl.into_iter().unzip();
    NerSetup {
        model: NerModel::new(vocab, tags.clone(), config),
        tags,
        labeled,
        unlabeled: Unlabeled::with_hidden_gold(inputs, gold).unwrap(),
        test: pick(&split.held_back),
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness
// ---------------------------------------------------------------------------

const DRAWS: usize = 10;

fn worst_over_draws<M: TaskModel>(
    model: &M,
    seed: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (M::Input, M::Label),
) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for d in 0..DRAWS {
        let params = jittered(model, d as u64, &mut rng);
        let (x, y) = draw(&mut rng);
        let err = gradient_check(model, &params, &x, &y, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let tags = TagSet::new(["PER", "LOC", "ORG"]).unwrap();
    let ner = NerModel::new(word_vocab(), tags.clone(), tiny_encoder());
    let ner_err = worst_over_draws(&ner, 1, |rng| {
        let len = rng.gen_range(1..=6);
        let x = sentence(rng, len);
        let y = tags.encode_spans(len, &random_spans(rng, len, 3)).unwrap();
        (x, y)
    })?;

    let labels = RelationLabels::new(["founded_by", "lives_in", "no_relation"]).unwrap();
    let re = ReModel::new(word_vocab(), labels, tiny_encoder());
    let re_err = worst_over_draws(&re, 2, |rng| {
        let len = rng.gen_range(2..=7);
        let tokens = sentence(rng, len);
        let cut = rng.gen_range(1..len);
        let left = (rng.gen_range(0..cut), cut);
        let right = (cut, rng.gen_range(cut + 1..=len));
        let (head, tail) = if rng.gen_bool(0.5) { (left, right) } else { (right, left) };
        (ReInput { tokens, head, tail }, rng.gen_range(0..3))
    })?;

    let schema = EeSchema {
        entity_types: vec!["PER".into(), "LOC".into()],
        event_types: vec!["Attack".into(), "Meet".into()],
        roles: vec!["Agent".into(), "Place".into()],
    };
    let ee = EeModel::new(word_vocab(), schema, tiny_encoder(), 4).unwrap();
    let ee_err = worst_over_draws(&ee, 3, |rng| {
        let len = rng.gen_range(2..=6);
        let x = sentence(rng, len);
        let mut g = EventGraph::default();
        for s in random_spans(rng, len, 2) {
            if g.triggers.is_empty() || rng.gen_bool(0.4) {
                g.triggers.push(s);
            } else {
                g.entities.push(s);
            }
        }
        for t in 0..g.triggers.len() {
            for e in 0..g.entities.len() {
                if rng.gen_bool(0.6) {
                    g.arguments.push(Argument {
                        trigger: t,
                        entity: e,
                        role: rng.gen_range(0..2),
                    });
                }
            }
        }
        (x, g)
    })?;
    let elapsed = started.elapsed();
    let worst = ner_err.max(re_err).max(ee_err);
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "{DRAWS} draws each, max rel err NER {ner_err:.2e} RE {re_err:.2e} EE {ee_err:.2e} (< 1e-4), {:.1}s (< 120s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. CRF against enumeration
// ---------------------------------------------------------------------------

fn score_path(em: &[f64], tr: &[f64], n: usize, path: &[usize]) -> f64 {
    let width = n + 2;
    let len = path.len();
    let mut s = tr[n * width + path[0]] + tr[path[len - 1] * width + n + 1];
    for i in 0..len {
        s += em[i * n + path[i]];
        if i > 0 {
            s += tr[path[i - 1] * width + path[i]];
        }
    }
    s
}

/// Log-partition and best score by enumerating all `n^len` paths.
fn brute_force(em: &[f64], tr: &[f64], n: usize, len: usize) -> (f64, f64) {
    let mut scores = Vec::new();
    let mut path = vec![0usize; len];
    loop {
        scores.push(score_path(em, tr, n, &path));
        let mut i = 0;
        loop {
            if i == len {
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                return (log_z, max);
            }
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut instances, mut worst_z, mut worst_v) = (0, 0.0f64, 0.0f64);
    for n in 1..=6usize {
        let mut len = 1;
        while n.pow(len as u32) <= 4096 {
            for _ in 0..3 {
                let em: Vec<f64> = (0..n * len).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let tr: Vec<f64> = (0..(n + 2) * (n + 2)).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let crf = CrfView::new(&em, &tr, n).map_err(|e| e.to_string())?;
                let (log_z, max) = brute_force(&em, &tr, n, len);
                worst_z = worst_z.max((crf.log_partition() - log_z).abs());
                let best = crf.viterbi();
                let score = score_path(&em, &tr, n, &best);
                worst_v = worst_v.max((score - max).abs());
                instances += 1;
            }
            // a single tag never reaches the size bound
            if n == 1 && len == 12 {
                break;
            }
            len += 1;
        }
    }
    let elapsed = started.elapsed();
    check(
        worst_z < 1e-8 && worst_v < 1e-8 && elapsed < Duration::from_secs(60),
        format!(
            "{instances} instances with |tags|^L <= 4096: |logZ - brute| max {worst_z:.1e}, |viterbi - max| {worst_v:.1e} (< 1e-8), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Reward identities
// ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut b = Layout::builder();
    b.push("a", &[7, 3]);
    b.push("b", &[11]);
    let layout = b.build();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let g = GradientVector::from_values(layout.clone(), values.clone()).unwrap();
        let neg = GradientVector::from_values(layout.clone(), values.iter().map(|v| -v).collect()).unwrap();
        worst = worst.max((reward(&g, &g).unwrap() - 1.0).abs());
        worst = worst.max((reward(&g, &neg).unwrap() + 1.0).abs());
        for c in [-1e3, -2.5, -1e-3, 1e-3, 0.7, 42.0] {
            let scaled = GradientVector::from_values(layout.clone(), values.iter().map(|v| c * v).collect()).unwrap();
            worst = worst.max((reward(&g, &scaled).unwrap() - f64::signum(c)).abs());
        }
    }
    let tags = TagSet::new(["PER", "LOC"]).unwrap();
    let model = NerModel::new(word_vocab(), tags, tiny_encoder());
    let mut imitation: f64 = 0.0;
    for seed in 0..10 {
        let params = jittered(&model, seed, &mut rng);
        let x = sentence(&mut rng, 5);
        let y = act(&model, &params, &x).unwrap();
        let g_l = compute_standard_gradient(&model, &params, &[(x.clone(), y.clone())]).unwrap();
        let (_, g_p) = pseudo_gradient(&model, &params, &x, &y).unwrap();
        imitation = imitation.max((reward(&g_l, &g_p).unwrap() - 1.0).abs());
    }
    check(
        worst < 1e-12 && imitation < 1e-12,
        format!("max |R - expected| {worst:.1e}, exact imitation |R - 1| {imitation:.1e} (< 1e-12)"),
    )
}

// ---------------------------------------------------------------------------
// 4. Running-mean replay
// ---------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let lambda = 0.5;
    let setup = ner_setup(&synthetic_ner(300, 0.0, 4), 0.1, 0.5, 4, EncoderConfig {
        emb_dim: 8,
        window: 1,
        hidden_dim: 12,
        max_len: 64,
    });
    let model = &setup.model;
    let mut learner = Learner::new(model.init_params(4), AdamWConfig { lr: 5e-3, ..AdamWConfig::default() });
    supervised_pretrain(model, &mut learner, &setup.labeled, 15, 8, &mut ChaCha8Rng::seed_from_u64(4))
        .map_err(|e| e.to_string())?;
    let n0 = setup.labeled.len();
    let g0 = compute_standard_gradient(model, &learner.params, &setup.labeled).map_err(|e| e.to_string())?;
    let head = model.head_segments();
    let mut state = RlState::new(setup.labeled.clone(), restrict(&g0, &head)).unwrap();

    // The logged run: episodes with the learner moving between them.
    let mut log = Vec::new();
    for batch in setup.unlabeled.inputs().chunks(16) {
        let theta = learner.params.clone();
        let opts = EpisodeOptions {
            lambda,
            scope: &head,
            restrict_scope: true,
            lr: None,
            trace: true,
        };
        let ep = rl_episode(model, &mut learner, &mut state, batch, opts).map_err(|e| e.to_string())?;
        log.push((theta, ep));
    }

    // Replay from the closed form mean(N0·g0 + Σ selected g_p), with g_p
    // recomputed at the episode's starting parameters and cut to the head.
    let head_ranges: Vec<_> = head.iter().map(|&id| model.layout().range(id)).collect();
    let in_head = |i: usize| head_ranges.iter().any(|r| r.contains(&i));
    let mut sum: Vec<f64> = g0
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| if in_head(i) { v * n0 as f64 } else { 0.0 })
        .collect();
    let mut count = n0;
    let (mut worst, mut steps, mut selected, mut previous_pool) = (0.0f64, 0usize, 0usize, n0);
    let mut monotone = true;
    for (theta, ep) in &log {
        for (sample, traced) in ep.samples.iter().zip(&ep.g_l_trace) {
            if sample.reward > lambda {
                let (_, g_p) = model.loss_and_grad(theta, &sample.input, &sample.label).map_err(|e| e.to_string())?;
                for (i, (s, g)) in sum.iter_mut().zip(g_p.values()).enumerate() {
                    if in_head(i) {
                        *s += g;
                    }
                }
                count += 1;
                selected += 1;
            }
            let pool = n0 + selected;
            monotone &= pool >= previous_pool && sample.selected == (sample.reward > lambda);
            previous_pool = pool;
            for (s, t) in sum.iter().zip(traced.values()) {
                worst = worst.max((s / count as f64 - t).abs());
            }
            steps += 1;
        }
    }
    let pool_ok = state.pool_size() == n0 + selected;

    // The same bookkeeping on a full training run's log.
    let config = GirlConfig {
        pretrain_epochs: 30,
        segments: 3,
        episode_len: 8,
        batch_size: 8,
        optimizer: AdamWConfig { lr: 5e-3, ..AdamWConfig::default() },
        scope: GradientScope::HeadOnly,
        seed: 4,
        ..GirlConfig::default()
    };
    let out = girl_train(model, model.init_params(4), setup.labeled.clone(), &setup.unlabeled, &config)
        .map_err(|e| e.to_string())?;
    let mut last = n0;
    let mut run_ok = true;
    for s in &out.log.steps {
        run_ok &= s.pool_size >= last;
        last = s.pool_size;
    }
    let run_selected = out.log.steps.iter().filter(|s| s.reward > 0.5).count();
    run_ok &= out.pool.len() == n0 + run_selected && last == out.pool.len();

    check(
        worst < 1e-10 && pool_ok && monotone && run_ok && selected > 0,
        format!(
            "{steps} replayed steps, {selected} selections, max |g_l - replay| {worst:.1e} (< 1e-10); \
             pool {} = {n0} + #(R > 0.5); training log pool {} = {n0} + {run_selected}, nondecreasing: {run_ok}",
            state.pool_size(),
            out.pool.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. All-ones episode equals a supervised step
// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tags = TagSet::new(["PER", "LOC"]).unwrap();
    let model = NerModel::new(word_vocab(), tags, tiny_encoder());
    let (mut worst_param, mut worst_reward) = (0.0f64, 0.0f64);
    for trial in 0..5u64 {
        let params = jittered(&model, trial, &mut rng);
        let x = sentence(&mut rng, 6);
        let y = act(&model, &params, &x).unwrap();
        let copies = vec![x.clone(); 8];

        let mut rl = Learner::new(params.clone(), AdamWConfig::default());
        let g_l = compute_standard_gradient(&model, &params, &[(x.clone(), y.clone())]).unwrap();
        let mut state = RlState::new(vec![(x.clone(), y.clone())], g_l).unwrap();
        let opts = EpisodeOptions {
            lambda: 0.5,
            scope: &[],
            restrict_scope: false,
            lr: None,
            trace: false,
        };
        let ep = rl_episode(&model, &mut rl, &mut state, &copies, opts).map_err(|e| e.to_string())?;
        for s in &ep.samples {
            worst_reward = worst_reward.max((s.reward - 1.0).abs());
        }

        let mut sup = Learner::new(params.clone(), AdamWConfig::default());
        let mut summed = GradientVector::zeros(model.layout().clone());
        for x in &copies {
            model.accumulate_gradient(&params, x, &y, 1.0, &mut summed).unwrap();
        }
        sup.optimizer.step(&mut sup.params, &summed).unwrap();
        for (a, b) in rl.params.values().iter().zip(sup.params.values()) {
            worst_param = worst_param.max((a - b).abs());
        }
    }
    check(
        worst_param < 1e-10 && worst_reward < 1e-12,
        format!("rewards within {worst_reward:.1e} of 1; max |θ_rl - θ_sup| {worst_param:.1e} (< 1e-10)"),
    )
}

// ---------------------------------------------------------------------------
// 6. Desk-scale comparison
// ---------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let seeds = 5u64;
    let (mut girl_f1, mut pl_f1, mut girl_p, mut pl_p) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let corpus = synthetic_ner(2000, 0.1, seed);
        let setup = ner_setup(&corpus, 0.05, 0.5, seed, EncoderConfig::default());
        let config = GirlConfig {
            pretrain_epochs: 15,
            scope: GradientScope::HeadOnly,
            seed,
            ..GirlConfig::default()
        };
        let model = &setup.model;
        let eval = |params: &ParameterVector| {
            let preds: Vec<_> = setup.test.iter().map(|(x, _)| decode_spans(&setup.tags, &model.predict(params, x).unwrap())).collect();
            let golds: Vec<_> = setup.test.iter().map(|(_, y)| decode_spans(&setup.tags, y)).collect();
            span_f1(&preds, &golds).unwrap().f1
        };
        let init = model.init_params(seed);
        let girl = girl_train(model, init.clone(), setup.labeled.clone(), &setup.unlabeled, &config).map_err(|e| e.to_string())?;
        let pl = pseudo_label_baseline(model, init, setup.labeled.clone(), &setup.unlabeled, 0.9, &config).map_err(|e| e.to_string())?;
        girl_f1 += eval(&girl.learner.params);
        pl_f1 += eval(&pl.learner.params);
        girl_p += girl.log.pseudo_selected.unwrap_or_default().prf().precision;
        pl_p += pl.log.pseudo_selected.unwrap_or_default().prf().precision;
    }
    let n = seeds as f64;
    let (girl_f1, pl_f1, girl_p, pl_p) = (girl_f1 / n, pl_f1 / n, girl_p / n, pl_p / n);
    let elapsed = started.elapsed();
    check(
        girl_f1 * 100.0 >= pl_f1 * 100.0 - 0.5 && girl_p >= pl_p && elapsed < Duration::from_secs(900),
        format!(
            "5 seeds: span-F1 girl {:.2} vs pl {:.2} (>= pl - 0.5); selected precision girl {:.4} vs pl {:.4}; {:.0}s (< 900s)",
            girl_f1 * 100.0,
            pl_f1 * 100.0,
            girl_p,
            pl_p,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7 to 9. Command-line runs
// ---------------------------------------------------------------------------

fn cli_config(method: &str) -> String {
    format!(
        "[run]\ntask = ner\nmethod = {method}\nseeds = 0,1\nout = out\n\n\
         [synth]\nsentences = 300\nnoise = 0.1\nseed = 9\n\n\
         [split]\nfraction = 0.1\nunlabeled = 0.5\nsegments = 4\n\n\
         [encoder]\nemb_dim = 8\nwindow = 1\nhidden_dim = 12\n\n\
         [girl]\npretrain_epochs = 5\nepisode_len = 8\nbatch_size = 8\nscope = head-only\n"
    )
}

fn step_keys(path: &Path) -> Result<Vec<(u64, u64, u64)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
            let get = |k: &str| v[k].as_u64().ok_or_else(|| format!("missing {k}"));
            Ok((get("segment")?, get("batch")?, get("t")?))
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let mut keys = Vec::new();
    for method in ["pseudo-labeling", "girl"] {
        let sub = dir.path().join(method);
        fs::create_dir_all(&sub).unwrap();
        write_config(&sub, &cli_config(method));
        if run(&sub, "train", &["--seed", "3"]) != 0 {
            return Err(format!("train {method} failed"));
        }
        keys.push(step_keys(&sub.join("out/seed-3/run.jsonl"))?);
    }
    check(
        !keys[0].is_empty() && keys[0] == keys[1],
        format!("{} vs {} rows, (segment, batch, t) identical: {}", keys[0].len(), keys[1].len(), keys[0] == keys[1]),
    )
}

const COMMANDS: [&str; 7] = ["synth", "split", "pretrain", "train", "eval", "export-trajectory", "gradcheck"];

fn criterion_8(first: &Path) -> Outcome {
    let second = tempdir().map_err(|e| e.to_string())?;
    for dir in [first, second.path()] {
        write_config(dir, &cli_config("girl"));
        for command in COMMANDS {
            let out_flag = if command == "synth" { vec!["--out", "out/corpus"] } else { vec![] };
            if run(dir, command, &out_flag) != 0 {
                return Err(format!("{command} failed in {}", dir.display()));
            }
        }
    }
    let (a, b) = (snapshot_tree(&first.join("out")), snapshot_tree(&second.path().join("out")));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    check(
        a.len() == b.len() && differing.is_empty() && a.contains_key("seed-1/model.json"),
        format!("{} commands twice, {} output files compared, differing: {:?}", COMMANDS.len(), a.len(), differing),
    )
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn criterion_9(dir: &Path) -> Outcome {
    let seed_dir = dir.join("out/seed-0");
    let snapshots: Vec<Vec<f64>> = fs::read_to_string(seed_dir.join("snapshots.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
        })
        .collect();
    let n = snapshots.len();
    let dim = snapshots[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| snapshots.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = snapshots.iter().map(|s| s.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>() / (n - 1) as f64).collect())
        .collect();
    let top = jacobi_eigenvalues(gram).into_iter().fold(f64::NEG_INFINITY, f64::max);

    let csv = fs::read_to_string(seed_dir.join("trajectory.csv")).map_err(|e| e.to_string())?;
    let pc1: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let m = pc1.iter().sum::<f64>() / pc1.len() as f64;
    let var = pc1.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (pc1.len() - 1) as f64;
    check(
        n >= 3 && pc1.len() == n && (var - top).abs() < 1e-8,
        format!("{n} snapshots of {dim} parameters: var(pc1) {var:.12} vs top eigenvalue {top:.12}, |diff| {:.1e} (< 1e-8)", (var - top).abs()),
    )
}

fn main() -> ExitCode {
    let workdir = tempdir().expect("temporary directory");
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "gradient correctness", Box::new(criterion_1)),
        (2, "CRF oracle equivalence", Box::new(criterion_2)),
        (3, "reward identities", Box::new(criterion_3)),
        (4, "running-mean replay and pool growth", Box::new(criterion_4)),
        (5, "all-ones episode equals supervised step", Box::new(criterion_5)),
        (6, "desk-scale GIRL vs pseudo-labeling", Box::new(criterion_6)),
        (7, "row-aligned ablation logs", Box::new(criterion_7)),
        (8, "byte-identical repeated commands", Box::new(|| criterion_8(workdir.path()))),
        (9, "trajectory export variance", Box::new(|| criterion_9(workdir.path()))),
    ];
    let mut failed = 0;
    for (id, name, f) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
