//! Compares self-training strategies on a synthetic NER corpus.
//!
//! Run with `cargo run --release -p grail-core --example ner_self_training`.
//! Environment variables override the defaults: `SEEDS`, `SENTENCES`,
//! `NOISE`, `PRETRAIN`, `LR`, `THRESHOLD`, `LAMBDA`, `SCOPE` (`all` or
//! `head`), `REFIT`, `REFRESH` (`episode`, `segment` or `never`).

use std::env;
use std::time::Instant;

use grail_core::data::{
    conll_entity_types, generate_synthetic, ner_class, ner_examples, stratified_split, SplitMode,
    SplitSpec, SynthCorpus, SynthSpec, SynthTask,
};
use grail_core::encoder::{EncoderConfig, Vocabulary};
use grail_core::girl::{
    girl_train, pseudo_label_baseline, supervised_train, GirlConfig, GradientScope, RefreshPolicy, Unlabeled,
};
use grail_core::math::AdamWConfig;
use grail_core::ner::{span_f1, decode_spans, NerModel, TagSet};
use grail_core::TaskModel;

fn var<T: std::str::FromStr>(name: &str, default: T) -> T {
    env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let seeds: u64 = var("SEEDS", 5);
    let sentences: usize = var("SENTENCES", 2000);
    let noise: f64 = var("NOISE", 0.1);
    let threshold: f64 = var("THRESHOLD", 0.9);
    let scope = if var("SCOPE", "all".to_string()) == "head" {
        GradientScope::HeadOnly
    } else {
        GradientScope::All
    };
    let mut sums = [0.0; 5];
    for seed in 0..seeds {
        let started = Instant::now();
        let spec = SynthSpec {
            noise,
            ..SynthSpec::new(SynthTask::Ner, sentences, seed)
        };
        let SynthCorpus::Ner(corpus) = generate_synthetic(&spec).unwrap() else { unreachable!() };
        let corpus: Vec<_> = corpus.into_iter().map(|g| g.record).collect();
        let split = stratified_split(
            &corpus,
            ner_class,
            &SplitSpec {
                mode: SplitMode::Fraction(0.05),
                unlabeled_fraction: 0.5,
                segments: 10,
                seed,
            },
        )
        .unwrap();
        let tags = TagSet::new(conll_entity_types(&corpus)).unwrap();
        let ex = ner_examples(&corpus, &tags).unwrap();
        let pick = |ids: &[usize]| ids.iter().map(|&i| (ex[i].tokens.clone(), ex[i].tags.clone())).collect::<Vec<_>>();
        let labeled = pick(&split.labeled);
        let unl = pick(&split.unlabeled);
        let test = pick(&split.held_back);
        let vocab = Vocabulary::build(labeled.iter().chain(&unl).map(|(t, _)| t.iter()), 1).unwrap();
        let model = NerModel::new(vocab, tags.clone(), EncoderConfig::default());
        let (inputs, gold): (Vec<_>, Vec<_>) = unl.into_iter().unzip();
        let unlabeled = Unlabeled::with_hidden_gold(inputs, gold).unwrap();
        let config = GirlConfig {
            pretrain_epochs: var("PRETRAIN", 30),
            refit_epochs: var("REFIT", 1),
            lambda: var("LAMBDA", 0.5),
            scope,
            refresh: match var("REFRESH", "episode".to_string()).as_str() {
                "segment" => RefreshPolicy::SegmentStart,
                "never" => RefreshPolicy::Never,
                _ => RefreshPolicy::EpisodeStart,
            },
            optimizer: AdamWConfig {
                lr: var("LR", 1e-3),
                ..AdamWConfig::default()
            },
            seed,
            ..GirlConfig::default()
        };
        let eval = |params: &grail_core::math::ParameterVector| {
            let preds: Vec<_> = test.iter().map(|(x, _)| decode_spans(&tags, &model.predict(params, x).unwrap())).collect();
            let golds: Vec<_> = test.iter().map(|(_, y)| decode_spans(&tags, y)).collect();
            span_f1(&preds, &golds).unwrap().f1
        };
        let init = model.init_params(seed);
        let sup = supervised_train(&model, init.clone(), labeled.clone(), &config).unwrap();
        let girl = girl_train(&model, init.clone(), labeled.clone(), &unlabeled, &config).unwrap();
        let pl = pseudo_label_baseline(&model, init, labeled, &unlabeled, threshold, &config).unwrap();
        if env::var("HIST").is_ok() {
            for seg in &girl.log.segments {
                println!("  segment {} hist {:?}", seg.segment, seg.reward_histogram);
            }
        }
        let row = [
            eval(&sup.learner.params),
            eval(&girl.learner.params),
            eval(&pl.learner.params),
            girl.log.pseudo_selected.unwrap().prf().precision,
            pl.log.pseudo_selected.unwrap().prf().precision,
        ];
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
        println!(
            "seed {seed}: supervised {:.4} girl {:.4} pl {:.4} | selected precision girl {:.4} ({} sel) pl {:.4} ({} sel) | all-pseudo precision {:.4} | {:.1}s",
            row[0],
            row[1],
            row[2],
            row[3],
            girl.pool.len() - split.labeled.len(),
            row[4],
            pl.pool.len() - split.labeled.len(),
            girl.log.pseudo_all.unwrap().prf().precision,
            started.elapsed().as_secs_f64()
        );
    }
    let n = seeds as f64;
    println!(
        "mean: supervised {:.4} girl {:.4} pl {:.4} | selected precision girl {:.4} pl {:.4}",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
        sums[4] / n
    );
}
