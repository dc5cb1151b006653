//! Run configuration read from an INI file.
//!
//! Every key is optional; absent keys take the defaults listed next to each
//! field. Unknown sections or keys are rejected so typos surface early.
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use grail_core::data::{SplitMode, SplitSpec, SynthSpec, SynthTask, TemplateChoice};
use grail_core::encoder::EncoderConfig;
use grail_core::girl::{GirlConfig, GradientScope, RefreshPolicy};
use grail_core::math::AdamWConfig;
use ini::{Ini, Properties};

use crate::error::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Ner,
    Re,
    Ee,
}

impl Task {
    fn synth(self) -> SynthTask {
        match self {
            Task::Ner => SynthTask::Ner,
            Task::Re => SynthTask::Re,
            Task::Ee => SynthTask::Ee,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Supervised,
    PseudoLabeling,
    Girl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::PseudoLabeling => "pseudo-labeling",
            Method::Girl => "girl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    /// `[gradcheck] draws`, default 10.
    pub draws: usize,
    /// `[gradcheck] eps`, default 1e-5.
    pub eps: f64,
    /// `[gradcheck] tolerance`, default 1e-4.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `[run] task`: `ner`, `re` or `ee`. Default `ner`.
    pub task: Task,
    /// `[run] method`: `supervised`, `pseudo-labeling` or `girl`. Default `girl`.
    pub method: Method,
    /// `[run] seeds`: comma-separated list. Default `0`.
    pub seeds: Vec<u64>,
    /// `[run] out`: output directory. Default `runs`.
    pub out: PathBuf,
    /// `[data] train`: corpus file. When absent the `[synth]` corpus is used.
    pub train: Option<PathBuf>,
    /// `[data] valid`: optional development corpus, scored by `eval` alongside
    /// the test data.
    pub valid: Option<PathBuf>,
    /// `[data] test`: evaluation corpus. When absent the held-back part of
    /// the split is used.
    pub test: Option<PathBuf>,
    /// `[synth] sentences` (1000), `noise` (0), `lexicon` (40),
    /// `choice` (`random` or `round-robin`), `templates` (`default`),
    /// `seed` (0).
    pub synth: SynthSpec,
    /// `[split] mode` (`fraction` or `k-shot`), `fraction` (0.05), `k` (5),
    /// `unlabeled` (0.5), `segments` (10).
    pub split: SplitSpec,
    /// `[encoder] emb_dim` (32), `window` (2), `hidden_dim` (64),
    /// `max_len` (128).
    pub encoder: EncoderConfig,
    /// `[encoder] min_count`, default 1.
    pub min_count: usize,
    /// `[encoder] head_hidden`: hidden units of the event heads, default 64.
    pub head_hidden: usize,
    /// `[optimizer] lr` (1e-3), `beta1` (0.9), `beta2` (0.999), `eps` (1e-8),
    /// `weight_decay` (1e-3); `[girl] lambda` (0.5), `episode_len` (16, or 10
    /// for `ee`), `segments` (taken from `[split]`), `scope` (`all` or
    /// `head-only`), `refit_epochs` (1), `refresh` (`episode-start`,
    /// `segment-start` or `never`), `pretrain_epochs` (20), `batch_size` (16),
    /// `rl_lr` (unset).
    pub girl: GirlConfig,
    /// `[girl] threshold`: confidence threshold of pseudo-labeling, default 0.9.
    pub threshold: f64,
    pub gradcheck: GradcheckConfig,
    /// Raw text of the config file, copied next to every output.
    pub source: String,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["task", "method", "seeds", "out"]),
    ("data", &["train", "valid", "test"]),
    ("synth", &["sentences", "noise", "lexicon", "choice", "templates", "seed"]),
    ("split", &["mode", "fraction", "k", "unlabeled", "segments"]),
    ("encoder", &["emb_dim", "window", "hidden_dim", "max_len", "min_count", "head_hidden"]),
    ("optimizer", &["lr", "beta1", "beta2", "eps", "weight_decay"]),
    (
        "girl",
        &[
            "lambda", "episode_len", "scope", "refit_epochs", "refresh", "pretrain_epochs",
            "batch_size", "rl_lr", "threshold",
        ],
    ),
    ("gradcheck", &["draws", "eps", "tolerance"]),
];

struct Reader<'a> {
    ini: &'a Ini,
}

impl Reader<'_> {
    fn section(&self, name: &str) -> Option<&Properties> {
        self.ini.section(Some(name))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section).and_then(|p| p.get(key)).map(str::trim)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, Failure> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Failure::validation(format!("[{section}] {key} = `{v}` is not valid"))),
        }
    }

    fn choice<T: Copy>(&self, section: &str, key: &str, default: T, options: &[(&str, T)]) -> Result<T, Failure> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                Failure::validation(format!("[{section}] {key} = `{v}`; expected one of {}", names.join(", ")))
            }),
        }
    }
}

fn check_keys(ini: &Ini) -> Result<(), Failure> {
    if let Some(general) = ini.section(None::<String>) {
        if let Some((k, _)) = general.iter().next() {
            return Err(Failure::validation(format!("key `{k}` must be inside a section")));
        }
    }
    for (name, props) in ini.iter() {
        let Some(name) = name else { continue };
        let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == name) else {
            return Err(Failure::validation(format!("unknown section [{name}]")));
        };
        let keys: BTreeSet<&str> = keys.iter().copied().collect();
        for (k, _) in props.iter() {
            if !keys.contains(k) {
                return Err(Failure::validation(format!("unknown key `{k}` in [{name}]")));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, Failure> {
        let ini = Ini::load_from_str(text).map_err(|e| Failure::validation(format!("config syntax: {e}")))?;
        check_keys(&ini)?;
        let r = Reader { ini: &ini };
        let task = r.choice("run", "task", Task::Ner, &[("ner", Task::Ner), ("re", Task::Re), ("ee", Task::Ee)])?;
        let method = r.choice(
            "run",
            "method",
            Method::Girl,
            &[
                ("supervised", Method::Supervised),
                ("pseudo-labeling", Method::PseudoLabeling),
                ("girl", Method::Girl),
            ],
        )?;
        let seeds = match r.raw("run", "seeds") {
            None => vec![0],
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Failure::validation(format!("[run] seeds: `{}` is not a seed", s.trim())))
                })
                .collect::<Result<Vec<u64>, _>>()?,
        };
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let out = resolve(r.raw("run", "out").unwrap_or("runs"));
        let train = r.raw("data", "train").map(resolve);
        let valid = r.raw("data", "valid").map(resolve);
        let test = r.raw("data", "test").map(resolve);
        for (key, p) in [("train", &train), ("valid", &valid), ("test", &test)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Failure::validation(format!("[data] {key}: {} does not exist", p.display())));
                }
            }
        }

        let synth = SynthSpec {
            task: task.synth(),
            template_set: r.raw("synth", "templates").unwrap_or("default").to_string(),
            lexicon_size: r.get("synth", "lexicon", 40)?,
            sentences: r.get("synth", "sentences", 1000)?,
            noise: r.get("synth", "noise", 0.0)?,
            seed: r.get("synth", "seed", 0)?,
            choice: r.choice(
                "synth",
                "choice",
                TemplateChoice::Random,
                &[("random", TemplateChoice::Random), ("round-robin", TemplateChoice::RoundRobin)],
            )?,
        };
        synth.validate().map_err(|e| Failure::validation(format!("[synth] {e}")))?;

        let mode = match r.raw("split", "mode").unwrap_or("fraction") {
            "fraction" => SplitMode::Fraction(r.get("split", "fraction", 0.05)?),
            "k-shot" => SplitMode::KShot(r.get("split", "k", 5)?),
            other => {
                return Err(Failure::validation(format!(
                    "[split] mode = `{other}`; expected fraction or k-shot"
                )))
            }
        };
        let split = SplitSpec {
            mode,
            unlabeled_fraction: r.get("split", "unlabeled", 0.5)?,
            segments: r.get("split", "segments", 10)?,
            seed: 0,
        };
        split.validate().map_err(|e| Failure::validation(format!("[split] {e}")))?;

        let encoder = EncoderConfig {
            emb_dim: r.get("encoder", "emb_dim", 32)?,
            window: r.get("encoder", "window", 2)?,
            hidden_dim: r.get("encoder", "hidden_dim", 64)?,
            max_len: r.get("encoder", "max_len", 128)?,
        };
        encoder.validate().map_err(|e| Failure::validation(format!("[encoder] {e}")))?;
        let min_count = r.get("encoder", "min_count", 1)?;
        let head_hidden = r.get("encoder", "head_hidden", 64)?;
        if min_count == 0 || head_hidden == 0 {
            return Err(Failure::validation("[encoder] min_count and head_hidden must be positive"));
        }

        let defaults = AdamWConfig::default();
        let optimizer = AdamWConfig {
            lr: r.get("optimizer", "lr", defaults.lr)?,
            beta1: r.get("optimizer", "beta1", defaults.beta1)?,
            beta2: r.get("optimizer", "beta2", defaults.beta2)?,
            eps: r.get("optimizer", "eps", defaults.eps)?,
            weight_decay: r.get("optimizer", "weight_decay", defaults.weight_decay)?,
        };
        let girl_defaults = GirlConfig::default();
        let girl = GirlConfig {
            lambda: r.get("girl", "lambda", girl_defaults.lambda)?,
            episode_len: r.get("girl", "episode_len", if task == Task::Ee { 10 } else { 16 })?,
            segments: split.segments,
            scope: r.choice(
                "girl",
                "scope",
                GradientScope::All,
                &[("all", GradientScope::All), ("head-only", GradientScope::HeadOnly)],
            )?,
            refit_epochs: r.get("girl", "refit_epochs", girl_defaults.refit_epochs)?,
            refresh: r.choice(
                "girl",
                "refresh",
                RefreshPolicy::EpisodeStart,
                &[
                    ("episode-start", RefreshPolicy::EpisodeStart),
                    ("segment-start", RefreshPolicy::SegmentStart),
                    ("never", RefreshPolicy::Never),
                ],
            )?,
            pretrain_epochs: r.get("girl", "pretrain_epochs", girl_defaults.pretrain_epochs)?,
            batch_size: r.get("girl", "batch_size", girl_defaults.batch_size)?,
            optimizer,
            rl_lr: match r.raw("girl", "rl_lr") {
                None => None,
                Some(_) => Some(r.get("girl", "rl_lr", 0.0)?),
            },
            seed: 0,
        };
        girl.validate().map_err(|e| Failure::validation(format!("[girl]/[optimizer] {e}")))?;
        let threshold: f64 = r.get("girl", "threshold", 0.9)?;
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Failure::validation(format!("[girl] threshold = {threshold} must be non-negative")));
        }
        let gradcheck = GradcheckConfig {
            draws: r.get("gradcheck", "draws", 10)?,
            eps: r.get("gradcheck", "eps", 1e-5)?,
            tolerance: r.get("gradcheck", "tolerance", 1e-4)?,
        };
        if gradcheck.draws == 0 || !(gradcheck.eps > 0.0) || !(gradcheck.tolerance > 0.0) {
            return Err(Failure::validation("[gradcheck] draws, eps and tolerance must be positive"));
        }
        if seeds.is_empty() {
            return Err(Failure::validation("[run] seeds must not be empty"));
        }
        Ok(RunConfig {
            task,
            method,
            seeds,
            out,
            train,
            valid,
            test,
            synth,
            split,
            encoder,
            min_count,
            head_hidden,
            girl,
            threshold,
            gradcheck,
            source: text.to_string(),
        })
    }

    /// Split settings of one seed.
    pub fn split_for(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            seed,
            ..self.split.clone()
        }
    }

    /// Training settings of one seed.
    pub fn girl_for(&self, seed: u64) -> GirlConfig {
        GirlConfig {
            seed,
            ..self.girl.clone()
        }
    }
}
