//! Gradient-imitation reinforcement learning for self-training.
//!
//! The policy is a [`TaskModel`]. Its action on an unlabeled input is the
//! deterministic prediction; the reward of the resulting pseudo sample is the
//! cosine similarity between its loss gradient and the standard gradient of
//! the labeled pool. Samples whose reward exceeds `lambda` join the pool and
//! correct the standard gradient as a running mean. Each episode ends with one
//! optimizer step on the reward-weighted sum of pseudo-sample gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::segment_unlabeled;
use crate::error::{Error, Result};
use crate::math::{
    cosine_similarity, running_mean_update, AdamW, AdamWConfig, GradientVector, ParameterVector,
    SegmentId,
};
use crate::metrics::{MatchCounts, Prf};
use crate::task::TaskModel;

/// Which parameters the reward compares. Updates always use the full gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScope {
    #[default]
    All,
    HeadOnly,
}

/// When the standard gradient is recomputed from the whole pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefreshPolicy {
    #[default]
    EpisodeStart,
    SegmentStart,
    /// Once after pretraining; afterwards only the running mean applies.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirlConfig {
    pub lambda: f64,
    pub episode_len: usize,
    pub segments: usize,
    pub scope: GradientScope,
    pub refit_epochs: usize,
    pub refresh: RefreshPolicy,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Learning rate of the episode update; `None` reuses `optimizer.lr`.
    pub rl_lr: Option<f64>,
    pub seed: u64,
}

impl Default for GirlConfig {
    fn default() -> Self {
        GirlConfig {
            lambda: 0.5,
            episode_len: 16,
            segments: 10,
            scope: GradientScope::All,
            refit_epochs: 1,
            refresh: RefreshPolicy::EpisodeStart,
            pretrain_epochs: 20,
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            rl_lr: None,
            seed: 0,
        }
    }
}

impl GirlConfig {
    /// Checks the selection threshold range. `lambda ≥ 1` is accepted and
    /// simply never selects anything.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > -1.0) || self.lambda.is_nan() {
            return Err(Error::InvalidArgument(format!("lambda = {} must exceed -1", self.lambda)));
        }
        if self.episode_len == 0 {
            return Err(Error::InvalidArgument("episode_len must be at least 1".into()));
        }
        if self.segments == 0 {
            return Err(Error::InvalidArgument("segments must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if let Some(lr) = self.rl_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("rl_lr = {lr}")));
            }
        }
        self.optimizer.validate()
    }
}

/// Parameters together with their optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: ParameterVector,
    pub optimizer: AdamW,
}

impl Learner {
    pub fn new(params: ParameterVector, config: AdamWConfig) -> Self {
        let optimizer = AdamW::new(config, params.len());
        Learner { params, optimizer }
    }

    fn step_with_lr(&mut self, grad: &GradientVector, lr: Option<f64>) -> Result<()> {
        match lr {
            Some(lr) => {
                let saved = self.optimizer.config.lr;
                self.optimizer.config.lr = lr;
                let r = self.optimizer.step(&mut self.params, grad);
                self.optimizer.config.lr = saved;
                r
            }
            None => self.optimizer.step(&mut self.params, grad),
        }
    }
}

/// Unlabeled inputs. Gold labels, when present, are only used to report
/// pseudo-label quality and never reach a training path.
#[derive(Debug, Clone)]
pub struct Unlabeled<X, Y> {
    inputs: Vec<X>,
    gold: Option<Vec<Y>>,
}

impl<X, Y> Unlabeled<X, Y> {
    pub fn new(inputs: Vec<X>) -> Self {
        Unlabeled { inputs, gold: None }
    }

    pub fn with_hidden_gold(inputs: Vec<X>, gold: Vec<Y>) -> Result<Self> {
        if inputs.len() != gold.len() {
            return Err(Error::Shape(format!(
                "{} unlabeled inputs with {} hidden labels",
                inputs.len(),
                gold.len()
            )));
        }
        Ok(Unlabeled {
            inputs,
            gold: Some(gold),
        })
    }

    pub fn inputs(&self) -> &[X] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn has_hidden_gold(&self) -> bool {
        self.gold.is_some()
    }

    fn hidden_gold(&self, index: usize) -> Option<&Y> {
        self.gold.as_ref().map(|g| &g[index])
    }
}

/// Runs `epochs` shuffled mini-batch passes over `data`. Returns the mean
/// batch loss of every epoch.
pub fn supervised_pretrain<M: TaskModel>(
    model: &M,
    learner: &mut Learner,
    data: &[(M::Input, M::Label)],
    epochs: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, grad) = model.batch_loss_and_grad(&learner.params, &batch)?;
            grad.check_finite()?;
            learner.optimizer.step(&mut learner.params, &grad)?;
            total += loss;
            count += 1;
        }
        losses.push(total / count as f64);
    }
    Ok(losses)
}

/// Mean of per-example loss gradients over the pool.
pub fn compute_standard_gradient<M: TaskModel>(
    model: &M,
    params: &ParameterVector,
    pool: &[(M::Input, M::Label)],
) -> Result<GradientVector> {
    if pool.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    let w = 1.0 / pool.len() as f64;
    let mut grad = GradientVector::zeros(model.layout().clone());
    for (x, y) in pool {
        model.accumulate_gradient(params, x, y, w, &mut grad)?;
    }
    grad.check_finite()?;
    Ok(grad)
}

pub fn act<M: TaskModel>(model: &M, params: &ParameterVector, x: &M::Input) -> Result<M::Label> {
    model.predict(params, x)
}

/// Loss and gradient of a single pseudo sample with `y` as the target.
pub fn pseudo_gradient<M: TaskModel>(
    model: &M,
    params: &ParameterVector,
    x: &M::Input,
    y: &M::Label,
) -> Result<(f64, GradientVector)> {
    let (loss, grad) = model.loss_and_grad(params, x, y)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { index: 0 });
    }
    grad.check_finite()?;
    Ok((loss, grad))
}

/// Cosine similarity of the pseudo gradient with the standard gradient.
/// A zero pseudo gradient earns reward 0; a zero standard gradient is an error.
pub fn reward(g_l: &GradientVector, g_p: &GradientVector) -> Result<f64> {
    if g_l.norm() == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    if g_p.norm() == 0.0 {
        return Ok(0.0);
    }
    cosine_similarity(g_l, g_p)
}

/// Zeroes every segment outside `keep`.
pub fn restrict(grad: &GradientVector, keep: &[SegmentId]) -> GradientVector {
    let mut out = GradientVector::zeros(grad.layout().clone());
    for &id in keep {
        out.segment_mut(id).copy_from_slice(grad.segment(id));
    }
    out
}

/// Labeled pool plus the standard gradient direction.
#[derive(Debug, Clone)]
pub struct RlState<X, Y> {
    pub pool: Vec<(X, Y)>,
    pub g_l: GradientVector,
    pub step: usize,
}

impl<X: Clone, Y: Clone> RlState<X, Y> {
    pub fn new(pool: Vec<(X, Y)>, g_l: GradientVector) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Empty("labeled pool"));
        }
        Ok(RlState { pool, g_l, step: 0 })
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }
}

/// One evaluated action.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample<X, Y> {
    pub input: X,
    pub label: Y,
    pub loss: f64,
    pub reward: f64,
    pub selected: bool,
}

/// Adds the sample to the pool and folds `g_p` into the running mean when
/// `reward > lambda`. Returns whether it was selected.
pub fn select_and_update<X: Clone, Y: Clone>(
    state: &mut RlState<X, Y>,
    input: &X,
    label: &Y,
    g_p: &GradientVector,
    reward: f64,
    lambda: f64,
) -> Result<bool> {
    state.step += 1;
    if reward > lambda {
        state.g_l = running_mean_update(&state.g_l, g_p, state.pool.len())?;
        state.pool.push((input.clone(), label.clone()));
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Output of one episode.
#[derive(Debug, Clone)]
pub struct Episode<X, Y> {
    pub samples: Vec<PseudoSample<X, Y>>,
    /// `Σ R(t) · g_p(t)`, the gradient of the reward-weighted loss.
    pub update: GradientVector,
    /// Standard gradient after every step, when tracing is on.
    pub g_l_trace: Vec<GradientVector>,
}

impl<X, Y> Episode<X, Y> {
    /// `Σ loss(t) · R(t)`.
    pub fn objective(&self) -> f64 {
        self.samples.iter().map(|s| s.loss * s.reward).sum()
    }
}

/// Options that shape a single episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeOptions<'a> {
    pub lambda: f64,
    pub scope: &'a [SegmentId],
    pub restrict_scope: bool,
    pub lr: Option<f64>,
    pub trace: bool,
}

/// Act, score and select each input in order, then take one optimizer step on
/// the accumulated reward-weighted gradient.
pub fn rl_episode<M: TaskModel>(
    model: &M,
    learner: &mut Learner,
    state: &mut RlState<M::Input, M::Label>,
    batch: &[M::Input],
    opts: EpisodeOptions<'_>,
) -> Result<Episode<M::Input, M::Label>> {
    if batch.is_empty() {
        return Err(Error::Empty("episode batch"));
    }
    let mut update = GradientVector::zeros(model.layout().clone());
    let mut samples = Vec::with_capacity(batch.len());
    let mut g_l_trace = Vec::new();
    for x in batch {
        let y = act(model, &learner.params, x)?;
        let (loss, g_p) = pseudo_gradient(model, &learner.params, x, &y)?;
        let scoped = if opts.restrict_scope {
            restrict(&g_p, opts.scope)
        } else {
            g_p.clone()
        };
        let r = reward(&state.g_l, &scoped)?;
        let selected = select_and_update(state, x, &y, &scoped, r, opts.lambda)?;
        update.axpy(r, &g_p)?;
        if opts.trace {
            g_l_trace.push(state.g_l.clone());
        }
        samples.push(PseudoSample {
            input: x.clone(),
            label: y,
            loss,
            reward: r,
            selected,
        });
    }
    learner.step_with_lr(&update, opts.lr)?;
    Ok(Episode {
        samples,
        update,
        g_l_trace,
    })
}

/// One row of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub segment: usize,
    pub batch: usize,
    pub t: usize,
    pub loss: f64,
    pub reward: f64,
    pub selected: bool,
    pub pool_size: usize,
}

/// End-of-segment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub segment: usize,
    pub pool_size: usize,
    pub selected: usize,
    pub steps: usize,
    /// Ten equal bins over `[-1, 1]`.
    pub reward_histogram: [usize; 10],
    /// Quality of every pseudo label produced in the segment.
    pub pseudo_all: Option<Prf>,
    /// Quality of the pseudo labels that joined the pool.
    pub pseudo_selected: Option<Prf>,
}

/// Parameter values at a point of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub pretrain_losses: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub segments: Vec<SegmentSummary>,
    pub snapshots: Vec<Snapshot>,
    /// Pooled over the whole run.
    pub pseudo_all: Option<MatchCounts>,
    pub pseudo_selected: Option<MatchCounts>,
}

impl RunLog {
    /// JSON Lines with one record per step.
    pub fn steps_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step records serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn reward_bin(r: f64) -> usize {
    (((r + 1.0) * 5.0).floor().max(0.0) as usize).min(9)
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<X, Y> {
    pub learner: Learner,
    pub pool: Vec<(X, Y)>,
    pub log: RunLog,
}

/// How pseudo samples are accepted during the segment loop.
enum Selection {
    Reward,
    Confidence(f64),
}

struct Quality {
    all: MatchCounts,
    selected: MatchCounts,
}

/// Pretrain, then consume the unlabeled segments with reward-gated episodes,
/// refitting on the grown pool after every segment.
pub fn girl_train<M: TaskModel>(
    model: &M,
    params: ParameterVector,
    labeled: Vec<(M::Input, M::Label)>,
    unlabeled: &Unlabeled<M::Input, M::Label>,
    config: &GirlConfig,
) -> Result<TrainOutcome<M::Input, M::Label>> {
    run_schedule(model, params, labeled, unlabeled, config, Selection::Reward)
}

/// Confidence-thresholded self-training over the same schedule as
/// [`girl_train`]. Step records carry the confidence in the `reward` field.
pub fn pseudo_label_baseline<M: TaskModel>(
    model: &M,
    params: ParameterVector,
    labeled: Vec<(M::Input, M::Label)>,
    unlabeled: &Unlabeled<M::Input, M::Label>,
    threshold: f64,
    config: &GirlConfig,
) -> Result<TrainOutcome<M::Input, M::Label>> {
    if !(0.0..=f64::MAX).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("confidence threshold {threshold}")));
    }
    run_schedule(model, params, labeled, unlabeled, config, Selection::Confidence(threshold))
}

/// Supervised training on the labeled data alone.
pub fn supervised_train<M: TaskModel>(
    model: &M,
    params: ParameterVector,
    labeled: Vec<(M::Input, M::Label)>,
    config: &GirlConfig,
) -> Result<TrainOutcome<M::Input, M::Label>> {
    config.validate()?;
    let mut learner = Learner::new(params, config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = RunLog::default();
    log.snapshots.push(Snapshot {
        step: 0,
        values: learner.params.values().to_vec(),
    });
    log.pretrain_losses = supervised_pretrain(
        model,
        &mut learner,
        &labeled,
        config.pretrain_epochs,
        config.batch_size,
        &mut rng,
    )?;
    log.snapshots.push(Snapshot {
        step: learner.optimizer.step_count(),
        values: learner.params.values().to_vec(),
    });
    Ok(TrainOutcome {
        learner,
        pool: labeled,
        log,
    })
}

fn run_schedule<M: TaskModel>(
    model: &M,
    params: ParameterVector,
    labeled: Vec<(M::Input, M::Label)>,
    unlabeled: &Unlabeled<M::Input, M::Label>,
    config: &GirlConfig,
    selection: Selection,
) -> Result<TrainOutcome<M::Input, M::Label>> {
    config.validate()?;
    if unlabeled.is_empty() {
        return Err(Error::Empty("unlabeled data"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = supervised_train(model, params, labeled, config)?;
    let segments = segment_unlabeled(
        &(0..unlabeled.len()).collect::<Vec<_>>(),
        config.segments,
        config.seed,
    )?;
    rng.set_stream(1);

    let head = model.head_segments();
    let restrict_scope = config.scope == GradientScope::HeadOnly;
    let scoped_standard = |learner: &Learner, pool: &[(M::Input, M::Label)]| -> Result<GradientVector> {
        let g = compute_standard_gradient(model, &learner.params, pool)?;
        Ok(if restrict_scope { restrict(&g, &head) } else { g })
    };
    let g_l = match selection {
        Selection::Reward => scoped_standard(&out.learner, &out.pool)?,
        Selection::Confidence(_) => GradientVector::zeros(model.layout().clone()),
    };
    let mut state = RlState::new(std::mem::take(&mut out.pool), g_l)?;
    let mut totals = unlabeled.has_hidden_gold().then(|| Quality {
        all: MatchCounts::default(),
        selected: MatchCounts::default(),
    });

    for (seg_index, segment) in segments.iter().enumerate() {
        if matches!(selection, Selection::Reward) && config.refresh == RefreshPolicy::SegmentStart {
            state.g_l = scoped_standard(&out.learner, &state.pool)?;
        }
        let mut histogram = [0usize; 10];
        let mut seg_quality = unlabeled.has_hidden_gold().then(|| Quality {
            all: MatchCounts::default(),
            selected: MatchCounts::default(),
        });
        let mut seg_selected = 0;
        let mut seg_steps = 0;
        for (batch_index, chunk) in segment.chunks(config.episode_len).enumerate() {
            let inputs: Vec<M::Input> = chunk.iter().map(|&i| unlabeled.inputs[i].clone()).collect();
            let samples = match selection {
                Selection::Reward => {
                    if config.refresh == RefreshPolicy::EpisodeStart {
                        state.g_l = scoped_standard(&out.learner, &state.pool)?;
                    }
                    let opts = EpisodeOptions {
                        lambda: config.lambda,
                        scope: &head,
                        restrict_scope,
                        lr: config.rl_lr,
                        trace: false,
                    };
                    rl_episode(model, &mut out.learner, &mut state, &inputs, opts)?.samples
                }
                Selection::Confidence(threshold) => {
                    confidence_episode(model, &mut out.learner, &mut state, &inputs, threshold, config.rl_lr)?
                }
            };
            for (t, (sample, &index)) in samples.iter().zip(chunk).enumerate() {
                histogram[reward_bin(sample.reward)] += 1;
                seg_steps += 1;
                if sample.selected {
                    seg_selected += 1;
                }
                if let (Some(q), Some(gold)) = (seg_quality.as_mut(), unlabeled.hidden_gold(index)) {
                    let counts = model.match_counts(&sample.label, gold);
                    q.all += counts;
                    if sample.selected {
                        q.selected += counts;
                    }
                }
                out.log.steps.push(StepRecord {
                    segment: seg_index,
                    batch: batch_index,
                    t,
                    loss: sample.loss,
                    reward: sample.reward,
                    selected: sample.selected,
                    pool_size: pool_size_after(&samples, t, state.pool.len()),
                });
            }
        }
        if config.refit_epochs > 0 {
            supervised_pretrain(
                model,
                &mut out.learner,
                &state.pool,
                config.refit_epochs,
                config.batch_size,
                &mut rng,
            )?;
        }
        if let (Some(total), Some(q)) = (totals.as_mut(), seg_quality.as_ref()) {
            total.all += q.all;
            total.selected += q.selected;
        }
        out.log.segments.push(SegmentSummary {
            segment: seg_index,
            pool_size: state.pool.len(),
            selected: seg_selected,
            steps: seg_steps,
            reward_histogram: histogram,
            pseudo_all: seg_quality.as_ref().map(|q| q.all.prf()),
            pseudo_selected: seg_quality.as_ref().map(|q| q.selected.prf()),
        });
        out.log.snapshots.push(Snapshot {
            step: out.learner.optimizer.step_count(),
            values: out.learner.params.values().to_vec(),
        });
    }
    out.log.pseudo_all = totals.as_ref().map(|q| q.all);
    out.log.pseudo_selected = totals.as_ref().map(|q| q.selected);
    out.pool = state.pool;
    Ok(out)
}

/// Pool size right after step `t`, given the size at the end of the episode.
fn pool_size_after<X, Y>(samples: &[PseudoSample<X, Y>], t: usize, final_size: usize) -> usize {
    let later = samples[t + 1..].iter().filter(|s| s.selected).count();
    final_size - later
}

/// Baseline episode: accept predictions whose confidence exceeds the
/// threshold, then step on the summed supervised gradient of accepted samples.
fn confidence_episode<M: TaskModel>(
    model: &M,
    learner: &mut Learner,
    state: &mut RlState<M::Input, M::Label>,
    batch: &[M::Input],
    threshold: f64,
    lr: Option<f64>,
) -> Result<Vec<PseudoSample<M::Input, M::Label>>> {
    let mut update = GradientVector::zeros(model.layout().clone());
    let mut samples = Vec::with_capacity(batch.len());
    let mut accepted = 0;
    for x in batch {
        let y = act(model, &learner.params, x)?;
        let confidence = model.confidence(&learner.params, x, &y)?;
        let selected = confidence > threshold;
        let loss = if selected {
            accepted += 1;
            model.accumulate_gradient(&learner.params, x, &y, 1.0, &mut update)?
        } else {
            model.loss(&learner.params, x, &y)?
        };
        if selected {
            state.pool.push((x.clone(), y.clone()));
        }
        state.step += 1;
        samples.push(PseudoSample {
            input: x.clone(),
            label: y,
            loss,
            reward: confidence,
            selected,
        });
    }
    if accepted > 0 {
        update.check_finite()?;
        learner.step_with_lr(&update, lr)?;
    }
    Ok(samples)
}
