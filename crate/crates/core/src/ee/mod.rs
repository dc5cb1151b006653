//! Event extraction as event-graph prediction.
//!
//! Two CRF taggers share the encoder and identify entity-mention spans and
//! trigger spans. Identified nodes are represented by the mean of their
//! encoder rows and typed by separate two-affine heads; every
//! (trigger, entity) pair is scored by an argument-role head whose class 0
//! means "no role".

pub mod crf;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, TokenStates, Vocabulary};
use crate::error::{Error, Result};
use crate::head::{argmax, softmax, softmax_cross_entropy, AffineHead};
use crate::math::{GradientVector, Layout, LayoutBuilder, ParameterVector, SegmentId};
use crate::metrics::{MatchCounts, Prf};
use crate::ner::{decode_spans, Span, TagSet};
use crate::task::TaskModel;

pub use crf::CrfView;

/// Label inventories. Argument roles exclude the implicit no-role class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EeSchema {
    pub entity_types: Vec<String>,
    pub event_types: Vec<String>,
    pub roles: Vec<String>,
}

fn position(list: &[String], name: &str, what: &str) -> Result<usize> {
    list.iter()
        .position(|l| l == name)
        .ok_or_else(|| Error::InvalidLabel(format!("unknown {what} `{name}`")))
}

impl EeSchema {
    pub fn entity_type(&self, name: &str) -> Result<usize> {
        position(&self.entity_types, name, "entity type")
    }

    pub fn event_type(&self, name: &str) -> Result<usize> {
        position(&self.event_types, name, "event type")
    }

    pub fn role(&self, name: &str) -> Result<usize> {
        position(&self.roles, name, "role")
    }
}

/// Edge from `triggers[trigger]` to `entities[entity]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Argument {
    pub trigger: usize,
    pub entity: usize,
    pub role: usize,
}

/// Entity-mention and trigger nodes plus trigger→entity argument edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventGraph {
    pub entities: Vec<Span>,
    pub triggers: Vec<Span>,
    pub arguments: Vec<Argument>,
}

impl EventGraph {
    pub fn validate(&self, len: usize, schema: &EeSchema) -> Result<()> {
        let check = |spans: &[Span], types: usize, what: &str| -> Result<()> {
            for s in spans {
                if s.start >= s.end || s.end > len || s.label >= types {
                    return Err(Error::InvalidSpan(format!(
                        "{what} {s:?} in sentence of length {len}"
                    )));
                }
            }
            Ok(())
        };
        check(&self.entities, schema.entity_types.len(), "entity")?;
        check(&self.triggers, schema.event_types.len(), "trigger")?;
        for (i, a) in self.arguments.iter().enumerate() {
            if a.trigger >= self.triggers.len()
                || a.entity >= self.entities.len()
                || a.role >= schema.roles.len()
            {
                return Err(Error::InvalidLabel(format!("argument {a:?} references a missing node")));
            }
            if self.arguments[..i]
                .iter()
                .any(|b| b.trigger == a.trigger && b.entity == a.entity)
            {
                return Err(Error::InvalidLabel(format!("duplicate argument edge {a:?}")));
            }
        }
        Ok(())
    }

    fn role_of(&self, trigger: usize, entity: usize) -> Option<usize> {
        self.arguments
            .iter()
            .find(|a| a.trigger == trigger && a.entity == entity)
            .map(|a| a.role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventExample {
    pub tokens: Vec<String>,
    pub graph: EventGraph,
}

/// Trigger classification: offsets and event type must match.
pub fn trigger_counts(pred: &EventGraph, gold: &EventGraph) -> MatchCounts {
    MatchCounts::of_sets(pred.triggers.iter().copied(), gold.triggers.iter().copied())
}

/// Argument classification: argument offsets, role, and the event type of
/// its trigger must match.
pub fn argument_counts(pred: &EventGraph, gold: &EventGraph) -> MatchCounts {
    let keys = |g: &EventGraph| -> Vec<(usize, usize, usize, usize)> {
        g.arguments
            .iter()
            .map(|a| {
                let e = g.entities[a.entity];
                (e.start, e.end, a.role, g.triggers[a.trigger].label)
            })
            .collect()
    };
    MatchCounts::of_sets(keys(pred), keys(gold))
}

fn aligned<'a>(preds: &'a [EventGraph], golds: &'a [EventGraph]) -> Result<impl Iterator<Item = (&'a EventGraph, &'a EventGraph)>> {
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predicted graphs vs {} gold",
            preds.len(),
            golds.len()
        )));
    }
    Ok(preds.iter().zip(golds))
}

pub fn trig_c_f1(preds: &[EventGraph], golds: &[EventGraph]) -> Result<Prf> {
    Ok(aligned(preds, golds)?
        .map(|(p, g)| trigger_counts(p, g))
        .sum::<MatchCounts>()
        .prf())
}

pub fn arg_c_f1(preds: &[EventGraph], golds: &[EventGraph]) -> Result<Prf> {
    Ok(aligned(preds, golds)?
        .map(|(p, g)| argument_counts(p, g))
        .sum::<MatchCounts>()
        .prf())
}

/// Mean of the encoder rows in `[start, end)`.
pub fn node_representation(states: &TokenStates, span: &Span) -> Result<Vec<f64>> {
    if span.start >= span.end || span.end > states.len() {
        return Err(Error::InvalidSpan(format!(
            "{span:?} over {} states",
            states.len()
        )));
    }
    let width = (span.end - span.start) as f64;
    let mut v = vec![0.0; states.dim()];
    for i in span.start..span.end {
        for (acc, x) in v.iter_mut().zip(states.row(i)) {
            *acc += x;
        }
    }
    for x in &mut v {
        *x /= width;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierTask {
    EntityType,
    EventType,
    ArgumentRole,
}

/// Emission layer plus transition matrix for one identification tagger.
#[derive(Debug, Clone, PartialEq)]
struct CrfLayer {
    num_tags: usize,
    hidden_dim: usize,
    weight: SegmentId,
    bias: SegmentId,
    transitions: SegmentId,
}

impl CrfLayer {
    fn register(prefix: &str, num_tags: usize, hidden_dim: usize, layout: &mut LayoutBuilder) -> Self {
        CrfLayer {
            num_tags,
            hidden_dim,
            weight: layout.push(format!("{prefix}.emission.weight"), &[num_tags, hidden_dim]),
            bias: layout.push(format!("{prefix}.emission.bias"), &[num_tags]),
            transitions: layout.push(format!("{prefix}.transitions"), &[num_tags + 2, num_tags + 2]),
        }
    }

    fn segments(&self) -> [SegmentId; 3] {
        [self.weight, self.bias, self.transitions]
    }

    fn init<R: Rng>(&self, params: &mut ParameterVector, rng: &mut R) {
        let a = (6.0 / (self.num_tags + self.hidden_dim) as f64).sqrt();
        params.fill_uniform(self.weight, a, rng);
        params.fill_uniform(self.bias, 0.0, rng);
        params.fill_uniform(self.transitions, 0.0, rng);
    }

    fn emissions(&self, params: &ParameterVector, states: &TokenStates) -> Vec<f64> {
        let (n, d) = (self.num_tags, self.hidden_dim);
        let w = params.segment(self.weight);
        let b = params.segment(self.bias);
        let mut out = vec![0.0; states.len() * n];
        for i in 0..states.len() {
            let h = states.row(i);
            for t in 0..n {
                out[i * n + t] = b[t] + w[t * d..(t + 1) * d].iter().zip(h).map(|(a, x)| a * x).sum::<f64>();
            }
        }
        out
    }

    fn backward(
        &self,
        params: &ParameterVector,
        states: &TokenStates,
        d_emissions: &[f64],
        d_transitions: &[f64],
        grad: &mut GradientVector,
        d_states: &mut [f64],
    ) {
        let (n, d) = (self.num_tags, self.hidden_dim);
        let w = params.segment(self.weight);
        for i in 0..states.len() {
            let h = states.row(i);
            let de = &d_emissions[i * n..(i + 1) * n];
            {
                let gw = grad.segment_mut(self.weight);
                for t in 0..n {
                    for c in 0..d {
                        gw[t * d + c] += de[t] * h[c];
                    }
                }
            }
            for (acc, g) in grad.segment_mut(self.bias).iter_mut().zip(de) {
                *acc += g;
            }
            let ds = &mut d_states[i * d..(i + 1) * d];
            for t in 0..n {
                for c in 0..d {
                    ds[c] += w[t * d + c] * de[t];
                }
            }
        }
        for (acc, g) in grad.segment_mut(self.transitions).iter_mut().zip(d_transitions) {
            *acc += g;
        }
    }
}

#[derive(Debug, Clone)]
pub struct EeModel {
    vocab: Vocabulary,
    schema: EeSchema,
    entity_tags: TagSet,
    trigger_tags: TagSet,
    encoder: Encoder,
    entity_crf: CrfLayer,
    trigger_crf: CrfLayer,
    entity_head: AffineHead,
    event_head: AffineHead,
    role_head: AffineHead,
    layout: Arc<Layout>,
}

/// Per-term breakdown of the total loss for one sentence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EeLossTerms {
    pub entity_identification: f64,
    pub trigger_identification: f64,
    pub entity_type: f64,
    pub event_type: f64,
    pub argument_role: f64,
}

impl EeLossTerms {
    pub fn total(&self) -> f64 {
        self.entity_identification
            + self.trigger_identification
            + self.entity_type
            + self.event_type
            + self.argument_role
    }
}

impl EeModel {
    /// Classifier heads use `head_hidden` units; identification taggers use
    /// typed BIO tag sets.
    pub fn new(vocab: Vocabulary, schema: EeSchema, config: EncoderConfig, head_hidden: usize) -> Result<Self> {
        let entity_tags = TagSet::new(schema.entity_types.iter().cloned())?;
        let trigger_tags = TagSet::new(schema.event_types.iter().cloned())?;
        let d = config.hidden_dim;
        let mut b = Layout::builder();
        let encoder = Encoder::register(config, vocab.len(), &mut b);
        let entity_crf = CrfLayer::register("ee.entity_tagger", entity_tags.len(), d, &mut b);
        let trigger_crf = CrfLayer::register("ee.trigger_tagger", trigger_tags.len(), d, &mut b);
        let entity_head = AffineHead::register("ee.entity_type", d, head_hidden, schema.entity_types.len(), &mut b);
        let event_head = AffineHead::register("ee.event_type", d, head_hidden, schema.event_types.len(), &mut b);
        let role_head = AffineHead::register("ee.argument_role", 2 * d, head_hidden, schema.roles.len() + 1, &mut b);
        Ok(EeModel {
            vocab,
            schema,
            entity_tags,
            trigger_tags,
            encoder,
            entity_crf,
            trigger_crf,
            entity_head,
            event_head,
            role_head,
            layout: b.build(),
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn schema(&self) -> &EeSchema {
        &self.schema
    }

    pub fn encode(&self, params: &ParameterVector, tokens: &[String]) -> Result<TokenStates> {
        self.encoder.encode(&self.vocab.ids(tokens), params)
    }

    pub fn entity_emissions(&self, params: &ParameterVector, states: &TokenStates) -> Vec<f64> {
        self.entity_crf.emissions(params, states)
    }

    pub fn trigger_emissions(&self, params: &ParameterVector, states: &TokenStates) -> Vec<f64> {
        self.trigger_crf.emissions(params, states)
    }

    pub fn entity_transitions<'p>(&self, params: &'p ParameterVector) -> &'p [f64] {
        params.segment(self.entity_crf.transitions)
    }

    pub fn trigger_transitions<'p>(&self, params: &'p ParameterVector) -> &'p [f64] {
        params.segment(self.trigger_crf.transitions)
    }

    pub fn entity_tags(&self) -> &TagSet {
        &self.entity_tags
    }

    pub fn trigger_tags(&self) -> &TagSet {
        &self.trigger_tags
    }

    fn head(&self, task: ClassifierTask) -> &AffineHead {
        match task {
            ClassifierTask::EntityType => &self.entity_head,
            ClassifierTask::EventType => &self.event_head,
            ClassifierTask::ArgumentRole => &self.role_head,
        }
    }

    /// Logits of a node classifier. Argument roles need a node pair, see
    /// [`EeModel::classify_edge`].
    pub fn classify_node(&self, params: &ParameterVector, v: &[f64], task: ClassifierTask) -> Result<Vec<f64>> {
        if task == ClassifierTask::ArgumentRole {
            return Err(Error::InvalidArgument(
                "argument roles are classified over node pairs".into(),
            ));
        }
        Ok(self.head(task).forward(params, v)?.logits)
    }

    /// Role logits for `[v_trigger; v_entity]`; class 0 is "no role".
    pub fn classify_edge(&self, params: &ParameterVector, v_trigger: &[f64], v_entity: &[f64]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(v_trigger.len() + v_entity.len());
        x.extend_from_slice(v_trigger);
        x.extend_from_slice(v_entity);
        Ok(self.role_head.forward(params, &x)?.logits)
    }

    fn check(&self, tokens: &[String], graph: &EventGraph) -> Result<()> {
        graph.validate(tokens.len(), &self.schema)
    }

    /// Loss terms for one sentence; with `grad` set, also accumulates
    /// `weight · ∇total`.
    pub fn loss_terms(
        &self,
        params: &ParameterVector,
        tokens: &[String],
        graph: &EventGraph,
        mut grad: Option<(&mut GradientVector, f64)>,
    ) -> Result<EeLossTerms> {
        self.check(tokens, graph)?;
        let states = self.encode(params, tokens)?;
        let d = states.dim();
        let mut d_states = vec![0.0; states.len() * d];
        let mut terms = EeLossTerms::default();

        for (crf, tags, spans, slot) in [
            (&self.entity_crf, &self.entity_tags, &graph.entities, &mut terms.entity_identification),
            (&self.trigger_crf, &self.trigger_tags, &graph.triggers, &mut terms.trigger_identification),
        ] {
            let gold = tags.encode_spans(tokens.len(), spans)?;
            let em = crf.emissions(params, &states);
            let view = CrfView::new(&em, params.segment(crf.transitions), crf.num_tags)?;
            match grad.as_mut() {
                Some((g, w)) => {
                    let (nll, mut de, mut dt) = view.nll_with_grad(&gold)?;
                    de.iter_mut().chain(dt.iter_mut()).for_each(|v| *v *= *w);
                    crf.backward(params, &states, &de, &dt, g, &mut d_states);
                    *slot = nll;
                }
                None => *slot = view.nll(&gold)?,
            }
        }

        let entity_reps: Vec<Vec<f64>> = graph
            .entities
            .iter()
            .map(|s| node_representation(&states, s))
            .collect::<Result<_>>()?;
        let trigger_reps: Vec<Vec<f64>> = graph
            .triggers
            .iter()
            .map(|s| node_representation(&states, s))
            .collect::<Result<_>>()?;

        // (head, input, gold class, node spans feeding the input)
        let mut instances: Vec<(ClassifierTask, Vec<f64>, usize, Vec<Span>)> = Vec::new();
        for (s, v) in graph.entities.iter().zip(&entity_reps) {
            instances.push((ClassifierTask::EntityType, v.clone(), s.label, vec![*s]));
        }
        for (s, v) in graph.triggers.iter().zip(&trigger_reps) {
            instances.push((ClassifierTask::EventType, v.clone(), s.label, vec![*s]));
        }
        for (ti, (ts, tv)) in graph.triggers.iter().zip(&trigger_reps).enumerate() {
            for (ei, (es, ev)) in graph.entities.iter().zip(&entity_reps).enumerate() {
                let class = graph.role_of(ti, ei).map_or(0, |r| r + 1);
                let mut x = tv.clone();
                x.extend_from_slice(ev);
                instances.push((ClassifierTask::ArgumentRole, x, class, vec![*ts, *es]));
            }
        }

        for task in [ClassifierTask::EntityType, ClassifierTask::EventType, ClassifierTask::ArgumentRole] {
            let count = instances.iter().filter(|i| i.0 == task).count();
            if count == 0 {
                continue;
            }
            let scale = 1.0 / count as f64;
            let head = self.head(task);
            let mut sum = 0.0;
            for (_, x, class, spans) in instances.iter().filter(|i| i.0 == task) {
                let out = head.forward(params, x)?;
                let (loss, mut dl) = softmax_cross_entropy(&out.logits, *class)?;
                sum += loss;
                if let Some((g, w)) = grad.as_mut() {
                    dl.iter_mut().for_each(|v| *v *= *w * scale);
                    let mut dx = vec![0.0; x.len()];
                    head.backward(params, x, &out, &dl, g, Some(&mut dx));
                    for (k, span) in spans.iter().enumerate() {
                        let dv = &dx[k * d..(k + 1) * d];
                        let width = (span.end - span.start) as f64;
                        for i in span.start..span.end {
                            for (acc, g) in d_states[i * d..(i + 1) * d].iter_mut().zip(dv) {
                                *acc += g / width;
                            }
                        }
                    }
                }
            }
            let mean = sum * scale;
            match task {
                ClassifierTask::EntityType => terms.entity_type = mean,
                ClassifierTask::EventType => terms.event_type = mean,
                ClassifierTask::ArgumentRole => terms.argument_role = mean,
            }
        }

        if let Some((g, _)) = grad {
            self.encoder.backward(&states, &d_states, params, g)?;
        }
        Ok(terms)
    }

    /// Identification, then per-node and per-pair argmax classification.
    pub fn predict_graph(&self, params: &ParameterVector, tokens: &[String]) -> Result<(EventGraph, f64)> {
        let states = self.encode(params, tokens)?;
        let mut posteriors = Vec::with_capacity(2);
        let mut spans = Vec::with_capacity(2);
        for (crf, tags) in [(&self.entity_crf, &self.entity_tags), (&self.trigger_crf, &self.trigger_tags)] {
            let em = crf.emissions(params, &states);
            let view = CrfView::new(&em, params.segment(crf.transitions), crf.num_tags)?;
            let path = view.viterbi();
            posteriors.push((view.path_score(&path)? - view.log_partition()).exp());
            spans.push(decode_spans(tags, &path));
        }
        let trigger_spans = spans.pop().unwrap_or_default();
        let entity_spans = spans.pop().unwrap_or_default();

        let mut cls_probs = Vec::new();
        let mut graph = EventGraph::default();
        let mut entity_reps = Vec::new();
        for s in &entity_spans {
            let v = node_representation(&states, s)?;
            let logits = self.entity_head.forward(params, &v)?.logits;
            let label = argmax(&logits);
            cls_probs.push(softmax(&logits)[label]);
            graph.entities.push(Span { label, ..*s });
            entity_reps.push(v);
        }
        let mut trigger_reps = Vec::new();
        for s in &trigger_spans {
            let v = node_representation(&states, s)?;
            let logits = self.event_head.forward(params, &v)?.logits;
            let label = argmax(&logits);
            cls_probs.push(softmax(&logits)[label]);
            graph.triggers.push(Span { label, ..*s });
            trigger_reps.push(v);
        }
        for (ti, tv) in trigger_reps.iter().enumerate() {
            for (ei, ev) in entity_reps.iter().enumerate() {
                let logits = self.classify_edge(params, tv, ev)?;
                let class = argmax(&logits);
                cls_probs.push(softmax(&logits)[class]);
                if class > 0 {
                    graph.arguments.push(Argument {
                        trigger: ti,
                        entity: ei,
                        role: class - 1,
                    });
                }
            }
        }
        let ident = posteriors.iter().sum::<f64>() / posteriors.len() as f64;
        let confidence = if cls_probs.is_empty() {
            ident
        } else {
            0.5 * (ident + cls_probs.iter().sum::<f64>() / cls_probs.len() as f64)
        };
        Ok((graph, confidence))
    }
}

impl TaskModel for EeModel {
    type Input = Vec<String>;
    type Label = EventGraph;

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn head_segments(&self) -> Vec<SegmentId> {
        let mut v = Vec::new();
        v.extend(self.entity_crf.segments());
        v.extend(self.trigger_crf.segments());
        v.extend(self.entity_head.segments());
        v.extend(self.event_head.segments());
        v.extend(self.role_head.segments());
        v
    }

    fn init_params(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterVector::zeros(self.layout.clone());
        self.encoder.init(&mut params, &mut rng);
        self.entity_crf.init(&mut params, &mut rng);
        self.trigger_crf.init(&mut params, &mut rng);
        self.entity_head.init(&mut params, &mut rng);
        self.event_head.init(&mut params, &mut rng);
        self.role_head.init(&mut params, &mut rng);
        params
    }

    fn predict(&self, params: &ParameterVector, tokens: &Vec<String>) -> Result<EventGraph> {
        Ok(self.predict_graph(params, tokens)?.0)
    }

    fn loss(&self, params: &ParameterVector, tokens: &Vec<String>, graph: &EventGraph) -> Result<f64> {
        Ok(self.loss_terms(params, tokens, graph, None)?.total())
    }

    fn accumulate_gradient(
        &self,
        params: &ParameterVector,
        tokens: &Vec<String>,
        graph: &EventGraph,
        weight: f64,
        grad: &mut GradientVector,
    ) -> Result<f64> {
        Ok(self.loss_terms(params, tokens, graph, Some((grad, weight)))?.total())
    }

    /// Average of the mean Viterbi-path posterior of both taggers and the mean
    /// softmax probability of every classification decision in `graph`.
    fn confidence(&self, params: &ParameterVector, tokens: &Vec<String>, graph: &EventGraph) -> Result<f64> {
        self.check(tokens, graph)?;
        let (predicted, conf) = self.predict_graph(params, tokens)?;
        if &predicted == graph {
            return Ok(conf);
        }
        let states = self.encode(params, tokens)?;
        let mut posteriors = Vec::with_capacity(2);
        for crf in [&self.entity_crf, &self.trigger_crf] {
            let em = crf.emissions(params, &states);
            let view = CrfView::new(&em, params.segment(crf.transitions), crf.num_tags)?;
            let path = view.viterbi();
            posteriors.push((view.path_score(&path)? - view.log_partition()).exp());
        }
        let mut probs = Vec::new();
        let reps = |spans: &[Span]| -> Result<Vec<Vec<f64>>> {
            spans.iter().map(|s| node_representation(&states, s)).collect()
        };
        let ents = reps(&graph.entities)?;
        let trigs = reps(&graph.triggers)?;
        for (s, v) in graph.entities.iter().zip(&ents) {
            probs.push(softmax(&self.entity_head.forward(params, v)?.logits)[s.label]);
        }
        for (s, v) in graph.triggers.iter().zip(&trigs) {
            probs.push(softmax(&self.event_head.forward(params, v)?.logits)[s.label]);
        }
        for (ti, tv) in trigs.iter().enumerate() {
            for (ei, ev) in ents.iter().enumerate() {
                let class = graph.role_of(ti, ei).map_or(0, |r| r + 1);
                probs.push(softmax(&self.classify_edge(params, tv, ev)?)[class]);
            }
        }
        let ident = posteriors.iter().sum::<f64>() / 2.0;
        Ok(if probs.is_empty() {
            ident
        } else {
            0.5 * (ident + probs.iter().sum::<f64>() / probs.len() as f64)
        })
    }

    fn match_counts(&self, pred: &EventGraph, gold: &EventGraph) -> MatchCounts {
        trigger_counts(pred, gold)
    }
}
