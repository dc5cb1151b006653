//! Sentence-level relation classification between two marked entities.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    Encoder, EncoderConfig, TokenStates, Vocabulary, HEAD_CLOSE, HEAD_OPEN, TAIL_CLOSE, TAIL_OPEN,
};
use crate::error::{Error, Result};
use crate::head::{argmax, softmax, softmax_cross_entropy, AffineHead, HeadOutput};
use crate::math::{GradientVector, Layout, ParameterVector, SegmentId};
use crate::metrics::{MatchCounts, Prf};
use crate::task::TaskModel;

pub const NO_RELATION: &str = "no_relation";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationLabels {
    labels: Vec<String>,
    no_relation: usize,
}

impl RelationLabels {
    /// `labels` must contain `no_relation` exactly once.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut none = labels.iter().enumerate().filter(|(_, l)| *l == NO_RELATION);
        let no_relation = match (none.next(), none.next()) {
            (Some((i, _)), None) => i,
            _ => {
                return Err(Error::InvalidLabel(format!(
                    "label set must contain `{NO_RELATION}` exactly once"
                )))
            }
        };
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidLabel(format!("duplicate relation `{l}`")));
            }
        }
        Ok(RelationLabels {
            labels,
            no_relation,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn no_relation(&self) -> usize {
        self.no_relation
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn parse(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::InvalidLabel(format!("unknown relation `{name}`")))
    }
}

/// A sentence with a head and a tail entity span, both half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReInput {
    pub tokens: Vec<String>,
    pub head: (usize, usize),
    pub tail: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReExample {
    pub input: ReInput,
    pub relation: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSentence {
    pub tokens: Vec<String>,
    /// Index of `[E1]`.
    pub head_pos: usize,
    /// Index of `[E2]`.
    pub tail_pos: usize,
}

fn check_span(name: &str, (s, e): (usize, usize), len: usize) -> Result<()> {
    if s >= e || e > len {
        return Err(Error::InvalidSpan(format!(
            "{name} span ({s}, {e}) in sentence of length {len}"
        )));
    }
    Ok(())
}

/// Wraps the head span in `[E1] … [/E1]` and the tail in `[E2] … [/E2]`.
pub fn insert_markers(input: &ReInput) -> Result<MarkedSentence> {
    let len = input.tokens.len();
    check_span("head", input.head, len)?;
    check_span("tail", input.tail, len)?;
    let (h, t) = (input.head, input.tail);
    if h.0 < t.1 && t.0 < h.1 {
        return Err(Error::InvalidSpan(format!(
            "head ({}, {}) and tail ({}, {}) overlap",
            h.0, h.1, t.0, t.1
        )));
    }
    let mut tokens = Vec::with_capacity(len + 4);
    let (mut head_pos, mut tail_pos) = (0, 0);
    for (i, tok) in input.tokens.iter().enumerate() {
        if i == h.0 {
            head_pos = tokens.len();
            tokens.push(HEAD_OPEN.to_string());
        }
        if i == t.0 {
            tail_pos = tokens.len();
            tokens.push(TAIL_OPEN.to_string());
        }
        tokens.push(tok.clone());
        if i + 1 == h.1 {
            tokens.push(HEAD_CLOSE.to_string());
        }
        if i + 1 == t.1 {
            tokens.push(TAIL_CLOSE.to_string());
        }
    }
    Ok(MarkedSentence {
        tokens,
        head_pos,
        tail_pos,
    })
}

/// `[h_{[E1]}; h_{[E2]}]`
pub fn relational_embedding(states: &TokenStates, head_pos: usize, tail_pos: usize) -> Result<Vec<f64>> {
    for p in [head_pos, tail_pos] {
        if p >= states.len() {
            return Err(Error::Shape(format!(
                "marker position {p} outside {} states",
                states.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(2 * states.dim());
    out.extend_from_slice(states.row(head_pos));
    out.extend_from_slice(states.row(tail_pos));
    Ok(out)
}

/// Counts where `no_relation` is never a prediction, never a gold relation,
/// and never a true positive.
pub fn relation_counts(preds: &[usize], golds: &[usize], no_relation: usize) -> Result<MatchCounts> {
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut c = MatchCounts::default();
    for (&p, &g) in preds.iter().zip(golds) {
        if p != no_relation {
            c.predicted += 1;
        }
        if g != no_relation {
            c.gold += 1;
        }
        if p == g && p != no_relation {
            c.correct += 1;
        }
    }
    Ok(c)
}

pub fn relation_f1(preds: &[usize], golds: &[usize], labels: &RelationLabels) -> Result<Prf> {
    Ok(relation_counts(preds, golds, labels.no_relation())?.prf())
}

pub struct ReForward {
    pub states: TokenStates,
    pub marked: MarkedSentence,
    pub features: Vec<f64>,
    pub head: HeadOutput,
}

#[derive(Debug, Clone)]
pub struct ReModel {
    vocab: Vocabulary,
    labels: RelationLabels,
    encoder: Encoder,
    head: AffineHead,
    layout: Arc<Layout>,
}

impl ReModel {
    pub fn new(vocab: Vocabulary, labels: RelationLabels, config: EncoderConfig) -> Self {
        let mut b = Layout::builder();
        let encoder = Encoder::register(config, vocab.len(), &mut b);
        let head = AffineHead::register(
            "re",
            2 * config.hidden_dim,
            config.hidden_dim,
            labels.len(),
            &mut b,
        );
        ReModel {
            vocab,
            labels,
            encoder,
            head,
            layout: b.build(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn labels(&self) -> &RelationLabels {
        &self.labels
    }

    pub fn forward(&self, params: &ParameterVector, input: &ReInput) -> Result<ReForward> {
        let marked = insert_markers(input)?;
        let ids = self.vocab.ids(&marked.tokens);
        let states = self.encoder.encode(&ids, params)?;
        let features = relational_embedding(&states, marked.head_pos, marked.tail_pos)?;
        let head = self.head.forward(params, &features)?;
        Ok(ReForward {
            states,
            marked,
            features,
            head,
        })
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.labels.len() {
            return Err(Error::InvalidLabel(format!("relation index {label}")));
        }
        Ok(())
    }
}

impl TaskModel for ReModel {
    type Input = ReInput;
    type Label = usize;

    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn head_segments(&self) -> Vec<SegmentId> {
        self.head.segments().to_vec()
    }

    fn init_params(&self, seed: u64) -> ParameterVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterVector::zeros(self.layout.clone());
        self.encoder.init(&mut params, &mut rng);
        self.head.init(&mut params, &mut rng);
        params
    }

    fn predict(&self, params: &ParameterVector, input: &ReInput) -> Result<usize> {
        Ok(argmax(&self.forward(params, input)?.head.logits))
    }

    fn loss(&self, params: &ParameterVector, input: &ReInput, label: &usize) -> Result<f64> {
        self.check_label(*label)?;
        let fwd = self.forward(params, input)?;
        Ok(softmax_cross_entropy(&fwd.head.logits, *label)?.0)
    }

    fn accumulate_gradient(
        &self,
        params: &ParameterVector,
        input: &ReInput,
        label: &usize,
        weight: f64,
        grad: &mut GradientVector,
    ) -> Result<f64> {
        self.check_label(*label)?;
        let fwd = self.forward(params, input)?;
        let (loss, mut d_logits) = softmax_cross_entropy(&fwd.head.logits, *label)?;
        if weight == 0.0 {
            return Ok(loss);
        }
        for v in &mut d_logits {
            *v *= weight;
        }
        let d = fwd.states.dim();
        let mut d_features = vec![0.0; 2 * d];
        self.head
            .backward(params, &fwd.features, &fwd.head, &d_logits, grad, Some(&mut d_features));
        let mut d_states = vec![0.0; fwd.states.len() * d];
        let (hp, tp) = (fwd.marked.head_pos, fwd.marked.tail_pos);
        for c in 0..d {
            d_states[hp * d + c] += d_features[c];
            d_states[tp * d + c] += d_features[d + c];
        }
        self.encoder.backward(&fwd.states, &d_states, params, grad)?;
        Ok(loss)
    }

    fn confidence(&self, params: &ParameterVector, input: &ReInput, label: &usize) -> Result<f64> {
        self.check_label(*label)?;
        Ok(softmax(&self.forward(params, input)?.head.logits)[*label])
    }

    fn match_counts(&self, pred: &usize, gold: &usize) -> MatchCounts {
        relation_counts(&[*pred], &[*gold], self.labels.no_relation()).unwrap_or_default()
    }
}
