//! BIO tagging over encoder states with a per-token two-affine head.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, TokenStates, Vocabulary};
use crate::error::{Error, Result};
use crate::head::{argmax, softmax, softmax_cross_entropy, AffineHead, HeadOutput};
use crate::math::{GradientVector, Layout, ParameterVector, SegmentId};
use crate::metrics::{MatchCounts, Prf};
use crate::task::TaskModel;

/// `O`, then `B-t`, `I-t` for each entity type `t` in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    types: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl TagSet {
    pub fn new<S: Into<String>>(types: impl IntoIterator<Item = S>) -> Result<Self> {
        let types: Vec<String> = types.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        index.insert("O".to_string(), 0);
        for (i, t) in types.iter().enumerate() {
            if t.is_empty() || t == "O" {
                return Err(Error::InvalidLabel(format!("bad entity type `{t}`")));
            }
            if index.insert(format!("B-{t}"), 1 + 2 * i).is_some() {
                return Err(Error::InvalidLabel(format!("duplicate entity type `{t}`")));
            }
            index.insert(format!("I-{t}"), 2 + 2 * i);
        }
        Ok(TagSet { types, index })
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        1 + 2 * self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn begin(&self, type_idx: usize) -> usize {
        1 + 2 * type_idx
    }

    pub fn inside(&self, type_idx: usize) -> usize {
        2 + 2 * type_idx
    }

    pub fn kind(&self, tag: usize) -> TagKind {
        match tag {
            0 => TagKind::Outside,
            t if t % 2 == 1 => TagKind::Begin((t - 1) / 2),
            t => TagKind::Inside((t - 2) / 2),
        }
    }

    pub fn name(&self, tag: usize) -> String {
        match self.kind(tag) {
            TagKind::Outside => "O".to_string(),
            TagKind::Begin(t) => format!("B-{}", self.types[t]),
            TagKind::Inside(t) => format!("I-{}", self.types[t]),
        }
    }

    pub fn parse(&self, tag: &str) -> Result<usize> {
        self.index
            .get(tag)
            .copied()
            .ok_or_else(|| Error::InvalidLabel(format!("unknown tag `{tag}`")))
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t == name)
    }

    /// `I-t` only directly after `B-t` or `I-t`.
    pub fn is_valid(&self, tags: &[usize]) -> bool {
        let mut prev = TagKind::Outside;
        for &tag in tags {
            if tag >= self.len() {
                return false;
            }
            let kind = self.kind(tag);
            if let TagKind::Inside(t) = kind {
                match prev {
                    TagKind::Begin(p) | TagKind::Inside(p) if p == t => {}
                    _ => return false,
                }
            }
            prev = kind;
        }
        true
    }

    /// BIO tags for non-overlapping spans over a sentence of length `len`.
    pub fn encode_spans(&self, len: usize, spans: &[Span]) -> Result<Vec<usize>> {
        let mut tags = vec![0; len];
        for s in spans {
            if s.start >= s.end || s.end > len || s.label >= self.types.len() {
                return Err(Error::InvalidSpan(format!("{s:?} in sentence of length {len}")));
            }
            if tags[s.start..s.end].iter().any(|&t| t != 0) {
                return Err(Error::InvalidSpan(format!("{s:?} overlaps another span")));
            }
            tags[s.start] = self.begin(s.label);
            for t in &mut tags[s.start + 1..s.end] {
                *t = self.inside(s.label);
            }
        }
        Ok(tags)
    }
}

/// Half-open token span `[start, end)` with a type index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// Maximal spans of a possibly invalid tag sequence. An `I-t` that does not
/// continue an open `t` span starts a new one; any change of type closes the
/// open span.
pub fn decode_spans(tags: &TagSet, seq: &[usize]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &tag) in seq.iter().enumerate() {
        match tags.kind(tag) {
            TagKind::Outside => {
                if let Some((start, label)) = open.take() {
                    spans.push(Span { start, end: i, label });
                }
            }
            TagKind::Begin(t) => {
                if let Some((start, label)) = open.take() {
                    spans.push(Span { start, end: i, label });
                }
                open = Some((i, t));
            }
            TagKind::Inside(t) => match open {
                Some((_, label)) if label == t => {}
                _ => {
                    if let Some((start, label)) = open.take() {
                        spans.push(Span { start, end: i, label });
                    }
                    open = Some((i, t));
                }
            },
        }
    }
    if let Some((start, label)) = open {
        spans.push(Span {
            start,
            end: seq.len(),
            label,
        });
    }
    spans
}

/// Span-level micro P/R/F1: a span counts only if start, end and type all match.
pub fn span_f1(pred: &[Vec<Span>], gold: &[Vec<Span>]) -> Result<Prf> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predicted sentences vs {} gold",
            pred.len(),
            gold.len()
        )));
    }
    let counts: MatchCounts = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| MatchCounts::of_sets(p.iter().copied(), g.iter().copied()))
        .sum();
    Ok(counts.prf())
}

/// Mean over tokens of `−log softmax(logits)[gold]`.
pub fn ner_loss(logits: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if logits.len() != gold.len() || logits.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} gold tags",
            logits.len(),
            gold.len()
        )));
    }
    let mut total = 0.0;
    for (row, &g) in logits.iter().zip(gold) {
        total += softmax_cross_entropy(row, g)?.0;
    }
    Ok(total / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerExample {
    pub tokens: Vec<String>,
    pub tags: Vec<usize>,
}

pub struct NerForward {
    pub states: TokenStates,
    pub heads: Vec<HeadOutput>,
}

impl NerForward {
    pub fn logits(&self) -> Vec<Vec<f64>> {
        self.heads.iter().map(|h| h.logits.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NerModel {
    vocab: Vocabulary,
    tags: TagSet,
    encoder: Encoder,
    head: AffineHead,
    layout: Arc<Layout>,
}

impl NerModel {
    /// The head's hidden layer has the encoder's hidden width.
    pub fn new(vocab: Vocabulary, tags: TagSet, config: EncoderConfig) -> Self {
        let mut b = Layout::builder();
        let encoder = Encoder::register(config, vocab.len(), &mut b);
        let head = AffineHead::register("ner", config.hidden_dim, config.hidden_dim, tags.len(), &mut b);
        NerModel {
            vocab,
            tags,
            encoder,
            head,
            layout: b.build(),
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn tags(&self) -> &TagSet {
        &self.tags
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn forward(&self, params: &ParameterVector, tokens: &[String]) -> Result<NerForward> {
        let ids = self.vocab.ids(tokens);
        let states = self.encoder.encode(&ids, params)?;
        let heads = (0..states.len())
            .map(|i| self.head.forward(params, states.row(i)))
            .collect::<Result<_>>()?;
        Ok(NerForward { states, heads })
    }

    fn check_label(&self, tokens: &[String], tags: &[usize]) -> Result<()> {
        if tokens.len() != tags.len() {
            return Err(Error::Shape(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.tags.len()) {
            return Err(Error::InvalidLabel(format!("tag index {bad}")));
        }
        Ok(())
    }

    /// Backprop of `Σ_i token_weight · CE_i` for one sentence.
    fn accumulate_tokens(
        &self,
        params: &ParameterVector,
        tokens: &[String],
        tags: &[usize],
        token_weight: f64,
        grad: &mut GradientVector,
    ) -> Result<f64> {
        self.check_label(tokens, tags)?;
        let fwd = self.forward(params, tokens)?;
        let d = fwd.states.dim();
        let mut d_states = vec![0.0; fwd.states.len() * d];
        let mut total = 0.0;
        for (i, (out, &gold)) in fwd.heads.iter().zip(tags).enumerate() {
            let (loss, mut d_logits) = softmax_cross_entropy(&out.logits, gold)?;
            total += loss;
            if token_weight == 0.0 {
                continue;
            }
            for v in &mut d_logits {
                *v *= token_weight;
            }
            self.head.backward(
                params,
                fwd.states.row(i),
                out,
                &d_logits,
                grad,
                Some(&mut d_states[i * d..(i + 1) * d]),
            );
        }
        if token_weight != 0.0 {
            self.encoder.backward(&fwd.states, &d_states, params, grad)?;
        }
        Ok(total)
    }
}

impl TaskModel for NerModel {
    type Input = Vec<String>;
    type Label = Vec<usize>;

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

    /// Per-token argmax, ties to the lower tag index.
    fn predict(&self, params: &ParameterVector, tokens: &Vec<String>) -> Result<Vec<usize>> {
        let fwd = self.forward(params, tokens)?;
        Ok(fwd.heads.iter().map(|h| argmax(&h.logits)).collect())
    }

    fn loss(&self, params: &ParameterVector, tokens: &Vec<String>, tags: &Vec<usize>) -> Result<f64> {
        self.check_label(tokens, tags)?;
        ner_loss(&self.forward(params, tokens)?.logits(), tags)
    }

    fn accumulate_gradient(
        &self,
        params: &ParameterVector,
        tokens: &Vec<String>,
        tags: &Vec<usize>,
        weight: f64,
        grad: &mut GradientVector,
    ) -> Result<f64> {
        let n = tokens.len().max(1) as f64;
        Ok(self.accumulate_tokens(params, tokens, tags, weight / n, grad)? / n)
    }

    /// Mean softmax probability of the given tags.
    fn confidence(&self, params: &ParameterVector, tokens: &Vec<String>, tags: &Vec<usize>) -> Result<f64> {
        self.check_label(tokens, tags)?;
        let fwd = self.forward(params, tokens)?;
        let sum: f64 = fwd
            .heads
            .iter()
            .zip(tags)
            .map(|(h, &t)| softmax(&h.logits)[t])
            .sum();
        Ok(sum / tags.len() as f64)
    }

    fn match_counts(&self, pred: &Vec<usize>, gold: &Vec<usize>) -> MatchCounts {
        MatchCounts::of_sets(decode_spans(&self.tags, pred), decode_spans(&self.tags, gold))
    }

    /// Mean over every token of every sentence in the batch.
    fn batch_loss_and_grad(
        &self,
        params: &ParameterVector,
        batch: &[(Vec<String>, Vec<usize>)],
    ) -> Result<(f64, GradientVector)> {
        let total_tokens: usize = batch.iter().map(|(x, _)| x.len()).sum();
        if total_tokens == 0 {
            return Err(Error::Empty("batch"));
        }
        let w = 1.0 / total_tokens as f64;
        let mut grad = GradientVector::zeros(self.layout.clone());
        let mut total = 0.0;
        for (x, y) in batch {
            total += self.accumulate_tokens(params, x, y, w, &mut grad)?;
        }
        Ok((total * w, grad))
    }
}
