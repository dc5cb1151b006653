//! Vocabulary and the windowed context encoder shared by all three task models.
//!
//! Each token is represented by the concatenated embeddings of the `2k + 1`
//! tokens around it (positions outside the sentence read the `[PAD]` row),
//! mixed by one affine layer and a `tanh`:
//!
//! ```text
//! h_i = tanh(W · [e(x_{i-k}); …; e(x_{i+k})] + b)
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{GradientVector, LayoutBuilder, ParameterVector, SegmentId};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const HEAD_OPEN: &str = "[E1]";
pub const HEAD_CLOSE: &str = "[/E1]";
pub const TAIL_OPEN: &str = "[E2]";
pub const TAIL_CLOSE: &str = "[/E2]";

/// Reserved tokens, in id order.
pub const RESERVED: [&str; 6] = [PAD, UNK, HEAD_OPEN, HEAD_CLOSE, TAIL_OPEN, TAIL_CLOSE];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved tokens, then every token seen at least `min_count` times,
    /// most frequent first and lexicographic among equals.
    pub fn build<I, S, T>(corpora: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be >= 1".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut seen_any = false;
        for sentence in corpora {
            for tok in sentence {
                seen_any = true;
                let tok = tok.as_ref();
                if RESERVED.contains(&tok) {
                    continue;
                }
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(Error::Empty("vocabulary corpus"));
        }
        let mut entries: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let tokens = RESERVED
            .iter()
            .map(|t| t.to_string())
            .chain(entries.into_iter().map(|(t, _)| t))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Unknown tokens map to `[UNK]`.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the id.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in input.lines().enumerate() {
            tokens.push(line?);
            if i < RESERVED.len() && tokens[i] != RESERVED[i] {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected reserved token {}", RESERVED[i]),
                });
            }
        }
        if tokens.len() < RESERVED.len() {
            return Err(Error::Parse {
                line: tokens.len() + 1,
                message: "vocabulary is missing reserved tokens".into(),
            });
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub emb_dim: usize,
    /// Context radius `k`; each token sees `2k + 1` positions.
    pub window: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            emb_dim: 32,
            window: 2,
            hidden_dim: 64,
            max_len: 128,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.hidden_dim == 0 || self.max_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "encoder dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn input_dim(&self) -> usize {
        (2 * self.window + 1) * self.emb_dim
    }
}

/// Per-token hidden states `H` (row-major, `len × dim`) plus what backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStates {
    ids: Vec<usize>,
    hidden: Vec<f64>,
    dim: usize,
}

impl TokenStates {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.hidden[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.hidden
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    vocab_size: usize,
    embedding: SegmentId,
    mixer_weight: SegmentId,
    mixer_bias: SegmentId,
}

impl Encoder {
    /// Adds the encoder's segments to `layout`. They must come first so that
    /// every model flattens encoder parameters ahead of its head.
    pub fn register(config: EncoderConfig, vocab_size: usize, layout: &mut LayoutBuilder) -> Self {
        let embedding = layout.push("encoder.embedding", &[vocab_size, config.emb_dim]);
        let mixer_weight = layout.push(
            "encoder.mixer.weight",
            &[config.hidden_dim, config.input_dim()],
        );
        let mixer_bias = layout.push("encoder.mixer.bias", &[config.hidden_dim]);
        Encoder {
            config,
            vocab_size,
            embedding,
            mixer_weight,
            mixer_bias,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn segments(&self) -> [SegmentId; 3] {
        [self.embedding, self.mixer_weight, self.mixer_bias]
    }

    pub fn init<R: Rng>(&self, params: &mut ParameterVector, rng: &mut R) {
        params.fill_uniform(self.embedding, 0.1, rng);
        let fan = (self.config.input_dim() + self.config.hidden_dim) as f64;
        params.fill_uniform(self.mixer_weight, (6.0 / fan).sqrt(), rng);
        params.fill_uniform(self.mixer_bias, 0.0, rng);
    }

    fn fill_window(&self, ids: &[usize], i: usize, window: &mut Vec<usize>) {
        let k = self.config.window;
        window.clear();
        for j in (i as isize - k as isize)..=(i + k) as isize {
            if j < 0 || j as usize >= ids.len() {
                window.push(PAD_ID);
            } else {
                window.push(ids[j as usize]);
            }
        }
    }

    pub fn encode(&self, ids: &[usize], params: &ParameterVector) -> Result<TokenStates> {
        if ids.is_empty() || ids.len() > self.config.max_len {
            return Err(Error::Shape(format!(
                "sentence length {} outside 1..={}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(position) = ids.iter().position(|&id| id >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                position,
                id: ids[position],
            });
        }
        let d = self.config.hidden_dim;
        let e = self.config.emb_dim;
        let in_dim = self.config.input_dim();
        let emb = params.segment(self.embedding);
        let w = params.segment(self.mixer_weight);
        let b = params.segment(self.mixer_bias);

        let mut input = vec![0.0; in_dim];
        let mut window = Vec::with_capacity(2 * self.config.window + 1);
        let mut hidden = vec![0.0; ids.len() * d];
        for i in 0..ids.len() {
            self.fill_window(ids, i, &mut window);
            for (slot, &id) in window.iter().enumerate() {
                input[slot * e..(slot + 1) * e].copy_from_slice(&emb[id * e..(id + 1) * e]);
            }
            let row = &mut hidden[i * d..(i + 1) * d];
            for (r, out) in row.iter_mut().enumerate() {
                let wr = &w[r * in_dim..(r + 1) * in_dim];
                let pre = b[r] + wr.iter().zip(&input).map(|(a, x)| a * x).sum::<f64>();
                *out = pre.tanh();
            }
        }
        Ok(TokenStates {
            ids: ids.to_vec(),
            hidden,
            dim: d,
        })
    }

    /// Accumulates `∂loss/∂θ_encoder` into `grad` given `d_hidden = ∂loss/∂H`.
    pub fn backward(
        &self,
        states: &TokenStates,
        d_hidden: &[f64],
        params: &ParameterVector,
        grad: &mut GradientVector,
    ) -> Result<()> {
        let d = self.config.hidden_dim;
        if d_hidden.len() != states.hidden.len() || states.dim != d {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, states have {}",
                d_hidden.len(),
                states.hidden.len()
            )));
        }
        let e = self.config.emb_dim;
        let in_dim = self.config.input_dim();
        let emb = params.segment(self.embedding);
        let w = params.segment(self.mixer_weight);

        let mut input = vec![0.0; in_dim];
        let mut d_pre = vec![0.0; d];
        let mut d_input = vec![0.0; in_dim];
        let mut window = Vec::with_capacity(2 * self.config.window + 1);
        for i in 0..states.len() {
            let h = states.row(i);
            let dh = &d_hidden[i * d..(i + 1) * d];
            let mut any = false;
            for r in 0..d {
                d_pre[r] = dh[r] * (1.0 - h[r] * h[r]);
                any |= d_pre[r] != 0.0;
            }
            if !any {
                continue;
            }
            self.fill_window(&states.ids, i, &mut window);
            for (slot, &id) in window.iter().enumerate() {
                input[slot * e..(slot + 1) * e].copy_from_slice(&emb[id * e..(id + 1) * e]);
            }

            {
                let gw = grad.segment_mut(self.mixer_weight);
                for r in 0..d {
                    let g = d_pre[r];
                    if g == 0.0 {
                        continue;
                    }
                    for (acc, x) in gw[r * in_dim..(r + 1) * in_dim].iter_mut().zip(&input) {
                        *acc += g * x;
                    }
                }
            }
            {
                let gb = grad.segment_mut(self.mixer_bias);
                for (acc, g) in gb.iter_mut().zip(&d_pre) {
                    *acc += g;
                }
            }

            d_input.fill(0.0);
            for r in 0..d {
                let g = d_pre[r];
                if g == 0.0 {
                    continue;
                }
                for (acc, wv) in d_input.iter_mut().zip(&w[r * in_dim..(r + 1) * in_dim]) {
                    *acc += g * wv;
                }
            }
            let ge = grad.segment_mut(self.embedding);
            for (slot, &id) in window.iter().enumerate() {
                for (acc, g) in ge[id * e..(id + 1) * e]
                    .iter_mut()
                    .zip(&d_input[slot * e..(slot + 1) * e])
                {
                    *acc += g;
                }
            }
        }
        Ok(())
    }
}
