//! The two-affine classifier used by every task head,
//! `logits = W_o (W_h x + b_h) + b_o`, and softmax cross-entropy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{GradientVector, LayoutBuilder, ParameterVector, SegmentId};

#[derive(Debug, Clone, PartialEq)]
pub struct AffineHead {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w_h: SegmentId,
    b_h: SegmentId,
    w_o: SegmentId,
    b_o: SegmentId,
}

/// Intermediate values of one head evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + w[r * n..(r + 1) * n].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

impl AffineHead {
    pub fn register(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        layout: &mut LayoutBuilder,
    ) -> Self {
        AffineHead {
            input_dim,
            hidden_dim,
            output_dim,
            w_h: layout.push(format!("{prefix}.hidden.weight"), &[hidden_dim, input_dim]),
            b_h: layout.push(format!("{prefix}.hidden.bias"), &[hidden_dim]),
            w_o: layout.push(format!("{prefix}.output.weight"), &[output_dim, hidden_dim]),
            b_o: layout.push(format!("{prefix}.output.bias"), &[output_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn segments(&self) -> [SegmentId; 4] {
        [self.w_h, self.b_h, self.w_o, self.b_o]
    }

    pub fn init<R: Rng>(&self, params: &mut ParameterVector, rng: &mut R) {
        let a = (6.0 / (self.input_dim + self.hidden_dim) as f64).sqrt();
        params.fill_uniform(self.w_h, a, rng);
        params.fill_uniform(self.b_h, 0.0, rng);
        let a = (6.0 / (self.hidden_dim + self.output_dim) as f64).sqrt();
        params.fill_uniform(self.w_o, a, rng);
        params.fill_uniform(self.b_o, 0.0, rng);
    }

    pub fn forward(&self, params: &ParameterVector, x: &[f64]) -> Result<HeadOutput> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "head expects input of length {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut hidden = vec![0.0; self.hidden_dim];
        affine(params.segment(self.w_h), params.segment(self.b_h), x, &mut hidden);
        let mut logits = vec![0.0; self.output_dim];
        affine(params.segment(self.w_o), params.segment(self.b_o), &hidden, &mut logits);
        Ok(HeadOutput { hidden, logits })
    }

    /// Accumulates parameter gradients and, when `d_input` is given, adds
    /// `∂loss/∂x` into it.
    pub fn backward(
        &self,
        params: &ParameterVector,
        x: &[f64],
        out: &HeadOutput,
        d_logits: &[f64],
        grad: &mut GradientVector,
        d_input: Option<&mut [f64]>,
    ) {
        let (h, o, n) = (self.hidden_dim, self.output_dim, self.input_dim);
        {
            let gw = grad.segment_mut(self.w_o);
            for r in 0..o {
                for c in 0..h {
                    gw[r * h + c] += d_logits[r] * out.hidden[c];
                }
            }
        }
        for (acc, g) in grad.segment_mut(self.b_o).iter_mut().zip(d_logits) {
            *acc += g;
        }
        let w_o = params.segment(self.w_o);
        let mut d_hidden = vec![0.0; h];
        for r in 0..o {
            for c in 0..h {
                d_hidden[c] += w_o[r * h + c] * d_logits[r];
            }
        }
        {
            let gw = grad.segment_mut(self.w_h);
            for r in 0..h {
                for c in 0..n {
                    gw[r * n + c] += d_hidden[r] * x[c];
                }
            }
        }
        for (acc, g) in grad.segment_mut(self.b_h).iter_mut().zip(&d_hidden) {
            *acc += g;
        }
        if let Some(dx) = d_input {
            let w_h = params.segment(self.w_h);
            for r in 0..h {
                for c in 0..n {
                    dx[c] += w_h[r * n + c] * d_hidden[r];
                }
            }
        }
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|v| (v - lse).exp()).collect()
}

/// `−log softmax(logits)[gold]` and its gradient `softmax − onehot(gold)`.
pub fn softmax_cross_entropy(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::InvalidLabel(format!(
            "gold index {gold} outside {} classes",
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits);
    let mut grad: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
    grad[gold] -= 1.0;
    Ok((lse - logits[gold], grad))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
