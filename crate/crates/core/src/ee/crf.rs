//! Linear-chain CRF over an emission matrix with virtual begin/end tags.
//!
//! For `n` real tags the transition matrix is `(n + 2) × (n + 2)`, indexed
//! `[from][to]`; row/column `n` is `<b>` and `n + 1` is `<e>`. A path of
//! length `L` scores `Σ emission[i][z_i] + Σ_{i=0..L} A[z_i][z_{i+1}]` with
//! `z_0 = <b>` and `z_{L+1} = <e>`.

use crate::error::{Error, Result};
use crate::head::log_sum_exp;

pub fn begin_tag(num_tags: usize) -> usize {
    num_tags
}

pub fn end_tag(num_tags: usize) -> usize {
    num_tags + 1
}

/// Borrowed scores for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct CrfView<'a> {
    emissions: &'a [f64],
    transitions: &'a [f64],
    num_tags: usize,
}

/// Posterior quantities from the forward–backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub log_partition: f64,
    /// `p(z_i = t)`, row-major `L × n`.
    pub node: Vec<f64>,
    /// Expected number of uses of each transition, `(n + 2)²`.
    pub transition: Vec<f64>,
}

impl<'a> CrfView<'a> {
    pub fn new(emissions: &'a [f64], transitions: &'a [f64], num_tags: usize) -> Result<Self> {
        if num_tags == 0 || emissions.is_empty() || !emissions.len().is_multiple_of(num_tags) {
            return Err(Error::Shape(format!(
                "{} emission scores for {num_tags} tags",
                emissions.len()
            )));
        }
        let t = num_tags + 2;
        if transitions.len() != t * t {
            return Err(Error::Shape(format!(
                "transition matrix has {} entries, expected {}",
                transitions.len(),
                t * t
            )));
        }
        Ok(CrfView {
            emissions,
            transitions,
            num_tags,
        })
    }

    pub fn len(&self) -> usize {
        self.emissions.len() / self.num_tags
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    fn trans(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * (self.num_tags + 2) + to]
    }

    fn emit(&self, i: usize, tag: usize) -> f64 {
        self.emissions[i * self.num_tags + tag]
    }

    pub fn path_score(&self, path: &[usize]) -> Result<f64> {
        if path.len() != self.len() {
            return Err(Error::Shape(format!(
                "path of length {} for sentence of length {}",
                path.len(),
                self.len()
            )));
        }
        if let Some(&bad) = path.iter().find(|&&t| t >= self.num_tags) {
            return Err(Error::InvalidLabel(format!("tag index {bad}")));
        }
        let n = self.num_tags;
        let mut score = self.trans(begin_tag(n), path[0]);
        for (i, &tag) in path.iter().enumerate() {
            score += self.emit(i, tag);
            if i > 0 {
                score += self.trans(path[i - 1], tag);
            }
        }
        Ok(score + self.trans(path[path.len() - 1], end_tag(n)))
    }

    fn forward(&self) -> Vec<f64> {
        let (n, len) = (self.num_tags, self.len());
        let mut alpha = vec![0.0; len * n];
        for t in 0..n {
            alpha[t] = self.trans(begin_tag(n), t) + self.emit(0, t);
        }
        let mut buf = vec![0.0; n];
        for i in 1..len {
            for t in 0..n {
                for s in 0..n {
                    buf[s] = alpha[(i - 1) * n + s] + self.trans(s, t);
                }
                alpha[i * n + t] = log_sum_exp(&buf) + self.emit(i, t);
            }
        }
        alpha
    }

    fn backward(&self) -> Vec<f64> {
        let (n, len) = (self.num_tags, self.len());
        let mut beta = vec![0.0; len * n];
        for s in 0..n {
            beta[(len - 1) * n + s] = self.trans(s, end_tag(n));
        }
        let mut buf = vec![0.0; n];
        for i in (0..len - 1).rev() {
            for s in 0..n {
                for t in 0..n {
                    buf[t] = self.trans(s, t) + self.emit(i + 1, t) + beta[(i + 1) * n + t];
                }
                beta[i * n + s] = log_sum_exp(&buf);
            }
        }
        beta
    }

    /// `log Σ_z exp(score(z))` by the forward recursion.
    pub fn log_partition(&self) -> f64 {
        let (n, len) = (self.num_tags, self.len());
        let alpha = self.forward();
        let last: Vec<f64> = (0..n)
            .map(|t| alpha[(len - 1) * n + t] + self.trans(t, end_tag(n)))
            .collect();
        log_sum_exp(&last)
    }

    pub fn marginals(&self) -> Marginals {
        let (n, len) = (self.num_tags, self.len());
        let width = n + 2;
        let alpha = self.forward();
        let beta = self.backward();
        let last: Vec<f64> = (0..n)
            .map(|t| alpha[(len - 1) * n + t] + self.trans(t, end_tag(n)))
            .collect();
        let log_z = log_sum_exp(&last);

        let node: Vec<f64> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut transition = vec![0.0; width * width];
        for t in 0..n {
            transition[begin_tag(n) * width + t] += node[t];
            transition[t * width + end_tag(n)] += node[(len - 1) * n + t];
        }
        for i in 1..len {
            for s in 0..n {
                for t in 0..n {
                    let lp = alpha[(i - 1) * n + s]
                        + self.trans(s, t)
                        + self.emit(i, t)
                        + beta[i * n + t]
                        - log_z;
                    transition[s * width + t] += lp.exp();
                }
            }
        }
        Marginals {
            log_partition: log_z,
            node,
            transition,
        }
    }

    /// `log Z − score(gold)`.
    pub fn nll(&self, gold: &[usize]) -> Result<f64> {
        let score = self.path_score(gold)?;
        Ok((self.log_partition() - score).max(0.0))
    }

    /// Negative log-likelihood with gradients w.r.t. emissions and transitions:
    /// expected counts minus gold counts.
    pub fn nll_with_grad(&self, gold: &[usize]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let score = self.path_score(gold)?;
        let (n, width) = (self.num_tags, self.num_tags + 2);
        let m = self.marginals();
        let mut d_emissions = m.node;
        let mut d_transitions = m.transition;
        for (i, &tag) in gold.iter().enumerate() {
            d_emissions[i * n + tag] -= 1.0;
            let from = if i == 0 { begin_tag(n) } else { gold[i - 1] };
            d_transitions[from * width + tag] -= 1.0;
        }
        d_transitions[gold[gold.len() - 1] * width + end_tag(n)] -= 1.0;
        Ok(((m.log_partition - score).max(0.0), d_emissions, d_transitions))
    }

    /// Highest-scoring path. Ties resolve to the lower tag index, both at each
    /// back-pointer and at the final position.
    pub fn viterbi(&self) -> Vec<usize> {
        let (n, len) = (self.num_tags, self.len());
        let mut delta: Vec<f64> = (0..n)
            .map(|t| self.trans(begin_tag(n), t) + self.emit(0, t))
            .collect();
        let mut back = vec![0usize; len * n];
        let mut next = vec![0.0; n];
        for i in 1..len {
            for t in 0..n {
                let mut best = 0;
                let mut best_score = delta[0] + self.trans(0, t);
                for s in 1..n {
                    let sc = delta[s] + self.trans(s, t);
                    if sc > best_score {
                        best = s;
                        best_score = sc;
                    }
                }
                back[i * n + t] = best;
                next[t] = best_score + self.emit(i, t);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = 0;
        let mut last_score = delta[0] + self.trans(0, end_tag(n));
        for t in 1..n {
            let sc = delta[t] + self.trans(t, end_tag(n));
            if sc > last_score {
                last = t;
                last_score = sc;
            }
        }
        let mut path = vec![0; len];
        path[len - 1] = last;
        for i in (1..len).rev() {
            path[i - 1] = back[i * n + path[i]];
        }
        path
    }
}
