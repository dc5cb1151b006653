//! Micro-averaged precision, recall and F1 from match counts.

use std::collections::HashSet;
use std::hash::Hash;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchCounts {
    /// Exact-match counts between two sets of items (duplicates collapse).
    pub fn of_sets<T: Eq + Hash>(pred: impl IntoIterator<Item = T>, gold: impl IntoIterator<Item = T>) -> Self {
        let pred: HashSet<T> = pred.into_iter().collect();
        let gold: HashSet<T> = gold.into_iter().collect();
        MatchCounts {
            correct: pred.intersection(&gold).count(),
            predicted: pred.len(),
            gold: gold.len(),
        }
    }

    /// Empty denominators give 0, and F1 is 0 when P + R = 0.
    pub fn prf(&self) -> Prf {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(self.correct, self.predicted);
        let recall = ratio(self.correct, self.gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            correct: self.correct + o.correct,
            predicted: self.predicted + o.predicted,
            gold: self.gold + o.gold,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}
