//! Low-resource splits and unlabeled segmentation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class key of examples without any annotated class.
pub const NO_CLASS: &str = "<none>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Exactly `k` labeled examples per class.
    KShot(usize),
    /// A fraction of every class, rounded by largest remainder.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Share of the whole corpus that becomes unlabeled data.
    pub unlabeled_fraction: f64,
    pub segments: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::Fraction(0.05),
            unlabeled_fraction: 0.5,
            segments: 10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SplitMode::KShot(0) => return Err(Error::InvalidArgument("k must be at least 1".into())),
            SplitMode::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::InvalidArgument(format!("labeled fraction {f} outside (0, 1]")))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::InvalidArgument(format!(
                "unlabeled fraction {} outside [0, 1]",
                self.unlabeled_fraction
            )));
        }
        if self.segments == 0 {
            return Err(Error::InvalidArgument("segments must be at least 1".into()));
        }
        Ok(())
    }
}

/// Example indices of each subset plus the unlabeled segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
    pub seed: u64,
    #[serde(skip)]
    pub held_back: Vec<usize>,
}

impl Split {
    /// Manifest JSON with the labeled, unlabeled, segment and seed fields.
    pub fn manifest_json(&self) -> String {
        serde_json::to_string(self).expect("split manifests serialize")
    }

    /// Restores a split from its manifest; `total` is the corpus size.
    pub fn from_manifest(json: &str, total: usize) -> Result<Split> {
        let mut split: Split = serde_json::from_str(json)?;
        let mut used = vec![false; total];
        for &i in split.labeled.iter().chain(&split.unlabeled) {
            if i >= total || std::mem::replace(&mut used[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "manifest index {i} is out of range or repeated"
                )));
            }
        }
        split.held_back = (0..total).filter(|&i| !used[i]).collect();
        Ok(split)
    }
}

/// Per-class labeled counts under largest-remainder rounding of
/// `fraction · count`, summing to `round(fraction · total)`.
pub fn largest_remainder(counts: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let target = ((fraction * total as f64).round() as usize).min(total);
    let quotas: Vec<f64> = counts.iter().map(|&c| fraction * c as f64).collect();
    let mut out: Vec<usize> = quotas.iter().zip(counts).map(|(q, &c)| (q.floor() as usize).min(c)).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = out.iter().sum();
    for &c in order.iter().cycle().take(counts.len() * 2) {
        if assigned >= target {
            break;
        }
        if out[c] < counts[c] {
            out[c] += 1;
            assigned += 1;
        }
    }
    out
}

/// Samples a labeled subset stratified by `key`, then an unlabeled subset
/// from the rest; whatever remains is held back. Examples without a class
/// (`key` returns `None`) are never drawn in k-shot mode.
pub fn stratified_split<T, F>(items: &[T], key: F, spec: &SplitSpec) -> Result<Split>
where
    F: Fn(&T) -> Option<String>,
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut classes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let k = key(item).unwrap_or_else(|| NO_CLASS.to_string());
        classes.entry(k).or_default().push(i);
    }
    let mut labeled = Vec::new();
    match spec.mode {
        SplitMode::KShot(k) => {
            for (class, members) in classes.iter_mut() {
                if class == NO_CLASS {
                    continue;
                }
                if members.len() < k {
                    return Err(Error::InsufficientClass {
                        class: class.clone(),
                        available: members.len(),
                        required: k,
                    });
                }
                members.shuffle(&mut rng);
                labeled.extend_from_slice(&members[..k]);
            }
        }
        SplitMode::Fraction(f) => {
            let counts: Vec<usize> = classes.values().map(Vec::len).collect();
            let take = largest_remainder(&counts, f);
            for (members, n) in classes.values_mut().zip(take) {
                members.shuffle(&mut rng);
                labeled.extend_from_slice(&members[..n]);
            }
        }
    }
    labeled.sort_unstable();
    let mut is_labeled = vec![false; items.len()];
    labeled.iter().for_each(|&i| is_labeled[i] = true);
    let mut rest: Vec<usize> = (0..items.len()).filter(|&i| !is_labeled[i]).collect();
    rest.shuffle(&mut rng);
    let n_unlabeled = ((spec.unlabeled_fraction * items.len() as f64).round() as usize).min(rest.len());
    let mut unlabeled = rest[..n_unlabeled].to_vec();
    let mut held_back = rest[n_unlabeled..].to_vec();
    unlabeled.sort_unstable();
    held_back.sort_unstable();
    let segments = segment_unlabeled(&unlabeled, spec.segments, spec.seed)?;
    Ok(Split {
        labeled,
        unlabeled,
        segments,
        seed: spec.seed,
        held_back,
    })
}

/// Shuffles, then cuts into `segments` contiguous parts whose sizes differ by
/// at most one (larger parts first).
pub fn segment_unlabeled<T: Clone>(items: &[T], segments: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if segments == 0 {
        return Err(Error::InvalidArgument("segments must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut order: Vec<T> = items.to_vec();
    order.shuffle(&mut rng);
    let base = order.len() / segments;
    let extra = order.len() % segments;
    let mut out = Vec::with_capacity(segments);
    let mut rest = order.as_slice();
    for s in 0..segments {
        let size = base + usize::from(s < extra);
        let (head, tail) = rest.split_at(size);
        out.push(head.to_vec());
        rest = tail;
    }
    Ok(out)
}
