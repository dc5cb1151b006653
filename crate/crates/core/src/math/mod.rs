//! Flat parameter storage and the vector geometry the reward is built on.
//!
//! Every model owns a [`Layout`]: an ordered list of named, shaped segments
//! laid end to end in one `Vec<f64>`. Parameters and gradients share the
//! layout, so gradients of different examples can be compared, averaged and
//! fed to the optimizer without any per-model bookkeeping.

mod gradcheck;
mod optim;
mod pca;

pub use gradcheck::{finite_difference_grad, max_relative_error, relative_error};
pub use optim::{AdamW, AdamWConfig};
pub use pca::{pca_project, write_trajectory_csv, Projection};

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named block of parameters, e.g. `encoder.embedding` with shape `[V, d]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index of a segment inside its [`Layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentId(usize);

/// Canonical ordering of parameter segments. Fixed at model construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    len: usize,
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    segments: Vec<Segment>,
}

impl LayoutBuilder {
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> SegmentId {
        let id = SegmentId(self.segments.len());
        self.segments.push(Segment {
            name: name.into(),
            shape: shape.to_vec(),
        });
        id
    }

    pub fn build(self) -> Arc<Layout> {
        Arc::new(Layout::from_segments(self.segments))
    }
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut len = 0;
        for s in &segments {
            offsets.push(len);
            len += s.len();
        }
        Layout {
            segments,
            offsets,
            len,
        }
    }

    /// Total number of scalars across all segments.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = SegmentId> {
        (0..self.segments.len()).map(SegmentId)
    }

    pub fn find(&self, name: &str) -> Option<SegmentId> {
        self.segments
            .iter()
            .position(|s| s.name == name)
            .map(SegmentId)
    }

    pub fn range(&self, id: SegmentId) -> Range<usize> {
        let start = self.offsets[id.0];
        start..start + self.segments[id.0].len()
    }

    /// Name of the segment containing flat coordinate `index`.
    pub fn segment_of(&self, index: usize) -> Option<&Segment> {
        if index >= self.len {
            return None;
        }
        // zero-length segments share their offset with the next segment,
        // so the last offset <= index always names a non-empty segment
        let pos = self.offsets.partition_point(|&o| o <= index) - 1;
        Some(&self.segments[pos])
    }
}

fn same_layout(a: &Arc<Layout>, b: &Arc<Layout>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn check_layouts(a: &Arc<Layout>, b: &Arc<Layout>) -> Result<()> {
    if same_layout(a, b) {
        Ok(())
    } else {
        Err(Error::LayoutMismatch(format!(
            "{} segments / {} values vs {} segments / {} values",
            a.segments.len(),
            a.len,
            b.segments.len(),
            b.len
        )))
    }
}

macro_rules! flat_vector {
    ($name:ident) => {
        impl $name {
            pub fn zeros(layout: Arc<Layout>) -> Self {
                let values = vec![0.0; layout.len()];
                $name { layout, values }
            }

            pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
                if values.len() != layout.len() {
                    return Err(Error::LayoutMismatch(format!(
                        "expected {} values, got {}",
                        layout.len(),
                        values.len()
                    )));
                }
                Ok($name { layout, values })
            }

            /// Rebuild from per-segment blocks, in layout order.
            pub fn from_segments(layout: Arc<Layout>, blocks: Vec<Vec<f64>>) -> Result<Self> {
                if blocks.len() != layout.segments().len() {
                    return Err(Error::LayoutMismatch(format!(
                        "expected {} segments, got {}",
                        layout.segments().len(),
                        blocks.len()
                    )));
                }
                let mut values = Vec::with_capacity(layout.len());
                for (seg, block) in layout.segments().iter().zip(blocks) {
                    if block.len() != seg.len() {
                        return Err(Error::LayoutMismatch(format!(
                            "segment `{}` expects {} values, got {}",
                            seg.name,
                            seg.len(),
                            block.len()
                        )));
                    }
                    values.extend(block);
                }
                Ok($name { layout, values })
            }

            /// Split back into per-segment blocks, in layout order.
            pub fn to_segments(&self) -> Vec<Vec<f64>> {
                self.layout
                    .ids()
                    .map(|id| self.segment(id).to_vec())
                    .collect()
            }

            pub fn layout(&self) -> &Arc<Layout> {
                &self.layout
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn segment(&self, id: SegmentId) -> &[f64] {
                &self.values[self.layout.range(id)]
            }

            pub fn segment_mut(&mut self, id: SegmentId) -> &mut [f64] {
                let r = self.layout.range(id);
                &mut self.values[r]
            }

            pub fn norm(&self) -> f64 {
                self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.values
            }

            /// Fails on the first NaN or infinity, naming its segment.
            pub fn check_finite(&self) -> Result<()> {
                match self.values.iter().position(|v| !v.is_finite()) {
                    None => Ok(()),
                    Some(i) => Err(Error::NonFiniteGradient {
                        segment: self
                            .layout
                            .segment_of(i)
                            .map(|s| s.name.clone())
                            .unwrap_or_default(),
                    }),
                }
            }
        }
    };
}

/// Flat view of every trainable parameter of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

/// Gradient with the same layout as the [`ParameterVector`] it was computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

flat_vector!(ParameterVector);
flat_vector!(GradientVector);

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl ParameterVector {
    /// Fill one segment with draws from `U[-scale, scale]`.
    pub fn fill_uniform<R: Rng>(&mut self, id: SegmentId, scale: f64, rng: &mut R) {
        if scale == 0.0 {
            self.segment_mut(id).fill(0.0);
            return;
        }
        for v in self.segment_mut(id) {
            *v = rng.gen_range(-scale..=scale);
        }
    }
}

impl GradientVector {
    pub fn dot(&self, other: &GradientVector) -> Result<f64> {
        check_layouts(&self.layout, &other.layout)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &GradientVector) -> Result<()> {
        check_layouts(&self.layout, &other.layout)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn fill_zero(&mut self) {
        self.values.fill(0.0);
    }

    pub fn same_layout(&self, params: &ParameterVector) -> bool {
        same_layout(&self.layout, &params.layout)
    }
}

/// `aᵀb / (‖a‖ ‖b‖)`, clamped to `[-1, 1]`.
///
/// A zero-norm input yields [`Error::DegenerateGradient`]; callers decide
/// what that means for them.
pub fn cosine_similarity(a: &GradientVector, b: &GradientVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Running mean after appending one more vector to a mean of `n` vectors:
/// `(n·g_l + g_p) / (n + 1)`.
pub fn running_mean_update(
    g_l: &GradientVector,
    g_p: &GradientVector,
    n: usize,
) -> Result<GradientVector> {
    check_layouts(&g_l.layout, &g_p.layout)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "running mean needs n >= 1".to_string(),
        ));
    }
    let nf = n as f64;
    let denom = nf + 1.0;
    let values = g_l
        .values
        .iter()
        .zip(&g_p.values)
        .map(|(l, p)| (nf * l + p) / denom)
        .collect();
    Ok(GradientVector {
        layout: g_l.layout.clone(),
        values,
    })
}
