use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{
    finite_difference_grad, max_relative_error, GradientVector, Layout, ParameterVector, SegmentId,
};
use crate::metrics::MatchCounts;

/// A vanilla extraction model: the policy that pseudo-labels unlabeled data.
///
/// Implementations are stateless with respect to parameters; every call takes
/// the [`ParameterVector`] explicitly so the same model can be probed at
/// perturbed points by the finite-difference oracle.
pub trait TaskModel {
    type Input: Clone + Debug;
    type Label: Clone + Debug + PartialEq;

    fn layout(&self) -> &Arc<Layout>;

    /// Segments belonging to the task head (everything except the encoder).
    fn head_segments(&self) -> Vec<SegmentId>;

    fn init_params(&self, seed: u64) -> ParameterVector;

    /// Deterministic prediction.
    fn predict(&self, params: &ParameterVector, input: &Self::Input) -> Result<Self::Label>;

    fn loss(&self, params: &ParameterVector, input: &Self::Input, label: &Self::Label)
        -> Result<f64>;

    /// Adds `weight · ∇loss` into `grad` and returns the unweighted loss.
    fn accumulate_gradient(
        &self,
        params: &ParameterVector,
        input: &Self::Input,
        label: &Self::Label,
        weight: f64,
        grad: &mut GradientVector,
    ) -> Result<f64>;

    /// Structure-level confidence in `[0, 1]` of `label` as a prediction for `input`.
    fn confidence(
        &self,
        params: &ParameterVector,
        input: &Self::Input,
        label: &Self::Label,
    ) -> Result<f64>;

    /// Exact-match counts of `pred` against `gold` under the task metric.
    fn match_counts(&self, pred: &Self::Label, gold: &Self::Label) -> MatchCounts;

    fn loss_and_grad(
        &self,
        params: &ParameterVector,
        input: &Self::Input,
        label: &Self::Label,
    ) -> Result<(f64, GradientVector)> {
        let mut grad = GradientVector::zeros(self.layout().clone());
        let loss = self.accumulate_gradient(params, input, label, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Supervised mini-batch objective. Defaults to the mean of per-example losses.
    fn batch_loss_and_grad(
        &self,
        params: &ParameterVector,
        batch: &[(Self::Input, Self::Label)],
    ) -> Result<(f64, GradientVector)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let w = 1.0 / batch.len() as f64;
        let mut grad = GradientVector::zeros(self.layout().clone());
        let mut total = 0.0;
        for (x, y) in batch {
            total += w * self.accumulate_gradient(params, x, y, w, &mut grad)?;
        }
        Ok((total, grad))
    }
}

/// Largest relative error between the analytic loss gradient and central
/// finite differences with step `eps`, over every coordinate.
pub fn gradient_check<M: TaskModel>(
    model: &M,
    params: &ParameterVector,
    input: &M::Input,
    label: &M::Label,
    eps: f64,
) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(params, input, label)?;
    let numeric = finite_difference_grad(params, eps, |p| {
        model.loss(p, input, label).unwrap_or(f64::NAN)
    })?;
    numeric.check_finite()?;
    max_relative_error(&analytic, &numeric)
}
