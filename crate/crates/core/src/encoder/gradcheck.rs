//! Central finite-difference check of [`batch_gradients`].

use serde::{Deserialize, Serialize};

use super::train::{batch_gradients, Model, SampledBatch};
use super::LossParams;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Parameters compared.
    pub checked: usize,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Compares the analytic gradient of every table row the batch touches and
/// of every attention entry with `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// `floor` bounds the denominator of the relative error so that entries
/// whose true gradient is zero are judged by absolute error.
pub fn gradient_check(
    model: &Model,
    sampled: &SampledBatch,
    loss: &LossParams,
    epsilon: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let analytic = batch_gradients(model, sampled, loss)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
    };
    let mut record = |a: f64, n: f64| {
        let abs = (a - n).abs();
        report.checked += 1;
        report.max_absolute_error = report.max_absolute_error.max(abs);
        report.max_relative_error = report.max_relative_error.max(abs / a.abs().max(n.abs()).max(floor));
    };

    for (i, &row) in analytic.table.rows.iter().enumerate() {
        for c in 0..analytic.table.values.ncols() {
            let numeric = central_difference(&mut probe, sampled, loss, epsilon, |m| {
                &mut m.params.table.matrix_mut()[[row, c]]
            })?;
            record(analytic.table.values[[i, c]], numeric);
        }
    }
    for (i, &row) in analytic.attention.rows.iter().enumerate() {
        for c in 0..analytic.attention.values.ncols() {
            let numeric = central_difference(&mut probe, sampled, loss, epsilon, |m| {
                &mut m.params.attention[[row, c]]
            })?;
            record(analytic.attention.values[[i, c]], numeric);
        }
    }
    Ok(report)
}

fn central_difference(
    model: &mut Model,
    sampled: &SampledBatch,
    loss: &LossParams,
    epsilon: f64,
    slot: impl Fn(&mut Model) -> &mut f64,
) -> Result<f64> {
    let original = *slot(model);
    *slot(model) = original + epsilon;
    let plus = batch_gradients(model, sampled, loss)?.loss;
    *slot(model) = original - epsilon;
    let minus = batch_gradients(model, sampled, loss)?.loss;
    *slot(model) = original;
    Ok((plus - minus) / (2.0 * epsilon))
}
