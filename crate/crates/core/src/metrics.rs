//! RMSE and MAE over held-out observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::SparseTensor;
use crate::twd::{Contraction, TwdFactors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

impl EvalReport {
    /// Summarizes residuals `y - y_hat`, accumulated in slice order.
    pub fn from_residuals(residuals: &[f64]) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Parameter("cannot evaluate an empty set".into()));
        }
        let n = residuals.len() as f64;
        let (sq, abs) = residuals
            .iter()
            .fold((0.0, 0.0), |(sq, abs), r| (sq + r * r, abs + r.abs()));
        Ok(EvalReport {
            rmse: (sq / n).sqrt(),
            mae: abs / n,
            count: residuals.len(),
        })
    }
}

/// Residuals of `f` against every observation, in entry order.
pub fn residuals(f: &TwdFactors, obs: &SparseTensor) -> Result<Vec<f64>> {
    let mut ws = Contraction::new(f.ranks());
    obs.entries()
        .iter()
        .map(|e| {
            f.check_index(e.i, e.j, e.k)?;
            Ok(e.value - ws.value(f, e.i, e.j, e.k))
        })
        .collect()
}

/// RMSE and MAE in the domain the observations are stored in.
pub fn evaluate(f: &TwdFactors, test_set: &SparseTensor) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::Parameter("test set is empty".into()));
    }
    EvalReport::from_residuals(&residuals(f, test_set)?)
}

/// Like [`evaluate`], but maps both observations and predictions back
/// through `exp(v) - 1` first. The test set must be normalized.
pub fn evaluate_raw(f: &TwdFactors, test_set: &SparseTensor) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::Parameter("test set is empty".into()));
    }
    if !test_set.is_normalized() {
        return Err(Error::State("raw-domain metrics need a normalized test set".into()));
    }
    let mut ws = Contraction::new(f.ranks());
    let res: Vec<f64> = test_set
        .entries()
        .iter()
        .map(|e| {
            f.check_index(e.i, e.j, e.k)?;
            let pred = ws.value(f, e.i, e.j, e.k);
            Ok(e.value.exp_m1() - pred.exp_m1())
        })
        .collect::<Result<_>>()?;
    EvalReport::from_residuals(&res)
}
