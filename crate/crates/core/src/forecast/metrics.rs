//! Point-forecast error metrics.
//!
//! sMAPE is on the 0–200 scale and a point where both truth and prediction
//! are zero contributes 0. rRMSE is `RMSE / mean(y)` as a plain ratio.

use crate::{Error, Result};

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::InvalidInput(format!(
            "metric inputs must be non-empty and of equal length (got {} and {})",
            y.len(),
            yhat.len()
        )));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("metric inputs must be finite".into()));
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                200.0 * (a - b).abs() / denom
            }
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Errors when `mean(y) <= 0`.
pub fn rrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let r = rmse(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if mean <= 0.0 {
        return Err(Error::UndefinedMetric(format!("rRMSE needs mean(y) > 0, got {mean}")));
    }
    Ok(r / mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let (y, p) = ([1.0, 3.0], [2.0, 2.0]);
        assert_eq!(mae(&y, &p).unwrap(), 1.0);
        assert_eq!(rmse(&y, &p).unwrap(), 1.0);
        assert!((smape(&y, &p).unwrap() - (200.0 / 3.0 + 40.0) / 2.0).abs() < 1e-12);
        assert_eq!(rrmse(&y, &p).unwrap(), 0.5);
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let y = [0.1, 0.0, 0.3];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(smape(&y, &y).unwrap(), 0.0);
        assert_eq!(rrmse(&y, &y).unwrap(), 0.0);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(smape(&[f64::NAN], &[1.0]).is_err());
        assert!(matches!(rrmse(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::UndefinedMetric(_))));
        assert_eq!(smape(&[0.0], &[2.0]).unwrap(), 200.0);
    }
}
