use nalgebra::DMatrix;

use super::{check_training_window, Forecaster, TrainConfig, TrainingSet, Window, WindowConfig};
use crate::{Error, Result};

/// Repeats the last observation.
#[derive(Debug, Clone)]
pub struct Naive {
    window: WindowConfig,
}

impl Naive {
    pub fn new(window: WindowConfig) -> Self {
        Naive { window }
    }
}

impl Forecaster for Naive {
    fn name(&self) -> String {
        "naive".into()
    }
    fn family(&self) -> &'static str {
        "baseline"
    }
    fn window(&self) -> WindowConfig {
        self.window
    }
    fn fit(&mut self, _: &TrainingSet, _: &TrainConfig) -> Result<()> {
        Ok(())
    }
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window.check_context(context)?;
        Ok(vec![context[context.len() - 1]; self.window.pred_len])
    }
}

/// Last value plus the mean first difference of the context per step.
#[derive(Debug, Clone)]
pub struct Drift {
    window: WindowConfig,
}

impl Drift {
    pub fn new(window: WindowConfig) -> Self {
        Drift { window }
    }
}

impl Forecaster for Drift {
    fn name(&self) -> String {
        "drift".into()
    }
    fn family(&self) -> &'static str {
        "baseline"
    }
    fn window(&self) -> WindowConfig {
        self.window
    }
    fn fit(&mut self, _: &TrainingSet, _: &TrainConfig) -> Result<()> {
        Ok(())
    }
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window.check_context(context)?;
        let k = context.len();
        let last = context[k - 1];
        let slope = if k > 1 { (last - context[0]) / (k - 1) as f64 } else { 0.0 };
        Ok((1..=self.window.pred_len).map(|s| last + slope * s as f64).collect())
    }
}

/// 0.05, 0.10, …, 0.95.
pub const SES_ALPHA_GRID: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80,
    0.85, 0.90, 0.95,
];

/// Level-only exponential smoothing with α chosen per context from
/// [`SES_ALPHA_GRID`] by one-step squared error; ties go to the smaller α.
#[derive(Debug, Clone)]
pub struct Ses {
    window: WindowConfig,
}

impl Ses {
    pub fn new(window: WindowConfig) -> Self {
        Ses { window }
    }

    /// Final level and in-window one-step MSE for a given α.
    pub fn smooth(context: &[f64], alpha: f64) -> (f64, f64) {
        let mut level = context[0];
        let mut sse = 0.0;
        for &y in &context[1..] {
            sse += (y - level) * (y - level);
            level = alpha * y + (1.0 - alpha) * level;
        }
        let n = (context.len() - 1).max(1) as f64;
        (level, sse / n)
    }

    pub fn best_alpha(context: &[f64]) -> f64 {
        let mut best = (SES_ALPHA_GRID[0], f64::INFINITY);
        for &a in &SES_ALPHA_GRID {
            let (_, mse) = Ses::smooth(context, a);
            if mse < best.1 {
                best = (a, mse);
            }
        }
        best.0
    }
}

impl Forecaster for Ses {
    fn name(&self) -> String {
        "ses".into()
    }
    fn family(&self) -> &'static str {
        "baseline"
    }
    fn window(&self) -> WindowConfig {
        self.window
    }
    fn fit(&mut self, _: &TrainingSet, _: &TrainConfig) -> Result<()> {
        Ok(())
    }
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window.check_context(context)?;
        let (level, _) = Ses::smooth(context, Ses::best_alpha(context));
        Ok(vec![level; self.window.pred_len])
    }
}

/// Linear map from `k` lags to `h` outputs without intercept, solved from
/// the ridge normal equations. A singular system (λ = 0 on collinear lags)
/// gets the minimum-norm solution via SVD.
#[derive(Debug, Clone)]
pub struct RidgeAr {
    window: WindowConfig,
    lambda: f64,
    /// `k × h`.
    coef: Option<DMatrix<f64>>,
}

impl RidgeAr {
    pub fn new(window: WindowConfig, lambda: f64) -> Self {
        RidgeAr {
            window,
            lambda,
            coef: None,
        }
    }

    pub fn coefficients(&self) -> Option<&DMatrix<f64>> {
        self.coef.as_ref()
    }
}

impl Forecaster for RidgeAr {
    fn name(&self) -> String {
        if self.lambda == 0.0 {
            "ridge_ar".into()
        } else {
            format!("ridge_ar:{}", self.lambda)
        }
    }
    fn family(&self) -> &'static str {
        "linear"
    }
    fn window(&self) -> WindowConfig {
        self.window
    }

    fn fit(&mut self, data: &TrainingSet, _: &TrainConfig) -> Result<()> {
        check_training_window(self.window, data)?;
        let windows: Vec<&Window> = data.train.iter().chain(&data.validation).collect();
        if windows.is_empty() {
            return Err(Error::InvalidInput("ridge_ar needs at least one training window".into()));
        }
        let (k, h) = (self.window.seq_len, self.window.pred_len);
        let x = DMatrix::from_fn(windows.len(), k, |r, c| windows[r].context[c]);
        let y = DMatrix::from_fn(windows.len(), h, |r, c| windows[r].target[c]);
        let xt = x.transpose();
        let a = &xt * &x + DMatrix::identity(k, k) * self.lambda;
        let b = &xt * &y;
        let svd = a.svd(true, true);
        let max_sv = svd.singular_values.max();
        let coef = if max_sv == 0.0 {
            DMatrix::zeros(k, h)
        } else {
            svd.solve(&b, max_sv * 1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?
        };
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("ridge_ar solution is not finite".into()));
        }
        self.coef = Some(coef);
        Ok(())
    }

    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window.check_context(context)?;
        let coef = self
            .coef
            .as_ref()
            .ok_or_else(|| Error::Config("ridge_ar used before fit".into()))?;
        Ok((0..self.window.pred_len)
            .map(|j| (0..self.window.seq_len).map(|i| context[i] * coef[(i, j)]).sum())
            .collect())
    }
}

/// Z-scores every window by its own context mean and standard deviation
/// before handing it to the inner model.
pub struct Standardized<F> {
    inner: F,
}

impl<F: Forecaster> Standardized<F> {
    pub fn new(inner: F) -> Self {
        Standardized { inner }
    }

    fn stats(context: &[f64]) -> (f64, f64) {
        let n = context.len() as f64;
        let mean = context.iter().sum::<f64>() / n;
        let var = context.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        (mean, if sd > 0.0 { sd } else { 1.0 })
    }

    fn scale(w: &Window) -> Window {
        let (mean, sd) = Self::stats(&w.context);
        Window {
            context: w.context.iter().map(|v| (v - mean) / sd).collect(),
            target: w.target.iter().map(|v| (v - mean) / sd).collect(),
        }
    }
}

impl<F: Forecaster> Forecaster for Standardized<F> {
    fn name(&self) -> String {
        format!("{}+zscore", self.inner.name())
    }
    fn family(&self) -> &'static str {
        self.inner.family()
    }
    fn window(&self) -> WindowConfig {
        self.inner.window()
    }
    fn fit(&mut self, data: &TrainingSet, cfg: &TrainConfig) -> Result<()> {
        let scaled = TrainingSet {
            window: data.window,
            train: data.train.iter().map(Self::scale).collect(),
            validation: data.validation.iter().map(Self::scale).collect(),
        };
        self.inner.fit(&scaled, cfg)
    }
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window().check_context(context)?;
        let (mean, sd) = Self::stats(context);
        let z: Vec<f64> = context.iter().map(|v| (v - mean) / sd).collect();
        Ok(self.inner.predict(&z)?.into_iter().map(|v| v * sd + mean).collect())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn w(k: usize, h: usize) -> WindowConfig {
        WindowConfig::new(k, h).unwrap()
    }

    fn ar1(start: f64, phi: f64, len: usize) -> Vec<f64> {
        std::iter::successors(Some(start), |v| Some(v * phi)).take(len).collect()
    }

    #[test]
    fn naive_and_drift_closed_forms() {
        let ctx = [0.001, 0.002, 0.0035, 0.004];
        assert_eq!(Naive::new(w(4, 3)).predict(&ctx).unwrap(), vec![0.004; 3]);
        let d = Drift::new(w(4, 3)).predict(&ctx).unwrap();
        let slope = (0.004 - 0.001) / 3.0;
        assert_eq!(d, vec![0.004 + slope, 0.004 + 2.0 * slope, 0.004 + 3.0 * slope]);
        assert_eq!(Drift::new(w(1, 2)).predict(&[5.0]).unwrap(), vec![5.0, 5.0]);
    }

    #[test]
    fn wrong_context_length_errors() {
        assert!(Naive::new(w(4, 3)).predict(&[1.0; 3]).is_err());
        assert!(Drift::new(w(4, 3)).predict(&[1.0; 5]).is_err());
        assert!(Ses::new(w(4, 3)).predict(&[1.0, 2.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn ses_picks_alpha_by_one_step_error() {
        assert_eq!(Ses::best_alpha(&[1.0, 2.0, 3.0, 4.0]), 0.95);
        assert_eq!(Ses::new(w(4, 2)).predict(&[2.0; 4]).unwrap(), vec![2.0, 2.0]);
        let (level, mse) = Ses::smooth(&[1.0, 3.0], 0.5);
        assert_eq!((level, mse), (2.0, 4.0));
        let ctx = [1.0, 5.0, 1.0, 5.0];
        let chosen = Ses::smooth(&ctx, Ses::best_alpha(&ctx)).1;
        assert!(SES_ALPHA_GRID.iter().all(|a| Ses::smooth(&ctx, *a).1 >= chosen));
    }

    #[test]
    fn ridge_lambda_zero_recovers_ar1() {
        let phi = 0.9;
        let series: Vec<Vec<f64>> = [1.0, 0.5, 2.0].iter().map(|s| ar1(*s, phi, 12)).collect();
        let set = TrainingSet::from_series(series.iter().map(Vec::as_slice), w(4, 1));
        let mut m = RidgeAr::new(w(4, 1), 0.0);
        m.fit(&set, &TrainConfig::default()).unwrap();
        let ctx = ar1(3.0, phi, 4);
        let p = m.predict(&ctx).unwrap();
        assert!((p[0] - ctx[3] * phi).abs() < 1e-6);
    }

    #[test]
    fn ridge_huge_lambda_shrinks_to_zero() {
        let s: Vec<f64> = (1..20).map(f64::from).collect();
        let set = TrainingSet::from_series([s.as_slice()], w(3, 2));
        let mut m = RidgeAr::new(w(3, 2), 1e15);
        m.fit(&set, &TrainConfig::default()).unwrap();
        assert!(m.predict(&[17.0, 18.0, 19.0]).unwrap().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn ridge_requires_fit_and_data() {
        let m = RidgeAr::new(w(2, 1), 0.0);
        assert!(m.predict(&[1.0, 2.0]).is_err());
        let mut m = RidgeAr::new(w(2, 1), 0.0);
        assert!(m.fit(&TrainingSet::empty(w(2, 1)), &TrainConfig::default()).is_err());
        assert!(m.fit(&TrainingSet::empty(w(3, 1)), &TrainConfig::default()).is_err());
    }

    #[test]
    fn standardized_naive_is_naive() {
        let m = Standardized::new(Naive::new(w(3, 2)));
        let p = m.predict(&[0.1, 0.4, 0.2]).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
        assert_eq!(m.name(), "naive+zscore");
        assert_eq!(m.predict(&[3.0; 3]).unwrap(), vec![3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn scale_equivariance(
            ctx in prop::collection::vec(0.0f64..1.0, 4),
            c in 0.001f64..1000.0,
        ) {
            let scaled: Vec<f64> = ctx.iter().map(|v| v * c).collect();
            let series: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64 + 1.0) * 0.1).collect();
            let set = TrainingSet::from_series([series.as_slice()], w(4, 3));
            let mut ridge = RidgeAr::new(w(4, 3), 0.0);
            ridge.fit(&set, &TrainConfig::default()).unwrap();
            let models: [Box<dyn Forecaster>; 3] =
                [Box::new(Naive::new(w(4, 3))), Box::new(Drift::new(w(4, 3))), Box::new(ridge)];
            for m in &models {
                let a = m.predict(&ctx).unwrap();
                let b = m.predict(&scaled).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()), "{}: {} vs {}", m.name(), x * c, y);
                }
            }
        }
    }
}
