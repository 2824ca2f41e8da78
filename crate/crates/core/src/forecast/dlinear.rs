use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_training_window, Forecaster, TrainConfig, TrainingSet, Window, WindowConfig};
use crate::{Error, Result};

/// Largest odd kernel not exceeding `min(kernel, seq_len)`.
pub fn effective_kernel(kernel: usize, seq_len: usize) -> usize {
    let m = kernel.min(seq_len).max(1);
    if m.is_multiple_of(2) {
        m - 1
    } else {
        m
    }
}

/// Centered moving average with the ends padded by repeating the first and
/// last values. `kernel` must be odd.
pub fn moving_average(x: &[f64], kernel: usize) -> Vec<f64> {
    debug_assert!(kernel % 2 == 1);
    let pad = (kernel - 1) / 2;
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    (0..n as isize)
        .map(|i| (i - pad as isize..=i + pad as isize).map(at).sum::<f64>() / kernel as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Params {
    /// Row-major `h × k` weights for the trend and residual parts.
    w_trend: Vec<f64>,
    b_trend: Vec<f64>,
    w_resid: Vec<f64>,
    b_resid: Vec<f64>,
}

impl Params {
    fn init(k: usize, h: usize) -> Self {
        let w = vec![1.0 / k as f64; h * k];
        Params {
            w_trend: w.clone(),
            b_trend: vec![0.0; h],
            w_resid: w,
            b_resid: vec![0.0; h],
        }
    }

    fn slices_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w_trend, &mut self.b_trend, &mut self.w_resid, &mut self.b_resid]
    }

    fn zeros_like(&self) -> Self {
        Params {
            w_trend: vec![0.0; self.w_trend.len()],
            b_trend: vec![0.0; self.b_trend.len()],
            w_resid: vec![0.0; self.w_resid.len()],
            b_resid: vec![0.0; self.b_resid.len()],
        }
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Params,
    v: Params,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, shape: &Params) -> Self {
        Adam {
            lr,
            t: 0,
            m: shape.zeros_like(),
            v: shape.zeros_like(),
        }
    }

    fn step(&mut self, params: &mut Params, grad: &mut Params) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices_mut())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Decomposition-linear forecaster: the context is split into a moving
/// average trend and a residual, each mapped to the horizon by its own
/// linear layer, and the two outputs are summed. Trained with Adam on MSE,
/// one pass per epoch over shuffled windows, keeping the parameters with
/// the best validation loss.
#[derive(Debug, Clone)]
pub struct DLinearLike {
    window: WindowConfig,
    kernel: usize,
    params: Option<Params>,
    epochs_run: usize,
}

impl DLinearLike {
    pub fn new(window: WindowConfig) -> Self {
        DLinearLike {
            window,
            kernel: effective_kernel(TrainConfig::default().moving_avg, window.seq_len),
            params: None,
            epochs_run: 0,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    /// Epochs completed by the last `fit`.
    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    fn decompose(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let trend = moving_average(x, self.kernel);
        let resid = x.iter().zip(&trend).map(|(a, b)| a - b).collect();
        (trend, resid)
    }

    fn forward(&self, p: &Params, trend: &[f64], resid: &[f64]) -> Vec<f64> {
        let k = self.window.seq_len;
        (0..self.window.pred_len)
            .map(|j| {
                let row = j * k..(j + 1) * k;
                let t: f64 = p.w_trend[row.clone()].iter().zip(trend).map(|(w, x)| w * x).sum();
                let s: f64 = p.w_resid[row].iter().zip(resid).map(|(w, x)| w * x).sum();
                t + p.b_trend[j] + s + p.b_resid[j]
            })
            .collect()
    }

    fn loss(&self, p: &Params, windows: &[Window]) -> f64 {
        let mut total = 0.0;
        for w in windows {
            let (trend, resid) = self.decompose(&w.context);
            let out = self.forward(p, &trend, &resid);
            total += out.iter().zip(&w.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                / out.len() as f64;
        }
        total / windows.len() as f64
    }

    /// Adds the batch-averaged MSE gradient of one window to `grad`.
    fn accumulate(&self, p: &Params, w: &Window, scale: f64, grad: &mut Params) {
        let (k, h) = (self.window.seq_len, self.window.pred_len);
        let (trend, resid) = self.decompose(&w.context);
        let out = self.forward(p, &trend, &resid);
        for (j, (o, y)) in out.iter().zip(&w.target).enumerate() {
            let g = scale * 2.0 * (o - y) / h as f64;
            grad.b_trend[j] += g;
            grad.b_resid[j] += g;
            for i in 0..k {
                grad.w_trend[j * k + i] += g * trend[i];
                grad.w_resid[j * k + i] += g * resid[i];
            }
        }
    }
}

impl Forecaster for DLinearLike {
    fn name(&self) -> String {
        "dlinear_like".into()
    }
    fn family(&self) -> &'static str {
        "linear"
    }
    fn window(&self) -> WindowConfig {
        self.window
    }

    fn fit(&mut self, data: &TrainingSet, cfg: &TrainConfig) -> Result<()> {
        check_training_window(self.window, data)?;
        cfg.validate()?;
        if data.train.is_empty() {
            return Err(Error::InvalidInput("dlinear_like needs at least one training window".into()));
        }
        self.kernel = effective_kernel(cfg.moving_avg, self.window.seq_len);
        let mut params = Params::init(self.window.seq_len, self.window.pred_len);
        let mut adam = Adam::new(cfg.learning_rate, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        let mut best: Option<(f64, Params)> = None;
        let mut stale = 0;
        self.epochs_run = 0;

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut grad = params.zeros_like();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    self.accumulate(&params, &data.train[i], scale, &mut grad);
                }
                adam.step(&mut params, &mut grad);
            }
            self.epochs_run = epoch + 1;
            if data.validation.is_empty() {
                continue;
            }
            let val = self.loss(&params, &data.validation);
            log::debug!("dlinear_like epoch {} validation loss {val:e}", epoch + 1);
            match &best {
                Some((b, _)) if val >= *b => {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((val, params.clone()));
                    stale = 0;
                }
            }
        }
        let params = best.map_or(params, |(_, p)| p);
        if params.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dlinear_like training diverged".into()));
        }
        self.params = Some(params);
        Ok(())
    }

    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.window.check_context(context)?;
        let p = self
            .params
            .as_ref()
            .ok_or_else(|| Error::Config("dlinear_like used before fit".into()))?;
        let (trend, resid) = self.decompose(context);
        Ok(self.forward(p, &trend, &resid))
    }
}

impl Params {
    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w_trend
            .iter()
            .chain(&self.b_trend)
            .chain(&self.w_resid)
            .chain(&self.b_resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trend_series(n: usize, offset: f64, slope: f64) -> Vec<f64> {
        (0..n).map(|i| offset + slope * i as f64).collect()
    }

    #[test]
    fn kernel_clamping() {
        assert_eq!(effective_kernel(25, 4), 3);
        assert_eq!(effective_kernel(25, 6), 5);
        assert_eq!(effective_kernel(25, 30), 25);
        assert_eq!(effective_kernel(4, 10), 3);
        assert_eq!(effective_kernel(25, 1), 1);
        assert_eq!(effective_kernel(25, 2), 1);
    }

    #[test]
    fn replicate_padded_average() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 3), vec![4.0 / 3.0, 2.0, 3.0, 11.0 / 3.0]);
        assert_eq!(moving_average(&[1.0, 5.0], 1), vec![1.0, 5.0]);
        let x = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        let ma = moving_average(&x, 5);
        assert!((ma[0] - (2.0 * 3.0 + 4.0 + 6.0) / 5.0).abs() < 1e-12);
        assert!((ma[2] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_predict_errors() {
        let m = DLinearLike::new(WindowConfig::new(4, 3).unwrap());
        assert!(m.predict(&[1.0; 4]).is_err());
    }

    #[test]
    fn learns_linear_trends() {
        let w = WindowConfig::new(4, 3).unwrap();
        let series: Vec<Vec<f64>> = (0..60)
            .map(|i| trend_series(24, 0.2 + 0.03 * (i % 7) as f64, 0.05 + 0.01 * (i % 11) as f64))
            .collect();
        let set = TrainingSet::from_series(series.iter().map(Vec::as_slice), w);
        let mut m = DLinearLike::new(w);
        m.fit(&set, &TrainConfig::default()).unwrap();
        let s = trend_series(7, 0.3, 0.08);
        let p = m.predict(&s[..4]).unwrap();
        for (a, b) in p.iter().zip(&s[4..]) {
            assert!(((a - b) / b).abs() < 0.05, "{p:?} vs {:?}", &s[4..]);
        }
    }

    #[test]
    fn fit_is_deterministic_for_a_seed() {
        let w = WindowConfig::new(4, 2).unwrap();
        let s: Vec<f64> = (0..30).map(|i| ((i * 13 % 7) as f64) * 0.1 + 0.5).collect();
        let set = TrainingSet::from_series([s.as_slice()], w);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let mut a = DLinearLike::new(w);
        let mut b = DLinearLike::new(w);
        a.fit(&set, &cfg).unwrap();
        b.fit(&set, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        let mut c = DLinearLike::new(w);
        c.fit(&set, &TrainConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn early_stopping_bounds_epochs() {
        let w = WindowConfig::new(2, 1).unwrap();
        let s = [1.0, 1.0, 1.0, 1.0, 1.0];
        let set = TrainingSet::from_series([&s[..]], w);
        let mut m = DLinearLike::new(w);
        m.fit(&set, &TrainConfig::default()).unwrap();
        assert!(m.epochs_run() <= 20);
        assert_eq!(m.kernel(), 1);
    }
}
