//! Seasonal ARIMA estimated by conditional sum of squares.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::bfgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub seasonal: Option<SeasonalOrder>,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ar: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
    /// Mean of the differenced series; only estimated without differencing.
    pub mean: f64,
    /// Conditional sum of squares divided by the number of residuals.
    pub sigma2: f64,
    /// True when estimates were pulled back into the stationary/invertible region.
    pub projected: bool,
}

/// Largest modulus among the roots of `z^k - c1 z^(k-1) - ... - ck`.
fn max_root_modulus(c: &[f64]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let k = c.len();
    let m = DMatrix::from_fn(k, k, |i, j| {
        if i == 0 {
            c[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rescales coefficients so every root lies strictly inside the unit circle.
/// `sign` is +1 for AR polynomials (1 - Σ c B^i) and -1 for MA (1 + Σ c B^i).
fn project(c: &mut [f64], sign: f64) -> bool {
    let signed: Vec<f64> = c.iter().map(|v| sign * v).collect();
    let r = max_root_modulus(&signed);
    if r < 1.0 {
        return false;
    }
    let s = 0.99 / r;
    let mut f = 1.0;
    for v in c.iter_mut() {
        f *= s;
        *v *= f;
    }
    true
}

/// Coefficients `a_k` of `(1 + sign Σ u_i B^i)(1 + sign Σ v_j B^{jm})` as
/// `1 + sign Σ a_k B^k`.
fn expand(nonseasonal: &[f64], seasonal: &[f64], m: usize, sign: f64) -> Vec<f64> {
    let len = nonseasonal.len() + seasonal.len() * m;
    let mut poly = vec![0.0; len + 1];
    poly[0] = 1.0;
    for (i, u) in nonseasonal.iter().enumerate() {
        poly[i + 1] += sign * u;
    }
    let base = poly.clone();
    for (j, v) in seasonal.iter().enumerate() {
        let shift = (j + 1) * m;
        for (k, b) in base.iter().enumerate() {
            if k + shift <= len {
                poly[k + shift] += sign * v * b;
            }
        }
    }
    poly[1..].iter().map(|a| sign * a).collect()
}

struct Layout {
    p: usize,
    q: usize,
    sp: usize,
    sq: usize,
    m: usize,
}

impl Layout {
    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (ar, rest) = x.split_at(self.p);
        let (ma, rest) = rest.split_at(self.q);
        let (sar, sma) = rest.split_at(self.sp);
        (ar, ma, sar, &sma[..self.sq])
    }

    fn full(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ar, ma, sar, sma) = self.split(x);
        (expand(ar, sar, self.m, -1.0), expand(ma, sma, self.m, 1.0))
    }
}

/// Residuals `e_t = x_t - Σ a_k x_{t-k} - Σ c_k e_{t-k}` from `start` on,
/// with earlier residuals taken as zero.
fn residuals(x: &[f64], a: &[f64], c: &[f64]) -> (Vec<f64>, usize) {
    let start = a.len();
    let mut e = vec![0.0; x.len()];
    for t in start..x.len() {
        let mut v = x[t];
        for (k, ak) in a.iter().enumerate() {
            v -= ak * x[t - k - 1];
        }
        for (k, ck) in c.iter().enumerate() {
            if t > k {
                v -= ck * e[t - k - 1];
            }
        }
        e[t] = v;
    }
    (e, start)
}

fn css(x: &[f64], a: &[f64], c: &[f64]) -> f64 {
    let (e, start) = residuals(x, a, c);
    let n = x.len() - start;
    let s: f64 = e[start..].iter().map(|v| v * v).sum::<f64>() / n as f64;
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Differencing levels: `levels[0] = y`, then `d` lag-1 differences, then `D`
/// seasonal differences. Returns the levels and the lag used at each step.
fn difference(y: &[f64], order: &ArimaOrder, seasonal: Option<&SeasonalOrder>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut levels = vec![y.to_vec()];
    let mut lags = Vec::new();
    let steps = std::iter::repeat_n(1, order.d).chain(std::iter::repeat_n(
        seasonal.map_or(1, |s| s.period),
        seasonal.map_or(0, |s| s.d),
    ));
    for lag in steps {
        let prev = levels.last().expect("nonempty");
        let next: Vec<f64> = (lag..prev.len()).map(|i| prev[i] - prev[i - lag]).collect();
        levels.push(next);
        lags.push(lag);
    }
    (levels, lags)
}

fn validate(order: &ArimaOrder, seasonal: Option<&SeasonalOrder>) -> Result<()> {
    if order.p > 5 || order.q > 5 || order.d > 2 {
        return Err(Error::Domain(format!("unsupported ARIMA order {order:?}")));
    }
    if let Some(s) = seasonal {
        if s.p > 5 || s.q > 5 || s.d > 2 || s.period < 2 {
            return Err(Error::Domain(format!("unsupported seasonal order {s:?}")));
        }
    }
    Ok(())
}

/// Estimates the model by conditional sum of squares with BFGS from zero coefficients.
pub fn arima_fit(y: &[f64], order: ArimaOrder, seasonal: Option<SeasonalOrder>) -> Result<ArimaFit> {
    validate(&order, seasonal.as_ref())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite observation".into()));
    }
    let (levels, _) = difference(y, &order, seasonal.as_ref());
    let w = levels.last().expect("nonempty");
    let layout = Layout {
        p: order.p,
        q: order.q,
        sp: seasonal.map_or(0, |s| s.p),
        sq: seasonal.map_or(0, |s| s.q),
        m: seasonal.map_or(1, |s| s.period),
    };
    let max_lag = layout.p + layout.sp * layout.m;
    if w.len() < 20 || w.len() <= max_lag + 1 {
        return Err(Error::InsufficientData(format!(
            "ARIMA needs 20 observations after differencing, got {}",
            w.len()
        )));
    }
    let with_mean = order.d == 0 && seasonal.is_none_or(|s| s.d == 0);
    let mean = if with_mean { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
    let x: Vec<f64> = w.iter().map(|v| v - mean).collect();

    let n_par = layout.p + layout.q + layout.sp + layout.sq;
    let mut objective = |v: &[f64]| {
        let (a, c) = layout.full(v);
        css(&x, &a, &c)
    };
    let (est, _) = bfgs(&mut objective, &vec![0.0; n_par], 200, 1e-9);
    let (ar, ma, sar, sma) = layout.split(&est);
    let (mut ar, mut ma, mut sar, mut sma) = (ar.to_vec(), ma.to_vec(), sar.to_vec(), sma.to_vec());
    let projected = project(&mut ar, 1.0) | project(&mut ma, -1.0) | project(&mut sar, 1.0) | project(&mut sma, -1.0);
    if projected {
        log::warn!("ARIMA estimates projected into the stationary and invertible region");
    }
    let params: Vec<f64> = ar.iter().chain(&ma).chain(&sar).chain(&sma).copied().collect();
    let sigma2 = objective(&params);
    if !sigma2.is_finite() {
        return Err(Error::Fit("non-finite conditional sum of squares".into()));
    }
    Ok(ArimaFit {
        order,
        seasonal,
        ar,
        ma,
        seasonal_ar: sar,
        seasonal_ma: sma,
        mean,
        sigma2,
        projected,
    })
}

impl ArimaFit {
    /// Forecasts `horizon` steps after the end of `y` with the fitted coefficients.
    pub fn forecast(&self, y: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let (mut levels, lags) = difference(y, &self.order, self.seasonal.as_ref());
        let m = self.seasonal.map_or(1, |s| s.period);
        let a = expand(&self.ar, &self.seasonal_ar, m, -1.0);
        let c = expand(&self.ma, &self.seasonal_ma, m, 1.0);
        let w = levels.last().expect("nonempty");
        if w.len() <= a.len() {
            return Err(Error::InsufficientData("history too short for the AR order".into()));
        }
        let mut x: Vec<f64> = w.iter().map(|v| v - self.mean).collect();
        let (mut e, _) = residuals(&x, &a, &c);
        for _ in 0..horizon {
            let t = x.len();
            let mut v = 0.0;
            for (k, ak) in a.iter().enumerate() {
                v += ak * x[t - k - 1];
            }
            for (k, ck) in c.iter().enumerate() {
                if t > k {
                    v += ck * e[t - k - 1];
                }
            }
            x.push(v);
            e.push(0.0);
        }
        let top = levels.len() - 1;
        let base = levels[top].len();
        levels[top].extend(x[base..].iter().map(|v| v + self.mean));
        // integrate back down to the original scale
        for lvl in (0..top).rev() {
            let lag = lags[lvl];
            for _ in 0..horizon {
                // levels[lvl + 1][i - lag] = levels[lvl][i] - levels[lvl][i - lag]
                let idx = levels[lvl].len();
                let v = levels[lvl + 1][idx - lag] + levels[lvl][idx - lag];
                levels[lvl].push(v);
            }
        }
        Ok(levels[0][y.len()..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = phi * y[t - 1] + noise.sample(&mut rng);
        }
        y
    }

    #[test]
    fn random_walk_is_naive() {
        let y = ar1(1.0, 200, 1);
        let fit = arima_fit(&y, ArimaOrder { p: 0, d: 1, q: 0 }, None).unwrap();
        let f = fit.forecast(&y, 30).unwrap();
        assert!(f.iter().all(|v| (v - y[199]).abs() <= 1e-12));
    }

    #[test]
    fn white_noise_model_is_mean() {
        let y = ar1(0.3, 100, 2);
        let fit = arima_fit(&y, ArimaOrder { p: 0, d: 0, q: 0 }, None).unwrap();
        let mean = y.iter().sum::<f64>() / 100.0;
        assert!(fit.forecast(&y, 10).unwrap().iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn ar1_recovered() {
        let y = ar1(0.8, 5000, 7);
        let fit = arima_fit(&y, ArimaOrder { p: 1, d: 0, q: 0 }, None).unwrap();
        // lag-one sample autocorrelation as a reference estimate
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let c0: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((fit.ar[0] - c1 / c0).abs() < 0.01);
        assert!((fit.ar[0] - 0.8).abs() < 0.05);
        assert!(!fit.projected);
    }

    #[test]
    fn constant_series() {
        let y = vec![0.4; 60];
        for order in [ArimaOrder { p: 1, d: 0, q: 1 }, ArimaOrder { p: 1, d: 1, q: 0 }] {
            let fit = arima_fit(&y, order, None).unwrap();
            assert!(fit.forecast(&y, 20).unwrap().iter().all(|v| (v - 0.4).abs() < 1e-9));
        }
    }

    #[test]
    fn seasonal_difference_repeats_pattern() {
        let y: Vec<f64> = (0..120).map(|i| [0.1, 0.5, 0.3, 0.7][i % 4]).collect();
        let fit = arima_fit(&y, ArimaOrder { p: 0, d: 0, q: 0 }, Some(SeasonalOrder { p: 0, d: 1, q: 0, period: 4 })).unwrap();
        let f = fit.forecast(&y, 8).unwrap();
        for (h, v) in f.iter().enumerate() {
            assert!((v - [0.1, 0.5, 0.3, 0.7][(120 + h) % 4]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection() {
        let mut c = vec![1.5];
        assert!(project(&mut c, 1.0));
        assert!((c[0] - 0.99).abs() < 1e-12);
        let mut c = vec![0.5];
        assert!(!project(&mut c, 1.0));
        assert!(max_root_modulus(&[0.5, 0.3]) < 1.0);
    }

    #[test]
    fn polynomial_expansion() {
        // (1 - 0.5B)(1 - 0.2B^3) = 1 - 0.5B - 0.2B^3 + 0.1B^4
        let a = expand(&[0.5], &[0.2], 3, -1.0);
        let want = [0.5, 0.0, 0.2, -0.1];
        assert!(a.iter().zip(want).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn order_limits() {
        let y = vec![0.0; 100];
        assert!(arima_fit(&y, ArimaOrder { p: 6, d: 0, q: 0 }, None).is_err());
        assert!(arima_fit(&y[..15], ArimaOrder { p: 0, d: 0, q: 0 }, None).is_err());
    }
}
