//! Small derivative-free and quasi-Newton minimizers used by model fitting.

/// Box-constrained compass (pattern) search.
///
/// Steps start at a quarter of each box width and halve whenever no axis move
/// improves the objective. `constrain` may further project a candidate (for
/// example to enforce `beta <= alpha`).
pub fn pattern_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    constrain: &dyn Fn(&mut [f64]),
    max_evals: usize,
    tol: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    constrain(&mut x);
    let mut fx = f(&x);
    let mut step: Vec<f64> = (0..n).map(|i| (upper[i] - lower[i]) / 4.0).collect();
    let mut evals = 1;
    while evals < max_evals && step.iter().any(|s| *s > tol) {
        let mut improved = false;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + dir * step[i]).clamp(lower[i], upper[i]);
                constrain(&mut cand);
                if cand == x {
                    continue;
                }
                let fc = f(&cand);
                evals += 1;
                if fc < fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s /= 2.0);
        }
    }
    (x, fx)
}

/// Central-difference gradient.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Unconstrained BFGS with a backtracking Armijo line search and numeric gradients.
pub fn bfgs(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], max_iter: usize, gtol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if n == 0 || !fx.is_finite() {
        return (x, fx);
    }
    let mut g = numeric_gradient(f, &x);
    let mut h = identity(n);
    for _ in 0..max_iter {
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < gtol {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // lost descent direction; restart from steepest descent
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else { break };
        let gn = numeric_gradient(f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let converged = (fx - fn_).abs() <= 1e-12 * fx.abs().max(1e-300);
        x = xn;
        fx = fn_;
        g = gn;
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        if converged {
            break;
        }
    }
    (x, fx)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, fx) = bfgs(&mut f, &[-1.2, 1.0], 500, 1e-8);
        assert!(fx < 1e-8, "{fx}");
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn pattern_search_box() {
        let mut f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 2.0).powi(2);
        let (x, _) = pattern_search(&mut f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &|_| {}, 10_000, 1e-9);
        assert!((x[0] - 0.3).abs() < 1e-6);
        assert_eq!(x[1], 1.0);
    }
}
