//! Box-constrained quasi-Newton minimisation with finite-difference gradients.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop once `|f_k - f_{k+1}| <= rel_tol * max(|f_{k+1}|, 1)`.
    pub rel_tol: f64,
    /// Central difference step.
    pub fd_step: f64,
    /// Largest allowed step length in parameter space.
    pub max_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig { max_iter: 500, rel_tol: 1e-8, fd_step: 1e-5, max_step: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn gradient(&mut self, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let hi = (x[i] + h).min(self.upper[i]);
            let lo = (x[i] - h).max(self.lower[i]);
            xp[i] = hi;
            let fp = self.eval(&xp);
            xp[i] = lo;
            let fm = self.eval(&xp);
            xp[i] = x[i];
            g[i] = if hi > lo { (fp - fm) / (hi - lo) } else { 0.0 };
            if !g[i].is_finite() {
                g[i] = 0.0;
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` from `x0` within `[lower, upper]`.
///
/// Non-finite objective values are treated as `+inf`, so the line search
/// backs away from them.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &BfgsConfig) -> BfgsResult {
    let p = x0.len();
    let mut obj = Counted { f, evals: 0, lower: lower.to_vec(), upper: upper.to_vec() };
    let mut x = x0.to_vec();
    obj.clamp(&mut x);
    let mut fx = obj.eval(&x);
    if p == 0 || !fx.is_finite() {
        return BfgsResult { x, f: fx, iterations: 0, evaluations: obj.evals, converged: p == 0 };
    }
    let mut g = obj.gradient(&x, cfg.fd_step);
    let mut h = identity(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut fresh_h = true;

    while iterations < cfg.max_iter {
        iterations += 1;
        if dot(&g, &g).sqrt() <= 1e-12 * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = (0..p).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            h = identity(p);
            fresh_h = true;
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let len = dot(&dir, &dir).sqrt();
        if len > cfg.max_step {
            let s = cfg.max_step / len;
            dir.iter_mut().for_each(|d| *d *= s);
            slope *= s;
        }

        // Armijo backtracking.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            obj.clamp(&mut xn);
            let fnew = obj.eval(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh_h {
                // No descent along the negative gradient: stationary to the
                // precision of the finite-difference gradient.
                converged = true;
                break;
            }
            h = identity(p);
            fresh_h = true;
            continue;
        };

        let gn = obj.gradient(&xn, cfg.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let small_change = (fx - fnew).abs() <= cfg.rel_tol * fnew.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        if small_change {
            converged = true;
            break;
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            bfgs_update(&mut h, &s, &yv, sy);
            fresh_h = false;
        }
    }
    BfgsResult { x, f: fx, iterations, evaluations: obj.evals, converged }
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Inverse-Hessian update `H <- (I - r s y') H (I - r y s') + r s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let p = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..p).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..p {
        for j in 0..p {
            h[i][j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unbounded(p: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; p], vec![f64::INFINITY; p])
    }

    #[test]
    fn quadratic_bowl() {
        let (lo, hi) = unbounded(3);
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + 0.5 * (x[2] - 0.3).powi(2) + 7.0;
        let r = minimize(f, &[0.0, 0.0, 0.0], &lo, &hi, &BfgsConfig { rel_tol: 1e-14, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5 && (r.x[2] - 0.3).abs() < 1e-5);
        assert!((r.f - 7.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock() {
        let (lo, hi) = unbounded(2);
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &lo, &hi, &BfgsConfig { rel_tol: 1e-15, ..Default::default() });
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 2e-3, "{:?}", r);
    }

    #[test]
    fn respects_bounds_and_never_worsens() {
        let f = |x: &[f64]| (x[0] - 10.0).powi(2);
        let r = minimize(f, &[0.0], &[-1.0], &[2.0], &BfgsConfig::default());
        assert!((r.x[0] - 2.0).abs() < 1e-9);
        assert!(r.f <= 100.0);
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        let (lo, hi) = unbounded(1);
        let f = |x: &[f64]| if x[0] > 1.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let r = minimize(f, &[0.0], &lo, &hi, &BfgsConfig::default());
        assert!(r.f.is_finite() && r.x[0] <= 1.0 && r.x[0] > 0.9);
    }

    #[test]
    fn deterministic() {
        let (lo, hi) = unbounded(2);
        let f = |x: &[f64]| (x[0] * x[1] - 1.0).powi(2) + x[0].powi(2) * 0.1;
        let a = minimize(f, &[2.0, 0.1], &lo, &hi, &BfgsConfig::default());
        let b = minimize(f, &[2.0, 0.1], &lo, &hi, &BfgsConfig::default());
        assert_eq!(a, b);
    }
}
