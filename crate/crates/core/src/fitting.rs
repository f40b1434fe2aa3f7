//! Levenberg-Marquardt least squares and the four experiment models.
//!
//! The engine works on an arbitrary scalar model `f(params, x)`, builds the
//! Jacobian by central differences and reports standard errors from the
//! covariance at the solution. Model wrappers reparameterize strictly
//! positive quantities (`τ`, `s_i`, `w`) through their logarithm and report
//! results, including standard errors, in natural units.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::calculators::fwhm_per_sigma;

/// Engine settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative central-difference step.
    pub diff_step: f64,
    /// Relative parameter change that counts as converged.
    pub xtol: f64,
    /// Gradient norm that counts as converged.
    pub gtol: f64,
    /// Smallest accepted ratio of Jacobian singular values.
    pub rcond: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 500, diff_step: 1e-6, xtol: 1e-10, gtol: 1e-12, rcond: 1e-10 }
    }
}

/// Quantity derived from the fitted parameters (FWHM, separation, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Derived {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub derived: Vec<Derived>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.std_errors[i])
    }

    pub fn derived(&self, name: &str) -> Option<&Derived> {
        self.derived.iter().find(|d| d.name == name)
    }

    /// Parameter by name; panics on an unknown name.
    pub fn param(&self, name: &str) -> f64 {
        self.get(name).unwrap_or_else(|| panic!("no fit parameter named {name}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    #[error("Jacobian is singular (singular value ratio {ratio:e}); parameters are not identifiable")]
    SingularJacobian { ratio: f64 },
    #[error("no convergence after {} iterations", .0.iterations)]
    MaxIterations(Box<FitResult>),
    #[error("no oscillation found: spectral peak {peak:e} is below 3x the noise floor {floor:e}")]
    NoOscillation { peak: f64, floor: f64 },
}

/// Nonlinear least squares with default [`LmOptions`].
pub fn least_squares<F>(model: F, x: &[f64], y: &[f64], sigma: Option<&[f64]>, p0: &[f64]) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], f64) -> f64,
{
    least_squares_with(model, x, y, sigma, p0, &LmOptions::default())
}

struct Problem<'a, F> {
    model: F,
    x: &'a [f64],
    y: &'a [f64],
    weights: Vec<f64>,
}

impl<F: Fn(&[f64], f64) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(&self.weights).map(|((&x, &y), &w)| ((self.model)(p, x) - y) * w),
        )
    }

    fn jacobian(&self, p: &[f64], rel_step: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.x.len(), p.len());
        let mut work = p.to_vec();
        for j in 0..p.len() {
            // Parameters that sit near zero (a centered ν, say) get an absolute floor.
            let h = rel_step * p[j].abs().max(1e-3);
            work[j] = p[j] + h;
            let plus = self.residuals(&work);
            work[j] = p[j] - h;
            let minus = self.residuals(&work);
            work[j] = p[j];
            jac.set_column(j, &((plus - minus) / (2.0 * h)));
        }
        jac
    }
}

fn singular_ratio(jac: &DMatrix<f64>) -> f64 {
    let sv = jac.singular_values();
    let max = sv.max();
    if max > 0.0 && max.is_finite() {
        sv.min() / max
    } else {
        0.0
    }
}

pub fn least_squares_with<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    p0: &[f64],
    opts: &LmOptions,
) -> Result<FitResult, FitError>
where
    F: Fn(&[f64], f64) -> f64,
{
    let n = x.len();
    let m = p0.len();
    if y.len() != n {
        return Err(FitError::InvalidInput(format!("x has {n} points but y has {}", y.len())));
    }
    if m == 0 || n < m {
        return Err(FitError::InvalidInput(format!("{n} points cannot determine {m} parameters")));
    }
    if p0.iter().chain(x).chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite data or initial parameters".into()));
    }
    let weights = match sigma {
        Some(s) if s.len() != n => {
            return Err(FitError::InvalidInput(format!("sigma has {} entries, expected {n}", s.len())))
        }
        Some(s) if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
            return Err(FitError::InvalidInput("sigma entries must be positive".into()))
        }
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let problem = Problem { model, x, y, weights };

    let mut p = p0.to_vec();
    let mut r = problem.residuals(&p);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(FitError::InvalidInput("model is not finite at the initial parameters".into()));
    }
    let mut jac = problem.jacobian(&p, opts.diff_step);
    let ratio = singular_ratio(&jac);
    if ratio < opts.rcond {
        return Err(FitError::SingularJacobian { ratio });
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.norm() < opts.gtol {
            converged = true;
            break;
        }
        let diag_floor = jtj.diagonal().max() * 1e-15;

        // Inner loop: raise the damping until the step lowers the cost.
        let mut accepted = None;
        while lambda < 1e20 {
            let mut lhs = jtj.clone();
            for i in 0..m {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = problem.residuals(&trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial < cost {
                accepted = Some((trial, r_trial, cost_trial, step));
                lambda = (lambda / 10.0).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }

        let Some((trial, r_trial, cost_trial, step)) = accepted else {
            // No step lowers the cost at machine precision: this is a minimum.
            converged = true;
            break;
        };
        let small_step = step
            .iter()
            .zip(&p)
            .all(|(d, v)| d.abs() <= opts.xtol * (v.abs() + opts.xtol));
        p = trial;
        r = r_trial;
        cost = cost_trial;
        jac = problem.jacobian(&p, opts.diff_step);
        if small_step {
            converged = true;
            break;
        }
    }

    let ratio = singular_ratio(&jac);
    if ratio < opts.rcond {
        return Err(FitError::SingularJacobian { ratio });
    }
    let std_errors = standard_errors(&jac, cost, n, m, sigma.is_some());
    let result = FitResult {
        names: (0..m).map(|i| format!("p{i}")).collect(),
        params: p,
        std_errors,
        derived: Vec::new(),
        rss: cost,
        iterations,
        converged,
    };
    if converged {
        Ok(result)
    } else {
        Err(FitError::MaxIterations(Box::new(result)))
    }
}

/// Square roots of the covariance diagonal. Without explicit σ the
/// covariance is scaled by the reduced residual variance.
fn standard_errors(jac: &DMatrix<f64>, cost: f64, n: usize, m: usize, absolute: bool) -> Vec<f64> {
    let jtj = jac.transpose() * jac;
    let cov = match jtj.clone().pseudo_inverse(1e-300) {
        Ok(c) => c,
        Err(_) => return vec![f64::NAN; m],
    };
    let scale = if absolute {
        1.0
    } else if n > m {
        cost / (n - m) as f64
    } else {
        0.0
    };
    (0..m).map(|i| (cov[(i, i)] * scale).max(0.0).sqrt()).collect()
}

/// Maps an internal fit (with some log-parameters) back to natural units.
fn to_natural(mut fit: FitResult, names: &[&str], log_params: &[usize]) -> FitResult {
    for &i in log_params {
        let v = fit.params[i].exp();
        fit.params[i] = v;
        fit.std_errors[i] *= v;
    }
    fit.names = names.iter().map(|s| s.to_string()).collect();
    fit
}

fn map_result<G>(res: Result<FitResult, FitError>, finish: G) -> Result<FitResult, FitError>
where
    G: Fn(FitResult) -> FitResult,
{
    match res {
        Ok(fit) => Ok(finish(fit)),
        Err(FitError::MaxIterations(fit)) => Err(FitError::MaxIterations(Box::new(finish(*fit)))),
        Err(e) => Err(e),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[k - 1] + s[k])
    } else {
        s[k]
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
}

/// Frequency grid (MHz) searched for the initial damped-cosine frequency.
pub const OSCILLATION_SEARCH_MHZ: (f64, f64) = (0.5, 30.0);

/// Magnitude of the discrete Fourier sum of `y − ȳ` at frequency `nu` (MHz, `t` in µs).
fn fourier_magnitude(t: &[f64], centered: &[f64], nu: f64) -> f64 {
    let (re, im) = t.iter().zip(centered).fold((0.0, 0.0), |(re, im), (&tk, &yk)| {
        let ph = TAU * nu * tk;
        (re + yk * ph.cos(), im - yk * ph.sin())
    });
    re.hypot(im)
}

/// Dominant oscillation frequency (MHz) with its spectral peak and the
/// median magnitude over the search band.
pub fn dominant_frequency(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let ybar = mean(y);
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let (lo, hi) = OSCILLATION_SEARCH_MHZ;
    let steps = 591;
    let mags: Vec<(f64, f64)> = (0..steps)
        .map(|i| {
            let nu = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
            (nu, fourier_magnitude(t, &centered, nu))
        })
        .collect();
    let (nu, peak) = mags.iter().copied().fold((lo, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    // Absolute floor so that roundoff in constant data never reads as signal.
    let scale = y.iter().map(|v| v.abs()).sum::<f64>();
    let floor = median(&mags.iter().map(|m| m.1).collect::<Vec<_>>()).max(1e-12 * scale);
    (nu, peak, floor)
}

/// `y = A − B·exp(−T/τ)·cos(ΩT)` with `T` in µs.
///
/// Parameters are reported as `A`, `B`, `tau` (µs) and `freq` (`Ω/2π`, MHz).
pub fn fit_damped_cosine(t: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    if t.len() != y.len() || t.len() < 8 {
        return Err(FitError::InvalidInput("damped cosine needs at least 8 (T, y) pairs".into()));
    }
    let (nu, peak, floor) = dominant_frequency(t, y);
    if !(peak > 3.0 * floor) {
        return Err(FitError::NoOscillation { peak, floor });
    }
    let (t_lo, t_hi) = min_max(t);
    let (y_lo, y_hi) = min_max(y);
    let a0 = mean(y);
    let first = t.iter().zip(y).min_by(|a, b| a.0.total_cmp(b.0)).map(|p| *p.1).unwrap_or(a0);
    // A − B at T = 0: recapture traces start above the mean, so B < 0 there.
    let b0 = (y_hi - y_lo) / 2.0 * if first > a0 { -1.0 } else { 1.0 };
    let tau0 = ((t_hi - t_lo) / 2.0).max(1e-9);
    let p0 = [a0, b0, tau0.ln(), TAU * nu];

    let model = |p: &[f64], x: f64| p[0] - p[1] * (-x / p[2].exp()).exp() * (p[3] * x).cos();
    let res = least_squares(model, t, y, None, &p0);
    map_result(res, |fit| {
        let mut fit = to_natural(fit, &["A", "B", "tau", "freq"], &[2]);
        fit.params[3] = fit.params[3].abs() / TAU;
        fit.std_errors[3] /= TAU;
        fit
    })
}

/// Crossing positions of the level `y = level` around index `center`.
fn half_width(x: &[f64], y: &[f64], center: usize, level: f64, below: bool) -> Option<f64> {
    let inside = |v: f64| if below { v < level } else { v > level };
    let cross = |i: usize, j: usize| {
        let (x0, x1, y0, y1) = (x[i], x[j], y[i], y[j]);
        if y1 == y0 {
            x0
        } else {
            x0 + (level - y0) * (x1 - x0) / (y1 - y0)
        }
    };
    let mut left = None;
    for i in (0..center).rev() {
        if !inside(y[i]) {
            left = Some(cross(i, i + 1));
            break;
        }
    }
    let mut right = None;
    for i in center + 1..x.len() {
        if !inside(y[i]) {
            right = Some(cross(i - 1, i));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Some(r - l),
        (Some(l), None) => Some(2.0 * (x[center] - l)),
        (None, Some(r)) => Some(2.0 * (r - x[center])),
        (None, None) => None,
    }
}

fn sorted_pairs(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    (idx.iter().map(|&i| x[i]).collect(), idx.iter().map(|&i| y[i]).collect())
}

fn gaussian_dips_model(p: &[f64], x: f64) -> f64 {
    let mut v = p[0];
    for dip in p[1..].chunks_exact(3) {
        let s = dip[2].exp();
        let u = (x - dip[1]) / s;
        v -= dip[0] * (-0.5 * u * u).exp();
    }
    v
}

/// `y = A − Σ B_i·exp(−(x−ν_i)²/(2 s_i²))` for one or two dips, `x` in MHz.
///
/// Parameters: `A`, then `B{i}`, `nu{i}`, `s{i}` per dip. Derived values:
/// `fwhm{i}` and, for two dips, `separation = |ν₁ − ν₂|`.
pub fn fit_gaussian_dips(x: &[f64], y: &[f64], n_dips: usize) -> Result<FitResult, FitError> {
    if !(1..=2).contains(&n_dips) {
        return Err(FitError::InvalidInput(format!("n_dips must be 1 or 2, got {n_dips}")));
    }
    if x.len() != y.len() || x.len() < 5 * n_dips + 1 {
        return Err(FitError::InvalidInput(format!(
            "{n_dips} dip(s) need at least {} points",
            5 * n_dips + 1
        )));
    }
    let (xs, ys) = sorted_pairs(x, y);
    let (x_lo, x_hi) = min_max(&xs);
    let span = x_hi - x_lo;
    let (_, a0) = min_max(&ys);

    let mut p0 = vec![a0];
    let mut residual = ys.clone();
    let mut first: Option<(f64, f64, f64)> = None;
    for _ in 0..n_dips {
        // Later dips are searched outside the half-width of the first one.
        let (imin, rmin) = residual
            .iter()
            .copied()
            .enumerate()
            .filter(|(i, _)| first.is_none_or(|(_, nu, w)| (xs[*i] - nu).abs() > w / 2.0))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, ys[0]));
        let floor = first.map_or(1e-12 * a0.abs().max(1.0), |(d, _, _)| 0.1 * d);
        let depth = (a0 - rmin).max(floor);
        let width = half_width(&xs, &residual, imin, a0 - depth / 2.0, true)
            .filter(|w| *w > 0.0)
            .or(first.map(|f| f.2))
            .unwrap_or(span / 10.0);
        let s0 = (width / fwhm_per_sigma()).max(span * 1e-3);
        p0.extend([depth, xs[imin], s0.ln()]);
        for (r, &xv) in residual.iter_mut().zip(&xs) {
            let u = (xv - xs[imin]) / s0;
            *r += depth * (-0.5 * u * u).exp();
        }
        first.get_or_insert((depth, xs[imin], width));
    }

    let res = least_squares(gaussian_dips_model, &xs, &ys, None, &p0);
    let mut names = vec!["A".to_string()];
    for i in 1..=n_dips {
        names.extend([format!("B{i}"), format!("nu{i}"), format!("s{i}")]);
    }
    map_result(res, |fit| {
        let log_idx: Vec<usize> = (0..n_dips).map(|i| 3 + 3 * i).collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut fit = to_natural(fit, &name_refs, &log_idx);
        for i in 0..n_dips {
            let k = 3 + 3 * i;
            fit.derived.push(Derived {
                name: format!("fwhm{}", i + 1),
                value: fwhm_per_sigma() * fit.params[k],
                std_error: fwhm_per_sigma() * fit.std_errors[k],
            });
        }
        if n_dips == 2 {
            fit.derived.push(Derived {
                name: "separation".into(),
                value: (fit.params[2] - fit.params[5]).abs(),
                std_error: fit.std_errors[2].hypot(fit.std_errors[5]),
            });
        }
        fit
    })
}

/// `y = y_bg + A·exp(−t/τ)`, `t` in ms from the start of illumination.
///
/// Parameters: `y_bg`, `A`, `tau` (ms).
pub fn fit_exp_decay(t: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(FitError::InvalidInput("exponential decay needs at least 4 points".into()));
    }
    let (ts, ys) = sorted_pairs(t, y);
    let (t_lo, t_hi) = min_max(&ts);
    let tail = (ys.len() / 10).max(1);
    let bg0 = mean(&ys[ys.len() - tail..]);
    let a0 = ys[0] - bg0;
    let target = bg0 + a0 / std::f64::consts::E;
    let tau0 = ts
        .windows(2)
        .zip(ys.windows(2))
        .find(|(_, yw)| (yw[0] - target) * (yw[1] - target) <= 0.0 && yw[0] != yw[1])
        .map(|(tw, yw)| tw[0] + (target - yw[0]) * (tw[1] - tw[0]) / (yw[1] - yw[0]) - t_lo)
        .filter(|v| *v > 0.0)
        .unwrap_or((t_hi - t_lo) / 3.0)
        .max(1e-12);
    let p0 = [bg0, a0, tau0.ln()];
    let model = |p: &[f64], x: f64| p[0] + p[1] * (-x / p[2].exp()).exp();
    let res = least_squares(model, &ts, &ys, None, &p0);
    map_result(res, |fit| to_natural(fit, &["y_bg", "A", "tau"], &[2]))
}

/// `rate(x) = rate0·exp(−2(x−x0)²/w²)`, positions in µm.
///
/// Parameters: `rate0`, `x0`, `w` (1/e² waist).
pub fn fit_beam_waist(position: &[f64], rate: &[f64]) -> Result<FitResult, FitError> {
    if position.len() != rate.len() || position.len() < 5 {
        return Err(FitError::InvalidInput("beam waist needs at least 5 positions".into()));
    }
    let (xs, ys) = sorted_pairs(position, rate);
    let (x_lo, x_hi) = min_max(&xs);
    let (imax, ymax) = ys.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
    // Intensity FWHM of a Gaussian beam is w·√(2 ln 2).
    let w0 = half_width(&xs, &ys, imax, ymax / 2.0, false)
        .filter(|w| *w > 0.0)
        .map(|fwhm| fwhm / (2.0 * std::f64::consts::LN_2).sqrt())
        .unwrap_or((x_hi - x_lo) / 2.0)
        .max(1e-12);
    let p0 = [ymax, xs[imax], w0.ln()];
    let model = |p: &[f64], x: f64| {
        let w = p[2].exp();
        p[0] * (-2.0 * (x - p[1]).powi(2) / (w * w)).exp()
    };
    let res = least_squares(model, &xs, &ys, None, &p0);
    map_result(res, |fit| to_natural(fit, &["rate0", "x0", "w"], &[2]))
}

/// Evaluates the damped-cosine model with natural parameters `(A, B, τ, ν)`.
pub fn damped_cosine(a: f64, b: f64, tau: f64, freq_mhz: f64, t: f64) -> f64 {
    a - b * (-t / tau).exp() * (TAU * freq_mhz * t).cos()
}

/// Evaluates a Gaussian-dip profile with natural parameters.
pub fn gaussian_dips(a: f64, dips: &[(f64, f64, f64)], x: f64) -> f64 {
    dips.iter()
        .fold(a, |v, &(b, nu, s)| v - b * (-(x - nu).powi(2) / (2.0 * s * s)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_model_exact() {
        let x = grid(0.0, 5.0, 11);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = least_squares(|p, x| p[0] * x, &x, &y, None, &[0.5]).unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn redundant_parameters_are_singular() {
        let x = grid(0.0, 5.0, 11);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let err = least_squares(|p, x| (p[0] + p[1]) * x, &x, &y, None, &[1.0, 0.5]).unwrap_err();
        assert!(matches!(err, FitError::SingularJacobian { .. }), "{err:?}");
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            least_squares(|p, x| p[0] * x, &[1.0], &[1.0, 2.0], None, &[1.0]),
            Err(FitError::InvalidInput(_))
        ));
        assert!(matches!(
            least_squares(|p, x| p[0] * x + p[1], &[1.0], &[1.0], None, &[1.0, 0.0]),
            Err(FitError::InvalidInput(_))
        ));
        assert!(matches!(
            least_squares(|p, x| p[0] * x, &[1.0, 2.0], &[1.0, 2.0], Some(&[1.0, 0.0]), &[1.0]),
            Err(FitError::InvalidInput(_))
        ));
    }

    #[test]
    fn max_iterations_returns_best_so_far() {
        let x = grid(0.0, 1.0, 20);
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).exp()).collect();
        let opts = LmOptions { max_iterations: 1, ..Default::default() };
        let err = least_squares_with(|p, x| (p[0] * x).exp(), &x, &y, None, &[0.1], &opts).unwrap_err();
        match err {
            FitError::MaxIterations(best) => {
                assert!(!best.converged);
                assert!(best.params[0] > 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn damped_cosine_noiseless_round_trip() {
        let t = grid(0.0, 0.6, 61);
        let y: Vec<f64> = t.iter().map(|&v| damped_cosine(0.5, 0.4, 0.48, 7.0, v)).collect();
        let fit = fit_damped_cosine(&t, &y).unwrap();
        for (name, truth) in [("A", 0.5), ("B", 0.4), ("tau", 0.48), ("freq", 7.0)] {
            assert_relative_eq!(fit.param(name), truth, max_relative = 1e-6);
        }
    }

    #[test]
    fn damped_cosine_rejects_flat_data() {
        let t = grid(0.0, 0.6, 61);
        let y = vec![0.98; 61];
        assert!(matches!(fit_damped_cosine(&t, &y), Err(FitError::NoOscillation { .. })));
    }

    #[test]
    fn single_dip_centered_on_symmetric_grid() {
        let x = grid(-40.0, 40.0, 81);
        let y: Vec<f64> = x.iter().map(|&v| gaussian_dips(0.98, &[(0.6, 3.0, 6.0)], v)).collect();
        let fit = fit_gaussian_dips(&x, &y, 1).unwrap();
        assert!((fit.param("nu1") - 3.0).abs() < 1e-6);

        let sym: Vec<f64> = x.iter().map(|&v| 0.9 - 0.5 / (1.0 + (v / 7.0).powi(2))).collect();
        let fit = fit_gaussian_dips(&x, &sym, 1).unwrap();
        assert!(fit.param("nu1").abs() < 1e-6, "center {}", fit.param("nu1"));
    }

    #[test]
    fn double_dip_separation_and_width() {
        let x = grid(-40.0, 60.0, 101);
        let s_main = 16.0 / fwhm_per_sigma();
        let y: Vec<f64> =
            x.iter().map(|&v| gaussian_dips(0.95, &[(0.55, 0.0, s_main), (0.25, 20.0, 4.0)], v)).collect();
        let fit = fit_gaussian_dips(&x, &y, 2).unwrap();
        let sep = fit.derived("separation").unwrap().value;
        assert!((sep - 20.0).abs() < 1.0, "separation {sep}");
        let widths = [fit.derived("fwhm1").unwrap().value, fit.derived("fwhm2").unwrap().value];
        assert!(widths.iter().any(|w| (w - 16.0).abs() < 1.0), "widths {widths:?}");
    }

    #[test]
    fn exp_decay_round_trip_and_flat() {
        let t = grid(0.0, 10.0, 40);
        let y: Vec<f64> = t.iter().map(|&v| 120.0 + 800.0 * (-v / 2.03).exp()).collect();
        let fit = fit_exp_decay(&t, &y).unwrap();
        assert_relative_eq!(fit.param("tau"), 2.03, max_relative = 1e-6);

        let flat = vec![150.0; 40];
        assert!(matches!(fit_exp_decay(&t, &flat), Err(FitError::SingularJacobian { .. })));
    }

    #[test]
    fn beam_waist_round_trip_and_flat() {
        let x = grid(-50.0, 50.0, 21);
        for w in [22.0, 19.0] {
            let y: Vec<f64> = x.iter().map(|&v| 0.5 * (-2.0 * (v - 3.0_f64).powi(2) / (w * w)).exp()).collect();
            let fit = fit_beam_waist(&x, &y).unwrap();
            assert!((fit.param("w") - w).abs() < 0.5);
            assert_relative_eq!(fit.param("w"), w, max_relative = 1e-6);
        }
        let flat = vec![0.4; 21];
        let err = fit_beam_waist(&x, &flat).unwrap_err();
        assert!(matches!(err, FitError::SingularJacobian { .. }), "{err:?}");
    }
}
