//! Virtual experiments: Rabi scans over pulse duration, spectra over the
//! two-photon detuning, and a resonance finder.

use thiserror::Error;

use crate::calculators::{effective_two_photon, CalcError};
use crate::fitting::fit_gaussian_dips;
use crate::noise::{run_ensemble, run_ensemble_sampled, EnsembleError, EnsembleStats, FluctuationSpec};
use crate::quantum::{evolve, DensityMatrix, DynamicsError, Envelope, Level, PulseShape, StepSize, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("no resonance: deepest dip {depth:e} is below 3x the scan noise floor {floor:e}")]
    NoResonance { depth: f64, floor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanVariable {
    /// Red pulse duration `T`, µs.
    Duration,
    /// Offset added to the two-photon detuning `δ`, MHz.
    Detuning,
}

/// Default Rabi grid: 61 points over [0, 600] ns.
pub const RABI_POINTS: usize = 61;
pub const RABI_SPAN_US: f64 = 0.6;
/// Default spectrum grid: 81 points over ±40 MHz around the resonance.
pub const SPECTRUM_POINTS: usize = 81;
pub const SPECTRUM_HALF_SPAN_MHZ: f64 = 40.0;
/// Pulse duration used for spectra, µs.
pub const SPECTRUM_PULSE_US: f64 = 0.06;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSpec {
    pub variable: ScanVariable,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub system: SystemParams,
    pub pulse: PulseShape,
    pub fluctuations: FluctuationSpec,
}

impl ScanSpec {
    /// Rabi scan over the default duration grid.
    pub fn rabi(system: SystemParams, fluctuations: FluctuationSpec) -> Self {
        ScanSpec {
            variable: ScanVariable::Duration,
            lo: 0.0,
            hi: RABI_SPAN_US,
            points: RABI_POINTS,
            system,
            pulse: PulseShape::rectangle(RABI_SPAN_US),
            fluctuations,
        }
    }

    /// Spectrum over the default detuning grid, centered on `system.delta_small`.
    pub fn spectrum(system: SystemParams, fluctuations: FluctuationSpec) -> Self {
        ScanSpec {
            variable: ScanVariable::Detuning,
            lo: -SPECTRUM_HALF_SPAN_MHZ,
            hi: SPECTRUM_HALF_SPAN_MHZ,
            points: SPECTRUM_POINTS,
            system,
            pulse: PulseShape::rectangle(SPECTRUM_PULSE_US),
            fluctuations,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(ExperimentError::InvalidScan(format!(
                "range must satisfy lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.points < 2 {
            return Err(ExperimentError::InvalidScan(format!("need at least 2 points, got {}", self.points)));
        }
        if self.variable == ScanVariable::Duration && self.lo < 0.0 {
            return Err(ExperimentError::InvalidScan(format!("durations must be >= 0, got {}", self.lo)));
        }
        self.system.validate()?;
        self.fluctuations.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| if i + 1 == n { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub x: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub spec: ScanSpec,
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    /// Point with the lowest mean recapture.
    pub fn minimum(&self) -> ScanPoint {
        *self.points.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)).expect("scan has points")
    }

    /// `1 − min(recapture)`, the largest excitation probability in the scan.
    pub fn max_excitation(&self) -> f64 {
        1.0 - self.minimum().mean
    }

    /// Largest excitation probability among points with `x ≤ x_max`.
    pub fn max_excitation_before(&self, x_max: f64) -> f64 {
        let min = self.points.iter().filter(|p| p.x <= x_max).map(|p| p.mean).fold(f64::INFINITY, f64::min);
        1.0 - min
    }
}

fn zip_points(xs: &[f64], stats: &[EnsembleStats]) -> Vec<ScanPoint> {
    xs.iter().zip(stats).map(|(&x, s)| ScanPoint { x, mean: s.mean, std_error: s.std_error }).collect()
}

/// Recapture probability versus red pulse duration.
///
/// Every duration uses the same per-trajectory draws. For rectangle pulses
/// the trajectories are integrated once and read out at each duration.
pub fn rabi_scan(spec: &ScanSpec) -> Result<ScanResult, ExperimentError> {
    if spec.variable != ScanVariable::Duration {
        return Err(ExperimentError::InvalidScan("rabi_scan needs a duration scan".into()));
    }
    spec.validate()?;
    let xs = spec.grid();
    let constant = spec.pulse.envelope == Envelope::Rectangle || spec.pulse.rise_time <= 0.0;
    let stats = if constant {
        run_ensemble_sampled(&spec.system, &PulseShape::rectangle(spec.hi), &spec.fluctuations, &xs)?
    } else {
        xs.iter()
            .map(|&t| {
                let pulse = PulseShape { duration: t, rise_time: spec.pulse.rise_time.min(t / 2.0), ..spec.pulse };
                run_ensemble(&spec.system, &pulse, &spec.fluctuations)
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(ScanResult { spec: *spec, points: zip_points(&xs, &stats) })
}

/// Recapture probability versus two-photon detuning offset at fixed `T`.
pub fn spectrum_scan(spec: &ScanSpec) -> Result<ScanResult, ExperimentError> {
    if spec.variable != ScanVariable::Detuning {
        return Err(ExperimentError::InvalidScan("spectrum_scan needs a detuning scan".into()));
    }
    spec.validate()?;
    spec.pulse.validate()?;
    let xs = spec.grid();
    let stats = xs
        .iter()
        .map(|&offset| {
            let system = spec.system.with_delta_small(spec.system.delta_small + offset);
            run_ensemble(&system, &spec.pulse, &spec.fluctuations)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScanResult { spec: *spec, points: zip_points(&xs, &stats) })
}

/// A π pulse for the adiabatically eliminated two-photon Rabi frequency.
pub fn pi_pulse(system: &SystemParams) -> Result<PulseShape, ExperimentError> {
    let two = effective_two_photon(system.omega_r, system.omega_b, system.delta_big)?;
    if two.omega_eff == 0.0 {
        return Err(ExperimentError::InvalidScan("two-photon Rabi frequency is zero".into()));
    }
    Ok(PulseShape::rectangle(1.0 / (2.0 * two.omega_eff.abs())))
}

/// Noise estimate from second differences; zero for any smooth or flat trace.
fn second_difference_noise(y: &[f64]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let ss: f64 = y.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).powi(2)).sum();
    (ss / (6.0 * (y.len() - 2) as f64)).sqrt()
}

const RESONANCE_POINTS: usize = 81;
const GOLDEN_TOL_MHZ: f64 = 1e-4;

/// Two-photon detuning `δ` (MHz) that maximizes `ρ_rr` at the end of `pulse`,
/// starting from `|↑⟩` with no fluctuations.
///
/// A coarse scan around the light-shift estimate is fitted with a Gaussian
/// dip, then refined by golden-section search within one grid step.
pub fn find_resonance(base: &SystemParams, pulse: &PulseShape) -> Result<f64, ExperimentError> {
    if !(base.omega_r > 0.0 && base.omega_b > 0.0) {
        return Err(ExperimentError::InvalidScan("find_resonance needs omega_R > 0 and omega_B > 0".into()));
    }
    if !(pulse.duration > 0.0) {
        return Err(ExperimentError::InvalidScan("find_resonance needs a pulse with T > 0".into()));
    }
    let two = effective_two_photon(base.omega_r, base.omega_b, base.delta_big)?;
    let center = two.resonant_detuning();
    let half = (2.0 / pulse.duration).max(4.0 * two.omega_eff.abs()).max(5.0) + 0.25 * center.abs();

    let rho0 = DensityMatrix::pure(Level::Up);
    let loss = |delta: f64| -> Result<f64, ExperimentError> {
        let rho = evolve(&rho0, &base.with_delta_small(delta), pulse, StepSize::Default)?;
        Ok(1.0 - rho.population(Level::R))
    };

    let xs: Vec<f64> = (0..RESONANCE_POINTS)
        .map(|i| center - half + 2.0 * half * i as f64 / (RESONANCE_POINTS - 1) as f64)
        .collect();
    let ys = xs.iter().map(|&d| loss(d)).collect::<Result<Vec<_>, _>>()?;
    let step = xs[1] - xs[0];

    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let depth = hi - lo;
    let floor = second_difference_noise(&ys);
    if !(depth > 3.0 * floor && depth > 1e-9) {
        return Err(ExperimentError::NoResonance { depth, floor });
    }

    // Grid minimum; among exact ties take the sharpest dip.
    let curvature = |i: usize| {
        if i == 0 || i + 1 == ys.len() {
            0.0
        } else {
            ys[i - 1] - 2.0 * ys[i] + ys[i + 1]
        }
    };
    let i_min = (0..ys.len())
        .filter(|&i| ys[i] == lo)
        .max_by(|&a, &b| curvature(a).total_cmp(&curvature(b)))
        .expect("minimum exists");

    let fitted = fit_gaussian_dips(&xs, &ys, 1).ok().map(|f| f.param("nu1"));
    let guess = match fitted {
        Some(nu) if (nu - xs[i_min]).abs() <= 2.0 * step => nu,
        _ => xs[i_min],
    };

    golden_section_min(&loss, guess - step, guess + step, GOLDEN_TOL_MHZ)
}

fn golden_section_min<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<f64, ExperimentError>
where
    F: Fn(f64) -> Result<f64, ExperimentError>,
{
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sets `δ` to the resonance found with a π pulse.
pub fn at_resonance(system: &SystemParams) -> Result<SystemParams, ExperimentError> {
    let pulse = pi_pulse(system)?;
    Ok(system.with_delta_small(find_resonance(system, &pulse)?))
}
