//! Monte Carlo averaging over quasi-static laser fluctuations.
//!
//! Each trajectory draws one set of red/blue relative powers and one
//! two-photon detuning, holds them fixed for the whole pulse, evolves the
//! master equation from an imperfectly pumped initial state and maps the
//! final Rydberg population to a recapture probability.
//!
//! Trajectory `i` always reads from its own ChaCha8 stream keyed by
//! `(seed, i)`, and results are reduced in index order, so the ensemble is
//! bit-reproducible for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::calculators::fwhm_per_sigma;
use crate::quantum::{evolve_sampled, DensityMatrix, DynamicsError, Level, PulseShape, StepSize, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid fluctuation spec: {0}")]
    InvalidSpec(String),
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: DynamicsError,
    },
}

/// Gaussian laser noise and state-preparation imperfections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluctuationSpec {
    /// Relative FWHM of the red laser power.
    pub red_power_fwhm: f64,
    /// Relative FWHM of the blue laser power.
    pub blue_power_fwhm: f64,
    /// FWHM of the two-photon detuning jitter, MHz.
    pub detuning_fwhm: f64,
    pub pumping_efficiency: f64,
    /// Recapture probability without any laser excitation.
    pub recapture_factor: f64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl Default for FluctuationSpec {
    fn default() -> Self {
        FluctuationSpec {
            red_power_fwhm: 0.025,
            blue_power_fwhm: 0.05,
            detuning_fwhm: 0.0,
            pumping_efficiency: 0.95,
            recapture_factor: 0.98,
            n_trajectories: 100,
            seed: 0,
        }
    }
}

impl FluctuationSpec {
    /// Default powers and preparation with the given detuning jitter.
    pub fn with_detuning_fwhm(detuning_fwhm: f64) -> Self {
        FluctuationSpec { detuning_fwhm, ..Default::default() }
    }

    /// Same preparation and trajectory count with every FWHM set to zero.
    pub fn without_fluctuations(self) -> Self {
        FluctuationSpec { red_power_fwhm: 0.0, blue_power_fwhm: 0.0, detuning_fwhm: 0.0, ..self }
    }

    pub fn is_noiseless(&self) -> bool {
        self.red_power_fwhm == 0.0 && self.blue_power_fwhm == 0.0 && self.detuning_fwhm == 0.0
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (name, v) in [
            ("red_power_fwhm", self.red_power_fwhm),
            ("blue_power_fwhm", self.blue_power_fwhm),
            ("detuning_fwhm", self.detuning_fwhm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EnsembleError::InvalidSpec(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("pumping_efficiency", self.pumping_efficiency),
            ("recapture_factor", self.recapture_factor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EnsembleError::InvalidSpec(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.n_trajectories == 0 {
            return Err(EnsembleError::InvalidSpec("n_trajectories must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gaussian standard deviation for a given FWHM.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / fwhm_per_sigma()
}

/// Parameters drawn for one trajectory, MHz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryParams {
    pub omega_r: f64,
    pub omega_b: f64,
    pub delta_small: f64,
}

impl TrajectoryParams {
    pub fn apply(&self, base: &SystemParams) -> SystemParams {
        SystemParams { omega_r: self.omega_r, omega_b: self.omega_b, delta_small: self.delta_small, ..*base }
    }
}

/// Independent stream for trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One draw of relative powers (Rabi frequencies scale as `√P`) and of the
/// two-photon detuning. Draw order is red power, blue power, detuning.
pub fn sample_trajectory<R: Rng + ?Sized>(base: &SystemParams, spec: &FluctuationSpec, rng: &mut R) -> TrajectoryParams {
    let mut gauss = |fwhm: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        z * fwhm_to_sigma(fwhm)
    };
    let p_red = (1.0 + gauss(spec.red_power_fwhm)).max(0.0);
    let p_blue = (1.0 + gauss(spec.blue_power_fwhm)).max(0.0);
    let jitter = gauss(spec.detuning_fwhm);
    TrajectoryParams {
        omega_r: base.omega_r * p_red.sqrt(),
        omega_b: base.omega_b * p_blue.sqrt(),
        delta_small: base.delta_small + jitter,
    }
}

/// `η|↑⟩⟨↑| + (1−η)|g⟩⟨g|` for pumping efficiency `η`.
pub fn initial_state(spec: &FluctuationSpec) -> DensityMatrix {
    let eta = spec.pumping_efficiency.clamp(0.0, 1.0);
    let mut pops = [0.0; 5];
    pops[Level::Up.index()] = eta;
    pops[Level::G.index()] = 1.0 - eta;
    DensityMatrix::diagonal(pops).expect("convex mixture of two basis states is a valid state")
}

/// `recapture_factor · (1 − ρ_rr)`; Rydberg atoms are always lost.
pub fn recapture_probability(rho: &DensityMatrix, spec: &FluctuationSpec) -> f64 {
    spec.recapture_factor * (1.0 - rho.population(Level::R))
}

/// Mean and standard error of the mean over trajectories.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl EnsembleStats {
    /// Statistics of `values`, reduced in slice order.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if values.windows(2).all(|w| w[0] == w[1]) {
            return EnsembleStats { mean: values[0], std_error: 0.0, n };
        }
        let mean = pairwise_sum(values) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        EnsembleStats { mean, std_error, n }
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Mean recapture probability at the end of the pulse.
pub fn run_ensemble(base: &SystemParams, pulse: &PulseShape, spec: &FluctuationSpec) -> Result<EnsembleStats, EnsembleError> {
    let mut out = run_ensemble_sampled(base, pulse, spec, &[pulse.duration])?;
    Ok(out.pop().expect("one sample time"))
}

/// Recapture statistics of the ensemble at several times during one pulse.
///
/// Each trajectory is integrated once and read out at every `times[k]`.
/// For a rectangle pulse this equals running separate ensembles with pulse
/// durations `times[k]`, sharing the same per-trajectory draws.
pub fn run_ensemble_sampled(
    base: &SystemParams,
    pulse: &PulseShape,
    spec: &FluctuationSpec,
    times: &[f64],
) -> Result<Vec<EnsembleStats>, EnsembleError> {
    spec.validate()?;
    let rho0 = initial_state(spec);
    let per_trajectory: Vec<Vec<f64>> = (0..spec.n_trajectories)
        .into_par_iter()
        .map(|index| {
            let mut rng = trajectory_rng(spec.seed, index as u64);
            let params = sample_trajectory(base, spec, &mut rng).apply(base);
            evolve_sampled(&rho0, &params, pulse, StepSize::Default, times)
                .map(|states| states.iter().map(|rho| recapture_probability(rho, spec)).collect())
                .map_err(|source| EnsembleError::Trajectory { index, source })
        })
        .collect::<Result<_, _>>()?;

    Ok((0..times.len())
        .map(|k| {
            let column: Vec<f64> = per_trajectory.iter().map(|row| row[k]).collect();
            EnsembleStats::from_values(&column)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_fwhm(values: &[f64]) -> (f64, f64) {
        let stats_mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - stats_mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        (stats_mean, var.sqrt() * fwhm_per_sigma())
    }

    #[test]
    fn zero_width_draws_reproduce_base() {
        let base = SystemParams::new(255.0, 24.0, 400.0, -36.0);
        let spec = FluctuationSpec::default().without_fluctuations();
        let mut rng = trajectory_rng(7, 3);
        let t = sample_trajectory(&base, &spec, &mut rng);
        assert_eq!(t.apply(&base), base);
    }

    #[test]
    fn red_power_width() {
        let base = SystemParams::new(100.0, 0.0, 400.0, 0.0);
        let spec = FluctuationSpec { red_power_fwhm: 0.025, ..Default::default() };
        let mut rng = trajectory_rng(11, 0);
        let powers: Vec<f64> = (0..100_000)
            .map(|_| (sample_trajectory(&base, &spec, &mut rng).omega_r / 100.0).powi(2))
            .collect();
        let (_, fwhm) = sample_fwhm(&powers);
        assert!((fwhm / 0.025 - 1.0).abs() < 0.02, "fwhm {fwhm}");
    }

    #[test]
    fn detuning_jitter_width() {
        let base = SystemParams::new(100.0, 10.0, 400.0, 0.0);
        let spec = FluctuationSpec::with_detuning_fwhm(6.0);
        let mut rng = trajectory_rng(5, 0);
        let deltas: Vec<f64> = (0..100_000).map(|_| sample_trajectory(&base, &spec, &mut rng).delta_small).collect();
        let (mean, fwhm) = sample_fwhm(&deltas);
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((fwhm / 6.0 - 1.0).abs() < 0.02, "fwhm {fwhm}");
    }

    #[test]
    fn negative_power_draws_clamp_to_zero() {
        let base = SystemParams::new(100.0, 50.0, 400.0, 0.0);
        let spec = FluctuationSpec { red_power_fwhm: 5.0, blue_power_fwhm: 5.0, ..Default::default() };
        let mut rng = trajectory_rng(1, 1);
        for _ in 0..1000 {
            let t = sample_trajectory(&base, &spec, &mut rng);
            assert!(t.omega_r >= 0.0 && t.omega_b >= 0.0);
        }
    }

    #[test]
    fn streams_differ_by_index_and_seed() {
        let draw = |seed, idx| trajectory_rng(seed, idx).random::<u64>();
        assert_ne!(draw(1, 0), draw(1, 1));
        assert_ne!(draw(1, 0), draw(2, 0));
        assert_eq!(draw(3, 9), draw(3, 9));
    }

    #[test]
    fn initial_states() {
        let pure = initial_state(&FluctuationSpec { pumping_efficiency: 1.0, ..Default::default() });
        assert_eq!(pure, DensityMatrix::pure(Level::Up));
        let mixed = initial_state(&FluctuationSpec::default());
        assert_eq!(mixed.population(Level::Up), 0.95);
        assert!((mixed.population(Level::G) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unpumped_atom_is_dark() {
        let spec = FluctuationSpec { pumping_efficiency: 0.0, ..FluctuationSpec::default().without_fluctuations() };
        let rho0 = initial_state(&spec);
        assert_eq!(rho0, DensityMatrix::pure(Level::G));
        let params = SystemParams::new(255.0, 24.0, 400.0, -36.0);
        let rho = crate::quantum::evolve(&rho0, &params, &PulseShape::rectangle(0.2), StepSize::Default).unwrap();
        assert_eq!(rho.population(Level::R), 0.0);
    }

    #[test]
    fn recapture_mapping() {
        let spec = FluctuationSpec::default();
        let ground = DensityMatrix::pure(Level::Up);
        assert_eq!(recapture_probability(&ground, &spec), 0.98);
        assert_eq!(recapture_probability(&DensityMatrix::pure(Level::R), &spec), 0.0);
        let rho = DensityMatrix::diagonal([0.0, 0.0, 0.2, 0.0, 0.8]).unwrap();
        assert!((recapture_probability(&rho, &spec) - 0.196).abs() < 1e-12);
    }

    #[test]
    fn noiseless_ensemble_matches_single_run() {
        let base = SystemParams::new(255.0, 24.0, 400.0, -36.0);
        let pulse = PulseShape::rectangle(0.05);
        let spec = FluctuationSpec { n_trajectories: 100, ..FluctuationSpec::default().without_fluctuations() };
        let stats = run_ensemble(&base, &pulse, &spec).unwrap();
        let single = crate::quantum::evolve(&initial_state(&spec), &base, &pulse, StepSize::Default).unwrap();
        assert_eq!(stats.mean, recapture_probability(&single, &spec));
        assert_eq!(stats.std_error, 0.0);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = FluctuationSpec { n_trajectories: 0, ..Default::default() };
        assert!(matches!(spec.validate(), Err(EnsembleError::InvalidSpec(_))));
        let spec = FluctuationSpec { pumping_efficiency: 1.5, ..Default::default() };
        assert!(spec.validate().is_err());
        let spec = FluctuationSpec { detuning_fwhm: -1.0, ..Default::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn stats_of_constant_values() {
        let s = EnsembleStats::from_values(&[0.5; 37]);
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.std_error, 0.0);
        assert_eq!(EnsembleStats::from_values(&[0.25]).std_error, 0.0);
    }
}
