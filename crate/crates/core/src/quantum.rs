//! Five-level master-equation model of two-photon Rydberg excitation.
//!
//! The basis is `{|↓⟩, |g⟩, |↑⟩, |p⟩, |r⟩}` in that order. Frequencies in
//! [`SystemParams`] are ordinary frequencies `ν = ω/2π` in MHz and times are
//! in µs; the conversion to angular units (rad/µs) happens only inside
//! [`build_hamiltonian`] and [`lindblad_term`].
//!
//! The Hamiltonian is already written in the rotating frame. `ω_HF` is kept
//! on the `|↓⟩` diagonal but is dynamically inert whenever the initial state
//! has no `|↓⟩` coherences, because decay only ever feeds `|↓⟩` populations.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Matrix5, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// 5×5 complex matrix used for operators and density matrices.
pub type Mat5 = Matrix5<Complex64>;

/// Number of basis states.
pub const DIM: usize = 5;

/// Tolerance on `|Tr ρ − 1|` beyond which an integration is aborted.
pub const TRACE_ABORT_TOL: f64 = 1e-6;

/// Population excursion outside `[0, 1]` beyond which an integration is
/// aborted.
pub const POPULATION_ABORT_TOL: f64 = 1e-3;

/// Upper bound on the default RK4 step, µs.
pub const MAX_DEFAULT_STEP_US: f64 = 1e-4;

/// Samples per fastest period used by the default step.
pub const SAMPLES_PER_PERIOD: f64 = 40.0;

/// Maximum number of step halvings attempted by [`StepSize::Auto`].
pub const MAX_HALVINGS: u32 = 12;

/// Final `ρ_rr` change below which auto-step refinement stops.
pub const AUTO_STEP_TOL: f64 = 1e-8;

/// Basis states, in matrix index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    /// `|F=1, m_F=1⟩` ground hyperfine state.
    Down = 0,
    /// `|F=2, m_F=1⟩`, the reservoir for unpumped population.
    G = 1,
    /// `|F=2, m_F=2⟩`, the optically pumped ground state.
    Up = 2,
    /// `|5p_{1/2}, F=2, m_F=2⟩` intermediate state.
    P = 3,
    /// Rydberg state.
    R = 4,
}

impl Level {
    pub const ALL: [Level; DIM] = [Level::Down, Level::G, Level::Up, Level::P, Level::R];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("auto step did not converge after {halvings} halvings (last rho_rr change {last_change:e})")]
    NonConvergence { halvings: u32, last_change: f64 },
    #[error("{detail} at t = {time} us; step {step} us is too coarse")]
    InvariantViolation { time: f64, detail: String, step: f64 },
}

/// A validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Mat5);

impl DensityMatrix {
    /// Hermiticity tolerance used when validating user-supplied matrices.
    pub const HERMITIAN_TOL: f64 = 1e-12;
    /// Trace tolerance used when validating user-supplied matrices.
    pub const TRACE_TOL: f64 = 1e-9;
    /// Lowest eigenvalue accepted as "positive semidefinite".
    pub const PSD_TOL: f64 = -1e-8;

    /// The pure state `|l⟩⟨l|`.
    pub fn pure(level: Level) -> Self {
        let mut m = Mat5::zeros();
        m[(level.index(), level.index())] = Complex64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// A diagonal (classical mixture) state with the given populations.
    pub fn diagonal(populations: [f64; DIM]) -> Result<Self, DynamicsError> {
        let mut m = Mat5::zeros();
        for (i, p) in populations.iter().enumerate() {
            m[(i, i)] = Complex64::new(*p, 0.0);
        }
        Self::from_matrix(m)
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(m: Mat5) -> Result<Self, DynamicsError> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynamicsError::InvalidInput("density matrix has non-finite entries".into()));
        }
        let rho = DensityMatrix(m);
        let herm = rho.hermiticity_error();
        if herm > Self::HERMITIAN_TOL {
            return Err(DynamicsError::InvalidInput(format!(
                "density matrix is not Hermitian (max |rho - rho^dag| = {herm:e})"
            )));
        }
        let trace = rho.trace();
        if (trace - 1.0).abs() > Self::TRACE_TOL {
            return Err(DynamicsError::InvalidInput(format!("density matrix trace is {trace}")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < Self::PSD_TOL {
            return Err(DynamicsError::InvalidInput(format!(
                "density matrix is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(rho)
    }

    pub fn matrix(&self) -> &Mat5 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat5 {
        self.0
    }

    #[inline]
    pub fn element(&self, row: Level, col: Level) -> Complex64 {
        self.0[(row.index(), col.index())]
    }

    #[inline]
    pub fn population(&self, level: Level) -> f64 {
        self.0[(level.index(), level.index())].re
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Largest entry of `|ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = hermitian_part(&self.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    /// True if any coherence involving `|↓⟩` is nonzero.
    pub fn has_down_coherences(&self) -> bool {
        let d = Level::Down.index();
        (0..DIM).any(|j| j != d && (self.0[(d, j)].norm() > 0.0 || self.0[(j, d)].norm() > 0.0))
    }
}

#[inline]
fn hermitian_part(m: &Mat5) -> Mat5 {
    (m + m.adjoint()).scale(0.5)
}

/// Hamiltonian and Liouvillian scalars. All values are `ω/2π` in MHz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Red (795 nm) Rabi frequency `Ω_R`.
    pub omega_r: f64,
    /// Blue (475 nm) Rabi frequency `Ω_B`.
    pub omega_b: f64,
    /// Intermediate-state detuning `Δ`.
    pub delta_big: f64,
    /// Two-photon detuning `δ`.
    pub delta_small: f64,
    /// Intermediate-state decay rate `Γ`.
    pub gamma_big: f64,
    /// Rydberg decay rate `γ`.
    pub gamma_small: f64,
    /// Ground hyperfine splitting `ω_HF`.
    pub omega_hf: f64,
}

impl SystemParams {
    pub const DEFAULT_GAMMA_BIG: f64 = 5.75;
    pub const DEFAULT_GAMMA_SMALL: f64 = 0.0048;
    pub const DEFAULT_OMEGA_HF: f64 = 6834.0;

    /// Drive parameters with the default decay rates and hyperfine splitting.
    pub fn new(omega_r: f64, omega_b: f64, delta_big: f64, delta_small: f64) -> Self {
        SystemParams { omega_r, omega_b, delta_big, delta_small, ..Default::default() }
    }

    /// Same drives with both decay rates switched off.
    pub fn without_decay(self) -> Self {
        SystemParams { gamma_big: 0.0, gamma_small: 0.0, ..self }
    }

    pub fn with_delta_small(self, delta_small: f64) -> Self {
        SystemParams { delta_small, ..self }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fields = [
            ("omega_R", self.omega_r),
            ("omega_B", self.omega_b),
            ("delta_big", self.delta_big),
            ("delta_small", self.delta_small),
            ("gamma_big", self.gamma_big),
            ("gamma_small", self.gamma_small),
            ("omega_HF", self.omega_hf),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(DynamicsError::InvalidInput(format!("{name} is not finite ({v})")));
        }
        for (name, v) in &fields[..2] {
            if *v < 0.0 {
                return Err(DynamicsError::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in &fields[4..6] {
            if *v < 0.0 {
                return Err(DynamicsError::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            omega_r: 0.0,
            omega_b: 0.0,
            delta_big: 0.0,
            delta_small: 0.0,
            gamma_big: Self::DEFAULT_GAMMA_BIG,
            gamma_small: Self::DEFAULT_GAMMA_SMALL,
            omega_hf: Self::DEFAULT_OMEGA_HF,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Envelope {
    Rectangle,
    Trapezoid,
}

/// Red-laser pulse. The blue laser is on for the whole window; only `Ω_R`
/// is multiplied by the envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseShape {
    /// Pulse duration `T`, µs.
    pub duration: f64,
    /// Edge ramp length for [`Envelope::Trapezoid`], µs.
    pub rise_time: f64,
    pub envelope: Envelope,
}

impl PulseShape {
    pub fn rectangle(duration: f64) -> Self {
        PulseShape { duration, rise_time: 0.0, envelope: Envelope::Rectangle }
    }

    pub fn trapezoid(duration: f64, rise_time: f64) -> Self {
        PulseShape { duration, rise_time, envelope: Envelope::Trapezoid }
    }

    pub fn with_duration(self, duration: f64) -> Self {
        PulseShape { duration, ..self }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(DynamicsError::InvalidInput(format!(
                "pulse duration must be >= 0, got {}",
                self.duration
            )));
        }
        if self.envelope == Envelope::Trapezoid
            && (!self.rise_time.is_finite() || self.rise_time < 0.0 || self.rise_time > self.duration / 2.0)
        {
            return Err(DynamicsError::InvalidInput(format!(
                "rise time {} must lie in [0, T/2] for T = {}",
                self.rise_time, self.duration
            )));
        }
        Ok(())
    }

    /// Envelope value in `[0, 1]` at time `t` (µs).
    pub fn envelope_at(&self, t: f64) -> f64 {
        let total = self.duration;
        if !(0.0..=total).contains(&t) {
            return 0.0;
        }
        match self.envelope {
            Envelope::Rectangle => 1.0,
            Envelope::Trapezoid => {
                let rise = self.rise_time;
                if rise <= 0.0 {
                    1.0
                } else {
                    (t / rise).min((total - t) / rise).clamp(0.0, 1.0)
                }
            }
        }
    }
}

/// `H/ħ` in rad/µs for a given red envelope value.
///
/// Diagonal `(−ω_HF, 0, 0, −Δ, −δ)`, couplings `Ω_R/2` between `|↑⟩,|p⟩`
/// (scaled by `envelope_value`) and `Ω_B/2` between `|p⟩,|r⟩`.
pub fn build_hamiltonian(params: &SystemParams, envelope_value: f64) -> Mat5 {
    let mut h = Mat5::zeros();
    let re = |v: f64| Complex64::new(TAU * v, 0.0);
    let (d, u, p, r) = (Level::Down.index(), Level::Up.index(), Level::P.index(), Level::R.index());
    h[(d, d)] = re(-params.omega_hf);
    h[(p, p)] = re(-params.delta_big);
    h[(r, r)] = re(-params.delta_small);
    let red = re(envelope_value * params.omega_r / 2.0);
    let blue = re(params.omega_b / 2.0);
    h[(u, p)] = red;
    h[(p, u)] = red;
    h[(p, r)] = blue;
    h[(r, p)] = blue;
    h
}

/// Dissipator in 1/µs: decay of `|p⟩` to `|↓⟩, |g⟩, |↑⟩` with branching
/// 1/2, 1/6, 1/3 at rate `Γ`, and decay of `|r⟩` into `|p⟩` at rate `γ`.
pub fn lindblad_term(rho: &Mat5, params: &SystemParams) -> Mat5 {
    let big = TAU * params.gamma_big;
    let small = TAU * params.gamma_small;
    let (d, g, u, p, r) = (0, 1, 2, 3, 4);
    let rpp = rho[(p, p)];
    let rrr = rho[(r, r)];

    let mut l = Mat5::zeros();
    l[(d, d)] = rpp * (big / 2.0);
    l[(g, g)] = rpp * (big / 6.0);
    l[(u, u)] = rpp * (big / 3.0);
    l[(p, p)] = rrr * small - rpp * big;
    l[(r, r)] = -rrr * small;
    for i in [d, g, u] {
        l[(i, p)] = -rho[(i, p)] * (big / 2.0);
        l[(p, i)] = -rho[(p, i)] * (big / 2.0);
        l[(i, r)] = -rho[(i, r)] * (small / 2.0);
        l[(r, i)] = -rho[(r, i)] * (small / 2.0);
    }
    l[(p, r)] = -rho[(p, r)] * ((big + small) / 2.0);
    l[(r, p)] = -rho[(r, p)] * ((big + small) / 2.0);
    l
}

/// `ρ̇ = −i[H, ρ] + 𝓛(ρ)` with `H` already in rad/µs.
#[inline]
pub fn master_rhs(h: &Mat5, rho: &Mat5, params: &SystemParams) -> Mat5 {
    let hr = h * rho;
    let comm = hr - hr.adjoint(); // Hρ − ρH for Hermitian H and ρ
    comm * Complex64::new(0.0, -1.0) + lindblad_term(rho, params)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `1/(40·f_max)` µs, capped at [`MAX_DEFAULT_STEP_US`].
    Default,
    /// Fixed step in µs (the last step of each interval is shortened to land
    /// on the sample time).
    Fixed(f64),
    /// Start at the default step and halve until the final `ρ_rr` is stable
    /// to [`AUTO_STEP_TOL`].
    Auto,
}

/// Largest frequency (MHz) that the default step has to resolve.
///
/// The maximum of `|Δ|, Ω_R, Ω_B, |δ|, Γ` and the spread of the dressed
/// eigenvalues of the driven `{|↑⟩, |p⟩, |r⟩}` block, plus `ω_HF` when `ρ0`
/// has `|↓⟩` coherences.
pub fn fastest_frequency(params: &SystemParams, rho0: &DensityMatrix) -> f64 {
    let block = Matrix3::new(
        0.0,
        params.omega_r / 2.0,
        0.0,
        params.omega_r / 2.0,
        -params.delta_big,
        params.omega_b / 2.0,
        0.0,
        params.omega_b / 2.0,
        -params.delta_small,
    );
    let dressed = SymmetricEigen::new(block).eigenvalues;
    let mut f = [
        params.delta_big.abs(),
        params.omega_r,
        params.omega_b,
        params.delta_small.abs(),
        params.gamma_big,
        dressed.max() - dressed.min(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if rho0.has_down_coherences() {
        f = f.max(params.omega_hf.abs());
    }
    f
}

pub fn default_step(params: &SystemParams, rho0: &DensityMatrix) -> f64 {
    let f_max = fastest_frequency(params, rho0);
    if f_max > 0.0 {
        (1.0 / (SAMPLES_PER_PERIOD * f_max)).min(MAX_DEFAULT_STEP_US)
    } else {
        MAX_DEFAULT_STEP_US
    }
}

/// Integrates the master equation from `t = 0` to `t = T`.
pub fn evolve(
    rho0: &DensityMatrix,
    params: &SystemParams,
    pulse: &PulseShape,
    step: StepSize,
) -> Result<DensityMatrix, DynamicsError> {
    let mut out = evolve_sampled(rho0, params, pulse, step, &[pulse.duration])?;
    Ok(out.pop().expect("one sample requested"))
}

/// Integrates through the pulse and returns `ρ(t_k)` at each requested time.
///
/// `times` must be non-decreasing and lie in `[0, T]`.
pub fn evolve_sampled(
    rho0: &DensityMatrix,
    params: &SystemParams,
    pulse: &PulseShape,
    step: StepSize,
    times: &[f64],
) -> Result<Vec<DensityMatrix>, DynamicsError> {
    params.validate()?;
    pulse.validate()?;
    if let Some(t) = times.iter().find(|t| !(0.0..=pulse.duration).contains(*t)) {
        return Err(DynamicsError::InvalidInput(format!(
            "sample time {t} outside [0, {}]",
            pulse.duration
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::InvalidInput("sample times must be non-decreasing".into()));
    }

    match step {
        StepSize::Fixed(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(DynamicsError::InvalidInput(format!("step must be > 0, got {h}")));
            }
            integrate(rho0, params, pulse, h, times)
        }
        StepSize::Default => integrate(rho0, params, pulse, default_step(params, rho0), times),
        StepSize::Auto => {
            let mut h = default_step(params, rho0);
            let mut prev = integrate(rho0, params, pulse, h, times)?;
            let mut last_change = f64::INFINITY;
            for _ in 0..MAX_HALVINGS {
                h /= 2.0;
                let next = integrate(rho0, params, pulse, h, times)?;
                last_change = prev
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a.population(Level::R) - b.population(Level::R)).abs())
                    .fold(0.0, f64::max);
                if last_change < AUTO_STEP_TOL {
                    return Ok(next);
                }
                prev = next;
            }
            Err(DynamicsError::NonConvergence { halvings: MAX_HALVINGS, last_change })
        }
    }
}

fn integrate(
    rho0: &DensityMatrix,
    params: &SystemParams,
    pulse: &PulseShape,
    h_max: f64,
    times: &[f64],
) -> Result<Vec<DensityMatrix>, DynamicsError> {
    let mut rho = rho0.0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());

    // A rectangle pulse keeps H constant over the whole window.
    let constant_h = match pulse.envelope {
        Envelope::Rectangle => Some(build_hamiltonian(params, 1.0)),
        Envelope::Trapezoid if pulse.rise_time <= 0.0 => Some(build_hamiltonian(params, 1.0)),
        Envelope::Trapezoid => None,
    };

    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / h_max - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                let t0 = t + k as f64 * h;
                rho = match &constant_h {
                    Some(ham) => rk4_constant(ham, &rho, params, h),
                    None => rk4_pulsed(pulse, &rho, params, t0, h),
                };
                rho = hermitian_part(&rho);
                if let Some(detail) = step_violation(&rho) {
                    return Err(DynamicsError::InvariantViolation { time: t0 + h, detail, step: h });
                }
            }
            t = target;
        }
        out.push(DensityMatrix(rho));
    }
    Ok(out)
}

/// Trace drift or populations leaving `[0, 1]` beyond [`TRACE_ABORT_TOL`].
/// RK4 conserves the trace of a traceless generator even when unstable, so
/// the population bound is what catches a runaway step.
fn step_violation(rho: &Mat5) -> Option<String> {
    let trace = rho.trace().re;
    if !trace.is_finite() || (trace - 1.0).abs() > TRACE_ABORT_TOL {
        return Some(format!("trace drifted to {trace}"));
    }
    (0..DIM).find_map(|i| {
        let pop = rho[(i, i)].re;
        (!(-POPULATION_ABORT_TOL..=1.0 + POPULATION_ABORT_TOL).contains(&pop))
            .then(|| format!("population of level {i} left [0, 1] ({pop})"))
    })
}

#[inline]
fn rk4_constant(h_op: &Mat5, rho: &Mat5, params: &SystemParams, dt: f64) -> Mat5 {
    let k1 = master_rhs(h_op, rho, params);
    let k2 = master_rhs(h_op, &(rho + k1.scale(dt / 2.0)), params);
    let k3 = master_rhs(h_op, &(rho + k2.scale(dt / 2.0)), params);
    let k4 = master_rhs(h_op, &(rho + k3.scale(dt)), params);
    rho + (k1 + (k2 + k3).scale(2.0) + k4).scale(dt / 6.0)
}

fn rk4_pulsed(pulse: &PulseShape, rho: &Mat5, params: &SystemParams, t: f64, dt: f64) -> Mat5 {
    let h0 = build_hamiltonian(params, pulse.envelope_at(t));
    let hm = build_hamiltonian(params, pulse.envelope_at(t + dt / 2.0));
    let h1 = build_hamiltonian(params, pulse.envelope_at(t + dt));
    let k1 = master_rhs(&h0, rho, params);
    let k2 = master_rhs(&hm, &(rho + k1.scale(dt / 2.0)), params);
    let k3 = master_rhs(&hm, &(rho + k2.scale(dt / 2.0)), params);
    let k4 = master_rhs(&h1, &(rho + k3.scale(dt)), params);
    rho + (k1 + (k2 + k3).scale(2.0) + k4).scale(dt / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn set_a() -> SystemParams {
        SystemParams::new(255.0, 24.0, 400.0, 0.0)
    }

    #[test]
    fn hamiltonian_all_couplings_off() {
        let h = build_hamiltonian(&SystemParams::default(), 1.0);
        for i in 0..DIM {
            for j in 0..DIM {
                let expected = if i == 0 && j == 0 { -TAU * 6834.0 } else { 0.0 };
                assert_eq!(h[(i, j)], Complex64::new(expected, 0.0), "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn hamiltonian_for_drive_set_a() {
        let h = build_hamiltonian(&set_a(), 1.0);
        let (u, p, r) = (Level::Up.index(), Level::P.index(), Level::R.index());
        assert_relative_eq!(h[(u, p)].re / TAU, 127.5, epsilon = 1e-12);
        assert_relative_eq!(h[(p, r)].re / TAU, 12.0, epsilon = 1e-12);
        assert_relative_eq!(h[(p, p)].re / TAU, -400.0, epsilon = 1e-12);
        assert_eq!(h, h.transpose());
        assert!(h.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn envelope_scales_red_only() {
        let h = build_hamiltonian(&set_a(), 0.5);
        assert_relative_eq!(h[(2, 3)].re / TAU, 63.75, epsilon = 1e-12);
        assert_relative_eq!(h[(3, 4)].re / TAU, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn lindblad_vanishes_without_excited_population() {
        let rho = DensityMatrix::pure(Level::Up);
        assert_eq!(lindblad_term(rho.matrix(), &set_a()), Mat5::zeros());
    }

    #[test]
    fn lindblad_branching_from_p() {
        let rho = DensityMatrix::pure(Level::P);
        let params = SystemParams::default();
        let l = lindblad_term(rho.matrix(), &params);
        let g = TAU * 5.75;
        let expected = [g / 2.0, g / 6.0, g / 3.0, -g, 0.0];
        for (i, e) in expected.iter().enumerate() {
            assert_relative_eq!(l[(i, i)].re, *e, epsilon = 1e-12);
        }
        assert!(l.trace().norm() < 1e-12);
    }

    #[test]
    fn lindblad_rydberg_decay_feeds_p() {
        let params = SystemParams::default();
        let l = lindblad_term(DensityMatrix::pure(Level::R).matrix(), &params);
        let gamma = TAU * 0.0048;
        for i in 0..DIM {
            for j in 0..DIM {
                let expected = match (i, j) {
                    (3, 3) => gamma,
                    (4, 4) => -gamma,
                    _ => 0.0,
                };
                assert_relative_eq!(l[(i, j)].re, expected, epsilon = 1e-15);
                assert_eq!(l[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn diagonal_state_is_stationary_without_drive_or_decay() {
        let params = SystemParams { gamma_big: 0.0, gamma_small: 0.0, ..Default::default() };
        let rho0 = DensityMatrix::diagonal([0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let rho = evolve(&rho0, &params, &PulseShape::rectangle(1.0), StepSize::Default).unwrap();
        assert_eq!(rho, rho0);
    }

    #[test]
    fn zero_duration_returns_initial_state() {
        let rho0 = DensityMatrix::pure(Level::Up);
        let rho = evolve(&rho0, &set_a(), &PulseShape::rectangle(0.0), StepSize::Default).unwrap();
        assert_eq!(rho, rho0);
    }

    #[test]
    fn intermediate_decay_matches_exponential() {
        let params = SystemParams::default();
        let rho = evolve(
            &DensityMatrix::pure(Level::P),
            &params,
            &PulseShape::rectangle(0.1),
            StepSize::Default,
        )
        .unwrap();
        let expected = (-TAU * 5.75 * 0.1).exp();
        assert!((rho.population(Level::P) - expected).abs() < 1e-4);
        assert_relative_eq!(expected, 0.0270, epsilon = 1e-4);
    }

    #[test]
    fn trapezoid_envelope_shape() {
        let pulse = PulseShape::trapezoid(0.1, 0.01);
        assert_eq!(pulse.envelope_at(0.0), 0.0);
        assert_relative_eq!(pulse.envelope_at(0.005), 0.5, epsilon = 1e-12);
        assert_eq!(pulse.envelope_at(0.05), 1.0);
        assert_relative_eq!(pulse.envelope_at(0.095), 0.5, epsilon = 1e-9);
        assert_eq!(pulse.envelope_at(0.2), 0.0);
        assert!(PulseShape::trapezoid(0.01, 0.006).validate().is_err());
    }

    #[test]
    fn rejects_invalid_inputs() {
        let rho0 = DensityMatrix::pure(Level::Up);
        let bad = SystemParams { omega_r: -1.0, ..set_a() };
        assert!(matches!(
            evolve(&rho0, &bad, &PulseShape::rectangle(0.1), StepSize::Default),
            Err(DynamicsError::InvalidInput(_))
        ));
        assert!(DensityMatrix::diagonal([0.5, 0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(DensityMatrix::diagonal([1.5, -0.5, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn coarse_step_trips_trace_guard() {
        let rho0 = DensityMatrix::pure(Level::P);
        let params = SystemParams { gamma_big: 500.0, ..SystemParams::default() };
        let err = evolve(&rho0, &params, &PulseShape::rectangle(0.01), StepSize::Fixed(0.01)).unwrap_err();
        assert!(matches!(err, DynamicsError::InvariantViolation { .. }), "{err:?}");
    }

    #[test]
    fn auto_step_converges() {
        let rho0 = DensityMatrix::pure(Level::Up);
        let rho = evolve(&rho0, &set_a(), &PulseShape::rectangle(0.05), StepSize::Auto).unwrap();
        let reference = evolve(&rho0, &set_a(), &PulseShape::rectangle(0.05), StepSize::Fixed(1e-6)).unwrap();
        assert!((rho.population(Level::R) - reference.population(Level::R)).abs() < 1e-7);
    }

    #[test]
    fn down_coherences_bring_hyperfine_into_step() {
        let mut m = Mat5::zeros();
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(2, 2)] = Complex64::new(0.5, 0.0);
        m[(0, 2)] = Complex64::new(0.5, 0.0);
        m[(2, 0)] = Complex64::new(0.5, 0.0);
        let rho = DensityMatrix::from_matrix(m).unwrap();
        assert_eq!(fastest_frequency(&set_a(), &rho), 6834.0);
        let up = DensityMatrix::pure(Level::Up);
        let strong = fastest_frequency(&set_a(), &up);
        assert!(strong > (400.0f64.powi(2) + 255.0f64.powi(2)).sqrt() && strong < 476.0, "{strong}");
        let weak = fastest_frequency(&SystemParams::new(10.0, 10.0, 400.0, 0.0), &up);
        assert!((weak - 400.0).abs() < 0.5, "{weak}");
    }
}
