//! Simulation of coherent two-photon Rydberg excitation of a single trapped
//! atom.
//!
//! The [`quantum`] module integrates a five-level Lindblad master equation.
//! [`noise`] averages it over quasi-static laser fluctuations with
//! reproducible per-trajectory random streams, and [`experiments`] builds
//! Rabi scans and spectra on top. Measured or simulated curves are analysed
//! with [`fitting`], and [`calculators`] holds closed-form estimates. The
//! `rydberg` binary wraps all of it through [`cli`] and [`config`].
//!
//! Frequencies are `ν = ω/2π` in MHz and times are in µs.
//!
//! ```
//! use rydberg_excitation::calculators::effective_two_photon;
//! use rydberg_excitation::experiments::pi_pulse;
//! use rydberg_excitation::quantum::SystemParams;
//!
//! let p = SystemParams::new(255.0, 24.0, 400.0, 0.0);
//! let omega_eff = effective_two_photon(p.omega_r, p.omega_b, p.delta_big).unwrap().omega_eff;
//! let pulse = pi_pulse(&p).unwrap();
//! assert!((pulse.duration * 2.0 * omega_eff - 1.0).abs() < 1e-12);
//! ```

pub mod calculators;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod fitting;
pub mod noise;
pub mod quantum;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/master-equation.md")]
    mod master_equation {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/calculators.md")]
    mod calculators {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
