//! TOML run configuration for the command-line front end.
//!
//! ```toml
//! [system]
//! omega_R = 255.0
//! omega_B = 24.0
//! delta_big = 400.0
//! delta_small = "resonance"
//!
//! [fluctuations]
//! detuning_fwhm_mhz = 6.0
//! seed = 7
//! ```
//!
//! Every section and key is optional. Unknown keys are rejected.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::experiments::{
    ScanSpec, ScanVariable, RABI_POINTS, RABI_SPAN_US, SPECTRUM_HALF_SPAN_MHZ, SPECTRUM_POINTS, SPECTRUM_PULSE_US,
};
use crate::noise::FluctuationSpec;
use crate::quantum::{Envelope, PulseShape, SystemParams};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub pulse: PulseSection,
    pub fluctuations: FluctuationSection,
    pub scan: ScanSection,
}

/// Two-photon detuning: a number in MHz or the keyword `"resonance"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSetting {
    Value(f64),
    Resonance,
}

impl<'de> Deserialize<'de> for DeltaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DeltaSetting::Value(v)),
            Raw::Int(v) => Ok(DeltaSetting::Value(v as f64)),
            Raw::Word(w) if w == "resonance" => Ok(DeltaSetting::Resonance),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "delta_small must be a number or \"resonance\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    #[serde(rename = "omega_R")]
    pub omega_r: f64,
    #[serde(rename = "omega_B")]
    pub omega_b: f64,
    pub delta_big: f64,
    pub delta_small: DeltaSetting,
    pub gamma_big: f64,
    pub gamma_small: f64,
    #[serde(rename = "omega_HF")]
    pub omega_hf: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::default();
        SystemSection {
            omega_r: p.omega_r,
            omega_b: p.omega_b,
            delta_big: p.delta_big,
            delta_small: DeltaSetting::Resonance,
            gamma_big: p.gamma_big,
            gamma_small: p.gamma_small,
            omega_hf: p.omega_hf,
        }
    }
}

impl SystemSection {
    /// System parameters with `δ` left at zero when it is `"resonance"`.
    pub fn params(&self) -> SystemParams {
        SystemParams {
            omega_r: self.omega_r,
            omega_b: self.omega_b,
            delta_big: self.delta_big,
            delta_small: match self.delta_small {
                DeltaSetting::Value(v) => v,
                DeltaSetting::Resonance => 0.0,
            },
            gamma_big: self.gamma_big,
            gamma_small: self.gamma_small,
            omega_hf: self.omega_hf,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeName {
    Rectangle,
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub duration_ns: f64,
    pub rise_ns: f64,
    pub envelope: EnvelopeName,
}

impl Default for PulseSection {
    fn default() -> Self {
        PulseSection { duration_ns: SPECTRUM_PULSE_US * 1e3, rise_ns: 0.0, envelope: EnvelopeName::Rectangle }
    }
}

impl PulseSection {
    pub fn shape(&self) -> PulseShape {
        let envelope = match self.envelope {
            EnvelopeName::Rectangle => Envelope::Rectangle,
            EnvelopeName::Trapezoid => Envelope::Trapezoid,
        };
        PulseShape { duration: self.duration_ns * 1e-3, rise_time: self.rise_ns * 1e-3, envelope }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluctuationSection {
    pub red_power_fwhm: f64,
    pub blue_power_fwhm: f64,
    pub detuning_fwhm_mhz: f64,
    pub pumping_efficiency: f64,
    pub recapture_factor: f64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl Default for FluctuationSection {
    fn default() -> Self {
        let f = FluctuationSpec::default();
        FluctuationSection {
            red_power_fwhm: f.red_power_fwhm,
            blue_power_fwhm: f.blue_power_fwhm,
            detuning_fwhm_mhz: f.detuning_fwhm,
            pumping_efficiency: f.pumping_efficiency,
            recapture_factor: f.recapture_factor,
            n_trajectories: f.n_trajectories,
            seed: f.seed,
        }
    }
}

impl FluctuationSection {
    pub fn spec(&self) -> FluctuationSpec {
        FluctuationSpec {
            red_power_fwhm: self.red_power_fwhm,
            blue_power_fwhm: self.blue_power_fwhm,
            detuning_fwhm: self.detuning_fwhm_mhz,
            pumping_efficiency: self.pumping_efficiency,
            recapture_factor: self.recapture_factor,
            n_trajectories: self.n_trajectories,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanVariableName {
    Duration,
    Detuning,
}

/// Scan grid. Durations are in ns and detunings are MHz offsets from the
/// resolved `δ`. Unset fields take the defaults of the command.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub variable: Option<ScanVariableName>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_string()))
    }

    /// Config recovered from the `#` header of a CSV written by the CLI.
    pub fn from_csv_header(csv: &str) -> Result<Self, ConfigError> {
        let body: String = csv
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| format!("{}\n", l.strip_prefix("# ").unwrap_or(&l[1..])))
            .collect();
        Self::parse(&body)
    }

    /// Builds the scan for `variable`, filling unset grid fields with that
    /// variable's defaults. `delta_small` is the already-resolved `δ`.
    pub fn scan_spec(&self, variable: ScanVariable, delta_small: f64) -> Result<ScanSpec, ConfigError> {
        let wanted = match variable {
            ScanVariable::Duration => ScanVariableName::Duration,
            ScanVariable::Detuning => ScanVariableName::Detuning,
        };
        if let Some(v) = self.scan.variable {
            if v != wanted {
                return Err(ConfigError(format!(
                    "[scan] variable = \"{}\" does not match this command (expects \"{}\")",
                    variable_name(v),
                    variable_name(wanted)
                )));
            }
        }
        let (lo, hi, points, pulse) = match variable {
            ScanVariable::Duration => {
                let lo = self.scan.lo.unwrap_or(0.0) * 1e-3;
                let hi = self.scan.hi.unwrap_or(RABI_SPAN_US * 1e3) * 1e-3;
                (lo, hi, self.scan.points.unwrap_or(RABI_POINTS), self.pulse.shape().with_duration(hi))
            }
            ScanVariable::Detuning => (
                self.scan.lo.unwrap_or(-SPECTRUM_HALF_SPAN_MHZ),
                self.scan.hi.unwrap_or(SPECTRUM_HALF_SPAN_MHZ),
                self.scan.points.unwrap_or(SPECTRUM_POINTS),
                self.pulse.shape(),
            ),
        };
        let spec = ScanSpec {
            variable,
            lo,
            hi,
            points,
            system: self.system.params().with_delta_small(delta_small),
            pulse,
            fluctuations: self.fluctuations.spec(),
        };
        spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(spec)
    }

    /// Fully resolved config as TOML, every line prefixed with `# `.
    pub fn header(&self, command: &str, delta_small: f64) -> String {
        let s = &self.system;
        let p = &self.pulse;
        let f = &self.fluctuations;
        let mut out = String::new();
        let mut line = |text: String| {
            let _ = writeln!(out, "# {text}");
        };
        line(format!("# rydberg {command}"));
        if s.delta_small == DeltaSetting::Resonance {
            line(format!("# delta_small resolved from \"resonance\" to {delta_small:?} MHz"));
        }
        line("[system]".into());
        line(format!("omega_R = {:?}", s.omega_r));
        line(format!("omega_B = {:?}", s.omega_b));
        line(format!("delta_big = {:?}", s.delta_big));
        line(format!("delta_small = {delta_small:?}"));
        line(format!("gamma_big = {:?}", s.gamma_big));
        line(format!("gamma_small = {:?}", s.gamma_small));
        line(format!("omega_HF = {:?}", s.omega_hf));
        line("[pulse]".into());
        line(format!("duration_ns = {:?}", p.duration_ns));
        line(format!("rise_ns = {:?}", p.rise_ns));
        line(format!(
            "envelope = \"{}\"",
            match p.envelope {
                EnvelopeName::Rectangle => "rectangle",
                EnvelopeName::Trapezoid => "trapezoid",
            }
        ));
        line("[fluctuations]".into());
        line(format!("red_power_fwhm = {:?}", f.red_power_fwhm));
        line(format!("blue_power_fwhm = {:?}", f.blue_power_fwhm));
        line(format!("detuning_fwhm_mhz = {:?}", f.detuning_fwhm_mhz));
        line(format!("pumping_efficiency = {:?}", f.pumping_efficiency));
        line(format!("recapture_factor = {:?}", f.recapture_factor));
        line(format!("n_trajectories = {}", f.n_trajectories));
        line(format!("seed = {}", f.seed));
        line("[scan]".into());
        if let Some(v) = self.scan.variable {
            line(format!("variable = \"{}\"", variable_name(v)));
        }
        for (key, value) in [("lo", self.scan.lo), ("hi", self.scan.hi)] {
            if let Some(v) = value {
                line(format!("{key} = {v:?}"));
            }
        }
        if let Some(n) = self.scan.points {
            line(format!("points = {n}"));
        }
        out
    }
}

fn variable_name(v: ScanVariableName) -> &'static str {
    match v {
        ScanVariableName::Duration => "duration",
        ScanVariableName::Detuning => "detuning",
    }
}
