//! Run configuration, read from TOML. Unknown keys are rejected and every
//! field is validated before any computation starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use warpflow::flow::{Domain, Representation, MIN_SEGMENTS};
use warpflow::{Interval, WarpFunction, WarpKind};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub warp: WarpSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub blowup: BlowupSection,
    #[serde(default)]
    pub transform: TransformSection,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum WarpName {
    SphereSine,
    Sinh,
    Identity,
    Cosh,
    Constant,
    EvenPolynomial,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WarpSection {
    pub kind: WarpName,
    pub interval: [f64; 2],
    /// Value of the constant warp.
    pub value: Option<f64>,
    /// Coefficients of 1, ρ², ρ⁴, … for the even polynomial warp.
    pub coefficients: Option<Vec<f64>>,
    /// Base point ρ̄ of the γ-transform.
    pub base: Option<f64>,
    #[serde(default = "default_transform_tol")]
    pub tolerance: f64,
}

fn default_transform_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReprName {
    #[default]
    Rho,
    Gamma,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum DomainName {
    #[default]
    Circle,
    Arc,
    Colatitude,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub representation: ReprName,
    pub domain: DomainName,
    /// Arc parameter k; the arc is [0, π/k].
    pub k: u64,
    pub n: u32,
    pub grid_n: usize,
    pub t_end: f64,
    pub dump_times: Vec<f64>,
    pub g_max: f64,
    pub dt_min: f64,
    pub step_tol: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            representation: ReprName::Rho,
            domain: DomainName::Circle,
            k: 1,
            n: 1,
            grid_n: 256,
            t_end: 1.0,
            dump_times: Vec::new(),
            g_max: 1e3,
            dt_min: 1e-14,
            step_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Constant,
    Fourier,
    Random,
    File,
    /// The blow-up initial data; parameters come from the blowup section.
    Blowup,
}

/// Initial ρ (γ for `blowup`).
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub mean: f64,
    /// `[mode, amplitude]` pairs of cos(mode·θ).
    pub cos: Vec<[f64; 2]>,
    /// `[mode, amplitude]` pairs of sin(mode·θ).
    pub sin: Vec<[f64; 2]>,
    /// Random profiles: amplitude of the first mode; mode m is scaled by 1/m².
    pub amplitude: f64,
    pub modes: u32,
    /// Two-column CSV `theta,value`.
    pub path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: InitialKind::Constant,
            mean: 0.0,
            cos: Vec::new(),
            sin: Vec::new(),
            amplitude: 0.0,
            modes: 4,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BarrierSpec {
    Mode(String),
    Explicit(ExplicitBarrier),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExplicitBarrier {
    pub delta: f64,
    pub lambda_bar: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Barrier {
    Off,
    AutoFit,
    Explicit(ExplicitBarrier),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Record every this many accepted steps.
    pub every: usize,
    /// Window of the decay fit; the second half of the run when absent.
    pub fit_window: Option<[f64; 2]>,
    pub barrier: BarrierSpec,
    /// Oscillation below which a completed run counts as converged.
    pub converged_osc: f64,
    /// Hölder exponent reported by the modulus command besides 1/2.
    pub sigma: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            every: 100,
            fit_window: None,
            barrier: BarrierSpec::Mode("off".into()),
            converged_osc: 1e-3,
            sigma: 0.25,
        }
    }
}

impl DiagnosticsSection {
    pub fn barrier(&self) -> Result<Barrier, CliError> {
        match &self.barrier {
            BarrierSpec::Mode(m) if m == "off" => Ok(Barrier::Off),
            BarrierSpec::Mode(m) if m == "auto-fit" => Ok(Barrier::AutoFit),
            BarrierSpec::Mode(m) => Err(CliError::Config(format!(
                "diagnostics.barrier must be \"off\", \"auto-fit\" or a table, got \"{m}\""
            ))),
            BarrierSpec::Explicit(b) => Ok(Barrier::Explicit(*b)),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupSection {
    pub sigma: f64,
    pub lambda: f64,
    pub g_max: f64,
    pub levels: Vec<usize>,
    pub tau0: f64,
    pub beta: f64,
    pub k_max: u64,
    pub extension_nodes: u64,
}

impl Default for BlowupSection {
    fn default() -> Self {
        BlowupSection {
            sigma: 0.25,
            lambda: 1.0,
            g_max: 1e3,
            levels: vec![256, 512, 1024],
            tau0: 1.0,
            beta: 0.5,
            k_max: 1 << 50,
            extension_nodes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSection {
    pub samples: usize,
}

impl Default for TransformSection {
    fn default() -> Self {
        TransformSection { samples: 1001 }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let w = &self.warp;
        let [lo, hi] = w.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("warp.interval [{lo}, {hi}] is not a proper interval"));
        }
        match w.kind {
            WarpName::Constant if w.value.is_none() => return bad("warp.value is required for the constant warp"),
            WarpName::EvenPolynomial if w.coefficients.as_ref().is_none_or(|c| c.is_empty()) => {
                return bad("warp.coefficients is required for the even-polynomial warp")
            }
            _ => {}
        }
        if w.value.is_some() && w.kind != WarpName::Constant {
            return bad("warp.value only applies to the constant warp");
        }
        if w.coefficients.is_some() && w.kind != WarpName::EvenPolynomial {
            return bad("warp.coefficients only applies to the even-polynomial warp");
        }
        if let Some(b) = w.base {
            if !(b >= lo && b <= hi) {
                return bad(format!("warp.base = {b} lies outside the interval"));
            }
        }
        if !(w.tolerance > 0.0) {
            return bad("warp.tolerance must be positive");
        }

        let f = &self.flow;
        if f.grid_n < MIN_SEGMENTS {
            return bad(format!("flow.grid_n must be at least {MIN_SEGMENTS}"));
        }
        if f.n == 0 {
            return bad("flow.n must be at least 1");
        }
        if f.n > 1 && f.domain != DomainName::Colatitude {
            return bad("flow.n > 1 needs the colatitude domain");
        }
        if f.k == 0 {
            return bad("flow.k must be positive");
        }
        if !(f.t_end > 0.0 && f.t_end.is_finite()) {
            return bad("flow.t_end must be positive");
        }
        if let Some(d) = f.dump_times.iter().find(|d| !(**d >= 0.0 && **d <= f.t_end)) {
            return bad(format!("flow.dump_times entry {d} lies outside [0, t_end]"));
        }
        if !(f.g_max > 0.0 && f.dt_min > 0.0 && f.step_tol > 0.0) {
            return bad("flow.g_max, flow.dt_min and flow.step_tol must be positive");
        }

        let i = &self.initial;
        match i.kind {
            InitialKind::File if i.path.is_none() => return bad("initial.path is required for file profiles"),
            InitialKind::Random if !(i.amplitude >= 0.0) || i.modes == 0 => {
                return bad("random profiles need amplitude ≥ 0 and at least one mode")
            }
            InitialKind::Blowup
                if (f.representation != ReprName::Gamma || f.domain != DomainName::Arc) => {
                    return bad("blow-up initial data need flow.representation = \"gamma\" and flow.domain = \"arc\"");
                }
            _ => {}
        }
        for [m, a] in i.cos.iter().chain(&i.sin) {
            if !(m.fract() == 0.0 && *m >= 0.0 && a.is_finite()) {
                return bad(format!("Fourier mode [{m}, {a}] needs a non-negative integer mode"));
            }
        }

        let d = &self.diagnostics;
        if d.every == 0 {
            return bad("diagnostics.every must be positive");
        }
        if let Some([a, b]) = d.fit_window {
            if !(a < b) {
                return bad("diagnostics.fit_window must be increasing");
            }
        }
        if d.barrier()? != Barrier::Off && f.domain != DomainName::Circle {
            return bad("barrier monitoring needs the circle domain");
        }
        if !(d.converged_osc > 0.0) {
            return bad("diagnostics.converged_osc must be positive");
        }
        if !(d.sigma > 0.0 && d.sigma <= 1.0) {
            return bad("diagnostics.sigma must lie in (0, 1]");
        }

        let b = &self.blowup;
        if !(b.sigma > 0.0 && b.sigma < 0.5) {
            return bad(format!("σ must lie in (0,1/2), got {}", b.sigma));
        }
        if !(b.lambda > 0.0 && b.g_max > 0.0 && b.tau0 > 0.0 && b.beta >= 0.0) {
            return bad("blowup.lambda, blowup.g_max and blowup.tau0 must be positive and blowup.beta non-negative");
        }
        if b.levels.is_empty() || b.levels.iter().any(|&n| n < MIN_SEGMENTS) {
            return bad(format!("blowup.levels must be nonempty with every level at least {MIN_SEGMENTS}"));
        }
        if b.k_max < 4 {
            return bad("blowup.k_max must be at least 4");
        }
        if self.transform.samples < 2 {
            return bad("transform.samples must be at least 2");
        }
        Ok(())
    }

    pub fn warp_function(&self) -> Result<WarpFunction, CliError> {
        let w = &self.warp;
        let kind = match w.kind {
            WarpName::SphereSine => WarpKind::SphereSine,
            WarpName::Sinh => WarpKind::HyperbolicSinh,
            WarpName::Identity => WarpKind::EuclideanIdentity,
            WarpName::Cosh => WarpKind::Cosh,
            WarpName::Constant => WarpKind::Constant(w.value.unwrap_or(1.0)),
            WarpName::EvenPolynomial => WarpKind::EvenPolynomial(w.coefficients.clone().unwrap_or_default()),
        };
        let interval = Interval::new(w.interval[0], w.interval[1])?;
        Ok(WarpFunction::new(kind, interval)?)
    }

    /// ρ̄: the configured value, else the midpoint of I.
    pub fn base(&self) -> f64 {
        let [lo, hi] = self.warp.interval;
        self.warp.base.unwrap_or(0.5 * (lo + hi))
    }

    pub fn domain(&self) -> Domain {
        match self.flow.domain {
            DomainName::Circle => Domain::Circle,
            DomainName::Arc => Domain::Arc { k: self.flow.k },
            DomainName::Colatitude => Domain::Colatitude,
        }
    }

    pub fn representation(&self) -> Representation {
        match self.flow.representation {
            ReprName::Rho => Representation::Rho,
            ReprName::Gamma => Representation::Gamma,
        }
    }
}
