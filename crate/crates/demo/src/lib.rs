//! Browser bindings: evolve a profile, compute its modulus of continuity, and
//! sample the blow-up subsolutions.

use std::sync::Arc;

use wasm_bindgen::prelude::*;
use warpflow::blowup::{subsolution_constants, verify_subsolution, zeta, VerifyGrid};
use warpflow::diagnostics::{min_holder_coeff, modulus_of_continuity, Functionals};
use warpflow::flow::{run_flow, Domain, FlowState, Geometry, Profile, Representation, RunOptions};
use warpflow::{check_condition2, GammaTransform, Interval, WarpFunction, WarpKind};

fn warp(kind: &str, lo: f64, hi: f64) -> Result<WarpFunction, JsError> {
    let kind = match kind {
        "sphere-sine" => WarpKind::SphereSine,
        "sinh" => WarpKind::HyperbolicSinh,
        "identity" => WarpKind::EuclideanIdentity,
        "cosh" => WarpKind::Cosh,
        other => return Err(JsError::new(&format!("unknown warp {other:?}"))),
    };
    Ok(WarpFunction::new(kind, Interval::new(lo, hi)?)?)
}

/// Minimum of φ′² − φφ″ over the interval.
#[wasm_bindgen]
pub fn structure_condition_min(kind: &str, lo: f64, hi: f64) -> Result<f64, JsError> {
    Ok(check_condition2(&warp(kind, lo, hi)?, 2000)?.min_value)
}

#[wasm_bindgen]
pub struct Evolution {
    thetas: Vec<f64>,
    times: Vec<f64>,
    frames: Vec<f64>,
    drift: f64,
    status: String,
}

#[wasm_bindgen]
impl Evolution {
    pub fn thetas(&self) -> Vec<f64> {
        self.thetas.clone()
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// Frames of ρ, concatenated.
    pub fn frames(&self) -> Vec<f64> {
        self.frames.clone()
    }

    /// Relative volume change between the first and last frame.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn status(&self) -> String {
        self.status.clone()
    }
}

/// Evolves ρ₀ = mean + amplitude·cos(mode·θ) on the circle.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    kind: &str,
    lo: f64,
    hi: f64,
    mean: f64,
    amplitude: f64,
    mode: u32,
    segments: usize,
    t_end: f64,
    frame_count: usize,
) -> Result<Evolution, JsError> {
    let w = warp(kind, lo, hi)?;
    let p = Profile::from_fn(Domain::Circle, Representation::Rho, segments, |x| {
        mean + amplitude * (mode as f64 * x).cos()
    })?;
    let thetas = p.thetas();
    let fun = Functionals::new(&w, 1)?;
    let v0 = fun.volume(&p)?;
    let s = FlowState::new(p, 0.0, 1, Geometry::Rho(w))?;
    let frame_count = frame_count.max(2);
    let mut opts = RunOptions::new(t_end);
    opts.dump_times = (0..frame_count).map(|i| t_end * i as f64 / (frame_count - 1) as f64).collect();
    let traj = run_flow(&s, &opts, &mut |_| Ok(()))?;
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for st in &traj.snapshots {
        times.push(st.t());
        frames.extend_from_slice(st.profile().values());
    }
    let v1 = fun.volume(traj.final_state.profile())?;
    Ok(Evolution {
        thetas,
        times,
        frames,
        drift: (v1 - v0) / v0,
        status: traj.termination.describe(),
    })
}

#[wasm_bindgen]
pub struct ModulusTable {
    lags: Vec<f64>,
    omega: Vec<f64>,
    holder_half: f64,
    holder_quarter: f64,
}

#[wasm_bindgen]
impl ModulusTable {
    pub fn lags(&self) -> Vec<f64> {
        self.lags.clone()
    }

    pub fn omega(&self) -> Vec<f64> {
        self.omega.clone()
    }

    pub fn holder_half(&self) -> f64 {
        self.holder_half
    }

    pub fn holder_quarter(&self) -> f64 {
        self.holder_quarter
    }
}

/// Modulus of continuity of samples on a uniform grid of the circle.
#[wasm_bindgen]
pub fn modulus(values: Vec<f64>) -> Result<ModulusTable, JsError> {
    let p = Profile::new(Domain::Circle, Representation::Rho, values)?;
    let omega = modulus_of_continuity(&p);
    Ok(ModulusTable {
        lags: (0..omega.values.len()).map(|l| omega.lag(l)).collect(),
        holder_half: min_holder_coeff(&omega, 0.5)?,
        holder_quarter: min_holder_coeff(&omega, 0.25)?,
        omega: omega.values,
    })
}

#[wasm_bindgen]
pub struct Subsolution {
    thetas: Vec<f64>,
    times: Vec<f64>,
    frames: Vec<f64>,
    tau: f64,
    residual_zeta1: f64,
    residual_zeta2: f64,
    pass: bool,
}

#[wasm_bindgen]
impl Subsolution {
    pub fn thetas(&self) -> Vec<f64> {
        self.thetas.clone()
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// ζ(·, t) for each time, concatenated.
    pub fn frames(&self) -> Vec<f64> {
        self.frames.clone()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn residual_zeta1(&self) -> f64 {
        self.residual_zeta1
    }

    pub fn residual_zeta2(&self) -> f64 {
        self.residual_zeta2
    }

    pub fn pass(&self) -> bool {
        self.pass
    }
}

/// ζ = max(ζ₁, ζ₂) for the cosh warp on [−1, 1] with τ = k^{−5/2}, sampled at
/// fractions of τ, and a coarse check of the subsolution inequality.
#[wasm_bindgen]
pub fn subsolution(sigma: f64, k: u32, samples: usize) -> Result<Subsolution, JsError> {
    let w = warp("cosh", -1.0, 1.0)?;
    let t = Arc::new(GammaTransform::new(&w, 0.0, 1e-12)?);
    let c = subsolution_constants(sigma, 1.0, &t)?;
    let k = u64::from(k.max(1));
    let tau = (k as f64).powf(-2.5);
    let sp = c.params(k, tau);
    let report = verify_subsolution(&sp, &t, VerifyGrid { n_theta: 256, n_t: 64 })?;
    let samples = samples.max(2);
    let h = sp.arc_length() / (samples - 1) as f64;
    let thetas: Vec<f64> = (0..samples).map(|j| (j as f64 * h).min(sp.arc_length())).collect();
    let times: Vec<f64> = [0.0, 0.5, 0.9, 0.99, 0.999].iter().map(|s| s * tau).collect();
    let mut frames = Vec::new();
    for &s in &times {
        for &th in &thetas {
            frames.push(zeta(&sp, th, s)?);
        }
    }
    Ok(Subsolution {
        thetas,
        times,
        frames,
        tau,
        residual_zeta1: report.zeta1.value,
        residual_zeta2: report.zeta2.value,
        pass: report.pass,
    })
}
