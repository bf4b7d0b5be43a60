//! Explicit subsolutions and finite-time gradient blow-up on an arc.
//!
//! For a γ-transform whose ψ is even with ψ″(0) > 0, the functions
//! ζ₁ = min(L(θ), L(π/k − θ)) with L(θ) = c₁θ/((τ−t)^p + θ²)^{1/p} and
//! ζ₂ = A(sin kθ − c₂k²t), A = 2^{2/p}(π/k)^{1−2/p}c₁, are subsolutions of the
//! one-dimensional γ-flow on `[0, π/k]` once k is large and k²τ small. Their
//! maximum ζ vanishes at both ends and has slope c₁/(τ−t) at θ = 0, so any
//! solution starting above it loses its gradient bound by t = τ.
//!
//! All of these functions are symmetric under θ ↦ π/k − θ, and so is the
//! equation. Sample grids are therefore laid out by the distance to the
//! nearest end, which keeps the boundary layer of width (τ−t)^{p/2}
//! representable in floating point.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::diagnostics::{detect_blowup, holder_coeff_scattered, min_holder_coeff, modulus_of_continuity};
use crate::error::{Error, Result};
use crate::flow::{
    extend_odd, run_flow, Domain, FlowState, Geometry, Profile, Representation, RunOptions, StepOptions,
};
use crate::par_map;
use crate::warp::GammaTransform;

/// Verification stops at t = τ(1 − T_CUTOFF).
pub const T_CUTOFF: f64 = 1e-6;
/// A residual passes when it is at most this fraction of the summed
/// magnitudes of its three terms.
pub const RESIDUAL_SLACK: f64 = 1e-12;
/// Relative lift of the initial data above ζ(·, 0).
pub const INITIAL_LIFT: f64 = 1e-3;
/// Exponent of the smooth maximum used to build the initial data.
pub const SMOOTH_MAX_EXPONENT: i32 = 16;
/// Bound on the normalized second difference of the initial data at the ends.
pub const END_CURVATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsolutionParams {
    pub sigma: f64,
    pub p: f64,
    pub k: u64,
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
    /// Hölder budget λ·inf 1/φ for the initial data.
    pub mu: f64,
}

impl SubsolutionParams {
    /// Structural checks only. `c2 = 0` is accepted so that failing
    /// parameter sets can still be examined.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = p_interval(self.sigma)?;
        let bad = |what: &str| Err(Error::Contract(what.to_string()));
        if !(self.p > lo && self.p < hi) {
            return bad(&format!("p = {} lies outside ({lo}, {hi})", self.p));
        }
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(&format!("τ must be positive, got {}", self.tau));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return bad(&format!("c₁ must be positive, got {}", self.c1));
        }
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return bad(&format!("c₂ must be non-negative, got {}", self.c2));
        }
        if !(self.mu > 0.0) {
            return bad(&format!("μ must be positive, got {}", self.mu));
        }
        Ok(())
    }

    pub fn arc_length(&self) -> f64 {
        PI / self.k as f64
    }

    /// π/(2k), where ζ₁ has its kink.
    pub fn half_width(&self) -> f64 {
        0.5 * self.arc_length()
    }

    /// A = 2^{2/p}(π/k)^{1−2/p}c₁ = sup ζ₂(·, 0).
    pub fn amplitude(&self) -> f64 {
        2f64.powf(2.0 / self.p) * self.arc_length().powf(1.0 - 2.0 / self.p) * self.c1
    }

    /// Width (τ−t)^{p/2} of the boundary layer of ζ₁ at remaining time τ − t.
    pub fn layer_width(&self, remaining: f64) -> f64 {
        remaining.powf(0.5 * self.p)
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }
}

/// The admissible exponents (2/(1−σ), 4).
pub fn p_interval(sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::Contract(format!(
            "σ must lie in (0, 1/2), got {sigma}; otherwise the exponent interval (2/(1−σ), 4) is empty"
        )));
    }
    Ok((2.0 / (1.0 - sigma), 4.0))
}

/// Value and first derivatives of a space-time function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dtheta: f64,
    pub dtheta2: f64,
}

/// L(u) at remaining time r = τ − t.
fn inner_value(sp: &SubsolutionParams, u: f64, r: f64) -> f64 {
    sp.c1 * u / (r.powf(sp.p) + u * u).powf(1.0 / sp.p)
}

/// L(u) with its u- and t-derivatives. With a = r^p and S = a + u²:
/// L′ = c₁S^{−1/p}(a + (1−2/p)u²)/S,
/// L″ = −(2c₁u/p)S^{−1/p}(3a + (1−2/p)u²)/S²,
/// ∂ₜL = L r^{p−1}/S.
fn inner_jet(sp: &SubsolutionParams, u: f64, r: f64) -> Jet {
    let p = sp.p;
    let a = r.powf(p);
    let s = a + u * u;
    let q = s.powf(-1.0 / p);
    let e = 1.0 - 2.0 / p;
    let value = sp.c1 * u * q;
    Jet {
        value,
        dt: value * (a / r) / s,
        dtheta: sp.c1 * q * (a + e * u * u) / s,
        // Divided by S twice: S² underflows for large k.
        dtheta2: -2.0 * sp.c1 * u / p * q * (3.0 * a + e * u * u) / s / s,
    }
}

/// ζ₂ at distance u from the nearest end; derivatives are taken in u.
fn outer_jet(sp: &SubsolutionParams, u: f64, t: f64) -> Jet {
    let a = sp.amplitude();
    let k = sp.kf();
    let (s, c) = (k * u).sin_cos();
    Jet {
        value: a * (s - sp.c2 * k * k * t),
        dt: -a * sp.c2 * k * k,
        dtheta: a * k * c,
        dtheta2: -a * k * k * s,
    }
}

fn check_point(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<()> {
    if !(theta >= 0.0 && theta <= sp.arc_length()) {
        return Err(Error::Domain {
            value: theta,
            lo: 0.0,
            hi: sp.arc_length(),
        });
    }
    if !(t >= 0.0 && t < sp.tau) {
        return Err(Error::Domain {
            value: t,
            lo: 0.0,
            hi: sp.tau,
        });
    }
    Ok(())
}

pub fn zeta1(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<f64> {
    check_point(sp, theta, t)?;
    let r = sp.tau - t;
    Ok(inner_value(sp, theta, r).min(inner_value(sp, sp.arc_length() - theta, r)))
}

pub fn zeta2(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<f64> {
    check_point(sp, theta, t)?;
    Ok(outer_jet(sp, theta.min(sp.arc_length() - theta), t).value)
}

pub fn zeta(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<f64> {
    Ok(zeta1(sp, theta, t)?.max(zeta2(sp, theta, t)?))
}

/// Closed-form jet of ζ₁; undefined at the kink θ = π/(2k).
pub fn zeta1_jet(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<Jet> {
    check_point(sp, theta, t)?;
    let half = sp.half_width();
    let r = sp.tau - t;
    if theta < half {
        Ok(inner_jet(sp, theta, r))
    } else if theta > half {
        let mut j = inner_jet(sp, sp.arc_length() - theta, r);
        j.dtheta = -j.dtheta;
        Ok(j)
    } else {
        Err(Error::Contract("ζ₁ is not differentiable at θ = π/(2k)".into()))
    }
}

pub fn zeta2_jet(sp: &SubsolutionParams, theta: f64, t: f64) -> Result<Jet> {
    check_point(sp, theta, t)?;
    let mirror = sp.arc_length() - theta;
    if theta <= mirror {
        Ok(outer_jet(sp, theta, t))
    } else {
        let mut j = outer_jet(sp, mirror, t);
        j.dtheta = -j.dtheta;
        Ok(j)
    }
}

/// ∂ₜζ − (1/ψ)ζ_θθ/(1+ζ_θ²)^{3/2} − (ψ′/ψ²)ζ_θ²/√(1+ζ_θ²) with its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// Sum of the magnitudes of the three terms.
    pub scale: f64,
}

impl Residual {
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            self.value
        }
    }
}

/// Residual of the one-dimensional γ-flow for a jet, given ψ and ψ′ at its value.
pub fn residual(jet: &Jet, psi: f64, dpsi: f64) -> Residual {
    let s = jet.dtheta.abs();
    let inv = 1.0 / 1f64.hypot(s);
    let diffusion = jet.dtheta2 * inv * inv * inv / psi;
    let drift = dpsi / (psi * psi) * s * (s * inv);
    Residual {
        value: jet.dt - diffusion - drift,
        scale: jet.dt.abs() + diffusion.abs() + drift.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyGrid {
    /// Distances from the nearest end, covering `[0, π/(2k)]`.
    pub n_theta: usize,
    pub n_t: usize,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        VerifyGrid {
            n_theta: 2048,
            n_t: 512,
        }
    }
}

/// Distances in `[0, π/(2k)]`: half Chebyshev-clustered at both ends, half
/// geometric from well inside the boundary layer `inner`. Sorted, starts at 0
/// and ends at π/(2k).
fn distance_grid(sp: &SubsolutionParams, count: usize, inner: f64) -> Vec<f64> {
    let half = sp.half_width();
    let n_geo = (count / 2).max(2);
    let n_cheb = count.saturating_sub(n_geo).max(2);
    let g0 = (1e-2 * inner).min(1e-3 * half);
    let mut u: Vec<f64> = Vec::with_capacity(n_geo + n_cheb + 1);
    u.push(0.0);
    let ratio = half / g0;
    u.extend((0..n_geo).map(|i| g0 * ratio.powf(i as f64 / (n_geo - 1) as f64)));
    u.extend((0..n_cheb).map(|i| 0.5 * half * (1.0 - (PI * i as f64 / (n_cheb - 1) as f64).cos())));
    u.push(half);
    for x in u.iter_mut() {
        *x = x.clamp(0.0, half);
    }
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// Remaining times τ − t for the verification rows, from τ down to τ·T_CUTOFF.
fn remaining_times(tau: f64, n_t: usize) -> Vec<f64> {
    let n = n_t.max(2);
    (0..n).map(|j| tau * T_CUTOFF.powf(j as f64 / (n - 1) as f64)).collect()
}

/// Largest residual found for one of the two families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMax {
    pub value: f64,
    pub normalized: f64,
    /// Distance from the nearest end where the largest normalized residual occurs.
    pub distance: f64,
    pub t: f64,
}

impl ResidualMax {
    fn empty() -> Self {
        ResidualMax {
            value: f64::NEG_INFINITY,
            normalized: f64::NEG_INFINITY,
            distance: f64::NAN,
            t: f64::NAN,
        }
    }

    fn absorb(&mut self, r: Residual, distance: f64, t: f64) {
        self.value = self.value.max(r.value);
        let n = r.normalized();
        if n > self.normalized {
            self.normalized = n;
            self.distance = distance;
            self.t = t;
        }
    }

    fn merge(&mut self, other: &ResidualMax) {
        self.value = self.value.max(other.value);
        if other.normalized > self.normalized {
            self.normalized = other.normalized;
            self.distance = other.distance;
            self.t = other.t;
        }
    }

    pub fn passes(&self) -> bool {
        self.normalized <= RESIDUAL_SLACK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionReport {
    pub zeta1: ResidualMax,
    pub zeta2: ResidualMax,
    /// Half-width of the band around π/(2k) left out for ζ₁.
    pub band: f64,
    pub points: usize,
    /// Points where ψ could not be evaluated or the residual was not finite.
    pub failures: Vec<String>,
    pub pass: bool,
}

#[derive(Default)]
struct Row {
    z1: Option<ResidualMax>,
    z2: Option<ResidualMax>,
    points: usize,
    failures: Vec<String>,
}

fn residual_at(t: &GammaTransform, jet: &Jet) -> std::result::Result<Residual, String> {
    let (psi, dpsi) = t.psi_pair(jet.value).map_err(|e| e.to_string())?;
    let r = residual(jet, psi, dpsi);
    if r.value.is_finite() && r.scale.is_finite() {
        Ok(r)
    } else {
        Err(format!("non-finite residual {} for ζ = {}", r.value, jet.value))
    }
}

/// Checks the subsolution inequality for ζ₁ and ζ₂ on a space-time grid.
///
/// By symmetry only the half `[0, π/(2k)]` is sampled; for ζ₁ a band of one
/// uniform fine-grid cell below the kink is left out. Time runs from 0 to
/// τ(1 − T_CUTOFF), geometrically clustered towards τ. The check passes when
/// every residual is at most `RESIDUAL_SLACK` times its scale.
pub fn verify_subsolution(sp: &SubsolutionParams, t: &GammaTransform, grid: VerifyGrid) -> Result<SubsolutionReport> {
    sp.validate()?;
    if grid.n_theta < 4 || grid.n_t < 2 {
        return Err(Error::Contract("verification grid is too small".into()));
    }
    let inner = sp.layer_width(sp.tau * T_CUTOFF);
    let u = distance_grid(sp, grid.n_theta, inner);
    let band = sp.arc_length() / grid.n_theta as f64;
    let limit = sp.half_width() - band;
    let rows = remaining_times(sp.tau, grid.n_t);
    let results = par_map(&rows, |&r| {
        let time = sp.tau - r;
        let mut row = Row::default();
        let note = |row: &mut Row, msg: String| {
            if row.failures.len() < 4 {
                row.failures.push(msg);
            }
        };
        for &x in &u {
            if x < limit {
                row.points += 1;
                match residual_at(t, &inner_jet(sp, x, r)) {
                    Ok(res) => row.z1.get_or_insert_with(ResidualMax::empty).absorb(res, x, time),
                    Err(e) => note(&mut row, format!("ζ₁ at distance {x:e}, t = {time:e}: {e}")),
                }
            }
            row.points += 1;
            match residual_at(t, &outer_jet(sp, x, time)) {
                Ok(res) => row.z2.get_or_insert_with(ResidualMax::empty).absorb(res, x, time),
                Err(e) => note(&mut row, format!("ζ₂ at distance {x:e}, t = {time:e}: {e}")),
            }
        }
        row
    });
    let (mut z1, mut z2) = (ResidualMax::empty(), ResidualMax::empty());
    let mut points = 0;
    let mut failures = Vec::new();
    for row in results {
        if let Some(m) = row.z1 {
            z1.merge(&m);
        }
        if let Some(m) = row.z2 {
            z2.merge(&m);
        }
        points += row.points;
        failures.extend(row.failures);
    }
    let pass = failures.is_empty() && z1.passes() && z2.passes();
    Ok(SubsolutionReport {
        zeta1: z1,
        zeta2: z2,
        band,
        points,
        failures,
        pass,
    })
}

/// Constants fixed before the search over (k, τ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub sigma: f64,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    pub psi0: f64,
    /// ψ″(0) by Richardson-extrapolated centered differences.
    pub psi2: f64,
}

/// p = midpoint of (2/(1−σ), 4), c₁ = 2(1−2/p)^{−2}ψ(0)²/ψ″(0), c₂ = 2/ψ(0)
/// and μ = λ/sup φ, after checking that ψ is even with ψ″(0) > 0.
pub fn subsolution_constants(sigma: f64, lambda: f64, t: &GammaTransform) -> Result<Constants> {
    let (lo, hi) = p_interval(sigma)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Contract(format!("λ must be positive, got {lambda}")));
    }
    let j = t.image();
    let m = j.hi.min(-j.lo);
    if !(m > 0.0) {
        return Err(Error::Hypothesis(format!(
            "γ = 0 must be interior to J = [{}, {}]",
            j.lo, j.hi
        )));
    }
    let psi0 = t.psi(0.0)?;
    for i in 1..=64 {
        let g = 0.9 * m * i as f64 / 64.0;
        let (a, b) = (t.psi(g)?, t.psi(-g)?);
        if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
            return Err(Error::Hypothesis(format!(
                "ψ is not even: ψ({g}) = {a}, ψ(−{g}) = {b}"
            )));
        }
    }
    let second = |h: f64| -> Result<f64> { Ok((t.psi(h)? - 2.0 * psi0 + t.psi(-h)?) / (h * h)) };
    let h = 1e-2 * m;
    let psi2 = (4.0 * second(0.5 * h)? - second(h)?) / 3.0;
    if !(psi2 > 0.0) {
        return Err(Error::Hypothesis(format!("ψ″(0) = {psi2:e} is not positive")));
    }
    let p = 0.5 * (lo + hi);
    let e = 1.0 - 2.0 / p;
    Ok(Constants {
        sigma,
        p,
        c1: 2.0 * psi0 * psi0 / (e * e * psi2),
        c2: 2.0 / psi0,
        mu: lambda / t.warp().sup_phi(),
        psi0,
        psi2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub tau0: f64,
    /// τ = τ₀/k^{2+β}.
    pub beta: f64,
    pub k_min: u64,
    pub k_max: u64,
    /// ζ(·, 0) must have Hölder coefficient below this fraction of μ.
    pub holder_margin: f64,
    /// The range of ζ, stretched by this factor, must lie in J.
    pub range_margin: f64,
    pub holder_points: usize,
    pub grid: VerifyGrid,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            tau0: 1.0,
            beta: 0.5,
            k_min: 4,
            k_max: 1 << 50,
            holder_margin: 0.9,
            range_margin: 1.1,
            holder_points: 1024,
            grid: VerifyGrid::default(),
        }
    }
}

/// Cheap structural properties of ζ for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyReport {
    /// Range of ζ₂ over the rectangle, which contains the range of ζ.
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub range_ok: bool,
    /// min over sampled t of ζ₂(π/(2k), t) − ζ₁(π/(2k), t).
    pub midpoint_gap: f64,
    /// Hölder-σ coefficient of ζ(·, 0) on a fine nonuniform grid.
    pub holder_coeff: f64,
    pub holder_budget: f64,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.range_ok && self.midpoint_gap > 0.0 && self.holder_coeff < self.holder_budget
    }
}

/// Values of a function symmetric about π/(2k) at distances `u` from the
/// nearest end. Pairs across the middle are never closer than their mirror
/// pairs, so the one-sided scan gives the full Hölder coefficient.
fn symmetric_holder(u: &[f64], v: &[f64], sigma: f64) -> Result<f64> {
    holder_coeff_scattered(u, v, sigma)
}

pub fn check_properties(sp: &SubsolutionParams, t: &GammaTransform, opts: &SearchOptions) -> Result<PropertyReport> {
    sp.validate()?;
    let a = sp.amplitude();
    let k = sp.kf();
    let zeta_min = -a * sp.c2 * k * k * sp.tau;
    let zeta_max = a;
    let j = t.image();
    let range_ok = zeta_max * opts.range_margin <= j.hi && zeta_min * opts.range_margin >= j.lo;
    let half = sp.half_width();
    let midpoint_gap = remaining_times(sp.tau, opts.grid.n_t)
        .into_iter()
        .map(|r| outer_jet(sp, half, sp.tau - r).value - inner_value(sp, half, r))
        .fold(f64::INFINITY, f64::min);
    let u = distance_grid(sp, opts.holder_points, sp.layer_width(sp.tau));
    let v: Vec<f64> = u
        .iter()
        .map(|&x| inner_value(sp, x, sp.tau).max(outer_jet(sp, x, 0.0).value))
        .collect();
    Ok(PropertyReport {
        zeta_min,
        zeta_max,
        range_ok,
        midpoint_gap,
        holder_coeff: symmetric_holder(&u, &v, sp.sigma)?,
        holder_budget: opts.holder_margin * sp.mu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub k: u64,
    pub tau: f64,
    pub properties: PropertyReport,
    pub verification: Option<SubsolutionReport>,
}

impl Candidate {
    pub fn feasible(&self) -> bool {
        self.properties.holds() && self.verification.as_ref().is_some_and(|v| v.pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSearch {
    pub constants: Constants,
    pub candidates: Vec<Candidate>,
    pub chosen: Option<SubsolutionParams>,
}

impl ParamSearch {
    /// One line per candidate.
    pub fn log(&self) -> String {
        let mut s = String::new();
        for c in &self.candidates {
            let p = &c.properties;
            let _ = write!(
                s,
                "k = {} tau = {:e}: range {} midpoint gap {:e} holder {:e} / {:e}",
                c.k,
                c.tau,
                if p.range_ok { "ok" } else { "exceeds J" },
                p.midpoint_gap,
                p.holder_coeff,
                p.holder_budget
            );
            match &c.verification {
                Some(v) => {
                    let _ = writeln!(
                        s,
                        ", residual max {:e} / {:e} ({})",
                        v.zeta1.value,
                        v.zeta2.value,
                        if v.pass { "pass" } else { "fail" }
                    );
                }
                None => s.push_str(", not verified\n"),
            }
        }
        s
    }
}

impl Constants {
    pub fn params(&self, k: u64, tau: f64) -> SubsolutionParams {
        SubsolutionParams {
            sigma: self.sigma,
            p: self.p,
            k,
            tau,
            c1: self.c1,
            c2: self.c2,
            mu: self.mu,
        }
    }
}

/// Tries k = k_min, 2k_min, … up to k_max with τ = τ₀/k^{2+β}. Property
/// checks run concurrently over all candidates; the expensive residual check
/// then runs in increasing k until one passes.
pub fn search_params(sigma: f64, lambda: f64, t: &GammaTransform, opts: &SearchOptions) -> Result<ParamSearch> {
    let constants = subsolution_constants(sigma, lambda, t)?;
    if opts.k_min == 0 || opts.k_max < opts.k_min {
        return Err(Error::Contract(format!("empty k range [{}, {}]", opts.k_min, opts.k_max)));
    }
    if !(opts.tau0 > 0.0) {
        return Err(Error::Contract(format!("τ₀ must be positive, got {}", opts.tau0)));
    }
    let mut ks = Vec::new();
    let mut k = opts.k_min;
    while k <= opts.k_max {
        ks.push(k);
        match k.checked_mul(2) {
            Some(next) => k = next,
            None => break,
        }
    }
    let checked = par_map(&ks, |&k| {
        let tau = opts.tau0 / (k as f64).powf(2.0 + opts.beta);
        let sp = constants.params(k, tau);
        check_properties(&sp, t, opts).map(|properties| Candidate {
            k,
            tau,
            properties,
            verification: None,
        })
    });
    let mut candidates = checked.into_iter().collect::<Result<Vec<_>>>()?;
    let mut chosen = None;
    for c in candidates.iter_mut() {
        if !c.properties.holds() {
            continue;
        }
        let sp = constants.params(c.k, c.tau);
        let report = verify_subsolution(&sp, t, opts.grid)?;
        let pass = report.pass;
        c.verification = Some(report);
        if pass {
            chosen = Some(sp);
            break;
        }
    }
    Ok(ParamSearch {
        constants,
        candidates,
        chosen,
    })
}

/// First feasible parameters with the default search options.
pub fn choose_params(sigma: f64, lambda: f64, t: &GammaTransform) -> Result<SubsolutionParams> {
    choose_params_with(sigma, lambda, t, &SearchOptions::default())
}

pub fn choose_params_with(sigma: f64, lambda: f64, t: &GammaTransform, opts: &SearchOptions) -> Result<SubsolutionParams> {
    let search = search_params(sigma, lambda, t, opts)?;
    search.chosen.ok_or_else(|| {
        Error::Infeasible(format!(
            "no feasible (k, τ) with k ≤ {}:\n{}",
            opts.k_max,
            search.log()
        ))
    })
}

/// C^∞ step from 1 at x ≤ 0 to 0 at x ≥ 1 with χ(1 − x) = 1 − χ(x).
fn smooth_step(x: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let (a, b) = (f(1.0 - x), f(x));
        a / (a + b)
    }
}

/// Initial value at a point given by its distances to both ends.
///
/// T blends L(θ) and L(π/k − θ) smoothly across π/(2k), and the result is
/// (1 + INITIAL_LIFT)·(T^q + ζ₂(·,0)^q)^{1/q}. Near either end T and ζ₂ are
/// θ times even functions, so the data are odd there.
fn initial_value(sp: &SubsolutionParams, left: f64, right: f64) -> f64 {
    let half = sp.half_width();
    let w = 0.25 * half;
    let chi = smooth_step((left - (half - w)) / (2.0 * w));
    let blend = chi * inner_value(sp, left, sp.tau) + (1.0 - chi) * inner_value(sp, right, sp.tau);
    let outer = sp.amplitude() * (sp.kf() * left.min(right)).sin();
    let m = blend.max(outer);
    if m <= 0.0 {
        return 0.0;
    }
    let q = SMOOTH_MAX_EXPONENT;
    (1.0 + INITIAL_LIFT) * m * ((blend / m).powi(q) + (outer / m).powi(q)).powf(1.0 / q as f64)
}

/// The initial data sampled on the arc grid with `segments` segments.
pub fn initial_profile(sp: &SubsolutionParams, segments: usize) -> Result<Profile> {
    sp.validate()?;
    let h = sp.arc_length() / segments as f64;
    let values = (0..=segments)
        .map(|j| {
            if j == 0 || j == segments {
                0.0
            } else {
                initial_value(sp, j as f64 * h, (segments - j) as f64 * h)
            }
        })
        .collect();
    Profile::new(Domain::Arc { k: sp.k }, Representation::Gamma, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub profile: Profile,
    /// min of γ̃₀ − ζ(·, 0) over the grid nodes and a fine nonuniform grid.
    pub lower_margin: f64,
    /// Hölder-σ coefficient, the larger of the grid and fine-grid values.
    pub holder_coeff: f64,
    /// |v(2ε) − 2v(ε) + v(0)| / |v(2ε) − v(0)| at each end.
    pub end_curvature: [f64; 2],
}

/// Builds the initial data and verifies the lower bound, the Hölder budget
/// and the vanishing of value and second derivative at both ends.
pub fn build_initial_data(sp: &SubsolutionParams, segments: usize) -> Result<InitialData> {
    let profile = initial_profile(sp, segments)?;
    let arc = sp.arc_length();
    let z0 = |left: f64, right: f64| inner_value(sp, left.min(right), sp.tau).max(outer_jet(sp, left.min(right), 0.0).value);

    let h = profile.spacing();
    let mut lower_margin = f64::INFINITY;
    for (j, &v) in profile.values().iter().enumerate() {
        let (l, r) = (j as f64 * h, (segments - j) as f64 * h);
        lower_margin = lower_margin.min(v - z0(l, r));
    }
    let u = distance_grid(sp, 1024, sp.layer_width(sp.tau));
    let fine: Vec<f64> = u.iter().map(|&x| initial_value(sp, x, arc - x)).collect();
    for (&x, &v) in u.iter().zip(&fine) {
        lower_margin = lower_margin.min(v - z0(x, arc - x));
    }
    if !(lower_margin >= 0.0) {
        return Err(Error::Construction(format!(
            "initial data fall below ζ(·, 0) by {:e}",
            -lower_margin
        )));
    }

    let holder_grid = min_holder_coeff(&modulus_of_continuity(&profile), sp.sigma)?;
    let holder_coeff = holder_grid.max(symmetric_holder(&u, &fine, sp.sigma)?);
    if !(holder_coeff < sp.mu) {
        return Err(Error::Construction(format!(
            "Hölder-{} coefficient {holder_coeff:e} of the initial data is not below μ = {:e}",
            sp.sigma, sp.mu
        )));
    }

    let eps = 1e-4 * sp.layer_width(sp.tau).min(0.25 * sp.half_width());
    let curvature = |f: &dyn Fn(f64) -> f64| {
        let (v0, v1, v2) = (f(0.0), f(eps), f(2.0 * eps));
        (v2 - 2.0 * v1 + v0).abs() / (v2 - v0).abs()
    };
    let end_curvature = [
        curvature(&|d| initial_value(sp, d, arc - d)),
        curvature(&|d| initial_value(sp, arc - d, d)),
    ];
    if let Some(c) = end_curvature.iter().find(|c| !(**c <= END_CURVATURE_TOL)) {
        return Err(Error::Construction(format!(
            "initial data have a second derivative at an end: normalized second difference {c:e}"
        )));
    }
    Ok(InitialData {
        profile,
        lower_margin,
        holder_coeff,
        end_curvature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub g_max: f64,
    /// Defaults to 1e−14·min(1, τ).
    pub dt_min: Option<f64>,
    pub step_tol: f64,
    /// Defaults to 1e−3·sup ζ.
    pub tol_cmp: Option<f64>,
    pub dump_count: usize,
    pub extension: bool,
    /// The periodic run is skipped when 2kN exceeds this.
    pub max_extension_nodes: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            g_max: 1e3,
            dt_min: None,
            step_tol: 1e-8,
            tol_cmp: None,
            dump_count: 32,
            extension: true,
            max_extension_nodes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extension {
    Skipped(String),
    Ran {
        t_hat: Option<f64>,
        /// |T̂_circle − T̂_arc| / T̂_arc when both exist.
        relative_gap: Option<f64>,
    },
}

impl Extension {
    pub fn consistent(&self, tol: f64) -> bool {
        match self {
            Extension::Ran {
                relative_gap: Some(g), ..
            } => *g < tol,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub segments: usize,
    pub tau: f64,
    pub t_hat: Option<f64>,
    /// Node and θ where the gradient first exceeded G_max.
    pub witness: Option<(usize, f64)>,
    /// Detection happened on the initial data.
    pub degenerate: bool,
    pub termination: String,
    pub accepted_steps: usize,
    pub tol_cmp: f64,
    /// min over nodes of γ̃ − ζ after every accepted step before τ.
    pub comparison: Vec<(f64, f64)>,
    pub comparison_min: f64,
    /// First time the margin fell below −tol_cmp.
    pub comparison_violation: Option<f64>,
    pub gradient: Vec<(f64, f64)>,
    pub snapshots: Vec<(f64, Profile)>,
    pub extension: Extension,
}

impl ExperimentReport {
    pub fn comparison_ok(&self) -> bool {
        self.comparison_violation.is_none()
    }
}

fn comparison_margin(sp: &SubsolutionParams, p: &Profile, t: f64) -> f64 {
    let n = p.segments();
    let h = p.spacing();
    let r = sp.tau - t;
    p.values()
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let u = (j as f64 * h).min((n - j) as f64 * h);
            v - inner_value(sp, u, r).max(outer_jet(sp, u, t).value)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs the Dirichlet γ-flow on `[0, π/k]` from `initial` until blow-up is
/// detected or t = τ, monitoring γ̃ − ζ after every step. When affordable,
/// the odd extension to the circle is run as well.
pub fn run_blowup_experiment(
    sp: &SubsolutionParams,
    transform: &Arc<GammaTransform>,
    initial: &Profile,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    sp.validate()?;
    if initial.domain() != (Domain::Arc { k: sp.k }) {
        return Err(Error::Contract(format!(
            "initial data live on {}, expected arc(k={})",
            initial.domain(),
            sp.k
        )));
    }
    let tol_cmp = opts.tol_cmp.unwrap_or(1e-3 * sp.amplitude());
    let run_opts = RunOptions {
        t_end: sp.tau,
        dump_times: (0..opts.dump_count).map(|i| sp.tau * i as f64 / opts.dump_count as f64).collect(),
        g_max: opts.g_max,
        step: StepOptions {
            tol: opts.step_tol,
            dt_min: opts.dt_min.unwrap_or(1e-14 * sp.tau.min(1.0)),
        },
    };
    let geometry = Geometry::Gamma(transform.clone());
    let state = FlowState::new(initial.clone(), 0.0, 1, geometry.clone())?;
    let mut comparison = Vec::new();
    let traj = run_flow(&state, &run_opts, &mut |s: &FlowState| {
        if s.t() < sp.tau {
            comparison.push((s.t(), comparison_margin(sp, s.profile(), s.t())));
        }
        Ok(())
    })?;
    let detection = detect_blowup(&traj, opts.g_max);
    let comparison_min = comparison.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let comparison_violation = comparison.iter().find(|c| c.1 < -tol_cmp).map(|c| c.0);
    let t_hat = detection.map(|d| d.0);

    let extension = if !opts.extension {
        Extension::Skipped("disabled".into())
    } else {
        let nodes = 2u128 * sp.k as u128 * initial.segments() as u128;
        if nodes > opts.max_extension_nodes as u128 {
            Extension::Skipped(format!(
                "the periodic extension needs 2kN = {nodes} nodes, above the budget of {}",
                opts.max_extension_nodes
            ))
        } else {
            let circle = extend_odd(initial, sp.k)?;
            let s = FlowState::new(circle, 0.0, 1, geometry)?;
            let ext = run_flow(&s, &run_opts, &mut |_| Ok(()))?;
            let t_ext = detect_blowup(&ext, opts.g_max).map(|d| d.0);
            let relative_gap = match (t_hat, t_ext) {
                (Some(a), Some(b)) if a > 0.0 => Some((b - a).abs() / a),
                (Some(a), Some(b)) if a == b => Some(0.0),
                _ => None,
            };
            Extension::Ran {
                t_hat: t_ext,
                relative_gap,
            }
        }
    };

    Ok(ExperimentReport {
        segments: initial.segments(),
        tau: sp.tau,
        t_hat,
        witness: detection.map(|(_, node)| (node, initial.theta(node))),
        degenerate: t_hat == Some(0.0),
        termination: traj.termination.describe(),
        accepted_steps: traj.accepted_steps,
        tol_cmp,
        comparison,
        comparison_min,
        comparison_violation,
        gradient: traj.gradient_history.iter().map(|&(t, g, _)| (t, g)).collect(),
        snapshots: traj.snapshots.iter().map(|s| (s.t(), s.profile().clone())).collect(),
        extension,
    })
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub runs: Vec<ExperimentReport>,
    /// Relative change of T̂ between the two finest levels.
    pub last_change: Option<f64>,
}

/// Runs the experiment concurrently at each grid size, starting every level
/// from [`initial_profile`]. Levels are reported in increasing size.
pub fn refinement_study(
    sp: &SubsolutionParams,
    transform: &Arc<GammaTransform>,
    levels: &[usize],
    opts: &ExperimentOptions,
) -> Result<Refinement> {
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let runs = par_map(&levels, |&n| {
        let p = initial_profile(sp, n)?;
        run_blowup_experiment(sp, transform, &p, opts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let last_change = match runs.as_slice() {
        [.., a, b] => match (a.t_hat, b.t_hat) {
            (Some(x), Some(y)) if y > 0.0 => Some((x - y).abs() / y),
            (Some(x), Some(y)) if x == y => Some(0.0),
            _ => None,
        },
        _ => None,
    };
    Ok(Refinement { runs, last_change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warp::{Interval, WarpFunction, WarpKind};

    fn cosh_transform() -> GammaTransform {
        let w = WarpFunction::new(WarpKind::Cosh, Interval::new(-1.0, 1.0).unwrap()).unwrap();
        GammaTransform::new(&w, 0.0, 1e-12).unwrap()
    }

    fn sample() -> SubsolutionParams {
        SubsolutionParams {
            sigma: 0.25,
            p: 10.0 / 3.0,
            k: 16,
            tau: 1e-3,
            c1: 3.0,
            c2: 2.0,
            mu: 0.5,
        }
    }

    #[test]
    fn exponent_interval() {
        assert_eq!(p_interval(0.25).unwrap(), (8.0 / 3.0, 4.0));
        let (lo, hi) = p_interval(0.499).unwrap();
        assert!(lo < hi && (lo - 3.992).abs() < 1e-3);
        assert!(p_interval(0.5).is_err());
        assert!(p_interval(0.0).is_err());
    }

    #[test]
    fn zeta1_closed_form() {
        let sp = sample();
        let theta = PI / 32.0;
        let direct = 3.0 * theta / (1e-3f64.powf(10.0 / 3.0) + theta * theta).powf(0.3);
        let other = 3.0 * theta * ((1e-3f64.powf(10.0 / 3.0) + theta * theta).ln() * -0.3).exp();
        let z = zeta1(&sp, theta, 0.0).unwrap();
        assert!((z - direct).abs() <= 1e-14 * direct);
        assert!((z - other).abs() <= 1e-13 * direct);
    }

    #[test]
    fn zeta_endpoint_and_symmetry_values() {
        let sp = sample();
        let arc = sp.arc_length();
        for t in [0.0, 1e-4, 9e-4] {
            assert_eq!(zeta1(&sp, 0.0, t).unwrap(), 0.0);
            assert_eq!(zeta1(&sp, arc, t).unwrap(), 0.0);
            assert_eq!(zeta(&sp, 0.0, t).unwrap(), 0.0);
            for theta in [0.01, 0.05, 0.09] {
                let a = zeta1(&sp, theta, t).unwrap();
                let b = zeta1(&sp, arc - theta, t).unwrap();
                assert!((a - b).abs() <= 1e-12 * a);
            }
        }
        assert_eq!(zeta2(&sp, 0.0, 0.0).unwrap(), 0.0);
        let peak = zeta2(&sp, sp.half_width(), 0.0).unwrap();
        assert!((peak - sp.amplitude()).abs() <= 1e-15 * peak);
        assert!(matches!(zeta1(&sp, 0.1, sp.tau), Err(Error::Domain { .. })));
        assert!(zeta2(&sp, arc * 1.01, 0.0).is_err());
    }

    #[test]
    fn jets_match_finite_differences() {
        let sp = sample();
        let (theta, t) = (0.03, 4e-4);
        let dh = 1e-5;
        let dtau = 1e-8;
        for (f, jet) in [
            (zeta1 as fn(&SubsolutionParams, f64, f64) -> Result<f64>, zeta1_jet(&sp, theta, t).unwrap()),
            (zeta2, zeta2_jet(&sp, theta, t).unwrap()),
        ] {
            let v = |x: f64, s: f64| f(&sp, x, s).unwrap();
            let d1 = (v(theta + dh, t) - v(theta - dh, t)) / (2.0 * dh);
            let d2 = (v(theta + dh, t) - 2.0 * v(theta, t) + v(theta - dh, t)) / (dh * dh);
            let dt = (v(theta, t + dtau) - v(theta, t - dtau)) / (2.0 * dtau);
            assert!((jet.dtheta - d1).abs() < 1e-6 * jet.dtheta.abs().max(1.0));
            assert!((jet.dtheta2 - d2).abs() < 1e-3 * jet.dtheta2.abs().max(1.0));
            assert!((jet.dt - dt).abs() < 1e-5 * jet.dt.abs().max(1.0));
        }
        // The right half mirrors the left.
        let arc = sp.arc_length();
        let l = zeta1_jet(&sp, 0.02, t).unwrap();
        let r = zeta1_jet(&sp, arc - 0.02, t).unwrap();
        assert!((l.dtheta + r.dtheta).abs() < 1e-9 * l.dtheta.abs());
        assert!(zeta1_jet(&sp, sp.half_width(), t).is_err());
    }

    #[test]
    fn zeta2_time_derivative_is_constant() {
        let sp = sample();
        let k = sp.k as f64;
        let p = sp.p;
        let closed = -(2f64.powf(2.0 / p)) * PI.powf(1.0 - 2.0 / p) * k.powf(1.0 + 2.0 / p) * sp.c1 * sp.c2;
        for theta in [0.0, 0.05, 0.1] {
            let fd = (zeta2(&sp, theta, 5e-4).unwrap() - zeta2(&sp, theta, 3e-4).unwrap()) / 2e-4;
            assert!((fd - closed).abs() < 1e-9 * closed.abs());
            assert!((zeta2_jet(&sp, theta, 1e-4).unwrap().dt - closed).abs() < 1e-12 * closed.abs());
        }
    }

    #[test]
    fn boundary_slope_blows_up() {
        let sp = sample();
        for r in [1e-3, 1e-5, 1e-7] {
            let j = zeta1_jet(&sp, 0.0, sp.tau - r).unwrap();
            assert!((j.dtheta - sp.c1 / r).abs() < 1e-12 * j.dtheta);
        }
    }

    #[test]
    fn constants_for_cosh() {
        let c = subsolution_constants(0.25, 1.0, &cosh_transform()).unwrap();
        assert!((c.psi0 - 1.0).abs() < 1e-12);
        assert!((c.psi2 - 1.0).abs() < 1e-6, "{}", c.psi2);
        assert!((c.c1 - 12.5).abs() < 1e-4);
        assert!((c.c2 - 2.0).abs() < 1e-12);
        assert!((c.mu - 1.0 / 1f64.cosh()).abs() < 1e-12);
    }

    #[test]
    fn constants_need_an_even_psi() {
        let w = WarpFunction::new(WarpKind::Cosh, Interval::new(-1.0, 1.0).unwrap()).unwrap();
        let shifted = GammaTransform::new(&w, 0.3, 1e-12).unwrap();
        assert!(matches!(subsolution_constants(0.25, 1.0, &shifted), Err(Error::Hypothesis(_))));
        let flat = WarpFunction::new(WarpKind::Constant(1.0), Interval::new(-1.0, 1.0).unwrap()).unwrap();
        let t = GammaTransform::new(&flat, 0.0, 1e-12).unwrap();
        assert!(matches!(subsolution_constants(0.25, 1.0, &t), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn residual_detects_small_c1_and_zero_c2() {
        let t = cosh_transform();
        let c = subsolution_constants(0.25, 1.0, &t).unwrap();
        let k = 1u64 << 20;
        let sp = c.params(k, 1.0 / (k as f64).powf(2.5));
        let grid = VerifyGrid { n_theta: 256, n_t: 64 };
        let good = verify_subsolution(&sp, &t, grid).unwrap();
        assert!(good.pass, "{good:?}");
        let small = SubsolutionParams { c1: 1e-3, ..sp };
        let r = verify_subsolution(&small, &t, grid).unwrap();
        assert!(!r.pass && r.zeta1.value > 0.0, "{r:?}");
        let flat = SubsolutionParams { c2: 0.0, ..sp };
        let r = verify_subsolution(&flat, &t, grid).unwrap();
        assert!(!r.pass && r.zeta2.value > 0.0, "{r:?}");
        let doubled = SubsolutionParams { c1: 2.0 * sp.c1, ..sp };
        assert!(verify_subsolution(&doubled, &t, grid).unwrap().pass);
    }

    #[test]
    fn holder_coefficient_scales_with_k() {
        let t = cosh_transform();
        let c = subsolution_constants(0.25, 1.0, &t).unwrap();
        let k = 1u64 << 12;
        let at = |k: u64| {
            let sp = c.params(k, 1.0 / (k as f64).powf(2.5));
            let u = distance_grid(&sp, 1024, sp.layer_width(sp.tau));
            let v: Vec<f64> = u.iter().map(|&x| outer_jet(&sp, x, 0.0).value).collect();
            symmetric_holder(&u, &v, 0.25).unwrap()
        };
        let ratio = at(2 * k) / at(k);
        let expected = 2f64.powf(0.25 - (1.0 - 2.0 / c.p));
        assert!((ratio / expected - 1.0).abs() < 0.2, "{ratio} vs {expected}");
    }

    #[test]
    fn initial_data_satisfy_their_checks() {
        let t = cosh_transform();
        let c = subsolution_constants(0.25, 1.0, &t).unwrap();
        let k = 1u64 << 20;
        let sp = SubsolutionParams {
            mu: 10.0,
            ..c.params(k, 1.0 / (k as f64).powf(2.5))
        };
        let data = build_initial_data(&sp, 256).unwrap();
        let v = data.profile.values();
        assert_eq!((v[0], v[256]), (0.0, 0.0));
        assert!(data.lower_margin >= 0.0);
        assert!(data.end_curvature.iter().all(|&c| c <= END_CURVATURE_TOL), "{:?}", data.end_curvature);
        // Symmetric about the midpoint.
        for j in 0..=128 {
            assert!((v[j] - v[256 - j]).abs() <= 1e-12 * v[128]);
        }
        let tight = SubsolutionParams { mu: 1e-6, ..sp };
        assert!(matches!(build_initial_data(&tight, 256), Err(Error::Construction(_))));
    }

    #[test]
    fn smooth_step_is_antisymmetric() {
        for x in [-1.0, 0.0, 0.1, 0.37, 0.5, 0.9, 1.0, 2.0] {
            assert!((smooth_step(1.0 - x) - (1.0 - smooth_step(x))).abs() < 1e-15);
        }
    }
}
