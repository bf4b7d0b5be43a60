//! Geometric functionals, moduli of continuity, the κ/Z barrier monitor and
//! rate fitting along flow trajectories.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{
    gradient_sup, BlowupSignal, Domain, FlowState, Geometry, Profile, Representation, Termination, Trajectory,
};
use crate::quadrature::{CumulativeIntegral, QuadOptions};
use crate::warp::{GammaTransform, WarpFunction};

pub use crate::flow::gradient_sup_at;

/// |Sᵐ|, with |S⁰| = 2.
pub fn sphere_measure(m: u32) -> f64 {
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * sphere_measure(m - 2),
    }
}

fn require_rho(p: &Profile) -> Result<()> {
    if p.repr() != Representation::Rho {
        return Err(Error::Contract("area and volume need a ρ-form profile".into()));
    }
    Ok(())
}

/// Fiber measure density at θ: 1 on circle and arc, |S^{n−1}| sin^{n−1}θ on colatitude.
fn fiber_weight(domain: Domain, n: u32, theta: f64) -> f64 {
    match domain {
        Domain::Colatitude => sphere_measure(n - 1) * theta.sin().powi(n as i32 - 1),
        _ => 1.0,
    }
}

/// Area and enclosed volume of radial graphs for one warp and dimension.
///
/// Volume is measured from the left end `a` of I: `V = ∫ Φ(ρ) dσ` with
/// `Φ(ρ) = ∫_a^ρ φⁿ`. `Φ` is tabulated once at construction.
#[derive(Debug, Clone)]
pub struct Functionals {
    warp: WarpFunction,
    n: u32,
    shell: CumulativeIntegral,
}

impl Functionals {
    pub fn new(warp: &WarpFunction, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Contract("dimension n must be at least 1".into()));
        }
        let i = warp.interval();
        let w = warp.clone();
        let f = move |s: f64| w.phi(s).powi(n as i32);
        let shell = CumulativeIntegral::new(
            &f,
            i.lo,
            i.hi,
            i.lo,
            1024,
            QuadOptions {
                abs_tol: 1e-15,
                ..QuadOptions::default()
            },
        )?;
        Ok(Functionals {
            warp: warp.clone(),
            n,
            shell,
        })
    }

    fn shell_at(&self, rho: f64) -> f64 {
        let (w, n) = (&self.warp, self.n as i32);
        self.shell.eval(&|s: f64| w.phi(s).powi(n), rho)
    }

    /// `∫ φ(ρ)^{n−1} √(φ(ρ)² + ρ_θ²) dσ` by the midpoint rule on grid faces.
    pub fn area(&self, p: &Profile) -> Result<f64> {
        require_rho(p)?;
        let v = p.values();
        let h = p.spacing();
        let len = v.len();
        let faces = if p.domain().is_periodic() { len } else { len - 1 };
        let mut sum = 0.0;
        for f in 0..faces {
            let (a, b) = (v[f], v[(f + 1) % len]);
            let d = (b - a) / h;
            let phi = self.warp.phi(0.5 * (a + b));
            let theta = (f as f64 + 0.5) * h;
            sum += fiber_weight(p.domain(), self.n, theta) * phi.powi(self.n as i32 - 1) * (phi * phi + d * d).sqrt();
        }
        Ok(sum * h)
    }

    /// `∫ Φ(ρ) dσ` by the trapezoid rule on grid nodes.
    pub fn volume(&self, p: &Profile) -> Result<f64> {
        require_rho(p)?;
        let range = self.warp.interval();
        let v = p.values();
        let h = p.spacing();
        let last = v.len() - 1;
        let mut sum = 0.0;
        for (j, &rho) in v.iter().enumerate() {
            if !range.contains(rho) {
                return Err(Error::Domain {
                    value: rho,
                    lo: range.lo,
                    hi: range.hi,
                });
            }
            let end = !p.domain().is_periodic() && (j == 0 || j == last);
            let wt = fiber_weight(p.domain(), self.n, p.theta(j)) * if end { 0.5 } else { 1.0 };
            sum += wt * self.shell_at(rho);
        }
        Ok(sum * h)
    }
}

pub fn area(p: &Profile, w: &WarpFunction, n: u32) -> Result<f64> {
    Functionals::new(w, n)?.area(p)
}

pub fn volume(p: &Profile, w: &WarpFunction, n: u32) -> Result<f64> {
    Functionals::new(w, n)?.volume(p)
}

/// Discrete modulus of continuity: `values[ℓ]` is the largest oscillation
/// over node pairs at distance `ℓ·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl Modulus {
    pub fn lag(&self, l: usize) -> f64 {
        l as f64 * self.spacing
    }
}

/// Sparse table answering range max/min queries in O(1).
struct RangeExtrema {
    max: Vec<Vec<f64>>,
    min: Vec<Vec<f64>>,
}

impl RangeExtrema {
    fn new(v: &[f64]) -> Self {
        let mut max = vec![v.to_vec()];
        let mut min = vec![v.to_vec()];
        let mut w = 1;
        while 2 * w <= v.len() {
            let (pm, pn) = (max.last().unwrap(), min.last().unwrap());
            let m: Vec<f64> = (0..=v.len() - 2 * w).map(|i| pm[i].max(pm[i + w])).collect();
            let n: Vec<f64> = (0..=v.len() - 2 * w).map(|i| pn[i].min(pn[i + w])).collect();
            max.push(m);
            min.push(n);
            w *= 2;
        }
        RangeExtrema { max, min }
    }

    /// (max, min) of v[a..=b].
    fn query(&self, a: usize, b: usize) -> (f64, f64) {
        let len = b - a + 1;
        let lvl = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        let w = 1 << lvl;
        (
            self.max[lvl][a].max(self.max[lvl][b + 1 - w]),
            self.min[lvl][a].min(self.min[lvl][b + 1 - w]),
        )
    }
}

/// ω over grid lags. Circle: lags 0..=N/2 with the periodic distance. Arc:
/// lags 0..=N. Colatitude: two points of Sⁿ at colatitudes θᵢ, θⱼ can be at
/// any distance in `[|θᵢ − θⱼ|, min(θᵢ + θⱼ, 2π − θᵢ − θⱼ)]` (for n ≥ 2 and,
/// by reflection, n = 1), lags 0..=N.
pub fn modulus_of_continuity(p: &Profile) -> Modulus {
    let v = p.values();
    let n = p.segments();
    let values = match p.domain() {
        Domain::Circle => (0..=n / 2)
            .map(|l| {
                (0..n)
                    .map(|i| (v[(i + l) % n] - v[i]).abs())
                    .fold(0.0, f64::max)
            })
            .collect(),
        Domain::Arc { .. } => (0..=n)
            .map(|l| (0..=n - l).map(|i| (v[i + l] - v[i]).abs()).fold(0.0, f64::max))
            .collect(),
        Domain::Colatitude => {
            let table = RangeExtrema::new(v);
            (0..=n)
                .map(|l| {
                    let mut best: f64 = 0.0;
                    for (i, &vi) in v.iter().enumerate() {
                        // j ∈ [i−ℓ, i+ℓ] ∩ [ℓ−i, 2N−ℓ−i] ∩ [0, N]
                        let lo = i.abs_diff(l);
                        let hi = (i + l).min(2 * n - l - i).min(n);
                        if lo > hi {
                            continue;
                        }
                        let (mx, mn) = table.query(lo, hi);
                        best = best.max(mx - vi).max(vi - mn);
                    }
                    best
                })
                .collect()
        }
    };
    Modulus {
        spacing: p.spacing(),
        values,
    }
}

/// Reference O(N²) (O(N³) on colatitude) scan over all node pairs.
pub fn modulus_brute_force(p: &Profile) -> Modulus {
    let v = p.values();
    let n = p.segments();
    let lags = match p.domain() {
        Domain::Circle => n / 2 + 1,
        _ => n + 1,
    };
    let mut out = vec![0.0f64; lags];
    for i in 0..v.len() {
        for j in 0..v.len() {
            let d = (v[i] - v[j]).abs();
            match p.domain() {
                Domain::Circle => {
                    let l = i.abs_diff(j).min(n - i.abs_diff(j));
                    out[l] = out[l].max(d);
                }
                Domain::Arc { .. } => {
                    let l = i.abs_diff(j);
                    out[l] = out[l].max(d);
                }
                Domain::Colatitude => {
                    let lo = i.abs_diff(j);
                    let hi = (i + j).min(2 * n - i - j);
                    for slot in &mut out[lo..=hi] {
                        *slot = slot.max(d);
                    }
                }
            }
        }
    }
    Modulus { spacing: p.spacing(), values: out }
}

fn check_exponent(e: f64) -> Result<()> {
    if e > 0.0 && e <= 1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("Hölder exponent must lie in (0, 1], got {e}")))
    }
}

/// Smallest λ with ω(θ) ≤ λ θ^exponent at every nonzero lag.
pub fn min_holder_coeff(omega: &Modulus, exponent: f64) -> Result<f64> {
    check_exponent(exponent)?;
    if omega.values.len() < 2 {
        return Err(Error::Contract("modulus has no nonzero lag".into()));
    }
    Ok(omega
        .values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(l, w)| w / omega.lag(l).powf(exponent))
        .fold(0.0, f64::max))
}

/// `max_{i<j} |vᵢ − vⱼ| / |xᵢ − xⱼ|^exponent` for samples at arbitrary
/// distinct abscissae.
pub fn holder_coeff_scattered(x: &[f64], v: &[f64], exponent: f64) -> Result<f64> {
    check_exponent(exponent)?;
    if x.len() != v.len() || x.len() < 2 {
        return Err(Error::Contract("need at least two matching samples".into()));
    }
    let mut best: f64 = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d = (x[i] - x[j]).abs();
            if d == 0.0 {
                return Err(Error::Contract(format!("repeated abscissa {}", x[i])));
            }
            best = best.max((v[i] - v[j]).abs() / d.powf(exponent));
        }
    }
    Ok(best)
}

fn barrier_profile(lambda_bar: f64, delta: f64, theta: f64) -> f64 {
    // 2λ̄(√(δ+θ) − √δ), written without cancellation.
    2.0 * lambda_bar * theta / ((delta + theta).sqrt() + delta.sqrt())
}

/// Smallest δ tried by [`fit_delta`].
pub const DELTA_PROBE: f64 = 1e-15;

/// Largest δ ∈ (0, 1) with ω(θ) ≤ 2λ̄(√(δ+θ) − √δ) at every lag.
///
/// The right side decreases in δ, so the feasible set is an interval
/// `(0, δ*]` and bisection applies. Returns `1 − 1e−10` when every δ < 1 is
/// feasible.
pub fn fit_delta(omega: &Modulus, lambda_bar: f64) -> Result<f64> {
    if !(lambda_bar > 0.0) {
        return Err(Error::Contract(format!("λ̄ must be positive, got {lambda_bar}")));
    }
    let feasible = |delta: f64| {
        omega
            .values
            .iter()
            .enumerate()
            .all(|(l, &w)| w <= barrier_profile(lambda_bar, delta, omega.lag(l)))
    };
    let top = 1.0 - 1e-10;
    if feasible(top) {
        return Ok(top);
    }
    if !feasible(DELTA_PROBE) {
        return Err(Error::Infeasible(format!(
            "the δ-barrier condition fails at λ̄ = {lambda_bar} for every δ ≥ {DELTA_PROBE:e}"
        )));
    }
    let (mut lo, mut hi) = (DELTA_PROBE, top);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// λ̄ = λ · sup_I 1/φ.
pub fn lambda_bar(lambda: f64, w: &WarpFunction) -> f64 {
    lambda / w.inf_phi()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    pub delta: f64,
    pub lambda_bar: f64,
    pub eta: f64,
}

impl BarrierParams {
    pub fn new(delta: f64, lambda_bar: f64, eta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Contract(format!("δ must lie in (0, 1), got {delta}")));
        }
        if !(lambda_bar > 0.0 && eta > 0.0) {
            return Err(Error::Contract(format!(
                "λ̄ and η must be positive, got {lambda_bar} and {eta}"
            )));
        }
        Ok(BarrierParams { delta, lambda_bar, eta })
    }
}

/// κ(θ, t) = 2λ̄(√(δ+θ) − √δ) e^{−ηt}.
pub fn kappa(bp: &BarrierParams, theta: f64, t: f64) -> f64 {
    barrier_profile(bp.lambda_bar, bp.delta, theta) * (-bp.eta * t).exp()
}

/// sup_I φ · λ̄ · δ^{−1/2} · e^{−ηt}, the gradient bound implied by Z ≤ 0.
pub fn gradient_bound(bp: &BarrierParams, w: &WarpFunction, t: f64) -> f64 {
    w.sup_phi() * bp.lambda_bar / bp.delta.sqrt() * (-bp.eta * t).exp()
}

/// Fraction of the largest feasible δ used by [`fit_barrier`].
pub const BARRIER_DELTA_FRACTION: f64 = 0.5;
/// Fraction of the observed gradient decay rate used as η by [`fit_barrier`].
pub const BARRIER_ETA_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierFit {
    pub params: BarrierParams,
    /// Hölder-½ coefficient of ρ₀.
    pub lambda: f64,
    /// Largest δ for which γ₀ lies under the barrier.
    pub delta_max: f64,
    pub eta_hat: f64,
}

/// Barrier parameters read off a run: λ̄ from the Hölder-½ coefficient of
/// ρ₀, δ a fixed fraction of the largest value admitted by γ₀, and η a fixed
/// fraction of the fitted gradient decay rate `eta_hat`.
pub fn fit_barrier(rho0: &Profile, gamma0: &Profile, w: &WarpFunction, eta_hat: f64) -> Result<BarrierFit> {
    if rho0.repr() != Representation::Rho || gamma0.repr() != Representation::Gamma {
        return Err(Error::Contract("fit_barrier needs ρ₀ and γ₀ in that order".into()));
    }
    if !(eta_hat > 0.0) {
        return Err(Error::Infeasible(format!(
            "the gradient does not decay (fitted rate {eta_hat:e}), so no η > 0 fits"
        )));
    }
    let lambda = min_holder_coeff(&modulus_of_continuity(rho0), 0.5)?;
    if !(lambda > 0.0) {
        return Err(Error::Infeasible("ρ₀ is constant; the barrier is vacuous".into()));
    }
    let lb = lambda_bar(lambda, w);
    let delta_max = fit_delta(&modulus_of_continuity(gamma0), lb)?;
    Ok(BarrierFit {
        params: BarrierParams::new(BARRIER_DELTA_FRACTION * delta_max, lb, BARRIER_ETA_FRACTION * eta_hat)?,
        lambda,
        delta_max,
        eta_hat,
    })
}

/// Largest value of Z(x, y, t) = γ(y) − γ(x) − κ(d(x, y), t) found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZMax {
    pub value: f64,
    /// Node indices of x and y.
    pub x: usize,
    pub y: usize,
    pub t: f64,
}

/// Scans every ordered node pair of every γ-profile. Ties keep the earliest
/// time and then the lexicographically smallest (x, y).
pub fn z_monitor(states: &[(f64, Profile)], bp: &BarrierParams) -> Result<ZMax> {
    let mut best: Option<ZMax> = None;
    for (t, p) in states {
        if p.repr() != Representation::Gamma || p.domain() != Domain::Circle {
            return Err(Error::Contract("the Z monitor needs periodic γ-form profiles".into()));
        }
        let v = p.values();
        let n = v.len();
        let kap: Vec<f64> = (0..=n / 2).map(|l| kappa(bp, l as f64 * p.spacing(), *t)).collect();
        for x in 0..n {
            for y in 0..n {
                let l = x.abs_diff(y).min(n - x.abs_diff(y));
                let z = v[y] - v[x] - kap[l];
                if best.is_none_or(|b| z > b.value) {
                    best = Some(ZMax { value: z, x, y, t: *t });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Contract("the Z monitor needs at least one state".into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Decay rate η̂ (negative slope of log value against t).
    pub eta: f64,
    /// Prefactor C of C e^{−η̂ t}.
    pub c: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r2: f64,
    pub points: usize,
}

/// Least squares fit of `log value = log C − η t` over samples with t in `window`.
pub fn fit_decay_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < 2 {
        return Err(Error::Contract(format!(
            "decay fit needs at least two samples in [{}, {}]",
            window.0, window.1
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Contract(format!("nonpositive value {v} at t = {t} in the fit window")));
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in &pts {
        let (dt, dy) = (t - tm, v.ln() - ym);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Contract("decay fit needs at least two distinct times".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(DecayFit {
        eta: -slope,
        c: intercept.exp(),
        r2,
        points: pts.len(),
    })
}

/// First time the recorded gradient exceeds `g_max`, with the node attaining
/// it. A run stopped by step underflow reports its stop time and the node of
/// the largest gradient there. Completed runs give `None`.
pub fn detect_blowup(traj: &Trajectory, g_max: f64) -> Option<(f64, usize)> {
    if let Some(&(t, _, node)) = traj.gradient_history.iter().find(|(_, g, _)| *g > g_max) {
        return Some((t, node));
    }
    match &traj.termination {
        Termination::BlowupSuspected {
            t,
            signal: BlowupSignal::DtUnderflow { .. },
        } => traj.gradient_history.last().map(|&(_, _, node)| (*t, node)),
        _ => None,
    }
}

/// Per-record scalars; all concern ρ, whatever the run's unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub area: f64,
    pub volume: f64,
    pub sup_grad: f64,
    pub osc: f64,
    pub holder_half: f64,
    pub max_z: Option<f64>,
}

/// Converts any flow profile to ρ.
pub fn to_rho(p: &Profile, geometry: &Geometry) -> Result<Profile> {
    match geometry {
        Geometry::Rho(_) => Ok(p.clone()),
        Geometry::Gamma(t) => p.map(Representation::Rho, |g| t.inverse_interp(g)),
    }
}

/// Converts a ρ-profile to γ.
pub fn to_gamma(p: &Profile, t: &GammaTransform) -> Result<Profile> {
    match p.repr() {
        Representation::Gamma => Ok(p.clone()),
        Representation::Rho => p.map(Representation::Gamma, |r| t.forward(r)),
    }
}

/// Observer collecting [`DiagnosticsRecord`]s along a run.
///
/// Area is evaluated after every accepted step to track its largest
/// increase; the full record is taken every `every` steps and by
/// [`DiagnosticsRecorder::finish`]. When `keep_gamma` is set the γ-profiles
/// at record times are kept for a later Z scan.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecorder {
    functionals: Functionals,
    transform: Option<std::sync::Arc<GammaTransform>>,
    every: usize,
    steps: usize,
    last_area: Option<f64>,
    pub max_area_increase: f64,
    pub records: Vec<DiagnosticsRecord>,
    pub gamma_states: Vec<(f64, Profile)>,
    last_t: Option<f64>,
}

impl DiagnosticsRecorder {
    /// `transform` is required when γ-profiles are to be kept for a ρ-form run.
    pub fn new(
        warp: &WarpFunction,
        n: u32,
        every: usize,
        transform: Option<std::sync::Arc<GammaTransform>>,
    ) -> Result<Self> {
        Ok(DiagnosticsRecorder {
            functionals: Functionals::new(warp, n)?,
            transform,
            every: every.max(1),
            steps: 0,
            last_area: None,
            max_area_increase: f64::NEG_INFINITY,
            records: Vec::new(),
            gamma_states: Vec::new(),
            last_t: None,
        })
    }

    pub fn observe(&mut self, state: &FlowState) -> Result<()> {
        let rho = to_rho(state.profile(), state.geometry())?;
        let area = self.functionals.area(&rho)?;
        if let Some(prev) = self.last_area {
            self.max_area_increase = self.max_area_increase.max(area - prev);
        }
        self.last_area = Some(area);
        if self.steps.is_multiple_of(self.every) {
            self.record(state, &rho, area)?;
        }
        self.steps += 1;
        Ok(())
    }

    /// Records the final state unless it was just recorded.
    pub fn finish(&mut self, state: &FlowState) -> Result<()> {
        if self.last_t != Some(state.t()) {
            let rho = to_rho(state.profile(), state.geometry())?;
            let area = self.functionals.area(&rho)?;
            self.record(state, &rho, area)?;
        }
        Ok(())
    }

    fn record(&mut self, state: &FlowState, rho: &Profile, area: f64) -> Result<()> {
        let omega = modulus_of_continuity(rho);
        self.records.push(DiagnosticsRecord {
            t: state.t(),
            area,
            volume: self.functionals.volume(rho)?,
            sup_grad: gradient_sup(rho),
            osc: rho.oscillation(),
            holder_half: min_holder_coeff(&omega, 0.5)?,
            max_z: None,
        });
        self.last_t = Some(state.t());
        let gamma = match (state.geometry(), &self.transform) {
            (Geometry::Gamma(_), _) => Some(state.profile().clone()),
            (Geometry::Rho(_), Some(t)) => Some(to_gamma(rho, t)?),
            (Geometry::Rho(_), None) => None,
        };
        if let Some(g) = gamma {
            if g.domain() == Domain::Circle {
                self.gamma_states.push((state.t(), g));
            }
        }
        Ok(())
    }

    /// Fills `max_z` of every record from the stored γ-profiles.
    pub fn apply_barrier(&mut self, bp: &BarrierParams) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for (rec, state) in self.records.iter_mut().zip(&self.gamma_states) {
            let z = z_monitor(std::slice::from_ref(state), bp)?.value;
            rec.max_z = Some(z);
            worst = worst.max(z);
        }
        Ok(worst)
    }
}
