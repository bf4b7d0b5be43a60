use crate::error::{Error, Result};

use super::rhs::{Operator, Scratch};
use super::{check_range, gradient_sup_raw, Domain, FlowState, Geometry};

/// Fraction of the linear stability limit used by [`stable_dt`].
pub const CFL_SAFETY: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Accepted sup-norm gap between one full step and two half steps.
    pub tol: f64,
    pub dt_min: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            tol: 1e-8,
            dt_min: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    pub dump_times: Vec<f64>,
    pub g_max: f64,
    pub step: StepOptions,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        RunOptions {
            t_end,
            dump_times: Vec::new(),
            g_max: 1e3,
            step: StepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlowupSignal {
    GradientExceeded { node: usize, value: f64 },
    DtUnderflow { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    ReachedEnd,
    BlowupSuspected { t: f64, signal: BlowupSignal },
    RangeError { t: f64, error: Error },
}

impl Termination {
    pub fn describe(&self) -> String {
        match self {
            Termination::ReachedEnd => "reached t_end".into(),
            Termination::BlowupSuspected { t, signal } => match signal {
                BlowupSignal::GradientExceeded { node, value } => {
                    format!("blow-up suspected at t = {t}: gradient {value:e} at node {node}")
                }
                BlowupSignal::DtUnderflow { dt } => {
                    format!("blow-up suspected at t = {t}: time step {dt:e} below dt_min")
                }
            },
            Termination::RangeError { t, error } => format!("range error at t = {t}: {error}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at the requested dump times that were reached.
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// (t, sup |∂_θ v|, node) after every accepted step, starting at t₀.
    pub gradient_history: Vec<(f64, f64, usize)>,
}

struct Stepper {
    op: Operator,
    k: Vec<f64>,
    stage: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    scratch: Scratch,
}

enum Attempt {
    Done { values: Vec<f64>, err: f64 },
    LeftRange,
}

impl Stepper {
    fn new(state: &FlowState) -> Self {
        let len = state.profile().values().len();
        Stepper {
            op: Operator::new(state),
            k: vec![0.0; len],
            stage: vec![0.0; len],
            full: vec![0.0; len],
            half: vec![0.0; len],
            scratch: Scratch::default(),
        }
    }

    fn eval(&mut self, y_is_stage: bool, y: &[f64]) -> Result<bool> {
        let src: &[f64] = if y_is_stage { &self.stage } else { y };
        match self.op.eval(src, &mut self.k, &mut self.scratch) {
            Ok(()) => Ok(true),
            Err(Error::Range { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Midpoint RK2 from `y` with step `dt` into `out`, reusing `k0 = f(y)`.
    fn midpoint(&mut self, y: &[f64], k0: &[f64], dt: f64, out_half: bool) -> Result<bool> {
        for ((s, &yi), &ki) in self.stage.iter_mut().zip(y).zip(k0) {
            *s = yi + 0.5 * dt * ki;
        }
        if !self.eval(true, y)? {
            return Ok(false);
        }
        let out = if out_half { &mut self.half } else { &mut self.full };
        for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(&self.k) {
            *o = yi + dt * ki;
        }
        Ok(true)
    }

    fn attempt(&mut self, y: &[f64], k0: &[f64], dt: f64) -> Result<Attempt> {
        if !self.midpoint(y, k0, dt, false)? {
            return Ok(Attempt::LeftRange);
        }
        if !self.midpoint(y, k0, 0.5 * dt, true)? {
            return Ok(Attempt::LeftRange);
        }
        let mid = self.half.clone();
        if !self.eval(false, &mid)? {
            return Ok(Attempt::LeftRange);
        }
        let k1 = self.k.clone();
        if !self.midpoint(&mid, &k1, 0.5 * dt, true)? {
            return Ok(Attempt::LeftRange);
        }
        let err = self
            .full
            .iter()
            .zip(&self.half)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(Attempt::Done {
            values: self.half.clone(),
            err: if err.is_nan() { f64::INFINITY } else { err },
        })
    }
}

/// Explicit step bound `0.4·h²/2 · min_f c_f`, where `c_f = ψ_f (1 + d_f²)^{3/2}`
/// (γ-form) or `φ_f (1 + (d_f/φ_f)²)^{3/2}` (ρ-form) is the inverse diffusion
/// coefficient on face f, with ψ_f, φ_f the smaller of the two adjacent node
/// values. On colatitude grids with n > 2 the pole stencil is stiffer by n/2.
pub fn stable_dt(state: &FlowState) -> f64 {
    let p = state.profile();
    stable_dt_raw(state.geometry(), p.domain(), state.n(), p.values(), p.spacing())
}

pub(crate) fn stable_dt_raw(geometry: &Geometry, domain: Domain, n: u32, v: &[f64], h: f64) -> f64 {
    let coef: Vec<f64> = match geometry {
        Geometry::Gamma(t) => v.iter().map(|&x| t.psi_pair_interp(x).0).collect(),
        Geometry::Rho(w) => v.iter().map(|&x| w.phi(x)).collect(),
    };
    stable_dt_with(matches!(geometry, Geometry::Gamma(_)), domain, n, v, h, |j| coef[j])
}

/// [`stable_dt_raw`] with node values of ψ (or φ) supplied by `coef`.
fn stable_dt_with(gamma: bool, domain: Domain, n: u32, v: &[f64], h: f64, coef: impl Fn(usize) -> f64) -> f64 {
    let len = v.len();
    let faces = if domain.is_periodic() { len } else { len - 1 };
    let mut best = f64::INFINITY;
    for f in 0..faces {
        let r = if f + 1 == len { 0 } else { f + 1 };
        let d = (v[r] - v[f]) / h;
        let c = coef(f).min(coef(r));
        let s = if gamma { d } else { d / c };
        best = best.min(c * (1.0 + s * s).powf(1.5));
    }
    let pole = if domain == Domain::Colatitude && n > 2 {
        2.0 / n as f64
    } else {
        1.0
    };
    CFL_SAFETY * h * h / 2.0 * best * pole
}

/// Advances by one accepted step starting from `dt`, halving on rejection.
/// Returns the new state, the step actually taken, and a suggestion for the
/// next one.
pub fn step(state: &FlowState, dt: f64, opts: &StepOptions) -> Result<(FlowState, f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("time step must be positive, got {dt}")));
    }
    let mut stepper = Stepper::new(state);
    let y = state.profile().values().to_vec();
    let mut k0 = vec![0.0; y.len()];
    stepper.op.eval(&y, &mut k0, &mut stepper.scratch)?;
    let mut dt = dt;
    loop {
        if let Attempt::Done { values, err } = stepper.attempt(&y, &k0, dt)? {
            if err <= opts.tol {
                check_range(&values, state.geometry().range())?;
                let next = dt * growth(err, opts.tol);
                return Ok((state.advanced(values, state.t() + dt), dt, next));
            }
        }
        dt *= 0.5;
        if dt < opts.dt_min {
            return Err(Error::DtUnderflow { t: state.t(), dt });
        }
    }
}

fn growth(err: f64, tol: f64) -> f64 {
    if err == 0.0 {
        2.0
    } else {
        (0.9 * (tol / err).cbrt()).clamp(0.2, 2.0)
    }
}

/// Integrates from `initial` to `opts.t_end`.
///
/// `observer` sees the initial state and every accepted state; an error from
/// it aborts the run. Snapshots are taken exactly at the dump times (steps are
/// shortened to land on them). The run stops early when the discrete gradient
/// exceeds `g_max`, when the step falls below `dt_min`, or when an accepted
/// state leaves the admissible range.
pub fn run_flow(
    initial: &FlowState,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&FlowState) -> Result<()>,
) -> Result<Trajectory> {
    let t0 = initial.t();
    if !(opts.t_end > t0) {
        return Err(Error::Contract(format!(
            "t_end = {} must exceed the start time {t0}",
            opts.t_end
        )));
    }
    if !(opts.g_max > 0.0 && opts.step.tol > 0.0 && opts.step.dt_min > 0.0) {
        return Err(Error::Contract("g_max, step tolerance and dt_min must be positive".into()));
    }
    let mut dumps: Vec<f64> = opts
        .dump_times
        .iter()
        .copied()
        .filter(|&d| d >= t0 && d <= opts.t_end)
        .collect();
    dumps.sort_by(f64::total_cmp);
    dumps.dedup();
    let mut next_dump = 0;

    let mut state = initial.clone();
    let mut stepper = Stepper::new(&state);
    let h = stepper.op.spacing();
    let domain = stepper.op.domain();
    let gamma = matches!(stepper.op.geometry(), Geometry::Gamma(_));
    let mut snapshots = Vec::new();
    let mut history = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);

    observer(&state)?;
    let (g, node) = gradient_sup_raw(domain, state.profile().values(), h);
    history.push((t0, g, node));
    while next_dump < dumps.len() && dumps[next_dump] <= t0 {
        snapshots.push(state.clone());
        next_dump += 1;
    }
    let finish = |state: FlowState, snapshots, termination, accepted, rejected, history| Trajectory {
        snapshots,
        final_state: state,
        termination,
        accepted_steps: accepted,
        rejected_steps: rejected,
        gradient_history: history,
    };
    if g > opts.g_max {
        let termination = Termination::BlowupSuspected {
            t: t0,
            signal: BlowupSignal::GradientExceeded { node, value: g },
        };
        return Ok(finish(state, snapshots, termination, accepted, rejected, history));
    }

    let mut k0 = vec![0.0; state.profile().values().len()];
    let mut dt = f64::INFINITY;
    loop {
        let t = state.t();
        if t >= opts.t_end {
            return Ok(finish(state, snapshots, Termination::ReachedEnd, accepted, rejected, history));
        }
        let target = if next_dump < dumps.len() {
            dumps[next_dump].min(opts.t_end)
        } else {
            opts.t_end
        };
        let y = state.profile().values().to_vec();
        stepper.op.eval(&y, &mut k0, &mut stepper.scratch)?;
        let coef = &stepper.scratch.coef;
        dt = dt.min(stable_dt_with(gamma, domain, state.n(), &y, h, |j| coef[j].0));

        let mut trial = dt;
        let mut clipped = false;
        if target - t <= trial {
            trial = target - t;
            clipped = true;
        }
        let (values, err) = loop {
            match stepper.attempt(&y, &k0, trial)? {
                Attempt::Done { values, err } if err <= opts.step.tol => break (values, err),
                _ => {
                    rejected += 1;
                    trial *= 0.5;
                    clipped = false;
                    if trial < opts.step.dt_min {
                        let termination = Termination::BlowupSuspected {
                            t,
                            signal: BlowupSignal::DtUnderflow { dt: trial },
                        };
                        return Ok(finish(state, snapshots, termination, accepted, rejected, history));
                    }
                }
            }
        };
        accepted += 1;
        let t_new = if clipped { target } else { t + trial };
        if let Err(error) = check_range(&values, stepper.op.geometry().range()) {
            let termination = Termination::RangeError { t: t_new, error };
            return Ok(finish(state, snapshots, termination, accepted, rejected, history));
        }
        state = state.advanced(values, t_new);
        if !clipped {
            dt = trial * growth(err, opts.step.tol);
        }

        let (g, node) = gradient_sup_raw(domain, state.profile().values(), h);
        history.push((t_new, g, node));
        observer(&state)?;
        while next_dump < dumps.len() && dumps[next_dump] <= t_new {
            snapshots.push(state.clone());
            next_dump += 1;
        }
        if g > opts.g_max {
            let termination = Termination::BlowupSuspected {
                t: t_new,
                signal: BlowupSignal::GradientExceeded { node, value: g },
            };
            return Ok(finish(state, snapshots, termination, accepted, rejected, history));
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::flow::{Profile, Representation};
    use crate::warp::{GammaTransform, Interval, WarpFunction, WarpKind};

    fn unit_gamma(p: Profile) -> FlowState {
        let w = WarpFunction::new(WarpKind::Constant(1.0), Interval::new(-50.0, 50.0).unwrap()).unwrap();
        let t = GammaTransform::new(&w, 0.0, 1e-12).unwrap();
        FlowState::new(p, 0.0, 1, Geometry::Gamma(Arc::new(t))).unwrap()
    }

    #[test]
    fn flat_state_step_bound() {
        let p = Profile::from_fn(Domain::Circle, Representation::Gamma, 628, |_| 0.0).unwrap();
        let s = unit_gamma(p);
        let h = s.profile().spacing();
        assert!((stable_dt(&s) - 0.4 * h * h / 2.0).abs() < 1e-18);
        let h = 0.01;
        let v = vec![0.0; 32];
        let dt = stable_dt_raw(s.geometry(), Domain::Circle, 1, &v, h);
        assert!((dt - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn unit_slope_raises_the_bound_by_two_to_three_halves() {
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 64, |_| 0.0).unwrap());
        let h = 0.01;
        let flat = vec![0.0; 65];
        // Triangle wave with slopes ±1.
        let tri: Vec<f64> = (0..65).map(|j| if j <= 32 { j as f64 * h } else { (64 - j) as f64 * h }).collect();
        let a = stable_dt_raw(s.geometry(), Domain::Colatitude, 1, &flat, h);
        let b = stable_dt_raw(s.geometry(), Domain::Colatitude, 1, &tri, h);
        assert!((b / a - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn constant_state_is_unchanged_by_a_step() {
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 64, |_| 0.7).unwrap());
        let (next, used, _) = step(&s, 0.3, &StepOptions::default()).unwrap();
        assert_eq!(next.profile().values(), s.profile().values());
        assert_eq!(used, 0.3);
    }

    #[test]
    fn rejected_steps_shrink_until_accepted() {
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 64, |t| 0.1 * t.sin()).unwrap());
        let (_, used, _) = step(&s, 1.0, &StepOptions::default()).unwrap();
        assert!(used < 1e-2);
        let tight = StepOptions {
            tol: 1e-300,
            dt_min: 1e-6,
        };
        assert!(matches!(step(&s, 1e-3, &tight), Err(Error::DtUnderflow { .. })));
    }

    #[test]
    fn heat_mode_decays_at_unit_rate() {
        // Constant warp 1 with small data: γ_t ≈ γ_θθ, so sin θ decays like e^{−t}.
        let a = 1e-4;
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 64, |t| a * t.sin()).unwrap());
        let traj = run_flow(&s, &RunOptions::new(0.5), &mut |_| Ok(())).unwrap();
        assert_eq!(traj.termination, Termination::ReachedEnd);
        let v = traj.final_state.profile().values();
        assert!((v[16] / a - (-0.5f64).exp()).abs() < 1e-3);
        assert_eq!(traj.final_state.t(), 0.5);
    }

    #[test]
    fn dumps_land_exactly() {
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 32, |t| 0.01 * t.cos()).unwrap());
        let mut opts = RunOptions::new(0.2);
        opts.dump_times = vec![0.0, 0.05, 0.2, 0.3];
        let mut calls = 0;
        let traj = run_flow(&s, &opts, &mut |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t()).collect();
        assert_eq!(times, vec![0.0, 0.05, 0.2]);
        assert_eq!(calls, traj.accepted_steps + 1);
    }

    #[test]
    fn steep_data_trip_the_gradient_threshold() {
        let s = unit_gamma(Profile::from_fn(Domain::Circle, Representation::Gamma, 64, |t| 0.5 * (4.0 * t).sin()).unwrap());
        let mut opts = RunOptions::new(1.0);
        opts.g_max = 1.0;
        let traj = run_flow(&s, &opts, &mut |_| Ok(())).unwrap();
        assert!(matches!(
            traj.termination,
            Termination::BlowupSuspected {
                t,
                signal: BlowupSignal::GradientExceeded { .. }
            } if t == 0.0
        ));
    }
}
