//! The five subcommands. Each returns its exit status and a text report that
//! is also written to the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpflow::blowup::{
    build_initial_data, initial_profile, refinement_study, search_params, ExperimentOptions, Extension,
    SearchOptions,
};
use warpflow::diagnostics::{
    fit_barrier, fit_decay_rate, min_holder_coeff, modulus_of_continuity, BarrierParams, DiagnosticsRecorder,
};
use warpflow::flow::{run_flow, Domain, FlowState, Geometry, Profile, Representation, RunOptions, StepOptions, Termination};
use warpflow::warp::CONDITION2_GRID;
use warpflow::{check_condition2, GammaTransform};

use crate::config::{Barrier, InitialKind, RunConfig};
use crate::output::{header, num, read_csv, short, write_csv};
use crate::CliError;

/// Z values up to this count as lying under the barrier.
pub const BARRIER_SLACK: f64 = 1e-8;

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn transform(&self) -> Result<Arc<GammaTransform>, CliError> {
        let w = self.cfg.warp_function()?;
        let base = self.cfg.base();
        Ok(Arc::new(GammaTransform::new(&w, base, self.cfg.warp.tolerance)?))
    }
}

pub struct Outcome {
    pub status: i32,
    pub report: String,
}

fn finish(ctx: &Context, file: &str, status: i32, report: String) -> Result<Outcome, CliError> {
    std::fs::write(ctx.path(file), &report)?;
    Ok(Outcome { status, report })
}

pub fn cmd_check_warp(ctx: &Context) -> Result<Outcome, CliError> {
    let w = ctx.cfg.warp_function()?;
    let c2 = check_condition2(&w, CONDITION2_GRID)?;
    let t = ctx.transform()?;
    let mut r = String::new();
    writeln!(r, "warp: {} on {}", w.kind().name(), w.interval()).unwrap();
    writeln!(r, "inf φ = {}, sup φ = {}", w.inf_phi(), w.sup_phi()).unwrap();
    writeln!(
        r,
        "structure condition φ′² − φφ″ ≥ 0: {} (min {} at ρ = {})",
        if c2.holds { "HOLDS" } else { "FAILS" },
        c2.min_value,
        c2.argmin
    )
    .unwrap();
    writeln!(r, "γ-transform: base ρ̄ = {}, image J = {}", t.base(), t.image()).unwrap();
    finish(ctx, "check-warp.txt", 0, r)
}

pub fn cmd_transform(ctx: &Context) -> Result<Outcome, CliError> {
    let t = ctx.transform()?;
    let interval = t.warp().interval();
    let mut rows = Vec::new();
    for rho in interval.grid(ctx.cfg.transform.samples) {
        let gamma = t.forward(rho)?;
        rows.push(vec![num(rho), num(gamma), num(t.psi(gamma)?), num(t.psi_prime(gamma)?)]);
    }
    let n = rows.len();
    write_csv(&ctx.path("transform.csv"), &header(&["rho", "gamma", "psi", "psi_prime"]), rows)?;
    Ok(Outcome {
        status: 0,
        report: format!("transform.csv: {n} samples of Γ, ψ and ψ′ over {interval}, J = {}\n", t.image()),
    })
}

/// ρ-samples of the configured initial profile.
fn initial_rho(cfg: &RunConfig, domain: Domain, segments: usize) -> Result<Vec<f64>, CliError> {
    let init = &cfg.initial;
    let h = domain.length() / segments as f64;
    let thetas: Vec<f64> = (0..domain.node_count(segments)).map(|j| j as f64 * h).collect();
    let fourier = |cos: &[[f64; 2]], sin: &[[f64; 2]]| -> Vec<f64> {
        thetas
            .iter()
            .map(|&th| {
                init.mean
                    + cos.iter().map(|[m, a]| a * (m * th).cos()).sum::<f64>()
                    + sin.iter().map(|[m, b]| b * (m * th).sin()).sum::<f64>()
            })
            .collect()
    };
    match init.kind {
        InitialKind::Constant => Ok(vec![init.mean; thetas.len()]),
        InitialKind::Fourier => Ok(fourier(&init.cos, &init.sin)),
        InitialKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (mut cos, mut sin) = (Vec::new(), Vec::new());
            for m in 1..=init.modes {
                let s = init.amplitude / (m * m) as f64;
                cos.push([m as f64, s * rng.gen_range(-1.0..=1.0)]);
                sin.push([m as f64, s * rng.gen_range(-1.0..=1.0)]);
            }
            Ok(fourier(&cos, &sin))
        }
        InitialKind::File => {
            let path = init.path.as_ref().expect("validated");
            let (_, rows) = read_csv(path)?;
            if rows.len() != thetas.len() {
                return Err(CliError::Config(format!(
                    "{} has {} rows, the {domain} grid with {segments} segments has {} nodes",
                    path.display(),
                    rows.len(),
                    thetas.len()
                )));
            }
            rows.iter()
                .zip(&thetas)
                .map(|(row, &th)| match row.as_slice() {
                    [x, v] if (x - th).abs() <= 1e-9 * domain.length() => Ok(*v),
                    [x, _] => Err(CliError::Config(format!("θ = {x} is off the uniform grid (expected {th})"))),
                    _ => Err(CliError::Config(format!("{} must have two columns", path.display()))),
                })
                .collect()
        }
        InitialKind::Blowup => unreachable!("blow-up data are built in γ-form"),
    }
}

fn record_rows(recorder: &DiagnosticsRecorder) -> Vec<Vec<String>> {
    recorder
        .records
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.area),
                num(r.volume),
                num(r.sup_grad),
                num(r.osc),
                num(r.holder_half),
                r.max_z.map(num).unwrap_or_default(),
            ]
        })
        .collect()
}

fn write_diagnostics(ctx: &Context, recorder: &DiagnosticsRecorder) -> Result<(), CliError> {
    write_csv(
        &ctx.path("diagnostics.csv"),
        &header(&["t", "area", "volume", "sup_grad", "osc", "holder_half", "max_z"]),
        record_rows(recorder),
    )
}

fn write_snapshots(ctx: &Context, states: &[&FlowState]) -> Result<(), CliError> {
    let mut rho = Vec::new();
    for s in states {
        rho.push(warpflow::diagnostics::to_rho(s.profile(), s.geometry())?);
    }
    let mut head = vec!["theta".to_string()];
    head.extend(states.iter().map(|s| format!("t={}", s.t())));
    let thetas = states[0].profile().thetas();
    let rows = thetas.iter().enumerate().map(|(j, th)| {
        let mut row = vec![num(*th)];
        row.extend(rho.iter().map(|p| num(p.values()[j])));
        row
    });
    write_csv(&ctx.path("snapshots.csv"), &head, rows)
}

pub fn cmd_run(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let f = &cfg.flow;
    let w = cfg.warp_function()?;
    let barrier = cfg.diagnostics.barrier()?;
    let repr = cfg.representation();
    let mut r = String::new();

    let transform = if repr == Representation::Gamma || barrier != Barrier::Off {
        Some(ctx.transform()?)
    } else {
        None
    };
    let (profile, t_end) = if cfg.initial.kind == InitialKind::Blowup {
        let t = transform.as_ref().expect("γ-form run");
        let b = &cfg.blowup;
        let opts = search_options(cfg);
        let search = search_params(b.sigma, b.lambda, t, &opts)?;
        let sp = search.chosen.ok_or_else(|| {
            CliError::Core(warpflow::Error::Infeasible(format!("no feasible (k, τ):\n{}", search.log())))
        })?;
        writeln!(r, "blow-up parameters: k = {}, τ = {:e}", sp.k, sp.tau).unwrap();
        (initial_profile(&sp, f.grid_n)?, sp.tau)
    } else {
        let domain = cfg.domain();
        let rho = initial_rho(cfg, domain, f.grid_n)?;
        let values = match &transform {
            Some(t) if repr == Representation::Gamma => {
                rho.iter().map(|&v| t.forward(v)).collect::<Result<Vec<_>, _>>()?
            }
            _ => rho,
        };
        (Profile::new(domain, repr, values)?, f.t_end)
    };
    let geometry = match repr {
        Representation::Rho => Geometry::Rho(w.clone()),
        Representation::Gamma => Geometry::Gamma(transform.clone().expect("γ-form run")),
    };
    let initial = FlowState::new(profile, 0.0, f.n, geometry).map_err(|e| match e {
        warpflow::Error::Range { .. } => CliError::Config(format!("initial data leave the admissible range: {e}")),
        e => e.into(),
    })?;
    let rho0 = warpflow::diagnostics::to_rho(initial.profile(), initial.geometry())?;

    let opts = RunOptions {
        t_end,
        dump_times: f.dump_times.iter().copied().filter(|&d| d <= t_end).collect(),
        g_max: f.g_max,
        step: StepOptions {
            tol: f.step_tol,
            dt_min: f.dt_min,
        },
    };
    let keep_gamma = if barrier != Barrier::Off { transform.clone() } else { None };
    let mut recorder = DiagnosticsRecorder::new(&w, f.n, cfg.diagnostics.every, keep_gamma)?;
    let traj = match run_flow(&initial, &opts, &mut |s| recorder.observe(s)) {
        Ok(t) => t,
        Err(e) => {
            write_diagnostics(ctx, &recorder)?;
            return Err(e.into());
        }
    };
    recorder.finish(&traj.final_state)?;

    let mut status = 0;
    let records = &recorder.records;
    let (first, last) = (&records[0], &records[records.len() - 1]);
    let drift = if first.volume != 0.0 {
        (last.volume - first.volume) / first.volume.abs()
    } else {
        last.volume - first.volume
    };
    let window = cfg.diagnostics.fit_window.map_or((0.5 * last.t, last.t), |[a, b]| (a, b));
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.sup_grad)).collect();
    let fit = fit_decay_rate(&series, window);

    match &traj.termination {
        Termination::ReachedEnd => {
            let verdict = if last.osc <= cfg.diagnostics.converged_osc {
                "converged"
            } else {
                "not converged"
            };
            write!(r, "{verdict}, drift {}", short(drift)).unwrap();
            match &fit {
                Ok(d) => writeln!(r, ", η̂ = {} (R² = {}, {} points)", d.eta, d.r2, d.points).unwrap(),
                Err(_) if last.sup_grad == 0.0 => writeln!(r, ", gradient vanishes").unwrap(),
                Err(e) => writeln!(r, ", η̂ unavailable: {e}").unwrap(),
            }
        }
        Termination::BlowupSuspected { t, .. } => {
            writeln!(r, "blow-up suspected at T̂ = {t}").unwrap();
        }
        Termination::RangeError { t, error } => {
            writeln!(r, "range error at t = {t}: {error}").unwrap();
            status = 1;
        }
    }
    writeln!(r, "termination: {}", traj.termination.describe()).unwrap();
    writeln!(
        r,
        "steps: {} accepted, {} rejected; final t = {}",
        traj.accepted_steps,
        traj.rejected_steps,
        traj.final_state.t()
    )
    .unwrap();
    if let Some(t) = &transform {
        writeln!(r, "γ-transform base ρ̄ = {}", t.base()).unwrap();
    }
    writeln!(r, "relative volume drift: {}", short(drift)).unwrap();
    writeln!(r, "largest area increase per step: {}", short(recorder.max_area_increase.max(0.0))).unwrap();
    writeln!(r, "final oscillation: {}", short(last.osc)).unwrap();

    let bp = match barrier {
        Barrier::Off => None,
        Barrier::Explicit(e) => Some(BarrierParams::new(e.delta, e.lambda_bar, e.eta)?),
        Barrier::AutoFit => {
            let gamma0 = &recorder.gamma_states[0].1;
            let fitted = fit.as_ref().map_err(|e| e.clone()).and_then(|d| fit_barrier(&rho0, gamma0, &w, d.eta));
            match fitted {
                Ok(b) => {
                    writeln!(
                        r,
                        "barrier fit: λ = {}, δ_max = {}, η̂ = {}",
                        b.lambda, b.delta_max, b.eta_hat
                    )
                    .unwrap();
                    Some(b.params)
                }
                Err(e) => {
                    writeln!(r, "barrier: no feasible fit: {e}").unwrap();
                    status = 1;
                    None
                }
            }
        }
    };
    if let Some(bp) = bp {
        let worst = recorder.apply_barrier(&bp)?;
        writeln!(
            r,
            "barrier: δ = {}, λ̄ = {}, η = {}; max Z = {} ({})",
            bp.delta,
            bp.lambda_bar,
            bp.eta,
            short(worst),
            if worst <= BARRIER_SLACK { "under the barrier" } else { "VIOLATED" }
        )
        .unwrap();
        if worst > BARRIER_SLACK {
            status = 1;
        }
    }

    write_diagnostics(ctx, &recorder)?;
    let mut states: Vec<&FlowState> = traj.snapshots.iter().collect();
    if states.last().is_none_or(|s| s.t() != traj.final_state.t()) {
        states.push(&traj.final_state);
    }
    write_snapshots(ctx, &states)?;
    finish(ctx, "summary.txt", status, r)
}

pub fn cmd_modulus(ctx: &Context, input: &Path) -> Result<Outcome, CliError> {
    let (_, rows) = read_csv(input)?;
    let domain = ctx.cfg.domain();
    let segments = match domain {
        Domain::Circle => rows.len(),
        _ => rows.len().saturating_sub(1),
    };
    let h = domain.length() / segments.max(1) as f64;
    let mut values = Vec::with_capacity(rows.len());
    for (j, row) in rows.iter().enumerate() {
        match row.as_slice() {
            [x, v] if (x - j as f64 * h).abs() <= 1e-9 * domain.length() => values.push(*v),
            [x, _] => {
                return Err(CliError::Config(format!(
                    "θ = {x} in row {} is off the uniform {domain} grid",
                    j + 2
                )))
            }
            _ => return Err(CliError::Config(format!("{} must have two columns", input.display()))),
        }
    }
    let p = Profile::new(domain, Representation::Rho, values)?;
    let omega = modulus_of_continuity(&p);
    let rows = omega
        .values
        .iter()
        .enumerate()
        .map(|(l, w)| vec![l.to_string(), num(omega.lag(l)), num(*w)]);
    write_csv(&ctx.path("modulus.csv"), &header(&["lag", "theta", "omega"]), rows)?;
    let sigma = ctx.cfg.diagnostics.sigma;
    let mut r = String::new();
    writeln!(r, "profile: {} samples on {domain}", p.values().len()).unwrap();
    writeln!(r, "λ_min(σ = {sigma}) = {}", min_holder_coeff(&omega, sigma)?).unwrap();
    writeln!(r, "λ_min(σ = 0.5) = {}", min_holder_coeff(&omega, 0.5)?).unwrap();
    finish(ctx, "modulus-summary.txt", 0, r)
}

fn search_options(cfg: &RunConfig) -> SearchOptions {
    SearchOptions {
        tau0: cfg.blowup.tau0,
        beta: cfg.blowup.beta,
        k_max: cfg.blowup.k_max,
        ..SearchOptions::default()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn cmd_blowup(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let b = &cfg.blowup;
    let t = ctx.transform()?;
    let search = search_params(b.sigma, b.lambda, &t, &search_options(cfg))?;
    let rows = search.candidates.iter().map(|c| {
        let p = &c.properties;
        let v = c.verification.as_ref();
        vec![
            c.k.to_string(),
            num(c.tau),
            p.range_ok.to_string(),
            num(p.midpoint_gap),
            num(p.holder_coeff),
            num(p.holder_budget),
            opt(v.map(|v| v.zeta1.value)),
            opt(v.map(|v| v.zeta2.value)),
            v.map(|v| v.pass.to_string()).unwrap_or_default(),
        ]
    });
    write_csv(
        &ctx.path("blowup-search.csv"),
        &header(&[
            "k",
            "tau",
            "range_ok",
            "midpoint_gap",
            "holder_coeff",
            "holder_budget",
            "residual_zeta1",
            "residual_zeta2",
            "pass",
        ]),
        rows,
    )?;

    let c = &search.constants;
    let mut r = String::new();
    writeln!(r, "warp: {} on {}, γ-transform base ρ̄ = {}", t.warp().kind().name(), t.warp().interval(), t.base()).unwrap();
    writeln!(r, "σ = {}, λ = {}, μ = {}", c.sigma, b.lambda, c.mu).unwrap();
    writeln!(r, "p = {}, c₁ = {}, c₂ = {}, ψ(0) = {}, ψ″(0) = {}", c.p, c.c1, c.c2, c.psi0, c.psi2).unwrap();
    let Some(sp) = search.chosen else {
        writeln!(r, "parameter search: no feasible (k, τ) with k ≤ {}", b.k_max).unwrap();
        r.push_str(&search.log());
        return finish(ctx, "blowup-report.txt", 1, r);
    };
    let chosen = search.candidates.iter().find(|c| c.k == sp.k).expect("chosen candidate");
    let v = chosen.verification.as_ref().expect("verified");
    let p = &chosen.properties;
    writeln!(r, "chosen: k = {}, τ = {:e}, sup ζ = {}", sp.k, sp.tau, sp.amplitude()).unwrap();
    writeln!(
        r,
        "subsolution residual max: ζ₁ {} (normalized {}), ζ₂ {} (normalized {}) over {} points: {}",
        short(v.zeta1.value),
        short(v.zeta1.normalized),
        short(v.zeta2.value),
        short(v.zeta2.normalized),
        v.points,
        if v.pass { "PASS" } else { "FAIL" }
    )
    .unwrap();
    writeln!(
        r,
        "properties: ζ ∈ [{:e}, {:e}] within J: {}; midpoint gap {:e}; Hölder coefficient {} / budget {}",
        p.zeta_min, p.zeta_max, p.range_ok, p.midpoint_gap, p.holder_coeff, p.holder_budget
    )
    .unwrap();

    let mut status = 0;
    for &n in &b.levels {
        let d = build_initial_data(&sp, n)?;
        writeln!(
            r,
            "initial data N = {n}: lower bound margin {}, Hölder coefficient {} < μ, end curvature {:e} / {:e}",
            short(d.lower_margin),
            d.holder_coeff,
            d.end_curvature[0],
            d.end_curvature[1]
        )
        .unwrap();
    }
    let opts = ExperimentOptions {
        g_max: b.g_max,
        max_extension_nodes: b.extension_nodes,
        ..ExperimentOptions::default()
    };
    let study = refinement_study(&sp, &t, &b.levels, &opts)?;
    for run in &study.runs {
        let n = run.segments;
        write!(r, "N = {n}: ").unwrap();
        match run.t_hat {
            Some(th) => write!(r, "T̂ = {th}").unwrap(),
            None => write!(r, "no blow-up detected").unwrap(),
        }
        if run.degenerate {
            write!(r, " (degenerate: the initial gradient already exceeds G_max = {})", b.g_max).unwrap();
        }
        if let Some((node, theta)) = run.witness {
            write!(r, ", witness node {node} (θ = {})", short(theta)).unwrap();
        }
        writeln!(r, "; {}; {} steps", run.termination, run.accepted_steps).unwrap();
        writeln!(
            r,
            "  comparison min(γ̃ − ζ) = {} (tolerance {:e}): {}; series in blowup-comparison-N{n}.csv",
            short(run.comparison_min),
            run.tol_cmp,
            match run.comparison_violation {
                None => "holds".to_string(),
                Some(tv) => format!("VIOLATED at t = {tv}"),
            }
        )
        .unwrap();
        match &run.extension {
            Extension::Skipped(why) => writeln!(r, "  odd extension: skipped ({why})").unwrap(),
            Extension::Ran { t_hat, relative_gap } => writeln!(
                r,
                "  odd extension: T̂ = {}, relative gap {}",
                t_hat.map_or("none".into(), |x| x.to_string()),
                relative_gap.map_or("n/a".into(), short)
            )
            .unwrap(),
        }
        if !run.comparison_ok() {
            status = 1;
        }
        write_csv(
            &ctx.path(&format!("blowup-comparison-N{n}.csv")),
            &header(&["t", "margin"]),
            run.comparison.iter().map(|(t, m)| vec![num(*t), num(*m)]),
        )?;
        write_csv(
            &ctx.path(&format!("blowup-gradient-N{n}.csv")),
            &header(&["t", "sup_grad"]),
            run.gradient.iter().map(|(t, g)| vec![num(*t), num(*g)]),
        )?;
    }
    match study.last_change {
        Some(c) => writeln!(r, "T̂ change between the two finest levels: {}", short(c)).unwrap(),
        None => writeln!(r, "T̂ change between the two finest levels: n/a").unwrap(),
    }
    finish(ctx, "blowup-report.txt", status, r)
}
