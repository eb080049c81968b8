//! Input resolution and the per-kind pipelines.
//!
//! Resolution (`prepare`) touches every file and expression the experiment
//! needs, so that a bad config fails before anything is computed or written.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use subrosa::distribution::{check_bracket_generating, project_tau};
use subrosa::expr::Expr;
use subrosa::flow::{pushforward_density, PushforwardKernel};
use subrosa::geodesic::{
    burgers_residual, displacement_interpolation_with, exp_tau, hamilton_jacobi_residual, hj_evolve,
    horizontal_exponential, integrate_cotangent, monge_ampere_residual, CotangentState,
};
use subrosa::heat::{entropy, gradient_flow_check, heat_evolve_with, HeatOptions, HeatStepper};
use subrosa::io::{read_field, FieldData};
use subrosa::moser::{moser_flow_with, MoserOptions, SolveSchedule};
use subrosa::ops::{divergence, grad};
use subrosa::solver::{hodge_decompose, solve_poisson, sub_laplacian, Preconditioner};
use subrosa::{inner, inner_vector, Density, FlowMap, Frame, Grid, ScalarField, Stencil, VectorField};

use crate::config::{ExperimentConfig, FrameSpec, GridSpec, Kernel, Kind, Precond, Schedule, Source, Stepper};
use crate::error::{CliError, Context};
use crate::report::{Report, Table};

/// Everything an experiment reads, resolved against its grid.
pub struct Prepared {
    pub kind: Kind,
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub frame: Frame,
    inputs: Inputs,
}

enum Inputs {
    Moser { mu0: Density, mu1: Density },
    Geodesic,
    Interp { nu: Density, potential: ScalarField },
    Heat { nu0: Density },
    Hodge { w: VectorField, nu: Density },
    Growth,
}

fn config_err(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

pub fn build_grid(spec: &GridSpec) -> Result<Grid, CliError> {
    let periods = spec.periods.clone().unwrap_or_else(|| vec![1.0; spec.dims.len()]);
    let stencil = Stencil::from_order(spec.stencil).map_err(|e| config_err("grid.stencil", e))?;
    Ok(Grid::new(&spec.dims, &periods)
        .map_err(|e| config_err("grid", e))?
        .with_stencil(stencil))
}

pub fn build_frame(spec: &FrameSpec, grid: Grid) -> Result<Frame, CliError> {
    match (&spec.builtin, &spec.fields) {
        (_, Some(fields)) => {
            for (i, f) in fields.iter().enumerate() {
                if f.len() != grid.ndim() {
                    return Err(config_err(
                        &format!("frame.fields[{i}]"),
                        format!("needs {} components, found {}", grid.ndim(), f.len()),
                    ));
                }
                for (j, c) in f.iter().enumerate() {
                    Expr::parse(c).map_err(|e| config_err(&format!("frame.fields[{i}][{j}] = {c:?}"), e))?;
                }
            }
            Frame::from_expressions(grid, fields).map_err(|e| config_err("frame.fields", e))
        }
        (Some(name), None) => Frame::builtin(name, grid).map_err(|e| config_err("frame.builtin", e)),
        (None, None) => {
            let name = if grid.ndim() == 3 { "sin-heisenberg" } else { "flat" };
            Frame::builtin(name, grid).map_err(|e| config_err("frame", e))
        }
    }
}

pub fn scalar(src: &Source, grid: Grid, key: &str) -> Result<ScalarField, CliError> {
    match src {
        Source::Expr(text) => Expr::parse(text)
            .and_then(|e| e.sample(&grid))
            .map_err(|e| config_err(&format!("{key} = {text:?}"), e)),
        Source::File(f) => {
            let data = read_field(&f.file).map_err(|e| config_err(&format!("{key} ({})", f.file.display()), e))?;
            if data.grid.dims() != grid.dims() || data.grid.periods() != grid.periods() {
                return Err(config_err(
                    &format!("{key} ({})", f.file.display()),
                    "field file grid does not match the configured grid",
                ));
            }
            data.into_scalar()
                .map(|s| ScalarField::new(grid, s.into_values()))
                .and_then(|r| r)
                .map_err(|e| config_err(key, e))
        }
    }
}

fn density(src: &Source, grid: Grid, key: &str) -> Result<Density, CliError> {
    Density::from_field(&scalar(src, grid, key)?).map_err(|e| config_err(key, e))
}

pub fn prepare(kind: Kind, mut config: ExperimentConfig) -> Result<Prepared, CliError> {
    if let Some(k) = config.kind {
        if k != kind {
            return Err(config_err(
                "kind",
                format!("config is for `{}`, not `{}`", k.name(), kind.name()),
            ));
        }
    }
    let grid = build_grid(&config.grid)?;
    let frame = build_frame(&config.frame, grid)?;
    // Echo the defaults actually used.
    config.grid.periods = Some(grid.periods().to_vec());
    if config.frame.fields.is_none() {
        config.frame.builtin = Some(frame.name().to_string());
    }
    let inputs = match kind {
        Kind::Moser => Inputs::Moser {
            mu0: density(&config.moser.source, grid, "moser.source")?,
            mu1: density(&config.moser.target, grid, "moser.target")?,
        },
        Kind::Geodesic => Inputs::Geodesic,
        Kind::Interp => Inputs::Interp {
            nu: density(&config.interp.density, grid, "interp.density")?,
            potential: scalar(&config.interp.potential, grid, "interp.potential")?,
        },
        Kind::Heat => Inputs::Heat {
            nu0: density(&config.heat.initial, grid, "heat.initial")?,
        },
        Kind::Hodge => {
            let comps = config
                .hodge
                .field
                .iter()
                .enumerate()
                .map(|(a, text)| {
                    scalar(&Source::Expr(text.clone()), grid, &format!("hodge.field[{a}]"))
                        .map(ScalarField::into_values)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Inputs::Hodge {
                w: VectorField::new(grid, comps).map_err(|e| config_err("hodge.field", e))?,
                nu: density(&config.hodge.density, grid, "hodge.density")?,
            }
        }
        Kind::Growth => Inputs::Growth,
    };
    Ok(Prepared {
        kind,
        config,
        grid,
        frame,
        inputs,
    })
}

pub fn execute(p: &Prepared) -> Result<Report, CliError> {
    let start = Instant::now();
    let mut report = match &p.inputs {
        Inputs::Moser { mu0, mu1 } => run_moser(p, mu0, mu1)?,
        Inputs::Geodesic => run_geodesic(p)?,
        Inputs::Interp { nu, potential } => run_interp(p, nu, potential)?,
        Inputs::Heat { nu0 } => run_heat(p, nu0)?,
        Inputs::Hodge { w, nu } => run_hodge(p, w, nu)?,
        Inputs::Growth => run_growth(p)?,
    };
    report.metric("frame", p.frame.name());
    report.metric("grid_dims", json!(p.grid.dims()));
    report.timing("total_seconds", start.elapsed().as_secs_f64());
    Ok(report)
}

fn scalar_data(f: &ScalarField) -> FieldData {
    FieldData::scalar(f)
}

fn run_moser(p: &Prepared, mu0: &Density, mu1: &Density) -> Result<Report, CliError> {
    let s = &p.config.moser;
    let mut opts = MoserOptions::new(s.steps, s.tol);
    opts.schedule = match s.schedule {
        Schedule::Midpoint => SolveSchedule::Midpoint,
        Schedule::PerStage => SolveSchedule::PerStage,
    };
    opts.kernel = match s.kernel {
        Kernel::Gather => PushforwardKernel::Gather,
        Kernel::LinearScatter => PushforwardKernel::LinearScatter,
    };
    opts.preconditioner = match s.preconditioner {
        Precond::None => Preconditioner::None,
        Precond::Jacobi => Preconditioner::Jacobi,
    };
    opts.checkpoint_every = s.checkpoint_every;
    let mut report = Report::new(Kind::Moser);
    report.metric_f64("mass_gap", (mu0.mass() - mu1.mass()).abs());
    let t = Instant::now();
    let run = moser_flow_with(mu0, mu1, &p.frame, &opts).context(|| "moser flow".into())?;
    report.timing("flow_seconds", t.elapsed().as_secs_f64());
    let r = &run.report;
    report.metric_f64("l1_error", r.l1_error);
    report.metric_f64("l2_error", r.l2_error);
    report.metric_f64("linf_error", r.linf_error);
    report.metric_f64("horizontality_residual", r.horizontality_residual);
    report.metric_f64("mass_before_normalization", r.mass_before_normalization);
    report.metric_f64("monge_ampere_residual", r.monge_ampere_l2);
    let ratio = if r.l2_error > 0.0 {
        r.monge_ampere_l2 / r.l2_error
    } else {
        0.0
    };
    report.metric_f64("monge_ampere_ratio", ratio);
    report.metric("total_iterations", r.total_iterations());
    report.metric("unresolved_nodes", r.unresolved_nodes);
    report.metric_f64("max_displacement", run.flow.max_displacement());
    report.metric("steps", s.steps);
    let g = p.grid;
    let identity_ma = monge_ampere_residual(&FlowMap::identity(g), &mu0.as_field(), &mu0.as_field())
        .context(|| "Monge-Ampere identity check".into())?
        .linf_norm();
    report.metric_f64("monge_ampere_identity", identity_ma);

    report.at_most("l2_error", r.l2_error, s.max_l2_error);
    report.at_most("horizontality_residual", r.horizontality_residual, s.max_horizontality);
    report.at_most(
        "monge_ampere_residual",
        r.monge_ampere_l2,
        s.max_monge_ampere_ratio * r.l2_error + 1e-12,
    );
    report.at_most("monge_ampere_identity", identity_ma, 1e-12);

    report.tables.push(Table {
        name: "steps".into(),
        header: ["t", "iterations", "residual", "parity_defect", "source_mean"]
            .map(String::from)
            .to_vec(),
        rows: r
            .steps
            .iter()
            .map(|d| vec![d.t, d.iterations as f64, d.residual, d.parity_defect, d.source_mean])
            .collect(),
    });
    let push = pushforward_density(&run.flow, mu0).context(|| "pushforward".into())?;
    report.fields.push((
        "pushforward".into(),
        vec!["density".into()],
        scalar_data(&push.as_field()),
    ));
    report
        .fields
        .push(("target".into(), vec!["density".into()], scalar_data(&mu1.as_field())));
    let lj = ScalarField::new(g, run.flow.log_jacobian().to_vec()).context(|| "log Jacobian".into())?;
    report
        .fields
        .push(("log_jacobian".into(), vec!["log_jacobian".into()], scalar_data(&lj)));
    report.flow = Some(run.flow);
    Ok(report)
}

fn distance(a: &CotangentState, b: &CotangentState) -> f64 {
    (0..3)
        .map(|i| (a.q[i] - b.q[i]).powi(2) + (a.p[i] - b.p[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn run_geodesic(p: &Prepared) -> Result<Report, CliError> {
    let s = &p.config.geodesic;
    let frame = &p.frame;
    let mut report = Report::new(Kind::Geodesic);
    let traj = exp_tau(s.q0, s.p0, s.t, frame, s.dt).context(|| "geodesic".into())?;
    let drift = traj.relative_energy_drift();
    report.metric_f64("energy_drift", drift);
    report.metric_f64("hamiltonian", traj.hamiltonian[0]);
    report.metric("endpoint", json!(traj.endpoint));
    report.at_most("energy_drift", drift, s.max_energy_drift);
    if s.check_order && s.t > 0.0 {
        let end = |dt: f64| integrate_cotangent(CotangentState::new(s.q0, s.p0), s.t, frame, dt);
        let e = [s.order_dt, s.order_dt / 2.0, s.order_dt / 4.0]
            .iter()
            .map(|&dt| end(dt))
            .collect::<subrosa::Result<Vec<_>>>()
            .context(|| "geodesic order check".into())?;
        let ratio = distance(&e[0], &e[1]) / distance(&e[1], &e[2]);
        report.metric_f64("dt_halving_ratio", ratio);
        report.within("dt_halving_ratio", ratio, s.ratio_range[0], s.ratio_range[1]);
    }
    if frame.is_flat() {
        let g = p.grid;
        let mut dev: f64 = 0.0;
        for (t, st) in traj.times.iter().zip(&traj.states) {
            let exact = g.wrap([s.q0[0] + t * s.p0[0], s.q0[1] + t * s.p0[1], s.q0[2] + t * s.p0[2]]);
            let d = g.minimal_image([st.q[0] - exact[0], st.q[1] - exact[1], st.q[2] - exact[2]]);
            dev = d.iter().fold(dev, |m, v| m.max(v.abs()));
        }
        report.metric_f64("straight_line_deviation", dev);
        report.at_most("straight_line_deviation", dev, 1e-12);
    }
    report.tables.push(Table {
        name: "trajectory".into(),
        header: ["t", "x", "y", "z", "px", "py", "pz", "hamiltonian"]
            .map(String::from)
            .to_vec(),
        rows: traj
            .times
            .iter()
            .zip(&traj.states)
            .zip(&traj.hamiltonian)
            .map(|((t, st), h)| vec![*t, st.q[0], st.q[1], st.q[2], st.p[0], st.p[1], st.p[2], *h])
            .collect(),
    });
    Ok(report)
}

fn run_interp(p: &Prepared, nu: &Density, f: &ScalarField) -> Result<Report, CliError> {
    let s = &p.config.interp;
    let (g, frame) = (p.grid, &p.frame);
    let mut report = Report::new(Kind::Interp);
    let deviation = |a: &Density| {
        a.ratio()
            .iter()
            .zip(nu.ratio())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let mut rows = Vec::new();
    for (k, &t) in s.times.iter().enumerate() {
        let push =
            displacement_interpolation_with(nu, f, t, frame, s.dt).context(|| format!("interpolation at t = {t}"))?;
        rows.push(vec![
            t,
            push.mass_before_normalization,
            push.unresolved as f64,
            deviation(&push.density),
        ]);
        report.fields.push((
            format!("density_{k}"),
            vec!["density".into()],
            scalar_data(&push.density.as_field()),
        ));
    }
    report.tables.push(Table {
        name: "interpolation".into(),
        header: ["t", "mass_before_normalization", "unresolved", "max_change"]
            .map(String::from)
            .to_vec(),
        rows,
    });
    let at_zero = deviation(
        &displacement_interpolation_with(nu, f, 0.0, frame, s.dt)
            .context(|| "t = 0".into())?
            .density,
    );
    let constant = ScalarField::constant(g, 1.0);
    let flat_potential = deviation(
        &displacement_interpolation_with(nu, &constant, 0.5, frame, s.dt)
            .context(|| "constant potential".into())?
            .density,
    );
    report.metric_f64("endpoint_error", at_zero);
    report.metric_f64("constant_potential_error", flat_potential);
    report.at_most("endpoint_error", at_zero, 1e-12);
    report.at_most("constant_potential_error", flat_potential, 1e-12);

    // Ensemble integration is the single-particle integrator, bit for bit.
    let t_check = s.times.iter().cloned().fold(0.0, f64::max);
    let flow = horizontal_exponential(f, t_check, frame, s.dt).context(|| "ensemble flow".into())?;
    let df = grad(f);
    let mut identical = true;
    for i in 0..g.len() {
        let end = integrate_cotangent(CotangentState::new(g.coord(i), df.at(i)), t_check, frame, s.dt)
            .context(|| "single particle".into())?;
        let x = g.coord(i);
        identical &= (0..3).all(|a| (end.q[a] - x[a]).to_bits() == flow.displacements()[i][a].to_bits());
    }
    report.metric("ensemble_bit_identical", identical);
    report.metric("shock", flow.shock());
    report.holds("ensemble_bit_identical", identical);

    if s.hj_t_max > 0.0 {
        let path = hj_evolve(f, s.hj_t_max, frame, s.dt).context(|| "Hamilton-Jacobi evolution".into())?;
        match path.first_shock() {
            Some(t) => {
                report.metric_f64("first_shock", t);
                report.metric("hj_residual", "not defined past a shock");
            }
            None => {
                let res = hamilton_jacobi_residual(&path, frame).context(|| "Hamilton-Jacobi residual".into())?;
                report.metric_f64("hj_residual", res);
                report.at_most("hj_residual", res, s.max_hj_residual);
            }
        }
        if frame.is_flat() {
            let samples = (1..=5)
                .map(|k| {
                    let t = s.hj_t_max * k as f64 / 5.0;
                    horizontal_exponential(f, t, frame, s.dt).map(|fl| (t, fl))
                })
                .collect::<subrosa::Result<Vec<_>>>()
                .context(|| "Burgers samples".into())?;
            if samples.iter().all(|(_, fl)| !fl.shock()) {
                let b = burgers_residual(&samples, frame).context(|| "Burgers residual".into())?;
                report.metric_f64("burgers_residual", b);
            }
        }
    }
    Ok(report)
}

fn run_heat(p: &Prepared, nu0: &Density) -> Result<Report, CliError> {
    let s = &p.config.heat;
    let frame = &p.frame;
    let g = p.grid;
    let mut report = Report::new(Kind::Heat);
    let opts = HeatOptions {
        stepper: match s.stepper {
            Stepper::CrankNicolson => HeatStepper::CrankNicolson,
            Stepper::Rk4 => HeatStepper::Rk4,
        },
        snapshot_every: s.snapshot_every,
        tol: s.tol,
    };
    let t = Instant::now();
    let traj = heat_evolve_with(nu0, s.t_max, s.dt, frame, &opts).context(|| "heat evolution".into())?;
    report.timing("evolve_seconds", t.elapsed().as_secs_f64());
    let check = gradient_flow_check(&traj, frame, 1e-12).context(|| "gradient flow check".into())?;
    let mass_step = traj
        .windows(2)
        .map(|w| (w[1].1.mass() - w[0].1.mass()).abs())
        .fold(0.0, f64::max);
    let e0 = entropy(nu0).context(|| "entropy".into())?;
    let (t_end, last) = traj.last().expect("trajectory holds the initial state");
    let e1 = entropy(last).context(|| "entropy".into())?;
    report.metric_f64("entropy_initial", e0);
    report.metric_f64("entropy_final", e1);
    report.metric_f64("entropy_production", e0 - e1);
    report.metric("entropy_monotone", check.entropy_monotone);
    report.metric_f64("max_gap", check.max_gap);
    report.metric_f64("max_mass_drift", check.max_mass_drift);
    report.metric_f64("mass_drift_per_snapshot", mass_step);
    report.metric_f64("two_laplacian_residual", check.max_identity_residual);

    let fluct = |nu: &Density| {
        let m = nu.mass() / g.volume();
        ScalarField::new(g, nu.ratio().iter().map(|r| r - m).collect()).map(|f| f.l2_norm())
    };
    let (a0, a1) = (
        fluct(nu0).context(|| "fluctuation".into())?,
        fluct(last).context(|| "fluctuation".into())?,
    );
    if a0 > 0.0 && a1 > 0.0 && *t_end > 0.0 {
        let rate = -(a1 / a0).ln() / t_end;
        report.metric_f64("decay_rate", rate);
        if let Some(expected) = s.expected_decay_rate {
            // Compared through the amplitudes, e^{-rate t}.
            let err = ((-rate * t_end).exp() - (-expected * t_end).exp()).abs() / (-expected * t_end).exp();
            report.metric_f64("decay_error", err);
            report.at_most("decay_error", err, s.max_decay_error);
        }
    }
    report.at_most("mass_drift_per_snapshot", mass_step, s.max_mass_drift);
    if s.require_monotone {
        report.holds("entropy_monotone", check.entropy_monotone);
    }
    if let Some(bound) = s.max_gap {
        report.at_most("max_gap", check.max_gap, bound);
    }
    report.at_most(
        "two_laplacian_residual",
        check.max_identity_residual,
        s.max_two_laplacian,
    );
    report.tables.push(Table {
        name: "gradient_flow".into(),
        header: [
            "t",
            "entropy",
            "entropy_rate",
            "neg_metric",
            "identity_residual",
            "mass_drift",
        ]
        .map(String::from)
        .to_vec(),
        rows: check
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.t,
                    r.entropy,
                    r.entropy_rate,
                    r.neg_metric,
                    r.identity_residual,
                    r.mass_drift,
                ]
            })
            .collect(),
    });
    report
        .fields
        .push(("final".into(), vec!["density".into()], scalar_data(&last.as_field())));
    Ok(report)
}

/// Random trigonometric polynomial with small wavenumbers.
fn smooth_random(g: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    let n = g.ndim();
    let modes: Vec<([f64; 3], f64, f64)> = (0..6)
        .map(|_| {
            let mut k = [0.0; 3];
            for v in k.iter_mut().take(n) {
                *v = rng.gen_range(-2..=2) as f64;
            }
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let l = g.periods().to_vec();
    let f = ScalarField::from_fn(g, |p| {
        modes
            .iter()
            .map(|(k, a, ph)| a * (2.0 * PI * (0..n).map(|i| k[i] * p[i] / l[i]).sum::<f64>() + ph).sin())
            .sum()
    })
    .expect("finite samples");
    let m = f.mean();
    f.map(|v| v - m).expect("finite samples")
}

fn run_hodge(p: &Prepared, w: &VectorField, nu: &Density) -> Result<Report, CliError> {
    let s = &p.config.hodge;
    let (g, frame) = (p.grid, &p.frame);
    let mut report = Report::new(Kind::Hodge);
    let w = if s.horizontal {
        project_tau(w, frame).context(|| "projection".into())?
    } else {
        w.clone()
    };
    let d = hodge_decompose(&w, frame, nu, s.tol).context(|| "Hodge decomposition".into())?;
    let div_w = divergence(&w, nu).context(|| "divergence".into())?.l2_norm();
    let div_u = divergence(&d.remainder, nu).context(|| "divergence".into())?.l2_norm();
    let ratio = if div_w > 0.0 { div_u / div_w } else { div_u };
    let df = grad(&d.potential);
    let ip = inner_vector(&d.remainder, &df, nu).context(|| "pairing".into())?;
    let scale = inner_vector(&d.remainder, &d.remainder, nu)
        .context(|| "norm".into())?
        .sqrt()
        * inner_vector(&d.gradient, &d.gradient, nu)
            .context(|| "norm".into())?
            .sqrt();
    let orth = if scale > 0.0 { ip.abs() / scale } else { ip.abs() };
    report.metric_f64("divergence_ratio", ratio);
    report.metric_f64("orthogonality", orth);
    report.metric_f64("poisson_residual", d.solve.residual_norm);
    report.metric("poisson_iterations", d.solve.iterations);
    report.metric_f64("parity_defect", d.solve.parity_defect);
    report.at_most("divergence_ratio", ratio, s.max_divergence_ratio);
    report.at_most("orthogonality", orth, s.max_orthogonality);

    // Operator structure and solvability on seeded random inputs.
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    let (u, v) = (smooth_random(g, &mut rng), smooth_random(g, &mut rng));
    let lu = sub_laplacian(&u, frame, nu).context(|| "sub-Laplacian".into())?;
    let lv = sub_laplacian(&v, frame, nu).context(|| "sub-Laplacian".into())?;
    let a = inner(&lu, &v, nu).context(|| "pairing".into())?;
    let b = inner(&u, &lv, nu).context(|| "pairing".into())?;
    let adj = (a - b).abs() / (lu.l2_norm() * v.l2_norm()).max(u.l2_norm() * lv.l2_norm());
    let constant = sub_laplacian(&ScalarField::constant(g, 1.0), frame, nu)
        .context(|| "sub-Laplacian".into())?
        .linf_norm();
    report.metric_f64("self_adjointness", adj);
    report.metric_f64("constant_residual", constant);
    report.at_most("self_adjointness", adj, 1e-12);
    report.at_most("constant_residual", constant, 1e-13);

    let rho = {
        let r = smooth_random(g, &mut rng);
        let shift = inner(&r, &ScalarField::constant(g, 1.0), nu).context(|| "mean".into())? / nu.mass();
        r.map(|x| x - shift).context(|| "source".into())?
    };
    let sol = solve_poisson(&rho, frame, nu, 1e-10).context(|| "Poisson solve".into())?;
    let lu = sub_laplacian(&sol.u, frame, nu).context(|| "sub-Laplacian".into())?;
    let round_trip = lu.combine(1.0, &rho, -1.0).context(|| "round trip".into())?.l2_norm() / rho.l2_norm();
    let rejected = matches!(
        solve_poisson(&rho.map(|x| x + 1e-9).context(|| "source".into())?, frame, nu, 1e-10),
        Err(subrosa::Error::Solvability(_))
    );
    report.metric_f64("round_trip", round_trip);
    report.metric("mean_rejected", rejected);
    report.at_most("round_trip", round_trip, 1e-8);
    report.holds("mean_rejected", rejected);

    report
        .fields
        .push(("potential".into(), vec!["f".into()], scalar_data(&d.potential)));
    report.fields.push((
        "remainder".into(),
        ["ux", "uy", "uz"][..g.ndim()].iter().map(|s| s.to_string()).collect(),
        FieldData::vector(&d.remainder),
    ));
    Ok(report)
}

fn run_growth(p: &Prepared) -> Result<Report, CliError> {
    let s = &p.config.growth;
    let (g, frame) = (p.grid, &p.frame);
    let mut report = Report::new(Kind::Growth);
    let r = check_bracket_generating(frame, s.max_depth).context(|| "growth".into())?;
    report.metric("bracket_generating", r.bracket_generating);
    report.metric("step", json!(r.max_depth_needed));
    let probes: Vec<_> = s
        .probes
        .iter()
        .map(|q| json!({ "point": q, "growth": frame.growth_at(*q, s.max_depth) }))
        .collect();
    report.metric("probes", json!(probes));
    if s.require_bracket_generating {
        report.holds("bracket_generating", r.bracket_generating);
    }
    let depth = r.growth.iter().map(Vec::len).max().unwrap_or(0);
    let mut header: Vec<String> = ["x", "y", "z"][..g.ndim()].iter().map(|s| s.to_string()).collect();
    header.extend((1..=depth).map(|k| format!("depth_{k}")));
    report.tables.push(Table {
        name: "growth".into(),
        header,
        rows: (0..g.len())
            .map(|i| {
                let c = g.coord(i);
                let mut row: Vec<f64> = c[..g.ndim()].to_vec();
                let gv = r.at(i);
                row.extend((0..depth).map(|k| *gv.get(k).unwrap_or(gv.last().unwrap_or(&0)) as f64));
                row
            })
            .collect(),
    });
    Ok(report)
}
