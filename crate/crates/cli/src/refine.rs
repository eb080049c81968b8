//! Convergence studies: rerun an experiment on refined levels and fit the
//! empirical order by least squares on log-log data.

use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind, Source};
use crate::error::CliError;
use crate::report::Report;
use crate::run::{execute, prepare, Prepared};

/// Least-squares slope of `log err` against `log h`; `None` with fewer than
/// two usable points.
pub fn fit_order(h: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn uses_file(s: &Source) -> bool {
    matches!(s, Source::File(_))
}

/// Config of refinement level `k` (0-based) and its mesh parameter.
///
/// Grid kinds multiply the node count and step count by `k + 1`; geodesics
/// halve the step `k` times.
pub fn level_config(base: &ExperimentConfig, kind: Kind, k: usize) -> Result<(ExperimentConfig, f64), CliError> {
    let mut cfg = base.clone();
    let m = (k + 1) as f64;
    let files = match kind {
        Kind::Moser => uses_file(&base.moser.source) || uses_file(&base.moser.target),
        Kind::Interp => uses_file(&base.interp.density) || uses_file(&base.interp.potential),
        Kind::Heat => uses_file(&base.heat.initial),
        _ => false,
    };
    if files {
        return Err(CliError::Config(
            "--refine needs expression inputs; field files cannot be resampled".into(),
        ));
    }
    let scale_grid = |cfg: &mut ExperimentConfig| {
        cfg.grid.dims = base.grid.dims.iter().map(|d| d * (k + 1)).collect();
    };
    let h = match kind {
        Kind::Moser => {
            scale_grid(&mut cfg);
            cfg.moser.steps = base.moser.steps * (k + 1);
            1.0 / m
        }
        Kind::Heat => {
            cfg.heat.dt = base.heat.dt / m;
            cfg.heat.snapshot_every = base.heat.snapshot_every;
            cfg.heat.dt
        }
        Kind::Interp => {
            scale_grid(&mut cfg);
            cfg.interp.dt = base.interp.dt / m;
            1.0 / m
        }
        Kind::Geodesic => {
            cfg.geodesic.dt = base.geodesic.dt / 2f64.powi(k as i32);
            cfg.geodesic.check_order = false;
            cfg.geodesic.dt
        }
        Kind::Hodge | Kind::Growth => {
            return Err(CliError::Config(format!(
                "--refine is not defined for `{}` (no discretization error to refine)",
                kind.name()
            )))
        }
    };
    Ok((cfg, h))
}

pub fn primary_metric(kind: Kind) -> &'static str {
    match kind {
        Kind::Moser => "l2_error",
        Kind::Heat => "max_gap",
        Kind::Interp => "hj_residual",
        Kind::Geodesic => "endpoint_change",
        Kind::Hodge | Kind::Growth => "",
    }
}

pub struct Study {
    pub kind: Kind,
    pub levels: Vec<(f64, Prepared)>,
    pub min_order: Option<f64>,
}

pub struct StudyResult {
    pub reports: Vec<Report>,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: Option<f64>,
    pub pass: bool,
}

/// Resolves every level up front so that a bad level fails before any run.
pub fn prepare_study(base: &ExperimentConfig, kind: Kind, n: usize) -> Result<Study, CliError> {
    let need = if kind == Kind::Geodesic { 3 } else { 2 };
    if n < need {
        return Err(CliError::Config(format!(
            "--refine needs at least {need} levels for `{}`",
            kind.name()
        )));
    }
    let levels = (0..n)
        .map(|k| {
            let (cfg, h) = level_config(base, kind, k)?;
            Ok((h, prepare(kind, cfg)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Study {
        kind,
        levels,
        min_order: base.refine.min_order,
    })
}

fn as_f64(v: Option<&Value>) -> f64 {
    v.and_then(Value::as_f64).unwrap_or(f64::NAN)
}

pub fn run_study(study: &Study) -> Result<StudyResult, CliError> {
    let reports = study
        .levels
        .iter()
        .map(|(_, p)| execute(p))
        .collect::<Result<Vec<_>, _>>()?;
    let hs: Vec<f64> = study.levels.iter().map(|(h, _)| *h).collect();
    let (h, errors): (Vec<f64>, Vec<f64>) = if study.kind == Kind::Geodesic {
        // Successive endpoint differences stand in for the unknown exact endpoint.
        let ends: Vec<Vec<f64>> = reports
            .iter()
            .map(|r| {
                r.metrics["endpoint"]
                    .as_array()
                    .map(|a| a.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
                    .unwrap_or_default()
            })
            .collect();
        let e: Vec<f64> = ends
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        (hs[..hs.len() - 1].to_vec(), e)
    } else {
        let key = primary_metric(study.kind);
        (hs, reports.iter().map(|r| as_f64(r.metrics.get(key))).collect())
    };
    let order = fit_order(&h, &errors);
    let order_ok = match (study.min_order, order) {
        (Some(min), Some(o)) => o >= min,
        (Some(_), None) => false,
        (None, _) => true,
    };
    let pass = order_ok && reports.iter().all(Report::passed);
    Ok(StudyResult {
        reports,
        h,
        errors,
        order,
        pass,
    })
}

impl StudyResult {
    pub fn summary(&self, kind: Kind, min_order: Option<f64>, runtime: &Value) -> Value {
        let levels: Vec<Value> = self
            .reports
            .iter()
            .enumerate()
            .map(|(k, r)| json!({ "level": k, "dir": format!("level_{k}"), "pass": r.passed(), "metrics": r.metrics }))
            .collect();
        json!({
            "kind": kind.name(),
            "pass": self.pass,
            "metric": primary_metric(kind),
            "h": self.h,
            "errors": self.errors.iter().map(|e| if e.is_finite() { json!(e) } else { json!(e.to_string()) }).collect::<Vec<_>>(),
            "order": self.order,
            "min_order": min_order,
            "levels": levels,
            "runtime": runtime,
        })
    }
}
