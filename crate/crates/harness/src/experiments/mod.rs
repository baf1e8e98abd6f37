//! Experiment orchestration: dispatch to the per-study drivers, collect
//! their per-method results (methods fail individually without aborting
//! the rest), and write the tables every study shares.

pub mod cmp;
pub mod ingarch;
pub mod lattice;
pub mod timing;

use std::path::Path;

use nalgebra::DMatrix;

use lrm_core::calibrate::chi2_quantile;

use crate::config::{BetaMode, Config, ExperimentId, MethodId};
use crate::methods::MethodOutcome;
use crate::report::{fmt_f64, Reporter};
use crate::svg::{ellipse_params, Figure};
use crate::{HarnessError, Result};

/// One method that failed on one dataset. The run carries on; these end
/// up in `failures.csv` and in the process exit code.
#[derive(Debug)]
pub struct MethodFailure {
    pub label: String,
    pub method: MethodId,
    pub message: String,
}

#[derive(Default)]
pub struct RunOutput {
    pub outcomes: Vec<MethodOutcome>,
    pub failures: Vec<MethodFailure>,
}

impl RunOutput {
    pub fn new() -> Self {
        Self::default()
    }

    /// File a method result: success joins the outcome table, failure is
    /// recorded and the run continues.
    pub fn record(&mut self, label: &str, method: MethodId, result: Result<MethodOutcome>) {
        match result {
            Ok(outcome) => self.outcomes.push(outcome),
            Err(e) => self.failures.push(MethodFailure {
                label: label.to_string(),
                method,
                message: e.to_string(),
            }),
        }
    }

    pub fn absorb(&mut self, other: RunOutput) {
        self.outcomes.extend(other.outcomes);
        self.failures.extend(other.failures);
    }
}

/// Knobs the subcommands use to reshape a run.
#[derive(Clone, Copy)]
pub struct RunOpts {
    /// Emit SVG figures (tables are always written).
    pub figures: bool,
}

impl Default for RunOpts {
    fn default() -> Self {
        RunOpts { figures: true }
    }
}

/// Run the configured experiment end to end: data, methods, tables,
/// figures, manifest. Returns the per-method outcomes and failures so
/// the caller can decide the exit code.
pub fn run_experiment(cfg: &Config) -> Result<RunOutput> {
    run_experiment_with(cfg, RunOpts::default())
}

pub fn run_experiment_with(cfg: &Config, opts: RunOpts) -> Result<RunOutput> {
    cfg.validate()?;
    let mut rep = Reporter::create(Path::new(&cfg.out))?;
    let out = dispatch(cfg, &mut rep, opts)?;
    write_outcome_tables(&out, &mut rep)?;
    finish(cfg, rep)?;
    Ok(out)
}

fn dispatch(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    match cfg.experiment {
        ExperimentId::Cmp1d => cmp::run_cmp1d(cfg, rep, opts),
        ExperimentId::Cmp1dSensitivity => cmp::run_sensitivity(cfg, rep, opts),
        ExperimentId::CmpGraphical => cmp::run_graphical(cfg, rep, opts),
        ExperimentId::Ingarch => ingarch::run(cfg, rep, opts),
        ExperimentId::Ising => lattice::run_ising(cfg, rep, opts),
        ExperimentId::Potts => lattice::run_potts(cfg, rep, opts),
        ExperimentId::RobustCmp => cmp::run_robust(cfg, rep, opts),
        ExperimentId::Timing => timing::run(cfg, rep, opts),
    }
}

/// Write the config echo and the manifest, closing the output directory.
pub fn finish(cfg: &Config, rep: Reporter) -> Result<()> {
    let echo = serde_json::to_value(cfg)
        .map_err(|e| HarnessError::Config(format!("config echo failed: {e}")))?;
    rep.finish(cfg.experiment.as_str(), echo)?;
    Ok(())
}

/// Generate the configured experiment's dataset files and nothing else.
pub fn simulate_only(cfg: &Config) -> Result<()> {
    cfg.validate()?;
    let mut rep = Reporter::create(Path::new(&cfg.out))?;
    match cfg.experiment {
        ExperimentId::Cmp1d
        | ExperimentId::Cmp1dSensitivity
        | ExperimentId::RobustCmp
        | ExperimentId::Timing => cmp::write_cmp_datasets(cfg, &mut rep)?,
        ExperimentId::CmpGraphical => cmp::write_graphical_dataset(cfg, &mut rep)?,
        ExperimentId::Ingarch => ingarch::write_dataset(cfg, &mut rep)?,
        ExperimentId::Ising => lattice::write_ising_datasets(cfg, &mut rep)?,
        ExperimentId::Potts => lattice::write_potts_dataset(cfg, &mut rep)?,
    }
    finish(cfg, rep)
}

/// Resolve the loss weight by coverage calibration and emit the curve,
/// without fitting anything else. Requires a `calibrate` β mode.
pub fn calibrate_only(cfg: &Config) -> Result<f64> {
    cfg.validate()?;
    let mut rep = Reporter::create(Path::new(&cfg.out))?;
    let result = match cfg.experiment {
        ExperimentId::Cmp1d
        | ExperimentId::Cmp1dSensitivity
        | ExperimentId::RobustCmp
        | ExperimentId::Timing => cmp::calibration_curve(cfg)?,
        ExperimentId::CmpGraphical => cmp::graphical_calibration_curve(cfg)?,
        ExperimentId::Ingarch => ingarch::calibration_curve(cfg)?,
        ExperimentId::Ising => lattice::ising_calibration_curve(cfg)?,
        ExperimentId::Potts => lattice::potts_calibration_curve(cfg)?,
    };
    let rows = result
        .curve
        .iter()
        .map(|&(beta, coverage)| {
            vec![
                "full".to_string(),
                "lrm".to_string(),
                fmt_f64(beta),
                fmt_f64(coverage),
                if beta == result.beta_star { "1" } else { "0" }.to_string(),
            ]
        })
        .collect::<Vec<_>>();
    rep.write_csv(
        "calibration.csv",
        &["label", "method", "beta", "coverage", "is_beta_star"],
        rows,
    )?;
    let fig = crate::svg::Figure::new("coverage calibration", "beta", "coverage")
        .x_log()
        .y_range(0.0, 1.05)
        .line_marked("coverage", &result.curve)
        .hline(0.95)
        .vline(result.beta_star);
    rep.write_text("beta_curve.svg", &fig.render())?;
    finish(cfg, rep)?;
    Ok(result.beta_star)
}

/// Tables every experiment emits: posterior moments, 95% ellipse
/// geometry, calibration curves, sampler diagnostics, failures.
pub fn write_outcome_tables(out: &RunOutput, rep: &mut Reporter) -> Result<()> {
    let mut summary = Vec::new();
    for o in &out.outcomes {
        for j in 0..o.eta_mean.len() {
            summary.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                o.param_names[j].clone(),
                o.space.clone(),
                fmt_f64(o.eta_mean[j]),
                fmt_f64(o.eta_sd[j]),
            ]);
        }
        if let (Some(tm), Some(ts)) = (&o.theta_mean, &o.theta_sd) {
            for j in 0..tm.len() {
                summary.push(vec![
                    o.label.clone(),
                    o.method.as_str().to_string(),
                    format!("theta{}", j + 1),
                    "theta".to_string(),
                    fmt_f64(tm[j]),
                    fmt_f64(ts[j]),
                ]);
            }
        }
        for ex in &o.extra {
            summary.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                ex.name.clone(),
                "theta".to_string(),
                fmt_f64(ex.mean),
                fmt_f64(ex.sd),
            ]);
        }
    }
    rep.write_csv(
        "posterior_summary.csv",
        &["label", "method", "param", "space", "mean", "sd"],
        summary,
    )?;

    let level = chi2_quantile(2, 0.95)?;
    let mut erows = Vec::new();
    for o in &out.outcomes {
        let Some(cov) = &o.eta_cov else { continue };
        if cov.nrows() != 2 {
            continue;
        }
        let Ok(e) = ellipse_params(cov, level) else {
            continue;
        };
        erows.push(vec![
            o.label.clone(),
            o.method.as_str().to_string(),
            o.space.clone(),
            fmt_f64(o.eta_mean[0]),
            fmt_f64(o.eta_mean[1]),
            fmt_f64(cov[(0, 0)]),
            fmt_f64(cov[(0, 1)]),
            fmt_f64(cov[(1, 1)]),
            fmt_f64(e.rx),
            fmt_f64(e.ry),
            fmt_f64(e.angle_deg),
        ]);
    }
    rep.write_csv(
        "ellipses.csv",
        &[
            "label", "method", "space", "cx", "cy", "cov11", "cov12", "cov22", "rx", "ry",
            "angle_deg",
        ],
        erows,
    )?;

    let mut crows = Vec::new();
    for o in &out.outcomes {
        let Some(cal) = &o.calibration else { continue };
        for &(beta, coverage) in &cal.curve {
            crows.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                fmt_f64(beta),
                fmt_f64(coverage),
                if beta == cal.beta_star { "1" } else { "0" }.to_string(),
            ]);
        }
    }
    rep.write_csv(
        "calibration.csv",
        &["label", "method", "beta", "coverage", "is_beta_star"],
        crows,
    )?;

    let mut drows = Vec::new();
    for o in &out.outcomes {
        drows.push(vec![
            o.label.clone(),
            o.method.as_str().to_string(),
            "beta".to_string(),
            "used".to_string(),
            fmt_f64(o.beta),
        ]);
        for (j, r) in o.r_hat.iter().enumerate() {
            if let Some(r) = r {
                drows.push(vec![
                    o.label.clone(),
                    o.method.as_str().to_string(),
                    "r_hat".to_string(),
                    o.param_names.get(j).cloned().unwrap_or_else(|| format!("p{j}")),
                    fmt_f64(*r),
                ]);
            }
        }
        for (c, a) in o.acceptance.iter().enumerate() {
            drows.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                "acceptance".to_string(),
                format!("chain{c}"),
                fmt_f64(*a),
            ]);
        }
        if let Some(cal) = &o.calibration {
            drows.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                "calibration".to_string(),
                "bracket_found".to_string(),
                if cal.bracket_found { "1" } else { "0" }.to_string(),
            ]);
            drows.push(vec![
                o.label.clone(),
                o.method.as_str().to_string(),
                "calibration".to_string(),
                "skipped_resamples".to_string(),
                fmt_f64(cal.skipped as f64),
            ]);
        }
    }
    rep.write_csv(
        "diagnostics.csv",
        &["label", "method", "metric", "key", "value"],
        drows,
    )?;

    rep.write_csv(
        "failures.csv",
        &["label", "method", "message"],
        out.failures.iter().map(|f| {
            vec![
                f.label.clone(),
                f.method.as_str().to_string(),
                f.message.clone(),
            ]
        }),
    )?;
    Ok(())
}

/// Grid settings unpacked from a `calibrate` β mode.
pub struct CalGrid {
    pub bootstrap: usize,
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// Unpack the calibration grid, rejecting configs that fix β (there is
/// nothing to calibrate then).
pub fn require_calibrate(beta: &BetaMode) -> Result<CalGrid> {
    match beta {
        BetaMode::Calibrate {
            bootstrap,
            delta,
            grid_lo,
            grid_hi,
            grid_points,
        } => Ok(CalGrid {
            bootstrap: *bootstrap,
            delta: *delta,
            lo: *grid_lo,
            hi: *grid_hi,
            points: *grid_points,
        }),
        BetaMode::Fixed { .. } => Err(HarnessError::Config(
            "beta is fixed in this config; calibration needs beta.mode = \"calibrate\"".into(),
        )),
    }
}

/// A figure overlaying 95% Gaussian ellipses for several fits, with an
/// optional truth marker.
pub fn ellipse_overlay(
    title: &str,
    x_label: &str,
    y_label: &str,
    items: &[(String, (f64, f64), DMatrix<f64>)],
    truth: Option<(f64, f64)>,
) -> Result<Figure> {
    let level = chi2_quantile(2, 0.95)?;
    let mut fig = Figure::new(title, x_label, y_label);
    for (name, mean, cov) in items {
        fig = fig.ellipse(name, *mean, cov, level, false)?;
    }
    if let Some((x, y)) = truth {
        fig = fig.cross(x, y, "#333333");
    }
    Ok(fig)
}

/// Filename-safe version of a dataset label.
pub fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut last_sep = true;
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' {
            out.push(ch);
            last_sep = false;
        } else if !last_sep {
            out.push('_');
            last_sep = true;
        }
    }
    out.trim_end_matches('_').to_string()
}
