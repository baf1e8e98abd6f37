//! Count-model studies: the univariate two-regime comparison, the
//! smoothing/matching sensitivity sweeps, contamination robustness with
//! weighted losses, and the graphical model with its posterior
//! predictive check.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use lrm_core::calibrate::{calibrate_beta, CalibrationProblem, CalibrationResult};
use lrm_core::domain::StatePoint;
use lrm_core::lrm::{poisson_weights, WeightFunction};
use lrm_core::models::{posterior_on_theta, CmpGraphical, CmpUnivariate, ExpFamily, TransformKind};
use lrm_core::numeric::ln_factorial;
use lrm_core::samplers::{
    mh_posterior_predictive_cmp_graphical, sample_cmp_rejection, PredictiveConfig, RngSpec,
};

use crate::config::{BetaMode, Config, ContaminationConfig, MatchingSpec, MethodId};
use crate::experiments::{ellipse_overlay, require_calibrate, slug, RunOpts, RunOutput};
use crate::ingest;
use crate::methods::{self, DfdCalibration, MethodOutcome};
use crate::mix_seed;
use crate::report::{fmt_f64, Reporter};
use crate::svg::{panel_grid, Figure};
use crate::{HarnessError, Result};

const SALT_DATA: u64 = 100;
const SALT_GRAPHICAL_DATA: u64 = 150;
const SALT_LRM: u64 = 300;
const SALT_SENS_ALPHA: u64 = 310;
const SALT_SENS_MATCH: u64 = 330;
const SALT_SENS_CAL: u64 = 350;
const SALT_ROBUST: u64 = 360;
const SALT_GRAPHICAL: u64 = 370;
const SALT_PREDICTIVE: u64 = 380;
const SALT_DFD: u64 = 400;
const SALT_TRUNC: u64 = 500;

fn theta_label(t: &[f64]) -> String {
    format!("cmp({},{})", t[0], t[1])
}

/// Draw a univariate CMP sample, optionally swapping a fixed fraction of
/// observations for Poisson contamination.
pub fn simulate_cmp(
    theta: &[f64],
    n: usize,
    contamination: Option<&ContaminationConfig>,
    seed: u64,
) -> Result<Vec<StatePoint>> {
    let mut rng = RngSpec::new(seed).rng()?;
    let mut values = sample_cmp_rejection(theta[0], theta[1], n, &mut rng)?;
    if let Some(c) = contamination {
        let k = (c.fraction * n as f64).round() as usize;
        let pois = Poisson::new(c.poisson_mean)
            .map_err(|e| HarnessError::Config(format!("bad contamination mean: {e}")))?;
        for slot in values.iter_mut().rev().take(k) {
            let v: f64 = pois.sample(&mut rng);
            *slot = v as i64;
        }
    }
    Ok(values.into_iter().map(StatePoint::scalar).collect())
}

fn dataset_count(cfg: &Config) -> usize {
    if cfg.data.path.is_some() {
        1
    } else {
        cfg.data.thetas.len()
    }
}

/// The idx-th dataset of a univariate count study: ingested from the
/// configured file, or simulated at the idx-th truth.
pub fn cmp_dataset(cfg: &Config, idx: usize) -> Result<(String, Vec<StatePoint>)> {
    if let Some(path) = &cfg.data.path {
        let series = ingest::read_count_series(Path::new(path))?;
        let pts = series.iter().map(|&v| StatePoint::scalar(v)).collect();
        return Ok(("ingested".to_string(), pts));
    }
    let t = &cfg.data.thetas[idx];
    let samples = simulate_cmp(
        t,
        cfg.data.n,
        cfg.data.contamination.as_ref(),
        mix_seed(cfg.seed, SALT_DATA + idx as u64),
    )?;
    Ok((theta_label(t), samples))
}

fn scalars(samples: &[StatePoint]) -> Vec<i64> {
    samples.iter().map(|x| x.get(0)).collect()
}

fn eta_truth(cfg: &Config, idx: usize) -> Option<(f64, f64)> {
    if cfg.data.path.is_some() {
        return None;
    }
    let t = cfg.data.thetas.get(idx)?;
    let eta = TransformKind::CmpUnivariate
        .eta_of_theta(&DVector::from_row_slice(t))
        .ok()?;
    Some((eta[0], eta[1]))
}

pub fn write_cmp_datasets(cfg: &Config, rep: &mut Reporter) -> Result<()> {
    for i in 0..dataset_count(cfg) {
        let (label, samples) = cmp_dataset(cfg, i)?;
        rep.write_text(
            &format!("data_{}.csv", slug(&label)),
            &ingest::series_to_csv(&scalars(&samples)),
        )?;
    }
    Ok(())
}

/// β calibration curve for the first univariate dataset.
pub fn calibration_curve(cfg: &Config) -> Result<CalibrationResult> {
    let grid = require_calibrate(&cfg.beta)?;
    let model = CmpUnivariate::new();
    let prior = cfg.prior.build(2)?;
    let (_, samples) = cmp_dataset(cfg, 0)?;
    let m = methods::build_matching(&cfg.matching, &model)?;
    let problem = CalibrationProblem::from_samples(
        &model,
        &samples,
        &m,
        &methods::count_recipe(cfg.alpha, cfg.smoothing_eps),
        &WeightFunction::Constant,
        prior,
        methods::calibration_settings(
            grid.bootstrap,
            grid.delta,
            grid.lo,
            grid.hi,
            grid.points,
            mix_seed(cfg.seed, SALT_LRM),
        ),
    )?;
    Ok(calibrate_beta(&problem)?)
}

fn beta_curve_figure(title: &str, cal: &CalibrationResult, delta: f64) -> Figure {
    Figure::new(title, "beta", "coverage")
        .x_log()
        .y_range(0.0, 1.05)
        .line_marked("coverage", &cal.curve)
        .hline(1.0 - delta)
        .vline(cal.beta_star)
}

fn dataset_figures(
    rep: &mut Reporter,
    label: &str,
    outcomes: &[MethodOutcome],
    truth: Option<(f64, f64)>,
    delta: f64,
) -> Result<()> {
    let items: Vec<(String, (f64, f64), DMatrix<f64>)> = outcomes
        .iter()
        .filter_map(|o| {
            let cov = o.eta_cov.as_ref()?;
            (cov.nrows() == 2).then(|| {
                (
                    o.method.as_str().to_string(),
                    (o.eta_mean[0], o.eta_mean[1]),
                    cov.clone(),
                )
            })
        })
        .collect();
    if !items.is_empty() {
        let fig = ellipse_overlay(label, "eta1", "eta2", &items, truth)?;
        rep.write_text(&format!("ellipses_{}.svg", slug(label)), &fig.render())?;
    }
    for o in outcomes {
        if let Some(cal) = &o.calibration {
            let fig = beta_curve_figure(
                &format!("{} coverage vs beta", o.method.as_str()),
                cal,
                delta,
            );
            rep.write_text(
                &format!("beta_curve_{}_{}.svg", slug(label), o.method.as_str()),
                &fig.render(),
            )?;
        }
    }
    Ok(())
}

fn delta_of(beta: &BetaMode) -> f64 {
    match beta {
        BetaMode::Calibrate { delta, .. } => *delta,
        BetaMode::Fixed { .. } => 0.05,
    }
}

/// Univariate counts under both dispersion regimes, all requested
/// methods side by side.
pub fn run_cmp1d(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    let model = CmpUnivariate::new();
    let prior = cfg.prior.build(2)?;
    let mut out = RunOutput::new();
    for i in 0..dataset_count(cfg) {
        let (label, samples) = cmp_dataset(cfg, i)?;
        rep.write_text(
            &format!("data_{}.csv", slug(&label)),
            &ingest::series_to_csv(&scalars(&samples)),
        )?;
        let start = out.outcomes.len();
        for &method in &cfg.methods {
            let res = match method {
                MethodId::Lrm => methods::run_lrm_cmp(
                    &label,
                    &model,
                    &samples,
                    &cfg.matching,
                    cfg.alpha,
                    cfg.smoothing_eps,
                    &WeightFunction::Constant,
                    &cfg.beta,
                    &prior,
                    mix_seed(cfg.seed, SALT_LRM + i as u64),
                ),
                MethodId::Dfd => methods::run_dfd_cmp(
                    &label,
                    &model,
                    &samples,
                    &cfg.beta,
                    &prior,
                    &cfg.chains,
                    DfdCalibration::Laplace,
                    mix_seed(cfg.seed, SALT_DFD + i as u64),
                ),
                MethodId::TruncBayes => methods::run_trunc_cmp(
                    &label,
                    &model,
                    &samples,
                    cfg.data.truncation,
                    &prior,
                    &cfg.chains,
                    mix_seed(cfg.seed, SALT_TRUNC + i as u64),
                ),
                other => Err(HarnessError::Config(format!(
                    "method {other} cannot run on univariate counts"
                ))),
            };
            out.record(&label, method, res);
        }
        if opts.figures {
            dataset_figures(
                rep,
                &label,
                &out.outcomes[start..],
                eta_truth(cfg, i),
                delta_of(&cfg.beta),
            )?;
        }
    }
    Ok(out)
}

/// Sensitivity sweeps on one over-dispersed dataset: the smoothing
/// weight α, the matching-set shape at fixed β, and two matching sets
/// under coverage-calibrated β.
pub fn run_sensitivity(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    let model = CmpUnivariate::new();
    let prior = cfg.prior.build(2)?;
    let (data_label, samples) = cmp_dataset(cfg, 0)?;
    rep.write_text(
        &format!("data_{}.csv", slug(&data_label)),
        &ingest::series_to_csv(&scalars(&samples)),
    )?;
    let truth = eta_truth(cfg, 0);
    let mut out = RunOutput::new();
    let fixed = BetaMode::Fixed { value: 1.0 };

    // Panel A: smoothing weight sweep, single-offset matching, β = 1.
    let alphas = [0.0, 0.1, 0.5, 1.0];
    let a_start = out.outcomes.len();
    for (k, &alpha) in alphas.iter().enumerate() {
        let label = format!("alpha={alpha}");
        let res = methods::run_lrm_cmp(
            &label,
            &model,
            &samples,
            &MatchingSpec::Offsets(vec![1]),
            alpha,
            cfg.smoothing_eps,
            &WeightFunction::Constant,
            &fixed,
            &prior,
            mix_seed(cfg.seed, SALT_SENS_ALPHA + k as u64),
        );
        out.record(&label, MethodId::Lrm, res);
    }
    let a_end = out.outcomes.len();

    // Panel B: matching-set shapes at α = 0, β = 1.
    let variants: [(&str, &[i64]); 4] = [
        ("M={+1}", &[1]),
        ("M={-1,+1}", &[-1, 1]),
        ("M={+1,+2}", &[1, 2]),
        ("M={-2,-1,+1,+2}", &[-2, -1, 1, 2]),
    ];
    for (k, (name, offsets)) in variants.iter().enumerate() {
        let res = methods::run_lrm_cmp(
            name,
            &model,
            &samples,
            &MatchingSpec::Offsets(offsets.to_vec()),
            0.0,
            cfg.smoothing_eps,
            &WeightFunction::Constant,
            &fixed,
            &prior,
            mix_seed(cfg.seed, SALT_SENS_MATCH + k as u64),
        );
        out.record(name, MethodId::Lrm, res);
    }
    let b_end = out.outcomes.len();

    // Panel C: the narrow and wide matching sets again, now with β
    // calibrated per set.
    let cal_mode = match &cfg.beta {
        c @ BetaMode::Calibrate { .. } => c.clone(),
        BetaMode::Fixed { .. } => BetaMode::calibrate_default(),
    };
    let pair: [(&str, &[i64]); 2] = [
        ("calibrated M={+1}", &[1]),
        ("calibrated M={-2,-1,+1,+2}", &[-2, -1, 1, 2]),
    ];
    for (k, (name, offsets)) in pair.iter().enumerate() {
        let res = methods::run_lrm_cmp(
            name,
            &model,
            &samples,
            &MatchingSpec::Offsets(offsets.to_vec()),
            0.0,
            cfg.smoothing_eps,
            &WeightFunction::Constant,
            &cal_mode,
            &prior,
            mix_seed(cfg.seed, SALT_SENS_CAL + k as u64),
        );
        out.record(name, MethodId::Lrm, res);
    }

    if opts.figures {
        let panel = |title: &str, group: &[MethodOutcome]| -> Result<Figure> {
            let items: Vec<(String, (f64, f64), DMatrix<f64>)> = group
                .iter()
                .filter_map(|o| {
                    let cov = o.eta_cov.as_ref()?;
                    Some((o.label.clone(), (o.eta_mean[0], o.eta_mean[1]), cov.clone()))
                })
                .collect();
            ellipse_overlay(title, "eta1", "eta2", &items, truth)
        };
        let figs = vec![
            panel("smoothing weight", &out.outcomes[a_start..a_end])?,
            panel("matching set, beta=1", &out.outcomes[a_end..b_end])?,
            panel("matching set, calibrated beta", &out.outcomes[b_end..])?,
        ];
        rep.write_text("sensitivity_panels.svg", &panel_grid(&figs, 3))?;
    }
    Ok(out)
}

/// Contaminated counts, unweighted versus Poisson-marginal-weighted
/// loss, both at the same fixed β.
pub fn run_robust(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    let model = CmpUnivariate::new();
    let prior = cfg.prior.build(2)?;
    let (data_label, samples) = cmp_dataset(cfg, 0)?;
    rep.write_text(
        &format!("data_{}.csv", slug(&data_label)),
        &ingest::series_to_csv(&scalars(&samples)),
    )?;
    let truth = eta_truth(cfg, 0);
    let mut out = RunOutput::new();
    let arms: [(&str, WeightFunction); 2] = [
        ("unweighted", WeightFunction::Constant),
        ("weighted", poisson_weights(&samples)?),
    ];
    for (k, (name, weights)) in arms.iter().enumerate() {
        let res = methods::run_lrm_cmp(
            name,
            &model,
            &samples,
            &cfg.matching,
            cfg.alpha,
            cfg.smoothing_eps,
            weights,
            &cfg.beta,
            &prior,
            mix_seed(cfg.seed, SALT_ROBUST + k as u64),
        );
        out.record(name, MethodId::Lrm, res);
    }

    // Distance of each arm's posterior mean to the clean-component truth.
    if let Some((e1, e2)) = truth {
        let mut rows = Vec::new();
        for o in &out.outcomes {
            let de = ((o.eta_mean[0] - e1).powi(2) + (o.eta_mean[1] - e2).powi(2)).sqrt();
            let dt = o.theta_mean.as_ref().map(|tm| {
                let t = &cfg.data.thetas[0];
                ((tm[0] - t[0]).powi(2) + (tm[1] - t[1]).powi(2)).sqrt()
            });
            rows.push(vec![
                o.label.clone(),
                fmt_f64(o.beta),
                fmt_f64(de),
                dt.map(fmt_f64).unwrap_or_default(),
            ]);
        }
        rep.write_csv(
            "robust_summary.csv",
            &["label", "beta", "dist_eta", "dist_theta"],
            rows,
        )?;
    }

    if opts.figures {
        let items: Vec<(String, (f64, f64), DMatrix<f64>)> = out
            .outcomes
            .iter()
            .filter_map(|o| {
                let cov = o.eta_cov.as_ref()?;
                Some((o.label.clone(), (o.eta_mean[0], o.eta_mean[1]), cov.clone()))
            })
            .collect();
        let fig = ellipse_overlay("contaminated counts", "eta1", "eta2", &items, truth)?;
        rep.write_text("robust_ellipses.svg", &fig.render())?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Graphical model
// ---------------------------------------------------------------------------

/// Stand-in truth for the synthetic multivariate count generator: unit
/// main effects, a ring of mild repulsive interactions, dispersion just
/// above Poisson.
fn graphical_truth(model: &CmpGraphical) -> DVector<f64> {
    let d = model.d();
    let mut theta = DVector::zeros(model.dim());
    for i in 0..d {
        theta[i] = 1.0;
        theta[model.dispersion_index(i)] = 1.1;
    }
    for i in 0..d {
        let j = (i + 1) % d;
        let (a, b) = (i.min(j), i.max(j));
        theta[model.pair_index(a, b)] = 0.15;
    }
    theta
}

const GIBBS_CAP: i64 = 40;

/// One full single-site Gibbs sweep over the graphical model in
/// θ-coordinates, each conditional truncated at `GIBBS_CAP`.
fn graphical_sweep<R: Rng>(
    model: &CmpGraphical,
    theta: &DVector<f64>,
    x: &mut [i64],
    log_w: &mut [f64],
    rng: &mut R,
) {
    let d = model.d();
    for j in 0..d {
        let mut rate = theta[j];
        for k in 0..d {
            if k == j {
                continue;
            }
            let (a, b) = (j.min(k), j.max(k));
            rate -= theta[model.pair_index(a, b)] * x[k] as f64;
        }
        let disp = theta[model.dispersion_index(j)];
        let mut best = f64::NEG_INFINITY;
        for v in 0..=GIBBS_CAP {
            let lw = rate * v as f64 - disp * ln_factorial(v as u64);
            log_w[v as usize] = lw;
            best = best.max(lw);
        }
        let total: f64 = log_w.iter().map(|lw| (lw - best).exp()).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = GIBBS_CAP;
        for v in 0..=GIBBS_CAP {
            u -= (log_w[v as usize] - best).exp();
            if u <= 0.0 {
                chosen = v;
                break;
            }
        }
        x[j] = chosen;
    }
}

/// Thinned draws from one long Gibbs chain stand in for the real (not
/// redistributable) dataset; shapes match it exactly.
fn simulate_graphical(
    model: &CmpGraphical,
    theta: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<StatePoint>> {
    const WARM_SWEEPS: usize = 200;
    const THIN_SWEEPS: usize = 8;
    let d = model.d();
    let mut rng = RngSpec::new(seed).rng()?;
    let mut x = vec![1i64; d];
    let mut log_w = vec![0.0f64; (GIBBS_CAP + 1) as usize];
    for _ in 0..WARM_SWEEPS {
        graphical_sweep(model, theta, &mut x, &mut log_w, &mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..THIN_SWEEPS {
            graphical_sweep(model, theta, &mut x, &mut log_w, &mut rng);
        }
        out.push(StatePoint::new(x.clone()));
    }
    Ok(out)
}

pub fn graphical_dataset(cfg: &Config) -> Result<(String, Vec<StatePoint>)> {
    let d = cfg.data.graphical_dim;
    if let Some(path) = &cfg.data.path {
        let pts = ingest::read_count_matrix(Path::new(path))?;
        if pts.first().map(|p| p.dim()) != Some(d) {
            return Err(HarnessError::Config(format!(
                "{path}: expected {d} columns to match the configured dimension"
            )));
        }
        return Ok(("ingested".to_string(), pts));
    }
    let model = CmpGraphical::new(d)?;
    let theta = graphical_truth(&model);
    let samples = simulate_graphical(
        &model,
        &theta,
        cfg.data.n,
        mix_seed(cfg.seed, SALT_GRAPHICAL_DATA),
    )?;
    Ok(("synthetic".to_string(), samples))
}

pub fn write_graphical_dataset(cfg: &Config, rep: &mut Reporter) -> Result<()> {
    let (label, samples) = graphical_dataset(cfg)?;
    rep.write_text(
        &format!("data_{}.csv", slug(&label)),
        &ingest::matrix_to_csv(&samples),
    )?;
    Ok(())
}

pub fn graphical_calibration_curve(cfg: &Config) -> Result<CalibrationResult> {
    let grid = require_calibrate(&cfg.beta)?;
    let model = CmpGraphical::new(cfg.data.graphical_dim)?;
    let prior = cfg.prior.build(model.dim())?;
    let (_, samples) = graphical_dataset(cfg)?;
    let m = methods::build_matching(&cfg.matching, &model)?;
    let problem = CalibrationProblem::from_samples(
        &model,
        &samples,
        &m,
        &methods::count_recipe(cfg.alpha, cfg.smoothing_eps),
        &WeightFunction::Constant,
        prior,
        methods::calibration_settings(
            grid.bootstrap,
            grid.delta,
            grid.lo,
            grid.hi,
            grid.points,
            mix_seed(cfg.seed, SALT_GRAPHICAL),
        ),
    )?;
    Ok(calibrate_beta(&problem)?)
}

fn value_histogram(points: &[StatePoint], coord: usize) -> BTreeMap<i64, usize> {
    let mut h = BTreeMap::new();
    for p in points {
        *h.entry(p.get(coord)).or_insert(0) += 1;
    }
    h
}

/// Multivariate counts: matched-ratio fit with a sign-constrained θ
/// posterior and a per-coordinate posterior-predictive comparison.
pub fn run_graphical(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    let d = cfg.data.graphical_dim;
    let model = CmpGraphical::new(d)?;
    let prior = cfg.prior.build(model.dim())?;
    let (label, samples) = graphical_dataset(cfg)?;
    rep.write_text(
        &format!("data_{}.csv", slug(&label)),
        &ingest::matrix_to_csv(&samples),
    )?;
    let mut out = RunOutput::new();
    let fitted = methods::run_lrm_generic(
        &label,
        &model,
        &samples,
        &cfg.matching,
        cfg.alpha,
        cfg.smoothing_eps,
        &WeightFunction::Constant,
        &cfg.beta,
        &prior,
        TransformKind::CmpGraphical { d },
        2000,
        mix_seed(cfg.seed, SALT_GRAPHICAL),
    );
    let posterior = match fitted {
        Ok((outcome, post)) => {
            let delta = delta_of(&cfg.beta);
            if opts.figures {
                if let Some(cal) = &outcome.calibration {
                    rep.write_text(
                        "beta_curve_graphical.svg",
                        &beta_curve_figure("coverage vs beta", cal, delta).render(),
                    )?;
                }
            }
            out.outcomes.push(outcome);
            Some(post)
        }
        Err(e) => {
            out.record(&label, MethodId::Lrm, Err(e));
            None
        }
    };

    if let Some(post) = posterior {
        let theta_post = posterior_on_theta(post, TransformKind::CmpGraphical { d })?;
        let preds = mh_posterior_predictive_cmp_graphical(
            &model,
            &theta_post,
            samples.len(),
            &PredictiveConfig::default(),
            &RngSpec::new(mix_seed(cfg.seed, SALT_PREDICTIVE)),
        )?;
        let mut rows = Vec::new();
        let mut figs = Vec::new();
        for j in 0..d {
            let obs = value_histogram(&samples, j);
            let pred = value_histogram(&preds, j);
            let hi = obs
                .keys()
                .chain(pred.keys())
                .copied()
                .max()
                .unwrap_or(0);
            let mut obs_bars = Vec::new();
            let mut pred_bars = Vec::new();
            for v in 0..=hi {
                let o = obs.get(&v).copied().unwrap_or(0);
                let p = pred.get(&v).copied().unwrap_or(0);
                rows.push(vec![
                    (j + 1).to_string(),
                    v.to_string(),
                    o.to_string(),
                    p.to_string(),
                ]);
                obs_bars.push((v as f64 - 0.19, o as f64));
                pred_bars.push((v as f64 + 0.19, p as f64));
            }
            if opts.figures {
                figs.push(
                    Figure::new(&format!("coordinate {}", j + 1), "count", "frequency")
                        .size(300.0, 240.0)
                        .bars("observed", &obs_bars, 0.36)
                        .bars("predictive", &pred_bars, 0.36),
                );
            }
        }
        rep.write_csv(
            "predictive.csv",
            &["coord", "value", "observed", "predicted"],
            rows,
        )?;
        if opts.figures {
            rep.write_text("predictive.svg", &panel_grid(&figs, 5))?;
        }

        // Main-effect summary figure from the same values as the table.
        if opts.figures {
            if let (Some(tm), Some(ts)) = (
                out.outcomes[0].theta_mean.as_ref(),
                out.outcomes[0].theta_sd.as_ref(),
            ) {
                let mean_pts: Vec<(f64, f64)> =
                    (0..d).map(|j| (j as f64 + 1.0, tm[j])).collect();
                let lo: Vec<(f64, f64)> = (0..d)
                    .map(|j| (j as f64 + 1.0, tm[j] - 2.0 * ts[j]))
                    .collect();
                let hi: Vec<(f64, f64)> = (0..d)
                    .map(|j| (j as f64 + 1.0, tm[j] + 2.0 * ts[j]))
                    .collect();
                let fig = Figure::new("main effects", "coordinate", "posterior theta")
                    .line_marked("mean", &mean_pts)
                    .line_dashed("-2 sd", &lo)
                    .line_dashed("+2 sd", &hi);
                rep.write_text("graphical_main_effects.svg", &fig.render())?;
            }
        }
    }
    Ok(out)
}
