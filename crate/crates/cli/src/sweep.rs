//! Noise sweep: for every noise level and seed, render a scene, perturb the
//! ground-truth transform, optimize and compare metrics before and after.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use photomesh::eval::{eta_pair, reprojection_error};
use photomesh::optim::optimize;
use photomesh::prior::generate;
use photomesh::scene::{make_scene, PanoramaSource, SceneSpec};
use photomesh::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub eta_before: f64,
    pub eta_after: f64,
    pub eta_gt_to_pred_before: f64,
    pub eta_gt_to_pred_after: f64,
    pub reproj_before: BTreeMap<usize, f64>,
    pub reproj_after: BTreeMap<usize, f64>,
    pub scale_after: f64,
    pub loss_first: f64,
    pub loss_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sigma: f64,
    pub seed: u64,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub runs: usize,
    pub failures: usize,
    pub eta_before_mean: f64,
    pub eta_before_std: f64,
    pub eta_after_mean: f64,
    pub eta_after_std: f64,
    pub eta_gt_to_pred_before_mean: f64,
    pub eta_gt_to_pred_after_mean: f64,
    /// `1 − mean η_after / mean η_before`.
    pub reduction: f64,
    /// Fraction of successful runs with `η_after < η_before`.
    pub improved_fraction: f64,
    pub reproj_before_mean: BTreeMap<usize, f64>,
    pub reproj_after_mean: BTreeMap<usize, f64>,
    pub min_scale_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub summary: Vec<SigmaSummary>,
    pub runs: Vec<RunRecord>,
}

/// Scene of run `seed` at noise level `sigma`: the same seed gives the same
/// shape, texture, background and noise direction at every noise level.
pub fn scene_for(base: &SceneSpec, sigma: f64, seed: u64) -> SceneSpec {
    let mut spec = base.clone();
    spec.noise.sigma = sigma;
    spec.noise.seed = base.noise.seed.wrapping_add(seed);
    spec.shape.member_seed = base.shape.member_seed.wrapping_add(seed);
    spec.texture.seed = base.texture.seed.wrapping_add(seed);
    if let PanoramaSource::Procedural { seed: s, .. } = &mut spec.panorama {
        *s = s.wrapping_add(seed);
    }
    spec
}

pub fn run_one(cfg: &RunConfig, sigma: f64, seed: u64) -> Result<RunOutcome> {
    let scene = make_scene(&scene_for(&cfg.scene, sigma, seed))?;
    let mut optim = cfg.optim.clone();
    optim.seed = cfg.optim.seed.wrapping_add(seed);
    let out = optimize(
        &scene.prior,
        &scene.frames,
        &scene.init_state,
        &scene.init_state.code,
        &optim,
    )?;
    let before = generate(&scene.prior, &scene.init_state)?;
    let after = generate(&scene.prior, &out.state)?;
    let (eta_before, eta_gt_to_pred_before) = eta_pair(&before, &scene.gt_mesh, cfg.eval.samples, cfg.eval.seed)?;
    let (eta_after, eta_gt_to_pred_after) = eta_pair(&after, &scene.gt_mesh, cfg.eval.samples, cfg.eval.seed)?;
    let cams = scene.frames.cameras();
    let reproj = |mesh| -> Result<BTreeMap<usize, f64>> {
        cfg.eval
            .distances
            .iter()
            .filter(|&&d| d < cams.len())
            .map(|&d| match reprojection_error(&scene.gt_mesh, mesh, &cams, d) {
                Ok(e) => Ok((d, e)),
                Err(Error::NoVisibleSamples) => Ok((d, f64::NAN)),
                Err(e) => Err(e),
            })
            .collect()
    };
    Ok(RunOutcome {
        eta_before,
        eta_after,
        eta_gt_to_pred_before,
        eta_gt_to_pred_after,
        reproj_before: reproj(&before)?,
        reproj_after: reproj(&after)?,
        scale_after: out.state.transform.scale(),
        loss_first: out.trace.first().map_or(f64::NAN, |r| r.total),
        loss_last: out.trace.last().map_or(f64::NAN, |r| r.total),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarize(sigma: f64, runs: &[&RunRecord]) -> SigmaSummary {
    let ok: Vec<&RunOutcome> = runs.iter().filter_map(|r| r.outcome.as_ref()).collect();
    let col = |f: fn(&RunOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<Vec<_>>();
    let (eb, eb_sd) = mean_std(&col(|o| o.eta_before));
    let (ea, ea_sd) = mean_std(&col(|o| o.eta_after));
    let reproj_mean = |pick: fn(&RunOutcome) -> &BTreeMap<usize, f64>| {
        let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for o in &ok {
            for (d, v) in pick(o) {
                acc.entry(*d).or_default().push(*v);
            }
        }
        acc.into_iter().map(|(d, v)| (d, mean_std(&v).0)).collect()
    };
    SigmaSummary {
        sigma,
        runs: runs.len(),
        failures: runs.len() - ok.len(),
        eta_before_mean: eb,
        eta_before_std: eb_sd,
        eta_after_mean: ea,
        eta_after_std: ea_sd,
        eta_gt_to_pred_before_mean: mean_std(&col(|o| o.eta_gt_to_pred_before)).0,
        eta_gt_to_pred_after_mean: mean_std(&col(|o| o.eta_gt_to_pred_after)).0,
        reduction: if eb > 0.0 { 1.0 - ea / eb } else { 0.0 },
        improved_fraction: if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|o| o.eta_after < o.eta_before).count() as f64 / ok.len() as f64
        },
        reproj_before_mean: reproj_mean(|o| &o.reproj_before),
        reproj_after_mean: reproj_mean(|o| &o.reproj_after),
        min_scale_after: col(|o| o.scale_after).into_iter().fold(f64::INFINITY, f64::min),
    }
}

/// Runs every (σ, seed) combination. Individual failures are recorded and
/// the sweep continues.
pub fn noise_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = cfg
        .sweep
        .sigmas
        .iter()
        .flat_map(|&s| (0..cfg.sweep.seeds as u64).map(move |i| (s, i)))
        .map(|(s, i)| (s, cfg.sweep.first_seed + i))
        .collect();
    let work = || -> Vec<RunRecord> {
        jobs.par_iter()
            .map(|&(sigma, seed)| {
                let res = run_one(cfg, sigma, seed);
                RunRecord {
                    sigma,
                    seed,
                    error: res.as_ref().err().map(|e| e.to_string()),
                    outcome: res.ok(),
                }
            })
            .collect()
    };
    let runs = if cfg.sweep.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.sweep.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let summary = cfg
        .sweep
        .sigmas
        .iter()
        .map(|&s| summarize(s, &runs.iter().filter(|r| r.sigma == s).collect::<Vec<_>>()))
        .collect();
    Ok(SweepReport { summary, runs })
}

pub fn write_csv(path: impl AsRef<Path>, report: &SweepReport) -> Result<()> {
    let distances: Vec<usize> = report
        .runs
        .iter()
        .filter_map(|r| r.outcome.as_ref())
        .flat_map(|o| o.reproj_before.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = [
        "sigma",
        "seed",
        "status",
        "eta_before",
        "eta_after",
        "eta_gt_to_pred_before",
        "eta_gt_to_pred_after",
        "scale_after",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for d in &distances {
        header.push(format!("reproj_before_d{d}"));
        header.push(format!("reproj_after_d{d}"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.runs {
        let mut row = vec![r.sigma.to_string(), r.seed.to_string()];
        match &r.outcome {
            Some(o) => {
                row.push("ok".into());
                for v in [
                    o.eta_before,
                    o.eta_after,
                    o.eta_gt_to_pred_before,
                    o.eta_gt_to_pred_after,
                    o.scale_after,
                ] {
                    row.push(v.to_string());
                }
                for d in &distances {
                    row.push(o.reproj_before.get(d).map_or(String::new(), |v| v.to_string()));
                    row.push(o.reproj_after.get(d).map_or(String::new(), |v| v.to_string()));
                }
            }
            None => {
                row.push(format!("error: {}", r.error.as_deref().unwrap_or("unknown")));
                row.resize(header.len(), String::new());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_summary(path: impl AsRef<Path>, report: &SweepReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
