//! Subcommand implementations on a resolved [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use photomesh::eval::evaluate as eval_metrics;
use photomesh::gradcheck::run_all;
use photomesh::optim::{optimize as run_optimize, trace_to_jsonl, OptimOutcome};
use photomesh::prior::{fit_prior as fit, generate};
use photomesh::scene::{load_scene_bundle, make_family, make_scene as build_scene, write_scene_bundle};
use photomesh::{Error, LinearShapePrior, Result, ShapeState, TriangleMesh};

use crate::config::RunConfig;
use crate::sweep;

fn require(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::InvalidConfig(format!("missing {}", path.display())))
    }
}

pub fn make_scene(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let scene = build_scene(&cfg.scene)?;
    write_scene_bundle(out, &scene)?;
    println!("wrote {} frames to {}", scene.frames.len(), out.display());
    Ok(())
}

/// Fits to the OBJ files in `meshes` (sorted by name), or to the synthetic
/// family described by `cfg.scene.shape`.
pub fn fit_prior(cfg: &RunConfig, meshes: Option<&Path>) -> Result<()> {
    let out = cfg.out()?;
    let shape = &cfg.scene.shape;
    let members = match meshes {
        Some(dir) => {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.retain(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")));
            paths.sort();
            paths.iter().map(TriangleMesh::load_obj).collect::<Result<Vec<_>>>()?
        }
        None => make_family(shape.family_size, shape.subdivisions, shape.family_seed),
    };
    let prior = fit(&members, shape.code_dim)?;
    prior.save_json(out)?;
    println!(
        "fitted {}-dimensional prior to {} meshes",
        shape.code_dim,
        members.len()
    );
    Ok(())
}

/// Runs the optimizer on the bundle in `cfg.scene_dir`, starting from and
/// regularizing towards the initial code.
pub fn run_optimization(cfg: &RunConfig) -> Result<(OptimOutcome, LinearShapePrior)> {
    let bundle = load_scene_bundle(cfg.scene_dir()?)?;
    let prior = LinearShapePrior::load_json(require(&cfg.prior_path()?)?)?;
    let init = ShapeState::load_json(require(&cfg.init_path()?)?)?;
    let outcome = run_optimize(&prior, &bundle.frames, &init, &init.code, &cfg.optim)?;
    Ok((outcome, prior))
}

/// Writes `out_mesh.obj`, `out_state.json` and `trace.jsonl` to `cfg.out`.
pub fn optimize(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let (outcome, prior) = run_optimization(cfg)?;
    fs::create_dir_all(out)?;
    generate(&prior, &outcome.state)?.save_obj(out.join("out_mesh.obj"))?;
    outcome.state.save_json(out.join("out_state.json"))?;
    fs::write(out.join("trace.jsonl"), trace_to_jsonl(&outcome.trace)?)?;
    if let (Some(first), Some(last)) = (outcome.trace.first(), outcome.trace.last()) {
        println!(
            "loss {:.6} -> {:.6} over {} iterations",
            first.total,
            last.total,
            outcome.trace.len()
        );
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, pred: &Path, gt: Option<&Path>) -> Result<()> {
    let dir = cfg.scene_dir()?;
    let bundle = load_scene_bundle(dir)?;
    let gt_path = gt.map_or_else(|| dir.join("gt_mesh.obj"), Path::to_path_buf);
    let pred = TriangleMesh::load_obj(require(pred)?)?;
    let gt = TriangleMesh::load_obj(require(&gt_path)?)?;
    let cams = bundle.frames.cameras();
    let distances: Vec<usize> = cfg.eval.distances.iter().copied().filter(|&d| d < cams.len()).collect();
    let metrics = eval_metrics(&pred, &gt, &cams, &distances, cfg.eval.samples, cfg.eval.seed)?;
    match &cfg.out {
        Some(p) => metrics.save_json(p)?,
        None => println!("{}", serde_json::to_string_pretty(&metrics)?),
    }
    Ok(())
}

/// Writes `runs.csv` and `summary.json` to `cfg.out`.
pub fn noise_sweep(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let report = sweep::noise_sweep(cfg)?;
    fs::create_dir_all(out)?;
    sweep::write_csv(out.join("runs.csv"), &report)?;
    sweep::write_summary(out.join("summary.json"), &report)?;
    for s in &report.summary {
        println!(
            "sigma {:.3}: eta {:.4} ± {:.4} -> {:.4} ± {:.4} ({} runs, {} failed)",
            s.sigma, s.eta_before_mean, s.eta_before_std, s.eta_after_mean, s.eta_after_std, s.runs, s.failures
        );
    }
    Ok(())
}

/// Fails with status 1 when any check exceeds its tolerance.
pub fn check_gradients(cases: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let results = run_all(cases, seed)?;
    for r in &results {
        println!(
            "{} {:<22} max rel error {:.3e} (tol {:.0e}, {} cases)",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.tolerance,
            r.cases
        );
    }
    if let Some(p) = out {
        fs::write(p, serde_json::to_string_pretty(&results)? + "\n")?;
    }
    if results.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Error::InsufficientData("gradient check failed".into()))
    }
}
