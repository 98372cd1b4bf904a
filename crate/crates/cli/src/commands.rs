use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use orlicz_core::conditions::LowerOrder;
use orlicz_core::degiorgi::{
    best_beta_trajectory, caccioppoli_fit, degiorgi_constants, find_y0_star, iterate_sequence,
    oscillation_decay_analysis, oscillation_scales, DecayParams, IterationState,
};
use orlicz_core::modular::{luxemburg_norm, modular};
use orlicz_core::numeric::geometric_ladder;
use orlicz_core::variational::{local_min_test, minimize, BoundaryData, EnergyDensity, MinimizeOutcome};
use orlicz_core::{check_conditions, derive_growth, DerivedGrowth, Error, GridFunction, GrowthFunction, NFunction};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::*;
use crate::diag;

/// Where inputs come from and artifacts go, plus the provenance digest.
pub struct Context {
    pub config_path: PathBuf,
    pub config_dir: PathBuf,
    pub output_dir: PathBuf,
    pub digest: [u8; 32],
    pub seed: u64,
}

impl Context {
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.config_dir.join(p)
    }

    fn output(&self, p: &Path) -> PathBuf {
        self.output_dir.join(p)
    }

    /// Output path for an artifact, refusing to clobber the config itself.
    fn artifact(&self, p: &Path) -> Result<PathBuf, Error> {
        let path = self.output(p);
        let same = match (fs::canonicalize(&path), fs::canonicalize(&self.config_path)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            return Err(Error::Invalid(format!(
                "artifact {} would overwrite the config file; set `output` or --output-dir",
                path.display()
            )));
        }
        Ok(path)
    }

    fn write_json(&self, p: &Path, mut body: Value) -> Result<PathBuf, Error> {
        body.as_object_mut().expect("report objects").insert("config_sha256".into(), Value::String(self.digest_hex()));
        let path = self.artifact(p)?;
        let mut text = serde_json::to_string_pretty(&body).map_err(|e| Error::Invalid(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn write_grid(&self, p: &Path, u: &GridFunction) -> Result<PathBuf, Error> {
        let path = self.artifact(p)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            u.write_csv(&path, Some(&self.digest_hex()))?;
        } else {
            u.write_binary(&path, Some(self.digest))?;
        }
        Ok(path)
    }
}

/// Outcome of a command: artifacts written and the first error, if any.
/// Artifacts are still reported when a later stage fails.
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
    pub error: Option<Error>,
}

impl Outcome {
    fn ok(artifacts: Vec<PathBuf>, summary: Value) -> Self {
        Self { artifacts, summary, error: None }
    }
}

fn file_sha256(path: &Path) -> Result<String, Error> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn error_value(e: &Error) -> Value {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
}

fn check_dim(n: usize) -> Result<(), Error> {
    if (2..=orlicz_core::nfunction::MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("dimension must lie in 2..={}, got {n}", orlicz_core::nfunction::MAX_DIM)))
    }
}

pub fn run(cfg: &PipelineConfig, ctx: &Context) -> Result<Outcome, Error> {
    match cfg {
        PipelineConfig::Conjugate(c) => conjugate(c, ctx),
        PipelineConfig::Check(c) => check(c, ctx),
        PipelineConfig::Norm(c) => norm(c, ctx),
        PipelineConfig::Minimize(c) => run_minimize(c, ctx),
        PipelineConfig::Analyze(c) => analyze(c, ctx),
        PipelineConfig::Sequence(c) => sequence(c, ctx),
    }
}

fn conjugate(cfg: &ConjugateConfig, ctx: &Context) -> Result<Outcome, Error> {
    check_dim(cfg.dim)?;
    let a = NFunction::from_descriptor(&cfg.nfunction, cfg.dim)?;
    let x = cfg.point.clone().unwrap_or_else(|| vec![0.0; cfg.dim]);
    if x.len() != cfg.dim {
        return Err(Error::Invalid(format!("point has {} coordinates, expected {}", x.len(), cfg.dim)));
    }
    let l = &cfg.ladder;
    if !(l.lo > 0.0 && l.hi > l.lo && l.per_decade > 0) {
        return Err(Error::Invalid("ladder needs 0 < lo < hi and per_decade > 0".into()));
    }
    let mut out = String::new();
    out.push_str(&format!("# config_sha256: {}\n", ctx.digest_hex()));
    out.push_str("t,A,a,conjugate,sobolev_conjugate\n");
    let mut saturated = 0;
    // A_* does not depend on the row once integrability fails at x
    let mut undefined: Option<Error> = None;
    for t in geometric_ladder(l.lo, l.hi, l.per_decade) {
        let (v, d) = a.eval_pair(&x, t)?;
        let c = a.young_conjugate(&x, t)?;
        let s = if undefined.is_some() {
            f64::NAN
        } else {
            match a.sobolev_conjugate(&x, t) {
                Ok(v) => v,
                // beyond the saturation point A_* is infinite
                Err(Error::ConjugateRange { .. }) => {
                    saturated += 1;
                    f64::INFINITY
                }
                Err(e @ Error::Integrability { .. }) => {
                    undefined = Some(e);
                    f64::NAN
                }
                Err(e) => return Err(e),
            }
        };
        out.push_str(&format!("{t},{v},{d},{c},{s}\n"));
    }
    let path = ctx.artifact(&cfg.output)?;
    fs::write(&path, out)?;
    if saturated > 0 {
        diag("info", "sobolev_conjugate_saturated", json!({ "rows": saturated }));
    }
    Ok(Outcome {
        artifacts: vec![path],
        summary: json!({ "saturated_rows": saturated, "sobolev_conjugate_defined": undefined.is_none() }),
        error: undefined,
    })
}

fn check(cfg: &CheckConfig, ctx: &Context) -> Result<Outcome, Error> {
    let n = cfg.domain.dim();
    let a = NFunction::from_descriptor(&cfg.nfunction, n)?;
    let g = GrowthFunction::from_descriptor(&cfg.growth)?;
    let lower = match &cfg.lower {
        Some(l) => Some((NFunction::from_descriptor(&l.nfunction, n)?, GrowthFunction::from_descriptor(&l.growth)?)),
        None => None,
    };
    let report =
        check_conditions(&a, &g, lower.as_ref().map(|(b, gb)| LowerOrder { b, growth: gb }), &cfg.domain, &cfg.plan)?;
    let path = ctx.write_json(&cfg.output, json!({ "report": report }))?;
    Ok(Outcome::ok(vec![path], json!({ "all_pass": report.all_pass, "delta2_constant": report.delta2.constant })))
}

fn norm(cfg: &NormConfig, ctx: &Context) -> Result<Outcome, Error> {
    let input = ctx.input(&cfg.input);
    let u = GridFunction::read_any(&input)?;
    let a = NFunction::from_descriptor(&cfg.nfunction, u.domain().dim())?;
    let norm = luxemburg_norm(&a, &u)?;
    let at_norm = if norm > 0.0 { Some(modular(&a, &u.scaled(1.0 / norm), None)?) } else { None };
    let path = ctx.write_json(
        &cfg.output,
        json!({
            "norm": norm,
            "modular": modular(&a, &u, None)?,
            "modular_at_norm": at_norm,
            "nodes": u.len(),
            "input_sha256": file_sha256(&input)?,
        }),
    )?;
    Ok(Outcome::ok(vec![path], json!({ "norm": norm })))
}

fn density(cfg: &DensityConfig, n: usize) -> Result<EnergyDensity, Error> {
    let mut f = EnergyDensity::new(NFunction::from_descriptor(&cfg.integrand, n)?).with_scale(cfg.scale)?;
    if let Some(b) = &cfg.lower {
        f = f.with_lower(NFunction::from_descriptor(b, n)?);
    }
    if let Some(r) = &cfg.reference {
        f = f.with_reference(NFunction::from_descriptor(r, n)?);
    }
    if let Some((a, b)) = cfg.sandwich {
        f = f.with_sandwich(a, b)?;
    }
    Ok(f)
}

fn thin_log(out: &MinimizeOutcome) -> Vec<Value> {
    let stride = (out.log.len() / 200).max(1);
    let mut picked: Vec<Value> = out.log.iter().step_by(stride).map(|r| json!(r)).collect();
    if (out.log.len() - 1) % stride != 0 {
        picked.push(json!(out.log.last().unwrap()));
    }
    picked
}

fn run_minimize(cfg: &MinimizeConfig, ctx: &Context) -> Result<Outcome, Error> {
    let n = cfg.domain.dim();
    let f = density(&cfg.density, n)?;
    let bd = match &cfg.boundary {
        BoundaryConfig::Expression(src) => BoundaryData::expression(src, n)?,
        BoundaryConfig::File { file } => {
            let g = GridFunction::read_any(&ctx.input(file))?;
            if g.domain() != &cfg.domain {
                return Err(Error::Invalid("boundary grid file lives on another grid".into()));
            }
            BoundaryData::Tabulated(g)
        }
    };
    let init = bd.with_interior(&cfg.domain, cfg.initial_fill)?;
    let result = minimize(&f, &bd, &init, &cfg.solver);
    let out = match result {
        Ok(out) => out,
        Err(Error::Stagnation { iterations, energy, last }) => {
            let grid = ctx.write_grid(&cfg.output, &last)?;
            let report = ctx.write_json(
                &cfg.report,
                json!({ "converged": false, "stagnated": true, "iterations": iterations, "energy": energy }),
            )?;
            return Ok(Outcome {
                artifacts: vec![grid, report],
                summary: json!({ "converged": false }),
                error: Some(Error::Stagnation { iterations, energy, last }),
            });
        }
        Err(e) => return Err(e),
    };
    let grid = ctx.write_grid(&cfg.output, &out.solution)?;
    let local = if cfg.local_min_trials > 0 {
        Some(local_min_test(&f, &out.solution, cfg.local_min_trials, 1e-10, ctx.seed)?)
    } else {
        None
    };
    let report = ctx.write_json(
        &cfg.report,
        json!({
            "converged": out.converged,
            "iterations": out.iterations,
            "energy": out.energy,
            "energy_raw": out.energy_raw,
            "gradient_sup": out.gradient_sup,
            "solution": cfg.output,
            "local_minimality": local,
            "log": thin_log(&out),
        }),
    )?;
    let summary = json!({ "converged": out.converged, "iterations": out.iterations, "energy": out.energy_raw });
    let error = (!out.converged).then(|| {
        Error::Infeasible(format!(
            "solver stopped after {} iterations with gradient {:e} above the tolerance",
            out.iterations, out.gradient_sup
        ))
    });
    Ok(Outcome { artifacts: vec![grid, report], summary, error })
}

fn analyze(cfg: &AnalyzeConfig, ctx: &Context) -> Result<Outcome, Error> {
    let input = ctx.input(&cfg.input);
    let u = GridFunction::read_any(&input)?;
    let d = u.domain().clone();
    let n = d.dim();
    let a = NFunction::from_descriptor(&cfg.nfunction, n)?;
    let growth = cfg.growth.as_ref().map(GrowthFunction::from_descriptor).transpose()?;
    let mut first_error: Option<Error> = None;
    let mut note = |e: Error, stage: &str| -> Value {
        diag("warn", "stage_failed", json!({ "stage": stage, "kind": e.kind(), "message": e.to_string() }));
        let v = error_value(&e);
        first_error.get_or_insert(e);
        v
    };

    let center = cfg.decay.center.clone().unwrap_or_else(|| d.center());
    let params =
        DecayParams { r0: cfg.decay.r0, b: cfg.decay.b, theta: cfg.decay.theta, c1: cfg.decay.c1, eps: cfg.decay.eps };
    let decay = match oscillation_decay_analysis(&u, &center, &params) {
        Ok(r) => json!(r),
        Err(e @ Error::InsufficientScales { .. }) => {
            let scales =
                oscillation_scales(&u, &center, &params).map(|(s, floor)| json!({ "scales": s, "noise_floor": floor }));
            let mut v = note(e, "decay");
            if let Ok(s) = scales {
                v.as_object_mut().unwrap().insert("scales".into(), s);
            }
            v
        }
        Err(e) => note(e, "decay"),
    };

    let m = cfg.fit.m.unwrap_or_else(|| if u.sup_norm() > 0.0 { u.sup_norm() } else { 1.0 });
    let fit = caccioppoli_fit(&a, &u, m, cfg.fit.delta, &cfg.fit.sampling);
    let fit_value = match &fit {
        Ok(f) => json!({ "params": f.params, "violations": f.violations, "samples": f.samples.len() }),
        Err(_) => Value::Null,
    };
    let (fit_value, params_b) = match fit {
        Ok(f) => (fit_value, Some(f.params)),
        Err(e) => (note(e, "caccioppoli_fit"), None),
    };

    let constants = match (growth, params_b) {
        (None, _) => Value::Null,
        (Some(_), None) => json!({ "skipped": "class-B fit failed" }),
        (Some(g), Some(p)) => {
            let ladder = geometric_ladder(1e-3, 1e3, 10);
            match derive_growth(&g, n, &ladder).and_then(|dg| degiorgi_constants(&dg, p.gamma, p.delta, cfg.chain)) {
                Ok(c) => json!(c),
                Err(e) => note(e, "degiorgi_constants"),
            }
        }
    };

    let path = ctx.write_json(
        &cfg.output,
        json!({
            "input_sha256": file_sha256(&input)?,
            "center": center,
            "decay": decay,
            "caccioppoli_fit": fit_value,
            "degiorgi_constants": constants,
        }),
    )?;
    let alpha_hat = decay.get("alpha_hat").cloned().unwrap_or(Value::Null);
    Ok(Outcome { artifacts: vec![path], summary: json!({ "alpha_hat": alpha_hat }), error: first_error })
}

fn trajectory_value(y0: f64, st: &IterationState) -> Value {
    json!({
        "y0": y0,
        "beta": st.beta,
        "converged": st.converged,
        "diverged": st.diverged,
        "steps": st.y.len() - 1,
        "y": st.y,
    })
}

fn sequence(cfg: &SequenceConfig, ctx: &Context) -> Result<Outcome, Error> {
    check_dim(cfg.dim)?;
    let g = DerivedGrowth::new(GrowthFunction::from_descriptor(&cfg.growth)?, cfg.dim);
    let mut first_error = None;
    let threshold = match find_y0_star(&g, cfg.c, cfg.tol) {
        Ok(y) => json!(y),
        Err(e) if e.is_validation() => return Err(e),
        Err(e) => {
            diag("warn", "stage_failed", json!({ "stage": "y0_star", "kind": e.kind(), "message": e.to_string() }));
            let v = error_value(&e);
            first_error = Some(e);
            v
        }
    };
    let mut trajectories = Vec::with_capacity(cfg.seeds.len());
    for &y0 in &cfg.seeds {
        let st = match cfg.beta {
            Some(b) => iterate_sequence(&g, cfg.c, b, y0, cfg.hmax)?,
            None => best_beta_trajectory(&g, cfg.c, y0, cfg.hmax)?,
        };
        trajectories.push(trajectory_value(y0, &st));
    }
    let path =
        ctx.write_json(&cfg.output, json!({ "y0_star": threshold, "c": cfg.c, "trajectories": trajectories }))?;
    Ok(Outcome { artifacts: vec![path], summary: json!({ "y0_star": threshold }), error: first_error })
}

/// Flushes stdout after the single summary line.
pub fn print_summary(cmd: &str, ctx: &Context, outcome: &Outcome) {
    let line = json!({
        "command": cmd,
        "config_sha256": ctx.digest_hex(),
        "artifacts": outcome.artifacts,
        "summary": outcome.summary,
    });
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}
