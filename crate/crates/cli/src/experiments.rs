//! One runner per experiment kind. Each writes its artifacts into the output
//! directory and returns the tolerance checks declared in the spec.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use superlab_core::{
    calibrate_critical, g_closed, kolmogorov_table, mixture_rv_check, normalize_field, rv_index_fit,
    rv_index_fit_window, simulate_coupled, simulate_paths, solve_cumulant, solve_delay_equation, survival_probability,
    yaglom_sup_error, yaglom_table, CriticalModel, DelayEquationProblem, FeynmanKacConfig, Field, InitialMeasure,
    ModelFile, SimConfig,
};

use crate::artifacts::{cells, num, write_json, Check, Manifest, Table};
use crate::error::{exit, CliError, CliResult};
use crate::spec::*;

pub const TOOL: &str = "superlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SUPERLAB_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "superlab-out";

pub struct Outcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.passed {
            exit::OK
        } else {
            exit::TOLERANCE
        }
    }
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    out: PathBuf,
    model: Option<CriticalModel>,
    model_file: Option<ModelFile>,
    seed: u64,
    artifacts: Vec<PathBuf>,
    checks: Vec<Check>,
}

impl Ctx<'_> {
    fn model(&self) -> &CriticalModel {
        self.model.as_ref().expect("model loaded for this kind")
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn hash(&self) -> String {
        self.model_file.as_ref().map(ModelFile::hash).unwrap_or_else(|| "none".into())
    }

    fn field(&self, values: &[f64], name: &str) -> CliResult<Field> {
        let d = self.model().dim();
        require(values.len() == d, &format!("`{name}` needs {d} entries, got {}", values.len()))?;
        require(values.iter().all(|v| v.is_finite() && *v >= 0.0), &format!("`{name}` must be finite and >= 0"))?;
        Ok(Field(values.to_vec()))
    }
}

pub fn load_model(path: &Path) -> CliResult<(ModelFile, CriticalModel)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read model {}: {e}", path.display())))?;
    let file = ModelFile::from_json(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let model = file.to_model().map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    Ok((file, model))
}

/// Run one experiment. `default_out` applies when the spec names no output directory.
pub fn run(spec: &ExperimentSpec, default_out: &Path) -> CliResult<Outcome> {
    let start = Instant::now();
    let (model_file, model) = match (&spec.model_path, spec.kind.needs_model()) {
        (Some(p), _) => {
            let (f, m) = load_model(p)?;
            (Some(f), Some(m))
        }
        (None, true) => return Err(CliError::Schema(format!("kind `{}` needs a modelPath", spec.kind.name()))),
        (None, false) => (None, None),
    };
    let out = spec.output_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
    std::fs::create_dir_all(&out)?;
    let mut ctx = Ctx {
        spec,
        out,
        model,
        model_file,
        seed: spec.seed.unwrap_or(0),
        artifacts: Vec::new(),
        checks: Vec::new(),
    };
    match spec.kind {
        Kind::Calibrate => calibrate(&mut ctx)?,
        Kind::Cumulant => cumulant(&mut ctx)?,
        Kind::Survival => survival(&mut ctx)?,
        Kind::Yaglom => yaglom(&mut ctx)?,
        Kind::Simulate => simulate(&mut ctx)?,
        Kind::SpineCheck => spine_check(&mut ctx)?,
        Kind::RvFit => rv_fit(&mut ctx)?,
        Kind::DelayEq => delay_eq(&mut ctx)?,
        Kind::MixtureCheck => mixture(&mut ctx)?,
    }
    for c in &ctx.checks {
        log::info!("{}: {} (limit {}) {}", c.name, c.value, c.limit, if c.passed { "ok" } else { "VIOLATED" });
    }
    let manifest = Manifest {
        kind: spec.kind.name().into(),
        tool: TOOL.into(),
        tool_version: VERSION.into(),
        model_hash: ctx.model_file.as_ref().map(ModelFile::hash),
        seed: spec.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        passed: ctx.checks.iter().all(|c| c.passed),
        checks: ctx.checks,
        artifacts: ctx.artifacts,
        spec: serde_json::to_value(spec).map_err(|e| CliError::Runtime(e.to_string()))?,
    };
    let manifest_path = ctx.out.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(Outcome { manifest, manifest_path })
}

fn calibrate(ctx: &mut Ctx) -> CliResult<()> {
    let p: CalibrateParams = ctx.spec.params()?;
    let before = ctx.model_file.clone().expect("model loaded");
    let (motion, mech) = before.parts()?;
    let model = calibrate_critical(&motion, &mech)?;
    let shift = mech
        .beta()
        .iter()
        .zip(model.mechanism().beta())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let path = ctx.path("calibrated-model.json");
    write_json(&path, &ModelFile::from_model(&model))?;
    if let Some(tol) = p.lambda_tol {
        ctx.checks.push(Check::at_most("abs_lambda", model.eigen().lambda.abs(), tol));
    }
    if let Some(tol) = p.max_beta_shift {
        ctx.checks.push(Check::at_most("beta_shift", shift, tol));
    }
    Ok(())
}

fn cumulant(ctx: &mut Ctx) -> CliResult<()> {
    let p: CumulantParams = ctx.spec.params()?;
    let f = ctx.field(&p.f, "f")?;
    increasing(&p.times, "times")?;
    require(p.times[0] >= 0.0 && p.theta >= 0.0, "`times` and `theta` must be >= 0")?;
    let curve = solve_cumulant(ctx.model(), &f.scaled(p.theta), &p.times, &p.solver)?;
    let mut table = Table::new(&["t", "site", "value"])
        .meta("model_hash", ctx.hash())
        .meta("f", format!("{:?}", p.f))
        .meta("theta", p.theta);
    for (t, v) in curve.times.iter().zip(&curve.values) {
        for (x, val) in v.values().iter().enumerate() {
            table.row(&[num(*t), x.to_string(), num(*val)]);
        }
    }
    let path = ctx.path("cumulant.csv");
    table.write(&path)
}

fn survival(ctx: &mut Ctx) -> CliResult<()> {
    let p: SurvivalParams = ctx.spec.params()?;
    let mu = InitialMeasure::new(ctx.field(&p.mu, "mu")?.0)?;
    increasing(&p.times, "times")?;
    let table = kolmogorov_table(ctx.model(), &mu, &p.times, &p.solver)?;
    let mut csv = Table::new(&["t", "survival", "eta", "ratio", "target", "rel_error"])
        .meta("model_hash", ctx.hash())
        .meta("mu", format!("{:?}", p.mu));
    for r in &table.rows {
        csv.row(&cells([r.t, r.survival, r.eta, r.ratio, r.target, r.relative_error()]));
    }
    let path = ctx.path("kolmogorov.csv");
    csv.write(&path)?;
    if let (Some(tol), Some(last)) = (p.max_final_rel_error, table.rows.last()) {
        ctx.checks.push(Check::at_most("final_rel_error", last.relative_error(), tol));
    }
    if p.require_monotone {
        ctx.checks.push(Check::holds("monotone_approach", table.monotone));
    }
    Ok(())
}

fn yaglom(ctx: &mut Ctx) -> CliResult<()> {
    let p: YaglomParams = ctx.spec.params()?;
    let mut f = ctx.field(&p.f, "f")?;
    if p.normalize {
        f = normalize_field(ctx.model(), &f)?;
    }
    increasing(&p.horizons, "horizons")?;
    require(p.thetas.iter().all(|t| *t >= 0.0 && t.is_finite()), "`thetas` must be finite and >= 0")?;
    let mut csv = Table::new(&["T", "theta", "G", "sup_error"])
        .meta("model_hash", ctx.hash())
        .meta("f", format!("{:?}", f.values()));
    let mut sups = Vec::new();
    for &horizon in &p.horizons {
        positive(horizon, "horizons")?;
        let rows = yaglom_table(ctx.model(), &f, &p.thetas, horizon, &p.solver)?;
        for r in &rows {
            csv.row(&cells([horizon, r.theta, r.limit, r.sup_error]));
        }
        sups.push(yaglom_sup_error(&rows));
    }
    let path = ctx.path("yaglom.csv");
    csv.write(&path)?;
    if let Some(tol) = p.max_sup_error {
        for (h, s) in p.horizons.iter().zip(&sups) {
            ctx.checks.push(Check::at_most(format!("sup_error_T{h}"), *s, tol));
        }
    }
    if let Some(tol) = p.max_final_sup_error {
        ctx.checks.push(Check::at_most("final_sup_error", *sups.last().expect("horizons"), tol));
    }
    if p.require_decreasing {
        ctx.checks.push(Check::holds("sup_error_decreasing", sups.windows(2).all(|w| w[1] < w[0])));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateReport {
    survivors: usize,
    survival_rate: f64,
    se: f64,
    functionals_csv_path: PathBuf,
    laplace: f64,
    laplace_se: f64,
    steps: Vec<f64>,
    survival_bias_budget: f64,
    laplace_bias_budget: f64,
    survival_oracle: Option<f64>,
    laplace_oracle: Option<f64>,
}

fn simulate(ctx: &mut Ctx) -> CliResult<()> {
    let p: SimulateParams = ctx.spec.params()?;
    let mu = InitialMeasure::new(ctx.field(&p.mu, "mu")?.0)?;
    let f = ctx.field(&p.f, "f")?;
    positive(p.step, "step")?;
    positive(p.horizon, "horizon")?;
    require(p.paths >= 1, "`paths` must be >= 1")?;
    require(p.levels >= 1, "`levels` must be >= 1")?;
    let mut config = SimConfig::new(p.step, p.horizon, p.paths, ctx.seed);
    if let Some(floor) = p.mass_floor {
        config.mass_floor = floor;
    }
    let model = ctx.model().clone();
    let (stats, steps, laplace_budget, survival_budget, shrinks) = if p.levels == 1 {
        (simulate_paths(&model, &mu, &f, &config)?, vec![p.step], 0.0, 0.0, true)
    } else {
        let run = simulate_coupled(&model, &mu, &f, &config, p.levels)?;
        let budgets = (run.laplace_bias_budget(), run.survival_bias_budget());
        let shrinks = run.laplace_bias_shrinks() && run.survival_bias_shrinks();
        (run.levels[0].clone(), run.steps, budgets.0, budgets.1, shrinks)
    };
    let csv_path = ctx.path("functionals.csv");
    let mut csv = Table::new(&["survivor", "functional"])
        .meta("model_hash", ctx.hash())
        .meta("seed", ctx.seed)
        .meta("step", p.step)
        .meta("horizon", p.horizon)
        .meta("f", format!("{:?}", p.f));
    for (i, v) in stats.per_path_functional.iter().enumerate() {
        csv.row(&[i.to_string(), num(*v)]);
    }
    csv.write(&csv_path)?;

    let mut report = SimulateReport {
        survivors: stats.survivors,
        survival_rate: stats.survival.mean,
        se: stats.survival.se,
        functionals_csv_path: csv_path,
        laplace: stats.laplace.mean,
        laplace_se: stats.laplace.se,
        steps,
        survival_bias_budget: survival_budget,
        laplace_bias_budget: laplace_budget,
        survival_oracle: None,
        laplace_oracle: None,
    };
    if let Some(z) = p.z_max {
        let v = solve_cumulant(&model, &f, &[p.horizon], &p.solver)?;
        let laplace = (-mu.integrate(v.at(0))).exp();
        let surv = survival_probability(&model, &mu, p.horizon, &p.solver)?;
        report.laplace_oracle = Some(laplace);
        report.survival_oracle = Some(surv);
        ctx.checks.push(Check::at_most(
            "laplace_error",
            (stats.laplace.mean - laplace).abs(),
            z * stats.laplace.se + laplace_budget,
        ));
        ctx.checks.push(Check::at_most(
            "survival_error",
            (stats.survival.mean - surv).abs(),
            z * stats.survival.se + survival_budget,
        ));
    }
    if p.require_bias_shrink {
        ctx.checks.push(Check::holds("bias_shrinks", shrinks && p.levels >= 3));
    }
    let path = ctx.path("simulate.json");
    write_json(&path, &report)
}

#[derive(Serialize)]
struct SpineRow {
    site: usize,
    fk_estimate: f64,
    fk_se: f64,
    ode_value: f64,
    z_score: f64,
}

fn spine_check(ctx: &mut Ctx) -> CliResult<()> {
    let p: SpineCheckParams = ctx.spec.params()?;
    let f = ctx.field(&p.f, "f")?;
    positive(p.horizon, "horizon")?;
    require(p.theta >= 0.0 && p.theta.is_finite(), "`theta` must be finite and >= 0")?;
    let mut config = FeynmanKacConfig::new(p.theta, p.horizon, p.paths, ctx.seed);
    config.theta_nodes = p.theta_nodes;
    let fk = superlab_core::feynman_kac_estimate(ctx.model(), &f, &config, &p.solver)?;
    let ode = solve_cumulant(ctx.model(), &f.scaled(p.theta), &[p.horizon], &p.solver)?;
    let rows: Vec<SpineRow> = (0..f.len())
        .map(|x| {
            let (est, se, v) = (fk.estimate.0[x], fk.stderr.0[x], ode.at(0)[x]);
            SpineRow {
                site: x,
                fk_estimate: est,
                fk_se: se,
                ode_value: v,
                z_score: if se > 0.0 { (est - v) / se } else { 0.0 },
            }
        })
        .collect();
    if let Some(z) = p.z_max {
        for r in &rows {
            ctx.checks.push(Check::at_most(
                format!("site{}_error", r.site),
                (r.fk_estimate - r.ode_value).abs(),
                z * r.fk_se,
            ));
        }
    }
    let path = ctx.path("spine-check.json");
    write_json(&path, &rows)
}

fn rv_fit(ctx: &mut Ctx) -> CliResult<()> {
    let p: RvFitParams = ctx.spec.params()?;
    positive(p.t_min, "tMin")?;
    require(p.t_max > p.t_min && p.points >= 3, "need tMax > tMin and points >= 3")?;
    let times: Vec<f64> = (0..p.points)
        .map(|i| p.t_min * (p.t_max / p.t_min).powf(i as f64 / (p.points - 1) as f64))
        .collect();
    let values = superlab_core::cumulant::weighted_extinction_norms(ctx.model(), &times, &p.solver)?;
    let fit = match p.window {
        Some(w) => rv_index_fit_window(&times, &values, w)?,
        None => rv_index_fit(&times, &values)?,
    };
    let target = p.target_slope.unwrap_or(-1.0 / (ctx.model().gamma0() - 1.0));
    let mut csv = Table::new(&["t", "weighted_extinction_norm"]).meta("model_hash", ctx.hash());
    for (t, v) in times.iter().zip(&values) {
        csv.row(&cells([*t, *v]));
    }
    let csv_path = ctx.path("rv-fit.csv");
    csv.write(&csv_path)?;
    let json_path = ctx.path("rv-fit.json");
    write_json(&json_path, &serde_json::json!({ "fit": fit, "targetSlope": target }))?;
    if let Some(tol) = p.max_rel_error {
        ctx.checks.push(Check::at_most("slope_rel_error", (fit.slope / target - 1.0).abs(), tol));
    }
    Ok(())
}

fn delay_eq(ctx: &mut Ctx) -> CliResult<()> {
    let p: DelayEqParams = ctx.spec.params()?;
    require(p.a > 1.0 && p.a < 2.0, "`a` must lie in (1, 2)")?;
    positive(p.theta_max, "thetaMax")?;
    positive(p.step, "step")?;
    positive(p.tol, "tol")?;
    let prob = DelayEquationProblem::uniform(p.a, p.theta_max, p.step, p.tol)?;
    let sol = solve_delay_equation(&prob)?;
    let mut csv = Table::new(&["theta", "G_solved", "G_closed", "abs_error"])
        .meta("a", p.a)
        .meta("iterations", sol.iterations);
    let mut sup = 0.0f64;
    for (t, g) in sol.theta.iter().zip(&sol.g) {
        let exact = g_closed(p.a, *t);
        sup = sup.max((g - exact).abs());
        csv.row(&cells([*t, *g, exact, (g - exact).abs()]));
    }
    let path = ctx.path("delay-eq.csv");
    csv.write(&path)?;
    if let Some(tol) = p.max_sup_error {
        ctx.checks.push(Check::at_most("sup_error", sup, tol));
    }
    Ok(())
}

fn mixture(ctx: &mut Ctx) -> CliResult<()> {
    let p: MixtureParams = ctx.spec.params()?;
    let rho = InitialMeasure::new(p.rho.clone())?;
    let rows = mixture_rv_check(&Field(p.alpha.clone()), &rho, &p.times)?;
    let mut csv = Table::new(&["t", "ratio"])
        .meta("alpha", format!("{:?}", p.alpha))
        .meta("rho", format!("{:?}", p.rho));
    for r in &rows {
        csv.row(&cells([r.t, r.ratio]));
    }
    let path = ctx.path("mixture.csv");
    csv.write(&path)?;
    if let (Some(expected), Some(tol)) = (&p.expected, p.max_abs_error) {
        require(expected.len() == rows.len(), "`expected` needs one entry per time")?;
        let err = rows.iter().zip(expected).map(|(r, e)| (r.ratio - e).abs()).fold(0.0, f64::max);
        ctx.checks.push(Check::at_most("max_abs_error", err, tol));
    }
    if p.require_monotone {
        // ratio decreases as t decreases
        let mut by_t: Vec<_> = rows.iter().collect();
        by_t.sort_by(|a, b| a.t.total_cmp(&b.t));
        ctx.checks.push(Check::holds("monotone_in_t", by_t.windows(2).all(|w| w[0].ratio < w[1].ratio)));
    }
    Ok(())
}
