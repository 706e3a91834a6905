//! Builds the model from a configuration, runs the selected experiments and
//! writes their output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use conewalk_core::constants::{compute_constants, ConstantSet, Kappa0Plan};
use conewalk_core::context::Model;
use conewalk_core::geometry::{AxisBox, Cone};
use conewalk_core::harmonic::VPlan;
use conewalk_core::rng::{combine, domain_id};
use conewalk_core::steps::{LatticeStructure, StepDistribution};
use conewalk_core::theorems::{
    check_gaussian_bounds, duality_exact, verify_duality, verify_return_prob, verify_stone_llt, verify_tail,
    verify_weak_limit, BinSpec, BoundsOptions, Check, DualityOptions, DualityTuple, LltBox, LltOptions, ReturnOptions,
    TailOptions, Verdict, VerifierReport, WeakLimitOptions,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, ConfigError};
use crate::grammar::{parse_cone, parse_steps};
use crate::suites;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    Tail,
    Harmonic,
    WeakLimit,
    Llt,
    Return,
    Duality,
    Bounds,
    Aperiodicity,
    CmuProbe,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Constants,
        Experiment::Tail,
        Experiment::Harmonic,
        Experiment::WeakLimit,
        Experiment::Llt,
        Experiment::Return,
        Experiment::Duality,
        Experiment::Bounds,
        Experiment::Aperiodicity,
        Experiment::CmuProbe,
    ];

    /// Directory name under the output root; also the seed domain.
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Constants => "constants",
            Experiment::Tail => "tail",
            Experiment::Harmonic => "harmonic",
            Experiment::WeakLimit => "weak_limit",
            Experiment::Llt => "llt",
            Experiment::Return => "return",
            Experiment::Duality => "duality",
            Experiment::Bounds => "bounds",
            Experiment::Aperiodicity => "aperiodicity",
            Experiment::CmuProbe => "cmu_probe",
        }
    }

    fn configured(self, cfg: &Config) -> bool {
        match self {
            Experiment::Constants => true,
            Experiment::Tail => cfg.tail.is_some(),
            Experiment::Harmonic => cfg.harmonic.is_some(),
            Experiment::WeakLimit => cfg.weak_limit.is_some(),
            Experiment::Llt => cfg.llt.is_some(),
            Experiment::Return => cfg.return_prob.is_some(),
            Experiment::Duality => cfg.duality.is_some(),
            Experiment::Bounds => cfg.bounds.is_some(),
            Experiment::Aperiodicity => cfg.aperiodicity.is_some(),
            Experiment::CmuProbe => cfg.cmu_probe.is_some(),
        }
    }

    /// Every experiment with a section in `cfg`, in canonical order.
    pub fn configured_in(cfg: &Config) -> Vec<Experiment> {
        Experiment::ALL.into_iter().filter(|e| e.configured(cfg)).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(conewalk_core::Error),
    #[error("section [{0}] is missing from the configuration")]
    MissingSection(&'static str),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// The configured cone and law, before and after normalization.
pub struct Setup {
    pub user_cone: Cone,
    pub user_steps: StepDistribution,
    pub model: Model,
}

fn config_field(name: &str, message: impl ToString) -> RunError {
    RunError::Config(ConfigError::Field { field: name.to_string(), message: message.to_string() })
}

pub fn build_setup(cfg: &Config) -> Result<Setup, RunError> {
    let cone_spec = parse_cone(&cfg.model.cone).map_err(|e| config_field("model.cone", e))?;
    let kind = parse_steps(&cfg.model.steps).map_err(|e| config_field("model.steps", e))?;
    let mut steps = StepDistribution::new(kind).map_err(|e| config_field("model.steps", e))?;
    if let Some(basis) = &cfg.model.lattice_basis {
        let lattice = LatticeStructure::from_lattice_basis(basis.clone(), steps.dim())
            .map_err(|e| config_field("model.lattice_basis", e))?;
        steps = steps.with_lattice(lattice).map_err(|e| config_field("model.lattice_basis", e))?;
    } else if steps.atom_list().is_some_and(|a| a.iter().all(|a| a.point.iter().all(|v| v.fract() == 0.0))) {
        let d = steps.dim();
        steps = steps.with_lattice(LatticeStructure::integer(d)).map_err(RunError::Model)?;
    }
    let user_cone = Cone::new(cone_spec.clone()).map_err(|e| config_field("model.cone", e))?;
    let mut model = Model::new(cone_spec, steps.clone(), cfg.model.whiten).map_err(RunError::Model)?;
    if cfg.model.spectral_scale != 1.0 {
        model = model.with_spectral_scale(cfg.model.spectral_scale);
    }
    Ok(Setup { user_cone, user_steps: steps, model })
}

/// One finished experiment.
pub struct Outcome {
    pub experiment: Experiment,
    pub report: VerifierReport,
    pub details: Value,
}

/// What a run produced; `results` keeps the configured order.
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub results: Vec<(Experiment, Result<Outcome, String>)>,
}

impl RunSummary {
    /// 0 all pass, 1 any fail, 2 inconclusive without failures, 3 any error.
    pub fn exit_code(&self) -> i32 {
        let mut worst = Verdict::Pass;
        for (_, r) in &self.results {
            match r {
                Err(_) => return 3,
                Ok(o) => worst = worst.and(o.report.verdict),
            }
        }
        match worst {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn outcome(&self, e: Experiment) -> Option<&Outcome> {
        self.results.iter().find(|(x, _)| *x == e).and_then(|(_, r)| r.as_ref().ok())
    }
}

struct Runner<'a> {
    cfg: &'a Config,
    setup: &'a Setup,
    constants: Option<ConstantSet>,
}

fn map_points(model: &Model, pts: &[Vec<f64>]) -> conewalk_core::Result<Vec<Vec<f64>>> {
    pts.iter().map(|p| model.map_point(p)).collect()
}

impl Runner<'_> {
    fn seed(&self, e: Experiment) -> u64 {
        combine(self.cfg.seed, domain_id(e.name()))
    }

    fn constants(&mut self) -> conewalk_core::Result<&ConstantSet> {
        if self.constants.is_none() {
            let c = &self.cfg.constants;
            let plan = Kappa0Plan {
                paths: c.kappa0_paths,
                starts: c.starts.clone(),
                t_first: c.t_first,
                time_points: c.time_points,
                dt_fraction: c.dt_fraction,
                seed: self.seed(Experiment::Constants),
            };
            let m = &self.setup.model;
            self.constants = Some(compute_constants(m.cone(), m.spectral()?, &plan)?);
        }
        Ok(self.constants.as_ref().unwrap())
    }

    fn run(&mut self, e: Experiment) -> Result<(VerifierReport, Value), String> {
        self.run_inner(e).map_err(|err| err.to_string())
    }

    fn run_inner(&mut self, e: Experiment) -> conewalk_core::Result<(VerifierReport, Value)> {
        let seed = self.seed(e);
        let cfg = self.cfg;
        let model = &self.setup.model;
        let missing = || conewalk_core::Error::InvalidArgument(format!("section [{}] is missing", e.name()));
        match e {
            Experiment::Constants => {
                let c = self.constants()?.clone();
                suites::constants_report(model, &c)
            }
            Experiment::Tail => {
                let s = cfg.tail.as_ref().ok_or_else(missing)?;
                let mut o = TailOptions::new(s.horizons.clone(), s.paths, VPlan::new(s.v.horizons.clone(), s.v.paths));
                o.slope_tol = s.slope_tol;
                o.ratio_tol = s.ratio_tol;
                o.envelope = s.envelope;
                o.min_survivors = s.min_survivors;
                let x = model.map_point(&s.x)?;
                let c = self.constants()?;
                Ok((verify_tail(model, c, &x, &o, seed)?, json!({ "x": x })))
            }
            Experiment::Harmonic => {
                let s = cfg.harmonic.as_ref().ok_or_else(missing)?;
                let pts = map_points(model, &s.points)?;
                let far = s.far_point.as_ref().map(|f| model.map_point(f)).transpose()?;
                suites::harmonic_report(model, &pts, far.as_deref(), s, seed)
            }
            Experiment::WeakLimit => {
                let s = cfg.weak_limit.as_ref().ok_or_else(missing)?;
                let bins = BinSpec { extent: s.extent, width: s.width };
                let mut o = WeakLimitOptions::new(s.horizons.clone(), s.paths, bins);
                o.min_hits = s.min_hits;
                o.tolerance = s.tolerance;
                o.min_survivors = s.min_survivors;
                let x = model.map_point(&s.x)?;
                let c = self.constants()?;
                Ok((verify_weak_limit(model, c, &x, &o, seed)?, json!({ "x": x })))
            }
            Experiment::Llt => {
                let s = cfg.llt.as_ref().ok_or_else(missing)?;
                let boxes = s.boxes.iter().map(|b| LltBox { center_factor: b.center.clone(), side: b.side }).collect();
                let xs = map_points(model, &s.x_grid)?;
                let mut o = LltOptions::new(s.horizons.clone(), s.paths, boxes, xs.clone(), VPlan::new(s.v.horizons.clone(), s.v.paths));
                o.tolerance = s.tolerance;
                o.min_hits = s.min_hits;
                o.conditioning = s.conditioning;
                let c = self.constants()?;
                Ok((verify_stone_llt(model, c, &o, seed)?, json!({ "x_grid": xs })))
            }
            Experiment::Return => {
                let s = cfg.return_prob.as_ref().ok_or_else(missing)?;
                let mut o = ReturnOptions::new(s.horizons.clone(), s.paths, VPlan::new(s.v.horizons.clone(), s.v.paths));
                o.grid_per_axis = s.grid_per_axis;
                o.tolerance = s.tolerance;
                o.min_hits = s.min_hits;
                o.envelope = s.envelope;
                o.conditioning = s.conditioning;
                let x = model.map_point(&s.x)?;
                let target = AxisBox::new(s.box_lower.clone(), s.box_upper.clone())?;
                let c = self.constants()?;
                Ok((verify_return_prob(model, c, &x, &target, &o, seed)?, json!({ "x": x })))
            }
            Experiment::Duality => {
                let s = cfg.duality.as_ref().ok_or_else(missing)?;
                let tuples = s
                    .tuples()
                    .iter()
                    .map(|(x, y)| Ok(DualityTuple::new(model.map_point(x)?, model.map_point(y)?)))
                    .collect::<conewalk_core::Result<Vec<_>>>()?;
                let o = DualityOptions {
                    tuples: tuples.clone(),
                    delta: s.delta,
                    delta_tilde: s.delta_tilde,
                    horizon: s.horizon,
                    paths: s.paths,
                };
                let mut report = verify_duality(model, &o, seed)?;
                let mut exact = Vec::new();
                if let Some(n) = s.exact_horizon {
                    for (ti, t) in tuples.iter().enumerate() {
                        let r = duality_exact(model, t, s.delta, s.delta_tilde, n)?;
                        let verdict = if r.holds() { Verdict::Pass } else { Verdict::Fail };
                        let gap = [r.key1, r.key2].iter().flatten().map(|(l, rr)| l - rr).fold(f64::NEG_INFINITY, f64::max);
                        let mut c = Check::new(format!("exact[{ti}]"), gap, 0.0, "left ≤ right", verdict);
                        for sk in &r.skipped {
                            c = c.with_detail(sk.clone());
                        }
                        report.push_check(c);
                        exact.push(r);
                    }
                }
                Ok((report, json!({ "tuples": tuples, "exact": exact })))
            }
            Experiment::Bounds => {
                let s = cfg.bounds.as_ref().ok_or_else(missing)?;
                let mut o = BoundsOptions::new(model.map_point(&s.x)?, s.delta, s.horizons.clone(), s.paths);
                o.t_values = s.t_values.clone();
                o.grid_per_axis = s.grid_per_axis;
                o.slope_tol = s.slope_tol;
                Ok((check_gaussian_bounds(model, &o, seed)?, json!({ "x": o.x })))
            }
            Experiment::Aperiodicity => {
                let s = cfg.aperiodicity.as_ref().ok_or_else(missing)?;
                suites::aperiodicity_report(&self.setup.user_steps, s)
            }
            Experiment::CmuProbe => {
                let s = cfg.cmu_probe.as_ref().ok_or_else(missing)?;
                suites::cmu_report(&self.setup.user_steps, &self.setup.user_cone, s)
            }
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io { path: path.display().to_string(), source })
}

pub fn report_json(o: &Outcome) -> String {
    let mut v = serde_json::to_value(&o.report).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("schema_version".into(), json!(REPORT_SCHEMA_VERSION));
        m.insert("details".into(), o.details.clone());
    }
    let mut s = serde_json::to_string_pretty(&v).unwrap_or_default();
    s.push('\n');
    s
}

fn emit(out: &Path, o: &Outcome) -> Result<(), RunError> {
    let dir = out.join(o.experiment.name());
    fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.display().to_string(), source })?;
    write(&dir.join("report.json"), &report_json(o))?;
    write(&dir.join("rows.csv"), &o.report.rows.to_csv())?;
    write(&dir.join("plot.csv"), &o.report.plot.to_csv())
}

fn manifest(cfg: &Config, setup: &Setup, summary: &RunSummary) -> Value {
    let model = &setup.model;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut verdicts = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for (e, r) in &summary.results {
        match r {
            Ok(o) => {
                verdicts.insert(e.name(), o.report.verdict.as_str());
            }
            Err(msg) => {
                verdicts.insert(e.name(), "error");
                errors.insert(e.name(), msg.clone());
            }
        }
    }
    let moments = setup.user_steps.moments();
    let transform: Vec<Vec<f64>> =
        (0..model.dim()).map(|i| (0..model.dim()).map(|j| model.transform()[(i, j)]).collect()).collect();
    json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "master_seed": cfg.seed,
        "name": cfg.name,
        "timestamp": timestamp,
        "cone": {
            "spec": setup.user_cone.spec().to_string(),
            "dim": model.dim(),
            "model_shape": model.cone().canonical(),
            "interior_direction": model.cone().interior_direction(),
        },
        "dist": {
            "spec": setup.user_steps.kind().to_string(),
            "mean": moments.mean,
            "covariance": (0..model.dim())
                .map(|i| (0..model.dim()).map(|j| moments.covariance[(i, j)]).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
            "whiten": cfg.model.whiten,
            "transform": transform,
            "lattice": setup.user_steps.lattice(),
        },
        "spectral": model.spectral().ok().map(|s| s.summary()),
        "verdicts": verdicts,
        "errors": errors,
        "exit_code": summary.exit_code(),
    })
}

/// Runs `selection` and writes `manifest.json` plus one directory per experiment.
pub fn execute(cfg: &Config, selection: &[Experiment], out: &Path, workers: Option<usize>) -> Result<RunSummary, RunError> {
    for &e in selection {
        if !e.configured(cfg) {
            return Err(RunError::MissingSection(e.name()));
        }
    }
    let setup = build_setup(cfg)?;
    fs::create_dir_all(out).map_err(|source| RunError::Io { path: out.display().to_string(), source })?;
    let body = |setup: &Setup| {
        let mut runner = Runner { cfg, setup, constants: None };
        selection.iter().map(|&e| (e, runner.run(e))).collect::<Vec<_>>()
    };
    let raw = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?
            .install(|| body(&setup)),
        None => body(&setup),
    };
    let mut summary = RunSummary { out_dir: out.to_path_buf(), results: Vec::new() };
    for (e, r) in raw {
        let r = r.map(|(report, details)| Outcome { experiment: e, report, details });
        if let Ok(o) = &r {
            emit(out, o)?;
        }
        summary.results.push((e, r));
    }
    let mut text = serde_json::to_string_pretty(&manifest(cfg, &setup, &summary)).unwrap_or_default();
    text.push('\n');
    write(&out.join("manifest.json"), &text)?;
    Ok(summary)
}
