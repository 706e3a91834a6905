//! Run configuration: TOML with one table per experiment.
//!
//! Start points are given in the coordinates of the configured cone and law and
//! are mapped into model coordinates before use. Boxes, bin grids and κ₀ start
//! points are read in model coordinates, where the law is standard.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("unsupported schema version {found} (this build reads {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    pub seed: u64,
    #[serde(default)]
    pub name: String,
    pub model: ModelSection,
    #[serde(default)]
    pub constants: ConstantsSection,
    pub tail: Option<TailSection>,
    pub harmonic: Option<HarmonicSection>,
    pub weak_limit: Option<WeakLimitSection>,
    pub llt: Option<LltSection>,
    #[serde(rename = "return")]
    pub return_prob: Option<ReturnSection>,
    pub duality: Option<DualitySection>,
    pub bounds: Option<BoundsSection>,
    pub aperiodicity: Option<AperiodicitySection>,
    pub cmu_probe: Option<CmuProbeSection>,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub cone: String,
    pub steps: String,
    #[serde(default = "yes")]
    pub whiten: bool,
    /// Lattice vectors of an atom law; integer atoms default to `ℤ^d`.
    pub lattice_basis: Option<Vec<Vec<f64>>>,
    /// Multiplies `m₁`; predictions must not depend on it.
    #[serde(default = "one")]
    pub spectral_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    /// Brownian paths per start point when κ₀ has no closed form.
    pub kappa0_paths: u64,
    pub starts: Option<Vec<Vec<f64>>>,
    pub t_first: f64,
    pub time_points: usize,
    pub dt_fraction: f64,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        ConstantsSection { kappa0_paths: 200_000, starts: None, t_first: 10.0, time_points: 5, dt_fraction: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VSection {
    pub horizons: Vec<u64>,
    pub paths: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    pub x: Vec<f64>,
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub v: VSection,
    #[serde(default = "TailSection::slope_tol")]
    pub slope_tol: f64,
    #[serde(default = "TailSection::ratio_tol")]
    pub ratio_tol: f64,
    pub envelope: Option<f64>,
    #[serde(default = "TailSection::min_survivors")]
    pub min_survivors: u64,
}

impl TailSection {
    fn slope_tol() -> f64 {
        0.1
    }
    fn ratio_tol() -> f64 {
        0.15
    }
    fn min_survivors() -> u64 {
        200
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub points: Vec<Vec<f64>>,
    pub v: VSection,
    /// Nested harmonicity test: horizon of the inner estimates.
    pub horizon: u64,
    pub outer: u64,
    pub inner: u64,
    pub direct_paths: u64,
    #[serde(default = "HarmonicSection::cache_resolution")]
    pub cache_resolution: Option<f64>,
    /// Deep point where `V/u` should be close to one.
    pub far_point: Option<Vec<f64>>,
    #[serde(default = "HarmonicSection::far_tolerance")]
    pub far_tolerance: f64,
    /// Pinned `C_V` in `V(x) ≤ C_V(1+|x|^p)`.
    pub envelope: Option<f64>,
}

impl HarmonicSection {
    fn cache_resolution() -> Option<f64> {
        Some(0.01)
    }
    fn far_tolerance() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakLimitSection {
    pub x: Vec<f64>,
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub extent: f64,
    pub width: f64,
    #[serde(default = "WeakLimitSection::min_hits")]
    pub min_hits: u64,
    #[serde(default = "WeakLimitSection::tolerance")]
    pub tolerance: f64,
    #[serde(default = "WeakLimitSection::min_survivors")]
    pub min_survivors: u64,
}

impl WeakLimitSection {
    fn min_hits() -> u64 {
        500
    }
    fn tolerance() -> f64 {
        0.2
    }
    fn min_survivors() -> u64 {
        10_000
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    /// Lower corner is `center·√n`.
    pub center: Vec<f64>,
    pub side: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LltSection {
    pub x_grid: Vec<Vec<f64>>,
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub v: VSection,
    #[serde(default = "LltSection::tolerance")]
    pub tolerance: f64,
    #[serde(default = "LltSection::min_hits")]
    pub min_hits: u64,
    #[serde(default = "yes")]
    pub conditioning: bool,
    pub boxes: Vec<BoxSection>,
}

impl LltSection {
    fn tolerance() -> f64 {
        0.2
    }
    fn min_hits() -> u64 {
        300
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnSection {
    pub x: Vec<f64>,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub horizons: Vec<u64>,
    pub paths: u64,
    pub v: VSection,
    #[serde(default = "ReturnSection::grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default = "ReturnSection::tolerance")]
    pub tolerance: f64,
    #[serde(default = "ReturnSection::min_hits")]
    pub min_hits: u64,
    pub envelope: Option<f64>,
    #[serde(default = "yes")]
    pub conditioning: bool,
}

impl ReturnSection {
    fn grid_per_axis() -> usize {
        4
    }
    fn tolerance() -> f64 {
        0.25
    }
    fn min_hits() -> u64 {
        100
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySection {
    pub delta: f64,
    pub delta_tilde: f64,
    pub horizon: u64,
    pub paths: u64,
    /// Every `(x, y)` with `x` from `xs` and `y` from `ys`, before `pairs`.
    #[serde(default)]
    pub xs: Vec<Vec<f64>>,
    #[serde(default)]
    pub ys: Vec<Vec<f64>>,
    /// Horizon of the exact enumeration for atom laws; skipped when absent.
    pub exact_horizon: Option<u64>,
    #[serde(default)]
    pub pairs: Vec<PairSection>,
}

impl DualitySection {
    pub fn tuples(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        for x in &self.xs {
            for y in &self.ys {
                out.push((x.clone(), y.clone()));
            }
        }
        out.extend(self.pairs.iter().map(|p| (p.x.clone(), p.y.clone())));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub x: Vec<f64>,
    pub delta: f64,
    pub horizons: Vec<u64>,
    pub paths: u64,
    #[serde(default = "BoundsSection::t_values")]
    pub t_values: Vec<f64>,
    #[serde(default = "BoundsSection::grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default = "BoundsSection::slope_tol")]
    pub slope_tol: f64,
}

impl BoundsSection {
    fn t_values() -> Vec<f64> {
        vec![0.5, 1.0, 1.5, 2.0]
    }
    fn grid_per_axis() -> usize {
        5
    }
    fn slope_tol() -> f64 {
        0.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AperiodicitySection {
    pub resolution: usize,
    /// Half-width of the search box in each dual-basis coordinate.
    #[serde(default = "AperiodicitySection::window")]
    pub window: f64,
}

impl AperiodicitySection {
    fn window() -> f64 {
        std::f64::consts::PI
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmuProbeSection {
    pub gamma: f64,
    pub radius: f64,
    pub n_max: usize,
    #[serde(default = "CmuProbeSection::node_budget")]
    pub node_budget: usize,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    pub grid: Option<GridSection>,
}

impl CmuProbeSection {
    fn node_budget() -> usize {
        1_000_000
    }

    /// Explicit points followed by the grid points, last axis fastest.
    pub fn all_points(&self) -> Vec<Vec<f64>> {
        let mut out = self.points.clone();
        if let Some(g) = &self.grid {
            let counts: Vec<usize> = g
                .lower
                .iter()
                .zip(&g.upper)
                .map(|(lo, hi)| if hi < lo { 0 } else { ((hi - lo) / g.step + 1e-9).floor() as usize + 1 })
                .collect();
            let total: usize = counts.iter().product();
            for mut k in 0..total {
                let mut p = vec![0.0; counts.len()];
                for i in (0..counts.len()).rev() {
                    p[i] = g.lower[i] + (k % counts[i]) as f64 * g.step;
                    k /= counts[i];
                }
                out.push(p);
            }
        }
        out
    }
}

/// Command-line replacements applied after parsing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// Replaces the main path count of every simulation section.
    pub paths: Option<u64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Config::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are representable in TOML")
    }

    /// SHA-256 of the canonical serialization, so formatting and comments do not matter.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.paths {
            let slots = [
                self.tail.as_mut().map(|s| &mut s.paths),
                self.weak_limit.as_mut().map(|s| &mut s.paths),
                self.llt.as_mut().map(|s| &mut s.paths),
                self.return_prob.as_mut().map(|s| &mut s.paths),
                self.duality.as_mut().map(|s| &mut s.paths),
                self.bounds.as_mut().map(|s| &mut s.paths),
            ];
            for p in slots.into_iter().flatten() {
                *p = n;
            }
            if let Some(h) = self.harmonic.as_mut() {
                h.direct_paths = n;
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema { found: self.schema });
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(field("seed", "must fit in a signed 64-bit integer"));
        }
        if !(self.model.spectral_scale > 0.0 && self.model.spectral_scale.is_finite()) {
            return Err(field("model.spectral_scale", "must be positive"));
        }
        let paths = [
            ("tail.paths", self.tail.as_ref().map(|s| s.paths)),
            ("weak_limit.paths", self.weak_limit.as_ref().map(|s| s.paths)),
            ("llt.paths", self.llt.as_ref().map(|s| s.paths)),
            ("return.paths", self.return_prob.as_ref().map(|s| s.paths)),
            ("duality.paths", self.duality.as_ref().map(|s| s.paths)),
            ("bounds.paths", self.bounds.as_ref().map(|s| s.paths)),
        ];
        for (name, p) in paths {
            if p == Some(0) {
                return Err(field(name, "must be positive"));
            }
        }
        if let Some(r) = &self.return_prob {
            if r.box_lower.len() != r.box_upper.len() {
                return Err(field("return.box_upper", "length differs from return.box_lower"));
            }
        }
        if let Some(g) = self.cmu_probe.as_ref().and_then(|c| c.grid.as_ref()) {
            if !(g.step > 0.0) || g.lower.len() != g.upper.len() {
                return Err(field("cmu_probe.grid", "needs a positive step and matching corners"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
schema = 1
seed = 7
name = "sample"

[model]
cone = "orthant(2)"
steps = "gaussian(2)"

[tail]
x = [3.0, 3.0]
horizons = [16, 32, 64, 128]
paths = 1000
v = { horizons = [16, 32], paths = 100 }

[llt]
x_grid = [[2.0, 2.0]]
horizons = [64]
paths = 1000
v = { horizons = [16], paths = 100 }
boxes = [{ center = [1.0, 1.0], side = 1.0 }]

[cmu_probe]
gamma = 0.1
radius = 0.5
n_max = 8
grid = { lower = [0.25, 0.25], upper = [1.0, 0.5], step = 0.25 }
"#;

    #[test]
    fn round_trip() {
        let c = Config::parse(SAMPLE).unwrap();
        let again = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert!(c.model.whiten);
        assert_eq!(c.tail.as_ref().unwrap().slope_tol, 0.1);
    }

    #[test]
    fn unknown_fields_name_the_line() {
        let bad = SAMPLE.replace("n_max = 8", "n_max = 8\nmax_n = 3");
        let e = Config::parse(&bad).unwrap_err().to_string();
        assert!(e.contains("max_n"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn schema_and_overrides() {
        let bad = SAMPLE.replace("schema = 1", "schema = 9");
        assert!(matches!(Config::parse(&bad), Err(ConfigError::Schema { found: 9 })));
        let mut c = Config::parse(SAMPLE).unwrap();
        let h = c.hash();
        c.apply(&Overrides { seed: Some(3), paths: Some(50) }).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.llt.as_ref().unwrap().paths, 50);
        assert_ne!(c.hash(), h);
        assert!(c.apply(&Overrides { seed: None, paths: Some(0) }).is_err());
    }

    #[test]
    fn grid_points_run_last_axis_fastest() {
        let c = Config::parse(SAMPLE).unwrap();
        let pts = c.cmu_probe.unwrap().all_points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], vec![0.25, 0.25]);
        assert_eq!(pts[1], vec![0.25, 0.5]);
        assert_eq!(pts[7], vec![1.0, 0.5]);
    }
}
