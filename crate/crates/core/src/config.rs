//! Flat `key = value` experiment configuration with dotted keys.
//!
//! Files may contain blank lines and `#` comments. Overrides use the same
//! keys (`noise.alpha=0.2`) and take precedence over the file.
//!
//! Real values accept products and quotients of numbers and `pi`
//! (`3*pi/2`). Lists are comma separated; integer lists also accept an
//! inclusive range `1..10`. Parameter ranges are written `lo, hi`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::DEFAULT_MC_SAMPLES;
use crate::error::{Error, Result};
use crate::manifold::{MultiscaleSpec, PowerLawSpec, Range, SinusoidSpec};
use crate::multiscale::{SmootherOptions, DEFAULT_DICT_STRIDE};
use crate::solver::DEFAULT_BOX_MARGIN;
use crate::space::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Example1,
    Example2,
    Example3Analog,
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "example1" => Ok(Self::Example1),
            "example2" => Ok(Self::Example2),
            "example3_analog" => Ok(Self::Example3Analog),
            _ => Err(format!("unknown experiment `{s}` (expected example1, example2 or example3_analog)")),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Example1 => "example1",
            Self::Example2 => "example2",
            Self::Example3Analog => "example3_analog",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorChoice {
    Box,
    Pointwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    None,
    Linear,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpbdwConfig {
    pub smoother: SmootherOptions,
    pub dict_stride: usize,
    /// Use bPBDW for the smoothed solve when a noise model is active.
    pub bias_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: Grid,
    pub sinusoid: SinusoidSpec,
    pub multiscale: MultiscaleSpec,
    pub powerlaw: PowerLawSpec,
    pub sensor_kind: SensorChoice,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub noise_kind: NoiseChoice,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mc_samples: usize,
    /// CSV `lower,upper,offset` for the empirical noise model.
    pub noise_table: Option<PathBuf>,
    pub snapshots: usize,
    pub validation: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub spbdw: SpbdwConfig,
    pub box_margin: f64,
    pub truth_peak_velocity: f64,
    pub truth_flow_index: f64,
}

/// One `key = value` assignment and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub location: String,
}

pub struct KeyInfo {
    pub key: &'static str,
    pub kind: &'static str,
    pub description: &'static str,
}

pub const SCHEMA: &[KeyInfo] = &[
    KeyInfo { key: "experiment", kind: "example1 | example2 | example3_analog", description: "benchmark to run (required)" },
    KeyInfo { key: "grid.a", kind: "real", description: "left end of the domain" },
    KeyInfo { key: "grid.b", kind: "real", description: "right end of the domain" },
    KeyInfo { key: "grid.num_points", kind: "integer >= 2", description: "number of grid nodes" },
    KeyInfo { key: "manifold.amplitude", kind: "range", description: "sinusoid amplitude A, or per-frequency amplitude A_i (example2)" },
    KeyInfo { key: "manifold.period", kind: "range", description: "period T, or per-frequency period T_i (example2)" },
    KeyInfo { key: "manifold.num_frequencies", kind: "integer >= 1", description: "number of sinusoids in the fast component (example2)" },
    KeyInfo { key: "manifold.phase", kind: "range", description: "phase shift delta_i in radians (example2)" },
    KeyInfo { key: "manifold.jump_location", kind: "range", description: "step location x' (example2)" },
    KeyInfo { key: "manifold.jump_height", kind: "range", description: "step height (example2)" },
    KeyInfo { key: "manifold.peak_velocity", kind: "range", description: "peak velocity v0 in cm/s (example3_analog)" },
    KeyInfo { key: "manifold.flow_index", kind: "range", description: "flow behaviour index (example3_analog)" },
    KeyInfo { key: "manifold.radius", kind: "real > 0", description: "vessel radius R; the grid defaults to [-R, R] (example3_analog)" },
    KeyInfo { key: "sensors.kind", kind: "box | pointwise", description: "equidistant box averages or point evaluations" },
    KeyInfo { key: "sensors.m", kind: "integer list", description: "sensor counts to sweep" },
    KeyInfo { key: "rom.n", kind: "integer list", description: "reduced-basis dimensions to sweep" },
    KeyInfo { key: "noise.kind", kind: "none | linear | empirical", description: "measurement noise model" },
    KeyInfo { key: "noise.alpha", kind: "real list", description: "relative reading bias (linear model)" },
    KeyInfo { key: "noise.sigma", kind: "real list", description: "Gaussian noise standard deviation per reading" },
    KeyInfo { key: "noise.mc_samples", kind: "integer >= 1", description: "Monte Carlo samples for the empirical expectation" },
    KeyInfo { key: "noise.table", kind: "path", description: "CSV lower,upper,offset for the empirical model" },
    KeyInfo { key: "snapshots.count", kind: "integer >= 1", description: "training snapshots for the reduced basis" },
    KeyInfo { key: "validation.count", kind: "integer >= 1", description: "test cases (independent draws)" },
    KeyInfo { key: "seed", kind: "integer", description: "master seed" },
    KeyInfo { key: "output.dir", kind: "path", description: "output directory (the CLI --out flag takes precedence)" },
    KeyInfo { key: "spbdw.rel_tol", kind: "real in (0, 1]", description: "minimum relative residual reduction per smoother" },
    KeyInfo { key: "spbdw.max_iters", kind: "integer >= 1", description: "maximum number of smoothers" },
    KeyInfo { key: "spbdw.residual_floor", kind: "real >= 0", description: "stop once the residual is below this fraction of the data norm" },
    KeyInfo { key: "spbdw.deflate", kind: "bool", description: "search in the complement of the observed fast space" },
    KeyInfo { key: "spbdw.dict_stride", kind: "integer >= 1", description: "step candidates at every k-th grid node of the jump range" },
    KeyInfo { key: "spbdw.bias_correct", kind: "bool", description: "use bPBDW for the smoothed solve when noise is active" },
    KeyInfo { key: "box.margin", kind: "real >= 1", description: "inflation of the coefficient box about its centre" },
    KeyInfo { key: "truth.peak_velocity", kind: "real", description: "v0 of the synthetic truth (example3_analog)" },
    KeyInfo { key: "truth.flow_index", kind: "real", description: "flow index of the synthetic truth (example3_analog)" },
];

/// Parses a real: a product/quotient of numbers and `pi`, with optional leading sign.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err("expected a real number".into());
    }
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t.strip_prefix('+').unwrap_or(t).trim()),
    };
    let factor = |f: &str| -> std::result::Result<f64, String> {
        let f = f.trim();
        if f.eq_ignore_ascii_case("pi") {
            Ok(PI)
        } else {
            f.parse::<f64>().map_err(|_| format!("`{s}` is not a real number"))
        }
    };
    // Plain numbers (including exponents like 1e-5) first.
    if let Ok(v) = body.parse::<f64>() {
        return finite(sign * v, s);
    }
    let mut value = 1.0;
    let mut op = '*';
    let mut start = 0;
    for (i, c) in body.char_indices().chain(std::iter::once((body.len(), '*'))) {
        if c == '*' || c == '/' {
            let v = factor(&body[start..i])?;
            value = if op == '*' { value * v } else { value / v };
            op = c;
            start = i + 1;
        }
    }
    finite(sign * value, s)
}

fn finite(v: f64, s: &str) -> std::result::Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse().map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("`{other}` is not true or false")),
    }
}

fn parse_range(s: &str) -> std::result::Result<Range, String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [v] => Ok(Range::point(parse_real(v)?)),
        [lo, hi] => {
            let (lo, hi) = (parse_real(lo)?, parse_real(hi)?);
            if lo > hi {
                return Err(format!("range {lo}, {hi} is not ordered"));
            }
            Ok(Range::new(lo, hi))
        }
        _ => Err(format!("`{s}` is not a range `lo, hi`")),
    }
}

fn parse_usize_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    let t = s.trim();
    if let Some((lo, hi)) = t.split_once("..") {
        let (lo, hi) = (parse_usize(lo)?, parse_usize(hi)?);
        if lo > hi {
            return Err(format!("empty range `{t}`"));
        }
        return Ok((lo..=hi).collect());
    }
    t.split(',').map(parse_usize).collect()
}

fn parse_real_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(parse_real).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn range_str(r: &Range) -> String {
    format!("{}, {}", r.min, r.max)
}

/// Splits a config file into entries, rejecting malformed lines and duplicate keys.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let location = format!("line {}", i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                location,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim().to_string();
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(Error::Config {
                location,
                message: format!("duplicate key `{key}` (first set on {})", prev.location),
            });
        }
        out.push(Entry {
            key,
            value: value.trim().to_string(),
            location,
        });
    }
    Ok(out)
}

/// Parses a `key=value` override.
pub fn parse_override(s: &str) -> Result<Entry> {
    let Some((key, value)) = s.split_once('=') else {
        return Err(Error::Config {
            location: format!("--set {s}"),
            message: "expected key=value".into(),
        });
    };
    Ok(Entry {
        key: key.trim().to_string(),
        value: value.trim().to_string(),
        location: format!("--set {}", key.trim()),
    })
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            grid: Grid::default_periodic(),
            sinusoid: SinusoidSpec::default(),
            multiscale: MultiscaleSpec::default(),
            powerlaw: PowerLawSpec::default(),
            sensor_kind: SensorChoice::Box,
            m: vec![25],
            n: (1..=10).collect(),
            noise_kind: NoiseChoice::Linear,
            alpha: vec![0.1],
            sigma: vec![0.325],
            mc_samples: DEFAULT_MC_SAMPLES,
            noise_table: None,
            snapshots: 200,
            validation: 64,
            seed: 2024,
            output_dir: None,
            spbdw: SpbdwConfig {
                smoother: SmootherOptions::default(),
                dict_stride: DEFAULT_DICT_STRIDE,
                bias_correct: true,
            },
            box_margin: DEFAULT_BOX_MARGIN,
            truth_peak_velocity: 50.0,
            truth_flow_index: 1.0,
        };
        match experiment {
            Experiment::Example1 => base,
            Experiment::Example2 => Self {
                m: vec![40],
                n: vec![20],
                alpha: vec![0.1],
                sigma: vec![0.01],
                snapshots: 400,
                validation: 20,
                ..base
            },
            Experiment::Example3Analog => {
                let r = base.powerlaw.radius;
                Self {
                    grid: Grid::new(-r, r, 201).expect("valid default grid"),
                    m: vec![20],
                    n: vec![5],
                    alpha: vec![0.15],
                    sigma: vec![2.0],
                    snapshots: 128,
                    validation: 40,
                    ..base
                }
            }
        }
    }

    /// Resolves a configuration from file entries followed by overrides.
    pub fn from_entries(file: &[Entry], overrides: &[Entry]) -> Result<Self> {
        let mut merged: BTreeMap<String, Entry> = BTreeMap::new();
        for e in file.iter().chain(overrides) {
            merged.insert(e.key.clone(), e.clone());
        }
        let Some(exp) = merged.get("experiment") else {
            return Err(Error::Config {
                location: "file".into(),
                message: "missing required key `experiment`".into(),
            });
        };
        let experiment = exp.value.parse::<Experiment>().map_err(|message| Error::Config {
            location: exp.location.clone(),
            message,
        })?;
        let mut cfg = Self::defaults(experiment);
        let mut grid_a = None;
        let mut grid_b = None;
        let mut grid_points = None;
        // Apply in source order so errors point at the first bad line.
        let mut ordered: Vec<&Entry> = merged.values().collect();
        ordered.sort_by_key(|e| (e.location.starts_with("--set"), line_number(&e.location)));
        for e in ordered {
            let res: std::result::Result<(), String> = (|| {
                let v = e.value.as_str();
                match e.key.as_str() {
                    "experiment" => {}
                    "grid.a" => grid_a = Some(parse_real(v)?),
                    "grid.b" => grid_b = Some(parse_real(v)?),
                    "grid.num_points" => grid_points = Some(parse_usize(v)?),
                    "manifold.amplitude" if experiment == Experiment::Example2 => cfg.multiscale.amplitude = parse_range(v)?,
                    "manifold.amplitude" => cfg.sinusoid.amplitude = parse_range(v)?,
                    "manifold.period" if experiment == Experiment::Example2 => cfg.multiscale.period = parse_range(v)?,
                    "manifold.period" => cfg.sinusoid.period = parse_range(v)?,
                    "manifold.num_frequencies" => cfg.multiscale.num_frequencies = parse_usize(v)?,
                    "manifold.phase" => cfg.multiscale.phase = parse_range(v)?,
                    "manifold.jump_location" => cfg.multiscale.jump_location = parse_range(v)?,
                    "manifold.jump_height" => cfg.multiscale.jump_height = parse_range(v)?,
                    "manifold.peak_velocity" => cfg.powerlaw.peak_velocity = parse_range(v)?,
                    "manifold.flow_index" => cfg.powerlaw.flow_index = parse_range(v)?,
                    "manifold.radius" => cfg.powerlaw.radius = parse_real(v)?,
                    "sensors.kind" => {
                        cfg.sensor_kind = match v {
                            "box" => SensorChoice::Box,
                            "pointwise" => SensorChoice::Pointwise,
                            _ => return Err(format!("unknown sensor kind `{v}` (expected box or pointwise)")),
                        }
                    }
                    "sensors.m" => cfg.m = parse_usize_list(v)?,
                    "rom.n" => cfg.n = parse_usize_list(v)?,
                    "noise.kind" => {
                        cfg.noise_kind = match v {
                            "none" => NoiseChoice::None,
                            "linear" => NoiseChoice::Linear,
                            "empirical" => NoiseChoice::Empirical,
                            _ => return Err(format!("unknown noise kind `{v}` (expected none, linear or empirical)")),
                        }
                    }
                    "noise.alpha" => cfg.alpha = parse_real_list(v)?,
                    "noise.sigma" => cfg.sigma = parse_real_list(v)?,
                    "noise.mc_samples" => cfg.mc_samples = parse_usize(v)?,
                    "noise.table" => cfg.noise_table = Some(PathBuf::from(v)),
                    "snapshots.count" => cfg.snapshots = parse_usize(v)?,
                    "validation.count" => cfg.validation = parse_usize(v)?,
                    "seed" => cfg.seed = v.parse().map_err(|_| format!("`{v}` is not a 64-bit unsigned seed"))?,
                    "output.dir" => cfg.output_dir = Some(PathBuf::from(v)),
                    "spbdw.rel_tol" => cfg.spbdw.smoother.rel_tol = parse_real(v)?,
                    "spbdw.max_iters" => cfg.spbdw.smoother.max_iters = parse_usize(v)?,
                    "spbdw.residual_floor" => cfg.spbdw.smoother.residual_floor = parse_real(v)?,
                    "spbdw.deflate" => cfg.spbdw.smoother.deflate = parse_bool(v)?,
                    "spbdw.dict_stride" => cfg.spbdw.dict_stride = parse_usize(v)?,
                    "spbdw.bias_correct" => cfg.spbdw.bias_correct = parse_bool(v)?,
                    "box.margin" => cfg.box_margin = parse_real(v)?,
                    "truth.peak_velocity" => cfg.truth_peak_velocity = parse_real(v)?,
                    "truth.flow_index" => cfg.truth_flow_index = parse_real(v)?,
                    other => return Err(format!("unknown key `{other}` (run `assim info` for the list)")),
                }
                Ok(())
            })();
            res.map_err(|message| Error::Config {
                location: e.location.clone(),
                message,
            })?;
        }

        let default_grid = if experiment == Experiment::Example3Analog {
            let r = cfg.powerlaw.radius;
            (-r, r)
        } else {
            (cfg.grid.a(), cfg.grid.b())
        };
        let where_grid = ["grid.num_points", "grid.b", "grid.a", "manifold.radius"]
            .iter()
            .find_map(|k| merged.get(*k).map(|e| e.location.clone()))
            .unwrap_or_else(|| "defaults".into());
        cfg.grid = Grid::new(
            grid_a.unwrap_or(default_grid.0),
            grid_b.unwrap_or(default_grid.1),
            grid_points.unwrap_or(cfg.grid.len()),
        )
        .map_err(|e| Error::Config {
            location: where_grid,
            message: e.to_string(),
        })?;

        cfg.check().map_err(|(key, message)| Error::Config {
            location: merged.get(key).map(|e| e.location.clone()).unwrap_or_else(|| "defaults".into()),
            message,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let file = parse_entries(text)?;
        let overrides = overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        Self::from_entries(&file, &overrides)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    /// Cross-field checks; returns the offending key with the message.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let nonempty = |key: &'static str, len: usize| if len == 0 { Err((key, "sweep must not be empty".to_string())) } else { Ok(()) };
        nonempty("sensors.m", self.m.len())?;
        nonempty("rom.n", self.n.len())?;
        nonempty("noise.alpha", self.alpha.len())?;
        nonempty("noise.sigma", self.sigma.len())?;
        if self.m.contains(&0) {
            return Err(("sensors.m", "sensor counts must be positive".into()));
        }
        if self.n.contains(&0) {
            return Err(("rom.n", "reduced dimensions must be positive".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n > self.snapshots) {
            return Err(("rom.n", format!("n = {n} exceeds snapshots.count = {}", self.snapshots)));
        }
        if self.sigma.iter().any(|&s| s < 0.0) {
            return Err(("noise.sigma", "sigma must be non-negative".into()));
        }
        if self.alpha.iter().any(|&a| a <= -1.0) {
            return Err(("noise.alpha", "alpha must exceed -1".into()));
        }
        if self.mc_samples == 0 {
            return Err(("noise.mc_samples", "at least one sample is required".into()));
        }
        if self.noise_kind == NoiseChoice::Empirical && self.noise_table.is_none() {
            return Err(("noise.kind", "the empirical model needs noise.table".into()));
        }
        if self.snapshots == 0 {
            return Err(("snapshots.count", "at least one snapshot is required".into()));
        }
        if self.validation == 0 {
            return Err(("validation.count", "at least one case is required".into()));
        }
        if self.spbdw.dict_stride == 0 {
            return Err(("spbdw.dict_stride", "stride must be at least 1".into()));
        }
        let s = &self.spbdw.smoother;
        if !(s.rel_tol > 0.0 && s.rel_tol <= 1.0) {
            return Err(("spbdw.rel_tol", "rel_tol must be in (0, 1]".into()));
        }
        if s.max_iters == 0 {
            return Err(("spbdw.max_iters", "max_iters must be at least 1".into()));
        }
        if !(self.box_margin >= 1.0) {
            return Err(("box.margin", "margin must be at least 1".into()));
        }
        match self.experiment {
            Experiment::Example1 => self.sinusoid.validate().map_err(|e| ("manifold.amplitude", e.to_string())),
            Experiment::Example2 => self.multiscale.validate(&self.grid).map_err(|e| ("manifold.jump_location", e.to_string())),
            Experiment::Example3Analog => {
                self.powerlaw.validate().map_err(|e| ("manifold.peak_velocity", e.to_string()))?;
                let r = self.powerlaw.radius;
                if (self.grid.a() + r).abs() > 1e-12 * r || (self.grid.b() - r).abs() > 1e-12 * r {
                    return Err(("grid.a", format!("power-law grid must span [-R, R] = [{}, {r}]", -r)));
                }
                if !(self.truth_peak_velocity > 0.0 && self.truth_flow_index > 0.0) {
                    return Err(("truth.peak_velocity", "truth parameters must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Fully resolved configuration as `key = value` pairs (file format).
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("grid.a", self.grid.a().to_string()),
            ("grid.b", self.grid.b().to_string()),
            ("grid.num_points", self.grid.len().to_string()),
        ];
        match self.experiment {
            Experiment::Example1 => {
                out.push(("manifold.amplitude", range_str(&self.sinusoid.amplitude)));
                out.push(("manifold.period", range_str(&self.sinusoid.period)));
            }
            Experiment::Example2 => {
                let ms = &self.multiscale;
                out.push(("manifold.num_frequencies", ms.num_frequencies.to_string()));
                out.push(("manifold.amplitude", range_str(&ms.amplitude)));
                out.push(("manifold.period", range_str(&ms.period)));
                out.push(("manifold.phase", range_str(&ms.phase)));
                out.push(("manifold.jump_location", range_str(&ms.jump_location)));
                out.push(("manifold.jump_height", range_str(&ms.jump_height)));
            }
            Experiment::Example3Analog => {
                out.push(("manifold.peak_velocity", range_str(&self.powerlaw.peak_velocity)));
                out.push(("manifold.flow_index", range_str(&self.powerlaw.flow_index)));
                out.push(("manifold.radius", self.powerlaw.radius.to_string()));
                out.push(("truth.peak_velocity", self.truth_peak_velocity.to_string()));
                out.push(("truth.flow_index", self.truth_flow_index.to_string()));
                out.push(("box.margin", self.box_margin.to_string()));
            }
        }
        out.push((
            "sensors.kind",
            match self.sensor_kind {
                SensorChoice::Box => "box",
                SensorChoice::Pointwise => "pointwise",
            }
            .into(),
        ));
        out.push(("sensors.m", join(&self.m)));
        out.push(("rom.n", join(&self.n)));
        out.push((
            "noise.kind",
            match self.noise_kind {
                NoiseChoice::None => "none",
                NoiseChoice::Linear => "linear",
                NoiseChoice::Empirical => "empirical",
            }
            .into(),
        ));
        out.push(("noise.alpha", join(&self.alpha)));
        out.push(("noise.sigma", join(&self.sigma)));
        out.push(("noise.mc_samples", self.mc_samples.to_string()));
        if let Some(t) = &self.noise_table {
            out.push(("noise.table", t.display().to_string()));
        }
        out.push(("snapshots.count", self.snapshots.to_string()));
        out.push(("validation.count", self.validation.to_string()));
        out.push(("seed", self.seed.to_string()));
        if self.experiment == Experiment::Example2 {
            let s = &self.spbdw;
            out.push(("spbdw.rel_tol", s.smoother.rel_tol.to_string()));
            out.push(("spbdw.max_iters", s.smoother.max_iters.to_string()));
            out.push(("spbdw.residual_floor", s.smoother.residual_floor.to_string()));
            out.push(("spbdw.deflate", s.smoother.deflate.to_string()));
            out.push(("spbdw.dict_stride", s.dict_stride.to_string()));
            out.push(("spbdw.bias_correct", s.bias_correct.to_string()));
        }
        if let Some(d) = &self.output_dir {
            out.push(("output.dir", d.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn line_number(location: &str) -> usize {
    location
        .strip_prefix("line ")
        .and_then(|n| n.parse().ok())
        .unwrap_or(usize::MAX)
}

/// The `assim info` text: every key with its type and purpose.
pub fn schema_text() -> String {
    let width = SCHEMA.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (`key = value`, `#` starts a comment):\n\n");
    for k in SCHEMA {
        s.push_str(&format!("  {:width$}  {}\n  {:width$}    {}\n", k.key, k.kind, "", k.description));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_location(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { location, .. }) => location,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn reals_accept_pi_expressions() {
        assert_eq!(parse_real("2").unwrap(), 2.0);
        assert_eq!(parse_real("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_real("pi").unwrap(), PI);
        assert_eq!(parse_real("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_real("3*pi/2").unwrap(), 3.0 * PI / 2.0);
        assert_eq!(parse_real("-pi/2").unwrap(), -PI / 2.0);
        assert!(parse_real("two").is_err());
        assert!(parse_real("1/0").is_err());
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_usize_list("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_usize_list("10, 20,40").unwrap(), vec![10, 20, 40]);
        assert_eq!(parse_range("pi, 2*pi").unwrap(), Range::new(PI, 2.0 * PI));
        assert!(parse_range("2, 1").is_err());
    }

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::parse("experiment = example1\n", &[]).unwrap();
        assert_eq!(c.m, vec![25]);
        assert_eq!(c.n, (1..=10).collect::<Vec<_>>());
        assert_eq!(c.validation, 64);
        let c = ExperimentConfig::parse("experiment = example3_analog", &[]).unwrap();
        assert_eq!((c.grid.a(), c.grid.b()), (-0.5, 0.5));
        let c = ExperimentConfig::parse("experiment = example3_analog\nmanifold.radius = 0.3", &[]).unwrap();
        assert_eq!((c.grid.a(), c.grid.b()), (-0.3, 0.3));
    }

    #[test]
    fn overrides_win() {
        let text = "experiment = example1\nnoise.alpha = 0.1\n";
        let c = ExperimentConfig::parse(text, &["noise.alpha=0.05, 0.2".into(), "sensors.m = 10,20".into()]).unwrap();
        assert_eq!(c.alpha, vec![0.05, 0.2]);
        assert_eq!(c.m, vec![10, 20]);
    }

    #[test]
    fn errors_point_at_the_line() {
        let text = "# comment\nexperiment = example1\n\nnoise.alpha = abc\n";
        assert_eq!(err_location(ExperimentConfig::parse(text, &[])), "line 4");
        let text = "experiment = example1\nbogus.key = 1\n";
        assert_eq!(err_location(ExperimentConfig::parse(text, &[])), "line 2");
        let text = "experiment = example1\nseed = 1\nseed = 2\n";
        assert_eq!(err_location(ExperimentConfig::parse(text, &[])), "line 3");
        let text = "experiment = example1\nrom.n = 1..300\n";
        assert_eq!(err_location(ExperimentConfig::parse(text, &[])), "line 2");
        let text = "experiment = example1\nnot an assignment\n";
        assert!(matches!(ExperimentConfig::parse(text, &[]), Err(Error::Config { .. })));
        assert_eq!(
            err_location(ExperimentConfig::parse("experiment = example1", &["sensors.m=".into()])),
            "--set sensors.m"
        );
        assert_eq!(err_location(ExperimentConfig::parse("experiment = example9", &[])), "line 1");
        assert_eq!(err_location(ExperimentConfig::parse("seed = 1", &[])), "file");
    }

    #[test]
    fn empty_sweep_rejected() {
        let text = "experiment = example1\nnoise.sigma = 0.1\nsensors.m = 0\n";
        assert_eq!(err_location(ExperimentConfig::parse(text, &[])), "line 3");
    }

    #[test]
    fn resolved_text_round_trips() {
        for e in ["example1", "example2", "example3_analog"] {
            let c = ExperimentConfig::parse(&format!("experiment = {e}\nseed = 7\n"), &[]).unwrap();
            let again = ExperimentConfig::parse(&c.to_text(), &[]).unwrap();
            assert_eq!(c, again);
        }
    }

    #[test]
    fn schema_lists_every_key() {
        let text = schema_text();
        for k in SCHEMA {
            assert!(text.contains(k.key));
        }
    }
}
