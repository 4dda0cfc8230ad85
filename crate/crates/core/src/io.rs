//! Scenario configuration files and JSON reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::ScanConfig;
use crate::dynamics::{Frame, MachineModel};
use crate::estimator::Method;
use crate::netmodel::{cases, NetworkCase};
use crate::simulator::{self, Contingency, ScenarioSchedule};
use crate::{Error, Result};

pub const TOOL: &str = concat!("gridsense ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContingencyConfig {
    pub time: f64,
    /// Branch ids ("7") or bus endpoints ("3-9").
    pub branches: Vec<String>,
}

/// Experiments run by the pipeline. Absent fields fall back to the preset
/// for the shipped case of the same name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelinePlan {
    /// Line(s) tripped in the detection experiment.
    pub detection: Option<Vec<String>>,
    /// Line(s) tripped in the localization experiment.
    pub localization: Option<Vec<String>>,
    /// Additional observed sets (one-based machines) for localization.
    pub observed: Option<Vec<Vec<usize>>>,
    /// Line(s) tripped to build the stressed case for the spectral study.
    pub spectral: Option<Vec<String>>,
    pub windows: Option<Vec<f64>>,
    pub damping: Option<bool>,
    /// Estimator for the post-change experiments (detection, localization,
    /// spectral), where the cross-covariance term matters most.
    pub topology_method: Option<String>,
}

impl PipelinePlan {
    pub fn preset(case_name: &str) -> PipelinePlan {
        let s = |v: &[&str]| Some(v.iter().map(|x| x.to_string()).collect());
        match case_name {
            "wscc9" => PipelinePlan {
                detection: s(&["3-9"]),
                localization: s(&["3-9"]),
                observed: Some(Vec::new()),
                spectral: Some(Vec::new()),
                windows: Some(vec![100.0, 200.0, 400.0, 1000.0]),
                // Lightly damped (D/M = 1): the cross-covariance terms the
                // variance formula drops are large here.
                damping: Some(false),
                topology_method: Some("full".into()),
            },
            "ieee39" => PipelinePlan {
                detection: Some(Vec::new()),
                localization: s(&["1-2", "2-25"]),
                observed: Some(vec![vec![1, 2, 3, 4, 5, 6, 7, 8]]),
                spectral: s(&["2-25", "1-39"]),
                windows: Some(Vec::new()),
                damping: Some(true),
                topology_method: Some("full".into()),
            },
            _ => PipelinePlan::default(),
        }
    }

    /// Fills the unset fields from `base`.
    pub fn or(self, base: PipelinePlan) -> PipelinePlan {
        PipelinePlan {
            detection: self.detection.or(base.detection),
            localization: self.localization.or(base.localization),
            observed: self.observed.or(base.observed),
            spectral: self.spectral.or(base.spectral),
            windows: self.windows.or(base.windows),
            damping: self.damping.or(base.damping),
            topology_method: self.topology_method.or(base.topology_method),
        }
    }
}

fn d_frame() -> String {
    "coi".into()
}
fn d_sigma() -> f64 {
    crate::scenario::SIGMA
}
fn d_duration() -> f64 {
    500.0
}
fn d_rate() -> f64 {
    10.0
}
fn d_warmup() -> f64 {
    simulator::DEFAULT_WARMUP
}
fn d_method() -> String {
    "simplified".into()
}
fn d_scan_window() -> f64 {
    300.0
}
fn d_stride() -> f64 {
    1.0
}
fn d_factor() -> f64 {
    3.0
}
fn d_floor() -> f64 {
    0.08
}
fn d_calibration() -> f64 {
    400.0
}
fn d_out() -> String {
    "out".into()
}
fn d_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Path to a case file, or the name of a shipped case.
    pub case: String,
    #[serde(default = "d_frame")]
    pub frame: String,
    /// Load-noise standard deviation, same for every load.
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_duration")]
    pub duration: f64,
    /// Integration step; chosen from the damping rates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "d_rate")]
    pub output_rate: f64,
    #[serde(default = "d_warmup")]
    pub warmup: f64,
    #[serde(default)]
    pub contingencies: Vec<ContingencyConfig>,
    /// Measurement noise on angles and speeds.
    #[serde(default)]
    pub measurement_noise: f64,
    #[serde(default = "d_method")]
    pub method: String,
    /// Estimation window; 500 s by default, 10000 s for ieee39.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "d_scan_window")]
    pub scan_window: f64,
    #[serde(default = "d_stride")]
    pub stride: f64,
    #[serde(default = "d_factor")]
    pub threshold_factor: f64,
    #[serde(default = "d_floor")]
    pub threshold_floor: f64,
    #[serde(default = "d_calibration")]
    pub calibration: f64,
    #[serde(default = "d_out")]
    pub out: String,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelinePlan>,
    /// Directory that relative case paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Maps a toml error to a line-numbered parse error.
pub(crate) fn toml_error(text: &str, origin: &Path, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: e.message().to_string(),
    }
}

impl ScenarioConfig {
    /// Config with defaults for `case`.
    pub fn for_case(case: &str) -> ScenarioConfig {
        Self::from_toml_str(&format!("case = {case:?}"), Path::new("<defaults>")).expect("default config parses")
    }

    /// Parses without checking the file system; see [`ScenarioConfig::validate`].
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error(text, origin, e))?;
        cfg.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_toml_str(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn is_path(&self) -> bool {
        self.case.contains('/') || self.case.contains('\\') || self.case.ends_with(".case")
    }

    pub fn case_path(&self) -> Option<PathBuf> {
        self.is_path().then(|| self.base_dir.join(&self.case))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        match self.case_path() {
            Some(p) if !p.exists() => {
                return Err(Error::Config(format!("case file {} does not exist", p.display())))
            }
            None if cases::builtin(&self.case).is_none() => {
                return Err(Error::Config(format!(
                    "unknown case '{}' (give a path to a .case file, or wscc9 / ieee39)",
                    self.case
                )))
            }
            _ => {}
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("duration", self.duration),
            ("output_rate", self.output_rate),
            ("scan_window", self.scan_window),
            ("stride", self.stride),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.measurement_noise < 0.0 {
            return Err(Error::Config("measurement_noise must be nonnegative".into()));
        }
        if let Some(w) = self.window {
            if !(w > 0.0) {
                return Err(Error::Config(format!("window must be positive, got {w}")));
            }
        }
        self.method()?;
        Ok(())
    }

    pub fn load_case(&self) -> Result<NetworkCase> {
        match self.case_path() {
            Some(p) => NetworkCase::load(&p),
            None => cases::builtin(&self.case).ok_or_else(|| Error::Config(format!("unknown case '{}'", self.case))),
        }
    }

    pub fn method(&self) -> Result<Method> {
        Method::parse(&self.method)
    }

    pub fn frame(&self, model: &MachineModel, case: &NetworkCase) -> Result<Frame> {
        let default = model.coi_for_case(case).eliminated().unwrap_or(model.n() - 1);
        let f = Frame::parse(&self.frame, default)?;
        f.validate(model.n())?;
        Ok(f)
    }

    /// Estimation window for stationary experiments.
    pub fn window_for(&self, case: &NetworkCase) -> f64 {
        self.window.unwrap_or(if case.name == "ieee39" { 10_000.0 } else { 500.0 })
    }

    pub fn scan_config(&self) -> Result<ScanConfig> {
        Ok(ScanConfig {
            window: self.scan_window,
            stride: self.stride,
            method: self.method()?,
            calibration: self.calibration,
            threshold_factor: self.threshold_factor,
            threshold_floor: self.threshold_floor,
            known_events: true,
        })
    }

    pub fn schedule(&self, case: &NetworkCase, model: &MachineModel, seed: u64) -> Result<ScenarioSchedule> {
        let contingencies = self
            .contingencies
            .iter()
            .map(|c| {
                Ok(Contingency {
                    time: c.time,
                    branches: c.branches.iter().map(|b| case.resolve_branch(b)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let s = ScenarioSchedule {
            dt: self.dt.unwrap_or_else(|| simulator::auto_dt(model)),
            contingencies,
            measurement_noise_std: (self.measurement_noise, self.measurement_noise),
            output_rate: self.output_rate,
            warmup: self.warmup,
            ..ScenarioSchedule::new(self.duration, vec![self.sigma; model.n()], seed)
        };
        s.validate()?;
        Ok(s)
    }

    pub fn plan(&self, case: &NetworkCase) -> PipelinePlan {
        self.pipeline.clone().unwrap_or_default().or(PipelinePlan::preset(&case.name))
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output
    /// directory is left out: where results go does not change them.
    pub fn hash(&self) -> String {
        let canonical = ScenarioConfig { out: String::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Estimation window (start, end) in series time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    pub case: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<Vec<f64>>,
    pub frame: String,
    pub method: String,
}

impl MatrixRecord {
    pub fn new(m: &DMatrix<f64>, frame: &Frame, method: &str) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
            frame: frame.tag(),
            method: method.into(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.data[r][c])
    }
}

/// Structured result document. Contains no timestamps, so identical inputs
/// give identical bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub provenance: Provenance,
    pub matrices: BTreeMap<String, MatrixRecord>,
    pub scalars: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, bool>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub tables: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(kind: &str, provenance: Provenance) -> Self {
        Self {
            kind: kind.into(),
            provenance,
            ..Default::default()
        }
    }

    /// Method tag "model" marks model-based matrices.
    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>, frame: &Frame, method: &str) {
        self.matrices.insert(name.into(), MatrixRecord::new(m, frame, method));
    }

    pub fn scalar(&mut self, name: &str, v: f64) {
        self.scalars.insert(name.into(), v);
    }

    pub fn verdict(&mut self, name: &str, v: bool) {
        self.verdicts.insert(name.into(), v);
    }

    pub fn table<T: Serialize>(&mut self, name: &str, v: &T) {
        self.tables.insert(name.into(), serde_json::to_value(v).expect("table serializes"));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json())
    }
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}
