//! Scenario runner behind the `geored` binary.
//!
//! Every scenario is a named, seeded computation over `geored-core` that
//! produces metrics, gates a subset of them against tolerances and writes a
//! JSON report plus CSV tables into its own directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use geored_core::flow::IntegratorConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod scenarios;

pub use scenarios::{registry, Gate, GateKind, Outcome, Scenario};

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_RK45_TOL: f64 = 1e-10;
pub const DEFAULT_OUT_DIR: &str = "geored-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown scenario `{0}` (see `geored list`)")]
    UnknownScenario(String),
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn config_error(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// On-disk config. Keys mirror the command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub rk45_tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        serde_json::from_str(&text)
            .map_err(|e| config_error(path.display().to_string(), e.to_string()))
    }
}

/// Command-line values; these win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rk45_tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub params: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
}

/// Fully resolved configuration of one run. Serialized as the report's
/// `config_echo`; the output directory is left out so that reports do not
/// depend on where they were written.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub rk45_tol: f64,
    pub params: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn defaults(name: &str) -> Result<Self, CliError> {
        Self::resolve(name, ConfigFile::default(), Overrides::default())
    }

    pub fn resolve(name: &str, file: ConfigFile, over: Overrides) -> Result<Self, CliError> {
        let sc = find(name)?;
        if let Some(other) = file.scenario.as_deref().filter(|s| *s != name) {
            return Err(config_error(
                "scenario",
                format!("file is for `{other}`, not `{name}`"),
            ));
        }
        let mut params: BTreeMap<String, f64> =
            sc.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in file.params.into_iter().chain(over.params) {
            if !params.contains_key(&k) {
                return Err(config_error(
                    format!("params.{k}"),
                    format!("`{name}` has no such parameter"),
                ));
            }
            if !v.is_finite() {
                return Err(config_error(format!("params.{k}"), "must be finite"));
            }
            params.insert(k, v);
        }
        for (k, v) in &params {
            if sc.counts.contains(&k.as_str()) && (v.fract() != 0.0 || *v < 1.0) {
                return Err(config_error(
                    format!("params.{k}"),
                    "must be a positive integer",
                ));
            }
        }
        let mut tolerances: BTreeMap<String, f64> = sc
            .gates
            .iter()
            .map(|g| (g.metric.to_string(), g.tol))
            .collect();
        for (k, v) in file.tolerances.into_iter().chain(over.tolerances) {
            if !tolerances.contains_key(&k) {
                return Err(config_error(
                    format!("tolerances.{k}"),
                    format!("`{name}` gates no such metric"),
                ));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_error(
                    format!("tolerances.{k}"),
                    "must be finite and non-negative",
                ));
            }
            tolerances.insert(k, v);
        }
        let rk45_tol = over.rk45_tol.or(file.rk45_tol).unwrap_or(DEFAULT_RK45_TOL);
        if !(rk45_tol.is_finite() && rk45_tol > 0.0) {
            return Err(config_error("rk45-tol", "must be positive"));
        }
        Ok(ScenarioConfig {
            name: name.to_string(),
            seed: over.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            rk45_tol,
            params,
            tolerances,
            output_dir: over
                .out_dir
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        })
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig::rk45(self.rk45_tol)
    }

    /// Per-scenario seed derived from the global one and the scenario name.
    pub fn scenario_seed(&self) -> u64 {
        split_seed(self.seed, &self.name)
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params[key]
    }

    pub fn count(&self, key: &str) -> usize {
        self.params[key] as usize
    }
}

/// FNV-1a of the name folded into the seed, then one splitmix64 round so
/// nearby seeds give unrelated streams.
pub fn split_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Every acceptance gate holds but a comparison against a published
    /// closed form does not.
    Partial,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Partial => "PARTIAL",
        })
    }
}

#[derive(Debug, Clone)]
pub struct GateResult {
    pub metric: String,
    pub value: f64,
    pub tol: f64,
    pub kind: GateKind,
    pub acceptance: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub name: String,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    /// File names relative to the scenario directory.
    pub artifacts: Vec<String>,
    pub config_echo: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub gates: Vec<GateResult>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is plain data");
        s.push('\n');
        s
    }
}

pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub references: &'static [&'static str],
}

/// Registered scenarios in lexicographic order.
pub fn list_scenarios() -> Vec<ScenarioInfo> {
    registry()
        .iter()
        .map(|s| ScenarioInfo {
            name: s.name,
            description: s.description,
            references: s.refs,
        })
        .collect()
}

pub fn find(name: &str) -> Result<&'static Scenario, CliError> {
    registry()
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::UnknownScenario(name.to_string()))
}

fn evaluate(
    sc: &Scenario,
    cfg: &ScenarioConfig,
    metrics: &BTreeMap<String, f64>,
) -> Vec<GateResult> {
    sc.gates
        .iter()
        .map(|g| {
            let value = metrics.get(g.metric).copied().unwrap_or(f64::NAN);
            let tol = cfg.tolerances[g.metric];
            let ok = match g.kind {
                GateKind::AtMost => value <= tol,
                GateKind::AtLeast => value >= tol,
            };
            GateResult {
                metric: g.metric.to_string(),
                value,
                tol,
                kind: g.kind,
                acceptance: g.acceptance,
                ok,
            }
        })
        .collect()
}

/// Runs one scenario and writes `report.json` and its tables under
/// `<output_dir>/<name>/`. Failures inside the computation become a FAIL
/// report rather than an error.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let sc = find(&cfg.name)?;
    let start = Instant::now();
    let (outcome, error) = match (sc.run)(cfg) {
        Ok(o) => (o, None),
        Err(e) => (Outcome::default(), Some(e.to_string())),
    };
    let gates = evaluate(sc, cfg, &outcome.metrics);
    let status = if error.is_some() || gates.iter().any(|g| g.acceptance && !g.ok) {
        Status::Fail
    } else if gates.iter().any(|g| !g.ok) {
        Status::Partial
    } else {
        Status::Pass
    };

    let dir = cfg.output_dir.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let mut artifacts = Vec::new();
    for t in &outcome.tables {
        let path = dir.join(&t.file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(&t.header).map_err(|e| csv_error(&path, e))?;
        for row in &t.rows {
            w.write_record(row).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(io_error(&path))?;
        artifacts.push(t.file.clone());
    }
    artifacts.push("report.json".to_string());
    let report = RunReport {
        name: cfg.name.clone(),
        status,
        metrics: outcome.metrics,
        artifacts,
        config_echo: cfg.clone(),
        error,
        gates,
        wall_time: start.elapsed().as_secs_f64(),
    };
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()).map_err(io_error(&path))?;
    Ok(report)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub partial: usize,
    pub scenarios: BTreeMap<String, Status>,
    #[serde(skip)]
    pub reports: Vec<RunReport>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.fail == 0 && self.partial == 0
    }
}

/// Runs every registered scenario in parallel. A `<name>.json` file in
/// `config_dir` replaces that scenario's defaults; anything else in the
/// directory is ignored. Writes `summary.json` next to the scenario folders.
pub fn run_all(config_dir: Option<&Path>, over: &Overrides) -> Result<Summary, CliError> {
    let mut configs = Vec::new();
    for sc in registry() {
        let file = match config_dir.map(|d| d.join(format!("{}.json", sc.name))) {
            Some(p) if p.is_file() => ConfigFile::load(&p)?,
            _ => ConfigFile::default(),
        };
        let mut o = over.clone();
        o.params.clear();
        o.tolerances.clear();
        configs.push(ScenarioConfig::resolve(sc.name, file, o)?);
    }
    let results: Vec<Result<RunReport, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let mut summary = Summary::default();
    for r in results {
        let r = r?;
        match r.status {
            Status::Pass => summary.pass += 1,
            Status::Fail => summary.fail += 1,
            Status::Partial => summary.partial += 1,
        }
        summary.scenarios.insert(r.name.clone(), r.status);
        summary.reports.push(r);
    }
    let out = over
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).expect("summary is plain data");
    text.push('\n');
    fs::write(&path, text).map_err(io_error(&path))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_split_by_name() {
        assert_eq!(split_seed(42, "qriccati-n3"), split_seed(42, "qriccati-n3"));
        assert_ne!(split_seed(42, "qriccati-n3"), split_seed(42, "dirac-wlc"));
        assert_ne!(split_seed(42, "qriccati-n3"), split_seed(43, "qriccati-n3"));
    }

    #[test]
    fn registry_is_sorted_and_referenced() {
        let names: Vec<&str> = registry().iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert!(registry().iter().all(|s| !s.refs.is_empty()));
    }

    #[test]
    fn overrides_beat_file_values() {
        let file = ConfigFile {
            seed: Some(1),
            rk45_tol: Some(1e-8),
            ..Default::default()
        };
        let over = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        let c = ScenarioConfig::resolve("qriccati-n3", file, over).unwrap();
        assert_eq!((c.seed, c.rk45_tol), (7, 1e-8));
    }

    #[test]
    fn bad_fields_are_named() {
        let over = Overrides {
            params: [("nonsense".to_string(), 1.0)].into(),
            ..Default::default()
        };
        match ScenarioConfig::resolve("qriccati-n3", ConfigFile::default(), over) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "params.nonsense"),
            other => panic!("expected a config error, got {other:?}"),
        }
        let text = r#"{"seed": 3, "rk45_tol": 1e-9}"#;
        let err = serde_json::from_str::<ConfigFile>(text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("rk45_tol"), "{err}");
    }
}
