//! Built-in scenarios and the runner that executes their suites and writes
//! JSON reports and CSV side files.

mod builtin;
mod outcome;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::affine::{Decomposition, MapOracle};
use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::norms::{NormField, DEFAULT_GRID};

pub use outcome::{Check, Comparison, Outcome};

/// Operation names a suite entry may invoke.
pub const OPERATIONS: &[&str] = &[
    "christoffel",
    "integrate_geodesic",
    "parallel_transport",
    "riemannian_log",
    "orthonormal_frame",
    "sample_holonomy",
    "group_closure",
    "transitivity_test",
    "invariant_subspaces",
    "norm_distance",
    "average_norm",
    "invariance_residual",
    "orbit_hull_norm",
    "block_sum_norm",
    "minkowski_smooth",
    "minkowski_check",
    "restrict_norm_to_section",
    "metric_differential",
    "affinity_test",
    "seminorm_check",
    "parallel_invariance_check",
    "regular_vector_test",
    "mainlemma_check",
    "kernel_distribution",
    "verify_decomposition",
];

pub const DEFAULT_SEED: u64 = 7;
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
}

/// The built-in catalog, in run order.
pub fn list_scenarios() -> Vec<CatalogEntry> {
    builtin::CATALOG
        .iter()
        .map(|(name, summary)| CatalogEntry { name, summary })
        .collect()
}

/// Run-wide settings plus per-scenario parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Integrator steps for every scenario manifold; `None` keeps the chart default.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub scenarios: BTreeMap<String, Map<String, Value>>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: DEFAULT_SEED,
            steps: None,
            grid: None,
            scenarios: BTreeMap::new(),
        }
    }
}

impl RunOptions {
    /// Parses a JSON config such as
    /// `{"seed": 3, "scenarios": {"flat-linfty": {"n_geodesics": 40}}}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let opts: RunOptions = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for name in opts.scenarios.keys() {
            if !builtin::CATALOG.iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!("unknown scenario `{name}` in config")));
            }
        }
        Ok(opts)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(DEFAULT_GRID)
    }
}

/// Scenario parameters: defaults with config overrides applied.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Params(Map<String, Value>);

impl Params {
    fn with_overrides(defaults: Value, overrides: Option<&Map<String, Value>>, scenario: &str) -> Result<Self> {
        let Value::Object(mut map) = defaults else {
            unreachable!("scenario defaults are objects")
        };
        for (k, v) in overrides.into_iter().flatten() {
            let Some(old) = map.get(k) else {
                return Err(Error::Config(format!("scenario `{scenario}` has no parameter `{k}`")));
            };
            let same_shape = matches!(
                (old, v),
                (Value::Number(_), Value::Number(_)) | (Value::Array(_), Value::Array(_)) | (Value::Bool(_), Value::Bool(_))
            );
            if !same_shape {
                return Err(Error::Config(format!("parameter `{scenario}.{k}` has the wrong type")));
            }
            map.insert(k.clone(), v.clone());
        }
        Ok(Params(map))
    }

    fn raw(&self, key: &str) -> &Value {
        self.0
            .get(key)
            .unwrap_or_else(|| panic!("scenario reads undeclared parameter `{key}`"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key)
            .as_f64()
            .ok_or_else(|| Error::Config(format!("parameter `{key}` must be a number")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key)
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::Config(format!("parameter `{key}` must be a non-negative integer")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let bad = || Error::Config(format!("parameter `{key}` must be a list of numbers"));
        self.raw(key)
            .as_array()
            .ok_or_else(bad)?
            .iter()
            .map(|v| v.as_f64().ok_or_else(bad))
            .collect()
    }

    pub fn as_map(&self) -> &Map<String, Value> {
        &self.0
    }
}

pub type EntryFn = Arc<dyn Fn(&Context<'_>) -> Result<Outcome> + Send + Sync>;

/// One suite assertion: an operation invocation and the comparison it must pass.
#[derive(Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub operation: &'static str,
    /// Acceptance criterion this entry encodes, if any.
    pub criterion: Option<u8>,
    run: EntryFn,
}

impl SuiteEntry {
    pub fn new(
        name: impl Into<String>,
        operation: &'static str,
        criterion: Option<u8>,
        run: impl Fn(&Context<'_>) -> Result<Outcome> + Send + Sync + 'static,
    ) -> Self {
        SuiteEntry {
            name: name.into(),
            operation,
            criterion,
            run: Arc::new(run),
        }
    }
}

impl fmt::Debug for SuiteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SuiteEntry")
            .field("name", &self.name)
            .field("operation", &self.operation)
            .field("criterion", &self.criterion)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub manifold: Arc<ChartManifold>,
    pub oracles: Vec<(String, MapOracle)>,
    pub declared_decompositions: Vec<(String, Decomposition)>,
    pub suite: Vec<SuiteEntry>,
    pub seeds: Vec<u64>,
    pub params: Params,
    pub grid: usize,
}

impl Scenario {
    /// Builds a catalog scenario with `opts` applied.
    pub fn builtin(name: &str, opts: &RunOptions) -> Result<Self> {
        let Some((name, description)) = builtin::CATALOG.iter().find(|(n, _)| *n == name) else {
            return Err(Error::UnknownScenario(name.to_string()));
        };
        let params = Params::with_overrides(builtin::defaults(name), opts.scenarios.get(*name), name)?;
        let s = builtin::build(name, description, params, opts)?;
        s.validate()?;
        Ok(s)
    }

    /// Every entry names a known operation and entry names are unique.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.suite.iter().enumerate() {
            if !OPERATIONS.contains(&e.operation) {
                return Err(Error::Config(format!("entry `{}` names unknown operation `{}`", e.name, e.operation)));
            }
            if self.suite[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::Config(format!("duplicate suite entry `{}`", e.name)));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("scenario has no seeds".into()));
        }
        Ok(())
    }

    pub fn oracle(&self, name: &str) -> Option<&MapOracle> {
        self.oracles.iter().find(|(n, _)| n == name).map(|(_, o)| o)
    }
}

/// Per-run state handed to suite entries.
pub struct Context<'a> {
    pub params: &'a Params,
    pub seeds: &'a [u64],
    pub grid: usize,
    dir: &'a Path,
    files: RefCell<Vec<String>>,
    data: RefCell<Map<String, Value>>,
}

impl Context<'_> {
    /// `k`-th scenario seed, cycling if the list is short.
    pub fn seed(&self, k: usize) -> u64 {
        self.seeds[k % self.seeds.len()]
    }

    /// Adds `value` under `key` in the report's `data` section.
    pub fn record(&self, key: &str, value: impl Serialize) -> Result<()> {
        self.data.borrow_mut().insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn write_norm_csv(&self, file: &str, q: &NormField) -> Result<()> {
        q.write_csv(&self.dir.join(file))?;
        self.files.borrow_mut().push(file.to_string());
        Ok(())
    }

    pub fn write_csv(&self, file: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(file)).map_err(csv_error)?;
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(csv_error)?;
        }
        w.flush()?;
        self.files.borrow_mut().push(file.to_string());
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub description: String,
    pub manifold: String,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub grid: usize,
    pub params: Map<String, Value>,
    pub oracles: Vec<String>,
    pub decompositions: Vec<String>,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    pub timestamp: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub data: Map<String, Value>,
    pub files: Vec<String>,
}

impl ScenarioReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the suite of `s` and writes `out_dir/<name>/report.json` plus CSV side files.
///
/// Entry errors become failed checks; only I/O problems abort the run.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<ScenarioReport> {
    let dir = out_dir.join(&s.name);
    fs::create_dir_all(&dir)?;
    let ctx = Context {
        params: &s.params,
        seeds: &s.seeds,
        grid: s.grid,
        dir: &dir,
        files: RefCell::new(Vec::new()),
        data: RefCell::new(Map::new()),
    };
    let mut checks = Vec::with_capacity(s.suite.len());
    for e in &s.suite {
        let result = (e.run)(&ctx);
        if let Err(Error::Io(err)) = result {
            return Err(Error::Io(err));
        }
        checks.push(Check::from_result(&e.name, e.operation, e.criterion, result));
    }
    let report = ScenarioReport {
        scenario: s.name.clone(),
        description: s.description.clone(),
        manifold: s.manifold.name().to_string(),
        seeds: s.seeds.clone(),
        steps: s.manifold.steps(),
        grid: s.grid,
        params: s.params.as_map().clone(),
        oracles: s.oracles.iter().map(|(n, _)| n.clone()).collect(),
        decompositions: s.declared_decompositions.iter().map(|(n, _)| n.clone()).collect(),
        timestamp: now(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        data: ctx.data.into_inner(),
        files: ctx.files.into_inner(),
    };
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Builds and runs the named scenarios concurrently; reports come back in input order.
pub fn run_many(names: &[&str], opts: &RunOptions, out_dir: &Path) -> Result<Vec<ScenarioReport>> {
    let scenarios = names
        .iter()
        .map(|n| Scenario::builtin(n, opts))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    scenarios.par_iter().map(|s| run_scenario(s, out_dir)).collect()
}

pub fn run_all(opts: &RunOptions, out_dir: &Path) -> Result<Vec<ScenarioReport>> {
    let names: Vec<&str> = builtin::CATALOG.iter().map(|(n, _)| *n).collect();
    run_many(&names, opts, out_dir)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStatus {
    pub scenario: String,
    pub passed: bool,
    pub checks: usize,
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub criterion: u8,
    pub passed: bool,
    /// `scenario/check` names contributing to the criterion.
    pub checks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: bool,
    pub scenarios: Vec<ScenarioStatus>,
    pub criteria: Vec<CriterionStatus>,
}

impl Summary {
    pub fn from_reports(reports: &[ScenarioReport]) -> Self {
        let mut criteria: BTreeMap<u8, CriterionStatus> = BTreeMap::new();
        for r in reports {
            for c in &r.checks {
                if let Some(k) = c.criterion {
                    let entry = criteria.entry(k).or_insert(CriterionStatus {
                        criterion: k,
                        passed: true,
                        checks: Vec::new(),
                    });
                    entry.passed &= c.passed;
                    entry.checks.push(format!("{}/{}", r.scenario, c.name));
                }
            }
        }
        Summary {
            passed: reports.iter().all(|r| r.passed),
            scenarios: reports
                .iter()
                .map(|r| ScenarioStatus {
                    scenario: r.scenario.clone(),
                    passed: r.passed,
                    checks: r.checks.len(),
                    failed: r.failed().iter().map(|c| c.name.clone()).collect(),
                })
                .collect(),
            criteria: criteria.into_values().collect(),
        }
    }
}

pub fn read_report(path: &Path) -> Result<ScenarioReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Collects `dir/*/report.json` (sorted by directory name) into `dir/summary.json`.
pub fn merge_reports(dir: &Path) -> Result<Summary> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join(REPORT_FILE))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no scenario reports under {}", dir.display())));
    }
    let reports = paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_reports(&reports);
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Report JSON with the timestamp removed, for reproducibility comparisons.
pub fn without_timestamp(report_json: &str) -> Result<Value> {
    let mut v: Value = serde_json::from_str(report_json)?;
    if let Value::Object(m) = &mut v {
        m.remove("timestamp");
    }
    Ok(v)
}

#[cfg(test)]
mod tests;
