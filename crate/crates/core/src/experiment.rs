// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Seeded experiment runners and their tabular output.
//!
//! Every run derives its RNG stream from `(seed, experiment, model, run)` via
//! [`derive_seed`], so results do not depend on how work is spread over threads.
//! Rows are sorted by `(model_id, run_id)` before they are returned.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{ControlField, HamiltonianModel};
use crate::error::{LandscapeError, Result};
use crate::landscape::{field_fidelity, randomized_ascent, trap_verdict, AscentConfig, GoalGate, RunRecord};
use crate::matrix::{derive_seed, random_unitary_goal_with, seeded_rng};
use crate::singular::{
    integrate_singular, neighborhood_escape, saddle_probe, seek_singular_critical, verify_singularity,
    CriticalSearchConfig, SaddleClass, SingularProbe,
};
use crate::zoo::{heisenberg_model, random_tuple, system_e, with_polarizability, HeisenbergParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TrapCensusHeisenberg,
    TrapCensusGeneric,
    ZeroFieldStart,
    FluenceStudy,
    SingularCensus,
    SingularCriticalSearch,
    SystemEStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::TrapCensusHeisenberg,
        ExperimentKind::TrapCensusGeneric,
        ExperimentKind::ZeroFieldStart,
        ExperimentKind::FluenceStudy,
        ExperimentKind::SingularCensus,
        ExperimentKind::SingularCriticalSearch,
        ExperimentKind::SystemEStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrapCensusHeisenberg => "trap_census_heisenberg",
            ExperimentKind::TrapCensusGeneric => "trap_census_generic",
            ExperimentKind::ZeroFieldStart => "zero_field_start",
            ExperimentKind::FluenceStudy => "fluence_study",
            ExperimentKind::SingularCensus => "singular_census",
            ExperimentKind::SingularCriticalSearch => "singular_critical_search",
            ExperimentKind::SystemEStudy => "system_e_study",
        }
    }

    fn tag(self) -> u64 {
        Self::ALL.iter().position(|k| *k == self).expect("listed") as u64
    }

    /// Names of the per-experiment columns that follow the common ones.
    pub fn extra_columns(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::TrapCensusHeisenberg | ExperimentKind::TrapCensusGeneric | ExperimentKind::ZeroFieldStart => {
                &["evaluations", "retried", "first_fidelity", "initial_fidelity"]
            }
            ExperimentKind::FluenceStudy => &["norm_ratio", "initial_scale", "iteration", "field_norm", "fidelity"],
            ExperimentKind::SingularCensus => &[
                "class",
                "blow_up",
                "blow_up_count",
                "grid_defect",
                "refined_defect",
                "denominator_floor",
                "classification",
            ],
            ExperimentKind::SingularCriticalSearch => &["angle", "escape_fraction"],
            ExperimentKind::SystemEStudy => &["with_h2", "h2_seed", "initial_norm", "evaluations"],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarizability {
    Off,
    On,
}

/// Norm ratios `‖iH2‖/‖iH1‖` compared by the fluence study.
pub const FLUENCE_RATIOS: [f64; 3] = [1.0, 0.1, 0.01];
/// Initial-field half-widths compared by the fluence study.
pub const FLUENCE_SCALES: [f64; 2] = [0.1, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_models: usize,
    pub n_runs_per_model: usize,
    pub seed: u64,
    pub dimension: usize,
    pub segments: usize,
    pub horizon: f64,
    pub polarizability: Polarizability,
    /// `‖iH2‖_F / ‖iH1‖_F`.
    pub norm_ratio: f64,
    pub output_path: String,
    pub threads: usize,
    pub success_threshold: f64,
    pub step_size: f64,
    pub min_step_size: f64,
    pub max_step_size: f64,
    pub max_tries: usize,
    pub max_evaluations: usize,
    pub stall_window: usize,
    pub stall_tolerance: f64,
    /// Half-width of the uniform initial field; for system E the largest start.
    pub initial_amplitude: f64,
    pub singular_steps: usize,
    pub singular_horizon: f64,
    pub probe_budget: usize,
    pub search_budget: usize,
    pub angle_tol: f64,
    pub escape_count: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            n_models: 10,
            n_runs_per_model: 10,
            seed: 1,
            dimension: 4,
            segments: 250,
            horizon: crate::dynamics::DEFAULT_HORIZON,
            polarizability: Polarizability::On,
            norm_ratio: 1.0,
            output_path: format!("results/{}", kind.name()),
            threads: 1,
            success_threshold: 0.95,
            step_size: 0.05,
            min_step_size: 1e-3,
            max_step_size: 0.5,
            max_tries: 1000,
            max_evaluations: 20_000,
            stall_window: 2000,
            stall_tolerance: 1e-4,
            initial_amplitude: 1.0,
            singular_steps: 4000,
            singular_horizon: 10.0,
            probe_budget: 200,
            search_budget: 1500,
            angle_tol: 1e-3,
            escape_count: 200,
        };
        match kind {
            ExperimentKind::TrapCensusHeisenberg => Self {
                n_models: 20,
                n_runs_per_model: 20,
                ..base
            },
            ExperimentKind::TrapCensusGeneric => base,
            ExperimentKind::ZeroFieldStart => Self {
                initial_amplitude: 0.0,
                ..base
            },
            ExperimentKind::FluenceStudy => Self {
                n_models: 5,
                n_runs_per_model: 2,
                ..base
            },
            ExperimentKind::SingularCensus => Self {
                n_models: 50,
                n_runs_per_model: 1,
                singular_horizon: 2.0,
                ..base
            },
            ExperimentKind::SingularCriticalSearch => Self {
                n_models: 40,
                n_runs_per_model: 1,
                singular_steps: 1000,
                ..base
            },
            ExperimentKind::SystemEStudy => Self {
                n_models: 20,
                n_runs_per_model: 1,
                dimension: 3,
                segments: 500,
                horizon: 1000.0,
                norm_ratio: 0.1,
                success_threshold: 0.999,
                initial_amplitude: 1e-3,
                max_evaluations: 50_000,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LandscapeError::Config(msg.to_string()));
        if self.n_models == 0 || self.n_runs_per_model == 0 || self.segments == 0 || self.threads == 0 {
            return bad("n_models, n_runs_per_model, segments and threads must be at least 1");
        }
        if i64::try_from(self.seed).is_err() {
            return bad("seed must be at most 2^63 - 1 (TOML integers are signed)");
        }
        if self.dimension < 2 {
            return bad("dimension must be at least 2");
        }
        if !(self.norm_ratio >= 0.0 && self.norm_ratio.is_finite()) {
            return bad("norm_ratio must be a non-negative number");
        }
        if self.polarizability == Polarizability::On && self.norm_ratio == 0.0 {
            return bad("polarizability = on needs norm_ratio > 0");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.initial_amplitude >= 0.0 && self.initial_amplitude.is_finite()) {
            return bad("initial_amplitude must be non-negative");
        }
        match self.experiment {
            ExperimentKind::TrapCensusHeisenberg if self.dimension != 4 => {
                return bad("the Heisenberg family is four-dimensional");
            }
            ExperimentKind::SystemEStudy => {
                if self.dimension != 3 {
                    return bad("system E is three-dimensional");
                }
                if self.horizon != 1000.0 {
                    return bad("system E fixes horizon = 1000");
                }
            }
            ExperimentKind::SingularCensus | ExperimentKind::SingularCriticalSearch => {
                if self.polarizability == Polarizability::Off {
                    return bad("singular controls need polarizability = on");
                }
                if self.singular_steps < crate::singular::MIN_STEPS || !(self.singular_horizon > 0.0) {
                    return bad("singular_steps must be >= 100 and singular_horizon positive");
                }
                if self.probe_budget < 2 || self.search_budget == 0 || self.escape_count == 0 {
                    return bad("probe_budget >= 2, search_budget >= 1, escape_count >= 1");
                }
                if !(self.angle_tol > 0.0) {
                    return bad("angle_tol must be positive");
                }
            }
            ExperimentKind::FluenceStudy if self.polarizability == Polarizability::Off => {
                return bad("the fluence study compares polarizability ratios; set polarizability = on");
            }
            _ => {}
        }
        self.ascent(0).validate().map_err(|e| LandscapeError::Config(e.to_string()))
    }

    /// Ascent settings for one run.
    pub fn ascent(&self, rng_seed: u64) -> AscentConfig {
        AscentConfig {
            step_size: self.step_size,
            min_step_size: self.min_step_size,
            max_step_size: self.max_step_size,
            max_tries: self.max_tries,
            success_threshold: self.success_threshold,
            max_total_iterations: self.max_evaluations,
            stall_window: self.stall_window,
            stall_tolerance: self.stall_tolerance,
            initial_field_range: (-self.initial_amplitude, self.initial_amplitude),
            rng_seed,
            segments: self.segments,
            total_time: self.horizon,
            ..AscentConfig::default()
        }
    }

    /// Parses TOML: top-level keys apply to every experiment, a table named
    /// after the experiment overrides them. Unset keys keep [`Self::defaults`].
    pub fn from_toml_str(kind: ExperimentKind, text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| LandscapeError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::defaults(kind))
            .map_err(|e| LandscapeError::Config(e.to_string()))?;
        for (key, value) in &doc {
            if value.is_table() {
                let is_experiment = ExperimentKind::ALL.iter().any(|k| k.name() == key);
                if !is_experiment {
                    return Err(LandscapeError::Config(format!("unknown section [{key}]")));
                }
                continue;
            }
            merged.insert(key.clone(), value.clone());
        }
        if let Some(section) = doc.get(kind.name()).and_then(|v| v.as_table()) {
            for (key, value) in section {
                merged.insert(key.clone(), value.clone());
            }
        }
        if merged.get("experiment").and_then(|v| v.as_str()) != Some(kind.name()) {
            return Err(LandscapeError::Config(format!(
                "config names experiment {:?} but {} was requested",
                merged.get("experiment"),
                kind.name()
            )));
        }
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| LandscapeError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LandscapeError::Config(e.to_string()))
    }

    fn model_seed(&self, model_id: u64) -> u64 {
        // zero-field starts reuse the generic census models
        let family = match self.experiment {
            ExperimentKind::ZeroFieldStart => ExperimentKind::TrapCensusGeneric,
            kind => kind,
        };
        derive_seed(self.seed, &[family.tag(), model_id])
    }

    fn run_seed(&self, model_id: u64, run_id: u64) -> u64 {
        derive_seed(self.seed, &[self.experiment.tag(), model_id, run_id, 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => f.write_str(&format_float(*v)),
            Cell::Text(s) => f.write_str(s),
            Cell::Empty => Ok(()),
        }
    }
}

impl Cell {
    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }

    fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn parse(text: &str) -> Cell {
        if text.is_empty() {
            Cell::Empty
        } else if let Ok(v) = text.parse::<i64>() {
            Cell::Int(v)
        } else if let Ok(v) = text.parse::<f64>() {
            Cell::Float(v)
        } else {
            Cell::Text(text.to_string())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub model_id: u64,
    pub run_id: u64,
    pub success: bool,
    pub final_fidelity: f64,
    pub iterations: u64,
    pub fluence_final: f64,
    pub extra: Vec<Cell>,
}

pub const COMMON_COLUMNS: [&str; 6] = [
    "model_id",
    "run_id",
    "success",
    "final_fidelity",
    "iterations",
    "fluence_final",
];

pub type Summary = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub experiment: ExperimentKind,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl ResultsTable {
    fn new(experiment: ExperimentKind, mut rows: Vec<Row>) -> Self {
        // stable, so per-iteration rows keep their order
        rows.sort_by_key(|r| (r.model_id, r.run_id));
        let summary = summarize(experiment, &rows);
        Self {
            experiment,
            rows,
            summary,
        }
    }

    pub fn header(&self) -> Vec<String> {
        COMMON_COLUMNS
            .iter()
            .chain(self.experiment.extra_columns())
            .map(|s| s.to_string())
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.experiment.extra_columns().iter().position(|c| *c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let out_err = |e: csv::Error| LandscapeError::Output {
            path: PathBuf::from("rows.csv"),
            message: e.to_string(),
        };
        w.write_record(self.header()).map_err(out_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.model_id.to_string(),
                r.run_id.to_string(),
                r.success.to_string(),
                format_float(r.final_fidelity),
                r.iterations.to_string(),
                format_float(r.fluence_final),
            ];
            rec.extend(r.extra.iter().map(|c| c.to_string()));
            w.write_record(&rec).map_err(out_err)?;
        }
        let bytes = w.into_inner().map_err(|e| LandscapeError::Output {
            path: PathBuf::from("rows.csv"),
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses `rows.csv` content written by [`Self::to_csv`].
    pub fn rows_from_csv(experiment: ExperimentKind, text: &str) -> Result<Vec<Row>> {
        let bad = |m: String| LandscapeError::Output {
            path: PathBuf::from("rows.csv"),
            message: m,
        };
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let expected: Vec<&str> = COMMON_COLUMNS.iter().chain(experiment.extra_columns()).copied().collect();
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> { field(i).parse().map_err(|_| bad(format!("bad number {:?}", field(i)))) };
            let int = |i: usize| -> Result<u64> { field(i).parse().map_err(|_| bad(format!("bad integer {:?}", field(i)))) };
            rows.push(Row {
                model_id: int(0)?,
                run_id: int(1)?,
                success: field(2) == "true",
                final_fidelity: num(3)?,
                iterations: int(4)?,
                fluence_final: num(5)?,
                extra: (6..expected.len()).map(|i| Cell::parse(field(i))).collect(),
            });
        }
        Ok(rows)
    }

    /// The summary tagged with the experiment name, as written to `summary.json`.
    pub fn summary_json(&self) -> Value {
        let mut summary = serde_json::Map::new();
        summary.insert("experiment".into(), json!(self.experiment.name()));
        for (k, v) in &self.summary {
            summary.insert(k.clone(), v.clone());
        }
        Value::Object(summary)
    }

    /// Writes `rows.csv`, `summary.json` and `config.json` into `dir`.
    pub fn write(&self, config: &ExperimentConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| LandscapeError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let write = |name: &str, content: String| {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|source| LandscapeError::Io { path, source })
        };
        write("rows.csv", self.to_csv()?)?;
        write("summary.json", pretty(&self.summary_json())? + "\n")?;
        let config_json = serde_json::to_value(config).map_err(|e| LandscapeError::Output {
            path: dir.join("config.json"),
            message: e.to_string(),
        })?;
        write("config.json", pretty(&config_json)? + "\n")?;
        Ok(())
    }
}

fn pretty(v: &Value) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| LandscapeError::Output {
        path: PathBuf::from("summary.json"),
        message: e.to_string(),
    })
}

fn extra_f64(kind: ExperimentKind, row: &Row, name: &str) -> Option<f64> {
    let i = kind.extra_columns().iter().position(|c| *c == name)?;
    row.extra.get(i)?.as_f64()
}

fn extra_text<'a>(kind: ExperimentKind, row: &'a Row, name: &str) -> Option<&'a str> {
    let i = kind.extra_columns().iter().position(|c| *c == name)?;
    row.extra.get(i)?.as_text()
}

fn fraction(num: usize, den: usize) -> Value {
    if den == 0 {
        Value::Null
    } else {
        json!(num as f64 / den as f64)
    }
}

fn median(values: &mut [f64]) -> Value {
    if values.is_empty() {
        return Value::Null;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        json!(values[m])
    } else {
        json!(0.5 * (values[m - 1] + values[m]))
    }
}

/// Aggregates recomputed purely from rows; the runners embed exactly this.
pub fn summarize(kind: ExperimentKind, rows: &[Row]) -> Summary {
    let mut s = Summary::new();
    match kind {
        ExperimentKind::TrapCensusHeisenberg | ExperimentKind::TrapCensusGeneric | ExperimentKind::ZeroFieldStart => {
            let mut per_model: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
            for r in rows {
                let e = per_model.entry(r.model_id).or_default();
                e.0 += 1;
                e.1 += usize::from(r.success);
            }
            let all_converged = per_model.values().filter(|(n, ok)| n == ok).count();
            let imperfect: Vec<_> = per_model.values().filter(|(n, ok)| n != ok).collect();
            let imperfect_runs: usize = imperfect.iter().map(|(n, _)| n).sum();
            let imperfect_failed: usize = imperfect.iter().map(|(n, ok)| n - ok).sum();
            let successes = rows.iter().filter(|r| r.success).count();
            s.insert("models".into(), json!(per_model.len()));
            s.insert("runs".into(), json!(rows.len()));
            s.insert("successes".into(), json!(successes));
            s.insert("convergence_fraction".into(), fraction(successes, rows.len()));
            s.insert("fraction_all_converged".into(), fraction(all_converged, per_model.len()));
            s.insert("imperfect_models".into(), json!(imperfect.len()));
            s.insert(
                "failed_initial_fraction_among_imperfect".into(),
                fraction(imperfect_failed, imperfect_runs),
            );
        }
        ExperimentKind::FluenceStudy => {
            // group rows of each run: first row is the initial field, last the final one
            let mut runs: BTreeMap<(u64, u64), (f64, f64, f64, f64)> = BTreeMap::new();
            for r in rows {
                let ratio = extra_f64(kind, r, "norm_ratio").unwrap_or(f64::NAN);
                let scale = extra_f64(kind, r, "initial_scale").unwrap_or(f64::NAN);
                let norm = extra_f64(kind, r, "field_norm").unwrap_or(f64::NAN);
                runs.entry((r.model_id, r.run_id))
                    .and_modify(|e| e.3 = norm)
                    .or_insert((ratio, scale, norm, norm));
            }
            let mut cases = Vec::new();
            for &ratio in &FLUENCE_RATIOS {
                let in_case: Vec<_> = runs.iter().filter(|(_, v)| v.0 == ratio).collect();
                let unit: Vec<_> = in_case.iter().filter(|(_, v)| v.1 == 1.0).collect();
                let bounded = unit.iter().filter(|(_, v)| v.3 <= 3.0 * v.2).count();
                // runs 2j and 2j+1 share a model and differ only in the initial scale
                let mut pairs = 0;
                let mut close = 0;
                for ((m, r), v) in &in_case {
                    if r % 2 == 0 {
                        if let Some(w) = runs.get(&(*m, r + 1)) {
                            pairs += 1;
                            let (a, b) = (v.3.max(1e-300), w.3.max(1e-300));
                            if a.max(b) <= 3.0 * a.min(b) {
                                close += 1;
                            }
                        }
                    }
                }
                let models: std::collections::BTreeSet<u64> = in_case.iter().map(|((m, _), _)| *m).collect();
                cases.push(json!({
                    "norm_ratio": ratio,
                    "models": models.len(),
                    "runs": in_case.len(),
                    "bounded_growth_fraction": fraction(bounded, unit.len()),
                    "initial_scale_insensitive_fraction": fraction(close, pairs),
                }));
            }
            s.insert("cases".into(), Value::Array(cases));
            s.insert("rows".into(), json!(rows.len()));
        }
        ExperimentKind::SingularCensus => {
            let mut classes = serde_json::Map::new();
            let class_of = |r: &Row| extra_text(kind, r, "class").unwrap_or("").to_string();
            let names: std::collections::BTreeSet<String> = rows.iter().map(class_of).collect();
            let mut stats = |label: String, subset: Vec<&Row>| {
                let regular: Vec<&Row> =
                    subset.iter().copied().filter(|r| extra_f64(kind, r, "blow_up") == Some(0.0)).collect();
                let block = |set: &[&Row]| {
                    let traps = set
                        .iter()
                        .filter(|r| extra_text(kind, r, "classification") == Some("candidate_trap"))
                        .count();
                    let saddles = set.iter().filter(|r| r.success).count();
                    let mut trials: Vec<f64> = set
                        .iter()
                        .filter(|r| extra_text(kind, r, "classification") != Some("regular_maximum"))
                        .map(|r| r.iterations as f64)
                        .collect();
                    let max = trials.iter().cloned().fold(f64::NAN, f64::max);
                    let mean = if trials.is_empty() {
                        Value::Null
                    } else {
                        json!(trials.iter().sum::<f64>() / trials.len() as f64)
                    };
                    json!({
                        "controls": set.len(),
                        "saddles": saddles,
                        "candidate_traps": traps,
                        "median_trials": median(&mut trials),
                        "mean_trials": mean,
                        "max_trials": if max.is_nan() { Value::Null } else { json!(max) },
                    })
                };
                let mut refined: Vec<f64> =
                    regular.iter().filter_map(|r| extra_f64(kind, r, "refined_defect")).collect();
                let worst_refined = refined.iter().cloned().fold(f64::NAN, f64::max);
                let entry = json!({
                    "tuples": subset.len(),
                    "blow_ups": subset.len() - regular.len(),
                    "all": block(&subset),
                    "regular": block(&regular),
                    "max_refined_defect_regular": if worst_refined.is_nan() { Value::Null } else { json!(worst_refined) },
                    "median_refined_defect_regular": median(&mut refined),
                });
                classes.insert(label, entry);
            };
            for name in &names {
                stats(name.clone(), rows.iter().filter(|r| &class_of(r) == name).collect());
            }
            stats("total".into(), rows.iter().collect());
            s.insert("classes".into(), Value::Object(classes));
        }
        ExperimentKind::SingularCriticalSearch => {
            let found: Vec<&Row> = rows.iter().filter(|r| r.success).collect();
            let worst_angle = found
                .iter()
                .filter_map(|r| extra_f64(kind, r, "angle"))
                .fold(f64::NAN, f64::max);
            let escapes: Vec<f64> = found.iter().filter_map(|r| extra_f64(kind, r, "escape_fraction")).collect();
            let min_escape = escapes.iter().cloned().fold(f64::NAN, f64::min);
            s.insert("searches".into(), json!(rows.len()));
            s.insert("successes".into(), json!(found.len()));
            s.insert("success_fraction".into(), fraction(found.len(), rows.len()));
            s.insert(
                "max_success_angle".into(),
                if worst_angle.is_nan() { Value::Null } else { json!(worst_angle) },
            );
            s.insert(
                "min_escape_fraction".into(),
                if min_escape.is_nan() { Value::Null } else { json!(min_escape) },
            );
        }
        ExperimentKind::SystemEStudy => {
            for (label, flag) in [("with_h2", 1.0), ("without_h2", 0.0)] {
                let arm: Vec<&Row> = rows.iter().filter(|r| extra_f64(kind, r, "with_h2") == Some(flag)).collect();
                let converged = arm.iter().filter(|r| r.success).count();
                let min_f = arm.iter().map(|r| r.final_fidelity).fold(f64::NAN, f64::min);
                s.insert(
                    label.into(),
                    json!({
                        "runs": arm.len(),
                        "converged": converged,
                        "stalled_fraction": fraction(arm.len() - converged, arm.len()),
                        "min_final_fidelity": if min_f.is_nan() { Value::Null } else { json!(min_f) },
                    }),
                );
            }
        }
    }
    s
}

fn parallel<T: Send>(threads: usize, tasks: Vec<(u64, u64)>, f: impl Fn(u64, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LandscapeError::Config(format!("thread pool: {e}")))?;
    pool.install(|| tasks.into_par_iter().map(|(m, r)| f(m, r)).collect())
}

fn grid(models: usize, runs: usize) -> Vec<(u64, u64)> {
    (0..models as u64)
        .flat_map(|m| (0..runs as u64).map(move |r| (m, r)))
        .collect()
}

fn heisenberg_case(config: &ExperimentConfig, model_id: u64) -> Result<(HamiltonianModel, GoalGate)> {
    let seed = config.model_seed(model_id);
    let mut rng = seeded_rng(seed);
    let params = HeisenbergParams::random(&mut rng);
    let goal = GoalGate::new(random_unitary_goal_with(4, &mut rng)?)?;
    let mut model = heisenberg_model(&params)?;
    if config.polarizability == Polarizability::On {
        let norm = config.norm_ratio * model.control().norm();
        model = with_polarizability(&model, derive_seed(seed, &[2]), norm)?;
    }
    Ok((model, goal))
}

fn generic_case(config: &ExperimentConfig, model_id: u64, ratio: Option<f64>) -> Result<(HamiltonianModel, GoalGate)> {
    // ‖iH0‖ = ‖iH1‖ = 1, so the ratio is the norm of iH2
    random_tuple(config.dimension, config.model_seed(model_id), 1.0, 1.0, ratio)
}

fn census_row(model_id: u64, run_id: u64, first: &RunRecord, retry: Option<&RunRecord>, success: bool) -> Row {
    let last = retry.unwrap_or(first);
    Row {
        model_id,
        run_id,
        success,
        final_fidelity: last.final_fidelity,
        iterations: (first.iterations + retry.map_or(0, |r| r.iterations)) as u64,
        fluence_final: last.final_field.norm(),
        extra: vec![
            Cell::Int((first.evaluations + retry.map_or(0, |r| r.evaluations)) as i64),
            Cell::Int(i64::from(retry.is_some())),
            Cell::Float(first.final_fidelity),
            Cell::Float(first.fidelity_trace[0]),
        ],
    }
}

/// Heisenberg-family trap census; success means the start was not trapped
/// (see [`trap_verdict`]).
pub fn run_trap_census(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let rows = parallel(config.threads, grid(config.n_models, config.n_runs_per_model), |m, r| {
        let (model, goal) = heisenberg_case(config, m)?;
        let v = trap_verdict(&model, &goal, &config.ascent(config.run_seed(m, r)), None)?;
        Ok(census_row(m, r, &v.first, v.retry.as_ref(), !v.trapped))
    })?;
    Ok(ResultsTable::new(config.experiment, rows))
}

/// Random su(n) tuples; with `initial_amplitude = 0` every run starts from `E ≡ 0`.
pub fn run_generic_census(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let ratio = (config.polarizability == Polarizability::On).then_some(config.norm_ratio);
    let rows = parallel(config.threads, grid(config.n_models, config.n_runs_per_model), |m, r| {
        let (model, goal) = generic_case(config, m, ratio)?;
        let v = trap_verdict(&model, &goal, &config.ascent(config.run_seed(m, r)), None)?;
        Ok(census_row(m, r, &v.first, v.retry.as_ref(), !v.trapped))
    })?;
    Ok(ResultsTable::new(config.experiment, rows))
}

/// `‖E‖` after every accepted move, for each ratio in [`FLUENCE_RATIOS`] and
/// both initial scales in [`FLUENCE_SCALES`]. `model_id` enumerates
/// `(ratio, model)`; run `2j + s` is repetition `j` with scale index `s`.
pub fn run_fluence_study(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let models = config.n_models * FLUENCE_RATIOS.len();
    let runs = config.n_runs_per_model * FLUENCE_SCALES.len();
    let per_run = parallel(config.threads, grid(models, runs), |m, r| {
        let ratio = FLUENCE_RATIOS[m as usize / config.n_models];
        let scale = FLUENCE_SCALES[r as usize % FLUENCE_SCALES.len()];
        let (model, goal) = generic_case(config, m, Some(ratio))?;
        // both scales of a repetition share the direction of the initial field
        let mut rng = seeded_rng(config.run_seed(m, r / 2));
        let amps = (0..config.segments).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let start = ControlField::new(amps, config.horizon)?;
        let run = randomized_ascent(&model, &goal, &config.ascent(config.run_seed(m, r)), Some(start))?;
        let fluence_final = run.final_field.norm();
        Ok(run
            .fluence_trace
            .iter()
            .zip(&run.fidelity_trace)
            .enumerate()
            .map(|(i, (norm, fid))| Row {
                model_id: m,
                run_id: r,
                success: run.success,
                final_fidelity: run.final_fidelity,
                iterations: run.iterations as u64,
                fluence_final,
                extra: vec![
                    Cell::Float(ratio),
                    Cell::Float(scale),
                    Cell::Int(i as i64),
                    Cell::Float(*norm),
                    Cell::Float(*fid),
                ],
            })
            .collect::<Vec<_>>())
    })?;
    Ok(ResultsTable::new(config.experiment, per_run.into_iter().flatten().collect()))
}

/// Singular controls for generic tuples (`model_id < n_models`) and for
/// Heisenberg tuples with polarizability (`model_id ≥ n_models`), each probed
/// for opposite-sign fidelity changes. Blow-up controls are probed too and
/// flagged so they can be separated in the summary.
pub fn run_singular_census(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let n = config.n_models as u64;
    let rows = parallel(config.threads, grid(2 * config.n_models, 1), |m, _| {
        let heisenberg = m >= n;
        let (model, goal, class) = if heisenberg {
            let (model, goal) = heisenberg_case(config, m)?;
            (model, goal, "heisenberg")
        } else {
            let ratio = config.norm_ratio;
            let (model, goal) = generic_case(config, m, Some(ratio))?;
            (model, goal, "generic")
        };
        let seed = config.model_seed(m);
        let probe = SingularProbe::random(model.dim(), &mut seeded_rng(derive_seed(seed, &[3])))?;
        let sol = integrate_singular(&model, &probe, config.singular_horizon, config.singular_steps)?;
        let refined = verify_singularity(&model, &sol, &probe)?;
        let verdict = saddle_probe(&model, &goal, &sol.control, config.probe_budget, derive_seed(seed, &[4]))?;
        let fid = field_fidelity(&model, &sol.control, &goal)?;
        let label = match verdict.classification {
            SaddleClass::Saddle => "saddle",
            SaddleClass::CandidateTrap => "candidate_trap",
            SaddleClass::RegularMaximum => "regular_maximum",
        };
        Ok(Row {
            model_id: m,
            run_id: 0,
            success: verdict.classification == SaddleClass::Saddle,
            final_fidelity: fid,
            iterations: verdict.trials_used as u64,
            fluence_final: sol.control.norm(),
            extra: vec![
                Cell::Text(class.into()),
                Cell::Int(i64::from(sol.has_blow_up())),
                Cell::Int(sol.blow_up_times.len() as i64),
                Cell::Float(sol.defect),
                Cell::Float(refined),
                Cell::Float(sol.denominator_floor),
                Cell::Text(label.into()),
            ],
        })
    })?;
    Ok(ResultsTable::new(config.experiment, rows))
}

/// Singular-critical search per generic tuple, followed by a neighborhood
/// escape test around every control found.
pub fn run_singular_critical_search(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let search = CriticalSearchConfig {
        total_time: config.singular_horizon,
        steps: config.singular_steps,
        angle_tol: config.angle_tol,
        max_evaluations: config.search_budget,
        ..CriticalSearchConfig::default()
    };
    let rows = parallel(config.threads, grid(config.n_models, 1), |m, _| {
        let (model, goal) = generic_case(config, m, Some(config.norm_ratio))?;
        let seed = config.model_seed(m);
        let out = seek_singular_critical(&model, &goal, derive_seed(seed, &[5]), &search)?;
        let (fid, fluence, escape) = match (&out.solution, out.success) {
            (Some(sol), true) => {
                let ascent = AscentConfig {
                    rng_seed: 0,
                    ..config.ascent(0)
                };
                let frac =
                    neighborhood_escape(&model, &goal, &sol.control, config.escape_count, derive_seed(seed, &[6]), &ascent)?;
                (field_fidelity(&model, &sol.control, &goal)?, sol.control.norm(), Cell::Float(frac))
            }
            (Some(sol), false) => (field_fidelity(&model, &sol.control, &goal)?, sol.control.norm(), Cell::Empty),
            (None, _) => (0.0, 0.0, Cell::Empty),
        };
        Ok(Row {
            model_id: m,
            run_id: 0,
            success: out.success,
            final_fidelity: fid,
            iterations: out.evaluations as u64,
            fluence_final: fluence,
            extra: vec![Cell::Float(out.angle), escape],
        })
    })?;
    Ok(ResultsTable::new(config.experiment, rows))
}

/// System E from near-zero initial fields, with and without a random
/// polarizability. `model_id < n_models` are the dipole runs, the rest carry
/// the H2 seed `model_id − n_models`. The `i`-th start (counting over models
/// and runs) has half-width `initial_amplitude / (i + 1)`, so later starts
/// approach the zero field.
pub fn run_system_e_study(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let n = config.n_models as u64;
    let runs = config.n_runs_per_model as u64;
    let rows = parallel(config.threads, grid(2 * config.n_models, config.n_runs_per_model), |m, r| {
        let with_h2 = m >= n;
        let index = m % n;
        let h2_seed = derive_seed(config.seed, &[config.experiment.tag(), index, 7]);
        let (model, goal, total_time) = system_e(None)?;
        let model = if with_h2 {
            with_polarizability(&model, h2_seed, config.norm_ratio * model.control().norm())?
        } else {
            model
        };
        let amplitude = config.initial_amplitude / (index * runs + r + 1) as f64;
        let mut rng = seeded_rng(derive_seed(config.seed, &[config.experiment.tag(), index, r, 8]));
        let amps = (0..config.segments)
            .map(|_| amplitude * rng.gen_range(-1.0..1.0))
            .collect();
        let start = ControlField::new(amps, total_time)?;
        let initial_norm = start.norm();
        let run = randomized_ascent(&model, &goal, &config.ascent(config.run_seed(m, r)), Some(start))?;
        Ok(Row {
            model_id: m,
            run_id: r,
            success: run.success,
            final_fidelity: run.final_fidelity,
            iterations: run.iterations as u64,
            fluence_final: run.final_field.norm(),
            extra: vec![
                Cell::Int(i64::from(with_h2)),
                if with_h2 { Cell::Text(h2_seed.to_string()) } else { Cell::Empty },
                Cell::Float(initial_norm),
                Cell::Int(run.evaluations as i64),
            ],
        })
    })?;
    Ok(ResultsTable::new(config.experiment, rows))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    match config.experiment {
        ExperimentKind::TrapCensusHeisenberg => run_trap_census(config),
        ExperimentKind::TrapCensusGeneric | ExperimentKind::ZeroFieldStart => run_generic_census(config),
        ExperimentKind::FluenceStudy => run_fluence_study(config),
        ExperimentKind::SingularCensus => run_singular_census(config),
        ExperimentKind::SingularCriticalSearch => run_singular_critical_search(config),
        ExperimentKind::SystemEStudy => run_system_e_study(config),
    }
}
