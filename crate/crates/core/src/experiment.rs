//! Config-driven experiments and their report files.
//!
//! A config is a JSON object; unknown fields are rejected. Reports are a
//! function of the config alone (including `master_seed`), so identical
//! configs give byte-identical `report.json` and `report.csv`.

use crate::channel::ChannelParams;
use crate::error::Error;
use crate::exec::Execution;
use crate::extractor::Backend;
use crate::hexseed::format_seed;
use crate::oracle::{capacity_bounds, check_oracle_scale, exact_analysis, seed_family, ExactOptions, Lemma3Params, SeedAnalysis};
use crate::protocol::{plan, run_protocol, sample_inputs, ProtocolConfig, Transcript};
use crate::rng::{derive_seed, label, RunStreams};
use crate::sim::run_trials;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ORACLE_SEEDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    Sweep,
    OracleLeakage,
    Lemma3,
    AbortCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub eps1: Vec<f64>,
    #[serde(default)]
    pub eps2: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub trials: u64,
    #[serde(with = "crate::hexseed")]
    pub master_seed: u64,
    /// Defaults to `random-table` in oracle mode and `universal-hash` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<Backend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Number of published seed triples averaged in oracle mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma3: Option<Lemma3Params>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("scale limit: {0}")]
    Scale(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl ExperimentError {
    /// 2 for config errors, 3 for scale limits, 4 for i/o, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Scale(_) => 3,
            ExperimentError::Run(_) => 1,
            ExperimentError::Io(_) => 4,
        }
    }
}

impl From<Error> for ExperimentError {
    fn from(e: Error) -> Self {
        match e {
            Error::OracleScale(s) | Error::Backend(s) => ExperimentError::Scale(s),
            Error::Param(s) | Error::Channel(s) => ExperimentError::Config(s),
            other => ExperimentError::Run(other.to_string()),
        }
    }
}

type XResult<T> = std::result::Result<T, ExperimentError>;

fn invalid<T>(msg: impl Into<String>) -> XResult<T> {
    Err(ExperimentError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> XResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backend(&self) -> Backend {
        self.backend.unwrap_or(match self.mode {
            Mode::OracleLeakage => Backend::RandomTable,
            _ => Backend::UniversalHash,
        })
    }

    fn delta(&self) -> f64 {
        self.delta.expect("validated")
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> XResult<()> {
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.mode == Mode::Lemma3 {
            let Some(p) = &self.lemma3 else {
                return invalid("lemma3 mode needs a \"lemma3\" block");
            };
            if p.n_bits > crate::oracle::MAX_LEMMA3_BITS {
                return Err(ExperimentError::Scale(format!("lemma3 n_bits {} too large", p.n_bits)));
            }
            return Ok(());
        }
        if self.lemma3.is_some() {
            return invalid("\"lemma3\" block is only valid in lemma3 mode");
        }
        if self.eps1.is_empty() || self.eps2.is_empty() || self.n.is_empty() {
            return invalid("eps1, eps2 and n must be nonempty");
        }
        let Some(delta) = self.delta else {
            return invalid("delta is required");
        };
        if !(delta > 0.0 && delta < 1.0) {
            return invalid(format!("delta = {delta} outside (0, 1)"));
        }
        for &e in self.eps1.iter().chain(&self.eps2) {
            ChannelParams::new(e, 0.0).map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if self.n.contains(&0) {
            return invalid("n must be positive");
        }
        if self.mode == Mode::Single && (self.eps1.len(), self.eps2.len(), self.n.len()) != (1, 1, 1) {
            return invalid("single mode takes exactly one eps1, eps2 and n");
        }
        if self.oracle_seeds == Some(0) {
            return invalid("oracle_seeds must be positive");
        }
        for cell in self.cells() {
            let Ok(pc) = plan(cell.n, delta, cell.channel) else { continue };
            let pc = pc.with_backend(self.backend());
            if self.mode == Mode::OracleLeakage {
                check_oracle_scale(&pc)?;
            } else {
                pc.check_backend()?;
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &e1 in &self.eps1 {
            for &e2 in &self.eps2 {
                for &n in &self.n {
                    let channel = ChannelParams::new(e1, e2).expect("validated");
                    out.push(Cell { eps1: e1, eps2: e2, n, channel, seed: derive_seed(self.master_seed, label::CELL, out.len() as u64) });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    eps1: f64,
    eps2: f64,
    n: usize,
    channel: ChannelParams,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Infeasible,
    InvariantFailure,
}

/// One report row; also the CSV record. Empty CSV cells mean "not
/// applicable in this mode".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub r: Option<f64>,
    pub m: Option<usize>,
    pub trials: u64,
    pub aborts: Option<u64>,
    pub abort_ci_lo: Option<f64>,
    pub abort_ci_hi: Option<f64>,
    pub decode_failures: u64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub realized_rate: Option<f64>,
    pub abort_p_hat: Option<f64>,
    pub invariant_failures: u64,
    pub mi_u_va: Option<f64>,
    pub mi_kbar_vb: Option<f64>,
    pub mi_all_ve: Option<f64>,
    pub pr_error: Option<f64>,
    pub d_bar: Option<f64>,
    pub d_joint: Option<f64>,
    pub d_joint_typical: Option<f64>,
    pub p_typical: Option<f64>,
    pub p_abort_exact: Option<f64>,
    pub oracle_seeds: Option<usize>,
    pub lemma3_rate: Option<f64>,
    pub lemma3_violations: Option<u64>,
    pub lemma3_index_sets: Option<usize>,
    pub lemma3_exhaustive: Option<bool>,
    pub seed: String,
    pub status: Status,
}

/// Column names of `report.csv`, in order.
pub const CSV_COLUMNS: [&str; 32] = [
    "eps1", "eps2", "n", "delta", "r", "m", "trials", "aborts", "abort_ci_lo", "abort_ci_hi", "decode_failures",
    "lower_bound", "upper_bound", "realized_rate", "abort_p_hat", "invariant_failures", "mi_u_va", "mi_kbar_vb",
    "mi_all_ve", "pr_error", "d_bar", "d_joint", "d_joint_typical", "p_typical", "p_abort_exact", "oracle_seeds",
    "lemma3_rate", "lemma3_violations", "lemma3_index_sets", "lemma3_exhaustive", "seed", "status",
];

impl Row {
    fn empty(trials: u64, seed: u64) -> Self {
        Row {
            eps1: None,
            eps2: None,
            n: None,
            delta: None,
            r: None,
            m: None,
            trials,
            aborts: None,
            abort_ci_lo: None,
            abort_ci_hi: None,
            decode_failures: 0,
            lower_bound: None,
            upper_bound: None,
            realized_rate: None,
            abort_p_hat: None,
            invariant_failures: 0,
            mi_u_va: None,
            mi_kbar_vb: None,
            mi_all_ve: None,
            pr_error: None,
            d_bar: None,
            d_joint: None,
            d_joint_typical: None,
            p_typical: None,
            p_abort_exact: None,
            oracle_seeds: None,
            lemma3_rate: None,
            lemma3_violations: None,
            lemma3_index_sets: None,
            lemma3_exhaustive: None,
            seed: format_seed(seed),
            status: Status::Ok,
        }
    }

    fn for_cell(cell: &Cell, delta: f64, trials: u64) -> Self {
        let bounds = capacity_bounds(&cell.channel);
        Row {
            eps1: Some(cell.eps1),
            eps2: Some(cell.eps2),
            n: Some(cell.n),
            delta: Some(delta),
            lower_bound: Some(bounds.lower),
            upper_bound: Some(bounds.upper),
            ..Row::empty(trials, cell.seed)
        }
    }
}

/// Per-seed oracle values of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDetail {
    pub row: usize,
    pub per_seed: Vec<SeedAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptSample {
    pub row: usize,
    pub trial: u64,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle_details: Vec<OracleDetail>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_transcript: Option<TranscriptSample>,
}

impl ExperimentReport {
    pub fn invariant_failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::InvariantFailure).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> XResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| ExperimentError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `report.json` and `report.csv` into `dir`, each through a
    /// temporary file renamed into place.
    pub fn write(&self, dir: &Path) -> XResult<()> {
        let csv = self.to_csv()?;
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
        write_atomic(dir, "report.json", self.to_json().as_bytes())?;
        write_atomic(dir, "report.csv", csv.as_bytes())
    }
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> XResult<()> {
    let io = |e: std::io::Error| ExperimentError::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

/// Runs the experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> XResult<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        rows: Vec::new(),
        oracle_details: Vec::new(),
        sample_transcript: None,
    };
    if cfg.mode == Mode::Lemma3 {
        let params = cfg.lemma3.expect("validated");
        let r = crate::oracle::lemma3_violation_rate(&params, cfg.trials, cfg.master_seed, exec)?;
        report.rows.push(Row {
            lemma3_rate: Some(r.rate),
            lemma3_violations: Some(r.violations),
            lemma3_index_sets: Some(r.index_sets),
            lemma3_exhaustive: Some(r.exhaustive),
            ..Row::empty(cfg.trials, cfg.master_seed)
        });
        return Ok(report);
    }
    let delta = cfg.delta();
    for cell in cfg.cells() {
        let mut row = Row::for_cell(&cell, delta, cfg.trials);
        let pc = match plan(cell.n, delta, cell.channel) {
            Ok(pc) => pc.with_backend(cfg.backend()).with_master_seed(cell.seed),
            Err(Error::InfeasibleParams(_)) => {
                row.status = Status::Infeasible;
                report.rows.push(row);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        row.r = Some(pc.rate);
        row.m = Some(pc.m);
        row.realized_rate = Some(pc.realized_rate());
        if cfg.mode == Mode::OracleLeakage {
            let seeds = seed_family(cell.seed, cfg.oracle_seeds.unwrap_or(DEFAULT_ORACLE_SEEDS));
            let analysis = exact_analysis(&pc, &seeds, ExactOptions::default(), exec)?;
            let (leak, def) = (analysis.leakage(), analysis.deficits());
            row.trials = seeds.len() as u64;
            row.mi_u_va = Some(leak.mi_u_va);
            row.mi_kbar_vb = Some(leak.mi_kbar_vb);
            row.mi_all_ve = Some(leak.mi_all_ve);
            row.pr_error = Some(leak.pr_error);
            row.d_bar = Some(def.d_bar);
            row.d_joint = Some(def.d_joint);
            row.d_joint_typical = def.d_joint_typical;
            row.p_typical = Some(def.p_typical);
            row.p_abort_exact = Some(analysis.p_abort);
            row.oracle_seeds = Some(seeds.len());
            if leak.pr_error > 0.0 || leak.mi_u_va > 1e-6 {
                row.status = Status::InvariantFailure;
            }
            report.oracle_details.push(OracleDetail { row: report.rows.len(), per_seed: analysis.per_seed });
        } else {
            let stats = run_trials(&pc, cfg.trials, cell.seed, exec)?;
            let est = stats.abort_estimate();
            row.aborts = Some(stats.aborts);
            row.abort_p_hat = Some(est.p_hat);
            row.abort_ci_lo = Some(est.ci_lo);
            row.abort_ci_hi = Some(est.ci_hi);
            row.decode_failures = stats.decode_failures;
            row.invariant_failures = stats.invariant_failures();
            if stats.invariant_failures() > 0 {
                row.status = Status::InvariantFailure;
            }
            if report.sample_transcript.is_none() {
                report.sample_transcript = sample_transcript(&pc, cell.seed, cfg.trials)?
                    .map(|(trial, transcript)| TranscriptSample { row: report.rows.len(), trial, transcript });
            }
        }
        report.rows.push(row);
    }
    Ok(report)
}

/// Replays trials of a cell until the first one that does not abort.
fn sample_transcript(pc: &ProtocolConfig, master: u64, trials: u64) -> XResult<Option<(u64, Transcript)>> {
    for t in 0..trials {
        let mut streams = RunStreams::for_trial(master, t);
        let (k0, k1, u) = sample_inputs(pc.m, &mut streams.inputs);
        let out = run_protocol(pc, &k0, &k1, u, &mut streams)?;
        if let Some(views) = out.views {
            return Ok(Some((t, (*views.eve.transcript).clone())));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"mode":"sweep","eps1":[0.3,0.5],"eps2":[0.8],"n":[300],"delta":0.02,
                "trials":50,"master_seed":"0x00000000000000ab"}"#,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"mode":"sweep","eps1":[0.5],"eps2":[0.8],"n":[300],"delta":0.02,"trials":5,"master_seed":"0x1","bogus":1}"#,
            r#"{"mode":"sweep","eps1":[],"eps2":[0.8],"n":[300],"delta":0.02,"trials":5,"master_seed":"0x1"}"#,
            r#"{"mode":"sweep","eps1":[0.5],"eps2":[0.8],"n":[300],"delta":0.02,"trials":0,"master_seed":"0x1"}"#,
            r#"{"mode":"single","eps1":[0.5,0.3],"eps2":[0.8],"n":[300],"delta":0.02,"trials":5,"master_seed":"0x1"}"#,
            r#"{"mode":"sweep","eps1":[1.5],"eps2":[0.8],"n":[300],"delta":0.02,"trials":5,"master_seed":"0x1"}"#,
            r#"{"mode":"sweep","eps1":[0.5],"eps2":[0.8],"n":[300],"trials":5,"master_seed":"0x1"}"#,
            r#"{"mode":"lemma3","trials":5,"master_seed":"0x1"}"#,
            r#"{"mode":"sweep","eps1":[0.5],"eps2":[0.8],"n":[300],"delta":0.02,"trials":5,"master_seed":"zz"}"#,
            "not json",
        ];
        for text in bad {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn scale_limits_are_exit_3() {
        let oracle = r#"{"mode":"oracle-leakage","eps1":[0.5],"eps2":[0.8],"n":[64],"delta":0.03,"trials":1,"master_seed":"0x1"}"#;
        assert_eq!(ExperimentConfig::from_json(oracle).unwrap_err().exit_code(), 3);
        let table = r#"{"mode":"single","eps1":[0.5],"eps2":[0.8],"n":[2000],"delta":0.03,"trials":1,"master_seed":"0x1","backend":"random-table"}"#;
        assert_eq!(ExperimentConfig::from_json(table).unwrap_err().exit_code(), 3);
        let l3 = r#"{"mode":"lemma3","trials":1,"master_seed":"0x1","lemma3":{"n_bits":24,"alpha":0.25,"beta":0.25,"delta_l":0.25}}"#;
        assert_eq!(ExperimentConfig::from_json(l3).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn sweep_rows_and_csv() {
        let mut cfg = base();
        cfg.eps1.push(0.01);
        let report = run_experiment(&cfg, Execution::Parallel).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[2].status, Status::Infeasible);
        for row in &report.rows[..2] {
            assert_eq!(row.status, Status::Ok);
            assert_eq!(row.decode_failures, 0);
            let b = capacity_bounds(&ChannelParams::new(row.eps1.unwrap(), row.eps2.unwrap()).unwrap());
            assert_eq!((row.lower_bound, row.upper_bound), (Some(b.lower), Some(b.upper)));
        }
        let csv = report.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(csv.lines().count(), 4);
        assert!(report.sample_transcript.is_some());
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run_experiment(&base(), Execution::Sequential).unwrap();
        let b = run_experiment(&base(), Execution::Parallel).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        let mut other = base();
        other.master_seed ^= 1;
        assert_ne!(run_experiment(&other, Execution::Parallel).unwrap().to_json(), a.to_json());
    }

    #[test]
    fn write_is_complete() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&base(), Execution::Parallel).unwrap();
        report.write(dir.path()).unwrap();
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(json, report.to_json());
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2);
    }
}
