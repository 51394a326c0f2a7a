//! Experiment harness: runs seed sweeps of the simulators, serializes one
//! record per trial as JSON lines or CSV, and hosts the distribution
//! validation suite.

pub mod validation;

use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use plurality_core::config::{make_initial, Configuration, InitMode};
use plurality_core::gossip::GossipSim;
use plurality_core::oracle::ideal_phase;
use plurality_core::population::PopulationSim;
use plurality_core::uniform::run_uniform;
use plurality_core::{trial_rng, ProtocolParams, TrialRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] plurality_core::Error),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("output format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Population,
    Gossip,
    Uniform,
    /// Analysis-level phase oracle iterated as a protocol.
    Ideal,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Population => "population",
            Protocol::Gossip => "gossip",
            Protocol::Uniform => "uniform",
            Protocol::Ideal => "ideal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Jsonl,
    Csv,
}

/// A batch of trials over consecutive seeds.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub params: ProtocolParams,
    pub init: InitMode,
    pub trials: u64,
    pub seed_base: u64,
    /// Where to write rows and summaries; stdout when absent.
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Worker threads for trial execution; 0 means one per core. Output
    /// order is by seed regardless.
    pub workers: usize,
}

impl ExperimentSpec {
    /// Rejects a bad spec before any trial runs; returns the initial
    /// configuration shared by every trial.
    pub fn validate(&self) -> Result<Configuration> {
        self.params.validate()?;
        if self.trials < 1 {
            return Err(HarnessError::InvalidSpec("trials must be >= 1".into()));
        }
        let init = make_initial(self.params.n, self.params.k, &self.init)?;
        Ok(init)
    }
}

/// One output row; field order matches the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub protocol: Protocol,
    pub n: u64,
    pub k: u64,
    pub seed: u64,
    pub converged: bool,
    pub winner: Option<usize>,
    pub phases: u64,
    pub interactions: u64,
    pub rounds: u64,
    pub parallel_time: f64,
    pub winner_significant: bool,
    pub initial_additive_bias: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_final: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho_round: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_adoption_round: Option<u64>,
}

impl TrialRow {
    fn from_record(spec: &ExperimentSpec, seed: u64, record: &TrialRecord) -> Self {
        Self {
            protocol: spec.protocol,
            n: spec.params.n,
            k: spec.params.k,
            seed,
            converged: record.converged,
            winner: record.winner,
            phases: record.phases,
            interactions: record.interactions,
            rounds: record.rounds,
            parallel_time: record.parallel_time,
            winner_significant: record.winner_significant_initially,
            initial_additive_bias: record.initial_additive_bias,
            t_final: record.uniform.map(|d| d.t_final),
            rho_round: record.uniform.and_then(|d| d.rho_round),
            t_adoption_round: record.uniform.and_then(|d| d.t_adoption_round),
        }
    }
}

/// Aggregate statistics over a batch of rows. Rates over converged trials
/// are reported as 0 when nothing converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u64>,
    pub trials: u64,
    pub convergence_rate: f64,
    /// Median of the phase counts over all trials (cutoff value for
    /// non-converged ones).
    pub median_phases: f64,
    /// Fraction of converged trials won by an initially most-supported
    /// opinion.
    pub plurality_win_rate: f64,
    /// Fraction of converged trials whose winner was initially significant.
    pub winner_significant_rate: f64,
}

pub fn median_u64(values: &[u64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
    }
}

pub fn median_f64(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Pure function of the rows plus the initially most-supported opinion set,
/// so emitted summaries can be re-derived and checked.
pub fn summarize(rows: &[TrialRow], plurality_opinions: &[usize]) -> Summary {
    let trials = rows.len() as u64;
    let converged: Vec<&TrialRow> = rows.iter().filter(|r| r.converged).collect();
    let phases: Vec<u64> = rows.iter().map(|r| r.phases).collect();
    let rate = |num: usize| {
        if converged.is_empty() {
            0.0
        } else {
            num as f64 / converged.len() as f64
        }
    };
    Summary {
        n: None,
        trials,
        convergence_rate: converged.len() as f64 / trials as f64,
        median_phases: median_u64(&phases),
        plurality_win_rate: rate(
            converged
                .iter()
                .filter(|r| r.winner.is_some_and(|w| plurality_opinions.contains(&w)))
                .count(),
        ),
        winner_significant_rate: rate(converged.iter().filter(|r| r.winner_significant).count()),
    }
}

fn run_ideal(params: &ProtocolParams, init: &Configuration) -> TrialRecord {
    let mut rng = trial_rng(params.seed);
    let mut config = init.clone();
    let mut phases = 0;
    while !config.is_unanimous() && phases < params.max_phases {
        config = ideal_phase(&config, &mut rng);
        phases += 1;
    }
    let converged = config.is_unanimous();
    let winner = converged.then(|| config.argmax());
    TrialRecord::build(init, params.xi_eff, converged, winner, phases, 0, 0)
}

fn run_trial(spec: &ExperimentSpec, init: &Configuration, seed: u64) -> Result<TrialRow> {
    let params = spec.params.clone().with_seed(seed);
    let record = match spec.protocol {
        Protocol::Population => PopulationSim::new(&params, init)?.run(),
        Protocol::Gossip => GossipSim::new(&params, init)?.run(),
        Protocol::Uniform => run_uniform(&params, init)?.0,
        Protocol::Ideal => run_ideal(&params, init),
    };
    Ok(TrialRow::from_record(spec, seed, &record))
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
}

/// Runs all trials (seeds `seed_base .. seed_base + trials`) and summarizes.
/// Deterministic for a given spec, regardless of worker count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let init = spec.validate()?;
    let seeds: Vec<u64> = (0..spec.trials).map(|i| spec.seed_base + i).collect();
    let run_all = || -> Result<Vec<TrialRow>> {
        seeds
            .par_iter()
            .map(|&seed| run_trial(spec, &init, seed))
            .collect()
    };
    let rows = if spec.workers == 0 {
        run_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| HarnessError::InvalidSpec(format!("worker pool: {e}")))?;
        pool.install(run_all)?
    };
    let summary = summarize(&rows, &init.argmax_set());
    Ok(ExperimentResult { rows, summary })
}

/// A parsed output line: either one trial or the trailing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonLine {
    Summary { summary: Summary },
    Trial(TrialRow),
}

pub fn write_jsonl(out: &mut dyn Write, rows: &[TrialRow], summaries: &[Summary]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *out, row)?;
        out.write_all(b"\n")?;
    }
    for summary in summaries {
        let line = JsonLine::Summary {
            summary: summary.clone(),
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: &mut dyn BufRead) -> Result<(Vec<TrialRow>, Vec<Summary>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonLine>(&line)? {
            JsonLine::Trial(row) => rows.push(row),
            JsonLine::Summary { summary } => summaries.push(summary),
        }
    }
    Ok((rows, summaries))
}

/// Writes rows plus summaries to the spec's output path (or stdout) in the
/// spec's format, surfacing I/O failures with the path attached.
pub fn write_result(
    spec: &ExperimentSpec,
    rows: &[TrialRow],
    summaries: &[Summary],
) -> Result<()> {
    let mut sink: Box<dyn Write> = match &spec.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| {
                HarnessError::Format(format!("cannot create {}: {e}", path.display()))
            })?;
            Box::new(io::BufWriter::new(file))
        }
        None => Box::new(io::stdout().lock()),
    };
    match spec.format {
        OutputFormat::Jsonl => write_jsonl(&mut sink, rows, summaries)?,
        OutputFormat::Csv => write_csv(&mut sink, rows, summaries)?,
    }
    sink.flush()?;
    Ok(())
}

const CSV_HEADER: &str = "protocol,n,k,seed,converged,winner,phases,interactions,rounds,parallel_time,winner_significant,initial_additive_bias,t_final,rho_round,t_adoption_round";

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV mirror of the JSONL rows, same column order, with summaries as
/// trailing comment lines.
pub fn write_csv(out: &mut dyn Write, rows: &[TrialRow], summaries: &[Summary]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.protocol.name(),
            r.n,
            r.k,
            r.seed,
            r.converged,
            opt_str(r.winner),
            r.phases,
            r.interactions,
            r.rounds,
            r.parallel_time,
            r.winner_significant,
            r.initial_additive_bias,
            opt_str(r.t_final),
            opt_str(r.rho_round),
            opt_str(r.t_adoption_round),
        )?;
    }
    for s in summaries {
        writeln!(out, "# summary: {}", serde_json::to_string(s)?)?;
    }
    Ok(())
}

pub fn read_csv(input: &mut dyn BufRead) -> Result<(Vec<TrialRow>, Vec<Summary>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some(CSV_HEADER) {
        return Err(HarnessError::Format("missing CSV header".into()));
    }
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# summary: ") {
            summaries.push(serde_json::from_str(rest)?);
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(HarnessError::Format(format!(
                "expected 15 CSV fields, got {}",
                f.len()
            )));
        }
        let parse_opt = |s: &str| -> Result<Option<u64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().map_err(|e| {
                    HarnessError::Format(format!("bad integer {s}: {e}"))
                })?))
            }
        };
        let protocol = match f[0] {
            "population" => Protocol::Population,
            "gossip" => Protocol::Gossip,
            "uniform" => Protocol::Uniform,
            "ideal" => Protocol::Ideal,
            other => return Err(HarnessError::Format(format!("unknown protocol {other}"))),
        };
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|e| HarnessError::Format(format!("bad integer {s}: {e}")))
        };
        let boolean = |s: &str| -> Result<bool> {
            s.parse()
                .map_err(|e| HarnessError::Format(format!("bad bool {s}: {e}")))
        };
        rows.push(TrialRow {
            protocol,
            n: num(f[1])?,
            k: num(f[2])?,
            seed: num(f[3])?,
            converged: boolean(f[4])?,
            winner: parse_opt(f[5])?.map(|w| w as usize),
            phases: num(f[6])?,
            interactions: num(f[7])?,
            rounds: num(f[8])?,
            parallel_time: f[9]
                .parse()
                .map_err(|e| HarnessError::Format(format!("bad float {}: {e}", f[9])))?,
            winner_significant: boolean(f[10])?,
            initial_additive_bias: num(f[11])?,
            t_final: parse_opt(f[12])?.map(|t| t as u32),
            rho_round: parse_opt(f[13])?,
            t_adoption_round: parse_opt(f[14])?,
        });
    }
    Ok((rows, summaries))
}
