//! `plurality` command line: single experiments, parameter sweeps, and the
//! distribution validation suite.
//!
//! Exit codes: 0 success, 1 validation failure, 2 bad specification or I/O.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use plurality_core::config::InitMode;
use plurality_core::ProtocolParams;
use plurality_harness::validation::{default_fixtures, validate_distributions, Samplers};
use plurality_harness::{
    median_u64, run_experiment, write_result, ExperimentSpec, OutputFormat, Protocol,
};

#[derive(Parser)]
#[command(name = "plurality", version, about = "Undecided-state dynamics simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: `trials` seeded trials of one protocol.
    Run(RunArgs),
    /// Run the same experiment over a list of population sizes.
    Sweep(SweepArgs),
    /// Check the simulators against their closed-form distributions.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Population,
    Gossip,
    Uniform,
    Ideal,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Population => Protocol::Population,
            ProtocolArg::Gossip => Protocol::Gossip,
            ProtocolArg::Uniform => Protocol::Uniform,
            ProtocolArg::Ideal => Protocol::Ideal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,

    /// Opinion count; defaults to n for one-each inits and to the array
    /// length for file inits.
    #[arg(long)]
    k: Option<u64>,

    /// Initial configuration: balanced | biased:<delta> | one-each |
    /// file:<path> (path holds a JSON array of counts).
    #[arg(long, default_value = "balanced")]
    init: String,

    /// Phase-clock constant (population model).
    #[arg(long, default_value_t = 4.0)]
    tau: f64,

    /// Broadcast-window multiplier (gossip model).
    #[arg(long = "tbc-const", default_value_t = 4.0)]
    tbc_const: f64,

    /// Effective significance constant.
    #[arg(long = "xi-eff", default_value_t = 3.0)]
    xi_eff: f64,

    /// Forbid agents from drawing themselves as partners.
    #[arg(long = "no-self")]
    no_self: bool,

    /// Population model: keep the decision-flag reset exactly where the
    /// transition table writes it.
    #[arg(long = "literal-pseudocode")]
    literal_pseudocode: bool,

    #[arg(long, default_value_t = 1)]
    trials: u64,

    /// Base seed; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long = "max-phases", default_value_t = 200)]
    max_phases: u64,

    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,

    /// Worker threads for trial execution (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Number of agents.
    #[arg(long)]
    n: u64,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated population sizes, e.g. 1024,4096,16384.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<u64>,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ValidateArgs {
    /// Divide trial counts by this factor for a quick pass.
    #[arg(long, default_value_t = 1)]
    scale: u64,
}

fn parse_init(text: &str, n: Option<u64>) -> anyhow::Result<(InitMode, Option<u64>, Option<u64>)> {
    // returns (mode, derived n, derived k)
    if text == "balanced" {
        return Ok((InitMode::Balanced, None, None));
    }
    if text == "one-each" {
        return Ok((InitMode::OneEach, None, n));
    }
    if let Some(delta) = text.strip_prefix("biased:") {
        let delta: u64 = delta
            .parse()
            .with_context(|| format!("bad bias delta in --init {text}"))?;
        return Ok((InitMode::Biased { delta }, None, None));
    }
    if let Some(path) = text.strip_prefix("file:") {
        let file =
            File::open(path).with_context(|| format!("cannot open init file {path}"))?;
        let counts: Vec<u64> = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("init file {path} must hold a JSON array of counts"))?;
        let total: u64 = counts.iter().sum();
        let k = counts.len() as u64;
        return Ok((InitMode::Explicit(counts), Some(total), Some(k)));
    }
    bail!("unknown --init {text} (expected balanced | biased:<delta> | one-each | file:<path>)")
}

fn build_spec(n: u64, common: &CommonArgs) -> anyhow::Result<ExperimentSpec> {
    let (init, derived_n, derived_k) = parse_init(&common.init, Some(n))?;
    if let Some(dn) = derived_n {
        if dn != n {
            bail!("--n {n} conflicts with init file total {dn}");
        }
    }
    let k = match (common.k, derived_k) {
        (Some(k), Some(dk)) if k != dk => bail!("--k {k} conflicts with init-derived k {dk}"),
        (Some(k), _) => k,
        (None, Some(dk)) => dk,
        (None, None) => bail!("--k is required for this init mode"),
    };
    let mut params = ProtocolParams::new(n, k);
    params.tau = common.tau;
    params.tbc_const = common.tbc_const;
    params.xi_eff = common.xi_eff;
    params.allow_self_interaction = !common.no_self;
    params.literal_pseudocode = common.literal_pseudocode;
    params.max_phases = common.max_phases;
    Ok(ExperimentSpec {
        protocol: common.protocol.into(),
        params,
        init,
        trials: common.trials,
        seed_base: common.seed,
        output: common.out.clone(),
        format: match common.format {
            FormatArg::Jsonl => OutputFormat::Jsonl,
            FormatArg::Csv => OutputFormat::Csv,
        },
        workers: common.workers,
    })
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let spec = build_spec(args.n, &args.common)?;
    let result = run_experiment(&spec)?;
    write_result(&spec, &result.rows, &[result.summary])?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    if args.n.is_empty() {
        bail!("sweep needs at least one --n value");
    }
    let mut all_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut table = Vec::new();
    let mut last_spec = None;
    for &n in &args.n {
        let spec = build_spec(n, &args.common)?;
        let result = run_experiment(&spec)?;
        let phases: Vec<u64> = result.rows.iter().map(|r| r.phases).collect();
        table.push((n, median_u64(&phases), result.summary.convergence_rate));
        let mut summary = result.summary;
        summary.n = Some(n);
        summaries.push(summary);
        all_rows.extend(result.rows);
        last_spec = Some(spec);
    }
    write_result(&last_spec.expect("at least one n"), &all_rows, &summaries)?;
    if args.common.out.is_some() {
        eprintln!("n,median_phases,convergence_rate");
        for (n, median, rate) in table {
            eprintln!("{n},{median},{rate}");
        }
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<bool> {
    let report = validate_distributions(&default_fixtures(), &Samplers::default(), args.scale)?;
    for f in &report.fixtures {
        println!(
            "{} {}: {}",
            if f.passed { "PASS" } else { "FAIL" },
            f.name,
            f.details
        );
    }
    Ok(report.passed())
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|()| true),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // a closed stdout (e.g. piping into head) is not an error
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
