use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nearfield_ts::channel::ArrayGeometry;
use nearfield_ts::harness::{
    parse_method_list, parse_snr_list, write_outputs, Experiment, ExperimentConfig, Method,
};
use nearfield_ts::policies::SlotRecord;
use nearfield_ts::transform::polar_codebook;
use nearfield_ts::Error;

#[derive(Parser)]
#[command(name = "nftrain", version, about = "Near-field Thompson-sampling beam training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo SNR sweep; writes summary.csv, raw.csv and meta.json.
    Sweep(SweepArgs),
    /// Runs a single trial and prints its slot-by-slot trace as JSON.
    Trial(TrialArgs),
    /// Dumps the polar codebook as CSV.
    Codebook(CodebookArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    unconstrained: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma list (`5,10,15`) or range (`5:20:5`).
    #[arg(long)]
    snr: Option<String>,
    /// Comma list of scheme labels, e.g. `hybrid_ts,exhaustive_nf,full_csi`.
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "hybrid_ts")]
    scheme: String,
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CodebookArgs {
    #[arg(long, default_value_t = 256)]
    antennas: usize,
    #[arg(long, default_value_t = 3e10)]
    carrier: f64,
    #[arg(long, default_value_t = 1.1)]
    beta: f64,
    #[arg(long, default_value_t = 5)]
    rings: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(common: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_kv_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = common.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = common.antennas {
        cfg.n_antennas = v;
    }
    if let Some(v) = common.paths {
        cfg.n_paths = v;
    }
    if let Some(v) = common.budget {
        cfg.budget = v;
    }
    if common.unconstrained {
        cfg.unconstrained = true;
    }
    Ok(cfg)
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let mut cfg = base_config(&args.common)?;
    if let Some(v) = args.trials {
        cfg.n_trials = v;
    }
    if let Some(s) = &args.snr {
        cfg.snr_grid_db = parse_snr_list(s)?;
    }
    if let Some(s) = &args.schemes {
        cfg.schemes = parse_method_list(s)?;
    }
    cfg.validate()?;
    let experiment = Experiment::new(cfg.clone())?;
    let result = experiment.run_sweep(args.workers)?;
    write_outputs(&args.out, &cfg, &result)?;
    for row in &result.summary {
        println!(
            "snr={:>5} {:<28} rate={:.3} (+/-{:.3}) pilots={:.1} converged={:.2}",
            row.snr_db,
            row.method.label(),
            row.mean_rate,
            row.rate_stderr,
            row.mean_overhead,
            row.convergence_fraction
        );
    }
    let failed = result.failed_trials();
    if failed > 0 {
        return Err(Error::NumericalDegeneracy(format!("{failed} trial(s) failed; see raw.csv")));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrialDump<'a> {
    snr_db: f64,
    scheme: Method,
    trial: usize,
    rate: f64,
    pilots: usize,
    converged: bool,
    stage1_pilots: usize,
    channel_hash: &'a str,
    raw_norm_sq: f64,
    trace: &'a [SlotRecord],
}

fn trial(args: TrialArgs) -> Result<(), Error> {
    let mut cfg = base_config(&args.common)?;
    cfg.snr_grid_db = vec![args.snr];
    let method: Method = args.scheme.parse()?;
    let method = if cfg.unconstrained && method == Method::ContinuousTs {
        Method::ContinuousTsUnconstrained
    } else {
        method
    };
    cfg.schemes = vec![method];
    let experiment = Experiment::new(cfg)?;
    let detail = experiment.run_trial(method, 0, args.trial)?;
    let empty = Vec::new();
    let dump = TrialDump {
        snr_db: detail.record.snr_db,
        scheme: method,
        trial: args.trial,
        rate: detail.record.rate,
        pilots: detail.record.pilots,
        converged: detail.record.converged,
        stage1_pilots: detail.training.as_ref().map_or(0, |t| t.stage1_pilots),
        channel_hash: &detail.record.channel_hash,
        raw_norm_sq: detail.channel.raw_norm_sq,
        trace: detail.training.as_ref().map_or(&empty, |t| &t.trace),
    };
    let text = serde_json::to_string_pretty(&dump).expect("trace serializes") + "\n";
    match &args.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Config(e.to_string())),
    }
}

fn codebook(args: CodebookArgs) -> Result<(), Error> {
    let geometry =
        ArrayGeometry::from_carrier(args.antennas, args.carrier).map_err(|e| Error::Config(e.to_string()))?;
    let cb = polar_codebook(&geometry, args.beta, args.rings).map_err(|e| Error::Config(e.to_string()))?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
            cb.write_csv(io::BufWriter::new(file))
        }
        None => cb.write_csv(io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Trial(a) => trial(a),
        Command::Codebook(a) => codebook(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalDegeneracy(_) | Error::DegenerateSample(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
