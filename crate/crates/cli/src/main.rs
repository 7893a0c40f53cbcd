use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use nucasim::fv::{profile_frequent_values, FV_TABLE_CAPACITY};
use nucasim::sim::{self, compare_csv, SimConfig};
use nucasim::trace::{generate_synthetic, write_trace, AccessRecord, WorkloadSpec};

#[derive(Parser)]
#[command(name = "nucasim", version, about = "Banked NUCA LLC simulator with compression-aware power gating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frequent-value table from a trace.
    Profile {
        #[arg(long)]
        trace: PathBuf,
        /// Where to write the table (one hex value per line).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FV_TABLE_CAPACITY)]
        k: usize,
    },
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace file; overrides the config's trace source.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output directory for report.txt, intervals.csv and decisions.log.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the synthetic workload seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate several configurations on one trace; energy is normalized
    /// to the first.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Output directory for compare.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic trace from a workload TOML file.
    GenTrace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Profile { trace, out, k } => cmd_profile(&trace, &out, k),
        Command::Run { config, trace, out, seed } => cmd_run(&config, trace.as_deref(), out.as_deref(), seed),
        Command::Compare { configs, trace, out, seed } => cmd_compare(&configs, trace.as_deref(), out.as_deref(), seed),
        Command::GenTrace { config, out, seed } => cmd_gen_trace(&config, &out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_profile(trace: &Path, out: &Path, k: usize) -> Result<()> {
    if k > FV_TABLE_CAPACITY {
        bail!("--k {k} exceeds the table capacity of {FV_TABLE_CAPACITY}");
    }
    let records = sim::read_trace_file(trace)?;
    if records.is_empty() {
        eprintln!("warning: {} has no records; writing an empty table", trace.display());
    }
    let table = profile_frequent_values(&records, k);
    write_file(out, &table.to_text())?;
    print!("{}", sim::profile_summary(&records, &table));
    Ok(())
}

fn load_config(path: &Path, trace_override: bool, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = SimConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let (Some(seed), Some(w)) = (seed, cfg.workload.as_mut()) {
        w.rng_seed = seed;
    }
    cfg.validate_for_run(trace_override).with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn load_records(cfg: &SimConfig, trace: Option<&Path>) -> Result<Vec<AccessRecord>> {
    Ok(match trace {
        Some(t) => sim::read_trace_file(t)?,
        None => cfg.load_trace()?,
    })
}

fn cmd_run(config: &Path, trace: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let cfg = load_config(config, trace.is_some(), seed)?;
    let fv = cfg.load_fv_table()?;
    let records = load_records(&cfg, trace)?;
    let result = sim::run(&cfg, fv, &records)?;
    let report = result.report_text();
    if let Some(dir) = out.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone()) {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("report.txt"), &report)?;
        write_file(&dir.join("intervals.csv"), &result.intervals_csv())?;
        write_file(&dir.join("decisions.log"), &result.decision_log)?;
    }
    print!("{report}");
    Ok(())
}

fn cmd_compare(configs: &[PathBuf], trace: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut loaded = Vec::with_capacity(configs.len());
    for path in configs {
        let cfg = load_config(path, trace.is_some(), seed)?;
        let fv = cfg.load_fv_table()?;
        loaded.push((cfg, fv));
    }
    // every member replays the trace of the first config
    let records = load_records(&loaded[0].0, trace)?;
    let rows = sim::compare(&loaded, &records)?;
    let csv = compare_csv(&rows);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("compare.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn cmd_gen_trace(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut spec = WorkloadSpec::from_toml(&text).with_context(|| format!("invalid workload {}", config.display()))?;
    if let Some(seed) = seed {
        spec.rng_seed = seed;
    }
    let records = generate_synthetic(&spec)?;
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace(std::io::BufWriter::new(file), &records).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
