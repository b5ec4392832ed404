//! `spectra-auction`: run the auction simulation presets and emit CSV results
//! plus a reproducibility manifest.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use spectra_auction::config::{parse_config, preset_to_map};
use spectra_auction::harness::{
    builtin_presets, efficiency_sweep, fer_experiment, run_trials, PresetKind,
};
use spectra_auction::output::{emit_csv, write_manifest, RunManifest, RunOutput, MANIFEST_FILE};

const WORKERS_ENV: &str = "SPECTRA_AUCTION_WORKERS";
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(name = "spectra-auction", version, about = "Quantized noise-aware spectrum auction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// One Command value exists per process; the variant size spread is harmless.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Run a built-in preset or a configuration assembled from flags.
    Run(RunArgs),
    /// List the built-in experiment presets.
    ListPresets,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Built-in preset name (see `list-presets`); flags override its values.
    preset: Option<String>,
    /// key=value configuration file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for results.csv and the run manifest.
    #[arg(long)]
    out: PathBuf,

    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    users: Option<String>,
    #[arg(long)]
    units: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    rounds: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long = "delta-levels")]
    delta_levels: Option<String>,
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long = "sweep-values")]
    sweep_values: Option<String>,
    #[arg(long = "fer-levels")]
    fer_levels: Option<String>,
    #[arg(long = "fer-rounds")]
    fer_rounds: Option<String>,
    #[arg(long = "fer-p-values")]
    fer_p_values: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs: [(&str, &Option<String>); 20] = [
            ("scheme", &self.scheme),
            ("users", &self.users),
            ("units", &self.units),
            ("p", &self.p),
            ("delta", &self.delta),
            ("h", &self.h),
            ("rounds", &self.rounds),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("q", &self.q),
            ("epsilon", &self.epsilon),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("theta", &self.theta),
            ("delta_levels", &self.delta_levels),
            ("sweep", &self.sweep),
            ("sweep_values", &self.sweep_values),
            ("fer_levels", &self.fer_levels),
            ("fer_rounds", &self.fer_rounds),
            ("fer_p_values", &self.fer_p_values),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListPresets => {
            for preset in builtin_presets() {
                println!("{}", preset.name);
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => run(&args),
    }
}

fn run(args: &RunArgs) -> ExitCode {
    if let Err(message) = init_workers() {
        eprintln!("error: {message}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let preset = match parse_config(args.preset.as_deref(), args.config.as_deref(), &args.overrides())
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let started_unix = unix_now();
    let output = match &preset.kind {
        PresetKind::Single(_) => RunOutput::Series(run_trials(&preset)),
        PresetKind::Sweep { .. } => RunOutput::Sweep(efficiency_sweep(&preset)),
        PresetKind::Fer { levels, code_rounds, crossovers } => RunOutput::Fer(
            crossovers
                .iter()
                .map(|&p| fer_experiment(*levels, *code_rounds, p, preset.trials, preset.master_seed))
                .collect(),
        ),
    };

    let csv_name = "results.csv";
    let result = (|| -> std::io::Result<()> {
        std::fs::create_dir_all(&args.out)?;
        emit_csv(&output, &args.out.join(csv_name))?;
        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            preset_name: preset.name.clone(),
            master_seed: preset.master_seed,
            config: preset_to_map(&preset),
            started_unix,
            finished_unix: unix_now(),
            outputs: vec![csv_name.to_string()],
        };
        write_manifest(&args.out, &manifest)
    })();
    match result {
        Ok(()) => {
            println!(
                "{}: {} trials done, wrote {} and {}",
                preset.name,
                preset.trials,
                args.out.join(csv_name).display(),
                args.out.join(MANIFEST_FILE).display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Worker-count override; the only environment variable the tool reads.
fn init_workers() -> Result<(), String> {
    match std::env::var(WORKERS_ENV) {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("{WORKERS_ENV} must be a positive integer, got '{raw}'"))?;
            if n == 0 {
                return Err(format!("{WORKERS_ENV} must be a positive integer, got '{raw}'"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("cannot configure {n} workers: {e}"))
        }
        Err(_) => Ok(()),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
