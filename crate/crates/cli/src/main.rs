use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lumadim::scenes::Scene;
use lumadim_cli::error::EXIT_CONFIG;
use lumadim_cli::{run, Command, Overrides, RunConfig};

/// Perceived-contrast loss under display dimming and power-budgeted
/// brightness schedules.
#[derive(Debug, Parser)]
#[command(name = "lumadim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample per-frame contrast loss and write the loss table.
    Analyze(CommonArgs),
    /// Optimize a per-frame brightness schedule under a power budget.
    Optimize(CommonArgs),
    /// Constant dimming that meets the power budget.
    Baseline(CommonArgs),
    /// Run the online PID controller over a sequence.
    Simulate(CommonArgs),
    /// Fit the modulation-rate limit curve to threshold data.
    Calibrate(CommonArgs),
    /// Compare mean power of full brightness, baseline and optimized schedules.
    PowerReport(CommonArgs),
    /// List the bundled synthetic scenes.
    Scenes,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// printf-style frame file pattern, e.g. frames/%04d.png.
    #[arg(long)]
    frames: Option<String>,
    /// Bundled synthetic scene (see `lumadim scenes`).
    #[arg(long)]
    scene: Option<String>,
    /// Precomputed loss table CSV.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Power budget as the matching constant brightness fraction.
    #[arg(long)]
    target_fraction: Option<f64>,
    /// Power budget in watts.
    #[arg(long)]
    target_power: Option<f64>,
    /// Target loss for the online controller.
    #[arg(long = "c-r")]
    c_r: Option<f64>,
    /// Override any configuration key, e.g. --set kp=0.3 or --set csf.peak_gain=5000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Baseline(a) => (Command::Baseline, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Calibrate(a) => (Command::Calibrate, a),
        Cmd::PowerReport(a) => (Command::PowerReport, a),
        Cmd::Scenes => {
            for s in Scene::ALL {
                let (w, h) = s.size();
                println!("{:<12} {:>5} frames {w}x{h}", s.name(), s.frame_count());
            }
            return ExitCode::SUCCESS;
        }
    };
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let overrides = Overrides {
        seed: args.seed,
        frames: args.frames,
        scene: args.scene,
        table: args.table,
        target_power: args.target_power,
        target_brightness_fraction: args.target_fraction,
        c_r: args.c_r,
        set: args.set,
    };
    let result = RunConfig::load(args.config.as_deref(), &overrides).and_then(|cfg| run(command, &cfg, &args.out));
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("lumadim {}: error: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
