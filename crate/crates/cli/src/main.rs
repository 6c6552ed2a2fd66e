//! `pcsub`: build, tick, train and evaluate predictive-coding networks.
//!
//! Exit status is 0 on success, 1 on any usage or validation error and 2 when
//! a run diverged (its outputs are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcsub_core::config_io::checkpoint::{load_checkpoint, save_checkpoint};
use pcsub_core::config_io::write_curve_csv;
use pcsub_core::{
    evaluate_mse, generate_dataset, run_config, run_experiment, verify_random_networks, ClampMap, Error,
    ExperimentConfig, ExperimentOutput, Network, Overrides,
};

const OUT_DIR_ENV: &str = "PCSUB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Parser)]
#[command(name = "pcsub", version, about = "Tick-accurate predictive-coding substrate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the teacher described by a config file and write its curve.
    Run {
        config: PathBuf,
        /// Output directory (default: $PCSUB_OUT_DIR, the config's out_dir, or runs/).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Run one of the bundled experiments and write `<name>.csv`.
    Experiment {
        /// relu_ts, tanh_ts, scale_small, scale_medium or scale_large
        name: String,
        /// Network seed; the teacher uses seed + 1.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        settings: Vec<String>,
    },
    /// Load a checkpoint, run free ticks and report the final states.
    Tick {
        checkpoint: PathBuf,
        #[arg(long)]
        ticks: u64,
        /// Config supplying activations and rates (sizes must match).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the resulting network to this checkpoint.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Inference-only MSE of a checkpoint on the dataset a config describes.
    Eval { checkpoint: PathBuf, dataset_config: PathBuf },
    /// Compare the simulator with the dense oracle on random networks.
    Verify {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 50)]
        ticks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print per-core and network tick cycle counts for a config.
    Cycles { config: PathBuf },
}

/// How a successful command finished.
enum Outcome {
    Ok,
    Diverged,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Run { config, out, settings } => {
            let mut cfg = read_config(&config)?;
            Overrides { seed: None, settings }.apply(&mut cfg)?;
            let dir = out_dir(out, cfg.out_dir.as_deref());
            let output = run_config(&cfg)?;
            if let Some(path) = &cfg.checkpoint {
                save_checkpoint(&output.network, path)?;
                println!("checkpoint written to {path}");
            }
            finish_run(&output, &dir)
        }
        Command::Experiment { name, seed, out, settings } => {
            let output = run_experiment(&name, &Overrides { seed, settings })?;
            let dir = out_dir(out, output.config.out_dir.as_deref());
            finish_run(&output, &dir)
        }
        Command::Tick { checkpoint, ticks, config, save } => {
            let cfg = config.as_deref().map(read_config).transpose()?;
            let mut net = load_checkpoint(&checkpoint, cfg.as_ref().map(|c| &c.network))?;
            let clamp = ClampMap::free(net.depth());
            let mut diverged = false;
            for _ in 0..ticks {
                diverged |= net.tick(&clamp)?.diverged;
            }
            print_states(&net);
            println!("energy {:.9e}", net.energy());
            println!(
                "tick latency {} cycles, {} ticks = {} cycles",
                net.tick_latency(),
                ticks,
                net.tick_latency() * ticks
            );
            if let Some(path) = save {
                save_checkpoint(&net, &path)?;
            }
            Ok(if diverged { Outcome::Diverged } else { Outcome::Ok })
        }
        Command::Eval { checkpoint, dataset_config } => {
            let cfg = read_config(&dataset_config)?;
            let mut net = load_checkpoint(&checkpoint, Some(&cfg.network))?;
            let ds = generate_dataset(&cfg.teacher, cfg.n_samples);
            let mse = evaluate_mse(&mut net, &ds, cfg.protocol.eval_ticks)?;
            println!("mse {mse:.6}");
            Ok(if mse.is_finite() { Outcome::Ok } else { Outcome::Diverged })
        }
        Command::Verify { nets, ticks, seed } => {
            let report = verify_random_networks(nets, ticks, seed)?;
            match &report.mismatch {
                None => {
                    println!(
                        "PASS oracle equivalence: {} nets x {} ticks, {} values bit-identical",
                        report.nets, report.ticks, report.values
                    );
                    Ok(Outcome::Ok)
                }
                Some(what) => {
                    println!("FAIL oracle equivalence: {what}");
                    Err(Error::Config("simulator and oracle disagree".into()))
                }
            }
        }
        Command::Cycles { config } => {
            let cfg = read_config(&config)?;
            let net = Network::build(cfg.network.clone())?;
            for (p, row) in net.cycle_table().iter().enumerate() {
                let core = cfg.network.core_config(p);
                println!(
                    "layer {p}: {} cores, N={} M={}, {} cycles each",
                    row.len(),
                    core.n_presyn,
                    core.m_back,
                    row[0]
                );
            }
            println!("network tick latency: {}", net.tick_latency());
            Ok(Outcome::Ok)
        }
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

fn out_dir(flag: Option<PathBuf>, configured: Option<&str>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| configured.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn finish_run(output: &ExperimentOutput, dir: &Path) -> Result<Outcome, Error> {
    let path = dir.join(format!("{}.csv", output.name));
    write_curve_csv(&output.curve, &path)?;
    let c = &output.curve;
    println!(
        "{}: mse {:.6} -> {:.6} over {} epochs, written to {}",
        output.name,
        c.initial(),
        c.last(),
        c.mse.len() - 1,
        path.display()
    );
    if c.any_diverged() {
        eprintln!("warning: {} diverged", output.name);
        return Ok(Outcome::Diverged);
    }
    Ok(Outcome::Ok)
}

fn print_states(net: &Network) {
    for (p, layer) in net.layers().iter().enumerate() {
        let states: Vec<String> = layer.states().iter().map(|v| format!("{v:.6}")).collect();
        println!("layer {p}: {}", states.join(" "));
    }
}
