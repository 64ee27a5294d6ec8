use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use udrl::harness::{
    compare_report, parse_config_text, parse_metrics_csv, run_seeds, run_training, value_grid_from_checkpoint, Algorithm,
    Checkpoint, ExperimentConfig, LabeledLog,
};

#[derive(Parser)]
#[command(name = "udrl", version, about = "Train and compare batch-sampled and replay-based RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write metrics, monitor and checkpoint files.
    Train {
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        #[arg(long)]
        sections: Option<usize>,
        #[arg(long)]
        updates: Option<u64>,
        #[arg(long)]
        eval_interval: Option<u64>,
        #[arg(long)]
        eval_episodes: Option<usize>,
        #[arg(long)]
        eval_timeout: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Flat `key = value` file; flags given here take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-update wall time in metrics.csv.
        #[arg(long)]
        timing: bool,
        /// Train this many consecutive seeds, each in `<out>/seed_<n>`.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Extra `key=value` overrides using config-file keys.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Export the value surface of a maze checkpoint as CSV.
    ValueGrid {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align several metrics.csv files into one table (and a chart).
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: bool,
        /// Moving-average window applied to each curve.
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> udrl::Result<()> {
    match command {
        Command::Train {
            env,
            algo,
            rows,
            cols,
            sections,
            updates,
            eval_interval,
            eval_episodes,
            eval_timeout,
            seed,
            config,
            out,
            timing,
            repeats,
            overrides,
        } => {
            let mut pairs = match &config {
                Some(path) => parse_config_text(&fs::read_to_string(path)?)?,
                None => Vec::new(),
            };
            let flags = [
                ("env", env),
                ("algo", algo),
                ("rows", rows.map(|v| v.to_string())),
                ("cols", cols.map(|v| v.to_string())),
                ("sections", sections.map(|v| v.to_string())),
                ("updates", updates.map(|v| v.to_string())),
                ("eval_interval", eval_interval.map(|v| v.to_string())),
                ("eval_episodes", eval_episodes.map(|v| v.to_string())),
                ("eval_timeout", eval_timeout.map(|v| v.to_string())),
                ("seed", seed.map(|v| v.to_string())),
                ("out", out.map(|p| p.display().to_string())),
                ("record_timing", timing.then(|| "true".to_string())),
            ];
            pairs.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
            for o in overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| udrl::Error::Config(format!("override `{o}` is not key=value")))?;
                pairs.push((k.trim().to_string(), v.trim().to_string()));
            }
            // An algorithm implies its environment unless one is given.
            if !pairs.iter().any(|(k, _)| k == "env") {
                if let Some((_, a)) = pairs.iter().rev().find(|(k, _)| k == "algo") {
                    let a: Algorithm = a.parse()?;
                    pairs.insert(0, ("env".into(), a.env().to_string()));
                }
            }
            let cfg = ExperimentConfig::from_pairs(&pairs)?;
            let outcomes = if repeats > 1 { run_seeds(&cfg, repeats)? } else { vec![run_training(&cfg)?] };
            for (i, o) in outcomes.iter().enumerate() {
                let last = o.records.last().expect("at least the initial record");
                let (up, down) = o.monitor_signs();
                println!(
                    "seed {}: {} {} updates, final avg_reward {:.4}, fresh samples {}, train time {:.1} s",
                    cfg.seed + i as u64,
                    cfg.algo,
                    last.update_index,
                    last.avg_reward,
                    last.fresh_samples,
                    o.train_ms / 1e3
                );
                if cfg.algo.is_unbiased() {
                    println!("  target-Q monitor: {up} non-decreasing, {down} decreasing steps");
                }
            }
            Ok(())
        }
        Command::ValueGrid { checkpoint, out } => {
            let ck = Checkpoint::from_text(&fs::read_to_string(&checkpoint)?)?;
            let grid = value_grid_from_checkpoint(&ck)?;
            write_file(&out, &grid.to_csv())?;
            let (pr, pc) = grid.global_peak();
            println!("peak at ({pr}, {pc}); {} local maxima", grid.local_maxima().len());
            Ok(())
        }
        Command::Compare { logs, out, svg, window } => {
            let mut labeled = Vec::new();
            for path in &logs {
                let dir = path.parent().unwrap_or(Path::new("."));
                let algo = fs::read_to_string(dir.join("config.txt"))
                    .ok()
                    .and_then(|t| parse_config_text(&t).ok())
                    .and_then(|p| p.into_iter().rev().find(|(k, _)| k == "algo"))
                    .and_then(|(_, v)| v.parse().ok());
                let label = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                labeled.push(LabeledLog { label, algo, records: parse_metrics_csv(&fs::read_to_string(path)?)? });
            }
            let report = compare_report(&labeled, window)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("comparison.csv"), report.to_csv())?;
            if svg {
                fs::write(out.join("comparison.svg"), report.to_svg())?;
            }
            match report.dqn_udqn_time_ratio {
                Some(r) => println!("DQN/UDQN mean wall time per update: {r:.3}"),
                None => println!("DQN/UDQN wall time ratio unavailable (needs timed dqn and udqn logs)"),
            }
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> udrl::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
