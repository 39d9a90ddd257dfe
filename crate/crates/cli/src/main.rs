use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;
use trapwalk::experiments::{self, ExperimentConfig, Overrides, Suite};
use trapwalk::walk::JumpKernel;
use trapwalk::Error;

#[derive(Parser)]
#[command(name = "trapwalk", version, about = "Random walks among mobile traps: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replica loops (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Directory for result records and CSV side files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, default_value = "fast")]
        suite: Suite,
    },
    /// Kernel presets.
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
}

#[derive(Subcommand)]
enum KernelsAction {
    List,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        trapwalk::par::set_workers(w);
    }
    match cli.command {
        Command::Run { ref config } => run(config, &cli),
        Command::Verify { suite } => verify(suite, &cli),
        Command::Kernels { action: KernelsAction::List } => {
            list_kernels();
            ExitCode::SUCCESS
        }
    }
}

fn run(path: &PathBuf, cli: &Cli) -> ExitCode {
    let (config, raw) = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let overrides = Overrides { seed: cli.seed, workers: cli.workers, out_dir: cli.out_dir.clone() };
    match experiments::run(&config, raw, &overrides) {
        Ok((record, out)) => {
            println!("{}", out.display());
            for f in &record.side_files {
                println!("{}", out.with_file_name(f).display());
            }
            eprintln!("{} finished in {:.2}s", record.experiment, record.wall_time);
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Config(_) | Error::InvalidKernel(_) | Error::InvalidParameter(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: run failed, no results written: {e}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

fn verify(suite: Suite, cli: &Cli) -> ExitCode {
    let seed = cli.seed.unwrap_or(experiments::DEFAULT_SEED);
    let report = experiments::verify_with(suite, seed, |o| eprintln!("{o}"));
    if let Some(dir) = &cli.out_dir {
        let name = format!("verify-{}-{seed}.json", if suite == Suite::Fast { "fast" } else { "full" });
        let written = serde_json::to_vec_pretty(&report)
            .context("serializing report")
            .and_then(|b| experiments::write_atomic(&dir.join(&name), &b).context("writing report"));
        if let Err(e) = written {
            eprintln!("error: {e:#}");
        }
    }
    let failures: Vec<_> = report
        .failures()
        .iter()
        .map(|o| json!({ "id": o.id, "name": o.name, "measured": o.measured, "runtime": o.runtime }))
        .collect();
    println!("{}", json!({ "suite": suite, "seed": seed, "passed": report.passed(), "failures": failures }));
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn list_kernels() {
    for name in JumpKernel::preset_names() {
        let Some(k) = JumpKernel::preset(name) else { continue };
        let offsets = if k.offsets().len() <= 8 {
            let o: Vec<String> = k.offsets().iter().map(|(x, p)| format!("{x:+}:{p}")).collect();
            o.join(" ")
        } else {
            format!("{} offsets, |x| ≤ {}", k.offsets().len(), k.max_jump())
        };
        let moment = k.exp_moment().map(|m| format!("{m:?}")).unwrap_or_else(|| "none".into());
        println!(
            "{name:<12} σ²={:<8.4} symmetric={} {}  exp-moment {moment}",
            k.variance(),
            k.is_symmetric(),
            offsets
        );
    }
}
