use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weylforge_cli::{run, write_all, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "weylforge", version, about = "Desk-scale experiments on rearranged trigonometric systems")]
struct Cli {
    #[command(subcommand)]
    experiment: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ||H* h|| / ||h|| growth over direction fans
    DemeterScaling {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Lower bounds on ||T_{sigma,N}|| by witness or ascent
    MajorantScaling {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact CRT identity and bijection checks
    CrtVerify {
        #[arg(long)]
        max_q: Option<i64>,
        #[arg(long)]
        exhaustive: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Band pipeline and Q-family assembly
    PipelineBuild {
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Random-coefficient upper check
    MrCheck {
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Staged series for a multiplier sequence
    C1Build {
        #[arg(long)]
        multiplier: Option<String>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Scaled-down divergence construction
    DivergenceSim {
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// flat key = value file applied before the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// constants file replacing the embedded one
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

fn push<T: ToString>(o: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.to_string(), v.to_string()));
    }
}

fn split(cmd: Command) -> (Experiment, Common, Vec<(String, String)>) {
    let mut o = Vec::new();
    let (e, common) = match cmd {
        Command::DemeterScaling { n, grid, common } => {
            push(&mut o, "n", n);
            push(&mut o, "grid", grid);
            (Experiment::DemeterScaling, common)
        }
        Command::MajorantScaling { n, strategy, common } => {
            push(&mut o, "n", n);
            push(&mut o, "strategy", strategy);
            (Experiment::MajorantScaling, common)
        }
        Command::CrtVerify { max_q, exhaustive, common } => {
            push(&mut o, "max-q", max_q);
            push(&mut o, "exhaustive", exhaustive.then_some(true));
            (Experiment::CrtVerify, common)
        }
        Command::PipelineBuild { n, common } => {
            push(&mut o, "n", n);
            (Experiment::PipelineBuild, common)
        }
        Command::MrCheck { n, trials, common } => {
            push(&mut o, "n", n);
            push(&mut o, "trials", trials);
            (Experiment::MrCheck, common)
        }
        Command::C1Build { multiplier, stages, cap, common } => {
            push(&mut o, "multiplier", multiplier);
            push(&mut o, "stages", stages);
            push(&mut o, "cap", cap);
            (Experiment::C1Build, common)
        }
        Command::DivergenceSim { levels, rho, samples, common } => {
            push(&mut o, "levels", levels);
            push(&mut o, "rho", rho);
            push(&mut o, "samples", samples);
            (Experiment::DivergenceSim, common)
        }
    };
    push(&mut o, "seed", common.seed);
    push(&mut o, "out", common.out.as_ref().map(|p| p.display()));
    push(&mut o, "out-dir", common.out_dir.as_ref().map(|p| p.display()));
    push(&mut o, "constants", common.constants.as_ref().map(|p| p.display()));
    push(&mut o, "parallel", common.sequential.then_some(false));
    (e, common, o)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common, overrides) = split(cli.experiment);
    let outcome = ExperimentConfig::build(experiment, common.config.as_deref(), &overrides)
        .and_then(|cfg| run(&cfg))
        .and_then(|report| write_all(&report).map(|w| (report, w)));
    match outcome {
        Ok((report, written)) => {
            for v in &report.verdicts {
                let tag = if v.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: measured {:.6e} vs {} = {:.6e}", v.name, v.measured, v.constant, v.threshold);
            }
            println!("wrote {} {} {}", written.json.display(), written.csv.display(), written.dat.display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
