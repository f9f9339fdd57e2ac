use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snot_lab::config::{self, ConditioningCommand, SelftestCommand, SlopeCommand, TerminalNoiseCommand, TraceCommand, TrainCommand};
use snot_lab::experiments::{conditioning, slope, terminal, trace, train};
use snot_lab::run::RunDir;
use snot_lab::selftest::{self, Mutation};
use snot_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "snot-lab", version, about = "Semi-dual neural OT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a source/target pair, one run per variant and replicate.
    Train(Common),
    /// Fit the decay rate of W2 between a cube and smoothed samples.
    Slope(Common),
    /// Iterations-to-threshold and Jacobian growth as the noise shrinks.
    Conditioning(Common),
    /// Map error at noise levels around the statistical level.
    TerminalNoise(Common),
    /// Print the noise level at every iteration of a schedule.
    ScheduleTrace(Common),
    /// Run the invariant suite.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Inject a defect to check that the suite catches it.
        #[arg(long, value_enum, hide = true)]
        mutate: Option<MutateArg>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutateArg {
    BackwardSign,
}

impl Common {
    fn load<T: Default + serde::de::DeserializeOwned + config::Validate>(&self, required: bool) -> Result<T> {
        match &self.config {
            Some(path) => config::load(path),
            None if required => Err(LabError::config("--config", "a config file is required for this command")),
            None => Ok(T::default()),
        }
    }

    fn dir(&self, command: &str, seed: u64) -> Result<RunDir> {
        let root = self.out.clone().unwrap_or_else(|| Path::new("snot-out").join(command));
        RunDir::create(&root, command, seed)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

fn cmd_train(c: &Common) -> Result<bool> {
    let mut cfg: TrainCommand = c.load(true)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let dir = c.dir("train", cfg.seed)?;
    let s = train::run(&cfg, Some(&dir), c.threads)?;
    println!("{:<20} {:>6} {:>11} {:>11} {:>11} {:>11}", "variant", "faults", "d_target", "tangential", "normal", "normal_clean");
    for v in &s.variants {
        let m = |x: Option<train::Stat>| fmt_opt(x.map(|s| s.mean));
        println!(
            "{:<20} {:>6} {:>11} {:>11} {:>11} {:>11}",
            v.name,
            v.faults,
            m(v.d_target),
            m(v.tangential_error),
            m(v.normal_error),
            m(v.normal_error_clean)
        );
    }
    for r in s.runs.iter().filter(|r| r.fault.is_some()) {
        eprintln!("training fault in {}/rep{}: {}", r.variant, r.replicate, r.fault.as_deref().unwrap_or(""));
    }
    println!("artifacts in {}", dir.root().display());
    Ok(s.faults() == 0)
}

fn cmd_slope(c: &Common) -> Result<bool> {
    let mut cfg: SlopeCommand = c.load(true)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let dir = c.dir("slope", cfg.seed)?;
    let s = slope::run(&cfg, Some(&dir), c.threads)?;
    for f in &s.fits {
        println!("eps {:<8} slope {:+.4} r2 {:.4} ({} sizes)", f.eps, f.slope, f.r2, f.n_points);
    }
    println!("artifacts in {}", dir.root().display());
    Ok(true)
}

fn cmd_conditioning(c: &Common) -> Result<bool> {
    let mut cfg: ConditioningCommand = c.load(true)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let dir = c.dir("conditioning", cfg.seed)?;
    let s = conditioning::run(&cfg, Some(&dir), c.threads)?;
    println!("threshold {:.4e}", s.threshold);
    println!("{:<8} {:>12} {:>12} {:>12} {:>12} {:>8}", "eps", "median_iters", "error_var", "median_jac", "reached", "faults");
    for l in &s.levels {
        println!(
            "{:<8} {:>12} {:>12.4e} {:>12.3} {:>12} {:>8}",
            l.eps, l.median_iters, l.error_variance, l.median_sup_jacobian, l.reached, l.faults
        );
    }
    println!("artifacts in {}", dir.root().display());
    Ok(true)
}

fn cmd_terminal(c: &Common) -> Result<bool> {
    let mut cfg: TerminalNoiseCommand = c.load(true)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let dir = c.dir("terminal-noise", cfg.seed)?;
    let s = terminal::run(&cfg, Some(&dir), c.threads)?;
    println!("n {} E|Y| {:.6} eps_stat {:.6e}", s.n, s.e_abs_y, s.eps_stat);
    for l in &s.levels {
        println!("x{:<6} eps {:.4e} error {:.4e} +- {:.1e}", l.multiplier, l.eps, l.mean, l.std_err);
    }
    match s.onset_eps {
        Some(e) => println!("error begins increasing at eps {e:.4e}"),
        None => println!("no level exceeds the smallest by more than 2 standard errors"),
    }
    println!("artifacts in {}", dir.root().display());
    Ok(true)
}

fn cmd_trace(c: &Common) -> Result<bool> {
    let cfg: TraceCommand = c.load(true)?;
    let dir = match &c.out {
        Some(_) => Some(c.dir("schedule-trace", 0)?),
        None => None,
    };
    trace::run(&cfg, dir.as_ref(), std::io::stdout().lock())?;
    Ok(true)
}

fn cmd_selftest(c: &Common, mutate: Option<MutateArg>) -> Result<bool> {
    let mut cfg: SelftestCommand = c.load(false)?;
    cfg.seed = c.seed.unwrap_or(cfg.seed);
    let mutation = match mutate {
        Some(MutateArg::BackwardSign) => Mutation::BackwardSign,
        None => Mutation::None,
    };
    let report = selftest::run(cfg.seed, cfg.instances, mutation);
    println!("{}", report.summary());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Slope(c) => cmd_slope(c),
        Command::Conditioning(c) => cmd_conditioning(c),
        Command::TerminalNoise(c) => cmd_terminal(c),
        Command::ScheduleTrace(c) => cmd_trace(c),
        Command::Selftest { common, mutate } => cmd_selftest(common, *mutate),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
