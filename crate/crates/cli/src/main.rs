use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchlab_cli::output::Format;
use switchlab_cli::selftest::cmd_selftest;
use switchlab_cli::simulate_cmd::{cmd_simulate, SimulateConfig};
use switchlab_cli::sweep::{
    cmd_chi_det, cmd_chi_erlang, cmd_chi_profile, cmd_sign_region, DetConfig, ErlangConfig,
    ProfileConfig, SignConfig,
};
use switchlab_cli::tail_cmd::{cmd_tail, TailConfig};
use switchlab_cli::{CliError, Outcome, RunContext};

/// Lyapunov exponents, sign regions and stationary tails of randomly
/// switched planar linear systems.
#[derive(Debug, Parser)]
#[command(name = "switchlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with flat sections; missing keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set grid.points=50`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write an SVG figure.
    #[arg(long)]
    svg: bool,
    /// Shorthand for `--set system.a=…`.
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    u: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (k, x) in [
            ("a", self.a),
            ("b", self.b),
            ("u", self.u),
            ("beta", self.beta),
        ] {
            if let Some(x) = x {
                v.push(format!("system.{k}={x:?}"));
            }
        }
        v.extend(self.set.iter().cloned());
        v
    }

    fn context(&self) -> RunContext {
        RunContext {
            seed: self.seed,
            format: self.format,
            svg: self.svg,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// exponential, erlang or periodic.
    #[arg(long)]
    law: Option<String>,
    /// Erlang stage count.
    #[arg(long)]
    n: Option<usize>,
    /// Time horizon T.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// χ(β) on a grid, by quadrature or simulation.
    ChiProfile(Common),
    /// Sign of χ on a (β, u) grid with its zero contour.
    SignRegion(Common),
    /// Exponent of the periodic deterministic switching.
    ChiDet(Common),
    /// χ under Erlang-staged switching for several stage counts.
    ChiErlang(Common),
    /// Stationary tail of a decentered system.
    Tail(Common),
    /// One trajectory, with an optional phase portrait.
    Simulate(SimulateArgs),
    /// Closed-form checks of the numerical core.
    Selftest(Common),
}

fn run(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::ChiProfile(c) => cmd_chi_profile(
            &ProfileConfig::load(c.config.as_deref(), &c.overrides())?,
            &c.context(),
        ),
        Command::SignRegion(c) => cmd_sign_region(
            &SignConfig::load(c.config.as_deref(), &c.overrides())?,
            &c.context(),
        ),
        Command::ChiDet(c) => cmd_chi_det(
            &DetConfig::load(c.config.as_deref(), &c.overrides())?,
            &c.context(),
        ),
        Command::ChiErlang(c) => cmd_chi_erlang(
            &ErlangConfig::load(c.config.as_deref(), &c.overrides())?,
            &c.context(),
        ),
        Command::Tail(c) => cmd_tail(
            &TailConfig::load(c.config.as_deref(), &c.overrides())?,
            &c.context(),
        ),
        Command::Simulate(s) => {
            let mut o = s.common.overrides();
            if let Some(law) = &s.law {
                o.push(format!("simulate.law={law:?}"));
            }
            if let Some(n) = s.n {
                o.push(format!("simulate.n={n}"));
            }
            if let Some(h) = s.horizon {
                o.push(format!("simulate.horizon={h:?}"));
            }
            cmd_simulate(
                &SimulateConfig::load(s.common.config.as_deref(), &o)?,
                &s.common.context(),
            )
        }
        Command::Selftest(c) => cmd_selftest(&c.context()),
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::ChiProfile(c)
        | Command::SignRegion(c)
        | Command::ChiDet(c)
        | Command::ChiErlang(c)
        | Command::Tail(c)
        | Command::Selftest(c) => c,
        Command::Simulate(s) => &s.common,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let c = common(&cli.command);
    let result = match c.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| run(&cli.command)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => run(&cli.command),
    };
    match result {
        Ok(outcome) => {
            if let Err(e) = outcome.artifacts.write_all(&c.out) {
                eprintln!("cannot write to {}: {e}", c.out.display());
                return ExitCode::from(1);
            }
            for line in &outcome.summary {
                println!("{line}");
            }
            for (name, _) in &outcome.artifacts.files {
                println!("wrote {}", c.out.join(name).display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
