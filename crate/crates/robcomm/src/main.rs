use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use robcomm::{run_command, Overrides, Scenario};
use robcomm_core::KeyMode;

#[derive(Parser)]
#[command(name = "robcomm", version, about = "Robust communication protocol simulator and equilibrium checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Authentication key representation.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Randomized sample count (forces a randomized sweep).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Directory for the summary and trace files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Find the circle (or the cut vertex) and the stage counts.
    CheckPaths,
    /// One protocol run, honest or scripted.
    Simulate,
    /// Reliability sweep over deviation schedules.
    Sweep,
    /// Mediator-free implementation of the scenario's device.
    Mediated,
    /// Exact incentive constraints of the device and/or direct strategy pair.
    VerifyEq,
    /// Naive forward-and-vote protocol on three disjoint paths.
    DemoMajority,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckPaths => "check-paths",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Mediated => "mediated",
            Command::VerifyEq => "verify-eq",
            Command::DemoMajority => "demo-majority",
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum Mode {
    Symbolic,
    Numeric,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Machine,
}

fn input_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let Some(path) = &cli.scenario else {
        return input_error("--scenario is required");
    };
    let loaded = match Scenario::load(path).and_then(Scenario::validate) {
        Ok(l) => l,
        Err(e) => return input_error(e),
    };
    let overrides = Overrides {
        seed: cli.seed,
        mode: cli.mode.map(|m| match m {
            Mode::Symbolic => KeyMode::Symbolic,
            Mode::Numeric => KeyMode::Numeric,
        }),
        samples: cli.samples,
    };
    let outcome = match run_command(cli.command.name(), &loaded, overrides) {
        Ok(o) => o,
        Err(e) => return input_error(e),
    };
    let (text, machine) = (outcome.text(), outcome.machine_text());
    print!("{}", if cli.format == Format::Machine { &machine } else { &text });
    if let Some(dir) = &cli.out {
        let write = |name: &str, body: &str| std::fs::write(dir.join(name), body);
        let res = std::fs::create_dir_all(dir)
            .and_then(|_| write("summary.txt", &text))
            .and_then(|_| write("summary.json", &machine))
            .and_then(|_| outcome.files.iter().try_for_each(|(n, b)| write(n, b)));
        if let Err(e) = res {
            return input_error(format!("cannot write {}: {e}", dir.display()));
        }
    }
    ExitCode::from(outcome.exit as u8)
}
