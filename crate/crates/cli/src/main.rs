//! `pcsp`: command-line front end for the workbench.

mod commands;
mod report;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::{Failure, Format};

#[derive(Parser, Debug)]
#[command(name = "pcsp", version, about = "Testing, simulation and proof for probabilistic CSP")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated visible actions; inputs using others are rejected.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphabet: Option<Vec<String>>,
    /// Maximum depth of input and generated terms.
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    May,
    Must,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FlavourArg {
    State,
    Action,
    Vector,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LogicArg {
    /// Modal logic with refusals, characterising failure simulation.
    F,
    /// Refusal-free fragment, characterising simulation.
    L,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CorpusKind {
    Terms,
    Tests,
    Formulas,
    Exhaustive,
}

/// Every argument naming a term or formula is read from a file when that path exists and is
/// parsed as literal text otherwise.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a term and print it canonically.
    Parse { input: String },
    /// Build the pLTS of a term.
    Lts {
        input: String,
        /// Emit Graphviz instead of the transition list.
        #[arg(long)]
        dot: bool,
    },
    /// Compose a test with a process and report every outcome flavour.
    Apply {
        #[arg(long)]
        test: String,
        process: String,
    },
    /// Outcomes of one test on one process.
    Outcomes {
        #[arg(long)]
        test: String,
        #[arg(long, value_enum, default_value_t = FlavourArg::Vector)]
        flavour: FlavourArg,
        process: String,
    },
    /// Compare two processes under a test or a battery of tests.
    Order {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = FlavourArg::Vector)]
        flavour: FlavourArg,
        /// Repeat for a battery.
        #[arg(long, required = true)]
        test: Vec<String>,
        p: String,
        q: String,
    },
    /// Decide simulation, or failure simulation with `--must`.
    Sim {
        #[arg(long)]
        must: bool,
        p: String,
        q: String,
    },
    /// Decide whether a process satisfies a formula.
    Logic { formula: String, process: String },
    /// Characteristic formula of a process.
    Charform {
        #[arg(long, value_enum, default_value_t = LogicArg::F)]
        logic: LogicArg,
        process: String,
    },
    /// Characteristic test of a formula, optionally run against a process.
    Chartest { formula: String, process: Option<String> },
    /// Normal form of a parallel-free term, with its equational derivation.
    Normalize { input: String },
    /// Derive `P <= Q` in the may theory, or the must theory with `--must`.
    Prove {
        #[arg(long)]
        must: bool,
        p: String,
        q: String,
    },
    /// Resolution outcomes of a test application, with a resolution per vertex.
    Resolutions {
        #[arg(long)]
        test: String,
        process: String,
        /// Cap on enumerated resolutions.
        #[arg(long, default_value_t = 100_000)]
        limit: usize,
    },
    /// Run the oracle equalities on one test application, or on seeded samples.
    Crosscheck {
        #[arg(long, requires = "process")]
        test: Option<String>,
        process: Option<String>,
        /// A resolution (JSON) to validate against the application.
        #[arg(long, requires = "test")]
        resolution: Option<String>,
        /// Number of seeded samples when no test is given.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Print seeded or exhaustive terms, tests or formulas.
    Corpus {
        #[arg(long, value_enum, default_value_t = CorpusKind::Terms)]
        kind: CorpusKind,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Maximum prefixes for the exhaustive corpus.
        #[arg(long, default_value_t = 2)]
        prefixes: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    std::panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    let format = cli.global.format;
    match catch_unwind(AssertUnwindSafe(|| commands::run(&cli))) {
        Ok(Ok(report)) => {
            print!("{}", report.render(format));
            ExitCode::from(if report.positive { 0 } else { 1 })
        }
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
        Err(_) => ExitCode::from(3),
    }
}
