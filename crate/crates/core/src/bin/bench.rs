use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irerm::error::HarnessError;
use irerm::harness::{
    aggregate, check_dir, read_summaries, render_checks, run_experiment, table_csv, table_markdown,
    write_plots, CheckOptions, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "bench", about = "Run and analyse noisy least-squares benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver over a grid of problems and seeds.
    Run(RunArgs),
    /// Aggregate final objective values into a table.
    Table {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Draw the best run of every cell as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Re-check invariants and theory diagnostics of recorded runs.
    Check {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.9)]
        pi: f64,
        /// Use this L instead of estimating it per run.
        #[arg(long)]
        lipschitz: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated ids or `all`.
    #[arg(long)]
    problems: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "budget-mult")]
    budget_mult: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    kmax: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long = "sample-cap")]
    sample_cap: Option<String>,
    /// Solver parameter as key=value, e.g. `--set eta1=0.2`.
    #[arg(long = "set")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        let flags = [
            ("solver", &self.solver),
            ("variant", &self.variant),
            ("problems", &self.problems),
            ("runs", &self.runs),
            ("sigma", &self.sigma),
            ("seed", &self.seed),
            ("out", &self.out),
            ("budget_mult", &self.budget_mult),
            ("budget", &self.budget),
            ("kmax", &self.kmax),
            ("n", &self.n),
            ("jobs", &self.jobs),
            ("sample_cap", &self.sample_cap),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        for kv in &self.set {
            c.apply_text(kv, "--set")?;
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.config()?;
            let outcomes = run_experiment(&config)?;
            let mut violated = 0;
            for o in &outcomes {
                let s = &o.summary;
                let f = s.final_exact_f.map_or("-".to_string(), |f| format!("{f:.6e}"));
                println!(
                    "{}_{} {} run {:02}: f = {f}, cost = {}, iterations = {}, {}",
                    s.solver, s.variant, s.problem, s.run_index, s.final_cost, s.iterations, s.termination
                );
                for v in &o.violations {
                    println!("    violation: {v}");
                }
                if !o.violations.is_empty() {
                    violated += 1;
                }
            }
            println!("{} runs written to {}", outcomes.len(), config.cell_dir().display());
            Ok(if violated > 0 {
                eprintln!("{violated} runs violated solver invariants");
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Table { input, format } => {
            let table = aggregate(&read_summaries(&input)?);
            match format {
                Format::Csv => print!("{}", table_csv(&table)),
                Format::Md => print!("{}", table_markdown(&table)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { input } => {
            for path in write_plots(&input)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            input,
            kappa,
            epsilon,
            pi,
            lipschitz,
        } => {
            let mut options = CheckOptions::new(kappa, epsilon);
            options.pi = pi;
            options.lipschitz = lipschitz;
            let checks = check_dir(&input, &options)?;
            print!("{}", render_checks(&checks));
            Ok(if checks.iter().any(|c| c.failed()) {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}
