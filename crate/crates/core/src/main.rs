use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use nnsubspace::harness::checks::run_checks;
use nnsubspace::harness::{run_experiment, ExperimentConfig, RunOptions, SCHEMA_VERSION};
use nnsubspace::losses::LossKind;
use nnsubspace::problems::catalog_entries;
use nnsubspace::quadrature::{gauss_jacobi, gauss_legendre, gauss_lobatto};
use nnsubspace::Result;

#[derive(Parser)]
#[command(name = "nnsubspace", version, about = "Neural-network subspace Galerkin solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one problem and write history.csv, summary.json, grid.csv and params.ckpt.
    Run(RunArgs),
    /// Quadrature utilities.
    Quad {
        #[command(subcommand)]
        command: QuadCommand,
    },
    /// Problem catalog.
    Problems {
        #[command(subcommand)]
        command: ProblemsCommand,
    },
    /// Run the invariant suites; exits nonzero if any fails.
    Check,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    problem: Option<String>,
    /// Test label such as 1.1 or 4.1.
    #[arg(long)]
    test: Option<String>,
    /// ritz, residual or posterior.
    #[arg(long)]
    loss: Option<String>,
    /// JSON configuration; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write A, B, c and the eigenvalues for every step.
    #[arg(long)]
    dump_system: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Legendre,
    Lobatto,
    Jacobi,
}

#[derive(Subcommand)]
enum QuadCommand {
    /// Print nodes and weights on [-1, 1] as CSV.
    Table {
        #[arg(long, value_enum, default_value = "legendre")]
        family: FamilyArg,
        #[arg(long)]
        n: usize,
        /// Jacobi exponent of (1 - x).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha: f64,
        /// Jacobi exponent of (1 + x).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta: f64,
    },
}

#[derive(Subcommand)]
enum ProblemsCommand {
    /// Names, test labels and default parameters.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn config_document(args: &RunArgs) -> Result<Value> {
    let mut doc = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => json!({ "schema_version": SCHEMA_VERSION }),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| nnsubspace::Error::Config("configuration must be a JSON object".into()))?;
    if let Some(p) = &args.problem {
        obj.insert("problem".into(), json!(p));
    }
    if let Some(t) = &args.test {
        obj.insert("test".into(), json!(t));
    }
    if let Some(l) = &args.loss {
        obj.insert("loss".into(), serde_json::to_value(LossKind::parse(l)?)?);
    }
    if let Some(s) = args.scale {
        let name = match s {
            ScaleArg::Desk => "desk",
            ScaleArg::Paper => "paper",
        };
        obj.insert("scale".into(), json!(name));
    }
    if let Some(seed) = args.seed {
        obj.insert("seed".into(), json!(seed));
    }
    Ok(doc)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::from_json(&config_document(&args)?)?;
    let opts = RunOptions { dump_system: args.dump_system };
    let ex = run_experiment(&cfg, Some(&args.out), &opts)?;
    let s = &ex.summary;
    println!(
        "{} {}: e_test {:.6e}, e_energy {}, loss {:.6e}, {:.1} s -> {}",
        s.problem,
        s.test.as_deref().unwrap_or("-"),
        s.report.e_test,
        s.report.e_energy.map_or("-".to_string(), |e| format!("{e:.6e}")),
        s.last.loss.total,
        s.wall_time_s,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn quad_table(family: FamilyArg, n: usize, alpha: f64, beta: f64) -> Result<ExitCode> {
    let rule = match family {
        FamilyArg::Legendre => gauss_legendre(n)?,
        FamilyArg::Lobatto => gauss_lobatto(n)?,
        FamilyArg::Jacobi => gauss_jacobi(n, alpha, beta)?,
    };
    println!("index,node,weight");
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        println!("{i},{x:.16e},{w:.16e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn problems_list(as_json: bool) -> Result<ExitCode> {
    let entries = catalog_entries();
    if as_json {
        println!("{}", serde_json::to_string_pretty(&entries)?);
        return Ok(ExitCode::SUCCESS);
    }
    for e in entries {
        println!("{}: {}", e.name, e.description);
        println!("  defaults: {}", e.default_params);
        for (label, params) in &e.tests {
            println!("  test {label}: {params}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn check() -> Result<ExitCode> {
    let results = run_checks()?;
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        println!(
            "{} {}: worst {:.3e} (tolerance {:.1e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Quad {
            command: QuadCommand::Table { family, n, alpha, beta },
        } => quad_table(family, n, alpha, beta),
        Command::Problems {
            command: ProblemsCommand::List { json },
        } => problems_list(json),
        Command::Check => check(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
