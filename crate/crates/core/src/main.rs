use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use lacomp::derivation::{derive, Limits};
use lacomp::kernels::Catalog;
use lacomp::problem::parse_problem;
use lacomp::report::{self, Section, VALIDATION_TOL};

/// Derives, ranks and schedules kernel sequences for a matrix equation.
#[derive(Parser, Debug)]
#[command(name = "lacomp", version)]
struct Cli {
    /// Problem file.
    #[arg(long)]
    input: PathBuf,
    /// Report sections; repeatable.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["algorithms", "cost"])]
    emit: Vec<Section>,
    #[arg(long, default_value_t = Limits::default().max_depth)]
    max_depth: usize,
    #[arg(long, env = "LACOMP_MAX_NODES", default_value_t = Limits::default().max_nodes)]
    max_nodes: usize,
    /// Report only the K cheapest algorithms.
    #[arg(long, value_name = "K")]
    top: Option<usize>,
    /// Check every reported algorithm against direct evaluation, e.g.
    /// `n=32,p=3,m=4,t=3,seed=1`. Without a value the sizes of the
    /// problem's `validate` line are used.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    validate: Option<String>,
    /// Code generation target.
    #[arg(long, default_value = "pseudo")]
    target: String,
}

const EXIT_PARSE: u8 = 2;
const EXIT_NO_ALGORITHM: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

fn parse_sizes(s: &str) -> Result<(BTreeMap<String, i64>, u64), String> {
    let mut sizes = BTreeMap::new();
    let mut seed = 0;
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected `name=value`, got `{part}`"))?;
        let v: i64 = v.trim().parse().map_err(|_| format!("bad value in `{part}`"))?;
        if v < 0 || (k != "seed" && v == 0) {
            return Err(format!("bad value in `{part}`"));
        }
        if k.trim() == "seed" {
            seed = v as u64;
        } else {
            sizes.insert(k.trim().to_string(), v);
        }
    }
    Ok((sizes, seed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.input.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let problem = match parse_problem(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.input.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let validation = match cli.validate.as_deref() {
        None => None,
        Some("") => match &problem.validate {
            Some(sizes) => Some((sizes.clone(), 0)),
            None => {
                eprintln!("error: no sizes given and the problem has no `validate` line");
                return ExitCode::from(EXIT_PARSE);
            }
        },
        Some(s) => match parse_sizes(s) {
            Ok(v) => Some(v),
            Err(e) => {
                eprintln!("error: --validate: {e}");
                return ExitCode::from(EXIT_PARSE);
            }
        },
    };

    let limits = Limits {
        max_depth: cli.max_depth,
        max_nodes: cli.max_nodes,
        ..Limits::default()
    };
    let mut algorithms = match derive(&problem.equation, &problem.ctx, &Catalog::default(), limits) {
        Ok(d) => d.algorithms,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NO_ALGORITHM);
        }
    };
    if let Some(k) = cli.top {
        algorithms.truncate(k);
    }

    let with_code = cli.emit.contains(&Section::Code) || cli.emit.contains(&Section::Json);
    let rep = match report::build(&problem, &algorithms, with_code.then_some(cli.target.as_str())) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    print!("{}", report::render(&rep, &cli.emit));

    if let Some((sizes, seed)) = validation {
        let errs = match report::validate(&problem, &algorithms, &sizes, seed) {
            Ok(e) => e,
            Err(e) => {
                eprintln!("validation failed: {e}");
                return ExitCode::from(EXIT_MISMATCH);
            }
        };
        let bad: Vec<_> = algorithms
            .iter()
            .zip(&errs)
            .filter(|(_, e)| e.is_nan() || **e > VALIDATION_TOL)
            .collect();
        if !bad.is_empty() {
            for (a, e) in bad {
                eprintln!("{}: max relative error {e:.3e} exceeds {VALIDATION_TOL:e}", a.name);
            }
            return ExitCode::from(EXIT_MISMATCH);
        }
        println!("all {} algorithms match oracle", algorithms.len());
    }
    ExitCode::SUCCESS
}
