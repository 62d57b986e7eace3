//! Text and JSON reports for derived algorithms.

use std::fmt::Write as _;

use serde::Serialize;

use crate::codegen::{build_ast, emit, CodegenError};
use crate::cost::{CostPolynomial, Monomial, Regime};
use crate::derivation::Algorithm;
use crate::problem::Problem;
use crate::seqloop::{schedule, IndexSet, ScheduledAlgorithm};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Section {
    Algorithms,
    Cost,
    Code,
    Json,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioCost {
    pub scenario: String,
    pub exact: String,
    pub leading: Vec<String>,
    pub big_o: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlgorithmReport {
    pub name: String,
    pub kernels: Vec<String>,
    pub statements: Vec<String>,
    pub cost: Vec<ScenarioCost>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub equation: String,
    pub algorithms: Vec<AlgorithmReport>,
}

/// Scenario names by number of loop indices.
pub const SCENARIOS: &[&str] = &["single", "1D", "2D"];

/// Cost of `sched` when only the first `k` loop indices are active; the
/// extents of the others are set to one.
pub fn scenario_cost(sched: &ScheduledAlgorithm, k: usize) -> CostPolynomial {
    if k == 0 {
        return sched.algorithm.cost();
    }
    let dropped: IndexSet = sched.spec.indices.iter().skip(k).map(|i| i.name.clone()).collect();
    sched
        .spec
        .extents(&dropped)
        .iter()
        .fold(sched.total.clone(), |acc, e| acc.set_one(e))
}

/// Leading terms with the first `k` loop indices active. A single instance
/// reduces the flat cost. Partial sequences project the leading terms of
/// the full sequence onto extents of one, without reducing again.
pub fn scenario_leading(sched: &ScheduledAlgorithm, k: usize, regime: &Regime) -> Vec<Monomial> {
    let mut out = if k == 0 {
        sched.algorithm.cost().leading_terms(regime).unwrap_or_default()
    } else {
        let dropped: IndexSet = sched.spec.indices.iter().skip(k).map(|i| i.name.clone()).collect();
        let extents = sched.spec.extents(&dropped);
        let full = sched.total.leading_terms(regime).unwrap_or_default();
        let mut ms: Vec<Monomial> = full
            .iter()
            .map(|m| extents.iter().fold(m.clone(), |m, e| m.without(e)))
            .collect();
        ms.sort();
        ms.dedup();
        ms
    };
    regime.sort_terms(&mut out);
    out
}

fn scenarios(sched: &ScheduledAlgorithm, regime: &Regime) -> Vec<ScenarioCost> {
    let order = regime.symbol_order();
    (0..=sched.spec.indices.len())
        .map(|k| {
            let exact = scenario_cost(sched, k);
            let leading = scenario_leading(sched, k, regime);
            ScenarioCost {
                scenario: SCENARIOS[k].to_string(),
                exact: exact.render(&order),
                leading: leading.iter().map(|m| m.render(&order)).collect(),
                big_o: regime.big_o(&leading),
            }
        })
        .collect()
}

/// Builds the report for `algorithms`; code is included when `with_code`.
pub fn build(problem: &Problem, algorithms: &[Algorithm], with_code: Option<&str>) -> Result<Report, CodegenError> {
    let regime = problem.regime();
    let mut out = Vec::new();
    for a in algorithms {
        let sched = schedule(a, &problem.spec);
        let code = match with_code {
            Some(target) => Some(emit(&build_ast(&sched), target)?),
            None => None,
        };
        out.push(AlgorithmReport {
            name: a.name.clone(),
            kernels: a.kernel_names().iter().map(|k| k.to_string()).collect(),
            statements: a.statements.iter().map(|s| s.to_string()).collect(),
            cost: scenarios(&sched, &regime),
            code,
        });
    }
    Ok(Report {
        schema: SCHEMA,
        equation: problem.equation.to_string(),
        algorithms: out,
    })
}

/// Renders the requested sections in the order algorithms, cost, code,
/// json.
pub fn render(report: &Report, sections: &[Section]) -> String {
    let mut sections = sections.to_vec();
    sections.sort();
    sections.dedup();
    let mut out = String::new();
    for s in sections {
        match s {
            Section::Algorithms => {
                let _ = writeln!(out, "== algorithms ({}) ==", report.algorithms.len());
                for a in &report.algorithms {
                    let _ = writeln!(out, "{}: [{}]", a.name, a.kernels.join(", "));
                    for st in &a.statements {
                        let _ = writeln!(out, "  {st}");
                    }
                }
            }
            Section::Cost => {
                let _ = writeln!(out, "== cost ==");
                for a in &report.algorithms {
                    let _ = writeln!(out, "{}", a.name);
                    for c in &a.cost {
                        let _ = writeln!(out, "  {:<7} {}  {}", c.scenario, c.big_o, c.exact);
                    }
                }
            }
            Section::Code => {
                let _ = writeln!(out, "== code ==");
                for a in &report.algorithms {
                    if let Some(code) = &a.code {
                        out.push_str(code);
                        out.push('\n');
                    }
                }
            }
            Section::Json => {
                let json = serde_json::to_string_pretty(report).unwrap_or_default();
                out.push_str(&json);
                out.push('\n');
            }
        }
    }
    out
}

/// Relative error bound for `--validate`.
pub const VALIDATION_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Instance(#[from] crate::refexec::InstanceError),
    #[error("{algorithm}: {source}")]
    Exec {
        algorithm: String,
        source: crate::refexec::ExecError,
    },
}

/// Runs every scheduled algorithm on one random instance and returns its
/// maximum relative error against the direct evaluation.
pub fn validate(
    problem: &Problem,
    algorithms: &[Algorithm],
    sizes: &std::collections::BTreeMap<String, i64>,
    seed: u64,
) -> Result<Vec<f64>, ValidationError> {
    use crate::refexec::{execute_scheduled, max_rel_err, oracle_sequence, random_instance};
    let catalog = crate::kernels::Catalog::default();
    let inst = random_instance(&problem.ctx, &problem.spec, sizes, seed)?;
    let exec = |name: &str, e| ValidationError::Exec {
        algorithm: name.to_string(),
        source: e,
    };
    let reference = oracle_sequence(&problem.equation, &inst).map_err(|e| exec("oracle", e))?;
    algorithms
        .iter()
        .map(|a| {
            let (got, _) =
                execute_scheduled(&schedule(a, &problem.spec), &inst, &catalog).map_err(|e| exec(&a.name, e))?;
            Ok(max_rel_err(&got, &reference))
        })
        .collect()
}
