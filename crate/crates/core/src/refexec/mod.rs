//! Reference execution of algorithms on dense matrices.
//!
//! Statements are dispatched on their routine name; the segment is matched
//! structurally against the catalog to recover kernel arguments, so code
//! read back from text executes exactly like the derived algorithm. The
//! [`oracle`] evaluates an expression literally without any rewriting.

mod instance;
mod matrix;

use std::collections::BTreeMap;

pub use instance::{conforming_matrix, random_instance, InstanceError, SequenceInstance, SPD_SHIFT};
pub use matrix::{
    cholesky, gemm, gemv, gepp_inverse, householder_qr, scal, scal_add, svd, symmetric_eig, syrk, trsm, trsv,
    DenseMatrix, KernelError,
};

use crate::derivation::{Algorithm, Equation};
use crate::expr::Expr;
use crate::kernels::{match_pattern, Catalog, Guard};
use crate::properties::{FactorKind, Property};
use crate::seqloop::{LoopItem, ScheduledAlgorithm};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("operand `{0}` is not bound")]
    Unbound(String),
    #[error("statement {index} ({statement}): {source}")]
    Kernel {
        index: usize,
        statement: String,
        source: KernelError,
    },
    #[error("no numeric routine for `{0}`")]
    UnknownKernel(String),
    #[error("`{statement}` does not match any `{kernel}` pattern")]
    NoMatch { kernel: String, statement: String },
    #[error("cannot evaluate `{expr}`: {source}")]
    Eval { expr: String, source: KernelError },
}

/// Operand bindings and FLOP counters.
#[derive(Clone, Debug, Default)]
pub struct ExecutionEnv {
    pub values: BTreeMap<String, DenseMatrix>,
    pub flops: BTreeMap<String, u64>,
}

impl ExecutionEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: &str, m: DenseMatrix) {
        self.values.insert(name.to_string(), m);
    }

    pub fn get(&self, name: &str) -> Result<&DenseMatrix, ExecError> {
        self.values
            .get(name)
            .ok_or_else(|| ExecError::Unbound(name.to_string()))
    }

    pub fn count(&mut self, kernel: &str, f: u64) {
        *self.flops.entry(kernel.to_string()).or_insert(0) += f;
    }

    pub fn total_flops(&self) -> u64 {
        self.flops.values().sum()
    }

    /// Total excluding the iterative eigen and singular value solvers.
    pub fn direct_flops(&self) -> u64 {
        self.flops
            .iter()
            .filter(|(k, _)| !ITERATIVE.contains(&k.as_str()))
            .map(|(_, v)| v)
            .sum()
    }
}

/// Routines whose operation count depends on convergence.
pub const ITERATIVE: &[&str] = &["syev", "svd"];

/// Intermediate values of the oracle; the identity stays symbolic until a
/// size is known.
#[derive(Clone, Debug)]
enum Val {
    Scalar(f64),
    Ident(f64),
    Mat(DenseMatrix),
}

fn eval_err(e: &Expr, source: KernelError) -> ExecError {
    ExecError::Eval {
        expr: e.to_string(),
        source,
    }
}

fn eval(e: &Expr, env: &ExecutionEnv) -> Result<Val, ExecError> {
    Ok(match e {
        Expr::Literal(r) => Val::Scalar(*r.numer() as f64 / *r.denom() as f64),
        Expr::Operand { name, scalar } => {
            let m = env.get(name)?;
            if *scalar {
                Val::Scalar(m[(0, 0)])
            } else {
                Val::Mat(m.clone())
            }
        }
        Expr::Identity => Val::Ident(1.0),
        Expr::Neg(x) => times(Val::Scalar(-1.0), eval(x, env)?).map_err(|k| eval_err(e, k))?,
        Expr::Trans(x) => match eval(x, env)? {
            Val::Mat(m) => Val::Mat(m.transpose()),
            v => v,
        },
        Expr::Inv(x) => match eval(x, env)? {
            Val::Scalar(s) if s != 0.0 => Val::Scalar(1.0 / s),
            Val::Ident(s) if s != 0.0 => Val::Ident(1.0 / s),
            Val::Mat(m) => Val::Mat(gepp_inverse(&m).map_err(|k| eval_err(e, k))?),
            _ => return Err(eval_err(e, KernelError::Singular)),
        },
        Expr::Plus(xs) => {
            let mut acc: Option<Val> = None;
            for x in xs {
                let v = eval(x, env)?;
                acc = Some(match acc {
                    None => v,
                    Some(a) => plus(a, v).map_err(|k| eval_err(e, k))?,
                });
            }
            acc.unwrap_or(Val::Scalar(0.0))
        }
        Expr::Times(xs) => {
            let mut acc = Val::Scalar(1.0);
            for x in xs {
                acc = times(acc, eval(x, env)?).map_err(|k| eval_err(e, k))?;
            }
            acc
        }
    })
}

fn plus(a: Val, b: Val) -> Result<Val, KernelError> {
    let shape = || KernelError::Shape("sum of incompatible terms".into());
    Ok(match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(x + y),
        (Val::Ident(x), Val::Ident(y)) => Val::Ident(x + y),
        (Val::Mat(m), Val::Mat(n)) => Val::Mat(m.add(&n)?),
        (Val::Mat(m), Val::Ident(s)) | (Val::Ident(s), Val::Mat(m)) => {
            if !m.is_square() {
                return Err(shape());
            }
            let mut r = m;
            for i in 0..r.rows() {
                r[(i, i)] += s;
            }
            Val::Mat(r)
        }
        _ => return Err(shape()),
    })
}

fn times(a: Val, b: Val) -> Result<Val, KernelError> {
    Ok(match (a, b) {
        (Val::Scalar(x), Val::Scalar(y)) => Val::Scalar(x * y),
        (Val::Scalar(x), Val::Ident(y)) | (Val::Ident(y), Val::Scalar(x)) => Val::Ident(x * y),
        (Val::Ident(x), Val::Ident(y)) => Val::Ident(x * y),
        (Val::Scalar(x), Val::Mat(m)) | (Val::Mat(m), Val::Scalar(x)) => Val::Mat(m.scale(x)),
        (Val::Ident(x), Val::Mat(m)) | (Val::Mat(m), Val::Ident(x)) => Val::Mat(m.scale(x)),
        (Val::Mat(m), Val::Mat(n)) => Val::Mat(m.matmul(&n)?),
    })
}

/// Evaluates an expression literally; inverses use Gaussian elimination
/// with partial pivoting.
pub fn evaluate(e: &Expr, env: &ExecutionEnv) -> Result<DenseMatrix, ExecError> {
    Ok(match eval(e, env)? {
        Val::Scalar(s) => DenseMatrix::scalar(s),
        Val::Ident(_) => {
            return Err(eval_err(e, KernelError::Shape("identity of unknown size".into())));
        }
        Val::Mat(m) => m,
    })
}

/// Direct evaluation of the right-hand side of an equation.
pub fn oracle(eq: &Equation, env: &ExecutionEnv) -> Result<DenseMatrix, ExecError> {
    evaluate(&eq.rhs, env)
}

fn guards_hold_numerically(guards: &[Guard], values: &BTreeMap<String, DenseMatrix>) -> bool {
    guards.iter().all(|g| {
        let Some(v) = values.get(&g.hole) else {
            return true;
        };
        g.clauses.iter().all(|clause| {
            // dense routines accept diagonal data, so only positive
            // requirements are checked
            if clause.iter().any(|l| l.prop != Property::Diagonal || l.negated) {
                return true;
            }
            v.is_diagonal()
        })
    })
}

/// Executes one statement: `outputs := kernel(segment)`.
pub fn execute_call(
    index: usize,
    kernel: &str,
    segment: &Expr,
    outputs: &[String],
    catalog: &Catalog,
    env: &mut ExecutionEnv,
) -> Result<(), ExecError> {
    let statement = || format!("{} := {kernel}({segment})", outputs.join(", "));
    let kerr = |source: KernelError| ExecError::Kernel {
        index,
        statement: statement(),
        source,
    };
    if let Some(f) = catalog.factors.iter().find(|f| f.name == kernel) {
        let a = evaluate(segment, env)?;
        let (vals, flops): (Vec<DenseMatrix>, u64) = match f.kind {
            FactorKind::Cholesky => {
                let (l, fl) = cholesky(&a).map_err(kerr)?;
                (vec![l], fl)
            }
            FactorKind::Qr => {
                let (q, r, fl) = householder_qr(&a).map_err(kerr)?;
                (vec![q, r], fl)
            }
            FactorKind::Eig => {
                let (z, w, fl) = symmetric_eig(&a).map_err(kerr)?;
                (vec![z, w], fl)
            }
            FactorKind::Svd => {
                let (u, s, v, fl) = svd(&a).map_err(kerr)?;
                (vec![u, s, v], fl)
            }
        };
        if vals.len() != outputs.len() {
            return Err(kerr(KernelError::Shape(format!(
                "{} outputs for {} factors",
                outputs.len(),
                vals.len()
            ))));
        }
        for (o, v) in outputs.iter().zip(vals) {
            env.bind(o, v);
        }
        env.count(kernel, flops);
        return Ok(());
    }

    let mut found = false;
    for kp in catalog.kernels.iter().filter(|k| k.name == kernel) {
        found = true;
        for b in match_pattern(&kp.pattern, segment, &kp.scalar_holes) {
            let mut values = BTreeMap::new();
            for (hole, e) in &b {
                values.insert(hole.clone(), evaluate(e, env)?);
            }
            if !guards_hold_numerically(&kp.guards, &values) {
                continue;
            }
            let arg = |h: &str| values.get(h).ok_or_else(|| ExecError::UnknownKernel(kp.id()));
            let s = |h: &str| -> Result<f64, ExecError> { Ok(arg(h)?[(0, 0)]) };
            let (out, flops) = match (kp.name.as_str(), kp.variant.as_deref()) {
                ("scal-add", _) => scal_add(s("alpha")?, arg("A")?, s("beta")?),
                ("trsv", _) => trsv(arg("A")?, arg("x")?),
                ("trsm", _) => trsm(arg("A")?, arg("B")?),
                ("syrk", _) => Ok(syrk(arg("A")?)),
                ("gemv", _) => gemv(arg("A")?, arg("x")?),
                ("gemm", _) => gemm(arg("A")?, arg("B")?),
                ("scal", Some("left-inverse")) => scal(arg("D")?, arg("A")?, true, true),
                ("scal", Some("right-inverse")) => scal(arg("D")?, arg("A")?, false, true),
                ("scal", Some("left")) => scal(arg("D")?, arg("A")?, true, false),
                ("scal", Some("right")) => scal(arg("D")?, arg("A")?, false, false),
                _ => return Err(ExecError::UnknownKernel(kp.id())),
            }
            .map_err(kerr)?;
            let [o] = outputs else {
                return Err(kerr(KernelError::Shape(format!("{} outputs", outputs.len()))));
            };
            env.bind(o, out);
            env.count(kernel, flops);
            return Ok(());
        }
    }
    if !found {
        return Err(ExecError::UnknownKernel(kernel.to_string()));
    }
    Err(ExecError::NoMatch {
        kernel: kernel.to_string(),
        statement: statement(),
    })
}

/// Runs every statement in order and returns the output.
pub fn execute(alg: &Algorithm, env: &mut ExecutionEnv, catalog: &Catalog) -> Result<DenseMatrix, ExecError> {
    for (k, s) in alg.statements.iter().enumerate() {
        execute_call(k, &s.kernel, &s.segment, &s.outputs, catalog, env)?;
    }
    env.get(&alg.output).cloned()
}

/// Outputs of a sequence run keyed by the values of the output indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultArray {
    pub indices: Vec<String>,
    pub values: BTreeMap<Vec<usize>, DenseMatrix>,
}

/// A statement of a loop nest as seen by the sequence executor.
pub struct NestStatement<'a> {
    pub kernel: &'a str,
    pub segment: &'a Expr,
    pub outputs: &'a [String],
}

/// Loop-nest node for [`execute_nest`].
pub enum Nest<'a> {
    Stmt(usize, NestStatement<'a>),
    /// Binds `name` to the value of input `operand` at the current indices.
    Slice {
        name: &'a str,
        operand: &'a str,
    },
    Loop {
        index: String,
        body: Vec<Nest<'a>>,
    },
}

fn nest_of(sched: &ScheduledAlgorithm) -> Vec<Nest<'_>> {
    fn go<'a>(items: &'a [LoopItem], s: &'a ScheduledAlgorithm) -> Vec<Nest<'a>> {
        items
            .iter()
            .map(|it| match it {
                LoopItem::Stmt(k) => {
                    let st = &s.algorithm.statements[*k];
                    Nest::Stmt(
                        *k,
                        NestStatement {
                            kernel: &st.kernel,
                            segment: &st.segment,
                            outputs: &st.outputs,
                        },
                    )
                }
                LoopItem::Loop { index, body, .. } => Nest::Loop {
                    index: index.clone(),
                    body: go(body, s),
                },
            })
            .collect()
    }
    go(&sched.body, sched)
}

/// Executes a scheduled algorithm over every index value of the instance.
pub fn execute_scheduled(
    sched: &ScheduledAlgorithm,
    inst: &SequenceInstance,
    catalog: &Catalog,
) -> Result<(ResultArray, ExecutionEnv), ExecError> {
    execute_nest(&nest_of(sched), &sched.algorithm.output, inst, catalog)
}

/// Executes a loop nest. Slices of varying inputs are bound at loop
/// entry; values computed inside a loop stay visible to later loops, so
/// temporaries depending on one index are kept per index value.
pub fn execute_nest(
    nest: &[Nest<'_>],
    output: &str,
    inst: &SequenceInstance,
    catalog: &Catalog,
) -> Result<(ResultArray, ExecutionEnv), ExecError> {
    struct Run<'a> {
        inst: &'a SequenceInstance,
        catalog: &'a Catalog,
        output: &'a str,
        env: ExecutionEnv,
        assignment: BTreeMap<String, usize>,
        /// Saved values per (name, index values of the loops it was computed in).
        stored: BTreeMap<(String, Vec<(String, usize)>), DenseMatrix>,
        /// Loop indices enclosing the statement that computed each temporary.
        scope: BTreeMap<String, Vec<String>>,
        result: ResultArray,
    }

    impl Run<'_> {
        fn bind_inputs(&mut self) {
            for (name, _) in self.inst.operands() {
                if let Some(v) = self.inst.value(name, &self.assignment) {
                    self.env.bind(name, v.clone());
                }
            }
        }

        fn restore(&mut self, names: &[String]) {
            for n in names {
                let Some(loops) = self.scope.get(n) else {
                    continue;
                };
                let key: Vec<(String, usize)> = loops
                    .iter()
                    .map(|l| (l.clone(), self.assignment.get(l).copied().unwrap_or(0)))
                    .collect();
                if let Some(v) = self.stored.get(&(n.clone(), key)) {
                    self.env.bind(n, v.clone());
                }
            }
        }

        fn walk(&mut self, items: &[Nest<'_>], loops: &mut Vec<String>) -> Result<(), ExecError> {
            for it in items {
                match it {
                    Nest::Stmt(k, st) => {
                        let inputs = st.segment.operands();
                        self.restore(&inputs);
                        execute_call(*k, st.kernel, st.segment, st.outputs, self.catalog, &mut self.env)?;
                        for o in st.outputs {
                            if o == self.output {
                                let key: Vec<usize> = self
                                    .result
                                    .indices
                                    .iter()
                                    .map(|i| self.assignment.get(i).copied().unwrap_or(0))
                                    .collect();
                                self.result.values.insert(key, self.env.get(o)?.clone());
                                continue;
                            }
                            if loops.len() == self.inst.index_count() {
                                // innermost level: consumed within this iteration
                                self.scope.remove(o);
                                continue;
                            }
                            let key: Vec<(String, usize)> =
                                loops.iter().map(|l| (l.clone(), self.assignment[l])).collect();
                            self.stored.insert((o.clone(), key), self.env.get(o)?.clone());
                            self.scope.insert(o.clone(), loops.clone());
                        }
                    }
                    Nest::Slice { name, operand } => {
                        let v = self
                            .inst
                            .value(operand, &self.assignment)
                            .ok_or_else(|| ExecError::Unbound(operand.to_string()))?;
                        self.env.bind(name, v.clone());
                    }
                    Nest::Loop { index, body } => {
                        let extent = self.inst.extent(index);
                        loops.push(index.clone());
                        for v in 0..extent {
                            self.assignment.insert(index.clone(), v);
                            self.bind_inputs();
                            self.walk(body, loops)?;
                        }
                        loops.pop();
                        self.assignment.remove(index);
                        self.bind_inputs();
                    }
                }
            }
            Ok(())
        }
    }

    let mut run = Run {
        inst,
        catalog,
        output,
        env: ExecutionEnv::new(),
        assignment: BTreeMap::new(),
        stored: BTreeMap::new(),
        scope: BTreeMap::new(),
        result: ResultArray {
            indices: inst.output_indices().to_vec(),
            values: BTreeMap::new(),
        },
    };
    run.bind_inputs();
    run.walk(nest, &mut Vec::new())?;
    Ok((run.result, run.env))
}

/// Direct evaluation for every combination of output index values.
pub fn oracle_sequence(eq: &Equation, inst: &SequenceInstance) -> Result<ResultArray, ExecError> {
    let indices = inst.output_indices().to_vec();
    let mut values = BTreeMap::new();
    for key in inst.grid(&indices) {
        let assignment: BTreeMap<String, usize> = indices.iter().cloned().zip(key.iter().copied()).collect();
        let env = inst.env_at(&assignment);
        values.insert(key, oracle(eq, &env)?);
    }
    Ok(ResultArray { indices, values })
}

/// Largest relative error between two result arrays over the keys of `reference`.
pub fn max_rel_err(got: &ResultArray, reference: &ResultArray) -> f64 {
    reference
        .values
        .iter()
        .map(|(k, r)| got.values.get(k).map_or(f64::INFINITY, |g| g.rel_err(r)))
        .fold(0.0, f64::max)
}
