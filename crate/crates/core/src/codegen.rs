//! Pseudo-code for scheduled algorithms.
//!
//! ```text
//! # algorithm: alg01
//! b := alloc(p, 1, m, t)
//! for i in 1..m:
//!   X_i := slice(X, i)
//!   W := trsm(inv(L)*X_i)  # cost: n^2 p
//! ```
//!
//! [`parse_code`] reads the same format back and [`execute_code`] runs it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::expr::{canonicalize, parse_expr, Expr};
use crate::kernels::Catalog;
use crate::refexec::{execute_nest, ExecError, ExecutionEnv, Nest, NestStatement, ResultArray, SequenceInstance};
use crate::seqloop::{LoopItem, ScheduledAlgorithm};

#[derive(Clone, Debug, PartialEq)]
pub enum CodeNode {
    /// Result array of `rows x cols` blocks, one per output index value.
    Alloc {
        name: String,
        rows: String,
        cols: String,
        extents: Vec<String>,
    },
    Slice {
        name: String,
        operand: String,
        indices: Vec<String>,
    },
    Stmt {
        index: usize,
        kernel: String,
        outputs: Vec<String>,
        /// Output indices when the statement writes into the result array.
        indexed: Vec<String>,
        segment: Expr,
        cost: String,
    },
    Loop {
        index: String,
        extent: String,
        body: Vec<CodeNode>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodeAst {
    pub name: String,
    pub nodes: Vec<CodeNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodegenError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub const TARGETS: &[&str] = &["pseudo"];

fn used_operands(items: &[LoopItem], sched: &ScheduledAlgorithm, out: &mut BTreeSet<String>) {
    for it in items {
        match it {
            LoopItem::Stmt(k) => out.extend(sched.algorithm.statements[*k].inputs()),
            LoopItem::Loop { body, .. } => used_operands(body, sched, out),
        }
    }
}

/// Lowers a schedule to code nodes. Inputs varying with a loop index are
/// sliced at the entry of the innermost loop binding all their indices.
pub fn build_ast(sched: &ScheduledAlgorithm) -> CodeAst {
    let alg = &sched.algorithm;
    let spec = &sched.spec;
    let ordered = |set: &BTreeSet<String>| -> Vec<String> {
        spec.indices
            .iter()
            .filter(|i| set.contains(&i.name))
            .map(|i| i.name.clone())
            .collect()
    };

    fn walk(
        items: &[LoopItem],
        sched: &ScheduledAlgorithm,
        loops: &mut BTreeSet<String>,
        slices: &mut BTreeMap<String, String>,
        ordered: &dyn Fn(&BTreeSet<String>) -> Vec<String>,
    ) -> Vec<CodeNode> {
        let alg = &sched.algorithm;
        let mut nodes = Vec::new();
        for it in items {
            match it {
                LoopItem::Stmt(k) => {
                    let s = &alg.statements[*k];
                    let map = slices.clone();
                    let segment = s.segment.rename(&|n| map.get(n).cloned());
                    let indexed = if s.outputs.len() == 1 && s.outputs[0] == alg.output {
                        ordered(&sched.spec.output)
                    } else {
                        Vec::new()
                    };
                    nodes.push(CodeNode::Stmt {
                        index: *k,
                        kernel: s.kernel.clone(),
                        outputs: s.outputs.clone(),
                        indexed,
                        segment,
                        cost: s.cost.to_string(),
                    });
                }
                LoopItem::Loop { index, extent, body } => {
                    loops.insert(index.clone());
                    let saved = slices.clone();
                    let mut used = BTreeSet::new();
                    used_operands(body, sched, &mut used);
                    let mut inner = Vec::new();
                    for o in used {
                        let var = sched.spec.variation_of(&o);
                        if !var.contains(index) || !var.is_subset(loops) {
                            continue;
                        }
                        let indices = ordered(&var);
                        let name = format!("{o}_{}", indices.concat());
                        slices.insert(o.clone(), name.clone());
                        inner.push(CodeNode::Slice {
                            name,
                            operand: o,
                            indices,
                        });
                    }
                    inner.extend(walk(body, sched, loops, slices, ordered));
                    nodes.push(CodeNode::Loop {
                        index: index.clone(),
                        extent: extent.clone(),
                        body: inner,
                    });
                    *slices = saved;
                    loops.remove(index);
                }
            }
        }
        nodes
    }

    let (rows, cols) = alg
        .ctx
        .operand(&alg.output)
        .map(|i| (i.rows.to_string(), i.cols.to_string()))
        .unwrap_or_else(|_| ("1".into(), "1".into()));
    let mut nodes = vec![CodeNode::Alloc {
        name: alg.output.clone(),
        rows,
        cols,
        extents: spec.extents(&spec.output),
    }];
    nodes.extend(walk(
        &sched.body,
        sched,
        &mut BTreeSet::new(),
        &mut BTreeMap::new(),
        &ordered,
    ));
    CodeAst {
        name: alg.name.clone(),
        nodes,
    }
}

/// Renders `ast` for `target`. Only `pseudo` is known.
pub fn emit(ast: &CodeAst, target: &str) -> Result<String, CodegenError> {
    if target != "pseudo" {
        return Err(CodegenError::UnknownTarget(target.to_string()));
    }
    fn lines(nodes: &[CodeNode], depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        for n in nodes {
            match n {
                CodeNode::Alloc {
                    name,
                    rows,
                    cols,
                    extents,
                } => {
                    let dims: Vec<&str> = [rows.as_str(), cols.as_str()]
                        .into_iter()
                        .chain(extents.iter().map(String::as_str))
                        .collect();
                    let _ = writeln!(out, "{pad}{name} := alloc({})", dims.join(", "));
                }
                CodeNode::Slice { name, operand, indices } => {
                    let _ = writeln!(out, "{pad}{name} := slice({operand}, {})", indices.join(", "));
                }
                CodeNode::Stmt {
                    kernel,
                    outputs,
                    indexed,
                    segment,
                    cost,
                    ..
                } => {
                    let lhs = if indexed.is_empty() {
                        outputs.join(", ")
                    } else {
                        format!("{}[{}]", outputs.join(", "), indexed.join(", "))
                    };
                    let _ = writeln!(out, "{pad}{lhs} := {kernel}({segment})  # cost: {cost}");
                }
                CodeNode::Loop { index, extent, body } => {
                    let _ = writeln!(out, "{pad}for {index} in 1..{extent}:");
                    lines(body, depth + 1, out);
                }
            }
        }
    }
    let mut out = format!("# algorithm: {}\n", ast.name);
    lines(&ast.nodes, 0, &mut out);
    Ok(out)
}

fn split_args(s: &str) -> Vec<String> {
    s.split(',')
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect()
}

/// Parses emitted pseudo-code. `is_scalar` classifies input operands;
/// slices of scalars and outputs of scalar expressions are scalars too.
pub fn parse_code(text: &str, is_scalar: &dyn Fn(&str) -> bool) -> Result<CodeAst, CodegenError> {
    let err = |line: usize, message: String| CodegenError::Parse { line, message };
    let mut name = String::new();
    let mut scalars: BTreeSet<String> = BTreeSet::new();
    // open loops as (index, extent) with their body so far; the root has no header
    type Frame = (Option<(String, String)>, Vec<CodeNode>);
    let mut stack: Vec<Frame> = vec![(None, Vec::new())];
    let mut count = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim_start_matches(' ');
        if trimmed.trim().is_empty() {
            continue;
        }
        if let Some(c) = trimmed.strip_prefix('#') {
            if let Some(n) = c.trim().strip_prefix("algorithm:") {
                name = n.trim().to_string();
            }
            continue;
        }
        let indent = raw.len() - trimmed.len();
        if indent % 2 != 0 {
            return Err(err(line, "indentation is not a multiple of two".into()));
        }
        let depth = indent / 2;
        if depth + 1 > stack.len() {
            return Err(err(line, "unexpected indentation".into()));
        }
        while stack.len() > depth + 1 {
            let (head, body) = stack.pop().unwrap_or_default();
            let (index, extent) = head.unwrap_or_default();
            if body.is_empty() {
                return Err(err(line, format!("empty loop over `{index}`")));
            }
            if let Some(top) = stack.last_mut() {
                top.1.push(CodeNode::Loop { index, extent, body });
            }
        }
        let t = trimmed.trim_end();
        if let Some(rest) = t.strip_prefix("for ") {
            let rest = rest
                .strip_suffix(':')
                .ok_or_else(|| err(line, "loop header must end with `:`".into()))?;
            let (index, range) = rest
                .split_once(" in ")
                .ok_or_else(|| err(line, "expected `for <index> in 1..<extent>:`".into()))?;
            let extent = range
                .trim()
                .strip_prefix("1..")
                .ok_or_else(|| err(line, "loop range must start at 1".into()))?;
            stack.push((Some((index.trim().to_string(), extent.trim().to_string())), Vec::new()));
            continue;
        }
        let (stmt, cost) = match t.split_once("  # cost:") {
            Some((s, c)) => (s, c.trim().to_string()),
            None => (t, String::new()),
        };
        let (lhs, rhs) = stmt.split_once(":=").ok_or_else(|| err(line, "expected `:=`".into()))?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        let open = rhs.find('(').ok_or_else(|| err(line, "expected a call".into()))?;
        let callee = &rhs[..open];
        let args = rhs[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| err(line, "unbalanced call".into()))?;
        let node = match callee {
            "alloc" => {
                let a = split_args(args);
                if a.len() < 2 {
                    return Err(err(line, "alloc needs rows and cols".into()));
                }
                CodeNode::Alloc {
                    name: lhs.to_string(),
                    rows: a[0].clone(),
                    cols: a[1].clone(),
                    extents: a[2..].to_vec(),
                }
            }
            "slice" => {
                let a = split_args(args);
                let Some((operand, indices)) = a.split_first() else {
                    return Err(err(line, "slice needs an operand".into()));
                };
                if is_scalar(operand) {
                    scalars.insert(lhs.to_string());
                }
                CodeNode::Slice {
                    name: lhs.to_string(),
                    operand: operand.clone(),
                    indices: indices.to_vec(),
                }
            }
            kernel => {
                if kernel.is_empty() {
                    return Err(err(line, "missing kernel name".into()));
                }
                let classify = |n: &str| scalars.contains(n) || is_scalar(n);
                let segment = parse_expr(args, &classify)
                    .map(|e| canonicalize(&e))
                    .map_err(|e| err(line, e.to_string()))?;
                let (outs, indexed) = match lhs.split_once('[') {
                    Some((o, ix)) => {
                        let ix = ix.strip_suffix(']').ok_or_else(|| err(line, "unbalanced `[`".into()))?;
                        (o, split_args(ix))
                    }
                    None => (lhs, Vec::new()),
                };
                let outputs = split_args(outs);
                if outputs.is_empty() {
                    return Err(err(line, "missing output".into()));
                }
                if segment.is_scalar() {
                    scalars.extend(outputs.iter().cloned());
                }
                count += 1;
                CodeNode::Stmt {
                    index: count - 1,
                    kernel: kernel.to_string(),
                    outputs,
                    indexed,
                    segment,
                    cost,
                }
            }
        };
        if let Some(top) = stack.last_mut() {
            top.1.push(node);
        }
    }
    while stack.len() > 1 {
        let (head, body) = stack.pop().unwrap_or_default();
        let (index, extent) = head.unwrap_or_default();
        if body.is_empty() {
            return Err(err(text.lines().count(), format!("empty loop over `{index}`")));
        }
        if let Some(top) = stack.last_mut() {
            top.1.push(CodeNode::Loop { index, extent, body });
        }
    }
    let nodes = stack.pop().map(|f| f.1).unwrap_or_default();
    Ok(CodeAst { name, nodes })
}

/// Runs the code over every index value of `inst`.
pub fn execute_code(
    ast: &CodeAst,
    inst: &SequenceInstance,
    catalog: &Catalog,
) -> Result<(ResultArray, ExecutionEnv), ExecError> {
    fn lower(nodes: &[CodeNode]) -> Vec<Nest<'_>> {
        nodes
            .iter()
            .filter_map(|n| match n {
                CodeNode::Alloc { .. } => None,
                CodeNode::Slice { name, operand, .. } => Some(Nest::Slice { name, operand }),
                CodeNode::Stmt {
                    index,
                    kernel,
                    outputs,
                    segment,
                    ..
                } => Some(Nest::Stmt(
                    *index,
                    NestStatement {
                        kernel,
                        segment,
                        outputs,
                    },
                )),
                CodeNode::Loop { index, body, .. } => Some(Nest::Loop {
                    index: index.clone(),
                    body: lower(body),
                }),
            })
            .collect()
    }
    let output = ast
        .nodes
        .iter()
        .find_map(|n| match n {
            CodeNode::Alloc { name, .. } => Some(name.as_str()),
            _ => None,
        })
        .unwrap_or_default();
    execute_nest(&lower(&ast.nodes), output, inst, catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::Algorithm;
    use crate::properties::{Dim, PropSet, Property, PropertyContext};
    use crate::seqloop::{schedule, SequenceSpec};

    fn empty() -> ScheduledAlgorithm {
        let mut ctx = PropertyContext::new();
        ctx.declare_symbol("n");
        let mut props = PropSet::EMPTY;
        props.insert(Property::OutputOperand);
        ctx.declare_matrix("b", props, Dim::sym("n"), Dim::One);
        let alg = Algorithm {
            name: "alg01".into(),
            statements: Vec::new(),
            output: "b".into(),
            ctx,
        };
        schedule(&alg, &SequenceSpec::single())
    }

    #[test]
    fn empty_algorithm_is_header_and_alloc() {
        let ast = build_ast(&empty());
        assert_eq!(emit(&ast, "pseudo").unwrap(), "# algorithm: alg01\nb := alloc(n, 1)\n");
    }

    #[test]
    fn unknown_target_is_an_error() {
        let ast = build_ast(&empty());
        assert_eq!(
            emit(&ast, "fortran"),
            Err(CodegenError::UnknownTarget("fortran".into()))
        );
    }

    #[test]
    fn parse_rejects_bad_layout() {
        let no = |_: &str| false;
        assert!(matches!(
            parse_code("b := alloc(n, 1)\n   W := gemm(A*B)", &no),
            Err(CodegenError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_code("for i in 0..m:\n  W := gemm(A*B)", &no),
            Err(CodegenError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_code("for i in 1..m:\nb := alloc(n, 1)", &no),
            Err(CodegenError::Parse { .. })
        ));
        assert!(matches!(
            parse_code("W = gemm(A*B)", &no),
            Err(CodegenError::Parse { line: 1, .. })
        ));
    }
}
