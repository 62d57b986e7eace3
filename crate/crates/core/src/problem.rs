//! Problem files.
//!
//! One declaration per line, `#` starts a comment:
//!
//! ```text
//! equation b = inv(X'*inv(M)*X)*X'*inv(M)*y
//! operand X : Input Matrix FullRank [n x p]
//! operand h : Input Scalar
//! assert inv(M) : SPD
//! size rows(X) > cols(X)
//! index i : m
//! vary X : i
//! validate n=32 p=3 m=4 t=3
//! ```

use std::collections::BTreeMap;

use crate::cost::Regime;
use crate::derivation::Equation;
use crate::expr::{parse_expr, Expr};
use crate::properties::{Dim, PropSet, Property, PropertyContext};
use crate::seqloop::SequenceSpec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ProblemError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A parsed problem file.
#[derive(Clone, Debug)]
pub struct Problem {
    pub equation: Equation,
    pub ctx: PropertyContext,
    pub spec: SequenceSpec,
    /// Sizes from a `validate` line.
    pub validate: Option<BTreeMap<String, i64>>,
}

impl Problem {
    /// Growth classes for asymptotic reports: symbols asserted to exceed
    /// another grow fastest, loop extents come next, symbols exceeded by
    /// another are slowest.
    pub fn regime(&self) -> Regime {
        let mut r = Regime::default();
        for s in self.ctx.symbols() {
            r.set_rank(s, 1);
        }
        for (a, b) in self.ctx.relations() {
            if self.spec.indices.iter().all(|i| &i.extent != a) {
                r.set_rank(a, 0);
            }
            r.set_rank(b, 2);
        }
        r
    }
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl Line<'_> {
    fn err(&self, at: &str, message: impl Into<String>) -> ProblemError {
        let column = at.as_ptr() as usize - self.text.as_ptr() as usize + 1;
        ProblemError {
            line: self.number,
            column: column.min(self.text.len() + 1),
            message: message.into(),
        }
    }

    /// Splits `head : tail` and returns trimmed slices of the original line.
    fn split_colon<'b>(&self, rest: &'b str) -> Result<(&'b str, &'b str), ProblemError> {
        match rest.find(':') {
            Some(k) => Ok((rest[..k].trim(), rest[k + 1..].trim())),
            None => Err(self.err(rest, "expected `:`")),
        }
    }
}

fn body<'a>(l: &Line<'a>) -> &'a str {
    let t = l.text;
    t[..t.find('#').unwrap_or(t.len())].trim()
}

fn words(s: &str) -> impl Iterator<Item = &str> {
    s.split_whitespace()
}

fn parse_dims<'a>(line: &Line<'a>, s: &'a str) -> Result<(Dim, Dim), ProblemError> {
    let inner = s
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .ok_or_else(|| line.err(s, "expected `[rows x cols]`"))?;
    let parts: Vec<&str> = words(inner).collect();
    match parts.as_slice() {
        [r, "x", c] => {
            let dim = |t: &str| -> Result<Dim, ProblemError> {
                if t == "1" {
                    Ok(Dim::One)
                } else if t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
                {
                    Ok(Dim::sym(t))
                } else {
                    Err(line.err(s, format!("bad dimension `{t}`")))
                }
            };
            Ok((dim(r)?, dim(c)?))
        }
        _ => Err(line.err(s, "expected `[rows x cols]`")),
    }
}

fn operand_decl(line: &Line, rest: &str, ctx: &mut PropertyContext) -> Result<(), ProblemError> {
    let (name, tail) = line.split_colon(rest)?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(line.err(rest, format!("bad operand name `{name}`")));
    }
    if ctx.has_operand(name) {
        return Err(line.err(rest, format!("operand `{name}` declared twice")));
    }
    let (labels, dims) = match tail.find('[') {
        Some(k) => (&tail[..k], Some(parse_dims(line, tail[k..].trim())?)),
        None => (tail, None),
    };
    let mut props = PropSet::EMPTY;
    for w in words(labels) {
        let p = Property::from_label(w).ok_or_else(|| line.err(w, format!("unknown property `{w}`")))?;
        props.insert(p);
    }
    if props.contains(Property::Scalar) {
        if dims.is_some() {
            return Err(line.err(tail, "a scalar takes no dimensions"));
        }
        ctx.declare_scalar(name, props);
        return Ok(());
    }
    let Some((rows, cols)) = dims else {
        return Err(line.err(tail, format!("operand `{name}` needs dimensions")));
    };
    if props.contains(Property::Vector) && cols != Dim::One {
        return Err(line.err(tail, "a vector has one column"));
    }
    ctx.declare_matrix(name, props, rows, cols);
    Ok(())
}

fn size_side(line: &Line, s: &str, ctx: &PropertyContext) -> Result<String, ProblemError> {
    let s = s.trim();
    let pick = |f: &str, name: &str| -> Result<Dim, ProblemError> {
        let info = ctx
            .operand(name)
            .map_err(|_| line.err(s, format!("undeclared operand `{name}`")))?;
        Ok(if f == "rows" {
            info.rows.clone()
        } else {
            info.cols.clone()
        })
    };
    let dim = if let Some(inner) = s.strip_prefix("rows(").and_then(|x| x.strip_suffix(')')) {
        pick("rows", inner.trim())?
    } else if let Some(inner) = s.strip_prefix("cols(").and_then(|x| x.strip_suffix(')')) {
        pick("cols", inner.trim())?
    } else {
        Dim::sym(s)
    };
    match dim {
        Dim::Sym(x) if ctx.symbols().contains(&x) => Ok(x),
        _ => Err(line.err(s, format!("`{s}` is not a size symbol"))),
    }
}

fn expr_at(line: &Line, src: &str, ctx: &PropertyContext) -> Result<Expr, ProblemError> {
    let is_scalar = |n: &str| ctx.operand(n).is_ok_and(|i| i.scalar);
    let e = parse_expr(src, &is_scalar).map_err(|e| {
        let at = &src[e.offset.min(src.len())..];
        line.err(at, e.message)
    })?;
    for o in e.operands() {
        if !ctx.has_operand(&o) {
            return Err(line.err(src, format!("undeclared operand `{o}`")));
        }
    }
    Ok(e)
}

/// Parses a problem file.
pub fn parse_problem(text: &str) -> Result<Problem, ProblemError> {
    let lines: Vec<Line> = text
        .lines()
        .enumerate()
        .map(|(k, t)| Line { number: k + 1, text: t })
        .collect();
    let keyword = |s: &str| -> (String, usize) {
        let k = s.find(char::is_whitespace).unwrap_or(s.len());
        (s[..k].to_string(), k)
    };

    let mut ctx = PropertyContext::new();
    let mut spec = SequenceSpec::default();
    // Declarations first so that the equation may precede them.
    for l in &lines {
        let s = body(l);
        if s.is_empty() {
            continue;
        }
        let (kw, k) = keyword(s);
        let rest = s[k..].trim();
        match kw.as_str() {
            "operand" => operand_decl(l, rest, &mut ctx)?,
            "index" => {
                let (name, extent) = l.split_colon(rest)?;
                if extent.is_empty() {
                    return Err(l.err(rest, "missing extent"));
                }
                spec.add_index(name, extent).map_err(|e| l.err(rest, e.to_string()))?;
                ctx.declare_symbol(extent);
            }
            "equation" | "assert" | "size" | "vary" | "validate" => {}
            other => return Err(l.err(s, format!("unknown keyword `{other}`"))),
        }
    }

    let mut equation: Option<(usize, String, Expr)> = None;
    let mut validate = None;
    for l in &lines {
        let s = body(l);
        if s.is_empty() {
            continue;
        }
        let (kw, k) = keyword(s);
        let rest = s[k..].trim();
        match kw.as_str() {
            "equation" => {
                if equation.is_some() {
                    return Err(l.err(s, "second equation"));
                }
                let eq = rest.find('=').ok_or_else(|| l.err(rest, "expected `=`"))?;
                let out = rest[..eq].trim();
                if !ctx.has_operand(out) {
                    return Err(l.err(rest, format!("undeclared operand `{out}`")));
                }
                let rhs_src = rest[eq + 1..].trim_start();
                let rhs = expr_at(l, rhs_src, &ctx)?;
                equation = Some((l.number, out.to_string(), rhs));
            }
            "assert" => {
                let k = rest.rfind(':').ok_or_else(|| l.err(rest, "expected `:`"))?;
                let e = expr_at(l, rest[..k].trim(), &ctx)?;
                for w in words(&rest[k + 1..]) {
                    let p = Property::from_label(w).ok_or_else(|| l.err(w, format!("unknown property `{w}`")))?;
                    ctx.assert_property(&e, p);
                }
            }
            "size" => {
                let k = rest.find('>').ok_or_else(|| l.err(rest, "expected `>`"))?;
                let a = size_side(l, &rest[..k], &ctx)?;
                let b = size_side(l, &rest[k + 1..], &ctx)?;
                ctx.relate_greater(&a, &b);
            }
            "vary" => {
                let (name, idx) = l.split_colon(rest)?;
                if !ctx.has_operand(name) {
                    return Err(l.err(rest, format!("undeclared operand `{name}`")));
                }
                let idx: Vec<&str> = words(idx).collect();
                let is_output = ctx.props_of(name).contains(Property::OutputOperand);
                let r = if is_output {
                    spec.set_output(&idx)
                } else {
                    spec.vary(name, &idx)
                };
                r.map_err(|e| l.err(rest, e.to_string()))?;
            }
            "validate" => {
                let mut sizes = BTreeMap::new();
                for w in words(rest) {
                    let (k, v) = w.split_once('=').ok_or_else(|| l.err(w, "expected `symbol=value`"))?;
                    let v: i64 = v.parse().map_err(|_| l.err(w, format!("bad size `{v}`")))?;
                    if v < 1 {
                        return Err(l.err(w, "sizes must be positive"));
                    }
                    sizes.insert(k.to_string(), v);
                }
                validate = Some(sizes);
            }
            _ => {}
        }
    }

    let last = lines.len().max(1);
    let Some((number, out, rhs)) = equation else {
        return Err(ProblemError {
            line: last,
            column: 1,
            message: "missing equation".into(),
        });
    };
    let equation = Equation::new(&out, &rhs, &ctx).map_err(|e| ProblemError {
        line: number,
        column: 1,
        message: e.to_string(),
    })?;
    Ok(Problem {
        equation,
        ctx,
        spec,
        validate,
    })
}
