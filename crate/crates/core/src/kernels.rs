//! The building-block catalog: kernel patterns with property guards and
//! cost functions, and the factorizations available for single operands.
//!
//! The catalog is read from a line-oriented text format; the built-in one
//! is `default_catalog.txt`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::One;

use crate::cost::{CostPolynomial, Monomial};
use crate::expr::{canonicalize, make_times, parse_expr, push_trans, Expr, Rational};
use crate::properties::{dims, factor_output_properties, Dim, Dims, FactorKind, PropSet, Property, PropertyContext};
use crate::rewrite::simplify;

const DEFAULT_CATALOG: &str = include_str!("default_catalog.txt");

pub type Bindings = BTreeMap<String, Expr>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("catalog line {line}: {message}")]
pub struct CatalogError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostBindError {
    #[error("hole `{0}` is not bound")]
    Unbound(String),
    #[error("relative order of the dimensions of `{0}` is unknown")]
    UnknownOrder(String),
    #[error("unknown parameter `{0}`")]
    Param(String),
    #[error(transparent)]
    Context(#[from] crate::properties::ContextError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DimFn {
    Rows,
    Cols,
    Minor,
    Major,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum CostFactor {
    Dim(DimFn, String, u32),
    Param(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct CostTerm {
    coef: Rational,
    factors: Vec<CostFactor>,
}

/// Cost function of a catalog entry: a polynomial in the dims of its holes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostSpec(Vec<CostTerm>);

/// One alternative inside a guard clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Literal {
    pub prop: Property,
    pub negated: bool,
}

/// Disjunction of literals; a guard holds when all its clauses do.
pub type Clause = Vec<Literal>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Guard {
    pub hole: String,
    pub clauses: Vec<Clause>,
}

/// A kernel pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelPattern {
    /// Library routine name (`trsm`, `gemm`, ...).
    pub name: String,
    /// Distinguishes entries sharing a routine name.
    pub variant: Option<String>,
    pub pattern: Expr,
    pub scalar_holes: Vec<String>,
    pub guards: Vec<Guard>,
    /// Pairs `(a, b)` rejecting bindings where `a = b'`.
    pub unless_transposed: Vec<(String, String)>,
    pub cost: CostSpec,
}

impl KernelPattern {
    pub fn id(&self) -> String {
        match &self.variant {
            Some(v) => format!("{} {v}", self.name),
            None => self.name.clone(),
        }
    }
}

/// A factorization routine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorEntry {
    pub name: String,
    pub kind: FactorKind,
    pub guards: Vec<Clause>,
    pub tall: bool,
    pub cost: CostSpec,
}

/// The full catalog.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Catalog {
    pub kernels: Vec<KernelPattern>,
    pub factors: Vec<FactorEntry>,
    pub params: BTreeMap<String, Rational>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::from_text(DEFAULT_CATALOG).expect("built-in catalog parses")
    }
}

/// A pattern matched against a segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelMatch {
    pub entry: usize,
    pub bindings: Bindings,
    /// The segment was matched through its transpose.
    pub transposed: bool,
    /// The form that matched the pattern directly.
    pub segment: Expr,
    pub cost: CostPolynomial,
}

/// A bound kernel invocation (one algorithm statement).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelCall {
    pub kernel: String,
    pub entry: String,
    /// For factorizations, the operand being factored; otherwise the
    /// computed expression.
    pub segment: Expr,
    pub bindings: Bindings,
    pub outputs: Vec<String>,
    pub output_dims: Vec<Dims>,
    pub factor: Option<FactorKind>,
    pub cost: CostPolynomial,
}

impl KernelCall {
    /// Operand names read by the statement.
    pub fn inputs(&self) -> Vec<String> {
        self.segment.operands()
    }

    pub fn rename(&mut self, f: &dyn Fn(&str) -> Option<String>) {
        self.segment = self.segment.rename(f);
        for v in self.bindings.values_mut() {
            *v = v.rename(f);
        }
        for o in &mut self.outputs {
            if let Some(n) = f(o) {
                *o = n;
            }
        }
    }
}

impl fmt::Display for KernelCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.factor {
            Some(kind) => write!(
                f,
                "{} = {}",
                canonicalize(&kind.reconstruction(&self.outputs)),
                self.segment
            ),
            None => write!(f, "{} := {}", self.outputs.join(", "), self.segment),
        }
    }
}

fn parse_clauses(items: &[&str], line: usize) -> Result<Vec<Clause>, CatalogError> {
    items
        .iter()
        .map(|item| {
            item.split('|')
                .map(|alt| {
                    let (negated, name) = match alt.strip_prefix('!') {
                        Some(rest) => (true, rest),
                        None => (false, alt),
                    };
                    Property::from_label(name)
                        .map(|prop| Literal { prop, negated })
                        .ok_or_else(|| CatalogError {
                            line,
                            message: format!("unknown property `{name}`"),
                        })
                })
                .collect()
        })
        .collect()
}

fn parse_rational(s: &str) -> Option<Rational> {
    match s.split_once('/') {
        Some((a, b)) => {
            let d: i64 = b.parse().ok()?;
            if d == 0 {
                return None;
            }
            Some(Rational::new(a.parse().ok()?, d))
        }
        None => Some(Rational::from_integer(s.parse().ok()?)),
    }
}

fn parse_cost(src: &str, params: &BTreeMap<String, Rational>, line: usize) -> Result<CostSpec, CatalogError> {
    let err = |m: String| CatalogError { line, message: m };
    let mut terms = Vec::new();
    let mut sign = Rational::one();
    let mut cur: Option<CostTerm> = None;
    for tok in src.split_whitespace() {
        match tok {
            "+" | "-" => {
                if let Some(t) = cur.take() {
                    terms.push(t);
                }
                sign = if tok == "-" { -Rational::one() } else { Rational::one() };
                continue;
            }
            _ => {}
        }
        let term = cur.get_or_insert_with(|| CostTerm {
            coef: sign,
            factors: Vec::new(),
        });
        if let Some(r) = parse_rational(tok) {
            term.coef *= r;
            continue;
        }
        let (base, pow) = match tok.rsplit_once('^') {
            Some((b, p)) => (b, p.parse::<u32>().map_err(|_| err(format!("bad power in `{tok}`")))?),
            None => (tok, 1),
        };
        if let Some(open) = base.find('(') {
            let func = &base[..open];
            let hole = base[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| err(format!("unclosed `(` in `{tok}`")))?;
            let f = match func {
                "rows" => DimFn::Rows,
                "cols" => DimFn::Cols,
                "minor" => DimFn::Minor,
                "major" => DimFn::Major,
                other => return Err(err(format!("unknown dimension function `{other}`"))),
            };
            term.factors.push(CostFactor::Dim(f, hole.to_string(), pow));
        } else if params.contains_key(base) {
            for _ in 0..pow {
                term.factors.push(CostFactor::Param(base.to_string()));
            }
        } else {
            return Err(err(format!("unknown cost token `{tok}`")));
        }
    }
    if let Some(t) = cur {
        terms.push(t);
    }
    if terms.is_empty() {
        return Err(err("empty cost".into()));
    }
    Ok(CostSpec(terms))
}

enum Block {
    Kernel {
        name: String,
        variant: Option<String>,
        pattern: Option<(String, usize)>,
        scalars: Vec<String>,
        guards: Vec<Guard>,
        unless: Vec<(String, String)>,
        cost: Option<CostSpec>,
    },
    Factor {
        name: String,
        kind: FactorKind,
        guards: Vec<Clause>,
        tall: bool,
        cost: Option<CostSpec>,
    },
}

impl Catalog {
    /// Parses the declarative catalog format.
    pub fn from_text(text: &str) -> Result<Catalog, CatalogError> {
        let mut cat = Catalog {
            kernels: Vec::new(),
            factors: Vec::new(),
            params: BTreeMap::new(),
        };
        let mut block: Option<(Block, usize)> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let err = |m: String| CatalogError { line, message: m };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let rest = body[words[0].len()..].trim();
            match (&mut block, words[0]) {
                (None, "param") => {
                    let (Some(name), Some(v)) = (words.get(1), words.get(2).and_then(|v| parse_rational(v))) else {
                        return Err(err("expected `param <name> <value>`".into()));
                    };
                    cat.params.insert(name.to_string(), v);
                }
                (None, "kernel") => {
                    let name = words.get(1).ok_or_else(|| err("kernel without a name".into()))?;
                    block = Some((
                        Block::Kernel {
                            name: name.to_string(),
                            variant: words.get(2).map(|s| s.to_string()),
                            pattern: None,
                            scalars: Vec::new(),
                            guards: Vec::new(),
                            unless: Vec::new(),
                            cost: None,
                        },
                        line,
                    ));
                }
                (None, "factor") => {
                    let (Some(name), Some(kind)) = (words.get(1), words.get(2).and_then(|w| FactorKind::from_label(w)))
                    else {
                        return Err(err("expected `factor <name> <cholesky|qr|eig|svd>`".into()));
                    };
                    block = Some((
                        Block::Factor {
                            name: name.to_string(),
                            kind,
                            guards: Vec::new(),
                            tall: false,
                            cost: None,
                        },
                        line,
                    ));
                }
                (Some(_), "end") => {
                    let (b, start) = block.take().unwrap();
                    cat.finish(b, start)?;
                }
                (Some((Block::Kernel { pattern, .. }, _)), "pattern") => *pattern = Some((rest.to_string(), line)),
                (Some((Block::Kernel { scalars, .. }, _)), "scalar") => {
                    scalars.extend(words[1..].iter().map(|s| s.to_string()))
                }
                (Some((Block::Kernel { guards, .. }, _)), "guard") => {
                    let hole = words.get(1).ok_or_else(|| err("guard without a hole".into()))?;
                    guards.push(Guard {
                        hole: hole.to_string(),
                        clauses: parse_clauses(&words[2..], line)?,
                    });
                }
                (Some((Block::Kernel { unless, .. }, _)), "unless") => {
                    let parts: Vec<&str> = rest.split('=').map(str::trim).collect();
                    match parts.as_slice() {
                        [a, b] if b.ends_with('\'') => {
                            unless.push((a.to_string(), b.trim_end_matches('\'').to_string()))
                        }
                        _ => return Err(err("expected `unless A = B'`".into())),
                    }
                }
                (Some((Block::Factor { guards, .. }, _)), "guard") => {
                    guards.extend(parse_clauses(&words[2..], line)?);
                }
                (Some((Block::Factor { tall, .. }, _)), "tall") => *tall = true,
                (Some((Block::Kernel { cost, .. }, _)), "cost") | (Some((Block::Factor { cost, .. }, _)), "cost") => {
                    *cost = Some(parse_cost(rest, &cat.params, line)?)
                }
                (_, other) => return Err(err(format!("unexpected `{other}`"))),
            }
        }
        if let Some((_, start)) = block {
            return Err(CatalogError {
                line: start,
                message: "block is not closed with `end`".into(),
            });
        }
        Ok(cat)
    }

    fn finish(&mut self, b: Block, start: usize) -> Result<(), CatalogError> {
        let err = |m: &str| CatalogError {
            line: start,
            message: m.to_string(),
        };
        match b {
            Block::Kernel {
                name,
                variant,
                pattern,
                scalars,
                guards,
                unless,
                cost,
            } => {
                let (src, pline) = pattern.ok_or_else(|| err("kernel without a pattern"))?;
                let pattern = parse_expr(&src, &|h| scalars.iter().any(|s| s == h)).map_err(|e| CatalogError {
                    line: pline,
                    message: e.to_string(),
                })?;
                self.kernels.push(KernelPattern {
                    name,
                    variant,
                    pattern: canonicalize(&pattern),
                    scalar_holes: scalars,
                    guards,
                    unless_transposed: unless,
                    cost: cost.ok_or_else(|| err("kernel without a cost"))?,
                });
            }
            Block::Factor {
                name,
                kind,
                guards,
                tall,
                cost,
            } => self.factors.push(FactorEntry {
                name,
                kind,
                guards,
                tall,
                cost: cost.ok_or_else(|| err("factor without a cost"))?,
            }),
        }
        Ok(())
    }

    pub fn factor_entry(&self, kind: FactorKind) -> Option<&FactorEntry> {
        self.factors.iter().find(|f| f.kind == kind)
    }

    /// Catalog entries matching `e` (or, failing that, its transpose),
    /// in catalog order.
    pub fn match_kernel(&self, e: &Expr, ctx: &PropertyContext) -> Vec<KernelMatch> {
        let direct = self.match_direct(e, ctx, false);
        if !direct.is_empty() {
            return direct;
        }
        let t = simplify(&push_trans(e), ctx);
        if t == *e {
            return Vec::new();
        }
        self.match_direct(&t, ctx, true)
    }

    fn match_direct(&self, e: &Expr, ctx: &PropertyContext, transposed: bool) -> Vec<KernelMatch> {
        let mut out = Vec::new();
        for (k, kp) in self.kernels.iter().enumerate() {
            for b in match_pattern(&kp.pattern, e, &kp.scalar_holes) {
                if !guards_hold(kp, &b, ctx) {
                    continue;
                }
                let Ok(cost) = self.bind_cost(&kp.cost, &b, ctx) else {
                    continue;
                };
                out.push(KernelMatch {
                    entry: k,
                    bindings: b,
                    transposed,
                    segment: e.clone(),
                    cost,
                });
                break;
            }
        }
        out
    }

    /// Structural match against entries of routine `name`, ignoring guards.
    pub fn bind_structural(&self, name: &str, e: &Expr) -> Option<(usize, Bindings)> {
        self.kernels.iter().enumerate().find_map(|(k, kp)| {
            if kp.name != name {
                return None;
            }
            match_pattern(&kp.pattern, e, &kp.scalar_holes)
                .into_iter()
                .next()
                .map(|b| (k, b))
        })
    }

    /// Factorizations applicable to an operand, in catalog order.
    pub fn viable_factorizations(&self, name: &str, ctx: &PropertyContext) -> Vec<FactorKind> {
        let Ok(info) = ctx.operand(name) else {
            return Vec::new();
        };
        if info.scalar {
            return Vec::new();
        }
        let props = ctx.props_of(name);
        let factored = [
            Property::Diagonal,
            Property::LowerTriangular,
            Property::UpperTriangular,
            Property::OrthonormalColumns,
        ];
        if factored.iter().any(|p| props.contains(*p)) {
            return Vec::new();
        }
        let d = (info.rows.clone(), info.cols.clone());
        self.factors
            .iter()
            .filter(|f| {
                f.guards.iter().all(|c| clause_holds(c, props))
                    && (!f.tall || ctx.is_greater_eq(&d.0, &d.1))
                    && factor_output_properties(f.kind, props, &d, ctx).is_ok()
            })
            .map(|f| f.kind)
            .collect()
    }

    /// Cost of factoring an operand.
    pub fn factor_cost(
        &self,
        kind: FactorKind,
        operand: &Expr,
        ctx: &PropertyContext,
    ) -> Result<CostPolynomial, CostBindError> {
        let entry = self
            .factor_entry(kind)
            .ok_or_else(|| CostBindError::Unbound(kind.label().to_string()))?;
        let b: Bindings = [("A".to_string(), operand.clone())].into();
        self.bind_cost(&entry.cost, &b, ctx)
    }

    /// Evaluates a cost specification against bound holes.
    pub fn bind_cost(
        &self,
        spec: &CostSpec,
        b: &Bindings,
        ctx: &PropertyContext,
    ) -> Result<CostPolynomial, CostBindError> {
        let mut total = CostPolynomial::zero();
        for term in &spec.0 {
            let mut c = term.coef;
            let mut mono = Monomial::one();
            for f in &term.factors {
                match f {
                    CostFactor::Param(p) => c *= *self.params.get(p).ok_or_else(|| CostBindError::Param(p.clone()))?,
                    CostFactor::Dim(func, hole, pow) => {
                        let e = b.get(hole).ok_or_else(|| CostBindError::Unbound(hole.clone()))?;
                        let (r, cdim) = dims(e, ctx)?;
                        let d = match func {
                            DimFn::Rows => r,
                            DimFn::Cols => cdim,
                            DimFn::Minor => ctx
                                .min_dim(&r, &cdim)
                                .ok_or_else(|| CostBindError::UnknownOrder(hole.clone()))?,
                            DimFn::Major => ctx
                                .max_dim(&r, &cdim)
                                .ok_or_else(|| CostBindError::UnknownOrder(hole.clone()))?,
                        };
                        if let Dim::Sym(s) = d {
                            mono = mono.mul(&Monomial::var(&s, *pow));
                        }
                    }
                }
            }
            total = total.add(&CostPolynomial::term(c, mono));
        }
        Ok(total)
    }
}

fn clause_holds(c: &Clause, props: PropSet) -> bool {
    c.iter().any(|l| props.contains(l.prop) != l.negated)
}

/// Properties of an operand-like binding: the operand's closed properties
/// (with triangularity flipped under transposition) and its shape class.
pub fn binding_props(e: &Expr, ctx: &PropertyContext) -> PropSet {
    let mut props = match e {
        Expr::Trans(_) => {
            let p = e.base_operand().map(|n| ctx.props_of(n)).unwrap_or_default();
            let mut q = p;
            q.remove(Property::LowerTriangular);
            q.remove(Property::UpperTriangular);
            if p.contains(Property::LowerTriangular) {
                q.insert(Property::UpperTriangular);
            }
            if p.contains(Property::UpperTriangular) {
                q.insert(Property::LowerTriangular);
            }
            q
        }
        _ => e.base_operand().map(|n| ctx.props_of(n)).unwrap_or_default(),
    };
    props.remove(Property::Vector);
    props.remove(Property::Matrix);
    props.remove(Property::Square);
    if let Ok((r, c)) = dims(e, ctx) {
        if r == c {
            props.insert(Property::Square);
        }
        if c == Dim::One && r != Dim::One {
            props.insert(Property::Vector);
        } else if r != Dim::One && c != Dim::One {
            props.insert(Property::Matrix);
        }
    }
    props
}

fn guards_hold(kp: &KernelPattern, b: &Bindings, ctx: &PropertyContext) -> bool {
    for g in &kp.guards {
        let Some(e) = b.get(&g.hole) else {
            return false;
        };
        let props = binding_props(e, ctx);
        if !g.clauses.iter().all(|c| clause_holds(c, props)) {
            return false;
        }
    }
    for (a, bb) in &kp.unless_transposed {
        if let (Some(x), Some(y)) = (b.get(a), b.get(bb)) {
            if *x == push_trans(y) {
                return false;
            }
        }
    }
    true
}

/// All bindings of `pattern` against `target`. Matrix holes bind operands or
/// transposed operands; scalar holes bind the whole scalar prefix of a
/// product (1 when absent).
pub fn match_pattern(pattern: &Expr, target: &Expr, scalar_holes: &[String]) -> Vec<Bindings> {
    let mut out = Vec::new();
    go(pattern, target, scalar_holes, Bindings::new(), &mut out);
    out
}

fn bind(name: &str, value: Expr, mut b: Bindings, out: &mut Vec<Bindings>) {
    match b.get(name) {
        Some(v) if *v != value => {}
        Some(_) => out.push(b),
        None => {
            b.insert(name.to_string(), value);
            out.push(b);
        }
    }
}

fn go(p: &Expr, t: &Expr, sh: &[String], b: Bindings, out: &mut Vec<Bindings>) {
    match p {
        Expr::Operand { name, .. } if sh.contains(name) => {
            if t.is_scalar() {
                bind(name, t.clone(), b, out);
            }
        }
        Expr::Operand { name, .. } => {
            if t.is_operand_like() {
                bind(name, t.clone(), b, out);
            }
        }
        Expr::Trans(q) => go(q, &push_trans(t), sh, b, out),
        Expr::Inv(q) => {
            if let Expr::Inv(u) = t {
                go(q, u, sh, b, out);
            }
        }
        Expr::Times(ps) => {
            let (p_s, p_m): (Vec<&Expr>, Vec<&Expr>) = ps.iter().partition(|x| x.is_scalar());
            let (t_s, t_m) = t.split_product();
            if p_m.len() != t_m.len() || p_s.len() > 1 {
                return;
            }
            let mut states = match p_s.first() {
                Some(hole) => {
                    let value = if t_s.is_empty() { Expr::int(1) } else { make_times(t_s) };
                    let mut v = Vec::new();
                    go(hole, &value, sh, b, &mut v);
                    v
                }
                None if t_s.is_empty() => vec![b],
                None => return,
            };
            for (pm, tm) in p_m.iter().zip(&t_m) {
                let mut next = Vec::new();
                for s in states {
                    go(pm, tm, sh, s, &mut next);
                }
                states = next;
            }
            out.extend(states);
        }
        Expr::Plus(ps) => {
            let Expr::Plus(ts) = t else {
                return;
            };
            if ps.len() != ts.len() {
                return;
            }
            let mut used = vec![false; ts.len()];
            perm(ps, ts, sh, 0, &mut used, b, out);
        }
        _ => {
            if p == t {
                out.push(b);
            }
        }
    }
}

fn perm(ps: &[Expr], ts: &[Expr], sh: &[String], k: usize, used: &mut [bool], b: Bindings, out: &mut Vec<Bindings>) {
    if k == ps.len() {
        out.push(b);
        return;
    }
    for j in 0..ts.len() {
        if used[j] {
            continue;
        }
        let mut states = Vec::new();
        go(&ps[k], &ts[j], sh, b.clone(), &mut states);
        used[j] = true;
        for s in states {
            perm(ps, ts, sh, k + 1, used, s, out);
        }
        used[j] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::properties::Dim;

    fn ctx() -> PropertyContext {
        let mut c = PropertyContext::new();
        let n = Dim::sym("n");
        let p = Dim::sym("p");
        c.declare_matrix("X", PropSet::of(&[Property::FullRank]), n.clone(), p.clone());
        c.declare_matrix("W", PropSet::of(&[Property::FullRank]), n.clone(), p.clone());
        c.declare_matrix("y", PropSet::of(&[Property::Vector]), n.clone(), Dim::One);
        c.declare_matrix("Phi", PropSet::of(&[Property::Symmetric]), n.clone(), n.clone());
        c.declare_matrix("M", PropSet::of(&[Property::Spd]), n.clone(), n.clone());
        c.declare_matrix("G", PropSet::EMPTY, n.clone(), n.clone());
        c.declare_matrix(
            "L",
            PropSet::of(&[Property::LowerTriangular, Property::FullRank]),
            n.clone(),
            n.clone(),
        );
        c.declare_matrix("D", PropSet::of(&[Property::Diagonal]), n.clone(), n.clone());
        c.declare_scalar("h", PropSet::EMPTY);
        c.relate_greater("n", "p");
        c
    }

    fn e(s: &str) -> Expr {
        canonicalize(&parse_expr(s, &|n| n == "h").unwrap())
    }

    fn names(cat: &Catalog, ms: &[KernelMatch]) -> Vec<String> {
        ms.iter().map(|m| cat.kernels[m.entry].id()).collect()
    }

    #[test]
    fn paper_segments_match_one_kernel() {
        let cat = Catalog::default();
        let c = ctx();
        let cases = [
            ("h*Phi + (1 - h)*id", "scal-add dense"),
            ("h*D + (1 - h)*id", "scal-add diagonal"),
            ("inv(L)*X", "trsm"),
            ("inv(L)*y", "trsv"),
            ("inv(L')*y", "trsv"),
            ("W'*W", "syrk"),
            ("W'*y", "gemv"),
            ("X'*Phi", "gemm"),
            ("X'*inv(D)", "scal right-inverse"),
        ];
        for (src, want) in cases {
            let ms = cat.match_kernel(&e(src), &c);
            assert_eq!(names(&cat, &ms), vec![want.to_string()], "{src}");
        }
        let b = &cat.match_kernel(&e("h*Phi + (1 - h)*id"), &c)[0].bindings;
        assert_eq!(b["alpha"], e("h"));
        assert_eq!(b["beta"], e("1 - h"));
        assert!(cat.match_kernel(&e("X'*L*X"), &c).is_empty());
    }

    #[test]
    fn transposed_segments_match() {
        let cat = Catalog::default();
        let c = ctx();
        let ms = cat.match_kernel(&e("X'*inv(L')"), &c);
        assert_eq!(names(&cat, &ms), vec!["trsm".to_string()]);
        assert!(ms[0].transposed);
        assert_eq!(ms[0].segment, e("inv(L)*X"));
    }

    #[test]
    fn costs() {
        let cat = Catalog::default();
        let c = ctx();
        let trsm = &cat.match_kernel(&e("inv(L)*X"), &c)[0];
        assert_eq!(trsm.cost.to_string(), "n^2 p");
        let gemv = &cat.match_kernel(&e("W'*y"), &c)[0];
        assert_eq!(gemv.cost.to_string(), "2 n p");
        let qr = cat.factor_cost(FactorKind::Qr, &e("W"), &c).unwrap();
        assert_eq!(qr.to_string(), "2 n p^2 - 2/3 p^3");
        let eig = cat.factor_cost(FactorKind::Eig, &e("Phi"), &c).unwrap();
        assert_eq!(eig.to_string(), "9 n^3");
    }

    #[test]
    fn viable_factorizations_follow_properties() {
        let cat = Catalog::default();
        let c = ctx();
        use FactorKind::*;
        assert_eq!(cat.viable_factorizations("M", &c), vec![Cholesky, Qr, Eig, Svd]);
        assert_eq!(cat.viable_factorizations("Phi", &c), vec![Eig, Svd]);
        assert_eq!(cat.viable_factorizations("W", &c), vec![Qr, Svd]);
        assert_eq!(cat.viable_factorizations("G", &c), vec![Svd]);
        assert!(cat.viable_factorizations("L", &c).is_empty());
        assert!(cat.viable_factorizations("D", &c).is_empty());
    }

    #[test]
    fn catalog_errors_carry_lines() {
        let err = Catalog::from_text("kernel foo\n  pattern A*B\n  guard A Shiny\nend\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = Catalog::from_text("kernel foo\n  pattern A*B\n").unwrap_err();
        assert_eq!(err.line, 1);
        let extra = Catalog::from_text(
            "kernel axpy\n  pattern alpha*x + y\n  scalar alpha\n  guard x Vector\n  guard y Vector\n  cost 2 rows(x)\nend\n",
        )
        .unwrap();
        assert_eq!(extra.kernels[0].name, "axpy");
    }
}
