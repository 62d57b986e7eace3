//! Breadth-first derivation of algorithms.
//!
//! Every node holds the equation still to be mapped, the statements emitted
//! so far and the property context extended with all temporaries. Edges
//! either factor an operand (substituting the factors back and simplifying)
//! or extract a segment that maps onto a catalog kernel. A path ending in a
//! statement that computes the whole right-hand side is an algorithm.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::cost::CostPolynomial;
use crate::expr::{canonicalize, make_times, push_trans, Expr};
use crate::kernels::{binding_props, Catalog, KernelCall, KernelMatch};
use crate::properties::{
    dims, factor_output_properties, ContextError, Dim, Dims, FactorKind, InferenceEngine, PropSet, Property,
    PropertyContext,
};
use crate::rewrite::{expand_identity, factor_common, find_segments, segment_key, simplify};

/// `output := rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub output: String,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquationError {
    #[error("output `{0}` appears on the right-hand side")]
    OutputOnRhs(String),
    #[error("output `{output}` is {want:?} but the right-hand side is {got:?}")]
    Shape { output: String, want: Dims, got: Dims },
    #[error(transparent)]
    Context(#[from] ContextError),
}

impl Equation {
    /// Canonicalizes and validates dimensions against the context.
    pub fn new(output: &str, rhs: &Expr, ctx: &PropertyContext) -> Result<Equation, EquationError> {
        let rhs = canonicalize(rhs);
        if rhs.operands().iter().any(|o| o == output) {
            return Err(EquationError::OutputOnRhs(output.to_string()));
        }
        let got = dims(&rhs, ctx)?;
        let want = dims(&Expr::var(output), ctx)?;
        if got != want {
            return Err(EquationError::Shape {
                output: output.to_string(),
                want,
                got,
            });
        }
        Ok(Equation {
            output: output.to_string(),
            rhs,
        })
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.output, self.rhs)
    }
}

/// Search bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_nodes: usize,
    pub max_algorithms: Option<usize>,
    /// Keep only the first `k` children of every node.
    pub top_k: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_depth: 12,
            max_nodes: 5000,
            max_algorithms: None,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeriveError {
    #[error("no algorithm within limits (depth {max_depth}, {expanded} nodes expanded)")]
    NoAlgorithmWithinLimits { max_depth: usize, expanded: usize },
}

/// Which inverse a node must resolve next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InverseClass {
    SingleOperand(String),
    Expression(Expr),
    NoInverse,
}

/// Inverses of scalars and of diagonal, triangular or orthonormal operands
/// need no further treatment.
pub fn inverse_processed(arg: &Expr, ctx: &PropertyContext) -> bool {
    if arg.is_scalar() {
        return true;
    }
    if !arg.is_operand_like() {
        return false;
    }
    let p = binding_props(arg, ctx);
    [
        Property::Diagonal,
        Property::LowerTriangular,
        Property::UpperTriangular,
        Property::OrthonormalColumns,
    ]
    .iter()
    .any(|q| p.contains(*q))
}

/// Classifies the inner-most unprocessed inverse of `e`.
pub fn classify_inverse(e: &Expr, ctx: &PropertyContext) -> InverseClass {
    fn first(e: &Expr, ctx: &PropertyContext) -> Option<Expr> {
        for c in e.children() {
            if let Some(x) = first(c, ctx) {
                return Some(x);
            }
        }
        match e {
            Expr::Inv(x) if !inverse_processed(x, ctx) => Some((**x).clone()),
            _ => None,
        }
    }
    match first(e, ctx) {
        None => InverseClass::NoInverse,
        Some(x) if x.is_operand_like() => InverseClass::SingleOperand(x.base_operand().unwrap().to_string()),
        Some(x) => InverseClass::Expression(x),
    }
}

/// An ordered list of kernel calls computing the output of an equation.
#[derive(Clone, Debug)]
pub struct Algorithm {
    pub name: String,
    pub statements: Vec<KernelCall>,
    pub output: String,
    /// Context covering the inputs and every temporary.
    pub ctx: PropertyContext,
}

impl Algorithm {
    pub fn kernel_names(&self) -> Vec<&str> {
        self.statements.iter().map(|s| s.kernel.as_str()).collect()
    }

    /// Sum of statement costs (single instance).
    pub fn cost(&self) -> CostPolynomial {
        self.statements
            .iter()
            .fold(CostPolynomial::zero(), |acc, s| acc.add(&s.cost))
    }

    /// Names produced by the statements.
    pub fn temporaries(&self) -> Vec<String> {
        self.statements.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.name)?;
        for s in &self.statements {
            writeln!(f, "  {s:<40} ({})", s.kernel)?;
        }
        Ok(())
    }
}

/// Search diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeriveStats {
    pub expanded: usize,
    pub generated: usize,
    pub merged: usize,
    pub dead: usize,
    pub leaves: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct Derivation {
    pub algorithms: Vec<Algorithm>,
    pub stats: DeriveStats,
}

/// A node of the derivation tree.
#[derive(Clone, Debug)]
pub struct DerivationNode {
    pub rhs: Expr,
    pub statements: Vec<KernelCall>,
    pub ctx: PropertyContext,
    pub depth: usize,
    provenance: BTreeMap<String, String>,
    next_temp: usize,
    leaf: bool,
}

impl DerivationNode {
    pub fn root(eq: &Equation, ctx: &PropertyContext) -> Self {
        DerivationNode {
            rhs: simplify(&eq.rhs, ctx),
            statements: Vec::new(),
            ctx: ctx.clone(),
            depth: 0,
            provenance: BTreeMap::new(),
            next_temp: 1,
            leaf: false,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf
    }

    fn fresh(&mut self) -> String {
        loop {
            let n = format!("T{}", self.next_temp);
            self.next_temp += 1;
            if !self.ctx.has_operand(&n) {
                return n;
            }
        }
    }

    fn with_provenance(&self, e: &Expr) -> String {
        e.rename(&|n| self.provenance.get(n).cloned()).to_string()
    }

    /// Identity of the node modulo temporary names.
    pub fn key(&self) -> String {
        self.with_provenance(&self.rhs)
    }

    fn declare(&mut self, name: &str, props: PropSet, d: &Dims) {
        if d.0 == Dim::One && d.1 == Dim::One {
            self.ctx.declare_scalar(name, props);
        } else {
            self.ctx.declare_matrix(name, props, d.0.clone(), d.1.clone());
        }
    }

    fn rewrite_all(&mut self, f: &dyn Fn(&Expr, &PropertyContext) -> Expr) {
        let snapshot = self.ctx.clone();
        self.rhs = f(&self.rhs, &snapshot);
        self.ctx.map_assertions(&|a| f(a, &snapshot));
    }
}

/// Replaces every occurrence of the matrix-factor window `seg` (or a whole
/// subterm equal to it) by `with`, greedily left to right.
pub fn replace_segment(e: &Expr, seg: &Expr, with: &Expr) -> Expr {
    if e == seg {
        return with.clone();
    }
    let rebuilt = match e {
        Expr::Plus(xs) => Expr::Plus(xs.iter().map(|x| replace_segment(x, seg, with)).collect()),
        Expr::Times(xs) => Expr::Times(xs.iter().map(|x| replace_segment(x, seg, with)).collect()),
        Expr::Neg(x) => Expr::neg(replace_segment(x, seg, with)),
        Expr::Inv(x) => Expr::inv(replace_segment(x, seg, with)),
        Expr::Trans(x) => Expr::trans(replace_segment(x, seg, with)),
        leaf => return leaf.clone(),
    };
    let (Expr::Times(_), Expr::Times(_)) = (&rebuilt, seg) else {
        return rebuilt;
    };
    let (scalars, mats) = rebuilt.split_product();
    let (seg_s, seg_m) = seg.split_product();
    if !seg_s.is_empty() || seg_m.len() > mats.len() {
        return rebuilt;
    }
    let mut out: Vec<Expr> = scalars;
    let mut k = 0;
    let mut changed = false;
    while k < mats.len() {
        if k + seg_m.len() <= mats.len() && mats[k..k + seg_m.len()] == seg_m[..] {
            out.push(with.clone());
            k += seg_m.len();
            changed = true;
        } else {
            out.push(mats[k].clone());
            k += 1;
        }
    }
    if changed {
        make_times(out)
    } else {
        rebuilt
    }
}

/// A factorization is useful only if the inverse it targets, rewritten,
/// leaves no unprocessed inverse that still involves other operands.
fn resolves(target: &Expr, ctx: &PropertyContext, outs: &[String]) -> bool {
    let mut ok = true;
    simplify(&Expr::inv(target.clone()), ctx).visit(&mut |n| {
        if let Expr::Inv(x) = n {
            if !inverse_processed(x, ctx)
                && (**x == *target
                    || x.operands()
                        .iter()
                        .any(|o| !outs.contains(o) && !ctx.operand(o).is_ok_and(|i| i.scalar)))
            {
                ok = false;
            }
        }
    });
    ok
}

const TEMP_DROP: &[Property] = &[Property::InputOperand, Property::OutputOperand];

/// Drives the search.
pub struct Deriver<'a> {
    pub catalog: &'a Catalog,
    pub engine: &'a InferenceEngine,
    pub limits: Limits,
}

impl<'a> Deriver<'a> {
    pub fn new(catalog: &'a Catalog, engine: &'a InferenceEngine, limits: Limits) -> Self {
        Deriver {
            catalog,
            engine,
            limits,
        }
    }

    /// Children of a node, one per edge, in exploration order.
    pub fn expand_node(&self, node: &DerivationNode, eq: &Equation) -> Vec<DerivationNode> {
        let mut out = match classify_inverse(&node.rhs, &node.ctx) {
            InverseClass::SingleOperand(name) => self
                .catalog
                .viable_factorizations(&name, &node.ctx)
                .into_iter()
                .flat_map(|k| self.factor_children(node, &name, k, None))
                .collect(),
            InverseClass::Expression(arg) => {
                let mut out = Vec::new();
                for name in arg.operands() {
                    for k in self.catalog.viable_factorizations(&name, &node.ctx) {
                        out.extend(self.factor_children(node, &name, k, Some(&arg)));
                    }
                }
                out.extend(self.segment_children(node, eq, Some(&arg)));
                out
            }
            InverseClass::NoInverse => {
                let ordered = self.right_to_left_child(node, eq);
                if ordered.is_empty() {
                    self.segment_children(node, eq, None)
                } else {
                    ordered
                }
            }
        };
        if let Some(k) = self.limits.top_k {
            out.truncate(k);
        }
        out
    }

    fn factor_children(
        &self,
        node: &DerivationNode,
        name: &str,
        kind: FactorKind,
        inv_arg: Option<&Expr>,
    ) -> Vec<DerivationNode> {
        let Ok(info) = node.ctx.operand(name) else {
            return Vec::new();
        };
        let d = (info.rows.clone(), info.cols.clone());
        let props = node.ctx.props_of(name);
        let Ok(factors) = factor_output_properties(kind, props, &d, &node.ctx) else {
            return Vec::new();
        };
        let Some(entry) = self.catalog.factor_entry(kind) else {
            return Vec::new();
        };
        let Ok(cost) = self.catalog.factor_cost(kind, &Expr::var(name), &node.ctx) else {
            return Vec::new();
        };
        let mut child = node.clone();
        child.depth += 1;
        let origin = node.with_provenance(&Expr::var(name));
        let mut outs = Vec::new();
        for (k, (fp, fd)) in factors.iter().enumerate() {
            let t = child.fresh();
            child.declare(&t, *fp, fd);
            child
                .provenance
                .insert(t.clone(), format!("{}({origin})#{k}", entry.name));
            outs.push(t);
        }
        let recon = canonicalize(&kind.reconstruction(&outs));
        let var = Expr::var(name);
        child.statements.push(KernelCall {
            kernel: entry.name.clone(),
            entry: entry.name.clone(),
            segment: var.clone(),
            bindings: [("A".to_string(), var.clone())].into(),
            outputs: outs.clone(),
            output_dims: factors.iter().map(|(_, d)| d.clone()).collect(),
            factor: Some(kind),
            cost,
        });
        let substitute = |e: &Expr, c: &PropertyContext| simplify(&e.replace(&var, &recon), c);
        child.rewrite_all(&substitute);
        let target = match inv_arg {
            Some(arg) => simplify(&arg.replace(&var, &recon), &child.ctx),
            None => recon.clone(),
        };
        let mut out = Vec::new();
        if resolves(&target, &child.ctx, &outs) {
            out.push(child.clone());
        }

        if inv_arg.is_some() && child.rhs.contains(&target) {
            for v in expand_identity(&target, &child.ctx) {
                let Some(grouped) = factor_common(&v) else {
                    continue;
                };
                let mut variant = child.clone();
                let regroup = |e: &Expr, c: &PropertyContext| simplify(&e.replace(&target, &grouped), c);
                variant.rewrite_all(&regroup);
                if variant.rhs != child.rhs
                    && resolves(&grouped, &variant.ctx, &outs)
                    && !out.iter().any(|o| o.rhs == variant.rhs)
                {
                    out.push(variant);
                }
            }
        }
        out
    }

    fn temp_props(&self, seg: &Expr, node: &DerivationNode) -> PropSet {
        let mut holds = self.engine.infer(seg, &node.ctx).map(|i| i.holds).unwrap_or_default();
        for p in TEMP_DROP {
            holds.remove(*p);
        }
        let seg_t = simplify(&push_trans(seg), &node.ctx);
        let mut invertible = false;
        node.rhs.visit(&mut |n| {
            if let Expr::Inv(x) = n {
                if **x == *seg || **x == seg_t {
                    invertible = true;
                }
            }
        });
        if invertible {
            holds.insert(Property::Square);
            holds.insert(Property::FullRank);
        }
        holds
    }

    fn extract(&self, node: &DerivationNode, eq: &Equation, m: &KernelMatch) -> Option<DerivationNode> {
        let kp = &self.catalog.kernels[m.entry];
        let seg = &m.segment;
        let mut child = node.clone();
        child.depth += 1;
        let whole = !m.transposed && *seg == node.rhs;
        let d = dims(seg, &node.ctx).ok()?;
        let out_name = if whole { eq.output.clone() } else { child.fresh() };
        child.statements.push(KernelCall {
            kernel: kp.name.clone(),
            entry: kp.id(),
            segment: seg.clone(),
            bindings: m.bindings.clone(),
            outputs: vec![out_name.clone()],
            output_dims: vec![d.clone()],
            factor: None,
            cost: m.cost.clone(),
        });
        if whole {
            child.rhs = Expr::var(out_name);
            child.leaf = true;
            return Some(child);
        }
        let props = self.temp_props(seg, node);
        child.declare(&out_name, props, &d);
        child
            .provenance
            .insert(out_name.clone(), format!("{}[{}]", kp.name, node.with_provenance(seg)));
        let seg_t = simplify(&push_trans(seg), &node.ctx);
        let t = Expr::var(out_name.as_str());
        let replace = |e: &Expr, c: &PropertyContext| {
            let once = replace_segment(e, seg, &t);
            let twice = if seg_t != *seg {
                replace_segment(&once, &seg_t, &Expr::trans(t.clone()))
            } else {
                once
            };
            simplify(&twice, c)
        };
        child.rewrite_all(&replace);
        if child.rhs == node.rhs {
            return None;
        }
        Some(child)
    }

    /// Kernel-mapped segments, ranked by occurrence count, then cost, then
    /// catalog order. With `within`, only segments occurring inside it.
    fn segment_children(&self, node: &DerivationNode, eq: &Equation, within: Option<&Expr>) -> Vec<DerivationNode> {
        let segs = find_segments(&node.rhs, &node.ctx);
        let allowed: Option<HashSet<Expr>> = within.map(|w| {
            crate::rewrite::segment_occurrences(w)
                .iter()
                .map(|s| segment_key(s, &node.ctx))
                .chain(std::iter::once(segment_key(w, &node.ctx)))
                .collect()
        });
        let sizes = node.ctx.reference_sizes();
        let mut ranked: Vec<(usize, num_rational::Rational64, usize, KernelMatch)> = Vec::new();
        for s in segs {
            if let Some(a) = &allowed {
                if !a.contains(&segment_key(&s.expr, &node.ctx)) {
                    continue;
                }
            }
            for m in self.catalog.match_kernel(&s.expr, &node.ctx) {
                let c = m.cost.eval(&sizes).unwrap_or_default();
                ranked.push((s.count, c, m.entry, m));
            }
        }
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        ranked
            .iter()
            .filter_map(|(_, _, _, m)| self.extract(node, eq, m))
            .collect()
    }

    /// With exactly one vector operand, map the right-most pair of factors
    /// first so that only matrix-vector kernels are used.
    fn right_to_left_child(&self, node: &DerivationNode, eq: &Equation) -> Vec<DerivationNode> {
        let vectors: BTreeSet<String> = node
            .rhs
            .operands()
            .into_iter()
            .filter(|o| binding_props(&Expr::var(o.as_str()), &node.ctx).contains(Property::Vector))
            .collect();
        if vectors.len() != 1 || !matches!(node.rhs, Expr::Times(_)) {
            return Vec::new();
        }
        let (_, mats) = node.rhs.split_product();
        if mats.len() < 2 {
            return Vec::new();
        }
        let window = make_times(mats[mats.len() - 2..].to_vec());
        self.catalog
            .match_kernel(&window, &node.ctx)
            .iter()
            .filter_map(|m| self.extract(node, eq, m))
            .collect()
    }

    /// Breadth-first search over the derivation tree.
    pub fn derive(&self, eq: &Equation, ctx: &PropertyContext) -> Result<Derivation, DeriveError> {
        let root = DerivationNode::root(eq, ctx);
        let mut stats = DeriveStats::default();
        let mut seen: HashSet<String> = HashSet::new();
        seen.insert(root.key());
        let mut queue = VecDeque::from([root]);
        let mut leaves: Vec<DerivationNode> = Vec::new();
        let mut leaf_keys: HashSet<String> = HashSet::new();
        while let Some(node) = queue.pop_front() {
            if stats.expanded >= self.limits.max_nodes {
                stats.truncated = true;
                break;
            }
            if node.depth >= self.limits.max_depth {
                continue;
            }
            stats.expanded += 1;
            let children = self.expand_node(&node, eq);
            if children.is_empty() {
                stats.dead += 1;
            }
            for c in children {
                stats.generated += 1;
                if c.leaf {
                    let last = c.statements.last().unwrap();
                    let key = c.with_provenance(&last.segment);
                    if leaf_keys.insert(key) {
                        leaves.push(c);
                    } else {
                        stats.merged += 1;
                    }
                    continue;
                }
                if seen.insert(c.key()) {
                    queue.push_back(c);
                } else {
                    stats.merged += 1;
                }
            }
            if let Some(max) = self.limits.max_algorithms {
                if leaves.len() >= max {
                    stats.truncated = true;
                    break;
                }
            }
        }
        stats.leaves = leaves.len();
        if leaves.is_empty() {
            return Err(DeriveError::NoAlgorithmWithinLimits {
                max_depth: self.limits.max_depth,
                expanded: stats.expanded,
            });
        }
        let sizes = ctx.reference_sizes();
        let mut algs: Vec<(num_rational::Rational64, usize, Algorithm)> = leaves
            .into_iter()
            .enumerate()
            .map(|(k, leaf)| {
                let alg = finish(leaf, eq, ctx);
                let c = alg.cost().eval(&sizes).unwrap_or_default();
                (c, k, alg)
            })
            .collect();
        algs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let algorithms = algs
            .into_iter()
            .enumerate()
            .map(|(k, (_, _, mut a))| {
                a.name = format!("alg{:02}", k + 1);
                a
            })
            .collect();
        Ok(Derivation { algorithms, stats })
    }
}

/// Convenience wrapper with the standard inference engine.
pub fn derive(
    eq: &Equation,
    ctx: &PropertyContext,
    catalog: &Catalog,
    limits: Limits,
) -> Result<Derivation, DeriveError> {
    let engine = InferenceEngine::standard();
    Deriver::new(catalog, &engine, limits).derive(eq, ctx)
}

fn name_pool(kernel: &str, entry: &str, slot: usize) -> &'static [&'static str] {
    match (kernel, entry, slot) {
        ("scal-add", "scal-add diagonal", _) => &["D", "E"],
        ("scal-add", _, _) => &["M", "N"],
        ("potrf", _, _) => &["L", "G", "C"],
        ("trsm", _, _) => &["W", "Y"],
        ("syrk", _, _) => &["S", "A"],
        ("gemm", _, _) => &["K", "S", "P"],
        ("scal", _, _) => &["V", "U"],
        ("geqrf", _, 0) => &["Q", "Q1"],
        ("geqrf", _, _) => &["R", "R1"],
        ("syev", _, 0) => &["Z", "Z1"],
        ("syev", _, _) => &["W", "E"],
        ("svd", _, 0) => &["U", "U1"],
        ("svd", _, 1) => &["S", "Sigma"],
        ("svd", _, _) => &["V", "V1"],
        _ => &["T"],
    }
}

/// Replaces `T1, T2, ...` by conventional letters and assembles the algorithm.
fn finish(leaf: DerivationNode, eq: &Equation, ctx: &PropertyContext) -> Algorithm {
    let mut used: BTreeSet<String> = ctx.operands().map(|(n, _)| n.clone()).collect();
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut vec_count = 0;
    for s in &leaf.statements {
        for (slot, (o, d)) in s.outputs.iter().zip(&s.output_dims).enumerate() {
            if *o == eq.output {
                continue;
            }
            let is_vector = d.1 == Dim::One && s.factor.is_none();
            let name = if is_vector {
                loop {
                    vec_count += 1;
                    let n = format!("v{vec_count}");
                    if !used.contains(&n) {
                        break n;
                    }
                }
            } else {
                let pool = name_pool(&s.kernel, &s.entry, slot);
                pool.iter()
                    .map(|p| p.to_string())
                    .find(|p| !used.contains(p))
                    .unwrap_or_else(|| {
                        (2..)
                            .map(|k| format!("{}{k}", pool[0]))
                            .find(|p| !used.contains(p))
                            .unwrap()
                    })
            };
            used.insert(name.clone());
            map.insert(o.clone(), name);
        }
    }
    let f = |n: &str| map.get(n).cloned();
    let mut statements = leaf.statements;
    for s in &mut statements {
        s.rename(&f);
    }
    let mut actx = PropertyContext::new();
    for s in ctx.symbols() {
        actx.declare_symbol(s);
    }
    for (a, b) in ctx.relations() {
        actx.relate_greater(a, b);
    }
    for (n, info) in leaf.ctx.operands() {
        let name = map.get(n).cloned().unwrap_or_else(|| n.clone());
        if info.scalar {
            actx.declare_scalar(&name, info.props);
        } else {
            actx.declare_matrix(&name, info.props, info.rows.clone(), info.cols.clone());
        }
    }
    Algorithm {
        name: String::new(),
        statements,
        output: eq.output.clone(),
        ctx: actx,
    }
}
