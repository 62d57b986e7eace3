//! Operand properties, symbolic dimensions and property inference.
//!
//! A [`PropertyContext`] records, for every operand, its declared properties
//! and symbolic shape, plus size relations between dimension symbols and
//! properties asserted on whole expressions. [`InferenceEngine::infer`]
//! derives a tri-state verdict per property for arbitrary expressions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Signed;

use crate::expr::{canonicalize, push_trans, Expr};

/// Symbolic dimension: `1` or a declared size symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dim {
    One,
    Sym(String),
}

impl Dim {
    pub fn sym(s: &str) -> Dim {
        if s == "1" {
            Dim::One
        } else {
            Dim::Sym(s.to_string())
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::One => write!(f, "1"),
            Dim::Sym(s) => write!(f, "{s}"),
        }
    }
}

pub type Dims = (Dim, Dim);

/// Shape of a (sub)expression. The identity symbol is square of any size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Identity,
    Matrix(Dim, Dim),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("unknown operand `{0}`")]
    UnknownOperand(String),
    #[error("dimension mismatch in `{subtree}`: {detail}")]
    Dimension { subtree: String, detail: String },
    #[error("dimensions of `{0}` are undetermined")]
    Undetermined(String),
}

macro_rules! properties {
    ($($variant:ident => $label:literal),* $(,)?) => {
        /// Structural property of an operand or expression.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Property { $($variant),* }

        impl Property {
            pub const ALL: &'static [Property] = &[$(Property::$variant),*];

            pub fn label(self) -> &'static str {
                match self { $(Property::$variant => $label),* }
            }

            pub fn from_label(s: &str) -> Option<Property> {
                match s { $($label => Some(Property::$variant),)* _ => None }
            }
        }
    };
}

properties! {
    Identity => "Identity",
    Diagonal => "Diagonal",
    LowerTriangular => "LowerTriangular",
    UpperTriangular => "UpperTriangular",
    Symmetric => "Symmetric",
    Spd => "SPD",
    OrthonormalColumns => "OrthonormalColumns",
    OrthogonalSquare => "Orthogonal",
    FullRank => "FullRank",
    Square => "Square",
    InputOperand => "Input",
    OutputOperand => "Output",
    Matrix => "Matrix",
    Vector => "Vector",
    Scalar => "Scalar",
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bit set of [`Property`] values.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropSet(u32);

impl PropSet {
    pub const EMPTY: PropSet = PropSet(0);

    pub fn of(props: &[Property]) -> PropSet {
        props.iter().fold(PropSet::EMPTY, |s, p| s.with(*p))
    }

    pub fn with(self, p: Property) -> PropSet {
        PropSet(self.0 | (1 << p as u32))
    }

    pub fn insert(&mut self, p: Property) {
        self.0 |= 1 << p as u32;
    }

    pub fn remove(&mut self, p: Property) {
        self.0 &= !(1 << p as u32);
    }

    pub fn contains(self, p: Property) -> bool {
        self.0 & (1 << p as u32) != 0
    }

    pub fn union(self, o: PropSet) -> PropSet {
        PropSet(self.0 | o.0)
    }

    pub fn intersect(self, o: PropSet) -> PropSet {
        PropSet(self.0 & o.0)
    }

    pub fn is_superset(self, o: PropSet) -> bool {
        self.0 & o.0 == o.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Property> {
        Property::ALL.iter().copied().filter(move |p| self.contains(*p))
    }
}

impl fmt::Debug for PropSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Closure of `s` under the standard implication lattice.
pub fn implied(mut s: PropSet) -> PropSet {
    use Property::*;
    const RULES: &[(Property, &[Property])] = &[
        (Identity, &[Diagonal, OrthogonalSquare, Spd]),
        (Spd, &[Symmetric, FullRank, Square]),
        (Diagonal, &[LowerTriangular, UpperTriangular, Symmetric]),
        (OrthogonalSquare, &[OrthonormalColumns, FullRank, Square]),
    ];
    loop {
        let mut next = s;
        for (from, to) in RULES {
            if s.contains(*from) {
                next = next.union(PropSet::of(to));
            }
        }
        if next == s {
            return s;
        }
        s = next;
    }
}

/// Declared facts about one operand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperandInfo {
    pub props: PropSet,
    pub rows: Dim,
    pub cols: Dim,
    pub scalar: bool,
}

/// Per-operand properties and dims, size relations, expression assertions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropertyContext {
    operands: BTreeMap<String, OperandInfo>,
    symbols: BTreeSet<String>,
    greater: BTreeSet<(String, String)>,
    assertions: Vec<(Expr, Property)>,
}

impl PropertyContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_symbol(&mut self, s: &str) {
        self.symbols.insert(s.to_string());
    }

    pub fn symbols(&self) -> &BTreeSet<String> {
        &self.symbols
    }

    pub fn declare_matrix(&mut self, name: &str, props: PropSet, rows: Dim, cols: Dim) {
        for d in [&rows, &cols] {
            if let Dim::Sym(s) = d {
                self.symbols.insert(s.clone());
            }
        }
        self.operands.insert(
            name.to_string(),
            OperandInfo {
                props,
                rows,
                cols,
                scalar: false,
            },
        );
    }

    pub fn declare_scalar(&mut self, name: &str, props: PropSet) {
        self.operands.insert(
            name.to_string(),
            OperandInfo {
                props: props.with(Property::Scalar),
                rows: Dim::One,
                cols: Dim::One,
                scalar: true,
            },
        );
    }

    pub fn add_properties(&mut self, name: &str, props: PropSet) {
        if let Some(info) = self.operands.get_mut(name) {
            info.props = info.props.union(props);
        }
    }

    /// Records `a > b` between size symbols.
    pub fn relate_greater(&mut self, a: &str, b: &str) {
        self.greater.insert((a.to_string(), b.to_string()));
    }

    pub fn relations(&self) -> &BTreeSet<(String, String)> {
        &self.greater
    }

    /// Asserts `prop` for an expression (stored canonical).
    pub fn assert_property(&mut self, e: &Expr, prop: Property) {
        let c = canonicalize(e);
        if !self.assertions.iter().any(|(x, p)| *x == c && *p == prop) {
            self.assertions.push((c, prop));
        }
    }

    pub fn assertions(&self) -> &[(Expr, Property)] {
        &self.assertions
    }

    /// Applies `f` to every asserted expression (used when rewriting the equation).
    pub fn map_assertions(&mut self, f: &dyn Fn(&Expr) -> Expr) {
        let mut next: Vec<(Expr, Property)> = Vec::with_capacity(self.assertions.len());
        for (e, p) in &self.assertions {
            let m = f(e);
            if !next.iter().any(|(x, q)| *x == m && q == p) {
                next.push((m, *p));
            }
        }
        self.assertions = next;
    }

    pub fn operand(&self, name: &str) -> Result<&OperandInfo, ContextError> {
        self.operands
            .get(name)
            .ok_or_else(|| ContextError::UnknownOperand(name.to_string()))
    }

    pub fn has_operand(&self, name: &str) -> bool {
        self.operands.contains_key(name)
    }

    pub fn operands(&self) -> impl Iterator<Item = (&String, &OperandInfo)> {
        self.operands.iter()
    }

    /// Closed properties of a named operand (empty when unknown).
    pub fn props_of(&self, name: &str) -> PropSet {
        self.operands.get(name).map(|i| implied(i.props)).unwrap_or_default()
    }

    /// Representative numeric sizes used to order candidates: symbols on the
    /// larger side of a relation get 1000, the smaller side 10, others 100.
    pub fn reference_sizes(&self) -> BTreeMap<String, i64> {
        let mut out = BTreeMap::new();
        for s in &self.symbols {
            let big = self.greater.iter().any(|(a, _)| a == s);
            let small = self.greater.iter().any(|(_, b)| b == s);
            let v = match (big, small) {
                (true, false) => 1000,
                (false, true) => 10,
                _ => 100,
            };
            out.insert(s.clone(), v);
        }
        out
    }

    /// `a > b` under the transitive closure of declared relations.
    pub fn is_greater(&self, a: &Dim, b: &Dim) -> bool {
        let (Dim::Sym(a), Dim::Sym(b)) = (a, b) else {
            return false;
        };
        let mut stack = vec![a.clone()];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for (l, r) in &self.greater {
                if *l == x {
                    if r == b {
                        return true;
                    }
                    if seen.insert(r.clone()) {
                        stack.push(r.clone());
                    }
                }
            }
        }
        false
    }

    pub fn is_greater_eq(&self, a: &Dim, b: &Dim) -> bool {
        a == b || self.is_greater(a, b)
    }

    /// The smaller of two dims, when their order is known.
    pub fn min_dim(&self, a: &Dim, b: &Dim) -> Option<Dim> {
        if self.is_greater_eq(a, b) {
            Some(b.clone())
        } else if self.is_greater(b, a) {
            Some(a.clone())
        } else {
            None
        }
    }

    pub fn max_dim(&self, a: &Dim, b: &Dim) -> Option<Dim> {
        if self.is_greater_eq(a, b) {
            Some(a.clone())
        } else if self.is_greater(b, a) {
            Some(b.clone())
        } else {
            None
        }
    }
}

fn dim_err(e: &Expr, detail: String) -> ContextError {
    ContextError::Dimension {
        subtree: e.to_string(),
        detail,
    }
}

/// Shape of `e`, checking conformance of every node.
pub fn shape(e: &Expr, ctx: &PropertyContext) -> Result<Shape, ContextError> {
    match e {
        Expr::Literal(_) => Ok(Shape::Scalar),
        Expr::Operand { name, scalar } => {
            let info = ctx.operand(name)?;
            if *scalar || info.scalar {
                Ok(Shape::Scalar)
            } else {
                Ok(Shape::Matrix(info.rows.clone(), info.cols.clone()))
            }
        }
        Expr::Identity => Ok(Shape::Identity),
        Expr::Neg(x) => shape(x, ctx),
        Expr::Trans(x) => Ok(match shape(x, ctx)? {
            Shape::Matrix(r, c) => Shape::Matrix(c, r),
            s => s,
        }),
        Expr::Inv(x) => match shape(x, ctx)? {
            Shape::Matrix(r, c) if r != c => Err(dim_err(e, format!("inverse of non-square {r}x{c}"))),
            s => Ok(s),
        },
        Expr::Plus(xs) => {
            let mut acc: Option<Shape> = None;
            for x in xs {
                let s = shape(x, ctx)?;
                acc = Some(match (acc, s) {
                    (None, s) => s,
                    (Some(Shape::Scalar), Shape::Scalar) => Shape::Scalar,
                    (Some(Shape::Identity), Shape::Identity) => Shape::Identity,
                    (Some(Shape::Identity), Shape::Matrix(r, c)) | (Some(Shape::Matrix(r, c)), Shape::Identity) => {
                        if r != c {
                            return Err(dim_err(e, format!("identity added to non-square {r}x{c}")));
                        }
                        Shape::Matrix(r, c)
                    }
                    (Some(Shape::Matrix(r1, c1)), Shape::Matrix(r2, c2)) => {
                        if r1 != r2 || c1 != c2 {
                            return Err(dim_err(e, format!("sum of {r1}x{c1} and {r2}x{c2}")));
                        }
                        Shape::Matrix(r1, c1)
                    }
                    (Some(a), b) => {
                        return Err(dim_err(e, format!("sum mixes {a:?} and {b:?}")));
                    }
                });
            }
            Ok(acc.unwrap_or(Shape::Scalar))
        }
        Expr::Times(xs) => {
            let mut first: Option<Dim> = None;
            let mut last: Option<Dim> = None;
            let mut saw_identity = false;
            for x in xs {
                match shape(x, ctx)? {
                    Shape::Scalar => {}
                    Shape::Identity => saw_identity = true,
                    Shape::Matrix(r, c) => {
                        if let Some(prev) = &last {
                            if *prev != r {
                                return Err(dim_err(e, format!("product of ?x{prev} by {r}x{c}")));
                            }
                        } else {
                            first = Some(r);
                        }
                        last = Some(c);
                    }
                }
            }
            match (first, last) {
                (Some(r), Some(c)) => Ok(Shape::Matrix(r, c)),
                _ if saw_identity => Ok(Shape::Identity),
                _ => Ok(Shape::Scalar),
            }
        }
    }
}

/// Symbolic (rows, cols). Scalars are 1x1; a bare identity is an error.
pub fn dims(e: &Expr, ctx: &PropertyContext) -> Result<Dims, ContextError> {
    match shape(e, ctx)? {
        Shape::Scalar => Ok((Dim::One, Dim::One)),
        Shape::Matrix(r, c) => Ok((r, c)),
        Shape::Identity => Err(ContextError::Undetermined(e.to_string())),
    }
}

/// Tri-state verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Unknown,
}

/// Result of inference: properties that hold, properties known to fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inference {
    pub holds: PropSet,
    pub fails: PropSet,
}

impl Inference {
    pub fn verdict(&self, p: Property) -> Verdict {
        if self.holds.contains(p) {
            Verdict::Holds
        } else if self.fails.contains(p) {
            Verdict::Fails
        } else {
            Verdict::Unknown
        }
    }

    pub fn has(&self, p: Property) -> bool {
        self.holds.contains(p)
    }
}

/// Inputs handed to an inference rule.
pub struct RuleInput<'a> {
    pub expr: &'a Expr,
    pub children: &'a [Inference],
    pub shape: &'a Shape,
    pub ctx: &'a PropertyContext,
}

pub type RuleFn = dyn Fn(&RuleInput<'_>) -> PropSet + Send + Sync;

/// A named inference rule: maps a node (with its children's verdicts) to
/// properties that hold for it.
pub struct Rule {
    pub name: &'static str,
    pub apply: Box<RuleFn>,
}

/// Rule-driven inference over expression trees.
pub struct InferenceEngine {
    rules: Vec<Rule>,
    implications: Vec<(Property, PropSet)>,
}

impl Default for InferenceEngine {
    fn default() -> Self {
        Self::standard()
    }
}

/// Properties kept under transposition (triangularity is flipped separately).
const TRANS_KEEPS: &[Property] = &[
    Property::Identity,
    Property::Diagonal,
    Property::Symmetric,
    Property::Spd,
    Property::FullRank,
    Property::OrthogonalSquare,
];

/// Properties kept under inversion of a square full-rank operand.
const INV_KEEPS: &[Property] = &[
    Property::Identity,
    Property::Diagonal,
    Property::LowerTriangular,
    Property::UpperTriangular,
    Property::Symmetric,
    Property::Spd,
    Property::OrthogonalSquare,
    Property::FullRank,
];

/// Properties kept by scaling with an arbitrary scalar.
const SCALE_KEEPS: &[Property] = &[
    Property::Diagonal,
    Property::LowerTriangular,
    Property::UpperTriangular,
    Property::Symmetric,
];

impl InferenceEngine {
    pub fn empty() -> Self {
        InferenceEngine {
            rules: Vec::new(),
            implications: Vec::new(),
        }
    }

    /// Engine with the standard implication lattice and rule set.
    pub fn standard() -> Self {
        let mut eng = Self::empty();
        use Property::*;
        eng.register_implication(Identity, PropSet::of(&[Diagonal, OrthogonalSquare, Spd]));
        eng.register_implication(Spd, PropSet::of(&[Symmetric, FullRank, Square]));
        eng.register_implication(Diagonal, PropSet::of(&[LowerTriangular, UpperTriangular, Symmetric]));
        eng.register_implication(OrthogonalSquare, PropSet::of(&[OrthonormalColumns, FullRank, Square]));

        eng.register_rule("operand", |r| match r.expr {
            Expr::Operand { name, .. } => r.ctx.operand(name).map(|i| i.props).unwrap_or_default(),
            _ => PropSet::EMPTY,
        });
        eng.register_rule("identity", |r| match r.expr {
            Expr::Identity => PropSet::of(&[Identity]),
            _ => PropSet::EMPTY,
        });
        eng.register_rule("transpose", |r| match r.expr {
            Expr::Trans(_) => {
                let c = r.children[0].holds;
                let mut out = c.intersect(PropSet::of(TRANS_KEEPS));
                if c.contains(LowerTriangular) {
                    out.insert(UpperTriangular);
                }
                if c.contains(UpperTriangular) {
                    out.insert(LowerTriangular);
                }
                out
            }
            _ => PropSet::EMPTY,
        });
        eng.register_rule("negate", |r| match r.expr {
            Expr::Neg(_) => r.children[0].holds.intersect(PropSet::of(SCALE_KEEPS)),
            _ => PropSet::EMPTY,
        });
        eng.register_rule("inverse", |r| match r.expr {
            Expr::Inv(_) => r.children[0].holds.intersect(PropSet::of(INV_KEEPS)),
            _ => PropSet::EMPTY,
        });
        eng.register_rule("product-structure", product_structure);
        eng.register_rule("gram-spd", gram_spd);
        eng.register_rule("palindrome-symmetric", palindrome_symmetric);
        eng.register_rule("orthonormal-cancel", orthonormal_cancel);
        eng.register_rule("sum-structure", |r| match r.expr {
            Expr::Plus(_) => {
                let mut out = PropSet::of(&[Symmetric, Diagonal, LowerTriangular, UpperTriangular, Spd]);
                for c in r.children {
                    out = out.intersect(c.holds);
                }
                out
            }
            _ => PropSet::EMPTY,
        });
        eng
    }

    pub fn register_rule<F>(&mut self, name: &'static str, f: F)
    where
        F: Fn(&RuleInput<'_>) -> PropSet + Send + Sync + 'static,
    {
        self.rules.push(Rule {
            name,
            apply: Box::new(f),
        });
    }

    pub fn register_implication(&mut self, from: Property, implies: PropSet) {
        self.implications.push((from, implies));
    }

    pub fn rule_names(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.name).collect()
    }

    /// Implication closure.
    pub fn close(&self, mut s: PropSet) -> PropSet {
        loop {
            let mut next = s;
            for (from, to) in &self.implications {
                if s.contains(*from) {
                    next = next.union(*to);
                }
            }
            if next == s {
                return s;
            }
            s = next;
        }
    }

    /// Infers properties of `e` (expected canonical).
    pub fn infer(&self, e: &Expr, ctx: &PropertyContext) -> Result<Inference, ContextError> {
        let children = e
            .children()
            .iter()
            .map(|c| self.infer(c, ctx))
            .collect::<Result<Vec<_>, _>>()?;
        let sh = shape(e, ctx)?;
        let input = RuleInput {
            expr: e,
            children: &children,
            shape: &sh,
            ctx,
        };
        let mut holds = PropSet::EMPTY;
        let mut fails = PropSet::EMPTY;
        match &sh {
            Shape::Scalar => {
                holds.insert(Property::Scalar);
                fails = PropSet::of(&[Property::Vector, Property::Matrix]);
            }
            Shape::Identity => {
                // a scaled identity; only `id` itself is the identity
                holds = holds.union(PropSet::of(&[Property::Diagonal, Property::Square, Property::Matrix]));
                fails = PropSet::of(&[Property::Vector, Property::Scalar]);
            }
            Shape::Matrix(r, c) => {
                fails.insert(Property::Scalar);
                if r == c {
                    holds.insert(Property::Square);
                } else if ctx.is_greater(r, c) || ctx.is_greater(c, r) {
                    fails = fails.union(PropSet::of(&[
                        Property::Square,
                        Property::Symmetric,
                        Property::Spd,
                        Property::Diagonal,
                        Property::OrthogonalSquare,
                        Property::Identity,
                    ]));
                }
                if *c == Dim::One && *r != Dim::One {
                    holds.insert(Property::Vector);
                    fails.insert(Property::Matrix);
                } else if *r != Dim::One && *c != Dim::One {
                    holds.insert(Property::Matrix);
                    fails.insert(Property::Vector);
                }
            }
        }
        for rule in &self.rules {
            holds = holds.union((rule.apply)(&input));
        }
        holds = holds.union(self.asserted(e, ctx));
        let holds = self.close(holds);
        Ok(Inference {
            holds,
            fails: PropSet(fails.0 & !holds.0),
        })
    }

    fn asserted(&self, e: &Expr, ctx: &PropertyContext) -> PropSet {
        let inv_invariant = PropSet::of(INV_KEEPS).with(Property::Square);
        let mut out = PropSet::EMPTY;
        let inv_e = crate::expr::make_inv(e.clone());
        for (x, p) in ctx.assertions() {
            if x == e || (*x == inv_e && inv_invariant.contains(*p)) {
                out.insert(*p);
            }
        }
        out
    }
}

fn scalar_coefficient_positive(scalars: &[Expr]) -> bool {
    scalars.iter().all(|s| matches!(s, Expr::Literal(r) if r.is_positive()))
}

fn product_structure(r: &RuleInput<'_>) -> PropSet {
    use Property::*;
    let Expr::Times(xs) = r.expr else {
        return PropSet::EMPTY;
    };
    let mut mats: Vec<&Inference> = Vec::new();
    let mut scalars = Vec::new();
    for (x, inf) in xs.iter().zip(r.children) {
        if x.is_scalar() {
            scalars.push(x.clone());
        } else {
            mats.push(inf);
        }
    }
    if mats.is_empty() {
        return PropSet::EMPTY;
    }
    let mut out = PropSet::EMPTY;
    let all = |p: Property| mats.iter().all(|m| m.has(p));
    for p in [
        Diagonal,
        LowerTriangular,
        UpperTriangular,
        OrthonormalColumns,
        OrthogonalSquare,
    ] {
        if all(p) {
            out.insert(p);
        }
    }
    let sq_full = |m: &&Inference| m.has(Square) && m.has(FullRank);
    let non_sq_full = mats.iter().filter(|m| !sq_full(m)).count();
    if non_sq_full == 0 || (non_sq_full == 1 && all(FullRank)) {
        out.insert(FullRank);
    }
    if mats.len() == 1 {
        let single = mats[0].holds;
        out = out.union(single.intersect(PropSet::of(SCALE_KEEPS)));
        if single.contains(Identity) {
            out.insert(Diagonal);
        }
    }
    if !scalars.is_empty() {
        let positive = scalar_coefficient_positive(&scalars);
        if !positive {
            out.remove(FullRank);
            out.remove(OrthonormalColumns);
            out.remove(OrthogonalSquare);
        } else if mats.len() == 1 && mats[0].has(Spd) {
            out.insert(Spd);
        }
        // positive scaling of an orthonormal matrix is not orthonormal
        out.remove(OrthonormalColumns);
        out.remove(OrthogonalSquare);
        if positive && mats.iter().all(sq_full) {
            out.insert(FullRank);
        }
    }
    out
}

/// Matrix factors of a product, and whether its scalar prefix is positive.
fn matrix_factors(e: &Expr) -> Option<(Vec<Expr>, bool)> {
    match e {
        Expr::Times(_) => {
            let (s, m) = e.split_product();
            Some((m, s.is_empty() || scalar_coefficient_positive(&s)))
        }
        _ => None,
    }
}

/// `A'A` (or `A'SA` with S SPD) is SPD when A is full rank with more rows
/// than columns; mirrored for `AA'`.
fn gram_spd(r: &RuleInput<'_>) -> PropSet {
    let Some((mats, positive)) = matrix_factors(r.expr) else {
        return PropSet::EMPTY;
    };
    if !positive || !(mats.len() == 2 || mats.len() == 3) {
        return PropSet::EMPTY;
    }
    let Expr::Times(xs) = r.expr else {
        return PropSet::EMPTY;
    };
    let infs: Vec<&Inference> = xs
        .iter()
        .zip(r.children)
        .filter(|(x, _)| !x.is_scalar())
        .map(|(_, i)| i)
        .collect();
    let first = &mats[0];
    let last = &mats[mats.len() - 1];
    if push_trans(last) != *first {
        return PropSet::EMPTY;
    }
    if mats.len() == 3 && !infs[1].has(Property::Spd) {
        return PropSet::EMPTY;
    }
    let Ok((rows, cols)) = dims(last, r.ctx) else {
        return PropSet::EMPTY;
    };
    let tall_right = infs[infs.len() - 1].has(Property::FullRank) && r.ctx.is_greater(&rows, &cols);
    let wide_left = {
        let Ok((fr, fc)) = dims(first, r.ctx) else {
            return PropSet::EMPTY;
        };
        infs[0].has(Property::FullRank) && r.ctx.is_greater(&fc, &fr)
    };
    // A'A: right factor tall. AA': left factor wide (i.e. A = first has more columns).
    let square_full = infs[0].has(Property::Square) && infs[0].has(Property::FullRank);
    if tall_right || wide_left || square_full {
        PropSet::of(&[Property::Spd])
    } else {
        PropSet::EMPTY
    }
}

/// Products equal to their own transpose are symmetric.
fn palindrome_symmetric(r: &RuleInput<'_>) -> PropSet {
    let Some((mats, _)) = matrix_factors(r.expr) else {
        return PropSet::EMPTY;
    };
    if mats.is_empty() {
        return PropSet::EMPTY;
    }
    let is_sym = |x: &Expr| -> bool {
        match x {
            Expr::Operand { name, .. } => r
                .ctx
                .operand(name)
                .map(|i| {
                    i.props.contains(Property::Symmetric)
                        || i.props.contains(Property::Diagonal)
                        || i.props.contains(Property::Spd)
                })
                .unwrap_or(false),
            Expr::Inv(inner) => matches!(&**inner, Expr::Operand { name, .. } if r
                .ctx
                .operand(name)
                .map(|i| i.props.contains(Property::Symmetric) || i.props.contains(Property::Diagonal)
                    || i.props.contains(Property::Spd))
                .unwrap_or(false)),
            Expr::Identity => true,
            _ => false,
        }
    };
    let n = mats.len();
    for k in 0..n.div_ceil(2) {
        let a = &mats[k];
        let b = &mats[n - 1 - k];
        if k == n - 1 - k {
            if !is_sym(a) {
                return PropSet::EMPTY;
            }
        } else if push_trans(b) != *a && !(a == b && is_sym(a)) {
            return PropSet::EMPTY;
        }
    }
    PropSet::of(&[Property::Symmetric])
}

/// `Q'Q = I` for orthonormal columns, `QQ' = I` for square orthogonal Q.
fn orthonormal_cancel(r: &RuleInput<'_>) -> PropSet {
    let Some((mats, _)) = matrix_factors(r.expr) else {
        return PropSet::EMPTY;
    };
    let Expr::Times(xs) = r.expr else {
        return PropSet::EMPTY;
    };
    if mats.len() != 2 || xs.len() != 2 {
        return PropSet::EMPTY;
    }
    let props = |x: &Expr| -> PropSet { x.operand_name().map(|n| r.ctx.props_of(n)).unwrap_or_default() };
    match (&mats[0], &mats[1]) {
        (Expr::Trans(q), q2) if **q == *q2 && props(q2).contains(Property::OrthonormalColumns) => {
            PropSet::of(&[Property::Identity])
        }
        (q, Expr::Trans(q2)) if **q2 == *q && props(q).contains(Property::OrthogonalSquare) => {
            PropSet::of(&[Property::Identity])
        }
        _ => PropSet::EMPTY,
    }
}

/// Factorization kinds in the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorKind {
    Cholesky,
    Qr,
    Eig,
    Svd,
}

impl FactorKind {
    pub fn label(self) -> &'static str {
        match self {
            FactorKind::Cholesky => "cholesky",
            FactorKind::Qr => "qr",
            FactorKind::Eig => "eig",
            FactorKind::Svd => "svd",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "cholesky" => Some(FactorKind::Cholesky),
            "qr" => Some(FactorKind::Qr),
            "eig" => Some(FactorKind::Eig),
            "svd" => Some(FactorKind::Svd),
            _ => None,
        }
    }

    pub fn output_count(self) -> usize {
        match self {
            FactorKind::Cholesky => 1,
            FactorKind::Qr | FactorKind::Eig => 2,
            FactorKind::Svd => 3,
        }
    }

    /// Product of factors equal to the factored operand.
    pub fn reconstruction(self, outs: &[String]) -> Expr {
        let v = |k: usize| Expr::var(outs[k].clone());
        match self {
            FactorKind::Cholesky => Expr::times(vec![v(0), Expr::trans(v(0))]),
            FactorKind::Qr => Expr::times(vec![v(0), v(1)]),
            FactorKind::Eig => Expr::times(vec![v(0), v(1), Expr::trans(v(0))]),
            FactorKind::Svd => Expr::times(vec![v(0), v(1), Expr::trans(v(2))]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?} factorization is not viable: {reason}")]
pub struct FactorizationError {
    pub kind: FactorKind,
    pub reason: String,
}

/// Properties and shapes of the factors produced by factoring an operand
/// with the given properties and dims.
pub fn factor_output_properties(
    kind: FactorKind,
    props: PropSet,
    (rows, cols): &Dims,
    ctx: &PropertyContext,
) -> Result<Vec<(PropSet, Dims)>, FactorizationError> {
    use Property::*;
    let fail = |reason: &str| FactorizationError {
        kind,
        reason: reason.to_string(),
    };
    let orthonormal = |r: &Dim, c: &Dim| {
        if r == c {
            PropSet::of(&[OrthogonalSquare, Matrix])
        } else {
            PropSet::of(&[OrthonormalColumns, Matrix])
        }
    };
    match kind {
        FactorKind::Cholesky => {
            if !props.contains(Spd) || rows != cols {
                return Err(fail("operand is not SPD"));
            }
            Ok(vec![(
                PropSet::of(&[Square, LowerTriangular, FullRank, Matrix]),
                (rows.clone(), rows.clone()),
            )])
        }
        FactorKind::Qr => {
            if !props.contains(FullRank) || !ctx.is_greater_eq(rows, cols) {
                return Err(fail("operand is not full rank with rows >= cols"));
            }
            Ok(vec![
                (orthonormal(rows, cols), (rows.clone(), cols.clone())),
                (
                    PropSet::of(&[UpperTriangular, Square, FullRank, Matrix]),
                    (cols.clone(), cols.clone()),
                ),
            ])
        }
        FactorKind::Eig => {
            if !props.contains(Symmetric) || rows != cols {
                return Err(fail("operand is not symmetric"));
            }
            let mut w = PropSet::of(&[Diagonal, Square, Matrix]);
            if props.contains(FullRank) {
                w.insert(FullRank);
            }
            Ok(vec![
                (PropSet::of(&[OrthogonalSquare, Matrix]), (rows.clone(), rows.clone())),
                (w, (rows.clone(), rows.clone())),
            ])
        }
        FactorKind::Svd => {
            let k = ctx
                .min_dim(rows, cols)
                .ok_or_else(|| fail("relative order of rows and cols is unknown"))?;
            let mut sigma = PropSet::of(&[Diagonal, Square, Matrix]);
            if props.contains(FullRank) {
                sigma.insert(FullRank);
            }
            Ok(vec![
                (orthonormal(rows, &k), (rows.clone(), k.clone())),
                (sigma, (k.clone(), k.clone())),
                (orthonormal(cols, &k), (cols.clone(), k.clone())),
            ])
        }
    }
}
