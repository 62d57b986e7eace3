//! Matrix-algebra expressions.
//!
//! An [`Expr`] is an immutable tree over named operands, exact rational
//! literals and the identity symbol, combined with `plus`, `times`, negation,
//! inversion and transposition. Matrix products are non-commutative; scalar
//! factors commute and are hoisted to the front of a product.
//!
//! [`canonicalize`] produces a unique structural form for the normalized
//! fragment (flattened sums and products, sorted summands, ordered scalar
//! prefix, no double transposes or inverses, transposition pushed to the
//! leaves). Context-dependent rewrites (orthonormal cancellation, inverse
//! distribution, identity expansion) live in [`crate::rewrite`].

use std::fmt;

use num_traits::{One, Signed, Zero};

pub type Rational = num_rational::Rational64;

/// Expression node. Derived ordering is the canonical summand/scalar order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Literal(Rational),
    Operand { name: String, scalar: bool },
    Identity,
    Plus(Vec<Expr>),
    Times(Vec<Expr>),
    Neg(Box<Expr>),
    Inv(Box<Expr>),
    Trans(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Operand {
            name: name.into(),
            scalar: false,
        }
    }

    pub fn scalar_var(name: impl Into<String>) -> Expr {
        Expr::Operand {
            name: name.into(),
            scalar: true,
        }
    }

    pub fn int(v: i64) -> Expr {
        Expr::Literal(Rational::from_integer(v))
    }

    pub fn plus(children: Vec<Expr>) -> Expr {
        Expr::Plus(children)
    }

    pub fn times(children: Vec<Expr>) -> Expr {
        Expr::Times(children)
    }

    pub fn inv(e: Expr) -> Expr {
        Expr::Inv(Box::new(e))
    }

    pub fn trans(e: Expr) -> Expr {
        Expr::Trans(Box::new(e))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    /// True when the node evaluates to a scalar.
    pub fn is_scalar(&self) -> bool {
        match self {
            Expr::Literal(_) => true,
            Expr::Operand { scalar, .. } => *scalar,
            Expr::Identity => false,
            Expr::Plus(xs) | Expr::Times(xs) => xs.iter().all(Expr::is_scalar),
            Expr::Neg(x) | Expr::Inv(x) | Expr::Trans(x) => x.is_scalar(),
        }
    }

    pub fn operand_name(&self) -> Option<&str> {
        match self {
            Expr::Operand { name, .. } => Some(name),
            _ => None,
        }
    }

    /// Operand or transposed operand (non-scalar): the shapes kernel holes bind.
    pub fn is_operand_like(&self) -> bool {
        match self {
            Expr::Operand { scalar, .. } => !scalar,
            Expr::Trans(x) => matches!(**x, Expr::Operand { scalar: false, .. }),
            _ => false,
        }
    }

    /// Underlying operand name of an operand-like node.
    pub fn base_operand(&self) -> Option<&str> {
        match self {
            Expr::Operand { name, .. } => Some(name),
            Expr::Trans(x) => x.base_operand(),
            _ => None,
        }
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Plus(xs) | Expr::Times(xs) => xs,
            Expr::Neg(x) | Expr::Inv(x) | Expr::Trans(x) => std::slice::from_ref(&**x),
            _ => &[],
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(Expr::node_count).sum::<usize>()
    }

    /// Pre-order visit of every subterm.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn contains(&self, needle: &Expr) -> bool {
        let mut found = false;
        self.visit(&mut |s| found |= s == needle);
        found
    }

    /// Names of all operands (matrix and scalar), sorted and deduplicated.
    pub fn operands(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |s| {
            if let Expr::Operand { name, .. } = s {
                out.push(name.clone());
            }
        });
        out.sort();
        out.dedup();
        out
    }

    /// Rebuilds the tree bottom-up, applying `f` to every rebuilt node.
    pub fn map_bottom_up(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Plus(xs) => Expr::Plus(xs.iter().map(|x| x.map_bottom_up(f)).collect()),
            Expr::Times(xs) => Expr::Times(xs.iter().map(|x| x.map_bottom_up(f)).collect()),
            Expr::Neg(x) => Expr::neg(x.map_bottom_up(f)),
            Expr::Inv(x) => Expr::inv(x.map_bottom_up(f)),
            Expr::Trans(x) => Expr::trans(x.map_bottom_up(f)),
            leaf => leaf.clone(),
        };
        f(rebuilt)
    }

    /// Replaces every subterm structurally equal to `from` by `to`.
    pub fn replace(&self, from: &Expr, to: &Expr) -> Expr {
        if self == from {
            return to.clone();
        }
        match self {
            Expr::Plus(xs) => Expr::Plus(xs.iter().map(|x| x.replace(from, to)).collect()),
            Expr::Times(xs) => Expr::Times(xs.iter().map(|x| x.replace(from, to)).collect()),
            Expr::Neg(x) => Expr::neg(x.replace(from, to)),
            Expr::Inv(x) => Expr::inv(x.replace(from, to)),
            Expr::Trans(x) => Expr::trans(x.replace(from, to)),
            leaf => leaf.clone(),
        }
    }

    /// Renames operands according to `f` (names without a mapping are kept).
    pub fn rename(&self, f: &dyn Fn(&str) -> Option<String>) -> Expr {
        self.map_bottom_up(&mut |e| match e {
            Expr::Operand { name, scalar } => Expr::Operand {
                name: f(&name).unwrap_or(name),
                scalar,
            },
            other => other,
        })
    }

    /// Splits a canonical product into (scalar prefix, matrix factors).
    /// Non-products are a single matrix factor (or a single scalar).
    pub fn split_product(&self) -> (Vec<Expr>, Vec<Expr>) {
        match self {
            Expr::Times(xs) => {
                let (s, m): (Vec<Expr>, Vec<Expr>) = xs.iter().cloned().partition(Expr::is_scalar);
                (s, m)
            }
            e if e.is_scalar() => (vec![e.clone()], vec![]),
            e => (vec![], vec![e.clone()]),
        }
    }
}

/// Canonical form. Pure, idempotent and value-preserving.
pub fn canonicalize(e: &Expr) -> Expr {
    match e {
        Expr::Literal(_) | Expr::Operand { .. } | Expr::Identity => e.clone(),
        Expr::Neg(x) => make_times(vec![Expr::int(-1), canonicalize(x)]),
        Expr::Trans(x) => push_trans(&canonicalize(x)),
        Expr::Inv(x) => make_inv(canonicalize(x)),
        Expr::Plus(xs) => make_plus(xs.iter().map(canonicalize).collect()),
        Expr::Times(xs) => make_times(xs.iter().map(canonicalize).collect()),
    }
}

/// Transpose of a canonical expression, in canonical form.
pub fn push_trans(c: &Expr) -> Expr {
    if c.is_scalar() {
        return c.clone();
    }
    match c {
        Expr::Identity => Expr::Identity,
        Expr::Operand { .. } => Expr::trans(c.clone()),
        Expr::Trans(x) => (**x).clone(),
        Expr::Plus(xs) => make_plus(xs.iter().map(push_trans).collect()),
        Expr::Times(_) => {
            let (scalars, mats) = c.split_product();
            let mut out = scalars;
            out.extend(mats.iter().rev().map(push_trans));
            make_times(out)
        }
        Expr::Inv(x) => make_inv(push_trans(x)),
        Expr::Neg(_) | Expr::Literal(_) => canonicalize(&Expr::trans(c.clone())),
    }
}

/// Inverse of a canonical expression, in canonical form.
pub fn make_inv(c: Expr) -> Expr {
    match c {
        Expr::Literal(r) if !r.is_zero() => Expr::Literal(r.recip()),
        Expr::Inv(x) => *x,
        Expr::Identity => Expr::Identity,
        Expr::Times(ref xs) => match xs.first() {
            Some(Expr::Literal(k)) if !k.is_zero() => {
                let k = *k;
                let rest = make_times(xs[1..].to_vec());
                make_times(vec![Expr::Literal(k.recip()), make_inv(rest)])
            }
            _ => Expr::inv(c),
        },
        other => Expr::inv(other),
    }
}

/// Canonical sum of canonical children.
pub fn make_plus(children: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(children.len());
    for c in children {
        match c {
            Expr::Plus(xs) => flat.extend(xs),
            other => flat.push(other),
        }
    }
    let mut constant = Rational::zero();
    let mut terms = Vec::with_capacity(flat.len());
    for t in flat {
        match t {
            Expr::Literal(r) => constant += r,
            other => terms.push(other),
        }
    }
    terms.sort();
    if !constant.is_zero() {
        terms.insert(0, Expr::Literal(constant));
    }
    match terms.len() {
        0 => Expr::Literal(Rational::zero()),
        1 => terms.pop().unwrap(),
        _ => Expr::Plus(terms),
    }
}

/// Canonical product of canonical children.
pub fn make_times(children: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(children.len());
    for c in children {
        match c {
            Expr::Times(xs) => flat.extend(xs),
            other => flat.push(other),
        }
    }
    let mut coef = Rational::one();
    let mut scalars = Vec::new();
    let mut mats = Vec::new();
    for f in flat {
        match f {
            Expr::Literal(r) => coef *= r,
            s if s.is_scalar() => scalars.push(s),
            m => mats.push(m),
        }
    }
    scalars.sort();
    if mats.is_empty() {
        if scalars.is_empty() || coef.is_zero() {
            return Expr::Literal(coef);
        }
        if scalars.len() == 1 && coef.is_one() {
            return scalars.pop().unwrap();
        }
    }
    // A literal times a lone sum distributes; this pushes negation inward.
    let lone = if mats.is_empty() { &scalars } else { &mats };
    let lone_sum = !coef.is_one()
        && lone.len() == 1
        && (mats.is_empty() || scalars.is_empty())
        && matches!(lone[0], Expr::Plus(_));
    if lone_sum {
        if let Expr::Plus(xs) = &lone[0] {
            return make_plus(
                xs.iter()
                    .map(|x| make_times(vec![Expr::Literal(coef), x.clone()]))
                    .collect(),
            );
        }
    }
    let mut out = Vec::with_capacity(1 + scalars.len() + mats.len());
    if !coef.is_one() {
        out.push(Expr::Literal(coef));
    }
    out.extend(scalars);
    out.extend(mats);
    match out.len() {
        0 => Expr::Literal(Rational::one()),
        1 => out.pop().unwrap(),
        _ => Expr::Times(out),
    }
}

fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl Expr {
    fn fmt_factor(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Plus(_) => write!(f, "({self})"),
            Expr::Literal(r) if !r.is_integer() || r.is_negative() => {
                write!(f, "({})", fmt_rational(r))
            }
            Expr::Times(_) | Expr::Neg(_) => write!(f, "({self})"),
            _ => write!(f, "{self}"),
        }
    }

    /// Returns (negative, magnitude) for display of summands.
    fn sign_split(&self) -> (bool, Expr) {
        match self {
            Expr::Literal(r) if r.is_negative() => (true, Expr::Literal(-*r)),
            Expr::Times(xs) => match xs.first() {
                Some(Expr::Literal(r)) if r.is_negative() => {
                    let mut rest = xs.clone();
                    if *r == -Rational::one() {
                        rest.remove(0);
                    } else {
                        rest[0] = Expr::Literal(-*r);
                    }
                    let mag = if rest.len() == 1 {
                        rest.pop().unwrap()
                    } else {
                        Expr::Times(rest)
                    };
                    (true, mag)
                }
                _ => (false, self.clone()),
            },
            Expr::Neg(x) => (true, (**x).clone()),
            _ => (false, self.clone()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(r) => write!(f, "{}", fmt_rational(r)),
            Expr::Operand { name, .. } => write!(f, "{name}"),
            Expr::Identity => write!(f, "id"),
            Expr::Plus(xs) => {
                for (k, x) in xs.iter().enumerate() {
                    let (negative, mag) = x.sign_split();
                    match (k, negative) {
                        (0, false) => write!(f, "{mag}")?,
                        (0, true) => {
                            write!(f, "-")?;
                            mag.fmt_factor(f)?
                        }
                        (_, false) => write!(f, " + {mag}")?,
                        (_, true) => write!(f, " - {mag}")?,
                    }
                }
                Ok(())
            }
            Expr::Times(xs) => {
                let mut start = 0;
                if let Some(Expr::Literal(r)) = xs.first() {
                    if *r == -Rational::one() && xs.len() > 1 {
                        write!(f, "-")?;
                        start = 1;
                    }
                }
                for (k, x) in xs[start..].iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    x.fmt_factor(f)?;
                }
                Ok(())
            }
            Expr::Neg(x) => {
                write!(f, "-")?;
                x.fmt_factor(f)
            }
            Expr::Inv(x) => write!(f, "inv({x})"),
            Expr::Trans(x) => match **x {
                Expr::Operand { .. } | Expr::Identity => write!(f, "{x}'"),
                _ => write!(f, "({x})'"),
            },
        }
    }
}

/// Parse failure with a byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at offset {offset}")]
pub struct ExprParseError {
    pub message: String,
    pub offset: usize,
}

/// Parses infix syntax: `+ - * /`, postfix `'` for transposition,
/// `inv(..)`, `trans(..)`, `id`, integer literals and identifiers.
/// `is_scalar` classifies identifiers. Decimal literals are rejected.
pub fn parse_expr(src: &str, is_scalar: &dyn Fn(&str) -> bool) -> Result<Expr, ExprParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        is_scalar,
    };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    is_scalar: &'a dyn Fn(&str) -> bool,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprParseError {
        ExprParseError {
            message: msg.to_string(),
            offset: self.pos,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    terms.push(Expr::neg(self.term()?));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::Plus(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ExprParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    factors.push(self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    factors.push(Expr::inv(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::Times(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr, ExprParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::neg(self.unary()?));
        }
        let mut e = self.primary()?;
        while self.peek() == Some(b'\'') {
            self.pos += 1;
            e = Expr::trans(e);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ExprParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if matches!(self.src.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E')) {
                    return Err(self.err("floating-point literals are not allowed"));
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: i64 = text.parse().map_err(|_| ExprParseError {
                    message: "integer literal out of range".into(),
                    offset: start,
                })?;
                Ok(Expr::int(v))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match ident {
                    "id" => Ok(Expr::Identity),
                    "inv" | "trans" => {
                        self.expect(b'(')?;
                        let inner = self.sum()?;
                        self.expect(b')')?;
                        Ok(if ident == "inv" {
                            Expr::inv(inner)
                        } else {
                            Expr::trans(inner)
                        })
                    }
                    name => Ok(Expr::Operand {
                        name: name.to_string(),
                        scalar: (self.is_scalar)(name),
                    }),
                }
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}
