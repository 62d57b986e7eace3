//! Context-dependent rewriting: simplification to a fixpoint, identity
//! expansion with orthogonal operands, grouping of common factors, and
//! discovery of common segments.

use std::collections::BTreeMap;

use crate::expr::{canonicalize, make_plus, make_times, push_trans, Expr};
use crate::properties::{dims, shape, Dim, PropSet, Property, PropertyContext, Shape};

const MAX_PASSES: usize = 64;

fn operand_props(e: &Expr, ctx: &PropertyContext) -> PropSet {
    e.operand_name().map(|n| ctx.props_of(n)).unwrap_or_default()
}

fn is_square(e: &Expr, ctx: &PropertyContext) -> bool {
    match shape(e, ctx) {
        Ok(Shape::Identity) => true,
        Ok(Shape::Matrix(r, c)) => r == c,
        _ => false,
    }
}

/// Applies the context rules to a fixpoint. The result is canonical and
/// value-equivalent to `e` whenever every inverse in `e` exists.
pub fn simplify(e: &Expr, ctx: &PropertyContext) -> Expr {
    let budget = 4 * e.node_count() + 16;
    let mut cur = canonicalize(e);
    for _ in 0..MAX_PASSES {
        let next = canonicalize(&cur.map_bottom_up(&mut |n| rewrite_node(n, ctx)));
        if next == cur || next.node_count() > budget {
            break;
        }
        cur = next;
    }
    cur
}

fn rewrite_node(n: Expr, ctx: &PropertyContext) -> Expr {
    match n {
        Expr::Trans(x) => {
            let p = operand_props(&x, ctx);
            if p.contains(Property::Symmetric) {
                *x
            } else {
                Expr::Trans(x)
            }
        }
        Expr::Inv(x) => rewrite_inv(*x, ctx),
        Expr::Times(xs) => rewrite_times(xs, ctx),
        other => other,
    }
}

fn rewrite_inv(x: Expr, ctx: &PropertyContext) -> Expr {
    if operand_props(&x, ctx).contains(Property::OrthogonalSquare) {
        return Expr::trans(x);
    }
    if let Expr::Trans(q) = &x {
        if operand_props(q, ctx).contains(Property::OrthogonalSquare) {
            return (**q).clone();
        }
    }
    if let Expr::Times(xs) = &x {
        let mats: Vec<&Expr> = xs.iter().filter(|f| !f.is_scalar()).collect();
        let distributes =
            !mats.is_empty() && xs.len() > 1 && mats.iter().all(|m| is_square(m, ctx)) && shape(&x, ctx).is_ok();
        if distributes {
            let mut out: Vec<Expr> = xs
                .iter()
                .filter(|f| f.is_scalar())
                .map(|s| Expr::inv(s.clone()))
                .collect();
            out.extend(mats.iter().rev().map(|m| Expr::inv((*m).clone())));
            return Expr::Times(out);
        }
    }
    Expr::inv(x)
}

fn cancels(a: &Expr, b: &Expr, ctx: &PropertyContext) -> bool {
    // A * inv(A) and inv(A) * A
    if matches!(b, Expr::Inv(x) if **x == *a) || matches!(a, Expr::Inv(x) if **x == *b) {
        return true;
    }
    // Q' * Q with orthonormal columns, Q * Q' with Q square orthogonal
    if let Expr::Trans(q) = a {
        if **q == *b && operand_props(b, ctx).contains(Property::OrthonormalColumns) {
            return true;
        }
    }
    if let Expr::Trans(q) = b {
        if **q == *a && operand_props(a, ctx).contains(Property::OrthogonalSquare) {
            return true;
        }
    }
    false
}

fn rewrite_times(xs: Vec<Expr>, ctx: &PropertyContext) -> Expr {
    let (scalars, mats): (Vec<Expr>, Vec<Expr>) = xs.into_iter().partition(Expr::is_scalar);
    let had_mats = !mats.is_empty();
    let mut stack: Vec<Expr> = Vec::with_capacity(mats.len());
    for m in mats {
        if matches!(m, Expr::Identity) {
            continue;
        }
        if let Some(top) = stack.last() {
            if cancels(top, &m, ctx) {
                stack.pop();
                continue;
            }
        }
        stack.push(m);
    }
    if stack.is_empty() && had_mats {
        stack.push(Expr::Identity);
    }
    let mut out = scalars;
    out.extend(stack);
    if out.len() == 1 {
        out.pop().unwrap()
    } else {
        Expr::Times(out)
    }
}

/// Child position path from the root.
pub type Path = Vec<usize>;

/// Paths of every identity occurrence, in pre-order.
pub fn identity_paths(e: &Expr) -> Vec<Path> {
    fn go(e: &Expr, path: &mut Path, out: &mut Vec<Path>) {
        if matches!(e, Expr::Identity) {
            out.push(path.clone());
        }
        for (k, c) in e.children().iter().enumerate() {
            path.push(k);
            go(c, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(e, &mut Vec::new(), &mut out);
    out
}

/// Replaces the subterm at `path`.
pub fn replace_at(e: &Expr, path: &[usize], with: &Expr) -> Expr {
    let Some((&head, rest)) = path.split_first() else {
        return with.clone();
    };
    match e {
        Expr::Plus(xs) | Expr::Times(xs) => {
            let mut ys = xs.clone();
            ys[head] = replace_at(&xs[head], rest, with);
            if matches!(e, Expr::Plus(_)) {
                Expr::Plus(ys)
            } else {
                Expr::Times(ys)
            }
        }
        Expr::Neg(x) => Expr::neg(replace_at(x, rest, with)),
        Expr::Inv(x) => Expr::inv(replace_at(x, rest, with)),
        Expr::Trans(x) => Expr::trans(replace_at(x, rest, with)),
        leaf => leaf.clone(),
    }
}

/// Variants of `e` with one identity occurrence replaced by `Z*Z'` or
/// `Z'*Z` for a square orthogonal operand `Z` of the context. Variants that
/// do not conform dimensionally are dropped.
pub fn expand_identity(e: &Expr, ctx: &PropertyContext) -> Vec<Expr> {
    let zs: Vec<&String> = ctx
        .operands()
        .filter(|(n, i)| !i.scalar && ctx.props_of(n).contains(Property::OrthogonalSquare))
        .map(|(n, _)| n)
        .collect();
    let mut out: Vec<Expr> = Vec::new();
    for path in identity_paths(e) {
        for z in &zs {
            let zv = Expr::var(z.as_str());
            for form in [
                Expr::times(vec![zv.clone(), Expr::trans(zv.clone())]),
                Expr::times(vec![Expr::trans(zv.clone()), zv.clone()]),
            ] {
                let v = canonicalize(&replace_at(e, &path, &form));
                let conforms = match shape(&v, ctx) {
                    Ok(_) => !matches!(shape(e, ctx), Ok(Shape::Identity)) || path.is_empty(),
                    Err(_) => false,
                };
                if conforms && !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Pulls factors common to the left and right of every summand out of a
/// sum: `P*A*S + P*B*S` becomes `P*(A + B)*S`. Returns `None` when there is
/// nothing to group.
pub fn factor_common(e: &Expr) -> Option<Expr> {
    let Expr::Plus(terms) = e else {
        return None;
    };
    let split: Vec<(Vec<Expr>, Vec<Expr>)> = terms.iter().map(Expr::split_product).collect();
    if split.iter().any(|(_, m)| m.is_empty()) {
        return None;
    }
    let min_len = split.iter().map(|(_, m)| m.len()).min().unwrap_or(0);
    let first = &split[0].1;
    let mut left = 0;
    while left < min_len && split.iter().all(|(_, m)| m[left] == first[left]) {
        left += 1;
    }
    let mut right = 0;
    while left + right < min_len
        && split
            .iter()
            .all(|(_, m)| m[m.len() - 1 - right] == first[first.len() - 1 - right])
    {
        right += 1;
    }
    if left + right == 0 {
        return None;
    }
    let inner: Vec<Expr> = split
        .iter()
        .map(|(s, m)| {
            let mut middle: Vec<Expr> = m[left..m.len() - right].to_vec();
            if middle.is_empty() {
                middle.push(Expr::Identity);
            }
            let mut f = s.clone();
            f.extend(middle);
            make_times(f)
        })
        .collect();
    let mut out: Vec<Expr> = first[..left].to_vec();
    out.push(make_plus(inner));
    out.extend_from_slice(&first[first.len() - right..]);
    Some(make_times(out))
}

/// A contiguous subexpression together with its occurrence count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    /// Representative form (first occurrence as written).
    pub expr: Expr,
    /// Occurrences, counting transposed occurrences as the same segment.
    pub count: usize,
    /// Estimated flops saved by computing the segment once.
    pub saving: i128,
}

/// Key identifying a segment modulo transposition.
pub fn segment_key(seg: &Expr, ctx: &PropertyContext) -> Expr {
    let c = canonicalize(seg);
    let t = simplify(&push_trans(&c), ctx);
    c.min(t)
}

/// Windows of length >= 2 over the matrix factors of every product, plus
/// every sum, in pre-order.
pub fn segment_occurrences(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    e.visit(&mut |n| match n {
        Expr::Times(_) => {
            let (_, mats) = n.split_product();
            for len in 2..=mats.len() {
                for start in 0..=mats.len() - len {
                    out.push(make_times(mats[start..start + len].to_vec()));
                }
            }
        }
        Expr::Plus(_) if !n.is_scalar() => out.push(n.clone()),
        _ => {}
    });
    out
}

fn dim_value(d: &Dim, sizes: &BTreeMap<String, i64>) -> i128 {
    match d {
        Dim::One => 1,
        Dim::Sym(s) => *sizes.get(s).unwrap_or(&100) as i128,
    }
}

/// Rough flop estimate of evaluating a segment directly: products cost
/// `2*r*k*c`, sums `r*c` per term.
pub fn naive_flops(e: &Expr, ctx: &PropertyContext) -> i128 {
    let sizes = ctx.reference_sizes();
    let rc = |x: &Expr| -> (i128, i128) {
        dims(x, ctx)
            .map(|(r, c)| (dim_value(&r, &sizes), dim_value(&c, &sizes)))
            .unwrap_or((1, 1))
    };
    match e {
        Expr::Times(_) => {
            let (_, mats) = e.split_product();
            let mut total = 0;
            let mut acc: Option<(i128, i128)> = None;
            for m in &mats {
                let (r, c) = rc(m);
                total += naive_flops(m, ctx);
                acc = Some(match acc {
                    None => (r, c),
                    Some((ar, ak)) => {
                        total += 2 * ar * ak * c;
                        (ar, c)
                    }
                });
            }
            total
        }
        Expr::Plus(xs) => {
            let (r, c) = rc(e);
            xs.iter().map(|x| naive_flops(x, ctx)).sum::<i128>() + r * c * xs.len() as i128
        }
        Expr::Inv(x) => {
            let (r, _) = rc(x);
            naive_flops(x, ctx) + r * r * r / 3
        }
        Expr::Trans(x) | Expr::Neg(x) => naive_flops(x, ctx),
        _ => 0,
    }
}

/// Contiguous product/sum segments of `e`, counted modulo transposition and
/// ordered by count (descending), then estimated saving (descending), then
/// first occurrence.
pub fn find_segments(e: &Expr, ctx: &PropertyContext) -> Vec<Segment> {
    let mut keyed: Vec<(Expr, Segment)> = Vec::new();
    for occ in segment_occurrences(e) {
        let key = segment_key(&occ, ctx);
        if let Some((_, s)) = keyed.iter_mut().find(|(k, _)| *k == key) {
            s.count += 1;
        } else {
            keyed.push((
                key,
                Segment {
                    expr: occ,
                    count: 1,
                    saving: 0,
                },
            ));
        }
    }
    let mut out: Vec<Segment> = keyed
        .into_iter()
        .map(|(_, mut s)| {
            s.saving = (s.count as i128 - 1) * naive_flops(&s.expr, ctx);
            s
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(b.saving.cmp(&a.saving)));
    out
}
