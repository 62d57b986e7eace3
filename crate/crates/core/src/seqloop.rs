//! Scheduling of algorithms over sequences of problems.
//!
//! A [`SequenceSpec`] lists loop indices with symbolic extents and the
//! indices every input operand varies with. [`schedule`] places each
//! statement at the loop level that covers exactly the indices it depends
//! on, so invariant work is hoisted out of the loops.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cost::CostPolynomial;
use crate::derivation::Algorithm;

pub type IndexSet = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexVar {
    pub name: String,
    /// Size symbol bounding the index.
    pub extent: String,
}

/// Loop indices, operand variation and output indexing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceSpec {
    pub indices: Vec<IndexVar>,
    pub variation: BTreeMap<String, IndexSet>,
    pub output: IndexSet,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("index `{0}` declared twice")]
    DuplicateIndex(String),
    #[error("unknown index `{0}`")]
    UnknownIndex(String),
    #[error("at most two indices are supported, got {0}")]
    TooManyIndices(usize),
}

impl SequenceSpec {
    /// A single problem instance.
    pub fn single() -> Self {
        Self::default()
    }

    pub fn add_index(&mut self, name: &str, extent: &str) -> Result<(), SequenceError> {
        if self.index(name).is_some() {
            return Err(SequenceError::DuplicateIndex(name.to_string()));
        }
        if self.indices.len() == 2 {
            return Err(SequenceError::TooManyIndices(3));
        }
        self.indices.push(IndexVar {
            name: name.to_string(),
            extent: extent.to_string(),
        });
        Ok(())
    }

    pub fn index(&self, name: &str) -> Option<&IndexVar> {
        self.indices.iter().find(|i| i.name == name)
    }

    pub fn vary(&mut self, operand: &str, indices: &[&str]) -> Result<(), SequenceError> {
        let mut set = IndexSet::new();
        for i in indices {
            if self.index(i).is_none() {
                return Err(SequenceError::UnknownIndex(i.to_string()));
            }
            set.insert(i.to_string());
        }
        self.variation.insert(operand.to_string(), set);
        Ok(())
    }

    pub fn set_output(&mut self, indices: &[&str]) -> Result<(), SequenceError> {
        for i in indices {
            if self.index(i).is_none() {
                return Err(SequenceError::UnknownIndex(i.to_string()));
            }
        }
        self.output = indices.iter().map(|s| s.to_string()).collect();
        Ok(())
    }

    pub fn extent(&self, index: &str) -> Option<&str> {
        self.index(index).map(|i| i.extent.as_str())
    }

    /// Variation of `operand`; operands without a declaration are invariant.
    pub fn variation_of(&self, operand: &str) -> IndexSet {
        self.variation.get(operand).cloned().unwrap_or_default()
    }

    /// Extent symbols of a set of indices, in declaration order.
    pub fn extents(&self, set: &IndexSet) -> Vec<String> {
        self.indices
            .iter()
            .filter(|i| set.contains(&i.name))
            .map(|i| i.extent.clone())
            .collect()
    }
}

/// Index dependences of statement `k`: the union of the variation sets of
/// every input operand reachable through its inputs.
pub fn index_deps(k: usize, alg: &Algorithm, spec: &SequenceSpec) -> IndexSet {
    all_deps(alg, spec)[k].clone()
}

fn all_deps(alg: &Algorithm, spec: &SequenceSpec) -> Vec<IndexSet> {
    let mut produced: BTreeMap<&str, IndexSet> = BTreeMap::new();
    let mut out = Vec::with_capacity(alg.statements.len());
    for s in &alg.statements {
        let mut d = IndexSet::new();
        for i in s.inputs() {
            match produced.get(i.as_str()) {
                Some(p) => d.extend(p.iter().cloned()),
                None => d.extend(spec.variation_of(&i)),
            }
        }
        for o in &s.outputs {
            produced.insert(o.as_str(), d.clone());
        }
        out.push(d);
    }
    out
}

/// A node of a loop nest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoopItem {
    /// Index into the statements of the source algorithm.
    Stmt(usize),
    Loop {
        index: String,
        extent: String,
        body: Vec<LoopItem>,
    },
}

/// An algorithm arranged in loop nests.
#[derive(Clone, Debug)]
pub struct ScheduledAlgorithm {
    pub algorithm: Algorithm,
    pub spec: SequenceSpec,
    /// Loop order, outermost first.
    pub order: Vec<String>,
    pub body: Vec<LoopItem>,
    /// Index set each statement is placed at.
    pub levels: Vec<IndexSet>,
    pub total: CostPolynomial,
}

impl ScheduledAlgorithm {
    /// Statements in execution order, each with its enclosing loop indices.
    pub fn flatten(&self) -> Vec<(usize, Vec<String>)> {
        fn walk(items: &[LoopItem], stack: &mut Vec<String>, out: &mut Vec<(usize, Vec<String>)>) {
            for it in items {
                match it {
                    LoopItem::Stmt(k) => out.push((*k, stack.clone())),
                    LoopItem::Loop { index, body, .. } => {
                        stack.push(index.clone());
                        walk(body, stack, out);
                        stack.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut Vec::new(), &mut out);
        out
    }
}

/// Σ over statements of cost × product of the extents of its level.
pub fn total_cost(sched: &ScheduledAlgorithm) -> CostPolynomial {
    level_cost(&sched.algorithm, &sched.levels, &sched.spec)
}

fn level_cost(alg: &Algorithm, levels: &[IndexSet], spec: &SequenceSpec) -> CostPolynomial {
    alg.statements
        .iter()
        .zip(levels)
        .fold(CostPolynomial::zero(), |acc, (s, l)| {
            acc.add(&s.cost.mul_by_extent(&spec.extents(l)))
        })
}

/// Cost of running every statement inside all loops.
pub fn naive_cost(alg: &Algorithm, spec: &SequenceSpec) -> CostPolynomial {
    let all: IndexSet = spec.indices.iter().map(|i| i.name.clone()).collect();
    let ext = spec.extents(&all);
    alg.statements
        .iter()
        .fold(CostPolynomial::zero(), |acc, s| acc.add(&s.cost.mul_by_extent(&ext)))
}

/// Statement-wise dominance over the fully nested form: every statement
/// runs under a subset of the loops and has a non-negative cost at `sizes`.
pub fn dominates_naive(sched: &ScheduledAlgorithm, sizes: &BTreeMap<String, i64>) -> bool {
    let all: IndexSet = sched.spec.indices.iter().map(|i| i.name.clone()).collect();
    sched.algorithm.statements.iter().zip(&sched.levels).all(|(s, l)| {
        l.is_subset(&all)
            && s.cost
                .eval(sizes)
                .is_ok_and(|c| c >= num_rational::Rational64::from_integer(0))
    })
}

fn tree_cost(alg: &Algorithm, items: &[LoopItem], extents: &mut Vec<String>) -> CostPolynomial {
    let mut acc = CostPolynomial::zero();
    for it in items {
        match it {
            LoopItem::Stmt(k) => acc = acc.add(&alg.statements[*k].cost.mul_by_extent(extents)),
            LoopItem::Loop { extent, body, .. } => {
                extents.push(extent.clone());
                acc = acc.add(&tree_cost(alg, body, extents));
                extents.pop();
            }
        }
    }
    acc
}

fn build(levels: &[IndexSet], order: &[String], spec: &SequenceSpec) -> Vec<LoopItem> {
    let at = |set: &IndexSet| -> Vec<LoopItem> {
        levels
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == set)
            .map(|(k, _)| LoopItem::Stmt(k))
            .collect()
    };
    let lp = |index: &String, body: Vec<LoopItem>| LoopItem::Loop {
        index: index.clone(),
        extent: spec.extent(index).unwrap_or_default().to_string(),
        body,
    };
    let mut out = at(&IndexSet::new());
    match order {
        [] => {}
        [a] => {
            let inner = at(&[a.clone()].into());
            if !inner.is_empty() {
                out.push(lp(a, inner));
            }
        }
        [a, b, ..] => {
            let b_only = at(&[b.clone()].into());
            if !b_only.is_empty() {
                out.push(lp(b, b_only));
            }
            let mut a_body = at(&[a.clone()].into());
            let both = at(&[a.clone(), b.clone()].into());
            if !both.is_empty() {
                a_body.push(lp(b, both));
            }
            if !a_body.is_empty() {
                out.push(lp(a, a_body));
            }
        }
    }
    out
}

/// Hoists every statement to the level of its index dependences. The last
/// statement also depends on the output indexing. Both loop orders are
/// built; the declared one wins ties.
pub fn schedule(alg: &Algorithm, spec: &SequenceSpec) -> ScheduledAlgorithm {
    let mut levels = all_deps(alg, spec);
    if let Some(last) = levels.last_mut() {
        last.extend(spec.output.iter().cloned());
    }
    let declared: Vec<String> = spec.indices.iter().map(|i| i.name.clone()).collect();
    let mut orders = vec![declared.clone()];
    if declared.len() == 2 {
        orders.push(vec![declared[1].clone(), declared[0].clone()]);
    }
    let sizes = alg.ctx.reference_sizes();
    let mut best: Option<(num_rational::Rational64, Vec<String>, Vec<LoopItem>, CostPolynomial)> = None;
    for o in orders {
        let body = build(&levels, &o, spec);
        let total = tree_cost(alg, &body, &mut Vec::new());
        let c = total.eval(&sizes).unwrap_or_default();
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, o, body, total));
        }
    }
    let (_, order, body, total) = best.unwrap_or_default();
    ScheduledAlgorithm {
        algorithm: alg.clone(),
        spec: spec.clone(),
        order,
        body,
        levels,
        total,
    }
}

impl fmt::Display for ScheduledAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(items: &[LoopItem], s: &ScheduledAlgorithm, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for it in items {
                match it {
                    LoopItem::Stmt(k) => writeln!(f, "{:w$}{}", "", s.algorithm.statements[*k], w = 2 * depth)?,
                    LoopItem::Loop { index, extent, body } => {
                        writeln!(f, "{:w$}for {index} in 1..{extent}:", "", w = 2 * depth)?;
                        walk(body, s, depth + 1, f)?;
                    }
                }
            }
            Ok(())
        }
        walk(&self.body, self, 0, f)
    }
}
