mod common;

use std::collections::BTreeMap;

use lacomp::kernels::Catalog;
use lacomp::refexec::{execute, execute_scheduled, max_rel_err, oracle_sequence, random_instance, ITERATIVE};
use lacomp::seqloop::{dominates_naive, index_deps, naive_cost, schedule, IndexSet, ScheduledAlgorithm};

use common::{algorithms, golden, gwas, CHOL, EIG, QR};

fn sizes(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn set(xs: &[&str]) -> IndexSet {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Predicted FLOPs of the statements with a direct (non-iterative) count.
fn predicted_direct(s: &ScheduledAlgorithm, at: &BTreeMap<String, i64>) -> f64 {
    s.algorithm
        .statements
        .iter()
        .zip(&s.levels)
        .filter(|(st, _)| !ITERATIVE.contains(&st.kernel.as_str()))
        .map(|(st, l)| {
            let c = st.cost.mul_by_extent(&s.spec.extents(l)).eval(at).unwrap();
            *c.numer() as f64 / *c.denom() as f64
        })
        .sum()
}

#[test]
fn scheduled_algorithms_match_oracle() {
    let p = gwas();
    let cat = Catalog::default();
    let algs = algorithms(&p);
    for seed in 0..3 {
        let inst = random_instance(&p.ctx, &p.spec, p.validate.as_ref().unwrap(), seed).unwrap();
        let reference = oracle_sequence(&p.equation, &inst).unwrap();
        for a in &algs {
            let (got, _) = execute_scheduled(&schedule(a, &p.spec), &inst, &cat).unwrap();
            assert!(max_rel_err(&got, &reference) <= 1e-8, "{a}");
        }
    }
}

#[test]
fn hoisting_preserves_results() {
    let p = gwas();
    let cat = Catalog::default();
    let inst = random_instance(&p.ctx, &p.spec, &sizes(&[("n", 32), ("p", 3), ("m", 6), ("t", 4)]), 11).unwrap();
    for a in &algorithms(&p) {
        let (hoisted, _) = execute_scheduled(&schedule(a, &p.spec), &inst, &cat).unwrap();
        assert_eq!(hoisted.values.len(), 24);
        for (key, v) in &hoisted.values {
            let assignment = hoisted.indices.iter().cloned().zip(key.iter().copied()).collect();
            let mut env = inst.env_at(&assignment);
            let flat = execute(a, &mut env, &cat).unwrap();
            assert!(v.rel_err(&flat) <= 1e-12, "{} at {key:?}", a.name);
        }
    }
}

#[test]
fn index_dependences_of_golden_algorithms() {
    let p = gwas();
    let algs = algorithms(&p);
    let chol = golden(&algs, CHOL);
    let deps: Vec<IndexSet> = (0..chol.statements.len())
        .map(|k| index_deps(k, chol, &p.spec))
        .collect();
    assert_eq!(deps[0], set(&["j"]));
    assert_eq!(deps[1], set(&["j"]));
    assert_eq!(deps[2], set(&["i", "j"]));
    assert_eq!(deps[5], set(&["j"]));
    let eig = golden(&algs, EIG);
    assert_eq!(index_deps(0, eig, &p.spec), IndexSet::new());
    assert_eq!(index_deps(1, eig, &p.spec), set(&["j"]));
    assert_eq!(index_deps(2, eig, &p.spec), set(&["i"]));
}

#[test]
fn schedules_place_statements_by_dependence() {
    let p = gwas();
    let algs = algorithms(&p);
    let qr = schedule(golden(&algs, QR), &p.spec);
    let placed: Vec<(usize, Vec<String>)> = qr.flatten();
    let loops_of = |k: usize| placed.iter().find(|(s, _)| *s == k).unwrap().1.clone();
    assert_eq!(loops_of(0), vec!["j"]);
    assert_eq!(loops_of(3), vec!["i", "j"]);
    let eig = schedule(golden(&algs, EIG), &p.spec);
    assert_eq!(eig.flatten()[0], (0, vec![]));
    let order: Vec<usize> = eig.flatten().iter().map(|(k, _)| *k).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(sorted, (0..eig.algorithm.statements.len()).collect::<Vec<_>>());
}

#[test]
fn schedules_dominate_naive_nesting() {
    let p = gwas();
    let at = sizes(&[("n", 1000), ("p", 10), ("m", 100), ("t", 100)]);
    for a in &algorithms(&p) {
        let s = schedule(a, &p.spec);
        assert!(dominates_naive(&s, &at), "{}", a.name);
        let naive = naive_cost(a, &p.spec).eval(&at).unwrap();
        assert!(s.total.eval(&at).unwrap() <= naive, "{}", a.name);
    }
}

#[test]
fn counted_flops_follow_cost_model() {
    let p = gwas();
    let cat = Catalog::default();
    let small = sizes(&[("n", 64), ("p", 4), ("m", 8), ("t", 4)]);
    let large = sizes(&[("n", 64), ("p", 4), ("m", 8), ("t", 8)]);
    let i4 = random_instance(&p.ctx, &p.spec, &small, 2).unwrap();
    let i8 = random_instance(&p.ctx, &p.spec, &large, 2).unwrap();
    for a in &algorithms(&p) {
        let s = schedule(a, &p.spec);
        let (_, e4) = execute_scheduled(&s, &i4, &cat).unwrap();
        let (_, e8) = execute_scheduled(&s, &i8, &cat).unwrap();
        let (c4, c8) = (e4.direct_flops() as f64, e8.direct_flops() as f64);
        let (p4, p8) = (predicted_direct(&s, &small), predicted_direct(&s, &large));
        println!(
            "{} counted {c4} predicted {p4} ratio {:.3} vs {:.3}",
            a.name,
            c8 / c4,
            p8 / p4
        );
        assert!((c4 - p4).abs() <= 0.35 * p4, "{}: counted {c4}, predicted {p4}", a.name);
        assert!(((c8 / c4) / (p8 / p4) - 1.0).abs() <= 0.10, "{}", a.name);
    }
}
