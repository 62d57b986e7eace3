mod common;

use lacomp::codegen::{build_ast, emit, execute_code, parse_code, CodeNode};
use lacomp::kernels::Catalog;
use lacomp::refexec::{execute_scheduled, random_instance};
use lacomp::seqloop::schedule;

use common::{algorithms, golden, gwas, CHOL, EIG, QR};

#[test]
fn golden_code_round_trips_bitwise() {
    let p = gwas();
    let algs = algorithms(&p);
    let cat = Catalog::default();
    let inst = random_instance(&p.ctx, &p.spec, p.validate.as_ref().unwrap(), 7).unwrap();
    let is_scalar = |n: &str| p.ctx.operand(n).is_ok_and(|i| i.scalar);
    for seq in [CHOL, QR, EIG] {
        let sched = schedule(golden(&algs, seq), &p.spec);
        let ast = build_ast(&sched);
        let text = emit(&ast, "pseudo").unwrap();
        let parsed = parse_code(&text, &is_scalar).unwrap();
        assert_eq!(emit(&parsed, "pseudo").unwrap(), text);
        let (direct, _) = execute_scheduled(&sched, &inst, &cat).unwrap();
        let (again, _) = execute_code(&parsed, &inst, &cat).unwrap();
        assert_eq!(direct.values.len(), 12);
        for (k, v) in &direct.values {
            let w = &again.values[k];
            assert!(
                v.data().iter().zip(w.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{text}"
            );
        }
    }
}

#[test]
fn slices_follow_variation() {
    let p = gwas();
    let algs = algorithms(&p);
    for a in &algs {
        let ast = build_ast(&schedule(a, &p.spec));
        fn check(nodes: &[CodeNode], p: &lacomp::problem::Problem, loop_index: Option<&str>) {
            for n in nodes {
                match n {
                    CodeNode::Slice { operand, indices, .. } => {
                        let idx = loop_index.expect("slice outside a loop");
                        assert!(p.spec.variation_of(operand).contains(idx));
                        assert_eq!(indices.len(), p.spec.variation_of(operand).len());
                    }
                    CodeNode::Loop { index, body, .. } => check(body, p, Some(index)),
                    CodeNode::Stmt { segment, .. } => {
                        for o in segment.operands() {
                            assert!(p.spec.variation_of(&o).is_empty(), "unsliced varying operand {o}");
                        }
                    }
                    CodeNode::Alloc { .. } => {}
                }
            }
        }
        check(&ast.nodes, &p, None);
    }
}

#[test]
fn eig_factorization_precedes_loops() {
    let p = gwas();
    let algs = algorithms(&p);
    let text = emit(&build_ast(&schedule(golden(&algs, EIG), &p.spec)), "pseudo").unwrap();
    let pos = |needle: &str| {
        text.find(needle)
            .unwrap_or_else(|| panic!("{needle} missing in\n{text}"))
    };
    let syev = pos(":= syev(");
    assert!(syev < pos("for i in 1..m:"));
    assert!(syev < pos("for j in 1..t:"));
    assert!(text.starts_with("# algorithm: "));
    assert!(text.lines().nth(1).unwrap() == "b := alloc(p, 1, m, t)");
    assert!(text.contains("  X_i := slice(X, i)\n"));
    assert!(text.contains("b[i, j] := "));
    assert!(!text.contains('\r'));
}
