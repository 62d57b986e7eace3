#![allow(dead_code)]

pub mod checks;

use lacomp::derivation::{derive, Algorithm, Limits};
use lacomp::kernels::Catalog;
use lacomp::problem::{parse_problem, Problem};

pub const CHOL: &[&str] = &[
    "scal-add", "potrf", "trsm", "syrk", "potrf", "trsv", "gemv", "trsv", "trsv",
];
pub const QR: &[&str] = &["scal-add", "potrf", "trsm", "geqrf", "trsv", "gemv", "trsv"];
pub const EIG: &[&str] = &[
    "syev", "scal-add", "gemm", "scal", "gemm", "geqrf", "gemv", "gemv", "gemv", "trsv",
];

pub fn gwas() -> Problem {
    parse_problem(include_str!("../../examples/gwas.prob")).expect("gwas.prob parses")
}

pub fn algorithms(p: &Problem) -> Vec<Algorithm> {
    derive(&p.equation, &p.ctx, &Catalog::default(), Limits::default())
        .expect("derivation succeeds")
        .algorithms
}

/// First algorithm with the given kernel sequence.
pub fn golden<'a>(algs: &'a [Algorithm], seq: &[&str]) -> &'a Algorithm {
    algs.iter()
        .find(|a| a.kernel_names() == seq)
        .unwrap_or_else(|| panic!("no algorithm {seq:?}"))
}
