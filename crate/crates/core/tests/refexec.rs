mod common;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lacomp::kernels::Catalog;
use lacomp::properties::{PropSet, Property};
use lacomp::refexec::{
    cholesky, conforming_matrix, execute_scheduled, gepp_inverse, householder_qr, random_instance, svd, symmetric_eig,
    DenseMatrix,
};
use lacomp::seqloop::schedule;

use common::{algorithms, gwas};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn spd(n: usize, seed: u64) -> DenseMatrix {
    conforming_matrix(&mut rng(seed), PropSet::of(&[Property::Spd]), n, n)
}

fn general(r: usize, c: usize, seed: u64) -> DenseMatrix {
    conforming_matrix(&mut rng(seed), PropSet::EMPTY, r, c)
}

fn mul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.matmul(b).unwrap()
}

fn orthonormality_defect(q: &DenseMatrix) -> f64 {
    mul(&q.transpose(), q)
        .sub(&DenseMatrix::identity(q.cols()))
        .unwrap()
        .norm_fro()
}

#[test]
fn cholesky_residual() {
    for seed in 0..5 {
        let m = spd(40, seed);
        let (l, _) = cholesky(&m).unwrap();
        assert!(l.is_lower());
        assert!(mul(&l, &l.transpose()).rel_err(&m) <= 1e-10);
    }
}

#[test]
fn qr_residual_and_orthonormality() {
    for (r, c) in [(40, 5), (12, 12)] {
        let w = general(r, c, r as u64);
        let (q, rr, _) = householder_qr(&w).unwrap();
        assert!(rr.is_upper());
        assert!(mul(&q, &rr).rel_err(&w) <= 1e-10);
        assert!(orthonormality_defect(&q) <= 1e-10);
    }
}

#[test]
fn eigendecomposition_residual() {
    for seed in 0..3 {
        let phi = spd(30, seed);
        let (z, w, _) = symmetric_eig(&phi).unwrap();
        assert!(w.is_diagonal());
        assert!(mul(&mul(&z, &w), &z.transpose()).rel_err(&phi) <= 1e-8);
        assert!(orthonormality_defect(&z) <= 1e-10);
    }
}

#[test]
fn svd_residual() {
    for (r, c) in [(20, 6), (6, 20), (9, 9)] {
        let a = general(r, c, 3);
        let (u, s, v, _) = svd(&a).unwrap();
        assert!(mul(&mul(&u, &s), &v.transpose()).rel_err(&a) <= 1e-10);
        assert!(orthonormality_defect(&u) <= 1e-10);
        assert!(orthonormality_defect(&v) <= 1e-10);
    }
}

#[test]
fn identity_covariance_gives_least_squares() {
    let p = gwas();
    let cat = Catalog::default();
    let sizes: BTreeMap<String, i64> = p.validate.clone().unwrap();
    let mut inst = random_instance(&p.ctx, &p.spec, &sizes, 5).unwrap();
    let n = sizes["n"] as usize;
    inst.set_value("Phi", vec![], DenseMatrix::identity(n));
    for j in 0..sizes["t"] as usize {
        inst.set_value("h", vec![j], DenseMatrix::scalar(0.5));
    }
    for a in &algorithms(&p) {
        let (got, _) = execute_scheduled(&schedule(a, &p.spec), &inst, &cat).unwrap();
        for (key, b) in &got.values {
            let assignment = got.indices.iter().cloned().zip(key.iter().copied()).collect();
            let x = inst.value("X", &assignment).unwrap();
            let y = inst.value("y", &assignment).unwrap();
            let xt = x.transpose();
            let expected = mul(&mul(&gepp_inverse(&mul(&xt, x)).unwrap(), &xt), y);
            assert!(b.rel_err(&expected) <= 1e-10, "{} at {key:?}", a.name);
        }
    }
}

#[test]
fn binary_dump_round_trips_through_a_file() {
    let m = general(7, 3, 9);
    let path = std::env::temp_dir().join(format!("lacomp-dump-{}.bin", std::process::id()));
    m.write_binary(&mut std::fs::File::create(&path).unwrap()).unwrap();
    let back = DenseMatrix::read_binary(&mut std::fs::File::open(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, m);
}
