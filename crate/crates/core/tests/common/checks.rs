//! Random expressions and numeric checks for the rewrite and inference
//! soundness properties.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lacomp::expr::{canonicalize, Expr};
use lacomp::properties::{Dim, InferenceEngine, PropSet, Property, PropertyContext, Verdict};
use lacomp::refexec::{conforming_matrix, evaluate, svd, symmetric_eig, DenseMatrix, ExecutionEnv};
use lacomp::rewrite::{expand_identity, simplify};

use Property::*;

const N: usize = 6;
pub const P: usize = 3;
pub const REWRITE_TOL: f64 = 1e-10;
pub const PROPERTY_TOL: f64 = 1e-10;
pub const REWRITE_CASES: u32 = 1000;
pub const INFERENCE_CASES: u32 = 100;

/// Square operands with the properties their generated values satisfy.
pub const SQUARE: &[(&str, &[Property])] = &[
    ("A", &[Square, FullRank]),
    ("S", &[Spd]),
    ("L", &[LowerTriangular, Square, FullRank]),
    ("U", &[UpperTriangular, Square, FullRank]),
    ("D", &[Diagonal, Square, FullRank]),
    ("Q", &[OrthogonalSquare]),
    ("R", &[OrthogonalSquare]),
];
pub const TALL: &[(&str, &[Property])] = &[("X", &[FullRank]), ("V", &[OrthonormalColumns, FullRank])];
pub const SCALARS: &[&str] = &["a", "c"];

/// Context declaring a random subset (bits of `mask`) of the true properties.
pub fn context(mask: u64) -> PropertyContext {
    let mut ctx = PropertyContext::new();
    ctx.declare_symbol("n");
    ctx.declare_symbol("p");
    ctx.relate_greater("n", "p");
    let mut bit = 0;
    let mut pick = |props: &[Property]| {
        let mut set = PropSet::of(&[Matrix, InputOperand]);
        for p in props {
            if mask >> (bit % 64) & 1 == 1 {
                set.insert(*p);
            }
            bit += 1;
        }
        set
    };
    for (name, props) in SQUARE {
        let set = pick(props);
        ctx.declare_matrix(name, set, Dim::sym("n"), Dim::sym("n"));
    }
    for (name, props) in TALL {
        let set = pick(props);
        ctx.declare_matrix(name, set, Dim::sym("n"), Dim::sym("p"));
    }
    for s in SCALARS {
        ctx.declare_scalar(s, PropSet::of(&[Scalar]));
    }
    ctx
}

pub fn values(seed: u64) -> ExecutionEnv {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = ExecutionEnv::new();
    let gauss = |rng: &mut ChaCha8Rng, r, c| conforming_matrix(rng, PropSet::EMPTY, r, c);
    let g = gauss(&mut rng, N, N);
    env.bind(
        "A",
        DenseMatrix::identity(N).add(&g.scale(0.2 / (N as f64).sqrt())).unwrap(),
    );
    let g = gauss(&mut rng, N, N);
    env.bind(
        "S",
        g.matmul(&g.transpose())
            .unwrap()
            .scale(1.0 / N as f64)
            .add(&DenseMatrix::identity(N).scale(0.5))
            .unwrap(),
    );
    for (name, props) in &SQUARE[2..] {
        env.bind(name, conforming_matrix(&mut rng, PropSet::of(props), N, N));
    }
    env.bind("X", gauss(&mut rng, N, P));
    env.bind(
        "V",
        conforming_matrix(&mut rng, PropSet::of(&[OrthonormalColumns]), N, P),
    );
    for s in SCALARS {
        env.bind(s, DenseMatrix::scalar(rng.random_range(0.5..1.5)));
    }
    env
}

pub fn var(n: &str) -> Expr {
    Expr::var(n)
}

pub fn scalar(n: &str) -> Expr {
    if n == "1" {
        Expr::int(1)
    } else if let Some(s) = n.strip_prefix('-') {
        Expr::neg(Expr::scalar_var(s))
    } else {
        Expr::scalar_var(n)
    }
}

/// Square `n x n` expressions paired with whether their value is invertible.
pub fn square() -> impl Strategy<Value = (Expr, bool)> {
    let mut leaves: Vec<(Expr, bool)> = SQUARE.iter().map(|(n, _)| (var(n), true)).collect();
    leaves.push((Expr::Identity, true));
    leaves.push((Expr::times(vec![var("X"), Expr::trans(var("X"))]), false));
    leaves.push((Expr::times(vec![var("V"), Expr::trans(var("V"))]), false));
    let leaf = proptest::sample::select(leaves);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|((a, ia), (b, ib))| (Expr::times(vec![a, b]), ia && ib)),
            (inner.clone(), inner.clone()).prop_map(|((a, _), (b, _))| (Expr::plus(vec![a, b]), false)),
            inner.clone().prop_map(|(a, i)| (Expr::trans(a), i)),
            inner
                .clone()
                .prop_map(|(a, i)| if i { (Expr::inv(a), true) } else { (a, false) }),
            inner.clone().prop_map(|(a, i)| (Expr::neg(a), i)),
            (proptest::sample::select(vec!["a", "c", "-a", "1"]), inner.clone())
                .prop_map(|(s, (a, i))| (Expr::times(vec![scalar(s), a]), i)),
            inner.clone().prop_map(|(a, _)| (
                Expr::plus(vec![
                    Expr::times(vec![scalar("a"), a]),
                    Expr::times(vec![scalar("c"), Expr::Identity])
                ]),
                false
            )),
        ]
    })
}

/// Square, gram-shaped (`p x p`) and matrix-vector-like (`n x p`) expressions.
pub fn expression() -> impl Strategy<Value = Expr> {
    prop_oneof![
        3 => square().prop_map(|(e, _)| e),
        1 => (square(), proptest::sample::select(vec!["X", "V"]))
            .prop_map(|((e, _), t)| Expr::times(vec![Expr::trans(var(t)), e, var(t)])),
        1 => (square(), proptest::sample::select(vec!["X", "V"]))
            .prop_map(|((e, _), t)| Expr::times(vec![e, var(t)])),
    ]
}

/// Evaluates `e`; a bare scaled identity takes the size of `like`.
pub fn eval(e: &Expr, env: &ExecutionEnv, like: &DenseMatrix) -> DenseMatrix {
    match evaluate(e, env) {
        Ok(m) => m,
        Err(_) if e.operands().iter().all(|o| SCALARS.contains(&o.as_str())) => {
            let mut env = env.clone();
            env.bind("I_", DenseMatrix::identity(like.rows()));
            evaluate(&Expr::times(vec![e.clone(), var("I_")]), &env).unwrap()
        }
        Err(err) => panic!("{e}: {err}"),
    }
}

/// Relative error with an absolute floor, so exact cancellations compare
/// rounding noise against 1 rather than against itself.
pub fn rel(e: &Expr, env: &ExecutionEnv, reference: &DenseMatrix) -> f64 {
    let got = eval(e, env, reference);
    got.sub(reference).unwrap().norm_fro() / reference.norm_fro().max(1.0)
}

/// `e` with a sizing operand when it is built from identities and scalars only.
pub fn sized(e: Expr) -> Expr {
    if e.operands().iter().all(|o| SCALARS.contains(&o.as_str())) {
        Expr::times(vec![e, var("A")])
    } else {
        e
    }
}

/// Checks `p` numerically on `m`.
pub fn holds_numerically(p: Property, m: &DenseMatrix) -> bool {
    let scale = m.norm_fro().max(1.0);
    let off = |keep: &dyn Fn(usize, usize) -> bool| -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if !keep(i, j) {
                    s = s.max(m[(i, j)].abs());
                }
            }
        }
        s
    };
    let gram_defect = |g: &DenseMatrix| g.sub(&DenseMatrix::identity(g.rows())).unwrap().norm_fro();
    let symmetric = || m.is_square() && m.sub(&m.transpose()).unwrap().norm_fro() <= PROPERTY_TOL * scale;
    match p {
        Identity => m.is_square() && gram_defect(m) <= PROPERTY_TOL * scale,
        Diagonal => m.is_square() && off(&|i, j| i == j) <= PROPERTY_TOL * scale,
        LowerTriangular => m.is_square() && off(&|i, j| j <= i) <= PROPERTY_TOL * scale,
        UpperTriangular => m.is_square() && off(&|i, j| j >= i) <= PROPERTY_TOL * scale,
        Symmetric => symmetric(),
        Spd => {
            symmetric()
                && symmetric_eig(&m.add(&m.transpose()).unwrap().scale(0.5))
                    .is_ok_and(|(_, w, _)| (0..w.rows()).all(|k| w[(k, k)] > PROPERTY_TOL * scale))
        }
        OrthonormalColumns => gram_defect(&m.transpose().matmul(m).unwrap()) <= PROPERTY_TOL,
        OrthogonalSquare => m.is_square() && gram_defect(&m.transpose().matmul(m).unwrap()) <= PROPERTY_TOL,
        FullRank => svd(m).is_ok_and(|(_, s, _, _)| {
            let k = s.rows();
            (0..k).all(|i| s[(i, i)] > 1e-8 * s[(0, 0)])
        }),
        Square => m.is_square(),
        Vector => m.cols() == 1,
        Scalar => m.rows() == 1 && m.cols() == 1,
        Matrix | InputOperand | OutputOperand => true,
    }
}

/// Infers the properties of `e` and checks every `Holds` verdict on its
/// value. Returns the properties that hold.
pub fn check_inference(
    e: &Expr,
    ctx: &PropertyContext,
    env: &ExecutionEnv,
    engine: &InferenceEngine,
) -> Result<Vec<Property>, String> {
    let canon = canonicalize(&sized(e.clone()));
    let inf = engine.infer(&canon, ctx).map_err(|err| err.to_string())?;
    let m = evaluate(&canon, env).map_err(|err| err.to_string())?;
    let mut held = Vec::new();
    for p in Property::ALL {
        if inf.verdict(*p) == Verdict::Holds {
            if !holds_numerically(*p, &m) {
                return Err(format!("{p:?} claimed for {canon} but fails numerically"));
            }
            held.push(*p);
        }
    }
    Ok(held)
}

/// Compares `e` with its canonical, simplified and identity-expanded forms.
pub fn check_rewrites(e: &Expr, mask: u64, seed: u64) -> Result<(), String> {
    let ctx = context(mask);
    let env = values(seed);
    let e = sized(e.clone());
    let reference = evaluate(&e, &env).map_err(|err| err.to_string())?;
    let canon = canonicalize(&e);
    if canonicalize(&canon) != canon {
        return Err(format!("canonicalize is not idempotent on {e}"));
    }
    let simple = simplify(&e, &ctx);
    if simplify(&simple, &ctx) != simple {
        return Err(format!("simplify is not at a fixpoint on {e}"));
    }
    let mut forms = vec![("canonicalize", canon.clone()), ("simplify", simple)];
    forms.extend(
        expand_identity(&canon, &ctx)
            .into_iter()
            .map(|v| ("expand_identity", v)),
    );
    for (what, f) in forms {
        let err = rel(&f, &env, &reference);
        if err.is_nan() || err > REWRITE_TOL {
            return Err(format!("{what}: {e} -> {f} differs by {err:e}"));
        }
    }
    Ok(())
}

/// Rule templates with the property each must be inferred to have.
pub fn templates() -> Vec<(Expr, Property)> {
    let t = Expr::trans;
    let times = Expr::times;
    vec![
        (times(vec![t(var("X")), var("X")]), Spd),
        (times(vec![t(var("X")), var("S"), var("X")]), Spd),
        (times(vec![t(var("X")), Expr::inv(var("S")), var("X")]), Spd),
        (times(vec![scalar("a"), t(var("V")), var("S"), var("V")]), Symmetric),
        (times(vec![t(var("V")), var("V")]), Identity),
        (times(vec![t(var("Q")), var("Q")]), Identity),
        (times(vec![var("Q"), t(var("Q"))]), Identity),
        (times(vec![var("Q"), var("R")]), OrthogonalSquare),
        (times(vec![var("Q"), var("V")]), OrthonormalColumns),
        (t(var("Q")), OrthogonalSquare),
        (Expr::inv(var("S")), Spd),
        (times(vec![var("L"), var("L")]), LowerTriangular),
        (times(vec![var("A"), var("X")]), FullRank),
    ]
}

/// Checks every template on `instances` random instantiations.
pub fn check_templates(instances: u64) -> Result<(), String> {
    let engine = InferenceEngine::standard();
    let ctx = context(u64::MAX);
    for seed in 0..instances {
        let env = values(seed);
        for (e, expected) in templates() {
            let held = check_inference(&e, &ctx, &env, &engine)?;
            if !held.contains(&expected) {
                return Err(format!("{e}: expected {expected:?}, inferred {held:?}"));
            }
        }
    }
    Ok(())
}
