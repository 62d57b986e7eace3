//! Random problem instances conforming to declared properties.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::{householder_qr, symmetric_eig, DenseMatrix};
use super::ExecutionEnv;
use crate::properties::{Dim, Property, PropertyContext};
use crate::seqloop::SequenceSpec;

/// Shift added to generated SPD and symmetric matrices.
pub const SPD_SHIFT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    #[error("no value given for size `{0}`")]
    MissingSize(String),
}

#[derive(Clone, Debug)]
struct OperandValues {
    vary: Vec<String>,
    values: BTreeMap<Vec<usize>, DenseMatrix>,
}

/// Input values for every combination of loop index values.
#[derive(Clone, Debug)]
pub struct SequenceInstance {
    extents: Vec<(String, usize)>,
    output: Vec<String>,
    operands: BTreeMap<String, OperandValues>,
}

impl SequenceInstance {
    pub fn index_count(&self) -> usize {
        self.extents.len()
    }

    pub fn extent(&self, index: &str) -> usize {
        self.extents.iter().find(|(i, _)| i == index).map_or(1, |(_, e)| *e)
    }

    pub fn output_indices(&self) -> &[String] {
        &self.output
    }

    pub fn operands(&self) -> impl Iterator<Item = (&String, &[String])> {
        self.operands.iter().map(|(n, v)| (n, v.vary.as_slice()))
    }

    /// Value of `name` for the given index values, or `None` when one of
    /// its indices is unassigned.
    pub fn value(&self, name: &str, assignment: &BTreeMap<String, usize>) -> Option<&DenseMatrix> {
        let ov = self.operands.get(name)?;
        let key: Option<Vec<usize>> = ov.vary.iter().map(|i| assignment.get(i).copied()).collect();
        ov.values.get(&key?)
    }

    pub fn set_value(&mut self, name: &str, key: Vec<usize>, m: DenseMatrix) {
        if let Some(ov) = self.operands.get_mut(name) {
            ov.values.insert(key, m);
        }
    }

    /// All value combinations of `indices`, last index fastest.
    pub fn grid(&self, indices: &[String]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for i in indices {
            let e = self.extent(i);
            out = out
                .into_iter()
                .flat_map(|k| {
                    (0..e).map(move |v| {
                        let mut k = k.clone();
                        k.push(v);
                        k
                    })
                })
                .collect();
        }
        out
    }

    /// Environment holding the operands fully determined by `assignment`.
    pub fn env_at(&self, assignment: &BTreeMap<String, usize>) -> ExecutionEnv {
        let mut env = ExecutionEnv::new();
        for name in self.operands.keys() {
            if let Some(v) = self.value(name, assignment) {
                env.bind(name, v.clone());
            }
        }
        env
    }
}

fn size(d: &Dim, sizes: &BTreeMap<String, i64>) -> Result<usize, InstanceError> {
    match d {
        Dim::One => Ok(1),
        Dim::Sym(s) => sizes
            .get(s)
            .map(|v| *v as usize)
            .ok_or_else(|| InstanceError::MissingSize(s.clone())),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A matrix satisfying the structural properties in `props`.
pub fn conforming_matrix(rng: &mut ChaCha8Rng, props: crate::properties::PropSet, r: usize, c: usize) -> DenseMatrix {
    use Property::*;
    if props.contains(Spd) || props.contains(Symmetric) {
        let a = gaussian(rng, r, r);
        let aat = a.matmul(&a.transpose()).expect("square");
        let norm2 = symmetric_eig(&aat).map(|(_, w, _)| w[(0, 0)]).unwrap_or(1.0);
        let mut m = aat.scale(1.0 / norm2);
        for i in 0..r {
            m[(i, i)] += SPD_SHIFT;
        }
        return m;
    }
    if props.contains(OrthonormalColumns) || props.contains(OrthogonalSquare) {
        let g = gaussian(rng, r, c);
        return householder_qr(&g).map(|(q, _, _)| q).unwrap_or(g);
    }
    if props.contains(Diagonal) {
        return DenseMatrix::from_fn(r, c, |i, j| if i == j { rng.random_range(0.5..1.5) } else { 0.0 });
    }
    if props.contains(LowerTriangular) || props.contains(UpperTriangular) {
        let lower = props.contains(LowerTriangular);
        let g = gaussian(rng, r, c);
        return DenseMatrix::from_fn(r, c, |i, j| {
            let keep = if lower { j <= i } else { j >= i };
            match (keep, i == j) {
                (false, _) => 0.0,
                (true, true) => g[(i, j)].signum() * (r as f64 + g[(i, j)].abs()),
                (true, false) => g[(i, j)],
            }
        });
    }
    gaussian(rng, r, c)
}

/// Draws every non-output operand of `ctx` once per value combination of
/// its variation set. Scalars are uniform in (0.05, 0.95); symmetric and
/// SPD matrices are `A*A'/|A*A'|_2 + 1e-3*I`.
pub fn random_instance(
    ctx: &PropertyContext,
    spec: &SequenceSpec,
    sizes: &BTreeMap<String, i64>,
    seed: u64,
) -> Result<SequenceInstance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extents = Vec::new();
    for i in &spec.indices {
        let e = sizes
            .get(&i.extent)
            .ok_or_else(|| InstanceError::MissingSize(i.extent.clone()))?;
        extents.push((i.name.clone(), *e as usize));
    }
    let output: Vec<String> = spec
        .indices
        .iter()
        .filter(|i| spec.output.contains(&i.name))
        .map(|i| i.name.clone())
        .collect();
    let mut inst = SequenceInstance {
        extents,
        output,
        operands: BTreeMap::new(),
    };
    for (name, info) in ctx.operands() {
        let props = ctx.props_of(name);
        if props.contains(Property::OutputOperand) {
            continue;
        }
        let vary: Vec<String> = spec
            .indices
            .iter()
            .filter(|i| spec.variation_of(name).contains(&i.name))
            .map(|i| i.name.clone())
            .collect();
        let (r, c) = (size(&info.rows, sizes)?, size(&info.cols, sizes)?);
        let mut values = BTreeMap::new();
        for key in inst.grid(&vary) {
            let m = if info.scalar {
                DenseMatrix::scalar(rng.random_range(0.05..0.95))
            } else {
                conforming_matrix(&mut rng, props, r, c)
            };
            values.insert(key, m);
        }
        inst.operands.insert(name.clone(), OperandValues { vary, values });
    }
    Ok(inst)
}
