//! Dense row-major matrices and naive kernels with FLOP counts.
//!
//! Every kernel returns the number of floating-point operations it
//! performed; a multiply-add counts as two.

use std::fmt;
use std::io::{self, Read, Write};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive definite (pivot {pivot} at {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("matrix is neither lower nor upper triangular")]
    NotTriangular,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        DenseMatrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "data length");
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, k: f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Result<Self, KernelError> {
        if (self.rows, self.cols) != (o.rows, o.cols) {
            return Err(KernelError::Shape(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, o: &Self) -> Result<Self, KernelError> {
        self.add(&o.scale(-1.0))
    }

    /// Uncounted product.
    pub fn matmul(&self, o: &Self) -> Result<Self, KernelError> {
        Ok(gemm(self, o)?.0)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `‖self - reference‖ / ‖reference‖` in the Frobenius norm.
    pub fn rel_err(&self, reference: &Self) -> f64 {
        if (self.rows, self.cols) != (reference.rows, reference.cols) {
            return f64::INFINITY;
        }
        let d = self.sub(reference).map(|d| d.norm_fro()).unwrap_or(f64::INFINITY);
        let r = reference.norm_fro();
        if r == 0.0 {
            d
        } else {
            d / r
        }
    }

    pub fn is_lower(&self) -> bool {
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_upper(&self) -> bool {
        (0..self.rows).all(|i| (0..i.min(self.cols)).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square() && self.is_lower() && self.is_upper()
    }

    /// Writes `rows`, `cols` as little-endian u64 followed by the entries
    /// as little-endian f64 in row-major order.
    pub fn write_binary(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> io::Result<Self> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let rows = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let cols = u64::from_le_bytes(b8) as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "size overflow"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Ok(DenseMatrix { rows, cols, data })
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:.6}", self[(i, j)])).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

fn shape_err(what: &str, a: &DenseMatrix, b: &DenseMatrix) -> KernelError {
    KernelError::Shape(format!("{what}: {}x{} and {}x{}", a.rows, a.cols, b.rows, b.cols))
}

pub fn gemm(a: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, u64), KernelError> {
    if a.cols != b.rows {
        return Err(shape_err("gemm", a, b));
    }
    let mut c = DenseMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            for j in 0..b.cols {
                c[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    Ok((c, 2 * (a.rows * a.cols * b.cols) as u64))
}

pub fn gemv(a: &DenseMatrix, x: &DenseMatrix) -> Result<(DenseMatrix, u64), KernelError> {
    if x.cols != 1 {
        return Err(shape_err("gemv", a, x));
    }
    gemm(a, x)
}

/// `aᵀa`, computing one triangle and mirroring it.
pub fn syrk(a: &DenseMatrix) -> (DenseMatrix, u64) {
    let n = a.cols;
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..a.rows {
                s += a[(k, i)] * a[(k, j)];
            }
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    (c, (a.rows * n * (n + 1)) as u64)
}

/// `alpha*a + beta*I`. Diagonal input only touches the diagonal.
pub fn scal_add(alpha: f64, a: &DenseMatrix, beta: f64) -> Result<(DenseMatrix, u64), KernelError> {
    if !a.is_square() {
        return Err(KernelError::Shape(format!("scal-add on {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    if a.is_diagonal() {
        let mut c = DenseMatrix::zeros(n, n);
        for i in 0..n {
            c[(i, i)] = alpha * a[(i, i)] + beta;
        }
        return Ok((c, 2 * n as u64));
    }
    let mut c = a.scale(alpha);
    for i in 0..n {
        c[(i, i)] += beta;
    }
    Ok((c, 2 * (n * n) as u64))
}

/// Scales the rows (`left`) or columns of `a` by the diagonal of `d`, or by
/// its reciprocal when `inverse`.
pub fn scal(d: &DenseMatrix, a: &DenseMatrix, left: bool, inverse: bool) -> Result<(DenseMatrix, u64), KernelError> {
    let need = if left { a.rows } else { a.cols };
    if !d.is_square() || d.rows != need {
        return Err(shape_err("scal", d, a));
    }
    let mut c = a.clone();
    for i in 0..a.rows {
        for j in 0..a.cols {
            let k = if left { i } else { j };
            let s = d[(k, k)];
            if inverse {
                if s == 0.0 {
                    return Err(KernelError::Singular);
                }
                c[(i, j)] /= s;
            } else {
                c[(i, j)] *= s;
            }
        }
    }
    Ok((c, (a.rows * a.cols) as u64))
}

/// Solves `t*x = b` for triangular `t`, column by column.
pub fn trsm(t: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, u64), KernelError> {
    if !t.is_square() || t.rows != b.rows {
        return Err(shape_err("trsm", t, b));
    }
    let n = t.rows;
    let lower = t.is_lower();
    if !lower && !t.is_upper() {
        return Err(KernelError::NotTriangular);
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        let order: Box<dyn Iterator<Item = usize>> = if lower { Box::new(0..n) } else { Box::new((0..n).rev()) };
        for i in order {
            let mut s = x[(i, c)];
            let range = if lower { 0..i } else { i + 1..n };
            for k in range {
                s -= t[(i, k)] * x[(k, c)];
            }
            let p = t[(i, i)];
            if p == 0.0 {
                return Err(KernelError::Singular);
            }
            x[(i, c)] = s / p;
        }
    }
    Ok((x, (n * n * b.cols) as u64))
}

pub fn trsv(t: &DenseMatrix, b: &DenseMatrix) -> Result<(DenseMatrix, u64), KernelError> {
    if b.cols != 1 {
        return Err(shape_err("trsv", t, b));
    }
    trsm(t, b)
}

/// Lower Cholesky factor.
pub fn cholesky(a: &DenseMatrix) -> Result<(DenseMatrix, u64), KernelError> {
    if !a.is_square() {
        return Err(KernelError::Shape(format!("cholesky on {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut l = DenseMatrix::zeros(n, n);
    let mut flops = 0u64;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        flops += 2 * j as u64 + 1;
        if d <= 0.0 || !d.is_finite() {
            return Err(KernelError::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
        flops += ((n - j - 1) * (2 * j + 1)) as u64;
    }
    Ok((l, flops))
}

/// Householder QR of an `m x n` matrix with `m >= n`: thin `Q` (`m x n`)
/// and upper triangular `R`. Only the reduction is counted.
pub fn householder_qr(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, u64), KernelError> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(KernelError::Shape(format!("qr on {m}x{n}")));
    }
    let mut r = a.clone();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut flops = 0u64;
    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        flops += 2 * (m - k) as u64;
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            vs.push(v);
            continue;
        }
        // apply H = I - 2 v v' / (v' v) to the trailing block
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i - k];
            }
        }
        flops += 4 * ((m - k) * (n - k)) as u64;
        vs.push(v);
    }
    // thin Q = H_0 ... H_{n-1} applied to the first n columns of I
    let mut q = DenseMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..n).rev() {
        let v = &vs[k];
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * q[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                q[(i, j)] -= f * v[i - k];
            }
        }
    }
    let mut rr = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            rr[(i, j)] = r[(i, j)];
        }
    }
    Ok((q, rr, flops))
}

/// Cyclic Jacobi eigensolver for symmetric matrices: `a = z*diag(w)*z'`
/// with eigenvalues sorted in descending order.
pub fn symmetric_eig(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, u64), KernelError> {
    if !a.is_square() {
        return Err(KernelError::Shape(format!("eig on {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut s = a.clone();
    let mut z = DenseMatrix::identity(n);
    let mut flops = 0u64;
    let scale = a.norm_fro().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[(i, j)] * s[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                for k in 0..n {
                    let zkp = z[(k, p)];
                    let zkq = z[(k, q)];
                    z[(k, p)] = c * zkp - sn * zkq;
                    z[(k, q)] = sn * zkp + c * zkq;
                }
                flops += 18 * n as u64 + 12;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(j, j)].total_cmp(&s[(i, i)]));
    let w = DenseMatrix::from_fn(n, n, |i, j| if i == j { s[(order[i], order[i])] } else { 0.0 });
    let zs = DenseMatrix::from_fn(n, n, |i, j| z[(i, order[j])]);
    Ok((zs, w, flops))
}

/// One-sided Jacobi SVD of an `m x n` matrix: `a = u*diag(s)*v'` with
/// `k = min(m, n)` singular values in descending order.
pub fn svd(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix, u64), KernelError> {
    if a.rows < a.cols {
        let (u, s, v, f) = svd(&a.transpose())?;
        return Ok((v, s, u, f));
    }
    let (m, n) = (a.rows, a.cols);
    let mut u = a.clone();
    let mut v = DenseMatrix::identity(n);
    let mut flops = 0u64;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += u[(i, p)] * u[(i, p)];
                    beta += u[(i, q)] * u[(i, q)];
                    gamma += u[(i, p)] * u[(i, q)];
                }
                flops += 6 * m as u64;
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
                flops += 6 * (m + n) as u64;
            }
        }
        if !rotated {
            break;
        }
    }
    let sig: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sig[j].total_cmp(&sig[i]));
    for &s in &sig {
        if s == 0.0 {
            return Err(KernelError::Singular);
        }
    }
    let uu = DenseMatrix::from_fn(m, n, |i, j| u[(i, order[j])] / sig[order[j]]);
    let ss = DenseMatrix::from_fn(n, n, |i, j| if i == j { sig[order[i]] } else { 0.0 });
    let vv = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((uu, ss, vv, flops))
}

/// Inverse by Gaussian elimination with partial pivoting.
pub fn gepp_inverse(a: &DenseMatrix) -> Result<DenseMatrix, KernelError> {
    if !a.is_square() {
        return Err(KernelError::Shape(format!("inverse of {}x{}", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut inv = DenseMatrix::identity(n);
    let scale = a.max_abs();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs()))
            .unwrap_or(k);
        if m[(piv, k)].abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(KernelError::Singular);
        }
        if piv != k {
            for j in 0..n {
                m.data.swap(k * n + j, piv * n + j);
                inv.data.swap(k * n + j, piv * n + j);
            }
        }
        let p = m[(k, k)];
        for j in 0..n {
            m[(k, j)] /= p;
            inv[(k, j)] /= p;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = m[(i, k)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(i, j)] -= f * m[(k, j)];
                inv[(i, j)] -= f * inv[(k, j)];
            }
        }
    }
    Ok(inv)
}
