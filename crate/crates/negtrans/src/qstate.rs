//! Dense complex multipartite linear algebra.
//!
//! Operators and states are tagged with an ordered list of subsystem
//! dimensions. The leftmost subsystem owns the slowest-varying index, so
//! for `dims = [d0, d1, ...]` the flat index of `(i0, i1, ...)` is
//! `i0 * d1 * d2 * ... + i1 * d2 * ... + ...`. All storage is dense;
//! every system in scope is at most ~128-dimensional.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Eigenvalues below `-NEGATIVITY_EIG_TOL` count as negative when summing
/// negativity; values in `[-NEGATIVITY_EIG_TOL, 0]` are treated as zero.
/// This suppresses floating-point noise at degenerate zero eigenvalues.
pub const NEGATIVITY_EIG_TOL: f64 = 1e-12;

/// Complex square matrix tagged with an ordered list of subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipartiteOperator {
    mat: DMatrix<C64>,
    dims: Vec<usize>,
}

impl MultipartiteOperator {
    /// Wrap a matrix, checking that `dims` multiply to the matrix dimension
    /// and that every entry is finite.
    pub fn new(mat: DMatrix<C64>, dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.is_empty() || dims.iter().any(|&x| x == 0) {
            return Err(Error::DimensionMismatch(
                "subsystem dimensions must be positive and nonempty".into(),
            ));
        }
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but dims {:?} give {}",
                mat.nrows(),
                mat.ncols(),
                dims,
                d
            )));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        Ok(Self { mat, dims })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let d = dims.iter().product();
        Self { mat: DMatrix::zeros(d, d), dims: dims.to_vec() }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let d = dims.iter().product();
        Self { mat: DMatrix::identity(d, d), dims: dims.to_vec() }
    }

    pub fn from_fn(dims: &[usize], f: impl Fn(usize, usize) -> C64) -> Self {
        let d = dims.iter().product();
        Self { mat: DMatrix::from_fn(d, d, f), dims: dims.to_vec() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total dimension (product of subsystem dimensions).
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    /// Reinterpret the same matrix with a different subsystem split.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(self.mat.clone(), dims)
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint(), dims: self.dims.clone() }
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().iter().sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { mat: self.mat.clone() * s, dims: self.dims.clone() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest deviation `|M[i,j] - conj(M[j,i])|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn check_hermitian(&self, tolerance: f64) -> Result<()> {
        let deviation = self.hermiticity_deviation();
        if deviation > tolerance {
            return Err(Error::NotHermitian { deviation, tolerance });
        }
        Ok(())
    }

    /// Eigendecomposition of a Hermitian operator: ascending eigenvalues and
    /// the matching eigenvector columns. The matrix is symmetrized first so
    /// that tiny Hermiticity violations do not leak into complex eigenvalues.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, DMatrix<C64>) {
        crate::eigen::hermitian_eigen(&self.mat)
    }

    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        self.hermitian_eigen().0
    }

    /// Kronecker product; output dims are the concatenation of the inputs'.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { mat: self.mat.kronecker(&other.mat), dims }
    }

    /// Trace out every subsystem not listed in `keep`. The kept subsystems
    /// stay in their original order; `keep` must be strictly increasing.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        if keep.is_empty() {
            return Err(Error::InvalidSubsystem("keep set is empty".into()));
        }
        if keep.iter().any(|&k| k >= n) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSubsystem(format!(
                "keep {:?} is not a strictly increasing subset of 0..{}",
                keep, n
            )));
        }
        let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
        let strides = strides(&self.dims);
        let keep_dims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let trace_dims: Vec<usize> = traced.iter().map(|&k| self.dims[k]).collect();
        let d_out: usize = keep_dims.iter().product();
        let d_tr: usize = trace_dims.iter().product();

        // base offsets of each kept/traced multi-index in the flat index
        let keep_offsets = enumerate_offsets(&keep_dims, &keep.iter().map(|&k| strides[k]).collect::<Vec<_>>());
        let trace_offsets = enumerate_offsets(&trace_dims, &traced.iter().map(|&k| strides[k]).collect::<Vec<_>>());

        let mut out = DMatrix::zeros(d_out, d_out);
        for (i, &oi) in keep_offsets.iter().enumerate() {
            for (j, &oj) in keep_offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..d_tr {
                    let ot = trace_offsets[t];
                    acc += self.mat[(oi + ot, oj + ot)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(Self { mat: out, dims: keep_dims })
    }

    /// Transpose the indices of a single subsystem, leaving the rest alone.
    pub fn partial_transpose(&self, subsystem: usize) -> Result<Self> {
        let n = self.dims.len();
        if subsystem >= n {
            return Err(Error::InvalidSubsystem(format!(
                "subsystem {} out of range for {} factors",
                subsystem, n
            )));
        }
        let strides = strides(&self.dims);
        let ds = self.dims[subsystem];
        let ss = strides[subsystem];
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            let is = (i / ss) % ds;
            let ibase = i - is * ss;
            for j in 0..d {
                let js = (j / ss) % ds;
                let jbase = j - js * ss;
                // swap the subsystem component between row and column
                out[(ibase + js * ss, jbase + is * ss)] = self.mat[(i, j)];
            }
        }
        Ok(Self { mat: out, dims: self.dims.clone() })
    }
}

impl std::ops::Add<&MultipartiteOperator> for &MultipartiteOperator {
    type Output = MultipartiteOperator;
    fn add(self, rhs: &MultipartiteOperator) -> MultipartiteOperator {
        assert_eq!(self.dims, rhs.dims, "subsystem dimensions differ");
        MultipartiteOperator { mat: &self.mat + &rhs.mat, dims: self.dims.clone() }
    }
}

impl std::ops::Sub<&MultipartiteOperator> for &MultipartiteOperator {
    type Output = MultipartiteOperator;
    fn sub(self, rhs: &MultipartiteOperator) -> MultipartiteOperator {
        assert_eq!(self.dims, rhs.dims, "subsystem dimensions differ");
        MultipartiteOperator { mat: &self.mat - &rhs.mat, dims: self.dims.clone() }
    }
}

impl std::ops::Mul<&MultipartiteOperator> for &MultipartiteOperator {
    type Output = MultipartiteOperator;
    fn mul(self, rhs: &MultipartiteOperator) -> MultipartiteOperator {
        assert_eq!(self.dims, rhs.dims, "subsystem dimensions differ");
        MultipartiteOperator { mat: &self.mat * &rhs.mat, dims: self.dims.clone() }
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let mut s = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets of every multi-index over `dims` with the given strides.
fn enumerate_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        out.push(idx.iter().zip(strides).map(|(&i, &s)| i * s).sum());
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Normalized pure state tagged with subsystem dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<C64>,
    dims: Vec<usize>,
}

impl PureState {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(amplitudes: DVector<C64>, dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if amplitudes.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "vector has {} entries but dims {:?} give {}",
                amplitudes.len(),
                dims,
                d
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes, dims })
    }

    /// Build from possibly unnormalized amplitudes.
    pub fn normalized(amplitudes: DVector<C64>, dims: Vec<usize>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        Self::new(amplitudes / C64::new(norm, 0.0), dims)
    }

    /// Computational basis state `|index>` over `dims`.
    pub fn basis_state(dims: &[usize], index: usize) -> Self {
        let d: usize = dims.iter().product();
        let mut v = DVector::zeros(d);
        v[index] = C64::new(1.0, 0.0);
        Self { amplitudes: v, dims: dims.to_vec() }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { amplitudes: self.amplitudes.kronecker(&other.amplitudes), dims }
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Projector `|psi><psi|` as a multipartite operator.
    pub fn density(&self) -> MultipartiteOperator {
        let mat = &self.amplitudes * self.amplitudes.adjoint();
        MultipartiteOperator { mat, dims: self.dims.clone() }
    }
}

/// Density matrix validated at construction: Hermitian within `tolerance`,
/// unit trace within `tolerance`, smallest eigenvalue at least `-tolerance`.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    op: MultipartiteOperator,
    tolerance: f64,
}

impl DensityMatrix {
    pub const DEFAULT_TOL: f64 = 1e-10;

    pub fn new(op: MultipartiteOperator, tolerance: f64) -> Result<Self> {
        if tolerance < 0.0 {
            return Err(Error::InvalidParameter("tolerance must be non-negative".into()));
        }
        op.check_hermitian(tolerance).map_err(|_| {
            Error::NotDensityMatrix(format!(
                "not Hermitian within {:.3e} (deviation {:.3e})",
                tolerance,
                op.hermiticity_deviation()
            ))
        })?;
        let tr = op.trace();
        if (tr.re - 1.0).abs() > tolerance || tr.im.abs() > tolerance {
            return Err(Error::NotDensityMatrix(format!("trace is {} instead of 1", tr)));
        }
        let min_eig = op.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min_eig < -tolerance {
            return Err(Error::NotDensityMatrix(format!(
                "smallest eigenvalue {:.3e} below -{:.3e}",
                min_eig, tolerance
            )));
        }
        Ok(Self { op, tolerance })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self { op: psi.density(), tolerance: Self::DEFAULT_TOL }
    }

    pub fn op(&self) -> &MultipartiteOperator {
        &self.op
    }

    pub fn into_op(self) -> MultipartiteOperator {
        self.op
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dims(&self) -> &[usize] {
        self.op.dims()
    }

    pub fn negativity(&self, subsystem: usize) -> Result<f64> {
        negativity(&self.op, subsystem)
    }
}

/// Negativity with respect to one subsystem: the sum of `|λ|` over
/// eigenvalues of the partial transpose below `-NEGATIVITY_EIG_TOL`.
/// The input must be Hermitian.
pub fn negativity(op: &MultipartiteOperator, subsystem: usize) -> Result<f64> {
    op.check_hermitian(1e-10)?;
    let pt = op.partial_transpose(subsystem)?;
    // fold from +0.0: the std Sum identity is -0.0, which would leak a
    // negative zero into reports for separable states
    Ok(pt
        .hermitian_eigenvalues()
        .into_iter()
        .filter(|&v| v < -NEGATIVITY_EIG_TOL)
        .fold(0.0, |acc, v| acc + v.abs()))
}

/// Smallest eigenvalue of the partial transpose of a Hermitian operator.
pub fn min_pt_eigenvalue(op: &MultipartiteOperator, subsystem: usize) -> Result<f64> {
    op.check_hermitian(1e-10)?;
    let pt = op.partial_transpose(subsystem)?;
    Ok(pt.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min))
}

/// Schmidt data of a bipartite pure state: probabilities `p_i` (descending,
/// summing to 1) and the matching orthonormal bases of both factors, so that
/// `|psi> = Σ_i sqrt(p_i) |left_i> ⊗ |right_i>`.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub probabilities: Vec<f64>,
    pub left: Vec<DVector<C64>>,
    pub right: Vec<DVector<C64>>,
}

/// Schmidt decomposition of a bipartite pure state via eigendecomposition of
/// the left marginal. Degeneracies are resolved by the phase convention that
/// the first component of each left vector above 1e-12 in magnitude is made
/// real positive.
pub fn schmidt_decompose(psi: &PureState) -> Result<SchmidtDecomposition> {
    if psi.dims().len() != 2 {
        return Err(Error::InvalidSubsystem(format!(
            "Schmidt decomposition needs exactly two subsystems, got {:?}",
            psi.dims()
        )));
    }
    let (da, db) = (psi.dims()[0], psi.dims()[1]);
    let c = DMatrix::from_fn(da, db, |i, j| psi.amplitudes()[i * db + j]);
    let rho_a = &c * c.adjoint();
    let (eigenvalues, eigenvectors) = crate::eigen::hermitian_eigen(&rho_a);
    let terms = da.min(db);
    let mut order: Vec<usize> = (0..da).collect();
    order.sort_by(|&x, &y| eigenvalues[y].total_cmp(&eigenvalues[x]));
    order.truncate(terms);

    let mut probabilities = Vec::with_capacity(terms);
    let mut left = Vec::with_capacity(terms);
    let mut right: Vec<DVector<C64>> = Vec::with_capacity(terms);
    for &k in &order {
        let p = eigenvalues[k].max(0.0);
        let mut u: DVector<C64> = eigenvectors.column(k).into();
        // phase convention: first significant component real positive
        if let Some(z) = u.iter().find(|z| z.norm() > 1e-12) {
            let phase = z / z.norm();
            u /= phase;
        }
        let mut v = DVector::zeros(db);
        for b in 0..db {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..da {
                acc += u[a].conj() * c[(a, b)];
            }
            v[b] = acc;
        }
        if p.sqrt() > 1e-12 {
            v /= C64::new(p.sqrt(), 0.0);
        } else {
            // null Schmidt direction: complete the right basis orthonormally
            v = orthonormal_completion(&right, db);
        }
        probabilities.push(p);
        left.push(u);
        right.push(v);
    }
    Ok(SchmidtDecomposition { probabilities, left, right })
}

fn orthonormal_completion(existing: &[DVector<C64>], dim: usize) -> DVector<C64> {
    for seed in 0..dim {
        let mut v: DVector<C64> = DVector::zeros(dim);
        v[seed] = C64::new(1.0, 0.0);
        for e in existing {
            let overlap = e.dotc(&v);
            v -= e * overlap;
        }
        let n = v.norm();
        if n > 1e-6 {
            return v / C64::new(n, 0.0);
        }
    }
    unreachable!("existing vectors already span the space");
}

/// Pauli operators in the computational basis `{|g>, |e>}`:
/// `σ_0 = I`, `σ_1 = |e><g| + |g><e|`, `σ_2 = i(-|e><g| + |g><e|)`,
/// `σ_3 = |e><e| - |g><g|`.
pub fn pauli(mu: usize) -> DMatrix<C64> {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match mu {
        0 => DMatrix::from_row_slice(2, 2, &[one, z, z, one]),
        1 => DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        2 => DMatrix::from_row_slice(2, 2, &[z, i, -i, z]),
        3 => DMatrix::from_row_slice(2, 2, &[-one, z, z, one]),
        _ => panic!("Pauli index {mu} out of range"),
    }
}

/// Pauli operator expressed in the orthonormal basis `{phi_g, phi_e}`.
pub fn pauli_in_basis(mu: usize, phi_g: &PureState, phi_e: &PureState) -> Result<DMatrix<C64>> {
    let v = basis_change(phi_g, phi_e)?;
    Ok(&v * pauli(mu) * v.adjoint())
}

fn basis_change(phi_g: &PureState, phi_e: &PureState) -> Result<DMatrix<C64>> {
    if phi_g.dims() != [2] || phi_e.dims() != [2] {
        return Err(Error::DimensionMismatch("basis states must be single qubits".into()));
    }
    let overlap = phi_g.inner(phi_e).norm();
    if overlap > 1e-10 {
        return Err(Error::NotOrthonormal(format!("|<phi_g|phi_e>| = {overlap:.3e}")));
    }
    let mut v = DMatrix::zeros(2, 2);
    v.set_column(0, phi_g.amplitudes());
    v.set_column(1, phi_e.amplitudes());
    Ok(v)
}

/// The four maximally entangled vectors `(σ_μ ⊗ I)|Φ_0>` with
/// `|Φ_0> = (|phi_g>|g> + |phi_e>|e>)/sqrt(2)`. The first factor carries the
/// supplied basis; the second factor uses the energy eigenbasis.
pub fn bell_basis(phi_g: &PureState, phi_e: &PureState) -> Result<[PureState; 4]> {
    let v = basis_change(phi_g, phi_e)?;
    let inv_sqrt2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut phi0 = DVector::zeros(4);
    for a in 0..2 {
        phi0[a * 2] = v[(a, 0)] * inv_sqrt2;
        phi0[a * 2 + 1] = v[(a, 1)] * inv_sqrt2;
    }
    let mut out = Vec::with_capacity(4);
    for mu in 0..4 {
        let s = &v * pauli(mu) * v.adjoint();
        let mut w = DVector::zeros(4);
        for a in 0..2 {
            for b in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for ap in 0..2 {
                    acc += s[(a, ap)] * phi0[ap * 2 + b];
                }
                w[a * 2 + b] = acc;
            }
        }
        out.push(PureState::new(w, vec![2, 2])?);
    }
    Ok(out.try_into().expect("four Bell vectors"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn op(mat: DMatrix<C64>, dims: &[usize]) -> MultipartiteOperator {
        MultipartiteOperator::new(mat, dims.to_vec()).unwrap()
    }

    #[test]
    fn tensor_identities() {
        let i2 = MultipartiteOperator::identity(&[2]);
        let i4 = i2.tensor(&i2);
        assert_eq!(i4.dims(), &[2, 2]);
        assert_eq!(i4.matrix(), &DMatrix::<C64>::identity(4, 4));
    }

    #[test]
    fn tensor_sigma3_with_identity() {
        let s3 = op(pauli(3), &[2]);
        let i2 = MultipartiteOperator::identity(&[2]);
        let t = s3.tensor(&i2);
        let diag: Vec<f64> = (0..4).map(|k| t.matrix()[(k, k)].re).collect();
        assert_eq!(diag, vec![-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn tensor_basis_projectors() {
        let g = PureState::basis_state(&[2], 0).density();
        let e = PureState::basis_state(&[2], 1).density();
        let t = g.tensor(&e);
        // rank-1 projector at index (g,e) = 1
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert_relative_eq!(t.matrix()[(i, j)].re, expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_drops_uncorrelated_factor() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let junk = sampling::random_density_matrix(3, 3, &mut rng);
        let joint = bell[0].density().tensor(&junk);
        let reduced = joint.partial_trace(&[0, 1]).unwrap();
        assert!((&reduced - &bell[0].density()).max_abs_entry() < 1e-13);
    }

    #[test]
    fn partial_trace_of_bell_is_maximally_mixed() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        let reduced = bell[0].density().partial_trace(&[1]).unwrap();
        let half = MultipartiteOperator::identity(&[2]).scale(c(0.5, 0.0));
        assert!((&reduced - &half).max_abs_entry() < 1e-14);
    }

    /// Brute-force index-contraction oracle for the partial trace.
    fn partial_trace_oracle(
        m: &MultipartiteOperator,
        keep: &[usize],
    ) -> DMatrix<C64> {
        let dims = m.dims().to_vec();
        let n = dims.len();
        let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
        let d_out: usize = keep.iter().map(|&k| dims[k]).product();
        let mut out = DMatrix::zeros(d_out, d_out);
        let full: usize = dims.iter().product();
        let unravel = |mut flat: usize| -> Vec<usize> {
            let mut idx = vec![0usize; n];
            for k in (0..n).rev() {
                idx[k] = flat % dims[k];
                flat /= dims[k];
            }
            idx
        };
        let ravel_keep = |idx: &[usize]| -> usize {
            let mut out = 0usize;
            for &k in keep {
                out = out * dims[k] + idx[k];
            }
            out
        };
        for r in 0..full {
            for cidx in 0..full {
                let ri = unravel(r);
                let ci = unravel(cidx);
                if traced.iter().all(|&k| ri[k] == ci[k]) {
                    out[(ravel_keep(&ri), ravel_keep(&ci))] += m.matrix()[(r, cidx)];
                }
            }
        }
        out
    }

    #[test]
    fn partial_trace_matches_index_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = sampling::random_density_matrix(8, 8, &mut rng)
            .with_dims(vec![2, 2, 2])
            .unwrap();
        let reduced = rho.partial_trace(&[0, 2]).unwrap();
        let oracle = partial_trace_oracle(&rho, &[0, 2]);
        assert!((reduced.matrix() - oracle).iter().all(|z| z.norm() < 1e-13));
        assert_relative_eq!(reduced.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_keep() {
        let rho = MultipartiteOperator::identity(&[2, 2]);
        assert!(rho.partial_trace(&[]).is_err());
        assert!(rho.partial_trace(&[2]).is_err());
        assert!(rho.partial_trace(&[1, 0]).is_err());
    }

    #[test]
    fn partial_transpose_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sampling::random_density_matrix(2, 2, &mut rng);
        let b = sampling::random_density_matrix(2, 2, &mut rng);
        let prod = a.tensor(&b);
        let pt = prod.partial_transpose(0).unwrap();
        let at = op(a.matrix().transpose(), &[2]);
        let expect = at.tensor(&b);
        assert!((&pt - &expect).max_abs_entry() < 1e-14);
    }

    #[test]
    fn partial_transpose_bell_spectrum() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        let pt = bell[0].density().partial_transpose(0).unwrap();
        let eigs = pt.hermitian_eigenvalues();
        assert_relative_eq!(eigs[0], -0.5, epsilon = 1e-12);
        for e in &eigs[1..] {
            assert_relative_eq!(*e, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn partial_transpose_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = sampling::random_density_matrix(12, 12, &mut rng)
            .with_dims(vec![2, 3, 2])
            .unwrap();
        let twice = rho.partial_transpose(1).unwrap().partial_transpose(1).unwrap();
        assert_eq!(twice.matrix(), rho.matrix());
    }

    #[test]
    fn partial_transpose_preserves_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = sampling::random_density_matrix(6, 6, &mut rng)
            .with_dims(vec![2, 3])
            .unwrap();
        let pt = rho.partial_transpose(0).unwrap();
        assert!((pt.trace() - rho.trace()).norm() < 1e-14);
        assert!(pt.hermiticity_deviation() < 1e-14);
    }

    #[test]
    fn negativity_of_bell_state_is_half() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        for b in &bell {
            assert_relative_eq!(negativity(&b.density(), 0).unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn negativity_of_product_state_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let a = sampling::random_density_matrix(2, 2, &mut rng);
            let b = sampling::random_density_matrix(2, 2, &mut rng);
            assert_eq!(negativity(&a.tensor(&b), 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn negativity_of_werner_state() {
        // w |Psi-><Psi-| + (1-w) I/4 at w = 0.5; direct eigendecomposition of
        // the 4x4 partial transpose gives eigenvalues {(1+w)/4 x3, (1-3w)/4}.
        let w = 0.5;
        let psi_minus = PureState::normalized(
            DVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]),
            vec![2, 2],
        )
        .unwrap();
        let werner = &psi_minus.density().scale(c(w, 0.0))
            + &MultipartiteOperator::identity(&[2, 2]).scale(c((1.0 - w) / 4.0, 0.0));
        assert_relative_eq!(negativity(&werner, 0).unwrap(), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn negativity_rejects_non_hermitian() {
        let mut m = DMatrix::<C64>::identity(4, 4);
        m[(0, 1)] = c(0.3, 0.1);
        let bad = op(m, &[2, 2]);
        assert!(negativity(&bad, 0).is_err());
    }

    #[test]
    fn schmidt_of_bell_state() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        let sd = schmidt_decompose(&bell[0]).unwrap();
        assert_relative_eq!(sd.probabilities[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(sd.probabilities[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn schmidt_of_product_state() {
        let gg = PureState::basis_state(&[2, 2], 0);
        let sd = schmidt_decompose(&gg).unwrap();
        assert_relative_eq!(sd.probabilities[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sd.probabilities[1], 0.0, epsilon = 1e-12);
        // right basis is still orthonormal thanks to the completion
        assert!(sd.right[0].dotc(&sd.right[1]).norm() < 1e-12);
    }

    #[test]
    fn schmidt_of_diagonal_superposition() {
        let amps = DVector::from_vec(vec![
            c(0.0, 0.0),
            c(0.9f64.sqrt(), 0.0),
            c(0.1f64.sqrt(), 0.0),
            c(0.0, 0.0),
        ]);
        let psi = PureState::new(amps, vec![2, 2]).unwrap();
        let sd = schmidt_decompose(&psi).unwrap();
        assert_relative_eq!(sd.probabilities[0], 0.9, epsilon = 1e-12);
        assert_relative_eq!(sd.probabilities[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn schmidt_reconstructs_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let psi = sampling::random_pure_state(&[2, 2], &mut rng);
            let sd = schmidt_decompose(&psi).unwrap();
            assert!(sd.probabilities.windows(2).all(|w| w[0] >= w[1]));
            assert_relative_eq!(sd.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            let mut rec = DVector::zeros(4);
            for i in 0..2 {
                rec += sd.left[i].kronecker(&sd.right[i]) * c(sd.probabilities[i].sqrt(), 0.0);
            }
            assert!((rec - psi.amplitudes()).norm() < 1e-12);
        }
    }

    #[test]
    fn schmidt_rejects_non_bipartite() {
        let psi = PureState::basis_state(&[2, 2, 2], 0);
        assert!(schmidt_decompose(&psi).is_err());
    }

    #[test]
    fn bell_basis_is_orthonormal_and_maximally_entangled() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = sampling::random_unitary(2, &mut rng);
        let phi_g = PureState::new(u.column(0).into(), vec![2]).unwrap();
        let phi_e = PureState::new(u.column(1).into(), vec![2]).unwrap();
        let bell = bell_basis(&phi_g, &phi_e).unwrap();
        for (i, a) in bell.iter().enumerate() {
            for (j, b) in bell.iter().enumerate() {
                let gram = a.inner(b);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram - c(expect, 0.0)).norm() < 1e-14);
            }
            let marginal = a.density().partial_trace(&[1]).unwrap();
            let half = MultipartiteOperator::identity(&[2]).scale(c(0.5, 0.0));
            assert!((&marginal - &half).max_abs_entry() < 1e-13);
        }
    }

    #[test]
    fn bell_basis_computational_matches_standard() {
        let bell = bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (sigma_0 x I)|Phi0> = (|gg> + |ee>)/sqrt(2)
        assert!((bell[0].amplitudes()[0] - c(s, 0.0)).norm() < 1e-15);
        assert!((bell[0].amplitudes()[3] - c(s, 0.0)).norm() < 1e-15);
        // (sigma_1 x I)|Phi0> = (|eg> + |ge>)/sqrt(2)
        assert!((bell[1].amplitudes()[1] - c(s, 0.0)).norm() < 1e-15);
        assert!((bell[1].amplitudes()[2] - c(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bell_basis_rejects_non_orthonormal() {
        let g = PureState::basis_state(&[2], 0);
        assert!(bell_basis(&g, &g).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let good = sampling::random_density_matrix(4, 2, &mut rng);
        assert!(DensityMatrix::new(good, 1e-10).is_ok());
        let not_normalized = MultipartiteOperator::identity(&[2, 2]);
        assert!(DensityMatrix::new(not_normalized, 1e-10).is_err());
        let negative = MultipartiteOperator::from_fn(&[2], |i, j| {
            if i == j {
                c(if i == 0 { 1.5 } else { -0.5 }, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        assert!(DensityMatrix::new(negative, 1e-10).is_err());
    }

    // Partial-transpose commutation with operators acting only on the
    // untransposed factor: (O (I x Y))^T_A = (O^T_A)(I x Y) and the
    // mirrored identity, entrywise to 1e-13.
    #[test]
    fn partial_transpose_commutes_with_untouched_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..50 {
            let o = sampling::random_operator(&[2, 2], 1.0, &mut rng);
            let y = sampling::random_operator(&[2], 1.0, &mut rng);
            let iy = MultipartiteOperator::identity(&[2]).tensor(&y);
            let lhs = (&o * &iy).partial_transpose(0).unwrap();
            let rhs = &o.partial_transpose(0).unwrap() * &iy;
            assert!((&lhs - &rhs).max_abs_entry() < 1e-13);
            let lhs2 = (&iy * &o).partial_transpose(0).unwrap();
            let rhs2 = &iy * &o.partial_transpose(0).unwrap();
            assert!((&lhs2 - &rhs2).max_abs_entry() < 1e-13);
        }
    }

    #[test]
    fn negativity_invariant_under_local_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..10 {
            let rho = sampling::random_density_matrix(4, 3, &mut rng)
                .with_dims(vec![2, 2])
                .unwrap();
            let ua = sampling::random_unitary(2, &mut rng);
            let ub = sampling::random_unitary(2, &mut rng);
            let u = op(ua.kronecker(&ub), &[2, 2]);
            let rotated = &(&u * &rho) * &u.adjoint();
            let n0 = negativity(&rho, 0).unwrap();
            let n1 = negativity(&rotated, 0).unwrap();
            assert!((n0 - n1).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_trace_of_tensor_recovers_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let a = sampling::random_density_matrix(2, 2, &mut rng);
        let b = sampling::random_density_matrix(3, 3, &mut rng);
        let joint = a.tensor(&b);
        assert!((&joint.partial_trace(&[0]).unwrap() - &a).max_abs_entry() < 1e-13);
        assert!((&joint.partial_trace(&[1]).unwrap() - &b).max_abs_entry() < 1e-13);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_operator(dims: Vec<usize>) -> impl Strategy<Value = MultipartiteOperator> {
            let d: usize = dims.iter().product();
            proptest::collection::vec(
                (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im)),
                d * d,
            )
            .prop_map(move |entries| {
                MultipartiteOperator::new(
                    DMatrix::from_vec(d, d, entries),
                    dims.clone(),
                )
                .expect("entry count matches")
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn partial_transpose_is_involutive_and_trace_preserving(
                op in prop_oneof![arb_operator(vec![2, 3]), arb_operator(vec![3, 2, 2])],
                subsystem in 0usize..2,
            ) {
                let pt = op.partial_transpose(subsystem).unwrap();
                prop_assert!((pt.trace() - op.trace()).norm() < 1e-12);
                let back = pt.partial_transpose(subsystem).unwrap();
                prop_assert_eq!(back.matrix(), op.matrix());
            }

            #[test]
            fn tensor_then_partial_trace_recovers_the_first_factor(
                a in arb_operator(vec![2]),
                b in arb_operator(vec![3]),
            ) {
                let tr_b = b.trace();
                let joint = a.tensor(&b);
                let recovered = joint.partial_trace(&[0]).unwrap();
                let expect = a.scale(tr_b);
                prop_assert!((&recovered - &expect).max_abs_entry() < 1e-12);
            }
        }
    }
}
