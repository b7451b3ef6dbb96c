//! Degenerate eigenvalue perturbation theory for Hermitian pencils
//! `S(t) = S0 + t S1 + t² S2`.
//!
//! For a chosen unperturbed eigenvalue `s0`, the first-order corrections are
//! the eigenvalues of `Π0 S1 Π0` restricted to the `s0` eigenspace, and the
//! second-order corrections are the eigenvalues of
//! `Π0 (S2 - S1 Σ' Π_{s'}/(s' - s0) S1) Π0` restricted likewise, where the
//! primed sum runs over the rest of the spectrum. The projector form is used
//! throughout instead of explicit eigenvector bases for numerical
//! robustness; corrections are paired by diagonalizing the second-order
//! operator inside each first-order-degenerate block.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qstate::MultipartiteOperator;

/// Hermiticity tolerance enforced on each term of the pencil.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Default tolerance for matching an eigenvalue of `S0` against `s0`;
/// inputs here are analytically exact matrices, not noisy data.
pub const EIGENSPACE_MATCH_TOL: f64 = 1e-9;

/// Operator pencil `S0 + t S1 + t² S2` with every term Hermitian.
#[derive(Debug, Clone)]
pub struct HermitianSeries {
    s0: MultipartiteOperator,
    s1: MultipartiteOperator,
    s2: MultipartiteOperator,
}

impl HermitianSeries {
    pub fn new(
        s0: MultipartiteOperator,
        s1: MultipartiteOperator,
        s2: MultipartiteOperator,
    ) -> Result<Self> {
        if s0.dim() != s1.dim() || s0.dim() != s2.dim() {
            return Err(Error::DimensionMismatch(format!(
                "pencil terms have dimensions {}, {}, {}",
                s0.dim(),
                s1.dim(),
                s2.dim()
            )));
        }
        for term in [&s0, &s1, &s2] {
            term.check_hermitian(HERMITICITY_TOL)?;
        }
        Ok(Self { s0, s1, s2 })
    }

    pub fn s0(&self) -> &MultipartiteOperator {
        &self.s0
    }
    pub fn s1(&self) -> &MultipartiteOperator {
        &self.s1
    }
    pub fn s2(&self) -> &MultipartiteOperator {
        &self.s2
    }

    /// Evaluate `S0 + t S1 + t² S2`.
    pub fn eval(&self, t: f64) -> MultipartiteOperator {
        &(&self.s0 + &self.s1.scale(C64::new(t, 0.0))) + &self.s2.scale(C64::new(t * t, 0.0))
    }
}

/// First- and second-order corrections of the eigenvalues branching from
/// `s0`, paired by index, together with the eigenspace projector.
#[derive(Debug, Clone)]
pub struct EigenCorrections {
    pub s0: f64,
    pub first_order: Vec<f64>,
    pub second_order: Vec<f64>,
    pub projector: MultipartiteOperator,
}

/// Orthogonal projector onto the span of eigenvectors of `s0_op` with
/// eigenvalue within `tol` of `s0`.
pub fn eigenspace_projector(
    s0_op: &MultipartiteOperator,
    s0: f64,
    tol: f64,
) -> Result<MultipartiteOperator> {
    s0_op.check_hermitian(HERMITICITY_TOL)?;
    let (values, vectors) = s0_op.hermitian_eigen();
    let members: Vec<usize> = (0..values.len())
        .filter(|&k| (values[k] - s0).abs() <= tol)
        .collect();
    if members.is_empty() {
        return Err(Error::NoEigenvalueNear { target: s0, tolerance: tol });
    }
    let n = s0_op.dim();
    let mut proj = DMatrix::zeros(n, n);
    for &k in &members {
        let v = vectors.column(k);
        proj += &v * v.adjoint();
    }
    MultipartiteOperator::new(proj, s0_op.dims().to_vec())
}

/// `Σ' Π_{s'} / (s' - s0)` over the spectrum of `s0_op` excluding
/// eigenvalues within `tol` of `s0` (the reduced resolvent at `s0`).
pub fn reduced_resolvent(
    s0_op: &MultipartiteOperator,
    s0: f64,
    tol: f64,
) -> Result<MultipartiteOperator> {
    s0_op.check_hermitian(HERMITICITY_TOL)?;
    let (values, vectors) = s0_op.hermitian_eigen();
    let n = s0_op.dim();
    let mut res = DMatrix::zeros(n, n);
    for k in 0..n {
        if (values[k] - s0).abs() > tol {
            let v = vectors.column(k);
            res += (&v * v.adjoint()) / C64::new(values[k] - s0, 0.0);
        }
    }
    MultipartiteOperator::new(res, s0_op.dims().to_vec())
}

/// Eigenvalue corrections for the branch of the spectrum at `s0`, using the
/// default eigenspace matching tolerance.
pub fn zero_eig_corrections(series: &HermitianSeries, s0: f64) -> Result<EigenCorrections> {
    zero_eig_corrections_with_tol(series, s0, EIGENSPACE_MATCH_TOL)
}

pub fn zero_eig_corrections_with_tol(
    series: &HermitianSeries,
    s0: f64,
    tol: f64,
) -> Result<EigenCorrections> {
    let (values, vectors) = series.s0().hermitian_eigen();
    let members: Vec<usize> = (0..values.len())
        .filter(|&k| (values[k] - s0).abs() <= tol)
        .collect();
    if members.is_empty() {
        return Err(Error::NoEigenvalueNear { target: s0, tolerance: tol });
    }
    let n = series.s0().dim();
    let k = members.len();

    // orthonormal basis of the eigenspace
    let mut basis = DMatrix::zeros(n, k);
    for (col, &idx) in members.iter().enumerate() {
        basis.set_column(col, &vectors.column(idx));
    }
    let mut projector = DMatrix::zeros(n, n);
    for col in 0..k {
        let v = basis.column(col);
        projector += &v * v.adjoint();
    }
    let projector = MultipartiteOperator::new(projector, series.s0().dims().to_vec())?;

    // restrictions of S1 and of S2 - S1 Q S1 to the eigenspace
    let w1 = basis.adjoint() * series.s1().matrix() * &basis;
    let q = reduced_resolvent(series.s0(), s0, tol)?;
    let effective = series.s2().matrix() - series.s1().matrix() * q.matrix() * series.s1().matrix();
    let w2 = basis.adjoint() * effective * &basis;

    // diagonalize the first-order restriction
    let (first_sorted, u) = crate::eigen::hermitian_eigen(&w1);
    let w2_rot = u.adjoint() * &w2 * &u;

    // second order: diagonalize within each first-order-degenerate block
    let scale = first_sorted.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let group_tol = 1e-9 * scale;
    let mut first_order = Vec::with_capacity(k);
    let mut second_order = Vec::with_capacity(k);
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (first_sorted[end] - first_sorted[end - 1]).abs() <= group_tol {
            end += 1;
        }
        let block = w2_rot.view((start, start), (end - start, end - start)).into_owned();
        let (seconds, _) = crate::eigen::hermitian_eigen(&block);
        for s in seconds {
            first_order.push(first_sorted[start]);
            second_order.push(s);
        }
        start = end;
    }

    Ok(EigenCorrections { s0, first_order, second_order, projector })
}

/// `s0 + t * first_i + t² * second_i` for each correction pair, sorted
/// ascending.
pub fn predicted_spectrum(corr: &EigenCorrections, t: f64) -> Vec<f64> {
    let mut out: Vec<f64> = corr
        .first_order
        .iter()
        .zip(&corr.second_order)
        .map(|(&f, &s)| corr.s0 + t * f + t * t * s)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Least-squares slope of `ln y` against `ln x`; pairs with `y <= floor`
/// are dropped.
pub fn log_log_slope(xs: &[f64], ys: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > floor)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}
