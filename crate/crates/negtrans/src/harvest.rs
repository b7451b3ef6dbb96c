//! The second-order two-detector state and its negativity in closed form.
//!
//! In the basis `{gg, ge, eg, ee}` the state reads
//!
//! ```text
//!         | 1 - L_AA - L_BB   0      0      M*  |
//! rho  =  | 0                 L_BB   L_AB   0   |
//!         | 0                 L_BA   L_AA   0   |
//!         | M                 0      0      0   |
//! ```
//!
//! up to fourth-order terms. The truncation leaves the `ee` population at
//! zero while `M` is nonzero, so the matrix has a fourth-order negative
//! eigenvalue; [`psd_repair`] clips it for callers that need a genuine
//! state to feed the exact teleportation channel, while the raw matrix is
//! the right object for the perturbative formulas.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{DensityMatrix, MultipartiteOperator};

/// Coefficients above this magnitude are outside the perturbative regime.
pub const PERTURBATIVE_SCALE_LIMIT: f64 = 0.1;

/// Relative tolerance for calling two local-noise terms identical.
pub const IDENTICAL_DETECTOR_TOL: f64 = 1e-12;

/// The scalars that fully determine the second-order resource state:
/// local-noise terms `L_AA` (for A'), `L_BB`, the cross term `L_AB` and the
/// coherent correlation `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestCoefficients {
    pub l_aa: f64,
    pub l_bb: f64,
    pub l_ab: C64,
    pub m: C64,
}

impl HarvestCoefficients {
    pub fn new(l_aa: f64, l_bb: f64, l_ab: C64, m: C64) -> Result<Self> {
        if !(l_aa >= 0.0) || !(l_bb >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "local noise terms must be non-negative, got {l_aa}, {l_bb}"
            )));
        }
        if !l_ab.is_finite() || !m.is_finite() {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(Self { l_aa, l_bb, l_ab, m })
    }

    pub fn zero() -> Self {
        Self { l_aa: 0.0, l_bb: 0.0, l_ab: C64::new(0.0, 0.0), m: C64::new(0.0, 0.0) }
    }

    /// Argument of `M`.
    pub fn phi(&self) -> f64 {
        self.m.arg()
    }

    /// `(L_AA + L_BB) / 2`.
    pub fn l_mean(&self) -> f64 {
        0.5 * (self.l_aa + self.l_bb)
    }

    /// Gram structure of the two-point function: `|L_AB|² <= L_AA L_BB`
    /// within the given relative slack.
    pub fn cauchy_schwarz_ok(&self, rel_slack: f64) -> bool {
        self.l_ab.norm_sqr() <= self.l_aa * self.l_bb * (1.0 + rel_slack) + f64::MIN_POSITIVE
    }

    /// True when any coefficient is large enough to make the second-order
    /// truncation questionable.
    pub fn outside_perturbative_regime(&self) -> bool {
        self.max_coefficient() > PERTURBATIVE_SCALE_LIMIT
    }

    pub fn max_coefficient(&self) -> f64 {
        self.l_aa.max(self.l_bb).max(self.l_ab.norm()).max(self.m.norm())
    }

    /// `L_AA = L_BB` within [`IDENTICAL_DETECTOR_TOL`] relative.
    pub fn identical_detectors(&self) -> bool {
        (self.l_aa - self.l_bb).abs() <= IDENTICAL_DETECTOR_TOL * self.l_aa.abs().max(self.l_bb.abs())
    }
}

/// The second-order resource state on A'B (raw truncation, trace 1,
/// Hermitian, but not exactly positive when `M != 0`).
pub fn resource_state(c: &HarvestCoefficients) -> MultipartiteOperator {
    let z = C64::new(0.0, 0.0);
    let mut m = nalgebra::DMatrix::from_element(4, 4, z);
    m[(0, 0)] = C64::new(1.0 - c.l_aa - c.l_bb, 0.0);
    m[(0, 3)] = c.m.conj();
    m[(3, 0)] = c.m;
    m[(1, 1)] = C64::new(c.l_bb, 0.0);
    m[(1, 2)] = c.l_ab;
    m[(2, 1)] = c.l_ab.conj();
    m[(2, 2)] = C64::new(c.l_aa, 0.0);
    MultipartiteOperator::new(m, vec![2, 2]).expect("4x4 with dims [2,2]")
}

/// The one partial-transpose eigenvalue that can go negative at second
/// order: `E = (L_AA + L_BB)/2 - sqrt((L_AA - L_BB)² + 4|M|²)/2`.
pub fn resource_pt_eigenvalue(c: &HarvestCoefficients) -> f64 {
    let diff = c.l_aa - c.l_bb;
    0.5 * (c.l_aa + c.l_bb) - 0.5 * (diff * diff + 4.0 * c.m.norm_sqr()).sqrt()
}

/// Harvested negativity at second order, `max{0, -E}`. When
/// `L_AA = L_BB` this reduces to `max{0, |M| - L_AA}`.
pub fn harvested_negativity_2nd(c: &HarvestCoefficients) -> f64 {
    let e = resource_pt_eigenvalue(c);
    if e < 0.0 {
        -e
    } else {
        0.0
    }
}

/// Random coefficient set at coupling scale `λ` (so `L`-terms of order
/// `λ²`), with the Cauchy-Schwarz structure of genuine quadrature output.
pub fn random_coefficients<R: rand::Rng>(scale: f64, rng: &mut R) -> HarvestCoefficients {
    let l_aa = scale * scale * rng.gen_range(0.2..1.0);
    let l_bb = scale * scale * rng.gen_range(0.2..1.0);
    let cross = (l_aa * l_bb).sqrt() * rng.gen_range(0.0..0.95);
    let l_ab = C64::from_polar(cross, rng.gen_range(0.0..std::f64::consts::TAU));
    let m_mag = scale * scale * rng.gen_range(0.0..1.5);
    let m = C64::from_polar(m_mag, rng.gen_range(0.0..std::f64::consts::TAU));
    HarvestCoefficients::new(l_aa, l_bb, l_ab, m).expect("scales are non-negative")
}

/// Nearest positive-semidefinite state in Frobenius norm: clip negative
/// eigenvalues and renormalize the trace. The input must be Hermitian with
/// unit trace and smallest eigenvalue at least -0.01.
pub fn psd_repair(op: &MultipartiteOperator) -> Result<DensityMatrix> {
    op.check_hermitian(1e-10)
        .map_err(|_| Error::NotDensityMatrix("psd_repair input is not Hermitian".into()))?;
    let tr = op.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::NotDensityMatrix(format!("psd_repair input has trace {tr}")));
    }
    let (values, vectors) = op.hermitian_eigen();
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -0.01 {
        return Err(Error::NotDensityMatrix(format!(
            "smallest eigenvalue {min_eig:.3e} is too far from positive"
        )));
    }
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let n = op.dim();
    let mut repaired = nalgebra::DMatrix::zeros(n, n);
    for k in 0..n {
        if clipped[k] > 0.0 {
            let v = vectors.column(k);
            repaired += &v * v.adjoint() * C64::new(clipped[k] / total, 0.0);
        }
    }
    let repaired = MultipartiteOperator::new(repaired, op.dims().to_vec())?;
    DensityMatrix::new(repaired, 1e-10)
}
