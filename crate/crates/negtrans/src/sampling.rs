//! Seeded random generators for property suites: pure states, density
//! matrices, Haar unitaries and Hermitian operators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::qstate::{MultipartiteOperator, PureState};

pub fn random_complex<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state over the given subsystem dimensions.
pub fn random_pure_state<R: Rng>(dims: &[usize], rng: &mut R) -> PureState {
    let d: usize = dims.iter().product();
    let v = DVector::from_fn(d, |_, _| random_complex(rng));
    PureState::normalized(v, dims.to_vec()).expect("gaussian vector is nonzero")
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| random_complex(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // fix the phase ambiguity so columns are Haar-distributed
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix with entries of the given scale.
pub fn random_hermitian<R: Rng>(n: usize, scale: f64, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| random_complex(rng) * C64::new(scale * 0.5, 0.0));
    &g + g.adjoint()
}

pub fn random_hermitian_op<R: Rng>(dims: &[usize], scale: f64, rng: &mut R) -> MultipartiteOperator {
    let d = dims.iter().product::<usize>();
    MultipartiteOperator::new(random_hermitian(d, scale, rng), dims.to_vec())
        .expect("dimensions agree by construction")
}

/// Random (generally non-Hermitian) operator with Gaussian entries.
pub fn random_operator<R: Rng>(dims: &[usize], scale: f64, rng: &mut R) -> MultipartiteOperator {
    let d = dims.iter().product::<usize>();
    let m = DMatrix::from_fn(d, d, |_, _| random_complex(rng) * C64::new(scale, 0.0));
    MultipartiteOperator::new(m, dims.to_vec()).expect("dimensions agree by construction")
}

/// Random density matrix of the given rank from the Hilbert-Schmidt ensemble,
/// tagged as a single subsystem of dimension `n`.
pub fn random_density_matrix<R: Rng>(n: usize, rank: usize, rng: &mut R) -> MultipartiteOperator {
    let rank = rank.clamp(1, n);
    let g = DMatrix::from_fn(n, rank, |_, _| random_complex(rng));
    let mut rho = &g * g.adjoint();
    let tr: C64 = rho.diagonal().iter().sum();
    rho /= tr;
    // symmetrize away the last bits of rounding noise
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    MultipartiteOperator::new(rho, vec![n]).expect("square by construction")
}
