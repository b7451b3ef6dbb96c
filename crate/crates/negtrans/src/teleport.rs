//! Bell-measurement teleportation channel with configurable receiver-side
//! correction, plus the closed-form teleported negativity for the
//! second-order harvested resource.
//!
//! Protocol: the sender holds the `A` half of a pure `ÃA` state and the
//! `A'` half of the resource; a projective measurement onto the Bell basis
//! of `AA'` yields outcome `μ`, after which the receiver applies `u_μ` to
//! `B`. With the standard correction `u_μ = σ_μ` and a perfect Bell
//! resource the input state is reproduced on `ÃB` exactly. With the
//! phase-corrected variant `u_μ = σ_μ v_B`, `v_B = |g><g| + e^{-iφ}|e><e|`
//! and `φ = arg(M)`, the harvested resource teleports negativity
//! `max{0, -E'}` with
//! `E' = L - sqrt(L²(1-4p(1-p)) + 4p(1-p)|M|²)`, `L = (L_AA+L_BB)/2`.
//!
//! Pauli corrections on `B` act in the energy eigenbasis `{|g>, |e>}`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::harvest::{resource_state, HarvestCoefficients};
use crate::qstate::{
    bell_basis, pauli, DensityMatrix, MultipartiteOperator, PureState,
};

/// Receiver-side correction conditioned on the measurement outcome.
#[derive(Debug, Clone)]
pub enum CorrectionStrategy {
    /// `u_μ = σ_μ`.
    Standard,
    /// `u_μ = σ_μ v_B(φ)` with `v_B = |g><g| + e^{-iφ}|e><e|`; `phi` should
    /// be the argument of the resource's `M`, which is fixed per setup once
    /// the couplings are agreed on.
    PhaseCorrected { phi: f64 },
    /// Four explicit unitaries, one per outcome.
    Custom(Box<[MultipartiteOperator; 4]>),
}

impl CorrectionStrategy {
    /// The four correction unitaries as 2x2 matrices on `B`.
    pub fn corrections(&self) -> Result<[DMatrix<C64>; 4]> {
        match self {
            Self::Standard => Ok([pauli(0), pauli(1), pauli(2), pauli(3)]),
            Self::PhaseCorrected { phi } => {
                let mut v = DMatrix::identity(2, 2);
                v[(1, 1)] = C64::from_polar(1.0, -phi);
                Ok([&pauli(0) * &v, &pauli(1) * &v, &pauli(2) * &v, &pauli(3) * &v])
            }
            Self::Custom(ops) => {
                let mut out = Vec::with_capacity(4);
                for op in ops.iter() {
                    if op.dims() != [2] {
                        return Err(Error::DimensionMismatch(
                            "custom corrections must be single-qubit".into(),
                        ));
                    }
                    let u = op.matrix().clone();
                    let dev = (&u * u.adjoint() - DMatrix::<C64>::identity(2, 2))
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0f64, f64::max);
                    if dev > 1e-12 {
                        return Err(Error::NotUnitary(dev));
                    }
                    out.push(u);
                }
                Ok(out.try_into().expect("four corrections"))
            }
        }
    }
}

/// Measurement operators `M_μ = I_Ã ⊗ |Φ_μ><Φ_μ| ⊗ I_B` on `ÃAA'B` for the
/// Bell basis built on `{phi_g, phi_e}`.
pub fn bell_measurement_ops(
    phi_g: &PureState,
    phi_e: &PureState,
) -> Result<[MultipartiteOperator; 4]> {
    let bell = bell_basis(phi_g, phi_e)?;
    let id2 = MultipartiteOperator::identity(&[2]);
    let ops: Vec<MultipartiteOperator> = bell
        .iter()
        .map(|phi| id2.tensor(&phi.density()).tensor(&id2))
        .collect();
    Ok(ops.try_into().expect("four operators"))
}

/// Everything the channel produces: the outcome-averaged state, the four
/// outcome probabilities and the corrected post-measurement states.
#[derive(Debug, Clone)]
pub struct TeleportResult {
    pub xi: DensityMatrix,
    pub outcome_probabilities: [f64; 4],
    pub per_outcome_states: [DensityMatrix; 4],
}

/// Run the teleportation channel exactly: project onto each Bell outcome,
/// trace out `AA'`, apply the correction, and average over outcomes.
pub fn teleport_channel(
    input: &PureState,
    resource: &DensityMatrix,
    basis: (&PureState, &PureState),
    strategy: &CorrectionStrategy,
) -> Result<TeleportResult> {
    if input.dims() != [2, 2] {
        return Err(Error::DimensionMismatch(format!(
            "input must be a two-qubit pure state, dims are {:?}",
            input.dims()
        )));
    }
    if resource.dims() != [2, 2] {
        return Err(Error::DimensionMismatch(format!(
            "resource must live on two qubits, dims are {:?}",
            resource.dims()
        )));
    }
    let corrections = strategy.corrections()?;
    let measurements = bell_measurement_ops(basis.0, basis.1)?;
    // total system ordering: Ã, A, A', B
    let rho_total = input.density().tensor(resource.op());
    let id2 = MultipartiteOperator::identity(&[2]);

    let tol = resource.tolerance().max(1e-12) + 1e-12;
    let mut probabilities = [0.0f64; 4];
    let mut per_outcome: Vec<DensityMatrix> = Vec::with_capacity(4);
    let mut xi_acc = MultipartiteOperator::zeros(&[2, 2]);
    for mu in 0..4 {
        let projected = &(&measurements[mu] * &rho_total) * &measurements[mu];
        let reduced = projected.partial_trace(&[0, 3])?;
        let u = MultipartiteOperator::new(corrections[mu].clone(), vec![2])
            .expect("2x2 correction");
        let u_full = id2.tensor(&u);
        let corrected = &(&u_full * &reduced) * &u_full.adjoint();
        let p = corrected.trace().re;
        probabilities[mu] = p;
        xi_acc = &xi_acc + &corrected;
        if p > 1e-14 {
            per_outcome.push(DensityMatrix::new(
                corrected.scale(C64::new(1.0 / p, 0.0)),
                tol,
            )?);
        } else {
            // zero-probability branch: state is undefined, report the
            // maximally mixed placeholder
            per_outcome.push(DensityMatrix::new(
                MultipartiteOperator::identity(&[2, 2]).scale(C64::new(0.25, 0.0)),
                1e-12,
            )?);
        }
    }
    let total_p: f64 = probabilities.iter().sum();
    if (total_p - 1.0).abs() > 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "outcome probabilities sum to {total_p}"
        )));
    }
    Ok(TeleportResult {
        xi: DensityMatrix::new(xi_acc, tol)?,
        outcome_probabilities: probabilities,
        per_outcome_states: per_outcome.try_into().expect("four outcome states"),
    })
}

/// The outcome-averaged resource `η = (1/4) Σ_μ (σ_μ ⊗ u_μ) ρ (σ_μ ⊗ u_μ)†`.
///
/// For the Standard and PhaseCorrected strategies this is evaluated in
/// closed form: with `κ = Re(M e^{-iφ})` and `λ_x = Re(L_AB e^{-iφ})`
/// (φ = 0 for Standard),
///
/// ```text
///       | 1/2 - L   0     0     κ       |
/// η  =  | 0         L     λ_x   0       |
///       | 0         λ_x   L     0       |
///       | κ         0     0     1/2 - L |
/// ```
///
/// Custom corrections are twirled numerically.
pub fn eta_from_resource(
    c: &HarvestCoefficients,
    strategy: &CorrectionStrategy,
) -> Result<MultipartiteOperator> {
    match strategy {
        CorrectionStrategy::Standard => Ok(eta_closed_form(c, 0.0)),
        CorrectionStrategy::PhaseCorrected { phi } => Ok(eta_closed_form(c, *phi)),
        CorrectionStrategy::Custom(_) => {
            let rho = resource_state(c);
            twirl(&rho, strategy)
        }
    }
}

fn eta_closed_form(c: &HarvestCoefficients, phi: f64) -> MultipartiteOperator {
    let rot = C64::from_polar(1.0, -phi);
    let corner = (c.m * rot).re;
    let cross = (c.l_ab * rot).re;
    let l = c.l_mean();
    let z = C64::new(0.0, 0.0);
    let mut m = DMatrix::from_element(4, 4, z);
    m[(0, 0)] = C64::new(0.5 - l, 0.0);
    m[(3, 3)] = C64::new(0.5 - l, 0.0);
    m[(0, 3)] = C64::new(corner, 0.0);
    m[(3, 0)] = C64::new(corner, 0.0);
    m[(1, 1)] = C64::new(l, 0.0);
    m[(2, 2)] = C64::new(l, 0.0);
    m[(1, 2)] = C64::new(cross, 0.0);
    m[(2, 1)] = C64::new(cross, 0.0);
    MultipartiteOperator::new(m, vec![2, 2]).expect("4x4 with dims [2,2]")
}

/// `(1/4) Σ_μ (σ_μ ⊗ u_μ) ρ (σ_μ ⊗ u_μ)†` evaluated literally.
pub fn twirl(
    rho: &MultipartiteOperator,
    strategy: &CorrectionStrategy,
) -> Result<MultipartiteOperator> {
    if rho.dims() != [2, 2] {
        return Err(Error::DimensionMismatch("twirl needs a two-qubit operator".into()));
    }
    let corrections = strategy.corrections()?;
    let mut acc = MultipartiteOperator::zeros(&[2, 2]);
    for mu in 0..4 {
        let s = MultipartiteOperator::new(pauli(mu), vec![2]).expect("pauli");
        let u = MultipartiteOperator::new(corrections[mu].clone(), vec![2]).expect("2x2");
        let su = s.tensor(&u);
        acc = &acc + &(&(&su * rho) * &su.adjoint());
    }
    Ok(acc.scale(C64::new(0.25, 0.0)))
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p = {p} outside [0, 1]")));
    }
    Ok(())
}

/// `sqrt(p)|gg> + sqrt(1-p)|ee>` on `ÃA`: an input whose Schmidt basis is
/// the computational one, so the alignment condition with the
/// computational Bell basis holds automatically.
pub fn schmidt_aligned_input(p: f64) -> Result<PureState> {
    check_probability(p)?;
    let mut amps = nalgebra::DVector::zeros(4);
    amps[0] = C64::new(p.sqrt(), 0.0);
    amps[3] = C64::new((1.0 - p).sqrt(), 0.0);
    PureState::new(amps, vec![2, 2])
}

/// Tolerance for [`bell_basis_aligned`].
pub const ALIGNMENT_TOL: f64 = 1e-10;

/// Whether the measurement basis diagonalizes the input's `A` marginal,
/// i.e. the alignment condition `<phi_i|phi'_k> = δ_ik` between the Bell
/// basis and the input's Schmidt basis. The closed forms
/// ([`teleported_negativity_2nd`], [`xi_closed_form`]) are valid exactly
/// when this holds; the exact channel works either way. A maximally
/// entangled input is aligned with every basis.
pub fn bell_basis_aligned(
    input: &PureState,
    phi_g: &PureState,
    phi_e: &PureState,
) -> Result<bool> {
    if input.dims() != [2, 2] {
        return Err(Error::DimensionMismatch(format!(
            "input must be a two-qubit pure state, dims are {:?}",
            input.dims()
        )));
    }
    if phi_g.dims() != [2] || phi_e.dims() != [2] {
        return Err(Error::DimensionMismatch("basis states must be single qubits".into()));
    }
    let rho_a = input.density().partial_trace(&[1])?;
    let mut off = C64::new(0.0, 0.0);
    for a in 0..2 {
        for b in 0..2 {
            off += phi_g.amplitudes()[a].conj() * rho_a.matrix()[(a, b)] * phi_e.amplitudes()[b];
        }
    }
    Ok(off.norm() <= ALIGNMENT_TOL)
}

/// Closed-form teleported negativity at second order for an input with
/// Schmidt weight `p`, assuming the Bell basis is aligned with the input's
/// Schmidt basis. `max{0, -E'}` with
/// `E' = L - sqrt(L²(1-4p(1-p)) + 4p(1-p) κ²)`, where `κ² = |M|²` for the
/// phase-corrected strategy and `κ² = Re(M)²` for the standard one.
pub fn teleported_negativity_2nd(
    p: f64,
    c: &HarvestCoefficients,
    strategy: &CorrectionStrategy,
) -> Result<f64> {
    check_probability(p)?;
    let kappa_sq = match strategy {
        CorrectionStrategy::Standard => c.m.re * c.m.re,
        CorrectionStrategy::PhaseCorrected { .. } => c.m.norm_sqr(),
        CorrectionStrategy::Custom(_) => {
            return Err(Error::InvalidParameter(
                "no closed form exists for custom corrections".into(),
            ))
        }
    };
    let l = c.l_mean();
    let pq4 = 4.0 * p * (1.0 - p);
    let e_prime = l - (l * l * (1.0 - pq4) + pq4 * kappa_sq).sqrt();
    Ok(if e_prime < 0.0 { -e_prime } else { 0.0 })
}

/// Closed-form reduced state `ξ_ÃB = 2 (P ⊗ I) η (P ⊗ I)` with
/// `P = diag(sqrt(p), sqrt(1-p))` in the input's Schmidt basis, valid when
/// the Bell basis is aligned with that basis.
pub fn xi_closed_form(
    p: f64,
    c: &HarvestCoefficients,
    strategy: &CorrectionStrategy,
) -> Result<MultipartiteOperator> {
    check_probability(p)?;
    let eta = eta_from_resource(c, strategy)?;
    let sp = p.sqrt();
    let sq = (1.0 - p).sqrt();
    let weights = [sp, sp, sq, sq];
    let mut m = eta.matrix().clone();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] *= 2.0 * weights[i] * weights[j];
        }
    }
    MultipartiteOperator::new(m, vec![2, 2])
}
