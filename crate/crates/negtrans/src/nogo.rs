//! Direct-transmission harness: second-order Dyson terms for an arbitrary
//! finite-dimensional intermediary, the kernel-projector checks behind the
//! statement that no ancilla-receiver negativity appears at second order,
//! and non-perturbative reference evolution with coupling-scaling analysis.
//!
//! System ordering is `Ã, A, B, f`. The interaction is
//! `H(t) = λ_A Σ_k χ_k(t) X_A^(k) ⊗ O_f^(k) + λ_B Σ_k χ_k(t) X_B^(k) ⊗ O_f^(k)`
//! with real switching profiles; interaction-picture phases are folded into
//! the profiles as modulated Gaussians `A e^{-(t-c)²/2w²} cos(ft + φ)`, so
//! a monopole coupling `e^{iΩt}σ_+ + h.c.` becomes the two terms
//! `cos(Ωt) σ_1` and `-sin(Ωt) σ_2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::perturb;
use crate::qstate::{self, DensityMatrix, MultipartiteOperator, PureState};
use crate::sampling;

/// Eigenvalues of a state below this threshold count as kernel directions.
pub const KERNEL_TOL: f64 = 1e-12;

/// Modulated Gaussian switching profile
/// `A exp(-(t-c)²/2w²) cos(f t + φ)`; absolutely integrable for any
/// parameters with `w > 0`.
#[derive(Debug, Clone, Copy)]
pub struct SwitchingPulse {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl SwitchingPulse {
    pub fn new(amplitude: f64, center: f64, width: f64, frequency: f64, phase: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter("pulse width must be > 0".into()));
        }
        if ![amplitude, center, frequency, phase].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("pulse parameters must be finite".into()));
        }
        Ok(Self { amplitude, center, width, frequency, phase })
    }

    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Self::new(amplitude, center, width, 0.0, 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.width;
        self.amplitude * (-0.5 * x * x).exp() * (self.frequency * t + self.phase).cos()
    }

    /// Interval containing the support up to `8` widths.
    pub fn support(&self) -> (f64, f64) {
        (self.center - 8.0 * self.width, self.center + 8.0 * self.width)
    }
}

/// One coupling term: a Hermitian system operator, a Hermitian field
/// operator and the switching profile that multiplies them.
#[derive(Debug, Clone)]
pub struct CouplingTerm {
    pub system_op: DMatrix<C64>,
    pub field_op: DMatrix<C64>,
    pub pulse: SwitchingPulse,
}

impl CouplingTerm {
    pub fn new(system_op: DMatrix<C64>, field_op: DMatrix<C64>, pulse: SwitchingPulse) -> Result<Self> {
        for (name, m) in [("system", &system_op), ("field", &field_op)] {
            if m.nrows() != m.ncols() {
                return Err(Error::DimensionMismatch(format!("{name} operator is not square")));
            }
            let dev = hermiticity_deviation(m);
            if dev > 1e-12 {
                return Err(Error::NotHermitian { deviation: dev, tolerance: 1e-12 });
            }
        }
        Ok(Self { system_op, field_op, pulse })
    }
}

fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Finite-dimensional transmission model: a pure `ÃA` input, receiver state
/// `ρ_B`, intermediary state `ρ_f`, and coupling term lists for the sender
/// and receiver sides scaled by `λ_A`, `λ_B`.
#[derive(Debug, Clone)]
pub struct ToyTransmissionModel {
    pub input: PureState,
    pub rho_b: DensityMatrix,
    pub rho_f: DensityMatrix,
    pub couplings_a: Vec<CouplingTerm>,
    pub couplings_b: Vec<CouplingTerm>,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

impl ToyTransmissionModel {
    pub fn new(
        input: PureState,
        rho_b: DensityMatrix,
        rho_f: DensityMatrix,
        couplings_a: Vec<CouplingTerm>,
        couplings_b: Vec<CouplingTerm>,
        lambda_a: f64,
        lambda_b: f64,
    ) -> Result<Self> {
        if input.dims().len() != 2 {
            return Err(Error::DimensionMismatch("input must live on ÃA (two factors)".into()));
        }
        if rho_b.dims().len() != 1 || rho_f.dims().len() != 1 {
            return Err(Error::DimensionMismatch("rho_B and rho_f must be single factors".into()));
        }
        if !lambda_a.is_finite() || !lambda_b.is_finite() {
            return Err(Error::InvalidParameter("couplings must be finite".into()));
        }
        let model = Self { input, rho_b, rho_f, couplings_a, couplings_b, lambda_a, lambda_b };
        let (da, db, df) = (model.sender_dim(), model.receiver_dim(), model.field_dim());
        for term in &model.couplings_a {
            if term.system_op.nrows() != da || term.field_op.nrows() != df {
                return Err(Error::DimensionMismatch(
                    "sender coupling dimensions do not match the model".into(),
                ));
            }
        }
        for term in &model.couplings_b {
            if term.system_op.nrows() != db || term.field_op.nrows() != df {
                return Err(Error::DimensionMismatch(
                    "receiver coupling dimensions do not match the model".into(),
                ));
            }
        }
        Ok(model)
    }

    pub fn ancilla_dim(&self) -> usize {
        self.input.dims()[0]
    }
    pub fn sender_dim(&self) -> usize {
        self.input.dims()[1]
    }
    pub fn receiver_dim(&self) -> usize {
        self.rho_b.dims()[0]
    }
    pub fn field_dim(&self) -> usize {
        self.rho_f.dims()[0]
    }

    /// Full-system dims `[Ã, A, B, f]`.
    pub fn dims(&self) -> [usize; 4] {
        [self.ancilla_dim(), self.sender_dim(), self.receiver_dim(), self.field_dim()]
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().product()
    }

    /// `|Ψ><Ψ|_ÃA ⊗ ρ_B ⊗ ρ_f`.
    pub fn initial_state(&self) -> MultipartiteOperator {
        self.input.density().tensor(self.rho_b.op()).tensor(self.rho_f.op())
    }

    /// `ρ_Ã ⊗ ρ_B`, the unperturbed reduced state on `ÃB`.
    pub fn initial_reduced(&self) -> MultipartiteOperator {
        let rho_a = self
            .input
            .density()
            .partial_trace(&[0])
            .expect("input has two factors");
        rho_a.tensor(self.rho_b.op())
    }

    /// Truncated-oscillator default: both detectors couple to `a + a†` with
    /// monopole phases at gap 1, the receiver window following the sender's.
    pub fn default_toy(field_dim: usize) -> Result<Self> {
        if field_dim < 2 {
            return Err(Error::InvalidParameter("field dimension must be at least 2".into()));
        }
        let gap = 1.0;
        let quadrature_op = {
            let mut a = DMatrix::<C64>::zeros(field_dim, field_dim);
            for n in 1..field_dim {
                a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
            }
            &a + a.adjoint()
        };
        let monopole = |center: f64| -> Result<Vec<CouplingTerm>> {
            Ok(vec![
                CouplingTerm::new(
                    qstate::pauli(1),
                    quadrature_op.clone(),
                    SwitchingPulse::new(1.0, center, 1.0, gap, 0.0)?,
                )?,
                CouplingTerm::new(
                    qstate::pauli(2),
                    quadrature_op.clone(),
                    SwitchingPulse::new(1.0, center, 1.0, gap, std::f64::consts::FRAC_PI_2)?,
                )?,
            ])
        };
        let bell = qstate::bell_basis(
            &PureState::basis_state(&[2], 0),
            &PureState::basis_state(&[2], 1),
        )?;
        Self::new(
            bell[0].clone(),
            DensityMatrix::from_pure(&PureState::basis_state(&[2], 0)),
            DensityMatrix::from_pure(&PureState::basis_state(&[field_dim], 0)),
            monopole(-2.0)?,
            monopole(2.0)?,
            1.0,
            1.0,
        )
    }

    /// Random model with unit-spectral-norm coupling operators, modulated
    /// Gaussian switchings, a random pure `ÃA` input and pure `ρ_B`.
    pub fn random<R: Rng>(field_dim: usize, mixed_field: bool, rng: &mut R) -> Result<Self> {
        let random_terms = |sys_dim: usize, rng: &mut R| -> Result<Vec<CouplingTerm>> {
            let count = rng.gen_range(1..=2);
            (0..count)
                .map(|_| {
                    let pulse = SwitchingPulse::new(
                        rng.gen_range(0.3..1.0),
                        rng.gen_range(-2.5..2.5),
                        rng.gen_range(0.7..1.4),
                        rng.gen_range(0.0..1.5),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )?;
                    CouplingTerm::new(
                        normalized_hermitian(sys_dim, rng),
                        normalized_hermitian(field_dim, rng),
                        pulse,
                    )
                })
                .collect()
        };
        let rho_f = if mixed_field {
            DensityMatrix::new(sampling::random_density_matrix(field_dim, 2, rng), 1e-10)?
        } else {
            DensityMatrix::from_pure(&sampling::random_pure_state(&[field_dim], rng))
        };
        Self::new(
            sampling::random_pure_state(&[2, 2], rng),
            DensityMatrix::from_pure(&sampling::random_pure_state(&[2], rng)),
            rho_f,
            random_terms(2, rng)?,
            random_terms(2, rng)?,
            rng.gen_range(0.5..1.0),
            rng.gen_range(0.5..1.0),
        )
    }
}

fn normalized_hermitian<R: Rng>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let h = sampling::random_hermitian(n, 1.0, rng);
    let spectral = crate::eigen::hermitian_eigen(&h)
        .0
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    h / C64::new(spectral, 0.0)
}

/// Uniform time grid for the Dyson integrals and the stepping evolution;
/// `steps` is the starting resolution, refined internally.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, steps: usize) -> Result<Self> {
        if !(t_min < t_max) || steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "need t_min < t_max and steps >= 2, got [{t_min}, {t_max}] with {steps}"
            )));
        }
        Ok(Self { t_min, t_max, steps })
    }

    /// Grid covering every switching support of the model.
    pub fn covering(model: &ToyTransmissionModel, steps: usize) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for term in model.couplings_a.iter().chain(&model.couplings_b) {
            let (a, b) = term.pulse.support();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if !lo.is_finite() {
            // no couplings at all: any window will do
            lo = -1.0;
            hi = 1.0;
        }
        Self::new(lo, hi, steps)
    }

    fn check_covers(&self, model: &ToyTransmissionModel) -> Result<()> {
        for term in model.couplings_a.iter().chain(&model.couplings_b) {
            let (a, b) = term.pulse.support();
            if a < self.t_min || b > self.t_max {
                return Err(Error::GridTooCoarse(format!(
                    "switching support [{a:.2}, {b:.2}] outside grid [{}, {}]",
                    self.t_min, self.t_max
                )));
            }
        }
        Ok(())
    }
}

/// Coupling terms embedded in the full `Ã ⊗ A ⊗ B ⊗ f` space.
fn embedded_terms(model: &ToyTransmissionModel, include_ha: bool) -> Vec<(SwitchingPulse, DMatrix<C64>)> {
    let [da_t, da, db, df] = model.dims();
    let id_at = DMatrix::<C64>::identity(da_t, da_t);
    let id_a = DMatrix::<C64>::identity(da, da);
    let id_b = DMatrix::<C64>::identity(db, db);
    let mut out = Vec::new();
    if include_ha {
        for term in &model.couplings_a {
            let g = id_at
                .kronecker(&term.system_op)
                .kronecker(&id_b)
                .kronecker(&term.field_op)
                * C64::new(model.lambda_a, 0.0);
            out.push((term.pulse, g));
        }
    }
    for term in &model.couplings_b {
        let g = id_at
            .kronecker(&id_a)
            .kronecker(&term.system_op)
            .kronecker(&term.field_op)
            * C64::new(model.lambda_b, 0.0);
        out.push((term.pulse, g));
    }
    let _ = df;
    out
}

/// `∫ f_k` and the time-ordered `∬_{t'<t} f_k(t) f_l(t')` on a uniform grid
/// with `n` panels, evaluated by (cumulative) trapezoids in a single sweep.
fn scalar_integrals(pulses: &[SwitchingPulse], grid: &TimeGrid, n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let k = pulses.len();
    let h = (grid.t_max - grid.t_min) / n as f64;
    let mut c = vec![0.0f64; k];
    let mut cum = vec![0.0f64; k];
    let mut d = DMatrix::<f64>::zeros(k, k);
    let mut f_prev: Vec<f64> = pulses.iter().map(|p| p.eval(grid.t_min)).collect();
    let mut prod_prev = DMatrix::<f64>::zeros(k, k); // f_k * F_l at the previous node (F = 0 there)
    for i in 1..=n {
        let t = grid.t_min + i as f64 * h;
        let f: Vec<f64> = pulses.iter().map(|p| p.eval(t)).collect();
        for l in 0..k {
            cum[l] += 0.5 * h * (f_prev[l] + f[l]);
            c[l] = cum[l];
        }
        for kk in 0..k {
            for l in 0..k {
                let prod = f[kk] * cum[l];
                d[(kk, l)] += 0.5 * h * (prod_prev[(kk, l)] + prod);
                prod_prev[(kk, l)] = prod;
            }
        }
        f_prev = f;
    }
    (c, d)
}

/// The unperturbed reduced state together with the first- and second-order
/// Dyson corrections on `ÃB`.
#[derive(Debug, Clone)]
pub struct DysonTerms {
    pub rho0: MultipartiteOperator,
    pub rho1: MultipartiteOperator,
    pub rho2: MultipartiteOperator,
}

fn dyson_from_scalars(
    model: &ToyTransmissionModel,
    terms: &[(SwitchingPulse, DMatrix<C64>)],
    products: &[Vec<DMatrix<C64>>],
    c: &[f64],
    d: &DMatrix<f64>,
) -> Result<(MultipartiteOperator, MultipartiteOperator)> {
    let dim = model.total_dim();
    let dims = model.dims().to_vec();
    let mut u1 = DMatrix::<C64>::zeros(dim, dim);
    for (k, (_, g)) in terms.iter().enumerate() {
        u1 += g * C64::new(0.0, -c[k]);
    }
    let mut u2 = DMatrix::<C64>::zeros(dim, dim);
    for k in 0..terms.len() {
        for l in 0..terms.len() {
            u2 += &products[k][l] * C64::new(-d[(k, l)], 0.0);
        }
    }
    let rho0 = model.initial_state();
    let rho1_full = &u1 * rho0.matrix() + rho0.matrix() * u1.adjoint();
    let rho2_full =
        &u2 * rho0.matrix() + rho0.matrix() * u2.adjoint() + &u1 * rho0.matrix() * u1.adjoint();
    let rho1 = MultipartiteOperator::new(rho1_full, dims.clone())?.partial_trace(&[0, 2])?;
    let rho2 = MultipartiteOperator::new(rho2_full, dims)?.partial_trace(&[0, 2])?;
    Ok((rho1, rho2))
}

fn dyson_terms_with(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    include_ha: bool,
) -> Result<DysonTerms> {
    grid.check_covers(model)?;
    let terms = embedded_terms(model, include_ha);
    let rho0 = model.initial_reduced();
    if terms.is_empty() {
        let zero = MultipartiteOperator::zeros(rho0.dims());
        return Ok(DysonTerms { rho0, rho1: zero.clone(), rho2: zero });
    }
    let pulses: Vec<SwitchingPulse> = terms.iter().map(|t| t.0).collect();
    let products: Vec<Vec<DMatrix<C64>>> = terms
        .iter()
        .map(|(_, g)| terms.iter().map(|(_, h)| g * h).collect())
        .collect();

    let mut n = grid.steps.max(64);
    let max_n = 1 << 22;
    let (c, d) = scalar_integrals(&pulses, grid, n);
    let (mut rho1, mut rho2) = dyson_from_scalars(model, &terms, &products, &c, &d)?;
    loop {
        let n2 = n * 2;
        if n2 > max_n {
            return Err(Error::StepHalvingNonConvergence { residual: f64::NAN, steps: n });
        }
        let (c, d) = scalar_integrals(&pulses, grid, n2);
        let (r1, r2) = dyson_from_scalars(model, &terms, &products, &c, &d)?;
        let diff = (&r1 - &rho1).max_abs_entry().max((&r2 - &rho2).max_abs_entry());
        let trace_defect = r1.trace().norm().max(r2.trace().norm());
        rho1 = r1;
        rho2 = r2;
        n = n2;
        if diff <= 1e-8 && trace_defect <= 1e-8 {
            break;
        }
    }
    Ok(DysonTerms { rho0, rho1, rho2 })
}

/// First- and second-order reduced Dyson terms, refined until the entries
/// and the order-by-order trace conditions stabilize at 1e-8.
pub fn dyson_reduced_terms(model: &ToyTransmissionModel, grid: &TimeGrid) -> Result<DysonTerms> {
    dyson_terms_with(model, grid, true)
}

/// Projector onto the kernel of `ρ_B` (eigenvalues at most [`KERNEL_TOL`]).
pub fn receiver_kernel_projector(model: &ToyTransmissionModel) -> MultipartiteOperator {
    let (values, vectors) = model.rho_b.op().hermitian_eigen();
    let db = model.receiver_dim();
    let mut pi = DMatrix::<C64>::zeros(db, db);
    for k in 0..db {
        if values[k] <= KERNEL_TOL {
            let v = vectors.column(k);
            pi += &v * v.adjoint();
        }
    }
    MultipartiteOperator::new(pi, vec![db]).expect("square projector")
}

/// Outcome of the first-order kernel check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstOrderCheck {
    /// `ρ_B` is invertible, the kernel projector vanishes and the check is
    /// empty.
    Vacuous,
    /// Largest entry magnitude of `Π0 (ρ^(1))^T_Ã Π0`; the no-go statement
    /// predicts zero.
    MaxAbs(f64),
}

/// Evaluate `Π0 (ρ^(1))^T_Ã Π0` with `Π0 = I_Ã ⊗ π_B`.
pub fn check_first_order(model: &ToyTransmissionModel, grid: &TimeGrid) -> Result<FirstOrderCheck> {
    let pi_b = receiver_kernel_projector(model);
    if pi_b.trace().re < 0.5 {
        return Ok(FirstOrderCheck::Vacuous);
    }
    let terms = dyson_reduced_terms(model, grid)?;
    let pi0 = MultipartiteOperator::identity(&[model.ancilla_dim()]).tensor(&pi_b);
    let pt = terms.rho1.partial_transpose(0)?;
    let sandwiched = &(&pi0 * &pt) * &pi0;
    Ok(FirstOrderCheck::MaxAbs(sandwiched.max_abs_entry()))
}

/// The second-order correction operator on the kernel subspace,
/// `Π0 S2 Π0 - Π0 S1 Q S1 Π0` with `S_n` the partially transposed Dyson
/// terms and `Q` the reduced resolvent of `S0` at zero. With
/// `include_ha = false` the sender coupling is dropped; the no-go statement
/// predicts an identical operator either way.
pub fn second_order_operator(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    include_ha: bool,
) -> Result<MultipartiteOperator> {
    let rho_a = model.input.density().partial_trace(&[0])?;
    let min_anc = rho_a.hermitian_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    if min_anc <= KERNEL_TOL {
        return Err(Error::SingularAncilla);
    }
    let terms = dyson_terms_with(model, grid, include_ha)?;
    let pi_b = receiver_kernel_projector(model);
    let pi0 = MultipartiteOperator::identity(&[model.ancilla_dim()]).tensor(&pi_b);
    let s0 = terms.rho0.partial_transpose(0)?;
    let s1 = terms.rho1.partial_transpose(0)?;
    let s2 = terms.rho2.partial_transpose(0)?;
    let q = perturb::reduced_resolvent(&s0, 0.0, KERNEL_TOL)?;
    let direct = &(&pi0 * &s2) * &pi0;
    let resolvent_part = &(&(&(&pi0 * &s1) * &q) * &s1) * &pi0;
    Ok(&direct - &resolvent_part)
}

/// Fourth-order commutator-free Magnus coefficients for the two-exponential
/// scheme with Gauss-Legendre nodes.
const CF4_EARLY: f64 = 0.25 + 0.288675134594812882; // 1/4 + sqrt(3)/6
const CF4_LATE: f64 = 0.25 - 0.288675134594812882;

fn expm_apply(x: &DMatrix<C64>, v: &DVector<C64>) -> DVector<C64> {
    let mut term = v.clone();
    let mut sum = v.clone();
    for k in 1..60 {
        term = x * &term / C64::new(k as f64, 0.0);
        sum += &term;
        if term.norm() < 1e-16 * sum.norm() {
            break;
        }
    }
    sum
}

/// Reduced `ÃB` state from an ensemble of full-system vectors.
fn reduce_vectors(model: &ToyTransmissionModel, ensemble: &[(f64, DVector<C64>)]) -> MultipartiteOperator {
    let [da_t, da, db, df] = model.dims();
    let out_dim = da_t * db;
    let mut out = DMatrix::<C64>::zeros(out_dim, out_dim);
    for (weight, v) in ensemble {
        for at in 0..da_t {
            for b in 0..db {
                for atp in 0..da_t {
                    for bp in 0..db {
                        let mut acc = C64::new(0.0, 0.0);
                        for a in 0..da {
                            for f in 0..df {
                                let row = ((at * da + a) * db + b) * df + f;
                                let col = ((atp * da + a) * db + bp) * df + f;
                                acc += v[row] * v[col].conj();
                            }
                        }
                        out[(at * db + b, atp * db + bp)] += acc * C64::new(*weight, 0.0);
                    }
                }
            }
        }
    }
    MultipartiteOperator::new(out, vec![da_t, db]).expect("dims agree")
}

fn evolve_ensemble(
    model: &ToyTransmissionModel,
    terms: &[(SwitchingPulse, DMatrix<C64>)],
    initial: &[(f64, DVector<C64>)],
    grid: &TimeGrid,
    lambda_scale: f64,
    steps: usize,
) -> Vec<(f64, DVector<C64>)> {
    let dim = model.total_dim();
    let h = (grid.t_max - grid.t_min) / steps as f64;
    let gauss_offset = 0.288675134594812882 * h; // sqrt(3)/6 h
    let mut ensemble: Vec<(f64, DVector<C64>)> = initial.to_vec();
    let mut h1 = DMatrix::<C64>::zeros(dim, dim);
    let mut h2 = DMatrix::<C64>::zeros(dim, dim);
    let mut x = DMatrix::<C64>::zeros(dim, dim);
    for step in 0..steps {
        let mid = grid.t_min + (step as f64 + 0.5) * h;
        let (t1, t2) = (mid - gauss_offset, mid + gauss_offset);
        h1.fill(C64::new(0.0, 0.0));
        h2.fill(C64::new(0.0, 0.0));
        for (pulse, g) in terms {
            let f1 = pulse.eval(t1) * lambda_scale;
            let f2 = pulse.eval(t2) * lambda_scale;
            h1.zip_apply(g, |acc, gv| *acc += gv * C64::new(f1, 0.0));
            h2.zip_apply(g, |acc, gv| *acc += gv * C64::new(f2, 0.0));
        }
        // first exponential weights the early node, second the late one
        let phase = C64::new(0.0, -h);
        x.zip_zip_apply(&h1, &h2, |acc, a, b| {
            *acc = phase * (a * C64::new(CF4_EARLY, 0.0) + b * C64::new(CF4_LATE, 0.0))
        });
        for (_, v) in ensemble.iter_mut() {
            *v = expm_apply(&x, v);
        }
        x.zip_zip_apply(&h1, &h2, |acc, a, b| {
            *acc = phase * (a * C64::new(CF4_LATE, 0.0) + b * C64::new(CF4_EARLY, 0.0))
        });
        for (_, v) in ensemble.iter_mut() {
            *v = expm_apply(&x, v);
        }
    }
    ensemble
}

fn evolved_vectors(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    lambda_scale: f64,
) -> Result<(Vec<(f64, DVector<C64>)>, MultipartiteOperator)> {
    grid.check_covers(model)?;
    let terms = embedded_terms(model, true);
    let rho0 = model.initial_state();
    let (values, vectors) = rho0.hermitian_eigen();
    let mut initial = Vec::new();
    for k in 0..rho0.dim() {
        if values[k] > 1e-14 {
            initial.push((values[k], DVector::from(vectors.column(k).into_owned())));
        }
    }
    if terms.is_empty() || lambda_scale == 0.0 {
        let reduced = reduce_vectors(model, &initial);
        return Ok((initial, reduced));
    }

    let mut steps = grid.steps.max(64);
    let max_steps = 1 << 20;
    let mut ensemble = evolve_ensemble(model, &terms, &initial, grid, lambda_scale, steps);
    let mut reduced = reduce_vectors(model, &ensemble);
    loop {
        let steps2 = steps * 2;
        if steps2 > max_steps {
            return Err(Error::StepHalvingNonConvergence { residual: f64::NAN, steps });
        }
        let ensemble2 = evolve_ensemble(model, &terms, &initial, grid, lambda_scale, steps2);
        let reduced2 = reduce_vectors(model, &ensemble2);
        let diff = (&reduced2 - &reduced).max_abs_entry();
        ensemble = ensemble2;
        reduced = reduced2;
        steps = steps2;
        if diff <= 1e-10 {
            break;
        }
    }
    Ok((ensemble, reduced))
}

/// Non-perturbative reference evolution: time-ordered stepping with a
/// fourth-order commutator-free two-exponential scheme, step count doubled
/// from the grid's until the reduced state moves by at most 1e-10, then a
/// partial trace to `ÃB`. All couplings are multiplied by `lambda_scale`.
pub fn exact_evolve(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    lambda_scale: f64,
) -> Result<DensityMatrix> {
    let (_, reduced) = evolved_vectors(model, grid, lambda_scale)?;
    DensityMatrix::new(reduced, 1e-9)
}

/// As [`exact_evolve`] but returning the full `ÃABf` state.
pub fn exact_evolve_full(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    lambda_scale: f64,
) -> Result<DensityMatrix> {
    let (ensemble, _) = evolved_vectors(model, grid, lambda_scale)?;
    let dim = model.total_dim();
    let mut full = DMatrix::<C64>::zeros(dim, dim);
    for (w, v) in &ensemble {
        full += v * v.adjoint() * C64::new(*w, 0.0);
    }
    DensityMatrix::new(
        MultipartiteOperator::new(full, model.dims().to_vec())?,
        1e-9,
    )
}

/// One point of the coupling-scaling sweep.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ScalingPoint {
    pub lambda: f64,
    pub negativity: f64,
    pub min_pt_eigenvalue: f64,
}

/// Result of [`negativity_scaling`].
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Log-log slope of negativity against coupling over points with
    /// negativity above 1e-12; `None` when fewer than two qualify.
    pub exponent: Option<f64>,
    /// λ² coefficient of the degree-4 fit (through the λ = 0 value) of the
    /// minimal partial-transpose eigenvalue. The kernel statement bounds it
    /// from below by zero; the receiver's local noise makes it positive.
    pub quad_coeff_min_eigenvalue: f64,
    /// λ² coefficient of the same fit applied to `min(eigenvalue, 0)`: the
    /// perturbatively relevant negative part, predicted to vanish.
    pub quad_coeff_negative_part: f64,
    pub unperturbed_min_eigenvalue: f64,
}

/// Degree-4 polynomial least squares through the origin (basis λ..λ⁴ on
/// values with the λ = 0 baseline subtracted), returning the λ² coefficient.
fn quadratic_coefficient(lambdas: &[f64], values: &[f64], baseline: f64) -> Result<f64> {
    let scale = lambdas.iter().cloned().fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let rows = lambdas.len();
    let mut a = DMatrix::<f64>::zeros(rows, 4);
    let mut y = DVector::<f64>::zeros(rows);
    for (i, (&l, &v)) in lambdas.iter().zip(values).enumerate() {
        let x = l / scale;
        a[(i, 0)] = x;
        a[(i, 1)] = x * x;
        a[(i, 2)] = x * x * x;
        a[(i, 3)] = x * x * x * x;
        y[i] = v - baseline;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 || smax / smin > 1e10 {
        return Err(Error::FitIllConditioned(if smin > 0.0 { smax / smin } else { f64::INFINITY }));
    }
    let coeffs = svd.solve(&y, 0.0).map_err(|e| Error::FitIllConditioned({
        let _ = e;
        f64::INFINITY
    }))?;
    Ok(coeffs[1] / (scale * scale))
}

/// Exact-evolution scaling sweep: negativity and minimal partial-transpose
/// eigenvalue per coupling scale, the empirical log-log exponent, and the
/// λ² coefficients of the minimal-eigenvalue fits.
pub fn negativity_scaling(
    model: &ToyTransmissionModel,
    grid: &TimeGrid,
    lambdas: &[f64],
) -> Result<ScalingReport> {
    if lambdas.len() < 4 {
        return Err(Error::InvalidParameter("need at least 4 coupling values".into()));
    }
    if lambdas.iter().any(|&l| !(0.0..=0.1).contains(&l)) {
        return Err(Error::InvalidParameter(
            "coupling values must lie in [0, 0.1] for the perturbative sweep".into(),
        ));
    }
    let e0 = qstate::min_pt_eigenvalue(&model.initial_reduced(), 0)?;
    let points: Vec<ScalingPoint> = lambdas
        .par_iter()
        .map(|&lambda| -> Result<ScalingPoint> {
            let rho = exact_evolve(model, grid, lambda)?;
            Ok(ScalingPoint {
                lambda,
                negativity: rho.negativity(0)?,
                min_pt_eigenvalue: qstate::min_pt_eigenvalue(rho.op(), 0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let all_zero = lambdas.iter().all(|&l| l == 0.0);
    let (quad_raw, quad_neg) = if all_zero {
        (0.0, 0.0)
    } else {
        let ls: Vec<f64> = points.iter().map(|p| p.lambda).collect();
        let raw: Vec<f64> = points.iter().map(|p| p.min_pt_eigenvalue).collect();
        let neg: Vec<f64> = points.iter().map(|p| p.min_pt_eigenvalue.min(0.0)).collect();
        (
            quadratic_coefficient(&ls, &raw, e0)?,
            quadratic_coefficient(&ls, &neg, e0.min(0.0))?,
        )
    };
    let exponent = perturb::log_log_slope(
        &points.iter().map(|p| p.lambda).collect::<Vec<_>>(),
        &points.iter().map(|p| p.negativity).collect::<Vec<_>>(),
        1e-12,
    );
    Ok(ScalingReport {
        points,
        exponent,
        quad_coeff_min_eigenvalue: quad_raw,
        quad_coeff_negative_part: quad_neg,
        unperturbed_min_eigenvalue: e0,
    })
}
