//! Smeared Wightman function of the scalar vacuum in (d+1)-dimensional
//! Minkowski spacetime and the second-order detector coefficients `L_ij`
//! and `M` for inertial detectors with Gaussian switching and smearing.
//!
//! After the angular integral, the momentum integral reduces to a single
//! radial quadrature with Gaussian ultraviolet damping
//! `exp(-(σ_i² + σ_j²) k² / 2)`:
//!
//! - d = 3: `W = 1/(4π²) ∫ dk (k²/ω) sinc(kr) e^{-iωΔt} damp`
//! - d = 2: `W = 1/(4π)  ∫ dk (k/ω)  J0(kr)  e^{-iωΔt} damp`
//! - d = 1: `W = 1/(2π)  ∫ dk (1/ω)  cos(kr) e^{-iωΔt} damp` (m > 0 only)
//!
//! `L_ij` is evaluated as the literal double time integral over the
//! switching windows with `W` computed pointwise. `M` is evaluated in
//! rotated coordinates `u = t - t'`, `v = t + t'`: the `v` integral of the
//! Gaussian windows is done in closed form and only the `u` integral is
//! numerical, which tames the oscillatory phase. Every result carries its
//! quadrature error estimate.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};
use crate::quad::{self, QuadResult};

/// Scalar field in the (d+1)-dimensional Minkowski vacuum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldModel {
    pub spatial_dimension: usize,
    pub mass: f64,
}

impl FieldModel {
    pub fn new(spatial_dimension: usize, mass: f64) -> Result<Self> {
        if !(1..=3).contains(&spatial_dimension) {
            return Err(Error::InvalidParameter(format!(
                "spatial dimension must be 1, 2 or 3, got {spatial_dimension}"
            )));
        }
        if !(mass >= 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be >= 0, got {mass}")));
        }
        Ok(Self { spatial_dimension, mass })
    }
}

impl Default for FieldModel {
    fn default() -> Self {
        Self { spatial_dimension: 3, mass: 0.0 }
    }
}

/// One inertial detector: coupling, gap, position, Gaussian switching
/// window `exp(-(t - t0)²/2T²)` and Gaussian smearing of width `σ`
/// normalized so that its Fourier transform is 1 at `k = 0`
/// (`σ = 0` means pointlike).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorParams {
    pub label: String,
    pub coupling: f64,
    pub gap: f64,
    pub position: Vec<f64>,
    pub switching_center: f64,
    pub switching_width: f64,
    pub smearing_width: f64,
}

impl DetectorParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        coupling: f64,
        gap: f64,
        position: Vec<f64>,
        switching_center: f64,
        switching_width: f64,
        smearing_width: f64,
    ) -> Result<Self> {
        if !(coupling >= 0.0) {
            return Err(Error::InvalidParameter("coupling must be >= 0".into()));
        }
        if !(switching_width > 0.0) {
            return Err(Error::InvalidParameter("switching width must be > 0".into()));
        }
        if !(smearing_width >= 0.0) {
            return Err(Error::InvalidParameter("smearing width must be >= 0".into()));
        }
        if !gap.is_finite() || position.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("gap and position must be finite".into()));
        }
        Ok(Self {
            label: label.into(),
            coupling,
            gap,
            position,
            switching_center,
            switching_width,
            smearing_width,
        })
    }

    /// Gaussian switching window, amplitude 1 at the center.
    pub fn switching(&self, t: f64) -> f64 {
        let x = (t - self.switching_center) / self.switching_width;
        (-0.5 * x * x).exp()
    }
}

/// Cutoffs and tolerances for the quadrature pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Momentum cutoff at `k_max_multiplier / σ_eff`, `σ_eff = sqrt((σ_i²+σ_j²)/2)`.
    pub k_max_multiplier: f64,
    /// Time windows extend `time_window_multiplier` switching widths around the centers.
    pub time_window_multiplier: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            k_max_multiplier: 8.0,
            time_window_multiplier: 8.0,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_segments: 512,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k_max_multiplier > 0.0
            && self.time_window_multiplier > 0.0
            && self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_segments >= 4;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("quadrature config fields must be positive".into()))
        }
    }
}

fn spatial_separation(a: &DetectorParams, b: &DetectorParams, d: usize) -> Result<f64> {
    if a.position.len() != d || b.position.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "positions have lengths {} and {}, field has d = {}",
            a.position.len(),
            b.position.len(),
            d
        )));
    }
    Ok(a.position
        .iter()
        .zip(&b.position)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 * (1.0 - x * x / 20.0)
    } else {
        x.sin() / x
    }
}

/// Smeared two-point function reduced to a radial integral; `s2 = σ_i² + σ_j²`.
fn wightman_radial(
    model: &FieldModel,
    s2: f64,
    r: f64,
    dt: f64,
    cfg: &QuadratureConfig,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    if s2 <= 0.0 {
        return Err(Error::UndampedUltraviolet);
    }
    if model.spatial_dimension == 1 && model.mass == 0.0 {
        return Err(Error::InfraredDivergent);
    }
    let sigma_eff = (0.5 * s2).sqrt();
    let k_max = cfg.k_max_multiplier / sigma_eff;
    let m = model.mass;
    let d = model.spatial_dimension;
    let prefactor = match d {
        3 => 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI),
        2 => 1.0 / (4.0 * std::f64::consts::PI),
        _ => 1.0 / (2.0 * std::f64::consts::PI),
    };
    let f = move |k: f64| -> C64 {
        let omega = (k * k + m * m).sqrt();
        let damp = (-0.5 * s2 * k * k).exp();
        let geom = match d {
            3 => {
                let radial = if m == 0.0 { k } else { k * k / omega };
                radial * sinc(k * r)
            }
            2 => {
                let radial = if m == 0.0 { 1.0 } else { k / omega };
                radial * bessel::j0(k * r)
            }
            _ => (k * r).cos() / omega,
        };
        C64::from_polar(geom * damp, -omega * dt)
    };
    let mut result = quad::integrate(f, 0.0, k_max, rel_tol, abs_tol, cfg.max_segments)?;
    result.value *= prefactor;
    result.error *= prefactor;
    Ok(result)
}

/// Smeared Wightman function `W(t, x_i; t', x_j)` between two detector
/// worldline points. Fails for two pointlike detectors (no ultraviolet
/// damping) and for `d = 1, m = 0` (infrared divergent).
pub fn smeared_wightman(
    model: &FieldModel,
    det_i: &DetectorParams,
    det_j: &DetectorParams,
    t: f64,
    t_prime: f64,
    cfg: &QuadratureConfig,
) -> Result<C64> {
    cfg.validate()?;
    let s2 = det_i.smearing_width.powi(2) + det_j.smearing_width.powi(2);
    let r = spatial_separation(det_i, det_j, model.spatial_dimension)?;
    Ok(wightman_radial(model, s2, r, t - t_prime, cfg, cfg.rel_tol, cfg.abs_tol)?.value)
}

/// `L_ij = λ_i λ_j ∬ dt dt' χ_i(t) χ_j(t') e^{-i(Ω_i t - Ω_j t')} W(t, x_i; t', x_j)`
/// by nested adaptive quadrature in rotated coordinates `u = t - t'`,
/// `v = t + t'`: the detectors are inertial, so `W` depends on `u` alone and
/// is evaluated once per outer node from the radial reduction, while the
/// inner `v` integral runs over the product of the switching windows.
pub fn compute_l(
    model: &FieldModel,
    det_i: &DetectorParams,
    det_j: &DetectorParams,
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    cfg.validate()?;
    let s2 = det_i.smearing_width.powi(2) + det_j.smearing_width.powi(2);
    let r = spatial_separation(det_i, det_j, model.spatial_dimension)?;
    let (ci, ti, oi) = (det_i.switching_center, det_i.switching_width, det_i.gap);
    let (cj, tj, oj) = (det_j.switching_center, det_j.switching_width, det_j.gap);
    // the v window follows the product of the two Gaussians at fixed u
    let (w1, w2) = (2.0 * ti, 2.0 * tj);
    let wbar = w1 * w2 / (w1 * w1 + w2 * w2).sqrt();
    let dc = ci - cj;
    let u_half = cfg.time_window_multiplier * (ti * ti + tj * tj).sqrt();
    let (u_lo, u_hi) = (dc - u_half, dc + u_half);

    let w_rel = cfg.rel_tol * 1e-2;
    let w_abs = cfg.abs_tol * 1e-2;
    let inner_rel = cfg.rel_tol * 0.1;
    let inner_abs = cfg.abs_tol * 0.1;

    let worst_w_err = std::cell::Cell::new(0.0f64);
    let worst_inner_err = std::cell::Cell::new(0.0f64);
    let evals = std::cell::Cell::new(0usize);
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);

    let outer = quad::integrate(
        |u| {
            if failure.borrow().is_some() {
                return C64::new(0.0, 0.0);
            }
            let w = match wightman_radial(model, s2, r, u, cfg, w_rel, w_abs) {
                Ok(w) => {
                    worst_w_err.set(worst_w_err.get().max(w.error));
                    evals.set(evals.get() + w.evaluations);
                    w.value
                }
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    return C64::new(0.0, 0.0);
                }
            };
            let (c1, c2) = (2.0 * ci - u, 2.0 * cj + u);
            let cbar = (c1 * w2 * w2 + c2 * w1 * w1) / (w1 * w1 + w2 * w2);
            let span = cfg.time_window_multiplier * wbar;
            let inner = quad::integrate(
                |v| {
                    let t = 0.5 * (v + u);
                    let tp = 0.5 * (v - u);
                    C64::from_polar(
                        det_i.switching(t) * det_j.switching(tp),
                        -(oi * t - oj * tp),
                    )
                },
                cbar - span,
                cbar + span,
                inner_rel,
                inner_abs,
                cfg.max_segments,
            );
            match inner {
                Ok(res) => {
                    worst_inner_err.set(worst_inner_err.get().max(res.error));
                    w * res.value * 0.5 // Jacobian dt dt' = du dv / 2
                }
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        },
        u_lo,
        u_hi,
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.max_segments,
    );
    // a failure inside the integrand outranks the outer quadrature verdict
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let outer = outer?;

    let scale = det_i.coupling * det_j.coupling;
    // stack the nested error contributions conservatively
    let u_range = u_hi - u_lo;
    let error = scale
        * (outer.error
            + u_range * worst_inner_err.get()
            + u_range * 2.0 * cfg.time_window_multiplier * wbar * worst_w_err.get());
    Ok(QuadResult {
        value: outer.value * scale,
        error,
        evaluations: outer.evaluations + evals.get(),
    })
}

/// `∫ dv exp(-(v-c1)²/2w1²) exp(-(v-c2)²/2w2²) e^{iαv}` in closed form.
fn gaussian_pair_plane_wave(c1: f64, w1: f64, c2: f64, w2: f64, alpha: f64) -> C64 {
    let s = w1 * w1 + w2 * w2;
    let envelope = (-(c1 - c2) * (c1 - c2) / (2.0 * s)).exp();
    let wbar2 = w1 * w1 * w2 * w2 / s;
    let cbar = (c1 * w2 * w2 + c2 * w1 * w1) / s;
    let amp = envelope * (2.0 * std::f64::consts::PI * wbar2).sqrt() * (-0.5 * wbar2 * alpha * alpha).exp();
    C64::from_polar(amp, alpha * cbar)
}

/// `M = -λ_A λ_B ∫ dt ∫_{-∞}^t dt' [e^{i(Ω_A t + Ω_B t')} χ_A(t) χ_B(t') W(t,x_A;t',x_B)
/// + (A ↔ B)]`, computed in rotated coordinates `u = t - t' ≥ 0`, `v = t + t'`
/// with the `v` integral analytic per `u`.
pub fn compute_m(
    model: &FieldModel,
    det_a: &DetectorParams,
    det_b: &DetectorParams,
    cfg: &QuadratureConfig,
) -> Result<QuadResult> {
    cfg.validate()?;
    let s2 = det_a.smearing_width.powi(2) + det_b.smearing_width.powi(2);
    let r = spatial_separation(det_a, det_b, model.spatial_dimension)?;
    let (ca, ta, oa) = (det_a.switching_center, det_a.switching_width, det_a.gap);
    let (cb, tb, ob) = (det_b.switching_center, det_b.switching_width, det_b.gap);
    let alpha = 0.5 * (oa + ob);
    let u_max = (ca - cb).abs() + 2.0 * cfg.time_window_multiplier * (ta * ta + tb * tb).sqrt();

    let w_rel = cfg.rel_tol * 1e-2;
    let w_abs = cfg.abs_tol * 1e-2;
    let worst_w_err = std::cell::Cell::new(0.0f64);
    let worst_weight = std::cell::Cell::new(0.0f64);
    let evals = std::cell::Cell::new(0usize);
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);

    let result = quad::integrate(
        |u| {
            if failure.borrow().is_some() {
                return C64::new(0.0, 0.0);
            }
            let w = match wightman_radial(model, s2, r, u, cfg, w_rel, w_abs) {
                Ok(w) => {
                    worst_w_err.set(worst_w_err.get().max(w.error));
                    evals.set(evals.get() + w.evaluations);
                    w.value
                }
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    return C64::new(0.0, 0.0);
                }
            };
            // detector at the later time first; Jacobian dt dt' = du dv / 2
            let term_ab = C64::from_polar(0.5, 0.5 * (oa - ob) * u)
                * gaussian_pair_plane_wave(2.0 * ca - u, 2.0 * ta, 2.0 * cb + u, 2.0 * tb, alpha);
            let term_ba = C64::from_polar(0.5, 0.5 * (ob - oa) * u)
                * gaussian_pair_plane_wave(2.0 * cb - u, 2.0 * tb, 2.0 * ca + u, 2.0 * ta, alpha);
            let weight = term_ab + term_ba;
            worst_weight.set(worst_weight.get().max(weight.norm()));
            w * weight
        },
        0.0,
        u_max,
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.max_segments,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let result = result?;

    let scale = det_a.coupling * det_b.coupling;
    let error = scale * (result.error + u_max * worst_weight.get() * worst_w_err.get());
    Ok(QuadResult {
        value: -result.value * scale,
        error,
        evaluations: result.evaluations + evals.get(),
    })
}

/// The four integrals that determine the second-order two-detector state.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientRun {
    pub l_aa: QuadResult,
    pub l_bb: QuadResult,
    pub l_ab: QuadResult,
    pub m: QuadResult,
}

/// Evaluate `L_AA`, `L_BB`, `L_AB` and `M` for one detector pair.
pub fn compute_coefficients(
    model: &FieldModel,
    det_a: &DetectorParams,
    det_b: &DetectorParams,
    cfg: &QuadratureConfig,
) -> Result<CoefficientRun> {
    Ok(CoefficientRun {
        l_aa: compute_l(model, det_a, det_a, cfg)?,
        l_bb: compute_l(model, det_b, det_b, cfg)?,
        l_ab: compute_l(model, det_a, det_b, cfg)?,
        m: compute_m(model, det_a, det_b, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn det(label: &str, pos: Vec<f64>) -> DetectorParams {
        DetectorParams::new(label, 0.1, 1.0, pos, 0.0, 1.0, 0.5).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    // Frozen reference computed before the build with 22-digit arithmetic,
    // by closed-form erfc reduction and confirmed by a dense-trapezoid
    // cutoff-convergence study.
    const W_REF: (f64, f64) = (0.0090726855455860450, -0.0041277654573397427);
    // Same configuration as `det`, coincident positions: semi-analytic
    // Gaussian reduction, confirmed by 2D time quadrature.
    const L_REF: f64 = 6.4060169650955897e-5;
    // Separation 4 along x: rotated-coordinate integral, confirmed by a
    // dense 2D trapezoid over the triangular domain.
    const M_REF: (f64, f64) = (-4.5764039643942762e-5, 4.7294764587075938e-6);

    #[test]
    fn wightman_matches_frozen_radial_oracle() {
        let model = FieldModel::default();
        let a = det("i", vec![0.0, 0.0, 0.0]);
        let b = det("j", vec![2.0, 0.0, 0.0]);
        let w = smeared_wightman(&model, &a, &b, 1.0, 0.0, &cfg()).unwrap();
        assert_relative_eq!(w.re, W_REF.0, max_relative = 1e-7);
        assert_relative_eq!(w.im, W_REF.1, max_relative = 1e-7);
    }

    #[test]
    fn wightman_in_test_trapezoid_oracle_agrees() {
        // independent dense trapezoid over the same radial integrand
        let n = 200_000;
        let k_max = 40.0;
        let h = k_max / n as f64;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n {
            let k = i as f64 * h;
            let f = C64::from_polar((2.0 * k).sin() / 2.0 * (-0.25 * k * k).exp(), -k);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += f * w;
        }
        acc *= h / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
        assert_relative_eq!(acc.re, W_REF.0, max_relative = 1e-7);
        assert_relative_eq!(acc.im, W_REF.1, max_relative = 1e-7);
    }

    #[test]
    fn wightman_coincidence_limit_is_real_positive() {
        let model = FieldModel::default();
        let a = det("i", vec![0.0, 0.0, 0.0]);
        let w = smeared_wightman(&model, &a, &a, 0.3, 0.3, &cfg()).unwrap();
        assert!(w.re > 0.0);
        assert!(w.im.abs() < 1e-10 * w.re);
    }

    #[test]
    fn wightman_is_stationary() {
        let model = FieldModel::default();
        let a = det("i", vec![0.0, 0.0, 0.0]);
        let b = det("j", vec![1.0, -0.5, 0.25]);
        let w1 = smeared_wightman(&model, &a, &b, 0.7, 0.1, &cfg()).unwrap();
        let w2 = smeared_wightman(&model, &a, &b, 0.7 + 3.4, 0.1 + 3.4, &cfg()).unwrap();
        assert!((w1 - w2).norm() < 1e-8 * w1.norm());
    }

    #[test]
    fn wightman_hermiticity() {
        let model = FieldModel::default();
        let mut a = det("i", vec![0.0, 0.0, 0.0]);
        let mut b = det("j", vec![1.5, 0.0, 0.0]);
        a.smearing_width = 0.4;
        b.smearing_width = 0.7;
        let w_ij = smeared_wightman(&model, &a, &b, 0.9, -0.2, &cfg()).unwrap();
        let w_ji = smeared_wightman(&model, &b, &a, -0.2, 0.9, &cfg()).unwrap();
        assert!((w_ij - w_ji.conj()).norm() < 1e-8 * w_ij.norm());
    }

    #[test]
    fn wightman_rejects_undamped_and_infrared_cases() {
        let mut a = det("i", vec![0.0, 0.0, 0.0]);
        let mut b = det("j", vec![1.0, 0.0, 0.0]);
        a.smearing_width = 0.0;
        b.smearing_width = 0.0;
        let massless = FieldModel::default();
        assert!(matches!(
            smeared_wightman(&massless, &a, &b, 0.5, 0.0, &cfg()),
            Err(Error::UndampedUltraviolet)
        ));
        let line = FieldModel::new(1, 0.0).unwrap();
        let a1 = DetectorParams::new("i", 0.1, 1.0, vec![0.0], 0.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            smeared_wightman(&line, &a1, &a1, 0.5, 0.0, &cfg()),
            Err(Error::InfraredDivergent)
        ));
    }

    #[test]
    fn wightman_massive_and_lower_dimensions_run() {
        for (d, m) in [(3, 0.5), (2, 0.0), (2, 1.0), (1, 1.0)] {
            let model = FieldModel::new(d, m).unwrap();
            let a = DetectorParams::new("i", 0.1, 1.0, vec![0.0; d], 0.0, 1.0, 0.5).unwrap();
            let b = DetectorParams::new("j", 0.1, 1.0, {
                let mut p = vec![0.0; d];
                p[0] = 1.0;
                p
            }, 0.0, 1.0, 0.5)
            .unwrap();
            let w = smeared_wightman(&model, &a, &b, 0.4, -0.1, &cfg()).unwrap();
            assert!(w.norm().is_finite() && w.norm() > 0.0);
        }
    }

    #[test]
    fn l_matches_frozen_semi_analytic_oracle() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let run = compute_l(&model, &a, &a, &cfg()).unwrap();
        assert_relative_eq!(run.value.re, L_REF, max_relative = 1e-6);
        assert!(run.value.im.abs() < 1e-10 * run.value.re);
        assert!(run.error < 1e-5 * run.value.re + 1e-12);
    }

    #[test]
    fn l_identical_coincident_detectors_give_equal_cross_term() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![0.0, 0.0, 0.0]);
        let l_aa = compute_l(&model, &a, &a, &cfg()).unwrap();
        let l_ab = compute_l(&model, &a, &b, &cfg()).unwrap();
        assert!((l_aa.value - l_ab.value).norm() < 1e-8 * l_aa.value.norm());
    }

    #[test]
    fn l_vanishes_for_decoupled_detector() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let mut b = det("B", vec![1.0, 0.0, 0.0]);
        b.coupling = 0.0;
        let run = compute_l(&model, &a, &b, &cfg()).unwrap();
        assert_eq!(run.value, C64::new(0.0, 0.0));
    }

    #[test]
    fn l_conjugates_under_label_swap() {
        let model = FieldModel::default();
        let mut a = det("A", vec![0.0, 0.0, 0.0]);
        a.gap = 0.8;
        let mut b = det("B", vec![2.0, 0.0, 0.0]);
        b.gap = 1.3;
        let l_ab = compute_l(&model, &a, &b, &cfg()).unwrap();
        let l_ba = compute_l(&model, &b, &a, &cfg()).unwrap();
        assert!((l_ab.value - l_ba.value.conj()).norm() < 1e-7 * l_ab.value.norm());
    }

    #[test]
    fn m_matches_frozen_triangular_oracle() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![4.0, 0.0, 0.0]);
        let run = compute_m(&model, &a, &b, &cfg()).unwrap();
        assert_relative_eq!(run.value.re, M_REF.0, max_relative = 1e-6);
        assert_relative_eq!(run.value.im, M_REF.1, max_relative = 1e-6);
    }

    #[test]
    fn m_in_test_triangular_trapezoid_oracle_agrees() {
        // brute-force 2D trapezoid over t' < t of both orderings; W(u; 4) is
        // tabulated once per grid difference by composite Simpson in k
        let n = 1200;
        let lo = -8.0;
        let hi = 8.0;
        let h = (hi - lo) / n as f64;
        let w_table: Vec<C64> = (0..=n)
            .map(|d| {
                let u = d as f64 * h;
                let n_k = 60_000usize;
                let k_max = 30.0;
                let hk = k_max / n_k as f64;
                let f = |k: f64| C64::from_polar((4.0 * k).sin() * (-0.25 * k * k).exp(), -k * u);
                let mut acc = f(0.0) + f(k_max);
                for i in 1..n_k {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += f(i as f64 * hk) * w;
                }
                acc * (hk / 3.0) / (4.0 * std::f64::consts::PI * std::f64::consts::PI * 4.0)
            })
            .collect();
        let mut total = C64::new(0.0, 0.0);
        for i in 0..=n {
            let t = lo + i as f64 * h;
            let mut inner = C64::new(0.0, 0.0);
            for j in 0..=i {
                let tp = lo + j as f64 * h;
                let f = C64::from_polar(2.0 * (-0.5 * (t * t + tp * tp)).exp(), t + tp)
                    * w_table[i - j];
                let w = if j == 0 || j == i { 0.5 } else { 1.0 };
                inner += f * w;
            }
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += inner * (h * h * w);
        }
        let m_oracle = -total * 0.01;
        assert_relative_eq!(m_oracle.re, M_REF.0, max_relative = 1e-6);
        assert_relative_eq!(m_oracle.im, M_REF.1, max_relative = 1e-6);
    }

    #[test]
    fn m_vanishes_without_coupling() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let mut b = det("B", vec![1.0, 0.0, 0.0]);
        b.coupling = 0.0;
        assert_eq!(compute_m(&model, &a, &b, &cfg()).unwrap().value, C64::new(0.0, 0.0));
    }

    #[test]
    fn m_is_bilinear_in_couplings() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![2.0, 0.0, 0.0]);
        let m1 = compute_m(&model, &a, &b, &cfg()).unwrap().value;
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.coupling *= 2.0;
        b2.coupling *= 2.0;
        let m4 = compute_m(&model, &a2, &b2, &cfg()).unwrap().value;
        assert!((m4 - m1 * 4.0).norm() <= 1e-10 * m4.norm());
    }

    #[test]
    fn m_magnitude_symmetric_under_swap() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![3.0, 0.0, 0.0]);
        let m_ab = compute_m(&model, &a, &b, &cfg()).unwrap().value;
        let m_ba = compute_m(&model, &b, &a, &cfg()).unwrap().value;
        assert!((m_ab.norm() - m_ba.norm()).abs() < 1e-8 * m_ab.norm());
    }

    #[test]
    fn cutoff_doubling_is_stable() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![2.0, 0.0, 0.0]);
        let base = cfg();
        let mut wide = cfg();
        wide.k_max_multiplier *= 2.0;
        wide.time_window_multiplier *= 2.0;
        let l1 = compute_l(&model, &a, &b, &base).unwrap().value;
        let l2 = compute_l(&model, &a, &b, &wide).unwrap().value;
        assert!((l1 - l2).norm() <= 10.0 * base.rel_tol * l1.norm());
        let m1 = compute_m(&model, &a, &b, &base).unwrap().value;
        let m2 = compute_m(&model, &a, &b, &wide).unwrap().value;
        assert!((m1 - m2).norm() <= 10.0 * base.rel_tol * m1.norm());
    }

    #[test]
    fn gaussian_pair_plane_wave_matches_quadrature() {
        let (c1, w1, c2, w2, alpha) = (0.3, 1.2, -0.7, 0.8, 1.7);
        let numeric = quad::integrate(
            |v| {
                C64::from_polar(
                    (-0.5 * ((v - c1) / w1).powi(2) - 0.5 * ((v - c2) / w2).powi(2)).exp(),
                    alpha * v,
                )
            },
            -20.0,
            20.0,
            1e-12,
            1e-16,
            400,
        )
        .unwrap()
        .value;
        let closed = gaussian_pair_plane_wave(c1, w1, c2, w2, alpha);
        assert!((numeric - closed).norm() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_structure_of_coefficients() {
        let model = FieldModel::default();
        let a = det("A", vec![0.0, 0.0, 0.0]);
        let b = det("B", vec![1.5, 0.0, 0.0]);
        let run = compute_coefficients(&model, &a, &b, &cfg()).unwrap();
        let laa = run.l_aa.value.re;
        let lbb = run.l_bb.value.re;
        assert!(laa >= 0.0 && lbb >= 0.0);
        assert!(run.l_aa.value.im.abs() <= 1e-10 * laa);
        assert!(run.l_bb.value.im.abs() <= 1e-10 * lbb);
        assert!(run.l_ab.value.norm_sqr() <= laa * lbb * (1.0 + 1e-8));
    }
}
