//! Bessel function J0, needed for the d = 2 radial reduction.
//!
//! Small arguments use the power series; large arguments use the Hankel
//! asymptotic expansion. Absolute accuracy is a few times 1e-10 near the
//! crossover at x = 18 and better elsewhere.

/// Hankel symbol magnitudes |(0,m)| = prod_{j<=m} (2j-1)^2 / (4j), paired
/// with powers of 1/(2x) in the expansion.
const A2: f64 = 9.0 / 32.0;
const A4: f64 = 3675.0 / 2048.0;
const A6: f64 = 2401245.0 / 65536.0;
const A1: f64 = 1.0 / 4.0;
const A3: f64 = 75.0 / 128.0;
const A5: f64 = 59535.0 / 8192.0;
const A7: f64 = 405810405.0 / 1835008.0;

pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 18.0 {
        // J0(x) = sum_k (-x^2/4)^k / (k!)^2
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        sum
    } else {
        let w = 1.0 / (2.0 * x);
        let w2 = w * w;
        let p = 1.0 - w2 * (A2 - w2 * (A4 - w2 * A6));
        let q = -w * (A1 - w2 * (A3 - w2 * (A5 - w2 * A7)));
        let chi = x - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}
