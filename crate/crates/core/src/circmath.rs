//! Angle arithmetic, the biternion representation, Bessel-function evaluation
//! and circular summary statistics.
//!
//! Everything here is pure; angles are radians throughout and degrees only
//! appear at reporting boundaries.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on any concentration parameter handled by the crate.
pub const KAPPA_MAX: f64 = 1e4;
/// Vectors shorter than this cannot be projected onto the unit circle.
pub const EPS_NORM: f64 = 1e-12;
/// Resultant lengths below this leave the circular mean undefined.
pub const EPS_RESULTANT: f64 = 1e-9;
/// `log(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Concentrations at or below this use the power series for `I₀`/`I₁`,
/// above it the large-argument asymptotic expansion.
pub const BESSEL_SWITCH: f64 = 15.0;

/// An angle in radians, always stored in its canonical representative
/// in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Reduces `radians` modulo 2π.
    pub fn new(radians: f64) -> Self {
        let r = radians.rem_euclid(TAU);
        // rem_euclid rounds tiny negative inputs up to exactly 2π
        if r >= TAU {
            Angle(0.0)
        } else {
            Angle(r)
        }
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Self::new(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// Signed difference `self − other` mapped into `[−π, π)`.
    pub fn signed_diff(self, other: Angle) -> f64 {
        let d = (self.0 - other.0).rem_euclid(TAU);
        if d >= PI {
            d - TAU
        } else {
            d
        }
    }
}

impl From<f64> for Angle {
    fn from(radians: f64) -> Self {
        Angle::new(radians)
    }
}

/// Unit 2-vector `(cos φ, sin φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biternion {
    c: f64,
    s: f64,
}

impl Biternion {
    #[inline]
    pub fn cos(self) -> f64 {
        self.c
    }

    #[inline]
    pub fn sin(self) -> f64 {
        self.s
    }

    #[inline]
    pub fn dot(self, other: Biternion) -> f64 {
        self.c * other.c + self.s * other.s
    }
}

impl From<Angle> for Biternion {
    fn from(phi: Angle) -> Self {
        angle_to_biternion(phi)
    }
}

/// Maps an angle to its biternion `(cos φ, sin φ)`.
pub fn angle_to_biternion(phi: Angle) -> Biternion {
    let (s, c) = phi.radians().sin_cos();
    Biternion { c, s }
}

/// Inverse of [`angle_to_biternion`].
pub fn biternion_to_angle(b: Biternion) -> Angle {
    Angle::new(b.s.atan2(b.c))
}

/// Projects a raw 2-vector onto the unit circle.
///
/// Fails with [`Error::DegenerateVector`] when `‖v‖ ≤ EPS_NORM`, which in a
/// network output means the biternion layer has collapsed.
pub fn normalize2(x: f64, y: f64) -> Result<Biternion> {
    let norm = x.hypot(y);
    if !(norm > EPS_NORM) {
        return Err(Error::DegenerateVector { norm });
    }
    Ok(Biternion {
        c: x / norm,
        s: y / norm,
    })
}

/// Absolute angular deviation, `min(|a−b|, 2π−|a−b|)`, in `[0, π]`.
pub fn aad(a: Angle, b: Angle) -> f64 {
    let d = (a.radians() - b.radians()).abs();
    d.min(TAU - d)
}

/// Natural log of the modified Bessel function `I₀(κ)`.
pub fn log_bessel_i0(kappa: f64) -> Result<f64> {
    if kappa < 0.0 || kappa.is_nan() {
        return Err(Error::NegativeConcentration(kappa));
    }
    Ok(log_i0(kappa))
}

/// Unchecked `log I₀(κ)` for `κ ≥ 0`.
pub(crate) fn log_i0(kappa: f64) -> f64 {
    if kappa <= BESSEL_SWITCH {
        i0_series_minus_one(kappa).ln_1p()
    } else {
        kappa - 0.5 * (TAU * kappa).ln() + asymptotic_sum(kappa, 0.0).ln()
    }
}

/// `Σ_{k≥1} (κ²/4)^k / (k!)²`, i.e. `I₀(κ) − 1` without cancellation.
fn i0_series_minus_one(kappa: f64) -> f64 {
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..500 {
        let k = k as f64;
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `I₁(κ) / (κ/2)` from the power series.
fn i1_series_scaled(kappa: f64) -> f64 {
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        let k = k as f64;
        term *= q / (k * (k + 1.0));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Hankel expansion `Σ_k (−1)^k a_k(ν) / κ^k` of `I_ν(κ)·√(2πκ)·e^{−κ}`,
/// summed until terms drop below double precision or start to diverge.
fn asymptotic_sum(kappa: f64, nu: f64) -> f64 {
    let four_nu2 = 4.0 * nu * nu;
    let mut term = 1.0_f64;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * (odd * odd - four_nu2) / (8.0 * k as f64 * kappa);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Expected resultant length of a von Mises distribution,
/// `A(κ) = I₁(κ) / I₀(κ)`, which is also `d/dκ log I₀(κ)`.
pub fn expected_resultant_length(kappa: f64) -> f64 {
    if kappa <= 0.0 {
        0.0
    } else if kappa <= BESSEL_SWITCH {
        0.5 * kappa * i1_series_scaled(kappa) / (1.0 + i0_series_minus_one(kappa))
    } else {
        asymptotic_sum(kappa, 1.0) / asymptotic_sum(kappa, 0.0)
    }
}

/// `dA/dκ = 1 − A/κ − A²`, with the limit `1/2` at zero.
pub(crate) fn expected_resultant_length_derivative(kappa: f64) -> f64 {
    if kappa < 1e-6 {
        return 0.5 - 3.0 * kappa * kappa / 16.0;
    }
    let a = expected_resultant_length(kappa);
    1.0 - a / kappa - a * a
}

/// Maximum-likelihood concentration for a mean resultant length `R`,
/// i.e. the solution of `A(κ) = R`, saturating at [`KAPPA_MAX`].
pub fn kappa_mle_from_resultant(r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::ResultantOutOfRange(r));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    if r >= expected_resultant_length(KAPPA_MAX) {
        return Ok(KAPPA_MAX);
    }
    // Safeguarded Newton on the strictly increasing A(κ) − R.
    let (mut lo, mut hi) = (0.0, KAPPA_MAX);
    let mut kappa = initial_kappa_guess(r).clamp(1e-8, KAPPA_MAX);
    for _ in 0..200 {
        let f = expected_resultant_length(kappa) - r;
        if f == 0.0 {
            return Ok(kappa);
        }
        if f < 0.0 {
            lo = kappa;
        } else {
            hi = kappa;
        }
        let slope = expected_resultant_length_derivative(kappa);
        let mut next = kappa - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - kappa).abs() <= 1e-15 * kappa.max(1.0) {
            return Ok(next);
        }
        kappa = next;
    }
    Ok(kappa)
}

/// Piecewise rational approximation (Best & Fisher) used as a Newton start.
fn initial_kappa_guess(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    }
}

/// Circular mean direction and mean resultant length of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularSummary {
    /// `None` when the resultant is too short for a direction to exist.
    pub mean: Option<Angle>,
    pub resultant_length: f64,
    pub count: usize,
}

impl CircularSummary {
    pub fn mean(&self) -> Result<Angle> {
        self.mean
            .ok_or(Error::UndefinedMean(self.resultant_length))
    }
}

pub fn circular_summary(samples: &[Angle]) -> Result<CircularSummary> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut sc, mut ss) = (0.0, 0.0);
    for phi in samples {
        let (s, c) = phi.radians().sin_cos();
        sc += c;
        ss += s;
    }
    let n = samples.len();
    let resultant_length = (sc.hypot(ss) / n as f64).min(1.0);
    let mean = if resultant_length < EPS_RESULTANT {
        None
    } else {
        Some(Angle::new(ss.atan2(sc)))
    };
    Ok(CircularSummary {
        mean,
        resultant_length,
        count: n,
    })
}
