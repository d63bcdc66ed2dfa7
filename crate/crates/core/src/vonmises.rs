//! The von Mises distribution on the circle.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circmath::{
    expected_resultant_length, kappa_mle_from_resultant, log_i0, Angle, KAPPA_MAX, LN_2PI,
};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::validation::adaptive_simpson;

/// Below this concentration the sampler draws uniformly.
const KAPPA_UNIFORM: f64 = 1e-8;

/// `vM(μ, κ)`: density `exp(κ cos(φ − μ)) / (2π I₀(κ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VonMisesParams", into = "VonMisesParams")]
pub struct VonMises {
    mu: Angle,
    kappa: f64,
    // log(2π I₀(κ))
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct VonMisesParams {
    mu: f64,
    kappa: f64,
}

impl TryFrom<VonMisesParams> for VonMises {
    type Error = Error;
    fn try_from(p: VonMisesParams) -> Result<Self> {
        VonMises::new(Angle::new(p.mu), p.kappa)
    }
}

impl From<VonMises> for VonMisesParams {
    fn from(d: VonMises) -> Self {
        VonMisesParams {
            mu: d.mu.radians(),
            kappa: d.kappa,
        }
    }
}

impl VonMises {
    pub fn new(mu: Angle, kappa: f64) -> Result<Self> {
        if kappa < 0.0 || kappa.is_nan() {
            return Err(Error::NegativeConcentration(kappa));
        }
        if kappa > KAPPA_MAX {
            return Err(Error::InvalidParameter(format!(
                "concentration {kappa} exceeds the cap {KAPPA_MAX}"
            )));
        }
        Ok(Self::new_unchecked(mu, kappa))
    }

    /// Uniform distribution on the circle.
    pub fn uniform() -> Self {
        Self::new_unchecked(Angle::ZERO, 0.0)
    }

    pub(crate) fn new_unchecked(mu: Angle, kappa: f64) -> Self {
        VonMises {
            mu,
            kappa,
            log_norm: LN_2PI + log_i0(kappa),
        }
    }

    #[inline]
    pub fn mu(&self) -> Angle {
        self.mu
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[doc(alias = "vm_log_pdf")]
    #[inline]
    pub fn log_pdf(&self, phi: Angle) -> f64 {
        self.log_pdf_radians(phi.radians())
    }

    /// Log-density at an unreduced angle; periodic in `phi`.
    #[inline]
    pub fn log_pdf_radians(&self, phi: f64) -> f64 {
        self.kappa * (phi - self.mu.radians()).cos() - self.log_norm
    }

    /// Draws one angle with the Best–Fisher wrapped-Cauchy rejection scheme.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Angle {
        let k = self.kappa;
        if k < KAPPA_UNIFORM {
            return Angle::new(rng.random::<f64>() * TAU);
        }
        let tau = 1.0 + (1.0 + 4.0 * k * k).sqrt();
        let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * k);
        let r = (1.0 + rho * rho) / (2.0 * rho);
        loop {
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let u3: f64 = rng.random();
            let z = (PI * u1).cos();
            let f = (1.0 + r * z) / (r + z);
            let c = k * (r - f);
            if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                let theta = f.clamp(-1.0, 1.0).acos();
                let theta = if u3 > 0.5 { theta } else { -theta };
                return Angle::new(self.mu.radians() + theta);
            }
        }
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    #[doc(alias = "vm_sample")]
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Angle> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// CDF by adaptive quadrature, integrating from `μ − π` to `phi`
    /// unwrapped into `[μ − π, μ + π)`.
    #[doc(alias = "vm_cdf_numeric")]
    pub fn cdf_numeric(&self, phi: Angle) -> f64 {
        self.cdf_unwrapped(self.mu.radians() + phi.signed_diff(self.mu))
    }

    /// CDF at a real abscissa `x ∈ [μ − π, μ + π]`; `x = μ + π` gives 1.
    pub fn cdf_unwrapped(&self, x: f64) -> f64 {
        let lo = self.mu.radians() - PI;
        let x = x.clamp(lo, lo + TAU);
        let pdf = |t: f64| self.log_pdf_radians(t).exp();
        adaptive_simpson(&pdf, lo, x, 1e-11)
    }

    /// Differential entropy `log(2π I₀(κ)) − κ A(κ)`.
    pub fn entropy(&self) -> f64 {
        self.log_norm - self.kappa * expected_resultant_length(self.kappa)
    }
}

/// Maximum-likelihood concentration for fixed predicted means.
///
/// The stationarity condition of `Σᵢ log vM(φᵢ; μᵢ, κ)` in `κ` is
/// `A(κ) = mean cos(φᵢ − μᵢ)`, so this inverts `A` and clamps to
/// `[0, KAPPA_MAX]`. The means are not refit.
pub fn select_fixed_kappa(mus: &[Angle], phis: &[Angle]) -> Result<f64> {
    if mus.is_empty() || phis.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mus.len() != phis.len() {
        return Err(Error::LengthMismatch {
            left: mus.len(),
            right: phis.len(),
        });
    }
    let mean_cos = mus
        .iter()
        .zip(phis)
        .map(|(m, p)| (p.radians() - m.radians()).cos())
        .sum::<f64>()
        / mus.len() as f64;
    if mean_cos <= 0.0 {
        Ok(0.0)
    } else if mean_cos >= 1.0 {
        Ok(KAPPA_MAX)
    } else {
        kappa_mle_from_resultant(mean_cos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circmath::circular_summary;
    use crate::validation::{
        ks_against_density, ks_critical_value, ks_statistic, trapezoid_circle, NORMALIZATION_GRID,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn vm(mu: f64, kappa: f64) -> VonMises {
        VonMises::new(Angle::new(mu), kappa).unwrap()
    }

    fn total_log_lik(mus: &[Angle], phis: &[Angle], kappa: f64) -> f64 {
        mus.iter()
            .zip(phis)
            .map(|(&m, &p)| VonMises::new_unchecked(m, kappa).log_pdf(p))
            .sum()
    }

    #[test]
    fn log_pdf_examples() {
        let d = vm(0.7, 0.0);
        for phi in [0.0, 1.0, 4.0] {
            assert!((d.log_pdf(Angle::new(phi)) + 1.837_877_066_409_345).abs() < 1e-12);
        }
        // 1 − log 2π − log I₀(1), extended precision
        let d = vm(2.0, 1.0);
        assert!((d.log_pdf(Angle::new(2.0)) - (-1.073_791_424_916_524_1)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(VonMises::new(Angle::ZERO, -1.0).is_err());
        assert!(VonMises::new(Angle::ZERO, f64::NAN).is_err());
        assert!(VonMises::new(Angle::ZERO, 2.0 * KAPPA_MAX).is_err());
    }

    #[test]
    fn normalized_over_kappa_range() {
        for kappa in [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0] {
            let d = vm(1.3, kappa);
            let z = trapezoid_circle(NORMALIZATION_GRID, |t| d.log_pdf_radians(t));
            assert!((z - 1.0).abs() < 1e-6, "kappa {kappa}: {z}");
        }
    }

    #[test]
    fn mode_is_mu() {
        let d = vm(2.2, 3.0);
        let n = 100_000;
        let best = (0..n)
            .map(|i| i as f64 * TAU / n as f64)
            .max_by(|a, b| d.log_pdf_radians(*a).total_cmp(&d.log_pdf_radians(*b)))
            .unwrap();
        assert!((best - 2.2).abs() <= TAU / n as f64);
    }

    #[test]
    fn uniform_samples_pass_ks() {
        let xs = VonMises::uniform().sample(1_000_000, 3);
        let mut r: Vec<f64> = xs.iter().map(|a| a.radians() / TAU).collect();
        r.sort_by(f64::total_cmp);
        assert!(ks_statistic(&r, |x| x) < 0.002);
    }

    #[test]
    fn sample_circular_mean() {
        let xs = vm(1.0, 4.0).sample(1_000_000, 5);
        let s = circular_summary(&xs).unwrap();
        assert!((s.mean.unwrap().radians() - 1.0).abs() < 0.005);
    }

    #[test]
    fn samples_at_cap_are_concentrated() {
        let d = vm(0.2, KAPPA_MAX);
        for phi in d.sample(100, 9) {
            assert!(crate::circmath::aad(phi, d.mu()) < 0.05);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = vm(4.0, 2.5);
        assert_eq!(d.sample(50, 17), d.sample(50, 17));
        assert_ne!(d.sample(50, 17), d.sample(50, 18));
    }

    #[test]
    fn sampler_matches_cdf_oracle() {
        let n = 100_000;
        for (i, kappa) in [0.5, 2.0, 10.0].into_iter().enumerate() {
            let d = vm(5.5, kappa);
            let xs: Vec<f64> = d.sample(n, 100 + i as u64).iter().map(|a| a.radians()).collect();
            let ks = ks_against_density(&xs, d.mu().radians() - PI, |t| d.log_pdf_radians(t).exp());
            assert!(ks < ks_critical_value(n, 0.01), "kappa {kappa}: {ks}");
        }
    }

    #[test]
    fn cdf_examples() {
        let d = vm(0.4, 3.0);
        assert!((d.cdf_unwrapped(0.4 + PI) - 1.0).abs() < 1e-8);
        assert!((d.cdf_numeric(Angle::new(0.4)) - 0.5).abs() < 1e-8);
        let u = vm(1.0, 0.0);
        for x in [0.0, 0.3, 1.7, 2.9] {
            let got = u.cdf_unwrapped(1.0 - PI + x);
            assert!((got - x / TAU).abs() < 1e-8);
        }
    }

    #[test]
    fn entropy_matches_quadrature() {
        let d = vm(0.0, 5.0);
        let h = -crate::validation::adaptive_simpson(
            &|t: f64| d.log_pdf_radians(t).exp() * d.log_pdf_radians(t),
            -PI,
            PI,
            1e-12,
        );
        assert!((d.entropy() - h).abs() < 1e-9);
    }

    #[test]
    fn fixed_kappa_examples() {
        let mus: Vec<Angle> = (0..10).map(|i| Angle::new(i as f64 * 0.6)).collect();
        assert_eq!(select_fixed_kappa(&mus, &mus).unwrap(), KAPPA_MAX);

        // residuals ±π/2 have zero mean cosine
        let phis: Vec<Angle> = mus
            .iter()
            .enumerate()
            .map(|(i, m)| Angle::new(m.radians() + if i % 2 == 0 { 1.0 } else { -1.0 } * PI / 2.0))
            .collect();
        assert!(select_fixed_kappa(&mus, &phis).unwrap() < 1e-12);

        let phis: Vec<Angle> = mus.iter().map(|m| Angle::new(m.radians() + PI / 3.0)).collect();
        let k = select_fixed_kappa(&mus, &phis).unwrap();
        assert!((k - 1.159_319_920_750_138_4).abs() < 1e-8);

        assert!(matches!(select_fixed_kappa(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(
            select_fixed_kappa(&mus, &phis[..3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn symmetric_about_mu(mu in 0.0..TAU, kappa in 0.0..50.0f64, delta in 0.0..PI) {
            let d = VonMises::new(Angle::new(mu), kappa).unwrap();
            let a = d.log_pdf(Angle::new(mu + delta));
            let b = d.log_pdf(Angle::new(mu - delta));
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn fixed_kappa_is_maximal(seed in 0u64..1000, spread in 0.1..3.0f64) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mus: Vec<Angle> = (0..40).map(|_| Angle::new(rng.random::<f64>() * TAU)).collect();
            let phis: Vec<Angle> = mus
                .iter()
                .map(|m| Angle::new(m.radians() + spread * (rng.random::<f64>() - 0.5)))
                .collect();
            let k = select_fixed_kappa(&mus, &phis).unwrap();
            let best = total_log_lik(&mus, &phis, k);
            for scale in [0.95, 1.05] {
                let other = (k * scale).min(KAPPA_MAX);
                prop_assert!(total_log_lik(&mus, &phis, other) <= best + 1e-9);
            }
        }
    }
}
