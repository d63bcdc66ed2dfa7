//! Per-example losses and their derivatives with respect to head outputs.

use crate::circmath::{expected_resultant_length, log_i0, Angle, Biternion, LN_2PI};
use crate::error::{Error, Result};
use crate::mixture::VonMisesMixture;
use crate::neuralnet::LOGVAR_BOUND;
use crate::vonmises::VonMises;

/// `1 − y_pred · y_true`, in `[0, 2]`.
pub fn cosine_loss(pred: Biternion, truth: Biternion) -> f64 {
    1.0 - pred.dot(truth)
}

/// Negative von Mises log-likelihood `−κ cos(φ − μ) + log 2π + log I₀(κ)`.
pub fn vm_nll(mu: Angle, kappa: f64, phi: Angle) -> f64 {
    -kappa * (phi.radians() - mu.radians()).cos() + LN_2PI + log_i0(kappa)
}

/// Negative log-density of the mixture assembled from per-component
/// means, concentrations and weights.
pub fn mixture_nll(means: &[Angle], kappas: &[f64], weights: &[f64], phi: Angle) -> Result<f64> {
    if means.len() != kappas.len() {
        return Err(Error::LengthMismatch {
            left: means.len(),
            right: kappas.len(),
        });
    }
    let comps = means
        .iter()
        .zip(kappas)
        .map(|(&m, &k)| VonMises::new(m, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(-VonMisesMixture::new(comps, weights.to_vec())?.log_pdf(phi))
}

/// vM negative log-likelihood in biternion form together with its partial
/// derivatives `(nll, ∂/∂c, ∂/∂s, ∂/∂κ)`; `(c, s)` is the unit mean and
/// `(cos φ, sin φ)` the target.
#[inline]
pub(crate) fn vm_nll_biternion(c: f64, s: f64, kappa: f64, cos_phi: f64, sin_phi: f64) -> (f64, f64, f64, f64) {
    let align = c * cos_phi + s * sin_phi;
    let nll = -kappa * align + LN_2PI + log_i0(kappa);
    (
        nll,
        -kappa * cos_phi,
        -kappa * sin_phi,
        expected_resultant_length(kappa) - align,
    )
}

/// Mixture NLL on a mapped mixture row (see `OutputMap::Mixture`), writing
/// the gradient w.r.t. that row into `grad` when given.
pub(crate) fn mixture_nll_row(row: &[f64], k: usize, cos_phi: f64, sin_phi: f64, grad: Option<&mut [f64]>) -> f64 {
    let mut comp = [0.0f64; 32];
    let mut heap;
    let comp: &mut [f64] = if k <= comp.len() {
        &mut comp[..k]
    } else {
        heap = vec![0.0; k];
        &mut heap
    };
    let mut max = f64::NEG_INFINITY;
    for j in 0..k {
        let (c, s, kappa) = (row[2 * j], row[2 * j + 1], row[2 * k + j]);
        // log vM_j(φ)
        comp[j] = kappa * (c * cos_phi + s * sin_phi) - LN_2PI - log_i0(kappa);
        let t = comp[j] + row[3 * k + j].ln();
        max = max.max(t);
    }
    let sum: f64 = (0..k).map(|j| (comp[j] + row[3 * k + j].ln() - max).exp()).sum();
    let log_mix = max + sum.ln();
    if let Some(g) = grad {
        for j in 0..k {
            let (c, s, kappa, w) = (row[2 * j], row[2 * j + 1], row[2 * k + j], row[3 * k + j]);
            // ∂(−log mix)/∂π_j = −p_j/mix, written without dividing by π_j
            let ratio = (comp[j] - log_mix).exp();
            let resp = w * ratio;
            g[2 * j] = -resp * kappa * cos_phi;
            g[2 * j + 1] = -resp * kappa * sin_phi;
            g[2 * k + j] = resp * (expected_resultant_length(kappa) - (c * cos_phi + s * sin_phi));
            g[3 * k + j] = -ratio;
        }
    }
    -log_mix
}

/// Diagonal Gaussian `N(mean, diag(exp(log_var)))` over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl LatentGaussian {
    /// Log-variances are clamped into `[−10, 10]`, the range the
    /// network's Gaussian output map produces.
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::DimensionMismatch {
                left: mean.len(),
                right: log_var.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) || log_var.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("latent Gaussian entries must be finite".into()));
        }
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(-LOGVAR_BOUND, LOGVAR_BOUND))
            .collect();
        Ok(LatentGaussian { mean, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        LatentGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        gaussian_log_density(&self.mean, &self.log_var, z)
    }
}

pub(crate) fn gaussian_log_density(mean: &[f64], log_var: &[f64], z: &[f64]) -> f64 {
    const LN_2PI_HALF: f64 = 0.5 * LN_2PI;
    mean.iter()
        .zip(log_var)
        .zip(z)
        .map(|((m, lv), z)| -LN_2PI_HALF - 0.5 * lv - 0.5 * (z - m) * (z - m) * (-lv).exp())
        .sum()
}

/// Closed-form `KL(q ‖ p)` between diagonal Gaussians.
pub fn gaussian_kl(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            left: q.dim(),
            right: p.dim(),
        });
    }
    Ok(kl_with_grad(&q.mean, &q.log_var, &p.mean, &p.log_var, None))
}

/// Gradient slots, in order: `∂/∂μ_q, ∂/∂logvar_q, ∂/∂μ_p, ∂/∂logvar_p`.
pub(crate) type KlGrad<'a> = (&'a mut [f64], &'a mut [f64], &'a mut [f64], &'a mut [f64]);

pub(crate) fn kl_with_grad(mq: &[f64], lq: &[f64], mp: &[f64], lp: &[f64], grad: Option<KlGrad<'_>>) -> f64 {
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let inv_vp = (-lp[i]).exp();
        let vq = lq[i].exp();
        let diff = mq[i] - mp[i];
        kl += 0.5 * (lp[i] - lq[i] + (vq + diff * diff) * inv_vp - 1.0);
    }
    if let Some((gmq, glq, gmp, glp)) = grad {
        for i in 0..mq.len() {
            let inv_vp = (-lp[i]).exp();
            let vq = lq[i].exp();
            let diff = mq[i] - mp[i];
            gmq[i] = diff * inv_vp;
            gmp[i] = -diff * inv_vp;
            glq[i] = 0.5 * (vq * inv_vp - 1.0);
            glp[i] = 0.5 * (1.0 - (vq + diff * diff) * inv_vp);
        }
    }
    kl
}

/// `μ + σ ⊙ ε` for standard-normal `noise`.
pub fn reparam_sample(g: &LatentGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            left: g.dim(),
            right: noise.len(),
        });
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circmath::angle_to_biternion;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn b(phi: f64) -> Biternion {
        angle_to_biternion(Angle::new(phi))
    }

    #[test]
    fn cosine_loss_examples() {
        assert!(cosine_loss(b(0.7), b(0.7)).abs() < 1e-15);
        assert!((cosine_loss(b(0.7), b(0.7 + PI)) - 2.0).abs() < 1e-15);
        assert!((cosine_loss(b(0.7), b(0.7 + PI / 2.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vm_nll_examples() {
        let a = Angle::new(1.1);
        assert!((vm_nll(a, 1.0, a) - 1.073_791_424_916_524_1).abs() < 1e-12);
        assert!((vm_nll(a, 1e-12, Angle::new(4.0)) - LN_2PI).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn unit_kappa_nll_is_cosine_plus_constant(mu in 0.0..TAU, phi in 0.0..TAU) {
            let c = vm_nll(Angle::new(mu), 1.0, Angle::new(phi)) - cosine_loss(b(mu), b(phi));
            let expected = LN_2PI + log_i0(1.0) - 1.0;
            prop_assert!((c - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_nll_examples() {
        let m = Angle::new(0.4);
        let phi = Angle::new(2.0);
        let single = mixture_nll(&[m], &[3.0], &[1.0], phi).unwrap();
        assert!((single - vm_nll(m, 3.0, phi)).abs() < 1e-12);
        let uniform = mixture_nll(&[m, Angle::new(1.0)], &[0.0, 0.0], &[0.3, 0.7], phi).unwrap();
        assert!((uniform - LN_2PI).abs() < 1e-12);
        let split = mixture_nll(&[m, m], &[3.0, 3.0], &[0.25, 0.75], phi).unwrap();
        assert!((split - single).abs() < 1e-12);
        assert!(mixture_nll(&[m], &[3.0, 1.0], &[1.0], phi).is_err());
    }

    #[test]
    fn mixture_row_matches_assembled_mixture() {
        let k = 3;
        let means = [0.3f64, 2.0, 4.5];
        let kappas = [1.0, 20.0, 0.5];
        let weights = [0.2, 0.5, 0.3];
        let mut row = vec![0.0; 4 * k];
        for j in 0..k {
            row[2 * j] = means[j].cos();
            row[2 * j + 1] = means[j].sin();
            row[2 * k + j] = kappas[j];
            row[3 * k + j] = weights[j];
        }
        let phi = 1.7f64;
        let got = mixture_nll_row(&row, k, phi.cos(), phi.sin(), None);
        let want = mixture_nll(
            &means.map(Angle::new),
            &kappas,
            &weights,
            Angle::new(phi),
        )
        .unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let q = LatentGaussian::new(vec![0.3, -1.0], vec![0.2, -0.5]).unwrap();
        assert!(gaussian_kl(&q, &q).unwrap().abs() < 1e-15);

        let q = LatentGaussian::new(vec![1.0, 2.0, -2.0], vec![0.0; 3]).unwrap();
        let p = LatentGaussian::standard(3);
        assert!((gaussian_kl(&q, &p).unwrap() - 4.5).abs() < 1e-12);

        let q = LatentGaussian::new(vec![0.5, 0.0], vec![1.0, -2.0]).unwrap();
        let p = LatentGaussian::new(vec![-0.3, 0.4], vec![-0.5, 0.7]).unwrap();
        let qp = gaussian_kl(&q, &p).unwrap();
        let pq = gaussian_kl(&p, &q).unwrap();
        assert!(qp >= 0.0 && pq >= 0.0);
        assert!((qp - pq).abs() > 1e-3);

        assert!(matches!(
            gaussian_kl(&q, &LatentGaussian::standard(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let base = [0.4, -0.2, 0.8, -1.1];
        let f = |v: &[f64]| kl_with_grad(&v[0..1], &v[1..2], &v[2..3], &v[3..4], None);
        let (mut a, mut b, mut c, mut d) = ([0.0], [0.0], [0.0], [0.0]);
        kl_with_grad(&base[0..1], &base[1..2], &base[2..3], &base[3..4], Some((&mut a, &mut b, &mut c, &mut d)));
        let analytic = [a[0], b[0], c[0], d[0]];
        for i in 0..4 {
            let mut up = base;
            let mut dn = base;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let num = (f(&up) - f(&dn)) / 2e-6;
            assert!((num - analytic[i]).abs() < 1e-8, "{i}");
        }
    }

    #[test]
    fn reparam_examples() {
        let g = LatentGaussian::new(vec![0.5, -1.0], vec![0.3, 1.2]).unwrap();
        assert_eq!(reparam_sample(&g, &[0.0, 0.0]).unwrap(), vec![0.5, -1.0]);

        let eps = [0.7, -1.3];
        let one = reparam_sample(&g, &eps).unwrap();
        let two = reparam_sample(&g, &eps.map(|e| 2.0 * e)).unwrap();
        for i in 0..2 {
            let sigma = (0.5 * g.log_var()[i]).exp();
            assert!((two[i] - one[i] - sigma * eps[i]).abs() < 1e-12);
        }

        let collapsed = LatentGaussian::new(vec![0.5], vec![f64::NEG_INFINITY]).unwrap();
        assert_eq!(collapsed.log_var()[0], -LOGVAR_BOUND);
        let z = reparam_sample(&collapsed, &[1.0]).unwrap();
        assert!((z[0] - 0.5).abs() <= 1.000_001 * (-5.0f64).exp());

        assert!(reparam_sample(&g, &[1.0]).is_err());
    }
}
