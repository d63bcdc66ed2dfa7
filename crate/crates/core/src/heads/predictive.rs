use rand::Rng;

use crate::circmath::{expected_resultant_length, Angle, EPS_RESULTANT};
use crate::mixture::VonMisesMixture;
use crate::rng::rng_from_seed;
use crate::vonmises::VonMises;

/// Predictive density `p(φ | x)` produced by a head for one input.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDensity {
    VonMises(VonMises),
    Mixture(VonMisesMixture),
    /// Equal-weight average of decoded components, one per latent draw.
    MonteCarlo(VonMisesMixture),
}

impl PredictiveDensity {
    pub fn log_pdf(&self, phi: Angle) -> f64 {
        self.log_pdf_radians(phi.radians())
    }

    pub fn log_pdf_radians(&self, phi: f64) -> f64 {
        match self {
            PredictiveDensity::VonMises(d) => d.log_pdf_radians(phi),
            PredictiveDensity::Mixture(m) | PredictiveDensity::MonteCarlo(m) => m.log_pdf_radians(phi),
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Angle {
        match self {
            PredictiveDensity::VonMises(d) => d.sample_one(rng),
            PredictiveDensity::Mixture(m) | PredictiveDensity::MonteCarlo(m) => m.sample_one(rng),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Angle> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Components as a mixture view; a single von Mises becomes a
    /// one-component mixture.
    pub fn components(&self) -> Vec<(VonMises, f64)> {
        match self {
            PredictiveDensity::VonMises(d) => vec![(*d, 1.0)],
            PredictiveDensity::Mixture(m) | PredictiveDensity::MonteCarlo(m) => m
                .components()
                .iter()
                .copied()
                .zip(m.weights().iter().copied())
                .collect(),
        }
    }

    /// Mean direction of the density: `μ` for a von Mises, otherwise the
    /// direction of `Σ πⱼ A(κⱼ) (cos μⱼ, sin μⱼ)`. `None` when that vector
    /// vanishes (e.g. a uniform density).
    pub fn mean_direction(&self) -> Option<Angle> {
        if let PredictiveDensity::VonMises(d) = self {
            return (d.kappa() > 0.0).then(|| d.mu());
        }
        let (mut c, mut s) = (0.0, 0.0);
        for (d, w) in self.components() {
            let r = w * expected_resultant_length(d.kappa());
            c += r * d.mu().radians().cos();
            s += r * d.mu().radians().sin();
        }
        if c.hypot(s) < EPS_RESULTANT {
            None
        } else {
            Some(Angle::new(s.atan2(c)))
        }
    }
}

impl From<VonMises> for PredictiveDensity {
    fn from(d: VonMises) -> Self {
        PredictiveDensity::VonMises(d)
    }
}

impl From<VonMisesMixture> for PredictiveDensity {
    fn from(m: VonMisesMixture) -> Self {
        PredictiveDensity::Mixture(m)
    }
}
