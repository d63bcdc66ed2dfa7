//! Point prediction by minimizing expected angular loss, and the evaluation
//! metrics: MAAD, mean predictive log-likelihood, and the rotation-based
//! accuracy / median-error pair for viewpoint triples.

use std::f64::consts::{FRAC_PI_6, PI, TAU};

use crate::circmath::{aad, Angle};
use crate::error::{Error, Result};
use crate::heads::{PredictiveDensity, PredictiveModel};
use crate::neuralnet::Tensor;

/// The sample minimizing the empirical expected absolute angular deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub angle: Angle,
    /// Mean AAD from `angle` to all samples, in radians.
    pub expected_loss: f64,
    pub sample_count: usize,
}

/// Relative gap below which two candidate risks are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Draws `samples` angles from `d` and returns the draw with the smallest
/// mean AAD to the whole set; ties go to the earliest draw.
pub fn point_estimate(d: &PredictiveDensity, samples: usize, seed: u64) -> Result<PointEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("point_estimate needs at least one sample".into()));
    }
    point_estimate_from_samples(&d.sample(samples, seed))
}

/// Empirical risk minimizer over a fixed sample set.
pub fn point_estimate_from_samples(samples: &[Angle]) -> Result<PointEstimate> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = samples.len();
    let risks = sorted_risks(samples);
    let best = risks.iter().copied().fold(f64::INFINITY, f64::min);
    // The sorted sweep is only accurate to rounding; candidates near the
    // minimum are re-scored directly so the tie-break sees exact sums.
    let slack = 1e-9 * (1.0 + best);
    let near: Vec<(usize, f64)> = risks
        .iter()
        .enumerate()
        .filter(|(_, r)| **r <= best + slack)
        .map(|(j, _)| (j, samples.iter().map(|s| aad(samples[j], *s)).sum::<f64>()))
        .collect();
    let min = near.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    // Risks equal up to summation-order rounding count as ties.
    let tie = TIE_TOLERANCE * (1.0 + min);
    let (j, total) = *near.iter().find(|c| c.1 <= min + tie).expect("at least one candidate");
    Ok(PointEstimate {
        angle: samples[j],
        expected_loss: total / n as f64,
        sample_count: n,
    })
}

/// `Σ_k aad(s_j, s_k)` for every `j` (in input order), in `O(n log n)`.
fn sorted_risks(samples: &[Angle]) -> Vec<f64> {
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].radians().total_cmp(&samples[b].radians()));
    // sorted values unrolled once around the circle
    let w: Vec<f64> = order
        .iter()
        .map(|&i| samples[i].radians())
        .chain(order.iter().map(|&i| samples[i].radians() + TAU))
        .collect();
    let mut prefix = vec![0.0; 2 * n + 1];
    for k in 0..2 * n {
        prefix[k + 1] = prefix[k] + w[k];
    }
    let mut risks = vec![0.0; n];
    let mut hi = 0;
    for i in 0..n {
        let a = w[i];
        hi = hi.max(i);
        while hi + 1 < i + n && w[hi + 1] - a <= PI {
            hi += 1;
        }
        // w[i..=hi] lie ahead within π; w[hi+1..i+n] are closer going back
        let ahead = (prefix[hi + 1] - prefix[i]) - a * (hi + 1 - i) as f64;
        let behind = (a + TAU) * (i + n - 1 - hi) as f64 - (prefix[i + n] - prefix[hi + 1]);
        risks[order[i]] = ahead + behind;
    }
    risks
}

/// Sample mean with its standard error (sample standard deviation over
/// `√n`; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithError {
    pub mean: f64,
    pub sem: f64,
}

pub fn mean_and_sem(values: &[f64]) -> Result<MeanWithError> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sem = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(MeanWithError { mean, sem })
}

/// Mean absolute angular deviation in radians, with its standard error.
pub fn maad(estimates: &[Angle], truths: &[Angle]) -> Result<MeanWithError> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: truths.len(),
        });
    }
    let errs: Vec<f64> = estimates.iter().zip(truths).map(|(a, b)| aad(*a, *b)).collect();
    mean_and_sem(&errs)
}

/// Mean predictive log-density at the true angles, in nats.
pub fn mean_log_likelihood(model: &PredictiveModel, x: &Tensor, truths: &[Angle], seed: u64) -> Result<MeanWithError> {
    if truths.is_empty() {
        return Err(Error::EmptyInput);
    }
    mean_and_sem(&model.log_likelihoods(x, truths, seed)?)
}

/// Proper rotation in 3-D, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix([[f64; 3]; 3]);

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Checks `RᵀR = I` and `det R = 1` to within `1e-9`.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let r = RotationMatrix(m);
        let rtr = r.transpose().mul(&r);
        let orthonormal = (0..3).all(|i| (0..3).all(|j| (rtr.0[i][j] - f64::from(u8::from(i == j))).abs() <= 1e-9));
        if !orthonormal || (r.det() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("matrix is not a proper rotation".into()));
        }
        Ok(r)
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateVector { norm });
        }
        let [x, y, z] = axis.map(|v| v / norm);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Ok(RotationMatrix([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]))
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = &self.0;
        RotationMatrix(std::array::from_fn(|i| std::array::from_fn(|j| m[j][i])))
    }

    pub fn mul(&self, other: &RotationMatrix) -> RotationMatrix {
        let (a, b) = (&self.0, &other.0);
        RotationMatrix(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum())
        }))
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }
}

fn rot_z(t: f64) -> RotationMatrix {
    let (s, c) = t.sin_cos();
    RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

fn rot_x(t: f64) -> RotationMatrix {
    let (s, c) = t.sin_cos();
    RotationMatrix([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

/// `R_z(tilt) · R_x(elevation) · R_z(azimuth)`.
pub fn euler_to_rotmat(azimuth: Angle, elevation: Angle, tilt: Angle) -> RotationMatrix {
    rot_z(tilt.radians())
        .mul(&rot_x(elevation.radians()))
        .mul(&rot_z(azimuth.radians()))
}

/// Angle of the relative rotation `R1ᵀ R2`, in `[0, π]`.
pub fn geodesic_distance(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    let rel = r1.transpose().mul(r2);
    ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Fraction of geodesic errors below π/6 and their median in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewpointScores {
    pub accuracy: f64,
    pub median_error_degrees: f64,
}

/// Scores predicted (azimuth, elevation, tilt) triples against the truth.
/// The median of an even count is the mean of the two central values.
pub fn acc_med_err(predicted: &[[Angle; 3]], truth: &[[Angle; 3]]) -> Result<ViewpointScores> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut errs: Vec<f64> = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| geodesic_distance(&euler_to_rotmat(p[0], p[1], p[2]), &euler_to_rotmat(t[0], t[1], t[2])))
        .collect();
    let accuracy = errs.iter().filter(|e| **e < FRAC_PI_6).count() as f64 / errs.len() as f64;
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    };
    Ok(ViewpointScores {
        accuracy,
        median_error_degrees: median.to_degrees(),
    })
}
