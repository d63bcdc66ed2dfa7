//! A fast invariant sweep, run by `vmreg selftest`.

use std::f64::consts::PI;

use crate::circmath::{aad, log_bessel_i0, Angle};
use crate::decision::{acc_med_err, point_estimate};
use crate::error::Result;
use crate::heads::{HeadKind, HeadLoss, HeadObjective, KappaSetting, LatentConfig, PredictiveDensity, PredictiveModel};
use crate::mixture::VonMisesMixture;
use crate::neuralnet::{finite_diff_check, loss_and_gradients, Activation, LayerSpec, Tensor};
use crate::rng::rng_from_seed;
use crate::validation::{ks_against_density, ks_critical_value, trapezoid_circle, NORMALIZATION_GRID};
use crate::vonmises::VonMises;

use super::data::Split;
use super::persist::{load_model, save_model};
use super::synthetic::{SyntheticKind, SyntheticSpec, SyntheticTask};
use super::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every check; a few seconds in release builds.
pub fn selftest() -> Vec<CheckOutcome> {
    vec![
        outcome("bessel", bessel()),
        outcome("normalization", normalization()),
        outcome("sampler", sampler()),
        outcome("gradients", gradients()),
        outcome("cosine-equivalence", cosine_equivalence()),
        outcome("decision-rule", decision_rule()),
        outcome("viewpoint-metrics", viewpoint_metrics()),
        outcome("persistence", persistence()),
    ]
}

fn bessel() -> Result<(bool, String)> {
    // 50-digit reference values
    let reference = [
        (1.0, 0.235_914_358_507_178_65),
        (15.0, 12.735_669_109_476_906),
        (50.0, 47.127_575_501_870_18),
        (700.0, 695.805_699_998_443_4),
    ];
    let mut worst: f64 = 0.0;
    for (k, want) in reference {
        worst = worst.max(((log_bessel_i0(k)? - want) / want).abs());
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.2e}")))
}

fn normalization() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for k in [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0] {
        let d = VonMises::new(Angle::new(1.0), k)?;
        worst = worst.max((trapezoid_circle(NORMALIZATION_GRID, |p| d.log_pdf_radians(p)) - 1.0).abs());
    }
    let m = VonMisesMixture::new(
        vec![VonMises::new(Angle::new(0.3), 40.0)?, VonMises::new(Angle::new(3.0), 0.7)?],
        vec![0.3, 0.7],
    )?;
    worst = worst.max((trapezoid_circle(NORMALIZATION_GRID, |p| m.log_pdf_radians(p)) - 1.0).abs());
    Ok((worst < 1e-6, format!("max |mass − 1| = {worst:.2e}")))
}

fn sampler() -> Result<(bool, String)> {
    let d = VonMises::new(Angle::new(2.5), 2.0)?;
    let n = 20_000;
    let mut s: Vec<f64> = d.sample(n, 17).iter().map(|a| a.radians()).collect();
    s.sort_by(f64::total_cmp);
    let stat = ks_against_density(&s, 0.0, |p| d.log_pdf_radians(p).exp());
    let crit = ks_critical_value(n, 0.01);
    Ok((stat < crit, format!("KS {stat:.4} vs critical {crit:.4}")))
}

fn small_batch(d: usize, n: usize) -> (Tensor, Vec<Angle>) {
    use rand::Rng;
    let mut rng = rng_from_seed(5);
    let x = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = (0..n).map(|_| Angle::new(rng.random_range(0.0..std::f64::consts::TAU))).collect();
    (Tensor::matrix(n, d, x).expect("finite"), t)
}

fn gradients() -> Result<(bool, String)> {
    let hidden = [LayerSpec::new(6, Activation::Tanh)];
    let (x, t) = small_batch(3, 5);
    let latent = LatentConfig {
        latent_dim: 2,
        train_samples: 2,
        eval_samples: 4,
    };
    let heads = [
        HeadKind::FixedKappa {
            kappa: KappaSetting::FitAfterTraining,
        },
        HeadKind::SingleVonMises,
        HeadKind::FiniteMixture { components: 3 },
        HeadKind::Cvae(latent),
        HeadKind::Scvae(latent),
    ];
    let mut worst: f64 = 0.0;
    for head in heads {
        let m = PredictiveModel::new(head, 3, &hidden, 1)?;
        worst = worst.max(finite_diff_check(m.networks(), &m.objective(&x, &t, 2)?, 1e-5)?);
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn cosine_equivalence() -> Result<(bool, String)> {
    let (x, t) = small_batch(3, 16);
    let head = HeadKind::FixedKappa {
        kappa: KappaSetting::Fixed(1.0),
    };
    let m = PredictiveModel::new(head, 3, &[LayerSpec::new(8, Activation::Relu)], 3)?;
    let (_, a) = loss_and_gradients(m.networks(), &HeadObjective::new(HeadLoss::Cosine, &x, &t, 0, 0)?)?;
    let (_, b) = loss_and_gradients(m.networks(), &HeadObjective::new(HeadLoss::FixedKappaNll(1.0), &x, &t, 0, 0)?)?;
    let gap = a[0].iter().zip(&b[0]).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    Ok((gap < 1e-8, format!("max gradient gap {gap:.2e}")))
}

fn decision_rule() -> Result<(bool, String)> {
    let d = PredictiveDensity::from(VonMises::new(Angle::new(2.0), 10.0)?);
    let mut hits = 0;
    for seed in 0..20 {
        if aad(point_estimate(&d, 1000, seed)?.angle, Angle::new(2.0)) < 0.05 {
            hits += 1;
        }
    }
    Ok((hits >= 19, format!("{hits}/20 estimates within 0.05 rad")))
}

fn viewpoint_metrics() -> Result<(bool, String)> {
    let truth = [[Angle::new(0.2), Angle::new(0.4), Angle::new(0.1)]; 4];
    let mut pred = truth;
    pred[1][0] = Angle::new(0.2 + PI);
    pred[3][0] = Angle::new(0.2 + PI);
    let s = acc_med_err(&pred, &truth)?;
    let ok = s.accuracy == 0.5 && (s.median_error_degrees - 90.0).abs() < 1e-6;
    Ok((ok, format!("Acc {} MedErr {:.3}°", s.accuracy, s.median_error_degrees)))
}

fn persistence() -> Result<(bool, String)> {
    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Unimodal, 1).with_dim(3))?;
    let cfg = TrainConfig {
        hidden: vec![LayerSpec::new(8, Activation::Tanh)],
        max_epochs: 2,
        patience: 1,
        ..TrainConfig::new(HeadKind::FiniteMixture { components: 2 })
    };
    let test = task.generate(50, 3, Split::Test)?;
    let m = train(&cfg, &task.generate(80, 1, Split::Train)?, &task.generate(20, 2, Split::Val)?)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.json");
    save_model(&m, &path)?;
    let back = load_model(&path)?;
    let a = m.model.log_likelihoods(test.features(), test.angles()?, 0)?;
    let b = back.model.log_likelihoods(test.features(), test.angles()?, 0)?;
    let exact = a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
    Ok((exact, format!("{} log-densities compared bitwise", a.len())))
}
