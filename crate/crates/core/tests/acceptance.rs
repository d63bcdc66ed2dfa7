//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! ```text
//! cargo test -p vmreg --test acceptance
//! ```
//!
//! Every random draw is seeded, so the numbers in the report are fixed for a
//! given platform.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use vmreg::circmath::{aad, kappa_mle_from_resultant, log_bessel_i0, BESSEL_SWITCH, LN_2PI};
use vmreg::decision::{maad, mean_and_sem, mean_log_likelihood, point_estimate, point_estimate_from_samples};
use vmreg::harness::{
    load_model, save_model, train, Dataset, Split, SyntheticKind, SyntheticSpec, SyntheticTask, TrainConfig,
    TrainedModel,
};
use vmreg::heads::{HeadKind, HeadLoss, HeadObjective, KappaSetting, LatentConfig, PredictiveDensity, PredictiveModel};
use vmreg::neuralnet::{finite_diff_check, loss_and_gradients, Activation, LayerSpec, Tensor};
use vmreg::rng::{derive_seed, rng_from_seed};
use vmreg::validation::{ks_against_density, ks_critical_value, trapezoid_circle, NORMALIZATION_GRID};
use vmreg::{Angle, Error, VonMises, VonMisesMixture, KAPPA_MAX};

type Outcome = Result<(bool, String), Error>;

const ROOT_SEED: u64 = 20_240_611;

fn seed(criterion: u64, stream: u64) -> u64 {
    derive_seed(derive_seed(ROOT_SEED, criterion), stream)
}

fn uniform_angle<R: Rng>(rng: &mut R) -> Angle {
    Angle::new(rng.random_range(0.0..TAU))
}

fn random_batch(rng: &mut impl Rng, rows: usize, dim: usize) -> (Tensor, Vec<Angle>) {
    let x = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = (0..rows).map(|_| uniform_angle(rng)).collect();
    (Tensor::matrix(rows, dim, x).expect("finite"), t)
}

fn cpu_seconds() -> f64 {
    // SAFETY: getrusage only writes into the struct we pass.
    let mut u: libc::rusage = unsafe { std::mem::zeroed() };
    unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut u) };
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    tv(u.ru_utime) + tv(u.ru_stime)
}

// ---------------------------------------------------------------- 1

fn normalization() -> Outcome {
    let start = Instant::now();
    let mass_error = |f: &(dyn Fn(f64) -> f64 + Sync)| (trapezoid_circle(NORMALIZATION_GRID, f) - 1.0).abs();

    let mut single: f64 = 0.0;
    for kappa in [0.0, 0.1, 1.0, 10.0, 100.0, 1000.0] {
        let d = VonMises::new(Angle::new(0.7), kappa)?;
        single = single.max(mass_error(&|p| d.log_pdf_radians(p)));
    }

    let mixtures = (0..50)
        .map(|i| {
            let mut rng = rng_from_seed(seed(1, i));
            let k = rng.random_range(1..=6);
            let comps = (0..k)
                .map(|_| VonMises::new(uniform_angle(&mut rng), 10f64.powf(rng.random_range(-2.0..3.0))))
                .collect::<Result<Vec<_>, _>>()?;
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            VonMisesMixture::new(comps, raw.iter().map(|w| w / total).collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mixture = mixtures
        .par_iter()
        .map(|m| mass_error(&|p| m.log_pdf_radians(p)))
        .reduce(|| 0.0, f64::max);

    let latent = LatentConfig {
        latent_dim: 2,
        train_samples: 2,
        eval_samples: 50,
    };
    let mc = (0..20u64)
        .into_par_iter()
        .map(|i| -> Result<f64, Error> {
            let head = if i % 2 == 0 { HeadKind::Cvae(latent) } else { HeadKind::Scvae(latent) };
            let model = PredictiveModel::new(head, 3, &[LayerSpec::new(8, Activation::Tanh)], seed(1, 100 + i))?;
            let (x, _) = random_batch(&mut rng_from_seed(seed(1, 200 + i)), 1, 3);
            let d = model.predictive_density(x.row(0), seed(1, 300 + i))?;
            Ok(mass_error(&|p| d.log_pdf_radians(p)))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let secs = start.elapsed().as_secs_f64();
    let worst = single.max(mixture).max(mc);
    Ok((
        worst <= 1e-6 && secs < 30.0,
        format!("max |mass - 1|: von Mises {single:.1e}, mixtures {mixture:.1e}, MC predictive {mc:.1e}; {secs:.1} s"),
    ))
}

// ---------------------------------------------------------------- 2

/// Double-double arithmetic for the reference series.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        quick_two_sum(s, e + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        quick_two_sum(p, e)
    }

    fn div(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let p = q1 * d;
        let pe = q1.mul_add(d, -p);
        let (s, e) = two_sum(self.hi, -p);
        let q2 = (s + (e - pe + self.lo)) / d;
        quick_two_sum(q1, q2)
    }
}

/// `log I₀(κ)` from `Σ_k (κ²/4)^k / (k!)²` summed in double-double.
fn log_i0_reference(kappa: f64) -> f64 {
    let h = Dd { hi: 0.5 * kappa, lo: 0.0 };
    let q = h.mul(h);
    let mut term = Dd { hi: 1.0, lo: 0.0 };
    let mut sum = Dd { hi: 0.0, lo: 0.0 };
    for k in 1..2000 {
        let k = k as f64;
        term = term.mul(q).div(k * k);
        sum = sum.add(term);
        if term.hi <= sum.hi * 1e-34 {
            break;
        }
    }
    sum.hi.ln_1p() + sum.lo / (1.0 + sum.hi)
}

fn bessel() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let kappa = 50.0 * i as f64 / 999.0;
        let want = log_i0_reference(kappa);
        let got = log_bessel_i0(kappa)?;
        let err = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
        worst = worst.max(err);
    }
    let above = f64::from_bits(BESSEL_SWITCH.to_bits() + 1);
    let jump = (log_bessel_i0(above)? - log_bessel_i0(BESSEL_SWITCH)?).abs();
    Ok((
        worst <= 1e-10 && jump <= 1e-9,
        format!("max relative error {worst:.2e} on 1000 points; jump at κ = {BESSEL_SWITCH} is {jump:.1e}"),
    ))
}

// ---------------------------------------------------------------- 3

const GRADIENT_LOSSES: [&str; 5] = ["cosine", "vm_nll", "mixture_nll", "cvae_elbo", "scvae_loss"];
const NETS_PER_LOSS: u64 = 20;

fn gradient_case(loss: usize, index: u64) -> Result<f64, Error> {
    let mut rng = rng_from_seed(seed(3, loss as u64 * 1000 + index));
    let latent = LatentConfig {
        latent_dim: rng.random_range(1..=3),
        train_samples: rng.random_range(1..=3),
        eval_samples: 4,
    };
    let head = match loss {
        0 => HeadKind::FixedKappa {
            kappa: KappaSetting::FitAfterTraining,
        },
        1 => HeadKind::SingleVonMises,
        2 => HeadKind::FiniteMixture {
            components: rng.random_range(2..=4),
        },
        3 => HeadKind::Cvae(latent),
        _ => HeadKind::Scvae(latent),
    };
    let dim = rng.random_range(2..=4);
    let hidden: Vec<LayerSpec> = (0..rng.random_range(1..=2))
        .map(|_| LayerSpec::new(rng.random_range(3..=6), Activation::Tanh))
        .collect();
    let model = PredictiveModel::new(head, dim, &hidden, rng.random())?;
    let rows = rng.random_range(3..=6);
    let (x, t) = random_batch(&mut rng, rows, dim);
    finite_diff_check(model.networks(), &model.objective(&x, &t, rng.random())?, 1e-5)
}

fn gradients() -> Outcome {
    let cases: Vec<(usize, u64)> = (0..GRADIENT_LOSSES.len())
        .flat_map(|l| (0..NETS_PER_LOSS).map(move |i| (l, i)))
        .collect();
    let errors = cases
        .par_iter()
        .map(|&(l, i)| gradient_case(l, i))
        .collect::<Result<Vec<_>, _>>()?;
    let per_loss: Vec<f64> = errors
        .chunks(NETS_PER_LOSS as usize)
        .map(|c| c.iter().copied().fold(0.0, f64::max))
        .collect();
    let detail = GRADIENT_LOSSES
        .iter()
        .zip(&per_loss)
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        per_loss.iter().all(|e| *e < 1e-4),
        format!("max relative error over {NETS_PER_LOSS} nets each: {detail}"),
    ))
}

// ---------------------------------------------------------------- 4

fn cosine_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mut rng = rng_from_seed(seed(4, i));
        let dim = rng.random_range(2..=6);
        let hidden = [LayerSpec::new(rng.random_range(4..=16), Activation::Tanh)];
        let head = HeadKind::FixedKappa {
            kappa: KappaSetting::Fixed(1.0),
        };
        let model = PredictiveModel::new(head, dim, &hidden, rng.random())?;
        let rows = rng.random_range(8..=64);
        let (x, t) = random_batch(&mut rng, rows, dim);
        let (_, a) = loss_and_gradients(model.networks(), &HeadObjective::new(HeadLoss::Cosine, &x, &t, 0, 0)?)?;
        let (_, b) = loss_and_gradients(
            model.networks(),
            &HeadObjective::new(HeadLoss::FixedKappaNll(1.0), &x, &t, 0, 0)?,
        )?;
        for (u, v) in a.iter().flatten().zip(b.iter().flatten()) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok((worst <= 1e-8, format!("max gradient difference {worst:.1e} over 20 random batches")))
}

// ---------------------------------------------------------------- 5

fn sampler() -> Outcome {
    let n = 100_000;
    let critical = ks_critical_value(n, 0.01);
    let mut stats = Vec::new();
    for (i, kappa) in [0.5, 2.0, 10.0].into_iter().enumerate() {
        let mu = Angle::new(1.0 + i as f64);
        let d = VonMises::new(mu, kappa)?;
        let draws: Vec<f64> = d.sample(n, seed(5, i as u64)).iter().map(|a| a.radians()).collect();
        stats.push(ks_against_density(&draws, mu.radians() - PI, |p| d.log_pdf_radians(p).exp()));
    }
    let m = VonMisesMixture::new(
        vec![VonMises::new(Angle::new(0.0), 50.0)?, VonMises::new(Angle::new(PI), 50.0)?],
        vec![0.5, 0.5],
    )?;
    let near_zero = m
        .sample(n, seed(5, 10))
        .iter()
        .filter(|a| aad(**a, Angle::ZERO) < FRAC_PI_2)
        .count() as f64
        / n as f64;
    let ks_ok = stats.iter().all(|s| *s < critical);
    Ok((
        ks_ok && (near_zero - 0.5).abs() <= 0.01,
        format!(
            "KS {:.4} / {:.4} / {:.4} vs critical {critical:.4}; mixture fraction near 0: {near_zero:.4}",
            stats[0], stats[1], stats[2]
        ),
    ))
}

// ---------------------------------------------------------------- 6

/// A trained model with the data it was trained and tested on.
struct Fitted {
    model: PredictiveModel,
    train_angles: Vec<Angle>,
    test: Dataset,
}

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn splits(task: &SyntheticTask, n_train: usize, n_val: usize, n_test: usize, s: u64) -> Result<Splits, Error> {
    Ok(Splits {
        train: task.generate(n_train, derive_seed(s, 1), Split::Train)?,
        val: task.generate(n_val, derive_seed(s, 2), Split::Val)?,
        test: task.generate(n_test, derive_seed(s, 3), Split::Test)?,
    })
}

fn fit(head: HeadKind, data: &Splits, s: u64) -> Result<TrainedModel, Error> {
    let cfg = TrainConfig {
        seed: s,
        ..TrainConfig::new(head)
    };
    train(&cfg, &data.train, &data.val)
}

fn test_ll(model: &PredictiveModel, test: &Dataset, s: u64) -> Result<f64, Error> {
    Ok(mean_log_likelihood(model, test.features(), test.angles()?, s)?.mean)
}

struct RecoveryRun {
    bayes: f64,
    learned: f64,
    fixed: f64,
    model: PredictiveModel,
    data: Splits,
}

fn recovery_run(s: u64) -> Result<RecoveryRun, Error> {
    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Heteroscedastic, seed(6, s)))?;
    let data = splits(&task, 20_000, 5_000, 5_000, seed(6, 10 + s))?;
    let learned = fit(HeadKind::SingleVonMises, &data, seed(6, 20 + s))?;
    let fixed = fit(
        HeadKind::FixedKappa {
            kappa: KappaSetting::FitAfterTraining,
        },
        &data,
        seed(6, 30 + s),
    )?;
    Ok(RecoveryRun {
        bayes: task.bayes_log_likelihood(&data.test)?.mean,
        learned: test_ll(&learned.model, &data.test, 0)?,
        fixed: test_ll(&fixed.model, &data.test, 0)?,
        model: learned.model,
        data,
    })
}

fn recovery(keep: &mut Option<Fitted>) -> Outcome {
    let cpu = cpu_seconds();
    let runs = (0..5u64)
        .into_par_iter()
        .map(recovery_run)
        .collect::<Result<Vec<_>, _>>()?;
    let cpu = cpu_seconds() - cpu;
    let gaps: Vec<f64> = runs.iter().map(|r| r.bayes - r.learned).collect();
    let wins = runs.iter().filter(|r| r.learned > r.fixed).count();
    let margins: Vec<String> = runs.iter().map(|r| format!("{:+.3}", r.learned - r.fixed)).collect();
    let close = gaps.iter().all(|g| *g <= 0.05);
    let first = runs.into_iter().next().expect("five runs");
    *keep = Some(Fitted {
        train_angles: first.data.train.angles()?.to_vec(),
        model: first.model,
        test: first.data.test,
    });
    Ok((
        close && wins >= 4 && cpu < 300.0,
        format!(
            "Bayes gap per seed [{}] nats; learned − fixed [{}], {wins}/5 positive; {cpu:.0} s CPU",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", "),
            margins.join(", ")
        ),
    ))
}

// ---------------------------------------------------------------- 7

/// Minimizes `f` by Nelder–Mead from an axis-aligned simplex around `start`.
fn nelder_mead<const N: usize>(f: impl Fn(&[f64; N]) -> f64, start: [f64; N], step: f64) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = (0..=N)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += step;
            }
            (p, f(&p))
        })
        .collect();
    for _ in 0..10_000 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if worst - best <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for j in 0..N {
                centroid[j] += p[j] / N as f64;
            }
        }
        let far = simplex[N].0;
        let along = |t: f64| {
            let mut p = [0.0; N];
            for j in 0..N {
                p[j] = centroid[j] + t * (far[j] - centroid[j]);
            }
            p
        };
        let r = along(-1.0);
        let fr = f(&r);
        if fr < best {
            let e = along(-2.0);
            let fe = f(&e);
            simplex[N] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (r, fr);
        } else {
            let c = if fr < worst { along(-0.5) } else { along(0.5) };
            let fc = f(&c);
            if fc < fr.min(worst) {
                simplex[N] = (c, fc);
            } else {
                let anchor = simplex[0].0;
                for (p, fp) in simplex.iter_mut().skip(1) {
                    for j in 0..N {
                        p[j] = anchor[j] + 0.5 * (p[j] - anchor[j]);
                    }
                    *fp = f(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Concentration link of the learned-κ head.
fn kappa_link(u: f64) -> f64 {
    KAPPA_MAX * -(-softplus(u) / KAPPA_MAX).exp_m1()
}

/// The single von Mises closest in KL to the true density at `x`, found by
/// optimizing the head's three raw outputs `(c, s, u)` against the true
/// trigonometric moments. Also returns the closed-form moment match.
fn best_single_vm(task: &SyntheticTask, x: &[f64]) -> Result<(VonMises, VonMises), Error> {
    const GRID: usize = 2048;
    let truth = task.density(x)?;
    let (mut mc, mut ms) = (0.0, 0.0);
    for g in 0..GRID {
        let p = TAU * g as f64 / GRID as f64;
        let w = truth.log_pdf_radians(p).exp() / GRID as f64 * TAU;
        mc += w * p.cos();
        ms += w * p.sin();
    }
    let neg_expected_ll = |v: &[f64; 3]| {
        let r = v[0].hypot(v[1]);
        if r == 0.0 {
            return f64::INFINITY;
        }
        let kappa = kappa_link(v[2]);
        let align = (mc * v[0] + ms * v[1]) / r;
        -(kappa * align - LN_2PI - log_bessel_i0(kappa).unwrap_or(f64::INFINITY))
    };
    let (v, _) = nelder_mead(neg_expected_ll, [1.0, 0.0, 0.0], 1.0);
    let direct = VonMises::new(Angle::new(v[1].atan2(v[0])), kappa_link(v[2]))?;
    let closed = VonMises::new(Angle::new(ms.atan2(mc)), kappa_mle_from_resultant(mc.hypot(ms))?)?;
    Ok((direct, closed))
}

fn bimodal(keep: &mut Option<Fitted>) -> Outcome {
    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Bimodal, seed(7, 0)))?;
    let data = splits(&task, 20_000, 5_000, 5_000, seed(7, 1))?;
    let heads = [
        HeadKind::SingleVonMises,
        HeadKind::FiniteMixture { components: 4 },
        HeadKind::Scvae(LatentConfig::default()),
    ];
    let mut models = heads
        .par_iter()
        .enumerate()
        .map(|(i, h)| fit(*h, &data, seed(7, 10 + i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let lls = models
        .iter()
        .map(|m| test_ll(&m.model, &data.test, seed(7, 20)))
        .collect::<Result<Vec<_>, _>>()?;

    let test = &data.test;
    let phis = test.angles()?;
    let per_row = (0..test.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, f64), Error> {
            let (direct, closed) = best_single_vm(&task, test.features().row(i))?;
            Ok((direct.log_pdf(phis[i]), closed.log_pdf(phis[i])))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = test.len() as f64;
    let best_vm = per_row.iter().map(|r| r.0).sum::<f64>() / n;
    let closed_vm = per_row.iter().map(|r| r.1).sum::<f64>() / n;
    let gap = task.bayes_log_likelihood(test)?.mean - best_vm;
    let (mix_gain, scvae_gain) = (lls[1] - lls[0], lls[2] - lls[0]);

    let mixture = models.swap_remove(1);
    *keep = Some(Fitted {
        model: mixture.model,
        train_angles: data.train.angles()?.to_vec(),
        test: data.test,
    });
    Ok((
        mix_gain >= gap / 2.0 && scvae_gain >= gap / 2.0,
        format!(
            "oracle gap {gap:.3} (closed-form check {:.3}); over single vM: mixture {mix_gain:+.3}, sCVAE \
             {scvae_gain:+.3}; needed {:.3}",
            gap + best_vm - closed_vm,
            gap / 2.0
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn decision_maad(fitted: &Fitted, s: u64) -> Result<(f64, f64), Error> {
    let x = fitted.test.features();
    let truth = fitted.test.angles()?;
    let densities = fitted.model.predictive_densities(x, derive_seed(s, 0))?;
    let estimates = densities
        .par_iter()
        .enumerate()
        .map(|(i, d)| Ok(point_estimate(d, 1000, derive_seed(s, 1 + i as u64))?.angle))
        .collect::<Result<Vec<_>, Error>>()?;
    let constant = point_estimate_from_samples(&fitted.train_angles)?.angle;
    let baseline = vec![constant; truth.len()];
    Ok((maad(&estimates, truth)?.mean, maad(&baseline, truth)?.mean))
}

fn decision_rule(hetero: Option<Fitted>, bimodal: Option<Fitted>) -> Outcome {
    let hits = (0..100u64)
        .into_par_iter()
        .map(|i| -> Result<bool, Error> {
            let mu = uniform_angle(&mut rng_from_seed(seed(8, i)));
            let d = PredictiveDensity::VonMises(VonMises::new(mu, 10.0)?);
            Ok(aad(point_estimate(&d, 1000, seed(8, 1000 + i))?.angle, mu) < 0.05)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|h| *h)
        .count();

    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Unimodal, seed(8, 2000)))?;
    let data = splits(&task, 5_000, 1_000, 2_000, seed(8, 2001))?;
    let unimodal = Fitted {
        model: fit(HeadKind::SingleVonMises, &data, seed(8, 2002))?.model,
        train_angles: data.train.angles()?.to_vec(),
        test: data.test,
    };
    let mut all_ok = hits >= 95;
    let mut parts = vec![format!("{hits}/100 estimates within 0.05 rad")];
    let tasks = [("unimodal", Some(unimodal)), ("heteroscedastic", hetero), ("bimodal", bimodal)];
    for (i, (name, fitted)) in tasks.into_iter().enumerate() {
        match fitted {
            Some(f) => {
                let (rule, baseline) = decision_maad(&f, seed(8, 3000 + i as u64))?;
                all_ok &= rule <= baseline;
                parts.push(format!("{name} MAAD {rule:.3} vs constant {baseline:.3}"));
            }
            None => {
                all_ok = false;
                parts.push(format!("{name}: no trained model"));
            }
        }
    }
    Ok((all_ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn iwae_ordering() -> Outcome {
    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Bimodal, seed(9, 0)))?;
    let data = splits(&task, 5_000, 1_000, 1_000, seed(9, 1))?;
    let cfg = TrainConfig {
        max_epochs: 40,
        patience: 10,
        seed: seed(9, 2),
        ..TrainConfig::new(HeadKind::Cvae(LatentConfig::default()))
    };
    let model = train(&cfg, &data.train, &data.val)?.model;
    let (x, phis) = (data.test.features(), data.test.angles()?);
    let iwae = [1, 10, 100]
        .into_iter()
        .map(|s| model.iwae_log_liks(x, phis, s, seed(9, 10 + s as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let elbo = (0..phis.len())
        .into_par_iter()
        .map(|i| model.cvae_elbo(x.row(i), phis[i], 100, seed(9, 1000 + i as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    // paired differences, so the standard error is that of the MC noise
    let diff = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
        mean_and_sem(&d)
    };
    let steps = [diff(&iwae[1], &iwae[0])?, diff(&iwae[2], &iwae[1])?];
    let over_elbo = [diff(&iwae[0], &elbo)?, diff(&iwae[1], &elbo)?, diff(&iwae[2], &elbo)?];
    let ok = steps.iter().chain(&over_elbo).all(|d| d.mean >= -3.0 * d.sem);
    let means: Vec<String> = iwae.iter().map(|v| format!("{:.4}", mean_and_sem(v).map_or(f64::NAN, |m| m.mean))).collect();
    Ok((
        ok,
        format!(
            "IWAE S=1/10/100: {}; ELBO {:.4}; steps {:+.4} ± {:.4}, {:+.4} ± {:.4}",
            means.join(" / "),
            mean_and_sem(&elbo)?.mean,
            steps[0].mean,
            steps[0].sem,
            steps[1].mean,
            steps[1].sem
        ),
    ))
}

// ---------------------------------------------------------------- 10

fn persistence() -> Outcome {
    let task = SyntheticTask::new(SyntheticSpec::new(SyntheticKind::Bimodal, seed(10, 0)).with_dim(4))?;
    let data = splits(&task, 300, 100, 1, seed(10, 1))?;
    let latent = LatentConfig {
        latent_dim: 3,
        train_samples: 2,
        eval_samples: 20,
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
    let dir = tempfile::tempdir()?;
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for (h, head) in heads.into_iter().enumerate() {
        let cfg = TrainConfig {
            hidden: vec![LayerSpec::new(16, Activation::Tanh)],
            max_epochs: 5,
            patience: 5,
            seed: seed(10, 10 + h as u64),
            ..TrainConfig::new(head)
        };
        let trained = train(&cfg, &data.train, &data.val)?;
        let path = dir.path().join(format!("{}.json", head.name()));
        save_model(&trained, &path)?;
        let loaded = load_model(&path)?;
        let (x, phis) = random_batch(&mut rng_from_seed(seed(10, 20 + h as u64)), 100, 4);
        for i in 0..100 {
            let s = seed(10, 1000 + i as u64);
            let a = trained.model.predictive_density(x.row(i), s)?;
            let b = loaded.model.predictive_density(x.row(i), s)?;
            for g in 0..64 {
                let p = TAU * g as f64 / 64.0;
                compared += 1;
                mismatches += usize::from(a.log_pdf_radians(p).to_bits() != b.log_pdf_radians(p).to_bits());
            }
        }
        let a = trained.model.log_likelihoods(&x, &phis, 7)?;
        let b = loaded.model.log_likelihoods(&x, &phis, 7)?;
        compared += a.len();
        mismatches += a.iter().zip(&b).filter(|(u, v)| u.to_bits() != v.to_bits()).count();
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} of {compared} log-densities differ after a round trip (5 heads, 100 inputs)"),
    ))
}

// ----------------------------------------------------------------

fn report(number: u32, name: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok(o) => o,
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {number:>2} {} {name}: {detail} [{secs:.1} s]",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

fn main() -> ExitCode {
    let suite = Instant::now();
    let mut passed = Vec::new();
    let simple: [(u32, &str, fn() -> Outcome); 5] = [
        (1, "normalization", normalization),
        (2, "Bessel oracle", bessel),
        (3, "gradient checks", gradients),
        (4, "cosine equivalence at κ = 1", cosine_equivalence),
        (5, "sampler validity", sampler),
    ];
    for (number, name, run) in simple {
        let t = Instant::now();
        passed.push(report(number, name, t, run()));
    }

    let (mut hetero, mut bimodal_fit) = (None, None);
    let t = Instant::now();
    passed.push(report(6, "heteroscedastic recovery", t, recovery(&mut hetero)));
    let t = Instant::now();
    passed.push(report(7, "bimodal separation", t, bimodal(&mut bimodal_fit)));
    let t = Instant::now();
    passed.push(report(8, "decision rule", t, decision_rule(hetero, bimodal_fit)));
    let t = Instant::now();
    passed.push(report(9, "IWAE ordering", t, iwae_ordering()));
    let t = Instant::now();
    passed.push(report(10, "persistence", t, persistence()));

    let n_pass = passed.iter().filter(|p| **p).count();
    println!(
        "{n_pass}/{} criteria passed in {:.0} s",
        passed.len(),
        suite.elapsed().as_secs_f64()
    );
    if n_pass == passed.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
