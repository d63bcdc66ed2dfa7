//! Probabilistic output heads on top of [`neuralnet`](crate::neuralnet):
//! fixed-κ biternion regression, learned-κ von Mises, finite von Mises
//! mixtures, and latent-variable mixtures (CVAE and its simplified variant
//! with a standard-normal latent).
//!
//! A [`PredictiveModel`] owns the networks of one head. Training losses are
//! exposed as [`HeadObjective`]s, which freeze any latent noise at
//! construction so that finite-difference checks see a deterministic
//! function of the parameters.

mod losses;
mod predictive;

pub use losses::{cosine_loss, gaussian_kl, mixture_nll, reparam_sample, vm_nll, LatentGaussian};
pub use predictive::PredictiveDensity;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circmath::{log_i0, Angle, KAPPA_MAX, LN_2PI};
use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, VonMisesMixture};
use crate::neuralnet::{
    zero_gradients, Gradients, LayerSpec, Network, NetworkSpec, Objective, OutputMap, Tape, Tensor,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vonmises::VonMises;
use losses::{gaussian_log_density, kl_with_grad, mixture_nll_row, vm_nll_biternion};

/// Rows per chunk when evaluating many inputs with many latent draws.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSetting {
    Fixed(f64),
    /// Train with the cosine loss, then pick κ by maximum likelihood on
    /// held-out predictions.
    FitAfterTraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub latent_dim: usize,
    /// Latent draws per example in the training loss.
    pub train_samples: usize,
    /// Latent draws per example when building predictive densities.
    pub eval_samples: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            latent_dim: 8,
            train_samples: 5,
            eval_samples: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    FixedKappa { kappa: KappaSetting },
    SingleVonMises,
    FiniteMixture { components: usize },
    Cvae(LatentConfig),
    /// `latent_dim = 0` is accepted and gives a decoder that cannot see `z`.
    Scvae(LatentConfig),
}

impl HeadKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HeadKind::FixedKappa {
                kappa: KappaSetting::Fixed(k),
            } => {
                if !(k > 0.0 && k <= KAPPA_MAX) {
                    return Err(Error::InvalidParameter(format!(
                        "fixed κ must lie in (0, {KAPPA_MAX}], got {k}"
                    )));
                }
            }
            HeadKind::FiniteMixture { components } if components == 0 => {
                return Err(Error::InvalidParameter("mixture needs at least one component".into()));
            }
            HeadKind::Cvae(c) | HeadKind::Scvae(c) => {
                if c.train_samples == 0 || c.eval_samples == 0 {
                    return Err(Error::InvalidParameter("latent sample counts must be positive".into()));
                }
                if matches!(self, HeadKind::Cvae(_)) && c.latent_dim == 0 {
                    return Err(Error::InvalidParameter("CVAE latent_dim must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short name as used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::FixedKappa { .. } => "fixed",
            HeadKind::SingleVonMises => "vm",
            HeadKind::FiniteMixture { .. } => "mixture",
            HeadKind::Cvae(_) => "cvae",
            HeadKind::Scvae(_) => "scvae",
        }
    }

    pub fn latent(&self) -> Option<LatentConfig> {
        match *self {
            HeadKind::Cvae(c) | HeadKind::Scvae(c) => Some(c),
            _ => None,
        }
    }

    /// The loss this head is trained (and early-stopped) on.
    pub fn training_loss(&self) -> HeadLoss {
        match *self {
            HeadKind::FixedKappa {
                kappa: KappaSetting::Fixed(k),
            } => HeadLoss::FixedKappaNll(k),
            HeadKind::FixedKappa {
                kappa: KappaSetting::FitAfterTraining,
            } => HeadLoss::Cosine,
            HeadKind::SingleVonMises => HeadLoss::VonMisesNll,
            HeadKind::FiniteMixture { .. } => HeadLoss::MixtureNll,
            HeadKind::Cvae(c) => HeadLoss::CvaeNegElbo {
                samples: c.train_samples,
            },
            HeadKind::Scvae(c) => HeadLoss::ScvaeNegLogLik {
                samples: c.train_samples,
            },
        }
    }

    /// `(input_dim, output map)` of every network, in storage order.
    fn layout(&self, input_dim: usize) -> Vec<(usize, OutputMap)> {
        match *self {
            HeadKind::FixedKappa { .. } => vec![(input_dim, OutputMap::Biternion)],
            HeadKind::SingleVonMises => vec![(input_dim, OutputMap::BiternionKappa)],
            HeadKind::FiniteMixture { components } => vec![(input_dim, OutputMap::Mixture { components })],
            HeadKind::Cvae(c) => {
                let g = OutputMap::GaussianParams {
                    latent_dim: c.latent_dim,
                };
                vec![
                    (input_dim + 2, g),
                    (input_dim, g),
                    (input_dim + c.latent_dim, OutputMap::BiternionKappa),
                ]
            }
            HeadKind::Scvae(c) => vec![(input_dim + c.latent_dim, OutputMap::BiternionKappa)],
        }
    }
}

/// Network slots of a CVAE head.
pub const CVAE_ENCODER: usize = 0;
pub const CVAE_PRIOR: usize = 1;
pub const CVAE_DECODER: usize = 2;

/// Per-example training losses, averaged over a batch by [`HeadObjective`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadLoss {
    /// `1 − y_pred · y_true` on a biternion network.
    Cosine,
    /// von Mises NLL with a frozen concentration, on a biternion network.
    FixedKappaNll(f64),
    VonMisesNll,
    MixtureNll,
    /// Negative ELBO with `samples` reparameterized draws and a closed-form KL.
    CvaeNegElbo { samples: usize },
    /// Negative Monte Carlo log-likelihood with `samples` draws of `z ~ N(0, I)`.
    ScvaeNegLogLik { samples: usize },
}

impl HeadLoss {
    fn samples(&self) -> usize {
        match *self {
            HeadLoss::CvaeNegElbo { samples } | HeadLoss::ScvaeNegLogLik { samples } => samples,
            _ => 0,
        }
    }
}

/// A head loss over a fixed batch, with latent noise drawn once from `seed`.
pub struct HeadObjective<'a> {
    loss: HeadLoss,
    inputs: &'a Tensor,
    targets: Vec<[f64; 2]>,
    latent_dim: usize,
    // n × samples × latent_dim standard normals
    noise: Vec<f64>,
}

impl<'a> HeadObjective<'a> {
    pub fn new(loss: HeadLoss, inputs: &'a Tensor, targets: &[Angle], latent_dim: usize, seed: u64) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::LengthMismatch {
                left: inputs.rows(),
                right: targets.len(),
            });
        }
        if targets.is_empty() {
            return Err(Error::EmptyInput);
        }
        if matches!(loss, HeadLoss::CvaeNegElbo { .. } | HeadLoss::ScvaeNegLogLik { .. }) && loss.samples() == 0 {
            return Err(Error::InvalidParameter("latent sample count must be positive".into()));
        }
        let noise = standard_normals(targets.len() * loss.samples() * latent_dim, seed);
        Ok(HeadObjective {
            loss,
            inputs,
            targets: targets.iter().map(|a| biternion_pair(*a)).collect(),
            latent_dim,
            noise,
        })
    }

    fn check_networks(&self, nets: &[Network]) -> Result<()> {
        let expect: &[fn(&OutputMap) -> bool] = match self.loss {
            HeadLoss::Cosine | HeadLoss::FixedKappaNll(_) => &[|m| *m == OutputMap::Biternion],
            HeadLoss::VonMisesNll | HeadLoss::ScvaeNegLogLik { .. } => &[|m| *m == OutputMap::BiternionKappa],
            HeadLoss::MixtureNll => &[|m| matches!(m, OutputMap::Mixture { .. })],
            HeadLoss::CvaeNegElbo { .. } => &[
                |m| matches!(m, OutputMap::GaussianParams { .. }),
                |m| matches!(m, OutputMap::GaussianParams { .. }),
                |m| *m == OutputMap::BiternionKappa,
            ],
        };
        if nets.len() != expect.len() || !nets.iter().zip(expect).all(|(n, f)| f(&n.spec().output)) {
            return Err(Error::ConfigMismatch(format!(
                "{:?} does not fit the given {} network(s)",
                self.loss,
                nets.len()
            )));
        }
        Ok(())
    }

    fn evaluate(&self, nets: &[Network], want_grad: bool) -> Result<(f64, Option<Gradients>)> {
        self.check_networks(nets)?;
        match self.loss {
            HeadLoss::CvaeNegElbo { samples } => self.eval_cvae(nets, samples, want_grad),
            HeadLoss::ScvaeNegLogLik { samples } => self.eval_scvae(nets, samples, want_grad),
            _ => self.eval_direct(nets, want_grad),
        }
    }

    fn eval_direct(&self, nets: &[Network], want_grad: bool) -> Result<(f64, Option<Gradients>)> {
        let net = &nets[0];
        let (out, tape) = run(net, self.inputs, want_grad)?;
        let n = self.targets.len() as f64;
        let mut grad_out = want_grad.then(|| Tensor::zeros(out.rows(), out.cols()));
        let mut total = 0.0;
        for (r, &[c, s]) in self.targets.iter().enumerate() {
            let y = out.row(r);
            let g = grad_out.as_mut().map(|t| t.row_mut(r));
            total += match self.loss {
                HeadLoss::Cosine => {
                    if let Some(g) = g {
                        g[0] = -c / n;
                        g[1] = -s / n;
                    }
                    1.0 - (y[0] * c + y[1] * s)
                }
                HeadLoss::FixedKappaNll(k) => {
                    if let Some(g) = g {
                        g[0] = -k * c / n;
                        g[1] = -k * s / n;
                    }
                    -k * (y[0] * c + y[1] * s) + LN_2PI + log_i0(k)
                }
                HeadLoss::VonMisesNll => {
                    let (nll, dc, ds, dk) = vm_nll_biternion(y[0], y[1], y[2], c, s);
                    if let Some(g) = g {
                        g[0] = dc / n;
                        g[1] = ds / n;
                        g[2] = dk / n;
                    }
                    nll
                }
                HeadLoss::MixtureNll => {
                    let k = y.len() / 4;
                    match g {
                        Some(g) => {
                            let v = mixture_nll_row(y, k, c, s, Some(&mut *g));
                            g.iter_mut().for_each(|v| *v /= n);
                            v
                        }
                        None => mixture_nll_row(y, k, c, s, None),
                    }
                }
                _ => unreachable!("latent losses are handled separately"),
            };
        }
        let grads = match (grad_out, tape) {
            (Some(go), Some(tape)) => {
                let mut grads = zero_gradients(nets);
                net.backward(&tape, &go, &mut grads[0]);
                Some(grads)
            }
            _ => None,
        };
        Ok((total / n, grads))
    }

    fn eval_cvae(&self, nets: &[Network], samples: usize, want_grad: bool) -> Result<(f64, Option<Gradients>)> {
        let (enc, prior, dec) = (&nets[CVAE_ENCODER], &nets[CVAE_PRIOR], &nets[CVAE_DECODER]);
        let (rows, d, l) = (self.inputs.rows(), self.inputs.cols(), self.latent_dim);
        let n = rows as f64;
        let sf = samples as f64;

        let mut enc_in = Vec::with_capacity(rows * (d + 2));
        for r in 0..rows {
            enc_in.extend_from_slice(self.inputs.row(r));
            enc_in.extend_from_slice(&self.targets[r]);
        }
        let enc_in = Tensor::from_raw(rows, d + 2, enc_in);
        let (q, tape_q) = run(enc, &enc_in, want_grad)?;
        let (p, tape_p) = run(prior, self.inputs, want_grad)?;
        check_latent_width(&q, l)?;

        let mut dec_in = Vec::with_capacity(rows * samples * (d + l));
        for r in 0..rows {
            let (mq, lq) = q.row(r).split_at(l);
            for s in 0..samples {
                dec_in.extend_from_slice(self.inputs.row(r));
                let eps = self.noise_at(r, s, samples);
                dec_in.extend(mq.iter().zip(lq).zip(eps).map(|((m, lv), e)| m + (0.5 * lv).exp() * e));
            }
        }
        let dec_in = Tensor::from_raw(rows * samples, d + l, dec_in);
        let (out, tape_d) = run(dec, &dec_in, want_grad)?;

        let mut grad_dec = want_grad.then(|| Tensor::zeros(out.rows(), out.cols()));
        let mut grad_q = want_grad.then(|| Tensor::zeros(rows, 2 * l));
        let mut grad_p = want_grad.then(|| Tensor::zeros(rows, 2 * l));
        let mut total = 0.0;
        for r in 0..rows {
            let [c, s] = self.targets[r];
            let mut recon = 0.0;
            for k in 0..samples {
                let y = out.row(r * samples + k);
                let (nll, dc, ds, dk) = vm_nll_biternion(y[0], y[1], y[2], c, s);
                recon += nll;
                if let Some(g) = grad_dec.as_mut() {
                    let g = g.row_mut(r * samples + k);
                    let scale = sf * n;
                    g[0] = dc / scale;
                    g[1] = ds / scale;
                    g[2] = dk / scale;
                }
            }
            let (mq, lq) = q.row(r).split_at(l);
            let (mp, lp) = p.row(r).split_at(l);
            let kl = match (grad_q.as_mut(), grad_p.as_mut()) {
                (Some(gq), Some(gp)) => {
                    let (gmq, glq) = gq.row_mut(r).split_at_mut(l);
                    let (gmp, glp) = gp.row_mut(r).split_at_mut(l);
                    let kl = kl_with_grad(mq, lq, mp, lp, Some((&mut *gmq, &mut *glq, &mut *gmp, &mut *glp)));
                    for v in gmq.iter_mut().chain(glq.iter_mut()).chain(gmp.iter_mut()).chain(glp.iter_mut()) {
                        *v /= n;
                    }
                    kl
                }
                _ => kl_with_grad(mq, lq, mp, lp, None),
            };
            total += recon / sf + kl;
        }

        let grads = match (grad_dec, grad_q, grad_p, tape_q, tape_p, tape_d) {
            (Some(gd), Some(mut gq), Some(gp), Some(tq), Some(tp), Some(td)) => {
                let mut grads = zero_gradients(nets);
                let g_in = dec.backward(&td, &gd, &mut grads[CVAE_DECODER]);
                // chain ∂/∂z through z = μ + exp(½ logvar) ε
                for r in 0..rows {
                    let lq: Vec<f64> = q.row(r)[l..].to_vec();
                    let row = gq.row_mut(r);
                    for k in 0..samples {
                        let dz = &g_in.row(r * samples + k)[d..];
                        let eps = self.noise_at(r, k, samples);
                        for j in 0..l {
                            row[j] += dz[j];
                            row[l + j] += dz[j] * eps[j] * 0.5 * (0.5 * lq[j]).exp();
                        }
                    }
                }
                enc.backward(&tq, &gq, &mut grads[CVAE_ENCODER]);
                prior.backward(&tp, &gp, &mut grads[CVAE_PRIOR]);
                Some(grads)
            }
            _ => None,
        };
        Ok((total / n, grads))
    }

    fn eval_scvae(&self, nets: &[Network], samples: usize, want_grad: bool) -> Result<(f64, Option<Gradients>)> {
        let dec = &nets[0];
        let (rows, d, l) = (self.inputs.rows(), self.inputs.cols(), self.latent_dim);
        let n = rows as f64;
        let mut dec_in = Vec::with_capacity(rows * samples * (d + l));
        for r in 0..rows {
            for s in 0..samples {
                dec_in.extend_from_slice(self.inputs.row(r));
                dec_in.extend_from_slice(self.noise_at(r, s, samples));
            }
        }
        let dec_in = Tensor::from_raw(rows * samples, d + l, dec_in);
        let (out, tape) = run(dec, &dec_in, want_grad)?;
        let mut grad_out = want_grad.then(|| Tensor::zeros(out.rows(), out.cols()));
        let ln_s = (samples as f64).ln();
        let mut total = 0.0;
        let mut log_p = vec![0.0; samples];
        let mut partials = vec![(0.0, 0.0, 0.0); samples];
        for r in 0..rows {
            let [c, s] = self.targets[r];
            for k in 0..samples {
                let y = out.row(r * samples + k);
                let (nll, dc, ds, dk) = vm_nll_biternion(y[0], y[1], y[2], c, s);
                log_p[k] = -nll;
                partials[k] = (dc, ds, dk);
            }
            let lse = log_sum_exp(&log_p);
            total += -(lse - ln_s);
            if let Some(g) = grad_out.as_mut() {
                for k in 0..samples {
                    let w = (log_p[k] - lse).exp();
                    let (dc, ds, dk) = partials[k];
                    let g = g.row_mut(r * samples + k);
                    g[0] = dc * w / n;
                    g[1] = ds * w / n;
                    g[2] = dk * w / n;
                }
            }
        }
        let grads = match (grad_out, tape) {
            (Some(go), Some(tape)) => {
                let mut grads = zero_gradients(nets);
                dec.backward(&tape, &go, &mut grads[0]);
                Some(grads)
            }
            _ => None,
        };
        Ok((total / n, grads))
    }

    fn noise_at(&self, row: usize, sample: usize, samples: usize) -> &[f64] {
        let l = self.latent_dim;
        let start = (row * samples + sample) * l;
        &self.noise[start..start + l]
    }
}

impl Objective for HeadObjective<'_> {
    fn loss(&self, nets: &[Network]) -> Result<f64> {
        Ok(self.evaluate(nets, false)?.0)
    }

    fn loss_and_gradients(&self, nets: &[Network]) -> Result<(f64, Gradients)> {
        let (loss, grads) = self.evaluate(nets, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }
}

fn run(net: &Network, x: &Tensor, want_tape: bool) -> Result<(Tensor, Option<Tape>)> {
    if want_tape {
        let tape = net.forward_taped(x)?;
        Ok((tape.output().clone(), Some(tape)))
    } else {
        Ok((net.forward(x)?, None))
    }
}

fn check_latent_width(q: &Tensor, latent_dim: usize) -> Result<()> {
    if q.cols() != 2 * latent_dim {
        return Err(Error::DimensionMismatch {
            left: q.cols() / 2,
            right: latent_dim,
        });
    }
    Ok(())
}

fn biternion_pair(a: Angle) -> [f64; 2] {
    let (s, c) = a.radians().sin_cos();
    [c, s]
}

fn standard_normals(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn von_mises_from_row(y: &[f64]) -> Result<VonMises> {
    VonMises::new(Angle::new(y[1].atan2(y[0])), y[2])
}

fn ensure_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss(v))
    }
}

/// The networks of one head plus the fitted concentration, when the head
/// has one outside its networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveModel {
    head: HeadKind,
    input_dim: usize,
    networks: Vec<Network>,
    kappa: Option<f64>,
}

impl PredictiveModel {
    /// Fresh networks with hidden layers `hidden`, each seeded from its own
    /// stream of `seed`.
    pub fn new(head: HeadKind, input_dim: usize, hidden: &[LayerSpec], seed: u64) -> Result<Self> {
        head.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be positive".into()));
        }
        let networks = head
            .layout(input_dim)
            .into_iter()
            .enumerate()
            .map(|(i, (inputs, output))| {
                Network::new(NetworkSpec::new(inputs, hidden.to_vec(), output), derive_seed(seed, i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let kappa = match head {
            HeadKind::FixedKappa {
                kappa: KappaSetting::Fixed(k),
            } => Some(k),
            _ => None,
        };
        Ok(PredictiveModel {
            head,
            input_dim,
            networks,
            kappa,
        })
    }

    /// Reassembles a model from stored networks, checking that they fit `head`.
    pub fn from_parts(head: HeadKind, input_dim: usize, networks: Vec<Network>, kappa: Option<f64>) -> Result<Self> {
        head.validate()?;
        let layout = head.layout(input_dim);
        let fits = layout.len() == networks.len()
            && layout
                .iter()
                .zip(&networks)
                .all(|(&(inputs, output), net)| net.input_dim() == inputs && net.spec().output == output);
        if !fits {
            return Err(Error::ConfigMismatch(format!(
                "networks do not match a {} head on {input_dim} features",
                head.name()
            )));
        }
        if let Some(k) = kappa {
            if !(0.0..=KAPPA_MAX).contains(&k) {
                return Err(Error::InvalidParameter(format!("fitted κ out of range: {k}")));
            }
        }
        Ok(PredictiveModel {
            head,
            input_dim,
            networks,
            kappa,
        })
    }

    pub fn head(&self) -> &HeadKind {
        &self.head
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn networks(&self) -> &[Network] {
        &self.networks
    }

    pub fn networks_mut(&mut self) -> &mut [Network] {
        &mut self.networks
    }

    /// Concentration used by a fixed-κ head, once known.
    pub fn fixed_kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn set_fixed_kappa(&mut self, kappa: f64) -> Result<()> {
        if !matches!(self.head, HeadKind::FixedKappa { .. }) {
            return Err(Error::ConfigMismatch(format!("a {} head has no fixed κ", self.head.name())));
        }
        if !(0.0..=KAPPA_MAX).contains(&kappa) {
            return Err(Error::InvalidParameter(format!("κ out of range: {kappa}")));
        }
        self.kappa = Some(kappa);
        Ok(())
    }

    fn latent_dim(&self) -> usize {
        self.head.latent().map_or(0, |c| c.latent_dim)
    }

    /// The head's training loss on `(inputs, targets)` with noise from `seed`.
    pub fn objective<'a>(&self, inputs: &'a Tensor, targets: &[Angle], seed: u64) -> Result<HeadObjective<'a>> {
        HeadObjective::new(self.head.training_loss(), inputs, targets, self.latent_dim(), seed)
    }

    /// Mean training loss of the current parameters.
    pub fn loss(&self, inputs: &Tensor, targets: &[Angle], seed: u64) -> Result<f64> {
        ensure_finite(self.objective(inputs, targets, seed)?.loss(&self.networks)?)
    }

    /// Network mean directions of a fixed-κ head.
    pub fn predicted_means(&self, x: &Tensor) -> Result<Vec<Angle>> {
        if !matches!(self.head, HeadKind::FixedKappa { .. }) {
            return Err(Error::ConfigMismatch("predicted_means needs a fixed-κ head".into()));
        }
        let out = self.networks[0].forward(x)?;
        Ok((0..out.rows()).map(|r| Angle::new(out.row(r)[1].atan2(out.row(r)[0]))).collect())
    }

    fn require_kappa(&self) -> Result<f64> {
        self.kappa
            .ok_or_else(|| Error::InvalidParameter("κ has not been fitted yet".into()))
    }

    fn check_latent_head(&self, cvae: bool) -> Result<LatentConfig> {
        match (self.head, cvae) {
            (HeadKind::Cvae(c), true) | (HeadKind::Scvae(c), false) => Ok(c),
            _ => Err(Error::ConfigMismatch(format!(
                "operation not available for a {} head",
                self.head.name()
            ))),
        }
    }

    /// Single-example ELBO `(1/S) Σ log p(φ | x, z⁽ˢ⁾) − KL(q ‖ p)`.
    pub fn cvae_elbo(&self, x: &[f64], phi: Angle, samples: usize, seed: u64) -> Result<f64> {
        let c = self.check_latent_head(true)?;
        let xt = Tensor::matrix(1, x.len(), x.to_vec())?;
        let obj = HeadObjective::new(HeadLoss::CvaeNegElbo { samples }, &xt, &[phi], c.latent_dim, seed)?;
        ensure_finite(-obj.loss(&self.networks)?)
    }

    /// Single-example importance-weighted bound with `samples` draws from
    /// the encoder.
    pub fn iwae_log_lik(&self, x: &[f64], phi: Angle, samples: usize, seed: u64) -> Result<f64> {
        let xt = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.iwae_log_liks(&xt, &[phi], samples, seed)?[0])
    }

    /// Importance-weighted bounds for every row, noise drawn row by row from
    /// one stream.
    pub fn iwae_log_liks(&self, x: &Tensor, phis: &[Angle], samples: usize, seed: u64) -> Result<Vec<f64>> {
        let c = self.check_latent_head(true)?;
        check_rows(x, phis)?;
        if samples == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        let (d, l) = (x.cols(), c.latent_dim);
        let (enc, prior, dec) = (
            &self.networks[CVAE_ENCODER],
            &self.networks[CVAE_PRIOR],
            &self.networks[CVAE_DECODER],
        );
        let mut rng = rng_from_seed(seed);
        let ln_s = (samples as f64).ln();
        let mut result = Vec::with_capacity(phis.len());
        for start in (0..phis.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(phis.len());
            let xs = x.slice_rows(start, end);
            let mut enc_in = Vec::with_capacity((end - start) * (d + 2));
            for r in 0..end - start {
                enc_in.extend_from_slice(xs.row(r));
                enc_in.extend_from_slice(&biternion_pair(phis[start + r]));
            }
            let q = enc.forward(&Tensor::from_raw(end - start, d + 2, enc_in))?;
            let p = prior.forward(&xs)?;
            check_latent_width(&q, l)?;
            let mut dec_in = Vec::with_capacity((end - start) * samples * (d + l));
            let mut zs = Vec::with_capacity((end - start) * samples * l);
            for r in 0..end - start {
                let (mq, lq) = q.row(r).split_at(l);
                for _ in 0..samples {
                    dec_in.extend_from_slice(xs.row(r));
                    for j in 0..l {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        let z = mq[j] + (0.5 * lq[j]).exp() * e;
                        dec_in.push(z);
                        zs.push(z);
                    }
                }
            }
            let out = dec.forward(&Tensor::from_raw((end - start) * samples, d + l, dec_in))?;
            let mut log_w = vec![0.0; samples];
            for r in 0..end - start {
                let [c, s] = biternion_pair(phis[start + r]);
                let (mq, lq) = q.row(r).split_at(l);
                let (mp, lp) = p.row(r).split_at(l);
                for k in 0..samples {
                    let idx = r * samples + k;
                    let y = out.row(idx);
                    let z = &zs[idx * l..(idx + 1) * l];
                    let (nll, ..) = vm_nll_biternion(y[0], y[1], y[2], c, s);
                    log_w[k] = -nll + gaussian_log_density(mp, lp, z) - gaussian_log_density(mq, lq, z);
                }
                result.push(ensure_finite(log_sum_exp(&log_w) - ln_s)?);
            }
        }
        Ok(result)
    }

    /// Single-example sCVAE loss `−log (1/S) Σ p(φ | x, z⁽ˢ⁾)`, `z ~ N(0, I)`.
    pub fn scvae_loss(&self, x: &[f64], phi: Angle, samples: usize, seed: u64) -> Result<f64> {
        let c = self.check_latent_head(false)?;
        let xt = Tensor::matrix(1, x.len(), x.to_vec())?;
        let obj = HeadObjective::new(HeadLoss::ScvaeNegLogLik { samples }, &xt, &[phi], c.latent_dim, seed)?;
        ensure_finite(obj.loss(&self.networks)?)
    }

    /// Predictive density for one input.
    pub fn predictive_density(&self, x: &[f64], seed: u64) -> Result<PredictiveDensity> {
        let xt = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.predictive_densities(&xt, seed)?.remove(0))
    }

    /// Predictive densities for every row of `x`. Latent heads decode
    /// `eval_samples` draws per row, from the conditional prior (CVAE) or
    /// from `N(0, I)` (sCVAE), into an equal-weight mixture.
    pub fn predictive_densities(&self, x: &Tensor, seed: u64) -> Result<Vec<PredictiveDensity>> {
        match self.head {
            HeadKind::FixedKappa { .. } => {
                let kappa = self.require_kappa()?;
                let out = self.networks[0].forward(x)?;
                (0..out.rows())
                    .map(|r| {
                        let y = out.row(r);
                        Ok(VonMises::new(Angle::new(y[1].atan2(y[0])), kappa)?.into())
                    })
                    .collect()
            }
            HeadKind::SingleVonMises => {
                let out = self.networks[0].forward(x)?;
                (0..out.rows())
                    .map(|r| Ok(von_mises_from_row(out.row(r))?.into()))
                    .collect()
            }
            HeadKind::FiniteMixture { components: k } => {
                let out = self.networks[0].forward(x)?;
                (0..out.rows())
                    .map(|r| {
                        let y = out.row(r);
                        let comps = (0..k)
                            .map(|j| von_mises_from_row(&[y[2 * j], y[2 * j + 1], y[2 * k + j]]))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(VonMisesMixture::new(comps, y[3 * k..].to_vec())?.into())
                    })
                    .collect()
            }
            HeadKind::Cvae(c) | HeadKind::Scvae(c) => self.latent_densities(x, c, seed),
        }
    }

    fn latent_densities(&self, x: &Tensor, c: LatentConfig, seed: u64) -> Result<Vec<PredictiveDensity>> {
        let (d, l, samples) = (x.cols(), c.latent_dim, c.eval_samples);
        let cvae = matches!(self.head, HeadKind::Cvae(_));
        let dec = self.networks.last().expect("latent heads have a decoder");
        let mut rng = rng_from_seed(seed);
        let mut result = Vec::with_capacity(x.rows());
        for start in (0..x.rows()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(x.rows());
            let xs = x.slice_rows(start, end);
            let prior = if cvae {
                let p = self.networks[CVAE_PRIOR].forward(&xs)?;
                check_latent_width(&p, l)?;
                Some(p)
            } else {
                None
            };
            let mut dec_in = Vec::with_capacity((end - start) * samples * (d + l));
            for r in 0..end - start {
                for _ in 0..samples {
                    dec_in.extend_from_slice(xs.row(r));
                    for j in 0..l {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        dec_in.push(match &prior {
                            Some(p) => p.row(r)[j] + (0.5 * p.row(r)[l + j]).exp() * e,
                            None => e,
                        });
                    }
                }
            }
            let out = dec.forward(&Tensor::from_raw((end - start) * samples, d + l, dec_in))?;
            for r in 0..end - start {
                let comps = (0..samples)
                    .map(|k| von_mises_from_row(out.row(r * samples + k)))
                    .collect::<Result<Vec<_>>>()?;
                result.push(PredictiveDensity::MonteCarlo(VonMisesMixture::equal_weights(comps)?));
            }
        }
        Ok(result)
    }

    /// Predictive log-density at the true angle for every row: exact for
    /// closed-form heads, the importance-weighted bound with `eval_samples`
    /// draws for the CVAE, and the Monte Carlo estimate for the sCVAE.
    pub fn log_likelihoods(&self, x: &Tensor, phis: &[Angle], seed: u64) -> Result<Vec<f64>> {
        check_rows(x, phis)?;
        match self.head {
            HeadKind::Cvae(c) => self.iwae_log_liks(x, phis, c.eval_samples, seed),
            _ => Ok(self
                .predictive_densities(x, seed)?
                .iter()
                .zip(phis)
                .map(|(d, phi)| d.log_pdf(*phi))
                .collect()),
        }
    }
}

fn check_rows(x: &Tensor, phis: &[Angle]) -> Result<()> {
    if x.rows() != phis.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: phis.len(),
        });
    }
    Ok(())
}

/// Joint log-density of an (azimuth, elevation, tilt) triple, factorized
/// as a product of the three per-angle predictive densities.
pub fn multi_angle_log_pdf(models: &[PredictiveModel; 3], x: &[f64], angles: [Angle; 3], seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, (m, a)) in models.iter().zip(angles).enumerate() {
        total += m.predictive_density(x, derive_seed(seed, i as u64))?.log_pdf(a);
    }
    Ok(total)
}
