//! The two trainers.
//!
//! Both update only `W`; the sign layer `a` and the snapshot `W₀` are never
//! touched. Minibatches come from a seeded shuffle every epoch.

use alloc::vec::Vec;

use crate::attacks::{pgd_attack, PgdConfig, PgdStep};
use crate::data::LabeledDataset;
use crate::linalg::{axpy_in_place, Matrix};
use crate::network::{softplus_neg, NetworkParams};
use crate::rng::Rng;
use crate::{Error, Result};

/// Lazy-ball radius, either `C₀/√m` or a free radius `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LazyRadius {
    C0(f64),
    V(f64),
}

impl LazyRadius {
    pub fn resolve(self, m: usize) -> Result<f64> {
        let r = match self {
            LazyRadius::C0(c0) => c0 / libm::sqrt(m as f64),
            LazyRadius::V(v) => v,
        };
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument("lazy radius must be finite and non-negative"));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Step size of plain SGD on the mean minibatch loss.
    pub lr_sgd: f64,
    /// Step size of adversarial training on the summed minibatch loss.
    pub beta: f64,
    pub batch_size: usize,
    pub radius: LazyRadius,
    pub max_epochs: usize,
    /// Inner PGD iterations per epoch.
    pub inner_pgd_steps: usize,
    /// Per-sample perturbation budget `R`.
    pub pgd_budget: f64,
    /// Inner PGD step size; `None` means `2.5·R/inner_pgd_steps`.
    pub pgd_alpha: Option<f64>,
    pub pgd_step: PgdStep,
    /// Epochs without a new best robust training accuracy before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_sgd: 0.1,
            beta: 0.01,
            batch_size: 128,
            radius: LazyRadius::C0(10.0),
            max_epochs: 20,
            inner_pgd_steps: 100,
            pgd_budget: 0.2,
            pgd_alpha: None,
            pgd_step: PgdStep::Normalized,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_sgd > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.inner_pgd_steps == 0 {
            return Err(Error::InvalidArgument("batch size, epochs and inner steps must be at least 1"));
        }
        if let Some(a) = self.pgd_alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument("PGD step size must be positive"));
            }
        }
        Ok(())
    }

    pub fn inner_pgd(&self) -> PgdConfig {
        let mut cfg = PgdConfig::standard(self.pgd_budget, self.inner_pgd_steps);
        if let Some(a) = self.pgd_alpha {
            cfg.alpha = a;
        }
        cfg.step = self.pgd_step;
        cfg.early_stop = false;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    LazyExit,
    Patience,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::LazyExit => "lazy-exit",
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max-epochs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss (on the adversarial set for adversarial training).
    pub loss: f64,
    /// Clean training accuracy.
    pub acc: f64,
    /// Robust training accuracy, adversarial training only.
    pub robust_acc: Option<f64>,
    pub lazy_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub steps_committed: usize,
    pub radius: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

fn mean_loss_and_acc(p: &NetworkParams, data: &LabeledDataset) -> (f64, f64) {
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (x, y) in data.iter() {
        let yf = y as f64 * p.forward_unchecked(x);
        loss += softplus_neg(yf);
        if yf > 0.0 {
            hits += 1;
        }
    }
    let n = data.len() as f64;
    (loss / n, hits as f64 / n)
}

fn check_data(p: &NetworkParams, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.d() != p.d() {
        return Err(Error::DimensionMismatch { expected: p.d(), found: data.d() });
    }
    Ok(())
}

/// Whether `W − lr·G` would leave the ball of radius `radius` around `W₀`.
fn step_leaves_ball(p: &NetworkParams, grad: &Matrix, lr: f64, radius: f64) -> bool {
    p.w().columns().zip(p.w0().columns()).zip(grad.columns()).any(|((w, w0), g)| {
        let mut acc = 0.0;
        for ((wi, w0i), gi) in w.iter().zip(w0).zip(g) {
            let t = wi - lr * gi - w0i;
            acc += t * t;
        }
        libm::sqrt(acc) > radius
    })
}

fn apply_step(p: &mut NetworkParams, grad: &Matrix, lr: f64) {
    axpy_in_place(-lr, grad.as_slice(), p.w_mut().as_mut_slice());
}

/// Minibatch SGD on the mean logistic loss that stops as soon as an update
/// would take some neuron further than the lazy radius from its
/// initialisation. That update is discarded, so the returned parameters always
/// satisfy `lazy_deviation() <= radius`.
pub fn sgd_lazy_train(
    p: NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    sgd_lazy_train_with(p, data, cfg, |_, _| {})
}

/// [`sgd_lazy_train`] with a callback after every epoch.
pub fn sgd_lazy_train_with<F>(
    mut p: NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(NetworkParams, TrainReport)>
where
    F: FnMut(&EpochRecord, &NetworkParams),
{
    cfg.validate()?;
    check_data(&p, data)?;
    let radius = cfg.radius.resolve(p.m())?;
    let mut rng = Rng::with_stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::new();
    let mut steps = 0usize;
    let mut stop = StopReason::MaxEpochs;

    'outer: for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let (grad, loss, _) = p.weight_gradient_and_loss(batch.iter().map(|&i| (data.x(i), data.y(i))))?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Divergence { step: steps });
            }
            if step_leaves_ball(&p, &grad, cfg.lr_sgd, radius) {
                stop = StopReason::LazyExit;
                let (loss, acc) = mean_loss_and_acc(&p, data);
                let rec = EpochRecord { epoch, loss, acc, robust_acc: None, lazy_dev: p.lazy_deviation() };
                on_epoch(&rec, &p);
                epochs.push(rec);
                break 'outer;
            }
            apply_step(&mut p, &grad, cfg.lr_sgd);
            steps += 1;
        }
        let (loss, acc) = mean_loss_and_acc(&p, data);
        if !loss.is_finite() {
            return Err(Error::Divergence { step: steps });
        }
        let rec = EpochRecord { epoch, loss, acc, robust_acc: None, lazy_dev: p.lazy_deviation() };
        on_epoch(&rec, &p);
        epochs.push(rec);
    }
    Ok((p, TrainReport { epochs, stop_reason: stop, steps_committed: steps, radius }))
}

/// Projected adversarial training.
///
/// Every epoch: (i) replace each training input by the result of
/// `inner_pgd_steps` ℓ₂ PGD ascent steps on its own loss within `B(x_i, R)`,
/// started at `x_i`; (ii) run `⌊n/bs⌋` minibatch steps
/// `W ← W − β ∇_W Σ_{j∈batch} ℓ(y_j f(x̃_j))` on that adversarial set,
/// projecting `W` back onto the lazy ball after each step. The robust training
/// accuracy of an epoch is the accuracy on its adversarial set before the
/// update; training stops once it has not improved for `patience` epochs.
pub fn projected_adversarial_train(
    p: NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    projected_adversarial_train_with(p, data, cfg, |_, _| {})
}

pub fn projected_adversarial_train_with<F>(
    mut p: NetworkParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(NetworkParams, TrainReport)>
where
    F: FnMut(&EpochRecord, &NetworkParams),
{
    cfg.validate()?;
    check_data(&p, data)?;
    if !(cfg.pgd_budget > 0.0) {
        return Err(Error::InvalidArgument("perturbation budget R must be positive"));
    }
    let radius = cfg.radius.resolve(p.m())?;
    let pgd = cfg.inner_pgd();
    let mut rng = Rng::with_stream(cfg.seed, 2);
    let n = data.len();
    let bs = cfg.batch_size.min(n);
    let rounds = (n / bs).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adv = Vec::with_capacity(n * p.d());
    let mut epochs = Vec::new();
    let mut steps = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        adv.clear();
        let mut robust_hits = 0usize;
        let mut adv_loss = 0.0;
        for (x, y) in data.iter() {
            let o = pgd_attack(&p, x, y, &pgd)?;
            let yf = y as f64 * o.f_after;
            if yf > 0.0 && !o.success {
                robust_hits += 1;
            }
            adv_loss += softplus_neg(yf);
            adv.extend_from_slice(&o.x_adv);
        }
        let robust_acc = robust_hits as f64 / n as f64;
        let adv_x = |i: usize| &adv[i * data.d()..(i + 1) * data.d()];

        rng.shuffle(&mut order);
        for batch in order.chunks(bs).take(rounds) {
            let (grad, loss, nb) = p.weight_gradient_and_loss(batch.iter().map(|&i| (adv_x(i), data.y(i))))?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Divergence { step: steps });
            }
            // the mean gradient times the batch size is the gradient of the summed loss
            apply_step(&mut p, &grad, cfg.beta * nb as f64);
            p.project_weights_in_place(radius)?;
            steps += 1;
        }
        p.project_weights_in_place(radius)?;

        let (_, acc) = mean_loss_and_acc(&p, data);
        let rec = EpochRecord {
            epoch,
            loss: adv_loss / n as f64,
            acc,
            robust_acc: Some(robust_acc),
            lazy_dev: p.lazy_deviation(),
        };
        on_epoch(&rec, &p);
        epochs.push(rec);

        if robust_acc > best {
            best = robust_acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    Ok((p, TrainReport { epochs, stop_reason: stop, steps_committed: steps, radius }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_sphere;
    use crate::network::init_network;

    #[test]
    fn zero_radius_sgd_keeps_initialisation() {
        let data = synth_sphere(&mut Rng::new(1), 10, 64, 0.5).unwrap();
        let p = init_network(&mut Rng::new(2), 10, 30).unwrap();
        let cfg = TrainConfig { radius: LazyRadius::C0(0.0), ..TrainConfig::default() };
        let (q, rep) = sgd_lazy_train(p.clone(), &data, &cfg).unwrap();
        assert_eq!(q, p);
        assert_eq!(rep.steps_committed, 0);
        assert_eq!(rep.stop_reason, StopReason::LazyExit);
    }

    #[test]
    fn zero_radius_adversarial_training_keeps_initialisation() {
        let data = synth_sphere(&mut Rng::new(1), 8, 40, 0.5).unwrap();
        let p = init_network(&mut Rng::new(2), 8, 20).unwrap();
        let cfg = TrainConfig {
            radius: LazyRadius::V(0.0),
            max_epochs: 3,
            inner_pgd_steps: 5,
            pgd_budget: 0.1,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (q, _) = projected_adversarial_train(p.clone(), &data, &cfg).unwrap();
        assert_eq!(q, p);
    }

    #[test]
    fn trainer_errors() {
        let data = synth_sphere(&mut Rng::new(1), 8, 10, 0.5).unwrap();
        let p = init_network(&mut Rng::new(2), 9, 20).unwrap();
        assert!(matches!(
            sgd_lazy_train(p.clone(), &data, &TrainConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let p = init_network(&mut Rng::new(2), 8, 20).unwrap();
        let cfg = TrainConfig { pgd_budget: 0.0, ..TrainConfig::default() };
        assert!(projected_adversarial_train(p.clone(), &data, &cfg).is_err());
        let cfg = TrainConfig { lr_sgd: 0.0, ..TrainConfig::default() };
        assert!(sgd_lazy_train(p, &data, &cfg).is_err());
    }

    #[test]
    fn sgd_learns_synthetic_data_inside_the_ball() {
        let mut rng = Rng::new(10);
        let data = synth_sphere(&mut rng, 100, 1000, 0.8).unwrap();
        let p = init_network(&mut Rng::new(11), 100, 1000).unwrap();
        let cfg = TrainConfig { radius: LazyRadius::C0(10.0), max_epochs: 30, ..TrainConfig::default() };
        let (q, rep) = sgd_lazy_train(p.clone(), &data, &cfg).unwrap();
        assert!(q.lazy_deviation() <= 10.0 / libm::sqrt(1000.0));
        assert_eq!(q.a(), p.a());
        assert_eq!(q.w0(), p.w0());
        let acc = q.accuracy(data.iter());
        assert!(acc >= 0.99, "acc {acc}, report {:?}", rep.stop_reason);
    }
}
