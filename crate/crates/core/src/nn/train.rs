use std::time::Instant;

use super::{accumulate, batch_loss, input_gradient, LossKind, NetParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum EarlyStopping<T> {
    None,
    /// Keep the parameters with the lowest validation loss.
    Loss,
    /// Keep the parameters with the narrowest mean validation interval among
    /// epochs reaching validation coverage `1 − alpha` (highest coverage if
    /// none does). Intervals come from the first and last output heads.
    Interval { alpha: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    /// `None`: full batch up to 1024 rows, otherwise 256.
    pub batch_size: Option<usize>,
    pub l2_lambda: T,
    pub early_stopping: EarlyStopping<T>,
    pub patience: usize,
    pub seed: u64,
    /// FGSM step per feature; when set each step minimizes `L(X) + L(X′)`.
    pub adversarial_eta: Option<Vec<T>>,
    pub deadline: Option<Instant>,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(5e-4),
            epochs: 100,
            batch_size: None,
            l2_lambda: T::lit(1e-6),
            early_stopping: EarlyStopping::None,
            patience: 10,
            seed: 0,
            adversarial_eta: None,
            deadline: None,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b.clamp(1, n),
            None if n <= 1024 => n,
            None => 256,
        }
    }
}

/// Result of [`train`]: the selected parameters plus per-epoch losses.
/// `train_loss[0]` / `val_loss[0]` are measured before the first update.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub net: NetParams<T>,
    pub train_loss: Vec<T>,
    pub val_loss: Vec<T>,
    pub best_epoch: usize,
}

fn gather<T: Real>(ds: &Dataset<T>, idx: &[usize]) -> (Vec<T>, Vec<T>) {
    let mut xs = Vec::with_capacity(idx.len() * ds.d());
    let mut ys = Vec::with_capacity(idx.len());
    for &i in idx {
        xs.extend_from_slice(ds.row(i));
        ys.push(ds.target(i));
    }
    (xs, ys)
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn apply_fgsm<T: Real>(xs: &[T], gx: &[T], eta: &[T]) -> Vec<T> {
    let d = eta.len();
    xs.iter()
        .zip(gx)
        .enumerate()
        .map(|(k, (&x, &g))| x + eta[k % d] * sign(g))
        .collect()
}

/// Fast-gradient-sign perturbation `x + η ⊙ sign(∂L/∂x)` of every row
/// (dropout off, `sign(0) = 0`).
pub fn fgsm_perturb<T: Real>(net: &NetParams<T>, batch: &[T], y: &[T], eta: &[T], loss: &LossKind<T>) -> Result<Vec<T>> {
    if eta.len() != net.n_inputs() {
        return Err(Error::Dimension {
            expected: net.n_inputs(),
            got: eta.len(),
        });
    }
    if eta.iter().any(|&e| e < T::zero()) {
        return Err(Error::InvalidArgument("FGSM step sizes must be non-negative".into()));
    }
    let (_, gx) = input_gradient(net, batch, y, loss)?;
    Ok(apply_fgsm(batch, &gx, eta))
}

#[derive(Clone, Copy)]
struct IntervalScore<T> {
    feasible: bool,
    coverage: T,
    width: T,
}

impl<T: Real> IntervalScore<T> {
    fn better_than(&self, other: &Self) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.width < other.width,
            (false, false) => self.coverage > other.coverage,
        }
    }
}

fn interval_score<T: Real>(net: &NetParams<T>, val: &Dataset<T>, alpha: T) -> Result<IntervalScore<T>> {
    let k = net.n_outputs();
    let (mut hit, mut width) = (0usize, T::zero());
    for (i, x) in val.rows().enumerate() {
        let out = net.predict(x)?;
        let (a, b) = (out[0], out[k - 1]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo <= val.target(i) && val.target(i) <= hi {
            hit += 1;
        }
        width = width + (hi - lo);
    }
    let n = T::from_count(val.n());
    let coverage = T::from_count(hit) / n;
    Ok(IntervalScore {
        feasible: coverage >= T::one() - alpha,
        coverage,
        width: width / n,
    })
}

/// Adam on `loss + λ‖θ‖²` with per-row dropout masks, optional FGSM
/// augmentation and optional early stopping on `val`.
pub fn train<T: Real>(
    net: &NetParams<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    cfg: &TrainConfig<T>,
    loss: &LossKind<T>,
) -> Result<Trained<T>> {
    loss.validate()?;
    if train.d() != net.n_inputs() {
        return Err(Error::Dimension {
            expected: net.n_inputs(),
            got: train.d(),
        });
    }
    if loss.n_outputs() != net.n_outputs() {
        return Err(Error::Dimension {
            expected: loss.n_outputs(),
            got: net.n_outputs(),
        });
    }
    if !(cfg.learning_rate >= T::zero()) || cfg.epochs == 0 {
        return Err(Error::InvalidArgument("learning rate must be ≥ 0 and epochs ≥ 1".into()));
    }
    let val = match (&cfg.early_stopping, val) {
        (EarlyStopping::None, v) => v,
        (_, Some(v)) if v.n() > 0 => Some(v),
        _ => return Err(Error::Empty("validation set for early stopping")),
    };
    if let Some(eta) = &cfg.adversarial_eta {
        if eta.len() != net.n_inputs() || eta.iter().any(|&e| e < T::zero()) {
            return Err(Error::InvalidArgument("FGSM step vector must be d non-negative values".into()));
        }
    }

    let n = train.n();
    let batch = cfg.effective_batch(n);
    let mut net = net.clone();
    let p = net.flat().len();
    let (mut m, mut v) = (vec![T::zero(); p], vec![T::zero(); p]);
    let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let (all_x, all_y) = gather(train, &order);
    let val_xy = val.map(|v| gather(v, &(0..v.n()).collect::<Vec<_>>()));

    let mut train_loss = vec![batch_loss(&net, &all_x, &all_y, loss)?];
    let mut val_loss = Vec::new();
    let mut best = (net.clone(), 0usize);
    let mut best_loss = T::infinity();
    let mut best_interval: Option<IntervalScore<T>> = None;
    let mut consider = |net: &NetParams<T>, epoch: usize, val_loss: &mut Vec<T>| -> Result<bool> {
        let Some((vx, vy)) = &val_xy else { return Ok(false) };
        let vl = batch_loss(net, vx, vy, loss)?;
        val_loss.push(vl);
        let improved = match &cfg.early_stopping {
            EarlyStopping::None => false,
            EarlyStopping::Loss => {
                let better = vl < best_loss;
                if better {
                    best_loss = vl;
                }
                better
            }
            EarlyStopping::Interval { alpha } => {
                let score = interval_score(net, val.expect("validation set"), *alpha)?;
                let better = best_interval.as_ref().is_none_or(|b| score.better_than(b));
                if better {
                    best_interval = Some(score);
                }
                better
            }
        };
        if improved {
            best = (net.clone(), epoch);
        }
        Ok(improved)
    };
    consider(&net, 0, &mut val_loss)?;

    let mut grad = vec![T::zero(); p];
    let mut step = 0i32;
    let mut since_best = 0usize;
    for epoch in 1..=cfg.epochs {
        if cfg.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(Error::Timeout);
        }
        rng::shuffle(&mut rng, &mut order);
        for chunk in order.chunks(batch) {
            let (xs, ys) = gather(train, chunk);
            let masks: Option<Vec<Vec<T>>> = if net.dropout() > T::zero() {
                Some(chunk.iter().map(|_| net.draw_mask(&mut rng)).collect())
            } else {
                None
            };
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut gx = cfg.adversarial_eta.as_ref().map(|_| vec![T::zero(); xs.len()]);
            let mut value = accumulate(&net, &xs, &ys, loss, masks.as_deref(), Some(&mut grad), gx.as_deref_mut())?;
            if let (Some(eta), Some(gx)) = (&cfg.adversarial_eta, &gx) {
                let adv = apply_fgsm(&xs, gx, eta);
                value = value + accumulate(&net, &adv, &ys, loss, masks.as_deref(), Some(&mut grad), None)?;
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            step += 1;
            let (c1, c2) = (T::one() - b1.powi(step), T::one() - b2.powi(step));
            let two_l2 = T::lit(2.0) * cfg.l2_lambda;
            let theta = net.flat_mut();
            for k in 0..p {
                let g = grad[k] + two_l2 * theta[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                theta[k] = theta[k] - cfg.learning_rate * mh / (vh.sqrt() + eps);
            }
        }
        let tl = batch_loss(&net, &all_x, &all_y, loss)?;
        if !tl.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        train_loss.push(tl);
        if consider(&net, epoch, &mut val_loss)? {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if !matches!(cfg.early_stopping, EarlyStopping::None) && since_best > cfg.patience {
            break;
        }
    }
    let (net, best_epoch) = match cfg.early_stopping {
        EarlyStopping::None => {
            let last = train_loss.len() - 1;
            (net, last)
        }
        _ => best,
    };
    Ok(Trained {
        net,
        train_loss,
        val_loss,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind, SyntheticSpec};

    fn linear_data(n: usize, noise: f64, seed: u64) -> Dataset<f64> {
        gen_synthetic(&SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, n, 2, noise), seed).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let ds = linear_data(40, 0.1, 1);
        let net = NetParams::init(2, 8, 1, 0.2, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(&net, &ds, None, &cfg, &LossKind::Mse).unwrap();
        assert_eq!(out.net, net);
    }

    #[test]
    fn mse_training_halves_loss_on_noiseless_data() {
        let ds = linear_data(200, 0.0, 2);
        let net = NetParams::init(2, 64, 1, 0.0, 5).unwrap();
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let out = train(&net, &ds, None, &cfg, &LossKind::Mse).unwrap();
        let (first, last) = (out.train_loss[0], *out.train_loss.last().unwrap());
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = linear_data(64, 0.2, 3);
        let net = NetParams::init(2, 16, 2, 0.1, 6).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: Some(16),
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train(&net, &ds, None, &cfg, &LossKind::GaussNll).unwrap();
        let b = train(&net, &ds, None, &cfg, &LossKind::GaussNll).unwrap();
        assert_eq!(a.net.flat(), b.net.flat());
    }

    #[test]
    fn huge_l2_shrinks_weights_monotonically() {
        let ds = linear_data(64, 0.2, 4);
        let net = NetParams::init(2, 16, 1, 0.0, 7).unwrap();
        let mut norms = vec![net.weight_sq_norm()];
        let mut cur = net;
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 1,
            l2_lambda: 1e6,
            ..TrainConfig::default()
        };
        // one epoch at a time, carrying parameters (fresh Adam state each call)
        for _ in 0..40 {
            cur = train(&cur, &ds, None, &cfg, &LossKind::Mse).unwrap().net;
            norms.push(cur.weight_sq_norm());
        }
        for w in norms[5..].windows(2) {
            assert!(w[1] <= w[0], "{:?}", w);
        }
        assert!(norms.last().unwrap() < &norms[0]);
    }

    #[test]
    fn early_stopping_needs_validation() {
        let ds = linear_data(30, 0.2, 5);
        let net = NetParams::init(2, 8, 1, 0.0, 1).unwrap();
        let cfg = TrainConfig {
            early_stopping: EarlyStopping::Loss,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&net, &ds, None, &cfg, &LossKind::Mse), Err(Error::Empty(_))));
    }

    #[test]
    fn early_stopping_restores_best_validation_loss() {
        let ds = linear_data(120, 0.5, 6);
        let val = linear_data(40, 0.5, 7);
        let net = NetParams::init(2, 32, 1, 0.0, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 60,
            early_stopping: EarlyStopping::Loss,
            patience: 5,
            ..TrainConfig::default()
        };
        let out = train(&net, &ds, Some(&val), &cfg, &LossKind::Mse).unwrap();
        let best = out.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(out.val_loss[out.best_epoch], best);
        let (vx, vy) = gather(&val, &(0..val.n()).collect::<Vec<_>>());
        assert_eq!(batch_loss(&out.net, &vx, &vy, &LossKind::Mse).unwrap(), best);
    }

    #[test]
    fn fgsm_steps_are_signed_eta() {
        let ds = linear_data(10, 0.3, 8);
        let net = NetParams::init(2, 8, 1, 0.0, 3).unwrap();
        let (xs, ys) = gather(&ds, &(0..10).collect::<Vec<_>>());
        let same = fgsm_perturb(&net, &xs, &ys, &[0.0, 0.0], &LossKind::Mse).unwrap();
        assert_eq!(same, xs);
        let eta = [0.05, 0.2];
        let adv = fgsm_perturb(&net, &xs, &ys, &eta, &LossKind::Mse).unwrap();
        for (k, (a, x)) in adv.iter().zip(&xs).enumerate() {
            let step = (a - x).abs();
            assert!(step == 0.0 || (step - eta[k % 2]).abs() < 1e-12);
        }
        assert!(fgsm_perturb(&net, &xs, &ys, &[0.1], &LossKind::Mse).is_err());
    }

    #[test]
    fn fgsm_does_not_decrease_loss_for_small_steps() {
        let ds = linear_data(32, 0.3, 9);
        let (xs, ys) = gather(&ds, &(0..32).collect::<Vec<_>>());
        let mut ascents = 0;
        for seed in 0..50 {
            let net = NetParams::init(2, 16, 2, 0.0, seed).unwrap();
            let before = batch_loss(&net, &xs, &ys, &LossKind::GaussNll).unwrap();
            let adv = fgsm_perturb(&net, &xs, &ys, &[1e-4, 1e-4], &LossKind::GaussNll).unwrap();
            let after = batch_loss(&net, &adv, &ys, &LossKind::GaussNll).unwrap();
            if after >= before {
                ascents += 1;
            }
        }
        assert_eq!(ascents, 50);
    }
}
