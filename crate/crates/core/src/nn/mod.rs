//! Single-hidden-layer feed-forward networks (`d → hidden → k`, ReLU hidden
//! layer, linear outputs) with inverted dropout on the hidden layer,
//! hand-written backpropagation and an Adam trainer.

mod loss;
mod train;

pub use loss::{loss_gauss_nll, loss_lube, loss_mse, loss_pinball, loss_qd, Indicator, LossKind};
pub use train::{fgsm_perturb, train, EarlyStopping, TrainConfig, Trained};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Real;

pub const DEFAULT_HIDDEN: usize = 64;

/// Network weights stored as one flat vector.
///
/// Layout (layer-major, weights before biases):
/// `[W1 (hidden × d, row-major) | b1 (hidden) | W2 (k × hidden, row-major) | b2 (k)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T> {
    n_inputs: usize,
    n_hidden: usize,
    n_outputs: usize,
    dropout: T,
    theta: Vec<T>,
}

/// One named block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Real> NetParams<T> {
    /// Weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(n_inputs: usize, n_hidden: usize, n_outputs: usize, dropout: T, seed: u64) -> Result<Self> {
        if n_inputs == 0 || n_hidden == 0 || n_outputs == 0 {
            return Err(Error::InvalidArgument("network layers must be non-empty".into()));
        }
        if !(dropout >= T::zero() && dropout < T::one()) {
            return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut net = Self::zeros(n_inputs, n_hidden, n_outputs, dropout);
        let mut rng = rng::seeded(seed);
        let layout = net.layout();
        for block in &layout {
            let fan_in = if block.name.ends_with('1') { n_inputs } else { n_hidden };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut net.theta[block.offset..block.offset + block.rows * block.cols] {
                *v = T::lit(bound * (2.0 * rng::unit_f64(&mut rng) - 1.0));
            }
        }
        Ok(net)
    }

    /// [`init`](Self::init) with the output count taken from `loss`. For the
    /// two-head interval losses the output weights start at zero and the
    /// biases at `∓z_{1−α/2}`, so every row starts with an ordered interval
    /// sized for standardized targets.
    pub fn init_for_loss(n_inputs: usize, n_hidden: usize, loss: &LossKind<T>, dropout: T, seed: u64) -> Result<Self> {
        loss.validate()?;
        let mut net = Self::init(n_inputs, n_hidden, loss.n_outputs(), dropout, seed)?;
        if let LossKind::Qd { alpha, .. } | LossKind::Lube { alpha, .. } = loss {
            let z = crate::intervals::z_score(*alpha);
            let blocks = net.layout();
            let (w2, b2) = (&blocks[2], &blocks[3]);
            net.theta[w2.offset..w2.offset + w2.rows * w2.cols].fill(T::zero());
            net.theta[b2.offset] = -z;
            net.theta[b2.offset + 1] = z;
        }
        Ok(net)
    }

    pub fn zeros(n_inputs: usize, n_hidden: usize, n_outputs: usize, dropout: T) -> Self {
        let len = n_hidden * n_inputs + n_hidden + n_outputs * n_hidden + n_outputs;
        Self {
            n_inputs,
            n_hidden,
            n_outputs,
            dropout,
            theta: vec![T::zero(); len],
        }
    }

    /// Rebuilds a network from a flat vector in [`layout`](Self::layout) order.
    pub fn from_flat(n_inputs: usize, n_hidden: usize, n_outputs: usize, dropout: T, theta: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(n_inputs, n_hidden, n_outputs, dropout);
        if theta.len() != net.theta.len() {
            return Err(Error::Dimension {
                expected: net.theta.len(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        net.theta = theta;
        Ok(net)
    }

    pub fn layout(&self) -> Vec<ParamBlock> {
        let (d, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        vec![
            ParamBlock { name: "W1", offset: 0, rows: h, cols: d },
            ParamBlock { name: "b1", offset: h * d, rows: h, cols: 1 },
            ParamBlock { name: "W2", offset: h * d + h, rows: k, cols: h },
            ParamBlock { name: "b2", offset: h * d + h + k * h, rows: k, cols: 1 },
        ]
    }

    pub fn flat(&self) -> &[T] {
        &self.theta
    }

    pub fn flat_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn dropout(&self) -> T {
        self.dropout
    }

    pub fn with_dropout(mut self, p: T) -> Result<Self> {
        if !(p >= T::zero() && p < T::one()) {
            return Err(Error::InvalidArgument(format!("dropout {p} outside [0, 1)")));
        }
        self.dropout = p;
        Ok(self)
    }

    /// Sum of squared parameters.
    pub fn sq_norm(&self) -> T {
        self.theta.iter().map(|&v| v * v).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> T {
        let l = self.layout();
        let w1 = &self.theta[l[0].offset..l[1].offset];
        let w2 = &self.theta[l[2].offset..l[3].offset];
        w1.iter().chain(w2).map(|&v| v * v).sum()
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (d, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        (h * d, h * d + h, h * d + h + k * h)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_inputs {
            return Err(Error::Dimension {
                expected: self.n_inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-unit multipliers: `0` for dropped units, `1/(1−p)` for survivors.
    pub(crate) fn draw_mask(&self, rng: &mut Rng) -> Vec<T> {
        let p = self.dropout.to_f64_lossy();
        let keep = T::one() / (T::one() - self.dropout);
        (0..self.n_hidden)
            .map(|_| if rng::unit_f64(rng) < p { T::zero() } else { keep })
            .collect()
    }

    /// Forward pass. With `dropout_active` the mask is drawn from a stream
    /// seeded by `seed`; otherwise `seed` is ignored.
    pub fn forward(&self, x: &[T], dropout_active: bool, seed: u64) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mask = if dropout_active && self.dropout > T::zero() {
            Some(self.draw_mask(&mut rng::seeded(seed)))
        } else {
            None
        };
        let mut cache = ForwardCache::new(self.n_hidden);
        let mut out = vec![T::zero(); self.n_outputs];
        self.forward_into(x, mask.as_deref(), &mut cache, &mut out);
        Ok(out)
    }

    /// Hidden-layer activations after ReLU and dropout scaling.
    pub fn hidden(&self, x: &[T], dropout_active: bool, seed: u64) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mask = if dropout_active && self.dropout > T::zero() {
            Some(self.draw_mask(&mut rng::seeded(seed)))
        } else {
            None
        };
        let mut cache = ForwardCache::new(self.n_hidden);
        let mut out = vec![T::zero(); self.n_outputs];
        self.forward_into(x, mask.as_deref(), &mut cache, &mut out);
        Ok(cache.act)
    }

    /// Deterministic pass with dropout off.
    pub fn predict(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward(x, false, 0)
    }

    pub(crate) fn forward_into(&self, x: &[T], mask: Option<&[T]>, cache: &mut ForwardCache<T>, out: &mut [T]) {
        let (d, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        let (ob1, ow2, ob2) = self.offsets();
        let th = &self.theta;
        for j in 0..h {
            let w = &th[j * d..(j + 1) * d];
            let z = th[ob1 + j] + w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
            cache.pre[j] = z;
            let a = z.max(T::zero());
            cache.act[j] = match mask {
                Some(m) => a * m[j],
                None => a,
            };
        }
        for (o, slot) in out.iter_mut().enumerate().take(k) {
            let w = &th[ow2 + o * h..ow2 + (o + 1) * h];
            *slot = th[ob2 + o] + w.iter().zip(&cache.act).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// Accumulates parameter gradients into `grad` (flat layout) and, when
    /// `input_grad` is given, writes `∂L/∂x` there.
    pub(crate) fn backward(
        &self,
        x: &[T],
        mask: Option<&[T]>,
        cache: &ForwardCache<T>,
        out_grad: &[T],
        grad: Option<&mut [T]>,
        input_grad: Option<&mut [T]>,
        scratch: &mut Vec<T>,
    ) {
        let (d, h, k) = (self.n_inputs, self.n_hidden, self.n_outputs);
        let (ob1, ow2, ob2) = self.offsets();
        let th = &self.theta;
        scratch.clear();
        scratch.resize(h, T::zero());
        for j in 0..h {
            let mut dh = T::zero();
            for o in 0..k {
                dh = dh + out_grad[o] * th[ow2 + o * h + j];
            }
            let m = mask.map_or(T::one(), |m| m[j]);
            scratch[j] = if cache.pre[j] > T::zero() { dh * m } else { T::zero() };
        }
        if let Some(g) = grad {
            for o in 0..k {
                let go = out_grad[o];
                if go == T::zero() {
                    continue;
                }
                g[ob2 + o] = g[ob2 + o] + go;
                let row = &mut g[ow2 + o * h..ow2 + (o + 1) * h];
                for (gw, &a) in row.iter_mut().zip(&cache.act) {
                    *gw = *gw + go * a;
                }
            }
            for j in 0..h {
                let dz = scratch[j];
                if dz == T::zero() {
                    continue;
                }
                g[ob1 + j] = g[ob1 + j] + dz;
                let row = &mut g[j * d..(j + 1) * d];
                for (gw, &xi) in row.iter_mut().zip(x) {
                    *gw = *gw + dz * xi;
                }
            }
        }
        if let Some(gx) = input_grad {
            for (i, gxi) in gx.iter_mut().enumerate().take(d) {
                let mut s = T::zero();
                for j in 0..h {
                    s = s + scratch[j] * th[j * d + i];
                }
                *gxi = s;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ForwardCache<T> {
    pub pre: Vec<T>,
    pub act: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn new(h: usize) -> Self {
        Self {
            pre: vec![T::zero(); h],
            act: vec![T::zero(); h],
        }
    }
}

/// Batch loss and its gradient with respect to every parameter, evaluated
/// with fixed dropout masks (`None` = dropout off). Rows of `xs` are
/// `net.n_inputs()` long.
pub fn loss_and_gradient<T: Real>(
    net: &NetParams<T>,
    xs: &[T],
    ys: &[T],
    loss: &LossKind<T>,
    masks: Option<&[Vec<T>]>,
) -> Result<(T, Vec<T>)> {
    let mut grad = vec![T::zero(); net.theta.len()];
    let value = accumulate(net, xs, ys, loss, masks, Some(&mut grad), None)?;
    Ok((value, grad))
}

/// Batch loss and its gradient with respect to the inputs (row-major,
/// same shape as `xs`), dropout off.
pub fn input_gradient<T: Real>(net: &NetParams<T>, xs: &[T], ys: &[T], loss: &LossKind<T>) -> Result<(T, Vec<T>)> {
    let mut gx = vec![T::zero(); xs.len()];
    let value = accumulate(net, xs, ys, loss, None, None, Some(&mut gx))?;
    Ok((value, gx))
}

/// Batch loss without gradients.
pub fn batch_loss<T: Real>(net: &NetParams<T>, xs: &[T], ys: &[T], loss: &LossKind<T>) -> Result<T> {
    accumulate(net, xs, ys, loss, None, None, None)
}

pub(crate) fn accumulate<T: Real>(
    net: &NetParams<T>,
    xs: &[T],
    ys: &[T],
    loss: &LossKind<T>,
    masks: Option<&[Vec<T>]>,
    mut grad: Option<&mut [T]>,
    mut input_grad: Option<&mut [T]>,
) -> Result<T> {
    let (d, k) = (net.n_inputs, net.n_outputs);
    if d == 0 || xs.len() != ys.len() * d {
        return Err(Error::Dimension {
            expected: ys.len() * d,
            got: xs.len(),
        });
    }
    if loss.n_outputs() != k {
        return Err(Error::Dimension {
            expected: loss.n_outputs(),
            got: k,
        });
    }
    let n = ys.len();
    let mut caches = Vec::with_capacity(n);
    let mut outputs = vec![T::zero(); n * k];
    for i in 0..n {
        let mut cache = ForwardCache::new(net.n_hidden);
        let mask = masks.map(|m| m[i].as_slice());
        net.forward_into(&xs[i * d..(i + 1) * d], mask, &mut cache, &mut outputs[i * k..(i + 1) * k]);
        caches.push(cache);
    }
    let need_grad = grad.is_some() || input_grad.is_some();
    let mut out_grad = if need_grad { vec![T::zero(); n * k] } else { Vec::new() };
    let value = loss.evaluate(&outputs, ys, if need_grad { Some(&mut out_grad) } else { None });
    if need_grad {
        let mut scratch = Vec::new();
        for i in 0..n {
            let mask = masks.map(|m| m[i].as_slice());
            let gx = input_grad.as_deref_mut().map(|g| &mut g[i * d..(i + 1) * d]);
            net.backward(
                &xs[i * d..(i + 1) * d],
                mask,
                &caches[i],
                &out_grad[i * k..(i + 1) * k],
                grad.as_deref_mut(),
                gx,
                &mut scratch,
            );
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_output_bias() {
        let mut net = NetParams::<f64>::zeros(3, 4, 2, 0.0);
        let l = net.layout();
        net.flat_mut()[l[3].offset] = 0.7;
        net.flat_mut()[l[3].offset + 1] = -1.5;
        assert_eq!(net.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.7, -1.5]);
    }

    #[test]
    fn zero_dropout_matches_inactive_pass() {
        let net = NetParams::<f64>::init(3, 16, 1, 0.0, 4).unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_eq!(net.forward(&x, true, 99).unwrap(), net.forward(&x, false, 0).unwrap());
    }

    #[test]
    fn dropout_pass_is_seed_deterministic() {
        let net = NetParams::<f64>::init(3, 16, 1, 0.5, 4).unwrap();
        let x = [0.3, -0.2, 0.9];
        assert_eq!(net.forward(&x, true, 7).unwrap(), net.forward(&x, true, 7).unwrap());
        let outs: Vec<f64> = (0..20).map(|s| net.forward(&x, true, s).unwrap()[0]).collect();
        assert!(outs.iter().any(|&o| o != outs[0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = NetParams::<f64>::init(3, 4, 1, 0.0, 1).unwrap();
        assert!(matches!(net.forward(&[1.0], false, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flat_round_trip_and_layout() {
        let net = NetParams::<f64>::init(2, 3, 2, 0.1, 8).unwrap();
        let l = net.layout();
        assert_eq!(l.iter().map(|b| b.rows * b.cols).sum::<usize>(), net.flat().len());
        assert_eq!((l[0].offset, l[1].offset, l[2].offset, l[3].offset), (0, 6, 9, 15));
        let back = NetParams::from_flat(2, 3, 2, 0.1, net.flat().to_vec()).unwrap();
        assert_eq!(back, net);
        assert!(NetParams::from_flat(2, 3, 2, 0.1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = NetParams::<f64>::init(16, 64, 2, 0.0, 3).unwrap();
        let l = net.layout();
        assert!(net.flat()[..l[2].offset].iter().all(|v| v.abs() <= 0.25));
        assert!(net.flat()[l[2].offset..].iter().all(|v| v.abs() <= 0.125));
    }

    #[test]
    fn dropout_scaling_is_unbiased() {
        let net = NetParams::<f64>::init(2, 8, 1, 0.3, 5).unwrap();
        let x = [0.4, -0.7];
        let clean = net.hidden(&x, false, 0).unwrap();
        let trials = 10_000;
        let mut sum = vec![0.0; 8];
        let mut sq = vec![0.0; 8];
        for s in 0..trials {
            let h = net.hidden(&x, true, s).unwrap();
            for j in 0..8 {
                sum[j] += h[j];
                sq[j] += h[j] * h[j];
            }
        }
        for j in 0..8 {
            let m = sum[j] / trials as f64;
            let var = sq[j] / trials as f64 - m * m;
            let se = (var / trials as f64).sqrt();
            assert!((m - clean[j]).abs() <= 3.0 * se + 1e-12, "unit {j}: {m} vs {}", clean[j]);
        }
    }
}
