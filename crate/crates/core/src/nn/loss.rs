use crate::scalar::Real;

pub fn loss_mse<T: Real>(pred: T, y: T) -> T {
    (pred - y) * (pred - y)
}

/// Gaussian negative log-likelihood (without the constant), parameterized
/// by the log-variance: `(y − μ)²/(2σ²) + ½ log σ²`.
pub fn loss_gauss_nll<T: Real>(mean: T, log_var: T, y: T) -> T {
    let r = y - mean;
    let half = T::lit(0.5);
    half * r * r * (-log_var).exp() + half * log_var
}

/// Pinball (quantile) loss `max((1 − τ)(q − y), τ(y − q))`.
pub fn loss_pinball<T: Real>(q_hat: T, y: T, level: T) -> T {
    ((T::one() - level) * (q_hat - y)).max(level * (y - q_hat))
}

/// Containment indicator used by the interval losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Indicator<T> {
    /// Closed-interval containment.
    Hard,
    /// `sig(s(y − l))·sig(s(u − y))` with steepness `s`.
    Soft(T),
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Indicator<T> {
    /// Containment value and its derivatives with respect to `(l, u)`.
    fn eval(self, l: T, u: T, y: T) -> (T, T, T) {
        match self {
            Indicator::Hard => {
                let k = if l <= y && y <= u { T::one() } else { T::zero() };
                (k, T::zero(), T::zero())
            }
            Indicator::Soft(s) => {
                let a = sigmoid(s * (y - l));
                let b = sigmoid(s * (u - y));
                (a * b, -s * a * (T::one() - a) * b, s * b * (T::one() - b) * a)
            }
        }
    }
}

fn qd_penalty_scale<T: Real>(n: usize, alpha: T, lambda: T) -> T {
    lambda * T::from_count(n) / (alpha * (T::one() - alpha))
}

/// Quality-driven interval loss
/// `MPIW_capt + λ·n/(α(1−α))·max(0, (1−α) − C)²`, where the captured mean
/// width averages `u − l` over captured points and `C` is the captured
/// fraction. Panics if the slices are empty or of unequal length.
pub fn loss_qd<T: Real>(l: &[T], u: &[T], y: &[T], alpha: T, lambda: T, indicator: Indicator<T>) -> T {
    qd_with_grad(l, u, y, alpha, lambda, indicator, None)
}

pub(crate) fn qd_with_grad<T: Real>(
    l: &[T],
    u: &[T],
    y: &[T],
    alpha: T,
    lambda: T,
    indicator: Indicator<T>,
    grad: Option<(&mut [T], &mut [T])>,
) -> T {
    let n = y.len();
    assert!(n > 0 && l.len() == n && u.len() == n, "loss_qd needs equal non-empty slices");
    let mut ks = Vec::with_capacity(n);
    let (mut captured, mut weighted) = (T::zero(), T::zero());
    for i in 0..n {
        let e = indicator.eval(l[i], u[i], y[i]);
        captured = captured + e.0;
        weighted = weighted + e.0 * (u[i] - l[i]);
        ks.push(e);
    }
    let mpiw = if captured > T::zero() { weighted / captured } else { T::zero() };
    let coverage = captured / T::from_count(n);
    let shortfall = (T::one() - alpha - coverage).max(T::zero());
    let scale = qd_penalty_scale(n, alpha, lambda);
    if let Some((gl, gu)) = grad {
        let dpen_dc = -T::lit(2.0) * scale * shortfall;
        let inv_n = T::one() / T::from_count(n);
        for i in 0..n {
            let (k, dkl, dku) = ks[i];
            let w = u[i] - l[i];
            let (mut a, mut b) = (T::zero(), T::zero());
            if captured > T::zero() {
                a = (dkl * (w - mpiw) - k) / captured;
                b = (dku * (w - mpiw) + k) / captured;
            }
            gl[i] = a + dpen_dc * dkl * inv_n;
            gu[i] = b + dpen_dc * dku * inv_n;
        }
    }
    mpiw + scale * shortfall * shortfall
}

/// LUBE loss `MPIW/r · (1 + exp(λ·max(0, (1−α) − C)))` with `r` the
/// response range.
pub fn loss_lube<T: Real>(l: &[T], u: &[T], y: &[T], alpha: T, lambda: T, range: T, indicator: Indicator<T>) -> T {
    lube_with_grad(l, u, y, alpha, lambda, range, indicator, None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lube_with_grad<T: Real>(
    l: &[T],
    u: &[T],
    y: &[T],
    alpha: T,
    lambda: T,
    range: T,
    indicator: Indicator<T>,
    grad: Option<(&mut [T], &mut [T])>,
) -> T {
    let n = y.len();
    assert!(n > 0 && l.len() == n && u.len() == n, "loss_lube needs equal non-empty slices");
    let nn = T::from_count(n);
    let mut ks = Vec::with_capacity(n);
    let (mut captured, mut width) = (T::zero(), T::zero());
    for i in 0..n {
        let e = indicator.eval(l[i], u[i], y[i]);
        captured = captured + e.0;
        width = width + (u[i] - l[i]).abs();
        ks.push(e);
    }
    let mpiw = width / nn;
    let shortfall = (T::one() - alpha - captured / nn).max(T::zero());
    let e = (lambda * shortfall).exp();
    if let Some((gl, gu)) = grad {
        let active = shortfall > T::zero();
        for i in 0..n {
            let sgn = if u[i] >= l[i] { T::one() } else { -T::one() };
            let (_, dkl, dku) = ks[i];
            let mut a = -sgn / (nn * range) * (T::one() + e);
            let mut b = sgn / (nn * range) * (T::one() + e);
            if active {
                let c = mpiw / range * e * lambda / nn;
                a = a - c * dkl;
                b = b - c * dku;
            }
            gl[i] = a;
            gu[i] = b;
        }
    }
    mpiw / range * (T::one() + e)
}

/// Training objective and the output-head layout it implies.
#[derive(Clone, Debug, PartialEq)]
pub enum LossKind<T> {
    /// One head, summed squared error.
    Mse,
    /// Two heads `(mean, log-variance)`, summed Gaussian NLL.
    GaussNll,
    /// One head per quantile level, summed pinball losses.
    Pinball(Vec<T>),
    /// Two heads `(lower, upper)`, quality-driven loss with soft coverage.
    Qd { alpha: T, lambda: T, softness: T },
    /// Two heads `(lower, upper)`, LUBE loss with soft coverage.
    Lube { alpha: T, lambda: T, softness: T, range: T },
}

impl<T: Real> LossKind<T> {
    /// Default soft-indicator steepness for the interval losses.
    pub const DEFAULT_SOFTNESS: f64 = 160.0;

    pub fn qd(alpha: T, lambda: T) -> Self {
        LossKind::Qd {
            alpha,
            lambda,
            softness: T::lit(Self::DEFAULT_SOFTNESS),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self {
            LossKind::Mse => 1,
            LossKind::GaussNll | LossKind::Qd { .. } | LossKind::Lube { .. } => 2,
            LossKind::Pinball(levels) => levels.len(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        let ok = match self {
            LossKind::Mse | LossKind::GaussNll => true,
            LossKind::Pinball(levels) => !levels.is_empty() && levels.iter().all(|&l| unit(l)),
            LossKind::Qd { alpha, lambda, softness } => unit(*alpha) && *lambda >= T::zero() && *softness > T::zero(),
            LossKind::Lube {
                alpha,
                lambda,
                softness,
                range,
            } => unit(*alpha) && *lambda >= T::zero() && *softness > T::zero() && *range > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(format!("invalid loss parameters {self:?}")))
        }
    }

    /// Total loss over a batch of outputs (row-major `n × k`). When `grad`
    /// is given it receives `∂L/∂output`, same shape as `outputs`.
    pub fn evaluate(&self, outputs: &[T], ys: &[T], grad: Option<&mut [T]>) -> T {
        let k = self.n_outputs();
        let n = ys.len();
        match self {
            LossKind::Mse => {
                let mut total = T::zero();
                let mut g = grad;
                for i in 0..n {
                    let r = outputs[i] - ys[i];
                    total = total + r * r;
                    if let Some(g) = g.as_deref_mut() {
                        g[i] = T::lit(2.0) * r;
                    }
                }
                total
            }
            LossKind::GaussNll => {
                let mut total = T::zero();
                let mut g = grad;
                let half = T::lit(0.5);
                for i in 0..n {
                    let (m, lv) = (outputs[2 * i], outputs[2 * i + 1]);
                    total = total + loss_gauss_nll(m, lv, ys[i]);
                    if let Some(g) = g.as_deref_mut() {
                        let r = ys[i] - m;
                        let inv = (-lv).exp();
                        g[2 * i] = -r * inv;
                        g[2 * i + 1] = half - half * r * r * inv;
                    }
                }
                total
            }
            LossKind::Pinball(levels) => {
                let mut total = T::zero();
                let mut g = grad;
                for i in 0..n {
                    for (j, &tau) in levels.iter().enumerate() {
                        let q = outputs[i * k + j];
                        total = total + loss_pinball(q, ys[i], tau);
                        if let Some(g) = g.as_deref_mut() {
                            // subgradient at the kink: the (1 − τ) branch
                            g[i * k + j] = if q >= ys[i] { T::one() - tau } else { -tau };
                        }
                    }
                }
                total
            }
            LossKind::Qd { alpha, lambda, softness } => {
                let (l, u) = split_heads(outputs, n);
                match grad {
                    Some(g) => {
                        let (mut gl, mut gu) = (vec![T::zero(); n], vec![T::zero(); n]);
                        let v = qd_with_grad(&l, &u, ys, *alpha, *lambda, Indicator::Soft(*softness), Some((&mut gl, &mut gu)));
                        interleave(g, &gl, &gu);
                        v
                    }
                    None => qd_with_grad(&l, &u, ys, *alpha, *lambda, Indicator::Soft(*softness), None),
                }
            }
            LossKind::Lube {
                alpha,
                lambda,
                softness,
                range,
            } => {
                let (l, u) = split_heads(outputs, n);
                let ind = Indicator::Soft(*softness);
                match grad {
                    Some(g) => {
                        let (mut gl, mut gu) = (vec![T::zero(); n], vec![T::zero(); n]);
                        let v = lube_with_grad(&l, &u, ys, *alpha, *lambda, *range, ind, Some((&mut gl, &mut gu)));
                        interleave(g, &gl, &gu);
                        v
                    }
                    None => lube_with_grad(&l, &u, ys, *alpha, *lambda, *range, ind, None),
                }
            }
        }
    }
}

fn split_heads<T: Real>(outputs: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    ((0..n).map(|i| outputs[2 * i]).collect(), (0..n).map(|i| outputs[2 * i + 1]).collect())
}

fn interleave<T: Real>(g: &mut [T], gl: &[T], gu: &[T]) {
    for i in 0..gl.len() {
        g[2 * i] = gl[i];
        g[2 * i + 1] = gu[i];
    }
}
