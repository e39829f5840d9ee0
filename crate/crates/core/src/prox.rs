//! Closed-form proximal maps, the logistic gradient, and the scaling
//! identity that turns a regularized prox fixed point into a plain prox
//! evaluation.
//!
//! Every prox here takes its step explicitly. The solver uses three
//! different effective steps per iteration and never pre-scales an oracle.

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::oracle::ProxOracle;

/// `prox_{tau ||.||_1}(v)`, the componentwise shrinkage
/// `sign(v_j) max(|v_j| - tau, 0)`.
pub fn soft_threshold(v: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    v.mapv(|vj| shrink(vj, tau))
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Euclidean projection of `x` onto `{y : a^T y = b}`.
pub fn project_hyperplane(a: ArrayView1<f64>, b: f64, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm_sq = a.dot(&a);
    if norm_sq == 0.0 {
        return Err(Error::ZeroNormal);
    }
    Ok(project_with_norm(a, b, norm_sq, x))
}

pub(crate) fn project_with_norm(
    a: ArrayView1<f64>,
    b: f64,
    norm_sq: f64,
    x: ArrayView1<f64>,
) -> Array1<f64> {
    let shift = (a.dot(&x) - b) / norm_sq;
    let mut out = x.to_owned();
    out.scaled_add(-shift, &a);
    out
}

/// `1 / (1 + exp(t))` without overflow for large `|t|`.
#[inline]
pub(crate) fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// `log(1 + exp(-t))`, branching at zero so neither side overflows.
#[inline]
pub fn logistic_loss(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Gradient of `w log(1 + exp(-b a^T x))` with respect to `x`.
///
/// Its Lipschitz modulus is `w ||a||^2 / 4`.
pub fn logistic_gradient(a: ArrayView1<f64>, b: f64, w: f64, x: ArrayView1<f64>) -> Array1<f64> {
    let s = sigmoid_neg(b * a.dot(&x));
    a.mapv(|aj| -w * b * aj * s)
}

/// The fixed-point problem `x = prox_{s f}(u - delta x)`.
///
/// Writing the optimality condition of both sides shows the unique solution
/// is `prox_{s f / (1 + delta)}(u / (1 + delta))`, so no inner iteration is
/// needed.
pub struct ScaledProxRequest<'a, P: ProxOracle + ?Sized> {
    pub base: &'a P,
    pub anchor: ArrayView1<'a, f64>,
    pub delta: f64,
    pub step: f64,
}

impl<P: ProxOracle + ?Sized> ScaledProxRequest<'_, P> {
    pub fn resolve(&self) -> Result<Array1<f64>> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization weight must be >= 0, got {}",
                self.delta
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prox step must be > 0, got {}",
                self.step
            )));
        }
        let scale = 1.0 + self.delta;
        if self.delta == 0.0 {
            return Ok(self.base.prox(self.anchor, self.step));
        }
        let scaled = self.anchor.mapv(|u| u / scale);
        Ok(self.base.prox(scaled.view(), self.step / scale))
    }
}

/// Convenience wrapper around [`ScaledProxRequest::resolve`].
pub fn resolve_scaled_prox<P: ProxOracle + ?Sized>(
    base: &P,
    anchor: ArrayView1<f64>,
    delta: f64,
    step: f64,
) -> Result<Array1<f64>> {
    ScaledProxRequest {
        base,
        anchor,
        delta,
        step,
    }
    .resolve()
}

/// `||x - y||^2`.
pub(crate) fn dist_sq(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    Zip::from(&x).and(&y).fold(0.0, |acc, a, b| {
        let d = a - b;
        acc + d * d
    })
}
