//! Per-agent function oracles.
//!
//! Each agent owns a nonsmooth term `f_i`, reached only through its prox,
//! and a smooth term `g_i`, reached only through its gradient. The built-in
//! variants cover the experiment problems; `Custom` accepts any user oracle.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::prox::{logistic_loss, project_with_norm, shrink, sigmoid_neg};

/// Relative slack used when evaluating indicator functions.
///
/// An iterate produced by a projection satisfies its constraint only up to
/// rounding, so exact equality would make every indicator value infinite.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A user-supplied prox oracle for a proper, closed, convex function.
pub trait ProxOracle: Send + Sync {
    /// `prox_{step f}(point)`.
    fn prox(&self, point: ArrayView1<f64>, step: f64) -> Array1<f64>;
    /// `f(point)`, `+inf` outside the domain.
    fn value(&self, point: ArrayView1<f64>) -> f64;
}

/// A user-supplied oracle for a convex function with Lipschitz gradient.
pub trait SmoothOracle: Send + Sync {
    fn grad(&self, point: ArrayView1<f64>) -> Array1<f64>;
    fn value(&self, point: ArrayView1<f64>) -> f64;
    /// Lipschitz modulus of the gradient; zero when the gradient is constant.
    fn lipschitz(&self) -> f64;
}

/// Affine set `{x : a^T x = b}`.
#[derive(Debug, Clone)]
pub struct Hyperplane {
    normal: Array1<f64>,
    offset: f64,
    norm_sq: f64,
}

impl Hyperplane {
    pub fn new(normal: Array1<f64>, offset: f64) -> crate::Result<Self> {
        let norm_sq = normal.dot(&normal);
        if norm_sq == 0.0 {
            return Err(crate::Error::ZeroNormal);
        }
        Ok(Self {
            normal,
            offset,
            norm_sq,
        })
    }

    pub fn normal(&self) -> ArrayView1<'_, f64> {
        self.normal.view()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        project_with_norm(self.normal.view(), self.offset, self.norm_sq, x)
    }

    pub fn contains(&self, x: ArrayView1<f64>) -> bool {
        let lhs = self.normal.dot(&x);
        let scale = 1f64
            .max(self.offset.abs())
            .max(self.norm_sq.sqrt() * x.dot(&x).sqrt());
        (lhs - self.offset).abs() <= FEASIBILITY_TOL * scale
    }
}

/// `weight * sum_i log(1 + exp(-b_i a_i^T x))` over a dense block of rows.
#[derive(Debug, Clone)]
pub struct LogisticBlock {
    rows: Array2<f64>,
    labels: Array1<f64>,
    weight: f64,
    lipschitz: f64,
}

impl LogisticBlock {
    pub fn new(rows: Array2<f64>, labels: Array1<f64>, weight: f64) -> crate::Result<Self> {
        if rows.nrows() != labels.len() {
            return Err(crate::Error::DimensionMismatch {
                what: "logistic labels",
                expected: rows.nrows(),
                got: labels.len(),
            });
        }
        if !(weight > 0.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "logistic weight must be > 0, got {weight}"
            )));
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(crate::Error::NonBinaryLabels("expected labels in {-1, +1}".into()));
        }
        let lipschitz = weight * rows.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / 4.0;
        Ok(Self {
            rows,
            labels,
            weight,
            lipschitz,
        })
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn margins(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut t = self.rows.dot(&x);
        t *= &self.labels;
        t
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.weight * self.margins(x).iter().map(|&t| logistic_loss(t)).sum::<f64>()
    }

    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let t = self.margins(x);
        // coefficient of each row: -w b_i sigma(-t_i)
        let coef = ndarray::Zip::from(&t)
            .and(&self.labels)
            .map_collect(|&ti, &bi| -self.weight * bi * sigmoid_neg(ti));
        self.rows.t().dot(&coef)
    }
}

/// The nonsmooth term `f_i` of an agent.
#[derive(Clone)]
pub enum Nonsmooth {
    Zero,
    /// `weight * ||x||_1`.
    L1 { weight: f64 },
    /// Indicator of an affine hyperplane.
    Hyperplane(Hyperplane),
    /// Indicator of a single point.
    Point(Array1<f64>),
    Custom(Arc<dyn ProxOracle>),
}

impl fmt::Debug for Nonsmooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonsmooth::Zero => f.write_str("Zero"),
            Nonsmooth::L1 { weight } => write!(f, "L1 {{ weight: {weight} }}"),
            Nonsmooth::Hyperplane(h) => write!(f, "Hyperplane {{ offset: {} }}", h.offset),
            Nonsmooth::Point(c) => write!(f, "Point({c})"),
            Nonsmooth::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl ProxOracle for Nonsmooth {
    fn prox(&self, point: ArrayView1<f64>, step: f64) -> Array1<f64> {
        match self {
            Nonsmooth::Zero => point.to_owned(),
            Nonsmooth::L1 { weight } => {
                let tau = step * weight;
                point.mapv(|v| shrink(v, tau))
            }
            Nonsmooth::Hyperplane(h) => h.project(point),
            Nonsmooth::Point(c) => c.clone(),
            Nonsmooth::Custom(o) => o.prox(point, step),
        }
    }

    fn value(&self, point: ArrayView1<f64>) -> f64 {
        match self {
            Nonsmooth::Zero => 0.0,
            Nonsmooth::L1 { weight } => weight * point.iter().map(|v| v.abs()).sum::<f64>(),
            Nonsmooth::Hyperplane(h) => {
                if h.contains(point) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Nonsmooth::Point(c) => {
                let scale = 1f64.max(c.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                let close = c
                    .iter()
                    .zip(point.iter())
                    .all(|(a, b)| (a - b).abs() <= FEASIBILITY_TOL * scale);
                if close {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Nonsmooth::Custom(o) => o.value(point),
        }
    }
}

/// The smooth term `g_i` of an agent.
#[derive(Clone)]
pub enum Smooth {
    Zero,
    /// `weight / 2 * ||x - center||^2`.
    Quadratic { center: Array1<f64>, weight: f64 },
    Logistic(LogisticBlock),
    Custom(Arc<dyn SmoothOracle>),
}

impl fmt::Debug for Smooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smooth::Zero => f.write_str("Zero"),
            Smooth::Quadratic { weight, .. } => write!(f, "Quadratic {{ weight: {weight} }}"),
            Smooth::Logistic(b) => write!(f, "Logistic {{ rows: {} }}", b.rows.nrows()),
            Smooth::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl SmoothOracle for Smooth {
    fn grad(&self, point: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Smooth::Zero => Array1::zeros(point.len()),
            Smooth::Quadratic { center, weight } => (&point - center) * *weight,
            Smooth::Logistic(b) => b.grad(point),
            Smooth::Custom(o) => o.grad(point),
        }
    }

    fn value(&self, point: ArrayView1<f64>) -> f64 {
        match self {
            Smooth::Zero => 0.0,
            Smooth::Quadratic { center, weight } => {
                0.5 * weight * crate::prox::dist_sq(point, center.view())
            }
            Smooth::Logistic(b) => b.value(point),
            Smooth::Custom(o) => o.value(point),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Smooth::Zero => 0.0,
            Smooth::Quadratic { weight, .. } => *weight,
            Smooth::Logistic(b) => b.lipschitz,
            Smooth::Custom(o) => o.lipschitz(),
        }
    }
}

/// One agent's pair `(f_i, g_i)`.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub nonsmooth: Nonsmooth,
    pub smooth: Smooth,
}

impl AgentSpec {
    pub fn new(nonsmooth: Nonsmooth, smooth: Smooth) -> Self {
        Self { nonsmooth, smooth }
    }

    pub fn prox(&self, point: ArrayView1<f64>, step: f64) -> Array1<f64> {
        self.nonsmooth.prox(point, step)
    }

    pub fn grad(&self, point: ArrayView1<f64>) -> Array1<f64> {
        self.smooth.grad(point)
    }

    /// `L_i = 1 / beta_i`; zero encodes `beta_i = inf`.
    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz()
    }

    pub fn f_value(&self, point: ArrayView1<f64>) -> f64 {
        self.nonsmooth.value(point)
    }

    pub fn g_value(&self, point: ArrayView1<f64>) -> f64 {
        self.smooth.value(point)
    }

    /// Expected input dimension when the oracle carries one.
    pub(crate) fn dimension_hint(&self) -> Option<usize> {
        let f = match &self.nonsmooth {
            Nonsmooth::Hyperplane(h) => Some(h.normal.len()),
            Nonsmooth::Point(c) => Some(c.len()),
            _ => None,
        };
        let g = match &self.smooth {
            Smooth::Quadratic { center, .. } => Some(center.len()),
            Smooth::Logistic(b) => Some(b.rows.ncols()),
            _ => None,
        };
        f.or(g)
    }
}
