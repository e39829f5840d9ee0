//! Tiny problems with closed-form minimizers.

use ndarray::{array, Array1};

use crate::diagnostics::{certificate_from_subgradients, eval_phi};
use crate::error::Result;
use crate::oracle::{AgentSpec, Nonsmooth, Smooth};
use crate::prox::soft_threshold;
use crate::types::{OptimalityCertificate, ProblemInstance};

/// A problem together with its minimizer and user subgradients at it.
#[derive(Debug, Clone)]
pub struct KnownSolution {
    pub problem: ProblemInstance,
    pub x_star: Array1<f64>,
    pub phi_star: f64,
    /// `a_i` in the subdifferential of `f_i` at `x_star`, one per user,
    /// chosen so that the server's term balances the sum.
    pub subgradients: Vec<Array1<f64>>,
}

impl KnownSolution {
    pub fn certificate(&self, gamma: f64, sigma: f64) -> Result<OptimalityCertificate> {
        certificate_from_subgradients(&self.problem, gamma, sigma, self.x_star.clone(), &self.subgradients)
    }
}

/// `|x| + (x - 2)^2 / 2` split as a user holding `|x|` and a server holding
/// the quadratic. Minimizer 1, optimal value 1.5.
pub fn toy1d() -> KnownSolution {
    let problem = ProblemInstance::new(
        "toy1d",
        1,
        vec![
            AgentSpec::new(Nonsmooth::L1 { weight: 1.0 }, Smooth::Zero),
            AgentSpec::new(
                Nonsmooth::Zero,
                Smooth::Quadratic {
                    center: array![2.0],
                    weight: 1.0,
                },
            ),
        ],
    )
    .expect("static instance");
    KnownSolution {
        problem,
        x_star: array![1.0],
        phi_star: 1.5,
        subgradients: vec![array![1.0]],
    }
}

/// `||x||_1 + ||x - c||^2 / 2 + ||x - d||^2 / 2` over three agents: an `l1`
/// user, a quadratic user and a quadratic server. The minimizer is
/// `soft((c + d) / 2, 1 / 2)`.
pub fn toy3d(c: Array1<f64>, d: Array1<f64>) -> KnownSolution {
    assert_eq!(c.len(), d.len(), "centres must share a dimension");
    let n = c.len();
    let mid = (&c + &d) / 2.0;
    let x_star = soft_threshold(mid.view(), 0.5);
    // stationarity: a_0 + (x - c) + (x - d) = 0
    let a0 = &c + &d - &x_star * 2.0;
    let problem = ProblemInstance::new(
        "toy3d",
        n,
        vec![
            AgentSpec::new(Nonsmooth::L1 { weight: 1.0 }, Smooth::Zero),
            AgentSpec::new(Nonsmooth::Zero, Smooth::Quadratic { center: c, weight: 1.0 }),
            AgentSpec::new(Nonsmooth::Zero, Smooth::Quadratic { center: d, weight: 1.0 }),
        ],
    )
    .expect("centres share a dimension");
    let phi_star = eval_phi(&problem, x_star.view());
    KnownSolution {
        problem,
        x_star,
        phi_star,
        subgradients: vec![a0, Array1::zeros(n)],
    }
}

/// The default three-dimensional instance, with one active and two
/// inactive coordinates.
pub fn toy3d_default() -> KnownSolution {
    toy3d(array![3.0, -0.2, 1.0], array![1.0, 0.5, -2.0])
}
