//! Random instances with a planted minimizer and an exact certificate.
//!
//! Users cycle through three kinds: an `l1` term with a quadratic, a
//! hyperplane constraint, and a logistic block (optionally with `l1`). The
//! minimizer `x*` and each user's subgradient at it are drawn first; the
//! server then carries a quadratic whose centre cancels the sum of all
//! subgradients and gradients, which makes `x*` optimal by construction.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::eval_phi;
use crate::error::{Error, Result};
use crate::oracle::{AgentSpec, Hyperplane, LogisticBlock, Nonsmooth, Smooth};
use crate::problems::toy::KnownSolution;
use crate::types::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedOptions {
    pub n: usize,
    /// Total number of agents, server included.
    pub m: usize,
    /// Fraction of zero coordinates in `x*`.
    pub zero_fraction: f64,
    /// Rows per logistic block.
    pub logistic_rows: usize,
    /// Curvature of the server's balancing quadratic.
    pub server_weight: f64,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        Self {
            n: 10,
            m: 6,
            zero_fraction: 0.4,
            logistic_rows: 4,
            server_weight: 1.0,
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

/// Subgradient of `w ||.||_1` at `x`, uniform in `[-w, w]` on zero coordinates.
fn l1_subgradient(rng: &mut ChaCha8Rng, x: &Array1<f64>, w: f64) -> Array1<f64> {
    x.mapv(|v| {
        if v == 0.0 {
            w * rng.random_range(-1.0..=1.0)
        } else {
            w * v.signum()
        }
    })
}

pub fn planted_instance(opts: PlantedOptions, seed: u64) -> Result<KnownSolution> {
    if opts.m < 2 || opts.n == 0 {
        return Err(Error::InvalidShape(format!(
            "planted instance needs n >= 1 and m >= 2, got n = {}, m = {}",
            opts.n, opts.m
        )));
    }
    if !(opts.server_weight > 0.0) {
        return Err(Error::InvalidArgument("server weight must be > 0".into()));
    }
    let n = opts.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_star = Array1::from_shape_fn(n, |_| {
        if rng.random::<f64>() < opts.zero_fraction {
            0.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });

    let mut agents = Vec::with_capacity(opts.m);
    let mut subgradients = Vec::with_capacity(opts.m - 1);
    let mut balance = Array1::<f64>::zeros(n);
    for i in 0..opts.m - 1 {
        let (agent, a) = match i % 3 {
            0 => {
                let w = rng.random_range(0.1..1.0);
                let smooth = Smooth::Quadratic {
                    center: normal_vec(&mut rng, n),
                    weight: rng.random_range(0.2..2.0),
                };
                let a = l1_subgradient(&mut rng, &x_star, w);
                (AgentSpec::new(Nonsmooth::L1 { weight: w }, smooth), a)
            }
            1 => {
                let normal = normal_vec(&mut rng, n);
                let offset = normal.dot(&x_star);
                let t: f64 = rng.random_range(-1.0..1.0);
                let a = &normal * t;
                (AgentSpec::new(Nonsmooth::Hyperplane(Hyperplane::new(normal, offset)?), Smooth::Zero), a)
            }
            _ => {
                let rows = Array2::from_shape_fn((opts.logistic_rows, n), |_| rng.sample(StandardNormal));
                let labels =
                    Array1::from_shape_fn(opts.logistic_rows, |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
                let block = LogisticBlock::new(rows, labels, 1.0 / opts.logistic_rows as f64)?;
                let smooth = Smooth::Logistic(block);
                if rng.random::<bool>() {
                    let w = rng.random_range(0.01..0.2);
                    let a = l1_subgradient(&mut rng, &x_star, w);
                    (AgentSpec::new(Nonsmooth::L1 { weight: w }, smooth), a)
                } else {
                    (AgentSpec::new(Nonsmooth::Zero, smooth), Array1::zeros(n))
                }
            }
        };
        balance += &a;
        balance += &agent.grad(x_star.view());
        agents.push(agent);
        subgradients.push(a);
    }
    // grad g_m(x*) = w (x* - c) = -balance
    let center = &x_star + &(&balance / opts.server_weight);
    agents.push(AgentSpec::new(
        Nonsmooth::Zero,
        Smooth::Quadratic {
            center,
            weight: opts.server_weight,
        },
    ));
    let problem = ProblemInstance::new(format!("planted-{seed}"), n, agents)?;
    let phi_star = eval_phi(&problem, x_star.view());
    Ok(KnownSolution {
        problem,
        x_star,
        phi_star,
        subgradients,
    })
}
