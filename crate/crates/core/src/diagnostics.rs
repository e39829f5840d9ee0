//! Objective values, fixed-point residuals, Lyapunov values, repeated-run
//! optimality reports and an independent reference solver.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{Nonsmooth, SmoothOracle};
use crate::prox::{dist_sq, soft_threshold};
use crate::sampling::{self, ParticipationPolicy};
use crate::solver::Solver;
use crate::types::{IterateState, OptimalityCertificate, ProblemInstance, SolverConfig};

/// `Phi(x) = sum_i f_i(x) + g_i(x)`; `+inf` outside the domain.
pub fn eval_phi(problem: &ProblemInstance, x: ArrayView1<f64>) -> f64 {
    let mut total = 0.0;
    for a in &problem.agents {
        let f = a.f_value(x);
        if f == f64::INFINITY {
            return f64::INFINITY;
        }
        total += f + a.g_value(x);
    }
    total
}

/// Objective of the replicated problem at `(y_1, ..., y_{m-1}, x_m)`:
/// `sum_i [f_i(y_i) + (1 - sigma) g_i(y_i) + sigma g_i(x_m)] + f_m(x_m) + g_m(x_m)`.
pub fn eval_h(problem: &ProblemInstance, sigma: f64, y: &[Array1<f64>], x_m: ArrayView1<f64>) -> f64 {
    let mut total = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let a = problem.user(i);
        let f = a.f_value(yi.view());
        if f == f64::INFINITY {
            return f64::INFINITY;
        }
        total += f;
        if sigma != 1.0 {
            total += (1.0 - sigma) * a.g_value(yi.view());
        }
        if sigma != 0.0 {
            total += sigma * a.g_value(x_m);
        }
    }
    let s = problem.server();
    let f = s.f_value(x_m);
    if f == f64::INFINITY {
        return f64::INFINITY;
    }
    total + f + s.g_value(x_m)
}

/// `(sum_i ||y_i - x||^2 / ||x||^2, max_i ||y_i - x|| / ||x||)`, both
/// infinite when `x = 0`.
pub fn consensus_metrics(state: &IterateState) -> (f64, f64) {
    let xn = state.x.dot(&state.x);
    if xn == 0.0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for y in &state.y {
        let d = dist_sq(y.view(), state.x.view());
        sum += d;
        max = max.max(d);
    }
    (sum / xn, (max / xn).sqrt())
}

/// Distance of `cert` from the fixed-point system; zero exactly on it.
pub fn s_residual(problem: &ProblemInstance, config: &SolverConfig, cert: &OptimalityCertificate) -> f64 {
    let users = problem.users() as f64;
    let x = cert.x_star.view();
    let g = config.gamma;
    let grads: Vec<Array1<f64>> = (0..problem.users()).map(|i| problem.user(i).grad(x)).collect();

    let mut anchor = Array1::<f64>::zeros(problem.n);
    for (zi, gi) in cert.z_star.iter().zip(&grads) {
        anchor += zi;
        anchor.scaled_add(-config.sigma * g, gi);
    }
    anchor /= users;
    anchor.scaled_add(-g / users, &problem.server().grad(x));
    let server = problem.server().prox(anchor.view(), g / users);
    let mut total = dist_sq(x, server.view()).sqrt();

    for (i, (zi, gi)) in cert.z_star.iter().zip(&grads).enumerate() {
        let mut u = x.mapv(|v| 2.0 * v);
        u -= zi;
        u.scaled_add(-(1.0 - config.sigma) * g, gi);
        let p = problem.user(i).prox(u.view(), g);
        total += dist_sq(x, p.view()).sqrt();
    }
    total
}

/// Certificate from user subgradients `a_i` of `f_i` at `x*`:
/// `z_i* = x* - (1 - sigma) gamma grad g_i(x*) - gamma a_i`.
///
/// The server's subgradient is implied by `sum_i (a_i + grad g_i(x*)) = 0`
/// over all agents; [`s_residual`] confirms whether it is admissible.
pub fn certificate_from_subgradients(
    problem: &ProblemInstance,
    gamma: f64,
    sigma: f64,
    x_star: Array1<f64>,
    subgradients: &[Array1<f64>],
) -> Result<OptimalityCertificate> {
    if subgradients.len() != problem.users() {
        return Err(Error::DimensionMismatch {
            what: "subgradients",
            expected: problem.users(),
            got: subgradients.len(),
        });
    }
    let z_star = subgradients
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut z = x_star.clone();
            z.scaled_add(-(1.0 - sigma) * gamma, &problem.user(i).grad(x_star.view()));
            z.scaled_add(-gamma, a);
            z
        })
        .collect();
    Ok(OptimalityCertificate { z_star, x_star })
}

/// Certificate read off a converged state, `(z^k, x^k)`.
pub fn certificate_from_state(state: &IterateState) -> OptimalityCertificate {
    OptimalityCertificate {
        z_star: state.z.clone(),
        x_star: state.x.clone(),
    }
}

/// `a_k = sum_i [(alpha_i / p_i) ||y_i - x*||^2 + (1 / (lambda_i p_i)) ||z_i - z_i*||^2]`.
pub fn lyapunov(
    config: &SolverConfig,
    policy: &ParticipationPolicy,
    state: &IterateState,
    cert: &OptimalityCertificate,
) -> Result<f64> {
    let users = state.y.len();
    let p = sampling::inclusion_probabilities(policy, users)?;
    if let Some(i) = p.iter().position(|&pi| pi == 0.0) {
        return Err(Error::ZeroProbability(i));
    }
    Ok(lyapunov_weighted(state, cert, config, &p))
}

/// The full-participation value `V_k` (all `p_i = 1`).
pub fn lyapunov_full(config: &SolverConfig, state: &IterateState, cert: &OptimalityCertificate) -> f64 {
    lyapunov_weighted(state, cert, config, &vec![1.0; state.y.len()])
}

pub(crate) fn lyapunov_weighted(
    state: &IterateState,
    cert: &OptimalityCertificate,
    config: &SolverConfig,
    p: &[f64],
) -> f64 {
    let mut total = 0.0;
    for i in 0..state.y.len() {
        let dy = dist_sq(state.y[i].view(), cert.x_star.view());
        let dz = dist_sq(state.z[i].view(), cert.z_star[i].view());
        total += config.alpha[i] / p[i] * dy + dz / (config.lambda[i] * p[i]);
    }
    total
}

/// `(1 / gamma) sum_i <z_i* - x*, x_m - x_i>`, a lower bound on `H - Phi*`
/// at `(x_1, ..., x_{m-1}, x_m)`.
///
/// The sign follows from adding the subgradient inequalities that the
/// certificate supplies for every `f_i`; with `<x* - z_i*, x_m - x_i>` the
/// bound already fails on the one-dimensional toy at `x_1 = 0, x_m = 1`.
pub fn lower_bound_gap(cert: &OptimalityCertificate, gamma: f64, xs: &[Array1<f64>], x_m: ArrayView1<f64>) -> f64 {
    let mut total = 0.0;
    for (xi, zi) in xs.iter().zip(&cert.z_star) {
        let d = zi - &cert.x_star;
        let e = &x_m - xi;
        total += d.dot(&e);
    }
    total / gamma
}

/// The two quadratic penalty sums that bound the expected one-step decrease
/// of `a_k`:
/// `sum_i (alpha_i - gamma L_m / (2 (m - 1)) - sigma gamma L_i / 2) ||x+ - y_i||^2`
/// and `sum_i (2 + alpha_i - (1 - sigma) gamma L_i / 2 - lambda_i) ||x+ - y~_i||^2`.
pub fn descent_penalties(
    problem: &ProblemInstance,
    config: &SolverConfig,
    state: &IterateState,
    x_next: ArrayView1<f64>,
    y_tilde: &[Array1<f64>],
) -> (f64, f64) {
    let users = problem.users() as f64;
    let lm = problem.server_lipschitz();
    let g = config.gamma;
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..problem.users() {
        let li = problem.user(i).lipschitz();
        let a = config.alpha[i];
        first += (a - g * lm / (2.0 * users) - config.sigma * g * li / 2.0) * dist_sq(x_next, state.y[i].view());
        second += (2.0 + a - (1.0 - config.sigma) * g * li / 2.0 - config.lambda[i])
            * dist_sq(x_next, y_tilde[i].view());
    }
    (first, second)
}

/// Expected consensus and objective margins over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsReport {
    pub runs: usize,
    pub iters: usize,
    pub eps: f64,
    /// `max_{i,j} ||mean_r(b_i - b_j)||` over the blocks `(y_av_1, ..., y_av_{m-1}, x_av)`.
    pub consensus_margin: f64,
    /// `|mean_r H(y_av, x_av) - Phi*|`.
    pub value_gap: f64,
    pub consensus_ok: bool,
    pub value_ok: bool,
}

impl EpsReport {
    pub fn is_optimal(&self) -> bool {
        self.consensus_ok && self.value_ok
    }
}

/// Runs `runs` seeded copies (seeds `config.seed + r`) for `config.max_iters`
/// iterations each and checks the averaged ergodic iterates against `eps`.
pub fn eps_optimality(
    problem: &ProblemInstance,
    config: &SolverConfig,
    runs: usize,
    eps: f64,
    phi_star: f64,
    init: Option<&IterateState>,
) -> Result<EpsReport> {
    if runs < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 runs, got {runs}")));
    }
    let outs: Vec<(Vec<Array1<f64>>, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(r as u64);
            let solver = Solver::new(problem, &cfg)?;
            let out = solver.run_fixed(init.cloned(), config.max_iters)?;
            let avg = out.averages;
            let h = eval_h(problem, config.sigma, &avg.y_av, avg.x_av.view());
            let mut blocks = avg.y_av;
            blocks.push(avg.x_av);
            Ok((blocks, h))
        })
        .collect::<Result<_>>()?;

    let nb = problem.m();
    let mut mean_blocks = vec![Array1::<f64>::zeros(problem.n); nb];
    let mut mean_h = 0.0;
    for (blocks, h) in &outs {
        for (acc, b) in mean_blocks.iter_mut().zip(blocks) {
            *acc += b;
        }
        mean_h += h;
    }
    let rf = runs as f64;
    for b in &mut mean_blocks {
        *b /= rf;
    }
    mean_h /= rf;

    let mut consensus_margin = 0.0f64;
    for i in 0..nb {
        for j in (i + 1)..nb {
            consensus_margin = consensus_margin.max(dist_sq(mean_blocks[i].view(), mean_blocks[j].view()).sqrt());
        }
    }
    let value_gap = (mean_h - phi_star).abs();
    Ok(EpsReport {
        runs,
        iters: config.max_iters,
        eps,
        consensus_margin,
        value_gap,
        consensus_ok: consensus_margin <= eps,
        value_ok: value_gap <= eps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Array1<f64>,
    pub phi: f64,
    pub iterations: usize,
}

const REFERENCE_MAX_ITERS: usize = 2_000_000;

/// High-accuracy minimizer of `Phi`, computed without the stochastic
/// iteration whenever possible.
///
/// When every nonsmooth term is zero or a weighted `l1` norm the terms are
/// merged and accelerated proximal gradient (with adaptive restart) runs
/// until the scaled fixed-point residual is at most `tol`. Otherwise a
/// full-participation run continues until the fixed-point residual of
/// `(z^k, x^k)` is at most `tol^2`. For `n <= 2` the result is refined by
/// a shrinking grid search on `Phi`.
pub fn reference_solve(problem: &ProblemInstance, tol: f64) -> Result<ReferenceSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    let l1_weight: Option<f64> = problem.agents.iter().try_fold(0.0, |acc, a| match &a.nonsmooth {
        Nonsmooth::Zero => Some(acc),
        Nonsmooth::L1 { weight } => Some(acc + weight),
        _ => None,
    });
    let mut sol = match l1_weight {
        Some(w) => proximal_gradient(problem, w, tol)?,
        None => splitting_reference(problem, tol)?,
    };
    if problem.n <= 2 && sol.phi.is_finite() {
        grid_refine(problem, &mut sol);
    }
    Ok(sol)
}

fn smooth_grad(problem: &ProblemInstance, x: ArrayView1<f64>) -> Array1<f64> {
    let mut g = Array1::<f64>::zeros(problem.n);
    for a in &problem.agents {
        g += &a.smooth.grad(x);
    }
    g
}

fn proximal_gradient(problem: &ProblemInstance, weight: f64, tol: f64) -> Result<ReferenceSolution> {
    let lip: f64 = problem.agents.iter().map(|a| a.lipschitz()).sum();
    let t = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let pg = |v: &Array1<f64>| {
        let mut u = v.clone();
        u.scaled_add(-t, &smooth_grad(problem, v.view()));
        soft_threshold(u.view(), t * weight)
    };

    let mut x = Array1::<f64>::zeros(problem.n);
    let mut v = x.clone();
    let mut theta = 1.0f64;
    for it in 1..=REFERENCE_MAX_ITERS {
        let x_new = pg(&v);
        let residual = dist_sq(x_new.view(), v.view()).sqrt() / t;
        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        // restart when the momentum direction points uphill
        let uphill = (&v - &x_new).dot(&(&x_new - &x)) > 0.0;
        if uphill {
            theta = 1.0;
            v = x.clone();
            continue;
        }
        let beta = (theta - 1.0) / theta_new;
        v = &x_new + &((&x_new - &x) * beta);
        x = x_new;
        theta = theta_new;
        if residual <= tol {
            // confirm at the non-extrapolated point
            let check = dist_sq(pg(&x).view(), x.view()).sqrt() / t;
            if check <= tol {
                let phi = eval_phi(problem, x.view());
                return Ok(ReferenceSolution { x, phi, iterations: it });
            }
        }
    }
    Err(Error::NoConvergence {
        tol,
        iters: REFERENCE_MAX_ITERS,
    })
}

fn splitting_reference(problem: &ProblemInstance, tol: f64) -> Result<ReferenceSolution> {
    let config = SolverConfig::with_defaults(problem, 1.0, 0.5, ParticipationPolicy::full())?;
    let solver = Solver::new(problem, &config)?;
    let mut state = IterateState::zeros(problem);
    let target = tol * tol;
    let check_every = 50;
    while state.k < REFERENCE_MAX_ITERS {
        for _ in 0..check_every {
            solver.advance_quiet(&mut state)?;
        }
        let cert = certificate_from_state(&state);
        if s_residual(problem, &config, &cert) <= target {
            let phi = eval_phi(problem, state.x.view());
            return Ok(ReferenceSolution {
                x: state.x,
                phi,
                iterations: state.k,
            });
        }
    }
    Err(Error::NoConvergence {
        tol,
        iters: REFERENCE_MAX_ITERS,
    })
}

fn grid_refine(problem: &ProblemInstance, sol: &mut ReferenceSolution) {
    let n = problem.n;
    let mut h = 1e-2;
    let side = 20i32;
    while h > 1e-12 {
        let centre = sol.x.clone();
        let mut best = (sol.phi, centre.clone());
        let offsets: Vec<i32> = (-side..=side).collect();
        let mut point = centre.clone();
        let grid: Vec<Vec<i32>> = if n == 1 {
            offsets.iter().map(|&a| vec![a]).collect()
        } else {
            offsets
                .iter()
                .flat_map(|&a| offsets.iter().map(move |&b| vec![a, b]))
                .collect()
        };
        for off in grid {
            for j in 0..n {
                point[j] = centre[j] + off[j] as f64 * h;
            }
            let v = eval_phi(problem, point.view());
            if v < best.0 {
                best = (v, point.clone());
            }
        }
        sol.phi = best.0;
        sol.x = best.1;
        h /= 10.0;
    }
}
