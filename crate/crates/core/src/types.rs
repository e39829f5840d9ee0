//! Problem, configuration, iterate and trace records, and the parameter
//! windows every configuration is checked against.
//!
//! Agents are 0-based. The last agent (`m - 1`) is the server; users are
//! `0..m-1`. Lipschitz moduli are stored as `L_i = 1 / beta_i`, so
//! `beta_i = inf` becomes `L_i = 0` and every division by a vanishing
//! denominator evaluates to `+inf`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, WindowKind};
use crate::oracle::AgentSpec;
use crate::sampling::ParticipationPolicy;

/// `r / 0 = inf` for any `r`, including `r = 0`.
#[inline]
pub(crate) fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub n: usize,
    pub agents: Vec<AgentSpec>,
}

impl ProblemInstance {
    pub fn new(name: impl Into<String>, n: usize, agents: Vec<AgentSpec>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidShape("dimension must be positive".into()));
        }
        if agents.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "need at least 2 agents, got {}",
                agents.len()
            )));
        }
        for a in &agents {
            if let Some(d) = a.dimension_hint() {
                if d != n {
                    return Err(Error::DimensionMismatch {
                        what: "agent dimension",
                        expected: n,
                        got: d,
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            n,
            agents,
        })
    }

    /// Number of agents, server included.
    pub fn m(&self) -> usize {
        self.agents.len()
    }

    pub fn users(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn server(&self) -> &AgentSpec {
        &self.agents[self.agents.len() - 1]
    }

    pub fn user(&self, i: usize) -> &AgentSpec {
        &self.agents[i]
    }

    pub fn server_lipschitz(&self) -> f64 {
        self.server().lipschitz()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma: f64,
    pub sigma: f64,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub participation: ParticipationPolicy,
    /// `K`: the loop runs while `error > tolerance` or `k <= K`.
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Compute virtual iterates for every user each step.
    pub record_virtual: bool,
}

impl SolverConfig {
    /// Configuration with uniform `alpha`, default step `gamma` and default
    /// relaxations inside their windows.
    ///
    /// `gamma` is `0.9` times its upper bound when that bound is finite and
    /// `1.0` otherwise; `lambda_i = min(1, 0.99 * lambda_max_i)`.
    pub fn with_defaults(
        problem: &ProblemInstance,
        alpha: f64,
        sigma: f64,
        participation: ParticipationPolicy,
    ) -> Result<Self> {
        let alpha = vec![alpha; problem.users()];
        let (bound, index) = gamma_upper_bound(problem, sigma, &alpha)?;
        if !(bound > 0.0) {
            return Err(Error::EmptyParameterWindow {
                index: index.unwrap_or(0),
                kind: WindowKind::Gamma,
            });
        }
        let gamma = default_gamma(bound);
        let lambda = default_lambda(problem, sigma, &alpha, gamma);
        Ok(Self {
            gamma,
            sigma,
            alpha,
            lambda,
            participation,
            max_iters: 1000,
            tolerance: 1e-6,
            seed: 0,
            record_virtual: false,
        })
    }

    pub fn with_gamma(mut self, problem: &ProblemInstance, gamma: f64) -> Self {
        self.gamma = gamma;
        self.lambda = default_lambda(problem, self.sigma, &self.alpha, gamma);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// `alpha_bar`, the mean regularization weight.
    pub fn alpha_mean(&self) -> f64 {
        self.alpha.iter().sum::<f64>() / self.alpha.len() as f64
    }
}

pub fn default_gamma(bound: f64) -> f64 {
    if bound.is_finite() {
        0.9 * bound
    } else {
        1.0
    }
}

pub fn default_lambda(problem: &ProblemInstance, sigma: f64, alpha: &[f64], gamma: f64) -> Vec<f64> {
    lambda_upper_bounds(problem, sigma, alpha, gamma)
        .into_iter()
        .map(|ub| 1f64.min(0.99 * ub))
        .collect()
}

/// Upper end of the step-size window and the user attaining it.
///
/// `min_i { 2 alpha_i / (L_m/(m-1) + sigma L_i), 2 (2 + alpha_i) / ((1 - sigma) L_i) }`
pub fn gamma_upper_bound(
    problem: &ProblemInstance,
    sigma: f64,
    alpha: &[f64],
) -> Result<(f64, Option<usize>)> {
    let users = problem.users();
    if alpha.len() != users {
        return Err(Error::DimensionMismatch {
            what: "alpha",
            expected: users,
            got: alpha.len(),
        });
    }
    let server_term = problem.server_lipschitz() / users as f64;
    let mut best = (f64::INFINITY, None);
    for (i, &a) in alpha.iter().enumerate() {
        let li = problem.user(i).lipschitz();
        let first = ratio_or_inf(2.0 * a, server_term + sigma * li);
        let second = ratio_or_inf(2.0 * (2.0 + a), (1.0 - sigma) * li);
        let b = first.min(second);
        if b < best.0 {
            best = (b, Some(i));
        }
    }
    Ok(best)
}

/// `lambda_max_i = 2 + alpha_i - (1 - sigma) gamma L_i / 2`.
pub fn lambda_upper_bounds(
    problem: &ProblemInstance,
    sigma: f64,
    alpha: &[f64],
    gamma: f64,
) -> Vec<f64> {
    alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| 2.0 + a - (1.0 - sigma) * gamma * problem.user(i).lipschitz() / 2.0)
        .collect()
}

/// Outcome of [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub gamma_upper: f64,
    /// User attaining `gamma_upper`, if any bound is finite.
    pub gamma_binding_user: Option<usize>,
    pub lambda_upper: Vec<f64>,
    pub gamma_ok: bool,
    pub lambda_ok: Vec<bool>,
    pub sigma_ok: bool,
    pub alpha_ok: bool,
    pub participation_ok: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.gamma_ok
            && self.sigma_ok
            && self.alpha_ok
            && self.participation_ok
            && self.lambda_ok.iter().all(|&ok| ok)
    }

    /// Human-readable summary of the admissible windows.
    pub fn describe(&self, config: &SolverConfig) -> String {
        let mut out = format!(
            "gamma = {} in (0, {}){}\n",
            config.gamma,
            self.gamma_upper,
            if self.gamma_ok { "" } else { "  VIOLATED" }
        );
        let lo = self.lambda_upper.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.lambda_upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bad = self.lambda_ok.iter().filter(|ok| !**ok).count();
        out.push_str(&format!(
            "lambda_i windows: upper ends in [{lo}, {hi}]; {bad} of {} users violate\n",
            self.lambda_upper.len()
        ));
        out
    }
}

/// Checks `config` against the admissible parameter windows.
///
/// Returns an error when a window is empty (no admissible value exists) or
/// a per-user sequence has the wrong length; otherwise reports whether the
/// chosen values lie inside their windows.
pub fn validate_config(problem: &ProblemInstance, config: &SolverConfig) -> Result<ValidationReport> {
    let users = problem.users();
    for (what, len) in [("alpha", config.alpha.len()), ("lambda", config.lambda.len())] {
        if len != users {
            return Err(Error::DimensionMismatch {
                what,
                expected: users,
                got: len,
            });
        }
    }
    if let ParticipationPolicy::Bernoulli { p } = &config.participation {
        if p.len() != users {
            return Err(Error::DimensionMismatch {
                what: "inclusion probabilities",
                expected: users,
                got: p.len(),
            });
        }
    }

    let sigma_ok = (0.0..=1.0).contains(&config.sigma);
    let alpha_ok = config.alpha.iter().all(|&a| a >= 0.0 && a.is_finite());
    let floor = (1.0 - config.sigma).floor();
    if let Some(i) = config.alpha.iter().position(|&a| a + floor == 0.0) {
        return Err(Error::EmptyParameterWindow {
            index: i,
            kind: WindowKind::InputCondition,
        });
    }

    let (gamma_upper, binding) = gamma_upper_bound(problem, config.sigma, &config.alpha)?;
    if !(gamma_upper > 0.0) {
        return Err(Error::EmptyParameterWindow {
            index: binding.unwrap_or(0),
            kind: WindowKind::Gamma,
        });
    }
    let gamma_ok = config.gamma > 0.0 && config.gamma < gamma_upper;

    let lambda_upper = lambda_upper_bounds(problem, config.sigma, &config.alpha, config.gamma);
    if let Some(i) = lambda_upper.iter().position(|&ub| !(ub > 0.0)) {
        return Err(Error::EmptyParameterWindow {
            index: i,
            kind: WindowKind::Lambda,
        });
    }
    let lambda_ok = config
        .lambda
        .iter()
        .zip(&lambda_upper)
        .map(|(&l, &ub)| l > 0.0 && l < ub)
        .collect();

    Ok(ValidationReport {
        gamma_upper,
        gamma_binding_user: binding,
        lambda_upper,
        gamma_ok,
        lambda_ok,
        sigma_ok,
        alpha_ok,
        participation_ok: config.participation.validate(users).is_ok(),
    })
}

/// Algorithm state after `k` iterations, including the gradient caches
/// `grad(g_i)(y_i)` and `grad(g_m)(y_i)` read by the server update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x: Array1<f64>,
    pub y: Vec<Array1<f64>>,
    pub z: Vec<Array1<f64>>,
    pub grad_cache_own: Vec<Array1<f64>>,
    pub grad_cache_server: Vec<Array1<f64>>,
    pub prox_calls: u64,
    pub grad_calls: u64,
}

impl IterateState {
    /// All-zero start; pays the one-time `2 (m - 1)` gradient warm-up.
    pub fn zeros(problem: &ProblemInstance) -> Self {
        let n = problem.n;
        let users = problem.users();
        Self::from_parts(
            problem,
            Array1::zeros(n),
            vec![Array1::zeros(n); users],
            vec![Array1::zeros(n); users],
        )
        .expect("zero state has consistent dimensions")
    }

    pub fn from_parts(
        problem: &ProblemInstance,
        x: Array1<f64>,
        y: Vec<Array1<f64>>,
        z: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let users = problem.users();
        for (what, len) in [("y", y.len()), ("z", z.len())] {
            if len != users {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: users,
                    got: len,
                });
            }
        }
        if let Some(bad) = std::iter::once(&x).chain(&y).chain(&z).find(|v| v.len() != problem.n) {
            return Err(Error::DimensionMismatch {
                what: "iterate vector",
                expected: problem.n,
                got: bad.len(),
            });
        }
        let server = problem.server();
        let grad_cache_own = y.iter().enumerate().map(|(i, yi)| problem.user(i).grad(yi.view())).collect();
        let grad_cache_server = y.iter().map(|yi| server.grad(yi.view())).collect();
        Ok(Self {
            k: 0,
            x,
            y,
            z,
            grad_cache_own,
            grad_cache_server,
            prox_calls: 0,
            grad_calls: 2 * users as u64,
        })
    }

    /// Start at a certificate: `y_i = x*`, `z_i = z_i*`, `x = x*`.
    pub fn at_certificate(problem: &ProblemInstance, cert: &OptimalityCertificate) -> Result<Self> {
        Self::from_parts(
            problem,
            cert.x_star.clone(),
            vec![cert.x_star.clone(); problem.users()],
            cert.z_star.clone(),
        )
    }

    pub fn is_finite(&self) -> bool {
        std::iter::once(&self.x)
            .chain(&self.y)
            .chain(&self.z)
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

/// A point `(z_1*, ..., z_{m-1}*, x*)` of the fixed-point set whose `x*`
/// component minimizes the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCertificate {
    pub z_star: Vec<Array1<f64>>,
    pub x_star: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub stopping_error: f64,
    pub consensus_max: f64,
    pub phi: f64,
    pub h_value: f64,
    pub lyapunov: Option<f64>,
    pub participants: usize,
    pub prox_calls: u64,
    pub grad_calls: u64,
}

/// Running means `x_av = mean(x^1..x^K)` and `y_av_i = mean(y_i^0..y_i^{K-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverages {
    pub x_av: Array1<f64>,
    pub y_av: Vec<Array1<f64>>,
    pub count: usize,
}

impl ErgodicAverages {
    pub fn new(n: usize, users: usize) -> Self {
        Self {
            x_av: Array1::zeros(n),
            y_av: vec![Array1::zeros(n); users],
            count: 0,
        }
    }

    /// Adds one iteration: `y_prev` are the `y_i^k`, `x_next` is `x^{k+1}`.
    pub fn accumulate(&mut self, y_prev: &[Array1<f64>], x_next: &Array1<f64>) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        self.x_av.zip_mut_with(x_next, |a, &v| *a += (v - *a) * w);
        for (avg, y) in self.y_av.iter_mut().zip(y_prev) {
            avg.zip_mut_with(y, |a, &v| *a += (v - *a) * w);
        }
    }
}
