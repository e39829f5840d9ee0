//! The stochastic splitting iteration: one server prox, regularized prox
//! updates for the sampled users, carry-over for the rest.
//!
//! Both implicit updates are resolved in closed form through
//! [`resolve_scaled_prox`]; nothing is solved iteratively.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::prox::resolve_scaled_prox;
use crate::sampling::{self, SampleDraw};
use crate::types::{
    ErgodicAverages, IterateState, OptimalityCertificate, ProblemInstance, SolverConfig, TraceRecord,
};

/// Work per step (sampled users times dimension) below which user updates
/// run on the calling thread.
const PARALLEL_THRESHOLD: usize = 4096;

/// The user updates every agent would make if it were sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualIterate {
    pub y_tilde: Vec<Array1<f64>>,
    pub z_tilde: Vec<Array1<f64>>,
}

/// Everything a single step produced besides the new state.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub record: TraceRecord,
    pub draw: SampleDraw,
    pub virtual_iterate: Option<VirtualIterate>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: IterateState,
    /// One record for the starting point and one per step.
    pub trace: Vec<TraceRecord>,
    pub averages: ErgodicAverages,
}

/// A problem bound to a configuration and, optionally, a certificate used
/// for the Lyapunov column of the trace.
pub struct Solver<'a> {
    problem: &'a ProblemInstance,
    config: &'a SolverConfig,
    certificate: Option<&'a OptimalityCertificate>,
    probabilities: Vec<f64>,
}

impl<'a> Solver<'a> {
    /// Checks dimensions and the participation policy. The parameter windows
    /// are not enforced here; see [`crate::types::validate_config`].
    pub fn new(problem: &'a ProblemInstance, config: &'a SolverConfig) -> Result<Self> {
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
        config.participation.validate(users)?;
        if !(config.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {}", config.gamma)));
        }
        if let Some(a) = config.alpha.iter().find(|a| !(**a >= 0.0)) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {a}")));
        }
        let probabilities = sampling::inclusion_probabilities(&config.participation, users)?;
        Ok(Self {
            problem,
            config,
            certificate: None,
            probabilities,
        })
    }

    pub fn with_certificate(mut self, certificate: &'a OptimalityCertificate) -> Self {
        self.certificate = Some(certificate);
        self
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.problem
    }

    pub fn config(&self) -> &SolverConfig {
        self.config
    }

    pub fn inclusion_probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `x^{k+1}` from the cached gradients at `y_i^k`.
    pub fn server_update(&self, state: &IterateState) -> Result<Array1<f64>> {
        let p = self.problem;
        let c = self.config;
        let users = p.users() as f64;
        let mut anchor = Array1::<f64>::zeros(p.n);
        for i in 0..p.users() {
            anchor += &state.z[i];
            anchor.scaled_add(c.alpha[i], &state.y[i]);
            anchor.scaled_add(-c.gamma / users, &state.grad_cache_server[i]);
            anchor.scaled_add(-c.sigma * c.gamma, &state.grad_cache_own[i]);
        }
        anchor /= users;
        resolve_scaled_prox(&p.server().nonsmooth, anchor.view(), c.alpha_mean(), c.gamma / users)
    }

    /// `(y_i^{k+1}, z_i^{k+1})` for a sampled user, given `x^{k+1}`.
    pub fn user_update(
        &self,
        state: &IterateState,
        x_next: ArrayView1<f64>,
        i: usize,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let users = self.problem.users();
        if i >= users {
            return Err(Error::IndexOutOfRange { index: i, users });
        }
        let grad = self.problem.user(i).grad(x_next);
        self.user_update_with_grad(state, x_next, i, &grad)
    }

    fn user_update_with_grad(
        &self,
        state: &IterateState,
        x_next: ArrayView1<f64>,
        i: usize,
        grad_at_x: &Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let c = self.config;
        let alpha = c.alpha[i];
        let mut anchor = x_next.mapv(|v| (2.0 + alpha) * v);
        anchor -= &state.z[i];
        anchor.scaled_add(-(1.0 - c.sigma) * c.gamma, grad_at_x);
        let y = resolve_scaled_prox(&self.problem.user(i).nonsmooth, anchor.view(), alpha, c.gamma)?;
        let mut z = state.z[i].clone();
        z.scaled_add(c.lambda[i], &y);
        z.scaled_add(-c.lambda[i], &x_next);
        Ok((y, z))
    }

    /// The user update applied to every user, leaving `state` untouched.
    pub fn virtual_update(&self, state: &IterateState, x_next: ArrayView1<f64>) -> Result<VirtualIterate> {
        let pairs: Vec<_> = (0..self.problem.users())
            .map(|i| self.user_update(state, x_next, i))
            .collect::<Result<_>>()?;
        let (y_tilde, z_tilde) = pairs.into_iter().unzip();
        Ok(VirtualIterate { y_tilde, z_tilde })
    }

    /// Advances `state` by one iteration in place, with the sample drawn
    /// from the configured policy.
    pub fn advance(&self, state: &mut IterateState) -> Result<StepReport> {
        let draw = sampling::draw(
            &self.config.participation,
            self.problem.users(),
            self.config.seed,
            state.k,
        );
        self.advance_with(state, draw)
    }

    /// Advances `state` by one iteration with a caller-chosen sample.
    pub fn advance_with(&self, state: &mut IterateState, draw: SampleDraw) -> Result<StepReport> {
        let virtual_iterate = self.update(state, &draw)?;
        let record = self.record(state, draw.len());
        Ok(StepReport {
            record,
            draw,
            virtual_iterate,
        })
    }

    /// [`Solver::advance`] without evaluating trace metrics.
    pub fn advance_quiet(&self, state: &mut IterateState) -> Result<()> {
        let draw = sampling::draw(
            &self.config.participation,
            self.problem.users(),
            self.config.seed,
            state.k,
        );
        self.update(state, &draw).map(|_| ())
    }

    fn update(&self, state: &mut IterateState, draw: &SampleDraw) -> Result<Option<VirtualIterate>> {
        let x_next = self.server_update(state)?;
        let virtual_iterate = if self.config.record_virtual {
            Some(self.virtual_update(state, x_next.view())?)
        } else {
            None
        };

        let problem = self.problem;
        let server = problem.server();
        let update = |&i: &usize| -> Result<(usize, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>)> {
            let grad = problem.user(i).grad(x_next.view());
            let (y, z) = self.user_update_with_grad(state, x_next.view(), i, &grad)?;
            let g_own = problem.user(i).grad(y.view());
            let g_server = server.grad(y.view());
            Ok((i, y, z, g_own, g_server))
        };
        let updates: Vec<_> = if draw.len() > 1 && draw.len() * problem.n >= PARALLEL_THRESHOLD {
            draw.members.par_iter().map(update).collect::<Result<_>>()?
        } else {
            draw.members.iter().map(update).collect::<Result<_>>()?
        };

        let sampled = updates.len() as u64;
        for (i, y, z, g_own, g_server) in updates {
            state.y[i] = y;
            state.z[i] = z;
            state.grad_cache_own[i] = g_own;
            state.grad_cache_server[i] = g_server;
        }
        state.x = x_next;
        state.k += 1;
        state.prox_calls += 1 + sampled;
        state.grad_calls += 3 * sampled;

        if !state.is_finite() {
            return Err(Error::NonFiniteIterate { k: state.k });
        }
        Ok(virtual_iterate)
    }

    /// Pure form of [`Solver::advance`].
    pub fn step(&self, state: &IterateState) -> Result<(IterateState, TraceRecord)> {
        let mut next = state.clone();
        let report = self.advance(&mut next)?;
        Ok((next, report.record))
    }

    /// Metrics of `state` as a trace row.
    pub fn record(&self, state: &IterateState, participants: usize) -> TraceRecord {
        let (stopping_error, consensus_max) = diagnostics::consensus_metrics(state);
        let lyapunov = self
            .certificate
            .map(|cert| diagnostics::lyapunov_weighted(state, cert, self.config, &self.probabilities));
        TraceRecord {
            k: state.k,
            stopping_error,
            consensus_max,
            phi: diagnostics::eval_phi(self.problem, state.x.view()),
            h_value: diagnostics::eval_h(self.problem, self.config.sigma, &state.y, state.x.view()),
            lyapunov,
            participants,
            prox_calls: state.prox_calls,
            grad_calls: state.grad_calls,
        }
    }

    /// Iterates while `error > tolerance` or `k <= max_iters`, stopping with
    /// [`Error::MaxItersExceeded`] after `10 * max_iters` iterations.
    pub fn run(&self, init: Option<IterateState>) -> Result<RunOutput> {
        let big_k = self.config.max_iters;
        let cap = 10 * big_k.max(1);
        let tol = self.config.tolerance;
        self.drive(init, |state, error| {
            if !(error > tol || state.k <= big_k) {
                return Ok(false);
            }
            if state.k >= cap {
                return Err(());
            }
            Ok(true)
        })
    }

    /// Exactly `iters` iterations, without a stopping test.
    pub fn run_fixed(&self, init: Option<IterateState>, iters: usize) -> Result<RunOutput> {
        self.drive(init, |state, _| Ok(state.k < iters))
    }

    fn drive<F>(&self, init: Option<IterateState>, mut keep_going: F) -> Result<RunOutput>
    where
        F: FnMut(&IterateState, f64) -> std::result::Result<bool, ()>,
    {
        let mut state = match init {
            Some(s) => {
                check_state(self.problem, &s)?;
                s
            }
            None => IterateState::zeros(self.problem),
        };
        let mut averages = ErgodicAverages::new(self.problem.n, self.problem.users());
        let first = self.record(&state, 0);
        let mut error = first.stopping_error;
        let mut trace = vec![first];
        loop {
            match keep_going(&state, error) {
                Ok(true) => {}
                Ok(false) => break,
                Err(()) => {
                    return Err(Error::MaxItersExceeded(Box::new(RunOutput {
                        state,
                        trace,
                        averages,
                    })))
                }
            }
            let y_prev = state.y.clone();
            let report = self.advance(&mut state)?;
            averages.accumulate(&y_prev, &state.x);
            error = report.record.stopping_error;
            trace.push(report.record);
        }
        Ok(RunOutput {
            state,
            trace,
            averages,
        })
    }
}

fn check_state(problem: &ProblemInstance, s: &IterateState) -> Result<()> {
    let users = problem.users();
    for (what, len) in [
        ("y", s.y.len()),
        ("z", s.z.len()),
        ("gradient cache", s.grad_cache_own.len()),
        ("gradient cache", s.grad_cache_server.len()),
    ] {
        if len != users {
            return Err(Error::DimensionMismatch {
                what,
                expected: users,
                got: len,
            });
        }
    }
    if s.x.len() != problem.n {
        return Err(Error::DimensionMismatch {
            what: "x",
            expected: problem.n,
            got: s.x.len(),
        });
    }
    Ok(())
}

pub fn server_update(problem: &ProblemInstance, config: &SolverConfig, state: &IterateState) -> Result<Array1<f64>> {
    Solver::new(problem, config)?.server_update(state)
}

pub fn user_update(
    problem: &ProblemInstance,
    config: &SolverConfig,
    state: &IterateState,
    x_next: ArrayView1<f64>,
    i: usize,
) -> Result<(Array1<f64>, Array1<f64>)> {
    Solver::new(problem, config)?.user_update(state, x_next, i)
}

pub fn virtual_update(
    problem: &ProblemInstance,
    config: &SolverConfig,
    state: &IterateState,
    x_next: ArrayView1<f64>,
) -> Result<VirtualIterate> {
    Solver::new(problem, config)?.virtual_update(state, x_next)
}

pub fn step(
    problem: &ProblemInstance,
    config: &SolverConfig,
    state: &IterateState,
) -> Result<(IterateState, TraceRecord)> {
    Solver::new(problem, config)?.step(state)
}

pub fn run(problem: &ProblemInstance, config: &SolverConfig, init: Option<IterateState>) -> Result<RunOutput> {
    Solver::new(problem, config)?.run(init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{AgentSpec, Nonsmooth, Smooth};
    use crate::prox::soft_threshold;
    use crate::sampling::ParticipationPolicy;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cfg(users: usize, gamma: f64, sigma: f64, alpha: f64, lambda: f64) -> SolverConfig {
        SolverConfig {
            gamma,
            sigma,
            alpha: vec![alpha; users],
            lambda: vec![lambda; users],
            participation: ParticipationPolicy::full(),
            max_iters: 10,
            tolerance: 1e-8,
            seed: 3,
            record_virtual: false,
        }
    }

    fn plain(m: usize, n: usize) -> ProblemInstance {
        ProblemInstance::new("plain", n, vec![AgentSpec::new(Nonsmooth::Zero, Smooth::Zero); m]).unwrap()
    }

    fn state_with(p: &ProblemInstance, x: Array1<f64>, y: Vec<Array1<f64>>, z: Vec<Array1<f64>>) -> IterateState {
        IterateState::from_parts(p, x, y, z).unwrap()
    }

    /// Root of `t -> t - h(t)` on `[lo, hi]` by bisection.
    fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |t: f64| t - h(t);
        assert!(f(lo) <= 0.0 && f(hi) >= 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn server_update_is_mean_of_z_without_regularization() {
        let p = plain(4, 2);
        let c = cfg(3, 1.0, 0.5, 0.0, 1.0);
        let z = vec![array![1.0, 2.0], array![3.0, -1.0], array![-1.0, 5.0]];
        let y = vec![array![9.0, 9.0]; 3];
        let s = state_with(&p, Array1::zeros(2), y, z);
        let x = server_update(&p, &c, &s).unwrap();
        assert_abs_diff_eq!(x, array![1.0, 2.0], epsilon = 1e-15);
    }

    #[test]
    fn server_update_with_unit_alpha() {
        let p = plain(3, 1);
        let c = cfg(2, 1.0, 0.5, 1.0, 1.0);
        let s = state_with(&p, array![0.0], vec![array![1.0], array![3.0]], vec![array![2.0], array![6.0]]);
        let x = server_update(&p, &c, &s).unwrap();
        assert_abs_diff_eq!(x[0], 12.0 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn server_update_soft_threshold_matches_bisection() {
        let p = ProblemInstance::new(
            "abs-server",
            1,
            vec![
                AgentSpec::new(Nonsmooth::Zero, Smooth::Zero),
                AgentSpec::new(Nonsmooth::L1 { weight: 1.0 }, Smooth::Zero),
            ],
        )
        .unwrap();
        let c = cfg(1, 1.0, 0.5, 0.0, 1.0);
        let s = state_with(&p, array![0.0], vec![array![0.0]], vec![array![4.0]]);
        let x = server_update(&p, &c, &s).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-15);
        let oracle = bisect(|t| soft_threshold(array![4.0 - 0.0 * t].view(), 1.0)[0], -10.0, 10.0);
        assert_abs_diff_eq!(x[0], oracle, epsilon = 1e-12);
    }

    #[test]
    fn user_update_without_terms() {
        let p = plain(2, 2);
        let c = cfg(1, 1.0, 0.5, 0.0, 0.7);
        let z = array![1.0, -2.0];
        let s = state_with(&p, Array1::zeros(2), vec![Array1::zeros(2)], vec![z.clone()]);
        let x = array![0.5, 0.25];
        let (y, zn) = user_update(&p, &c, &s, x.view(), 0).unwrap();
        assert_abs_diff_eq!(y, &x * 2.0 - &z, epsilon = 1e-15);
        assert_abs_diff_eq!(zn, &z + &((&x - &z) * 0.7), epsilon = 1e-15);
    }

    #[test]
    fn user_update_point_indicator_is_constant() {
        let c0 = array![0.3, -0.7];
        let p = ProblemInstance::new(
            "point",
            2,
            vec![
                AgentSpec::new(Nonsmooth::Point(c0.clone()), Smooth::Zero),
                AgentSpec::new(Nonsmooth::Zero, Smooth::Zero),
            ],
        )
        .unwrap();
        let c = cfg(1, 0.8, 0.5, 1.3, 1.0);
        let s = state_with(&p, Array1::zeros(2), vec![array![5.0, 5.0]], vec![array![-2.0, 1.0]]);
        let (y, _) = user_update(&p, &c, &s, array![10.0, -3.0].view(), 0).unwrap();
        assert_eq!(y, c0);
    }

    #[test]
    fn user_update_regularized_abs() {
        let p = ProblemInstance::new(
            "abs-user",
            1,
            vec![
                AgentSpec::new(Nonsmooth::L1 { weight: 1.0 }, Smooth::Zero),
                AgentSpec::new(Nonsmooth::Zero, Smooth::Zero),
            ],
        )
        .unwrap();
        let c = cfg(1, 1.0, 0.0, 1.0, 1.0);
        let s = state_with(&p, array![0.0], vec![array![0.0]], vec![array![0.0]]);
        let (y, _) = user_update(&p, &c, &s, array![2.0].view(), 0).unwrap();
        assert_abs_diff_eq!(y[0], 2.5, epsilon = 1e-15);
        let implicit = soft_threshold(array![4.0 + (2.0 - y[0])].view(), 1.0)[0];
        assert_abs_diff_eq!(implicit, y[0], epsilon = 1e-10);
        let oracle = bisect(|t| soft_threshold(array![4.0 + 2.0 - t].view(), 1.0)[0], -10.0, 10.0);
        assert_abs_diff_eq!(y[0], oracle, epsilon = 1e-10);
    }

    fn toy() -> ProblemInstance {
        ProblemInstance::new(
            "toy",
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
        .unwrap()
    }

    #[test]
    fn toy_converges_to_one() {
        let p = toy();
        let mut c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        c.max_iters = 10_000;
        c.tolerance = 1e-14;
        let out = run(&p, &c, None).unwrap();
        assert_abs_diff_eq!(out.state.x[0], 1.0, epsilon = 1e-6);
        assert!(out.trace.last().unwrap().stopping_error < 1e-12);
        assert!(out.trace.windows(2).all(|w| w[0].grad_calls <= w[1].grad_calls));
    }

    #[test]
    fn fixed_point_is_preserved() {
        let p = toy();
        let c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        // x* = 1, subgradient of |.| at 1 is 1 and grad g_2(1) = -1
        let cert = OptimalityCertificate {
            x_star: array![1.0],
            z_star: vec![array![1.0 - c.gamma]],
        };
        let s = IterateState::at_certificate(&p, &cert).unwrap();
        let (next, _) = step(&p, &c, &s).unwrap();
        assert_abs_diff_eq!(next.x, s.x, epsilon = 1e-14);
        assert_abs_diff_eq!(next.y[0], s.y[0], epsilon = 1e-14);
        assert_abs_diff_eq!(next.z[0], s.z[0], epsilon = 1e-14);

        let out = Solver::new(&p, &c).unwrap().run_fixed(Some(s), 5).unwrap();
        assert_abs_diff_eq!(out.averages.x_av[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn carry_over_and_accounting() {
        let users = 6;
        let mut agents: Vec<_> = (0..users)
            .map(|i| {
                AgentSpec::new(
                    Nonsmooth::L1 { weight: 0.1 },
                    Smooth::Quadratic {
                        center: array![i as f64, 1.0],
                        weight: 1.0,
                    },
                )
            })
            .collect();
        agents.push(AgentSpec::new(
            Nonsmooth::Zero,
            Smooth::Quadratic {
                center: array![0.5, 0.5],
                weight: 2.0,
            },
        ));
        let p = ProblemInstance::new("carry", 2, agents).unwrap();
        let mut c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::FixedFraction { rho: 0.5 }).unwrap();
        c.record_virtual = true;
        let solver = Solver::new(&p, &c).unwrap();
        let mut s = IterateState::zeros(&p);
        assert_eq!(s.grad_calls, 2 * users as u64);
        for _ in 0..5 {
            let before = s.clone();
            let report = solver.advance(&mut s).unwrap();
            assert_eq!(report.draw.len(), 3);
            assert_eq!(s.prox_calls - before.prox_calls, 4);
            assert_eq!(s.grad_calls - before.grad_calls, 9);
            let v = report.virtual_iterate.unwrap();
            for i in 0..users {
                if report.draw.contains(i) {
                    assert_eq!(s.y[i], v.y_tilde[i]);
                    assert_eq!(s.z[i], v.z_tilde[i]);
                } else {
                    assert_eq!(s.y[i], before.y[i]);
                    assert_eq!(s.z[i], before.z[i]);
                    assert_eq!(s.grad_cache_own[i], before.grad_cache_own[i]);
                    assert_eq!(s.grad_cache_server[i], before.grad_cache_server[i]);
                }
                assert_eq!(s.grad_cache_own[i], p.user(i).grad(s.y[i].view()));
                assert_eq!(s.grad_cache_server[i], p.server().grad(s.y[i].view()));
            }
        }
    }

    #[test]
    fn non_finite_iterates_are_reported() {
        let p = toy();
        let mut c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        c.gamma = 1e300;
        c.alpha = vec![0.0];
        c.sigma = 0.0;
        let err = Solver::new(&p, &c).unwrap().run_fixed(None, 50);
        assert!(matches!(err, Err(Error::NonFiniteIterate { .. })), "{err:?}");
    }

    #[test]
    fn cap_reports_partial_trace() {
        let p = toy();
        let mut c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        c.max_iters = 3;
        c.tolerance = 0.0;
        match run(&p, &c, None) {
            Err(Error::MaxItersExceeded(out)) => {
                assert_eq!(out.state.k, 30);
                assert_eq!(out.trace.len(), 31);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimum_iterations_respected() {
        let p = toy();
        let mut c = SolverConfig::with_defaults(&p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        c.max_iters = 7;
        c.tolerance = 1e10;
        let out = run(&p, &c, None).unwrap();
        assert_eq!(out.state.k, 8);
        assert_eq!(out.averages.count, 8);
    }

    #[test]
    fn zero_server_gives_infinite_error() {
        let p = plain(2, 1);
        let s = IterateState::zeros(&p);
        assert_eq!(diagnostics::consensus_metrics(&s).0, f64::INFINITY);
    }
}
