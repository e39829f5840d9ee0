mod common;

use ndarray::{array, Array1, Array2};

use common::{dist_sq, normal, rng, smooth_l1_instance};
use splitstoch::diagnostics::{
    certificate_from_state, eps_optimality, eval_h, eval_phi, reference_solve, s_residual,
};
use splitstoch::problems::{
    build_compressed_sensing, build_logistic, planted_instance, toy1d, Dataset, PlantedOptions, SparseRow, Transform,
};
use splitstoch::{IterateState, OptimalityCertificate, ParticipationPolicy, Solver, SolverConfig};

#[test]
fn consensus_collapse() {
    let mut r = rng(1);
    for seed in 0..5 {
        let p = smooth_l1_instance(7, 5, seed);
        let sol = planted_instance(PlantedOptions::default(), seed).unwrap();
        for _ in 0..20 {
            let x = normal(&mut r, p.n, 2.0);
            let cases = [(&p, x.clone()), (&sol.problem, sol.x_star.clone())];
            for (problem, x) in cases {
                let ys = vec![x.clone(); problem.users()];
                for sigma in [0.0, 0.3, 1.0] {
                    let h = eval_h(problem, sigma, &ys, x.view());
                    let phi = eval_phi(problem, x.view());
                    assert!(phi.is_finite());
                    assert!((h - phi).abs() <= 1e-12 * (1.0 + phi.abs()), "{h} vs {phi}");
                }
            }
        }
    }
}

#[test]
fn residual_vanishes_at_certificates_and_not_near_them() {
    let mut r = rng(2);
    for seed in 0..5 {
        let sol = planted_instance(PlantedOptions::default(), 40 + seed).unwrap();
        let p = &sol.problem;
        let config = SolverConfig::with_defaults(p, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
        let cert = sol.certificate(config.gamma, config.sigma).unwrap();
        assert!(s_residual(p, &config, &cert) <= 1e-10);
        for _ in 0..10 {
            let mut bad = cert.clone();
            let i = r.next_u32_index(p.users());
            let mut d = normal(&mut r, p.n, 1.0);
            d *= 1e-3 / d.dot(&d).sqrt();
            bad.z_star[i] += &d;
            assert!(s_residual(p, &config, &bad) > 0.0);
            let mut moved = cert.clone();
            moved.x_star += &d;
            assert!(s_residual(p, &config, &moved) > 0.0);
        }
    }
}

trait IndexDraw {
    fn next_u32_index(&mut self, n: usize) -> usize;
}

impl IndexDraw for rand_chacha::ChaCha8Rng {
    fn next_u32_index(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.random_range(0..n)
    }
}

#[test]
fn certificate_from_reference_solution() {
    // a certificate read off a converged full-participation run
    let t = toy1d();
    let reference = reference_solve(&t.problem, 1e-10).unwrap();
    assert!((reference.x[0] - 1.0).abs() < 1e-8);
    assert!((reference.phi - 1.5).abs() < 1e-12);
    let config = SolverConfig::with_defaults(&t.problem, 1.0, 0.5, ParticipationPolicy::full()).unwrap();
    let out = Solver::new(&t.problem, &config).unwrap().run_fixed(None, 400).unwrap();
    let cert = certificate_from_state(&out.state);
    assert!(s_residual(&t.problem, &config, &cert) <= 1e-10);
    let perturbed = OptimalityCertificate {
        x_star: &cert.x_star + 1e-3,
        ..cert
    };
    assert!(s_residual(&t.problem, &config, &perturbed) > 1e-4);
}

/// Solves `A x = b` for square `A` by Gaussian elimination with partial
/// pivoting; `None` when nearly singular.
fn solve_square(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    let mut m = a.clone();
    let mut v = b.clone();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))?;
        if m[[piv, c]].abs() < 1e-10 {
            return None;
        }
        for k in 0..n {
            m.swap([c, k], [piv, k]);
        }
        v.swap(c, piv);
        for r in (c + 1)..n {
            let f = m[[r, c]] / m[[c, c]];
            for k in c..n {
                m[[r, k]] -= f * m[[c, k]];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| m[[r, k]] * x[k]).sum();
        x[r] = (v[r] - s) / m[[r, r]];
    }
    Some(x)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut with: Vec<Vec<usize>> = subsets(n - 1, k - 1)
        .into_iter()
        .map(|mut s| {
            s.push(n - 1);
            s
        })
        .collect();
    with.extend(subsets(n - 1, k));
    with
}

/// `min ||x||_1 s.t. A x = b` over the basic solutions of the equality
/// system, which contain a minimizer of the linear program.
fn basis_pursuit_by_enumeration(a: &Array2<f64>, b: &Array1<f64>) -> f64 {
    let (p, n) = a.dim();
    let mut best = f64::INFINITY;
    for support in subsets(n, p) {
        let cols = a.select(ndarray::Axis(1), &support);
        if let Some(xs) = solve_square(&cols, b) {
            best = best.min(xs.mapv(f64::abs).sum());
        }
    }
    best
}

#[test]
fn reference_matches_support_enumeration_on_tiny_cs() {
    for seed in 0..4 {
        let (cs, problem) = build_compressed_sensing(8, 4, 0.25, Transform::Dct, seed).unwrap();
        let best = basis_pursuit_by_enumeration(&cs.a, &cs.b);
        let reference = reference_solve(&problem, 1e-6).unwrap();
        assert!(reference.phi.is_finite());
        assert!((reference.phi - best).abs() <= 1e-8, "seed {seed}: {} vs {best}", reference.phi);
        let residual = cs.a.dot(&reference.x) - &cs.b;
        assert!(residual.dot(&residual).sqrt() <= 1e-8);
    }
}

fn four_point_dataset() -> Dataset {
    let pts = [([1.0, 1.0], 1.0), ([1.0, 1.0], -1.0), ([1.0, -1.0], 1.0), ([-1.0, 0.5], -1.0)];
    Dataset {
        rows: pts
            .iter()
            .map(|(a, _)| SparseRow {
                indices: vec![0, 1],
                values: a.to_vec(),
            })
            .collect(),
        labels: pts.iter().map(|(_, b)| *b).collect(),
        n: 2,
    }
}

#[test]
fn reference_matches_grid_on_two_dimensional_logistic() {
    let (problem, _) = build_logistic(&four_point_dataset(), 2, (1e-2, 1e-2), 0).unwrap();
    let reference = reference_solve(&problem, 1e-10).unwrap();
    // nested grid search, independent of the library's refinement
    let phi = |x: f64, y: f64| eval_phi(&problem, array![x, y].view());
    let (mut cx, mut cy, mut h) = (0.0, 0.0, 0.05);
    let mut best = phi(cx, cy);
    for _ in 0..12 {
        let (mut bx, mut by) = (cx, cy);
        for i in -100..=100 {
            for j in -100..=100 {
                let (x, y) = (cx + i as f64 * h, cy + j as f64 * h);
                let v = phi(x, y);
                if v < best {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        }
        cx = bx;
        cy = by;
        h /= 20.0;
    }
    assert!((reference.phi - best).abs() <= 1e-4);
    assert!(dist_sq(&reference.x, &array![cx, cy]).sqrt() <= 1e-4, "{} vs ({cx}, {cy})", reference.x);
}

#[test]
fn repeated_runs_approach_eps_optimality() {
    // ergodic user averages include the starting point, so instances with
    // constraint users would give an infinite objective; use finite f_i
    let problem = smooth_l1_instance(5, 4, 12);
    let phi_star = reference_solve(&problem, 1e-12).unwrap().phi;
    let config = SolverConfig::with_defaults(&problem, 1.0, 0.5, ParticipationPolicy::FixedFraction { rho: 0.5 })
        .unwrap()
        .with_max_iters(4000);
    let report = eps_optimality(&problem, &config, 8, 5e-2, phi_star, None).unwrap();
    assert_eq!(report.runs, 8);
    assert!(report.is_optimal(), "{report:?}");
    let short = config.clone().with_max_iters(20);
    let early = eps_optimality(&problem, &short, 8, 5e-2, phi_star, None).unwrap();
    assert!(early.value_gap > report.value_gap);
    assert!(early.consensus_margin > report.consensus_margin);
    assert!(eps_optimality(&problem, &config, 1, 1.0, 0.0, None).is_err());
}

#[test]
fn certificate_state_is_a_fixed_point_of_the_solver() {
    let sol = planted_instance(PlantedOptions::default(), 77).unwrap();
    let config = SolverConfig::with_defaults(&sol.problem, 1.0, 0.5, ParticipationPolicy::FixedFraction { rho: 0.4 })
        .unwrap();
    let cert = sol.certificate(config.gamma, config.sigma).unwrap();
    let out = Solver::new(&sol.problem, &config)
        .unwrap()
        .with_certificate(&cert)
        .run_fixed(Some(IterateState::at_certificate(&sol.problem, &cert).unwrap()), 50)
        .unwrap();
    assert!(dist_sq(&out.state.x, &sol.x_star).sqrt() <= 1e-10);
    assert!(out.trace.iter().skip(1).all(|r| r.lyapunov.unwrap() <= 1e-18));
}
