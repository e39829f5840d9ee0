#![allow(dead_code)]

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use splitstoch::{AgentSpec, Nonsmooth, ProblemInstance, ProxOracle, Smooth};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn dist_sq(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum()
}

/// Maps `x` into the domain of `f` so that objective values stay finite.
pub fn into_domain(f: &Nonsmooth, x: Array1<f64>) -> Array1<f64> {
    match f {
        Nonsmooth::Hyperplane(_) | Nonsmooth::Point(_) => f.prox(x.view(), 1.0),
        _ => x,
    }
}

/// Minimizer of a convex function on `[lo, hi]` by golden-section search.
pub fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-11 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Users with `w ||x||_1` plus a quadratic, and a quadratic server.
pub fn smooth_l1_instance(n: usize, users: usize, seed: u64) -> ProblemInstance {
    let mut r = rng(seed);
    let mut agents = Vec::with_capacity(users + 1);
    for _ in 0..users {
        let center = normal(&mut r, n, 1.0);
        let weight = r.random_range(0.5..2.0);
        agents.push(AgentSpec::new(
            Nonsmooth::L1 { weight: 0.2 },
            Smooth::Quadratic { center, weight },
        ));
    }
    let center = normal(&mut r, n, 1.0);
    agents.push(AgentSpec::new(Nonsmooth::Zero, Smooth::Quadratic { center, weight: 1.0 }));
    ProblemInstance::new("smooth-l1", n, agents).unwrap()
}

pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
