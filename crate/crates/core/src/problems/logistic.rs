//! Sparse logistic regression split across agents.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::oracle::{AgentSpec, LogisticBlock, Nonsmooth, Smooth};
use crate::types::ProblemInstance;

/// A sparse feature vector; `indices` are 0-based and strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn to_dense(&self, n: usize) -> Array1<f64> {
        let mut out = Array1::zeros(n);
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, x: &Array1<f64>) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&j, &v)| v * x[j]).sum()
    }
}

/// Binary classification data with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<SparseRow>,
    pub labels: Vec<f64>,
    /// Feature dimension.
    pub n: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n: self.n,
        }
    }

    /// Fraction of samples with `sign(a^T x) == b` (zero margin counts as `+1`).
    pub fn accuracy(&self, x: &Array1<f64>) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        let hits = self
            .rows
            .iter()
            .zip(&self.labels)
            .filter(|(r, &b)| (if r.dot(x) >= 0.0 { 1.0 } else { -1.0 }) == b)
            .count();
        hits as f64 / self.len() as f64
    }
}

/// Seeded random split; the first `ceil(f N)` permuted samples train.
pub fn split_train_test(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((train_fraction * data.len() as f64).ceil() as usize).min(data.len());
    Ok((data.subset(&perm[..cut]), data.subset(&perm[cut..])))
}

/// Agents own round-robin blocks of samples. Agent `j` gets
/// `g_j = (1/N) sum_{i in B_j} log(1 + exp(-b_i a_i^T x))` and
/// `f_j = (|B_j| / N) lambda_j ||x||_1` with `lambda_j ~ U[lo, hi]`, so the
/// total is the sample mean of loss plus per-sample `l1` weight. The drawn
/// `lambda_j` are returned alongside the problem.
pub fn build_logistic(
    data: &Dataset,
    m_agents: usize,
    lambda_range: (f64, f64),
    seed: u64,
) -> Result<(ProblemInstance, Vec<f64>)> {
    let (lo, hi) = lambda_range;
    if m_agents < 2 {
        return Err(Error::InvalidShape(format!("need at least 2 agents, got {m_agents}")));
    }
    if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad lambda range [{lo}, {hi}]")));
    }
    let total = data.len();
    if m_agents > total {
        return Err(Error::EmptyBlock {
            block: total,
            agents: m_agents,
            samples: total,
        });
    }
    if data.n == 0 {
        return Err(Error::InvalidShape("dataset has no features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas: Vec<f64> = (0..m_agents)
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();
    let nf = total as f64;
    let mut agents = Vec::with_capacity(m_agents);
    for (j, &lam) in lambdas.iter().enumerate() {
        let members: Vec<usize> = (j..total).step_by(m_agents).collect();
        let mut rows = Array2::<f64>::zeros((members.len(), data.n));
        for (r, &i) in members.iter().enumerate() {
            for (&c, &v) in data.rows[i].indices.iter().zip(&data.rows[i].values) {
                rows[[r, c]] = v;
            }
        }
        let labels = Array1::from_iter(members.iter().map(|&i| data.labels[i]));
        let block = LogisticBlock::new(rows, labels, 1.0 / nf)?;
        let weight = members.len() as f64 / nf * lam;
        let nonsmooth = if weight > 0.0 {
            Nonsmooth::L1 { weight }
        } else {
            Nonsmooth::Zero
        };
        agents.push(AgentSpec::new(nonsmooth, Smooth::Logistic(block)));
    }
    let problem = ProblemInstance::new(format!("logistic-{m_agents}"), data.n, agents)?;
    Ok((problem, lambdas))
}

/// Category counts of the 22 attributes; their one-hot encoding has 112 columns.
pub const MUSHROOM_CARDINALITIES: [usize; 22] =
    [6, 4, 9, 2, 9, 2, 2, 2, 8, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7];

/// A synthetic stand-in for the mushrooms data: 22 categorical attributes
/// one-hot encoded into 112 binary features, labels from a noisy linear
/// rule on the encoding.
pub fn synthetic_mushrooms(samples: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = MUSHROOM_CARDINALITIES.iter().sum();
    let w = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
    let mut rows = Vec::with_capacity(samples);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut indices = Vec::with_capacity(MUSHROOM_CARDINALITIES.len());
        let mut offset = 0;
        for &card in &MUSHROOM_CARDINALITIES {
            indices.push(offset + rng.random_range(0..card));
            offset += card;
        }
        let score: f64 = indices.iter().map(|&j| w[j]).sum();
        let noise: f64 = rng.sample(StandardNormal);
        labels.push(if score + noise >= 0.0 { 1.0 } else { -1.0 });
        rows.push(SparseRow {
            values: vec![1.0; indices.len()],
            indices,
        });
    }
    Dataset { rows, labels, n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::eval_phi;
    use crate::prox::logistic_loss;

    #[test]
    fn mushrooms_shape() {
        let d = synthetic_mushrooms(300, 5);
        assert_eq!(d.n, 112);
        assert_eq!(d.len(), 300);
        assert!(d.rows.iter().all(|r| r.indices.len() == 22 && r.indices.windows(2).all(|w| w[0] < w[1])));
        let pos = d.labels.iter().filter(|b| **b > 0.0).count();
        assert!(pos > 30 && pos < 270, "{pos}");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = synthetic_mushrooms(4, 1);
        let (tr, te) = split_train_test(&d, 0.75, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 1));
        assert_eq!(split_train_test(&d, 0.75, 3).unwrap().0, tr);
    }

    #[test]
    fn objective_matches_direct_sum() {
        let d = synthetic_mushrooms(37, 2);
        let (p, lambdas) = build_logistic(&d, 5, (1e-3, 1e-2), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = Array1::from_shape_fn(d.n, |_| rng.sample::<f64, _>(StandardNormal) * 0.3);
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            let direct: f64 = (0..d.len())
                .map(|i| logistic_loss(d.labels[i] * d.rows[i].dot(&x)) + lambdas[i % 5] * l1)
                .sum::<f64>()
                / d.len() as f64;
            let phi = eval_phi(&p, x.view());
            assert!((phi - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{phi} vs {direct}");
        }
    }

    #[test]
    fn single_sample_gradient_at_zero() {
        let d = Dataset {
            rows: vec![SparseRow {
                indices: vec![0],
                values: vec![1.0],
            }],
            labels: vec![1.0],
            n: 2,
        };
        let two = Dataset {
            rows: vec![d.rows[0].clone(); 2],
            labels: vec![1.0; 2],
            n: 2,
        };
        let (p, _) = build_logistic(&two, 2, (0.0, 0.0), 0).unwrap();
        let g = p.user(0).grad(Array1::zeros(2).view());
        // per-agent weight 1/N = 1/2 halves the single-sample gradient -e_1/2
        assert!((g[0] + 0.25).abs() < 1e-15 && g[1] == 0.0);
        assert!(matches!(build_logistic(&d, 2, (0.0, 0.0), 0), Err(Error::EmptyBlock { .. })));
    }
}
