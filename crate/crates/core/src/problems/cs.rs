//! Basis pursuit `min ||x||_1 s.t. Ax = b` with rows drawn from an
//! orthonormal transform.
//!
//! Each measurement row becomes a user holding the indicator of its
//! hyperplane; the server holds `||x||_1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{AgentSpec, Hyperplane, Nonsmooth, Smooth};
use crate::types::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Orthonormal DCT-II.
    Dct,
    /// Real embedding of the DFT: normalized cosine and sine rows.
    DftReal,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Dct => "dct",
            Transform::DftReal => "dft_real",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" => Ok(Transform::Dct),
            "dft_real" | "dft" => Ok(Transform::DftReal),
            other => Err(Error::InvalidArgument(format!("unknown transform `{other}`"))),
        }
    }
}

impl Transform {
    /// Number of selectable rows. The constant row is never offered.
    pub fn pool_size(self, n: usize) -> usize {
        n - 1
    }

    /// Row `r` of the selectable pool, unit norm.
    pub fn row(self, n: usize, r: usize) -> Array1<f64> {
        assert!(r < self.pool_size(n), "row {r} outside pool of size {}", self.pool_size(n));
        let nf = n as f64;
        let mut row = match self {
            Transform::Dct => {
                let k = (r + 1) as f64;
                Array1::from_shape_fn(n, |j| (PI * (j as f64 + 0.5) * k / nf).cos())
            }
            Transform::DftReal => {
                // cos_1 ..= cos_{n/2}, then sin_1 .. sin_{ceil(n/2) - 1}
                let cos_count = n / 2;
                if r < cos_count {
                    let k = (r + 1) as f64;
                    Array1::from_shape_fn(n, |j| (2.0 * PI * k * j as f64 / nf).cos())
                } else {
                    let k = (r - cos_count + 1) as f64;
                    Array1::from_shape_fn(n, |j| (2.0 * PI * k * j as f64 / nf).sin())
                }
            }
        };
        let norm = row.dot(&row).sqrt();
        row /= norm;
        row
    }
}

/// Replay record of a compressed-sensing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSpec {
    pub n: usize,
    pub p: usize,
    pub transform: Transform,
    pub seed: u64,
    pub sparsity: f64,
    /// Indices into the transform's row pool.
    pub rows: Vec<usize>,
    pub x_true: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CsInstance {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub x_true: Array1<f64>,
    pub transform: Transform,
    pub rows: Vec<usize>,
    pub seed: u64,
    pub sparsity: f64,
}

/// Number of nonzeros for a sparsity fraction, rounded to nearest.
pub fn nonzero_count(n: usize, sparsity: f64) -> usize {
    ((sparsity * n as f64).round() as usize).min(n)
}

pub fn build_compressed_sensing(
    n: usize,
    p: usize,
    sparsity: f64,
    transform: Transform,
    seed: u64,
) -> Result<(CsInstance, ProblemInstance)> {
    if p == 0 || p >= n {
        return Err(Error::InvalidShape(format!("need 0 < p < n, got p = {p}, n = {n}")));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, transform.pool_size(n), p).into_vec();
    rows.sort_unstable();
    let s = nonzero_count(n, sparsity);
    let mut support = index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut x_true = Array1::<f64>::zeros(n);
    for j in support {
        x_true[j] = rng.sample(StandardNormal);
    }
    let spec = CsSpec {
        n,
        p,
        transform,
        seed,
        sparsity,
        rows,
        x_true: x_true.to_vec(),
    };
    let inst = CsInstance::from_spec(&spec)?;
    let problem = inst.problem()?;
    Ok((inst, problem))
}

impl CsInstance {
    pub fn from_spec(spec: &CsSpec) -> Result<Self> {
        if spec.x_true.len() != spec.n {
            return Err(Error::DimensionMismatch {
                what: "x_true",
                expected: spec.n,
                got: spec.x_true.len(),
            });
        }
        if spec.rows.len() != spec.p {
            return Err(Error::DimensionMismatch {
                what: "row indices",
                expected: spec.p,
                got: spec.rows.len(),
            });
        }
        let pool = spec.transform.pool_size(spec.n);
        if let Some(&r) = spec.rows.iter().find(|&&r| r >= pool) {
            return Err(Error::InvalidShape(format!("row index {r} outside pool of size {pool}")));
        }
        let mut a = Array2::<f64>::zeros((spec.p, spec.n));
        for (i, &r) in spec.rows.iter().enumerate() {
            a.row_mut(i).assign(&spec.transform.row(spec.n, r));
        }
        let x_true = Array1::from(spec.x_true.clone());
        let b = a.dot(&x_true);
        Ok(Self {
            a,
            b,
            x_true,
            transform: spec.transform,
            rows: spec.rows.clone(),
            seed: spec.seed,
            sparsity: spec.sparsity,
        })
    }

    pub fn to_spec(&self) -> CsSpec {
        CsSpec {
            n: self.a.ncols(),
            p: self.a.nrows(),
            transform: self.transform,
            seed: self.seed,
            sparsity: self.sparsity,
            rows: self.rows.clone(),
            x_true: self.x_true.to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    /// One hyperplane user per measurement and an `l1` server.
    pub fn problem(&self) -> Result<ProblemInstance> {
        let mut agents = Vec::with_capacity(self.a.nrows() + 1);
        for (row, &bi) in self.a.rows().into_iter().zip(&self.b) {
            agents.push(AgentSpec::new(
                Nonsmooth::Hyperplane(Hyperplane::new(row.to_owned(), bi)?),
                Smooth::Zero,
            ));
        }
        agents.push(AgentSpec::new(Nonsmooth::L1 { weight: 1.0 }, Smooth::Zero));
        ProblemInstance::new(format!("cs-{}-{}", self.transform, self.seed), self.a.ncols(), agents)
    }

    /// `||x - x_true|| / ||x_true||`; the absolute error when `x_true = 0`.
    pub fn relative_error(&self, x: &Array1<f64>) -> f64 {
        let d = x - &self.x_true;
        let num = d.dot(&d).sqrt();
        let den = self.x_true.dot(&self.x_true).sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}
