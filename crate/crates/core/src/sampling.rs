//! Participation draws.
//!
//! The draw at iteration `k` is a pure function of `(policy, seed, k)`: the
//! random stream is a ChaCha stream keyed by the run seed and selected by
//! the iteration counter, so any iteration can be replayed on its own and
//! the draw can never observe iterate values.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ParticipationPolicy {
    /// User `i` joins independently with probability `p[i]`.
    Bernoulli { p: Vec<f64> },
    /// A uniformly random subset of `round(rho * users)` users (at least one).
    FixedFraction { rho: f64 },
}

impl ParticipationPolicy {
    pub fn full() -> Self {
        ParticipationPolicy::FixedFraction { rho: 1.0 }
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        match self {
            ParticipationPolicy::Bernoulli { p } => {
                if p.len() != users {
                    return Err(Error::DimensionMismatch {
                        what: "inclusion probabilities",
                        expected: users,
                        got: p.len(),
                    });
                }
                if let Some(i) = p.iter().position(|&pi| !(pi > 0.0 && pi <= 1.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "inclusion probability of user {i} must lie in (0, 1], got {}",
                        p[i]
                    )));
                }
                Ok(())
            }
            ParticipationPolicy::FixedFraction { rho } => {
                if !(*rho > 0.0 && *rho <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "participation fraction must lie in (0, 1], got {rho}"
                    )));
                }
                if (rho * users as f64).ceil() < 1.0 {
                    return Err(Error::InvalidArgument("fraction selects no users".into()));
                }
                Ok(())
            }
        }
    }

    /// Number of users drawn per iteration in fixed-fraction mode.
    pub fn fixed_size(rho: f64, users: usize) -> usize {
        ((rho * users as f64).round() as usize).clamp(1, users.max(1))
    }

    pub fn is_full(&self, users: usize) -> bool {
        match self {
            ParticipationPolicy::Bernoulli { p } => p.iter().all(|&pi| pi >= 1.0),
            ParticipationPolicy::FixedFraction { rho } => Self::fixed_size(*rho, users) == users,
        }
    }
}

/// The users updated at iteration `k`, sorted ascending (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDraw {
    pub k: usize,
    pub members: Vec<usize>,
}

impl SampleDraw {
    pub fn full(k: usize, users: usize) -> Self {
        Self {
            k,
            members: (0..users).collect(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Random stream for iteration `k` of the run keyed by `seed`.
pub fn iteration_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Draws `S_k` for `users` users.
pub fn draw(policy: &ParticipationPolicy, users: usize, seed: u64, k: usize) -> SampleDraw {
    let mut rng = iteration_rng(seed, k);
    let members = match policy {
        ParticipationPolicy::Bernoulli { p } => (0..users)
            .filter(|&i| {
                let u: f64 = rng.random();
                u < p[i]
            })
            .collect(),
        ParticipationPolicy::FixedFraction { rho } => {
            let s = ParticipationPolicy::fixed_size(*rho, users);
            if s == users {
                (0..users).collect()
            } else {
                let mut m = index::sample(&mut rng, users, s).into_vec();
                m.sort_unstable();
                m
            }
        }
    };
    SampleDraw { k, members }
}

/// `P(i in S_k)` for user `i` (0-based) among `users` users.
pub fn inclusion_probability(policy: &ParticipationPolicy, i: usize, users: usize) -> Result<f64> {
    if i >= users {
        return Err(Error::IndexOutOfRange { index: i, users });
    }
    Ok(match policy {
        ParticipationPolicy::Bernoulli { p } => p[i],
        ParticipationPolicy::FixedFraction { rho } => {
            ParticipationPolicy::fixed_size(*rho, users) as f64 / users as f64
        }
    })
}

pub fn inclusion_probabilities(policy: &ParticipationPolicy, users: usize) -> Result<Vec<f64>> {
    (0..users)
        .map(|i| inclusion_probability(policy, i, users))
        .collect()
}
