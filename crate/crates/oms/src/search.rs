//! First-try search planning from a fitted mixture.
//!
//! Two policies: visit component means in descending weight order
//! (the default), or draw candidate locations from the mixture itself.
//! The random baseline shuffles the known cluster locations uniformly.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::seeding::rng_from_seed;

/// How a search plan orders its candidate locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Component means, highest mixing weight first.
    #[default]
    ModeRanked,
    /// Independent draws from the fitted mixture.
    GmmSample,
    /// Uniform shuffle of known locations (baseline plans only).
    RandomBaseline,
}

/// An ordered list of locations to try.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    pub candidates: Vec<Vector3<f64>>,
    pub strategy: SearchStrategy,
    pub seed: u64,
}

/// A search counts as a hit within this Euclidean radius of the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitCriterion {
    pub radius: f64,
}

impl HitCriterion {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid_input(format!(
                "hit radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius })
    }
}

impl Default for HitCriterion {
    fn default() -> Self {
        Self { radius: 0.3 }
    }
}

/// One draw from the mixture: component by weight, then its Gaussian.
pub fn sample_mixture(model: &GmmModel, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut chosen = model.components.len() - 1;
    for (idx, component) in model.components.iter().enumerate() {
        cumulative += component.weight;
        if u < cumulative {
            chosen = idx;
            break;
        }
    }
    let component = &model.components[chosen];
    let chol = nalgebra::Cholesky::new(component.covariance)
        .expect("validated model has SPD covariances");
    let z = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    component.mean + chol.l() * z
}

/// Builds a plan of up to `n_candidates` locations from a fitted model.
///
/// `ModeRanked` yields component means by descending weight (ties keep
/// component order), so at most K candidates; `GmmSample` yields exactly
/// `n_candidates` seeded mixture draws.
pub fn plan_search(
    model: &GmmModel,
    strategy: SearchStrategy,
    seed: u64,
    n_candidates: usize,
) -> Result<SearchPlan> {
    model.validate()?;
    if n_candidates < 1 {
        return Err(Error::invalid_input("n_candidates must be >= 1"));
    }

    let candidates = match strategy {
        SearchStrategy::ModeRanked => {
            let mut order: Vec<usize> = (0..model.components.len()).collect();
            order.sort_by(|&a, &b| {
                model.components[b]
                    .weight
                    .partial_cmp(&model.components[a].weight)
                    .expect("weights are finite")
                    .then(a.cmp(&b))
            });
            order
                .into_iter()
                .take(n_candidates)
                .map(|idx| model.components[idx].mean)
                .collect()
        }
        SearchStrategy::GmmSample => {
            let mut rng = rng_from_seed(seed);
            (0..n_candidates)
                .map(|_| sample_mixture(model, &mut rng))
                .collect()
        }
        SearchStrategy::RandomBaseline => {
            return Err(Error::invalid_input(
                "RandomBaseline plans come from random_baseline()",
            ))
        }
    };

    Ok(SearchPlan {
        candidates,
        strategy,
        seed,
    })
}

/// The naive policy: a uniformly random permutation of the known cluster
/// locations, so the first try is uniform over them.
pub fn random_baseline(cluster_locations: &[Vector3<f64>], seed: u64) -> Result<SearchPlan> {
    if cluster_locations.is_empty() {
        return Err(Error::invalid_input(
            "random_baseline: no cluster locations",
        ));
    }
    let mut candidates = cluster_locations.to_vec();
    let mut rng = rng_from_seed(seed);
    candidates.shuffle(&mut rng);
    Ok(SearchPlan {
        candidates,
        strategy: SearchStrategy::RandomBaseline,
        seed,
    })
}

/// Boundary-inclusive hit test: true iff the candidate lies within
/// `criterion.radius` meters of the truth.
pub fn is_hit(candidate: &Vector3<f64>, truth: &Vector3<f64>, criterion: &HitCriterion) -> bool {
    (candidate - truth).norm() <= criterion.radius
}
