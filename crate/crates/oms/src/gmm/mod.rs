//! Gaussian mixture fitting over 3D observations.
//!
//! Expectation-Maximization with seeded random restarts, a covariance
//! floor against degenerate clusters, and component-count selection by
//! BIC minimization. All responsibilities and likelihoods are computed
//! in log space through Cholesky factors; nothing here ever forms a
//! raw density that could underflow.

mod model_io;

pub use model_io::{model_from_json, model_to_json, read_model_file, write_model_file};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, derive_seed, rng_from_seed};

const LOG_TWO_PI: f64 = 1.837877066409345483560659472811;

/// Total responsibility below this marks a component as collapsed.
const DEGENERATE_RESPONSIBILITY: f64 = 1e-12;

/// One weighted Gaussian of the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    /// Mixing proportion, in (0, 1].
    pub weight: f64,
    /// Mean location in meters.
    pub mean: Vector3<f64>,
    /// Symmetric positive-definite covariance in square meters.
    pub covariance: Matrix3<f64>,
}

impl GaussianComponent {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight <= 1.0) {
            return Err(Error::invalid_input(format!(
                "component weight must be in (0, 1], got {}",
                self.weight
            )));
        }
        if !self.mean.iter().all(|m| m.is_finite()) {
            return Err(Error::invalid_input("component mean must be finite"));
        }
        let asymmetry = (self.covariance - self.covariance.transpose()).abs().max();
        if asymmetry > 1e-12 {
            return Err(Error::invalid_input(format!(
                "covariance asymmetric by {asymmetry:.3e}"
            )));
        }
        // SPD check; the fit-time floor guarantees eigenvalues >= epsilon.
        ComponentDensity::new(self).map(|_| ())
    }
}

/// Which parameter count enters the BIC penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BicDefinition {
    /// k = number of Gaussians.
    #[default]
    PaperLiteral,
    /// k = free parameters: K means (3) + covariances (6) + K - 1 weights.
    FreeParameterCount,
}

/// EM fitting knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Absolute log-likelihood change that counts as converged.
    pub tolerance: f64,
    /// Independent seeded restarts; the best final likelihood wins.
    pub restarts: usize,
    /// Epsilon added to every covariance diagonal each M-step.
    pub covariance_floor: f64,
    pub seed: u64,
    pub bic_definition: BicDefinition,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            restarts: 10,
            covariance_floor: 1e-6,
            seed: 42,
            bic_definition: BicDefinition::PaperLiteral,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid_input("max_iterations must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid_input("tolerance must be > 0"));
        }
        if self.restarts < 1 {
            return Err(Error::invalid_input("restarts must be >= 1"));
        }
        if !(self.covariance_floor > 0.0) {
            return Err(Error::invalid_input("covariance_floor must be > 0"));
        }
        Ok(())
    }
}

/// A fitted mixture plus its fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GaussianComponent>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Echo of the configuration the model was fitted with.
    pub config: EmConfig,
}

impl GmmModel {
    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Recomputes the BIC from stored fields; must match `self.bic`.
    pub fn recompute_bic(&self) -> f64 {
        bic(
            self.component_count(),
            self.n_train,
            self.log_likelihood,
            self.config.bic_definition,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid_input("model must have at least 1 component"));
        }
        for component in &self.components {
            component.validate()?;
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_input(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Posterior membership probabilities, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix {
    values: Vec<f64>,
    n_points: usize,
    n_components: usize,
}

impl ResponsibilityMatrix {
    pub fn new(values: Vec<f64>, n_points: usize, n_components: usize) -> Result<Self> {
        if values.len() != n_points * n_components {
            return Err(Error::invalid_input("responsibility matrix shape mismatch"));
        }
        let matrix = Self {
            values,
            n_points,
            n_components,
        };
        for i in 0..n_points {
            let row = matrix.row(i);
            if row.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::invalid_input(format!(
                    "responsibilities for point {i} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid_input(format!(
                    "responsibility row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(matrix)
    }

    pub fn get(&self, point: usize, component: usize) -> f64 {
        self.values[point * self.n_components + component]
    }

    pub fn row(&self, point: usize) -> &[f64] {
        let start = point * self.n_components;
        &self.values[start..start + self.n_components]
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }
}

/// Cached Cholesky factorization of one component for repeated density
/// evaluations: logpdf(x) = log_norm - 0.5 |L^-1 (x - mean)|^2.
struct ComponentDensity {
    mean: Vector3<f64>,
    chol_lower: Matrix3<f64>,
    log_norm: f64,
}

impl ComponentDensity {
    fn new(component: &GaussianComponent) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(component.covariance).ok_or_else(|| {
            Error::numeric("covariance not positive-definite (Cholesky failed)")
        })?;
        let lower = chol.l();
        let log_det = 2.0 * (0..3).map(|i| lower[(i, i)].ln()).sum::<f64>();
        Ok(Self {
            mean: component.mean,
            chol_lower: lower,
            log_norm: -1.5 * LOG_TWO_PI - 0.5 * log_det,
        })
    }

    fn logpdf(&self, x: &Vector3<f64>) -> f64 {
        let centered = x - self.mean;
        let y = self
            .chol_lower
            .solve_lower_triangular(&centered)
            .expect("Cholesky factor has positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log-density of a 3D Gaussian at a point.
pub fn gaussian_logpdf(x: &Vector3<f64>, component: &GaussianComponent) -> Result<f64> {
    Ok(ComponentDensity::new(component)?.logpdf(x))
}

/// One joint pass over the data: responsibilities, per-point mixture
/// log-densities, and the total log-likelihood of the current parameters.
struct MixtureEval {
    responsibilities: ResponsibilityMatrix,
    point_log_density: Vec<f64>,
    log_likelihood: f64,
}

fn evaluate_mixture(points: &[Vector3<f64>], components: &[GaussianComponent]) -> Result<MixtureEval> {
    let k = components.len();
    let densities: Vec<ComponentDensity> = components
        .iter()
        .map(ComponentDensity::new)
        .collect::<Result<_>>()?;
    let log_weights: Vec<f64> = components.iter().map(|c| c.weight.ln()).collect();

    let mut values = vec![0.0; points.len() * k];
    let mut point_log_density = Vec::with_capacity(points.len());
    let mut log_likelihood = 0.0;
    let mut terms = vec![0.0; k];
    for (i, point) in points.iter().enumerate() {
        for j in 0..k {
            terms[j] = log_weights[j] + densities[j].logpdf(point);
        }
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            return Err(Error::numeric(format!(
                "mixture density vanished for point {i}; responsibilities undefined"
            )));
        }
        for j in 0..k {
            values[i * k + j] = (terms[j] - lse).exp();
        }
        point_log_density.push(lse);
        log_likelihood += lse;
    }

    Ok(MixtureEval {
        responsibilities: ResponsibilityMatrix {
            values,
            n_points: points.len(),
            n_components: k,
        },
        point_log_density,
        log_likelihood,
    })
}

/// Posterior probability of each point under each component, in log space.
pub fn e_step(points: &[Vector3<f64>], model: &GmmModel) -> Result<ResponsibilityMatrix> {
    if points.is_empty() {
        return Err(Error::invalid_input("e_step: empty point set"));
    }
    model.validate()?;
    Ok(evaluate_mixture(points, &model.components)?.responsibilities)
}

/// Re-estimates weights, means, and covariances from responsibilities.
///
/// Each covariance gets `covariance_floor * I` added so clusters of fewer
/// than 4 points stay positive-definite.
pub fn m_step(
    points: &[Vector3<f64>],
    responsibilities: &ResponsibilityMatrix,
    covariance_floor: f64,
) -> Result<Vec<GaussianComponent>> {
    let n = points.len();
    if n == 0 || responsibilities.n_points() != n {
        return Err(Error::invalid_input(
            "m_step: responsibility rows must match point count",
        ));
    }
    for i in 0..n {
        let sum: f64 = responsibilities.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid_input(format!(
                "m_step: responsibility row {i} sums to {sum}"
            )));
        }
    }

    let k = responsibilities.n_components();
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let total: f64 = (0..n).map(|i| responsibilities.get(i, j)).sum();
        if total < DEGENERATE_RESPONSIBILITY {
            return Err(Error::DegenerateComponent(j));
        }

        let mut mean = Vector3::zeros();
        for (i, point) in points.iter().enumerate() {
            mean += responsibilities.get(i, j) * point;
        }
        mean /= total;

        let mut scatter = Matrix3::zeros();
        for (i, point) in points.iter().enumerate() {
            let centered = point - mean;
            scatter += responsibilities.get(i, j) * centered * centered.transpose();
        }
        let covariance = scatter / total + Matrix3::identity() * covariance_floor;

        components.push(GaussianComponent {
            weight: total / n as f64,
            mean,
            covariance,
        });
    }
    Ok(components)
}

/// Total mixture log-likelihood of the points under the model.
pub fn log_likelihood(points: &[Vector3<f64>], model: &GmmModel) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid_input("log_likelihood: empty point set"));
    }
    model.validate()?;
    Ok(evaluate_mixture(points, &model.components)?.log_likelihood)
}

/// BIC score; lower is better.
///
/// `PaperLiteral` penalizes by the number of Gaussians directly,
/// `FreeParameterCount` by the usual 10K - 1 free parameters.
pub fn bic(component_count: usize, n: usize, log_likelihood: f64, definition: BicDefinition) -> f64 {
    let k = match definition {
        BicDefinition::PaperLiteral => component_count as f64,
        BicDefinition::FreeParameterCount => (10 * component_count - 1) as f64,
    };
    k * (n as f64).ln() - 2.0 * log_likelihood
}

fn data_mean(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn data_covariance(points: &[Vector3<f64>]) -> Matrix3<f64> {
    let mean = data_mean(points);
    let mut scatter = Matrix3::zeros();
    for point in points {
        let centered = point - mean;
        scatter += centered * centered.transpose();
    }
    scatter / points.len() as f64
}

struct SingleFit {
    components: Vec<GaussianComponent>,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn init_components(
    points: &[Vector3<f64>],
    k: usize,
    init_covariance: &Matrix3<f64>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<GaussianComponent> {
    use rand::Rng;

    let n = points.len();
    let indices: Vec<usize> = if n >= k {
        rand::seq::index::sample(rng, n, k).into_iter().collect()
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    };
    indices
        .into_iter()
        .map(|idx| GaussianComponent {
            weight: 1.0 / k as f64,
            mean: points[idx],
            covariance: *init_covariance,
        })
        .collect()
}

fn run_em_once(
    points: &[Vector3<f64>],
    k: usize,
    config: &EmConfig,
    restart_seed: u64,
) -> Result<SingleFit> {
    let mut rng = rng_from_seed(restart_seed);
    let init_covariance =
        data_covariance(points) + Matrix3::identity() * config.covariance_floor;
    let mut components = init_components(points, k, &init_covariance, &mut rng);

    let mut history = Vec::new();
    let mut last_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let final_ll = loop {
        let eval = evaluate_mixture(points, &components)?;
        history.push(eval.log_likelihood);
        if (eval.log_likelihood - last_ll).abs() < config.tolerance {
            converged = true;
            break eval.log_likelihood;
        }
        last_ll = eval.log_likelihood;
        if iterations >= config.max_iterations {
            break eval.log_likelihood;
        }

        match m_step(points, &eval.responsibilities, config.covariance_floor) {
            Ok(next) => components = next,
            Err(Error::DegenerateComponent(idx)) => {
                // Revive the collapsed component at the worst-explained point
                // and restart the convergence bookkeeping.
                let worst = eval
                    .point_log_density
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).expect("densities are finite"))
                    .map(|(i, _)| i)
                    .expect("non-empty point set");
                components[idx] = GaussianComponent {
                    weight: 1.0 / k as f64,
                    mean: points[worst],
                    covariance: init_covariance,
                };
                let total: f64 = components.iter().map(|c| c.weight).sum();
                for component in &mut components {
                    component.weight /= total;
                }
                last_ll = f64::NEG_INFINITY;
            }
            Err(other) => return Err(other),
        }
        iterations += 1;
    };

    Ok(SingleFit {
        components,
        log_likelihood: final_ll,
        iterations,
        converged,
        history,
    })
}

/// Fits a K-component mixture: `config.restarts` independently seeded EM
/// runs, keeping the restart with the highest final log-likelihood (ties
/// broken toward the lower restart index). Result is bit-identical for
/// identical inputs regardless of thread count.
pub fn fit_em(points: &[Vector3<f64>], k: usize, config: &EmConfig) -> Result<GmmModel> {
    fit_em_with_history(points, k, config).map(|(model, _)| model)
}

/// [`fit_em`] plus the winning restart's log-likelihood trajectory
/// (one entry per E-step evaluation, starting at the initial parameters).
pub fn fit_em_with_history(
    points: &[Vector3<f64>],
    k: usize,
    config: &EmConfig,
) -> Result<(GmmModel, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::invalid_input("fit_em: empty point set"));
    }
    if k < 1 {
        return Err(Error::invalid_input("fit_em: K must be >= 1"));
    }
    config.validate()?;

    let runs: Vec<Result<SingleFit>> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let seed = derive_seed(config.seed, &[seeding::domain::EM_RESTART, restart as u64]);
            run_em_once(points, k, config, seed)
        })
        .collect();

    let mut best: Option<SingleFit> = None;
    let mut first_error = None;
    for run in runs {
        match run {
            Ok(fit) => {
                let better = match &best {
                    Some(current) => fit.log_likelihood > current.log_likelihood,
                    None => true,
                };
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    let best = match best {
        Some(fit) => fit,
        None => return Err(first_error.expect("restarts >= 1")),
    };

    let model = GmmModel {
        bic: bic(k, points.len(), best.log_likelihood, config.bic_definition),
        components: best.components,
        log_likelihood: best.log_likelihood,
        n_train: points.len(),
        iterations: best.iterations,
        converged: best.converged,
        config: config.clone(),
    };
    Ok((model, best.history))
}

/// Fits every K in `[k_min, k_max]` and keeps the BIC minimizer,
/// tie broken toward smaller K. Each K gets its own derived seed.
pub fn select_model(
    points: &[Vector3<f64>],
    k_min: usize,
    k_max: usize,
    config: &EmConfig,
) -> Result<GmmModel> {
    if !(1 <= k_min && k_min <= k_max && k_max <= points.len()) {
        return Err(Error::invalid_input(format!(
            "require 1 <= k_min <= k_max <= n, got k_min={k_min} k_max={k_max} n={}",
            points.len()
        )));
    }

    let fits: Vec<Result<GmmModel>> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let mut k_config = config.clone();
            k_config.seed = derive_seed(config.seed, &[seeding::domain::MODEL_SELECT, k as u64]);
            fit_em(points, k, &k_config)
        })
        .collect();

    let mut best: Option<GmmModel> = None;
    for fit in fits {
        let model = fit?;
        let better = match &best {
            Some(current) => model.bic < current.bic,
            None => true,
        };
        if better {
            best = Some(model);
        }
    }
    Ok(best.expect("k range non-empty"))
}
