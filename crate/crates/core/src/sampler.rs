//! Metropolis sampling of the random-effects posterior and the Monte Carlo
//! expectations built on the retained draws.
//!
//! Proposals come from the prior of the component being updated (its prior
//! conditional given the subject's other components, which is the prior
//! marginal whenever q = 1 or the covariance is diagonal). With that
//! candidate the prior densities cancel from the acceptance ratio, leaving
//! the conditional likelihood ratio of the single subject whose component
//! changed. All likelihood arithmetic is in log space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ChainConfig, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::family::{log_density, mean_from_linear_predictor, Family, LinkSpec};

/// Smallest eigenvalue allowed in a random-effects covariance.
pub const SIGMA_EIGEN_FLOOR: f64 = 1e-10;

/// Gaussian random effects u_i ~ N(0, covariance), one q-vector per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectsModel {
    pub dimension: usize,
    pub covariance: DMatrix<f64>,
}

impl RandomEffectsModel {
    /// Symmetrizes and floors the eigenvalues of the covariance at 1e-10.
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() {
            return Err(Error::InvalidConfig("random-effects covariance must be square".into()));
        }
        let dimension = covariance.nrows();
        Ok(RandomEffectsModel { dimension, covariance: floor_spd(&covariance) })
    }

    pub fn isotropic(dimension: usize, variance: f64) -> Self {
        RandomEffectsModel {
            dimension,
            covariance: DMatrix::identity(dimension, dimension) * variance.max(SIGMA_EIGEN_FLOOR),
        }
    }

    /// Prior conditional of component j given the remaining components:
    /// coefficients on the other entries and the conditional standard
    /// deviation.
    fn conditional(&self, j: usize) -> (Vec<f64>, f64) {
        let q = self.dimension;
        if q == 1 {
            return (Vec::new(), self.covariance[(0, 0)].sqrt());
        }
        let rest: Vec<usize> = (0..q).filter(|&k| k != j).collect();
        let s_rr = DMatrix::from_fn(q - 1, q - 1, |a, b| self.covariance[(rest[a], rest[b])]);
        let s_jr = DVector::from_fn(q - 1, |a, _| self.covariance[(j, rest[a])]);
        let solved = s_rr
            .cholesky()
            .map(|c| c.solve(&s_jr))
            .unwrap_or_else(|| DVector::zeros(q - 1));
        let var = (self.covariance[(j, j)] - s_jr.dot(&solved)).max(SIGMA_EIGEN_FLOOR);
        (solved.iter().copied().collect(), var.sqrt())
    }
}

/// Symmetrize and raise eigenvalues to the floor.
pub(crate) fn floor_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = v.max(SIGMA_EIGEN_FLOOR);
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// The conditional response model at a fixed coefficient vector: per-subject
/// log-likelihoods as a function of that subject's random effects.
pub struct ConditionalModel<'a> {
    pub family: Family,
    pub link: LinkSpec,
    pub dataset: &'a LongitudinalDataset,
    /// Per subject, per observation: the u-free part of the linear predictor.
    pub fixed_eta: &'a [DVector<f64>],
}

impl ConditionalModel<'_> {
    /// log p(y_i | u_i); returns -inf when a density is out of domain so the
    /// proposal is rejected.
    pub fn subject_loglik(&self, i: usize, u: &[f64]) -> f64 {
        let subject = &self.dataset.subjects()[i];
        let fixed = &self.fixed_eta[i];
        let mut total = 0.0;
        for j in 0..subject.n_obs() {
            let mut eta = fixed[j];
            for (k, &uk) in u.iter().enumerate() {
                eta += subject.random[(j, k)] * uk;
            }
            let mu = mean_from_linear_predictor(self.family, self.link, eta);
            match log_density(self.family, subject.responses[j], mu) {
                Ok(ld) => total += ld,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        total
    }

    /// Total conditional log-likelihood over all subjects for a stacked draw.
    pub fn total_loglik(&self, draw: &DVector<f64>, q: usize) -> f64 {
        (0..self.dataset.n_subjects())
            .map(|i| self.subject_loglik(i, stacked_subject(draw, i, q)))
            .sum()
    }
}

fn stacked_subject(draw: &DVector<f64>, i: usize, q: usize) -> &[f64] {
    &draw.as_slice()[i * q..(i + 1) * q]
}

/// Metropolis acceptance rule on the log of the likelihood ratio. A NaN
/// ratio rejects the proposal (callers flag the event).
pub fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.gen::<f64>().ln() < log_ratio
}

/// Bookkeeping from one component-wise sweep.
#[derive(Debug, Default, Clone, Copy)]
pub struct SweepStats {
    pub proposals: usize,
    pub accepted: usize,
    pub nonfinite: usize,
}

/// One componentwise Metropolis sweep over all n*q components. Updates the
/// state, cached per-subject log-likelihoods, and per-subject acceptance
/// counts in place.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    state: &mut DVector<f64>,
    subject_logliks: &mut [f64],
    model: &RandomEffectsModel,
    cond: &ConditionalModel<'_>,
    accept_counts: &mut [usize],
    rng: &mut R,
) -> SweepStats {
    let q = model.dimension;
    let n = cond.dataset.n_subjects();
    let mut stats = SweepStats::default();
    let conditionals: Vec<(Vec<f64>, f64)> = (0..q).map(|j| model.conditional(j)).collect();
    let mut proposal = vec![0.0; q];
    for i in 0..n {
        for j in 0..q {
            stats.proposals += 1;
            let offset = i * q;
            let (coef, sd) = &conditionals[j];
            let mut mean = 0.0;
            let mut c = 0;
            for k in 0..q {
                if k != j {
                    mean += coef[c] * state[offset + k];
                    c += 1;
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            let candidate = mean + sd * z;
            proposal.clear();
            proposal.extend_from_slice(stacked_subject(state, i, q));
            proposal[j] = candidate;
            // Only subject i's likelihood factor changes, so the full-product
            // ratio collapses to this single factor.
            let new_ll = cond.subject_loglik(i, &proposal);
            let log_ratio = new_ll - subject_logliks[i];
            if log_ratio.is_nan() {
                stats.nonfinite += 1;
                continue;
            }
            if metropolis_accept(log_ratio, rng) {
                state[offset + j] = candidate;
                subject_logliks[i] = new_ll;
                stats.accepted += 1;
                accept_counts[i] += 1;
            }
        }
    }
    stats
}

/// Retained draws from the random-effects posterior plus chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawBank {
    draws: Vec<DVector<f64>>,
    n_subjects: usize,
    q: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Per-subject acceptance rates over the whole run.
    pub acceptance: Vec<f64>,
    pub nonfinite_rejections: usize,
}

impl DrawBank {
    /// A bank holding a single all-zero draw; used when the model carries no
    /// random effects.
    pub fn zero(n_subjects: usize, q: usize) -> Self {
        DrawBank {
            draws: vec![DVector::zeros(n_subjects * q)],
            n_subjects,
            q,
            seed: 0,
            burn_in: 0,
            thinning: 1,
            acceptance: vec![1.0; n_subjects],
            nonfinite_rejections: 0,
        }
    }

    /// Build a bank from externally supplied draws (tests, prior sampling).
    pub fn from_draws(draws: Vec<DVector<f64>>, n_subjects: usize, q: usize, seed: u64) -> Self {
        assert!(!draws.is_empty());
        assert!(draws.iter().all(|d| d.len() == n_subjects * q));
        DrawBank {
            draws,
            n_subjects,
            q,
            seed,
            burn_in: 0,
            thinning: 1,
            acceptance: vec![1.0; n_subjects],
            nonfinite_rejections: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn draws(&self) -> &[DVector<f64>] {
        &self.draws
    }

    /// Random-effect values of subject i in draw k.
    pub fn subject_draw(&self, k: usize, i: usize) -> &[f64] {
        stacked_subject(&self.draws[k], i, self.q)
    }
}

/// Run a Metropolis chain: `burn_in` sweeps, then `draws` retained states
/// separated by `thinning` sweeps. Fully determined by the seed.
pub fn run_chain(
    model: &RandomEffectsModel,
    cond: &ConditionalModel<'_>,
    config: &ChainConfig,
    seed: u64,
) -> Result<DrawBank> {
    config.validate()?;
    let n = cond.dataset.n_subjects();
    let q = model.dimension;
    if q == 0 {
        return Ok(DrawBank::zero(n, 0));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut state = DVector::zeros(n * q);
    let mut logliks: Vec<f64> = (0..n)
        .map(|i| cond.subject_loglik(i, stacked_subject(&state, i, q)))
        .collect();
    let mut accept_counts = vec![0usize; n];
    let mut nonfinite = 0usize;
    let mut sweeps = 0usize;
    let mut draws = Vec::with_capacity(config.draws);
    for _ in 0..config.burn_in {
        let s = metropolis_sweep(&mut state, &mut logliks, model, cond, &mut accept_counts, &mut rng);
        nonfinite += s.nonfinite;
        sweeps += 1;
    }
    for _ in 0..config.draws {
        for _ in 0..config.thinning {
            let s =
                metropolis_sweep(&mut state, &mut logliks, model, cond, &mut accept_counts, &mut rng);
            nonfinite += s.nonfinite;
            sweeps += 1;
        }
        draws.push(state.clone());
    }
    let proposals_per_subject = (sweeps * q).max(1) as f64;
    Ok(DrawBank {
        draws,
        n_subjects: n,
        q,
        seed,
        burn_in: config.burn_in,
        thinning: config.thinning,
        acceptance: accept_counts
            .iter()
            .map(|&c| c as f64 / proposals_per_subject)
            .collect(),
        nonfinite_rejections: nonfinite,
    })
}

/// Arithmetic mean of a per-draw evaluator over the retained draws.
pub fn posterior_expectation<F>(bank: &DrawBank, mut g: F) -> f64
where
    F: FnMut(&DVector<f64>) -> f64,
{
    assert!(!bank.is_empty(), "posterior expectation over an empty bank");
    bank.draws.iter().map(|d| g(d)).sum::<f64>() / bank.len() as f64
}

/// Zero-mean Gaussian ML update of the random-effects covariance from the
/// bank: the average of u_i u_i^T over draws and subjects, eigenvalue-floored.
pub fn update_sigma(bank: &DrawBank) -> DMatrix<f64> {
    let q = bank.q();
    assert!(q > 0 && !bank.is_empty());
    let mut acc = DMatrix::zeros(q, q);
    for k in 0..bank.len() {
        for i in 0..bank.n_subjects() {
            let u = bank.subject_draw(k, i);
            for a in 0..q {
                for b in 0..q {
                    acc[(a, b)] += u[a] * u[b];
                }
            }
        }
    }
    acc /= (bank.len() * bank.n_subjects()) as f64;
    floor_spd(&acc)
}

/// Diagnostic summary of per-subject acceptance rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl AcceptanceSummary {
    pub fn from_bank(bank: &DrawBank) -> Self {
        let n = bank.acceptance.len().max(1) as f64;
        let mean = bank.acceptance.iter().sum::<f64>() / n;
        let min = bank.acceptance.iter().copied().fold(f64::INFINITY, f64::min);
        let max = bank.acceptance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        AcceptanceSummary {
            mean,
            min: if min.is_finite() { min } else { 1.0 },
            max: if max.is_finite() { max } else { 1.0 },
        }
    }
}
