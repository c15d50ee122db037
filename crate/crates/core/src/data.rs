//! Long-format longitudinal data and the model specification consumed by
//! the fitting routines.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{KnotPlacement, SplineConfig};
use crate::correlation::CorrelationKind;
use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind, LinkSpec};

/// All observations of one subject, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub id: String,
    pub times: Vec<f64>,
    pub responses: Vec<f64>,
    /// n_i x p fixed-effect covariates X.
    pub fixed: DMatrix<f64>,
    /// n_i x q random-effect covariates Z.
    pub random: DMatrix<f64>,
}

impl SubjectData {
    pub fn n_obs(&self) -> usize {
        self.times.len()
    }
}

/// A validated long-format dataset: per-visit response, covariates and
/// observation time, grouped by subject and sorted by time within subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    subjects: Vec<SubjectData>,
    fixed_names: Vec<String>,
    random_names: Vec<String>,
}

impl LongitudinalDataset {
    pub fn new(
        mut subjects: Vec<SubjectData>,
        fixed_names: Vec<String>,
        random_names: Vec<String>,
    ) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::InvalidData("dataset has no subjects".into()));
        }
        let p = fixed_names.len();
        let q = random_names.len();
        for subject in &mut subjects {
            let m = subject.times.len();
            if m == 0 {
                return Err(Error::InvalidData(format!(
                    "subject {} has no observations",
                    subject.id
                )));
            }
            if subject.responses.len() != m
                || subject.fixed.nrows() != m
                || subject.random.nrows() != m
                || subject.fixed.ncols() != p
                || subject.random.ncols() != q
            {
                return Err(Error::InvalidData(format!(
                    "subject {} has inconsistent row counts or covariate dimensions",
                    subject.id
                )));
            }
            let all_finite = subject.times.iter().all(|v| v.is_finite())
                && subject.responses.iter().all(|v| v.is_finite())
                && subject.fixed.iter().all(|v| v.is_finite())
                && subject.random.iter().all(|v| v.is_finite());
            if !all_finite {
                return Err(Error::InvalidData(format!(
                    "subject {} contains non-finite values",
                    subject.id
                )));
            }
            // Sort rows by time, then require strict increase.
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| subject.times[a].partial_cmp(&subject.times[b]).unwrap());
            if order.windows(2).any(|w| w[1] != w[0] + 1) {
                let times: Vec<f64> = order.iter().map(|&i| subject.times[i]).collect();
                let responses: Vec<f64> = order.iter().map(|&i| subject.responses[i]).collect();
                let fixed = DMatrix::from_fn(m, p, |r, c| subject.fixed[(order[r], c)]);
                let random = DMatrix::from_fn(m, q, |r, c| subject.random[(order[r], c)]);
                subject.times = times;
                subject.responses = responses;
                subject.fixed = fixed;
                subject.random = random;
            }
            if subject.times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidData(format!(
                    "subject {} has duplicate observation times",
                    subject.id
                )));
            }
        }
        Ok(LongitudinalDataset { subjects, fixed_names, random_names })
    }

    pub fn subjects(&self) -> &[SubjectData] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_obs(&self) -> usize {
        self.subjects.iter().map(|s| s.n_obs()).sum()
    }

    /// Number of fixed-effect covariates p.
    pub fn n_fixed(&self) -> usize {
        self.fixed_names.len()
    }

    /// Number of random-effect covariates q.
    pub fn n_random(&self) -> usize {
        self.random_names.len()
    }

    pub fn fixed_names(&self) -> &[String] {
        &self.fixed_names
    }

    pub fn random_names(&self) -> &[String] {
        &self.random_names
    }

    pub fn max_cluster_size(&self) -> usize {
        self.subjects.iter().map(|s| s.n_obs()).max().unwrap_or(0)
    }

    /// Observed time range (min, max) across all subjects.
    pub fn time_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.subjects {
            for &t in &s.times {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        (lo, hi)
    }

    pub fn all_times(&self) -> Vec<f64> {
        self.subjects.iter().flat_map(|s| s.times.iter().copied()).collect()
    }

    /// Check every response lies in the support of the family.
    pub fn validate_support(&self, family: Family) -> Result<()> {
        for s in &self.subjects {
            for &y in &s.responses {
                match family.kind {
                    FamilyKind::Poisson => {
                        if y < 0.0 || (y - y.round()).abs() > 1e-8 {
                            return Err(Error::ResponseOutOfSupport { family: "poisson", y });
                        }
                    }
                    FamilyKind::Bernoulli => {
                        if y != 0.0 && y != 1.0 {
                            return Err(Error::ResponseOutOfSupport { family: "bernoulli", y });
                        }
                    }
                    FamilyKind::Gaussian => {}
                }
            }
        }
        Ok(())
    }
}

/// Unresolved spline settings; knot count and time domain may be left to
/// the data-driven defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSettings {
    pub degree: usize,
    /// Interior knot count; `None` applies round(n^{1/(2r+1)}).
    pub interior_knot_count: Option<usize>,
    pub knot_placement: KnotPlacement,
    pub smoothness_order: usize,
    /// Closed interval; `None` uses the observed time range.
    pub time_domain: Option<(f64, f64)>,
}

impl Default for SplineSettings {
    fn default() -> Self {
        SplineSettings {
            degree: 3,
            interior_knot_count: None,
            knot_placement: KnotPlacement::EquallySpaced,
            smoothness_order: 2,
            time_domain: None,
        }
    }
}

impl SplineSettings {
    /// Resolve against a dataset into a concrete [`SplineConfig`].
    pub fn resolve(&self, dataset: &LongitudinalDataset) -> Result<SplineConfig> {
        if self.smoothness_order == 0 {
            return Err(Error::InvalidConfig("smoothness order must be >= 1".into()));
        }
        let knots = self
            .interior_knot_count
            .unwrap_or_else(|| {
                crate::basis::default_knot_count(dataset.n_subjects(), self.smoothness_order)
            });
        let time_domain = self.time_domain.unwrap_or_else(|| dataset.time_range());
        if time_domain.0 > time_domain.1 {
            return Err(Error::InvalidConfig("time domain is empty".into()));
        }
        Ok(SplineConfig {
            degree: self.degree,
            interior_knot_count: knots,
            knot_placement: self.knot_placement,
            smoothness_order: self.smoothness_order,
            time_domain,
        })
    }
}

/// How the SCAD tuning parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl LambdaChoice {
    /// Logarithmically spaced grid, ascending.
    pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max > min && count >= 1) {
            return Err(Error::InvalidConfig("lambda grid needs 0 < min < max".into()));
        }
        if count == 1 {
            return Ok(LambdaChoice::Grid(vec![min]));
        }
        let (lo, hi) = (min.ln(), max.ln());
        let grid = (0..count)
            .map(|i| (lo + (hi - lo) * i as f64 / (count as f64 - 1.0)).exp())
            .collect();
        Ok(LambdaChoice::Grid(grid))
    }

    /// Default 30-point grid on [0.01, 2.0].
    pub fn default_grid() -> Self {
        Self::log_grid(0.01, 2.0, 30).unwrap()
    }
}

/// Shape of the SCAD penalty; the tuning parameter itself lives in
/// [`LambdaChoice`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySettings {
    pub a: f64,
    pub epsilon: f64,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        PenaltySettings { a: 3.7, epsilon: 1e-6 }
    }
}

/// Metropolis chain configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Retained draws N.
    pub draws: usize,
    /// Burn-in sweeps before retention starts.
    pub burn_in: usize,
    /// Sweeps between retained draws.
    pub thinning: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { draws: 500, burn_in: 200, thinning: 1 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidConfig("sampler needs at least one retained draw".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidConfig("thinning must be >= 1".into()));
        }
        Ok(())
    }
}

/// Newton / outer-loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_outer_iterations: usize,
    pub max_newton_steps_per_outer: usize,
    /// Convergence tolerance on the sup-norm of the theta update.
    pub convergence_tolerance: f64,
    /// Hard-thresholding bound applied to beta after convergence;
    /// effective bound is max(zero_threshold, epsilon * lambda).
    pub zero_threshold: f64,
    pub step_halving_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iterations: 50,
            max_newton_steps_per_outer: 10,
            convergence_tolerance: 1e-4,
            zero_threshold: 1e-3,
            step_halving_limit: 5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 || self.max_newton_steps_per_outer == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        if self.convergence_tolerance <= 0.0 || self.zero_threshold <= 0.0 {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Complete model specification for a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub link: LinkSpec,
    pub correlation: CorrelationKind,
    pub spline: SplineSettings,
    pub penalty: PenaltySettings,
    pub lambda: LambdaChoice,
    pub sampler: ChainConfig,
    pub solver: SolverConfig,
    /// Confidence level for Wald intervals.
    pub level: f64,
    /// Number of grid points for the fitted time-effect curve.
    pub f_grid_points: usize,
}

impl ModelSpec {
    /// Poisson log-link spec with defaults everywhere else.
    pub fn poisson() -> Self {
        ModelSpec {
            family: Family::poisson(),
            link: LinkSpec::log(),
            correlation: CorrelationKind::Independence,
            spline: SplineSettings::default(),
            penalty: PenaltySettings::default(),
            lambda: LambdaChoice::Fixed(0.0),
            sampler: ChainConfig::default(),
            solver: SolverConfig::default(),
            level: 0.95,
            f_grid_points: 100,
        }
    }

    pub fn gaussian() -> Self {
        ModelSpec {
            family: Family::gaussian(1.0).unwrap(),
            link: LinkSpec::identity(),
            ..ModelSpec::poisson()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.solver.validate()?;
        if self.penalty.a <= 2.0 {
            return Err(Error::InvalidConfig("SCAD requires a > 2".into()));
        }
        if self.penalty.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("penalty epsilon must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig("confidence level must be in (0, 1)".into()));
        }
        match &self.lambda {
            LambdaChoice::Fixed(l) if *l < 0.0 => {
                return Err(Error::InvalidConfig("lambda must be nonnegative".into()));
            }
            LambdaChoice::Grid(grid) => {
                if grid.is_empty() {
                    return Err(Error::InvalidConfig("lambda grid is empty".into()));
                }
                if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] <= 0.0 {
                    return Err(Error::InvalidConfig(
                        "lambda grid must be strictly increasing and positive".into(),
                    ));
                }
            }
            _ => {}
        }
        let canonical = self.family.kind.canonical_link();
        let compatible = match self.family.kind {
            FamilyKind::Bernoulli => self.link.kind == canonical,
            _ => true,
        };
        if !compatible {
            return Err(Error::InvalidConfig(format!(
                "link {:?} is not supported with the {} family",
                self.link.kind,
                self.family.kind.name()
            )));
        }
        Ok(())
    }
}

/// Counter-based derivation of per-task seeds from a master seed
/// (splitmix64 over master + index * golden ratio).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
