//! Exponential-family response distributions: mean, variance, link and
//! log-density for Poisson, Bernoulli and Gaussian responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear predictors are clamped to this magnitude before applying `exp`
/// so Poisson means stay finite in `f64`.
pub const LOG_LINK_ETA_BOUND: f64 = 350.0;

/// Clamp bound for the logit link; keeps mu strictly inside (0, 1) so the
/// Bernoulli variance mu(1-mu) never underflows to zero.
pub const LOGIT_LINK_ETA_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Poisson,
    Bernoulli,
    Gaussian,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Poisson => "poisson",
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Gaussian => "gaussian",
        }
    }

    /// The canonical link for this family.
    pub fn canonical_link(self) -> LinkKind {
        match self {
            FamilyKind::Poisson => LinkKind::Log,
            FamilyKind::Bernoulli => LinkKind::Logit,
            FamilyKind::Gaussian => LinkKind::Identity,
        }
    }
}

/// An exponential-family response distribution with its dispersion.
/// Poisson and Bernoulli carry a fixed dispersion of 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    pub dispersion: f64,
}

impl Family {
    pub fn poisson() -> Self {
        Family { kind: FamilyKind::Poisson, dispersion: 1.0 }
    }

    pub fn bernoulli() -> Self {
        Family { kind: FamilyKind::Bernoulli, dispersion: 1.0 }
    }

    pub fn gaussian(dispersion: f64) -> Result<Self> {
        if dispersion <= 0.0 {
            return Err(Error::NonpositiveDispersion(dispersion));
        }
        Ok(Family { kind: FamilyKind::Gaussian, dispersion })
    }

    /// Validating constructor for arbitrary kind/dispersion pairs.
    pub fn new(kind: FamilyKind, dispersion: f64) -> Result<Self> {
        match kind {
            FamilyKind::Gaussian => Family::gaussian(dispersion),
            _ => {
                if dispersion != 1.0 {
                    return Err(Error::FixedDispersion { family: kind.name(), dispersion });
                }
                Ok(Family { kind, dispersion: 1.0 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Log,
    Logit,
    Identity,
}

/// A monotone link function g with mu = g^{-1}(eta).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
}

impl LinkSpec {
    pub fn log() -> Self {
        LinkSpec { kind: LinkKind::Log }
    }

    pub fn logit() -> Self {
        LinkSpec { kind: LinkKind::Logit }
    }

    pub fn identity() -> Self {
        LinkSpec { kind: LinkKind::Identity }
    }

    /// Clamp bound on |eta| for this link, if any.
    pub fn eta_bound(self) -> Option<f64> {
        match self.kind {
            LinkKind::Log => Some(LOG_LINK_ETA_BOUND),
            LinkKind::Logit => Some(LOGIT_LINK_ETA_BOUND),
            LinkKind::Identity => None,
        }
    }
}

/// Inverse link: mu = g^{-1}(eta). Overflow-prone eta is clamped at the
/// link's documented bound; callers that care can test `|eta|` against
/// [`LinkSpec::eta_bound`] to record a diagnostic.
pub fn mean_from_linear_predictor(_family: Family, link: LinkSpec, eta: f64) -> f64 {
    match link.kind {
        LinkKind::Log => eta.clamp(-LOG_LINK_ETA_BOUND, LOG_LINK_ETA_BOUND).exp(),
        LinkKind::Logit => {
            let e = eta.clamp(-LOGIT_LINK_ETA_BOUND, LOGIT_LINK_ETA_BOUND);
            1.0 / (1.0 + (-e).exp())
        }
        LinkKind::Identity => eta,
    }
}

/// Derivative d mu / d eta of the inverse link at eta.
pub fn mean_derivative(_family: Family, link: LinkSpec, eta: f64) -> f64 {
    match link.kind {
        LinkKind::Log => eta.clamp(-LOG_LINK_ETA_BOUND, LOG_LINK_ETA_BOUND).exp(),
        LinkKind::Logit => {
            let e = eta.clamp(-LOGIT_LINK_ETA_BOUND, LOGIT_LINK_ETA_BOUND);
            let mu = 1.0 / (1.0 + (-e).exp());
            mu * (1.0 - mu)
        }
        LinkKind::Identity => 1.0,
    }
}

/// Conditional variance nu = var(y | u) as a function of the mean.
pub fn conditional_variance(family: Family, mu: f64) -> Result<f64> {
    match family.kind {
        FamilyKind::Poisson => {
            if mu <= 0.0 {
                return Err(Error::MeanOutOfDomain { family: "poisson", mu });
            }
            Ok(mu)
        }
        FamilyKind::Bernoulli => {
            if mu <= 0.0 || mu >= 1.0 {
                return Err(Error::MeanOutOfDomain { family: "bernoulli", mu });
            }
            Ok(mu * (1.0 - mu))
        }
        FamilyKind::Gaussian => Ok(family.dispersion),
    }
}

/// Exact log-density log p(y | mu), including the normalizing c(y, phi)
/// term needed by Metropolis ratios and integrated log-likelihoods.
pub fn log_density(family: Family, y: f64, mu: f64) -> Result<f64> {
    match family.kind {
        FamilyKind::Poisson => {
            if y < 0.0 || (y - y.round()).abs() > 1e-8 {
                return Err(Error::ResponseOutOfSupport { family: "poisson", y });
            }
            if mu <= 0.0 {
                return Err(Error::MeanOutOfDomain { family: "poisson", mu });
            }
            Ok(y * mu.ln() - mu - statrs::function::gamma::ln_gamma(y + 1.0))
        }
        FamilyKind::Bernoulli => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::ResponseOutOfSupport { family: "bernoulli", y });
            }
            if mu <= 0.0 || mu >= 1.0 {
                return Err(Error::MeanOutOfDomain { family: "bernoulli", mu });
            }
            Ok(y * mu.ln() + (1.0 - y) * (1.0 - mu).ln())
        }
        FamilyKind::Gaussian => {
            let phi = family.dispersion;
            let r = y - mu;
            Ok(-0.5 * (2.0 * std::f64::consts::PI * phi).ln() - r * r / (2.0 * phi))
        }
    }
}
