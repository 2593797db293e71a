//! Variance components under `Var[y] = A sigma_g^2 + I sigma_e^2` by restricted
//! maximum likelihood, and selection of the smoothing parameter by profile
//! likelihood.
//!
//! The covariance is written as `sigma^2 (h2 A + (1 - h2) I)`. With the
//! eigendecomposition `A = U S U^t` the intercept and the total variance are
//! profiled out in closed form, leaving a one-dimensional search over `h2`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{sorted_eigen, SmoothingBasis};
use crate::error::{Error, Result};
use crate::grm::RelationshipMatrix;
use crate::scalar::Real;
use crate::tcs::{SmoothOptions, Smoother};

/// Upper bound on `h2` is `1 - H2_EPS`.
pub const H2_EPS: f64 = 1e-6;
/// Smallest admissible eigenvalue of `h2 A + (1 - h2) I`.
pub const MIN_EIGENVALUE: f64 = 1e-12;
const GRID_POINTS: usize = 21;
const BRACKET_TOL: f64 = 1e-5;
const IDENTITY_TOL: f64 = 1e-8;
/// Smallest eigenvalue kept when the search domain is truncated for an
/// indefinite `A`.
const TRUNCATION_MARGIN: f64 = 1e-6;

/// Phenotype values with their sample identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeVector<T: Real> {
    pub values: DVector<T>,
    pub sample_ids: Vec<String>,
    /// Whether covariates were regressed out before fitting.
    pub adjusted: bool,
}

impl<T: Real> PhenotypeVector<T> {
    pub fn new(values: Vec<T>, sample_ids: Vec<String>) -> Result<Self> {
        if values.len() != sample_ids.len() {
            return Err(Error::Dimension(format!(
                "{} phenotype values for {} samples",
                values.len(),
                sample_ids.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("phenotype of {} is not finite", sample_ids[k])));
        }
        Ok(Self {
            values: DVector::from_vec(values),
            sample_ids,
            adjusted: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reorders the phenotype to follow `ids`.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Self> {
        let pos: std::collections::HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(k, s)| (s.as_str(), k))
            .collect();
        let mut values = Vec::with_capacity(ids.len());
        for id in ids {
            match pos.get(id.as_str()) {
                Some(&k) => values.push(self.values[k]),
                None => return Err(Error::Invalid(format!("no phenotype for sample {id}"))),
            }
        }
        Ok(Self {
            values: DVector::from_vec(values),
            sample_ids: ids.to_vec(),
            adjusted: self.adjusted,
        })
    }
}

/// REML estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents<T: Real> {
    pub sigma_g2: T,
    pub sigma_e2: T,
    pub h2: T,
    pub mu_hat: T,
    pub reml_loglik: T,
    pub converged: bool,
}

/// Profiled quantities at one value of `h2`.
#[derive(Debug, Clone, Copy)]
struct Profiled<T> {
    loglik: T,
    mu: T,
    sigma2: T,
}

/// `y` and `1` rotated into the eigenbasis of `A`, ready for repeated
/// likelihood evaluations.
#[derive(Debug, Clone)]
pub struct RemlModel<T: Real> {
    eigenvalues: Vec<T>,
    y_rot: Vec<T>,
    one_rot: Vec<T>,
}

impl<T: Real> RemlModel<T> {
    pub fn new(y: &PhenotypeVector<T>, a: &RelationshipMatrix<T>) -> Result<Self> {
        if y.sample_ids != a.sample_ids() {
            return Err(Error::Dimension(
                "phenotype and relationship matrix have different sample identifiers".into(),
            ));
        }
        if y.len() < 2 {
            return Err(Error::Invalid("REML needs at least two samples".into()));
        }
        let (eigenvalues, u) = sorted_eigen(a.values().clone());
        let y_rot = (u.transpose() * &y.values).iter().copied().collect();
        let one_rot = u.row_sum().iter().copied().collect();
        Ok(Self {
            eigenvalues,
            y_rot,
            one_rot,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues
            .iter()
            .copied()
            .fold(T::max_value().unwrap(), |m, v| m.min(v))
    }

    /// Largest `h2` keeping every eigenvalue of `h2 A + (1 - h2) I` above the
    /// truncation margin.
    pub fn h2_upper(&self) -> T {
        let cap = T::one() - T::lit(H2_EPS);
        let lmin = self.min_eigenvalue();
        if lmin >= T::zero() {
            cap
        } else {
            cap.min((T::one() - T::lit(TRUNCATION_MARGIN)) / (T::one() - lmin))
        }
    }

    fn profile(&self, h2: T) -> Result<Profiled<T>> {
        if !(h2 >= T::zero() && h2 < T::one()) {
            return Err(Error::Invalid(format!("h2 must lie in [0, 1), got {h2}")));
        }
        let n = self.n();
        let (mut sxx, mut sxy, mut syy, mut logdet) = (T::zero(), T::zero(), T::zero(), T::zero());
        for k in 0..n {
            let d = h2 * self.eigenvalues[k] + (T::one() - h2);
            if d < T::lit(MIN_EIGENVALUE) {
                return Err(Error::Singular(format!(
                    "h2 A + (1 - h2) I has eigenvalue {d} at h2 = {h2}; \
                     repair the matrix to be PSD or lower the h2 bound"
                )));
            }
            let (x, y) = (self.one_rot[k], self.y_rot[k]);
            sxx += x * x / d;
            sxy += x * y / d;
            syy += y * y / d;
            logdet += d.ln();
        }
        let mu = sxy / sxx;
        let ypy = syy - sxy * mu;
        if !(ypy > T::zero()) {
            return Err(Error::Singular("phenotype has no residual variance".into()));
        }
        let dof = T::from_usize_lossy(n - 1);
        let sigma2 = ypy / dof;
        let two_pi = T::two_pi();
        let loglik = -(dof * sigma2.ln() + logdet + sxx.ln() + dof * (T::one() + two_pi.ln())) / T::lit(2.0);
        Ok(Profiled { loglik, mu, sigma2 })
    }

    /// Restricted log-likelihood at `h2`, profiled over the intercept and the
    /// total variance.
    pub fn loglik(&self, h2: T) -> Result<T> {
        Ok(self.profile(h2)?.loglik)
    }

    /// Maximizes the likelihood over `h2 in [0, upper]`: a 21-point scan to
    /// locate the peak, then golden-section search within its neighbours.
    pub fn fit(&self) -> Result<VarianceComponents<T>> {
        let upper = self.h2_upper();
        if upper < T::one() - T::lit(H2_EPS) {
            log::warn!("relationship matrix is indefinite; h2 search truncated at {upper}");
        }
        let step = upper / T::from_usize_lossy(GRID_POINTS - 1);
        let grid: Vec<T> = (0..GRID_POINTS).map(|k| T::from_usize_lossy(k) * step).collect();
        let values = grid.iter().map(|&h| self.loglik(h)).collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        let mut lo = grid[best.saturating_sub(1)];
        let mut hi = grid[(best + 1).min(GRID_POINTS - 1)];
        let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = self.loglik(c)?;
        let mut fd = self.loglik(d)?;
        let tol = T::lit(BRACKET_TOL);
        let mut iterations = 0;
        while hi - lo >= tol && iterations < 200 {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = self.loglik(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = self.loglik(d)?;
            }
            iterations += 1;
        }
        let converged = hi - lo < tol;
        let mut h2 = (lo + hi) / T::lit(2.0);
        let mut p = self.profile(h2)?;
        // The peak may sit on a grid point at the boundary of the domain.
        if values[best] > p.loglik {
            h2 = grid[best];
            p = self.profile(h2)?;
        }
        Ok(VarianceComponents {
            sigma_g2: h2 * p.sigma2,
            sigma_e2: (T::one() - h2) * p.sigma2,
            h2,
            mu_hat: p.mu,
            reml_loglik: p.loglik,
            converged,
        })
    }
}

/// Restricted log-likelihood of `y` at `h2` (see [`RemlModel::loglik`]).
pub fn reml_loglik<T: Real>(y: &PhenotypeVector<T>, a: &RelationshipMatrix<T>, h2: T) -> Result<T> {
    RemlModel::new(y, a)?.loglik(h2)
}

fn is_identity<T: Real>(a: &DMatrix<T>) -> bool {
    let tol = T::lit(IDENTITY_TOL);
    a.iter().enumerate().all(|(k, &v)| {
        let (i, j) = (k % a.nrows(), k / a.nrows());
        let target = if i == j { T::one() } else { T::zero() };
        (v - target).abs() <= tol
    })
}

/// Fits `sigma_g^2`, `sigma_e^2` and `h2` by REML.
pub fn fit_variance_components<T: Real>(
    y: &PhenotypeVector<T>,
    a: &RelationshipMatrix<T>,
) -> Result<VarianceComponents<T>> {
    if y.sample_ids != a.sample_ids() {
        return Err(Error::Dimension(
            "phenotype and relationship matrix have different sample identifiers".into(),
        ));
    }
    if is_identity(a.values()) {
        return Err(Error::Unidentifiable(
            "relationship matrix is the identity: sigma_g^2 and sigma_e^2 are not separable".into(),
        ));
    }
    RemlModel::new(y, a)?.fit()
}

/// One grid point of a profile-likelihood scan.
#[derive(Debug, Clone)]
pub struct ProfilePoint<T: Real> {
    pub lambda: T,
    pub fit: std::result::Result<VarianceComponents<T>, String>,
}

impl<T: Real> ProfilePoint<T> {
    /// `-2 log L`, if the fit succeeded.
    pub fn neg2loglik(&self) -> Option<T> {
        self.fit.as_ref().ok().map(|f| -T::lit(2.0) * f.reml_loglik)
    }
}

/// Outcome of [`profile_lambda`].
#[derive(Debug, Clone)]
pub struct ProfileResult<T: Real> {
    pub lambda_star: T,
    pub best: VarianceComponents<T>,
    pub curve: Vec<ProfilePoint<T>>,
}

/// Smooths `a_hat` at each threshold in `grid`, fits REML, and picks the
/// threshold with the largest restricted likelihood (smallest on ties).
/// Points whose fit fails are kept in the curve but skipped.
pub fn profile_lambda<T: Real, B: SmoothingBasis<T> + Sync>(
    y: &PhenotypeVector<T>,
    a_hat: &RelationshipMatrix<T>,
    basis: &B,
    grid: &[T],
    opts: SmoothOptions,
) -> Result<ProfileResult<T>> {
    if grid.is_empty() {
        return Err(Error::Invalid("lambda grid is empty".into()));
    }
    let smoother = Smoother::new(a_hat, basis)?;
    let curve: Vec<ProfilePoint<T>> = grid
        .par_iter()
        .map(|&lambda| {
            let fit = smoother
                .smooth(lambda, opts)
                .and_then(|s| fit_variance_components(y, &s.values))
                .map_err(|e| e.to_string());
            ProfilePoint { lambda, fit }
        })
        .collect();
    let mut best: Option<(T, VarianceComponents<T>)> = None;
    for p in &curve {
        match &p.fit {
            Ok(f) => {
                if best.is_none_or(|(_, b)| f.reml_loglik > b.reml_loglik) {
                    best = Some((p.lambda, *f));
                }
            }
            Err(e) => log::warn!("REML failed at lambda = {}: {e}", p.lambda),
        }
    }
    let (lambda_star, best) =
        best.ok_or_else(|| Error::Singular("REML failed at every point of the lambda grid".into()))?;
    Ok(ProfileResult {
        lambda_star,
        best,
        curve,
    })
}
