//! Distribution families, their local likelihood-ratio statistics and global
//! plug-in estimators.
//!
//! Every statistic is evaluated from the sufficient pair `(sum_R, |R|)` so the
//! box-sum engine can feed it directly.

use serde::{Deserialize, Serialize};

use crate::error::{AmsError, Result};
use crate::localmeans::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// `N(mu, sigma^2)` with sigma^2 supplied by the caller.
    GaussianKnownVariance,
    /// `N(mu, sigma^2)` with sigma^2 a nuisance parameter estimated from the data.
    GaussianUnknownVariance,
    /// `Poi(lambda)`, the photon-count model.
    Poisson,
    /// `Gamma(shape, rate)` with the rate as parameter of interest and the shape
    /// as nuisance.
    Gamma,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GaussianKnownVariance => "gauss-known",
            ModelKind::GaussianUnknownVariance => "gauss-unknown",
            ModelKind::Poisson => "poisson",
            ModelKind::Gamma => "gamma",
        }
    }

    fn is_gaussian(self) -> bool {
        matches!(
            self,
            ModelKind::GaussianKnownVariance | ModelKind::GaussianUnknownVariance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Known,
    Estimated,
}

/// A distribution family together with its baseline `theta0` and nuisance `xi`.
///
/// Parameter layout per kind:
///
/// | kind     | `theta0`   | `xi`        |
/// |----------|------------|-------------|
/// | Gaussian | `[mu0]`    | `[sigma^2]` |
/// | Poisson  | `[lambda0]`| `[]`        |
/// | Gamma    | `[rate0]`  | `[shape]`   |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFamily {
    kind: ModelKind,
    theta0: Vec<f64>,
    xi: Vec<f64>,
    provenance: Provenance,
}

impl ModelFamily {
    pub fn new(
        kind: ModelKind,
        theta0: Vec<f64>,
        xi: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_domain(kind, &theta0, &xi)?;
        Ok(ModelFamily {
            kind,
            theta0,
            xi,
            provenance,
        })
    }

    pub fn gaussian(mu0: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            ModelKind::GaussianKnownVariance,
            vec![mu0],
            vec![sigma2],
            Provenance::Known,
        )
    }

    pub fn poisson(lambda0: f64) -> Result<Self> {
        Self::new(ModelKind::Poisson, vec![lambda0], vec![], Provenance::Known)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(ModelKind::Gamma, vec![rate], vec![shape], Provenance::Known)
    }

    /// Builds a model from global estimates. `known_xi` supplies the nuisance
    /// parameter for kinds whose estimator does not produce one
    /// (`GaussianKnownVariance`).
    pub fn from_estimate(
        kind: ModelKind,
        report: &EstimatorReport,
        known_xi: Option<Vec<f64>>,
    ) -> Result<Self> {
        let xi = match known_xi {
            Some(xi) => xi,
            None => report.xi_hat.clone(),
        };
        Self::new(kind, report.theta_hat.clone(), xi, Provenance::Estimated)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Mean and variance at the baseline, `(m(theta0, xi), v(theta0, xi))`.
    pub fn baseline_moments(&self) -> (f64, f64) {
        // Domain was validated at construction.
        mean_variance(self.kind, &self.theta0, &self.xi).expect("validated model")
    }

    /// Local log-LRT statistic `T_R` from the region sum and cardinality.
    pub fn local_lrt(&self, sum: f64, count: usize) -> Result<f64> {
        local_lrt(self, sum, count)
    }
}

fn param(kind: ModelKind, v: &[f64], idx: usize, what: &str) -> Result<f64> {
    v.get(idx)
        .copied()
        .ok_or_else(|| AmsError::domain(format!("{} model requires parameter {what}", kind.name())))
}

fn check_domain(kind: ModelKind, theta: &[f64], xi: &[f64]) -> Result<()> {
    if theta.iter().chain(xi).any(|v| !v.is_finite()) {
        return Err(AmsError::domain("model parameters must be finite"));
    }
    match kind {
        ModelKind::GaussianKnownVariance | ModelKind::GaussianUnknownVariance => {
            param(kind, theta, 0, "mu")?;
            let s2 = param(kind, xi, 0, "sigma^2")?;
            if s2 <= 0.0 {
                return Err(AmsError::domain(format!(
                    "variance must be positive, got {s2}"
                )));
            }
        }
        ModelKind::Poisson => {
            let lambda = param(kind, theta, 0, "lambda")?;
            if lambda < 0.0 {
                return Err(AmsError::domain(format!(
                    "Poisson intensity must be nonnegative, got {lambda}"
                )));
            }
        }
        ModelKind::Gamma => {
            let rate = param(kind, theta, 0, "rate")?;
            let shape = param(kind, xi, 0, "shape")?;
            if rate <= 0.0 || shape <= 0.0 {
                return Err(AmsError::domain(format!(
                    "Gamma shape and rate must be positive, got shape={shape} rate={rate}"
                )));
            }
        }
    }
    Ok(())
}

/// Returns `(m(theta, xi), v(theta, xi))` for the family.
pub fn mean_variance(kind: ModelKind, theta: &[f64], xi: &[f64]) -> Result<(f64, f64)> {
    check_domain(kind, theta, xi)?;
    Ok(match kind {
        ModelKind::GaussianKnownVariance | ModelKind::GaussianUnknownVariance => (theta[0], xi[0]),
        ModelKind::Poisson => (theta[0], theta[0]),
        ModelKind::Gamma => {
            let (rate, shape) = (theta[0], xi[0]);
            (shape / rate, shape / (rate * rate))
        }
    })
}

/// `x log(x / y)` with the `0 log 0 = 0` convention.
/// `(1 + x) ln(1 + x) - x`, accurate for small `x`.
fn entropy_gap(x: f64) -> f64 {
    (1.0 + x) * x.ln_1p() - x
}

/// Twice the log likelihood ratio, `T_R^2`.
fn lrt_squared(model: &ModelFamily, sum: f64, count: usize) -> Result<f64> {
    if !sum.is_finite() {
        return Err(AmsError::domain("region sum is not finite"));
    }
    if count == 0 {
        return Err(AmsError::domain("region cardinality must be at least 1"));
    }
    let c = count as f64;
    let t2 = match model.kind {
        ModelKind::GaussianKnownVariance | ModelKind::GaussianUnknownVariance => {
            let t = gaussian_lrt(sum, count, model.theta0[0], model.xi[0].sqrt());
            t * t
        }
        ModelKind::Poisson => {
            let lambda0 = model.theta0[0];
            if sum < 0.0 {
                return Err(AmsError::domain(format!(
                    "negative Poisson count sum {sum}"
                )));
            }
            if lambda0 == 0.0 {
                if sum > 0.0 {
                    return Err(AmsError::domain(
                        "Poisson baseline is zero but the region has positive counts",
                    ));
                }
                return Ok(0.0);
            }
            // 2 * (c*lambda0 - sum + sum*log(mean/lambda0)) with 0 log 0 = 0
            let m0 = c * lambda0;
            if sum == 0.0 {
                2.0 * m0
            } else {
                2.0 * m0 * entropy_gap((sum - m0) / m0)
            }
        }
        ModelKind::Gamma => {
            if sum <= 0.0 {
                return Err(AmsError::domain(format!(
                    "Gamma region sum must be positive, got {sum}"
                )));
            }
            let (rate0, shape) = (model.theta0[0], model.xi[0]);
            // u = mean / m(theta0); T^2 = 2 c shape (u - 1 - ln u)
            let m0 = c * shape / rate0;
            let x = (sum - m0) / m0;
            2.0 * c * shape * (x - x.ln_1p())
        }
    };
    Ok(t2.max(0.0))
}

#[inline]
pub(crate) fn gaussian_lrt(sum: f64, count: usize, mu0: f64, sigma: f64) -> f64 {
    let c = count as f64;
    (sum - c * mu0).abs() / (sigma * c.sqrt())
}

/// `T_R = sqrt(2 log LR)` of the region against the baseline.
pub fn local_lrt(model: &ModelFamily, sum: f64, count: usize) -> Result<f64> {
    if model.kind.is_gaussian() && sum.is_finite() && count > 0 {
        return Ok(gaussian_lrt(
            sum,
            count,
            model.theta0[0],
            model.xi[0].sqrt(),
        ));
    }
    lrt_squared(model, sum, count).map(f64::sqrt)
}

/// Left-hand side of the cubic Taylor bound:
/// `|T_R^2 - |R| ((mean - m) / sqrt(v))^2|`.
pub fn taylor_gap(model: &ModelFamily, sum: f64, count: usize) -> Result<f64> {
    if model.kind.is_gaussian() {
        lrt_squared(model, sum, count)?;
        return Ok(0.0);
    }
    let t2 = lrt_squared(model, sum, count)?;
    let (m, v) = model.baseline_moments();
    let c = count as f64;
    let z = (sum / c - m) / v.sqrt();
    Ok((t2 - c * z * z).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorMethod {
    GlobalMean,
    SampleVariance,
    Mle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub theta_hat: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub sample_size: usize,
    pub method: EstimatorMethod,
}

/// Global estimates of the baseline (and nuisance) from the whole field.
///
/// * Gaussian, known variance: global mean only.
/// * Gaussian, unknown variance: global mean and unbiased sample variance.
/// * Poisson: global mean.
/// * Gamma: profile MLE, Newton on the shape.
pub fn estimate_global(kind: ModelKind, field: &Field) -> Result<EstimatorReport> {
    let data = field.data();
    let n = data.len();
    if n == 0 {
        return Err(AmsError::DegenerateData("field is empty".into()));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    match kind {
        ModelKind::GaussianKnownVariance => Ok(EstimatorReport {
            theta_hat: vec![mean],
            xi_hat: vec![],
            sample_size: n,
            method: EstimatorMethod::GlobalMean,
        }),
        ModelKind::GaussianUnknownVariance => {
            if n < 2 {
                return Err(AmsError::DegenerateData(
                    "sample variance needs at least two entries".into(),
                ));
            }
            let ss: f64 = data.iter().map(|y| (y - mean) * (y - mean)).sum();
            let var = ss / (n - 1) as f64;
            if var <= 0.0 {
                return Err(AmsError::DegenerateData(
                    "sample variance is zero (constant field)".into(),
                ));
            }
            Ok(EstimatorReport {
                theta_hat: vec![mean],
                xi_hat: vec![var],
                sample_size: n,
                method: EstimatorMethod::SampleVariance,
            })
        }
        ModelKind::Poisson => Ok(EstimatorReport {
            theta_hat: vec![mean],
            xi_hat: vec![],
            sample_size: n,
            method: EstimatorMethod::GlobalMean,
        }),
        ModelKind::Gamma => {
            let (shape, rate) = gamma_mle(data)?;
            Ok(EstimatorReport {
                theta_hat: vec![rate],
                xi_hat: vec![shape],
                sample_size: n,
                method: EstimatorMethod::Mle,
            })
        }
    }
}

const GAMMA_TOL: f64 = 1e-10;
const GAMMA_MAX_ITER: usize = 100;

/// Maximum-likelihood `(shape, rate)` of a Gamma sample.
///
/// The rate profiles out as `shape / mean`; the shape solves
/// `ln a - digamma(a) = ln(mean) - mean(ln y)`.
pub fn gamma_mle(data: &[f64]) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(AmsError::DegenerateData(
            "Gamma MLE needs at least two entries".into(),
        ));
    }
    if let Some(bad) = data.iter().find(|&&y| !(y > 0.0)) {
        return Err(AmsError::domain(format!(
            "Gamma data must be strictly positive, found {bad}"
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let mean_log = data.iter().map(|y| y.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s > 0.0) {
        return Err(AmsError::DegenerateData(
            "Gamma sample has no spread (constant field)".into(),
        ));
    }
    // Minka's starting point.
    let mut a = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..GAMMA_MAX_ITER {
        let f = a.ln() - digamma(a) - s;
        let df = 1.0 / a - trigamma(a);
        let mut next = a - f / df;
        while next <= 0.0 {
            next = 0.5 * (a + next.max(0.0));
            if next <= 0.0 {
                next = 0.5 * a;
            }
        }
        let done = ((next - a) / a).abs() < GAMMA_TOL;
        a = next;
        if done {
            return Ok((a, a / mean));
        }
    }
    Err(AmsError::DegenerateData(format!(
        "Gamma shape Newton iteration did not converge in {GAMMA_MAX_ITER} steps"
    )))
}

pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 120.0
                        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))))
}

pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))))
}
