//! Scale calibrations `(omega_tilde, omega)`.
//!
//! The calibrated local statistic of a region of cardinality `r` is
//! `omega_tilde(r, n) * (T_R - omega(r, n))`. All logarithms are natural.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{AmsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CalibrationKind {
    /// `omega_tilde = 1`, `omega = sqrt(2 nu log(n^d / r) + 1)`.
    Dw { nu: f64 },
    /// `omega_tilde = sqrt(2 log(n^d/r))` with a `(4d - 1)` second-order term in `omega`.
    Sac,
    /// `omega = omega_tilde = s + c_d log(s) / s`, `s = sqrt(2 log(c n^d / r))`.
    Pwm { c: f64, c_d: f64 },
    /// Uncalibrated: `omega_tilde = 1`, `omega = 0`.
    Unit,
}

/// Growth exponents `(alpha, alpha_tilde, beta, beta_tilde)` of a calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthExponents {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub beta: f64,
    pub beta_tilde: f64,
}

impl GrowthExponents {
    /// Minimal-scale exponent
    /// `12 + 6 alpha_tilde + 2 max(1/2, alpha, alpha_tilde) + 2 max(beta, beta_tilde, 0)`.
    pub fn gamma(&self) -> f64 {
        12.0 + 6.0 * self.alpha_tilde
            + 2.0 * 0.5f64.max(self.alpha).max(self.alpha_tilde)
            + 2.0 * self.beta.max(self.beta_tilde).max(0.0)
    }
}

/// Anything that supplies scale penalties. Implemented by [`Calibration`];
/// the trait exists so validation can be run on arbitrary penalty functions.
pub trait ScaleCalibration {
    fn dim(&self) -> usize;
    fn omega(&self, r: f64, n: usize) -> Result<f64>;
    fn omega_tilde(&self, r: f64, n: usize) -> Result<f64>;
    fn exponents(&self) -> GrowthExponents;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    kind: CalibrationKind,
    d: usize,
}

impl Calibration {
    pub fn new(kind: CalibrationKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(AmsError::config("dimension must be at least 1"));
        }
        match kind {
            CalibrationKind::Dw { nu } if !(nu >= 1.0) || !nu.is_finite() => {
                return Err(AmsError::config(format!("DW requires nu >= 1, got {nu}")));
            }
            CalibrationKind::Pwm { c, c_d } if !(c > 1.0) || !c.is_finite() || !c_d.is_finite() => {
                return Err(AmsError::config(format!(
                    "PWM requires C > 1 and finite C_d, got C={c} C_d={c_d}"
                )));
            }
            _ => {}
        }
        Ok(Calibration { kind, d })
    }

    pub fn dw(nu: f64, d: usize) -> Result<Self> {
        Self::new(CalibrationKind::Dw { nu }, d)
    }

    pub fn sac(d: usize) -> Result<Self> {
        Self::new(CalibrationKind::Sac, d)
    }

    pub fn pwm(c: f64, c_d: f64, d: usize) -> Result<Self> {
        Self::new(CalibrationKind::Pwm { c, c_d }, d)
    }

    pub fn unit(d: usize) -> Result<Self> {
        Self::new(CalibrationKind::Unit, d)
    }

    pub fn kind(&self) -> CalibrationKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Canonical textual description used for cache digests. Floats are
    /// written by bit pattern so equal descriptions mean equal parameters.
    pub fn canonical_description(&self) -> String {
        match self.kind {
            CalibrationKind::Dw { nu } => format!("dw;nu={:016x};d={}", nu.to_bits(), self.d),
            CalibrationKind::Sac => format!("sac;d={}", self.d),
            CalibrationKind::Pwm { c, c_d } => format!(
                "pwm;c={:016x};cd={:016x};d={}",
                c.to_bits(),
                c_d.to_bits(),
                self.d
            ),
            CalibrationKind::Unit => format!("unit;d={}", self.d),
        }
    }

    /// `log(n^d / r)`, validated against `1 <= r <= n^d`.
    fn log_ratio(&self, r: f64, n: usize) -> Result<f64> {
        let total = (n as f64).powi(self.d as i32);
        if !(r >= 1.0 && r <= total) {
            return Err(AmsError::domain(format!(
                "scale {r} outside [1, n^d = {total}]"
            )));
        }
        Ok((total / r).ln())
    }

    fn pwm_value(&self, c: f64, c_d: f64, r: f64, n: usize) -> Result<f64> {
        let total = (n as f64).powi(self.d as i32);
        if !(r >= 1.0 && r < c * total) {
            return Err(AmsError::domain(format!(
                "scale {r} outside [1, C n^d = {})",
                c * total
            )));
        }
        let s = (2.0 * (c * total / r).ln()).sqrt();
        Ok(s + c_d * s.ln() / s)
    }
}

impl ScaleCalibration for Calibration {
    fn dim(&self) -> usize {
        self.d
    }

    fn omega(&self, r: f64, n: usize) -> Result<f64> {
        match self.kind {
            CalibrationKind::Dw { nu } => {
                let lr = self.log_ratio(r, n)?;
                Ok((2.0 * nu * lr + 1.0).sqrt())
            }
            CalibrationKind::Sac => {
                let lr = self.log_ratio(r, n)?;
                let s = (2.0 * lr).sqrt();
                if !(s > 0.0) {
                    return Err(AmsError::domain(format!(
                        "SAC penalty undefined at r = n^d = {r}"
                    )));
                }
                let k = (4 * self.d) as f64 - 1.0;
                Ok(s + (k * s.ln() - (2.0 * PI).sqrt().ln()) / s)
            }
            CalibrationKind::Pwm { c, c_d } => self.pwm_value(c, c_d, r, n),
            CalibrationKind::Unit => {
                self.log_ratio(r, n)?;
                Ok(0.0)
            }
        }
    }

    fn omega_tilde(&self, r: f64, n: usize) -> Result<f64> {
        match self.kind {
            CalibrationKind::Dw { .. } | CalibrationKind::Unit => {
                self.log_ratio(r, n)?;
                Ok(1.0)
            }
            CalibrationKind::Sac => Ok((2.0 * self.log_ratio(r, n)?).sqrt()),
            CalibrationKind::Pwm { c, c_d } => self.pwm_value(c, c_d, r, n),
        }
    }

    fn exponents(&self) -> GrowthExponents {
        match self.kind {
            CalibrationKind::Dw { .. } => GrowthExponents {
                alpha: 0.5,
                alpha_tilde: 0.0,
                beta: -0.5,
                beta_tilde: 0.0,
            },
            CalibrationKind::Sac | CalibrationKind::Pwm { .. } => GrowthExponents {
                alpha: 0.5,
                alpha_tilde: 0.5,
                beta: -0.5,
                beta_tilde: -0.5,
            },
            CalibrationKind::Unit => GrowthExponents {
                alpha: 0.0,
                alpha_tilde: 0.0,
                beta: 0.0,
                beta_tilde: 0.0,
            },
        }
    }
}

/// Free-function form of [`ScaleCalibration::omega`].
pub fn omega(cal: &Calibration, r: f64, n: usize) -> Result<f64> {
    cal.omega(r, n)
}

/// Free-function form of [`ScaleCalibration::omega_tilde`].
pub fn omega_tilde(cal: &Calibration, r: f64, n: usize) -> Result<f64> {
    cal.omega_tilde(r, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthValidation {
    pub n: usize,
    pub samples: usize,
    pub exponents: GrowthExponents,
    pub monotone: bool,
    pub positive: bool,
    /// Fitted `C_omega` for `omega <= C log^alpha(n^d / r)` and the analogous
    /// bounds on `omega_tilde` and on both derivatives.
    pub c_omega: f64,
    pub c_omega_tilde: f64,
    pub c_derivative: f64,
    pub c_derivative_tilde: f64,
    /// The fitted constants do not grow when the scale range is extended to
    /// `n^2`, i.e. they bound uniformly in `n`.
    pub uniform: bool,
    pub passed: bool,
}

const GROWTH_SAMPLES: usize = 2000;
/// Relative growth of a fitted constant tolerated when the range is doubled.
const UNIFORM_SLACK: f64 = 0.05;

struct Fitted {
    monotone: bool,
    positive: bool,
    c: [f64; 4],
}

fn fit_constants<C: ScaleCalibration + ?Sized>(cal: &C, n: usize) -> Result<Fitted> {
    let d = cal.dim() as i32;
    let total = (n as f64).powi(d);
    let top = total / 2.0;
    let e = cal.exponents();
    let mut prev: Option<(f64, f64)> = None;
    let mut monotone = true;
    let mut positive = true;
    let mut c = [0.0f64; 4];
    let h = 1e-5;
    for i in 0..GROWTH_SAMPLES {
        let frac = i as f64 / (GROWTH_SAMPLES - 1) as f64;
        let r = top.powf(frac);
        let w = cal.omega(r, n)?;
        let wt = cal.omega_tilde(r, n)?;
        if !(w >= 0.0) || !(wt > 0.0) {
            positive = false;
        }
        if let Some((pw, pwt)) = prev {
            let tol = 1e-12 * (1.0 + pw.abs().max(pwt.abs()));
            if w > pw + tol || wt > pwt + tol {
                monotone = false;
            }
        }
        prev = Some((w, wt));

        // r * omega'(r) = d omega / d log r
        let (lo, hi) = ((r.ln() - h).exp().max(1.0), (r.ln() + h).exp().min(total));
        let span = hi.ln() - lo.ln();
        let dw = (cal.omega(hi, n)? - cal.omega(lo, n)?) / span;
        let dwt = (cal.omega_tilde(hi, n)? - cal.omega_tilde(lo, n)?) / span;

        let lr = (total / r).ln();
        c[0] = c[0].max(w.abs() / lr.powf(e.alpha));
        c[1] = c[1].max(wt.abs() / lr.powf(e.alpha_tilde));
        c[2] = c[2].max(dw.abs() / lr.powf(e.beta));
        c[3] = c[3].max(dwt.abs() / lr.powf(e.beta_tilde));
    }
    Ok(Fitted {
        monotone,
        positive,
        c,
    })
}

/// Samples `r` log-uniformly over `[1, n^d / 2]`, checks that both penalties
/// are nonincreasing and positive, and fits the constants of the growth
/// bounds for the recorded exponents. Uniformity in `n` is checked by
/// refitting on the range of `n^2`.
pub fn validate_growth<C: ScaleCalibration + ?Sized>(
    cal: &C,
    n: usize,
) -> Result<GrowthValidation> {
    if n < 2 {
        return Err(AmsError::config("growth validation needs n >= 2"));
    }
    let base = fit_constants(cal, n)?;
    let wide = fit_constants(cal, n * n)?;
    let uniform = base
        .c
        .iter()
        .zip(&wide.c)
        .all(|(&a, &b)| b <= a * (1.0 + UNIFORM_SLACK) + 1e-12);
    let finite = base.c.iter().all(|c| c.is_finite());
    let monotone = base.monotone && wide.monotone;
    let positive = base.positive && wide.positive;
    Ok(GrowthValidation {
        n,
        samples: GROWTH_SAMPLES,
        exponents: cal.exponents(),
        monotone,
        positive,
        c_omega: base.c[0],
        c_omega_tilde: base.c[1],
        c_derivative: base.c[2],
        c_derivative_tilde: base.c[3],
        uniform,
        passed: monotone && positive && uniform && finite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleGuard {
    pub gamma: f64,
    /// `log(n)^gamma`.
    pub required: f64,
    pub r_n: usize,
    pub warn: bool,
}

/// Advisory check `r_n >= log^gamma(n)`. A scale `r_n = n^d` never warns.
pub fn min_scale_guard<C: ScaleCalibration + ?Sized>(cal: &C, n: usize, r_n: usize) -> ScaleGuard {
    let gamma = cal.exponents().gamma();
    let required = (n as f64).ln().powf(gamma);
    let full = (n as f64).powi(cal.dim() as i32);
    let warn = (r_n as f64) < required && (r_n as f64) < full;
    ScaleGuard {
        gamma,
        required,
        r_n,
        warn,
    }
}
