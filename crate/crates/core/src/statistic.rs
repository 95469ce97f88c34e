//! Calibrated multiscale statistics.
//!
//! `T_n = max_R omega_tilde(|R|) * (T_R - omega(|R|))` over the data field and
//! its Gaussian surrogate `M_n`, where `T_R` is replaced by
//! `|R|^{-1/2} |sum_R X|` for a standard normal field `X`.

use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, ScaleCalibration};
use crate::error::{AmsError, Result};
use crate::localmeans::{BoxSumEngine, Field, Workspace};
use crate::models::{self, ModelFamily, ModelKind};
use crate::regions::{unravel, Region, RegionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    TwoSided,
    /// Only elevated regions (`mean_R > baseline mean`) count.
    OneSidedUpper,
}

impl Sidedness {
    pub fn name(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two-sided",
            Sidedness::OneSidedUpper => "one-sided-upper",
        }
    }
}

/// Penalties of one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Penalty {
    pub omega_tilde: f64,
    pub omega: f64,
}

impl Penalty {
    #[inline]
    pub fn calibrate(&self, t: f64) -> f64 {
        self.omega_tilde * (t - self.omega)
    }

    /// Local critical value `eta / omega_tilde + omega`.
    pub fn threshold(&self, eta: f64) -> f64 {
        eta / self.omega_tilde + self.omega
    }
}

/// Largest calibrated value attained at one scale and where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMax {
    pub value: f64,
    /// Row-major offset index; `None` when no region qualified (one-sided
    /// surrogate with no positive mean).
    pub offset_index: Option<usize>,
}

impl ScaleMax {
    const EMPTY: ScaleMax = ScaleMax {
        value: f64::NEG_INFINITY,
        offset_index: None,
    };

    #[inline]
    fn offer(&mut self, value: f64, idx: usize) {
        if value > self.value || self.offset_index.is_none() {
            self.value = value;
            self.offset_index = Some(idx);
        }
    }
}

/// Local statistic evaluator specialised per family.
#[derive(Debug, Clone, Copy)]
enum LocalStat {
    Gaussian { mu0: f64, sigma: f64 },
    Other,
}

/// Per-scale local and calibrated statistics of one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleStatistics {
    pub extent: Vec<usize>,
    pub dims: Vec<usize>,
    pub cardinality: usize,
    pub penalty: Penalty,
    /// Gated local statistics `T_R` (or `T~_R`), row-major over offsets.
    pub local: Vec<f64>,
    pub calibrated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub t_n: f64,
    pub argmax_region: Region,
    pub per_scale: Vec<ScaleStatistics>,
    pub sidedness: Sidedness,
    pub model: ModelFamily,
    pub calibration: Calibration,
    pub n: usize,
    pub d: usize,
}

/// A region whose calibrated value reaches the global threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub region: Region,
    pub statistic: f64,
    pub calibrated: f64,
    pub threshold: f64,
}

/// Precomputed penalties and FFT plans for scanning one region system.
#[derive(Debug)]
pub struct Scanner {
    system: RegionSystem,
    calibration: Calibration,
    sidedness: Sidedness,
    penalties: Vec<Penalty>,
    engine: BoxSumEngine,
}

impl Scanner {
    pub fn new(
        system: RegionSystem,
        calibration: Calibration,
        sidedness: Sidedness,
    ) -> Result<Self> {
        if system.scales().is_empty() {
            return Err(AmsError::EmptySystem("region system has no scales".into()));
        }
        if calibration.d() != system.d() {
            return Err(AmsError::config(format!(
                "calibration is for d={} but the region system has d={}",
                calibration.d(),
                system.d()
            )));
        }
        let n = system.n();
        let penalties = system
            .scales()
            .iter()
            .map(|h| {
                let r = h.iter().product::<usize>() as f64;
                Ok(Penalty {
                    omega_tilde: calibration.omega_tilde(r, n)?,
                    omega: calibration.omega(r, n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let engine = BoxSumEngine::new(&system);
        Ok(Scanner {
            system,
            calibration,
            sidedness,
            penalties,
            engine,
        })
    }

    pub fn system(&self) -> &RegionSystem {
        &self.system
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    pub fn penalties(&self) -> &[Penalty] {
        &self.penalties
    }

    pub fn workspace(&self) -> Workspace {
        self.engine.workspace()
    }

    fn check_field(&self, field: &Field) -> Result<()> {
        if field.n() != self.system.n() || field.d() != self.system.d() {
            return Err(AmsError::Size(format!(
                "field is {}^{} but the region system expects {}^{}",
                field.n(),
                field.d(),
                self.system.n(),
                self.system.d()
            )));
        }
        Ok(())
    }

    /// Per-scale maxima of the calibrated data statistic for several models
    /// evaluated on the same region sums. `out[m][s]` belongs to model `m`,
    /// scale `s`.
    pub fn scale_maxima(
        &self,
        field: &Field,
        models: &[&ModelFamily],
        ws: &mut Workspace,
    ) -> Result<Vec<Vec<ScaleMax>>> {
        self.check_field(field)?;
        let prepared: Vec<(LocalStat, f64)> = models
            .iter()
            .map(|m| {
                let stat = match m.kind() {
                    ModelKind::GaussianKnownVariance | ModelKind::GaussianUnknownVariance => {
                        LocalStat::Gaussian {
                            mu0: m.theta0()[0],
                            sigma: m.xi()[0].sqrt(),
                        }
                    }
                    _ => LocalStat::Other,
                };
                (stat, m.baseline_moments().0)
            })
            .collect();
        let mut out = vec![vec![ScaleMax::EMPTY; self.penalties.len()]; models.len()];
        let one_sided = self.sidedness == Sidedness::OneSidedUpper;
        self.engine
            .for_each_scale(field, &self.system, ws, |s, extent, sums| {
                let count: usize = extent.iter().product();
                let c = count as f64;
                let pen = self.penalties[s];
                for (mi, (stat, mean0)) in prepared.iter().enumerate() {
                    let best = &mut out[mi][s];
                    for (i, &sum) in sums.iter().enumerate() {
                        let t = if one_sided && !(sum / c > *mean0) {
                            0.0
                        } else {
                            match *stat {
                                LocalStat::Gaussian { mu0, sigma } => {
                                    models::gaussian_lrt(sum, count, mu0, sigma)
                                }
                                LocalStat::Other => models[mi].local_lrt(sum, count)?,
                            }
                        };
                        best.offer(pen.calibrate(t), i);
                    }
                }
                Ok(())
            })?;
        Ok(out)
    }

    /// Per-scale maxima of the surrogate statistic on a standard normal field.
    pub fn surrogate_maxima(&self, noise: &Field, ws: &mut Workspace) -> Result<Vec<ScaleMax>> {
        self.check_field(noise)?;
        let mut out = vec![ScaleMax::EMPTY; self.penalties.len()];
        let one_sided = self.sidedness == Sidedness::OneSidedUpper;
        self.engine
            .for_each_scale(noise, &self.system, ws, |s, extent, sums| {
                let c = extent.iter().product::<usize>() as f64;
                let root = c.sqrt();
                let pen = self.penalties[s];
                let best = &mut out[s];
                for (i, &sum) in sums.iter().enumerate() {
                    if one_sided {
                        if sum > 0.0 {
                            best.offer(pen.calibrate(sum / root), i);
                        }
                    } else {
                        best.offer(pen.calibrate(sum.abs() / root), i);
                    }
                }
                Ok(())
            })?;
        Ok(out)
    }

    /// `M_n` of a standard normal field; `-inf` when the one-sided variant
    /// finds no region with positive mean.
    pub fn surrogate(&self, noise: &Field, ws: &mut Workspace) -> Result<f64> {
        Ok(overall_max(&self.surrogate_maxima(noise, ws)?).0)
    }

    /// `T_n` and the region attaining it, without retaining per-region arrays.
    pub fn statistic(
        &self,
        field: &Field,
        model: &ModelFamily,
        ws: &mut Workspace,
    ) -> Result<(f64, Region)> {
        let maxima = self.scale_maxima(field, &[model], ws)?;
        let (value, scale) = overall_max(&maxima[0]);
        let scale = scale.expect("data statistic always has a maximiser");
        Ok((
            value,
            self.region_at(scale, maxima[0][scale].offset_index.unwrap()),
        ))
    }

    fn region_at(&self, scale: usize, offset_index: usize) -> Region {
        let extent = self.system.scales()[scale].clone();
        let dims = self.system.offset_dims(&extent);
        Region {
            offset: unravel(offset_index, &dims),
            extent,
        }
    }

    /// Full scan retaining every local and calibrated statistic.
    pub fn scan(&self, field: &Field, model: &ModelFamily) -> Result<ScanResult> {
        self.check_field(field)?;
        let mut ws = self.workspace();
        let (mean0, _) = model.baseline_moments();
        let one_sided = self.sidedness == Sidedness::OneSidedUpper;
        let mut per_scale = Vec::with_capacity(self.penalties.len());
        let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
        let mut first = true;
        self.engine
            .for_each_scale(field, &self.system, &mut ws, |s, extent, sums| {
                let count: usize = extent.iter().product();
                let c = count as f64;
                let pen = self.penalties[s];
                let mut local = Vec::with_capacity(sums.len());
                let mut calibrated = Vec::with_capacity(sums.len());
                for (i, &sum) in sums.iter().enumerate() {
                    let t = if one_sided && !(sum / c > mean0) {
                        0.0
                    } else {
                        model.local_lrt(sum, count)?
                    };
                    let v = pen.calibrate(t);
                    if first || v > best.0 {
                        best = (v, s, i);
                        first = false;
                    }
                    local.push(t);
                    calibrated.push(v);
                }
                per_scale.push(ScaleStatistics {
                    extent: extent.to_vec(),
                    dims: self.system.offset_dims(extent),
                    cardinality: count,
                    penalty: pen,
                    local,
                    calibrated,
                });
                Ok(())
            })?;
        Ok(ScanResult {
            t_n: best.0,
            argmax_region: self.region_at(best.1, best.2),
            per_scale,
            sidedness: self.sidedness,
            model: model.clone(),
            calibration: self.calibration,
            n: self.system.n(),
            d: self.system.d(),
        })
    }
}

/// Maximum over per-scale maxima; ties go to the earliest scale.
pub fn overall_max(maxima: &[ScaleMax]) -> (f64, Option<usize>) {
    let mut best = (f64::NEG_INFINITY, None);
    for (s, m) in maxima.iter().enumerate() {
        if m.offset_index.is_some() && (best.1.is_none() || m.value > best.0) {
            best = (m.value, Some(s));
        }
    }
    best
}

/// Maximum over the scales whose cardinality lies in `[lo, hi]`.
pub fn restricted_max(system: &RegionSystem, maxima: &[ScaleMax], lo: usize, hi: usize) -> f64 {
    system
        .scales()
        .iter()
        .zip(maxima)
        .filter(|(h, m)| {
            let c = h.iter().product::<usize>();
            lo <= c && c <= hi && m.offset_index.is_some()
        })
        .map(|(_, m)| m.value)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Calibrated multiscale statistic of `field` with all per-region statistics
/// retained.
pub fn scan_statistic(
    field: &Field,
    system: &RegionSystem,
    model: &ModelFamily,
    cal: &Calibration,
    sidedness: Sidedness,
) -> Result<ScanResult> {
    Scanner::new(system.clone(), *cal, sidedness)?.scan(field, model)
}

/// Gaussian surrogate `M_n` of a standard normal field.
pub fn surrogate_statistic(
    noise: &Field,
    system: &RegionSystem,
    cal: &Calibration,
    sidedness: Sidedness,
) -> Result<f64> {
    let scanner = Scanner::new(system.clone(), *cal, sidedness)?;
    let mut ws = scanner.workspace();
    scanner.surrogate(noise, &mut ws)
}

/// Every region whose calibrated value is at least `eta`, equivalently whose
/// local statistic reaches `eta / omega_tilde + omega`.
pub fn reject_regions(result: &ScanResult, eta: f64) -> Vec<Rejection> {
    let mut out = Vec::new();
    for scale in &result.per_scale {
        let threshold = scale.penalty.threshold(eta);
        for (i, (&t, &v)) in scale.local.iter().zip(&scale.calibrated).enumerate() {
            if v >= eta {
                out.push(Rejection {
                    region: Region {
                        offset: unravel(i, &scale.dims),
                        extent: scale.extent.clone(),
                    },
                    statistic: t,
                    calibrated: v,
                    threshold,
                });
            }
        }
    }
    out
}
