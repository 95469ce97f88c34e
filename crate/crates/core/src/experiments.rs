//! Simulation studies: plug-in failure of the naive statistic, quantile
//! tables, and empirical level and power of oracle and adaptive scans.

use std::fmt::Write as _;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, CalibrationKind};
use crate::error::{AmsError, Result};
use crate::models::{estimate_global, ModelFamily, ModelKind};
use crate::quantiles::{empirical_quantile, simulate_mn, QuantileTable, DEFAULT_MC_RUNS};
use crate::regions::{Parity, RegionSystem};
use crate::sampling::{gaussian_field, poisson_field, replicate_rng, standard_normal_field};
use crate::statistic::{overall_max, restricted_max, Scanner, Sidedness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PluginFailure,
    QuantileTable,
    GaussianLevelPower,
    PoissonLevelPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionShape {
    #[default]
    Rectangles,
    Cubes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default)]
    pub shape: RegionShape,
    pub min_side: usize,
    pub max_side: usize,
    #[serde(default = "default_parity")]
    pub parity: Parity,
}

fn default_parity() -> Parity {
    Parity::All
}

impl RegionSpec {
    pub fn build(&self, n: usize, d: usize) -> Result<RegionSystem> {
        match self.shape {
            RegionShape::Rectangles => {
                RegionSystem::rectangles(n, d, self.min_side, self.max_side, self.parity)
            }
            RegionShape::Cubes => {
                RegionSystem::cubes(n, d, self.min_side, self.max_side, self.parity)
            }
        }
    }
}

/// Cardinality window `[min_card, max_card]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardRange {
    pub min_card: usize,
    pub max_card: usize,
}

/// Planted hypercube of side `side` centred in the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    #[serde(default = "default_anomaly_side")]
    pub side: usize,
    /// Mean shift of the block (Gaussian scenarios).
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Noise standard deviations (Gaussian) or block intensities (Poisson).
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

fn default_anomaly_side() -> usize {
    8
}

fn default_amplitude() -> f64 {
    1.0
}

impl Default for AnomalySpec {
    fn default() -> Self {
        AnomalySpec {
            side: default_anomaly_side(),
            amplitude: default_amplitude(),
            grid: None,
        }
    }
}

/// `start, start + step, ..` up to `stop` (inclusive, with rounding slack).
pub fn step_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub regions: RegionSpec,
    /// Scale restriction for the adaptive statistic.
    #[serde(default)]
    pub restrict: Option<CardRange>,
    pub calibration: CalibrationKind,
    #[serde(default)]
    pub one_sided: bool,
    /// Monte-Carlo draws of `M_n`.
    #[serde(default = "default_mc_runs")]
    pub mc_runs: usize,
    /// Data replicates per parameter value.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Baseline mean (Gaussian) or intensity (Poisson); defaults to 0 and 1.
    #[serde(default)]
    pub baseline: Option<f64>,
    /// Noise standard deviation in the plug-in scenario.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub anomaly: AnomalySpec,
    #[serde(default = "default_true")]
    pub level: bool,
    #[serde(default = "default_true")]
    pub power: bool,
    /// Same-distribution KS simulations for the noise floor.
    #[serde(default = "default_floor_runs")]
    pub floor_runs: usize,
}

fn default_mc_runs() -> usize {
    DEFAULT_MC_RUNS
}

fn default_replicates() -> usize {
    500
}

fn default_alpha() -> f64 {
    0.1
}

fn default_sigma() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_floor_runs() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| AmsError::config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(AmsError::config("n and d must be positive"));
        }
        if self.mc_runs == 0 || self.replicates == 0 {
            return Err(AmsError::config("mc_runs and replicates must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AmsError::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Calibration::new(self.calibration, self.d)?;
        self.regions.build(self.n, self.d)?;
        match self.scenario {
            Scenario::GaussianLevelPower | Scenario::PoissonLevelPower => {
                if self.anomaly.side == 0 || self.anomaly.side > self.n {
                    return Err(AmsError::config(format!(
                        "anomaly side {} does not fit a grid of side {}",
                        self.anomaly.side, self.n
                    )));
                }
                if self.grid().is_empty() {
                    return Err(AmsError::config("parameter grid is empty"));
                }
                if self.grid().iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(AmsError::config(
                        "parameter grid values must be finite and nonnegative",
                    ));
                }
            }
            Scenario::PluginFailure => {
                if self.restrict.is_none() {
                    return Err(AmsError::config("plugin-failure needs a [restrict] window"));
                }
                if self.floor_runs == 0 {
                    return Err(AmsError::config("floor_runs must be positive"));
                }
            }
            Scenario::QuantileTable => {}
        }
        Ok(())
    }

    pub fn sidedness(&self) -> Sidedness {
        if self.one_sided {
            Sidedness::OneSidedUpper
        } else {
            Sidedness::TwoSided
        }
    }

    pub fn calibration(&self) -> Result<Calibration> {
        Calibration::new(self.calibration, self.d)
    }

    /// Full system and the (possibly restricted) system scanned adaptively.
    pub fn systems(&self) -> Result<(RegionSystem, RegionSystem)> {
        let full = self.regions.build(self.n, self.d)?;
        let scanned = match self.restrict {
            Some(r) => full.restrict(r.min_card, r.max_card)?,
            None => full.clone(),
        };
        Ok((full, scanned))
    }

    pub fn baseline(&self) -> f64 {
        self.baseline.unwrap_or(match self.scenario {
            Scenario::PoissonLevelPower => 1.0,
            _ => 0.0,
        })
    }

    pub fn grid(&self) -> Vec<f64> {
        match (&self.anomaly.grid, self.scenario) {
            (Some(g), _) => g.clone(),
            (None, Scenario::PoissonLevelPower) => step_grid(1.0, 2.0, 0.05),
            (None, _) => step_grid(0.5, 2.5, 0.1),
        }
    }
}

/// Independent master seed for purpose `tag` derived from `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    replicate_rng(seed, u64::MAX - tag).next_u64()
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i].total_cmp(&b[j]).is_le() {
            a[i]
        } else {
            b[j]
        };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// 95% quantile of the KS distance between two independent samples of sizes
/// `na` and `nb` from one continuous distribution.
pub fn ks_noise_floor(na: usize, nb: usize, runs: usize, seed: u64) -> Result<f64> {
    let mut d: Vec<f64> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let a: Vec<f64> = (0..na).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random::<f64>()).collect();
            ks_distance(&a, &b)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    empirical_quantile(&d, 0.95)
}

/// Largest violation of monotonicity, each pairwise increase measured in
/// units of its binomial standard error. `decreasing` selects the direction.
pub fn monotone_violation(rates: &[f64], replicates: usize, decreasing: bool) -> f64 {
    let r = replicates as f64;
    let mut worst = 0.0f64;
    for i in 0..rates.len() {
        for j in i + 1..rates.len() {
            let rise = if decreasing {
                rates[j] - rates[i]
            } else {
                rates[i] - rates[j]
            };
            if rise > 0.0 {
                let se = ((rates[i] * (1.0 - rates[i]) + rates[j] * (1.0 - rates[j])) / r).sqrt();
                worst = worst.max(if se > 0.0 { rise / se } else { f64::INFINITY });
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PluginFailure {
    /// Surrogate over the full and restricted systems, independent noise.
    pub m_n_full: Vec<f64>,
    pub m_n_restricted: Vec<f64>,
    /// Statistic with the true parameters (equal in law to `M_n`).
    pub true_full: Vec<f64>,
    pub true_restricted: Vec<f64>,
    /// Plug-in statistic with globally estimated mean and variance.
    pub naive_full: Vec<f64>,
    pub ams_restricted: Vec<f64>,
    pub ks_naive_full: f64,
    pub ks_ams_restricted: f64,
    pub ks_true_full: f64,
    pub noise_floor: f64,
}

impl PluginFailure {
    pub fn samples_csv(&self) -> String {
        let mut s = String::from(
            "replicate,m_n_full,m_n_restricted,true_full,true_restricted,naive_full,ams_restricted\n",
        );
        for i in 0..self.m_n_full.len() {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                i,
                self.m_n_full[i],
                self.m_n_restricted[i],
                self.true_full[i],
                self.true_restricted[i],
                self.naive_full[i],
                self.ams_restricted[i]
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "comparison,ks_distance,noise_floor\nnaive_full_vs_m_n,{:?},{:?}\nams_restricted_vs_m_n,{:?},{:?}\ntrue_full_vs_m_n,{:?},{:?}\n",
            self.ks_naive_full,
            self.noise_floor,
            self.ks_ams_restricted,
            self.noise_floor,
            self.ks_true_full,
            self.noise_floor
        )
    }
}

/// Naive plug-in over all scales versus the adaptive statistic over the
/// restricted scales, both compared with the surrogate `M_n`.
pub fn run_plugin_failure(cfg: &ExperimentConfig) -> Result<PluginFailure> {
    if cfg.scenario != Scenario::PluginFailure {
        return Err(AmsError::config(
            "run_plugin_failure needs the plugin-failure scenario",
        ));
    }
    cfg.validate()?;
    let (full, _) = cfg.systems()?;
    let window = cfg.restrict.expect("validated");
    full.restrict(window.min_card, window.max_card)?;
    let scanner = Scanner::new(full.clone(), cfg.calibration()?, cfg.sidedness())?;
    let (n, d) = (cfg.n, cfg.d);
    let (mu0, sigma) = (cfg.baseline(), cfg.sigma);
    let truth = ModelFamily::gaussian(mu0, sigma * sigma)?;
    let means = vec![mu0; n.pow(d as u32)];
    let data_seed = derive_seed(cfg.seed, 1);
    let lo_hi = (window.min_card, window.max_card);

    let rows: Vec<[f64; 6]> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map_init(
            || scanner.workspace(),
            |ws, r| -> Result<[f64; 6]> {
                let noise = standard_normal_field(n, d, &mut replicate_rng(cfg.seed, r))?;
                let m = scanner.surrogate_maxima(&noise, ws)?;
                let y = gaussian_field(&means, sigma, n, d, &mut replicate_rng(data_seed, r))?;
                let est = estimate_global(ModelKind::GaussianUnknownVariance, &y)?;
                let plugin =
                    ModelFamily::from_estimate(ModelKind::GaussianUnknownVariance, &est, None)?;
                let t = scanner.scale_maxima(&y, &[&truth, &plugin], ws)?;
                Ok([
                    overall_max(&m).0,
                    restricted_max(&full, &m, lo_hi.0, lo_hi.1),
                    overall_max(&t[0]).0,
                    restricted_max(&full, &t[0], lo_hi.0, lo_hi.1),
                    overall_max(&t[1]).0,
                    restricted_max(&full, &t[1], lo_hi.0, lo_hi.1),
                ])
            },
        )
        .collect::<Result<_>>()?;
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (m_n_full, m_n_restricted) = (col(0), col(1));
    let (true_full, true_restricted) = (col(2), col(3));
    let (naive_full, ams_restricted) = (col(4), col(5));
    let noise_floor = ks_noise_floor(
        cfg.replicates,
        cfg.replicates,
        cfg.floor_runs,
        derive_seed(cfg.seed, 2),
    )?;
    Ok(PluginFailure {
        ks_naive_full: ks_distance(&naive_full, &m_n_full),
        ks_ams_restricted: ks_distance(&ams_restricted, &m_n_restricted),
        ks_true_full: ks_distance(&true_full, &m_n_full),
        m_n_full,
        m_n_restricted,
        true_full,
        true_restricted,
        naive_full,
        ams_restricted,
        noise_floor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Null,
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// True baseline and nuisance parameters.
    Oracle,
    /// Globally estimated parameters.
    Ams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub parameter: f64,
    pub hypothesis: Hypothesis,
    pub method: Method,
    pub rejections: usize,
    pub replicates: usize,
}

impl CurvePoint {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.replicates as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelPower {
    pub eta: f64,
    pub table: QuantileTable,
    pub points: Vec<CurvePoint>,
}

impl LevelPower {
    pub fn curve(&self, hypothesis: Hypothesis, method: Method) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.hypothesis == hypothesis && p.method == method)
            .map(|p| (p.parameter, p.rate()))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,hypothesis,method,rejections,replicates,rate\n");
        for p in &self.points {
            let h = match p.hypothesis {
                Hypothesis::Null => "null",
                Hypothesis::Alternative => "alternative",
            };
            let m = match p.method {
                Method::Oracle => "oracle",
                Method::Ams => "ams",
            };
            let _ = writeln!(
                s,
                "{:?},{h},{m},{},{},{:?}",
                p.parameter,
                p.rejections,
                p.replicates,
                p.rate()
            );
        }
        s
    }
}

/// Indices of the centred hypercube of side `side`.
fn central_block(n: usize, d: usize, side: usize) -> Vec<usize> {
    let start = (n - side) / 2;
    let mut idx = vec![0usize];
    for _ in 0..d {
        idx = idx
            .into_iter()
            .flat_map(|base| (start..start + side).map(move |k| base * n + k))
            .collect();
    }
    idx
}

/// Global rejection frequencies of the oracle and adaptive scans at
/// `q_{1-alpha}` for each parameter value.
pub fn run_level_power(cfg: &ExperimentConfig) -> Result<LevelPower> {
    let gaussian = match cfg.scenario {
        Scenario::GaussianLevelPower => true,
        Scenario::PoissonLevelPower => false,
        _ => {
            return Err(AmsError::config(
                "run_level_power needs a level-power scenario",
            ))
        }
    };
    cfg.validate()?;
    let (_, system) = cfg.systems()?;
    let cal = cfg.calibration()?;
    let table = simulate_mn(
        &system,
        &cal,
        cfg.sidedness(),
        cfg.mc_runs,
        cfg.seed,
        &[cfg.alpha],
    )?;
    let eta = table.quantile(cfg.alpha)?;
    let scanner = Scanner::new(system, cal, cfg.sidedness())?;
    let (n, d) = (cfg.n, cfg.d);
    let len = n.pow(d as u32);
    let base = cfg.baseline();
    let block = central_block(n, d, cfg.anomaly.side);
    let data_seed = derive_seed(cfg.seed, 1);
    let grid = cfg.grid();

    let mut tasks = Vec::new();
    for (g, &v) in grid.iter().enumerate() {
        if cfg.level {
            tasks.push((g, v, Hypothesis::Null));
        }
        if cfg.power {
            tasks.push((g, v, Hypothesis::Alternative));
        }
    }
    let mut points = Vec::with_capacity(2 * tasks.len());
    for (g, v, hyp) in tasks {
        let mut means = vec![base; len];
        if hyp == Hypothesis::Alternative {
            let level = if gaussian {
                base + cfg.anomaly.amplitude
            } else {
                v
            };
            for &i in &block {
                means[i] = level;
            }
        }
        let oracle = if gaussian {
            ModelFamily::gaussian(base, v * v)?
        } else {
            ModelFamily::poisson(base)?
        };
        let stream0 = ((g as u64) << 33) | (((hyp == Hypothesis::Alternative) as u64) << 32);
        let hits: Vec<[bool; 2]> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map_init(
                || scanner.workspace(),
                |ws, r| -> Result<[bool; 2]> {
                    let mut rng = replicate_rng(data_seed, stream0 | r);
                    let (field, kind) = if gaussian {
                        (
                            gaussian_field(&means, v, n, d, &mut rng)?,
                            ModelKind::GaussianUnknownVariance,
                        )
                    } else {
                        (poisson_field(&means, n, d, &mut rng)?, ModelKind::Poisson)
                    };
                    let est = estimate_global(kind, &field)?;
                    let ams = ModelFamily::from_estimate(kind, &est, None)?;
                    let t = scanner.scale_maxima(&field, &[&oracle, &ams], ws)?;
                    Ok([overall_max(&t[0]).0 >= eta, overall_max(&t[1]).0 >= eta])
                },
            )
            .collect::<Result<_>>()?;
        for (k, method) in [Method::Oracle, Method::Ams].into_iter().enumerate() {
            points.push(CurvePoint {
                parameter: v,
                hypothesis: hyp,
                method,
                rejections: hits.iter().filter(|h| h[k]).count(),
                replicates: cfg.replicates,
            });
        }
    }
    Ok(LevelPower { eta, table, points })
}

/// Output of any scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ExperimentOutput {
    PluginFailure(PluginFailure),
    QuantileTable(QuantileTable),
    LevelPower(LevelPower),
}

impl ExperimentOutput {
    /// Named CSV files making up the output.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        match self {
            ExperimentOutput::PluginFailure(p) => {
                vec![("samples", p.samples_csv()), ("summary", p.summary_csv())]
            }
            ExperimentOutput::QuantileTable(t) => vec![
                ("quantiles", quantiles_csv(t)),
                ("samples", samples_csv(&t.samples)),
            ],
            ExperimentOutput::LevelPower(lp) => vec![("curves", lp.to_csv())],
        }
    }
}

pub fn quantiles_csv(t: &QuantileTable) -> String {
    let mut s = String::from("alpha,quantile\n");
    for (a, q) in &t.quantiles {
        let _ = writeln!(s, "{a:?},{q:?}");
    }
    s
}

fn samples_csv(samples: &[f64]) -> String {
    let mut s = String::from("replicate,m_n\n");
    for (i, v) in samples.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:?}");
    }
    s
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg.scenario {
        Scenario::PluginFailure => ExperimentOutput::PluginFailure(run_plugin_failure(cfg)?),
        Scenario::QuantileTable => {
            let (_, system) = cfg.systems()?;
            ExperimentOutput::QuantileTable(simulate_mn(
                &system,
                &cfg.calibration()?,
                cfg.sidedness(),
                cfg.mc_runs,
                cfg.seed,
                &[cfg.alpha],
            )?)
        }
        Scenario::GaussianLevelPower | Scenario::PoissonLevelPower => {
            ExperimentOutput::LevelPower(run_level_power(cfg)?)
        }
    })
}
