use std::path::PathBuf;

use ams_core::{
    AmsError, Calibration, CalibrationKind, Dtype, GridFormat, ModelKind, Parity, RegionSystem,
    Result, Sidedness,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "ams",
    version,
    about = "Adjusted multiscale scanning of random fields"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a grid and export significant regions.
    Scan(ScanArgs),
    /// Simulate and print quantiles of the surrogate statistic.
    Quantile(QuantileArgs),
    /// Run a simulation study from a TOML config.
    Simulate(SimulateArgs),
    /// Check the growth conditions of a calibration.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Poisson,
    GaussKnown,
    GaussUnknown,
    Gamma,
}

impl ModelArg {
    pub fn kind(self) -> ModelKind {
        match self {
            ModelArg::Poisson => ModelKind::Poisson,
            ModelArg::GaussKnown => ModelKind::GaussianKnownVariance,
            ModelArg::GaussUnknown => ModelKind::GaussianUnknownVariance,
            ModelArg::Gamma => ModelKind::Gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Csv,
    Pgm,
    Raw,
}

impl FormatArg {
    pub fn format(self) -> GridFormat {
        match self {
            FormatArg::Csv => GridFormat::Csv,
            FormatArg::Pgm => GridFormat::Pgm,
            FormatArg::Raw => GridFormat::RawText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtypeArg {
    Counts,
    Reals,
}

impl DtypeArg {
    pub fn dtype(self) -> Dtype {
        match self {
            DtypeArg::Counts => Dtype::Counts,
            DtypeArg::Reals => Dtype::Reals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationArg {
    Dw,
    Sac,
    Pwm,
    Unit,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrationArgs {
    #[arg(long, value_enum, default_value = "dw")]
    pub calibration: CalibrationArg,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = std::f64::consts::E)]
    pub pwm_c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pwm_cd: f64,
}

impl CalibrationArgs {
    pub fn build(&self, d: usize) -> Result<Calibration> {
        let kind = match self.calibration {
            CalibrationArg::Dw => CalibrationKind::Dw { nu: self.nu },
            CalibrationArg::Sac => CalibrationKind::Sac,
            CalibrationArg::Pwm => CalibrationKind::Pwm {
                c: self.pwm_c,
                c_d: self.pwm_cd,
            },
            CalibrationArg::Unit => CalibrationKind::Unit,
        };
        Calibration::new(kind, d)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RegionArgs {
    /// Side lengths `a..b`, optionally `a..b:even`; a single `a` is `a..a`.
    #[arg(long, required_unless_present = "manifest")]
    pub sides: Option<String>,
    /// Hypercubes only instead of all rectangles.
    #[arg(long)]
    pub cubes: bool,
    /// Smallest scanned cardinality `r_n`.
    #[arg(long)]
    pub min_card: Option<usize>,
    /// Largest scanned cardinality `m_n`.
    #[arg(long)]
    pub max_card: Option<usize>,
}

/// Parses `a..b[:even]`.
pub fn parse_sides(spec: &str) -> Result<(usize, usize, Parity)> {
    let bad = || {
        AmsError::Config(format!(
            "--sides expects `a..b` or `a..b:even`, got {spec:?}"
        ))
    };
    let (range, parity) = match spec.split_once(':') {
        Some((r, "even")) => (r, Parity::EvenOnly),
        Some((r, "all")) => (r, Parity::All),
        Some(_) => return Err(bad()),
        None => (spec, Parity::All),
    };
    let (lo, hi) = match range.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ),
        None => {
            let s = range.trim().parse().map_err(|_| bad())?;
            (s, s)
        }
    };
    Ok((lo, hi, parity))
}

impl RegionArgs {
    /// Unrestricted system described by `--sides`/`--cubes`.
    pub fn base_system(&self, n: usize, d: usize) -> Result<RegionSystem> {
        let spec = self
            .sides
            .as_deref()
            .ok_or_else(|| AmsError::Config("--sides is required".into()))?;
        let (lo, hi, parity) = parse_sides(spec)?;
        if self.cubes {
            RegionSystem::cubes(n, d, lo, hi, parity)
        } else {
            RegionSystem::rectangles(n, d, lo, hi, parity)
        }
    }
}

fn sidedness(one_sided: bool) -> Sidedness {
    if one_sided {
        Sidedness::OneSidedUpper
    } else {
        Sidedness::TwoSided
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScanArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub input: Option<PathBuf>,
    /// Input format (default: from the file extension).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Value type (default: inferred from the values).
    #[arg(long, value_enum)]
    pub dtype: Option<DtypeArg>,
    #[arg(long, value_enum, required_unless_present = "manifest")]
    pub model: Option<ModelArg>,
    /// Baseline parameter; estimated from the data when absent.
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Nuisance parameter (Gaussian variance or gamma shape).
    #[arg(long)]
    pub nuisance: Option<f64>,
    #[command(flatten)]
    pub regions: RegionArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long)]
    pub one_sided: bool,
    /// Monte-Carlo draws for the quantile table.
    #[arg(long, default_value_t = 2000)]
    pub runs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Physical area of one pixel for the significance map.
    #[arg(long)]
    pub pixel_area: Option<f64>,
    /// Directory of cached quantile tables.
    #[serde(skip)]
    #[arg(long)]
    pub quantile_store: Option<PathBuf>,
    /// Output path prefix.
    #[serde(skip)]
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.
    #[serde(skip)]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl ScanArgs {
    pub fn sidedness(&self) -> Sidedness {
        sidedness(self.one_sided)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct QuantileArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[command(flatten)]
    pub regions: RegionArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long)]
    pub one_sided: bool,
    #[arg(long, default_value_t = 2000)]
    pub runs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra levels besides 0.2, 0.1, 0.05, 0.025, 0.01.
    #[arg(long, value_delimiter = ',')]
    pub alpha_list: Vec<f64>,
    #[serde(skip)]
    #[arg(long)]
    pub quantile_store: Option<PathBuf>,
    /// Output path prefix for CSV files and the manifest.
    #[serde(skip)]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl QuantileArgs {
    pub fn sidedness(&self) -> Sidedness {
        sidedness(self.one_sided)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    PluginFailure,
    QuantileTable,
    GaussianLevelPower,
    PoissonLevelPower,
}

impl ScenarioArg {
    pub fn scenario(self) -> ams_core::Scenario {
        use ams_core::Scenario;
        match self {
            ScenarioArg::PluginFailure => Scenario::PluginFailure,
            ScenarioArg::QuantileTable => Scenario::QuantileTable,
            ScenarioArg::GaussianLevelPower => Scenario::GaussianLevelPower,
            ScenarioArg::PoissonLevelPower => Scenario::PoissonLevelPower,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Overrides the scenario named in the config.
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, required_unless_present = "manifest")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub calibration: CalibrationArgs,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Grid sides to validate at.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512])]
    pub n: Vec<usize>,
    /// Smallest scale for the minimum-scale advisory.
    #[arg(long)]
    pub r_n: Option<usize>,
}
