//! Monte-Carlo distribution of the surrogate statistic `M_n`, empirical
//! quantiles, and an on-disk quantile cache.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibration::Calibration;
use crate::error::{AmsError, Result};
use crate::regions::RegionSystem;
use crate::sampling::{replicate_rng, standard_normal_field};
use crate::statistic::{Scanner, Sidedness};

/// Levels `alpha` always tabulated.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.01];
pub const DEFAULT_MC_RUNS: usize = 2000;

const CACHE_MAGIC: &str = "ams-quantile-cache";
const CACHE_VERSION: u32 = 1;

fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuantileKey {
    pub n: usize,
    pub d: usize,
    pub system_digest: String,
    pub calibration_digest: String,
    pub sidedness: Sidedness,
    pub mc_runs: usize,
    pub seed: u64,
}

impl QuantileKey {
    pub fn new(
        system: &RegionSystem,
        cal: &Calibration,
        sidedness: Sidedness,
        mc_runs: usize,
        seed: u64,
    ) -> Self {
        QuantileKey {
            n: system.n(),
            d: system.d(),
            system_digest: sha256_hex(&system.canonical_description()),
            calibration_digest: sha256_hex(&cal.canonical_description()),
            sidedness,
            mc_runs,
            seed,
        }
    }

    /// File name of the cache entry for this key.
    pub fn file_name(&self) -> String {
        let desc = format!(
            "{};{};{};{};{};{};{}",
            self.n,
            self.d,
            self.system_digest,
            self.calibration_digest,
            self.sidedness.name(),
            self.mc_runs,
            self.seed
        );
        format!("q-{}.txt", &sha256_hex(&desc)[..32])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileTable {
    pub key: QuantileKey,
    /// Draws of `M_n`, sorted ascending.
    pub samples: Vec<f64>,
    /// `(alpha, q_{1-alpha})` pairs, `alpha` descending.
    pub quantiles: Vec<(f64, f64)>,
}

impl QuantileTable {
    fn from_samples(key: QuantileKey, mut samples: Vec<f64>, extra_alphas: &[f64]) -> Result<Self> {
        if samples.len() != key.mc_runs {
            return Err(AmsError::Size(format!(
                "{} samples for a table of {} runs",
                samples.len(),
                key.mc_runs
            )));
        }
        samples.sort_by(f64::total_cmp);
        let mut alphas: Vec<f64> = DEFAULT_ALPHAS.to_vec();
        for &a in extra_alphas {
            if !alphas.contains(&a) {
                alphas.push(a);
            }
        }
        alphas.sort_by(|a, b| b.total_cmp(a));
        let quantiles = alphas
            .into_iter()
            .map(|a| Ok((a, empirical_quantile(&samples, 1.0 - a)?)))
            .collect::<Result<_>>()?;
        Ok(QuantileTable {
            key,
            samples,
            quantiles,
        })
    }

    /// `q_{1-alpha}`, from the tabulated levels or the samples.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if let Some(&(_, q)) = self.quantiles.iter().find(|(a, _)| *a == alpha) {
            return Ok(q);
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(AmsError::domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        empirical_quantile(&self.samples, 1.0 - alpha)
    }

    fn body(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 24);
        for v in &self.samples {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    /// Cache file contents: header with format version, key fields and a
    /// checksum of the body, then one sample per line.
    pub fn to_cache_string(&self) -> String {
        let body = self.body();
        let k = &self.key;
        format!(
            "{CACHE_MAGIC} {CACHE_VERSION}\nn {}\nd {}\nsystem {}\ncalibration {}\nsidedness {}\nmc_runs {}\nseed {}\nchecksum {}\nsamples\n{body}",
            k.n,
            k.d,
            k.system_digest,
            k.calibration_digest,
            k.sidedness.name(),
            k.mc_runs,
            k.seed,
            sha256_hex(&body),
        )
    }

    fn from_cache_string(text: &str, expected: &QuantileKey, path: &str) -> Result<Self> {
        let corrupt = |reason: String| AmsError::CacheCorrupt {
            path: path.to_string(),
            reason,
        };
        let (header, body) = text
            .split_once("samples\n")
            .ok_or_else(|| corrupt("missing samples section".into()))?;
        let mut fields = std::collections::HashMap::new();
        let mut lines = header.lines();
        let magic = lines.next().unwrap_or_default();
        if magic != format!("{CACHE_MAGIC} {CACHE_VERSION}") {
            return Err(corrupt(format!("unsupported header {magic:?}")));
        }
        for line in lines {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| corrupt(format!("malformed header line {line:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| corrupt(format!("missing header field {k}")))
        };
        if get("checksum")? != sha256_hex(body) {
            return Err(corrupt("checksum mismatch".into()));
        }
        let key_matches = get("n")? == expected.n.to_string()
            && get("d")? == expected.d.to_string()
            && get("system")? == expected.system_digest
            && get("calibration")? == expected.calibration_digest
            && get("sidedness")? == expected.sidedness.name()
            && get("mc_runs")? == expected.mc_runs.to_string()
            && get("seed")? == expected.seed.to_string();
        if !key_matches {
            return Err(corrupt("key fields do not match the requested key".into()));
        }
        let samples = body
            .lines()
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| corrupt(format!("bad sample {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(expected.clone(), samples, &[])
    }
}

/// Order statistic `samples[ceil(p N)]` (1-based, clamped to `[1, N]`).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AmsError::domain(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    if sorted.is_empty() {
        return Err(AmsError::domain("no samples"));
    }
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n);
    Ok(sorted[idx - 1])
}

/// Draws of `M_n` in replicate order (unsorted). Replicate `r` uses stream `r`
/// of `seed`.
pub fn simulate_samples(scanner: &Scanner, mc_runs: usize, seed: u64) -> Result<Vec<f64>> {
    let (n, d) = (scanner.system().n(), scanner.system().d());
    (0..mc_runs as u64)
        .into_par_iter()
        .map_init(
            || scanner.workspace(),
            |ws, r| {
                let mut rng = replicate_rng(seed, r);
                let noise = standard_normal_field(n, d, &mut rng)?;
                scanner.surrogate(&noise, ws)
            },
        )
        .collect()
}

/// Simulates `mc_runs` draws of `M_n` and tabulates `q_{1-alpha}` for the
/// default levels plus `extra_alphas`.
pub fn simulate_mn(
    system: &RegionSystem,
    cal: &Calibration,
    sidedness: Sidedness,
    mc_runs: usize,
    seed: u64,
    extra_alphas: &[f64],
) -> Result<QuantileTable> {
    if mc_runs == 0 {
        return Err(AmsError::config("mc_runs must be at least 1"));
    }
    for &a in extra_alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(AmsError::domain(format!(
                "alpha must lie in (0, 1), got {a}"
            )));
        }
    }
    let scanner = Scanner::new(system.clone(), *cal, sidedness)?;
    let samples = simulate_samples(&scanner, mc_runs, seed)?;
    QuantileTable::from_samples(
        QuantileKey::new(system, cal, sidedness, mc_runs, seed),
        samples,
        extra_alphas,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// The stored entry was corrupt and has been recomputed.
    Recovered,
}

/// Directory of cached quantile tables, one file per key.
#[derive(Debug, Clone)]
pub struct QuantileStore {
    dir: PathBuf,
}

impl QuantileStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        QuantileStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &QuantileKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    fn load(&self, key: &QuantileKey) -> Result<Option<QuantileTable>> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(text) => {
                QuantileTable::from_cache_string(&text, key, &path.display().to_string()).map(Some)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes to a temporary file and renames it into place.
    fn store(&self, table: &QuantileTable) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&table.key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(table.to_cache_string().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Returns the cached table for the exact key, or simulates and persists
    /// it. A corrupt entry is logged and recomputed.
    pub fn lookup_or_simulate(
        &self,
        system: &RegionSystem,
        cal: &Calibration,
        sidedness: Sidedness,
        mc_runs: usize,
        seed: u64,
        extra_alphas: &[f64],
    ) -> Result<(QuantileTable, CacheStatus)> {
        let key = QuantileKey::new(system, cal, sidedness, mc_runs, seed);
        let status = match self.load(&key) {
            Ok(Some(mut table)) => {
                if !extra_alphas.is_empty() {
                    table = QuantileTable::from_samples(key, table.samples, extra_alphas)?;
                }
                return Ok((table, CacheStatus::Hit));
            }
            Ok(None) => CacheStatus::Miss,
            Err(e @ AmsError::CacheCorrupt { .. }) => {
                log::warn!("{e}; recomputing");
                CacheStatus::Recovered
            }
            Err(e) => return Err(e),
        };
        let table = simulate_mn(system, cal, sidedness, mc_runs, seed, extra_alphas)?;
        self.store(&table)?;
        Ok((table, status))
    }
}
