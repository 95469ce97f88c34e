use std::fs;
use std::path::Path;

use ams_core::calibration::{min_scale_guard, validate_growth};
use ams_core::detect::{segment, significance_map};
use ams_core::experiments::{quantiles_csv, run_experiment, ExperimentConfig, ExperimentOutput};
use ams_core::models::{estimate_global, ModelFamily, ModelKind, Provenance};
use ams_core::quantiles::{simulate_mn, QuantileStore, QuantileTable};
use ams_core::{AmsError, Calibration, GridFormat, RegionSystem, Result, Scanner, Sidedness};
use serde_json::json;

use crate::args::{QuantileArgs, ScanArgs, SimulateArgs, ValidateArgs};
use crate::manifest::{sha256_hex, to_value, Manifest, OutputSet};

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        log::warn!("no --seed given; using entropy seed {s} (recorded in the manifest)");
        s
    })
}

/// Cached or freshly simulated quantile table.
fn quantile_table(
    store: Option<&Path>,
    system: &RegionSystem,
    cal: &Calibration,
    sidedness: Sidedness,
    runs: usize,
    seed: u64,
    extra: &[f64],
) -> Result<QuantileTable> {
    match store {
        Some(dir) => {
            let (table, status) = QuantileStore::new(dir)
                .lookup_or_simulate(system, cal, sidedness, runs, seed, extra)?;
            log::info!("quantile cache: {status:?}");
            Ok(table)
        }
        None => simulate_mn(system, cal, sidedness, runs, seed, extra),
    }
}

/// Largest scale admissible for estimated parameters, `floor(n^(d/2))`.
pub fn parametric_cap(n: usize, d: usize) -> usize {
    ((n as f64).powf(d as f64 / 2.0) + 1e-9).floor() as usize
}

fn build_model(args: &ScanArgs, kind: ModelKind, field: &ams_core::Field) -> Result<ModelFamily> {
    let given = (args.baseline, args.nuisance);
    let needs_xi = !matches!(kind, ModelKind::Poisson);
    if let (Some(b), Some(x)) = given {
        if needs_xi {
            return ModelFamily::new(kind, vec![b], vec![x], Provenance::Known);
        }
    }
    if let (Some(b), false) = (given.0, needs_xi) {
        return ModelFamily::new(kind, vec![b], vec![], Provenance::Known);
    }
    if kind == ModelKind::GaussianKnownVariance && given.1.is_none() {
        return Err(AmsError::Config(
            "gauss-known needs --nuisance (the variance)".into(),
        ));
    }
    let est = estimate_global(kind, field)?;
    let theta = vec![given.0.unwrap_or(est.theta_hat[0])];
    let xi = match (given.1, needs_xi) {
        (_, false) => vec![],
        (Some(x), true) => vec![x],
        (None, true) => est.xi_hat.clone(),
    };
    ModelFamily::new(kind, theta, xi, Provenance::Estimated)
}

pub fn scan(mut args: ScanArgs) -> Result<()> {
    if let Some(path) = args.manifest.clone() {
        let m = Manifest::load(&path, "scan")?;
        let mut replay: ScanArgs = m.args()?;
        replay.quantile_store = args.quantile_store.take();
        replay.out = args.out.take();
        replay.manifest = Some(path);
        args = replay;
    }
    let input = args
        .input
        .clone()
        .ok_or_else(|| AmsError::Config("--input is required".into()))?;
    let out = args
        .out
        .clone()
        .ok_or_else(|| AmsError::Config("--out is required".into()))?;
    let kind = args
        .model
        .ok_or_else(|| AmsError::Config("--model is required".into()))?
        .kind();
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(AmsError::Config(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let seed = resolve_seed(args.seed);
    args.seed = Some(seed);

    let bytes = fs::read(&input)?;
    let format = args
        .format
        .map(|f| f.format())
        .unwrap_or_else(|| GridFormat::from_path(&input));
    let field = ams_core::io::parse_grid(&bytes, format, args.dtype.map(|d| d.dtype()))?;
    let (n, d) = (field.n(), field.d());
    let model = build_model(&args, kind, &field)?;
    let cal = args.calibration.build(d)?;

    let base = args.regions.base_system(n, d)?;
    let (lo, hi) = base.scale_bounds();
    let mut r_n = args.regions.min_card.unwrap_or(lo);
    let mut m_n = args.regions.max_card.unwrap_or(hi);
    if model.provenance() == Provenance::Estimated {
        let cap = parametric_cap(n, d);
        match args.regions.max_card {
            None if m_n > cap => {
                log::warn!(
                    "estimated parameters: largest scale capped at n^(d/2) = {cap} (override with --max-card)"
                );
                m_n = cap;
            }
            Some(m) if m > cap => log::warn!(
                "advisory: --max-card {m} exceeds n^(d/2) = {cap}; with estimated parameters the \
                 scale restriction requires m_n of smaller order than n^(d/2), so the level may not hold"
            ),
            _ => {}
        }
        r_n = r_n.min(m_n);
    }
    let system = if (r_n, m_n) != (lo, hi) {
        base.restrict(r_n, m_n)?
    } else {
        base
    };
    let guard = min_scale_guard(&cal, n, system.scale_bounds().0);
    if guard.warn {
        log::warn!(
            "advisory: smallest scale {} is below log(n)^gamma = {:.3e} (gamma = {}); the \
             approximation is asymptotic and may be inaccurate",
            guard.r_n,
            guard.required,
            guard.gamma
        );
    }

    let table = quantile_table(
        args.quantile_store.as_deref(),
        &system,
        &cal,
        args.sidedness(),
        args.runs,
        seed,
        &[args.alpha],
    )?;
    let scanner = Scanner::new(system.clone(), cal, args.sidedness())?;
    let result = scanner.scan(&field, &model)?;
    let map = significance_map(&result, &table, args.alpha, args.pixel_area)?;
    let seg = segment(&map);

    let mut manifest = Manifest::new("scan", to_value(&args));
    manifest.results = json!({
        "n": n,
        "d": d,
        "input_sha256": sha256_hex(&bytes),
        "model": to_value(&model),
        "scale_bounds": [system.scale_bounds().0, system.scale_bounds().1],
        "scales": system.scales().len(),
        "min_scale_guard": to_value(&guard),
        "alpha": args.alpha,
        "q": map.eta,
        "eta": map.eta,
        "t_n": result.t_n,
        "argmax_region": to_value(&result.argmax_region),
        "significant_regions": map.regions.len(),
        "segmentation_scale": seg.source_scale,
    });
    if let Some(path) = &args.manifest {
        check_input_digest(path, &bytes)?;
    }
    let mut outputs = OutputSet::new(&out, manifest);
    outputs.write("regions.csv", map.regions_csv().as_bytes())?;
    outputs.write("significance.pgm", &map.to_pgm16())?;
    outputs.write("segmentation.pgm", &seg.to_pgm8())?;
    let union = ams_core::detect::Segmentation {
        n,
        d,
        mask: map.union_mask(),
        source_scale: None,
    };
    outputs.write("union.pgm", &union.to_pgm8())?;
    outputs.finish()?;
    println!(
        "T_n = {:.6}  eta = q_{{{}}} = {:.6}  significant regions: {}",
        result.t_n,
        1.0 - args.alpha,
        map.eta,
        map.regions.len()
    );
    Ok(())
}

fn check_input_digest(manifest: &Path, bytes: &[u8]) -> Result<()> {
    let m = Manifest::load(manifest, "scan")?;
    match m.results.get("input_sha256").and_then(|v| v.as_str()) {
        Some(expected) if expected != sha256_hex(bytes) => Err(AmsError::Config(format!(
            "input differs from the one recorded in {}",
            manifest.display()
        ))),
        _ => Ok(()),
    }
}

pub fn quantile(mut args: QuantileArgs) -> Result<()> {
    if let Some(path) = args.manifest.clone() {
        let m = Manifest::load(&path, "quantile")?;
        let mut replay: QuantileArgs = m.args()?;
        replay.quantile_store = args.quantile_store.take();
        replay.out = args.out.take();
        replay.manifest = Some(path);
        args = replay;
    }
    let n = args
        .n
        .ok_or_else(|| AmsError::Config("--n is required".into()))?;
    let seed = resolve_seed(args.seed);
    args.seed = Some(seed);
    let cal = args.calibration.build(args.d)?;
    let mut system = args.regions.base_system(n, args.d)?;
    if args.regions.min_card.is_some() || args.regions.max_card.is_some() {
        let (lo, hi) = system.scale_bounds();
        system = system.restrict(
            args.regions.min_card.unwrap_or(lo),
            args.regions.max_card.unwrap_or(hi),
        )?;
    }
    let table = quantile_table(
        args.quantile_store.as_deref(),
        &system,
        &cal,
        args.sidedness(),
        args.runs,
        seed,
        &args.alpha_list,
    )?;
    for (a, q) in &table.quantiles {
        println!("alpha={a} q_{}={q:.6}", 1.0 - a);
    }
    if let Some(out) = &args.out {
        let mut manifest = Manifest::new("quantile", to_value(&args));
        manifest.results = json!({
            "key": to_value(&table.key),
            "quantiles": to_value(&table.quantiles),
        });
        let mut outputs = OutputSet::new(out, manifest);
        outputs.write("quantiles.csv", quantiles_csv(&table).as_bytes())?;
        outputs.write("cache.txt", table.to_cache_string().as_bytes())?;
        outputs.finish()?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match (&args.manifest, &args.config) {
        (Some(path), _) => Manifest::load(path, "simulate")?.args::<ExperimentConfig>()?,
        (None, Some(path)) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
        (None, None) => return Err(AmsError::Config("--config is required".into())),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s.scenario();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .ok_or_else(|| AmsError::Config("--out is required".into()))?;
    let output = run_experiment(&cfg)?;
    let mut manifest = Manifest::new("simulate", to_value(&cfg));
    manifest.results = match &output {
        ExperimentOutput::PluginFailure(p) => json!({
            "ks_naive_full": p.ks_naive_full,
            "ks_ams_restricted": p.ks_ams_restricted,
            "ks_true_full": p.ks_true_full,
            "noise_floor": p.noise_floor,
        }),
        ExperimentOutput::QuantileTable(t) => json!({ "quantiles": to_value(&t.quantiles) }),
        ExperimentOutput::LevelPower(lp) => json!({ "eta": lp.eta }),
    };
    let mut outputs = OutputSet::new(&out, manifest);
    for (name, body) in output.files() {
        let path = outputs.write(&format!("{name}.csv"), body.as_bytes())?;
        println!("wrote {}", path.display());
    }
    outputs.finish()?;
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let cal = args.calibration.build(args.d)?;
    let mut all = true;
    for &n in &args.n {
        let report = validate_growth(&cal, n)?;
        all &= report.passed;
        println!(
            "{}",
            serde_json::to_string(&report).expect("report serialises")
        );
    }
    if let Some(r_n) = args.r_n {
        for &n in &args.n {
            let guard = min_scale_guard(&cal, n, r_n);
            println!(
                "{}",
                serde_json::to_string(&json!({"n": n, "guard": guard})).unwrap()
            );
        }
    }
    println!("validation {}", if all { "passed" } else { "failed" });
    Ok(())
}
