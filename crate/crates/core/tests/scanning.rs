use std::collections::HashSet;

use ams_core::sampling::{poisson_field, replicate_rng, standard_normal_field};
use ams_core::{
    reject_regions, scan_statistic, significance_map, simulate_mn, Calibration, Field, ModelFamily,
    Parity, Region, RegionSystem, Rejection, Sidedness, SignificanceMap,
};

fn system(n: usize) -> RegionSystem {
    RegionSystem::rectangles(n, 2, 1, 6, Parity::All).unwrap()
}

fn poisson_data(n: usize, stream: u64) -> Field {
    let mut intensity = vec![2.0; n * n];
    for i in 4..8 {
        for j in 5..9 {
            intensity[i * n + j] = 4.0;
        }
    }
    poisson_field(&intensity, n, 2, &mut replicate_rng(11, stream)).unwrap()
}

fn keys(rs: &[Rejection]) -> HashSet<(Vec<usize>, Vec<usize>)> {
    rs.iter()
        .map(|r| (r.region.offset.clone(), r.region.extent.clone()))
        .collect()
}

#[test]
fn one_sided_never_exceeds_two_sided() {
    let cal = Calibration::dw(1.0, 2).unwrap();
    let sys = system(16);
    for s in 0..20 {
        let field = poisson_data(16, s);
        let model = ModelFamily::poisson(2.0).unwrap();
        let one = scan_statistic(&field, &sys, &model, &cal, Sidedness::OneSidedUpper).unwrap();
        let two = scan_statistic(&field, &sys, &model, &cal, Sidedness::TwoSided).unwrap();
        assert!(one.t_n <= two.t_n);

        let z = standard_normal_field(16, 2, &mut replicate_rng(12, s)).unwrap();
        let g = ModelFamily::gaussian(0.0, 1.0).unwrap();
        let one = scan_statistic(&z, &sys, &g, &cal, Sidedness::OneSidedUpper).unwrap();
        let two = scan_statistic(&z, &sys, &g, &cal, Sidedness::TwoSided).unwrap();
        assert!(one.t_n <= two.t_n);
    }
}

#[test]
fn raising_a_region_raises_its_one_sided_statistic() {
    let cal = Calibration::dw(1.0, 2).unwrap();
    let n = 16;
    let sys = RegionSystem::from_scales(n, 2, vec![vec![3, 4]]).unwrap();
    let target = Region {
        offset: vec![5, 2],
        extent: vec![3, 4],
    };
    let idx = 5 * (n - 4 + 1) + 2;
    for (model, base) in [
        (ModelFamily::poisson(2.0).unwrap(), poisson_data(n, 1)),
        (
            ModelFamily::gaussian(0.0, 1.0).unwrap(),
            standard_normal_field(n, 2, &mut replicate_rng(2, 0)).unwrap(),
        ),
    ] {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..8 {
            let mut data = base.data().to_vec();
            target.for_each_cell(n, |i| data[i] += k as f64);
            let field = Field::new(data, n, 2, base.dtype()).unwrap();
            let r = scan_statistic(&field, &sys, &model, &cal, Sidedness::OneSidedUpper).unwrap();
            let t = r.per_scale[0].local[idx];
            assert!(t >= prev);
            prev = t;
        }
    }
}

#[test]
fn rejections_are_antitone_in_threshold() {
    let cal = Calibration::dw(1.0, 2).unwrap();
    let field = poisson_data(16, 3);
    let model = ModelFamily::poisson(2.0).unwrap();
    let result = scan_statistic(&field, &system(16), &model, &cal, Sidedness::TwoSided).unwrap();
    let etas: Vec<f64> = (0..30).map(|k| result.t_n - 3.0 + 0.1 * k as f64).collect();
    for w in etas.windows(2) {
        let low = keys(&reject_regions(&result, w[0]));
        let high = keys(&reject_regions(&result, w[1]));
        assert!(high.is_subset(&low));
    }
}

#[test]
fn maps_are_nested_in_alpha() {
    let cal = Calibration::dw(1.0, 2).unwrap();
    let sys = system(16);
    let table = simulate_mn(&sys, &cal, Sidedness::TwoSided, 300, 4, &[]).unwrap();
    let model = ModelFamily::poisson(2.0).unwrap();
    for s in 0..5 {
        let result = scan_statistic(
            &poisson_data(16, s),
            &sys,
            &model,
            &cal,
            Sidedness::TwoSided,
        )
        .unwrap();
        let alphas = [0.01, 0.025, 0.05, 0.1, 0.2];
        let maps: Vec<SignificanceMap> = alphas
            .iter()
            .map(|&a| significance_map(&result, &table, a, None).unwrap())
            .collect();
        for w in maps.windows(2) {
            assert!(keys(&w[0].regions).is_subset(&keys(&w[1].regions)));
        }
    }
}

#[test]
fn raster_is_pixelwise_minimum_over_covering_regions() {
    let cal = Calibration::dw(1.0, 2).unwrap();
    let n = 12;
    let sys = system(n);
    let model = ModelFamily::poisson(2.0).unwrap();
    for s in 0..5 {
        let result =
            scan_statistic(&poisson_data(n, s), &sys, &model, &cal, Sidedness::TwoSided).unwrap();
        let rejections = reject_regions(&result, result.t_n - 1.0);
        assert!(!rejections.is_empty());
        let map = SignificanceMap::from_rejections(n, 2, rejections, 0.1, result.t_n - 1.0, None);
        for i in 0..n {
            for j in 0..n {
                let want = map
                    .regions
                    .iter()
                    .filter(|r| r.region.contains(&[i, j]))
                    .map(|r| r.region.cardinality())
                    .min();
                assert_eq!(map.raster[i * n + j], want, "pixel ({i}, {j})");
            }
        }
    }
}
