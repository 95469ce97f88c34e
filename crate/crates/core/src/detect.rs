//! Significance maps, segmentations and region exports.

use serde::Serialize;

use crate::error::{AmsError, Result};
use crate::quantiles::QuantileTable;
use crate::regions::{csv_header, region_csv_fields};
use crate::statistic::{reject_regions, Rejection, ScanResult};

/// Per-pixel smallest cardinality among the significant regions covering it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceMap {
    pub n: usize,
    pub d: usize,
    /// `None` for pixels covered by no significant region.
    pub raster: Vec<Option<usize>>,
    pub regions: Vec<Rejection>,
    pub alpha: f64,
    pub eta: f64,
    /// Physical area of one pixel, for display only.
    pub pixel_area: Option<f64>,
}

impl SignificanceMap {
    /// Rasterises `regions` with the minimum-cardinality rule.
    pub fn from_rejections(
        n: usize,
        d: usize,
        regions: Vec<Rejection>,
        alpha: f64,
        eta: f64,
        pixel_area: Option<f64>,
    ) -> Self {
        let mut raster: Vec<Option<usize>> = vec![None; n.pow(d as u32)];
        for rej in &regions {
            let c = rej.region.cardinality();
            rej.region.for_each_cell(n, |i| {
                raster[i] = Some(raster[i].map_or(c, |v| v.min(c)));
            });
        }
        SignificanceMap {
            n,
            d,
            raster,
            regions,
            alpha,
            eta,
            pixel_area,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Union of all significant regions.
    pub fn union_mask(&self) -> Vec<bool> {
        self.raster.iter().map(Option::is_some).collect()
    }

    /// Raster in physical units (`cardinality * pixel_area`).
    pub fn physical_raster(&self) -> Vec<Option<f64>> {
        let a = self.pixel_area.unwrap_or(1.0);
        self.raster
            .iter()
            .map(|v| v.map(|c| c as f64 * a))
            .collect()
    }

    /// Region CSV: offsets (1-based), extents, cardinality, local statistic,
    /// calibrated value and local threshold.
    pub fn regions_csv(&self) -> String {
        let mut out = csv_header(self.d, &["cardinality", "T_R", "calibrated", "threshold"]);
        for r in &self.regions {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                region_csv_fields(&r.region),
                r.statistic,
                r.calibrated,
                r.threshold
            ));
        }
        out
    }

    /// 16-bit binary PGM of the raster; 0 marks uncovered pixels and
    /// cardinalities above 65535 saturate.
    pub fn to_pgm16(&self) -> Vec<u8> {
        let values: Vec<u16> = self
            .raster
            .iter()
            .map(|v| v.map_or(0, |c| c.min(u16::MAX as usize) as u16))
            .collect();
        let (w, h) = image_dims(self.n, self.d);
        let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
        for v in values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }
}

/// Width and height used when writing a grid as an image: `n` columns and
/// `n^(d-1)` rows.
pub fn image_dims(n: usize, d: usize) -> (usize, usize) {
    (n, n.pow(d.saturating_sub(1) as u32))
}

/// Applies `eta = q_{1-alpha}` from `table` to `result`.
pub fn significance_map(
    result: &ScanResult,
    table: &QuantileTable,
    alpha: f64,
    pixel_area: Option<f64>,
) -> Result<SignificanceMap> {
    if let Some(a) = pixel_area {
        if !(a > 0.0 && a.is_finite()) {
            return Err(AmsError::config(format!(
                "pixel area must be positive, got {a}"
            )));
        }
    }
    if table.key.n != result.n || table.key.d != result.d {
        return Err(AmsError::config(format!(
            "quantile table is for n={}, d={} but the scan has n={}, d={}",
            table.key.n, table.key.d, result.n, result.d
        )));
    }
    let eta = table.quantile(alpha)?;
    Ok(SignificanceMap::from_rejections(
        result.n,
        result.d,
        reject_regions(result, eta),
        alpha,
        eta,
        pixel_area,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    pub n: usize,
    pub d: usize,
    pub mask: Vec<bool>,
    /// Smallest significant cardinality, `None` for an empty map.
    pub source_scale: Option<usize>,
}

impl Segmentation {
    /// 8-bit binary PGM, 255 inside the mask and 0 elsewhere.
    pub fn to_pgm8(&self) -> Vec<u8> {
        let (w, h) = image_dims(self.n, self.d);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(self.mask.iter().map(|&m| if m { 255u8 } else { 0 }));
        out
    }
}

/// Pixels whose raster value equals the smallest value present.
pub fn segment(map: &SignificanceMap) -> Segmentation {
    let source_scale = map.raster.iter().flatten().copied().min();
    let mask = match source_scale {
        Some(s) => map.raster.iter().map(|v| *v == Some(s)).collect(),
        None => vec![false; map.raster.len()],
    };
    Segmentation {
        n: map.n,
        d: map.d,
        mask,
        source_scale,
    }
}
