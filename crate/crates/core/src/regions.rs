//! Systems of axis-aligned candidate regions on the grid `{0..n}^d`.
//!
//! A region is a box with 0-based offset `t` and extent `h` such that
//! `t_i + h_i <= n` on every axis. The system stores the distinct extents
//! ("scales" as side-length vectors); the offsets of each scale are enumerated
//! on demand.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AmsError, Result};

/// Side-length filter applied when generating scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    All,
    EvenOnly,
}

impl Parity {
    fn admits(self, side: usize) -> bool {
        match self {
            Parity::All => true,
            Parity::EvenOnly => side.is_multiple_of(2),
        }
    }
}

/// Base shape that every region is a shifted and rescaled copy of.
///
/// Only the full box ships; other shapes would plug in here together with a
/// matching kernel in the box-sum engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseShape {
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub offset: Vec<usize>,
    pub extent: Vec<usize>,
}

impl Region {
    pub fn cardinality(&self) -> usize {
        self.extent.iter().product()
    }

    /// Whether the grid point `index` (one coordinate per axis) lies inside.
    pub fn contains(&self, index: &[usize]) -> bool {
        index
            .iter()
            .zip(self.offset.iter().zip(&self.extent))
            .all(|(&i, (&t, &h))| i >= t && i < t + h)
    }

    /// Visits the row-major linear indices (grid side `n`) covered by the region.
    pub fn for_each_cell(&self, n: usize, mut f: impl FnMut(usize)) {
        let d = self.extent.len();
        let mut idx = vec![0usize; d];
        loop {
            let lin = idx
                .iter()
                .zip(&self.offset)
                .fold(0usize, |acc, (&i, &t)| acc * n + t + i);
            f(lin);
            let mut axis = d;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.extent[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSystem {
    n: usize,
    d: usize,
    scales: Vec<Vec<usize>>,
    scale_bounds: (usize, usize),
    parity: Parity,
    shape: BaseShape,
}

fn check_sides(n: usize, d: usize, min_side: usize, max_side: usize) -> Result<()> {
    if d == 0 {
        return Err(AmsError::config("dimension must be at least 1"));
    }
    if n == 0 {
        return Err(AmsError::config("grid side length must be at least 1"));
    }
    if min_side < 1 || min_side > max_side || max_side > n {
        return Err(AmsError::config(format!(
            "side range {min_side}..{max_side} is not inside 1..{n}"
        )));
    }
    Ok(())
}

fn sides(min_side: usize, max_side: usize, parity: Parity) -> Vec<usize> {
    (min_side..=max_side)
        .filter(|&s| parity.admits(s))
        .collect()
}

impl RegionSystem {
    /// All boxes whose every side lies in `min_side..=max_side` (after the
    /// parity filter).
    pub fn rectangles(
        n: usize,
        d: usize,
        min_side: usize,
        max_side: usize,
        parity: Parity,
    ) -> Result<Self> {
        check_sides(n, d, min_side, max_side)?;
        let sides = sides(min_side, max_side, parity);
        if sides.is_empty() {
            return Err(AmsError::EmptySystem(format!(
                "no side in {min_side}..{max_side} passes the parity filter"
            )));
        }
        let mut scales = vec![Vec::with_capacity(d)];
        for _ in 0..d {
            scales = scales
                .into_iter()
                .flat_map(|prefix| {
                    sides.iter().map(move |&s| {
                        let mut v = prefix.clone();
                        v.push(s);
                        v
                    })
                })
                .collect();
        }
        Ok(RegionSystem {
            n,
            d,
            scales,
            scale_bounds: (min_side.pow(d as u32), max_side.pow(d as u32)),
            parity,
            shape: BaseShape::Rectangle,
        })
    }

    /// Hypercubes only: extents `(s, .., s)` for `s` in `min_side..=max_side`.
    pub fn cubes(
        n: usize,
        d: usize,
        min_side: usize,
        max_side: usize,
        parity: Parity,
    ) -> Result<Self> {
        check_sides(n, d, min_side, max_side)?;
        let scales: Vec<Vec<usize>> = sides(min_side, max_side, parity)
            .into_iter()
            .map(|s| vec![s; d])
            .collect();
        if scales.is_empty() {
            return Err(AmsError::EmptySystem(format!(
                "no side in {min_side}..{max_side} passes the parity filter"
            )));
        }
        Ok(RegionSystem {
            n,
            d,
            scales,
            scale_bounds: (min_side.pow(d as u32), max_side.pow(d as u32)),
            parity,
            shape: BaseShape::Rectangle,
        })
    }

    /// A system with an explicit list of extents. Duplicates are removed;
    /// first occurrence order is kept.
    pub fn from_scales(n: usize, d: usize, scales: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(AmsError::config("grid side and dimension must be positive"));
        }
        let mut uniq: Vec<Vec<usize>> = Vec::with_capacity(scales.len());
        for h in scales {
            if h.len() != d || h.iter().any(|&s| s == 0 || s > n) {
                return Err(AmsError::config(format!(
                    "extent {h:?} does not fit a {d}-dimensional grid of side {n}"
                )));
            }
            if !uniq.contains(&h) {
                uniq.push(h);
            }
        }
        if uniq.is_empty() {
            return Err(AmsError::EmptySystem("no extents given".into()));
        }
        let lo = uniq
            .iter()
            .map(|h| h.iter().product::<usize>())
            .min()
            .unwrap();
        let hi = uniq
            .iter()
            .map(|h| h.iter().product::<usize>())
            .max()
            .unwrap();
        Ok(RegionSystem {
            n,
            d,
            scales: uniq,
            scale_bounds: (lo, hi),
            parity: Parity::All,
            shape: BaseShape::Rectangle,
        })
    }

    /// Keeps only scales with cardinality in `[r_n, m_n]`.
    pub fn restrict(&self, r_n: usize, m_n: usize) -> Result<Self> {
        if r_n > m_n {
            return Err(AmsError::config(format!(
                "restriction bounds reversed: {r_n} > {m_n}"
            )));
        }
        let scales: Vec<Vec<usize>> = self
            .scales
            .iter()
            .filter(|h| {
                let c = h.iter().product::<usize>();
                r_n <= c && c <= m_n
            })
            .cloned()
            .collect();
        if scales.is_empty() {
            return Err(AmsError::EmptySystem(format!(
                "no scale has cardinality in [{r_n}, {m_n}]"
            )));
        }
        Ok(RegionSystem {
            scales,
            scale_bounds: (self.scale_bounds.0.max(r_n), self.scale_bounds.1.min(m_n)),
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn scales(&self) -> &[Vec<usize>] {
        &self.scales
    }

    pub fn scale_bounds(&self) -> (usize, usize) {
        self.scale_bounds
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn shape(&self) -> BaseShape {
        self.shape
    }

    /// Number of grid points `n^d`.
    pub fn grid_len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Valid offsets per axis for an extent: `n - h_i + 1`.
    pub fn offset_dims(&self, extent: &[usize]) -> Vec<usize> {
        extent.iter().map(|&h| self.n + 1 - h).collect()
    }

    pub fn offset_count(&self, extent: &[usize]) -> usize {
        self.offset_dims(extent).iter().product()
    }

    /// Row-major iterator over all valid offsets of `extent`.
    pub fn offsets(&self, extent: &[usize]) -> Result<Offsets> {
        if !self.scales.iter().any(|h| h == extent) {
            return Err(AmsError::config(format!(
                "extent {extent:?} is not part of the region system"
            )));
        }
        Ok(Offsets::new(self.offset_dims(extent)))
    }

    /// Iterates every region in canonical order (scale-major, offsets
    /// row-major).
    pub fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        self.scales.iter().flat_map(move |h| {
            Offsets::new(self.offset_dims(h)).map(move |t| Region {
                offset: t,
                extent: h.clone(),
            })
        })
    }

    pub fn region_count(&self) -> usize {
        self.scales.iter().map(|h| self.offset_count(h)).sum()
    }

    pub fn check_growth(&self) -> GrowthReport {
        let total = self.region_count();
        let exponent = 2 * self.d as u32 + 1;
        let envelope = (self.n as f64).powi(exponent as i32);
        let log_ratio = if self.n > 1 {
            (total as f64).ln() / (self.n as f64).ln()
        } else {
            0.0
        };
        GrowthReport {
            total,
            envelope,
            envelope_exponent: exponent,
            log_ratio,
            exceeded: total as f64 > envelope,
        }
    }

    /// Canonical textual description used for cache digests.
    pub fn canonical_description(&self) -> String {
        let mut s = format!(
            "n={};d={};bounds={},{};parity={:?};shape={:?};scales=",
            self.n, self.d, self.scale_bounds.0, self.scale_bounds.1, self.parity, self.shape
        );
        for h in &self.scales {
            let _ = write!(s, "{h:?}");
        }
        s
    }

    /// Region list as CSV: `t_1..t_d,h_1..h_d,cardinality`, offsets 1-based.
    pub fn regions_csv(&self) -> String {
        let mut out = csv_header(self.d, &["cardinality"]);
        for r in self.regions() {
            out.push_str(&region_csv_fields(&r));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_header(d: usize, extra: &[&str]) -> String {
    let mut cols: Vec<String> = (1..=d).map(|i| format!("t_{i}")).collect();
    cols.extend((1..=d).map(|i| format!("h_{i}")));
    cols.extend(extra.iter().map(|s| s.to_string()));
    let mut s = cols.join(",");
    s.push('\n');
    s
}

/// `t_1..t_d,h_1..h_d,cardinality` with 1-based offsets.
pub(crate) fn region_csv_fields(r: &Region) -> String {
    let mut fields: Vec<String> = r.offset.iter().map(|t| (t + 1).to_string()).collect();
    fields.extend(r.extent.iter().map(|h| h.to_string()));
    fields.push(r.cardinality().to_string());
    fields.join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub total: usize,
    pub envelope: f64,
    pub envelope_exponent: u32,
    /// `log(total) / log(n)`, the empirical polynomial degree.
    pub log_ratio: f64,
    pub exceeded: bool,
}

/// Row-major multi-index iterator over `0..dims[0] x .. x 0..dims[d-1]`.
#[derive(Debug, Clone)]
pub struct Offsets {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
    remaining: usize,
}

impl Offsets {
    fn new(dims: Vec<usize>) -> Self {
        let remaining = dims.iter().product();
        let next = (remaining > 0).then(|| vec![0; dims.len()]);
        Offsets {
            dims,
            next,
            remaining,
        }
    }
}

impl Iterator for Offsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        self.remaining -= 1;
        let mut nxt = cur.clone();
        let mut axis = nxt.len();
        while axis > 0 {
            axis -= 1;
            nxt[axis] += 1;
            if nxt[axis] < self.dims[axis] {
                self.next = Some(nxt);
                break;
            }
            nxt[axis] = 0;
        }
        Some(cur)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Offsets {}

/// Converts a row-major linear offset index back to coordinates.
pub(crate) fn unravel(mut lin: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for axis in (0..dims.len()).rev() {
        out[axis] = lin % dims[axis];
        lin /= dims[axis];
    }
    out
}
