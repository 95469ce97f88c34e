//! Region sums for every offset of every scale.
//!
//! For a fixed extent `h` the sums over all placements form the correlation of
//! the field with a box of extent `h`, evaluated as
//! `IFFT(FFT(Y) * conj(FFT(box_h)))`. The field transform is computed once and
//! reused for all scales. The grid is zero-padded to an FFT-friendly length
//! `L >= n` per axis; since `t_i + h_i <= n <= L` for every valid offset, no
//! valid sum ever wraps around and cropping to the first `n - h_i + 1` entries
//! per axis yields exactly the non-circular sums.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{AmsError, Result};
use crate::regions::RegionSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dtype {
    /// Nonnegative integer counts (photon counts).
    Counts,
    Reals,
}

/// Observations on the grid `{0..n}^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    data: Vec<f64>,
    n: usize,
    d: usize,
    dtype: Dtype,
}

impl Field {
    pub fn new(data: Vec<f64>, n: usize, d: usize, dtype: Dtype) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(AmsError::Shape(
                "grid side and dimension must be positive".into(),
            ));
        }
        let expected = n
            .checked_pow(d as u32)
            .ok_or_else(|| AmsError::Shape(format!("grid {n}^{d} is too large")))?;
        if data.len() != expected {
            return Err(AmsError::Shape(format!(
                "payload has {} values, expected {n}^{d} = {expected}",
                data.len()
            )));
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(AmsError::domain(format!(
                    "non-finite value {value} at index {index}"
                )));
            }
            if dtype == Dtype::Counts {
                if value < 0.0 {
                    return Err(AmsError::NegativeCount { index, value });
                }
                if value.fract() != 0.0 {
                    return Err(AmsError::domain(format!(
                        "count field has non-integer value {value} at index {index}"
                    )));
                }
            }
        }
        Ok(Field { data, n, d, dtype })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Sums over all placements of one extent, row-major over offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSums {
    pub extent: Vec<usize>,
    /// Offsets per axis, `n - h_i + 1`.
    pub dims: Vec<usize>,
    pub sums: Vec<f64>,
    pub cardinality: usize,
}

fn check_shapes(field: &Field, system: &RegionSystem) -> Result<()> {
    if field.n() != system.n() || field.d() != system.d() {
        return Err(AmsError::Size(format!(
            "field is {}^{} but the region system expects {}^{}",
            field.n(),
            field.d(),
            system.n(),
            system.d()
        )));
    }
    Ok(())
}

/// Smallest `L >= n` whose only prime factors are 2, 3, 5 and 7.
pub fn fast_len(n: usize) -> usize {
    let mut l = n.max(1);
    loop {
        let mut m = l;
        for p in [2, 3, 5, 7] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return l;
        }
        l += 1;
    }
}

/// Forward transform of a field, laid out as `[L; d-1] x (L/2 + 1)`.
#[derive(Debug, Clone)]
pub struct FieldSpectrum {
    data: Vec<Complex<f64>>,
    dtype: Dtype,
}

/// Per-worker scratch buffers for the engine.
pub struct Workspace {
    real: Vec<f64>,
    spec: Vec<Complex<f64>>,
    line: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    real_scratch: Vec<Complex<f64>>,
}

/// FFT plans and box spectra for one region system.
///
/// Immutable after construction and shareable across threads; every thread
/// brings its own [`Workspace`].
pub struct BoxSumEngine {
    n: usize,
    d: usize,
    len: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// conj(FFT(1-D box of side h)), length L, keyed by h.
    box_spectra: HashMap<usize, Vec<Complex<f64>>>,
}

impl std::fmt::Debug for BoxSumEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoxSumEngine")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("len", &self.len)
            .field("sides", &self.box_spectra.len())
            .finish()
    }
}

impl BoxSumEngine {
    pub fn new(system: &RegionSystem) -> Self {
        let n = system.n();
        let d = system.d();
        let len = fast_len(n);
        let mut real_planner = RealFftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(len);
        let c2r = real_planner.plan_fft_inverse(len);
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);

        let mut box_spectra = HashMap::new();
        for h in system.scales().iter().flatten() {
            box_spectra.entry(*h).or_insert_with(|| {
                let mut buf: Vec<Complex<f64>> = (0..len)
                    .map(|i| Complex::new(if i < *h { 1.0 } else { 0.0 }, 0.0))
                    .collect();
                fwd.process(&mut buf);
                buf.iter().map(|c| c.conj()).collect()
            });
        }
        BoxSumEngine {
            n,
            d,
            len,
            half: len / 2 + 1,
            r2c,
            c2r,
            fwd,
            inv,
            box_spectra,
        }
    }

    pub fn padded_len(&self) -> usize {
        self.len
    }

    fn lead_count(&self) -> usize {
        self.len.pow(self.d as u32 - 1)
    }

    fn spec_len(&self) -> usize {
        self.lead_count() * self.half
    }

    pub fn workspace(&self) -> Workspace {
        let scratch_len = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        let real_scratch_len = self.r2c.get_scratch_len().max(self.c2r.get_scratch_len());
        Workspace {
            real: vec![0.0; self.lead_count() * self.len],
            spec: vec![Complex::default(); self.spec_len()],
            line: vec![Complex::default(); self.len],
            scratch: vec![Complex::default(); scratch_len],
            real_scratch: vec![Complex::default(); real_scratch_len],
        }
    }

    fn check(&self, field: &Field) -> Result<()> {
        if field.n() != self.n || field.d() != self.d {
            return Err(AmsError::Size(format!(
                "field is {}^{} but the engine was built for {}^{}",
                field.n(),
                field.d(),
                self.n,
                self.d
            )));
        }
        Ok(())
    }

    /// Complex FFT along every leading axis (all but the last) of `spec`.
    fn leading_axes(
        &self,
        spec: &mut [Complex<f64>],
        ws_line: &mut [Complex<f64>],
        scratch: &mut [Complex<f64>],
        inverse: bool,
    ) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let l = self.len;
        let dims_total = self.spec_len();
        // Stride of leading axis `a` in the [L; d-1] x half layout.
        for axis in 0..self.d - 1 {
            let stride = self.half * l.pow((self.d - 2 - axis) as u32);
            let block = stride * l;
            for base in (0..dims_total).step_by(block) {
                for inner in 0..stride {
                    let start = base + inner;
                    for k in 0..l {
                        ws_line[k] = spec[start + k * stride];
                    }
                    plan.process_with_scratch(ws_line, scratch);
                    for k in 0..l {
                        spec[start + k * stride] = ws_line[k];
                    }
                }
            }
        }
    }

    /// Forward transform of `field` (zero-padded to `L^d`).
    pub fn transform(&self, field: &Field, ws: &mut Workspace) -> Result<FieldSpectrum> {
        self.check(field)?;
        let (n, l) = (self.n, self.len);
        ws.real.iter_mut().for_each(|v| *v = 0.0);
        // Copy row by row into the padded layout.
        let rows = field.len() / n;
        for row in 0..rows {
            let padded_row = pad_row_index(row, n, l, self.d);
            ws.real[padded_row * l..padded_row * l + n]
                .copy_from_slice(&field.data()[row * n..row * n + n]);
        }
        let mut spec = vec![Complex::default(); self.spec_len()];
        for row in 0..self.lead_count() {
            let input = &mut ws.real[row * l..(row + 1) * l];
            let output = &mut spec[row * self.half..(row + 1) * self.half];
            self.r2c
                .process_with_scratch(input, output, &mut ws.real_scratch)
                .map_err(|e| AmsError::Size(format!("real FFT failed: {e}")))?;
        }
        self.leading_axes(&mut spec, &mut ws.line, &mut ws.scratch, false);
        Ok(FieldSpectrum {
            data: spec,
            dtype: field.dtype(),
        })
    }

    /// All sums for one extent, written row-major into `out`.
    pub fn scale_sums_into(
        &self,
        spectrum: &FieldSpectrum,
        extent: &[usize],
        ws: &mut Workspace,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if extent.len() != self.d {
            return Err(AmsError::Size(format!(
                "extent {extent:?} does not have {} components",
                self.d
            )));
        }
        let factors: Vec<&Vec<Complex<f64>>> = extent
            .iter()
            .map(|h| {
                self.box_spectra.get(h).ok_or_else(|| {
                    AmsError::config(format!("side {h} is not part of the region system"))
                })
            })
            .collect::<Result<_>>()?;
        let (l, half, d) = (self.len, self.half, self.d);

        // Multiply by the separable box spectrum.
        let last = factors[d - 1];
        let mut lead = vec![0usize; d - 1];
        for row in 0..self.lead_count() {
            let mut f = Complex::new(1.0, 0.0);
            for (axis, &k) in lead.iter().enumerate() {
                f *= factors[axis][k];
            }
            let src = &spectrum.data[row * half..(row + 1) * half];
            let dst = &mut ws.spec[row * half..(row + 1) * half];
            for k in 0..half {
                dst[k] = src[k] * f * last[k];
            }
            advance(&mut lead, l);
        }

        self.leading_axes(&mut ws.spec, &mut ws.line, &mut ws.scratch, true);

        let dims: Vec<usize> = extent.iter().map(|&h| self.n + 1 - h).collect();
        let last_dim = dims[d - 1];
        let norm = 1.0 / (l as f64).powi(d as i32);
        let round = spectrum.dtype == Dtype::Counts;
        out.clear();
        let mut lead = vec![0usize; d - 1];
        for row in 0..self.lead_count() {
            let valid = lead.iter().zip(&dims).all(|(&i, &m)| i < m);
            if valid {
                let input = &mut ws.spec[row * half..(row + 1) * half];
                input[0].im = 0.0;
                if l % 2 == 0 {
                    input[half - 1].im = 0.0;
                }
                let output = &mut ws.real[row * l..(row + 1) * l];
                self.c2r
                    .process_with_scratch(input, output, &mut ws.real_scratch)
                    .map_err(|e| AmsError::Size(format!("inverse real FFT failed: {e}")))?;
                out.extend(output[..last_dim].iter().map(|&v| {
                    let v = v * norm;
                    if round {
                        v.round()
                    } else {
                        v
                    }
                }));
            }
            advance(&mut lead, l);
        }
        Ok(())
    }

    /// Transforms `field` once and hands each scale's sums to `f` in system
    /// order.
    pub fn for_each_scale(
        &self,
        field: &Field,
        system: &RegionSystem,
        ws: &mut Workspace,
        mut f: impl FnMut(usize, &[usize], &[f64]) -> Result<()>,
    ) -> Result<()> {
        check_shapes(field, system)?;
        let spectrum = self.transform(field, ws)?;
        let mut buf = Vec::new();
        for (idx, extent) in system.scales().iter().enumerate() {
            self.scale_sums_into(&spectrum, extent, ws, &mut buf)?;
            f(idx, extent, &buf)?;
        }
        Ok(())
    }
}

/// Row index in the padded grid for row `row` of the unpadded grid (rows are
/// all axes but the last).
fn pad_row_index(row: usize, n: usize, l: usize, d: usize) -> usize {
    let mut rest = row;
    let mut idx = 0;
    let mut mul = 1;
    for _ in 0..d - 1 {
        idx += (rest % n) * mul;
        rest /= n;
        mul *= l;
    }
    idx
}

/// Row-major odometer step over `[l; lead.len()]`.
fn advance(lead: &mut [usize], l: usize) {
    for axis in (0..lead.len()).rev() {
        lead[axis] += 1;
        if lead[axis] < l {
            return;
        }
        lead[axis] = 0;
    }
}

/// Region sums for every scale of `system` via FFT convolution.
///
/// Scales are processed in parallel; the field transform is shared.
pub fn fft_scale_sums(field: &Field, system: &RegionSystem) -> Result<Vec<ScaleSums>> {
    check_shapes(field, system)?;
    let engine = BoxSumEngine::new(system);
    let spectrum = engine.transform(field, &mut engine.workspace())?;
    system
        .scales()
        .par_iter()
        .map_init(
            || engine.workspace(),
            |ws, extent| {
                let mut sums = Vec::new();
                engine.scale_sums_into(&spectrum, extent, ws, &mut sums)?;
                Ok(ScaleSums {
                    extent: extent.clone(),
                    dims: system.offset_dims(extent),
                    sums,
                    cardinality: extent.iter().product(),
                })
            },
        )
        .collect()
}

/// Direct nested-loop summation. Intended as a test oracle for small grids.
pub fn naive_scale_sums(field: &Field, system: &RegionSystem) -> Result<Vec<ScaleSums>> {
    check_shapes(field, system)?;
    let n = system.n();
    let data = field.data();
    Ok(system
        .scales()
        .iter()
        .map(|extent| {
            let offsets = system.offsets(extent).expect("extent from system");
            let sums = offsets
                .map(|t| {
                    let region = crate::regions::Region {
                        offset: t,
                        extent: extent.clone(),
                    };
                    let mut s = 0.0;
                    region.for_each_cell(n, |i| s += data[i]);
                    s
                })
                .collect();
            ScaleSums {
                extent: extent.clone(),
                dims: system.offset_dims(extent),
                sums,
                cardinality: extent.iter().product(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::Parity;

    fn counts(data: Vec<f64>, n: usize, d: usize) -> Field {
        Field::new(data, n, d, Dtype::Counts).unwrap()
    }

    #[test]
    fn field_validation() {
        assert!(matches!(
            Field::new(vec![1.0; 5], 2, 2, Dtype::Reals),
            Err(AmsError::Shape(_))
        ));
        assert!(matches!(
            Field::new(vec![1.0, -1.0], 2, 1, Dtype::Counts),
            Err(AmsError::NegativeCount { index: 1, .. })
        ));
        assert!(Field::new(vec![1.0, 0.5], 2, 1, Dtype::Counts).is_err());
        assert!(Field::new(vec![1.0, f64::NAN], 2, 1, Dtype::Reals).is_err());
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(128), 128);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(13), 14);
        assert_eq!(fast_len(400), 400);
        assert_eq!(fast_len(1), 1);
    }

    #[test]
    fn constant_field_sums() {
        let c = 3.0;
        let f = counts(vec![c; 36], 6, 2);
        let s = RegionSystem::rectangles(6, 2, 1, 6, Parity::All).unwrap();
        for ss in fft_scale_sums(&f, &s).unwrap() {
            let expected = c * ss.cardinality as f64;
            assert_eq!(ss.sums.len(), s.offset_count(&ss.extent));
            assert!(ss.sums.iter().all(|&v| v == expected), "{:?}", ss.extent);
        }
    }

    #[test]
    fn impulse_response() {
        let mut data = vec![0.0; 16];
        data[0] = 1.0;
        let f = counts(data, 4, 2);
        let s = RegionSystem::from_scales(4, 2, vec![vec![2, 2]]).unwrap();
        let ss = &fft_scale_sums(&f, &s).unwrap()[0];
        let mut expected = vec![0.0; 9];
        expected[0] = 1.0;
        assert_eq!(ss.sums, expected);
    }

    #[test]
    fn one_dimensional_hand_example() {
        let f = counts(vec![1.0, 2.0, 3.0], 3, 1);
        let s = RegionSystem::from_scales(3, 1, vec![vec![2]]).unwrap();
        assert_eq!(naive_scale_sums(&f, &s).unwrap()[0].sums, vec![3.0, 5.0]);
        assert_eq!(fft_scale_sums(&f, &s).unwrap()[0].sums, vec![3.0, 5.0]);
    }

    #[test]
    fn shape_mismatch() {
        let f = counts(vec![0.0; 9], 3, 2);
        let s = RegionSystem::rectangles(4, 2, 1, 2, Parity::All).unwrap();
        assert!(matches!(fft_scale_sums(&f, &s), Err(AmsError::Size(_))));
        assert!(matches!(naive_scale_sums(&f, &s), Err(AmsError::Size(_))));
    }

    #[test]
    fn odd_padding_and_three_dimensions() {
        // n = 11 pads to 12, exercising the crop
        let n = 11;
        let data: Vec<f64> = (0..n * n * n).map(|i| ((i * 7919) % 13) as f64).collect();
        let f = counts(data, n, 3);
        let s = RegionSystem::from_scales(n, 3, vec![vec![1, 2, 3], vec![11, 1, 5], vec![4, 4, 4]])
            .unwrap();
        let a = fft_scale_sums(&f, &s).unwrap();
        let b = naive_scale_sums(&f, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_grid_scale_is_total_sum() {
        let data: Vec<f64> = (0..64).map(|i| (i % 5) as f64 * 0.25 - 0.3).collect();
        let total: f64 = data.iter().sum();
        let f = Field::new(data, 8, 2, Dtype::Reals).unwrap();
        let s = RegionSystem::from_scales(8, 2, vec![vec![8, 8]]).unwrap();
        let ss = &fft_scale_sums(&f, &s).unwrap()[0];
        assert_eq!(ss.sums.len(), 1);
        assert!((ss.sums[0] - total).abs() < 1e-12);
    }
}
