//! Periodic 2D grids, their normalized transforms, and sparse 1D
//! trigonometric polynomials.
//!
//! Grid point (i, j) sits at x = (-L/2 + i h, -L/2 + j h), h = L/M. The
//! forward transform is coeff(n) = h² Σ f(x) e^{-2πi n·x/L}; the inverse
//! carries 1/L². Spectra are stored in FFT order: row r holds n₁ = r for
//! r < M/2 and n₁ = r - M otherwise, so the Nyquist row is n₁ = -M/2.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Exec, Result};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec2D {
    pub side_length: f64,
    pub samples: usize,
}

impl GridSpec2D {
    pub fn new(side_length: f64, samples: usize) -> Result<Self> {
        if samples < 4 || !samples.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("M = {samples} must be a power of two >= 4")));
        }
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::InvalidGrid(format!("L = {side_length} must be positive")));
        }
        Ok(GridSpec2D { side_length, samples })
    }

    pub fn spacing(&self) -> f64 {
        self.side_length / self.samples as f64
    }

    pub fn len(&self) -> usize {
        self.samples * self.samples
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of sample index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side_length + i as f64 * self.spacing()
    }

    /// Frequency stored at storage index `r`.
    pub fn freq(&self, r: usize) -> i64 {
        let m = self.samples as i64;
        let r = r as i64;
        if r < m / 2 {
            r
        } else {
            r - m
        }
    }

    /// Storage index of frequency `n` (taken mod M).
    pub fn slot(&self, n: i64) -> usize {
        n.rem_euclid(self.samples as i64) as usize
    }

    pub fn in_band(&self, n: i64) -> bool {
        let h = self.samples as i64 / 2;
        (-h..h).contains(&n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    pub spec: GridSpec2D,
    pub values: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum2D {
    pub spec: GridSpec2D,
    pub coeffs: Vec<C64>,
}

impl Field2D {
    pub fn zeros(spec: GridSpec2D) -> Self {
        Field2D { spec, values: vec![C64::new(0.0, 0.0); spec.len()] }
    }

    pub fn from_fn(spec: GridSpec2D, mut f: impl FnMut(f64, f64) -> C64) -> Self {
        let m = spec.samples;
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..m {
            let x1 = spec.coord(i);
            for j in 0..m {
                values.push(f(x1, spec.coord(j)));
            }
        }
        Field2D { spec, values }
    }

    pub fn from_real(spec: GridSpec2D, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), spec.len());
        Field2D { spec, values: values.into_iter().map(|v| C64::new(v, 0.0)).collect() }
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.spec.samples + j]
    }

    pub fn l2_norm(&self) -> f64 {
        self.spec.spacing() * sum_sq(&self.values).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// ∫ f over the periodic square by the grid quadrature.
    pub fn integral(&self) -> C64 {
        let h = self.spec.spacing();
        self.values.iter().sum::<C64>() * (h * h)
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        assert_eq!(self.spec, other.spec);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Field2D { spec: self.spec, values }
    }

    pub fn add_assign(&mut self, other: &Field2D) {
        assert_eq!(self.spec, other.spec);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&self, s: C64) -> Field2D {
        Field2D { spec: self.spec, values: self.values.iter().map(|v| v * s).collect() }
    }
}

impl Spectrum2D {
    pub fn zeros(spec: GridSpec2D) -> Self {
        Spectrum2D { spec, coeffs: vec![C64::new(0.0, 0.0); spec.len()] }
    }

    pub fn from_fn(spec: GridSpec2D, mut f: impl FnMut(i64, i64) -> C64) -> Self {
        let m = spec.samples;
        let mut coeffs = Vec::with_capacity(spec.len());
        for r in 0..m {
            let n1 = spec.freq(r);
            for c in 0..m {
                coeffs.push(f(n1, spec.freq(c)));
            }
        }
        Spectrum2D { spec, coeffs }
    }

    pub fn get(&self, n1: i64, n2: i64) -> C64 {
        self.coeffs[self.spec.slot(n1) * self.spec.samples + self.spec.slot(n2)]
    }

    pub fn set(&mut self, n1: i64, n2: i64, v: C64) {
        let m = self.spec.samples;
        self.coeffs[self.spec.slot(n1) * m + self.spec.slot(n2)] = v;
    }

    /// Parseval-consistent norm: √(Σ|c|²)/L.
    pub fn l2_norm(&self) -> f64 {
        sum_sq(&self.coeffs).sqrt() / self.spec.side_length
    }

    /// Calls `f(n1, n2, storage_index)` for every lattice frequency.
    pub fn for_each_freq(&self, mut f: impl FnMut(i64, i64, usize)) {
        let m = self.spec.samples;
        for r in 0..m {
            let n1 = self.spec.freq(r);
            for c in 0..m {
                f(n1, self.spec.freq(c), r * m + c);
            }
        }
    }
}

fn sum_sq(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn plan(m: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    }
}

fn fft_rows(data: &mut [C64], m: usize, fft: &Arc<dyn Fft<f64>>, exec: Exec) {
    let rows_per_task = (1 << 14) / m + 1;
    exec.chunks_mut(data, rows_per_task * m, |_, chunk| {
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

fn transpose_square(data: &mut [C64], m: usize) {
    const B: usize = 32;
    for ib in (0..m).step_by(B) {
        for jb in (ib..m).step_by(B) {
            for i in ib..(ib + B).min(m) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(m) {
                    data.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}

/// Unnormalized 2D FFT in place (row-major square).
pub fn fft2_inplace(data: &mut [C64], m: usize, inverse: bool, exec: Exec) {
    assert_eq!(data.len(), m * m);
    let fft = plan(m, inverse);
    fft_rows(data, m, &fft, exec);
    transpose_square(data, m);
    fft_rows(data, m, &fft, exec);
    transpose_square(data, m);
}

fn checker(data: &mut [C64], m: usize) {
    for r in 0..m {
        if r % 2 == 1 {
            for v in &mut data[r * m..(r + 1) * m].iter_mut().step_by(2) {
                *v = -*v;
            }
        } else {
            for v in &mut data[r * m + 1..(r + 1) * m].iter_mut().step_by(2) {
                *v = -*v;
            }
        }
    }
}

pub fn dft2_forward(f: &Field2D) -> Spectrum2D {
    dft2_forward_with(f, Exec::default())
}

pub fn dft2_forward_with(f: &Field2D, exec: Exec) -> Spectrum2D {
    let spec = f.spec;
    let m = spec.samples;
    let mut data = f.values.clone();
    fft2_inplace(&mut data, m, false, exec);
    // The grid starts at -L/2, which contributes (-1)^(n1+n2).
    checker(&mut data, m);
    let h2 = spec.spacing() * spec.spacing();
    for v in &mut data {
        *v *= h2;
    }
    Spectrum2D { spec, coeffs: data }
}

pub fn dft2_inverse(s: &Spectrum2D) -> Field2D {
    dft2_inverse_with(s, Exec::default())
}

pub fn dft2_inverse_with(s: &Spectrum2D, exec: Exec) -> Field2D {
    let spec = s.spec;
    let m = spec.samples;
    let mut data = s.coeffs.clone();
    checker(&mut data, m);
    fft2_inplace(&mut data, m, true, exec);
    let inv = 1.0 / (spec.side_length * spec.side_length);
    for v in &mut data {
        *v *= inv;
    }
    Field2D { spec, values: data }
}

pub fn apply_multiplier(s: &Spectrum2D, mask: impl Fn(i64, i64) -> C64) -> Spectrum2D {
    let mut out = s.clone();
    s.for_each_freq(|n1, n2, idx| out.coeffs[idx] *= mask(n1, n2));
    out
}

/// Real {0,1}-style masks are common enough to get their own entry point.
pub fn apply_real_multiplier(s: &Spectrum2D, mask: impl Fn(i64, i64) -> f64) -> Spectrum2D {
    let mut out = s.clone();
    s.for_each_freq(|n1, n2, idx| out.coeffs[idx] *= mask(n1, n2));
    out
}

/// Values of Σ c_n e^{2πi n·x/L} at the grid points for arbitrary integer
/// frequencies; frequencies outside the band are folded, which is exact at
/// the sample points.
pub fn eval_terms_on_grid(
    spec: GridSpec2D,
    terms: impl IntoIterator<Item = ((i64, i64), C64)>,
    exec: Exec,
) -> Field2D {
    let m = spec.samples;
    let mut data = vec![C64::new(0.0, 0.0); spec.len()];
    for ((n1, n2), c) in terms {
        let sign = if (n1 + n2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        data[spec.slot(n1) * m + spec.slot(n2)] += c * sign;
    }
    fft2_inplace(&mut data, m, true, exec);
    Field2D { spec, values: data }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shifted {
    pub field: Field2D,
    pub cells: (i64, i64),
    pub residual: (f64, f64),
}

/// g(x) = f(x + h), with h rounded to whole cells.
pub fn shift_field(f: &Field2D, h: (f64, f64)) -> Shifted {
    let spec = f.spec;
    let m = spec.samples as i64;
    let sp = spec.spacing();
    let c1 = (h.0 / sp).round() as i64;
    let c2 = (h.1 / sp).round() as i64;
    let mut values = Vec::with_capacity(spec.len());
    for i in 0..m {
        let si = (i + c1).rem_euclid(m);
        for j in 0..m {
            let sj = (j + c2).rem_euclid(m);
            values.push(f.values[(si * m + sj) as usize]);
        }
    }
    Shifted {
        field: Field2D { spec, values },
        cells: (c1, c2),
        residual: (h.0 - c1 as f64 * sp, h.1 - c2 as f64 * sp),
    }
}

const FIELD_MAGIC: &[u8; 4] = b"WFF2";
const SPECTRUM_MAGIC: &[u8; 4] = b"WFS2";

fn write_grid(w: &mut impl Write, magic: &[u8; 4], spec: GridSpec2D, data: &[C64]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(spec.samples as u32).to_le_bytes())?;
    w.write_all(&spec.side_length.to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 16);
    for v in data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_grid(r: &mut impl Read, magic: &[u8; 4]) -> Result<(GridSpec2D, Vec<C64>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..4] != magic {
        return Err(Error::Format("bad magic".into()));
    }
    let m = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(head[8..16].try_into().unwrap());
    let spec = GridSpec2D::new(l, m).map_err(|e| Error::Format(e.to_string()))?;
    let mut payload = vec![0u8; spec.len() * 16];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((spec, data))
}

impl Field2D {
    /// Layout: magic "WFF2", u32 M, f64 L, then M² (re, im) f64 pairs,
    /// row-major, all little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_grid(w, FIELD_MAGIC, self.spec, &self.values)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (spec, values) = read_grid(r, FIELD_MAGIC)?;
        Ok(Field2D { spec, values })
    }
}

impl Spectrum2D {
    /// Same layout as fields with magic "WFS2"; rows in FFT storage order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_grid(w, SPECTRUM_MAGIC, self.spec, &self.coeffs)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (spec, coeffs) = read_grid(r, SPECTRUM_MAGIC)?;
        Ok(Spectrum2D { spec, coeffs })
    }
}

/// Sparse trigonometric polynomial Σ c_j e^{2πi j x} on 𝕋 = [0, 1).
/// Terms are kept sorted by frequency with no stored zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigPolynomial1D {
    terms: Vec<(i64, C64)>,
}

impl TrigPolynomial1D {
    pub fn new() -> Self {
        Self::default()
    }

    /// Repeated frequencies are summed.
    pub fn from_terms(terms: impl IntoIterator<Item = (i64, C64)>) -> Self {
        let mut v: Vec<(i64, C64)> = terms.into_iter().collect();
        v.sort_by_key(|t| t.0);
        let mut out: Vec<(i64, C64)> = Vec::with_capacity(v.len());
        for (j, c) in v {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|t| t.1 != C64::new(0.0, 0.0));
        TrigPolynomial1D { terms: out }
    }

    pub fn terms(&self) -> &[(i64, C64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, j: i64) -> C64 {
        match self.terms.binary_search_by_key(&j, |t| t.0) {
            Ok(i) => self.terms[i].1,
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.terms.iter().map(|t| t.0)
    }

    pub fn min_freq(&self) -> Option<i64> {
        self.terms.first().map(|t| t.0)
    }

    pub fn max_freq(&self) -> Option<i64> {
        self.terms.last().map(|t| t.0)
    }

    /// max |j| over the support.
    pub fn degree(&self) -> i64 {
        self.terms.iter().map(|t| t.0.abs()).max().unwrap_or(0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.1.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn l1_coeffs(&self) -> f64 {
        self.terms.iter().map(|t| t.1.norm()).sum()
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.terms
            .iter()
            .map(|&(j, c)| c * C64::from_polar(1.0, std::f64::consts::TAU * frac_mul(j, x)))
            .sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_terms(self.terms.iter().map(|&(j, c)| (j, c * s)))
    }

    /// Multiplication by e^{2πi shift x}.
    pub fn modulate(&self, shift: i64) -> Self {
        TrigPolynomial1D { terms: self.terms.iter().map(|&(j, c)| (j + shift, c)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }

    /// Values at x_t = t/S, t = 0..S. Exact for any support: frequencies
    /// are folded mod S before one inverse FFT.
    pub fn sample_equispaced(&self, s: usize) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); s];
        fold_into(&mut buf, self.terms.iter().copied(), 0);
        if s > 0 {
            plan(s, true).process(&mut buf);
        }
        buf
    }
}

/// Adds c_j into `buf[(j + shift) mod S]`.
pub fn fold_into(buf: &mut [C64], terms: impl IntoIterator<Item = (i64, C64)>, shift: i64) {
    let s = buf.len() as i64;
    if s == 0 {
        return;
    }
    for (j, c) in terms {
        buf[(j + shift).rem_euclid(s) as usize] += c;
    }
}

/// In-place unnormalized inverse FFT of arbitrary length.
pub fn ifft_inplace(buf: &mut [C64]) {
    if !buf.is_empty() {
        plan(buf.len(), true).process(buf);
    }
}

/// Forward FFT of arbitrary length.
pub fn fft_inplace(buf: &mut [C64]) {
    if !buf.is_empty() {
        plan(buf.len(), false).process(buf);
    }
}

/// j·x mod 1 without losing the fractional part for large j.
pub fn frac_mul(j: i64, x: f64) -> f64 {
    let p = j as f64 * x;
    p - p.floor()
}

/// Running partial sums of a family evaluated on a fixed sample set, and the
/// pointwise max of their moduli.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSumMax {
    pub sum: Vec<C64>,
    pub max: Vec<f64>,
    pub pushed: usize,
}

impl PartialSumMax {
    pub fn new(len: usize) -> Self {
        PartialSumMax { sum: vec![C64::new(0.0, 0.0); len], max: vec![0.0; len], pushed: 0 }
    }

    pub fn push(&mut self, member: &[C64]) {
        assert_eq!(member.len(), self.sum.len());
        for ((s, m), v) in self.sum.iter_mut().zip(self.max.iter_mut()).zip(member) {
            *s += v;
            *m = m.max(s.norm());
        }
        self.pushed += 1;
    }

    /// ‖max_m |Σ_{k≤m}|‖ / ‖Σ_k‖ under equal sample weights; 0 for a zero sum.
    pub fn ratio(&self) -> f64 {
        let top: f64 = self.max.iter().map(|v| v * v).sum();
        let all = sum_sq(&self.sum);
        if all == 0.0 {
            0.0
        } else {
            (top / all).sqrt()
        }
    }
}

pub trait L2Norm {
    fn l2(&self) -> f64;
}

impl L2Norm for Field2D {
    fn l2(&self) -> f64 {
        self.l2_norm()
    }
}

impl L2Norm for Spectrum2D {
    fn l2(&self) -> f64 {
        self.l2_norm()
    }
}

impl L2Norm for TrigPolynomial1D {
    fn l2(&self) -> f64 {
        self.l2_norm()
    }
}

pub fn l2_norm<T: L2Norm + ?Sized>(x: &T) -> f64 {
    x.l2()
}
