//! From double polynomials to one-dimensional polynomials with disjoint
//! positive spectra: discretize on T^(p)×T^(q), flatten to T^(pq), expand
//! the step functions in exact Fourier coefficients, take Cesàro means and
//! modulate.

use std::f64::consts::TAU;

use rustfft::FftPlanner;
use serde::Serialize;

use crate::bands::{DoublePolynomial, DoublePolynomialFamily, PipelineOutput};
use crate::discrete::{flatten, DiscretePolynomial1D, DiscretePolynomial2D, DiscreteSystemIndex};
use crate::spectral::{fold_into, ifft_inplace, PartialSumMax, TrigPolynomial1D, C64};
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AssemblyParams {
    pub p: i64,
    pub q: i64,
    pub cesaro_order: i64,
    pub modulation_shift: i64,
    pub spectrum_cap: i64,
}

impl AssemblyParams {
    pub fn new(p: i64, q: i64, cesaro_order: i64, modulation_shift: i64, spectrum_cap: i64) -> Result<Self> {
        DiscreteSystemIndex::new(p, q)?;
        if cesaro_order < 0 || modulation_shift <= cesaro_order {
            return Err(Error::InvalidArgument(format!(
                "shift {modulation_shift} must exceed cesaro order {cesaro_order}"
            )));
        }
        if spectrum_cap < modulation_shift + cesaro_order {
            return Err(Error::InvalidArgument(format!(
                "cap {spectrum_cap} below shift + order {}",
                modulation_shift + cesaro_order
            )));
        }
        Ok(AssemblyParams { p, q, cesaro_order, modulation_shift, spectrum_cap })
    }

    /// q = p + 1, order = factor·pq, shift = order + 1, cap = shift + order.
    pub fn consecutive(p: i64, cesaro_factor: i64) -> Result<Self> {
        let q = p + 1;
        let order = cesaro_factor * p * q;
        Self::new(p, q, order, order + 1, 2 * order + 1)
    }

    pub fn index(&self) -> DiscreteSystemIndex {
        DiscreteSystemIndex::new(self.p, self.q).expect("validated on construction")
    }
}

/// Attach the coefficients of each p_k to the discrete basis.
pub fn sample_to_discrete(fam: &DoublePolynomialFamily, params: &AssemblyParams) -> Result<Vec<DiscretePolynomial2D>> {
    fam.members
        .iter()
        .map(|m| {
            for &((a, b), _) in &m.terms {
                if !(1..=params.p).contains(&a) || !(1..=params.q).contains(&b) {
                    return Err(Error::SpectrumOverflow(format!(
                        "frequency ({a}, {b}) outside {}x{}",
                        params.p, params.q
                    )));
                }
            }
            Ok(DiscretePolynomial2D { p: params.p, q: params.q, terms: m.terms.clone() })
        })
        .collect()
}

/// sup over a `grid`×`grid` sample of |P - p| and the bound
/// 2π·max|n|·(1/p + 1/q)·Σ|a_n|.
pub fn discretization_check(poly: &DoublePolynomial, params: &AssemblyParams, grid: usize) -> (f64, f64) {
    let maxn = poly.terms.iter().map(|&((a, b), _)| a.abs().max(b.abs())).max().unwrap_or(0);
    let l1: f64 = poly.terms.iter().map(|(_, c)| c.norm()).sum();
    let bound = TAU * maxn as f64 * (1.0 / params.p as f64 + 1.0 / params.q as f64) * l1;
    let mut worst = 0.0f64;
    for i in 0..grid {
        for j in 0..grid {
            // stay off cell edges so the step value is unambiguous
            let x = ((i as f64 + 0.37) / grid as f64, (j as f64 + 0.61) / grid as f64);
            let mut d = C64::new(0.0, 0.0);
            for &(n, c) in &poly.terms {
                let exact = C64::from_polar(1.0, TAU * (n.0 as f64 * x.0 + n.1 as f64 * x.1));
                d += c * (exact - crate::discrete::tensor_value(params.p, params.q, n, x));
            }
            worst = worst.max(d.norm());
        }
    }
    (worst, bound)
}

/// Fourier coefficients of t^(l)_j at the frequencies i ≡ j (mod l) with
/// |i| ≤ limit: (e^{2πij/l} - 1)/(2πi·i/l), and 1 at i = 0.
pub fn step_coefficients(j: i64, l: i64, limit: i64) -> Vec<(i64, C64)> {
    let r = j.rem_euclid(l);
    let num = C64::from_polar(1.0, TAU * r as f64 / l as f64) - 1.0;
    let mut out = Vec::new();
    let first = -limit + (r - -limit).rem_euclid(l);
    let mut i = first;
    while i <= limit {
        let c = if i == 0 { C64::new(1.0, 0.0) } else { num / C64::new(0.0, TAU * i as f64 / l as f64) };
        out.push((i, c));
        i += l;
    }
    out
}

/// R̂ restricted to |i| ≤ limit.
pub fn to_trig(r: &DiscretePolynomial1D, limit: i64) -> TrigPolynomial1D {
    TrigPolynomial1D::from_terms(
        r.terms
            .iter()
            .flat_map(|&(j, a)| step_coefficients(j, r.order, limit).into_iter().map(move |(i, c)| (i, a * c))),
    )
}

pub fn fejer_weight(j: i64, n: i64) -> f64 {
    (1.0 - j.abs() as f64 / (n + 1) as f64).max(0.0)
}

/// (C,1) mean of order n.
pub fn cesaro_mean(f: &TrigPolynomial1D, n: i64) -> TrigPolynomial1D {
    TrigPolynomial1D::from_terms(
        f.terms()
            .iter()
            .filter(|(j, _)| j.abs() <= n)
            .map(|&(j, c)| (j, c * fejer_weight(j, n)))
            .filter(|(_, c)| *c != C64::new(0.0, 0.0)),
    )
}

/// ‖σ_n R - R‖₂ from the exact ‖R‖₂² and the coefficients of R with
/// |i| ≤ n (the only ones σ_n sees).
pub fn cesaro_error(r_trunc: &TrigPolynomial1D, r_norm_sq: f64, n: i64) -> f64 {
    let (mut cross, mut own) = (0.0, 0.0);
    for &(j, c) in r_trunc.terms() {
        let w = fejer_weight(j, n);
        cross += w * c.norm_sqr();
        own += w * w * c.norm_sqr();
    }
    (r_norm_sq - 2.0 * cross + own).max(0.0).sqrt()
}

/// First pair (a, b), a < b, of members sharing a frequency.
pub fn first_overlap(family: &[TrigPolynomial1D]) -> Option<(usize, usize)> {
    let mut all: Vec<(i64, usize)> = family
        .iter()
        .enumerate()
        .flat_map(|(k, f)| f.terms().iter().map(move |&(j, _)| (j, k)))
        .collect();
    all.sort_unstable();
    all.windows(2).find(|w| w[0].0 == w[1].0).map(|w| (w[0].1.min(w[1].1), w[0].1.max(w[1].1)))
}

pub fn assemble_q(r_family: &[TrigPolynomial1D], params: &AssemblyParams) -> Result<Vec<TrigPolynomial1D>> {
    if let Some((a, b)) = first_overlap(r_family) {
        return Err(Error::OrthogonalityViolation(a + 1, b + 1));
    }
    r_family
        .iter()
        .map(|r| {
            let q = cesaro_mean(r, params.cesaro_order).modulate(params.modulation_shift);
            match (q.min_freq(), q.max_freq()) {
                (Some(lo), _) if lo < 1 => Err(Error::SpectrumOverflow(format!("frequency {lo} below 1"))),
                (_, Some(hi)) if hi > params.spectrum_cap => {
                    Err(Error::SpectrumOverflow(format!("frequency {hi} above cap {}", params.spectrum_cap)))
                }
                _ => Ok(q),
            }
        })
        .collect()
}

/// Smallest 2^a 3^b 5^c ≥ n.
pub fn smooth_at_least(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut f5 = 1usize;
    while f5 < best {
        let mut f35 = f5;
        while f35 < best {
            let mut v = f35;
            while v < n {
                v *= 2;
            }
            best = best.min(v);
            f35 *= 3;
        }
        f5 *= 5;
    }
    best
}

/// Majorant ratio of a 1D family sampled at S equispaced points.
pub fn family_ratio_1d(family: &[TrigPolynomial1D], samples: usize) -> f64 {
    let mut acc = PartialSumMax::new(samples);
    let mut buf = vec![C64::new(0.0, 0.0); samples];
    for f in family {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        fold_into(&mut buf, f.terms().iter().copied(), 0);
        ifft_inplace(&mut buf);
        acc.push(&buf);
    }
    acc.ratio()
}

/// Majorant ratio of flattened polynomials over the pq cells.
pub fn cell_ratio_1d(family: &[DiscretePolynomial1D]) -> f64 {
    let Some(l) = family.first().map(|f| f.order as usize) else { return 0.0 };
    let mut acc = PartialSumMax::new(l);
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for f in family {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        // cell k ∈ 1..l carries Σ b_j e^{2πijk/l}; slot k mod l
        fold_into(&mut buf, f.terms.iter().copied(), 0);
        ifft_inplace(&mut buf);
        acc.push(&buf);
    }
    acc.ratio()
}

/// Cell values u ↦ P(u) for u ∈ ℤ_p×ℤ_q, row-major over (u₁ mod p, u₂ mod q).
pub fn cell_values_2d(poly: &DiscretePolynomial2D, planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let (p, q) = (poly.p as usize, poly.q as usize);
    let mut data = vec![C64::new(0.0, 0.0); p * q];
    for &((a, b), c) in &poly.terms {
        data[a.rem_euclid(p as i64) as usize * q + b.rem_euclid(q as i64) as usize] += c;
    }
    let rows = planner.plan_fft_inverse(q);
    for r in data.chunks_mut(q) {
        rows.process(r);
    }
    let cols = planner.plan_fft_inverse(p);
    let mut col = vec![C64::new(0.0, 0.0); p];
    for c in 0..q {
        for r in 0..p {
            col[r] = data[r * q + c];
        }
        cols.process(&mut col);
        for r in 0..p {
            data[r * q + c] = col[r];
        }
    }
    data
}

pub fn cell_ratio_2d(family: &[DiscretePolynomial2D]) -> f64 {
    let Some(first) = family.first() else { return 0.0 };
    let mut planner = FftPlanner::new();
    let mut acc = PartialSumMax::new((first.p * first.q) as usize);
    for f in family {
        acc.push(&cell_values_2d(f, &mut planner));
    }
    acc.ratio()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssemblyConfig {
    /// p is at least this and at least the largest spectral coordinate.
    pub min_p: i64,
    pub cesaro_factor: i64,
    /// Q is sampled at a smooth S ≥ sample_factor·pq points.
    pub sample_factor: usize,
    pub check_cells_2d: bool,
}

impl AssemblyConfig {
    pub fn desk(samples: usize) -> Self {
        AssemblyConfig { min_p: samples as i64 + 1, cesaro_factor: 4, sample_factor: 4, check_cells_2d: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssemblyReport {
    pub n: usize,
    pub params: AssemblyParams,
    pub samples: usize,
    pub band_ratio: f64,
    pub polynomial_ratio: f64,
    pub discrete_ratio: Option<f64>,
    pub flattened_ratio: f64,
    pub q_ratio: f64,
    pub q_over_band: f64,
    pub disjoint: bool,
    pub min_freq: i64,
    pub max_freq: i64,
    /// (Σ‖Q_k - e^{2πi s x} R_k‖²)^{1/2} / (Σ‖R_k‖²)^{1/2}
    pub approximation: f64,
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyOutput {
    pub report: AssemblyReport,
    pub q_family: Vec<TrigPolynomial1D>,
}

pub fn assemble(pipe: &PipelineOutput, cfg: &AssemblyConfig, exec: Exec) -> Result<AssemblyOutput> {
    let (_, hi) = pipe.family.coord_range().unwrap_or((1, 1));
    let p = cfg.min_p.max(hi);
    let params = AssemblyParams::consecutive(p, cfg.cesaro_factor)?;
    let idx = params.index();
    let discrete = sample_to_discrete(&pipe.family, &params)?;
    let discrete_ratio = cfg.check_cells_2d.then(|| cell_ratio_2d(&discrete));
    let flat = discrete.iter().map(|d| flatten(d, &idx)).collect::<Result<Vec<_>>>()?;
    let flattened_ratio = cell_ratio_1d(&flat);
    drop(discrete);

    let order = params.cesaro_order;
    let per_k = exec.map(flat.len(), |k| {
        let r = to_trig(&flat[k], order);
        let norm_sq = flat[k].l2_norm().powi(2);
        (r, norm_sq)
    });
    let r_family: Vec<TrigPolynomial1D> = per_k.iter().map(|(r, _)| r.clone()).collect();
    let (mut err_sq, mut norm_sq) = (0.0, 0.0);
    for (r, n2) in &per_k {
        err_sq += cesaro_error(r, *n2, order).powi(2);
        norm_sq += n2;
    }
    drop(per_k);
    let q_family = assemble_q(&r_family, &params)?;
    drop(r_family);

    let samples = smooth_at_least(cfg.sample_factor * (params.p * params.q) as usize);
    let q_ratio = family_ratio_1d(&q_family, samples);
    let disjoint = first_overlap(&q_family).is_none();
    let min_freq = q_family.iter().filter_map(|f| f.min_freq()).min().unwrap_or(0);
    let max_freq = q_family.iter().filter_map(|f| f.max_freq()).max().unwrap_or(0);
    let band_ratio = pipe.report.band_ratio;
    let report = AssemblyReport {
        n: pipe.report.n,
        params,
        samples,
        band_ratio,
        polynomial_ratio: pipe.report.polynomial_ratio,
        discrete_ratio,
        flattened_ratio,
        q_ratio,
        q_over_band: q_ratio / band_ratio,
        disjoint,
        min_freq,
        max_freq,
        approximation: if norm_sq > 0.0 { (err_sq / norm_sq).sqrt() } else { 0.0 },
        terms: q_family.iter().map(|f| f.len()).sum(),
    };
    Ok(AssemblyOutput { report, q_family })
}
