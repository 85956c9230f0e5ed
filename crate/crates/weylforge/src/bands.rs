//! Band functions over a direction fan, their annular-sector truncations,
//! spatial truncations to the unit disc, and the periodized double
//! polynomials with disjoint positive spectra.
//!
//! Radii are in lattice units; the pipeline itself runs on the unit torus,
//! where lattice and physical frequencies coincide.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::demeter::{annulus_field, mollifier_kernel_with, mollify_with, AnnulusSpec, MollifierSpec};
use crate::directional::{halfplane_closed, Direction, DirectionFan, Sector, SectorTest};
use crate::spectral::{
    dft2_forward_with, dft2_inverse_with, eval_terms_on_grid, Field2D, GridSpec2D,
    PartialSumMax, Spectrum2D, C64,
};
use crate::{Error, Exec, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    pub fan: DirectionFan,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub angular_margin: f64,
}

/// Precomputed membership tests for one k.
#[derive(Clone, Copy, Debug)]
struct BandTests {
    plus: SectorTest,
    minus: SectorTest,
    inner: f64,
    outer: f64,
}

impl BandTests {
    /// +1 on D_k⁺, -1 on D_k⁻, 0 elsewhere.
    fn weight(&self, x1: f64, x2: f64) -> f64 {
        let r = x1.hypot(x2);
        if r < self.inner || r >= self.outer {
            return 0.0;
        }
        if self.plus.contains(x1, x2) {
            1.0
        } else if self.minus.contains(x1, x2) {
            -1.0
        } else {
            0.0
        }
    }
}

impl BandSpec {
    pub fn new(fan: DirectionFan, inner_radius: f64, outer_radius: f64, angular_margin: f64) -> Result<Self> {
        if !(inner_radius >= 0.0 && outer_radius > inner_radius) {
            return Err(Error::InvalidArgument(format!(
                "band radii need 0 <= {inner_radius} < {outer_radius}"
            )));
        }
        let gap = PI / fan.count() as f64;
        if !(angular_margin >= 0.0 && 2.0 * angular_margin < gap) {
            return Err(Error::MarginTooWide { margin: angular_margin, gap });
        }
        Ok(BandSpec { fan, inner_radius, outer_radius, angular_margin })
    }

    /// Inner radius 2N, outer radius M/4, margin π/(8N).
    pub fn desk(n: usize, samples: usize) -> Result<Self> {
        Self::new(DirectionFan::new(n), 2.0 * n as f64, samples as f64 / 4.0, PI / (8.0 * n as f64))
    }

    pub fn count(&self) -> usize {
        self.fan.count()
    }

    fn tests(&self, k: usize) -> BandTests {
        let (a, b) = (self.fan.theta(k - 1), self.fan.theta(k));
        let m = self.angular_margin;
        BandTests {
            plus: SectorTest::new(Sector::new(b - m, a + m)),
            minus: SectorTest::new(Sector::new(a + m, b - m)),
            inner: self.inner_radius,
            outer: self.outer_radius,
        }
    }

    /// f_k multiplier: +1 on D_k⁺, -1 on D_k⁻.
    pub fn truncated_weight(&self, k: usize, n1: i64, n2: i64) -> f64 {
        self.tests(k).weight(n1 as f64, n2 as f64)
    }

    pub fn in_region(&self, k: usize, n1: i64, n2: i64) -> bool {
        self.truncated_weight(k, n1, n2) != 0.0
    }

    /// Cells Δ_n = [n₁, n₁+1) × [n₂, n₂+1) whose four corners or center
    /// fall in D_k, sorted.
    pub fn cells(&self, k: usize) -> Vec<(i64, i64)> {
        let t = self.tests(k);
        let r = self.outer_radius.ceil() as i64 + 1;
        let mut out = Vec::new();
        for n1 in -r..=r {
            for n2 in -r..=r {
                let (a, b) = (n1 as f64, n2 as f64);
                let probes = [(a, b), (a + 1.0, b), (a, b + 1.0), (a + 1.0, b + 1.0), (a + 0.5, b + 0.5)];
                if probes.iter().any(|&(x, y)| t.weight(x, y) != 0.0) {
                    out.push((n1, n2));
                }
            }
        }
        out
    }

    /// All U_k, rejecting the run when two of them share a cell.
    pub fn disjoint_cells(&self) -> Result<Vec<Vec<(i64, i64)>>> {
        let mut owner: HashMap<(i64, i64), usize> = HashMap::new();
        let mut all = Vec::with_capacity(self.count());
        for k in 1..=self.count() {
            let c = self.cells(k);
            for &n in &c {
                if let Some(&a) = owner.get(&n) {
                    return Err(Error::CellOverlap { a, b: k, n });
                }
                owner.insert(n, k);
            }
            all.push(c);
        }
        Ok(all)
    }
}

/// g_k multiplier: 1 on S_k⁺ = S(θ_k, θ_{k-1}), -1 on S_k⁻ = S(θ_{k-1}, θ_k).
pub fn band_weight(fan: &DirectionFan, k: usize) -> impl Fn(i64, i64) -> f64 {
    let (a, b) = (fan.theta(k - 1), fan.theta(k));
    let plus = SectorTest::new(Sector::new(b, a));
    let minus = SectorTest::new(Sector::new(a, b));
    move |n1, n2| {
        let (x, y) = (n1 as f64, n2 as f64);
        if plus.contains(x, y) {
            1.0
        } else if minus.contains(x, y) {
            -1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    RawBand,
    Truncated,
    Spatial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandFamily {
    pub members: Vec<Field2D>,
    pub provenance: Provenance,
}

impl BandFamily {
    pub fn majorant_ratio(&self) -> f64 {
        let mut acc = PartialSumMax::new(self.members.first().map_or(0, |f| f.values.len()));
        for f in &self.members {
            acc.push(&f.values);
        }
        acc.ratio()
    }

    pub fn sum(&self) -> Option<Field2D> {
        let mut it = self.members.iter();
        let mut s = it.next()?.clone();
        for f in it {
            s.add_assign(f);
        }
        Some(s)
    }
}

fn masked(s: &Spectrum2D, mask: impl Fn(i64, i64) -> f64) -> Spectrum2D {
    let mut out = s.clone();
    s.for_each_freq(|n1, n2, i| {
        let w = mask(n1, n2);
        out.coeffs[i] = if w == 0.0 { C64::new(0.0, 0.0) } else { s.coeffs[i] * w };
    });
    out
}

pub fn band_decompose(g: &Field2D, fan: &DirectionFan) -> BandFamily {
    band_decompose_with(g, fan, Exec::default())
}

pub fn band_decompose_with(g: &Field2D, fan: &DirectionFan, exec: Exec) -> BandFamily {
    let s = dft2_forward_with(g, exec);
    let members = (1..=fan.count())
        .map(|k| dft2_inverse_with(&masked(&s, band_weight(fan, k)), exec))
        .collect();
    BandFamily { members, provenance: Provenance::RawBand }
}

/// max_m ‖T_{Γ_{θm}} g - T_{Γ_0} g + Σ_{k≤m} g_k‖₂ / ‖g‖₂ with closed
/// half-planes, the two sides computed separately.
pub fn telescoping_defect(g: &Field2D, fam: &BandFamily, fan: &DirectionFan, exec: Exec) -> f64 {
    let s = dft2_forward_with(g, exec);
    let half = |theta: f64| {
        let d = Direction::new(theta);
        dft2_inverse_with(&masked(&s, |a, b| halfplane_closed(d, a, b)), exec)
    };
    let t0 = half(0.0);
    let mut run = Field2D::zeros(g.spec);
    let mut worst = 0.0f64;
    for (m, gk) in fam.members.iter().enumerate() {
        run.add_assign(gk);
        let mut d = half(fan.theta(m + 1)).sub(&t0);
        d.add_assign(&run);
        worst = worst.max(d.l2_norm());
    }
    let norm = g.l2_norm();
    if norm == 0.0 {
        0.0
    } else {
        worst / norm
    }
}

pub fn annular_truncate(g: &Field2D, b: &BandSpec) -> Result<BandFamily> {
    annular_truncate_with(g, b, Exec::default())
}

pub fn annular_truncate_with(g: &Field2D, b: &BandSpec, exec: Exec) -> Result<BandFamily> {
    let b = BandSpec::new(b.fan.clone(), b.inner_radius, b.outer_radius, b.angular_margin)?;
    let s = dft2_forward_with(g, exec);
    let members = (1..=b.count())
        .map(|k| {
            let t = b.tests(k);
            dft2_inverse_with(&masked(&s, |n1, n2| t.weight(n1 as f64, n2 as f64)), exec)
        })
        .collect();
    Ok(BandFamily { members, provenance: Provenance::Truncated })
}

/// Multiplies by the indicator of the open disc of radius 1/2.
pub fn disc_truncate(f: &Field2D) -> Field2D {
    let spec = f.spec;
    let m = spec.samples;
    let mut out = f.clone();
    for i in 0..m {
        let x1 = spec.coord(i);
        for j in 0..m {
            if x1.hypot(spec.coord(j)) >= 0.5 {
                out.values[i * m + j] = C64::new(0.0, 0.0);
            }
        }
    }
    out
}

pub fn spatial_truncate(fam: &BandFamily) -> Result<BandFamily> {
    if fam.provenance != Provenance::Truncated {
        return Err(Error::InvalidArgument(format!(
            "spatial truncation needs a truncated family, got {:?}",
            fam.provenance
        )));
    }
    Ok(BandFamily { members: fam.members.iter().map(disc_truncate).collect(), provenance: Provenance::Spatial })
}

/// ‖r̂_k · 1_{outside D_k}‖₂ for each member.
pub fn leakage(fam: &BandFamily, b: &BandSpec, exec: Exec) -> Vec<f64> {
    fam.members
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = dft2_forward_with(r, exec);
            let mut acc = 0.0;
            s.for_each_freq(|n1, n2, j| {
                if !b.in_region(i + 1, n1, n2) {
                    acc += s.coeffs[j].norm_sqr();
                }
            });
            acc.sqrt() / s.spec.side_length
        })
        .collect()
}

/// Sparse Σ a_n e^{2πi n·x} on 𝕋², terms sorted by frequency.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DoublePolynomial {
    pub terms: Vec<((i64, i64), C64)>,
}

impl DoublePolynomial {
    pub fn l2_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn spectrum(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.terms.iter().map(|&(n, _)| n)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DoublePolynomialFamily {
    pub members: Vec<DoublePolynomial>,
}

impl DoublePolynomialFamily {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.members.iter().all(|p| p.spectrum().all(|n| seen.insert(n)))
    }

    /// (min, max) over all coordinates of all spectra.
    pub fn coord_range(&self) -> Option<(i64, i64)> {
        let mut it = self.members.iter().flat_map(|p| p.spectrum()).flat_map(|(a, b)| [a, b]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Majorant ratio of the family evaluated on a grid of the unit torus.
    pub fn majorant_ratio(&self, samples: usize, exec: Exec) -> Result<f64> {
        let grid = GridSpec2D::new(1.0, samples)?;
        let mut acc = PartialSumMax::new(grid.len());
        for p in &self.members {
            acc.push(&eval_terms_on_grid(grid, p.terms.iter().copied(), exec).values);
        }
        Ok(acc.ratio())
    }
}

/// Halton point i in bases 2 and 3; index 0 is the origin.
pub fn halton(i: usize) -> (f64, f64) {
    fn radical(mut i: usize, base: usize) -> f64 {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    (radical(i, 2), radical(i, 3))
}

/// Spectrum of r(x)·e^{-2πi u·x}, i.e. n ↦ r̂(n + u).
fn offset_spectrum(r: &Field2D, u: (f64, f64), exec: Exec) -> Spectrum2D {
    let spec = r.spec;
    let m = spec.samples;
    let l = spec.side_length;
    let e: Vec<(C64, C64)> = (0..m)
        .map(|i| {
            let x = spec.coord(i);
            (C64::from_polar(1.0, -TAU * u.0 * x / l), C64::from_polar(1.0, -TAU * u.1 * x / l))
        })
        .collect();
    let mut w = r.clone();
    for i in 0..m {
        for j in 0..m {
            w.values[i * m + j] *= e[i].0 * e[j].1;
        }
    }
    dft2_forward_with(&w, exec)
}

/// Retained coefficients on `cells` and the discarded energy ‖q(u,·)‖₂².
fn periodize_one(r: &Field2D, u: (f64, f64), cells: &[(i64, i64)], exec: Exec) -> (DoublePolynomial, f64, Spectrum2D) {
    let s = offset_spectrum(r, u, exec);
    let l2 = s.spec.side_length * s.spec.side_length;
    let total = s.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / l2;
    let terms: Vec<_> = cells
        .iter()
        .map(|&(a, b)| ((a, b), s.get(a, b) / s.spec.side_length))
        .filter(|(_, c)| *c != C64::new(0.0, 0.0))
        .collect();
    let kept: f64 = terms.iter().map(|(_, c)| c.norm_sqr()).sum();
    (DoublePolynomial { terms }, (total - kept).max(0.0), s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Periodized {
    pub family: DoublePolynomialFamily,
    pub tails: Vec<f64>,
    pub offset: (f64, f64),
}

impl Periodized {
    pub fn objective(&self) -> f64 {
        self.tails.iter().sum()
    }
}

pub fn periodize_offset(fam: &BandFamily, b: &BandSpec, u: (f64, f64), exec: Exec) -> Result<Periodized> {
    if fam.provenance != Provenance::Spatial {
        return Err(Error::InvalidArgument("periodization needs a spatial family".into()));
    }
    let cells = b.disjoint_cells()?;
    let mut members = Vec::new();
    let mut tails = Vec::new();
    for (r, c) in fam.members.iter().zip(&cells) {
        let (p, t, _) = periodize_one(r, u, c, exec);
        members.push(p);
        tails.push(t);
    }
    Ok(Periodized { family: DoublePolynomialFamily { members }, tails, offset: u })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OffsetChoice {
    pub offset: (f64, f64),
    pub objective: f64,
    pub mean: f64,
    pub objectives: Vec<f64>,
}

fn choose(objectives: Vec<f64>) -> (usize, OffsetChoice) {
    let best = objectives
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < objectives[b] { i } else { b });
    let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
    (best, OffsetChoice { offset: halton(best), objective: objectives[best], mean, objectives })
}

pub fn select_offset(fam: &BandFamily, b: &BandSpec, candidates: usize, exec: Exec) -> Result<OffsetChoice> {
    if candidates == 0 {
        return Err(Error::InvalidArgument("need at least one offset candidate".into()));
    }
    let objs = (0..candidates)
        .map(|c| periodize_offset(fam, b, halton(c), exec).map(|p| p.objective()))
        .collect::<Result<Vec<_>>>()?;
    Ok(choose(objs).1)
}

pub fn modulate_positive(fam: &DoublePolynomialFamily, shift: (i64, i64)) -> Result<DoublePolynomialFamily> {
    let members: Vec<DoublePolynomial> = fam
        .members
        .iter()
        .map(|p| DoublePolynomial {
            terms: p.terms.iter().map(|&((a, b), c)| ((a + shift.0, b + shift.1), c)).collect(),
        })
        .collect();
    let out = DoublePolynomialFamily { members };
    match out.coord_range() {
        Some((lo, _)) if lo < 1 => Err(Error::ShiftTooSmall(shift)),
        _ => Ok(out),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub n: usize,
    pub samples: usize,
    /// The source lives on B(b/source_ratio, b) with b = beta/(2π·inner).
    pub beta: f64,
    pub source_ratio: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub angular_margin: f64,
    pub candidates: usize,
}

impl PipelineConfig {
    pub fn desk(n: usize) -> Self {
        let samples = 32 * n;
        PipelineConfig {
            n,
            samples,
            beta: 0.5,
            source_ratio: 8.0,
            inner_radius: 2.0 * n as f64,
            outer_radius: samples as f64 / 4.0,
            angular_margin: PI / (8.0 * n as f64),
            candidates: default_candidates(n),
        }
    }

    pub fn grid(&self) -> Result<GridSpec2D> {
        GridSpec2D::new(1.0, self.samples)
    }

    pub fn band(&self) -> Result<BandSpec> {
        BandSpec::new(DirectionFan::new(self.n), self.inner_radius, self.outer_radius, self.angular_margin)
    }

    /// Shift sending every U_k into ℤ₊².
    pub fn shift(&self) -> i64 {
        2 * self.outer_radius.ceil() as i64
    }
}

/// Fewer offset candidates as each one gets more expensive.
pub fn default_candidates(n: usize) -> usize {
    match n {
        0..=8 => 64,
        9..=16 => 16,
        17..=32 => 8,
        _ => 4,
    }
}

/// 1/|x| on a small annulus around the origin, then mollified at scale
/// `outer_radius`.
pub fn pipeline_source(cfg: &PipelineConfig, exec: Exec) -> Result<Field2D> {
    let grid = cfg.grid()?;
    let b = cfg.beta / (TAU * cfg.inner_radius);
    let f = annulus_field(AnnulusSpec::new(b / cfg.source_ratio, b)?, grid)?;
    let k = mollifier_kernel_with(MollifierSpec::new(cfg.outer_radius, 4)?, grid, exec)?;
    mollify_with(&f, &k, exec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub n: usize,
    pub samples: usize,
    pub g_norm: f64,
    pub band_ratio: f64,
    pub truncated_ratio: f64,
    pub spatial_ratio: f64,
    pub polynomial_ratio: f64,
    /// |‖Σ g_k‖ - ‖g‖| / ‖g‖
    pub energy_defect: f64,
    /// (Σ‖f_k - g_k‖²)^{1/2} / ‖g‖
    pub truncation: f64,
    /// (Σ‖r̂_k 1_{outside D_k}‖²)^{1/2} / ‖g‖
    pub leakage: f64,
    /// (Σ‖q_k(u₀,·)‖²)^{1/2} / ‖g‖
    pub tail: f64,
    pub offset: OffsetChoice,
    pub shift: i64,
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    /// p_k with spectra G_k = U_k + shift.
    pub family: DoublePolynomialFamily,
}

/// The whole band stage, streamed over k so that only the retained
/// coefficients are kept.
pub fn run_pipeline(cfg: &PipelineConfig, exec: Exec) -> Result<PipelineOutput> {
    let grid = cfg.grid()?;
    let band = cfg.band()?;
    let cells = band.disjoint_cells()?;
    let g = pipeline_source(cfg, exec)?;
    let gs = dft2_forward_with(&g, exec);
    let g_norm = g.l2_norm();
    let cand = cfg.candidates.max(1);
    let offsets: Vec<_> = (0..cand).map(halton).collect();

    let len = grid.len();
    let (mut acc_g, mut acc_f, mut acc_r) = (PartialSumMax::new(len), PartialSumMax::new(len), PartialSumMax::new(len));
    let mut kept: Vec<Vec<DoublePolynomial>> = vec![Vec::new(); cand];
    let mut objectives = vec![0.0; cand];
    let (mut trunc_sq, mut leak_sq) = (0.0, 0.0);

    for k in 1..=band.count() {
        let gk_s = masked(&gs, band_weight(&band.fan, k));
        let gk = dft2_inverse_with(&gk_s, exec);
        acc_g.push(&gk.values);
        drop(gk);
        let t = band.tests(k);
        let fk_s = masked(&gs, |a, b| t.weight(a as f64, b as f64));
        trunc_sq += fk_s.coeffs.iter().zip(&gk_s.coeffs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        drop(gk_s);
        let fk = dft2_inverse_with(&fk_s, exec);
        drop(fk_s);
        acc_f.push(&fk.values);
        let rk = disc_truncate(&fk);
        drop(fk);
        acc_r.push(&rk.values);
        for (c, &u) in offsets.iter().enumerate() {
            let (p, tail, s) = periodize_one(&rk, u, &cells[k - 1], exec);
            if c == 0 {
                s.for_each_freq(|n1, n2, j| {
                    if !band.in_region(k, n1, n2) {
                        leak_sq += s.coeffs[j].norm_sqr();
                    }
                });
            }
            objectives[c] += tail;
            kept[c].push(p);
        }
    }

    let (best, offset) = choose(objectives);
    let family = DoublePolynomialFamily { members: std::mem::take(&mut kept[best]) };
    drop(kept);
    let polynomial_ratio = family.majorant_ratio(cfg.samples, exec)?;
    let shift = cfg.shift();
    let shifted = modulate_positive(&family, (shift, shift))?;
    let sum_norm = grid.spacing() * acc_g.sum.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let report = PipelineReport {
        n: cfg.n,
        samples: cfg.samples,
        g_norm,
        band_ratio: acc_g.ratio(),
        truncated_ratio: acc_f.ratio(),
        spatial_ratio: acc_r.ratio(),
        polynomial_ratio,
        energy_defect: (sum_norm - g_norm).abs() / g_norm,
        truncation: trunc_sq.sqrt() / g_norm,
        leakage: leak_sq.sqrt() / g_norm,
        tail: offset.objective.sqrt() / g_norm,
        offset,
        shift,
        cells: cells.iter().map(Vec::len).sum(),
    };
    Ok(PipelineOutput { report, family: shifted })
}
