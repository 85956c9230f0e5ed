//! Scaled-down divergence construction: Fejér localizers, quarter rotations,
//! level selection, independent nested sets, the inductive rearrangement and
//! the staged blow-up experiment.
//!
//! Every level reuses one block shape computed at reference scale; level k
//! only rescales it to intervals of length 1/ν_k.

use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;

use crate::majorant::{build_block_witness, small_witness, MultiplierSequence, Permutation};
use crate::seed::{task_id, task_rng};
use crate::spectral::{frac_mul, TrigPolynomial1D, C64};
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!("bad interval [{a}, {b})")));
        }
        Ok(Interval { a, b })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_full(&self) -> bool {
        self.len() >= 1.0
    }

    /// Membership on 𝕋.
    pub fn contains(&self, x: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let t = (x - self.a).rem_euclid(1.0);
        t < self.len()
    }
}

fn margins(n_stand: f64) -> (f64, f64) {
    let s = n_stand.sqrt();
    (1.0 / (4.0 * s), 1.0 / (3.0 * s))
}

/// R = ∫ K_D(· - t) dt over Δ shrunk by 1/(4√N) at both ends; K_D is the
/// unit-mass Fejér kernel.
pub fn fejer_localizer(delta: Interval, degree: usize, n_stand: f64) -> Result<TrigPolynomial1D> {
    if delta.is_full() {
        return Ok(TrigPolynomial1D::from_terms([(0, C64::new(1.0, 0.0))]));
    }
    let min = 1.0 / n_stand.sqrt();
    if !(delta.len() >= min) {
        return Err(Error::IntervalTooSmall { len: delta.len(), min });
    }
    let (shrink, _) = margins(n_stand);
    let (a, b) = (delta.a + shrink, delta.b - shrink);
    let d = degree as i64;
    Ok(TrigPolynomial1D::from_terms((-d..=d).map(|f| {
        let taper = 1.0 - f.abs() as f64 / (d + 1) as f64;
        let c = if f == 0 {
            C64::new(b - a, 0.0)
        } else {
            let e = |x: f64| C64::from_polar(1.0, -TAU * frac_mul(f, x));
            (e(a) - e(b)) / C64::new(0.0, TAU * f as f64)
        };
        (f, c * taper)
    })))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizerCheck {
    pub core_min: f64,
    pub exterior_max: f64,
}

/// Sampled min of R over the core Δ ∓ 1/(3√N) and max outside Δ.
pub fn localizer_check(r: &TrigPolynomial1D, delta: Interval, n_stand: f64, samples: usize) -> LocalizerCheck {
    let vals = r.sample_equispaced(samples);
    let (_, core) = margins(n_stand);
    let inner = Interval { a: delta.a + core, b: delta.b - core };
    let mut out = LocalizerCheck { core_min: f64::INFINITY, exterior_max: 0.0 };
    for (t, v) in vals.iter().enumerate() {
        let x = t as f64 / samples as f64;
        if delta.is_full() || (inner.a < inner.b && inner.contains(x)) {
            out.core_min = out.core_min.min(v.re);
        }
        if !delta.contains(x) {
            out.exterior_max = out.exterior_max.max(v.re.abs());
        }
    }
    out
}

pub const QUARTERS: [C64; 4] = [
    C64 { re: 1.0, im: 0.0 },
    C64 { re: 0.0, im: 1.0 },
    C64 { re: -1.0, im: 0.0 },
    C64 { re: 0.0, im: -1.0 },
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuarterChoice {
    pub index: usize,
    pub alpha: C64,
    /// #{Re(α z) > λ/√2} per rotation
    pub counts: [usize; 4],
    /// #{|z| > λ}
    pub modulus_count: usize,
}

impl QuarterChoice {
    pub fn pigeonhole_holds(&self) -> bool {
        4 * self.counts[self.index] >= self.modulus_count
    }
}

/// Rotation whose real-part exceedance at λ/√2 is largest; first index wins ties.
pub fn quarter_select(values: &[C64], lambda: f64) -> QuarterChoice {
    let cut = lambda / 2f64.sqrt();
    let mut counts = [0usize; 4];
    let mut modulus_count = 0;
    for z in values {
        if z.norm() > lambda {
            modulus_count += 1;
        }
        for (c, a) in counts.iter_mut().zip(QUARTERS) {
            if (a * z).re > cut {
                *c += 1;
            }
        }
    }
    let index = (0..4).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    QuarterChoice { index, alpha: QUARTERS[index], counts, modulus_count }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub coeffs: TrigPolynomial1D,
    pub sigma: Permutation,
}

/// U_n(x) = 4α e^{2πilx} R(x) b_{σ(n)} e^{2πiσ(n)·carrier·x}, kept factored.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedBlock {
    pub delta: Interval,
    pub offset: i64,
    pub carrier: i64,
    pub alpha: C64,
    pub localizer: TrigPolynomial1D,
    /// (σ(n), b_{σ(n)}) for n = 1..
    pub order: Vec<(i64, C64)>,
    pub quarter: Option<QuarterChoice>,
}

impl LocalizedBlock {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn terms(&self) -> Vec<TrigPolynomial1D> {
        self.order
            .iter()
            .map(|&(j, b)| {
                let s = self.alpha * b * 4.0;
                TrigPolynomial1D::from_terms(
                    self.localizer.terms().iter().map(|&(f, r)| (self.offset + j * self.carrier + f, r * s)),
                )
            })
            .collect()
    }

    pub fn localizer_at(&self, x: f64) -> f64 {
        self.localizer.eval(x).re
    }

    /// Writes Σ_{n≤m} U_n(x) into `out[m-1]`, given R(x).
    pub fn partials_with(&self, x: f64, r: f64, out: &mut [C64]) {
        let base = C64::from_polar(4.0 * r, TAU * frac_mul(self.offset, x)) * self.alpha;
        let mut acc = C64::new(0.0, 0.0);
        for (o, &(j, b)) in out.iter_mut().zip(&self.order) {
            acc += base * b * C64::from_polar(1.0, TAU * frac_mul(j * self.carrier, x));
            *o = acc;
        }
    }

    /// Σ|f||a_f| over the spectrum of each partial sum S_m.
    pub fn holder_sums(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.order
            .iter()
            .map(|&(j, b)| {
                acc += self
                    .localizer
                    .terms()
                    .iter()
                    .map(|&(f, r)| (self.offset + j * self.carrier + f).abs() as f64 * 4.0 * b.norm() * r.norm())
                    .sum::<f64>();
                acc
            })
            .collect()
    }

    pub fn max_freq(&self) -> i64 {
        let d = self.localizer.degree();
        self.order.iter().map(|&(j, _)| self.offset + j * self.carrier + d).max().unwrap_or(0)
    }
}

/// Samples `count` midpoints of equal cells of Δ.
fn cell_points(delta: Interval, count: usize) -> impl Iterator<Item = f64> {
    let h = delta.len() / count as f64;
    (0..count).map(move |t| delta.a + (t as f64 + 0.5) * h)
}

pub fn localized_block(
    delta: Interval,
    offset: i64,
    witness: &Witness,
    carrier: i64,
    degree: usize,
    n_stand: f64,
    lambda: f64,
    samples: usize,
) -> Result<LocalizedBlock> {
    let wmax = witness.coeffs.max_freq().unwrap_or(0);
    let needed = 2 * (degree as i64 + wmax);
    if carrier < needed {
        return Err(Error::CarrierTooSmall { carrier, needed });
    }
    let localizer = fejer_localizer(delta, degree, n_stand)?;
    let order: Vec<(i64, C64)> = witness
        .sigma
        .forward()
        .iter()
        .map(|&j| (j as i64, witness.coeffs.coeff(j as i64)))
        .filter(|t| t.1 != C64::new(0.0, 0.0))
        .collect();
    let mut block = LocalizedBlock { delta, offset, carrier, alpha: QUARTERS[0], localizer, order, quarter: None };
    if block.is_empty() {
        return Ok(block);
    }
    let mut buf = vec![C64::new(0.0, 0.0); block.len()];
    let peaks: Vec<C64> = cell_points(delta, samples)
        .map(|x| {
            block.partials_with(x, block.localizer_at(x), &mut buf);
            buf.iter().copied().fold(C64::new(0.0, 0.0), |m, z| if z.norm() > m.norm() { z } else { m })
        })
        .collect();
    let q = quarter_select(&peaks, lambda);
    block.alpha = q.alpha;
    block.quarter = Some(q);
    Ok(block)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockStats {
    /// |{x ∈ Δ: max_m Re S_m(x) > λ}| / |Δ|
    pub exceed_fraction: f64,
    /// max over sampled x ∉ Δ of Σ_n |U_n(x)|
    pub off_tail: f64,
    /// ‖Σ_n U_n‖₂ / √|Δ|
    pub mass: f64,
    pub pigeonhole: bool,
}

pub fn block_stats(block: &LocalizedBlock, lambda: f64, inside: usize, outside: usize) -> BlockStats {
    let mut buf = vec![C64::new(0.0, 0.0); block.len()];
    let mut hits = 0usize;
    for x in cell_points(block.delta, inside) {
        block.partials_with(x, block.localizer_at(x), &mut buf);
        if buf.iter().any(|z| z.re > lambda) {
            hits += 1;
        }
    }
    let coef: f64 = block.order.iter().map(|t| 4.0 * t.1.norm()).sum();
    let mut off_tail = 0.0f64;
    for t in 0..outside {
        let x = t as f64 / outside as f64;
        if !block.delta.contains(x) {
            off_tail = off_tail.max(coef * block.localizer_at(x).abs());
        }
    }
    let mass = block.terms().iter().map(|u| u.l2_norm().powi(2)).sum::<f64>().sqrt() / block.delta.len().sqrt();
    BlockStats {
        exceed_fraction: hits as f64 / inside as f64,
        off_tail,
        mass,
        pigeonhole: block.quarter.as_ref().is_none_or(|q| q.pigeonhole_holds()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillationCheck {
    pub measured: f64,
    /// D^{3/2}·|Δ|·‖P‖₂
    pub scale: f64,
}

impl OscillationCheck {
    pub fn holds(&self, c: f64) -> bool {
        self.measured <= c * self.scale
    }
}

/// Sampled sup |P(x) - P(y)| over Δ against the degree-based scale.
pub fn oscillation_check(p: &TrigPolynomial1D, delta: Interval, samples: usize) -> OscillationCheck {
    let vals: Vec<C64> = (0..samples)
        .map(|t| p.eval(delta.a + delta.len() * t as f64 / (samples.max(2) - 1) as f64))
        .collect();
    let mut measured = 0.0f64;
    for (i, u) in vals.iter().enumerate() {
        for v in &vals[i + 1..] {
            measured = measured.max((u - v).norm());
        }
    }
    let d = p.degree() as f64;
    OscillationCheck { measured, scale: d.powf(1.5) * delta.len() * p.l2_norm() }
}

/// ν_k = ν₀·ratio^k.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleLadder {
    pub nu0: u64,
    pub ratio: u64,
    pub max_level: usize,
}

impl ScaleLadder {
    pub fn new(nu0: u64, ratio: u64, max_level: usize) -> Result<Self> {
        if nu0 == 0 || ratio <= 2 {
            return Err(Error::InvalidArgument("ladder needs ν₀ ≥ 1 and ratio > 2".into()));
        }
        Ok(ScaleLadder { nu0, ratio, max_level })
    }

    pub fn nu(&self, k: usize) -> BigInt {
        BigInt::from(self.nu0) * BigInt::from(self.ratio).pow(k as u32)
    }

    pub fn ln_nu(&self, k: usize) -> f64 {
        (self.nu0 as f64).ln() + k as f64 * (self.ratio as f64).ln()
    }

    /// w(ν_k) for k = 0..=last.
    pub fn weights(&self, w: MultiplierSequence, last: usize) -> Vec<f64> {
        (0..=last).map(|k| w.eval_ln(self.ln_nu(k))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GBranch {
    Direct,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GSet {
    pub members: Vec<usize>,
    pub branch: GBranch,
    pub half_sum: f64,
    pub full_sum: f64,
}

impl GSet {
    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }
}

/// G = {1 ≤ k ≤ K: w(ν_{k+1}) < bound·w(ν_k)}, with `wv[k] = w(ν_k)` for
/// k = 0..=K+1. Growth of Σ_{k∈G} ρ^k/w(ν_k) from K/2 to K certifies G.
pub fn select_g(wv: &[f64], rho: f64, bound: f64, growth: f64) -> Result<GSet> {
    if wv.len() < 3 {
        return Err(Error::InvalidArgument("need w(ν_k) for k = 0..=K+1 with K ≥ 1".into()));
    }
    let k_max = wv.len() - 2;
    let term = |k: usize| (k as f64 * rho.ln() - wv[k].ln()).exp();
    let members: Vec<usize> = (1..=k_max).filter(|&k| wv[k + 1] < bound * wv[k]).collect();
    let sum_g = |last: usize| members.iter().filter(|&&k| k <= last).map(|&k| term(k)).sum::<f64>();
    let half = (k_max / 2).max(1);
    let (h, f) = (sum_g(half), sum_g(k_max));
    if h > 0.0 && f >= growth * h {
        return Ok(GSet { members, branch: GBranch::Direct, half_sum: h, full_sum: f });
    }
    // Off G the terms contract by ρ/bound, so the G-sum dominates a fixed
    // fraction of the whole sum.
    let theta = rho / bound;
    if theta < 1.0 {
        let total = |last: usize| (1..=last).map(term).sum::<f64>();
        let lower = |last: usize| ((1.0 - theta) * total(last) - term(1)) / (1.0 - theta + rho);
        let (lh, lf) = (lower(half), lower(k_max));
        if lh > 0.0 && lf >= growth * lh {
            return Ok(GSet { members, branch: GBranch::Fallback, half_sum: lh, full_sum: lf });
        }
    }
    Err(Error::HorizonTooShort(k_max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Weights {
    /// t_k = ρ^k / w(ν_k), k = 1..=K (index 0 unused)
    pub terms: Vec<f64>,
    pub q: Vec<f64>,
    /// b_k = t_k / q_k on G, 0 elsewhere
    pub b: Vec<f64>,
    pub bounded: bool,
    pub divergence_growth: f64,
    pub convergent_tail: f64,
}

/// q_k = Σ_{j∈G, j≤k} t_j.
pub fn choose_weights(wv: &[f64], rho: f64, g: &GSet) -> Weights {
    let k_max = wv.len().saturating_sub(2);
    let mut terms = vec![0.0; k_max + 1];
    let mut q = vec![0.0; k_max + 1];
    let mut b = vec![0.0; k_max + 1];
    let mut acc = 0.0;
    for k in 1..=k_max {
        terms[k] = (k as f64 * rho.ln() - wv[k].ln()).exp();
        if g.contains(k) {
            acc += terms[k];
            b[k] = terms[k] / acc;
        }
        q[k] = acc;
    }
    let bounded = b.iter().all(|&x| x <= 1.0);
    let partial = |last: usize| b[..=last].iter().sum::<f64>();
    let sq = |last: usize| (1..=last).filter(|&k| q[k] > 0.0).map(|k| terms[k] / (q[k] * q[k])).sum::<f64>();
    let half = (k_max / 2).max(1).min(k_max);
    Weights {
        divergence_growth: if partial(half) > 0.0 { partial(k_max) / partial(half) } else { 0.0 },
        convergent_tail: sq(k_max) - sq(half),
        terms,
        q,
        b,
        bounded,
    }
}

/// Children of a level interval that carry the block above λ/2 throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedBlock {
    pub ratio: u64,
    pub lambda: f64,
    /// continuation index per child, 0 when the child does not qualify
    pub continuation: Vec<u8>,
    /// Re S_m at the two child samples, for the recorded m
    pub child_values: Vec<[f32; 2]>,
    /// Re of the full block sum at all 2·ratio samples
    pub full: Vec<f32>,
    pub exceed_fraction: f64,
    pub max_oscillation: f64,
}

impl SharedBlock {
    pub fn qualifying(&self) -> usize {
        self.continuation.iter().filter(|&&m| m > 0).count()
    }
}

/// Child i of Δ is sampled at offsets i/r and (i + 1/2)/r; a child qualifies
/// for m when both samples minus the Hölder bound 2π|child|·Σ|f||a_f| stay
/// above λ/2.
pub fn qualify_children(block: &LocalizedBlock, ratio: u64, lambda: f64, exec: Exec) -> SharedBlock {
    let r = ratio as usize;
    let h = block.delta.len() / ratio as f64;
    let osc: Vec<f64> = block.holder_sums().iter().map(|s| TAU * h * s).collect();
    let nm = block.len();
    let chunk = 4096;
    let parts = exec.map(r.div_ceil(chunk), |c| {
        let mut buf = vec![C64::new(0.0, 0.0); nm];
        let mut re = vec![[0.0f64; 2]; nm];
        let mut out = Vec::with_capacity(chunk);
        let mut hits = 0usize;
        for i in c * chunk..((c + 1) * chunk).min(r) {
            let mut full = [0.0f32; 2];
            for (s, half) in [0.0, 0.5].into_iter().enumerate() {
                let x = block.delta.a + (i as f64 + half) * h;
                block.partials_with(x, block.localizer_at(x), &mut buf);
                for (m, z) in buf.iter().enumerate() {
                    re[m][s] = z.re;
                }
                if buf.iter().any(|z| z.re > lambda) {
                    hits += 1;
                }
                full[s] = buf.last().map_or(0.0, |z| z.re) as f32;
            }
            let mut best = (0u8, f64::NEG_INFINITY, [0.0f32; 2]);
            for m in 0..nm {
                let low = re[m][0].min(re[m][1]) - osc[m];
                if low > lambda / 2.0 && low > best.1 {
                    best = ((m + 1) as u8, low, [re[m][0] as f32, re[m][1] as f32]);
                }
            }
            out.push((best.0, best.2, full));
        }
        (out, hits)
    });
    let mut shared = SharedBlock {
        ratio,
        lambda,
        continuation: Vec::with_capacity(r),
        child_values: Vec::with_capacity(r),
        full: Vec::with_capacity(2 * r),
        exceed_fraction: 0.0,
        max_oscillation: osc.iter().copied().fold(0.0, f64::max),
    };
    let mut hits = 0;
    for (rows, hh) in parts {
        hits += hh;
        for (m, v, f) in rows {
            shared.continuation.push(m);
            shared.child_values.push(v);
            shared.full.extend(f);
        }
    }
    shared.exceed_fraction = hits as f64 / (2 * r) as f64;
    shared
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSelection {
    /// child indices in 0..ratio forming E_{k,j} inside every Δ_{k,j}
    pub selected: Vec<u64>,
    /// m(k+1, ·) for each selected child
    pub continuation: Vec<u32>,
    #[serde(serialize_with = "ser_ratio")]
    pub density: BigRational,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

/// Level k = 1..=levels.len() is `levels[k-1]`; the same pattern repeats in
/// every interval of the level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NestedSelection {
    pub ladder: ScaleLadder,
    pub block_len: u32,
    pub levels: Vec<LevelSelection>,
}

impl NestedSelection {
    pub fn new(ladder: ScaleLadder, block_len: u32, levels: Vec<LevelSelection>) -> Result<Self> {
        for (i, l) in levels.iter().enumerate() {
            let sorted = l.selected.windows(2).all(|w| w[0] < w[1]);
            if !sorted || l.selected.iter().any(|&c| c >= ladder.ratio) || l.selected.len() != l.continuation.len() {
                return Err(Error::InconsistentLevels(format!("level {} selection", i + 1)));
            }
            if l.continuation.iter().any(|&m| m == 0 || m > block_len) {
                return Err(Error::InconsistentLevels(format!("level {} continuation outside 1..={block_len}", i + 1)));
            }
            if l.density != BigRational::new(BigInt::from(l.selected.len()), BigInt::from(ladder.ratio)) {
                return Err(Error::InconsistentLevels(format!("level {} density", i + 1)));
            }
        }
        Ok(NestedSelection { ladder, block_len, levels })
    }

    pub fn level(&self, k: usize) -> &LevelSelection {
        &self.levels[k - 1]
    }

    /// m for child `i` of a level-k interval, `block_len` when i ∉ E_k.
    pub fn reach(&self, k: usize, i: u64) -> (u32, bool) {
        let l = self.level(k);
        match l.selected.binary_search(&i) {
            Ok(p) => (l.continuation[p], true),
            Err(_) => (self.block_len, false),
        }
    }
}

/// Keeps the qualifying children with the smallest indices until each level
/// reaches its density.
pub fn build_nested_selection(ladder: ScaleLadder, shared: &SharedBlock, densities: &[BigRational], block_len: u32) -> Result<NestedSelection> {
    let r = BigInt::from(ladder.ratio);
    let mut levels = Vec::with_capacity(densities.len());
    for (i, d) in densities.iter().enumerate() {
        if d <= &BigRational::zero() || d > &BigRational::one() {
            return Err(Error::InvalidArgument(format!("density {d} at level {} outside (0, 1]", i + 1)));
        }
        let scaled = d * BigRational::from_integer(r.clone());
        if !scaled.is_integer() {
            return Err(Error::InvalidArgument(format!("density {d} is not a multiple of 1/{}", ladder.ratio)));
        }
        let needed: usize = scaled.to_integer().try_into().map_err(|_| Error::InvalidArgument("density".into()))?;
        let found = shared.qualifying();
        if found < needed {
            return Err(Error::DensityUnreachable { level: i + 1, found, needed });
        }
        let (selected, continuation): (Vec<u64>, Vec<u32>) = shared
            .continuation
            .iter()
            .enumerate()
            .filter(|t| *t.1 > 0)
            .take(needed)
            .map(|(c, &m)| (c as u64, m as u32))
            .unzip();
        levels.push(LevelSelection { selected, continuation, density: d.clone() });
    }
    NestedSelection::new(ladder, block_len, levels)
}

/// A set with the given period whose pattern is a sorted union of runs
/// [s·unit, e·unit) inside [0, period).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSet {
    pub period: BigRational,
    pub unit: BigRational,
    pub runs: Vec<(u64, u64)>,
}

impl PeriodicSet {
    /// E_k: period 1/ν_k, selected children of length 1/ν_{k+1}.
    pub fn level(sel: &NestedSelection, k: usize) -> Self {
        let nu = sel.ladder.nu(k);
        let unit = BigRational::new(BigInt::one(), &nu * BigInt::from(sel.ladder.ratio));
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for &c in &sel.level(k).selected {
            match runs.last_mut() {
                Some(r) if r.1 == c => r.1 = c + 1,
                _ => runs.push((c, c + 1)),
            }
        }
        PeriodicSet { period: BigRational::new(BigInt::one(), nu), unit, runs }
    }

    pub fn measure_per_period(&self) -> BigRational {
        &self.unit * BigInt::from(self.runs.iter().map(|r| r.1 - r.0).sum::<u64>())
    }

    fn run(&self, base: &BigRational, r: (u64, u64)) -> (BigRational, BigRational) {
        (base + &self.unit * BigInt::from(r.0), base + &self.unit * BigInt::from(r.1))
    }
}

/// |[lo, hi) ∩ ⋂ sets| in exact arithmetic. Sets are ordered coarse to fine
/// and each period must be a multiple of the next one.
pub fn intersection_measure(sets: &[PeriodicSet], lo: &BigRational, hi: &BigRational) -> Result<BigRational> {
    for w in sets.windows(2) {
        if !(&w[0].period / &w[1].period).is_integer() {
            return Err(Error::InconsistentLevels("periods are not nested".into()));
        }
    }
    let mut full = vec![BigRational::zero(); sets.len()];
    for i in (0..sets.len()).rev() {
        full[i] = match sets.get(i + 1) {
            None => sets[i].measure_per_period(),
            Some(next) if (&sets[i].unit / &next.period).is_integer() => {
                sets[i].measure_per_period() / &next.period * &full[i + 1]
            }
            Some(_) => {
                let z = BigRational::zero();
                let mut t = BigRational::zero();
                for &r in &sets[i].runs {
                    let (s, e) = sets[i].run(&z, r);
                    t += measure_in(sets, i + 1, &full, &s, &e);
                }
                t
            }
        };
    }
    Ok(measure_in(sets, 0, &full, lo, hi))
}

/// `full[i]` holds the measure of one period of sets[i] ∩ sets[i+1..].
fn measure_in(sets: &[PeriodicSet], i: usize, full: &[BigRational], lo: &BigRational, hi: &BigRational) -> BigRational {
    if lo >= hi {
        return BigRational::zero();
    }
    let Some(a) = sets.get(i) else {
        return hi - lo;
    };
    let p = &a.period;
    let first = (lo / p).ceil();
    let last = (hi / p).floor();
    let piece = |base: &BigRational, from: &BigRational, to: &BigRational| {
        let mut t = BigRational::zero();
        for &r in &a.runs {
            let (s, e) = a.run(base, r);
            let (x, y) = (if &s > from { s } else { from.clone() }, if &e < to { e } else { to.clone() });
            if x < y {
                t += measure_in(sets, i + 1, full, &x, &y);
            }
        }
        t
    };
    if first > last {
        return piece(&((lo / p).floor() * p), lo, hi);
    }
    let mut total = (&last - &first) * &full[i];
    let (head, tail) = (&first * p, &last * p);
    if lo < &head {
        total += piece(&(&head - p), lo, &head);
    }
    if &tail < hi {
        total += piece(&tail, &tail, hi);
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub subsets: usize,
    pub failures: usize,
    pub levels: usize,
}

/// |⋂_{k∈F} E_k| = Π d_k for every nonempty F among the first `max_levels`
/// levels, plus all pairs and the full set.
pub fn independence_check(sel: &NestedSelection, max_levels: usize) -> Result<IndependenceReport> {
    let n = sel.levels.len();
    let sets: Vec<PeriodicSet> = (1..=n).map(|k| PeriodicSet::level(sel, k)).collect();
    let mut families: Vec<Vec<usize>> = Vec::new();
    let small = n.min(max_levels);
    for mask in 1u64..(1u64 << small) {
        families.push((0..small).filter(|&i| mask >> i & 1 == 1).collect());
    }
    for a in 0..n {
        for b in a + 1..n {
            if b >= small {
                families.push(vec![a, b]);
            }
        }
    }
    if n > small {
        families.push((0..n).collect());
    }
    let (zero, one) = (BigRational::zero(), BigRational::one());
    let mut failures = 0;
    for f in &families {
        let chosen: Vec<PeriodicSet> = f.iter().map(|&i| sets[i].clone()).collect();
        let got = intersection_measure(&chosen, &zero, &one)?;
        let want = f.iter().fold(BigRational::one(), |acc, &i| acc * &sel.levels[i].density);
        if got != want {
            failures += 1;
        }
    }
    Ok(IndependenceReport { subsets: families.len(), failures, levels: n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Placement {
    Original,
    AfterFullBlock,
    AfterContinuationIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TermId {
    pub k: usize,
    pub j: u64,
    pub n: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RearrangedSeries {
    pub levels: (usize, usize),
    pub terms: Vec<(TermId, Placement)>,
}

impl RearrangedSeries {
    /// Each generated term appears exactly once.
    pub fn is_permutation(&self, sel: &NestedSelection) -> bool {
        let mut ids: Vec<TermId> = self.terms.iter().map(|t| t.0).collect();
        ids.sort();
        let mut want = Vec::new();
        for k in self.levels.0..=self.levels.1 {
            let nu: u64 = sel.ladder.nu(k).try_into().unwrap_or(u64::MAX);
            for j in 1..=nu {
                for n in 1..=sel.block_len {
                    want.push(TermId { k, j, n });
                }
            }
        }
        ids == want
    }

    /// The shortest prefix of the point's own-interval subsequence that ends
    /// the window; `path[i]` is the interval index at level levels.0 + i.
    pub fn restricted_window(&self, sel: &NestedSelection, path: &[u64], last_child: u64) -> Vec<TermId> {
        let (k0, k1) = self.levels;
        let own: Vec<TermId> = self.terms.iter().map(|t| t.0).filter(|t| path[t.k - k0] == t.j).collect();
        let (end_m, _) = sel.reach(k1, last_child);
        let stop = TermId { k: k1, j: path[k1 - k0], n: end_m };
        let cut = own.iter().position(|t| *t == stop).map_or(0, |p| p + 1);
        own[..cut].to_vec()
    }
}

const TERM_BUDGET: u128 = 1 << 22;

/// Levels k0..=k1; children of a level-k term block follow U_{k,j,m} when
/// selected and U_{k,j,N} otherwise.
pub fn build_rearrangement(sel: &NestedSelection, k0: usize, k1: usize) -> Result<RearrangedSeries> {
    if k0 == 0 || k0 > k1 || k1 > sel.levels.len() {
        return Err(Error::InconsistentLevels(format!("levels {k0}..={k1} of {}", sel.levels.len())));
    }
    let count: u128 = (k0..=k1)
        .map(|k| u128::try_from(sel.ladder.nu(k)).unwrap_or(u128::MAX).saturating_mul(sel.block_len as u128))
        .fold(0u128, |a, b| a.saturating_add(b));
    if count > TERM_BUDGET {
        return Err(Error::InvalidArgument(format!("{count} terms exceed the explicit budget")));
    }
    let r = sel.ladder.ratio;
    let mut terms = Vec::with_capacity(count as usize);
    fn emit(sel: &NestedSelection, k: usize, j: u64, how: Placement, k1: usize, r: u64, out: &mut Vec<(TermId, Placement)>) {
        let mut after: Vec<Vec<(u64, bool)>> = vec![Vec::new(); sel.block_len as usize + 1];
        if k < k1 {
            for i in 0..r {
                let (m, hit) = sel.reach(k, i);
                after[m as usize].push(((j - 1) * r + i + 1, hit));
            }
        }
        for n in 1..=sel.block_len {
            out.push((TermId { k, j, n }, if n == 1 { how } else { Placement::Original }));
            for &(child, hit) in &after[n as usize] {
                let p = if hit { Placement::AfterContinuationIndex } else { Placement::AfterFullBlock };
                emit(sel, k + 1, child, p, k1, r, out);
            }
        }
    }
    let nu0: u64 = sel.ladder.nu(k0).try_into().map_err(|_| Error::InvalidArgument("ν too large".into()))?;
    for j in 1..=nu0 {
        emit(sel, k0, j, Placement::Original, k1, r, &mut terms);
    }
    Ok(RearrangedSeries { levels: (k0, k1), terms })
}

/// The window contents predicted by the placement rules.
pub fn expected_window(sel: &NestedSelection, k0: usize, path: &[u64], last_child: u64) -> Vec<TermId> {
    let k1 = k0 + path.len() - 1;
    let mut out = Vec::new();
    for (i, &j) in path.iter().enumerate() {
        let k = k0 + i;
        let child = if k < k1 { (path[i + 1] - 1) % sel.ladder.ratio } else { last_child };
        let (m, _) = sel.reach(k, child);
        out.extend((1..=m).map(|n| TermId { k, j, n }));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabConfig {
    pub levels: usize,
    pub rho: f64,
    pub seed: u64,
    pub ratio: u64,
    pub witness_n: usize,
    pub block_delta: f64,
    pub degree: usize,
    pub lambda_factor: f64,
    /// density of every E_k, as numerator over `ratio`
    pub density: f64,
    pub multiplier: MultiplierSequence,
    pub growth_bound: f64,
    pub growth_threshold: f64,
    pub horizon: usize,
    pub stages: usize,
    /// stage s targets P(Σ b_k 1_{E_k} > s) ≥ 1 - 1/(s + target_shift)
    pub target_shift: f64,
    pub stage_scale: f64,
    pub samples: usize,
}

impl LabConfig {
    pub fn desk(levels: usize, rho: f64, seed: u64) -> Self {
        LabConfig {
            levels,
            rho,
            seed,
            ratio: 1 << 20,
            witness_n: 16,
            block_delta: 0.125,
            degree: 256,
            lambda_factor: 1.0,
            density: 0.25,
            multiplier: MultiplierSequence::One,
            growth_bound: 100.0,
            growth_threshold: 1.5,
            horizon: 48,
            stages: 3,
            target_shift: 1.0,
            stage_scale: 1.0,
            samples: 4096,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_factor * (self.witness_n as f64).ln().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub s: usize,
    pub first_level: usize,
    pub last_level: usize,
    pub complete: bool,
    /// P(Σ b_k 1_{E_k} > s) from the exact Bernoulli law, b_k floored to 1/256
    pub predicted: f64,
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Guards {
    pub horizon: usize,
    pub inverse_nu: f64,
    pub inverse_nu_cauchy: f64,
    pub mass: f64,
    pub mass_cauchy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub config: LabConfig,
    pub lambda: f64,
    pub witness_ratio: f64,
    pub block: BlockStats,
    pub quarter: Option<QuarterChoice>,
    pub qualifying_fraction: f64,
    pub max_oscillation: f64,
    pub oscillation_ok: bool,
    pub g: GSet,
    pub weights_bounded: bool,
    pub divergence_growth: f64,
    pub convergent_tail: f64,
    pub independence: IndependenceReport,
    pub stages: Vec<StageReport>,
    pub guards: Guards,
}

pub struct Lab {
    pub config: LabConfig,
    pub block: LocalizedBlock,
    pub shared: SharedBlock,
    pub selection: NestedSelection,
    pub weights: Weights,
    pub g: GSet,
    pub witness_ratio: f64,
}

/// Reference block: a block witness localized on [0, δ) with N = 1/δ².
pub fn build_lab(cfg: &LabConfig, exec: Exec) -> Result<Lab> {
    let nw = cfg.witness_n;
    let m = ((nw as f64).sqrt() as usize + 1).min(nw);
    let (q, tau, witness_ratio) = small_witness(m, 4, 2, cfg.seed, exec);
    let lambda = cfg.lambda();
    let wit = build_block_witness(&q, &tau, nw, lambda)?;
    let witness = Witness { coeffs: wit.poly, sigma: wit.sigma };
    let delta = Interval::new(0.0, cfg.block_delta)?;
    let n_stand = 1.0 / (cfg.block_delta * cfg.block_delta);
    let carrier = 2 * (cfg.degree as i64 + nw as i64);
    let block = localized_block(delta, 0, &witness, carrier, cfg.degree, n_stand, lambda, 64 * carrier as usize)?;
    let shared = qualify_children(&block, cfg.ratio, lambda, exec);
    let ladder = ScaleLadder::new(1, cfg.ratio, cfg.levels)?;
    let num = (cfg.density * cfg.ratio as f64).round() as i64;
    let d = BigRational::new(BigInt::from(num), BigInt::from(cfg.ratio));
    let selection = build_nested_selection(ladder.clone(), &shared, &vec![d; cfg.levels], block.len() as u32)?;
    let k_max = cfg.horizon.max(cfg.levels);
    let wv = ladder.weights(cfg.multiplier, k_max + 1);
    let g = select_g(&wv, cfg.rho, cfg.growth_bound, cfg.growth_threshold)?;
    let weights = choose_weights(&wv, cfg.rho, &g);
    Ok(Lab { config: cfg.clone(), block, shared, selection, weights, g, witness_ratio })
}

/// P(Σ b_k X_k > s) for independent X_k ~ Bernoulli(d), b_k floored to 1/256.
pub fn bernoulli_tail(b: &[f64], d: f64, s: f64) -> f64 {
    let units: Vec<usize> = b.iter().map(|x| (x * 256.0).floor() as usize).collect();
    let mut dist = vec![1.0];
    for &u in &units {
        let mut next = vec![0.0; dist.len() + u];
        for (v, &p) in dist.iter().enumerate() {
            next[v] += p * (1.0 - d);
            next[v + u] += p * d;
        }
        dist = next;
    }
    let cut = (s * 256.0).floor() as usize;
    dist.iter().enumerate().filter(|(v, _)| *v > cut).map(|(_, p)| p).sum()
}

/// Levels are consumed in order; each stage ends at the first level where
/// the predicted tail reaches its target.
pub fn stage_bounds(lab: &Lab) -> Vec<(usize, usize, bool, f64)> {
    let cfg = &lab.config;
    let d = cfg.density;
    let mut out = Vec::new();
    let mut start = 1;
    for s in 1..=cfg.stages {
        if start > cfg.levels {
            break;
        }
        let target = 1.0 - 1.0 / (s as f64 + cfg.target_shift);
        let mut end = start;
        let mut p = bernoulli_tail(&lab.weights.b[start..=end], d, s as f64);
        while p < target && end < cfg.levels {
            end += 1;
            p = bernoulli_tail(&lab.weights.b[start..=end], d, s as f64);
        }
        out.push((start, end, p >= target, p));
        start = end + 1;
    }
    out
}

/// Per stage: fraction of sampled points whose restricted window sum exceeds
/// s·scale/2.
pub fn blowup_experiment(lab: &Lab, samples: usize, seed: u64) -> Vec<StageReport> {
    let cfg = &lab.config;
    let r = cfg.ratio;
    let bounds = stage_bounds(lab);
    let mut rng = task_rng(seed, task_id(7, 0));
    let mut hits = vec![0usize; bounds.len()];
    let mut digits = vec![0u64; cfg.levels + 2];
    for _ in 0..samples {
        for d in digits.iter_mut() {
            *d = rng.gen_range(0..r);
        }
        for (si, &(a, b, _, _)) in bounds.iter().enumerate() {
            let mut sum = 0.0;
            for k in a..=b {
                let i = digits[k];
                let half = usize::from(digits[k + 1] >= r / 2);
                let scale = lab.weights.b[k] / lab.shared.lambda;
                let (_, hit) = lab.selection.reach(k, i);
                let v = if hit {
                    lab.shared.child_values[i as usize][half] as f64
                } else {
                    lab.shared.full[2 * i as usize + half] as f64
                };
                sum += scale * v;
            }
            if sum > (si + 1) as f64 * cfg.stage_scale / 2.0 {
                hits[si] += 1;
            }
        }
    }
    bounds
        .iter()
        .enumerate()
        .map(|(si, &(a, b, complete, predicted))| StageReport {
            s: si + 1,
            first_level: a,
            last_level: b,
            complete,
            predicted,
            measured: hits[si] as f64 / samples as f64,
        })
        .collect()
}

pub fn guard_sums(lab: &Lab, mass: f64) -> Guards {
    let h = lab.config.horizon;
    let ladder = &lab.selection.ladder;
    let rho = lab.config.rho;
    let last = h.min(lab.weights.b.len() - 1);
    let inv = |a: usize, b: usize| (a..=b).map(|k| (-ladder.ln_nu(k)).exp()).sum::<f64>();
    let mass_sum = |a: usize, b: usize| (a..=b).map(|k| lab.weights.b[k] / (0.5 * k as f64 * rho.ln()).exp() * mass).sum::<f64>();
    Guards {
        horizon: h,
        inverse_nu: inv(1, h),
        inverse_nu_cauchy: inv(h / 2 + 1, h),
        mass: mass_sum(1, last),
        mass_cauchy: mass_sum(last / 2 + 1, last),
    }
}

pub fn run_divergence(cfg: &LabConfig, oscillation_c: f64, exec: Exec) -> Result<DivergenceReport> {
    let lab = build_lab(cfg, exec)?;
    let lambda = cfg.lambda();
    let stats = block_stats(&lab.block, lambda, 1 << 14, 1 << 14);
    let terms = lab.block.terms();
    let mut oscillation_ok = true;
    let mut partial = TrigPolynomial1D::new();
    for u in &terms {
        partial = partial.add(u);
        for t in 0..8 {
            let w = cfg.block_delta / 8.0;
            let iv = Interval { a: t as f64 * w, b: (t as f64 + 1.0) * w };
            oscillation_ok &= oscillation_check(&partial, iv, 64).holds(oscillation_c);
        }
    }
    let independence = independence_check(&lab.selection, 8)?;
    let stages = blowup_experiment(&lab, cfg.samples, cfg.seed);
    let guards = guard_sums(&lab, stats.mass);
    Ok(DivergenceReport {
        config: cfg.clone(),
        lambda,
        witness_ratio: lab.witness_ratio,
        quarter: lab.block.quarter.clone(),
        block: stats,
        qualifying_fraction: lab.shared.qualifying() as f64 / cfg.ratio as f64,
        max_oscillation: lab.shared.max_oscillation,
        oscillation_ok,
        g: lab.g.clone(),
        weights_bounded: lab.weights.bounded,
        divergence_growth: lab.weights.divergence_growth,
        convergent_tail: lab.weights.convergent_tail,
        independence,
        stages,
        guards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_term_witness() -> Witness {
        Witness { coeffs: TrigPolynomial1D::from_terms([(1, C64::new(1.0, 0.0))]), sigma: Permutation::identity(1) }
    }

    #[test]
    fn localizer_cases() {
        let full = fejer_localizer(Interval { a: 0.0, b: 1.0 }, 32, 64.0).unwrap();
        assert!((full.eval(0.3).re - 1.0).abs() < 1e-15);
        let d = Interval::new(0.0, 0.25).unwrap();
        let zero = fejer_localizer(d, 0, 16.0).unwrap();
        assert!((zero.eval(0.7).re - (0.25 - 2.0 / 16.0)).abs() < 1e-15);
        let r = fejer_localizer(d, 256, 16.0).unwrap();
        let chk = localizer_check(&r, d, 16.0, 64 * 256);
        assert!(chk.core_min >= 0.5, "{chk:?}");
        assert!(chk.exterior_max <= 0.05, "{chk:?}");
        assert!(matches!(fejer_localizer(Interval::new(0.0, 0.1).unwrap(), 8, 16.0), Err(Error::IntervalTooSmall { .. })));
    }

    #[test]
    fn localizer_is_nonnegative() {
        let d = Interval::new(0.2, 0.45).unwrap();
        let r = fejer_localizer(d, 100, 16.0).unwrap();
        assert!(r.sample_equispaced(4096).iter().all(|v| v.re > -1e-12 && v.im.abs() < 1e-12));
    }

    #[test]
    fn quarter_cases() {
        let real: Vec<C64> = (0..20).map(|i| C64::new(2.0 + i as f64, 0.0)).collect();
        let q = quarter_select(&real, 1.0);
        assert_eq!(q.index, 0);
        assert_eq!(q.counts[0], 20);
        let imag: Vec<C64> = (0..20).map(|i| C64::new(0.0, 2.0 + i as f64)).collect();
        let q = quarter_select(&imag, 1.0);
        assert_eq!(q.alpha, C64::new(0.0, -1.0));
        assert!(q.pigeonhole_holds());
        let mut rng = task_rng(1, 0);
        let field: Vec<C64> = (0..500).map(|_| C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
        let q = quarter_select(&field, 1.5);
        assert!(q.pigeonhole_holds());
    }

    #[test]
    fn block_cases() {
        let d = Interval::new(0.25, 0.5).unwrap();
        let w = one_term_witness();
        let b = localized_block(d, 40, &w, 200, 64, 16.0, 1.0, 256).unwrap();
        let terms = b.terms();
        assert_eq!(terms.len(), 1);
        let r = fejer_localizer(d, 64, 16.0).unwrap();
        let want = r.modulate(40 + 200).scale(b.alpha * 4.0);
        assert_eq!(terms[0], want);
        let empty = Witness { coeffs: TrigPolynomial1D::new(), sigma: Permutation::identity(3) };
        assert!(localized_block(d, 0, &empty, 200, 64, 16.0, 1.0, 64).unwrap().terms().is_empty());
        assert!(matches!(localized_block(d, 0, &w, 100, 64, 16.0, 1.0, 64), Err(Error::CarrierTooSmall { .. })));
    }

    #[test]
    fn block_spectra_disjoint_and_windowed() {
        let d = Interval::new(0.0, 0.25).unwrap();
        let w = Witness {
            coeffs: TrigPolynomial1D::from_terms((1..=4).map(|j| (j, C64::new(0.5, 0.0)))),
            sigma: Permutation::new(vec![3, 1, 4, 2]).unwrap(),
        };
        let b = localized_block(d, 100, &w, 2 * (32 + 4), 32, 16.0, 1.0, 128).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for u in b.terms() {
            for f in u.support() {
                assert!(f > 100 && f <= 100 + b.max_freq());
                assert!(seen.insert(f));
            }
        }
    }

    #[test]
    fn partials_match_terms() {
        let d = Interval::new(0.0, 0.25).unwrap();
        let w = Witness {
            coeffs: TrigPolynomial1D::from_terms([(1, C64::new(0.3, 0.1)), (2, C64::new(-0.2, 0.4))]),
            sigma: Permutation::new(vec![2, 1]).unwrap(),
        };
        let b = localized_block(d, 7, &w, 80, 16, 16.0, 0.1, 64).unwrap();
        let terms = b.terms();
        let mut buf = vec![C64::new(0.0, 0.0); 2];
        for x in [0.01, 0.1, 0.2, 0.6] {
            b.partials_with(x, b.localizer_at(x), &mut buf);
            let s1 = terms[0].eval(x);
            assert!((buf[0] - s1).norm() < 1e-10);
            assert!((buf[1] - s1 - terms[1].eval(x)).norm() < 1e-10);
        }
    }

    #[test]
    fn oscillation_bound_on_random_polys() {
        let mut rng = task_rng(3, 0);
        for _ in 0..20 {
            let n = rng.gen_range(2..40i64);
            let p = TrigPolynomial1D::from_terms((1..=n).map(|j| (j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))));
            let a = rng.gen_range(0.0..0.9);
            let iv = Interval::new(a, a + rng.gen_range(0.001..0.1)).unwrap();
            let chk = oscillation_check(&p, iv, 64);
            assert!(chk.holds(TAU), "{chk:?}");
        }
    }

    #[test]
    fn g_set_cases() {
        let lad = ScaleLadder::new(1, 1024, 10).unwrap();
        let ones = lad.weights(MultiplierSequence::One, 9);
        let g = select_g(&ones, 50.0, 100.0, 1.5).unwrap();
        assert_eq!(g.members, (1..=8).collect::<Vec<_>>());
        assert_eq!(g.branch, GBranch::Direct);
        let lin: Vec<f64> = (0..=41).map(|k| 50f64.powi(k)).collect();
        let g = select_g(&lin, 50.0, 100.0, 1.5).unwrap();
        assert_eq!(g.members.len(), 40);
        assert!((g.full_sum - 40.0).abs() < 1e-9 && (g.half_sum - 20.0).abs() < 1e-9);
        let sq: Vec<f64> = (0..=41).map(|k| 50f64.powi(2 * k)).collect();
        assert!(matches!(select_g(&sq, 50.0, 100.0, 1.5), Err(Error::HorizonTooShort(40))));
    }

    #[test]
    fn weight_cases() {
        let g = GSet { members: vec![3], branch: GBranch::Direct, half_sum: 0.0, full_sum: 0.0 };
        let wv = vec![1.0; 6];
        let w = choose_weights(&wv, 2.0, &g);
        assert_eq!(w.b[3], 1.0);
        assert!(w.bounded);
        // t_k ≡ 1: w(ν_k) = ρ^k
        let wv: Vec<f64> = (0..=42).map(|k| 3f64.powi(k)).collect();
        let g = GSet { members: (1..=41).collect(), branch: GBranch::Direct, half_sum: 0.0, full_sum: 0.0 };
        let w = choose_weights(&wv, 3.0, &g);
        for k in 1..=41 {
            assert!((w.q[k] - k as f64).abs() < 1e-9);
        }
        let h: f64 = (1..=41).map(|k| 1.0 / k as f64).sum();
        assert!((w.b.iter().sum::<f64>() - h).abs() < 1e-9);
        let lad = ScaleLadder::new(1, 1024, 8).unwrap();
        let wv = lad.weights(MultiplierSequence::One, 9);
        let g = select_g(&wv, 50.0, 100.0, 1.5).unwrap();
        let w = choose_weights(&wv, 50.0, &g);
        assert!(w.bounded && w.divergence_growth >= 1.5 && w.convergent_tail < 1e-3);
    }

    fn tiny(selected: Vec<u64>, cont: Vec<u32>, levels: usize) -> NestedSelection {
        let lad = ScaleLadder::new(1, 3, levels).unwrap();
        let d = BigRational::new(BigInt::from(selected.len()), BigInt::from(3));
        let lv = LevelSelection { selected, continuation: cont, density: d };
        NestedSelection::new(lad, 2, vec![lv; levels]).unwrap()
    }

    #[test]
    fn rearrangement_one_level() {
        let sel = tiny(vec![0], vec![1], 1);
        let s = build_rearrangement(&sel, 1, 1).unwrap();
        let ids: Vec<TermId> = s.terms.iter().map(|t| t.0).collect();
        let want: Vec<TermId> = (1..=3).flat_map(|j| (1..=2).map(move |n| TermId { k: 1, j, n })).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn rearrangement_full_blocks() {
        let lad = ScaleLadder::new(1, 3, 2).unwrap();
        let lv = LevelSelection { selected: vec![], continuation: vec![], density: BigRational::zero() };
        let sel = NestedSelection::new(lad, 2, vec![lv.clone(), lv]).unwrap();
        let s = build_rearrangement(&sel, 1, 2).unwrap();
        assert!(s.is_permutation(&sel));
        let ids: Vec<(u64, u32)> = s.terms.iter().filter(|t| t.0.j == 1 || t.0.k == 2).take(8).map(|t| (t.0.j, t.0.n)).collect();
        assert_eq!(ids, vec![(1, 1), (1, 2), (1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)]);
        assert!(s.terms.iter().filter(|t| t.0.k == 2 && t.0.n == 1).all(|t| t.1 == Placement::AfterFullBlock));
    }

    #[test]
    fn rearrangement_after_first_term() {
        let sel = tiny(vec![0, 1, 2], vec![1, 1, 1], 2);
        let s = build_rearrangement(&sel, 1, 2).unwrap();
        assert!(s.is_permutation(&sel));
        let head: Vec<(usize, u64, u32)> = s.terms.iter().take(8).map(|t| (t.0.k, t.0.j, t.0.n)).collect();
        assert_eq!(head, vec![(1, 1, 1), (2, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 2), (2, 3, 1), (2, 3, 2), (1, 1, 2)]);
    }

    #[test]
    fn windows_match_rules() {
        let sel = tiny(vec![0, 2], vec![1, 2], 3);
        let s = build_rearrangement(&sel, 1, 3).unwrap();
        assert!(s.is_permutation(&sel));
        for j1 in 1..=3u64 {
            for c1 in 0..3u64 {
                for c2 in 0..3u64 {
                    let j2 = (j1 - 1) * 3 + c1 + 1;
                    let j3 = (j2 - 1) * 3 + c2 + 1;
                    for last in 0..3 {
                        let path = [j1, j2, j3];
                        let mut got = s.restricted_window(&sel, &path, last);
                        let mut want = expected_window(&sel, 1, &path, last);
                        got.sort();
                        want.sort();
                        assert_eq!(got, want);
                    }
                }
            }
        }
    }

    #[test]
    fn selection_errors() {
        let lad = ScaleLadder::new(1, 4, 1).unwrap();
        let shared = SharedBlock {
            ratio: 4,
            lambda: 1.0,
            continuation: vec![2, 0, 1, 3],
            child_values: vec![[0.0; 2]; 4],
            full: vec![0.0; 8],
            exceed_fraction: 0.0,
            max_oscillation: 0.0,
        };
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let sel = build_nested_selection(lad.clone(), &shared, &[half], 3).unwrap();
        assert_eq!(sel.levels[0].selected, vec![0, 2]);
        assert_eq!(sel.levels[0].continuation, vec![2, 1]);
        let all = BigRational::one();
        assert!(matches!(build_nested_selection(lad.clone(), &shared, &[all], 3), Err(Error::DensityUnreachable { found: 3, needed: 4, .. })));
        assert!(matches!(build_nested_selection(lad, &shared, &[BigRational::zero()], 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn independence_small() {
        let sel = tiny(vec![0, 2], vec![1, 1], 3);
        let rep = independence_check(&sel, 3).unwrap();
        assert_eq!(rep.subsets, 7);
        assert_eq!(rep.failures, 0);
    }

    #[test]
    fn intersection_detects_dependence() {
        // E_1 ∩ E_1 has measure d, not d²
        let sel = tiny(vec![0], vec![1], 1);
        let e = PeriodicSet::level(&sel, 1);
        let m = intersection_measure(&[e.clone(), e], &BigRational::zero(), &BigRational::one()).unwrap();
        assert_eq!(m, BigRational::new(BigInt::from(1), BigInt::from(3)));
    }

    #[test]
    fn bernoulli_tail_cases() {
        assert!((bernoulli_tail(&[1.0, 1.0], 0.5, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(bernoulli_tail(&[], 0.5, 0.0), 0.0);
    }
}
