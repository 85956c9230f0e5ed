//! The rearranged majorant T_{σ,N}, its strong and weak norms, the
//! Menshov–Rademacher check, lower-bound estimation, the block-permutation
//! witness and the multiplier series built from it.

use std::f64::consts::{E, TAU};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::seed::{task_id, task_rng};
use crate::spectral::{fold_into, ifft_inplace, TrigPolynomial1D, C64};
use crate::{Error, Exec, Result};

/// A bijection of {1..N}; `forward[m-1] = σ(m)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![0usize; n];
        for (m, &v) in forward.iter().enumerate() {
            if v < 1 || v > n || inverse[v - 1] != 0 {
                return Err(Error::InvalidArgument(format!("not a permutation of 1..{n}: {v} at {}", m + 1)));
            }
            inverse[v - 1] = m + 1;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn identity(n: usize) -> Self {
        let v: Vec<usize> = (1..=n).collect();
        Permutation { forward: v.clone(), inverse: v }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut v: Vec<usize> = (1..=n).collect();
        v.shuffle(rng);
        Self::new(v).expect("shuffle is a bijection")
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn apply(&self, m: usize) -> usize {
        self.forward[m - 1]
    }

    pub fn position(&self, j: usize) -> usize {
        self.inverse[j - 1]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }
}

/// Named monotone weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MultiplierSequence {
    /// w ≡ 1
    One,
    /// ln ln(n + e^e)
    LogLog,
    /// √ln(n + e)
    SqrtLog,
    /// ln(n + e), not o(log n)
    Log,
}

impl MultiplierSequence {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "one" | "1" => Ok(Self::One),
            "loglog" => Ok(Self::LogLog),
            "sqrtlog" => Ok(Self::SqrtLog),
            "log" => Ok(Self::Log),
            _ => Err(Error::InvalidArgument(format!("unknown multiplier {name}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::One => "one",
            Self::LogLog => "loglog",
            Self::SqrtLog => "sqrtlog",
            Self::Log => "log",
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::LogLog => (n + E.powf(E)).ln().ln(),
            Self::SqrtLog => (n + E).ln().sqrt(),
            Self::Log => (n + E).ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MajorantResult {
    #[serde(skip)]
    pub field: Vec<f64>,
    pub strong_ratio: f64,
    /// Weak norm of the field divided by ‖coeffs‖₂.
    pub weak_norm: f64,
    #[serde(skip)]
    pub witness_coeffs: TrigPolynomial1D,
}

fn roots(s: usize) -> Vec<C64> {
    (0..s).map(|t| C64::from_polar(1.0, TAU * t as f64 / s as f64)).collect()
}

/// max_i v_(i)·√((S-1-i)/S) over the ascending order statistics.
pub fn weak_l2_norm(field: &[f64]) -> f64 {
    let s = field.len();
    if s == 0 {
        return 0.0;
    }
    let mut v = field.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter()
        .enumerate()
        .map(|(i, &x)| x * ((s - 1 - i) as f64 / s as f64).sqrt())
        .fold(0.0, f64::max)
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }
}

fn finish(field: Vec<f64>, coeffs: &TrigPolynomial1D) -> MajorantResult {
    let norm = coeffs.l2_norm();
    let (strong_ratio, weak_norm) = if norm == 0.0 { (0.0, 0.0) } else { (rms(&field) / norm, weak_l2_norm(&field) / norm) };
    MajorantResult { field, strong_ratio, weak_norm, witness_coeffs: coeffs.clone() }
}

/// Dense coefficients in σ order: entry m is (σ(m+1), c_{σ(m+1)}).
fn ordered(coeffs: &TrigPolynomial1D, sigma: &Permutation) -> Result<Vec<(usize, C64)>> {
    let n = sigma.len() as i64;
    for &(j, _) in coeffs.terms() {
        if j < 1 || j > n {
            return Err(Error::SupportViolation(j));
        }
    }
    Ok(sigma.forward().iter().map(|&j| (j, coeffs.coeff(j as i64))).collect())
}

fn field_of(seq: &[(usize, C64)], s: usize, table: &[C64], exec: Exec) -> Vec<f64> {
    let mut field = vec![0.0; s];
    let chunk = 256;
    exec.chunks_mut(&mut field, chunk, |ci, out| {
        for (o, v) in out.iter_mut().enumerate() {
            let t = ci * chunk + o;
            let (mut acc, mut best) = (C64::new(0.0, 0.0), 0.0f64);
            for &(j, c) in seq {
                acc += c * table[(j * t) % s];
                best = best.max(acc.norm());
            }
            *v = best;
        }
    });
    field
}

/// T_{σ,N} f at S equispaced points.
pub fn majorant_apply(coeffs: &TrigPolynomial1D, sigma: &Permutation, samples: usize) -> Result<MajorantResult> {
    majorant_apply_with(coeffs, sigma, samples, Exec::default())
}

pub fn majorant_apply_with(coeffs: &TrigPolynomial1D, sigma: &Permutation, samples: usize, exec: Exec) -> Result<MajorantResult> {
    let n = sigma.len();
    if samples < 8 * n {
        return Err(Error::ResolutionTooLow { samples, needed: 8 * n });
    }
    let seq = ordered(coeffs, sigma)?;
    let field = field_of(&seq, samples, &roots(samples), exec);
    Ok(finish(field, coeffs))
}

/// Partial sums taken only at the block boundaries of a family with
/// disjoint spectra: a lower bound for T_{σ,N} of the sum whenever σ lists
/// the blocks in order.
pub fn block_majorant(family: &[TrigPolynomial1D], samples: usize) -> MajorantResult {
    let mut sum = vec![C64::new(0.0, 0.0); samples];
    let mut field = vec![0.0; samples];
    let mut buf = vec![C64::new(0.0, 0.0); samples];
    let mut norm_sq = 0.0;
    for f in family {
        buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        fold_into(&mut buf, f.terms().iter().copied(), 0);
        ifft_inplace(&mut buf);
        for ((s, m), v) in sum.iter_mut().zip(field.iter_mut()).zip(&buf) {
            *s += v;
            *m = f64::max(*m, s.norm());
        }
        norm_sq += f.l2_norm().powi(2);
    }
    let norm = norm_sq.sqrt();
    let (strong_ratio, weak_norm) = if norm == 0.0 { (0.0, 0.0) } else { (rms(&field) / norm, weak_l2_norm(&field) / norm) };
    MajorantResult { field, strong_ratio, weak_norm, witness_coeffs: TrigPolynomial1D::new() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrReport {
    pub n: usize,
    pub trials: usize,
    pub max_ratio: f64,
    pub max_over_ln: f64,
    pub mean_ratio: f64,
    pub max_weak: f64,
}

/// Random coefficients under random permutations.
pub fn mr_upper_check(n: usize, trials: usize, seed: u64, exec: Exec) -> Result<MrReport> {
    if n < 2 {
        return Err(Error::InvalidArgument("MR check needs N >= 2".into()));
    }
    let s = 8 * n;
    let table = roots(s);
    let results = exec.map(trials, |t| {
        let mut rng = task_rng(seed, task_id(1, (n as u64) << 20 | t as u64));
        let coeffs = TrigPolynomial1D::from_terms(
            (1..=n as i64).map(|j| (j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))),
        );
        let sigma = Permutation::random(n, &mut rng);
        let seq = ordered(&coeffs, &sigma).expect("support inside 1..N");
        finish(field_of(&seq, s, &table, Exec::Sequential), &coeffs)
    });
    let max_ratio = results.iter().map(|r| r.strong_ratio).fold(0.0, f64::max);
    Ok(MrReport {
        n,
        trials,
        max_ratio,
        max_over_ln: max_ratio / (n as f64).ln(),
        mean_ratio: results.iter().map(|r| r.strong_ratio).sum::<f64>() / trials.max(1) as f64,
        max_weak: results.iter().map(|r| r.weak_norm).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AscentResult {
    pub strong_ratio: f64,
    pub weak_norm: f64,
    pub sweeps: usize,
    pub coeffs: Vec<C64>,
}

/// Derivative-free coordinate ascent on ‖T_σ c‖/‖c‖ from `restarts` random
/// starts; each coordinate tries 32 phases × 8 magnitudes and keeps its
/// current value when nothing is better.
pub fn random_ascent(sigma: &Permutation, restarts: usize, seed: u64, exec: Exec) -> AscentResult {
    let n = sigma.len();
    let s = 8 * n.max(1);
    let table = roots(s);
    let phases: Vec<C64> = (0..32).map(|i| C64::from_polar(1.0, TAU * i as f64 / 32.0)).collect();
    let mags = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0];
    let runs = exec.map(restarts.max(1), |r| {
        let mut rng = task_rng(seed, task_id(2, (n as u64) << 20 | r as u64));
        let mut c: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        // partial[x*n + m] = m-th partial sum in σ order at x_t
        let mut partial = vec![C64::new(0.0, 0.0); s * n];
        for x in 0..s {
            let mut acc = C64::new(0.0, 0.0);
            for (m, &j) in sigma.forward().iter().enumerate() {
                acc += c[j - 1] * table[(j * x) % s];
                partial[x * n + m] = acc;
            }
        }
        let mut norm_sq: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        let objective = |field_sq: f64, norm_sq: f64| if norm_sq == 0.0 { 0.0 } else { (field_sq / s as f64 / norm_sq).sqrt() };
        let current = |partial: &[C64]| -> f64 {
            (0..s).map(|x| partial[x * n..(x + 1) * n].iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)).sum()
        };
        let mut best = objective(current(&partial), norm_sq);
        let mut prefix = vec![0.0; s];
        let mut wave = vec![C64::new(0.0, 0.0); s];
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let start = best;
            for i in 0..n {
                let j = i + 1;
                let pos = sigma.position(j) - 1;
                for x in 0..s {
                    prefix[x] = partial[x * n..x * n + pos].iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
                    wave[x] = table[(j * x) % s];
                }
                let scale = (norm_sq / n as f64).sqrt();
                let keep = c[i];
                let mut arg = keep;
                for &m in &mags {
                    for (pi, ph) in phases.iter().enumerate() {
                        if m == 0.0 && pi > 0 {
                            continue;
                        }
                        let cand = ph * (m * scale);
                        let delta = cand - keep;
                        let mut field_sq = 0.0;
                        for x in 0..s {
                            let z = delta * wave[x];
                            let tail = partial[x * n + pos..(x + 1) * n]
                                .iter()
                                .map(|p| (p + z).norm_sqr())
                                .fold(0.0, f64::max);
                            field_sq += prefix[x].max(tail);
                        }
                        let v = objective(field_sq, norm_sq - keep.norm_sqr() + cand.norm_sqr());
                        if v > best {
                            best = v;
                            arg = cand;
                        }
                    }
                }
                if arg != keep {
                    let delta = arg - keep;
                    for x in 0..s {
                        let z = delta * wave[x];
                        partial[x * n + pos..(x + 1) * n].iter_mut().for_each(|p| *p += z);
                    }
                    norm_sq += arg.norm_sqr() - keep.norm_sqr();
                    c[i] = arg;
                }
            }
            if best - start < 1e-4 * start || sweeps >= 50 {
                break;
            }
        }
        let seq: Vec<(usize, C64)> = sigma.forward().iter().map(|&j| (j, c[j - 1])).collect();
        let field = field_of(&seq, s, &table, Exec::Sequential);
        let norm = norm_sq.sqrt();
        AscentResult { strong_ratio: rms(&field) / norm, weak_norm: weak_l2_norm(&field) / norm, sweeps, coeffs: c }
    });
    runs.into_iter()
        .fold(None::<AscentResult>, |b, r| match b {
            Some(b) if b.strong_ratio >= r.strong_ratio => Some(b),
            _ => Some(r),
        })
        .expect("at least one restart")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Strategy {
    Witness,
    RandomAscent,
}

impl Strategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "witness" => Ok(Self::Witness),
            "ascent" | "random_ascent" => Ok(Self::RandomAscent),
            _ => Err(Error::InvalidArgument(format!("unknown strategy {s}"))),
        }
    }
}

/// Lower bound on ‖T_{σ,N}‖ by ascent; the witness strategy needs the
/// assembled family and is `block_majorant` on it.
pub fn estimate_norm_lower(sigma: &Permutation, budget: usize, seed: u64, exec: Exec) -> Result<f64> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1".into()));
    }
    if sigma.len() == 1 {
        return Ok(1.0);
    }
    Ok(random_ascent(sigma, budget, seed, exec).strong_ratio)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakStrongReport {
    pub strong_sq: f64,
    /// 2∫ λ·min(φ(λ), weak²/λ²) dλ over the measured distribution φ
    pub integral: f64,
    pub bound: f64,
    pub holds: bool,
}

/// strong ≤ C·(2 + 2·weak²·ln N)^{1/2}, for a normalized input.
pub fn weak_strong_check(weak: f64, n: usize, strong: f64, c: f64) -> bool {
    if strong == 0.0 {
        return true;
    }
    let ln = (n.max(2) as f64).ln();
    strong * strong <= c * c * (2.0 + 2.0 * weak * weak * ln)
}

/// Layer-cake version from a sampled field of a unit-norm input.
pub fn weak_strong_integral(field: &[f64], weak: f64, n: usize, c: f64) -> WeakStrongReport {
    let s = field.len();
    let mut v = field.to_vec();
    v.sort_by(f64::total_cmp);
    let strong_sq = rms(&v).powi(2);
    // φ is a step function: on (v_(i-1), v_(i)) it equals (S - i)/S
    let mut integral = 0.0;
    let mut lo = 0.0;
    for (i, &hi) in v.iter().enumerate() {
        if hi > lo {
            let phi = (s - i) as f64 / s as f64;
            integral += segment(lo, hi, phi, weak);
            lo = hi;
        }
    }
    let ln = (n.max(2) as f64).ln();
    let bound = c * c * (2.0 + 2.0 * weak * weak * ln);
    WeakStrongReport { strong_sq, integral, bound, holds: strong_sq <= bound && integral <= bound }
}

/// 2∫_a^b λ·min(φ, w²/λ²) dλ.
fn segment(a: f64, b: f64, phi: f64, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let knee = (w * w / phi).sqrt();
    let flat = |x: f64, y: f64| phi * (y * y - x * x);
    let tail = |x: f64, y: f64| 2.0 * w * w * (y / x).ln();
    if b <= knee {
        flat(a, b)
    } else if a >= knee {
        tail(a, b)
    } else {
        flat(a, knee) + tail(knee, b)
    }
}

/// Block-wise copy of τ on l blocks of length M, identity after lM.
pub fn build_block_permutation(tau: &Permutation, l: usize, n: usize) -> Result<Permutation> {
    let m = tau.len();
    if l * m > n {
        return Err(Error::BlockOverflow { l, m, n });
    }
    let mut f = Vec::with_capacity(n);
    for k in 0..l {
        f.extend(tau.forward().iter().map(|&v| v + k * m));
    }
    f.extend(l * m + 1..=n);
    Permutation::new(f)
}

/// λ maximizing λ²·|{field > λ}| over the sampled values.
pub fn best_level(field: &[f64]) -> (f64, f64) {
    let s = field.len();
    let mut v = field.to_vec();
    v.sort_by(f64::total_cmp);
    let mut best = (0.0, 0.0, 0.0);
    for (i, &x) in v.iter().enumerate() {
        let frac = (s - 1 - i) as f64 / s as f64;
        if x * x * frac > best.0 {
            best = (x * x * frac, x, frac);
        }
    }
    (best.1, best.2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockWitness {
    #[serde(skip)]
    pub poly: TrigPolynomial1D,
    #[serde(skip)]
    pub sigma: Permutation,
    pub copies: usize,
    pub block: usize,
    pub level: f64,
    pub exceedance: f64,
    pub covered: f64,
    pub strong_ratio: f64,
    pub fraction: f64,
    pub shifts: Vec<usize>,
}

/// G = l^{-1/2} Σ_k Q(x - x_k) e^{2πi kMx}, with shifts chosen greedily to
/// cover translates of E = {T_{τ,M} Q > λ₀}.
pub fn build_block_witness(q: &TrigPolynomial1D, tau: &Permutation, n: usize, level_threshold: f64) -> Result<BlockWitness> {
    let m = tau.len();
    let s = 8 * n;
    let base = majorant_apply_with(q, tau, s, Exec::Sequential)?;
    let (lambda, frac) = best_level(&base.field);
    let e: Vec<bool> = base.field.iter().map(|&v| v >= lambda).collect();
    if frac == 0.0 || !e.iter().any(|&b| b) {
        return Err(Error::EmptyExceedanceSet);
    }
    let l = ((1.0 / frac).ceil() as usize).clamp(1, n / m);
    let members: Vec<usize> = (0..s).filter(|&t| e[t]).collect();
    let mut covered = vec![false; s];
    let mut shifts = Vec::with_capacity(l);
    for _ in 0..l {
        let mut best = (0usize, 0usize);
        for sh in 0..s {
            let gain = members.iter().filter(|&&t| !covered[(t + sh) % s]).count();
            if gain > best.1 {
                best = (sh, gain);
            }
        }
        shifts.push(best.0);
        for &t in &members {
            covered[(t + best.0) % s] = true;
        }
    }
    let scale = 1.0 / (l as f64).sqrt();
    let mut terms = Vec::with_capacity(l * q.len());
    for (k, &sh) in shifts.iter().enumerate() {
        let xk = sh as f64 / s as f64;
        for &(j, c) in q.terms() {
            let phase = C64::from_polar(1.0, -TAU * crate::spectral::frac_mul(j, xk));
            terms.push((j + (k * m) as i64, c * phase * scale));
        }
    }
    let poly = TrigPolynomial1D::from_terms(terms);
    let sigma = build_block_permutation(tau, l, n)?;
    let res = majorant_apply_with(&poly, &sigma, s, Exec::Sequential)?;
    let fraction = res.field.iter().filter(|&&v| v > level_threshold).count() as f64 / s as f64;
    Ok(BlockWitness {
        poly,
        sigma,
        copies: l,
        block: m,
        level: lambda,
        exceedance: members.len() as f64 / s as f64,
        covered: covered.iter().filter(|&&b| b).count() as f64 / s as f64,
        strong_ratio: res.strong_ratio,
        fraction,
        shifts,
    })
}

/// A small (Q, τ) pair with large T_{τ,M} Q: best ascent over a few random τ.
pub fn small_witness(m: usize, taus: usize, restarts: usize, seed: u64, exec: Exec) -> (TrigPolynomial1D, Permutation, f64) {
    let mut best: Option<(TrigPolynomial1D, Permutation, f64)> = None;
    for t in 0..taus.max(1) {
        let mut rng = task_rng(seed, task_id(3, t as u64));
        let tau = if t == 0 { Permutation::identity(m) } else { Permutation::random(m, &mut rng) };
        let a = random_ascent(&tau, restarts, seed ^ t as u64, exec);
        if best.as_ref().is_none_or(|b| a.strong_ratio > b.2) {
            let norm = a.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let q = TrigPolynomial1D::from_terms(a.coeffs.iter().enumerate().map(|(i, &c)| (i as i64 + 1, c / norm)));
            best = Some((q, tau, a.strong_ratio));
        }
    }
    best.expect("at least one candidate")
}

/// Block witness at operator size N built from an ascent-optimized block of
/// size ⌊√N⌋ + 1; the exceedance level is `level_factor`·√ln N.
pub fn constructed_witness(n: usize, level_factor: f64, seed: u64, exec: Exec) -> Result<BlockWitness> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("witness needs N >= 4, got {n}")));
    }
    let m = ((n as f64).sqrt() as usize + 1).min(n / 2);
    let (q, tau, _) = small_witness(m, 4, 2, seed, exec);
    build_block_witness(&q, &tau, n, level_factor * (n as f64).ln().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct C1Stage {
    pub k: usize,
    pub n_k: f64,
    pub weight_at_2nk: f64,
    pub scale: f64,
    /// the block occupies offset + 1..offset + len; coefficients and σ_k are local
    pub offset: f64,
    pub len: usize,
    #[serde(skip)]
    pub coeffs: TrigPolynomial1D,
    #[serde(skip)]
    pub permutation: Permutation,
    /// measure of {block max > 1}
    pub exceedance: f64,
    /// running Σ|c_n|² w(n)
    pub weight_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct C1Report {
    pub multiplier: &'static str,
    pub stages: Vec<C1Stage>,
    pub weight_sum: f64,
    pub weight_limit: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

impl MultiplierSequence {
    /// w(e^t), stable for t beyond the f64 range of e^t.
    pub fn eval_ln(&self, t: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::LogLog => log_add_exp(t, E).ln(),
            Self::SqrtLog => log_add_exp(t, 1.0).sqrt(),
            Self::Log => log_add_exp(t, 1.0),
        }
    }
}

const LN_CAP: f64 = 700.0;

/// Smallest N > 2·prev with w(2N) ≤ ln N / k². Exact below 2^52; beyond
/// that N is resolved in log space.
pub fn next_stage_size(w: MultiplierSequence, prev: f64, k: usize) -> Result<f64> {
    let kk = (k * k) as f64;
    let ok_ln = |t: f64| w.eval_ln(t + std::f64::consts::LN_2) <= t / kk;
    let exact = (1u64 << 52) as f64;
    let start = (2.0 * prev + 1.0).floor();
    if start < exact {
        let ok = |n: f64| ok_ln(n.ln());
        let (mut lo, mut hi) = (start, start);
        if ok(lo) {
            return Ok(lo);
        }
        while !ok(hi) && hi < exact {
            lo = hi;
            hi = (hi * 2.0).min(exact);
        }
        if ok(hi) {
            // ok is monotone in n for the multipliers above
            while hi - lo > 1.0 {
                let mid = (lo + (hi - lo) / 2.0).floor();
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
    }
    let (mut lo, mut hi) = (start.max(exact).ln(), LN_CAP);
    if !ok_ln(hi) {
        return Err(Error::MultiplierNotSmallO(k));
    }
    if ok_ln(lo) {
        return Ok(lo.exp());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok_ln(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp().ceil())
}

/// Stage k places (1/(k√w(2N_k)))·P_k(x - t_k)e^{2πiN_k x}; P_k is a block
/// witness on at most `cap` frequencies.
pub fn build_c1_series(w: MultiplierSequence, stages: usize, cap: usize, seed: u64, exec: Exec) -> Result<C1Report> {
    let mut out = Vec::with_capacity(stages);
    let mut prev = 1.0;
    let mut weight_sum = 0.0;
    for k in 1..=stages {
        let n_k = next_stage_size(w, prev, k)?;
        prev = n_k;
        let size = (n_k.min(cap as f64) as usize).max(4);
        let m = ((size as f64).sqrt() as usize + 1).min(size);
        let (q, tau, _) = small_witness(m, 4, 2, seed ^ (k as u64) << 32, exec);
        let wit = build_block_witness(&q, &tau, size, 1.0)?;
        let wk = w.eval_ln(n_k.ln() + std::f64::consts::LN_2);
        let scale = 1.0 / (k as f64 * wk.sqrt());
        let block = majorant_apply_with(&wit.poly, &wit.sigma, 8 * size, exec)?;
        let exceedance = block.field.iter().filter(|&&v| scale * v > 1.0).count() as f64 / block.field.len() as f64;
        // w is nondecreasing and every frequency of the block is ≤ 2N_k
        weight_sum += wit
            .poly
            .terms()
            .iter()
            .map(|&(j, c)| (scale * c.norm()).powi(2) * w.eval_ln((n_k + j as f64).ln()))
            .sum::<f64>();
        let coeffs = wit.poly.scale(C64::new(scale, 0.0));
        out.push(C1Stage {
            k,
            n_k,
            weight_at_2nk: wk,
            scale,
            offset: n_k,
            len: size,
            coeffs,
            permutation: wit.sigma,
            exceedance,
            weight_sum,
        });
    }
    let weight_limit = (1..=stages).map(|k| 1.0 / (k * k) as f64).sum();
    Ok(C1Report { multiplier: w.name(), stages: out, weight_sum, weight_limit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_coeffs(n: usize, seed: u64) -> TrigPolynomial1D {
        let mut rng = task_rng(seed, 0);
        TrigPolynomial1D::from_terms((1..=n as i64).map(|j| (j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))))
    }

    #[test]
    fn permutation_basics() {
        let p = Permutation::new(vec![2, 3, 1]).unwrap();
        for m in 1..=3 {
            assert_eq!(p.position(p.apply(m)), m);
        }
        assert!(Permutation::new(vec![1, 1]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
    }

    #[test]
    fn trivial_majorants() {
        let one = TrigPolynomial1D::from_terms([(1, C64::new(0.6, -0.8))]);
        let r = majorant_apply(&one, &Permutation::identity(1), 8).unwrap();
        assert!(r.field.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((r.strong_ratio - 1.0).abs() < 1e-12);
        let single = TrigPolynomial1D::from_terms([(3, C64::new(2.0, 0.0))]);
        let r = majorant_apply(&single, &Permutation::identity(5), 40).unwrap();
        assert!((r.strong_ratio - 1.0).abs() < 1e-12);
        assert!(matches!(majorant_apply(&single, &Permutation::identity(5), 39), Err(Error::ResolutionTooLow { .. })));
        assert!(matches!(majorant_apply(&single, &Permutation::identity(2), 16), Err(Error::SupportViolation(3))));
    }

    #[test]
    fn incremental_matches_direct() {
        let c = rand_coeffs(4, 3);
        for sigma in [Permutation::identity(4), Permutation::new(vec![3, 1, 4, 2]).unwrap()] {
            let r = majorant_apply(&c, &sigma, 32).unwrap();
            for t in 0..32 {
                let x = t as f64 / 32.0;
                let direct = (1..=4)
                    .map(|m| {
                        (1..=m)
                            .map(|i| {
                                let j = sigma.apply(i) as i64;
                                c.coeff(j) * C64::from_polar(1.0, TAU * j as f64 * x)
                            })
                            .sum::<C64>()
                            .norm()
                    })
                    .fold(0.0, f64::max);
                assert!((direct - r.field[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weak_norm_cases() {
        let s = 1000;
        let c = vec![3.0; s];
        assert!((weak_l2_norm(&c) - 3.0 * ((s - 1) as f64 / s as f64).sqrt()).abs() < 1e-12);
        assert_eq!(weak_l2_norm(&vec![0.0; 10]), 0.0);
        let two: Vec<f64> = (0..s).map(|i| if i < s / 2 { 1.0 } else { 2.0 }).collect();
        assert!((weak_l2_norm(&two) - 2f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn mr_small_cases() {
        let r = mr_upper_check(2, 50, 9, Exec::Sequential).unwrap();
        assert!(r.max_ratio <= 2.0);
        let zero = TrigPolynomial1D::new();
        assert_eq!(majorant_apply(&zero, &Permutation::identity(3), 24).unwrap().strong_ratio, 0.0);
    }

    #[test]
    fn ascent_trivial_cases() {
        assert_eq!(estimate_norm_lower(&Permutation::identity(1), 1, 0, Exec::Sequential).unwrap(), 1.0);
        let a = random_ascent(&Permutation::identity(4), 1, 5, Exec::Sequential);
        assert!(a.strong_ratio >= 1.0);
    }

    #[test]
    fn weak_strong_cases() {
        assert!(weak_strong_check(0.0, 16, 0.0, 1.0));
        let field = vec![1.0; 64];
        let w = weak_l2_norm(&field);
        assert!(weak_strong_check(w, 16, 1.0, 1.0));
        let rep = weak_strong_integral(&field, w, 16, 1.0);
        assert!(rep.holds);
    }

    #[test]
    fn layer_cake_reproduces_strong_norm_without_cap() {
        let field: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin().abs() * 3.0).collect();
        let rep = weak_strong_integral(&field, 1e9, 16, 1.0);
        assert!((rep.integral - rep.strong_sq).abs() < 1e-9 * rep.strong_sq);
    }

    #[test]
    fn block_permutation_cases() {
        let tau = Permutation::new(vec![2, 3, 1]).unwrap();
        let s = build_block_permutation(&tau, 2, 8).unwrap();
        assert_eq!(s.forward(), &[2, 3, 1, 5, 6, 4, 7, 8]);
        assert_eq!(build_block_permutation(&Permutation::identity(3), 2, 8).unwrap(), Permutation::identity(8));
        assert_eq!(build_block_permutation(&tau, 0, 5).unwrap(), Permutation::identity(5));
        assert!(matches!(build_block_permutation(&tau, 3, 8), Err(Error::BlockOverflow { .. })));
    }

    #[test]
    fn block_witness_single_copy() {
        let (q, tau, _) = small_witness(4, 1, 1, 3, Exec::Sequential);
        let w = build_block_witness(&q, &tau, 4, 0.5).unwrap();
        assert_eq!(w.copies, 1);
        assert!((w.covered - w.exceedance).abs() < 0.02);
        let flat = TrigPolynomial1D::from_terms([(1, C64::new(1.0, 0.0))]);
        let w = build_block_witness(&flat, &Permutation::identity(1), 8, 0.5).unwrap();
        assert!(w.fraction > 0.98);
    }

    #[test]
    fn stage_sizes() {
        assert_eq!(next_stage_size(MultiplierSequence::One, 1.0, 1).unwrap(), 3.0);
        let n2 = next_stage_size(MultiplierSequence::One, 3.0, 2).unwrap();
        assert!((55.0..=56.0).contains(&n2));
        assert!(matches!(next_stage_size(MultiplierSequence::Log, 1.0, 2), Err(Error::MultiplierNotSmallO(2))));
        let big = next_stage_size(MultiplierSequence::SqrtLog, 1e10, 3).unwrap();
        assert!(big.is_finite() && big > 2e10);
    }

    #[test]
    fn c1_cases() {
        let r = build_c1_series(MultiplierSequence::One, 0, 64, 1, Exec::Sequential).unwrap();
        assert!(r.stages.is_empty() && r.weight_sum == 0.0);
        let r = build_c1_series(MultiplierSequence::One, 1, 64, 1, Exec::Sequential).unwrap();
        assert!(r.stages[0].exceedance > 0.0);
        let r = build_c1_series(MultiplierSequence::LogLog, 3, 64, 1, Exec::Sequential).unwrap();
        assert_eq!(r.stages.len(), 3);
        assert!(r.weight_sum <= r.weight_limit);
    }
}
