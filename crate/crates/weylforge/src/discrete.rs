//! Discrete trigonometric systems T^(l), the Chinese-remainder maps between
//! T^(p)×T^(q) and T^(pq), flattening of double polynomials, and strong
//! orthogonality of 1D polynomials.
//!
//! Indices run over ℕ_l = {1..l}; index l plays the role of frequency 0.

use std::f64::consts::TAU;

use num_integer::Integer;
use num_rational::Ratio;
use serde::Serialize;

use crate::spectral::{TrigPolynomial1D, C64};
use crate::{Error, Exec, Result};

/// Remainder in {1..n}.
pub fn mod_star(m: i64, n: i64) -> i64 {
    assert!(n >= 1, "mod* needs n >= 1");
    let r = m.rem_euclid(n);
    if r == 0 {
        n
    } else {
        r
    }
}

fn inverse_mod(a: i64, m: i64) -> i64 {
    if m == 1 {
        return 0;
    }
    let e = a.rem_euclid(m).extended_gcd(&m);
    e.x.rem_euclid(m)
}

fn check_coprime(p: i64, q: i64) -> Result<()> {
    if p < 1 || q < 1 || p.gcd(&q) != 1 {
        return Err(Error::NotCoprime { p, q });
    }
    Ok(())
}

pub fn crt_tau(p: i64, q: i64, n1: i64, n2: i64) -> Result<i64> {
    Ok(DiscreteSystemIndex::new(p, q)?.tau(n1, n2))
}

/// The maps of the p×q ↔ pq equivalence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DiscreteSystemIndex {
    pub p: i64,
    pub q: i64,
    q_inv: i64,
    p_inv: i64,
}

impl DiscreteSystemIndex {
    pub fn new(p: i64, q: i64) -> Result<Self> {
        check_coprime(p, q)?;
        Ok(DiscreteSystemIndex { p, q, q_inv: inverse_mod(q, p), p_inv: inverse_mod(p, q) })
    }

    pub fn order(&self) -> i64 {
        self.p * self.q
    }

    /// The l ∈ {1..pq} with l ≡ n₁ (mod p), l ≡ n₂ (mod q); periodic in both.
    pub fn tau(&self, n1: i64, n2: i64) -> i64 {
        let (p, q) = (self.p as i128, self.q as i128);
        let a = (n1 as i128).rem_euclid(p) * q * self.q_inv as i128;
        let b = (n2 as i128).rem_euclid(q) * p * self.p_inv as i128;
        mod_star(((a + b) % (p * q)) as i64, self.order())
    }

    pub fn phi(&self, n: (i64, i64)) -> i64 {
        self.tau(n.0, n.1)
    }

    pub fn psi(&self, u: (i64, i64)) -> i64 {
        let t = self.tau(u.0, -u.1) as i128 * (self.q - self.p) as i128;
        mod_star((t % self.order() as i128) as i64, self.order())
    }

    /// {n₁u₁/p + n₂u₂/q} and {φ(n)ψ(u)/pq} as reduced rationals.
    pub fn identity_sides(&self, n: (i64, i64), u: (i64, i64)) -> (Ratio<i64>, Ratio<i64>) {
        let frac = |r: Ratio<i64>| r - r.floor();
        let lhs = frac(Ratio::new(n.0 * u.0, self.p) + Ratio::new(n.1 * u.1, self.q));
        let rhs = frac(Ratio::new(self.phi(n) * self.psi(u), self.order()));
        (lhs, rhs)
    }

    /// Both sides share the denominator pq; equal numerators mod pq is
    /// equality of the reduced fractions.
    fn identity_fast(&self, n: (i64, i64), phi: i64, u: (i64, i64), psi: i64) -> bool {
        let l = self.order() as i128;
        let lhs = ((n.0 * u.0) as i128 * self.q as i128 + (n.1 * u.1) as i128 * self.p as i128).rem_euclid(l);
        let rhs = (phi as i128 * psi as i128).rem_euclid(l);
        lhs == rhs
    }

    /// Whether `f` maps ℕ_p×ℕ_q onto ℕ_pq.
    fn is_bijection(&self, f: impl Fn((i64, i64)) -> i64) -> bool {
        let l = self.order() as usize;
        let mut seen = vec![false; l + 1];
        for a in 1..=self.p {
            for b in 1..=self.q {
                let v = f((a, b));
                if v < 1 || v as usize > l || seen[v as usize] {
                    return false;
                }
                seen[v as usize] = true;
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairCheck {
    pub p: i64,
    pub q: i64,
    pub tuples: u64,
    pub failures: u64,
    pub phi_bijective: bool,
    pub psi_bijective: bool,
}

impl PairCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.phi_bijective && self.psi_bijective
    }
}

/// Checks the identity for every (n, u) ∈ (ℕ_p×ℕ_q)², or for every n and a
/// stride sample of at most `u_limit` values of u.
pub fn check_pair(p: i64, q: i64, u_limit: Option<usize>) -> Result<PairCheck> {
    let idx = DiscreteSystemIndex::new(p, q)?;
    let us: Vec<(i64, i64)> = (1..=p).flat_map(|a| (1..=q).map(move |b| (a, b))).collect();
    let step = match u_limit {
        Some(l) if l > 0 && l < us.len() => us.len().div_ceil(l),
        _ => 1,
    };
    let us: Vec<_> = us.into_iter().step_by(step).map(|u| (u, idx.psi(u))).collect();
    let (mut tuples, mut failures) = (0u64, 0u64);
    for a in 1..=p {
        for b in 1..=q {
            let n = (a, b);
            let phi = idx.phi(n);
            for &(u, psi) in &us {
                tuples += 1;
                if !idx.identity_fast(n, phi, u, psi) {
                    failures += 1;
                }
            }
        }
    }
    Ok(PairCheck {
        p,
        q,
        tuples,
        failures,
        phi_bijective: idx.is_bijection(|n| idx.phi(n)),
        psi_bijective: idx.is_bijection(|u| idx.psi(u)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrtReport {
    pub max_q: i64,
    pub exhaustive: bool,
    pub pairs: usize,
    pub tuples: u64,
    pub failures: u64,
    pub results: Vec<PairCheck>,
}

impl CrtReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(PairCheck::passed)
    }
}

/// All coprime 1 ≤ p < q ≤ max_q.
pub fn coprime_pairs(max_q: i64) -> Vec<(i64, i64)> {
    (2..=max_q)
        .flat_map(|q| (1..q).filter(move |p| p.gcd(&q) == 1).map(move |p| (p, q)))
        .collect()
}

pub fn crt_verify(max_q: i64, exhaustive: bool, exec: Exec) -> Result<CrtReport> {
    let pairs = coprime_pairs(max_q);
    let limit = if exhaustive { None } else { Some(64) };
    let results = exec
        .map(pairs.len(), |i| check_pair(pairs[i].0, pairs[i].1, limit))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CrtReport {
        max_q,
        exhaustive,
        pairs: results.len(),
        tuples: results.iter().map(|r| r.tuples).sum(),
        failures: results.iter().map(|r| r.failures).sum(),
        results,
    })
}

/// Step function constant on the cells [(k-1)/l, k/l), k = 1..l.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction1D {
    pub order: usize,
    pub values: Vec<C64>,
}

impl StepFunction1D {
    /// Cell-average inner product.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.order, other.order);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum::<C64>() / self.order as f64
    }

    pub fn at(&self, x: f64) -> C64 {
        let k = (x.rem_euclid(1.0) * self.order as f64).floor() as usize;
        self.values[k.min(self.order - 1)]
    }
}

/// e^{2πi nk/l} at phase index k, reduced exactly.
fn unit_root(n: i64, k: i64, l: i64) -> C64 {
    let r = ((n as i128 * k as i128).rem_euclid(l as i128)) as f64;
    C64::from_polar(1.0, TAU * r / l as f64)
}

pub fn discrete_trig(l: usize, n: i64) -> Result<StepFunction1D> {
    if n < 1 || n > l as i64 {
        return Err(Error::IndexOutOfRange { index: n, limit: l as i64 });
    }
    let values = (1..=l as i64).map(|k| unit_root(n, k, l as i64)).collect();
    Ok(StepFunction1D { order: l, values })
}

/// (t^(p)_{n₁} × t^(q)_{n₂})(x).
pub fn tensor_value(p: i64, q: i64, n: (i64, i64), x: (f64, f64)) -> C64 {
    let k1 = (x.0.rem_euclid(1.0) * p as f64).floor() as i64 + 1;
    let k2 = (x.1.rem_euclid(1.0) * q as f64).floor() as i64 + 1;
    unit_root(n.0, k1, p) * unit_root(n.1, k2, q)
}

/// Σ a_n t^(p)_{n₁}×t^(q)_{n₂} with n ∈ ℕ_p×ℕ_q.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscretePolynomial2D {
    pub p: i64,
    pub q: i64,
    pub terms: Vec<((i64, i64), C64)>,
}

impl DiscretePolynomial2D {
    /// Value on the cell δ^(p)_{u₁} × δ^(q)_{u₂}.
    pub fn cell_value(&self, u: (i64, i64)) -> C64 {
        self.terms
            .iter()
            .map(|&(n, c)| c * unit_root(n.0, u.0, self.p) * unit_root(n.1, u.1, self.q))
            .sum()
    }
}

/// Σ b_j t^(l)_j with j ∈ ℕ_l.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscretePolynomial1D {
    pub order: i64,
    pub terms: Vec<(i64, C64)>,
}

impl DiscretePolynomial1D {
    pub fn cell_value(&self, k: i64) -> C64 {
        self.terms.iter().map(|&(j, c)| c * unit_root(j, k, self.order)).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

pub fn flatten(poly: &DiscretePolynomial2D, idx: &DiscreteSystemIndex) -> Result<DiscretePolynomial1D> {
    if poly.p != idx.p || poly.q != idx.q {
        return Err(Error::InvalidArgument(format!(
            "polynomial over {}x{} flattened with index {}x{}",
            poly.p, poly.q, idx.p, idx.q
        )));
    }
    let mut terms = Vec::with_capacity(poly.terms.len());
    for &((a, b), c) in &poly.terms {
        if !(1..=idx.p).contains(&a) {
            return Err(Error::IndexOutOfRange { index: a, limit: idx.p });
        }
        if !(1..=idx.q).contains(&b) {
            return Err(Error::IndexOutOfRange { index: b, limit: idx.q });
        }
        terms.push((idx.phi((a, b)), c));
    }
    terms.sort_by_key(|t| t.0);
    Ok(DiscretePolynomial1D { order: idx.order(), terms })
}

/// Disjoint supports, i.e. f̂(n)ĝ(n) = 0 for every n.
pub fn strong_orthogonality(f: &TrigPolynomial1D, g: &TrigPolynomial1D) -> bool {
    let (a, b) = (f.terms(), g.terms());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if a[i].1 * b[j].1 != C64::new(0.0, 0.0) {
                    return false;
                }
                i += 1;
                j += 1;
            }
        }
    }
    true
}

/// max over h of |∫ f(x) g(h - x) dx| at 4·(support diameter) points h.
pub fn correlation_max(f: &TrigPolynomial1D, g: &TrigPolynomial1D) -> f64 {
    let lo = f.min_freq().into_iter().chain(g.min_freq()).min();
    let hi = f.max_freq().into_iter().chain(g.max_freq()).max();
    let (Some(lo), Some(hi)) = (lo, hi) else { return 0.0 };
    let count = (4 * (hi - lo + 1)).max(4) as usize;
    (0..count)
        .map(|t| {
            let h = t as f64 / count as f64;
            f.terms()
                .iter()
                .map(|&(n, c)| c * g.coeff(n) * C64::from_polar(1.0, TAU * crate::spectral::frac_mul(n, h)))
                .sum::<C64>()
                .norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::task_rng;
    use rand::Rng;

    #[test]
    fn mod_star_cases() {
        assert_eq!(mod_star(6, 3), 3);
        assert_eq!(mod_star(7, 3), 1);
        for m in 1..=24 {
            for n in 1..=6 {
                let r = mod_star(m, n);
                assert!((1..=n).contains(&r) && (r - m).rem_euclid(n) == 0);
            }
        }
    }

    #[test]
    fn tau_against_scan() {
        let scan = |p: i64, q: i64, a: i64, b: i64| {
            (1..=p * q).find(|l| (l - a).rem_euclid(p) == 0 && (l - b).rem_euclid(q) == 0).unwrap()
        };
        assert_eq!(crt_tau(2, 3, 1, 2).unwrap(), 5);
        assert_eq!(crt_tau(2, 3, 2, 3).unwrap(), 6);
        assert_eq!(scan(2, 3, 1, 2), 5);
        for (p, q) in [(3, 4), (5, 7), (1, 6), (8, 9)] {
            let idx = DiscreteSystemIndex::new(p, q).unwrap();
            for a in -p..=2 * p {
                for b in -q..=2 * q {
                    assert_eq!(idx.tau(a, b), scan(p, q, a, b));
                    assert_eq!(idx.tau(a + p, b), idx.tau(a, b));
                }
            }
        }
        assert!(matches!(crt_tau(4, 6, 1, 1), Err(Error::NotCoprime { .. })));
    }

    #[test]
    fn index_examples() {
        let one = DiscreteSystemIndex::new(1, 1).unwrap();
        assert_eq!((one.phi((1, 1)), one.psi((1, 1))), (1, 1));
        let (l, r) = one.identity_sides((1, 1), (1, 1));
        assert_eq!((l, r), (Ratio::from_integer(0), Ratio::from_integer(0)));
        let idx = DiscreteSystemIndex::new(2, 3).unwrap();
        assert_eq!(idx.psi((1, 1)), 5);
        let idx = DiscreteSystemIndex::new(3, 4).unwrap();
        let mut count = 0;
        for n in (1..=3).flat_map(|a| (1..=4).map(move |b| (a, b))) {
            for u in (1..=3).flat_map(|a| (1..=4).map(move |b| (a, b))) {
                let (l, r) = idx.identity_sides(n, u);
                assert_eq!(l, r);
                assert_eq!(idx.identity_fast(n, idx.phi(n), u, idx.psi(u)), l == r);
                count += 1;
            }
        }
        assert_eq!(count, 144);
        assert!(DiscreteSystemIndex::new(6, 4).is_err());
    }

    #[test]
    fn small_pairs_pass() {
        let r = crt_verify(12, true, Exec::Sequential).unwrap();
        assert!(r.passed() && r.failures == 0);
        let expect: u64 = coprime_pairs(12).iter().map(|&(p, q)| (p * q * p * q) as u64).sum();
        assert_eq!(r.tuples, expect);
    }

    #[test]
    fn trig_system() {
        let c = discrete_trig(4, 4).unwrap();
        assert!(c.values.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
        let t = discrete_trig(4, 1).unwrap();
        assert!((t.values[0] - C64::new(0.0, 1.0)).norm() < 1e-15);
        let (a, b) = (discrete_trig(6, 2).unwrap(), discrete_trig(6, 3).unwrap());
        assert!(a.inner(&b).norm() < 1e-14);
        assert!((a.inner(&a).re - 1.0).abs() < 1e-14);
        assert!(matches!(discrete_trig(4, 5), Err(Error::IndexOutOfRange { .. })));
        assert!(discrete_trig(4, 0).is_err());
    }

    #[test]
    fn flatten_matches_cells() {
        let idx = DiscreteSystemIndex::new(3, 4).unwrap();
        let constant = DiscretePolynomial2D { p: 3, q: 4, terms: vec![((3, 4), C64::new(1.0, 0.0))] };
        let flat = flatten(&constant, &idx).unwrap();
        for k in 1..=12 {
            assert!((flat.cell_value(k) - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let zero = flatten(&DiscretePolynomial2D { p: 3, q: 4, terms: vec![] }, &idx).unwrap();
        assert!(zero.terms.is_empty());
        let mut rng = task_rng(11, 0);
        let terms = (1..=3)
            .flat_map(|a| (1..=4).map(move |b| (a, b)))
            .map(|n| (n, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        let poly = DiscretePolynomial2D { p: 3, q: 4, terms };
        let flat = flatten(&poly, &idx).unwrap();
        for u in (1..=3).flat_map(|a| (1..=4).map(move |b| (a, b))) {
            assert!((poly.cell_value(u) - flat.cell_value(idx.psi(u))).norm() < 1e-12);
        }
        let bad = DiscretePolynomial2D { p: 3, q: 4, terms: vec![((4, 1), C64::new(1.0, 0.0))] };
        assert!(matches!(flatten(&bad, &idx), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn equivalence_preserves_value_distributions() {
        let (p, q) = (5i64, 7i64);
        let idx = DiscreteSystemIndex::new(p, q).unwrap();
        let key = |z: C64| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64);
        for n in [(1, 1), (2, 5), (5, 3), (4, 7)] {
            let mut left: Vec<_> = (1..=p)
                .flat_map(|a| (1..=q).map(move |b| (a, b)))
                .map(|u| key(unit_root(n.0, u.0, p) * unit_root(n.1, u.1, q)))
                .collect();
            let t = discrete_trig((p * q) as usize, idx.phi(n)).unwrap();
            let mut right: Vec<_> = t.values.iter().map(|&z| key(z)).collect();
            left.sort();
            right.sort();
            assert_eq!(left, right);
        }
    }

    #[test]
    fn sampling_error_bound() {
        let (p, q) = (97i64, 98i64);
        for n in [(3i64, 5i64), (20, 1), (31, 40)] {
            let bound = TAU * (n.0 as f64 / p as f64 + n.1 as f64 / q as f64);
            for i in 0..64 {
                for j in 0..64 {
                    let x = (i as f64 / 64.0 + 1e-3, j as f64 / 64.0 + 2e-3);
                    let exact = C64::from_polar(1.0, TAU * (n.0 as f64 * x.0 + n.1 as f64 * x.1));
                    assert!((exact - tensor_value(p, q, n, x)).norm() <= bound);
                }
            }
        }
    }

    #[test]
    fn orthogonality_and_correlation() {
        let f = TrigPolynomial1D::from_terms([(1, C64::new(1.0, 0.0))]);
        let g = TrigPolynomial1D::from_terms([(2, C64::new(0.5, 1.0))]);
        assert!(strong_orthogonality(&f, &g));
        assert!(correlation_max(&f, &g) < 1e-12);
        let h = TrigPolynomial1D::from_terms([(1, C64::new(0.0, 2.0)), (3, C64::new(1.0, 0.0))]);
        assert!(!strong_orthogonality(&f, &h));
        assert!(correlation_max(&f, &h) > 1e-12);
    }
}
