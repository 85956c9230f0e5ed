//! Directional Hilbert transforms, half-plane and sector projections, and
//! their maximal operators over a fan of directions.

use std::f64::consts::PI;

use crate::spectral::{
    apply_real_multiplier, dft2_forward_with, dft2_inverse_with, Field2D, Spectrum2D, C64,
};
use crate::Exec;

/// Frequencies with |n·u| below this (relative to 1 + |n|) lie on the null line.
pub const NULL_LINE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    pub theta: f64,
}

impl Direction {
    pub fn new(theta: f64) -> Self {
        let t = theta.rem_euclid(2.0 * PI);
        // keep θ = π exactly representable for the last fan direction
        Direction { theta: if (t - 2.0 * PI).abs() < 1e-15 { 0.0 } else { t } }
    }

    pub fn unit(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// -1, 0 or 1 according to the side of the null line.
    pub fn side(&self, n1: i64, n2: i64) -> i8 {
        side_of(self.unit(), n1 as f64, n2 as f64)
    }
}

fn side_of(u: (f64, f64), a: f64, b: f64) -> i8 {
    let dot = a * u.0 + b * u.1;
    let tol = NULL_LINE_TOL * (1.0 + a.hypot(b));
    if dot > tol {
        1
    } else if dot < -tol {
        -1
    } else {
        0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionFan {
    pub directions: Vec<Direction>,
}

impl DirectionFan {
    /// θ_k = πk/N, k = 1..N.
    pub fn new(n: usize) -> Self {
        let directions = (1..=n)
            .map(|k| Direction { theta: PI * k as f64 / n as f64 })
            .collect();
        DirectionFan { directions }
    }

    pub fn count(&self) -> usize {
        self.directions.len()
    }

    /// θ_k for k = 0..=N, with θ_0 = 0.
    pub fn theta(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.directions[k - 1].theta
        }
    }
}

/// S(α, β) = Γ_β ∖ Γ_α.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sector {
    pub alpha: f64,
    pub beta: f64,
}

impl Sector {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Sector { alpha, beta }
    }

    pub fn contains(&self, n1: i64, n2: i64) -> bool {
        Direction::new(self.beta).side(n1, n2) >= 0 && Direction::new(self.alpha).side(n1, n2) < 0
    }

    pub fn indicator(&self, n1: i64, n2: i64) -> f64 {
        if self.contains(n1, n2) {
            1.0
        } else {
            0.0
        }
    }
}

/// Sector membership with both unit vectors precomputed, for real points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorTest {
    alpha: (f64, f64),
    beta: (f64, f64),
}

impl SectorTest {
    pub fn new(s: Sector) -> Self {
        SectorTest { alpha: Direction::new(s.alpha).unit(), beta: Direction::new(s.beta).unit() }
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        side_of(self.beta, x1, x2) >= 0 && side_of(self.alpha, x1, x2) < 0
    }
}

pub fn hilbert_multiplier(d: Direction, n1: i64, n2: i64) -> C64 {
    C64::new(0.0, d.side(n1, n2) as f64)
}

/// (1 + sign(n·u))/2: one inside, one half on the null line.
pub fn halfplane_weight(d: Direction, n1: i64, n2: i64) -> f64 {
    0.5 * (1.0 + d.side(n1, n2) as f64)
}

/// Indicator of the closed half-plane {n·u ≥ 0}.
pub fn halfplane_closed(d: Direction, n1: i64, n2: i64) -> f64 {
    if d.side(n1, n2) >= 0 {
        1.0
    } else {
        0.0
    }
}

pub fn hilbert_spectrum(s: &Spectrum2D, d: Direction) -> Spectrum2D {
    let mut out = s.clone();
    s.for_each_freq(|n1, n2, i| out.coeffs[i] *= hilbert_multiplier(d, n1, n2));
    out
}

pub fn halfplane_spectrum(s: &Spectrum2D, d: Direction) -> Spectrum2D {
    apply_real_multiplier(s, |n1, n2| halfplane_weight(d, n1, n2))
}

pub fn halfplane_closed_spectrum(s: &Spectrum2D, d: Direction) -> Spectrum2D {
    apply_real_multiplier(s, |n1, n2| halfplane_closed(d, n1, n2))
}

pub fn sector_spectrum(s: &Spectrum2D, sector: Sector) -> Spectrum2D {
    apply_real_multiplier(s, |n1, n2| sector.indicator(n1, n2))
}

pub fn hilbert_directional(f: &Field2D, d: Direction) -> Field2D {
    let exec = Exec::default();
    dft2_inverse_with(&hilbert_spectrum(&dft2_forward_with(f, exec), d), exec)
}

pub fn halfplane_projection(f: &Field2D, d: Direction) -> Field2D {
    let exec = Exec::default();
    dft2_inverse_with(&halfplane_spectrum(&dft2_forward_with(f, exec), d), exec)
}

pub fn sector_projection(f: &Field2D, s: Sector) -> Field2D {
    let exec = Exec::default();
    dft2_inverse_with(&sector_spectrum(&dft2_forward_with(f, exec), s), exec)
}

/// Pointwise max over `0..count` of |inverse(mask_k · f̂)|. One transform is
/// materialized at a time per worker.
pub fn maximal_of_masks(
    s: &Spectrum2D,
    count: usize,
    mask: impl Fn(usize, i64, i64) -> C64 + Sync + Send,
    exec: Exec,
) -> Vec<f64> {
    let len = s.spec.len();
    exec.fold(
        count,
        || vec![0.0f64; len],
        |mut acc, k| {
            let mut t = s.clone();
            s.for_each_freq(|n1, n2, i| t.coeffs[i] *= mask(k, n1, n2));
            let field = dft2_inverse_with(&t, Exec::Sequential);
            for (a, v) in acc.iter_mut().zip(&field.values) {
                *a = a.max(v.norm());
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x = x.max(*y);
            }
            a
        },
    )
}

fn real_field(spec: crate::spectral::GridSpec2D, v: Vec<f64>) -> Field2D {
    Field2D::from_real(spec, v)
}

/// H*_Θ f = max_θ |H_θ f|.
pub fn maximal_directional(f: &Field2D, fan: &DirectionFan) -> Field2D {
    maximal_directional_with(f, fan, Exec::default())
}

pub fn maximal_directional_with(f: &Field2D, fan: &DirectionFan, exec: Exec) -> Field2D {
    let s = dft2_forward_with(f, exec);
    let v = maximal_of_masks(&s, fan.count(), |k, a, b| hilbert_multiplier(fan.directions[k], a, b), exec);
    real_field(f.spec, v)
}

/// T* f = max_θ |T_{Γθ} f|.
pub fn maximal_halfplane(f: &Field2D, fan: &DirectionFan) -> Field2D {
    maximal_halfplane_with(f, fan, Exec::default())
}

pub fn maximal_halfplane_with(f: &Field2D, fan: &DirectionFan, exec: Exec) -> Field2D {
    let s = dft2_forward_with(f, exec);
    let v = maximal_of_masks(
        &s,
        fan.count(),
        |k, a, b| C64::new(halfplane_weight(fan.directions[k], a, b), 0.0),
        exec,
    );
    real_field(f.spec, v)
}

/// ‖P f · 1_{|x| ≥ A}‖₂ / ‖f‖₂ for a spectral projection P.
pub fn exterior_ratio(projected: &Field2D, f: &Field2D, a: f64) -> f64 {
    let spec = f.spec;
    let m = spec.samples;
    let mut acc = 0.0;
    for i in 0..m {
        let x1 = spec.coord(i);
        for j in 0..m {
            let x2 = spec.coord(j);
            if x1.hypot(x2) >= a {
                acc += projected.values[i * m + j].norm_sqr();
            }
        }
    }
    spec.spacing() * acc.sqrt() / f.l2_norm()
}
