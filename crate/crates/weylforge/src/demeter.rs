//! Demeter's annulus example, its mollification, the L² modulus of
//! continuity, and the ‖H*_Θ h‖₂ / ‖h‖₂ scaling experiment.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::directional::{
    exterior_ratio, halfplane_spectrum, maximal_directional_with, maximal_halfplane_with, sector_spectrum,
    Direction, DirectionFan, Sector,
};
use crate::spectral::{
    dft2_forward_with, dft2_inverse_with, shift_field, Field2D, GridSpec2D, Spectrum2D, C64,
};
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnnulusSpec {
    pub r_inner: f64,
    pub r_outer: f64,
}

impl AnnulusSpec {
    pub fn new(r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < r_outer) {
            return Err(Error::InvalidArgument(format!(
                "annulus needs 0 < {r_inner} < {r_outer}"
            )));
        }
        Ok(AnnulusSpec { r_inner, r_outer })
    }

    pub fn contains(&self, r: f64) -> bool {
        self.r_inner <= r && r < self.r_outer
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MollifierSpec {
    pub scale: f64,
    pub decay_power: i32,
}

impl MollifierSpec {
    pub fn new(scale: f64, decay_power: i32) -> Result<Self> {
        if !(scale >= 1.0) || decay_power < 4 {
            return Err(Error::InvalidArgument(format!(
                "mollifier needs scale >= 1 and decay_power >= 4, got {scale}, {decay_power}"
            )));
        }
        Ok(MollifierSpec { scale, decay_power })
    }
}

/// 1/‖x‖ on the annulus, zero elsewhere (and at the origin).
pub fn annulus_field(a: AnnulusSpec, g: GridSpec2D) -> Result<Field2D> {
    let half = g.side_length / 2.0;
    if a.r_outer >= half {
        return Err(Error::AnnulusTooLarge { outer: a.r_outer, half });
    }
    Ok(Field2D::from_fn(g, |x1, x2| {
        let r = x1.hypot(x2);
        if r > 0.0 && a.contains(r) {
            C64::new(1.0 / r, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// exp(-1/(1/4 - |ξ|²)) on |ξ| < 1/2.
pub fn bump(xi: f64) -> f64 {
    let d = 0.25 - xi * xi;
    if d > 0.0 {
        (-1.0 / d).exp()
    } else {
        0.0
    }
}

/// K = (φ̌)² normalized to unit mass, where φ̌ is the inverse transform of the
/// bump dilated to radius scale/2. Hence K ≥ 0 and K̂ = c(φ∗φ) lives in
/// B(0, scale).
pub fn mollifier_kernel(m: MollifierSpec, g: GridSpec2D) -> Result<Field2D> {
    mollifier_kernel_with(m, g, Exec::default())
}

pub fn mollifier_kernel_with(m: MollifierSpec, g: GridSpec2D, exec: Exec) -> Result<Field2D> {
    let limit = g.samples as f64 / (4.0 * g.side_length);
    if m.scale > limit {
        return Err(Error::ScaleUnresolvable { scale: m.scale, limit });
    }
    let l = g.side_length;
    let phi = Spectrum2D::from_fn(g, |n1, n2| {
        let xi = (n1 as f64).hypot(n2 as f64) / (l * m.scale);
        C64::new(bump(xi), 0.0)
    });
    let a = dft2_inverse_with(&phi, exec);
    let mut k: Vec<f64> = a.values.iter().map(|v| v.re * v.re).collect();
    let h2 = g.spacing() * g.spacing();
    let mass: f64 = k.iter().sum::<f64>() * h2;
    for v in &mut k {
        *v /= mass;
    }
    Ok(Field2D::from_real(g, k))
}

/// max over |x| > 8/scale of K(x)|x|^p.
pub fn kernel_tail(k: &Field2D, m: MollifierSpec) -> f64 {
    let g = k.spec;
    let r0 = 8.0 / m.scale;
    let mut worst = 0.0f64;
    for i in 0..g.samples {
        let x1 = g.coord(i);
        for j in 0..g.samples {
            let r = x1.hypot(g.coord(j));
            if r > r0 {
                worst = worst.max(k.at(i, j).re.abs() * r.powi(m.decay_power));
            }
        }
    }
    worst
}

/// Periodic convolution by spectrum product.
pub fn mollify(f: &Field2D, k: &Field2D) -> Result<Field2D> {
    mollify_with(f, k, Exec::default())
}

pub fn mollify_with(f: &Field2D, k: &Field2D, exec: Exec) -> Result<Field2D> {
    if f.spec != k.spec {
        return Err(Error::GridMismatch);
    }
    let fs = dft2_forward_with(f, exec);
    let ks = dft2_forward_with(k, exec);
    let coeffs = fs.coeffs.iter().zip(&ks.coeffs).map(|(a, b)| a * b).collect();
    Ok(dft2_inverse_with(&Spectrum2D { spec: f.spec, coeffs }, exec))
}

/// ω₂(δ, f): max of ‖f(·+h) - f‖₂ over |h| = k·spacing ≤ δ (k ≥ 1) at 16
/// angles, every h rounded to whole cells.
pub fn modulus_l2(f: &Field2D, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::DeltaUnresolvable(delta));
    }
    let sp = f.spec.spacing();
    let steps = (delta / sp).round() as i64;
    let mut seen = std::collections::BTreeSet::new();
    let mut best = 0.0f64;
    for k in 1..=steps {
        let r = k as f64 * sp;
        for a in 0..16 {
            let t = TAU * a as f64 / 16.0;
            let h = (r * t.cos(), r * t.sin());
            let cells = ((h.0 / sp).round() as i64, (h.1 / sp).round() as i64);
            if cells == (0, 0) || !seen.insert(cells) {
                continue;
            }
            let s = shift_field(f, h);
            best = best.max(s.field.sub(f).l2_norm());
        }
    }
    Ok(best)
}

/// Grid used for Demeter's h on B(10, N): side 4N, spacing at most 1.
pub fn demeter_grid(n: usize) -> GridSpec2D {
    let l = 4.0 * n as f64;
    let m = (4 * n).next_power_of_two().max(4);
    GridSpec2D::new(l, m).expect("valid grid")
}

pub const DEMETER_INNER: f64 = 10.0;

pub fn demeter_ratio(n: usize, g: GridSpec2D) -> Result<f64> {
    demeter_ratio_with(n, g, Exec::default())
}

pub fn demeter_ratio_with(n: usize, g: GridSpec2D, exec: Exec) -> Result<f64> {
    if g.side_length < 4.0 * n as f64 {
        return Err(Error::InvalidGrid(format!("side {} below 4N = {}", g.side_length, 4 * n)));
    }
    if g.spacing() > DEMETER_INNER / 8.0 {
        return Err(Error::InvalidGrid(format!("spacing {} does not resolve the inner radius", g.spacing())));
    }
    let h = annulus_field(AnnulusSpec::new(DEMETER_INNER, n.max(11) as f64)?, g)?;
    let fan = DirectionFan::new(n);
    let hs = maximal_directional_with(&h, &fan, exec);
    Ok(hs.l2_norm() / h.l2_norm())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemeterRow {
    pub n: usize,
    pub grid: usize,
    pub ratio: f64,
    pub ln_n: f64,
    pub ratio_over_ln: f64,
    pub h_norm_sq: f64,
}

pub fn demeter_row(n: usize, grid: Option<usize>, exec: Exec) -> Result<DemeterRow> {
    let g = match grid {
        Some(m) => GridSpec2D::new(4.0 * n as f64, m)?,
        None => demeter_grid(n),
    };
    let ratio = demeter_ratio_with(n, g, exec)?;
    let h = annulus_field(AnnulusSpec::new(DEMETER_INNER, n.max(11) as f64)?, g)?;
    let ln_n = (n as f64).ln();
    Ok(DemeterRow {
        n,
        grid: g.samples,
        ratio,
        ln_n,
        ratio_over_ln: ratio / ln_n,
        h_norm_sq: h.l2_norm().powi(2),
    })
}

/// ‖T* g‖₂/‖g‖₂ for the half-plane maximal operator.
pub fn halfplane_maximal_ratio(f: &Field2D, fan: &DirectionFan, exec: Exec) -> f64 {
    maximal_halfplane_with(f, fan, exec).l2_norm() / f.l2_norm()
}

/// Least-squares fit y = a·x + b with Pearson correlation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    LinearFit { slope, intercept: my - slope * mx, correlation: sxy / (sxx * syy).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailProjection {
    HalfPlane(Direction),
    Sector(Sector),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailPoint {
    pub delta: f64,
    pub a: f64,
    pub ratio: f64,
}

/// Indicator of the disc of radius δ about the origin.
pub fn disc_indicator(g: GridSpec2D, delta: f64) -> Field2D {
    Field2D::from_fn(g, |x1, x2| C64::new(if x1.hypot(x2) <= delta { 1.0 } else { 0.0 }, 0.0))
}

/// ‖P 1_{B(0,δ)} · 1_{|x| ≥ A}‖₂ / ‖1_{B(0,δ)}‖₂ for every (δ, A) pair.
pub fn tail_sweep(p: TailProjection, g: GridSpec2D, deltas: &[f64], radii: &[f64], exec: Exec) -> Vec<TailPoint> {
    let mut out = Vec::new();
    for &delta in deltas {
        let f = disc_indicator(g, delta);
        let s = dft2_forward_with(&f, exec);
        let s = match p {
            TailProjection::HalfPlane(d) => halfplane_spectrum(&s, d),
            TailProjection::Sector(sec) => sector_spectrum(&s, sec),
        };
        let pf = dft2_inverse_with(&s, exec);
        out.extend(radii.iter().map(|&a| TailPoint { delta, a, ratio: exterior_ratio(&pf, &f, a) }));
    }
    out
}

fn project(p: TailProjection, f: &Field2D, exec: Exec) -> Field2D {
    let s = dft2_forward_with(f, exec);
    let s = match p {
        TailProjection::HalfPlane(d) => halfplane_spectrum(&s, d),
        TailProjection::Sector(sec) => sector_spectrum(&s, sec),
    };
    dft2_inverse_with(&s, exec)
}

fn restrict(f: &mut Field2D, keep: impl Fn(f64) -> bool) {
    let g = f.spec;
    let m = g.samples;
    for i in 0..m {
        for j in 0..m {
            if !keep(g.coord(i).hypot(g.coord(j))) {
                f.values[i * m + j] = C64::new(0.0, 0.0);
            }
        }
    }
}

/// sup over f supported in B(0,δ) of ‖P f · 1_{|x| ≥ A}‖₂ / ‖f‖₂, by power
/// iteration on the restricted operator (P is a self-adjoint projection).
pub fn tail_operator_norm(p: TailProjection, g: GridSpec2D, delta: f64, a: f64, iters: usize, exec: Exec) -> f64 {
    let mut f = disc_indicator(g, delta);
    let mut ratio = 0.0;
    for _ in 0..iters {
        let n = f.l2_norm();
        if n == 0.0 {
            return 0.0;
        }
        let mut pf = project(p, &f, exec);
        restrict(&mut pf, |r| r >= a);
        ratio = pf.l2_norm() / n;
        let mut back = project(p, &pf, exec);
        restrict(&mut back, |r| r <= delta);
        let bn = back.l2_norm();
        f = back.scale(C64::new(1.0 / bn, 0.0));
    }
    ratio
}

/// Slope of ln(ratio) against ln δ at fixed A.
pub fn delta_slope(points: &[TailPoint], a: f64) -> LinearFit {
    let (x, y): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|p| p.a == a).map(|p| (p.delta.ln(), p.ratio.ln())).unzip();
    linear_fit(&x, &y)
}
