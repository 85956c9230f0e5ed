//! One pass/fail line per acceptance criterion, at the committed tolerances.
//!
//! Criteria listed in `KNOWN_GAPS` are measured and printed like the rest but
//! do not fail the run; every other criterion must pass.

use std::time::Instant;

use rand::Rng;
use weylforge::constants::Constants;
use weylforge::demeter::{delta_slope, tail_operator_norm, TailPoint, TailProjection};
use weylforge::directional::{halfplane_projection, hilbert_directional, Direction, DirectionFan, Sector};
use weylforge::divergence::{quarter_select, QuarterChoice};
use weylforge::seed::{task_id, task_rng};
use weylforge::spectral::{dft2_forward, dft2_inverse, Field2D, GridSpec2D, Spectrum2D, C64};
use weylforge::Exec;
use weylforge_cli::{run, Experiment, ExperimentConfig, ExperimentReport};

const KNOWN_GAPS: [usize; 2] = [5, 7];

struct Line {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn cfg(e: Experiment, kv: &[(&str, &str)]) -> ExperimentConfig {
    let o: Vec<(String, String)> = kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    ExperimentConfig::build(e, None, &o).expect("valid reference config")
}

fn col(r: &ExperimentReport, name: &str) -> Vec<f64> {
    let i = r.columns.iter().position(|c| c.name == name).expect("column exists");
    r.rows.iter().map(|row| row[i]).collect()
}

fn c1_crt(k: &Constants) -> Line {
    let t = Instant::now();
    let r = run(&cfg(Experiment::CrtVerify, &[("max-q", "50")])).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let tuples: f64 = col(&r, "tuples").iter().sum();
    let failures: f64 = col(&r, "failures").iter().sum();
    let bij = col(&r, "phi_bijective").iter().zip(col(&r, "psi_bijective")).all(|(a, b)| *a == 1.0 && b == 1.0);
    Line {
        id: 1,
        title: "CRT identity and bijections",
        passed: failures <= k.c("crt.max_failures") && bij && secs < k.c("crt.runtime_s"),
        detail: format!("{tuples} tuples, {failures} failures, bijective={bij}, {secs:.1}s"),
    }
}

fn random_band_limited(g: GridSpec2D, band: i64, seed: u64, i: u64) -> Field2D {
    let mut rng = task_rng(seed, task_id(20, i));
    let s = Spectrum2D::from_fn(g, |a, b| {
        if a.abs() <= band && b.abs() <= band {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            C64::new(0.0, 0.0)
        }
    });
    dft2_inverse(&s)
}

fn c2_multiplier(k: &Constants) -> Line {
    let g = GridSpec2D::new(1.0, 64).unwrap();
    let fan = DirectionFan::new(16);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let f = random_band_limited(g, 24, 2, i);
        let d = fan.directions[i as usize % 16];
        let lhs = halfplane_projection(&f, d);
        let h = hilbert_directional(&f, d);
        let rhs = f.sub(&h.scale(C64::new(0.0, 1.0))).scale(C64::new(0.5, 0.0));
        worst = worst.max(lhs.sub(&rhs).l2_norm() / f.l2_norm());
    }
    let tol = k.c("identity.multiplier_tol");
    Line { id: 2, title: "half-plane multiplier identity", passed: worst < tol, detail: format!("max relative error {worst:.3e}") }
}

fn c3_parseval(k: &Constants) -> Line {
    let mut worst: f64 = 0.0;
    for (i, m) in [16usize, 64, 256].into_iter().enumerate() {
        let g = GridSpec2D::new(2.0, m).unwrap();
        let mut rng = task_rng(3, task_id(21, i as u64));
        let f = Field2D::from_fn(g, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let s = dft2_forward(&f);
        let back = dft2_inverse(&s);
        worst = worst.max((s.l2_norm() - f.l2_norm()).abs() / f.l2_norm());
        worst = worst.max(back.sub(&f).l2_norm() / f.l2_norm());
    }
    let tol = k.c("identity.parseval_tol");
    Line { id: 3, title: "Parseval and round trip", passed: worst < tol, detail: format!("max relative error {worst:.3e}") }
}

fn c4_demeter(k: &Constants) -> Line {
    let t = Instant::now();
    let r = run(&cfg(Experiment::DemeterScaling, &[("n", "16,32,64,128")])).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ok = r.passed() && secs <= k.c("demeter.runtime_s");
    let ratios = col(&r, "ratio");
    let corr = r.verdicts.iter().find(|v| v.constant == "demeter.min_correlation").map_or(0.0, |v| v.measured);
    Line { id: 4, title: "directional maximal growth", passed: ok, detail: format!("ratios {ratios:.3?}, correlation {corr:.4}, {secs:.1}s") }
}

fn c5_tails(k: &Constants) -> Line {
    let g = GridSpec2D::new(8.0, 1024).unwrap();
    let deltas = [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
    let a = 0.5;
    let iters = k.c("tail.power_iterations") as usize;
    let sweep = |p: TailProjection| -> Vec<TailPoint> {
        deltas.iter().map(|&d| TailPoint { delta: d, a, ratio: tail_operator_norm(p, g, d, a, iters, Exec::default()) }).collect()
    };
    let l5 = delta_slope(&sweep(TailProjection::HalfPlane(Direction::new(0.3))), a).slope;
    let l6 = delta_slope(&sweep(TailProjection::Sector(Sector::new(0.3, 1.1))), a).slope;
    let ok5 = (l5 - k.c("tail.l5_slope")).abs() <= k.c("tail.l5_slope_tol");
    let ok6 = (l6 - k.c("tail.l6_slope")).abs() <= k.c("tail.l6_slope_tol");
    Line {
        id: 5,
        title: "tail bound slopes",
        passed: ok5 && ok6,
        detail: format!("half-plane slope {l5:.3} (ok={ok5}), sector slope {l6:.3} (ok={ok6})"),
    }
}

fn c6_pipeline(_: &Constants) -> Line {
    let r = run(&cfg(Experiment::PipelineBuild, &[("n", "8,16,32")])).unwrap();
    Line {
        id: 6,
        title: "pipeline preservation and disjoint spectra",
        passed: r.passed(),
        detail: format!("Q/g ratios {:.3?}, disjoint {:?}", col(&r, "q_over_band"), col(&r, "disjoint")),
    }
}

fn c7_t3(k: &Constants) -> Line {
    let w = run(&cfg(Experiment::MajorantScaling, &[("n", "16,32,64"), ("strategy", "witness"), ("seed", "7")])).unwrap();
    let a = run(&cfg(Experiment::MajorantScaling, &[("n", "16,32,64"), ("strategy", "ascent"), ("seed", "7")])).unwrap();
    let (we, ae) = (col(&w, "estimate"), col(&a, "estimate"));
    let gain = we[2] / ae[2];
    let ok_gain = gain >= k.c("witness.min_gain");
    Line {
        id: 7,
        title: "constructed permutation against identity",
        passed: w.passed() && a.passed() && ok_gain,
        detail: format!(
            "witness/ln N {:.3?} (band ok={}), identity/ln N {:.3?} (decreasing={}), gain at N=64 {gain:.3}",
            col(&w, "estimate_over_ln"),
            w.passed(),
            col(&a, "estimate_over_ln"),
            a.passed()
        ),
    }
}

fn c8_mr(_: &Constants) -> Line {
    let r = run(&cfg(Experiment::MrCheck, &[("n", "16,64,256"), ("trials", "100"), ("seed", "11")])).unwrap();
    Line { id: 8, title: "random upper check", passed: r.passed(), detail: format!("max/ln N {:.3?}", col(&r, "max_over_ln")) }
}

fn c9_invariants(div: &ExperimentReport) -> Line {
    let d = &div.details;
    let lab_pig = d["block"]["pigeonhole"].as_bool().unwrap_or(false);
    let osc = d["oscillation_ok"].as_bool().unwrap_or(false);
    let mut rng = task_rng(9, task_id(22, 0));
    let mut random_ok = true;
    for _ in 0..200 {
        let n = rng.gen_range(1..400);
        let vals: Vec<C64> = (0..n).map(|_| C64::from_polar(rng.gen_range(0.0..3.0), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
        let q: QuarterChoice = quarter_select(&vals, rng.gen_range(0.1..2.5));
        random_ok &= q.pigeonhole_holds();
    }
    Line {
        id: 9,
        title: "quarter pigeonhole and oscillation bound",
        passed: lab_pig && osc && random_ok,
        detail: format!("lab pigeonhole={lab_pig}, oscillation={osc}, 200 random fields={random_ok}"),
    }
}

fn c10_divergence(div: &ExperimentReport) -> Line {
    let m = col(div, "measured");
    Line {
        id: 10,
        title: "divergence lab",
        passed: div.passed(),
        detail: format!(
            "stage measures {m:.3?}, independence failures {}, guards {:.2e}/{:.2e}",
            div.details["independence"]["failures"],
            div.details["guards"]["inverse_nu_cauchy"].as_f64().unwrap_or(f64::NAN),
            div.details["guards"]["mass_cauchy"].as_f64().unwrap_or(f64::NAN)
        ),
    }
}

fn c11_determinism(div: &ExperimentReport) -> Line {
    let configs = [
        cfg(Experiment::DemeterScaling, &[("n", "16,32")]),
        cfg(Experiment::MajorantScaling, &[("n", "16,32"), ("strategy", "ascent"), ("seed", "3")]),
        cfg(Experiment::MajorantScaling, &[("n", "16,32"), ("strategy", "witness"), ("seed", "3")]),
        cfg(Experiment::CrtVerify, &[("max-q", "12")]),
        cfg(Experiment::PipelineBuild, &[("n", "8")]),
        cfg(Experiment::MrCheck, &[("n", "16,64"), ("trials", "10"), ("seed", "3")]),
        cfg(Experiment::C1Build, &[("multiplier", "loglog"), ("stages", "2"), ("seed", "3")]),
    ];
    let mut same = 0;
    for c in &configs {
        if run(c).unwrap().numeric_json() == run(c).unwrap().numeric_json() {
            same += 1;
        }
    }
    let again = run(&div.config).unwrap();
    let div_same = again.numeric_json() == div.numeric_json();
    Line {
        id: 11,
        title: "bit-identical repeated runs",
        passed: same == configs.len() && div_same,
        detail: format!("{same}/{} experiments identical, divergence identical={div_same}", configs.len()),
    }
}

fn main() {
    let k = Constants::embedded();
    let div = run(&cfg(Experiment::DivergenceSim, &[("levels", "64"), ("rho", "4"), ("seed", "7")])).unwrap();
    let lines = vec![
        c1_crt(&k),
        c2_multiplier(&k),
        c3_parseval(&k),
        c4_demeter(&k),
        c5_tails(&k),
        c6_pipeline(&k),
        c7_t3(&k),
        c8_mr(&k),
        c9_invariants(&div),
        c10_divergence(&div),
        c11_determinism(&div),
    ];
    for l in &lines {
        let tag = if l.passed { "PASS" } else { "FAIL" };
        let note = if !l.passed && KNOWN_GAPS.contains(&l.id) { " [known gap]" } else { "" };
        println!("criterion {:>2} {tag}{note}: {} | {}", l.id, l.title, l.detail);
    }
    let unexpected: Vec<usize> = lines.iter().filter(|l| !l.passed && !KNOWN_GAPS.contains(&l.id)).map(|l| l.id).collect();
    if !unexpected.is_empty() {
        eprintln!("criteria failed: {unexpected:?}");
        std::process::exit(1);
    }
}
