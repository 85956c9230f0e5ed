//! The experiment registry.

use std::time::Instant;

use weylforge::assembly::{assemble, AssemblyConfig};
use weylforge::bands::{run_pipeline, PipelineConfig};
use weylforge::constants::Constants;
use weylforge::demeter::{demeter_row, linear_fit};
use weylforge::discrete::crt_verify;
use weylforge::divergence::{run_divergence, LabConfig};
use weylforge::majorant::{
    build_c1_series, constructed_witness, mr_upper_check, random_ascent, MultiplierSequence, Permutation, Strategy,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::report::ExperimentReport;
use crate::CliError;

pub fn load_constants(cfg: &ExperimentConfig) -> Result<Constants, CliError> {
    Ok(match &cfg.constants {
        Some(p) => Constants::load(p)?,
        None => Constants::embedded(),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let consts = load_constants(cfg)?;
    let start = Instant::now();
    let mut report = match cfg.experiment {
        Experiment::DemeterScaling => demeter_scaling(cfg, &consts),
        Experiment::MajorantScaling => majorant_scaling(cfg, &consts),
        Experiment::CrtVerify => crt(cfg, &consts),
        Experiment::PipelineBuild => pipeline(cfg, &consts),
        Experiment::MrCheck => mr(cfg, &consts),
        Experiment::C1Build => c1(cfg, &consts),
        Experiment::DivergenceSim => divergence(cfg, &consts),
    }?;
    report.timings.insert("total".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

/// Smallest consecutive difference; +∞ for fewer than two values.
pub fn min_step(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.expect("validated: randomized experiments carry a seed")
}

fn demeter_scaling(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("n", "number of directions"),
            ("grid", "samples per axis"),
            ("ratio", "||H* h||_2 / ||h||_2"),
            ("ln_n", "natural log of n"),
            ("ratio_over_ln", "ratio / ln n"),
        ],
    );
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let t = Instant::now();
        let row = demeter_row(n, cfg.grid, cfg.exec())?;
        r.timings.insert(format!("n={n}"), t.elapsed().as_secs_f64());
        r.row(vec![n as f64, row.grid as f64, row.ratio, row.ln_n, row.ratio_over_ln]);
        rows.push(row);
    }
    let min_ratio = rows.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
    r.verdict("ratio above one", "demeter.min_ratio", k.c("demeter.min_ratio"), min_ratio, min_ratio > k.c("demeter.min_ratio"));
    if rows.len() >= 2 {
        let step = min_step(&rows.iter().map(|x| x.ratio).collect::<Vec<_>>());
        let slack = k.c("monotone.slack");
        r.verdict("strictly increasing", "monotone.slack", slack, step, step > slack);
    }
    let ratios: Vec<f64> = rows.iter().map(|x| x.ratio).collect();
    let mut tail_start = ratios.len().saturating_sub(1);
    while tail_start > 0 && ratios[tail_start - 1] < ratios[tail_start] {
        tail_start -= 1;
    }
    let monotone_from = rows.get(tail_start).map(|x| x.n);
    if rows.len() >= 3 {
        let fit = linear_fit(&rows.iter().map(|x| x.ln_n).collect::<Vec<_>>(), &rows.iter().map(|x| x.ratio).collect::<Vec<_>>());
        let c = k.c("demeter.min_correlation");
        r.verdict("log fit slope positive", "demeter.min_slope", k.c("demeter.min_slope"), fit.slope, fit.slope > k.c("demeter.min_slope"));
        r.verdict("log fit correlation", "demeter.min_correlation", c, fit.correlation, fit.correlation >= c);
        r.details = serde_json::json!({ "rows": rows, "fit": fit, "monotone_from": monotone_from });
    } else {
        r.details = serde_json::json!({ "rows": rows, "monotone_from": monotone_from });
    }
    Ok(r)
}

fn majorant_scaling(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let strategy = Strategy::parse(&cfg.strategy)?;
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("n", "operator size N"),
            ("ln_n", "natural log of N"),
            ("estimate", "lower bound on ||T_{sigma,N}||"),
            ("estimate_over_ln", "estimate / ln N"),
        ],
    );
    let mut per_ln = Vec::new();
    let mut details = Vec::new();
    for &n in &cfg.n {
        let t = Instant::now();
        let est = match strategy {
            Strategy::Witness => {
                let w = constructed_witness(n, k.c("witness.level_factor"), seed(cfg), cfg.exec())?;
                details.push(serde_json::to_value(&w).expect("serializable"));
                w.strong_ratio
            }
            Strategy::RandomAscent => {
                let a = random_ascent(&Permutation::identity(n), k.c("ascent.restarts") as usize, seed(cfg), cfg.exec());
                details.push(serde_json::json!({ "n": n, "sweeps": a.sweeps, "weak": a.weak_norm }));
                a.strong_ratio
            }
        };
        r.timings.insert(format!("n={n}"), t.elapsed().as_secs_f64());
        let ln = (n as f64).ln();
        r.row(vec![n as f64, ln, est, est / ln]);
        per_ln.push(est / ln);
    }
    match strategy {
        Strategy::Witness => {
            let (lo, hi) = (k.c("witness.band_lo"), k.c("witness.band_hi"));
            let min = per_ln.iter().copied().fold(f64::INFINITY, f64::min);
            let max = per_ln.iter().copied().fold(0.0, f64::max);
            r.verdict("estimate/ln N above band floor", "witness.band_lo", lo, min, min >= lo);
            r.verdict("estimate/ln N below band ceiling", "witness.band_hi", hi, max, max <= hi);
        }
        Strategy::RandomAscent => {
            let neg: Vec<f64> = per_ln.iter().map(|x| -x).collect();
            let step = min_step(&neg);
            let slack = k.c("monotone.slack");
            r.verdict("identity estimate/ln N decreasing", "monotone.slack", slack, step, step > slack);
        }
    }
    r.details = serde_json::Value::Array(details);
    Ok(r)
}

fn crt(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let t = Instant::now();
    let rep = crt_verify(cfg.max_q, cfg.exhaustive, cfg.exec())?;
    let secs = t.elapsed().as_secs_f64();
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("p", "smaller modulus"),
            ("q", "larger modulus"),
            ("tuples", "(n, u) tuples checked"),
            ("failures", "tuples violating the identity"),
            ("phi_bijective", "1 if phi is a bijection"),
            ("psi_bijective", "1 if psi is a bijection"),
        ],
    );
    r.timings.insert("verify".into(), secs);
    for p in &rep.results {
        r.row(vec![
            p.p as f64,
            p.q as f64,
            p.tuples as f64,
            p.failures as f64,
            f64::from(u8::from(p.phi_bijective)),
            f64::from(u8::from(p.psi_bijective)),
        ]);
    }
    let allowed = k.c("crt.max_failures");
    r.verdict("identity failures", "crt.max_failures", allowed, rep.failures as f64, rep.failures as f64 <= allowed);
    let bij = rep.results.iter().filter(|p| !(p.phi_bijective && p.psi_bijective)).count();
    r.verdict("non-bijective pairs", "crt.max_failures", allowed, bij as f64, bij as f64 <= allowed);
    if cfg.exhaustive {
        let want: u64 = rep.results.iter().map(|p| ((p.p * p.q) as u64).pow(2)).sum();
        r.verdict("tuple count equals sum of (pq)^2", "crt.max_failures", allowed, (rep.tuples as f64 - want as f64).abs(), rep.tuples == want);
    }
    r.details = serde_json::json!({ "pairs": rep.pairs, "tuples": rep.tuples, "failures": rep.failures });
    Ok(r)
}

fn pipeline(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("n", "number of bands"),
            ("band_ratio", "majorant ratio of the g_k family"),
            ("q_ratio", "majorant ratio of the Q_k family"),
            ("q_over_band", "q_ratio / band_ratio"),
            ("disjoint", "1 if Q spectra are pairwise disjoint"),
            ("min_freq", "smallest Q frequency"),
            ("max_freq", "largest Q frequency"),
            ("spectrum_cap", "allowed largest frequency"),
        ],
    );
    let floor = k.c("pipeline.min_q_over_band");
    let mut details = Vec::new();
    for &n in &cfg.n {
        let t = Instant::now();
        let pcfg = PipelineConfig::desk(n);
        let pipe = run_pipeline(&pcfg, cfg.exec())?;
        let asm = assemble(&pipe, &AssemblyConfig::desk(pcfg.samples), cfg.exec())?;
        r.timings.insert(format!("n={n}"), t.elapsed().as_secs_f64());
        let a = &asm.report;
        r.row(vec![
            n as f64,
            a.band_ratio,
            a.q_ratio,
            a.q_over_band,
            f64::from(u8::from(a.disjoint)),
            a.min_freq as f64,
            a.max_freq as f64,
            a.params.spectrum_cap as f64,
        ]);
        r.verdict(&format!("N={n} Q ratio preserved"), "pipeline.min_q_over_band", floor, a.q_over_band, a.q_over_band >= floor);
        let inside = a.disjoint && a.min_freq >= 1 && a.max_freq <= a.params.spectrum_cap;
        r.verdict(&format!("N={n} spectra disjoint inside [1, cap]"), "pipeline.max_violations", k.c("pipeline.max_violations"), f64::from(u8::from(!inside)), inside);
        details.push(serde_json::json!({ "pipeline": pipe.report, "assembly": asm.report }));
    }
    r.details = serde_json::Value::Array(details);
    Ok(r)
}

fn mr(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("n", "operator size N"),
            ("trials", "random trials"),
            ("max_ratio", "largest strong ratio"),
            ("max_over_ln", "max_ratio / ln N"),
            ("mean_ratio", "mean strong ratio"),
            ("max_weak", "largest weak-norm ratio, reported without a verdict"),
        ],
    );
    let bound = k.c("mr.max_over_ln");
    let mut worst: f64 = 0.0;
    for &n in &cfg.n {
        let t = Instant::now();
        let m = mr_upper_check(n, cfg.trials, seed(cfg), cfg.exec())?;
        r.timings.insert(format!("n={n}"), t.elapsed().as_secs_f64());
        r.row(vec![n as f64, m.trials as f64, m.max_ratio, m.max_over_ln, m.mean_ratio, m.max_weak]);
        worst = worst.max(m.max_over_ln);
    }
    r.verdict("max strong ratio / ln N", "mr.max_over_ln", bound, worst, worst < bound);
    Ok(r)
}

fn c1(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let w = MultiplierSequence::parse(&cfg.multiplier)?;
    let rep = build_c1_series(w, cfg.stages, cfg.cap, seed(cfg), cfg.exec())?;
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("k", "stage"),
            ("n_k", "stage size N_k"),
            ("weight_at_2nk", "w(2 N_k)"),
            ("scale", "coefficient scale 1/(k sqrt(w(2 N_k)))"),
            ("exceedance", "measure of {block max > 1}"),
            ("weight_sum", "running sum |c_n|^2 w(n)"),
        ],
    );
    for s in &rep.stages {
        r.row(vec![s.k as f64, s.n_k, s.weight_at_2nk, s.scale, s.exceedance, s.weight_sum]);
    }
    let slack = k.c("c1.weight_slack");
    r.verdict("weighted coefficient sum bounded", "c1.weight_slack", rep.weight_limit * slack, rep.weight_sum, rep.weight_sum <= rep.weight_limit * slack);
    r.verdict("all stages built", "c1.weight_slack", cfg.stages as f64, rep.stages.len() as f64, rep.stages.len() == cfg.stages);
    r.details = serde_json::to_value(&rep).expect("serializable");
    Ok(r)
}

pub fn lab_config(cfg: &ExperimentConfig, k: &Constants) -> LabConfig {
    let mut lab = LabConfig::desk(cfg.levels, cfg.rho, seed(cfg));
    lab.lambda_factor = k.c("div.lambda_factor");
    lab.density = k.c("div.density");
    lab.target_shift = k.c("div.target_shift");
    lab.stage_scale = k.c("div.stage_scale");
    lab.growth_bound = k.c("div.growth_bound");
    lab.growth_threshold = k.c("div.growth_threshold");
    lab.samples = cfg.samples;
    lab
}

fn divergence(cfg: &ExperimentConfig, k: &Constants) -> Result<ExperimentReport, CliError> {
    let lab = lab_config(cfg, k);
    let rep = run_divergence(&lab, k.c("div.oscillation_c"), cfg.exec())?;
    let mut r = ExperimentReport::new(
        cfg,
        k,
        &[
            ("s", "stage"),
            ("first_level", "first level of the stage"),
            ("last_level", "last level of the stage"),
            ("complete", "1 if the predicted tail reached its target"),
            ("predicted", "exact Bernoulli tail P(sum b_k 1_{E_k} > s)"),
            ("measured", "sampled measure of restricted sums above s*scale/2"),
        ],
    );
    for s in &rep.stages {
        r.row(vec![s.s as f64, s.first_level as f64, s.last_level as f64, f64::from(u8::from(s.complete)), s.predicted, s.measured]);
    }
    let zero = k.c("div.max_independence_failures");
    let f = rep.independence.failures as f64;
    r.verdict("independence identity", "div.max_independence_failures", zero, f, f <= zero);
    let step = min_step(&rep.stages.iter().map(|s| s.measured).collect::<Vec<_>>());
    let slack = k.c("monotone.slack");
    r.verdict("stage measures nondecreasing", "monotone.slack", -slack, step, step >= -slack);
    let last = rep.stages.last().map_or(0.0, |s| s.measured);
    let floor = k.c("div.final_min");
    r.verdict("final stage measure", "div.final_min", floor, last, last >= floor);
    let tol = k.c("div.guard_tol");
    let g = &rep.guards;
    r.verdict("inverse-nu guard Cauchy", "div.guard_tol", tol, g.inverse_nu_cauchy, g.inverse_nu_cauchy < tol);
    r.verdict("mass guard Cauchy", "div.guard_tol", tol, g.mass_cauchy, g.mass_cauchy < tol);
    let pig = u8::from(!rep.block.pigeonhole) as f64;
    r.verdict("quarter pigeonhole", "div.max_independence_failures", zero, pig, rep.block.pigeonhole);
    r.verdict("oscillation bound", "div.oscillation_c", k.c("div.oscillation_c"), u8::from(!rep.oscillation_ok) as f64, rep.oscillation_ok);
    r.verdict("weights bounded by one", "div.max_independence_failures", zero, u8::from(!rep.weights_bounded) as f64, rep.weights_bounded);
    let gt = k.c("div.growth_threshold");
    r.verdict("weight series grows", "div.growth_threshold", gt, rep.divergence_growth, rep.divergence_growth >= gt);
    let ct = k.c("div.convergent_tol");
    r.verdict("squared series Cauchy", "div.convergent_tol", ct, rep.convergent_tail, rep.convergent_tail < ct);
    r.details = serde_json::to_value(&rep).expect("serializable");
    Ok(r)
}
