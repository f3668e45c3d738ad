//! The five analyses behind the subcommands. Each returns CSV bodies plus a text summary;
//! nothing here touches the filesystem.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;

use d2d_effcap::effcap::{ec_truncated_n1, ec_truncated_n2};
use d2d_effcap::harq::TruncatedTerms;
use d2d_effcap::mode_selection::map_to_hypotheses;
use d2d_effcap::montecarlo::{empirical_detection, empirical_ec, simulate_service_paths, SimConfig};
use d2d_effcap::optimizer::{analytic_gradient_n1, cost_n1, gd_optimize, grid, FrozenCoeffs, GdResult, GradientMode};
use d2d_effcap::{analyze, Analysis, Model, Prior, QueueModel};

use crate::config::{ExperimentConfig, Spacing, SweepVar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    ModeSelect,
    Ec,
    Sweep,
    Optimize,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ModeSelect => "mode-select",
            Command::Ec => "ec",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Validate => "validate",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    /// `(file name, csv body)` in write order.
    pub tables: Vec<(String, String)>,
    pub summary: String,
    pub warnings: Vec<String>,
    /// Set when the computation finished but failed its own checks; tables are still written.
    pub failure: Option<String>,
}

const MODES: [&str; 3] = ["direct", "micro", "macro"];
const QUEUES: [QueueModel; 2] = [QueueModel::N1, QueueModel::N2];

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Report> {
    match cmd {
        Command::ModeSelect => mode_select(cfg),
        Command::Ec => ec(cfg),
        Command::Sweep => sweep(cfg),
        Command::Optimize => optimize(cfg),
        Command::Validate => validate(cfg),
    }
}

fn sim_config(
    cfg: &ExperimentConfig,
    model: &Model<f64>,
    queue_model: QueueModel,
    paths: usize,
    blocks: usize,
) -> SimConfig<f64> {
    SimConfig {
        num_blocks: blocks,
        num_paths: paths,
        arrival_rate: cfg.montecarlo.arrival_rate,
        seed: cfg.montecarlo.seed,
        queue_model,
        schedule: model.schedule,
        sir_model: model.sir_model,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn mode_select(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model()?;
    let losses = model.budget.selection_losses_db();
    let sigma = model.selection.sigma;
    let prof = map_to_hypotheses(losses, sigma, model.selection.rule)?;
    let mc = empirical_detection(losses, sigma, model.selection.rule, cfg.modeselect.mc_trials, cfg.montecarlo.seed)?;
    let mut csv = String::from("hypothesis,pd_analytic,pe_analytic,pd_mc,pe_mc\n");
    let mut s = String::new();
    writeln!(s, "thresholds C_AB = {} dB, C_BC = {} dB", prof.thresholds.0, prof.thresholds.1)?;
    writeln!(s, "{:<4} {:<7} {:>10} {:>10} {:>10} {:>10}", "", "mode", "pd", "pe", "pd_mc", "pe_mc")?;
    for h in 0..3 {
        let pd_mc = mc[h][h];
        writeln!(csv, "H{h},{},{},{},{}", prof.pd[h], prof.pe[h], pd_mc, 1.0 - pd_mc)?;
        writeln!(
            s,
            "H{h:<3} {:<7} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            MODES[h],
            prof.pd[h],
            prof.pe[h],
            pd_mc,
            1.0 - pd_mc
        )?;
    }
    Ok(Report { tables: vec![("mode_select.csv".into(), csv)], summary: s, ..Default::default() })
}

fn closed_forms(a: &Analysis<f64>, theta: f64) -> [Option<f64>; 2] {
    match &a.truncated {
        Some(t) => [Some(ec_truncated_n1(t, theta).ec), Some(ec_truncated_n2(t, theta).ec)],
        None => [None, None],
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn ec(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model()?;
    let a = analyze(&model)?;
    let theta = model.params.theta;
    let closed = closed_forms(&a, theta);
    let mc = &cfg.montecarlo;
    let mut csv =
        String::from("queue_model,closed_form,generic,monte_carlo,ci_lo,ci_hi,rel_closed_generic,rel_generic_mc\n");
    let mut s = String::new();
    writeln!(s, "hypothesis probabilities {:?}", a.hypotheses)?;
    writeln!(s, "service leak n1 {} n2 {}", a.leak[0], a.leak[1])?;
    let mut shared = None;
    for (i, qm) in QUEUES.into_iter().enumerate() {
        let generic = a.ec(qm);
        // the service process does not depend on the queue model unless a queue is simulated
        let paths = match (&shared, mc.arrival_rate > 0.0) {
            (Some(p), false) => p,
            _ => {
                let sc = sim_config(cfg, &model, qm, mc.num_paths, mc.num_blocks);
                shared = Some(simulate_service_paths(&model.params, &model.budget, &a.hypotheses, &sc)?);
                shared.as_ref().unwrap()
            }
        };
        let emp = empirical_ec(paths, theta, mc.seed)?;
        let (lo, hi) = emp.ci.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
        let rc = closed[i].map(|c| rel(c, generic));
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            qm.name(),
            opt(closed[i]),
            generic,
            emp.ec,
            lo,
            hi,
            opt(rc),
            rel(generic, emp.ec)
        )?;
        writeln!(
            s,
            "{}: closed {} generic {} monte-carlo {} (ci {lo}..{hi}), rel closed/generic {}, rel generic/mc {}",
            qm.name(),
            opt(closed[i]),
            generic,
            emp.ec,
            opt(rc),
            rel(generic, emp.ec)
        )?;
        if let Some(q) = paths.queue {
            writeln!(
                s,
                "{} queue: mean backlog {} final {} dropped {}",
                qm.name(),
                q.mean_backlog,
                q.final_backlog,
                q.dropped
            )?;
        }
    }
    Ok(Report { tables: vec![("ec.csv".into(), csv)], summary: s, warnings: a.warnings(), failure: None })
}

/// Grid of the sweep variable.
pub fn sweep_values(cfg: &ExperimentConfig) -> Vec<f64> {
    let sw = &cfg.sweep;
    match sw.spacing {
        Spacing::Linear => grid(sw.lo, sw.hi, sw.steps),
        Spacing::Log => {
            let mut v: Vec<f64> = grid(sw.lo.ln(), sw.hi.ln(), sw.steps).into_iter().map(f64::exp).collect();
            v[0] = sw.lo;
            if let Some(last) = v.last_mut() {
                *last = sw.hi;
            }
            v
        }
    }
}

/// Copy of `cfg` with the sweep variable set to `v`.
pub fn with_value(cfg: &ExperimentConfig, var: SweepVar, v: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match var {
        SweepVar::R => c.system.rate = v,
        SweepVar::Theta => c.system.theta = v,
        SweepVar::Sigma => c.modeselect.sigma = v,
        SweepVar::Beta => c.system.si_beta = v,
        SweepVar::L => {
            let l = v.round();
            if !(l >= 1.0 && l <= u32::MAX as f64) {
                bail!("block length {v} out of range");
            }
            c.system.block_len = l as u32;
        }
    }
    Ok(c)
}

pub struct SweepPoint {
    pub value: f64,
    pub ec: [f64; 2],
    /// Bootstrap half-width of the simulated EC, if simulated.
    pub ci: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn sweep_point(cfg: &ExperimentConfig, var: SweepVar, v: f64) -> Result<SweepPoint> {
    let c = with_value(cfg, var, v)?;
    let model = c.model()?;
    let a = analyze(&model)?;
    let sw = &cfg.sweep;
    let ci = if sw.mc_paths > 0 && sw.mc_blocks > 0 {
        let mut sc = sim_config(&c, &model, QueueModel::N1, sw.mc_paths, sw.mc_blocks);
        sc.arrival_rate = 0.0;
        let paths = simulate_service_paths(&model.params, &model.budget, &a.hypotheses, &sc)?;
        Some(empirical_ec(&paths, model.params.theta, c.montecarlo.seed)?.half_width())
    } else {
        None
    };
    let value = if var == SweepVar::L { f64::from(c.system.block_len) } else { v };
    Ok(SweepPoint { value, ec: [a.n1.ec, a.n2.ec], ci, warnings: a.warnings() })
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let var = cfg.sweep.variable;
    let values = sweep_values(cfg);
    if values.is_empty() {
        bail!("empty sweep grid");
    }
    let points: Vec<SweepPoint> = values.par_iter().map(|&v| sweep_point(cfg, var, v)).collect::<Result<_>>()?;
    let mut csv = String::from("variable,value,ec_n1,ec_n2,ci_n1,ci_n2\n");
    let mut warnings = Vec::new();
    for p in &points {
        let ci = opt(p.ci);
        writeln!(csv, "{},{},{},{},{ci},{ci}", var.name(), p.value, p.ec[0], p.ec[1])?;
        warnings.extend(p.warnings.iter().map(|w| format!("{} = {}: {w}", var.name(), p.value)));
    }
    let best = points.iter().max_by(|a, b| a.ec[0].total_cmp(&b.ec[0])).unwrap();
    let summary = format!(
        "{} points over {} in [{}, {}]; max EC_n1 {} at {}\n",
        points.len(),
        var.name(),
        cfg.sweep.lo,
        cfg.sweep.hi,
        best.ec[0],
        best.value
    );
    Ok(Report { tables: vec![(format!("sweep_{}.csv", var.name()), csv)], summary, warnings, failure: None })
}

fn frozen(t: &TruncatedTerms<f64>, qm: QueueModel, l: f64, theta: f64) -> FrozenCoeffs<f64> {
    match qm {
        QueueModel::N1 => FrozenCoeffs { phi: t.phi, vartheta: t.vartheta, eps_ac: t.p_o_off + t.eps_ac, l, theta },
        QueueModel::N2 => FrozenCoeffs { phi: t.phi, vartheta: t.varrho, eps_ac: t.p_o_off, l, theta },
    }
}

fn trace_csv(res: &GdResult<f64>) -> String {
    let mut s = String::from("iteration,r,value,grad,step\n");
    for (k, st) in res.trace.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{},{},{}", st.r, st.value, st.grad, st.step);
    }
    s
}

pub fn optimize(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model()?;
    let h = &cfg.harq;
    let gd_cfg = cfg.gd();
    let toy = h.toy_optimum;
    let eval = |r: f64| -> Result<[f64; 2]> {
        if let Some(c) = toy {
            let v = -(r - c) * (r - c);
            return Ok([v, v]);
        }
        let mut m = model.clone();
        m.params.rate = r;
        let a = analyze(&m)?;
        Ok([a.n1.ec, a.n2.ec])
    };
    let rs = grid(h.grid_lo, h.grid_hi, h.grid_steps);
    if rs.len() < 2 || !(h.grid_lo < h.grid_hi) {
        bail!("[harq] grid needs grid_lo < grid_hi and grid_steps >= 2");
    }
    let curve: Vec<[f64; 2]> = rs.par_iter().map(|&r| eval(r)).collect::<Result<_>>()?;
    let spacing = rs[1] - rs[0];
    let mut grid_csv = String::from("r,ec_n1,ec_n2\n");
    for (r, v) in rs.iter().zip(&curve) {
        writeln!(grid_csv, "{r},{},{}", v[0], v[1])?;
    }
    let frozen_terms = match (gd_cfg.mode, toy) {
        (GradientMode::AnalyticFrozen, None) => {
            let a = analyze(&model)?;
            Some(a.truncated.ok_or_else(|| anyhow!("analytic-frozen mode needs max_tx = 2"))?)
        }
        _ => None,
    };
    let mut csv = String::from(
        "queue_model,gd_r_star,gd_ec,gd_iterations,gd_converged,grid_r_star,grid_ec,grid_step,within_one_step\n",
    );
    let mut tables = Vec::new();
    let mut s = String::new();
    let mut failure = None;
    for (i, qm) in QUEUES.into_iter().enumerate() {
        let best = (0..rs.len()).fold(0, |b, k| if curve[k][i] > curve[b][i] { k } else { b });
        let res = match (gd_cfg.mode, toy, &frozen_terms) {
            (GradientMode::AnalyticFrozen, Some(c), _) => {
                gd_optimize(|r: f64| Ok(-(r - c) * (r - c)), Some(|r: f64| 2.0 * (r - c)), &gd_cfg)
            }
            (GradientMode::AnalyticFrozen, None, Some(t)) => {
                let fc = frozen(t, qm, model.params.l(), model.params.theta);
                gd_optimize(|r: f64| Ok(-cost_n1(r, &fc)), Some(|r: f64| analytic_gradient_n1(r, &fc)), &gd_cfg)
            }
            _ => gd_optimize(
                |r: f64| eval(r).map(|v| v[i]).map_err(|e| d2d_effcap::Error::Domain(e.to_string())),
                None::<fn(f64) -> f64>,
                &gd_cfg,
            ),
        };
        let res = match res {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert_with(|| format!("{}: gradient ascent failed: {e}", qm.name()));
                continue;
            }
        };
        tables.push((format!("optimize_trace_{}.csv", qm.name()), trace_csv(&res)));
        if !res.converged {
            failure.get_or_insert_with(|| {
                format!("{}: gradient ascent did not converge in {} iterations", qm.name(), res.iterations)
            });
        }
        let gd_ec = eval(res.r_star)?[i];
        let within = (res.r_star - rs[best]).abs() <= spacing * (1.0 + 1e-9);
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            qm.name(),
            res.r_star,
            gd_ec,
            res.iterations,
            res.converged,
            rs[best],
            curve[best][i],
            spacing,
            within
        )?;
        writeln!(
            s,
            "{}: gd r* = {} (EC {gd_ec}, {} iterations), grid r* = {} (EC {}), step {spacing}, within one step: {within}",
            qm.name(),
            res.r_star,
            res.iterations,
            rs[best],
            curve[best][i]
        )?;
    }
    let mut out = vec![("optimize.csv".to_string(), csv), ("optimize_grid.csv".to_string(), grid_csv)];
    out.extend(tables);
    Ok(Report { tables: out, summary: s, warnings: Vec::new(), failure })
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.model()?;
    let a = analyze(&model)?;
    let mut checks: Vec<(&str, f64, f64, bool)> = Vec::new();
    let mass: f64 = a.hypotheses.iter().sum();
    if model.selection.prior != Prior::PaperLiteral {
        checks.push(("hypothesis_mass", (mass - 1.0).abs(), 1e-12, (mass - 1.0).abs() <= 1e-12));
    }
    let row_err = (a.under.sum() - mass).abs().max((a.over.sum() - mass).abs());
    checks.push(("row_mass", row_err, 1e-12, row_err <= 1e-12));
    if let Some(t) = &a.truncated {
        let th = model.params.theta;
        let d1 = rel(ec_truncated_n1(t, th).lambda_plus, a.n1.lambda_plus);
        let d2 = rel(ec_truncated_n2(t, th).lambda_plus, a.n2.lambda_plus);
        checks.push(("closed_vs_generic_n1", d1, 1e-10, d1 <= 1e-10));
        checks.push(("closed_vs_generic_n2", d2, 1e-10, d2 <= 1e-10));
    }
    for (name, r) in [("root_residual_n1", &a.n1), ("root_residual_n2", &a.n2)] {
        let res = r.diagnostics.map_or(0.0, |d| d.residual);
        checks.push((name, res, 1e-12, res <= 1e-12));
    }
    checks.push(("service_leak_n1", a.leak[0], 0.0, a.leak[0] > 0.0));
    checks.push(("service_leak_n2", a.leak[1], 0.0, a.leak[1] > 0.0));
    let mono = a
        .decoding
        .under
        .iter()
        .chain(a.decoding.over.iter())
        .map(|z| z.windows(2).map(|w| (w[1] - w[0]).max(0.0)).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    checks.push(("decoding_error_nonincreasing", mono, 0.0, mono == 0.0));
    let trials = cfg.modeselect.mc_trials;
    let emp = empirical_detection(
        model.budget.selection_losses_db(),
        model.selection.sigma,
        model.selection.rule,
        trials,
        cfg.montecarlo.seed,
    )?;
    let mut worst = 0.0f64;
    for h in 0..3 {
        let p = a.detection.pd[h];
        let sd = (p * (1.0 - p) / trials as f64).sqrt().max(1.0 / trials as f64);
        worst = worst.max((emp[h][h] - p).abs() / sd);
    }
    checks.push(("detection_mc_sigmas", worst, 3.0, worst <= 3.0));
    checks.push(("no_clamp", f64::from(u8::from(a.under.clamped)), 0.0, !a.under.clamped));

    let mut csv = String::from("check,value,tolerance,pass\n");
    let mut s = String::new();
    for (name, v, tol, pass) in &checks {
        writeln!(csv, "{name},{v},{tol},{pass}")?;
        writeln!(s, "{} {name}: {v} (tol {tol})", if *pass { "PASS" } else { "FAIL" })?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.3).map(|c| c.0).collect();
    let failure = (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")));
    Ok(Report { tables: vec![("validate.csv".into(), csv)], summary: s, warnings: a.warnings(), failure })
}
