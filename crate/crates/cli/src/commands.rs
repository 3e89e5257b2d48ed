//! Command bodies. Each returns a table, a JSON summary, statistics-class
//! warnings and integrity-class failures; nothing here touches the disk.

use serde::Serialize;
use serde_json::{json, Value};

use reslab::asymptotics::{lyapunov, phase_scan};
use reslab::diagnostics::{classify_replicate, dos_scan, gamma_trace, summarize_classes, GreenEngine};
use reslab::parallel::try_ordered_map;
use reslab::resonance::{calibrate_cutoff, g_bound_sweep, resonance_report};
use reslab::verify::run_suite;
use reslab::{OperatorModel, Result, TopologySpec};

use crate::config::{Command, RunConfig};
use crate::output::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrityRecord {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub table: Table,
    pub summary: Value,
    pub warnings: Vec<String>,
    pub failures: Vec<IntegrityRecord>,
}

impl Artifacts {
    fn new(table: Table, summary: Value) -> Self {
        Artifacts {
            table,
            summary,
            warnings: Vec::new(),
            failures: Vec::new(),
        }
    }
}

/// Constants the plotting side draws as reference lines.
pub fn reference_values(model: &OperatorModel) -> Value {
    let mut r = serde_json::Map::new();
    match model.graph.spec() {
        TopologySpec::Tree { k, .. } => {
            let k = *k as f64;
            r.insert("k".into(), json!(k));
            r.insert("log_sqrt_k".into(), json!(0.5 * k.ln()));
            r.insert("log_k".into(), json!(k.ln()));
            r.insert("band_edges".into(), json!([-2.0 * k.sqrt(), 2.0 * k.sqrt()]));
        }
        TopologySpec::Box { dims } => {
            let d = dims.len() as f64;
            r.insert("band_edges".into(), json!([-2.0 * d, 2.0 * d]));
        }
        _ => {}
    }
    if model.lambda > 0.0 && model.dist.has_density() {
        if let Ok(w) = model.effective_density_sup() {
            r.insert("wegner_bound".into(), json!(w));
        }
    }
    Value::Object(r)
}

fn model_header(cfg: &RunConfig, model: &OperatorModel) -> Value {
    json!({
        "topology": model.graph.spec(),
        "vertices": model.vertex_count(),
        "dist": model.dist,
        "lambda": model.lambda,
        "seed": cfg.seed,
    })
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> std::result::Result<Artifacts, crate::error::CliError> {
    if cmd == Command::VerifyAll {
        return Ok(verify_all(cfg)?);
    }
    let model = cfg.model()?;
    Ok(match cmd {
        Command::Green => green(cfg, &model)?,
        Command::Dos => dos(cfg, &model)?,
        Command::GammaScan => gamma_scan(cfg, &model)?,
        Command::Resonance => resonance(cfg, &model)?,
        Command::Lyapunov => lyapunov_cmd(cfg, &model)?,
        Command::PhaseScan => phase(cfg, &model)?,
        Command::VerifyAll => unreachable!(),
    })
}

fn green(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let engine = GreenEngine::for_model(model, cfg.boundary);
    let x = cfg.site.unwrap_or(model.graph.origin());
    let energies = cfg.energies(Command::Green);
    let traces = try_ordered_map(cfg.replicates, |r| {
        let sample = model.sample_potential(r as u64);
        energies
            .iter()
            .map(|&e| Ok((sample.values[x], gamma_trace(model, &sample, x, e, &cfg.ladder, engine)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut t = Table::new(&[
        "E", "eta", "replicate", "re_G", "im_G", "re_Sigma", "im_Sigma", "gamma", "kappa",
    ]);
    for (i, &e) in energies.iter().enumerate() {
        for (r, per) in traces.iter().enumerate() {
            let (v, trace) = &per[i];
            for p in &trace.points {
                let sigma = v - 1.0 / p.green;
                t.push(vec![
                    e.into(),
                    p.eta.into(),
                    r.into(),
                    p.green.re.into(),
                    p.green.im.into(),
                    sigma.re.into(),
                    sigma.im.into(),
                    p.gamma_sum.into(),
                    p.kappa.into(),
                ]);
            }
        }
    }
    let summary = json!({
        "command": "green",
        "model": model_header(cfg, model),
        "site": x,
        "engine": engine,
        "energies": energies,
        "etas": cfg.ladder.etas(),
        "replicates": cfg.replicates,
        "reference": reference_values(model),
    });
    Ok(Artifacts::new(t, summary))
}

fn gamma_scan(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let engine = GreenEngine::for_model(model, cfg.boundary);
    let energies = cfg.energies(Command::GammaScan);
    let mut t = Table::new(&["E", "eta", "gamma", "kappa", "imG", "verdict", "replicate"]);
    let mut classes = Vec::with_capacity(energies.len());
    for &e in &energies {
        let per = try_ordered_map(cfg.replicates, |r| {
            classify_replicate(model, r as u64, e, &cfg.ladder, &cfg.thresholds, engine)
        })?;
        for (r, c) in per.iter().enumerate() {
            for p in &c.trace.points {
                t.push(vec![
                    e.into(),
                    p.eta.into(),
                    p.gamma_sum.into(),
                    p.kappa.into(),
                    p.im_g.into(),
                    c.verdict.verdict.as_str().into(),
                    r.into(),
                ]);
            }
        }
        classes.push(summarize_classes(e, &per));
    }
    let summary = json!({
        "command": "gamma-scan",
        "model": model_header(cfg, model),
        "engine": engine,
        "ladder": cfg.ladder,
        "thresholds": cfg.thresholds,
        "classifications": classes,
        "reference": reference_values(model),
    });
    Ok(Artifacts::new(t, summary))
}

fn dos(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let engine = GreenEngine::for_model(model, cfg.boundary);
    let energies = cfg.energies(Command::Dos);
    let est = dos_scan(model, &energies, cfg.eta, cfg.replicates, engine, cfg.dos_method)?;
    let mut t = Table::new(&["E", "eta", "n_hat", "stderr", "wegner_bound", "wegner_ok"]);
    let mut warnings = Vec::new();
    for d in &est {
        t.push(vec![
            d.e.into(),
            d.eta.into(),
            d.n_hat.into(),
            d.stderr.into(),
            d.wegner_bound.unwrap_or(f64::NAN).into(),
            d.wegner_ok.into(),
        ]);
        if !d.wegner_ok {
            warnings.push(format!(
                "dos at E = {}: {} exceeds the Wegner bound by more than 3 stderr",
                d.e, d.n_hat
            ));
        }
    }
    let summary = json!({
        "command": "dos",
        "model": model_header(cfg, model),
        "engine": engine,
        "method": cfg.dos_method,
        "eta": cfg.eta,
        "replicates": cfg.replicates,
        "all_below_wegner": est.iter().all(|d| d.wegner_ok),
        "reference": reference_values(model),
    });
    let mut a = Artifacts::new(t, summary);
    a.warnings = warnings;
    Ok(a)
}

fn resonance(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let e = cfg.energies(Command::Resonance)[0];
    let s = &cfg.resonance;
    let cutoff = calibrate_cutoff(model, e, cfg.radius, s)?;
    let report = resonance_report(model, e, cfg.radius, cfg.replicates, &cutoff, s)?;
    let sweep = if cfg.g_sweep_replicates > 0 {
        Some(g_bound_sweep(model, e, &cutoff, cfg.g_sweep_replicates, s)?)
    } else {
        None
    };
    let mut t = Table::new(&["replicate", "R", "N_R"]);
    for (r, &n) in report.n_r.iter().enumerate() {
        t.push(vec![r.into(), report.r.into(), n.into()]);
    }
    let mut warnings = Vec::new();
    if !report.first_moment_holds {
        warnings.push("first-moment bound missed by more than 3 stderr".to_string());
    }
    if report.second_moment_holds == Some(false) {
        warnings.push("second-moment ratio above its bound by more than 3 stderr".to_string());
    }
    if !report.degenerate && !report.pz_holds {
        warnings.push("Paley-Zygmund comparison missed by more than 3 stderr".to_string());
    }
    if report.degenerate {
        warnings.push("no resonances counted; moment comparisons skipped".to_string());
    }
    let mut body = serde_json::to_value(&report).expect("report serializes");
    if let Value::Object(m) = &mut body {
        m.remove("n_r");
    }
    let summary = json!({
        "command": "resonance",
        "model": model_header(cfg, model),
        "settings": s,
        "cutoff": cutoff,
        "report": body,
        "g_bound": sweep.map(|g| json!({
            "natural": g.natural,
            "forced": g.forced,
            "occurrences": g.occurrences(),
            "min_g": g.min_g,
            "g_floor": g.g_floor,
        })),
        "reference": reference_values(model),
    });
    Ok(Artifacts {
        table: t,
        summary,
        warnings,
        failures: Vec::new(),
    })
}

fn lyapunov_cmd(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let energies = cfg.energies(Command::Lyapunov);
    let mut t = Table::new(&[
        "E", "lambda", "L0", "L0_err", "L1", "L1_err", "ordered", "above_half_log_k",
    ]);
    let mut estimates = Vec::with_capacity(energies.len());
    let mut warnings = Vec::new();
    for &e in &energies {
        let l = lyapunov(model, e, &cfg.decay)?;
        t.push(vec![
            e.into(),
            model.lambda.into(),
            l.l0.value.into(),
            l.l0.stderr.into(),
            l.l1.value.into(),
            l.l1.stderr.into(),
            l.ordered.into(),
            l.above_half_log_k.into(),
        ]);
        if !l.ordered {
            warnings.push(format!("E = {e}: L1 exceeds L0 by more than 3 stderr"));
        }
        if l.l0.flagged || l.l1.flagged {
            warnings.push(format!("E = {e}: decay fit below the R² threshold"));
        }
        estimates.push(l);
    }
    let summary = json!({
        "command": "lyapunov",
        "model": model_header(cfg, model),
        "decay": cfg.decay,
        "estimates": estimates,
        "reference": reference_values(model),
    });
    Ok(Artifacts {
        table: t,
        summary,
        warnings,
        failures: Vec::new(),
    })
}

fn phase(cfg: &RunConfig, model: &OperatorModel) -> Result<Artifacts> {
    let energies = cfg.energies(Command::PhaseScan);
    let lambdas = cfg.lambdas();
    let cells = phase_scan(model, &energies, &lambdas, &cfg.decay)?;
    let mut t = Table::new(&[
        "E", "lambda", "L0", "L0_err", "L1", "L1_err", "verdict", "s", "sum_trace_tail",
    ]);
    let mut warnings = Vec::new();
    let mut verdicts = Vec::with_capacity(cells.len());
    for c in &cells {
        match &c.result {
            Ok(v) => {
                let l = &v.lyapunov;
                t.push(vec![
                    c.e.into(),
                    c.lambda.into(),
                    l.l0.value.into(),
                    l.l0.stderr.into(),
                    l.l1.value.into(),
                    l.l1.stderr.into(),
                    v.verdict.as_str().into(),
                    v.s.into(),
                    v.increments.last().copied().unwrap_or(f64::NAN).into(),
                ]);
                verdicts.push(json!({
                    "E": c.e,
                    "lambda": c.lambda,
                    "verdict": v.verdict,
                    "dos": v.dos,
                    "increment_slope": v.increment_slope,
                    "delocalization_test": v.delocalization_test,
                    "localization_test": v.localization_test,
                }));
            }
            Err(msg) => {
                let nan = Cell::F(f64::NAN);
                t.push(vec![
                    c.e.into(),
                    c.lambda.into(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    "error".into(),
                    cfg.decay.s.into(),
                    nan,
                ]);
                warnings.push(format!("cell (E = {}, lambda = {}): {msg}", c.e, c.lambda));
                verdicts.push(json!({ "E": c.e, "lambda": c.lambda, "error": msg }));
            }
        }
    }
    let summary = json!({
        "command": "phase-scan",
        "model": model_header(cfg, model),
        "decay": cfg.decay,
        "energies": energies,
        "lambdas": lambdas,
        "cells": verdicts,
        "reference": reference_values(model),
    });
    Ok(Artifacts {
        table: t,
        summary,
        warnings,
        failures: Vec::new(),
    })
}

fn verify_all(cfg: &RunConfig) -> Result<Artifacts> {
    let records = run_suite(cfg.seed, &cfg.verify)?;
    let mut t = Table::new(&["name", "status", "observed", "bound", "tolerance"]);
    let mut failures = Vec::new();
    for r in &records {
        let status = if r.passed() { "pass" } else { "fail" };
        t.push(vec![
            r.name.as_str().into(),
            status.into(),
            r.observed.into(),
            r.bound.into(),
            r.tolerance.into(),
        ]);
        if !r.passed() {
            failures.push(IntegrityRecord {
                check: r.name.clone(),
                detail: format!("observed {} against bound {} (tolerance {})", r.observed, r.bound, r.tolerance),
            });
        }
    }
    let summary = json!({
        "command": "verify-all",
        "seed": cfg.seed,
        "settings": cfg.verify,
        "all_pass": failures.is_empty(),
        "records": records,
    });
    Ok(Artifacts {
        table: t,
        summary,
        warnings: Vec::new(),
        failures,
    })
}
