//! The `solve`, `fields`, `sweep` and `validate` commands.

use crate::config::{AuxConfig, ConfigError, LoadedConfig, PathConfig, ReferenceKind, RunConfig, SweepKind};
use crate::output::{num, opt, write_json, Table, SCHEMA};
use anyhow::{anyhow, Result};
use cylwave_core::continuous::density_series_many;
use cylwave_core::diagnostics::{
    convergence_sweep, default_concordance_grid, oscillation_scan, divergence_concordance, CurrentVector, OscillationReport,
    Reference, Thresholds,
};
use cylwave_core::discrete::{
    assemble, normalized_currents, solve_auto, solve_with, DiscreteSolution, Method, NormalizedCurrents, Problem, SolverPath,
};
use cylwave_core::exact::exact_field_at;
use cylwave_core::fields::{boundary_residuals, field_from_discrete, region_of};
use cylwave_core::geometry::Point;
use cylwave_core::validation::{run_suite, Check, GROUPS};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::Path;

/// One solved `(aux pair, method, N)` combination.
struct Run {
    aux_index: usize,
    aux: AuxConfig,
    method: Method,
    n: usize,
    outcome: std::result::Result<Solved, String>,
}

struct Solved {
    problem: Problem,
    solution: DiscreteSolution,
    currents: NormalizedCurrents,
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Nfm => "nfm",
        Method::Mas => "mas",
    }
}

fn path_name(p: SolverPath) -> &'static str {
    match p {
        SolverPath::Dense => "dense",
        SolverPath::Circulant => "circulant",
        SolverPath::ModeSum => "mode_sum",
    }
}

fn solve_one(cfg: &RunConfig, aux: &AuxConfig, method: Method, n: usize) -> cylwave_core::Result<Solved> {
    let problem = cfg.problem(aux, n)?;
    let sys = assemble(&problem, method)?;
    let solution = match cfg.solver.path {
        PathConfig::Auto => solve_auto(&sys)?,
        PathConfig::Dense => solve_with(&sys, SolverPath::Dense)?,
        PathConfig::Fast => solve_with(&sys, SolverPath::Circulant)?,
        PathConfig::ModeSum => solve_with(&sys, SolverPath::ModeSum)?,
    };
    let currents = normalized_currents(&solution, &problem);
    Ok(Solved {
        problem,
        solution,
        currents,
    })
}

/// Every configured combination, ordered by aux pair, method, then ascending
/// `N`, solved in parallel.
fn solve_all(cfg: &RunConfig) -> Vec<Run> {
    let mut ns = cfg.solver.n.values();
    ns.sort_unstable();
    ns.dedup();
    let mut jobs = Vec::new();
    for (aux_index, aux) in cfg.geometry.aux.iter().enumerate() {
        for &method in &cfg.solver.methods {
            for &n in &ns {
                jobs.push((aux_index, *aux, method, n));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(aux_index, aux, method, n)| Run {
            aux_index,
            aux,
            method,
            n,
            outcome: solve_one(cfg, &aux, method, n).map_err(|e| e.to_string()),
        })
        .collect()
}

fn report_json(vector: CurrentVector, r: &OscillationReport, thresholds: &Thresholds) -> Value {
    json!({
        "vector": vector,
        "omega": r.omega,
        "max_amplitude": r.max_amplitude,
        "growth_factor": r.growth_factor,
        "flagged": r.flags(thresholds),
    })
}

fn aux_json(aux: &AuxConfig) -> Value {
    json!({"placement": aux.placement, "inner": aux.inner, "outer": aux.outer})
}

/// Per-run summary entries; growth factors are taken against the previous
/// successful `N` of the same aux pair and method.
fn run_summaries(cfg: &RunConfig, runs: &[Run]) -> Result<Vec<Value>> {
    let thresholds = Thresholds::default();
    let residuals: Vec<Option<cylwave_core::Result<_>>> = runs
        .par_iter()
        .map(|r| r.outcome.as_ref().ok().map(|s| boundary_residuals(&s.solution, &s.problem, cfg.output.test_points)))
        .collect();
    let mut previous: Option<(usize, Method, [OscillationReport; 2])> = None;
    let mut out = Vec::with_capacity(runs.len());
    for (run, res) in runs.iter().zip(residuals) {
        let base = json!({
            "method": run.method,
            "aux_index": run.aux_index,
            "aux": aux_json(&run.aux),
            "n": run.n,
        });
        let mut entry = base.as_object().cloned().unwrap_or_default();
        match &run.outcome {
            Ok(s) => {
                let prev = previous
                    .as_ref()
                    .filter(|(a, m, _)| *a == run.aux_index && *m == run.method)
                    .map(|(_, _, r)| *r);
                let reports = [
                    OscillationReport::new(&s.currents.first, prev.as_ref().map(|p| &p[0])),
                    OscillationReport::new(&s.currents.second, prev.as_ref().map(|p| &p[1])),
                ];
                let vectors = CurrentVector::of(run.method);
                let res = res.ok_or_else(|| anyhow!("missing residual"))?;
                entry.insert("path".into(), json!(path_name(s.solution.path)));
                entry.insert("solver_residual".into(), json!(s.solution.residual));
                entry.insert("condition".into(), json!(s.solution.condition));
                entry.insert(
                    "boundary_residuals".into(),
                    match res {
                        Ok(b) => json!(b),
                        Err(e) => json!({"failure": e.to_string()}),
                    },
                );
                entry.insert(
                    "oscillation".into(),
                    json!([
                        report_json(vectors[0], &reports[0], &thresholds),
                        report_json(vectors[1], &reports[1], &thresholds)
                    ]),
                );
                previous = Some((run.aux_index, run.method, reports));
            }
            Err(e) => {
                entry.insert("failure".into(), json!(e));
            }
        }
        out.push(Value::Object(entry));
    }
    Ok(out)
}

fn summary(command: &str, cfg: &LoadedConfig, body: Value) -> Value {
    let mut v = json!({
        "schema": SCHEMA,
        "command": command,
        "config_hash": cfg.hash,
    });
    if let (Some(obj), Value::Object(extra)) = (v.as_object_mut(), body) {
        obj.extend(extra);
    }
    v
}

fn complex_cells(z: Complex64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

fn write_currents(runs: &[Run], path: &Path) -> Result<()> {
    let mut t = Table::new(&[
        "method", "aux", "n", "l", "phi", "first_re", "first_im", "second_re", "second_im", "first_norm_re", "first_norm_im",
        "second_norm_re", "second_norm_im",
    ])?;
    for run in runs {
        let Ok(s) = &run.outcome else { continue };
        for l in 0..run.n {
            let mut row = vec![
                method_name(run.method).to_string(),
                run.aux_index.to_string(),
                run.n.to_string(),
                l.to_string(),
                num(s.currents.phi[l]),
            ];
            row.extend(complex_cells(s.solution.first[l]));
            row.extend(complex_cells(s.solution.second[l]));
            row.extend(complex_cells(s.currents.first[l]));
            row.extend(complex_cells(s.currents.second[l]));
            t.row(row)?;
        }
    }
    t.write(path)
}

/// Continuous densities of the circular problem at `count` uniform angles.
fn write_densities(cfg: &RunConfig, path: &Path) -> Result<bool> {
    let Some(setup) = cfg.circular_setup() else { return Ok(false) };
    let setup = setup?;
    let count = cfg.output.test_points;
    let phis: Vec<f64> = (0..count).map(|t| 2.0 * PI * t as f64 / count as f64).collect();
    let values = density_series_many(&setup, &phis, cfg.output.density_terms)?;
    let mut t = Table::new(&["phi", "electric_re", "electric_im", "magnetic_re", "magnetic_im", "terms"])?;
    for (phi, v) in phis.iter().zip(values) {
        let mut row = vec![num(*phi)];
        row.extend(complex_cells(v.electric));
        row.extend(complex_cells(v.magnetic));
        row.push(v.n_used.to_string());
        t.row(row)?;
    }
    t.write(path)?;
    Ok(true)
}

fn failures(runs: &[Run]) -> usize {
    runs.iter().filter(|r| r.outcome.is_err()).count()
}

pub fn solve(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let c = &cfg.config;
    let runs = solve_all(c);
    write_currents(&runs, &out.join("currents.csv"))?;
    let densities = write_densities(c, &out.join("densities.csv"))?;
    let mut files = vec!["currents.csv"];
    if densities {
        files.push("densities.csv");
    }
    let s = summary(
        "solve",
        cfg,
        json!({"files": files, "failures": failures(&runs), "runs": run_summaries(c, &runs)?}),
    );
    write_json(&out.join("summary.json"), &s)?;
    Ok(s)
}

struct ObsPoint {
    ring: usize,
    k: usize,
    point: Point,
    region: u8,
    exact: Option<Complex64>,
}

pub fn fields(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let c = &cfg.config;
    if c.output.rings.is_empty() {
        return Err(ConfigError {
            path: "output.rings".into(),
            message: "the fields command needs at least one observation ring".into(),
        }
        .into());
    }
    let runs = solve_all(c);
    let setup = c.circular_setup().transpose()?;
    let reference = cfg.config.problem(&c.geometry.aux[0], c.solver.n.values()[0])?;
    let mut points = Vec::new();
    for (ring, pts) in c.ring_points()?.into_iter().enumerate() {
        for (k, point) in pts.into_iter().enumerate() {
            points.push((ring, k, point));
        }
    }
    let points: Vec<ObsPoint> = points
        .into_par_iter()
        .map(|(ring, k, point)| -> std::result::Result<ObsPoint, ConfigError> {
            let at_ring = |e: cylwave_core::Error| ConfigError {
                path: format!("output.rings[{ring}]"),
                message: format!("point {k} at ({}, {}): {e}", point.x, point.y),
            };
            let region = region_of(&reference, point).map_err(at_ring)?.index();
            let exact = setup.as_ref().map(|s| exact_field_at(s, point)).transpose().map_err(at_ring)?;
            Ok(ObsPoint {
                ring,
                k,
                point,
                region,
                exact,
            })
        })
        .collect::<std::result::Result<_, _>>()?;

    let mut ns = c.solver.n.values();
    ns.sort_unstable();
    ns.dedup();
    let mut t = Table::new(&[
        "aux", "n", "ring", "k", "phi_obs", "x", "y", "region", "exact_re", "exact_im", "nfm_re", "nfm_im", "mas_re", "mas_im",
    ])?;
    let scale = points.iter().filter_map(|p| p.exact.map(|z| z.norm())).fold(0.0, f64::max);
    let mut errors = Vec::new();
    for aux_index in 0..c.geometry.aux.len() {
        for &n in &ns {
            let find = |m: Method| runs.iter().find(|r| r.aux_index == aux_index && r.n == n && r.method == m);
            let (nfm, mas) = (find(Method::Nfm), find(Method::Mas));
            let eval = |run: Option<&Run>| -> Result<Option<Vec<Complex64>>> {
                let Some(Ok(s)) = run.map(|r| &r.outcome) else { return Ok(None) };
                let v = points
                    .par_iter()
                    .map(|p| field_from_discrete(&s.solution, &s.problem, p.point).map(|f| f.value))
                    .collect::<cylwave_core::Result<Vec<_>>>()?;
                Ok(Some(v))
            };
            let (nfm_v, mas_v) = (eval(nfm)?, eval(mas)?);
            for (method, vals) in [(Method::Nfm, &nfm_v), (Method::Mas, &mas_v)] {
                if let (Some(vals), true) = (vals, scale > 0.0) {
                    let err = points
                        .iter()
                        .zip(vals)
                        .filter_map(|(p, v)| p.exact.map(|e| (v - e).norm()))
                        .fold(0.0, f64::max);
                    errors.push(json!({"method": method, "aux_index": aux_index, "n": n, "max_relative_error": err / scale}));
                }
            }
            let cell = |v: &Option<Vec<Complex64>>, i: usize, im: bool| {
                opt(v.as_ref().map(|v| if im { v[i].im } else { v[i].re }))
            };
            for (i, p) in points.iter().enumerate() {
                t.row([
                    aux_index.to_string(),
                    n.to_string(),
                    p.ring.to_string(),
                    p.k.to_string(),
                    num(p.point.angle()),
                    num(p.point.x),
                    num(p.point.y),
                    p.region.to_string(),
                    opt(p.exact.map(|z| z.re)),
                    opt(p.exact.map(|z| z.im)),
                    cell(&nfm_v, i, false),
                    cell(&nfm_v, i, true),
                    cell(&mas_v, i, false),
                    cell(&mas_v, i, true),
                ])?;
            }
        }
    }
    t.write(&out.join("fields.csv"))?;
    let s = summary(
        "fields",
        cfg,
        json!({
            "files": ["fields.csv"],
            "failures": failures(&runs),
            "field_errors": errors,
            "runs": run_summaries(c, &runs)?,
        }),
    );
    write_json(&out.join("summary.json"), &s)?;
    Ok(s)
}

pub fn sweep(cfg: &LoadedConfig, out: &Path) -> Result<Value> {
    let c = &cfg.config;
    let sw = c.sweep.clone().ok_or_else(|| ConfigError {
        path: "sweep".into(),
        message: "the sweep command needs a sweep block".into(),
    })?;
    let thresholds = sw.thresholds.unwrap_or_default();
    let ns = c.solver.n.values();
    let n0 = *ns.iter().min().ok_or_else(|| anyhow!("empty N list"))?;
    let body = match sw.kind {
        SweepKind::Oscillation => {
            let mut t = Table::new(&[
                "method", "aux", "n", "vector", "omega", "max_amplitude", "growth_factor", "flagged", "condition", "path", "failure",
            ])?;
            let mut flags = Vec::new();
            for (aux_index, aux) in c.geometry.aux.iter().enumerate() {
                let problem = c.problem(aux, n0)?;
                for &method in &c.solver.methods {
                    let scan = oscillation_scan(method, &problem, &ns);
                    for e in &scan.entries {
                        let head = [method_name(method).to_string(), aux_index.to_string(), e.n.to_string()];
                        let tail = |flagged: String| {
                            [flagged, opt(e.condition), e.path.map(path_name).unwrap_or_default().to_string(), e.failure.clone().unwrap_or_default()]
                        };
                        if e.reports.is_empty() {
                            let mut row = head.to_vec();
                            row.extend(["".into(), "".into(), "".into(), "".into()]);
                            row.extend(tail(String::new()));
                            t.row(row)?;
                        }
                        for (v, r) in &e.reports {
                            let mut row = head.to_vec();
                            row.extend([
                                serde_json::to_value(v)?.as_str().unwrap_or_default().to_string(),
                                num(r.omega),
                                num(r.max_amplitude),
                                opt(r.growth_factor),
                            ]);
                            row.extend(tail(r.flags(&thresholds).to_string()));
                            t.row(row)?;
                        }
                    }
                    let max_growth = scan
                        .entries
                        .iter()
                        .flat_map(|e| e.reports.iter().filter_map(|(_, r)| r.growth_factor))
                        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
                    flags.push(json!({
                        "method": method,
                        "aux_index": aux_index,
                        "aux": aux_json(aux),
                        "flagged_vectors": scan.flagged_vectors(&thresholds),
                        "max_growth_factor": max_growth,
                        "failures": scan.entries.iter().filter(|e| e.failure.is_some()).count(),
                    }));
                }
            }
            t.write(&out.join("oscillation.csv"))?;
            json!({"kind": "oscillation", "files": ["oscillation.csv"], "thresholds": thresholds, "scans": flags})
        }
        SweepKind::Convergence => {
            let use_exact = match sw.reference {
                Some(ReferenceKind::Exact) => true,
                Some(ReferenceKind::Residual) => false,
                None => c.is_circle() && !c.output.rings.is_empty(),
            };
            let reference = if use_exact {
                Reference::Exact {
                    obs: c.ring_points()?.into_iter().flatten().collect(),
                }
            } else {
                Reference::Residual {
                    m_test: c.output.test_points,
                }
            };
            let mut t = Table::new(&[
                "method", "aux", "n", "error", "residual_kind", "e_residual", "h_residual", "condition", "path", "failure",
            ])?;
            let mut tables = Vec::new();
            for (aux_index, aux) in c.geometry.aux.iter().enumerate() {
                let problem = c.problem(aux, n0)?;
                for &method in &c.solver.methods {
                    let rows = convergence_sweep(method, &problem, &ns, &reference)?;
                    for r in &rows {
                        t.row([
                            method_name(method).to_string(),
                            aux_index.to_string(),
                            r.n.to_string(),
                            opt(r.error),
                            r.residual_kind
                                .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                                .unwrap_or_default(),
                            opt(r.e_residual),
                            opt(r.h_residual),
                            opt(r.condition),
                            r.path.map(path_name).unwrap_or_default().to_string(),
                            r.failure.clone().unwrap_or_default(),
                        ])?;
                    }
                    tables.push(json!({"method": method, "aux_index": aux_index, "aux": aux_json(aux), "rows": rows}));
                }
            }
            t.write(&out.join("convergence.csv"))?;
            json!({
                "kind": "convergence",
                "reference": if use_exact { "exact" } else { "residual" },
                "files": ["convergence.csv"],
                "tables": tables,
            })
        }
        SweepKind::Concordance => {
            let setup = c.circular_setup().ok_or_else(|| anyhow!("concordance needs a circular boundary"))??;
            let (a1, a2) = match &sw.grid {
                Some(g) => (g.aux1.clone(), g.aux2.clone()),
                None => {
                    let (a, b) = default_concordance_grid(setup.excitation.region, setup.rho_cyl, setup.rho_fil());
                    (a.to_vec(), b.to_vec())
                }
            };
            let rows = divergence_concordance(&setup, &a1, &a2, &ns, &thresholds)?;
            let mut t = Table::new(&[
                "rho_aux1", "rho_aux2", "predicted_aux1", "predicted_aux2", "mas_flag_aux1", "mas_flag_aux2", "nfm_flagged", "agrees", "failures",
            ])?;
            let verdict = |v| serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            for r in &rows {
                t.row([
                    num(r.rho_aux1),
                    num(r.rho_aux2),
                    verdict(r.predicted[0]),
                    verdict(r.predicted[1]),
                    r.mas_flags[0].to_string(),
                    r.mas_flags[1].to_string(),
                    r.nfm_flagged.to_string(),
                    r.agrees().to_string(),
                    r.failures.join("; "),
                ])?;
            }
            t.write(&out.join("concordance.csv"))?;
            json!({
                "kind": "concordance",
                "files": ["concordance.csv"],
                "thresholds": thresholds,
                "rows": rows.len(),
                "agreeing": rows.iter().filter(|r| r.agrees()).count(),
                "nfm_flagged": rows.iter().filter(|r| r.nfm_flagged).count(),
            })
        }
    };
    let s = summary("sweep", cfg, body);
    write_json(&out.join("summary.json"), &s)?;
    Ok(s)
}

/// Runs the invariant suite; the report lists every check.
pub fn validate(only: &[String]) -> Result<(bool, Value)> {
    if let Some(g) = only.iter().find(|g| !GROUPS.contains(&g.as_str())) {
        return Err(ConfigError {
            path: "--only".into(),
            message: format!("unknown group '{g}' (known: {})", GROUPS.join(", ")),
        }
        .into());
    }
    let checks: Vec<Check> = run_suite(only)?;
    let passed = checks.iter().all(|c| c.passed);
    let report = json!({
        "schema": SCHEMA,
        "command": "validate",
        "passed": passed,
        "total": checks.len(),
        "failed": checks.iter().filter(|c| !c.passed).count(),
        "checks": checks,
    });
    Ok((passed, report))
}
