//! Oscillation detection on discrete current vectors, the MAS divergence
//! table for circular auxiliary surfaces, N-sweeps of oscillation reports and
//! convergence tables.

use crate::discrete::{assemble, fft, normalized_currents, solve_auto, DiscreteSolution, Method, Problem, SolverPath};
use crate::error::{Error, Result};
use crate::exact::{critical_radius, exact_field_at, CircularSetup};
use crate::fields::{boundary_residuals, field_from_discrete, ResidualKind};
use crate::geometry::{Point, Region};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default oscillation-index threshold of the divergence flag.
pub const OMEGA_THRESHOLD: f64 = 0.5;
/// Default growth-factor threshold of the divergence flag.
pub const GROWTH_THRESHOLD: f64 = 3.0;

/// Fraction of the non-constant DFT energy of `v` in the spatial frequencies
/// `min(m, N - m) > N / 3`. Zero for constant or empty vectors.
pub fn oscillation_index(v: &[Complex64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<Complex64>() / n as f64;
    let centered: Vec<Complex64> = v.iter().map(|z| z - mean).collect();
    let spec = fft(&centered);
    let (mut high, mut total) = (0.0, 0.0);
    for (m, z) in spec.iter().enumerate().skip(1) {
        let e = z.norm_sqr();
        total += e;
        if 3 * m.min(n - m) > n {
            high += e;
        }
    }
    if total <= f64::MIN_POSITIVE * n as f64 {
        0.0
    } else {
        (high / total).clamp(0.0, 1.0)
    }
}

/// Oscillation summary of one current vector at one `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationReport {
    pub omega: f64,
    /// Largest normalized amplitude `N |x_l| / L`.
    pub max_amplitude: f64,
    /// `max_amplitude` over that of the previous successful `N`.
    pub growth_factor: Option<f64>,
}

impl OscillationReport {
    pub fn new(v: &[Complex64], previous: Option<&OscillationReport>) -> Self {
        let max_amplitude = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Self {
            omega: oscillation_index(v),
            max_amplitude,
            growth_factor: previous.map(|p| max_amplitude / p.max_amplitude.max(f64::MIN_POSITIVE)),
        }
    }

    pub fn flags(&self, thresholds: &Thresholds) -> bool {
        self.omega > thresholds.omega && self.growth_factor.is_some_and(|g| g > thresholds.growth)
    }
}

/// Flag thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub omega: f64,
    pub growth: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            omega: OMEGA_THRESHOLD,
            growth: GROWTH_THRESHOLD,
        }
    }
}

/// Which current vector a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentVector {
    /// MAS sources on `aux1`.
    Aux1,
    /// MAS sources on `aux2`.
    Aux2,
    /// NFM electric amplitudes `I_l`.
    Electric,
    /// NFM magnetic amplitudes `K_l`.
    Magnetic,
}

impl CurrentVector {
    pub fn of(method: Method) -> [Self; 2] {
        match method {
            Method::Nfm => [Self::Electric, Self::Magnetic],
            Method::Mas => [Self::Aux1, Self::Aux2],
        }
    }
}

/// Auxiliary surface of a circular MAS problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Aux1,
    Aux2,
}

impl From<Surface> for CurrentVector {
    fn from(s: Surface) -> Self {
        match s {
            Surface::Aux1 => CurrentVector::Aux1,
            Surface::Aux2 => CurrentVector::Aux2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Diverges,
    Converges,
}

/// Predicted behavior of the MAS currents on one auxiliary surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DivergencePrediction {
    pub method: Method,
    pub surface: Surface,
    pub predicted: Verdict,
}

/// MAS current divergence on each auxiliary circle.
///
/// External source: `aux1` diverges iff `rho_aux1 <= rho_cri`, `aux2` iff
/// `rho_aux2 >= rho_fil`. Internal source: `aux1` iff `rho_aux1 <= rho_fil`,
/// `aux2` iff `rho_aux2 >= rho_cri`. Equality counts as divergent.
pub fn predict_mas_divergence(
    kind: Region,
    rho_aux1: f64,
    rho_aux2: f64,
    rho_cyl: f64,
    rho_fil: f64,
) -> (DivergencePrediction, DivergencePrediction) {
    let rho_cri = critical_radius(rho_cyl, rho_fil);
    let (lower, upper) = match kind {
        Region::External => (rho_cri, rho_fil),
        Region::Internal => (rho_fil, rho_cri),
    };
    let verdict = |diverges: bool| if diverges { Verdict::Diverges } else { Verdict::Converges };
    let make = |surface, diverges| DivergencePrediction {
        method: Method::Mas,
        surface,
        predicted: verdict(diverges),
    };
    (make(Surface::Aux1, rho_aux1 <= lower), make(Surface::Aux2, rho_aux2 >= upper))
}

/// Outcome of one `N` in a scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanEntry {
    pub n: usize,
    pub path: Option<SolverPath>,
    pub condition: Option<f64>,
    /// One report per current vector, in `CurrentVector::of` order.
    pub reports: Vec<(CurrentVector, OscillationReport)>,
    pub failure: Option<String>,
}

/// Oscillation reports of one method over a list of `N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationScan {
    pub method: Method,
    pub entries: Vec<ScanEntry>,
}

impl OscillationScan {
    pub fn report(&self, n: usize, vector: CurrentVector) -> Option<&OscillationReport> {
        let entry = self.entries.iter().find(|e| e.n == n)?;
        entry.reports.iter().find(|(v, _)| *v == vector).map(|(_, r)| r)
    }

    /// True if some `N` of the scan flags `vector`.
    pub fn flagged(&self, vector: CurrentVector, thresholds: &Thresholds) -> bool {
        self.entries
            .iter()
            .flat_map(|e| e.reports.iter())
            .any(|(v, r)| *v == vector && r.flags(thresholds))
    }

    /// Current vectors flagged anywhere in the scan.
    pub fn flagged_vectors(&self, thresholds: &Thresholds) -> Vec<CurrentVector> {
        CurrentVector::of(self.method)
            .into_iter()
            .filter(|&v| self.flagged(v, thresholds))
            .collect()
    }
}

fn solve_at(problem: &Problem, method: Method, n: usize) -> Result<(Problem, DiscreteSolution)> {
    let p = problem.with_n(n)?;
    let sol = solve_auto(&assemble(&p, method)?)?;
    Ok((p, sol))
}

fn sorted_unique(n_list: &[usize]) -> Vec<usize> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Solves `problem` at every `N` of `n_list` (in parallel) and reports the
/// normalized current vectors in ascending `N`. Failures are recorded and the
/// growth factor is taken against the previous successful `N`.
pub fn oscillation_scan(method: Method, problem: &Problem, n_list: &[usize]) -> OscillationScan {
    let ns = sorted_unique(n_list);
    let solved: Vec<Result<(Problem, DiscreteSolution)>> = ns.par_iter().map(|&n| solve_at(problem, method, n)).collect();
    let mut entries = Vec::with_capacity(ns.len());
    let mut previous: Option<Vec<OscillationReport>> = None;
    for (&n, outcome) in ns.iter().zip(solved) {
        match outcome {
            Ok((p, sol)) => {
                let nc = normalized_currents(&sol, &p);
                let reports: Vec<OscillationReport> = [&nc.first, &nc.second]
                    .iter()
                    .enumerate()
                    .map(|(i, v)| OscillationReport::new(v, previous.as_ref().map(|r| &r[i])))
                    .collect();
                entries.push(ScanEntry {
                    n,
                    path: Some(sol.path),
                    condition: sol.condition,
                    reports: CurrentVector::of(method).into_iter().zip(reports.iter().copied()).collect(),
                    failure: None,
                });
                previous = Some(reports);
            }
            Err(e) => entries.push(ScanEntry {
                n,
                path: None,
                condition: None,
                reports: Vec::new(),
                failure: Some(e.to_string()),
            }),
        }
    }
    OscillationScan { method, entries }
}

/// `(aux1, aux2)` divergence thresholds of [`predict_mas_divergence`].
pub fn divergence_thresholds(kind: Region, rho_cyl: f64, rho_fil: f64) -> (f64, f64) {
    let rho_cri = critical_radius(rho_cyl, rho_fil);
    match kind {
        Region::External => (rho_cri, rho_fil),
        Region::Internal => (rho_fil, rho_cri),
    }
}

/// Relative half-width of the band around each threshold excluded from
/// concordance grids.
pub const THRESHOLD_BAND: f64 = 0.05;

/// Three radii per surface on both sides of its threshold `t`:
/// `aux1 = {0.6 t, t + 0.4 (rc - t), t + 0.8 (rc - t)}`,
/// `aux2 = {rc + 0.3 (t - rc), rc + 0.7 (t - rc), 1.5 t}`.
pub fn default_concordance_grid(kind: Region, rho_cyl: f64, rho_fil: f64) -> ([f64; 3], [f64; 3]) {
    let (t1, t2) = divergence_thresholds(kind, rho_cyl, rho_fil);
    (
        [0.6 * t1, t1 + 0.4 * (rho_cyl - t1), t1 + 0.8 * (rho_cyl - t1)],
        [rho_cyl + 0.3 * (t2 - rho_cyl), rho_cyl + 0.7 * (t2 - rho_cyl), 1.5 * t2],
    )
}

/// Prediction versus observed flags for one auxiliary pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcordanceRow {
    pub rho_aux1: f64,
    pub rho_aux2: f64,
    pub predicted: [Verdict; 2],
    /// MAS flags on `aux1` and `aux2`.
    pub mas_flags: [bool; 2],
    pub nfm_flagged: bool,
    pub failures: Vec<String>,
}

impl ConcordanceRow {
    pub fn agrees(&self) -> bool {
        let expect = self.predicted.map(|v| v == Verdict::Diverges);
        self.failures.is_empty() && self.mas_flags == expect && !self.nfm_flagged
    }
}

/// Oscillation scans of MAS and NFM on every auxiliary pair of the grid,
/// compared with [`predict_mas_divergence`]. Grid radii within
/// [`THRESHOLD_BAND`] of a threshold are rejected.
pub fn divergence_concordance(
    setup: &CircularSetup,
    aux1: &[f64],
    aux2: &[f64],
    n_list: &[usize],
    thresholds: &Thresholds,
) -> Result<Vec<ConcordanceRow>> {
    let (kind, rc, rf) = (setup.excitation.region, setup.rho_cyl, setup.rho_fil());
    let (t1, t2) = divergence_thresholds(kind, rc, rf);
    for (&r, t) in aux1.iter().map(|r| (r, t1)).chain(aux2.iter().map(|r| (r, t2))) {
        if (r - t).abs() < THRESHOLD_BAND * t {
            return Err(Error::Invalid(format!("aux radius {r} lies within 5% of the threshold {t}")));
        }
    }
    let n0 = *n_list.iter().min().ok_or_else(|| Error::Invalid("empty N list".into()))?;
    let pairs: Vec<(f64, f64)> = aux1.iter().flat_map(|&a| aux2.iter().map(move |&b| (a, b))).collect();
    pairs
        .par_iter()
        .map(|&(a1, a2)| {
            let p = Problem::circular(setup, a1, a2, n0.max(4))?;
            let (p1, p2) = predict_mas_divergence(kind, a1, a2, rc, rf);
            let mas = oscillation_scan(Method::Mas, &p, n_list);
            let nfm = oscillation_scan(Method::Nfm, &p, n_list);
            let failures = mas
                .entries
                .iter()
                .chain(&nfm.entries)
                .filter_map(|e| e.failure.as_ref().map(|f| format!("N={}: {f}", e.n)))
                .collect();
            Ok(ConcordanceRow {
                rho_aux1: a1,
                rho_aux2: a2,
                predicted: [p1.predicted, p2.predicted],
                mas_flags: [
                    mas.flagged(CurrentVector::Aux1, thresholds),
                    mas.flagged(CurrentVector::Aux2, thresholds),
                ],
                nfm_flagged: !nfm.flagged_vectors(thresholds).is_empty(),
                failures,
            })
        })
        .collect()
}

/// What a convergence sweep measures against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Reference {
    /// Relative field error against the exact series at the given points
    /// (circular boundaries only).
    Exact { obs: Vec<Point> },
    /// Boundary-condition residuals at `m_test` staggered angles.
    Residual { m_test: usize },
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// Max field error over max exact magnitude, or the larger residual.
    pub error: Option<f64>,
    pub residual_kind: Option<ResidualKind>,
    pub e_residual: Option<f64>,
    pub h_residual: Option<f64>,
    pub condition: Option<f64>,
    pub path: Option<SolverPath>,
    pub failure: Option<String>,
}

/// Per-`N` error table of `method` on `problem`, ascending in `N`.
pub fn convergence_sweep(method: Method, problem: &Problem, n_list: &[usize], reference: &Reference) -> Result<Vec<SweepRow>> {
    let exact: Option<Vec<Complex64>> = match reference {
        Reference::Exact { obs } => {
            let setup = problem
                .circular_setup()
                .ok_or_else(|| Error::Invalid("an exact reference needs a circular boundary".into()))?;
            if obs.is_empty() {
                return Err(Error::Invalid("an exact reference needs observation points".into()));
            }
            Some(obs.par_iter().map(|&o| exact_field_at(&setup, o)).collect::<Result<_>>()?)
        }
        Reference::Residual { m_test } => {
            if *m_test == 0 {
                return Err(Error::Invalid("need at least one test point".into()));
            }
            None
        }
    };
    let ns = sorted_unique(n_list);
    Ok(ns
        .par_iter()
        .map(|&n| {
            let row = |error, kind, e, h, sol: Option<&DiscreteSolution>, failure| SweepRow {
                n,
                error,
                residual_kind: kind,
                e_residual: e,
                h_residual: h,
                condition: sol.and_then(|s| s.condition),
                path: sol.map(|s| s.path),
                failure,
            };
            let (p, sol) = match solve_at(problem, method, n) {
                Ok(v) => v,
                Err(e) => return row(None, None, None, None, None, Some(e.to_string())),
            };
            let outcome = match (reference, &exact) {
                (Reference::Exact { obs }, Some(values)) => field_error(&sol, &p, obs, values).map(|err| (err, None)),
                (Reference::Residual { m_test }, _) => {
                    boundary_residuals(&sol, &p, *m_test).map(|r| (r.e_tangential.max(r.h_tangential), Some(r)))
                }
                _ => unreachable!("reference values are prepared above"),
            };
            match outcome {
                Ok((err, r)) => row(
                    Some(err),
                    r.map(|r| r.kind),
                    r.map(|r| r.e_tangential),
                    r.map(|r| r.h_tangential),
                    Some(&sol),
                    None,
                ),
                Err(e) => row(None, None, None, None, Some(&sol), Some(e.to_string())),
            }
        })
        .collect())
}

/// Max `|E - E_exact|` over max `|E_exact|`.
pub fn field_error(sol: &DiscreteSolution, problem: &Problem, obs: &[Point], exact: &[Complex64]) -> Result<f64> {
    let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let errs: Vec<f64> = obs
        .par_iter()
        .zip(exact)
        .map(|(&o, e)| Ok((field_from_discrete(sol, problem, o)?.value - e).norm()))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max) / scale)
}
