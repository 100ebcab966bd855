//! Measurements behind the invariant suite: special-function identities,
//! oracle and solver equivalences, current and field reproduction of the
//! circular scenarios, divergence-table concordance, the ellipse checks, the
//! NFM/MAS matrix identity and the large-N limit.

use crate::continuous::{density_series_many, reconstruct_fields_from_densities};
use crate::diagnostics::{
    default_concordance_grid, field_error, oscillation_scan, divergence_concordance, CurrentVector, Thresholds,
};
use crate::discrete::{
    assemble, assemble_mas, assemble_nfm, current_spectrum, dft_coefficients, large_n_limit_coefficients, mas_from_nfm,
    normalized_currents, q_sum_coefficients, solution_distance, solve_auto, solve_circulant_dft, solve_dense, Method,
    Problem,
};
use crate::error::{Error, Result};
use crate::exact::{convergence_region, exact_field_at, series_term, CircularSetup, Convergence, Media, SeriesId};
use crate::fields::boundary_residuals;
use crate::geometry::{BoundaryCurve, Excitation, Point, Region};
use crate::specfun::{
    addition_series_h0, addition_series_h0_d1, addition_series_h0_d2, hankel2, wronskian_residual, wronskian_value,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

/// Circle of radius 2 in a medium of relative permittivity 4.2, line source
/// at `k1 rho = 4` (external) or `1` (internal) on the x axis.
pub fn circular_scenario(region: Region) -> CircularSetup {
    let rf = match region {
        Region::External => 4.0,
        Region::Internal => 1.0,
    };
    CircularSetup::new(2.0, scenario_media(), Excitation::polar(region, rf, 0.0, Complex64::new(1.0, 0.0)))
        .expect("scenario parameters are valid")
}

fn scenario_media() -> Media {
    Media::dielectric(4.2, 1.0).expect("scenario media are valid")
}

/// Ellipse with semi-axes 2 and 1.6, auxiliary scalings 0.33 and 5, source on
/// the major axis at 4 (external) or 1 (internal).
pub fn elliptical_scenario(region: Region, n: usize) -> Result<Problem> {
    let d = match region {
        Region::External => 4.0,
        Region::Internal => 1.0,
    };
    Problem::scaled(
        BoundaryCurve::ellipse(2.0, 1.6)?,
        0.33,
        5.0,
        scenario_media(),
        Excitation::polar(region, d, 0.0, Complex64::new(1.0, 0.0)),
        n,
    )
}

/// `count` points on a circle at angles `2 pi (k + offset) / count`.
pub fn ring(rho: f64, count: usize, offset: f64) -> Vec<Point> {
    (0..count)
        .map(|k| Point::polar(rho, 2.0 * PI * (k as f64 + offset) / count as f64))
        .collect()
}

const REGIONS: [Region; 2] = [Region::External, Region::Internal];
const AUX_PAIRS: [(f64, f64); 2] = [(1.5, 2.5), (0.5, 10.0)];

fn rel_max(pairs: impl Iterator<Item = (Complex64, Complex64)>) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        num = num.max((a - b).norm());
        den = den.max(b.norm());
    }
    num / den.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecfunMetrics {
    /// Max `|W - 2/(i pi x)| / (2/(pi x))` over `n <= 60` and the argument grid.
    pub wronskian: f64,
    pub wronskian_points: usize,
    /// Grid points where `Y_n` leaves the floating-point range.
    pub overflow_points: usize,
    /// Max error of the three addition series relative to `max(|lhs|, 1)`.
    pub addition: f64,
    pub addition_points: usize,
}

/// Arguments of the Wronskian grid.
pub const WRONSKIAN_ARGS: [f64; 10] = [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 40.0, 50.0];

pub fn specfun_metrics() -> Result<SpecfunMetrics> {
    let mut wronskian = 0.0f64;
    let (mut points, mut overflow) = (0, 0);
    for &x in &WRONSKIAN_ARGS {
        for n in 0..=60 {
            match wronskian_residual(n, x) {
                Ok(r) => {
                    wronskian = wronskian.max(r.norm() / wronskian_value(x).norm());
                    points += 1;
                }
                Err(Error::Overflow { .. }) => overflow += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let x1s = [0.2, 0.7, 1.5, 3.0, 6.0];
    let ratios: [f64; 5] = [1.2, 1.7, 2.5, 5.0, 10.0];
    let mut addition = 0.0f64;
    let mut apoints = 0;
    for &x1 in &x1s {
        for &r in &ratios {
            let x2 = r * x1;
            let n_max = (40.0 + 2.0 * x2 + 40.0 / r.ln()) as usize;
            for k in 0..8 {
                let th = -PI + 2.0 * PI * (k as f64 + 0.5) / 8.0;
                let d = (x1 * x1 + x2 * x2 - 2.0 * x1 * x2 * th.cos()).sqrt();
                let (h0, h1) = (hankel2(0, d)?, hankel2(1, d)?);
                let checks = [
                    (addition_series_h0(x1, x2, th, n_max)?.value, h0),
                    (addition_series_h0_d1(x1, x2, th, n_max)?.value, (x1 - x2 * th.cos()) / d * h1),
                    (addition_series_h0_d2(x1, x2, th, n_max)?.value, (x2 - x1 * th.cos()) / d * h1),
                ];
                for (series, lhs) in checks {
                    addition = addition.max((series - lhs).norm() / lhs.norm().max(1.0));
                }
                apoints += 1;
            }
        }
    }
    Ok(SpecfunMetrics {
        wronskian,
        wronskian_points: points,
        overflow_points: overflow,
        addition,
        addition_points: apoints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceTableMetrics {
    /// Samples whose term decay agrees with the region classification.
    pub agreeing: usize,
    pub samples: usize,
}

/// Each series at observation radii 20% inside and outside its convergence
/// threshold: terms at `n = 80` smaller than at `n = 60` exactly where the
/// classification says the series converges.
pub fn convergence_table_metrics() -> Result<ConvergenceTableMetrics> {
    let (mut agreeing, mut samples) = (0, 0);
    for id in SeriesId::ALL {
        let s = circular_scenario(id.source());
        let (rc, rf) = (s.rho_cyl, s.rho_fil());
        let cri = s.rho_cri();
        let t = match id {
            SeriesId::ExtR1 => cri,
            SeriesId::ExtR2 | SeriesId::IntR1 => rf,
            SeriesId::IntR2 => cri,
        };
        for rho in [0.8 * t, 1.25 * t] {
            let decays = series_term(&s, id, 80, rho)?.norm() < series_term(&s, id, 60, rho)?.norm();
            let predicted = convergence_region(id, rho, rc, rf) == Convergence::Converges;
            samples += 1;
            agreeing += usize::from(decays == predicted);
        }
    }
    Ok(ConvergenceTableMetrics { agreeing, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleMetrics {
    /// Max deviation of the density reconstruction from the exact series,
    /// relative to the largest exact value on the ring set.
    pub external: f64,
    pub internal: f64,
    pub points: usize,
}

/// Observation rings of the oracle comparison: 32 angles in each region.
pub fn oracle_points(region: Region) -> Vec<Point> {
    let (outer, inner) = match region {
        Region::External => (6.0, 1.0),
        Region::Internal => (6.0, 1.5),
    };
    ring(outer, 32, 0.5).into_iter().chain(ring(inner, 32, 0.5)).collect()
}

pub fn oracle_metrics() -> Result<OracleMetrics> {
    let mut out = [0.0; 2];
    let mut points = 0;
    for (slot, region) in out.iter_mut().zip(REGIONS) {
        let s = circular_scenario(region);
        let obs = oracle_points(region);
        points += obs.len();
        let pairs: Vec<(Complex64, Complex64)> = obs
            .par_iter()
            .map(|&o| Ok((reconstruct_fields_from_densities(&s, o, None)?.value, exact_field_at(&s, o)?)))
            .collect::<Result<_>>()?;
        *slot = rel_max(pairs.into_iter());
    }
    Ok(OracleMetrics {
        external: out[0],
        internal: out[1],
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverMetrics {
    /// Max relative infinity-norm distance between the FFT-spectrum and dense
    /// solutions over both methods, both source regions and `N`.
    pub dft_vs_dense: f64,
    /// Max relative difference between q-sum and DFT mode coefficients.
    pub qsum_vs_dft: f64,
}

pub const SOLVER_ORDERS: [usize; 4] = [5, 11, 40, 81];

pub fn solver_metrics() -> Result<SolverMetrics> {
    let mut dft_vs_dense = 0.0f64;
    for region in REGIONS {
        let s = circular_scenario(region);
        for n in SOLVER_ORDERS {
            for method in [Method::Nfm, Method::Mas] {
                let sys = assemble(&Problem::circular(&s, 1.5, 2.5, n)?, method)?;
                let d = solution_distance(&solve_circulant_dft(&sys)?, &solve_dense(&sys)?);
                dft_vs_dense = dft_vs_dense.max(d);
            }
        }
    }
    let mut qsum_vs_dft = 0.0f64;
    for region in REGIONS {
        let p = Problem::circular(&circular_scenario(region), 1.5, 2.5, 11)?;
        let dft = dft_coefficients(&assemble_nfm(&p)?)?;
        for (m, d) in dft.iter().enumerate() {
            let q = q_sum_coefficients(&p, m)?;
            for (a, b) in [(q.d, d.d), (q.b1, d.b1), (q.b2, d.b2), (q.b3, d.b3), (q.b4, d.b4)] {
                qsum_vs_dft = qsum_vs_dft.max((a - b).norm() / b.norm().max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok(SolverMetrics { dft_vs_dense, qsum_vs_dft })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurrentMetrics {
    /// Max over aux pairs and source regions of the infinity-norm deviation of
    /// the normalized NFM currents from the continuous densities, relative to
    /// the largest density.
    pub density_deviation: f64,
    /// Max relative disagreement between the two aux pairs.
    pub aux_disagreement: f64,
}

pub fn current_metrics() -> Result<CurrentMetrics> {
    let mut density_deviation = 0.0f64;
    let mut aux_disagreement = 0.0f64;
    for region in REGIONS {
        let s = circular_scenario(region);
        let mut sets = Vec::new();
        for (a1, a2) in AUX_PAIRS {
            let p = Problem::circular(&s, a1, a2, 40)?;
            let nc = normalized_currents(&solve_auto(&assemble_nfm(&p)?)?, &p);
            let dens = density_series_many(&s, &nc.phi, 200)?;
            let de = rel_max(nc.first.iter().copied().zip(dens.iter().map(|d| d.electric)));
            let dm = rel_max(nc.second.iter().copied().zip(dens.iter().map(|d| d.magnetic)));
            density_deviation = density_deviation.max(de).max(dm);
            sets.push(nc);
        }
        let (a, b) = (&sets[0], &sets[1]);
        aux_disagreement = aux_disagreement
            .max(rel_max(a.first.iter().copied().zip(b.first.iter().copied())))
            .max(rel_max(a.second.iter().copied().zip(b.second.iter().copied())));
    }
    Ok(CurrentMetrics {
        density_deviation,
        aux_disagreement,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldMetrics {
    /// Max over source regions and rings of the NFM field error at `N = 40`,
    /// aux (1.5, 2.5), relative to the largest exact value on the ring.
    pub max_error: f64,
}

/// Rings `k1 rho = 10` (region 1) and `1` (region 2), 36 angles each.
pub fn field_rings() -> [Vec<Point>; 2] {
    [ring(10.0, 36, 0.5), ring(1.0, 36, 0.5)]
}

pub fn field_metrics() -> Result<FieldMetrics> {
    let mut max_error = 0.0f64;
    for region in REGIONS {
        let s = circular_scenario(region);
        let p = Problem::circular(&s, 1.5, 2.5, 40)?;
        let sol = solve_auto(&assemble_nfm(&p)?)?;
        for obs in field_rings() {
            let exact: Vec<Complex64> = obs.iter().map(|&o| exact_field_at(&s, o)).collect::<Result<_>>()?;
            max_error = max_error.max(field_error(&sol, &p, &obs, &exact)?);
        }
    }
    Ok(FieldMetrics { max_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcordanceMetrics {
    pub external_agreeing: usize,
    pub internal_agreeing: usize,
    pub per_kind: usize,
    pub nfm_flags: usize,
}

/// `N` list of the concordance scans.
pub const CONCORDANCE_ORDERS: [usize; 5] = [20, 30, 40, 50, 60];

pub fn concordance_metrics() -> Result<ConcordanceMetrics> {
    let mut agreeing = [0; 2];
    let mut nfm_flags = 0;
    let mut per_kind = 0;
    for (slot, region) in agreeing.iter_mut().zip(REGIONS) {
        let s = circular_scenario(region);
        let (g1, g2) = default_concordance_grid(region, s.rho_cyl, s.rho_fil());
        let rows = divergence_concordance(&s, &g1, &g2, &CONCORDANCE_ORDERS, &Thresholds::default())?;
        per_kind = rows.len();
        *slot = rows.iter().filter(|r| r.agrees()).count();
        nfm_flags += rows.iter().filter(|r| r.nfm_flagged).count();
    }
    Ok(ConcordanceMetrics {
        external_agreeing: agreeing[0],
        internal_agreeing: agreeing[1],
        per_kind,
        nfm_flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorruptionMetrics {
    /// Max normalized MAS amplitude growth from `N = 40` to `46` over the two
    /// surfaces.
    pub mas_growth: f64,
    pub mas_error_46: f64,
    pub nfm_error_40: f64,
}

pub fn corruption_metrics() -> Result<CorruptionMetrics> {
    let s = circular_scenario(Region::External);
    let p = Problem::circular(&s, 0.5, 10.0, 40)?;
    let scan = oscillation_scan(Method::Mas, &p, &[40, 46]);
    let growth = |v| scan.report(46, v).and_then(|r| r.growth_factor);
    let mas_growth = growth(CurrentVector::Aux1)
        .zip(growth(CurrentVector::Aux2))
        .map(|(a, b)| a.max(b))
        .ok_or_else(|| Error::Invalid(format!("MAS scan failed: {scan:?}")))?;
    let obs: Vec<Point> = field_rings().concat();
    let exact: Vec<Complex64> = obs.iter().map(|&o| exact_field_at(&s, o)).collect::<Result<_>>()?;
    let err = |method, n| -> Result<f64> {
        let pn = p.with_n(n)?;
        field_error(&solve_auto(&assemble(&pn, method)?)?, &pn, &obs, &exact)
    };
    Ok(CorruptionMetrics {
        mas_growth,
        mas_error_46: err(Method::Mas, 46)?,
        nfm_error_40: err(Method::Nfm, 40)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipseMetrics {
    /// Larger of the E and H residuals, `[external, internal]`, at `N = 40`.
    pub residual_40: [f64; 2],
    pub residual_60: [f64; 2],
    /// Oscillation flag of the external MAS and NFM scans over `N = {40, 44}`.
    pub mas_flagged: bool,
    pub nfm_flagged: bool,
}

pub fn ellipse_metrics() -> Result<EllipseMetrics> {
    let mut r40 = [0.0; 2];
    let mut r60 = [0.0; 2];
    for (i, region) in REGIONS.into_iter().enumerate() {
        for (slot, n) in [(&mut r40[i], 40), (&mut r60[i], 60)] {
            let p = elliptical_scenario(region, n)?;
            let r = boundary_residuals(&solve_auto(&assemble_nfm(&p)?)?, &p, 64)?;
            *slot = r.e_tangential.max(r.h_tangential);
        }
    }
    let p = elliptical_scenario(Region::External, 44)?;
    let th = Thresholds::default();
    Ok(EllipseMetrics {
        residual_40: r40,
        residual_60: r60,
        mas_flagged: !oscillation_scan(Method::Mas, &p, &[40, 44]).flagged_vectors(&th).is_empty(),
        nfm_flagged: !oscillation_scan(Method::Nfm, &p, &[40, 44]).flagged_vectors(&th).is_empty(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityMetrics {
    /// Max entrywise `|T - M| / max(|M|, 1)` between the transformed NFM and
    /// the assembled MAS matrices at `N = 8`.
    pub circle: f64,
    pub ellipse: f64,
    pub rhs_equal: bool,
}

pub fn identity_metrics() -> Result<IdentityMetrics> {
    let mut out = [0.0; 2];
    let mut rhs_equal = true;
    let problems = [
        Problem::circular(&circular_scenario(Region::External), 1.5, 2.5, 8)?,
        elliptical_scenario(Region::External, 8)?,
    ];
    for (slot, p) in out.iter_mut().zip(&problems) {
        let t = mas_from_nfm(&assemble_nfm(p)?)?;
        let d = assemble_mas(p)?;
        let (a, b) = (t.matrix(), d.matrix());
        for r in 0..2 * p.n {
            for c in 0..2 * p.n {
                *slot = f64::max(*slot, (a[(r, c)] - b[(r, c)]).norm() / b[(r, c)].norm().max(1.0));
            }
        }
        rhs_equal &= t.rhs == d.rhs;
    }
    Ok(IdentityMetrics {
        circle: out[0],
        ellipse: out[1],
        rhs_equal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitMetrics {
    /// Max over `m <= 20`, both source regions and both aux pairs of the
    /// relative difference between `N I^(m) / I`, `N K^(m) / I` at `N = 201`
    /// and the auxiliary-free limits.
    pub max_relative: f64,
}

pub fn limit_metrics() -> Result<LimitMetrics> {
    let n = 201;
    let mut worst = 0.0f64;
    for region in REGIONS {
        let s = circular_scenario(region);
        for (a1, a2) in AUX_PAIRS {
            let p = Problem::circular(&s, a1, a2, n)?;
            let spec = current_spectrum(&solve_auto(&assemble_nfm(&p)?)?);
            let f = n as f64 / s.excitation.amplitude;
            for (m, (i_m, k_m)) in spec.iter().enumerate().take(21) {
                let (i_lim, k_lim) = large_n_limit_coefficients(&s, m as i64)?;
                worst = worst.max((i_m * f - i_lim).norm() / i_lim.norm());
                worst = worst.max((k_m * f - k_lim).norm() / k_lim.norm());
            }
        }
    }
    Ok(LimitMetrics { max_relative: worst })
}

/// Outcome of one suite check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub group: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Suite groups in execution order.
pub const GROUPS: [&str; 11] = [
    "specfun", "series", "oracle", "solver", "currents", "fields", "divergence", "corruption", "ellipse", "identity", "limit",
];

fn check<T: std::fmt::Debug>(
    group: &'static str,
    name: &'static str,
    measure: impl FnOnce() -> Result<T>,
    pass: impl FnOnce(&T) -> bool,
) -> Check {
    let start = Instant::now();
    let (passed, detail) = match measure() {
        Ok(m) => (pass(&m), format!("{m:?}")),
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        group,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs one suite group; `None` for an unknown name.
pub fn run_group(group: &str) -> Option<Vec<Check>> {
    Some(match group {
        "specfun" => vec![check("specfun", "wronskian_and_addition", specfun_metrics, |m| {
            m.wronskian < 1e-12 && m.addition < 1e-10 && m.addition_points == 200
        })],
        "series" => vec![check("series", "series_decay_matches_regions", convergence_table_metrics, |m| {
            m.agreeing == m.samples
        })],
        "oracle" => vec![check("oracle", "density_reconstruction_vs_exact", oracle_metrics, |m| {
            m.external < 1e-9 && m.internal < 1e-9
        })],
        "solver" => vec![check("solver", "dft_dense_and_qsum", solver_metrics, |m| {
            m.dft_vs_dense < 1e-9 && m.qsum_vs_dft < 1e-9
        })],
        "currents" => vec![check("currents", "nfm_currents_vs_densities", current_metrics, |m| {
            m.density_deviation < 1e-3 && m.aux_disagreement < 1e-3
        })],
        "fields" => vec![check("fields", "nfm_fields_vs_exact", field_metrics, |m| m.max_error < 1e-3)],
        "divergence" => vec![check("divergence", "mas_flags_vs_predictions", concordance_metrics, |m| {
            m.external_agreeing == m.per_kind && m.internal_agreeing == m.per_kind && m.per_kind == 9 && m.nfm_flags == 0
        })],
        "corruption" => vec![check("corruption", "mas_growth_and_field_error", corruption_metrics, |m| {
            m.mas_growth > 10.0 && m.mas_error_46 >= 10.0 * m.nfm_error_40
        })],
        "ellipse" => vec![check("ellipse", "residuals_and_flags", ellipse_metrics, |m| {
            (0..2).all(|i| m.residual_40[i] < 1e-2 && m.residual_60[i] < m.residual_40[i]) && m.mas_flagged && !m.nfm_flagged
        })],
        "identity" => vec![check("identity", "transformed_nfm_equals_mas", identity_metrics, |m| {
            m.circle <= 1e-14 && m.ellipse <= 1e-14 && m.rhs_equal
        })],
        "limit" => vec![check("limit", "dft_coefficients_vs_limits", limit_metrics, |m| m.max_relative < 1e-6)],
        _ => return None,
    })
}

/// Runs the selected groups (all when `only` is empty).
pub fn run_suite(only: &[String]) -> Result<Vec<Check>> {
    let selected: Vec<&str> = if only.is_empty() {
        GROUPS.to_vec()
    } else {
        only.iter().map(String::as_str).collect()
    };
    let mut out = Vec::new();
    for g in selected {
        out.extend(run_group(g).ok_or_else(|| Error::Invalid(format!("unknown group '{g}' (known: {})", GROUPS.join(", "))))?);
    }
    Ok(out)
}
