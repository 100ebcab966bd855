//! Fields radiated by solved discrete currents, and boundary-continuity
//! residuals.

use crate::discrete::{h01, normalized_currents, DiscreteSolution, Method, Problem};
use crate::error::{Error, Result};
use crate::exact::{incident_field, FieldRegion, Media};
use crate::geometry::{Excitation, Point, Region};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Where a field value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Nfm,
    Mas,
    Continuous,
}

impl From<Method> for Provenance {
    fn from(m: Method) -> Self {
        match m {
            Method::Nfm => Provenance::Nfm,
            Method::Mas => Provenance::Mas,
        }
    }
}

/// `E_z` at one observation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub obs: Point,
    pub region: FieldRegion,
    pub value: Complex64,
    pub provenance: Provenance,
}

/// Region of `obs` relative to the boundary; points on it are rejected.
pub fn region_of(problem: &Problem, obs: Point) -> Result<FieldRegion> {
    let off = problem.curve.radial_offset(obs);
    if off.abs() <= 1e-12 * problem.curve.max_radius() {
        return Err(Error::Invalid("observation point lies on the boundary".into()));
    }
    Ok(if off > 0.0 { FieldRegion::R1 } else { FieldRegion::R2 })
}

/// Value and derivative along `dir` of `H_0(k |r - s|)`.
fn h0_kernel(k: f64, r: Point, s: Point, dir: Point) -> Result<(Complex64, Complex64)> {
    let d = r.distance(s);
    if d <= 1e-12 * (1.0 + r.norm()) {
        return Err(Error::Singular { distance: d });
    }
    let (h0, h1) = h01(k * d)?;
    Ok((h0, -k * h1 * dir.dot(r - s) / d))
}

/// Value and derivative along `dir` of `H_1(k D) n.(s - r) / D`, `D = |r - s|`.
fn km_kernel(k: f64, r: Point, s: Point, n: Point, dir: Point) -> Result<(Complex64, Complex64)> {
    let d = r.distance(s);
    if d <= 1e-12 * (1.0 + r.norm()) {
        return Err(Error::Singular { distance: d });
    }
    let (h0, h1) = h01(k * d)?;
    let x = k * d;
    let h1p = h0 - h1 / x;
    let g = n.dot(s - r) / d;
    let rel = r - s;
    let dd = dir.dot(rel) / d;
    let dg = -n.dot(dir) / d - n.dot(s - r) * dd / (d * d);
    Ok((h1 * g, k * h1p * dd * g + h1 * dg))
}

/// Source points (and normals) of the discrete representation of one region.
fn sources(problem: &Problem, method: Method, region: FieldRegion) -> Vec<(Point, Point)> {
    let n = problem.n;
    let curve = match (method, region) {
        (Method::Nfm, _) => &problem.curve,
        (Method::Mas, FieldRegion::R1) => &problem.aux1.curve,
        (Method::Mas, FieldRegion::R2) => &problem.aux2.curve,
    };
    (0..n)
        .map(|l| {
            let s = curve.sample(2.0 * PI * l as f64 / n as f64);
            (s.point, s.normal)
        })
        .collect()
}

fn incident_with_derivative(exc: &Excitation, media: &Media, obs: Point, dir: Point) -> Result<(Complex64, Complex64)> {
    let k = match exc.region {
        Region::External => media.k1(),
        Region::Internal => media.k2(),
    };
    let v = incident_field(exc, media, obs)?;
    let (_, dh) = h0_kernel(k, obs, exc.position, dir)?;
    let pre = exc.kernel_prefactor(k, media.z(FieldRegion::of_source(exc.region)));
    Ok((v, pre * exc.amplitude * dh))
}

/// Field of `region`'s representation at `obs` and its derivative along
/// `dir`, without checking that `obs` lies in `region`.
fn representation(
    sol: &DiscreteSolution,
    problem: &Problem,
    region: FieldRegion,
    obs: Point,
    dir: Point,
) -> Result<(Complex64, Complex64)> {
    let m = &problem.media;
    let k = m.k(region);
    let z = m.z(region);
    let srcs = sources(problem, sol.method, region);
    let mut v = Complex64::new(0.0, 0.0);
    let mut dv = Complex64::new(0.0, 0.0);
    match sol.method {
        Method::Nfm => {
            // Region 2 radiates the negated currents.
            let sign = if region == FieldRegion::R1 { 1.0 } else { -1.0 };
            for (l, &(s, n)) in srcs.iter().enumerate() {
                let (a, da) = h0_kernel(k, obs, s, dir)?;
                let (b, db) = km_kernel(k, obs, s, n, dir)?;
                let ce = -k * z / 4.0 * sign * sol.first[l];
                let cm = k / (4.0 * I) * sign * sol.second[l];
                v += ce * a + cm * b;
                dv += ce * da + cm * db;
            }
        }
        Method::Mas => {
            let amps = if region == FieldRegion::R1 { &sol.first } else { &sol.second };
            for (q, &(s, _)) in srcs.iter().enumerate() {
                let (a, da) = h0_kernel(k, obs, s, dir)?;
                let ce = -k * z / 4.0 * amps[q];
                v += ce * a;
                dv += ce * da;
            }
        }
    }
    if region == FieldRegion::of_source(problem.excitation.region) {
        let (e, de) = incident_with_derivative(&problem.excitation, m, obs, dir)?;
        v += e;
        dv += de;
    }
    Ok((v, dv))
}

/// Total `E_z` at `obs` from a discrete solution.
pub fn field_from_discrete(sol: &DiscreteSolution, problem: &Problem, obs: Point) -> Result<FieldSample> {
    if sol.n != problem.n {
        return Err(Error::Invalid(format!("solution has N={} but problem has N={}", sol.n, problem.n)));
    }
    let region = region_of(problem, obs)?;
    let (value, _) = representation(sol, problem, region, obs, Point::new(0.0, 0.0))?;
    Ok(FieldSample {
        obs,
        region,
        value,
        provenance: sol.method.into(),
    })
}

/// Field of an explicitly requested region's representation; errors if
/// `obs` lies in the other region.
pub fn field_in_region(sol: &DiscreteSolution, problem: &Problem, region: FieldRegion, obs: Point) -> Result<FieldSample> {
    let found = region_of(problem, obs)?;
    if found != region {
        return Err(Error::RegionMismatch {
            expected: region.index(),
            found: found.index(),
        });
    }
    field_from_discrete(sol, problem, obs)
}

/// [`field_from_discrete`] over many points, in input order.
pub fn fields_from_discrete(sol: &DiscreteSolution, problem: &Problem, obs: &[Point]) -> Result<Vec<FieldSample>> {
    obs.par_iter().map(|&o| field_from_discrete(sol, problem, o)).collect()
}

/// Which boundary conditions a residual measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// Continuity of `E_z` and tangential `H` across the boundary (MAS).
    Continuity,
    /// Vanishing of each region's representation on the opposite auxiliary
    /// surface (NFM).
    NullField,
}

/// Maximum boundary-condition residuals at staggered test angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryResiduals {
    pub kind: ResidualKind,
    /// Relative `E_z` residual.
    pub e_tangential: f64,
    /// Relative tangential-`H` residual, `H_t` taken as `dE/dn / (k Z)`.
    pub h_tangential: f64,
    pub test_points: usize,
}

fn test_angle(t: usize, m_test: usize, n: usize) -> f64 {
    // Half a test step plus a quarter collocation step keeps every test angle
    // off the collocation grid.
    2.0 * PI * (t as f64 + 0.5) / m_test as f64 + PI / (2.0 * n as f64)
}

type Row = (f64, f64, f64, f64);

fn reduce(rows: &[Row], kind: ResidualKind, m_test: usize) -> BoundaryResiduals {
    let max = |f: fn(&Row) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let (de, e, dh, h) = (max(|r| r.0), max(|r| r.1), max(|r| r.2), max(|r| r.3));
    BoundaryResiduals {
        kind,
        e_tangential: de / e.max(f64::MIN_POSITIVE),
        h_tangential: dh / h.max(f64::MIN_POSITIVE),
        test_points: m_test,
    }
}

/// Boundary-condition residuals of a discrete solution at `m_test` angles
/// staggered between the collocation angles.
///
/// MAS: continuity across the boundary. Each region's representation is
/// sampled at `r +- delta n`, `delta = 1e-4 |r|`, on its own side and carried
/// to the boundary with its normal derivative; normalized by the largest
/// region-1 boundary values.
///
/// NFM: the filaments lie on the boundary itself, so their sums are not
/// resolved within about one filament spacing of it. The residual is instead
/// the null field of the region-1 representation on `aux1` and of the region-2
/// representation on `aux2`. The tangential H residual is taken in E units
/// (`|dE/dn| / k`). Both are normalized by the peak boundary densities
/// `N |K_l| / L` and `Z1 N |I_l| / L`, the tangential fields on the boundary.
pub fn boundary_residuals(sol: &DiscreteSolution, problem: &Problem, m_test: usize) -> Result<BoundaryResiduals> {
    if m_test == 0 {
        return Err(Error::Invalid("need at least one test point".into()));
    }
    if sol.n != problem.n {
        return Err(Error::Invalid(format!("solution has N={} but problem has N={}", sol.n, problem.n)));
    }
    let m = &problem.media;
    let y = |r: FieldRegion| 1.0 / (m.k(r) * m.z(r));
    let n = problem.n;
    match sol.method {
        Method::Mas => {
            let rows: Vec<Row> = (0..m_test)
                .into_par_iter()
                .map(|t| {
                    let cp = problem.curve.sample(test_angle(t, m_test, n));
                    let delta = 1e-4 * cp.point.norm();
                    let nrm = cp.normal;
                    let (e1, d1) = representation(sol, problem, FieldRegion::R1, cp.point + nrm.scale(delta), nrm)?;
                    let (e2, d2) = representation(sol, problem, FieldRegion::R2, cp.point - nrm.scale(delta), nrm)?;
                    let e1b = e1 - d1 * delta;
                    let e2b = e2 + d2 * delta;
                    let h1 = y(FieldRegion::R1) * d1;
                    let h2 = y(FieldRegion::R2) * d2;
                    Ok(((e1b - e2b).norm(), e1b.norm(), (h1 - h2).norm(), h1.norm()))
                })
                .collect::<Result<_>>()?;
            Ok(reduce(&rows, ResidualKind::Continuity, m_test))
        }
        Method::Nfm => {
            let rows: Vec<Row> = (0..m_test)
                .into_par_iter()
                .map(|t| {
                    let phi = test_angle(t, m_test, n);
                    let a1 = problem.aux1.curve.sample(phi);
                    let a2 = problem.aux2.curve.sample(phi);
                    let (e1, d1) = representation(sol, problem, FieldRegion::R1, a1.point, a1.normal)?;
                    let (e2, d2) = representation(sol, problem, FieldRegion::R2, a2.point, a2.normal)?;
                    let de = e1.norm().max(e2.norm());
                    let dh = (d1 / m.k(FieldRegion::R1)).norm().max((d2 / m.k(FieldRegion::R2)).norm());
                    Ok((de, 0.0, dh, 0.0))
                })
                .collect::<Result<_>>()?;
            let density = normalized_currents(sol, problem);
            let peak = |v: &[Complex64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let e_scale = peak(&density.second);
            let h_scale = m.z(FieldRegion::R1) * peak(&density.first);
            let rows: Vec<Row> = rows.into_iter().map(|(de, _, dh, _)| (de, e_scale, dh, h_scale)).collect();
            Ok(reduce(&rows, ResidualKind::NullField, m_test))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::reconstruct_fields_from_densities;
    use crate::discrete::{assemble, assemble_nfm, solve_circulant_dft, solve_dense};
    use crate::exact::{exact_field_at, CircularSetup};
    use crate::geometry::BoundaryCurve;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn setup(region: Region, rf: f64) -> CircularSetup {
        CircularSetup::new(2.0, Media::dielectric(4.2, 1.0).unwrap(), Excitation::polar(region, rf, 0.0, one())).unwrap()
    }

    fn solved(p: &Problem, method: Method) -> DiscreteSolution {
        solve_dense(&assemble(p, method).unwrap()).unwrap()
    }

    fn ring(rho: f64, count: usize) -> Vec<Point> {
        (0..count).map(|k| Point::polar(rho, 2.0 * PI * k as f64 / count as f64)).collect()
    }

    fn max_rel_error(sol: &DiscreteSolution, p: &Problem, pts: &[Point]) -> f64 {
        let s = p.circular_setup().unwrap();
        let exact: Vec<Complex64> = pts.iter().map(|&o| exact_field_at(&s, o).unwrap()).collect();
        let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
        pts.iter()
            .zip(&exact)
            .map(|(&o, e)| (field_from_discrete(sol, p, o).unwrap().value - e).norm() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn nfm_fields_match_exact_on_both_rings() {
        for (region, rf) in [(Region::External, 4.0), (Region::Internal, 1.0)] {
            let p = Problem::circular(&setup(region, rf), 1.5, 2.5, 40).unwrap();
            let sol = solved(&p, Method::Nfm);
            let outer: Vec<Point> = ring(10.0, 36);
            let inner: Vec<Point> = ring(1.0, 36).into_iter().map(|o| o + Point::new(0.0, 1e-3)).collect();
            assert!(max_rel_error(&sol, &p, &outer) < 1e-3);
            assert!(max_rel_error(&sol, &p, &inner) < 1e-3);
        }
    }

    #[test]
    fn zero_currents_and_source_give_zero_field() {
        let s = setup(Region::External, 4.0).with_amplitude(Complex64::new(0.0, 0.0));
        let p = Problem::circular(&s, 1.5, 2.5, 12).unwrap();
        let sol = solved(&p, Method::Nfm);
        for o in [Point::new(5.0, 0.3), Point::new(0.2, 0.1)] {
            assert_eq!(field_from_discrete(&sol, &p, o).unwrap().value, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn doubling_amplitude_doubles_field() {
        let s = setup(Region::External, 4.0);
        let p1 = Problem::circular(&s, 1.5, 2.5, 20).unwrap();
        let p2 = Problem::circular(&s.with_amplitude(Complex64::new(2.0, 0.0)), 1.5, 2.5, 20).unwrap();
        let (a, b) = (solved(&p1, Method::Nfm), solved(&p2, Method::Nfm));
        for o in [Point::new(6.0, 1.0), Point::new(0.5, -0.4)] {
            let fa = field_from_discrete(&a, &p1, o).unwrap().value;
            let fb = field_from_discrete(&b, &p2, o).unwrap().value;
            assert!((fb - 2.0 * fa).norm() <= 1e-13 * fa.norm());
        }
    }

    #[test]
    fn region_checks() {
        let p = Problem::circular(&setup(Region::External, 4.0), 1.5, 2.5, 12).unwrap();
        let sol = solved(&p, Method::Nfm);
        assert!(matches!(
            field_in_region(&sol, &p, FieldRegion::R2, Point::new(5.0, 0.0)),
            Err(Error::RegionMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(field_from_discrete(&sol, &p, Point::new(4.0, 0.0)), Err(Error::Singular { .. })));
        assert!(field_from_discrete(&sol, &p, Point::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn converges_to_density_reconstruction() {
        let s = setup(Region::External, 4.0);
        let obs = Point::polar(6.0, 0.7);
        let target = reconstruct_fields_from_densities(&s, obs, None).unwrap().value;
        let err = |n: usize| {
            let p = Problem::circular(&s, 1.5, 2.5, n).unwrap();
            let sol = solve_circulant_dft(&assemble_nfm(&p).unwrap()).unwrap();
            (field_from_discrete(&sol, &p, obs).unwrap().value - target).norm() / target.norm()
        };
        assert!(err(161) < 1e-6);
        assert!(err(161) < err(41));
    }

    #[test]
    fn mas_fields_match_exact_for_safe_aux() {
        let p = Problem::circular(&setup(Region::External, 4.0), 1.5, 2.5, 40).unwrap();
        let sol = solved(&p, Method::Mas);
        assert!(max_rel_error(&sol, &p, &ring(10.0, 36)) < 1e-3);
    }

    #[test]
    fn mas_currents_blow_up_while_nfm_stays_put() {
        let s = setup(Region::External, 4.0);
        let amp = |method: Method, n: usize| {
            let sol = solved(&Problem::circular(&s, 0.5, 10.0, n).unwrap(), method);
            crate::linalg::norm_inf_vec(&sol.second)
        };
        assert!(amp(Method::Mas, 46) > 10.0 * amp(Method::Mas, 40));
        let g = amp(Method::Nfm, 46) / amp(Method::Nfm, 40);
        assert!((0.5..2.0).contains(&g));
    }

    #[test]
    fn nfm_field_insensitive_to_aux_choice() {
        let s = setup(Region::External, 4.0);
        let a = Problem::circular(&s, 1.5, 2.5, 40).unwrap();
        let b = Problem::circular(&s, 0.5, 10.0, 40).unwrap();
        let (sa, sb) = (solved(&a, Method::Nfm), solved(&b, Method::Nfm));
        for o in ring(10.0, 12) {
            let fa = field_from_discrete(&sa, &a, o).unwrap().value;
            let fb = field_from_discrete(&sb, &b, o).unwrap().value;
            assert!((fa - fb).norm() < 1e-3 * fb.norm());
        }
    }

    #[test]
    fn residuals_small_for_circle() {
        for method in [Method::Nfm, Method::Mas] {
            let p = Problem::circular(&setup(Region::External, 4.0), 1.5, 2.5, 40).unwrap();
            let r = boundary_residuals(&solved(&p, method), &p, 64).unwrap();
            assert!(r.e_tangential < 1e-3 && r.h_tangential < 1e-3, "{method:?} {r:?}");
        }
    }

    #[test]
    fn residuals_at_noise_floor_when_transparent() {
        let s = CircularSetup::new(2.0, Media::dielectric(1.0, 1.0).unwrap(), Excitation::polar(Region::External, 4.0, 0.0, one())).unwrap();
        let p = Problem::circular(&s, 0.5, 10.0, 40).unwrap();
        let r = boundary_residuals(&solved(&p, Method::Nfm), &p, 64).unwrap();
        assert_eq!(r.kind, ResidualKind::NullField);
        assert!(r.e_tangential < 1e-10 && r.h_tangential < 1e-10, "{r:?}");
    }

    #[test]
    fn mas_continuity_residual_detects_unsolved_currents() {
        let p = Problem::circular(&setup(Region::External, 4.0), 1.5, 2.5, 40).unwrap();
        let mut sol = solved(&p, Method::Mas);
        let good = boundary_residuals(&sol, &p, 64).unwrap();
        sol.second.iter_mut().for_each(|z| *z *= 1.01);
        let bad = boundary_residuals(&sol, &p, 64).unwrap();
        assert_eq!(good.kind, ResidualKind::Continuity);
        assert!(bad.e_tangential > 100.0 * good.e_tangential);
    }

    #[test]
    fn ellipse_residuals_decrease_with_n() {
        let make = |n: usize| {
            Problem::scaled(
                BoundaryCurve::ellipse(2.0, 1.6).unwrap(),
                0.33,
                5.0,
                Media::dielectric(4.2, 1.0).unwrap(),
                Excitation::polar(Region::External, 4.0, 0.0, one()),
                n,
            )
            .unwrap()
        };
        let r: Vec<BoundaryResiduals> = [20, 40, 60]
            .iter()
            .map(|&n| boundary_residuals(&solved(&make(n), Method::Nfm), &make(n), 64).unwrap())
            .collect();
        let worst: Vec<f64> = r.iter().map(|r| r.e_tangential.max(r.h_tangential)).collect();
        assert!(worst[1] < 1e-2, "{r:?}");
        assert!(worst[0] > worst[1] && worst[1] > worst[2], "{r:?}");
        // Both components reach the roundoff floor, where they need not decrease individually.
        assert!(r[2].e_tangential < 1e-12 && r[2].h_tangential < 1e-12, "{r:?}");
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let (k, r, s, n, dir) = (1.7, Point::new(1.3, 0.4), Point::new(2.0, -0.3), Point::new(0.6, 0.8), Point::new(-0.28, 0.96));
        let h = 1e-6;
        for f in [
            &(|p: Point| h0_kernel(k, p, s, dir).unwrap()) as &dyn Fn(Point) -> (Complex64, Complex64),
            &|p: Point| km_kernel(k, p, s, n, dir).unwrap(),
        ] {
            let fd = (f(r + dir.scale(h)).0 - f(r - dir.scale(h)).0) / (2.0 * h);
            assert!((fd - f(r).1).norm() < 1e-8 * fd.norm().max(1.0));
        }
    }
}
