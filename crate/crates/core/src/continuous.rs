//! Continuous equivalent-current densities on a circular boundary: the
//! per-mode 2x2 system, the density series, their large-order behavior, and
//! field reconstruction from the densities.

use crate::error::{Error, Result};
use crate::exact::{default_order_cap, incident_field, CircularSetup, FieldRegion, ModeTables, SeriesResult};
use crate::geometry::{Point, Region};
use crate::specfun::{CylinderFunctions, ScaledC};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Fourier coefficients of the electric (`I_n^s`) and magnetic (`M_n^s`)
/// surface current densities for mode `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityCoefficients {
    pub n: i64,
    pub electric: Complex64,
    pub magnetic: Complex64,
}

const DET_FLOOR: f64 = 1e-14;

fn i_unit() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// Scaled-form `(I_n^s, M_n^s)`; the auxiliary radii never enter.
fn mode_solve_scaled(setup: &CircularSetup, tabs: &ModeTables, n: i64) -> Result<(ScaledC, ScaledC)> {
    let m = &setup.media;
    let (z1, z2) = (m.z1(), m.z2());
    let a11 = tabs.t1c.h_c(n);
    let a12 = tabs.t1c.hp_c(n).mul_c(1.0 / (i_unit() * z1));
    let a21 = tabs.t2c.j_c(n);
    let a22 = tabs.t2c.jp_c(n).mul_c(1.0 / (i_unit() * z2));
    let p = a11.mul(a22);
    let q = a12.mul(a21);
    let det = p.sub(q);
    let scale = p.log2_norm().max(q.log2_norm());
    if det.is_zero() || det.log2_norm() < scale + DET_FLOOR.log2() {
        return Err(Error::DegenerateMode {
            mode: n,
            magnitude: det.to_c64().norm(),
        });
    }
    let amp = setup.excitation.amplitude / (2.0 * PI * setup.rho_cyl);
    let rot = Complex64::from_polar(1.0, -(n as f64) * setup.phi_fil());
    let (b1, b2) = match setup.excitation.region {
        Region::External => (tabs.tf.h_c(n).mul_c(-amp * rot), ScaledC::ZERO),
        Region::Internal => (ScaledC::ZERO, tabs.tf.j_c(n).mul_c(amp * rot)),
    };
    let i_s = b1.mul(a22).sub(a12.mul(b2)).div(det);
    let m_s = a11.mul(b2).sub(a21.mul(b1)).div(det);
    Ok((i_s, m_s))
}

/// Solve
/// `[H_n(k1 rc), H'_n(k1 rc)/(i Z1); J_n(k2 rc), J'_n(k2 rc)/(i Z2)] (I, M) = b`
/// with `b = (-I H_n(k1 rf)/(2 pi rc), 0)` for an exterior source and
/// `b = (0, I J_n(k2 rf)/(2 pi rc))` for an interior one.
pub fn mode_solve(setup: &CircularSetup, n: i64) -> Result<DensityCoefficients> {
    let tabs = ModeTables::new(setup, n.unsigned_abs() as usize)?;
    let (i_s, m_s) = mode_solve_scaled(setup, &tabs, n)?;
    Ok(DensityCoefficients {
        n,
        electric: i_s.to_c64(),
        magnetic: m_s.to_c64(),
    })
}

/// Partial sums of both density series at one angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityValues {
    pub electric: Complex64,
    pub magnetic: Complex64,
    pub n_used: usize,
}

/// `J_z^s(phi)` and `M_phi^s(phi)` summed over `|n| <= n_max`.
pub fn density_series(setup: &CircularSetup, phi: f64, n_max: usize) -> Result<DensityValues> {
    Ok(density_series_many(setup, &[phi], n_max)?[0])
}

/// [`density_series`] at several angles, sharing the mode solves.
pub fn density_series_many(setup: &CircularSetup, phis: &[f64], n_max: usize) -> Result<Vec<DensityValues>> {
    let tabs = ModeTables::new(setup, n_max)?;
    let mut coeffs = Vec::with_capacity(2 * n_max + 1);
    for n in -(n_max as i64)..=n_max as i64 {
        let (i_s, m_s) = mode_solve_scaled(setup, &tabs, n)?;
        coeffs.push((n, i_s.to_c64(), m_s.to_c64()));
    }
    Ok(phis
        .iter()
        .map(|&phi| {
            let mut e = Complex64::new(0.0, 0.0);
            let mut h = Complex64::new(0.0, 0.0);
            // Smallest terms first.
            let mut order: Vec<&(i64, Complex64, Complex64)> = coeffs.iter().collect();
            order.sort_by_key(|c| std::cmp::Reverse(c.0.unsigned_abs()));
            for &&(n, i_s, m_s) in &order {
                let w = Complex64::from_polar(1.0, n as f64 * phi);
                e += i_s * w;
                h += m_s * w;
            }
            DensityValues {
                electric: e,
                magnetic: h,
                n_used: n_max,
            }
        })
        .collect())
}

/// Which density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DensityKind {
    Electric,
    Magnetic,
}

/// `n`-th density-series term with the common prefactor removed:
/// `I_n^s (-2 pi rc / I)` or `M_n^s (2 pi rc / I)` (source at `phi = 0`).
pub fn density_series_term(setup: &CircularSetup, which: DensityKind, n: i64) -> Result<Complex64> {
    let mut s = *setup;
    s.excitation.position = Point::polar(setup.rho_fil(), 0.0);
    let c = mode_solve(&s, n)?;
    let norm = 2.0 * PI * setup.rho_cyl / setup.excitation.amplitude;
    Ok(match which {
        DensityKind::Electric => -c.electric * norm,
        DensityKind::Magnetic => c.magnetic * norm,
    })
}

/// Leading large-`|n|` form of [`density_series_term`].
pub fn density_term_asymptotics(setup: &CircularSetup, which: DensityKind, n: i64) -> Complex64 {
    let m = &setup.media;
    let (k1, k2, z1, z2) = (m.k1(), m.k2(), m.z1(), m.z2());
    let a = n.unsigned_abs() as f64;
    let (rc, rf) = (setup.rho_cyl, setup.rho_fil());
    let ratio = match setup.excitation.region {
        Region::External => rc / rf,
        Region::Internal => rf / rc,
    };
    let geometric = ratio.powf(a);
    match (which, setup.excitation.region) {
        (DensityKind::Electric, Region::External) => Complex64::new(z1 * k1 / (z1 * k1 + z2 * k2) * geometric, 0.0),
        (DensityKind::Electric, Region::Internal) => Complex64::new(-z2 * k2 / (z1 * k1 + z2 * k2) * geometric, 0.0),
        (DensityKind::Magnetic, _) => i_unit() * z1 * z2 / (z1 / k2 + z2 / k1) * rc * geometric / a,
    }
}

const REL_STOP: f64 = 1e-13;

/// Field at `obs` from the density Fourier coefficients via the addition
/// theorems. Region 1 uses the densities radiating with `k1`; region 2 the
/// negated densities radiating with `k2`. The incident field is added in the
/// source region.
pub fn reconstruct_fields_from_densities(setup: &CircularSetup, obs: Point, n_max: Option<usize>) -> Result<SeriesResult> {
    let rho = obs.norm();
    let rc = setup.rho_cyl;
    if (rho - rc).abs() <= 1e-12 * rc {
        return Err(Error::Invalid("reconstruction point lies on the boundary".into()));
    }
    let region = if rho > rc { FieldRegion::R1 } else { FieldRegion::R2 };
    let cap = n_max.unwrap_or_else(|| default_order_cap(setup, rho));
    let m = &setup.media;
    let tabs = ModeTables::new(setup, cap)?;
    let to = CylinderFunctions::new(cap, m.k(region) * rho)?;
    let phi = obs.angle();
    let mut value = Complex64::new(0.0, 0.0);
    let mut small_run = 0;
    let mut n_used = 0;
    let mut converged = false;
    let mut last = 0.0;
    for a in 0..=cap as i64 {
        let mut pair = Complex64::new(0.0, 0.0);
        for n in if a == 0 { vec![0] } else { vec![a, -a] } {
            let (i_s, m_s) = mode_solve_scaled(setup, &tabs, n)?;
            let t = match region {
                FieldRegion::R1 => {
                    let k1 = m.k1();
                    let inner = i_s
                        .mul(tabs.t1c.j_c(n))
                        .mul_c(m.z1().into())
                        .add(m_s.mul(tabs.t1c.jp_c(n)).mul_c(1.0 / i_unit()));
                    inner.mul(to.h_c(n)).mul_c((-PI * k1 * rc / 2.0).into())
                }
                FieldRegion::R2 => {
                    let k2 = m.k2();
                    let inner = i_s
                        .mul(tabs.t2c.h_c(n))
                        .mul_c(m.z2().into())
                        .add(m_s.mul(tabs.t2c.hp_c(n)).mul_c(1.0 / i_unit()));
                    inner.mul(to.j_c(n)).mul_c((PI * k2 * rc / 2.0).into())
                }
            };
            pair += t.to_c64() * Complex64::from_polar(1.0, n as f64 * phi);
        }
        value += pair;
        last = pair.norm();
        n_used = a as usize;
        if last <= REL_STOP * value.norm() {
            small_run += 1;
            if small_run >= 3 {
                converged = true;
                break;
            }
        } else {
            small_run = 0;
        }
    }
    if region == FieldRegion::of_source(setup.excitation.region) {
        value += incident_field(&setup.excitation, m, obs)?;
    }
    Ok(SeriesResult {
        value,
        n_used,
        tail_estimate: last,
        converged,
        in_convergence_region: true,
    })
}
