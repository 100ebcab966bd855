//! Exact Fourier-series fields of a circular dielectric cylinder excited by
//! an electric line source, with convergence-region classification and
//! large-order term probes.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Excitation, Point, Region};
use crate::specfun::{hankel2, CylinderFunctions, ScaledC};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative permittivity and permeability of a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub eps_r: f64,
    pub mu_r: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Self::VACUUM
    }
}

impl Medium {
    pub const VACUUM: Medium = Medium { eps_r: 1.0, mu_r: 1.0 };

    pub fn new(eps_r: f64, mu_r: f64) -> Result<Self> {
        let m = Self { eps_r, mu_r };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_r", self.eps_r), ("mu_r", self.mu_r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `sqrt(eps_r mu_r)`.
    pub fn refractive_index(&self) -> f64 {
        (self.eps_r * self.mu_r).sqrt()
    }

    /// `sqrt(mu_r / eps_r)`.
    pub fn impedance(&self) -> f64 {
        (self.mu_r / self.eps_r).sqrt()
    }
}

/// Exterior (region 1) and interior (region 2) media. Lengths are scaled
/// by the exterior wavenumber, so `k1 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Media {
    #[serde(default)]
    pub outer: Medium,
    pub inner: Medium,
}

impl Media {
    pub fn new(outer: Medium, inner: Medium) -> Result<Self> {
        outer.validate()?;
        inner.validate()?;
        Ok(Self { outer, inner })
    }

    /// Vacuum outside, `(eps_r, mu_r)` inside.
    pub fn dielectric(eps_r: f64, mu_r: f64) -> Result<Self> {
        Self::new(Medium::VACUUM, Medium::new(eps_r, mu_r)?)
    }

    pub fn k1(&self) -> f64 {
        1.0
    }

    pub fn k2(&self) -> f64 {
        self.inner.refractive_index() / self.outer.refractive_index()
    }

    pub fn z1(&self) -> f64 {
        self.outer.impedance()
    }

    pub fn z2(&self) -> f64 {
        self.inner.impedance()
    }

    pub fn k(&self, region: FieldRegion) -> f64 {
        match region {
            FieldRegion::R1 => self.k1(),
            FieldRegion::R2 => self.k2(),
        }
    }

    pub fn z(&self, region: FieldRegion) -> f64 {
        match region {
            FieldRegion::R1 => self.z1(),
            FieldRegion::R2 => self.z2(),
        }
    }

    pub fn is_transparent(&self) -> bool {
        self.outer == self.inner
    }
}

/// Region in which a field is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldRegion {
    /// Exterior.
    R1,
    /// Interior.
    R2,
}

impl FieldRegion {
    pub fn index(self) -> u8 {
        match self {
            FieldRegion::R1 => 1,
            FieldRegion::R2 => 2,
        }
    }

    /// Region holding the source of `excitation`.
    pub fn of_source(region: Region) -> Self {
        match region {
            Region::External => FieldRegion::R1,
            Region::Internal => FieldRegion::R2,
        }
    }
}

const SINGULAR_DISTANCE: f64 = 1e-12;

/// `-(k_j Z_j / 4) I H^(2)_0(k_j D)` in the medium holding the source.
pub fn incident_field(excitation: &Excitation, media: &Media, obs: Point) -> Result<Complex64> {
    let region = FieldRegion::of_source(excitation.region);
    let (k, z) = (media.k(region), media.z(region));
    if excitation.amplitude == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let d = obs.distance(excitation.position);
    if d < SINGULAR_DISTANCE {
        return Err(Error::Singular { distance: d });
    }
    Ok(excitation.kernel_prefactor(k, z) * excitation.amplitude * hankel2(0, k * d)?)
}

/// `d/d rho` of [`incident_field`] at `obs`.
pub fn incident_field_radial_derivative(excitation: &Excitation, media: &Media, obs: Point) -> Result<Complex64> {
    let region = FieldRegion::of_source(excitation.region);
    let (k, z) = (media.k(region), media.z(region));
    let d = obs.distance(excitation.position);
    if d < SINGULAR_DISTANCE {
        return Err(Error::Singular { distance: d });
    }
    let rho = obs.norm();
    let radial = if rho > 0.0 { obs.scale(1.0 / rho) } else { Point::new(1.0, 0.0) };
    let dd_drho = radial.dot(obs - excitation.position) / d;
    // d/dD H0(kD) = -k H1(kD)
    Ok(excitation.kernel_prefactor(k, z) * excitation.amplitude * (-k) * hankel2(1, k * d)? * dd_drho)
}

/// Circular cylinder, media and source: the setting of every closed-form
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularSetup {
    pub rho_cyl: f64,
    pub media: Media,
    pub excitation: Excitation,
}

impl CircularSetup {
    pub fn new(rho_cyl: f64, media: Media, excitation: Excitation) -> Result<Self> {
        let s = Self {
            rho_cyl,
            media,
            excitation,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let curve = BoundaryCurve::circle(self.rho_cyl)?;
        self.media.outer.validate()?;
        self.media.inner.validate()?;
        self.excitation.validate(&curve)
    }

    pub fn curve(&self) -> BoundaryCurve {
        BoundaryCurve::Circle { radius: self.rho_cyl }
    }

    pub fn rho_fil(&self) -> f64 {
        self.excitation.rho()
    }

    pub fn phi_fil(&self) -> f64 {
        self.excitation.phi()
    }

    pub fn rho_cri(&self) -> f64 {
        critical_radius(self.rho_cyl, self.rho_fil())
    }

    pub fn with_amplitude(&self, amplitude: Complex64) -> Self {
        let mut s = *self;
        s.excitation.amplitude = amplitude;
        s
    }
}

/// `rho_cyl^2 / rho_fil`.
pub fn critical_radius(rho_cyl: f64, rho_fil: f64) -> f64 {
    rho_cyl * rho_cyl / rho_fil
}

/// One of the four exact series, by source region and field region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesId {
    ExtR1,
    ExtR2,
    IntR1,
    IntR2,
}

impl SeriesId {
    pub fn select(source: Region, field: FieldRegion) -> Self {
        match (source, field) {
            (Region::External, FieldRegion::R1) => SeriesId::ExtR1,
            (Region::External, FieldRegion::R2) => SeriesId::ExtR2,
            (Region::Internal, FieldRegion::R1) => SeriesId::IntR1,
            (Region::Internal, FieldRegion::R2) => SeriesId::IntR2,
        }
    }

    pub fn source(self) -> Region {
        match self {
            SeriesId::ExtR1 | SeriesId::ExtR2 => Region::External,
            SeriesId::IntR1 | SeriesId::IntR2 => Region::Internal,
        }
    }

    pub fn field_region(self) -> FieldRegion {
        match self {
            SeriesId::ExtR1 | SeriesId::IntR1 => FieldRegion::R1,
            SeriesId::ExtR2 | SeriesId::IntR2 => FieldRegion::R2,
        }
    }

    pub const ALL: [SeriesId; 4] = [SeriesId::ExtR1, SeriesId::ExtR2, SeriesId::IntR1, SeriesId::IntR2];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converges,
    Diverges,
}

/// Extended convergence region of each series. Points on the boundary of
/// a region are classified as diverging.
pub fn convergence_region(id: SeriesId, rho_obs: f64, rho_cyl: f64, rho_fil: f64) -> Convergence {
    let cri = critical_radius(rho_cyl, rho_fil);
    let ok = match id {
        SeriesId::ExtR1 => rho_obs > cri,
        SeriesId::ExtR2 => rho_obs < rho_fil,
        SeriesId::IntR1 => rho_obs > rho_fil,
        SeriesId::IntR2 => rho_obs < cri,
    };
    if ok {
        Convergence::Converges
    } else {
        Convergence::Diverges
    }
}

/// A truncated series value with its truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: Complex64,
    /// Highest `|n|` summed.
    pub n_used: usize,
    /// Estimated magnitude of the omitted remainder.
    pub tail_estimate: f64,
    pub converged: bool,
    /// `false` when the observation point lies outside the series'
    /// extended convergence region.
    pub in_convergence_region: bool,
}

/// Default cap on `|n|`: `40 + ceil(3 k_max rho_max)`.
pub fn default_order_cap(setup: &CircularSetup, rho_obs: f64) -> usize {
    let k_max = setup.media.k1().max(setup.media.k2());
    let rho_max = setup.rho_cyl.max(setup.rho_fil()).max(rho_obs);
    40 + (3.0 * k_max * rho_max).ceil() as usize
}

const REL_STOP: f64 = 1e-13;
/// Relative size below which a mode denominator counts as vanished.
const DENOMINATOR_FLOOR: f64 = 1e-14;

/// Per-mode cylinder-function tables for one setup.
pub(crate) struct ModeTables {
    pub t1c: CylinderFunctions,
    pub t2c: CylinderFunctions,
    /// `k_src * rho_fil`, with `k_src` the wavenumber of the source region.
    pub tf: CylinderFunctions,
}

impl ModeTables {
    pub fn new(setup: &CircularSetup, nmax: usize) -> Result<Self> {
        let m = &setup.media;
        let kf = m.k(FieldRegion::of_source(setup.excitation.region));
        Ok(Self {
            t1c: CylinderFunctions::new(nmax, m.k1() * setup.rho_cyl)?,
            t2c: CylinderFunctions::new(nmax, m.k2() * setup.rho_cyl)?,
            tf: CylinderFunctions::new(nmax, kf * setup.rho_fil())?,
        })
    }

    /// `Z1 H_n(k1 rc) J'_n(k2 rc) - Z2 J_n(k2 rc) H'_n(k1 rc)`, checked
    /// against cancellation.
    pub fn denominator(&self, media: &Media, n: i64) -> Result<ScaledC> {
        let a = self.t1c.h_c(n).mul(self.t2c.jp_c(n)).mul_c(media.z1().into());
        let b = self.t2c.j_c(n).mul(self.t1c.hp_c(n)).mul_c(media.z2().into());
        let d = a.sub(b);
        let scale = a.log2_norm().max(b.log2_norm());
        if d.is_zero() || d.log2_norm() < scale + DENOMINATOR_FLOOR.log2() {
            return Err(Error::DegenerateMode {
                mode: n,
                magnitude: d.to_c64().norm(),
            });
        }
        Ok(d)
    }
}

fn i_unit() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

/// Mode coefficient `a_n` of series `id` (the factor multiplying the
/// observation-radius function `H_n(k1 rho)` or `J_n(k2 rho)`).
fn mode_coefficient(setup: &CircularSetup, tabs: &ModeTables, id: SeriesId, n: i64) -> Result<ScaledC> {
    let m = &setup.media;
    let (k1, k2, z1, z2) = (m.k1(), m.k2(), m.z1(), m.z2());
    let amp = setup.excitation.amplitude;
    let delta = tabs.denominator(m, n)?;
    let (t1c, t2c, tf) = (&tabs.t1c, &tabs.t2c, &tabs.tf);
    let over_2pi_rc = -amp / (2.0 * PI * setup.rho_cyl);
    Ok(match id {
        SeriesId::ExtR1 => {
            let num = t2c
                .jp_c(n)
                .mul(t1c.j_c(n))
                .mul_c(z1.into())
                .sub(t2c.j_c(n).mul(t1c.jp_c(n)).mul_c(z2.into()));
            tf.h_c(n).mul(num).div(delta).mul_c(k1 * z1 * amp / 4.0)
        }
        SeriesId::ExtR2 => tf.h_c(n).div(delta).mul_c(over_2pi_rc * i_unit() * z1 * z2),
        SeriesId::IntR1 => tf.j_c(n).div(delta).mul_c(over_2pi_rc * i_unit() * z1 * z2),
        SeriesId::IntR2 => {
            let num = t1c
                .h_c(n)
                .mul(t2c.hp_c(n))
                .mul_c(z1.into())
                .sub(t1c.hp_c(n).mul(t2c.h_c(n)).mul_c(z2.into()));
            tf.j_c(n).mul(num).div(delta).mul_c(k2 * z2 * amp / 4.0)
        }
    })
}

/// Observation-radius factor of series `id` (or its `rho` derivative).
fn radial_factor(media: &Media, id: SeriesId, to: &CylinderFunctions, n: i64, derivative: bool) -> ScaledC {
    match (id.field_region(), derivative) {
        (FieldRegion::R1, false) => to.h_c(n),
        (FieldRegion::R1, true) => to.hp_c(n).mul_c(media.k1().into()),
        (FieldRegion::R2, false) => to.j_c(n),
        (FieldRegion::R2, true) => to.jp_c(n).mul_c(media.k2().into()),
    }
}

/// `n`-th term of series `id` at radius `rho_obs`, without the angular
/// factor `e^{i n phi}`.
pub fn series_term(setup: &CircularSetup, id: SeriesId, n: i64, rho_obs: f64) -> Result<Complex64> {
    check_series_source(setup, id)?;
    let a = n.unsigned_abs() as usize;
    let tabs = ModeTables::new(setup, a)?;
    let to = CylinderFunctions::new(a, setup.media.k(id.field_region()) * rho_obs)?;
    Ok(mode_coefficient(setup, &tabs, id, n)?
        .mul(radial_factor(&setup.media, id, &to, n, false))
        .to_c64())
}

fn check_series_source(setup: &CircularSetup, id: SeriesId) -> Result<()> {
    if id.source() != setup.excitation.region {
        return Err(Error::Invalid(format!(
            "series {id:?} needs a {:?} source",
            id.source()
        )));
    }
    Ok(())
}

/// Sum of series `id` alone (no incident field) at `obs`, stopping when
/// three consecutive `±n` pairs fall below `1e-13` of the running sum or
/// at `n_cap`.
pub fn series_sum(
    setup: &CircularSetup,
    id: SeriesId,
    obs: Point,
    derivative: bool,
    n_cap: usize,
) -> Result<SeriesResult> {
    check_series_source(setup, id)?;
    let rho = obs.norm();
    if !(rho > 0.0) {
        return Err(Error::Invalid("observation point at the origin".into()));
    }
    let dphi = obs.angle() - setup.phi_fil();
    let tabs = ModeTables::new(setup, n_cap)?;
    let to = CylinderFunctions::new(n_cap, setup.media.k(id.field_region()) * rho)?;
    let mut value = Complex64::new(0.0, 0.0);
    let mut small_run = 0;
    let mut last = 0.0;
    let mut prev = 0.0;
    let mut n_used = 0;
    let mut converged = false;
    for n in 0..=n_cap as i64 {
        let t = mode_coefficient(setup, &tabs, id, n)?
            .mul(radial_factor(&setup.media, id, &to, n, derivative))
            .to_c64();
        let weight = if n == 0 { 1.0 } else { 2.0 };
        value += weight * t * (n as f64 * dphi).cos();
        prev = last;
        last = weight * t.norm();
        n_used = n as usize;
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
    let ratio = if prev > 0.0 { last / prev } else { 0.0 };
    let tail_estimate = if ratio < 1.0 {
        last * ratio / (1.0 - ratio) + last
    } else {
        f64::INFINITY
    };
    let in_region = convergence_region(id, rho, setup.rho_cyl, setup.rho_fil()) == Convergence::Converges;
    if !value.re.is_finite() || !value.im.is_finite() {
        converged = false;
    }
    Ok(SeriesResult {
        value,
        n_used,
        tail_estimate,
        converged,
        in_convergence_region: in_region,
    })
}

fn region_of(setup: &CircularSetup, obs: Point) -> FieldRegion {
    if obs.norm() > setup.rho_cyl {
        FieldRegion::R1
    } else {
        FieldRegion::R2
    }
}

/// Total field (incident plus series) in `region` at `obs`, with the
/// default order cap.
pub fn exact_field(setup: &CircularSetup, region: FieldRegion, obs: Point) -> Result<SeriesResult> {
    exact_field_with_cap(setup, region, obs, default_order_cap(setup, obs.norm()))
}

/// As [`exact_field`] with an explicit cap on `|n|`.
///
/// The series is evaluated at `obs` even outside `region` (analytic
/// continuation); `in_convergence_region` reports whether it converges there.
/// A series that fails to converge inside its region is an error.
pub fn exact_field_with_cap(setup: &CircularSetup, region: FieldRegion, obs: Point, n_cap: usize) -> Result<SeriesResult> {
    field_impl(setup, region, obs, n_cap, false)
}

/// `dE/d rho` in `region` at `obs`, term by term.
pub fn exact_field_radial_derivative(setup: &CircularSetup, region: FieldRegion, obs: Point) -> Result<SeriesResult> {
    field_impl(setup, region, obs, default_order_cap(setup, obs.norm()), true)
}

fn field_impl(setup: &CircularSetup, region: FieldRegion, obs: Point, n_cap: usize, derivative: bool) -> Result<SeriesResult> {
    let id = SeriesId::select(setup.excitation.region, region);
    let mut r = series_sum(setup, id, obs, derivative, n_cap)?;
    if r.in_convergence_region && !r.converged {
        return Err(Error::Truncation {
            terms: r.n_used,
            tail: r.tail_estimate,
        });
    }
    if FieldRegion::of_source(setup.excitation.region) == region {
        r.value += if derivative {
            incident_field_radial_derivative(&setup.excitation, &setup.media, obs)?
        } else {
            incident_field(&setup.excitation, &setup.media, obs)?
        };
    }
    Ok(r)
}

/// Total field at `obs` in whichever region contains it.
pub fn exact_field_at(setup: &CircularSetup, obs: Point) -> Result<Complex64> {
    Ok(exact_field(setup, region_of(setup, obs), obs)?.value)
}

/// Leading large-`|n|` magnitude law of each series term (up to a constant
/// factor common to all `n`).
pub fn predicted_term(setup: &CircularSetup, id: SeriesId, n: i64, rho_obs: f64) -> Complex64 {
    let m = &setup.media;
    let a = n.unsigned_abs() as f64;
    let (rc, rf) = (setup.rho_cyl, setup.rho_fil());
    let cri = critical_radius(rc, rf);
    match id {
        SeriesId::ExtR1 => Complex64::new(2.0 / (PI * a) * (cri / rho_obs).powf(a), 0.0),
        SeriesId::ExtR2 => {
            let (z1, z2, k1, k2) = (m.z1(), m.z2(), m.k1(), m.k2());
            i_unit() * z1 * z2 * rc / (a * (z1 / k2 + z2 / k1)) * (rho_obs / rf).powf(a)
        }
        SeriesId::IntR1 => Complex64::new((rf / rho_obs).powf(a) / a, 0.0),
        SeriesId::IntR2 => Complex64::new((rho_obs / cri).powf(a) / a, 0.0),
    }
}

/// Ratio of the actual `n`-th term to [`predicted_term`]; tends to a
/// constant as `|n|` grows.
pub fn term_ratio_probe(setup: &CircularSetup, id: SeriesId, n: i64, rho_obs: f64) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::Invalid("term probe needs |n| >= 1".into()));
    }
    Ok(series_term(setup, id, n, rho_obs)? / predicted_term(setup, id, n, rho_obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    fn ext() -> CircularSetup {
        CircularSetup::new(
            2.0,
            Media::dielectric(4.2, 1.0).unwrap(),
            Excitation::polar(Region::External, 4.0, 0.0, one()),
        )
        .unwrap()
    }

    fn int() -> CircularSetup {
        CircularSetup::new(
            2.0,
            Media::dielectric(4.2, 1.0).unwrap(),
            Excitation::polar(Region::Internal, 1.0, 0.0, one()),
        )
        .unwrap()
    }

    #[test]
    fn media_parameters() {
        let m = Media::dielectric(4.0, 1.0).unwrap();
        assert_eq!(m.k1(), 1.0);
        assert_relative_eq!(m.k2(), 2.0);
        assert_relative_eq!(m.z1(), 1.0);
        assert_relative_eq!(m.z2(), 0.5);
        assert!(Medium::new(0.0, 1.0).is_err());
    }

    #[test]
    fn incident_examples() {
        let m = Media::default();
        let zero = Excitation::polar(Region::External, 0.5, 0.0, Complex64::new(0.0, 0.0));
        assert_eq!(incident_field(&zero, &m, Point::new(3.0, 1.0)).unwrap(), Complex64::new(0.0, 0.0));
        let src = Excitation::polar(Region::External, 0.0, 0.0, one());
        let h4 = hankel2(0, 4.0).unwrap();
        for k in 0..8 {
            let v = incident_field(&src, &m, Point::polar(4.0, 0.7 * k as f64)).unwrap();
            assert!((v + 0.25 * h4).norm() < 1e-15);
        }
        let v = incident_field(&src, &m, Point::new(1.0, 0.0)).unwrap();
        let expect = -0.25 * Complex64::new(0.76519768655796655, -0.088256964215676958);
        assert!((v - expect).norm() < 1e-15);
        assert!(matches!(incident_field(&src, &m, Point::new(0.0, 0.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn critical_radius_examples() {
        assert_eq!(critical_radius(2.0, 4.0), 1.0);
        assert_eq!(critical_radius(2.0, 1.0), 4.0);
        assert_eq!(critical_radius(1.7, 1.7), 1.7);
    }

    #[test]
    fn convergence_region_examples() {
        assert_eq!(convergence_region(SeriesId::ExtR1, 1.5, 2.0, 4.0), Convergence::Converges);
        assert_eq!(convergence_region(SeriesId::IntR1, 0.9, 2.0, 1.0), Convergence::Diverges);
        assert_eq!(convergence_region(SeriesId::ExtR2, 4.0 * 0.999, 2.0, 4.0), Convergence::Converges);
        assert_eq!(convergence_region(SeriesId::ExtR1, 1.0, 2.0, 4.0), Convergence::Diverges);
        assert_eq!(convergence_region(SeriesId::IntR2, 4.0, 2.0, 1.0), Convergence::Diverges);
        assert_eq!(convergence_region(SeriesId::IntR2, 3.9, 2.0, 1.0), Convergence::Converges);
    }

    #[test]
    fn transparent_cylinder_is_invisible() {
        for region in [Region::External, Region::Internal] {
            let rf = if region == Region::External { 4.0 } else { 1.0 };
            let s = CircularSetup::new(
                2.0,
                Media::dielectric(1.0, 1.0).unwrap(),
                Excitation::polar(region, rf, 0.3, one()),
            )
            .unwrap();
            for (rho, fr) in [(3.0, FieldRegion::R1), (6.0, FieldRegion::R1), (1.5, FieldRegion::R2), (0.4, FieldRegion::R2)] {
                for k in 0..6 {
                    let obs = Point::polar(rho, 1.1 * k as f64);
                    let e = exact_field(&s, fr, obs).unwrap().value;
                    let inc = incident_field(&s.excitation, &s.media, obs).unwrap();
                    assert!((e - inc).norm() < 1e-12 * inc.norm(), "{region:?} rho={rho}");
                }
            }
        }
    }

    fn boundary_check(s: &CircularSetup) {
        let rc = s.rho_cyl;
        let m = s.media;
        let mut worst_e = 0.0f64;
        let mut worst_h = 0.0f64;
        let mut e_max = 0.0f64;
        let mut h_max = 0.0f64;
        for k in 0..32 {
            let obs = Point::polar(rc, 2.0 * PI * (k as f64 + 0.25) / 32.0);
            let e1 = exact_field(s, FieldRegion::R1, obs).unwrap().value;
            let e2 = exact_field(s, FieldRegion::R2, obs).unwrap().value;
            let d1 = exact_field_radial_derivative(s, FieldRegion::R1, obs).unwrap().value / (m.k1() * m.z1());
            let d2 = exact_field_radial_derivative(s, FieldRegion::R2, obs).unwrap().value / (m.k2() * m.z2());
            worst_e = worst_e.max((e1 - e2).norm());
            worst_h = worst_h.max((d1 - d2).norm());
            e_max = e_max.max(e1.norm());
            h_max = h_max.max(d1.norm());
        }
        assert!(worst_e < 1e-9 * e_max, "E residual {worst_e}");
        assert!(worst_h < 1e-8 * h_max, "H residual {worst_h}");
    }

    #[test]
    fn boundary_conditions_external_and_internal() {
        boundary_check(&ext());
        boundary_check(&int());
        let magnetic = CircularSetup::new(
            1.3,
            Media::new(Medium::new(1.5, 1.0).unwrap(), Medium::new(2.0, 3.0).unwrap()).unwrap(),
            Excitation::polar(Region::External, 3.0, -0.4, Complex64::new(0.3, -1.2)),
        )
        .unwrap();
        boundary_check(&magnetic);
    }

    #[test]
    fn interior_point_matches_region_two_series() {
        // The external-excitation field at rho = 1 comes from the region-2 series.
        let s = ext();
        let r = exact_field(&s, FieldRegion::R2, Point::new(1.0, 0.0)).unwrap();
        assert!(r.converged && r.in_convergence_region);
        assert_eq!(exact_field_at(&s, Point::new(1.0, 0.0)).unwrap(), r.value);
    }

    #[test]
    fn reciprocity_between_exterior_points() {
        let m = Media::dielectric(4.2, 1.0).unwrap();
        let (ra, rb) = (3.0, 5.5);
        for k in 0..5 {
            let phi = 0.6 * k as f64;
            let sa = CircularSetup::new(2.0, m, Excitation::polar(Region::External, rb, 0.0, one())).unwrap();
            let sb = CircularSetup::new(2.0, m, Excitation::polar(Region::External, ra, phi, one())).unwrap();
            let e_ab = exact_field(&sa, FieldRegion::R1, Point::polar(ra, phi)).unwrap().value;
            let e_ba = exact_field(&sb, FieldRegion::R1, Point::polar(rb, 0.0)).unwrap().value;
            assert!((e_ab - e_ba).norm() < 1e-12 * e_ab.norm());
        }
    }

    #[test]
    fn tail_estimate_bounds_remainder() {
        let s = ext();
        for rho in [1.3, 3.0, 8.0] {
            let obs = Point::polar(rho, 0.4);
            let id = SeriesId::ExtR1;
            for cap in [10usize, 20, 30] {
                let a = series_sum(&s, id, obs, false, cap).unwrap();
                let b = series_sum(&s, id, obs, false, 2 * cap).unwrap();
                if !a.converged {
                    assert!((b.value - a.value).norm() <= 2.0 * a.tail_estimate, "rho={rho} cap={cap}");
                }
            }
        }
    }

    #[test]
    fn analytic_continuation_inside_cylinder() {
        let s = ext();
        let id = SeriesId::ExtR1;
        let phi = 0.8;
        let inside = series_sum(&s, id, Point::polar(1.5, phi), false, 200).unwrap();
        assert!(inside.converged && inside.in_convergence_region);
        let h = 1e-4;
        let at = series_sum(&s, id, Point::polar(2.0, phi), false, 200).unwrap().value;
        let d = series_sum(&s, id, Point::polar(2.0, phi), true, 200).unwrap().value;
        let below = series_sum(&s, id, Point::polar(2.0 - h, phi), false, 200).unwrap().value;
        let above = series_sum(&s, id, Point::polar(2.0 + h, phi), false, 200).unwrap().value;
        // Central difference across the boundary matches the term-wise derivative.
        assert!(((above - below) / (2.0 * h) - d).norm() < 1e-7 * d.norm().max(1.0));
        assert!((0.5 * (above + below) - at).norm() < 1e-8 * at.norm().max(1.0));
        // Outside the extended region the series is flagged.
        let r = series_sum(&s, id, Point::polar(0.9, phi), false, 60).unwrap();
        assert!(!r.in_convergence_region);
    }

    fn magnetic_ext() -> CircularSetup {
        CircularSetup::new(
            2.0,
            Media::dielectric(4.2, 2.0).unwrap(),
            Excitation::polar(Region::External, 4.0, 0.0, one()),
        )
        .unwrap()
    }

    #[test]
    fn term_probes() {
        // With mu1 != mu2 the leading exterior coefficient is nonzero.
        let s = magnetic_ext();
        let r60 = term_ratio_probe(&s, SeriesId::ExtR1, 60, 3.0).unwrap();
        let r80 = term_ratio_probe(&s, SeriesId::ExtR1, 80, 3.0).unwrap();
        assert!(((r60 - r80) / r80).norm() < 0.05, "{r60} {r80}");
        let t60 = series_term(&s, SeriesId::ExtR2, 60, 1.5).unwrap();
        let t61 = series_term(&s, SeriesId::ExtR2, 61, 1.5).unwrap();
        assert!(((t61.norm() / t60.norm()) / (1.5 / 4.0) - 1.0).abs() < 0.02);
        let q60 = term_ratio_probe(&s, SeriesId::ExtR2, 60, 1.5).unwrap();
        let q80 = term_ratio_probe(&s, SeriesId::ExtR2, 80, 1.5).unwrap();
        assert!(((q60 - q80) / q80).norm() < 0.05, "{q60} {q80}");
        // At the critical radius the decay is algebraic: successive ratio ~ n/(n+1).
        let a = series_term(&s, SeriesId::ExtR1, 60, 1.0).unwrap().norm();
        let b = series_term(&s, SeriesId::ExtR1, 61, 1.0).unwrap().norm();
        assert!(((b / a) - 60.0 / 61.0).abs() < 0.01, "{}", b / a);
        let si = CircularSetup::new(
            2.0,
            Media::dielectric(4.2, 2.0).unwrap(),
            Excitation::polar(Region::Internal, 1.0, 0.0, one()),
        )
        .unwrap();
        for id in [SeriesId::IntR1, SeriesId::IntR2] {
            let rho = if id == SeriesId::IntR1 { 2.5 } else { 1.5 };
            let p = term_ratio_probe(&si, id, 60, rho).unwrap();
            let q = term_ratio_probe(&si, id, 80, rho).unwrap();
            assert!(((p - q) / q).norm() < 0.05, "{id:?} {p} {q}");
        }
        assert!(term_ratio_probe(&s, SeriesId::IntR1, 5, 3.0).is_err());
    }

    #[test]
    fn equal_permeability_cancels_leading_exterior_term() {
        // For mu1 = mu2, Z1/k2 = Z2/k1 and the exterior term drops by n^-2.
        let s = ext();
        let r60 = term_ratio_probe(&s, SeriesId::ExtR1, 60, 3.0).unwrap().norm();
        let r80 = term_ratio_probe(&s, SeriesId::ExtR1, 80, 3.0).unwrap().norm();
        assert!(((r60 / r80) / (80.0f64 / 60.0).powi(2) - 1.0).abs() < 0.05);
        let si = int();
        let p = term_ratio_probe(&si, SeriesId::IntR2, 60, 1.5).unwrap().norm();
        let q = term_ratio_probe(&si, SeriesId::IntR2, 80, 1.5).unwrap().norm();
        assert!(((p / q) / (80.0f64 / 60.0).powi(2) - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn prop_linear_in_amplitude(re in -2.0f64..2.0, im in -2.0f64..2.0, phi in -3.0f64..3.0) {
            let s = ext();
            let a = Complex64::new(re, im);
            let obs = Point::polar(6.0, phi);
            let base = exact_field(&s, FieldRegion::R1, obs).unwrap().value;
            let scaled = exact_field(&s.with_amplitude(a), FieldRegion::R1, obs).unwrap().value;
            prop_assert!((scaled - a * base).norm() <= 1e-13 * (a.norm() * base.norm()).max(1e-300));
        }
    }
}
