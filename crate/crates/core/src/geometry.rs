//! Star-shaped boundary curves parameterized by polar angle, auxiliary
//! surfaces as similarity scalings, line-source excitations, collocation
//! points and source-to-target distances.
//!
//! All lengths are dimensionless (exterior wavenumber times length).

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn polar(rho: f64, phi: f64) -> Self {
        Self::new(rho * phi.cos(), rho * phi.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

/// One Fourier harmonic of a star-shaped radius function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Closed boundary `r(phi)` around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCurve {
    Circle { radius: f64 },
    /// Semi-axes `a` along x and `b` along y.
    Ellipse { a: f64, b: f64 },
    /// `r(phi) = r0 + sum (cos_m cos(m phi) + sin_m sin(m phi))`.
    Star { r0: f64, harmonics: Vec<Harmonic> },
}

/// A sample of a curve at parameter `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub phi: f64,
    pub point: Point,
    /// Outward unit normal.
    pub normal: Point,
}

impl CurvePoint {
    /// Counter-clockwise unit tangent `z x n`.
    pub fn tangent(&self) -> Point {
        Point::new(-self.normal.y, self.normal.x)
    }
}

impl BoundaryCurve {
    pub fn circle(radius: f64) -> Result<Self> {
        let c = Self::Circle { radius };
        c.validate()?;
        Ok(c)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        let c = Self::Ellipse { a, b };
        c.validate()?;
        Ok(c)
    }

    pub fn star(r0: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        let c = Self::Star { r0, harmonics };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Geometry(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match self {
            Self::Circle { radius } => positive("radius", *radius),
            Self::Ellipse { a, b } => {
                positive("semi-axis a", *a)?;
                positive("semi-axis b", *b)
            }
            Self::Star { r0, harmonics } => {
                positive("r0", *r0)?;
                if harmonics.iter().any(|h| !h.cos.is_finite() || !h.sin.is_finite()) {
                    return Err(Error::Geometry("non-finite star harmonic".into()));
                }
                let worst = (0..2048)
                    .map(|k| self.radius(2.0 * PI * k as f64 / 2048.0))
                    .fold(f64::INFINITY, f64::min);
                if worst > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Geometry(format!(
                        "star curve radius reaches {worst:.3e}; r(phi) must stay positive"
                    )))
                }
            }
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Self::Circle { .. })
    }

    pub fn circle_radius(&self) -> Option<f64> {
        match self {
            Self::Circle { radius } => Some(*radius),
            _ => None,
        }
    }

    pub fn radius(&self, phi: f64) -> f64 {
        match self {
            Self::Circle { radius } => *radius,
            Self::Ellipse { a, b } => {
                let (s, c) = phi.sin_cos();
                a * b / (b * b * c * c + a * a * s * s).sqrt()
            }
            Self::Star { r0, harmonics } => {
                r0 + harmonics
                    .iter()
                    .map(|h| {
                        let m = h.order as f64 * phi;
                        h.cos * m.cos() + h.sin * m.sin()
                    })
                    .sum::<f64>()
            }
        }
    }

    /// `dr/dphi`.
    pub fn radius_derivative(&self, phi: f64) -> f64 {
        match self {
            Self::Circle { .. } => 0.0,
            Self::Ellipse { a, b } => {
                let (s, c) = phi.sin_cos();
                let d = b * b * c * c + a * a * s * s;
                -a * b * (a * a - b * b) * s * c / d.powf(1.5)
            }
            Self::Star { harmonics, .. } => harmonics
                .iter()
                .map(|h| {
                    let m = h.order as f64;
                    m * (-h.cos * (m * phi).sin() + h.sin * (m * phi).cos())
                })
                .sum(),
        }
    }

    pub fn point(&self, phi: f64) -> Point {
        Point::polar(self.radius(phi), phi)
    }

    /// `d point / d phi`.
    pub fn velocity(&self, phi: f64) -> Point {
        let r = self.radius(phi);
        let dr = self.radius_derivative(phi);
        let (s, c) = phi.sin_cos();
        Point::new(dr * c - r * s, dr * s + r * c)
    }

    /// Outward unit normal at parameter `phi`.
    pub fn normal(&self, phi: f64) -> Point {
        if self.is_circle() {
            return Point::new(phi.cos(), phi.sin());
        }
        let t = self.velocity(phi);
        let len = t.norm();
        Point::new(t.y / len, -t.x / len)
    }

    pub fn sample(&self, phi: f64) -> CurvePoint {
        CurvePoint {
            phi,
            point: self.point(phi),
            normal: self.normal(phi),
        }
    }

    /// Similarity scaling about the origin.
    pub fn scaled(&self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Geometry(format!("scale factor must be > 0, got {sigma}")));
        }
        Ok(match self {
            Self::Circle { radius } => Self::Circle { radius: radius * sigma },
            Self::Ellipse { a, b } => Self::Ellipse {
                a: a * sigma,
                b: b * sigma,
            },
            Self::Star { r0, harmonics } => Self::Star {
                r0: r0 * sigma,
                harmonics: harmonics
                    .iter()
                    .map(|h| Harmonic {
                        order: h.order,
                        cos: h.cos * sigma,
                        sin: h.sin * sigma,
                    })
                    .collect(),
            },
        })
    }

    /// Strictly inside the curve.
    pub fn contains(&self, p: Point) -> bool {
        p.norm() < self.radius(p.angle())
    }

    /// Signed distance-like radial offset: `|p| - r(angle(p))`.
    pub fn radial_offset(&self, p: Point) -> f64 {
        p.norm() - self.radius(p.angle())
    }

    pub fn perimeter(&self) -> f64 {
        if let Self::Circle { radius } = self {
            return 2.0 * PI * radius;
        }
        // Trapezoid rule on a periodic integrand converges spectrally.
        let m = 4096;
        (0..m)
            .map(|k| self.velocity(2.0 * PI * k as f64 / m as f64).norm())
            .sum::<f64>()
            * 2.0
            * PI
            / m as f64
    }

    /// Largest radius over the curve.
    pub fn max_radius(&self) -> f64 {
        match self {
            Self::Circle { radius } => *radius,
            Self::Ellipse { a, b } => a.max(*b),
            Self::Star { .. } => (0..2048)
                .map(|k| self.radius(2.0 * PI * k as f64 / 2048.0))
                .fold(0.0, f64::max),
        }
    }
}

/// Which side of the boundary an auxiliary surface lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Inside the boundary (region 2).
    Inner,
    /// Outside the boundary (region 1).
    Outer,
}

/// How an auxiliary surface is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Scale(f64),
    /// Circle radius; only valid for circular boundaries.
    Radius(f64),
}

/// A displaced copy of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxiliarySurface {
    pub curve: BoundaryCurve,
    pub side: Side,
    pub scale: f64,
}

impl AuxiliarySurface {
    pub fn new(base: &BoundaryCurve, side: Side, placement: Placement) -> Result<Self> {
        let scale = match placement {
            Placement::Scale(s) => s,
            Placement::Radius(r) => match base {
                BoundaryCurve::Circle { radius } => r / radius,
                _ => {
                    return Err(Error::Geometry(
                        "auxiliary radius is only defined for circular boundaries; use a scale".into(),
                    ))
                }
            },
        };
        let ok = match side {
            Side::Inner => scale > 0.0 && scale < 1.0,
            Side::Outer => scale > 1.0 && scale.is_finite(),
        };
        if !ok {
            return Err(Error::Geometry(format!(
                "{side:?} auxiliary surface needs scale in {}, got {scale}",
                if side == Side::Inner { "(0, 1)" } else { "(1, inf)" }
            )));
        }
        Ok(Self {
            curve: base.scaled(scale)?,
            side,
            scale,
        })
    }

    pub fn inner(base: &BoundaryCurve, placement: Placement) -> Result<Self> {
        Self::new(base, Side::Inner, placement)
    }

    pub fn outer(base: &BoundaryCurve, placement: Placement) -> Result<Self> {
        Self::new(base, Side::Outer, placement)
    }

    /// Checks the side classification pointwise at `n` uniform angles.
    pub fn verify_against(&self, base: &BoundaryCurve, n: usize) -> Result<()> {
        for l in 0..n {
            let phi = 2.0 * PI * l as f64 / n as f64;
            let off = base.radial_offset(self.curve.point(phi));
            let good = match self.side {
                Side::Inner => off < 0.0,
                Side::Outer => off > 0.0,
            };
            if !good {
                return Err(Error::Geometry(format!(
                    "{:?} auxiliary surface crosses the boundary at phi={phi}",
                    self.side
                )));
            }
        }
        Ok(())
    }
}

/// Region holding the line source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Source in the exterior medium (region 1).
    External,
    /// Source inside the cylinder (region 2).
    Internal,
}

impl Region {
    /// Index of the medium containing the source: 1 or 2.
    pub fn medium_index(self) -> u8 {
        match self {
            Region::External => 1,
            Region::Internal => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    /// Electric line source, `E_z` polarization.
    #[default]
    Tm,
    /// Magnetic line source obtained by duality; no solver consumes it.
    Te,
}

/// Line source at `position` with complex amplitude (electric current `I`
/// for TM, magnetic current `K` for TE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub region: Region,
    pub position: Point,
    pub amplitude: Complex64,
    #[serde(default)]
    pub polarization: Polarization,
}

impl Excitation {
    pub fn polar(region: Region, rho: f64, phi: f64, amplitude: Complex64) -> Self {
        Self {
            region,
            position: Point::polar(rho, phi),
            amplitude,
            polarization: Polarization::Tm,
        }
    }

    pub fn rho(&self) -> f64 {
        self.position.norm()
    }

    pub fn phi(&self) -> f64 {
        self.position.angle()
    }

    /// The source must lie strictly on its declared side of `curve`.
    pub fn validate(&self, curve: &BoundaryCurve) -> Result<()> {
        if !(self.position.x.is_finite() && self.position.y.is_finite()) {
            return Err(Error::Geometry("source position must be finite".into()));
        }
        let off = curve.radial_offset(self.position);
        match self.region {
            Region::External if off <= 0.0 => Err(Error::Geometry(format!(
                "external source at radius {} is not outside the boundary",
                self.rho()
            ))),
            Region::Internal if off >= 0.0 => Err(Error::Geometry(format!(
                "internal source at radius {} is not inside the boundary",
                self.rho()
            ))),
            _ => Ok(()),
        }
    }

    /// Swap TM and TE descriptions; the amplitude carries over unchanged.
    pub fn duality_map(&self) -> Self {
        Self {
            polarization: match self.polarization {
                Polarization::Tm => Polarization::Te,
                Polarization::Te => Polarization::Tm,
            },
            ..*self
        }
    }

    /// Line-source field prefactor in a medium with wavenumber `k` and
    /// impedance `z`: `-k z / 4` (TM) or `-k / (4 z)` (TE).
    pub fn kernel_prefactor(&self, k: f64, z: f64) -> f64 {
        match self.polarization {
            Polarization::Tm => -k * z / 4.0,
            Polarization::Te => -k / (4.0 * z),
        }
    }
}

/// `n` samples at `phi_l = 2 pi l / n`.
pub fn collocation_points(curve: &BoundaryCurve, n: usize) -> Result<Vec<CurvePoint>> {
    if n < 4 {
        return Err(Error::Invalid(format!("need at least 4 collocation points, got {n}")));
    }
    curve.validate()?;
    Ok((0..n)
        .map(|l| curve.sample(2.0 * PI * l as f64 / n as f64))
        .collect())
}

/// Uniformly sampled points on `curve` scaled by `sigma`.
pub fn observation_ring(curve: &BoundaryCurve, sigma: f64, count: usize) -> Result<Vec<Point>> {
    let c = curve.scaled(sigma)?;
    Ok((0..count)
        .map(|k| c.point(2.0 * PI * k as f64 / count as f64))
        .collect())
}

/// Angle of index difference `d` on an `n`-point uniform grid.
pub fn grid_angle(d: usize, n: usize) -> f64 {
    2.0 * PI * (d % n) as f64 / n as f64
}

/// `b[p][l] = |target(phi_p) - source(phi_l)|` on a shared `n`-point grid.
///
/// For two circles the entries are built from the index difference
/// `(p - l) mod n`, so the matrix is circulant bit for bit.
pub fn pairwise_distances(target: &BoundaryCurve, source: &BoundaryCurve, n: usize) -> Result<Matrix<f64>> {
    if n < 4 {
        return Err(Error::Invalid(format!("need at least 4 points, got {n}")));
    }
    let m = match (target.circle_radius(), source.circle_radius()) {
        (Some(rt), Some(rs)) => {
            let col: Vec<f64> = (0..n)
                .map(|d| (rt * rt + rs * rs - 2.0 * rt * rs * grid_angle(d, n).cos()).max(0.0).sqrt())
                .collect();
            Matrix::from_fn(n, n, |p, l| col[(p + n - l) % n])
        }
        _ => {
            let t: Vec<Point> = (0..n).map(|p| target.point(grid_angle(p, n))).collect();
            let s: Vec<Point> = (0..n).map(|l| source.point(grid_angle(l, n))).collect();
            Matrix::from_fn(n, n, |p, l| t[p].distance(s[l]))
        }
    };
    let scale = target.max_radius().max(source.max_radius());
    for p in 0..n {
        for l in 0..n {
            if m[(p, l)] <= 1e-12 * scale {
                return Err(Error::Geometry(format!(
                    "target point {p} coincides with source point {l}"
                )));
            }
        }
    }
    Ok(m)
}

/// Largest `|m[p][l] - m[(p - l) mod n][0]|`.
pub fn circulant_deviation_real(m: &Matrix<f64>) -> f64 {
    let n = m.rows();
    let mut worst = 0.0f64;
    for p in 0..n {
        for l in 0..n {
            worst = worst.max((m[(p, l)] - m[((p + n - l) % n, 0)]).abs());
        }
    }
    worst
}

/// Shoelace area of a closed polygon (positive when counter-clockwise).
pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}
