//! Run configuration: JSON parsing with field-path errors, semantic
//! validation, and conversion into solver problems.

use cylwave_core::diagnostics::Thresholds;
use cylwave_core::discrete::{Method, Problem};
use cylwave_core::exact::{CircularSetup, Media, Medium};
use cylwave_core::geometry::{AuxiliarySurface, BoundaryCurve, Excitation, Placement, Point, Region};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid configuration, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub media: MediaConfig,
    pub excitation: ExcitationConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Boundary shape and the auxiliary pairs; each pair is solved separately.
/// A circle takes `radius`, an ellipse the semi-axes `a` and `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub aux: Vec<AuxConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Ellipse,
}

/// Validated boundary shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
}

impl GeometryConfig {
    pub fn shape(&self) -> Result<Shape, ConfigError> {
        let need = |v: Option<f64>, name: &str| {
            let path = format!("geometry.{name}");
            let v = v.ok_or_else(|| err(&path, "missing"))?;
            positive(&path, v).map(|_| v)
        };
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(err(format!("geometry.{name}"), format!("not a parameter of a {:?} boundary", self.kind).to_lowercase())),
            None => Ok(()),
        };
        match self.kind {
            ShapeKind::Circle => {
                forbid(self.a, "a")?;
                forbid(self.b, "b")?;
                Ok(Shape::Circle {
                    radius: need(self.radius, "radius")?,
                })
            }
            ShapeKind::Ellipse => {
                forbid(self.radius, "radius")?;
                Ok(Shape::Ellipse {
                    a: need(self.a, "a")?,
                    b: need(self.b, "b")?,
                })
            }
        }
    }

    fn validated_shape(&self) -> Shape {
        self.shape().expect("validated at load")
    }
}

/// `inner < 1 < outer` scale factors, or radii for circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    pub placement: PlacementKind,
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    Radius,
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub eps_r: f64,
    #[serde(default = "one")]
    pub mu_r: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaConfig {
    pub outer: MediumConfig,
    pub inner: MediumConfig,
}

impl Default for MediaConfig {
    fn default() -> Self {
        Self {
            outer: MediumConfig { eps_r: 1.0, mu_r: 1.0 },
            inner: MediumConfig { eps_r: 4.2, mu_r: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub region: RegionConfig,
    pub rho: f64,
    #[serde(default)]
    pub phi: f64,
    /// `[re, im]`.
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionConfig {
    External,
    Internal,
}

impl From<RegionConfig> for Region {
    fn from(r: RegionConfig) -> Self {
        match r {
            RegionConfig::External => Region::External,
            RegionConfig::Internal => Region::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub methods: Vec<Method>,
    pub n: NList,
    #[serde(default)]
    pub path: PathConfig,
}

/// A single `N` or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(usize),
    Many(Vec<usize>),
}

impl NList {
    pub fn values(&self) -> Vec<usize> {
        match self {
            NList::One(n) => vec![*n],
            NList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathConfig {
    Dense,
    /// FFT spectra of the circulant blocks.
    Fast,
    /// q-sum spectra (circular NFM).
    ModeSum,
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub rings: Vec<RingConfig>,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    /// Highest order of the continuous density series written next to
    /// circular currents.
    #[serde(default = "default_density_terms")]
    pub density_terms: usize,
}

fn default_test_points() -> usize {
    64
}

fn default_density_terms() -> usize {
    200
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            rings: Vec::new(),
            test_points: default_test_points(),
            density_terms: default_density_terms(),
        }
    }
}

/// Observation ring: a circle of radius `rho` or the boundary scaled by
/// `scale`, sampled at `2 pi (k + offset) / count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    pub count: usize,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    #[serde(default)]
    pub reference: Option<ReferenceKind>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    /// Concordance grid; the default straddles both thresholds.
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Oscillation,
    Convergence,
    Concordance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Exact,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub aux1: Vec<f64>,
    pub aux2: Vec<f64>,
}

/// Parsed and validated configuration with its reproducibility hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the canonical (sorted-key, compact) JSON form.
    pub hash: String,
}

impl LoadedConfig {
    /// Keeps only the configured methods named in `only` (all when empty).
    /// The hash still identifies the file as written.
    pub fn restrict_methods(&mut self, only: &[String]) -> Result<(), ConfigError> {
        if only.is_empty() {
            return Ok(());
        }
        let mut keep = Vec::new();
        for name in only {
            let m: Method = serde_json::from_value(serde_json::Value::String(name.clone()))
                .map_err(|_| err("--only", format!("unknown method '{name}' (known: nfm, mas)")))?;
            if !self.config.solver.methods.contains(&m) {
                return Err(err("--only", format!("method '{name}' is not in solver.methods")));
            }
            keep.push(m);
        }
        self.config.solver.methods.retain(|m| keep.contains(m));
        Ok(())
    }
}

pub fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| err("$", format!("invalid JSON: {e}")))?;
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        err(if path == "." { "$".to_string() } else { path }, e.inner().to_string())
    })?;
    config.validate()?;
    let canonical = serde_json::to_vec(&value).map_err(|e| err("$", e.to_string()))?;
    let hash = Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, hash })
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(err(path, format!("must be a finite positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.shape()?;
        if self.geometry.aux.is_empty() {
            return Err(err("geometry.aux", "needs at least one auxiliary pair"));
        }
        for (i, aux) in self.geometry.aux.iter().enumerate() {
            positive(&format!("geometry.aux[{i}].inner"), aux.inner)?;
            positive(&format!("geometry.aux[{i}].outer"), aux.outer)?;
            if aux.placement == PlacementKind::Radius && !self.is_circle() {
                return Err(err(format!("geometry.aux[{i}].placement"), "radius placement needs a circle; use scale"));
            }
        }
        positive("media.outer.eps_r", self.media.outer.eps_r)?;
        positive("media.outer.mu_r", self.media.outer.mu_r)?;
        positive("media.inner.eps_r", self.media.inner.eps_r)?;
        positive("media.inner.mu_r", self.media.inner.mu_r)?;
        positive("excitation.rho", self.excitation.rho)?;
        if !self.excitation.phi.is_finite() || !self.excitation.amplitude.iter().all(|v| v.is_finite()) {
            return Err(err("excitation", "phi and amplitude must be finite"));
        }
        if self.solver.methods.is_empty() {
            return Err(err("solver.methods", "needs at least one method"));
        }
        let ns = self.solver.n.values();
        if ns.is_empty() {
            return Err(err("solver.n", "N list is empty"));
        }
        if let Some(i) = ns.iter().position(|&n| n < 4) {
            return Err(err(format!("solver.n[{i}]"), format!("N must be >= 4, got {}", ns[i])));
        }
        if matches!(self.solver.path, PathConfig::Fast | PathConfig::ModeSum) && !self.is_circle() {
            return Err(err("solver.path", "fast and mode_sum paths need a circular boundary"));
        }
        if self.solver.path == PathConfig::ModeSum && self.solver.methods.contains(&Method::Mas) {
            return Err(err("solver.path", "mode_sum solves NFM only"));
        }
        for (i, r) in self.output.rings.iter().enumerate() {
            let path = format!("output.rings[{i}]");
            match (r.rho, r.scale) {
                (Some(v), None) => {
                    if !self.is_circle() {
                        return Err(err(format!("{path}.rho"), "rho rings need a circle; use scale"));
                    }
                    positive(&format!("{path}.rho"), v)?
                }
                (None, Some(v)) => positive(&format!("{path}.scale"), v)?,
                _ => return Err(err(path, "give exactly one of rho and scale")),
            }
            if r.count == 0 {
                return Err(err(format!("{path}.count"), "must be >= 1"));
            }
            if !r.offset.is_finite() {
                return Err(err(format!("{path}.offset"), "must be finite"));
            }
        }
        if self.output.test_points == 0 {
            return Err(err("output.test_points", "must be >= 1"));
        }
        if let Some(s) = &self.sweep {
            if let Some(t) = s.thresholds {
                positive("sweep.thresholds.omega", t.omega)?;
                positive("sweep.thresholds.growth", t.growth)?;
            }
            match s.kind {
                SweepKind::Concordance => {
                    if !self.is_circle() {
                        return Err(err("sweep.kind", "concordance needs a circular boundary"));
                    }
                    if let Some(g) = &s.grid {
                        for (name, v) in [("aux1", &g.aux1), ("aux2", &g.aux2)] {
                            if v.is_empty() {
                                return Err(err(format!("sweep.grid.{name}"), "must not be empty"));
                            }
                            for (i, &x) in v.iter().enumerate() {
                                positive(&format!("sweep.grid.{name}[{i}]"), x)?;
                            }
                        }
                    }
                }
                SweepKind::Convergence => {
                    if s.reference == Some(ReferenceKind::Exact) && !self.is_circle() {
                        return Err(err("sweep.reference", "an exact reference needs a circular boundary"));
                    }
                    if s.reference == Some(ReferenceKind::Exact) && self.output.rings.is_empty() {
                        return Err(err("output.rings", "an exact reference needs observation rings"));
                    }
                }
                SweepKind::Oscillation => {}
            }
        }
        Ok(())
    }

    pub fn is_circle(&self) -> bool {
        self.geometry.kind == ShapeKind::Circle
    }

    pub fn curve(&self) -> cylwave_core::Result<BoundaryCurve> {
        match self.geometry.validated_shape() {
            Shape::Circle { radius } => BoundaryCurve::circle(radius),
            Shape::Ellipse { a, b } => BoundaryCurve::ellipse(a, b),
        }
    }

    pub fn media(&self) -> cylwave_core::Result<Media> {
        let m = |c: MediumConfig| Medium::new(c.eps_r, c.mu_r);
        Media::new(m(self.media.outer)?, m(self.media.inner)?)
    }

    pub fn excitation(&self) -> Excitation {
        let e = &self.excitation;
        Excitation::polar(e.region.into(), e.rho, e.phi, Complex64::new(e.amplitude[0], e.amplitude[1]))
    }

    pub fn problem(&self, aux: &AuxConfig, n: usize) -> cylwave_core::Result<Problem> {
        let curve = self.curve()?;
        let place = |v| match aux.placement {
            PlacementKind::Radius => Placement::Radius(v),
            PlacementKind::Scale => Placement::Scale(v),
        };
        let a1 = AuxiliarySurface::inner(&curve, place(aux.inner))?;
        let a2 = AuxiliarySurface::outer(&curve, place(aux.outer))?;
        Problem::new(curve, a1, a2, self.media()?, self.excitation(), n)
    }

    pub fn circular_setup(&self) -> Option<cylwave_core::Result<CircularSetup>> {
        match self.geometry.validated_shape() {
            Shape::Circle { radius } => Some(self.media().and_then(|m| CircularSetup::new(radius, m, self.excitation()))),
            Shape::Ellipse { .. } => None,
        }
    }

    /// Observation points of every ring, in order.
    pub fn ring_points(&self) -> cylwave_core::Result<Vec<Vec<Point>>> {
        let curve = self.curve()?;
        self.output
            .rings
            .iter()
            .map(|r| {
                let angle = |k: usize| 2.0 * std::f64::consts::PI * (k as f64 + r.offset) / r.count as f64;
                match (r.rho, r.scale) {
                    (Some(rho), _) => Ok((0..r.count).map(|k| Point::polar(rho, angle(k))).collect()),
                    (_, Some(s)) => {
                        let c = curve.scaled(s)?;
                        Ok((0..r.count).map(|k| c.point(angle(k))).collect())
                    }
                    _ => unreachable!("validated"),
                }
            })
            .collect()
    }
}
