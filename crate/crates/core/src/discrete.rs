//! Discretized null-field (NFM) and auxiliary-source (MAS) systems: assembly,
//! dense and circulant/DFT solution, the q-sum coefficient form, and the
//! auxiliary-free large-N limits.

use crate::error::{Error, Result};
use crate::exact::{CircularSetup, Media, ModeTables};
use crate::geometry::{AuxiliarySurface, BoundaryCurve, Excitation, Placement, Point, Polarization, Region, Side};
use crate::linalg::{norm_inf_vec, relative_residual, CMatrix, Lu, Matrix};
use crate::specfun::{CylinderFunctions, ScaledC};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Electric and magnetic filaments on the boundary, null field enforced
    /// on the auxiliary surfaces.
    Nfm,
    /// Electric filaments on the auxiliary surfaces, continuity enforced on
    /// the boundary.
    Mas,
}

/// How a block system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Dense,
    /// FFT of the assembled circulant blocks, then per-mode 2x2 solves.
    Circulant,
    /// Per-mode 2x2 solves with coefficients from the q-sums (circular NFM).
    ModeSum,
}

/// Geometry, media, source and discretization order of one discrete problem.
///
/// `aux1` lies inside the boundary and `aux2` outside. For NFM they carry the
/// collocation points; for MAS they carry the sources.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    pub curve: BoundaryCurve,
    pub aux1: AuxiliarySurface,
    pub aux2: AuxiliarySurface,
    pub media: Media,
    pub excitation: Excitation,
    pub n: usize,
}

impl Problem {
    pub fn new(
        curve: BoundaryCurve,
        aux1: AuxiliarySurface,
        aux2: AuxiliarySurface,
        media: Media,
        excitation: Excitation,
        n: usize,
    ) -> Result<Self> {
        curve.validate()?;
        if aux1.side != Side::Inner || aux2.side != Side::Outer {
            return Err(Error::Geometry("aux1 must lie inside the boundary and aux2 outside".into()));
        }
        if n < 4 {
            return Err(Error::Invalid(format!("need N >= 4, got {n}")));
        }
        if excitation.polarization != Polarization::Tm {
            return Err(Error::Unsupported("TE"));
        }
        aux1.verify_against(&curve, n.max(64))?;
        aux2.verify_against(&curve, n.max(64))?;
        excitation.validate(&curve)?;
        Ok(Self {
            curve,
            aux1,
            aux2,
            media,
            excitation,
            n,
        })
    }

    /// Circular problem with auxiliary radii `rho_aux1 < rho_cyl < rho_aux2`.
    pub fn circular(setup: &CircularSetup, rho_aux1: f64, rho_aux2: f64, n: usize) -> Result<Self> {
        let curve = setup.curve();
        let aux1 = AuxiliarySurface::inner(&curve, Placement::Radius(rho_aux1))?;
        let aux2 = AuxiliarySurface::outer(&curve, Placement::Radius(rho_aux2))?;
        Self::new(curve, aux1, aux2, setup.media, setup.excitation, n)
    }

    /// Problem with auxiliary curves scaled by `sigma1 < 1 < sigma2`.
    pub fn scaled(curve: BoundaryCurve, sigma1: f64, sigma2: f64, media: Media, excitation: Excitation, n: usize) -> Result<Self> {
        let aux1 = AuxiliarySurface::inner(&curve, Placement::Scale(sigma1))?;
        let aux2 = AuxiliarySurface::outer(&curve, Placement::Scale(sigma2))?;
        Self::new(curve, aux1, aux2, media, excitation, n)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.curve.clone(), self.aux1.clone(), self.aux2.clone(), self.media, self.excitation, n)
    }

    pub fn with_excitation(&self, excitation: Excitation) -> Result<Self> {
        Self::new(self.curve.clone(), self.aux1.clone(), self.aux2.clone(), self.media, excitation, self.n)
    }

    pub fn is_circular(&self) -> bool {
        self.curve.is_circle()
    }

    /// The matching exact-solution setup for circular boundaries.
    pub fn circular_setup(&self) -> Option<CircularSetup> {
        let r = self.curve.circle_radius()?;
        CircularSetup::new(r, self.media, self.excitation).ok()
    }

    /// Auxiliary radii for circular boundaries.
    pub fn aux_radii(&self) -> Option<(f64, f64)> {
        Some((self.aux1.curve.circle_radius()?, self.aux2.curve.circle_radius()?))
    }

    /// `2 pi rho_cyl` for circles, the perimeter otherwise.
    pub fn normalization_length(&self) -> f64 {
        match self.curve.circle_radius() {
            Some(r) => 2.0 * PI * r,
            None => self.curve.perimeter(),
        }
    }
}

/// `[Z11 Z12; Z21 Z22] x = rhs` with `N x N` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub method: Method,
    pub problem: Problem,
    pub z11: CMatrix,
    pub z12: CMatrix,
    pub z21: CMatrix,
    pub z22: CMatrix,
    pub rhs: Vec<Complex64>,
}

impl BlockSystem {
    pub fn n(&self) -> usize {
        self.z11.rows()
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_blocks(&self.z11, &self.z12, &self.z21, &self.z22)
    }

    pub fn blocks(&self) -> [(&'static str, &CMatrix); 4] {
        [("Z11", &self.z11), ("Z12", &self.z12), ("Z21", &self.z21), ("Z22", &self.z22)]
    }

    /// Largest circulant deviation over the blocks, relative to the largest entry.
    pub fn circulant_deviation(&self) -> f64 {
        self.blocks()
            .iter()
            .map(|(_, b)| b.circulant_deviation() / b.norm_inf().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Errors on the first block that is not circulant.
    pub fn assert_circulant(&self) -> Result<()> {
        for (name, b) in self.blocks() {
            let dev = b.circulant_deviation();
            if dev > 1e-14 * b.norm_inf() {
                return Err(Error::NotCirculant { block: name, deviation: dev });
            }
        }
        Ok(())
    }
}

/// Solved amplitudes.
///
/// For NFM `first` holds the electric amplitudes `I_l` and `second` the
/// magnetic amplitudes `K_l`, both on the boundary. For MAS `first` holds the
/// sources on `aux1` and `second` those on `aux2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSolution {
    pub method: Method,
    pub n: usize,
    pub path: SolverPath,
    pub first: Vec<Complex64>,
    pub second: Vec<Complex64>,
    /// `||A x - b|| / ||b||` in the infinity norm.
    pub residual: f64,
    /// Condition number: infinity-norm estimate on the dense path, exact
    /// 2-norm value from the per-mode blocks on the circulant paths.
    pub condition: Option<f64>,
}

impl DiscreteSolution {
    pub fn stacked(&self) -> Vec<Complex64> {
        self.first.iter().chain(&self.second).copied().collect()
    }
}

/// Distances and normal projections between two `n`-point curve samplings.
struct PairKernel {
    dist: Matrix<f64>,
    /// `n_owner . (r_owner - r_other) / dist`, with the normal taken on the
    /// source curve (`normals_on_source`) or on the target curve.
    proj: Matrix<f64>,
}

fn pair_kernel(target: &BoundaryCurve, source: &BoundaryCurve, normals_on_source: bool, n: usize) -> Result<PairKernel> {
    let scale = target.max_radius().max(source.max_radius());
    let coincide = |p: usize, l: usize| Error::Geometry(format!("target point {p} coincides with source point {l}"));
    let (dist, proj) = match (target.circle_radius(), source.circle_radius()) {
        (Some(rt), Some(rs)) => {
            let (ro, rx) = if normals_on_source { (rs, rt) } else { (rt, rs) };
            let mut col = Vec::with_capacity(n);
            for d in 0..n {
                let cs = (2.0 * PI * d as f64 / n as f64).cos();
                let b = (rt * rt + rs * rs - 2.0 * rt * rs * cs).max(0.0).sqrt();
                if b <= 1e-12 * scale {
                    return Err(coincide(d, 0));
                }
                col.push((b, (ro - rx * cs) / b));
            }
            (
                Matrix::from_fn(n, n, |p, l| col[(p + n - l) % n].0),
                Matrix::from_fn(n, n, |p, l| col[(p + n - l) % n].1),
            )
        }
        _ => {
            let t: Vec<_> = (0..n).map(|p| target.sample(2.0 * PI * p as f64 / n as f64)).collect();
            let s: Vec<_> = (0..n).map(|l| source.sample(2.0 * PI * l as f64 / n as f64)).collect();
            let dist = Matrix::from_fn(n, n, |p, l| t[p].point.distance(s[l].point));
            for p in 0..n {
                for l in 0..n {
                    if dist[(p, l)] <= 1e-12 * scale {
                        return Err(coincide(p, l));
                    }
                }
            }
            let proj = Matrix::from_fn(n, n, |p, l| {
                let (owner, other) = if normals_on_source { (&s[l], &t[p]) } else { (&t[p], &s[l]) };
                owner.normal.dot(owner.point - other.point) / dist[(p, l)]
            });
            (dist, proj)
        }
    };
    Ok(PairKernel { dist, proj })
}

/// `(H^(2)_0(x), H^(2)_1(x))`.
pub(crate) fn h01(x: f64) -> Result<(Complex64, Complex64)> {
    let t = CylinderFunctions::new(1, x)?;
    Ok((t.h(0)?, t.h(1)?))
}

/// Builds `(a, b)` blocks with `a[p][l] = fa(H0, H1, proj)` etc.; circulant
/// inputs are evaluated once per index difference.
fn kernel_blocks(
    pk: &PairKernel,
    k: f64,
    names: (&'static str, &'static str),
    fa: impl Fn(Complex64, Complex64, f64) -> Complex64 + Sync,
    fb: impl Fn(Complex64, Complex64, f64) -> Complex64 + Sync,
    circulant: bool,
) -> Result<(CMatrix, CMatrix)> {
    let n = pk.dist.rows();
    let wrap = |e: Error, p: usize, l: usize| Error::Assembly {
        block: names.0,
        row: p,
        col: l,
        source: Box::new(e),
    };
    if circulant {
        let col: Vec<(Complex64, Complex64)> = (0..n)
            .map(|d| {
                let (h0, h1) = h01(k * pk.dist[(d, 0)]).map_err(|e| wrap(e, d, 0))?;
                Ok((fa(h0, h1, pk.proj[(d, 0)]), fb(h0, h1, pk.proj[(d, 0)])))
            })
            .collect::<Result<_>>()?;
        return Ok((
            CMatrix::from_fn(n, n, |p, l| col[(p + n - l) % n].0),
            CMatrix::from_fn(n, n, |p, l| col[(p + n - l) % n].1),
        ));
    }
    let rows: Vec<Vec<(Complex64, Complex64)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            (0..n)
                .map(|l| {
                    let (h0, h1) = h01(k * pk.dist[(p, l)]).map_err(|e| wrap(e, p, l))?;
                    Ok((fa(h0, h1, pk.proj[(p, l)]), fb(h0, h1, pk.proj[(p, l)])))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok((
        CMatrix::from_fn(n, n, |p, l| rows[p][l].0),
        CMatrix::from_fn(n, n, |p, l| rows[p][l].1),
    ))
}

fn source_distance(target: Point, src: Point, scale: f64) -> Result<f64> {
    let d = target.distance(src);
    if d <= 1e-12 * scale {
        return Err(Error::Singular { distance: d });
    }
    Ok(d)
}

/// NFM system: rows `0..N` null the region-1 field on `aux1`, rows `N..2N`
/// null the region-2 field on `aux2`.
pub fn assemble_nfm(problem: &Problem) -> Result<BlockSystem> {
    let n = problem.n;
    let m = &problem.media;
    let (k1, k2, z1, z2) = (m.k1(), m.k2(), m.z1(), m.z2());
    let circ = problem.is_circular();
    let pk1 = pair_kernel(&problem.aux1.curve, &problem.curve, true, n)?;
    let pk2 = pair_kernel(&problem.aux2.curve, &problem.curve, true, n)?;
    let (z11, z12) = kernel_blocks(&pk1, k1, ("Z11", "Z12"), |h0, _, _| z1 * h0, |_, h1, g| I * h1 * g, circ)?;
    let (z21, z22) = kernel_blocks(&pk2, k2, ("Z21", "Z22"), |h0, _, _| z2 * h0, |_, h1, g| I * h1 * g, circ)?;
    let amp = problem.excitation.amplitude;
    let src = problem.excitation.position;
    let scale = problem.curve.max_radius();
    let mut rhs = vec![c(0.0); 2 * n];
    for p in 0..n {
        let phi = 2.0 * PI * p as f64 / n as f64;
        match problem.excitation.region {
            Region::External => {
                let d = source_distance(problem.aux1.curve.point(phi), src, scale)?;
                rhs[p] = -z1 * amp * h01(k1 * d)?.0;
            }
            Region::Internal => {
                let d = source_distance(problem.aux2.curve.point(phi), src, scale)?;
                rhs[n + p] = z2 * amp * h01(k2 * d)?.0;
            }
        }
    }
    Ok(BlockSystem {
        method: Method::Nfm,
        problem: problem.clone(),
        z11,
        z12,
        z21,
        z22,
        rhs,
    })
}

/// MAS right-hand side: rows `0..N` carry the jump of `E_z` across the
/// boundary, rows `N..2N` the jump of the tangential magnetic field scaled by
/// `-i`.
fn mas_rhs(problem: &Problem) -> Result<Vec<Complex64>> {
    let n = problem.n;
    let m = &problem.media;
    let amp = problem.excitation.amplitude;
    let src = problem.excitation.position;
    let scale = problem.curve.max_radius();
    let mut rhs = vec![c(0.0); 2 * n];
    for p in 0..n {
        let cp = problem.curve.sample(2.0 * PI * p as f64 / n as f64);
        let d = source_distance(cp.point, src, scale)?;
        let g = cp.normal.dot(cp.point - src) / d;
        match problem.excitation.region {
            Region::External => {
                let k1 = m.k1();
                let (h0, h1) = h01(k1 * d)?;
                rhs[p] = k1 * m.z1() / 4.0 * amp * h0;
                rhs[n + p] = I * k1 / 4.0 * amp * h1 * g;
            }
            Region::Internal => {
                let k2 = m.k2();
                let (h0, h1) = h01(k2 * d)?;
                rhs[p] = -k2 * m.z2() / 4.0 * amp * h0;
                rhs[n + p] = -I * k2 / 4.0 * amp * h1 * g;
            }
        }
    }
    Ok(rhs)
}

/// MAS system assembled directly from the auxiliary-source fields.
pub fn assemble_mas(problem: &Problem) -> Result<BlockSystem> {
    let n = problem.n;
    let m = &problem.media;
    let (k1, k2, z1, z2) = (m.k1(), m.k2(), m.z1(), m.z2());
    let circ = problem.is_circular();
    let pk1 = pair_kernel(&problem.curve, &problem.aux1.curve, false, n)?;
    let pk2 = pair_kernel(&problem.curve, &problem.aux2.curve, false, n)?;
    let (z11, z21) = kernel_blocks(
        &pk1,
        k1,
        ("Z11", "Z21"),
        |h0, _, _| -k1 * z1 / 4.0 * h0,
        |_, h1, g| -I * k1 / 4.0 * h1 * g,
        circ,
    )?;
    let (z12, z22) = kernel_blocks(
        &pk2,
        k2,
        ("Z12", "Z22"),
        |h0, _, _| k2 * z2 / 4.0 * h0,
        |_, h1, g| I * k2 / 4.0 * h1 * g,
        circ,
    )?;
    Ok(BlockSystem {
        method: Method::Mas,
        problem: problem.clone(),
        z11,
        z12,
        z21,
        z22,
        rhs: mas_rhs(problem)?,
    })
}

/// MAS system from an NFM one: scale the top block row by `-k1/4` and the
/// bottom one by `k2/4`, transpose the whole matrix, and rebuild the
/// right-hand side for continuity on the boundary.
pub fn mas_from_nfm(sys: &BlockSystem) -> Result<BlockSystem> {
    if sys.method != Method::Nfm {
        return Err(Error::Invalid("mas_from_nfm expects an NFM system".into()));
    }
    let m = &sys.problem.media;
    let s = c(-m.k1() / 4.0);
    let t = c(m.k2() / 4.0);
    Ok(BlockSystem {
        method: Method::Mas,
        problem: sys.problem.clone(),
        z11: sys.z11.transpose().scale(s),
        z12: sys.z21.transpose().scale(t),
        z21: sys.z12.transpose().scale(s),
        z22: sys.z22.transpose().scale(t),
        rhs: mas_rhs(&sys.problem)?,
    })
}

/// Assemble by method.
pub fn assemble(problem: &Problem, method: Method) -> Result<BlockSystem> {
    match method {
        Method::Nfm => assemble_nfm(problem),
        Method::Mas => assemble_mas(problem),
    }
}

/// LU with partial pivoting on the full `2N x 2N` matrix.
pub fn solve_dense(sys: &BlockSystem) -> Result<DiscreteSolution> {
    let a = sys.matrix();
    let lu = Lu::factor(&a)?;
    let x = lu.solve(&sys.rhs);
    let n = sys.n();
    Ok(DiscreteSolution {
        method: sys.method,
        n,
        path: SolverPath::Dense,
        residual: relative_residual(&a, &x, &sys.rhs),
        condition: Some(lu.condition_estimate_inf()),
        first: x[..n].to_vec(),
        second: x[n..].to_vec(),
    })
}

pub(crate) fn fft(v: &[Complex64]) -> Vec<Complex64> {
    let mut buf = v.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

fn ifft(v: &[Complex64]) -> Vec<Complex64> {
    let mut buf = v.to_vec();
    let n = buf.len() as f64;
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.iter().map(|z| z / n).collect()
}

/// Per-mode spectra of the blocks' first columns and of the two rhs halves.
struct Spectra {
    a: [Vec<Complex64>; 4],
    b1: Vec<Complex64>,
    b2: Vec<Complex64>,
}

fn spectra(sys: &BlockSystem) -> Result<Spectra> {
    sys.assert_circulant()?;
    let n = sys.n();
    Ok(Spectra {
        a: [
            fft(&sys.z11.column(0)),
            fft(&sys.z12.column(0)),
            fft(&sys.z21.column(0)),
            fft(&sys.z22.column(0)),
        ],
        b1: fft(&sys.rhs[..n]),
        b2: fft(&sys.rhs[n..]),
    })
}

/// 2-norm condition number of a block-circulant matrix: the unitary DFT
/// block-diagonalizes it, so it is the ratio of the extreme singular values
/// over all 2x2 mode blocks.
fn spectral_condition(sp: &Spectra) -> f64 {
    let (mut hi, mut lo) = (0.0_f64, f64::INFINITY);
    for mode in 0..sp.b1.len() {
        let [a11, a12, a21, a22] = [sp.a[0][mode], sp.a[1][mode], sp.a[2][mode], sp.a[3][mode]];
        let t = a11.norm_sqr() + a12.norm_sqr() + a21.norm_sqr() + a22.norm_sqr();
        let d = (a11 * a22 - a12 * a21).norm();
        let s_max = ((t + (t * t - 4.0 * d * d).max(0.0).sqrt()) / 2.0).sqrt();
        hi = hi.max(s_max);
        lo = lo.min(if s_max > 0.0 { d / s_max } else { 0.0 });
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Mode-by-mode 2x2 solve of a system with circulant blocks.
pub fn solve_circulant_dft(sys: &BlockSystem) -> Result<DiscreteSolution> {
    let n = sys.n();
    let sp = spectra(sys)?;
    let mut x1 = vec![c(0.0); n];
    let mut x2 = vec![c(0.0); n];
    for mode in 0..n {
        let [a11, a12, a21, a22] = [sp.a[0][mode], sp.a[1][mode], sp.a[2][mode], sp.a[3][mode]];
        let det = a11 * a22 - a12 * a21;
        if det.norm() < 1e-300 {
            return Err(Error::DegenerateMode {
                mode: mode as i64,
                magnitude: det.norm(),
            });
        }
        x1[mode] = (sp.b1[mode] * a22 - a12 * sp.b2[mode]) / det;
        x2[mode] = (a11 * sp.b2[mode] - a21 * sp.b1[mode]) / det;
    }
    let first = ifft(&x1);
    let second = ifft(&x2);
    let x: Vec<Complex64> = first.iter().chain(&second).copied().collect();
    Ok(DiscreteSolution {
        method: sys.method,
        n,
        path: SolverPath::Circulant,
        residual: relative_residual(&sys.matrix(), &x, &sys.rhs),
        condition: Some(spectral_condition(&sp)),
        first,
        second,
    })
}

/// Circular NFM solved from [`q_sum_coefficients`]. The sums run in
/// extended-range arithmetic, so every mode keeps its relative accuracy even
/// when the assembled matrix is far beyond double-precision conditioning and
/// FFT spectra of its columns are rounding-dominated at high modes.
pub fn solve_mode_sums(sys: &BlockSystem) -> Result<DiscreteSolution> {
    if sys.method != Method::Nfm {
        return Err(Error::Unsupported("q-sum solution of the MAS system"));
    }
    sys.assert_circulant()?;
    let problem = &sys.problem;
    let n = problem.n;
    let amp = problem.excitation.amplitude;
    let modes: Vec<(Complex64, Complex64)> = (0..n)
        .into_par_iter()
        .map(|m| {
            let coeffs = q_sum_coefficients(problem, m)?;
            let (i_m, k_m) = mode_currents(&coeffs, &problem.media, problem.excitation.region)?;
            Ok((i_m * amp, k_m * amp))
        })
        .collect::<Result<_>>()?;
    let (s1, s2): (Vec<Complex64>, Vec<Complex64>) = modes.into_iter().unzip();
    let first = ifft(&s1);
    let second = ifft(&s2);
    let x: Vec<Complex64> = first.iter().chain(&second).copied().collect();
    Ok(DiscreteSolution {
        method: sys.method,
        n,
        path: SolverPath::ModeSum,
        residual: relative_residual(&sys.matrix(), &x, &sys.rhs),
        condition: Some(spectral_condition(&spectra(sys)?)),
        first,
        second,
    })
}

/// Solves by `path`.
pub fn solve_with(sys: &BlockSystem, path: SolverPath) -> Result<DiscreteSolution> {
    match path {
        SolverPath::Dense => solve_dense(sys),
        SolverPath::Circulant => solve_circulant_dft(sys),
        SolverPath::ModeSum => solve_mode_sums(sys),
    }
}

/// For circulant blocks: q-sums for NFM, FFT spectra for MAS. Dense otherwise.
pub fn solve_auto(sys: &BlockSystem) -> Result<DiscreteSolution> {
    if sys.problem.is_circular() && sys.assert_circulant().is_ok() {
        match sys.method {
            Method::Nfm => solve_mode_sums(sys),
            Method::Mas => solve_circulant_dft(sys),
        }
    } else {
        solve_dense(sys)
    }
}

/// Per-mode coefficients of the circular NFM system:
/// `B1 I + (i/Z1) B2 K = (I/N) D` and `B3 I + (i/Z2) B4 K = 0` for an exterior
/// source. For an interior source `D` moves to the second equation and is
/// `(1/N) sum_p H_0(k2 d2_p) e^{-i 2 pi m p / N}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeCoefficients {
    pub m: usize,
    pub d: Complex64,
    pub b1: Complex64,
    pub b2: Complex64,
    pub b3: Complex64,
    pub b4: Complex64,
}

/// DFT-computed [`ModeCoefficients`] for all `m = 0..N-1`.
pub fn dft_coefficients(sys: &BlockSystem) -> Result<Vec<ModeCoefficients>> {
    if sys.method != Method::Nfm {
        return Err(Error::Invalid("mode coefficients are defined for the NFM system".into()));
    }
    let n = sys.n();
    let nn = n as f64;
    let m = &sys.problem.media;
    let amp = sys.problem.excitation.amplitude;
    let sp = spectra(sys)?;
    Ok((0..n)
        .map(|k| {
            let d = match sys.problem.excitation.region {
                Region::External => sp.b1[k] / (nn * m.z1() * amp),
                Region::Internal => sp.b2[k] / (nn * m.z2() * amp),
            };
            ModeCoefficients {
                m: k,
                d,
                b1: sp.a[0][k] / (nn * m.z1()),
                b2: sp.a[1][k] / (nn * I),
                b3: sp.a[2][k] / (nn * m.z2()),
                b4: sp.a[3][k] / (nn * I),
            }
        })
        .collect())
}

/// `(I^(m), K^(m))` from the DFT of the solved amplitudes,
/// `I^(m) = (1/N) sum_p I_p e^{-i 2 pi m p / N}`.
pub fn current_spectrum(sol: &DiscreteSolution) -> Vec<(Complex64, Complex64)> {
    let nn = sol.n as f64;
    let a = fft(&sol.first);
    let b = fft(&sol.second);
    a.iter().zip(&b).map(|(x, y)| (x / nn, y / nn)).collect()
}

/// [`ModeCoefficients`] from the bilateral sums over `q` of products of
/// cylinder functions of order `qN + m` (circular problems only).
pub fn q_sum_coefficients(problem: &Problem, m: usize) -> Result<ModeCoefficients> {
    let n = problem.n;
    if m >= n {
        return Err(Error::Invalid(format!("mode {m} out of range for N={n}")));
    }
    let setup = problem
        .circular_setup()
        .ok_or(Error::Unsupported("q-sum coefficients for non-circular"))?;
    let (ra1, ra2) = problem.aux_radii().ok_or(Error::Unsupported("q-sum coefficients for non-circular"))?;
    let med = &problem.media;
    let (k1, k2) = (med.k1(), med.k2());
    let (rc, rf) = (setup.rho_cyl, setup.rho_fil());
    let worst = [ra1 / rc, rc / ra2, match problem.excitation.region {
        Region::External => ra1 / rf,
        Region::Internal => rf / ra2,
    }]
    .into_iter()
    .fold(0.0, f64::max);
    let kmax = k1.max(k2) * ra2.max(rf);
    let order_cap = ((45.0 / -worst.ln()) + 2.0 * kmax + 40.0 + n as f64).min(20_000.0) as usize;
    let t_a1 = CylinderFunctions::new(order_cap, k1 * ra1)?;
    let t_1c = CylinderFunctions::new(order_cap, k1 * rc)?;
    let t_2c = CylinderFunctions::new(order_cap, k2 * rc)?;
    let t_a2 = CylinderFunctions::new(order_cap, k2 * ra2)?;
    let t_f = match problem.excitation.region {
        Region::External => CylinderFunctions::new(order_cap, k1 * rf)?,
        Region::Internal => CylinderFunctions::new(order_cap, k2 * rf)?,
    };
    let rot_phi = setup.phi_fil();
    let mut acc = [ScaledC::ZERO; 5];
    let qmax = (order_cap / n) as i64 + 1;
    for q in -qmax..=qmax {
        let ord = q * n as i64 + m as i64;
        if ord.unsigned_abs() as usize > order_cap {
            continue;
        }
        let rot = Complex64::from_polar(1.0, -(ord as f64) * rot_phi);
        let d = match problem.excitation.region {
            Region::External => t_a1.j_c(ord).mul(t_f.h_c(ord)).mul_c(-rot),
            Region::Internal => t_f.j_c(ord).mul(t_a2.h_c(ord)).mul_c(rot),
        };
        let terms = [
            d,
            t_a1.j_c(ord).mul(t_1c.h_c(ord)),
            t_a1.j_c(ord).mul(t_1c.hp_c(ord)).mul_c(c(-1.0)),
            t_2c.j_c(ord).mul(t_a2.h_c(ord)),
            t_2c.jp_c(ord).mul(t_a2.h_c(ord)).mul_c(c(-1.0)),
        ];
        for (a, t) in acc.iter_mut().zip(terms) {
            *a = a.add(t);
        }
    }
    Ok(ModeCoefficients {
        m,
        d: acc[0].to_c64(),
        b1: acc[1].to_c64(),
        b2: acc[2].to_c64(),
        b3: acc[3].to_c64(),
        b4: acc[4].to_c64(),
    })
}

/// Single `q = 0` term of each q-sum: the `N -> infinity` form of the
/// coefficients.
pub fn q_zero_term(problem: &Problem, m: i64) -> Result<ModeCoefficients> {
    let setup = problem.circular_setup().ok_or(Error::Unsupported("q-sum coefficients for non-circular"))?;
    let (ra1, ra2) = problem.aux_radii().ok_or(Error::Unsupported("q-sum coefficients for non-circular"))?;
    let med = &problem.media;
    let (k1, k2) = (med.k1(), med.k2());
    let (rc, rf) = (setup.rho_cyl, setup.rho_fil());
    let nmax = m.unsigned_abs() as usize;
    let t = |x: f64| CylinderFunctions::new(nmax, x);
    let (t_a1, t_1c, t_2c, t_a2) = (t(k1 * ra1)?, t(k1 * rc)?, t(k2 * rc)?, t(k2 * ra2)?);
    let rot = Complex64::from_polar(1.0, -(m as f64) * setup.phi_fil());
    let d = match problem.excitation.region {
        Region::External => t_a1.j_c(m).mul(t(k1 * rf)?.h_c(m)).mul_c(-rot),
        Region::Internal => t(k2 * rf)?.j_c(m).mul(t_a2.h_c(m)).mul_c(rot),
    };
    Ok(ModeCoefficients {
        m: m.unsigned_abs() as usize,
        d: d.to_c64(),
        b1: t_a1.j_c(m).mul(t_1c.h_c(m)).to_c64(),
        b2: -t_a1.j_c(m).mul(t_1c.hp_c(m)).to_c64(),
        b3: t_2c.j_c(m).mul(t_a2.h_c(m)).to_c64(),
        b4: -t_2c.jp_c(m).mul(t_a2.h_c(m)).to_c64(),
    })
}

/// Solve the per-mode 2x2 system built from [`ModeCoefficients`], giving
/// `(I^(m) N / I, K^(m) N / I)`.
pub fn mode_currents(coeffs: &ModeCoefficients, media: &Media, region: Region) -> Result<(Complex64, Complex64)> {
    let (z1, z2) = (media.z1(), media.z2());
    let (a11, a12, a21, a22) = (coeffs.b1, I / z1 * coeffs.b2, coeffs.b3, I / z2 * coeffs.b4);
    let det = a11 * a22 - a12 * a21;
    if det.norm() < 1e-300 {
        return Err(Error::DegenerateMode {
            mode: coeffs.m as i64,
            magnitude: det.norm(),
        });
    }
    let (r1, r2) = match region {
        Region::External => (coeffs.d, c(0.0)),
        Region::Internal => (c(0.0), coeffs.d),
    };
    Ok(((r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det))
}

/// Auxiliary-free large-`N` limit of `(I^(m) N / I, K^(m) N / I)`:
/// `-Z1 H_m(k1 rf) J'_m(k2 rc) / Delta_m` and `i Z1 Z2 H_m(k1 rf) J_m(k2 rc) / Delta_m`
/// for an exterior source, with `Delta_m = Z1 H_m(k1 rc) J'_m(k2 rc) - Z2 H'_m(k1 rc) J_m(k2 rc)`.
/// An interior source replaces the numerators by `-Z2 J_m(k2 rf) H'_m(k1 rc)` and
/// `i Z1 Z2 J_m(k2 rf) H_m(k1 rc)`.
pub fn large_n_limit_coefficients(setup: &CircularSetup, m: i64) -> Result<(Complex64, Complex64)> {
    let tabs = ModeTables::new(setup, m.unsigned_abs() as usize)?;
    let med = &setup.media;
    let (z1, z2) = (med.z1(), med.z2());
    let delta = tabs.denominator(med, m)?;
    let rot = Complex64::from_polar(1.0, -(m as f64) * setup.phi_fil());
    let (i_num, k_num) = match setup.excitation.region {
        Region::External => (
            tabs.tf.h_c(m).mul(tabs.t2c.jp_c(m)).mul_c(-z1 * rot),
            tabs.tf.h_c(m).mul(tabs.t2c.j_c(m)).mul_c(I * z1 * z2 * rot),
        ),
        Region::Internal => (
            tabs.tf.j_c(m).mul(tabs.t1c.hp_c(m)).mul_c(-z2 * rot),
            tabs.tf.j_c(m).mul(tabs.t1c.h_c(m)).mul_c(I * z1 * z2 * rot),
        ),
    };
    Ok((i_num.div(delta).to_c64(), k_num.div(delta).to_c64()))
}

/// Amplitudes sampled as densities: `N x_l / L` with `L` the normalization
/// length (`2 pi rho_cyl` for circles, the perimeter otherwise).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedCurrents {
    pub phi: Vec<f64>,
    pub first: Vec<Complex64>,
    pub second: Vec<Complex64>,
    pub length: f64,
}

pub fn normalized_currents(sol: &DiscreteSolution, problem: &Problem) -> NormalizedCurrents {
    let n = sol.n;
    let length = problem.normalization_length();
    let f = n as f64 / length;
    NormalizedCurrents {
        phi: (0..n).map(|l| 2.0 * PI * l as f64 / n as f64).collect(),
        first: sol.first.iter().map(|z| z * f).collect(),
        second: sol.second.iter().map(|z| z * f).collect(),
        length,
    }
}

/// Odd-`N` cosine synthesis `x_l = x^(0) + 2 sum_{m=1}^{(N-1)/2} x^(m) cos(2 pi l m / N)`
/// for spectra even in `m`.
pub fn cosine_reconstruction(half_spectrum: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if n.is_multiple_of(2) {
        return Err(Error::Invalid(format!("cosine reconstruction needs odd N, got {n}")));
    }
    if half_spectrum.len() != n.div_ceil(2) {
        return Err(Error::Invalid(format!(
            "expected {} coefficients for N={n}, got {}",
            n.div_ceil(2),
            half_spectrum.len()
        )));
    }
    Ok((0..n)
        .map(|l| {
            half_spectrum
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .map(|(m, x)| 2.0 * x * (2.0 * PI * (l * m % n) as f64 / n as f64).cos())
                .sum::<Complex64>()
                + half_spectrum[0]
        })
        .collect())
}

/// Relative infinity-norm distance between two solutions.
pub fn solution_distance(a: &DiscreteSolution, b: &DiscreteSolution) -> f64 {
    let xa = a.stacked();
    let xb = b.stacked();
    let diff: Vec<Complex64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
    norm_inf_vec(&diff) / norm_inf_vec(&xb).max(f64::MIN_POSITIVE)
}
