//! Integer-order Bessel and Hankel functions of real positive argument.
//!
//! `J_n` comes from Miller's downward recurrence normalized by
//! `J_0 + 2 sum J_2k = 1`. `Y_0`, `Y_1` come from Neumann series over the
//! same `J` values (small x) or the Hankel asymptotic expansion (large x),
//! and `Y_n` from upward recurrence. `H_n = J_n - i Y_n` throughout.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// `|Y_n|` beyond this is reported as overflow.
pub const Y_OVERFLOW: f64 = 1e300;
/// Switch from Neumann series to Hankel asymptotics for `Y_0`, `Y_1`.
const Y_ASYMPTOTIC_FROM: f64 = 25.0;

fn check_arg(func: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { func, arg: x })
    }
}

fn parity(n: i64) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, biased - 1022)
}

fn ldexp(m: f64, e: i32) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    if e > 1100 {
        return m.signum() * f64::INFINITY;
    }
    if e < -1200 {
        return 0.0;
    }
    let half = e / 2;
    m * 2f64.powi(half) * 2f64.powi(e - half)
}

/// Real number stored as `mant * 2^exp`, immune to over- and underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    mant: f64,
    exp: i32,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { mant: 0.0, exp: 0 };

    pub fn new(v: f64) -> Self {
        Self::from_parts(v, 0)
    }

    fn from_parts(mant: f64, exp: i32) -> Self {
        if mant == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(mant);
        Self { mant: m, exp: exp + e }
    }

    pub fn to_f64(self) -> f64 {
        ldexp(self.mant, self.exp)
    }

    /// `log2 |x|`, `-inf` for zero.
    pub fn log2_abs(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.abs().log2() + self.exp as f64
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0.0
    }

    pub fn scale(self, f: f64) -> Self {
        Self::from_parts(self.mant * f, self.exp)
    }

    pub fn mul(self, o: Self) -> Self {
        Self::from_parts(self.mant * o.mant, self.exp + o.exp)
    }

    pub fn div(self, o: Self) -> Self {
        Self::from_parts(self.mant / o.mant, self.exp - o.exp)
    }

    pub fn add(self, o: Self) -> Self {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp { (self, o) } else { (o, self) };
        let shift = lo.exp - hi.exp;
        if shift < -60 {
            return hi;
        }
        Self::from_parts(hi.mant + lo.mant * 2f64.powi(shift), hi.exp)
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    pub fn neg(self) -> Self {
        Self {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

fn miller_start(nmax: usize, x: f64) -> usize {
    let base = (nmax as f64).max(x);
    let m = (base + 15.0 * x.cbrt() + 20.0).ceil() as usize;
    m + (m % 2)
}

/// Normalized `J_0..=J_m` for the Miller start order `m >= nmax`.
fn miller_j(nmax: usize, x: f64) -> Vec<Scaled> {
    let m = miller_start(nmax, x);
    let mut f = vec![Scaled::ZERO; m + 2];
    f[m] = Scaled::new(1.0);
    let mut sum = Scaled::ZERO;
    for k in (1..=m).rev() {
        f[k - 1] = f[k].scale(2.0 * k as f64 / x).sub(f[k + 1]);
        if k - 1 > 0 && (k - 1) % 2 == 0 {
            sum = sum.add(f[k - 1].scale(2.0));
        }
    }
    sum = sum.add(f[0]);
    f.truncate(m + 1);
    for v in &mut f {
        *v = v.div(sum);
    }
    f
}

/// Hankel expansion `(P, Q)` for order `nu` at large `x`.
fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if a.abs() >= prev || a == 0.0 {
            break;
        }
        prev = a.abs();
        // a_k / x^k with alternating signs: k odd -> Q, k even -> P.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
        if a.abs() < 1e-18 {
            break;
        }
    }
    (p, q)
}

fn y01(x: f64, j: &[Scaled]) -> (f64, f64) {
    if x >= Y_ASYMPTOTIC_FROM {
        let amp = (2.0 / (PI * x)).sqrt();
        let (p0, q0) = hankel_pq(0.0, x);
        let (p1, q1) = hankel_pq(1.0, x);
        let chi0 = x - FRAC_PI_4;
        let chi1 = x - 3.0 * FRAC_PI_4;
        let y0 = amp * (p0 * chi0.sin() + q0 * chi0.cos());
        let y1 = amp * (p1 * chi1.sin() + q1 * chi1.cos());
        return (y0, y1);
    }
    let jf = |k: usize| j[k].to_f64();
    let log_term = (x / 2.0).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 < j.len() {
        let sign = parity(k as i64);
        s0 += sign * jf(2 * k) / k as f64;
        s1 += sign * (jf(2 * k - 1) - jf(2 * k + 1)) / k as f64;
        k += 1;
    }
    let y0 = 2.0 / PI * log_term * jf(0) - 4.0 / PI * s0;
    let y1 = 2.0 / PI * log_term * jf(1) - 2.0 / PI * jf(0) / x + 2.0 / PI * s1;
    (y0, y1)
}

fn y_upward(nmax: usize, x: f64, j: &[Scaled]) -> Vec<Scaled> {
    let (y0, y1) = y01(x, j);
    let mut y = vec![Scaled::new(y0), Scaled::new(y1)];
    for n in 1..nmax {
        let next = y[n].scale(2.0 * n as f64 / x).sub(y[n - 1]);
        y.push(next);
    }
    y.truncate(nmax + 1);
    y
}

/// Table of `J_n(x)` and `Y_n(x)` for `0 <= n <= nmax + 1`, queried with
/// signed orders up to `nmax` (derivatives need one extra order).
///
/// Values are held in [`Scaled`] form, so products such as `J_n(a) H_n(b)`
/// stay finite at orders where the factors alone under- or overflow.
#[derive(Debug, Clone)]
pub struct CylinderFunctions {
    x: f64,
    nmax: usize,
    j: Vec<Scaled>,
    y: Vec<Scaled>,
}

/// `log2(Y_OVERFLOW)`.
fn y_overflow_log2() -> f64 {
    Y_OVERFLOW.log2()
}

impl CylinderFunctions {
    pub fn new(nmax: usize, x: f64) -> Result<Self> {
        check_arg("CylinderFunctions", x)?;
        let mut j = miller_j(nmax + 1, x);
        let y = y_upward(nmax + 1, x, &j);
        j.truncate(nmax + 2);
        Ok(Self { x, nmax, j, y })
    }

    pub fn arg(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> usize {
        self.nmax
    }

    fn index(&self, n: i64) -> usize {
        let a = n.unsigned_abs() as usize;
        assert!(a <= self.nmax, "order {n} outside table (max {})", self.nmax);
        a
    }

    fn fold(n: i64, v: Scaled) -> Scaled {
        if n < 0 && n % 2 != 0 {
            v.neg()
        } else {
            v
        }
    }

    pub fn j_scaled(&self, n: i64) -> Scaled {
        Self::fold(n, self.j[self.index(n)])
    }

    pub fn jp_scaled(&self, n: i64) -> Scaled {
        let a = self.index(n);
        let v = if a == 0 {
            self.j[1].neg()
        } else {
            self.j[a - 1].sub(self.j[a + 1]).scale(0.5)
        };
        Self::fold(n, v)
    }

    pub fn y_scaled(&self, n: i64) -> Scaled {
        Self::fold(n, self.y[self.index(n)])
    }

    pub fn yp_scaled(&self, n: i64) -> Scaled {
        let a = self.index(n);
        let v = if a == 0 {
            self.y[1].neg()
        } else {
            self.y[a - 1].sub(self.y[a + 1]).scale(0.5)
        };
        Self::fold(n, v)
    }

    pub fn j(&self, n: i64) -> f64 {
        self.j_scaled(n).to_f64()
    }

    pub fn jp(&self, n: i64) -> f64 {
        self.jp_scaled(n).to_f64()
    }

    fn checked_y(&self, n: i64, v: Scaled) -> Result<f64> {
        if v.log2_abs() > y_overflow_log2() {
            Err(Error::Overflow {
                order: n,
                arg: self.x,
            })
        } else {
            Ok(v.to_f64())
        }
    }

    pub fn h(&self, n: i64) -> Result<Complex64> {
        let y = self.checked_y(n, self.y_scaled(n))?;
        Ok(Complex64::new(self.j(n), -y))
    }

    pub fn hp(&self, n: i64) -> Result<Complex64> {
        let a = self.index(n) as i64;
        let y = self.checked_y(n, self.yp_scaled(n))?;
        // The n + 1 neighbour must itself be representable.
        self.checked_y(a + 1, self.y[a as usize + 1])?;
        Ok(Complex64::new(self.jp(n), -y))
    }

    /// `H^(2)_n` as a pair of scaled real and imaginary parts.
    pub fn h_scaled(&self, n: i64) -> (Scaled, Scaled) {
        (self.j_scaled(n), self.y_scaled(n).neg())
    }

    pub fn hp_scaled(&self, n: i64) -> (Scaled, Scaled) {
        (self.jp_scaled(n), self.yp_scaled(n).neg())
    }
}

/// Complex number stored as `mant * 2^exp` with `max(|re|, |im|)` of
/// `mant` in `[0.5, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledC {
    mant: Complex64,
    exp: i32,
}

impl ScaledC {
    pub const ZERO: ScaledC = ScaledC {
        mant: Complex64::new(0.0, 0.0),
        exp: 0,
    };

    pub fn new(z: Complex64) -> Self {
        Self::from_parts(z, 0)
    }

    fn from_parts(mant: Complex64, exp: i32) -> Self {
        let big = mant.re.abs().max(mant.im.abs());
        if big == 0.0 || !big.is_finite() {
            return Self { mant, exp: if big == 0.0 { 0 } else { exp } };
        }
        let (_, e) = frexp(big);
        let f = ldexp(1.0, -e);
        Self {
            mant: mant * f,
            exp: exp + e,
        }
    }

    pub fn from_real(v: Scaled) -> Self {
        Self::from_parts(Complex64::new(v.mant, 0.0), v.exp)
    }

    /// `re + i im`.
    pub fn from_pair(re: Scaled, im: Scaled) -> Self {
        Self::from_real(re).add(Self::from_real(im).mul_c(Complex64::new(0.0, 1.0)))
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(ldexp(self.mant.re, self.exp), ldexp(self.mant.im, self.exp))
    }

    pub fn log2_norm(self) -> f64 {
        let n = self.mant.norm();
        if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            n.log2() + self.exp as f64
        }
    }

    pub fn is_zero(self) -> bool {
        self.mant == Complex64::new(0.0, 0.0)
    }

    pub fn mul(self, o: Self) -> Self {
        Self::from_parts(self.mant * o.mant, self.exp + o.exp)
    }

    pub fn mul_c(self, z: Complex64) -> Self {
        Self::from_parts(self.mant * z, self.exp)
    }

    pub fn mul_real(self, v: Scaled) -> Self {
        Self::from_parts(self.mant * v.mant, self.exp + v.exp)
    }

    pub fn div(self, o: Self) -> Self {
        Self::from_parts(self.mant / o.mant, self.exp - o.exp)
    }

    pub fn add(self, o: Self) -> Self {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= o.exp { (self, o) } else { (o, self) };
        let shift = lo.exp - hi.exp;
        if shift < -60 {
            return hi;
        }
        Self::from_parts(hi.mant + lo.mant * 2f64.powi(shift), hi.exp)
    }

    pub fn sub(self, o: Self) -> Self {
        self.add(Self {
            mant: -o.mant,
            exp: o.exp,
        })
    }
}

impl CylinderFunctions {
    pub fn j_c(&self, n: i64) -> ScaledC {
        ScaledC::from_real(self.j_scaled(n))
    }

    pub fn jp_c(&self, n: i64) -> ScaledC {
        ScaledC::from_real(self.jp_scaled(n))
    }

    pub fn h_c(&self, n: i64) -> ScaledC {
        let (re, im) = self.h_scaled(n);
        ScaledC::from_pair(re, im)
    }

    pub fn hp_c(&self, n: i64) -> ScaledC {
        let (re, im) = self.hp_scaled(n);
        ScaledC::from_pair(re, im)
    }
}

/// `a * (re + i im)` evaluated without intermediate over- or underflow.
pub fn scaled_product(a: Scaled, (re, im): (Scaled, Scaled)) -> Complex64 {
    Complex64::new(a.mul(re).to_f64(), a.mul(im).to_f64())
}

/// `J_n(x)`.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    check_arg("bessel_j", x)?;
    let a = n.unsigned_abs() as usize;
    let j = miller_j(a, x);
    Ok(CylinderFunctions::fold(n, j[a]).to_f64())
}

/// `J'_n(x) = (J_{n-1}(x) - J_{n+1}(x)) / 2`, with `J'_0 = -J_1`.
pub fn bessel_j_prime(n: i64, x: f64) -> Result<f64> {
    check_arg("bessel_j_prime", x)?;
    Ok(CylinderFunctions::new(n.unsigned_abs() as usize, x)?.jp(n))
}

/// `Y_n(x)`, with `Y_{-n} = (-1)^n Y_n`.
pub fn bessel_y(n: i64, x: f64) -> Result<f64> {
    check_arg("bessel_y", x)?;
    let t = CylinderFunctions::new(n.unsigned_abs() as usize, x)?;
    Ok(-t.h(n)?.im)
}

/// `H^(2)_n(x) = J_n(x) - i Y_n(x)`.
pub fn hankel2(n: i64, x: f64) -> Result<Complex64> {
    check_arg("hankel2", x)?;
    CylinderFunctions::new(n.unsigned_abs() as usize, x)?.h(n)
}

/// `H^(2)'_n(x)`, with `H^(2)'_0 = -H^(2)_1`.
pub fn hankel2_prime(n: i64, x: f64) -> Result<Complex64> {
    check_arg("hankel2_prime", x)?;
    CylinderFunctions::new(n.unsigned_abs() as usize, x)?.hp(n)
}

/// `J_n H'_n - J'_n H_n - 2/(i pi x)`, zero up to rounding.
pub fn wronskian_residual(n: i64, x: f64) -> Result<Complex64> {
    check_arg("wronskian_residual", x)?;
    let t = CylinderFunctions::new(n.unsigned_abs() as usize, x)?;
    let lhs = t.j(n) * t.hp(n)? - t.jp(n) * t.h(n)?;
    Ok(lhs - wronskian_value(x))
}

/// `2 / (i pi x)`.
pub fn wronskian_value(x: f64) -> Complex64 {
    Complex64::new(0.0, -2.0 / (PI * x))
}

/// Which leading large-order form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum AsymptoticKind {
    J,
    H2,
    Jp,
    H2p,
}

/// Leading large-order form of `J_n`, `H^(2)_n` or their derivatives.
///
/// Validation only; solvers never call this.
pub fn asymptotic_large_order(kind: AsymptoticKind, n: i64, x: f64) -> Result<Complex64> {
    check_arg("asymptotic_large_order", x)?;
    if n < 1 {
        return Err(Error::Invalid(format!(
            "asymptotic forms need order >= 1, got {n}"
        )));
    }
    let nu = n as f64;
    // ln((e x / 2 nu)^nu)
    let log_pow = nu * (1.0 + (x / (2.0 * nu)).ln());
    let (coef, log_mag) = match kind {
        AsymptoticKind::J => (Complex64::new(1.0 / (2.0 * PI * nu).sqrt(), 0.0), log_pow),
        AsymptoticKind::Jp => (Complex64::new((nu / (2.0 * PI)).sqrt() / x, 0.0), log_pow),
        AsymptoticKind::H2 => (Complex64::new(0.0, (2.0 / (PI * nu)).sqrt()), -log_pow),
        AsymptoticKind::H2p => (Complex64::new(0.0, -(2.0 * nu / PI).sqrt() / x), -log_pow),
    };
    let mag = log_mag.exp();
    if !mag.is_finite() {
        return Err(Error::Overflow { order: n, arg: x });
    }
    Ok(coef * mag)
}

/// Partial sum of an addition-theorem series.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AdditionSum {
    pub value: Complex64,
    /// Highest `|n|` included.
    pub n_used: usize,
    /// Magnitude of the last `±n` pair included.
    pub tail_estimate: f64,
    pub converged: bool,
}

const ADDITION_TOL: f64 = 1e-12;

fn addition_sum(
    small: f64,
    large: f64,
    theta: f64,
    n_max: usize,
    term: impl Fn(&CylinderFunctions, &CylinderFunctions, i64) -> Result<Complex64>,
) -> Result<AdditionSum> {
    check_arg("addition_series", small)?;
    check_arg("addition_series", large)?;
    if n_max < 1 {
        return Err(Error::Invalid("addition series needs n_max >= 1".into()));
    }
    let ts = CylinderFunctions::new(n_max, small)?;
    let tl = CylinderFunctions::new(n_max, large)?;
    let mut value = term(&ts, &tl, 0)?;
    let mut tail = value.norm();
    let mut n_used = 0;
    for n in 1..=n_max as i64 {
        let t = match term(&ts, &tl, n) {
            Ok(t) => 2.0 * t * (n as f64 * theta).cos(),
            Err(Error::Overflow { .. }) => break,
            Err(e) => return Err(e),
        };
        value += t;
        tail = t.norm();
        n_used = n as usize;
    }
    let converged = n_used == n_max && tail <= ADDITION_TOL * value.norm().max(1e-300);
    Ok(AdditionSum {
        value,
        n_used,
        tail_estimate: tail,
        converged: converged || (n_used < n_max && tail <= ADDITION_TOL * value.norm()),
    })
}

fn check_distinct(x1: f64, x2: f64) -> Result<()> {
    if x1 == x2 {
        return Err(Error::Invalid(format!(
            "addition series needs x1 != x2, got {x1}"
        )));
    }
    Ok(())
}

/// `sum_{|n| <= n_max} J_n(min) H_n(max) e^{i n theta}`, converging to
/// `H^(2)_0(sqrt(x1^2 + x2^2 - 2 x1 x2 cos theta))`.
pub fn addition_series_h0(x1: f64, x2: f64, theta: f64, n_max: usize) -> Result<AdditionSum> {
    check_distinct(x1, x2)?;
    addition_sum(x1.min(x2), x1.max(x2), theta, n_max, |s, l, n| {
        Ok(scaled_product(s.j_scaled(n), l.h_scaled(n)))
    })
}

fn check_ordered(x1: f64, x2: f64) -> Result<()> {
    if x2 > x1 {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "derivative addition series needs x2 > x1, got x1={x1}, x2={x2}"
        )))
    }
}

/// `-sum J'_n(x1) H_n(x2) e^{i n theta}` for `x2 > x1`; converges to
/// `(x1 - x2 cos theta)/D * H^(2)_1(D)`.
pub fn addition_series_h0_d1(x1: f64, x2: f64, theta: f64, n_max: usize) -> Result<AdditionSum> {
    check_ordered(x1, x2)?;
    addition_sum(x1, x2, theta, n_max, |s, l, n| {
        Ok(-scaled_product(s.jp_scaled(n), l.h_scaled(n)))
    })
}

/// `-sum J_n(x1) H'_n(x2) e^{i n theta}` for `x2 > x1`; converges to
/// `(x2 - x1 cos theta)/D * H^(2)_1(D)`.
pub fn addition_series_h0_d2(x1: f64, x2: f64, theta: f64, n_max: usize) -> Result<AdditionSum> {
    check_ordered(x1, x2)?;
    addition_sum(x1, x2, theta, n_max, |s, l, n| {
        Ok(-scaled_product(s.j_scaled(n), l.hp_scaled(n)))
    })
}

/// `H^(2)'_1(x) = H^(2)_0(x) - H^(2)_1(x) / x`.
pub fn hankel2_1_prime_from(h0: Complex64, h1: Complex64, x: f64) -> Complex64 {
    h0 - h1 / x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values from 40-digit arbitrary-precision evaluation.
    const J_REF: &[(i64, f64, f64)] = &[
        (0, 1.0, 0.76519768655796655),
        (5, 2.0, 0.0070396297558716855),
        (1, 0.05, 0.024992188313759701),
        (0, 30.0, -0.086367983581040211),
        (40, 2.0, 1.19607745811368e-48),
        (60, 0.1, 1.0423356980865761e-160),
        (12, 50.0, 0.10577531055851069),
        (3, 10.0, 0.058379379305186812),
    ];
    const Y_REF: &[(i64, f64, f64)] = &[
        (0, 1.0, 0.088256964215676958),
        (1, 1.0, -0.78121282130028872),
        (1, 0.05, -12.78985517117497),
        (0, 30.0, -0.11729573168666403),
        (1, 24.0, 0.053059776121202169),
        (5, 2.0, -9.935989128481975),
        (3, 10.0, -0.25136265718383733),
        (20, 50.0, 0.016442633948115778),
    ];

    #[test]
    fn j_reference_values() {
        for &(n, x, v) in J_REF {
            assert_relative_eq!(bessel_j(n, x).unwrap(), v, max_relative = 1e-12);
        }
    }

    #[test]
    fn y_reference_values() {
        for &(n, x, v) in Y_REF {
            assert_relative_eq!(bessel_y(n, x).unwrap(), v, max_relative = 1e-12);
        }
    }

    #[test]
    fn j0_small_argument_limit() {
        assert_relative_eq!(bessel_j(0, 1e-8).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn derivative_values() {
        assert_relative_eq!(bessel_j_prime(1, 1.0).unwrap(), 0.3251471008130331, max_relative = 1e-12);
        for x in [0.3, 1.0, 7.5, 33.0] {
            assert_relative_eq!(bessel_j_prime(0, x).unwrap(), -bessel_j(1, x).unwrap(), max_relative = 1e-14);
            assert!((hankel2_prime(0, x).unwrap() + hankel2(1, x).unwrap()).norm() < 1e-14 * hankel2(1, x).unwrap().norm());
        }
        let via_rec = 0.5 * (bessel_j(2, 2.0).unwrap() - bessel_j(4, 2.0).unwrap());
        assert_relative_eq!(bessel_j_prime(3, 2.0).unwrap(), via_rec, max_relative = 1e-13);
    }

    #[test]
    fn hankel_reference() {
        let h = hankel2(0, 1.0).unwrap();
        assert_relative_eq!(h.re, 0.7651976865579666, max_relative = 1e-12);
        assert_relative_eq!(h.im, -0.0882569642156770, max_relative = 1e-12);
        // Y_n < 0 below its first zero, so Im H = -Y_n > 0 there.
        for n in 0..8 {
            assert!(hankel2(n, 0.5).unwrap().im > 0.0);
        }
    }

    #[test]
    fn wronskian_order_three() {
        let t = CylinderFunctions::new(3, 2.0).unwrap();
        let w = t.j(3) * t.hp(3).unwrap() - t.jp(3) * t.h(3).unwrap();
        assert_relative_eq!(w.re, 0.0, epsilon = 1e-14);
        assert_relative_eq!(w.im, -std::f64::consts::FRAC_1_PI, max_relative = 1e-12);
    }

    #[test]
    fn wronskian_grid() {
        for &x in &[0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 40.0, 50.0] {
            for n in 0..=60 {
                match wronskian_residual(n, x) {
                    Ok(r) => assert!(
                        r.norm() < 1e-12 * 2.0 / (PI * x),
                        "n={n} x={x} residual {}",
                        r.norm()
                    ),
                    Err(Error::Overflow { .. }) => assert!(x < 1.0, "unexpected overflow n={n} x={x}"),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn negative_orders() {
        for n in 1..6i64 {
            let s = parity(n);
            assert_eq!(bessel_j(-n, 3.3).unwrap(), s * bessel_j(n, 3.3).unwrap());
            assert_eq!(hankel2(-n, 3.3).unwrap(), s * hankel2(n, 3.3).unwrap());
            assert_eq!(bessel_j_prime(-n, 3.3).unwrap(), s * bessel_j_prime(n, 3.3).unwrap());
        }
    }

    #[test]
    fn domain_errors() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(bessel_j(0, x), Err(Error::Domain { .. })));
            assert!(matches!(hankel2(2, x), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn overflow_is_tagged() {
        match hankel2(200, 0.5) {
            Err(Error::Overflow { order, arg }) => {
                assert!(order <= 200);
                assert_eq!(arg, 0.5);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        // J stays finite (tiny) where Y overflows.
        assert!(bessel_j(200, 0.5).unwrap() >= 0.0);
    }

    #[test]
    fn scaled_arithmetic() {
        let a = Scaled::new(3.0e200).mul(Scaled::new(4.0e200));
        assert!(a.to_f64().is_infinite());
        assert_relative_eq!(a.div(Scaled::new(1.2e300)).to_f64(), 1.0e101, max_relative = 1e-15);
        assert_eq!(Scaled::new(2.5).sub(Scaled::new(2.5)), Scaled::ZERO);
        assert_relative_eq!(Scaled::new(1e-310).to_f64(), 1e-310, max_relative = 1e-3);
        assert_relative_eq!(Scaled::new(-7.0).add(Scaled::new(2.0)).to_f64(), -5.0);
    }

    #[test]
    fn product_beyond_float_range() {
        // J_300(0.5) ~ 1e-796 and Y_300(0.6) ~ 1e769; the product is finite.
        let s = CylinderFunctions::new(300, 0.5).unwrap();
        let l = CylinderFunctions::new(300, 0.6).unwrap();
        assert_eq!(s.j(300), 0.0);
        assert!(matches!(l.h(300), Err(Error::Overflow { order: 300, .. })));
        let p = scaled_product(s.j_scaled(300), l.h_scaled(300));
        assert_relative_eq!(-p.im, -1.8680805771140341e-27, max_relative = 1e-11);
    }

    #[test]
    fn scaled_complex_arithmetic() {
        let a = ScaledC::new(Complex64::new(3e200, -1e200));
        let b = ScaledC::new(Complex64::new(0.0, 2e200));
        let p = a.mul(b).div(ScaledC::new(Complex64::new(1e300, 0.0)));
        let expect = Complex64::new(3.0, -1.0) * Complex64::new(0.0, 2.0) * 1e100;
        assert!((p.to_c64() - expect).norm() < 1e-14 * expect.norm());
        let s = a.add(b).sub(b).to_c64();
        assert!((s - Complex64::new(3e200, -1e200)).norm() < 1e-15 * 3.2e200);
        let t = CylinderFunctions::new(50, 1.3).unwrap();
        assert!((t.h_c(-7).to_c64() - t.h(-7).unwrap()).norm() < 1e-15 * t.h(7).unwrap().norm());
        assert!((t.hp_c(12).to_c64() - t.hp(12).unwrap()).norm() < 1e-15 * t.hp(12).unwrap().norm());
    }

    #[test]
    fn recurrence_consistency() {
        for &x in &[0.1, 0.7, 3.0, 12.0, 45.0] {
            let t = CylinderFunctions::new(80, x).unwrap();
            for n in 1..80 {
                let jn = t.j(n);
                if jn.abs() > 1e-250 {
                    let lhs = t.j(n - 1) + t.j(n + 1);
                    let rhs = 2.0 * n as f64 / x * jn;
                    let scale = lhs.abs().max(rhs.abs()).max(t.j(n - 1).abs());
                    assert!((lhs - rhs).abs() <= 1e-11 * scale, "n={n} x={x}");
                }
            }
        }
    }

    #[test]
    fn asymptotic_forty_at_two() {
        // Leading forms carry an O(x^2/n) relative error: 2.7% here.
        let j = bessel_j(40, 2.0).unwrap();
        let aj = asymptotic_large_order(AsymptoticKind::J, 40, 2.0).unwrap();
        assert!(((aj.re - j) / j).abs() < 0.03);
        let h = hankel2(40, 2.0).unwrap();
        let ah = asymptotic_large_order(AsymptoticKind::H2, 40, 2.0).unwrap();
        assert!(((ah - h) / h).norm() < 0.03);
    }

    #[test]
    fn asymptotic_product_form() {
        for &(n, x) in &[(10, 0.3), (25, 1.0), (50, 4.0)] {
            let p = asymptotic_large_order(AsymptoticKind::J, n, x).unwrap()
                * asymptotic_large_order(AsymptoticKind::H2, n, x).unwrap();
            let expect = Complex64::new(0.0, 1.0 / (PI * n as f64));
            assert_relative_eq!(p.im, expect.im, max_relative = 1e-12);
            assert!(p.re.abs() < 1e-15);
        }
    }

    #[test]
    fn asymptotic_agreement_improves_with_order() {
        for &x in &[0.5_f64, 1.0, 2.0] {
            let n0 = 2 * x.ceil() as i64 + 20;
            let mut prev = f64::INFINITY;
            for n in (n0..n0 + 40).step_by(5) {
                let t = CylinderFunctions::new(n as usize, x).unwrap();
                let pairs = [
                    (AsymptoticKind::J, Complex64::new(t.j(n), 0.0)),
                    (AsymptoticKind::Jp, Complex64::new(t.jp(n), 0.0)),
                    (AsymptoticKind::H2, t.h(n).unwrap()),
                    (AsymptoticKind::H2p, t.hp(n).unwrap()),
                ];
                let worst = pairs
                    .iter()
                    .map(|(k, v)| ((asymptotic_large_order(*k, n, x).unwrap() - v) / v).norm())
                    .fold(0.0, f64::max);
                assert!(worst < 0.05, "x={x} n={n} err={worst}");
                assert!(worst < prev, "not decreasing at x={x} n={n}");
                prev = worst;
            }
        }
    }

    fn distance(x1: f64, x2: f64, theta: f64) -> f64 {
        (x1 * x1 + x2 * x2 - 2.0 * x1 * x2 * theta.cos()).sqrt()
    }

    #[test]
    fn addition_h0_reference() {
        let s = addition_series_h0(1.0, 3.0, 0.7, 40).unwrap();
        let direct = hankel2(0, distance(1.0, 3.0, 0.7)).unwrap();
        assert!((s.value - direct).norm() < 1e-10);
        assert!(s.converged);
        let s2 = addition_series_h0(3.0, 1.0, -0.7, 40).unwrap();
        assert_eq!(s.value, s2.value);
    }

    #[test]
    fn addition_derivatives_at_pi() {
        let (x1, x2, th) = (1.0, 2.0, PI);
        let d = distance(x1, x2, th);
        let h1 = hankel2(1, d).unwrap();
        let lhs1 = (x1 - x2 * th.cos()) / d * h1;
        let lhs2 = (x2 - x1 * th.cos()) / d * h1;
        let s1 = addition_series_h0_d1(x1, x2, th, 60).unwrap();
        let s2 = addition_series_h0_d2(x1, x2, th, 60).unwrap();
        assert!((s1.value - lhs1).norm() < 1e-10, "{} vs {}", s1.value, lhs1);
        assert!((s2.value - lhs2).norm() < 1e-10, "{} vs {}", s2.value, lhs2);
    }

    #[test]
    fn addition_grid_closure() {
        let x1s = [0.2, 0.7, 1.5, 3.0, 6.0];
        let ratios: [f64; 5] = [1.2, 1.7, 2.5, 5.0, 10.0];
        for &x1 in &x1s {
            for &r in &ratios {
                let x2 = r * x1;
                let n_max = (40.0 + 2.0 * x2 + 40.0 / r.ln()) as usize;
                for k in 0..8 {
                    let th = -PI + 2.0 * PI * (k as f64 + 0.5) / 8.0;
                    let d = distance(x1, x2, th);
                    let h0 = hankel2(0, d).unwrap();
                    let h1 = hankel2(1, d).unwrap();
                    let s0 = addition_series_h0(x1, x2, th, n_max).unwrap();
                    let s1 = addition_series_h0_d1(x1, x2, th, n_max).unwrap();
                    let s2 = addition_series_h0_d2(x1, x2, th, n_max).unwrap();
                    assert!((s0.value - h0).norm() < 1e-10 * h0.norm().max(1.0));
                    let e1 = (s1.value - (x1 - x2 * th.cos()) / d * h1).norm();
                    assert!(e1 < 1e-10 * h1.norm().max(1.0), "x1={x1} x2={x2} th={th} err={e1} n_used={}", s1.n_used);
                    assert!((s2.value - (x2 - x1 * th.cos()) / d * h1).norm() < 1e-10 * h1.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn addition_rejects_bad_input() {
        assert!(addition_series_h0(2.0, 2.0, 0.1, 10).is_err());
        assert!(addition_series_h0_d1(3.0, 2.0, 0.1, 10).is_err());
        assert!(addition_series_h0(1.0, 2.0, 0.1, 0).is_err());
    }

    #[test]
    fn unconverged_sum_is_flagged() {
        let s = addition_series_h0(1.0, 1.1, 0.3, 5).unwrap();
        assert!(!s.converged);
        assert!(s.tail_estimate > 1e-6);
    }

    proptest! {
        #[test]
        fn prop_wronskian(n in 0i64..=60, x in 0.05f64..50.0) {
            match wronskian_residual(n, x) {
                Ok(r) => prop_assert!(r.norm() < 1e-12 * 2.0 / (PI * x)),
                Err(Error::Overflow { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn prop_j_real_and_bounded(n in -60i64..=60, x in 0.01f64..60.0) {
            let j = bessel_j(n, x).unwrap();
            prop_assert!(j.is_finite() && j.abs() <= 1.0);
            if let Ok(h) = hankel2(n, x) {
                prop_assert!((h.re - j).abs() <= 1e-13 * j.abs());
            }
        }

        #[test]
        fn prop_addition_even_in_theta(x1 in 0.1f64..3.0, r in 1.3f64..4.0, th in -3.0f64..3.0) {
            let a = addition_series_h0(x1, r * x1, th, 60).unwrap();
            let b = addition_series_h0(x1, r * x1, -th, 60).unwrap();
            prop_assert_eq!(a.value, b.value);
        }
    }
}
