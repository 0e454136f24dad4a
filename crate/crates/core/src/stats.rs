//! Special functions, quantiles and samplers.
//!
//! CDFs are lower-tail throughout. Upper tails get their own helpers
//! (`normal_sf`, `upper_tail_quantile`, `student_t_sf`) so that callers
//! never have to write `1 - cdf` near 1.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Degrees of freedom, k >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Dof(u64);

impl Dof {
    pub fn new(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("degrees of freedom must be at least 1".into()));
        }
        Ok(Dof(k))
    }

    /// Convenience for `n - p` style arithmetic on signed counts.
    pub fn from_diff(a: usize, b: usize) -> Result<Self> {
        if a <= b {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom {a} - {b} must be at least 1"
            )));
        }
        Ok(Dof((a - b) as u64))
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl TryFrom<u64> for Dof {
    type Error = Error;
    fn try_from(k: u64) -> Result<Self> {
        Dof::new(k)
    }
}

impl From<Dof> for u64 {
    fn from(d: Dof) -> u64 {
        d.0
    }
}

/// A probability strictly inside (0, 1). Holds alpha, nu and derived masses.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TailMass(f64);

impl TailMass {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("tail mass {q} must lie in (0,1)")));
        }
        Ok(TailMass(q))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// 1 - q
    pub fn complement(self) -> TailMass {
        TailMass(1.0 - self.0)
    }
}

impl TryFrom<f64> for TailMass {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        TailMass::new(q)
    }
}

impl From<TailMass> for f64 {
    fn from(t: TailMass) -> f64 {
        t.0
    }
}

// ---------------------------------------------------------------------------
// RNG

/// Seeded ChaCha8 stream. Trials get their own stream id so that they are
/// independent of each other and of scheduling.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    /// Stream `trial + 1` of `seed`; stream 0 is what `new` uses.
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(trial.wrapping_add(1));
        SeededRng { inner, spare: None }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform on (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal by Marsaglia's polar method. The second variate of
    /// each accepted pair is kept for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

pub fn sample_laplace(scale: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("Laplace scale {scale} must be positive")));
    }
    let v = rng.uniform_open() - 0.5;
    Ok(-scale * v.signum() * (1.0 - 2.0 * v.abs()).ln())
}

/// Filled in row-major order, one normal per entry.
pub fn sample_gaussian_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!("matrix shape {rows}x{cols} must be positive")));
    }
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

// ---------------------------------------------------------------------------
// Special functions

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lentz continued fraction for the incomplete beta.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..200_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b), with y = 1 - x supplied by the
/// caller so that it can be formed without cancellation.
fn reg_inc_beta_xy(a: f64, b: f64, x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * y.ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, y) / b
    }
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    reg_inc_beta_xy(a, b, x, 1.0 - x)
}

/// Regularized lower incomplete gamma P(a, x).
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let gln = ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - gln).exp()
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x + a * x.ln() - gln).exp() * h
    }
}

// ---------------------------------------------------------------------------
// Student-T

pub fn student_t_pdf(x: f64, k: Dof) -> f64 {
    let k = k.as_f64();
    let ln_norm = ln_gamma(0.5 * (k + 1.0)) - ln_gamma(0.5 * k) - 0.5 * (k * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (k + 1.0) * (x * x / k).ln_1p()).exp()
}

/// Upper tail P(T_k > x).
pub fn student_t_sf(x: f64, k: Dof) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if x.is_infinite() {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    let kf = k.as_f64();
    let x2 = x * x;
    let t = kf / (kf + x2);
    let one_minus_t = x2 / (kf + x2);
    let half_tail = 0.5 * reg_inc_beta_xy(0.5 * kf, 0.5, t, one_minus_t);
    if x > 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

pub fn student_t_cdf(x: f64, k: Dof) -> f64 {
    student_t_sf(-x, k)
}

/// Inverse CDF: bracketed Newton on the tail mass, falling back to
/// bisection whenever a step leaves the bracket.
pub fn student_t_quantile(q: TailMass, k: Dof) -> f64 {
    let q = q.get();
    if q == 0.5 {
        return 0.0;
    }
    let (p, sign) = if q > 0.5 { (1.0 - q, 1.0) } else { (q, -1.0) };
    sign * student_t_upper_point(p, k)
}

/// x >= 0 with P(T_k > x) = p, for p in (0, 1/2].
fn student_t_upper_point(p: f64, k: Dof) -> f64 {
    let mut lo = 0.0;
    let mut hi = normal_upper_point(p).max(1.0);
    while student_t_sf(hi, k) > p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = student_t_sf(x, k) - p;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = student_t_pdf(x, k);
        let mut next = x + f / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + hi) {
            return next;
        }
        x = next;
    }
    x
}

// ---------------------------------------------------------------------------
// Normal

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 - Φ(x), accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(q: TailMass) -> f64 {
    let q = q.get();
    if q > 0.5 {
        normal_upper_point(1.0 - q)
    } else {
        -normal_upper_point(q)
    }
}

/// The point with upper-tail mass alpha, i.e. normal_quantile(1 - alpha)
/// computed without forming 1 - alpha.
pub fn upper_tail_quantile(alpha: TailMass) -> f64 {
    normal_upper_point(alpha.get())
}

/// x with 1 - Φ(x) = p. Acklam's rational approximation refined by two
/// Halley steps.
fn normal_upper_point(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    // Lower-tail point for mass p, then negate.
    let lower = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 0.5 {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        return -normal_upper_point(1.0 - p);
    };
    let mut x = lower;
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    -x
}

// ---------------------------------------------------------------------------
// Chi-square

pub fn chi2_cdf(x: f64, k: Dof) -> f64 {
    reg_lower_gamma(0.5 * k.as_f64(), 0.5 * x)
}

/// ((√k − √(2 ln(2/ν)))₊², (√k + √(2 ln(2/ν)))²)
pub fn chi2_tail_interval(k: Dof, nu: TailMass) -> (f64, f64) {
    let rk = k.as_f64().sqrt();
    let s = (2.0 * (2.0 / nu.get()).ln()).sqrt();
    let lo = (rk - s).max(0.0);
    (lo * lo, (rk + s) * (rk + s))
}

// ---------------------------------------------------------------------------
// Goodness of fit helpers

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Uniform ECDF deviation radius: √(ln(2/γ) / (2 m)).
pub fn dkw_radius(gamma: f64, trials: usize) -> f64 {
    ((2.0 / gamma).ln() / (2.0 * trials as f64)).sqrt()
}
