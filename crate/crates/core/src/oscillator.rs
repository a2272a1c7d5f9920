//! Single-mode displacement-operator matrix elements, Laguerre polynomials
//! and the weighted-sum identities built on them.
//!
//! Matrix elements are evaluated through the closed form
//! `<m|D(b)|n> = sqrt(p!/q!) u^{q-p} e^{-|b|^2/2} L_p^{(q-p)}(|b|^2)`
//! with `p = min(m,n)`, `q = max(m,n)`; the factorial ratio lives in the log
//! domain so elements stay finite well past `n = 170`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap for adaptive oscillator sums.
pub const SUM_HARD_CAP: u32 = 4096;
/// A block must contribute less than this fraction of the running total
/// before an adaptive sum is allowed to stop.
pub const SUM_TAIL_TARGET: f64 = 1e-12;
const SUM_BLOCK: u32 = 32;

/// Generalized Laguerre polynomial `L_n^{(alpha)}(x)` by the three-term
/// recurrence. Integer `alpha >= 0` is all the matrix elements need.
pub fn laguerre(n: u32, alpha: u32, x: f64) -> f64 {
    let a = alpha as f64;
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln(k!)` from a cumulative table (Kahan-compensated).
pub fn ln_factorial(k: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let cap = SUM_HARD_CAP as usize + 2048;
        let mut out = Vec::with_capacity(cap);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        out.push(0.0);
        for i in 1..cap {
            let term = (i as f64).ln();
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            out.push(sum);
        }
        out
    });
    table[k as usize]
}

/// `<m|D(beta)|n>` for the Glauber displacement `D(beta) = exp(beta b* - conj(beta) b)`.
///
/// Sound up to levels of a few hundred: the log-domain prefactor never
/// overflows, but the Laguerre recurrence itself grows binomially and
/// leaves f64 range near `min(m,n) + |m-n| ~ 1000`; downstream adaptive
/// sums detect the resulting non-finite values and error out.
pub fn displacement_element(m: u32, n: u32, beta: Complex64) -> Complex64 {
    let x = beta.norm_sqr();
    if x == 0.0 {
        return if m == n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let (p, q) = (m.min(n), m.max(n));
    let d = q - p;
    let lag = laguerre(p, d, x);
    let log_mag = 0.5 * (ln_factorial(p) - ln_factorial(q)) - 0.5 * x + 0.5 * d as f64 * x.ln();
    let mag = log_mag.exp();
    if d == 0 {
        return Complex64::new(lag * mag, 0.0);
    }
    // m >= n carries beta^{q-p}; m < n picks up (-conj(beta))^{q-p}
    let unit_arg = if m >= n {
        beta.arg()
    } else {
        (-beta.conj()).arg()
    };
    Complex64::from_polar(lag * mag, d as f64 * unit_arg)
}

/// Adaptive sum over oscillator levels `m = 0, 1, 2, ...` in blocks of 32.
/// Stops once the block past the peak region contributes less than the tail
/// target; errors out at the hard cap.
fn adaptive_level_sum(peak_guard: u32, mut term: impl FnMut(u32) -> f64) -> Result<f64> {
    let mut total = 0.0f64;
    let mut level = 0u32;
    loop {
        let mut block = 0.0f64;
        for m in level..level + SUM_BLOCK {
            block += term(m);
        }
        total += block;
        level += SUM_BLOCK;
        if !total.is_finite() {
            return Err(Error::TruncationNotConverged {
                max_terms: level as usize,
            });
        }
        if level > peak_guard && block < SUM_TAIL_TARGET * total.max(f64::MIN_POSITIVE) {
            return Ok(total);
        }
        if level >= SUM_HARD_CAP {
            return Err(Error::TruncationNotConverged {
                max_terms: SUM_HARD_CAP as usize,
            });
        }
    }
}

/// Left side of the exponentially weighted square-sum identity:
/// `sum_m e^{2 mu (m-n)} |<m|D(beta)|n>|^2`.
pub fn weighted_square_sum(n: u32, beta: Complex64, mu: f64) -> Result<f64> {
    adaptive_level_sum(n, |m| {
        let w = (2.0 * mu * (m as f64 - n as f64)).exp();
        w * displacement_element(m, n, beta).norm_sqr()
    })
}

/// Closed form of the same identity:
/// `e^{(e^{2 mu} - 1)|beta|^2} L_n(-|beta|^2 (e^mu - e^{-mu})^2)`.
pub fn weighted_square_sum_closed(n: u32, beta: Complex64, mu: f64) -> f64 {
    let x = beta.norm_sqr();
    let stretch = (mu.exp() - (-mu).exp()).powi(2);
    (((2.0 * mu).exp() - 1.0) * x).exp() * laguerre(n, 0, -x * stretch)
}

/// `sum_m e^{mu |sqrt(n) - sqrt(m)|} |<m|D(beta)|n>|^p`; grows like
/// `(n ∨ 1)^{1/2 - p/4}` in `n`.
pub fn dispsum_profile(n: u32, beta: Complex64, mu: f64, p: f64) -> Result<f64> {
    if !(0.0 < p && p <= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "dispsum power p must lie in (0, 2], got {p}"
        )));
    }
    let root_n = (n as f64).sqrt();
    adaptive_level_sum(n, |m| {
        let w = (mu * ((m as f64).sqrt() - root_n).abs()).exp();
        w * displacement_element(m, n, beta).norm().powf(p)
    })
}

/// `sum_m (m ∨ 1)^alpha e^{-mu |sqrt(m) - sqrt(n)|}`; scales like
/// `(n ∨ 1)^{1/2 + alpha}`.
pub fn sqrt_metric_sum(n: u32, mu: f64, alpha: f64) -> Result<f64> {
    if mu <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sqrt_metric_sum needs mu > 0, got {mu}"
        )));
    }
    let root_n = (n as f64).sqrt();
    adaptive_level_sum(n, |m| {
        (m.max(1) as f64).powf(alpha) * (-mu * ((m as f64).sqrt() - root_n).abs()).exp()
    })
}
