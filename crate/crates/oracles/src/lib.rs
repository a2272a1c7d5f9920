//! Independent reference implementations used to gate the main crate's
//! numerics: series expansions in extended precision, exhaustive
//! minimizations, permutation enumeration and quadrature. Everything here
//! favours obviousness over speed and deliberately avoids the code paths
//! it checks.

pub mod dd;

use dd::Dd;
use holstein_core::basis::OscillatorConfig;
use holstein_core::lattice::{LatticeRegion, SiteId};
use holstein_core::metrics::r_metric;
use num_complex::Complex64;

/// `<m|D(beta)|n>` from the normal-ordered series, with the alternating
/// coefficient sum carried in double-double precision.
///
/// Expanding `e^{-|b|^2/2} e^{b a*} e^{-conj(b) a}` between number states
/// collapses to a single finite sum over the annihilation order `j`; the
/// phases factor out and the remaining real series is
/// `sum_j (-x)^j q! / (j! (d+j)! (p-j)!)` with `p = min(m,n)`,
/// `q = max(m,n)`, `d = q - p`, `x = |beta|^2`.
pub fn displacement_element_series(m: u32, n: u32, beta: Complex64) -> Complex64 {
    let x = beta.norm_sqr();
    if x == 0.0 {
        return if m == n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let (p, q) = (m.min(n) as u64, m.max(n) as u64);
    let d = q - p;

    // t_0 = C(q, p) built exactly in dd
    let mut term = Dd::from_f64(1.0);
    for i in 1..=p {
        term = term.mul_f64((d + i) as f64).div_f64(i as f64);
    }
    let mut sum = term;
    for j in 0..p {
        // t_{j+1} = t_j * (-x) (p - j) / ((j + 1)(d + j + 1))
        term = term
            .mul_f64(-x)
            .mul_f64((p - j) as f64)
            .div_f64((j + 1) as f64)
            .div_f64((d + j + 1) as f64);
        sum = sum.add(term);
    }

    // prefactor sqrt(p!/q!) |beta|^d as a stable running product
    let mut magnitude = (-x / 2.0).exp();
    let abs_beta = x.sqrt();
    for i in (p + 1)..=q {
        magnitude *= abs_beta / (i as f64).sqrt();
    }
    let unit_arg = if m >= n {
        beta.arg()
    } else {
        (-beta.conj()).arg()
    };
    Complex64::from_polar(magnitude * sum.to_f64(), d as f64 * unit_arg)
}

/// All oscillator configurations over the region with total excitation
/// exactly `k` (compositions of `k` into `|region|` parts).
pub fn enumerate_shell(region: &LatticeRegion, k: u32) -> Vec<OscillatorConfig> {
    let n = region.len();
    let mut out = Vec::new();
    let mut dense = vec![0u32; n];
    fn rec(dense: &mut Vec<u32>, site: usize, left: u32, out: &mut Vec<OscillatorConfig>) {
        if site + 1 == dense.len() {
            dense[site] = left;
            out.push(OscillatorConfig::from_counts(
                dense
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (SiteId(i), c)),
            ));
            dense[site] = 0;
            return;
        }
        for c in 0..=left {
            dense[site] = c;
            rec(dense, site + 1, left - c, out);
        }
        dense[site] = 0;
    }
    if n > 0 {
        rec(&mut dense, 0, k, &mut out);
    }
    out
}

/// Exhaustive `min_{N(xi) = k} r(m, xi)`.
pub fn shell_distance_exhaustive(region: &LatticeRegion, m: &OscillatorConfig, k: u32) -> f64 {
    enumerate_shell(region, k)
        .iter()
        .map(|xi| r_metric(m, xi))
        .fold(f64::INFINITY, f64::min)
}

/// Exhaustive shell-collapsed metric
/// `min(r(m, xi), r(m, shell k) + r(xi, shell k))`.
pub fn shell_collapsed_exhaustive(
    region: &LatticeRegion,
    m: &OscillatorConfig,
    xi: &OscillatorConfig,
    k: u32,
) -> f64 {
    let direct = r_metric(m, xi);
    let via = shell_distance_exhaustive(region, m, k) + shell_distance_exhaustive(region, xi, k);
    direct.min(via)
}

/// Shortest walk visiting all waypoints by trying every visiting order.
pub fn walk_by_permutations(
    region: &LatticeRegion,
    x: SiteId,
    y: SiteId,
    waypoints: &[SiteId],
) -> Option<u32> {
    let dist = |a: SiteId, b: SiteId| region.distance(a, b);
    if waypoints.is_empty() {
        return dist(x, y);
    }
    let mut order: Vec<SiteId> = waypoints.to_vec();
    let mut best: Option<u32> = None;
    permute(&mut order, 0, &mut |perm| {
        let mut total = 0u32;
        let mut cur = x;
        for &w in perm {
            total += match dist(cur, w) {
                Some(d) => d,
                None => return,
            };
            cur = w;
        }
        total += match dist(cur, y) {
            Some(d) => d,
            None => return,
        };
        best = Some(best.map_or(total, |b| b.min(total)));
    });
    best
}

fn permute(items: &mut Vec<SiteId>, at: usize, visit: &mut impl FnMut(&[SiteId])) {
    if at == items.len() {
        visit(items);
        return;
    }
    for i in at..items.len() {
        items.swap(at, i);
        permute(items, at + 1, visit);
        items.swap(at, i);
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// `E |1/(v - z)|^s` for `v` uniform on `[0, v_plus]`. With real `z` inside
/// the support the moment has a closed form; off the real axis quadrature
/// handles it.
pub fn uniform_fractional_moment(z: Complex64, v_plus: f64, s: f64, tol: f64) -> f64 {
    if z.im == 0.0 && (0.0..=v_plus).contains(&z.re) {
        let e = z.re;
        (e.powf(1.0 - s) + (v_plus - e).powf(1.0 - s)) / ((1.0 - s) * v_plus)
    } else {
        let f = |v: f64| ((Complex64::new(v, 0.0) - z).norm()).powf(-s) / v_plus;
        integrate(&f, 0.0, v_plus, tol)
    }
}

/// Modified Bessel function of the first kind, order zero, by its
/// everywhere-convergent power series.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// `P[|1/(v - E)| > t]` for `v` uniform on `[0, v_plus]` and real `E`.
pub fn uniform_survival(e: f64, v_plus: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let half = 1.0 / t;
    let lo = (e - half).max(0.0);
    let hi = (e + half).min(v_plus);
    ((hi - lo).max(0.0)) / v_plus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_matches_known_vacuum_element() {
        let beta = Complex64::new(0.7, -0.3);
        let got = displacement_element_series(0, 0, beta);
        let want = (-beta.norm_sqr() / 2.0).exp();
        assert!((got.re - want).abs() < 1e-15);
    }

    #[test]
    fn series_element_is_unitary_rowwise() {
        let beta = Complex64::new(1.0, 0.5);
        for n in [0u32, 3, 11] {
            let sum: f64 = (0..200)
                .map(|m| displacement_element_series(m, n, beta).norm_sqr())
                .sum();
            assert!((sum - 1.0).abs() < 1e-12, "n = {n}: {sum}");
        }
    }

    #[test]
    fn exhaustive_shell_distance_small_cases() {
        let region = LatticeRegion::chain(3).unwrap();
        let m = OscillatorConfig::from_counts([(SiteId(0), 2)]);
        assert_eq!(shell_distance_exhaustive(&region, &m, 2), 0.0);
        assert!((shell_distance_exhaustive(&region, &m, 0) - 2f64.sqrt()).abs() < 1e-15);
        // down one excitation: best is removing a single quantum
        assert!((shell_distance_exhaustive(&region, &m, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permutation_walk_trivial_cases() {
        let region = LatticeRegion::chain(10).unwrap();
        assert_eq!(
            walk_by_permutations(&region, SiteId(2), SiteId(7), &[]),
            Some(5)
        );
        assert_eq!(
            walk_by_permutations(&region, SiteId(3), SiteId(3), &[SiteId(1), SiteId(5)]),
            Some(8)
        );
    }

    #[test]
    fn simpson_integrates_polynomials_exactly_enough() {
        let got = integrate(&|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((got - 2.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_survival_is_a_proper_tail() {
        assert!((uniform_survival(0.25, 0.5, 10.0) - 0.4).abs() < 1e-15);
        assert!((uniform_survival(0.25, 0.5, 1e9) * 1e9 - 4.0).abs() < 1e-6);
    }
}
