//! The metric family on basis states: disagreement radii, the max-type
//! pseudo-metric, the square-root Fock metric, its shell-collapsed variant,
//! and the waypoint walk metric.

use crate::basis::OscillatorConfig;
use crate::error::{Error, Result};
use crate::lattice::{LatticeRegion, SiteId};

/// Radius of the smallest ball around `x` containing every site where
/// `m > 0` and `m != xi`; 0 when no such site exists.
pub fn radius_of_disagreement(
    region: &LatticeRegion,
    m: &OscillatorConfig,
    xi: &OscillatorConfig,
    x: SiteId,
) -> Result<u32> {
    let mut radius = 0u32;
    for (u, c) in m.support() {
        if c > 0 && c != xi.count_at(u) {
            radius = radius.max(region.distance(x, u).ok_or(Error::Unreachable)?);
        }
    }
    Ok(radius)
}

/// Max-type pseudo-metric on basis states:
/// `max(|x - y|, R_{m|xi}(x), R_{xi|m}(y))`.
pub fn upsilon(
    region: &LatticeRegion,
    x: SiteId,
    m: &OscillatorConfig,
    y: SiteId,
    xi: &OscillatorConfig,
) -> Result<u32> {
    let hop = region.distance(x, y).ok_or(Error::Unreachable)?;
    let rm = radius_of_disagreement(region, m, xi, x)?;
    let rx = radius_of_disagreement(region, xi, m, y)?;
    Ok(hop.max(rm).max(rx))
}

/// Square-root Fock-space metric `sum_u sqrt(|m(u) - xi(u)|)`.
pub fn r_metric(m: &OscillatorConfig, xi: &OscillatorConfig) -> f64 {
    let mut sum = 0.0;
    for u in m.disagreement_sites(xi) {
        sum += ((m.count_at(u) as i64 - xi.count_at(u) as i64).unsigned_abs() as f64).sqrt();
    }
    sum
}

/// `r(m, M^(k))`: distance from `m` to the on-shell set with total `k`.
///
/// Below the shell the cheapest move is piling all missing excitations on a
/// single site: `sqrt(k - N(m))`. Above the shell, removals are concentrated
/// on the largest counts first; concavity of the square root makes that the
/// greedy optimum, and the test suite gates it against exhaustive
/// minimisation anyway.
pub fn shell_distance(region: &LatticeRegion, m: &OscillatorConfig, k: u32) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let total = m.total();
    if total <= k {
        return Ok(((k - total) as f64).sqrt());
    }
    let mut excess = total - k;
    let mut counts: Vec<u32> = m.support().map(|(_, c)| c).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let mut cost = 0.0;
    for c in counts {
        if excess == 0 {
            break;
        }
        let removed = c.min(excess);
        excess -= removed;
        cost += (removed as f64).sqrt();
    }
    debug_assert_eq!(excess, 0);
    Ok(cost)
}

/// Shell-collapsed metric: `min(r(m, xi), r(m, M^(k)) + r(xi, M^(k)))`.
pub fn shell_collapsed_r(
    region: &LatticeRegion,
    m: &OscillatorConfig,
    xi: &OscillatorConfig,
    k: u32,
) -> Result<f64> {
    let direct = r_metric(m, xi);
    let via_shell = shell_distance(region, m, k)? + shell_distance(region, xi, k)?;
    Ok(direct.min(via_shell))
}

/// Exact-solver limit for the walk metric.
pub const MAX_WAYPOINTS: usize = 12;

/// Minimal length of a nearest-neighbour walk from `x` to `y` that visits
/// every site where `m != xi`. Solved exactly by Held-Karp path dynamic
/// programming over the waypoint set.
pub fn walk_metric(
    region: &LatticeRegion,
    x: SiteId,
    m: &OscillatorConfig,
    y: SiteId,
    xi: &OscillatorConfig,
) -> Result<u32> {
    let waypoints: Vec<SiteId> = m
        .disagreement_sites(xi)
        .into_iter()
        .filter(|&w| w != x && w != y)
        .collect();
    shortest_visiting_walk(region, x, y, &waypoints)
}

/// Held-Karp path DP: walk from `x` to `y` visiting all `waypoints`.
pub fn shortest_visiting_walk(
    region: &LatticeRegion,
    x: SiteId,
    y: SiteId,
    waypoints: &[SiteId],
) -> Result<u32> {
    let k = waypoints.len();
    if k > MAX_WAYPOINTS {
        return Err(Error::TooManyWaypoints(k));
    }
    let dist = |a: SiteId, b: SiteId| region.distance(a, b).ok_or(Error::Unreachable);
    if k == 0 {
        return dist(x, y);
    }

    // dp[mask][j]: shortest walk from x visiting exactly `mask`, ending at
    // waypoint j
    let full = (1usize << k) - 1;
    let mut dp = vec![vec![u32::MAX; k]; full + 1];
    for j in 0..k {
        dp[1 << j][j] = dist(x, waypoints[j])?;
    }
    for mask in 1..=full {
        for j in 0..k {
            let base = dp[mask][j];
            if base == u32::MAX || mask & (1 << j) == 0 {
                continue;
            }
            for next in 0..k {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let cand = base + dist(waypoints[j], waypoints[next])?;
                let slot = &mut dp[mask | (1 << next)][next];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }
    let mut best = u32::MAX;
    for j in 0..k {
        if dp[full][j] != u32::MAX {
            best = best.min(dp[full][j] + dist(waypoints[j], y)?);
        }
    }
    if best == u32::MAX {
        return Err(Error::Unreachable);
    }
    Ok(best)
}

/// The combined metric `L + r` on basis states.
pub fn d_metric(
    region: &LatticeRegion,
    x: SiteId,
    m: &OscillatorConfig,
    y: SiteId,
    xi: &OscillatorConfig,
) -> Result<f64> {
    Ok(walk_metric(region, x, m, y, xi)? as f64 + r_metric(m, xi))
}
