//! Monte Carlo over disorder realizations: fractional-moment tables,
//! conditional tail tests, fractional-power consistency checks and
//! correlator averages.
//!
//! Realizations run as independent tasks on a worker pool; aggregation is a
//! deterministic fold in realization order after all workers finish, so
//! identical configs produce identical tables at any worker count.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{BasisEnumeration, BasisState, TruncationPolicy};
use crate::correlator::{dynamical_amplitude, eigenfunction_correlator, Eigensystem};
use crate::disorder::{resample_site, sample_disorder};
use crate::error::{Error, Result};
use crate::fit::{decay_fit, DecayFit, DecayPoint, DistanceKind};
use crate::hamiltonian::{assemble, OperatorMatrix, SubspaceSelector};
use crate::lattice::LatticeRegion;
use crate::metrics;
use crate::params::ModelParams;
use crate::resolvent::ResolventSolver;
use crate::rng::SplitMix64;

/// Everything one fractional-moment sweep needs.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub region: Arc<LatticeRegion>,
    pub params: ModelParams,
    pub policy: TruncationPolicy,
    pub pairs: Vec<(BasisState, BasisState)>,
    pub energies: Vec<Complex64>,
    /// Fractional power in `(0, 1)`.
    pub s: f64,
    pub realizations: u32,
    pub base_seed: u64,
    pub workers: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(0.0 < self.s && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional power s must lie in (0, 1), got {}",
                self.s
            )));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter(
                "need at least one realization".into(),
            ));
        }
        if self.pairs.is_empty() || self.energies.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one pair and one energy".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregated statistics for one `(pair, z)` cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub pair: usize,
    pub z: Complex64,
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Full sweep output: aggregate rows plus the per-realization samples that
/// produced them (cell-major: `values[pair * n_z + z][realization]`).
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub pair_indices: Vec<(usize, usize)>,
    pub energies: Vec<Complex64>,
    pub s: f64,
    pub rows: Vec<SweepRow>,
    pub values: Vec<Vec<f64>>,
    pub failures: Vec<(u64, String)>,
}

impl SweepTable {
    /// Per-realization samples of one cell.
    pub fn cell(&self, pair: usize, z_index: usize) -> &[f64] {
        &self.values[pair * self.energies.len() + z_index]
    }

    /// RFC-4180 CSV: a header row, then one row per pair, energy and
    /// statistic. Byte-identical across runs with the same config.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "pair_id,row_state,col_state,z_re,z_im,s,statistic,value,n")?;
        for row in &self.rows {
            let (a, b) = self.pair_indices[row.pair];
            for (stat, value) in [("mean", row.mean), ("std_err", row.std_err)] {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    row.pair,
                    a,
                    b,
                    csv_field(row.z.re),
                    csv_field(row.z.im),
                    csv_field(self.s),
                    stat,
                    csv_field(value),
                    row.n
                )?;
            }
        }
        Ok(())
    }

    /// Decay points against the chosen distance for one fixed energy,
    /// ready for `decay_fit`. Distances collapse to one point per pair.
    pub fn decay_points(
        &self,
        basis: &BasisEnumeration,
        z_index: usize,
        kind: DistanceKind,
        shell_k: u32,
    ) -> Result<Vec<DecayPoint>> {
        let region = basis.region();
        self.pair_indices
            .iter()
            .enumerate()
            .map(|(p, &(a, b))| {
                let sa = basis.state(a);
                let sb = basis.state(b);
                let distance = match kind {
                    DistanceKind::Hop => region
                        .distance(sa.site, sb.site)
                        .ok_or(Error::Unreachable)? as f64,
                    DistanceKind::Upsilon => {
                        metrics::upsilon(region, sa.site, &sa.config, sb.site, &sb.config)? as f64
                    }
                    DistanceKind::UpsilonPlusShell => {
                        metrics::upsilon(region, sa.site, &sa.config, sb.site, &sb.config)? as f64
                            + metrics::shell_collapsed_r(region, &sa.config, &sb.config, shell_k)?
                    }
                    DistanceKind::WalkPlusFock => {
                        metrics::d_metric(region, sa.site, &sa.config, sb.site, &sb.config)?
                    }
                };
                Ok(DecayPoint {
                    distance,
                    values: self.cell(p, z_index).to_vec(),
                })
            })
            .collect()
    }
}

/// Shortest round-trip decimal for a float; no commas or quotes can occur,
/// so no RFC-4180 escaping is ever needed for these fields.
fn csv_field(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn resolve_pairs(
    basis: &BasisEnumeration,
    pairs: &[(BasisState, BasisState)],
) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|(a, b)| {
            let ia = basis
                .index_of(a)
                .ok_or_else(|| Error::InvalidParameter(format!("pair state {a:?} not in basis")))?;
            let ib = basis
                .index_of(b)
                .ok_or_else(|| Error::InvalidParameter(format!("pair state {b:?} not in basis")))?;
            Ok((ia, ib))
        })
        .collect()
}

fn run_pool<T: Send>(workers: usize, job: impl Fn() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// One realization of the sweep: `|G(a, b; z)|^s` for every cell, solves
/// shared per `(z, column)`.
fn sweep_realization(
    basis: &Arc<BasisEnumeration>,
    config: &SweepConfig,
    pair_indices: &[(usize, usize)],
    index: u64,
) -> Result<Vec<f64>> {
    let disorder = sample_disorder(&config.region, &config.params, config.base_seed, index)?;
    let h = assemble(basis, &config.params, &disorder, &SubspaceSelector::Full)?;
    let n_z = config.energies.len();
    let mut out = vec![0.0f64; pair_indices.len() * n_z];
    for (zi, &z) in config.energies.iter().enumerate() {
        let solver = ResolventSolver::new(&h, z)?;
        let mut columns: Vec<(usize, Vec<usize>)> = Vec::new();
        for (p, &(_, b)) in pair_indices.iter().enumerate() {
            match columns.iter_mut().find(|(col, _)| *col == b) {
                Some((_, list)) => list.push(p),
                None => columns.push((b, vec![p])),
            }
        }
        for (b, list) in columns {
            let u = solver.column(h.local_of_global(b).expect("resolved index"))?;
            for p in list {
                let (a, _) = pair_indices[p];
                let g = u[h.local_of_global(a).expect("resolved index")];
                out[p * n_z + zi] = g.norm().powf(config.s);
            }
        }
    }
    Ok(out)
}

/// Disorder-averaged fractional moments `E|G|^s` for every `(pair, z)`.
pub fn fractional_moment_sweep(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let basis = Arc::new(BasisEnumeration::new(
        config.region.clone(),
        config.policy,
    )?);
    let pair_indices = resolve_pairs(&basis, &config.pairs)?;

    let per_realization: Vec<(u64, Result<Vec<f64>>)> = run_pool(config.workers, || {
        (0..config.realizations as u64)
            .into_par_iter()
            .map(|i| (i, sweep_realization(&basis, config, &pair_indices, i)))
            .collect()
    })?;

    // deterministic fold in realization order
    let n_cells = pair_indices.len() * config.energies.len();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
    let mut failures = Vec::new();
    for (index, result) in per_realization {
        match result {
            Ok(cells) => {
                for (c, v) in cells.into_iter().enumerate() {
                    values[c].push(v);
                }
            }
            Err(e) => failures.push((index, e.to_string())),
        }
    }

    let mut rows = Vec::with_capacity(n_cells);
    let mut boot = SplitMix64::new(config.base_seed ^ 0x626f_6f74);
    for (p, _) in pair_indices.iter().enumerate() {
        for (zi, &z) in config.energies.iter().enumerate() {
            let cell = &values[p * config.energies.len() + zi];
            let n = cell.len();
            let mean = if n > 0 {
                cell.iter().sum::<f64>() / n as f64
            } else {
                f64::NAN
            };
            let std_err = bootstrap_stderr_of_mean(cell, &mut boot);
            rows.push(SweepRow {
                pair: p,
                z,
                mean,
                std_err,
                n,
            });
        }
    }

    Ok(SweepTable {
        pair_indices,
        energies: config.energies.clone(),
        s: config.s,
        rows,
        values,
        failures,
    })
}

fn bootstrap_stderr_of_mean(cell: &[f64], rng: &mut SplitMix64) -> f64 {
    let n = cell.len();
    if n < 2 {
        return f64::NAN;
    }
    let resamples = crate::fit::BOOTSTRAP_RESAMPLES;
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += cell[rng.next_below(n)];
        }
        means.push(acc / n as f64);
    }
    let grand = means.iter().sum::<f64>() / resamples as f64;
    (means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// Conditional tail experiment: freeze one disorder realization, redraw the
/// potential at the pair's two sites, and trace the survival function of
/// `|G|`.
#[derive(Debug, Clone)]
pub struct TailConfig {
    pub region: Arc<LatticeRegion>,
    pub params: ModelParams,
    pub policy: TruncationPolicy,
    pub pair: (BasisState, BasisState),
    pub z: Complex64,
    pub samples: u32,
    pub base_seed: u64,
    /// Thresholds for the survival curve, ascending.
    pub thresholds: Vec<f64>,
}

/// Log-spaced thresholds `10^lo ..= 10^hi`.
pub fn log_thresholds(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1).max(1) as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TailReport {
    /// `(t, empirical P[|G| > t])` over the threshold grid.
    pub survival: Vec<(f64, f64)>,
    /// Log-log slope of the survival curve over thresholds with nonzero
    /// survival.
    pub loglog_slope: f64,
    /// `max_t t * P[|G| > t]`, the weak-type envelope constant.
    pub envelope: f64,
    pub samples: u32,
    /// The conditional `|G|` draws behind the curve.
    pub abs_g: Vec<f64>,
}

impl TailReport {
    /// Empirical conditional fractional moment `E|G|^s` on the same draws;
    /// the weak-type envelope bounds it by `envelope^s / (1 - s)`.
    pub fn fractional_moment(&self, s: f64) -> f64 {
        self.abs_g.iter().map(|g| g.powf(s)).sum::<f64>() / self.abs_g.len() as f64
    }
}

pub fn tail_test(config: &TailConfig) -> Result<TailReport> {
    config.params.validate()?;
    if config.samples == 0 || config.thresholds.is_empty() {
        return Err(Error::InvalidParameter(
            "tail test needs samples and thresholds".into(),
        ));
    }
    let basis = Arc::new(BasisEnumeration::new(config.region.clone(), config.policy)?);
    let a = basis
        .index_of(&config.pair.0)
        .ok_or_else(|| Error::InvalidParameter("tail pair state not in basis".into()))?;
    let b = basis
        .index_of(&config.pair.1)
        .ok_or_else(|| Error::InvalidParameter("tail pair state not in basis".into()))?;
    let (x, y) = (config.pair.0.site, config.pair.1.site);

    let frozen = sample_disorder(&config.region, &config.params, config.base_seed, 0)?;
    let mut abs_g = Vec::with_capacity(config.samples as usize);
    for j in 0..config.samples as u64 {
        let mut disorder = frozen.with_value(x, resample_site(&config.params, x, config.base_seed, j));
        if y != x {
            disorder = disorder.with_value(y, resample_site(&config.params, y, config.base_seed, j));
        }
        let h = assemble(&basis, &config.params, &disorder, &SubspaceSelector::Full)?;
        let solver = ResolventSolver::new(&h, config.z)?;
        match solver.column(h.local_of_global(b).unwrap()) {
            Ok(u) => abs_g.push(u[h.local_of_global(a).unwrap()].norm()),
            // a conditional draw can land arbitrarily close to a pole at
            // real z; treat the value as effectively infinite
            Err(Error::SingularShift { .. }) => abs_g.push(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }

    let n = abs_g.len() as f64;
    let survival: Vec<(f64, f64)> = config
        .thresholds
        .iter()
        .map(|&t| (t, abs_g.iter().filter(|&&g| g > t).count() as f64 / n))
        .collect();
    let loglog: Vec<(f64, f64)> = survival
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(t, p)| (t.ln(), p.ln()))
        .collect();
    let loglog_slope = if loglog.len() >= 2 {
        crate::fit::least_squares(&loglog).0
    } else {
        f64::NAN
    };
    let envelope = survival
        .iter()
        .map(|&(t, p)| t * p)
        .fold(0.0f64, f64::max);

    Ok(TailReport {
        survival,
        loglog_slope,
        envelope,
        samples: config.samples,
        abs_g,
    })
}

/// Fractional-moment estimates across a grid of powers on shared
/// realizations, with the consistency checks they must satisfy.
#[derive(Debug, Clone)]
pub struct AllForOneReport {
    /// `(s, empirical E|G|^s)`.
    pub estimates: Vec<(f64, f64)>,
    /// Empirical means are log-convex in `s` (they must be, exactly).
    pub log_convex: bool,
    /// `max_s (1 - s) E|G|^s` over the top quarter of the grid.
    pub kappa_envelope: f64,
    /// Largest relative spread of `(1 - s) E|G|^s` over that range.
    pub envelope_spread: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn allforone_check(
    region: &Arc<LatticeRegion>,
    params: &ModelParams,
    policy: TruncationPolicy,
    pair: (BasisState, BasisState),
    z: Complex64,
    s_grid: &[f64],
    realizations: u32,
    base_seed: u64,
) -> Result<AllForOneReport> {
    params.validate()?;
    if s_grid.iter().any(|&s| !(0.0 < s && s < 1.0)) {
        return Err(Error::InvalidParameter(
            "all powers must lie in (0, 1)".into(),
        ));
    }
    let basis = Arc::new(BasisEnumeration::new(region.clone(), policy)?);
    let a = basis
        .index_of(&pair.0)
        .ok_or_else(|| Error::InvalidParameter("pair state not in basis".into()))?;
    let b = basis
        .index_of(&pair.1)
        .ok_or_else(|| Error::InvalidParameter("pair state not in basis".into()))?;

    let mut abs_g = Vec::with_capacity(realizations as usize);
    for i in 0..realizations as u64 {
        let disorder = sample_disorder(region, params, base_seed, i)?;
        let h = assemble(&basis, params, &disorder, &SubspaceSelector::Full)?;
        let solver = ResolventSolver::new(&h, z)?;
        let u = solver.column(h.local_of_global(b).unwrap())?;
        abs_g.push(u[h.local_of_global(a).unwrap()].norm());
    }

    let estimates: Vec<(f64, f64)> = s_grid
        .iter()
        .map(|&s| {
            (
                s,
                abs_g.iter().map(|g| g.powf(s)).sum::<f64>() / abs_g.len() as f64,
            )
        })
        .collect();

    let mut log_convex = true;
    for w in estimates.windows(3) {
        let [(s1, m1), (s2, m2), (s3, m3)] = [w[0], w[1], w[2]];
        let lam = (s2 - s1) / (s3 - s1);
        let interp = (1.0 - lam) * m1.ln() + lam * m3.ln();
        if m2.ln() > interp + 1e-9 {
            log_convex = false;
        }
    }

    let tail_start = estimates.len().saturating_sub(estimates.len() / 4 + 1);
    let tail = &estimates[tail_start..];
    let scaled: Vec<f64> = tail.iter().map(|&(s, m)| (1.0 - s) * m).collect();
    let kappa_envelope = scaled.iter().copied().fold(0.0f64, f64::max);
    let min_scaled = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let envelope_spread = if kappa_envelope > 0.0 {
        (kappa_envelope - min_scaled) / kappa_envelope
    } else {
        0.0
    };

    Ok(AllForOneReport {
        estimates,
        log_convex,
        kappa_envelope,
        envelope_spread,
    })
}

/// Disorder-averaged eigenfunction correlators with the envelope check
/// against sampled time evolution.
#[derive(Debug, Clone)]
pub struct CorrelatorSweepConfig {
    pub region: Arc<LatticeRegion>,
    pub params: ModelParams,
    pub policy: TruncationPolicy,
    pub pairs: Vec<(BasisState, BasisState)>,
    pub band_k: u32,
    pub realizations: u32,
    pub base_seed: u64,
    pub workers: usize,
    pub times: Vec<f64>,
    pub dense_limit: usize,
}

#[derive(Debug, Clone)]
pub struct CorrelatorSweepResult {
    /// Disorder-averaged correlator per pair.
    pub mean_q: Vec<f64>,
    /// Per-realization correlator samples, pair-major.
    pub q_values: Vec<Vec<f64>>,
    /// Sampled amplitudes found above their correlator bound (must be 0).
    pub violations: u64,
    /// Mean top-shell weight of window eigenvectors across realizations;
    /// above ~1e-6 the window leans on the truncation boundary.
    pub top_shell_weight: f64,
    /// Decay fit of the averaged correlator against particle distance.
    pub fit: Result<DecayFit>,
    pub failures: Vec<(u64, String)>,
}

pub fn correlator_sweep(config: &CorrelatorSweepConfig) -> Result<CorrelatorSweepResult> {
    config.params.validate()?;
    if config.realizations == 0 || config.pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "correlator sweep needs pairs and realizations".into(),
        ));
    }
    let basis = Arc::new(BasisEnumeration::new(config.region.clone(), config.policy)?);
    let pair_indices = resolve_pairs(&basis, &config.pairs)?;
    let window = config.params.window(config.band_k);

    type RealOut = (Vec<f64>, u64, f64);
    let per_realization: Vec<(u64, Result<RealOut>)> = run_pool(config.workers, || {
        (0..config.realizations as u64)
            .into_par_iter()
            .map(|i| -> (u64, Result<RealOut>) {
                let run = || -> Result<RealOut> {
                    let disorder =
                        sample_disorder(&config.region, &config.params, config.base_seed, i)?;
                    let h = assemble(&basis, &config.params, &disorder, &SubspaceSelector::Full)?;
                    let eig = Eigensystem::from_matrix(&h, config.dense_limit)?;
                    let mut qs = Vec::with_capacity(pair_indices.len());
                    let mut violations = 0u64;
                    for &(a, b) in &pair_indices {
                        let q = eigenfunction_correlator(&eig, a, b, window)?.value;
                        let (grid_max, q_bound) =
                            dynamical_amplitude(&eig, a, b, window.1, &config.times)?;
                        if grid_max > q_bound + 1e-10 {
                            violations += 1;
                        }
                        qs.push(q);
                    }
                    let top = crate::correlator::shell_window_weight(
                        &eig,
                        &basis,
                        config.policy.max_total,
                        window,
                    );
                    Ok((qs, violations, top))
                };
                (i, run())
            })
            .collect()
    })?;

    let mut q_values: Vec<Vec<f64>> = vec![Vec::new(); pair_indices.len()];
    let mut violations = 0u64;
    let mut failures = Vec::new();
    let mut top_sum = 0.0;
    let mut top_count = 0usize;
    for (index, result) in per_realization {
        match result {
            Ok((qs, v, top)) => {
                violations += v;
                top_sum += top;
                top_count += 1;
                for (p, q) in qs.into_iter().enumerate() {
                    q_values[p].push(q);
                }
            }
            Err(e) => failures.push((index, e.to_string())),
        }
    }
    let top_shell_weight = if top_count > 0 {
        top_sum / top_count as f64
    } else {
        0.0
    };
    let mean_q: Vec<f64> = q_values
        .iter()
        .map(|qs| {
            if qs.is_empty() {
                f64::NAN
            } else {
                qs.iter().sum::<f64>() / qs.len() as f64
            }
        })
        .collect();

    let region = basis.region();
    let points: Vec<DecayPoint> = pair_indices
        .iter()
        .zip(&q_values)
        .map(|(&(a, b), values)| {
            let d = region
                .distance(basis.site_of(a), basis.site_of(b))
                .ok_or(Error::Unreachable)?;
            Ok(DecayPoint {
                distance: d as f64,
                values: values.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let fit = decay_fit(&points, DistanceKind::Hop, config.base_seed ^ 0x0005_1f17);

    Ok(CorrelatorSweepResult {
        mean_q,
        q_values,
        violations,
        top_shell_weight,
        fit,
        failures,
    })
}

/// Probe records for external emission: the metric family evaluated on a
/// pair alongside the Green's-function value.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub pair_id: usize,
    pub upsilon: u32,
    pub shell_collapsed_r: f64,
    pub walk: u32,
    pub fock_r: f64,
    pub d: f64,
    pub hop: u32,
    pub re_g: f64,
    pub im_g: f64,
    pub abs_g: f64,
}

/// Evaluate the full metric family and a Green's-function element for a
/// list of pairs, sharing one factorization.
pub fn probe_records(
    matrix: &OperatorMatrix,
    z: Complex64,
    pair_indices: &[(usize, usize)],
    shell_k: u32,
) -> Result<Vec<ProbeRecord>> {
    let basis = matrix.basis().clone();
    let region = basis.region().clone();
    let solver = ResolventSolver::new(matrix, z)?;
    let mut out = Vec::with_capacity(pair_indices.len());
    let mut cache: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for (id, &(a, b)) in pair_indices.iter().enumerate() {
        let g = match (matrix.local_of_global(a), matrix.local_of_global(b)) {
            (Some(la), Some(lb)) => {
                let u = match cache.iter().find(|(col, _)| *col == lb) {
                    Some((_, u)) => u.clone(),
                    None => {
                        let u = solver.column(lb)?;
                        cache.push((lb, u.clone()));
                        u
                    }
                };
                u[la]
            }
            _ => Complex64::new(0.0, 0.0),
        };
        let sa = basis.state(a);
        let sb = basis.state(b);
        out.push(ProbeRecord {
            pair_id: id,
            upsilon: metrics::upsilon(&region, sa.site, &sa.config, sb.site, &sb.config)?,
            shell_collapsed_r: metrics::shell_collapsed_r(&region, &sa.config, &sb.config, shell_k)?,
            walk: metrics::walk_metric(&region, sa.site, &sa.config, sb.site, &sb.config)?,
            fock_r: metrics::r_metric(&sa.config, &sb.config),
            d: metrics::d_metric(&region, sa.site, &sa.config, sb.site, &sb.config)?,
            hop: region.distance(sa.site, sb.site).ok_or(Error::Unreachable)?,
            re_g: g.re,
            im_g: g.im,
            abs_g: g.norm(),
        });
    }
    Ok(out)
}
