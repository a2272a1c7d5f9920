//! The exact-identity suite behind `holstein verify`: each check reports
//! its measured error against a tolerance, and any failure makes the whole
//! run fail.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use holstein_core::basis::BasisEnumeration;
use holstein_core::disorder::sample_disorder;
use holstein_core::hamiltonian::{assemble, hopping_remainder, SubspaceSelector};
use holstein_core::lattice::SiteId;
use holstein_core::metrics;
use holstein_core::oscillator::{weighted_square_sum, weighted_square_sum_closed};
use holstein_core::resolvent::verify_gri;
use holstein_core::rng::SplitMix64;

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub struct VerifyOutcome {
    pub checks: Vec<CheckReport>,
    pub all_passed: bool,
}

pub fn run_verify(
    config: &ExperimentConfig,
    tolerance_scale: f64,
    inject_sign_flip: bool,
) -> Result<VerifyOutcome, Box<dyn std::error::Error>> {
    let params = config.model_params();
    let region = config.build_region()?;
    let policy = config.truncation_policy();
    let basis = Arc::new(
        BasisEnumeration::new(region.clone(), policy)
            .map_err(|e| ConfigError(format!("basis: {e}")))?,
    );
    let beta = params.beta;
    let mut checks = Vec::new();
    let mut push = |name: &str, measured: f64, tolerance: f64| {
        checks.push(CheckReport {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        });
    };

    // displacement unitarity
    let mut unitarity = 0.0f64;
    for n in 0..=20u32 {
        unitarity = unitarity.max((weighted_square_sum(n, beta, 0.0)? - 1.0).abs());
    }
    push("displacement-unitarity", unitarity, 1e-10 * tolerance_scale);

    // weighted square-sum identity
    let mut identity = 0.0f64;
    for mu in [0.1, 0.3, 0.5] {
        for n in 0..=10u32 {
            let lhs = weighted_square_sum(n, beta, mu)?;
            let rhs = weighted_square_sum_closed(n, beta, mu);
            identity = identity.max((lhs - rhs).abs() / rhs.abs());
        }
    }
    push("weighted-square-sum-identity", identity, 1e-8 * tolerance_scale);

    // metric axioms on randomized triples: counted violations must be zero
    let mut rng = SplitMix64::new(config.seed ^ 0x7e11);
    let mut violations = 0u32;
    for _ in 0..1000 {
        let a = basis.state(rng.next_below(basis.len()));
        let b = basis.state(rng.next_below(basis.len()));
        let c = basis.state(rng.next_below(basis.len()));
        let uab = metrics::upsilon(&region, a.site, &a.config, b.site, &b.config)?;
        let uba = metrics::upsilon(&region, b.site, &b.config, a.site, &a.config)?;
        let uac = metrics::upsilon(&region, a.site, &a.config, c.site, &c.config)?;
        let ucb = metrics::upsilon(&region, c.site, &c.config, b.site, &b.config)?;
        let lab = metrics::walk_metric(&region, a.site, &a.config, b.site, &b.config)?;
        let lba = metrics::walk_metric(&region, b.site, &b.config, a.site, &a.config)?;
        if uab != uba || uab > uac + ucb || lab != lba || lab < uab {
            violations += 1;
        }
    }
    push("metric-axioms", violations as f64, 0.0);

    // assembly hermiticity
    let disorder = sample_disorder(&region, &params, config.seed, 0)?;
    let h_full = assemble(&basis, &params, &disorder, &SubspaceSelector::Full)?;
    push("assembly-hermiticity", h_full.hermiticity_defect(), 1e-12 * tolerance_scale);

    // resolvent block-decoupling identities
    let z = Complex64::new(0.25 * params.omega, 1e-3);
    let mid = SiteId(region.len() / 2);
    let split = SubspaceSelector::DirectSumPosition(region.ball(mid, 1));
    let h_split = assemble(&basis, &params, &disorder, &split)?;
    let t = hopping_remainder(&basis, &params, &split)?;
    let mut pairs = Vec::new();
    for _ in 0..10 {
        pairs.push((rng.next_below(basis.len()), rng.next_below(basis.len())));
    }
    let mut gri = 0.0f64;
    for r in verify_gri(&h_full, &h_split, &t, params.gamma, z, &pairs, 1e-10)? {
        gri = gri.max(r.direct).max(r.reversed);
    }
    push("resolvent-identities", gri, 1e-8 * tolerance_scale);

    // band containment over a handful of realizations; the sign-flip hook
    // replaces H by 2 H(0) - H, which pushes eigenvalues below the bands
    let bands: Vec<(f64, f64)> = (0..=policy.max_total).map(|k| params.band(k)).collect();
    let mut escape = 0.0f64;
    for realization in 0..5u64 {
        let d = sample_disorder(&region, &params, config.seed, realization)?;
        let h = assemble(&basis, &params, &d, &SubspaceSelector::Full)?;
        let h = if inject_sign_flip {
            let mut zeroed = params;
            zeroed.gamma = 0.0;
            let h0 = assemble(&basis, &zeroed, &d, &SubspaceSelector::Full)?;
            h0.add_scaled(&h0, Complex64::new(1.0, 0.0))?
                .add_scaled(&h, Complex64::new(-1.0, 0.0))?
        } else {
            h
        };
        for v in h.spectrum(6000, false)?.values {
            let out = bands
                .iter()
                .map(|&(lo, hi)| if v < lo { lo - v } else if v > hi { v - hi } else { 0.0 })
                .fold(f64::INFINITY, f64::min);
            escape = escape.max(out);
        }
    }
    push("band-containment", escape, 1e-9 * tolerance_scale);

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyOutcome { checks, all_passed })
}
