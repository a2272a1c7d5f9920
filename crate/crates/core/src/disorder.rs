//! Site disorder: bounded densities on `[0, V+]` sampled through a
//! counter-based generator, so a sample is a pure function of
//! `(seed, realization, site)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeRegion, SiteId};
use crate::params::ModelParams;
use crate::rng::keyed_unit;

/// Bounded density for the on-site potential, supported on `[0, V+]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityKind {
    #[default]
    Uniform,
    /// Beta(a, b) rescaled to `[0, V+]`; `a, b >= 1` keeps the density
    /// bounded. Sampled by inverse transform on a tabulated CDF.
    TruncatedBeta { a: f64, b: f64 },
}

impl DensityKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            DensityKind::Uniform => Ok(()),
            DensityKind::TruncatedBeta { a, b } => {
                if *a >= 1.0 && *b >= 1.0 && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "truncated beta needs a, b >= 1 for a bounded density, got a={a}, b={b}"
                    )))
                }
            }
        }
    }
}

/// Inverse-CDF table for a density on `[0, 1]`; identity for the uniform law.
struct InverseCdf {
    grid: Vec<f64>,
}

const CDF_POINTS: usize = 2048;

impl InverseCdf {
    fn build(density: &DensityKind) -> Option<Self> {
        let (a, b) = match density {
            DensityKind::Uniform => return None,
            DensityKind::TruncatedBeta { a, b } => (*a, *b),
        };
        let pdf = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
        // cumulative trapezoid on a fine grid, then normalize
        let n = CDF_POINTS;
        let h = 1.0 / n as f64;
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        let mut prev = pdf(0.0);
        for i in 1..=n {
            let t = i as f64 * h;
            let cur = pdf(t.min(1.0));
            acc += 0.5 * (prev + cur) * h;
            cdf.push(acc);
            prev = cur;
        }
        let total = *cdf.last().unwrap();
        for c in &mut cdf {
            *c /= total;
        }
        Some(Self { grid: cdf })
    }

    fn invert(&self, u: f64) -> f64 {
        let cdf = &self.grid;
        let pos = cdf.partition_point(|&c| c < u);
        if pos == 0 {
            return 0.0;
        }
        if pos >= cdf.len() {
            return 1.0;
        }
        let (c0, c1) = (cdf[pos - 1], cdf[pos]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        ((pos - 1) as f64 + frac) / (cdf.len() - 1) as f64
    }
}

/// One realization of the potential `{v_x}`, reproducible from
/// `(seed, realization)`.
#[derive(Debug, Clone)]
pub struct DisorderSample {
    values: Vec<f64>,
    pub seed: u64,
    pub realization: u64,
}

impl DisorderSample {
    pub fn value(&self, site: SiteId) -> f64 {
        self.values[site.0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with the potential at `site` replaced; used by conditional
    /// resampling experiments.
    pub fn with_value(&self, site: SiteId, value: f64) -> Self {
        let mut out = self.clone();
        out.values[site.0] = value;
        out
    }
}

/// Draw iid potentials for every site of the region.
pub fn sample_disorder(
    region: &LatticeRegion,
    params: &ModelParams,
    seed: u64,
    realization: u64,
) -> Result<DisorderSample> {
    params.validate()?;
    let inverse = InverseCdf::build(&params.density);
    let values = region
        .site_ids()
        .map(|site| {
            let u = keyed_unit(seed, realization, site.0 as u64);
            let unit = match &inverse {
                None => u,
                Some(table) => table.invert(u),
            };
            params.v_plus * unit
        })
        .collect();
    Ok(DisorderSample {
        values,
        seed,
        realization,
    })
}

/// Single conditional redraw of the potential at one site, stream-separated
/// from the whole-region draws.
pub fn resample_site(
    params: &ModelParams,
    site: SiteId,
    seed: u64,
    attempt: u64,
) -> f64 {
    let inverse = InverseCdf::build(&params.density);
    let u = keyed_unit(seed, 0x5172_0000 ^ site.0 as u64, attempt);
    let unit = match &inverse {
        None => u,
        Some(table) => table.invert(u),
    };
    params.v_plus * unit
}
