//! Oscillator configurations and the truncated basis enumeration of
//! particle-plus-field states `|x, m>`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{LatticeRegion, SiteId};

/// Sparse excitation-count map `m: sites -> N` with its cached total.
/// Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct OscillatorConfig {
    counts: BTreeMap<SiteId, u32>,
    total: u32,
}

impl OscillatorConfig {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (SiteId, u32)>) -> Self {
        let mut map = BTreeMap::new();
        let mut total = 0u32;
        for (site, c) in counts {
            if c > 0 {
                total += c;
                *map.entry(site).or_insert(0) += c;
            }
        }
        Self { counts: map, total }
    }

    /// Single excitation cluster of height `count` at one site.
    pub fn delta(site: SiteId, count: u32) -> Self {
        Self::from_counts([(site, count)])
    }

    pub fn count_at(&self, site: SiteId) -> u32 {
        self.counts.get(&site).copied().unwrap_or(0)
    }

    /// Total excitation number `N(m)`.
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn support(&self) -> impl Iterator<Item = (SiteId, u32)> + '_ {
        self.counts.iter().map(|(&s, &c)| (s, c))
    }

    pub fn is_vacuum(&self) -> bool {
        self.total == 0
    }

    /// Copy with the count at `site` replaced (0 removes the entry).
    pub fn with_count(&self, site: SiteId, count: u32) -> Self {
        let mut counts = self.counts.clone();
        let old = counts.remove(&site).unwrap_or(0);
        if count > 0 {
            counts.insert(site, count);
        }
        Self {
            total: self.total - old + count,
            counts,
        }
    }

    /// Sites where `self` and `other` disagree.
    pub fn disagreement_sites(&self, other: &Self) -> Vec<SiteId> {
        let mut out = Vec::new();
        for &s in self.counts.keys() {
            if self.count_at(s) != other.count_at(s) {
                out.push(s);
            }
        }
        for &s in other.counts.keys() {
            if self.count_at(s) != other.count_at(s) && !out.contains(&s) {
                out.push(s);
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for OscillatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.counts.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .counts
            .iter()
            .map(|(s, c)| format!("{}:{}", s.0, c))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// One basis vector `|x, m>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    pub site: SiteId,
    pub config: OscillatorConfig,
}

impl BasisState {
    pub fn new(site: SiteId, config: OscillatorConfig) -> Self {
        Self { site, config }
    }

    pub fn ground(site: SiteId) -> Self {
        Self::new(site, OscillatorConfig::vacuum())
    }
}

/// Finite-basis truncation: keep configurations with `N(m) <= max_total`,
/// optionally also capping every single site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationPolicy {
    pub max_total: u32,
    pub per_site_cap: Option<u32>,
    /// Construction refuses basis sets larger than this.
    pub max_states: usize,
}

impl TruncationPolicy {
    pub fn new(max_total: u32) -> Self {
        Self {
            max_total,
            per_site_cap: None,
            max_states: 2_000_000,
        }
    }

    pub fn with_per_site_cap(mut self, cap: u32) -> Self {
        self.per_site_cap = Some(cap);
        self
    }
}

/// Ordered, indexed enumeration of all `|x, m>` under a truncation policy.
///
/// The order is site-lexicographic, then configuration-lexicographic on the
/// dense count vector, so matrix layouts are identical across runs. States
/// factorize as `index = site_index * configs_per_site + config_index`.
#[derive(Debug)]
pub struct BasisEnumeration {
    region: Arc<LatticeRegion>,
    policy: TruncationPolicy,
    configs: Vec<OscillatorConfig>,
    config_index: HashMap<OscillatorConfig, usize>,
    /// Positions grouped by shell `N(m) = k`, k = 0..=max_total.
    shells: Vec<Vec<usize>>,
}

impl BasisEnumeration {
    pub fn new(region: Arc<LatticeRegion>, policy: TruncationPolicy) -> Result<Self> {
        let n_sites = region.len();
        if n_sites == 0 {
            return Err(Error::EmptyRegion);
        }
        let per_site = policy.per_site_cap.unwrap_or(policy.max_total);

        let mut configs = Vec::new();
        let mut dense = vec![0u32; n_sites];
        enumerate_lex(&mut dense, 0, policy.max_total, per_site, &mut configs);

        let count = n_sites
            .checked_mul(configs.len())
            .ok_or(Error::BasisTooLarge {
                count: usize::MAX,
                cap: policy.max_states,
            })?;
        if count > policy.max_states {
            return Err(Error::BasisTooLarge {
                count,
                cap: policy.max_states,
            });
        }

        let config_index: HashMap<OscillatorConfig, usize> = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();

        let mut shells = vec![Vec::new(); policy.max_total as usize + 1];
        for site in 0..n_sites {
            for (ci, config) in configs.iter().enumerate() {
                shells[config.total() as usize].push(site * configs.len() + ci);
            }
        }

        Ok(Self {
            region,
            policy,
            configs,
            config_index,
            shells,
        })
    }

    pub fn region(&self) -> &Arc<LatticeRegion> {
        &self.region
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.region.len() * self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs_per_site(&self) -> usize {
        self.configs.len()
    }

    pub fn state(&self, index: usize) -> BasisState {
        let (site, ci) = (index / self.configs.len(), index % self.configs.len());
        BasisState::new(SiteId(site), self.configs[ci].clone())
    }

    pub fn site_of(&self, index: usize) -> SiteId {
        SiteId(index / self.configs.len())
    }

    pub fn config_of(&self, index: usize) -> &OscillatorConfig {
        &self.configs[index % self.configs.len()]
    }

    pub fn shell_of(&self, index: usize) -> u32 {
        self.config_of(index).total()
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        if state.site.0 >= self.region.len() {
            return None;
        }
        self.config_index
            .get(&state.config)
            .map(|ci| state.site.0 * self.configs.len() + ci)
    }

    /// Positions of all states in shell `k`.
    pub fn shell(&self, k: u32) -> &[usize] {
        static EMPTY: Vec<usize> = Vec::new();
        self.shells.get(k as usize).unwrap_or(&EMPTY)
    }

    pub fn states(&self) -> impl Iterator<Item = BasisState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    /// Text dump, one `index TAB site-coords TAB shell TAB config` per line.
    pub fn dump(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for i in 0..self.len() {
            let state = self.state(i);
            writeln!(
                w,
                "{i}\t{:?}\t{}\t{}",
                self.region.coords(state.site),
                state.config.total(),
                state.config
            )?;
        }
        Ok(())
    }
}

fn enumerate_lex(
    dense: &mut Vec<u32>,
    site: usize,
    budget: u32,
    per_site: u32,
    out: &mut Vec<OscillatorConfig>,
) {
    if site == dense.len() {
        out.push(OscillatorConfig::from_counts(
            dense
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (SiteId(i), c)),
        ));
        return;
    }
    for c in 0..=budget.min(per_site) {
        dense[site] = c;
        enumerate_lex(dense, site + 1, budget - c, per_site, out);
    }
    dense[site] = 0;
}
