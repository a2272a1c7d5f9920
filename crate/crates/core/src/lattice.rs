//! Finite regions of Z^D with open boundaries: graph distance, balls,
//! boundaries and interiors.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a site inside one region's ordering. Only meaningful together
/// with the region that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId(pub usize);

/// A finite subset of Z^D with nearest-neighbour adjacency restricted to the
/// subset. Immutable after construction; all-pairs graph distances are
/// precomputed so metric evaluations are table lookups.
#[derive(Debug, Clone)]
pub struct LatticeRegion {
    dimension: usize,
    sites: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, SiteId>,
    neighbors: Vec<Vec<SiteId>>,
    // row-major |sites| x |sites|, u32::MAX marks unreachable
    dist: Vec<u32>,
}

const UNREACHABLE: u32 = u32::MAX;

impl LatticeRegion {
    /// Region from an explicit site list. Sites are deduplicated and stored
    /// in coordinate-lexicographic order, which fixes `SiteId` assignment.
    pub fn from_sites(dimension: usize, sites: impl IntoIterator<Item = Vec<i64>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let mut sites: Vec<Vec<i64>> = sites.into_iter().collect();
        for s in &sites {
            if s.len() != dimension {
                return Err(Error::InvalidParameter(format!(
                    "site {s:?} has {} coordinates, expected {dimension}",
                    s.len()
                )));
            }
        }
        sites.sort();
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::EmptyRegion);
        }

        let index: HashMap<Vec<i64>, SiteId> = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), SiteId(i)))
            .collect();

        let mut neighbors = vec![Vec::new(); sites.len()];
        for (i, s) in sites.iter().enumerate() {
            let mut probe = s.clone();
            for d in 0..dimension {
                for step in [-1i64, 1] {
                    probe[d] += step;
                    if let Some(&j) = index.get(&probe) {
                        neighbors[i].push(j);
                    }
                    probe[d] -= step;
                }
            }
            neighbors[i].sort();
        }

        let mut region = Self {
            dimension,
            sites,
            index,
            neighbors,
            dist: Vec::new(),
        };
        region.dist = region.all_pairs_distances();
        Ok(region)
    }

    /// Full box `{0..extent_1-1} x ... x {0..extent_D-1}` minus the excluded
    /// sites.
    pub fn boxed(extents: &[usize], exclude: &[Vec<i64>]) -> Result<Self> {
        if extents.is_empty() || extents.contains(&0) {
            return Err(Error::InvalidParameter(
                "box extents must be positive".into(),
            ));
        }
        let dimension = extents.len();
        let mut sites = Vec::new();
        let mut cursor = vec![0i64; dimension];
        'outer: loop {
            if !exclude.contains(&cursor) {
                sites.push(cursor.clone());
            }
            for d in (0..dimension).rev() {
                cursor[d] += 1;
                if (cursor[d] as usize) < extents[d] {
                    continue 'outer;
                }
                cursor[d] = 0;
            }
            break;
        }
        Self::from_sites(dimension, sites)
    }

    /// 1D chain of `len` sites at coordinates `0..len-1`.
    pub fn chain(len: usize) -> Result<Self> {
        Self::boxed(&[len], &[])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site_ids(&self) -> impl Iterator<Item = SiteId> + '_ {
        (0..self.sites.len()).map(SiteId)
    }

    pub fn coords(&self, id: SiteId) -> &[i64] {
        &self.sites[id.0]
    }

    pub fn site_id(&self, coords: &[i64]) -> Result<SiteId> {
        self.index
            .get(coords)
            .copied()
            .ok_or_else(|| Error::SiteOutsideRegion(coords.to_vec()))
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        self.index.contains_key(coords)
    }

    pub fn neighbors(&self, id: SiteId) -> &[SiteId] {
        &self.neighbors[id.0]
    }

    fn bfs_from(&self, source: usize, out: &mut [u32]) {
        out.fill(UNREACHABLE);
        out[source] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = out[u];
            for &SiteId(v) in &self.neighbors[u] {
                if out[v] == UNREACHABLE {
                    out[v] = du + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    fn all_pairs_distances(&self) -> Vec<u32> {
        let n = self.sites.len();
        let mut table = vec![UNREACHABLE; n * n];
        for s in 0..n {
            let (head, row) = table.split_at_mut(s * n);
            let _ = head;
            self.bfs_from(s, &mut row[..n]);
        }
        table
    }

    /// In-region shortest-path length, `None` when the sites lie in different
    /// connected components.
    pub fn distance(&self, a: SiteId, b: SiteId) -> Option<u32> {
        let d = self.dist[a.0 * self.sites.len() + b.0];
        (d != UNREACHABLE).then_some(d)
    }

    /// Coordinate-level distance: `SiteOutsideRegion` for bad inputs,
    /// `Unreachable` for disconnected components.
    pub fn graph_distance(&self, x: &[i64], y: &[i64]) -> Result<u32> {
        let a = self.site_id(x)?;
        let b = self.site_id(y)?;
        self.distance(a, b).ok_or(Error::Unreachable)
    }

    /// All sites within graph distance `radius` of `center`.
    pub fn ball(&self, center: SiteId, radius: u32) -> Vec<SiteId> {
        if center.0 >= self.sites.len() {
            return Vec::new();
        }
        let n = self.sites.len();
        let row = &self.dist[center.0 * n..(center.0 + 1) * n];
        (0..n)
            .filter(|&i| row[i] != UNREACHABLE && row[i] <= radius)
            .map(SiteId)
            .collect()
    }

    pub fn ball_coords(&self, center: &[i64], radius: u32) -> Result<Vec<Vec<i64>>> {
        let id = self.site_id(center)?;
        Ok(self
            .ball(id, radius)
            .into_iter()
            .map(|s| self.coords(s).to_vec())
            .collect())
    }

    /// Sites of `gamma` that have a neighbour in the region outside `gamma`.
    pub fn boundary(&self, gamma: &[SiteId]) -> Result<Vec<SiteId>> {
        let mut inside = vec![false; self.sites.len()];
        for &SiteId(i) in gamma {
            if i >= self.sites.len() {
                return Err(Error::SubsetOutsideRegion);
            }
            inside[i] = true;
        }
        let mut out: Vec<SiteId> = gamma
            .iter()
            .copied()
            .filter(|&s| self.neighbors(s).iter().any(|&SiteId(v)| !inside[v]))
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// `gamma` minus its boundary.
    pub fn interior(&self, gamma: &[SiteId]) -> Result<Vec<SiteId>> {
        let boundary = self.boundary(gamma)?;
        let mut on_boundary = vec![false; self.sites.len()];
        for &SiteId(i) in &boundary {
            on_boundary[i] = true;
        }
        let mut out: Vec<SiteId> = gamma
            .iter()
            .copied()
            .filter(|&SiteId(i)| !on_boundary[i])
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }
}
