//! Spectral correlators from dense eigensystems: the eigenfunction
//! correlator over an energy window and the time-evolved amplitudes it
//! bounds.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::OperatorMatrix;

/// Relative eigenvalue-clustering tolerance; disorder makes exact
/// degeneracy measure-zero, but numerics still need grouping.
pub const CLUSTER_REL_TOL: f64 = 1e-8;

/// Dense eigensystem of a (possibly restricted) operator, with eigenvalues
/// grouped into degeneracy clusters.
pub struct Eigensystem {
    global_indices: Vec<usize>,
    values: Vec<f64>,
    vectors: faer::Mat<Complex64>,
    /// Half-open index ranges `[start, end)` of each cluster.
    clusters: Vec<(usize, usize)>,
}

impl Eigensystem {
    pub fn from_matrix(matrix: &OperatorMatrix, dense_limit: usize) -> Result<Self> {
        let spectrum = matrix.spectrum(dense_limit, true)?;
        let values = spectrum.values;
        let vectors = spectrum.vectors.expect("vectors requested");
        let scale = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let tol = CLUSTER_REL_TOL * scale.max(1e-300);
        let mut clusters = Vec::new();
        let mut start = 0usize;
        for i in 1..=values.len() {
            if i == values.len() || values[i] - values[i - 1] > tol {
                clusters.push((start, i));
                start = i;
            }
        }
        Ok(Self {
            global_indices: matrix.global_indices().to_vec(),
            values,
            vectors,
            clusters,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn clusters(&self) -> &[(usize, usize)] {
        &self.clusters
    }

    fn local_of_global(&self, global: usize) -> Option<usize> {
        self.global_indices.binary_search(&global).ok()
    }

    fn cluster_mean(&self, cluster: (usize, usize)) -> f64 {
        let (s, e) = cluster;
        self.values[s..e].iter().sum::<f64>() / (e - s) as f64
    }

    /// `<a|P_cluster|b>` summed over the cluster's eigenvectors.
    fn cluster_element(&self, cluster: (usize, usize), a: usize, b: usize) -> Complex64 {
        let (s, e) = cluster;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in s..e {
            acc += self.vectors[(a, i)].conj() * self.vectors[(b, i)];
        }
        acc
    }
}

/// Eigenfunction correlator over a window: contributions and their sum.
#[derive(Debug, Clone)]
pub struct CorrelatorResult {
    /// `sum_clusters |<a|P_E|b>|` over clusters inside the window.
    pub value: f64,
    /// `(cluster mean eigenvalue, |<a|P_E|b>|)` per contributing cluster.
    pub contributions: Vec<(f64, f64)>,
    pub clusters_in_window: usize,
}

/// Sum of absolute spectral-projection elements over eigenvalue clusters
/// whose mean lies in the closed window `[lo, hi]`.
pub fn eigenfunction_correlator(
    eig: &Eigensystem,
    a: usize,
    b: usize,
    window: (f64, f64),
) -> Result<CorrelatorResult> {
    let (Some(la), Some(lb)) = (eig.local_of_global(a), eig.local_of_global(b)) else {
        return Err(Error::SelectorMismatch(
            "correlator states outside the eigensystem's subspace".into(),
        ));
    };
    let mut value = 0.0;
    let mut contributions = Vec::new();
    for &cluster in &eig.clusters {
        let mean = eig.cluster_mean(cluster);
        if mean < window.0 || mean > window.1 {
            continue;
        }
        let amp = eig.cluster_element(cluster, la, lb).norm();
        value += amp;
        contributions.push((mean, amp));
    }
    Ok(CorrelatorResult {
        value,
        clusters_in_window: contributions.len(),
        contributions,
    })
}

/// Time-evolved amplitude `|<a|e^{-itH} P|b>|` maximized over a sampled
/// time grid, next to the correlator value that rigorously bounds every
/// bounded spectral function on the window. `P` projects onto clusters
/// with mean inside `[0, e_cut)`.
pub fn dynamical_amplitude(
    eig: &Eigensystem,
    a: usize,
    b: usize,
    e_cut: f64,
    times: &[f64],
) -> Result<(f64, f64)> {
    let (Some(la), Some(lb)) = (eig.local_of_global(a), eig.local_of_global(b)) else {
        return Err(Error::SelectorMismatch(
            "amplitude states outside the eigensystem's subspace".into(),
        ));
    };
    let mut members: Vec<usize> = Vec::new();
    let mut q_bound = 0.0;
    for &cluster in &eig.clusters {
        let mean = eig.cluster_mean(cluster);
        if (0.0..e_cut).contains(&mean) {
            members.extend(cluster.0..cluster.1);
            q_bound += eig.cluster_element(cluster, la, lb).norm();
        }
    }
    let weights: Vec<(f64, Complex64)> = members
        .iter()
        .map(|&i| {
            (
                eig.values[i],
                eig.vectors[(la, i)].conj() * eig.vectors[(lb, i)],
            )
        })
        .collect();
    let mut grid_max = 0.0f64;
    for &t in times {
        let mut amp = Complex64::new(0.0, 0.0);
        for &(lambda, w) in &weights {
            amp += Complex64::from_polar(1.0, -t * lambda) * w;
        }
        grid_max = grid_max.max(amp.norm());
    }
    Ok((grid_max, q_bound))
}

/// Mean weight that eigenvectors with mean cluster energy inside the
/// window place on a given shell; the truncation-sensitivity diagnostic
/// for spectral experiments.
pub fn shell_window_weight(
    eig: &Eigensystem,
    basis: &crate::basis::BasisEnumeration,
    shell: u32,
    window: (f64, f64),
) -> f64 {
    let shell_rows: Vec<usize> = eig
        .global_indices
        .iter()
        .enumerate()
        .filter(|(_, &g)| basis.shell_of(g) == shell)
        .map(|(local, _)| local)
        .collect();
    let mut mass = 0.0;
    let mut count = 0usize;
    for &cluster in &eig.clusters {
        let mean = eig.cluster_mean(cluster);
        if mean < window.0 || mean > window.1 {
            continue;
        }
        for i in cluster.0..cluster.1 {
            count += 1;
            for &a in &shell_rows {
                mass += eig.vectors[(a, i)].norm_sqr();
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        mass / count as f64
    }
}

/// Evenly spaced sampling times `0..=t_max`.
pub fn time_grid(t_max: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| t_max * i as f64 / (count - 1) as f64)
        .collect()
}
