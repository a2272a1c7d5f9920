//! Green's-function evaluation and the exact-identity / gap-decay probes
//! built on it.
//!
//! Solver ladder: dense LU with iterative refinement up to `dense_limit`
//! (default 6000), sparse LU above. Shifted Hermitian-indefinite systems
//! near the spectrum are ill-suited to iterative solvers, so only direct
//! factorizations are used.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit;
use crate::hamiltonian::OperatorMatrix;
use crate::metrics;
use crate::params::ModelParams;

/// Default crossover from dense to sparse factorization.
pub const DEFAULT_DENSE_LIMIT: usize = 6000;
/// Default residual tolerance for resolvent solves, relative to the
/// right-hand side.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 4;

/// One resolvent query: matrix element `(row, col)` of `(H - z)^{-1}` in
/// global basis indices.
#[derive(Debug, Clone, Copy)]
pub struct GreenQuery {
    pub row: usize,
    pub col: usize,
    pub z: Complex64,
}

enum Factorization {
    Dense(Box<faer::linalg::solvers::PartialPivLu<Complex64>>),
    Sparse(Box<SparseLu>),
}

struct SparseLu {
    symbolic: faer::sparse::linalg::lu::SymbolicLu<usize>,
    numeric: faer::sparse::linalg::lu::NumericLu<usize, Complex64>,
}

/// A factorization of `H - z` over the matrix's selected subspace, reused
/// across right-hand sides.
pub struct ResolventSolver<'a> {
    matrix: &'a OperatorMatrix,
    z: Complex64,
    tol: f64,
    factorization: Factorization,
}

impl<'a> ResolventSolver<'a> {
    pub fn new(matrix: &'a OperatorMatrix, z: Complex64) -> Result<Self> {
        Self::with_options(matrix, z, DEFAULT_DENSE_LIMIT, DEFAULT_SOLVE_TOL)
    }

    pub fn with_options(
        matrix: &'a OperatorMatrix,
        z: Complex64,
        dense_limit: usize,
        tol: f64,
    ) -> Result<Self> {
        let n = matrix.dim();
        let factorization = if n <= dense_limit {
            let mut dense = matrix.to_dense();
            for i in 0..n {
                dense[(i, i)] -= z;
            }
            Factorization::Dense(Box::new(dense.partial_piv_lu()))
        } else {
            Factorization::Sparse(Box::new(SparseLu::factor(matrix, z)?))
        };
        Ok(Self {
            matrix,
            z,
            tol,
            factorization,
        })
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        self.matrix
    }

    /// `(H - z) v` over local indices; drives the residual control.
    fn apply_shifted(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (r, row) in self.matrix.rows().iter().enumerate() {
            let mut acc = -self.z * v[r];
            for &(c, h) in row {
                acc += h * v[c];
            }
            out[r] = acc;
        }
    }

    fn raw_solve(&self, rhs: &Mat<Complex64>) -> Mat<Complex64> {
        match &self.factorization {
            Factorization::Dense(lu) => lu.solve(rhs),
            Factorization::Sparse(lu) => lu.solve(rhs),
        }
    }

    /// Solve `(H - z) u = e_col` for a local column index.
    pub fn column(&self, col: usize) -> Result<Vec<Complex64>> {
        let n = self.matrix.dim();
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        b[col] = Complex64::new(1.0, 0.0);
        self.solve_vector(&b)
    }

    /// Solve with an arbitrary local right-hand side, refining until the
    /// residual drops below `tol * |b|`.
    pub fn solve_vector(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.matrix.dim();
        let bnorm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![Complex64::new(0.0, 0.0); n]);
        }
        let mut rhs = Mat::<Complex64>::zeros(n, 1);
        for i in 0..n {
            rhs[(i, 0)] = b[i];
        }
        let mut u = self.raw_solve(&rhs);
        let mut residual = vec![Complex64::new(0.0, 0.0); n];
        let mut residual_norm = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENTS {
            let uv: Vec<Complex64> = (0..n).map(|i| u[(i, 0)]).collect();
            self.apply_shifted(&uv, &mut residual);
            for i in 0..n {
                residual[i] -= b[i];
            }
            residual_norm = residual.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt();
            if residual_norm <= self.tol * bnorm {
                return Ok(uv);
            }
            let mut rmat = Mat::<Complex64>::zeros(n, 1);
            for i in 0..n {
                rmat[(i, 0)] = residual[i];
            }
            let correction = self.raw_solve(&rmat);
            for i in 0..n {
                u[(i, 0)] -= correction[(i, 0)];
            }
        }
        if self.z.im == 0.0 {
            return Err(Error::SingularShift {
                re: self.z.re,
                im: self.z.im,
            });
        }
        Err(Error::SolveNotConverged {
            residual: residual_norm,
            tol: self.tol * bnorm,
        })
    }
}

impl SparseLu {
    fn factor(matrix: &OperatorMatrix, z: Complex64) -> Result<Self> {
        use faer::dyn_stack::{MemBuffer, MemStack};
        use faer::sparse::linalg::lu as splu;
        use faer::sparse::{SparseColMat, Triplet};

        let n = matrix.dim();
        let mut triplets: Vec<Triplet<usize, usize, Complex64>> = Vec::new();
        for (r, row) in matrix.rows().iter().enumerate() {
            let mut saw_diag = false;
            for &(c, v) in row {
                if c == r {
                    saw_diag = true;
                    triplets.push(Triplet::new(r, c, v - z));
                } else {
                    triplets.push(Triplet::new(r, c, v));
                }
            }
            if !saw_diag {
                triplets.push(Triplet::new(r, r, -z));
            }
        }
        let mat = SparseColMat::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SelectorMismatch(format!("sparse assembly failed: {e:?}")))?;
        let symbolic = splu::factorize_symbolic_lu(mat.symbolic(), Default::default())
            .map_err(|_| Error::EigenFailed)?;
        let mut numeric = splu::NumericLu::new();
        symbolic
            .factorize_numeric_lu(
                &mut numeric,
                mat.as_ref(),
                faer::Par::Seq,
                MemStack::new(&mut MemBuffer::new(
                    symbolic
                        .factorize_numeric_lu_scratch::<Complex64>(faer::Par::Seq, Default::default()),
                )),
                Default::default(),
            )
            .map_err(|_| Error::EigenFailed)?;
        Ok(Self { symbolic, numeric })
    }

    fn solve(&self, rhs: &Mat<Complex64>) -> Mat<Complex64> {
        use faer::dyn_stack::{MemBuffer, MemStack};
        use faer::sparse::linalg::lu::LuRef;
        let mut x = rhs.clone();
        // `numeric` came out of `symbolic.factorize_numeric_lu`, which is
        // exactly the contract `new_unchecked` requires
        let lu = unsafe { LuRef::new_unchecked(&self.symbolic, &self.numeric) };
        lu.solve_in_place_with_conj(
            faer::Conj::No,
            x.as_mut(),
            faer::Par::Seq,
            MemStack::new(&mut MemBuffer::new(
                self.symbolic
                    .solve_in_place_scratch::<Complex64>(rhs.ncols(), faer::Par::Seq),
            )),
        );
        x
    }
}

/// `<row|(H - z)^{-1}|col>` in global indices; zero when either state falls
/// outside the matrix's subspace (resolvents of restrictions vanish off
/// their block).
pub fn greens_element(matrix: &OperatorMatrix, query: GreenQuery) -> Result<Complex64> {
    let (Some(row), Some(col)) = (
        matrix.local_of_global(query.row),
        matrix.local_of_global(query.col),
    ) else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let solver = ResolventSolver::new(matrix, query.z)?;
    Ok(solver.column(col)?[row])
}

/// Residuals of the two block-decoupling resolvent identities for one
/// split, evaluated on a probe pair.
#[derive(Debug, Clone)]
pub struct GriResidual {
    pub pair: (usize, usize),
    pub direct: f64,
    pub reversed: f64,
}

/// Check `G = G_split - gamma * R_split T R` and its reversed form on probe
/// pairs. `full` and `split` must cover the same index set; `remainder` is
/// the hopping the split dropped, with `gamma` factored out.
pub fn verify_gri(
    full: &OperatorMatrix,
    split: &OperatorMatrix,
    remainder: &OperatorMatrix,
    gamma: f64,
    z: Complex64,
    pairs: &[(usize, usize)],
    tol: f64,
) -> Result<Vec<GriResidual>> {
    if full.global_indices() != split.global_indices()
        || full.global_indices() != remainder.global_indices()
    {
        return Err(Error::SelectorMismatch(
            "identity check needs full, split and remainder over one index set".into(),
        ));
    }
    let n = full.dim();
    let solver_full = ResolventSolver::with_options(full, z, DEFAULT_DENSE_LIMIT, tol)?;
    let solver_split = ResolventSolver::with_options(split, z, DEFAULT_DENSE_LIMIT, tol)?;

    let apply_remainder = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (r, row) in remainder.rows().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(c, t) in row {
                acc += t * v[c];
            }
            out[r] = acc;
        }
        out
    };

    let mut out = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let (Some(la), Some(lb)) = (full.local_of_global(a), full.local_of_global(b)) else {
            return Err(Error::SelectorMismatch(
                "probe pair outside the enumeration".into(),
            ));
        };
        let u_full = solver_full.column(lb)?;
        let u_split = solver_split.column(lb)?;

        let v = solver_split.solve_vector(&apply_remainder(&u_full))?;
        let direct = (u_full[la] - u_split[la] + gamma * v[la]).norm();

        let w = solver_full.solve_vector(&apply_remainder(&u_split))?;
        let reversed = (u_full[la] - u_split[la] + gamma * w[la]).norm();

        out.push(GriResidual {
            pair: (a, b),
            direct,
            reversed,
        });
    }
    Ok(out)
}

/// Residual of the one-sided identity for `a` off shell `k` and `b` on
/// shell `k`: `G(a,b) = -gamma <a|(H_out - z)^{-1} T_k (H - z)^{-1}|b>`.
/// The two-block term drops out because the split leaves the on-shell
/// subspace invariant.
pub fn verify_gri_out_of_band(
    full: &OperatorMatrix,
    out_block: &OperatorMatrix,
    remainder_k: &OperatorMatrix,
    gamma: f64,
    z: Complex64,
    pairs: &[(usize, usize)],
    tol: f64,
) -> Result<Vec<(usize, usize, f64)>> {
    let solver_full = ResolventSolver::with_options(full, z, DEFAULT_DENSE_LIMIT, tol)?;
    let solver_out = ResolventSolver::with_options(out_block, z, DEFAULT_DENSE_LIMIT, tol)?;
    let n = full.dim();

    let mut out = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let la_out = out_block.local_of_global(a).ok_or_else(|| {
            Error::SelectorMismatch("first probe state must lie off the shell".into())
        })?;
        let lb = full
            .local_of_global(b)
            .ok_or_else(|| Error::SelectorMismatch("probe pair outside the enumeration".into()))?;
        let la = full.local_of_global(a).unwrap();

        let u_full = solver_full.column(lb)?;
        let mut t_u = vec![Complex64::new(0.0, 0.0); n];
        for (r, row) in remainder_k.rows().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(c, t) in row {
                acc += t * u_full[c];
            }
            t_u[r] = acc;
        }
        let rhs: Vec<Complex64> = out_block
            .global_indices()
            .iter()
            .map(|&g| t_u[full.local_of_global(g).unwrap()])
            .collect();
        let w = solver_out.solve_vector(&rhs)?;
        let residual = (u_full[la] + gamma * w[la_out]).norm();
        out.push((a, b, residual));
    }
    Ok(out)
}

/// One probed pair of a gap-decay experiment.
#[derive(Debug, Clone)]
pub struct CtPair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub abs_g: f64,
}

/// Output of a gap-decay probe at one energy.
#[derive(Debug, Clone)]
pub struct CtProbe {
    pub pairs: Vec<CtPair>,
    /// Exact distance from `z` to the restricted spectrum.
    pub dist_to_spectrum: f64,
    /// `1 / dist`, the exact resolvent norm of the Hermitian restriction.
    pub resolvent_norm: f64,
    /// The gap bound `2 / delta` the norm is checked against.
    pub norm_bound: f64,
    /// Decay rate fitted over `(d-distance, log |G|)` by least squares.
    pub fitted_rate: f64,
    /// Largest rate `nu` with `|G| <= (2/delta) e^{-nu d}` on every probed
    /// pair; positive whenever the gap envelope genuinely dominates.
    pub envelope_rate: f64,
}

/// Resolvent decay off the diagonal at an energy inside band `k`, for a
/// restriction whose selector avoids shell `k` entirely. The distance from
/// `z` to the restricted spectrum is computed exactly, so the `2/delta`
/// norm comparison is a genuine inequality test rather than an assumption.
pub fn combes_thomas_probe(
    h_restricted: &OperatorMatrix,
    params: &ModelParams,
    k: u32,
    z: Complex64,
    pairs: &[(usize, usize)],
    dense_limit: usize,
) -> Result<CtProbe> {
    let delta = params.spectral_gap();
    if delta <= 0.0 {
        return Err(Error::GapViolated(format!(
            "delta = omega - V+ - 4 D gamma = {delta} must be positive"
        )));
    }
    let basis = h_restricted.basis();
    if h_restricted
        .global_indices()
        .iter()
        .any(|&g| basis.shell_of(g) == k)
    {
        return Err(Error::GapViolated(format!("selector intersects shell {k}")));
    }
    let (band_lo, band_hi) = params.band(k);
    if !(band_lo..=band_hi).contains(&z.re) {
        return Err(Error::InvalidParameter(format!(
            "probe energy {} outside band {k} = [{band_lo}, {band_hi}]",
            z.re
        )));
    }

    let spectrum = h_restricted.spectrum(dense_limit, false)?;
    let dist = spectrum
        .values
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) - z).norm())
        .fold(f64::INFINITY, f64::min);
    if dist < 1e-9 {
        return Err(Error::GapViolated(format!(
            "z sits {dist:.3e} from the restricted spectrum"
        )));
    }

    let basis = h_restricted.basis().clone();
    let region = basis.region().clone();
    let solver = ResolventSolver::with_options(h_restricted, z, dense_limit, DEFAULT_SOLVE_TOL)?;

    // share one solve per distinct column
    let mut by_col: Vec<(usize, Vec<usize>)> = Vec::new();
    for (idx, &(_, b)) in pairs.iter().enumerate() {
        match by_col.iter_mut().find(|(col, _)| *col == b) {
            Some((_, list)) => list.push(idx),
            None => by_col.push((b, vec![idx])),
        }
    }
    let mut results: Vec<Option<CtPair>> = vec![None; pairs.len()];
    for (b, list) in by_col {
        let lb = h_restricted
            .local_of_global(b)
            .ok_or_else(|| Error::SelectorMismatch("probe column outside the selector".into()))?;
        let u = solver.column(lb)?;
        for idx in list {
            let (a, _) = pairs[idx];
            let la = h_restricted
                .local_of_global(a)
                .ok_or_else(|| Error::SelectorMismatch("probe row outside the selector".into()))?;
            let sa = basis.state(a);
            let sb = basis.state(b);
            let distance = metrics::d_metric(&region, sa.site, &sa.config, sb.site, &sb.config)?;
            results[idx] = Some(CtPair {
                a,
                b,
                distance,
                abs_g: u[la].norm(),
            });
        }
    }
    let pairs_out: Vec<CtPair> = results.into_iter().map(Option::unwrap).collect();

    let points: Vec<(f64, f64)> = pairs_out
        .iter()
        .filter(|p| p.abs_g > 0.0)
        .map(|p| (p.distance, p.abs_g.ln()))
        .collect();
    let fitted_rate = if points.len() >= 2 {
        -fit::least_squares(&points).0
    } else {
        f64::NAN
    };
    let norm_bound = 2.0 / delta;
    let envelope_rate = pairs_out
        .iter()
        .filter(|p| p.abs_g > 0.0 && p.distance > 0.0)
        .map(|p| (norm_bound / p.abs_g).ln() / p.distance)
        .fold(f64::INFINITY, f64::min);

    Ok(CtProbe {
        pairs: pairs_out,
        dist_to_spectrum: dist,
        resolvent_norm: 1.0 / dist,
        norm_bound,
        fitted_rate,
        envelope_rate,
    })
}

/// Operator norm of `P_rows (H - z)^{-1} P_cols` for explicit global index
/// blocks, via the largest singular value of the extracted block.
pub fn block_resolvent_norm(
    matrix: &OperatorMatrix,
    z: Complex64,
    rows: &[usize],
    cols: &[usize],
    dense_limit: usize,
) -> Result<f64> {
    let solver = ResolventSolver::with_options(matrix, z, dense_limit, DEFAULT_SOLVE_TOL)?;
    let mut block = Mat::<Complex64>::zeros(rows.len(), cols.len());
    for (j, &col) in cols.iter().enumerate() {
        let lc = matrix
            .local_of_global(col)
            .ok_or_else(|| Error::SelectorMismatch("block column outside selector".into()))?;
        let u = solver.column(lc)?;
        for (i, &row) in rows.iter().enumerate() {
            let lr = matrix
                .local_of_global(row)
                .ok_or_else(|| Error::SelectorMismatch("block row outside selector".into()))?;
            block[(i, j)] = u[lr];
        }
    }
    let sv = block.singular_values().map_err(|_| Error::EigenFailed)?;
    Ok(sv.first().copied().unwrap_or(0.0))
}
