//! Generalized symmetric eigenproblems K x = λ M x, resolvents and weighted operator norms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::DiscreteOperatorPair;
use crate::sparse::{self, Analysis, Csr, Factor};

/// Sorted eigenvalues with the certified range they cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Every eigenvalue below this bound is in `values` (inertia-certified).
    pub cutoff: Option<f64>,
    /// 0 was appended for the scalar component.
    pub appended_zero: bool,
    /// Members of near-degenerate groups (|λᵢ − λⱼ| ≤ 1e−9(1+|λ|)).
    pub cluster: Vec<bool>,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>, cutoff: Option<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cluster = cluster_flags(&values);
        Spectrum {
            values,
            cutoff,
            appended_zero: false,
            cluster,
        }
    }

    /// Add the eigenvalue 0 of the scalar component.
    pub fn with_appended_zero(mut self) -> Self {
        if !self.appended_zero {
            self.values.push(0.0);
            self.values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            self.cluster = cluster_flags(&self.values);
            self.appended_zero = true;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keep only eigenvalues below `cutoff`, which becomes the certified bound.
    pub fn truncated(&self, cutoff: f64) -> Spectrum {
        let bound = self.cutoff.map_or(cutoff, |c| c.min(cutoff));
        let values: Vec<f64> = self.values.iter().cloned().filter(|&v| v < bound).collect();
        let mut s = Spectrum::new(values, Some(bound));
        s.appended_zero = self.appended_zero;
        s
    }
}

fn cluster_flags(values: &[f64]) -> Vec<bool> {
    let mut flags = vec![false; values.len()];
    for i in 1..values.len() {
        if (values[i] - values[i - 1]).abs() <= 1e-9 * (1.0 + values[i].abs()) {
            flags[i] = true;
            flags[i - 1] = true;
        }
    }
    flags
}

/// How many eigenvalues to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Request {
    Count(usize),
    Below(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Accept a Ritz pair when ‖Kx − λMx‖_{M⁻¹} ≤ tol·max(1, |λ|)·‖x‖_M.
    pub tol: f64,
    /// Problems up to this size are solved densely.
    pub dense_limit: usize,
    /// Largest eigenvalue count handled by one shift.
    pub slice_size: usize,
    /// Lower end of the searched range.
    pub lower: f64,
    pub seed: u64,
    pub max_restarts: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-8,
            dense_limit: 400,
            slice_size: 24,
            lower: -0.5,
            seed: 0x5eed,
            max_restarts: 40,
        }
    }
}

/// Eigenpairs, M-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub cutoff: f64,
}

pub fn eigs_lowest(pair: &DiscreteOperatorPair, req: Request) -> Result<Spectrum> {
    eigs_lowest_with(&pair.k, &pair.m, req, &EigOptions::default())
}

pub fn eigs_lowest_with(k: &Csr, m: &Csr, req: Request, opts: &EigOptions) -> Result<Spectrum> {
    let ep = eigenpairs(k, m, req, opts)?;
    Ok(Spectrum::new(ep.values, Some(ep.cutoff)))
}

/// Lowest eigenpairs of (K, M).
pub fn eigenpairs(k: &Csr, m: &Csr, req: Request, opts: &EigOptions) -> Result<EigenPairs> {
    let n = k.rows();
    if k.cols() != n || m.rows() != n || m.cols() != n {
        return Err(Error::Dimension("K and M must be square of equal size".into()));
    }
    match req {
        Request::Count(c) if c == 0 || c > n => {
            return Err(Error::invalid("k", format!("requested {c} eigenvalues of a {n}-dim problem")))
        }
        Request::Below(l) if !(l > opts.lower) => return Err(Error::invalid("cutoff", "must exceed the lower bound")),
        _ => {}
    }
    if n <= opts.dense_limit {
        return dense_pairs(k, m, req);
    }
    let mut solver = SliceSolver::new(k, m, opts)?;
    let (values, vectors, hi) = match req {
        Request::Below(l) => {
            let (v, x) = solver.solve_range(opts.lower, l)?;
            (v, x, l)
        }
        Request::Count(c) => solver.lowest(c)?,
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut vecs: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].clone()).collect();
    let mut cutoff = hi;
    if let Request::Count(c) = req {
        if vals.len() > c {
            // certified bound: every eigenvalue below the (c+1)-th was found
            cutoff = vals[c];
            vals.truncate(c);
            vecs.truncate(c);
        }
    }
    Ok(EigenPairs {
        values: vals,
        vectors: vecs,
        cutoff,
    })
}

fn to_dense(a: &Csr) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.rows(), a.cols());
    for (v, (i, j)) in a.iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Eigendecomposition of a dense symmetric matrix; eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition reading the lower triangle of `a`.
///
/// nalgebra's `SymmetricEigen` can return eigenpairs with residuals near 1e-5‖A‖ when a 2×2 block
/// deflates with a small off-diagonal entry, so this goes through faer instead.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("eigendecomposition of a {}×{} matrix", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in a symmetric eigenproblem".into()));
    }
    if n == 0 {
        return Ok(SymEigen {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let f = faer::Mat::<f64>::from_fn(n, n, |i, j| if i >= j { a[(i, j)] } else { a[(j, i)] });
    let evd = f
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver: {e:?}")))?;
    let (u, s) = (evd.U(), evd.S().column_vector());
    Ok(SymEigen {
        eigenvalues: DVector::from_fn(n, |i, _| s[i]),
        eigenvectors: DMatrix::from_fn(n, n, |i, j| u[(i, j)]),
    })
}

/// Dense generalized symmetric eigensolver via Cholesky of M; ascending order.
pub fn dense_generalized(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let sym_m = (m + m.transpose()) * 0.5;
    let chol = sym_m
        .cholesky()
        .ok_or_else(|| Error::Factorization("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = sym_eigen(&c)?;
    let vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let vecs = linv.transpose() * &eig.eigenvectors;
    debug_assert_eq!(vecs.ncols(), n);
    Ok((vals, vecs))
}

fn dense_pairs(k: &Csr, m: &Csr, req: Request) -> Result<EigenPairs> {
    let (vals, vecs) = dense_generalized(&to_dense(k), &to_dense(m))?;
    let n = vals.len();
    let (count, cutoff) = match req {
        Request::Count(c) => (c, if c < n { vals[c] } else { f64::INFINITY }),
        Request::Below(l) => (vals.iter().filter(|&&v| v < l).count(), l),
    };
    Ok(EigenPairs {
        values: vals[..count].to_vec(),
        vectors: (0..count).map(|j| vecs.column(j).iter().cloned().collect()).collect(),
        cutoff,
    })
}

struct SliceSolver<'a> {
    k: &'a Csr,
    m: &'a Csr,
    analysis: Analysis,
    mass: Factor,
    opts: EigOptions,
    rng: ChaCha8Rng,
}

impl<'a> SliceSolver<'a> {
    fn new(k: &'a Csr, m: &'a Csr, opts: &EigOptions) -> Result<Self> {
        let analysis = Analysis::new(k);
        let mass = analysis.factor(m)?;
        if mass.negative_count() > 0 {
            return Err(Error::Factorization("mass matrix is not positive definite".into()));
        }
        Ok(SliceSolver {
            k,
            m,
            analysis,
            mass,
            opts: *opts,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
        })
    }

    fn shifted_factor(&self, s: f64) -> Result<Factor> {
        let a = sparse::combine(self.k, 1.0, self.m, -s);
        self.analysis.factor(&a)
    }

    /// Number of eigenvalues strictly below `s`.
    fn count_below(&self, s: f64) -> Result<usize> {
        let mut shift = s;
        for attempt in 0..4 {
            match self.shifted_factor(shift) {
                Ok(f) if f.min_abs_pivot() > 1e-14 * (1.0 + shift.abs()) => return Ok(f.negative_count()),
                _ => shift = s + (attempt as f64 + 1.0) * 1e-11 * (1.0 + s.abs()),
            }
        }
        Err(Error::Factorization(format!("cannot factor K − {s}·M")))
    }

    fn solve_range(&mut self, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let c_lo = self.count_below(lo)?;
        let c_hi = self.count_below(hi)?;
        let mut out_v = Vec::new();
        let mut out_x = Vec::new();
        self.solve_slice(lo, hi, c_lo, c_hi, &mut out_v, &mut out_x)?;
        Ok((out_v, out_x))
    }

    fn solve_slice(
        &mut self,
        lo: f64,
        hi: f64,
        c_lo: usize,
        c_hi: usize,
        out_v: &mut Vec<f64>,
        out_x: &mut Vec<Vec<f64>>,
    ) -> Result<()> {
        let count = c_hi.saturating_sub(c_lo);
        if count == 0 {
            return Ok(());
        }
        if count > self.opts.slice_size {
            let jitter = 1.0 + 1e-3 * (self.rng.random::<f64>() - 0.5);
            let mid = lo + 0.5 * (hi - lo) * jitter;
            let c_mid = self.count_below(mid)?;
            self.solve_slice(lo, mid, c_lo, c_mid, out_v, out_x)?;
            return self.solve_slice(mid, hi, c_mid, c_hi, out_v, out_x);
        }
        let (v, x) = self.lanczos_slice(lo, hi, count)?;
        out_v.extend(v);
        out_x.extend(x);
        Ok(())
    }

    /// Factor K − σM, nudging σ by `step` until the factor is safely nonsingular.
    fn factor_near(&self, sigma: f64, step: f64) -> Result<(Factor, f64)> {
        let mut s = sigma;
        for _ in 0..8 {
            match self.shifted_factor(s) {
                Ok(f) if f.min_abs_pivot() > 1e-14 * (1.0 + s.abs()) => return Ok((f, s)),
                _ => s += step,
            }
        }
        Err(Error::Factorization(format!("cannot factor K − {sigma}·M")))
    }

    /// Shift-invert Lanczos with locking, collecting `count` eigenpairs in [lo, hi).
    fn lanczos_slice(&mut self, lo: f64, hi: f64, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        // shift at the bottom so the wanted eigenvalues are the extreme ones of the inverse
        let sigma = lo - 1e-3 * (hi - lo);
        let fac = self.factor_near(sigma, -1e-3 * (hi - lo))?;
        let mut locked = Locked::default();
        self.collect(&fac, lo, hi, count, &mut locked)?;
        Ok((locked.values, locked.x))
    }

    /// Lowest `count` eigenpairs from a shift below the spectrum, certified by inertia.
    fn lowest(&mut self, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
        let n = self.k.rows();
        let sigma = self.opts.lower;
        let fac = self.factor_near(sigma, -1e-3 * (1.0 + sigma.abs()))?;
        let mut locked = Locked::default();
        let mut need = count;
        for _ in 0..self.opts.max_restarts {
            self.collect(&fac, self.opts.lower, f64::INFINITY, need, &mut locked)?;
            let mut sorted = locked.values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let top = sorted[count - 1];
            let bound = top + 1e-7 * (1.0 + top.abs());
            let below = self.count_below(bound)?;
            let found = sorted.iter().filter(|&&v| v < bound).count();
            if below <= found {
                return Ok((locked.values, locked.x, bound));
            }
            need = (locked.values.len() + below - found).min(n);
        }
        Err(Error::NoConvergence(format!("could not certify the lowest {count} eigenvalues")))
    }

    /// Extend `locked` until it holds `count` converged pairs in [lo, hi).
    fn collect(&mut self, fac: &(Factor, f64), lo: f64, hi: f64, count: usize, locked: &mut Locked) -> Result<()> {
        let n = self.k.rows();
        let mut steps = (3 * count + 20).max(40);
        for _round in 0..self.opts.max_restarts {
            if locked.values.len() >= count {
                return Ok(());
            }
            let avail = n - locked.x.len();
            if avail == 0 {
                break;
            }
            let m_steps = steps.min(avail);
            let (basis, basis_m, t_alpha, t_beta) = self.lanczos_run(&fac.0, m_steps, &locked.x, &locked.mx);
            let dim = t_alpha.len();
            let mut t = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                t[(i, i)] = t_alpha[i];
                if i + 1 < dim {
                    t[(i, i + 1)] = t_beta[i];
                    t[(i + 1, i)] = t_beta[i];
                }
            }
            let eig = sym_eigen(&t)?;
            let mut cand: Vec<usize> = (0..dim).filter(|&j| eig.eigenvalues[j] != 0.0).collect();
            cand.sort_by(|&a, &b| eig.eigenvalues[b].abs().partial_cmp(&eig.eigenvalues[a].abs()).unwrap());
            let sigma = fac.1;
            for j in cand {
                let lam = sigma + 1.0 / eig.eigenvalues[j];
                if !(lam >= lo && lam < hi) {
                    continue;
                }
                let s = eig.eigenvectors.column(j);
                let mut x = vec![0.0; n];
                let mut mx = vec![0.0; n];
                for (i, (b, bm)) in basis.iter().zip(&basis_m).enumerate() {
                    sparse::axpy(s[i], b, &mut x);
                    sparse::axpy(s[i], bm, &mut mx);
                }
                m_orthogonalize(&mut x, &mut mx, &locked.x, &locked.mx);
                let nrm = sparse::dot(&x, &mx).sqrt();
                if !(nrm > 0.5) {
                    continue;
                }
                sparse::scale(1.0 / nrm, &mut x);
                sparse::scale(1.0 / nrm, &mut mx);
                let lam = sparse::bilinear(self.k, &x, &x);
                let mut r = sparse::matvec(self.k, &x);
                sparse::axpy(-lam, &mx, &mut r);
                let res = sparse::dot(&r, &self.mass.solve(&r)).max(0.0).sqrt();
                if res <= self.opts.tol * lam.abs().max(1.0) && lam >= lo && lam < hi {
                    locked.values.push(lam);
                    locked.x.push(x);
                    locked.mx.push(mx);
                    if locked.values.len() >= count {
                        return Ok(());
                    }
                }
            }
            steps = (steps * 3 / 2).min(n);
        }
        if locked.values.len() >= count {
            return Ok(());
        }
        Err(Error::NoConvergence(format!(
            "found {} of {count} eigenvalues in [{lo}, {hi})",
            locked.values.len()
        )))
    }

    #[allow(clippy::type_complexity)]
    fn lanczos_run(
        &mut self,
        fac: &Factor,
        steps: usize,
        locked: &[Vec<f64>],
        locked_m: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let n = self.k.rows();
        let mut v: Vec<f64> = (0..n).map(|_| self.rng.random::<f64>() - 0.5).collect();
        let mut mv = sparse::matvec(self.m, &v);
        m_orthogonalize(&mut v, &mut mv, locked, locked_m);
        let nrm = sparse::dot(&v, &mv).sqrt();
        sparse::scale(1.0 / nrm, &mut v);
        sparse::scale(1.0 / nrm, &mut mv);
        let mut basis = vec![v];
        let mut basis_m = vec![mv];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for j in 0..steps {
            let mut w = fac.solve(&basis_m[j]);
            let mut mw = sparse::matvec(self.m, &w);
            let a = sparse::dot(&w, &basis_m[j]);
            alpha.push(a);
            for _ in 0..2 {
                m_orthogonalize(&mut w, &mut mw, locked, locked_m);
                m_orthogonalize(&mut w, &mut mw, &basis, &basis_m);
            }
            let b = sparse::dot(&w, &mw).max(0.0).sqrt();
            if j + 1 == steps || b <= 1e-12 * a.abs().max(1e-300) {
                break;
            }
            beta.push(b);
            sparse::scale(1.0 / b, &mut w);
            sparse::scale(1.0 / b, &mut mw);
            basis.push(w);
            basis_m.push(mw);
        }
        basis.truncate(alpha.len());
        basis_m.truncate(alpha.len());
        beta.truncate(alpha.len().saturating_sub(1));
        (basis, basis_m, alpha, beta)
    }
}

#[derive(Default)]
struct Locked {
    values: Vec<f64>,
    x: Vec<Vec<f64>>,
    mx: Vec<Vec<f64>>,
}

/// Remove the components along an M-orthonormal set, updating M·x alongside.
fn m_orthogonalize(x: &mut [f64], mx: &mut [f64], set: &[Vec<f64>], set_m: &[Vec<f64>]) {
    for (q, qm) in set.iter().zip(set_m) {
        let c = sparse::dot(x, qm);
        if c != 0.0 {
            sparse::axpy(-c, q, x);
            sparse::axpy(-c, qm, mx);
        }
    }
}

/// Factored K + M for applying the Galerkin resolvent (A + I)⁻¹.
pub struct ResolventHandle {
    factor: Factor,
    m: Csr,
}

impl ResolventHandle {
    pub fn new(pair: &DiscreteOperatorPair) -> Result<Self> {
        Self::from_matrices(&pair.k, &pair.m)
    }

    pub fn from_matrices(k: &Csr, m: &Csr) -> Result<Self> {
        let s = sparse::combine(k, 1.0, m, 1.0);
        let factor = Factor::new(&s)?;
        if factor.negative_count() > 0 {
            return Err(Error::Factorization("K + M is not positive definite".into()));
        }
        Ok(ResolventHandle { factor, m: m.clone() })
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    /// x with (K + M) x = M·rhs.
    pub fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve(&sparse::matvec(&self.m, rhs))
    }

    /// (K + M)⁻¹ y for an already weighted right-hand side.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        self.factor.solve(y)
    }
}

/// Linear map between coefficient spaces, with its plain transpose.
pub trait LinearMap {
    fn n_src(&self) -> usize;
    fn n_dst(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_t(&self, y: &[f64]) -> Vec<f64>;
}

/// Gram matrix of an inner product: multiply and solve.
pub trait Gram {
    fn dim(&self) -> usize;
    fn mul(&self, x: &[f64]) -> Vec<f64>;
    fn solve(&self, y: &[f64]) -> Vec<f64>;
}

/// Sparse SPD Gram matrix with its factor.
pub struct SparseGram {
    pub matrix: Csr,
    factor: Factor,
}

impl SparseGram {
    pub fn new(matrix: Csr) -> Result<Self> {
        let factor = Factor::new(&matrix)?;
        if factor.negative_count() > 0 {
            return Err(Error::Factorization("Gram matrix is not positive definite".into()));
        }
        Ok(SparseGram { matrix, factor })
    }
}

impl Gram for SparseGram {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        sparse::matvec(&self.matrix, x)
    }
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        self.factor.solve(y)
    }
}

/// Euclidean inner product.
pub struct IdentityGram(pub usize);

impl Gram for IdentityGram {
    fn dim(&self) -> usize {
        self.0
    }
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

/// Map given by a sparse matrix.
pub struct MatrixMap<'a>(pub &'a Csr);

impl LinearMap for MatrixMap<'_> {
    fn n_src(&self) -> usize {
        self.0.cols()
    }
    fn n_dst(&self) -> usize {
        self.0.rows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        sparse::matvec(self.0, x)
    }
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        sparse::matvec_t(self.0, y)
    }
}

/// Mass-adjoint L* = G_src⁻¹ Lᵀ G_dst of a map, as a map in the opposite direction.
pub struct Adjoint<'a> {
    pub map: &'a dyn LinearMap,
    pub src: &'a dyn Gram,
    pub dst: &'a dyn Gram,
}

impl LinearMap for Adjoint<'_> {
    fn n_src(&self) -> usize {
        self.map.n_dst()
    }
    fn n_dst(&self) -> usize {
        self.map.n_src()
    }
    fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.src.solve(&self.map.apply_t(&self.dst.mul(y)))
    }
    fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        self.dst.mul(&self.map.apply(&self.src.solve(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value of `map` from (src, ⟨·,·⟩_src) to (dst, ⟨·,·⟩_dst).
///
/// Lanczos on G_src⁻¹ Lᵀ G_dst L in the src inner product, full reorthogonalisation.
pub fn op_norm(map: &dyn LinearMap, src: &dyn Gram, dst: &dyn Gram) -> NormEstimate {
    op_norm_with(map, src, dst, 1e-10, 400, 0x0dd5eed)
}

pub fn op_norm_with(
    map: &dyn LinearMap,
    src: &dyn Gram,
    dst: &dyn Gram,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> NormEstimate {
    let n = map.n_src();
    assert_eq!(src.dim(), n);
    assert_eq!(dst.dim(), map.n_dst());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut gv = src.mul(&v);
    let nrm = sparse::dot(&v, &gv).sqrt();
    sparse::scale(1.0 / nrm, &mut v);
    sparse::scale(1.0 / nrm, &mut gv);
    let mut basis = vec![v];
    let mut basis_g = vec![gv];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let steps = max_iter.min(n);
    let mut best = 0.0;
    let mut converged = false;
    for j in 0..steps {
        let lv = map.apply(&basis[j]);
        let mut z = map.apply_t(&dst.mul(&lv));
        let mut w = src.solve(&z);
        alpha.push(sparse::dot(&w, &basis_g[j]));
        for _ in 0..2 {
            for (q, qg) in basis.iter().zip(&basis_g) {
                let c = sparse::dot(&w, qg);
                sparse::axpy(-c, q, &mut w);
                sparse::axpy(-c, qg, &mut z);
            }
        }
        let b = sparse::dot(&w, &z).max(0.0).sqrt();
        let dim = alpha.len();
        let mut t = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            t[(i, i)] = alpha[i];
            if i + 1 < dim {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        // reported as unconverged
        let Ok(eig) = sym_eigen(&t) else { break };
        let (imax, theta) = eig
            .eigenvalues
            .iter()
            .cloned()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        best = theta.max(0.0);
        let last = eig.eigenvectors[(dim - 1, imax)].abs();
        let scale_ref = alpha.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        if b * last <= tol * best.max(1e-300) || b <= 1e-13 * scale_ref || j + 1 == n {
            converged = true;
            break;
        }
        if best == 0.0 && b == 0.0 {
            converged = true;
            break;
        }
        beta.push(b);
        sparse::scale(1.0 / b, &mut w);
        sparse::scale(1.0 / b, &mut z);
        basis.push(w);
        basis_g.push(z);
    }
    NormEstimate {
        value: best.sqrt(),
        converged,
        iterations: alpha.len(),
    }
}

/// Dense version of the weighted norm, for small problems and tests.
pub fn dense_op_norm(l: &DMatrix<f64>, g_src: &DMatrix<f64>, g_dst: &DMatrix<f64>) -> Result<f64> {
    let a = l.transpose() * g_dst * l;
    let (vals, _) = dense_generalized(&((&a + a.transpose()) * 0.5), g_src)?;
    Ok(vals.last().cloned().unwrap_or(0.0).max(0.0).sqrt())
}

pub fn to_dense_matrix(a: &Csr) -> DMatrix<f64> {
    to_dense(a)
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
