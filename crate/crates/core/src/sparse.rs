//! CSR helpers on top of `sprs`, and an LDLᵀ factorization with inertia.

use sprs::{CsMat, FillInReduction, SymmetryCheck};
use sprs_ldl::{Ldl, LdlNumeric, LdlSymbolic};

use crate::error::{Error, Result};

pub type Csr = CsMat<f64>;

/// Row-sorted sparsity pattern built from element connectivity.
#[derive(Debug, Clone)]
pub struct Pattern {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Pattern {
    /// Pattern containing every (i, j) pair that shares an element.
    pub fn from_elements<'a, I>(n: usize, elements: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in elements {
            for &i in el {
                rows[i].extend_from_slice(el);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            indices.extend_from_slice(&r);
            indptr.push(indices.len());
        }
        Pattern { n, indptr, indices }
    }

    pub fn diagonal(n: usize) -> Self {
        Pattern {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Position of (i, j) in the value array.
    pub fn slot(&self, i: usize, j: usize) -> usize {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.indptr[i] + k,
            Err(_) => panic!("entry ({i}, {j}) outside sparsity pattern"),
        }
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.nnz()]
    }

    pub fn to_csr(&self, data: Vec<f64>) -> Csr {
        assert_eq!(data.len(), self.nnz());
        CsMat::new((self.n, self.n), self.indptr.clone(), self.indices.clone(), data)
    }
}

/// y = A x
/// Rectangular matrix from (row, col, value) entries; duplicates are summed.
pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Csr {
    let mut t = sprs::TriMat::with_capacity((rows, cols), entries.len());
    for &(i, j, v) in entries {
        t.add_triplet(i, j, v);
    }
    t.to_csr()
}

pub fn matvec(a: &Csr, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    matvec_into(a, x, &mut y);
    y
}

pub fn matvec_into(a: &Csr, x: &[f64], y: &mut [f64]) {
    assert_eq!(a.cols(), x.len());
    assert!(a.is_csr());
    let (indptr, indices, data) = (a.indptr(), a.indices(), a.data());
    let ip = indptr.raw_storage();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in ip[i]..ip[i + 1] {
            s += data[k] * x[indices[k]];
        }
        *yi = s;
    }
}

/// y = Aᵀ x
pub fn matvec_t(a: &Csr, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.rows(), x.len());
    let mut y = vec![0.0; a.cols()];
    let (indptr, indices, data) = (a.indptr(), a.indices(), a.data());
    let ip = indptr.raw_storage();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for k in ip[i]..ip[i + 1] {
            y[indices[k]] += data[k] * xi;
        }
    }
    y
}

/// x ᵀ A y
pub fn bilinear(a: &Csr, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &matvec(a, y))
}

/// a·A + b·B for matrices stored on the same pattern.
pub fn combine(a: &Csr, ca: f64, b: &Csr, cb: f64) -> Csr {
    assert_eq!(a.indptr().raw_storage(), b.indptr().raw_storage(), "pattern mismatch");
    assert_eq!(a.indices(), b.indices(), "pattern mismatch");
    let data: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| ca * x + cb * y).collect();
    CsMat::new(a.shape(), a.indptr().raw_storage().to_vec(), a.indices().to_vec(), data)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

/// Largest |a_ij − a_ji|.
pub fn asymmetry(a: &Csr) -> f64 {
    let t = a.transpose_view().to_csr();
    let mut worst: f64 = 0.0;
    for (v, (i, j)) in a.iter() {
        let w = t.get(i, j).copied().unwrap_or(0.0);
        worst = worst.max((v - w).abs());
    }
    worst
}

/// Symbolic LDLᵀ analysis (RCM ordering) reusable across matrices with one pattern.
#[derive(Debug, Clone)]
pub struct Analysis {
    symbolic: LdlSymbolic<usize>,
}

impl Analysis {
    pub fn new(a: &Csr) -> Self {
        let symbolic = Ldl::new()
            .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
            .check_symmetry(SymmetryCheck::DontCheckSymmetry)
            .symbolic(a.view());
        Analysis { symbolic }
    }

    pub fn factor(&self, a: &Csr) -> Result<Factor> {
        let n = a.rows();
        if n == 1 {
            // sprs-ldl needs n > 1
            let d = a.get(0, 0).cloned().unwrap_or(0.0);
            if !d.is_finite() || d == 0.0 {
                return Err(Error::Factorization("singular 1×1 matrix".into()));
            }
            return Ok(Factor {
                ldl: Pivots::Scalar(d),
                n,
                negative: usize::from(d < 0.0),
                min_abs_pivot: d.abs(),
            });
        }
        let ldl = self
            .symbolic
            .clone()
            .factor(a.view())
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let d = ldl.d();
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("non-finite pivot".into()));
        }
        let negative = d.iter().filter(|&&v| v < 0.0).count();
        let min_abs = d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        Ok(Factor {
            ldl: Pivots::Ldl(ldl),
            n,
            negative,
            min_abs_pivot: min_abs,
        })
    }
}

#[derive(Debug, Clone)]
enum Pivots {
    Ldl(LdlNumeric<f64, usize>),
    Scalar(f64),
}

/// Numeric LDLᵀ factor without pivoting.
#[derive(Debug, Clone)]
pub struct Factor {
    ldl: Pivots,
    n: usize,
    negative: usize,
    min_abs_pivot: f64,
}

impl Factor {
    pub fn new(a: &Csr) -> Result<Self> {
        Analysis::new(a).factor(a)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        match &self.ldl {
            Pivots::Ldl(l) => l.solve(b),
            Pivots::Scalar(d) => vec![b[0] / d],
        }
    }

    /// Number of negative pivots, i.e. negative eigenvalues of the factored matrix.
    pub fn negative_count(&self) -> usize {
        self.negative
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.min_abs_pivot
    }
}
