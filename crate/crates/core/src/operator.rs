//! Truncated operators, tensor-product embedding and density matrices.
//!
//! Basis convention: subsystems are ordered as in [`HilbertLayout::dims`] and
//! combined with a row-major Kronecker product, so the first subsystem varies
//! slowest. The spin basis is ordered `(|d⟩, |e⟩)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const SPIN: usize = 0;
pub const PHONON: usize = 1;
pub const PHOTON: usize = 2;
pub const COOLING: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertLayout {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl HilbertLayout {
    pub fn new<S: Into<String>>(dims: Vec<usize>, labels: Vec<S>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Layout("layout needs at least one subsystem".into()));
        }
        if dims.len() != labels.len() {
            return Err(Error::Layout(format!(
                "{} dims but {} labels",
                dims.len(),
                labels.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Layout(format!("subsystem dimension {d} < 1")));
        }
        Ok(Self {
            dims,
            labels: labels.into_iter().map(Into::into).collect(),
        })
    }

    /// Spin ⊗ phonon ⊗ photon ⊗ cooling-mode layout.
    pub fn spin_optomechanical(n_b: usize, n_a: usize, n_c: usize) -> Result<Self> {
        Self::new(
            vec![2, n_b, n_a, n_c],
            vec!["spin", "phonon", "photon", "cooling"],
        )
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Layout restricted to the subsystems in `keep` (kept in layout order).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let keep = normalized_subset(keep, self.len())?;
        Self::new(
            keep.iter().map(|&k| self.dims[k]).collect(),
            keep.iter().map(|&k| self.labels[k].clone()).collect(),
        )
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &Self) -> Self {
        Self {
            dims: self.dims.iter().chain(&other.dims).copied().collect(),
            labels: self.labels.iter().chain(&other.labels).cloned().collect(),
        }
    }

    /// Decomposes a flat index into per-subsystem digits.
    pub fn digits(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            out[k] = flat % d;
            flat /= d;
        }
        out
    }

    pub fn flat_index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&q, &d)| acc * d + q)
    }
}

fn normalized_subset(keep: &[usize], n: usize) -> Result<Vec<usize>> {
    if keep.is_empty() {
        return Err(Error::Layout("empty subsystem subset".into()));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.last().is_some_and(|&k| k >= n) {
        return Err(Error::Layout(format!("subsystem index out of range (n = {n})")));
    }
    Ok(keep)
}

/// Operator on the full composite space of a layout.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    layout: Arc<HilbertLayout>,
    matrix: SparseMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(layout: Arc<HilbertLayout>, matrix: SparseMatrix) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Layout(format!(
                "operator is {}x{} but layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = matrix.hermiticity_residual() < 1e-12;
        Ok(Self {
            layout,
            matrix,
            hermitian,
        })
    }

    pub fn identity(layout: Arc<HilbertLayout>) -> Self {
        let matrix = SparseMatrix::identity(layout.total_dim());
        Self {
            layout,
            matrix,
            hermitian: true,
        }
    }

    pub fn layout(&self) -> &Arc<HilbertLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        self.with_matrix(self.matrix.adjoint())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        self.with_matrix(self.matrix.matmul(&other.matrix))
    }

    pub fn add(&self, other: &Self) -> Self {
        self.with_matrix(self.matrix.add(&other.matrix))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.with_matrix(self.matrix.scale(Complex64::new(s, 0.0)))
    }

    fn with_matrix(&self, matrix: SparseMatrix) -> Self {
        let hermitian = matrix.hermiticity_residual() < 1e-12;
        Self {
            layout: self.layout.clone(),
            matrix,
            hermitian,
        }
    }
}

/// Ladder operator truncated to `n_levels` Fock states.
pub fn annihilation(n_levels: usize) -> Result<SparseMatrix> {
    if n_levels < 2 {
        return Err(Error::InvalidTruncation(n_levels));
    }
    Ok(SparseMatrix::from_triplets(
        n_levels,
        n_levels,
        (1..n_levels).map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0))),
    ))
}

pub fn number(n_levels: usize) -> Result<SparseMatrix> {
    if n_levels < 2 {
        return Err(Error::InvalidTruncation(n_levels));
    }
    let diag: Vec<Complex64> = (0..n_levels).map(|k| Complex64::new(k as f64, 0.0)).collect();
    Ok(SparseMatrix::from_diagonal(&diag))
}

/// `σ₋ = |d⟩⟨e|` in the `(|d⟩, |e⟩)` basis.
pub fn spin_lowering() -> SparseMatrix {
    SparseMatrix::from_triplets(2, 2, [(0, 1, Complex64::new(1.0, 0.0))])
}

/// Projector onto Fock level `level` of an `n_levels` mode.
pub fn level_projector(n_levels: usize, level: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(n_levels, n_levels, [(level, level, Complex64::new(1.0, 0.0))])
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` at subsystem `index`.
pub fn embed(op: &SparseMatrix, index: usize, layout: &Arc<HilbertLayout>) -> Result<OperatorMatrix> {
    let dims = layout.dims();
    if index >= dims.len() {
        return Err(Error::Layout(format!("subsystem {index} out of range")));
    }
    if op.nrows() != dims[index] || op.ncols() != dims[index] {
        return Err(Error::Layout(format!(
            "operator dimension {} does not match subsystem '{}' dimension {}",
            op.nrows(),
            layout.labels()[index],
            dims[index]
        )));
    }
    let left: usize = dims[..index].iter().product();
    let right: usize = dims[index + 1..].iter().product();
    let full = SparseMatrix::identity(left)
        .kron(op)
        .kron(&SparseMatrix::identity(right));
    OperatorMatrix::new(layout.clone(), full)
}

/// Density matrix on a layout.
#[derive(Clone, Debug)]
pub struct StateMatrix {
    layout: Arc<HilbertLayout>,
    data: Array2<Complex64>,
}

impl StateMatrix {
    pub fn new(layout: Arc<HilbertLayout>, data: Array2<Complex64>) -> Result<Self> {
        let d = layout.total_dim();
        if data.dim() != (d, d) {
            return Err(Error::Layout(format!(
                "state is {:?} but layout dimension is {d}",
                data.dim()
            )));
        }
        Ok(Self {
            layout,
            data: data.as_standard_layout().into_owned(),
        })
    }

    /// `|ψ⟩⟨ψ|` for the product basis state with the given digits.
    pub fn basis(layout: Arc<HilbertLayout>, digits: &[usize]) -> Result<Self> {
        if digits.len() != layout.len() || digits.iter().zip(layout.dims()).any(|(q, d)| q >= d) {
            return Err(Error::Layout(format!("basis digits {digits:?} invalid for layout")));
        }
        let d = layout.total_dim();
        let k = layout.flat_index(digits);
        let mut data = Array2::zeros((d, d));
        data[(k, k)] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, data })
    }

    /// Global ground state `|0…0⟩`.
    pub fn vacuum(layout: Arc<HilbertLayout>) -> Self {
        let zeros = vec![0; layout.len()];
        Self::basis(layout, &zeros).expect("vacuum digits are always valid")
    }

    pub fn from_pure(layout: Arc<HilbertLayout>, psi: &[Complex64]) -> Result<Self> {
        let d = layout.total_dim();
        if psi.len() != d {
            return Err(Error::Layout(format!("state vector has {} entries, need {d}", psi.len())));
        }
        let data = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        Ok(Self { layout, data })
    }

    /// Diagonal state with the given populations.
    pub fn diagonal(layout: Arc<HilbertLayout>, populations: &[f64]) -> Result<Self> {
        let d = layout.total_dim();
        if populations.len() != d {
            return Err(Error::Layout("population vector length mismatch".into()));
        }
        let mut data = Array2::zeros((d, d));
        for (i, &p) in populations.iter().enumerate() {
            data[(i, i)] = Complex64::new(p, 0.0);
        }
        Ok(Self { layout, data })
    }

    /// Tensor product `self ⊗ other` on the concatenated layout.
    pub fn kron(&self, other: &Self) -> Self {
        let layout = Arc::new(self.layout.concat(&other.layout));
        let (da, db) = (self.dim(), other.dim());
        let data = Array2::from_shape_fn((da * db, da * db), |(i, j)| {
            self.data[(i / db, j / db)] * other.data[(i % db, j % db)]
        });
        Self { layout, data }
    }

    pub fn layout(&self) -> &Arc<HilbertLayout> {
        &self.layout
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.data.diag().sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn populations(&self) -> Vec<f64> {
        self.data.diag().iter().map(|z| z.re).collect()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| {
            0.5 * (self.data[(i, j)] + self.data[(j, i)].conj())
        });
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Copies the matrix elements that exist in `layout`, a layout with the
    /// same modes but different level counts, and renormalizes the trace.
    pub fn resized(&self, layout: Arc<HilbertLayout>) -> Result<Self> {
        if layout.labels() != self.layout.labels() {
            return Err(Error::Layout("resizing needs the same modes".into()));
        }
        let d = layout.total_dim();
        let map: Vec<Option<usize>> = (0..d)
            .map(|k| {
                let digits = layout.digits(k);
                digits
                    .iter()
                    .zip(self.layout.dims())
                    .all(|(q, n)| q < n)
                    .then(|| self.layout.flat_index(&digits))
            })
            .collect();
        let mut data = Array2::from_shape_fn((d, d), |(i, j)| match (map[i], map[j]) {
            (Some(a), Some(b)) => self.data[(a, b)],
            _ => Complex64::new(0.0, 0.0),
        });
        let tr = data.diag().sum().re;
        if !(tr > 0.0) {
            return Err(Error::Layout("resized state has no weight".into()));
        }
        data.mapv_inplace(|z| z / tr);
        Ok(Self { layout, data })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `Tr(obs · ρ)`.
pub fn expectation(obs: &OperatorMatrix, state: &StateMatrix) -> Result<Complex64> {
    if obs.layout() != state.layout() {
        return Err(Error::Layout("observable and state use different layouts".into()));
    }
    Ok(trace_product(obs.matrix(), state.data()))
}

/// `Tr(op · x)` for a sparse `op` and dense `x`.
pub fn trace_product(op: &SparseMatrix, x: &Array2<Complex64>) -> Complex64 {
    op.triplets().map(|(r, c, v)| v * x[(c, r)]).sum()
}

/// Reduced state on the subsystems in `keep`.
pub fn partial_trace(state: &StateMatrix, keep: &[usize]) -> Result<StateMatrix> {
    let layout = state.layout();
    let keep = normalized_subset(keep, layout.len())?;
    let traced: Vec<usize> = (0..layout.len()).filter(|k| !keep.contains(k)).collect();
    let reduced = Arc::new(layout.restrict(&keep)?);
    let dk = reduced.total_dim();
    let dt: usize = traced.iter().map(|&k| layout.dims()[k]).product();

    // full index for every (kept, traced) multi-index pair
    let traced_layout_dims: Vec<usize> = traced.iter().map(|&k| layout.dims()[k]).collect();
    let mut full = vec![0usize; dk * dt];
    let mut digits = vec![0usize; layout.len()];
    for ik in 0..dk {
        let kd = reduced.digits(ik);
        for it in 0..dt {
            let mut rem = it;
            for (slot, &d) in traced.iter().zip(&traced_layout_dims).rev() {
                digits[*slot] = rem % d;
                rem /= d;
            }
            for (slot, &q) in keep.iter().zip(&kd) {
                digits[*slot] = q;
            }
            full[ik * dt + it] = layout.flat_index(&digits);
        }
    }

    let rho = state.data();
    let data = Array2::from_shape_fn((dk, dk), |(i, j)| {
        (0..dt)
            .map(|t| rho[(full[i * dt + t], full[j * dt + t])])
            .sum::<Complex64>()
    });
    StateMatrix::new(reduced, data)
}
