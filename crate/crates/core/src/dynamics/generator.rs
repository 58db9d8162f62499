//! Matrix-free Lindblad generator.
//!
//! Writing `K = H − (i/2) Σ_k r_k A_k†A_k`, the master equation reads
//!
//! ```text
//! dX/dt = −i K X + i X K† + Σ_k (√r_k A_k) X (√r_k A_k)†
//! ```
//!
//! The adjoint (Heisenberg-picture) generator has the same shape with
//! `K → −K†` and `A_k → A_k†`, so one kernel serves both directions.
//!
//! In the rotating frame the real diagonal `E = Re diag K` is moved into the
//! frame: every stored entry `(m, n)` picks up a phase `exp(i (E_m − E_n) s)`
//! at frame time `s`, and states are mapped back with the inverse phases.

use ndarray::Array2;
use num_complex::Complex64;

use crate::model::LindbladModel;
use crate::sparse::SparseMatrix;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Evolves density matrices and regression operators.
    Forward,
    /// Evolves observables (dual of `Forward` under the trace pairing).
    Adjoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    #[default]
    Lab,
    DetunedRotating,
}

/// CSR matrix with a phase-table index per entry.
#[derive(Clone, Debug)]
struct PhasedCsr {
    n: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Complex64>,
    phase: Vec<usize>,
}

impl PhasedCsr {
    fn new(m: &SparseMatrix, energies: Option<&[f64]>, table: &mut FrequencyTable) -> Self {
        let n = m.nrows();
        let mut indptr = vec![0];
        let mut cols = Vec::with_capacity(m.nnz());
        let mut values = Vec::with_capacity(m.nnz());
        let mut phase = Vec::with_capacity(m.nnz());
        for r in 0..n {
            for (c, v) in m.row(r) {
                cols.push(c);
                values.push(v);
                phase.push(match energies {
                    Some(e) => table.index(e[r] - e[c]),
                    None => 0,
                });
            }
            indptr.push(cols.len());
        }
        Self { n, indptr, cols, values, phase }
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }

    fn phased_values(&self, phases: &[Complex64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(self.values.iter().zip(&self.phase).map(|(v, &p)| v * phases[p]));
    }

    /// `out += alpha · M · x` with `M` given by `vals`.
    fn mul_acc(&self, vals: &[Complex64], alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let s = alpha * vals[k];
                let src = &x[self.cols[k] * n..(self.cols[k] + 1) * n];
                for (d, &xv) in dst.iter_mut().zip(src) {
                    *d += s * xv;
                }
            }
        }
    }

    /// `out += alpha · x · M†` with `M` given by `vals`.
    fn mul_adj_right_acc(&self, vals: &[Complex64], alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let xrow = &x[i * n..(i + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = ZERO;
                for k in self.indptr[j]..self.indptr[j + 1] {
                    acc += xrow[self.cols[k]] * vals[k].conj();
                }
                orow[j] += alpha * acc;
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
struct FrequencyTable {
    freqs: Vec<f64>,
}

impl FrequencyTable {
    fn index(&mut self, w: f64) -> usize {
        let tol = 1e-9 * w.abs().max(1.0);
        if let Some(k) = self.freqs.iter().position(|&f| (f - w).abs() <= tol) {
            return k;
        }
        self.freqs.push(w);
        self.freqs.len() - 1
    }
}

/// Scratch buffers reused across generator applications.
#[derive(Debug, Default)]
pub struct Workspace {
    tmp: Vec<Complex64>,
    phases: Vec<Complex64>,
    kvals: Vec<Complex64>,
    jvals: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct Generator {
    dim: usize,
    direction: Direction,
    effective: PhasedCsr,
    jumps: Vec<PhasedCsr>,
    energies: Option<Vec<f64>>,
    freqs: Vec<f64>,
}

impl Generator {
    pub fn new(model: &LindbladModel, direction: Direction, frame: Frame) -> Self {
        let d = model.dim();
        let mut effective = model.hamiltonian.matrix().clone();
        let mut jumps = Vec::new();
        for dis in model.dissipators.iter().filter(|d| d.rate > 0.0) {
            let a = dis.operator.matrix();
            let ada = a.adjoint().matmul(a);
            effective = effective.add(&ada.scale(Complex64::new(0.0, -0.5 * dis.rate)));
            let scaled = a.scale(Complex64::new(dis.rate.sqrt(), 0.0));
            jumps.push(match direction {
                Direction::Forward => scaled,
                Direction::Adjoint => scaled.adjoint(),
            });
        }
        if direction == Direction::Adjoint {
            effective = effective.adjoint().scale(Complex64::new(-1.0, 0.0));
        }

        let mut table = FrequencyTable::default();
        table.index(0.0);
        let energies = match frame {
            Frame::Lab => None,
            Frame::DetunedRotating => {
                let e: Vec<f64> = effective.diagonal().iter().map(|z| z.re).collect();
                let shift = SparseMatrix::from_diagonal(
                    &e.iter().map(|&x| Complex64::new(-x, 0.0)).collect::<Vec<_>>(),
                );
                effective = effective.add(&shift);
                Some(e)
            }
        };
        let eref = energies.as_deref();
        let effective = PhasedCsr::new(&effective, eref, &mut table);
        let jumps = jumps
            .iter()
            .map(|j| PhasedCsr::new(j, eref, &mut table))
            .collect();
        Self {
            dim: d,
            direction,
            effective,
            jumps,
            energies,
            freqs: table.freqs,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_rotating(&self) -> bool {
        self.energies.is_some()
    }

    /// Total stored nonzeros (a proxy for the cost of one application).
    pub fn nnz(&self) -> usize {
        self.effective.nnz() + self.jumps.iter().map(PhasedCsr::nnz).sum::<usize>()
    }

    /// Writes `L(x)` at frame time `s` into `out`. With `hermitian = true`
    /// the input must be Hermitian and the cheaper symmetric path is used.
    pub fn apply(&self, s: f64, x: &[Complex64], out: &mut [Complex64], hermitian: bool, ws: &mut Workspace) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        ws.phases.clear();
        ws.phases.extend(self.freqs.iter().map(|&w| Complex64::from_polar(1.0, w * s)));
        if ws.tmp.len() != n * n {
            ws.tmp = vec![ZERO; n * n];
        }

        out.iter_mut().for_each(|v| *v = ZERO);
        let mut kvals = std::mem::take(&mut ws.kvals);
        self.effective.phased_values(&ws.phases, &mut kvals);
        self.effective.mul_acc(&kvals, -I, x, out);
        if hermitian {
            // −iKX + (−iKX)†
            for i in 0..n {
                for j in i..n {
                    let a = out[i * n + j];
                    let b = out[j * n + i];
                    out[i * n + j] = a + b.conj();
                    out[j * n + i] = b + a.conj();
                }
            }
        } else {
            self.effective.mul_adj_right_acc(&kvals, I, x, out);
        }
        ws.kvals = kvals;

        let mut jvals = std::mem::take(&mut ws.jvals);
        for jump in &self.jumps {
            jump.phased_values(&ws.phases, &mut jvals);
            ws.tmp.iter_mut().for_each(|v| *v = ZERO);
            jump.mul_acc(&jvals, Complex64::new(1.0, 0.0), x, &mut ws.tmp);
            jump.mul_adj_right_acc(&jvals, Complex64::new(1.0, 0.0), &ws.tmp, out);
        }
        ws.jvals = jvals;
    }

    /// Allocating convenience wrapper around [`Generator::apply`].
    pub fn apply_to(&self, s: f64, x: &Array2<Complex64>) -> Array2<Complex64> {
        let n = self.dim;
        let x = x.as_standard_layout();
        let mut out = Array2::zeros((n, n));
        let mut ws = Workspace::default();
        self.apply(
            s,
            x.as_slice().expect("standard layout"),
            out.as_slice_mut().expect("standard layout"),
            false,
            &mut ws,
        );
        out
    }

    /// Maps a frame-picture matrix at frame time `s` to the lab picture.
    pub fn frame_to_lab(&self, s: f64, x: &mut [Complex64]) {
        self.rephase(s, -1.0, x);
    }

    pub fn lab_to_frame(&self, s: f64, x: &mut [Complex64]) {
        self.rephase(s, 1.0, x);
    }

    fn rephase(&self, s: f64, sign: f64, x: &mut [Complex64]) {
        let Some(e) = &self.energies else { return };
        let n = self.dim;
        let u: Vec<Complex64> = e.iter().map(|&w| Complex64::from_polar(1.0, sign * w * s)).collect();
        for m in 0..n {
            let row = &mut x[m * n..(m + 1) * n];
            for (v, un) in row.iter_mut().zip(&u) {
                *v *= u[m] * un.conj();
            }
        }
    }

    /// Phase-rotates a sparse observable into the frame picture at time `s`
    /// so that `Tr(O_frame X_frame) = Tr(O X_lab)`.
    pub fn observable_in_frame(&self, s: f64, op: &SparseMatrix) -> SparseMatrix {
        match &self.energies {
            None => op.clone(),
            Some(e) => SparseMatrix::from_triplets(
                op.nrows(),
                op.ncols(),
                op.triplets()
                    .map(|(r, c, v)| (r, c, v * Complex64::from_polar(1.0, (e[r] - e[c]) * s))),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, SystemParams, Truncation};

    fn random_matrix(n: usize, seed: u64) -> Array2<Complex64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Array2::from_shape_fn((n, n), |_| Complex64::new(next(), next()))
    }

    fn small_model() -> LindbladModel {
        let mut p = SystemParams::reference();
        p.gamma_relax = 1e3;
        build_model(&p, Truncation { n_b: 3, n_a: 2, n_c: 2 }, true).unwrap()
    }

    /// Direct dense evaluation of −i[H,X] + Σ r (A X A† − ½{A†A, X}).
    fn dense_rhs(model: &LindbladModel, x: &Array2<Complex64>) -> Array2<Complex64> {
        let h = model.hamiltonian.matrix().to_dense();
        let mut out = (h.dot(x) - x.dot(&h)).mapv(|z| z * -I);
        for d in &model.dissipators {
            let a = d.operator.matrix().to_dense();
            let ad = a.t().mapv(|z| z.conj());
            let ada = ad.dot(&a);
            let term = a.dot(x).dot(&ad) - (ada.dot(x) + x.dot(&ada)).mapv(|z| z * 0.5);
            out = out + term.mapv(|z| z * d.rate);
        }
        out
    }

    fn max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn forward_matches_dense_definition() {
        let m = small_model();
        let g = Generator::new(&m, Direction::Forward, Frame::Lab);
        let x = random_matrix(m.dim(), 3);
        let expected = dense_rhs(&m, &x);
        let got = g.apply_to(0.0, &x);
        let scale = expected.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_diff(&got, &expected) < 1e-12 * scale);
    }

    #[test]
    fn hermitian_path_matches_general_path() {
        let m = small_model();
        let g = Generator::new(&m, Direction::Forward, Frame::Lab);
        let r = random_matrix(m.dim(), 5);
        let x = &r + &r.t().mapv(|z| z.conj());
        let n = m.dim();
        let mut a = vec![ZERO; n * n];
        let mut b = vec![ZERO; n * n];
        let mut ws = Workspace::default();
        g.apply(0.0, x.as_slice().unwrap(), &mut a, true, &mut ws);
        g.apply(0.0, x.as_slice().unwrap(), &mut b, false, &mut ws);
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12 * scale);
    }

    #[test]
    fn adjoint_is_trace_dual() {
        let m = small_model();
        let fwd = Generator::new(&m, Direction::Forward, Frame::Lab);
        let adj = Generator::new(&m, Direction::Adjoint, Frame::Lab);
        let x = random_matrix(m.dim(), 11);
        let y = random_matrix(m.dim(), 12);
        // Tr(Y L(X)) = Tr(L†(Y) X)
        let lhs = y.dot(&fwd.apply_to(0.0, &x)).diag().sum();
        let rhs = adj.apply_to(0.0, &y).dot(&x).diag().sum();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn forward_output_is_traceless() {
        let m = small_model();
        let g = Generator::new(&m, Direction::Forward, Frame::Lab);
        let x = random_matrix(m.dim(), 7);
        let tr = g.apply_to(0.0, &x).diag().sum();
        assert!(tr.norm() < 1e-12 * m.dim() as f64 * 1e7);
    }

    #[test]
    fn rotating_frame_is_a_similarity() {
        // L_frame(s)(X) = U† L(U X U†) U with U = exp(−i E s)
        let m = small_model();
        let lab = Generator::new(&m, Direction::Forward, Frame::Lab);
        let rot = Generator::new(&m, Direction::Forward, Frame::DetunedRotating);
        let s = 3.3e-7;
        let x_frame = random_matrix(m.dim(), 9);
        let mut x_lab = x_frame.clone();
        rot.frame_to_lab(s, x_lab.as_slice_mut().unwrap());
        let mut expected = lab.apply_to(s, &x_lab);
        // the frame derivative excludes the generator of the frame itself
        let e: Vec<f64> = m.hamiltonian.matrix().diagonal().iter().map(|z| z.re).collect();
        let n = m.dim();
        for i in 0..n {
            for j in 0..n {
                expected[(i, j)] += I * (e[i] - e[j]) * x_lab[(i, j)];
            }
        }
        rot.lab_to_frame(s, expected.as_slice_mut().unwrap());
        let got = rot.apply_to(s, &x_frame);
        let scale = got.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max_diff(&got, &expected) < 1e-9 * scale);
    }
}
