//! Two-time correlators of the emission mode from the quantum regression
//! theorem, sampled on the triangular gate domain.
//!
//! For `t` in the gate and `τ ∈ [0, t_u − t]`:
//!
//! * `G1(t, τ) = ⟨a†(t+τ) a(t)⟩ = Tr[a† e^{Lτ}(a ρ(t))]`
//! * `G2(t, τ) = ⟨a†(t) a†(t+τ) a(t+τ) a(t)⟩ = Tr[a†a e^{Lτ}(a ρ(t) a†)]`
//!
//! Two strategies produce identical grids. [`CorrelationStrategy::Forward`]
//! propagates `a ρ(t)` and `a ρ(t) a†` separately for every outer time.
//! [`CorrelationStrategy::Adjoint`] propagates the observables `a†` and `a†a`
//! once under the adjoint generator and contracts them with every stored
//! `a ρ(t)`, which costs two propagations instead of `2 n_t`.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Direction, EvolveConfig, Generator, Propagator};
use crate::error::{Error, Result};
use crate::model::LindbladModel;
use crate::operator::{annihilation, embed, number, StateMatrix};
use crate::sparse::SparseMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Smallest accepted number of outer or inner grid points.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationStrategy {
    #[default]
    Adjoint,
    Forward,
}

/// Sampling of the gate `[t_l, t_u]`.
///
/// The outer grid has `n_t` uniform points. The inner step is the outer
/// step divided by `(n_tau − 1)/(n_t − 1)`, which must be a whole number so
/// that every row ends exactly on `τ = t_u − t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub t_l: f64,
    pub t_u: f64,
    pub n_t: usize,
    pub n_tau: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_t < MIN_POINTS || self.n_tau < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_POINTS} points per axis (got n_t = {}, n_tau = {})",
                self.n_t, self.n_tau
            )));
        }
        if !(self.t_l >= 0.0 && self.t_u > self.t_l && self.t_u.is_finite()) {
            return Err(Error::InvalidGrid(format!("gate [{}, {}] is empty", self.t_l, self.t_u)));
        }
        if !(self.n_tau - 1).is_multiple_of(self.n_t - 1) {
            return Err(Error::InvalidGrid(format!(
                "n_tau - 1 = {} must be a multiple of n_t - 1 = {}",
                self.n_tau - 1,
                self.n_t - 1
            )));
        }
        Ok(())
    }

    /// Inner samples per outer interval.
    pub fn ratio(&self) -> usize {
        (self.n_tau - 1) / (self.n_t - 1)
    }

    pub fn t_step(&self) -> f64 {
        (self.t_u - self.t_l) / (self.n_t - 1) as f64
    }

    pub fn tau_step(&self) -> f64 {
        (self.t_u - self.t_l) / (self.n_tau - 1) as f64
    }
}

/// Consistency checks gathered while the grid is built.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GridDiagnostics {
    /// `max |Tr ρ(t) − 1|` over the state evolution.
    pub max_trace_drift: f64,
    /// Smallest diagonal element of `ρ(t)` seen.
    pub min_population: f64,
    /// Largest population of the top Fock level, per bosonic subsystem.
    pub top_fock: Vec<(String, f64)>,
    /// `max |G1(t, 0) − n(t)|`.
    pub g1_consistency: f64,
    /// `max |Im G1(t, 0)|`.
    pub g1_zero_imag: f64,
    /// `max |G2(t, 0) − ⟨a†a†aa⟩(t)|`.
    pub g2_consistency: f64,
    /// Most negative `G2` value (0 when none is negative).
    pub min_g2: f64,
    /// Largest imaginary part discarded from `G2`.
    pub g2_discarded_imag: f64,
    /// `max(|G1|² − n(t) n(t+τ))`, positive only when Cauchy-Schwarz fails.
    pub cauchy_schwarz_excess: f64,
}

/// Correlators sampled on the triangular domain.
///
/// Row `i` belongs to `t_i = t_l + i·h_t` and holds the inner samples
/// `τ_k = k·h_τ` for `k = 0 ..= (n_t − 1 − i)·ratio`.
#[derive(Clone, Debug)]
pub struct CorrelationGrid {
    pub spec: GridSpec,
    pub t_grid: Vec<f64>,
    pub g1: Vec<Vec<Complex64>>,
    pub g2: Vec<Vec<f64>>,
    /// `⟨a†a⟩` at `t_l + j·h_τ`, the inner lattice.
    pub n_lattice: Vec<f64>,
    /// `⟨a†a⟩` at every accepted integrator step on `[0, t_u]`.
    pub n_times: Vec<f64>,
    pub n_series: Vec<f64>,
    /// Integrator-weighted running integral of `⟨a†a⟩`.
    pub n_cumulative: Vec<f64>,
    pub diagnostics: GridDiagnostics,
}

impl CorrelationGrid {
    pub fn ratio(&self) -> usize {
        self.spec.ratio()
    }

    pub fn tau_step(&self) -> f64 {
        self.spec.tau_step()
    }

    /// Sub-grid for the gate `[t_l', t_u']`, whose endpoints must lie on the
    /// outer grid.
    pub fn restrict(&self, t_l: f64, t_u: f64) -> Result<Self> {
        let h = self.spec.t_step();
        let locate = |t: f64| -> Result<usize> {
            let x = (t - self.spec.t_l) / h;
            let i = x.round();
            if (x - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.spec.n_t {
                return Err(Error::InvalidGrid(format!("{t:.6e} s is not on the outer grid")));
            }
            Ok(i as usize)
        };
        let (lo, hi) = (locate(t_l)?, locate(t_u)?);
        if hi <= lo {
            return Err(Error::InvalidGrid("restricted gate is empty".into()));
        }
        let r = self.ratio();
        let n_t = hi - lo + 1;
        let spec = GridSpec {
            t_l: self.t_grid[lo],
            t_u: self.t_grid[hi],
            n_t,
            n_tau: (n_t - 1) * r + 1,
        };
        let rows = lo..=hi;
        let g1 = rows.clone().map(|i| self.g1[i][..=(hi - i) * r].to_vec()).collect();
        let g2 = rows.clone().map(|i| self.g2[i][..=(hi - i) * r].to_vec()).collect();
        Ok(Self {
            spec,
            t_grid: self.t_grid[lo..=hi].to_vec(),
            g1,
            g2,
            n_lattice: self.n_lattice[lo * r..=hi * r].to_vec(),
            n_times: self.n_times.clone(),
            n_series: self.n_series.clone(),
            n_cumulative: self.n_cumulative.clone(),
            diagnostics: self.diagnostics.clone(),
        })
    }

    /// Every other outer and inner point, when the interval count allows it.
    pub fn coarsen(&self) -> Option<Self> {
        let n_t = self.spec.n_t;
        if n_t < 3 || !(n_t - 1).is_multiple_of(2) {
            return None;
        }
        let spec = GridSpec { n_t: (n_t - 1) / 2 + 1, n_tau: (self.spec.n_tau - 1) / 2 + 1, ..self.spec };
        let rows: Vec<usize> = (0..n_t).step_by(2).collect();
        Some(Self {
            spec,
            t_grid: rows.iter().map(|&i| self.t_grid[i]).collect(),
            g1: rows.iter().map(|&i| self.g1[i].iter().step_by(2).copied().collect()).collect(),
            g2: rows.iter().map(|&i| self.g2[i].iter().step_by(2).copied().collect()).collect(),
            n_lattice: self.n_lattice.iter().step_by(2).copied().collect(),
            n_times: self.n_times.clone(),
            n_series: self.n_series.clone(),
            n_cumulative: self.n_cumulative.clone(),
            diagnostics: self.diagnostics.clone(),
        })
    }
}

/// Emission-mode operators on the model layout.
struct ModeOps {
    a: SparseMatrix,
    ad: SparseMatrix,
    n: SparseMatrix,
    /// `a†a†a`, contracted with `a ρ` to give `⟨a†a†aa⟩`.
    adada: SparseMatrix,
}

impl ModeOps {
    fn new(model: &LindbladModel) -> Result<Self> {
        let idx = model
            .layout
            .index_of("photon")
            .ok_or_else(|| Error::Layout("model has no photon subsystem".into()))?;
        let levels = model.layout.dims()[idx];
        let a = embed(&annihilation(levels)?, idx, &model.layout)?.into_matrix();
        let ad = a.adjoint();
        let n = embed(&number(levels)?, idx, &model.layout)?.into_matrix();
        let adada = ad.matmul(&ad).matmul(&a);
        Ok(Self { a, ad, n, adada })
    }
}

/// `Tr[op · X]` for a dense row-major `X`.
fn trace_sparse(op: &SparseMatrix, x: &[Complex64], n: usize) -> Complex64 {
    op.triplets().map(|(r, c, v)| v * x[c * n + r]).sum()
}

fn sparse_times(op: &SparseMatrix, x: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    op.mul_dense_acc(x, n, ONE, &mut out);
    out
}

/// `X · op` for dense row-major `X`.
fn times_sparse(x: &[Complex64], op: &SparseMatrix, n: usize) -> Vec<Complex64> {
    // (X op) = (op† X†)†
    let xd = dagger(x, n);
    dagger(&sparse_times(&op.adjoint(), &xd, n), n)
}

fn dagger(x: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = x[i * n + j].conj();
        }
    }
    out
}

fn transpose(x: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = x[i * n + j];
        }
    }
    out
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform_times(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + k as f64 * step).collect()
}

fn check_state(model: &LindbladModel, state: &StateMatrix) -> Result<()> {
    if state.layout() != &model.layout {
        return Err(Error::Layout("state and model use different layouts".into()));
    }
    Ok(())
}

/// `⟨a†(t+τ) a(t)⟩` at the requested delays, given `ρ(t)`.
pub fn g1(tau_grid: &[f64], rho_t: &StateMatrix, model: &LindbladModel, config: &EvolveConfig) -> Result<Vec<Complex64>> {
    check_state(model, rho_t)?;
    let ops = ModeOps::new(model)?;
    let n = model.dim();
    let rho = rho_t.data().as_standard_layout();
    let b0 = sparse_times(&ops.a, rho.as_slice().expect("standard layout"), n);
    let generator = Generator::new(model, Direction::Forward, config.frame);
    regression_series(&generator, config, false, b0, &ops.ad, tau_grid)
}

/// `⟨a†(t) a†(t+τ) a(t+τ) a(t)⟩` at the requested delays, given `ρ(t)`.
pub fn g2_corr(tau_grid: &[f64], rho_t: &StateMatrix, model: &LindbladModel, config: &EvolveConfig) -> Result<Vec<f64>> {
    check_state(model, rho_t)?;
    let ops = ModeOps::new(model)?;
    let n = model.dim();
    let rho = rho_t.data().as_standard_layout();
    let x = sparse_times(&ops.a, rho.as_slice().expect("standard layout"), n);
    let c0 = times_sparse(&x, &ops.ad, n);
    let generator = Generator::new(model, Direction::Forward, config.frame);
    let raw = regression_series(&generator, config, true, c0, &ops.n, tau_grid)?;
    Ok(raw.into_iter().map(|z| z.re).collect())
}

/// Propagates `x0` forward and reads `Tr[obs · X(τ)]` at every delay.
fn regression_series(
    generator: &Generator,
    config: &EvolveConfig,
    hermitian: bool,
    x0: Vec<Complex64>,
    obs: &SparseMatrix,
    tau_grid: &[f64],
) -> Result<Vec<Complex64>> {
    let n = generator.dim();
    let Some(&last) = tau_grid.last() else { return Ok(Vec::new()) };
    let mut out = vec![ZERO; tau_grid.len()];
    let propagator = Propagator::new(generator, *config, hermitian)?;
    let x0 = Array2::from_shape_vec((n, n), x0).expect("square");
    propagator.run(&x0, last, tau_grid, &[], |v| {
        if let Some(k) = v.sample {
            out[k] = trace_sparse(obs, v.state, n);
        }
    })?;
    Ok(out)
}

/// Per-row data captured during the state evolution.
struct Snapshot {
    /// `(a ρ(t_i))ᵀ`, laid out so `Tr[O · aρ] = dot(O, snapshotᵀ)`.
    x_t: Vec<Complex64>,
    /// `a ρ(t_i)` itself, kept only for the forward strategy.
    x: Option<Vec<Complex64>>,
    n: f64,
    g2_direct: f64,
}

/// Evolves `rho_0` from `0` to `t_u`, then samples `G1` and `G2` on the
/// triangular domain of `spec`.
pub fn build_grid(
    model: &LindbladModel,
    rho_0: &StateMatrix,
    spec: GridSpec,
    config: &EvolveConfig,
    strategy: CorrelationStrategy,
) -> Result<CorrelationGrid> {
    spec.validate()?;
    check_state(model, rho_0)?;
    config.validate()?;
    let ops = ModeOps::new(model)?;
    let n = model.dim();
    let r = spec.ratio();
    let h_tau = spec.tau_step();
    let lattice = uniform_times(spec.t_l, h_tau, spec.n_tau);

    // state evolution
    let generator = Generator::new(model, Direction::Forward, config.frame);
    let propagator = Propagator::new(&generator, *config, true)?;
    let top = top_level_indices(model);
    let mut top_max = vec![0.0f64; top.len()];
    let mut n_times = Vec::new();
    let mut n_series = Vec::new();
    let mut n_cumulative = Vec::new();
    let mut n_lattice = vec![0.0; spec.n_tau];
    let mut max_trace_drift = 0.0f64;
    let mut min_population = f64::INFINITY;
    let mut snapshots: Vec<Option<Snapshot>> = (0..spec.n_t).map(|_| None).collect();
    let keep_x = strategy == CorrelationStrategy::Forward;
    propagator.run(rho_0.data(), spec.t_u, &lattice, &[&ops.n], |v| {
        let mut tr = 0.0;
        for i in 0..n {
            let p = v.state[i * n + i].re;
            tr += p;
            min_population = min_population.min(p);
        }
        max_trace_drift = max_trace_drift.max((tr - 1.0).abs());
        for (m, idx) in top_max.iter_mut().zip(&top) {
            let p: f64 = idx.1.iter().map(|&k| v.state[k * n + k].re).sum();
            *m = m.max(p);
        }
        let occupation = trace_sparse(&ops.n, v.state, n).re;
        n_times.push(v.t);
        n_series.push(occupation);
        n_cumulative.push(v.integrals[0].re);
        if let Some(j) = v.sample {
            n_lattice[j] = occupation;
            if j % r == 0 {
                let x = sparse_times(&ops.a, v.state, n);
                let g2_direct = trace_sparse(&ops.adada, &x, n).re;
                snapshots[j / r] = Some(Snapshot {
                    x_t: transpose(&x, n),
                    x: keep_x.then_some(x),
                    n: occupation,
                    g2_direct,
                });
            }
        }
    })?;
    let snapshots: Vec<Snapshot> = snapshots
        .into_iter()
        .map(|s| s.ok_or_else(|| Error::InvalidGrid("outer sample was not visited".into())))
        .collect::<Result<_>>()?;

    let row_len = |i: usize| (spec.n_t - 1 - i) * r + 1;
    let (g1_rows, g2_raw) = match strategy {
        CorrelationStrategy::Adjoint => adjoint_rows(model, config, &ops, &snapshots, h_tau, row_len)?,
        CorrelationStrategy::Forward => forward_rows(model, config, &ops, &snapshots, h_tau, row_len)?,
    };

    let mut diagnostics = GridDiagnostics {
        max_trace_drift,
        min_population,
        top_fock: top.into_iter().map(|(label, _)| label).zip(top_max).collect(),
        ..Default::default()
    };
    let mut g2_rows = Vec::with_capacity(spec.n_t);
    for (i, (row1, row2)) in g1_rows.iter().zip(g2_raw).enumerate() {
        let snap = &snapshots[i];
        diagnostics.g1_consistency = diagnostics.g1_consistency.max((row1[0].re - snap.n).abs());
        diagnostics.g1_zero_imag = diagnostics.g1_zero_imag.max(row1[0].im.abs());
        diagnostics.g2_consistency = diagnostics.g2_consistency.max((row2[0].re - snap.g2_direct).abs());
        for (k, z) in row1.iter().enumerate() {
            let bound = n_lattice[i * r] * n_lattice[i * r + k];
            diagnostics.cauchy_schwarz_excess = diagnostics.cauchy_schwarz_excess.max(z.norm_sqr() - bound);
        }
        let mut row = Vec::with_capacity(row2.len());
        for z in row2 {
            diagnostics.min_g2 = diagnostics.min_g2.min(z.re);
            diagnostics.g2_discarded_imag = diagnostics.g2_discarded_imag.max(z.im.abs());
            row.push(z.re);
        }
        g2_rows.push(row);
    }
    if diagnostics.g2_discarded_imag > 1e-8 {
        log::warn!("discarded imaginary part {:.3e} from G2", diagnostics.g2_discarded_imag);
    }

    Ok(CorrelationGrid {
        spec,
        t_grid: uniform_times(spec.t_l, spec.t_step(), spec.n_t),
        g1: g1_rows,
        g2: g2_rows,
        n_lattice,
        n_times,
        n_series,
        n_cumulative,
        diagnostics,
    })
}

type Rows = (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>);

fn adjoint_rows(
    model: &LindbladModel,
    config: &EvolveConfig,
    ops: &ModeOps,
    snapshots: &[Snapshot],
    h_tau: f64,
    row_len: impl Fn(usize) -> usize + Sync,
) -> Result<Rows> {
    let n = model.dim();
    let taus = uniform_times(0.0, h_tau, row_len(0));
    let generator = Generator::new(model, Direction::Adjoint, config.frame);
    let propagate = |start: &SparseMatrix, hermitian: bool, contract: &(dyn Fn(&[Complex64]) -> Vec<Complex64> + Sync)| {
        let mut rows: Vec<Vec<Complex64>> = (0..snapshots.len()).map(|i| vec![ZERO; row_len(i)]).collect();
        let propagator = Propagator::new(&generator, *config, hermitian)?;
        let duration = *taus.last().expect("non-empty lattice");
        propagator.run(&start.to_dense(), duration, &taus, &[], |v| {
            let Some(k) = v.sample else { return };
            let op = contract(v.state);
            for (i, row) in rows.iter_mut().enumerate() {
                if k < row.len() {
                    row[k] = dot(&op, &snapshots[i].x_t);
                }
            }
        })?;
        Ok::<_, Error>(rows)
    };
    // G1 = Tr[A(τ) · aρ],  G2 = Tr[B(τ) · aρa†] = Tr[(a†B(τ)) · aρ]
    let ad = &ops.ad;
    let (g1, g2) = rayon::join(
        || propagate(&ops.ad, false, &|state: &[Complex64]| state.to_vec()),
        || propagate(&ops.n, true, &|state: &[Complex64]| sparse_times(ad, state, n)),
    );
    Ok((g1?, g2?))
}

fn forward_rows(
    model: &LindbladModel,
    config: &EvolveConfig,
    ops: &ModeOps,
    snapshots: &[Snapshot],
    h_tau: f64,
    row_len: impl Fn(usize) -> usize + Sync,
) -> Result<Rows> {
    let n = model.dim();
    let generator = Generator::new(model, Direction::Forward, config.frame);
    let rows: Vec<(Vec<Complex64>, Vec<Complex64>)> = snapshots
        .par_iter()
        .enumerate()
        .map(|(i, snap)| {
            let taus = uniform_times(0.0, h_tau, row_len(i));
            let x = snap.x.clone().expect("forward strategy keeps a·ρ");
            let c0 = times_sparse(&x, &ops.ad, n);
            let g1 = regression_series(&generator, config, false, x, &ops.ad, &taus)?;
            let g2 = regression_series(&generator, config, true, c0, &ops.n, &taus)?;
            Ok((g1, g2))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().unzip())
}

/// For each bosonic subsystem, the flat indices whose level is the top one.
fn top_level_indices(model: &LindbladModel) -> Vec<(String, Vec<usize>)> {
    let layout = &model.layout;
    layout
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, label)| label.as_str() != "spin")
        .map(|(s, label)| {
            let top = layout.dims()[s] - 1;
            let idx = (0..layout.total_dim()).filter(|&k| layout.digits(k)[s] == top).collect();
            (label.clone(), idx)
        })
        .collect()
}
