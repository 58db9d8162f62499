//! Master-equation time evolution, steady states and initial-state
//! preparation.

mod generator;
mod integrate;
mod steady;

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

pub use generator::{Direction, Frame, Generator, Workspace};
pub use integrate::{EvolveConfig, Method, Propagator, Visit};
pub use steady::{steady_state, steady_state_from, SteadyStrategy, NULL_SPACE_MAX_DIM};

use crate::error::{Error, Result};
use crate::model::LindbladModel;
use crate::operator::{partial_trace, HilbertLayout, OperatorMatrix, StateMatrix, SPIN};
use crate::sparse::SparseMatrix;

/// `−i[H, ρ] + Σ_k r_k D[A_k] ρ`.
pub fn lindblad_rhs(state: &StateMatrix, model: &LindbladModel) -> Result<Array2<Complex64>> {
    if state.layout() != &model.layout {
        return Err(Error::Layout("state and model use different layouts".into()));
    }
    let g = Generator::new(model, Direction::Forward, Frame::Lab);
    Ok(g.apply_to(0.0, state.data()))
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub operator: SparseMatrix,
}

impl Observable {
    pub fn new(name: impl Into<String>, operator: &OperatorMatrix) -> Self {
        Self {
            name: name.into(),
            operator: operator.matrix().clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObservableSeries {
    pub name: String,
    /// Real part of `Tr(O ρ(t))` at every stored time.
    pub values: Vec<f64>,
    /// `∫₀ᵗ Tr(O ρ) dt` accumulated with the integrator's own stage weights.
    pub cumulative: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub observables: Vec<ObservableSeries>,
    pub traces: Vec<f64>,
    /// Smallest diagonal element seen at any stored time.
    pub min_population: f64,
    /// States at the requested sample times, in request order.
    pub samples: Vec<StateMatrix>,
    pub final_state: StateMatrix,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&ObservableSeries> {
        self.observables.iter().find(|s| s.name == name)
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.traces.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Evolves `state0` over `[0, t_final]`, recording observables on every
/// accepted step.
pub fn evolve(
    state0: &StateMatrix,
    model: &LindbladModel,
    t_final: f64,
    config: &EvolveConfig,
    observables: &[Observable],
) -> Result<Trajectory> {
    evolve_sampled(state0, model, t_final, config, observables, &[])
}

/// Like [`evolve`], additionally storing full states at `sample_times`
/// (sorted, within `[0, t_final]`).
pub fn evolve_sampled(
    state0: &StateMatrix,
    model: &LindbladModel,
    t_final: f64,
    config: &EvolveConfig,
    observables: &[Observable],
    sample_times: &[f64],
) -> Result<Trajectory> {
    if state0.layout() != &model.layout {
        return Err(Error::Layout("state and model use different layouts".into()));
    }
    let generator = Generator::new(model, Direction::Forward, config.frame);
    let propagator = Propagator::new(&generator, *config, true)?;
    let layout = state0.layout().clone();
    let n = layout.total_dim();
    let ops: Vec<&SparseMatrix> = observables.iter().map(|o| &o.operator).collect();

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ops.len()];
    let mut cumulative: Vec<Vec<f64>> = vec![Vec::new(); ops.len()];
    let mut traces = Vec::new();
    let mut min_population = f64::INFINITY;
    let mut samples = Vec::with_capacity(sample_times.len());

    let record = |visit: Visit<'_>| {
        times.push(visit.t);
        let rho = visit.state;
        let mut tr = 0.0;
        for i in 0..n {
            let p = rho[i * n + i].re;
            tr += p;
            min_population = min_population.min(p);
        }
        traces.push(tr);
        for (k, op) in ops.iter().enumerate() {
            let v: Complex64 = op.triplets().map(|(r, c, v)| v * rho[c * n + r]).sum();
            values[k].push(v.re);
            cumulative[k].push(visit.integrals[k].re);
        }
        if visit.sample.is_some() {
            let data = Array2::from_shape_vec((n, n), rho.to_vec()).expect("square");
            samples.push(data);
        }
    };
    let final_data = propagator.run(state0.data(), t_final, sample_times, &ops, record)?;

    let observables = observables
        .iter()
        .zip(values.into_iter().zip(cumulative))
        .map(|(o, (values, cumulative))| ObservableSeries {
            name: o.name.clone(),
            values,
            cumulative,
        })
        .collect();
    let samples = samples
        .into_iter()
        .map(|d| StateMatrix::new(layout.clone(), d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times,
        observables,
        traces,
        min_population,
        samples,
        final_state: StateMatrix::new(layout, final_data)?,
    })
}

/// `|e⟩⟨e| ⊗ Tr_spin(ρ_ss)`: the equilibrated bath with the spin excited.
pub fn prepare_initial(rho_ss: &StateMatrix) -> Result<StateMatrix> {
    let layout = rho_ss.layout();
    if layout.labels().first().map(String::as_str) != Some("spin") || layout.dims()[SPIN] != 2 {
        return Err(Error::Layout("first subsystem must be the spin".into()));
    }
    let rest: Vec<usize> = (1..layout.len()).collect();
    let bath = partial_trace(rho_ss, &rest)?;
    Ok(excited_spin().kron(&bath))
}

/// `|d⟩⟨d| ⊗ ρ_bath` for a bath state on phonon ⊗ photon ⊗ cooling.
pub fn with_ground_spin(bath: &StateMatrix) -> StateMatrix {
    spin_state(0).kron(bath)
}

fn excited_spin() -> StateMatrix {
    spin_state(1)
}

fn spin_state(level: usize) -> StateMatrix {
    let layout = Arc::new(HilbertLayout::new(vec![2], vec!["spin"]).expect("valid layout"));
    StateMatrix::basis(layout, &[level]).expect("valid spin level")
}
