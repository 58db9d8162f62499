use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;

use super::generator::{Direction, Frame, Generator, Workspace};
use super::integrate::{EvolveConfig, Propagator};
use crate::error::{Error, Result};
use crate::model::LindbladModel;
use crate::operator::StateMatrix;

/// Largest Hilbert dimension for which the automatic strategy builds the
/// dense D²×D² generator.
pub const NULL_SPACE_MAX_DIM: usize = 40;

/// Residual target relative to the largest dissipative rate.
const RESIDUAL_FACTOR: f64 = 1e-10;
const MAX_CHUNKS: usize = 2000;
/// Largest element change over one chunk (at least one slowest decay time)
/// accepted as stationary. The residual alone can stall at the integrator's
/// fixed-point error when the Hamiltonian norm is large.
const CHANGE_TOL: f64 = 1e-9;
/// A change that has stopped shrinking below this level is the integrator's
/// own floor (each chunk ends on a shorter step with a slightly different
/// discrete fixed point) and is also accepted.
const FLOOR_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStrategy {
    /// Null-space solve for small models, time-marching otherwise.
    #[default]
    Auto,
    TimeMarch,
    NullSpace,
}

/// Steady state of `model`, time-marching from the global ground state when
/// that strategy is selected.
pub fn steady_state(model: &LindbladModel, config: &EvolveConfig, strategy: SteadyStrategy) -> Result<StateMatrix> {
    steady_state_from(model, config, strategy, &StateMatrix::vacuum(model.layout.clone()))
}

pub fn steady_state_from(
    model: &LindbladModel,
    config: &EvolveConfig,
    strategy: SteadyStrategy,
    initial: &StateMatrix,
) -> Result<StateMatrix> {
    if !model.has_dissipation() {
        return Err(Error::InvalidParameter("steady state needs at least one nonzero dissipator".into()));
    }
    let strategy = match strategy {
        SteadyStrategy::Auto if model.dim() <= NULL_SPACE_MAX_DIM => SteadyStrategy::NullSpace,
        SteadyStrategy::Auto => SteadyStrategy::TimeMarch,
        s => s,
    };
    let generator = Generator::new(model, Direction::Forward, Frame::Lab);
    let threshold = RESIDUAL_FACTOR * model.max_rate();
    match strategy {
        SteadyStrategy::NullSpace => null_space(model, &generator, threshold),
        _ => time_march(model, &generator, config, initial, threshold),
    }
}

fn residual(generator: &Generator, rho: &Array2<Complex64>, ws: &mut Workspace) -> f64 {
    let n = generator.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    generator.apply(0.0, rho.as_slice().expect("standard layout"), &mut out, true, ws);
    out.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn time_march(
    model: &LindbladModel,
    generator: &Generator,
    config: &EvolveConfig,
    initial: &StateMatrix,
    threshold: f64,
) -> Result<StateMatrix> {
    if initial.layout() != &model.layout {
        return Err(Error::Layout("initial state does not match model layout".into()));
    }
    let mut cfg = *config;
    cfg.frame = Frame::Lab;
    let propagator = Propagator::new(generator, cfg, true)?;
    let min_rate = model
        .dissipators
        .iter()
        .map(|d| d.rate)
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let chunk = 1.0 / min_rate;
    let mut ws = Workspace::default();
    let mut rho = initial.data().clone();
    let mut elapsed = 0.0;
    let mut res = residual(generator, &rho, &mut ws);
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_CHUNKS {
        if res < threshold {
            return StateMatrix::new(model.layout.clone(), rho);
        }
        let next = propagator.run(&rho, chunk, &[], &[], |_| {})?;
        let change = next.iter().zip(rho.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        rho = next;
        elapsed += chunk;
        res = residual(generator, &rho, &mut ws);
        log::debug!("time march t = {elapsed:.3e} s residual {res:.3e} (target {threshold:.3e}) change {change:.3e}");
        if change < CHANGE_TOL {
            log::debug!("stationary by state change; residual {res:.3e}");
            return StateMatrix::new(model.layout.clone(), rho);
        }
        if change < FLOOR_TOL && change > 0.9 * last_change {
            log::info!("steady state at the integrator floor: change {change:.3e} per chunk, residual {res:.3e}");
            return StateMatrix::new(model.layout.clone(), rho);
        }
        last_change = change;
    }
    Err(Error::SteadyStateNotConverged { residual: res, time: elapsed })
}

fn null_space(model: &LindbladModel, generator: &Generator, threshold: f64) -> Result<StateMatrix> {
    let n = model.dim();
    let nn = n * n;
    let mut super_op = DMatrix::<Complex64>::zeros(nn, nn);
    let mut basis = vec![Complex64::new(0.0, 0.0); nn];
    let mut column = vec![Complex64::new(0.0, 0.0); nn];
    let mut ws = Workspace::default();
    for k in 0..nn {
        basis[k] = Complex64::new(1.0, 0.0);
        generator.apply(0.0, &basis, &mut column, false, &mut ws);
        basis[k] = Complex64::new(0.0, 0.0);
        for (row, v) in column.iter().enumerate() {
            super_op[(row, k)] = *v;
        }
    }
    // trace constraint replaces the (0,0) equation, which is redundant
    let mut rhs = DVector::<Complex64>::zeros(nn);
    for k in 0..nn {
        super_op[(0, k)] = Complex64::new(0.0, 0.0);
    }
    for i in 0..n {
        super_op[(0, i * n + i)] = Complex64::new(1.0, 0.0);
    }
    rhs[0] = Complex64::new(1.0, 0.0);
    let solution = super_op.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if solution.iter().any(|z| !z.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let mut rho = Array2::from_shape_fn((n, n), |(i, j)| solution[i * n + j]);
    let sym = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (rho[(i, j)] + rho[(j, i)].conj()));
    rho = sym;
    let res = residual(generator, &rho, &mut ws);
    if res > threshold {
        return Err(Error::SteadyStateNotConverged { residual: res, time: 0.0 });
    }
    StateMatrix::new(model.layout.clone(), rho)
}
