//! Gated figures of merit and closed-form estimates.
//!
//! With `n(t) = ⟨a†a⟩(t)` and the triangular domain
//! `t ∈ [t_l, t_u]`, `τ ∈ [0, t_u − t]`:
//!
//! * `β = κ_sp ∫ n(t) dt`
//! * `N = ∫∫ n(t) n(t+τ)`
//! * `g² = ∫∫ G2(t, τ) / N`
//! * `I = ∫∫ |G1(t, τ)|² / N`
//!
//! Double integrals use the trapezoid rule in both directions.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::correlations::CorrelationGrid;
use crate::error::{Error, Result};
use crate::model::{derive, DerivedParams, SystemParams};

/// Trapezoid weights for `len` uniformly spaced samples with step `h`.
pub fn trapezoid_weights(len: usize, h: f64) -> Vec<f64> {
    match len {
        0 | 1 => vec![0.0; len],
        _ => {
            let mut w = vec![h; len];
            w[0] = 0.5 * h;
            w[len - 1] = 0.5 * h;
            w
        }
    }
}

/// `∫∫ f(i, k)` over the triangular domain of `grid`, where `f` is evaluated
/// at outer index `i` and inner index `k`.
pub fn triangle_integral(grid: &CorrelationGrid, f: impl Fn(usize, usize) -> f64) -> f64 {
    let outer = trapezoid_weights(grid.spec.n_t, grid.spec.t_step());
    let h_tau = grid.tau_step();
    outer
        .iter()
        .enumerate()
        .map(|(i, wi)| {
            let inner = trapezoid_weights(grid.g1[i].len(), h_tau);
            wi * inner.iter().enumerate().map(|(k, wk)| wk * f(i, k)).sum::<f64>()
        })
        .sum()
}

/// Integral of the piecewise-linear interpolant of `(times, values)` over
/// `[t_l, t_u]`.
pub fn integrate_series(times: &[f64], values: &[f64], t_l: f64, t_u: f64) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidGrid("series is empty or ragged".into()));
    }
    let tol = 1e-12 * t_u.abs().max(1e-300);
    if t_l < times[0] - tol || t_u > times[times.len() - 1] + tol || t_u < t_l {
        return Err(Error::InvalidGrid(format!(
            "gate [{t_l:.6e}, {t_u:.6e}] lies outside the series [{:.6e}, {:.6e}]",
            times[0],
            times[times.len() - 1]
        )));
    }
    let mut total = 0.0;
    for (t, v) in times.windows(2).zip(values.windows(2)) {
        let (a, b) = (t[0].max(t_l), t[1].min(t_u));
        if b <= a {
            continue;
        }
        let slope = (v[1] - v[0]) / (t[1] - t[0]);
        let at = |x: f64| v[0] + slope * (x - t[0]);
        total += 0.5 * (at(a) + at(b)) * (b - a);
    }
    Ok(total)
}

/// `κ_sp ∫_{t_l}^{t_u} n(t) dt` by the trapezoid rule on the stored series.
pub fn brightness(times: &[f64], n_series: &[f64], kappa_sp: f64, t_l: f64, t_u: f64) -> Result<f64> {
    Ok(kappa_sp * integrate_series(times, n_series, t_l, t_u)?)
}

/// `N = ∫∫ n(t) n(t+τ)` on the grid's inner lattice.
pub fn normalization(grid: &CorrelationGrid) -> f64 {
    let r = grid.ratio();
    triangle_integral(grid, |i, k| grid.n_lattice[i * r] * grid.n_lattice[i * r + k])
}

fn require_norm(n_norm: f64) -> Result<()> {
    if n_norm > 0.0 {
        Ok(())
    } else {
        Err(Error::UndefinedMerit(format!("normalization N = {n_norm:.3e} is not positive")))
    }
}

pub fn purity_g2(grid: &CorrelationGrid, n_norm: f64) -> Result<f64> {
    require_norm(n_norm)?;
    Ok(triangle_integral(grid, |i, k| grid.g2[i][k]) / n_norm)
}

pub fn indistinguishability(grid: &CorrelationGrid, n_norm: f64) -> Result<f64> {
    require_norm(n_norm)?;
    Ok(triangle_integral(grid, |i, k| grid.g1[i][k].norm_sqr()) / n_norm)
}

/// Differences between the full grid and its every-other-point sub-grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Convergence {
    pub g2: Option<f64>,
    pub indistinguishability: Option<f64>,
    /// Relative change of `N`.
    pub normalization: Option<f64>,
}

impl Convergence {
    /// Largest available delta, `None` when the grid could not be coarsened.
    pub fn max_delta(&self) -> Option<f64> {
        [self.g2, self.indistinguishability, self.normalization]
            .into_iter()
            .flatten()
            .reduce(f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeritReport {
    pub t_l: f64,
    pub t_u: f64,
    pub beta: f64,
    /// β from the integrator's own running integral, an independent path.
    pub beta_integrator: f64,
    /// Absent when `N = 0`.
    pub g2: Option<f64>,
    pub indistinguishability: Option<f64>,
    pub n_norm: f64,
    pub convergence: Convergence,
}

struct Merits {
    g2: Option<f64>,
    indistinguishability: Option<f64>,
    n_norm: f64,
}

fn merits(grid: &CorrelationGrid) -> Merits {
    let n_norm = normalization(grid);
    Merits {
        g2: purity_g2(grid, n_norm).ok(),
        indistinguishability: indistinguishability(grid, n_norm).ok(),
        n_norm,
    }
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

/// All merits for the gate covered by `grid`.
pub fn evaluate(grid: &CorrelationGrid, kappa_sp: f64) -> Result<MeritReport> {
    let (t_l, t_u) = (grid.spec.t_l, grid.spec.t_u);
    let beta = brightness(&grid.n_times, &grid.n_series, kappa_sp, t_l, t_u)?;
    let beta_integrator =
        kappa_sp * (interpolate(&grid.n_times, &grid.n_cumulative, t_u)? - interpolate(&grid.n_times, &grid.n_cumulative, t_l)?);
    let full = merits(grid);
    let convergence = grid
        .coarsen()
        .map(|coarse| {
            let c = merits(&coarse);
            Convergence {
                g2: delta(full.g2, c.g2),
                indistinguishability: delta(full.indistinguishability, c.indistinguishability),
                normalization: (full.n_norm > 0.0).then(|| ((full.n_norm - c.n_norm) / full.n_norm).abs()),
            }
        })
        .unwrap_or_default();
    Ok(MeritReport {
        t_l,
        t_u,
        beta,
        beta_integrator,
        g2: full.g2,
        indistinguishability: full.indistinguishability,
        n_norm: full.n_norm,
        convergence,
    })
}

/// Merits for a sub-gate whose endpoints lie on the outer grid.
pub fn evaluate_gate(grid: &CorrelationGrid, kappa_sp: f64, t_l: f64, t_u: f64) -> Result<MeritReport> {
    evaluate(&grid.restrict(t_l, t_u)?, kappa_sp)
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    let tol = 1e-12 * t.abs().max(1e-300);
    let k = times.partition_point(|&x| x < t - tol);
    if k >= times.len() {
        return Err(Error::InvalidGrid(format!("{t:.6e} s lies beyond the series")));
    }
    if (times[k] - t).abs() <= tol || k == 0 {
        return Ok(values[k]);
    }
    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    Ok(values[k - 1] + w * (values[k] - values[k - 1]))
}

/// Membrane material constants for the quality-factor scaling
/// `Q_m ≈ Q₀ σ² / (3 E ρ h² f_m²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Intrinsic (unstressed) quality factor.
    pub q0: f64,
    /// Tensile stress (Pa).
    pub stress: f64,
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    /// Mass density (kg/m³).
    pub density: f64,
    /// Thickness (m).
    pub thickness: f64,
}

impl MaterialParams {
    /// High-stress silicon nitride, 20 nm thick.
    pub fn silicon_nitride() -> Self {
        Self { q0: 2.6e3, stress: 3.8e9, youngs_modulus: 250e9, density: 3100.0, thickness: 20e-9 }
    }

    pub fn quality_factor(&self, f_m: f64) -> f64 {
        self.q0 * self.stress * self.stress
            / (3.0 * self.youngs_modulus * self.density * self.thickness * self.thickness * f_m * f_m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticEstimate {
    pub derived: DerivedParams,
    /// π / R
    pub t_u_opt: f64,
    /// δ satisfying δ κ_sp = 2 g_sp λ.
    pub critical_delta: f64,
    /// `(√(n_th γ_m (2 n_th γ_m + κ_c)) / 2, 2 κ_c)`.
    pub g_c_window: (f64, f64),
    /// False when the window is empty.
    pub g_c_window_feasible: bool,
    pub q_m_estimate: Option<f64>,
}

pub fn analytic_suite(
    params: &SystemParams,
    material: Option<&MaterialParams>,
    constants: &PhysicalConstants,
) -> Result<AnalyticEstimate> {
    let derived = derive(params, constants)?;
    let heating = derived.n_th * derived.gamma_m;
    let g_c_window = ((heating * (2.0 * heating + params.kappa_c)).sqrt() / 2.0, 2.0 * params.kappa_c);
    let critical_delta = if params.kappa_sp > 0.0 {
        2.0 * params.g_sp * params.lambda / params.kappa_sp
    } else {
        f64::INFINITY
    };
    Ok(AnalyticEstimate {
        derived,
        t_u_opt: std::f64::consts::PI / derived.emission_rate,
        critical_delta,
        g_c_window,
        g_c_window_feasible: g_c_window.0 < g_c_window.1,
        q_m_estimate: material.map(|m| m.quality_factor(params.f_m)),
    })
}
