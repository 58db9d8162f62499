//! Physical parameters, derived rates and the Lindblad model of the
//! spin-optomechanical interface.
//!
//! All rates are angular frequencies (rad/s); times are seconds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, TWO_PI};
use crate::error::{Error, Result};
use crate::operator::{
    annihilation, embed, number, spin_lowering, HilbertLayout, OperatorMatrix, COOLING, PHONON,
    PHOTON, SPIN,
};
use crate::sparse::SparseMatrix;

/// Ratio used to decide the "much greater than" regime checks.
pub const MUCH_GREATER: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Mechanical frequency (Hz).
    pub f_m: f64,
    pub q_m: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    pub lambda: f64,
    pub g_sp: f64,
    pub g_c: f64,
    pub kappa_sp: f64,
    pub kappa_c: f64,
    pub gamma_star: f64,
    /// Raman detuning ω_q − ω_m.
    pub delta: f64,
    pub t_l: f64,
    pub t_u: f64,
    /// Optional spin relaxation (σ₋) rate; zero reproduces the bare model.
    pub gamma_relax: f64,
}

impl SystemParams {
    /// Reference operating point: T = 300 K, Q_m = 5e8, f_m = 3 MHz,
    /// δ = 2π·1 MHz, λ = g_sp = 2π·100 kHz, κ_sp = 2π·20 kHz,
    /// κ_c = 4 g_c = 2π·600 kHz, γ* = 2π·0.2 kHz, gate 10–22 μs.
    pub fn reference() -> Self {
        Self {
            f_m: 3.0e6,
            q_m: 5.0e8,
            temperature: 300.0,
            lambda: TWO_PI * 100e3,
            g_sp: TWO_PI * 100e3,
            g_c: TWO_PI * 150e3,
            kappa_sp: TWO_PI * 20e3,
            kappa_c: TWO_PI * 600e3,
            gamma_star: TWO_PI * 0.2e3,
            delta: TWO_PI * 1.0e6,
            t_l: 10e-6,
            t_u: 22e-6,
            gamma_relax: 0.0,
        }
    }

    /// High-Q operating point: f_m = 2 MHz, Q_m = 1e10, g_sp = λ = 2π·50 kHz,
    /// δ = 2π·0.6 MHz, κ_sp = 2Ω, κ_c = 2 g_c = 2π·60 kHz, gate 20–65 μs.
    pub fn high_q() -> Self {
        let g = TWO_PI * 50e3;
        let delta = TWO_PI * 0.6e6;
        Self {
            f_m: 2.0e6,
            q_m: 1.0e10,
            temperature: 300.0,
            lambda: g,
            g_sp: g,
            g_c: TWO_PI * 30e3,
            kappa_sp: 2.0 * g * g / delta,
            kappa_c: TWO_PI * 60e3,
            gamma_star: TWO_PI * 0.2e3,
            delta,
            t_l: 20e-6,
            t_u: 65e-6,
            gamma_relax: 0.0,
        }
    }

    pub fn omega_m(&self) -> f64 {
        TWO_PI * self.f_m
    }

    pub fn omega_q(&self) -> f64 {
        self.omega_m() + self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lambda", self.lambda),
            ("g_sp", self.g_sp),
            ("g_c", self.g_c),
            ("kappa_sp", self.kappa_sp),
            ("kappa_c", self.kappa_c),
            ("gamma_star", self.gamma_star),
            ("gamma_relax", self.gamma_relax),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.f_m.is_finite() && self.f_m > 0.0) {
            return Err(Error::InvalidParameter(format!("f_m = {} must be > 0", self.f_m)));
        }
        if !(self.q_m.is_finite() && self.q_m > 0.0) {
            return Err(Error::InvalidParameter(format!("q_m = {} must be > 0", self.q_m)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature = {} must be >= 0",
                self.temperature
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        if !(self.t_l >= 0.0 && self.t_u > self.t_l && self.t_u.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gate requires 0 <= t_l < t_u (got {}, {})",
                self.t_l, self.t_u
            )));
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedParams {
    pub omega_m: f64,
    pub omega_q: f64,
    pub gamma_m: f64,
    /// Mean bath phonon number k_B T / ħ ω_m.
    pub n_th: f64,
    /// Effective spin-photon coupling Ω = g_sp λ / δ.
    pub omega_eff: f64,
    /// Effective thermal noise Γ_th = g_sp λ n_th γ_m / δ².
    pub gamma_th: f64,
    /// Effective emission rate R = 4Ω² / (κ_sp + 2γ* + 4Γ_th).
    pub emission_rate: f64,
    /// Maximum efficiency β₀ = R / (R + 2Γ_th).
    pub beta_0: f64,
}

pub fn derive(params: &SystemParams, constants: &PhysicalConstants) -> Result<DerivedParams> {
    params.validate()?;
    if params.delta == 0.0 {
        return Err(Error::SingularDetuning("delta"));
    }
    let omega_m = params.omega_m();
    let omega_q = params.omega_q();
    let gamma_m = omega_m / params.q_m;
    let n_th = constants.boltzmann * params.temperature / (constants.hbar * omega_m);
    let coupling = params.g_sp * params.lambda;
    let omega_eff = coupling / params.delta;
    let gamma_th = coupling * n_th * gamma_m / (params.delta * params.delta);
    let denom = params.kappa_sp + 2.0 * params.gamma_star + 4.0 * gamma_th;
    let emission_rate = if denom > 0.0 {
        4.0 * omega_eff * omega_eff / denom
    } else {
        f64::INFINITY
    };
    let beta_0 = if emission_rate.is_infinite() {
        1.0
    } else if emission_rate + 2.0 * gamma_th > 0.0 {
        emission_rate / (emission_rate + 2.0 * gamma_th)
    } else {
        0.0
    };
    Ok(DerivedParams {
        omega_m,
        omega_q,
        gamma_m,
        n_th,
        omega_eff,
        gamma_th,
        emission_rate,
        beta_0,
    })
}

/// Zero-point amplitude √(ħ / 2 m ω_m), metres.
pub fn zero_point_amplitude(m_eff: f64, f_m: f64, constants: &PhysicalConstants) -> f64 {
    (constants.hbar / (2.0 * m_eff * TWO_PI * f_m)).sqrt()
}

/// Spin-mechanics coupling λ = 2 μ_B x_zpf G_m / ħ (rad/s).
pub fn spin_mechanics_coupling(
    gradient: f64,
    m_eff: f64,
    f_m: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    for (name, v) in [("gradient", gradient), ("m_eff", m_eff), ("f_m", f_m)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
        }
    }
    let x_zpf = zero_point_amplitude(m_eff, f_m, constants);
    Ok(2.0 * constants.bohr_magneton * x_zpf * gradient / constants.hbar)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DressedSplitting {
    pub omega_q: f64,
    /// False when Δ_q < 10 Ω_q, outside the dispersive dressing regime.
    pub dispersive: bool,
}

/// Dressed-state splitting ω_q = Ω_q² / Δ_q.
pub fn dressed_splitting(rabi: f64, detuning: f64) -> Result<DressedSplitting> {
    if detuning == 0.0 {
        return Err(Error::SingularDetuning("Delta_q"));
    }
    let dispersive = detuning.abs() >= 10.0 * rabi.abs();
    if !dispersive {
        log::warn!(
            "microwave detuning {detuning:.3e} is not much larger than Rabi frequency {rabi:.3e}"
        );
    }
    Ok(DressedSplitting {
        omega_q: rabi * rabi / detuning,
        dispersive,
    })
}

/// Fock-space truncations of the three bosonic modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub n_b: usize,
    pub n_a: usize,
    pub n_c: usize,
}

impl Truncation {
    pub fn validate(&self) -> Result<()> {
        for n in [self.n_b, self.n_a, self.n_c] {
            if n < 2 {
                return Err(Error::InvalidTruncation(n));
            }
        }
        Ok(())
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self { n_b: 8, n_a: 3, n_c: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct Dissipator {
    pub label: &'static str,
    pub rate: f64,
    pub operator: OperatorMatrix,
}

#[derive(Clone, Debug)]
pub struct LindbladModel {
    pub layout: Arc<HilbertLayout>,
    pub hamiltonian: OperatorMatrix,
    pub dissipators: Vec<Dissipator>,
}

impl LindbladModel {
    pub fn new(
        layout: Arc<HilbertLayout>,
        hamiltonian: OperatorMatrix,
        dissipators: Vec<Dissipator>,
    ) -> Result<Self> {
        if hamiltonian.layout() != &layout || dissipators.iter().any(|d| d.operator.layout() != &layout) {
            return Err(Error::Layout("model operators use different layouts".into()));
        }
        let residual = hamiltonian.matrix().hermiticity_residual();
        if residual > 1e-10 * hamiltonian.matrix().max_abs().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hamiltonian is not Hermitian (residual {residual:.3e})"
            )));
        }
        if let Some(d) = dissipators.iter().find(|d| !(d.rate >= 0.0 && d.rate.is_finite())) {
            return Err(Error::InvalidParameter(format!("dissipator {} has rate {}", d.label, d.rate)));
        }
        Ok(Self {
            layout,
            hamiltonian,
            dissipators,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Largest dissipative rate in the model.
    pub fn max_rate(&self) -> f64 {
        self.dissipators.iter().map(|d| d.rate).fold(0.0, f64::max)
    }

    pub fn has_dissipation(&self) -> bool {
        self.dissipators.iter().any(|d| d.rate > 0.0)
    }

    pub fn operator(&self, op: &SparseMatrix, index: usize) -> Result<OperatorMatrix> {
        embed(op, index, &self.layout)
    }
}

/// Builds the full model on spin ⊗ phonon ⊗ photon ⊗ cooling.
///
/// `H = ω_q(σ₊σ₋ + a†a) + ω_m(b†b + c†c) + (λσ₋ + g_sp a + g_c c)(b + b†) + h.c.`
/// with dephasing, both cavity decays and the thermal mechanical bath. With
/// `include_spin_drive = false` the spin-mechanics term is dropped, leaving
/// the spin as a spectator.
pub fn build_model(params: &SystemParams, trunc: Truncation, include_spin_drive: bool) -> Result<LindbladModel> {
    trunc.validate()?;
    let derived = derive(params, &PhysicalConstants::CODATA_2018)?;
    let layout = Arc::new(HilbertLayout::spin_optomechanical(trunc.n_b, trunc.n_a, trunc.n_c)?);

    let sm = spin_lowering();
    let sigma_m = embed(&sm, SPIN, &layout)?;
    let sigma_ee = embed(&sm.adjoint().matmul(&sm), SPIN, &layout)?;
    let b = embed(&annihilation(trunc.n_b)?, PHONON, &layout)?;
    let a = embed(&annihilation(trunc.n_a)?, PHOTON, &layout)?;
    let c = embed(&annihilation(trunc.n_c)?, COOLING, &layout)?;
    let nb = embed(&number(trunc.n_b)?, PHONON, &layout)?;
    let na = embed(&number(trunc.n_a)?, PHOTON, &layout)?;
    let nc = embed(&number(trunc.n_c)?, COOLING, &layout)?;

    let lambda = if include_spin_drive { params.lambda } else { 0.0 };
    let bare = sigma_ee
        .add(&na)
        .scale(derived.omega_q)
        .add(&nb.add(&nc).scale(derived.omega_m));
    let x_b = b.add(&b.adjoint());
    let source = sigma_m
        .scale(lambda)
        .add(&a.scale(params.g_sp))
        .add(&c.scale(params.g_c));
    let coupling = source.matmul(&x_b);
    let coupling = coupling.add(&coupling.adjoint());
    let hamiltonian = bare.add(&coupling);

    let mut dissipators = vec![
        Dissipator { label: "dephasing", rate: params.gamma_star, operator: sigma_ee },
        Dissipator { label: "photon_decay", rate: params.kappa_sp, operator: a },
        Dissipator { label: "cooling_decay", rate: params.kappa_c, operator: c },
        Dissipator {
            label: "thermal_absorption",
            rate: derived.gamma_m * derived.n_th,
            operator: b.adjoint(),
        },
        Dissipator {
            label: "thermal_emission",
            rate: derived.gamma_m * (1.0 + derived.n_th),
            operator: b,
        },
    ];
    if params.gamma_relax > 0.0 {
        dissipators.push(Dissipator { label: "spin_relaxation", rate: params.gamma_relax, operator: sigma_m });
    }
    LindbladModel::new(layout, hamiltonian, dissipators)
}

/// The spin-free part of the model (phonon ⊗ photon ⊗ cooling), used for the
/// pre-emission cooling equilibrium where the spin is a decoupled spectator.
pub fn build_bath_model(params: &SystemParams, trunc: Truncation) -> Result<LindbladModel> {
    trunc.validate()?;
    let derived = derive(params, &PhysicalConstants::CODATA_2018)?;
    let layout = Arc::new(HilbertLayout::new(
        vec![trunc.n_b, trunc.n_a, trunc.n_c],
        vec!["phonon", "photon", "cooling"],
    )?);
    let b = embed(&annihilation(trunc.n_b)?, 0, &layout)?;
    let a = embed(&annihilation(trunc.n_a)?, 1, &layout)?;
    let c = embed(&annihilation(trunc.n_c)?, 2, &layout)?;
    let nb = embed(&number(trunc.n_b)?, 0, &layout)?;
    let na = embed(&number(trunc.n_a)?, 1, &layout)?;
    let nc = embed(&number(trunc.n_c)?, 2, &layout)?;
    let bare = na.scale(derived.omega_q).add(&nb.add(&nc).scale(derived.omega_m));
    let source = a.scale(params.g_sp).add(&c.scale(params.g_c));
    let coupling = source.matmul(&b.add(&b.adjoint()));
    let hamiltonian = bare.add(&coupling.add(&coupling.adjoint()));
    let dissipators = vec![
        Dissipator { label: "photon_decay", rate: params.kappa_sp, operator: a },
        Dissipator { label: "cooling_decay", rate: params.kappa_c, operator: c },
        Dissipator {
            label: "thermal_absorption",
            rate: derived.gamma_m * derived.n_th,
            operator: b.adjoint(),
        },
        Dissipator {
            label: "thermal_emission",
            rate: derived.gamma_m * (1.0 + derived.n_th),
            operator: b,
        },
    ];
    LindbladModel::new(layout, hamiltonian, dissipators)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Check {
    pub ok: bool,
    /// Ratio of the two sides, oriented so that `margin > 1` ⇔ `ok`.
    pub margin: f64,
}

impl Check {
    fn greater(lhs: f64, rhs: f64) -> Self {
        Self {
            ok: lhs > rhs,
            margin: if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// κ_c < ω_m
    pub sideband_resolved: Check,
    /// g_c < 2κ_c
    pub no_normal_mode_splitting: Check,
    /// 4g_c² > n_th γ_m (2 n_th γ_m + κ_c)
    pub cooling_sufficient: Check,
    /// δ ≫ λ and δ ≫ g_sp
    pub adiabatic_ok: bool,
    pub delta_over_lambda: f64,
    pub delta_over_g_sp: f64,
    /// δ, g_c ≪ ω_q, ω_m
    pub rwa_ok: bool,
    pub delta_over_omega_q: f64,
    pub g_c_over_omega_m: f64,
    /// |δκ_sp − 2 g_sp λ| / (δκ_sp)
    pub critical_coupling_residual: f64,
}

impl FeasibilityReport {
    pub fn all_ok(&self) -> bool {
        self.sideband_resolved.ok
            && self.no_normal_mode_splitting.ok
            && self.cooling_sufficient.ok
            && self.adiabatic_ok
            && self.rwa_ok
    }
}

pub fn feasibility(params: &SystemParams, derived: &DerivedParams) -> FeasibilityReport {
    let heating = derived.n_th * derived.gamma_m;
    let delta = params.delta.abs();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let delta_over_lambda = ratio(delta, params.lambda);
    let delta_over_g_sp = ratio(delta, params.g_sp);
    let delta_over_omega_q = delta / derived.omega_q.abs();
    let g_c_over_omega_m = params.g_c / derived.omega_m;
    let dk = delta * params.kappa_sp;
    FeasibilityReport {
        sideband_resolved: Check::greater(derived.omega_m, params.kappa_c),
        no_normal_mode_splitting: Check::greater(2.0 * params.kappa_c, params.g_c),
        cooling_sufficient: Check::greater(
            4.0 * params.g_c * params.g_c,
            heating * (2.0 * heating + params.kappa_c),
        ),
        adiabatic_ok: delta_over_lambda >= MUCH_GREATER && delta_over_g_sp >= MUCH_GREATER,
        delta_over_lambda,
        delta_over_g_sp,
        rwa_ok: delta_over_omega_q * MUCH_GREATER <= 1.0 && g_c_over_omega_m * MUCH_GREATER <= 1.0,
        delta_over_omega_q,
        g_c_over_omega_m,
        critical_coupling_residual: if dk > 0.0 {
            (dk - 2.0 * params.g_sp * params.lambda).abs() / dk
        } else {
            f64::INFINITY
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TWO_PI;

    const K: PhysicalConstants = PhysicalConstants::CODATA_2018;

    #[test]
    fn reference_point_derived_values() {
        let d = derive(&SystemParams::reference(), &K).unwrap();
        // n_th = k_B T / (ħ 2π f_m) evaluated by hand: 2.0836e6
        assert!((d.n_th / 2.084e6 - 1.0).abs() < 1e-3, "{}", d.n_th);
        assert!((d.omega_eff / (TWO_PI * 10e3) - 1.0).abs() < 1e-12);
        assert!((d.gamma_th / (TWO_PI * 125.0) - 1.0).abs() < 1e-2, "{}", d.gamma_th / TWO_PI);
        assert!((d.emission_rate / (TWO_PI * 19.1e3) - 1.0).abs() < 1e-2);
        assert!((d.beta_0 - 0.987).abs() < 1e-3);
        assert!((d.omega_q - TWO_PI * 4e6).abs() < 1e-6);
        assert!((d.gamma_m - TWO_PI * 3e6 / 5e8).abs() < 1e-12);
    }

    #[test]
    fn zero_detuning_is_singular() {
        let mut p = SystemParams::reference();
        p.delta = 0.0;
        assert!(matches!(derive(&p, &K), Err(Error::SingularDetuning(_))));
    }

    #[test]
    fn zero_temperature_is_valid() {
        let mut p = SystemParams::reference();
        p.temperature = 0.0;
        let d = derive(&p, &K).unwrap();
        assert_eq!(d.n_th, 0.0);
        assert_eq!(d.gamma_th, 0.0);
        assert_eq!(d.beta_0, 1.0);
    }

    #[test]
    fn invalid_gate_rejected() {
        let mut p = SystemParams::reference();
        p.t_u = p.t_l;
        assert!(p.validate().is_err());
        p = SystemParams::reference();
        p.kappa_sp = -1.0;
        assert!(derive(&p, &K).is_err());
    }

    #[test]
    fn derived_rates_scale_with_common_factor() {
        let p = SystemParams::reference();
        let s = 3.7;
        let mut q = p;
        q.f_m *= s;
        q.temperature *= s;
        for r in [&mut q.lambda, &mut q.g_sp, &mut q.g_c, &mut q.kappa_sp, &mut q.kappa_c, &mut q.gamma_star, &mut q.delta] {
            *r *= s;
        }
        let (dp, dq) = (derive(&p, &K).unwrap(), derive(&q, &K).unwrap());
        assert!((dq.n_th / dp.n_th - 1.0).abs() < 1e-12);
        assert!((dq.omega_eff / dp.omega_eff - s).abs() < 1e-9);
        assert!((dq.gamma_th / dp.gamma_th - s).abs() < 1e-9);
        assert!((dq.emission_rate / dp.emission_rate - s).abs() < 1e-9);
        assert!((dq.beta_0 - dp.beta_0).abs() < 1e-12);
    }

    #[test]
    fn coupling_scaling_laws() {
        let base = spin_mechanics_coupling(1e8, 1e-13, 3e6, &K).unwrap();
        let doubled = spin_mechanics_coupling(2e8, 1e-13, 3e6, &K).unwrap();
        let heavy = spin_mechanics_coupling(1e8, 4e-13, 3e6, &K).unwrap();
        assert!((doubled / base - 2.0).abs() < 1e-12);
        assert!((heavy / base - 0.5).abs() < 1e-12);
        assert!(spin_mechanics_coupling(0.0, 1e-13, 3e6, &K).is_err());
        assert!(spin_mechanics_coupling(1e8, -1.0, 3e6, &K).is_err());
    }

    #[test]
    fn coupling_golden_value() {
        // 0.1 ng, 3 MHz, 1e8 T/m: x_zpf = 5.28899e-15 m, λ = 9.30238e4 rad/s
        let x = zero_point_amplitude(1e-13, 3e6, &K);
        assert!((x / 5.288987e-15 - 1.0).abs() < 1e-6, "{x}");
        let lambda = spin_mechanics_coupling(1e8, 1e-13, 3e6, &K).unwrap();
        assert!((lambda / 9.302377e4 - 1.0).abs() < 1e-6, "{lambda}");
    }

    #[test]
    fn dressed_splitting_values() {
        let s = dressed_splitting(TWO_PI * 1e6, TWO_PI * 10e6).unwrap();
        assert!((s.omega_q - TWO_PI * 100e3).abs() < 1e-6);
        assert!(s.dispersive);
        let scaled = dressed_splitting(3.0 * TWO_PI * 1e6, TWO_PI * 10e6).unwrap();
        assert!((scaled.omega_q / s.omega_q - 9.0).abs() < 1e-12);
        assert!(!dressed_splitting(1.0, 1.0).unwrap().dispersive);
        assert!(dressed_splitting(1.0, 0.0).is_err());
    }

    #[test]
    fn model_structure() {
        let p = SystemParams::reference();
        let m = build_model(&p, Truncation { n_b: 3, n_a: 2, n_c: 2 }, true).unwrap();
        assert!(m.hamiltonian.matrix().hermiticity_residual() < 1e-12);
        let labels: Vec<_> = m.dissipators.iter().map(|d| d.label).collect();
        assert_eq!(
            labels,
            ["dephasing", "photon_decay", "cooling_decay", "thermal_absorption", "thermal_emission"]
        );
        let d = derive(&p, &K).unwrap();
        assert!((m.dissipators[3].rate - d.gamma_m * d.n_th).abs() < 1e-9);
        assert!((m.dissipators[4].rate - d.gamma_m * (1.0 + d.n_th)).abs() < 1e-9);
    }

    #[test]
    fn interaction_couples_only_phonon_pairs() {
        let p = SystemParams::reference();
        let m = build_model(&p, Truncation { n_b: 3, n_a: 2, n_c: 2 }, true).unwrap();
        let l = m.layout.clone();
        let mut pairs = std::collections::BTreeSet::new();
        for (r, c, _) in m.hamiltonian.matrix().triplets() {
            if r == c {
                continue;
            }
            let (dr, dc) = (l.digits(r), l.digits(c));
            let changed: Vec<usize> = (0..4).filter(|&k| dr[k] != dc[k]).collect();
            pairs.insert(changed);
        }
        let expected: std::collections::BTreeSet<Vec<usize>> =
            [vec![SPIN, PHONON], vec![PHONON, PHOTON], vec![PHONON, COOLING]].into_iter().collect();
        assert_eq!(pairs, expected);
    }

    #[test]
    fn uncoupled_model_is_diagonal() {
        let mut p = SystemParams::reference();
        p.lambda = 0.0;
        p.g_sp = 0.0;
        p.g_c = 0.0;
        let m = build_model(&p, Truncation { n_b: 3, n_a: 2, n_c: 2 }, true).unwrap();
        assert!(m.hamiltonian.matrix().triplets().all(|(r, c, _)| r == c));
    }

    #[test]
    fn spin_drive_flag_removes_spin_coupling() {
        let p = SystemParams::reference();
        let m = build_model(&p, Truncation { n_b: 3, n_a: 2, n_c: 2 }, false).unwrap();
        for (r, c, _) in m.hamiltonian.matrix().triplets() {
            assert_eq!(m.layout.digits(r)[SPIN], m.layout.digits(c)[SPIN]);
        }
    }

    #[test]
    fn reference_feasibility() {
        let p = SystemParams::reference();
        let f = feasibility(&p, &derive(&p, &K).unwrap());
        assert!(f.sideband_resolved.ok);
        assert!((f.sideband_resolved.margin - 5.0).abs() < 1e-12);
        assert!(f.no_normal_mode_splitting.ok);
        assert!((f.no_normal_mode_splitting.margin - 8.0).abs() < 1e-12);
        assert!(f.cooling_sufficient.ok);
        // 4g_c² = 9.0e10, n_thγ_m(2n_thγ_m+κ_c) = 7.8e9 in Hz² → margin ≈ 11.5
        assert!((f.cooling_sufficient.margin - 9.0e10 / 7.81e9).abs() < 0.05);
        assert!(f.critical_coupling_residual < 1e-12);
        assert!(f.all_ok());
    }

    #[test]
    fn feasibility_failures() {
        let mut p = SystemParams::reference();
        p.g_c = 0.0;
        assert!(!feasibility(&p, &derive(&p, &K).unwrap()).cooling_sufficient.ok);
        let mut p = SystemParams::reference();
        p.g_c = TWO_PI * 1.0e6;
        assert!(feasibility(&p, &derive(&p, &K).unwrap()).no_normal_mode_splitting.ok);
        p.g_c = TWO_PI * 1.3e6;
        assert!(!feasibility(&p, &derive(&p, &K).unwrap()).no_normal_mode_splitting.ok);
        let mut p = SystemParams::reference();
        p.kappa_c = TWO_PI * 4e6;
        assert!(!feasibility(&p, &derive(&p, &K).unwrap()).sideband_resolved.ok);
    }
}
