//! CODATA 2018 physical constants (SI units).

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Reduced Planck constant, J·s (exact).
pub const HBAR: f64 = 1.054571817e-34;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.2740100783e-24;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    pub boltzmann: f64,
    pub hbar: f64,
    pub bohr_magneton: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: Self = Self {
        boltzmann: BOLTZMANN,
        hbar: HBAR,
        bohr_magneton: BOHR_MAGNETON,
    };

    /// One-line description used in output provenance headers.
    pub fn describe(&self) -> String {
        format!(
            "CODATA-2018 k_B={:e} J/K hbar={:e} J*s mu_B={:e} J/T",
            self.boltzmann, self.hbar, self.bohr_magneton
        )
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}
