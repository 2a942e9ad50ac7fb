//! Two-group diffusion evaluation of assembly layouts.
//!
//! The built-in evaluator solves the two-group, mesh-centered finite-difference
//! diffusion eigenproblem on the assembly with reflective boundaries. Two
//! fidelity tiers stand in for coarse and fine Monte Carlo corpora: the low
//! tier uses one mesh cell per pin plus seeded statistical noise, the high tier
//! a 2x2 sub-pin mesh and no noise. An external process speaking the
//! line-delimited JSON protocol in [`external`] can replace the built-in
//! solver entirely.

mod calibrate;
mod evaluator;
pub mod external;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::PinKind;

pub(crate) use calibrate::median;
pub use calibrate::{calibrate, CalibrationReport, LevelStats, TargetCheck, CALIBRATION_LEVELS};
pub use evaluator::{BuiltinEvaluator, CountingEvaluator, EvalRequest, Evaluator, NoiseModel};
pub use external::ExternalEvaluator;
pub use solver::{analytic_kinf, solve_diffusion, solve_pin_grid, PinGridSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeutronicsError {
    #[error("degenerate material: {0}")]
    DegenerateMaterial(String),
    #[error(
        "power iteration did not converge in {iterations} iterations (dk={dk:.3e}, ds={ds:.3e})"
    )]
    NoConvergence { iterations: usize, dk: f64, ds: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("external evaluator failure: {0}")]
    External(String),
}

/// Macroscopic two-group constants for one material. Lengths in cm,
/// cross sections in 1/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupXS {
    pub d1: f64,
    pub d2: f64,
    pub sa1: f64,
    pub sa2: f64,
    pub nu_sf1: f64,
    pub nu_sf2: f64,
    pub ss12: f64,
}

impl TwoGroupXS {
    pub const fn new(
        d1: f64,
        d2: f64,
        sa1: f64,
        sa2: f64,
        nu_sf1: f64,
        nu_sf2: f64,
        ss12: f64,
    ) -> Self {
        TwoGroupXS {
            d1,
            d2,
            sa1,
            sa2,
            nu_sf1,
            nu_sf2,
            ss12,
        }
    }

    /// Fast-group removal: absorption plus down-scatter.
    pub fn removal1(&self) -> f64 {
        self.sa1 + self.ss12
    }

    pub fn is_fissile(&self) -> bool {
        self.nu_sf1 > 0.0 || self.nu_sf2 > 0.0
    }

    pub fn validate(&self) -> Result<(), NeutronicsError> {
        let fields = [
            self.d1,
            self.d2,
            self.sa1,
            self.sa2,
            self.nu_sf1,
            self.nu_sf2,
            self.ss12,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NeutronicsError::DegenerateMaterial(format!(
                "negative or non-finite constant in {self:?}"
            )));
        }
        if self.d1 <= 0.0 || self.d2 <= 0.0 {
            return Err(NeutronicsError::DegenerateMaterial(
                "diffusion coefficients must be positive".into(),
            ));
        }
        if self.sa2 <= 0.0 || self.removal1() <= 0.0 {
            return Err(NeutronicsError::DegenerateMaterial(
                "zero removal cross section".into(),
            ));
        }
        Ok(())
    }
}

/// Cross sections for each pin kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XsLibrary {
    pub fuel: TwoGroupXS,
    pub gd: TwoGroupXS,
    pub guide_tube: TwoGroupXS,
}

impl XsLibrary {
    pub fn get(&self, kind: PinKind) -> &TwoGroupXS {
        match kind {
            PinKind::Fuel => &self.fuel,
            PinKind::Gd => &self.gd,
            PinKind::GuideTube => &self.guide_tube,
        }
    }

    pub fn validate(&self) -> Result<(), NeutronicsError> {
        self.fuel.validate()?;
        self.gd.validate()?;
        self.guide_tube.validate()?;
        if self.guide_tube.is_fissile() {
            return Err(NeutronicsError::DegenerateMaterial(
                "guide-tube water must not be fissile".into(),
            ));
        }
        Ok(())
    }
}

impl Default for XsLibrary {
    /// 3.1 wt% UO2 fuel, 8 wt% gadolinia fuel, and guide-tube water.
    fn default() -> Self {
        XsLibrary {
            fuel: TwoGroupXS::new(1.4, 0.4, 0.010, 0.090, 0.007, 0.160, 0.018),
            gd: TwoGroupXS::new(1.4, 0.4, 0.010, 0.750, 0.005, 0.050, 0.018),
            guide_tube: TwoGroupXS::new(1.8, 0.3, 0.0004, 0.010, 0.0, 0.0, 0.045),
        }
    }
}

/// Lattice pitch in cm.
pub const PIN_PITCH_CM: f64 = 1.26;

/// Discretization and convergence settings. Boundaries are always reflective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Mesh cells per pin side; one of 1, 2, 4.
    pub mesh_per_pin: usize,
    pub pitch: f64,
    pub k_tolerance: f64,
    pub source_tolerance: f64,
    pub max_iterations: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), NeutronicsError> {
        if ![1, 2, 4].contains(&self.mesh_per_pin) {
            return Err(NeutronicsError::InvalidConfig(format!(
                "mesh_per_pin must be 1, 2 or 4 (got {})",
                self.mesh_per_pin
            )));
        }
        if !(self.pitch > 0.0 && self.k_tolerance > 0.0 && self.source_tolerance > 0.0) {
            return Err(NeutronicsError::InvalidConfig(
                "pitch and tolerances must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(NeutronicsError::InvalidConfig(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_mesh(self, mesh_per_pin: usize) -> Self {
        SolverConfig {
            mesh_per_pin,
            ..self
        }
    }
}

/// Evaluation precision class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityTier {
    Low,
    High,
}

impl FidelityTier {
    pub fn solver_config(self) -> SolverConfig {
        match self {
            FidelityTier::Low => SolverConfig {
                mesh_per_pin: 1,
                pitch: PIN_PITCH_CM,
                k_tolerance: 1e-5,
                source_tolerance: 1e-4,
                max_iterations: 5000,
            },
            FidelityTier::High => SolverConfig {
                mesh_per_pin: 2,
                pitch: PIN_PITCH_CM,
                k_tolerance: 1e-7,
                source_tolerance: 1e-6,
                max_iterations: 5000,
            },
        }
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, FidelityTier::Low)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FidelityTier::Low => "low",
            FidelityTier::High => "high",
        }
    }
}

impl std::str::FromStr for FidelityTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(FidelityTier::Low),
            "high" => Ok(FidelityTier::High),
            other => Err(format!("unknown fidelity {other:?} (expected low or high)")),
        }
    }
}

impl std::fmt::Display for FidelityTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one layout evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutronicsResult {
    pub k_eff: f64,
    /// Peak local (sub-pin) power over mean.
    pub fq: f64,
    /// Peak pin-integrated power over mean.
    pub fdh: f64,
    /// Relative power of the 264 fuel-bearing pins, in
    /// [`free_cells`](crate::lattice::free_cells) order, mean 1.
    pub pin_power: Vec<f64>,
}

impl NeutronicsResult {
    /// Pin powers laid out on the full grid, zero at guide tubes.
    pub fn pin_power_grid(&self) -> [[f64; crate::lattice::SIDE]; crate::lattice::SIDE] {
        let mut grid = [[0.0; crate::lattice::SIDE]; crate::lattice::SIDE];
        for (c, p) in crate::lattice::free_cells().iter().zip(&self.pin_power) {
            grid[c.row()][c.col()] = *p;
        }
        grid
    }
}
