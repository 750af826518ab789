//! Per-unit bases and conversions between WTG-base and grid-base power.
//!
//! WTG-internal dynamics run on the turbine's own rated power; anything that
//! mixes turbine and grid quantities (total power imbalance, coordinated
//! support shares) runs on the grid base.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rated powers of the grid equivalent and of one WTG, in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBase {
    pub grid_rated: f64,
    pub wtg_rated: f64,
}

impl PowerBase {
    pub fn new(grid_rated: f64, wtg_rated: f64) -> Result<Self> {
        let base = Self {
            grid_rated,
            wtg_rated,
        };
        base.validate()?;
        Ok(base)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_rated > 0.0 && self.grid_rated.is_finite()) {
            return Err(Error::domain(format!(
                "grid rated power must be positive, got {}",
                self.grid_rated
            )));
        }
        if !(self.wtg_rated > 0.0 && self.wtg_rated.is_finite()) {
            return Err(Error::domain(format!(
                "WTG rated power must be positive, got {}",
                self.wtg_rated
            )));
        }
        Ok(())
    }

    /// Multiplier taking WTG-base pu to grid-base pu.
    pub fn ratio(&self) -> f64 {
        self.wtg_rated / self.grid_rated
    }
}

impl Default for PowerBase {
    fn default() -> Self {
        Self {
            grid_rated: 3.0,
            wtg_rated: 1.5,
        }
    }
}

/// Angular-speed bases: the grid at its synchronous speed, the WTG rotor at
/// the synchronous speed divided by the pole-pair count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularBase {
    pub grid_omega_base: f64,
    pub pole_pairs: u32,
}

impl AngularBase {
    pub fn new(grid_omega_base: f64, pole_pairs: u32) -> Result<Self> {
        if !(grid_omega_base > 0.0 && grid_omega_base.is_finite()) {
            return Err(Error::domain(format!(
                "grid angular base must be positive, got {grid_omega_base}"
            )));
        }
        if pole_pairs == 0 {
            return Err(Error::domain("pole-pair count must be at least 1"));
        }
        Ok(Self {
            grid_omega_base,
            pole_pairs,
        })
    }

    pub fn wtg_omega_base(&self) -> f64 {
        self.grid_omega_base / f64::from(self.pole_pairs)
    }
}

impl Default for AngularBase {
    /// 60 Hz grid, three pole pairs.
    fn default() -> Self {
        Self {
            grid_omega_base: 120.0 * std::f64::consts::PI,
            pole_pairs: 3,
        }
    }
}

pub fn wtg_to_grid_pu(p_wtg: f64, base: &PowerBase) -> f64 {
    p_wtg * base.ratio()
}

pub fn grid_to_wtg_pu(p_grid: f64, base: &PowerBase) -> f64 {
    p_grid / base.ratio()
}
