//! Physical model: aerodynamics, two-mass drive train, active-power loop,
//! MPP tracking reference, and the equivalent-grid governor/swing dynamics.
//!
//! Turbine quantities are per-unit on the turbine's own rated power, grid
//! quantities on the grid's. The aerodynamic model is calibrated through a
//! single reference wind speed `v_w1` at which the MPP rotor speed is 1 pu,
//! which makes the mechanical power and the MPP reference agree exactly on
//! the tracking curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{wtg_to_grid_pu, PowerBase};

/// Power coefficient of the rotor. Negative raw values are clamped to zero.
pub fn cp(lambda: f64, beta: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!(
            "tip-speed ratio must be positive, got {lambda}"
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!(
            "pitch angle must be non-negative, got {beta}"
        )));
    }
    let denom = lambda + 0.08 * beta;
    if denom == 0.0 {
        return Err(Error::domain("singular 1/lambda_i denominator"));
    }
    let inv_lambda_i = 1.0 / denom - 0.035 / (beta * beta * beta + 1.0);
    let raw = 0.5176 * (116.0 * inv_lambda_i - 0.4 * beta - 5.0) * (-21.0 * inv_lambda_i).exp()
        + 0.0068 * lambda;
    Ok(raw.max(0.0))
}

/// Optimal tip-speed ratio and the peak power coefficient at the given pitch.
///
/// Coarse grid search over (1, 20] followed by golden-section refinement.
pub fn optimal_tip_speed(beta: f64) -> Result<(f64, f64)> {
    let mut best = (1.0, f64::NEG_INFINITY);
    let mut lambda = 1.0;
    while lambda <= 20.0 {
        let c = cp(lambda, beta)?;
        if c > best.1 {
            best = (lambda, c);
        }
        lambda += 0.05;
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = ((best.0 - 0.05).max(1e-3), best.0 + 0.05);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = cp(x1, beta)?;
    let mut f2 = cp(x2, beta)?;
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = cp(x2, beta)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = cp(x1, beta)?;
        }
    }
    let lambda_opt = 0.5 * (a + b);
    Ok((lambda_opt, cp(lambda_opt, beta)?))
}

/// Turbine parameters. Times in seconds, stiffness in pu/rad, `omega_b` is
/// the turbine's electrical angular base in rad/s, `a_p` the bandwidth of
/// the active-power loop in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtgParams {
    pub h_t: f64,
    pub h_g: f64,
    pub k_sh: f64,
    pub d_sh: f64,
    pub omega_b: f64,
    pub a_p: f64,
    pub k_opt: f64,
    pub omega_g_min: f64,
    /// Upper clamp on the MPP rotor speed.
    pub omega_max: f64,
    /// Wind speed at which the MPP rotor speed is exactly 1 pu.
    pub v_w1: f64,
    /// Fixed pitch angle in degrees.
    pub beta: f64,
    pub lambda_opt: f64,
    pub cp_max: f64,
}

impl Default for WtgParams {
    fn default() -> Self {
        let (lambda_opt, cp_max) =
            optimal_tip_speed(0.0).expect("power coefficient is finite at zero pitch");
        Self {
            h_t: 4.32,
            h_g: 0.685,
            k_sh: 1.1,
            d_sh: 1.5,
            omega_b: 377.0 / 3.0,
            a_p: 31.4,
            k_opt: 0.4425,
            omega_g_min: 0.71,
            omega_max: 1.2,
            v_w1: 10.2,
            beta: 0.0,
            lambda_opt,
            cp_max,
        }
    }
}

impl WtgParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h_t", self.h_t),
            ("h_g", self.h_g),
            ("k_sh", self.k_sh),
            ("omega_b", self.omega_b),
            ("a_p", self.a_p),
            ("k_opt", self.k_opt),
            ("v_w1", self.v_w1),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "wtg.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.d_sh >= 0.0 && self.d_sh.is_finite()) {
            return Err(Error::config(format!(
                "wtg.d_sh must be non-negative, got {}",
                self.d_sh
            )));
        }
        if !(self.omega_g_min > 0.0 && self.omega_g_min < 1.0) {
            return Err(Error::config(format!(
                "wtg.omega_g_min must lie in (0, 1), got {}",
                self.omega_g_min
            )));
        }
        if !(self.omega_max > self.omega_g_min && self.omega_max.is_finite()) {
            return Err(Error::config("wtg.omega_max must exceed omega_g_min"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("wtg.beta must be non-negative"));
        }
        let (lambda_opt, cp_max) = optimal_tip_speed(0.0)?;
        if (lambda_opt - self.lambda_opt).abs() > 1e-6 || (cp_max - self.cp_max).abs() > 1e-6 {
            return Err(Error::config(format!(
                "aerodynamic calibration (lambda_opt = {}, cp_max = {}) does not match the \
                 optimum of cp(., 0) ({lambda_opt}, {cp_max})",
                self.lambda_opt, self.cp_max
            )));
        }
        Ok(())
    }

    pub fn h_tg(&self) -> f64 {
        self.h_t + self.h_g
    }
}

/// Equivalent synchronous generator plus load. `m` and `t_g` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub m: f64,
    pub d: f64,
    pub t_g: f64,
    pub r_droop: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            m: 4.584,
            d: 1.0,
            t_g: 1.2,
            r_droop: 0.03,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("t_g", self.t_g), ("r_droop", self.r_droop)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "grid.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(Error::config(format!(
                "grid.d must be non-negative, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// Steady-state frequency deviation of the grid alone after a load step.
    pub fn steady_state_deviation(&self, delta_p_l: f64) -> f64 {
        -delta_p_l / (self.d + 1.0 / self.r_droop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WtgState {
    pub omega_t: f64,
    pub omega_g: f64,
    pub theta_sh: f64,
    pub p_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridState {
    pub delta_p_g: f64,
    pub delta_omega: f64,
}

/// Full ODE state: four states per turbine followed by the two grid states.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub wtgs: Vec<WtgState>,
    pub grid: GridState,
}

pub const STATES_PER_WTG: usize = 4;

impl SystemState {
    pub fn dim(&self) -> usize {
        self.wtgs.len() * STATES_PER_WTG + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_into(&mut v);
        v
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.clear();
        for w in &self.wtgs {
            out.extend_from_slice(&[w.omega_t, w.omega_g, w.theta_sh, w.p_e]);
        }
        out.push(self.grid.delta_p_g);
        out.push(self.grid.delta_omega);
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < STATES_PER_WTG + 2 || (x.len() - 2) % STATES_PER_WTG != 0 {
            return Err(Error::config(format!(
                "state vector of length {} is malformed",
                x.len()
            )));
        }
        let n = (x.len() - 2) / STATES_PER_WTG;
        let wtgs = x[..n * STATES_PER_WTG]
            .chunks_exact(STATES_PER_WTG)
            .map(|c| WtgState {
                omega_t: c[0],
                omega_g: c[1],
                theta_sh: c[2],
                p_e: c[3],
            })
            .collect();
        Ok(Self {
            wtgs,
            grid: GridState {
                delta_p_g: x[x.len() - 2],
                delta_omega: x[x.len() - 1],
            },
        })
    }
}

/// Mechanical power on the turbine base for wind speed `v_w` (m/s) and
/// turbine speed `omega_t` (pu).
pub fn mechanical_power(v_w: f64, omega_t: f64, beta: f64, params: &WtgParams) -> Result<f64> {
    if !(v_w > 0.0) || !v_w.is_finite() {
        return Err(Error::domain(format!(
            "wind speed must be positive, got {v_w}"
        )));
    }
    if !(omega_t > 0.0) || !omega_t.is_finite() {
        return Err(Error::domain(format!(
            "turbine speed must be positive, got {omega_t}"
        )));
    }
    let r = v_w / params.v_w1;
    let lambda = params.lambda_opt * (omega_t / r);
    let c = cp(lambda, beta)?;
    Ok(params.k_opt * (c / params.cp_max) * (r * r * r))
}

/// MPP tracking reference with a hard cutoff below the minimum rotor speed.
pub fn mpp_reference(omega_g: f64, params: &WtgParams) -> f64 {
    if omega_g >= params.omega_g_min {
        params.k_opt * (omega_g * omega_g * omega_g)
    } else {
        0.0
    }
}

/// Steady operating point on the MPP curve: `(omega_g0, p_e0)`.
pub fn mpp_equilibrium(v_w: f64, params: &WtgParams) -> Result<(f64, f64)> {
    if !(v_w > 0.0) || !v_w.is_finite() {
        return Err(Error::domain(format!(
            "wind speed must be positive, got {v_w}"
        )));
    }
    let omega = (v_w / params.v_w1).clamp(params.omega_g_min, params.omega_max);
    Ok((omega, mpp_reference(omega, params)))
}

/// Two-mass drive train: `(d omega_t/dt, d omega_g/dt, d theta_sh/dt)`.
pub fn drive_train_deriv(s: &WtgState, t_m: f64, t_e: f64, params: &WtgParams) -> [f64; 3] {
    let slip = s.omega_t - s.omega_g;
    let shaft = params.k_sh * s.theta_sh + params.d_sh * slip;
    [
        (t_m - shaft) / (2.0 * params.h_t),
        (shaft - t_e) / (2.0 * params.h_g),
        params.omega_b * slip,
    ]
}

pub fn power_loop_deriv(p_e: f64, p_ref: f64, a_p: f64) -> f64 {
    a_p * (p_ref - p_e)
}

/// Governor and swing dynamics: `(d delta_p_g/dt, d delta_omega/dt)`.
pub fn grid_deriv(g: &GridState, delta_p_tot: f64, params: &GridParams) -> (f64, f64) {
    let d_pg = -g.delta_omega / (params.r_droop * params.t_g) - g.delta_p_g / params.t_g;
    let d_omega = (delta_p_tot - params.d * g.delta_omega) / params.m;
    (d_pg, d_omega)
}

/// One turbine as connected to the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Turbine {
    pub params: WtgParams,
    pub wind_speed: f64,
    pub base: PowerBase,
    pub omega_g0: f64,
    pub p_e0: f64,
    /// Hold every turbine state at its equilibrium (grid-only studies).
    pub frozen: bool,
}

impl Turbine {
    pub fn new(params: WtgParams, wind_speed: f64, base: PowerBase) -> Result<Self> {
        params.validate()?;
        base.validate()?;
        let (omega_g0, p_e0) = mpp_equilibrium(wind_speed, &params)?;
        Ok(Self {
            params,
            wind_speed,
            base,
            omega_g0,
            p_e0,
            frozen: false,
        })
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// Equilibrium state with the shaft preloaded by the equilibrium torque.
    pub fn equilibrium_state(&self) -> Result<WtgState> {
        let p_m = mechanical_power(
            self.wind_speed,
            self.omega_g0,
            self.params.beta,
            &self.params,
        )?;
        let t_m = p_m / self.omega_g0;
        Ok(WtgState {
            omega_t: self.omega_g0,
            omega_g: self.omega_g0,
            theta_sh: t_m / self.params.k_sh,
            p_e: self.p_e0,
        })
    }
}

/// Per-turbine rates evaluated with zero virtual-inertia contribution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WtgRates {
    pub p_mpp: f64,
    pub d_omega_t: f64,
    pub d_omega_g: f64,
    pub d_theta_sh: f64,
    /// `a_p * (p_mpp - p_e)`; the full rate adds `a_p * p_vir`.
    pub d_p_e_open: f64,
}

/// Everything the controllers need about the plant at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlantRates {
    pub wtgs: Vec<WtgRates>,
    /// Total power imbalance on the grid base.
    pub delta_p_tot: f64,
    pub d_delta_p_g: f64,
    pub d_delta_omega: f64,
}

/// The grid equivalent together with its connected turbines.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub grid: GridParams,
    pub turbines: Vec<Turbine>,
}

impl Plant {
    pub fn new(grid: GridParams, turbines: Vec<Turbine>) -> Result<Self> {
        grid.validate()?;
        if turbines.is_empty() {
            return Err(Error::config("at least one WTG is required"));
        }
        Ok(Self { grid, turbines })
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    /// Pre-event equilibrium: every turbine on its MPP point, zero grid deviation.
    pub fn equilibrium(&self) -> Result<SystemState> {
        Ok(SystemState {
            wtgs: self
                .turbines
                .iter()
                .map(Turbine::equilibrium_state)
                .collect::<Result<_>>()?,
            grid: GridState::default(),
        })
    }

    /// Total imbalance `delta_p_g + sum(P_e - P_e0) - delta_p_l`, grid base.
    pub fn delta_p_tot(&self, s: &SystemState, delta_p_l: f64) -> f64 {
        let wtg: f64 = self
            .turbines
            .iter()
            .zip(&s.wtgs)
            .map(|(tb, w)| wtg_to_grid_pu(w.p_e - tb.p_e0, &tb.base))
            .sum();
        s.grid.delta_p_g + wtg - delta_p_l
    }

    /// Rates of every state except the `p_vir` share of `dP_e/dt`.
    pub fn rates(&self, s: &SystemState, delta_p_l: f64, t: f64) -> Result<PlantRates> {
        if s.wtgs.len() != self.turbines.len() {
            return Err(Error::config(format!(
                "state has {} WTGs, plant has {}",
                s.wtgs.len(),
                self.turbines.len()
            )));
        }
        let mut wtgs = Vec::with_capacity(self.turbines.len());
        for (i, (tb, w)) in self.turbines.iter().zip(&s.wtgs).enumerate() {
            if tb.frozen {
                wtgs.push(WtgRates {
                    p_mpp: tb.p_e0,
                    ..WtgRates::default()
                });
                continue;
            }
            if !(w.omega_t > 0.0 && w.omega_g > 0.0) {
                return Err(Error::SimulationFault {
                    t,
                    reason: format!(
                        "WTG {} rotor speed left the valid range (omega_t = {}, omega_g = {})",
                        i + 1,
                        w.omega_t,
                        w.omega_g
                    ),
                });
            }
            let p_m = mechanical_power(tb.wind_speed, w.omega_t, tb.params.beta, &tb.params)
                .map_err(|e| Error::SimulationFault {
                    t,
                    reason: e.to_string(),
                })?;
            let t_m = p_m / w.omega_t;
            let t_e = w.p_e / w.omega_g;
            let [d_omega_t, d_omega_g, d_theta_sh] = drive_train_deriv(w, t_m, t_e, &tb.params);
            let p_mpp = mpp_reference(w.omega_g, &tb.params);
            wtgs.push(WtgRates {
                p_mpp,
                d_omega_t,
                d_omega_g,
                d_theta_sh,
                d_p_e_open: power_loop_deriv(w.p_e, p_mpp, tb.params.a_p),
            });
        }
        let delta_p_tot = self.delta_p_tot(s, delta_p_l);
        let (d_delta_p_g, d_delta_omega) = grid_deriv(&s.grid, delta_p_tot, &self.grid);
        Ok(PlantRates {
            wtgs,
            delta_p_tot,
            d_delta_p_g,
            d_delta_omega,
        })
    }

    /// Assemble the full derivative from precomputed rates and the per-turbine
    /// virtual-inertia power on each turbine's own base.
    pub fn assemble(&self, rates: &PlantRates, p_vir: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((r, tb), pv) in rates.wtgs.iter().zip(&self.turbines).zip(p_vir) {
            out.extend_from_slice(&[
                r.d_omega_t,
                r.d_omega_g,
                r.d_theta_sh,
                if tb.frozen {
                    0.0
                } else {
                    r.d_p_e_open + tb.params.a_p * pv
                },
            ]);
        }
        out.push(rates.d_delta_p_g);
        out.push(rates.d_delta_omega);
    }

    /// Full-system derivative for a given virtual-inertia command.
    pub fn system_deriv(
        &self,
        s: &SystemState,
        t: f64,
        delta_p_l: f64,
        p_vir: &[f64],
    ) -> Result<SystemState> {
        if p_vir.len() != self.turbines.len() {
            return Err(Error::config(format!(
                "{} virtual-inertia commands for {} WTGs",
                p_vir.len(),
                self.turbines.len()
            )));
        }
        let rates = self.rates(s, delta_p_l, t)?;
        let mut out = Vec::with_capacity(s.dim());
        self.assemble(&rates, p_vir, &mut out);
        SystemState::from_slice(&out)
    }
}
