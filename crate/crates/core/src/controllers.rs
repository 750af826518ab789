//! Virtual inertia controllers: the conventional proportional-derivative
//! law, its time-shaped variant, and the feedback-linearizing controller for
//! one or several turbines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{hurwitz_check, OhftGains};
use crate::plant::{GridParams, Plant, PlantRates, SystemState};
use crate::units::grid_to_wtg_pu;

/// Gains and activity window of the conventional law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionalVicParams {
    pub k_p_vir: f64,
    pub k_d_vir: f64,
    /// Seconds after the event during which the conventional law is active.
    pub hold_duration: f64,
}

impl Default for ConventionalVicParams {
    fn default() -> Self {
        Self {
            k_p_vir: 7.0,
            k_d_vir: 2.0,
            hold_duration: 20.0,
        }
    }
}

impl ConventionalVicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p_vir >= 0.0 && self.k_p_vir.is_finite())
            || !(self.k_d_vir >= 0.0 && self.k_d_vir.is_finite())
        {
            return Err(Error::config("k_p_vir and k_d_vir must be non-negative"));
        }
        if !(self.hold_duration > 0.0 && self.hold_duration.is_finite()) {
            return Err(Error::config("hold_duration must be positive"));
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64, t_event: f64) -> bool {
        t >= t_event && t < t_event + self.hold_duration
    }
}

/// `-k_P * delta_omega - k_D * d(delta_omega)/dt`, without any window.
pub fn vic_law(delta_omega: f64, d_delta_omega_dt: f64, p: &ConventionalVicParams) -> f64 {
    -p.k_p_vir * delta_omega - p.k_d_vir * d_delta_omega_dt
}

/// Conventional VIC on the turbine base; zero outside
/// `[t_event, t_event + hold_duration)`.
pub fn conventional_vic(
    delta_omega: f64,
    d_delta_omega_dt: f64,
    p: &ConventionalVicParams,
    t: f64,
    t_event: f64,
) -> f64 {
    if p.is_active(t, t_event) {
        vic_law(delta_omega, d_delta_omega_dt, p)
    } else {
        0.0
    }
}

pub fn vic_i(p_vir: f64, g_val: f64) -> f64 {
    p_vir * g_val
}

/// Rotor-speed weighting: 0 below `knee_low`, linear to 1 at `knee_high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingF {
    pub knee_low: f64,
    pub knee_high: f64,
}

impl Default for ShapingF {
    fn default() -> Self {
        Self {
            knee_low: 0.71,
            knee_high: 0.95,
        }
    }
}

impl ShapingF {
    pub fn validate(&self, omega_g_min: f64) -> Result<()> {
        if !(self.knee_low >= omega_g_min && self.knee_low < self.knee_high)
            || !self.knee_high.is_finite()
        {
            return Err(Error::config(format!(
                "shaping_f knees must satisfy omega_g_min ({omega_g_min}) <= knee_low < knee_high, \
                 got ({}, {})",
                self.knee_low, self.knee_high
            )));
        }
        Ok(())
    }
}

pub fn shaping_f(omega_g: f64, p: &ShapingF) -> f64 {
    if omega_g <= p.knee_low {
        0.0
    } else if omega_g >= p.knee_high {
        1.0
    } else {
        (omega_g - p.knee_low) / (p.knee_high - p.knee_low)
    }
}

/// Time profile: full support until `t1`, ramp down to `g_min` at the
/// midpoint of `[t1, t2]`, hold, then ramp back to zero at `t3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingG {
    pub t_event: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub g_min: f64,
}

impl Default for ShapingG {
    fn default() -> Self {
        Self {
            t_event: 20.0,
            t1: 25.0,
            t2: 52.0,
            t3: 79.0,
            g_min: -0.1,
        }
    }
}

impl ShapingG {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_event < self.t1 && self.t1 < self.t2 && self.t2 < self.t3)
            || !self.t3.is_finite()
            || !self.t_event.is_finite()
        {
            return Err(Error::config(format!(
                "shaping_g knots must satisfy t_event < t1 < t2 < t3, got ({}, {}, {}, {})",
                self.t_event, self.t1, self.t2, self.t3
            )));
        }
        // g_min <= -1 would let the compensated loop gain 1 + sum(w) reach zero
        if !(self.g_min < 0.0 && self.g_min > -1.0) {
            return Err(Error::config(format!(
                "shaping_g.g_min must lie in (-1, 0), got {}",
                self.g_min
            )));
        }
        Ok(())
    }

    pub fn t_mid(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }
}

pub fn shaping_g(t: f64, p: &ShapingG) -> f64 {
    let t_mid = p.t_mid();
    if t < p.t_event {
        0.0
    } else if t <= p.t1 {
        1.0
    } else if t <= t_mid {
        1.0 + (p.g_min - 1.0) * (t - p.t1) / (t_mid - p.t1)
    } else if t <= p.t2 {
        p.g_min
    } else if t <= p.t3 {
        p.g_min * (p.t3 - t) / (p.t3 - p.t2)
    } else {
        0.0
    }
}

/// Feedback-linearizing control input on the grid base:
/// `u = -sum(M k_i omega_tg_i) - (M k_{N+1} - D) delta_omega - delta_p_tot`.
pub fn ohft_u(
    omega_tg: &[f64],
    delta_omega: f64,
    delta_p_tot: f64,
    gains: &OhftGains,
    grid: &GridParams,
) -> Result<f64> {
    if omega_tg.len() + 1 != gains.k.len() {
        return Err(Error::config(format!(
            "{} gains for {} turbines (expected {})",
            gains.k.len(),
            omega_tg.len(),
            omega_tg.len() + 1
        )));
    }
    let torsional: f64 = omega_tg
        .iter()
        .zip(&gains.k)
        .map(|(w, k)| grid.m * k * w)
        .sum();
    let k_last = gains.k[omega_tg.len()];
    Ok(-torsional - (grid.m * k_last - grid.d) * delta_omega - delta_p_tot)
}

/// Time derivative of `u` along the flow. `u` is linear in its arguments,
/// so the derivative applies the same law to the rates.
pub fn ohft_du_dt(
    d_omega_tg: &[f64],
    d_delta_omega: f64,
    d_delta_p_tot: f64,
    gains: &OhftGains,
    grid: &GridParams,
) -> Result<f64> {
    ohft_u(d_omega_tg, d_delta_omega, d_delta_p_tot, gains, grid)
}

/// Lead term matching the first-order power loop: `u + du/dt / a_p`.
pub fn compensate_interface(u: f64, du_dt: f64, a_p: f64) -> f64 {
    u + du_dt / a_p
}

pub fn proposed_pvir_single(
    p_vir_conventional: f64,
    u_prime: f64,
    omega_g: f64,
    t: f64,
    f: &ShapingF,
    g: &ShapingG,
) -> f64 {
    (p_vir_conventional + u_prime) * shaping_f(omega_g, f) * shaping_g(t, g)
}

/// Shares proportional to pre-event output.
pub fn participation_factors(p_e0: &[f64]) -> Result<Vec<f64>> {
    if p_e0.is_empty() {
        return Err(Error::domain(
            "participation factors need at least one turbine",
        ));
    }
    if let Some(p) = p_e0.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::domain(format!(
            "pre-event power must be positive, got {p}"
        )));
    }
    let total: f64 = p_e0.iter().sum();
    Ok(p_e0.iter().map(|p| p / total).collect())
}

/// Per-turbine shares on the grid base:
/// `(P_vir + u') * pf_i * f(omega_g_i) * g(t)`.
pub fn proposed_shares_grid(
    p_vir_conventional: f64,
    u_prime: f64,
    omega_g: &[f64],
    pf: &[f64],
    t: f64,
    f: &ShapingF,
    g: &ShapingG,
) -> Result<Vec<f64>> {
    if omega_g.len() != pf.len() {
        return Err(Error::config(format!(
            "{} rotor speeds for {} participation factors",
            omega_g.len(),
            pf.len()
        )));
    }
    let total = p_vir_conventional + u_prime;
    let gv = shaping_g(t, g);
    Ok(omega_g
        .iter()
        .zip(pf)
        .map(|(w, p)| total * p * shaping_f(*w, f) * gv)
        .collect())
}

/// Same shares converted to each turbine's own base.
#[allow(clippy::too_many_arguments)]
pub fn proposed_pvir_multi(
    p_vir_conventional: f64,
    u_prime: f64,
    omega_g: &[f64],
    pf: &[f64],
    t: f64,
    f: &ShapingF,
    g: &ShapingG,
    bases: &[crate::units::PowerBase],
) -> Result<Vec<f64>> {
    if bases.len() != pf.len() {
        return Err(Error::config("one power base per turbine is required"));
    }
    let shares = proposed_shares_grid(p_vir_conventional, u_prime, omega_g, pf, t, f, g)?;
    Ok(shares
        .iter()
        .zip(bases)
        .map(|(s, b)| grid_to_wtg_pu(*s, b))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VicIParams {
    pub vic: ConventionalVicParams,
    pub g: ShapingG,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedParams {
    pub vic: ConventionalVicParams,
    pub gains: OhftGains,
    pub f: ShapingF,
    pub g: ShapingG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    None,
    Conventional,
    VicI,
    Proposed,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::None => "none",
            ControllerKind::Conventional => "conventional",
            ControllerKind::VicI => "vic-i",
            ControllerKind::Proposed => "proposed",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ControllerKind::None),
            "conventional" => Ok(ControllerKind::Conventional),
            "vic-i" => Ok(ControllerKind::VicI),
            "proposed" => Ok(ControllerKind::Proposed),
            other => Err(Error::config(format!(
                "unknown controller '{other}' (expected none, conventional, vic-i or proposed)"
            ))),
        }
    }
}

/// Controller selection with all of its settings.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    None,
    Conventional(ConventionalVicParams),
    VicI(VicIParams),
    Proposed(ProposedParams),
}

/// Timing flags fixed at the start of each integration step, so that a
/// window edge never falls inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepWindow {
    pub event_started: bool,
    pub conventional_active: bool,
}

/// Controller output at one evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerOutput {
    /// Per-turbine command on each turbine's own base.
    pub p_vir: Vec<f64>,
    /// Sum of the commands on the grid base.
    pub total_grid: f64,
    /// Compensated feedback-linearizing input (grid base); zero for other
    /// controllers.
    pub u_prime: f64,
}

impl ControllerSpec {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::None => ControllerKind::None,
            ControllerSpec::Conventional(_) => ControllerKind::Conventional,
            ControllerSpec::VicI(_) => ControllerKind::VicI,
            ControllerSpec::Proposed(_) => ControllerKind::Proposed,
        }
    }

    pub fn validate(&self, n_wtgs: usize, omega_g_min: f64) -> Result<()> {
        match self {
            ControllerSpec::None => Ok(()),
            ControllerSpec::Conventional(p) => p.validate(),
            ControllerSpec::VicI(p) => {
                p.vic.validate()?;
                p.g.validate()
            }
            ControllerSpec::Proposed(p) => {
                p.vic.validate()?;
                p.f.validate(omega_g_min)?;
                p.g.validate()?;
                if p.gains.k.len() != n_wtgs + 1 {
                    return Err(Error::config(format!(
                        "proposed controller needs {} gains for {n_wtgs} turbines, got {}",
                        n_wtgs + 1,
                        p.gains.k.len()
                    )));
                }
                let report = hurwitz_check(&p.gains);
                if !report.stable {
                    return Err(Error::Synthesis(format!(
                        "hurwitz_check failed for gains {:?}: max eigenvalue real part {:.6}",
                        p.gains.k,
                        report.max_real_part()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Activity of the conventional hold window, decided at a step start.
    pub fn window_at(&self, t_step: f64, t_event: f64) -> StepWindow {
        let conventional_active = match self {
            ControllerSpec::Conventional(p) => p.is_active(t_step, t_event),
            _ => false,
        };
        StepWindow {
            event_started: t_step >= t_event,
            conventional_active,
        }
    }

    /// Evaluate the controller at state `s` and stage time `t`. `rates` are
    /// the plant rates at `s` with zero virtual-inertia command.
    pub fn evaluate(
        &self,
        plant: &Plant,
        s: &SystemState,
        rates: &PlantRates,
        t: f64,
        window: StepWindow,
        out: &mut ControllerOutput,
    ) -> Result<()> {
        let n = plant.len();
        out.p_vir.clear();
        out.p_vir.resize(n, 0.0);
        out.total_grid = 0.0;
        out.u_prime = 0.0;
        if !window.event_started {
            return Ok(());
        }
        let dw = s.grid.delta_omega;
        let dwdt = rates.d_delta_omega;
        match self {
            ControllerSpec::None => {}
            ControllerSpec::Conventional(p) => {
                if window.conventional_active {
                    let pv = vic_law(dw, dwdt, p);
                    out.p_vir.fill(pv);
                }
            }
            ControllerSpec::VicI(p) => {
                let pv = vic_i(vic_law(dw, dwdt, &p.vic), shaping_g(t, &p.g));
                out.p_vir.fill(pv);
            }
            ControllerSpec::Proposed(p) => {
                self.evaluate_proposed(p, plant, s, rates, t, out)?;
                return Ok(());
            }
        }
        out.total_grid = plant
            .turbines
            .iter()
            .zip(&out.p_vir)
            .map(|(tb, pv)| pv * tb.base.ratio())
            .sum();
        Ok(())
    }

    fn evaluate_proposed(
        &self,
        p: &ProposedParams,
        plant: &Plant,
        s: &SystemState,
        rates: &PlantRates,
        t: f64,
        out: &mut ControllerOutput,
    ) -> Result<()> {
        let n = plant.len();
        let dw = s.grid.delta_omega;
        let dwdt = rates.d_delta_omega;
        let ratio_sum: f64 = plant.turbines.iter().map(|tb| tb.base.ratio()).sum();
        let p_conv_grid = vic_law(dw, dwdt, &p.vic) * ratio_sum;

        let p_e0: Vec<f64> = plant
            .turbines
            .iter()
            .map(|tb| tb.p_e0 * tb.base.ratio())
            .collect();
        let pf = participation_factors(&p_e0)?;

        let mut omega_tg = Vec::with_capacity(n);
        let mut d_omega_tg = Vec::with_capacity(n);
        let mut omega_g = Vec::with_capacity(n);
        for (w, r) in s.wtgs.iter().zip(&rates.wtgs) {
            omega_tg.push(w.omega_t - w.omega_g);
            d_omega_tg.push(r.d_omega_t - r.d_omega_g);
            omega_g.push(w.omega_g);
        }
        let u = ohft_u(&omega_tg, dw, rates.delta_p_tot, &p.gains, &plant.grid)?;

        // dP_tot/dt without the P_vir share of each power loop
        let d_p_tot_open = rates.d_delta_p_g
            + plant
                .turbines
                .iter()
                .zip(&rates.wtgs)
                .map(|(tb, r)| r.d_p_e_open * tb.base.ratio())
                .sum::<f64>();
        let du_open = ohft_du_dt(&d_omega_tg, dwdt, d_p_tot_open, &p.gains, &plant.grid)?;

        let a_c: f64 = pf
            .iter()
            .zip(&plant.turbines)
            .map(|(pf, tb)| pf * tb.params.a_p)
            .sum();
        let gv = shaping_g(t, &p.g);

        // The commanded power enters du/dt through the power loops, so
        // u' = R0 - sum(a_p,i * share_i) / a_c with share_i = S * w_i and
        // S = P_conv + u'. Solving the linear loop gives S = (P_conv + R0) / (1 + W).
        let r0 = u + du_open / a_c;
        let loop_gain: f64 = pf
            .iter()
            .zip(&omega_g)
            .zip(&plant.turbines)
            .map(|((pf, w), tb)| tb.params.a_p / a_c * pf * shaping_f(*w, &p.f) * gv)
            .sum();
        let s_total = (p_conv_grid + r0) / (1.0 + loop_gain);
        let u_prime = s_total - p_conv_grid;

        let shares = proposed_shares_grid(p_conv_grid, u_prime, &omega_g, &pf, t, &p.f, &p.g)?;
        out.total_grid = shares.iter().sum();
        for ((dst, share), tb) in out.p_vir.iter_mut().zip(&shares).zip(&plant.turbines) {
            *dst = grid_to_wtg_pu(*share, &tb.base);
        }
        out.u_prime = u_prime;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rk4_step;
    use crate::gains::{brunovsky_chain, lqr_gains, LqrWeights};
    use crate::plant::{Turbine, WtgParams};
    use crate::units::PowerBase;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn paper_gains() -> OhftGains {
        OhftGains::new(vec![2.6458, 2.5083])
    }

    #[test]
    fn conventional_examples() {
        let p = ConventionalVicParams::default();
        assert_eq!(conventional_vic(0.0, 0.0, &p, 25.0, 20.0), 0.0);
        assert!(close(
            conventional_vic(-0.005, -0.04, &p, 25.0, 20.0),
            0.115,
            1e-12
        ));
        assert_eq!(conventional_vic(-0.005, -0.04, &p, 40.0, 20.0), 0.0);
        assert_eq!(conventional_vic(-0.005, -0.04, &p, 19.999, 20.0), 0.0);
    }

    #[test]
    fn vic_i_examples() {
        assert_eq!(vic_i(0.115, 0.0), 0.0);
        assert_eq!(vic_i(0.115, 1.0), 0.115);
        assert!(close(vic_i(0.115, -0.5), -0.0575, 1e-15));
    }

    #[test]
    fn shaping_f_examples() {
        let f = ShapingF::default();
        assert_eq!(shaping_f(0.71, &f), 0.0);
        assert_eq!(shaping_f(0.95, &f), 1.0);
        assert!(close(shaping_f(0.83, &f), 0.5, 1e-12));
        assert_eq!(shaping_f(0.5, &f), 0.0);
        assert_eq!(shaping_f(1.1, &f), 1.0);
    }

    #[test]
    fn shaping_g_examples() {
        let g = ShapingG::default();
        assert_eq!(shaping_g(19.9, &g), 0.0);
        assert_eq!(shaping_g(24.0, &g), 1.0);
        assert_eq!(shaping_g(79.0, &g), 0.0);
        assert!(close(shaping_g(g.t_mid(), &g), g.g_min, 1e-15));
        assert_eq!(shaping_g(45.0, &g), g.g_min);
        assert_eq!(shaping_g(100.0, &g), 0.0);
    }

    #[test]
    fn shaping_g_validation() {
        assert!(ShapingG::default().validate().is_ok());
        let bad_order = ShapingG {
            t2: 20.0,
            ..ShapingG::default()
        };
        assert!(bad_order.validate().is_err());
        for g_min in [0.0, 0.2, -1.0, -1.5] {
            let g = ShapingG {
                g_min,
                ..ShapingG::default()
            };
            assert!(g.validate().is_err(), "g_min = {g_min}");
        }
        assert!(ShapingF::default().validate(0.71).is_ok());
        assert!(ShapingF::default().validate(0.8).is_err());
    }

    #[test]
    fn ohft_u_examples() {
        let grid = GridParams::default();
        assert_eq!(
            ohft_u(&[0.0], 0.0, 0.0, &paper_gains(), &grid).unwrap(),
            0.0
        );
        let u = ohft_u(&[0.001], -0.005, -0.15, &paper_gains(), &grid).unwrap();
        let expected = -4.584 * 2.6458 * 0.001 - (4.584 * 2.5083 - 1.0) * -0.005 + 0.15;
        assert!(close(u, expected, 1e-15));
        assert!(close(u, 0.19036, 5e-6), "u = {u}");
        assert!(matches!(
            ohft_u(&[0.0, 0.0], 0.0, 0.0, &paper_gains(), &grid),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ohft_u_two_turbines_reduces_to_one() {
        let grid = GridParams::default();
        let one = ohft_u(&[0.002], -0.004, -0.1, &paper_gains(), &grid).unwrap();
        let two = ohft_u(
            &[0.002, 0.0],
            -0.004,
            -0.1,
            &OhftGains::new(vec![2.6458, 9.9, 2.5083]),
            &grid,
        )
        .unwrap();
        assert!(close(one, two, 1e-15));
    }

    #[test]
    fn compensation_examples() {
        assert_eq!(compensate_interface(0.3, 0.0, 31.4), 0.3);
        // u(t) = 0.1 + 0.05 t at t = 0
        assert!(close(compensate_interface(0.1, 0.05, 31.4), 0.101592, 5e-7));
    }

    #[test]
    fn compensated_lag_reconstructs_sinusoid() {
        let a_p = 31.4;
        let w = 2.0 * std::f64::consts::PI;
        let u = |t: f64| (w * t).sin();
        let up = |t: f64| compensate_interface(u(t), w * (w * t).cos(), a_p);
        let dt = 1e-3;
        let mut x = vec![0.0];
        let mut max_err: f64 = 0.0;
        for k in 0..5000 {
            let t = k as f64 * dt;
            x = rk4_step(&x, t, dt, |t, x, dx| {
                dx[0] = a_p * (up(t) - x[0]);
                Ok(())
            })
            .unwrap();
            max_err = max_err.max((x[0] - u(t + dt)).abs());
        }
        assert!(max_err < 0.01, "max error {max_err}");
    }

    #[test]
    fn proposed_single_examples() {
        let f = ShapingF::default();
        let g = ShapingG::default();
        assert_eq!(proposed_pvir_single(0.115, 0.19, 1.0, 10.0, &f, &g), 0.0);
        assert!(close(
            proposed_pvir_single(0.115, 0.19, 1.0, 22.0, &f, &g),
            0.305,
            1e-15
        ));
        assert_eq!(proposed_pvir_single(0.115, 0.19, 0.70, 22.0, &f, &g), 0.0);
    }

    #[test]
    fn participation_examples() {
        let pf = participation_factors(&[0.2; 4]).unwrap();
        assert!(pf.iter().all(|p| close(*p, 0.25, 1e-15)));
        let pf = participation_factors(&[0.3, 0.1]).unwrap();
        assert!(close(pf[0], 0.75, 1e-15) && close(pf[1], 0.25, 1e-15));
        assert!(participation_factors(&[0.3, 0.0]).is_err());
        assert!(participation_factors(&[]).is_err());
    }

    #[test]
    fn participation_from_wind_speeds() {
        let params = WtgParams::default();
        let p_e0: Vec<f64> = [10.8, 8.0, 7.3]
            .iter()
            .map(|v| crate::plant::mpp_equilibrium(*v, &params).unwrap().1)
            .collect();
        let pf = participation_factors(&p_e0).unwrap();
        for (got, want) in pf.iter().zip([0.5842, 0.2362, 0.1796]) {
            assert!(close(*got, want, 0.005), "{got} vs {want}");
        }
    }

    #[test]
    fn multi_shares_examples() {
        let f = ShapingF::default();
        let g = ShapingG::default();
        let pf = [0.5842, 0.2362, 0.1796];
        let shares = proposed_shares_grid(0.2, 0.0, &[1.0; 3], &pf, 22.0, &f, &g).unwrap();
        for (s, want) in shares.iter().zip([0.11684, 0.04724, 0.03592]) {
            assert!(close(*s, want, 1e-12));
        }
        let zero = proposed_shares_grid(0.2, 0.0, &[1.0; 3], &pf, 10.0, &f, &g).unwrap();
        assert!(zero.iter().all(|s| *s == 0.0));
        let base = PowerBase::default();
        let single = proposed_pvir_single(0.115, 0.19, 0.9, 30.0, &f, &g);
        let multi = proposed_pvir_multi(
            0.115 * base.ratio(),
            0.19 * base.ratio(),
            &[0.9],
            &[1.0],
            30.0,
            &f,
            &g,
            &[base],
        )
        .unwrap();
        assert!(close(single, multi[0], 1e-15));
        assert!(proposed_shares_grid(0.2, 0.0, &[1.0; 2], &pf, 22.0, &f, &g).is_err());
    }

    /// Injecting u directly into the swing equation turns the
    /// `(omega_tg, delta_omega)` pair into the closed-loop chain.
    #[test]
    fn injected_u_yields_closed_loop_chain() {
        let grid = GridParams::default();
        let gains = lqr_gains(
            &brunovsky_chain(2).unwrap(),
            &LqrWeights::diagonal(&[7.0, 1.0], 1.0),
        )
        .unwrap();
        let k = gains.k.clone();
        let disturbance = |t: f64| -0.2 + 0.05 * (1.3 * t).sin();
        let dt = 1e-3;
        let mut chain = vec![0.003, -0.004];
        let mut swing = chain.clone();
        for step in 0..10_000 {
            let t = step as f64 * dt;
            chain = rk4_step(&chain, t, dt, |_, x, dx| {
                dx[0] = x[1];
                dx[1] = -k[0] * x[0] - k[1] * x[1];
                Ok(())
            })
            .unwrap();
            swing = rk4_step(&swing, t, dt, |t, x, dx| {
                let p_tot = disturbance(t);
                let u = ohft_u(&[x[0]], x[1], p_tot, &gains, &grid)?;
                dx[0] = x[1];
                dx[1] = (p_tot - grid.d * x[1] + u) / grid.m;
                Ok(())
            })
            .unwrap();
            let diff = (chain[0] - swing[0]).abs().max((chain[1] - swing[1]).abs());
            assert!(diff < 1e-8, "t = {t}: {diff}");
        }
    }

    fn single_plant() -> Plant {
        let tb = Turbine::new(WtgParams::default(), 10.8, PowerBase::default()).unwrap();
        Plant::new(GridParams::default(), vec![tb]).unwrap()
    }

    fn proposed_spec() -> ControllerSpec {
        ControllerSpec::Proposed(ProposedParams {
            vic: ConventionalVicParams::default(),
            gains: paper_gains(),
            f: ShapingF::default(),
            g: ShapingG::default(),
        })
    }

    #[test]
    fn every_controller_is_silent_before_the_event() {
        let plant = single_plant();
        let s = plant.equilibrium().unwrap();
        let rates = plant.rates(&s, 0.0, 10.0).unwrap();
        let specs = [
            ControllerSpec::None,
            ControllerSpec::Conventional(ConventionalVicParams::default()),
            ControllerSpec::VicI(VicIParams {
                vic: ConventionalVicParams::default(),
                g: ShapingG::default(),
            }),
            proposed_spec(),
        ];
        for spec in &specs {
            let mut out = ControllerOutput::default();
            let w = spec.window_at(10.0, 20.0);
            spec.evaluate(&plant, &s, &rates, 10.0, w, &mut out)
                .unwrap();
            assert_eq!(out.p_vir, vec![0.0]);
        }
    }

    #[test]
    fn proposed_loop_solution_is_self_consistent() {
        let plant = single_plant();
        let mut s = plant.equilibrium().unwrap();
        s.grid.delta_omega = -0.004;
        s.grid.delta_p_g = 0.05;
        s.wtgs[0].omega_t += 0.002;
        s.wtgs[0].p_e += 0.03;
        let spec = proposed_spec();
        let ControllerSpec::Proposed(p) = &spec else {
            unreachable!()
        };
        let t = 30.0;
        let rates = plant.rates(&s, 0.2, t).unwrap();
        let mut out = ControllerOutput::default();
        spec.evaluate(&plant, &s, &rates, t, spec.window_at(t, 20.0), &mut out)
            .unwrap();

        // recompute u' from the full derivative including the command itself
        let full = plant.system_deriv(&s, t, 0.2, &out.p_vir).unwrap();
        let tb = &plant.turbines[0];
        let w = &s.wtgs[0];
        let u = ohft_u(
            &[w.omega_t - w.omega_g],
            s.grid.delta_omega,
            rates.delta_p_tot,
            &p.gains,
            &plant.grid,
        )
        .unwrap();
        let d_p_tot = full.grid.delta_p_g + full.wtgs[0].p_e * tb.base.ratio();
        let du = ohft_du_dt(
            &[full.wtgs[0].omega_t - full.wtgs[0].omega_g],
            full.grid.delta_omega,
            d_p_tot,
            &p.gains,
            &plant.grid,
        )
        .unwrap();
        let u_prime = compensate_interface(u, du, tb.params.a_p);
        assert!(
            close(u_prime, out.u_prime, 1e-12),
            "{u_prime} vs {}",
            out.u_prime
        );

        let p_conv = vic_law(s.grid.delta_omega, rates.d_delta_omega, &p.vic);
        let direct = proposed_pvir_single(
            p_conv,
            grid_to_wtg_pu(u_prime, &tb.base),
            w.omega_g,
            t,
            &p.f,
            &p.g,
        );
        assert!(close(direct, out.p_vir[0], 1e-12));
    }

    #[test]
    fn non_hurwitz_gains_are_refused() {
        let spec = ControllerSpec::Proposed(ProposedParams {
            gains: OhftGains::new(vec![1.0, -1.0]),
            ..match proposed_spec() {
                ControllerSpec::Proposed(p) => p,
                _ => unreachable!(),
            }
        });
        let err = spec.validate(1, 0.71).unwrap_err();
        assert!(matches!(err, Error::Synthesis(ref m) if m.contains("hurwitz_check")));
        assert!(proposed_spec().validate(2, 0.71).is_err());
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in [
            ControllerKind::None,
            ControllerKind::Conventional,
            ControllerKind::VicI,
            ControllerKind::Proposed,
        ] {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("pid".parse::<ControllerKind>().is_err());
    }

    proptest! {
        #[test]
        fn shaping_f_is_continuous_and_bounded(w in 0.0f64..2.0) {
            let f = ShapingF::default();
            let v = shaping_f(w, &f);
            prop_assert!((0.0..=1.0).contains(&v));
            for knot in [f.knee_low, f.knee_high] {
                let l = shaping_f(knot - 1e-14, &f);
                let r = shaping_f(knot + 1e-14, &f);
                prop_assert!((l - r).abs() < 1e-12);
            }
        }

        #[test]
        fn shaping_g_is_continuous_across_knots(g_min in -0.99f64..-0.01, t1 in 21.0f64..30.0, gap in 5.0f64..30.0) {
            let g = ShapingG { t_event: 20.0, t1, t2: t1 + gap, t3: t1 + 2.0 * gap, g_min };
            for knot in [g.t1, g.t_mid(), g.t2, g.t3] {
                let l = shaping_g(knot - 1e-13, &g);
                let r = shaping_g(knot + 1e-13, &g);
                prop_assert!((l - r).abs() < 1e-11, "jump {} at {}", (l - r).abs(), knot);
            }
        }

        #[test]
        fn shaping_g_stays_in_range(t in 0.0f64..150.0) {
            let g = ShapingG::default();
            let v = shaping_g(t, &g);
            prop_assert!(v >= g.g_min && v <= 1.0);
        }

        #[test]
        fn ohft_u_superposition(
            a in proptest::collection::vec(-0.01f64..0.01, 3),
            b in proptest::collection::vec(-0.01f64..0.01, 3),
        ) {
            let grid = GridParams::default();
            let k = paper_gains();
            let ua = ohft_u(&a[..1], a[1], a[2], &k, &grid).unwrap();
            let ub = ohft_u(&b[..1], b[1], b[2], &k, &grid).unwrap();
            let uab = ohft_u(&[a[0] + b[0]], a[1] + b[1], a[2] + b[2], &k, &grid).unwrap();
            prop_assert!((ua + ub - uab).abs() < 1e-14);
        }

        #[test]
        fn multi_shares_sum_to_total(
            p in -0.5f64..0.5,
            w in proptest::collection::vec(0.6f64..1.2, 3),
            raw in proptest::collection::vec(0.1f64..1.0, 3),
            t in 15.0f64..90.0,
        ) {
            let f = ShapingF::default();
            let g = ShapingG::default();
            let pf = participation_factors(&raw).unwrap();
            let shares = proposed_shares_grid(p, 0.0, &w, &pf, t, &f, &g).unwrap();
            let expected = p * shaping_g(t, &g)
                * pf.iter().zip(&w).map(|(pf, w)| pf * shaping_f(*w, &f)).sum::<f64>();
            prop_assert!((shares.iter().sum::<f64>() - expected).abs() < 1e-14);
        }

        #[test]
        fn conventional_is_zero_outside_window(t in -50.0f64..200.0, dw in -0.01f64..0.01, dwdt in -0.1f64..0.1) {
            let p = ConventionalVicParams::default();
            let v = conventional_vic(dw, dwdt, &p, t, 20.0);
            if !(20.0..40.0).contains(&t) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
