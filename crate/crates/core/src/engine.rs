//! Fixed-step RK4 integration of the full system with a step-aligned load
//! event, and scenario execution into a uniformly sampled record.

use crate::controllers::{ControllerKind, ControllerOutput, ControllerSpec, StepWindow};
use crate::error::{Error, Result};
use crate::plant::{mpp_reference, GridParams, Plant, SystemState, Turbine, WtgParams};
use crate::units::PowerBase;

/// Reusable RK4 stage buffers.
#[derive(Debug, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

fn check_finite(d: &[f64], t: f64) -> Result<()> {
    match d.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::SimulationFault {
            t,
            reason: format!("non-finite derivative in state component {i}"),
        }),
        None => Ok(()),
    }
}

impl Rk4 {
    /// Advance `x` in place by one classical RK4 step.
    pub fn step<F>(&mut self, x: &mut [f64], t: f64, dt: f64, mut f: F) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let n = x.len();
        for buf in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
        ] {
            buf.clear();
            buf.resize(n, 0.0);
        }
        let h = 0.5 * dt;

        fn axpy(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
            for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
                *o = xi + a * ki;
            }
        }

        f(t, x, &mut self.k1)?;
        check_finite(&self.k1, t)?;
        axpy(&mut self.tmp, x, h, &self.k1);
        f(t + h, &self.tmp, &mut self.k2)?;
        check_finite(&self.k2, t + h)?;
        axpy(&mut self.tmp, x, h, &self.k2);
        f(t + h, &self.tmp, &mut self.k3)?;
        check_finite(&self.k3, t + h)?;
        axpy(&mut self.tmp, x, dt, &self.k3);
        f(t + dt, &self.tmp, &mut self.k4)?;
        check_finite(&self.k4, t + dt)?;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One RK4 step from `x` at time `t`; `f(t, x, dx)` writes the derivative.
pub fn rk4_step<F>(x: &[f64], t: f64, dt: f64, f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let mut out = x.to_vec();
    Rk4::default().step(&mut out, t, dt, f)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WtgSpec {
    pub params: WtgParams,
    pub wind_speed: f64,
    pub rated_mw: f64,
    /// Hold the turbine at its equilibrium output throughout the run.
    pub frozen: bool,
}

impl WtgSpec {
    pub fn new(wind_speed: f64) -> Self {
        Self {
            params: WtgParams::default(),
            wind_speed,
            rated_mw: PowerBase::default().wtg_rated,
            frozen: false,
        }
    }
}

/// Load step applied on the grid base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    pub time: f64,
    pub delta_p_l: f64,
}

impl Default for EventSpec {
    fn default() -> Self {
        Self {
            time: 20.0,
            delta_p_l: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub t_end: f64,
    pub dt: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            t_end: 120.0,
            dt: 1e-3,
            stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridParams,
    pub grid_rated_mw: f64,
    pub wtgs: Vec<WtgSpec>,
    pub controller: ControllerSpec,
    pub event: Option<EventSpec>,
    pub sim: SimSettings,
}

impl ScenarioConfig {
    /// Default single-turbine setup with the given controller.
    pub fn single(wind_speed: f64, controller: ControllerSpec) -> Self {
        Self {
            grid: GridParams::default(),
            grid_rated_mw: PowerBase::default().grid_rated,
            wtgs: vec![WtgSpec::new(wind_speed)],
            controller,
            event: Some(EventSpec::default()),
            sim: SimSettings::default(),
        }
    }

    /// Number of whole steps in `duration`, rejecting misaligned values.
    fn steps_in(&self, duration: f64, what: &str) -> Result<usize> {
        let steps = duration / self.sim.dt;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(Error::config(format!(
                "{what} ({duration} s) is not a whole number of steps of {} s",
                self.sim.dt
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.wtgs.is_empty() {
            return Err(Error::config("at least one WTG is required"));
        }
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            return Err(Error::config(format!(
                "sim.dt must be positive, got {}",
                self.sim.dt
            )));
        }
        if self.sim.stride == 0 {
            return Err(Error::config("sim.stride must be at least 1"));
        }
        if !(self.sim.t_end > 0.0 && self.sim.t_end.is_finite()) {
            return Err(Error::config("sim.t_end must be positive"));
        }
        self.steps_in(self.sim.t_end, "sim.t_end")?;
        if let Some(ev) = &self.event {
            if !(ev.time >= 0.0 && ev.time < self.sim.t_end) {
                return Err(Error::config(format!(
                    "event.time ({}) must lie in [0, t_end)",
                    ev.time
                )));
            }
            if !ev.delta_p_l.is_finite() {
                return Err(Error::config("event.delta_p_l must be finite"));
            }
            self.steps_in(ev.time, "event.time")?;
        }
        let t_event = self.event.map(|e| e.time);
        let g_event = match &self.controller {
            ControllerSpec::VicI(p) => Some(p.g.t_event),
            ControllerSpec::Proposed(p) => Some(p.g.t_event),
            _ => None,
        };
        if let (Some(te), Some(ge)) = (t_event, g_event) {
            if te != ge {
                return Err(Error::config(format!(
                    "shaping_g.t_event ({ge}) differs from event.time ({te})"
                )));
            }
        }
        if let ControllerSpec::Conventional(p) = &self.controller {
            p.validate()?;
            self.steps_in(p.hold_duration, "hold_duration")?;
        }
        let omega_g_min = self
            .wtgs
            .iter()
            .map(|w| w.params.omega_g_min)
            .fold(f64::NEG_INFINITY, f64::max);
        self.controller.validate(self.wtgs.len(), omega_g_min)?;
        self.build_plant().map(|_| ())
    }

    pub fn build_plant(&self) -> Result<Plant> {
        let turbines = self
            .wtgs
            .iter()
            .map(|w| {
                let base = PowerBase::new(self.grid_rated_mw, w.rated_mw)?;
                let tb = Turbine::new(w.params.clone(), w.wind_speed, base)?;
                Ok(if w.frozen { tb.frozen() } else { tb })
            })
            .collect::<Result<Vec<_>>>()?;
        Plant::new(self.grid.clone(), turbines)
    }
}

/// Recorded trajectory of one turbine.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WtgSeries {
    pub omega_t: Vec<f64>,
    pub omega_g: Vec<f64>,
    pub theta_sh: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_vir: Vec<f64>,
    /// Reference increment `P_MPP - P_e0 + P_vir`.
    pub dpe: Vec<f64>,
    pub omega_g0: f64,
    pub p_e0: f64,
}

/// Uniformly sampled run record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub controller: ControllerKind,
    pub event_time: Option<f64>,
    pub t: Vec<f64>,
    pub delta_omega: Vec<f64>,
    pub f_hz: Vec<f64>,
    pub delta_p_g: Vec<f64>,
    pub delta_p_l: Vec<f64>,
    /// Sum of the virtual-inertia commands on the grid base.
    pub p_vir_total: Vec<f64>,
    pub u_prime: Vec<f64>,
    pub wtgs: Vec<WtgSeries>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `omega_t - omega_g` of turbine `i`.
    pub fn torsional_slip(&self, i: usize) -> Vec<f64> {
        let w = &self.wtgs[i];
        w.omega_t
            .iter()
            .zip(&w.omega_g)
            .map(|(a, b)| a - b)
            .collect()
    }
}

pub const NOMINAL_HZ: f64 = 60.0;

struct Stepper<'a> {
    plant: &'a Plant,
    controller: &'a ControllerSpec,
    out: ControllerOutput,
    deriv: Vec<f64>,
}

impl Stepper<'_> {
    fn field(
        &mut self,
        t: f64,
        x: &[f64],
        dx: &mut [f64],
        delta_p_l: f64,
        window: StepWindow,
    ) -> Result<()> {
        let s = SystemState::from_slice(x)?;
        let rates = self.plant.rates(&s, delta_p_l, t)?;
        self.controller
            .evaluate(self.plant, &s, &rates, t, window, &mut self.out)?;
        self.plant
            .assemble(&rates, &self.out.p_vir, &mut self.deriv);
        dx.copy_from_slice(&self.deriv);
        Ok(())
    }
}

/// Integrate the scenario from its pre-event equilibrium.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let plant = cfg.build_plant()?;
    let dt = cfg.sim.dt;
    let n_steps = cfg.steps_in(cfg.sim.t_end, "sim.t_end")?;
    let event_step = match &cfg.event {
        Some(ev) => Some(cfg.steps_in(ev.time, "event.time")?),
        None => None,
    };
    let hold_steps = match &cfg.controller {
        ControllerSpec::Conventional(p) => cfg.steps_in(p.hold_duration, "hold_duration")?,
        _ => 0,
    };
    let delta_p_l = cfg.event.map_or(0.0, |e| e.delta_p_l);
    let is_conventional = matches!(cfg.controller, ControllerSpec::Conventional(_));

    // Load and window flags depend only on the step index.
    let window_at = |k: usize| -> (f64, StepWindow) {
        match event_step {
            Some(ke) if k >= ke => (
                delta_p_l,
                StepWindow {
                    event_started: true,
                    conventional_active: is_conventional && k - ke < hold_steps,
                },
            ),
            _ => (0.0, StepWindow::default()),
        }
    };

    let x0 = plant.equilibrium()?;
    let mut x = x0.to_vec();
    let mut stepper = Stepper {
        plant: &plant,
        controller: &cfg.controller,
        out: ControllerOutput::default(),
        deriv: Vec::with_capacity(x.len()),
    };

    let capacity = n_steps.div_ceil(cfg.sim.stride);
    let mut ts = TimeSeries {
        controller: cfg.controller.kind(),
        event_time: cfg.event.map(|e| e.time),
        t: Vec::with_capacity(capacity),
        delta_omega: Vec::with_capacity(capacity),
        f_hz: Vec::with_capacity(capacity),
        delta_p_g: Vec::with_capacity(capacity),
        delta_p_l: Vec::with_capacity(capacity),
        p_vir_total: Vec::with_capacity(capacity),
        u_prime: Vec::with_capacity(capacity),
        wtgs: plant
            .turbines
            .iter()
            .map(|tb| WtgSeries {
                omega_g0: tb.omega_g0,
                p_e0: tb.p_e0,
                ..WtgSeries::default()
            })
            .collect(),
    };

    let mut rk = Rk4::default();
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let (dpl, window) = window_at(k);
        if k % cfg.sim.stride == 0 {
            record(&mut ts, &plant, &cfg.controller, &x, t, dpl, window)?;
        }
        rk.step(&mut x, t, dt, |tt, xx, dx| {
            stepper.field(tt, xx, dx, dpl, window)
        })?;
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::SimulationFault {
                t: t + dt,
                reason: format!("state component {i} became non-finite"),
            });
        }
    }
    Ok(ts)
}

fn record(
    ts: &mut TimeSeries,
    plant: &Plant,
    controller: &ControllerSpec,
    x: &[f64],
    t: f64,
    delta_p_l: f64,
    window: StepWindow,
) -> Result<()> {
    let s = SystemState::from_slice(x)?;
    let rates = plant.rates(&s, delta_p_l, t)?;
    let mut out = ControllerOutput::default();
    controller.evaluate(plant, &s, &rates, t, window, &mut out)?;
    ts.t.push(t);
    ts.delta_omega.push(s.grid.delta_omega);
    ts.f_hz.push(NOMINAL_HZ * (1.0 + s.grid.delta_omega));
    ts.delta_p_g.push(s.grid.delta_p_g);
    ts.delta_p_l.push(delta_p_l);
    ts.p_vir_total.push(out.total_grid);
    ts.u_prime.push(out.u_prime);
    for (((series, w), tb), pv) in ts
        .wtgs
        .iter_mut()
        .zip(&s.wtgs)
        .zip(&plant.turbines)
        .zip(&out.p_vir)
    {
        series.omega_t.push(w.omega_t);
        series.omega_g.push(w.omega_g);
        series.theta_sh.push(w.theta_sh);
        series.p_e.push(w.p_e);
        series.p_vir.push(*pv);
        let p_mpp = if tb.frozen {
            tb.p_e0
        } else {
            mpp_reference(w.omega_g, &tb.params)
        };
        series.dpe.push(p_mpp - tb.p_e0 + pv);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{
        ConventionalVicParams, ProposedParams, ShapingF, ShapingG, VicIParams,
    };
    use crate::gains::OhftGains;

    #[test]
    fn rk4_examples() {
        let x = rk4_step(&[1.0], 0.0, 0.1, |_, x, d| {
            d[0] = -x[0];
            Ok(())
        })
        .unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-6);
        assert!((x[0] - 0.9048375).abs() < 1e-7);
        let x = rk4_step(&[3.0, -2.0], 5.0, 0.01, |_, _, d| {
            d.fill(0.0);
            Ok(())
        })
        .unwrap();
        assert_eq!(x, vec![3.0, -2.0]);
        let x = rk4_step(&[3.0], 0.0, 0.25, |_, _, d| {
            d[0] = 1.0;
            Ok(())
        })
        .unwrap();
        assert_eq!(x, vec![3.25]);
    }

    #[test]
    fn rk4_reports_non_finite_derivatives() {
        let err = rk4_step(&[1.0], 2.0, 0.1, |_, _, d| {
            d[0] = f64::NAN;
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, Error::SimulationFault { .. }));
        assert!(rk4_step(&[1.0], 0.0, 0.0, |_, _, _| Ok(())).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |dt: f64| {
            let mut x = vec![1.0];
            let n = (1.0 / dt).round() as usize;
            let mut rk = Rk4::default();
            for k in 0..n {
                rk.step(&mut x, k as f64 * dt, dt, |t, x, d| {
                    d[0] = -2.0 * t * x[0];
                    Ok(())
                })
                .unwrap();
            }
            (x[0] - (-1f64).exp()).abs()
        };
        let ratio = run(0.02) / run(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "error ratio {ratio}");
    }

    fn short(mut cfg: ScenarioConfig) -> ScenarioConfig {
        cfg.sim.t_end = 25.0;
        cfg
    }

    fn proposed() -> ControllerSpec {
        ControllerSpec::Proposed(ProposedParams {
            vic: ConventionalVicParams::default(),
            gains: OhftGains::new(vec![2.6458, 2.5083]),
            f: ShapingF::default(),
            g: ShapingG::default(),
        })
    }

    #[test]
    fn records_at_the_requested_stride() {
        let ts = run_scenario(&short(ScenarioConfig::single(10.8, ControllerSpec::None))).unwrap();
        assert_eq!(ts.len(), 2500);
        assert_eq!(ts.t[0], 0.0);
        assert!(ts.t.windows(2).all(|w| w[1] > w[0]));
        assert!((ts.t[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn load_step_is_atomic() {
        let ts = run_scenario(&short(ScenarioConfig::single(10.8, ControllerSpec::None))).unwrap();
        for (t, dpl) in ts.t.iter().zip(&ts.delta_p_l) {
            if *t < 20.0 - 1e-9 {
                assert_eq!(*dpl, 0.0);
            } else {
                assert_eq!(*dpl, 0.2);
            }
        }
    }

    #[test]
    fn no_event_run_stays_at_equilibrium() {
        for controller in [
            ControllerSpec::None,
            ControllerSpec::Conventional(ConventionalVicParams::default()),
            proposed(),
        ] {
            let mut cfg = ScenarioConfig::single(9.0, controller);
            cfg.event = None;
            cfg.sim.t_end = 10.0;
            let ts = run_scenario(&cfg).unwrap();
            let w = &ts.wtgs[0];
            let drift = w
                .omega_t
                .iter()
                .chain(&w.omega_g)
                .map(|v| (v - w.omega_g0).abs())
                .fold(0.0, f64::max);
            assert!(drift < 1e-9);
            assert!(ts.delta_omega.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = short(ScenarioConfig::single(10.8, proposed()));
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn misaligned_event_is_rejected() {
        let mut cfg = ScenarioConfig::single(10.8, ControllerSpec::None);
        cfg.event = Some(EventSpec {
            time: 20.00037,
            delta_p_l: 0.2,
        });
        assert!(matches!(run_scenario(&cfg), Err(Error::Config(_))));
        let mut cfg = ScenarioConfig::single(10.8, ControllerSpec::None);
        cfg.sim.stride = 0;
        assert!(run_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::single(10.8, ControllerSpec::None);
        cfg.event = Some(EventSpec {
            time: 130.0,
            delta_p_l: 0.2,
        });
        assert!(run_scenario(&cfg).is_err());
    }

    #[test]
    fn non_hurwitz_gains_are_refused_before_integration() {
        let spec = ControllerSpec::Proposed(ProposedParams {
            vic: ConventionalVicParams::default(),
            gains: OhftGains::new(vec![1.0, -1.0]),
            f: ShapingF::default(),
            g: ShapingG::default(),
        });
        let err = run_scenario(&ScenarioConfig::single(10.8, spec)).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn shaping_event_must_match_load_event() {
        let spec = ControllerSpec::VicI(VicIParams {
            vic: ConventionalVicParams::default(),
            g: ShapingG {
                t_event: 10.0,
                ..ShapingG::default()
            },
        });
        assert!(run_scenario(&ScenarioConfig::single(10.8, spec)).is_err());
    }

    #[test]
    fn dpe_matches_its_definition() {
        let ts = run_scenario(&short(ScenarioConfig::single(
            10.8,
            ControllerSpec::Conventional(ConventionalVicParams::default()),
        )))
        .unwrap();
        let w = &ts.wtgs[0];
        let params = WtgParams::default();
        for i in 0..ts.len() {
            let expected = mpp_reference(w.omega_g[i], &params) - w.p_e0 + w.p_vir[i];
            assert_eq!(w.dpe[i], expected);
        }
    }

    #[test]
    fn conventional_support_starts_at_the_event() {
        let ts = run_scenario(&short(ScenarioConfig::single(
            10.8,
            ControllerSpec::Conventional(ConventionalVicParams::default()),
        )))
        .unwrap();
        let w = &ts.wtgs[0];
        let first = ts.t.iter().position(|t| *t >= 20.0 - 1e-9).unwrap();
        assert!(w.p_vir[..first].iter().all(|p| *p == 0.0));
        assert!(w.p_vir[first] > 0.0);
    }
}
