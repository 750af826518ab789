//! Scenario files: a TOML document with `grid`, `wtg` (array of tables),
//! `controller`, `event`, `sim` and `output` sections. Every key is
//! optional except `wtg.wind_speed`; unknown keys are rejected and listed.

use serde::Deserialize;

use crate::controllers::{
    ControllerKind, ControllerSpec, ConventionalVicParams, ProposedParams, ShapingF, ShapingG,
    VicIParams,
};
use crate::engine::{EventSpec, ScenarioConfig, SimSettings, WtgSpec};
use crate::error::{Error, Result};
use crate::gains::{brunovsky_chain, lqr_gains, LqrWeights, OhftGains};
use crate::plant::{GridParams, WtgParams};
use crate::units::PowerBase;

#[derive(Debug, Default, Deserialize)]
struct RawFile {
    name: Option<String>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    wtg: Vec<RawWtg>,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    event: RawEvent,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
struct RawGrid {
    m: Option<f64>,
    d: Option<f64>,
    t_g: Option<f64>,
    r_droop: Option<f64>,
    rated_mw: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RawWtg {
    wind_speed: f64,
    rated_mw: Option<f64>,
    frozen: Option<bool>,
    h_t: Option<f64>,
    h_g: Option<f64>,
    k_sh: Option<f64>,
    d_sh: Option<f64>,
    omega_b: Option<f64>,
    a_p: Option<f64>,
    k_opt: Option<f64>,
    omega_g_min: Option<f64>,
    omega_max: Option<f64>,
    v_w1: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawController {
    kind: Option<String>,
    k_p_vir: Option<f64>,
    k_d_vir: Option<f64>,
    hold_duration: Option<f64>,
    gains: Option<Vec<f64>>,
    q: Option<Vec<f64>>,
    alpha: Option<f64>,
    #[serde(default)]
    shaping_f: RawShapingF,
    #[serde(default)]
    shaping_g: RawShapingG,
}

#[derive(Debug, Default, Deserialize)]
struct RawShapingF {
    knee_low: Option<f64>,
    knee_high: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawShapingG {
    t1: Option<f64>,
    t2: Option<f64>,
    t3: Option<f64>,
    g_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawEvent {
    enabled: Option<bool>,
    time: Option<f64>,
    delta_p_l: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawSim {
    t_end: Option<f64>,
    dt: Option<f64>,
    stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawOutput {
    csv: Option<bool>,
    plots: Option<bool>,
    metrics: Option<bool>,
    prefix: Option<String>,
}

/// How the feedback-linearizing gains are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSource {
    Explicit(Vec<f64>),
    /// LQR with diagonal weights; `None` selects the default for the order.
    Lqr {
        q: Option<Vec<f64>>,
        alpha: f64,
    },
}

/// Controller settings for every controller kind, so the kind can be
/// switched without re-reading the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub kind: ControllerKind,
    pub vic: ConventionalVicParams,
    pub gains: GainSource,
    pub f: ShapingF,
    pub g: ShapingG,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Proposed,
            vic: ConventionalVicParams::default(),
            gains: GainSource::Lqr {
                q: None,
                alpha: 1.0,
            },
            f: ShapingF::default(),
            g: ShapingG::default(),
        }
    }
}

impl ControllerSettings {
    pub fn resolve_gains(&self, n_wtgs: usize) -> Result<OhftGains> {
        let order = n_wtgs + 1;
        match &self.gains {
            GainSource::Explicit(k) => Ok(OhftGains::new(k.clone())),
            GainSource::Lqr { q, alpha } => {
                let weights = match q {
                    Some(q) => {
                        if q.len() != order {
                            return Err(Error::config(format!(
                                "controller.q has {} entries, expected {order}",
                                q.len()
                            )));
                        }
                        LqrWeights::diagonal(q, *alpha)
                    }
                    None => LqrWeights {
                        alpha: *alpha,
                        ..LqrWeights::default_for(order)
                    },
                };
                lqr_gains(&brunovsky_chain(order)?, &weights)
            }
        }
    }

    pub fn build(
        &self,
        kind: ControllerKind,
        n_wtgs: usize,
        t_event: f64,
    ) -> Result<ControllerSpec> {
        let g = ShapingG { t_event, ..self.g };
        Ok(match kind {
            ControllerKind::None => ControllerSpec::None,
            ControllerKind::Conventional => ControllerSpec::Conventional(self.vic),
            ControllerKind::VicI => ControllerSpec::VicI(VicIParams { vic: self.vic, g }),
            ControllerKind::Proposed => ControllerSpec::Proposed(ProposedParams {
                vic: self.vic,
                gains: self.resolve_gains(n_wtgs)?,
                f: self.f,
                g,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub csv: bool,
    pub plots: bool,
    pub metrics: bool,
    pub prefix: String,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            csv: true,
            plots: true,
            metrics: true,
            prefix: "run".into(),
        }
    }
}

/// A parsed scenario file, before a controller kind is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub grid: GridParams,
    pub grid_rated_mw: f64,
    pub wtgs: Vec<WtgSpec>,
    pub controller: ControllerSettings,
    pub event: Option<EventSpec>,
    pub sim: SimSettings,
    pub output: OutputSettings,
}

impl Scenario {
    /// Parse and validate a TOML scenario, listing every unknown key.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(src)
            .map_err(|e| Error::config(format!("invalid scenario file: {e}")))?;
        let mut unknown = Vec::new();
        let raw: RawFile = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::config(format!("invalid scenario file: {e}")))?;
        if !unknown.is_empty() {
            return Err(Error::config(format!(
                "unknown keys in scenario file: {}",
                unknown.join(", ")
            )));
        }
        let scenario = Self::from_raw(raw)?;
        scenario.to_config()?.validate()?;
        Ok(scenario)
    }

    fn from_raw(raw: RawFile) -> Result<Self> {
        let gd = GridParams::default();
        let grid = GridParams {
            m: raw.grid.m.unwrap_or(gd.m),
            d: raw.grid.d.unwrap_or(gd.d),
            t_g: raw.grid.t_g.unwrap_or(gd.t_g),
            r_droop: raw.grid.r_droop.unwrap_or(gd.r_droop),
        };
        let bd = PowerBase::default();
        let grid_rated_mw = raw.grid.rated_mw.unwrap_or(bd.grid_rated);
        if raw.wtg.is_empty() {
            return Err(Error::config("scenario needs at least one [[wtg]] entry"));
        }
        let pd = WtgParams::default();
        let wtgs = raw
            .wtg
            .into_iter()
            .map(|w| WtgSpec {
                params: WtgParams {
                    h_t: w.h_t.unwrap_or(pd.h_t),
                    h_g: w.h_g.unwrap_or(pd.h_g),
                    k_sh: w.k_sh.unwrap_or(pd.k_sh),
                    d_sh: w.d_sh.unwrap_or(pd.d_sh),
                    omega_b: w.omega_b.unwrap_or(pd.omega_b),
                    a_p: w.a_p.unwrap_or(pd.a_p),
                    k_opt: w.k_opt.unwrap_or(pd.k_opt),
                    omega_g_min: w.omega_g_min.unwrap_or(pd.omega_g_min),
                    omega_max: w.omega_max.unwrap_or(pd.omega_max),
                    v_w1: w.v_w1.unwrap_or(pd.v_w1),
                    beta: w.beta.unwrap_or(pd.beta),
                    ..pd.clone()
                },
                wind_speed: w.wind_speed,
                rated_mw: w.rated_mw.unwrap_or(bd.wtg_rated),
                frozen: w.frozen.unwrap_or(false),
            })
            .collect();

        let cd = ControllerSettings::default();
        let kind = match raw.controller.kind {
            Some(k) => k.parse()?,
            None => cd.kind,
        };
        let gains = match (raw.controller.gains, raw.controller.q) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "controller.gains and controller.q are mutually exclusive",
                ))
            }
            (Some(k), None) => GainSource::Explicit(k),
            (None, q) => GainSource::Lqr {
                q,
                alpha: raw.controller.alpha.unwrap_or(1.0),
            },
        };
        let controller = ControllerSettings {
            kind,
            vic: ConventionalVicParams {
                k_p_vir: raw.controller.k_p_vir.unwrap_or(cd.vic.k_p_vir),
                k_d_vir: raw.controller.k_d_vir.unwrap_or(cd.vic.k_d_vir),
                hold_duration: raw.controller.hold_duration.unwrap_or(cd.vic.hold_duration),
            },
            gains,
            f: ShapingF {
                knee_low: raw.controller.shaping_f.knee_low.unwrap_or(cd.f.knee_low),
                knee_high: raw.controller.shaping_f.knee_high.unwrap_or(cd.f.knee_high),
            },
            g: ShapingG {
                t_event: cd.g.t_event,
                t1: raw.controller.shaping_g.t1.unwrap_or(cd.g.t1),
                t2: raw.controller.shaping_g.t2.unwrap_or(cd.g.t2),
                t3: raw.controller.shaping_g.t3.unwrap_or(cd.g.t3),
                g_min: raw.controller.shaping_g.g_min.unwrap_or(cd.g.g_min),
            },
        };

        let ed = EventSpec::default();
        let event = raw.event.enabled.unwrap_or(true).then(|| EventSpec {
            time: raw.event.time.unwrap_or(ed.time),
            delta_p_l: raw.event.delta_p_l.unwrap_or(ed.delta_p_l),
        });
        let sd = SimSettings::default();
        let sim = SimSettings {
            t_end: raw.sim.t_end.unwrap_or(sd.t_end),
            dt: raw.sim.dt.unwrap_or(sd.dt),
            stride: raw.sim.stride.unwrap_or(sd.stride),
        };
        let od = OutputSettings::default();
        let output = OutputSettings {
            csv: raw.output.csv.unwrap_or(od.csv),
            plots: raw.output.plots.unwrap_or(od.plots),
            metrics: raw.output.metrics.unwrap_or(od.metrics),
            prefix: raw.output.prefix.unwrap_or(od.prefix),
        };
        Ok(Self {
            name: raw.name,
            grid,
            grid_rated_mw,
            wtgs,
            controller,
            event,
            sim,
            output,
        })
    }

    /// Engine configuration for the controller kind named in the file.
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        self.to_config_with(self.controller.kind)
    }

    pub fn to_config_with(&self, kind: ControllerKind) -> Result<ScenarioConfig> {
        let t_event = self.event.map_or(self.controller.g.t_event, |e| e.time);
        Ok(ScenarioConfig {
            grid: self.grid.clone(),
            grid_rated_mw: self.grid_rated_mw,
            wtgs: self.wtgs.clone(),
            controller: self.controller.build(kind, self.wtgs.len(), t_event)?,
            event: self.event,
            sim: self.sim,
        })
    }

    /// Change the step size while keeping the recorded sample times.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        let interval = self.sim.dt * self.sim.stride as f64;
        self.sim.stride = ((interval / dt).round() as usize).max(1);
        self.sim.dt = dt;
        Ok(self)
    }

    /// Same scenario with every turbine at wind speed `v`.
    pub fn with_wind(mut self, v: f64) -> Self {
        for w in &mut self.wtgs {
            w.wind_speed = v;
        }
        self
    }
}
