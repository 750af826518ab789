//! Post-run metrics and analytic checks on the torsional mode.

use nalgebra::Matrix3;

use crate::engine::{TimeSeries, NOMINAL_HZ};
use crate::error::{Error, Result};
use crate::plant::WtgParams;

/// Undamped torsional natural frequency in rad/s.
pub fn natural_frequency(p: &WtgParams) -> f64 {
    (p.omega_b * p.k_sh * p.h_tg() / (2.0 * p.h_t * p.h_g)).sqrt()
}

/// State matrix of the drive train with both torques frozen, in
/// `(omega_t, omega_g, theta_sh)` order.
pub fn frozen_torque_matrix(p: &WtgParams) -> Matrix3<f64> {
    let (ht2, hg2) = (2.0 * p.h_t, 2.0 * p.h_g);
    Matrix3::new(
        -p.d_sh / ht2,
        p.d_sh / ht2,
        -p.k_sh / ht2,
        p.d_sh / hg2,
        -p.d_sh / hg2,
        p.k_sh / hg2,
        p.omega_b,
        -p.omega_b,
        0.0,
    )
}

/// Damped frequency (rad/s) of the oscillatory eigenpair of the
/// frozen-torque drive train; `None` if the mode is overdamped.
pub fn torsional_eigenfrequency(p: &WtgParams) -> Option<f64> {
    let im = frozen_torque_matrix(p)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.im.abs())
        .fold(0.0, f64::max);
    (im > 0.0).then_some(im)
}

/// `|delta theta_sh|` (rad) for a virtual-inertia step `p_vir` seen through
/// the torque-to-twist transfer function at `s = j * s_imag`.
pub fn torsional_gain(s_imag: f64, p_vir: f64, omega_g0: f64, p: &WtgParams) -> Result<f64> {
    if !(omega_g0 > 0.0) {
        return Err(Error::domain(format!(
            "omega_g0 must be positive, got {omega_g0}"
        )));
    }
    let a = p.d_sh * p.omega_b;
    let b = p.k_sh * p.omega_b;
    let w = s_imag;
    let re = b * p.h_tg() - 2.0 * p.h_t * p.h_g * w * w;
    let im = a * p.h_tg() * w;
    Ok(p.omega_b * p.h_t / re.hypot(im) * p_vir.abs() / omega_g0)
}

fn window_start(ts: &TimeSeries) -> f64 {
    ts.event_time
        .unwrap_or_else(|| ts.t.first().copied().unwrap_or(0.0))
}

/// Global minimum of `f` at or after `from`, with its first occurrence.
pub fn nadir_of(t: &[f64], f: &[f64], from: f64) -> Result<(f64, f64)> {
    t.iter()
        .zip(f)
        .filter(|(t, _)| **t >= from - 1e-9)
        .fold(None, |best: Option<(f64, f64)>, (t, f)| match best {
            Some((bf, _)) if bf <= *f => best,
            _ => Some((*f, *t)),
        })
        .ok_or_else(|| Error::domain(format!("no samples at or after t = {from}")))
}

/// Frequency nadir in Hz after the event and the time it is first reached.
pub fn frequency_nadir(ts: &TimeSeries) -> Result<(f64, f64)> {
    nadir_of(&ts.t, &ts.f_hz, window_start(ts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondaryDip {
    pub time: f64,
    pub min_hz: f64,
    /// Prominence of the dip in Hz.
    pub depth_hz: f64,
}

pub const DEFAULT_DIP_PROMINENCE: f64 = 0.01;

/// First strict local minimum of `f` after the signal has recovered half
/// of its nadir depth (relative to `baseline`) and after `after`, whose
/// prominence reaches `prominence`.
pub fn secondary_dip_of(
    t: &[f64],
    f: &[f64],
    from: f64,
    after: f64,
    baseline: f64,
    prominence: f64,
) -> Option<SecondaryDip> {
    let (f_nadir, t_nadir) = nadir_of(t, f, from).ok()?;
    let threshold = f_nadir + 0.5 * (baseline - f_nadir);
    let after = after.max(t_nadir);
    let start = (0..t.len()).find(|&i| t[i] > after && f[i] >= threshold)?;
    let n = f.len();
    let mut i = start + 1;
    while i + 1 < n {
        if f[i] < f[i - 1] && f[i] <= f[i + 1] {
            // skip a flat bottom and require an actual rise after it
            let mut j = i;
            while j + 1 < n && f[j + 1] == f[i] {
                j += 1;
            }
            if j + 1 >= n {
                break;
            }
            let left = f[start..=i]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut right = f[i];
            let mut k = j + 1;
            while k < n && f[k] >= f[i] {
                right = right.max(f[k]);
                k += 1;
            }
            let prom = left.min(right) - f[i];
            if prom >= prominence {
                return Some(SecondaryDip {
                    time: t[i],
                    min_hz: f[i],
                    depth_hz: prom,
                });
            }
            i = j + 1;
            continue;
        }
        i += 1;
    }
    None
}

pub fn detect_secondary_dip(ts: &TimeSeries, after: f64) -> Option<SecondaryDip> {
    detect_secondary_dip_with(ts, after, DEFAULT_DIP_PROMINENCE)
}

pub fn detect_secondary_dip_with(
    ts: &TimeSeries,
    after: f64,
    prominence: f64,
) -> Option<SecondaryDip> {
    secondary_dip_of(
        &ts.t,
        &ts.f_hz,
        window_start(ts),
        after,
        NOMINAL_HZ,
        prominence,
    )
}

/// Dominant frequency (Hz) of `signal` within `window` from the mean
/// half-period between zero crossings of the linearly detrended signal.
/// Needs at least four crossings.
pub fn oscillation_frequency(t: &[f64], signal: &[f64], window: (f64, f64)) -> Option<f64> {
    let (ts, xs): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(signal)
        .filter(|(t, _)| **t >= window.0 - 1e-9 && **t <= window.1 + 1e-9)
        .map(|(t, x)| (*t, *x))
        .unzip();
    if ts.len() < 3 {
        return None;
    }
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let x_mean = xs.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - t_mean).powi(2)).sum();
    let sxy: f64 = ts
        .iter()
        .zip(&xs)
        .map(|(t, x)| (t - t_mean) * (x - x_mean))
        .sum();
    let slope = sxy / sxx;
    let r: Vec<f64> = ts
        .iter()
        .zip(&xs)
        .map(|(t, x)| x - x_mean - slope * (t - t_mean))
        .collect();

    let amplitude = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = xs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amplitude <= 1e-9 * scale || amplitude == 0.0 {
        return None;
    }
    // hysteresis keeps rounding noise from producing spurious crossings
    let h = 1e-3 * amplitude;
    let mut sign = 0i8;
    let mut crossings = Vec::new();
    for i in 0..r.len() {
        if r[i].abs() <= h {
            continue;
        }
        let s = if r[i] > 0.0 { 1 } else { -1 };
        if sign != 0 && s != sign {
            let mut k = i;
            while k > 0 && (r[k - 1] > 0.0) == (r[i] > 0.0) {
                k -= 1;
            }
            let (t0, t1, r0, r1) = (ts[k - 1], ts[k], r[k - 1], r[k]);
            crossings.push(t0 + (t1 - t0) * r0 / (r0 - r1));
        }
        sign = s;
    }
    if crossings.len() < 4 {
        return None;
    }
    let half_period =
        (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    Some(1.0 / (2.0 * half_period))
}

/// First time at or after `from` from which `omega_g` stays within
/// `tol` of `omega_g0` until the end of the record.
pub fn recovery_time_of(
    t: &[f64],
    omega_g: &[f64],
    from: f64,
    omega_g0: f64,
    tol: f64,
) -> Option<f64> {
    let first = t.iter().position(|t| *t >= from - 1e-9)?;
    let outside = |i: usize| (omega_g[i] - omega_g0).abs() > tol;
    match (first..t.len()).rev().find(|&i| outside(i)) {
        None => Some(t[first].max(from)),
        Some(last) if last + 1 < t.len() => Some(t[last + 1]),
        Some(_) => None,
    }
}

pub fn recovery_time(ts: &TimeSeries, wtg: usize, omega_g0: f64, tol: f64) -> Option<f64> {
    recovery_time_of(
        &ts.t,
        &ts.wtgs[wtg].omega_g,
        window_start(ts),
        omega_g0,
        tol,
    )
}

/// Peak-to-peak of `signal` over a time window.
pub fn peak_to_peak(t: &[f64], signal: &[f64], window: (f64, f64)) -> Option<f64> {
    let (lo, hi) = t
        .iter()
        .zip(signal)
        .filter(|(t, _)| **t >= window.0 - 1e-9 && **t <= window.1 + 1e-9)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, x)| {
            (lo.min(*x), hi.max(*x))
        });
    (hi >= lo).then_some(hi - lo)
}

/// Analysis windows and thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Secondary dips are looked for this long after the event.
    pub dip_delay: f64,
    pub dip_prominence: f64,
    /// Length of the post-event window for the torsional frequency.
    pub oscillation_window: f64,
    /// Length of the post-event window for the torsional peak-to-peak.
    pub peak_window: f64,
    /// Recovery band as a fraction of each turbine's initial rotor speed.
    pub recovery_tol: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            dip_delay: 10.0,
            dip_prominence: DEFAULT_DIP_PROMINENCE,
            oscillation_window: 5.0,
            peak_window: 10.0,
            recovery_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WtgMetrics {
    pub omega_g0: f64,
    pub omega_g_min: f64,
    pub rotor_dip: f64,
    pub torsional_freq_hz: Option<f64>,
    pub torsional_peak_to_peak: f64,
    pub recovery_time_s: Option<f64>,
    pub p_vir_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub controller: String,
    pub nadir_hz: f64,
    pub nadir_time_s: f64,
    pub secondary_dip: Option<SecondaryDip>,
    pub torsional_freq_hz: Option<f64>,
    pub torsional_peak_to_peak: f64,
    pub recovery_time_s: Option<f64>,
    pub final_delta_omega_pu: f64,
    pub wtgs: Vec<WtgMetrics>,
}

/// One entry of a flat metrics report.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricValue {
    Number(f64),
    Text(String),
    Missing,
}

impl From<Option<f64>> for MetricValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(MetricValue::Missing, MetricValue::Number)
    }
}

impl From<f64> for MetricValue {
    fn from(v: f64) -> Self {
        MetricValue::Number(v)
    }
}

impl RunMetrics {
    /// Flat key/value view; per-turbine keys are prefixed `wtg<i>_`.
    pub fn to_flat(&self) -> Vec<(String, MetricValue)> {
        let mut out = vec![
            (
                "controller".to_string(),
                MetricValue::Text(self.controller.clone()),
            ),
            ("nadir_hz".into(), self.nadir_hz.into()),
            ("nadir_time_s".into(), self.nadir_time_s.into()),
            (
                "secondary_dip_time_s".into(),
                self.secondary_dip.map(|d| d.time).into(),
            ),
            (
                "secondary_dip_min_hz".into(),
                self.secondary_dip.map(|d| d.min_hz).into(),
            ),
            (
                "secondary_dip_depth_hz".into(),
                self.secondary_dip.map(|d| d.depth_hz).into(),
            ),
            ("torsional_freq_hz".into(), self.torsional_freq_hz.into()),
            (
                "torsional_peak_to_peak".into(),
                self.torsional_peak_to_peak.into(),
            ),
            ("recovery_time_s".into(), self.recovery_time_s.into()),
            (
                "final_delta_omega_pu".into(),
                self.final_delta_omega_pu.into(),
            ),
        ];
        for (i, w) in self.wtgs.iter().enumerate() {
            let p = format!("wtg{}_", i + 1);
            out.extend([
                (format!("{p}omega_g0"), w.omega_g0.into()),
                (format!("{p}omega_g_min"), w.omega_g_min.into()),
                (format!("{p}rotor_dip"), w.rotor_dip.into()),
                (format!("{p}torsional_freq_hz"), w.torsional_freq_hz.into()),
                (
                    format!("{p}torsional_peak_to_peak"),
                    w.torsional_peak_to_peak.into(),
                ),
                (format!("{p}recovery_time_s"), w.recovery_time_s.into()),
                (format!("{p}p_vir_peak"), w.p_vir_peak.into()),
            ]);
        }
        out
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        self.to_flat()
            .into_iter()
            .map(|(k, v)| match v {
                MetricValue::Number(x) => format!("{k} = {x}\n"),
                MetricValue::Text(s) => format!("{k} = {s}\n"),
                MetricValue::Missing => format!("{k} = none\n"),
            })
            .collect()
    }
}

pub fn compute_metrics(ts: &TimeSeries, opts: &MetricsOptions) -> Result<RunMetrics> {
    if ts.is_empty() {
        return Err(Error::domain("empty time series"));
    }
    let from = window_start(ts);
    let (nadir_hz, nadir_time_s) = frequency_nadir(ts)?;
    let secondary_dip = detect_secondary_dip_with(ts, from + opts.dip_delay, opts.dip_prominence);
    let wtgs: Vec<WtgMetrics> = (0..ts.wtgs.len())
        .map(|i| {
            let w = &ts.wtgs[i];
            let slip = ts.torsional_slip(i);
            let omega_g_min = w.omega_g.iter().copied().fold(f64::INFINITY, f64::min);
            WtgMetrics {
                omega_g0: w.omega_g0,
                omega_g_min,
                rotor_dip: w.omega_g0 - omega_g_min,
                torsional_freq_hz: oscillation_frequency(
                    &ts.t,
                    &slip,
                    (from, from + opts.oscillation_window),
                ),
                torsional_peak_to_peak: peak_to_peak(&ts.t, &slip, (from, from + opts.peak_window))
                    .unwrap_or(0.0),
                recovery_time_s: recovery_time(ts, i, w.omega_g0, opts.recovery_tol * w.omega_g0),
                p_vir_peak: w.p_vir.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            }
        })
        .collect();
    Ok(RunMetrics {
        controller: ts.controller.to_string(),
        nadir_hz,
        nadir_time_s,
        secondary_dip,
        torsional_freq_hz: wtgs[0].torsional_freq_hz,
        torsional_peak_to_peak: wtgs[0].torsional_peak_to_peak,
        recovery_time_s: wtgs[0].recovery_time_s,
        final_delta_omega_pu: *ts.delta_omega.last().expect("nonempty"),
        wtgs,
    })
}
