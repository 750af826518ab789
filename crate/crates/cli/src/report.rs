//! Artifact writers: CSV time series, SVG line plots and metrics JSON.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use windvic::analysis::MetricValue;
use windvic::TimeSeries;

use crate::CliError;

/// Write `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let io = |e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.flush().map_err(io)?;
    // temp files are created owner-only; artifacts should be ordinary files
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub const CSV_HEADER: &str = "t,delta_omega_pu,f_hz,delta_pg_pu";

/// One row per recorded sample. Numbers use Rust's shortest round-trip
/// formatting, which never depends on the process locale.
pub fn time_series_csv(ts: &TimeSeries) -> String {
    let mut out = String::from(CSV_HEADER);
    for i in 1..=ts.wtgs.len() {
        write!(
            out,
            ",omega_t_{i},omega_g_{i},theta_sh_{i},pe_{i},pvir_{i},dpe_{i}"
        )
        .unwrap();
    }
    out.push('\n');
    for k in 0..ts.len() {
        write!(
            out,
            "{},{},{},{}",
            ts.t[k], ts.delta_omega[k], ts.f_hz[k], ts.delta_p_g[k]
        )
        .unwrap();
        for w in &ts.wtgs {
            write!(
                out,
                ",{},{},{},{},{},{}",
                w.omega_t[k], w.omega_g[k], w.theta_sh[k], w.p_e[k], w.p_vir[k], w.dpe[k]
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// Flat JSON object; missing and non-finite values become `null`.
pub fn metrics_json(flat: &[(String, MetricValue)]) -> serde_json::Value {
    let map = flat
        .iter()
        .map(|(k, v)| {
            let v = match v {
                MetricValue::Number(x) => serde_json::Number::from_f64(*x)
                    .map_or(serde_json::Value::Null, serde_json::Value::Number),
                MetricValue::Text(s) => serde_json::Value::String(s.clone()),
                MetricValue::Missing => serde_json::Value::Null,
            };
            (k.clone(), v)
        })
        .collect();
    serde_json::Value::Object(map)
}

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub label: String,
    pub y: &'a [f64],
}

/// Round tick step: 1, 2 or 5 times a power of ten.
fn tick_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        "0".into()
    } else {
        s
    }
}

/// Fixed-size SVG with one polyline per series, axes, tick labels and a
/// legend on the right.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    x: &[f64],
    series: &[Series],
) -> String {
    let finite = |v: &&f64| v.is_finite();
    let (x_lo, x_hi) = bounds(x.iter().filter(finite).copied());
    let (mut y_lo, mut y_hi) = bounds(
        series
            .iter()
            .flat_map(|s| s.y.iter().filter(finite).copied()),
    );
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| TOP + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="17">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    )
    .unwrap();

    let x_step = tick_step(x_hi - x_lo, 6);
    for v in ticks(x_lo, x_hi) {
        let px = sx(v);
        writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e4e4e4"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 20.0,
            tick_label(v, x_step)
        )
        .unwrap();
    }
    let y_step = tick_step(y_hi - y_lo, 6);
    for v in ticks(y_lo, y_hi) {
        let py = sy(v);
        writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e4e4e4"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 8.0,
            py + 4.0,
            tick_label(v, y_step)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text transform="translate(24 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(r#"<polyline fill="none" stroke-width="1.5" stroke=""#);
        svg.push_str(color);
        svg.push_str(r#"" points=""#);
        for (xv, yv) in x.iter().zip(s.y) {
            if xv.is_finite() && yv.is_finite() {
                write!(svg, "{:.2},{:.2} ", sx(*xv), sy(*yv)).unwrap();
            }
        }
        svg.push_str("\"/>\n");
        let ly = TOP + 10.0 + 22.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let half = 0.5 * lo.abs().max(1e-3);
        return (lo - half, hi + half);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Frequency, rotor speeds and power increments of one run.
pub fn plots(ts: &TimeSeries) -> [(&'static str, String); 3] {
    let freq = line_plot(
        "Grid frequency",
        "time (s)",
        "frequency (Hz)",
        &ts.t,
        &[Series {
            label: "f".into(),
            y: &ts.f_hz,
        }],
    );
    let mut speeds = Vec::new();
    let mut powers = vec![Series {
        label: "grid dPg".into(),
        y: &ts.delta_p_g,
    }];
    for (i, w) in ts.wtgs.iter().enumerate() {
        let n = i + 1;
        speeds.push(Series {
            label: format!("omega_t {n}"),
            y: &w.omega_t,
        });
        speeds.push(Series {
            label: format!("omega_g {n}"),
            y: &w.omega_g,
        });
        powers.push(Series {
            label: format!("WTG {n} dPe"),
            y: &w.dpe,
        });
    }
    let rotor = line_plot("Rotor speeds", "time (s)", "speed (pu)", &ts.t, &speeds);
    let power = line_plot("Power increments", "time (s)", "power (pu)", &ts.t, &powers);
    [
        ("frequency", freq),
        ("rotor_speeds", rotor),
        ("power", power),
    ]
}

/// Paths of the artifacts written for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputBundle {
    pub csv: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl OutputBundle {
    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.csv.iter().chain(&self.plots).chain(&self.metrics)
    }
}
