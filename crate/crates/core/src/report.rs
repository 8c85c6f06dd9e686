//! Output artifacts: fixed-precision numbers, CSV/JSON writers, run
//! manifests with a ledger hash, and minimal SVG plots.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::modal_id::PronyEstimate;
use crate::smallsignal::{DelaySweep, GroupingLabel, Mode, ShapeComponent};
use crate::timedomain::TimeSeries;

/// Significant digits of every float written to CSV or JSON.
pub const SIG_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("column {0} not found")]
    MissingColumn(String),
    #[error("row {row}: cannot parse {text:?} as a number")]
    BadNumber { row: usize, text: String },
    #[error("no time_s column")]
    NoTime,
}

/// `x` at [`SIG_DIGITS`] significant digits; plain decimal for moderate
/// exponents, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mant, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mant = mant.trim_end_matches('0').trim_end_matches('.');
    if !(-5..15).contains(&exp) {
        return format!("{mant}e{exp}");
    }
    let (sign, mant) = mant.strip_prefix('-').map_or(("", mant), |m| ("-", m));
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if digits.len() as i32 <= point {
        format!("{digits}{}", "0".repeat((point - digits.len() as i32) as usize))
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    format!("{sign}{body}")
}

/// `x` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().expect("round trip")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to [`SIG_DIGITS`].
pub fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// SHA-256 (hex) of the compact JSON form of `parts`.
pub fn ledger_hash<T: Serialize>(parts: &T) -> Result<String, ReportError> {
    let mut v = serde_json::to_value(parts)?;
    round_value(&mut v);
    let digest = Sha256::digest(serde_json::to_string(&v)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything one CLI invocation produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub spec_path: String,
    pub framework: String,
    pub tau_p: f64,
    pub command: String,
    pub ledger_hash: String,
    pub outputs: Vec<String>,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
}

/// CSV text with an optional `# ledger_hash=` comment line before the header.
pub fn csv_text(hash: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("utf8");
    Ok(match hash {
        Some(h) => format!("# ledger_hash={h}\n{body}"),
        None => body,
    })
}

/// Reads a numeric CSV (comment lines starting with `#` skipped, booleans
/// as 0/1) into named columns.
pub fn read_numeric_csv(text: &str) -> Result<Vec<(String, Vec<f64>)>, ReportError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        for (k, field) in rec.iter().enumerate().take(names.len()) {
            let x = match field.trim() {
                "true" => 1.0,
                "false" => 0.0,
                t => t.parse().map_err(|_| ReportError::BadNumber {
                    row: row + 1,
                    text: field.into(),
                })?,
            };
            cols[k].push(x);
        }
    }
    Ok(names.into_iter().zip(cols).collect())
}

/// `(time, values)` of `channel` in a time-series CSV; header names may
/// carry a ` [unit]` suffix.
pub fn csv_channel(text: &str, channel: &str) -> Result<(Vec<f64>, Vec<f64>), ReportError> {
    let cols = read_numeric_csv(text)?;
    let bare = |n: &str| n.split(" [").next().unwrap_or(n).to_owned();
    let time = cols.iter().find(|(n, _)| bare(n) == "time_s").ok_or(ReportError::NoTime)?.1.clone();
    let values = cols
        .iter()
        .find(|(n, _)| bare(n) == channel)
        .ok_or_else(|| ReportError::MissingColumn(channel.into()))?
        .1
        .clone();
    Ok((time, values))
}

pub fn timeseries_csv(ts: &TimeSeries, hash: &str) -> Result<String, ReportError> {
    let names: Vec<String> = std::iter::once("time_s [s]".to_owned())
        .chain(ts.channels.iter().map(|c| format!("{} [{}]", c.name, c.unit)))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..ts.time.len())
        .map(|i| {
            std::iter::once(fmt_num(ts.time[i]))
                .chain(ts.channels.iter().map(|c| fmt_num(c.values[i])))
                .collect()
        })
        .collect();
    csv_text(Some(hash), &header, &rows)
}

pub fn sv_csv(curve: &[(f64, f64)], hash: &str) -> Result<String, ReportError> {
    let rows: Vec<Vec<String>> = curve.iter().map(|(f, db)| vec![fmt_num(*f), fmt_num(*db)]).collect();
    csv_text(Some(hash), &["freq_hz", "sigma_max_db"], &rows)
}

pub fn loci_csv(sweep: &DelaySweep, hash: &str) -> Result<String, ReportError> {
    let rows: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_num(p.tau * 1e3),
                fmt_num(p.f_hz),
                fmt_num(100.0 * p.zeta),
                p.mode_id.to_string(),
                p.discontinuity.to_string(),
            ]
        })
        .collect();
    csv_text(Some(hash), &["tau_ms", "f_hz", "zeta_pct", "mode_id", "discontinuity"], &rows)
}

/// One machine of one SSO mode in a compass plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompassRow {
    pub mode_id: usize,
    pub f_hz: f64,
    pub zeta_pct: f64,
    pub machine: String,
    pub area: u32,
    /// Mode-shape magnitude relative to the largest machine.
    pub magnitude: f64,
    pub angle_deg: f64,
}

impl CompassRow {
    pub fn from_shape(mode_id: usize, mode: &Mode, shape: &[ShapeComponent]) -> Vec<CompassRow> {
        shape
            .iter()
            .map(|c| CompassRow {
                mode_id,
                f_hz: mode.f_hz,
                zeta_pct: mode.zeta_pct(),
                machine: c.machine.clone(),
                area: c.area,
                magnitude: c.magnitude(),
                angle_deg: c.angle_deg(),
            })
            .collect()
    }

    pub fn shape_component(&self) -> ShapeComponent {
        ShapeComponent {
            machine: self.machine.clone(),
            area: self.area,
            value: num_complex::Complex64::from_polar(self.magnitude, self.angle_deg.to_radians()),
        }
    }
}

const COMPASS_HEADER: [&str; 7] = ["mode_id", "f_hz", "zeta_pct", "machine", "area", "magnitude", "angle_deg"];

pub fn compass_csv(rows: &[CompassRow], hash: &str) -> Result<String, ReportError> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mode_id.to_string(),
                fmt_num(r.f_hz),
                fmt_num(r.zeta_pct),
                r.machine.clone(),
                r.area.to_string(),
                fmt_num(r.magnitude),
                fmt_num(r.angle_deg),
            ]
        })
        .collect();
    csv_text(Some(hash), &COMPASS_HEADER, &rows)
}

pub fn read_compass_csv(text: &str) -> Result<Vec<CompassRow>, ReportError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| ReportError::MissingColumn(name.into()));
    let idx: Vec<usize> = COMPASS_HEADER.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim().to_owned();
        let num = |k: usize| {
            let s = field(k);
            s.parse::<f64>().map_err(|_| ReportError::BadNumber { row: row + 1, text: s })
        };
        out.push(CompassRow {
            mode_id: num(0)? as usize,
            f_hz: num(1)?,
            zeta_pct: num(2)?,
            machine: field(3),
            area: num(4)? as u32,
            magnitude: num(5)?,
            angle_deg: num(6)?,
        });
    }
    Ok(out)
}

/// One reported mode in `modes.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRecord {
    pub mode_id: usize,
    pub f_hz: f64,
    pub zeta_pct: f64,
    pub sigma: f64,
    pub omega: f64,
    pub sso: bool,
    pub dominant_states: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingLabel>,
}

/// `prony.json` body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PronyReport<'a> {
    pub source: String,
    pub channel: String,
    pub ledger_hash: String,
    pub estimate: &'a PronyEstimate,
    /// Largest-amplitude estimate in the SSO band, if any.
    pub dominant_sso: Option<crate::modal_id::ModeEstimate>,
}

/// One polyline (or marker set) of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            markers: false,
        }
    }

    pub fn marked(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            markers: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    /// Shaded x interval, e.g. the SSO band.
    pub band: Option<(f64, f64)>,
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 7.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    out
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut d = 10f64.powf(lo.log10().floor());
    while d <= hi {
        for m in [1.0, 2.0, 5.0] {
            let t = m * d;
            if t >= lo * (1.0 - 1e-9) && t <= hi * (1.0 + 1e-9) {
                out.push(t);
            }
        }
        d *= 10.0;
    }
    out
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

impl Plot {
    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return ((1.0, 10.0), (0.0, 1.0));
        }
        let widen = |a: f64, b: f64| {
            if b - a > 1e-12 * a.abs().max(b.abs()).max(1e-300) {
                (a, b)
            } else {
                let d = a.abs().max(1.0) * 0.05;
                (a - d, b + d)
            }
        };
        let (x0, x1) = if self.log_x && x1 / x0 < 1.0 + 1e-12 { (x0 / 2.0, x1 * 2.0) } else if self.log_x { (x0, x1) } else { widen(x0, x1) };
        let (y0, y1) = widen(y0, y1);
        let pad = 0.05 * (y1 - y0);
        ((x0, x1), (y0 - pad, y1 + pad))
    }

    pub fn to_svg(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let fx = |x: f64| {
            let u = if self.log_x { (x.log10() - x0.log10()) / (x1.log10() - x0.log10()) } else { (x - x0) / (x1 - x0) };
            LEFT + u * pw
        };
        let fy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        if let Some((b0, b1)) = self.band {
            let (a, b) = (fx(b0.max(x0)), fx(b1.min(x1)));
            if b > a {
                s += &format!("<rect x=\"{a:.2}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{ph}\" fill=\"#f2f2f2\"/>\n", b - a);
            }
        }
        let xt = if self.log_x { log_ticks(x0, x1) } else { linear_ticks(x0, x1) };
        for t in xt {
            let x = fx(t);
            s += &format!(
                "<line x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#ddd\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                TOP + ph,
                TOP + ph + 16.0,
                tick_label(t)
            );
        }
        for t in linear_ticks(y0, y1) {
            let y = fy(t);
            s += &format!(
                "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        s += &format!("<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n");
        s += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            LEFT + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        s += &format!(
            "<text transform=\"translate(18 {}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, ser) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = ser
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0))
                .map(|&(x, y)| (fx(x), fy(y)))
                .collect();
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            s += &format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", path.join(" "));
            if ser.markers {
                for (x, y) in &pts {
                    s += &format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>\n");
                }
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = LEFT + pw + 12.0;
            s += &format!(
                "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{}</text>\n",
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&ser.label)
            );
        }
        s += "</svg>\n";
        s
    }
}

/// σ_max curves in dB against log frequency.
pub fn sv_plot(curves: &[(String, Vec<(f64, f64)>)], band: (f64, f64)) -> Plot {
    Plot {
        title: "Maximum singular value".into(),
        x_label: "frequency (Hz)".into(),
        y_label: "σ_max (dB)".into(),
        log_x: true,
        series: curves.iter().map(|(l, c)| Series::line(l.clone(), c.clone())).collect(),
        band: Some(band),
    }
}

/// Tracked modes in the complex plane, σ against f.
pub fn loci_plot(sweep: &DelaySweep) -> Plot {
    let series = sweep
        .mode_ids()
        .into_iter()
        .map(|id| {
            let pts = sweep.track(id).iter().map(|p| (p.sigma, p.f_hz)).collect();
            Series::marked(format!("mode {id}"), pts)
        })
        .collect();
    Plot {
        title: "SSO mode loci over droop delay".into(),
        x_label: "σ (1/s)".into(),
        y_label: "frequency (Hz)".into(),
        log_x: false,
        series,
        band: None,
    }
}

/// Every frequency channel of a time series, in Hz.
pub fn freq_plot(ts: &TimeSeries) -> Plot {
    let series = ts
        .channels
        .iter()
        .filter(|c| c.unit == "Hz")
        .map(|c| Series::line(c.name.clone(), ts.time.iter().copied().zip(c.values.iter().copied()).collect()))
        .collect();
    Plot {
        title: "Converter frequency".into(),
        x_label: "time (s)".into(),
        y_label: "frequency (Hz)".into(),
        log_x: false,
        series,
        band: None,
    }
}
