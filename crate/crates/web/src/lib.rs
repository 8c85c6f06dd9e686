//! WebAssembly front end for the static demo page. Every export takes
//! plain values and returns a JSON string carrying the data and a ready
//! SVG; errors surface as JS exceptions.

use serde::Serialize;
use ssolab::modal_id::{self, ModeEstimate};
use ssolab::netmodel::spec::{bundled, parse_system};
use ssolab::netmodel::{initialize_states, Prepared};
use ssolab::report::{self, Series};
use ssolab::smallsignal::{self, LocusPoint, Peak, SsoBand};
use ssolab::timedomain::{self, ChannelKind, Scenario};
use ssolab::Framework;
use wasm_bindgen::prelude::*;

/// Longest simulation the page may request, seconds.
pub const MAX_DURATION: f64 = 2.0;
pub const MAX_POINTS: usize = 4000;

fn prepared(case: &str, framework: Framework, tau_ms: f64) -> Result<Prepared, String> {
    let doc = bundled::by_name(case).ok_or_else(|| format!("unknown case {case:?}"))?;
    let mut spec = parse_system(doc).map_err(|e| e.to_string())?;
    if !(tau_ms >= 0.0) {
        return Err(format!("delay must be >= 0 ms, got {tau_ms}"));
    }
    spec.framework = framework;
    spec.set_tau_p(tau_ms * 1e-3);
    initialize_states(&spec).map_err(|e| e.to_string())
}

fn parse_taus(list: &str) -> Result<Vec<f64>, String> {
    let taus: Vec<f64> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches("ms").trim().parse::<f64>().map(|v| v * 1e-3).map_err(|_| format!("bad delay {s:?}")))
        .collect::<Result<_, _>>()?;
    if taus.is_empty() {
        return Err("empty delay list".into());
    }
    Ok(taus)
}

#[derive(Debug, Serialize)]
pub struct LociResult {
    pub points: Vec<LocusPoint>,
    pub svg: String,
}

pub fn loci(case: &str, taus_ms: &str, pade: usize) -> Result<LociResult, String> {
    let taus = parse_taus(taus_ms)?;
    let p = prepared(case, Framework::Spc, taus[0] * 1e3)?;
    let sweep = smallsignal::delay_sweep(&p.model, &p.op, &taus, pade, SsoBand::default(), 1).map_err(|e| e.to_string())?;
    Ok(LociResult {
        svg: report::loci_plot(&sweep).to_svg(),
        points: sweep.points,
    })
}

#[derive(Debug, Serialize)]
pub struct SvCurve {
    pub framework: Framework,
    pub curve: Vec<(f64, f64)>,
    /// In-band peaks of at least 3 dB prominence.
    pub resonances: Vec<Peak>,
}

#[derive(Debug, Serialize)]
pub struct SvResult {
    pub curves: Vec<SvCurve>,
    pub svg: String,
}

pub fn sv_curves(case: &str, tau_ms: f64, fmin: f64, fmax: f64, points: usize) -> Result<SvResult, String> {
    if !(fmin > 0.0 && fmin < fmax) || points == 0 || points > MAX_POINTS {
        return Err(format!("need 0 < fmin < fmax and 1..={MAX_POINTS} points"));
    }
    let grid = smallsignal::log_grid(fmin, fmax, points);
    let band = SsoBand::default();
    let base = prepared(case, Framework::Spc, tau_ms)?;
    let mut curves = Vec::new();
    for fw in [Framework::Spc, Framework::Qpc] {
        let p = if fw == Framework::Spc { base.clone() } else { base.with_framework(fw).map_err(|e| e.to_string())? };
        let lin = smallsignal::linearize(&p.model, &p.op, 2).map_err(|e| e.to_string())?;
        let curve = smallsignal::sigma_max_db(&lin, &grid, 1).map_err(|e| e.to_string())?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
        let resonances = smallsignal::peaks(&xs, &ys)
            .into_iter()
            .filter(|pk| pk.x >= band.f_min && pk.x <= band.f_max && pk.prominence >= 3.0)
            .collect();
        curves.push(SvCurve {
            framework: fw,
            curve,
            resonances,
        });
    }
    let named: Vec<(String, Vec<(f64, f64)>)> = curves.iter().map(|c| (c.framework.as_str().to_uppercase(), c.curve.clone())).collect();
    Ok(SvResult {
        svg: report::sv_plot(&named, (band.f_min, band.f_max)).to_svg(),
        curves,
    })
}

#[derive(Debug, Serialize)]
pub struct SimResult {
    pub diverged: bool,
    pub samples: usize,
    /// Dominant SSO-band Prony estimate on the disturbed converter's frequency.
    pub prony: Option<ModeEstimate>,
    /// Eigenvalue SSO modes of the same model, for comparison.
    pub eig: Vec<(f64, f64)>,
    pub svg: String,
}

/// A P* pulse of `magnitude` pu on `machine`, 10 ms wide at t = 10 ms.
pub fn time_sim(case: &str, framework: &str, tau_ms: f64, machine: &str, magnitude: f64, duration: f64) -> Result<SimResult, String> {
    if !(duration > 0.2 && duration <= MAX_DURATION) {
        return Err(format!("duration must be in (0.2, {MAX_DURATION}] s"));
    }
    let fw: Framework = framework.parse().map_err(|e| format!("{e}"))?;
    let p = prepared(case, fw, tau_ms)?;
    let scn = Scenario::pulse(duration, machine, magnitude, 0.01, 0.01);
    let mut ts = timedomain::simulate(&p.model, &p.op, &scn).map_err(|e| e.to_string())?;
    for g in &p.model.gfcs {
        let c = timedomain::derive_channel(&ts, ChannelKind::Frequency, &g.id).map_err(|e| e.to_string())?;
        ts.channels.push(c);
    }
    let source = ts
        .channel(&format!("{machine}.omega_c"))
        .or_else(|| ts.channel(&format!("{machine}.omega")))
        .map(|c| c.values.clone());
    let t_end = ts.time.last().copied().unwrap_or(0.0);
    let prony = match source {
        Some(v) if !ts.diverged && t_end > 0.2 => modal_id::prony_fit(&ts.time, &v, (0.12, t_end), 40)
            .ok()
            .and_then(|est| modal_id::dominant_mode(&est, modal_id::SSO_BAND).ok()),
        _ => None,
    };
    let lin = smallsignal::linearize(&p.model, &p.op, 2).map_err(|e| e.to_string())?;
    let modes = smallsignal::eig_modes(&lin).map_err(|e| e.to_string())?.modes;
    let eig = SsoBand::default().select(&modes).iter().map(|m| (m.f_hz, m.zeta)).collect();
    let mut plot = report::freq_plot(&ts);
    if plot.series.is_empty() {
        plot.series = ts
            .channels
            .iter()
            .filter(|c| c.name.ends_with(".omega"))
            .map(|c| Series::line(c.name.clone(), ts.time.iter().copied().zip(c.values.iter().map(|w| w * ts.meta.f_base)).collect()))
            .collect();
    }
    Ok(SimResult {
        diverged: ts.diverged,
        samples: ts.time.len(),
        prony,
        eig,
        svg: plot.to_svg(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = caseNames)]
pub fn case_names() -> String {
    let names: Vec<&str> = bundled::all().iter().map(|(n, _)| *n).collect();
    serde_json::to_string(&names).expect("names")
}

#[wasm_bindgen(js_name = loci)]
pub fn loci_js(case: &str, taus_ms: &str, pade: usize) -> Result<String, JsError> {
    to_js(loci(case, taus_ms, pade))
}

#[wasm_bindgen(js_name = svCurves)]
pub fn sv_curves_js(case: &str, tau_ms: f64, fmin: f64, fmax: f64, points: usize) -> Result<String, JsError> {
    to_js(sv_curves(case, tau_ms, fmin, fmax, points))
}

#[wasm_bindgen(js_name = timeSim)]
pub fn time_sim_js(case: &str, framework: &str, tau_ms: f64, machine: &str, magnitude: f64, duration: f64) -> Result<String, JsError> {
    to_js(time_sim(case, framework, tau_ms, machine, magnitude, duration))
}
