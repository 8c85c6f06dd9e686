//! Nonlinear time-domain simulation with true delay lines.
//!
//! Fixed-step RK4 on the assembled residual. Each delay tap is served by a
//! ring buffer of past tap values, read by linear interpolation at
//! `t - tau` and pre-filled with the equilibrium value.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AssembledModel, GfcParams, OperatingPoint};
use crate::netmodel::{Framework, MachineKind};

pub const DEFAULT_STEP: f64 = 50e-6;
pub const DEFAULT_DECIMATION: usize = 10;
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum TimeDomainError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("step {step} s is coarser than a quarter of the droop delay {tau} s")]
    DelayResolution { step: f64, tau: f64 },
    #[error("unknown machine {0}")]
    UnknownMachine(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("series lacks channel {0}")]
    MissingChannel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Waveform {
    /// Holds `magnitude` from `start` on.
    Step,
    /// `magnitude` on `[start, stop)`.
    Pulse,
    /// `magnitude * sin(2 pi f (t - start))` on `[start, stop)`.
    Sine { freq_hz: f64 },
}

/// Modulation added to a machine's active-power reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub machine: String,
    pub waveform: Waveform,
    /// pu on the machine rating.
    pub magnitude: f64,
    pub start: f64,
    #[serde(default)]
    pub stop: f64,
}

impl Disturbance {
    pub fn value(&self, t: f64) -> f64 {
        match self.waveform {
            Waveform::Step if t >= self.start => self.magnitude,
            Waveform::Pulse if t >= self.start && t < self.stop => self.magnitude,
            Waveform::Sine { freq_hz } if t >= self.start && t < self.stop => {
                self.magnitude * (2.0 * PI * freq_hz * (t - self.start)).sin()
            }
            _ => 0.0,
        }
    }
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_decimation() -> usize {
    DEFAULT_DECIMATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// State names, or derived outputs `<machine>.omega_c` (GFC droop
    /// frequency), `<machine>.pe` (electrical power) and `<machine>.vt`
    /// (terminal-node voltage magnitude). Empty selects the defaults.
    #[serde(default)]
    pub record: Vec<String>,
}

impl Scenario {
    pub fn new(duration: f64) -> Self {
        Scenario {
            name: String::new(),
            duration,
            step: DEFAULT_STEP,
            decimation: DEFAULT_DECIMATION,
            disturbances: Vec::new(),
            record: Vec::new(),
        }
    }

    /// A rectangular P* pulse on one machine.
    pub fn pulse(duration: f64, machine: &str, magnitude: f64, start: f64, width: f64) -> Self {
        let mut s = Scenario::new(duration);
        s.name = format!("pulse {machine}");
        s.disturbances.push(Disturbance {
            machine: machine.to_string(),
            waveform: Waveform::Pulse,
            magnitude,
            start,
            stop: start + width,
        });
        s
    }

    pub fn validate(&self) -> Result<(), TimeDomainError> {
        let bad = |m: &str| Err(TimeDomainError::InvalidScenario(m.to_string()));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad("duration must be positive");
        }
        if !(self.step > 0.0) || self.step > self.duration {
            return bad("step must be positive and below the duration");
        }
        if self.decimation == 0 {
            return bad("decimation must be at least 1");
        }
        for d in &self.disturbances {
            let stop_ok = matches!(d.waveform, Waveform::Step) || (d.stop >= d.start && d.stop <= self.duration);
            if !(d.start >= 0.0 && d.start <= self.duration) || !stop_ok || !d.magnitude.is_finite() {
                return bad("disturbances must lie within [0, duration]");
            }
        }
        Ok(())
    }
}

/// Fixed-delay line sampled at the integration step.
#[derive(Debug, Clone)]
pub struct DelayLine {
    delay: f64,
    step: f64,
    initial: f64,
    /// Index (time / step) of `buf[0]`.
    first: i64,
    buf: VecDeque<f64>,
    capacity: usize,
}

impl DelayLine {
    /// History before `t = 0` reads `initial`; the sample at `t = 0` is `initial` too.
    pub fn new(delay: f64, step: f64, initial: f64) -> Self {
        let capacity = (delay / step).ceil() as usize + 4;
        let mut buf = VecDeque::with_capacity(capacity);
        buf.push_back(initial);
        DelayLine {
            delay,
            step,
            initial,
            first: 0,
            buf,
            capacity,
        }
    }

    /// Appends the sample at the next step time.
    pub fn push(&mut self, value: f64) {
        self.buf.push_back(value);
        if self.buf.len() > self.capacity {
            self.buf.pop_front();
            self.first += 1;
        }
    }

    /// Value at absolute time `t` (linear interpolation).
    pub fn at(&self, t: f64) -> f64 {
        let pos = t / self.step;
        if pos <= 0.0 {
            return self.initial;
        }
        let k = pos.floor() as i64;
        let frac = pos - k as f64;
        let idx = k - self.first;
        let last = self.buf.len() as i64 - 1;
        let idx = idx.clamp(0, last);
        let a = self.buf[idx as usize];
        if idx == last || frac == 0.0 {
            return a;
        }
        a + frac * (self.buf[idx as usize + 1] - a)
    }

    /// Value at `t - delay`.
    pub fn read(&self, t: f64) -> f64 {
        self.at(t - self.delay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesMeta {
    pub scenario: Scenario,
    pub framework: Framework,
    pub tau_p: f64,
    pub f_base: f64,
    pub gfc_params: Vec<(String, GfcParams)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub time: Vec<f64>,
    pub channels: Vec<Channel>,
    pub meta: SeriesMeta,
    /// True if the run stopped early because a state blew up.
    pub diverged: bool,
}

impl TimeSeries {
    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn sample_interval(&self) -> f64 {
        self.meta.scenario.step * self.meta.scenario.decimation as f64
    }
}

#[derive(Debug, Clone, Copy)]
enum Probe {
    State(usize),
    OmegaC(usize),
    Pe(usize),
    Vt(usize),
}

fn machine_index(model: &AssembledModel, id: &str) -> Result<(MachineKind, usize), TimeDomainError> {
    if let Some(k) = model.gfcs.iter().position(|g| g.id == id) {
        return Ok((MachineKind::Gfc, k));
    }
    if let Some(k) = model.sgs.iter().position(|g| g.id == id) {
        return Ok((MachineKind::Sg, k));
    }
    Err(TimeDomainError::UnknownMachine(id.to_string()))
}

fn default_record(model: &AssembledModel) -> Vec<String> {
    let mut out = Vec::new();
    for (id, kind, _) in &model.machines {
        match kind {
            MachineKind::Gfc => {
                out.push(format!("{id}.omega_c"));
                for s in ["vcd", "vcq", "itd", "itq", "pf"] {
                    out.push(format!("{id}.{s}"));
                }
            }
            MachineKind::Sg => {
                out.push(format!("{id}.omega"));
                out.push(format!("{id}.pe"));
                out.push(format!("{id}.vt"));
            }
        }
    }
    out
}

fn resolve(model: &AssembledModel, name: &str) -> Result<(Probe, &'static str), TimeDomainError> {
    if let Some(k) = model.state_index(name) {
        let unit = if name.ends_with(".theta") || name.ends_with(".delta") { "rad" } else { "pu" };
        return Ok((Probe::State(k), unit));
    }
    let unknown = || TimeDomainError::UnknownChannel(name.to_string());
    let (id, what) = name.rsplit_once('.').ok_or_else(unknown)?;
    let (kind, k) = machine_index(model, id).map_err(|_| unknown())?;
    let flat = match kind {
        MachineKind::Gfc => k,
        MachineKind::Sg => model.gfcs.len() + k,
    };
    match (what, kind) {
        ("omega_c", MachineKind::Gfc) => Ok((Probe::OmegaC(k), "pu")),
        ("pe", _) => Ok((Probe::Pe(flat), "pu")),
        ("vt", _) => Ok((Probe::Vt(flat), "pu")),
        _ => Err(unknown()),
    }
}

struct Sampler<'a> {
    model: &'a AssembledModel,
    probes: Vec<Probe>,
}

impl Sampler<'_> {
    fn sample(&self, x: &[f64], u: &[f64], delayed: &[f64], out: &mut [Vec<f64>]) {
        let needs_net = self.probes.iter().any(|p| matches!(p, Probe::Pe(_) | Probe::Vt(_)));
        let v = if needs_net { self.model.node_voltages(x) } else { Vec::new() };
        let w = self.model.gfc_frequencies(x, u, delayed);
        let ng = self.model.gfcs.len();
        for (probe, col) in self.probes.iter().zip(out.iter_mut()) {
            let val = match *probe {
                Probe::State(k) => x[k],
                Probe::OmegaC(k) => w[k],
                Probe::Pe(k) if k < ng => self.model.gfcs[k].power(x),
                Probe::Pe(k) => {
                    let g = &self.model.sgs[k - ng];
                    (v[g.node] * g.injection(x).conj()).re / g.scale
                }
                Probe::Vt(k) if k < ng => v[self.model.gfcs[k].node].norm(),
                Probe::Vt(k) => v[self.model.sgs[k - ng].node].norm(),
            };
            col.push(val);
        }
    }
}

/// Integrates the model from its operating point through the scenario.
pub fn simulate(model: &AssembledModel, op: &OperatingPoint, scn: &Scenario) -> Result<TimeSeries, TimeDomainError> {
    scn.validate()?;
    let h = scn.step;
    for t in &model.taps {
        if t.delay > 0.0 && h > t.delay / 4.0 {
            return Err(TimeDomainError::DelayResolution { step: h, tau: t.delay });
        }
    }
    let mut dist = Vec::new();
    for d in &scn.disturbances {
        let (kind, k) = machine_index(model, &d.machine)?;
        let input = match kind {
            MachineKind::Gfc => model.gfcs[k].input,
            MachineKind::Sg => model.sgs[k].input,
        };
        dist.push((input, d));
    }
    let names = if scn.record.is_empty() { default_record(model) } else { scn.record.clone() };
    let mut probes = Vec::new();
    let mut channels = Vec::new();
    for name in &names {
        let (p, unit) = resolve(model, name)?;
        probes.push(p);
        channels.push(Channel {
            name: name.clone(),
            unit: unit.to_string(),
            values: Vec::new(),
        });
    }
    let sampler = Sampler { model, probes };

    let n = model.n_states();
    let mut lines: Vec<DelayLine> = model
        .taps
        .iter()
        .map(|t| DelayLine::new(t.delay, h, op.x0[t.source]))
        .collect();
    let inputs = |t: f64| {
        let mut u = op.u0.clone();
        for (i, d) in &dist {
            u[*i] += d.value(t);
        }
        u
    };
    let delayed = |lines: &[DelayLine], x: &[f64], t: f64| -> Vec<f64> {
        model
            .taps
            .iter()
            .zip(lines)
            .map(|(tap, l)| if tap.delay > 0.0 { l.read(t) } else { x[tap.source] })
            .collect()
    };

    let steps = (scn.duration / h).round() as usize;
    let mut x = op.x0.clone();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(steps / scn.decimation + 1); names.len()];
    let mut time = Vec::with_capacity(steps / scn.decimation + 1);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut xs = vec![0.0; n];
    let mut diverged = false;

    time.push(0.0);
    sampler.sample(&x, &inputs(0.0), &delayed(&lines, &x, 0.0), &mut cols);
    for step in 0..steps {
        let t = step as f64 * h;
        let (tm, te) = (t + 0.5 * h, t + h);
        let (u0, um, ue) = (inputs(t), inputs(tm), inputs(te));

        model.eval(&x, &u0, &delayed(&lines, &x, t), &mut k1);
        for i in 0..n {
            xs[i] = x[i] + 0.5 * h * k1[i];
        }
        model.eval(&xs, &um, &delayed(&lines, &xs, tm), &mut k2);
        for i in 0..n {
            xs[i] = x[i] + 0.5 * h * k2[i];
        }
        model.eval(&xs, &um, &delayed(&lines, &xs, tm), &mut k3);
        for i in 0..n {
            xs[i] = x[i] + h * k3[i];
        }
        model.eval(&xs, &ue, &delayed(&lines, &xs, te), &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (tap, l) in model.taps.iter().zip(lines.iter_mut()) {
            l.push(x[tap.source]);
        }
        if x.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
            diverged = true;
            break;
        }
        if (step + 1) % scn.decimation == 0 {
            time.push(te);
            sampler.sample(&x, &ue, &delayed(&lines, &x, te), &mut cols);
        }
    }

    for (c, v) in channels.iter_mut().zip(cols) {
        c.values = v;
    }
    Ok(TimeSeries {
        time,
        channels,
        meta: SeriesMeta {
            scenario: scn.clone(),
            framework: model.framework,
            tau_p: model.taps.first().map_or(0.0, |t| t.delay),
            f_base: model.f_base,
            gfc_params: model.gfcs.iter().map(|g| (g.id.clone(), g.params.clone())).collect(),
        },
        diverged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Frequency,
    Power,
    VoltageMag,
}

/// Post-processes recorded channels. Frequency is in Hz (GFC droop
/// output or SG rotor speed); power and voltage magnitude are pu.
pub fn derive_channel(series: &TimeSeries, kind: ChannelKind, machine: &str) -> Result<Channel, TimeDomainError> {
    let get = |name: String| series.channel(&name).ok_or(TimeDomainError::MissingChannel(name));
    let is_gfc = series.meta.gfc_params.iter().any(|(id, _)| id == machine);
    let (name, unit, values) = match kind {
        ChannelKind::Frequency => {
            let src = if is_gfc { get(format!("{machine}.omega_c"))? } else { get(format!("{machine}.omega"))? };
            let f = series.meta.f_base;
            ("f_hz", "Hz", src.values.iter().map(|w| w * f).collect())
        }
        ChannelKind::Power if is_gfc => {
            let (vd, vq) = (get(format!("{machine}.vcd"))?, get(format!("{machine}.vcq"))?);
            let (id, iq) = (get(format!("{machine}.itd"))?, get(format!("{machine}.itq"))?);
            let p = (0..vd.values.len())
                .map(|k| vd.values[k] * id.values[k] + vq.values[k] * iq.values[k])
                .collect();
            ("p", "pu", p)
        }
        ChannelKind::Power => ("p", "pu", get(format!("{machine}.pe"))?.values.clone()),
        ChannelKind::VoltageMag if is_gfc => {
            let (vd, vq) = (get(format!("{machine}.vcd"))?, get(format!("{machine}.vcq"))?);
            let v = vd.values.iter().zip(&vq.values).map(|(d, q)| d.hypot(*q)).collect();
            ("vmag", "pu", v)
        }
        ChannelKind::VoltageMag => ("vmag", "pu", get(format!("{machine}.vt"))?.values.clone()),
    };
    Ok(Channel {
        name: format!("{machine}.{name}"),
        unit: unit.to_string(),
        values,
    })
}
