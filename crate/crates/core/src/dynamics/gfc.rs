//! Droop-controlled grid-forming converter.
//!
//! Converter-side quantities live in the converter's own d-q frame, which
//! rotates at the droop frequency `omega_c` and sits at angle `theta_c`
//! relative to the network D-Q frame. The filter capacitor voltage is
//! aligned with the d axis at equilibrium.
//!
//! State layout (offsets from the machine's first state):
//!
//! | 0,1 | 2,3 | 4,5 | 6 | 7 | 8 | 9 | 10,11 | 12,13 | 14 |
//! |-----|-----|-----|---|---|---|---|-------|-------|----|
//! | i_f | v_c | i_t | v_dc | theta_c | p_f | x_outer | x_volt | x_curr | x_dc |

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DynError;
use crate::netmodel::NetError;
use crate::phasor::rotate;

pub const N_STATES: usize = 15;
pub const STATE_NAMES: [&str; N_STATES] = [
    "ifd", "ifq", "vcd", "vcq", "itd", "itq", "vdc", "theta", "pf", "xo", "xvd", "xvq", "xcd", "xcq", "xdc",
];

pub const IF: usize = 0;
pub const VC: usize = 2;
pub const IT: usize = 4;
pub const VDC: usize = 6;
pub const THETA: usize = 7;
pub const PF: usize = 8;
pub const XO: usize = 9;
pub const XV: usize = 10;
pub const XC: usize = 12;
pub const XDC: usize = 14;

/// GFC parameters, per unit on the converter rating unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GfcParams {
    /// Filter inductance (reactance at nominal frequency).
    pub l_f: f64,
    pub r_f: f64,
    /// Filter capacitance (susceptance at nominal frequency).
    pub c_f: f64,
    pub r_t: f64,
    pub x_t: f64,
    pub c_dc: f64,
    pub v_dc_nom: f64,
    /// Droop gain, pu frequency per pu power.
    pub m_p: f64,
    pub omega_star: f64,
    /// Power-measurement low-pass cutoff, rad/s.
    pub omega_f: f64,
    /// Droop power-feedback delay, s.
    pub tau_p: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_po: f64,
    pub k_io: f64,
    pub k_pdc: f64,
    pub k_idc: f64,
    /// Output-current feedforward gain in the voltage loop.
    pub f_ff: f64,
}

impl Default for GfcParams {
    fn default() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        GfcParams {
            l_f: 0.08,
            r_f: 0.003,
            c_f: 0.074,
            r_t: 0.002,
            x_t: 0.15,
            c_dc: 4.0,
            v_dc_nom: 1.0,
            m_p: 0.03,
            omega_star: 1.0,
            omega_f: two_pi * 100.0,
            tau_p: 0.002,
            k_pc: 1.0,
            k_ic: 14.3,
            k_pv: 0.9,
            k_iv: 10.0,
            k_po: 0.0,
            k_io: two_pi * 4.0,
            k_pdc: 2.0 / 3.0,
            k_idc: two_pi * 4.0 / 3.0,
            f_ff: 1.0,
        }
    }
}

impl GfcParams {
    pub(crate) fn validate(&self, id: &str) -> Result<(), NetError> {
        let passives = [self.l_f, self.r_f, self.c_f, self.r_t, self.x_t, self.c_dc, self.v_dc_nom];
        if passives.iter().any(|v| !(*v > 0.0)) {
            return Err(NetError::NegativeImpedance(format!("{id}: GFC passive elements must be positive")));
        }
        if !(self.tau_p >= 0.0) || !self.tau_p.is_finite() {
            return Err(NetError::Schema(format!("{id}: tau_p must be >= 0")));
        }
        if !(self.m_p > 0.0) || !(self.omega_f > 0.0) || !(self.omega_star > 0.0) {
            return Err(NetError::Schema(format!("{id}: m_p, omega_f, omega_star must be positive")));
        }
        Ok(())
    }
}

/// A GFC placed in an assembled model.
#[derive(Debug, Clone)]
pub struct Gfc {
    pub id: String,
    pub params: GfcParams,
    /// First state index.
    pub offset: usize,
    /// Network node of the high-voltage terminal.
    pub node: usize,
    pub area: u32,
    pub input: usize,
    pub tap: Option<usize>,
    /// Converter rating over system base.
    pub scale: f64,
    pub omega_b: f64,
    /// Active-power set-point (pu machine base), from dispatch.
    pub p_star: f64,
    /// Capacitor-voltage magnitude reference.
    pub v_star: f64,
}

#[inline]
fn c(x: &[f64], k: usize) -> Complex64 {
    Complex64::new(x[k], x[k + 1])
}

#[inline]
fn put(dx: &mut [f64], k: usize, v: Complex64) {
    dx[k] = v.re;
    dx[k + 1] = v.im;
}

const J: Complex64 = Complex64::new(0.0, 1.0);

impl Gfc {
    fn states<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.offset..self.offset + N_STATES]
    }

    /// Current injected into the network node, system base, network frame.
    pub fn injection(&self, x: &[f64]) -> Complex64 {
        let s = self.states(x);
        rotate(c(s, IT), -s[THETA]) * self.scale
    }

    /// Droop output frequency (pu).
    pub fn omega_c(&self, x: &[f64], u: f64, p_delayed: Option<f64>) -> f64 {
        let s = self.states(x);
        let p_fb = p_delayed.unwrap_or(s[PF]);
        self.params.omega_star + self.params.m_p * (self.p_star + u - p_fb)
    }

    /// Output active power into the transformer (pu machine base).
    pub fn power(&self, x: &[f64]) -> f64 {
        let s = self.states(x);
        let (vc, it) = (c(s, VC), c(s, IT));
        (vc * it.conj()).re
    }

    /// Writes the state derivatives for this converter. `v_grid` is the
    /// terminal-node voltage in the network frame.
    pub fn residual(&self, x: &[f64], v_grid: Complex64, u: f64, p_delayed: Option<f64>, dx: &mut [f64]) {
        let p = &self.params;
        let s = self.states(x);
        let out = &mut dx[self.offset..self.offset + N_STATES];
        let wb = self.omega_b;

        let i_f = c(s, IF);
        let v_c = c(s, VC);
        let i_t = c(s, IT);
        let theta = s[THETA];
        let v_dc = s[VDC];
        let w = self.omega_c(x, u, p_delayed);

        // outer loop: capacitor-voltage magnitude -> d-axis reference
        let e_outer = self.v_star - v_c.norm();
        let v_ref = Complex64::new(s[XO] + p.k_po * e_outer, 0.0);
        // voltage loop
        let e_v = v_ref - v_c;
        let i_ref = p.f_ff * i_t + J * w * p.c_f * v_c + p.k_pv * e_v + c(s, XV);
        // current loop
        let e_i = i_ref - i_f;
        let v_conv = v_c + J * w * p.l_f * i_f + p.k_pc * e_i + c(s, XC);

        let v_t = rotate(v_grid, theta);
        put(out, IF, (v_conv - v_c - p.r_f * i_f - J * w * p.l_f * i_f) * (wb / p.l_f));
        put(out, VC, (i_f - i_t - J * w * p.c_f * v_c) * (wb / p.c_f));
        put(out, IT, (v_c - v_t - p.r_t * i_t - J * w * p.x_t * i_t) * (wb / p.x_t));

        let p_out = (v_c * i_t.conj()).re;
        let p_conv = (v_conv * i_f.conj()).re;
        let e_dc = p.v_dc_nom - v_dc;
        let p_src = self.p_star + u + p.k_pdc * e_dc + s[XDC];
        out[VDC] = wb * (p_src - p_conv) / (p.c_dc * v_dc);
        out[THETA] = wb * (w - 1.0);
        out[PF] = p.omega_f * (p_out - s[PF]);
        out[XO] = p.k_io * e_outer;
        put(out, XV, p.k_iv * e_v);
        put(out, XC, p.k_ic * e_i);
        out[XDC] = p.k_idc * e_dc;
    }

    /// Equilibrium states from the capacitor-node and terminal-node voltages
    /// (network frame, pu). Also fixes the set-points.
    pub fn initialize(&mut self, v_cap: Complex64, v_grid: Complex64, x: &mut [f64]) -> Result<(), DynError> {
        let p = self.params.clone();
        let theta = v_cap.arg();
        let z_t = Complex64::new(p.r_t, p.x_t);
        // transformer current in machine pu, converter frame
        let i_t = rotate((v_cap - v_grid) / z_t, theta);
        let v_c = Complex64::new(v_cap.norm(), 0.0);
        let i_f = i_t + J * p.c_f * v_c;
        let v_conv = v_c + (p.r_f + J * p.l_f) * i_f;
        if !(i_f.norm().is_finite()) || i_f.norm() > 10.0 {
            return Err(DynError::InfeasibleTerminal(self.id.clone()));
        }
        let p_out = (v_c * i_t.conj()).re;
        let p_conv = (v_conv * i_f.conj()).re;
        self.p_star = p_out;
        self.v_star = v_c.norm();

        let s = &mut x[self.offset..self.offset + N_STATES];
        put(s, IF, i_f);
        put(s, VC, v_c);
        put(s, IT, i_t);
        s[VDC] = p.v_dc_nom;
        s[THETA] = theta;
        s[PF] = p_out;
        s[XO] = v_c.re;
        put(s, XV, i_f - p.f_ff * i_t - J * p.omega_star * p.c_f * v_c);
        put(s, XC, v_conv - v_c - J * p.omega_star * p.l_f * i_f);
        s[XDC] = p_conv - p_out;
        Ok(())
    }
}
