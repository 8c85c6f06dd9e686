//! Synchronous generator: two-axis subtransient rotor model with a static
//! exciter and a first-order governor.
//!
//! Rotor-frame quantities use `d + j q`; the q axis sits at angle `delta`
//! in the network frame, so network-to-rotor is a rotation by
//! `delta - pi/2`. Under SPC the stator current behind the subtransient
//! reactance is a state pair; under QPC it is algebraic.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DynError;
use crate::netmodel::{Framework, NetError};
use crate::phasor::rotate;

pub const DELTA: usize = 0;
pub const OMEGA: usize = 1;
pub const EQP: usize = 2;
pub const EDP: usize = 3;
pub const EQPP: usize = 4;
pub const EDPP: usize = 5;
pub const EFD: usize = 6;
pub const PM: usize = 7;
/// Stator current (SPC only).
pub const ISTATOR: usize = 8;

pub const ROTOR_STATES: usize = 8;
pub const STATE_NAMES: [&str; 10] = ["delta", "omega", "eqp", "edp", "eqpp", "edpp", "efd", "pm", "id", "iq"];

pub fn state_count(framework: Framework) -> usize {
    match framework {
        Framework::Spc => ROTOR_STATES + 2,
        Framework::Qpc => ROTOR_STATES,
    }
}

/// Machine parameters on the machine base; time constants in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgParams {
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub xd_pp: f64,
    pub xq_pp: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    pub td0_pp: f64,
    pub tq0_pp: f64,
    pub h: f64,
    pub d: f64,
    pub ra: f64,
    pub xl: f64,
    pub ka: f64,
    pub ta: f64,
    /// Governor droop (pu speed per pu power).
    pub r_gov: f64,
    pub tg: f64,
}

impl Default for SgParams {
    fn default() -> Self {
        SgParams {
            xd: 1.8,
            xq: 1.7,
            xd_p: 0.3,
            xq_p: 0.55,
            xd_pp: 0.25,
            xq_pp: 0.25,
            td0_p: 8.0,
            tq0_p: 0.4,
            td0_pp: 0.03,
            tq0_pp: 0.05,
            h: 6.5,
            d: 0.0,
            ra: 0.0025,
            xl: 0.2,
            ka: 200.0,
            ta: 0.02,
            r_gov: 0.05,
            tg: 0.5,
        }
    }
}

impl SgParams {
    pub(crate) fn validate(&self, id: &str) -> Result<(), NetError> {
        let ok_chain = self.xd >= self.xd_p && self.xd_p >= self.xd_pp && self.xd_pp > 0.0;
        let ok_q = self.xq >= self.xq_p && self.xq_p >= self.xq_pp && self.xq_pp > 0.0;
        if !(ok_chain && ok_q) {
            return Err(NetError::Schema(format!("{id}: SG reactances must satisfy X >= X' >= X'' > 0")));
        }
        if (self.xd_pp - self.xq_pp).abs() > 1e-9 {
            return Err(NetError::Schema(format!("{id}: subtransient saliency (xd_pp != xq_pp) is not supported")));
        }
        let tcs = [self.td0_p, self.tq0_p, self.td0_pp, self.tq0_pp, self.ta, self.tg, self.h];
        if tcs.iter().any(|t| !(*t > 0.0)) || self.ra < 0.0 || self.r_gov <= 0.0 {
            return Err(NetError::Schema(format!("{id}: SG time constants and H must be positive")));
        }
        Ok(())
    }

    fn z_pp(&self) -> Complex64 {
        Complex64::new(self.ra, self.xd_pp)
    }
}

#[derive(Debug, Clone)]
pub struct Sg {
    pub id: String,
    pub params: SgParams,
    pub framework: Framework,
    pub offset: usize,
    pub node: usize,
    pub area: u32,
    pub input: usize,
    pub scale: f64,
    pub omega_b: f64,
    pub v_ref: f64,
    pub p_ref: f64,
}

#[inline]
fn c(x: &[f64], k: usize) -> Complex64 {
    Complex64::new(x[k], x[k + 1])
}

const J: Complex64 = Complex64::new(0.0, 1.0);

impl Sg {
    pub fn n_states(&self) -> usize {
        state_count(self.framework)
    }

    fn states<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.offset..self.offset + self.n_states()]
    }

    fn frame(&self, s: &[f64]) -> f64 {
        s[DELTA] - FRAC_PI_2
    }

    fn e_pp(s: &[f64]) -> Complex64 {
        Complex64::new(s[EDPP], s[EQPP])
    }

    /// SPC: stator current injected into the network. QPC: Norton current
    /// `E''/Z''` (the Norton admittance is part of the Y-bus).
    pub fn injection(&self, x: &[f64]) -> Complex64 {
        let s = self.states(x);
        let frame = self.frame(s);
        match self.framework {
            Framework::Spc => rotate(c(s, ISTATOR), -frame) * self.scale,
            Framework::Qpc => rotate(Self::e_pp(s) / self.params.z_pp(), -frame) * self.scale,
        }
    }

    /// Norton admittance on the system base (QPC).
    pub fn norton_admittance(&self) -> Complex64 {
        self.scale / self.params.z_pp()
    }

    pub fn speed(&self, x: &[f64]) -> f64 {
        self.states(x)[OMEGA]
    }

    /// Stator current in the rotor frame (machine base).
    pub fn stator_current(&self, x: &[f64], v_grid: Complex64) -> Complex64 {
        let s = self.states(x);
        match self.framework {
            Framework::Spc => c(s, ISTATOR),
            Framework::Qpc => {
                let v = rotate(v_grid, self.frame(s));
                (Self::e_pp(s) - v) / self.params.z_pp()
            }
        }
    }

    pub fn residual(&self, x: &[f64], v_grid: Complex64, u: f64, dx: &mut [f64]) {
        let p = &self.params;
        let s = self.states(x);
        let n = self.n_states();
        let out = &mut dx[self.offset..self.offset + n];
        let v = rotate(v_grid, self.frame(s));
        let i = self.stator_current(x, v_grid);
        let e_pp = Self::e_pp(s);
        let w = s[OMEGA];
        let pe = (e_pp * i.conj()).re;

        out[DELTA] = self.omega_b * (w - 1.0);
        out[OMEGA] = (s[PM] - pe - p.d * (w - 1.0)) / (2.0 * p.h);
        out[EQP] = (s[EFD] - s[EQP] - (p.xd - p.xd_p) * i.re) / p.td0_p;
        out[EDP] = (-s[EDP] + (p.xq - p.xq_p) * i.im) / p.tq0_p;
        out[EQPP] = (s[EQP] - s[EQPP] - (p.xd_p - p.xd_pp) * i.re) / p.td0_pp;
        out[EDPP] = (s[EDP] - s[EDPP] + (p.xq_p - p.xq_pp) * i.im) / p.tq0_pp;
        out[EFD] = (p.ka * (self.v_ref - v_grid.norm()) - s[EFD]) / p.ta;
        out[PM] = (self.p_ref + u - (w - 1.0) / p.r_gov - s[PM]) / p.tg;
        if self.framework == Framework::Spc {
            let di = (e_pp - v - p.ra * i - J * w * p.xd_pp * i) * (self.omega_b / p.xd_pp);
            out[ISTATOR] = di.re;
            out[ISTATOR + 1] = di.im;
        }
    }

    /// Equilibrium from terminal voltage and injected current (network
    /// frame, system base current).
    pub fn initialize(&mut self, v_t: Complex64, i_sys: Complex64, x: &mut [f64]) -> Result<(), DynError> {
        let p = self.params.clone();
        let i_net = i_sys / self.scale;
        let e_q = v_t + Complex64::new(p.ra, p.xq) * i_net;
        if !e_q.norm().is_finite() {
            return Err(DynError::InfeasibleTerminal(self.id.clone()));
        }
        let delta = e_q.arg();
        let frame = delta - FRAC_PI_2;
        let v = rotate(v_t, frame);
        let i = rotate(i_net, frame);
        let (id, iq) = (i.re, i.im);
        let edpp = v.re + p.ra * id - p.xd_pp * iq;
        let eqpp = v.im + p.ra * iq + p.xd_pp * id;
        let edp = (p.xq - p.xq_p) * iq;
        let eqp = eqpp + (p.xd_p - p.xd_pp) * id;
        let efd = eqp + (p.xd - p.xd_p) * id;
        let pe = (Complex64::new(edpp, eqpp) * i.conj()).re;
        self.v_ref = v_t.norm() + efd / p.ka;
        self.p_ref = pe;

        let n = self.n_states();
        let s = &mut x[self.offset..self.offset + n];
        s[DELTA] = delta;
        s[OMEGA] = 1.0;
        s[EQP] = eqp;
        s[EDP] = edp;
        s[EQPP] = eqpp;
        s[EDPP] = edpp;
        s[EFD] = efd;
        s[PM] = pe;
        if self.framework == Framework::Spc {
            s[ISTATOR] = id;
            s[ISTATOR + 1] = iq;
        }
        Ok(())
    }
}
