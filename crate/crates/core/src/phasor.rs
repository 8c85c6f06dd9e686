//! Reference-frame mathematics: Park transformation, space-phasor extraction,
//! frame rotation and per-unit bases.
//!
//! The Park matrix uses the peak-invariant (2/3-scaled) convention, so a
//! balanced set with 1 pu peak maps onto a phasor of magnitude 1.

use std::f64::consts::{FRAC_PI_3, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const TWO_PI_3: f64 = 2.0 * FRAC_PI_3;

/// A phasor in a rotating frame, `d + j q`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpacePhasor {
    pub d: f64,
    pub q: f64,
}

impl SpacePhasor {
    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn magnitude(self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn angle(self) -> f64 {
        self.q.atan2(self.d)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.d, self.q)
    }
}

impl From<Complex64> for SpacePhasor {
    fn from(c: Complex64) -> Self {
        Self { d: c.re, q: c.im }
    }
}

impl From<SpacePhasor> for Complex64 {
    fn from(p: SpacePhasor) -> Self {
        p.to_complex()
    }
}

/// Angle of a rotating frame together with its speed.
///
/// `rho` is kept unwrapped so that it can be integrated from `omega`
/// without discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameAngle {
    pub rho: f64,
    pub omega: f64,
}

impl FrameAngle {
    pub fn new(rho: f64, omega: f64) -> Self {
        Self { rho, omega }
    }

    /// Advances the frame by `dt` seconds at constant speed.
    pub fn advance(self, dt: f64) -> Self {
        Self {
            rho: self.rho + self.omega * dt,
            omega: self.omega,
        }
    }
}

/// System per-unit base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// MVA
    pub s_base: f64,
    /// kV, line-to-line
    pub v_base: f64,
    /// Hz
    pub f_base: f64,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self {
            s_base: 100.0,
            v_base: 230.0,
            f_base: 60.0,
        }
    }
}

impl PerUnitBase {
    pub fn new(s_base: f64, v_base: f64, f_base: f64) -> Option<Self> {
        let ok = [s_base, v_base, f_base].iter().all(|v| v.is_finite() && *v > 0.0);
        ok.then_some(Self {
            s_base,
            v_base,
            f_base,
        })
    }

    /// Ohms.
    pub fn z_base(&self) -> f64 {
        self.v_base * self.v_base / self.s_base
    }

    /// rad/s.
    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.f_base
    }
}

/// Peak-invariant Park matrix for frame angle `rho`. Rows are d, q, zero.
pub fn park_matrix(rho: f64) -> [[f64; 3]; 3] {
    let k = 2.0 / 3.0;
    let angles = [rho, rho - TWO_PI_3, rho + TWO_PI_3];
    [
        angles.map(|a| k * a.cos()),
        angles.map(|a| -k * a.sin()),
        [k * 0.5; 3],
    ]
}

/// Inverse of [`park_matrix`].
pub fn inverse_park_matrix(rho: f64) -> [[f64; 3]; 3] {
    let angles = [rho, rho - TWO_PI_3, rho + TWO_PI_3];
    let mut m = [[0.0; 3]; 3];
    for (row, a) in m.iter_mut().zip(angles) {
        *row = [a.cos(), -a.sin(), 1.0];
    }
    m
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

/// Projects an instantaneous three-phase triple onto the frame at `rho`.
pub fn to_space_phasor(abc: [f64; 3], rho: f64) -> SpacePhasor {
    let dq0 = mat_vec(&park_matrix(rho), abc);
    SpacePhasor::new(dq0[0], dq0[1])
}

/// Reconstructs phase quantities from a phasor and a zero-sequence component.
pub fn from_space_phasor(p: SpacePhasor, zero: f64, rho: f64) -> [f64; 3] {
    mat_vec(&inverse_park_matrix(rho), [p.d, p.q, zero])
}

/// Zero-sequence component of a triple.
pub fn zero_sequence(abc: [f64; 3]) -> f64 {
    (abc[0] + abc[1] + abc[2]) / 3.0
}

/// Re-expresses `p` in a frame advanced by `dtheta`: `p * exp(-j dtheta)`.
pub fn frame_rotate(p: SpacePhasor, dtheta: f64) -> SpacePhasor {
    let (s, c) = dtheta.sin_cos();
    SpacePhasor::new(c * p.d + s * p.q, c * p.q - s * p.d)
}

/// Complex form of [`frame_rotate`], used on hot paths.
#[inline]
pub fn rotate(x: Complex64, dtheta: f64) -> Complex64 {
    let (s, c) = dtheta.sin_cos();
    x * Complex64::new(c, -s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(theta: f64, amp: f64) -> [f64; 3] {
        [
            amp * theta.cos(),
            amp * (theta - TWO_PI_3).cos(),
            amp * (theta + TWO_PI_3).cos(),
        ]
    }

    #[test]
    fn aligned_frame_identity() {
        let p = to_space_phasor([1.0, -0.5, -0.5], 0.0);
        assert!((p.d - 1.0).abs() < 1e-15 && p.q.abs() < 1e-15);
    }

    #[test]
    fn quarter_turn() {
        let p = to_space_phasor([1.0, -0.5, -0.5], PI / 2.0);
        assert!(p.d.abs() < 1e-15);
        assert!((p.q + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_input() {
        for rho in [0.0, 1.0, -7.5] {
            assert_eq!(to_space_phasor([0.0; 3], rho), SpacePhasor::default());
        }
    }

    #[test]
    fn synchronous_frame_is_constant() {
        let w0 = 2.0 * PI * 60.0;
        for k in 0..50 {
            let t = k as f64 * 1.3e-3;
            let p = to_space_phasor(balanced(w0 * t, 1.0), w0 * t);
            assert!((p.d - 1.0).abs() < 1e-12 && p.q.abs() < 1e-12);
            let p = to_space_phasor(balanced(w0 * t, 1.0), w0 * t - PI / 2.0);
            assert!(p.d.abs() < 1e-12 && (p.q - 1.0).abs() < 1e-12);
            let p = to_space_phasor(balanced(w0 * t, 2.5), w0 * t);
            assert!((p.d - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_examples() {
        let p = frame_rotate(SpacePhasor::new(1.0, 0.0), PI / 2.0);
        assert!(p.d.abs() < 1e-15 && (p.q + 1.0).abs() < 1e-15);
        let p = SpacePhasor::new(0.3, 0.4);
        assert_eq!(frame_rotate(p, 0.0), p);
        let back = frame_rotate(frame_rotate(p, 1.234), -1.234);
        assert!((back.d - p.d).abs() < 1e-12 && (back.q - p.q).abs() < 1e-12);
    }

    #[test]
    fn per_unit_base() {
        let b = PerUnitBase::default();
        assert!((b.z_base() - 529.0).abs() < 1e-12);
        assert!((b.omega_base() - 376.99111843077515).abs() < 1e-12);
        assert!(PerUnitBase::new(0.0, 1.0, 1.0).is_none());
    }

    proptest! {
        #[test]
        fn park_round_trip(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64, rho in -50.0..50.0f64) {
            let abc = [a, b, c];
            let p = to_space_phasor(abc, rho);
            let back = from_space_phasor(p, zero_sequence(abc), rho);
            for k in 0..3 {
                prop_assert!((back[k] - abc[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn rotation_composes(d in -5.0..5.0f64, q in -5.0..5.0f64, x in -10.0..10.0f64, y in -10.0..10.0f64) {
            let p = SpacePhasor::new(d, q);
            let one = frame_rotate(p, x + y);
            let two = frame_rotate(frame_rotate(p, x), y);
            prop_assert!((one.d - two.d).abs() < 1e-12 && (one.q - two.q).abs() < 1e-12);
            prop_assert!((one.magnitude() - p.magnitude()).abs() < 1e-12);
        }

        #[test]
        fn magnitude_frame_invariant(a in -3.0..3.0f64, b in -3.0..3.0f64, r1 in -20.0..20.0f64, r2 in -20.0..20.0f64) {
            // zero-sequence-free input
            let abc = [a, b, -a - b];
            let m1 = to_space_phasor(abc, r1).magnitude();
            let m2 = to_space_phasor(abc, r2).magnitude();
            prop_assert!((m1 - m2).abs() < 1e-12);
        }
    }
}
