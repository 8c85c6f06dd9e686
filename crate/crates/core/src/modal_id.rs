//! Ringdown identification: linear-prediction Prony and matrix pencil.
//!
//! Both estimators return damped sinusoids `A e^{σt} cos(2πft + φ)`
//! referenced to the first sample of the analysis window.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_ORDER: usize = 8;
/// Singular values below this fraction of the largest are truncated.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Default analysis band for SSO-class modes, Hz.
pub const SSO_BAND: (f64, f64) = (5.0, 55.0);

#[derive(Debug, Error, PartialEq)]
pub enum ModalIdError {
    #[error("window holds {samples} samples; order {order} needs at least {needed}")]
    WindowTooShort { samples: usize, order: usize, needed: usize },
    #[error("model order must be at least 1")]
    BadOrder,
    #[error("window [{0}, {1}] lies outside the series")]
    BadWindow(f64, f64),
    #[error("time axis is not uniformly sampled")]
    NonUniform,
    #[error("linear-prediction system is ill-conditioned at order {0}; try a lower order")]
    IllConditioned(usize),
    #[error("no mode in band [{0}, {1}] Hz")]
    EmptyBand(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeEstimate {
    pub f_hz: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl ModeEstimate {
    fn from_root(s: Complex64, c: Complex64) -> Self {
        let omega = s.im.abs();
        let mag = s.norm();
        let oscillatory = omega > 0.0;
        ModeEstimate {
            f_hz: omega / (2.0 * PI),
            sigma: s.re,
            zeta: if mag > 0.0 { -s.re / mag } else { 1.0 },
            amplitude: if oscillatory { 2.0 * c.norm() } else { c.norm() },
            phase: c.arg(),
        }
    }

    pub fn is_oscillatory(&self) -> bool {
        self.f_hz > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PronyEstimate {
    /// Sorted by amplitude, largest first.
    pub modes: Vec<ModeEstimate>,
    /// Relative RMS misfit of the reconstruction.
    pub residual: f64,
    pub order: usize,
    /// Effective rank kept after truncation.
    pub rank: usize,
    pub window: (f64, f64),
    pub method: &'static str,
}

/// Samples of `values` whose time lies in `window`, plus the step.
pub fn window_samples<'a>(time: &[f64], values: &'a [f64], window: (f64, f64)) -> Result<(&'a [f64], f64, f64), ModalIdError> {
    let (t0, t1) = window;
    let n = time.len().min(values.len());
    if n < 2 || !(t1 > t0) || t0 < time[0] - 1e-12 || t1 > time[n - 1] + 1e-9 {
        return Err(ModalIdError::BadWindow(t0, t1));
    }
    let dt = (time[n - 1] - time[0]) / (n - 1) as f64;
    if time.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(ModalIdError::NonUniform);
    }
    let a = ((t0 - time[0]) / dt - 1e-9).ceil().max(0.0) as usize;
    let b = (((t1 - time[0]) / dt + 1e-9).floor() as usize).min(n - 1);
    if b < a {
        return Err(ModalIdError::BadWindow(t0, t1));
    }
    Ok((&values[a..=b], dt, time[a]))
}

fn detrend(y: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| v - mean).collect()
}

fn check_len(n: usize, order: usize) -> Result<(), ModalIdError> {
    if order == 0 {
        return Err(ModalIdError::BadOrder);
    }
    if n < 4 * order {
        return Err(ModalIdError::WindowTooShort {
            samples: n,
            order,
            needed: 4 * order,
        });
    }
    Ok(())
}

/// Least-squares amplitudes for roots `z` (plus a constant) and the
/// resulting estimate.
fn finish(y: &[f64], dt: f64, roots: &[Complex64], order: usize, rank: usize, window: (f64, f64), method: &'static str) -> PronyEstimate {
    let n = y.len();
    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut roots: Vec<Complex64> = roots.iter().copied().filter(|z| z.norm() > 0.0 && z.is_finite()).collect();
    roots.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
    let m = roots.len() + 1;
    let v = DMatrix::from_fn(n, m, |r, c| if c < roots.len() { roots[c].powu(r as u32) } else { Complex64::new(1.0, 0.0) });
    let b = DVector::from_iterator(n, y.iter().map(|v| Complex64::new(*v, 0.0)));
    let svd = v.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let coef = svd
        .solve(&b, smax * 1e-12)
        .unwrap_or_else(|_| DVector::from_element(m, Complex64::new(0.0, 0.0)));
    let fit = &v * &coef;
    let misfit = (0..n).map(|k| (fit[k].re - y[k]).powi(2)).sum::<f64>().sqrt();
    let residual = if y_norm > 0.0 { misfit / y_norm } else { 0.0 };
    let nyquist = 0.5 / dt;
    let mut modes: Vec<ModeEstimate> = roots
        .iter()
        .zip(coef.iter())
        .filter(|(z, _)| z.im >= 0.0)
        .map(|(z, c)| ModeEstimate::from_root(z.ln() / dt, *c))
        .filter(|m| m.f_hz < nyquist && m.amplitude.is_finite())
        .collect();
    modes.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude).then(a.f_hz.total_cmp(&b.f_hz)));
    PronyEstimate {
        modes,
        residual,
        order,
        rank,
        window,
        method,
    }
}

fn companion_roots(a: &[f64]) -> Vec<Complex64> {
    let p = a.len();
    if p == 0 {
        return Vec::new();
    }
    let mut c = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        c[(0, k)] = a[k];
    }
    for k in 1..p {
        c[(k, k - 1)] = 1.0;
    }
    c.complex_eigenvalues().iter().copied().collect()
}

/// Linear-prediction Prony fit on the samples inside `window`.
pub fn prony_fit(time: &[f64], values: &[f64], window: (f64, f64), order: usize) -> Result<PronyEstimate, ModalIdError> {
    prony_fit_tol(time, values, window, order, DEFAULT_RANK_TOL)
}

pub fn prony_fit_tol(time: &[f64], values: &[f64], window: (f64, f64), order: usize, rank_tol: f64) -> Result<PronyEstimate, ModalIdError> {
    let (raw, dt, _) = window_samples(time, values, window)?;
    check_len(raw.len(), order)?;
    let y = detrend(raw);
    let n = y.len();
    let rows = n - order;
    // last column is an intercept so a residual offset does not bias the poles
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let a = DMatrix::from_fn(rows, order + 1, |r, c| if c < order { y[r + order - 1 - c] } else { rms });
    let b = DVector::from_iterator(rows, y[order..].iter().copied());
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if rms == 0.0 {
        return Ok(finish(&y, dt, &[], order, 0, window, "prony"));
    }
    let eps = smax * rank_tol;
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let lp = svd.solve(&b, eps).map_err(|_| ModalIdError::IllConditioned(order))?;
    if lp.iter().any(|v| !v.is_finite()) {
        return Err(ModalIdError::IllConditioned(order));
    }
    let roots = companion_roots(&lp.as_slice()[..order]);
    Ok(finish(&y, dt, &roots, order, rank, window, "prony"))
}

/// Matrix-pencil estimate with at most `order` poles.
pub fn matrix_pencil(time: &[f64], values: &[f64], window: (f64, f64), order: usize) -> Result<PronyEstimate, ModalIdError> {
    let (raw, dt, _) = window_samples(time, values, window)?;
    check_len(raw.len(), order)?;
    let y = detrend(raw);
    let n = y.len();
    let l = n / 3;
    let hankel = DMatrix::from_fn(n - l, l + 1, |r, c| y[r + c]);
    let svd = hankel.svd(false, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(finish(&y, dt, &[], order, 0, window, "matrix-pencil"));
    }
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > smax * DEFAULT_RANK_TOL)
        .count()
        .min(order);
    let vt = svd.v_t.expect("requested");
    // right singular vectors as columns, truncated
    let v = vt.rows(0, rank).transpose();
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let pinv = v1.pseudo_inverse(1e-14).map_err(|_| ModalIdError::IllConditioned(order))?;
    let pencil = pinv * v2;
    let roots: Vec<Complex64> = pencil.complex_eigenvalues().iter().copied().collect();
    Ok(finish(&y, dt, &roots, order, rank, window, "matrix-pencil"))
}

/// Largest-amplitude oscillatory mode with `lo <= f <= hi`.
pub fn dominant_mode(est: &PronyEstimate, band: (f64, f64)) -> Result<ModeEstimate, ModalIdError> {
    est.modes
        .iter()
        .filter(|m| m.is_oscillatory() && m.f_hz >= band.0 && m.f_hz <= band.1)
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
        .copied()
        .ok_or(ModalIdError::EmptyBand(band.0, band.1))
}

/// Ratio of the oscillation amplitude in `late` to that in `early`, the
/// oscillation taken as the signal minus its one-period moving average at
/// `f_hz`. Above 1 the ringdown grows.
pub fn envelope_ratio(time: &[f64], values: &[f64], f_hz: f64, early: (f64, f64), late: (f64, f64)) -> Result<f64, ModalIdError> {
    let n = time.len().min(values.len());
    if n < 2 {
        return Err(ModalIdError::BadWindow(early.0, late.1));
    }
    let (_, dt, _) = window_samples(time, values, (time[0], time[n - 1]))?;
    let w = ((1.0 / f_hz / dt).round() as usize).max(1);
    let peak = |(a, b): (f64, f64)| -> Result<f64, ModalIdError> {
        let lo = ((a - time[0]) / dt).ceil().max(0.0) as usize;
        let hi = ((b - time[0]) / dt).floor() as usize;
        if lo < w / 2 || hi + w - w / 2 > n || hi < lo {
            return Err(ModalIdError::BadWindow(a, b));
        }
        Ok((lo..=hi)
            .map(|k| {
                let avg = values[k - w / 2..k - w / 2 + w].iter().sum::<f64>() / w as f64;
                (values[k] - avg).abs()
            })
            .fold(0.0, f64::max))
    };
    Ok(peak(late)? / peak(early)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn signal(fs: f64, dur: f64, modes: &[(f64, f64, f64, f64)]) -> (Vec<f64>, Vec<f64>) {
        let n = (fs * dur).round() as usize + 1;
        let t: Vec<f64> = (0..n).map(|k| k as f64 / fs).collect();
        let y = t
            .iter()
            .map(|t| {
                modes
                    .iter()
                    .map(|(a, f, sigma, ph)| a * (sigma * t).exp() * (2.0 * PI * f * t + ph).cos())
                    .sum()
            })
            .collect();
        (t, y)
    }

    fn sigma_for(f: f64, zeta: f64) -> f64 {
        let w = 2.0 * PI * f;
        -zeta * w / (1.0 - zeta * zeta).sqrt()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn envelope_ratio_tracks_damping() {
        let dt = 1e-4;
        let time: Vec<f64> = (0..6000).map(|k| k as f64 * dt).collect();
        for sigma in [-3.0, 0.0, 2.0] {
            let y: Vec<f64> = time.iter().map(|t| 0.7 + (sigma * t).exp() * (2.0 * PI * 40.0 * t).cos()).collect();
            let r = envelope_ratio(&time, &y, 40.0, (0.1, 0.2), (0.4, 0.5)).unwrap();
            let expect = (sigma * 0.3f64).exp();
            assert!((r / expect - 1.0).abs() < 0.02, "{sigma}: {r} vs {expect}");
        }
        assert!(envelope_ratio(&time, &time, 40.0, (0.0, 0.1), (0.4, 0.5)).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = crate::smallsignal::log_grid(1.0, 100.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[2] - 10.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-12);
        assert_eq!(crate::smallsignal::log_grid(3.0, 9.0, 1), vec![3.0]);
    }

    #[test]
    fn single_damped_sinusoid() {
        let (t, y) = signal(1000.0, 1.0, &[(1.0, 40.0, -0.5, 0.0)]);
        let est = prony_fit(&t, &y, (0.0, 1.0), 2).unwrap();
        let m = est.modes[0];
        assert!(rel(m.f_hz, 40.0) < 1e-6, "{m:?}");
        assert!(rel(m.sigma, -0.5) < 1e-6);
        let zeta = 0.5 / (0.25 + (2.0 * PI * 40.0).powi(2)).sqrt();
        assert!(rel(m.zeta, zeta) < 1e-6);
        assert!((100.0 * m.zeta - 0.199).abs() < 5e-4);
        assert!(est.residual < 1e-6);
    }

    #[test]
    fn two_mode_mixture() {
        let s1 = sigma_for(40.7, -0.0024);
        let s2 = sigma_for(1.2, 0.10);
        let (t, y) = signal(1000.0, 2.0, &[(1.0, 40.7, s1, 0.3), (2.0, 1.2, s2, -1.0)]);
        let est = prony_fit(&t, &y, (0.0, 2.0), 8).unwrap();
        let find = |f: f64| *est.modes.iter().find(|m| (m.f_hz - f).abs() < 0.1).unwrap();
        let (a, b) = (find(40.7), find(1.2));
        assert!(rel(a.f_hz, 40.7) < 1e-4 && rel(a.zeta, -0.0024) < 1e-4, "{a:?}");
        assert!(rel(b.f_hz, 1.2) < 1e-4 && rel(b.zeta, 0.10) < 1e-4, "{b:?}");
        let d = dominant_mode(&est, SSO_BAND).unwrap();
        assert!(rel(d.f_hz, 40.7) < 1e-4);
        assert_eq!(dominant_mode(&est, (100.0, 200.0)), Err(ModalIdError::EmptyBand(100.0, 200.0)));
    }

    #[test]
    fn matrix_pencil_agrees() {
        let s1 = sigma_for(40.7, -0.0024);
        let s2 = sigma_for(1.2, 0.10);
        let (t, y) = signal(1000.0, 2.0, &[(1.0, 40.7, s1, 0.3), (2.0, 1.2, s2, -1.0)]);
        let est = matrix_pencil(&t, &y, (0.0, 2.0), 8).unwrap();
        let d = dominant_mode(&est, SSO_BAND).unwrap();
        assert!(rel(d.f_hz, 40.7) < 1e-6 && rel(d.zeta, -0.0024) < 1e-5, "{d:?}");
    }

    #[test]
    fn constant_signal_has_no_oscillation() {
        let t: Vec<f64> = (0..500).map(|k| k as f64 * 1e-3).collect();
        let y = vec![3.0; 500];
        let est = prony_fit(&t, &y, (0.0, 0.499), 8).unwrap();
        assert!(est.modes.iter().all(|m| !m.is_oscillatory() || m.amplitude < 1e-9));
        assert!(dominant_mode(&est, SSO_BAND).is_err());
    }

    #[test]
    fn single_mode_is_dominant_anywhere_in_band() {
        for f in [6.0, 25.0, 54.0] {
            let (t, y) = signal(1000.0, 1.0, &[(0.3, f, -0.2, 0.0)]);
            let est = prony_fit(&t, &y, (0.0, 1.0), 8).unwrap();
            assert!(rel(dominant_mode(&est, SSO_BAND).unwrap().f_hz, f) < 1e-6);
        }
    }

    #[test]
    fn noisy_ringdown() {
        let s1 = sigma_for(40.0, 0.01);
        let (t, mut y) = signal(2000.0, 1.0, &[(1.0, 40.0, s1, 0.0)]);
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        let noise = Normal::new(0.0, rms * 1e-3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for v in &mut y {
            *v += noise.sample(&mut rng);
        }
        let est = prony_fit(&t, &y, (0.0, 1.0), 8).unwrap();
        let d = dominant_mode(&est, SSO_BAND).unwrap();
        assert!((d.f_hz - 40.0).abs() <= 0.05, "{d:?}");
        assert!((100.0 * (d.zeta - 0.01)).abs() <= 0.1, "{d:?}");
    }

    #[test]
    fn errors() {
        let (t, y) = signal(1000.0, 0.01, &[(1.0, 40.0, 0.0, 0.0)]);
        assert!(matches!(prony_fit(&t, &y, (0.0, 0.01), 8), Err(ModalIdError::WindowTooShort { .. })));
        assert_eq!(prony_fit(&t, &y, (0.0, 0.01), 0), Err(ModalIdError::BadOrder));
        assert!(matches!(prony_fit(&t, &y, (0.0, 5.0), 2), Err(ModalIdError::BadWindow(..))));
        let mut t2 = t.clone();
        t2[3] += 1e-4;
        assert_eq!(prony_fit(&t2, &y, (0.0, 0.01), 2), Err(ModalIdError::NonUniform));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exact_recovery(f1 in 5.0f64..50.0, df in 3.0f64..30.0, s1 in -3.0f64..1.0, s2 in -3.0f64..1.0, a2 in 0.2f64..2.0) {
            let f2 = f1 + df;
            let (t, y) = signal(1000.0, 1.0, &[(1.0, f1, s1, 0.4), (a2, f2, s2, -0.7)]);
            let est = prony_fit(&t, &y, (0.0, 1.0), 8).unwrap();
            for (f, s) in [(f1, s1), (f2, s2)] {
                let m = est.modes.iter().find(|m| (m.f_hz - f).abs() < 0.5).unwrap();
                prop_assert!(rel(m.f_hz, f) <= 1e-6);
                prop_assert!((m.sigma - s).abs() <= 1e-6 * s.abs().max(1.0));
            }
        }

        #[test]
        fn scale_and_shift_invariance(scale in 0.01f64..100.0, shift in 0usize..200) {
            let (t, y) = signal(1000.0, 1.5, &[(1.0, 40.0, -0.5, 0.0), (0.5, 12.0, -2.0, 1.0)]);
            let base = prony_fit(&t, &y, (0.0, 1.0), 8).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let t0 = shift as f64 * 1e-3;
            let moved = prony_fit(&t, &ys, (t0, t0 + 1.0), 8).unwrap();
            let a = dominant_mode(&base, SSO_BAND).unwrap();
            let b = dominant_mode(&moved, SSO_BAND).unwrap();
            prop_assert!(rel(b.f_hz, a.f_hz) < 1e-6);
            prop_assert!((b.zeta - a.zeta).abs() < 1e-8);
        }
    }
}
