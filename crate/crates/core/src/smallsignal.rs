//! Linearization, eigenanalysis, participation factors, mode shapes,
//! MIMO frequency response, delay sweeps and oscillation grouping.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{AssembledModel, OperatingPoint, StateMeta};
use crate::netmodel::spec::MachineKind;
use crate::netmodel::Framework;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmallSignalError {
    #[error("operating point is not an equilibrium (residual {0:.3e})")]
    NotEquilibrium(f64),
    #[error("non-finite Jacobian entry in column {0}")]
    NonFiniteJacobian(String),
    #[error("delay must be >= 0, got {0}")]
    NegativeDelay(f64),
    #[error("Padé order must be 1, 2 or 3, got {0}")]
    PadeOrder(usize),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("state matrix is defective; eigenvectors unavailable")]
    Defective,
    #[error("no observable state for machine {0}")]
    MissingObservable(String),
    #[error("frequency grid must be positive and ascending")]
    BadGrid,
}

/// State-space model `dx = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub states: Vec<StateMeta>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub framework: Framework,
    pub tau_p: f64,
    pub pade_order: usize,
    /// One designated state per machine for mode shapes.
    pub observables: Vec<Observable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observable {
    pub machine: String,
    pub area: u32,
    pub state: usize,
}

impl LinearModel {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Bare model with generated labels.
    pub fn from_matrices(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Self {
        let label = |p: &str, k: usize| format!("{p}{k}");
        LinearModel {
            states: (0..a.nrows())
                .map(|k| StateMeta {
                    name: label("x", k),
                    owner: String::new(),
                    area: None,
                })
                .collect(),
            inputs: (0..b.ncols()).map(|k| label("u", k)).collect(),
            outputs: (0..c.nrows()).map(|k| label("y", k)).collect(),
            a,
            b,
            c,
            d,
            framework: Framework::Spc,
            tau_p: 0.0,
            pade_order: 0,
            observables: Vec::new(),
        }
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6_f64.max(1e-6 * x.abs())
}

/// Central-difference Jacobians `(∂f/∂x, ∂f/∂u)` of `f(x, u, dx)`.
pub fn jacobians(
    n: usize,
    f: impl Fn(&[f64], &[f64], &mut [f64]),
    x0: &[f64],
    u0: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = u0.len();
    let mut a = DMatrix::zeros(n, x0.len());
    let mut b = DMatrix::zeros(n, m);
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    let mut x = x0.to_vec();
    let mut u = u0.to_vec();
    for j in 0..x0.len() {
        let h = fd_step(x0[j]);
        x[j] = x0[j] + h;
        f(&x, &u, &mut fp);
        x[j] = x0[j] - h;
        f(&x, &u, &mut fm);
        x[j] = x0[j];
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    for j in 0..m {
        let h = fd_step(u0[j]);
        u[j] = u0[j] + h;
        f(&x, &u, &mut fp);
        u[j] = u0[j] - h;
        f(&x, &u, &mut fm);
        u[j] = u0[j];
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    (a, b)
}

/// State-space block approximating `e^{-sτ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeBlock {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: f64,
}

impl PadeBlock {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn response(&self, s: Complex64) -> Complex64 {
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let e = if i == j { s } else { Complex64::new(0.0, 0.0) };
            e - self.a[(i, j)]
        });
        let rhs = DMatrix::from_fn(n, 1, |i, _| Complex64::new(self.b[(i, 0)], 0.0));
        let z = m.lu().solve(&rhs).expect("Padé resolvent");
        let y: Complex64 = (0..n).map(|i| self.c[(0, i)] * z[(i, 0)]).sum();
        y + self.d
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Diagonal Padé approximant of order `order` for a delay `tau` (s), in
/// controllable canonical form. `tau = 0` gives a static unit gain.
pub fn pade_delay(tau: f64, order: usize) -> Result<PadeBlock, SmallSignalError> {
    if !(tau >= 0.0) {
        return Err(SmallSignalError::NegativeDelay(tau));
    }
    if !(1..=3).contains(&order) {
        return Err(SmallSignalError::PadeOrder(order));
    }
    if tau == 0.0 {
        return Ok(PadeBlock {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: 1.0,
        });
    }
    let n = order;
    // e^{-s} ≈ Σ c_k (-s)^k / Σ c_k s^k
    let coef: Vec<f64> = (0..=n)
        .map(|k| factorial(2 * n - k) * factorial(n) / (factorial(2 * n) * factorial(k) * factorial(n - k)))
        .collect();
    let lead = coef[n];
    let den: Vec<f64> = coef.iter().map(|c| c / lead).collect();
    let num: Vec<f64> = coef
        .iter()
        .enumerate()
        .map(|(k, c)| if k % 2 == 0 { c / lead } else { -c / lead })
        .collect();
    let d = num[n];
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0 / tau;
    }
    for k in 0..n {
        a[(n - 1, k)] = -den[k] / tau;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0 / tau;
    let c = DMatrix::from_fn(1, n, |_, k| num[k] - d * den[k]);
    Ok(PadeBlock { a, b, c, d })
}

/// Linearizes an assembled model about `op`. Every delay tap becomes a
/// Padé block in series with its source state.
pub fn linearize(model: &AssembledModel, op: &OperatingPoint, pade_order: usize) -> Result<LinearModel, SmallSignalError> {
    let res = model.equilibrium_residual(op);
    if !(res <= 1e-6) {
        return Err(SmallSignalError::NotEquilibrium(res));
    }
    let n = model.n_states();
    let m = model.n_inputs();
    let d0 = op.delayed(model);

    // stack (u, delayed) as one input vector
    let mut ud0 = op.u0.clone();
    ud0.extend_from_slice(&d0);
    let f = |x: &[f64], ud: &[f64], dx: &mut [f64]| model.eval(x, &ud[..m], &ud[m..], dx);
    let (ax, bud) = jacobians(n, f, &op.x0, &ud0);
    if let Some(j) = (0..n).find(|&j| ax.column(j).iter().any(|v| !v.is_finite())) {
        return Err(SmallSignalError::NonFiniteJacobian(model.states[j].name.clone()));
    }
    if bud.iter().any(|v| !v.is_finite()) {
        return Err(SmallSignalError::NonFiniteJacobian("inputs".into()));
    }

    let blocks = model
        .taps
        .iter()
        .map(|t| pade_delay(t.delay, pade_order))
        .collect::<Result<Vec<_>, _>>()?;
    let extra: usize = blocks.iter().map(|b| b.order()).sum();
    let nn = n + extra;
    let mut a = DMatrix::zeros(nn, nn);
    a.view_mut((0, 0), (n, n)).copy_from(&ax);
    let mut states = model.states.clone();
    let mut off = n;
    for (k, (tap, blk)) in model.taps.iter().zip(&blocks).enumerate() {
        let jd = bud.column(m + k);
        let src = tap.source;
        let q = blk.order();
        // delayed = C z + D x_src
        for i in 0..n {
            a[(i, src)] += jd[i] * blk.d;
            for r in 0..q {
                a[(i, off + r)] += jd[i] * blk.c[(0, r)];
            }
        }
        for r in 0..q {
            for s in 0..q {
                a[(off + r, off + s)] = blk.a[(r, s)];
            }
            a[(off + r, src)] += blk.b[(r, 0)];
            let area = model.states[src].area;
            states.push(StateMeta {
                name: format!("{}.pade{}", tap.machine, r + 1),
                owner: tap.machine.clone(),
                area,
            });
        }
        off += q;
    }
    let mut b = DMatrix::zeros(nn, m);
    b.view_mut((0, 0), (n, m)).copy_from(&bud.columns(0, m));
    let p = model.n_outputs();
    let mut c = DMatrix::zeros(p, nn);
    for (r, o) in model.outputs.iter().enumerate() {
        c[(r, o.state)] = 1.0;
    }
    let tau_p = model.taps.first().map(|t| t.delay).unwrap_or(0.0);
    Ok(LinearModel {
        a,
        b,
        c,
        d: DMatrix::zeros(p, m),
        states,
        inputs: model.inputs.clone(),
        outputs: model.outputs.iter().map(|o| o.name.clone()).collect(),
        framework: model.framework,
        tau_p,
        pade_order,
        observables: default_observables(model),
    })
}

/// GFC: transformer current d component; SG: rotor speed.
pub fn default_observables(model: &AssembledModel) -> Vec<Observable> {
    model
        .machines
        .iter()
        .filter_map(|(id, kind, area)| {
            let name = match kind {
                MachineKind::Gfc => format!("{id}.itd"),
                MachineKind::Sg => format!("{id}.omega"),
            };
            model.state_index(&name).map(|state| Observable {
                machine: id.clone(),
                area: *area,
                state,
            })
        })
        .collect()
}

/// One eigenvalue with its derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mode {
    /// Column in the full eigendecomposition.
    pub index: usize,
    #[serde(skip)]
    pub eigenvalue: Complex64,
    pub sigma: f64,
    pub omega: f64,
    pub f_hz: f64,
    pub zeta: f64,
}

impl Mode {
    pub fn new(index: usize, eigenvalue: Complex64) -> Self {
        let (sigma, omega) = (eigenvalue.re, eigenvalue.im);
        let mag = eigenvalue.norm();
        let zeta = if mag > 0.0 { -sigma / mag } else { 1.0 };
        Mode {
            index,
            eigenvalue,
            sigma,
            omega,
            f_hz: omega.abs() / (2.0 * PI),
            zeta,
        }
    }

    pub fn is_oscillatory(&self) -> bool {
        self.omega > 0.0
    }

    pub fn zeta_pct(&self) -> f64 {
        100.0 * self.zeta
    }
}

/// Full eigendecomposition of a linear model.
#[derive(Debug, Clone)]
pub struct ModalAnalysis {
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as columns; `None` if the matrix is defective.
    pub right: Option<DMatrix<Complex64>>,
    /// Left eigenvectors as rows, `W = V⁻¹`.
    pub left: Option<DMatrix<Complex64>>,
    /// Deduplicated modes (ω ≥ 0 member of each pair), sorted by frequency.
    pub modes: Vec<Mode>,
}

impl ModalAnalysis {
    pub fn defective(&self) -> bool {
        self.right.is_none()
    }

    /// Complex participation `p_ki = v_ki w_ik` of every state in mode `i`.
    pub fn participation_column(&self, i: usize) -> Option<Vec<Complex64>> {
        let (v, w) = (self.right.as_ref()?, self.left.as_ref()?);
        Some((0..v.nrows()).map(|k| v[(k, i)] * w[(i, k)]).collect())
    }

    /// `|p_ki|` normalized so each mode's largest entry is 1.
    pub fn normalized_participation(&self, i: usize) -> Option<Vec<f64>> {
        let p: Vec<f64> = self.participation_column(i)?.iter().map(|z| z.norm()).collect();
        let max = p.iter().cloned().fold(0.0, f64::max);
        Some(p.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect())
    }

    pub fn right_vector(&self, i: usize) -> Option<Vec<Complex64>> {
        let v = self.right.as_ref()?;
        Some(v.column(i).iter().cloned().collect())
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues, eigenvectors and deduplicated modes of `A`.
pub fn eig_modes(lin: &LinearModel) -> Result<ModalAnalysis, SmallSignalError> {
    eig_matrix(&lin.a)
}

pub fn eig_matrix(a: &DMatrix<f64>) -> Result<ModalAnalysis, SmallSignalError> {
    let n = a.nrows();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SmallSignalError::Eigen("non-finite entries".into()));
    }
    if n == 0 {
        return Ok(ModalAnalysis {
            eigenvalues: vec![],
            right: Some(DMatrix::zeros(0, 0)),
            left: Some(DMatrix::zeros(0, 0)),
            modes: vec![],
        });
    }
    let evd = to_faer(a).eigen().map_err(|e| SmallSignalError::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let eigenvalues: Vec<Complex64> = (0..n).map(|i| Complex64::new(s[i].re, s[i].im)).collect();
    let v = DMatrix::from_fn(n, n, |i, j| Complex64::new(u[(i, j)].re, u[(i, j)].im));
    let (right, left) = match invert_eigenvectors(&v) {
        Some(w) => (Some(v), Some(w)),
        None => (None, None),
    };
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let mut modes: Vec<Mode> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| l.im > 1e-12 * scale || l.im.abs() <= 1e-12 * scale)
        .map(|(i, l)| {
            let lam = if l.im.abs() <= 1e-12 * scale { Complex64::new(l.re, 0.0) } else { *l };
            Mode::new(i, lam)
        })
        .collect();
    modes.sort_by(|a, b| a.f_hz.total_cmp(&b.f_hz).then(a.sigma.total_cmp(&b.sigma)));
    Ok(ModalAnalysis {
        eigenvalues,
        right,
        left,
        modes,
    })
}

fn invert_eigenvectors(v: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let w = v.clone().lu().try_inverse()?;
    // a near-defective matrix has nearly parallel eigenvectors and a huge inverse
    let big = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !big.is_finite() || big > 1e12 {
        return None;
    }
    Some(w)
}

/// Normalized participation magnitudes, one column per eigenvalue of the
/// full spectrum (max of each column is 1).
pub fn participation(lin: &LinearModel) -> Result<DMatrix<f64>, SmallSignalError> {
    let ma = eig_modes(lin)?;
    participation_matrix(&ma)
}

pub fn participation_matrix(ma: &ModalAnalysis) -> Result<DMatrix<f64>, SmallSignalError> {
    let n = ma.eigenvalues.len();
    if ma.defective() {
        return Err(SmallSignalError::Defective);
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let col = ma.normalized_participation(i).ok_or(SmallSignalError::Defective)?;
        for k in 0..n {
            p[(k, i)] = col[k];
        }
    }
    Ok(p)
}

/// The `count` states with the highest normalized participation in mode `i`.
pub fn dominant_states(lin: &LinearModel, ma: &ModalAnalysis, i: usize, count: usize) -> Vec<(String, f64)> {
    let Some(p) = ma.normalized_participation(i) else {
        return vec![];
    };
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx.into_iter().take(count).map(|k| (lin.states[k].name.clone(), p[k])).collect()
}

/// One machine's entry in a mode shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeComponent {
    pub machine: String,
    pub area: u32,
    #[serde(skip)]
    pub value: Complex64,
}

impl ShapeComponent {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn angle_deg(&self) -> f64 {
        self.value.arg().to_degrees()
    }
}

/// Right-eigenvector entries of each machine's observable state, scaled so
/// the largest is `1∠0`.
pub fn mode_shape(lin: &LinearModel, ma: &ModalAnalysis, mode: &Mode) -> Result<Vec<ShapeComponent>, SmallSignalError> {
    let v = ma.right_vector(mode.index).ok_or(SmallSignalError::Defective)?;
    let raw: Vec<ShapeComponent> = lin
        .observables
        .iter()
        .map(|o| ShapeComponent {
            machine: o.machine.clone(),
            area: o.area,
            value: v[o.state],
        })
        .collect();
    Ok(normalize_shape(raw))
}

pub fn normalize_shape(mut shape: Vec<ShapeComponent>) -> Vec<ShapeComponent> {
    let Some(big) = shape.iter().map(|c| c.value).max_by(|a, b| a.norm().total_cmp(&b.norm())) else {
        return shape;
    };
    if big.norm() > 0.0 {
        for c in &mut shape {
            c.value /= big;
        }
    }
    shape
}

/// Largest singular value of `G(j2πf)` over `f_grid`. An undamped pole on
/// the grid yields `+∞`.
pub fn sigma_max_response(lin: &LinearModel, f_grid: &[f64]) -> Result<Vec<(f64, f64)>, SmallSignalError> {
    if f_grid.iter().any(|f| !(*f > 0.0)) || f_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SmallSignalError::BadGrid);
    }
    let n = lin.n_states();
    let cx = |v: f64| Complex64::new(v, 0.0);
    let d = lin.d.map(cx);
    if n == 0 {
        let s = sigma_max(&d);
        return Ok(f_grid.iter().map(|&f| (f, s)).collect());
    }
    // A = Q H Qᵀ: each frequency needs only a Hessenberg solve
    let hess = lin.a.clone().hessenberg();
    let q = hess.q();
    let h = hess.h();
    let qb = (q.transpose() * &lin.b).map(cx);
    let cq = (&lin.c * &q).map(cx);
    Ok(f_grid
        .iter()
        .map(|&f| {
            let s = Complex64::new(0.0, 2.0 * PI * f);
            match hessenberg_solve(&h, s, &qb) {
                Some(y) => {
                    let g = &cq * y + &d;
                    (f, sigma_max(&g))
                }
                None => (f, f64::INFINITY),
            }
        })
        .collect())
}

fn sigma_max(g: &DMatrix<Complex64>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    g.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Solves `(sI - H) Y = R` for upper-Hessenberg `H` by Gaussian elimination
/// with adjacent-row pivoting.
fn hessenberg_solve(h: &DMatrix<f64>, s: Complex64, r: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = h.nrows();
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
        if i > j + 1 {
            Complex64::new(0.0, 0.0)
        } else {
            diag - h[(i, j)]
        }
    });
    let mut y = r.clone();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for k in 0..n {
        if k + 1 < n && m[(k + 1, k)].norm() > m[(k, k)].norm() {
            m.swap_rows(k, k + 1);
            y.swap_rows(k, k + 1);
        }
        let piv = m[(k, k)];
        if piv.norm() <= 1e-14 * scale {
            return None;
        }
        if k + 1 < n {
            let l = m[(k + 1, k)] / piv;
            if l != Complex64::new(0.0, 0.0) {
                for j in k..n {
                    let t = m[(k, j)];
                    m[(k + 1, j)] -= l * t;
                }
                for j in 0..y.ncols() {
                    let t = y[(k, j)];
                    y[(k + 1, j)] -= l * t;
                }
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..y.ncols() {
            let mut acc = y[(k, j)];
            for c in k + 1..n {
                acc -= m[(k, c)] * y[(c, j)];
            }
            y[(k, j)] = acc / m[(k, k)];
        }
    }
    Some(y)
}

pub fn to_db(v: f64) -> f64 {
    20.0 * v.log10()
}

/// A local maximum of a sampled curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub x: f64,
    pub value: f64,
    /// Height above the higher of the two flanking saddles.
    pub prominence: f64,
}

/// Topographic prominence of every interior local maximum of `ys`.
pub fn peaks(xs: &[f64], ys: &[f64]) -> Vec<Peak> {
    let n = ys.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let mut left = ys[i];
        let mut j = i;
        while j > 0 {
            j -= 1;
            if ys[j] > ys[i] {
                break;
            }
            left = left.min(ys[j]);
        }
        let mut right = ys[i];
        let mut j = i;
        while j + 1 < n {
            j += 1;
            if ys[j] > ys[i] {
                break;
            }
            right = right.min(ys[j]);
        }
        out.push(Peak {
            index: i,
            x: xs[i],
            value: ys[i],
            prominence: ys[i] - left.max(right),
        });
    }
    out
}

/// Which modes count as subsynchronous oscillations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsoBand {
    pub f_min: f64,
    pub f_max: f64,
    /// Modes damped above this ratio are not reported as SSOs.
    pub zeta_max: f64,
}

impl Default for SsoBand {
    fn default() -> Self {
        SsoBand {
            f_min: 5.0,
            f_max: 55.0,
            zeta_max: 0.2,
        }
    }
}

impl SsoBand {
    pub fn contains(&self, m: &Mode) -> bool {
        m.is_oscillatory() && m.f_hz >= self.f_min && m.f_hz <= self.f_max && m.zeta < self.zeta_max
    }

    pub fn select<'a>(&self, modes: &'a [Mode]) -> Vec<&'a Mode> {
        modes.iter().filter(|m| self.contains(m)).collect()
    }
}

/// One tracked mode at one delay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusPoint {
    pub tau: f64,
    pub mode_id: usize,
    pub f_hz: f64,
    pub zeta: f64,
    pub sigma: f64,
    pub omega: f64,
    /// Frequency jumped more than 5 Hz from the previous delay.
    pub discontinuity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySweep {
    pub taus: Vec<f64>,
    pub points: Vec<LocusPoint>,
    /// Every mode at every delay.
    #[serde(skip)]
    pub spectra: Vec<Vec<Mode>>,
}

impl DelaySweep {
    pub fn track(&self, mode_id: usize) -> Vec<&LocusPoint> {
        self.points.iter().filter(|p| p.mode_id == mode_id).collect()
    }

    pub fn mode_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.points.iter().map(|p| p.mode_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn has_discontinuity(&self) -> bool {
        self.points.iter().any(|p| p.discontinuity)
    }
}

/// Weighted distance in (f, ζ): 1 Hz counts as much as 1 % damping.
fn locus_distance(a: &Mode, f: f64, zeta: f64) -> f64 {
    let df = a.f_hz - f;
    let dz = 100.0 * (a.zeta - zeta);
    (df * df + dz * dz).sqrt()
}

/// Modes of the model with every droop delay set to `tau`.
pub fn modes_at(model: &AssembledModel, op: &OperatingPoint, tau: f64, pade_order: usize) -> Result<Vec<Mode>, SmallSignalError> {
    let mut m = model.clone();
    m.set_tau_p(tau);
    let lin = linearize(&m, op, pade_order)?;
    Ok(eig_matrix(&lin.a)?.modes)
}

/// Largest delay step between eigen-solves while tracking.
pub const TRACK_STEP: f64 = 2e-4;

/// Tracks every SSO-band mode found at the first delay across `taus` by
/// nearest-neighbour continuation, solving at intermediate delays no more
/// than [`TRACK_STEP`] apart; only the requested delays are reported.
pub fn delay_sweep(
    model: &AssembledModel,
    op: &OperatingPoint,
    taus: &[f64],
    pade_order: usize,
    band: SsoBand,
    jobs: usize,
) -> Result<DelaySweep, SmallSignalError> {
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0)) {
        return Err(SmallSignalError::NegativeDelay(*t));
    }
    let mut grid = Vec::new();
    let mut reported = Vec::new();
    for (k, &t) in taus.iter().enumerate() {
        if k > 0 {
            let prev = taus[k - 1];
            let n = ((t - prev).abs() / TRACK_STEP).ceil().max(1.0) as usize;
            grid.extend((1..n).map(|i| prev + (t - prev) * i as f64 / n as f64));
        }
        reported.push(grid.len());
        grid.push(t);
    }
    let all = parallel_map(&grid, jobs.max(1), |&tau| modes_at(model, op, tau, pade_order))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut points = Vec::new();
    if let Some(first) = all.first() {
        let mut heads: Vec<(f64, f64)> = band.select(first).iter().map(|m| (m.f_hz, m.zeta)).collect();
        let mut jumped = vec![false; heads.len()];
        let mut next_report = 0;
        for (g, modes) in all.iter().enumerate() {
            let osc: Vec<&Mode> = modes.iter().filter(|m| m.is_oscillatory()).collect();
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (h, &(f, z)) in heads.iter().enumerate() {
                for (j, m) in osc.iter().enumerate() {
                    pairs.push((locus_distance(m, f, z), h, j));
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut taken_h = vec![false; heads.len()];
            let mut taken_m = vec![false; osc.len()];
            let mut matched: Vec<Option<&Mode>> = vec![None; heads.len()];
            for (_, h, j) in pairs {
                if taken_h[h] || taken_m[j] {
                    continue;
                }
                taken_h[h] = true;
                taken_m[j] = true;
                matched[h] = Some(osc[j]);
            }
            for (h, m) in matched.iter().enumerate() {
                if let Some(m) = m {
                    jumped[h] |= g > 0 && (m.f_hz - heads[h].0).abs() > 5.0;
                    heads[h] = (m.f_hz, m.zeta);
                }
            }
            if reported.get(next_report) == Some(&g) {
                for (h, m) in matched.iter().enumerate() {
                    if let Some(m) = m {
                        points.push(LocusPoint {
                            tau: grid[g],
                            mode_id: h + 1,
                            f_hz: m.f_hz,
                            zeta: m.zeta,
                            sigma: m.sigma,
                            omega: m.omega,
                            discontinuity: jumped[h],
                        });
                    }
                    jumped[h] = false;
                }
                next_report += 1;
            }
        }
        points.sort_by_key(|p| p.mode_id);
    }
    let spectra = reported.iter().map(|&g| all[g].clone()).collect();
    Ok(DelaySweep {
        taus: taus.to_vec(),
        points,
        spectra,
    })
}

/// `points` frequencies spaced evenly in log between `f_min` and `f_max`.
pub fn log_grid(f_min: f64, f_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![f_min],
        _ => {
            let (a, b) = (f_min.ln(), f_max.ln());
            (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
        }
    }
}

/// [`sigma_max_response`] in dB, the grid split over `jobs` workers.
pub fn sigma_max_db(lin: &LinearModel, f_grid: &[f64], jobs: usize) -> Result<Vec<(f64, f64)>, SmallSignalError> {
    let jobs = jobs.max(1);
    let chunk = f_grid.len().div_ceil(jobs).max(1);
    let pieces: Vec<&[f64]> = f_grid.chunks(chunk).collect();
    let parts = parallel_map(&pieces, jobs, |g| sigma_max_response(lin, g));
    let mut out = Vec::with_capacity(f_grid.len());
    for p in parts {
        out.extend(p?.into_iter().map(|(f, s)| (f, to_db(s))));
    }
    Ok(out)
}

/// Order-preserving map over `items` on up to `jobs` scoped threads.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                scope.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingKind {
    IntraArea,
    InterArea,
    CrossArea,
    #[serde(rename = "local/other")]
    LocalOther,
}

impl GroupingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupingKind::IntraArea => "intra-area",
            GroupingKind::InterArea => "inter-area",
            GroupingKind::CrossArea => "cross-area",
            GroupingKind::LocalOther => "local/other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingLabel {
    pub kind: GroupingKind,
    pub group_a: Vec<String>,
    pub group_b: Vec<String>,
    /// (machine, relative magnitude, angle relative to the largest, degrees).
    pub components: Vec<(String, f64, f64)>,
}

pub const GROUPING_THRESHOLD: f64 = 0.2;

/// Splits the machines whose relative magnitude reaches `threshold` into
/// the group swinging with the largest component (within ±90°) and the
/// group swinging against it, then labels the split by area.
pub fn classify_grouping(shapes: &[ShapeComponent], threshold: f64) -> GroupingLabel {
    let big = shapes
        .iter()
        .map(|c| c.value)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(0.0, 0.0));
    let mut components = Vec::new();
    let (mut ga, mut gb) = (Vec::new(), Vec::new());
    let (mut areas_a, mut areas_b) = (Vec::new(), Vec::new());
    if big.norm() > 0.0 {
        for c in shapes {
            let rel = c.value / big;
            let mag = rel.norm();
            let ang = rel.arg().to_degrees();
            components.push((c.machine.clone(), mag, ang));
            if mag < threshold {
                continue;
            }
            // Re(rel) >= 0 is the ±90° half-plane around the reference
            if rel.re >= 0.0 {
                ga.push(c.machine.clone());
                areas_a.push(c.area);
            } else {
                gb.push(c.machine.clone());
                areas_b.push(c.area);
            }
        }
    }
    let kind = grouping_kind(&areas_a, &areas_b);
    GroupingLabel {
        kind,
        group_a: ga,
        group_b: gb,
        components,
    }
}

fn distinct(v: &[u32]) -> Vec<u32> {
    let mut d = v.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

fn grouping_kind(a: &[u32], b: &[u32]) -> GroupingKind {
    if a.len() + b.len() < 2 || a.is_empty() || b.is_empty() {
        return GroupingKind::LocalOther;
    }
    let (da, db) = (distinct(a), distinct(b));
    let all = distinct(&[a, b].concat());
    if all.len() == 1 {
        GroupingKind::IntraArea
    } else if da.len() == 1 && db.len() == 1 && da != db {
        GroupingKind::InterArea
    } else if da.len() > 1 || db.len() > 1 {
        GroupingKind::CrossArea
    } else {
        GroupingKind::LocalOther
    }
}
