//! Newton-Raphson power flow in polar coordinates on a dense Jacobian.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::grid::Grid;
use super::spec::{MachineKind, SystemSpec};
use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Serialize)]
pub struct BusResult {
    pub label: String,
    pub v_pu: f64,
    pub theta_rad: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchFlow {
    pub label: String,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MachineDispatch {
    pub id: String,
    /// Node where the machine injects in the power-flow grid.
    pub node: usize,
    /// Injected complex power, pu on the system base.
    pub p: f64,
    pub q: f64,
}

/// Converged power-flow state on the expanded grid.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub grid: Grid,
    /// Complex node voltages in the system frame.
    pub voltages: Vec<Complex64>,
    pub machines: Vec<MachineDispatch>,
    pub mismatch: f64,
    pub iterations: usize,
}

/// JSON power-flow report.
#[derive(Debug, Clone, Serialize)]
pub struct PowerFlowReport {
    pub buses: Vec<BusResult>,
    pub branches: Vec<BranchFlow>,
    pub machines: Vec<MachineDispatch>,
    pub tie_flow_pu: f64,
    pub mismatch: f64,
    pub iterations: usize,
}

/// Solves the power flow for `spec`, flat start, full Jacobian each iteration.
pub fn run_power_flow(spec: &SystemSpec) -> Result<PowerFlowSolution, NetError> {
    let grid = Grid::for_power_flow(spec);
    let n = grid.nodes.len();
    let s_base = spec.defaults.s_base_mva;

    let mut kind = vec![NodeKind::Pq; n];
    let mut s_spec = vec![Complex64::new(0.0, 0.0); n];
    let mut v_set = vec![1.0; n];
    let mut machine_nodes = Vec::with_capacity(spec.machines.len());
    let reference = spec.reference_machine().map(|m| m.id.clone());

    for l in &spec.loads {
        let k = grid.node_of_bus(l.bus).expect("validated");
        s_spec[k] -= Complex64::new(l.p_mw, l.q_mvar) / s_base;
    }
    for m in &spec.machines {
        let k = match m.kind {
            MachineKind::Sg => grid.node_of_bus(m.bus).expect("validated"),
            MachineKind::Gfc => grid.node_by_label(&format!("{}.vc", m.id)).expect("gfc node"),
        };
        kind[k] = if reference.as_deref() == Some(m.id.as_str()) {
            NodeKind::Slack
        } else {
            NodeKind::Pv
        };
        s_spec[k] += Complex64::new(m.p_mw / s_base, 0.0);
        v_set[k] = m.v_pu;
        machine_nodes.push((m.id.clone(), k));
    }

    let y = grid.y_bus();
    let pvpq: Vec<usize> = (0..n).filter(|&k| kind[k] != NodeKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| kind[k] == NodeKind::Pq).collect();
    let mut vm: Vec<f64> = (0..n).map(|k| if kind[k] == NodeKind::Pq { 1.0 } else { v_set[k] }).collect();
    let mut va = vec![0.0; n];

    let voltages = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
    };
    let mismatch = |v: &[Complex64]| -> Vec<Complex64> {
        let vv = DVector::from_column_slice(v);
        let i = &y * &vv;
        (0..n).map(|k| v[k] * i[k].conj() - s_spec[k]).collect()
    };
    let f_vec = |mis: &[Complex64]| -> DVector<f64> {
        DVector::from_iterator(
            pvpq.len() + pq.len(),
            pvpq.iter().map(|&k| mis[k].re).chain(pq.iter().map(|&k| mis[k].im)),
        )
    };

    let tol = spec.defaults.pf_tolerance;
    let max_iter = spec.defaults.pf_max_iter;
    let mut v = voltages(&vm, &va);
    let mut f = f_vec(&mismatch(&v));
    let mut norm = f.amax();
    let mut iterations = 0;
    // Newton converges quadratically, so a few extra steps past the
    // tolerance drive the residual to roundoff for the dynamic initialization.
    let mut polish = 0;
    while norm > tol || polish < 3 {
        if norm <= tol {
            polish += 1;
        } else {
            if iterations >= max_iter {
                return Err(NetError::NotConverged {
                    iterations,
                    mismatch: norm,
                });
            }
            iterations += 1;
        }
        let jac = jacobian(&y, &v, &pvpq, &pq);
        let dx = jac.lu().solve(&(-&f)).ok_or(NetError::SingularJacobian)?;
        for (j, &k) in pvpq.iter().enumerate() {
            va[k] += dx[j];
        }
        for (j, &k) in pq.iter().enumerate() {
            vm[k] += dx[pvpq.len() + j];
        }
        v = voltages(&vm, &va);
        let new_f = f_vec(&mismatch(&v));
        let new_norm = new_f.amax();
        if norm <= tol && new_norm >= norm {
            // roundoff floor
            norm = new_norm;
            break;
        }
        f = new_f;
        norm = new_norm;
        if !norm.is_finite() {
            return Err(NetError::NotConverged {
                iterations,
                mismatch: norm,
            });
        }
    }

    let machines = machine_nodes
        .into_iter()
        .map(|(id, k)| {
            // generator injection = specified + residual (the slack absorbs the balance)
            let s_load: Complex64 = spec
                .loads
                .iter()
                .filter(|l| grid.node_of_bus(l.bus) == Some(k))
                .map(|l| Complex64::new(l.p_mw, l.q_mvar) / s_base)
                .sum();
            let s_inj = v[k] * (y.row(k) * DVector::from_column_slice(&v))[0].conj();
            let s_gen = s_inj + s_load;
            MachineDispatch {
                id,
                node: k,
                p: s_gen.re,
                q: s_gen.im,
            }
        })
        .collect();

    Ok(PowerFlowSolution {
        grid,
        voltages: v,
        machines,
        mismatch: norm,
        iterations,
    })
}

fn jacobian(y: &DMatrix<Complex64>, v: &[Complex64], pvpq: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let vv = DVector::from_column_slice(v);
    let ibus = y * &vv;
    let vnorm: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
    let j = Complex64::new(0.0, 1.0);
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
    let ds_dva = |r: usize, c: usize| -> Complex64 {
        let mut t = -y[(r, c)] * v[c];
        if r == c {
            t += ibus[r];
        }
        j * v[r] * t.conj()
    };
    let ds_dvm = |r: usize, c: usize| -> Complex64 {
        let mut t = v[r] * (y[(r, c)] * vnorm[c]).conj();
        if r == c {
            t += ibus[r].conj() * vnorm[r];
        }
        t
    };
    let (na, nm) = (pvpq.len(), pq.len());
    let mut jac = DMatrix::zeros(na + nm, na + nm);
    for (ri, &r) in pvpq.iter().enumerate() {
        for (ci, &c) in pvpq.iter().enumerate() {
            jac[(ri, ci)] = ds_dva(r, c).re;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(ri, na + ci)] = ds_dvm(r, c).re;
        }
    }
    for (ri, &r) in pq.iter().enumerate() {
        for (ci, &c) in pvpq.iter().enumerate() {
            jac[(na + ri, ci)] = ds_dva(r, c).im;
        }
        for (ci, &c) in pq.iter().enumerate() {
            jac[(na + ri, na + ci)] = ds_dvm(r, c).im;
        }
    }
    jac
}

impl PowerFlowSolution {
    pub fn branch_flow(&self, k: usize) -> BranchFlow {
        let br = &self.grid.branches[k];
        let i = self.grid.branch_current(k, &self.voltages);
        let vf = self.voltages[br.from];
        let vt = self.voltages[br.to];
        let s_from = vf / br.ratio * i.conj();
        let s_to = -vt * i.conj();
        BranchFlow {
            label: br.label.clone(),
            p_from: s_from.re,
            q_from: s_from.im,
            p_to: s_to.re,
            q_to: s_to.im,
        }
    }

    /// Active power carried by the tie lines, measured at the sending end of
    /// each tie circuit (series element only).
    pub fn tie_flow(&self) -> f64 {
        (0..self.grid.branches.len())
            .filter(|&k| self.grid.branches[k].tie_head)
            .map(|k| self.branch_flow(k).p_from)
            .sum()
    }

    pub fn machine(&self, id: &str) -> Option<&MachineDispatch> {
        self.machines.iter().find(|m| m.id == id)
    }

    /// Total network losses (series resistances).
    pub fn losses(&self) -> f64 {
        (0..self.grid.branches.len())
            .map(|k| {
                let f = self.branch_flow(k);
                f.p_from + f.p_to
            })
            .sum()
    }

    pub fn report(&self) -> PowerFlowReport {
        PowerFlowReport {
            buses: self
                .grid
                .nodes
                .iter()
                .zip(&self.voltages)
                .map(|(n, v)| BusResult {
                    label: n.label.clone(),
                    v_pu: v.norm(),
                    theta_rad: v.arg(),
                })
                .collect(),
            branches: (0..self.grid.branches.len()).map(|k| self.branch_flow(k)).collect(),
            machines: self.machines.clone(),
            tie_flow_pu: self.tie_flow(),
            mismatch: self.mismatch,
            iterations: self.iterations,
        }
    }
}
