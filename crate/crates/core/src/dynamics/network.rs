//! Network models in the synchronously rotating D-Q frame.
//!
//! SPC: every series element is an R-L current state pair, every node a
//! shunt-capacitor voltage state pair, dynamic loads are series R-L
//! branches to ground. QPC: node voltages solve `V = Y⁻¹ I` at each
//! evaluation, with static loads and SG Norton admittances inside `Y`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::DynError;
use crate::netmodel::grid::Grid;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Constant-impedance load attached to a network node.
#[derive(Debug, Clone)]
pub struct LoadBranch {
    pub label: String,
    pub node: usize,
    pub r: f64,
    pub x: f64,
}

impl LoadBranch {
    /// Impedance drawing `s` (pu) at voltage `v`.
    pub fn from_power(label: String, node: usize, s: Complex64, v: Complex64) -> Self {
        let z = v.norm_sqr() / s.conj();
        LoadBranch {
            label,
            node,
            r: z.re,
            x: z.im,
        }
    }

    pub fn admittance(&self) -> Complex64 {
        1.0 / Complex64::new(self.r, self.x)
    }
}

#[derive(Debug, Clone)]
pub struct SpcNetwork {
    pub grid: Grid,
    pub omega_b: f64,
    /// Speed of the D-Q frame in pu; 1 for the synchronous frame, 0 for a
    /// stationary frame.
    pub frame_speed: f64,
    /// First state of the branch currents; node voltages follow, then load currents.
    pub offset: usize,
    pub dynamic_loads: Vec<LoadBranch>,
    /// Loads kept as shunt admittances (explicitly static under SPC).
    pub static_loads: Vec<LoadBranch>,
}

impl SpcNetwork {
    pub fn new(grid: Grid, omega_b: f64, offset: usize, dynamic_loads: Vec<LoadBranch>, static_loads: Vec<LoadBranch>) -> Result<Self, DynError> {
        if let Some(l) = dynamic_loads.iter().find(|l| !(l.x > 0.0) || !(l.r >= 0.0)) {
            return Err(DynError::CapacitiveDynamicLoad(l.label.clone()));
        }
        Ok(SpcNetwork {
            grid,
            omega_b,
            frame_speed: 1.0,
            offset,
            dynamic_loads,
            static_loads,
        })
    }

    pub fn n_states(&self) -> usize {
        2 * (self.grid.branches.len() + self.grid.nodes.len() + self.dynamic_loads.len())
    }

    pub fn branch_state(&self, k: usize) -> usize {
        self.offset + 2 * k
    }

    pub fn node_state(&self, n: usize) -> usize {
        self.offset + 2 * (self.grid.branches.len() + n)
    }

    pub fn load_state(&self, k: usize) -> usize {
        self.offset + 2 * (self.grid.branches.len() + self.grid.nodes.len() + k)
    }

    #[inline]
    fn get(x: &[f64], k: usize) -> Complex64 {
        Complex64::new(x[k], x[k + 1])
    }

    pub fn voltage(&self, x: &[f64], node: usize) -> Complex64 {
        Self::get(x, self.node_state(node))
    }

    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.grid.nodes.len()).map(|n| self.voltage(x, n)).collect()
    }

    /// `injections` are per-node machine currents (system base).
    pub fn residual(&self, x: &[f64], injections: &[Complex64], dx: &mut [f64]) {
        let wb = self.omega_b;
        let jw = J * self.frame_speed;
        let mut net = injections.to_vec();
        for (k, br) in self.grid.branches.iter().enumerate() {
            let s = self.branch_state(k);
            let i = Self::get(x, s);
            let vf = self.voltage(x, br.from);
            let vt = self.voltage(x, br.to);
            let di = (vf / br.ratio - vt - br.r * i - jw * br.x * i) * (wb / br.x);
            dx[s] = di.re;
            dx[s + 1] = di.im;
            net[br.from] -= i / br.ratio;
            net[br.to] += i;
        }
        for (k, ld) in self.dynamic_loads.iter().enumerate() {
            let s = self.load_state(k);
            let i = Self::get(x, s);
            let v = self.voltage(x, ld.node);
            let di = (v - ld.r * i - jw * ld.x * i) * (wb / ld.x);
            dx[s] = di.re;
            dx[s + 1] = di.im;
            net[ld.node] -= i;
        }
        for ld in &self.static_loads {
            net[ld.node] -= ld.admittance() * self.voltage(x, ld.node);
        }
        for (n, node) in self.grid.nodes.iter().enumerate() {
            let s = self.node_state(n);
            let v = Self::get(x, s);
            let dv = (net[n] - jw * node.shunt_b * v) * (wb / node.shunt_b);
            dx[s] = dv.re;
            dx[s + 1] = dv.im;
        }
    }

    /// Equilibrium states from node voltages at nominal frequency.
    pub fn initialize(&self, v: &[Complex64], x: &mut [f64]) {
        for k in 0..self.grid.branches.len() {
            let i = self.grid.branch_current(k, v);
            let s = self.branch_state(k);
            x[s] = i.re;
            x[s + 1] = i.im;
        }
        for (n, vn) in v.iter().enumerate().take(self.grid.nodes.len()) {
            let s = self.node_state(n);
            x[s] = vn.re;
            x[s + 1] = vn.im;
        }
        for (k, ld) in self.dynamic_loads.iter().enumerate() {
            let i = v[ld.node] / Complex64::new(ld.r, ld.x);
            let s = self.load_state(k);
            x[s] = i.re;
            x[s + 1] = i.im;
        }
    }

    /// Magnetic plus electric energy stored in the network (pu·s).
    pub fn stored_energy(&self, x: &[f64]) -> f64 {
        let wb = self.omega_b;
        let branches: f64 = (0..self.grid.branches.len())
            .map(|k| 0.5 * self.grid.branches[k].x / wb * Self::get(x, self.branch_state(k)).norm_sqr())
            .sum();
        let nodes: f64 = self
            .grid
            .nodes
            .iter()
            .enumerate()
            .map(|(n, node)| 0.5 * node.shunt_b / wb * self.voltage(x, n).norm_sqr())
            .sum();
        let loads: f64 = self
            .dynamic_loads
            .iter()
            .enumerate()
            .map(|(k, l)| 0.5 * l.x / wb * Self::get(x, self.load_state(k)).norm_sqr())
            .sum();
        branches + nodes + loads
    }

    /// Power dissipated in series resistances, loads included.
    pub fn dissipation(&self, x: &[f64]) -> f64 {
        let series: f64 = self
            .grid
            .branches
            .iter()
            .enumerate()
            .map(|(k, br)| br.r * Self::get(x, self.branch_state(k)).norm_sqr())
            .sum();
        let dyn_loads: f64 = self
            .dynamic_loads
            .iter()
            .enumerate()
            .map(|(k, l)| l.r * Self::get(x, self.load_state(k)).norm_sqr())
            .sum();
        let static_loads: f64 = self
            .static_loads
            .iter()
            .map(|l| l.admittance().re * self.voltage(x, l.node).norm_sqr())
            .sum();
        series + dyn_loads + static_loads
    }

    /// Time derivative of [`Self::stored_energy`] given state derivatives.
    pub fn stored_energy_rate(&self, x: &[f64], dx: &[f64]) -> f64 {
        let wb = self.omega_b;
        let dot = |s: usize| x[s] * dx[s] + x[s + 1] * dx[s + 1];
        let b: f64 = (0..self.grid.branches.len())
            .map(|k| self.grid.branches[k].x / wb * dot(self.branch_state(k)))
            .sum();
        let n: f64 = (0..self.grid.nodes.len())
            .map(|k| self.grid.nodes[k].shunt_b / wb * dot(self.node_state(k)))
            .sum();
        let l: f64 = (0..self.dynamic_loads.len())
            .map(|k| self.dynamic_loads[k].x / wb * dot(self.load_state(k)))
            .sum();
        b + n + l
    }
}

#[derive(Debug, Clone)]
pub struct QpcNetwork {
    pub grid: Grid,
    /// Impedance matrix `Y⁻¹`, Y including static loads and Norton admittances.
    pub z_bus: DMatrix<Complex64>,
    pub static_loads: Vec<LoadBranch>,
}

impl QpcNetwork {
    pub fn new(grid: Grid, static_loads: Vec<LoadBranch>, norton: &[(usize, Complex64)]) -> Result<Self, DynError> {
        let mut y = grid.y_bus();
        for l in &static_loads {
            y[(l.node, l.node)] += l.admittance();
        }
        for &(node, yn) in norton {
            y[(node, node)] += yn;
        }
        let z_bus = y.try_inverse().ok_or(DynError::SingularYBus)?;
        if z_bus.iter().any(|z| !z.norm().is_finite()) {
            return Err(DynError::SingularYBus);
        }
        Ok(QpcNetwork {
            grid,
            z_bus,
            static_loads,
        })
    }

    pub fn solve(&self, injections: &[Complex64]) -> Vec<Complex64> {
        let n = injections.len();
        (0..n)
            .map(|r| (0..n).map(|c| self.z_bus[(r, c)] * injections[c]).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::grid::{GridBranch, Node};

    fn two_node(r: f64, x: f64) -> Grid {
        let node = |k: u32| Node {
            label: format!("bus{k}"),
            bus: Some(k),
            area: 1,
            shunt_b: 0.1,
        };
        Grid {
            nodes: vec![node(1), node(2)],
            branches: vec![GridBranch {
                label: "1-2".into(),
                from: 0,
                to: 1,
                r,
                x,
                ratio: 1.0,
                tie: false,
                tie_head: false,
            }],
            network_nodes: 2,
            network_branches: 1,
        }
    }

    #[test]
    fn equal_voltages_zero_current_is_rest() {
        let net = SpcNetwork::new(two_node(0.01, 0.1), 377.0, 0, vec![], vec![]).unwrap();
        let mut x = vec![0.0; net.n_states()];
        // equal node voltages, rotating-frame capacitor currents supplied by injection
        let v = Complex64::new(1.0, 0.2);
        x[net.node_state(0)] = v.re;
        x[net.node_state(0) + 1] = v.im;
        x[net.node_state(1)] = v.re;
        x[net.node_state(1) + 1] = v.im;
        let inj = vec![J * 0.1 * v; 2];
        let mut dx = vec![0.0; net.n_states()];
        net.residual(&x, &inj, &mut dx);
        assert!(dx.iter().all(|d| d.abs() < 1e-12), "{dx:?}");
    }

    #[test]
    fn ohms_law_limit_without_rotation() {
        let r = 0.05;
        let mut net = SpcNetwork::new(two_node(r, 0.1), 377.0, 0, vec![], vec![]).unwrap();
        net.frame_speed = 0.0;
        let mut x = vec![0.0; net.n_states()];
        let (v1, v2) = (Complex64::new(1.0, 0.3), Complex64::new(0.9, 0.25));
        let i = (v1 - v2) / r;
        for (s, v) in [(net.node_state(0), v1), (net.node_state(1), v2), (net.branch_state(0), i)] {
            x[s] = v.re;
            x[s + 1] = v.im;
        }
        let mut dx = vec![0.0; net.n_states()];
        net.residual(&x, &[Complex64::new(0.0, 0.0); 2], &mut dx);
        assert!(dx[0].abs() < 1e-12 && dx[1].abs() < 1e-12);
    }
}
