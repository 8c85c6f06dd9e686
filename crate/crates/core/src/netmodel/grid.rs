//! Expanded network graph: pi-sections split into internal nodes, shunt
//! banks and charging folded into node susceptances.

use num_complex::Complex64;
use serde::Serialize;

use super::spec::{MachineKind, SystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub label: String,
    /// Configuration bus this node represents, if any.
    pub bus: Option<u32>,
    pub area: u32,
    /// Total shunt susceptance (pu, system base).
    pub shunt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBranch {
    pub label: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Ideal tap on the `from` side.
    pub ratio: f64,
    pub tie: bool,
    /// First section of a tie line (where the tie flow is measured).
    pub tie_head: bool,
}

impl GridBranch {
    pub fn admittance(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nodes: Vec<Node>,
    pub branches: Vec<GridBranch>,
    /// Number of leading nodes that belong to the dynamic network (the rest
    /// are GFC capacitor nodes used only by the power flow).
    pub network_nodes: usize,
    pub network_branches: usize,
}

impl Grid {
    /// Network seen by the dynamic models: configuration buses, pi-section
    /// internal nodes, lines and transformers.
    pub fn network(spec: &SystemSpec) -> Grid {
        let s_base = spec.defaults.s_base_mva;
        let mut nodes: Vec<Node> = spec
            .buses
            .iter()
            .map(|b| Node {
                label: format!("bus{}", b.id),
                bus: Some(b.id),
                area: b.area,
                shunt_b: b.shunt_mvar / s_base,
            })
            .collect();
        let idx = |id: u32| spec.buses.iter().position(|b| b.id == id).expect("validated bus id");
        let mut branches = Vec::new();

        for br in &spec.branches {
            let n = br.sections.unwrap_or(1).max(1);
            let (f, t) = (idx(br.from), idx(br.to));
            let area = nodes[f].area;
            let circuit = spec
                .branches
                .iter()
                .take_while(|o| !std::ptr::eq(*o, br))
                .filter(|o| (o.from, o.to) == (br.from, br.to))
                .count()
                + 1;
            let name = format!("{}-{}#{}", br.from, br.to, circuit);
            let mut prev = f;
            for k in 0..n {
                let next = if k + 1 == n {
                    t
                } else {
                    nodes.push(Node {
                        label: format!("line{name}.{}", k + 1),
                        bus: None,
                        area,
                        shunt_b: 0.0,
                    });
                    nodes.len() - 1
                };
                let b_half = br.b / (2.0 * n as f64);
                nodes[prev].shunt_b += b_half;
                nodes[next].shunt_b += b_half;
                branches.push(GridBranch {
                    label: if n == 1 { name.clone() } else { format!("{name}.s{}", k + 1) },
                    from: prev,
                    to: next,
                    r: br.r / n as f64,
                    x: br.x / n as f64,
                    ratio: 1.0,
                    tie: br.tie,
                    tie_head: br.tie && k == 0,
                });
                prev = next;
            }
        }
        for t in &spec.transformers {
            branches.push(GridBranch {
                label: format!("T{}-{}", t.from, t.to),
                from: idx(t.from),
                to: idx(t.to),
                r: t.r,
                x: t.x,
                ratio: t.ratio,
                tie: false,
                tie_head: false,
            });
        }
        for n in &mut nodes {
            if n.shunt_b == 0.0 {
                n.shunt_b = spec.defaults.stray_b;
            }
        }
        let (network_nodes, network_branches) = (nodes.len(), branches.len());
        Grid {
            nodes,
            branches,
            network_nodes,
            network_branches,
        }
    }

    /// Network plus one capacitor node and transformer per GFC, the form
    /// solved by the power flow.
    pub fn for_power_flow(spec: &SystemSpec) -> Grid {
        let mut g = Grid::network(spec);
        let s_base = spec.defaults.s_base_mva;
        for m in spec.machines.iter().filter(|m| m.kind == MachineKind::Gfc) {
            let p = m.gfc.as_ref().expect("filled gfc params");
            let hv = g.node_of_bus(m.bus).expect("validated");
            let area = g.nodes[hv].area;
            g.nodes.push(Node {
                label: format!("{}.vc", m.id),
                bus: None,
                area,
                shunt_b: 0.0,
            });
            let scale = s_base / m.rating_mva;
            g.branches.push(GridBranch {
                label: format!("{}.xfmr", m.id),
                from: g.nodes.len() - 1,
                to: hv,
                r: p.r_t * scale,
                x: p.x_t * scale,
                ratio: 1.0,
                tie: false,
                tie_head: false,
            });
        }
        g
    }

    pub fn node_of_bus(&self, bus: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.bus == Some(bus))
    }

    pub fn node_by_label(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    /// Dense bus admittance matrix (branches and node shunts only).
    pub fn y_bus(&self) -> nalgebra::DMatrix<Complex64> {
        let n = self.nodes.len();
        let mut y = nalgebra::DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for br in &self.branches {
            let ys = br.admittance();
            let a = br.ratio;
            y[(br.from, br.from)] += ys / (a * a);
            y[(br.to, br.to)] += ys;
            y[(br.from, br.to)] -= ys / a;
            y[(br.to, br.from)] -= ys / a;
        }
        for (k, node) in self.nodes.iter().enumerate() {
            y[(k, k)] += Complex64::new(0.0, node.shunt_b);
        }
        y
    }

    /// Series current of a branch (from -> to) for node voltages `v`.
    pub fn branch_current(&self, k: usize, v: &[Complex64]) -> Complex64 {
        let br = &self.branches[k];
        (v[br.from] / br.ratio - v[br.to]) * br.admittance()
    }
}
