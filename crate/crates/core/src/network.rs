//! Network graph, line flow law and per-bus power mismatch.
//!
//! All quantities are per-unit deviations from the nominal operating point.
//! Lines are stored once with an arbitrary orientation; the phase difference
//! `eta` of a line is `theta_from - theta_to`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BusId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no buses")]
    Empty,
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("line {from}->{to} references unknown bus {missing}")]
    DanglingEndpoint { from: BusId, to: BusId, missing: BusId },
    #[error("duplicate line between buses {0} and {1}")]
    DuplicateEdge(BusId, BusId),
    #[error("line {0}->{0} is a self loop")]
    SelfLoop(BusId),
    #[error("buses {unreachable:?} are not reachable from bus {root}")]
    DisconnectedGraph { root: BusId, unreachable: Vec<BusId> },
    #[error("line {from}->{to} has non-positive susceptance {value}")]
    InvalidSusceptance { from: BusId, to: BusId, value: f64 },
    #[error("generator bus {bus} has non-positive inertia {value}")]
    InvalidInertia { bus: BusId, value: f64 },
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("expected {expected} line flows, got {got}")]
    FlowDimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BusKind {
    /// Bus with rotating mass; `inertia` is M in p.u.·s².
    Generator { inertia: f64 },
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Step change p^L in frequency-independent demand (p.u.).
    pub load_step: f64,
}

impl Bus {
    pub fn generator(id: BusId, inertia: f64) -> Self {
        Self { id, kind: BusKind::Generator { inertia }, load_step: 0.0 }
    }

    pub fn load(id: BusId) -> Self {
        Self { id, kind: BusKind::Load, load_step: 0.0 }
    }

    pub fn with_load_step(mut self, p: f64) -> Self {
        self.load_step = p;
        self
    }

    pub fn inertia(&self) -> Option<f64> {
        match self.kind {
            BusKind::Generator { inertia } => Some(inertia),
            BusKind::Load => None,
        }
    }

    pub fn is_generator(&self) -> bool {
        matches!(self.kind, BusKind::Generator { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub susceptance: f64,
    pub nominal_flow: f64,
}

impl Line {
    pub fn new(from: BusId, to: BusId, susceptance: f64) -> Self {
        Self { from, to, susceptance, nominal_flow: 0.0 }
    }

    pub fn with_nominal_flow(mut self, p: f64) -> Self {
        self.nominal_flow = p;
        self
    }

    /// Same physical line stored with the opposite orientation.
    pub fn flipped(&self) -> Self {
        Self {
            from: self.to,
            to: self.from,
            susceptance: self.susceptance,
            nominal_flow: -self.nominal_flow,
        }
    }
}

/// Flow deviation on a line for phase difference `eta`: `B sin(eta) - p_nom`.
pub fn line_flow(line: &Line, eta: f64) -> f64 {
    line.susceptance * eta.sin() - line.nominal_flow
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

impl NetworkModel {
    pub fn new(buses: Vec<Bus>, lines: Vec<Line>) -> Self {
        Self { buses, lines }
    }

    /// Checks uniqueness of ids, line endpoints, antiparallel pairs,
    /// parameter signs and connectivity.
    pub fn validate_topology(&self) -> Result<(), NetworkError> {
        if self.buses.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut index = HashMap::with_capacity(self.buses.len());
        for (k, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if let BusKind::Generator { inertia } = bus.kind {
                if !(inertia > 0.0 && inertia.is_finite()) {
                    return Err(NetworkError::InvalidInertia { bus: bus.id, value: inertia });
                }
            }
        }

        let mut seen = HashMap::new();
        let mut adjacency = vec![Vec::new(); self.buses.len()];
        for line in &self.lines {
            for end in [line.from, line.to] {
                if !index.contains_key(&end) {
                    return Err(NetworkError::DanglingEndpoint {
                        from: line.from,
                        to: line.to,
                        missing: end,
                    });
                }
            }
            if line.from == line.to {
                return Err(NetworkError::SelfLoop(line.from));
            }
            if !(line.susceptance > 0.0 && line.susceptance.is_finite()) {
                return Err(NetworkError::InvalidSusceptance {
                    from: line.from,
                    to: line.to,
                    value: line.susceptance,
                });
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            if seen.insert(key, ()).is_some() {
                return Err(NetworkError::DuplicateEdge(line.from, line.to));
            }
            let (a, b) = (index[&line.from], index[&line.to]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }

        let mut visited = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(k) = queue.pop_front() {
            for &n in &adjacency[k] {
                if !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        let unreachable: Vec<BusId> = self
            .buses
            .iter()
            .zip(&visited)
            .filter(|(_, v)| !**v)
            .map(|(b, _)| b.id)
            .collect();
        if !unreachable.is_empty() {
            return Err(NetworkError::DisconnectedGraph { root: self.buses[0].id, unreachable });
        }
        Ok(())
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Right-hand side of the bus balance:
    /// `-p^L + supply - sum(outgoing flows) + sum(incoming flows)`.
    ///
    /// `flows` holds one entry per line in `self.lines` order. For a
    /// generator the result equals `M * d(omega)/dt`; at a load bus it must
    /// vanish.
    pub fn bus_mismatch(&self, bus: BusId, supply: f64, flows: &[f64]) -> Result<f64, NetworkError> {
        let b = self.bus(bus).ok_or(NetworkError::UnknownBus(bus))?;
        if flows.len() != self.lines.len() {
            return Err(NetworkError::FlowDimension { expected: self.lines.len(), got: flows.len() });
        }
        let mut total = -b.load_step + supply;
        for (line, &p) in self.lines.iter().zip(flows) {
            if line.from == bus {
                total -= p;
            }
            if line.to == bus {
                total += p;
            }
        }
        Ok(total)
    }

    pub fn is_tree(&self) -> bool {
        self.lines.len() + 1 == self.buses.len()
    }

    pub fn total_load_step(&self) -> f64 {
        self.buses.iter().map(|b| b.load_step).sum()
    }
}

/// Dense index view of a validated network, used by the solvers.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    /// Line endpoints as bus indices.
    pub ends: Vec<(usize, usize)>,
    /// Generator bus indices in bus order.
    pub generators: Vec<usize>,
    /// Load bus indices in bus order.
    pub loads: Vec<usize>,
    /// For every bus, `(line index, +1 if the bus is the receiving end else -1)`.
    pub incidence: Vec<Vec<(usize, f64)>>,
}

impl Topology {
    pub fn new(model: &NetworkModel) -> Self {
        let index: HashMap<BusId, usize> =
            model.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
        let ends: Vec<(usize, usize)> =
            model.lines.iter().map(|l| (index[&l.from], index[&l.to])).collect();
        let mut incidence = vec![Vec::new(); model.buses.len()];
        for (e, &(i, j)) in ends.iter().enumerate() {
            incidence[i].push((e, -1.0));
            incidence[j].push((e, 1.0));
        }
        let generators = (0..model.buses.len()).filter(|&k| model.buses[k].is_generator()).collect();
        let loads = (0..model.buses.len()).filter(|&k| !model.buses[k].is_generator()).collect();
        Self { ends, generators, loads, incidence }
    }

    /// Net flow into bus `k`.
    pub fn inflow(&self, k: usize, flows: &[f64]) -> f64 {
        self.incidence[k].iter().map(|&(e, s)| s * flows[e]).sum()
    }
}
