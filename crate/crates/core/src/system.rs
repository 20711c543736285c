//! A network together with the controller blocks attached to its buses.

use thiserror::Error;

use crate::controllers::{check_assumption4, ControllerBlock, Role};
use crate::network::{BusId, NetworkError, NetworkModel, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("block {block} references unknown bus {bus}")]
    UnknownBus { block: usize, bus: BusId },
    #[error("generation block {block} is attached to load bus {bus}")]
    GenerationAtLoadBus { block: usize, bus: BusId },
    #[error("demand at load bus {bus} does not determine its frequency")]
    Assumption4Failed { bus: BusId },
    #[error("demand at load bus {bus} has no direct frequency dependence; its frequency is not an algebraic function of the state")]
    Index2LoadBus { bus: BusId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedBlock {
    pub bus: BusId,
    pub block: ControllerBlock,
}

impl PlacedBlock {
    pub fn new(bus: BusId, block: ControllerBlock) -> Self {
        Self { bus, block }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    pub model: NetworkModel,
    pub blocks: Vec<PlacedBlock>,
}

impl PowerSystem {
    pub fn new(model: NetworkModel, blocks: Vec<PlacedBlock>) -> Self {
        Self { model, blocks }
    }

    /// Topology checks, block placement, and the per-load-bus frequency
    /// determinacy check.
    pub fn validate(&self) -> Result<(), SystemError> {
        self.validate_with(&vec![false; self.blocks.len()])
    }

    /// Topology checks and block placement only.
    pub fn validate_placement(&self) -> Result<(), SystemError> {
        self.model.validate_topology()?;
        for (k, pb) in self.blocks.iter().enumerate() {
            let bus = self.model.bus(pb.bus).ok_or(SystemError::UnknownBus { block: k, bus: pb.bus })?;
            if pb.block.role() == Role::Generation && !bus.is_generator() {
                return Err(SystemError::GenerationAtLoadBus { block: k, bus: pb.bus });
            }
        }
        Ok(())
    }

    /// Blocks flagged in `indirect` are treated as having no instantaneous
    /// frequency dependence (held or delayed inputs).
    pub(crate) fn validate_with(&self, indirect: &[bool]) -> Result<(), SystemError> {
        self.validate_placement()?;
        for bus in self.model.buses.iter().filter(|b| !b.is_generator()) {
            let here: Vec<ControllerBlock> = self.blocks_at(bus.id).map(|(_, pb)| pb.block.clone()).collect();
            if !check_assumption4(&here, 0.0) {
                return Err(SystemError::Assumption4Failed { bus: bus.id });
            }
            let direct = self
                .blocks_at(bus.id)
                .filter(|(k, pb)| !indirect[*k] && pb.block.delay() == 0.0)
                .any(|(_, pb)| matches!(pb.block.memoryless_response(0.0), Some((_, (l, r))) if l.min(r) > 0.0));
            if !direct {
                return Err(SystemError::Index2LoadBus { bus: bus.id });
            }
        }
        Ok(())
    }

    pub fn blocks_at(&self, bus: BusId) -> impl Iterator<Item = (usize, &PlacedBlock)> {
        self.blocks.iter().enumerate().filter(move |(_, pb)| pb.bus == bus)
    }

    /// Total uncontrollable damping at a bus.
    pub fn damping_at(&self, bus: BusId) -> f64 {
        self.blocks_at(bus).filter_map(|(_, pb)| pb.block.damping()).sum()
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.blocks.iter().any(|pb| pb.block.role() == role)
    }

    /// Same system without controllable demand blocks.
    pub fn without_controllable_demand(&self) -> Self {
        Self {
            model: self.model.clone(),
            blocks: self
                .blocks
                .iter()
                .filter(|pb| pb.block.role() != Role::ControllableDemand)
                .cloned()
                .collect(),
        }
    }

    pub(crate) fn topology(&self) -> Topology {
        Topology::new(&self.model)
    }

    /// Bus index of every block.
    pub(crate) fn block_bus_indices(&self) -> Vec<usize> {
        self.blocks.iter().map(|pb| self.model.bus_index(pb.bus).expect("validated")).collect()
    }
}
