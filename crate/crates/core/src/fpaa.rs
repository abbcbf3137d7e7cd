//! Capacity arithmetic for field-programmable analogue arrays.
//!
//! A device is a number of identical computational analogue blocks (CABs)
//! plus a switch-matrix budget; a profile says what each block kind and
//! each wire consume. The estimate is a pure count: how many copies of the
//! patch's total demand fit the device's total resources.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::block::BlockKind;
use crate::patch::Patch;

/// Resource fed by the switch matrix budget instead of the CABs.
pub const SWITCH: &str = "switch";

pub type Resources = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpaaError {
    #[error("invalid device model: {0}")]
    Device(String),
    #[error("invalid resource profile: {0}")]
    Profile(String),
    #[error("E_UNPROFILED_KIND: the profile has no entry for block kind `{0}`")]
    UnprofiledKind(BlockKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CabInventory {
    #[serde(default)]
    pub name: Option<String>,
    pub cab_count: u64,
    pub switch_matrix_budget: u64,
    /// Capacities of a single CAB.
    #[serde(default)]
    pub cab: Resources,
}

impl CabInventory {
    pub fn from_toml(text: &str) -> Result<Self, FpaaError> {
        let inv: CabInventory = toml::from_str(text).map_err(|e| FpaaError::Device(e.to_string()))?;
        if inv.cab_count < 1 {
            return Err(FpaaError::Device("cab_count must be >= 1".into()));
        }
        if inv.cab.contains_key(SWITCH) {
            return Err(FpaaError::Device(
                "switch capacity comes from switch_matrix_budget, not from the CABs".into(),
            ));
        }
        Ok(inv)
    }

    /// Device-wide amount of a resource.
    pub fn available(&self, resource: &str) -> u64 {
        if resource == SWITCH {
            self.switch_matrix_budget
        } else {
            self.cab.get(resource).map_or(0, |c| c.saturating_mul(self.cab_count))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    #[serde(default)]
    name: Option<String>,
    routing_cost: u64,
    #[serde(default)]
    kinds: BTreeMap<String, Resources>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceProfile {
    pub name: Option<String>,
    /// Switch units per wire.
    pub routing_cost: u64,
    pub kinds: BTreeMap<BlockKind, Resources>,
}

impl ResourceProfile {
    pub fn from_toml(text: &str) -> Result<Self, FpaaError> {
        let raw: RawProfile = toml::from_str(text).map_err(|e| FpaaError::Profile(e.to_string()))?;
        let mut kinds = BTreeMap::new();
        for (name, res) in raw.kinds {
            let kind = BlockKind::from_str(&name).map_err(|_| FpaaError::Profile(format!("unknown block kind `{name}`")))?;
            kinds.insert(kind, res);
        }
        Ok(Self {
            name: raw.name,
            routing_cost: raw.routing_cost,
            kinds,
        })
    }
}

/// Total resources used by one copy of `patch`.
pub fn demand(patch: &Patch, profile: &ResourceProfile) -> Result<Resources, FpaaError> {
    let mut total = Resources::new();
    for block in &patch.blocks {
        let kind = block.kind();
        let req = profile.kinds.get(&kind).ok_or(FpaaError::UnprofiledKind(kind))?;
        for (r, n) in req {
            let e = total.entry(r.clone()).or_insert(0);
            *e = e.saturating_add(*n);
        }
    }
    let routing = profile.routing_cost.saturating_mul(patch.wires.len() as u64);
    if routing > 0 {
        let e = total.entry(SWITCH.to_string()).or_insert(0);
        *e = e.saturating_add(routing);
    }
    total.retain(|_, n| *n > 0);
    Ok(total)
}

/// Copies of `demand` that fit `inventory`; `None` when nothing is
/// demanded.
pub fn capacity(inventory: &CabInventory, demand: &Resources) -> Option<u64> {
    demand
        .iter()
        .filter(|(_, d)| **d > 0)
        .map(|(r, d)| inventory.available(r) / d)
        .min()
}
