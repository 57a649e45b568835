use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Cluster;
use crate::error::{Error, Result};

/// Cluster chiplet coordinates bound to system chiplet ids, with the
/// execution sequence slot of the bound workload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub pairs: Vec<((u32, u32), usize)>,
    pub slot: usize,
}

impl Binding {
    pub fn system_chiplet(&self, coord: (u32, u32)) -> usize {
        self.pairs
            .iter()
            .find(|(c, _)| *c == coord)
            .map(|&(_, s)| s)
            .expect("coordinate inside the cluster")
    }

    pub fn chiplets(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|&(_, s)| s)
    }
}

/// Binds cluster chiplets (row-major) to `system` ids in order.
pub fn bind_chiplets(chi: &Cluster, system: &[usize], slot: usize) -> Result<Binding> {
    let n = chi.chiplets() as usize;
    if system.len() != n {
        return Err(Error::Binding(format!(
            "cluster has {n} chiplets but {} system chiplets were given",
            system.len()
        )));
    }
    for (i, s) in system.iter().enumerate() {
        if system[..i].contains(s) {
            return Err(Error::Binding(format!("system chiplet {s} bound twice")));
        }
    }
    Ok(Binding {
        pairs: system
            .iter()
            .enumerate()
            .map(|(i, &s)| (chi.chiplet.coord(i), s))
            .collect(),
        slot,
    })
}

/// Bindings of all workloads. Workloads are bound in call order; each gets
/// the first slot free on all of its chiplets, so co-located workloads are
/// serialized on consecutive slots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingTable {
    pub bindings: Vec<Binding>,
    next: BTreeMap<usize, usize>,
}

impl BindingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, chi: &Cluster, system: &[usize]) -> Result<&Binding> {
        let slot = system
            .iter()
            .map(|s| self.next.get(s).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let b = bind_chiplets(chi, system, slot)?;
        for &s in system {
            self.next.insert(s, slot + 1);
        }
        self.bindings.push(b);
        Ok(self.bindings.last().expect("just pushed"))
    }

    /// Workloads bound to `chiplet`, in slot order.
    pub fn sequence(&self, chiplet: usize) -> Vec<usize> {
        let mut ws: Vec<usize> = (0..self.bindings.len())
            .filter(|&w| self.bindings[w].chiplets().any(|c| c == chiplet))
            .collect();
        ws.sort_by_key(|&w| self.bindings[w].slot);
        ws
    }

    pub fn used_chiplets(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.bindings.iter().flat_map(|b| b.chiplets()).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Checks that no system chiplet holds two workloads in the same slot.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (w, b) in self.bindings.iter().enumerate() {
            for c in b.chiplets() {
                if let Some(other) = seen.insert((c, b.slot), w) {
                    return Err(Error::Binding(format!(
                        "workloads {other} and {w} share chiplet {c} in slot {}",
                        b.slot
                    )));
                }
            }
        }
        Ok(())
    }
}
