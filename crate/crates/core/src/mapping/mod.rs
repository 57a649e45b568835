//! Clusters, hierarchical mapping of loop instances, chiplet binding,
//! inter-workload dependence sets and tile-level reuse volumes.

mod bind;
mod defaults;
mod hier;
mod omega;
mod reuse;

pub use bind::{bind_chiplets, Binding, BindingTable};
pub use defaults::{default_mapping, divisor_at_most, fit_tile, snap_tiles, tile_bytes};
pub use hier::{
    map_instances, reduce_instances, HierEdge, HierGraph, HierLevel, HierVertex, Instance,
    ReduceRule,
};
pub use omega::{chiplet_traffic, derive_dependence, ChipletFlow, OmegaEdge, OmegaSet};
pub use reuse::{
    analyze_reuse, sum_over_tiles, BufferCaps, LevelReuse, ReuseAnalysis, TensorTraffic,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::LoopNest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Chiplet,
    Core,
    Pe,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Chiplet, Level::Core, Level::Pe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Chiplet => "chiplet",
            Level::Core => "core",
            Level::Pe => "pe",
        }
    }
}

/// Row-major 2-D engine array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub rows: u32,
    pub cols: u32,
}

impl Grid {
    pub const UNIT: Grid = Grid { rows: 1, cols: 1 };

    pub fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn count(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    pub fn index(&self, (r, c): (u32, u32)) -> usize {
        (r * self.cols + c) as usize
    }

    pub fn coord(&self, index: usize) -> (u32, u32) {
        let index = index as u32;
        (index / self.cols, index % self.cols)
    }
}

/// Engine domain of one workload: a chiplet array of core arrays of PE arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cluster {
    pub chiplet: Grid,
    pub core: Grid,
    pub pe: Grid,
}

impl Cluster {
    pub fn new(chiplet: Grid, core: Grid, pe: Grid) -> Self {
        Self { chiplet, core, pe }
    }

    pub fn grid(&self, level: Level) -> Grid {
        match level {
            Level::Chiplet => self.chiplet,
            Level::Core => self.core,
            Level::Pe => self.pe,
        }
    }

    pub fn chiplets(&self) -> u64 {
        self.chiplet.count()
    }

    pub fn pes_per_chiplet(&self) -> u64 {
        self.core.count() * self.pe.count()
    }

    pub fn total_pes(&self) -> u64 {
        self.chiplets() * self.pes_per_chiplet()
    }

    pub fn validate(&self) -> Result<()> {
        for l in Level::ALL {
            let g = self.grid(l);
            if g.rows == 0 || g.cols == 0 {
                return Err(Error::Mapping(format!(
                    "{} grid has a zero dimension",
                    l.name()
                )));
            }
        }
        Ok(())
    }
}

/// Dataflow at one level: which loops are parallelized over the two grid
/// axes, the temporal loop order (outermost first) and the per-engine tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelMap {
    pub spatial: [usize; 2],
    pub order: Vec<usize>,
    pub tile: Vec<u64>,
}

impl LevelMap {
    pub fn sequential(loops: usize, tile: Vec<u64>) -> Self {
        Self {
            spatial: [0, 1.min(loops.saturating_sub(1))],
            order: (0..loops).collect(),
            tile,
        }
    }

    /// Grid coordinate of a loop instance: tile index along each spatial
    /// loop, taken modulo the axis extent.
    pub fn coord(&self, grid: Grid, point: &[u64]) -> (u32, u32) {
        let [a, b] = self.spatial;
        let r = (point[a] / self.tile[a]) % grid.rows as u64;
        let c = (point[b] / self.tile[b]) % grid.cols as u64;
        (r as u32, c as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MapSpec {
    pub chiplet: LevelMap,
    pub core: LevelMap,
    pub pe: LevelMap,
}

/// `(chiplet, core, pe)` coordinates; derived ordering is lexicographic.
pub type EngineCoord = [(u32, u32); 3];

impl MapSpec {
    pub fn level(&self, level: Level) -> &LevelMap {
        match level {
            Level::Chiplet => &self.chiplet,
            Level::Core => &self.core,
            Level::Pe => &self.pe,
        }
    }

    pub fn level_mut(&mut self, level: Level) -> &mut LevelMap {
        match level {
            Level::Chiplet => &mut self.chiplet,
            Level::Core => &mut self.core,
            Level::Pe => &mut self.pe,
        }
    }

    /// One engine, whole problem as a single tile, loops in declaration order.
    pub fn single_engine(w: &LoopNest) -> Self {
        let ext = w.extents();
        let n = ext.len();
        Self {
            chiplet: LevelMap::sequential(n, ext.clone()),
            core: LevelMap::sequential(n, ext.clone()),
            pe: LevelMap::sequential(n, vec![1; n]),
        }
    }

    /// Checks the spec against a loop nest and cluster. Returns warnings for
    /// spatial loops that cannot occupy the whole axis (the unused engines are
    /// accounted for by utilization).
    pub fn validate(&self, w: &LoopNest, cluster: &Cluster) -> Result<Vec<String>> {
        cluster.validate()?;
        let n = w.loops.len();
        let ext = w.extents();
        let mut warnings = Vec::new();
        let mut outer = ext.clone();
        for l in Level::ALL {
            let m = self.level(l);
            let fail = |msg: String| Error::Mapping(format!("{} level: {msg}", l.name()));
            if m.tile.len() != n || m.order.len() != n {
                return Err(fail(format!("expected {n} tile sizes and order entries")));
            }
            if m.tile.contains(&0) {
                return Err(fail("tile sizes must be at least 1".into()));
            }
            if m.tile.iter().zip(&outer).any(|(t, o)| t > o) {
                return Err(fail(format!(
                    "tile {:?} exceeds the enclosing tile {outer:?}",
                    m.tile
                )));
            }
            if m.tile
                .iter()
                .zip(&outer)
                .zip(&ext)
                .any(|((&t, &o), &e)| o < e && o % t != 0)
            {
                return Err(fail(format!(
                    "tile {:?} does not divide the enclosing tile {outer:?}",
                    m.tile
                )));
            }
            outer = m.tile.clone();
            let mut seen = vec![false; n];
            for &o in &m.order {
                if o >= n || seen[o] {
                    return Err(fail("order is not a permutation of the loops".into()));
                }
                seen[o] = true;
            }
            let [a, b] = m.spatial;
            if a >= n || b >= n {
                return Err(fail("spatial loop out of range".into()));
            }
            let grid = cluster.grid(l);
            if a == b && grid.rows > 1 && grid.cols > 1 {
                return Err(fail("both axes bound to the same loop".into()));
            }
            for (axis, extent) in [(a, grid.rows), (b, grid.cols)] {
                let tiles = ext[axis].div_ceil(m.tile[axis]);
                if extent > 1 && tiles < extent as u64 {
                    warnings.push(format!(
                        "{} level: loop `{}` has {tiles} tiles for an axis of {extent}; clipped",
                        l.name(),
                        w.loops[axis].name
                    ));
                }
            }
        }
        Ok(warnings)
    }

    pub fn engine(&self, cluster: &Cluster, point: &[u64]) -> EngineCoord {
        [
            self.chiplet.coord(cluster.chiplet, point),
            self.core.coord(cluster.core, point),
            self.pe.coord(cluster.pe, point),
        ]
    }

    /// Position of an instance in its PE's sequential schedule: tile indices
    /// at each level in that level's loop order, then the point itself in
    /// PE order.
    pub fn local_time(&self, point: &[u64]) -> Vec<u64> {
        let mut key = Vec::with_capacity(point.len() * 4);
        for m in [&self.chiplet, &self.core, &self.pe] {
            key.extend(m.order.iter().map(|&l| point[l] / m.tile[l]));
        }
        key.extend(self.pe.order.iter().map(|&l| point[l]));
        key
    }

    /// Full tile of each level after nesting: `S0 = min(T0, E)`,
    /// `S1 = min(T1, S0)`, `S2 = min(T2, S1)`. Equal to the raw tiles for
    /// validated specs, where each tile also divides the enclosing one unless
    /// that one spans the whole loop.
    pub fn nested_tiles(&self, extents: &[u64]) -> [Vec<u64>; 3] {
        let clip = |t: &[u64], outer: &[u64]| -> Vec<u64> {
            t.iter().zip(outer).map(|(&a, &b)| a.clamp(1, b)).collect()
        };
        let s0 = clip(&self.chiplet.tile, extents);
        let s1 = clip(&self.core.tile, &s0);
        let s2 = clip(&self.pe.tile, &s1);
        [s0, s1, s2]
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use crate::workload::{IndexExpr, Loop, LoopNest, TensorAccess};

    pub fn nest(
        name: &str,
        loops: &[(&str, u64)],
        out: (&str, &[&str]),
        ins: &[(&str, &[&str])],
    ) -> LoopNest {
        let names: Vec<String> = loops.iter().map(|(n, _)| n.to_string()).collect();
        let acc = |(t, idx): (&str, &[&str])| TensorAccess {
            tensor: t.into(),
            index: idx
                .iter()
                .map(|e| IndexExpr::parse(e, &names).unwrap())
                .collect(),
        };
        LoopNest {
            name: name.into(),
            loops: loops
                .iter()
                .map(|(n, e)| Loop {
                    name: n.to_string(),
                    extent: *e,
                })
                .collect(),
            output: acc(out),
            inputs: ins.iter().map(|&a| acc(a)).collect(),
            macs_per_instance: 1,
            epilogue_ops: 0,
            pipeline_loop: None,
        }
    }

    pub fn matmul(name: &str, n: u64, a: &str, b: &str, c: &str) -> LoopNest {
        nest(
            name,
            &[("i", n), ("j", n), ("k", n)],
            (c, &["i", "j"]),
            &[(a, &["i", "k"]), (b, &["k", "j"])],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::matmul;
    use super::*;

    #[test]
    fn two_loop_spatial_map() {
        // S[i,j,k] -> PE[i%2, j%2]
        let m = LevelMap {
            spatial: [0, 1],
            order: vec![0, 1, 2],
            tile: vec![1, 1, 1],
        };
        assert_eq!(m.coord(Grid::new(2, 2), &[1, 0, 1]), (1, 0));
        assert_eq!(m.coord(Grid::new(2, 2), &[3, 2, 0]), (1, 0));
    }

    #[test]
    fn validate_rejects_bad_order() {
        let w = matmul("mm", 4, "A", "B", "C");
        let mut s = MapSpec::single_engine(&w);
        s.core.order = vec![0, 0, 2];
        let c = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT);
        assert!(s.validate(&w, &c).is_err());
    }

    #[test]
    fn validate_warns_on_uncoverable_axis() {
        let w = matmul("mm", 2, "A", "B", "C");
        let mut s = MapSpec::single_engine(&w);
        s.pe.spatial = [0, 1];
        s.core.tile = vec![1, 1, 1];
        assert!(s
            .validate(&w, &Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT))
            .is_ok());
        s.core.tile = vec![2, 2, 2];
        let c = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::new(4, 1));
        let warnings = s.validate(&w, &c).unwrap();
        assert_eq!(warnings.len(), 1);
    }
}
