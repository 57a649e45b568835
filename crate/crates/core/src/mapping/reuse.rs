use serde::{Deserialize, Serialize};

use super::{Cluster, Level, LevelMap, MapSpec};
use crate::error::{Infeasible, Result};
use crate::workload::{bits_to_bytes, LoopNest, Tensor, TensorAccess};

/// Per-level buffer capacities in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferCaps {
    pub chiplet: u64,
    pub core: u64,
    pub pe: u64,
}

impl BufferCaps {
    pub const UNBOUNDED: BufferCaps = BufferCaps {
        chiplet: u64::MAX,
        core: u64::MAX,
        pe: u64::MAX,
    };

    pub fn get(&self, level: Level) -> u64 {
        match level {
            Level::Chiplet => self.chiplet,
            Level::Core => self.core,
            Level::Pe => self.pe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorTraffic {
    pub tensor: String,
    pub is_output: bool,
    pub element_bits: u32,
    /// Footprint of one full tile.
    pub tile_bytes: u64,
    /// Bytes moved into this level's buffers over the whole workload.
    pub transfer_bytes: u64,
    /// Bytes read out of the parent buffer; the rest of `transfer_bytes` is
    /// forwarded between sibling engines.
    pub parent_read_bytes: u64,
    /// Parent-buffer reads for the group of sibling tiles inside one full
    /// parent tile.
    pub group_bytes_per_parent: u64,
}

impl TensorTraffic {
    pub fn forward_bytes(&self) -> u64 {
        self.transfer_bytes - self.parent_read_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReuse {
    pub level: Level,
    pub tile: Vec<u64>,
    pub engines: u64,
    /// Tiles of this level inside one full parent tile.
    pub vertices_per_parent: u64,
    /// Most tiles any single engine processes inside one parent tile.
    pub max_per_engine: u64,
    pub utilization: f64,
    pub mac_count: u64,
    pub transfer_bytes: u64,
    pub parent_read_bytes: u64,
    pub buffer_bytes_accessed: u64,
    pub tile_buffer_bytes: u64,
    pub tensors: Vec<TensorTraffic>,
}

impl LevelReuse {
    pub fn forward_bytes(&self) -> u64 {
        self.transfer_bytes - self.parent_read_bytes
    }

    /// Sum of full-tile footprints of all tensors.
    pub fn tile_footprint_bytes(&self) -> u64 {
        self.tensors.iter().map(|t| t.tile_bytes).sum()
    }

    /// Parent-buffer reads for one full parent tile.
    pub fn group_bytes_per_parent(&self) -> u64 {
        self.tensors.iter().map(|t| t.group_bytes_per_parent).sum()
    }
}

/// Per-level volumes, chiplet level first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseAnalysis {
    pub levels: Vec<LevelReuse>,
    /// MACs of one full PE tile.
    pub pe_tile_macs: u64,
    /// Operand bytes read by the datapath in one full PE tile.
    pub pe_tile_operand_bytes: u64,
    /// Distinct bytes of each tensor touched by the whole workload.
    pub distinct_bytes: Vec<(String, u64)>,
    pub infeasible: Option<Infeasible>,
}

impl ReuseAnalysis {
    pub fn level(&self, level: Level) -> &LevelReuse {
        &self.levels[level.index()]
    }

    pub fn tensor(&self, level: Level, tensor: &str) -> Option<&TensorTraffic> {
        self.level(level)
            .tensors
            .iter()
            .find(|t| t.tensor == tensor)
    }

    pub fn distinct(&self, tensor: &str) -> u64 {
        self.distinct_bytes
            .iter()
            .find(|(t, _)| t == tensor)
            .map_or(0, |(_, b)| *b)
    }
}

/// Sums `f(shape)` over the tiles of `domain`, grouping tiles into at most
/// `2^n` full/remainder shape classes.
pub fn sum_over_tiles(domain: &[u64], tile: &[u64], mut f: impl FnMut(&[u64]) -> u64) -> u64 {
    let n = domain.len();
    let classes: Vec<[(u64, u64); 2]> = domain
        .iter()
        .zip(tile)
        .map(|(&d, &t)| {
            let t = t.clamp(1, d.max(1));
            [(d / t, t), (u64::from(d % t > 0), d % t)]
        })
        .collect();
    let mut total = 0;
    let mut shape = vec![0u64; n];
    for mask in 0..(1u32 << n) {
        let mut count = 1u64;
        for (l, c) in classes.iter().enumerate() {
            let (k, s) = c[((mask >> l) & 1) as usize];
            count *= k;
            shape[l] = s;
        }
        if count > 0 {
            total += count * f(&shape);
        }
    }
    total
}

fn tiles_along(outer: u64, tile: u64) -> u64 {
    outer.div_ceil(tile)
}

/// Tile of `access` that stays resident across consecutive tiles: loops
/// inside the innermost loop the tensor depends on, which the tensor does not
/// use, are widened to the parent tile.
fn resident_tile(m: &LevelMap, tile: &[u64], parent: &[u64], access: &TensorAccess) -> Vec<u64> {
    let used = access.loops();
    let mut t = tile.to_vec();
    for &l in m.order.iter().rev() {
        if used.contains(&l) {
            break;
        }
        t[l] = parent[l];
    }
    t
}

/// Sibling group tile: the resident tile scaled by the grid along the
/// spatial loops, clipped to the parent tile.
fn group_tile(m: &LevelMap, grid: super::Grid, tile: &[u64], parent: &[u64]) -> Vec<u64> {
    let mut g = tile.to_vec();
    let [a, b] = m.spatial;
    g[a] = g[a].saturating_mul(grid.rows as u64);
    g[b] = g[b].saturating_mul(grid.cols as u64);
    for (x, &p) in g.iter_mut().zip(parent) {
        *x = (*x).min(p);
    }
    g
}

/// Tile-footprint reuse analysis of one workload under a mapping. Data is
/// fetched once per tile residency and reused inside it; sibling engines
/// working on adjacent tiles share one parent read and forward the rest.
pub fn analyze_reuse(
    w: &LoopNest,
    spec: &MapSpec,
    cluster: &Cluster,
    tensors: &[Tensor],
    caps: &BufferCaps,
) -> Result<ReuseAnalysis> {
    spec.validate(w, cluster)?;
    let ext = w.extents();
    let tiles = spec.nested_tiles(&ext);
    let bits_of = |name: &str| {
        tensors
            .iter()
            .find(|t| t.name == name)
            .map_or(8, |t| t.element_bits)
    };
    let accesses: Vec<(&TensorAccess, bool, u32)> = w
        .inputs
        .iter()
        .map(|a| (a, false, bits_of(&a.tensor)))
        .chain(std::iter::once((
            &w.output,
            true,
            bits_of(&w.output.tensor),
        )))
        .collect();
    let bytes =
        |a: &TensorAccess, bits: u32, shape: &[u64]| bits_to_bytes(a.footprint(shape), bits);

    let mut levels = Vec::with_capacity(3);
    let mut infeasible = None;
    for level in Level::ALL {
        let i = level.index();
        let m = spec.level(level);
        let grid = cluster.grid(level);
        let tile = &tiles[i];
        let parent: &[u64] = if i == 0 { &ext } else { &tiles[i - 1] };

        let per_dim: Vec<u64> = parent
            .iter()
            .zip(tile)
            .map(|(&p, &t)| tiles_along(p, t))
            .collect();
        let vertices_per_parent: u64 = per_dim.iter().product();
        let [a, b] = m.spatial;
        let mut max_per_engine = 1u64;
        for (l, &n) in per_dim.iter().enumerate() {
            let span = match (l == a, l == b) {
                (true, true) => grid.count(),
                (true, false) => grid.rows as u64,
                (false, true) => grid.cols as u64,
                (false, false) => 1,
            };
            max_per_engine *= n.div_ceil(span);
        }
        let engines = grid.count();
        let utilization = vertices_per_parent as f64 / engines as f64 / max_per_engine as f64;

        let mut traffic = Vec::with_capacity(accesses.len());
        for &(acc, is_output, bits) in &accesses {
            let res = resident_tile(m, tile, parent, acc);
            let group = group_tile(m, grid, &res, parent);
            let transfer = sum_over_tiles(&ext, &res, |s| bytes(acc, bits, s));
            // Groups never straddle a parent tile.
            let parent_read = sum_over_tiles(&ext, parent, |p| {
                let g: Vec<u64> = group.iter().zip(p).map(|(&g, &p)| g.min(p)).collect();
                sum_over_tiles(p, &g, |s| bytes(acc, bits, s))
            });
            let group_per_parent = sum_over_tiles(parent, &group, |s| bytes(acc, bits, s));
            traffic.push(TensorTraffic {
                tensor: acc.tensor.clone(),
                is_output,
                element_bits: bits,
                tile_bytes: bytes(acc, bits, tile),
                transfer_bytes: transfer,
                parent_read_bytes: parent_read.min(transfer),
                group_bytes_per_parent: group_per_parent,
            });
        }
        let tile_buffer_bytes: u64 = traffic.iter().map(|t| t.tile_bytes).sum();
        if tile_buffer_bytes > caps.get(level) && infeasible.is_none() {
            infeasible = Some(Infeasible::BufferOverflow {
                level: level.name().into(),
                required: tile_buffer_bytes,
                capacity: caps.get(level),
            });
        }
        levels.push(LevelReuse {
            level,
            tile: tile.clone(),
            engines,
            vertices_per_parent,
            max_per_engine,
            utilization,
            mac_count: w.macs(),
            transfer_bytes: traffic.iter().map(|t| t.transfer_bytes).sum(),
            parent_read_bytes: traffic.iter().map(|t| t.parent_read_bytes).sum(),
            buffer_bytes_accessed: 0,
            tile_buffer_bytes,
            tensors: traffic,
        });
    }

    let pe_tile = &tiles[2];
    let pe_tile_instances: u64 = pe_tile.iter().product();
    let pe_tile_macs = pe_tile_instances * w.macs_per_instance as u64;
    let operand_bytes = |instances: u64| -> u64 {
        accesses
            .iter()
            .map(|&(_, is_output, bits)| {
                let per = if is_output { 2 } else { 1 };
                bits_to_bytes(instances * per * w.macs_per_instance as u64, bits)
            })
            .sum()
    };
    let pe_tile_operand_bytes = operand_bytes(pe_tile_instances);
    // Fills of each buffer plus the reads it serves to the level below.
    for i in 0..3 {
        let served = if i < 2 {
            levels[i + 1].parent_read_bytes
        } else {
            operand_bytes(w.loops.iter().map(|l| l.extent).product())
        };
        levels[i].buffer_bytes_accessed = levels[i].transfer_bytes + served;
    }

    let distinct_bytes = accesses
        .iter()
        .map(|&(a, _, bits)| (a.tensor.clone(), bytes(a, bits, &ext)))
        .collect();
    Ok(ReuseAnalysis {
        levels,
        pe_tile_macs,
        pe_tile_operand_bytes,
        distinct_bytes,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::test_util::matmul;
    use crate::mapping::{Grid, LevelMap};

    fn t8(name: &str, dims: &[u64]) -> Tensor {
        Tensor {
            name: name.into(),
            dims: dims.to_vec(),
            element_bits: 8,
        }
    }

    fn mm_tensors(n: u64) -> Vec<Tensor> {
        ["A", "B", "C"].iter().map(|t| t8(t, &[n, n])).collect()
    }

    #[test]
    fn tile_fetch_counts_distinct_elements() {
        let w = matmul("mm", 4, "A", "B", "C");
        let acc: Vec<&TensorAccess> = w.accesses().collect();
        let tile = [2, 2, 4];
        let total: u64 = acc.iter().map(|a| a.footprint(&tile)).sum();
        assert_eq!(total, 2 * 4 + 4 * 2 + 2 * 2);
    }

    #[test]
    fn sum_over_tiles_matches_enumeration() {
        let domain = [5u64, 3, 7];
        let tile = [2u64, 3, 4];
        let mut count = 0;
        let vol = sum_over_tiles(&domain, &tile, |s| {
            count += 1;
            s.iter().product()
        });
        assert_eq!(vol, 5 * 3 * 7);
        assert!(count <= 8);
    }

    #[test]
    fn whole_problem_tile_fetches_once() {
        let w = matmul("mm", 4, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.pe.tile = w.extents();
        let cl = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT);
        let r = analyze_reuse(&w, &spec, &cl, &mm_tensors(4), &BufferCaps::UNBOUNDED).unwrap();
        for l in Level::ALL {
            assert_eq!(r.level(l).transfer_bytes, 48);
            assert_eq!(r.level(l).forward_bytes(), 0);
        }
    }

    #[test]
    fn output_parallel_cores_forward_a() {
        let w = matmul("mm", 2, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.core = LevelMap {
            spatial: [0, 1],
            order: vec![0, 1, 2],
            tile: vec![1, 1, 2],
        };
        let cl = Cluster::new(Grid::UNIT, Grid::new(2, 2), Grid::UNIT);
        let r = analyze_reuse(&w, &spec, &cl, &mm_tensors(2), &BufferCaps::UNBOUNDED).unwrap();
        let a = r.tensor(Level::Core, "A").unwrap();
        assert_eq!(a.transfer_bytes, 8);
        assert_eq!(a.parent_read_bytes, 4);
        assert!(a.forward_bytes() > 0);
        let core = r.level(Level::Core);
        assert_eq!((core.vertices_per_parent, core.max_per_engine), (4, 1));
        assert_eq!(core.utilization, 1.0);
    }

    #[test]
    fn stationary_output_is_not_refetched() {
        // k innermost at the chiplet level keeps each C tile resident.
        let w = matmul("mm", 4, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.chiplet.tile = vec![2, 2, 2];
        spec.core.tile = vec![2, 2, 2];
        let cl = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT);
        let r = analyze_reuse(&w, &spec, &cl, &mm_tensors(4), &BufferCaps::UNBOUNDED).unwrap();
        assert_eq!(r.tensor(Level::Chiplet, "C").unwrap().transfer_bytes, 16);
        spec.chiplet.order = vec![2, 0, 1];
        let r = analyze_reuse(&w, &spec, &cl, &mm_tensors(4), &BufferCaps::UNBOUNDED).unwrap();
        assert_eq!(r.tensor(Level::Chiplet, "C").unwrap().transfer_bytes, 32);
    }

    #[test]
    fn buffer_overflow_is_flagged() {
        let w = matmul("mm", 4, "A", "B", "C");
        let spec = MapSpec::single_engine(&w);
        let cl = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT);
        let caps = BufferCaps {
            chiplet: 47,
            core: u64::MAX,
            pe: u64::MAX,
        };
        let r = analyze_reuse(&w, &spec, &cl, &mm_tensors(4), &caps).unwrap();
        assert!(matches!(
            r.infeasible,
            Some(Infeasible::BufferOverflow { .. })
        ));
    }
}
