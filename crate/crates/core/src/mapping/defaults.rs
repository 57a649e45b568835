use super::{Cluster, Level, LevelMap, MapSpec};
use crate::workload::{bits_to_bytes, LoopNest, Tensor};

/// Smallest divisor `d` of `outer` with `d * parts >= outer`.
pub fn fit_tile(outer: u64, parts: u64) -> u64 {
    let need = outer.div_ceil(parts.max(1));
    (need..=outer).find(|d| outer % d == 0).unwrap_or(outer)
}

/// Largest divisor of `outer` not above `limit`.
pub fn divisor_at_most(outer: u64, limit: u64) -> u64 {
    (1..=limit.min(outer))
        .rev()
        .find(|d| outer % d == 0)
        .unwrap_or(1)
}

/// Turns requested per-level tiles into a valid nesting: each tile is clipped
/// to its enclosing tile and rounded down to a divisor of it unless the
/// enclosing tile spans the whole loop.
pub fn snap_tiles(requested: [&[u64]; 3], ext: &[u64]) -> [Vec<u64>; 3] {
    let mut out: [Vec<u64>; 3] = Default::default();
    let mut outer = ext.to_vec();
    for (i, req) in requested.iter().enumerate() {
        let t: Vec<u64> = req
            .iter()
            .zip(&outer)
            .zip(ext)
            .map(|((&r, &o), &e)| {
                let r = r.clamp(1, o);
                if o >= e {
                    r
                } else {
                    divisor_at_most(o, r)
                }
            })
            .collect();
        outer = t.clone();
        out[i] = t;
    }
    out
}

/// Footprint bytes of one tile over all tensors of `w`.
pub fn tile_bytes(w: &LoopNest, tensors: &[Tensor], tile: &[u64]) -> u64 {
    w.accesses()
        .map(|a| {
            let bits = tensors
                .iter()
                .find(|t| t.name == a.tensor)
                .map_or(8, |t| t.element_bits);
            bits_to_bytes(a.footprint(tile), bits)
        })
        .sum()
}

/// Loops ranked for spatial use: output loops by decreasing extent, then
/// the rest; the pipeline loop goes last.
fn spatial_candidates(w: &LoopNest) -> Vec<usize> {
    let ext = w.extents();
    let out = w.output.loops();
    let mut c: Vec<usize> = (0..w.loops.len()).collect();
    c.sort_by_key(|&l| {
        (
            Some(l) == w.pipeline_loop,
            !out.contains(&l),
            std::cmp::Reverse(ext[l]),
            l,
        )
    });
    c
}

/// Output-parallel mapping at every level, loops in declaration order,
/// tiles spreading the spatial loops over each grid and shrunk until they
/// fit the buffer capacities.
pub fn default_mapping(
    w: &LoopNest,
    cluster: &Cluster,
    tensors: &[Tensor],
    caps: &super::BufferCaps,
) -> MapSpec {
    let ext = w.extents();
    let n = ext.len();
    let cand = spatial_candidates(w);
    let spatial = [cand[0], if n > 1 { cand[1] } else { cand[0] }];
    let mut levels = Vec::with_capacity(3);
    let mut outer = ext.clone();
    for level in Level::ALL {
        let grid = cluster.grid(level);
        let mut tile: Vec<u64> = outer.clone();
        if let Some(p) = w.pipeline_loop {
            tile[p] = 1;
        }
        let [a, b] = spatial;
        tile[a] = fit_tile(
            outer[a],
            grid.rows as u64 * if a == b { grid.cols as u64 } else { 1 },
        );
        if a != b {
            tile[b] = fit_tile(outer[b], grid.cols as u64);
        }
        let top = level == Level::Chiplet;
        let cap = caps.get(level);
        while tile_bytes(w, tensors, &tile) > cap {
            let pick = (0..n)
                .filter(|&l| tile[l] > 1)
                .max_by_key(|&l| (!spatial.contains(&l), tile[l], std::cmp::Reverse(l)));
            let Some(l) = pick else { break };
            tile[l] = if top {
                tile[l].div_ceil(2)
            } else {
                divisor_at_most(outer[l], tile[l] - 1)
            };
        }
        outer = tile.clone();
        levels.push(LevelMap {
            spatial,
            order: (0..n).collect(),
            tile,
        });
    }
    let [chiplet, core, pe]: [LevelMap; 3] = levels.try_into().expect("three levels");
    let mut spec = MapSpec { chiplet, core, pe };
    let snapped = snap_tiles([&spec.chiplet.tile, &spec.core.tile, &spec.pe.tile], &ext);
    for (l, t) in Level::ALL.into_iter().zip(snapped) {
        spec.level_mut(l).tile = t;
    }
    spec
}
