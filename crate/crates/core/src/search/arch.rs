use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Infeasible;
use crate::mapping::{
    default_mapping, snap_tiles, tile_bytes, BufferCaps, Cluster, Grid, Level, LevelMap, MapSpec,
};
use crate::perf::Metrics;
use crate::workload::{LoopNest, Tensor};

/// Shapes of the chiplet, core and PE arrays as `[rows, cols]`.
pub type Shape = [[u32; 2]; 3];

/// Bayes-side fields of an architecture genome.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchLow {
    pub shape: Shape,
    pub spatial: [[usize; 2]; 3],
}

/// Annealing-side fields: per-level loop order and requested tiles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchHigh {
    pub order: [Vec<usize>; 3],
    pub tiling: [Vec<u64>; 3],
}

/// One workload's architecture and dataflow, level order chiplet, core, PE.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchGenome {
    pub low: ArchLow,
    pub high: ArchHigh,
}

impl ArchGenome {
    /// Genome length: two shape and two spatial entries per level, plus
    /// one order and one tile entry per loop per level.
    pub fn dims(&self) -> usize {
        12 + self.high.order.iter().map(Vec::len).sum::<usize>()
            + self.high.tiling.iter().map(Vec::len).sum::<usize>()
    }

    pub fn cluster(&self) -> Cluster {
        let g = |[r, c]: [u32; 2]| Grid::new(r, c);
        let [a, b, c] = self.low.shape;
        Cluster::new(g(a), g(b), g(c))
    }

    pub fn from_spec(cluster: &Cluster, spec: &MapSpec) -> Self {
        let g = |x: Grid| [x.rows, x.cols];
        Self {
            low: ArchLow {
                shape: [g(cluster.chiplet), g(cluster.core), g(cluster.pe)],
                spatial: [spec.chiplet.spatial, spec.core.spatial, spec.pe.spatial],
            },
            high: ArchHigh {
                order: [
                    spec.chiplet.order.clone(),
                    spec.core.order.clone(),
                    spec.pe.order.clone(),
                ],
                tiling: [
                    spec.chiplet.tile.clone(),
                    spec.core.tile.clone(),
                    spec.pe.tile.clone(),
                ],
            },
        }
    }
}

fn genome_err(message: impl Into<String>) -> Infeasible {
    Infeasible::Genome {
        message: message.into(),
    }
}

/// Decodes a genome into a cluster and a validated mapping. Tiles are
/// snapped into a legal nesting; per-level buffers are sized from the tile
/// footprint of one pipeline iteration and must fit the caps.
pub fn decode_arch(
    g: &ArchGenome,
    w: &LoopNest,
    tensors: &[Tensor],
    caps: &BufferCaps,
) -> Result<(Cluster, MapSpec), Infeasible> {
    let n = w.loops.len();
    let ext = w.extents();
    if g.high.order.iter().any(|v| v.len() != n) || g.high.tiling.iter().any(|v| v.len() != n) {
        return Err(genome_err(format!(
            "genome does not match the {n} loops of `{}`",
            w.name
        )));
    }
    if g.low.shape.iter().flatten().any(|&d| d == 0) {
        return Err(genome_err("array dimensions must be at least 1"));
    }
    if g.high.tiling.iter().flatten().any(|&t| t == 0) {
        return Err(genome_err("tile sizes must be at least 1"));
    }
    for (l, [a, b]) in g.low.spatial.iter().enumerate() {
        if *a >= n || *b >= n || (a == b && n > 1) {
            return Err(genome_err(format!(
                "level {l}: spatial loops must be two distinct loops"
            )));
        }
    }
    for order in &g.high.order {
        let mut seen = vec![false; n];
        for &o in order {
            if o >= n || std::mem::replace(&mut seen[o], true) {
                return Err(genome_err("order is not a permutation"));
            }
        }
    }
    let tiles = snap_tiles(
        [&g.high.tiling[0], &g.high.tiling[1], &g.high.tiling[2]],
        &ext,
    );
    let [t0, t1, t2] = tiles;
    let level = |i: usize, tile: Vec<u64>| LevelMap {
        spatial: g.low.spatial[i],
        order: g.high.order[i].clone(),
        tile,
    };
    let spec = MapSpec {
        chiplet: level(0, t0),
        core: level(1, t1),
        pe: level(2, t2),
    };
    let cluster = g.cluster();
    spec.validate(w, &cluster)
        .map_err(|e| genome_err(e.to_string()))?;
    for l in Level::ALL {
        let mut tile = spec.level(l).tile.clone();
        if let Some(p) = w.pipeline_loop {
            tile[p] = 1;
        }
        let required = tile_bytes(w, tensors, &tile);
        let capacity = caps.get(l);
        if required > capacity {
            return Err(Infeasible::BufferOverflow {
                level: l.name().to_string(),
                required,
                capacity,
            });
        }
    }
    Ok((cluster, spec))
}

/// Splits a PE budget over workloads in proportion to their MAC counts,
/// each receiving at least one PE; leftover PEs go to the largest
/// remainders.
pub fn balance_pes(macs: &[u64], budget: u64) -> Result<Vec<u64>, Infeasible> {
    let n = macs.len() as u64;
    if n == 0 {
        return Err(Infeasible::Empty);
    }
    if budget < n {
        return Err(Infeasible::PeBudget {
            requested: n,
            budget,
        });
    }
    let total: u64 = macs.iter().sum();
    let quota: Vec<f64> = macs
        .iter()
        .map(|&m| {
            if total == 0 {
                budget as f64 / n as f64
            } else {
                budget as f64 * m as f64 / total as f64
            }
        })
        .collect();
    let mut alloc: Vec<u64> = quota.iter().map(|q| (q.floor() as u64).max(1)).collect();
    while alloc.iter().sum::<u64>() > budget {
        let i = (0..alloc.len())
            .filter(|&i| alloc[i] > 1)
            .max_by(|&a, &b| {
                (alloc[a] as f64 - quota[a])
                    .total_cmp(&(alloc[b] as f64 - quota[b]))
                    .then(b.cmp(&a))
            })
            .expect("budget covers one PE each");
        alloc[i] -= 1;
    }
    while alloc.iter().sum::<u64>() < budget {
        let i = (0..alloc.len())
            .max_by(|&a, &b| {
                (quota[a] - alloc[a] as f64)
                    .total_cmp(&(quota[b] - alloc[b] as f64))
                    .then(b.cmp(&a))
            })
            .expect("nonempty");
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Array dimensions offered to the search: `2^k` and `3·2^k`.
pub fn array_dims(limit: u64) -> Vec<u32> {
    let mut d: Vec<u32> = (0..32)
        .flat_map(|k| [1u64 << k, 3u64 << k])
        .filter(|&v| v <= limit)
        .map(|v| v as u32)
        .collect();
    d.sort_unstable();
    d.dedup();
    d
}

/// Every shape with at most `pe_limit` PEs in total and at most
/// `max_chiplets` chiplets.
pub fn shape_catalog(pe_limit: u64, max_chiplets: u64) -> Vec<Shape> {
    let dims = array_dims(pe_limit.max(1));
    let mut out = Vec::new();
    let mut cur = [0u32; 6];
    fn rec(
        i: usize,
        prod: u64,
        dims: &[u32],
        limit: u64,
        max_chip: u64,
        cur: &mut [u32; 6],
        out: &mut Vec<Shape>,
    ) {
        if i == 6 {
            out.push([[cur[0], cur[1]], [cur[2], cur[3]], [cur[4], cur[5]]]);
            return;
        }
        for &d in dims {
            let p = prod * d as u64;
            if p > limit || (i < 2 && p > max_chip) {
                break;
            }
            cur[i] = d;
            rec(i + 1, p, dims, limit, max_chip, cur, out);
        }
    }
    rec(
        0,
        1,
        &dims,
        pe_limit.max(1),
        max_chiplets.max(1),
        &mut cur,
        &mut out,
    );
    out
}

fn total_pes(s: &Shape) -> u64 {
    s.iter().map(|[r, c]| *r as u64 * *c as u64).product()
}

/// Starting shape: one chiplet, the most PEs, then the most PEs per core,
/// then the squarest arrays.
pub fn default_shape(catalog: &[Shape]) -> Shape {
    *catalog
        .iter()
        .filter(|s| s[0] == [1, 1])
        .max_by_key(|s| {
            let skew = s.iter().map(|[r, c]| r.abs_diff(*c)).sum::<u32>();
            (
                total_pes(s),
                s[2][0] as u64 * s[2][1] as u64,
                std::cmp::Reverse(skew),
                std::cmp::Reverse(**s),
            )
        })
        .unwrap_or(&[[1, 1]; 3])
}

/// Spatial loop pairs: ordered pairs of distinct loops.
pub fn spatial_pairs(loops: usize) -> Vec<[usize; 2]> {
    if loops == 1 {
        return vec![[0, 0]];
    }
    (0..loops)
        .flat_map(|a| (0..loops).filter(move |&b| b != a).map(move |b| [a, b]))
        .collect()
}

/// Normalized features of the Bayes fields: log-scaled array dimensions
/// followed by one-hot spatial loops per level and axis.
pub fn arch_features(low: &ArchLow, loops: usize, pe_limit: u64) -> Vec<f64> {
    let scale = (pe_limit.max(2) as f64).log2();
    let mut x: Vec<f64> = low
        .shape
        .iter()
        .flatten()
        .map(|&d| (d as f64).log2() / scale)
        .collect();
    for pair in &low.spatial {
        for &l in pair {
            x.extend((0..loops).map(|i| if i == l { 1.0 } else { 0.0 }));
        }
    }
    x
}

/// Deterministic starting genome: default shape and the default
/// output-parallel mapping.
pub fn default_genome(
    w: &LoopNest,
    tensors: &[Tensor],
    caps: &BufferCaps,
    catalog: &[Shape],
) -> ArchGenome {
    let shape = default_shape(catalog);
    let g = |[r, c]: [u32; 2]| Grid::new(r, c);
    let cluster = Cluster::new(g(shape[0]), g(shape[1]), g(shape[2]));
    ArchGenome::from_spec(&cluster, &default_mapping(w, &cluster, tensors, caps))
}

fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// Snaps the requested tiles into a legal nesting in place.
pub fn normalize_high(h: &mut ArchHigh, ext: &[u64]) {
    h.tiling = snap_tiles([&h.tiling[0], &h.tiling[1], &h.tiling[2]], ext);
}

/// One annealing move. With probability `tile_prob` a tile steps to the
/// next larger or smaller divisor of its enclosing tile (whichever exists
/// when only one does); otherwise two loops of one level's order swap.
/// Inner tiles are re-snapped afterwards.
pub fn arch_neighbor<R: Rng + ?Sized>(
    h: &ArchHigh,
    ext: &[u64],
    tile_prob: f64,
    rng: &mut R,
) -> ArchHigh {
    let mut next = h.clone();
    let n = ext.len();
    let level = rng.gen_range(0..3);
    if n < 2 || rng.gen_bool(tile_prob) {
        let l = rng.gen_range(0..n);
        let outer = if level == 0 {
            ext[l]
        } else {
            next.tiling[level - 1][l]
        };
        let divs = divisors(outer);
        let cur = next.tiling[level][l];
        let i = divs.iter().rposition(|&d| d <= cur).unwrap_or(0);
        let up = i + 1 < divs.len();
        let j = match (i > 0, up) {
            (true, true) if rng.gen_bool(0.5) => i + 1,
            (true, _) => i - 1,
            (false, true) => i + 1,
            (false, false) => i,
        };
        next.tiling[level][l] = divs[j];
    } else {
        let mut pos: Vec<usize> = (0..n).collect();
        pos.shuffle(rng);
        next.order[level].swap(pos[0], pos[1]);
    }
    normalize_high(&mut next, ext);
    next
}

/// A uniformly random genome over the shape catalog and legal fields.
pub fn random_genome<R: Rng + ?Sized>(w: &LoopNest, catalog: &[Shape], rng: &mut R) -> ArchGenome {
    let ext = w.extents();
    let n = ext.len();
    let pairs = spatial_pairs(n);
    let shape = *catalog.choose(rng).unwrap_or(&[[1, 1]; 3]);
    let spatial = [0; 3].map(|_| *pairs.choose(rng).expect("nonempty"));
    let order = [0; 3].map(|_| {
        let mut o: Vec<usize> = (0..n).collect();
        o.shuffle(rng);
        o
    });
    let mut tiling: [Vec<u64>; 3] = Default::default();
    let mut outer = ext.clone();
    for t in tiling.iter_mut() {
        *t = outer
            .iter()
            .map(|&o| *divisors(o).choose(rng).expect("nonempty"))
            .collect();
        outer = t.clone();
    }
    ArchGenome {
        low: ArchLow { shape, spatial },
        high: ArchHigh { order, tiling },
    }
}

/// A stage-one design kept on a workload's front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDesign {
    pub genome: ArchGenome,
    pub cluster: Cluster,
    pub spec: MapSpec,
    pub metrics: Metrics,
}
