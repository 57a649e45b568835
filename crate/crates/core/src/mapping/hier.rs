use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Cluster, EngineCoord, Level, MapSpec};
use crate::error::{Error, Result};
use crate::workload::{instance_count, LoopNest};

/// Upper bound on explicit instance enumeration.
pub const MAX_ENUMERATED_INSTANCES: u64 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub point: Vec<u64>,
    pub engine: EngineCoord,
    pub time: Vec<u64>,
}

impl Instance {
    /// Execution-order key: chiplet, core, PE, then local time.
    pub fn key(&self) -> (EngineCoord, &[u64]) {
        (self.engine, &self.time)
    }
}

/// A reduced vertex: the lower-level vertices (or instances) it gathers and
/// the engine path it is assigned to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierVertex {
    pub engine: Vec<(u32, u32)>,
    pub children: Vec<usize>,
}

/// Input data forwarded between sibling engines: `from` is the first engine
/// (in coordinate order) touching the elements, `to` another one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierEdge {
    pub from: usize,
    pub to: usize,
    pub tensor: String,
    pub elements: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierLevel {
    pub level: Level,
    pub vertices: Vec<HierVertex>,
    pub edges: Vec<HierEdge>,
}

/// Hierarchical instance graph of one workload. `instances` are sorted in
/// execution order; `levels` are innermost first (PE, core, chiplet), and
/// each level's vertices partition the level below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierGraph {
    pub workload: LoopNest,
    pub cluster: Cluster,
    pub spec: MapSpec,
    pub instances: Vec<Instance>,
    pub levels: Vec<HierLevel>,
    pub warnings: Vec<String>,
}

impl HierGraph {
    pub fn level(&self, level: Level) -> &HierLevel {
        self.levels
            .iter()
            .find(|l| l.level == level)
            .expect("all levels are built")
    }

    /// Instances assigned to each engine of a level, in vertex order.
    pub fn instances_per_engine(&self, level: Level) -> Vec<u64> {
        let mut counts = Vec::new();
        for v in &self.level(level).vertices {
            counts.push(self.leaf_count(level, v));
        }
        counts
    }

    fn leaf_count(&self, level: Level, v: &HierVertex) -> u64 {
        match level {
            Level::Pe => v.children.len() as u64,
            Level::Core => v
                .children
                .iter()
                .map(|&c| self.level(Level::Pe).vertices[c].children.len() as u64)
                .sum(),
            Level::Chiplet => v
                .children
                .iter()
                .map(|&c| self.leaf_count(Level::Core, &self.level(Level::Core).vertices[c]))
                .sum(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hier graph serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceRule {
    /// Gather instances per engine of the given level.
    PerEngine(Level),
    /// Gather instances per iteration of a pipeline-stage loop.
    PerStageIteration(usize),
}

/// Groups the instances of `g` into new vertices under `rule`. Vertices are
/// ordered by their key; children keep execution order.
pub fn reduce_instances(g: &HierGraph, rule: ReduceRule) -> Vec<HierVertex> {
    let mut groups: BTreeMap<Vec<u64>, (Vec<(u32, u32)>, Vec<usize>)> = BTreeMap::new();
    for (n, inst) in g.instances.iter().enumerate() {
        let (key, engine) = match rule {
            ReduceRule::PerEngine(level) => {
                let depth = level.index() + 1;
                let path = inst.engine[..depth].to_vec();
                (
                    path.iter()
                        .flat_map(|&(r, c)| [r as u64, c as u64])
                        .collect(),
                    path,
                )
            }
            ReduceRule::PerStageIteration(l) => (vec![inst.point[l]], Vec::new()),
        };
        groups
            .entry(key)
            .or_insert_with(|| (engine, Vec::new()))
            .1
            .push(n);
    }
    groups
        .into_values()
        .map(|(engine, children)| HierVertex { engine, children })
        .collect()
}

/// Assigns every loop instance of `w` a `(chiplet, core, PE)` coordinate and a
/// local time, then builds the hierarchy by alternating map and reduce: PE
/// vertices gather instances, core vertices gather PE vertices, chiplet
/// vertices gather core vertices.
pub fn map_instances(w: &LoopNest, spec: &MapSpec, cluster: &Cluster) -> Result<HierGraph> {
    let warnings = spec.validate(w, cluster)?;
    let total = instance_count(w, None);
    if total > MAX_ENUMERATED_INSTANCES {
        return Err(Error::Mapping(format!(
            "{total} instances exceed the enumeration limit {MAX_ENUMERATED_INSTANCES}"
        )));
    }
    let mut instances = Vec::with_capacity(total as usize);
    w.for_each_instance(|p| {
        instances.push(Instance {
            point: p.to_vec(),
            engine: spec.engine(cluster, p),
            time: spec.local_time(p),
        })
    });
    instances.sort_by(|a, b| a.key().cmp(&b.key()));

    let mut g = HierGraph {
        workload: w.clone(),
        cluster: *cluster,
        spec: spec.clone(),
        instances,
        levels: Vec::new(),
        warnings,
    };

    let pe_vertices = reduce_instances(&g, ReduceRule::PerEngine(Level::Pe));
    let core_vertices = gather(&pe_vertices, 2);
    let chiplet_vertices = gather(&core_vertices, 1);
    let pe_edges = forwarding_edges(&g, &pe_vertices, 2);
    let core_edges = forwarding_edges(&g, &core_vertices, 1);
    let chiplet_edges = forwarding_edges(&g, &chiplet_vertices, 0);
    g.levels = vec![
        HierLevel {
            level: Level::Pe,
            vertices: pe_vertices,
            edges: pe_edges,
        },
        HierLevel {
            level: Level::Core,
            vertices: core_vertices,
            edges: core_edges,
        },
        HierLevel {
            level: Level::Chiplet,
            vertices: chiplet_vertices,
            edges: chiplet_edges,
        },
    ];
    Ok(g)
}

/// Reduce rule "gather per engine" applied to lower-level vertices: groups by
/// the first `depth` path entries.
fn gather(lower: &[HierVertex], depth: usize) -> Vec<HierVertex> {
    let mut groups: BTreeMap<Vec<(u32, u32)>, Vec<usize>> = BTreeMap::new();
    for (n, v) in lower.iter().enumerate() {
        groups
            .entry(v.engine[..depth].to_vec())
            .or_default()
            .push(n);
    }
    groups
        .into_iter()
        .map(|(engine, children)| HierVertex { engine, children })
        .collect()
}

/// Leaf instances below each vertex of a level.
fn leaves(g: &HierGraph, vertices: &[HierVertex], depth: usize) -> Vec<Vec<usize>> {
    // Vertices at any depth partition instances by engine prefix, so recover
    // membership from the instances directly.
    let index: HashMap<Vec<(u32, u32)>, usize> = vertices
        .iter()
        .enumerate()
        .map(|(n, v)| (v.engine.clone(), n))
        .collect();
    let mut out = vec![Vec::new(); vertices.len()];
    for (n, inst) in g.instances.iter().enumerate() {
        out[index[&inst.engine[..depth + 1].to_vec()]].push(n);
    }
    out
}

fn forwarding_edges(g: &HierGraph, vertices: &[HierVertex], depth: usize) -> Vec<HierEdge> {
    let members = leaves(g, vertices, depth);
    let w = &g.workload;
    let mut touch: HashMap<(Vec<(u32, u32)>, usize, Vec<u64>), BTreeSet<usize>> = HashMap::new();
    for (v, insts) in members.iter().enumerate() {
        let parent = vertices[v].engine[..depth].to_vec();
        for &i in insts {
            let p = &g.instances[i].point;
            for (t, a) in w.inputs.iter().enumerate() {
                touch
                    .entry((parent.clone(), t, a.element(p)))
                    .or_default()
                    .insert(v);
            }
        }
    }
    let mut counts: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    for ((_, t, _), set) in touch {
        let mut it = set.into_iter();
        let first = it.next().expect("non-empty");
        for other in it {
            *counts.entry((first, other, t)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((from, to, t), elements)| HierEdge {
            from,
            to,
            tensor: w.inputs[t].tensor.clone(),
            elements,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::test_util::matmul;
    use crate::mapping::{Grid, LevelMap};

    fn output_parallel(n: u64, pe: Grid) -> (LoopNest, MapSpec, Cluster) {
        let w = matmul("mm", n, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.pe = LevelMap {
            spatial: [0, 1],
            order: vec![0, 1, 2],
            tile: vec![1, 1, 1],
        };
        (w, spec, Cluster::new(Grid::UNIT, Grid::UNIT, pe))
    }

    #[test]
    fn sample_instance_lands_on_pe_1_0() {
        let (w, spec, cl) = output_parallel(2, Grid::new(2, 2));
        let g = map_instances(&w, &spec, &cl).unwrap();
        let inst = g.instances.iter().find(|i| i.point == [1, 0, 1]).unwrap();
        assert_eq!(inst.engine[2], (1, 0));
    }

    #[test]
    fn degenerate_cluster_is_sequential() {
        let w = matmul("mm", 3, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.pe.order = vec![2, 0, 1];
        let cl = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT);
        let g = map_instances(&w, &spec, &cl).unwrap();
        assert!(g.instances.iter().all(|i| i.engine == [(0, 0); 3]));
        let order: Vec<Vec<u64>> = g.instances.iter().map(|i| i.point.clone()).collect();
        let mut expected = order.clone();
        expected.sort_by_key(|p| (p[2], p[0], p[1]));
        assert_eq!(order, expected);
        assert_eq!(g.level(Level::Chiplet).vertices.len(), 1);
    }

    #[test]
    fn output_parallel_buckets_sixteen_per_pe() {
        let (w, spec, cl) = output_parallel(4, Grid::new(2, 2));
        let g = map_instances(&w, &spec, &cl).unwrap();
        // Brute-force bucketing of every instance by (i % 2, j % 2).
        let mut buckets = [[0u64; 2]; 2];
        w.for_each_instance(|p| buckets[(p[0] % 2) as usize][(p[1] % 2) as usize] += 1);
        let counts = g.instances_per_engine(Level::Pe);
        assert_eq!(counts, vec![16, 16, 16, 16]);
        assert!(buckets.iter().flatten().all(|&b| b == 16));
        for l in Level::ALL {
            assert_eq!(g.instances_per_engine(l).iter().sum::<u64>(), 64);
        }
    }

    #[test]
    fn input_reuse_is_forwarded_between_cores() {
        // Output-parallel over a 2x2 core array, one PE each.
        let w = matmul("mm", 2, "A", "B", "C");
        let mut spec = MapSpec::single_engine(&w);
        spec.core = LevelMap {
            spatial: [0, 1],
            order: vec![0, 1, 2],
            tile: vec![1, 1, 2],
        };
        let cl = Cluster::new(Grid::UNIT, Grid::new(2, 2), Grid::UNIT);
        let g = map_instances(&w, &spec, &cl).unwrap();
        let core = g.level(Level::Core);
        let a_edge = core
            .edges
            .iter()
            .find(|e| e.tensor == "A" && e.from == 0 && e.to == 1)
            .expect("A row forwarded core 0 -> core 1");
        assert_eq!(a_edge.elements, 2);
    }

    #[test]
    fn stage_iteration_reduce() {
        let (w, spec, cl) = output_parallel(2, Grid::UNIT);
        let g = map_instances(&w, &spec, &cl).unwrap();
        let v = reduce_instances(&g, ReduceRule::PerStageIteration(0));
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.children.len() == 4));
    }
}
