use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Cluster, EngineCoord, HierGraph, LevelMap, MapSpec};
use crate::error::{Error, Result};
use crate::workload::{bits_to_bytes, for_each_point, LoopNest, Tensor, TensorAccess};

/// Dependence edges between two PE partitions, aggregated over elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaEdge {
    pub src: EngineCoord,
    pub dst: EngineCoord,
    pub elements: u64,
    pub bytes: u64,
}

/// Elements moving from a producer cluster chiplet to a consumer cluster
/// chiplet. Coordinates are cluster-local; bindings map them to system ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipletFlow {
    pub src: (u32, u32),
    pub dst: (u32, u32),
    pub elements: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaSet {
    pub tensor: String,
    pub producer: String,
    pub consumer: String,
    pub element_bits: u32,
    pub edges: Vec<OmegaEdge>,
    pub chiplet_flows: Vec<ChipletFlow>,
    pub total_elements: u64,
    pub total_bytes: u64,
}

impl OmegaSet {
    fn from_pairs(
        tensor: &Tensor,
        producer: &str,
        consumer: &str,
        pairs: impl IntoIterator<Item = (EngineCoord, EngineCoord)>,
    ) -> Self {
        let bits = tensor.element_bits;
        let mut edges: BTreeMap<(EngineCoord, EngineCoord), u64> = BTreeMap::new();
        for p in pairs {
            *edges.entry(p).or_default() += 1;
        }
        let mut flows: BTreeMap<((u32, u32), (u32, u32)), u64> = BTreeMap::new();
        for (&(s, d), &n) in &edges {
            *flows.entry((s[0], d[0])).or_default() += n;
        }
        let total_elements = edges.values().sum();
        Self {
            tensor: tensor.name.clone(),
            producer: producer.into(),
            consumer: consumer.into(),
            element_bits: bits,
            edges: edges
                .into_iter()
                .map(|((src, dst), elements)| OmegaEdge {
                    src,
                    dst,
                    elements,
                    bytes: bits_to_bytes(elements, bits),
                })
                .collect(),
            chiplet_flows: flows_from(flows, bits),
            total_elements,
            total_bytes: bits_to_bytes(total_elements, bits),
        }
    }

    /// Deterministic text dump, one edge per line.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "omega {} {} -> {} elements={} bytes={}\n",
            self.tensor, self.producer, self.consumer, self.total_elements, self.total_bytes
        );
        for e in &self.edges {
            out.push_str(&format!("  {:?} -> {:?} {}\n", e.src, e.dst, e.elements));
        }
        out
    }
}

fn flows_from(flows: BTreeMap<((u32, u32), (u32, u32)), u64>, bits: u32) -> Vec<ChipletFlow> {
    flows
        .into_iter()
        .map(|((src, dst), elements)| ChipletFlow {
            src,
            dst,
            elements,
            bytes: bits_to_bytes(elements, bits),
        })
        .collect()
}

fn access_of<'a>(w: &'a LoopNest, tensor: &str, write: bool) -> Result<&'a TensorAccess> {
    let found = if write {
        w.writes(tensor).then_some(&w.output)
    } else {
        w.reads(tensor)
    };
    found.ok_or_else(|| {
        Error::Mapping(format!(
            "`{}` does not {} `{tensor}`",
            w.name,
            if write { "write" } else { "read" }
        ))
    })
}

/// Element-exact dependence set: for each element of `f` read by `g2`, one
/// edge from the last `g1` instance writing it to the first `g2` instance
/// reading it, in `(chiplet, core, PE, local time)` order.
pub fn derive_dependence(g1: &HierGraph, g2: &HierGraph, f: &Tensor) -> Result<OmegaSet> {
    let wa = access_of(&g1.workload, &f.name, true)?;
    let ra = access_of(&g2.workload, &f.name, false)?;
    let mut last: HashMap<Vec<u64>, EngineCoord> = HashMap::new();
    for inst in &g1.instances {
        last.insert(wa.element(&inst.point), inst.engine);
    }
    let mut first: BTreeMap<Vec<u64>, EngineCoord> = BTreeMap::new();
    for inst in &g2.instances {
        first.entry(ra.element(&inst.point)).or_insert(inst.engine);
    }
    let mut pairs = Vec::with_capacity(first.len());
    for (element, dst) in first {
        let src = *last
            .get(&element)
            .ok_or_else(|| Error::DanglingDependence {
                tensor: f.name.clone(),
                element: element.clone(),
            })?;
        pairs.push((src, dst));
    }
    Ok(OmegaSet::from_pairs(
        f,
        &g1.workload.name,
        &g2.workload.name,
        pairs,
    ))
}

/// Chiplet-level aggregates of the dependence set without enumerating every
/// instance: only the loops of the tensor access and representative values of
/// the chiplet-level spatial loops are visited.
pub fn chiplet_traffic(
    producer: (&LoopNest, &MapSpec, &Cluster),
    consumer: (&LoopNest, &MapSpec, &Cluster),
    f: &Tensor,
) -> Result<Vec<ChipletFlow>> {
    const NONE: u32 = u32::MAX;
    let n = f.elements() as usize;
    let mut src = vec![NONE; n];
    let mut dst = vec![NONE; n];

    let (w1, s1, c1) = producer;
    let wa = access_of(w1, &f.name, true)?;
    visit(w1, &s1.chiplet, c1, wa, f, |e, chip| {
        if src[e] == NONE || chip > src[e] {
            src[e] = chip;
        }
    });
    let (w2, s2, c2) = consumer;
    let ra = access_of(w2, &f.name, false)?;
    visit(w2, &s2.chiplet, c2, ra, f, |e, chip| {
        if chip < dst[e] {
            dst[e] = chip;
        }
    });

    let mut flows: BTreeMap<((u32, u32), (u32, u32)), u64> = BTreeMap::new();
    for (e, (&s, &d)) in src.iter().zip(&dst).enumerate() {
        if d == NONE {
            continue;
        }
        if s == NONE {
            return Err(Error::DanglingDependence {
                tensor: f.name.clone(),
                element: f.unlinear(e as u64),
            });
        }
        *flows
            .entry((c1.chiplet.coord(s as usize), c2.chiplet.coord(d as usize)))
            .or_default() += 1;
    }
    Ok(flows_from(flows, f.element_bits))
}

/// Calls `f(element, chiplet index)` for every distinct pair reachable by the
/// instances of `w`.
fn visit(
    w: &LoopNest,
    chip: &LevelMap,
    cluster: &Cluster,
    access: &TensorAccess,
    tensor: &Tensor,
    mut f: impl FnMut(usize, u32),
) {
    let ext = w.extents();
    let grid = cluster.chiplet;
    let used = access.loops();
    let mut loops = used.clone();
    let mut sizes: Vec<u64> = used.iter().map(|&l| ext[l]).collect();
    let mut stride = vec![1u64; used.len()];
    for (axis, &l) in chip.spatial.iter().enumerate() {
        let span = if axis == 0 { grid.rows } else { grid.cols } as u64;
        if span > 1 && !loops.contains(&l) {
            let tiles = ext[l].div_ceil(chip.tile[l]);
            loops.push(l);
            sizes.push(tiles.min(span));
            stride.push(chip.tile[l]);
        }
    }
    let mut point = vec![0u64; ext.len()];
    for_each_point(&sizes, |sub| {
        for ((&l, &x), &s) in loops.iter().zip(sub).zip(&stride) {
            point[l] = x * s;
        }
        let element = access.element(&point);
        let idx = tensor.linear(&element) as usize;
        let c = chip.coord(grid, &point);
        f(idx, grid.index(c) as u32);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::test_util::{matmul, nest};
    use crate::mapping::{map_instances, Grid};

    fn tensor(name: &str, dims: &[u64]) -> Tensor {
        Tensor {
            name: name.into(),
            dims: dims.to_vec(),
            element_bits: 8,
        }
    }

    fn single(w: &LoopNest) -> (MapSpec, Cluster) {
        let mut s = MapSpec::single_engine(w);
        s.pe.tile = w.extents();
        (s, Cluster::new(Grid::UNIT, Grid::UNIT, Grid::UNIT))
    }

    #[test]
    fn element_edge_goes_from_last_writer() {
        // Producer PEs split k, so C[0,0] is written on PE (0,0) then (0,1).
        let p = matmul("p", 2, "A", "B", "C");
        let mut sp = MapSpec::single_engine(&p);
        sp.pe.spatial = [0, 2];
        let cp = Cluster::new(Grid::UNIT, Grid::UNIT, Grid::new(1, 2));
        let c = matmul("c", 2, "C", "D", "E");
        let (sc, cc) = single(&c);
        let g1 = map_instances(&p, &sp, &cp).unwrap();
        let g2 = map_instances(&c, &sc, &cc).unwrap();
        let om = derive_dependence(&g1, &g2, &tensor("C", &[2, 2])).unwrap();
        assert_eq!(om.total_elements, 4);
        assert_eq!(om.edges.len(), 1);
        assert_eq!(om.edges[0].src[2], (0, 1));
    }

    #[test]
    fn single_instance_pair_has_one_edge() {
        let p = nest("p", &[("i", 1)], ("X", &["i"]), &[("W", &["i"])]);
        let c = nest("c", &[("i", 1)], ("Y", &["i"]), &[("X", &["i"])]);
        let (sp, cp) = single(&p);
        let (sc, cc) = single(&c);
        let g1 = map_instances(&p, &sp, &cp).unwrap();
        let g2 = map_instances(&c, &sc, &cc).unwrap();
        let om = derive_dependence(&g1, &g2, &tensor("X", &[1])).unwrap();
        assert_eq!(om.edges.len(), 1);
        assert_eq!(om.total_bytes, 1);
    }

    #[test]
    fn consumer_split_by_rows() {
        let p = matmul("p", 4, "A", "B", "C");
        let (sp, cp) = single(&p);
        let c = matmul("c", 4, "C", "D", "E");
        let mut sc = MapSpec::single_engine(&c);
        sc.chiplet.tile = vec![1, 4, 4];
        sc.core.tile = vec![1, 4, 4];
        sc.chiplet.spatial = [1, 0];
        let cc = Cluster::new(Grid::new(1, 2), Grid::UNIT, Grid::UNIT);
        let g1 = map_instances(&p, &sp, &cp).unwrap();
        let g2 = map_instances(&c, &sc, &cc).unwrap();
        let f = tensor("C", &[4, 4]);
        let om = derive_dependence(&g1, &g2, &f).unwrap();
        // Rows 0,2 go to chiplet (0,0) and rows 1,3 to (0,1).
        let by_dst: Vec<u64> = om.chiplet_flows.iter().map(|fl| fl.bytes).collect();
        assert_eq!(by_dst, vec![8, 8]);
        let fast = chiplet_traffic((&p, &sp, &cp), (&c, &sc, &cc), &f).unwrap();
        assert_eq!(fast, om.chiplet_flows);
    }

    #[test]
    fn dangling_read_is_an_error() {
        let p = nest("p", &[("i", 2)], ("X", &["i"]), &[("W", &["i"])]);
        let c = nest("c", &[("i", 3)], ("Y", &["i"]), &[("X", &["i"])]);
        let (sp, cp) = single(&p);
        let (sc, cc) = single(&c);
        let g1 = map_instances(&p, &sp, &cp).unwrap();
        let g2 = map_instances(&c, &sc, &cc).unwrap();
        let f = tensor("X", &[3]);
        assert!(matches!(
            derive_dependence(&g1, &g2, &f),
            Err(Error::DanglingDependence { .. })
        ));
        assert!(chiplet_traffic((&p, &sp, &cp), (&c, &sc, &cc), &f).is_err());
    }
}
