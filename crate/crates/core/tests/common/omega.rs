//! Brute-force dependence oracle: enumerates every loop instance of both
//! workloads and matches elements directly.

use std::collections::{BTreeMap, HashMap};

use chiplet_dse::mapping::{Cluster, Grid, LevelMap, MapSpec};
use chiplet_dse::workload::{LoopNest, TensorAccess};

pub type Coord = [(u32, u32); 3];

fn coord(m: &LevelMap, g: Grid, p: &[u64]) -> (u32, u32) {
    let [a, b] = m.spatial;
    (
        ((p[a] / m.tile[a]) % g.rows as u64) as u32,
        ((p[b] / m.tile[b]) % g.cols as u64) as u32,
    )
}

fn key(spec: &MapSpec, c: &Cluster, p: &[u64]) -> (Coord, Vec<u64>) {
    let levels = [
        (&spec.chiplet, c.chiplet),
        (&spec.core, c.core),
        (&spec.pe, c.pe),
    ];
    let engine = levels.map(|(m, g)| coord(m, g, p));
    let mut time = Vec::new();
    for (m, _) in levels {
        time.extend(m.order.iter().map(|&l| p[l] / m.tile[l]));
    }
    time.extend(spec.pe.order.iter().map(|&l| p[l]));
    (engine, time)
}

fn points(w: &LoopNest) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for l in &w.loops {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l.extent).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

fn element(a: &TensorAccess, p: &[u64]) -> Vec<u64> {
    a.index
        .iter()
        .map(|e| e.terms.iter().map(|t| t.coeff * p[t.var]).sum::<u64>() + e.offset)
        .collect()
}

/// `(src engine, dst engine) -> elements`: each element read by the consumer
/// goes from its last writer to its first reader.
pub fn brute_force(
    producer: (&LoopNest, &MapSpec, &Cluster),
    consumer: (&LoopNest, &MapSpec, &Cluster),
    tensor: &str,
) -> BTreeMap<(Coord, Coord), u64> {
    let (w1, s1, c1) = producer;
    let (w2, s2, c2) = consumer;
    let wa = &w1.output;
    assert_eq!(wa.tensor, tensor);
    let ra = w2.inputs.iter().find(|a| a.tensor == tensor).unwrap();
    let mut last: HashMap<Vec<u64>, (Coord, Vec<u64>)> = HashMap::new();
    for p in points(w1) {
        let k = key(s1, c1, &p);
        let e = last.entry(element(wa, &p)).or_insert_with(|| k.clone());
        if k > *e {
            *e = k;
        }
    }
    let mut first: HashMap<Vec<u64>, (Coord, Vec<u64>)> = HashMap::new();
    for p in points(w2) {
        let k = key(s2, c2, &p);
        let e = first.entry(element(ra, &p)).or_insert_with(|| k.clone());
        if k < *e {
            *e = k;
        }
    }
    let mut edges = BTreeMap::new();
    for (el, (dst, _)) in first {
        let (src, _) = &last[&el];
        *edges.entry((*src, dst)).or_insert(0) += 1;
    }
    edges
}

/// A producer/consumer pair sharing tensor `X`, as workload-file JSON.
/// Kinds: matmul or 1-D/2-D convolution on either side. Each side has at
/// most `max_instances` loop instances.
pub fn random_pair_json<R: rand::Rng>(rng: &mut R, max_instances: u64) -> String {
    loop {
        let kinds = [rng.gen_range(0..3), rng.gen_range(0..3)];
        if let Some(j) = pair_json(rng, kinds, max_instances) {
            return j;
        }
    }
}

fn small<R: rand::Rng>(rng: &mut R) -> u64 {
    [1, 2, 3, 4, 6, 8, 12, 16, 24][rng.gen_range(0..9)]
}

/// Producer writes `X` with shape `dims`; returns `(loops, access)` json
/// fragments for each side.
fn pair_json<R: rand::Rng>(rng: &mut R, kinds: [u8; 2], max: u64) -> Option<String> {
    let bits = [8, 16][rng.gen_range(0..2)];
    // Producer and the shape of X it writes.
    let (p, dims): (String, Vec<u64>) = match kinds[0] {
        0 => {
            let (i, j, k) = (small(rng), small(rng), small(rng));
            (
                nest(
                    "p",
                    &[("i", i), ("j", j), ("k", k)],
                    "X",
                    &["i", "j"],
                    &[("A", &["i", "k"]), ("B", &["k", "j"])],
                ),
                vec![i, j],
            )
        }
        1 => {
            let (k, c, pp, r) = (small(rng), small(rng), small(rng), rng.gen_range(1..=3));
            (
                nest(
                    "p",
                    &[("k", k), ("c", c), ("p", pp), ("r", r)],
                    "X",
                    &["k", "p"],
                    &[("I", &["c", "p+r"]), ("W", &["k", "c", "r"])],
                ),
                vec![k, pp],
            )
        }
        _ => {
            let (k, c, pp, q) = (
                small(rng),
                rng.gen_range(1..=4),
                rng.gen_range(1..=10),
                rng.gen_range(1..=10),
            );
            let (r, s) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
            (
                nest(
                    "p",
                    &[("k", k), ("c", c), ("p", pp), ("q", q), ("r", r), ("s", s)],
                    "X",
                    &["k", "p", "q"],
                    &[("I", &["c", "p+r", "q+s"]), ("W", &["k", "c", "r", "s"])],
                ),
                vec![k, pp, q],
            )
        }
    };
    // Consumer reading all of X.
    let c = match (kinds[1], dims.len()) {
        (0, 2) => {
            let m = small(rng);
            nest(
                "c",
                &[("i", dims[0]), ("j", m), ("k", dims[1])],
                "Y",
                &["i", "j"],
                &[("X", &["i", "k"]), ("V", &["k", "j"])],
            )
        }
        (1, 2) => {
            let r = rng.gen_range(1..=dims[1].min(3));
            let k = small(rng);
            nest(
                "c",
                &[("k", k), ("c", dims[0]), ("p", dims[1] - r + 1), ("r", r)],
                "Y",
                &["k", "p"],
                &[("X", &["c", "p+r"]), ("V", &["k", "c", "r"])],
            )
        }
        (_, 3) => {
            let (r, s) = (
                rng.gen_range(1..=dims[1].min(3)),
                rng.gen_range(1..=dims[2].min(3)),
            );
            let k = rng.gen_range(1..=4);
            nest(
                "c",
                &[
                    ("k", k),
                    ("c", dims[0]),
                    ("p", dims[1] - r + 1),
                    ("q", dims[2] - s + 1),
                    ("r", r),
                    ("s", s),
                ],
                "Y",
                &["k", "p", "q"],
                &[("X", &["c", "p+r", "q+s"]), ("V", &["k", "c", "r", "s"])],
            )
        }
        _ => return None,
    };
    let json = format!(
        r#"{{"tensors": {{"X": {{"bits": {bits}}}}}, "workloads": [{p}, {c}], "edges": [["p", "c", "X"]]}}"#
    );
    let g = chiplet_dse::workload::parse_workload_graph(&json).ok()?;
    let ok = g
        .workloads
        .iter()
        .all(|w| w.extents().iter().product::<u64>() <= max);
    ok.then_some(json)
}

fn nest(
    name: &str,
    loops: &[(&str, u64)],
    out: &str,
    out_idx: &[&str],
    ins: &[(&str, &[&str])],
) -> String {
    let q = |v: &[&str]| {
        v.iter()
            .map(|s| format!("\"{s}\""))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let loops = loops
        .iter()
        .map(|(n, e)| format!("[\"{n}\", {e}]"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut access = vec![format!("\"{out}\": [{}]", q(out_idx))];
    access.extend(ins.iter().map(|(t, idx)| format!("\"{t}\": [{}]", q(idx))));
    let reads = ins
        .iter()
        .map(|(t, _)| format!("\"{t}\""))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        r#"{{"name": "{name}", "loops": [{loops}], "writes": "{out}", "reads": [{reads}], "access": {{{}}}, "pipeline": "none"}}"#,
        access.join(", ")
    )
}

/// A random legal cluster and mapping for `w`.
pub fn random_mapping<R: rand::Rng>(rng: &mut R, w: &LoopNest) -> (Cluster, MapSpec) {
    use rand::seq::SliceRandom;
    let ext = w.extents();
    let n = ext.len();
    let mut grid =
        |choices: &[u32]| Grid::new(*choices.choose(rng).unwrap(), *choices.choose(rng).unwrap());
    let cluster = Cluster::new(grid(&[1, 2]), grid(&[1, 2]), grid(&[1, 2, 4]));
    let mut requested: [Vec<u64>; 3] = Default::default();
    for t in requested.iter_mut() {
        *t = ext.iter().map(|&e| rng.gen_range(1..=e)).collect();
    }
    let tiles =
        chiplet_dse::mapping::snap_tiles([&requested[0], &requested[1], &requested[2]], &ext);
    let mut level = |tile: Vec<u64>| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n);
        if n > 1 {
            while b == a {
                b = rng.gen_range(0..n);
            }
        }
        LevelMap {
            spatial: [a, b],
            order,
            tile,
        }
    };
    let [t0, t1, t2] = tiles;
    let spec = MapSpec {
        chiplet: level(t0),
        core: level(t1),
        pe: level(t2),
    };
    (cluster, spec)
}
