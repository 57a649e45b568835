//! JSON workload description.
//!
//! ```json
//! {
//!   "tensors": { "A": { "dims": [64, 64], "bits": 8 } },
//!   "workloads": [
//!     { "name": "mm0", "loops": [["i", 64], ["j", 64], ["k", 64]],
//!       "writes": "C", "reads": ["A", "B"],
//!       "access": { "A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"] } }
//!   ],
//!   "edges": [["mm0", "mm1", "C"]]
//! }
//! ```
//!
//! `tensors` is optional; missing shapes are inferred from the accesses and
//! widths default to 8 bits. Optional per-workload keys: `macs` (MACs per
//! instance), `epilogue` (fused elementwise ops per output element) and
//! `pipeline` (pipeline-stage loop name, `"none"` to disable; defaults to an
//! outermost loop called `b` or `batch`). Edge endpoints may be names or indices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dependence, IndexExpr, Loop, LoopNest, Tensor, TensorAccess, WorkloadGraph};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGraph {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tensors: BTreeMap<String, FileTensor>,
    workloads: Vec<FileWorkload>,
    #[serde(default)]
    edges: Vec<(Endpoint, Endpoint, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTensor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<u64>>,
    #[serde(default = "default_bits")]
    bits: u32,
}

fn default_bits() -> u32 {
    8
}

fn default_macs() -> u32 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileWorkload {
    name: String,
    loops: Vec<(String, u64)>,
    writes: String,
    reads: Vec<String>,
    access: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_macs")]
    macs: u32,
    #[serde(default)]
    epilogue: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pipeline: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Index(usize),
    Name(String),
}

pub fn parse_workload_graph(text: &str) -> Result<WorkloadGraph> {
    let file: FileGraph = serde_json::from_str(text).map_err(Error::from_json)?;
    let mut workloads = Vec::with_capacity(file.workloads.len());
    for fw in &file.workloads {
        workloads.push(convert_workload(fw)?);
    }

    let mut names: Vec<String> = Vec::new();
    for w in &workloads {
        for a in w.accesses() {
            if !names.contains(&a.tensor) {
                names.push(a.tensor.clone());
            }
        }
    }
    for name in file.tensors.keys() {
        if !names.contains(name) {
            return Err(Error::Workload {
                workload: String::new(),
                message: format!("tensor `{name}` declared but never accessed"),
            });
        }
    }
    names.sort();
    let tensors = names
        .into_iter()
        .map(|name| {
            let declared = file.tensors.get(&name);
            let dims = match declared.and_then(|t| t.dims.clone()) {
                Some(d) => d,
                None => infer_dims(&workloads, &name),
            };
            Tensor {
                element_bits: declared.map_or(8, |t| t.bits),
                dims,
                name,
            }
        })
        .collect();

    let resolve = |ep: &Endpoint| -> Result<usize> {
        match ep {
            Endpoint::Index(i) if *i < workloads.len() => Ok(*i),
            Endpoint::Index(i) => Err(Error::Workload {
                workload: i.to_string(),
                message: "edge references a missing workload index".into(),
            }),
            Endpoint::Name(n) => {
                workloads
                    .iter()
                    .position(|w| &w.name == n)
                    .ok_or_else(|| Error::Workload {
                        workload: n.clone(),
                        message: "edge references an unknown workload".into(),
                    })
            }
        }
    };
    let mut edges = Vec::with_capacity(file.edges.len());
    for (p, c, t) in &file.edges {
        edges.push(Dependence {
            producer: resolve(p)?,
            consumer: resolve(c)?,
            tensor: t.clone(),
        });
    }

    let graph = WorkloadGraph {
        tensors,
        workloads,
        edges,
    };
    graph.validate()?;
    Ok(graph)
}

fn infer_dims(workloads: &[LoopNest], tensor: &str) -> Vec<u64> {
    let mut dims: Vec<u64> = Vec::new();
    for w in workloads {
        if let Some(d) = w.implied_dims(tensor) {
            if dims.is_empty() {
                dims = d;
            } else {
                for (a, b) in dims.iter_mut().zip(d) {
                    *a = (*a).max(b);
                }
            }
        }
    }
    dims
}

fn convert_workload(fw: &FileWorkload) -> Result<LoopNest> {
    let fail = |message: String| Error::Workload {
        workload: fw.name.clone(),
        message,
    };
    let loops: Vec<Loop> = fw
        .loops
        .iter()
        .map(|(name, extent)| Loop {
            name: name.clone(),
            extent: *extent,
        })
        .collect();
    let names: Vec<String> = loops.iter().map(|l| l.name.clone()).collect();
    let access = |tensor: &str| -> Result<TensorAccess> {
        let exprs = fw
            .access
            .get(tensor)
            .ok_or_else(|| fail(format!("no access function for `{tensor}`")))?;
        let index = exprs
            .iter()
            .map(|e| IndexExpr::parse(e, &names))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorAccess {
            tensor: tensor.to_string(),
            index,
        })
    };
    for t in fw.access.keys() {
        if t != &fw.writes && !fw.reads.contains(t) {
            return Err(fail(format!(
                "access given for `{t}` which is neither read nor written"
            )));
        }
    }
    let output = access(&fw.writes)?;
    let inputs = fw
        .reads
        .iter()
        .map(|t| access(t))
        .collect::<Result<Vec<_>>>()?;
    let pipeline_loop = match fw.pipeline.as_deref() {
        Some("none") => None,
        Some(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| fail(format!("pipeline loop `{name}` is not declared")))?,
        ),
        None => names
            .first()
            .filter(|n| *n == "b" || *n == "batch")
            .map(|_| 0),
    };
    Ok(LoopNest {
        name: fw.name.clone(),
        loops,
        output,
        inputs,
        macs_per_instance: fw.macs,
        epilogue_ops: fw.epilogue,
        pipeline_loop,
    })
}

pub fn serialize_workload_graph(graph: &WorkloadGraph) -> String {
    let tensors = graph
        .tensors
        .iter()
        .map(|t| {
            (
                t.name.clone(),
                FileTensor {
                    dims: Some(t.dims.clone()),
                    bits: t.element_bits,
                },
            )
        })
        .collect();
    let workloads = graph
        .workloads
        .iter()
        .map(|w| {
            let names = w.loop_names();
            FileWorkload {
                name: w.name.clone(),
                loops: w.loops.iter().map(|l| (l.name.clone(), l.extent)).collect(),
                writes: w.output.tensor.clone(),
                reads: w.inputs.iter().map(|a| a.tensor.clone()).collect(),
                access: w
                    .accesses()
                    .map(|a| {
                        (
                            a.tensor.clone(),
                            a.index.iter().map(|e| e.render(&names)).collect(),
                        )
                    })
                    .collect(),
                macs: w.macs_per_instance,
                epilogue: w.epilogue_ops,
                pipeline: Some(
                    w.pipeline_loop
                        .map_or_else(|| "none".to_string(), |p| names[p].clone()),
                ),
            }
        })
        .collect();
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            (
                Endpoint::Name(graph.workloads[e.producer].name.clone()),
                Endpoint::Name(graph.workloads[e.consumer].name.clone()),
                e.tensor.clone(),
            )
        })
        .collect();
    serde_json::to_string_pretty(&FileGraph {
        tensors,
        workloads,
        edges,
    })
    .expect("workload graph serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_MM: &str = r#"{
      "workloads": [
        {"name": "mm0", "loops": [["i", 4], ["j", 4], ["k", 4]], "writes": "C", "reads": ["A", "B"],
         "access": {"A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"]}},
        {"name": "mm1", "loops": [["i", 4], ["j", 4], ["k", 4]], "writes": "E", "reads": ["C", "D"],
         "access": {"C": ["i", "k"], "D": ["k", "j"], "E": ["i", "j"]}}
      ],
      "edges": [["mm0", "mm1", "C"]]
    }"#;

    #[test]
    fn parses_chain() {
        let g = parse_workload_graph(TWO_MM).unwrap();
        assert_eq!(g.workloads.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.tensor("C").unwrap().dims, vec![4, 4]);
        assert_eq!(g.topological_order().unwrap(), vec![0, 1]);
    }

    #[test]
    fn singleton_graph() {
        let text = r#"{"workloads": [{"name": "mm", "loops": [["i", 2], ["j", 2], ["k", 2]],
            "writes": "C", "reads": ["A", "B"],
            "access": {"A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"]}}]}"#;
        let g = parse_workload_graph(text).unwrap();
        assert_eq!((g.workloads.len(), g.edges.len()), (1, 0));
    }

    #[test]
    fn edge_tensor_not_consumed() {
        let text = TWO_MM.replace(r#"["mm0", "mm1", "C"]"#, r#"["mm0", "mm1", "A"]"#);
        let err = parse_workload_graph(&text).unwrap_err();
        assert!(matches!(err, Error::EdgeNotProduced { .. }), "{err}");

        let text = r#"{
          "workloads": [
            {"name": "p", "loops": [["i", 4]], "writes": "C", "reads": ["A"], "access": {"A": ["i"], "C": ["i"]}},
            {"name": "q", "loops": [["i", 4]], "writes": "E", "reads": ["D"], "access": {"D": ["i"], "E": ["i"]}}
          ],
          "edges": [[0, 1, "C"]]
        }"#;
        let err = parse_workload_graph(text).unwrap_err();
        assert!(
            err.to_string().contains("edge tensor `C` not consumed"),
            "{err}"
        );
    }

    #[test]
    fn rejects_cycles_and_shape_mismatch() {
        let cyc = TWO_MM.replace(
            r#""edges": [["mm0", "mm1", "C"]]"#,
            r#""edges": [["mm0", "mm1", "C"], ["mm1", "mm0", "E"]]"#,
        );
        // mm0 does not read E, so make it do so for a genuine cycle.
        let cyc = cyc
            .replacen(r#""reads": ["A", "B"]"#, r#""reads": ["A", "B", "E"]"#, 1)
            .replacen(
                r#""access": {"A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"]}"#,
                r#""access": {"A": ["i", "k"], "B": ["k", "j"], "C": ["i", "j"], "E": ["i", "j"]}"#,
                1,
            );
        assert!(matches!(parse_workload_graph(&cyc), Err(Error::Cycle(_))));

        let bad = TWO_MM.replacen(
            r#"[["i", 4], ["j", 4], ["k", 4]], "writes": "E""#,
            r#"[["i", 4], ["j", 4], ["k", 8]], "writes": "E""#,
            1,
        );
        assert!(matches!(
            parse_workload_graph(&bad),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_workload_graph("{\n  \"workloads\": [,]\n}").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn round_trip() {
        let g = parse_workload_graph(TWO_MM).unwrap();
        let again = parse_workload_graph(&serialize_workload_graph(&g)).unwrap();
        assert_eq!(g, again);
    }
}
