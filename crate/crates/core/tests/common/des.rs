//! Event-driven pipeline simulation used as an oracle for stage-graph
//! latency and throughput.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;

/// A DAG of stages with integer delays. Edges point from producer to
/// consumer.
#[derive(Debug, Clone)]
pub struct Dag {
    pub delays: Vec<u64>,
    pub edges: Vec<(usize, usize)>,
}

pub fn random_dag<R: Rng>(rng: &mut R, max_stages: usize) -> Dag {
    let n = rng.gen_range(1..=max_stages);
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(rng);
    let density = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                edges.push((label[a], label[b]));
            }
        }
    }
    let delays = (0..n).map(|_| rng.gen_range(1..=50)).collect();
    Dag { delays, edges }
}

/// Completion time of every stage for each of `iterations` pipeline
/// iterations. A stage starts iteration `i` once it has finished iteration
/// `i - 1` and all its predecessors have finished iteration `i`.
pub fn simulate(dag: &Dag, iterations: usize) -> Vec<Vec<u64>> {
    let n = dag.delays.len();
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|s| dag.edges.iter().filter(|e| e.1 == s).map(|e| e.0).collect())
        .collect();
    let succs: Vec<Vec<usize>> = (0..n)
        .map(|s| dag.edges.iter().filter(|e| e.0 == s).map(|e| e.1).collect())
        .collect();
    let mut finish = vec![vec![u64::MAX; iterations]; n];
    let mut next = vec![0usize; n];
    let mut busy = vec![false; n];
    let mut events: BinaryHeap<Reverse<(u64, usize, usize)>> = BinaryHeap::new();

    let ready = |s: usize, i: usize, finish: &Vec<Vec<u64>>| {
        i < iterations && preds[s].iter().all(|&p| finish[p][i] != u64::MAX)
    };
    let mut try_start =
        |s: usize,
         now: u64,
         finish: &Vec<Vec<u64>>,
         busy: &mut Vec<bool>,
         events: &mut BinaryHeap<Reverse<(u64, usize, usize)>>| {
            if !busy[s] && ready(s, next[s], finish) {
                busy[s] = true;
                events.push(Reverse((now + dag.delays[s], s, next[s])));
                next[s] += 1;
            }
        };
    for s in 0..n {
        try_start(s, 0, &finish, &mut busy, &mut events);
    }
    while let Some(Reverse((t, s, i))) = events.pop() {
        finish[s][i] = t;
        busy[s] = false;
        try_start(s, t, &finish, &mut busy, &mut events);
        for &c in &succs[s] {
            try_start(c, t, &finish, &mut busy, &mut events);
        }
    }
    finish
}

/// Latency of the first iteration and the steady-state completion
/// interval. Integer delays make every stage's completion times eventually
/// grow by its slowest ancestor's delay, and the slowest chain overtakes the
/// others within `latency + stages` iterations, so simulating a few more
/// than that yields the exact period.
pub fn measure(dag: &Dag) -> (u64, u64) {
    let done = |f: &Vec<Vec<u64>>, i: usize| f.iter().map(|s| s[i]).max().unwrap_or(0);
    let latency = done(&simulate(dag, 1), 0);
    let iterations = latency as usize + dag.delays.len() + 4;
    let f = simulate(dag, iterations);
    (
        done(&f, 0),
        done(&f, iterations - 1) - done(&f, iterations - 2),
    )
}
