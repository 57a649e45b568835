//! Acceptance criteria, one pass/fail line each. Run with
//! `cargo test -p chiplet-dse --test acceptance -- --nocapture`.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chiplet_dse::config::ModelParams;
use chiplet_dse::cost::{
    bill_for_placement, die_yield, monolithic_cost, total_cost, CostTable, Die, PackagingKind,
    SystemBill,
};
use chiplet_dse::mapping::{derive_dependence, map_instances};
use chiplet_dse::network::{allocate_bandwidth, Flow, Topology};
use chiplet_dse::perf::{Stage, StageGraph, StageKind};
use chiplet_dse::search::{
    acquisition_pi, run_two_stage, sa_accept, GpState, Metric, ModelEvaluator, Objective,
    SearchConfig, Strategy,
};
use chiplet_dse::workload::{bits_to_bytes, parse_workload_graph};

const MM_CHAIN: &str = include_str!("../../../configs/mm_chain.json");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn contention_split() -> Outcome {
    let bw = 32.0;
    let topo = Topology::linear(3, bw);
    let flow = |name: &str, src| Flow {
        name: name.into(),
        src,
        dst: 2,
        bytes: 1024.0,
        bwr: bw,
    };
    let flows = [flow("e0,2", 0), flow("e1,2", 1)];
    let alloc = allocate_bandwidth(&flows, &topo);
    let on_link = |f: usize| {
        let s = &alloc.flows[f];
        s.path
            .iter()
            .zip(&s.ebw)
            .find(|(c, _)| **c == (1, 2))
            .map(|(_, e)| *e)
    };
    let (a, b) = (on_link(0), on_link(1));
    outcome(
        a == Some(bw / 2.0) && b == Some(bw / 2.0),
        format!("ebw on 1->2: {a:?}, {b:?}; link bw {bw}"),
    )
}

fn pipeline_vs_simulation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for case in 0..200 {
        let dag = common::des::random_dag(&mut rng, 12);
        let mut g = StageGraph::default();
        for (i, &d) in dag.delays.iter().enumerate() {
            g.add(Stage {
                name: format!("s{i}"),
                kind: StageKind::Compute,
                delay: d as f64,
                chiplets: vec![i],
                workloads: vec![i],
            });
        }
        for &(a, b) in &dag.edges {
            g.connect(a, b);
        }
        let (lat, thr) = g.latency_throughput().unwrap();
        let (sim_lat, interval) = common::des::measure(&dag);
        if lat != sim_lat as f64 || thr != 1.0 / interval as f64 {
            bad.push(case);
        }
    }
    outcome(
        bad.is_empty(),
        format!("200 DAGs, mismatching cases {bad:?}"),
    )
}

fn omega_vs_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    let mut bad = Vec::new();
    let mut max_instances = 0;
    for case in 0..150 {
        let json = common::omega::random_pair_json(&mut rng, 10_000);
        let g = parse_workload_graph(&json).unwrap();
        let (w1, w2) = (&g.workloads[0], &g.workloads[1]);
        let (c1, s1) = common::omega::random_mapping(&mut rng, w1);
        let (c2, s2) = common::omega::random_mapping(&mut rng, w2);
        let f = g.tensor("X").unwrap();
        let h1 = map_instances(w1, &s1, &c1).unwrap();
        let h2 = map_instances(w2, &s2, &c2).unwrap();
        max_instances = max_instances.max(h1.instances.len().max(h2.instances.len()));
        let omega = derive_dependence(&h1, &h2, f).unwrap();
        let oracle = common::omega::brute_force((w1, &s1, &c1), (w2, &s2, &c2), "X");
        let got: Vec<_> = omega
            .edges
            .iter()
            .map(|e| ((e.src, e.dst), e.elements, e.bytes))
            .collect();
        let want: Vec<_> = oracle
            .iter()
            .map(|(k, &n)| (*k, n, bits_to_bytes(n, f.element_bits)))
            .collect();
        let total: u64 = oracle.values().sum();
        if got != want
            || omega.total_elements != total
            || omega.total_bytes != bits_to_bytes(total, f.element_bits)
        {
            bad.push(case);
        }
        cases += 1;
    }
    outcome(
        bad.is_empty(),
        format!("{cases} pairs (max {max_instances} instances), mismatching {bad:?}"),
    )
}

fn cost_trend() -> Outcome {
    let t = CostTable::default();
    let node = t.node("28nm").unwrap();
    let mono = monolithic_cost(993.0, node);
    let dies = [((0, 0), 331.0), ((0, 1), 331.0), ((0, 2), 331.0)];
    let b = PackagingKind::ALL.map(|k| {
        let bill = bill_for_placement(&dies, vec![0.0; 3], "28nm", k, &t);
        total_cost(&bill, t.packaging(k).unwrap(), &t).unwrap()
    });
    let [org, pas, act] = b;
    let (sp, sa) = (pas.interposer_share(), act.interposer_share());
    let pass = org.total / mono < 1.0
        && (0.15..=0.25).contains(&sp)
        && (0.30..=0.40).contains(&sa)
        && org.total < pas.total
        && pas.total < act.total;
    outcome(
        pass,
        format!(
            "normalized organic {:.3}, passive {:.3}, active {:.3}; interposer share passive {:.1}%, active {:.1}%",
            org.total / mono,
            pas.total / mono,
            act.total / mono,
            100.0 * sp,
            100.0 * sa
        ),
    )
}

fn co_optimization_dominance() -> Outcome {
    let g = parse_workload_graph(MM_CHAIN).unwrap();
    let p = ModelParams::default();
    let t = CostTable::default();
    let ev = ModelEvaluator::new(&g, &p, &t);
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let base = SearchConfig {
            stage1_budget: 600,
            stage2_budget: 600,
            bayes_samples: 64,
            sa_budget: 40,
            pe_budget: 256,
            seed,
            ..SearchConfig::default()
        };
        let best = |c: SearchConfig| {
            run_two_stage(&ev, &c)
                .unwrap()
                .best()
                .unwrap()
                .item
                .eval
                .metrics
                .edp
        };
        let co = best(base.clone());
        let arch_only = best(SearchConfig {
            stage2: Strategy::Random,
            ..base.clone()
        });
        let integ_only = best(SearchConfig {
            stage1: Strategy::Random,
            ..base
        });
        if co <= arch_only && co <= integ_only {
            wins += 1;
        } else {
            lines.push(format!(
                "seed {seed}: {co:.4e} vs {arch_only:.4e}/{integ_only:.4e}"
            ));
        }
    }
    outcome(
        wins >= 9,
        format!("co-optimized best EDP dominates in {wins}/10 seeds {lines:?}"),
    )
}

fn optimizer_sanity() -> Outcome {
    let ev = common::synth::Synthetic::new();
    let mut hits = 0;
    let mut worst = 0.0f64;
    let mut max_evals = 0;
    for seed in 0..10 {
        let cfg = SearchConfig {
            objective: Objective::Single(Metric::Latency),
            stage1_budget: 180,
            stage2_budget: 20,
            bayes_samples: 2,
            cooling: 0.75,
            tile_move_prob: 0.85,
            pe_budget: 16,
            seed,
            ..SearchConfig::default()
        };
        let ex = run_two_stage(&ev, &cfg).unwrap();
        let best = ex.best().unwrap().item.eval.metrics.latency_cycles;
        let gap = best / common::synth::OPTIMUM - 1.0;
        worst = worst.max(gap);
        max_evals = max_evals.max(ex.log.len());
        if gap <= 0.05 && ex.log.len() <= 200 {
            hits += 1;
        }
    }
    outcome(
        hits >= 9,
        format!(
            "{hits}/10 seeds within 5%; worst gap {:.1}%, at most {max_evals} evaluations",
            100.0 * worst
        ),
    )
}

fn numerical_checks() -> Outcome {
    let mut notes = Vec::new();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();

    // Yield (1 + A·D0/α)^-α through log1p as the reference form.
    let mut yield_err = 0.0f64;
    for &(a, d0, alpha) in &[
        (331.0, 0.001, 3.0),
        (993.0, 0.001, 3.0),
        (50.0, 0.002, 2.0),
        (1200.0, 0.0005, 4.5),
        (1.0, 0.0, 3.0),
    ] {
        let oracle = (-alpha * f64::ln_1p(a * d0 / alpha)).exp();
        yield_err = yield_err.max(rel(die_yield(a, d0, alpha), oracle));
    }
    notes.push(format!("yield rel err {yield_err:.1e}"));

    let t = CostTable::default();
    let pkg = t.packaging(PackagingKind::Passive).unwrap();
    let node = t.node("28nm").unwrap();
    let bill = SystemBill {
        dies: [120.0, 80.0, 200.0]
            .iter()
            .map(|&a| Die {
                area_mm2: a,
                node: "28nm".into(),
            })
            .collect(),
        interposer_mm2: 500.0,
        substrate_mm2: 520.0,
        io_mm2: vec![0.0; 3],
    };
    let y = |a: f64, d0: f64, alpha: f64| (-alpha * f64::ln_1p(a * d0 / alpha)).exp();
    let oracle: f64 = [120.0, 80.0, 200.0]
        .iter()
        .map(|&a| a * node.cost_per_mm2 / y(a, node.d0, node.alpha) + pkg.bond_cost)
        .sum::<f64>()
        + 520.0 * pkg.substrate_cost_per_mm2
        + 500.0 * pkg.interposer_cost_per_mm2 / y(500.0, pkg.interposer_d0, pkg.interposer_alpha)
        + pkg.process_cost;
    let cost_err = rel(total_cost(&bill, pkg, &t).unwrap().total, oracle);
    notes.push(format!("cost rel err {cost_err:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gp = GpState::new();
    let pts: Vec<(Vec<f64>, f64)> = (0..12)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let y = (3.0 * x[0]).sin() + x[1] * x[2];
            (x, y)
        })
        .collect();
    for (x, y) in &pts {
        gp.observe(x.clone(), *y);
    }
    let gp_err = pts
        .iter()
        .map(|(x, y)| (gp.posterior(x).0 - y).abs())
        .fold(0.0, f64::max);
    notes.push(format!("GP interpolation err {gp_err:.1e}"));

    let pi = acquisition_pi(5.0, 2.0, 6.0, 0.0);
    let pi_err = (pi - 0.691462461274013).abs();
    notes.push(format!("PI(5,2,6) = {pi:.15}"));

    let mut sa_ok = true;
    for &(delta, temp) in &[(1.0, 1.0), (0.5, 2.0), (3.0, 1.5), (0.1, 0.05)] {
        let p = f64::exp(-delta / temp);
        let n = 10_000;
        let hits = (0..n).filter(|_| sa_accept(delta, temp, &mut rng)).count();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        if (freq - p).abs() > 3.0 * sigma {
            sa_ok = false;
            notes.push(format!("SA Δ={delta} T={temp}: {freq} vs {p}"));
        }
    }
    notes.push(format!("SA acceptance within 3σ: {sa_ok}"));

    outcome(
        yield_err <= 1e-9 && cost_err <= 1e-9 && gp_err <= 1e-6 && pi_err <= 1e-6 && sa_ok,
        notes.join("; "),
    )
}

#[test]
fn acceptance() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Check, Option<Duration>); 7] = [
        (
            1,
            "linear contention split",
            contention_split,
            Some(Duration::from_secs(1)),
        ),
        (
            2,
            "stage graph vs event simulation",
            pipeline_vs_simulation,
            Some(Duration::from_secs(10)),
        ),
        (
            3,
            "dependence set vs brute force",
            omega_vs_brute_force,
            Some(Duration::from_secs(30)),
        ),
        (4, "cost trend", cost_trend, Some(Duration::from_secs(1))),
        (
            5,
            "co-optimization dominance",
            co_optimization_dominance,
            Some(Duration::from_secs(600)),
        ),
        (
            6,
            "optimizer sanity",
            optimizer_sanity,
            Some(Duration::from_secs(120)),
        ),
        (
            7,
            "numerical unit checks",
            numerical_checks,
            Some(Duration::from_secs(30)),
        ),
    ];
    let mut failed = Vec::new();
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = o.pass && in_time;
        let limit = limit.map_or(String::new(), |l| format!(" (limit {l:?})"));
        println!(
            "{} [{id}] {name}: {} [{took:.2?}{limit}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !pass {
            failed.push(id);
        }
    }
    println!(
        "N/A  [8] external simulator comparisons: not reproducible without the external tools; criteria 1-7 substitute"
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
