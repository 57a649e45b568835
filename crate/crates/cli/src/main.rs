use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chiplet_dse::config::ModelParams;
use chiplet_dse::cost::CostTable;
use chiplet_dse::perf::{evaluate_design, parse_design};
use chiplet_dse::report;
use chiplet_dse::search::{
    run_two_stage, Exploration, ExploreError, ModelEvaluator, Objective, SearchConfig,
};
use chiplet_dse::workload::{parse_workload_graph, WorkloadGraph};
use clap::{Args, Parser, Subcommand};

/// Design-space exploration for chiplet-based accelerators.
#[derive(Parser)]
#[command(name = "chiplet-dse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one design point.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Design point file (JSON).
        #[arg(long)]
        design: PathBuf,
    },
    /// Run the two-stage co-optimization.
    Explore {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Args)]
struct Common {
    /// Workload graph file (JSON).
    #[arg(long)]
    workloads: PathBuf,
    /// Cost table (JSON); the built-in table when absent.
    #[arg(long)]
    cost_table: Option<PathBuf>,
    /// Model parameters (JSON); built-in defaults when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Overrides the clock frequency of the model parameters.
    #[arg(long)]
    clock_ghz: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// edp, latency, energy, cost or pareto:(a,b).
    #[arg(long, default_value = "edp")]
    objective: String,
    #[arg(long, default_value_t = 64 * 300)]
    stage1_budget: usize,
    #[arg(long, default_value_t = 64 * 300)]
    stage2_budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total processing elements shared by all workloads.
    #[arg(long, default_value_t = 256)]
    pe_budget: u64,
    #[arg(long, default_value_t = 4)]
    max_chiplets: u64,
    /// Outer Bayesian samples per search.
    #[arg(long, default_value_t = 64)]
    bayes_samples: usize,
    /// Annealing evaluations per outer sample.
    #[arg(long, default_value_t = 300)]
    sa_budget: usize,
    #[arg(long, default_value_t = 0.97)]
    cooling: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    Input(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(context: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", context.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(input(path))
}

struct Inputs {
    graph: WorkloadGraph,
    params: ModelParams,
    table: CostTable,
}

fn load(c: &Common) -> Result<Inputs, Failure> {
    let graph = parse_workload_graph(&read(&c.workloads)?).map_err(input(&c.workloads))?;
    let mut params = match &c.params {
        Some(p) => ModelParams::from_json(&read(p)?).map_err(input(p))?,
        None => ModelParams::default(),
    };
    if let Some(ghz) = c.clock_ghz {
        params.clock_ghz = ghz;
        params
            .validate()
            .map_err(|e| Failure::Input(format!("--clock-ghz: {e}")))?;
    }
    let table = match &c.cost_table {
        Some(p) => CostTable::from_json(&read(p)?).map_err(input(p))?,
        None => CostTable::default(),
    };
    Ok(Inputs {
        graph,
        params,
        table,
    })
}

struct Out<'a>(&'a Path);

impl Out<'_> {
    fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.0.join(name);
        fs::write(&p, text).map_err(input(&p))
    }

    fn csv<T: serde::Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let text = report::to_csv(rows).map_err(|e| Failure::Input(e.to_string()))?;
        self.write(name, &text)
    }
}

fn evaluate(c: &Common, design: &Path) -> Result<(), Failure> {
    let inp = load(c)?;
    let dp = parse_design(
        &read(design)?,
        &inp.graph,
        &inp.params.buffer_caps,
        &inp.table.default_node,
    )
    .map_err(input(design))?;
    let r = evaluate_design(&inp.graph, &dp, &inp.params, &inp.table)
        .map_err(|e| Failure::Infeasible(e.to_string()))?;
    fs::create_dir_all(&c.out).map_err(input(&c.out))?;
    let out = Out(&c.out);
    out.write("report.txt", &report::report_text(&r))?;
    out.csv("metrics.csv", &[r.metrics])?;
    out.csv("stages.csv", &report::stage_rows(&r))?;
    print!("{}", report::report_text(&r));
    Ok(())
}

fn write_exploration(out: &Out, ex: &Exploration, graph: &WorkloadGraph) -> Result<(), Failure> {
    out.csv("log.csv", &report::log_rows(ex))?;
    out.csv("arch_front.csv", &report::arch_front_rows(ex, graph))?;
    out.csv("front.csv", &report::front_rows(ex))?;
    out.csv("scatter.csv", &report::scatter_rows(ex))?;
    out.write("front.txt", &report::front_text(ex))
}

fn explore(c: &Common, s: &SearchArgs) -> Result<(), Failure> {
    let inp = load(c)?;
    let objective: Objective = s
        .objective
        .parse()
        .map_err(|e| Failure::Input(format!("--objective: {e}")))?;
    let cfg = SearchConfig {
        objective,
        stage1_budget: s.stage1_budget,
        stage2_budget: s.stage2_budget,
        seed: s.seed,
        pe_budget: s.pe_budget,
        max_chiplets_per_workload: s.max_chiplets,
        bayes_samples: s.bayes_samples,
        sa_budget: s.sa_budget,
        cooling: s.cooling,
        ..SearchConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Input(e.to_string()))?;
    if let Some(n) = s.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(format!("--jobs: {e}")))?;
    }
    let ev = ModelEvaluator::new(&inp.graph, &inp.params, &inp.table);
    let result = run_two_stage(&ev, &cfg);
    fs::create_dir_all(&c.out).map_err(input(&c.out))?;
    let out = Out(&c.out);
    let ex = match result {
        Ok(ex) => ex,
        Err(ExploreError::Input(e)) => return Err(Failure::Input(e.to_string())),
        Err(ExploreError::Aborted(a)) => {
            write_exploration(&out, &a.partial, &inp.graph)?;
            return Err(Failure::Infeasible(a.message));
        }
    };
    write_exploration(&out, &ex, &inp.graph)?;
    let Some(best) = ex.best() else {
        return Err(Failure::Infeasible(
            "no feasible system design found".into(),
        ));
    };
    out.write("best_design.json", &best.item.design.to_json(&inp.graph))?;
    let m = &best.item.eval.metrics;
    println!(
        "{} evaluations, {} designs on the front; best {}: latency {:e} cycles, energy {:e} J, cost {:e}",
        ex.log.len(),
        ex.front.entries().len(),
        cfg.objective,
        m.latency_cycles,
        m.energy_j,
        m.cost
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Evaluate { common, design } => evaluate(common, design),
        Command::Explore { common, search } => explore(common, search),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("error: {m}"),
                Failure::Infeasible(m) => eprintln!("infeasible: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
