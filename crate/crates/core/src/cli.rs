//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 for invalid input or files, 2 for numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gap;
use crate::harness::{self, FilterKind, Scenario};
use crate::network::weight_power;
use crate::periodic::PlantModel;
use crate::spps::{self, SppsSolution};

#[derive(Debug, Parser)]
#[command(name = "filterlab", version, about = "Consensus-on-measurement Kalman filtering for periodic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the periodic Riccati equations and write the solutions.
    SolveDpre(Options),
    /// Report uniform observability of the plant and of every fused pair.
    Observability(Options),
    /// Run the Monte Carlo experiment.
    Simulate(Options),
    /// Write the steady-state performance gap report.
    Gap(Options),
    /// Write the per-sensor gap contraction rates.
    Rates(Options),
    /// Compare measurement consensus with information consensus.
    CompareCidf(Options),
    /// Run the 20-sensor benchmark end to end.
    Paper(Options),
}

#[derive(Debug, Args, Clone, Default)]
struct Options {
    /// Scenario JSON, or a bare plant JSON for `solve-dpre` and `observability`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Consensus steps to sweep, e.g. `4,5,6`.
    #[arg(long, value_delimiter = ',')]
    fusion_steps: Option<Vec<usize>>,
    #[arg(long)]
    tol: Option<f64>,
    /// Subset of CKF, CMDF, CIDF.
    #[arg(long, value_delimiter = ',', ignore_case = true)]
    filters: Option<Vec<FilterKind>>,
}

impl clap::ValueEnum for FilterKind {
    fn value_variants<'a>() -> &'a [Self] {
        &FilterKind::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

enum Input {
    Plant(PlantModel),
    Scenario(Box<Scenario>),
}

impl Options {
    fn tolerance(&self) -> f64 {
        self.tol.unwrap_or(spps::DEFAULT_TOL)
    }

    fn apply(&self, base: &Scenario) -> Result<Scenario> {
        if matches!(self.tol, Some(t) if !(t > 0.0)) {
            return Err(Error::InvalidInput("--tol must be positive".into()));
        }
        base.with_config(|c| {
            if let Some(s) = self.seed {
                c.seed = s;
            }
            if let Some(t) = self.trials {
                c.trials = t;
            }
            if let Some(l) = &self.fusion_steps {
                c.l_values = Some(l.clone());
            }
            if let Some(t) = self.tol {
                c.tolerance = Some(t);
            }
            if let Some(f) = &self.filters {
                c.filters = f.clone();
            }
        })
    }

    fn input(&self) -> Result<Input> {
        let path = self
            .scenario
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--scenario <path> is required".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        if value.get("graph").is_some() {
            Ok(Input::Scenario(Box::new(self.apply(&Scenario::from_json(&text)?)?)))
        } else {
            Ok(Input::Plant(PlantModel::from_json(&text)?))
        }
    }

    fn scenario(&self) -> Result<Scenario> {
        match self.input()? {
            Input::Scenario(s) => Ok(*s),
            Input::Plant(_) => Err(Error::InvalidInput("this command needs a scenario with a graph".into())),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

/// Sizes the global thread pool from `FILTERLAB_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("FILTERLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidInput(format!("FILTERLAB_THREADS must be a positive integer, got {value:?}")))?;
    // A pool that was already built (e.g. in tests) is fine to keep.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::SolveDpre(o) => solve_dpre(&o, out),
        Command::Observability(o) => observability(&o, out),
        Command::Simulate(o) => {
            let s = o.scenario()?;
            simulate(&s, o.out_dir()?, out)
        }
        Command::Gap(o) => {
            let s = o.scenario()?;
            gap_files(&s, o.out_dir()?, out)
        }
        Command::Rates(o) => {
            let s = o.scenario()?;
            let report = gap::gap_report(&s.plant, &s.graph, &s.weights, &s.l_values, s.tolerance, Some(s.seed))?;
            write_rates(&report, &o.out_dir()?.join("rates.csv"), out)
        }
        Command::CompareCidf(o) => {
            let s = o.scenario()?;
            compare(&s, o.out_dir()?, out)
        }
        Command::Paper(o) => paper(&o, out),
    }
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    m.row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.10}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

fn print_solution(name: &str, sol: &SppsSolution, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{name}: {} sweeps, residual {:e}", sol.iterations, sol.residual).map_err(io_err)?;
    for (k, p) in sol.matrices().iter().enumerate() {
        writeln!(out, "P[{k}] = [{}]", format_matrix(p)).map_err(io_err)?;
    }
    writeln!(out, "average trace: {:.10}", sol.average_trace()).map_err(io_err)
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Long format `sensor, L, kind, k, row, col, value` for every fused filter.
fn write_node_solutions(s: &Scenario, path: &Path) -> Result<()> {
    use rayon::prelude::*;
    let jobs: Vec<(usize, usize)> = s
        .l_values
        .iter()
        .flat_map(|&l| (0..s.plant.sensor_count()).map(move |i| (i, l)))
        .collect();
    let solved = jobs
        .par_iter()
        .map(|&(i, l)| Ok((i, l, gap::solve_node(&s.plant, &weight_power(&s.weights, l), i, s.tolerance)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut text = String::from("sensor,L,kind,k,row,col,value\n");
    for (i, l, node) in solved {
        for (kind, sol) in [("riccati", &node.riccati), ("error", &node.error)] {
            for (k, p) in sol.matrices().iter().enumerate() {
                for r in 0..p.nrows() {
                    for c in 0..p.ncols() {
                        text.push_str(&format!("{},{l},{kind},{k},{r},{c},{:?}\n", i + 1, p[(r, c)]));
                    }
                }
            }
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn solve_dpre(o: &Options, out: &mut dyn Write) -> Result<()> {
    let (plant, scenario) = match o.input()? {
        Input::Plant(p) => (p, None),
        Input::Scenario(s) => (s.plant.clone(), Some(s)),
    };
    let tol = scenario.as_ref().map_or(o.tolerance(), |s| s.tolerance);
    let central = gap::ckf_dpre(&plant, tol)?;
    print_solution("centralized", &central, out)?;
    let dir = o.out_dir()?;
    central.write_csv(&dir.join("dpre_central.csv"))?;
    write_json(&dir.join("dpre_central.json"), &central.to_json())?;
    if let Some(s) = scenario {
        write_node_solutions(&s, &dir.join("dpre_nodes.csv"))?;
    }
    Ok(())
}

fn observability(o: &Options, out: &mut dyn Write) -> Result<()> {
    let (plant, scenario) = match o.input()? {
        Input::Plant(p) => (p, None),
        Input::Scenario(s) => (s.plant.clone(), Some(s)),
    };
    let (c, _) = plant.stacked_sequences();
    let verdict = spps::uniform_observability(plant.a(), &c)?;
    writeln!(out, "uniformly observable: {verdict}").map_err(io_err)?;
    if let Some(s) = scenario {
        for &l in &s.l_values {
            let power = weight_power(&s.weights, l);
            for i in 0..plant.sensor_count() {
                let seqs = gap::modified_sequences(&plant, &power, i)?;
                let ok = spps::uniform_observability(plant.a(), &seqs.c)?;
                writeln!(out, "sensor {} L {l}: uniformly observable: {ok}", i + 1).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn simulate(s: &Scenario, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let results = harness::run_monte_carlo(s)?;
    results.export(dir)?;
    writeln!(
        out,
        "{} trials ({} diverged), {} series written to {}",
        results.trials,
        results.diverged.len(),
        results.series.len(),
        dir.display()
    )
    .map_err(io_err)
}

fn gap_files(s: &Scenario, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let report = gap::gap_report(&s.plant, &s.graph, &s.weights, &s.l_values, s.tolerance, Some(s.seed))?;
    report.write_csv(&dir.join("gap.csv"))?;
    write_json(&dir.join("gap.json"), &report.to_json())?;
    writeln!(
        out,
        "diameter {}, sigma2 {:.6}, centralized average trace {:.6}",
        report.diameter, report.sigma2, report.centralized_avg
    )
    .map_err(io_err)?;
    write_rates(&report, &dir.join("rates.csv"), out)
}

fn write_rates(report: &gap::GapReport, path: &Path, out: &mut dyn Write) -> Result<()> {
    let mut text = String::from("sensor,L,rate_q,sigma2\n");
    let mut worst: Option<f64> = None;
    for c in &report.cells {
        let q = c.rate.map(|q| format!("{q:?}")).unwrap_or_default();
        text.push_str(&format!("{},{},{q},{:?}\n", c.sensor + 1, c.steps, report.sigma2));
        if let Some(q) = c.rate {
            worst = Some(worst.map_or(q, |w: f64| w.max(q)));
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    match worst {
        Some(q) => writeln!(out, "largest rate {q:.6} (sigma2 {:.6})", report.sigma2),
        None => writeln!(out, "no rates: gaps are at the numerical floor"),
    }
    .map_err(io_err)
}

fn compare(s: &Scenario, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let (table, results) = harness::compare_cidf(s)?;
    table.write_csv(&dir.join("comparison.csv"))?;
    write_json(
        &dir.join("comparison.json"),
        &serde_json::to_string_pretty(&table).expect("table serializes"),
    )?;
    results.export(dir)?;
    for (i, l) in table.crossover.iter().enumerate() {
        let text = l.map_or_else(|| "none in sweep".to_string(), |l| l.to_string());
        writeln!(out, "sensor {}: CMDF better from L = {text}", i + 1).map_err(io_err)?;
    }
    Ok(())
}

fn paper(o: &Options, out: &mut dyn Write) -> Result<()> {
    let base = match &o.scenario {
        Some(_) => o.scenario()?,
        None => Scenario::paper(o.seed.unwrap_or(1))?,
    };
    let s = o.apply(&base)?;
    let dir = o.out_dir()?;
    write_json(
        &dir.join("scenario.json"),
        &serde_json::to_string_pretty(s.config()).expect("scenario serializes"),
    )?;
    write_json(&dir.join("graph.json"), &s.graph.to_json())?;
    s.weights.write_csv(&dir.join("weights.csv"))?;
    let central = gap::ckf_dpre(&s.plant, s.tolerance)?;
    central.write_csv(&dir.join("dpre_central.csv"))?;
    write_node_solutions(&s, &dir.join("dpre_nodes.csv"))?;
    gap_files(&s, dir, out)?;
    let with_cidf = s.filters.contains(&FilterKind::Cmdf) && s.filters.contains(&FilterKind::Cidf);
    if with_cidf {
        compare(&s, dir, out)
    } else {
        simulate(&s, dir, out)
    }
}
