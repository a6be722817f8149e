use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tagexec::config::Config;
use tagexec::experiment::{
    read_csv, run_experiment, summarize, write_csv, Experiment, ExperimentConfig,
};
use tagexec::plot::experiment_charts;
use tagexec::store::{ingest_dir, SchemaFile};
use tagexec::synth::{gen_synth, Form, SynthConfig};
use tagexec::{run_query, Database, EngineOptions, LogicMode, PlanOptions, Planner, Value};

#[derive(Parser)]
#[command(
    name = "tagexec",
    version,
    about = "Tagged execution of queries with complex predicates"
)]
struct Cli {
    /// TOML file with cost factors and store settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load CSV files into a new database.
    Ingest {
        /// JSON file listing the tables and their columns.
        #[arg(long)]
        schema: PathBuf,
        /// Directory holding one `<table>.csv` per table.
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, env = "TAGEXEC_DB")]
        db: PathBuf,
    },
    /// Generate the synthetic T0/T1/T2 database.
    GenSynth {
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        attrs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1.5)]
        zipf: f64,
        #[arg(long, env = "TAGEXEC_DB")]
        db: PathBuf,
    },
    /// Plan and run one query.
    Query {
        #[arg(long, env = "TAGEXEC_DB")]
        db: PathBuf,
        #[arg(long, default_value = "tcombined")]
        planner: Planner,
        #[arg(long, default_value = "auto")]
        logic: LogicMode,
        /// File holding the query, or `-` for stdin.
        #[arg(long, conflicts_with = "query")]
        sql: Option<String>,
        /// The query text itself.
        #[arg(short, long)]
        query: Option<String>,
        /// Print the plan before running.
        #[arg(long)]
        explain: bool,
        /// Also print execution counters.
        #[arg(long)]
        stats: bool,
        #[arg(long, value_enum, default_value_t = Output::Count)]
        output: Output,
    },
    /// Run a parameter sweep over the synthetic workload and write CSV.
    Bench {
        #[arg(long)]
        experiment: Experiment,
        #[arg(long, default_value = "dnf")]
        form: Form,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated sweep values (defaults depend on the experiment).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated planners (defaults to the baseline and tcombined).
        #[arg(long, value_delimiter = ',')]
        planners: Option<Vec<Planner>>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Rows per table outside the table-size sweep.
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Drop the page cache before every run.
        #[arg(long)]
        cold: bool,
        /// Skip the oracle comparison of every cell.
        #[arg(long)]
        no_verify: bool,
        /// Directory for generated databases (defaults to a temporary one).
        #[arg(long)]
        work: Option<PathBuf>,
    },
    /// Draw SVG line charts from a bench CSV.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Output {
    /// Only the row count.
    Count,
    /// Result rows as CSV on stdout.
    Csv,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn read_sql(sql: Option<String>, query: Option<String>) -> Result<String> {
    match (sql, query) {
        (_, Some(q)) => Ok(q),
        (Some(f), None) if f == "-" => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .context("reading query from stdin")?;
            Ok(s)
        }
        (Some(f), None) => std::fs::read_to_string(&f).with_context(|| format!("reading {f}")),
        (None, None) => bail!("pass the query with --sql FILE, --sql - or --query TEXT"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { schema, csv, db } => {
            let schema = SchemaFile::load(&schema)?;
            let metas = ingest_dir(&db, &csv, &schema)?;
            for m in metas {
                eprintln!("{}: {} rows", m.schema.name, m.row_count);
            }
        }
        Command::GenSynth {
            size,
            attrs,
            seed,
            zipf,
            db,
        } => {
            let synth = SynthConfig {
                table_size: size,
                zipf_shape: zipf,
                num_attrs: attrs,
                seed,
            };
            gen_synth(&synth, &db, cfg.store_options())?;
            eprintln!("wrote T0, T1, T2 with {size} rows each to {}", db.display());
        }
        Command::Query {
            db,
            planner,
            logic,
            sql,
            query,
            explain,
            stats,
            output,
        } => {
            let text = read_sql(sql, query)?;
            let database = Database::open(&db, cfg.store_options())?;
            let opts = EngineOptions {
                plan: PlanOptions {
                    factors: cfg.cost,
                    ..Default::default()
                },
                logic,
                check_invariants: None,
            };
            let run = run_query(&database, &text, planner, opts)?;
            if explain {
                print!("{}", run.explain);
            }
            if let Output::Csv = output {
                let stdout = std::io::stdout();
                let mut w = csv::Writer::from_writer(stdout.lock());
                w.write_record(&run.prepared.query.projection_names)?;
                for row in run.values(&database)? {
                    w.write_record(row.iter().map(Value::to_plain))?;
                }
                w.flush()?;
            }
            eprintln!(
                "{} rows (plan {:.3} ms, exec {:.3} ms)",
                run.rows.count(),
                run.plan_time.as_secs_f64() * 1e3,
                run.exec_time.as_secs_f64() * 1e3
            );
            if stats {
                let s = &run.stats;
                eprintln!(
                    "atom_evals {} {:?}\nhash_probes {}\ntuples_built {}\nscans {:?}\nprecept_violations {}",
                    s.total_atom_evals, s.atom_evals, s.hash_probes, s.tuples_built, s.scans, s.precept_violations
                );
            }
        }
        Command::Bench {
            experiment,
            form,
            out,
            values,
            planners,
            runs,
            size,
            seed,
            cold,
            no_verify,
            work,
        } => {
            let mut ec = ExperimentConfig::new(experiment, form);
            if let Some(v) = values {
                ec.values = v;
            }
            if let Some(p) = planners {
                ec.planners = p;
            }
            ec.runs = runs;
            ec.cold = cold;
            ec.verify = !no_verify;
            ec.synth.table_size = size;
            ec.synth.seed = seed;
            ec.store = cfg.store_options();
            ec.engine.plan.factors = cfg.cost;
            let tmp;
            let work = match work {
                Some(w) => w,
                None => {
                    tmp = tempfile::tempdir()?;
                    tmp.path().to_path_buf()
                }
            };
            let rows = run_experiment(&ec, &work, |r| {
                log::info!(
                    "{} {} = {}: {} {:.2} ms",
                    r.form,
                    r.param,
                    r.value,
                    r.planner,
                    r.total_ms
                );
                Ok(())
            })?;
            write_csv(
                std::fs::File::create(&out)
                    .with_context(|| format!("creating {}", out.display()))?,
                &rows,
            )?;
            let mut err = std::io::stderr().lock();
            for c in summarize(&rows) {
                writeln!(
                    err,
                    "{:>10} {:<10} plan {:>10.3} ms  exec {:>10.3} ms  rows {}",
                    c.value, c.planner, c.plan_ms, c.exec_ms, c.rows_out
                )?;
            }
        }
        Command::Plot { input, out } => {
            let rows = read_csv(&input)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, svg) in experiment_charts(&rows) {
                let path = out.join(name);
                std::fs::write(&path, svg)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
