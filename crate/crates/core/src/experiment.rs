//! Parameter sweeps over the synthetic workload.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{run_query, EngineOptions, QueryRun};
use crate::error::{Error, Result};
use crate::plan::Planner;
use crate::store::{Database, StoreOptions};
use crate::synth::{gen_synth, Form, SynthConfig, SynthQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Selectivity,
    TableSize,
    NumClauses,
    OuterConjFactor,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::Selectivity,
        Experiment::TableSize,
        Experiment::NumClauses,
        Experiment::OuterConjFactor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Selectivity => "selectivity",
            Experiment::TableSize => "table_size",
            Experiment::NumClauses => "num_clauses",
            Experiment::OuterConjFactor => "outer_conj_factor",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Experiment::Selectivity => (1..=9).map(|i| i as f64 / 10.0).collect(),
            Experiment::TableSize => vec![1e3, 2e3, 5e3, 10e3, 20e3, 50e3],
            Experiment::NumClauses => (2..=7).map(f64::from).collect(),
            Experiment::OuterConjFactor => (1..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }

    fn query(self, form: Form, v: f64) -> SynthQuery {
        let base = SynthQuery::new(form);
        match self {
            Experiment::Selectivity => SynthQuery {
                selectivity: v,
                ..base
            },
            Experiment::TableSize => base,
            Experiment::NumClauses => SynthQuery {
                clauses: v as usize,
                ..base
            },
            Experiment::OuterConjFactor => SynthQuery {
                outer: Some(v),
                ..base
            },
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The baseline and tagged planner compared for each form.
pub fn default_planners(form: Form) -> Vec<Planner> {
    match form {
        Form::Dnf => vec![Planner::BDisj, Planner::TCombined],
        Form::Cnf => vec![Planner::BPushConj, Planner::TCombined],
    }
}

/// One timed repetition of one planner in one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub form: Form,
    pub param: String,
    pub value: f64,
    pub planner: String,
    pub run: usize,
    pub plan_ms: f64,
    pub exec_ms: f64,
    pub total_ms: f64,
    pub rows_out: u64,
    pub atom_evals: u64,
    pub hash_probes: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub form: Form,
    pub values: Vec<f64>,
    pub planners: Vec<Planner>,
    pub runs: usize,
    /// Drop the page cache before every run instead of warming it once.
    pub cold: bool,
    /// Compare every cell with the join-then-filter oracle.
    pub verify: bool,
    pub synth: SynthConfig,
    pub store: StoreOptions,
    pub engine: EngineOptions,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, form: Form) -> Self {
        Self {
            experiment,
            form,
            values: experiment.default_values(),
            planners: default_planners(form),
            runs: 5,
            cold: false,
            verify: true,
            synth: SynthConfig::default(),
            store: StoreOptions::default(),
            engine: EngineOptions {
                check_invariants: Some(false),
                ..Default::default()
            },
        }
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn row(
    cfg: &ExperimentConfig,
    value: f64,
    planner: Planner,
    run: usize,
    q: &QueryRun,
) -> ExperimentRow {
    let plan_ms = ms(q.plan_time);
    let exec_ms = ms(q.exec_time);
    ExperimentRow {
        experiment: cfg.experiment.name().to_string(),
        form: cfg.form,
        param: cfg.experiment.name().to_string(),
        value,
        planner: planner.name().to_string(),
        run,
        plan_ms,
        exec_ms,
        total_ms: plan_ms + exec_ms,
        rows_out: q.rows.count() as u64,
        atom_evals: q.stats.total_atom_evals,
        hash_probes: q.stats.hash_probes,
    }
}

/// Runs the sweep, generating data under `work`; each row is passed to
/// `sink` as soon as it is measured.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    work: &Path,
    mut sink: impl FnMut(&ExperimentRow) -> Result<()>,
) -> Result<Vec<ExperimentRow>> {
    let mut shared: Option<Database> = None;
    let mut out = Vec::new();
    for &value in &cfg.values {
        let db = if cfg.experiment == Experiment::TableSize {
            let n = value as usize;
            let synth = SynthConfig {
                table_size: n,
                ..cfg.synth
            };
            let dir = work.join(format!("synth-{n}"));
            let _ = std::fs::remove_dir_all(&dir);
            shared = None;
            Some(gen_synth(&synth, &dir, cfg.store)?)
        } else {
            if shared.is_none() {
                let dir = work.join(format!("synth-{}", cfg.synth.table_size));
                let _ = std::fs::remove_dir_all(&dir);
                shared = Some(gen_synth(&cfg.synth, &dir, cfg.store)?);
            }
            None
        };
        let db = db.as_ref().or(shared.as_ref()).expect("database generated");
        let sql = cfg.experiment.query(cfg.form, value).to_sql();
        log::info!("{} = {value}: {sql}", cfg.experiment);

        let expected = if cfg.verify {
            let q = run_query(db, &sql, Planner::NaiveOracle, cfg.engine)?;
            Some((q.rows.count(), q.rows.fingerprint()))
        } else {
            None
        };
        for &planner in &cfg.planners {
            if !cfg.cold {
                run_query(db, &sql, planner, cfg.engine)?;
            }
            for run in 0..cfg.runs {
                if cfg.cold {
                    db.drop_cache();
                }
                let q = run_query(db, &sql, planner, cfg.engine)?;
                if let Some(exp) = expected {
                    let got = (q.rows.count(), q.rows.fingerprint());
                    if got != exp {
                        return Err(Error::Internal(format!(
                            "{planner:?} returned {} rows, oracle {} ({} = {value})",
                            got.0, exp.0, cfg.experiment
                        )));
                    }
                }
                let r = row(cfg, value, planner, run, &q);
                drop(q);
                sink(&r)?;
                out.push(r);
            }
        }
    }
    Ok(out)
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[ExperimentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

/// Mean timings of one planner in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub value: f64,
    pub planner: String,
    pub plan_ms: f64,
    pub exec_ms: f64,
    pub total_ms: f64,
    pub rows_out: u64,
}

/// Averages rows by (value, planner), in first-seen order.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<CellSummary> {
    let mut out: Vec<(CellSummary, usize)> = Vec::new();
    for r in rows {
        let pos = out
            .iter()
            .position(|(c, _)| c.value == r.value && c.planner == r.planner);
        let (c, n) = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push((
                    CellSummary {
                        value: r.value,
                        planner: r.planner.clone(),
                        plan_ms: 0.0,
                        exec_ms: 0.0,
                        total_ms: 0.0,
                        rows_out: r.rows_out,
                    },
                    0,
                ));
                out.last_mut().unwrap()
            }
        };
        c.plan_ms += r.plan_ms;
        c.exec_ms += r.exec_ms;
        c.total_ms += r.total_ms;
        *n += 1;
    }
    out.into_iter()
        .map(|(mut c, n)| {
            let n = n as f64;
            c.plan_ms /= n;
            c.exec_ms /= n;
            c.total_ms /= n;
            c
        })
        .collect()
}

/// Mean time of `baseline` over `tagged` at each swept value, using `pick`
/// to select the timing column.
pub fn speedups(
    summary: &[CellSummary],
    baseline: Planner,
    tagged: Planner,
    pick: impl Fn(&CellSummary) -> f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for b in summary.iter().filter(|c| c.planner == baseline.name()) {
        if let Some(t) = summary
            .iter()
            .find(|c| c.planner == tagged.name() && c.value == b.value)
        {
            out.push((b.value, pick(b) / pick(t).max(1e-9)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(e: Experiment, form: Form, values: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            values,
            runs: 2,
            synth: SynthConfig {
                table_size: 300,
                ..Default::default()
            },
            ..ExperimentConfig::new(e, form)
        }
    }

    #[test]
    fn selectivity_sweep_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Experiment::Selectivity, Form::Dnf, vec![0.1, 0.5, 0.9]);
        let mut streamed = 0;
        let rows = run_experiment(&cfg, dir.path(), |_| {
            streamed += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        assert_eq!(streamed, rows.len());
        for r in &rows {
            assert!(r.total_ms + 1e-9 >= r.plan_ms + r.exec_ms - 1e-6);
        }
        let s = summarize(&rows);
        assert_eq!(s.len(), 6);
        for pair in s.chunks(2) {
            assert_eq!(pair[0].rows_out, pair[1].rows_out);
        }
    }

    #[test]
    fn counters_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let cfg = tiny(Experiment::NumClauses, Form::Cnf, vec![2.0, 3.0]);
        let strip = |rows: Vec<ExperimentRow>| -> Vec<(String, u64, u64, u64)> {
            rows.into_iter()
                .map(|r| (r.planner, r.rows_out, r.atom_evals, r.hash_probes))
                .collect()
        };
        let x = strip(run_experiment(&cfg, a.path(), |_| Ok(())).unwrap());
        let y = strip(run_experiment(&cfg, a.path(), |_| Ok(())).unwrap());
        assert_eq!(x, y);
    }

    #[test]
    fn table_size_sweep_regenerates() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            runs: 1,
            ..tiny(Experiment::TableSize, Form::Cnf, vec![50.0, 200.0])
        };
        let rows = run_experiment(&cfg, dir.path(), |_| Ok(())).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(dir.path().join("synth-200").is_dir());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(Experiment::OuterConjFactor, Form::Dnf, vec![0.5]);
        let rows = run_experiment(&cfg, dir.path(), |_| Ok(())).unwrap();
        let path = dir.path().join("r.csv");
        write_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "experiment,form,param,value,planner,run,plan_ms,exec_ms,total_ms,rows_out,atom_evals,hash_probes\n"
        ));
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!(
            "outer-conj-factor".parse::<Experiment>().unwrap(),
            Experiment::OuterConjFactor
        );
        assert!("bogus".parse::<Experiment>().is_err());
    }
}
