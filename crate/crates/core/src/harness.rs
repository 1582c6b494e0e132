//! Run orchestration and the JSONL run log.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dominance::{CheckpointMode, RunSeries};
use crate::encoding::PairIndexSet;
use crate::gta::{run_gta, GtaError, GtaParams};
use crate::instance::{Instance, Time};
use crate::learning::{BoundsRecorder, BoundsSnapshot};
use crate::schedule::Solution;
use crate::tabu::{run_tabu, RunParams, TenureRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tabu,
    Gta,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Tabu => "tabu",
            Algorithm::Gta => "gta",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabu" => Ok(Algorithm::Tabu),
            "gta" => Ok(Algorithm::Gta),
            other => Err(format!("unknown algorithm `{other}` (expected tabu or gta)")),
        }
    }
}

/// One line of a run log: the state of a run at the end of an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub algorithm: Algorithm,
    pub instance: String,
    pub seed: u64,
    pub epoch: u32,
    pub iterations: u64,
    pub best_makespan: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub elapsed_ms: u64,
}

/// Which search to run and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchSpec {
    Tabu { tenure: TenureRange, run: RunParams },
    Gta(GtaParams),
}

impl SearchSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            SearchSpec::Tabu { .. } => Algorithm::Tabu,
            SearchSpec::Gta(_) => Algorithm::Gta,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SearchSpec::Tabu { run, .. } => run.seed,
            SearchSpec::Gta(p) => p.run.seed,
        }
    }
}

/// A prepared instance: the parsed data plus its pair index.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub instance: Instance,
    pub index: PairIndexSet,
}

impl Problem {
    pub fn new(name: impl Into<String>, instance: Instance) -> Self {
        let index = PairIndexSet::build(&instance);
        Problem {
            name: name.into(),
            instance,
            index,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunJob {
    /// Index into the problem list handed to [`run_many`].
    pub problem: usize,
    pub spec: SearchSpec,
    /// Snapshot bounds at every epoch end, observed every `bounds_period`
    /// iterations and on improvement.
    pub bounds_period: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<RunLogRecord>,
    pub best: Solution,
    pub best_makespan: Time,
    pub snapshots: Vec<BoundsSnapshot>,
}

pub fn run_one(problem: &Problem, job: &RunJob) -> Result<RunResult, GtaError> {
    let (inst, idx) = (&problem.instance, &problem.index);
    let mut recorder = job
        .bounds_period
        .map(|d| BoundsRecorder::new(idx.len(), d, true));
    let mut none = ();
    let observer: &mut dyn crate::tabu::SearchObserver = match &mut recorder {
        Some(r) => r,
        None => &mut none,
    };
    let outcome = match &job.spec {
        SearchSpec::Tabu { tenure, run } => run_tabu(inst, idx, run, *tenure, observer),
        SearchSpec::Gta(params) => run_gta(inst, idx, params, observer)?,
    };
    let records = outcome
        .log
        .iter()
        .map(|r| RunLogRecord {
            algorithm: job.spec.algorithm(),
            instance: problem.name.clone(),
            seed: job.spec.seed(),
            epoch: r.epoch,
            iterations: r.iterations,
            best_makespan: r.best_makespan,
            theta: r.theta,
            elapsed_ms: r.elapsed_ms,
        })
        .collect();
    Ok(RunResult {
        records,
        best: outcome.best,
        best_makespan: outcome.best_makespan,
        snapshots: recorder.map(BoundsRecorder::into_snapshots).unwrap_or_default(),
    })
}

/// Runs every job on a pool of `workers` threads. Each run owns its state, so
/// results do not depend on the number of workers; they come back in job
/// order. `on_done` is called (from worker threads) as each run finishes.
pub fn run_many<F>(
    problems: &[Problem],
    jobs: &[RunJob],
    workers: usize,
    on_done: F,
) -> Vec<Result<RunResult, GtaError>>
where
    F: Fn(usize, &Result<RunResult, GtaError>) + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult, GtaError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = run_one(&problems[job.problem], job);
                on_done(i, &result);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(r: R) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Groups records into per-run series keyed by `(instance, seed)`.
pub fn series_from_records(records: &[RunLogRecord], mode: CheckpointMode) -> Vec<RunSeries> {
    let mut runs: BTreeMap<(&str, u64), Vec<(u64, f64)>> = BTreeMap::new();
    for r in records {
        let checkpoint = match mode {
            CheckpointMode::Epoch => r.epoch as u64,
            CheckpointMode::Time => r.elapsed_ms,
        };
        runs.entry((r.instance.as_str(), r.seed))
            .or_default()
            .push((checkpoint, r.best_makespan as f64));
    }
    runs.into_iter()
        .map(|((instance, seed), mut points)| {
            points.sort_by_key(|p| p.0);
            RunSeries {
                instance: instance.to_string(),
                run: seed,
                points,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_standard;

    fn problem() -> Problem {
        Problem::new(
            "p3",
            parse_standard("3 3\n0 2 1 3 2 1\n2 2 0 4 1 1\n1 5 2 2 0 3").unwrap(),
        )
    }

    #[test]
    fn record_json_shape() {
        let r = RunLogRecord {
            algorithm: Algorithm::Tabu,
            instance: "ft10".into(),
            seed: 3,
            epoch: 1,
            iterations: 100,
            best_makespan: 930,
            theta: None,
            elapsed_ms: 12,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"algorithm":"tabu","instance":"ft10","seed":3,"epoch":1,"iterations":100,"best_makespan":930,"elapsed_ms":12}"#
        );
        let g = RunLogRecord {
            algorithm: Algorithm::Gta,
            theta: Some(0.5),
            ..r
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&g)).unwrap();
        let back: Vec<RunLogRecord> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, vec![g]);
    }

    #[test]
    fn parallel_matches_sequential() {
        let problems = vec![problem()];
        let jobs: Vec<RunJob> = (0..4)
            .map(|s| RunJob {
                problem: 0,
                spec: SearchSpec::Tabu {
                    tenure: TenureRange::default(),
                    run: RunParams::new(3, 50, s),
                },
                bounds_period: Some(10),
            })
            .collect();
        let seq = run_many(&problems, &jobs, 1, |_, _| {});
        let par = run_many(&problems, &jobs, 3, |_, _| {});
        for (a, b) in seq.iter().zip(&par) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            let strip = |v: &[RunLogRecord]| {
                v.iter()
                    .map(|r| (r.epoch, r.iterations, r.best_makespan))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&a.records), strip(&b.records));
            assert_eq!(a.best, b.best);
            assert_eq!(a.snapshots, b.snapshots);
        }
    }

    #[test]
    fn series_grouping() {
        let mk = |inst: &str, seed, epoch, v| RunLogRecord {
            algorithm: Algorithm::Gta,
            instance: String::from(inst),
            seed,
            epoch,
            iterations: 0,
            best_makespan: v,
            theta: Some(0.0),
            elapsed_ms: epoch as u64 * 10,
        };
        let recs = vec![mk("a", 1, 2, 5), mk("a", 1, 1, 7), mk("b", 1, 1, 9), mk("a", 2, 1, 8)];
        let s = series_from_records(&recs, CheckpointMode::Epoch);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].points, vec![(1, 7.0), (2, 5.0)]);
        let t = series_from_records(&recs, CheckpointMode::Time);
        assert_eq!(t[0].points, vec![(10, 7.0), (20, 5.0)]);
    }
}
