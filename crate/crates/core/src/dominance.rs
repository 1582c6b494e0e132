//! Probability dominance between two algorithms over a set of instances.
//!
//! For an instance `c`, `P(A < B | c)` is the fraction of run pairs where A's
//! value is strictly smaller than B's. Over a set of instances the estimate is
//! the plain average, each instance counting equally. Confidence intervals
//! come from a two-level percentile bootstrap: instances are resampled with
//! replacement, then the runs of A and of B inside each drawn instance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DominanceError {
    #[error("empty sample vector")]
    EmptySample,
    #[error("no instances to aggregate")]
    NoInstances,
    #[error("confidence level {0} must lie in (0, 1)")]
    Level(f64),
    #[error("at least one bootstrap replicate is required")]
    NoReplicates,
    #[error("the two log sets share no instance")]
    DisjointInstances,
    #[error("no data for algorithm {side} on instance {instance} at checkpoint {checkpoint}")]
    MissingCheckpoint {
        side: &'static str,
        instance: String,
        checkpoint: u64,
    },
}

/// Numbers of pairs with `x < y`, `x > y` and `x == y`.
pub fn pair_counts(xs: &[f64], ys: &[f64]) -> Result<(usize, usize, usize), DominanceError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(DominanceError::EmptySample);
    }
    let (mut lt, mut gt, mut eq) = (0, 0, 0);
    for x in xs {
        for y in ys {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Less) => lt += 1,
                Some(std::cmp::Ordering::Greater) => gt += 1,
                _ => eq += 1,
            }
        }
    }
    Ok((lt, gt, eq))
}

/// `P(x < y)` over all pairs; ties count for neither side.
pub fn win_prob(xs: &[f64], ys: &[f64]) -> Result<f64, DominanceError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(DominanceError::EmptySample);
    }
    let wins: usize = xs
        .iter()
        .map(|x| ys.iter().filter(|&&y| *x < y).count())
        .sum();
    Ok(wins as f64 / (xs.len() * ys.len()) as f64)
}

/// Fraction of pairs with `x == y`.
pub fn tie_mass(xs: &[f64], ys: &[f64]) -> Result<f64, DominanceError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(DominanceError::EmptySample);
    }
    let ties: usize = xs
        .iter()
        .map(|x| ys.iter().filter(|&&y| *x == y).count())
        .sum();
    Ok(ties as f64 / (xs.len() * ys.len()) as f64)
}

/// Unweighted mean over instances.
pub fn aggregate(probs: &[f64]) -> Result<f64, DominanceError> {
    if probs.is_empty() {
        return Err(DominanceError::NoInstances);
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// Values of both algorithms on one instance at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSamples {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// `(P(A < B), P(B < A))` over the instance set.
pub fn estimate(samples: &[InstanceSamples]) -> Result<(f64, f64), DominanceError> {
    let ab: Vec<f64> = samples
        .iter()
        .map(|s| win_prob(&s.a, &s.b))
        .collect::<Result<_, _>>()?;
    let ba: Vec<f64> = samples
        .iter()
        .map(|s| win_prob(&s.b, &s.a))
        .collect::<Result<_, _>>()?;
    Ok((aggregate(&ab)?, aggregate(&ba)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// True if the two intervals do not overlap.
    pub fn separated_from(&self, other: &Interval) -> bool {
        self.hi < other.lo || other.hi < self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub a_lt_b: Interval,
    pub b_lt_a: Interval,
    /// One instance with a single run per algorithm: every replicate equals
    /// the point estimate.
    pub degenerate: bool,
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be non-empty and ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample<R: Rng>(v: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..v.len()).map(|_| v[rng.gen_range(0..v.len())]));
}

/// Percentile bootstrap for both directions at confidence `level`.
///
/// Replicate `r` draws from its own ChaCha stream `(seed, r)`, so the result
/// does not depend on the order in which replicates are computed.
pub fn bootstrap_ci(
    samples: &[InstanceSamples],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCi, DominanceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(DominanceError::Level(level));
    }
    if replicates == 0 {
        return Err(DominanceError::NoReplicates);
    }
    if samples.is_empty() {
        return Err(DominanceError::NoInstances);
    }
    let (point_ab, point_ba) = estimate(samples)?;
    let degenerate = samples.len() == 1 && samples[0].a.len() == 1 && samples[0].b.len() == 1;
    if degenerate {
        let a = Interval {
            lo: point_ab,
            hi: point_ab,
        };
        let b = Interval {
            lo: point_ba,
            hi: point_ba,
        };
        return Ok(BootstrapCi {
            a_lt_b: a,
            b_lt_a: b,
            degenerate,
        });
    }

    let k = samples.len();
    let mut ab = Vec::with_capacity(replicates);
    let mut ba = Vec::with_capacity(replicates);
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for r in 0..replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let (mut sum_ab, mut sum_ba) = (0.0, 0.0);
        for _ in 0..k {
            let s = &samples[rng.gen_range(0..k)];
            resample(&s.a, &mut rng, &mut xa);
            resample(&s.b, &mut rng, &mut xb);
            sum_ab += win_prob(&xa, &xb)?;
            sum_ba += win_prob(&xb, &xa)?;
        }
        ab.push(sum_ab / k as f64);
        ba.push(sum_ba / k as f64);
    }
    ab.sort_by(f64::total_cmp);
    ba.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let interval = |v: &[f64]| Interval {
        lo: quantile(v, alpha / 2.0),
        hi: quantile(v, 1.0 - alpha / 2.0),
    };
    Ok(BootstrapCi {
        a_lt_b: interval(&ab),
        b_lt_a: interval(&ba),
        degenerate,
    })
}

/// Best-so-far values of one run, indexed by checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub instance: String,
    pub run: u64,
    /// `(checkpoint, value)` in increasing checkpoint order.
    pub points: Vec<(u64, f64)>,
}

/// How a run's log is read at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointMode {
    /// The value recorded exactly at that epoch.
    Epoch,
    /// The latest value recorded at or before that time (milliseconds).
    Time,
}

impl RunSeries {
    pub fn value_at(&self, checkpoint: u64, mode: CheckpointMode) -> Option<f64> {
        match mode {
            CheckpointMode::Epoch => self
                .points
                .iter()
                .find(|p| p.0 == checkpoint)
                .map(|p| p.1),
            CheckpointMode::Time => self
                .points
                .iter()
                .take_while(|p| p.0 <= checkpoint)
                .last()
                .map(|p| p.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub checkpoint: u64,
    pub p_a_lt_b: f64,
    pub a_ci: Interval,
    pub p_b_lt_a: f64,
    pub b_ci: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceCurve {
    pub points: Vec<CurvePoint>,
    /// Instances present in both log sets, in sorted order.
    pub instances: Vec<String>,
}

impl DominanceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("checkpoint,p_a_lt_b,p_a_lo,p_a_hi,p_b_lt_a,p_b_lo,p_b_hi\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.checkpoint, p.p_a_lt_b, p.a_ci.lo, p.a_ci.hi, p.p_b_lt_a, p.b_ci.lo, p.b_ci.hi
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub mode: CheckpointMode,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            mode: CheckpointMode::Epoch,
            replicates: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

fn group(series: &[RunSeries]) -> BTreeMap<&str, Vec<&RunSeries>> {
    let mut m: BTreeMap<&str, Vec<&RunSeries>> = BTreeMap::new();
    for s in series {
        m.entry(s.instance.as_str()).or_default().push(s);
    }
    m
}

/// Samples of both algorithms at `checkpoint` for every shared instance.
pub fn samples_at(
    a: &[RunSeries],
    b: &[RunSeries],
    checkpoint: u64,
    mode: CheckpointMode,
) -> Result<Vec<InstanceSamples>, DominanceError> {
    let (ga, gb) = (group(a), group(b));
    let shared: Vec<&str> = ga.keys().filter(|k| gb.contains_key(*k)).copied().collect();
    if shared.is_empty() {
        return Err(DominanceError::DisjointInstances);
    }
    let collect = |runs: &[&RunSeries], side: &'static str, inst: &str| {
        runs.iter()
            .map(|r| {
                r.value_at(checkpoint, mode)
                    .ok_or_else(|| DominanceError::MissingCheckpoint {
                        side,
                        instance: inst.to_string(),
                        checkpoint,
                    })
            })
            .collect::<Result<Vec<f64>, _>>()
    };
    shared
        .iter()
        .map(|inst| {
            Ok(InstanceSamples {
                a: collect(&ga[inst], "A", inst)?,
                b: collect(&gb[inst], "B", inst)?,
            })
        })
        .collect()
}

/// Dominance estimates and bootstrap intervals at every checkpoint.
/// Checkpoint `i` uses bootstrap seed `opts.seed + i`.
pub fn dominance_curve(
    a: &[RunSeries],
    b: &[RunSeries],
    checkpoints: &[u64],
    opts: &CurveOptions,
) -> Result<DominanceCurve, DominanceError> {
    let (ga, gb) = (group(a), group(b));
    let instances: Vec<String> = ga
        .keys()
        .filter(|k| gb.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if instances.is_empty() {
        return Err(DominanceError::DisjointInstances);
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for (i, &c) in checkpoints.iter().enumerate() {
        let samples = samples_at(a, b, c, opts.mode)?;
        let (p_ab, p_ba) = estimate(&samples)?;
        let ci = bootstrap_ci(
            &samples,
            opts.replicates,
            opts.level,
            opts.seed.wrapping_add(i as u64),
        )?;
        points.push(CurvePoint {
            checkpoint: c,
            p_a_lt_b: p_ab,
            a_ci: ci.a_lt_b,
            p_b_lt_a: p_ba,
            b_ci: ci.b_lt_a,
        });
    }
    Ok(DominanceCurve { points, instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn win_prob_examples() {
        assert_eq!(win_prob(&[1.0], &[2.0]).unwrap(), 1.0);
        assert_eq!(win_prob(&[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(win_prob(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.75);
        assert_eq!(win_prob(&[], &[1.0]), Err(DominanceError::EmptySample));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[0.3]).unwrap(), 0.3);
        assert_eq!(aggregate(&[0.0, 1.0]).unwrap(), 0.5);
        assert!((aggregate(&[0.25, 0.5, 1.0]).unwrap() - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(aggregate(&[]), Err(DominanceError::NoInstances));
    }

    #[test]
    fn identical_replicates_collapse() {
        let s = vec![InstanceSamples {
            a: vec![3.0, 3.0],
            b: vec![5.0, 5.0, 5.0],
        }];
        let ci = bootstrap_ci(&s, 200, 0.95, 1).unwrap();
        assert!(!ci.degenerate);
        assert_eq!(ci.a_lt_b, Interval { lo: 1.0, hi: 1.0 });
        assert_eq!(ci.b_lt_a, Interval { lo: 0.0, hi: 0.0 });

        let single = vec![InstanceSamples {
            a: vec![3.0],
            b: vec![4.0],
        }];
        let ci = bootstrap_ci(&single, 10, 0.95, 1).unwrap();
        assert!(ci.degenerate);
        assert_eq!(ci.a_lt_b.lo, 1.0);
    }

    #[test]
    fn bootstrap_errors() {
        let s = vec![InstanceSamples {
            a: vec![3.0],
            b: vec![4.0, 1.0],
        }];
        assert_eq!(bootstrap_ci(&s, 0, 0.95, 1), Err(DominanceError::NoReplicates));
        assert_eq!(bootstrap_ci(&s, 10, 1.0, 1), Err(DominanceError::Level(1.0)));
        assert_eq!(bootstrap_ci(&[], 10, 0.9, 1), Err(DominanceError::NoInstances));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
    }

    fn series(instance: &str, run: u64, values: &[f64]) -> RunSeries {
        RunSeries {
            instance: instance.to_string(),
            run,
            points: values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as u64 + 1, v))
                .collect(),
        }
    }

    #[test]
    fn curve_extremes() {
        let a = vec![series("x", 0, &[10.0, 8.0]), series("x", 1, &[9.0, 8.0])];
        let b = vec![series("x", 0, &[12.0, 9.0]), series("x", 1, &[11.0, 9.0])];
        let c = dominance_curve(&a, &b, &[1, 2], &CurveOptions::default()).unwrap();
        assert!(c.points.iter().all(|p| p.p_a_lt_b == 1.0 && p.p_b_lt_a == 0.0));

        let same = dominance_curve(&a, &a, &[1, 2], &CurveOptions::default()).unwrap();
        assert_eq!((same.points[0].p_a_lt_b, same.points[0].p_b_lt_a), (0.25, 0.25));
        assert_eq!((same.points[1].p_a_lt_b, same.points[1].p_b_lt_a), (0.0, 0.0));
    }

    #[test]
    fn curve_errors() {
        let a = vec![series("x", 0, &[10.0])];
        let b = vec![series("y", 0, &[12.0])];
        assert_eq!(
            dominance_curve(&a, &b, &[1], &CurveOptions::default()),
            Err(DominanceError::DisjointInstances)
        );
        let b = vec![series("x", 0, &[12.0])];
        assert!(matches!(
            dominance_curve(&a, &b, &[2], &CurveOptions::default()),
            Err(DominanceError::MissingCheckpoint { side: "A", .. })
        ));
    }

    #[test]
    fn time_checkpoints_take_latest_value() {
        let s = RunSeries {
            instance: "x".into(),
            run: 0,
            points: vec![(100, 9.0), (250, 7.0), (400, 6.0)],
        };
        assert_eq!(s.value_at(50, CheckpointMode::Time), None);
        assert_eq!(s.value_at(100, CheckpointMode::Time), Some(9.0));
        assert_eq!(s.value_at(399, CheckpointMode::Time), Some(7.0));
        assert_eq!(s.value_at(399, CheckpointMode::Epoch), None);
    }

    #[test]
    fn csv_layout() {
        let a = vec![series("x", 0, &[10.0])];
        let b = vec![series("x", 0, &[12.0])];
        let c = dominance_curve(&a, &b, &[1], &CurveOptions::default()).unwrap();
        assert_eq!(
            c.to_csv(),
            "checkpoint,p_a_lt_b,p_a_lo,p_a_hi,p_b_lt_a,p_b_lo,p_b_hi\n1,1,1,1,0,0,0\n"
        );
    }
}
