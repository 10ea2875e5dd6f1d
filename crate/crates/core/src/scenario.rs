//! The two ensemble experiments.
//!
//! * Peak power vs. shift: for every channel and every `(direction, percent)`
//!   grid point, the Signal and Image peak powers normalized to the
//!   unshifted peak, plus ensemble aggregates.
//! * Multiuser SIR: `n_users` channels drawn from the ensemble transmit
//!   simultaneously with a staggered shift schedule; the last user's shift
//!   is swept and every user's SIR at its own Signal peak is collected.
//!
//! Both runners use rayon for the per-channel / per-subset work and collect
//! in input order, so results do not depend on the thread count.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelEnsemble;
use crate::error::{Error, Result};
use crate::metrics::{
    compute_sir, empirical_cdf, locate_peaks, median, percentile, signal_image_split, Cdf,
};
use crate::precoder::{
    circular_shift, compose_transmit, normalize_equal_power, time_reverse, Prefilter,
    ShiftDirection, ShiftSpec,
};
use crate::propagation::{receive, UserLink};

/// Budget used for the five-user experiment (35 x 31 subsets).
pub const DEFAULT_BUDGET: usize = 1085;
/// Shift increment between consecutive users in the default schedule.
pub const DEFAULT_STEP_PERCENT: f64 = 3.0;
pub const DEFAULT_N_USERS: usize = 5;
/// Seed for the subset enumeration of the multiuser experiment.
pub const DEFAULT_SUBSET_SEED: u64 = 7;

/// One `(direction, percent)` setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub direction: ShiftDirection,
    pub percent: f64,
}

impl GridPoint {
    pub fn new(direction: ShiftDirection, percent: f64) -> Self {
        GridPoint { direction, percent }
    }

    pub fn shift(&self, n_taps: usize) -> Result<ShiftSpec> {
        ShiftSpec::from_percent(self.direction, self.percent, n_taps)
    }
}

/// Percent values `start, start + step, ..., <= end` (inclusive, with a
/// small tolerance on the last point).
pub fn percent_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// Default peak-vs-shift grid: 0..=50 % in 5 % steps, left and right.
pub fn default_peak_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for dir in [ShiftDirection::Left, ShiftDirection::Right] {
        for p in percent_range(0.0, 50.0, 5.0) {
            grid.push(GridPoint::new(dir, p));
        }
    }
    grid
}

/// Default User5 sweep: 12..=30 % in 3 % steps, right then left.
pub fn default_sweep() -> Vec<GridPoint> {
    let mut sweep = Vec::new();
    for dir in [ShiftDirection::Right, ShiftDirection::Left] {
        for p in percent_range(12.0, 30.0, 3.0) {
            sweep.push(GridPoint::new(dir, p));
        }
    }
    sweep
}

/// Per-user shift assignments, ordered by user index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    assignments: Vec<GridPoint>,
}

impl ShiftSchedule {
    pub fn new(assignments: Vec<GridPoint>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::invalid("a schedule needs at least one user"));
        }
        for (j, a) in assignments.iter().enumerate() {
            if !(0.0..100.0).contains(&a.percent) {
                return Err(Error::invalid(format!(
                    "user {} shift {}% outside [0, 100)",
                    j + 1,
                    a.percent
                )));
            }
        }
        Ok(ShiftSchedule { assignments })
    }

    /// User `j` (0-based) shifted by `j * step_percent` in `direction`.
    pub fn staggered(n_users: usize, step_percent: f64, direction: ShiftDirection) -> Result<Self> {
        ShiftSchedule::new(
            (0..n_users)
                .map(|j| GridPoint::new(direction, j as f64 * step_percent))
                .collect(),
        )
    }

    /// Plain TR: no user is shifted.
    pub fn plain(n_users: usize) -> Result<Self> {
        ShiftSchedule::staggered(n_users, 0.0, ShiftDirection::None)
    }

    pub fn assignments(&self) -> &[GridPoint] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Override the last user's assignment; all other users take the same
    /// direction when `align` is set.
    pub fn with_last(&self, point: GridPoint, align: bool) -> Result<Self> {
        let mut assignments = self.assignments.clone();
        if align {
            for a in &mut assignments {
                a.direction = point.direction;
            }
        }
        *assignments.last_mut().expect("schedule is non-empty") = point;
        ShiftSchedule::new(assignments)
    }

    pub fn shifts(&self, n_taps: usize) -> Result<Vec<ShiftSpec>> {
        self.assignments.iter().map(|a| a.shift(n_taps)).collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content digest of an ensemble (ids, spacing, seed and exact tap bits).
pub fn ensemble_digest(ensemble: &ChannelEnsemble) -> String {
    let mut h = Sha256::new();
    h.update(ensemble.tap_spacing().to_bits().to_le_bytes());
    h.update(format!("{:?}", ensemble.seed()).as_bytes());
    for c in ensemble.cirs() {
        h.update(c.id().as_bytes());
        h.update([0u8]);
        for t in c.taps() {
            h.update(t.re.to_bits().to_le_bytes());
            h.update(t.im.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn config_digest<T: Serialize>(params: &T, ensemble: &ChannelEnsemble) -> String {
    let mut text = serde_json::to_string(params).expect("parameters serialize");
    text.push('\n');
    text.push_str(&ensemble_digest(ensemble));
    sha256_hex(text.as_bytes())
}

/// Mean, median and 10th/90th percentiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: median(values).unwrap_or(f64::NAN),
            p10: percentile(values, 0.1).unwrap_or(f64::NAN),
            p90: percentile(values, 0.9).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub cir_id: String,
    pub direction: ShiftDirection,
    pub percent: f64,
    pub shift_taps: usize,
    pub norm_signal_peak_power: f64,
    pub norm_image_peak_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAggregate {
    pub direction: ShiftDirection,
    pub percent: f64,
    pub shift_taps: usize,
    pub signal: Summary,
    pub image: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakVsShiftResult {
    pub grid: Vec<GridPoint>,
    pub n_taps: usize,
    pub ensemble_seed: Option<u64>,
    pub config_digest: String,
    /// Grid-major: all channels for grid point 0, then grid point 1, ...
    pub rows: Vec<PeakRow>,
    pub average: Vec<PeakAggregate>,
}

/// Signal and Image peak power vs. circular shift for every channel.
pub fn run_peak_vs_shift(
    ensemble: &ChannelEnsemble,
    grid: &[GridPoint],
) -> Result<PeakVsShiftResult> {
    if grid.is_empty() {
        return Err(Error::invalid("peak-vs-shift grid is empty"));
    }
    let n = ensemble.n_taps();
    let shifts = grid
        .iter()
        .map(|g| g.shift(n))
        .collect::<Result<Vec<_>>>()?;

    // per_cir[c][g] = (signal, image) normalized powers
    let per_cir = ensemble
        .cirs()
        .par_iter()
        .map(|h| {
            let norm = h.norm();
            shifts
                .iter()
                .map(|&s| {
                    let (sig, img) = signal_image_split(h, s).map_err(|e| e.in_channel(h.id()))?;
                    Ok(((sig / norm).powi(2), (img / norm).powi(2)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(grid.len() * ensemble.len());
    let mut average = Vec::with_capacity(grid.len());
    for (g, (point, shift)) in grid.iter().zip(&shifts).enumerate() {
        let mut sigs = Vec::with_capacity(ensemble.len());
        let mut imgs = Vec::with_capacity(ensemble.len());
        for (h, vals) in ensemble.cirs().iter().zip(&per_cir) {
            let (s, i) = vals[g];
            sigs.push(s);
            imgs.push(i);
            rows.push(PeakRow {
                cir_id: h.id().to_string(),
                direction: point.direction,
                percent: point.percent,
                shift_taps: shift.amount(),
                norm_signal_peak_power: s,
                norm_image_peak_power: i,
            });
        }
        average.push(PeakAggregate {
            direction: point.direction,
            percent: point.percent,
            shift_taps: shift.amount(),
            signal: Summary::of(&sigs),
            image: Summary::of(&imgs),
        });
    }
    Ok(PeakVsShiftResult {
        grid: grid.to_vec(),
        n_taps: n,
        ensemble_seed: ensemble.seed(),
        config_digest: config_digest(&("peak_vs_shift", grid), ensemble),
        rows,
        average,
    })
}

/// Parameters of the multiuser SIR experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiuserConfig {
    pub n_users: usize,
    pub schedule: ShiftSchedule,
    /// Settings for the last user. Empty means: run the schedule as is.
    pub sweep: Vec<GridPoint>,
    pub budget: usize,
    pub seed: u64,
    /// During a sweep, every scheduled shift takes the sweep point's direction.
    pub align_directions: bool,
}

impl MultiuserConfig {
    /// Five users, 3 % stagger, User5 swept 12..=30 % both ways, 1085 subsets.
    pub fn five_user_default() -> Self {
        MultiuserConfig {
            n_users: DEFAULT_N_USERS,
            schedule: ShiftSchedule::staggered(
                DEFAULT_N_USERS,
                DEFAULT_STEP_PERCENT,
                ShiftDirection::Right,
            )
            .expect("valid default schedule"),
            sweep: default_sweep(),
            budget: DEFAULT_BUDGET,
            seed: DEFAULT_SUBSET_SEED,
            align_directions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSir {
    /// 1-based user number.
    pub user: usize,
    /// SIR per subset, in subset order. `+inf` means no interference.
    pub sir_db: Vec<f64>,
    pub cdf: Cdf,
    /// Over all subsets, infinite values sorting last.
    pub median_db: f64,
    pub mean_finite_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPointResult {
    /// The last user's sweep setting, `None` for a schedule-only run.
    pub point: Option<GridPoint>,
    pub shifts: Vec<ShiftSpec>,
    pub users: Vec<UserSir>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiuserSirResult {
    pub config: MultiuserConfig,
    pub n_taps: usize,
    pub ensemble_seed: Option<u64>,
    pub config_digest: String,
    pub total_subsets: u128,
    pub budget_used: usize,
    /// Ensemble indices per subset; user `j` gets `subset[j]`.
    pub subsets: Vec<Vec<usize>>,
    pub points: Vec<SweepPointResult>,
    pub warnings: Vec<String>,
}

impl MultiuserSirResult {
    /// Median SIR of `user` (1-based) at each point.
    pub fn medians(&self, user: usize) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.users[user - 1].median_db)
            .collect()
    }

    /// Sweep point with the highest median SIR for `user`, if any.
    pub fn best_point(&self, user: usize) -> Option<&SweepPointResult> {
        self.points.iter().max_by(|a, b| {
            a.users[user - 1]
                .median_db
                .total_cmp(&b.users[user - 1].median_db)
        })
    }
}

/// `C(n, k)` or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
pub fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for pos in 0..k {
        loop {
            if next >= n {
                return None;
            }
            let count = binomial(n - next - 1, k - pos - 1)?;
            if rank < count {
                out.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    Some(out)
}

/// `budget` distinct `k`-subsets of `0..n`: the first `budget` entries of a
/// seeded random permutation of the lexicographic enumeration.
pub fn sample_subsets(n: usize, k: usize, budget: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let total = binomial(n, k)
        .ok_or_else(|| Error::invalid(format!("C({n}, {k}) overflows the subset index")))?;
    let take = (budget as u128).min(total) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks: Vec<u128> = if (take as u128) * 2 >= total {
        let mut all: Vec<u128> = (0..total).collect();
        all.shuffle(&mut rng);
        all.truncate(take);
        all
    } else {
        let mut seen = HashSet::with_capacity(take);
        let mut ranks = Vec::with_capacity(take);
        while ranks.len() < take {
            let r = rng.random_range(0..total);
            if seen.insert(r) {
                ranks.push(r);
            }
        }
        ranks
    };
    Ok(ranks
        .into_iter()
        .map(|r| unrank_combination(n, k, r).expect("rank below total"))
        .collect())
}

fn evaluate_subset(
    ensemble: &ChannelEnsemble,
    base: &[Prefilter],
    subset: &[usize],
    shifts: &[ShiftSpec],
) -> Result<Vec<f64>> {
    let n = ensemble.n_taps();
    let links = subset
        .iter()
        .zip(shifts)
        .enumerate()
        .map(|(j, (&idx, &shift))| {
            let h = &ensemble.cirs()[idx];
            let p = circular_shift(&base[idx], shift).map_err(|e| e.in_channel(h.id()))?;
            UserLink::new(j, h.clone(), p)
        })
        .collect::<Result<Vec<_>>>()?;
    let filters: Vec<Prefilter> = links.iter().map(|l| l.prefilter().clone()).collect();
    let tx = compose_transmit(&filters)?;
    (0..links.len())
        .map(|j| {
            let rx = receive(&tx, &links, j)?;
            let peak = locate_peaks(&rx, shifts[j], n)?;
            Ok(compute_sir(&rx, &peak)?.sir_db)
        })
        .collect()
}

/// Per-user SIR over `budget` user subsets of the ensemble, for each sweep
/// point of the last user.
pub fn run_multiuser_sir(
    ensemble: &ChannelEnsemble,
    config: &MultiuserConfig,
) -> Result<MultiuserSirResult> {
    let k = config.n_users;
    if k == 0 {
        return Err(Error::invalid("n_users must be at least 1"));
    }
    if ensemble.len() < k {
        return Err(Error::invalid(format!(
            "ensemble has {} channels, need at least {k}",
            ensemble.len()
        )));
    }
    if config.schedule.len() != k {
        return Err(Error::invalid(format!(
            "schedule covers {} users, n_users is {k}",
            config.schedule.len()
        )));
    }
    if config.budget == 0 {
        return Err(Error::invalid("combination budget must be at least 1"));
    }
    let n = ensemble.n_taps();

    let total =
        binomial(ensemble.len(), k).ok_or_else(|| Error::invalid("subset count overflows"))?;
    let mut warnings = Vec::new();
    if config.budget as u128 > total {
        warnings.push(format!(
            "budget {} exceeds the {total} distinct {k}-user subsets; clamped to {total}",
            config.budget
        ));
    }
    let subsets = sample_subsets(ensemble.len(), k, config.budget, config.seed)?;

    let base = ensemble
        .cirs()
        .iter()
        .map(|h| normalize_equal_power(&time_reverse(h)).map_err(|e| e.in_channel(h.id())))
        .collect::<Result<Vec<_>>>()?;

    let settings: Vec<(Option<GridPoint>, ShiftSchedule)> = if config.sweep.is_empty() {
        vec![(None, config.schedule.clone())]
    } else {
        config
            .sweep
            .iter()
            .map(|&p| {
                Ok((
                    Some(p),
                    config.schedule.with_last(p, config.align_directions)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?
    };

    let mut points = Vec::with_capacity(settings.len());
    for (point, schedule) in settings {
        let shifts = schedule.shifts(n)?;
        let per_subset = subsets
            .par_iter()
            .map(|s| evaluate_subset(ensemble, &base, s, &shifts))
            .collect::<Result<Vec<_>>>()?;
        let users = (0..k)
            .map(|j| {
                let sir: Vec<f64> = per_subset.iter().map(|v| v[j]).collect();
                let cdf = empirical_cdf(&sir)?;
                let finite: Vec<f64> = sir.iter().copied().filter(|x| x.is_finite()).collect();
                let mean_finite_db = if finite.is_empty() {
                    None
                } else {
                    Some(finite.iter().sum::<f64>() / finite.len() as f64)
                };
                Ok(UserSir {
                    user: j + 1,
                    median_db: median(&sir).expect("non-empty"),
                    mean_finite_db,
                    sir_db: sir,
                    cdf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(SweepPointResult {
            point,
            shifts,
            users,
        });
    }

    Ok(MultiuserSirResult {
        config: config.clone(),
        n_taps: n,
        ensemble_seed: ensemble.seed(),
        config_digest: config_digest(&("multiuser_sir", config), ensemble),
        total_subsets: total,
        budget_used: subsets.len(),
        subsets,
        points,
        warnings,
    })
}
