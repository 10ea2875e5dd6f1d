//! Per-subset SIR from the scenario runner against a from-scratch
//! computation of the composite transmission.

use cstr_sim::channel::{ChannelEnsemble, SyntheticProfile};
use cstr_sim::precoder::{ShiftDirection, ShiftSpec};
use cstr_sim::scenario::{run_multiuser_sir, GridPoint, MultiuserConfig, ShiftSchedule};
use cstr_sim::Complex64 as C;

fn conv(a: &[C], b: &[C]) -> Vec<C> {
    let mut y = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, z) in b.iter().enumerate() {
            y[i + j] += x * z;
        }
    }
    y
}

fn prefilter(h: &[C], shift: ShiftSpec) -> Vec<C> {
    let n = h.len() as i64;
    let norm = h.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt();
    let s = match shift.direction() {
        ShiftDirection::None => 0,
        ShiftDirection::Right => shift.amount() as i64,
        ShiftDirection::Left => -(shift.amount() as i64),
    };
    (0..n)
        .map(|i| h[(n - 1 - (i - s).rem_euclid(n)) as usize].conj() / norm)
        .collect()
}

fn oracle_sir(hs: &[&[C]], shifts: &[ShiftSpec], j: usize) -> f64 {
    let n = hs[0].len();
    let ps: Vec<Vec<C>> = hs
        .iter()
        .zip(shifts)
        .map(|(h, &s)| prefilter(h, s))
        .collect();
    let sum: Vec<C> = (0..n).map(|i| ps.iter().map(|p| p[i]).sum()).collect();
    let scale = sum.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt();
    let tx: Vec<C> = sum.iter().map(|t| t / scale).collect();
    let own: Vec<C> = ps[j].iter().map(|t| t / scale).collect();
    let idx = match shifts[j].direction() {
        ShiftDirection::None => n - 1,
        ShiftDirection::Right => n - 1 + shifts[j].amount(),
        ShiftDirection::Left => n - 1 - shifts[j].amount(),
    };
    let total = conv(&tx, hs[j])[idx];
    let signal = conv(&own, hs[j])[idx];
    let interference = total - signal;
    10.0 * (signal.norm_sqr() / interference.norm_sqr()).log10()
}

#[test]
fn runner_matches_brute_force() {
    let profile = SyntheticProfile {
        n_taps: 96,
        ..SyntheticProfile::default()
    };
    let ensemble = ChannelEnsemble::synthetic(9, &profile, 11).unwrap();
    for (direction, align) in [(ShiftDirection::Right, true), (ShiftDirection::Left, false)] {
        let cfg = MultiuserConfig {
            n_users: 4,
            schedule: ShiftSchedule::staggered(4, 5.0, direction).unwrap(),
            sweep: vec![
                GridPoint::new(ShiftDirection::Right, 20.0),
                GridPoint::new(ShiftDirection::Left, 40.0),
            ],
            budget: 25,
            seed: 3,
            align_directions: align,
        };
        let r = run_multiuser_sir(&ensemble, &cfg).unwrap();
        assert_eq!(r.subsets.len(), 25);
        for pt in &r.points {
            for (s, subset) in r.subsets.iter().enumerate() {
                let hs: Vec<&[C]> = subset.iter().map(|&c| ensemble.cirs()[c].taps()).collect();
                for (j, u) in pt.users.iter().enumerate() {
                    let want = oracle_sir(&hs, &pt.shifts, j);
                    let got = u.sir_db[s];
                    assert!(
                        (got - want).abs() < 1e-9 * want.abs().max(1.0),
                        "subset {s} user {j}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn sweep_point_overrides_only_the_last_user() {
    let ensemble =
        ChannelEnsemble::synthetic(6, &SyntheticProfile::exponential(50, 8.0), 2).unwrap();
    let cfg = MultiuserConfig {
        n_users: 3,
        schedule: ShiftSchedule::staggered(3, 4.0, ShiftDirection::Right).unwrap(),
        sweep: vec![GridPoint::new(ShiftDirection::Left, 30.0)],
        budget: 5,
        seed: 1,
        align_directions: true,
    };
    let r = run_multiuser_sir(&ensemble, &cfg).unwrap();
    // 4 % of 50 taps is 2; aligned to the sweep's direction.
    assert_eq!(
        r.points[0].shifts,
        vec![ShiftSpec::none(), ShiftSpec::left(2), ShiftSpec::left(15)]
    );
}
