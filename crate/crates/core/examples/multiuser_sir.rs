//! Five users share one transmitter. Each user's prefilter gets its own
//! circular shift (0, 3, 6, 9, 12 % of N) and User5's shift is then swept.
//!
//! Prints median SIR per user for plain TR, for the staggered schedule, and
//! for every sweep point of User5.
//!
//! ```text
//! cargo run --release --example multiuser_sir [budget]
//! ```

use cstr_sim::channel::ChannelEnsemble;
use cstr_sim::scenario::{run_multiuser_sir, MultiuserConfig, ShiftSchedule};

fn print_medians(label: &str, medians: impl Iterator<Item = f64>) {
    let cols: Vec<String> = medians.map(|m| format!("{m:7.2}")).collect();
    println!("{label:<14}{}", cols.join(" "));
}

fn main() -> cstr_sim::Result<()> {
    let budget = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("budget must be an integer"))
        .unwrap_or(cstr_sim::scenario::DEFAULT_BUDGET);
    let ensemble = ChannelEnsemble::default_synthetic();

    let mut cfg = MultiuserConfig::five_user_default();
    cfg.budget = budget;
    let sweep = run_multiuser_sir(&ensemble, &cfg)?;

    cfg.sweep.clear();
    let staggered = run_multiuser_sir(&ensemble, &cfg)?;
    cfg.schedule = ShiftSchedule::plain(cfg.n_users)?;
    let plain = run_multiuser_sir(&ensemble, &cfg)?;

    println!(
        "{} subsets of {} users from {} channels, median SIR in dB",
        sweep.budget_used,
        cfg.n_users,
        ensemble.len()
    );
    println!(
        "{:<14}{}",
        "",
        (1..=cfg.n_users)
            .map(|u| format!("  User{u}"))
            .collect::<String>()
    );
    print_medians(
        "plain TR",
        plain.points[0].users.iter().map(|u| u.median_db),
    );
    print_medians(
        "staggered",
        staggered.points[0].users.iter().map(|u| u.median_db),
    );
    for pt in &sweep.points {
        let g = pt.point.expect("sweep point");
        print_medians(
            &format!("U5 {} {}%", g.direction, g.percent),
            pt.users.iter().map(|u| u.median_db),
        );
    }
    Ok(())
}
