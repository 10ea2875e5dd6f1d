//! Average normalized Signal and Image peak power over the default 35-channel
//! ensemble as the shift grows from 0 to 50 % of N, left and right.
//!
//! ```text
//! cargo run --release --example peak_vs_shift
//! ```

use cstr_sim::channel::ChannelEnsemble;
use cstr_sim::precoder::ShiftDirection;
use cstr_sim::scenario::{default_peak_grid, run_peak_vs_shift};

fn main() -> cstr_sim::Result<()> {
    let ensemble = ChannelEnsemble::default_synthetic();
    let r = run_peak_vs_shift(&ensemble, &default_peak_grid())?;
    println!(
        "{:>8}  {:>12}{:>12}  {:>12}{:>12}",
        "percent", "left sig", "left img", "right sig", "right img"
    );
    let side = |d: ShiftDirection| r.average.iter().filter(move |a| a.direction == d);
    for (l, rt) in side(ShiftDirection::Left).zip(side(ShiftDirection::Right)) {
        println!(
            "{:>7}%  {:>12.4}{:>12.4}  {:>12.4}{:>12.4}",
            l.percent, l.signal.mean, l.image.mean, rt.signal.mean, rt.image.mean
        );
    }
    Ok(())
}
