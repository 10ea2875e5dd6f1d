//! One channel, one prefilter. Shows where the Signal and Image peaks land
//! for a few circular shifts and how the no-shift peak amplitude is split
//! between them.
//!
//! ```text
//! cargo run --example signal_image_split
//! ```

use cstr_sim::channel::SyntheticProfile;
use cstr_sim::metrics::{locate_peaks, signal_image_split};
use cstr_sim::precoder::{build_prefilter, compose_transmit, ShiftSpec};
use cstr_sim::propagation::{receive, UserLink};

fn main() -> cstr_sim::Result<()> {
    let h = SyntheticProfile::default().generate("room", 42)?;
    let n = h.len();
    println!("N = {n} taps, ||h|| = {:.4}", h.norm());
    println!(
        "{:<10}{:>8}{:>8}{:>10}{:>10}{:>10}",
        "shift", "sig@", "img@", "|sig|", "|img|", "sum"
    );
    for shift in [
        ShiftSpec::none(),
        ShiftSpec::right(17),
        ShiftSpec::right(116),
        ShiftSpec::left(17),
        ShiftSpec::left(116),
    ] {
        let p = build_prefilter(&h, shift)?;
        let tx = compose_transmit(std::slice::from_ref(&p))?;
        let rx = receive(&tx, &[UserLink::new(1, h.clone(), p)?], 0)?;
        let peaks = locate_peaks(&rx, shift, n)?;
        let (s, i) = signal_image_split(&h, shift)?;
        let label = match shift.amount() {
            0 => "none".to_string(),
            l => format!("{} {l}", shift.direction()),
        };
        let img_at = peaks.image_peak_index.map_or("-".into(), |i| i.to_string());
        println!(
            "{label:<10}{:>8}{img_at:>8}{s:>10.4}{i:>10.4}{:>10.4}",
            peaks.signal_peak_index,
            s + i
        );
    }
    Ok(())
}
