//! Turn a sampled frequency response (as a network analyzer would record it)
//! into an impulse response.
//!
//! The input here is the exact response of a three-path channel, so the
//! recovered taps should show those three paths and nothing else.
//!
//! ```text
//! cargo run --example ingest_freq
//! ```

use std::f64::consts::PI;

use cstr_sim::channel::{
    cir_from_freq_response, format_freq_response, parse_freq_response, FreqResponse,
};
use cstr_sim::Complex64;

fn main() -> cstr_sim::Result<()> {
    let m = 64;
    let paths = [(0usize, 1.0), (5, 0.5), (12, -0.25)];
    let gains = (0..m)
        .map(|k| {
            paths
                .iter()
                .map(|&(d, a)| Complex64::from_polar(a, -2.0 * PI * (k * d) as f64 / m as f64))
                .sum()
        })
        .collect();
    let fr = FreqResponse::new(2.4e9, 125e3, gains)?;

    // Round-trip through the text format, as if read from disk.
    let fr = parse_freq_response(&format_freq_response(&fr))?;
    let h = cir_from_freq_response(&fr, "three_paths")?;
    println!(
        "{} points over {:.1} MHz -> {} taps, {:.1} ns apart",
        fr.len(),
        fr.len() as f64 * fr.f_step() / 1e6,
        h.len(),
        h.tap_spacing() * 1e9
    );
    for (i, t) in h.taps().iter().enumerate().filter(|(_, t)| t.norm() > 1e-9) {
        println!("  tap {i:>2} at {:>7.1} ns: {:+.4}", h.delay(i) * 1e9, t.re);
    }
    Ok(())
}
