//! Draw a synthetic channel ensemble, save it as a `.cir` file and read it
//! back.
//!
//! ```text
//! cargo run --example generate_ensemble [out.cir]
//! ```

use cstr_sim::channel::{load_cir_file, save_cir_file, ChannelEnsemble, SyntheticProfile};

fn main() -> cstr_sim::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("ensemble.cir")
            .display()
            .to_string()
    });
    let profile = SyntheticProfile {
        n_taps: 128,
        ..SyntheticProfile::default()
    };
    let ensemble = ChannelEnsemble::synthetic(8, &profile, 2024)?;
    save_cir_file(&ensemble, &path)?;

    let back = load_cir_file(&path)?;
    assert_eq!(back, ensemble);
    println!(
        "wrote {} channels of {} taps to {path}",
        back.len(),
        back.n_taps()
    );
    for h in back.cirs() {
        let early: f64 = h.taps()[..10].iter().map(|t| t.norm_sqr()).sum();
        println!(
            "  {}  energy {:.3}  first 10 taps hold {:.1}%",
            h.id(),
            h.energy(),
            100.0 * early / h.energy()
        );
    }
    Ok(())
}
