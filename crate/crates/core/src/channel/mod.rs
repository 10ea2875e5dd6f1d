//! Channel impulse responses: construction, synthetic generation and
//! ingestion of swept frequency responses.
//!
//! A [`Cir`] is a finite sequence of complex multipath taps at uniform delay
//! spacing. Tap `i` sits at delay `i * tap_spacing`.

mod io;

pub use io::{
    format_cir, format_freq_response, load_cir_file, load_freq_response_file, parse_cir,
    parse_freq_response, save_cir_file, save_freq_response_file,
};

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tap count of the default synthetic ensemble.
pub const DEFAULT_N_TAPS: usize = 580;
/// Number of receiver positions in the default synthetic ensemble.
pub const DEFAULT_N_CIRS: usize = 35;
/// Power-delay decay constant (in taps) of the default ensemble.
pub const DEFAULT_DECAY_TAPS: f64 = 20.0;
/// Diffuse power floor of the default ensemble, relative to the first tap.
pub const DEFAULT_NOISE_FLOOR: f64 = 0.01;
/// Seed of the default synthetic ensemble.
pub const DEFAULT_ENSEMBLE_SEED: u64 = 1;
/// Tap spacing matching a 2.24 MHz sweep step over 580 points.
pub const DEFAULT_TAP_SPACING: f64 = 1.0 / (580.0 * 2.24e6);

/// Channel impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cir {
    id: String,
    taps: Vec<Complex64>,
    tap_spacing: f64,
}

impl Cir {
    pub fn new(id: impl Into<String>, taps: Vec<Complex64>, tap_spacing: f64) -> Result<Self> {
        let id = id.into();
        if taps.is_empty() {
            return Err(Error::invalid(format!("channel `{id}` has no taps")));
        }
        if let Some(i) = taps
            .iter()
            .position(|t| !t.re.is_finite() || !t.im.is_finite())
        {
            return Err(Error::invalid(format!(
                "channel `{id}` tap {i} is not finite"
            )));
        }
        if !(tap_spacing.is_finite() && tap_spacing > 0.0) {
            return Err(Error::invalid(format!(
                "channel `{id}` tap spacing must be positive, got {tap_spacing}"
            )));
        }
        Ok(Cir {
            id,
            taps,
            tap_spacing,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn tap_spacing(&self) -> f64 {
        self.tap_spacing
    }

    /// Number of taps, `N`.
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Delay of tap `i` in seconds.
    pub fn delay(&self, i: usize) -> f64 {
        i as f64 * self.tap_spacing
    }

    /// Total energy `sum |h_i|^2`.
    pub fn energy(&self) -> f64 {
        energy(&self.taps)
    }

    /// Frobenius norm `sqrt(sum |h_i|^2)`.
    pub fn norm(&self) -> f64 {
        self.energy().sqrt()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

pub(crate) fn energy(taps: &[Complex64]) -> f64 {
    taps.iter().map(|t| t.norm_sqr()).sum()
}

/// Exponentially decaying Rayleigh power-delay profile.
///
/// Expected power of tap `i` is `exp(-i / decay_taps) + noise_floor`. A zero
/// floor gives the pure exponential profile; a positive floor adds a diffuse
/// tail at constant power, as seen in swept measurements after the IFFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub n_taps: usize,
    pub decay_taps: f64,
    pub noise_floor: f64,
    pub tap_spacing: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            n_taps: DEFAULT_N_TAPS,
            decay_taps: DEFAULT_DECAY_TAPS,
            noise_floor: DEFAULT_NOISE_FLOOR,
            tap_spacing: DEFAULT_TAP_SPACING,
        }
    }
}

impl SyntheticProfile {
    /// Pure exponential profile with no floor.
    pub fn exponential(n_taps: usize, decay_taps: f64) -> Self {
        SyntheticProfile {
            n_taps,
            decay_taps,
            noise_floor: 0.0,
            tap_spacing: DEFAULT_TAP_SPACING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_taps == 0 {
            return Err(Error::invalid("n_taps must be at least 1"));
        }
        if !(self.decay_taps.is_finite() && self.decay_taps > 0.0) {
            return Err(Error::invalid(format!(
                "decay constant must be positive, got {}",
                self.decay_taps
            )));
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return Err(Error::invalid(format!(
                "noise floor must be non-negative, got {}",
                self.noise_floor
            )));
        }
        if !(self.tap_spacing.is_finite() && self.tap_spacing > 0.0) {
            return Err(Error::invalid(format!(
                "tap spacing must be positive, got {}",
                self.tap_spacing
            )));
        }
        Ok(())
    }

    /// Expected power of tap `i`.
    pub fn expected_power(&self, i: usize) -> f64 {
        (-(i as f64) / self.decay_taps).exp() + self.noise_floor
    }

    fn amplitude(&self, i: usize) -> f64 {
        if self.noise_floor == 0.0 {
            (-(i as f64) / (2.0 * self.decay_taps)).exp()
        } else {
            self.expected_power(i).sqrt()
        }
    }

    /// Draw one channel. Identical `(profile, seed)` pairs give bit-identical taps.
    pub fn generate(&self, id: impl Into<String>, seed: u64) -> Result<Cir> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps = (0..self.n_taps)
            .map(|i| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * (FRAC_1_SQRT_2 * self.amplitude(i))
            })
            .collect();
        Cir::new(id, taps, self.tap_spacing)
    }
}

/// Single synthetic CIR with a pure exponential power-delay profile:
/// `taps[i] = g_i * exp(-i / (2 * decay))`, `g_i` complex standard normal.
pub fn generate_synthetic_cir(n_taps: usize, decay_constant: f64, rng_seed: u64) -> Result<Cir> {
    SyntheticProfile::exponential(n_taps, decay_constant)
        .generate(format!("syn{rng_seed}"), rng_seed)
}

/// Uniformly sampled complex frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqResponse {
    f_start: f64,
    f_step: f64,
    gains: Vec<Complex64>,
}

/// Relative tolerance on the frequency step when checking grid uniformity.
const GRID_TOLERANCE: f64 = 1e-9;

impl FreqResponse {
    pub fn new(f_start: f64, f_step: f64, gains: Vec<Complex64>) -> Result<Self> {
        if !f_start.is_finite() {
            return Err(Error::invalid(format!(
                "f_start must be finite, got {f_start}"
            )));
        }
        if !(f_step.is_finite() && f_step > 0.0) {
            return Err(Error::invalid(format!(
                "f_step must be positive, got {f_step}"
            )));
        }
        if let Some(i) = gains
            .iter()
            .position(|g| !g.re.is_finite() || !g.im.is_finite())
        {
            return Err(Error::invalid(format!("gain {i} is not finite")));
        }
        Ok(FreqResponse {
            f_start,
            f_step,
            gains,
        })
    }

    /// Build from explicit `(frequency, gain)` points, checking that the grid
    /// is strictly increasing with a constant step. Grid errors are reported
    /// as format errors against the 1-based point number.
    pub fn from_points(points: &[(f64, Complex64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::format(
                points.len(),
                "a frequency response needs at least 2 points",
            ));
        }
        let f_start = points[0].0;
        let f_step = points[1].0 - points[0].0;
        if f_step.is_nan() || f_step <= 0.0 {
            return Err(Error::format(2, "frequencies must be strictly increasing"));
        }
        for (k, &(f, _)) in points.iter().enumerate() {
            let expected = f_start + k as f64 * f_step;
            if ((f - expected) / f_step).abs() > GRID_TOLERANCE * (k.max(1) as f64) {
                return Err(Error::format(
                    k + 1,
                    format!("non-uniform frequency grid: {f} Hz, expected {expected} Hz"),
                ));
            }
        }
        FreqResponse::new(f_start, f_step, points.iter().map(|p| p.1).collect())
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_step(&self) -> f64 {
        self.f_step
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.f_step
    }
}

/// Convert a swept frequency response into a CIR via the inverse DFT.
///
/// `taps[n] = (1/M) sum_k G_k exp(+j 2 pi k n / M)` with `M` points; the tap
/// spacing is `1 / (M * f_step)`.
pub fn cir_from_freq_response(fr: &FreqResponse, id: impl Into<String>) -> Result<Cir> {
    let m = fr.len();
    if m < 2 {
        return Err(Error::invalid(
            "a frequency response needs at least 2 points",
        ));
    }
    let mut buf = fr.gains.clone();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(m)
        .process(&mut buf);
    let scale = 1.0 / m as f64;
    for t in &mut buf {
        *t *= scale;
    }
    Cir::new(id, buf, 1.0 / (m as f64 * fr.f_step))
}

/// Ordered set of CIRs sharing one tap count and tap spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    cirs: Vec<Cir>,
    seed: Option<u64>,
}

impl ChannelEnsemble {
    pub fn new(cirs: Vec<Cir>, seed: Option<u64>) -> Result<Self> {
        let Some(first) = cirs.first() else {
            return Err(Error::invalid("an ensemble needs at least one channel"));
        };
        let (n, spacing) = (first.len(), first.tap_spacing());
        for c in &cirs[1..] {
            if c.len() != n {
                return Err(Error::invalid(format!(
                    "channel `{}` has {} taps, ensemble has {n}",
                    c.id(),
                    c.len()
                )));
            }
            if c.tap_spacing() != spacing {
                return Err(Error::invalid(format!(
                    "channel `{}` tap spacing {} differs from ensemble spacing {spacing}",
                    c.id(),
                    c.tap_spacing()
                )));
            }
        }
        Ok(ChannelEnsemble { cirs, seed })
    }

    /// `n_cirs` independent draws of `profile`. Member seeds come from a
    /// generator keyed by `seed`, so the whole ensemble is reproducible.
    pub fn synthetic(n_cirs: usize, profile: &SyntheticProfile, seed: u64) -> Result<Self> {
        if n_cirs == 0 {
            return Err(Error::invalid("n_cirs must be at least 1"));
        }
        profile.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let cirs = (0..n_cirs)
            .map(|k| profile.generate(format!("pos{k:02}"), master.random()))
            .collect::<Result<Vec<_>>>()?;
        ChannelEnsemble::new(cirs, Some(seed))
    }

    /// The default 35-position, 580-tap synthetic ensemble.
    pub fn default_synthetic() -> Self {
        ChannelEnsemble::synthetic(
            DEFAULT_N_CIRS,
            &SyntheticProfile::default(),
            DEFAULT_ENSEMBLE_SEED,
        )
        .expect("default profile is valid")
    }

    pub fn cirs(&self) -> &[Cir] {
        &self.cirs
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.cirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cirs.is_empty()
    }

    /// Common tap count `N`.
    pub fn n_taps(&self) -> usize {
        self.cirs[0].len()
    }

    pub fn tap_spacing(&self) -> f64 {
        self.cirs[0].tap_spacing()
    }
}
