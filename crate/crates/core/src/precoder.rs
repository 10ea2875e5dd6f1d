//! TR and CSTR transmit prefilters.
//!
//! A prefilter is built in the canonical order reverse → normalize → shift:
//!
//! ```
//! use cstr_sim::channel::Cir;
//! use cstr_sim::precoder::{build_prefilter, ShiftSpec};
//!
//! let h = Cir::new("h", vec![3.0.into(), 4.0.into()], 1e-9).unwrap();
//! let p = build_prefilter(&h, ShiftSpec::none()).unwrap();
//! assert_eq!(p.taps()[0].re, 0.8);
//! assert_eq!(p.taps()[1].re, 0.6);
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{energy, Cir};
use crate::error::{Error, Result};

/// Tolerance on unit energy for prefilters flagged as normalized.
pub const UNIT_ENERGY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    None,
    Left,
    Right,
}

impl ShiftDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftDirection::None => "none",
            ShiftDirection::Left => "left",
            ShiftDirection::Right => "right",
        }
    }
}

impl std::fmt::Display for ShiftDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ShiftDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ShiftDirection::None),
            "left" => Ok(ShiftDirection::Left),
            "right" => Ok(ShiftDirection::Right),
            _ => Err(Error::invalid(format!(
                "unknown shift direction `{s}` (expected none, left or right)"
            ))),
        }
    }
}

/// Circular shift of `amount` taps. `None` always carries amount 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShiftSpec {
    direction: ShiftDirection,
    amount: usize,
}

impl ShiftSpec {
    pub fn none() -> Self {
        ShiftSpec {
            direction: ShiftDirection::None,
            amount: 0,
        }
    }

    pub fn right(amount: usize) -> Self {
        ShiftSpec::new(ShiftDirection::Right, amount)
    }

    pub fn left(amount: usize) -> Self {
        ShiftSpec::new(ShiftDirection::Left, amount)
    }

    /// A zero amount always collapses to `none`.
    pub fn new(direction: ShiftDirection, amount: usize) -> Self {
        if amount == 0 || direction == ShiftDirection::None {
            ShiftSpec::none()
        } else {
            ShiftSpec { direction, amount }
        }
    }

    /// Shift given as a percentage of the tap count, see [`percent_to_taps`].
    pub fn from_percent(direction: ShiftDirection, percent: f64, n_taps: usize) -> Result<Self> {
        Ok(ShiftSpec::new(direction, percent_to_taps(percent, n_taps)?))
    }

    pub fn direction(&self) -> ShiftDirection {
        self.direction
    }

    pub fn amount(&self) -> usize {
        self.amount
    }

    pub fn is_none(&self) -> bool {
        self.direction == ShiftDirection::None
    }

    /// Signed offset: positive right, negative left.
    fn signed(&self) -> i64 {
        match self.direction {
            ShiftDirection::None => 0,
            ShiftDirection::Right => self.amount as i64,
            ShiftDirection::Left => -(self.amount as i64),
        }
    }

    /// Check `1 <= amount <= n_taps - 1` for left and right shifts.
    pub fn validate(&self, n_taps: usize) -> Result<()> {
        if !self.is_none() && (self.amount < 1 || self.amount >= n_taps) {
            return Err(Error::invalid(format!(
                "{} shift of {} taps outside [1, {}]",
                self.direction,
                self.amount,
                n_taps.saturating_sub(1)
            )));
        }
        Ok(())
    }
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec::none()
    }
}

/// Map a shift percentage to a tap count: `round(percent / 100 * n_taps)`,
/// half away from zero, clamped to `[0, n_taps - 1]`.
pub fn percent_to_taps(percent: f64, n_taps: usize) -> Result<usize> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::invalid(format!(
            "shift percentage {percent} outside [0, 100]"
        )));
    }
    if n_taps == 0 {
        return Err(Error::invalid("n_taps must be at least 1"));
    }
    let taps = (percent / 100.0 * n_taps as f64).round() as usize;
    Ok(taps.min(n_taps - 1))
}

/// Time-reversed, conjugated (and possibly normalized and shifted) channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefilter {
    taps: Vec<Complex64>,
    source_id: String,
    shift: ShiftSpec,
    normalized: bool,
}

impl Prefilter {
    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn shift(&self) -> ShiftSpec {
        self.shift
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.taps)
    }
}

/// `taps[i] = conj(h[N - 1 - i])`.
pub fn time_reverse(h: &Cir) -> Prefilter {
    Prefilter {
        taps: h.taps().iter().rev().map(|t| t.conj()).collect(),
        source_id: h.id().to_string(),
        shift: ShiftSpec::none(),
        normalized: false,
    }
}

/// Rotate the taps. Right by `l`: `out[i] = p[(i - l) mod N]`; left by `l`:
/// `out[i] = p[(i + l) mod N]`.
///
/// Shifting an already shifted prefilter composes the two offsets, so a left
/// shift undone by an equal right shift records `none` again.
pub fn circular_shift(p: &Prefilter, spec: ShiftSpec) -> Result<Prefilter> {
    let n = p.len();
    spec.validate(n)?;
    let mut taps = p.taps.clone();
    match spec.direction {
        ShiftDirection::None => {}
        ShiftDirection::Right => taps.rotate_right(spec.amount),
        ShiftDirection::Left => taps.rotate_left(spec.amount),
    }
    let n = n as i64;
    let mut net = p.shift.signed() + spec.signed();
    if net >= n {
        net -= n;
    } else if net <= -n {
        net += n;
    }
    let shift = match net {
        0 => ShiftSpec::none(),
        x if x > 0 => ShiftSpec::right(x as usize),
        x => ShiftSpec::left((-x) as usize),
    };
    Ok(Prefilter {
        taps,
        source_id: p.source_id.clone(),
        shift,
        normalized: p.normalized,
    })
}

/// Equal power control: divide by the Frobenius norm.
pub fn normalize_equal_power(p: &Prefilter) -> Result<Prefilter> {
    let norm = p.energy().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateChannel(p.source_id.clone()));
    }
    Ok(Prefilter {
        taps: p.taps.iter().map(|t| t / norm).collect(),
        source_id: p.source_id.clone(),
        shift: p.shift,
        normalized: true,
    })
}

/// Canonical prefilter for one link: reverse, normalize, then shift.
pub fn build_prefilter(h: &Cir, shift: ShiftSpec) -> Result<Prefilter> {
    circular_shift(&normalize_equal_power(&time_reverse(h))?, shift)
}

/// Sum the per-user prefilters and rescale to unit total energy.
pub fn compose_transmit(filters: &[Prefilter]) -> Result<Vec<Complex64>> {
    let (sum, scale) = composite_sum(filters)?;
    Ok(sum.into_iter().map(|t| t * scale).collect())
}

/// Unscaled sum of the prefilters and the common scale `1 / ||sum||`.
pub(crate) fn composite_sum(filters: &[Prefilter]) -> Result<(Vec<Complex64>, f64)> {
    let Some(first) = filters.first() else {
        return Err(Error::invalid(
            "compose_transmit needs at least one prefilter",
        ));
    };
    let n = first.len();
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    for f in filters {
        if f.len() != n {
            return Err(Error::invalid(format!(
                "prefilter `{}` has {} taps, expected {n}",
                f.source_id,
                f.len()
            )));
        }
        if !f.normalized {
            return Err(Error::invalid(format!(
                "prefilter `{}` is not normalized",
                f.source_id
            )));
        }
        for (s, t) in sum.iter_mut().zip(&f.taps) {
            *s += t;
        }
    }
    let norm = energy(&sum).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateSum);
    }
    Ok((sum, 1.0 / norm))
}
