//! Signal/Image peaks, SIR at the decision instant, empirical CDFs.
//!
//! With a CSTR prefilter shifted by `l` taps the intended part of the
//! received signal has two coherent peaks. For a right shift the Signal peak
//! sits at `N - 1 + l` and the Image at `l - 1`; for a left shift at
//! `N - 1 - l` and `2N - 1 - l`. The two are always `N` apart, and their
//! amplitudes are the energies of the channel taps each part of the
//! prefilter was built from, divided by `||h||`.

use serde::{Deserialize, Serialize};

use crate::channel::Cir;
use crate::error::{Error, Result};
use crate::precoder::{build_prefilter, ShiftDirection, ShiftSpec};
use crate::propagation::{convolve_at, RxSignal};

/// Expected `(signal, image)` peak indices for a shift over `n_taps`.
pub fn peak_indices(shift: ShiftSpec, n_taps: usize) -> (usize, Option<usize>) {
    let center = n_taps - 1;
    let l = shift.amount();
    match shift.direction() {
        ShiftDirection::None => (center, None),
        ShiftDirection::Right => (center + l, Some(center + l - n_taps)),
        ShiftDirection::Left => (center - l, Some(center - l + n_taps)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub signal_peak_index: usize,
    pub signal_peak_power: f64,
    pub image_peak_index: Option<usize>,
    pub image_peak_power: Option<f64>,
    /// Peak power the same channel would give without any shift,
    /// `(|signal| + |image|)^2`.
    pub no_shift_peak_power: f64,
    /// Whether the global maximum of `|signal_part|^2` sits at the expected
    /// Signal index. Cross terms can occasionally exceed the coherent peak.
    pub argmax_matches_signal: bool,
}

/// Read the Signal and Image peaks of `rx.signal_part` at their analytic
/// positions.
pub fn locate_peaks(rx: &RxSignal, shift: ShiftSpec, n_taps: usize) -> Result<PeakReport> {
    if n_taps == 0 || rx.signal_part.len() != 2 * n_taps - 1 {
        return Err(Error::invalid(format!(
            "received signal has {} samples, expected {} for {n_taps} taps",
            rx.signal_part.len(),
            (2 * n_taps).saturating_sub(1)
        )));
    }
    shift.validate(n_taps)?;
    let (sig, img) = peak_indices(shift, n_taps);
    let signal_amp = rx.signal_part[sig].norm();
    let image_amp = img.map(|i| rx.signal_part[i].norm());
    let argmax = rx
        .signal_part
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(i, _)| i)
        .unwrap_or(sig);
    let total = signal_amp + image_amp.unwrap_or(0.0);
    Ok(PeakReport {
        signal_peak_index: sig,
        signal_peak_power: signal_amp * signal_amp,
        image_peak_index: img,
        image_peak_power: image_amp.map(|a| a * a),
        no_shift_peak_power: total * total,
        argmax_matches_signal: argmax == sig,
    })
}

/// Signal and Image peak amplitudes for a single link with the canonical
/// prefilter (reverse → normalize → shift). Without a shift the Image is 0
/// and the Signal equals `||h||`.
pub fn signal_image_split(h: &Cir, shift: ShiftSpec) -> Result<(f64, f64)> {
    let p = build_prefilter(h, shift)?;
    let (sig, img) = peak_indices(shift, h.len());
    let signal = convolve_at(p.taps(), h.taps(), sig).norm();
    let image = img.map_or(0.0, |i| convolve_at(p.taps(), h.taps(), i).norm());
    Ok((signal, image))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirReport {
    pub user_id: usize,
    pub signal_power_at_peak: f64,
    pub interference_power_at_peak: f64,
    /// `10 log10(signal / interference)`; `+inf` when there is no
    /// interference at the decision instant.
    pub sir_db: f64,
}

/// SIR at the Signal peak index (the decision instant).
pub fn compute_sir(rx: &RxSignal, peak: &PeakReport) -> Result<SirReport> {
    let t = peak.signal_peak_index;
    if t >= rx.signal_part.len() || t >= rx.interference_part.len() {
        return Err(Error::invalid(format!(
            "peak index {t} outside a {}-sample signal",
            rx.signal_part.len()
        )));
    }
    let s = rx.signal_part[t].norm_sqr();
    let i = rx.interference_part[t].norm_sqr();
    Ok(SirReport {
        user_id: rx.user_id,
        signal_power_at_peak: s,
        interference_power_at_peak: i,
        sir_db: sir_db(s, i),
    })
}

/// `10 log10(signal / interference)` with `+inf` for zero interference.
pub fn sir_db(signal_power: f64, interference_power: f64) -> f64 {
    if interference_power == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal_power / interference_power).log10()
    }
}

/// Empirical CDF of the finite values; infinite values are counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    /// `(value, P[X <= value])`, one point per distinct value.
    pub points: Vec<(f64, f64)>,
    pub excluded_infinite: usize,
}

impl Cdf {
    /// `P[X <= x]` over the finite values (0 for an empty CDF).
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= x);
        if k == 0 {
            0.0
        } else {
            self.points[k - 1].1
        }
    }
}

pub fn empirical_cdf(values: &[f64]) -> Result<Cdf> {
    if values.is_empty() {
        return Err(Error::invalid("empirical CDF of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("empirical CDF input contains NaN"));
    }
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded_infinite = values.len() - finite.len();
    finite.sort_by(f64::total_cmp);
    let n = finite.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, v) in finite.iter().enumerate() {
        let p = (k + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *v => last.1 = p,
            _ => points.push((*v, p)),
        }
    }
    Ok(Cdf {
        points,
        excluded_infinite,
    })
}

/// Linear-interpolated percentile (`q` in `[0, 1]`) over all values,
/// infinities included at the ends. `None` for an empty sample.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 || v[lo] == v[hi] {
        Some(v[lo])
    } else {
        Some(v[lo] + (v[hi] - v[lo]) * frac)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoder::compose_transmit;
    use crate::propagation::{receive, UserLink};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cir(xs: &[f64]) -> Cir {
        Cir::new("h", xs.iter().map(|&x| c(x, 0.0)).collect(), 1.0).unwrap()
    }

    fn single(h: &Cir, shift: ShiftSpec) -> RxSignal {
        let p = build_prefilter(h, shift).unwrap();
        let links = vec![UserLink::new(0, h.clone(), p.clone()).unwrap()];
        receive(&compose_transmit(&[p]).unwrap(), &links, 0).unwrap()
    }

    #[test]
    fn unshifted_peak_is_centered() {
        let h = cir(&[0.3, -1.0, 0.7, 0.2]);
        let rep = locate_peaks(&single(&h, ShiftSpec::none()), ShiftSpec::none(), 4).unwrap();
        assert_eq!(rep.signal_peak_index, 3);
        assert_eq!(rep.image_peak_index, None);
        assert!((rep.signal_peak_power - h.energy()).abs() < 1e-12);
        assert!(rep.argmax_matches_signal);
    }

    #[test]
    fn right_shift_three_of_seven() {
        let (s, i) = peak_indices(ShiftSpec::right(3), 7);
        assert_eq!((s, i), (9, Some(2)));
        assert_eq!(s - i.unwrap(), 7);
        let (s, i) = peak_indices(ShiftSpec::left(3), 7);
        assert_eq!((s, i), (3, Some(10)));
    }

    // h = [2, 1], right shift 1. The prefilter is [2, 1]/sqrt5 after reverse,
    // conjugate, normalize and rotate. Convolving with h by hand:
    //   out = [4, 2 + 2, 1] / sqrt5 = [4, 4, 1] / sqrt5
    // Signal at index 2 = 1/sqrt5 (energy of tap 1), Image at 0 = 4/sqrt5.
    #[test]
    fn two_tap_energy_split() {
        let h = cir(&[2.0, 1.0]);
        let rx = single(&h, ShiftSpec::right(1));
        let s5 = 5f64.sqrt();
        let want = [4.0 / s5, 4.0 / s5, 1.0 / s5];
        for (x, w) in rx.signal_part.iter().zip(want) {
            assert!((x - c(w, 0.0)).norm() < 1e-12);
        }
        let rep = locate_peaks(&rx, ShiftSpec::right(1), 2).unwrap();
        assert_eq!((rep.signal_peak_index, rep.image_peak_index), (2, Some(0)));
        assert!((rep.signal_peak_power - 1.0 / 5.0).abs() < 1e-12);
        assert!((rep.image_peak_power.unwrap() - 16.0 / 5.0).abs() < 1e-12);
        assert!((rep.no_shift_peak_power - 5.0).abs() < 1e-12);
        assert!(!rep.argmax_matches_signal);
    }

    #[test]
    fn split_without_shift() {
        let h = cir(&[1.0, -2.0, 0.5]);
        let (s, i) = signal_image_split(&h, ShiftSpec::none()).unwrap();
        assert!((s - h.norm()).abs() < 1e-12);
        assert_eq!(i, 0.0);
    }

    // Direct convolution of the 4-tap flat case: the prefilter is
    // [1,1,1,1]/2 rotated, so out[k] counts overlapping taps / 2. The
    // Signal at index 4 overlaps 3 unshifted taps, the Image at 0 overlaps 1.
    #[test]
    fn flat_four_taps_right_one() {
        let h = cir(&[1.0; 4]);
        let (s, i) = signal_image_split(&h, ShiftSpec::right(1)).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        assert!((i - 0.5).abs() < 1e-12);
    }

    #[test]
    fn image_exceeds_signal_on_decaying_profile() {
        let h = cir(&[1.0, 0.8, 0.6, 0.4, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01]);
        let (s, i) = signal_image_split(&h, ShiftSpec::right(4)).unwrap();
        assert!(i > s);
        let (s, i) = signal_image_split(&h, ShiftSpec::left(4)).unwrap();
        assert!(i < s);
    }

    #[test]
    fn locate_rejects_wrong_length() {
        let h = cir(&[1.0, 1.0, 1.0]);
        let rx = single(&h, ShiftSpec::none());
        assert!(locate_peaks(&rx, ShiftSpec::none(), 4).is_err());
        assert!(locate_peaks(&rx, ShiftSpec::right(3), 3).is_err());
    }

    #[test]
    fn sir_arithmetic() {
        assert_eq!(sir_db(100.0, 1.0), 20.0);
        assert_eq!(sir_db(3.0, 0.0), f64::INFINITY);
        let rx = RxSignal {
            user_id: 4,
            samples: vec![c(10.0, 1.0)],
            signal_part: vec![c(10.0, 0.0)],
            interference_part: vec![c(0.0, 1.0)],
            noise_part: None,
        };
        let peak = PeakReport {
            signal_peak_index: 0,
            signal_peak_power: 100.0,
            image_peak_index: None,
            image_peak_power: None,
            no_shift_peak_power: 100.0,
            argmax_matches_signal: true,
        };
        let rep = compute_sir(&rx, &peak).unwrap();
        assert_eq!(rep.user_id, 4);
        assert!((rep.sir_db - 20.0).abs() < 1e-12);
        let bad = PeakReport {
            signal_peak_index: 3,
            ..peak
        };
        assert!(compute_sir(&rx, &bad).is_err());
    }

    #[test]
    fn zero_interference_is_infinite() {
        let h = cir(&[1.0, 0.5]);
        let rx = single(&h, ShiftSpec::none());
        let peak = locate_peaks(&rx, ShiftSpec::none(), 2).unwrap();
        assert_eq!(compute_sir(&rx, &peak).unwrap().sir_db, f64::INFINITY);
    }

    // Two users, two taps each. User 0: h0 = [1, 0], user 1: h1 = [0, 1].
    // Prefilters: p0 = [0, 1], p1 = [1, 0]; sum [1, 1], scale 1/sqrt2.
    // At user 0 (t_peak = 1): signal = (p0 * h0)[1] / sqrt2 = 1/sqrt2,
    // interference = (p1 * h0)[1] = p1[0]h0[1] + p1[1]h0[0] = 0.
    // At user 1: signal = (p1 * h1)[1] = 1/sqrt2, interference
    // (p0 * h1)[1] = p0[0]h1[1] + p0[1]h1[0] = 0. Shifting user 1 right by
    // one makes p1 = [0, 1], the sum [0, 2] and the scale 1/2, so user 0
    // sees signal 1/2 and interference (p1 * h0)[1] / 2 = 1/2.
    #[test]
    fn two_user_orthogonal_supports() {
        let h0 = Cir::new("u0", vec![c(1.0, 0.0), c(0.0, 0.0)], 1.0).unwrap();
        let h1 = Cir::new("u1", vec![c(0.0, 0.0), c(1.0, 0.0)], 1.0).unwrap();
        let run = |s1: ShiftSpec| {
            let p0 = build_prefilter(&h0, ShiftSpec::none()).unwrap();
            let p1 = build_prefilter(&h1, s1).unwrap();
            let links = vec![
                UserLink::new(0, h0.clone(), p0.clone()).unwrap(),
                UserLink::new(1, h1.clone(), p1.clone()).unwrap(),
            ];
            let tx = compose_transmit(&[p0, p1]).unwrap();
            let rx = receive(&tx, &links, 0).unwrap();
            let peak = locate_peaks(&rx, ShiftSpec::none(), 2).unwrap();
            compute_sir(&rx, &peak).unwrap()
        };
        let rep = run(ShiftSpec::none());
        assert!((rep.signal_power_at_peak - 0.5).abs() < 1e-12);
        assert_eq!(rep.interference_power_at_peak, 0.0);
        let rep = run(ShiftSpec::right(1));
        assert!((rep.signal_power_at_peak - 0.25).abs() < 1e-12);
        assert!((rep.interference_power_at_peak - 0.25).abs() < 1e-12);
        assert!(rep.sir_db.abs() < 1e-12);
    }

    #[test]
    fn cdf_examples() {
        let cdf = empirical_cdf(&[5.0]).unwrap();
        assert_eq!(cdf.points, vec![(5.0, 1.0)]);
        let cdf = empirical_cdf(&[3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(
            cdf.points,
            vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]
        );
        let cdf = empirical_cdf(&[1.0, 1.0, 2.0, f64::INFINITY]).unwrap();
        assert_eq!(cdf.points, vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
        assert_eq!(cdf.excluded_infinite, 1);
        let cdf = empirical_cdf(&[f64::INFINITY; 3]).unwrap();
        assert!(cdf.points.is_empty());
        assert_eq!(cdf.excluded_infinite, 3);
        assert!(empirical_cdf(&[]).is_err());
        assert!(empirical_cdf(&[f64::NAN]).is_err());
    }

    // For n = 1000 draws the empirical CDF at the median has standard error
    // sqrt(0.25 / 1000) ~= 0.016; 0.05 is a three-sigma bound.
    #[test]
    fn normal_cdf_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let cdf = empirical_cdf(&xs).unwrap();
        assert!((cdf.eval(0.0) - 0.5).abs() < 0.05);
        assert_eq!(cdf.eval(-100.0), 0.0);
        assert_eq!(cdf.eval(100.0), 1.0);
    }

    #[test]
    fn percentiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(
            median(&[1.0, f64::INFINITY, f64::INFINITY]),
            Some(f64::INFINITY)
        );
        assert_eq!(median(&[]), None);
        assert_eq!(percentile(&[0.0, 10.0], 0.1), Some(1.0));
    }
}
