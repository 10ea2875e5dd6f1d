//! Linear convolution and the per-user received-signal decomposition.
//!
//! The composite transmit waveform carries every user's prefilter, and user
//! `j` hears all of it through its own channel `h_j`. The part coming from
//! user `j`'s own prefilter is the intended signal (an autocorrelation of
//! `h_j`); the rest is interference (cross-correlations).

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::channel::Cir;
use crate::error::{Error, Result};
use crate::precoder::{composite_sum, Prefilter};

/// Below this many multiply-adds the direct sum is used.
const DIRECT_WORK_LIMIT: usize = 64 * 64;

/// Full linear convolution, `out[k] = sum_i a[i] * b[k - i]`.
///
/// Picks the direct sum for short inputs and an FFT path otherwise. The two
/// agree to well within 1e-9 relative.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("convolution of an empty sequence"));
    }
    if a.len().min(b.len()) <= 8 || a.len() * b.len() <= DIRECT_WORK_LIMIT {
        Ok(direct(a, b))
    } else {
        Ok(fft(a, b))
    }
}

/// Reference O(|a| |b|) convolution.
pub fn convolve_direct(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("convolution of an empty sequence"));
    }
    Ok(direct(a, b))
}

/// Transform-based convolution (zero-padded FFT).
pub fn convolve_fft(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("convolution of an empty sequence"));
    }
    Ok(fft(a, b))
}

/// Single output sample `out[k]` of the full convolution, in O(min(|a|, |b|)).
pub fn convolve_at(a: &[Complex64], b: &[Complex64], k: usize) -> Complex64 {
    let lo = k.saturating_sub(b.len() - 1);
    let hi = k.min(a.len() - 1);
    if lo > hi {
        return Complex64::new(0.0, 0.0);
    }
    (lo..=hi).map(|i| a[i] * b[k - i]).sum()
}

fn direct(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let (forward, inverse) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    let zero = Complex64::new(0.0, 0.0);
    let mut fa: Vec<Complex64> = a
        .iter()
        .copied()
        .chain(std::iter::repeat(zero))
        .take(size)
        .collect();
    let mut fb: Vec<Complex64> = b
        .iter()
        .copied()
        .chain(std::iter::repeat(zero))
        .take(size)
        .collect();
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.truncate(len);
    for x in &mut fa {
        *x *= scale;
    }
    fa
}

/// One user's link: its channel `h_j` and the prefilter built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    user_id: usize,
    cir: Cir,
    prefilter: Prefilter,
}

impl UserLink {
    pub fn new(user_id: usize, cir: Cir, prefilter: Prefilter) -> Result<Self> {
        if prefilter.source_id() != cir.id() {
            return Err(Error::invalid(format!(
                "prefilter built from `{}` paired with channel `{}`",
                prefilter.source_id(),
                cir.id()
            )));
        }
        if prefilter.len() != cir.len() {
            return Err(Error::invalid(format!(
                "prefilter has {} taps, channel `{}` has {}",
                prefilter.len(),
                cir.id(),
                cir.len()
            )));
        }
        if !prefilter.is_normalized() {
            return Err(Error::invalid(format!(
                "prefilter for `{}` is not normalized",
                cir.id()
            )));
        }
        Ok(UserLink {
            user_id,
            cir,
            prefilter,
        })
    }

    pub fn user_id(&self) -> usize {
        self.user_id
    }

    pub fn cir(&self) -> &Cir {
        &self.cir
    }

    pub fn prefilter(&self) -> &Prefilter {
        &self.prefilter
    }
}

/// Received signal at one user, split into its components.
#[derive(Debug, Clone, PartialEq)]
pub struct RxSignal {
    pub user_id: usize,
    pub samples: Vec<Complex64>,
    pub signal_part: Vec<Complex64>,
    pub interference_part: Vec<Complex64>,
    /// Additive noise; `None` means identically zero.
    pub noise_part: Option<Vec<Complex64>>,
}

impl RxSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Add a noise realization to the received samples.
    pub fn with_noise(mut self, noise: Vec<Complex64>) -> Result<Self> {
        if noise.len() != self.samples.len() {
            return Err(Error::invalid(format!(
                "noise has {} samples, signal has {}",
                noise.len(),
                self.samples.len()
            )));
        }
        for (s, n) in self.samples.iter_mut().zip(&noise) {
            *s += n;
        }
        self.noise_part = Some(noise);
        Ok(self)
    }
}

/// Relative tolerance used to check that `tx` came from the links' prefilters.
const TX_CONSISTENCY_TOL: f64 = 1e-9;

/// Received signal at `links[target]` when `tx` (the unit-energy sum of all
/// links' prefilters) is transmitted with a unit impulse as the symbol.
pub fn receive(tx: &[Complex64], links: &[UserLink], target: usize) -> Result<RxSignal> {
    let Some(link) = links.get(target) else {
        return Err(Error::invalid(format!(
            "target user {target} out of range for {} links",
            links.len()
        )));
    };
    let n = link.cir.len();
    if tx.len() != n {
        return Err(Error::invalid(format!(
            "transmit waveform has {} taps, channels have {n}",
            tx.len()
        )));
    }
    let filters: Vec<Prefilter> = links.iter().map(|l| l.prefilter.clone()).collect();
    let (sum, scale) = composite_sum(&filters)?;
    let mismatch: f64 = sum
        .iter()
        .zip(tx)
        .map(|(s, t)| (s * scale - t).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if mismatch > TX_CONSISTENCY_TOL {
        return Err(Error::invalid(
            "transmit waveform does not match the links' prefilters",
        ));
    }

    let own: Vec<Complex64> = link.prefilter.taps().iter().map(|t| t * scale).collect();
    let others: Vec<Complex64> = sum
        .iter()
        .zip(link.prefilter.taps())
        .map(|(s, t)| (s - t) * scale)
        .collect();
    let h = link.cir.taps();
    let signal_part = convolve(&own, h)?;
    let interference_part = if links.len() > 1 {
        convolve(&others, h)?
    } else {
        vec![Complex64::new(0.0, 0.0); signal_part.len()]
    };
    let samples = signal_part
        .iter()
        .zip(&interference_part)
        .map(|(s, i)| s + i)
        .collect();
    Ok(RxSignal {
        user_id: link.user_id,
        samples,
        signal_part,
        interference_part,
        noise_part: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoder::{build_prefilter, compose_transmit, ShiftSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    // Brute-force oracle, written independently of `direct`.
    fn oracle(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        (0..a.len() + b.len() - 1)
            .map(|k| {
                let mut acc = c(0.0, 0.0);
                for i in 0..a.len() {
                    if k >= i && k - i < b.len() {
                        acc += a[i] * b[k - i];
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn identity_and_hand_examples() {
        let b = vec![c(1.0, 2.0), c(-3.0, 0.5)];
        assert_eq!(convolve(&[c(1.0, 0.0)], &b).unwrap(), b);
        let ones = [c(1.0, 0.0), c(1.0, 0.0)];
        assert_eq!(
            convolve(&ones, &ones).unwrap(),
            vec![c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]
        );
        assert!(convolve(&[], &b).is_err());
        assert!(convolve_fft(&b, &[]).is_err());
        assert!(convolve_direct(&[], &[]).is_err());
    }

    #[test]
    fn matches_oracle_on_random_length_nine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random(&mut rng, 9);
            let b = random(&mut rng, 9);
            let want = oracle(&a, &b);
            for got in [convolve(&a, &b).unwrap(), convolve_fft(&a, &b).unwrap()] {
                for (x, y) in got.iter().zip(&want) {
                    assert!((x - y).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_sample_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(&mut rng, 5);
        let b = random(&mut rng, 11);
        let full = oracle(&a, &b);
        for (k, want) in full.iter().enumerate() {
            assert!((convolve_at(&a, &b, k) - want).norm() < 1e-12);
        }
        assert_eq!(convolve_at(&a, &b, 40), c(0.0, 0.0));
    }

    #[test]
    fn fft_path_on_long_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 300);
        let b = random(&mut rng, 257);
        let want = oracle(&a, &b);
        let got = convolve(&a, &b).unwrap();
        let scale = want.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (x, y) in got.iter().zip(&want) {
            assert!((x - y).norm() / scale < 1e-12);
        }
    }

    fn link(user: usize, id: &str, taps: Vec<Complex64>, shift: ShiftSpec) -> UserLink {
        let h = Cir::new(id, taps, 1.0).unwrap();
        let p = build_prefilter(&h, shift).unwrap();
        UserLink::new(user, h, p).unwrap()
    }

    fn tx_of(links: &[UserLink]) -> Vec<Complex64> {
        let f: Vec<_> = links.iter().map(|l| l.prefilter().clone()).collect();
        compose_transmit(&f).unwrap()
    }

    #[test]
    fn single_user_is_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let taps = random(&mut rng, 12);
        let links = vec![link(0, "a", taps, ShiftSpec::none())];
        let rx = receive(&tx_of(&links), &links, 0).unwrap();
        assert_eq!(rx.len(), 23);
        let (arg, _) = rx
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap();
        assert_eq!(arg, 11);
        let peak = rx.samples[11];
        assert!(peak.im.abs() < 1e-12);
        assert!((peak.re - links[0].cir().norm()).abs() < 1e-12);
        assert!(rx.interference_part.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn orthogonal_single_tap_channels_do_not_interfere() {
        let n = 6;
        let e = |m: usize| {
            (0..n)
                .map(|i| c(if i == m { 1.0 } else { 0.0 }, 0.0))
                .collect()
        };
        let links = vec![
            link(0, "u0", e(1), ShiftSpec::none()),
            link(1, "u1", e(4), ShiftSpec::none()),
        ];
        let rx = receive(&tx_of(&links), &links, 0).unwrap();
        assert_eq!(rx.interference_part[n - 1], c(0.0, 0.0));
        assert!(rx.signal_part[n - 1].norm() > 0.0);
    }

    #[test]
    fn decomposition_matches_end_to_end_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let links = vec![
            link(0, "a", random(&mut rng, 8), ShiftSpec::right(2)),
            link(1, "b", random(&mut rng, 8), ShiftSpec::left(3)),
        ];
        let tx = tx_of(&links);
        for target in 0..2 {
            let rx = receive(&tx, &links, target).unwrap();
            let want = oracle(&tx, links[target].cir().taps());
            assert_eq!(rx.len(), want.len());
            for (k, w) in want.iter().enumerate() {
                assert!((rx.samples[k] - w).norm() < 1e-12);
                let sum = rx.signal_part[k] + rx.interference_part[k];
                assert!((sum - rx.samples[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn receive_is_linear_in_prefilters() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let links = vec![
            link(0, "a", random(&mut rng, 10), ShiftSpec::right(1)),
            link(1, "b", random(&mut rng, 10), ShiftSpec::none()),
            link(2, "c", random(&mut rng, 10), ShiftSpec::left(4)),
        ];
        let tx = tx_of(&links);
        let rx = receive(&tx, &links, 1).unwrap();
        let scale = 1.0
            / links
                .iter()
                .fold(vec![c(0.0, 0.0); 10], |mut acc, l| {
                    for (a, t) in acc.iter_mut().zip(l.prefilter().taps()) {
                        *a += t;
                    }
                    acc
                })
                .iter()
                .map(|x| x.norm_sqr())
                .sum::<f64>()
                .sqrt();
        let h = links[1].cir().taps();
        let mut total = vec![c(0.0, 0.0); 19];
        for l in &links {
            let part: Vec<_> = l.prefilter().taps().iter().map(|t| t * scale).collect();
            for (acc, x) in total.iter_mut().zip(oracle(&part, h)) {
                *acc += x;
            }
        }
        for (x, y) in rx.samples.iter().zip(&total) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn receive_errors() {
        let links = vec![link(
            0,
            "a",
            vec![c(1.0, 0.0), c(0.5, 0.0)],
            ShiftSpec::none(),
        )];
        assert!(receive(&[c(1.0, 0.0)], &links, 0).is_err());
        assert!(receive(&tx_of(&links), &links, 1).is_err());
        assert!(receive(&[c(0.0, 1.0), c(0.0, 0.0)], &links, 0).is_err());
        let h = Cir::new("a", vec![c(1.0, 0.0)], 1.0).unwrap();
        let other = Cir::new("b", vec![c(1.0, 0.0)], 1.0).unwrap();
        let p = build_prefilter(&other, ShiftSpec::none()).unwrap();
        assert!(UserLink::new(0, h, p).is_err());
    }

    #[test]
    fn noise_is_added_to_samples() {
        let links = vec![link(
            0,
            "a",
            vec![c(1.0, 0.0), c(0.0, 0.0)],
            ShiftSpec::none(),
        )];
        let rx = receive(&tx_of(&links), &links, 0).unwrap();
        let noisy = rx.clone().with_noise(vec![c(0.5, 0.0); 3]).unwrap();
        assert_eq!(noisy.samples[0], rx.samples[0] + c(0.5, 0.0));
        assert!(rx.with_noise(vec![]).is_err());
    }
}
