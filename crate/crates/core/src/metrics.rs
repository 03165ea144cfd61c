//! Link metrics: QAM error rates, PAPR statistics, guard overheads and the
//! imperfect-CSI model.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::channel::{complex_gaussian, ChannelRealization, PathSet};
use crate::config::Timebase;
use crate::error::{contract, Result};
use crate::linalg::{ComplexVector, C64};
use crate::mse::{group_for_compensation, rate_with_mmse_receiver, sample_blocks, stack_precoders};
use crate::zf::DdamDesign;

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `ln Qfunc(x)`, switching to the asymptotic series where the tail
/// underflows.
pub fn ln_q_function(x: f64) -> f64 {
    if x < 30.0 {
        return q_function(x).ln();
    }
    let r = 1.0 / (x * x);
    -0.5 * x * x - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - r + 3.0 * r * r - 15.0 * r * r * r).ln()
}

fn check_order(order: usize) -> Result<()> {
    // square orders plus the 128-point cross constellation
    let ok = order >= 4 && order.is_power_of_two() && (order.trailing_zeros().is_multiple_of(2) || order == 128);
    if ok {
        Ok(())
    } else {
        Err(contract(format!("unsupported QAM order {order}")))
    }
}

/// Gray-coded QAM bit error rate on AWGN,
/// `(4/log2 Q)(1 - 1/sqrt Q) Qfunc(sqrt(3 gamma / (Q - 1)))`.
pub fn qam_awgn_ber(snr_linear: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    if !(snr_linear >= 0.0) {
        return Err(contract("SNR must be non-negative"));
    }
    let q = order as f64;
    let pe = 4.0 / q.log2() * (1.0 - 1.0 / q.sqrt()) * q_function((3.0 * snr_linear / (q - 1.0)).sqrt());
    Ok(pe.min(1.0))
}

/// `log10` of [`qam_awgn_ber`], finite far below the `f64` range.
pub fn qam_awgn_log10_ber(snr_linear: f64, order: usize) -> Result<f64> {
    let at_zero = qam_awgn_ber(0.0, order)?;
    qam_awgn_ber(snr_linear, order)?;
    let q = order as f64;
    let ln = (2.0 * at_zero).ln() + ln_q_function((3.0 * snr_linear / (q - 1.0)).sqrt());
    Ok(ln / std::f64::consts::LN_10)
}

/// Mean per-subcarrier BER with the cyclic-prefix energy penalty,
/// `(1/K) sum_k P_e(K gamma_k / (K + m))`.
pub fn ofdm_ber(per_subcarrier_snr: &[f64], num_subcarriers: usize, cp_length: usize, order: usize) -> Result<f64> {
    if per_subcarrier_snr.len() != num_subcarriers {
        return Err(contract("one SNR per subcarrier required"));
    }
    let factor = num_subcarriers as f64 / (num_subcarriers + cp_length) as f64;
    let mut sum = 0.0;
    for &g in per_subcarrier_snr {
        sum += qam_awgn_ber(factor * g, order)?;
    }
    Ok(sum / num_subcarriers as f64)
}

/// `log10` of [`ofdm_ber`], via a log-sum-exp over subcarriers.
pub fn ofdm_log10_ber(per_subcarrier_snr: &[f64], num_subcarriers: usize, cp_length: usize, order: usize) -> Result<f64> {
    if per_subcarrier_snr.len() != num_subcarriers {
        return Err(contract("one SNR per subcarrier required"));
    }
    let factor = num_subcarriers as f64 / (num_subcarriers + cp_length) as f64;
    let logs = per_subcarrier_snr.iter().map(|&g| qam_awgn_log10_ber(factor * g, order)).collect::<Result<Vec<f64>>>()?;
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| 10f64.powf(l - top)).sum();
    Ok(top + (sum / num_subcarriers as f64).log10())
}

/// Unit average-energy QAM points: a square grid, or the 12 x 12 grid
/// without its 2 x 2 corners for 128 points.
pub fn qam_constellation(order: usize) -> Result<Vec<C64>> {
    check_order(order)?;
    let side = if order == 128 { 12 } else { (order as f64).sqrt().round() as i64 };
    let half = side - 1;
    let mut pts = Vec::with_capacity(order);
    for i in 0..side {
        for j in 0..side {
            let (x, y) = (2 * i - half, 2 * j - half);
            if order == 128 && x.abs() > 7 && y.abs() > 7 {
                continue;
            }
            pts.push(C64::new(x as f64, y as f64));
        }
    }
    let energy = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
    Ok(pts.into_iter().map(|p| p / energy.sqrt()).collect())
}

/// `num` vectors of `streams` i.i.d. uniform QAM symbols.
pub fn random_qam_symbols<R: Rng + ?Sized>(constellation: &[C64], streams: usize, num: usize, rng: &mut R) -> Vec<ComplexVector> {
    (0..num)
        .map(|_| ComplexVector::from_fn(streams, |_, _| constellation[rng.random_range(0..constellation.len())]))
        .collect()
}

/// Peak-to-average power ratio in dB of each antenna's sample stream;
/// `None` for a silent antenna.
pub fn papr_db(signal: &[ComplexVector]) -> Vec<Option<f64>> {
    let m = signal.first().map_or(0, |x| x.len());
    (0..m)
        .map(|a| {
            let (peak, sum) = signal.iter().fold((0.0f64, 0.0), |(pk, s), x| {
                let p = x[a].norm_sqr();
                (pk.max(p), s + p)
            });
            (sum > 0.0).then(|| 10.0 * (peak * signal.len() as f64 / sum).log10())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ccdf {
    pub thresholds_db: Vec<f64>,
    /// Fraction of (antenna, frame) PAPR values above each threshold.
    pub ccdf: Vec<f64>,
    pub samples: usize,
    /// Silent antennas left out of the statistic.
    pub excluded: usize,
}

impl Ccdf {
    /// Smallest threshold whose CCDF drops to `level` or below, linearly
    /// interpolated between grid points.
    pub fn threshold_at(&self, level: f64) -> Option<f64> {
        let idx = self.ccdf.iter().position(|&c| c <= level)?;
        if idx == 0 {
            return Some(self.thresholds_db[0]);
        }
        let (c0, c1) = (self.ccdf[idx - 1], self.ccdf[idx]);
        let (t0, t1) = (self.thresholds_db[idx - 1], self.thresholds_db[idx]);
        Some(t0 + (c0 - level) / (c0 - c1) * (t1 - t0))
    }
}

/// CCDF of per-antenna PAPR over a set of frames.
pub fn papr_ccdf(frames: &[Vec<ComplexVector>], thresholds_db: &[f64]) -> Result<Ccdf> {
    if frames.iter().all(|f| f.is_empty()) {
        return Err(contract("no signal samples"));
    }
    let mut values = Vec::new();
    let mut excluded = 0;
    for f in frames {
        for v in papr_db(f) {
            match v {
                Some(x) => values.push(x),
                None => excluded += 1,
            }
        }
    }
    let n = values.len().max(1) as f64;
    let ccdf = thresholds_db.iter().map(|&t| values.iter().filter(|&&v| v > t).count() as f64 / n).collect();
    Ok(Ccdf { thresholds_db: thresholds_db.to_vec(), ccdf, samples: values.len(), excluded })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuardScheme {
    /// `2 m / N̄`: one guard per path-invariant block.
    Ddam { max_delay_tap: usize, samples_per_invariant: usize },
    /// `m / (m + K)`.
    Ofdm { cp_length: usize, num_subcarriers: usize },
    /// `m / (MN + m)`.
    Otfs { cp_length: usize, frame_len: usize },
}

pub fn guard_overhead(scheme: GuardScheme) -> f64 {
    match scheme {
        GuardScheme::Ddam { max_delay_tap, samples_per_invariant } => 2.0 * max_delay_tap as f64 / samples_per_invariant as f64,
        GuardScheme::Ofdm { cp_length, num_subcarriers } => cp_length as f64 / (cp_length + num_subcarriers) as f64,
        GuardScheme::Otfs { cp_length, frame_len } => cp_length as f64 / (frame_len + cp_length) as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsiError {
    /// Fraction `eta` of paths whose delay is estimated correctly.
    pub delay_accuracy: f64,
    /// Doppler error scale `xi` relative to the maximum Doppler.
    pub doppler_error_coeff: f64,
}

impl CsiError {
    pub fn perfect() -> Self {
        CsiError { delay_accuracy: 1.0, doppler_error_coeff: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct PerturbedCsi {
    pub paths: PathSet,
    /// `e_l = 1` when path `l` kept its delay.
    pub delay_correct: Vec<bool>,
}

impl PerturbedCsi {
    pub fn delay_accuracy(&self) -> f64 {
        self.delay_correct.iter().filter(|&&c| c).count() as f64 / self.delay_correct.len() as f64
    }
}

/// Estimated paths: `floor((1 - eta) L)` random paths get a delay one tap
/// off (kept distinct and within `0..=max_tap`), every Doppler gets the real
/// part of a `CN(0, xi^2 nu_max^2)` error.
pub fn perturb_csi<R: Rng + ?Sized>(paths: &PathSet, err: &CsiError, max_doppler_hz: f64, max_tap: usize, rng: &mut R) -> Result<PerturbedCsi> {
    if !(0.0..=1.0).contains(&err.delay_accuracy) || !(err.doppler_error_coeff >= 0.0) {
        return Err(contract("delay accuracy must lie in [0, 1] and the Doppler error be non-negative"));
    }
    let l = paths.len();
    let wrong = (((1.0 - err.delay_accuracy) * l as f64) + 1e-9).floor() as usize;
    let mut out = paths.paths.clone();
    let mut delay_correct = vec![true; l];
    for idx in sample(rng, l, wrong.min(l)).into_iter() {
        let taken: Vec<usize> = out.iter().map(|p| p.delay_tap).collect();
        let m = out[idx].delay_tap;
        let mut options: Vec<usize> = [m.checked_sub(1), Some(m + 1)]
            .into_iter()
            .flatten()
            .filter(|&c| c <= max_tap && !taken.contains(&c))
            .collect();
        if options.is_empty() {
            // both neighbours occupied: move further out until a free tap appears
            options = (2..=l + 1)
                .flat_map(|d| [m.checked_sub(d), Some(m + d)])
                .flatten()
                .filter(|c| !taken.contains(c))
                .take(1)
                .collect();
        }
        out[idx].delay_tap = options[rng.random_range(0..options.len())];
        delay_correct[idx] = false;
    }
    if err.doppler_error_coeff > 0.0 {
        let var = (err.doppler_error_coeff * max_doppler_hz).powi(2);
        for p in &mut out {
            p.doppler_hz += complex_gaussian(rng, var).re;
        }
    }
    Ok(PerturbedCsi { paths: PathSet::new(out)?, delay_correct })
}

/// Rate of a DDAM design built from estimated CSI, evaluated on the true
/// channel with an MMSE receiver per coherence block and averaged over
/// `num_blocks` blocks. Copies land at `m_l + kappa_l'`; the estimated
/// alignment lag `max kappa_l + m̂_l` is treated as the desired one.
pub fn mismatched_rate(
    truth: &ChannelRealization,
    estimated: &PathSet,
    design: &DdamDesign,
    timebase: &Timebase,
    num_blocks: usize,
    noise_var: f64,
) -> Result<f64> {
    let desired_lag = estimated.m_max();
    let f = stack_precoders(&design.precoders);
    let blocks = sample_blocks(timebase, num_blocks);
    let mut sum = 0.0;
    for &b in &blocks {
        let g = group_for_compensation(truth, &design.delay_comp, &design.doppler_comp, desired_lag, timebase, b, noise_var)?;
        sum += rate_with_mmse_receiver(&g, &f)?;
    }
    Ok(sum / blocks.len() as f64)
}

/// Monte-Carlo Gray-coded QPSK bit error rate, used to check the formula.
pub fn simulate_qpsk_ber<R: Rng + ?Sized>(snr_linear: f64, num_symbols: usize, rng: &mut R) -> f64 {
    // unit-energy symbol, two bits on +-1/sqrt(2); per-dimension noise variance 1/(2 snr)
    let noise = Normal::new(0.0, (1.0 / (2.0 * snr_linear)).sqrt()).expect("finite noise scale");
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut errors = 0usize;
    for _ in 0..num_symbols {
        for _ in 0..2 {
            let bit: bool = rng.random();
            let tx = if bit { amp } else { -amp };
            let rx = tx + noise.sample(rng);
            if (rx > 0.0) != bit {
                errors += 1;
            }
        }
    }
    errors as f64 / (2 * num_symbols) as f64
}
