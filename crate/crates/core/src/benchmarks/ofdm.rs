use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::channel::ChannelRealization;
use crate::error::{contract, Result};
use crate::linalg::{cis, svd_reduced, C64, ComplexMatrix, ComplexVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OfdmConfig {
    pub num_subcarriers: usize,
    pub cp_length: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        OfdmConfig { num_subcarriers: 512, cp_length: 40 }
    }
}

/// Fraction of samples spent on the cyclic prefix.
pub fn cp_overhead(num_subcarriers: usize, cp_length: usize) -> f64 {
    cp_length as f64 / (cp_length + num_subcarriers) as f64
}

/// `(1/K) sum_{n<K} exp(j 2 pi nu n T_s) exp(j 2 pi delta n / K)`, summed as a
/// geometric series.
pub fn ici_coefficient(doppler_hz: f64, symbol_duration_s: f64, num_subcarriers: usize, delta: i64) -> C64 {
    let k = num_subcarriers as f64;
    let delta = delta.rem_euclid(num_subcarriers as i64) as f64;
    let theta = 2.0 * PI * (doppler_hz * symbol_duration_s + delta / k);
    let ratio = cis(theta);
    if (ratio - C64::new(1.0, 0.0)).norm() < 1e-12 {
        return C64::new(1.0, 0.0);
    }
    // ratio^K = exp(j 2 pi nu T_s K) because delta is an integer
    let ratio_k = cis(2.0 * PI * doppler_hz * symbol_duration_s * k);
    (C64::new(1.0, 0.0) - ratio_k) / (C64::new(1.0, 0.0) - ratio) / k
}

/// Per-path ICI matrices `H_l[delta]` for subcarrier offset `delta = q - k`.
pub fn ofdm_ici_channel(realization: &ChannelRealization, num_subcarriers: usize, delta: i64) -> Result<Vec<ComplexMatrix>> {
    if num_subcarriers == 0 {
        return Err(contract("at least one subcarrier required"));
    }
    Ok(realization
        .path_set
        .paths
        .iter()
        .zip(&realization.matrices)
        .map(|(p, h)| h * ici_coefficient(p.doppler_hz, realization.symbol_duration_s, num_subcarriers, delta))
        .collect())
}

/// Same channel seen after removing the strongest path's Doppler as a
/// common frequency offset.
pub fn cfo_compensated(realization: &ChannelRealization) -> ChannelRealization {
    let paths = &realization.path_set;
    let common = paths.paths[paths.strongest()].doppler_hz;
    let shifted: Vec<f64> = paths.dopplers().iter().map(|nu| nu - common).collect();
    realization.with_dopplers(&shifted)
}

#[derive(Clone, Debug)]
pub struct OfdmDesign {
    pub config: OfdmConfig,
    /// `U[k] = sqrt(P) T[k] / ||T[k]||_F`, `M_t x r_k`.
    pub precoders: Vec<ComplexMatrix>,
    /// `V[k] = R[k]`, `M_r x r_k`.
    pub combiners: Vec<ComplexMatrix>,
    pub singular_values: Vec<Vec<f64>>,
}

fn phase_table(realization: &ChannelRealization, k: usize) -> Vec<Vec<C64>> {
    // e^{-j 2 pi q m_l / K} per path and subcarrier
    realization
        .path_set
        .paths
        .iter()
        .map(|p| (0..k).map(|q| cis(-2.0 * PI * ((q * p.delay_tap) % k) as f64 / k as f64)).collect())
        .collect()
}

/// Per-subcarrier SVD beamforming on the Doppler-averaged response
/// `sum_l H_l[0] exp(-j 2 pi k m_l / K)` with equal power per stream.
pub fn ofdm_design(realization: &ChannelRealization, config: OfdmConfig, num_streams: usize, total_power: f64) -> Result<OfdmDesign> {
    let k_count = config.num_subcarriers;
    let h0 = ofdm_ici_channel(realization, k_count, 0)?;
    let phases = phase_table(realization, k_count);
    let (m_r, m_t) = (realization.num_rx(), realization.num_tx());
    let mut precoders = Vec::with_capacity(k_count);
    let mut combiners = Vec::with_capacity(k_count);
    let mut singular_values = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut hk = ComplexMatrix::zeros(m_r, m_t);
        for (h, ph) in h0.iter().zip(&phases) {
            hk += h * ph[k];
        }
        let svd = svd_reduced(&hk)?;
        let r = svd.rank().min(num_streams);
        let t = svd.v.columns(0, r).into_owned();
        let scale = if r > 0 { (total_power / r as f64).sqrt() } else { 0.0 };
        precoders.push(t * C64::new(scale, 0.0));
        combiners.push(svd.u.columns(0, r).into_owned());
        singular_values.push(svd.singular_values[..r].to_vec());
    }
    Ok(OfdmDesign { config, precoders, combiners, singular_values })
}

#[derive(Clone, Debug)]
pub struct OfdmOutcome {
    pub design: OfdmDesign,
    /// Per subcarrier, per stream.
    pub desired_power: Vec<Vec<f64>>,
    pub ici_power: Vec<Vec<f64>>,
    pub sinr: Vec<Vec<f64>>,
    /// Bits per sample including the cyclic-prefix loss.
    pub rate_bps_hz: f64,
}

impl OfdmOutcome {
    /// First-stream SINR of every subcarrier.
    pub fn first_stream_sinr(&self) -> Vec<f64> {
        self.sinr.iter().map(|s| s.first().copied().unwrap_or(0.0)).collect()
    }

    /// First-stream SINR when the transmit power is scaled by `ratio`;
    /// signal and ICI both scale with the power.
    pub fn first_stream_sinr_scaled(&self, ratio: f64, noise_var: f64) -> Vec<f64> {
        self.desired_power
            .iter()
            .zip(&self.ici_power)
            .map(|(d, i)| match (d.first(), i.first()) {
                (Some(d), Some(i)) => ratio * d / (ratio * i + noise_var),
                _ => 0.0,
            })
            .collect()
    }
}

/// SINR per subcarrier and stream with ICI treated as noise, and the rate
/// `sum_k sum_i log2(1 + SINR) / (K + N_CP)`.
pub fn ofdm_design_and_rate(
    realization: &ChannelRealization,
    config: OfdmConfig,
    num_streams: usize,
    total_power: f64,
    noise_var: f64,
) -> Result<OfdmOutcome> {
    let design = ofdm_design(realization, config, num_streams, total_power)?;
    let k_count = config.num_subcarriers;
    let t_s = realization.symbol_duration_s;
    let m_r = realization.num_rx();
    let phases = phase_table(realization, k_count);
    let coeffs: Vec<Vec<C64>> = realization
        .path_set
        .paths
        .iter()
        .map(|p| (0..k_count).map(|d| ici_coefficient(p.doppler_hz, t_s, k_count, d as i64)).collect())
        .collect();
    // z[l][q] = H_l U[q] e^{-j 2 pi q m_l / K}
    let z: Vec<Vec<ComplexMatrix>> = realization
        .matrices
        .iter()
        .zip(&phases)
        .map(|(h, ph)| design.precoders.iter().zip(ph).map(|(u, &c)| (h * u) * c).collect())
        .collect();

    let mut desired_power = Vec::with_capacity(k_count);
    let mut ici_power = Vec::with_capacity(k_count);
    let mut sinr = Vec::with_capacity(k_count);
    let mut rate_bits = 0.0;
    let mut mix = ComplexMatrix::zeros(m_r, num_streams);
    for k in 0..k_count {
        let v = &design.combiners[k];
        let r_k = v.ncols();
        let desired: Vec<f64> = design.singular_values[k].iter().map(|s| total_power * s * s / r_k as f64).collect();
        let mut ici = vec![0.0; r_k];
        for q in (0..k_count).filter(|&q| q != k) {
            let r_q = design.precoders[q].ncols();
            let d = (q + k_count - k) % k_count;
            let mut cols = mix.columns_mut(0, r_q);
            cols.fill(C64::new(0.0, 0.0));
            for (zl, cl) in z.iter().zip(&coeffs) {
                cols += &zl[q] * cl[d];
            }
            for (i, acc) in ici.iter_mut().enumerate() {
                for j in 0..r_q {
                    *acc += v.column(i).dotc(&cols.column(j)).norm_sqr();
                }
            }
        }
        let s: Vec<f64> = desired.iter().zip(&ici).map(|(d, i)| d / (i + noise_var)).collect();
        rate_bits += s.iter().map(|x| (1.0 + x).log2()).sum::<f64>();
        desired_power.push(desired);
        ici_power.push(ici);
        sinr.push(s);
    }
    let rate_bps_hz = rate_bits / (k_count + config.cp_length) as f64;
    Ok(OfdmOutcome { design, desired_power, ici_power, sinr, rate_bps_hz })
}

/// One OFDM symbol in the time domain: `M_t`-vectors for the cyclic prefix
/// followed by the `K` IDFT samples of `U[k] x[k]`.
pub fn ofdm_tx_frame(design: &OfdmDesign, data: &[ComplexVector]) -> Result<Vec<ComplexVector>> {
    let k_count = design.config.num_subcarriers;
    if data.len() != k_count {
        return Err(contract("one data vector per subcarrier required"));
    }
    let m_t = design.precoders.first().map_or(0, |u| u.nrows());
    let mut freq = vec![vec![C64::new(0.0, 0.0); k_count]; m_t];
    for (k, (u, x)) in design.precoders.iter().zip(data).enumerate() {
        if x.len() < u.ncols() {
            return Err(contract("data vector shorter than the stream count"));
        }
        let y = u * x.rows(0, u.ncols());
        for a in 0..m_t {
            freq[a][k] = y[a];
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(k_count);
    let norm = 1.0 / (k_count as f64).sqrt();
    for row in &mut freq {
        ifft.process(row);
        row.iter_mut().for_each(|x| *x *= norm);
    }
    let cp = design.config.cp_length;
    Ok((0..k_count + cp)
        .map(|n| {
            let idx = (n + k_count - cp % k_count) % k_count;
            ComplexVector::from_fn(m_t, |a, _| freq[a][idx])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_paths, realize_channel, trial_rng, Path, PathSet};
    use crate::config::{kmh_to_mps, SystemConfig};

    fn direct(nu: f64, t_s: f64, k: usize, delta: i64) -> C64 {
        (0..k).map(|n| cis(2.0 * PI * (nu * n as f64 * t_s + delta as f64 * n as f64 / k as f64))).sum::<C64>() / k as f64
    }

    #[test]
    fn ici_coefficient_matches_direct_sum() {
        for &nu in &[0.0, 1234.5, -4666.0, 12962.0] {
            for &delta in &[0i64, 1, -1, 7, 511, -300] {
                let a = ici_coefficient(nu, 1e-8, 512, delta);
                let b = direct(nu, 1e-8, 512, delta);
                assert!((a - b).norm() <= 1e-12, "nu {nu} delta {delta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_doppler_is_orthogonal() {
        assert_eq!(ici_coefficient(0.0, 1e-8, 64, 0), C64::new(1.0, 0.0));
        for d in 1..64 {
            assert!(ici_coefficient(0.0, 1e-8, 64, d).norm() < 1e-12);
        }
    }

    fn static_config() -> SystemConfig {
        SystemConfig { velocity_mps: 0.0, num_tx_antennas: 8, ..Default::default() }
    }

    #[test]
    fn static_channel_has_no_ici() {
        let cfg = static_config();
        let ch = realize_channel(&generate_paths(&cfg, &mut trial_rng(5, 0)).unwrap(), &cfg);
        assert!(ch.path_set.dopplers().iter().all(|&nu| nu == 0.0));
        let out = ofdm_design_and_rate(&ch, OfdmConfig { num_subcarriers: 64, cp_length: 40 }, 2, 1.0, cfg.noise_variance()).unwrap();
        for (d, i) in out.desired_power.iter().zip(&out.ici_power) {
            for (a, b) in d.iter().zip(i) {
                assert!(*b <= 1e-10 * a);
            }
        }
        let h0 = ofdm_ici_channel(&ch, 64, 0).unwrap();
        for (a, b) in h0.iter().zip(&ch.matrices) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn flat_single_antenna_rate() {
        let cfg = SystemConfig { velocity_mps: 0.0, num_tx_antennas: 1, num_rx_antennas: 1, num_streams: 1, num_paths: 1, ..Default::default() };
        let gain = C64::new(3e-6, -4e-6);
        let paths = PathSet::new(vec![Path { gain, aoa_rad: 0.0, aod_rad: 0.0, delay_tap: 5, doppler_hz: 0.0 }]).unwrap();
        let ch = realize_channel(&paths, &cfg);
        let noise = cfg.noise_variance();
        let out = ofdm_design_and_rate(&ch, OfdmConfig::default(), 1, 1.0, noise).unwrap();
        let expected = 512.0 / 552.0 * (1.0 + gain.norm_sqr() / noise).log2();
        assert!((out.rate_bps_hz - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn cp_overhead_value() {
        assert!((cp_overhead(512, 40) - 40.0 / 552.0).abs() < 1e-15);
        assert!((cp_overhead(512, 40) * 100.0 - 7.246).abs() < 1e-3);
    }

    #[test]
    fn ici_grows_with_speed_and_cfo_reduces_it() {
        let mut ratios = Vec::new();
        for kmh in [36.0, 500.0] {
            let cfg = SystemConfig { velocity_mps: kmh_to_mps(kmh), num_tx_antennas: 8, ..Default::default() };
            let ch = realize_channel(&generate_paths(&cfg, &mut trial_rng(6, 0)).unwrap(), &cfg);
            let out = ofdm_design_and_rate(&ch, OfdmConfig::default(), 2, 1.0, cfg.noise_variance()).unwrap();
            let cfo = ofdm_design_and_rate(&cfo_compensated(&ch), OfdmConfig::default(), 2, 1.0, cfg.noise_variance()).unwrap();
            let total = |o: &OfdmOutcome| o.ici_power.iter().flatten().sum::<f64>() / o.desired_power.iter().flatten().sum::<f64>();
            assert!(total(&cfo) < total(&out));
            ratios.push(total(&out));
        }
        assert!(ratios[1] > ratios[0]);
    }

    #[test]
    fn tx_frame_has_prefix_and_power() {
        let cfg = static_config();
        let ch = realize_channel(&generate_paths(&cfg, &mut trial_rng(7, 0)).unwrap(), &cfg);
        let oc = OfdmConfig { num_subcarriers: 16, cp_length: 4 };
        let d = ofdm_design(&ch, oc, 2, 2.0).unwrap();
        let data: Vec<ComplexVector> = (0..16).map(|k| ComplexVector::from_element(2, cis(k as f64))).collect();
        let frame = ofdm_tx_frame(&d, &data).unwrap();
        assert_eq!(frame.len(), 20);
        for n in 0..4 {
            assert!((&frame[n] - &frame[n + 16]).norm() < 1e-14);
        }
        // Parseval: per-symbol energy equals the frequency-domain energy
        let time: f64 = frame[4..].iter().map(|x| x.norm_squared()).sum();
        let freq: f64 = d.precoders.iter().zip(&data).map(|(u, x)| (u * x.rows(0, u.ncols())).norm_squared()).sum();
        assert!((time - freq).abs() <= 1e-12 * freq);
    }
}
