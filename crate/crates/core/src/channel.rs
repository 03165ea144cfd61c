//! Sparse multipath MIMO channels with per-path delay and Doppler, and the
//! sample-level time-domain channel used as an oracle by the analytic models.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{contract, DdamError, Result};
use crate::linalg::{cis, C64, ComplexMatrix, ComplexVector, MatrixRecord};

/// Independent RNG stream for one Monte-Carlo trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Circularly symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub delay_tap: usize,
    pub doppler_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(contract("a path set needs at least one path"));
        }
        let set = PathSet { paths };
        if !set.delays_distinct() {
            return Err(contract("path delay taps must be pairwise distinct"));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn delays(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.delay_tap).collect()
    }

    pub fn dopplers(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.doppler_hz).collect()
    }

    pub fn gains(&self) -> Vec<C64> {
        self.paths.iter().map(|p| p.gain).collect()
    }

    pub fn m_min(&self) -> usize {
        self.paths.iter().map(|p| p.delay_tap).min().unwrap_or(0)
    }

    pub fn m_max(&self) -> usize {
        self.paths.iter().map(|p| p.delay_tap).max().unwrap_or(0)
    }

    pub fn m_span(&self) -> usize {
        self.m_max() - self.m_min()
    }

    pub fn delays_distinct(&self) -> bool {
        let mut d = self.delays();
        d.sort_unstable();
        d.windows(2).all(|w| w[0] != w[1])
    }

    /// Index of the path with the largest `|alpha_l|^2` (first one on ties).
    pub fn strongest(&self) -> usize {
        let mut best = 0;
        for (l, p) in self.paths.iter().enumerate() {
            if p.gain.norm_sqr() > self.paths[best].gain.norm_sqr() {
                best = l;
            }
        }
        best
    }
}

/// `num` points equally spaced over `[lo, hi]`; a single point sits at the centre.
fn equally_spaced(lo: f64, hi: f64, num: usize) -> Vec<f64> {
    if num == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..num).map(|k| lo + (hi - lo) * k as f64 / (num - 1) as f64).collect()
}

/// Draws `L` paths: distinct uniform integer delays, Jakes Dopplers,
/// equally spaced AoA/AoD sets in [-60°, 60°] assigned in random order, and
/// gains from an exponential power-delay profile scaled by the large-scale gain.
pub fn generate_paths<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<PathSet> {
    config.validate()?;
    let num_paths = config.num_paths;
    let max_tap = config.max_delay_tap();
    if num_paths > max_tap + 1 {
        return Err(DdamError::DistinctDelays { paths: num_paths, taps: max_tap + 1 });
    }

    let mut delays: Vec<usize> = Vec::with_capacity(num_paths);
    while delays.len() < num_paths {
        let tap = rng.random_range(0..=max_tap);
        if !delays.contains(&tap) {
            delays.push(tap);
        }
    }

    let nu_max = config.max_doppler_hz();
    let dopplers: Vec<f64> = (0..num_paths)
        .map(|_| nu_max * rng.random_range(-PI..=PI).cos())
        .collect();

    let limit = 60f64.to_radians();
    let mut aoas = equally_spaced(-limit, limit, num_paths);
    let mut aods = aoas.clone();
    aoas.shuffle(rng);
    aods.shuffle(rng);

    let t_s = config.symbol_duration_s();
    let profile: Vec<f64> = delays
        .iter()
        .map(|&m| (-(m as f64) * t_s / config.pdp_decay_s).exp())
        .collect();
    let profile_sum: f64 = profile.iter().sum();
    let scale = config.large_scale_gain();

    let paths = (0..num_paths)
        .map(|l| {
            let draw: f64 = Exp1.sample(rng);
            let power = scale * profile[l] / profile_sum * draw;
            let phase = rng.random_range(0.0..2.0 * PI);
            Path {
                gain: C64::from_polar(power.sqrt(), phase),
                aoa_rad: aoas[l],
                aod_rad: aods[l],
                delay_tap: delays[l],
                doppler_hz: dopplers[l],
            }
        })
        .collect();
    PathSet::new(paths)
}

/// Half-wavelength ULA steering vector, entry `k` = `exp(j pi k sin(angle))`.
pub fn array_response(num_antennas: usize, angle_rad: f64) -> ComplexVector {
    let s = angle_rad.sin();
    ComplexVector::from_fn(num_antennas, |k, _| cis(PI * k as f64 * s))
}

#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub path_set: PathSet,
    /// `H_l = alpha_l a_R(phi_l) a_T^H(psi_l)`, each `M_r x M_t`.
    pub matrices: Vec<ComplexMatrix>,
    pub symbol_duration_s: f64,
}

pub fn realize_channel(paths: &PathSet, config: &SystemConfig) -> ChannelRealization {
    let m_t = config.num_tx_antennas;
    let m_r = config.num_rx_antennas;
    let matrices = paths
        .paths
        .iter()
        .map(|p| {
            let a_r = array_response(m_r, p.aoa_rad);
            let a_t = array_response(m_t, p.aod_rad);
            (a_r * a_t.adjoint()) * p.gain
        })
        .collect();
    ChannelRealization { path_set: paths.clone(), matrices, symbol_duration_s: config.symbol_duration_s() }
}

impl ChannelRealization {
    pub fn num_paths(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_rx(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn num_tx(&self) -> usize {
        self.matrices[0].ncols()
    }

    /// `H_l exp(j 2 pi nu_l m_l T_s)`: the constant phase a path picks up
    /// when its Doppler pre-rotation is applied `m_l` samples before it lands.
    pub fn aligned_matrices(&self) -> Vec<ComplexMatrix> {
        self.path_set
            .paths
            .iter()
            .zip(&self.matrices)
            .map(|(p, h)| h * cis(2.0 * PI * p.doppler_hz * p.delay_tap as f64 * self.symbol_duration_s))
            .collect()
    }

    /// Same geometry with every Doppler shift replaced.
    pub fn with_dopplers(&self, dopplers: &[f64]) -> Self {
        let mut out = self.clone();
        for (p, nu) in out.path_set.paths.iter_mut().zip(dopplers) {
            p.doppler_hz = *nu;
        }
        out
    }

    pub fn to_record(&self) -> ChannelRecord {
        ChannelRecord {
            paths: self.path_set.clone(),
            symbol_duration_s: self.symbol_duration_s,
            matrices: self.matrices.iter().map(MatrixRecord::from).collect(),
        }
    }

    pub fn from_record(rec: &ChannelRecord) -> Result<Self> {
        let matrices = rec
            .matrices
            .iter()
            .map(ComplexMatrix::try_from)
            .collect::<Result<Vec<_>>>()?;
        if matrices.len() != rec.paths.len() {
            return Err(contract("one matrix per path expected"));
        }
        Ok(ChannelRealization { path_set: PathSet::new(rec.paths.paths.clone())?, matrices, symbol_duration_s: rec.symbol_duration_s })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }
}

/// JSON form of a realization: path descriptors (complex numbers as
/// `[re, im]`) plus each `H_l` as a row-major matrix record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub paths: PathSet,
    pub symbol_duration_s: f64,
    pub matrices: Vec<MatrixRecord>,
}

/// `r[n] = sum_l H_l exp(j 2 pi nu_l n T_s) x[n - m_l] + z[n]`, `x` zero before 0.
pub fn apply_channel<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    tx: &[ComplexVector],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<ComplexVector>> {
    let m_t = realization.num_tx();
    let m_r = realization.num_rx();
    if let Some(bad) = tx.iter().find(|x| x.len() != m_t) {
        return Err(contract(format!("transmit samples must have {m_t} entries, got {}", bad.len())));
    }
    // H_l x[n] is computed once per (path, sample) and reused.
    let mut rx: Vec<ComplexVector> = (0..tx.len()).map(|_| ComplexVector::zeros(m_r)).collect();
    for (p, h) in realization.path_set.paths.iter().zip(&realization.matrices) {
        let step = 2.0 * PI * p.doppler_hz * realization.symbol_duration_s;
        for n in p.delay_tap..tx.len() {
            let hx = h * &tx[n - p.delay_tap];
            rx[n].axpy(cis(step * n as f64), &hx, C64::new(1.0, 0.0));
        }
    }
    if noise_std > 0.0 {
        let var = noise_std * noise_std;
        for r in rx.iter_mut() {
            for z in r.iter_mut() {
                *z += complex_gaussian(rng, var);
            }
        }
    }
    Ok(rx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::kmh_to_mps;
    use crate::linalg::{frobenius_sq, svd_reduced};

    fn cfg(l: usize, m_t: usize, m_r: usize) -> SystemConfig {
        SystemConfig { num_paths: l, num_tx_antennas: m_t, num_rx_antennas: m_r, num_streams: 1, ..Default::default() }
    }

    #[test]
    fn generated_paths_respect_invariants() {
        let config = SystemConfig { velocity_mps: kmh_to_mps(180.0), num_paths: 6, ..Default::default() };
        for trial in 0..50 {
            let paths = generate_paths(&config, &mut trial_rng(1, trial)).unwrap();
            assert_eq!(paths.len(), 6);
            assert!(paths.delays_distinct());
            assert!(paths.m_max() <= 40);
            for p in &paths.paths {
                assert!(p.doppler_hz.abs() <= config.max_doppler_hz() + 1e-9);
                assert!(p.aoa_rad.abs() <= 60f64.to_radians() + 1e-12);
            }
        }
    }

    #[test]
    fn single_path_has_zero_span() {
        let paths = generate_paths(&cfg(1, 4, 2), &mut trial_rng(0, 0)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths.m_span(), 0);
    }

    #[test]
    fn too_many_paths_for_taps() {
        let config = SystemConfig { num_paths: 5, max_delay_s: 30e-9, ..cfg(5, 4, 2) };
        let err = generate_paths(&config, &mut trial_rng(0, 0)).unwrap_err();
        assert!(matches!(err, DdamError::DistinctDelays { paths: 5, taps: 4 }));
    }

    #[test]
    fn broadside_response_is_all_ones() {
        let a = array_response(7, 0.0);
        assert!(a.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn response_norm_and_separation() {
        let a = array_response(64, 0.37);
        assert!((a.norm_squared() - 64.0).abs() < 1e-10);
        let p = array_response(128, 30f64.to_radians());
        let q = array_response(128, -30f64.to_radians());
        assert!(p.dotc(&q).norm() / 128.0 < 0.05);
    }

    #[test]
    fn realized_matrices_are_rank_one_with_expected_norm() {
        let config = cfg(3, 8, 4);
        let paths = generate_paths(&config, &mut trial_rng(3, 0)).unwrap();
        let ch = realize_channel(&paths, &config);
        for (p, h) in paths.paths.iter().zip(&ch.matrices) {
            assert_eq!(svd_reduced(h).unwrap().rank(), 1);
            let expected = p.gain.norm_sqr() * 32.0;
            assert!((frobenius_sq(h) - expected).abs() <= 1e-9 * expected);
        }
    }

    #[test]
    fn zero_gain_and_siso_cases() {
        let config = cfg(1, 1, 1);
        let mut paths = generate_paths(&config, &mut trial_rng(0, 1)).unwrap();
        let ch = realize_channel(&paths, &config);
        assert!((ch.matrices[0][(0, 0)] - paths.paths[0].gain).norm() < 1e-15);
        paths.paths[0].gain = C64::default();
        let ch = realize_channel(&paths, &config);
        assert_eq!(frobenius_sq(&ch.matrices[0]), 0.0);
    }

    #[test]
    fn flat_static_channel() {
        let config = SystemConfig { velocity_mps: 0.0, ..cfg(1, 3, 2) };
        let mut paths = generate_paths(&config, &mut trial_rng(0, 2)).unwrap();
        paths.paths[0].delay_tap = 0;
        let ch = realize_channel(&paths, &config);
        let mut rng = trial_rng(9, 0);
        let tx: Vec<ComplexVector> = (0..5).map(|_| ComplexVector::from_fn(3, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
        let rx = apply_channel(&ch, &tx, 0.0, &mut rng).unwrap();
        for (x, r) in tx.iter().zip(&rx) {
            assert!((&ch.matrices[0] * x - r).norm() < 1e-14);
        }
    }

    #[test]
    fn impulse_readout() {
        let config = SystemConfig { velocity_mps: kmh_to_mps(180.0), ..cfg(3, 4, 2) };
        let paths = generate_paths(&config, &mut trial_rng(4, 0)).unwrap();
        let ch = realize_channel(&paths, &config);
        let mut tx = vec![ComplexVector::zeros(4); 50];
        tx[0][0] = C64::new(1.0, 0.0);
        let rx = apply_channel(&ch, &tx, 0.0, &mut trial_rng(0, 0)).unwrap();
        let aligned = ch.aligned_matrices();
        for (p, h) in paths.paths.iter().zip(&aligned) {
            assert!((rx[p.delay_tap].clone() - h.column(0)).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_has_requested_variance() {
        let config = cfg(1, 1, 1);
        let paths = generate_paths(&config, &mut trial_rng(0, 3)).unwrap();
        let ch = realize_channel(&paths, &config);
        let tx = vec![ComplexVector::zeros(1); 20_000];
        let rx = apply_channel(&ch, &tx, 0.5, &mut trial_rng(2, 0)).unwrap();
        let power: f64 = rx.iter().map(|r| r[0].norm_sqr()).sum::<f64>() / rx.len() as f64;
        assert!((power - 0.25).abs() < 0.01);
    }

    #[test]
    fn json_round_trip() {
        let config = cfg(3, 4, 2);
        let paths = generate_paths(&config, &mut trial_rng(5, 0)).unwrap();
        let ch = realize_channel(&paths, &config);
        let back = ChannelRealization::from_json(&ch.to_json().unwrap()).unwrap();
        assert_eq!(back.path_set, ch.path_set);
        assert_eq!(back.matrices, ch.matrices);
        let value: serde_json::Value = serde_json::from_str(&ch.to_json().unwrap()).unwrap();
        assert!(value["paths"]["paths"][0]["gain"].is_array());
        assert_eq!(value["matrices"][0]["rows"], 2);
    }

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(7, 3).random();
        let b: u64 = trial_rng(7, 3).random();
        let c: u64 = trial_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
