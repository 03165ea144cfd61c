//! System parameters and the double-timescale partition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DdamError, Result};

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Physical and dimensional parameters of one simulated link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    pub num_streams: usize,
    pub num_paths: usize,
    pub tx_power_watts: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub velocity_mps: f64,
    pub coherence_coeff: f64,
    pub max_delay_s: f64,
    pub rng_seed: u64,
    /// Mean total path power `E[sum |alpha_l|^2]` in dB (surrogate path loss).
    pub large_scale_gain_db: f64,
    /// Decay constant of the exponential power-delay profile.
    pub pdp_decay_s: f64,
    /// Stand-in for the coherence and path-invariant times of a static link.
    pub frame_duration_s: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            carrier_freq_hz: 28e9,
            bandwidth_hz: 100e6,
            num_tx_antennas: 64,
            num_rx_antennas: 2,
            num_streams: 2,
            num_paths: 3,
            tx_power_watts: 1.0,
            noise_psd_dbm_per_hz: -174.0,
            velocity_mps: 50.0,
            coherence_coeff: 0.1,
            max_delay_s: 400e-9,
            rng_seed: 0,
            large_scale_gain_db: -90.0,
            pdp_decay_s: 100e-9,
            frame_duration_s: 1e-3,
        }
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(DdamError::Config(msg.to_string()));
        if !(self.bandwidth_hz > 0.0) {
            return fail("bandwidth_hz must be positive");
        }
        if !(self.carrier_freq_hz > 0.0) {
            return fail("carrier_freq_hz must be positive");
        }
        if self.num_tx_antennas == 0 || self.num_rx_antennas == 0 {
            return fail("antenna counts must be at least 1");
        }
        if self.num_paths == 0 {
            return fail("num_paths must be at least 1");
        }
        if self.num_streams == 0 || self.num_streams > self.num_tx_antennas.min(self.num_rx_antennas) {
            return fail("num_streams must lie in 1..=min(num_tx_antennas, num_rx_antennas)");
        }
        if !(self.coherence_coeff > 0.0 && self.coherence_coeff <= 1.0) {
            return fail("coherence_coeff must lie in (0, 1]");
        }
        if !(self.velocity_mps >= 0.0) {
            return fail("velocity_mps must be non-negative");
        }
        if !(self.max_delay_s >= 0.0) {
            return fail("max_delay_s must be non-negative");
        }
        if !(self.tx_power_watts >= 0.0) {
            return fail("tx_power_watts must be non-negative");
        }
        if !(self.pdp_decay_s > 0.0) || !(self.frame_duration_s > 0.0) {
            return fail("pdp_decay_s and frame_duration_s must be positive");
        }
        if !self.large_scale_gain_db.is_finite() || !self.noise_psd_dbm_per_hz.is_finite() {
            return fail("gain and noise levels must be finite");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text).map_err(|e| DdamError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.velocity_mps * self.carrier_freq_hz / SPEED_OF_LIGHT
    }

    /// Largest admissible integer delay tap, `ceil(tau_max * B)`.
    pub fn max_delay_tap(&self) -> usize {
        // guard against products like 400e-9 * 1e8 = 40.000000000000001
        let taps = self.max_delay_s * self.bandwidth_hz;
        (taps - 1e-9).ceil().max(0.0) as usize
    }

    /// Total noise power over the band, `N_0 * B`, in watts.
    pub fn noise_variance(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_per_hz) * self.bandwidth_hz
    }

    pub fn snr_linear(&self) -> f64 {
        self.tx_power_watts / self.noise_variance()
    }

    pub fn large_scale_gain(&self) -> f64 {
        10f64.powf(self.large_scale_gain_db / 10.0)
    }

    pub fn with_tx_antennas(&self, m_t: usize) -> Self {
        SystemConfig { num_tx_antennas: m_t, ..self.clone() }
    }
}

/// Coherence block and path-invariant block lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timebase {
    pub coherence_time_s: f64,
    pub samples_per_coherence: usize,
    pub path_invariant_time_s: f64,
    pub samples_per_invariant: usize,
    pub symbol_duration_s: f64,
}

impl Timebase {
    /// Number of whole coherence blocks in one path-invariant block.
    pub fn blocks_per_invariant(&self) -> usize {
        (self.samples_per_invariant / self.samples_per_coherence.max(1)).max(1)
    }
}

/// `T_c = zeta / nu_max`, `N_c = floor(B T_c)`, and the path-invariant time
/// at the edge of `v T <= c / B`. A static link uses the configured frame
/// duration for both.
pub fn coherence_partition(config: &SystemConfig) -> Timebase {
    let t_s = config.symbol_duration_s();
    let samples = |t: f64| (t * config.bandwidth_hz + 1e-9).floor().max(1.0) as usize;
    if config.velocity_mps <= 0.0 {
        let t = config.frame_duration_s;
        return Timebase {
            coherence_time_s: t,
            samples_per_coherence: samples(t),
            path_invariant_time_s: t,
            samples_per_invariant: samples(t),
            symbol_duration_s: t_s,
        };
    }
    let t_c = config.coherence_coeff / config.max_doppler_hz();
    let t_bar = (SPEED_OF_LIGHT / (config.bandwidth_hz * config.velocity_mps)).max(t_c);
    Timebase {
        coherence_time_s: t_c,
        samples_per_coherence: samples(t_c),
        path_invariant_time_s: t_bar,
        samples_per_invariant: samples(t_bar),
        symbol_duration_s: t_s,
    }
}
