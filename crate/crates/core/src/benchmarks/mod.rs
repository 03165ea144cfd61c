//! Comparison transceivers: MIMO-OFDM with inter-carrier interference,
//! MIMO-OTFS with alternating beam optimization, and single-path beamforming.

pub mod ofdm;
pub mod otfs;
pub mod strongest;

pub use ofdm::{
    cfo_compensated, cp_overhead, ici_coefficient, ofdm_design, ofdm_design_and_rate, ofdm_ici_channel, ofdm_tx_frame, OfdmConfig,
    OfdmDesign, OfdmOutcome,
};
pub use otfs::{
    otfs_beam_opt, otfs_delay_doppler_channel, otfs_design_and_rate, otfs_rate, otfs_rate_fast, otfs_taps, otfs_time_channel, BeamOpt,
    OtfsConfig, OtfsOutcome, OtfsTaps,
};
pub use strongest::{strongest_path_design, StrongestPath};
