use crate::channel::{array_response, ChannelRealization};
use crate::error::{contract, Result};
use crate::linalg::{ComplexVector, C64};

/// Beam alignment along the dominant path only; the other paths arrive as
/// interference at their own delays.
#[derive(Clone, Debug)]
pub struct StrongestPath {
    pub path_index: usize,
    pub precoder: ComplexVector,
    pub combiner: ComplexVector,
    /// `P/sigma^2 M_t M_r |alpha_max|^2`.
    pub asymptotic_snr: f64,
    pub sinr: f64,
}

impl StrongestPath {
    pub fn rate_bps_hz(&self) -> f64 {
        (1.0 + self.sinr).log2()
    }
}

pub fn strongest_path_design(realization: &ChannelRealization, total_power: f64, noise_var: f64) -> Result<StrongestPath> {
    let paths = &realization.path_set;
    if paths.is_empty() {
        return Err(contract("at least one path required"));
    }
    let (m_r, m_t) = (realization.num_rx(), realization.num_tx());
    let l_max = paths.strongest();
    let p = &paths.paths[l_max];
    let phase = if p.gain.norm() > 0.0 { p.gain.conj() / p.gain.norm() } else { C64::new(1.0, 0.0) };
    let precoder = array_response(m_t, p.aod_rad) * (phase * (total_power / m_t as f64).sqrt());
    let combiner = array_response(m_r, p.aoa_rad).normalize();
    let received: Vec<f64> = realization.matrices.iter().map(|h| combiner.dotc(&(h * &precoder)).norm_sqr()).collect();
    let interference: f64 = received.iter().enumerate().filter(|&(l, _)| l != l_max).map(|(_, r)| r).sum();
    Ok(StrongestPath {
        path_index: l_max,
        asymptotic_snr: total_power / noise_var * (m_t * m_r) as f64 * p.gain.norm_sqr(),
        sinr: received[l_max] / (interference + noise_var),
        precoder,
        combiner,
    })
}
