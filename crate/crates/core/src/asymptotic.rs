//! Single-stream DDAM with many transmit antennas: path-based MRT, the
//! Cauchy-Schwarz combiner, SNR bounds and the optimal power split.
//!
//! The analysis normalizes the combiner by `1 / sum ||a(phi_i)||`; that
//! constant cancels in every SNR and is not carried at runtime.

use crate::channel::{array_response, ChannelRealization};
use crate::error::{contract, Result};
use crate::linalg::{C64, ComplexMatrix, ComplexVector};
use crate::zf::{delay_precompensation, DdamDesign};

/// Path gains including the constant phase each path picks up after
/// Doppler pre-rotation, so that MRT co-phases the aligned copies.
fn aligned_gains(realization: &ChannelRealization) -> Vec<C64> {
    let t_s = realization.symbol_duration_s;
    realization
        .path_set
        .paths
        .iter()
        .map(|p| p.gain * crate::linalg::cis(2.0 * std::f64::consts::PI * p.doppler_hz * p.delay_tap as f64 * t_s))
        .collect()
}

/// `f_l = sqrt(p_l) alpha_l^* a_T(psi_l) / (|alpha_l| sqrt(M_t))`.
pub fn mrt_precoders(realization: &ChannelRealization, power_alloc: &[f64]) -> Result<Vec<ComplexVector>> {
    if power_alloc.len() != realization.num_paths() {
        return Err(contract("one power per path required"));
    }
    if power_alloc.iter().any(|p| !(*p >= 0.0)) {
        return Err(contract("powers must be non-negative"));
    }
    let m_t = realization.num_tx();
    Ok(realization
        .path_set
        .paths
        .iter()
        .zip(aligned_gains(realization))
        .zip(power_alloc)
        .map(|((p, alpha), &power)| {
            if alpha.norm() == 0.0 {
                return ComplexVector::zeros(m_t);
            }
            let phase = alpha.conj() / alpha.norm();
            array_response(m_t, p.aod_rad) * (phase * (power / m_t as f64).sqrt())
        })
        .collect())
}

/// `u = sum_l sqrt(p_l) |alpha_l| a_R(phi_l)`.
fn combined_receive_direction(realization: &ChannelRealization, power_alloc: &[f64]) -> ComplexVector {
    let m_r = realization.num_rx();
    let mut u = ComplexVector::zeros(m_r);
    for (p, &power) in realization.path_set.paths.iter().zip(power_alloc) {
        u += array_response(m_r, p.aoa_rad) * C64::new(power.sqrt() * p.gain.norm(), 0.0);
    }
    u
}

/// Unit-norm combiner `w = u / ||u||`.
pub fn asymptotic_combiner(realization: &ChannelRealization, power_alloc: &[f64]) -> Result<ComplexVector> {
    if power_alloc.len() != realization.num_paths() {
        return Err(contract("one power per path required"));
    }
    let u = combined_receive_direction(realization, power_alloc);
    let norm = u.norm();
    if norm == 0.0 {
        return Err(contract("all paths carry zero power or zero gain"));
    }
    Ok(u.unscale(norm))
}

/// SNR reached by the optimal combiner, `M_t ||u||^2 / sigma^2`.
pub fn mrt_snr(realization: &ChannelRealization, power_alloc: &[f64], noise_var: f64) -> f64 {
    realization.num_tx() as f64 * combined_receive_direction(realization, power_alloc).norm_squared() / noise_var
}

/// Triangle-inequality bound `M_t M_r (sum sqrt(p_l) |alpha_l|)^2 / sigma^2`.
pub fn mrt_snr_upper_bound(gains: &[f64], power_alloc: &[f64], m_t: usize, m_r: usize, noise_var: f64) -> f64 {
    let s: f64 = gains.iter().zip(power_alloc).map(|(g, p)| p.sqrt() * g).sum();
    (m_t * m_r) as f64 * s * s / noise_var
}

/// `p_l = P |alpha_l|^2 / sum |alpha_i|^2`, the maximizer of `sum sqrt(p_l) |alpha_l|`.
pub fn mrt_power_allocation(gains: &[f64], total_power: f64) -> Result<Vec<f64>> {
    let energy: f64 = gains.iter().map(|g| g * g).sum();
    if !(energy > 0.0) {
        return Err(contract("at least one positive gain required"));
    }
    Ok(gains.iter().map(|g| total_power * g * g / energy).collect())
}

/// `gamma* = (P / sigma^2) M_t M_r sum |alpha_l|^2`.
pub fn asymptotic_snr(total_power: f64, noise_var: f64, m_t: usize, m_r: usize, gains: &[f64]) -> f64 {
    total_power / noise_var * (m_t * m_r) as f64 * gains.iter().map(|g| g * g).sum::<f64>()
}

/// Largest normalized correlation between distinct paths' transmit
/// steering vectors, for each array size in the sweep.
pub fn cross_path_leakage(aods_rad: &[f64], m_t_sweep: &[usize]) -> Result<Vec<f64>> {
    if aods_rad.len() < 2 {
        return Err(contract("leakage needs at least two paths"));
    }
    Ok(m_t_sweep
        .iter()
        .map(|&m_t| {
            let vecs: Vec<ComplexVector> = aods_rad.iter().map(|&a| array_response(m_t, a)).collect();
            let mut worst: f64 = 0.0;
            for i in 0..vecs.len() {
                for j in (i + 1)..vecs.len() {
                    worst = worst.max(vecs[i].dotc(&vecs[j]).norm() / m_t as f64);
                }
            }
            worst
        })
        .collect())
}

/// MRT precoders, optimal combiner and pre-compensation packaged as a
/// single-stream DDAM design.
pub fn mrt_design(realization: &ChannelRealization, power_alloc: &[f64]) -> Result<DdamDesign> {
    let precoders = mrt_precoders(realization, power_alloc)?
        .into_iter()
        .map(|f| ComplexMatrix::from_column_slice(f.len(), 1, f.as_slice()))
        .collect();
    let w = asymptotic_combiner(realization, power_alloc)?;
    Ok(DdamDesign {
        precoders,
        combiner: ComplexMatrix::from_column_slice(w.len(), 1, w.as_slice()),
        delay_comp: delay_precompensation(&realization.path_set),
        doppler_comp: realization.path_set.dopplers(),
    })
}
