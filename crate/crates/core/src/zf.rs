//! DDAM waveform, zero-forcing feasibility, and the path-based ZF design
//! that turns the doubly selective channel into one time-invariant,
//! ISI-free MIMO channel.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, complex_gaussian, ChannelRealization, PathSet};
use crate::error::{contract, DdamError, Result};
use crate::linalg::{
    cis, frobenius_sq, null_space_basis, svd_reduced, C64, ComplexMatrix, ComplexVector, MatrixRecord,
    DEFAULT_RANK_TOL,
};

/// Per-path precoders plus the receive combiner and the delay/Doppler
/// pre-compensation that aligns every path at the largest delay.
#[derive(Clone, Debug, PartialEq)]
pub struct DdamDesign {
    /// `F_l`, each `M_t x N_s`.
    pub precoders: Vec<ComplexMatrix>,
    /// `W`, `M_r x N_s`.
    pub combiner: ComplexMatrix,
    pub delay_comp: Vec<usize>,
    pub doppler_comp: Vec<f64>,
}

impl DdamDesign {
    pub fn num_streams(&self) -> usize {
        self.combiner.ncols()
    }

    pub fn total_power(&self) -> f64 {
        self.precoders.iter().map(frobenius_sq).sum()
    }

    fn check(&self) -> Result<()> {
        let l = self.precoders.len();
        if l == 0 || self.delay_comp.len() != l || self.doppler_comp.len() != l {
            return Err(contract("design needs one precoder, delay and Doppler per path"));
        }
        let (m_t, n_s) = self.precoders[0].shape();
        if self.precoders.iter().any(|f| f.shape() != (m_t, n_s)) {
            return Err(contract("all precoders must share one shape"));
        }
        if self.combiner.ncols() != n_s {
            return Err(contract("combiner and precoders disagree on the stream count"));
        }
        Ok(())
    }

    pub fn to_record(&self) -> DesignRecord {
        DesignRecord {
            precoders: self.precoders.iter().map(MatrixRecord::from).collect(),
            combiner: MatrixRecord::from(&self.combiner),
            delay_comp: self.delay_comp.clone(),
            doppler_comp: self.doppler_comp.clone(),
        }
    }

    pub fn from_record(rec: &DesignRecord) -> Result<Self> {
        let design = DdamDesign {
            precoders: rec.precoders.iter().map(ComplexMatrix::try_from).collect::<Result<_>>()?,
            combiner: ComplexMatrix::try_from(&rec.combiner)?,
            delay_comp: rec.delay_comp.clone(),
            doppler_comp: rec.doppler_comp.clone(),
        };
        design.check()?;
        Ok(design)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub precoders: Vec<MatrixRecord>,
    pub combiner: MatrixRecord,
    pub delay_comp: Vec<usize>,
    pub doppler_comp: Vec<f64>,
}

/// `kappa_l = m_max - m_l`.
pub fn delay_precompensation(paths: &PathSet) -> Vec<usize> {
    let m_max = paths.m_max();
    paths.paths.iter().map(|p| m_max - p.delay_tap).collect()
}

/// `x[n] = sum_l F_l s[n - kappa_l] exp(-j 2 pi nu_l n T_s)` for
/// `n = 0 .. len(symbols) + max(kappa)`, with `s` zero outside its range.
pub fn build_ddam_tx(design: &DdamDesign, symbols: &[ComplexVector], symbol_duration_s: f64) -> Result<Vec<ComplexVector>> {
    design.check()?;
    let (m_t, n_s) = design.precoders[0].shape();
    if let Some(bad) = symbols.iter().find(|s| s.len() != n_s) {
        return Err(contract(format!("symbols must have {n_s} streams, got {}", bad.len())));
    }
    let k_max = design.delay_comp.iter().copied().max().unwrap_or(0);
    let len = symbols.len() + k_max;
    let mut tx: Vec<ComplexVector> = (0..len).map(|_| ComplexVector::zeros(m_t)).collect();
    for ((f, &kappa), &nu) in design.precoders.iter().zip(&design.delay_comp).zip(&design.doppler_comp) {
        let step = -2.0 * PI * nu * symbol_duration_s;
        for (k, s) in symbols.iter().enumerate() {
            let n = k + kappa;
            let fs = f * s;
            tx[n].axpy(cis(step * n as f64), &fs, C64::new(1.0, 0.0));
        }
    }
    Ok(tx)
}

/// Noiseless receive signal written as the double sum over (receive path,
/// transmit copy) pairs:
/// `sum_{l,l'} H_l F_l' exp(j 2 pi (nu_l - nu_l') n T_s) exp(j 2 pi nu_l' m_l T_s) s[n - m_l - kappa_l']`.
pub fn ddam_receive_analytic(
    design: &DdamDesign,
    realization: &ChannelRealization,
    symbols: &[ComplexVector],
    len: usize,
) -> Result<Vec<ComplexVector>> {
    design.check()?;
    if design.precoders.len() != realization.num_paths() {
        return Err(contract("design and channel disagree on the path count"));
    }
    let t_s = realization.symbol_duration_s;
    let m_r = realization.num_rx();
    let mut rx: Vec<ComplexVector> = (0..len).map(|_| ComplexVector::zeros(m_r)).collect();
    for (p, h) in realization.path_set.paths.iter().zip(&realization.matrices) {
        for ((f, &kappa), &nu_hat) in design.precoders.iter().zip(&design.delay_comp).zip(&design.doppler_comp) {
            let hf = h * f;
            let constant = cis(2.0 * PI * nu_hat * p.delay_tap as f64 * t_s);
            let step = 2.0 * PI * (p.doppler_hz - nu_hat) * t_s;
            let lag = p.delay_tap + kappa;
            for n in lag..len.min(lag + symbols.len()) {
                let v = &hf * &symbols[n - lag];
                rx[n].axpy(constant * cis(step * n as f64), &v, C64::new(1.0, 0.0));
            }
        }
    }
    Ok(rx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Infeasible,
    Feasible,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZfFeasibility {
    pub verdict: Verdict,
    pub num_equations: i64,
    pub num_variables: i64,
}

/// Classifies whether path-based ZF can meet `W^H H_l F_l' = 0` for generic
/// channels, by equation/variable counting and the sufficient conditions.
pub fn zf_feasibility(m_t: usize, m_r: usize, n_s: usize, l: usize) -> ZfFeasibility {
    let (mt, mr, ns, ll) = (m_t as i64, m_r as i64, n_s as i64, l as i64);
    let num_equations = ll * (ll - 1) * ns * ns;
    let num_variables = ns * (ll * mt + mr) - (ll + 1) * ns * ns;
    let verdict = if ll * mt + mr < (ll * ll + 1) * ns {
        Verdict::Infeasible
    } else if mt >= (ll - 1) * mr + ns || (ns == mr && mt >= ll * ns) {
        Verdict::Feasible
    } else {
        Verdict::Undetermined
    };
    ZfFeasibility { verdict, num_equations, num_variables }
}

/// Orthonormal bases `B_l` of the complement of the other paths' row spaces,
/// and the effective channel `[H_1 B_1, ..., H_L B_L]`.
#[derive(Clone, Debug)]
pub struct ZfBases {
    pub bases: Vec<ComplexMatrix>,
    pub effective_channel: ComplexMatrix,
}

impl ZfBases {
    pub fn block_sizes(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }
}

pub fn path_zf_precoder_bases(matrices: &[ComplexMatrix], num_streams: usize) -> Result<ZfBases> {
    let l = matrices.len();
    if l == 0 {
        return Err(contract("at least one path matrix required"));
    }
    let (m_r, m_t) = matrices[0].shape();
    if matrices.iter().any(|h| h.shape() != (m_r, m_t)) {
        return Err(contract("path matrices must share one shape"));
    }
    let mut bases = Vec::with_capacity(l);
    for target in 0..l {
        let others: Vec<ComplexMatrix> = (0..l).filter(|&o| o != target).map(|o| matrices[o].adjoint()).collect();
        let basis = if others.is_empty() {
            ComplexMatrix::identity(m_t, m_t)
        } else {
            let stacked = ComplexMatrix::from_fn(m_t, others.len() * m_r, |i, j| others[j / m_r][(i, j % m_r)]);
            null_space_basis(&stacked, DEFAULT_RANK_TOL)?
        };
        if basis.ncols() < num_streams {
            return Err(DdamError::Infeasible(format!(
                "path {target} leaves a {}-dimensional precoding space for {num_streams} streams",
                basis.ncols()
            )));
        }
        bases.push(basis);
    }
    let blocks: Vec<ComplexMatrix> = matrices.iter().zip(&bases).map(|(h, b)| h * b).collect();
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut effective_channel = ComplexMatrix::zeros(m_r, total);
    let mut col = 0;
    for b in &blocks {
        effective_channel.view_mut((0, col), (m_r, b.ncols())).copy_from(b);
        col += b.ncols();
    }
    Ok(ZfBases { bases, effective_channel })
}

/// Classic water-filling `p_k = max(0, mu - noise/g_k)`, `sum p_k = P`.
pub fn water_filling(mode_gains: &[f64], total_power: f64, noise_var: f64) -> Vec<f64> {
    let mut powers = vec![0.0; mode_gains.len()];
    let positive: Vec<usize> = (0..mode_gains.len()).filter(|&k| mode_gains[k] > 0.0).collect();
    if positive.is_empty() || total_power <= 0.0 {
        return powers;
    }
    let floor = |k: usize| noise_var / mode_gains[k];
    let filled = |mu: f64| positive.iter().map(|&k| (mu - floor(k)).max(0.0)).sum::<f64>();
    let min_floor = positive.iter().map(|&k| floor(k)).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, min_floor + total_power);
    while filled(hi) < total_power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if filled(mid) < total_power {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1e-300) {
            break;
        }
    }
    // Re-solve mu exactly on the active set found by bisection.
    let active: Vec<usize> = positive.iter().copied().filter(|&k| hi - floor(k) > 0.0).collect();
    let mu = (total_power + active.iter().map(|&k| floor(k)).sum::<f64>()) / active.len() as f64;
    for &k in &active {
        powers[k] = (mu - floor(k)).max(0.0);
    }
    powers
}

pub fn capacity_rate(mode_gains: &[f64], powers: &[f64], noise_var: f64) -> f64 {
    mode_gains.iter().zip(powers).map(|(g, p)| (1.0 + p * g / noise_var).log2()).sum()
}

#[derive(Clone, Debug)]
pub struct ZfCapacity {
    /// `M_r x n`, `n` = streams actually carried.
    pub combiner: ComplexMatrix,
    /// `r_sum x n`.
    pub x_tilde: ComplexMatrix,
    pub rate_bps_hz: f64,
    pub mode_powers: Vec<f64>,
    pub singular_values: Vec<f64>,
}

/// Capacity-achieving transmission over the effective channel restricted
/// to at most `num_streams` modes.
pub fn zf_capacity_design(effective_channel: &ComplexMatrix, num_streams: usize, total_power: f64, noise_var: f64) -> Result<ZfCapacity> {
    let (m_r, cols) = effective_channel.shape();
    if frobenius_sq(effective_channel) == 0.0 {
        return Ok(ZfCapacity {
            combiner: ComplexMatrix::zeros(m_r, 0),
            x_tilde: ComplexMatrix::zeros(cols, 0),
            rate_bps_hz: 0.0,
            mode_powers: Vec::new(),
            singular_values: Vec::new(),
        });
    }
    let svd = svd_reduced(effective_channel)?;
    let n = svd.rank().min(num_streams);
    let sv: Vec<f64> = svd.singular_values[..n].to_vec();
    let gains: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let powers = water_filling(&gains, total_power, noise_var);
    let combiner = svd.u.columns(0, n).into_owned();
    let mut x_tilde = svd.v.columns(0, n).into_owned();
    for (k, p) in powers.iter().enumerate() {
        x_tilde.column_mut(k).scale_mut(p.sqrt());
    }
    Ok(ZfCapacity { combiner, x_tilde, rate_bps_hz: capacity_rate(&gains, &powers, noise_var), mode_powers: powers, singular_values: sv })
}

/// `F_l = B_l X_l` with `X_l` the `l`-th row block of `X~`.
pub fn split_precoders(bases: &ZfBases, x_tilde: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let mut row = 0;
    bases
        .bases
        .iter()
        .map(|b| {
            let block = x_tilde.rows(row, b.ncols()).into_owned();
            row += b.ncols();
            b * block
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ZfOutcome {
    pub design: DdamDesign,
    pub capacity: ZfCapacity,
    pub bases: ZfBases,
}

/// Full path-based ZF design for a realization: bases on the aligned path
/// matrices, capacity design, and the delay/Doppler pre-compensation.
pub fn design_path_zf(realization: &ChannelRealization, num_streams: usize, total_power: f64, noise_var: f64) -> Result<ZfOutcome> {
    let aligned = realization.aligned_matrices();
    let bases = path_zf_precoder_bases(&aligned, num_streams)?;
    let capacity = zf_capacity_design(&bases.effective_channel, num_streams, total_power, noise_var)?;
    let design = DdamDesign {
        precoders: split_precoders(&bases, &capacity.x_tilde),
        combiner: capacity.combiner.clone(),
        delay_comp: delay_precompensation(&realization.path_set),
        doppler_comp: realization.path_set.dopplers(),
    };
    Ok(ZfOutcome { design, capacity, bases })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsiSplit {
    pub desired_power: f64,
    pub isi_power: f64,
}

impl IsiSplit {
    pub fn ratio(&self) -> f64 {
        if self.desired_power > 0.0 {
            self.isi_power / self.desired_power
        } else if self.isi_power > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Runs random symbols through the DDAM transmitter and the noiseless
/// time-domain channel, applies `W^H`, and splits the output into the part
/// linearly explained by `s[n - m_max]` and the remainder. Samples within
/// `2 m_max` of either end are discarded.
pub fn residual_isi_power<R: Rng + ?Sized>(
    design: &DdamDesign,
    realization: &ChannelRealization,
    num_symbols: usize,
    rng: &mut R,
) -> Result<IsiSplit> {
    design.check()?;
    let n_s = design.num_streams();
    let m_max = realization.path_set.m_max();
    let symbols: Vec<ComplexVector> = (0..num_symbols)
        .map(|_| ComplexVector::from_fn(n_s, |_, _| complex_gaussian(rng, 1.0)))
        .collect();
    let tx = build_ddam_tx(design, &symbols, realization.symbol_duration_s)?;
    let rx = apply_channel(realization, &tx, 0.0, rng)?;
    let w_h = design.combiner.adjoint();
    let start = 2 * m_max;
    let end = rx.len().saturating_sub(2 * m_max).min(num_symbols + m_max);
    if end <= start + n_s {
        return Err(contract("too few symbols for the correlation window"));
    }
    let outputs: Vec<ComplexVector> = (start..end).map(|n| &w_h * &rx[n]).collect();
    let refs: Vec<&ComplexVector> = (start..end).map(|n| &symbols[n - m_max]).collect();

    if realization.num_paths() == 1 {
        let desired = outputs.iter().map(|y| y.norm_squared()).sum();
        return Ok(IsiSplit { desired_power: desired, isi_power: 0.0 });
    }

    // least-squares fit y[n] ≈ A s[n - m_max]
    let mut cross = ComplexMatrix::zeros(n_s, n_s);
    let mut gram = ComplexMatrix::zeros(n_s, n_s);
    for (y, s) in outputs.iter().zip(&refs) {
        cross += y * s.adjoint();
        gram += *s * s.adjoint();
    }
    let fit = cross * crate::linalg::inverse_hpd(&gram)?;
    let mut desired = 0.0;
    let mut isi = 0.0;
    for (y, s) in outputs.iter().zip(&refs) {
        let d = &fit * *s;
        isi += (y - &d).norm_squared();
        desired += d.norm_squared();
    }
    Ok(IsiSplit { desired_power: desired, isi_power: isi })
}
