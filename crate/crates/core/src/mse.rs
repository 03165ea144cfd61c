//! DDAM with residual ISI: delay-difference grouping of the time-variant
//! ISI channels, the resulting achievable rate, and block coordinate descent
//! over combiner, MSE weight and stacked precoder.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::channel::{complex_gaussian, ChannelRealization};
use crate::config::Timebase;
use crate::error::{contract, DdamError, Result};
use crate::linalg::{
    cis, eig_hermitian, frobenius_sq, hermitian_part, inverse_hpd, ln_det_hpd, svd_reduced, C64, ComplexMatrix,
    ComplexVector,
};
use crate::zf::{delay_precompensation, design_path_zf, DdamDesign};

/// Desired stacked channel `H̄` and ISI channels `Ḡ[i]` keyed by the extra
/// delay `i` (the group lands on `s[n - D - i]`, `D` the desired lag), all
/// `M_r x L M_t`, for one coherence block.
#[derive(Clone, Debug)]
pub struct GroupedChannels {
    pub stacked: ComplexMatrix,
    pub isi: BTreeMap<i64, ComplexMatrix>,
    pub block_index: u64,
    pub noise_var: f64,
    reduced: Reduced,
}

/// The same channels expressed on an orthonormal basis `V` of the joint row
/// space; every precoder that matters lives in `range(V)`.
#[derive(Clone, Debug)]
struct Reduced {
    basis: ComplexMatrix,
    stacked: ComplexMatrix,
    isi: Vec<ComplexMatrix>,
}

impl GroupedChannels {
    fn new(stacked: ComplexMatrix, isi: BTreeMap<i64, ComplexMatrix>, block_index: u64, noise_var: f64) -> Result<Self> {
        let m_r = stacked.nrows();
        let blocks: Vec<&ComplexMatrix> = std::iter::once(&stacked).chain(isi.values()).collect();
        let joint = ComplexMatrix::from_fn(stacked.ncols(), m_r * blocks.len(), |i, j| blocks[j / m_r][(j % m_r, i)].conj());
        let basis = if frobenius_sq(&joint) > 0.0 {
            svd_reduced(&joint)?.u
        } else {
            ComplexMatrix::zeros(stacked.ncols(), 0)
        };
        let reduced = Reduced {
            stacked: &stacked * &basis,
            isi: isi.values().map(|g| g * &basis).collect(),
            basis,
        };
        Ok(GroupedChannels { stacked, isi, block_index, noise_var, reduced })
    }

    pub fn num_rx(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn precoder_rows(&self) -> usize {
        self.stacked.ncols()
    }

    /// Dimension of the subspace the precoder is optimized over.
    pub fn reduced_dim(&self) -> usize {
        self.reduced.basis.ncols()
    }

    fn full(&self) -> ChannelSet<'_> {
        ChannelSet { stacked: &self.stacked, isi: self.isi.values().collect(), noise_var: self.noise_var }
    }

    fn small(&self) -> ChannelSet<'_> {
        ChannelSet { stacked: &self.reduced.stacked, isi: self.reduced.isi.iter().collect(), noise_var: self.noise_var }
    }

    fn lift(&self, reduced_precoder: &ComplexMatrix) -> ComplexMatrix {
        &self.reduced.basis * reduced_precoder
    }

    fn project(&self, precoder: &ComplexMatrix) -> ComplexMatrix {
        self.reduced.basis.adjoint() * precoder
    }
}

/// Groups every (receive path `l`, transmit copy `l'`) pair by the lag at
/// which it lands, `m_l + kappa_l'`. Pairs at `desired_lag` form `H̄`; the
/// rest form `Ḡ[lag - desired_lag]`. Column block `l'` of a group collects
/// `H_l exp(j 2 pi nu_l' m_l T_s) exp(j 2 pi (nu_l - nu_l') b N_c T_s)`.
pub fn group_for_compensation(
    realization: &ChannelRealization,
    delay_comp: &[usize],
    doppler_comp: &[f64],
    desired_lag: usize,
    timebase: &Timebase,
    block_index: u64,
    noise_var: f64,
) -> Result<GroupedChannels> {
    let l_count = realization.num_paths();
    if delay_comp.len() != l_count || doppler_comp.len() != l_count {
        return Err(contract("one delay and Doppler compensation per path required"));
    }
    let (m_r, m_t) = (realization.num_rx(), realization.num_tx());
    let t_s = realization.symbol_duration_s;
    let block_time = block_index as f64 * timebase.samples_per_coherence as f64 * t_s;
    let mut stacked = ComplexMatrix::zeros(m_r, l_count * m_t);
    let mut isi: BTreeMap<i64, ComplexMatrix> = BTreeMap::new();
    for (p, h) in realization.path_set.paths.iter().zip(&realization.matrices) {
        for (copy, (&kappa, &nu_hat)) in delay_comp.iter().zip(doppler_comp).enumerate() {
            let phase = cis(2.0 * PI * (nu_hat * p.delay_tap as f64 * t_s + (p.doppler_hz - nu_hat) * block_time));
            let lag = (p.delay_tap + kappa) as i64 - desired_lag as i64;
            let target = if lag == 0 {
                &mut stacked
            } else {
                isi.entry(lag).or_insert_with(|| ComplexMatrix::zeros(m_r, l_count * m_t))
            };
            let mut block = target.view_mut((0, copy * m_t), (m_r, m_t));
            block += h * phase;
        }
    }
    GroupedChannels::new(stacked, isi, block_index, noise_var)
}

/// Grouping for perfect delay/Doppler knowledge: `kappa_l = m_max - m_l`,
/// Dopplers pre-rotated exactly, desired lag `m_max`.
pub fn group_delay_differences(realization: &ChannelRealization, timebase: &Timebase, block_index: u64, noise_var: f64) -> Result<GroupedChannels> {
    let paths = &realization.path_set;
    group_for_compensation(realization, &delay_precompensation(paths), &paths.dopplers(), paths.m_max(), timebase, block_index, noise_var)
}

/// Stacks per-path precoders `[F_1; ...; F_L]`.
pub fn stack_precoders(precoders: &[ComplexMatrix]) -> ComplexMatrix {
    let (m_t, n_s) = precoders[0].shape();
    let mut out = ComplexMatrix::zeros(m_t * precoders.len(), n_s);
    for (l, f) in precoders.iter().enumerate() {
        out.view_mut((l * m_t, 0), (m_t, n_s)).copy_from(f);
    }
    out
}

/// Splits a stacked precoder back into `L` blocks of `m_t` rows.
pub fn unstack_precoder(stacked: &ComplexMatrix, m_t: usize) -> Vec<ComplexMatrix> {
    (0..stacked.nrows() / m_t).map(|l| stacked.rows(l * m_t, m_t).into_owned()).collect()
}

struct ChannelSet<'a> {
    stacked: &'a ComplexMatrix,
    isi: Vec<&'a ComplexMatrix>,
    noise_var: f64,
}

impl ChannelSet<'_> {
    /// `C = sum_i Ḡ[i] F F^H Ḡ[i]^H + sigma^2 I`.
    fn interference_covariance(&self, precoder: &ComplexMatrix) -> ComplexMatrix {
        let m_r = self.stacked.nrows();
        let mut c = ComplexMatrix::identity(m_r, m_r) * C64::new(self.noise_var, 0.0);
        for g in &self.isi {
            let gf = *g * precoder;
            c += &gf * gf.adjoint();
        }
        hermitian_part(&c)
    }

    fn rate(&self, precoder: &ComplexMatrix, combiner: &ComplexMatrix) -> Result<f64> {
        if frobenius_sq(precoder) == 0.0 || frobenius_sq(combiner) == 0.0 {
            return Ok(0.0);
        }
        // The rate only depends on range(W); use an orthonormal basis of it.
        let w = svd_reduced(combiner)?.u;
        let hf = self.stacked * precoder;
        let whf = w.adjoint() * hf;
        let k = hermitian_part(&(w.adjoint() * self.interference_covariance(precoder) * &w));
        let s = &whf * whf.adjoint();
        let ln_k = ln_det_hpd(&k).map_err(|_| contract("W^H C W is singular"))?;
        Ok((ln_det_hpd(&(k + s))? - ln_k) / std::f64::consts::LN_2)
    }

    fn rate_mmse(&self, precoder: &ComplexMatrix) -> Result<f64> {
        if frobenius_sq(precoder) == 0.0 {
            return Ok(0.0);
        }
        let c = self.interference_covariance(precoder);
        let hf = self.stacked * precoder;
        let m = hf.adjoint() * crate::linalg::solve_hpd(&c, &hf)?;
        let n = m.nrows();
        Ok(ln_det_hpd(&(ComplexMatrix::identity(n, n) + m))? / std::f64::consts::LN_2)
    }

    fn received_covariance(&self, precoder: &ComplexMatrix) -> ComplexMatrix {
        let hf = self.stacked * precoder;
        hermitian_part(&(&hf * hf.adjoint() + self.interference_covariance(precoder)))
    }

    fn mmse_receiver(&self, precoder: &ComplexMatrix) -> Result<ComplexMatrix> {
        crate::linalg::solve_hpd(&self.received_covariance(precoder), &(self.stacked * precoder))
    }

    fn mse_matrix(&self, precoder: &ComplexMatrix, combiner: &ComplexMatrix) -> ComplexMatrix {
        let n = precoder.ncols();
        let whf = combiner.adjoint() * (self.stacked * precoder);
        let e = combiner.adjoint() * self.received_covariance(precoder) * combiner - &whf - whf.adjoint() + ComplexMatrix::identity(n, n);
        hermitian_part(&e)
    }

    /// Minimizer of `tr(Q E)` over `||F||_F^2 <= P` for fixed `W`, `Q`.
    fn precoder_update(&self, combiner: &ComplexMatrix, weight: &ComplexMatrix, total_power: f64) -> Result<PrecoderUpdate> {
        let dim = self.stacked.ncols();
        let n_s = combiner.ncols();
        let wqw = combiner * weight * combiner.adjoint();
        let mut a = self.stacked.adjoint() * &wqw * self.stacked;
        for g in &self.isi {
            a += g.adjoint() * &wqw * *g;
        }
        let a = hermitian_part(&a);
        let b = self.stacked.adjoint() * combiner * weight;
        if dim == 0 || frobenius_sq(&b) == 0.0 {
            return Ok(PrecoderUpdate { precoder: ComplexMatrix::zeros(dim, n_s), beta: 0.0 });
        }
        let eig = eig_hermitian(&a)?;
        let lam_max = eig.eigenvalues[0].max(0.0);
        let proj = eig.eigenvectors.adjoint() * &b;
        let row_energy: Vec<f64> = (0..dim).map(|k| proj.row(k).norm_squared()).collect();
        let zero = |k: usize| eig.eigenvalues[k] <= 1e-12 * lam_max;
        let power_at = |beta: f64| -> f64 {
            (0..dim)
                .filter(|&k| beta > 0.0 || !zero(k))
                .map(|k| row_energy[k] / (eig.eigenvalues[k].max(0.0) + beta).powi(2))
                .sum()
        };
        let beta = if power_at(0.0) <= total_power {
            0.0
        } else {
            let mut hi = a.trace().re / total_power + 1.0;
            let mut doublings = 0;
            while power_at(hi) > total_power {
                hi *= 2.0;
                doublings += 1;
                if doublings > 2000 {
                    return Err(DdamError::Numerical("could not bracket the power multiplier".into()));
                }
            }
            let mut lo = 0.0;
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if power_at(mid) > total_power {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            hi
        };
        let mut scaled = proj;
        for k in 0..dim {
            let d = eig.eigenvalues[k].max(0.0) + beta;
            let factor = if beta == 0.0 && zero(k) { 0.0 } else { 1.0 / d };
            scaled.row_mut(k).scale_mut(factor);
        }
        Ok(PrecoderUpdate { precoder: &eig.eigenvectors * scaled, beta })
    }
}

#[derive(Clone, Debug)]
pub struct PrecoderUpdate {
    pub precoder: ComplexMatrix,
    /// Power multiplier; zero when the power constraint is inactive.
    pub beta: f64,
}

/// `log2 |I + W^H H̄ F F^H H̄^H W (W^H C W)^{-1}|`; zero for `F = 0`.
pub fn ddam_rate(grouped: &GroupedChannels, precoder: &ComplexMatrix, combiner: &ComplexMatrix) -> Result<f64> {
    grouped.full().rate(precoder, combiner)
}

/// Rate under the MMSE combiner, `log2 |I + F^H H̄^H C^{-1} H̄ F|`.
pub fn rate_with_mmse_receiver(grouped: &GroupedChannels, precoder: &ComplexMatrix) -> Result<f64> {
    grouped.small().rate_mmse(&grouped.project(precoder))
}

pub fn interference_covariance(grouped: &GroupedChannels, precoder: &ComplexMatrix) -> ComplexMatrix {
    grouped.full().interference_covariance(precoder)
}

/// Wiener filter `W = (H̄ F F^H H̄^H + C)^{-1} H̄ F`.
pub fn mmse_receiver(grouped: &GroupedChannels, precoder: &ComplexMatrix) -> Result<ComplexMatrix> {
    grouped.full().mmse_receiver(precoder)
}

/// `E = W^H (H̄FF^H H̄^H + C) W - W^H H̄ F - F^H H̄^H W + I`.
pub fn mse_matrix(grouped: &GroupedChannels, precoder: &ComplexMatrix, combiner: &ComplexMatrix) -> ComplexMatrix {
    grouped.full().mse_matrix(precoder, combiner)
}

/// `F(beta) = (H̄^H W Q W^H H̄ + sum Ḡ^H W Q W^H Ḡ + beta I)^{-1} H̄^H W Q`
/// with `beta` at zero or at the value that meets the power budget.
pub fn precoder_update(grouped: &GroupedChannels, combiner: &ComplexMatrix, weight: &ComplexMatrix, total_power: f64) -> Result<PrecoderUpdate> {
    let up = grouped.small().precoder_update(combiner, weight, total_power)?;
    Ok(PrecoderUpdate { precoder: grouped.lift(&up.precoder), beta: up.beta })
}

#[derive(Clone, Copy, Debug)]
pub struct BcdOptions {
    /// Stop once the fractional rate increase drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions { tol: 1e-4, max_iters: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct BcdState {
    /// Stacked `L M_t x N_s` precoder.
    pub precoder: ComplexMatrix,
    pub combiner: ComplexMatrix,
    pub weight: ComplexMatrix,
    /// Rate under the MMSE combiner; entry 0 is the initial precoder.
    pub rate_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl BcdState {
    pub fn rate(&self) -> f64 {
        *self.rate_trace.last().unwrap_or(&0.0)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,rate\n");
        for (k, r) in self.rate_trace.iter().enumerate() {
            out.push_str(&format!("{k},{r}\n"));
        }
        out
    }
}

/// Block coordinate descent: `W` by MMSE, `Q = E^{-1}`, then the
/// power-constrained precoder update, until the rate stalls.
pub fn bcd_solve(grouped: &GroupedChannels, initial_precoder: &ComplexMatrix, total_power: f64, options: &BcdOptions) -> Result<BcdState> {
    if !(options.tol > 0.0) {
        return Err(contract("tolerance must be positive"));
    }
    if initial_precoder.nrows() != grouped.precoder_rows() {
        return Err(contract("initial precoder has the wrong number of rows"));
    }
    let set = grouped.small();
    let mut f = grouped.project(initial_precoder);
    let n_s = f.ncols();
    let mut rate_trace = vec![set.rate_mmse(&f)?];
    let mut w = set.mmse_receiver(&f)?;
    let mut q = ComplexMatrix::identity(n_s, n_s);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        w = set.mmse_receiver(&f)?;
        let e = set.mse_matrix(&f, &w);
        q = hermitian_part(&inverse_hpd(&e)?);
        f = set.precoder_update(&w, &q, total_power)?.precoder;
        let rate = set.rate_mmse(&f)?;
        let prev = *rate_trace.last().unwrap();
        rate_trace.push(rate);
        if rate - prev < options.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(BcdState { precoder: grouped.lift(&f), combiner: w, weight: q, rate_trace, converged, iterations })
}

/// Algorithm start point: the given stacked precoder rescaled to power `P`,
/// or an i.i.d. Gaussian one when none is supplied.
pub fn initial_precoder<R: Rng + ?Sized>(rows: usize, num_streams: usize, seed: Option<&ComplexMatrix>, total_power: f64, rng: &mut R) -> ComplexMatrix {
    let mut f = match seed {
        Some(f) if frobenius_sq(f) > 0.0 => {
            let mut padded = ComplexMatrix::zeros(rows, num_streams);
            let cols = f.ncols().min(num_streams);
            padded.columns_mut(0, cols).copy_from(&f.columns(0, cols));
            padded
        }
        _ => ComplexMatrix::from_fn(rows, num_streams, |_, _| complex_gaussian(rng, 1.0)),
    };
    let norm = frobenius_sq(&f).sqrt();
    f.unscale_mut(norm / total_power.sqrt());
    f
}

/// Runs the descent for one coherence block, starting from the path-based
/// ZF precoder when one exists and from a Gaussian draw otherwise.
pub fn mse_design<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    timebase: &Timebase,
    block_index: u64,
    num_streams: usize,
    total_power: f64,
    noise_var: f64,
    options: &BcdOptions,
    rng: &mut R,
) -> Result<BcdState> {
    let grouped = group_delay_differences(realization, timebase, block_index, noise_var)?;
    let zf = design_path_zf(realization, num_streams, total_power, noise_var)
        .ok()
        .map(|o| stack_precoders(&o.design.precoders));
    let f0 = initial_precoder(grouped.precoder_rows(), num_streams, zf.as_ref(), total_power, rng);
    bcd_solve(&grouped, &f0, total_power, options)
}

/// Converged rate averaged over `num_blocks` coherence blocks spread over
/// one path-invariant block.
pub fn mse_rate_over_blocks<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    timebase: &Timebase,
    num_blocks: usize,
    num_streams: usize,
    total_power: f64,
    noise_var: f64,
    options: &BcdOptions,
    rng: &mut R,
) -> Result<f64> {
    let blocks = sample_blocks(timebase, num_blocks);
    let mut sum = 0.0;
    for &b in &blocks {
        sum += mse_design(realization, timebase, b, num_streams, total_power, noise_var, options, rng)?.rate();
    }
    Ok(sum / blocks.len() as f64)
}

/// Noiseless grouped receive signal `H̄ F s[n - D] + sum_i Ḡ[i] F s[n - D - i]`.
pub fn grouped_receive(grouped: &GroupedChannels, precoder: &ComplexMatrix, symbols: &[ComplexVector], desired_lag: usize, len: usize) -> Vec<ComplexVector> {
    let m_r = grouped.num_rx();
    let groups: Vec<(i64, ComplexMatrix)> = std::iter::once((0, &grouped.stacked * precoder))
        .chain(grouped.isi.iter().map(|(&i, g)| (i, g * precoder)))
        .collect();
    (0..len)
        .map(|n| {
            let mut y = ComplexVector::zeros(m_r);
            for (i, gf) in &groups {
                let k = n as i64 - desired_lag as i64 - i;
                if k >= 0 && (k as usize) < symbols.len() {
                    y += gf * &symbols[k as usize];
                }
            }
            y
        })
        .collect()
}

/// Block indices spread evenly over one path-invariant block.
pub fn sample_blocks(timebase: &Timebase, count: usize) -> Vec<u64> {
    let total = timebase.blocks_per_invariant() as u64;
    let count = count.max(1) as u64;
    (0..count).map(|k| 1 + k * total / count).collect()
}

/// A DDAM design from a stacked precoder and a combiner, with perfect
/// delay/Doppler compensation.
pub fn design_from_stacked(realization: &ChannelRealization, precoder: &ComplexMatrix, combiner: &ComplexMatrix) -> DdamDesign {
    DdamDesign {
        precoders: unstack_precoder(precoder, realization.num_tx()),
        combiner: combiner.clone(),
        delay_comp: delay_precompensation(&realization.path_set),
        doppler_comp: realization.path_set.dopplers(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_paths, realize_channel, trial_rng, Path, PathSet};
    use crate::config::{coherence_partition, kmh_to_mps, SystemConfig};

    fn config(m_t: usize, l: usize) -> SystemConfig {
        SystemConfig { num_tx_antennas: m_t, num_paths: l, velocity_mps: kmh_to_mps(180.0), ..Default::default() }
    }

    fn setup(m_t: usize, l: usize, trial: u64) -> (SystemConfig, ChannelRealization, Timebase) {
        let cfg = config(m_t, l);
        let paths = generate_paths(&cfg, &mut trial_rng(40, trial)).unwrap();
        let ch = realize_channel(&paths, &cfg);
        (cfg.clone(), ch, coherence_partition(&cfg))
    }

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
    }

    #[test]
    fn single_path_has_no_isi_groups() {
        let (cfg, ch, tb) = setup(8, 1, 0);
        let g = group_delay_differences(&ch, &tb, 3, cfg.noise_variance()).unwrap();
        assert!(g.isi.is_empty());
        assert!((&g.stacked - &ch.aligned_matrices()[0]).norm() < 1e-20);
    }

    #[test]
    fn two_adjacent_paths_give_two_groups() {
        let cfg = config(4, 2);
        let mk = |m| Path { gain: C64::new(1.0, 0.0), aoa_rad: 0.2, aod_rad: -0.4, delay_tap: m, doppler_hz: 100.0 * m as f64 };
        let ch = realize_channel(&PathSet::new(vec![mk(0), mk(1)]).unwrap(), &cfg);
        let g = group_delay_differences(&ch, &coherence_partition(&cfg), 1, 1.0).unwrap();
        assert_eq!(g.isi.keys().copied().collect::<Vec<_>>(), vec![-1, 1]);
        for grp in g.isi.values() {
            let nonzero = (0..2).filter(|&b| grp.columns(b * 4, 4).norm() > 0.0).count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn grouping_matches_raw_double_sum() {
        let (cfg, ch, tb) = setup(6, 3, 1);
        let block = 5;
        let g = group_delay_differences(&ch, &tb, block, cfg.noise_variance()).unwrap();
        let mut rng = trial_rng(0, 9);
        let f = random(18, 2, &mut rng);
        let symbols: Vec<ComplexVector> = (0..200).map(|_| ComplexVector::from_fn(2, |_, _| complex_gaussian(&mut rng, 1.0))).collect();
        let len = 200 + 2 * ch.path_set.m_max();
        let grouped = grouped_receive(&g, &f, &symbols, ch.path_set.m_max(), len);

        // raw double sum with the phase frozen at the block
        let t_s = ch.symbol_duration_s;
        let bt = block as f64 * tb.samples_per_coherence as f64 * t_s;
        let kappa = delay_precompensation(&ch.path_set);
        let fl = unstack_precoder(&f, 6);
        for n in 0..len {
            let mut y = ComplexVector::zeros(2);
            for (p, h) in ch.path_set.paths.iter().zip(&ch.matrices) {
                for (lp, q) in ch.path_set.paths.iter().enumerate() {
                    let lag = p.delay_tap + kappa[lp];
                    if n >= lag && n - lag < symbols.len() {
                        let ph = cis(2.0 * PI * (q.doppler_hz * p.delay_tap as f64 * t_s + (p.doppler_hz - q.doppler_hz) * bt));
                        y += (h * &fl[lp] * &symbols[n - lag]) * ph;
                    }
                }
            }
            assert!((&y - &grouped[n]).norm() <= 1e-9 * y.norm().max(1e-300));
        }
    }

    #[test]
    fn siso_rate_and_zero_precoder() {
        let h = ComplexMatrix::from_element(1, 1, C64::new(0.6, 0.8) * 2.0);
        let g = GroupedChannels::new(h, BTreeMap::new(), 0, 0.5).unwrap();
        let f = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let w = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        assert!((ddam_rate(&g, &f, &w).unwrap() - (1.0f64 + 4.0 / 0.5).log2()).abs() < 1e-12);
        assert_eq!(ddam_rate(&g, &ComplexMatrix::zeros(1, 1), &w).unwrap(), 0.0);
    }

    #[test]
    fn scalar_wiener_filter() {
        let h = C64::new(0.3, -1.1);
        let f = C64::new(0.7, 0.2);
        let g = GroupedChannels::new(ComplexMatrix::from_element(1, 1, h), BTreeMap::new(), 0, 0.4).unwrap();
        let w = mmse_receiver(&g, &ComplexMatrix::from_element(1, 1, f)).unwrap();
        let expected = h * f / ((h * f).norm_sqr() + 0.4);
        assert!((w[(0, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn high_noise_receiver_is_matched_filter() {
        let (_, ch, tb) = setup(8, 3, 2);
        let g = group_delay_differences(&ch, &tb, 1, 1e3).unwrap();
        let f = random(24, 1, &mut trial_rng(1, 1)) * C64::new(1e-6, 0.0);
        let w = mmse_receiver(&g, &f).unwrap();
        let mf = &g.stacked * &f;
        let cos = w.column(0).dotc(&mf.column(0)).norm() / (w.norm() * mf.norm());
        assert!(cos > 1.0 - 1e-9);
    }

    #[test]
    fn mmse_receiver_is_stationary() {
        let (_, ch, tb) = setup(6, 3, 3);
        let mut rng = trial_rng(3, 3);
        let g = group_delay_differences(&ch, &tb, 2, 1e-12).unwrap();
        let f = random(18, 2, &mut rng) * C64::new(0.2, 0.0);
        let w = mmse_receiver(&g, &f).unwrap();
        let base = mse_matrix(&g, &f, &w).trace().re;
        for _ in 0..200 {
            let mut d = random(2, 2, &mut rng);
            d.unscale_mut(d.norm() / 1e-4);
            let t = mse_matrix(&g, &f, &(&w + d)).trace().re;
            assert!(t >= base - 1e-10);
        }
    }

    #[test]
    fn woodbury_identity_and_bound_attained() {
        let (cfg, ch, tb) = setup(6, 3, 4);
        let mut rng = trial_rng(4, 4);
        let g = group_delay_differences(&ch, &tb, 2, cfg.noise_variance()).unwrap();
        let mut f = random(18, 2, &mut rng);
        f.unscale_mut(f.norm());
        let w = mmse_receiver(&g, &f).unwrap();
        let c = interference_covariance(&g, &f);
        let hf = &g.stacked * &f;
        let total = &hf * hf.adjoint() + &c;
        let lhs = ComplexMatrix::identity(2, 2) - hf.adjoint() * crate::linalg::solve_hpd(&total, &hf).unwrap();
        let rhs = inverse_hpd(&(ComplexMatrix::identity(2, 2) + hf.adjoint() * crate::linalg::solve_hpd(&c, &hf).unwrap())).unwrap();
        assert!((&lhs - &rhs).norm() <= 1e-9 * rhs.norm());
        let at_w = ddam_rate(&g, &f, &w).unwrap();
        let bound = rate_with_mmse_receiver(&g, &f).unwrap();
        assert!((at_w - bound).abs() <= 1e-8 * bound);
    }

    #[test]
    fn zf_design_rate_matches_capacity_rate() {
        let (cfg, ch, tb) = setup(8, 3, 5);
        let zf = design_path_zf(&ch, 2, 1.0, cfg.noise_variance()).unwrap();
        let g = group_delay_differences(&ch, &tb, 7, cfg.noise_variance()).unwrap();
        let f = stack_precoders(&zf.design.precoders);
        let r = ddam_rate(&g, &f, &zf.design.combiner).unwrap();
        assert!((r - zf.capacity.rate_bps_hz).abs() <= 1e-8 * zf.capacity.rate_bps_hz);
    }

    #[test]
    fn precoder_update_zero_channel() {
        let g = GroupedChannels::new(ComplexMatrix::zeros(2, 6), BTreeMap::new(), 0, 1.0).unwrap();
        let up = precoder_update(&g, &ComplexMatrix::identity(2, 1), &ComplexMatrix::identity(1, 1), 1.0).unwrap();
        assert_eq!(frobenius_sq(&up.precoder), 0.0);
    }

    #[test]
    fn precoder_update_inactive_and_active_power() {
        let (cfg, ch, tb) = setup(6, 3, 6);
        let mut rng = trial_rng(6, 6);
        let g = group_delay_differences(&ch, &tb, 1, cfg.noise_variance()).unwrap();
        let w = random(2, 2, &mut rng);
        let q = ComplexMatrix::identity(2, 2) * C64::new(1e-9, 0.0);
        // a tiny weight keeps the unconstrained solution far inside a huge budget
        let up = precoder_update(&g, &w, &q, 1e30).unwrap();
        assert_eq!(up.beta, 0.0);
        let up = precoder_update(&g, &w, &ComplexMatrix::identity(2, 2), 1e-3).unwrap();
        assert!(up.beta > 0.0);
        assert!((frobenius_sq(&up.precoder) - 1e-3).abs() <= 1e-8 * 1e-3);
    }

    #[test]
    fn precoder_update_beats_random_feasible_points() {
        let (cfg, ch, tb) = setup(6, 3, 7);
        let mut rng = trial_rng(7, 7);
        let noise = cfg.noise_variance();
        let g = group_delay_differences(&ch, &tb, 1, noise).unwrap();
        let f0 = initial_precoder(18, 2, None, 1.0, &mut rng);
        let w = mmse_receiver(&g, &f0).unwrap();
        let q = inverse_hpd(&mse_matrix(&g, &f0, &w)).unwrap();
        let up = precoder_update(&g, &w, &q, 1.0).unwrap();
        let objective = |f: &ComplexMatrix| (&q * mse_matrix(&g, f, &w)).trace().re;
        let best = objective(&up.precoder);
        for _ in 0..1000 {
            let mut cand = &up.precoder + random(18, 2, &mut rng) * C64::new(1e-3, 0.0);
            let norm = frobenius_sq(&cand);
            if norm > 1.0 {
                cand.unscale_mut(norm.sqrt());
            }
            assert!(objective(&cand) >= best - 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn bcd_trace_is_monotone_and_respects_power() {
        for trial in 0..10 {
            let (cfg, ch, tb) = setup(16, 3, 100 + trial);
            let mut rng = trial_rng(8, trial);
            let g = group_delay_differences(&ch, &tb, 11, cfg.noise_variance()).unwrap();
            let f0 = initial_precoder(48, 2, None, 1.0, &mut rng);
            let st = bcd_solve(&g, &f0, 1.0, &BcdOptions::default()).unwrap();
            assert!(frobenius_sq(&st.precoder) <= 1.0 + 1e-9);
            for w in st.rate_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{:?}", st.rate_trace);
            }
        }
    }

    #[test]
    fn bcd_single_path_matches_zf() {
        let (cfg, ch, tb) = setup(8, 1, 9);
        let noise = cfg.noise_variance();
        let zf = design_path_zf(&ch, 2, 1.0, noise).unwrap();
        let g = group_delay_differences(&ch, &tb, 1, noise).unwrap();
        let f0 = initial_precoder(8, 2, Some(&stack_precoders(&zf.design.precoders)), 1.0, &mut trial_rng(0, 0));
        let st = bcd_solve(&g, &f0, 1.0, &BcdOptions::default()).unwrap();
        assert!((st.rate() - zf.capacity.rate_bps_hz).abs() <= 1e-6 * zf.capacity.rate_bps_hz);
        assert!(st.trace_csv().starts_with("iteration,rate\n0,"));
    }
}
