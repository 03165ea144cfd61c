use std::f64::consts::{LN_2, PI};

use crate::channel::{array_response, ChannelRealization};
use crate::error::{contract, DdamError, Result};
use crate::linalg::{cis, eig_hermitian, ln_det_hpd, svd_reduced, C64, ComplexMatrix, ComplexVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtfsConfig {
    /// Delay bins `M`.
    pub num_delay_bins: usize,
    /// Doppler bins `N`.
    pub num_doppler_bins: usize,
    pub cp_length: usize,
}

impl Default for OtfsConfig {
    fn default() -> Self {
        OtfsConfig { num_delay_bins: 512, num_doppler_bins: 8, cp_length: 40 }
    }
}

impl OtfsConfig {
    pub fn frame_len(&self) -> usize {
        self.num_delay_bins * self.num_doppler_bins
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtfsTaps {
    pub delay: Vec<usize>,
    pub doppler: Vec<i64>,
    /// `nu N M T_s - j`, lost to the integer-tap model.
    pub doppler_residual: Vec<f64>,
}

/// `i_l = m_l`, `j_l = round(nu_l N M T_s)`.
pub fn otfs_taps(realization: &ChannelRealization, config: &OtfsConfig) -> Result<OtfsTaps> {
    let (m, n) = (config.num_delay_bins, config.num_doppler_bins);
    let mut taps = OtfsTaps { delay: Vec::new(), doppler: Vec::new(), doppler_residual: Vec::new() };
    for p in &realization.path_set.paths {
        let x = p.doppler_hz * (m * n) as f64 * realization.symbol_duration_s;
        let j = x.round();
        if p.delay_tap >= m || j.abs() >= n as f64 {
            return Err(contract(format!("path tap ({}, {j}) outside the {m} x {n} grid", p.delay_tap)));
        }
        taps.delay.push(p.delay_tap);
        taps.doppler.push(j as i64);
        taps.doppler_residual.push(x - j);
    }
    Ok(taps)
}

/// `H = sum_l h_l Pi^{i_l} Delta^{j_l}` (dense, `MN x MN`).
pub fn otfs_time_channel(taps: &OtfsTaps, coeffs: &[C64], frame_len: usize) -> ComplexMatrix {
    let q = frame_len;
    let mut h = ComplexMatrix::zeros(q, q);
    for ((&i, &j), &c) in taps.delay.iter().zip(&taps.doppler).zip(coeffs) {
        for col in 0..q {
            let row = (col + i) % q;
            h[(row, col)] += c * cis(2.0 * PI * ((j.rem_euclid(q as i64) as usize * col) % q) as f64 / q as f64);
        }
    }
    h
}

/// Effective scalar path gains `v^H H_l f`.
pub fn beam_coefficients(realization: &ChannelRealization, f: &ComplexVector, v: &ComplexVector) -> Vec<C64> {
    realization.matrices.iter().map(|h| v.dotc(&(h * f))).collect()
}

/// Delay-Doppler channel `(F_N x I_M) H (F_N^H x I_M)`. Dense, meant for
/// small frames.
pub fn otfs_delay_doppler_channel(realization: &ChannelRealization, config: &OtfsConfig, f: &ComplexVector, v: &ComplexVector) -> Result<ComplexMatrix> {
    let taps = otfs_taps(realization, config)?;
    let h = otfs_time_channel(&taps, &beam_coefficients(realization, f, v), config.frame_len());
    let (m, n) = (config.num_delay_bins, config.num_doppler_bins);
    let fn_ = ComplexMatrix::from_fn(n, n, |a, b| cis(-2.0 * PI * ((a * b) % n) as f64 / n as f64) / (n as f64).sqrt());
    let k = fn_.kronecker(&ComplexMatrix::identity(m, m));
    Ok(&k * h * k.adjoint())
}

/// `log2 |I + P̄ H_DD H_DD^H| / (MN + N'_CP)`.
pub fn otfs_rate(h_dd: &ComplexMatrix, snr: f64, cp_length: usize) -> Result<f64> {
    if !h_dd.is_square() {
        return Err(contract("delay-Doppler channel must be square"));
    }
    let q = h_dd.nrows();
    let a = ComplexMatrix::identity(q, q) + h_dd * h_dd.adjoint() * C64::new(snr, 0.0);
    Ok(ln_det_hpd(&crate::linalg::hermitian_part(&a))? / LN_2 / (q + cp_length) as f64)
}

/// Same rate without forming `MN x MN` matrices. In the DFT domain of the
/// whole frame the channel is cyclically banded (Doppler taps become
/// shifts), so `I + P̄ G G^H` is cyclically banded with half-width
/// `j_max - j_min`: a banded Cholesky of the leading block plus a small
/// Schur complement on the trailing indices gives the log-determinant.
pub fn otfs_rate_fast(taps: &OtfsTaps, coeffs: &[C64], snr: f64, config: &OtfsConfig) -> Result<f64> {
    let q = config.frame_len();
    let (Some(&j_min), Some(&j_max)) = (taps.doppler.iter().min(), taps.doppler.iter().max()) else {
        return Ok(0.0);
    };
    let h = (j_max - j_min) as usize;
    if q <= 2 * h + 1 {
        let hm = otfs_time_channel(taps, coeffs, q);
        return otfs_rate(&hm, snr, config.cp_length);
    }
    // g_j[k] = sum_{l: j_l = j} h_l w^{-k i_l}: entry (k, k - j) of G
    let mut diag: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); q]; h + 1];
    for ((&i, &j), &c) in taps.delay.iter().zip(&taps.doppler).zip(coeffs) {
        let row = &mut diag[(j - j_min) as usize];
        for (k, g) in row.iter_mut().enumerate() {
            *g += c * cis(-2.0 * PI * ((k * i) % q) as f64 / q as f64);
        }
    }
    // band[d + h][k] = A[k, k + d] for d in -h..=h
    let mut band = vec![vec![C64::new(0.0, 0.0); q]; 2 * h + 1];
    for (a, ga) in diag.iter().enumerate() {
        for (b, gb) in diag.iter().enumerate() {
            let d = b as i64 - a as i64;
            let slot = &mut band[(d + h as i64) as usize];
            for k in 0..q {
                let kp = (k as i64 + d).rem_euclid(q as i64) as usize;
                slot[k] += ga[k] * gb[kp].conj() * snr;
            }
        }
    }
    for x in &mut band[h] {
        *x += 1.0;
    }
    let entry = |r: usize, c: usize| -> C64 {
        let d = (c + q - r) % q;
        if d <= h {
            band[h + d][r]
        } else if q - d <= h {
            band[h - (q - d)][r]
        } else {
            C64::new(0.0, 0.0)
        }
    };
    let nf = q - h;
    let chol = BandCholesky::factor(nf, h, entry)?;
    let mut ln_det = chol.ln_det();
    if h > 0 {
        let mut schur = ComplexMatrix::from_fn(h, h, |a, b| entry(nf + a, nf + b));
        let cross: Vec<Vec<C64>> = (0..h).map(|s| (0..nf).map(|r| entry(r, nf + s)).collect()).collect();
        let solved: Vec<Vec<C64>> = cross.iter().map(|b| chol.solve(b)).collect();
        for a in 0..h {
            for b in 0..h {
                let dot: C64 = cross[a].iter().zip(&solved[b]).map(|(x, y)| x.conj() * y).sum();
                schur[(a, b)] -= dot;
            }
        }
        ln_det += ln_det_hpd(&crate::linalg::hermitian_part(&schur))?;
    }
    Ok(ln_det / LN_2 / (q + config.cp_length) as f64)
}

/// Lower Cholesky factor of a Hermitian positive-definite band matrix;
/// `l[r][t]` holds entry `(r, r - t)`.
struct BandCholesky {
    width: usize,
    l: Vec<Vec<C64>>,
}

impl BandCholesky {
    fn factor(n: usize, width: usize, a: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let mut l = vec![vec![C64::new(0.0, 0.0); width + 1]; n];
        for r in 0..n {
            for c in r.saturating_sub(width)..=r {
                let mut s = a(r, c);
                for k in r.saturating_sub(width)..c {
                    s -= l[r][r - k] * l[c][c - k].conj();
                }
                if r == c {
                    if !(s.re > 0.0) {
                        return Err(DdamError::Numerical("band matrix is not positive definite".into()));
                    }
                    l[r][0] = C64::new(s.re.sqrt(), 0.0);
                } else {
                    l[r][r - c] = s / l[c][0].re;
                }
            }
        }
        Ok(BandCholesky { width, l })
    }

    fn ln_det(&self) -> f64 {
        2.0 * self.l.iter().map(|row| row[0].re.ln()).sum::<f64>()
    }

    fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.l.len();
        let w = self.width;
        let mut y = b.to_vec();
        for r in 0..n {
            for k in r.saturating_sub(w)..r {
                let t = self.l[r][r - k] * y[k];
                y[r] -= t;
            }
            y[r] /= self.l[r][0].re;
        }
        for r in (0..n).rev() {
            for k in r + 1..(r + w + 1).min(n) {
                let t = self.l[k][k - r].conj() * y[k];
                y[r] -= t;
            }
            y[r] /= self.l[r][0].re;
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct BeamOpt {
    pub f: ComplexVector,
    pub v: ComplexVector,
    /// `||H||_F^2` after initialization and after each round.
    pub gain_trace: Vec<f64>,
}

/// `tr(Psi_l^H Psi_l')`: `MN` for identical taps, zero otherwise.
fn tap_gram(taps: &OtfsTaps, frame_len: usize) -> ComplexMatrix {
    let l = taps.delay.len();
    ComplexMatrix::from_fn(l, l, |a, b| {
        let same = taps.delay[a] == taps.delay[b] && taps.doppler[a] == taps.doppler[b];
        C64::new(if same { frame_len as f64 } else { 0.0 }, 0.0)
    })
}

/// Top eigenvector of `X T X^H`, computed on an orthonormal basis of
/// `range(X)`.
fn top_direction(x: &ComplexMatrix, gram: &ComplexMatrix) -> Result<Option<ComplexVector>> {
    let svd = svd_reduced(x)?;
    if svd.rank() == 0 {
        return Ok(None);
    }
    let basis = svd.u.columns(0, svd.rank()).into_owned();
    let small = basis.adjoint() * x;
    let eig = eig_hermitian(&crate::linalg::hermitian_part(&(&small * gram * small.adjoint())))?;
    let dir = &basis * eig.eigenvectors.column(0);
    Ok(Some(dir.normalize()))
}

fn channel_gain(coeffs: &[C64], gram: &ComplexMatrix) -> f64 {
    let h = ComplexVector::from_column_slice(coeffs);
    (h.adjoint() * gram * &h)[(0, 0)].re
}

/// Alternates `f` and `v` between the top eigenvectors of `Λ` and `Γ`,
/// starting from the strongest path's steering vectors.
pub fn otfs_beam_opt(realization: &ChannelRealization, taps: &OtfsTaps, frame_len: usize, max_iters: usize, tol: f64) -> Result<BeamOpt> {
    let paths = &realization.path_set;
    if paths.is_empty() {
        return Err(contract("at least one path required"));
    }
    let (m_r, m_t) = (realization.num_rx(), realization.num_tx());
    let dom = &paths.paths[paths.strongest()];
    let mut f = array_response(m_t, dom.aod_rad).normalize();
    let mut v = array_response(m_r, dom.aoa_rad).normalize();
    let gram = tap_gram(taps, frame_len);
    let mut gain_trace = vec![channel_gain(&beam_coefficients(realization, &f, &v), &gram)];
    for _ in 0..max_iters {
        let b = ComplexMatrix::from_columns(&realization.matrices.iter().map(|h| h.adjoint() * &v).collect::<Vec<_>>());
        if let Some(d) = top_direction(&b, &gram.transpose())? {
            f = d;
        }
        let c = ComplexMatrix::from_columns(&realization.matrices.iter().map(|h| h * &f).collect::<Vec<_>>());
        if let Some(d) = top_direction(&c, &gram)? {
            v = d;
        }
        let gain = channel_gain(&beam_coefficients(realization, &f, &v), &gram);
        let prev = *gain_trace.last().unwrap();
        gain_trace.push(gain);
        if gain - prev <= tol * prev.abs() {
            break;
        }
    }
    Ok(BeamOpt { f, v, gain_trace })
}

#[derive(Clone, Debug)]
pub struct OtfsOutcome {
    pub taps: OtfsTaps,
    pub beams: BeamOpt,
    pub coeffs: Vec<C64>,
    pub rate_bps_hz: f64,
}

pub fn otfs_design_and_rate(realization: &ChannelRealization, config: &OtfsConfig, total_power: f64, noise_var: f64) -> Result<OtfsOutcome> {
    let taps = otfs_taps(realization, config)?;
    let beams = otfs_beam_opt(realization, &taps, config.frame_len(), 100, 1e-10)?;
    let coeffs = beam_coefficients(realization, &beams.f, &beams.v);
    let rate_bps_hz = otfs_rate_fast(&taps, &coeffs, total_power / noise_var, config)?;
    Ok(OtfsOutcome { taps, beams, coeffs, rate_bps_hz })
}
