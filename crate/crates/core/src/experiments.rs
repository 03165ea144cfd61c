//! Monte-Carlo experiment registry and runner. Every trial draws its own
//! seeded channel, trials run on the rayon pool, and results are gathered
//! in trial order so a (seed, spec) pair always yields the same table.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{cfo_compensated, ofdm_design, ofdm_design_and_rate, ofdm_tx_frame, otfs_design_and_rate, strongest_path_design, OfdmConfig, OtfsConfig};
use crate::channel::{generate_paths, realize_channel, trial_rng, PathSet};
use crate::config::{coherence_partition, dbm_to_watts, kmh_to_mps, SystemConfig, Timebase};
use crate::error::{DdamError, Result};
use crate::metrics::{guard_overhead, mismatched_rate, ofdm_ber, ofdm_log10_ber, papr_db, perturb_csi, qam_awgn_ber, qam_awgn_log10_ber, qam_constellation, random_qam_symbols, CsiError, GuardScheme};
use crate::mse::{bcd_solve, group_delay_differences, initial_precoder, mse_rate_over_blocks, BcdOptions};
use crate::zf::{build_ddam_tx, design_path_zf, zf_feasibility, Verdict};

/// Registered experiments and a one-line description of each.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("fig3-convergence", "rate per iteration of the MSE-based descent from a random start, M_t = 64"),
    ("fig4-se-vs-mt", "spectral efficiency of DDAM-ZF, DDAM-MSE, OFDM and strongest-path versus M_t"),
    ("fig5-se-ddam-ofdm-otfs", "spectral efficiency of DDAM, OTFS and OFDM versus M_t at 500 km/h"),
    ("fig6-ber", "128-QAM BER of DDAM-ZF, OFDM and CFO-compensated OFDM versus power, M_t = 256, one stream"),
    ("fig8-papr", "per-antenna PAPR CCDF of DDAM (L = 3, 5) and OFDM, M_t = 128, 128-QAM, one stream"),
    ("fig9-imperfect-csi", "DDAM spectral efficiency versus M_t under delay and Doppler estimation errors"),
    ("feasibility-map", "ZF feasibility verdict over M_t, L and (M_r, N_s)"),
];

pub const FIG4_TX_ANTENNAS: [usize; 4] = [16, 32, 64, 128];
pub const FIG6_POWERS_DBM: [f64; 5] = [-10.0, 0.0, 10.0, 20.0, 30.0];
pub const FIG6_VELOCITIES_KMH: [f64; 2] = [36.0, 180.0];
pub const FIG9_ERRORS: [(f64, f64); 4] = [(1.0, 0.0), (1.0, 0.05), (2.0 / 3.0, 0.0), (2.0 / 3.0, 0.05)];
/// Coherence blocks averaged per path-invariant block for MSE designs.
pub const MSE_BLOCKS: usize = 4;
const FIG3_ITERATIONS: usize = 40;
const DDAM_FRAME_SYMBOLS: usize = 512;
const QAM_ORDER: usize = 128;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub config: SystemConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub param_name: String,
    pub param_value: f64,
    pub metric: String,
    pub seed: u64,
    /// Number of trials that contributed a value.
    pub trials: usize,
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub experiment: String,
    pub config: SystemConfig,
    pub seed: u64,
    pub requested_trials: usize,
    /// Trials that returned an error; they contribute no values.
    pub failures: usize,
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: &str = "scheme,param_name,param_value,metric,seed,trials,mean,median,p10,p90";

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scheme, r.param_name, r.param_value, r.metric, r.seed, r.trials, r.mean, r.median, r.p10, r.p90
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows matching a scheme, parameter value and metric.
    pub fn find(&self, scheme: &str, param_value: f64, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.param_value == param_value && r.metric == metric)
    }
}

/// One value produced by one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub scheme: String,
    pub param_name: &'static str,
    pub param_value: f64,
    pub metric: String,
    pub value: f64,
}

fn sample(scheme: impl Into<String>, param_name: &'static str, param_value: f64, metric: impl Into<String>, value: f64) -> Sample {
    Sample { scheme: scheme.into(), param_name, param_value, metric: metric.into(), value }
}

/// Mean, median, 10th and 90th percentile (linear interpolation).
pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (v.iter().sum::<f64>() / v.len() as f64, q(0.5), q(0.1), q(0.9))
}

pub fn list_experiments() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|(n, _)| *n).collect()
}

type TrialFn = fn(&SystemConfig, u64, u64) -> Result<Vec<Sample>>;

fn trial_fn(name: &str) -> Option<TrialFn> {
    Some(match name {
        "fig3-convergence" => fig3_trial,
        "fig4-se-vs-mt" => fig4_trial,
        "fig5-se-ddam-ofdm-otfs" => fig5_trial,
        "fig6-ber" => fig6_trial,
        "fig8-papr" => fig8_trial,
        "fig9-imperfect-csi" => fig9_trial,
        _ => return None,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    spec.config.validate()?;
    if spec.name == "feasibility-map" {
        return Ok(feasibility_table(spec));
    }
    let f = trial_fn(&spec.name).ok_or_else(|| DdamError::UnknownExperiment(spec.name.clone()))?;
    if spec.trials == 0 {
        return Err(DdamError::Config("at least one trial required".into()));
    }
    let outcomes: Vec<Result<Vec<Sample>>> = (0..spec.trials as u64).into_par_iter().map(|t| f(&spec.config, spec.seed, t)).collect();
    Ok(aggregate(spec, outcomes))
}

fn aggregate(spec: &ExperimentSpec, outcomes: Vec<Result<Vec<Sample>>>) -> ExperimentTable {
    let mut order: Vec<(String, &'static str, f64, String)> = Vec::new();
    let mut index: HashMap<(String, u64, String), usize> = HashMap::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut failures = 0;
    for outcome in outcomes {
        let Ok(samples) = outcome else {
            failures += 1;
            continue;
        };
        for s in samples {
            let key = (s.scheme.clone(), s.param_value.to_bits(), s.metric.clone());
            let idx = *index.entry(key).or_insert_with(|| {
                order.push((s.scheme.clone(), s.param_name, s.param_value, s.metric.clone()));
                values.push(Vec::new());
                values.len() - 1
            });
            if s.value.is_finite() {
                values[idx].push(s.value);
            }
        }
    }
    let rows = order
        .into_iter()
        .zip(values)
        .filter(|(_, v)| !v.is_empty())
        .map(|((scheme, param_name, param_value, metric), v)| {
            let (mean, median, p10, p90) = summarize(&v);
            ResultRow { scheme, param_name: param_name.into(), param_value, metric, seed: spec.seed, trials: v.len(), mean, median, p10, p90 }
        })
        .collect();
    ExperimentTable { experiment: spec.name.clone(), config: spec.config.clone(), seed: spec.seed, requested_trials: spec.trials, failures, rows }
}

fn draw_paths(config: &SystemConfig, seed: u64, trial: u64) -> Result<(PathSet, ChaCha8Rng)> {
    let mut rng = trial_rng(seed, trial);
    let paths = generate_paths(config, &mut rng)?;
    Ok((paths, rng))
}

/// Share of samples left after the single guard interval per
/// path-invariant block.
pub fn ddam_guard_factor(config: &SystemConfig, timebase: &Timebase) -> f64 {
    1.0 - guard_overhead(GuardScheme::Ddam { max_delay_tap: config.max_delay_tap(), samples_per_invariant: timebase.samples_per_invariant })
}

fn ofdm_config(config: &SystemConfig) -> OfdmConfig {
    OfdmConfig { num_subcarriers: 512, cp_length: config.max_delay_tap() }
}

fn otfs_config(config: &SystemConfig) -> OtfsConfig {
    OtfsConfig { num_delay_bins: 512, num_doppler_bins: 8, cp_length: config.max_delay_tap() }
}

fn fig3_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let config = base.with_tx_antennas(64);
    let (paths, mut rng) = draw_paths(&config, seed, trial)?;
    let ch = realize_channel(&paths, &config);
    let tb = coherence_partition(&config);
    let noise = config.noise_variance();
    let grouped = group_delay_differences(&ch, &tb, 1, noise)?;
    let f0 = initial_precoder(grouped.precoder_rows(), config.num_streams, None, config.tx_power_watts, &mut rng);
    let state = bcd_solve(&grouped, &f0, config.tx_power_watts, &BcdOptions::default())?;
    let last = state.rate();
    Ok((0..=FIG3_ITERATIONS)
        .map(|k| sample("ddam-mse", "iteration", k as f64, "se_bps_hz", *state.rate_trace.get(k).unwrap_or(&last)))
        .collect())
}

fn fig4_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let (paths, mut rng) = draw_paths(base, seed, trial)?;
    let tb = coherence_partition(base);
    let guard = ddam_guard_factor(base, &tb);
    let (p, noise, n_s) = (base.tx_power_watts, base.noise_variance(), base.num_streams);
    let mut out = Vec::new();
    for m_t in FIG4_TX_ANTENNAS {
        let config = base.with_tx_antennas(m_t);
        let ch = realize_channel(&paths, &config);
        let x = m_t as f64;
        let zf = design_path_zf(&ch, n_s, p, noise)?;
        out.push(sample("ddam-zf", "m_t", x, "se_bps_hz", guard * zf.capacity.rate_bps_hz));
        let mse = mse_rate_over_blocks(&ch, &tb, MSE_BLOCKS, n_s, p, noise, &BcdOptions::default(), &mut rng)?;
        out.push(sample("ddam-mse", "m_t", x, "se_bps_hz", guard * mse));
        let ofdm = ofdm_design_and_rate(&ch, ofdm_config(&config), n_s, p, noise)?;
        out.push(sample("ofdm", "m_t", x, "se_bps_hz", ofdm.rate_bps_hz));
        let sp = strongest_path_design(&ch, p, noise)?;
        out.push(sample("strongest-path", "m_t", x, "se_bps_hz", sp.rate_bps_hz()));
    }
    Ok(out)
}

/// Configuration for the high-mobility comparison.
pub fn fig5_config(base: &SystemConfig) -> SystemConfig {
    SystemConfig { velocity_mps: kmh_to_mps(500.0), ..base.clone() }
}

fn fig5_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let base = fig5_config(base);
    let (paths, mut rng) = draw_paths(&base, seed, trial)?;
    let tb = coherence_partition(&base);
    let guard = ddam_guard_factor(&base, &tb);
    let (p, noise, n_s) = (base.tx_power_watts, base.noise_variance(), base.num_streams);
    let mut out = Vec::new();
    for m_t in FIG4_TX_ANTENNAS {
        let config = base.with_tx_antennas(m_t);
        let ch = realize_channel(&paths, &config);
        let x = m_t as f64;
        let zf = design_path_zf(&ch, n_s, p, noise)?;
        out.push(sample("ddam-zf", "m_t", x, "se_bps_hz", guard * zf.capacity.rate_bps_hz));
        let mse = mse_rate_over_blocks(&ch, &tb, MSE_BLOCKS, n_s, p, noise, &BcdOptions::default(), &mut rng)?;
        out.push(sample("ddam-mse", "m_t", x, "se_bps_hz", guard * mse));
        let otfs = otfs_design_and_rate(&ch, &otfs_config(&config), p, noise)?;
        out.push(sample("otfs", "m_t", x, "se_bps_hz", otfs.rate_bps_hz));
        let ofdm = ofdm_design_and_rate(&ch, ofdm_config(&config), n_s, p, noise)?;
        out.push(sample("ofdm", "m_t", x, "se_bps_hz", ofdm.rate_bps_hz));
    }
    Ok(out)
}

/// Scheme label carrying the velocity, e.g. `ofdm-cfo-v180`.
pub fn fig6_scheme(scheme: &str, kmh: f64) -> String {
    format!("{scheme}-v{kmh}")
}

fn fig6_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for kmh in FIG6_VELOCITIES_KMH {
        let config = SystemConfig { num_tx_antennas: 256, num_streams: 1, velocity_mps: kmh_to_mps(kmh), ..base.clone() };
        let (paths, _) = draw_paths(&config, seed, trial)?;
        let ch = realize_channel(&paths, &config);
        let noise = config.noise_variance();
        let oc = ofdm_config(&config);
        // designs at 1 W; SNRs scale with the power below
        let zf = design_path_zf(&ch, 1, 1.0, noise)?;
        let gain = zf.capacity.singular_values.first().copied().unwrap_or(0.0).powi(2);
        let plain = ofdm_design_and_rate(&ch, oc, 1, 1.0, noise)?;
        let cfo = ofdm_design_and_rate(&cfo_compensated(&ch), oc, 1, 1.0, noise)?;
        for dbm in FIG6_POWERS_DBM {
            let p = dbm_to_watts(dbm);
            let snr = p * gain / noise;
            let scheme = fig6_scheme("ddam-zf", kmh);
            out.push(sample(&scheme, "tx_power_dbm", dbm, "ber", qam_awgn_ber(snr, QAM_ORDER)?));
            out.push(sample(&scheme, "tx_power_dbm", dbm, "log10_ber", qam_awgn_log10_ber(snr, QAM_ORDER)?));
            for (name, o) in [("ofdm", &plain), ("ofdm-cfo", &cfo)] {
                let sinr = o.first_stream_sinr_scaled(p, noise);
                let scheme = fig6_scheme(name, kmh);
                out.push(sample(&scheme, "tx_power_dbm", dbm, "ber", ofdm_ber(&sinr, oc.num_subcarriers, oc.cp_length, QAM_ORDER)?));
                out.push(sample(&scheme, "tx_power_dbm", dbm, "log10_ber", ofdm_log10_ber(&sinr, oc.num_subcarriers, oc.cp_length, QAM_ORDER)?));
            }
        }
    }
    Ok(out)
}

/// PAPR thresholds of the CCDF grid, 0 to 16 dB.
pub fn papr_thresholds() -> Vec<f64> {
    (0..=64).map(|k| k as f64 * 0.25).collect()
}

fn ccdf_samples(scheme: &str, paprs: &[Option<f64>]) -> Vec<Sample> {
    let vals: Vec<f64> = paprs.iter().flatten().copied().collect();
    papr_thresholds()
        .into_iter()
        .map(|t| sample(scheme, "papr_db", t, "ccdf", vals.iter().filter(|&&v| v > t).count() as f64 / vals.len().max(1) as f64))
        .collect()
}

fn fig8_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let constellation = qam_constellation(QAM_ORDER)?;
    let mut out = Vec::new();
    for l in [3usize, 5] {
        let config = SystemConfig { num_tx_antennas: 128, num_streams: 1, num_paths: l, ..base.clone() };
        let (paths, mut rng) = draw_paths(&config, seed, trial)?;
        let ch = realize_channel(&paths, &config);
        let zf = design_path_zf(&ch, config.num_streams, config.tx_power_watts, config.noise_variance())?;
        let n_s = zf.design.num_streams();
        // streaming signal: skip the ramp at both ends so every copy overlaps
        let k_max = zf.design.delay_comp.iter().copied().max().unwrap_or(0);
        let symbols = random_qam_symbols(&constellation, n_s, DDAM_FRAME_SYMBOLS + k_max, &mut rng);
        let frame = build_ddam_tx(&zf.design, &symbols, ch.symbol_duration_s)?;
        out.extend(ccdf_samples(&format!("ddam-l{l}"), &papr_db(&frame[k_max..k_max + DDAM_FRAME_SYMBOLS])));
        if l == 3 {
            let design = ofdm_design(&ch, ofdm_config(&config), config.num_streams, config.tx_power_watts)?;
            let data = random_qam_symbols(&constellation, config.num_streams, design.config.num_subcarriers, &mut rng);
            let frame = ofdm_tx_frame(&design, &data)?;
            out.extend(ccdf_samples("ofdm", &papr_db(&frame)));
        }
    }
    Ok(out)
}

/// Scheme label for a CSI error setting, e.g. `ddam-eta0.67-xi0.05`.
pub fn fig9_scheme(err: &CsiError) -> String {
    format!("ddam-eta{:.2}-xi{:.2}", err.delay_accuracy, err.doppler_error_coeff)
}

fn fig9_trial(base: &SystemConfig, seed: u64, trial: u64) -> Result<Vec<Sample>> {
    let (paths, mut rng) = draw_paths(base, seed, trial)?;
    let tb = coherence_partition(base);
    let guard = ddam_guard_factor(base, &tb);
    let (p, noise, n_s) = (base.tx_power_watts, base.noise_variance(), base.num_streams);
    let mut out = Vec::new();
    for (eta, xi) in FIG9_ERRORS {
        let err = CsiError { delay_accuracy: eta, doppler_error_coeff: xi };
        let est = perturb_csi(&paths, &err, base.max_doppler_hz(), base.max_delay_tap(), &mut rng)?;
        for m_t in FIG4_TX_ANTENNAS {
            let config = base.with_tx_antennas(m_t);
            let truth = realize_channel(&paths, &config);
            let est_ch = realize_channel(&est.paths, &config);
            let zf = design_path_zf(&est_ch, n_s, p, noise)?;
            let rate = mismatched_rate(&truth, &est.paths, &zf.design, &tb, MSE_BLOCKS, noise)?;
            out.push(sample(fig9_scheme(&err), "m_t", m_t as f64, "se_bps_hz", guard * rate));
        }
    }
    Ok(out)
}

/// Verdict code: 1 feasible, 0 undetermined, -1 infeasible.
pub fn verdict_code(v: Verdict) -> f64 {
    match v {
        Verdict::Feasible => 1.0,
        Verdict::Undetermined => 0.0,
        Verdict::Infeasible => -1.0,
    }
}

pub const FEASIBILITY_ARRAYS: [(usize, usize); 4] = [(1, 1), (2, 2), (4, 4), (4, 2)];

fn feasibility_table(spec: &ExperimentSpec) -> ExperimentTable {
    let mut samples = Vec::new();
    for (m_r, n_s) in FEASIBILITY_ARRAYS {
        for l in 1..=8 {
            for m_t in 1..=32 {
                let v = zf_feasibility(m_t, m_r, n_s, l).verdict;
                samples.push(sample(format!("mr{m_r}-ns{n_s}-l{l}"), "m_t", m_t as f64, "verdict", verdict_code(v)));
            }
        }
    }
    let single = ExperimentSpec { trials: 1, ..spec.clone() };
    aggregate(&single, vec![Ok(samples)])
}
