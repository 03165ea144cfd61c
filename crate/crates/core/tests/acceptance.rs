//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use ddam_core::asymptotic::{asymptotic_snr, mrt_power_allocation, mrt_snr_upper_bound};
use ddam_core::benchmarks::{ofdm_design_and_rate, otfs_beam_opt, otfs_delay_doppler_channel, otfs_taps, otfs_time_channel, OfdmConfig, OtfsConfig, OtfsTaps};
use ddam_core::channel::{generate_paths, realize_channel, trial_rng};
use ddam_core::config::{coherence_partition, SystemConfig};
use ddam_core::experiments::{fig6_scheme, run_experiment, ExperimentSpec, ExperimentTable, FEASIBILITY_ARRAYS};
use ddam_core::linalg::{cis, ComplexMatrix, ComplexVector, C64};
use ddam_core::metrics::{guard_overhead, GuardScheme};
use ddam_core::mse::{bcd_solve, group_delay_differences, initial_precoder, stack_precoders, BcdOptions};
use ddam_core::zf::{capacity_rate, ddam_receive_analytic, design_path_zf, residual_isi_power, water_filling, zf_feasibility, Verdict};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn spec(name: &str, trials: usize) -> ExperimentSpec {
    ExperimentSpec { name: name.into(), seed: 2024, trials, config: SystemConfig::default() }
}

fn median(t: &ExperimentTable, scheme: &str, x: f64, metric: &str) -> Result<f64, String> {
    t.find(scheme, x, metric).map(|r| r.median).ok_or_else(|| format!("missing row {scheme} at {x}"))
}

fn zf_transformation() -> Outcome {
    let start = Instant::now();
    let cfg = SystemConfig { num_tx_antennas: 6, num_rx_antennas: 2, num_streams: 2, num_paths: 3, ..Default::default() };
    let mut worst_isi = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for trial in 0..100 {
        let mut rng = trial_rng(11, trial);
        let ch = realize_channel(&generate_paths(&cfg, &mut rng).map_err(|e| e.to_string())?, &cfg);
        let zf = design_path_zf(&ch, 2, cfg.tx_power_watts, cfg.noise_variance()).map_err(|e| e.to_string())?;
        let split = residual_isi_power(&zf.design, &ch, 300, &mut rng).map_err(|e| e.to_string())?;
        worst_isi = worst_isi.max(split.ratio());

        let m_max = ch.path_set.m_max();
        let symbols: Vec<ComplexVector> = (0..64).map(|_| ComplexVector::from_fn(2, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))).collect();
        let rx = ddam_receive_analytic(&zf.design, &ch, &symbols, symbols.len() + 2 * m_max).map_err(|e| e.to_string())?;
        let scale: Vec<f64> = zf.capacity.singular_values.iter().zip(&zf.capacity.mode_powers).map(|(s, p)| s * p.sqrt()).collect();
        let w_h = zf.design.combiner.adjoint();
        for (k, s) in symbols.iter().enumerate() {
            let y = &w_h * &rx[k + m_max];
            let want = ComplexVector::from_fn(scale.len(), |i, _| s[i] * scale[i]);
            worst_oracle = worst_oracle.max((y - &want).norm() / want.norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_isi <= 1e-8, format!("ISI ratio {worst_isi:e}"))?;
    check(worst_oracle <= 1e-8, format!("oracle deviation {worst_oracle:e}"))?;
    check(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!("max ISI ratio {worst_isi:.1e}, max oracle deviation {worst_oracle:.1e}, {secs:.2} s"))
}

fn overheads() -> Outcome {
    let cfg = SystemConfig::default();
    let tb = coherence_partition(&cfg);
    let ddam = 100.0 * guard_overhead(GuardScheme::Ddam { max_delay_tap: cfg.max_delay_tap(), samples_per_invariant: tb.samples_per_invariant });
    let ofdm = 100.0 * guard_overhead(GuardScheme::Ofdm { cp_length: cfg.max_delay_tap(), num_subcarriers: 512 });
    check(format!("{ddam:.4}") == "0.0013", format!("DDAM {ddam}%"))?;
    check(format!("{ofdm:.2}") == "7.25", format!("OFDM {ofdm}%"))?;
    Ok(format!("DDAM {ddam:.5}%, OFDM {ofdm:.4}%"))
}

fn mrt_allocation() -> Outcome {
    let objective = |g: &[f64], p: &[f64]| g.iter().zip(p).map(|(g, p)| p.sqrt() * g).sum::<f64>().powi(2);
    // 3-path simplex lattice with 140 steps: 10011 points
    let n = 140usize;
    let mut rng = trial_rng(3, 0);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_snr = 0.0f64;
    for _ in 0..50 {
        let g: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total = 1.0 + 9.0 * rng.random::<f64>();
        let p = mrt_power_allocation(&g, total).map_err(|e| e.to_string())?;
        let best = objective(&g, &p);
        let mut grid_best = 0.0f64;
        for a in 0..=n {
            for b in 0..=n - a {
                let q = [a as f64, b as f64, (n - a - b) as f64].map(|x| total * x / n as f64);
                grid_best = grid_best.max(objective(&g, &q));
            }
        }
        worst_gap = worst_gap.max((grid_best - best) / best);
        let noise = 1e-3;
        let via_alloc = mrt_snr_upper_bound(&g, &p, 16, 2, noise);
        let closed = asymptotic_snr(total, noise, 16, 2, &g);
        worst_snr = worst_snr.max((via_alloc - closed).abs() / closed);
    }
    check(worst_gap <= 1e-4, format!("grid beats allocation by {worst_gap:e}"))?;
    check(worst_snr <= 1e-10, format!("SNR mismatch {worst_snr:e}"))?;
    Ok(format!("grid never beats allocation (worst {worst_gap:.1e}), SNR match {worst_snr:.1e}"))
}

fn bcd() -> Outcome {
    let cfg = SystemConfig { num_tx_antennas: 16, ..Default::default() };
    let tb = coherence_partition(&cfg);
    let noise = cfg.noise_variance();
    let mut worst_drop = 0.0f64;
    let mut worst_iters = 0;
    for trial in 0..100 {
        let mut rng = trial_rng(4, trial);
        let ch = realize_channel(&generate_paths(&cfg, &mut rng).map_err(|e| e.to_string())?, &cfg);
        let g = group_delay_differences(&ch, &tb, 1, noise).map_err(|e| e.to_string())?;
        let f0 = initial_precoder(g.precoder_rows(), 2, None, cfg.tx_power_watts, &mut rng);
        let st = bcd_solve(&g, &f0, cfg.tx_power_watts, &BcdOptions { tol: 1e-3, max_iters: 50 }).map_err(|e| e.to_string())?;
        for w in st.rate_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        check(st.converged, format!("trial {trial} did not converge in 50 iterations"))?;
        worst_iters = worst_iters.max(st.iterations);
    }
    check(worst_drop <= 1e-9, format!("rate dropped by {worst_drop:e}"))?;

    let one = SystemConfig { num_paths: 1, num_tx_antennas: 8, ..Default::default() };
    let ch = realize_channel(&generate_paths(&one, &mut trial_rng(4, 999)).map_err(|e| e.to_string())?, &one);
    let zf = design_path_zf(&ch, 2, one.tx_power_watts, noise).map_err(|e| e.to_string())?;
    let g = group_delay_differences(&ch, &tb, 1, noise).map_err(|e| e.to_string())?;
    let f0 = initial_precoder(8, 2, Some(&stack_precoders(&zf.design.precoders)), one.tx_power_watts, &mut trial_rng(0, 0));
    let st = bcd_solve(&g, &f0, one.tx_power_watts, &BcdOptions::default()).map_err(|e| e.to_string())?;
    let rel = (st.rate() - zf.capacity.rate_bps_hz).abs() / zf.capacity.rate_bps_hz;
    check(rel <= 1e-6, format!("L=1 mismatch {rel:e}"))?;
    Ok(format!("max drop {worst_drop:.1e}, max iterations {worst_iters}, L=1 mismatch {rel:.1e}"))
}

fn water_filling_oracle() -> Outcome {
    let mut rng = trial_rng(5, 0);
    let mut worst = f64::NEG_INFINITY;
    for set in 0..50 {
        let modes = 1 + set % 3;
        let gains: Vec<f64> = (0..modes).map(|_| 10f64.powf(2.0 * rng.random::<f64>() - 1.0)).collect();
        let (total, noise) = (1.0, 0.5);
        let rate = capacity_rate(&gains, &water_filling(&gains, total, noise), noise);
        let steps = 1000usize;
        let mut grid = 0.0f64;
        let mut eval = |p: &[f64]| grid = grid.max(capacity_rate(&gains, p, noise));
        match modes {
            1 => eval(&[total]),
            2 => (0..=steps).for_each(|a| eval(&[a as f64 / 1e3, (steps - a) as f64 / 1e3])),
            _ => {
                for a in 0..=steps {
                    for b in 0..=steps - a {
                        eval(&[a as f64 / 1e3, b as f64 / 1e3, (steps - a - b) as f64 / 1e3]);
                    }
                }
            }
        }
        worst = worst.max(grid - rate);
    }
    check(worst <= 1e-5, format!("grid beats water-filling by {worst:e}"))?;
    Ok(format!("largest grid advantage {worst:.1e} bit"))
}

fn ofdm_zero_doppler() -> Outcome {
    let cfg = SystemConfig { velocity_mps: 0.0, num_tx_antennas: 16, ..Default::default() };
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let ch = realize_channel(&generate_paths(&cfg, &mut trial_rng(6, trial)).map_err(|e| e.to_string())?, &cfg);
        let out = ofdm_design_and_rate(&ch, OfdmConfig::default(), 2, 1.0, cfg.noise_variance()).map_err(|e| e.to_string())?;
        for (d, i) in out.desired_power.iter().zip(&out.ici_power) {
            for (a, b) in d.iter().zip(i) {
                if *a > 0.0 {
                    worst = worst.max(b / a);
                }
            }
        }
    }
    check(worst <= 1e-10, format!("ICI ratio {worst:e}"))?;
    Ok(format!("max ICI/desired {worst:.1e}"))
}

fn otfs_structure() -> Outcome {
    let q = 64;
    let mut worst_unitary = 0.0f64;
    for (i, j) in [(0usize, 0i64), (1, 0), (0, 1), (5, -3), (17, 2)] {
        let t = OtfsTaps { delay: vec![i], doppler: vec![j], doppler_residual: vec![0.0] };
        let psi = otfs_time_channel(&t, &[C64::new(1.0, 0.0)], q);
        worst_unitary = worst_unitary.max((psi.adjoint() * &psi - ComplexMatrix::identity(q, q)).norm());
    }
    check(worst_unitary <= 1e-12, format!("unitarity error {worst_unitary:e}"))?;

    let small = OtfsConfig { num_delay_bins: 16, num_doppler_bins: 4, cp_length: 3 };
    let cfg = SystemConfig { num_tx_antennas: 8, max_delay_s: 1e-7, ..Default::default() };
    let mut worst_norm = 0.0f64;
    for trial in 0..10 {
        let mut rng = trial_rng(7, trial);
        let ch = realize_channel(&generate_paths(&cfg, &mut rng).map_err(|e| e.to_string())?, &cfg);
        let f = ComplexVector::from_fn(8, |_, _| cis(rng.random::<f64>() * 6.3)).normalize();
        let v = ComplexVector::from_fn(2, |_, _| cis(rng.random::<f64>() * 6.3)).normalize();
        let h_dd = otfs_delay_doppler_channel(&ch, &small, &f, &v).map_err(|e| e.to_string())?;
        let taps = otfs_taps(&ch, &small).map_err(|e| e.to_string())?;
        let coeffs: Vec<C64> = ch.matrices.iter().map(|h| v.dotc(&(h * &f))).collect();
        let h = otfs_time_channel(&taps, &coeffs, small.frame_len());
        worst_norm = worst_norm.max((h_dd.norm() - h.norm()).abs() / h.norm());
    }
    check(worst_norm <= 1e-9, format!("Frobenius mismatch {worst_norm:e}"))?;

    let oc = OtfsConfig::default();
    let big = SystemConfig { num_tx_antennas: 32, num_rx_antennas: 4, ..Default::default() };
    for trial in 0..20 {
        let ch = realize_channel(&generate_paths(&big, &mut trial_rng(8, trial)).map_err(|e| e.to_string())?, &big);
        let b = otfs_beam_opt(&ch, &otfs_taps(&ch, &oc).map_err(|e| e.to_string())?, oc.frame_len(), 50, 1e-12).map_err(|e| e.to_string())?;
        check(b.gain_trace.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), format!("beam gain decreased in trial {trial}"))?;
    }

    let one = SystemConfig { num_tx_antennas: 16, num_paths: 1, ..Default::default() };
    let ch = realize_channel(&generate_paths(&one, &mut trial_rng(8, 100)).map_err(|e| e.to_string())?, &one);
    let b = otfs_beam_opt(&ch, &otfs_taps(&ch, &oc).map_err(|e| e.to_string())?, oc.frame_len(), 10, 1e-12).map_err(|e| e.to_string())?;
    let opt = oc.frame_len() as f64 * ch.path_set.paths[0].gain.norm_sqr() * 32.0;
    let rel = (b.gain_trace.last().unwrap() - opt).abs() / opt;
    check(rel <= 1e-8, format!("L=1 gain off by {rel:e}"))?;
    Ok(format!("unitarity {worst_unitary:.1e}, norm {worst_norm:.1e}, L=1 gap {rel:.1e}"))
}

fn figure_trends() -> Outcome {
    let start = Instant::now();
    let fig4 = run_experiment(&spec("fig4-se-vs-mt", 100)).map_err(|e| e.to_string())?;
    let fig5 = run_experiment(&spec("fig5-se-ddam-ofdm-otfs", 100)).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for m_t in [16.0, 32.0, 64.0] {
        let m = |t: &ExperimentTable, s: &str| median(t, s, m_t, "se_bps_hz");
        let (zf, mse, ofdm, sp) = (m(&fig4, "ddam-zf")?, m(&fig4, "ddam-mse")?, m(&fig4, "ofdm")?, m(&fig4, "strongest-path")?);
        check((zf - mse).abs() <= 0.05 * zf.max(mse), format!("M_t={m_t}: ZF {zf:.2} vs MSE {mse:.2}"))?;
        check(zf.min(mse) > ofdm && ofdm > sp, format!("M_t={m_t}: DDAM {zf:.2}/{mse:.2}, OFDM {ofdm:.2}, strongest {sp:.2}"))?;
        let (d, otfs, o) = (m(&fig5, "ddam-zf")?, m(&fig5, "otfs")?, m(&fig5, "ofdm")?);
        check(d > otfs && otfs > o, format!("500 km/h, M_t={m_t}: DDAM {d:.2}, OTFS {otfs:.2}, OFDM {o:.2}"))?;
        notes.push(format!("M_t={m_t}: {zf:.1}/{mse:.1}>{ofdm:.1}>{sp:.1}; {d:.1}>{otfs:.1}>{o:.1}"));
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 600.0, format!("took {secs:.0} s"))?;
    Ok(format!("{} ({secs:.0} s)", notes.join("; ")))
}

fn ber_ordering() -> Outcome {
    let t = run_experiment(&spec("fig6-ber", 101)).map_err(|e| e.to_string())?;
    let m = |s: &str| median(&t, &fig6_scheme(s, 180.0), 30.0, "log10_ber");
    let (ddam, cfo, ofdm) = (m("ddam-zf")?, m("ofdm-cfo")?, m("ofdm")?);
    check(ddam < cfo && cfo < ofdm, format!("log10 BER DDAM {ddam:.1}, CFO-OFDM {cfo:.1}, OFDM {ofdm:.1}"))?;
    Ok(format!("median log10 BER: DDAM {ddam:.1} < CFO-OFDM {cfo:.1} < OFDM {ofdm:.1}"))
}

fn crossing(t: &ExperimentTable, scheme: &str, level: f64) -> Result<f64, String> {
    let rows: Vec<(f64, f64)> = t.rows.iter().filter(|r| r.scheme == scheme && r.metric == "ccdf").map(|r| (r.param_value, r.mean)).collect();
    let k = rows.iter().position(|&(_, c)| c <= level).ok_or_else(|| format!("{scheme} never drops to {level}"))?;
    if k == 0 {
        return Ok(rows[0].0);
    }
    let ((t0, c0), (t1, c1)) = (rows[k - 1], rows[k]);
    Ok(t0 + (t1 - t0) * (c0 - level) / (c0 - c1))
}

fn papr() -> Outcome {
    let t = run_experiment(&spec("fig8-papr", 500)).map_err(|e| e.to_string())?;
    let ddam = crossing(&t, "ddam-l3", 1e-2)?;
    let ofdm = crossing(&t, "ofdm", 1e-2)?;
    check(ofdm - ddam >= 3.0, format!("DDAM {ddam:.2} dB, OFDM {ofdm:.2} dB"))?;
    Ok(format!("CCDF 1e-2 at DDAM {ddam:.2} dB, OFDM {ofdm:.2} dB, gap {:.2} dB", ofdm - ddam))
}

fn feasibility_map() -> Outcome {
    let mut undetermined_42 = 0;
    for (m_r, n_s) in FEASIBILITY_ARRAYS {
        for l in 1..=8 {
            for m_t in 1..=32 {
                let v = zf_feasibility(m_t, m_r, n_s, l).verdict;
                if n_s == m_r {
                    let want = if m_t >= l * n_s { Verdict::Feasible } else { Verdict::Infeasible };
                    check(v == want, format!("({m_r},{n_s}) L={l} M_t={m_t}: {v:?}"))?;
                } else if v == Verdict::Undetermined {
                    undetermined_42 += 1;
                }
            }
        }
    }
    check(undetermined_42 > 0, "no undetermined cells for (4,2)")?;
    Ok(format!("square arrays split at M_t = L N_s; (4,2) has {undetermined_42} undetermined cells"))
}

fn main() -> ExitCode {
    // the test harness passes flags such as --list; nothing to enumerate
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 11] = [
        ("zf-transformation", zf_transformation),
        ("guard-overheads", overheads),
        ("mrt-allocation", mrt_allocation),
        ("bcd-convergence", bcd),
        ("water-filling", water_filling_oracle),
        ("ofdm-zero-doppler", ofdm_zero_doppler),
        ("otfs-structure", otfs_structure),
        ("spectral-efficiency-trends", figure_trends),
        ("ber-ordering", ber_ordering),
        ("papr-gap", papr),
        ("feasibility-map", feasibility_map),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
