mod common;

use cellfree::maxmin::{fronthaul_rate, MaxMinProblem, SolverSettings};
use cellfree::sim::{aggregate_cdf, config_from_manifest, emit_results, run_trial, run_trials, OutputFormat};
use cellfree::{Mode, QuantizationModel, Resolution, SystemConfig};
use common::{desk_instance, power_oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_run() -> SystemConfig {
    SystemConfig {
        trials: 6,
        seed: 17,
        ..SystemConfig::default()
    }
}

#[test]
fn fronthaul_rate_grows_with_power() {
    let config = SystemConfig { seed: 21, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..20 {
        let inst = desk_instance(&config, i).unwrap();
        for _ in 0..10 {
            let eta: Vec<f64> = (0..config.k).map(|_| rng.random::<f64>()).collect();
            let more: Vec<f64> = eta.iter().map(|e| e + rng.random::<f64>()).collect();
            let s = 0.01 + rng.random::<f64>();
            for m in 0..config.m {
                let low = fronthaul_rate(&eta, s, m, &inst.precoders).unwrap();
                let high = fronthaul_rate(&more, s, m, &inst.precoders).unwrap();
                assert!(low <= high + 1e-12, "bs {m}: {low} > {high}");
            }
        }
    }
}

#[test]
fn responses_to_compression_noise_are_monotone() {
    let config = SystemConfig { seed: 22, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let quant = QuantizationModel::new(Resolution::Bits(3)).unwrap();
    for i in 0..20 {
        let inst = desk_instance(&config, i).unwrap();
        let problem = MaxMinProblem::new(&inst.effective, &inst.precoders, &inst.rf, &quant, config.p, 32.0);
        let eta: Vec<f64> = (0..config.k).map(|_| 1e-3 * rng.random::<f64>()).collect();
        let sigma: Vec<f64> = (0..config.m).map(|_| 1e-6 * rng.random::<f64>()).collect();
        let m = rng.random_range(0..config.m);
        let mut bumped = sigma.clone();
        bumped[m] *= 1.5;

        let before = problem.sqnr_all(&eta, &sigma);
        let after = problem.sqnr_all(&eta, &bumped);
        assert!(before.iter().zip(&after).all(|(b, a)| a <= b));
        assert!(problem.bs_power(&eta, bumped[m], m) >= problem.bs_power(&eta, sigma[m], m));
        assert!(problem.fronthaul_rate(&eta, bumped[m], m).unwrap() <= problem.fronthaul_rate(&eta, sigma[m], m).unwrap());
    }
}

#[test]
fn power_evaluator_matches_entrywise_sum() {
    let config = SystemConfig { seed: 23, ..Default::default() };
    let quant = QuantizationModel::new(Resolution::Bits(2)).unwrap();
    let inst = desk_instance(&config, 0).unwrap();
    let problem = MaxMinProblem::new(&inst.effective, &inst.precoders, &inst.rf, &quant, config.p, 32.0);
    let eta: Vec<f64> = (0..config.k).map(|i| 1e-3 * (i + 1) as f64).collect();
    for m in 0..config.m {
        let expected = power_oracle(&inst.rf.bs_precoders[m], &inst.precoders.blocks[m], &eta, 2e-4, quant.rho);
        let got = problem.bs_power(&eta, 2e-4, m);
        assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
    }
}

#[test]
fn bisection_bracket_is_monotone() {
    let config = SystemConfig { seed: 24, ..Default::default() };
    let quant = QuantizationModel::new(Resolution::Bits(4)).unwrap();
    let settings = SolverSettings::default();
    for i in 0..10 {
        let inst = desk_instance(&config, i).unwrap();
        let problem = MaxMinProblem::new(&inst.effective, &inst.precoders, &inst.rf, &quant, config.p, 16.0);
        let sigma = vec![1e-7; config.m];
        let (_, t_star) = problem.bisection_eta(&sigma, &settings).unwrap();
        for j in 1..20 {
            let below = t_star * j as f64 / 20.0;
            assert!(problem.solve_eta_for_target(below, &sigma).is_ok(), "t = {below} < t* = {t_star}");
            let above = t_star + settings.bisection_tol * t_star.max(1.0) * (1.0 + j as f64);
            assert!(problem.solve_eta_for_target(above, &sigma).is_err(), "t = {above} > t* = {t_star}");
        }
    }
}

#[test]
fn rates_do_not_fall_with_better_hardware_or_fronthaul() {
    let base = SystemConfig { seed: 25, ..Default::default() };
    let slack = 1e-5;
    for trial in 0..5 {
        let mut previous: Option<Vec<f64>> = None;
        for b in [1, 2, 3, 4, 6, 8] {
            let rates = run_trial(&SystemConfig { b: Resolution::Bits(b), c: 32.0, ..base.clone() }, trial).unwrap().rates;
            if let Some(prev) = &previous {
                assert!(rates.iter().zip(prev).all(|(r, p)| *r >= p - slack), "B = {b}: {rates:?} < {prev:?}");
            }
            previous = Some(rates);
        }
        let mut previous: Option<Vec<f64>> = None;
        for c in [1.0, 4.0, 16.0, 64.0, 256.0, f64::INFINITY] {
            let rates = run_trial(&SystemConfig { c, ..base.clone() }, trial).unwrap().rates;
            if let Some(prev) = &previous {
                assert!(rates.iter().zip(prev).all(|(r, p)| *r >= p - slack), "C = {c}: {rates:?} < {prev:?}");
            }
            previous = Some(rates);
        }
    }
}

#[test]
fn single_user_ideal_system_closed_form() {
    let config = SystemConfig {
        m: 1,
        k: 1,
        b: Resolution::Infinite,
        c: f64::INFINITY,
        seed: 26,
        ..Default::default()
    };
    for trial in 0..5 {
        let metrics = run_trial(&config, trial).unwrap();
        let inst = desk_instance(&config, trial).unwrap();
        let eta_max = config.p / power_oracle(&inst.rf.bs_precoders[0], &inst.precoders.blocks[0], &[1.0], 0.0, 0.0);
        let expected = (1.0 + eta_max / inst.effective.awgn_var).log2();
        let got = metrics.rates[0];
        assert!((got - expected).abs() <= 1e-5, "{got} vs {expected}");
        assert!(got <= expected + 1e-12);
    }
}

#[test]
fn small_cells_ignore_fronthaul() {
    let narrow = SystemConfig {
        mode: Mode::SmallcellZf,
        c: 2.0,
        ..small_run()
    };
    let wide = SystemConfig {
        c: f64::INFINITY,
        ..narrow.clone()
    };
    let a = run_trials(&narrow).unwrap();
    let b = run_trials(&wide).unwrap();
    assert_eq!(a.pooled_rates(), b.pooled_rates());
    for m in &a.metrics {
        assert!(m.fronthaul_used.iter().all(|&c| c == 0.0));
        assert!(m.bs_power.iter().all(|&p| (p - narrow.p).abs() <= 1e-9 * narrow.p));
    }
}

#[test]
fn every_mode_runs() {
    for mode in [Mode::Cellfree, Mode::SmallcellMrt, Mode::SmallcellZf, Mode::SmallcellRzf] {
        let report = run_trials(&SystemConfig { mode, ..small_run() }).unwrap();
        assert_eq!(report.metrics.len() + report.flagged.len(), 6);
        assert!(report.pooled_rates().iter().all(|&r| r >= 0.0 && r.is_finite()), "{mode}");
    }
}

#[test]
fn cellfree_metrics_respect_limits() {
    let config = SystemConfig { c: 8.0, ..small_run() };
    let report = run_trials(&config).unwrap();
    for m in &report.metrics {
        assert!(m.fronthaul_used.iter().all(|&c| c <= config.c + 1e-6));
        assert!(m.bs_power.iter().all(|&p| p <= config.p * (1.0 + 1e-6)));
        assert!(!m.solver_trace.is_empty());
        let alloc = m.allocation.as_ref().unwrap();
        let floor = m.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((floor - (1.0 + alloc.target).log2()).abs() < 1e-9);
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run_trials(&small_run()).unwrap();
    let b = run_trials(&small_run()).unwrap();
    assert_eq!(a, b);
    let single = run_trial(&small_run(), 3).unwrap();
    assert_eq!(single, a.metrics[3]);
}

#[test]
fn pooled_cdf_covers_every_rate() {
    let report = run_trials(&small_run()).unwrap();
    let cdf = aggregate_cdf(&report.pooled_rates()).unwrap();
    assert_eq!(cdf.len(), report.config.k * report.metrics.len());
    assert_eq!(cdf.last().unwrap().1, 1.0);
    assert!(cdf.windows(2).all(|p| p[0].0 <= p[1].0 && p[0].1 <= p[1].1));
}

#[test]
fn emitted_files_are_reproducible() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let report = run_trials(&small_run()).unwrap();
    emit_results(&report, dir_a.path(), OutputFormat::Csv).unwrap();
    emit_results(&run_trials(&small_run()).unwrap(), dir_b.path(), OutputFormat::Csv).unwrap();

    for name in ["cdf.csv", "ee.csv"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let cdf = std::fs::read_to_string(dir_a.path().join("cdf.csv")).unwrap();
    let mut lines = cdf.lines();
    assert_eq!(lines.next(), Some("mode,bits,fronthaul_bpshz,rate_bpshz,cdf"));
    assert_eq!(lines.count(), report.pooled_rates().len());

    let ee = std::fs::read_to_string(dir_a.path().join("ee.csv")).unwrap();
    assert!(ee.starts_with("mode,bits,fronthaul_bpshz,ee_bits_per_joule\ncellfree,4,64,"));
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for config in [
        small_run(),
        SystemConfig {
            b: Resolution::Infinite,
            c: f64::INFINITY,
            mode: Mode::SmallcellRzf,
            ..small_run()
        },
    ] {
        let report = run_trials(&config).unwrap();
        emit_results(&report, dir.path(), OutputFormat::Structured).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        let parsed = config_from_manifest(&text).unwrap();
        assert_eq!(parsed, report.config);
        assert_eq!(parsed.to_toml_string().unwrap(), report.config.to_toml_string().unwrap());

        let rows: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("cdf.json")).unwrap()).unwrap();
        assert_eq!(rows.as_array().unwrap().len(), report.pooled_rates().len());
        let ee: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("ee.json")).unwrap()).unwrap();
        assert!(ee[0]["ee_bits_per_joule"].as_f64().unwrap() > 0.0);
    }
}
