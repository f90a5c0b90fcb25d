//! Configuration parsing, command outputs, manifests, determinism and exit codes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use bellrelax::fitting::RateSet;
use bellrelax::measure::Tomogram;
use bellrelax::redfield::DiagonalRates;
use bellrelax::series::Series;
use bellrelax_cli::commands::{
    add_config_copy, cmd_extract, cmd_oracle, cmd_rates, cmd_ratios, cmd_simulate, cmd_tomography, FitModel,
    RatiosInput,
};
use bellrelax_cli::config::{RunConfig, Value};
use bellrelax_cli::literature::{evaluate, parse_literature, TABLE_IV};
use bellrelax_cli::manifest::{sha256_hex, MANIFEST_FILE};
use bellrelax_cli::{exit, write_run, CliError, CommandOutput, RunManifest, Stamp};
use proptest::prelude::*;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::parse(&std::fs::read_to_string(configs().join(name)).unwrap()).unwrap()
}

fn file<'a>(out: &'a CommandOutput, path: &str) -> &'a str {
    &out.files.iter().find(|f| f.path == path).unwrap_or_else(|| panic!("{path} not produced")).contents
}

fn json(out: &CommandOutput, path: &str) -> serde_json::Value {
    serde_json::from_str(file(out, path)).unwrap()
}

fn key_of(e: CliError) -> String {
    match e {
        CliError::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

// ---------------------------------------------------------------- config

#[test]
fn units_convert_to_si() {
    let c = RunConfig::parse(
        "[micro]\ntau_c = 39 ps\nomega_j = 138 Hz\nk = 2 kHz\nomega1 = 400 MHz\n[sample]\nfield = 9400 mT\n\
         temperature = 298 K\n[grid]\nt_max = 1.5 s\ndt = 250 us\ncpmg_tau = 1 ms\n[rates]\nmu1 = 0.5 s^-1\nmu2 = 0.41 1/s",
    )
    .unwrap();
    let close = |k: &str, v: f64| assert!((c.number(k).unwrap() - v).abs() <= 1e-15 * v.abs(), "{k}: {:?}", c.number(k));
    close("micro.tau_c", 39e-12);
    close("micro.omega_j", 2.0 * PI * 138.0);
    close("micro.k", 2.0 * PI * 2e3);
    close("micro.omega1", 2.0 * PI * 400e6);
    close("sample.field", 9.4);
    close("grid.dt", 250e-6);
    close("grid.cpmg_tau", 1e-3);
    close("rates.mu1", 0.5);
    close("rates.mu2", 0.41);
}

#[test]
fn config_errors_name_the_key() {
    let err = |text: &str| key_of(RunConfig::parse(text).unwrap_err());
    assert_eq!(err("[micro]\nfoo = 1 s"), "micro.foo");
    assert_eq!(err("[nonsense]\n"), "nonsense");
    assert_eq!(err("[micro]\ntau_c = 39"), "micro.tau_c");
    assert_eq!(err("[micro]\ntau_c = 39 Hz"), "micro.tau_c");
    assert_eq!(err("[micro]\ntau_c = abc s"), "micro.tau_c");
    assert_eq!(err("[micro]\ntau_c = inf s"), "micro.tau_c");
    assert_eq!(err("[micro]\nomega1 = 1e308 kHz"), "micro.omega1");
    assert_eq!(err("[micro]\ntau_c = 1 s\ntau_c = 2 s"), "micro.tau_c");
    assert_eq!(err("[sample]\neps1 = 1e-5 K"), "sample.eps1");
    assert_eq!(err("[run]\nseed = -3"), "run.seed");
    assert_eq!(err("[tomography]\ntarget = GHZ"), "tomography.target");
    assert_eq!(err("[simulate]\nexperiments = all"), "simulate.experiments");
    assert!(RunConfig::parse("tau_c = 1 s").is_err());
    assert!(RunConfig::parse("[micro\n").is_err());
    assert!(RunConfig::parse("[micro]\njust text").is_err());
    // Comments and blank lines are ignored.
    let c = RunConfig::parse("# header\n\n[micro] # trailing\ntau_c = 1 s # one second\n").unwrap();
    assert_eq!(c.number("micro.tau_c"), Some(1.0));
}

#[test]
fn missing_required_keys_are_reported() {
    let c = RunConfig::parse("[sample]\neps1 = 1e-5\neps2 = 1e-5\n[micro]\nk = 1 rad/s\nomega1 = 0 rad/s\nomega2 = 0 rad/s").unwrap();
    let stamp = Stamp::new(&c);
    assert_eq!(key_of(cmd_rates(&c, &stamp).unwrap_err()), "micro.tau_c");
    let c = RunConfig::parse("[micro]\nk = 1 rad/s\ntau_c = 1 s\nomega1 = 0 rad/s\nomega2 = 0 rad/s").unwrap();
    assert_eq!(key_of(cmd_rates(&c, &stamp).unwrap_err()), "sample.eps1");
    let c = RunConfig::parse("[sample]\neps1 = 1e-5\neps2 = 1e-5\n[micro]\nk = 1 rad/s\ntau_c = 1 s").unwrap();
    assert_eq!(key_of(cmd_rates(&c, &stamp).unwrap_err()), "micro.omega1");
    let c = RunConfig::parse("[sample]\neps1 = 1e-5\neps2 = 1e-5\n[micro]\nk = 1 rad/s\ntau_c = 1 s\nomega1 = 0 rad/s\nomega2 = 0 rad/s\na1z2 = -1 rad^2/s^2").unwrap();
    assert_eq!(key_of(cmd_rates(&c, &stamp).unwrap_err()), "micro.a1z2");
    let mut c = load("table1_rates.cfg");
    assert_eq!(key_of(cmd_oracle(&c, &stamp).unwrap_err()), "micro.k");
    c.set("rates.mu12", Value::Number(0.3)).unwrap();
    assert_eq!(key_of(cmd_simulate(&c, &stamp).unwrap_err()), "rates.mu12");
    assert_eq!(key_of(cmd_tomography(&load("table1_rates.cfg"), &stamp).unwrap_err()), "tomography.target");
    assert!(c.set("micro.bogus", Value::Number(1.0)).is_err());
    assert!(c.set("run.seed", Value::Number(1.0)).is_err());
}

#[test]
fn example_configs_round_trip() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let c = RunConfig::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let text = c.serialize();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c, "{}", path.display());
        assert_eq!(back.serialize(), text);
    }
}

fn unit_for(kind: usize) -> (&'static str, &'static str, f64) {
    [("micro", "tau_c", 1.0), ("micro", "omega_j", 2.0 * PI), ("rates", "mu1", 1.0), ("sample", "field", 1e-3)]
        .map(|(s, k, f)| (s, k, f))[kind]
}

proptest! {
    #[test]
    fn config_parse_serialize_parse_is_identity(
        x in prop::collection::vec(-1e12f64..1e12, 4),
        seed in any::<u64>(),
        scale in prop::sample::select(vec!["", "m", "k"]),
    ) {
        let units = ["s", "Hz", "1/s", "T"];
        let mut text = format!("[run]\nseed = {seed}\n");
        for (i, v) in x.iter().enumerate() {
            let (sec, key, _) = unit_for(i);
            let unit = match (units[i], scale) {
                ("s", "m") => "ms".to_string(),
                ("Hz", "k") => "kHz".to_string(),
                ("T", "m") => "mT".to_string(),
                (u, _) => u.to_string(),
            };
            text.push_str(&format!("[{sec}]\n{key} = {v:e} {unit}\n"));
        }
        let c = RunConfig::parse(&text).unwrap();
        let back = RunConfig::parse(&c.serialize()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.seed(), seed);
    }
}

// ---------------------------------------------------------------- rates

#[test]
fn rates_from_table_iii_micro_inputs() {
    let c = load("table3_micro.cfg");
    let out = cmd_rates(&c, &Stamp::new(&c)).unwrap();
    let v = json(&out, "rates.json");
    let d: DiagonalRates = serde_json::from_value(v["analytic"]["diagonal"].clone()).unwrap();
    for (a, b) in [(d.mu1, 0.50), (d.mu2, 0.41), (d.sigma12, 0.19), (d.delta1, 0.0159), (d.delta2, -0.026)] {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!((v["analytic"]["lambda_zq"].as_f64().unwrap() - 0.326).abs() < 1e-12);
    assert!((v["analytic"]["lambda_dq"].as_f64().unwrap() - 0.568).abs() < 1e-12);
    // Extreme narrowing (Ω = 0): the parameter-free ratios take their theory values.
    assert!((v["analytic"]["ratios"]["r1"]["value"].as_f64().unwrap() - 2.8).abs() < 1e-12);
    assert!((v["analytic"]["ratios"]["r3"]["value"].as_f64().unwrap() - 2.25).abs() < 1e-12);
}

#[test]
fn zero_fluctuation_rates_are_zero_and_ratios_undefined() {
    let c = RunConfig::parse("[sample]\neps1 = 4e-5\neps2 = 1e-5\n[micro]\nk = 0 rad/s\ntau_c = 1 ns\nomega1 = 400 MHz\nomega2 = 100 MHz").unwrap();
    let v = json(&cmd_rates(&c, &Stamp::new(&c)).unwrap(), "rates.json");
    let d: DiagonalRates = serde_json::from_value(v["analytic"]["diagonal"].clone()).unwrap();
    assert_eq!(d, DiagonalRates::default());
    for r in ["r1", "r2", "r3"] {
        assert!(v["analytic"]["ratios"][r]["value"].is_null(), "{r}");
    }
}

#[test]
fn inversion_of_published_rates() {
    let c = load("table1_rates.cfg");
    let v = json(&cmd_rates(&c, &Stamp::new(&c)).unwrap(), "rates.json");
    let m = &v["inversion"]["micro_times_j0"];
    for (k, want) in [("k2_j0", 0.76), ("a1perp2_j0", 0.06), ("a2perp2_j0", 0.015), ("az_sum_j0", 0.25), ("a1z2z_j0", 0.026)] {
        assert!((m[k]["value"].as_f64().unwrap() - want).abs() < 1e-12, "{k}");
    }
    let r1 = v["inversion"]["ratios"]["r1"]["value"].as_f64().unwrap();
    assert!((r1 - (0.50 + 0.41 - 0.335) / 0.19).abs() < 1e-12);
}

// ---------------------------------------------------------------- simulate

#[test]
fn simulate_round_trips_generator_rates() {
    let c = load("table1_rates.cfg");
    let out = cmd_simulate(&c, &Stamp::new(&c)).unwrap();
    assert_eq!(out.exit_code(), exit::SUCCESS, "{}", out.summary);
    let rs = RateSet::from_json(file(&out, "rateset.json")).unwrap();
    let d = DiagonalRates { mu1: 0.50, mu2: 0.41, mu12: 0.335, sigma12: 0.19, delta1: 0.0159, delta2: -0.026 };
    let (zq, dq) = d.bell_initial_rates(3.976e-5, 1e-5);
    for (name, v, truth) in [
        ("mu1", rs.mu1, d.mu1),
        ("mu2", rs.mu2, d.mu2),
        ("sigma12", rs.sigma12, d.sigma12),
        ("delta1", rs.delta1, d.delta1),
        ("delta2", rs.delta2, d.delta2),
        ("mu12", rs.mu12, d.mu12),
        ("mu_zq", rs.mu_zq, zq),
        ("mu_dq", rs.mu_dq, dq),
        ("lambda_zq", rs.lambda_zq, 0.326),
        ("lambda_dq", rs.lambda_dq, 0.568),
    ] {
        let v = v.unwrap().value;
        assert!(((v - truth) / truth).abs() < 0.01, "{name}: {v} vs {truth}");
    }
    // Every experiment has a raw CSV and a plot series readable by `extract`.
    for stem in ["inversion_recovery_1", "noe_2to1", "bell_zz_S0", "bell_xx_PsiMinusZ"] {
        assert!(file(&out, &format!("experiments/{stem}.csv")).lines().count() > 1000);
        let s = Series::from_csv(file(&out, &format!("plot/{stem}.csv"))).unwrap();
        assert_eq!(s.len(), 1001);
    }
}

#[test]
fn noisy_simulation_uncertainties_cover_truth() {
    let mut c = load("table1_rates.cfg");
    c.set("noise.sigma", Value::Number(0.01)).unwrap();
    c.set("grid.t_max", Value::Number(5.0)).unwrap();
    c.set("grid.dt", Value::Number(0.02)).unwrap();
    let d = DiagonalRates { mu1: 0.50, mu2: 0.41, mu12: 0.335, sigma12: 0.19, delta1: 0.0159, delta2: -0.026 };
    let (zq, dq) = d.bell_initial_rates(3.976e-5, 1e-5);
    let truths = [("mu1", d.mu1), ("mu2", d.mu2), ("sigma12", d.sigma12), ("mu_zq", zq), ("mu_dq", dq), ("lambda_zq", 0.326), ("lambda_dq", 0.568)];
    let (mut covered, mut total) = (0, 0);
    for seed in 0..100u64 {
        c.set("run.seed", Value::Count(seed)).unwrap();
        let out = cmd_simulate(&c, &Stamp::new(&c)).unwrap();
        let rs = RateSet::from_json(file(&out, "rateset.json")).unwrap();
        let entries = rs.entries();
        for (name, truth) in truths {
            let Some(v) = entries.iter().find(|e| e.0 == name).unwrap().1 else { continue };
            total += 1;
            if (v.value - truth).abs() <= 2.0 * v.total_err() {
                covered += 1;
            }
        }
    }
    let frac = covered as f64 / total as f64;
    assert!(total >= 600 && frac >= 0.90, "2σ coverage {covered}/{total}");
}

#[test]
fn bell_only_simulation_gives_degenerate_pairs() {
    let c = load("bell_curves.cfg");
    let out = cmd_simulate(&c, &Stamp::new(&c)).unwrap();
    assert_eq!(out.exit_code(), exit::SUCCESS, "{}", out.summary);
    let s = |n: &str| Series::from_csv(file(&out, &format!("plot/{n}.csv"))).unwrap();
    for (a, b) in [("bell_zz_S0", "bell_zz_T0z"), ("bell_zz_PsiPlusZ", "bell_zz_PsiMinusZ")] {
        let (x, y) = (s(a), s(b));
        let scale = x.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in x.y.iter().zip(&y.y) {
            assert!((u - v).abs() <= 1e-12 * scale, "{a}/{b}: {u} vs {v}");
        }
    }
    for (a, b) in [("bell_xx_S0", "bell_xx_T0z"), ("bell_xx_PsiPlusZ", "bell_xx_PsiMinusZ")] {
        let (x, y) = (s(a), s(b));
        let scale = x.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in x.y.iter().zip(&y.y) {
            assert!((u.abs() - v.abs()).abs() <= 1e-12 * scale, "{a}/{b}: {u} vs {v}");
        }
    }
    let fits = json(&out, "bell_fits.json");
    assert!((fits["bell_xx_S0"]["rate"].as_f64().unwrap() - 0.326).abs() < 1e-9);
    assert!((fits["bell_xx_PsiPlusZ"]["rate"].as_f64().unwrap() - 0.568).abs() < 1e-9);
}

#[test]
fn simulation_is_byte_deterministic_across_thread_counts() {
    let mut c = load("table1_rates.cfg");
    c.set("noise.sigma", Value::Number(0.01)).unwrap();
    c.set("grid.t_max", Value::Number(3.0)).unwrap();
    c.set("grid.dt", Value::Number(0.02)).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cmd_simulate(&c, &Stamp::new(&c)).unwrap()).files
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(1));
    let mut other = c.clone();
    other.set("run.seed", Value::Count(999)).unwrap();
    assert_ne!(a, cmd_simulate(&other, &Stamp::new(&other)).unwrap().files);
}

// ---------------------------------------------------------------- extract

fn series_csv(t: &[f64], y: &[f64]) -> String {
    Series::uniform(t.to_vec(), y.to_vec(), 0.0).unwrap().to_csv()
}

#[test]
fn extract_fits_each_model() {
    let t: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
    let c = RunConfig::default();
    let s = Stamp::new(&c);
    let rate = |csv: &str, m: FitModel| {
        let out = cmd_extract(&c, &s, "in.csv", csv, m, None).unwrap();
        assert!(out.inputs.contains_key("in.csv"));
        json(&out, "fit.json")["fit"]["rate"].as_f64().unwrap()
    };
    let decay: Vec<f64> = t.iter().map(|x| 0.7 * (-0.326 * x).exp()).collect();
    assert!((rate(&series_csv(&t, &decay), FitModel::Monoexp) - 0.326).abs() < 1e-8);
    let recovery: Vec<f64> = t.iter().map(|x| 1.0 - 1.9 * (-0.122 * x).exp()).collect();
    assert!((rate(&series_csv(&t, &recovery), FitModel::Offset) - 0.122).abs() < 1e-8);
    let initial = rate(&series_csv(&t, &decay), FitModel::Initial);
    assert!((initial - 0.326).abs() < 0.01 * 0.326, "{initial}");
    let fixed = cmd_extract(&c, &s, "in.csv", &series_csv(&t, &decay), FitModel::Initial, Some(0.5)).unwrap();
    assert_eq!(json(&fixed, "fit.json")["fit"]["window"][1].as_f64(), Some(0.5));
}

#[test]
fn extract_failures_map_to_exit_codes() {
    let c = RunConfig::default();
    let s = Stamp::new(&c);
    let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let zeros = series_csv(&t, &[0.0; 20]);
    for m in [FitModel::Initial, FitModel::Monoexp] {
        let e = cmd_extract(&c, &s, "z.csv", &zeros, m, None).unwrap_err();
        assert_eq!(e.exit_code(), exit::FIT, "{e}");
    }
    let e = cmd_extract(&c, &s, "bad.csv", "t_seconds,value,sigma\n0,abc,0\n", FitModel::Monoexp, None).unwrap_err();
    assert_eq!(e.exit_code(), exit::CONFIG, "{e}");
    assert_eq!(FitModel::parse("quadratic"), None);
}

// ---------------------------------------------------------------- oracle

fn quick_oracle() -> RunConfig {
    let mut c = load("oracle.cfg");
    c.set("oracle.ensemble", Value::Count(256)).unwrap();
    c.set("oracle.t_first", Value::Number(2.0)).unwrap();
    c.set("oracle.t_last", Value::Number(10.0)).unwrap();
    c.set("oracle.batches", Value::Count(4)).unwrap();
    c.set("telegraph.ensemble", Value::Count(2000)).unwrap();
    c
}

#[test]
fn oracle_outputs_and_determinism() {
    let c = quick_oracle();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cmd_oracle(&c, &Stamp::new(&c)).unwrap())
    };
    let a = run(1);
    let v = json(&a, "oracle.json");
    assert!(v["operator"]["max_rel_dev"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["stochastic"]["rates"].as_object().unwrap().len(), 8);
    assert_eq!(v["stochastic"]["ensemble"].as_u64(), Some(256));
    let tel = file(&a, "telegraph.csv");
    assert_eq!(tel.lines().filter(|l| !l.starts_with('#')).count(), 51);
    assert!((v["telegraph"]["h2_zq"].as_f64().unwrap() - 0.0016).abs() < 1e-15);
    assert_eq!(a.files, run(2).files);
}

#[test]
fn non_gaussian_telegraph_breaches_with_exit_4() {
    // One strongly coupled, slowly flipping spin is far from the Gaussian Anderson–Weiss limit.
    let mut c = quick_oracle();
    c.set("telegraph.spins", Value::Count(1)).unwrap();
    c.set("telegraph.j2", Value::Number(1.0)).unwrap();
    c.set("telegraph.t1dist", Value::Number(20.0)).unwrap();
    c.set("telegraph.t_max", Value::Number(10.0)).unwrap();
    c.set("telegraph.ensemble", Value::Count(20_000)).unwrap();
    let out = cmd_oracle(&c, &Stamp::new(&c)).unwrap();
    assert_eq!(out.exit_code(), exit::ORACLE, "{}", out.summary);
    assert!(out.summary.contains("telegraph oracle max |z|"));
    // Outputs are still produced for inspection.
    assert!(out.files.iter().any(|f| f.path == "telegraph.csv"));
}

// ---------------------------------------------------------------- ratios

#[test]
fn literature_ratios_examples() {
    let c = RunConfig::default();
    let out = cmd_ratios(&c, &Stamp::new(&c), RatiosInput::Embedded).unwrap();
    let v = json(&out, "ratios.json");
    let rows = v["table"]["rows"].as_array().unwrap();
    let row = |prefix: &str| rows.iter().find(|r| r["label"].as_str().unwrap().starts_with(prefix)).unwrap();
    let r = row("chloroform 4.7T tm=1s");
    assert!((r["r1"].as_f64().unwrap() - 3.05).abs() < 0.005);
    let r = row("cis-chloroacrylic acid with Ni2+");
    assert!((r["r1"].as_f64().unwrap() - 5.1).abs() < 0.025);
    assert_eq!(r["flagged"], true);
    let r = row("chloroform in cryptophane-D");
    assert!((r["r1"].as_f64().unwrap() - 2.0).abs() < 0.005);
    assert_eq!(r["flagged"], false, "2.0 ± 0.8 contains 2.8");
    assert_eq!(file(&out, "ratios.csv").lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn zero_sigma_rows_are_skipped_with_notice() {
    let text = "label,mu1,mu1_err,mu2,mu2_err,mu12,mu12_err,sigma12,sigma12_err,published,published_err\n\
                a,0.5,0.01,0.4,0.01,0.3,0.01,0.2,0.01,,\nb,0.5,,0.4,,0.3,,0,,,\n";
    let t = evaluate(&parse_literature(text).unwrap());
    assert_eq!(t.rows.len(), 1);
    assert!((t.rows[0].r1 - 3.0).abs() < 1e-12);
    assert!(!t.rows[0].flagged || (t.rows[0].r1 - 2.8).abs() > t.rows[0].sigma);
    assert_eq!(t.notices.len(), 1);
    assert!(t.notices[0].starts_with("b:"));
    assert!(parse_literature("label,mu1\nx,1\n").is_err());
    assert!(parse_literature("label,mu1,mu1_err,mu2,mu2_err,mu12,mu12_err,sigma12,sigma12_err,published,published_err\n").is_err());
    assert_eq!(parse_literature(TABLE_IV).unwrap().len(), 12);
}

#[test]
fn ratios_of_a_simulated_rate_set() {
    let c = load("table1_rates.cfg");
    let sim = cmd_simulate(&c, &Stamp::new(&c)).unwrap();
    let text = file(&sim, "rateset.json");
    let out = cmd_ratios(&c, &Stamp::new(&c), RatiosInput::detect("rateset.json", text)).unwrap();
    let v = json(&out, "ratios.json");
    // The generator obeys the cross-correlation relation exactly: R2 = 8 up to fit bias.
    let r2 = v["ratios"]["r2"]["value"].as_f64().unwrap();
    assert!((r2 - 8.0).abs() < 0.1, "{r2}");
    assert!(v["ratios"]["r2"]["sigma_mc"].as_f64().unwrap() > 0.0);
    let e = cmd_ratios(&c, &Stamp::new(&c), RatiosInput::detect("x.json", "{\"mu1\": 3}")).unwrap_err();
    assert_eq!(e.exit_code(), exit::CONFIG);
}

// ---------------------------------------------------------------- tomography

#[test]
fn tomography_command_reconstructs_bell_state() {
    let mut c = load("tomography.cfg");
    for target in ["S0", "T0z", "PsiPlusZ", "PsiMinusZ"] {
        c.set("tomography.target", Value::Bell(bellrelax::spinops::BellStateId::parse(target).unwrap())).unwrap();
        let out = cmd_tomography(&c, &Stamp::new(&c)).unwrap();
        let v = json(&out, "tomography.json");
        assert!(v["preparation_fidelity"].as_f64().unwrap() >= 0.999);
        assert!(v["reconstructed_fidelity"].as_f64().unwrap() >= 0.99, "{target}");
        let t = Tomogram::from_json(file(&out, "tomogram.json")).unwrap();
        assert!((t.matrix().trace().re - 1.0).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------- manifests

#[test]
fn every_output_references_the_manifest() {
    let c = load("table1_rates.cfg");
    let stamp = Stamp::new(&c);
    let mut out = cmd_rates(&c, &stamp).unwrap();
    let sim = cmd_simulate(&c, &stamp).unwrap();
    out.files.extend(sim.files);
    add_config_copy(&mut out, &c, &stamp);
    for f in &out.files {
        if f.path.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_str(&f.contents).unwrap();
            assert_eq!(v["manifest"]["manifest"], MANIFEST_FILE, "{}", f.path);
            assert_eq!(v["manifest"]["config_sha256"], stamp.config_sha256.as_str(), "{}", f.path);
        } else {
            assert_eq!(f.contents.lines().next().unwrap(), stamp.comment_line().trim_end(), "{}", f.path);
        }
    }
    // The config copy re-parses to the effective configuration.
    assert_eq!(RunConfig::parse(file(&out, "config.txt")).unwrap(), c);
    assert_eq!(stamp.config_sha256, sha256_hex(c.serialize().as_bytes()));
}

#[test]
fn manifest_checksums_verify_after_writing() {
    let c = load("table1_rates.cfg");
    let stamp = Stamp::new(&c);
    let out = cmd_ratios(&c, &stamp, RatiosInput::Embedded).unwrap();
    let m = RunManifest::new("ratios", &stamp, &out, std::time::Duration::from_millis(5), out.exit_code());
    let dir = std::env::temp_dir().join(format!("bellrelax-manifest-{}", std::process::id()));
    write_run(&dir, &m, &out).unwrap();
    let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(back, m);
    back.verify(&dir).unwrap();
    std::fs::write(dir.join("ratios.csv"), "tampered").unwrap();
    assert!(back.verify(&dir).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

// ---------------------------------------------------------------- binary

fn bin(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_bellrelax")).args(args).arg("--out").arg(out).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr))
}

#[test]
fn binary_exit_codes_and_reproducible_runs() {
    let root = std::env::temp_dir().join(format!("bellrelax-bin-{}", std::process::id()));
    let cfg = configs().join("table3_micro.cfg");
    let cfg = cfg.to_str().unwrap();

    let (code, text) = bin(&["--config", cfg, "--seed", "7", "rates"], &root.join("a"));
    assert_eq!(code, exit::SUCCESS, "{text}");
    let (code, _) = bin(&["--config", cfg, "--seed", "7", "--threads", "2", "rates"], &root.join("b"));
    assert_eq!(code, exit::SUCCESS);
    let read = |d: &str, f: &str| std::fs::read(root.join(d).join(f)).unwrap();
    assert_eq!(read("a", "rates.json"), read("b", "rates.json"));
    assert_eq!(read("a", "config.txt"), read("b", "config.txt"));
    let m: RunManifest = serde_json::from_slice(&read("a", MANIFEST_FILE)).unwrap();
    assert_eq!(m.seed, 7);
    assert!(m.outputs.contains_key("rates.json"));
    m.verify(&root.join("a")).unwrap();

    let bad = root.join("bad.cfg");
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(&bad, "[micro]\ntau_c = 5\n").unwrap();
    let (code, text) = bin(&["--config", bad.to_str().unwrap(), "rates"], &root.join("c"));
    assert_eq!(code, exit::CONFIG);
    assert!(text.contains("micro.tau_c"), "{text}");
    let (code, _) = bin(&["rates"], &root.join("c"));
    assert_eq!(code, exit::CONFIG);

    let flat = root.join("flat.csv");
    std::fs::write(&flat, "t_seconds,value,sigma\n0,0,0\n1,0,0\n2,0,0\n3,0,0\n").unwrap();
    let (code, text) = bin(&["extract", "--input", flat.to_str().unwrap()], &root.join("d"));
    assert_eq!(code, exit::FIT, "{text}");

    let (code, text) = bin(&["ratios"], &root.join("e"));
    assert_eq!(code, exit::SUCCESS, "{text}");
    assert!(text.contains("FLAGGED"));
    std::fs::remove_dir_all(&root).unwrap();
}
