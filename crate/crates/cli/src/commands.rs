//! The six commands as pure functions from inputs to output files.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use bellrelax::constants::{polarization, GAMMA_13C, GAMMA_1H};
use bellrelax::dynamics::AwContext;
use bellrelax::fitting::{
    adaptive_window, extract_rate_set, monoexp_fit, parabolic_initial_fit, ExpModel, ExtractOptions, FitResult, RateSet,
};
use bellrelax::measure::{state_fidelity, tomography, TomographyOptions, DEFAULT_GAIN};
use bellrelax::oracle::{appendix_b_rates_default, stochastic::compare_with_analytic, stochastic_rates, telegraph_relaxation};
use bellrelax::oracle::{StochasticOptions, TelegraphField};
use bellrelax::redfield::{
    anderson_weiss_exponential, cross_correlation_bound, cross_correlation_bound_moments, diagonal_rates,
    dipolar_second_moments, extract_micro_from_rates, mu12_from_bell_rates, offdiagonal_rates, parameter_free_ratios,
    DiagonalRates, Measured, MicroParams, OffDiagonalRates, Ratio, RatioInputs, SlowJ, EXTREME_NARROWING_LIMIT,
    R2_THEORY,
};
use bellrelax::sequences::{
    prepare_bell_pps, run_bell_relaxation, run_inversion_recovery, run_noe, Battery, BellChannel, Component,
    ExperimentRecord, NoiseModel, SimContext, DEFAULT_CPMG_TAU,
};
use bellrelax::series::Series;
use bellrelax::spinops::{pure_deviation, BellStateId, Spin};

use crate::config::{RunConfig, SCHEMA};
use crate::literature::{evaluate, parse_literature, TABLE_IV};
use crate::manifest::{sha256_hex, Stamp};
use crate::CliError;

/// Threshold on |z| above which an oracle comparison fails.
pub const Z_LIMIT: f64 = 4.0;
/// Operator-oracle tolerance relative to the largest rate.
pub const OPERATOR_TOLERANCE: f64 = 1e-10;
/// Monte Carlo draws for the R2 uncertainty.
pub const RATIO_MC_DRAWS: usize = 10_000;

/// One output file, path relative to the run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFile {
    pub path: String,
    pub contents: String,
}

/// Files produced by a command, a human summary, and an optional failure
/// that still lets the outputs be written (fit failures, oracle breaches).
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<OutputFile>,
    pub summary: String,
    /// Input file name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub failure: Option<CliError>,
}

impl CommandOutput {
    fn push(&mut self, path: impl Into<String>, contents: String) {
        self.files.push(OutputFile { path: path.into(), contents });
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }

    /// Exit code of the run.
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(crate::exit::SUCCESS, CliError::exit_code)
    }
}

/// Append the canonical effective configuration as `config.txt`.
pub fn add_config_copy(out: &mut CommandOutput, cfg: &RunConfig, stamp: &Stamp) {
    out.push("config.txt", stamp.comment_line() + &cfg.serialize());
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("value serializes")
}

fn missing(key: &str, msg: &str) -> CliError {
    CliError::Config { key: key.to_string(), msg: msg.to_string() }
}

/// Library parameter errors reported under the config key they came from.
fn with_key(e: bellrelax::Error) -> CliError {
    if let bellrelax::Error::InvalidParameter { name, reason } = &e {
        if let Some((sec, key, _, _)) =
            SCHEMA.iter().find(|(s, k, _, _)| k == name && matches!(*s, "micro" | "slow_j" | "sample"))
        {
            return CliError::Config { key: format!("{sec}.{key}"), msg: reason.clone() };
        }
    }
    e.into()
}

/// Equilibrium polarizations from `sample.eps1/eps2`, else from field and temperature (¹H, ¹³C).
pub fn polarizations(cfg: &RunConfig) -> Result<(f64, f64), CliError> {
    match (cfg.number("sample.eps1"), cfg.number("sample.eps2")) {
        (Some(a), Some(b)) => Ok((a, b)),
        (Some(_), None) => Err(missing("sample.eps2", "missing (eps1 given)")),
        (None, Some(_)) => Err(missing("sample.eps1", "missing (eps2 given)")),
        (None, None) => {
            let b = cfg.number("sample.field").ok_or_else(|| missing("sample.eps1", "missing (or give sample.field and sample.temperature)"))?;
            let t = cfg.require("sample.temperature")?;
            if t <= 0.0 {
                return Err(missing("sample.temperature", "must be positive"));
            }
            Ok((polarization(GAMMA_1H, b, t), polarization(GAMMA_13C, b, t)))
        }
    }
}

/// Microscopic parameters; Larmor frequencies default to γB for ¹H/¹³C.
pub fn micro_params(cfg: &RunConfig) -> Result<MicroParams, CliError> {
    let field = cfg.number("sample.field");
    let larmor = |key: &str, gamma: f64| -> Result<f64, CliError> {
        cfg.number(key).or(field.map(|b| gamma * b)).ok_or_else(|| missing(key, "missing (or give sample.field)"))
    };
    let (eps1, eps2) = polarizations(cfg)?;
    let m = |k: &str| cfg.number_or(k, 0.0);
    let slow_j = SlowJ { aj1z2: m("slow_j.aj1z2"), aj2z2: m("slow_j.aj2z2"), aj12: m("slow_j.aj12"), t1dist: m("slow_j.t1dist") };
    if slow_j.aj1z2 + slow_j.aj2z2 + slow_j.aj12.abs() > 0.0 && !(slow_j.t1dist > 0.0) {
        return Err(missing("slow_j.t1dist", "required and positive when slow-J moments are given"));
    }
    let p = MicroParams {
        k: cfg.require("micro.k")?,
        tau_c: cfg.require("micro.tau_c")?,
        omega1: larmor("micro.omega1", GAMMA_1H)?,
        omega2: larmor("micro.omega2", GAMMA_13C)?,
        omega_j: m("micro.omega_j"),
        a1perp2: m("micro.a1perp2"),
        a2perp2: m("micro.a2perp2"),
        a1z2: m("micro.a1z2"),
        a2z2: m("micro.a2z2"),
        a1z2z: m("micro.a1z2z"),
        xcorr1: m("micro.xcorr1"),
        xcorr2: m("micro.xcorr2"),
        slow_j,
        eps1,
        eps2,
    };
    p.validate().map_err(with_key)?;
    Ok(p)
}

/// Generator rates given directly in `[rates]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GivenRates {
    pub diag: DiagonalRates,
    pub lambda_zq: f64,
    pub lambda_dq: f64,
    /// (μZQ, μDQ) when given instead of μ₁₂.
    pub bell: Option<(f64, f64)>,
}

pub fn given_rates(cfg: &RunConfig) -> Result<GivenRates, CliError> {
    let r = |k: &str| cfg.require(&format!("rates.{k}"));
    let bell = match (cfg.number("rates.mu_zq"), cfg.number("rates.mu_dq")) {
        (Some(z), Some(d)) => Some((z, d)),
        (None, None) => None,
        (Some(_), None) => return Err(missing("rates.mu_dq", "missing (mu_zq given)")),
        (None, Some(_)) => return Err(missing("rates.mu_zq", "missing (mu_dq given)")),
    };
    let mu12 = match (cfg.number("rates.mu12"), bell) {
        (Some(_), Some(_)) => return Err(missing("rates.mu12", "give either mu12 or mu_zq/mu_dq, not both")),
        (Some(m), None) => m,
        (None, Some((z, d))) => mu12_from_bell_rates(z, d),
        (None, None) => return Err(missing("rates.mu12", "missing (or give mu_zq and mu_dq)")),
    };
    let diag = DiagonalRates { mu1: r("mu1")?, mu2: r("mu2")?, mu12, sigma12: r("sigma12")?, delta1: r("delta1")?, delta2: r("delta2")? };
    Ok(GivenRates { diag, lambda_zq: r("lambda_zq")?, lambda_dq: r("lambda_dq")?, bell })
}

/// Simulation context: `[rates]` as generator if present, otherwise the analytic rates of `[micro]`.
pub fn sim_context(cfg: &RunConfig) -> Result<SimContext, CliError> {
    let omega_j = cfg.require("micro.omega_j")?;
    let (eps1, eps2) = polarizations(cfg)?;
    let mut ctx = if cfg.has_section("rates") {
        if cfg.contains("micro.k") {
            return Err(missing("micro.k", "[rates] already defines the generator; [micro] may only give omega_j"));
        }
        let g = given_rates(cfg)?;
        SimContext::new(g.diag, OffDiagonalRates::from_totals(g.lambda_zq, g.lambda_dq), eps1, eps2, omega_j)
    } else {
        let p = micro_params(cfg)?;
        let mut ctx = SimContext::new(diagonal_rates(&p), offdiagonal_rates(&p), eps1, eps2, omega_j);
        let s = &p.slow_j;
        if s.aj1z2 + s.aj2z2 + s.aj12.abs() > 0.0 {
            ctx.aw = Some(AwContext::from_slow_j(s));
        }
        ctx
    };
    let rel = cfg.number_or("noise.sigma", 0.0);
    if rel < 0.0 {
        return Err(missing("noise.sigma", "must be non-negative"));
    }
    if rel > 0.0 {
        ctx.noise = Some(NoiseModel { sigma: rel * ctx.gain * eps1.abs().min(eps2.abs()), seed: cfg.seed() });
    }
    Ok(ctx)
}

/// Uniform grid 0, dt, …, t_max.
pub fn time_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let t_max = cfg.require("grid.t_max")?;
    let dt = cfg.require("grid.dt")?;
    if !(dt > 0.0) {
        return Err(missing("grid.dt", "must be positive"));
    }
    let n = (t_max / dt).round();
    if !(3.0..=1e6).contains(&n) {
        return Err(missing("grid.t_max", "grid must have between 4 and 10⁶ + 1 points"));
    }
    Ok((0..=n as usize).map(|i| i as f64 * dt).collect())
}

fn ratio_line(name: &str, r: &Ratio) -> String {
    match (r.value, r.sigma) {
        (Some(v), Some(s)) => format!("{name} = {v:.4} ± {s:.4} (theory {:.4})", r.theory),
        _ => format!("{name} undefined (theory {:.4})", r.theory),
    }
}

fn undefined(theory: f64) -> Ratio {
    Ratio { value: None, sigma: None, sigma_mc: None, theory }
}

/// Analytic rates, ratios and bounds from `[micro]`, and/or the inversion of `[rates]`.
pub fn cmd_rates(cfg: &RunConfig, stamp: &Stamp) -> Result<CommandOutput, CliError> {
    let mut out = CommandOutput::default();
    let mut doc = serde_json::Map::new();
    let has_micro = cfg.has_section("micro") && cfg.contains("micro.k");
    if !has_micro && !cfg.has_section("rates") {
        return Err(missing("micro.k", "missing: give [micro] parameters or measured [rates]"));
    }
    if has_micro {
        let p = micro_params(cfg)?;
        let d = diagonal_rates(&p);
        let o = offdiagonal_rates(&p);
        let (mu_zq, mu_dq) = d.bell_initial_rates(p.eps1, p.eps2);
        let inp = RatioInputs {
            diag: d,
            offdiag: o,
            mu_zq: Measured::exact(mu_zq),
            mu_dq: Measured::exact(mu_dq),
            eps1: p.eps1,
            eps2: p.eps2,
            ..Default::default()
        };
        let ratios = parameter_free_ratios(&inp, None);
        let mut warnings = Vec::new();
        let x = p.omega_max_tau_c();
        if x > EXTREME_NARROWING_LIMIT {
            warnings.push(format!("Ω_max·τ_c = {x:.3e} is outside extreme narrowing; R1/R3 theory values do not apply"));
        }
        let bounds = cross_correlation_bound(&p);
        out.line(format!("mu1 = {:.6} 1/s, mu2 = {:.6} 1/s, mu12 = {:.6} 1/s, sigma12 = {:.6} 1/s", d.mu1, d.mu2, d.mu12, d.sigma12));
        out.line(format!("delta1 = {:.6} 1/s, delta2 = {:.6} 1/s", d.delta1, d.delta2));
        out.line(format!("lambda_zq = {:.6} 1/s, lambda_dq = {:.6} 1/s", o.lambda_zq(), o.lambda_dq()));
        out.line(ratio_line("R1", &ratios.r1));
        out.line(ratio_line("R3", &ratios.r3));
        for w in &warnings {
            out.line(format!("warning: {w}"));
        }
        doc.insert(
            "analytic".into(),
            json!({
                "micro": to_value(&p),
                "omega_max_tau_c": x,
                "diagonal": to_value(&d),
                "offdiagonal": to_value(&o),
                "lambda_zq": o.lambda_zq(),
                "lambda_dq": o.lambda_dq(),
                "bell_initial": { "mu_zq": mu_zq, "mu_dq": mu_dq },
                "ratios": to_value(&ratios),
                "cross_correlation_bounds": to_value(&bounds),
                "warnings": warnings,
            }),
        );
    }
    if cfg.has_section("rates") {
        let g = given_rates(cfg)?;
        let (eps1, eps2) = polarizations(cfg).unwrap_or((0.0, 0.0));
        let o = OffDiagonalRates::from_totals(g.lambda_zq, g.lambda_dq);
        let (zq, dq) = g.bell.unwrap_or((f64::NAN, f64::NAN));
        let inp = RatioInputs {
            diag: g.diag,
            offdiag: o,
            mu_zq: Measured::exact(zq),
            mu_dq: Measured::exact(dq),
            eps1,
            eps2,
            ..Default::default()
        };
        let mut ratios = parameter_free_ratios(&inp, None);
        if g.bell.is_none() || eps1 + eps2 == 0.0 {
            ratios.r2 = undefined(R2_THEORY);
        }
        let omt = if has_micro { micro_params(cfg).ok().map(|p| p.omega_max_tau_c()) } else { None };
        let zero = DiagonalRates::default();
        let inv = extract_micro_from_rates(&g.diag, &zero, &o, (0.0, 0.0), omt).map_err(with_key)?;
        let (_, f1_per_k2, _) = dipolar_second_moments(1.0);
        let bounds = cross_correlation_bound_moments(
            f1_per_k2 * inv.k2_j0.value,
            inv.a1perp2_j0.value,
            inv.a2perp2_j0.value,
            inv.xcorr1_j0.value,
            inv.xcorr2_j0.value,
        );
        out.line(format!("k^2 J0 = {:.4} 1/s, <|a1perp|^2> J0 = {:.4} 1/s, <|a2perp|^2> J0 = {:.4} 1/s", inv.k2_j0.value, inv.a1perp2_j0.value, inv.a2perp2_j0.value));
        out.line(format!("[<a1z^2>+<a2z^2>] J0 = {:.4} 1/s, <a1z a2z> J0 = {:.4} 1/s", inv.az_sum_j0.value, inv.a1z2z_j0.value));
        out.line(ratio_line("R1 (given rates)", &ratios.r1));
        out.line(ratio_line("R2 (given rates)", &ratios.r2));
        for w in &inv.warnings {
            out.line(format!("warning: {w}"));
        }
        doc.insert(
            "inversion".into(),
            json!({
                "given": to_value(&g),
                "micro_times_j0": to_value(&inv),
                "ratios": to_value(&ratios),
                "cross_correlation_bounds": to_value(&bounds),
            }),
        );
    }
    out.push("rates.json", stamp.wrap_json(serde_json::Value::Object(doc)));
    Ok(out)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Normalized readout component (x, y, σ) of a record.
pub fn record_series(rec: &ExperimentRecord) -> Result<Series, CliError> {
    let eq = rec.equilibrium_sym;
    if eq == 0.0 {
        return Err(CliError::Fit(format!("{}: zero equilibrium intensity", rec.name)));
    }
    let y = match rec.component {
        Component::Antisym => rec.antisymmetric(),
        _ => rec.symmetric(),
    };
    Ok(Series::uniform(rec.times.clone(), y.iter().map(|v| v / eq).collect(), rec.component_sigma() / eq.abs())?)
}

fn record_files(out: &mut CommandOutput, stamp: &Stamp, rec: &ExperimentRecord) -> Result<(), CliError> {
    let stem = file_stem(&rec.name);
    let mut csv = stamp.comment_line();
    csv.push_str("t_seconds,i_plus,i_minus,symmetric,antisymmetric,peak_sigma\n");
    for (t, p) in rec.times.iter().zip(&rec.peaks) {
        csv.push_str(&format!(
            "{t:?},{:?},{:?},{:?},{:?},{:?}\n",
            p.i_plus,
            p.i_minus,
            p.i_plus + p.i_minus,
            p.i_plus - p.i_minus,
            rec.noise_sigma
        ));
    }
    out.push(format!("experiments/{stem}.csv"), csv);
    out.push(format!("plot/{stem}.csv"), stamp.comment_line() + &record_series(rec)?.to_csv());
    Ok(())
}

enum Job {
    Ir(Spin),
    Noe(Spin, Spin),
    Bell(BellStateId, BellChannel),
}

fn run_job(job: &Job, times: &[f64], ctx: &SimContext) -> bellrelax::Result<ExperimentRecord> {
    match *job {
        Job::Ir(s) => run_inversion_recovery(s, times, ctx),
        Job::Noe(a, b) => run_noe(a, b, times, ctx),
        Job::Bell(t, c) => run_bell_relaxation(t, times, c, ctx),
    }
}

/// Run the configured experiments, write every time series and the extracted rate set.
pub fn cmd_simulate(cfg: &RunConfig, stamp: &Stamp) -> Result<CommandOutput, CliError> {
    let ctx = sim_context(cfg)?;
    let times = time_grid(cfg)?;
    let tau = cfg.number_or("grid.cpmg_tau", DEFAULT_CPMG_TAU);
    if !(tau > 0.0) {
        return Err(missing("grid.cpmg_tau", "must be positive"));
    }
    let mode = cfg.text("simulate.experiments").unwrap_or("battery");
    let xx = BellChannel::XxCpmg { tau };
    let z = BellStateId::Z_BASIS;
    let jobs: Vec<Job> = if mode == "bell" {
        z.iter().map(|&b| Job::Bell(b, BellChannel::Zz)).chain(z.iter().map(|&b| Job::Bell(b, xx))).collect()
    } else {
        vec![
            Job::Ir(Spin::One),
            Job::Ir(Spin::Two),
            Job::Noe(Spin::One, Spin::Two),
            Job::Noe(Spin::Two, Spin::One),
            Job::Bell(BellStateId::S0, BellChannel::Zz),
            Job::Bell(BellStateId::PsiPlusZ, BellChannel::Zz),
            Job::Bell(z[0], xx),
            Job::Bell(z[1], xx),
            Job::Bell(z[2], xx),
            Job::Bell(z[3], xx),
        ]
    };
    // Experiments run concurrently; each owns its noise stream, results are collected in job order.
    let results: Vec<bellrelax::Result<ExperimentRecord>> = jobs.par_iter().map(|j| run_job(j, &times, &ctx)).collect();

    let mut out = CommandOutput::default();
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for r in results {
        match r {
            Ok(rec) => {
                record_files(&mut out, stamp, &rec)?;
                records.push(Some(rec));
            }
            Err(e) => {
                failures.push(e.to_string());
                records.push(None);
            }
        }
    }
    out.push(
        "generator.json",
        stamp.wrap_json(json!({
            "diagonal": to_value(&ctx.rates),
            "offdiagonal": to_value(&ctx.offdiag),
            "eps1": ctx.eps1,
            "eps2": ctx.eps2,
            "omega_j": ctx.omega_j,
            "gain": ctx.gain,
            "noise": to_value(&ctx.noise),
            "slow_j_anderson_weiss": to_value(&ctx.aw),
        })),
    );

    if mode == "bell" {
        let mut fits = serde_json::Map::new();
        for rec in records.iter().flatten() {
            let s = record_series(rec)?;
            let f = match rec.kind {
                bellrelax::sequences::ExperimentKind::BellXx { .. } => monoexp_fit(&s.t, &s.y, ExpModel::Plain),
                _ => adaptive_window(&s.t, &s.y, cfg.number_or("fit.coarse_window", 1.0))
                    .and_then(|w| parabolic_initial_fit(&s.t, &s.y, w)),
            };
            match f {
                Ok(f) => {
                    out.line(format!("{}: rate {:.6} ± {:.2e} 1/s", rec.name, f.rate, f.total_err()));
                    fits.insert(rec.name.clone(), to_value(&f));
                }
                Err(e) => failures.push(format!("{}: {e}", rec.name)),
            }
        }
        out.push("bell_fits.json", stamp.wrap_json(serde_json::Value::Object(fits)));
    } else {
        let [ir1, ir2, noe12, noe21, zz_zq, zz_dq, x0, x1, x2, x3]: [Option<ExperimentRecord>; 10] =
            records.try_into().map_err(|_| CliError::Input("unexpected experiment count".into()))?;
        let b = Battery { ir1, ir2, noe12, noe21, zz_zq, zz_dq, xx: [x0, x1, x2, x3] };
        let coarse = cfg.number_or("fit.coarse_window", ExtractOptions::default().coarse_window);
        let rs = extract_rate_set(&b, &ExtractOptions { coarse_window: coarse });
        for (name, v) in rs.entries() {
            match v {
                Some(v) => out.line(format!("{name:<10} {:.6} ± {:.2e} 1/s", v.value, v.total_err())),
                None => out.line(format!("{name:<10} missing")),
            }
        }
        failures.extend(rs.notes.iter().cloned());
        out.push("rateset.json", stamp.wrap_json(to_value(&rs)));
    }
    for f in &failures {
        out.line(format!("failure: {f}"));
    }
    if !failures.is_empty() {
        out.failure = Some(CliError::Fit(failures.join("; ")));
    }
    Ok(out)
}

/// Fit model of the `extract` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// Quadratic initial-slope fit.
    Initial,
    /// A·e^{−λt}.
    Monoexp,
    /// y∞ − A·e^{−λt}.
    Offset,
}

impl FitModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "initial" => Some(FitModel::Initial),
            "monoexp" => Some(FitModel::Monoexp),
            "offset" => Some(FitModel::Offset),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitModel::Initial => "initial",
            FitModel::Monoexp => "monoexp",
            FitModel::Offset => "offset",
        }
    }
}

/// Fit a user-supplied (t, value, σ) CSV.
pub fn cmd_extract(
    cfg: &RunConfig,
    stamp: &Stamp,
    input_name: &str,
    input: &str,
    model: FitModel,
    window: Option<f64>,
) -> Result<CommandOutput, CliError> {
    let s = Series::from_csv(input)?;
    let mut out = CommandOutput::default();
    out.inputs.insert(input_name.to_string(), sha256_hex(input.as_bytes()));
    let fit: Result<FitResult, bellrelax::Error> = match model {
        FitModel::Initial => {
            let w = match window {
                Some(w) => Ok(w),
                None => adaptive_window(&s.t, &s.y, cfg.number_or("fit.coarse_window", ExtractOptions::default().coarse_window)),
            };
            w.and_then(|w| parabolic_initial_fit(&s.t, &s.y, w))
        }
        FitModel::Monoexp => monoexp_fit(&s.t, &s.y, ExpModel::Plain),
        FitModel::Offset => monoexp_fit(&s.t, &s.y, ExpModel::Offset),
    };
    let f = fit.map_err(|e| match e {
        bellrelax::Error::InvalidParameter { .. } | bellrelax::Error::Fit(_) => CliError::Fit(e.to_string()),
        other => other.into(),
    })?;
    out.line(format!("{} fit: rate {:.6} ± {:.3e} (stat) ± {:.3e} (sys) 1/s over [{}, {}] s", model.name(), f.rate, f.stat_err, f.sys_err, f.window.0, f.window.1));
    out.push("fit.json", stamp.wrap_json(json!({ "model": model.name(), "input": input_name, "fit": to_value(&f) })));
    Ok(out)
}

/// Operator oracle, stochastic oracle and (if configured) the telegraph oracle.
pub fn cmd_oracle(cfg: &RunConfig, stamp: &Stamp) -> Result<CommandOutput, CliError> {
    let p = micro_params(cfg)?;
    let mut out = CommandOutput::default();
    let mut breaches = Vec::new();

    let op = appendix_b_rates_default(&p)?;
    let d = diagonal_rates(&p);
    let o = offdiagonal_rates(&p);
    let pairs = [
        ("mu1", op.diagonal.mu1, d.mu1),
        ("mu2", op.diagonal.mu2, d.mu2),
        ("sigma12", op.diagonal.sigma12, d.sigma12),
        ("mu12", op.diagonal.mu12, d.mu12),
        ("delta1", op.diagonal.delta1, d.delta1),
        ("delta2", op.diagonal.delta2, d.delta2),
        ("lambda_zq", op.offdiagonal.lambda_zq(), o.lambda_zq()),
        ("lambda_dq", op.offdiagonal.lambda_dq(), o.lambda_dq()),
    ];
    let scale = pairs.iter().fold(0.0f64, |m, x| m.max(x.2.abs()));
    let max_dev = pairs.iter().fold(0.0f64, |m, x| m.max((x.1 - x.2).abs()));
    let op_rel = if scale > 0.0 { max_dev / scale } else { max_dev };
    out.line(format!("operator oracle: max deviation {op_rel:.3e} of the largest rate, mode leakage {:.3e}", op.mode_leakage));
    if op_rel > OPERATOR_TOLERANCE {
        breaches.push(format!("operator oracle deviates by {op_rel:.3e}"));
    }

    let defaults = StochasticOptions::default();
    let opts = StochasticOptions {
        ensemble: cfg.count("oracle.ensemble").map_or(defaults.ensemble, |n| n as usize),
        seed: cfg.seed(),
        dt: cfg.number("oracle.dt"),
        t_first: cfg.require("oracle.t_first")?,
        t_last: cfg.require("oracle.t_last")?,
        batches: cfg.count("oracle.batches").map_or(defaults.batches, |n| n as usize),
        field_tau_c: None,
    };
    let mc = stochastic_rates(&p, &opts).map_err(|e| match e {
        bellrelax::Error::InvalidParameter { name, reason } => CliError::Config { key: format!("oracle.{name}"), msg: reason },
        other => other.into(),
    })?;
    let mut report = compare_with_analytic(&p, &mc);
    report.operator_max_rel_dev = Some(op_rel);
    for (name, c) in &report.rates {
        out.line(format!(
            "{name:<10} analytic {:+.6e}  monte carlo {:+.6e} ± {:.2e}  z = {:+.2}",
            c.analytic, c.monte_carlo, c.stat_err, c.z_score
        ));
    }
    let zmax = report.max_abs_z();
    if !(zmax <= Z_LIMIT) {
        breaches.push(format!("stochastic oracle max |z| = {zmax:.2}"));
    }
    let mut doc = json!({
        "stochastic": to_value(&report),
        "operator": { "rates": to_value(&op), "max_rel_dev": op_rel },
    });

    if cfg.has_section("telegraph") {
        let n = cfg.count("telegraph.spins").ok_or_else(|| missing("telegraph.spins", "missing required key"))? as usize;
        let j1 = cfg.number_or("telegraph.j1", 0.0);
        let j2 = cfg.number_or("telegraph.j2", 0.0);
        let t1 = cfg.require("telegraph.t1dist")?;
        let t_max = cfg.require("telegraph.t_max")?;
        let points = cfg.count("telegraph.points").unwrap_or(50) as usize;
        let ensemble = cfg.count("telegraph.ensemble").unwrap_or(10_000) as usize;
        if points == 0 || !(t_max > 0.0) {
            return Err(missing("telegraph.points", "need at least one point and t_max > 0"));
        }
        let field = TelegraphField::uniform(n, j1, j2, t1);
        let times: Vec<f64> = (1..=points).map(|i| t_max * i as f64 / points as f64).collect();
        let c = telegraph_relaxation(&field, &pure_deviation(&BellStateId::S0.ket()), &times, ensemble, cfg.seed())
            .map_err(|e| match e {
                bellrelax::Error::InvalidParameter { name, reason } => CliError::Config { key: format!("telegraph.{name}"), msg: reason },
                other => other.into(),
            })?;
        let (hz, hd) = field.h_second_moments();
        let z = |m: f64, aw: f64, e: f64| {
            let diff = m - aw;
            if e > 0.0 {
                diff / e
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let mut csv = stamp.comment_line();
        csv.push_str("t_seconds,zq,zq_err,zq_aw,z_zq,dq,dq_err,dq_aw,z_dq\n");
        let mut tz: f64 = 0.0;
        let (mut pz, mut pd) = (Vec::new(), Vec::new());
        for (k, &t) in times.iter().enumerate() {
            let az = anderson_weiss_exponential(t, hz, t1)?;
            let ad = anderson_weiss_exponential(t, hd, t1)?;
            let (z1, z2) = (z(c.zq[k], az, c.zq_err[k]), z(c.dq[k], ad, c.dq_err[k]));
            tz = tz.max(z1.abs()).max(z2.abs());
            csv.push_str(&format!(
                "{t:?},{:?},{:?},{az:?},{z1:?},{:?},{:?},{ad:?},{z2:?}\n",
                c.zq[k], c.zq_err[k], c.dq[k], c.dq_err[k]
            ));
            pz.push((c.zq[k], c.zq_err[k]));
            pd.push((c.dq[k], c.dq_err[k]));
        }
        for (name, v) in [("zq", pz), ("dq", pd)] {
            let s = Series::new(times.clone(), v.iter().map(|x| x.0).collect(), v.iter().map(|x| x.1).collect())?;
            out.push(format!("plot/telegraph_{name}.csv"), stamp.comment_line() + &s.to_csv());
        }
        out.push("telegraph.csv", csv);
        out.line(format!("telegraph oracle: {points} points, max |z| vs Anderson–Weiss = {tz:.2}"));
        if !(tz <= Z_LIMIT) {
            breaches.push(format!("telegraph oracle max |z| = {tz:.2}"));
        }
        doc["telegraph"] = json!({
            "spins": n, "j1": j1, "j2": j2, "t1dist": t1, "ensemble": ensemble,
            "h2_zq": hz, "h2_dq": hd,
            "asymptotic_rate_zq": hz * t1, "asymptotic_rate_dq": hd * t1,
            "max_abs_z": tz,
        });
    }
    out.push("oracle.json", stamp.wrap_json(doc));
    if !breaches.is_empty() {
        for b in &breaches {
            out.line(format!("breach: {b}"));
        }
        out.failure = Some(CliError::Oracle(breaches.join("; ")));
    }
    Ok(out)
}

/// Input of the `ratios` command.
pub enum RatiosInput<'a> {
    /// Built-in literature table.
    Embedded,
    /// Literature CSV text.
    Literature { name: &'a str, text: &'a str },
    /// RateSet JSON (e.g. `rateset.json` from `simulate`).
    RateSet { name: &'a str, text: &'a str },
}

impl<'a> RatiosInput<'a> {
    /// Classify a file by content: JSON objects are rate sets, anything else literature CSV.
    pub fn detect(name: &'a str, text: &'a str) -> Self {
        if text.trim_start().starts_with('{') {
            RatiosInput::RateSet { name, text }
        } else {
            RatiosInput::Literature { name, text }
        }
    }
}

/// R1 per literature row (flagging rows outside 2.8 ± quoted tolerance), or R1–R3 of a rate set.
pub fn cmd_ratios(cfg: &RunConfig, stamp: &Stamp, input: RatiosInput) -> Result<CommandOutput, CliError> {
    let mut out = CommandOutput::default();
    let (name, text) = match input {
        RatiosInput::Embedded => ("<embedded literature table>", TABLE_IV),
        RatiosInput::Literature { name, text } => {
            out.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
            (name, text)
        }
        RatiosInput::RateSet { name, text } => {
            out.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
            let rs = RateSet::from_json(text)?;
            let (eps1, eps2) = polarizations(cfg).unwrap_or((0.0, 0.0));
            let lam = |v: Option<bellrelax::fitting::RateValue>| v.map_or((f64::NAN, f64::NAN), |r| (r.value, r.total_err()));
            let (lz, ez) = lam(rs.lambda_zq);
            let (ld, ed) = lam(rs.lambda_dq);
            let m = |v: Option<bellrelax::fitting::RateValue>| v.map_or(Measured::new(f64::NAN, 0.0), |r| Measured::new(r.value, r.total_err()));
            let inp = RatioInputs {
                diag: rs.diagonal(),
                diag_err: rs.diagonal_err(),
                offdiag: OffDiagonalRates::from_totals(lz, ld),
                lambda_err: (ez, ed),
                mu_zq: m(rs.mu_zq),
                mu_dq: m(rs.mu_dq),
                eps1,
                eps2,
            };
            let mut r = parameter_free_ratios(&inp, Some((RATIO_MC_DRAWS, cfg.seed())));
            for ratio in [&mut r.r1, &mut r.r2, &mut r.r3] {
                if !ratio.value.is_some_and(f64::is_finite) {
                    *ratio = undefined(ratio.theory);
                }
            }
            if eps1 + eps2 == 0.0 {
                r.r2 = undefined(R2_THEORY);
                out.line("R2 needs sample polarizations (sample.eps1/eps2 or field/temperature)");
            }
            out.line(ratio_line("R1", &r.r1));
            out.line(ratio_line("R2", &r.r2));
            out.line(ratio_line("R3", &r.r3));
            out.push("ratios.json", stamp.wrap_json(json!({ "input": name, "ratios": to_value(&r) })));
            return Ok(out);
        }
    };
    let table = evaluate(&parse_literature(text)?);
    for r in &table.rows {
        let published = match (r.published, r.published_err) {
            (Some(p), Some(e)) => format!("published {p} ± {e}"),
            (Some(p), None) => format!("published {p}"),
            _ => String::new(),
        };
        out.line(format!("{:<44} R1 = {:.3} ± {:.3}  {published}{}", r.label, r.r1, r.sigma, if r.flagged { "  FLAGGED" } else { "" }));
    }
    for n in &table.notices {
        out.line(format!("notice: {n}"));
    }
    out.push("ratios.csv", stamp.comment_line() + &table.to_csv());
    out.push("ratios.json", stamp.wrap_json(json!({ "input": name, "table": to_value(&table) })));
    Ok(out)
}

/// Prepare a Bell pseudo-pure state and reconstruct it by tomography.
pub fn cmd_tomography(cfg: &RunConfig, stamp: &Stamp) -> Result<CommandOutput, CliError> {
    let target = cfg.bell("tomography.target").ok_or_else(|| missing("tomography.target", "missing required key"))?;
    let (eps1, eps2) = polarizations(cfg)?;
    let omega_j = cfg.require("micro.omega_j")?;
    let gain = cfg.number_or("tomography.gain", DEFAULT_GAIN);
    let rel = cfg.number_or("tomography.noise", 0.0);
    if rel < 0.0 {
        return Err(missing("tomography.noise", "must be non-negative"));
    }
    let prep = prepare_bell_pps(target, eps1, eps2, omega_j).map_err(with_key)?;
    let rho = prep.density();
    let opts = TomographyOptions { gain, noise_sigma: rel * gain.abs() * eps1.abs().min(eps2.abs()), seed: cfg.seed() };
    let tomo = tomography(&mut || rho, &opts).map_err(|e| match e {
        bellrelax::Error::InvalidParameter { name, reason } => CliError::Config { key: format!("tomography.{name}"), msg: reason },
        other => other.into(),
    })?;
    let fidelity = state_fidelity(&tomo.deviation()?, target)?;
    let zz = prep.coherence.v[bellrelax::spinops::index::ZZ];
    let mut out = CommandOutput::default();
    out.line(format!("target {}: preparation fidelity {:?}, reconstructed fidelity {fidelity:.6}", target.name(), prep.fidelity));
    out.line(format!("<2S1zS2z>(0) = {zz:.6e} (eps1 + eps2 = {:.6e})", eps1 + eps2));
    out.push("tomogram.json", stamp.wrap_json(to_value(&tomo)));
    out.push(
        "tomography.json",
        stamp.wrap_json(json!({
            "target": target.name(),
            "preparation_fidelity": prep.fidelity,
            "reconstructed_fidelity": fidelity,
            "zz0": zz,
            "eps1": eps1,
            "eps2": eps2,
            "options": to_value(&opts),
        })),
    );
    Ok(out)
}
