//! Fuzz harnesses for every text decoder. Each takes raw bytes, must never
//! panic on rejection, and checks that accepted input survives a
//! serialize/parse round trip unchanged. The `fuzz/` targets call these, and
//! the checked-in corpus seeds are replayed through them by `cargo test`.

use bellrelax::fitting::RateSet;
use bellrelax::measure::Tomogram;
use bellrelax::sequences::SequenceProgram;
use bellrelax::series::Series;
use bellrelax_cli::config::RunConfig;
use bellrelax_cli::literature::{evaluate, parse_literature};
use bellrelax_cli::RunManifest;

/// Harness names, matching the `fuzz/fuzz_targets/*.rs` files and `fuzz/corpus/*` directories.
pub const TARGETS: [&str; 7] =
    ["config", "program", "series_csv", "rateset_json", "tomogram_json", "literature_csv", "manifest_json"];

/// Dispatch by harness name.
pub fn run(target: &str, data: &[u8]) {
    match target {
        "config" => config(data),
        "program" => program(data),
        "series_csv" => series_csv(data),
        "rateset_json" => rateset_json(data),
        "tomogram_json" => tomogram_json(data),
        "literature_csv" => literature_csv(data),
        "manifest_json" => manifest_json(data),
        other => panic!("unknown harness `{other}`"),
    }
}

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn config(data: &[u8]) {
    let Some(Ok(c)) = text(data).map(RunConfig::parse) else { return };
    let s = c.serialize();
    let back = RunConfig::parse(&s).unwrap_or_else(|e| panic!("canonical form rejected: {e}\n{s}"));
    assert_eq!(back, c);
    assert_eq!(back.serialize(), s);
}

pub fn program(data: &[u8]) {
    let Some(Ok(p)) = text(data).map(SequenceProgram::parse) else { return };
    let s = p.to_string();
    let back = SequenceProgram::parse(&s).unwrap_or_else(|e| panic!("rendered program rejected: {e}\n{s}"));
    assert_eq!(back, p);
}

pub fn series_csv(data: &[u8]) {
    let Some(Ok(s)) = text(data).map(Series::from_csv) else { return };
    let csv = s.to_csv();
    let back = Series::from_csv(&csv).unwrap_or_else(|e| panic!("rendered series rejected: {e}"));
    assert_eq!(back, s);
}

pub fn rateset_json(data: &[u8]) {
    let Some(Ok(r)) = text(data).map(RateSet::from_json) else { return };
    let back = RateSet::from_json(&r.to_json()).unwrap_or_else(|e| panic!("rendered rate set rejected: {e}"));
    assert_eq!(back, r);
    let _ = (r.diagonal(), r.diagonal_err());
}

pub fn tomogram_json(data: &[u8]) {
    let Some(Ok(t)) = text(data).map(Tomogram::from_json) else { return };
    let back = Tomogram::from_json(&t.to_json()).unwrap_or_else(|e| panic!("rendered tomogram rejected: {e}"));
    assert_eq!(back, t);
    let _ = t.deviation();
}

pub fn literature_csv(data: &[u8]) {
    let Some(Ok(rows)) = text(data).map(parse_literature) else { return };
    let table = evaluate(&rows);
    assert_eq!(table.rows.len() + table.notices.len(), rows.len());
    let _ = table.to_csv();
}

pub fn manifest_json(data: &[u8]) {
    let Ok(m) = serde_json::from_slice::<RunManifest>(data) else { return };
    let back: RunManifest = serde_json::from_str(&m.to_json()).expect("rendered manifest parses");
    assert_eq!(back, m);
}
