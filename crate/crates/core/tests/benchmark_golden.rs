//! The reference synthetic benchmark reproduces its recorded per-session results.
//!
//! Regenerate with `UPDATE_GOLDEN=1 cargo test -p causal-attn --test benchmark_golden`.

use std::path::PathBuf;

use causal_attn::eval::{benchmark_config, eval_run, records_csv, summarize, synthetic_cases, BENCHMARK_SEED};
use causal_attn::model::sem::BenchmarkParams;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/benchmark_records.csv")
}

#[test]
fn benchmark_records_match_golden_file() {
    let cases = synthetic_cases(BENCHMARK_SEED, 100, &BenchmarkParams::default()).unwrap();
    let records = eval_run(&cases, &benchmark_config(), Some(2));
    let csv = records_csv(&records);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &csv).unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(csv, golden);

    let s = summarize(&records, 5);
    let [causal, attention] = &s.stats;
    assert_eq!(causal.sessions, 100);
    assert_eq!(causal.found, 58);
    assert_eq!(attention.found, 65);
}
