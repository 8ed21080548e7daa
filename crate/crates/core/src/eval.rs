//! Side-by-side evaluation of the causal method and the attention baseline.
//!
//! Every session is explained by both methods; the per-session records are
//! summarised into the replacement-position histogram, the per-position
//! relative gain, the explanation-size histogram, per-session size
//! differences and mean forward-pass counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::explain::{explain, ExplainConfig, ExplainError, ExplanationResult, Method};
use crate::graph::ItemId;
use crate::model::sem::{synthetic_benchmark, BenchmarkParams, SemModel};
use crate::model::{ModelError, Recommender, Session};
use crate::svg::BarChart;

pub const METHODS: [Method; 2] = [Method::Causal, Method::Attention];

/// One session to explain with the model that produced it.
#[derive(Debug, Clone)]
pub struct EvalCase<M> {
    pub id: String,
    pub session: Session,
    pub model: M,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub session_id: String,
    pub method: Method,
    pub size: Option<usize>,
    pub replacement: Option<ItemId>,
    /// 1-based rank of the replacement in the original top-k.
    pub position: Option<usize>,
    pub forward_passes: usize,
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn from_result(session_id: &str, method: Method, r: &Result<ExplanationResult, ExplainError>) -> Self {
        match r {
            Ok(r) => EvalRecord {
                session_id: session_id.to_string(),
                method,
                size: r.explanation.as_ref().map(|e| e.size()),
                replacement: r.alternative,
                position: r.replacement_position(),
                forward_passes: r.forward_passes,
                error: None,
            },
            Err(e) => EvalRecord {
                session_id: session_id.to_string(),
                method,
                size: None,
                replacement: None,
                position: None,
                forward_passes: 0,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Full results of one session under one method.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub session_id: String,
    pub method: Method,
    pub result: Result<ExplanationResult, ExplainError>,
}

/// Runs both methods on every case, in parallel across sessions.
///
/// Output is ordered by session id, then method.
pub fn eval_outcomes<M: Recommender + Sync>(
    cases: &[EvalCase<M>],
    cfg: &ExplainConfig,
    workers: Option<usize>,
) -> Vec<EvalOutcome> {
    let run = || -> Vec<EvalOutcome> {
        cases
            .par_iter()
            .flat_map_iter(|c| {
                METHODS.into_iter().map(move |method| EvalOutcome {
                    session_id: c.id.clone(),
                    method,
                    result: explain(method, &c.session, &c.model, cfg),
                })
            })
            .collect()
    };
    let mut out = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(run))
            .unwrap_or_else(|_| run()),
        None => run(),
    };
    out.sort_by(|a, b| (&a.session_id, a.method).cmp(&(&b.session_id, b.method)));
    out
}

/// Sample size used for the Fisher-z test on synthetic benchmark sessions.
pub const BENCHMARK_SAMPLE_SIZE: u64 = 1000;

/// Seed of the reference synthetic benchmark.
pub const BENCHMARK_SEED: u64 = 7;

/// Configuration used for synthetic benchmark runs.
pub fn benchmark_config() -> ExplainConfig {
    ExplainConfig {
        sample_size: Some(BENCHMARK_SAMPLE_SIZE),
        ..ExplainConfig::default()
    }
}

/// Seeded synthetic sessions, each paired with its own ground-truth model.
pub fn synthetic_cases(
    seed: u64,
    count: usize,
    params: &BenchmarkParams,
) -> Result<Vec<EvalCase<SemModel>>, ModelError> {
    synthetic_benchmark(seed, count, params)?
        .into_iter()
        .map(|s| {
            Ok(EvalCase {
                model: s.model()?,
                session: Session::new(s.items)?,
                id: s.id,
            })
        })
        .collect()
}

pub fn eval_run<M: Recommender + Sync>(
    cases: &[EvalCase<M>],
    cfg: &ExplainConfig,
    workers: Option<usize>,
) -> Vec<EvalRecord> {
    eval_outcomes(cases, cfg, workers)
        .iter()
        .map(|o| EvalRecord::from_result(&o.session_id, o.method, &o.result))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MethodStats {
    pub sessions: usize,
    pub found: usize,
    pub errors: usize,
    /// Over sessions where both methods found an explanation.
    pub mean_size: Option<f64>,
    /// Over sessions where both methods found a replacement inside the top-k.
    pub mean_position: Option<f64>,
    /// Over sessions without errors.
    pub mean_forward_passes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeDiff {
    pub session_id: String,
    pub attention: usize,
    pub causal: usize,
    /// Attention minus causal; positive favours the causal method.
    pub difference: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub k: usize,
    /// Counts for positions `2..=k`, per method, in [`METHODS`] order.
    pub positions: Vec<(usize, [usize; 2])>,
    /// Sessions with no replacement inside positions `2..=k`.
    pub outside: [usize; 2],
    /// Explanation size histogram.
    pub sizes: Vec<(usize, [usize; 2])>,
    pub size_diffs: Vec<SizeDiff>,
    pub stats: [MethodStats; 2],
    /// Attention mean forward passes divided by the causal mean.
    pub forward_pass_ratio: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn slot(m: Method) -> usize {
    match m {
        Method::Causal => 0,
        Method::Attention => 1,
    }
}

/// `(causal − attention) / attention`, undefined when attention is zero.
pub fn relative_gain(causal: usize, attention: usize) -> Option<f64> {
    (attention > 0).then(|| (causal as f64 - attention as f64) / attention as f64)
}

pub fn summarize(records: &[EvalRecord], k: usize) -> Summary {
    let mut by_session: BTreeMap<&str, [Option<&EvalRecord>; 2]> = BTreeMap::new();
    for r in records {
        by_session.entry(&r.session_id).or_default()[slot(r.method)] = Some(r);
    }

    let mut positions: Vec<(usize, [usize; 2])> = (2..=k.max(1)).map(|p| (p, [0, 0])).collect();
    let mut outside = [0usize; 2];
    let mut size_hist: BTreeMap<usize, [usize; 2]> = BTreeMap::new();
    let mut stats = [MethodStats::default(); 2];
    for r in records {
        let s = slot(r.method);
        stats[s].sessions += 1;
        stats[s].errors += usize::from(r.error.is_some());
        if let Some(size) = r.size {
            stats[s].found += 1;
            size_hist.entry(size).or_default()[s] += 1;
        }
        match r.position.filter(|p| (2..=k).contains(p)) {
            Some(p) => positions[p - 2].1[s] += 1,
            None => outside[s] += 1,
        }
    }

    let both: Vec<[&EvalRecord; 2]> = by_session
        .values()
        .filter_map(|pair| match pair {
            [Some(c), Some(a)] if c.size.is_some() && a.size.is_some() => Some([*c, *a]),
            _ => None,
        })
        .collect();
    let both_in_top_k: Vec<[usize; 2]> = both
        .iter()
        .filter_map(|[c, a]| {
            let in_k = |p: Option<usize>| p.filter(|p| (2..=k).contains(p));
            Some([in_k(c.position)?, in_k(a.position)?])
        })
        .collect();
    for (s, m) in METHODS.iter().enumerate() {
        stats[s].mean_size = mean(both.iter().map(|pair| pair[s].size.unwrap_or(0) as f64));
        stats[s].mean_position = mean(both_in_top_k.iter().map(|pair| pair[s] as f64));
        stats[s].mean_forward_passes = mean(
            records
                .iter()
                .filter(|r| r.method == *m && r.error.is_none())
                .map(|r| r.forward_passes as f64),
        );
    }
    let size_diffs = both
        .iter()
        .map(|[c, a]| {
            let (cs, at) = (c.size.unwrap_or(0), a.size.unwrap_or(0));
            SizeDiff {
                session_id: c.session_id.clone(),
                attention: at,
                causal: cs,
                difference: at as i64 - cs as i64,
            }
        })
        .collect();
    let forward_pass_ratio = match (stats[0].mean_forward_passes, stats[1].mean_forward_passes) {
        (Some(c), Some(a)) if c > 0.0 => Some(a / c),
        _ => None,
    };
    Summary {
        k,
        positions,
        outside,
        sizes: size_hist.into_iter().collect(),
        size_diffs,
        stats,
        forward_pass_ratio,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("session_id,method,size,replacement,position,forward_passes,error\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.session_id),
            r.method,
            opt(r.size),
            opt(r.replacement),
            opt(r.position),
            r.forward_passes,
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

impl Summary {
    pub fn positions_csv(&self) -> String {
        let mut out = String::from("position,causal,attention\n");
        for (p, [c, a]) in &self.positions {
            let _ = writeln!(out, "{p},{c},{a}");
        }
        let _ = writeln!(out, "outside,{},{}", self.outside[0], self.outside[1]);
        out
    }

    pub fn gain_csv(&self) -> String {
        let mut out = String::from("position,causal,attention,gain\n");
        for (p, [c, a]) in &self.positions {
            let _ = writeln!(out, "{p},{c},{a},{}", fixed(relative_gain(*c, *a)));
        }
        out
    }

    pub fn sizes_csv(&self) -> String {
        let mut out = String::from("size,causal,attention\n");
        for (size, [c, a]) in &self.sizes {
            let _ = writeln!(out, "{size},{c},{a}");
        }
        out
    }

    pub fn size_diff_csv(&self) -> String {
        let mut out = String::from("session_id,attention,causal,difference\n");
        for d in &self.size_diffs {
            let _ = writeln!(out, "{},{},{},{}", csv_field(&d.session_id), d.attention, d.causal, d.difference);
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let [c, a] = &self.stats;
        let mut out = String::from("metric,causal,attention\n");
        let _ = writeln!(out, "sessions,{},{}", c.sessions, a.sessions);
        let _ = writeln!(out, "found,{},{}", c.found, a.found);
        let _ = writeln!(out, "errors,{},{}", c.errors, a.errors);
        let _ = writeln!(out, "mean_size,{},{}", fixed(c.mean_size), fixed(a.mean_size));
        let _ = writeln!(out, "mean_position,{},{}", fixed(c.mean_position), fixed(a.mean_position));
        let _ = writeln!(
            out,
            "mean_forward_passes,{},{}",
            fixed(c.mean_forward_passes),
            fixed(a.mean_forward_passes)
        );
        let _ = writeln!(out, "forward_pass_ratio,,{}", fixed(self.forward_pass_ratio));
        out
    }

    fn position_labels(&self) -> Vec<String> {
        self.positions
            .iter()
            .map(|(p, _)| p.to_string())
            .chain(std::iter::once("outside".to_string()))
            .collect()
    }

    pub fn positions_svg(&self) -> String {
        let series = |s: usize| -> Vec<f64> {
            self.positions
                .iter()
                .map(|(_, c)| c[s] as f64)
                .chain(std::iter::once(self.outside[s] as f64))
                .collect()
        };
        BarChart::new("Replacement position in original top-k", "sessions")
            .categories(self.position_labels())
            .series("causal", series(0))
            .series("attention", series(1))
            .render()
    }

    pub fn gain_svg(&self) -> String {
        let gains = self
            .positions
            .iter()
            .map(|(_, [c, a])| relative_gain(*c, *a).unwrap_or(0.0))
            .collect();
        BarChart::new("Relative gain of causal over attention", "gain")
            .categories(self.positions.iter().map(|(p, _)| p.to_string()).collect())
            .series("gain", gains)
            .render()
    }

    pub fn sizes_svg(&self) -> String {
        BarChart::new("Explanation size", "sessions")
            .categories(self.sizes.iter().map(|(s, _)| s.to_string()).collect())
            .series("causal", self.sizes.iter().map(|(_, c)| c[0] as f64).collect())
            .series("attention", self.sizes.iter().map(|(_, c)| c[1] as f64).collect())
            .render()
    }

    pub fn size_diff_svg(&self) -> String {
        let mut diffs: Vec<&SizeDiff> = self.size_diffs.iter().collect();
        diffs.sort_by(|a, b| b.difference.cmp(&a.difference).then(a.session_id.cmp(&b.session_id)));
        BarChart::new("Size difference, attention minus causal", "items")
            .categories(diffs.iter().map(|d| d.session_id.clone()).collect())
            .series("difference", diffs.iter().map(|d| d.difference as f64).collect())
            .hide_category_labels()
            .render()
    }
}

/// Writes every CSV and SVG into `dir` and returns the paths written.
pub fn write_report(dir: &Path, records: &[EvalRecord], k: usize) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let summary = summarize(records, k);
    let files = [
        ("records.csv", records_csv(records)),
        ("positions.csv", summary.positions_csv()),
        ("gain.csv", summary.gain_csv()),
        ("sizes.csv", summary.sizes_csv()),
        ("size_diff.csv", summary.size_diff_csv()),
        ("summary.csv", summary.summary_csv()),
        ("positions.svg", summary.positions_svg()),
        ("gain.svg", summary.gain_svg()),
        ("sizes.svg", summary.sizes_svg()),
        ("size_diff.svg", summary.size_diff_svg()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
