//! Pattern-indexed benchmark with scanning-overhead subtraction.
//!
//! A workload is `n` uniformly drawn order-pattern indexes, each expanded
//! up front into a concrete triple. Every timed loop copies each triple into
//! a scratch buffer, optionally sorts it, and folds the result into a
//! checksum. The "scanning" loop does everything except the sort, so
//! subtracting its time leaves the cost of sorting alone.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, Program};
use crate::kernels::{oracle_sort, sort3_loop, sort3_network, sort3_table, Kernel, Order};
use crate::rng::SplitMix64;
use crate::verifier::enumerate_patterns;

/// Cases per workload unless told otherwise.
pub const DEFAULT_CASES: usize = 32_768;
pub const DEFAULT_REPETITIONS: usize = 9;
pub const MIN_REPETITIONS: usize = 3;
/// Environment variable overriding the repetition count.
pub const REPETITIONS_ENV: &str = "SORT3LAB_REPS";
/// Maps representative values {0, 1, 2} to benchmark values.
pub const VALUE_MAP: [i32; 3] = [10, 20, 30];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("workload needs at least one case")]
    EmptyWorkload,
    #[error("at least {MIN_REPETITIONS} repetitions are required, got {0}")]
    TooFewRepetitions(usize),
    #[error("kernel `{0}` does not sort three values")]
    WrongArity(String),
    #[error("scanning overhead ({scan} ns) is not below the reference timing ({reference} ns); report invalid")]
    InvalidDenominator { reference: f64, scan: f64 },
    #[error("baseline `{0}` was not measured")]
    UnknownBaseline(String),
    #[error("interpreted program failed: {0}")]
    Program(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    pub seed: u64,
    pub n: usize,
    pub indexes: Vec<u8>,
    pub triples: Vec<[i32; 3]>,
}

/// Draws `n` pattern indexes uniformly from `0..13` and materializes them.
pub fn build_workload(seed: u64, n: usize) -> Result<Workload, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyWorkload);
    }
    let patterns = enumerate_patterns();
    let mut rng = SplitMix64::new(seed);
    let indexes: Vec<u8> = (0..n).map(|_| rng.below(patterns.len() as u64) as u8).collect();
    let triples = indexes
        .iter()
        .map(|&i| patterns[i as usize].representative.map(|v| VALUE_MAP[v as usize]))
        .collect();
    Ok(Workload {
        seed,
        n,
        indexes,
        triples,
    })
}

/// Repetitions from [`REPETITIONS_ENV`], or the default.
pub fn repetitions_from_env() -> usize {
    std::env::var(REPETITIONS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_REPETITIONS)
}

/// What a timed loop runs on each case.
pub enum BenchTarget<'a> {
    Scanning,
    Kernel(Kernel),
    /// An interpreted sort3 program.
    Program { name: String, program: &'a Program },
}

impl BenchTarget<'_> {
    pub fn name(&self) -> String {
        match self {
            BenchTarget::Scanning => "scanning".into(),
            BenchTarget::Kernel(k) => k.name().into(),
            BenchTarget::Program { name, .. } => name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSample {
    pub kernel: String,
    pub repetitions: usize,
    pub totals_ns: Vec<u64>,
    /// Minimum over repetitions.
    pub ns: u64,
    pub checksum: u64,
}

/// Position-weighted sum. Only one add sits on the loop-carried chain, so
/// the fold does not hide the cost of the sort before it.
#[inline(always)]
fn fold(acc: u64, t: &[i32; 3]) -> u64 {
    let w = (t[0] as u32 as u64)
        ^ (t[1] as u32 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (t[2] as u32 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    acc.wrapping_add(w)
}

/// Checksum a correct sorter must reproduce on `workload`.
pub fn oracle_checksum(workload: &Workload) -> u64 {
    workload.triples.iter().fold(0, |acc, t| {
        let mut t = *t;
        oracle_sort(&mut t, Order::Signed);
        fold(acc, &t)
    })
}

#[inline(never)]
fn timed<F: FnMut(&mut [i32; 3])>(triples: &[[i32; 3]], mut sort: F) -> (u64, u64) {
    let start = Instant::now();
    let mut acc = 0u64;
    for t in triples {
        let mut buf = black_box(*t);
        sort(&mut buf);
        acc = fold(acc, black_box(&buf));
    }
    let elapsed = start.elapsed().as_nanos() as u64;
    (elapsed.max(1), black_box(acc))
}

/// Times `target` over the whole workload `repetitions` times on the
/// calling thread.
pub fn measure(target: &BenchTarget<'_>, workload: &Workload, repetitions: usize) -> Result<BenchSample, BenchError> {
    if repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions(repetitions));
    }
    if let BenchTarget::Kernel(k) = target {
        if k.arity() != 3 {
            return Err(BenchError::WrongArity(k.name().into()));
        }
    }
    if let BenchTarget::Program { program, .. } = target {
        if program.target.arity() != 3 {
            return Err(BenchError::WrongArity(target.name()));
        }
    }

    let triples = &workload.triples;
    let mut totals = Vec::with_capacity(repetitions);
    let mut checksum = 0;
    for _ in 0..repetitions {
        let (ns, sum) = match target {
            BenchTarget::Scanning => timed(triples, |_| {}),
            BenchTarget::Kernel(Kernel::Network) => timed(triples, sort3_network),
            BenchTarget::Kernel(Kernel::Loop) => timed(triples, sort3_loop),
            BenchTarget::Kernel(Kernel::Table) => timed(triples, |t| sort3_table(t, Order::Signed)),
            BenchTarget::Kernel(Kernel::Oracle) => timed(triples, |t| oracle_sort(t, Order::Signed)),
            BenchTarget::Kernel(Kernel::Sort2) => unreachable!("rejected above"),
            BenchTarget::Program { program, .. } => {
                let mut fault = None;
                let r = timed(triples, |t| match isa::run(program, t, isa::DEFAULT_FUEL) {
                    Ok(out) => t.copy_from_slice(&out.output),
                    Err(e) => fault = Some(e),
                });
                if let Some(e) = fault {
                    return Err(BenchError::Program(e.to_string()));
                }
                r
            }
        };
        totals.push(ns);
        checksum = sum;
    }
    Ok(BenchSample {
        kernel: target.name(),
        repetitions,
        ns: *totals.iter().min().expect("repetitions >= 3"),
        totals_ns: totals,
        checksum,
    })
}

/// `(t_a - t_scan) / (t_b - t_scan)`: how much slower `a` sorts than `b`
/// once the shared scanning cost is removed.
pub fn adjusted_ratio(t_a: f64, t_b: f64, t_scan: f64) -> Result<f64, BenchError> {
    let denominator = t_b - t_scan;
    if denominator <= 0.0 || !denominator.is_finite() {
        return Err(BenchError::InvalidDenominator {
            reference: t_b,
            scan: t_scan,
        });
    }
    Ok((t_a - t_scan) / denominator)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub cpu: String,
    pub frequency: Option<String>,
    pub toolchain: String,
}

impl Platform {
    /// Best-effort description of the current host and build.
    pub fn detect() -> Platform {
        let info = std::fs::read_to_string("/proc/cpuinfo").unwrap_or_default();
        let field = |key: &str| {
            info.lines()
                .find(|l| l.starts_with(key))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        };
        let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
        Platform {
            cpu: field("model name").unwrap_or_else(|| std::env::consts::ARCH.to_string()),
            frequency: field("cpu MHz").map(|mhz| format!("{mhz} MHz")),
            toolchain: format!("{} ({profile})", env!("SORT3LAB_RUSTC_VERSION")),
        }
    }

    pub fn label(&self) -> String {
        match &self.frequency {
            Some(f) => format!("{}, {}, {}", self.toolchain, self.cpu, f),
            None => format!("{}, {}", self.toolchain, self.cpu),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTiming {
    pub name: String,
    pub ns: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub kernel: String,
    pub baseline: String,
    pub ratio: f64,
}

/// One platform row: scanning time, per-kernel times, and each kernel's
/// adjusted ratio against the baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub platform: Platform,
    pub scanning_ns: u64,
    pub kernels: Vec<KernelTiming>,
    pub baseline: Option<String>,
    pub ratios: Vec<RatioEntry>,
}

impl BenchReport {
    /// Builds a report; ratios are `adjusted_ratio(kernel, baseline, scanning)`
    /// for every non-baseline kernel.
    pub fn new(
        platform: Platform,
        scanning_ns: u64,
        kernels: Vec<KernelTiming>,
        baseline: Option<&str>,
    ) -> Result<BenchReport, BenchError> {
        let mut ratios = Vec::new();
        if let Some(base) = baseline {
            let reference = kernels
                .iter()
                .find(|k| k.name == base)
                .ok_or_else(|| BenchError::UnknownBaseline(base.to_string()))?;
            for k in kernels.iter().filter(|k| k.name != base) {
                ratios.push(RatioEntry {
                    kernel: k.name.clone(),
                    baseline: base.to_string(),
                    ratio: adjusted_ratio(k.ns as f64, reference.ns as f64, scanning_ns as f64)?,
                });
            }
        }
        Ok(BenchReport {
            platform,
            scanning_ns,
            kernels,
            baseline: baseline.map(str::to_string),
            ratios,
        })
    }

    pub fn timing(&self, kernel: &str) -> Option<u64> {
        self.kernels.iter().find(|k| k.name == kernel).map(|k| k.ns)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}` (text, csv, json)")),
        }
    }
}

/// `1234567` -> `1,234,567`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (k, c) in digits.chars().enumerate() {
        if k > 0 && (digits.len() - k).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn ratio_header(report: &BenchReport, entry: &RatioEntry) -> String {
    if report.ratios.len() == 1 {
        "Ratio".to_string()
    } else {
        format!("Ratio {}/{}", entry.kernel, entry.baseline)
    }
}

/// Renders one or more reports (one row each) as a table.
pub fn render_reports(reports: &[BenchReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let value = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            };
            value.expect("reports serialize") + "\n"
        }
        ReportFormat::Csv => {
            let baseline = reports
                .first()
                .and_then(|r| r.baseline.clone())
                .unwrap_or_else(|| "none".into());
            let mut out = format!("platform,kernel,scanning_ns,total_ns,adjusted_ratio_vs_{baseline}\n");
            for r in reports {
                for k in &r.kernels {
                    let ratio = if r.baseline.as_deref() == Some(k.name.as_str()) {
                        "1.00".to_string()
                    } else {
                        r.ratios
                            .iter()
                            .find(|e| e.kernel == k.name)
                            .map(|e| format!("{:.2}", e.ratio))
                            .unwrap_or_default()
                    };
                    let _ = writeln!(
                        out,
                        "\"{}\",{},{},{},{}",
                        r.platform.label().replace('"', "'"),
                        k.name,
                        r.scanning_ns,
                        k.ns,
                        ratio
                    );
                }
            }
            out
        }
        ReportFormat::Text => {
            let Some(first) = reports.first() else {
                return String::new();
            };
            let mut header = vec!["Platform".to_string(), "Scanning".to_string()];
            header.extend(first.kernels.iter().map(|k| k.name.clone()));
            header.extend(first.ratios.iter().map(|e| ratio_header(first, e)));

            let mut rows = vec![header];
            for r in reports.iter().filter(|r| !r.kernels.is_empty()) {
                let mut row = vec![r.platform.label(), format!("{}ns", thousands(r.scanning_ns))];
                row.extend(r.kernels.iter().map(|k| format!("{}ns", thousands(k.ns))));
                row.extend(r.ratios.iter().map(|e| format!("{:.2}", e.ratio)));
                rows.push(row);
            }
            let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> = (0..cols)
                .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for row in rows {
                let cells: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(c, s)| {
                        if c == 0 {
                            format!("{s:<w$}", w = widths[c])
                        } else {
                            format!("{s:>w$}", w = widths[c])
                        }
                    })
                    .collect();
                out.push_str(cells.join("  ").trim_end());
                out.push('\n');
            }
            out
        }
    }
}

pub fn render_report(report: &BenchReport, format: ReportFormat) -> String {
    render_reports(std::slice::from_ref(report), format)
}

/// Published timings: (row label, scanning, reference kernel, network kernel, printed ratio).
pub const PUBLISHED_TIMINGS: [(&str, u64, u64, u64, f64); 6] = [
    ("clang 15.0, online run", 75_740, 272_347, 260_922, 1.06),
    ("gcc 12.2, online run", 74_052, 354_085, 299_526, 1.24),
    ("clang 15.0.7, Ryzen 7 1800X, 3.6GHz", 27_083, 106_011, 100_874, 1.07),
    ("gcc 13.1.1, Ryzen 7 1800X, 3.6GHz", 34_425, 106_493, 91_937, 1.25),
    ("clang 15.0.7, Intel i7 10510U, 4.9 GHz", 21_448, 58_029, 52_395, 1.18),
    ("gcc 13.1.1, Intel i7 10510U, 4.9GHz", 28_166, 55_022, 49_050, 1.29),
];

/// Name used for the externally published 17-instruction kernel's column.
pub const REFERENCE_KERNEL: &str = "alphadev";

/// Reports rebuilt from [`PUBLISHED_TIMINGS`], baseline `network`.
pub fn published_reports() -> Vec<BenchReport> {
    PUBLISHED_TIMINGS
        .iter()
        .map(|&(label, scan, reference, network, _)| {
            BenchReport::new(
                Platform {
                    cpu: label.to_string(),
                    frequency: None,
                    toolchain: "published".to_string(),
                },
                scan,
                vec![
                    KernelTiming { name: REFERENCE_KERNEL.into(), ns: reference },
                    KernelTiming { name: "network".into(), ns: network },
                ],
                Some("network"),
            )
            .expect("published timings exceed their scanning overhead")
        })
        .collect()
}
