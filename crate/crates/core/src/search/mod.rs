//! Bounded brute-force search for short sorting programs.
//!
//! Candidates are enumerated by iterative deepening in template order. Each
//! straight-line prefix is simulated incrementally on the test vectors, so a
//! leaf costs one instruction per vector. Pruning:
//!
//! * `canonical_registers`: registers must first appear in index order.
//! * `dead_code`: no instruction may write only dead resources.
//! * `prefix_memo`: a prefix whose machine state over every test vector was
//!   already reached by a strictly shorter prefix is dropped.
//! * `test_vector_filter`: leaves are tried on the pattern vectors first.
//!
//! None of these can remove a minimal solution: a minimal program has no dead
//! instruction and no prefix that a shorter one reproduces.

mod canon;
mod engine;
mod refute;
mod vocab;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Program, Target};
use crate::kernels::Order;
use crate::par::Parallelism;
use crate::verifier::{verify_sorter_with, Domain, Subject, VerifyOptions, VerifyReport};

pub use canon::canonicalize;
pub use refute::{refutation_summary, refutation_summary_for, ListingCheck, RefutationSummary, CLAIMED_MINIMUM};
pub use vocab::Shape;

/// Upper bound on entries kept in the prefix memo.
pub const MEMO_CAPACITY: usize = 1 << 22;
/// Longest program the searcher will enumerate.
pub const MAX_SEARCH_LEN: usize = 32;
pub const CURSOR_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub seconds: Option<f64>,
    pub candidates: Option<u64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            seconds: Some(60.0),
            candidates: None,
        }
    }
}

impl Budget {
    pub const UNLIMITED: Budget = Budget {
        seconds: None,
        candidates: None,
    };

    pub fn seconds(s: f64) -> Budget {
        Budget {
            seconds: Some(s),
            candidates: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pruning {
    pub canonical_registers: bool,
    pub dead_code: bool,
    pub prefix_memo: bool,
    pub test_vector_filter: bool,
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning::ALL
    }
}

impl Pruning {
    pub const ALL: Pruning = Pruning {
        canonical_registers: true,
        dead_code: true,
        prefix_memo: true,
        test_vector_filter: true,
    };
    pub const NONE: Pruning = Pruning {
        canonical_registers: false,
        dead_code: false,
        prefix_memo: false,
        test_vector_filter: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PruneReason {
    CanonicalRegisters,
    DeadCode,
    PrefixMemo,
    TestVectorFilter,
    Fault,
    UndefinedRead,
}

impl PruneReason {
    pub const ALL: [PruneReason; 6] = [
        PruneReason::CanonicalRegisters,
        PruneReason::DeadCode,
        PruneReason::PrefixMemo,
        PruneReason::TestVectorFilter,
        PruneReason::Fault,
        PruneReason::UndefinedRead,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            PruneReason::CanonicalRegisters => "canonical_registers",
            PruneReason::DeadCode => "dead_code",
            PruneReason::PrefixMemo => "prefix_memo",
            PruneReason::TestVectorFilter => "test_vector_filter",
            PruneReason::Fault => "memory_fault",
            PruneReason::UndefinedRead => "undefined_read",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub target: Target,
    pub ordering: Order,
    pub vocabulary: Vec<Shape>,
    pub max_len: usize,
    /// Dword data registers `r0..`.
    pub registers: usize,
    /// Qword index registers `x0..`, only used by table and carry shapes.
    pub index_registers: usize,
    /// Values for the `mov $k, %r` shape.
    pub immediates: Vec<i64>,
    /// Adds `jle`/`jmp` to every absolute position.
    pub allow_branches: bool,
    pub budget: Budget,
    pub prune: Pruning,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig::new(Target::Sort2)
    }
}

impl SearchConfig {
    pub fn new(target: Target) -> SearchConfig {
        SearchConfig {
            target,
            ordering: Order::Signed,
            vocabulary: Shape::DEFAULT.to_vec(),
            max_len: match target {
                Target::Sort2 => 8,
                Target::Sort3 => 13,
            },
            registers: match target {
                Target::Sort2 => 3,
                Target::Sort3 => 4,
            },
            index_registers: 2,
            immediates: vec![0, 1],
            allow_branches: false,
            budget: Budget::default(),
            prune: Pruning::ALL,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.max_len == 0 || self.max_len > MAX_SEARCH_LEN {
            return bad(format!("max_len must be in 1..={MAX_SEARCH_LEN}, got {}", self.max_len));
        }
        if self.vocabulary.is_empty() {
            return bad("vocabulary is empty".into());
        }
        if self.registers == 0 || self.registers > 8 {
            return bad(format!("registers must be in 1..=8, got {}", self.registers));
        }
        if self.uses_index_registers() && !(1..=4).contains(&self.index_registers) {
            return bad(format!(
                "index_registers must be in 1..=4 for this vocabulary, got {}",
                self.index_registers
            ));
        }
        if self.vocabulary.contains(&Shape::MovImmReg) && self.immediates.is_empty() {
            return bad("mov-i-r needs at least one immediate".into());
        }
        if let Some(s) = self.budget.seconds {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("budget seconds must be positive, got {s}"));
            }
        }
        if self.budget.candidates == Some(0) {
            return bad("candidate budget must be positive".into());
        }
        Ok(())
    }

    /// Equal up to `max_len`, budget and parallelism, so a cursor from one
    /// can resume the other.
    pub fn same_space(&self, other: &SearchConfig) -> bool {
        let strip = |c: &SearchConfig| SearchConfig {
            max_len: 1,
            budget: Budget::UNLIMITED,
            parallelism: Parallelism::Sequential,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    fn uses_index_registers(&self) -> bool {
        self.vocabulary.iter().any(|s| s.uses_index_registers())
    }

    pub(crate) fn effective_index_registers(&self) -> usize {
        if self.uses_index_registers() {
            self.index_registers
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("invalid cursor: {0}")]
    Cursor(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoundProgram {
    pub program: Program,
    pub instruction_count: usize,
    pub branchless: bool,
}

/// Resume point, written only at length-level boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCursor {
    pub version: u32,
    pub config: SearchConfig,
    /// First length that has not been fully searched.
    pub next_length: usize,
    pub candidates_enumerated: u64,
    pub candidates_pruned_by_reason: BTreeMap<String, u64>,
    pub elapsed_seconds: f64,
}

impl SearchCursor {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cursor serializes")
    }

    pub fn from_json(text: &str) -> Result<SearchCursor, SearchError> {
        let c: SearchCursor = serde_json::from_str(text).map_err(|e| SearchError::Cursor(e.to_string()))?;
        if c.version != CURSOR_VERSION {
            return Err(SearchError::Cursor(format!("unsupported version {}", c.version)));
        }
        if c.next_length == 0 {
            return Err(SearchError::Cursor("next_length must be at least 1".into()));
        }
        c.config.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub config: SearchConfig,
    /// Minimal-length correct programs, canonical, in enumeration order.
    pub found: Vec<FoundProgram>,
    pub minimal_length: Option<usize>,
    /// Lengths `1..=levels_completed` were fully covered.
    pub levels_completed: usize,
    pub candidates_enumerated: u64,
    pub candidates_pruned_by_reason: BTreeMap<String, u64>,
    pub exhausted: bool,
    /// Fast-path hits that failed re-verification. Always zero unless the
    /// incremental evaluator and the interpreter disagree.
    pub discrepancies: usize,
    pub elapsed_seconds: f64,
    pub cursor: SearchCursor,
}

impl SearchResult {
    pub fn pruned_total(&self) -> u64 {
        self.candidates_pruned_by_reason.values().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let found: Vec<serde_json::Value> = self
            .found
            .iter()
            .map(|f| {
                serde_json::json!({
                    "program": f.program.render(),
                    "instruction_count": f.instruction_count,
                    "branchless": f.branchless,
                })
            })
            .collect();
        serde_json::json!({
            "config": self.config,
            "found": found,
            "minimal_length": self.minimal_length,
            "levels_completed": self.levels_completed,
            "candidates_enumerated": self.candidates_enumerated,
            "candidates_pruned_by_reason": self.candidates_pruned_by_reason,
            "exhausted": self.exhausted,
            "discrepancies": self.discrepancies,
            "elapsed_seconds": self.elapsed_seconds,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        out.push_str(&format!(
            "search {} ({}) max_len {} registers {} vocabulary {}\n",
            c.target,
            c.ordering,
            c.max_len,
            c.registers,
            c.vocabulary.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
        ));
        out.push_str(&format!(
            "candidates {}  pruned {}  levels completed {}  exhausted {}  {:.1}s\n",
            self.candidates_enumerated,
            self.pruned_total(),
            self.levels_completed,
            self.exhausted,
            self.elapsed_seconds
        ));
        for (k, v) in &self.candidates_pruned_by_reason {
            out.push_str(&format!("  pruned {k}: {v}\n"));
        }
        match self.minimal_length {
            Some(n) => out.push_str(&format!("minimal length {n}, {} program(s)\n", self.found.len())),
            None if self.exhausted => out.push_str(&format!(
                "no programs; space exhausted up to length {}\n",
                self.levels_completed
            )),
            None => out.push_str(&format!(
                "no programs; budget ran out during length {} (exhausted=false)\n",
                self.levels_completed + 1
            )),
        }
        for (k, f) in self.found.iter().enumerate() {
            out.push_str(&format!("--- program {} ({} instructions)\n", k + 1, f.instruction_count));
            out.push_str(&f.program.render());
        }
        out
    }
}

/// Snapshot for progress lines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub length: usize,
    pub candidates: u64,
    pub pruned: u64,
    pub elapsed_seconds: f64,
}

impl Progress {
    pub fn rate(&self) -> f64 {
        if self.elapsed_seconds > 0.0 {
            self.candidates as f64 / self.elapsed_seconds
        } else {
            0.0
        }
    }

    pub fn pruned_percent(&self) -> f64 {
        let total = self.candidates + self.pruned;
        if total == 0 {
            0.0
        } else {
            100.0 * self.pruned as f64 / total as f64
        }
    }

    pub fn line(&self) -> String {
        format!(
            "length {}  {} candidates  {:.0} cand/s  pruned {:.1}%  {:.1}s",
            self.length,
            self.candidates,
            self.rate(),
            self.pruned_percent(),
            self.elapsed_seconds
        )
    }
}

/// Optional observers for a search run.
#[derive(Default)]
pub struct SearchHooks<'a> {
    pub progress: Option<&'a (dyn Fn(&Progress) + Sync)>,
    pub progress_interval: Option<Duration>,
    /// Called after each completed length level that found nothing.
    pub on_level: Option<&'a mut dyn FnMut(&SearchCursor)>,
}

pub fn search(config: &SearchConfig) -> Result<SearchResult, SearchError> {
    search_with(config, None, SearchHooks::default())
}

/// Continues a search from `cursor` with the cursor's config.
pub fn resume(cursor: &SearchCursor) -> Result<SearchResult, SearchError> {
    search_with(&cursor.config, Some(cursor), SearchHooks::default())
}

pub fn search_with(
    config: &SearchConfig,
    resume: Option<&SearchCursor>,
    hooks: SearchHooks<'_>,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    engine::run(config, resume, hooks)
}

impl fmt::Display for SearchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn parse_vocabulary(text: &str) -> Result<Vec<Shape>, String> {
    match text.trim() {
        "default" => Ok(Shape::DEFAULT.to_vec()),
        "all" => Ok(Shape::ALL.to_vec()),
        list => list.split(',').map(|s| Shape::from_str(s.trim())).collect(),
    }
}

/// Fuel allowed per run of a candidate.
pub fn candidate_fuel(len: usize) -> u64 {
    4 * len.max(1) as u64
}

/// Domains a candidate must pass: patterns, grid(0,3) and extremes.
pub fn check_domains() -> [Domain; 3] {
    [Domain::Patterns, Domain::Grid { lo: 0, hi: 3 }, Domain::Extremes]
}

/// Full report behind [`check_candidate`].
pub fn check_candidate_report(program: &Program, target: Target, ordering: Order) -> VerifyReport {
    let subject = Subject::Program {
        name: "candidate".into(),
        program,
    };
    let opts = VerifyOptions {
        fuel: candidate_fuel(program.len()),
        parallelism: Parallelism::Sequential,
    };
    let mut reports = Vec::new();
    for domain in check_domains() {
        let report = verify_sorter_with(&subject, &domain, ordering, opts);
        let failed = !report.passed();
        reports.push(report);
        if failed {
            break;
        }
    }
    let mut merged = VerifyReport::merge(reports);
    if program.target != target {
        merged.verdict = crate::verifier::Verdict::Fail;
    }
    merged
}

/// True if the program may read a register other than `p`, or the flags,
/// before writing it. Such programs depend on undefined entry state.
pub fn reads_undefined(program: &Program) -> bool {
    let instrs: Vec<&crate::isa::Instruction> = program.instructions.iter().collect();
    vocab::reads_undefined(&instrs)
}

/// Pattern prefilter, then full verification. Non-termination within
/// `4 * len` instructions and reads of undefined registers or flags count
/// as failure.
pub fn check_candidate(program: &Program, target: Target, ordering: Order) -> bool {
    program.target == target
        && !reads_undefined(program)
        && check_candidate_report(program, target, ordering).passed()
}

#[cfg(test)]
mod tests;
