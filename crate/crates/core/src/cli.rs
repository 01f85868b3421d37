//! Command-line front end. [`run`] takes the arguments and output streams
//! so tests can drive it in-process.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bench::{
    self, build_workload, measure, oracle_checksum, published_reports, render_report, render_reports, BenchError,
    BenchReport, BenchTarget, KernelTiming, Platform, ReportFormat, PUBLISHED_TIMINGS,
};
use crate::isa::{self, assets, parse_program, Program, RunError, Target};
use crate::kernels::{Kernel, Order};
use crate::par::Parallelism;
use crate::search::{
    self, parse_vocabulary, refutation_summary_for, Budget, Pruning, SearchConfig, SearchCursor, SearchHooks,
};
use crate::verifier::{verify_sorter, Domain, Subject, VerifyReport};

/// Process exit codes. Stable: scripts depend on them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Usage = 2,
    Runtime = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(name = "sort3lab", version, about = "Execute, verify, time and search tiny x86-64 sorting kernels")]
pub struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Interpret a program on one input.
    Run(RunArgs),
    /// Check a kernel or program against the sorting oracle.
    Verify(VerifyArgs),
    /// Time kernels on a seeded pattern workload.
    Bench(BenchArgs),
    /// Enumerate short sorting programs.
    Search(SearchArgs),
    /// Verify the two listings and their instruction counts.
    Refute(RefuteArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// `listing1`, `listing2`, or a path.
    pub program: String,
    /// Comma-separated input, e.g. `3,1,2`.
    #[arg(long = "in", value_name = "VALUES", allow_hyphen_values = true)]
    pub input: String,
    #[arg(long, default_value_t = isa::DEFAULT_FUEL)]
    pub fuel: u64,
    /// Order used to report whether the output is sorted.
    #[arg(long)]
    pub ordering: Option<Order>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Kernel name (network, loop, table, oracle, sort2), `listing1`,
    /// `listing2`, or a path.
    pub subject: Option<String>,
    /// External program file; overrides SUBJECT.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// patterns, extremes, grid:LO:HI or random:SEED:N. Repeatable.
    #[arg(long = "domain")]
    pub domains: Vec<Domain>,
    #[arg(long)]
    pub ordering: Option<Order>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated kernel names.
    #[arg(long, default_value = "network,loop,table", value_delimiter = ',')]
    pub kernels: Vec<String>,
    /// Extra interpreted sort3 programs to time. Repeatable.
    #[arg(long = "program")]
    pub programs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = bench::DEFAULT_CASES)]
    pub n: usize,
    /// Defaults to $SORT3LAB_REPS or 9.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Kernel the ratios are taken against. Defaults to the first kernel.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
    /// Recompute the published ratios from the published timings.
    #[arg(long = "check-paper-ratios")]
    pub check_published: bool,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, default_value = "sort2")]
    pub target: Target,
    #[arg(long, default_value = "signed")]
    pub ordering: Order,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Dword data registers.
    #[arg(long)]
    pub registers: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub index_registers: usize,
    /// `default`, `all`, or comma-separated shapes such as `mov-m-r,cmovg-r-r`.
    #[arg(long, default_value = "default")]
    pub vocab: String,
    /// Immediates for the mov-i-r shape.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
    pub immediates: Vec<i64>,
    /// Straight-line programs only (the default).
    #[arg(long, conflicts_with = "allow_branches")]
    pub branchless: bool,
    /// Add jle/jmp to every position.
    #[arg(long)]
    pub allow_branches: bool,
    /// Wall-clock limit such as `60s`, `2m`, `500ms` or plain seconds.
    #[arg(long, value_parser = parse_duration, default_value = "60s")]
    pub budget: Duration,
    /// Stop after this many candidates.
    #[arg(long)]
    pub max_candidates: Option<u64>,
    /// Disable every pruning switch.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long)]
    pub no_canonical: bool,
    #[arg(long)]
    pub no_dead_code: bool,
    #[arg(long)]
    pub no_memo: bool,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub sequential: bool,
    /// Continue from a cursor file. Search-space flags come from the cursor.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a cursor after every completed length and at the end.
    #[arg(long)]
    pub cursor_out: Option<PathBuf>,
    /// No progress lines on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct RefuteArgs {
    /// Replace the bundled Listing 1.
    #[arg(long)]
    pub listing1: Option<PathBuf>,
    /// Replace the bundled Listing 2.
    #[arg(long)]
    pub listing2: Option<PathBuf>,
}

pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let (num, scale) = if let Some(v) = s.strip_suffix("ms") {
        (v, 1e-3)
    } else if let Some(v) = s.strip_suffix('s') {
        (v, 1.0)
    } else if let Some(v) = s.strip_suffix('m') {
        (v, 60.0)
    } else if let Some(v) = s.strip_suffix('h') {
        (v, 3600.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("bad duration `{s}`"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("duration must be positive, got `{s}`"));
    }
    Ok(Duration::from_secs_f64(v * scale))
}

/// An error carrying the exit status it maps to.
#[derive(Debug)]
struct Fail(ExitStatus, String);

fn usage(msg: impl Into<String>) -> Fail {
    Fail(ExitStatus::Usage, msg.into())
}

fn runtime(msg: impl Into<String>) -> Fail {
    Fail(ExitStatus::Runtime, msg.into())
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut (dyn Write + Send),
    json: bool,
    color: bool,
}

impl Io<'_> {
    fn print(&mut self, text: &str) {
        let _ = self.out.write_all(text.as_bytes());
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(self.err, "{text}");
    }

    fn print_json(&mut self, v: &serde_json::Value) {
        let _ = writeln!(self.out, "{}", serde_json::to_string_pretty(v).expect("json value"));
    }

    /// Colors `pass`/`FAIL` words when writing to a terminal.
    fn paint(&self, text: String) -> String {
        if !self.color {
            return text;
        }
        text.replace(": pass ", ": \x1b[32mpass\x1b[0m ")
            .replace(": FAIL ", ": \x1b[31mFAIL\x1b[0m ")
    }
}

/// Source of a program plus the name it is reported under.
struct Loaded {
    name: String,
    program: Program,
    is_listing2: bool,
}

fn load_program(spec: &str) -> Result<Loaded, Fail> {
    let (name, text) = match assets::embedded(spec) {
        Some(text) => (spec.trim_end_matches(".s").to_string(), text.to_string()),
        None => {
            let text = std::fs::read_to_string(spec).map_err(|e| usage(format!("cannot read `{spec}`: {e}")))?;
            let stem = Path::new(spec)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (stem, text)
        }
    };
    let program = parse_program(&text).map_err(|e| usage(format!("{spec}: {e}")))?;
    Ok(Loaded {
        is_listing2: name == "listing2",
        name,
        program,
    })
}

fn default_ordering(io: &mut Io<'_>, given: Option<Order>, is_listing2: bool) -> Order {
    match given {
        Some(o) => o,
        None if is_listing2 => {
            io.note("note: listing2 sorts in unsigned order (its sbb/adc index uses the carry flag); using --ordering unsigned");
            Order::Unsigned
        }
        None => Order::Signed,
    }
}

fn parse_input(text: &str, arity: usize) -> Result<Vec<i32>, Fail> {
    let values: Result<Vec<i32>, _> = text.split(',').map(|v| v.trim().parse::<i32>()).collect();
    let values = values.map_err(|e| usage(format!("bad --in `{text}`: {e}")))?;
    if values.len() != arity {
        return Err(usage(format!("--in needs {arity} values, got {}", values.len())));
    }
    Ok(values)
}

fn cmd_run(io: &mut Io<'_>, args: &RunArgs) -> Result<ExitStatus, Fail> {
    let loaded = load_program(&args.program)?;
    let ordering = default_ordering(io, args.ordering, loaded.is_listing2);
    let input = parse_input(&args.input, loaded.program.target.arity())?;
    let outcome = match isa::run(&loaded.program, &input, args.fuel) {
        Ok(o) => o,
        Err(e @ RunError::FuelExhausted { .. }) => return Err(runtime(format!("{}: {e}", loaded.name))),
        Err(RunError::Fault(e)) => return Err(runtime(format!("{}: memory fault: {e}", loaded.name))),
    };
    let sorted = outcome.output.windows(2).all(|w| !ordering.less(w[1], w[0]));
    if io.json {
        io.print_json(&json!({
            "program": loaded.name,
            "input": input,
            "output": outcome.output,
            "executed": outcome.executed,
            "halt": outcome.halt,
            "ordering": ordering,
            "sorted": sorted,
        }));
    } else {
        let values: Vec<String> = outcome.output.iter().map(i32::to_string).collect();
        io.print(&format!(
            "{}\nretired {} instructions; halt: fell off end; sorted ({ordering}): {}\n",
            values.join(" "),
            outcome.executed,
            if sorted { "yes" } else { "no" }
        ));
    }
    Ok(ExitStatus::Success)
}

fn default_domains() -> Vec<Domain> {
    vec![Domain::Patterns, Domain::Grid { lo: -2, hi: 2 }, Domain::Extremes]
}

fn cmd_verify(io: &mut Io<'_>, args: &VerifyArgs) -> Result<ExitStatus, Fail> {
    let domains = if args.domains.is_empty() {
        default_domains()
    } else {
        args.domains.clone()
    };
    let spec = match (&args.program, &args.subject) {
        (Some(path), _) => path.to_string_lossy().into_owned(),
        (None, Some(s)) => s.clone(),
        (None, None) => return Err(usage("verify needs a SUBJECT or --program")),
    };
    let kernel = if args.program.is_none() {
        Kernel::from_name(&spec)
    } else {
        None
    };
    let loaded = match kernel {
        Some(_) => None,
        None => Some(load_program(&spec)?),
    };
    let is_listing2 = loaded.as_ref().is_some_and(|l| l.is_listing2);
    let ordering = default_ordering(io, args.ordering, is_listing2);
    let subject = match (&kernel, &loaded) {
        (Some(k), _) => Subject::Kernel(*k),
        (None, Some(l)) => Subject::Program {
            name: l.name.clone(),
            program: &l.program,
        },
        (None, None) => unreachable!("one of kernel or program is set"),
    };
    let reports: Vec<VerifyReport> = domains.iter().map(|d| verify_sorter(&subject, d, ordering)).collect();
    let passed = reports.iter().all(VerifyReport::passed);
    if io.json {
        let merged = VerifyReport::merge(reports.clone());
        io.print_json(&json!({ "subject": subject.name(), "passed": passed, "reports": reports, "summary": merged }));
    } else {
        for r in &reports {
            let text = io.paint(r.to_text());
            io.print(&text);
        }
    }
    Ok(if passed { ExitStatus::Success } else { ExitStatus::Failure })
}

fn bench_error(e: BenchError) -> Fail {
    runtime(e.to_string())
}

fn cmd_bench(io: &mut Io<'_>, args: &BenchArgs) -> Result<ExitStatus, Fail> {
    let format = if io.json { ReportFormat::Json } else { args.format };
    if args.check_published {
        return check_published_ratios(io, format);
    }
    let reps = args.reps.unwrap_or_else(bench::repetitions_from_env);
    let workload = build_workload(args.seed, args.n).map_err(bench_error)?;
    let expected = oracle_checksum(&workload);

    let mut kernels = Vec::new();
    for name in args.kernels.iter().filter(|n| !n.is_empty()) {
        let k = Kernel::from_name(name).ok_or_else(|| usage(format!("unknown kernel `{name}`")))?;
        kernels.push(k);
    }
    let programs: Vec<Loaded> = args
        .programs
        .iter()
        .map(|p| load_program(&p.to_string_lossy()))
        .collect::<Result<_, _>>()?;
    if kernels.is_empty() && programs.is_empty() {
        return Err(usage("nothing to bench: give --kernels or --program"));
    }
    let mut targets: Vec<BenchTarget<'_>> = kernels.iter().map(|&k| BenchTarget::Kernel(k)).collect();
    targets.extend(programs.iter().map(|l| BenchTarget::Program {
        name: l.name.clone(),
        program: &l.program,
    }));

    let scan = measure(&BenchTarget::Scanning, &workload, reps).map_err(bench_error)?;
    let mut timings = Vec::new();
    let mut wrong = Vec::new();
    for t in &targets {
        let sample = measure(t, &workload, reps).map_err(bench_error)?;
        if sample.checksum != expected {
            wrong.push(sample.kernel.clone());
        }
        timings.push(KernelTiming {
            name: sample.kernel,
            ns: sample.ns,
        });
    }
    let baseline = args.baseline.clone().unwrap_or_else(|| timings[0].name.clone());
    let report = BenchReport::new(Platform::detect(), scan.ns, timings, Some(&baseline)).map_err(|e| match e {
        BenchError::UnknownBaseline(_) => usage(e.to_string()),
        other => bench_error(other),
    })?;
    io.print(&render_report(&report, format));
    if !wrong.is_empty() {
        io.note(&format!(
            "error: sorted-output checksum differs from the oracle for: {}",
            wrong.join(", ")
        ));
        return Ok(ExitStatus::Failure);
    }
    if format == ReportFormat::Text {
        io.note(&format!(
            "workload: seed {} n {}; minimum of {reps} repetitions; checksum {expected:#018x} matches the oracle",
            workload.seed, workload.n
        ));
    }
    Ok(ExitStatus::Success)
}

fn check_published_ratios(io: &mut Io<'_>, format: ReportFormat) -> Result<ExitStatus, Fail> {
    let reports = published_reports();
    let mut rows = Vec::new();
    let mut ok = true;
    for (report, &(label, _, _, _, printed)) in reports.iter().zip(PUBLISHED_TIMINGS.iter()) {
        let ratio = report.ratios[0].ratio;
        let matches = format!("{ratio:.2}") == format!("{printed:.2}");
        ok &= matches;
        rows.push((label, ratio, printed, matches));
    }
    match format {
        ReportFormat::Json => io.print_json(&json!({
            "reports": reports,
            "checks": rows.iter().map(|&(label, ratio, printed, matches)| json!({
                "platform": label,
                "recomputed": (ratio * 100.0).round() / 100.0,
                "published": printed,
                "matches": matches,
            })).collect::<Vec<_>>(),
            "passed": ok,
        })),
        _ => {
            io.print(&render_reports(&reports, format));
            if format == ReportFormat::Text {
                io.print("\n");
                for (label, ratio, printed, matches) in &rows {
                    io.print(&format!(
                        "{label}: recomputed {ratio:.2}, published {printed:.2}: {}\n",
                        if *matches { "match" } else { "MISMATCH" }
                    ));
                }
            }
        }
    }
    Ok(if ok { ExitStatus::Success } else { ExitStatus::Failure })
}

fn search_config(args: &SearchArgs) -> Result<SearchConfig, Fail> {
    let mut cfg = SearchConfig::new(args.target);
    cfg.ordering = args.ordering;
    if let Some(n) = args.max_len {
        cfg.max_len = n;
    }
    if let Some(r) = args.registers {
        cfg.registers = r;
    }
    cfg.index_registers = args.index_registers;
    cfg.vocabulary = parse_vocabulary(&args.vocab).map_err(usage)?;
    cfg.immediates = args.immediates.clone();
    cfg.allow_branches = args.allow_branches;
    cfg.budget = Budget {
        seconds: Some(args.budget.as_secs_f64()),
        candidates: args.max_candidates,
    };
    cfg.prune = if args.no_prune {
        Pruning::NONE
    } else {
        Pruning {
            canonical_registers: !args.no_canonical,
            dead_code: !args.no_dead_code,
            prefix_memo: !args.no_memo,
            test_vector_filter: !args.no_filter,
        }
    };
    cfg.parallelism = if args.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    Ok(cfg)
}

fn write_cursor(path: &Path, cursor: &SearchCursor) -> Result<(), Fail> {
    std::fs::write(path, cursor.to_json()).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_search(io: &mut Io<'_>, args: &SearchArgs) -> Result<ExitStatus, Fail> {
    let mut cfg = search_config(args)?;
    let cursor = match &args.resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let c = SearchCursor::from_json(&text).map_err(|e| usage(e.to_string()))?;
            let (max_len, budget, par) = (cfg.max_len, cfg.budget, cfg.parallelism);
            cfg = c.config.clone();
            if args.max_len.is_some() {
                cfg.max_len = max_len;
            }
            cfg.budget = budget;
            cfg.parallelism = par;
            Some(c)
        }
        None => None,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let err = std::sync::Mutex::new(&mut *io.err);
    let report = |p: &search::Progress| {
        if let Ok(mut e) = err.lock() {
            let _ = writeln!(e, "{}", p.line());
        }
    };
    let mut write_error = None;
    let mut on_level = |c: &SearchCursor| {
        if let Some(path) = &args.cursor_out {
            if let Err(e) = write_cursor(path, c) {
                write_error.get_or_insert(e);
            }
        }
    };
    let hooks = SearchHooks {
        progress: if args.quiet { None } else { Some(&report) },
        progress_interval: Some(Duration::from_secs(5)),
        on_level: Some(&mut on_level),
    };
    let result = search::search_with(&cfg, cursor.as_ref(), hooks).map_err(|e| usage(e.to_string()))?;
    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some(path) = &args.cursor_out {
        write_cursor(path, &result.cursor)?;
    }
    if io.json {
        io.print_json(&result.to_json());
    } else {
        io.print(&result.to_text());
    }
    Ok(if result.discrepancies == 0 {
        ExitStatus::Success
    } else {
        ExitStatus::Failure
    })
}

fn cmd_refute(io: &mut Io<'_>, args: &RefuteArgs) -> Result<ExitStatus, Fail> {
    let load = |path: &Option<PathBuf>, bundled: &str| -> Result<Program, String> {
        match path {
            None => Ok(parse_program(bundled).expect("bundled listing parses")),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                parse_program(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    };
    let (l1, l2) = match (load(&args.listing1, assets::LISTING1), load(&args.listing2, assets::LISTING2)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            io.note(&format!("refutation check failed: {e}"));
            return Ok(ExitStatus::Failure);
        }
    };
    let summary = refutation_summary_for(&l1, &l2);
    if io.json {
        io.print_json(&serde_json::to_value(&summary).expect("summary serializes"));
    } else {
        io.print(&summary.to_text());
    }
    Ok(if summary.claim_refuted {
        ExitStatus::Success
    } else {
        ExitStatus::Failure
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut (dyn Write + Send)) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_color(args, out, err, false)
}

fn run_with_color<I, T>(args: I, out: &mut dyn Write, err: &mut (dyn Write + Send), color: bool) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // Help and version go to stdout with status 0.
            return if e.use_stderr() {
                let _ = write!(err, "{e}");
                ExitStatus::Usage
            } else {
                let _ = write!(out, "{e}");
                ExitStatus::Success
            };
        }
    };
    let mut io = Io {
        out,
        err,
        json: cli.json,
        color: color && !cli.json,
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(&mut io, a),
        Command::Verify(a) => cmd_verify(&mut io, a),
        Command::Bench(a) => cmd_bench(&mut io, a),
        Command::Search(a) => cmd_search(&mut io, a),
        Command::Refute(a) => cmd_refute(&mut io, a),
    };
    match result {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            io.note(&format!("error: {msg}"));
            code
        }
    }
}

/// Entry point for the binary. Colors verdicts on a terminal unless
/// `NO_COLOR` is set.
pub fn main() -> ExitStatus {
    let color = std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty());
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr();
    run_with_color(std::env::args_os(), &mut out, &mut err, color)
}
