use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering as AtomicOrdering};
use std::time::{Duration, Instant};

use super::vocab::{has_dead_code, reads_undefined, Palette, RegClass, Template, DEFINED_AT_ENTRY};
use super::{
    canonicalize, candidate_fuel, check_candidate, check_domains, FoundProgram, Progress, PruneReason, SearchConfig,
    SearchCursor, SearchError, SearchHooks, SearchResult, CURSOR_VERSION, MEMO_CAPACITY,
};
use crate::isa::{Instruction, MachineState, Program};
use crate::kernels::oracle_sort;
use crate::par::map_range;
use crate::rng::mix;

/// Keys are already well-mixed hashes.
#[derive(Default)]
struct PassThrough(u64);

impl Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = v as u64;
    }
}

type Memo = HashMap<u128, u8, BuildHasherDefault<PassThrough>>;

const FLUSH_EVERY: u64 = 1 << 12;
const N_REASONS: usize = PruneReason::ALL.len();

struct Shared {
    stop: AtomicBool,
    candidates: AtomicU64,
    pruned: AtomicU64,
    start: Instant,
    deadline: Option<Instant>,
    cap: Option<u64>,
    /// Memo entries plus states waiting to be merged into it.
    memo_load: AtomicUsize,
}

impl Shared {
    fn poll(&self) {
        if self.deadline.is_some_and(|d| Instant::now() >= d)
            || self
                .cap
                .is_some_and(|c| self.candidates.load(AtomicOrdering::Relaxed) >= c)
        {
            self.stop.store(true, AtomicOrdering::Relaxed);
        }
    }

    fn stopped(&self) -> bool {
        self.stop.load(AtomicOrdering::Relaxed)
    }
}

/// Test vectors and the fixed parts of one length level.
struct Space<'c> {
    cfg: &'c SearchConfig,
    palette: Palette,
    inputs: Vec<Vec<i32>>,
    expected: Vec<i32>,
    arity: usize,
    /// Leading vectors used by the prefilter.
    fast: usize,
    /// Leading vectors simulated incrementally at internal nodes.
    tracked: usize,
    nregs: usize,
    memo_on: bool,
    dead_on: bool,
    fuel: u64,
}

fn test_vectors(cfg: &SearchConfig) -> (Vec<Vec<i32>>, usize) {
    let arity = cfg.target.arity();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut fast = 0;
    for (k, domain) in check_domains().iter().enumerate() {
        for case in domain.cases(arity) {
            if seen.insert(case.clone()) {
                out.push(case);
            }
        }
        if k == 0 {
            fast = out.len();
        }
    }
    (out, fast)
}

impl<'c> Space<'c> {
    fn new(cfg: &'c SearchConfig, len: usize) -> Space<'c> {
        let mut palette = Palette::new(
            cfg.target,
            &cfg.vocabulary,
            cfg.registers,
            cfg.effective_index_registers(),
            &cfg.immediates,
        );
        if cfg.allow_branches {
            palette.push_branches(len);
        }
        let (inputs, fast) = test_vectors(cfg);
        let arity = cfg.target.arity();
        let mut expected = Vec::with_capacity(inputs.len() * arity);
        for v in &inputs {
            let mut s = v.clone();
            oracle_sort(&mut s, cfg.ordering);
            expected.extend(s);
        }
        let memo_on = cfg.prune.prefix_memo && !cfg.allow_branches;
        Space {
            nregs: palette.scratch.registers.len(),
            tracked: if memo_on { inputs.len() } else { fast },
            dead_on: cfg.prune.dead_code && !cfg.allow_branches,
            fuel: candidate_fuel(len),
            cfg,
            palette,
            inputs,
            expected,
            arity,
            fast,
            memo_on,
        }
    }

    fn templates(&self) -> &[Template] {
        &self.palette.templates
    }

    fn matches(&self, v: usize, s: &MachineState) -> bool {
        (0..self.arity).all(|k| s.value(k) == self.expected[v * self.arity + k])
    }

    fn root_states(&self) -> Vec<MachineState> {
        self.inputs[..self.tracked]
            .iter()
            .map(|v| MachineState::new(&self.palette.scratch, v))
            .collect()
    }

    /// Interprets the sequence on vector `v` from scratch.
    fn run_from_scratch(&self, seq: &[u16], v: usize) -> bool {
        let prog = &self.palette.scratch;
        let mut s = MachineState::new(prog, &self.inputs[v]);
        while s.ip < seq.len() {
            if s.executed >= self.fuel {
                return false;
            }
            match s.execute(prog, &self.templates()[seq[s.ip] as usize].instr) {
                Ok(next) => s.ip = next,
                Err(_) => return false,
            }
            s.executed += 1;
        }
        self.matches(v, &s)
    }

    fn program(&self, seq: &[u16]) -> Program {
        let mut prog = self.palette.scratch.clone();
        for &t in seq {
            let instr = self.templates()[t as usize].instr.clone();
            if let Some(target) = instr.branch_target() {
                prog.labels.insert(format!("L{target}"), target);
            }
            prog.instructions.push(instr);
        }
        prog
    }
}

fn state_hash(states: &[MachineState], nregs: usize) -> u128 {
    let mut a: u64 = 0x243F_6A88_85A3_08D3;
    let mut b: u64 = 0x1319_8A2E_0370_7344;
    for s in states {
        let mut h: u64 = 0;
        let mut eat = |x: u64| h = (h.rotate_left(5) ^ x).wrapping_mul(0x517C_C1B7_2722_0A95);
        for &r in &s.regs[1..nregs] {
            eat(r);
        }
        let f = s.flags;
        eat(f.cf as u64 | (f.zf as u64) << 1 | (f.sf as u64) << 2 | (f.of as u64) << 3);
        for c in s.buffer().chunks_exact(4) {
            eat(u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as u64);
        }
        a = mix(a ^ h);
        b = mix(b.wrapping_add(h).rotate_left(23));
    }
    (a as u128) << 64 | b as u128
}

#[derive(Default)]
struct TaskOutcome {
    leaves: u64,
    pruned: [u64; N_REASONS],
    found: Vec<Vec<u16>>,
    new_states: Vec<u128>,
}

struct Worker<'a> {
    sp: &'a Space<'a>,
    shared: &'a Shared,
    memo: &'a Memo,
    len: usize,
    /// Replay only rebuilds memo entries: leaves are skipped.
    replay: bool,
    seq: Vec<u16>,
    branches: usize,
    states: Vec<Vec<MachineState>>,
    free: Vec<(u8, u8)>,
    /// Must-defined resources along the straight-line prefix.
    defined: Vec<u64>,
    out: TaskOutcome,
    unflushed_leaves: u64,
    unflushed_pruned: u64,
}

impl<'a> Worker<'a> {
    fn new(sp: &'a Space<'a>, shared: &'a Shared, memo: &'a Memo, len: usize, replay: bool) -> Worker<'a> {
        let root = sp.root_states();
        Worker {
            states: vec![root; len],
            free: vec![(0, 0); len + 1],
            defined: vec![DEFINED_AT_ENTRY; len + 1],
            seq: Vec::with_capacity(len),
            branches: 0,
            sp,
            shared,
            memo,
            len,
            replay,
            out: TaskOutcome::default(),
            unflushed_leaves: 0,
            unflushed_pruned: 0,
        }
    }

    fn prune(&mut self, why: PruneReason) {
        self.out.pruned[why as usize] += 1;
        self.unflushed_pruned += 1;
    }

    fn flush(&mut self) {
        self.shared
            .candidates
            .fetch_add(self.unflushed_leaves, AtomicOrdering::Relaxed);
        self.shared
            .pruned
            .fetch_add(self.unflushed_pruned, AtomicOrdering::Relaxed);
        self.unflushed_leaves = 0;
        self.unflushed_pruned = 0;
        self.shared.poll();
    }

    fn canonical_step(t: &Template, (mut d, mut i): (u8, u8)) -> Option<(u8, u8)> {
        for &(class, k) in &t.regs {
            let n = match class {
                RegClass::Data => &mut d,
                RegClass::Index => &mut i,
            };
            if k > *n {
                return None;
            }
            if k == *n {
                *n += 1;
            }
        }
        Some((d, i))
    }

    fn dead(&self, complete: bool) -> bool {
        let t = self.sp.templates();
        has_dead_code(self.seq.iter().map(|&k| &t[k as usize].effects), complete)
    }

    /// Explores the children `range` of the node at `depth`.
    fn visit(&mut self, depth: usize, range: std::ops::Range<usize>) {
        let cfg = self.sp.cfg;
        for t in range {
            if self.shared.stopped() {
                return;
            }
            let tpl = &self.sp.templates()[t];
            let child = depth + 1;
            if cfg.prune.canonical_registers {
                match Self::canonical_step(tpl, self.free[depth]) {
                    Some(f) => self.free[child] = f,
                    None => {
                        self.prune(PruneReason::CanonicalRegisters);
                        continue;
                    }
                }
            }
            if self.branches == 0 {
                let d = self.defined[depth];
                if tpl.effects.uses & !d != 0 {
                    self.prune(PruneReason::UndefinedRead);
                    continue;
                }
                self.defined[child] = d | tpl.effects.kills;
            }
            let is_branch = tpl.instr.opcode.is_branch();
            self.seq.push(t as u16);
            self.branches += is_branch as usize;
            if child == self.len {
                if !self.replay {
                    self.leaf();
                }
            } else if self.enter(depth, t) {
                let n = self.sp.templates().len();
                self.visit(child, 0..n);
            }
            self.branches -= is_branch as usize;
            self.seq.pop();
        }
    }

    /// Prepares the internal node reached by template `t` from `depth`.
    /// Returns false if it is pruned.
    fn enter(&mut self, depth: usize, t: usize) -> bool {
        if self.branches > 0 {
            return true;
        }
        let child = depth + 1;
        if self.sp.dead_on && self.dead(false) {
            self.prune(PruneReason::DeadCode);
            return false;
        }
        let (lo, hi) = self.states.split_at_mut(child);
        let (parent, next) = (&lo[depth], &mut hi[0]);
        next.copy_from_slice(parent);
        let instr = &self.sp.templates()[t].instr;
        let prog = &self.sp.palette.scratch;
        if next.iter_mut().any(|s| s.execute(prog, instr).is_err()) {
            self.prune(PruneReason::Fault);
            return false;
        }
        if self.sp.memo_on {
            let h = state_hash(&self.states[child], self.sp.nregs);
            match self.memo.get(&h) {
                Some(&d) if (d as usize) < child => {
                    self.prune(PruneReason::PrefixMemo);
                    return false;
                }
                Some(_) => {}
                None if child + 1 == self.len
                    && self.shared.memo_load.fetch_add(1, AtomicOrdering::Relaxed) < MEMO_CAPACITY =>
                {
                    self.out.new_states.push(h);
                }
                None => {}
            }
        }
        true
    }

    fn leaf(&mut self) {
        self.out.leaves += 1;
        self.unflushed_leaves += 1;
        if self.unflushed_leaves >= FLUSH_EVERY {
            self.flush();
        }
        let sp = self.sp;
        let filter = sp.cfg.prune.test_vector_filter;
        if self.branches == 0 {
            if sp.dead_on && self.dead(true) {
                self.prune(PruneReason::DeadCode);
                return;
            }
            let last = *self.seq.last().expect("leaf has an instruction") as usize;
            let instr = &sp.templates()[last].instr;
            let parent = &self.states[self.len - 1];
            let incremental = |v: usize| {
                let mut s = parent[v];
                s.execute(&sp.palette.scratch, instr).is_ok() && sp.matches(v, &s)
            };
            let eval = |v: usize| {
                if v < sp.tracked {
                    incremental(v)
                } else {
                    sp.run_from_scratch(&self.seq, v)
                }
            };
            let start = if filter {
                if !(0..sp.fast).all(eval) {
                    self.prune(PruneReason::TestVectorFilter);
                    return;
                }
                sp.fast
            } else {
                0
            };
            if (start..sp.inputs.len()).all(eval) {
                self.out.found.push(self.seq.clone());
            }
        } else {
            let instrs: Vec<&Instruction> = self.seq.iter().map(|&t| &sp.templates()[t as usize].instr).collect();
            if reads_undefined(&instrs) {
                self.prune(PruneReason::UndefinedRead);
                return;
            }
            let start = if filter {
                if !(0..sp.fast).all(|v| sp.run_from_scratch(&self.seq, v)) {
                    self.prune(PruneReason::TestVectorFilter);
                    return;
                }
                sp.fast
            } else {
                0
            };
            if (start..sp.inputs.len()).all(|v| sp.run_from_scratch(&self.seq, v)) {
                self.out.found.push(self.seq.clone());
            }
        }
    }

    fn run_task(mut self, first: usize) -> TaskOutcome {
        self.visit(0, first..first + 1);
        self.flush();
        self.out
    }
}

struct LevelOutcome {
    leaves: u64,
    pruned: [u64; N_REASONS],
    found: Vec<Vec<u16>>,
    completed: bool,
}

fn run_level(sp: &Space<'_>, shared: &Shared, memo: &mut Memo, len: usize, replay: bool) -> LevelOutcome {
    if sp.memo_on && len == 1 {
        let h = state_hash(&sp.root_states(), sp.nregs);
        memo.entry(h).or_insert(0);
    }
    let frozen: &Memo = memo;
    let outcomes = map_range(sp.templates().len(), sp.cfg.parallelism, |t| {
        Worker::new(sp, shared, frozen, len, replay).run_task(t)
    });
    let mut level = LevelOutcome {
        leaves: 0,
        pruned: [0; N_REASONS],
        found: Vec::new(),
        completed: !shared.stopped(),
    };
    let mut new_states = Vec::new();
    for o in outcomes {
        level.leaves += o.leaves;
        for (acc, x) in level.pruned.iter_mut().zip(o.pruned) {
            *acc += x;
        }
        level.found.extend(o.found);
        new_states.extend(o.new_states);
    }
    if sp.memo_on {
        for h in new_states {
            memo.entry(h).or_insert((len - 1) as u8);
        }
        shared.memo_load.store(memo.len(), AtomicOrdering::Relaxed);
    }
    level
}

fn reason_map(counts: &[u64; N_REASONS], base: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
    let mut out = base.clone();
    for why in PruneReason::ALL {
        *out.entry(why.name().to_string()).or_default() += counts[why as usize];
    }
    out
}

pub(super) fn run(
    cfg: &SearchConfig,
    resume: Option<&SearchCursor>,
    mut hooks: SearchHooks<'_>,
) -> Result<SearchResult, SearchError> {
    if let Some(c) = resume {
        if !c.config.same_space(cfg) {
            return Err(SearchError::Cursor("cursor was written for a different search space".into()));
        }
    }
    let start = Instant::now();
    let prior_elapsed = resume.map_or(0.0, |c| c.elapsed_seconds);
    let shared = Shared {
        stop: AtomicBool::new(false),
        candidates: AtomicU64::new(resume.map_or(0, |c| c.candidates_enumerated)),
        pruned: AtomicU64::new(resume.map_or(0, |c| c.candidates_pruned_by_reason.values().sum())),
        start,
        deadline: cfg.budget.seconds.map(|s| start + Duration::from_secs_f64(s)),
        cap: cfg.budget.candidates,
        memo_load: AtomicUsize::new(0),
    };
    let first = resume.map_or(1, |c| c.next_length);
    let mut base_reasons = resume.map_or_else(BTreeMap::new, |c| c.candidates_pruned_by_reason.clone());
    for why in PruneReason::ALL {
        base_reasons.entry(why.name().to_string()).or_default();
    }
    let mut candidates = resume.map_or(0, |c| c.candidates_enumerated);
    let mut memo = Memo::default();
    let mut levels_completed = first - 1;
    let mut truncated = false;
    let mut found_seqs: Vec<Vec<u16>> = Vec::new();
    let mut found_space: Option<Space<'_>> = None;

    let cursor_at = |next: usize, candidates: u64, reasons: &BTreeMap<String, u64>| SearchCursor {
        version: CURSOR_VERSION,
        config: cfg.clone(),
        next_length: next,
        candidates_enumerated: candidates,
        candidates_pruned_by_reason: reasons.clone(),
        elapsed_seconds: prior_elapsed + start.elapsed().as_secs_f64(),
    };

    // Rebuild the memo for the levels a resumed search skips.
    if first > 1 && cfg.prune.prefix_memo && !cfg.allow_branches {
        for len in 1..first.min(cfg.max_len + 1) {
            let sp = Space::new(cfg, len);
            let level = run_level(&sp, &shared, &mut memo, len, true);
            if !level.completed {
                truncated = true;
                break;
            }
        }
    }

    if !truncated {
        for len in first..=cfg.max_len {
            let sp = Space::new(cfg, len);
            let done = AtomicBool::new(false);
            let level = std::thread::scope(|scope| {
                if let Some(report) = hooks.progress {
                    let every = hooks.progress_interval.unwrap_or(Duration::from_secs(1));
                    let (shared, done) = (&shared, &done);
                    scope.spawn(move || {
                        let tick = Duration::from_millis(20).min(every);
                        let mut last = Instant::now();
                        while !done.load(AtomicOrdering::Relaxed) {
                            std::thread::sleep(tick);
                            if last.elapsed() >= every {
                                last = Instant::now();
                                report(&Progress {
                                    length: len,
                                    candidates: shared.candidates.load(AtomicOrdering::Relaxed),
                                    pruned: shared.pruned.load(AtomicOrdering::Relaxed),
                                    elapsed_seconds: shared.start.elapsed().as_secs_f64(),
                                });
                            }
                        }
                    });
                }
                let level = run_level(&sp, &shared, &mut memo, len, false);
                done.store(true, AtomicOrdering::Relaxed);
                level
            });
            candidates += level.leaves;
            base_reasons = reason_map(&level.pruned, &base_reasons);
            if let Some(report) = hooks.progress {
                report(&Progress {
                    length: len,
                    candidates,
                    pruned: base_reasons.values().sum(),
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                });
            }
            if !level.completed {
                truncated = true;
                found_seqs = level.found;
                found_space = Some(sp);
                break;
            }
            levels_completed = len;
            if !level.found.is_empty() {
                found_seqs = level.found;
                found_space = Some(sp);
                break;
            }
            if let Some(on_level) = hooks.on_level.as_mut() {
                on_level(&cursor_at(len + 1, candidates, &base_reasons));
            }
        }
    }

    let mut found: Vec<FoundProgram> = Vec::new();
    let mut discrepancies = 0;
    if let Some(sp) = &found_space {
        let mut seen = HashSet::new();
        for seq in &found_seqs {
            let program = canonicalize(&sp.program(seq));
            if !check_candidate(&program, cfg.target, cfg.ordering) {
                discrepancies += 1;
                continue;
            }
            if seen.insert(program.render()) {
                found.push(FoundProgram {
                    instruction_count: program.instruction_count(),
                    branchless: program.is_branchless(),
                    program,
                });
            }
        }
    }
    // Every shorter level was searched in full, so a hit is minimal even
    // when its own level was cut short.
    let minimal_length = found.first().map(|f| f.instruction_count);
    let cursor = cursor_at(levels_completed + 1, candidates, &base_reasons);
    Ok(SearchResult {
        config: cfg.clone(),
        found,
        minimal_length,
        levels_completed,
        candidates_enumerated: candidates,
        candidates_pruned_by_reason: base_reasons,
        exhausted: !truncated,
        discrepancies,
        elapsed_seconds: cursor.elapsed_seconds,
        cursor,
    })
}
