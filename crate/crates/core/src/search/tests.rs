use proptest::prelude::*;

use super::vocab::Palette;
use super::*;
use crate::isa::{assets, parse_program, run, Opcode};

fn listing(text: &str) -> Program {
    parse_program(text).unwrap()
}

fn sort2_default() -> SearchConfig {
    let mut cfg = SearchConfig::new(Target::Sort2);
    cfg.budget = Budget::UNLIMITED;
    cfg
}

/// Two registers, loads, stores, compare and memory-source cmov. Small
/// enough to enumerate without any pruning.
fn sort2_reduced() -> SearchConfig {
    let mut cfg = sort2_default();
    cfg.registers = 2;
    cfg.vocabulary = vec![Shape::MovMemReg, Shape::MovRegMem, Shape::CmpRegReg, Shape::CmovgMemReg];
    cfg
}

fn renders(r: &SearchResult) -> Vec<String> {
    r.found.iter().map(|f| f.program.render()).collect()
}

#[test]
fn listings_pass_check_candidate() {
    assert!(check_candidate(&listing(assets::LISTING1), Target::Sort3, Order::Signed));
    assert!(check_candidate(&listing(assets::LISTING2), Target::Sort3, Order::Unsigned));
    assert!(!check_candidate(&listing(assets::LISTING2), Target::Sort3, Order::Signed));
    assert!(!check_candidate(&listing(assets::LISTING1), Target::Sort2, Order::Signed));
}

#[test]
fn check_candidate_rejects() {
    let empty = Program::empty(Target::Sort3);
    assert!(!check_candidate(&empty, Target::Sort3, Order::Signed));
    let spin = listing("# target sort2\ntop:\n jmp top\n");
    assert!(!check_candidate(&spin, Target::Sort2, Order::Signed));
}

#[test]
fn undefined_reads() {
    assert!(!reads_undefined(&listing(assets::LISTING1)));
    assert!(!reads_undefined(&listing(assets::LISTING2)));
    let cases = [
        ("mov %[a], (%[p])", true),
        ("mov (%[p]), %[a]\n cmovg 4(%[p]), %[a]", true),
        ("mov (%[p]), %[a]\n cmp 4(%[p]), %[a]\n cmovg 4(%[p]), %[a]", false),
        ("cmp (%[p]), %[a]", true),
    ];
    for (body, expect) in cases {
        let p = listing(&format!("# target sort2\n# reg a dword\n{body}\n"));
        assert_eq!(reads_undefined(&p), expect, "{body}");
    }
    // Defined on one path only.
    let p = listing(
        "# target sort2\n# reg a dword\n mov (%[p]), %[b]\n cmp 4(%[p]), %[b]\n jle skip\n \
         mov (%[p]), %[a]\nskip:\n mov %[a], 4(%[p])\n",
    );
    assert!(reads_undefined(&p));
}

#[test]
fn sort2_default_minimum_is_eight() {
    let r = search(&sort2_default()).unwrap();
    assert!(r.exhausted);
    assert_eq!(r.minimal_length, Some(8));
    assert_eq!(r.levels_completed, 8);
    // Frozen from this search; the unpruned run below agrees.
    assert_eq!(r.found.len(), 416);
    assert_eq!(r.discrepancies, 0);
    for f in &r.found {
        assert!(check_candidate(&f.program, Target::Sort2, Order::Signed));
        assert!(f.branchless);
        assert_eq!(canonicalize(&f.program), f.program);
    }
    // load, load, copy, compare, two cmovs, two stores.
    let shape = |p: &Program| -> Vec<(Opcode, bool, bool)> {
        p.instructions
            .iter()
            .map(|i| {
                (
                    i.opcode,
                    matches!(i.operands[0], crate::isa::Operand::Mem(_)),
                    matches!(i.operands[1], crate::isa::Operand::Mem(_)),
                )
            })
            .collect()
    };
    let want = vec![
        (Opcode::Mov, true, false),
        (Opcode::Mov, true, false),
        (Opcode::Mov, false, false),
        (Opcode::Cmp, false, false),
        (Opcode::Cmovg, false, false),
        (Opcode::Cmovg, false, false),
        (Opcode::Mov, false, true),
        (Opcode::Mov, false, true),
    ];
    assert!(r.found.iter().any(|f| shape(&f.program) == want));
}

#[test]
fn sort2_reduced_pruned_matches_unpruned() {
    let pruned = search(&sort2_reduced()).unwrap();
    let mut cfg = sort2_reduced();
    cfg.prune = Pruning::NONE;
    let plain = search(&cfg).unwrap();
    assert_eq!(pruned.minimal_length, Some(7));
    assert_eq!(plain.minimal_length, Some(7));
    assert_eq!(renders(&pruned), renders(&plain));
    assert_eq!(pruned.found.len(), 20);
    assert!(pruned.candidates_enumerated < plain.candidates_enumerated);
}

#[test]
fn each_pruning_switch_is_lossless() {
    let base = search(&sort2_default()).unwrap();
    let switches: [fn(&mut Pruning); 4] = [
        |p| p.canonical_registers = false,
        |p| p.dead_code = false,
        |p| p.prefix_memo = false,
        |p| p.test_vector_filter = false,
    ];
    for off in switches {
        let mut cfg = sort2_default();
        off(&mut cfg.prune);
        let r = search(&cfg).unwrap();
        assert_eq!(r.minimal_length, base.minimal_length, "{:?}", cfg.prune);
        assert_eq!(renders(&r), renders(&base), "{:?}", cfg.prune);
    }
}

// About four minutes on one core.
#[test]
#[ignore]
fn sort2_default_unpruned_matches() {
    let pruned = search(&sort2_default()).unwrap();
    let mut cfg = sort2_default();
    cfg.prune = Pruning::NONE;
    let plain = search(&cfg).unwrap();
    assert_eq!(plain.minimal_length, Some(8));
    assert_eq!(renders(&plain), renders(&pruned));
}

#[test]
fn sort3_two_instructions_is_empty_and_exhausted() {
    let mut cfg = SearchConfig::new(Target::Sort3);
    cfg.max_len = 2;
    let r = search(&cfg).unwrap();
    assert!(r.found.is_empty());
    assert!(r.exhausted);
    assert_eq!(r.minimal_length, None);
    assert_eq!(r.levels_completed, 2);
}

#[test]
fn budget_truncation_is_flagged() {
    let mut cfg = SearchConfig::new(Target::Sort3);
    cfg.budget = Budget::seconds(0.5);
    let r = search(&cfg).unwrap();
    assert!(!r.exhausted);
    assert!(r.found.is_empty());
    assert!(r.levels_completed < 13);
    assert_eq!(r.cursor.next_length, r.levels_completed + 1);

    let mut cfg = sort2_default();
    cfg.budget = Budget {
        seconds: None,
        candidates: Some(10_000),
    };
    let r = search(&cfg).unwrap();
    assert!(!r.exhausted);
    assert!(r.candidates_enumerated >= 10_000);
}

#[test]
fn invalid_configs() {
    let ok = sort2_default();
    let mut bad = vec![];
    let mut c = ok.clone();
    c.max_len = 0;
    bad.push(c);
    let mut c = ok.clone();
    c.vocabulary.clear();
    bad.push(c);
    let mut c = ok.clone();
    c.budget = Budget::seconds(0.0);
    bad.push(c);
    let mut c = ok.clone();
    c.budget.candidates = Some(0);
    bad.push(c);
    let mut c = ok.clone();
    c.registers = 0;
    bad.push(c);
    let mut c = ok.clone();
    c.vocabulary.push(Shape::MovImmReg);
    c.immediates.clear();
    bad.push(c);
    for c in bad {
        assert!(matches!(search(&c), Err(SearchError::InvalidConfig(_))), "{c:?}");
    }
}

#[test]
fn branches_find_a_shorter_sort2() {
    let mut cfg = sort2_reduced();
    cfg.allow_branches = true;
    cfg.max_len = 7;
    let r = search(&cfg).unwrap();
    assert!(r.exhausted);
    // load, load, compare, branch, two stores.
    assert_eq!(r.minimal_length, Some(6));
    assert!(r.found.iter().all(|f| !f.branchless));
    assert!(r.found.iter().all(|f| check_candidate(&f.program, Target::Sort2, Order::Signed)));
}

#[test]
fn cmovg_cannot_sort_unsigned() {
    let mut cfg = sort2_reduced();
    cfg.ordering = Order::Unsigned;
    let r = search(&cfg).unwrap();
    // cmovg is a signed condition, so no program here sorts unsigned.
    assert_eq!(r.minimal_length, None);
    assert!(r.exhausted);
}

#[test]
fn monotone_in_vocabulary_and_length() {
    let small = search(&sort2_reduced()).unwrap();
    let mut cfg = sort2_reduced();
    cfg.vocabulary.extend(Shape::DEFAULT);
    cfg.registers = 3;
    let big = search(&cfg).unwrap();
    assert!(big.minimal_length.unwrap() <= small.minimal_length.unwrap());
    let mut cfg = sort2_reduced();
    cfg.max_len = 9;
    assert_eq!(search(&cfg).unwrap().minimal_length, small.minimal_length);
}

#[test]
fn sequential_and_parallel_agree() {
    let mut cfg = sort2_default();
    cfg.parallelism = crate::par::Parallelism::Sequential;
    let a = search(&cfg).unwrap();
    cfg.parallelism = crate::par::Parallelism::Parallel;
    let b = search(&cfg).unwrap();
    assert_eq!(renders(&a), renders(&b));
    assert_eq!(a.candidates_enumerated, b.candidates_enumerated);
    assert_eq!(a.candidates_pruned_by_reason, b.candidates_pruned_by_reason);
}

#[test]
fn resume_from_cursor_matches_fresh_run() {
    let fresh = search(&sort2_default()).unwrap();
    let mut cfg = sort2_default();
    cfg.max_len = 6;
    let mut cursors = Vec::new();
    let mut sink = |c: &SearchCursor| cursors.push(c.clone());
    let partial = search_with(
        &cfg,
        None,
        SearchHooks {
            on_level: Some(&mut sink),
            ..SearchHooks::default()
        },
    )
    .unwrap();
    assert!(partial.exhausted);
    assert!(partial.found.is_empty());
    assert_eq!(cursors.iter().map(|c| c.next_length).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6, 7]);
    let text = partial.cursor.to_json();
    let mut cursor = SearchCursor::from_json(&text).unwrap();
    assert_eq!(cursor, partial.cursor);
    cursor.config.max_len = 8;
    let resumed = resume(&cursor).unwrap();
    assert_eq!(resumed.minimal_length, Some(8));
    assert_eq!(renders(&resumed), renders(&fresh));
    assert_eq!(resumed.candidates_enumerated, fresh.candidates_enumerated);
}

#[test]
fn cursor_rejects_other_space_and_bad_json() {
    let r = search(&{
        let mut c = sort2_default();
        c.max_len = 3;
        c
    })
    .unwrap();
    let mut other = sort2_default();
    other.registers = 2;
    assert!(matches!(search_with(&other, Some(&r.cursor), SearchHooks::default()), Err(SearchError::Cursor(_))));
    assert!(SearchCursor::from_json("{").is_err());
    let mut c = r.cursor.clone();
    c.version = 99;
    assert!(SearchCursor::from_json(&c.to_json()).is_err());
}

#[test]
fn progress_hook_reports_levels() {
    use std::sync::Mutex;
    let seen = Mutex::new(Vec::new());
    let report = |p: &Progress| seen.lock().unwrap().push(p.length);
    let mut cfg = sort2_default();
    cfg.max_len = 4;
    search_with(
        &cfg,
        None,
        SearchHooks {
            progress: Some(&report),
            ..SearchHooks::default()
        },
    )
    .unwrap();
    let seen = seen.into_inner().unwrap();
    for len in 1..=4 {
        assert!(seen.contains(&len));
    }
    let p = Progress {
        length: 3,
        candidates: 750,
        pruned: 250,
        elapsed_seconds: 0.5,
    };
    assert_eq!(p.pruned_percent(), 25.0);
    assert_eq!(p.rate(), 1500.0);
    assert!(p.line().contains("length 3"));
}

#[test]
fn canonicalize_examples() {
    let p = listing(
        "# target sort2\n# reg r0 dword\n# reg r1 dword\n# reg r2 dword\n# reg r3 dword\n\
         mov (%[p]), %[r3]\n mov 4(%[p]), %[r1]\n mov %[r1], (%[p])\n mov %[r3], 4(%[p])\n",
    );
    let c = canonicalize(&p);
    let text = c.render();
    assert!(text.contains("movl (%[p]), %[r0]"));
    assert!(text.contains("movl 4(%[p]), %[r1]"));
    assert_eq!(c.registers.len(), 3);
    assert_eq!(canonicalize(&c), c);

    for (src, order) in [(assets::LISTING1, Order::Signed), (assets::LISTING2, Order::Unsigned)] {
        let c = canonicalize(&listing(src));
        assert!(check_candidate(&c, Target::Sort3, order));
        assert_eq!(canonicalize(&c), c);
    }
}

#[test]
fn listing2_is_in_the_full_vocabulary() {
    let c = canonicalize(&listing(assets::LISTING2));
    let names: Vec<&str> = c.registers.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["p", "r0", "r1", "r2", "x0", "x1"]);
    let palette = Palette::new(Target::Sort3, &Shape::ALL, 3, 2, &[0, 1]);
    assert_eq!(palette.scratch.registers, c.registers);
    assert_eq!(palette.scratch.data, c.data);
    for instr in &c.instructions {
        assert!(
            palette.templates.iter().any(|t| &t.instr == instr),
            "no template for {instr:?}"
        );
    }
}

#[test]
fn refutation_default() {
    let s = refutation_summary();
    assert!(s.claim_refuted);
    assert_eq!(s.claimed_minimum, 17);
    let l1 = &s.listings[0];
    assert_eq!((l1.instruction_count, l1.branchless, l1.verified), (14, false, true));
    assert_eq!(l1.ordering, Order::Signed);
    let l2 = &s.listings[1];
    assert_eq!((l2.instruction_count, l2.branchless, l2.verified), (15, true, true));
    assert_eq!(l2.ordering, Order::Unsigned);
    let text = s.to_text();
    assert!(text.contains("claim_refuted=true"));
}

#[test]
fn refutation_negative_control() {
    // Drop the final store from Listing 1: shorter, but wrong.
    let mut broken = listing(assets::LISTING1);
    broken.instructions.pop();
    let s = refutation_summary_for(&broken, &listing(assets::LISTING2));
    assert!(!s.claim_refuted);
    assert!(!s.listings[0].verified);
    assert!(s.to_text().contains("counterexample"));
}

#[test]
fn result_renderings() {
    let r = search(&sort2_reduced()).unwrap();
    let json = r.to_json();
    assert_eq!(json["minimal_length"], 7);
    assert_eq!(json["found"].as_array().unwrap().len(), 20);
    assert_eq!(json["exhausted"], true);
    assert!(json["candidates_pruned_by_reason"]["dead_code"].as_u64().unwrap() > 0);
    let text = r.to_text();
    assert!(text.contains("minimal length 7, 20 program(s)"));
    let cfg: SearchConfig = serde_json::from_value(json["config"].clone()).unwrap();
    assert!(cfg.same_space(&r.config));
}

#[test]
fn vocabulary_parsing() {
    assert_eq!(parse_vocabulary("default").unwrap(), Shape::DEFAULT.to_vec());
    assert_eq!(
        parse_vocabulary("mov-m-r, cmovg-m-r").unwrap(),
        vec![Shape::MovMemReg, Shape::CmovgMemReg]
    );
    assert!(parse_vocabulary("mov-x-y").is_err());
}

fn arb_program() -> impl Strategy<Value = Program> {
    let palette = Palette::new(Target::Sort3, &Shape::ALL, 4, 2, &[0, 1]);
    let n = palette.templates.len();
    prop::collection::vec(0..n, 0..10).prop_map(move |seq| {
        let mut p = palette.scratch.clone();
        p.instructions = seq.iter().map(|&t| palette.templates[t].instr.clone()).collect();
        p
    })
}

proptest! {
    #[test]
    fn canonicalize_is_idempotent_and_preserves_behaviour(p in arb_program()) {
        let c = canonicalize(&p);
        prop_assert_eq!(canonicalize(&c), c.clone());
        for input in crate::verifier::Domain::Patterns.cases(3) {
            let a = run(&p, &input, 64).map(|o| o.output);
            let b = run(&c, &input, 64).map(|o| o.output);
            prop_assert_eq!(a.is_ok(), b.is_ok());
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
        prop_assert_eq!(reads_undefined(&p), reads_undefined(&c));
    }
}
