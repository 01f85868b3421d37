//! Ordering patterns, test domains, and checking sorters against the oracle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::isa::{self, Program, RunError};
use crate::kernels::{oracle_sort, Kernel, Order};
use crate::par::{map_range, Parallelism};
use crate::rng::SplitMix64;

/// Reports list at most this many failing cases.
pub const MAX_REPORTED_FAILURES: usize = 16;

/// The extreme values every `extremes` domain draws from.
pub const EXTREME_VALUES: [i32; 7] = [i32::MIN, i32::MIN + 1, -1, 0, 1, i32::MAX - 1, i32::MAX];

/// One of the 13 order types of three values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternId {
    pub index: usize,
    /// Canonical member with values drawn from a prefix of {0, 1, 2}.
    pub representative: [i32; 3],
}

/// All order types of `n` values, as tuples over `0..n` whose value set is
/// `{0, .., k-1}` for some k, in lexicographic order.
pub fn order_types(n: usize) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let total = n.pow(n as u32);
    for code in 0..total {
        let mut t = vec![0i32; n];
        let mut c = code;
        for slot in t.iter_mut().rev() {
            *slot = (c % n) as i32;
            c /= n;
        }
        let max = *t.iter().max().unwrap_or(&-1);
        if (0..=max).all(|v| t.contains(&v)) {
            out.push(t);
        }
    }
    out
}

pub fn enumerate_patterns() -> Vec<PatternId> {
    order_types(3)
        .into_iter()
        .enumerate()
        .map(|(index, t)| PatternId {
            index,
            representative: [t[0], t[1], t[2]],
        })
        .collect()
}

/// Dense rank of each value under `order`.
pub fn order_type(values: &[i32], order: Order) -> Vec<i32> {
    values
        .iter()
        .map(|&x| {
            let mut smaller: Vec<i32> = values.iter().copied().filter(|&y| order.less(y, x)).collect();
            smaller.sort_unstable();
            smaller.dedup();
            smaller.len() as i32
        })
        .collect()
}

pub fn classify(t: &[i32; 3], order: Order) -> PatternId {
    let rep = order_type(t, order);
    let representative = [rep[0], rep[1], rep[2]];
    let index = enumerate_patterns()
        .iter()
        .position(|p| p.representative == representative)
        .expect("dense ranks always form an order type");
    PatternId { index, representative }
}

/// A set of test inputs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// One representative per order type.
    Patterns,
    /// Every tuple over `lo..=hi`.
    Grid { lo: i32, hi: i32 },
    /// `n` tuples with independent uniform 32-bit values.
    Random { seed: u64, n: usize },
    /// Every tuple over [`EXTREME_VALUES`].
    Extremes,
}

impl Domain {
    pub fn cases(&self, arity: usize) -> Vec<Vec<i32>> {
        match *self {
            Domain::Patterns => order_types(arity),
            Domain::Grid { lo, hi } => {
                let vals: Vec<i32> = (lo..=hi).collect();
                product(&vals, arity)
            }
            Domain::Extremes => product(&EXTREME_VALUES, arity),
            Domain::Random { seed, n } => {
                let mut g = SplitMix64::new(seed);
                (0..n)
                    .map(|_| (0..arity).map(|_| g.next_u64() as u32 as i32).collect())
                    .collect()
            }
        }
    }
}

fn product(vals: &[i32], arity: usize) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |&v| {
                    let mut t = prefix.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Patterns => f.write_str("patterns"),
            Domain::Grid { lo, hi } => write!(f, "grid:{lo}:{hi}"),
            Domain::Random { seed, n } => write!(f, "random:{seed}:{n}"),
            Domain::Extremes => f.write_str("extremes"),
        }
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("bad domain `{s}` (patterns | grid:LO:HI | random:SEED:N | extremes)");
        match parts.as_slice() {
            ["patterns"] => Ok(Domain::Patterns),
            ["extremes"] => Ok(Domain::Extremes),
            ["grid", lo, hi] => {
                let (lo, hi) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
                if lo > hi {
                    return Err(bad());
                }
                Ok(Domain::Grid { lo, hi })
            }
            ["random", seed, n] => Ok(Domain::Random {
                seed: seed.parse().map_err(|_| bad())?,
                n: n.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Something that sorts a fixed number of values.
pub enum Subject<'a> {
    Kernel(Kernel),
    Program { name: String, program: &'a Program },
    Function {
        name: String,
        arity: usize,
        sort: &'a (dyn Fn(&mut [i32]) + Sync),
    },
}

impl Subject<'_> {
    pub fn name(&self) -> String {
        match self {
            Subject::Kernel(k) => k.name().to_string(),
            Subject::Program { name, .. } | Subject::Function { name, .. } => name.clone(),
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Subject::Kernel(k) => k.arity(),
            Subject::Program { program, .. } => program.target.arity(),
            Subject::Function { arity, .. } => *arity,
        }
    }

    fn apply(&self, input: &[i32], order: Order, fuel: u64) -> Result<Vec<i32>, String> {
        match self {
            Subject::Kernel(k) => {
                let mut v = input.to_vec();
                k.sort(&mut v, order);
                Ok(v)
            }
            Subject::Function { sort, .. } => {
                let mut v = input.to_vec();
                sort(&mut v);
                Ok(v)
            }
            Subject::Program { program, .. } => match isa::run(program, input, fuel) {
                Ok(out) => Ok(out.output),
                Err(e @ RunError::FuelExhausted { .. }) => Err(e.to_string()),
                Err(RunError::Fault(e)) => Err(format!("memory fault: {e}")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub case: usize,
    pub input: Vec<i32>,
    pub expected: Vec<i32>,
    pub actual: Option<Vec<i32>>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub subject: String,
    pub domain: String,
    pub ordering: Order,
    pub cases: usize,
    pub failed_cases: usize,
    pub failures: Vec<Failure>,
    pub verdict: Verdict,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Combines several reports on the same subject into one.
    pub fn merge(reports: Vec<VerifyReport>) -> VerifyReport {
        let subject = reports.first().map(|r| r.subject.clone()).unwrap_or_default();
        let ordering = reports.first().map(|r| r.ordering).unwrap_or_default();
        let domain = reports.iter().map(|r| r.domain.as_str()).collect::<Vec<_>>().join("+");
        let cases = reports.iter().map(|r| r.cases).sum();
        let failed_cases = reports.iter().map(|r| r.failed_cases).sum();
        let failures: Vec<Failure> = reports
            .into_iter()
            .flat_map(|r| r.failures)
            .take(MAX_REPORTED_FAILURES)
            .collect();
        VerifyReport {
            subject,
            domain,
            ordering,
            cases,
            failed_cases,
            verdict: if failed_cases == 0 { Verdict::Pass } else { Verdict::Fail },
            failures,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{}: {} on {} ({}): {}/{} cases correct\n",
            self.subject,
            match self.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
            },
            self.domain,
            self.ordering,
            self.cases - self.failed_cases,
            self.cases
        );
        for f in &self.failures {
            let actual = f
                .actual
                .as_ref()
                .map(|a| format!("{a:?}"))
                .unwrap_or_else(|| "-".to_string());
            s.push_str(&format!(
                "  counterexample {:?}: expected {:?}, got {} ({})\n",
                f.input, f.expected, actual, f.reason
            ));
        }
        s
    }
}

/// True iff `a` and `b` hold the same values with the same multiplicities.
/// Uses only equality, never the ordering.
pub fn is_permutation(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        match (0..b.len()).find(|&k| !used[k] && b[k] == *x) {
            Some(k) => {
                used[k] = true;
                true
            }
            None => false,
        }
    })
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Per-run fuel for interpreted subjects.
    pub fuel: u64,
    pub parallelism: Parallelism,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            fuel: isa::DEFAULT_FUEL,
            parallelism: Parallelism::default(),
        }
    }
}

pub fn verify_sorter(subject: &Subject<'_>, domain: &Domain, order: Order) -> VerifyReport {
    verify_sorter_with(subject, domain, order, VerifyOptions::default())
}

pub fn verify_sorter_with(
    subject: &Subject<'_>,
    domain: &Domain,
    order: Order,
    opts: VerifyOptions,
) -> VerifyReport {
    let cases = domain.cases(subject.arity());
    let outcomes = map_range(cases.len(), opts.parallelism, |k| {
        check_case(subject, k, &cases[k], order, opts.fuel)
    });
    let failed_cases = outcomes.iter().filter(|o| o.is_some()).count();
    let failures = outcomes.into_iter().flatten().take(MAX_REPORTED_FAILURES).collect();
    VerifyReport {
        subject: subject.name(),
        domain: domain.to_string(),
        ordering: order,
        cases: cases.len(),
        failed_cases,
        failures,
        verdict: if failed_cases == 0 { Verdict::Pass } else { Verdict::Fail },
    }
}

fn check_case(subject: &Subject<'_>, case: usize, input: &[i32], order: Order, fuel: u64) -> Option<Failure> {
    let mut expected = input.to_vec();
    oracle_sort(&mut expected, order);
    let fail = |actual, reason: String| {
        Some(Failure {
            case,
            input: input.to_vec(),
            expected: expected.clone(),
            actual,
            reason,
        })
    };
    match subject.apply(input, order, fuel) {
        Err(reason) => fail(None, reason),
        Ok(actual) if !is_permutation(input, &actual) => fail(Some(actual), "not a permutation of the input".into()),
        Ok(actual) if actual != expected => fail(Some(actual), "out of order".into()),
        Ok(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assets, parse_program};

    #[test]
    fn thirteen_patterns() {
        let pats = enumerate_patterns();
        assert_eq!(pats.len(), 13);
        let reps: Vec<[i32; 3]> = pats.iter().map(|p| p.representative).collect();
        assert!(reps.contains(&[0, 0, 0]));
        assert!(reps.contains(&[2, 1, 0]));
        assert!(reps.contains(&[0, 1, 1]));
        let distinct = |r: &[i32; 3]| {
            let mut v = r.to_vec();
            v.sort();
            v.dedup();
            v.len()
        };
        assert_eq!(reps.iter().filter(|r| distinct(r) == 3).count(), 6);
        assert_eq!(reps.iter().filter(|r| distinct(r) == 2).count(), 6);
        assert_eq!(reps.iter().filter(|r| distinct(r) == 1).count(), 1);
        let mut sorted = reps.clone();
        sorted.sort();
        assert_eq!(sorted, reps);
    }

    // Brute-force oracle: group all 27 triples over {0,1,2} by their
    // pairwise comparison signature.
    #[test]
    fn patterns_match_brute_force_classes() {
        use std::collections::BTreeSet;
        let sig = |t: [i32; 3]| {
            [(0, 1), (0, 2), (1, 2)].map(|(i, j)| t[i].cmp(&t[j]))
        };
        let mut classes = BTreeSet::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    classes.insert(sig([a, b, c]));
                }
            }
        }
        assert_eq!(classes.len(), 13);
        let from_patterns: BTreeSet<_> = enumerate_patterns().iter().map(|p| sig(p.representative)).collect();
        assert_eq!(classes, from_patterns);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[7, 7, 7], Order::Signed).representative, [0, 0, 0]);
        assert_eq!(classify(&[100, -3, 50], Order::Signed).representative, [2, 0, 1]);
        assert_eq!(classify(&[-1, 0, 0], Order::Unsigned).representative, [1, 0, 0]);
        assert_eq!(classify(&[-1, 0, 0], Order::Signed).representative, [0, 1, 1]);
        for p in enumerate_patterns() {
            assert_eq!(classify(&p.representative, Order::Signed), p);
        }
    }

    #[test]
    fn classify_partitions_grid() {
        let mut hits = [0usize; 13];
        for t in (Domain::Grid { lo: 0, hi: 2 }).cases(3) {
            hits[classify(&[t[0], t[1], t[2]], Order::Signed).index] += 1;
        }
        assert!(hits.iter().all(|&h| h > 0));
        assert_eq!(hits.iter().sum::<usize>(), 27);
    }

    #[test]
    fn domain_sizes_and_parsing() {
        assert_eq!(Domain::Patterns.cases(2).len(), 3);
        assert_eq!(Domain::Grid { lo: -2, hi: 2 }.cases(3).len(), 125);
        assert_eq!(Domain::Extremes.cases(3).len(), 343);
        assert_eq!(Domain::Random { seed: 1, n: 10 }.cases(3).len(), 10);
        for s in ["patterns", "grid:0:3", "random:7:100", "extremes"] {
            assert_eq!(s.parse::<Domain>().unwrap().to_string(), s);
        }
        assert!("grid:3:0".parse::<Domain>().is_err());
        assert!("grid:x".parse::<Domain>().is_err());
    }

    #[test]
    fn permutation_check() {
        assert!(is_permutation(&[1, 2, 2], &[2, 1, 2]));
        assert!(!is_permutation(&[1, 2, 2], &[1, 1, 2]));
        assert!(!is_permutation(&[1, 2], &[1, 2, 3]));
    }

    #[test]
    fn listing_examples() {
        let l1 = parse_program(assets::LISTING1).unwrap();
        let r = verify_sorter(&Subject::Program { name: "listing1.s".into(), program: &l1 }, &Domain::Patterns, Order::Signed);
        assert!(r.passed());
        assert_eq!(r.cases, 13);

        let l2 = parse_program(assets::LISTING2).unwrap();
        let subject = Subject::Program { name: "listing2.s".into(), program: &l2 };
        let r = verify_sorter(&subject, &Domain::Grid { lo: 0, hi: 3 }, Order::Unsigned);
        assert!(r.passed());
        assert_eq!(r.cases, 64);
    }

    #[test]
    fn identity_is_not_a_sorter() {
        let f = |_: &mut [i32]| {};
        let subject = Subject::Function { name: "identity".into(), arity: 3, sort: &f };
        let r = verify_sorter(&subject, &Domain::Patterns, Order::Signed);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.failures.iter().any(|f| f.input == [1, 0, 0]));
    }

    #[test]
    fn duplicating_sorter_caught_by_permutation_check() {
        let f = |v: &mut [i32]| {
            let m = *v.iter().min().unwrap();
            v.fill(m);
        };
        let subject = Subject::Function { name: "min-fill".into(), arity: 3, sort: &f };
        let r = verify_sorter(&subject, &Domain::Patterns, Order::Signed);
        assert!(r.failures.iter().all(|f| f.reason == "not a permutation of the input"));
        assert!(!r.passed());
    }

    #[test]
    fn oracle_always_passes() {
        for d in [Domain::Patterns, Domain::Extremes, Domain::Random { seed: 3, n: 500 }] {
            for o in [Order::Signed, Order::Unsigned] {
                assert!(verify_sorter(&Subject::Kernel(Kernel::Oracle), &d, o).passed());
            }
        }
    }

    #[test]
    fn nonterminating_program_reported() {
        let p = parse_program("top:\njmp top").unwrap();
        let r = verify_sorter(&Subject::Program { name: "spin".into(), program: &p }, &Domain::Patterns, Order::Signed);
        assert_eq!(r.failed_cases, 13);
        assert!(r.failures[0].reason.contains("fuel"));
        assert_eq!(r.failures.len(), 13);
    }

    #[test]
    fn failure_list_is_capped() {
        let f = |v: &mut [i32]| v.reverse();
        let subject = Subject::Function { name: "rev".into(), arity: 3, sort: &f };
        let r = verify_sorter(&subject, &Domain::Extremes, Order::Signed);
        assert_eq!(r.failures.len(), MAX_REPORTED_FAILURES);
        assert!(r.failed_cases > MAX_REPORTED_FAILURES);
    }
}
