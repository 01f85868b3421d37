use serde::Serialize;

use crate::isa::{assets, parse_program, Program, Target};
use crate::kernels::Order;
use crate::verifier::{verify_sorter, Domain, Subject, VerifyReport};

/// The length below which no sort3 program was claimed to exist.
pub const CLAIMED_MINIMUM: usize = 17;

const RANDOM_SEED: u64 = 0x5EED_0003;
const RANDOM_CASES: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ListingCheck {
    pub name: String,
    pub instruction_count: usize,
    pub branchless: bool,
    pub ordering: Order,
    pub verified: bool,
    pub report: VerifyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefutationSummary {
    pub claimed_minimum: usize,
    pub listings: Vec<ListingCheck>,
    pub claim_refuted: bool,
    pub statement: String,
}

impl RefutationSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<10} {:>12}  {:<12} {:<9} {}\n",
            "listing", "instructions", "control", "ordering", "verified"
        );
        for l in &self.listings {
            out.push_str(&format!(
                "{:<10} {:>12}  {:<12} {:<9} {}\n",
                l.name,
                l.instruction_count,
                if l.branchless { "branchless" } else { "branches" },
                l.ordering.to_string(),
                if l.verified { "pass" } else { "FAIL" },
            ));
            if !l.verified {
                for f in &l.report.failures {
                    out.push_str(&format!(
                        "  counterexample {:?}: expected {:?}, got {:?} ({})\n",
                        f.input, f.expected, f.actual, f.reason
                    ));
                }
            }
        }
        out.push_str(&self.statement);
        out.push('\n');
        out.push_str(&format!("claim_refuted={}\n", self.claim_refuted));
        out
    }
}

/// Domains used to verify the listings.
pub fn refutation_domains() -> Vec<Domain> {
    vec![
        Domain::Patterns,
        Domain::Grid { lo: -2, hi: 2 },
        Domain::Extremes,
        Domain::Random {
            seed: RANDOM_SEED,
            n: RANDOM_CASES,
        },
    ]
}

fn check(name: &str, program: &Program, ordering: Order) -> ListingCheck {
    let subject = Subject::Program {
        name: name.into(),
        program,
    };
    let report = if program.target == Target::Sort3 {
        VerifyReport::merge(
            refutation_domains()
                .iter()
                .map(|d| verify_sorter(&subject, d, ordering))
                .collect(),
        )
    } else {
        let mut r = VerifyReport::merge(Vec::new());
        r.subject = name.into();
        r.verdict = crate::verifier::Verdict::Fail;
        r
    };
    ListingCheck {
        name: name.into(),
        instruction_count: program.instruction_count(),
        branchless: program.is_branchless(),
        ordering,
        verified: report.passed(),
        report,
    }
}

/// Checks the bundled listings: Listing 1 under signed order, Listing 2
/// under unsigned order.
pub fn refutation_summary() -> RefutationSummary {
    let l1 = parse_program(assets::LISTING1).expect("bundled listing1 parses");
    let l2 = parse_program(assets::LISTING2).expect("bundled listing2 parses");
    refutation_summary_for(&l1, &l2)
}

pub fn refutation_summary_for(listing1: &Program, listing2: &Program) -> RefutationSummary {
    let listings = vec![
        check("listing1", listing1, Order::Signed),
        check("listing2", listing2, Order::Unsigned),
    ];
    let claim_refuted = listings
        .iter()
        .all(|l| l.verified && l.instruction_count < CLAIMED_MINIMUM);
    let statement = if claim_refuted {
        let parts: Vec<String> = listings
            .iter()
            .map(|l| {
                format!(
                    "{} instructions ({}, {} order)",
                    l.instruction_count,
                    if l.branchless { "branchless" } else { "with branches" },
                    l.ordering
                )
            })
            .collect();
        format!(
            "correct sort3 programs exist at {}, each below {CLAIMED_MINIMUM}",
            parts.join(" and ")
        )
    } else {
        format!("not refuted: a listing failed verification or has at least {CLAIMED_MINIMUM} instructions")
    };
    RefutationSummary {
        claimed_minimum: CLAIMED_MINIMUM,
        listings,
        claim_refuted,
        statement,
    }
}
