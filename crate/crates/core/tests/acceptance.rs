//! Runs criteria 1-9 and prints one verdict line per criterion.
//!
//! Criteria 2 and 8 cannot be met by any correct implementation at their
//! stated parameters (see README). They are printed as FAIL; the test checks
//! that they fail only on the known report and pass every other one.

use jopeq::verify::{run_suite, CriterionOutcome, DEFAULT_SEED};

/// (criterion, report that is expected to fail)
const KNOWN_INFEASIBLE: [(u8, &str); 2] =
    [(2, "overloaded coordinates"), (8, "joint / min(SDQ-only, PPN-only)")];

fn check(o: &CriterionOutcome) -> Result<(), String> {
    if !o.within_budget() {
        return Err(format!("criterion {} over budget: {:.1} s > {:.0} s", o.id, o.elapsed_s, o.budget_s));
    }
    match KNOWN_INFEASIBLE.iter().find(|(id, _)| *id == o.id) {
        None if o.pass() => Ok(()),
        None => Err(format!("criterion {} failed:\n{o}", o.id)),
        Some((_, expected)) => {
            let failing: Vec<&str> = o.reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
            if failing == [*expected] {
                Ok(())
            } else {
                Err(format!("criterion {} should fail on exactly `{expected}`, failing: {failing:?}\n{o}", o.id))
            }
        }
    }
}

fn main() {
    let outcomes = run_suite(&[], DEFAULT_SEED);
    assert_eq!(outcomes.len(), 9);
    println!();
    for o in &outcomes {
        println!("{}", o.line());
    }
    println!();
    for o in &outcomes {
        print!("{o}");
    }
    let problems: Vec<String> = outcomes.iter().filter_map(|o| check(o).err()).collect();
    if problems.is_empty() {
        println!("\nacceptance: ok (criteria 2 and 8 fail exactly as documented)");
    } else {
        eprintln!("{}", problems.join("\n"));
        std::process::exit(1);
    }
}
