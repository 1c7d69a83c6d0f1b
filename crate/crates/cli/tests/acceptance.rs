use std::collections::BTreeMap;
use std::io::Write;

use hopsim_cli::checks::run_acceptance;
use hopsim_cli::Config;

#[test]
fn acceptance_suite() {
    let cfg = Config::parse("[scenario]\nkind = \"hop\"\nseed = 2024\n").unwrap();
    let outcome = run_acceptance(&cfg).unwrap();
    // Written past the harness capture so the verdicts show in plain `cargo test` output.
    let mut out = std::io::stdout().lock();
    let mut criteria: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    let mut failed = Vec::new();
    for check in &outcome.report.checks {
        let id = check.name.split_whitespace().next().unwrap();
        let n: u32 = id.trim_start_matches("AC").parse().unwrap();
        criteria.entry(n).or_default();
        if !check.passed {
            criteria.get_mut(&n).unwrap().push(check.line());
            failed.push(check.name.clone());
        }
    }
    for (n, failures) in &criteria {
        let total = outcome.report.checks.iter().filter(|c| c.name.starts_with(&format!("AC{n} "))).count();
        if failures.is_empty() {
            writeln!(out, "PASS AC{n} ({total} checks)").unwrap();
        } else {
            writeln!(out, "FAIL AC{n} ({} of {total} checks failed)", failures.len()).unwrap();
            for line in failures {
                writeln!(out, "    {line}").unwrap();
            }
        }
    }
    for line in outcome.report.checks.iter().map(|c| c.line()) {
        writeln!(out, "  {line}").unwrap();
    }
    assert_eq!(criteria.keys().copied().collect::<Vec<_>>(), (1..=11).collect::<Vec<_>>());
    assert!(outcome.report.failures.is_empty(), "{:?}", outcome.report.failures);
    assert!(failed.is_empty(), "failed: {failed:?}");
}
