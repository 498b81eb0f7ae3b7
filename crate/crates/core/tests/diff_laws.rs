use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use vscan_core::baseline::diff_results;
use vscan_core::{builtin_rules, ingest, scan, Finding, ScanOptions, ScanResult, Severity};

fn empty_result() -> &'static ScanResult {
    static BASE: OnceLock<ScanResult> = OnceLock::new();
    BASE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        scan(
            &ingest(dir.path(), &[], &[]).unwrap(),
            &builtin_rules(),
            &ScanOptions::default(),
        )
    })
}

fn with(base: &ScanResult, fps: &BTreeSet<u16>) -> ScanResult {
    let mut r = base.clone();
    r.findings = fps
        .iter()
        .map(|fp| Finding {
            fingerprint: format!("{fp:04x}"),
            rule_id: "r".into(),
            title: "t".into(),
            severity: Severity::ALL[*fp as usize % 7],
            path: "x.c".into(),
            line: *fp as usize,
            snippet: "s".into(),
            description: String::new(),
            occurrence_index: 0,
        })
        .collect();
    r
}

fn fps(fs: &[Finding]) -> BTreeSet<String> {
    fs.iter().map(|f| f.fingerprint.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn partition_laws(a in proptest::collection::btree_set(0u16..200, 0..80),
                      b in proptest::collection::btree_set(0u16..200, 0..80)) {
        let base = empty_result();
        let (old, cur) = (with(base, &a), with(base, &b));
        let d = diff_results(&old, &cur).unwrap();
        let (new, fixed, pers) = (fps(&d.new), fps(&d.fixed), fps(&d.persistent));
        prop_assert_eq!(new.union(&pers).cloned().collect::<BTreeSet<_>>(), fps(&cur.findings));
        prop_assert_eq!(fixed.union(&pers).cloned().collect::<BTreeSet<_>>(), fps(&old.findings));
        prop_assert!(new.is_disjoint(&fixed) && new.is_disjoint(&pers) && fixed.is_disjoint(&pers));
    }
}
