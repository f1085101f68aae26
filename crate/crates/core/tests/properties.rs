mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::gen;
use iotrace::docgen::{extract_doc_comments, render_function_page, source_files};
use iotrace::model::BaseEncoding;
use iotrace::selector::{select_sessions, SelectionStrategy};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn ok(r: Result<(), String>) -> Result<(), TestCaseError> {
    r.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn sessions_round_trip(s in gen::session()) {
        ok(gen::check_round_trip(&s))?;
    }

    #[test]
    fn selector_membership_and_determinism(records in gen::selector_input(), seed in any::<u64>()) {
        ok(gen::check_selector(&records, seed))?;
    }

    #[test]
    fn scalar_rendering_is_pure(n in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)], enc in gen::encoding(), seed in any::<u64>()) {
        let raw = &seed.to_le_bytes()[..n];
        ok(gen::check_scalar(raw, enc))?;
    }

    #[test]
    fn float_bit_patterns_round_trip(bits in any::<u64>(), bits32 in any::<u32>()) {
        ok(gen::check_scalar(&bits.to_le_bytes(), BaseEncoding::Float))?;
        ok(gen::check_scalar(&bits32.to_le_bytes(), BaseEncoding::Float))?;
    }
}

proptest! {
    #![proptest_config(config(500))]

    #[test]
    fn cofilter_matches_brute_force((set, var, value) in gen::tuple_set()) {
        ok(gen::check_aggregator(&set, var, &value))?;
    }

    #[test]
    fn flattened_tables_are_sound(ex in gen::example()) {
        ok(gen::check_table(&ex))?;
    }

    #[test]
    fn pool_selection_is_a_member(sessions in proptest::collection::vec(gen::session(), 1..4), seed in any::<u64>()) {
        let picked = select_sessions(&sessions, SelectionStrategy::Random(seed));
        prop_assert_eq!(&picked, &select_sessions(&sessions, SelectionStrategy::Random(seed)));
        for ex in &picked {
            let found = sessions.iter().any(|s| {
                s.id() == ex.source_session
                    && s.records.get(ex.function()).is_some_and(|rs| rs.contains(&ex.record))
            });
            prop_assert!(found && ex.record.is_completed());
        }
        let names: BTreeSet<&str> = picked.iter().map(|e| e.function()).collect();
        prop_assert_eq!(names.len(), picked.len());
    }
}

#[test]
fn selection_is_uniform_over_four_records() {
    for share in gen::selection_shares(4, 10_000) {
        assert!((share - 0.25).abs() <= 0.05, "{share}");
    }
}

#[test]
fn gcd_replay_histograms() {
    gen::check_gcd_replay().unwrap();
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn report_counts_nest_on_fixture_subsets(src in any::<u16>(), doc in any::<u16>(), ex in any::<u16>()) {
        ok(gen::check_report_subset(src, doc, ex))?;
    }
}

#[test]
fn fixture_pages_render_deterministically() {
    let index = common::index();
    let docs = extract_doc_comments(&source_files(&common::traced().lib_dir).unwrap());
    for ex in common::fixture_examples() {
        gen::check_table(ex).unwrap();
        let Some(doc) = docs.get(ex.function()) else { continue };
        let sig = index.resolve_function(ex.function()).unwrap();
        let a = render_function_page(sig, &index.types, doc, Some(ex)).unwrap();
        let b = render_function_page(sig, &index.types, doc, Some(ex)).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("<opaque>"), "{a}");
    }
}
