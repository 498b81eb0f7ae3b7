use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vscan_core::corpus::{classify_lines, LanguageProfile, LineClass};
use vscan_testkit::{naive_classify, random_source, GenProfile, NaiveClass, Syntax};

fn to_naive(c: LineClass) -> NaiveClass {
    match c {
        LineClass::Code => NaiveClass::Code,
        LineClass::Comment => NaiveClass::Comment,
        LineClass::Blank => NaiveClass::Blank,
    }
}

fn check(text: &str, profile: &LanguageProfile, syntax: &Syntax) {
    let fast: Vec<NaiveClass> = classify_lines(text, profile)
        .classes
        .into_iter()
        .map(to_naive)
        .collect();
    let slow = naive_classify(text, syntax);
    assert_eq!(fast, slow, "disagreement on {text:?}");
}

#[test]
fn agrees_with_reference_on_generated_files() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..1_200 {
        let (gp, profile, syntax) = if i % 3 == 0 {
            (GenProfile::Sql, LanguageProfile::sql(), Syntax::sql())
        } else {
            (GenProfile::C, LanguageProfile::c(), Syntax::c())
        };
        let text = random_source(&mut rng, gp, 60);
        check(&text, &profile, &syntax);
    }
}

proptest! {
    #[test]
    fn agrees_on_arbitrary_c_text(text in "[a-z /*\"'\\\\\n\t-]{0,80}") {
        check(&text, &LanguageProfile::c(), &Syntax::c());
    }

    #[test]
    fn agrees_on_arbitrary_sql_text(text in "[a-z /*\"'\\\\\n-]{0,80}") {
        check(&text, &LanguageProfile::sql(), &Syntax::sql());
    }

    #[test]
    fn counts_partition_physical_lines(text in "[a-z /*\"'\\\\\r\n-]{0,120}") {
        let c = classify_lines(&text, &LanguageProfile::c());
        prop_assert_eq!(c.counts.physical as usize, text.lines().count());
        prop_assert_eq!(c.counts.code + c.counts.comment + c.counts.blank, c.counts.physical);
        prop_assert_eq!(c.classes.len() as u64, c.counts.physical);
    }
}
