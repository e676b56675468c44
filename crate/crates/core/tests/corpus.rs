use matra_core::corpus::{
    build_bidirectional, build_vocab, clean_pairs, declared_languages, ingest_news, parse_news_xml, split_corpus, CleaningRule,
    LanguageTag, SplitRatios, TransliterationTriple,
};
use proptest::prelude::*;
use LanguageTag::{English, Hindi};

const XML: &[u8] = include_bytes!("fixtures/news_en_hi.xml");
const TSV: &str = include_str!("fixtures/news_en_hi.tsv");

fn eh(s: &str, t: &str) -> TransliterationTriple {
    TransliterationTriple::new(s, t, English, Hindi)
}

#[test]
fn fixture_parses_to_the_enumerated_triples() {
    assert_eq!(declared_languages(XML), Some((English, Hindi)));
    let parsed = parse_news_xml(XML, English, Hindi, true).unwrap();
    assert_eq!(
        parsed.triples,
        vec![
            eh("LEAGUE", "लीग"),
            eh("KIRAN", "किरण"),
            eh("KIRAN", "किरन"),
            eh("NEW DELHI", "नईदिल्ली"),
            eh("O'BRIEN", "ओब्रायन"),
            eh("LEAGUE", "लीग"),
        ]
    );
    assert_eq!(parsed.warnings, 0);
}

#[test]
fn fixture_cleaning_report() {
    let file = ingest_news(XML, English, Hindi, true, "news_en_hi.xml").unwrap();
    assert_eq!(
        file.dataset.triples,
        vec![eh("LEAGUE", "लीग"), eh("KIRAN", "किरण"), eh("KIRAN", "किरन"), eh("OBRIEN", "ओब्रायन")]
    );
    let rules: Vec<(String, CleaningRule)> = file.rejections.iter().map(|r| (r.source.clone(), r.rule)).collect();
    assert_eq!(
        rules,
        vec![
            ("NEW DELHI".into(), CleaningRule::WordCount),
            ("O'BRIEN".into(), CleaningRule::ForeignCharsStripped),
            ("LEAGUE".into(), CleaningRule::Duplicate),
        ]
    );
}

#[test]
fn fixture_tsv_is_byte_exact() {
    let file = ingest_news(XML, English, Hindi, true, "news_en_hi.xml").unwrap();
    let corpus = build_bidirectional(&[file.dataset]).unwrap();
    let mut out = Vec::new();
    corpus.write_tsv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), TSV);
    assert!(TSV.starts_with("LEAGUE\tलीग\t<hindi>\t"));
    assert!(TSV.contains("\nलीग\tLEAGUE\t<english>\t"));
}

#[test]
fn merged_targets_stay_in_their_script() {
    let file = ingest_news(XML, English, Hindi, true, "f").unwrap();
    let corpus = build_bidirectional(&[file.dataset]).unwrap();
    for t in corpus.iter() {
        assert!(t.target.chars().all(|c| t.target_lang.in_script(c)), "{t:?}");
        assert!(t.source.chars().all(|c| t.source_lang.in_script(c)), "{t:?}");
    }
}

fn pair() -> impl Strategy<Value = TransliterationTriple> {
    let latin = "[A-Za-z'\\-]{1,6}( [A-Z]{1,4})?";
    let deva = "[\u{0915}-\u{0939}\u{093E}-\u{094D}0-9]{1,6}( [\u{0915}-\u{0939}]{1,4})?";
    (latin, deva).prop_map(|(s, t)| eh(&s, &t))
}

proptest! {
    #[test]
    fn cleaning_is_idempotent(pairs in prop::collection::vec(pair(), 0..20)) {
        let (once, _) = clean_pairs(pairs);
        let (twice, report) = clean_pairs(once.clone());
        prop_assert_eq!(&once, &twice);
        prop_assert!(report.is_empty());
    }

    #[test]
    fn reversing_commutes_with_parsing(pairs in prop::collection::vec(("[A-Z]{1,6}", "[\u{0915}-\u{0939}]{1,6}"), 1..10)) {
        let xml = |items: &[(String, String)]| {
            let names: String = items
                .iter()
                .map(|(s, t)| format!("<Name><SourceName>{s}</SourceName><TargetName>{t}</TargetName></Name>"))
                .collect();
            format!("<TransliterationCorpus>{names}</TransliterationCorpus>")
        };
        let forward = parse_news_xml(xml(&pairs).as_bytes(), English, Hindi, true).unwrap();
        let flipped: Vec<(String, String)> = pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
        let backward = parse_news_xml(xml(&flipped).as_bytes(), Hindi, English, true).unwrap();
        let mut a: Vec<_> = forward.triples.iter().map(TransliterationTriple::reversed).collect();
        let mut b = backward.triples;
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn splits_are_deterministic(seed in any::<u64>()) {
        let file = ingest_news(XML, English, Hindi, true, "f").unwrap();
        let corpus = build_bidirectional(&[file.dataset]).unwrap();
        let ratios = SplitRatios::default();
        prop_assert_eq!(split_corpus(&corpus, seed, ratios).unwrap(), split_corpus(&corpus, seed, ratios).unwrap());
    }
}

#[test]
fn vocabulary_is_independent_of_triple_order() {
    let file = ingest_news(XML, English, Hindi, true, "f").unwrap();
    let corpus = build_bidirectional(&[file.dataset]).unwrap();
    let mut reversed = corpus.triples.clone();
    reversed.reverse();
    assert_eq!(build_vocab(corpus.iter()), build_vocab(reversed.iter()));
}
