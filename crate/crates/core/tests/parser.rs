mod common;

#[test]
fn reply_corpus_parses_per_contract() {
    let problems = common::check_parser_corpus();
    assert!(problems.is_empty(), "{}", problems.join("\n"));
}

#[test]
fn corpus_covers_every_reply_shape() {
    let cases = common::parser_cases();
    assert!(cases.iter().any(|(c, _)| c.expect.is_none()));
    assert!(cases.iter().any(|(_, t)| t.contains("```")));
    assert!(cases
        .iter()
        .any(|(_, t)| !t.trim_start().starts_with('{') && !t.starts_with('`')));
}

#[test]
fn retry_then_invalidate() {
    let problems = common::check_retry_behavior();
    assert!(problems.is_empty(), "{}", problems.join("\n"));
}
