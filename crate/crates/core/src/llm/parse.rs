use std::sync::OnceLock;

use regex::Regex;

use crate::label::VerdictLabel;

fn notbuggy_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bnot[ _-]?buggy\b").expect("static regex"))
}

fn buggy_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bbuggy\b").expect("static regex"))
}

/// Which labels a line mentions: (buggy, notbuggy).
fn mentions(line: &str) -> (bool, bool) {
    let not = notbuggy_re().is_match(line);
    let stripped = notbuggy_re().replace_all(line, " ");
    (buggy_re().is_match(&stripped), not)
}

/// Map raw model output onto a label.
///
/// Single-word answers must be exactly `buggy`, `notbuggy` or `not buggy`
/// after trimming quotes and punctuation. Reasoning answers are decided by
/// the last line that mentions a label; that line must mention only one of
/// the two, and everything above it is returned as the reasoning.
pub fn parse_verdict(raw: &str, expects_reasoning: bool) -> (VerdictLabel, Option<String>) {
    if !expects_reasoning {
        let word: String = raw.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        let label = match word.as_str() {
            "buggy" => VerdictLabel::Buggy,
            "notbuggy" | "not buggy" => VerdictLabel::NotBuggy,
            _ => VerdictLabel::Unparseable,
        };
        return (label, None);
    }

    let lines: Vec<&str> = raw.lines().collect();
    for (k, line) in lines.iter().enumerate().rev() {
        let label = match mentions(line) {
            (false, false) => continue,
            (true, false) => VerdictLabel::Buggy,
            (false, true) => VerdictLabel::NotBuggy,
            (true, true) => return (VerdictLabel::Unparseable, None),
        };
        let reasoning = lines[..k].join("\n").trim().to_string();
        return (label, (!reasoning.is_empty()).then_some(reasoning));
    }
    (VerdictLabel::Unparseable, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_words() {
        assert_eq!(parse_verdict("Buggy", false), (VerdictLabel::Buggy, None));
        assert_eq!(parse_verdict("  \"NotBuggy.\"\n", false), (VerdictLabel::NotBuggy, None));
        assert_eq!(parse_verdict("**not buggy**", false), (VerdictLabel::NotBuggy, None));
        assert_eq!(parse_verdict("I cannot decide", false), (VerdictLabel::Unparseable, None));
        assert_eq!(parse_verdict("Buggy, probably", false), (VerdictLabel::Unparseable, None));
    }

    #[test]
    fn reasoning_answer_uses_last_label_line() {
        let raw = "The commit message describes a bug in ImmutableFieldRule.\n\
                   A Buggy change would alter the rule's logic.\n\
                   However, the only change is renaming occurance to occ. This modification doesn't address the logic or behavior of the code.\n\
                   Final answer: NotBuggy";
        let (label, reasoning) = parse_verdict(raw, true);
        assert_eq!(label, VerdictLabel::NotBuggy);
        let reasoning = reasoning.unwrap();
        assert!(reasoning.starts_with("The commit message"));
        assert!(reasoning.ends_with("behavior of the code."));
    }

    #[test]
    fn ambiguous_deciding_line() {
        assert_eq!(parse_verdict("both buggy and notbuggy apply", true), (VerdictLabel::Unparseable, None));
        assert_eq!(parse_verdict("no verdict here", true), (VerdictLabel::Unparseable, None));
    }

    #[test]
    fn answer_on_first_line_has_no_reasoning() {
        assert_eq!(parse_verdict("Buggy\n\n", true), (VerdictLabel::Buggy, None));
        assert_eq!(parse_verdict("Not buggy", true), (VerdictLabel::NotBuggy, None));
    }

    #[test]
    fn words_containing_labels_do_not_count() {
        assert_eq!(parse_verdict("debuggyness\nAnswer: Buggy", true).0, VerdictLabel::Buggy);
        assert_eq!(parse_verdict("Answer: Buggy\nsee debuggyness", true).0, VerdictLabel::Buggy);
    }

    proptest::proptest! {
        #[test]
        fn never_panics(raw in ".*", cot in proptest::bool::ANY) {
            let (label, reasoning) = parse_verdict(&raw, cot);
            if label == VerdictLabel::Unparseable {
                proptest::prop_assert!(reasoning.is_none());
            }
        }
    }
}
