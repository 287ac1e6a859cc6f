//! Method-level unified diffs with the whole method shown as context.

use similar::{ChangeTag, TextDiff};

use super::MiningError;

/// Strip trailing whitespace on every line and collapse runs of blank lines
/// into one. Leading and trailing blank lines are dropped.
pub fn normalize_source(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut pending_blank = false;
    for line in src.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            pending_blank = !out.is_empty();
            continue;
        }
        if pending_blank {
            out.push('\n');
            pending_blank = false;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Unified diff of two method sources after normalization.
///
/// The output is a single hunk covering both versions completely: a
/// `---`/`+++` header, one `@@` line, then every line prefixed with ` `,
/// `-` or `+`.
pub fn compute_method_diff(before: &str, after: &str) -> Result<String, MiningError> {
    let before = normalize_source(before);
    let after = normalize_source(after);
    if before == after {
        return Err(MiningError::NoChange);
    }

    let diff = TextDiff::from_lines(&before, &after);
    let old_len = before.lines().count();
    let new_len = after.lines().count();

    let mut out = String::new();
    out.push_str("--- before\n+++ after\n");
    out.push_str(&format!("@@ -{} +{} @@\n", hunk_range(old_len), hunk_range(new_len)));
    for change in diff.iter_all_changes() {
        let prefix = match change.tag() {
            ChangeTag::Equal => ' ',
            ChangeTag::Delete => '-',
            ChangeTag::Insert => '+',
        };
        out.push(prefix);
        out.push_str(change.value().trim_end_matches('\n'));
        out.push('\n');
    }
    Ok(out)
}

fn hunk_range(len: usize) -> String {
    match len {
        0 => "0,0".to_string(),
        1 => "1".to_string(),
        n => format!("1,{n}"),
    }
}

/// Content lines of a diff with the given prefix, excluding file headers.
pub fn count_prefixed(diff: &str, prefix: char) -> usize {
    diff.lines().filter(|l| !l.starts_with("---") && !l.starts_with("+++")).filter(|l| l.starts_with(prefix)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sources_are_no_change() {
        let src = "void f() {\n  x();\n}\n";
        assert!(matches!(compute_method_diff(src, src), Err(MiningError::NoChange)));
    }

    #[test]
    fn whitespace_only_edits_are_no_change() {
        let a = "void f() {\n  x();\n\n  y();\n}\n";
        let b = "void f() {   \n  x();\t\n\n\n\n  y();\n}";
        assert!(matches!(compute_method_diff(a, b), Err(MiningError::NoChange)));
    }

    #[test]
    fn one_line_edit_has_one_minus_one_plus() {
        let a = "int f() {\n  return 1;\n}\n";
        let b = "int f() {\n  return 2;\n}\n";
        let d = compute_method_diff(a, b).unwrap();
        assert_eq!(count_prefixed(&d, '-'), 1);
        assert_eq!(count_prefixed(&d, '+'), 1);
        assert_eq!(count_prefixed(&d, ' '), 2);
    }

    // Expected text produced by `diff -U 1000` on the same pair, with GNU's
    // file header lines replaced by ours.
    #[test]
    fn appended_statement_matches_gnu_diff() {
        let a = "void log(String m) {\n    out.println(m);\n}\n";
        let b = "void log(String m) {\n    out.println(m);\n    out.flush();\n}\n";
        let d = compute_method_diff(a, b).unwrap();
        assert_eq!(
            d,
            "--- before\n+++ after\n@@ -1,3 +1,4 @@\n void log(String m) {\n     out.println(m);\n+    out.flush();\n }\n"
        );
        assert_eq!(count_prefixed(&d, '+'), 1);
        assert_eq!(count_prefixed(&d, '-'), 0);
    }

    #[test]
    fn added_method_is_all_plus() {
        let d = compute_method_diff("", "void g() {\n}\n").unwrap();
        assert!(d.contains("@@ -0,0 +1,2 @@"));
        assert_eq!(count_prefixed(&d, '+'), 2);
    }

    #[test]
    fn normalization_collapses_blank_runs() {
        assert_eq!(normalize_source("a  \n\n\n\nb\n\n"), "a\n\nb\n");
        assert_eq!(normalize_source("\n\n"), "");
    }
}
