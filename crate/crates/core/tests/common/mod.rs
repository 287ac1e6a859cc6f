//! Fixture git repository for the end-to-end checks.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const DAY: i64 = 86_400;
pub const T0: i64 = 1_577_836_800; // 2020-01-01T00:00:00Z

pub const V1: &str = "public class Calc {
    public int add(int a, int b) {
        return a + b;
    }

    public int sub(int a, int b) {
        int result = a - b;
        return result;
    }

    public int mul(int a, int b) {
        return a * b;
    }

    public int div(int a, int b) {
        return a / b;
    }
}
";

const LOG: &str = "
    public void log(String msg) {
        System.out.println(msg);
    }
}
";

/// `(message, day offset, Calc.java contents)` per commit, oldest first.
pub fn history() -> Vec<(&'static str, i64, String)> {
    let v2 = V1.trim_end().trim_end_matches('}').trim_end().to_string() + "\n" + LOG;
    let v3 = v2.replace("return a + b;", "return Math.addExact(a, b);");
    let v4 = v3
        .replace(
            "        return a / b;",
            "        if (b == 0) {\n            throw new IllegalArgumentException(\"b is zero\");\n        }\n        return a / b;",
        )
        .replace("int result = a - b;\n        return result;", "int diff = a - b;\n        return diff;");
    let v5 = v4.replace("        return a * b;", "        int product = a * b;\n        return product;");
    vec![
        ("Initial import", 0, V1.to_string()),
        ("Add logging helper", 30, v2),
        ("Fix overflow in add", 800, v3),
        ("Fix #12: guard division by zero and tidy subtraction", 900, v4),
        ("Refactor multiplication", 1000, v5),
    ]
}

fn git(dir: &Path, args: &[&str], when: i64) -> Output {
    let date = format!("{when} +0000");
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(["-c", "user.name=Fixture", "-c", "user.email=fixture@example.com", "-c", "commit.gpgsign=false"])
        .args(args)
        .env("GIT_AUTHOR_DATE", &date)
        .env("GIT_COMMITTER_DATE", &date)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .output()
        .expect("git runs");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Build the fixture repository under `root` and return its path.
pub fn fixture_repo(root: &Path) -> PathBuf {
    let dir = root.join("repo");
    std::fs::create_dir_all(&dir).unwrap();
    git(&dir, &["init", "-q"], T0);
    for (msg, day, src) in history() {
        std::fs::write(dir.join("Calc.java"), src).unwrap();
        git(&dir, &["add", "Calc.java"], T0 + day * DAY);
        git(&dir, &["commit", "-q", "-m", msg], T0 + day * DAY);
    }
    dir
}
