use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Binary ground-truth label of a method-level change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Buggy,
    NotBuggy,
}

impl Label {
    pub fn flip(self) -> Self {
        match self {
            Label::Buggy => Label::NotBuggy,
            Label::NotBuggy => Label::Buggy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Buggy => "Buggy",
            Label::NotBuggy => "NotBuggy",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid label {0:?}: expected Buggy or NotBuggy")]
pub struct InvalidLabel(pub String);

impl FromStr for Label {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buggy" => Ok(Label::Buggy),
            "notbuggy" | "not buggy" | "not_buggy" => Ok(Label::NotBuggy),
            _ => Err(InvalidLabel(s.to_string())),
        }
    }
}

/// Outcome of an automatic classifier; `Unparseable` marks model output that
/// could not be mapped onto a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictLabel {
    Buggy,
    NotBuggy,
    Unparseable,
}

impl VerdictLabel {
    pub fn label(self) -> Option<Label> {
        match self {
            VerdictLabel::Buggy => Some(Label::Buggy),
            VerdictLabel::NotBuggy => Some(Label::NotBuggy),
            VerdictLabel::Unparseable => None,
        }
    }
}

impl From<Label> for VerdictLabel {
    fn from(label: Label) -> Self {
        match label {
            Label::Buggy => VerdictLabel::Buggy,
            Label::NotBuggy => VerdictLabel::NotBuggy,
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictLabel::Buggy => f.write_str("Buggy"),
            VerdictLabel::NotBuggy => f.write_str("NotBuggy"),
            VerdictLabel::Unparseable => f.write_str("Unparseable"),
        }
    }
}
