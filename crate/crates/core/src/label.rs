use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Name of a mental task (`right_hand`, `left_hand`, ...) or the no-control
/// state `idle`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskLabel(String);

impl TaskLabel {
    pub const IDLE: &'static str = "idle";

    /// Labels are non-empty and contain no whitespace or commas, so they can
    /// appear unquoted in the text formats.
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ',') {
            None
        } else {
            Some(Self(name))
        }
    }

    pub fn idle() -> Self {
        Self(Self::IDLE.to_string())
    }

    pub fn is_idle(&self) -> bool {
        self.0 == Self::IDLE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TaskLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s).ok_or_else(|| format!("invalid task label {s:?}"))
    }
}

/// Shorthand for building labels from known-good literals.
pub fn label(name: &str) -> TaskLabel {
    TaskLabel::new(name).unwrap_or_else(|| panic!("invalid task label {name:?}"))
}

impl TryFrom<String> for TaskLabel {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskLabel> for String {
    fn from(l: TaskLabel) -> Self {
        l.0
    }
}
