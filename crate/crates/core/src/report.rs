//! Pass/fail records shared by the hypothesis validators and the balance checkers.

use serde::{Deserialize, Serialize};

/// A sampled point at which a checked inequality fails.
///
/// `lhs` and `rhs` are the two sides of the sampled inequality `lhs <= rhs`
/// (strict `lhs < rhs` for positivity checks), so a witness always has
/// `lhs > rhs` (or `lhs >= rhs` in the strict case).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: [f64; 2],
    /// Second sample coordinate where the check ranges over pairs `(p, q)`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<[f64; 2]>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub hypothesis: String,
    pub pass: bool,
    /// Fitted constant (`λ̂`, `Λ̂`, `K̂`, ...) or measured extremum.
    pub constant: f64,
    #[serde(rename = "witness_point")]
    pub witness: Option<Witness>,
    pub sample_range: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.pass
    }

    pub(crate) fn new(
        hypothesis: impl Into<String>,
        constant: f64,
        witness: Option<Witness>,
        sample_range: impl Into<String>,
    ) -> Self {
        Self {
            hypothesis: hypothesis.into(),
            pass: witness.is_none(),
            constant,
            witness,
            sample_range: sample_range.into(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}
