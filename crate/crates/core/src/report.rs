//! Report structures shared by every campaign.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub comparison: String,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
    /// Informational checks do not gate the campaign outcome.
    pub informational: bool,
}
