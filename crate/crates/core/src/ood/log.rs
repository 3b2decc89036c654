use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::scenario::{Protocol, ScenarioKey, Setting};
use super::OodError;

/// One line of an episode log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub policy: String,
    pub object: String,
    pub setting: Setting,
    pub protocol: Protocol,
    pub episode: u64,
    pub grasp_success: bool,
    pub lift_success: bool,
    /// Present in every line, `null` when the scenario has no sub-setting.
    #[serde(deserialize_with = "required_nullable")]
    pub sub_setting: Option<String>,
}

fn required_nullable<'de, D: Deserializer<'de>>(de: D) -> Result<Option<String>, D::Error> {
    Option::deserialize(de)
}

impl EpisodeRecord {
    pub fn scenario(&self) -> ScenarioKey {
        ScenarioKey {
            protocol: self.protocol,
            object: self.object.clone(),
            setting: self.setting,
            sub_setting: self.sub_setting.clone(),
        }
    }

    /// Human-readable id used in diagnostics.
    pub fn id(&self) -> String {
        format!("{}@{}#{}", self.policy, self.scenario(), self.episode)
    }
}

/// Parses a JSONL log. Blank lines are skipped; a lift without a grasp is a
/// schema error.
pub fn parse_log(text: &str) -> Result<Vec<EpisodeRecord>, OodError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec: EpisodeRecord =
            serde_json::from_str(line).map_err(|e| OodError::Schema { line: line_no, reason: e.to_string() })?;
        if rec.lift_success && !rec.grasp_success {
            return Err(OodError::Schema {
                line: line_no,
                reason: format!("lift without grasp in {}", rec.id()),
            });
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(OodError::NoRecords);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<EpisodeRecord>, OodError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| OodError::Io { path: path.display().to_string(), source })?;
    parse_log(&text)
}
