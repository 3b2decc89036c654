use std::fmt;

use serde::{Deserialize, Serialize};

/// The three YCB objects used out of domain.
pub const OOD_OBJECTS: [&str; 3] = ["pear", "mustard_bottle", "tomato_can"];
pub const IN_DOMAIN_OBJECT: &str = "coke_can";
pub const IN_DOMAIN_SUB_SETTINGS: [&str; 3] = ["horizontal", "vertical", "standing"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Single,
    Distractor,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Single => "single",
            Setting::Distractor => "distractor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    VisualMatching,
    VariantAggregation,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::VisualMatching => "visual_matching",
            Protocol::VariantAggregation => "variant_aggregation",
        }
    }
}

/// Identity of a scenario, as written in every log line.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub protocol: Protocol,
    pub object: String,
    pub setting: Setting,
    pub sub_setting: Option<String>,
}

impl fmt::Display for ScenarioKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.protocol.as_str(), self.object, self.setting.as_str())?;
        if let Some(s) = &self.sub_setting {
            write!(f, "/{s}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub target_object: String,
    pub setting: Setting,
    pub sub_setting: Option<String>,
    /// Planned episodes per policy. `None` when the count is only known from
    /// the logs themselves.
    pub episodes_per_setting: Option<u32>,
    /// Always empty for [`Setting::Single`].
    pub distractor_objects: Vec<String>,
    pub protocol: Protocol,
}

impl ScenarioSpec {
    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            protocol: self.protocol,
            object: self.target_object.clone(),
            setting: self.setting,
            sub_setting: self.sub_setting.clone(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.setting == Setting::Distractor || self.distractor_objects.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteDefaults {
    pub episodes_per_setting: u32,
}

impl Default for SuiteDefaults {
    fn default() -> Self {
        SuiteDefaults { episodes_per_setting: 36 }
    }
}

/// Three objects alone, then the same three among distractors, under visual
/// matching.
/// The distractor layout is not enumerated, so distractor lists stay empty.
pub fn ood_suite(defaults: SuiteDefaults) -> Vec<ScenarioSpec> {
    let mut out = Vec::with_capacity(6);
    for setting in [Setting::Single, Setting::Distractor] {
        for object in OOD_OBJECTS {
            out.push(ScenarioSpec {
                target_object: object.to_string(),
                setting,
                sub_setting: None,
                episodes_per_setting: Some(defaults.episodes_per_setting),
                distractor_objects: Vec::new(),
                protocol: Protocol::VisualMatching,
            });
        }
    }
    out
}

/// The coke-can pick task in its three orientations, under both protocols.
/// Episode counts come from the logs.
pub fn in_domain_suite() -> Vec<ScenarioSpec> {
    let mut out = Vec::with_capacity(6);
    for protocol in [Protocol::VisualMatching, Protocol::VariantAggregation] {
        for sub in IN_DOMAIN_SUB_SETTINGS {
            out.push(ScenarioSpec {
                target_object: IN_DOMAIN_OBJECT.to_string(),
                setting: Setting::Single,
                sub_setting: Some(sub.to_string()),
                episodes_per_setting: None,
                distractor_objects: Vec::new(),
                protocol,
            });
        }
    }
    out
}

pub fn scenario_suite(defaults: SuiteDefaults) -> Vec<ScenarioSpec> {
    let mut out = ood_suite(defaults);
    out.extend(in_domain_suite());
    out
}
