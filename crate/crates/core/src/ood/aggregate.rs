use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::log::EpisodeRecord;
use super::scenario::{Protocol, ScenarioKey, ScenarioSpec, Setting};
use super::OodError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Lift,
    Grasp,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Lift => "lift",
            Metric::Grasp => "grasp",
        }
    }

    pub fn of(self, rec: &EpisodeRecord) -> bool {
        match self {
            Metric::Lift => rec.lift_success,
            Metric::Grasp => rec.grasp_success,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lift" => Ok(Metric::Lift),
            "grasp" => Ok(Metric::Grasp),
            other => Err(format!("unknown metric {other:?} (expected lift or grasp)")),
        }
    }
}

/// `successes / episodes` rounded half-up to three decimals, computed in
/// integers so that e.g. 0.5 thousandths never falls on the wrong side.
pub fn round_rate(successes: u64, episodes: u64) -> f64 {
    assert!(episodes > 0 && successes <= episodes, "invalid count {successes}/{episodes}");
    let (s, e) = (successes as u128, episodes as u128);
    let milli = (2000 * s + e) / (2 * e);
    milli as f64 / 1000.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: String,
    pub scenario: ScenarioKey,
    pub successes: u64,
    pub episodes: u64,
    pub rate: f64,
}

/// Pooled counts over several cells: one setting of one protocol, or a
/// protocol's grand total when `setting` is `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub policy: String,
    pub protocol: Protocol,
    pub setting: Option<Setting>,
    pub successes: u64,
    pub episodes: u64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub metric: Metric,
    /// Ordered by policy name, then scenario declaration order.
    pub cells: Vec<Cell>,
    pub setting_marginals: Vec<Marginal>,
    pub totals: Vec<Marginal>,
}

impl SuccessTable {
    pub fn policies(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.cells.iter().map(|c| c.policy.as_str()).collect();
        out.dedup();
        out
    }

    pub fn cell(&self, policy: &str, scenario: &ScenarioKey) -> Option<&Cell> {
        self.cells.iter().find(|c| c.policy == policy && &c.scenario == scenario)
    }

    pub fn setting_marginal(&self, policy: &str, protocol: Protocol, setting: Setting) -> Option<&Marginal> {
        self.setting_marginals
            .iter()
            .find(|m| m.policy == policy && m.protocol == protocol && m.setting == Some(setting))
    }

    pub fn total(&self, policy: &str, protocol: Protocol) -> Option<&Marginal> {
        self.totals.iter().find(|m| m.policy == policy && m.protocol == protocol)
    }
}

fn check_lift_implies_grasp<'a>(records: impl IntoIterator<Item = &'a EpisodeRecord>) -> Result<(), OodError> {
    let bad: Vec<String> = records.into_iter().filter(|r| r.lift_success && !r.grasp_success).map(|r| r.id()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(OodError::LiftWithoutGrasp { records: bad })
    }
}

fn pooled(policy: &str, protocol: Protocol, setting: Option<Setting>, (s, e): (u64, u64)) -> Marginal {
    Marginal { policy: policy.to_string(), protocol, setting, successes: s, episodes: e, rate: round_rate(s, e) }
}

/// Success table of `metric` over `records`. Every record must belong to one
/// of `scenarios`; the denominator of a cell is the number of episodes
/// actually logged for it.
pub fn aggregate(records: &[EpisodeRecord], scenarios: &[ScenarioSpec], metric: Metric) -> Result<SuccessTable, OodError> {
    if records.is_empty() {
        return Err(OodError::NoRecords);
    }
    check_lift_implies_grasp(records)?;
    let order: HashMap<ScenarioKey, usize> = scenarios.iter().enumerate().map(|(i, s)| (s.key(), i)).collect();

    let mut seen = HashSet::new();
    let mut counts: BTreeMap<(&str, usize), (u64, u64)> = BTreeMap::new();
    for rec in records {
        let key = rec.scenario();
        let Some(&idx) = order.get(&key) else {
            return Err(OodError::UnknownScenario { record: rec.id(), scenario: key.to_string() });
        };
        if !seen.insert((rec.policy.as_str(), idx, rec.episode)) {
            return Err(OodError::DuplicateEpisode { record: rec.id() });
        }
        let c = counts.entry((rec.policy.as_str(), idx)).or_default();
        c.0 += u64::from(metric.of(rec));
        c.1 += 1;
    }

    let mut cells = Vec::with_capacity(counts.len());
    let mut by_setting: BTreeMap<(&str, Protocol, Setting), (u64, u64)> = BTreeMap::new();
    let mut by_protocol: BTreeMap<(&str, Protocol), (u64, u64)> = BTreeMap::new();
    for (&(policy, idx), &(s, e)) in &counts {
        let spec = &scenarios[idx];
        if let Some(planned) = spec.episodes_per_setting {
            if u64::from(planned) != e {
                log::warn!("{policy} has {e} episodes of {} (planned {planned})", spec.key());
            }
        }
        for acc in [
            by_setting.entry((policy, spec.protocol, spec.setting)).or_default(),
            by_protocol.entry((policy, spec.protocol)).or_default(),
        ] {
            acc.0 += s;
            acc.1 += e;
        }
        cells.push(Cell { policy: policy.to_string(), scenario: spec.key(), successes: s, episodes: e, rate: round_rate(s, e) });
    }

    Ok(SuccessTable {
        metric,
        cells,
        setting_marginals: by_setting.into_iter().map(|((p, pr, st), c)| pooled(p, pr, Some(st), c)).collect(),
        totals: by_protocol.into_iter().map(|((p, pr), c)| pooled(p, pr, None, c)).collect(),
    })
}

/// Synthetic log with exactly the table's counts: in each cell the first
/// `successes` episodes succeed. Aggregating it reproduces the table.
pub fn expand(table: &SuccessTable) -> Vec<EpisodeRecord> {
    let mut out = Vec::new();
    for cell in &table.cells {
        for episode in 0..cell.episodes {
            let ok = episode < cell.successes;
            out.push(EpisodeRecord {
                policy: cell.policy.clone(),
                object: cell.scenario.object.clone(),
                setting: cell.scenario.setting,
                protocol: cell.scenario.protocol,
                episode,
                grasp_success: ok,
                lift_success: ok && table.metric == Metric::Lift,
                sub_setting: cell.scenario.sub_setting.clone(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSuccess {
    pub policy: String,
    pub episodes: u64,
    pub grasps: u64,
    pub lifts: u64,
    pub grasp_rate: f64,
    pub lift_rate: f64,
}

/// Overall grasp and lift rates per policy across all given records.
pub fn partial_success_summary(records: &[EpisodeRecord]) -> Result<Vec<PartialSuccess>, OodError> {
    if records.is_empty() {
        return Err(OodError::NoRecords);
    }
    check_lift_implies_grasp(records)?;
    let mut counts: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for rec in records {
        let c = counts.entry(rec.policy.as_str()).or_default();
        c.0 += 1;
        c.1 += u64::from(rec.grasp_success);
        c.2 += u64::from(rec.lift_success);
    }
    Ok(counts
        .into_iter()
        .map(|(policy, (e, g, l))| PartialSuccess {
            policy: policy.to_string(),
            episodes: e,
            grasps: g,
            lifts: l,
            grasp_rate: round_rate(g, e),
            lift_rate: round_rate(l, e),
        })
        .collect())
}

/// `100 * (candidate - baseline) / baseline`, rounded to a whole percent.
pub fn relative_improvement(candidate: f64, baseline: f64) -> Result<i64, OodError> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(OodError::ZeroBaseline(baseline));
    }
    Ok((100.0 * (candidate - baseline) / baseline).round() as i64)
}
