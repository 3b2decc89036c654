//! Published success tables and helpers that rebuild episode logs from them.
//!
//! Each log holds `round(rate * episodes)` successes per cell. A handful of
//! printed cells cannot be produced by any integer count at the stated
//! episode numbers (or disagree with their own row); those are listed
//! explicitly so that any *other* mismatch fails loudly.

#![allow(dead_code)]

use revla_core::ood::{in_domain_suite, ood_suite, EpisodeRecord, Protocol, ScenarioSpec, SuccessTable, SuiteDefaults};

pub const TOL: f64 = 5e-4;

/// `|got - published| <= 5e-4`, allowing for the binary representation of
/// values such as 0.5475.
pub fn close(got: f64, published: f64) -> bool {
    (got - published).abs() <= TOL + 1e-12
}

pub fn implied(rate: f64, episodes: u64) -> u64 {
    (rate * episodes as f64).round() as u64
}

/// Records for one (policy, scenario) cell: the first `grasps` episodes grasp
/// and the first `lifts` of those also lift.
pub fn cell_records(policy: &str, spec: &ScenarioSpec, episodes: u64, grasps: u64, lifts: u64) -> Vec<EpisodeRecord> {
    assert!(lifts <= grasps && grasps <= episodes);
    (0..episodes)
        .map(|i| EpisodeRecord {
            policy: policy.to_string(),
            object: spec.target_object.clone(),
            setting: spec.setting,
            protocol: spec.protocol,
            episode: i,
            grasp_success: i < grasps,
            lift_success: i < lifts,
            sub_setting: spec.sub_setting.clone(),
        })
        .collect()
}

pub fn to_jsonl(records: &[EpisodeRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
}

/// A cell that does not come back at its printed value.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub policy: String,
    pub column: String,
    pub published: f64,
    pub got: f64,
}

fn check(out: &mut Vec<Mismatch>, policy: &str, column: &str, published: f64, got: Option<f64>) {
    let got = got.unwrap_or(f64::NAN);
    if !close(got, published) {
        out.push(Mismatch { policy: policy.into(), column: column.into(), published, got });
    }
}

pub fn keys(ms: &[Mismatch]) -> Vec<(String, String)> {
    let mut k: Vec<_> = ms.iter().map(|m| (m.policy.clone(), m.column.clone())).collect();
    k.sort();
    k
}

pub fn expected_keys(list: &[(&str, &str)]) -> Vec<(String, String)> {
    let mut k: Vec<_> = list.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect();
    k.sort();
    k
}

// ---------------------------------------------------------------- OOD table

pub const OOD_COLUMNS: [&str; 9] = [
    "pear/single",
    "mustard_bottle/single",
    "tomato_can/single",
    "pear/distractor",
    "mustard_bottle/distractor",
    "tomato_can/distractor",
    "single overall",
    "distractor overall",
    "total",
];

pub struct OodRow {
    pub policy: &'static str,
    /// Six cells in `ood_suite` order, then single, distractor and total.
    pub published: [f64; 9],
    pub episodes: [u64; 6],
}

const E36: [u64; 6] = [36; 6];

/// Tomato-can cells of the first row are only consistent with 34 episodes
/// (0.118 = 4/34, 0.059 = 2/34), which also reproduces that row's marginals.
pub const OOD_TABLE: [OodRow; 8] = [
    OodRow { policy: "RT1-X", published: [0.222, 0.000, 0.118, 0.167, 0.000, 0.059, 0.113, 0.075, 0.094], episodes: [36, 36, 34, 36, 36, 34] },
    OodRow { policy: "Octo", published: [0.0; 9], episodes: E36 },
    OodRow { policy: "OpenVLA", published: [0.194, 0.083, 0.389, 0.056, 0.028, 0.222, 0.222, 0.102, 0.162], episodes: E36 },
    OodRow { policy: "OpenVLA-fractal", published: [0.139, 0.028, 0.389, 0.056, 0.028, 0.167, 0.185, 0.084, 0.135], episodes: E36 },
    OodRow { policy: "D_flip", published: [0.306, 0.056, 0.306, 0.222, 0.000, 0.389, 0.223, 0.204, 0.213], episodes: E36 },
    OodRow { policy: "DS_flip", published: [0.440, 0.194, 0.361, 0.500, 0.083, 0.139, 0.330, 0.241, 0.287], episodes: E36 },
    OodRow { policy: "D_gradual", published: [0.222, 0.139, 0.556, 0.167, 0.000, 0.472, 0.306, 0.213, 0.259], episodes: E36 },
    OodRow { policy: "DS_gradual", published: [0.389, 0.110, 0.528, 0.306, 0.110, 0.220, 0.340, 0.213, 0.278], episodes: E36 },
];

/// Printed values that no count over 36 episodes yields (0.440, 0.110,
/// 0.220, ...) or that differ from the pooled counts of their own row by one
/// unit in the last place.
pub const OOD_KNOWN_MISMATCHES: [(&str, &str); 9] = [
    ("OpenVLA-fractal", "distractor overall"),
    ("OpenVLA-fractal", "total"),
    ("D_flip", "single overall"),
    ("DS_flip", "pear/single"),
    ("DS_flip", "single overall"),
    ("DS_gradual", "mustard_bottle/single"),
    ("DS_gradual", "mustard_bottle/distractor"),
    ("DS_gradual", "tomato_can/distractor"),
    ("DS_gradual", "single overall"),
];

pub fn ood_log() -> Vec<EpisodeRecord> {
    let suite = ood_suite(SuiteDefaults::default());
    let mut out = Vec::new();
    for row in &OOD_TABLE {
        for (i, spec) in suite.iter().enumerate() {
            let s = implied(row.published[i], row.episodes[i]);
            out.extend(cell_records(row.policy, spec, row.episodes[i], s, s));
        }
    }
    out
}

pub fn ood_mismatches(table: &SuccessTable) -> Vec<Mismatch> {
    use revla_core::ood::Setting;
    let suite = ood_suite(SuiteDefaults::default());
    let mut out = Vec::new();
    for row in &OOD_TABLE {
        for (i, spec) in suite.iter().enumerate() {
            let got = table.cell(row.policy, &spec.key()).map(|c| c.rate);
            check(&mut out, row.policy, OOD_COLUMNS[i], row.published[i], got);
        }
        let vm = Protocol::VisualMatching;
        let single = table.setting_marginal(row.policy, vm, Setting::Single).map(|m| m.rate);
        let distractor = table.setting_marginal(row.policy, vm, Setting::Distractor).map(|m| m.rate);
        check(&mut out, row.policy, OOD_COLUMNS[6], row.published[6], single);
        check(&mut out, row.policy, OOD_COLUMNS[7], row.published[7], distractor);
        check(&mut out, row.policy, OOD_COLUMNS[8], row.published[8], table.total(row.policy, vm).map(|m| m.rate));
    }
    out
}

// ---------------------------------------------------------- in-domain table

pub const IN_DOMAIN_COLUMNS: [&str; 4] = ["horizontal", "vertical", "standing", "average"];

pub struct InDomainRow {
    pub policy: &'static str,
    pub protocol: Protocol,
    pub published: [f64; 4],
    pub episodes: u64,
}

const VA: Protocol = Protocol::VariantAggregation;
const VM: Protocol = Protocol::VisualMatching;

/// Episode counts are not printed. 1000 per sub-setting resolves every cell
/// to three decimals; the one four-decimal cell (0.5475) needs 2000.
pub const IN_DOMAIN_TABLE: [InDomainRow; 14] = [
    InDomainRow { policy: "RT-1", protocol: VA, published: [0.969, 0.760, 0.964, 0.270], episodes: 1000 },
    InDomainRow { policy: "RT-1-X", protocol: VA, published: [0.569, 0.204, 0.698, 0.490], episodes: 1000 },
    InDomainRow { policy: "Octo-Base", protocol: VA, published: [0.005, 0.000, 0.013, 0.006], episodes: 1000 },
    InDomainRow { policy: "OpenVLA", protocol: VA, published: [0.644, 0.218, 0.729, 0.530], episodes: 1000 },
    InDomainRow { policy: "OpenVLA-fractal", protocol: VA, published: [0.483, 0.231, 0.368, 0.361], episodes: 1000 },
    InDomainRow { policy: "flip", protocol: VA, published: [0.360, 0.422, 0.469, 0.417], episodes: 1000 },
    InDomainRow { policy: "gradual", protocol: VA, published: [0.483, 0.469, 0.610, 0.521], episodes: 1000 },
    InDomainRow { policy: "RT-1", protocol: VM, published: [0.969, 0.900, 0.710, 0.857], episodes: 1000 },
    InDomainRow { policy: "RT-1-X", protocol: VM, published: [0.860, 0.790, 0.480, 0.710], episodes: 1000 },
    InDomainRow { policy: "Octo-Base", protocol: VM, published: [0.210, 0.210, 0.090, 0.170], episodes: 1000 },
    InDomainRow { policy: "OpenVLA", protocol: VM, published: [0.310, 0.030, 0.190, 0.177], episodes: 1000 },
    InDomainRow { policy: "OpenVLA-fractal", protocol: VM, published: [0.655, 0.135, 0.295, 0.361], episodes: 1000 },
    InDomainRow { policy: "flip", protocol: VM, published: [0.5475, 0.357, 0.726, 0.544], episodes: 2000 },
    InDomainRow { policy: "gradual", protocol: VM, published: [0.600, 0.413, 0.792, 0.600], episodes: 1000 },
];

/// Averages that are not the mean of their printed row.
pub const IN_DOMAIN_KNOWN_MISMATCHES: [(&str, &str); 4] = [
    ("RT-1 [variant_aggregation]", "average"),
    ("RT-1 [visual_matching]", "average"),
    ("OpenVLA-fractal [visual_matching]", "average"),
    ("gradual [visual_matching]", "average"),
];

pub fn in_domain_log() -> Vec<EpisodeRecord> {
    let suite = in_domain_suite();
    let mut out = Vec::new();
    for row in &IN_DOMAIN_TABLE {
        for (i, spec) in suite.iter().filter(|s| s.protocol == row.protocol).enumerate() {
            let s = implied(row.published[i], row.episodes);
            out.extend(cell_records(row.policy, spec, row.episodes, s, s));
        }
    }
    out
}

pub fn in_domain_mismatches(table: &SuccessTable) -> Vec<Mismatch> {
    let suite = in_domain_suite();
    let mut out = Vec::new();
    for row in &IN_DOMAIN_TABLE {
        let label = format!("{} [{}]", row.policy, row.protocol.as_str());
        for (i, spec) in suite.iter().filter(|s| s.protocol == row.protocol).enumerate() {
            let got = table.cell(row.policy, &spec.key()).map(|c| c.rate);
            check(&mut out, &label, IN_DOMAIN_COLUMNS[i], row.published[i], got);
        }
        let avg = table.total(row.policy, row.protocol).map(|m| m.rate);
        check(&mut out, &label, IN_DOMAIN_COLUMNS[3], row.published[3], avg);
    }
    out
}

// ---------------------------------------------------- partial-success table

pub struct PartialRow {
    pub policy: &'static str,
    pub lift: f64,
    pub grasp: f64,
}

pub const PARTIAL_TABLE: [PartialRow; 4] = [
    PartialRow { policy: "OpenVLA", lift: 0.162, grasp: 0.348 },
    PartialRow { policy: "OpenVLA-fractal", lift: 0.135, grasp: 0.317 },
    PartialRow { policy: "flip", lift: 0.287, grasp: 0.495 },
    PartialRow { policy: "gradual", lift: 0.278, grasp: 0.579 },
];

/// Over 216 episodes 0.348, 0.317 and 0.135 fall between attainable rates.
pub const PARTIAL_KNOWN_MISMATCHES: [(&str, &str); 3] =
    [("OpenVLA", "grasp"), ("OpenVLA-fractal", "grasp"), ("OpenVLA-fractal", "lift")];

/// 216 out-of-domain episodes per policy; grasps and lifts are spread over
/// the six cells as evenly as the counts allow.
pub fn partial_log() -> Vec<EpisodeRecord> {
    let suite = ood_suite(SuiteDefaults::default());
    let total: u64 = 216;
    let mut out = Vec::new();
    for row in &PARTIAL_TABLE {
        let (g, l) = (implied(row.grasp, total), implied(row.lift, total));
        for (i, spec) in suite.iter().enumerate() {
            let share = |n: u64| n / 6 + u64::from((i as u64) < n % 6);
            out.extend(cell_records(row.policy, spec, 36, share(g), share(l)));
        }
    }
    out
}

pub fn partial_mismatches(summary: &[revla_core::ood::PartialSuccess]) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for row in &PARTIAL_TABLE {
        let s = summary.iter().find(|s| s.policy == row.policy);
        check(&mut out, row.policy, "lift", row.lift, s.map(|s| s.lift_rate));
        check(&mut out, row.policy, "grasp", row.grasp, s.map(|s| s.grasp_rate));
    }
    out
}

