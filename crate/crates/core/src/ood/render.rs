use std::fmt::Write as _;

use super::aggregate::{PartialSuccess, SuccessTable};
use super::scenario::{Protocol, ScenarioKey, ScenarioSpec, Setting};

fn label(key: &ScenarioKey) -> String {
    match &key.sub_setting {
        Some(sub) => sub.clone(),
        None => format!("{}/{}", key.object, key.setting.as_str()),
    }
}

fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{r:.3}"))
}

fn write_row(out: &mut String, widths: &[usize], row: &[String]) {
    let mut line = String::new();
    for (i, (w, v)) in widths.iter().zip(row).enumerate() {
        if i == 0 {
            let _ = write!(line, "{v:<w$}");
        } else {
            let _ = write!(line, "  {v:>w$}");
        }
    }
    let _ = writeln!(out, "{}", line.trim_end());
}

fn write_block(out: &mut String, rows: &[Vec<String>]) {
    let mut widths = vec![0; rows[0].len()];
    for row in rows {
        for (w, v) in widths.iter_mut().zip(row) {
            *w = (*w).max(v.len());
        }
    }
    for row in rows {
        write_row(out, &widths, row);
    }
}

/// One block per protocol: a column per scenario (declaration order), pooled
/// columns per setting when there is more than one, and a total.
pub fn render_success_table(table: &SuccessTable, scenarios: &[ScenarioSpec]) -> String {
    let mut out = String::new();
    let policies = table.policies();
    for protocol in [Protocol::VisualMatching, Protocol::VariantAggregation] {
        let columns: Vec<ScenarioKey> = scenarios
            .iter()
            .map(ScenarioSpec::key)
            .filter(|k| k.protocol == protocol && table.cells.iter().any(|c| &c.scenario == k))
            .collect();
        if columns.is_empty() {
            continue;
        }
        let mut settings: Vec<Setting> = columns.iter().map(|k| k.setting).collect();
        settings.sort();
        settings.dedup();
        let pooled_settings = if settings.len() > 1 { settings } else { Vec::new() };

        let mut header = vec![format!("[{}] {}", protocol.as_str(), table.metric)];
        header.extend(columns.iter().map(label));
        header.extend(pooled_settings.iter().map(|s| format!("{} overall", s.as_str())));
        header.push("total".into());
        let mut rows = vec![header];
        for policy in &policies {
            let mut row = vec![policy.to_string()];
            row.extend(columns.iter().map(|k| rate(table.cell(policy, k).map(|c| c.rate))));
            row.extend(pooled_settings.iter().map(|s| rate(table.setting_marginal(policy, protocol, *s).map(|m| m.rate))));
            row.push(rate(table.total(policy, protocol).map(|m| m.rate)));
            rows.push(row);
        }
        if !out.is_empty() {
            out.push('\n');
        }
        write_block(&mut out, &rows);
    }
    out
}

pub fn render_partial_table(summary: &[PartialSuccess]) -> String {
    let mut rows = vec![vec!["policy".to_string(), "episodes".into(), "grasp".into(), "lift".into()]];
    for s in summary {
        rows.push(vec![s.policy.clone(), s.episodes.to_string(), format!("{:.3}", s.grasp_rate), format!("{:.3}", s.lift_rate)]);
    }
    let mut out = String::new();
    write_block(&mut out, &rows);
    out
}
