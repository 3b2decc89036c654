use std::fmt;

use serde::Serialize;

use super::{Checkpoint, DType};

/// Differences in `(name, shape, dtype)` between two checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CompatReport {
    pub missing_in_a: Vec<String>,
    pub missing_in_b: Vec<String>,
    pub shape_mismatch: Vec<(String, Vec<usize>, Vec<usize>)>,
    pub dtype_mismatch: Vec<(String, DType, DType)>,
}

impl CompatReport {
    pub fn is_empty(&self) -> bool {
        self.missing_in_a.is_empty()
            && self.missing_in_b.is_empty()
            && self.shape_mismatch.is_empty()
            && self.dtype_mismatch.is_empty()
    }

    /// Keeps only findings about names accepted by `keep`.
    pub fn restricted_to(mut self, keep: impl Fn(&str) -> bool) -> Self {
        self.missing_in_a.retain(|n| keep(n));
        self.missing_in_b.retain(|n| keep(n));
        self.shape_mismatch.retain(|(n, _, _)| keep(n));
        self.dtype_mismatch.retain(|(n, _, _)| keep(n));
        self
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("compatible");
        }
        let mut lines = Vec::new();
        for n in &self.missing_in_a {
            lines.push(format!("missing in first operand: {n}"));
        }
        for n in &self.missing_in_b {
            lines.push(format!("missing in second operand: {n}"));
        }
        for (n, a, b) in &self.shape_mismatch {
            lines.push(format!("shape mismatch: {n} {a:?} vs {b:?}"));
        }
        for (n, a, b) in &self.dtype_mismatch {
            lines.push(format!("dtype mismatch: {n} {a} vs {b}"));
        }
        f.write_str(&lines.join("\n"))
    }
}

pub fn validate_compat(a: &Checkpoint, b: &Checkpoint) -> CompatReport {
    let mut report = CompatReport::default();
    for (name, ta) in a.iter() {
        match b.get(name) {
            None => report.missing_in_b.push(name.to_string()),
            Some(tb) => {
                if ta.shape != tb.shape {
                    report
                        .shape_mismatch
                        .push((name.to_string(), ta.shape.clone(), tb.shape.clone()));
                }
                if ta.dtype() != tb.dtype() {
                    report.dtype_mismatch.push((name.to_string(), ta.dtype(), tb.dtype()));
                }
            }
        }
    }
    report.missing_in_a = b.names().filter(|n| !a.contains(n)).map(str::to_string).collect();
    report
}
