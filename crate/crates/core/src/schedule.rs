//! Step-wise alpha curricula for reverting a backbone to its pretrained
//! weights, and the four named reversal variants.
//!
//! A gradual schedule over `N = k * n` steps raises alpha by `1/k` every `n`
//! steps. With the default [`AlphaRamp::Leading`] ramp the first stage already
//! mixes in `1/k` of the pretrained weights and the last stage runs on the
//! pretrained weights alone. A flip schedule uses alpha = 1 from step 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merge::{linear_merge, MergeError, MergeSpec};
use crate::tensor_store::{Checkpoint, Selector};

/// Parameter group of the spatial (DINO-style) encoder.
pub const DINO_GROUP: &str = "vision.dino.*";
/// Parameter group of the contrastive (SigLIP-style) encoder.
pub const SIGLIP_GROUP: &str = "vision.siglip.*";

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("total steps and stage length must be positive (got {total_steps} and {stage_length})")]
    NonPositive { total_steps: u64, stage_length: u64 },
    #[error("stage length must divide total steps ({total_steps} is not a multiple of {stage_length})")]
    NotDivisible { total_steps: u64, stage_length: u64 },
    #[error("step {step} is outside the schedule of {total_steps} steps")]
    StepOutOfRange { step: u64, total_steps: u64 },
    #[error("step {0} is not a stage boundary")]
    NotABoundary(u64),
    #[error("variant {variant} uses {expected} mode but the schedule is {actual}")]
    ModeMismatch { variant: Variant, expected: ScheduleMode, actual: ScheduleMode },
    #[error("variant {variant} selects {expected:?} but the plan selects {actual:?}")]
    SelectorMismatch { variant: Variant, expected: Vec<String>, actual: Vec<String> },
    #[error("unknown variant {0:?} (expected D_flip, D_gradual, DS_flip or DS_gradual)")]
    UnknownVariant(String),
    #[error("schedule config needs {0}")]
    MissingField(&'static str),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Gradual,
    Flip,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Gradual => "gradual",
            ScheduleMode::Flip => "flip",
        })
    }
}

/// Where the gradual ramp sits inside each `n`-step window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaRamp {
    /// alpha = (stage + 1) / k; reaches 1 at the start of the last stage.
    #[default]
    Leading,
    /// alpha = stage / k; starts at 0 and snaps to 1 once step N is reached.
    Trailing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageBoundary {
    pub step: u64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    mode: ScheduleMode,
    total_steps: u64,
    stage_length: u64,
    #[serde(default)]
    ramp: AlphaRamp,
}

impl Schedule {
    pub fn new(mode: ScheduleMode, total_steps: u64, stage_length: u64) -> Result<Self, ScheduleError> {
        if total_steps == 0 || stage_length == 0 {
            return Err(ScheduleError::NonPositive { total_steps, stage_length });
        }
        if !total_steps.is_multiple_of(stage_length) {
            return Err(ScheduleError::NotDivisible { total_steps, stage_length });
        }
        Ok(Schedule { mode, total_steps, stage_length, ramp: AlphaRamp::Leading })
    }

    pub fn gradual(total_steps: u64, stage_length: u64) -> Result<Self, ScheduleError> {
        Self::new(ScheduleMode::Gradual, total_steps, stage_length)
    }

    pub fn flip(total_steps: u64, stage_length: u64) -> Result<Self, ScheduleError> {
        Self::new(ScheduleMode::Flip, total_steps, stage_length)
    }

    pub fn with_ramp(mut self, ramp: AlphaRamp) -> Self {
        self.ramp = ramp;
        self
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn ramp(&self) -> AlphaRamp {
        self.ramp
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn stage_length(&self) -> u64 {
        self.stage_length
    }

    /// k = N / n.
    pub fn stage_count(&self) -> u64 {
        self.total_steps / self.stage_length
    }

    fn fraction(&self, stage: u64) -> f64 {
        stage as f64 / self.stage_count() as f64
    }

    /// Mixing weight in effect while training step `step` runs.
    pub fn alpha_at(&self, step: u64) -> Result<f64, ScheduleError> {
        if step >= self.total_steps {
            return Err(ScheduleError::StepOutOfRange { step, total_steps: self.total_steps });
        }
        Ok(match (self.mode, self.ramp) {
            (ScheduleMode::Flip, _) => 1.0,
            (ScheduleMode::Gradual, AlphaRamp::Leading) => {
                let k = self.stage_count();
                self.fraction((step / self.stage_length + 1).min(k))
            }
            (ScheduleMode::Gradual, AlphaRamp::Trailing) => self.fraction(step / self.stage_length),
        })
    }

    /// Steps at which a new merge must be applied, with the alpha to use.
    pub fn stage_boundaries(&self) -> Vec<StageBoundary> {
        let k = self.stage_count();
        let n = self.stage_length;
        match (self.mode, self.ramp) {
            (ScheduleMode::Flip, _) => vec![StageBoundary { step: 0, alpha: 1.0 }],
            (ScheduleMode::Gradual, AlphaRamp::Leading) => (0..k)
                .map(|i| StageBoundary { step: i * n, alpha: self.fraction(i + 1) })
                .collect(),
            (ScheduleMode::Gradual, AlphaRamp::Trailing) => (1..=k)
                .map(|i| StageBoundary { step: i * n, alpha: self.fraction(i) })
                .collect(),
        }
    }

    pub fn boundary_at(&self, step: u64) -> Option<StageBoundary> {
        self.stage_boundaries().into_iter().find(|b| b.step == step)
    }
}

/// The four reversal variants: DINO only (D) or DINO and SigLIP (DS), each
/// either flipped at step 0 or reverted gradually.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "D_flip")]
    DFlip,
    #[serde(rename = "D_gradual")]
    DGradual,
    #[serde(rename = "DS_flip")]
    DsFlip,
    #[serde(rename = "DS_gradual")]
    DsGradual,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::DFlip, Variant::DGradual, Variant::DsFlip, Variant::DsGradual];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DFlip => "D_flip",
            Variant::DGradual => "D_gradual",
            Variant::DsFlip => "DS_flip",
            Variant::DsGradual => "DS_gradual",
        }
    }

    pub fn mode(self) -> ScheduleMode {
        match self {
            Variant::DFlip | Variant::DsFlip => ScheduleMode::Flip,
            Variant::DGradual | Variant::DsGradual => ScheduleMode::Gradual,
        }
    }

    pub fn groups(self) -> &'static [&'static str] {
        match self {
            Variant::DFlip | Variant::DGradual => &[DINO_GROUP],
            Variant::DsFlip | Variant::DsGradual => &[DINO_GROUP, SIGLIP_GROUP],
        }
    }

    pub fn selector(self) -> Selector {
        Selector::new(self.groups().iter().copied()).expect("group patterns are non-empty")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ScheduleError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergePlan {
    schedule: Schedule,
    selector: Selector,
    variant: Variant,
}

impl MergePlan {
    /// Plan for `variant` whose schedule mode must agree with the variant.
    pub fn new(variant: Variant, schedule: Schedule) -> Result<Self, ScheduleError> {
        if schedule.mode() != variant.mode() {
            return Err(ScheduleError::ModeMismatch {
                variant,
                expected: variant.mode(),
                actual: schedule.mode(),
            });
        }
        Ok(MergePlan { schedule, selector: variant.selector(), variant })
    }

    /// Builds the variant's plan over `N` steps in stages of `n`.
    pub fn for_variant(variant: Variant, total_steps: u64, stage_length: u64) -> Result<Self, ScheduleError> {
        Self::new(variant, Schedule::new(variant.mode(), total_steps, stage_length)?)
    }

    pub fn from_config(config: &ScheduleConfig) -> Result<Self, ScheduleError> {
        let variant = config.variant_name.ok_or(ScheduleError::MissingField("variant_name"))?;
        let mode = config.mode.unwrap_or(variant.mode());
        let schedule = Schedule::new(mode, config.total_steps, config.stage_length)?.with_ramp(config.ramp);
        let plan = Self::new(variant, schedule)?;
        if let Some(sel) = &config.selector {
            let mut want: Vec<String> = variant.groups().iter().map(|g| g.to_string()).collect();
            let mut got = sel.patterns().to_vec();
            want.sort();
            got.sort();
            got.dedup();
            if want != got {
                return Err(ScheduleError::SelectorMismatch { variant, expected: want, actual: got });
            }
        }
        Ok(plan)
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
}

/// On-disk schedule description.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub mode: Option<ScheduleMode>,
    pub total_steps: u64,
    pub stage_length: u64,
    #[serde(default)]
    pub selector: Option<Selector>,
    #[serde(default)]
    pub variant_name: Option<Variant>,
    #[serde(default)]
    pub ramp: AlphaRamp,
}

impl ScheduleConfig {
    /// Resolves the schedule, taking the mode from the variant when unset.
    pub fn schedule(&self) -> Result<Schedule, ScheduleError> {
        let mode = match (self.mode, self.variant_name) {
            (Some(m), _) => m,
            (None, Some(v)) => v.mode(),
            (None, None) => return Err(ScheduleError::MissingField("mode or variant_name")),
        };
        Ok(Schedule::new(mode, self.total_steps, self.stage_length)?.with_ramp(self.ramp))
    }

    /// Explicit selector, else the variant's groups, else nothing.
    pub fn resolved_selector(&self) -> Selector {
        match (&self.selector, self.variant_name) {
            (Some(sel), _) => sel.clone(),
            (None, Some(v)) => v.selector(),
            (None, None) => Selector::empty(),
        }
    }
}

/// Merge applied at a stage boundary.
///
/// `current` must carry the original fine-tuned weights on the selected names:
/// the backbone is frozen between boundaries, so every stage interpolates the
/// same `(fine-tuned, pretrained)` pair rather than a previous intermediate.
pub fn apply_stage(
    current: &Checkpoint,
    pretrained: &Checkpoint,
    plan: &MergePlan,
    step: u64,
) -> Result<Checkpoint, ScheduleError> {
    let boundary = plan.schedule.boundary_at(step).ok_or(ScheduleError::NotABoundary(step))?;
    let spec = MergeSpec::new(boundary.alpha, plan.selector.clone())?;
    Ok(linear_merge(current, pretrained, &spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::Tensor;
    use proptest::prelude::*;

    #[test]
    fn paper_scale_gradual_alphas() {
        let s = Schedule::gradual(100_000, 10_000).unwrap();
        assert_eq!(s.stage_count(), 10);
        assert_eq!(s.alpha_at(0).unwrap(), 0.1);
        assert_eq!(s.alpha_at(95_000).unwrap(), 1.0);
        assert!(s.alpha_at(100_000).is_err());
    }

    #[test]
    fn flip_is_one_everywhere() {
        let s = Schedule::flip(100_000, 10_000).unwrap();
        assert_eq!(s.alpha_at(0).unwrap(), 1.0);
        assert_eq!(s.alpha_at(99_999).unwrap(), 1.0);
        assert_eq!(s.stage_boundaries(), vec![StageBoundary { step: 0, alpha: 1.0 }]);
    }

    #[test]
    fn three_stage_sequence() {
        let s = Schedule::gradual(6, 2).unwrap();
        let seq: Vec<f64> = (0..6).map(|t| s.alpha_at(t).unwrap()).collect();
        assert_eq!(seq, vec![1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0, 1.0]);
    }

    #[test]
    fn boundaries() {
        let s = Schedule::gradual(100_000, 10_000).unwrap();
        let b = s.stage_boundaries();
        assert_eq!(b.len(), 10);
        assert_eq!(b[0], StageBoundary { step: 0, alpha: 0.1 });
        assert_eq!(*b.last().unwrap(), StageBoundary { step: 90_000, alpha: 1.0 });
        let single = Schedule::gradual(500, 500).unwrap();
        assert_eq!(single.stage_boundaries(), vec![StageBoundary { step: 0, alpha: 1.0 }]);
    }

    #[test]
    fn divisibility_and_positivity() {
        let err = Schedule::gradual(100_000, 30_000).unwrap_err();
        assert!(err.to_string().contains("stage length must divide total steps"));
        assert!(matches!(Schedule::gradual(0, 1), Err(ScheduleError::NonPositive { .. })));
        assert!(matches!(Schedule::flip(10, 0), Err(ScheduleError::NonPositive { .. })));
    }

    #[test]
    fn trailing_ramp_starts_at_zero_and_snaps_at_end() {
        let s = Schedule::gradual(6, 2).unwrap().with_ramp(AlphaRamp::Trailing);
        let seq: Vec<f64> = (0..6).map(|t| s.alpha_at(t).unwrap()).collect();
        assert_eq!(seq, vec![0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
        let last = *s.stage_boundaries().last().unwrap();
        assert_eq!(last, StageBoundary { step: 6, alpha: 1.0 });
    }

    #[test]
    fn variant_groups_and_modes() {
        assert_eq!(Variant::DGradual.groups(), &[DINO_GROUP]);
        assert_eq!(Variant::DsFlip.groups(), &[DINO_GROUP, SIGLIP_GROUP]);
        assert_eq!("DS_gradual".parse::<Variant>().unwrap(), Variant::DsGradual);
        assert!("DS".parse::<Variant>().is_err());
        let json = serde_json::to_string(&Variant::DFlip).unwrap();
        assert_eq!(json, "\"D_flip\"");
    }

    #[test]
    fn plan_rejects_mode_and_selector_conflicts() {
        let flip = Schedule::flip(10, 5).unwrap();
        assert!(matches!(MergePlan::new(Variant::DGradual, flip), Err(ScheduleError::ModeMismatch { .. })));

        let config: ScheduleConfig = serde_json::from_str(
            r#"{"total_steps": 10, "stage_length": 5, "variant_name": "D_gradual", "selector": ["vision.*"]}"#,
        )
        .unwrap();
        assert!(matches!(MergePlan::from_config(&config), Err(ScheduleError::SelectorMismatch { .. })));

        let config: ScheduleConfig = serde_json::from_str(
            r#"{"mode": "gradual", "total_steps": 10, "stage_length": 5, "variant_name": "DS_gradual",
                "selector": ["vision.siglip.*", "vision.dino.*"]}"#,
        )
        .unwrap();
        let plan = MergePlan::from_config(&config).unwrap();
        assert_eq!(plan.schedule().stage_count(), 2);
    }

    fn scalar(v: f64) -> Checkpoint {
        [("vision.dino.w".to_string(), Tensor::f64(vec![1], vec![v]))].into_iter().collect()
    }

    #[test]
    fn three_stage_scalar_reversal() {
        let plan = MergePlan::for_variant(Variant::DGradual, 3, 1).unwrap();
        let (cur, pre) = (scalar(0.0), scalar(9.0));
        let values: Vec<f64> = (0..3)
            .map(|step| apply_stage(&cur, &pre, &plan, step).unwrap().get("vision.dino.w").unwrap().as_f64().unwrap()[0])
            .collect();
        assert_eq!(values, vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn non_boundary_step_is_rejected() {
        let plan = MergePlan::for_variant(Variant::DGradual, 10, 5).unwrap();
        assert!(matches!(apply_stage(&scalar(0.0), &scalar(1.0), &plan, 3), Err(ScheduleError::NotABoundary(3))));
    }

    proptest! {
        #[test]
        fn alpha_is_monotone_and_ends_at_one(k in 1u64..20, n in 1u64..50) {
            let s = Schedule::gradual(k * n, n).unwrap();
            let mut prev = 0.0;
            for step in 0..k * n {
                let a = s.alpha_at(step).unwrap();
                prop_assert!(a > 0.0 && a <= 1.0);
                prop_assert!(a >= prev);
                if step >= (k - 1) * n {
                    prop_assert_eq!(a, 1.0);
                }
                prev = a;
            }
            let b = s.stage_boundaries();
            prop_assert_eq!(b.len() as u64, k);
            prop_assert!(b.iter().all(|x| x.alpha > 0.0));
            prop_assert_eq!(b.last().unwrap().alpha, 1.0);
        }

        #[test]
        fn boundaries_agree_with_alpha_at(k in 1u64..20, n in 1u64..50) {
            let s = Schedule::gradual(k * n, n).unwrap();
            for b in s.stage_boundaries() {
                prop_assert_eq!(s.alpha_at(b.step).unwrap(), b.alpha);
            }
        }

        #[test]
        fn reversal_distance_never_grows(k in 1u64..12, cur in -50f64..50.0, pre in -50f64..50.0) {
            let plan = MergePlan::for_variant(Variant::DsGradual, k * 3, 3).unwrap();
            let (c, p) = (scalar(cur), scalar(pre));
            let mut last_gap = f64::INFINITY;
            for b in plan.schedule().stage_boundaries() {
                let merged = apply_stage(&c, &p, &plan, b.step).unwrap();
                let v = merged.get("vision.dino.w").unwrap().as_f64().unwrap()[0];
                let gap = (v - pre).abs();
                prop_assert!(gap <= last_gap);
                last_gap = gap;
            }
            prop_assert_eq!(last_gap, 0.0);
        }
    }
}
