//! Linear interpolation between two checkpoints over a selected parameter set.
//!
//! For every selected tensor the merged value is
//! `(1 - alpha) * current + alpha * pretrained`, evaluated in the tensor's own
//! dtype. Tensors outside the selector are copied from `current` untouched.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_store::{validate_compat, Checkpoint, CompatReport, Selector, StoreError, Tensor, TensorData};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("selected tensors are incompatible:\n{0}")]
    Incompatible(CompatReport),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Mixing weight and the names it applies to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    alpha: f64,
    selector: Selector,
}

impl MergeSpec {
    pub fn new(alpha: f64, selector: Selector) -> Result<Self, MergeError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MergeError::AlphaOutOfRange(alpha));
        }
        Ok(MergeSpec { alpha, selector })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }
}

macro_rules! lerp_impl {
    ($name:ident, $t:ty) => {
        /// Convex combination of one element pair.
        ///
        /// The endpoints return an operand unchanged, identical operands merge
        /// to themselves, and rounding never pushes the result outside the
        /// closed interval spanned by the operands.
        #[inline]
        pub(crate) fn $name(current: $t, pretrained: $t, alpha: $t) -> $t {
            if alpha == 0.0 || current.to_bits() == pretrained.to_bits() {
                return current;
            }
            if alpha == 1.0 {
                return pretrained;
            }
            let mixed = (1.0 - alpha) * current + alpha * pretrained;
            let (lo, hi) = if current <= pretrained { (current, pretrained) } else { (pretrained, current) };
            if mixed < lo {
                lo
            } else if mixed > hi {
                hi
            } else {
                mixed
            }
        }
    };
}

lerp_impl!(lerp_f32, f32);
lerp_impl!(lerp_f64, f64);

fn merge_tensor(current: &Tensor, pretrained: &Tensor, alpha: f64) -> Tensor {
    let data = match (&current.data, &pretrained.data) {
        (TensorData::F32(c), TensorData::F32(p)) => {
            let a = alpha as f32;
            TensorData::F32(c.iter().zip(p).map(|(&x, &y)| lerp_f32(x, y, a)).collect())
        }
        (TensorData::F64(c), TensorData::F64(p)) => {
            TensorData::F64(c.iter().zip(p).map(|(&x, &y)| lerp_f64(x, y, alpha)).collect())
        }
        _ => unreachable!("dtype compatibility is checked before merging"),
    };
    Tensor { shape: current.shape.clone(), data }
}

/// Selected names across both operands, plus any incompatibility among them.
fn selected_pairs(a: &Checkpoint, b: &Checkpoint, sel: &Selector) -> Result<Vec<String>, MergeError> {
    a.validate()?;
    b.validate()?;
    let names: BTreeSet<String> = sel.select(a.names().chain(b.names())).into_iter().collect();
    let report = validate_compat(a, b).restricted_to(|n| names.contains(n));
    if !report.is_empty() {
        return Err(MergeError::Incompatible(report));
    }
    Ok(names.into_iter().collect())
}

/// Interpolates the selected tensors of `current` toward `pretrained`.
pub fn linear_merge(current: &Checkpoint, pretrained: &Checkpoint, spec: &MergeSpec) -> Result<Checkpoint, MergeError> {
    // Re-check in case the `MergeSpec` was deserialized.
    MergeSpec::new(spec.alpha, Selector::empty())?;
    let names = selected_pairs(current, pretrained, &spec.selector)?;
    let mut out = current.clone();
    for name in names {
        let merged = merge_tensor(current.get(&name).expect("checked"), pretrained.get(&name).expect("checked"), spec.alpha);
        out.insert(name, merged);
    }
    Ok(out)
}

/// Euclidean distance `sqrt(sum((a - b)^2))` per selected name, accumulated in f64.
pub fn merge_distance(a: &Checkpoint, b: &Checkpoint, sel: &Selector) -> Result<BTreeMap<String, f64>, MergeError> {
    let names = selected_pairs(a, b, sel)?;
    Ok(names
        .into_iter()
        .map(|name| {
            let x = a.get(&name).expect("checked").to_f64_vec();
            let y = b.get(&name).expect("checked").to_f64_vec();
            let sq: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
            (name, sq.sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::DType;
    use proptest::prelude::*;

    fn single(name: &str, values: Vec<f64>) -> Checkpoint {
        [(name.to_string(), Tensor::f64(vec![values.len()], values))].into_iter().collect()
    }

    #[test]
    fn quarter_mix_of_two_vectors() {
        let cur = single("w", vec![2.0, 4.0]);
        let pre = single("w", vec![6.0, 0.0]);
        let out = linear_merge(&cur, &pre, &MergeSpec::new(0.25, Selector::all()).unwrap()).unwrap();
        assert_eq!(out.get("w").unwrap().as_f64().unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn endpoints_reproduce_operands() {
        let cur = single("w", vec![-0.0, 1.5, f64::MIN_POSITIVE]);
        let pre = single("w", vec![0.0, -2.5, 7.0]);
        let at0 = linear_merge(&cur, &pre, &MergeSpec::new(0.0, Selector::all()).unwrap()).unwrap();
        assert_eq!(at0, cur);
        let at1 = linear_merge(&cur, &pre, &MergeSpec::new(1.0, Selector::all()).unwrap()).unwrap();
        assert_eq!(at1, pre);
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(matches!(MergeSpec::new(1.5, Selector::all()), Err(MergeError::AlphaOutOfRange(_))));
        assert!(MergeSpec::new(-0.1, Selector::all()).is_err());
        assert!(MergeSpec::new(f64::NAN, Selector::all()).is_err());
    }

    #[test]
    fn incompatibility_only_matters_for_selected_names() {
        let mut cur = single("vision.w", vec![1.0]);
        cur.insert("llm.w", Tensor::f64(vec![2], vec![1.0, 2.0]));
        let mut pre = single("vision.w", vec![3.0]);
        pre.insert("llm.w", Tensor::f64(vec![3], vec![0.0; 3]));

        let vision = Selector::new(["vision.*"]).unwrap();
        let out = linear_merge(&cur, &pre, &MergeSpec::new(0.5, vision).unwrap()).unwrap();
        assert_eq!(out.get("vision.w").unwrap().as_f64().unwrap(), &[2.0]);
        assert_eq!(out.get("llm.w"), cur.get("llm.w"));

        let err = linear_merge(&cur, &pre, &MergeSpec::new(0.5, Selector::all()).unwrap()).unwrap_err();
        match err {
            MergeError::Incompatible(report) => assert_eq!(report.shape_mismatch.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selected_name_missing_on_one_side_is_incompatible() {
        let cur = single("a.w", vec![1.0]);
        let mut pre = single("a.w", vec![1.0]);
        pre.insert("a.b", Tensor::f64(vec![1], vec![0.0]));
        let err = linear_merge(&cur, &pre, &MergeSpec::new(0.5, Selector::all()).unwrap()).unwrap_err();
        assert!(matches!(err, MergeError::Incompatible(r) if r.missing_in_a == vec!["a.b"]));
    }

    #[test]
    fn f32_tensors_merge_in_f32() {
        let cur: Checkpoint = [("w".to_string(), Tensor::f32(vec![2], vec![1.0, 3.0]))].into_iter().collect();
        let pre: Checkpoint = [("w".to_string(), Tensor::f32(vec![2], vec![3.0, 1.0]))].into_iter().collect();
        let out = linear_merge(&cur, &pre, &MergeSpec::new(0.5, Selector::all()).unwrap()).unwrap();
        let w = out.get("w").unwrap();
        assert_eq!(w.dtype(), DType::F32);
        assert_eq!(w.as_f32().unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn metadata_follows_current() {
        let mut cur = single("w", vec![1.0]);
        cur.metadata_mut().insert("origin".into(), "finetuned".into());
        let pre = single("w", vec![0.0]);
        let out = linear_merge(&cur, &pre, &MergeSpec::new(0.5, Selector::all()).unwrap()).unwrap();
        assert_eq!(out.metadata(), cur.metadata());
    }

    #[test]
    fn distance_of_three_four_five() {
        let d = merge_distance(&single("w", vec![3.0, 4.0]), &single("w", vec![0.0, 0.0]), &Selector::all()).unwrap();
        assert_eq!(d["w"], 5.0);
        let same = merge_distance(&single("w", vec![3.0, 4.0]), &single("w", vec![3.0, 4.0]), &Selector::all()).unwrap();
        assert_eq!(same["w"], 0.0);
    }

    proptest! {
        #[test]
        fn merged_elements_stay_between_operands(
            pairs in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..40),
            alpha in 0.0f64..=1.0,
        ) {
            for (c, p) in pairs {
                let m = lerp_f64(c, p, alpha);
                prop_assert!(c.min(p) <= m && m <= c.max(p));
                let m32 = lerp_f32(c as f32, p as f32, alpha as f32);
                prop_assert!((c as f32).min(p as f32) <= m32 && m32 <= (c as f32).max(p as f32));
            }
        }

        #[test]
        fn self_merge_is_identity(values in prop::collection::vec(any::<f64>(), 1..30), alpha in 0.0f64..=1.0) {
            let c = single("x.w", values);
            let out = linear_merge(&c, &c, &MergeSpec::new(alpha, Selector::all()).unwrap()).unwrap();
            prop_assert_eq!(out, c);
        }

        #[test]
        fn output_is_affine_in_alpha(
            pairs in prop::collection::vec((-100f64..100.0, -100f64..100.0), 1..20),
            a in 0.05f64..0.45,
            step in 0.05f64..0.25,
        ) {
            let cur = single("w", pairs.iter().map(|p| p.0).collect());
            let pre = single("w", pairs.iter().map(|p| p.1).collect());
            let at = |alpha: f64| {
                linear_merge(&cur, &pre, &MergeSpec::new(alpha, Selector::all()).unwrap())
                    .unwrap().get("w").unwrap().as_f64().unwrap().to_vec()
            };
            let (x0, x1, x2) = (at(a), at(a + step), at(a + 2.0 * step));
            for i in 0..x0.len() {
                let scale = 1.0 + pairs[i].0.abs() + pairs[i].1.abs();
                prop_assert!((x0[i] - 2.0 * x1[i] + x2[i]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn unselected_tensors_are_untouched(alpha in 0.0f64..=1.0, v in -10f64..10.0) {
            let mut cur = single("vision.dino.w", vec![v]);
            cur.insert("llm.w", Tensor::f64(vec![1], vec![v * 3.0]));
            let mut pre = single("vision.dino.w", vec![-v]);
            pre.insert("llm.w", Tensor::f64(vec![1], vec![42.0]));
            let sel = Selector::new(["vision.dino.*"]).unwrap();
            let out = linear_merge(&cur, &pre, &MergeSpec::new(alpha, sel).unwrap()).unwrap();
            prop_assert_eq!(out.get("llm.w"), cur.get("llm.w"));
        }
    }
}
