//! Numeric checks of the symbolic rewrites and the property inference.

mod common;

use proptest::prelude::*;

use lacomp::properties::InferenceEngine;

use common::checks::{
    check_inference, check_rewrites, check_templates, context, expression, values, INFERENCE_CASES, REWRITE_CASES,
};

proptest! {
    #![proptest_config(ProptestConfig { cases: REWRITE_CASES, ..ProptestConfig::default() })]

    #[test]
    fn rewrites_preserve_values(e in expression(), mask in any::<u64>(), seed in any::<u64>()) {
        check_rewrites(&e, mask, seed).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: INFERENCE_CASES, ..ProptestConfig::default() })]

    #[test]
    fn inferred_properties_hold_numerically(e in expression(), mask in any::<u64>(), seed in any::<u64>()) {
        let engine = InferenceEngine::standard();
        check_inference(&e, &context(mask), &values(seed), &engine).map_err(TestCaseError::fail)?;
    }
}

/// The gram and orthonormal rules fire on their templates and their
/// verdicts survive random instantiations.
#[test]
fn rule_templates_hold_numerically() {
    check_templates(INFERENCE_CASES as u64).unwrap();
}
