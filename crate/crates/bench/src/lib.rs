//! Fixtures shared by the benchmarks.

use tinycnn_core::model::{LayerSpec, TensorShape};
use tinycnn_core::reference::{build_verification_set, random_images, VerificationSet};
use tinycnn_core::{NetworkSpec, WeightBundle};

pub fn table1() -> NetworkSpec {
    NetworkSpec::from_manifest_str(include_str!("../../../models/table1/manifest.json")).expect("shipped manifest parses")
}

pub fn table1_bundle(seed: u64) -> (NetworkSpec, WeightBundle) {
    let spec = table1();
    let weights = WeightBundle::random(&spec, seed, 0.5);
    (spec, weights)
}

/// Two conv blocks and a dense head on a 16x16 input.
pub fn small_net() -> NetworkSpec {
    NetworkSpec {
        name: "bench-small".into(),
        input_shape: TensorShape::new(16, 16, 1),
        layers: vec![
            LayerSpec::conv(8, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::conv(16, 3),
            LayerSpec::Relu,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::dense(10),
        ],
        shapes: vec![],
    }
    .infer_shapes()
    .expect("fixed topology is valid")
}

pub fn verification(spec: &NetworkSpec, weights: &WeightBundle, count: usize) -> VerificationSet {
    build_verification_set(spec, weights, random_images(spec.input_shape, count, 1)).expect("non-empty set")
}
