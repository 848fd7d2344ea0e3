mod common;

use common::*;
use tinycnn_core::datapath::forward_fixed;
use tinycnn_core::hdl::{emit_all, parse_memfile, EmitPlan};
use tinycnn_core::model::LayerSpec;
use tinycnn_core::qplan::QPlan;
use tinycnn_core::reference::{
    classification_agreement, load_verification_set, make_verification_set, random_images,
};
use tinycnn_core::resource::{check_fit, ConvMode, DeviceSpec, HardwareConfig};
use tinycnn_core::tuner::{tune, TuneOptions};
use tinycnn_core::weights::{load_model, WeightBundle};

fn zynq() -> DeviceSpec {
    DeviceSpec::load(&workspace_root().join("devices/xc7z020.json")).unwrap()
}

fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn verify_tune_emit_small_net() {
    let mut r = rng(7);
    let spec = random_small_net(&mut r, 0);
    let weights = WeightBundle::random(&spec, 7, 0.5);
    let tmp = tempfile::tempdir().unwrap();

    let model_dir = tmp.path().join("model");
    weights.save(&spec, &model_dir).unwrap();
    let (spec, weights) = load_model(&model_dir).unwrap();

    let verif_dir = tmp.path().join("verif");
    let built = make_verification_set(&spec, &weights, random_images(spec.input_shape, 16, 3), &verif_dir).unwrap();
    let loaded = load_verification_set(&spec, &verif_dir).unwrap();
    assert_eq!(built, loaded);

    let report = tune(&spec, &weights, &loaded, TuneOptions::default()).unwrap();
    assert!(report.converged);
    let plan_path = tmp.path().join("qplan.json");
    report.qplan.save(&plan_path).unwrap();
    let plan = QPlan::load(&plan_path).unwrap();
    assert_eq!(plan, report.qplan);

    let classes: Vec<usize> = loaded
        .inputs
        .iter()
        .map(|img| forward_fixed(&spec, &weights, &plan, img).unwrap().class)
        .collect();
    assert!(classification_agreement(&classes, &loaded.classes()).unwrap() >= 0.9);

    let hw = HardwareConfig {
        dsp_per_conv: vec![1],
        dsp_dense: 1,
        ..HardwareConfig::with_mode(ConvMode::Exclusive, vec![1])
    };
    let emit = EmitPlan::new(&spec, &weights, &plan, &hw, &zynq()).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ma = emit_all(&emit, &a).unwrap();
    let mb = emit_all(&emit, &b).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(read_tree(&a), read_tree(&b));

    for (i, q) in emit.layers.iter().enumerate() {
        if let Some(q) = q {
            let text = std::fs::read_to_string(a.join(format!("weights/layer{i}.mem"))).unwrap();
            assert_eq!(parse_memfile(&text, plan.width).unwrap(), q.rom_words());
        }
    }
}

#[test]
fn table1_fits_only_at_sixteen_bits() {
    let spec = table1();
    let device = zynq();
    let cfg = HardwareConfig::default();
    let fit16 = check_fit(&spec, &device, 16, &cfg);
    assert!(fit16.fits);
    assert_eq!(fit16.footprint.weight_bits, 4_681_056);
    let fit32 = check_fit(&spec, &device, 32, &cfg);
    assert!(!fit32.fits);
    assert_eq!(fit32.binding, vec![tinycnn_core::resource::Resource::Bram]);
}

#[test]
fn relu_before_dense_network_runs_end_to_end() {
    let spec = net(
        "mlp",
        tinycnn_core::model::TensorShape::flat(12),
        vec![LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::dense(6), LayerSpec::Relu, LayerSpec::dense(3)],
    );
    let weights = WeightBundle::random(&spec, 11, 0.5);
    let tmp = tempfile::tempdir().unwrap();
    let set = make_verification_set(&spec, &weights, random_images(spec.input_shape, 8, 1), tmp.path()).unwrap();
    let report = tune(&spec, &weights, &set, TuneOptions { width: 12, max_passes: 4 }).unwrap();
    assert_eq!(report.qplan.width, 12);
    assert!(report.final_nmse.is_finite());
}
