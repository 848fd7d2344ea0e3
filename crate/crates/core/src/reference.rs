//! Float reference forward pass and verification-data generation.
//!
//! Convolution is cross-correlation with zero "same" padding and stride 1;
//! taps are summed in-channel outer, then kernel row, then kernel column,
//! in ascending order, with the bias added last. Sums are carried in f64 and
//! each stored activation is rounded to f32.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{read_f32_file, read_json, write_f32_file, write_json};
use crate::error::{Error, Result};
use crate::model::{LayerSpec, NetworkSpec, TensorShape};
use crate::tensor::{argmax, Tensor};
use crate::weights::WeightBundle;

/// Output of every layer for one input image.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub outputs: Vec<Tensor>,
    pub class: usize,
}

impl LayerTrace {
    pub fn final_output(&self) -> &Tensor {
        self.outputs.last().expect("trace is never empty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationSet {
    pub inputs: Vec<Tensor>,
    pub references: Vec<LayerTrace>,
}

impl VerificationSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.references.iter().map(|r| r.class).collect()
    }
}

pub fn conv2d_float(input: &Tensor, out_channels: usize, kernel: usize, weights: &[f32], bias: &[f32]) -> Tensor {
    let s = input.shape;
    let pad = (kernel / 2) as isize;
    let out_shape = TensorShape::new(s.height, s.width, out_channels);
    let mut out = Tensor::zeros(out_shape);
    for oc in 0..out_channels {
        for y in 0..s.height {
            for x in 0..s.width {
                let mut acc = 0.0f64;
                for ic in 0..s.channels {
                    for ky in 0..kernel {
                        let iy = y as isize + ky as isize - pad;
                        if iy < 0 || iy >= s.height as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = x as isize + kx as isize - pad;
                            if ix < 0 || ix >= s.width as isize {
                                continue;
                            }
                            let w = weights[((oc * s.channels + ic) * kernel + ky) * kernel + kx];
                            acc += f64::from(w) * f64::from(input.at(ic, iy as usize, ix as usize));
                        }
                    }
                }
                if !bias.is_empty() {
                    acc += f64::from(bias[oc]);
                }
                out.data[out_shape.index(oc, y, x)] = acc as f32;
            }
        }
    }
    out
}

pub fn relu_float(input: &Tensor) -> Tensor {
    Tensor::new(input.shape, input.data.iter().map(|&v| v.max(0.0)).collect())
}

pub fn maxpool_float(input: &Tensor, size: usize) -> Tensor {
    let s = input.shape;
    let out_shape = TensorShape::new(s.height / size, s.width / size, s.channels);
    let mut out = Tensor::zeros(out_shape);
    for c in 0..s.channels {
        for y in 0..out_shape.height {
            for x in 0..out_shape.width {
                let mut best = f32::NEG_INFINITY;
                for dy in 0..size {
                    for dx in 0..size {
                        best = best.max(input.at(c, y * size + dy, x * size + dx));
                    }
                }
                out.data[out_shape.index(c, y, x)] = best;
            }
        }
    }
    out
}

pub fn dense_float(input: &[f32], units: usize, weights: &[f32], bias: &[f32]) -> Tensor {
    let n = input.len();
    let data = (0..units)
        .map(|o| {
            let row = &weights[o * n..(o + 1) * n];
            let mut acc = row
                .iter()
                .zip(input)
                .fold(0.0f64, |acc, (&w, &x)| acc + f64::from(w) * f64::from(x));
            if !bias.is_empty() {
                acc += f64::from(bias[o]);
            }
            acc as f32
        })
        .collect();
    Tensor::new(TensorShape::flat(units), data)
}

/// Full-precision forward pass recording every layer's output.
pub fn forward_float(spec: &NetworkSpec, weights: &WeightBundle, image: &Tensor) -> Result<LayerTrace> {
    if image.shape != spec.input_shape {
        return Err(Error::invalid(format!(
            "image shape {} does not match network input {}",
            image.shape, spec.input_shape
        )));
    }
    if !spec.is_inferred() {
        return Err(Error::invalid("network shapes have not been inferred"));
    }
    let mut outputs: Vec<Tensor> = Vec::with_capacity(spec.layers.len());
    for (index, layer) in spec.layers.iter().enumerate() {
        let input = outputs.last().unwrap_or(image);
        let out = match *layer {
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                ..
            } => {
                let lw = layer_weights(weights, index)?;
                conv2d_float(input, out_channels, kernel, &lw.weights, &lw.bias)
            }
            LayerSpec::Relu => relu_float(input),
            LayerSpec::MaxPool { size } => maxpool_float(input, size),
            LayerSpec::Flatten => Tensor::new(TensorShape::flat(input.data.len()), input.data.clone()),
            LayerSpec::Dense { units, .. } => {
                let lw = layer_weights(weights, index)?;
                dense_float(&input.data, units, &lw.weights, &lw.bias)
            }
        };
        outputs.push(out);
    }
    let class = argmax(&outputs.last().expect("non-empty network").data);
    Ok(LayerTrace { outputs, class })
}

fn layer_weights(weights: &WeightBundle, index: usize) -> Result<&crate::weights::LayerWeights> {
    weights
        .for_layer(index)
        .ok_or_else(|| Error::Weights {
            layer: index,
            message: "no weights bound to this layer".into(),
        })
}

/// Seeded uniform images in `[0, 1)`.
pub fn random_images(shape: TensorShape, count: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data = (0..shape.len()).map(|_| rng.random::<f32>()).collect();
            Tensor::new(shape, data)
        })
        .collect()
}

/// Run the float engine over `images` in parallel (results stay in input order).
pub fn build_verification_set(
    spec: &NetworkSpec,
    weights: &WeightBundle,
    images: Vec<Tensor>,
) -> Result<VerificationSet> {
    if images.is_empty() {
        return Err(Error::invalid("verification set must be non-empty"));
    }
    let references = images
        .par_iter()
        .map(|img| forward_float(spec, weights, img))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationSet {
        inputs: images,
        references,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyFileEntry {
    pub index: usize,
    pub kind: String,
    pub file: String,
    pub shape: TensorShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyManifest {
    pub count: usize,
    pub input_shape: TensorShape,
    pub inputs_file: String,
    pub classes: Vec<usize>,
    pub layers: Vec<VerifyFileEntry>,
}

/// Build the set and persist it under `out`.
pub fn make_verification_set(
    spec: &NetworkSpec,
    weights: &WeightBundle,
    images: Vec<Tensor>,
    out: &Path,
) -> Result<VerificationSet> {
    let set = build_verification_set(spec, weights, images)?;
    save_verification_set(spec, &set, out)?;
    Ok(set)
}

pub fn save_verification_set(spec: &NetworkSpec, set: &VerificationSet, out: &Path) -> Result<()> {
    let inputs: Vec<f32> = set.inputs.iter().flat_map(|t| t.data.iter().copied()).collect();
    write_f32_file(&out.join("inputs.bin"), &inputs)?;
    let mut entries = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let file = format!("ref_layer{l}.bin");
        let data: Vec<f32> = set
            .references
            .iter()
            .flat_map(|r| r.outputs[l].data.iter().copied())
            .collect();
        write_f32_file(&out.join(&file), &data)?;
        entries.push(VerifyFileEntry {
            index: l,
            kind: layer.kind().to_string(),
            file,
            shape: spec.shapes[l].output,
        });
    }
    let manifest = VerifyManifest {
        count: set.len(),
        input_shape: spec.input_shape,
        inputs_file: "inputs.bin".into(),
        classes: set.classes(),
        layers: entries,
    };
    write_json(&out.join("verify_manifest.json"), &manifest)
}

pub fn load_verification_set(spec: &NetworkSpec, dir: &Path) -> Result<VerificationSet> {
    let manifest: VerifyManifest = read_json(&dir.join("verify_manifest.json"))?;
    let n = manifest.count;
    if n == 0 {
        return Err(Error::invalid("verification set must be non-empty"));
    }
    if manifest.input_shape != spec.input_shape || manifest.layers.len() != spec.layers.len() {
        return Err(Error::invalid(format!(
            "verification set in {} was built for a different network",
            dir.display()
        )));
    }
    let inputs = split(read_f32_file(&dir.join(&manifest.inputs_file))?, spec.input_shape, n, &manifest.inputs_file)?;
    let mut per_layer = Vec::with_capacity(spec.layers.len());
    for (l, entry) in manifest.layers.iter().enumerate() {
        if entry.shape != spec.shapes[l].output {
            return Err(Error::invalid(format!(
                "{}: shape {} does not match layer {l} output {}",
                entry.file, entry.shape, spec.shapes[l].output
            )));
        }
        per_layer.push(split(read_f32_file(&dir.join(&entry.file))?, entry.shape, n, &entry.file)?);
    }
    let mut references: Vec<LayerTrace> = (0..n)
        .map(|_| LayerTrace {
            outputs: Vec::with_capacity(spec.layers.len()),
            class: 0,
        })
        .collect();
    for layer_tensors in per_layer {
        for (trace, t) in references.iter_mut().zip(layer_tensors) {
            trace.outputs.push(t);
        }
    }
    for trace in &mut references {
        trace.class = argmax(&trace.final_output().data);
    }
    Ok(VerificationSet { inputs, references })
}

fn split(data: Vec<f32>, shape: TensorShape, n: usize, name: &str) -> Result<Vec<Tensor>> {
    if data.len() != shape.len() * n {
        return Err(Error::invalid(format!(
            "{name}: expected {} floats ({n} x {shape}), found {}",
            shape.len() * n,
            data.len()
        )));
    }
    Ok(data
        .chunks_exact(shape.len())
        .map(|c| Tensor::new(shape, c.to_vec()))
        .collect())
}

/// Fraction of positions where the two class lists agree.
pub fn classification_agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "class lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("class lists must be non-empty"));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.len() as f64)
}

/// Gap between the largest and second-largest value (`inf` for one element).
pub fn top1_margin(values: &[f32]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        let v = f64::from(v);
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    best - second
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::LayerWeights;

    fn net(input: TensorShape, layers: Vec<LayerSpec>) -> NetworkSpec {
        NetworkSpec {
            name: "t".into(),
            input_shape: input,
            layers,
            shapes: vec![],
        }
        .infer_shapes()
        .unwrap()
    }

    #[test]
    fn zero_everything_gives_zero_trace() {
        let spec = NetworkSpec::from_manifest_str(include_str!("../../../models/table1/manifest.json")).unwrap();
        let w = WeightBundle::zeros(&spec);
        let trace = forward_float(&spec, &w, &Tensor::zeros(spec.input_shape)).unwrap();
        assert_eq!(trace.outputs.len(), 17);
        assert!(trace.outputs.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
        assert_eq!(trace.class, 0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let spec = net(TensorShape::new(3, 3, 1), vec![LayerSpec::conv(1, 3)]);
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let w = WeightBundle::new(
            &spec,
            vec![LayerWeights {
                layer: 0,
                weights: kernel,
                bias: vec![0.0],
            }],
        )
        .unwrap();
        let mut data = vec![0.0; 9];
        data[4] = 1.0;
        let img = Tensor::new(spec.input_shape, data);
        let trace = forward_float(&spec, &w, &img).unwrap();
        assert_eq!(trace.outputs[0], img);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = net(TensorShape::new(3, 3, 1), vec![LayerSpec::Relu]);
        let w = WeightBundle::zeros(&spec);
        assert!(forward_float(&spec, &w, &Tensor::zeros(TensorShape::new(2, 3, 1))).is_err());
    }

    #[test]
    fn agreement_counts() {
        assert_eq!(classification_agreement(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert!((classification_agreement(&[0, 1, 2], &[0, 1, 3]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(classification_agreement(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn empty_image_list_is_rejected() {
        let spec = net(TensorShape::new(2, 2, 1), vec![LayerSpec::Relu]);
        let err = build_verification_set(&spec, &WeightBundle::zeros(&spec), vec![]).unwrap_err();
        assert!(err.to_string().contains("verification set must be non-empty"));
    }

    #[test]
    fn verification_set_round_trips_through_disk() {
        let spec = net(
            TensorShape::new(4, 4, 1),
            vec![LayerSpec::conv(2, 3), LayerSpec::Relu, LayerSpec::MaxPool { size: 2 }],
        );
        let w = WeightBundle::random(&spec, 9, 0.5);
        let dir = tempfile::tempdir().unwrap();
        let images = random_images(spec.input_shape, 2, 5);
        let set = make_verification_set(&spec, &w, images, dir.path()).unwrap();
        for (l, s) in spec.shapes.iter().enumerate() {
            let bytes = std::fs::metadata(dir.path().join(format!("ref_layer{l}.bin"))).unwrap().len();
            assert_eq!(bytes as usize, s.output.len() * 2 * 4);
        }
        assert_eq!(load_verification_set(&spec, dir.path()).unwrap(), set);
    }

    #[test]
    fn margin_of_values() {
        assert_eq!(top1_margin(&[1.0, 3.0, 2.5]), 0.5);
        assert_eq!(top1_margin(&[2.0, 2.0]), 0.0);
    }
}
