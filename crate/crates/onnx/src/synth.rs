//! Seeded VGG-style ONNX models with random weights.
//!
//! The graphs have the real layer structure (3x3 same convolutions with ReLU,
//! 2x2 max pooling per block, two ReLU fully connected layers and a softmax
//! classifier), so they produce correctly shaped activations for any image.
//! Weights are He-normal from a ChaCha stream and all biases are zero, which
//! makes every activation linear in `input_gain`.

use prost::Message;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sigcode_core::config::{ChannelOrder, InputSpec, Layout};
use sigcode_core::{BlockShape, ModelProfile, NetworkConfig, Result};
use tract_onnx::pb::{self, attribute_proto::AttributeType, tensor_proto::DataType};

pub const INPUT: &str = "data";
pub const FC1: &str = "relu6";
pub const FC2: &str = "relu7";
pub const SOFTMAX: &str = "prob";

pub fn block_tensor(m: usize) -> String {
    format!("pool{m}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of every convolution, grouped by block.
    pub convs: Vec<Vec<usize>>,
    pub fc1: usize,
    pub fc2: usize,
    pub classes: usize,
    pub seed: u64,
    /// Multiplier on the first convolution's weights.
    pub input_gain: f32,
}

impl SynthSpec {
    /// VGG16 geometry: 13 convolutions in 5 blocks, 224x224 input.
    pub fn vgg16(seed: u64) -> Self {
        Self {
            name: "vgg16-synthetic".into(),
            input_height: 224,
            input_width: 224,
            convs: vec![vec![64, 64], vec![128, 128], vec![256; 3], vec![512; 3], vec![512; 3]],
            fc1: 4096,
            fc2: 4096,
            classes: 1000,
            seed,
            input_gain: VGG16_GAIN,
        }
    }

    /// A five-block network small enough for unit tests.
    pub fn tiny(seed: u64) -> Self {
        Self {
            name: "tiny-synthetic".into(),
            input_height: 64,
            input_width: 64,
            convs: vec![vec![4], vec![8], vec![16], vec![16], vec![16]],
            fc1: 32,
            fc2: 32,
            classes: 10,
            seed,
            input_gain: TINY_GAIN,
        }
    }

    pub fn block_shapes(&self) -> Vec<BlockShape> {
        let (mut h, mut w) = (self.input_height, self.input_width);
        self.convs
            .iter()
            .map(|c| {
                h /= 2;
                w /= 2;
                BlockShape::new(h, w, *c.last().expect("block has a convolution"))
            })
            .collect()
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(
            self.block_shapes(),
            self.fc1,
            self.fc2,
            Some(self.classes),
            InputSpec {
                tensor: INPUT.into(),
                height: self.input_height,
                width: self.input_width,
                channel_order: ChannelOrder::Bgr,
                layout: Layout::Nchw,
                mean: [103.939, 116.779, 123.68],
                scale: 1.0,
                std: [1.0; 3],
            },
        )
    }

    /// Profile reading this model's pooling, FC and softmax outputs.
    pub fn profile(&self, model_path: Option<std::path::PathBuf>) -> Result<ModelProfile> {
        let cfg = self.network_config()?;
        let blocks = (1..=cfg.num_blocks()).map(block_tensor).collect();
        let mut p = ModelProfile::new(self.name.clone(), cfg, blocks, FC1, FC2, Some(SOFTMAX.into()))?;
        p.model_path = model_path;
        Ok(p)
    }
}

/// Keeps block-5 activations of the VGG16 geometry around 1 for natural
/// images, so the default threshold selects a minority of neurons.
const VGG16_GAIN: f32 = 1.0 / 300.0;
const TINY_GAIN: f32 = 1.0 / 100.0;

fn ints(name: &str, v: &[i64]) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    }
}

fn int(name: &str, v: i64) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: AttributeType::Int as i32,
        i: v,
        ..Default::default()
    }
}

fn tensor(name: &str, dims: &[i64], data: &[f32]) -> pb::TensorProto {
    let mut raw = Vec::with_capacity(data.len() * 4);
    for x in data {
        raw.extend_from_slice(&x.to_le_bytes());
    }
    pb::TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: DataType::Float as i32,
        raw_data: raw,
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attribute: Vec<pb::AttributeProto>) -> pb::NodeProto {
    pb::NodeProto {
        op_type: op.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        name: output.into(),
        attribute,
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[usize]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension::Value, Dimension};
    let shape = pb::TensorShapeProto {
        dim: dims
            .iter()
            .map(|&d| Dimension {
                value: Some(Value::DimValue(d as i64)),
                ..Default::default()
            })
            .collect(),
    };
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(shape),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, len: usize, gain: f32) -> Vec<f32> {
    let dist = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("positive std");
    (0..len).map(|_| dist.sample(rng) * gain).collect()
}

/// Builds the ONNX graph for `spec`. Identical specs give identical models.
pub fn build_model(spec: &SynthSpec) -> pb::ModelProto {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::new();
    let mut inits = Vec::new();
    let mut cur = INPUT.to_string();
    let mut cin = 3usize;
    let mut layer = 0usize;
    for (b, convs) in spec.convs.iter().enumerate() {
        for &cout in convs {
            layer += 1;
            let gain = if layer == 1 { spec.input_gain } else { 1.0 };
            let (w, bias) = (format!("conv{layer}_w"), format!("conv{layer}_b"));
            let weights = he_normal(&mut rng, cin * 9, cout * cin * 9, gain);
            inits.push(tensor(&w, &[cout as i64, cin as i64, 3, 3], &weights));
            inits.push(tensor(&bias, &[cout as i64], &vec![0.0; cout]));
            let conv = format!("conv{layer}");
            nodes.push(node(
                "Conv",
                &[&cur, &w, &bias],
                &conv,
                vec![ints("kernel_shape", &[3, 3]), ints("pads", &[1, 1, 1, 1])],
            ));
            // Distinct from the FC relu names.
            let relu = format!("crelu{layer}");
            nodes.push(node("Relu", &[&conv], &relu, vec![]));
            cur = relu;
            cin = cout;
        }
        let pool = block_tensor(b + 1);
        nodes.push(node(
            "MaxPool",
            &[&cur],
            &pool,
            vec![ints("kernel_shape", &[2, 2]), ints("strides", &[2, 2])],
        ));
        cur = pool;
    }
    nodes.push(node("Flatten", &[&cur], "flatten", vec![]));
    cur = "flatten".into();

    let last = *spec.block_shapes().last().expect("at least one block");
    let dims = [(last.len(), spec.fc1), (spec.fc1, spec.fc2), (spec.fc2, spec.classes)];
    for (i, &(din, dout)) in dims.iter().enumerate() {
        let (w, bias) = (format!("fc{}_w", 6 + i), format!("fc{}_b", 6 + i));
        inits.push(tensor(&w, &[dout as i64, din as i64], &he_normal(&mut rng, din, din * dout, 1.0)));
        inits.push(tensor(&bias, &[dout as i64], &vec![0.0; dout]));
        let fc = format!("fc{}", 6 + i);
        nodes.push(node("Gemm", &[&cur, &w, &bias], &fc, vec![int("transB", 1)]));
        cur = match i {
            0 => FC1.to_string(),
            1 => FC2.to_string(),
            _ => {
                nodes.push(node("Softmax", &[&fc], SOFTMAX, vec![]));
                break;
            }
        };
        nodes.push(node("Relu", &[&fc], &cur, vec![]));
    }

    let graph = pb::GraphProto {
        name: spec.name.clone(),
        node: nodes,
        initializer: inits,
        input: vec![value_info(INPUT, &[1, 3, spec.input_height, spec.input_width])],
        output: vec![value_info(SOFTMAX, &[1, spec.classes])],
        ..Default::default()
    };
    pb::ModelProto {
        ir_version: 7,
        producer_name: "sigcode".into(),
        opset_import: vec![pb::OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        graph: Some(graph),
        ..Default::default()
    }
}

pub fn encode_model(model: &pb::ModelProto) -> Vec<u8> {
    model.encode_to_vec()
}

/// Writes `<dir>/<stem>.onnx` and `<dir>/<stem>.toml` (a profile pointing at
/// the model by relative path) and returns the profile path.
pub fn write_model(spec: &SynthSpec, dir: &std::path::Path, stem: &str) -> Result<std::path::PathBuf> {
    use sigcode_core::Error;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let model_file = format!("{stem}.onnx");
    let model_path = dir.join(&model_file);
    std::fs::write(&model_path, encode_model(&build_model(spec))).map_err(|e| Error::Io {
        path: model_path.clone(),
        source: e,
    })?;
    let profile = spec.profile(Some(model_file.into()))?;
    let profile_path = dir.join(format!("{stem}.toml"));
    std::fs::write(&profile_path, profile.to_toml_string()).map_err(|e| Error::Io {
        path: profile_path.clone(),
        source: e,
    })?;
    Ok(profile_path)
}
