use std::collections::HashSet;
use std::path::Path;

use sigcode_core::config::Layout;
use sigcode_core::preprocess::preprocess;
use sigcode_core::{
    validate_shapes, ActivationProvider, BlockActivations, Error, ImageRecord, ModelProfile, NetworkActivations,
    NetworkConfig, Result,
};
use tract_onnx::pb;
use tract_onnx::prelude::*;

fn provider_err(e: impl std::fmt::Display) -> Error {
    Error::Provider(format!("{e:#}"))
}

/// Runs an ONNX model with tract and reads the tensors named by a
/// [`ModelProfile`].
///
/// The optimised plan is immutable, so one provider can serve several
/// workers at once.
pub struct OnnxProvider {
    plan: std::sync::Arc<TypedRunnableModel>,
    profile: ModelProfile,
}

impl std::fmt::Debug for OnnxProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxProvider").field("profile", &self.profile.name).finish()
    }
}

impl OnnxProvider {
    /// Loads the model file named by the profile.
    pub fn load(profile: ModelProfile) -> Result<Self> {
        let path = profile
            .model_path
            .clone()
            .ok_or_else(|| Error::Config(format!("profile {:?} names no model file", profile.name)))?;
        if !path.is_file() {
            return Err(Error::Config(format!("model file {} not found", path.display())));
        }
        let proto = tract_onnx::onnx()
            .proto_model_for_path(&path)
            .map_err(|e| Error::Config(format!("{}: {e:#}", path.display())))?;
        Self::build(&proto, profile, path.parent())
    }

    pub fn from_proto(proto: &pb::ModelProto, profile: ModelProfile) -> Result<Self> {
        Self::build(proto, profile, None)
    }

    fn build(proto: &pb::ModelProto, profile: ModelProfile, dir: Option<&Path>) -> Result<Self> {
        check_tensor_names(proto, &profile)?;
        let cfg = profile.network_config();
        let input = &cfg.input;
        let input_shape: [usize; 4] = match input.layout {
            Layout::Nchw => [1, 3, input.height, input.width],
            Layout::Nhwc => [1, input.height, input.width, 3],
        };

        let onnx = tract_onnx::onnx();
        let parsed = onnx
            .parse(proto, dir.and_then(|d| d.to_str()))
            .map_err(|e| Error::Config(format!("cannot parse model: {e:#}")))?;
        if !parsed.unresolved_inputs.is_empty() {
            return Err(Error::Config(format!("unresolved model inputs {:?}", parsed.unresolved_inputs)));
        }
        let mut model = parsed.model;
        let slot = model
            .input_outlets()
            .map_err(provider_err)?
            .iter()
            .position(|o| model.node(o.node).name == input.tensor)
            .ok_or_else(|| Error::Config(format!("model has no input named {:?}", input.tensor)))?;
        model
            .set_input_fact(slot, f32::fact(input_shape).into())
            .map_err(provider_err)?;
        let plan = model
            .with_outputs_by_name(profile.output_tensors())
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Config(format!("cannot prepare model: {e:#}")))?;
        if plan.model().inputs.len() != 1 {
            return Err(Error::Config(format!(
                "model takes {} inputs, expected exactly one",
                plan.model().inputs.len()
            )));
        }
        Ok(Self { plan, profile })
    }

    pub fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    fn outputs_to_activations(&self, outputs: TVec<TValue>) -> Result<NetworkActivations> {
        let cfg = self.profile.network_config();
        let n = cfg.num_blocks();
        let mut blocks = Vec::with_capacity(n);
        for (m, out) in outputs.iter().take(n).enumerate() {
            let shape = cfg.block(m + 1);
            let view = out.to_plain_array_view::<f32>().map_err(provider_err)?;
            let dims = view.shape().to_vec();
            let (h, w, c) = (shape.height, shape.width, shape.channels);
            let expected = match cfg.input.layout {
                Layout::Nchw => [1, c, h, w],
                Layout::Nhwc => [1, h, w, c],
            };
            if dims != expected {
                return Err(Error::Provider(format!(
                    "tensor {:?} has shape {dims:?}, expected {expected:?}",
                    self.profile.block_tensors[m]
                )));
            }
            let data: Vec<f32> = match cfg.input.layout {
                Layout::Nchw => view.iter().copied().collect(),
                Layout::Nhwc => {
                    let v = view.into_shape_with_order((h, w, c)).map_err(provider_err)?;
                    v.permuted_axes([2, 0, 1]).iter().copied().collect()
                }
            };
            blocks.push(BlockActivations::from_channel_major(m + 1, shape, &data)?);
        }
        let vector = |i: usize, len: usize, name: &str| -> Result<Vec<f32>> {
            let view = outputs[i].to_plain_array_view::<f32>().map_err(provider_err)?;
            if view.len() != len {
                return Err(Error::Provider(format!(
                    "tensor {name:?} has {} values, expected {len}",
                    view.len()
                )));
            }
            Ok(view.iter().copied().collect())
        };
        let fc1 = vector(n, cfg.fc1, &self.profile.fc1_tensor)?;
        let fc2 = vector(n + 1, cfg.fc2, &self.profile.fc2_tensor)?;
        let probs = match (&self.profile.softmax_tensor, cfg.classes) {
            (Some(t), Some(classes)) => Some(vector(n + 2, classes, t)?),
            _ => None,
        };
        let acts = NetworkActivations::new(blocks, fc1, fc2, probs)?;
        validate_shapes(&acts, cfg).into_result()?;
        Ok(acts)
    }
}

/// Every tensor the profile reads must be produced by some node or be a
/// graph input.
fn check_tensor_names(proto: &pb::ModelProto, profile: &ModelProfile) -> Result<()> {
    let graph = proto
        .graph
        .as_ref()
        .ok_or_else(|| Error::Config("model has no graph".into()))?;
    let mut known: HashSet<&str> = HashSet::new();
    for node in &graph.node {
        known.insert(node.name.as_str());
        known.extend(node.output.iter().map(String::as_str));
    }
    let inputs: HashSet<&str> = graph.input.iter().map(|i| i.name.as_str()).collect();
    let input = &profile.network_config().input.tensor;
    if !inputs.contains(input.as_str()) {
        return Err(Error::Config(format!("model has no input named {input:?}")));
    }
    for name in profile.output_tensors() {
        if !known.contains(name) {
            return Err(Error::Config(format!("model has no tensor named {name:?}")));
        }
    }
    Ok(())
}

impl ActivationProvider for OnnxProvider {
    fn config(&self) -> &NetworkConfig {
        self.profile.network_config()
    }

    fn activations(&self, image: &ImageRecord) -> Result<NetworkActivations> {
        let input = preprocess(image, &self.config().input);
        let tensor = Tensor::from_shape(&input.batched_shape(), &input.data).map_err(provider_err)?;
        let outputs = self
            .plan
            .run(tvec!(tensor.into()))
            .map_err(|e| Error::Provider(format!("{}: {e:#}", image.id())))?;
        self.outputs_to_activations(outputs)
            .map_err(|e| match e {
                Error::Provider(msg) => Error::Provider(format!("{}: {msg}", image.id())),
                other => other,
            })
    }
}
