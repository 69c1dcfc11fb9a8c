use image::{Rgb, RgbImage};
use sigcode_core::{build_descriptors, ActivationProvider, Error, Family, ImageRecord};
use sigcode_onnx::synth::{build_model, write_model, SynthSpec};
use sigcode_onnx::OnnxProvider;

fn tiny(seed: u64) -> OnnxProvider {
    let spec = SynthSpec::tiny(seed);
    OnnxProvider::from_proto(&build_model(&spec), spec.profile(None).unwrap()).unwrap()
}

fn picture(id: &str, salt: u32) -> ImageRecord {
    let img = RgbImage::from_fn(80, 72, |x, y| {
        Rgb([
            ((x * 3 + y + salt) % 256) as u8,
            ((x * y + 7 * salt) % 256) as u8,
            ((200 + x + 2 * y) % 256) as u8,
        ])
    });
    ImageRecord::new(id, "mem", img).unwrap()
}

#[test]
fn activations_follow_the_profile() {
    let p = tiny(1);
    let acts = p.activations(&picture("a", 0)).unwrap();
    let cfg = p.config();
    assert!(sigcode_core::validate_shapes(&acts, cfg).is_ok());
    let shapes: Vec<String> = acts.blocks().iter().map(|b| b.shape().to_string()).collect();
    assert_eq!(shapes, ["32x32x4", "16x16x8", "8x8x16", "4x4x16", "2x2x16"]);
    assert_eq!(acts.fc1().len(), 32);
    let probs = acts.class_probs().unwrap();
    assert_eq!(probs.len(), 10);
    assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    assert!(acts.predicted_class().unwrap() < 10);
}

#[test]
fn inference_is_deterministic() {
    let img = picture("a", 3);
    let a = tiny(7).activations(&img).unwrap();
    let b = tiny(7).activations(&img).unwrap();
    assert_eq!(a, b);
    let other = tiny(8).activations(&img).unwrap();
    assert_ne!(a, other);
}

#[test]
fn different_images_give_different_descriptors() {
    let p = tiny(2);
    let a = build_descriptors(&p.activations(&picture("a", 0)).unwrap(), 0.5, p.config()).unwrap();
    let b = build_descriptors(&p.activations(&picture("b", 90)).unwrap(), 0.5, p.config()).unwrap();
    assert_eq!(a.get(Family::Conv).unwrap().dim(), 4 + 8 + 16 + 16 + 16);
    assert_ne!(a.fc, b.fc);
}

#[test]
fn last_block_is_partly_significant() {
    let p = tiny(0);
    let acts = p.activations(&picture("a", 11)).unwrap();
    let values: Vec<f32> = acts
        .last_block()
        .channels()
        .iter()
        .flat_map(|c| c.values().to_vec())
        .collect();
    let above = values.iter().filter(|&&v| v >= 0.5).count();
    assert!(above > 0 && above < values.len(), "{above} of {}", values.len());
}

#[test]
fn concurrent_runs_match_sequential_runs() {
    let p = tiny(4);
    let images: Vec<ImageRecord> = (0..6).map(|i| picture(&format!("i{i}"), i * 17)).collect();
    let sequential: Vec<_> = images.iter().map(|im| p.activations(im).unwrap()).collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = images.iter().map(|im| s.spawn(|| p.activations(im).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(sequential, parallel);
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::tiny(5);
    let profile_path = write_model(&spec, dir.path(), "tiny").unwrap();
    let profile = sigcode_core::ModelProfile::load(&profile_path).unwrap();
    assert_eq!(profile.model_path.as_deref(), Some(dir.path().join("tiny.onnx").as_path()));
    let from_file = OnnxProvider::load(profile).unwrap();
    let img = picture("a", 1);
    assert_eq!(from_file.activations(&img).unwrap(), tiny(5).activations(&img).unwrap());
    // Same spec, same bytes.
    let again = tempfile::tempdir().unwrap();
    write_model(&spec, again.path(), "tiny").unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("tiny.onnx")).unwrap(),
        std::fs::read(again.path().join("tiny.onnx")).unwrap()
    );
}

#[test]
fn missing_tensor_is_a_config_error() {
    let spec = SynthSpec::tiny(0);
    let mut profile = spec.profile(None).unwrap();
    profile.fc2_tensor = "fc7_relu".into();
    match OnnxProvider::from_proto(&build_model(&spec), profile) {
        Err(Error::Config(msg)) => assert!(msg.contains("fc7_relu"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_model_file_is_a_config_error() {
    let mut profile = SynthSpec::tiny(0).profile(None).unwrap();
    assert!(matches!(OnnxProvider::load(profile.clone()), Err(Error::Config(_))));
    profile.model_path = Some("/nonexistent/model.onnx".into());
    match OnnxProvider::load(profile) {
        Err(Error::Config(msg)) => assert!(msg.contains("/nonexistent/model.onnx"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn vgg16_spec_matches_the_bundled_profile() {
    let spec = SynthSpec::vgg16(0);
    let bundled = sigcode_core::ModelProfile::vgg16();
    let synth = spec.profile(None).unwrap();
    assert_eq!(synth.network_config(), bundled.network_config());
    assert_eq!(synth.output_tensors(), bundled.output_tensors());
}
