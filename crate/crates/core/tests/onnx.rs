#![cfg(feature = "onnx")]

use std::path::{Path, PathBuf};

use dfup::features::{FeatureError, FeatureExtractor};
use dfup::preprocess::{AugmentationTag, Patch};
use prost::Message;
use tract_onnx::pb::{
    tensor_shape_proto, type_proto, AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto,
    TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

const SIZE: usize = 8;
const FLOAT: i32 = 1;

fn value_info(name: &str, dims: &[i64]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .map(|d| tensor_shape_proto::Dimension {
            value: Some(tensor_shape_proto::dimension::Value::DimValue(*d)),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: FLOAT,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn node(op: &str, name: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: name.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        attribute,
        ..Default::default()
    }
}

/// input [1,3,S,S] -> 1x1 Conv (identity on the first two channels) -> "mix"
/// [1,2,S,S] -> GlobalMaxPool -> Flatten -> "embed" [1,2].
fn write_model(dir: &Path) -> PathBuf {
    let mut weights = vec![0f32; 2 * 3];
    weights[0] = 1.0;
    weights[3 + 1] = 1.0;
    let graph = GraphProto {
        name: "tiny".into(),
        node: vec![
            node("Conv", "mix_conv", &["input", "w"], "mix", vec![]),
            node("GlobalMaxPool", "gmp", &["mix"], "gmp_out", vec![]),
            node(
                "Flatten",
                "flatten",
                &["gmp_out"],
                "embed",
                vec![AttributeProto {
                    name: "axis".into(),
                    i: 1,
                    r#type: 2,
                    ..Default::default()
                }],
            ),
        ],
        initializer: vec![TensorProto {
            name: "w".into(),
            dims: vec![2, 3, 1, 1],
            data_type: FLOAT,
            float_data: weights,
            ..Default::default()
        }],
        input: vec![value_info("input", &[1, 3, SIZE as i64, SIZE as i64])],
        output: vec![value_info("embed", &[1, 2])],
        ..Default::default()
    };
    let model = ModelProto {
        ir_version: 7,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        graph: Some(graph),
        ..Default::default()
    };
    let path = dir.join("tiny.onnx");
    std::fs::write(&path, model.encode_to_vec()).unwrap();
    path
}

fn write_sidecar(dir: &Path, body: serde_json::Value) {
    std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&body).unwrap()).unwrap();
}

fn patch(f: impl Fn(usize, usize, usize) -> f32) -> Patch {
    let mut data = Vec::new();
    for y in 0..SIZE {
        for x in 0..SIZE {
            for c in 0..3 {
                data.push(f(x, y, c));
            }
        }
    }
    Patch {
        size: SIZE,
        data,
        patient_id: "P1".into(),
        slice_index: 0,
        tag: AugmentationTag::Center,
        label: true,
    }
}

fn taps() -> serde_json::Value {
    serde_json::json!([{"name": "mix", "length": 2}, {"name": "embed", "length": 2}])
}

#[test]
fn loads_model_and_pools_taps() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    write_sidecar(dir.path(), serde_json::json!({"input_size": SIZE, "taps": taps()}));
    let extractor = FeatureExtractor::load_external(&model).unwrap();
    let shapes: Vec<(String, [usize; 3])> = extractor.catalog().iter().map(|l| (l.name.clone(), l.shape)).collect();
    assert_eq!(shapes, vec![("mix".into(), [2, SIZE, SIZE]), ("embed".into(), [2, 1, 1])]);

    let input = patch(|x, y, c| (x + 2 * y) as f32 + 100.0 * c as f32);
    let pooled = extractor.pooled(&input, &["mix", "embed"]).unwrap();
    let top = (SIZE - 1 + 2 * (SIZE - 1)) as f32;
    assert_eq!(pooled[0], vec![top, top + 100.0]);
    assert_eq!(pooled[1], pooled[0]);
    let maps = extractor.forward(&input).unwrap();
    assert_eq!(maps["mix"].data[SIZE + 3], (3 + 2) as f32);
}

#[test]
fn sidecar_preprocessing_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    write_sidecar(
        dir.path(),
        serde_json::json!({
            "input_size": SIZE,
            "taps": taps(),
            "preprocessing": {"mean": [1.0, 2.0, 3.0], "scale": 0.5, "channel_order": "bgr"}
        }),
    );
    let extractor = FeatureExtractor::load_external(&model).unwrap();
    let input = patch(|_, _, c| [10.0, 20.0, 30.0][c]);
    let pooled = extractor.pooled(&input, &["embed"]).unwrap();
    // Network channel 0 reads source channel 2, channel 1 reads source channel 1.
    assert_eq!(pooled[0], vec![(30.0 - 1.0) * 0.5, (20.0 - 2.0) * 0.5]);
}

#[test]
fn missing_tap_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    write_sidecar(
        dir.path(),
        serde_json::json!({"input_size": SIZE, "taps": [{"name": "pool5", "length": 2}]}),
    );
    match FeatureExtractor::load_external(&model) {
        Err(FeatureError::MissingTap(name)) => assert_eq!(name, "pool5"),
        other => panic!("expected MissingTap, got {other:?}"),
    }
}

#[test]
fn declared_length_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    write_sidecar(
        dir.path(),
        serde_json::json!({"input_size": SIZE, "taps": [{"name": "embed", "length": 4096}]}),
    );
    match FeatureExtractor::load_external(&model) {
        Err(FeatureError::ShapeMismatch { tap, expected, got }) => {
            assert_eq!(tap, "embed");
            assert_eq!(expected, 4096);
            assert_eq!(got, vec![1, 2]);
        }
        other => panic!("expected ShapeMismatch, got {other:?}"),
    }
}

#[test]
fn missing_sidecar_or_model_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    assert!(matches!(
        FeatureExtractor::load_external(&model),
        Err(FeatureError::Load { path, .. }) if path.ends_with("meta.json")
    ));
    write_sidecar(dir.path(), serde_json::json!({"input_size": SIZE, "taps": taps()}));
    assert!(matches!(
        FeatureExtractor::load_external(&dir.path().join("absent.onnx")),
        Err(FeatureError::Load { .. })
    ));
}

#[test]
fn wrong_patch_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    write_sidecar(dir.path(), serde_json::json!({"input_size": SIZE, "taps": taps()}));
    let extractor = FeatureExtractor::load_external(&model).unwrap();
    let mut small = patch(|_, _, _| 0.0);
    small.size = 4;
    small.data.truncate(4 * 4 * 3);
    assert!(matches!(
        extractor.forward(&small),
        Err(FeatureError::InputSize { expected: SIZE, got: 4 })
    ));
}
