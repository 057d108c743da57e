//! JSON checkpoints.
//!
//! Values are written with 17 significant digits so that load followed by save
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{EnhpModel, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{InputTransform, Parameters};

pub const FORMAT_VERSION: u32 = 1;
const NORMALIZATION: &str = "mean_per_sequence";

/// A model plus free-form provenance (training config, data source, seeds).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: EnhpModel,
    pub provenance: Value,
}

#[derive(Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    #[serde(rename = "M")]
    num_types: usize,
    #[serde(rename = "D")]
    embed_dim: usize,
    tie_embeddings: bool,
    input_transform: InputTransform,
    hidden_dim: usize,
    normalization: String,
    tensors: BTreeMap<String, TensorRecord>,
    #[serde(default)]
    provenance: Value,
}

fn tensor_shapes(model: &EnhpModel) -> Vec<(&'static str, Vec<usize>)> {
    let (m, d, h) = (model.num_types(), model.embed_dim(), model.kernel.hidden_dim);
    let mut shapes = vec![("mu_raw", vec![m]), ("w1_raw", vec![d, m])];
    if !model.tie_embeddings() {
        shapes.push(("w2_raw", vec![d, m]));
    }
    shapes.extend([
        ("kernel.hidden_w", vec![h, 1]),
        ("kernel.hidden_b", vec![h]),
        ("kernel.out_w", vec![d * d, h]),
        ("kernel.out_b", vec![d * d]),
    ]);
    shapes
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Checkpoint {
    pub fn new(model: EnhpModel, provenance: Value) -> Self {
        Self { model, provenance }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let model = &self.model;
        model.check_shapes()?;
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"format_version\": {FORMAT_VERSION},");
        let _ = writeln!(out, "  \"M\": {},", model.num_types());
        let _ = writeln!(out, "  \"D\": {},", model.embed_dim());
        let _ = writeln!(out, "  \"tie_embeddings\": {},", model.tie_embeddings());
        let _ = writeln!(
            out,
            "  \"input_transform\": \"{}\",",
            model.kernel.input_transform.as_str()
        );
        let _ = writeln!(out, "  \"hidden_dim\": {},", model.kernel.hidden_dim);
        let _ = writeln!(out, "  \"normalization\": \"{NORMALIZATION}\",");
        out.push_str("  \"tensors\": {\n");
        let tensors: BTreeMap<&str, &[f64]> = model.tensors().into_iter().collect();
        let shapes = tensor_shapes(model);
        for (n, (name, shape)) in shapes.iter().enumerate() {
            let values = tensors[name];
            if let Some(bad) = values.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{name}[{bad}]")));
            }
            let shape: Vec<String> = shape.iter().map(|s| s.to_string()).collect();
            let values: Vec<String> = values.iter().map(|&x| fmt_f64(x)).collect();
            let _ = write!(
                out,
                "    \"{name}\": {{\"shape\": [{}], \"values\": [{}]}}",
                shape.join(", "),
                values.join(", ")
            );
            out.push_str(if n + 1 < shapes.len() { ",\n" } else { "\n" });
        }
        out.push_str("  },\n");
        let provenance = serde_json::to_string(&self.provenance)?;
        let _ = writeln!(out, "  \"provenance\": {provenance}");
        out.push_str("}\n");
        Ok(out)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if file.normalization != NORMALIZATION {
            return Err(Error::Config(format!(
                "unsupported normalization {:?}",
                file.normalization
            )));
        }
        let cfg = ModelConfig {
            num_types: file.num_types,
            embed_dim: file.embed_dim,
            hidden_dim: file.hidden_dim,
            input_transform: file.input_transform,
            tie_embeddings: file.tie_embeddings,
        };
        let mut model = EnhpModel::zeros(cfg)?;
        let shapes = tensor_shapes(&model);
        let mut tensors = file.tensors;
        for (name, shape) in &shapes {
            let record = tensors
                .remove(*name)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing tensor {name}")))?;
            let numel: usize = record.shape.iter().product();
            if &record.shape != shape || record.values.len() != numel {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                    expected: shape.clone(),
                    found: if record.values.len() == numel {
                        record.shape
                    } else {
                        vec![record.values.len()]
                    },
                });
            }
            let mut targets = model.tensors_mut();
            let slot = targets.iter_mut().find(|(n, _)| n == name).expect("known tensor");
            slot.1.copy_from_slice(&record.values);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Config(format!("unexpected tensor {extra} in checkpoint")));
        }
        Ok(Self {
            model,
            provenance: file.provenance,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = ckpt.to_json_string()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json_str(&text)
}

pub fn save_model(model: &EnhpModel, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint(&Checkpoint::new(model.clone(), Value::Null), path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnhpModel> {
    load_checkpoint(path).map(|c| c.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::random_model;
    use serde_json::json;

    #[test]
    fn round_trip_is_byte_identical() {
        let model = random_model(4, 3, 8, 12);
        let ckpt = Checkpoint::new(model.clone(), json!({"seed": 7, "lr": 1e-4}));
        let first = ckpt.to_json_string().unwrap();
        let back = Checkpoint::from_json_str(&first).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.provenance, ckpt.provenance);
        assert_eq!(back.to_json_string().unwrap(), first);
    }

    #[test]
    fn tied_checkpoint_has_no_output_embedding() {
        let mut model = random_model(3, 2, 4, 1);
        model.tie_embeddings = true;
        model.w2_raw.clear();
        let text = Checkpoint::new(model.clone(), Value::Null).to_json_string().unwrap();
        assert!(!text.contains("w2_raw"));
        assert_eq!(Checkpoint::from_json_str(&text).unwrap().model, model);
    }

    #[test]
    fn tampered_dimensions_are_rejected() {
        let model = random_model(3, 2, 4, 1);
        let text = Checkpoint::new(model, Value::Null).to_json_string().unwrap();
        let tampered = text.replace("\"M\": 3", "\"M\": 4");
        let err = Checkpoint::from_json_str(&tampered).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
        let version = text.replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            Checkpoint::from_json_str(&version).unwrap_err(),
            Error::FormatVersion { found: 9, .. }
        ));
    }

    #[test]
    fn non_finite_parameters_are_not_saved() {
        let mut model = random_model(2, 2, 4, 1);
        model.mu_raw[1] = f64::NAN;
        assert!(Checkpoint::new(model, Value::Null).to_json_string().is_err());
    }
}
