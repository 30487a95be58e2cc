use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{is_known_layout, GbdtModel, Node, Tree};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    layout_version: String,
    n_features: usize,
    base_score: f64,
    trees: Vec<Tree>,
}

/// Writes versioned JSON. Floats use the shortest representation that parses
/// back to the same bits, so a reloaded model predicts identically.
pub fn save_model(model: &GbdtModel, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn model_to_json(model: &GbdtModel) -> Result<String> {
    let file = ModelFile {
        version: FORMAT_VERSION,
        layout_version: model.layout_version.clone(),
        n_features: model.n_features,
        base_score: model.base_score,
        trees: model.trees.clone(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Schema(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<GbdtModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

pub fn model_from_json(text: &str) -> Result<GbdtModel> {
    // Check the version before the full schema so old files report the right error.
    let probe: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(Error::VersionMismatch(format!("model format {v}"))),
        None => return Err(Error::Schema("missing model format version".into())),
    }
    let file: ModelFile =
        serde_json::from_value(probe).map_err(|e| Error::Schema(e.to_string()))?;
    if !is_known_layout(&file.layout_version, file.n_features) {
        return Err(Error::VersionMismatch(format!(
            "feature layout '{}' with {} features",
            file.layout_version, file.n_features
        )));
    }
    if !file.base_score.is_finite() {
        return Err(Error::Schema("non-finite base score".into()));
    }
    for (t, tree) in file.trees.iter().enumerate() {
        validate_tree(tree, file.n_features)
            .map_err(|m| Error::Schema(format!("tree {t}: {m}")))?;
    }
    Ok(GbdtModel {
        layout_version: file.layout_version,
        n_features: file.n_features,
        base_score: file.base_score,
        trees: file.trees,
    })
}

/// Children must point forward, so traversal always terminates.
fn validate_tree(tree: &Tree, n_features: usize) -> std::result::Result<(), String> {
    if tree.nodes.is_empty() {
        return Err("no nodes".into());
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        match *node {
            Node::Leaf { weight } if !weight.is_finite() => {
                return Err(format!("node {i}: non-finite weight"))
            }
            Node::Leaf { .. } => {}
            Node::Split {
                feature,
                threshold,
                left,
                right,
                gain,
            } => {
                if feature >= n_features {
                    return Err(format!("node {i}: feature {feature} out of range"));
                }
                if !threshold.is_finite() || !gain.is_finite() {
                    return Err(format!("node {i}: non-finite threshold or gain"));
                }
                if left <= i || right <= i || left >= tree.nodes.len() || right >= tree.nodes.len()
                {
                    return Err(format!("node {i}: invalid child index"));
                }
            }
        }
    }
    Ok(())
}
