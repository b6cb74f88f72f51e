//! Model files: versioned JSON with a flattened pre-order tree encoding.
//!
//! ```json
//! {
//!   "format": "millsense-forest",
//!   "version": 1,
//!   "feature_names": [...],
//!   "hyper": {...},
//!   "meta": {...},
//!   "impurity_decrease": [...],
//!   "trees": [[{"kind":"split","feature":0,"threshold":0.5}, {"kind":"leaf",...}, ...], ...]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces its predictions bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Forest, HyperParams, ModelMeta, TreeNode};

pub const FORMAT_NAME: &str = "millsense-forest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported model format `{format}` version {version}")]
    Unsupported { format: String, version: u32 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FlatNode {
    Split { feature: usize, threshold: f64 },
    Leaf { value: f64, n_samples: usize },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    feature_names: Vec<String>,
    hyper: HyperParams,
    meta: ModelMeta,
    impurity_decrease: Vec<f64>,
    trees: Vec<Vec<FlatNode>>,
}

fn flatten(node: &TreeNode, out: &mut Vec<FlatNode>) {
    match node {
        TreeNode::Leaf { value, n_samples } => out.push(FlatNode::Leaf {
            value: *value,
            n_samples: *n_samples,
        }),
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push(FlatNode::Split {
                feature: *feature,
                threshold: *threshold,
            });
            flatten(left, out);
            flatten(right, out);
        }
    }
}

fn unflatten(nodes: &[FlatNode], pos: &mut usize, n_features: usize) -> Result<TreeNode, PersistError> {
    let node = nodes
        .get(*pos)
        .ok_or_else(|| PersistError::Malformed("truncated tree encoding".into()))?;
    *pos += 1;
    match *node {
        FlatNode::Leaf { value, n_samples } => Ok(TreeNode::Leaf { value, n_samples }),
        FlatNode::Split { feature, threshold } => {
            if feature >= n_features {
                return Err(PersistError::Malformed(format!("split on feature {feature} out of range")));
            }
            let left = unflatten(nodes, pos, n_features)?;
            let right = unflatten(nodes, pos, n_features)?;
            Ok(TreeNode::Internal {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
    }
}

pub fn forest_to_string(forest: &Forest) -> String {
    let file = ModelFile {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        feature_names: forest.feature_names.clone(),
        hyper: forest.hyper,
        meta: forest.meta.clone(),
        impurity_decrease: forest.impurity_decrease.clone(),
        trees: forest
            .trees
            .iter()
            .map(|t| {
                let mut out = Vec::new();
                flatten(t, &mut out);
                out
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
    text.push('\n');
    text
}

pub fn forest_from_str(text: &str) -> Result<Forest, PersistError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| PersistError::Malformed(e.to_string()))?;
    if file.format != FORMAT_NAME || file.version != FORMAT_VERSION {
        return Err(PersistError::Unsupported {
            format: file.format,
            version: file.version,
        });
    }
    let p = file.feature_names.len();
    if file.impurity_decrease.len() != p {
        return Err(PersistError::Malformed("impurity_decrease length differs from feature count".into()));
    }
    if file.trees.is_empty() {
        return Err(PersistError::Malformed("model has no trees".into()));
    }
    let mut trees = Vec::with_capacity(file.trees.len());
    for (i, nodes) in file.trees.iter().enumerate() {
        let mut pos = 0;
        let tree = unflatten(nodes, &mut pos, p)?;
        if pos != nodes.len() {
            return Err(PersistError::Malformed(format!("tree {i} has trailing nodes")));
        }
        trees.push(tree);
    }
    Ok(Forest {
        trees,
        hyper: file.hyper,
        feature_names: file.feature_names,
        impurity_decrease: file.impurity_decrease,
        meta: file.meta,
    })
}

pub fn save_forest(forest: &Forest, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, forest_to_string(forest)).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_forest(path: &Path) -> Result<Forest, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })?;
    forest_from_str(&text)
}
