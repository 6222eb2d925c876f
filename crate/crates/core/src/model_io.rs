//! Versioned JSON persistence for fitted forests.
//!
//! Trees are stored as flat node arrays in preorder (parent, left subtree,
//! right subtree) with every split statistic included, so traversal-rate
//! trends can be computed from a saved model without the training data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::forest::{Forest, ForestConfig, SplitRecord, TreeNode};
use crate::Result;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeRecord {
    Split(SplitRecord),
    Leaf { value: f64, count: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestModel {
    format_version: u32,
    feature_names: Vec<String>,
    config: ForestConfig,
    n_train: usize,
    /// One preorder node list per tree.
    trees: Vec<Vec<NodeRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oob_indices: Option<Vec<Vec<usize>>>,
}

fn encode_tree(node: &TreeNode, out: &mut Vec<NodeRecord>) {
    match node {
        TreeNode::Leaf { value, count } => out.push(NodeRecord::Leaf {
            value: *value,
            count: *count,
        }),
        TreeNode::Split { record, left, right } => {
            out.push(NodeRecord::Split(record.clone()));
            encode_tree(left, out);
            encode_tree(right, out);
        }
    }
}

fn decode_tree(
    nodes: &mut std::vec::IntoIter<NodeRecord>,
    d: usize,
) -> Result<TreeNode> {
    match nodes.next() {
        None => Err(Error::ModelFormat("truncated preorder node list".into())),
        Some(NodeRecord::Leaf { value, count }) => Ok(TreeNode::Leaf { value, count }),
        Some(NodeRecord::Split(record)) => {
            if record.feature_index >= d {
                return Err(Error::ModelFormat(format!(
                    "split references feature {} but model has {d} features",
                    record.feature_index
                )));
            }
            let left = decode_tree(nodes, d)?;
            let right = decode_tree(nodes, d)?;
            Ok(TreeNode::Split {
                record,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
    }
}

pub fn to_json(forest: &Forest) -> Result<String> {
    let trees = forest
        .trees
        .iter()
        .map(|t| {
            let mut nodes = Vec::new();
            encode_tree(t, &mut nodes);
            nodes
        })
        .collect();
    let model = ForestModel {
        format_version: FORMAT_VERSION,
        feature_names: forest.feature_names.clone(),
        config: forest.config.clone(),
        n_train: forest.n_train,
        trees,
        oob_indices: forest.oob_indices.clone(),
    };
    Ok(serde_json::to_string_pretty(&model)?)
}

pub fn from_json(json: &str) -> Result<Forest> {
    let model: ForestModel = serde_json::from_str(json)?;
    if model.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            model.format_version
        )));
    }
    let d = model.feature_names.len();
    let mut trees = Vec::with_capacity(model.trees.len());
    for nodes in model.trees {
        let mut iter = nodes.into_iter();
        let tree = decode_tree(&mut iter, d)?;
        if iter.next().is_some() {
            return Err(Error::ModelFormat(
                "trailing nodes after preorder reconstruction".into(),
            ));
        }
        trees.push(tree);
    }
    Ok(Forest {
        trees,
        config: model.config,
        feature_names: model.feature_names,
        oob_indices: model.oob_indices,
        n_train: model.n_train,
    })
}

pub fn save(forest: &Forest, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(forest)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Forest> {
    from_json(&std::fs::read_to_string(path)?)
}
