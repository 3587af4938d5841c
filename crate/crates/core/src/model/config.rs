use crate::data::Task;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logistic,
    Identity,
}

impl Link {
    pub fn for_task(task: Task) -> Link {
        match task {
            Task::Classification => Link::Logistic,
            Task::Regression => Link::Identity,
        }
    }

    pub fn apply(self, f: f64) -> f64 {
        match self {
            Link::Logistic => crate::math::sigmoid(f),
            Link::Identity => f,
        }
    }

    /// Inverse link, with probabilities clamped away from 0 and 1.
    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Link::Logistic => {
                let p = y.clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
            Link::Identity => y,
        }
    }
}

/// What the marginal module attends to when a feature has no predecessors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullContext {
    /// A trained context token, always visible to every query.
    Learned,
    /// A fixed all-zero token.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub mlp: Vec<usize>,
    pub attention_dimension: usize,
    pub attention_head: usize,
}

/// Network structure. Field names follow the usual hyperparameter table
/// layout (embedding dimension, continuous embedding, per-module MLP and
/// attention sizes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub embedding_dimension: usize,
    /// Hidden widths of the per-feature MLP embedding a continuous value; a
    /// final linear layer maps to `embedding_dimension`.
    pub continuous_embedding: Vec<usize>,
    pub marginal: AttentionConfig,
    pub shapley: AttentionConfig,
    pub null_context: NullContext,
    pub leaky_slope: f64,
    /// Std of the normal initializer for embedding tables and tokens. Dense
    /// weights use Xavier-normal scaling.
    pub init_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            embedding_dimension: 64,
            continuous_embedding: vec![16, 16, 64],
            marginal: AttentionConfig {
                mlp: vec![128, 128, 128],
                attention_dimension: 8,
                attention_head: 4,
            },
            shapley: AttentionConfig {
                mlp: vec![128, 128, 128],
                attention_dimension: 8,
                attention_head: 8,
            },
            null_context: NullContext::Learned,
            leaky_slope: 0.01,
            init_std: 0.02,
        }
    }
}

impl ArchConfig {
    /// A small structure that trains in minutes on one core.
    pub fn desk() -> Self {
        ArchConfig {
            embedding_dimension: 32,
            continuous_embedding: vec![16, 16],
            marginal: AttentionConfig {
                mlp: vec![64, 64],
                attention_dimension: 8,
                attention_head: 4,
            },
            shapley: AttentionConfig {
                mlp: vec![64, 64],
                attention_dimension: 8,
                attention_head: 4,
            },
            ..ArchConfig::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.embedding_dimension == 0 {
            p.push("embedding_dimension must be > 0".to_string());
        }
        if self.continuous_embedding.contains(&0) {
            p.push("continuous_embedding widths must be > 0".to_string());
        }
        for (name, a) in [("marginal", &self.marginal), ("shapley", &self.shapley)] {
            if a.attention_dimension == 0 {
                p.push(format!("{name}.attention_dimension must be > 0"));
            }
            if a.attention_head == 0 {
                p.push(format!("{name}.attention_head must be > 0"));
            }
            if a.mlp.contains(&0) {
                p.push(format!("{name}.mlp widths must be > 0"));
            }
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            p.push("leaky_slope must be >= 0".to_string());
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            p.push("init_std must be > 0".to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}
