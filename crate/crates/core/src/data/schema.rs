use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous {
        mean: f64,
        std: f64,
    },
    /// Index `vocabulary.len()` is reserved for unseen categories.
    Categorical {
        vocabulary: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>, mean: f64, std: f64) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous { mean, std },
        }
    }

    pub fn categorical(name: impl Into<String>, vocabulary: Vec<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical { vocabulary },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    /// Embedding rows needed for a categorical feature (vocabulary plus UNK).
    pub fn table_rows(&self) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { vocabulary } => Some(vocabulary.len() + 1),
            FeatureKind::Continuous { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label: String,
    pub task: Task,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, label: impl Into<String>, task: Task) -> Result<Self> {
        let s = FeatureSchema {
            features,
            label: label.into(),
            task,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.features.is_empty() {
            problems.push("schema needs at least one feature".to_string());
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                problems.push(format!("duplicate feature name `{}`", f.name));
            }
            if f.name == self.label {
                problems.push(format!(
                    "feature `{}` clashes with the label column",
                    f.name
                ));
            }
            match &f.kind {
                FeatureKind::Continuous { mean, std } => {
                    if !mean.is_finite() {
                        problems.push(format!("feature `{}`: mean must be finite", f.name));
                    }
                    if !(std.is_finite() && *std > 0.0) {
                        problems.push(format!("feature `{}`: std must be > 0, got {std}", f.name));
                    }
                }
                FeatureKind::Categorical { vocabulary } => {
                    if vocabulary.is_empty() {
                        problems.push(format!("feature `{}`: empty vocabulary", f.name));
                    }
                    let uniq: HashSet<_> = vocabulary.iter().collect();
                    if uniq.len() != vocabulary.len() {
                        problems.push(format!(
                            "feature `{}`: duplicate vocabulary entries",
                            f.name
                        ));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::path(path, e))?;
        let s: FeatureSchema = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::path(path, e))
    }
}
