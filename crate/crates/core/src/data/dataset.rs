use super::schema::{FeatureKind, FeatureSchema, Task};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One row. Continuous values are stored normalized once the owning dataset
/// is normalized; categorical values hold the category index as an integer.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    schema: FeatureSchema,
    samples: Vec<Sample>,
    normalized: bool,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, samples: Vec<Sample>, normalized: bool) -> Result<Self> {
        schema.validate()?;
        for (row, s) in samples.iter().enumerate() {
            check_sample(&schema, row, s)?;
        }
        Ok(Dataset {
            schema,
            samples,
            normalized,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn mean_label(&self) -> f64 {
        self.samples.iter().map(|s| s.label).sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Applies `(v - mean) / std` to continuous features. Refuses to run twice.
    pub fn normalize(&mut self) -> Result<()> {
        if self.normalized {
            return Err(Error::InvalidArgument(
                "dataset is already normalized".into(),
            ));
        }
        for s in &mut self.samples {
            for (v, f) in s.values.iter_mut().zip(&self.schema.features) {
                if let FeatureKind::Continuous { mean, std } = f.kind {
                    *v = (*v - mean) / std;
                }
            }
        }
        self.normalized = true;
        Ok(())
    }

    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        let samples = rows
            .iter()
            .map(|&r| {
                self.samples.get(r).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("row {r} out of range ({} rows)", self.len()))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            schema: self.schema.clone(),
            samples,
            normalized: self.normalized,
        })
    }

    pub(crate) fn map_samples(&self, f: impl Fn(&Sample) -> Sample) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: self.samples.iter().map(f).collect(),
            normalized: self.normalized,
        }
    }

    /// Writes raw (de-normalized) values with categorical labels, so that
    /// [`load_csv`] with the same schema reproduces this dataset.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_path_err(path, e))?;
        let mut header: Vec<&str> = self
            .schema
            .features
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        header.push(&self.schema.label);
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for (v, f) in s.values.iter().zip(&self.schema.features) {
                rec.push(match &f.kind {
                    FeatureKind::Continuous { mean, std } => {
                        let raw = if self.normalized { v * std + mean } else { *v };
                        raw.to_string()
                    }
                    FeatureKind::Categorical { vocabulary } => vocabulary
                        .get(*v as usize)
                        .cloned()
                        .unwrap_or_else(|| "<unk>".to_string()),
                });
            }
            rec.push(s.label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_path_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::path(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

fn check_sample(schema: &FeatureSchema, row: usize, s: &Sample) -> Result<()> {
    if s.values.len() != schema.n_features() {
        return Err(Error::InvalidArgument(format!(
            "row {row}: {} values for {} features",
            s.values.len(),
            schema.n_features()
        )));
    }
    for (v, f) in s.values.iter().zip(&schema.features) {
        match &f.kind {
            FeatureKind::Continuous { .. } if !v.is_finite() => {
                return Err(Error::InvalidArgument(format!(
                    "row {row}: `{}` is not finite",
                    f.name
                )))
            }
            FeatureKind::Categorical { vocabulary }
                if !(v.fract() == 0.0 && *v >= 0.0 && (*v as usize) <= vocabulary.len()) =>
            {
                return Err(Error::InvalidArgument(format!(
                    "row {row}: `{}` has invalid category index {v}",
                    f.name
                )))
            }
            _ => {}
        }
    }
    check_label(schema.task, row, s.label)
}

fn check_label(task: Task, row: usize, y: f64) -> Result<()> {
    match task {
        Task::Classification if y != 0.0 && y != 1.0 => Err(Error::InvalidArgument(format!(
            "row {row}: classification label must be 0 or 1, got {y}"
        ))),
        _ if !y.is_finite() => Err(Error::InvalidArgument(format!(
            "row {row}: label is not finite"
        ))),
        _ => Ok(()),
    }
}

/// Reads a CSV file whose header names every schema feature and the label,
/// normalizing continuous columns with the schema statistics.
pub fn load_csv(path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = FeatureSchema::load(schema_path)?;
    let rdr = csv::Reader::from_path(path).map_err(|e| csv_path_err(path, e))?;
    read_csv(rdr, schema)
}

/// Like [`load_csv`], with the schema already in hand.
pub fn load_csv_with_schema(path: &Path, schema: FeatureSchema) -> Result<Dataset> {
    let rdr = csv::Reader::from_path(path).map_err(|e| csv_path_err(path, e))?;
    read_csv(rdr, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(
    mut rdr: csv::Reader<R>,
    schema: FeatureSchema,
) -> Result<Dataset> {
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut missing = Vec::new();
    let mut feature_cols = Vec::with_capacity(schema.n_features());
    for f in &schema.features {
        match col(&f.name) {
            Some(c) => feature_cols.push(c),
            None => missing.push(format!("column `{}` missing from CSV header", f.name)),
        }
    }
    let label_col = col(&schema.label);
    if label_col.is_none() {
        missing.push(format!(
            "label column `{}` missing from CSV header",
            schema.label
        ));
    }
    if !missing.is_empty() {
        return Err(Error::Validation(missing));
    }
    let label_col = label_col.unwrap();

    let mut samples = Vec::new();
    let mut unk_warned = vec![false; schema.n_features()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = Vec::with_capacity(schema.n_features());
        for (fi, (f, &c)) in schema.features.iter().zip(&feature_cols).enumerate() {
            let cell = rec.get(c).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::MissingValue {
                    row,
                    column: f.name.clone(),
                });
            }
            values.push(match &f.kind {
                FeatureKind::Continuous { mean, std } => {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "row {row}: `{}` value `{cell}` is not a number",
                            f.name
                        ))
                    })?;
                    (v - mean) / std
                }
                FeatureKind::Categorical { vocabulary } => {
                    match vocabulary.iter().position(|c| c == cell) {
                        Some(i) => i as f64,
                        None => {
                            if !unk_warned[fi] {
                                log::warn!(
                                    "feature `{}`: unknown category `{cell}` mapped to UNK",
                                    f.name
                                );
                                unk_warned[fi] = true;
                            }
                            vocabulary.len() as f64
                        }
                    }
                }
            });
        }
        let cell = rec.get(label_col).map(str::trim).unwrap_or("");
        if cell.is_empty() {
            return Err(Error::MissingValue {
                row,
                column: schema.label.clone(),
            });
        }
        let label: f64 = cell.parse().map_err(|_| {
            Error::InvalidArgument(format!("row {row}: label `{cell}` is not a number"))
        })?;
        check_label(schema.task, row, label)?;
        samples.push(Sample { values, label });
    }
    Dataset::new(schema, samples, true)
}

/// Train/test row assignment, stored as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn random(n_rows: usize, test_fraction: f64, seed: u64) -> Split {
        let mut rows: Vec<usize> = (0..n_rows).collect();
        rows.shuffle(&mut rng::stream(seed, &[0x5311]));
        let n_test = ((n_rows as f64) * test_fraction.clamp(0.0, 1.0)).round() as usize;
        let mut test = rows.split_off(n_rows - n_test);
        rows.sort_unstable();
        test.sort_unstable();
        Split { train: rows, test }
    }

    pub fn load(path: &Path) -> Result<Split> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::path(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::path(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureSpec::continuous("x", 5.0, 2.0),
                FeatureSpec::categorical("c", vec!["a".into(), "b".into()]),
            ],
            "y",
            Task::Classification,
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<Dataset> {
        read_csv(csv::Reader::from_reader(text.as_bytes()), schema())
    }

    #[test]
    fn loads_and_normalizes() {
        let ds = parse("x,c,y\n7,a,1\n5,b,0\n3,a,0\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples()[0].values, vec![1.0, 0.0]);
        assert_eq!(ds.samples()[1].values, vec![0.0, 1.0]);
        assert_eq!(ds.samples()[2].values, vec![-1.0, 0.0]);
        assert!(ds.is_normalized());
    }

    #[test]
    fn column_order_is_taken_from_header() {
        let ds = parse("y,c,x\n1,b,9\n").unwrap();
        assert_eq!(ds.samples()[0].values, vec![2.0, 1.0]);
    }

    #[test]
    fn unknown_category_maps_to_unk() {
        let ds = parse("x,c,y\n7,zzz,1\n").unwrap();
        assert_eq!(ds.samples()[0].values[1], 2.0);
    }

    #[test]
    fn missing_value_and_bad_label_are_errors() {
        assert!(matches!(
            parse("x,c,y\n,a,1\n"),
            Err(Error::MissingValue { row: 0, .. })
        ));
        assert!(parse("x,c,y\n1,a,2\n").is_err());
        match parse("x,y\n1,1\n") {
            Err(Error::Validation(p)) => assert!(p[0].contains("`c`")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn normalization_runs_once() {
        let mut ds = parse("x,c,y\n7,a,1\n").unwrap();
        assert!(ds.normalize().is_err());
        let mut raw = Dataset::new(
            schema(),
            vec![Sample {
                values: vec![7.0, 0.0],
                label: 1.0,
            }],
            false,
        )
        .unwrap();
        raw.normalize().unwrap();
        assert_eq!(raw.samples()[0].values[0], 1.0);
        assert!(raw.normalize().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = parse("x,c,y\n7.25,a,1\n-3.5,b,0\n0.1,a,0\n").unwrap();
        let p = dir.path().join("d.csv");
        let sp = dir.path().join("s.json");
        ds.write_csv(&p).unwrap();
        ds.schema().save(&sp).unwrap();
        let back = load_csv(&p, &sp).unwrap();
        assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn split_partitions_rows() {
        let s = Split::random(100, 0.2, 7);
        assert_eq!(s.test.len(), 20);
        let mut all: Vec<_> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, Split::random(100, 0.2, 7));
    }
}
