//! Survey and image-manifest loaders, and the seeded train/validation/test split.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, AttributeTuple};

pub const FOOD_COLUMN: &str = "food";
pub const PATH_COLUMN: &str = "path";

/// The closed set of recommendable foods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FoodLabel {
    Fruit,
    Fish,
    Meat,
    Pizza,
}

impl FoodLabel {
    pub const ALL: [FoodLabel; 4] = [FoodLabel::Fruit, FoodLabel::Fish, FoodLabel::Meat, FoodLabel::Pizza];

    pub fn as_str(self) -> &'static str {
        match self {
            FoodLabel::Fruit => "Fruit",
            FoodLabel::Fish => "Fish",
            FoodLabel::Meat => "Meat",
            FoodLabel::Pizza => "Pizza",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|f| f.as_str().to_string()).collect()
    }
}

impl fmt::Display for FoodLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FoodLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FoodLabel::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnknownFoodLabel(s.to_string()))
    }
}

/// One surveyed combination and the food chosen for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurveyRecord {
    pub tuple: AttributeTuple,
    pub food: FoodLabel,
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Reads the header of a survey file and returns the attribute columns in file order.
pub fn survey_columns(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?;
    Ok(header
        .iter()
        .filter(|h| *h != FOOD_COLUMN)
        .map(str::to_string)
        .collect())
}

pub fn load_survey(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Vec<SurveyRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_survey(file, schema)
}

/// Parses survey CSV: `<schema attributes in order>,food`.
///
/// A combination that appears twice with different foods is rejected;
/// exact repeats are kept as separate records.
pub fn read_survey(reader: impl Read, schema: &AttributeSchema) -> Result<Vec<SurveyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = schema.names().chain(std::iter::once(FOOD_COLUMN)).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}", expected.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut first_seen: HashMap<AttributeTuple, (usize, FoodLabel)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let n = schema.len();
        let tuple = AttributeTuple::new(rec.iter().take(n));
        schema.validate(&tuple).map_err(|e| e.at_line(line))?;
        let food: FoodLabel = rec[n].parse().map_err(|e: Error| e.at_line(line))?;
        match first_seen.get(&tuple) {
            Some(&(first_line, prev)) if prev != food => {
                return Err(Error::DuplicateTuple {
                    line,
                    first_line,
                    first: prev.to_string(),
                    second: food.to_string(),
                })
            }
            Some(_) => {}
            None => {
                first_seen.insert(tuple.clone(), (line, food));
            }
        }
        records.push(SurveyRecord { tuple, food });
    }
    Ok(records)
}

pub fn write_survey(writer: impl Write, schema: &AttributeSchema, records: &[SurveyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.names().chain(std::iter::once(FOOD_COLUMN)))?;
    for r in records {
        w.write_record(r.tuple.values().iter().map(String::as_str).chain(std::iter::once(r.food.as_str())))?;
    }
    w.flush().map_err(|e| Error::io("<survey output>", e))?;
    Ok(())
}

/// An image on disk with whatever ground-truth attribute labels are known for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageManifestEntry {
    pub path: PathBuf,
    pub labels: BTreeMap<String, String>,
}

impl ImageManifestEntry {
    pub fn label(&self, attribute: &str) -> Option<&str> {
        self.labels.get(attribute).map(String::as_str)
    }
}

pub fn load_manifest(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Vec<ImageManifestEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(file, schema)
}

/// Like [`load_manifest`], but columns naming attributes outside `schema`
/// are dropped instead of rejected. Used when one manifest serves pipelines
/// trained on different attribute subsets.
pub fn load_manifest_subset(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Vec<ImageManifestEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file, schema, true)
}

/// Parses `path,<attribute>...` CSV. Empty cells mean "no label". Image
/// paths are kept verbatim; callers resolve them.
pub fn read_manifest(reader: impl Read, schema: &AttributeSchema) -> Result<Vec<ImageManifestEntry>> {
    parse_manifest(reader, schema, false)
}

fn parse_manifest(reader: impl Read, schema: &AttributeSchema, skip_unknown: bool) -> Result<Vec<ImageManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some(PATH_COLUMN) {
        return Err(Error::Parse {
            line: 1,
            message: "first column must be \"path\"".into(),
        });
    }
    let mut columns = Vec::new();
    for name in header.iter().skip(1) {
        match schema.attribute(name) {
            Some(attr) => columns.push(Some(attr)),
            None if skip_unknown => columns.push(None),
            None => return Err(Error::UnknownAttribute(name.to_string()).at_line(1)),
        }
    }
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = line_of(&rec);
        let mut labels = BTreeMap::new();
        for (attr, value) in columns.iter().zip(rec.iter().skip(1)) {
            let Some(attr) = attr else { continue };
            if value.is_empty() {
                continue;
            }
            if attr.index_of(value).is_none() {
                return Err(Error::UnknownValue {
                    attribute: attr.name.clone(),
                    value: value.to_string(),
                }
                .at_line(line));
            }
            labels.insert(attr.name.clone(), value.to_string());
        }
        entries.push(ImageManifestEntry {
            path: PathBuf::from(&rec[0]),
            labels,
        });
    }
    Ok(entries)
}

/// Writes `path,<every schema attribute>`; missing labels become empty cells.
pub fn write_manifest(writer: impl Write, schema: &AttributeSchema, entries: &[ImageManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once(PATH_COLUMN).chain(schema.names()))?;
    for e in entries {
        let path = e.path.to_string_lossy();
        let cells = schema.names().map(|n| e.label(n).unwrap_or(""));
        w.write_record(std::iter::once(path.as_ref()).chain(cells))?;
    }
    w.flush().map_err(|e| Error::io("<manifest output>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

/// One partition of a split. The test partition is the held-out evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet<T> {
    pub role: SplitRole,
    pub records: Vec<T>,
}

impl<T> LabeledSet<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: LabeledSet<T>,
    pub val: LabeledSet<T>,
    pub test: LabeledSet<T>,
}

impl<T> Split<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn part(&self, role: SplitRole) -> &LabeledSet<T> {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Validation => &self.val,
            SplitRole::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|x| x.is_nan() || *x <= 0.0) {
            return Err(Error::InvalidSplit("fractions must be positive".into()));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }

    /// (train, validation, test) sizes for `n` records: validation and test
    /// are floored, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs products like 0.1 * 70 landing just under 7
        let floor = |frac: f64| ((n as f64) * frac + 1e-9).floor() as usize;
        let val = floor(self.val_fraction);
        let test = floor(self.test_fraction);
        (n - val - test, val, test)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(0)
    }
}

/// Seeded permutation of `0..n` cut into train/validation/test index lists.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let (n_train, n_val, _) = spec.sizes(n);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

fn gather<T: Clone>(records: &[T], idx: &[usize], role: SplitRole) -> LabeledSet<T> {
    LabeledSet {
        role,
        records: idx.iter().map(|&i| records[i].clone()).collect(),
    }
}

pub fn split<T: Clone>(records: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    let [train, val, test] = split_indices(records.len(), spec)?;
    Ok(Split {
        train: gather(records, &train, SplitRole::Train),
        val: gather(records, &val, SplitRole::Validation),
        test: gather(records, &test, SplitRole::Test),
    })
}

/// Per-class variant of [`split`]: each class (by `key`) is shuffled and cut
/// with the same rounding rule, so part sizes are summed per class.
pub fn split_stratified<T: Clone, K: Ord>(
    records: &[T],
    spec: &SplitSpec,
    key: impl Fn(&T) -> K,
) -> Result<Split<T>> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(key(r)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let (n_train, n_val, _) = spec.sizes(idx.len());
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }
    Ok(Split {
        train: gather(records, &train, SplitRole::Train),
        val: gather(records, &val, SplitRole::Validation),
        test: gather(records, &test, SplitRole::Test),
    })
}
