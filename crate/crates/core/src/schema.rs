//! Attribute catalog and the one-hot fusion vector.
//!
//! A schema is an ordered list of categorical attributes. Its order, together
//! with the order of each attribute's values, fixes the bit layout of the
//! fusion vector: attribute `a` owns the contiguous block starting at
//! `offset(a)`, one bit per value, and a tuple sets exactly one bit per block.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENE: &str = "scene";
pub const WEATHER: &str = "weather";
pub const PERIOD: &str = "period";
pub const DOMINANT_COLOR: &str = "dominant_color";
pub const AGE: &str = "age";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl Attribute {
    pub fn new<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Attribute {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Ordered attribute catalog. Serialized as a JSON array of
/// `{"name": ..., "values": [...]}` objects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
    offsets: Vec<usize>,
}

impl TryFrom<Vec<Attribute>> for AttributeSchema {
    type Error = Error;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self> {
        AttributeSchema::new(attributes)
    }
}

impl From<AttributeSchema> for Vec<Attribute> {
    fn from(schema: AttributeSchema) -> Self {
        schema.attributes
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for attr in &attributes {
            if attr.name.is_empty() {
                return Err(Error::InvalidSchema("attribute with empty name".into()));
            }
            if !names.insert(attr.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute {:?}", attr.name)));
            }
            if attr.cardinality() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "attribute {:?} needs at least 2 values",
                    attr.name
                )));
            }
            let mut seen = BTreeSet::new();
            for v in &attr.values {
                if v.is_empty() || v.contains(|c: char| c == ',' || c.is_whitespace()) {
                    return Err(Error::InvalidSchema(format!(
                        "value {v:?} of {:?} must be a non-empty identifier",
                        attr.name
                    )));
                }
                if !seen.insert(v.as_str()) {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate value {v:?} in attribute {:?}",
                        attr.name
                    )));
                }
            }
        }
        let offsets = attributes
            .iter()
            .scan(0usize, |acc, a| {
                let off = *acc;
                *acc += a.cardinality();
                Some(off)
            })
            .collect();
        Ok(AttributeSchema { attributes, offsets })
    }

    /// Schema with no attributes; encodes every (empty) tuple to the empty vector.
    pub fn empty() -> Self {
        AttributeSchema {
            attributes: Vec::new(),
            offsets: Vec::new(),
        }
    }

    /// The built-in catalog: scene (5), weather (4), period (3), dominant
    /// color (2) and, when `include_age` is set, age (3). The four environment
    /// attributes span 120 combinations.
    pub fn default_schema(include_age: bool) -> Self {
        let mut attrs = vec![
            Attribute::new(SCENE, ["beach", "park", "restaurant", "street", "countryside"]),
            Attribute::new(WEATHER, ["sunny", "rainy", "cloudy", "snowy"]),
            Attribute::new(PERIOD, ["morning", "afternoon", "evening"]),
            Attribute::new(DOMINANT_COLOR, ["warm", "cool"]),
        ];
        if include_age {
            attrs.push(Attribute::new(AGE, ["child", "adult", "senior"]));
        }
        AttributeSchema::new(attrs).expect("built-in schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.attributes).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    /// Bit offset of attribute `index`'s block.
    pub fn offset(&self, index: usize) -> usize {
        self.offsets[index]
    }

    /// Length of the fusion vector: the sum of all cardinalities.
    pub fn encoded_len(&self) -> usize {
        self.attributes.iter().map(Attribute::cardinality).sum()
    }

    /// Number of distinct tuples (product of cardinalities).
    pub fn combination_count(&self) -> usize {
        self.attributes.iter().map(Attribute::cardinality).product()
    }

    /// Sub-schema keeping the named attributes, in this schema's order.
    pub fn project<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        for n in names {
            if self.position(n.as_ref()).is_none() {
                return Err(Error::UnknownAttribute(n.as_ref().to_string()));
            }
        }
        let keep: BTreeSet<&str> = names.iter().map(AsRef::as_ref).collect();
        let attrs = self
            .attributes
            .iter()
            .filter(|a| keep.contains(a.name.as_str()))
            .cloned()
            .collect();
        AttributeSchema::new(attrs)
    }

    /// Sub-schema without the named attribute (no-op if absent).
    pub fn without(&self, name: &str) -> Self {
        let attrs = self
            .attributes
            .iter()
            .filter(|a| a.name != name)
            .cloned()
            .collect();
        AttributeSchema::new(attrs).expect("subset of a valid schema is valid")
    }

    fn value_indices(&self, tuple: &AttributeTuple) -> Result<Vec<usize>> {
        if tuple.len() != self.len() {
            return Err(Error::ArityMismatch {
                expected: self.len(),
                got: tuple.len(),
            });
        }
        self.attributes
            .iter()
            .zip(tuple.values())
            .map(|(attr, v)| {
                attr.index_of(v).ok_or_else(|| Error::UnknownValue {
                    attribute: attr.name.clone(),
                    value: v.clone(),
                })
            })
            .collect()
    }

    /// Checks that `tuple` has one in-vocabulary value per attribute.
    pub fn validate(&self, tuple: &AttributeTuple) -> Result<()> {
        self.value_indices(tuple).map(|_| ())
    }

    /// One-hot block for a single attribute value.
    pub fn one_hot_block(&self, attribute: usize, value: &str) -> Result<OneHotBlock> {
        let attr = &self.attributes[attribute];
        let idx = attr.index_of(value).ok_or_else(|| Error::UnknownValue {
            attribute: attr.name.clone(),
            value: value.to_string(),
        })?;
        let mut bits = vec![0u8; attr.cardinality()];
        bits[idx] = 1;
        Ok(OneHotBlock {
            attribute: attr.name.clone(),
            bits,
        })
    }

    /// Mixed-radix rank of a tuple in enumeration order.
    fn rank(&self, indices: &[usize]) -> usize {
        self.attributes
            .iter()
            .zip(indices)
            .fold(0, |acc, (a, &i)| acc * a.cardinality() + i)
    }

    fn unrank(&self, mut rank: usize) -> AttributeTuple {
        let mut values = vec![String::new(); self.len()];
        for (slot, attr) in values.iter_mut().zip(&self.attributes).rev() {
            let card = attr.cardinality();
            *slot = attr.values[rank % card].clone();
            rank /= card;
        }
        AttributeTuple(values)
    }
}

/// One value per schema attribute, in schema order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeTuple(Vec<String>);

impl AttributeTuple {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        AttributeTuple(values.into_iter().map(Into::into).collect())
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.0.get(index).map(String::as_str)
    }

    pub fn into_values(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for AttributeTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(","))
    }
}

/// Concatenated one-hot blocks. Every entry is 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BinaryFeatureVector {
    bits: Vec<u8>,
}

impl BinaryFeatureVector {
    /// Wraps raw bits; rejects anything other than 0/1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::MalformedVector(format!("bit value {b}")));
        }
        Ok(BinaryFeatureVector { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn set_positions(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    /// Numeric view for the classifier.
    pub fn to_features(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }
}

impl fmt::Display for BinaryFeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The one-hot output of a single attribute provider.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHotBlock {
    pub attribute: String,
    pub bits: Vec<u8>,
}

pub fn encode(schema: &AttributeSchema, tuple: &AttributeTuple) -> Result<BinaryFeatureVector> {
    let indices = schema.value_indices(tuple)?;
    let mut bits = vec![0u8; schema.encoded_len()];
    for (a, idx) in indices.into_iter().enumerate() {
        bits[schema.offset(a) + idx] = 1;
    }
    Ok(BinaryFeatureVector { bits })
}

pub fn decode(schema: &AttributeSchema, vector: &BinaryFeatureVector) -> Result<AttributeTuple> {
    if vector.len() != schema.encoded_len() {
        return Err(Error::MalformedVector(format!(
            "length {} but schema needs {}",
            vector.len(),
            schema.encoded_len()
        )));
    }
    let mut values = Vec::with_capacity(schema.len());
    for (a, attr) in schema.attributes().iter().enumerate() {
        let block = &vector.bits[schema.offset(a)..schema.offset(a) + attr.cardinality()];
        let mut set = block.iter().enumerate().filter(|(_, &b)| b != 0);
        match (set.next(), set.next()) {
            (Some((i, _)), None) => values.push(attr.values[i].clone()),
            (None, _) => {
                return Err(Error::MalformedVector(format!("no bit set for {:?}", attr.name)))
            }
            (Some(_), Some(_)) => {
                return Err(Error::MalformedVector(format!(
                    "several bits set for {:?}",
                    attr.name
                )))
            }
        }
    }
    Ok(AttributeTuple(values))
}

/// Appends per-attribute blocks onto an empty vector, then checks that the
/// result has the schema's full length before handing it to a classifier.
pub fn fuse_incremental(schema: &AttributeSchema, blocks: &[OneHotBlock]) -> Result<BinaryFeatureVector> {
    let mut bits: Vec<u8> = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let attr = schema.attributes().get(i).ok_or_else(|| Error::BlockOrderMismatch {
            index: i,
            expected: "<end of schema>".into(),
            got: block.attribute.clone(),
        })?;
        if attr.name != block.attribute {
            return Err(Error::BlockOrderMismatch {
                index: i,
                expected: attr.name.clone(),
                got: block.attribute.clone(),
            });
        }
        if block.bits.len() != attr.cardinality() {
            return Err(Error::BlockWidthMismatch {
                attribute: attr.name.clone(),
                expected: attr.cardinality(),
                got: block.bits.len(),
            });
        }
        let ones = block.bits.iter().filter(|&&b| b == 1).count();
        let zeros = block.bits.iter().filter(|&&b| b == 0).count();
        if ones != 1 || ones + zeros != block.bits.len() {
            return Err(Error::MalformedBlock {
                attribute: attr.name.clone(),
            });
        }
        bits.extend_from_slice(&block.bits);
    }
    if blocks.len() != schema.len() {
        return Err(Error::BlockOrderMismatch {
            index: blocks.len(),
            expected: schema.attributes()[blocks.len()].name.clone(),
            got: "<missing>".into(),
        });
    }
    // reshape check
    if bits.len() != schema.encoded_len() {
        return Err(Error::Invariant(format!(
            "fused length {} != {}",
            bits.len(),
            schema.encoded_len()
        )));
    }
    Ok(BinaryFeatureVector { bits })
}

/// All tuples of the schema's Cartesian product, first attribute varying
/// slowest. With `viable`, only those tuples are kept, still in product order.
pub fn enumerate_combinations(
    schema: &AttributeSchema,
    viable: Option<&[AttributeTuple]>,
) -> Result<Vec<AttributeTuple>> {
    match viable {
        None => Ok((0..schema.combination_count()).map(|r| schema.unrank(r)).collect()),
        Some(entries) => {
            let mut ranks = BTreeSet::new();
            for (index, t) in entries.iter().enumerate() {
                let idx = schema
                    .value_indices(t)
                    .map_err(|e| Error::InvalidViableEntry {
                        index,
                        reason: e.to_string(),
                    })?;
                ranks.insert(schema.rank(&idx));
            }
            Ok(ranks.into_iter().map(|r| schema.unrank(r)).collect())
        }
    }
}

/// Reads a viability CSV: a header naming the schema attributes (any column
/// order) and one tuple per row.
pub fn load_viable(path: impl AsRef<Path>, schema: &AttributeSchema) -> Result<Vec<AttributeTuple>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_viable(file, schema)
}

pub fn read_viable(reader: impl std::io::Read, schema: &AttributeSchema) -> Result<Vec<AttributeTuple>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let columns: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    if columns.len() != header.len() || header.len() != schema.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must list the {} schema attributes exactly once",
                schema.len()
            ),
        });
    }
    let order: Vec<usize> = schema
        .names()
        .map(|n| {
            columns.get(n).copied().ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column {n:?}"),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(AttributeTuple::new(order.iter().map(|&c| rec.get(c).unwrap_or(""))));
    }
    Ok(out)
}
