//! End-to-end recommender: per-attribute providers produce one-hot blocks,
//! the blocks are fused in schema order, and a decision tree maps the fused
//! vector to a food.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dataset::{FoodLabel, ImageManifestEntry, SurveyRecord};
use crate::ensemble::{self, MulticlassEnsemble, SelfPaceSchedule};
use crate::error::{Error, Result};
use crate::image::{self, ColorPalette, RasterImage};
use crate::metrics::{self, MetricReport};
use crate::schema::{encode, fuse_incremental, AttributeSchema, AttributeTuple, OneHotBlock, AGE};
use crate::tree::{DecisionTreeModel, TreeConfig};

pub const DEFAULT_HIST_BINS: usize = 4;

/// Histogram features → one-vs-rest self-paced ensemble, for one attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub attribute: String,
    pub hist_bins: usize,
    pub ensemble: MulticlassEnsemble,
}

impl SceneModel {
    pub fn predict(&self, image: &RasterImage) -> Result<String> {
        let features = image::rgb_histogram(image, self.hist_bins)?;
        self.ensemble.predict(&features).map(str::to_string)
    }

    pub fn export_text(&self) -> String {
        format!(
            "scene-model attribute={} hist_bins={}\n{}",
            self.attribute,
            self.hist_bins,
            self.ensemble.export_text()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().copied().unwrap_or("");
        let fields = ensemble::header_fields(header, "scene-model", 0)?;
        let missing = |k: &str| Error::ModelFormat {
            line: 1,
            message: format!("missing {k}="),
        };
        let attribute: String = ensemble::field(&fields, "attribute", 0)?.ok_or_else(|| missing("attribute"))?;
        let hist_bins: usize = ensemble::field(&fields, "hist_bins", 0)?.ok_or_else(|| missing("hist_bins"))?;
        let mut pos = 1;
        let ensemble = ensemble::read_multiclass(&lines, &mut pos)?;
        if let Some(i) = (pos..lines.len()).find(|&i| !lines[i].trim().is_empty()) {
            return Err(Error::ModelFormat {
                line: i + 1,
                message: "trailing content".into(),
            });
        }
        Ok(SceneModel {
            attribute,
            hist_bins,
            ensemble,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Settings for [`train_scene_model`].
#[derive(Clone, Debug)]
pub struct SceneTraining {
    pub attribute: String,
    pub hist_bins: usize,
    pub schedule: SelfPaceSchedule,
    pub bins: usize,
    pub tree_config: TreeConfig,
    pub seed: u64,
}

/// Trains a [`SceneModel`] from manifest images (paths resolved against
/// `base_dir`); entries without a label for the attribute are skipped.
pub fn train_scene_model(
    entries: &[ImageManifestEntry],
    base_dir: &Path,
    settings: &SceneTraining,
) -> Result<SceneModel> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for e in entries {
        let Some(label) = e.label(&settings.attribute) else {
            continue;
        };
        let img = image::load_ppm(base_dir.join(&e.path))?;
        features.push(image::rgb_histogram(&img, settings.hist_bins)?);
        labels.push(label.to_string());
    }
    if features.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let ensemble = ensemble::fit_multiclass(
        &features,
        &labels,
        &settings.schedule,
        settings.bins,
        &settings.tree_config,
        settings.seed,
    )?;
    Ok(SceneModel {
        attribute: settings.attribute.clone(),
        hist_bins: settings.hist_bins,
        ensemble,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProviderKind {
    /// Ground-truth label from the input's manifest row.
    Oracle,
    /// k-means dominant color mapped onto a palette.
    DominantColor {
        palette: ColorPalette,
        k: usize,
        seed: u64,
    },
    /// Self-paced ensemble over color histograms.
    ImvbScene(SceneModel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeProvider {
    pub attribute: String,
    pub kind: ProviderKind,
}

impl AttributeProvider {
    pub fn oracle(attribute: impl Into<String>) -> Self {
        AttributeProvider {
            attribute: attribute.into(),
            kind: ProviderKind::Oracle,
        }
    }

    fn failure(&self, cause: impl ToString) -> Error {
        Error::ProviderFailure {
            attribute: self.attribute.clone(),
            cause: cause.to_string(),
        }
    }

    fn resolve(&self, input: &ProviderInput) -> Result<String> {
        match &self.kind {
            ProviderKind::Oracle => input
                .labels
                .get(&self.attribute)
                .cloned()
                .ok_or_else(|| self.failure("no label for this input")),
            ProviderKind::DominantColor { palette, k, seed } => {
                let img = input.image().map_err(|e| self.failure(e))?;
                image::dominant_color(img, palette, *k, *seed).map_err(|e| self.failure(e))
            }
            ProviderKind::ImvbScene(model) => {
                let img = input.image().map_err(|e| self.failure(e))?;
                model.predict(img).map_err(|e| self.failure(e))
            }
        }
    }
}

/// What the providers see for one input: an optional image and known labels.
/// The image is decoded on first use.
#[derive(Debug, Default)]
pub struct ProviderInput {
    pub image_path: Option<PathBuf>,
    pub labels: BTreeMap<String, String>,
    image: OnceLock<RasterImage>,
}

impl ProviderInput {
    pub fn new(image_path: Option<PathBuf>, labels: BTreeMap<String, String>) -> Self {
        ProviderInput {
            image_path,
            labels,
            image: OnceLock::new(),
        }
    }

    pub fn from_labels(labels: BTreeMap<String, String>) -> Self {
        Self::new(None, labels)
    }

    /// Labels taken from a tuple of `schema`.
    pub fn from_tuple(schema: &AttributeSchema, tuple: &AttributeTuple) -> Self {
        let labels = schema
            .names()
            .zip(tuple.values())
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect();
        Self::from_labels(labels)
    }

    /// Input backed by an in-memory image.
    pub fn with_image(image: RasterImage, labels: BTreeMap<String, String>) -> Self {
        let input = Self::from_labels(labels);
        let _ = input.image.set(image);
        input
    }

    pub fn image(&self) -> Result<&RasterImage> {
        if let Some(img) = self.image.get() {
            return Ok(img);
        }
        let path = self
            .image_path
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("input has no image".into()))?;
        let img = image::load_ppm(path)?;
        Ok(self.image.get_or_init(|| img))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationPipeline {
    /// Schema as supplied at training time (may include age).
    schema: AttributeSchema,
    include_age: bool,
    /// One provider per attribute of the active schema, in order.
    providers: Vec<AttributeProvider>,
    recommender: DecisionTreeModel,
}

fn active_schema(schema: &AttributeSchema, include_age: bool) -> Result<AttributeSchema> {
    if include_age {
        if schema.position(AGE).is_none() {
            return Err(Error::UnknownAttribute(AGE.into()));
        }
        Ok(schema.clone())
    } else {
        Ok(schema.without(AGE))
    }
}

/// Re-expresses a tuple of `from` as a tuple of `to` (a sub-schema).
fn project_tuple(from: &AttributeSchema, to: &AttributeSchema, tuple: &AttributeTuple) -> Result<AttributeTuple> {
    if from == to {
        return Ok(tuple.clone());
    }
    to.names()
        .map(|n| {
            from.position(n)
                .and_then(|i| tuple.get(i))
                .map(str::to_string)
                .ok_or_else(|| Error::UnknownAttribute(n.to_string()))
        })
        .collect::<Result<Vec<_>>>()
        .map(AttributeTuple::new)
}

/// Encodes every survey tuple and fits the recommender tree on the foods.
/// `schema` is the schema the records were loaded with; age is dropped
/// unless `include_age` is set.
pub fn train_pipeline(
    survey: &[SurveyRecord],
    schema: &AttributeSchema,
    tree_config: &TreeConfig,
    include_age: bool,
) -> Result<RecommendationPipeline> {
    let active = active_schema(schema, include_age)?;
    let mut x = Vec::with_capacity(survey.len());
    let mut y = Vec::with_capacity(survey.len());
    for r in survey {
        schema.validate(&r.tuple)?;
        let t = project_tuple(schema, &active, &r.tuple)?;
        x.push(encode(&active, &t)?.to_features());
        y.push(r.food.as_str());
    }
    let recommender = DecisionTreeModel::fit(&x, &y, tree_config)?;
    let providers = active.names().map(AttributeProvider::oracle).collect();
    Ok(RecommendationPipeline {
        schema: schema.clone(),
        include_age,
        providers,
        recommender,
    })
}

impl RecommendationPipeline {
    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    /// The attributes that feed the fusion vector.
    pub fn active_schema(&self) -> AttributeSchema {
        active_schema(&self.schema, self.include_age).expect("checked at construction")
    }

    pub fn include_age(&self) -> bool {
        self.include_age
    }

    pub fn providers(&self) -> &[AttributeProvider] {
        &self.providers
    }

    pub fn recommender(&self) -> &DecisionTreeModel {
        &self.recommender
    }

    /// Replaces the provider for `attribute`.
    pub fn set_provider(&mut self, attribute: &str, kind: ProviderKind) -> Result<()> {
        let active = self.active_schema();
        let attr = active
            .attribute(attribute)
            .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))?;
        match &kind {
            ProviderKind::DominantColor { palette, k, .. } => {
                palette.check_covers(attr)?;
                if *k == 0 {
                    return Err(Error::InvalidParameter("k must be at least 1".into()));
                }
            }
            ProviderKind::ImvbScene(model) => {
                let vocab: Vec<&String> = attr.values.iter().collect();
                if let Some(c) = model.ensemble.classes().iter().find(|c| !vocab.contains(c)) {
                    return Err(Error::UnknownValue {
                        attribute: attribute.to_string(),
                        value: c.clone(),
                    });
                }
            }
            ProviderKind::Oracle => {}
        }
        let slot = self
            .providers
            .iter_mut()
            .find(|p| p.attribute == attribute)
            .ok_or_else(|| Error::Invariant(format!("no provider slot for {attribute:?}")))?;
        slot.kind = kind;
        Ok(())
    }

    /// Fused vector for one input, assembled block by block in schema order.
    pub fn fuse(&self, input: &ProviderInput) -> Result<crate::schema::BinaryFeatureVector> {
        let active = self.active_schema();
        let mut blocks: Vec<OneHotBlock> = Vec::with_capacity(self.providers.len());
        for (i, provider) in self.providers.iter().enumerate() {
            let value = provider.resolve(input)?;
            let block = active.one_hot_block(i, &value).map_err(|e| provider.failure(e))?;
            blocks.push(block);
        }
        fuse_incremental(&active, &blocks)
    }

    pub fn recommend(&self, input: &ProviderInput) -> Result<FoodLabel> {
        let v = self.fuse(input)?;
        self.recommender.predict(&v.to_features())?.parse()
    }

    /// Recommends for each input and scores against the expected foods.
    pub fn evaluate(&self, inputs: &[(ProviderInput, FoodLabel)]) -> Result<MetricReport> {
        if inputs.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        let predicted = inputs
            .iter()
            .map(|(input, _)| self.recommend(input).map(FoodLabel::as_str))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<&str> = inputs.iter().map(|(_, f)| f.as_str()).collect();
        metrics::evaluate(&truth, &predicted, &FoodLabel::names(), 1.0)
    }

    /// Copy of this pipeline with every provider replaced by an oracle.
    pub fn oracle_view(&self) -> Self {
        let mut view = self.clone();
        for p in &mut view.providers {
            p.kind = ProviderKind::Oracle;
        }
        view
    }

    /// Scores the recommender on survey records. Survey rows carry no
    /// images, so every attribute is taken from the tuple itself.
    pub fn evaluate_survey(&self, records: &[SurveyRecord], schema: &AttributeSchema) -> Result<MetricReport> {
        let inputs: Vec<(ProviderInput, FoodLabel)> = records
            .iter()
            .map(|r| (ProviderInput::from_tuple(schema, &r.tuple), r.food))
            .collect();
        self.oracle_view().evaluate(&inputs)
    }

    /// Writes `path` (JSON) plus the model text files it references, which
    /// are placed next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or(Path::new(""));
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pipeline".into());
        let write = |name: &str, text: &str| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        let tree_file = format!("{stem}.tree.txt");
        write(&tree_file, &self.recommender.export_text())?;
        let mut providers = Vec::new();
        for p in &self.providers {
            let config = match &p.kind {
                ProviderKind::Oracle => ProviderConfig::Oracle {
                    attribute: p.attribute.clone(),
                },
                ProviderKind::DominantColor { palette, k, seed } => ProviderConfig::DominantColor {
                    attribute: p.attribute.clone(),
                    palette: palette.clone(),
                    k: *k,
                    seed: *seed,
                },
                ProviderKind::ImvbScene(model) => {
                    let file = format!("{stem}.{}.imvb7.txt", p.attribute);
                    write(&file, &model.export_text())?;
                    ProviderConfig::ImvbScene {
                        attribute: p.attribute.clone(),
                        model: file,
                    }
                }
            };
            providers.push(config);
        }
        let doc = PipelineFile {
            format: PIPELINE_FORMAT,
            schema: self.schema.clone(),
            include_age: self.include_age,
            recommender: tree_file,
            providers,
        };
        let json = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or(Path::new(""));
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: PipelineFile = serde_json::from_str(&text)?;
        if doc.format != PIPELINE_FORMAT {
            return Err(Error::InvalidParameter(format!("unsupported pipeline format {}", doc.format)));
        }
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let recommender = DecisionTreeModel::from_text(&read(&doc.recommender)?)?;
        let active = active_schema(&doc.schema, doc.include_age)?;
        if recommender.feature_count() != active.encoded_len() {
            return Err(Error::DimensionMismatch {
                expected: active.encoded_len(),
                got: recommender.feature_count(),
            });
        }
        let mut pipeline = RecommendationPipeline {
            providers: active.names().map(AttributeProvider::oracle).collect(),
            schema: doc.schema,
            include_age: doc.include_age,
            recommender,
        };
        if doc.providers.len() != pipeline.providers.len() {
            return Err(Error::InvalidParameter("provider list does not match the schema".into()));
        }
        for (i, cfg) in doc.providers.into_iter().enumerate() {
            let (attribute, kind) = match cfg {
                ProviderConfig::Oracle { attribute } => (attribute, ProviderKind::Oracle),
                ProviderConfig::DominantColor {
                    attribute,
                    palette,
                    k,
                    seed,
                } => (attribute, ProviderKind::DominantColor { palette, k, seed }),
                ProviderConfig::ImvbScene { attribute, model } => {
                    (attribute, ProviderKind::ImvbScene(SceneModel::from_text(&read(&model)?)?))
                }
            };
            if pipeline.providers[i].attribute != attribute {
                return Err(Error::InvalidParameter(format!(
                    "provider {i} is for {attribute:?}, expected {:?}",
                    pipeline.providers[i].attribute
                )));
            }
            pipeline.set_provider(&attribute, kind)?;
        }
        Ok(pipeline)
    }
}

const PIPELINE_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PipelineFile {
    format: u32,
    schema: AttributeSchema,
    include_age: bool,
    recommender: String,
    providers: Vec<ProviderConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ProviderConfig {
    Oracle {
        attribute: String,
    },
    DominantColor {
        attribute: String,
        palette: ColorPalette,
        k: usize,
        seed: u64,
    },
    ImvbScene {
        attribute: String,
        model: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn env() -> AttributeSchema {
        AttributeSchema::default_schema(false)
    }

    fn record(values: [&str; 4], food: FoodLabel) -> SurveyRecord {
        SurveyRecord {
            tuple: AttributeTuple::new(values),
            food,
        }
    }

    #[test]
    fn one_record_is_constant() {
        let p = train_pipeline(
            &[record(["park", "sunny", "morning", "warm"], FoodLabel::Fish)],
            &env(),
            &TreeConfig::default(),
            false,
        )
        .unwrap();
        for t in synthetic::viable_combinations().iter().take(10) {
            assert_eq!(p.recommend(&ProviderInput::from_tuple(&env(), t)).unwrap(), FoodLabel::Fish);
        }
    }

    #[test]
    fn oracle_pipeline_reproduces_training_set() {
        let survey = synthetic::survey(&synthetic::viable_combinations(), 0.3, 8);
        let p = train_pipeline(&survey, &env(), &TreeConfig::default(), false).unwrap();
        for r in &survey {
            assert_eq!(p.recommend(&ProviderInput::from_tuple(&env(), &r.tuple)).unwrap(), r.food);
        }
        let report = p.evaluate_survey(&survey, &env()).unwrap();
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn missing_oracle_label_names_attribute() {
        let p = train_pipeline(
            &[record(["park", "sunny", "morning", "warm"], FoodLabel::Fish)],
            &env(),
            &TreeConfig::default(),
            false,
        )
        .unwrap();
        let mut labels = BTreeMap::new();
        labels.insert("scene".to_string(), "park".to_string());
        match p.recommend(&ProviderInput::from_labels(labels)).unwrap_err() {
            Error::ProviderFailure { attribute, .. } => assert_eq!(attribute, "weather"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn out_of_vocabulary_provider_output_fails() {
        let p = train_pipeline(
            &[record(["park", "sunny", "morning", "warm"], FoodLabel::Fish)],
            &env(),
            &TreeConfig::default(),
            false,
        )
        .unwrap();
        let t = AttributeTuple::new(["park", "foggy", "morning", "warm"]);
        assert!(matches!(
            p.recommend(&ProviderInput::from_tuple(&env(), &t)),
            Err(Error::ProviderFailure { .. })
        ));
    }

    #[test]
    fn empty_evaluation_set() {
        let p = train_pipeline(
            &[record(["park", "sunny", "morning", "warm"], FoodLabel::Fish)],
            &env(),
            &TreeConfig::default(),
            false,
        )
        .unwrap();
        assert!(matches!(p.evaluate(&[]), Err(Error::EmptyEvaluationSet)));
    }

    #[test]
    fn age_participation() {
        let full = AttributeSchema::default_schema(true);
        let recs = vec![
            SurveyRecord {
                tuple: AttributeTuple::new(["park", "sunny", "morning", "warm", "child"]),
                food: FoodLabel::Fruit,
            },
            SurveyRecord {
                tuple: AttributeTuple::new(["park", "sunny", "morning", "warm", "senior"]),
                food: FoodLabel::Fish,
            },
        ];
        // without age the two rows collide; with it they separate
        let with_age = train_pipeline(&recs, &full, &TreeConfig::default(), true).unwrap();
        assert_eq!(with_age.recommender().feature_count(), 17);
        assert_eq!(with_age.evaluate_survey(&recs, &full).unwrap().accuracy, 1.0);
        let without = train_pipeline(&recs, &full, &TreeConfig::default(), false).unwrap();
        assert_eq!(without.recommender().feature_count(), 14);
        assert!(train_pipeline(&recs[..0], &env(), &TreeConfig::default(), true).is_err());
    }

    #[test]
    fn dominant_color_provider() {
        let survey = vec![
            record(["park", "sunny", "morning", "warm"], FoodLabel::Fruit),
            record(["park", "sunny", "morning", "cool"], FoodLabel::Fish),
        ];
        let mut p = train_pipeline(&survey, &env(), &TreeConfig::default(), false).unwrap();
        p.set_provider(
            "dominant_color",
            ProviderKind::DominantColor {
                palette: ColorPalette::warm_cool(),
                k: 2,
                seed: 0,
            },
        )
        .unwrap();
        let labels: BTreeMap<String, String> = [("scene", "park"), ("weather", "sunny"), ("period", "morning")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let blue = ProviderInput::with_image(RasterImage::filled(2, 2, [10, 120, 250]), labels.clone());
        assert_eq!(p.recommend(&blue).unwrap(), FoodLabel::Fish);
        let orange = ProviderInput::with_image(RasterImage::filled(2, 2, [250, 120, 10]), labels.clone());
        assert_eq!(p.recommend(&orange).unwrap(), FoodLabel::Fruit);
        let no_image = ProviderInput::from_labels(labels);
        assert!(matches!(p.recommend(&no_image), Err(Error::ProviderFailure { .. })));

        let bad_palette = ColorPalette::new(vec![crate::image::PaletteEntry {
            label: "warm".into(),
            anchor: [1, 2, 3],
        }])
        .unwrap();
        assert!(p
            .set_provider(
                "dominant_color",
                ProviderKind::DominantColor {
                    palette: bad_palette,
                    k: 2,
                    seed: 0
                }
            )
            .is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let survey = synthetic::survey(&synthetic::viable_combinations(), 0.0, 1);
        let mut p = train_pipeline(&survey, &env(), &TreeConfig::default(), false).unwrap();
        p.set_provider(
            "dominant_color",
            ProviderKind::DominantColor {
                palette: ColorPalette::warm_cool(),
                k: 3,
                seed: 4,
            },
        )
        .unwrap();
        let path = dir.path().join("pipe.json");
        p.save(&path).unwrap();
        assert!(dir.path().join("pipe.tree.txt").exists());
        assert_eq!(RecommendationPipeline::load(&path).unwrap(), p);
    }
}
