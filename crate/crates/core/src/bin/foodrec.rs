use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use foodrec::dataset::{self, split, SplitRole, SplitSpec};
use foodrec::ensemble::SelfPaceSchedule;
use foodrec::image::{self, ColorPalette, PpmFormat};
use foodrec::pipeline::{self, ProviderInput, ProviderKind, SceneModel, SceneTraining};
use foodrec::schema::{self, AttributeSchema, AttributeTuple};
use foodrec::{synthetic, Error, ErrorClass, RecommendationPipeline, Result, TreeConfig};

#[derive(Parser)]
#[command(name = "foodrec", version, about = "Attribute-fusion food recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shuffle a CSV file's rows and write train.csv, val.csv and test.csv (80/10/10).
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print every attribute combination, one per line.
    Enumerate {
        #[arg(long)]
        schema: PathBuf,
        /// CSV of allowed combinations; only those are printed.
        #[arg(long)]
        viable: Option<PathBuf>,
    },
    /// Print the one-hot fusion vector of a comma-separated tuple.
    Encode {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        tuple: String,
    },
    /// Print the palette label of an image's dominant color.
    ExtractColor {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        palette: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Train a histogram-based scene classifier on manifest images.
    TrainImvb7 {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        iterations: usize,
        #[arg(long)]
        bins: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Attribute to learn.
        #[arg(long, default_value = schema::SCENE)]
        attribute: String,
        /// Histogram bins per channel.
        #[arg(long, default_value_t = pipeline::DEFAULT_HIST_BINS)]
        hist_bins: usize,
    },
    /// Fit the recommender tree on a survey and save a pipeline.
    TrainTree {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        include_age: bool,
        #[arg(long)]
        out: PathBuf,
        /// Derive dominant_color from the image with this palette.
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        color_k: usize,
        #[arg(long, default_value_t = 0)]
        color_seed: u64,
        /// Derive the model's attribute from the image with this scene model.
        #[arg(long)]
        scene_model: Option<PathBuf>,
    },
    /// Recommend a food for one image.
    Recommend {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score a pipeline on one part of a seeded survey split; prints JSON.
    Evaluate {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        survey: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        split: Part,
        #[arg(long)]
        seed: u64,
    },
    /// Write a rule-labelled survey over the synthetic viable combinations.
    SynthSurvey {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write synthetic scene images plus manifest.csv into a directory.
    SynthScenes {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Train,
    Val,
    Test,
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Internal => 3,
            })
        }
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Split { input, seed, out_dir } => split_csv(&input, seed, &out_dir),
        Command::Enumerate { schema, viable } => {
            let schema = AttributeSchema::load(schema)?;
            let viable = viable.map(|p| schema::load_viable(p, &schema)).transpose()?;
            for t in schema::enumerate_combinations(&schema, viable.as_deref())? {
                println!("{t}");
            }
            Ok(())
        }
        Command::Encode { schema, tuple } => {
            let schema = AttributeSchema::load(schema)?;
            let tuple = AttributeTuple::new(tuple.split(',').map(str::trim));
            println!("{}", schema::encode(&schema, &tuple)?);
            Ok(())
        }
        Command::ExtractColor {
            image,
            palette,
            k,
            seed,
        } => {
            let img = image::load_ppm(image)?;
            let palette = ColorPalette::load(palette)?;
            println!("{}", image::dominant_color(&img, &palette, k, seed)?);
            Ok(())
        }
        Command::TrainImvb7 {
            manifest,
            schema,
            iterations,
            bins,
            seed,
            out,
            attribute,
            hist_bins,
        } => {
            let schema = AttributeSchema::load(schema)?;
            if schema.attribute(&attribute).is_none() {
                return Err(Error::UnknownAttribute(attribute));
            }
            let entries = dataset::load_manifest(&manifest, &schema)?;
            let settings = SceneTraining {
                attribute,
                hist_bins,
                schedule: SelfPaceSchedule::with_iterations(iterations)?,
                bins,
                tree_config: TreeConfig::default(),
                seed,
            };
            let base = manifest.parent().unwrap_or(Path::new(""));
            let model = pipeline::train_scene_model(&entries, base, &settings)?;
            write_file(&out, model.export_text())
        }
        Command::TrainTree {
            survey,
            schema,
            max_depth,
            include_age,
            out,
            palette,
            color_k,
            color_seed,
            scene_model,
        } => {
            // the survey may cover a subset of the schema file's attributes
            let schema = AttributeSchema::load(schema)?.project(&dataset::survey_columns(&survey)?)?;
            let records = dataset::load_survey(survey, &schema)?;
            let config = TreeConfig {
                max_depth,
                ..TreeConfig::default()
            };
            let mut p = pipeline::train_pipeline(&records, &schema, &config, include_age)?;
            if let Some(path) = palette {
                let kind = ProviderKind::DominantColor {
                    palette: ColorPalette::load(path)?,
                    k: color_k,
                    seed: color_seed,
                };
                p.set_provider(schema::DOMINANT_COLOR, kind)?;
            }
            if let Some(path) = scene_model {
                let model = SceneModel::load(path)?;
                let attribute = model.attribute.clone();
                p.set_provider(&attribute, ProviderKind::ImvbScene(model))?;
            }
            p.save(out)
        }
        Command::Recommend {
            pipeline,
            image,
            manifest,
        } => {
            let p = RecommendationPipeline::load(pipeline)?;
            let entries = dataset::load_manifest_subset(manifest, p.schema())?;
            let labels = manifest_row(&entries, &image)
                .map(|e| e.labels.clone())
                .unwrap_or_default();
            let input = ProviderInput::new(Some(image), labels);
            println!("{}", p.recommend(&input)?);
            Ok(())
        }
        Command::Evaluate {
            pipeline,
            survey,
            split: part,
            seed,
        } => {
            let p = RecommendationPipeline::load(pipeline)?;
            let records = dataset::load_survey(survey, p.schema())?;
            let role = match part {
                Part::Train => Some(SplitRole::Train),
                Part::Val => Some(SplitRole::Validation),
                Part::Test => Some(SplitRole::Test),
                Part::All => None,
            };
            let report = match role {
                Some(role) => {
                    let parts = split(&records, &SplitSpec::new(seed))?;
                    p.evaluate_survey(&parts.part(role).records, p.schema())?
                }
                None => p.evaluate_survey(&records, p.schema())?,
            };
            println!("{}", report.to_json());
            Ok(())
        }
        Command::SynthSurvey { out, noise, seed } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(Error::InvalidParameter(format!("noise {noise} is outside [0, 1]")));
            }
            let schema = AttributeSchema::default_schema(false);
            let records = synthetic::survey(&synthetic::viable_combinations(), noise, seed);
            dataset::write_survey(create_file(&out)?, &schema, &records)
        }
        Command::SynthScenes {
            out_dir,
            per_class,
            size,
            seed,
        } => {
            if size == 0 {
                return Err(Error::InvalidParameter("size must be at least 1".into()));
            }
            create_dir(&out_dir)?;
            let schema = AttributeSchema::default_schema(true);
            let items = synthetic::scene_dataset(&schema, per_class, size, seed)?;
            let mut entries = Vec::with_capacity(items.len());
            for (name, img, entry) in items {
                write_file(&out_dir.join(name), image::write_ppm(&img, PpmFormat::P6))?;
                entries.push(entry);
            }
            write_file(&out_dir.join("schema.json"), schema.to_json() + "\n")?;
            dataset::write_manifest(create_file(&out_dir.join("manifest.csv"))?, &schema, &entries)
        }
    }
}

/// The manifest row describing `image`: exact path, else same file name,
/// else the only row of a one-row manifest.
fn manifest_row<'a>(
    entries: &'a [dataset::ImageManifestEntry],
    image: &Path,
) -> Option<&'a dataset::ImageManifestEntry> {
    entries
        .iter()
        .find(|e| e.path == image)
        .or_else(|| {
            let name = image.file_name()?;
            entries.iter().find(|e| e.path.file_name() == Some(name))
        })
        .or(match entries {
            [only] => Some(only),
            _ => None,
        })
}

fn split_csv(input: &Path, seed: u64, out_dir: &Path) -> Result<()> {
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?.clone();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let parts = split(&rows, &SplitSpec::new(seed))?;
    create_dir(out_dir)?;
    for (name, set) in [("train.csv", &parts.train), ("val.csv", &parts.val), ("test.csv", &parts.test)] {
        let path = out_dir.join(name);
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        w.write_record(&header)?;
        for r in &set.records {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
