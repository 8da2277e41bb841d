//! C interface to `foodrec`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns an
//! [`FrStatus`]; on failure a description is available from
//! [`fr_last_error_message`] on the same thread until the next call.
//! Strings returned by the library are freed with [`fr_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use foodrec::dataset::{load_survey, split, SplitRole, SplitSpec};
use foodrec::image::{dominant_color, parse_ppm};
use foodrec::pipeline::{train_pipeline, ProviderInput};
use foodrec::schema::{encode, AttributeTuple};
use foodrec::{AttributeSchema, ColorPalette, ErrorClass, FoodLabel, MetricReport, RecommendationPipeline, TreeConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad parameter value or malformed argument.
    Usage = 3,
    /// Input data could not be read, parsed or validated.
    Data = 4,
    /// An internal invariant was violated.
    Internal = 5,
    /// The output buffer is too small; the required size was written.
    BufferTooSmall = 6,
    /// The library panicked; the handle arguments should not be reused.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrFood {
    Fruit = 0,
    Fish = 1,
    Meat = 2,
    Pizza = 3,
}

impl From<FoodLabel> for FrFood {
    fn from(f: FoodLabel) -> Self {
        match f {
            FoodLabel::Fruit => FrFood::Fruit,
            FoodLabel::Fish => FrFood::Fish,
            FoodLabel::Meat => FrFood::Meat,
            FoodLabel::Pizza => FrFood::Pizza,
        }
    }
}

/// Which part of the seeded 80/10/10 split to evaluate on.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrSplit {
    Train = 0,
    Validation = 1,
    Test = 2,
    All = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrMetricReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f_score: f64,
    pub beta: f64,
}

impl From<MetricReport> for FrMetricReport {
    fn from(r: MetricReport) -> Self {
        FrMetricReport {
            accuracy: r.accuracy,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            f_score: r.f_score,
            beta: r.beta,
        }
    }
}

/// Opaque attribute schema.
pub struct FrSchema(AttributeSchema);

/// Opaque trained recommendation pipeline.
pub struct FrPipeline(RecommendationPipeline);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Usage(String),
    Lib(foodrec::Error),
    TooSmall(usize),
}

impl From<foodrec::Error> for Failure {
    fn from(e: foodrec::Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return FrStatus::Ok,
        Ok(Err(Failure::Null(name))) => (FrStatus::NullArgument, format!("{name} is null")),
        Ok(Err(Failure::Utf8(name))) => (FrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")),
        Ok(Err(Failure::Usage(m))) => (FrStatus::Usage, m),
        Ok(Err(Failure::TooSmall(need))) => (FrStatus::BufferTooSmall, format!("buffer needs {need} bytes")),
        Ok(Err(Failure::Lib(e))) => {
            let status = match e.class() {
                ErrorClass::Usage => FrStatus::Usage,
                ErrorClass::Data => FrStatus::Data,
                ErrorClass::Internal => FrStatus::Internal,
            };
            (status, e.to_string())
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (FrStatus::Panic, format!("panic: {what}"))
        }
    };
    set_last_error(message);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

/// Parses `name=value` pairs separated by commas or semicolons.
fn parse_labels(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut labels = BTreeMap::new();
    for pair in text.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("label {pair:?} is not name=value")))?;
        labels.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(labels)
}

/// Message for the most recent failed call on this thread, or null.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn fr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Static name of a food ("Fruit", "Fish", "Meat", "Pizza").
#[no_mangle]
pub extern "C" fn fr_food_name(food: FrFood) -> *const c_char {
    let s: &'static [u8] = match food {
        FrFood::Fruit => b"Fruit\0",
        FrFood::Fish => b"Fish\0",
        FrFood::Meat => b"Meat\0",
        FrFood::Pizza => b"Pizza\0",
    };
    s.as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in schema: scene, weather, period, dominant_color and,
/// if `include_age`, age.
///
/// # Safety
/// `out` must be a valid pointer to write a handle to.
#[no_mangle]
pub unsafe extern "C" fn fr_schema_default(include_age: bool, out: *mut *mut FrSchema) -> FrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FrSchema(AttributeSchema::default_schema(include_age))));
        Ok(())
    })
}

/// Loads a schema from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_schema_load(path: *const c_char, out: *mut *mut FrSchema) -> FrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FrSchema(AttributeSchema::load(path)?)));
        Ok(())
    })
}

/// # Safety
/// `schema` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_schema_free(schema: *mut FrSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Length of the encoded vector, or 0 for a null handle.
///
/// # Safety
/// `schema` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fr_schema_encoded_len(schema: *const FrSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.0.encoded_len())
}

/// Encodes a comma-separated tuple into `out_bits` (one byte per bit).
/// `*out_len` receives the vector length; if `capacity` is smaller the
/// call fails with `BufferTooSmall` and nothing else is written.
///
/// # Safety
/// `schema` must be a live handle, `tuple` a NUL-terminated string,
/// `out_bits` writable for `capacity` bytes (may be null when `capacity`
/// is 0), and `out_len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_schema_encode(
    schema: *const FrSchema,
    tuple: *const c_char,
    out_bits: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> FrStatus {
    guard(|| {
        let schema = handle(schema, "schema")?;
        let tuple = str_arg(tuple, "tuple")?;
        let out_len = out_arg(out_len, "out_len")?;
        let v = encode(&schema.0, &AttributeTuple::new(tuple.split(',').map(str::trim)))?;
        *out_len = v.len();
        if capacity < v.len() {
            return Err(Failure::TooSmall(v.len()));
        }
        if out_bits.is_null() {
            return Err(Failure::Null("out_bits"));
        }
        ptr::copy_nonoverlapping(v.bits().as_ptr(), out_bits, v.len());
        Ok(())
    })
}

/// Trains a pipeline with oracle providers from a survey CSV.
/// `max_depth < 0` means unbounded.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_train(
    survey_path: *const c_char,
    schema_path: *const c_char,
    max_depth: i32,
    include_age: bool,
    out: *mut *mut FrPipeline,
) -> FrStatus {
    guard(|| {
        let survey_path = str_arg(survey_path, "survey_path")?;
        let schema_path = str_arg(schema_path, "schema_path")?;
        let out = out_arg(out, "out")?;
        let schema = AttributeSchema::load(schema_path)?;
        let records = load_survey(survey_path, &schema)?;
        let config = TreeConfig {
            max_depth: usize::try_from(max_depth).ok(),
            ..TreeConfig::default()
        };
        let p = train_pipeline(&records, &schema, &config, include_age)?;
        *out = Box::into_raw(Box::new(FrPipeline(p)));
        Ok(())
    })
}

/// Loads a pipeline saved by the CLI or [`fr_pipeline_save`].
///
/// # Safety
/// `path` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_load(path: *const c_char, out: *mut *mut FrPipeline) -> FrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(FrPipeline(RecommendationPipeline::load(path)?)));
        Ok(())
    })
}

/// Writes the pipeline JSON to `path` and its model files beside it.
///
/// # Safety
/// `pipeline` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_save(pipeline: *const FrPipeline, path: *const c_char) -> FrStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let path = str_arg(path, "path")?;
        p.0.save(path)?;
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_free(pipeline: *mut FrPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Recommends a food. `labels` holds `name=value` pairs separated by
/// commas or semicolons for oracle-provided attributes; `image_path` may be
/// null when no provider needs pixels.
///
/// # Safety
/// `pipeline` must be a live handle, `labels` NUL-terminated, `image_path`
/// null or NUL-terminated, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_recommend(
    pipeline: *const FrPipeline,
    labels: *const c_char,
    image_path: *const c_char,
    out: *mut FrFood,
) -> FrStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let labels = parse_labels(str_arg(labels, "labels")?)?;
        let image = if image_path.is_null() {
            None
        } else {
            Some(PathBuf::from(str_arg(image_path, "image_path")?))
        };
        let out = out_arg(out, "out")?;
        *out = p.0.recommend(&ProviderInput::new(image, labels))?.into();
        Ok(())
    })
}

/// Scores the recommender on one part of a seeded split of a survey CSV.
///
/// # Safety
/// `pipeline` must be a live handle, `survey_path` NUL-terminated, `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_pipeline_evaluate(
    pipeline: *const FrPipeline,
    survey_path: *const c_char,
    part: FrSplit,
    seed: u64,
    out: *mut FrMetricReport,
) -> FrStatus {
    guard(|| {
        let p = handle(pipeline, "pipeline")?;
        let survey_path = str_arg(survey_path, "survey_path")?;
        let out = out_arg(out, "out")?;
        let schema = p.0.schema();
        let records = load_survey(survey_path, schema)?;
        let role = match part {
            FrSplit::Train => SplitRole::Train,
            FrSplit::Validation => SplitRole::Validation,
            FrSplit::Test => SplitRole::Test,
            FrSplit::All => {
                *out = p.0.evaluate_survey(&records, schema)?.into();
                return Ok(());
            }
        };
        let parts = split(&records, &SplitSpec::new(seed))?;
        *out = p.0.evaluate_survey(&parts.part(role).records, schema)?.into();
        Ok(())
    })
}

/// Dominant-color label of a PPM image held in memory. With a null
/// `palette_json` the built-in warm/cool palette is used. The label is
/// returned in `*out` and must be freed with [`fr_string_free`].
///
/// # Safety
/// `ppm` must be readable for `len` bytes, `palette_json` null or
/// NUL-terminated, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_dominant_color(
    ppm: *const u8,
    len: usize,
    palette_json: *const c_char,
    k: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> FrStatus {
    guard(|| {
        if ppm.is_null() {
            return Err(Failure::Null("ppm"));
        }
        let out = out_arg(out, "out")?;
        let bytes = std::slice::from_raw_parts(ppm, len);
        let palette = if palette_json.is_null() {
            ColorPalette::warm_cool()
        } else {
            ColorPalette::from_json(str_arg(palette_json, "palette_json")?)?
        };
        let label = dominant_color(&parse_ppm(bytes)?, &palette, k, seed)?;
        *out = CString::new(label)
            .map_err(|_| Failure::Usage("palette label contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}
