//! Self-paced under-sampling ensemble for imbalanced classification.
//!
//! Each binary ensemble grows one base tree per iteration. Iteration 0 trains
//! on the minority class plus an equally sized random draw from the majority.
//! Every later iteration scores the majority with the current ensemble,
//! measures per-sample hardness `|F(x) - y|`, groups the majority into
//! equal-width hardness bins, and draws exactly `|minority|` majority samples
//! with bin weights `1 / (mean_hardness + alpha_i)`. The self-pace factor
//! `alpha_i` decays geometrically over the schedule, so early draws spread
//! evenly across bins and late draws concentrate on the bins the ensemble
//! already handles well while the hard tail keeps a share.
//!
//! Multiclass problems are reduced one-vs-rest; the prediction is the class
//! whose ensemble scores highest.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tree::{self, DecisionTreeModel, TreeConfig};

/// Base-tree label for the positive class.
pub const POSITIVE: &str = "pos";
/// Base-tree label for the negative class.
pub const NEGATIVE: &str = "neg";

pub const DEFAULT_ALPHA_START: f64 = 10.0;
pub const DEFAULT_ALPHA_END: f64 = 0.05;
pub const DEFAULT_BINS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfPaceSchedule {
    pub n_iterations: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
}

impl SelfPaceSchedule {
    pub fn new(n_iterations: usize, alpha_start: f64, alpha_end: f64) -> Result<Self> {
        let s = SelfPaceSchedule {
            n_iterations,
            alpha_start,
            alpha_end,
        };
        s.validate()?;
        Ok(s)
    }

    /// `n_iterations` with the default 10.0 → 0.05 decay.
    pub fn with_iterations(n_iterations: usize) -> Result<Self> {
        Self::new(n_iterations, DEFAULT_ALPHA_START, DEFAULT_ALPHA_END)
    }

    fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::InvalidSchedule("need at least one iteration".into()));
        }
        let finite_pos = |a: f64| a.is_finite() && a > 0.0;
        if !finite_pos(self.alpha_start) || !finite_pos(self.alpha_end) {
            return Err(Error::InvalidSchedule("alpha values must be positive".into()));
        }
        if self.n_iterations > 1 && self.alpha_end >= self.alpha_start {
            return Err(Error::InvalidSchedule("alpha must decrease".into()));
        }
        Ok(())
    }

    /// Self-pace factor for iteration `i`, geometric between the endpoints.
    pub fn alpha(&self, i: usize) -> f64 {
        if i == 0 || self.n_iterations == 1 {
            return self.alpha_start;
        }
        if i + 1 >= self.n_iterations {
            return self.alpha_end;
        }
        let t = i as f64 / (self.n_iterations - 1) as f64;
        self.alpha_start * (self.alpha_end / self.alpha_start).powf(t)
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.n_iterations).map(|i| self.alpha(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardnessBin {
    /// Indices into the hardness list (i.e. the majority set).
    pub members: Vec<usize>,
    /// Mean hardness of the members; `None` for an empty bin.
    pub mean: Option<f64>,
}

/// Equal-width bins over `[0, 1]`; bin `b` covers `[b/k, (b+1)/k)` and the
/// last bin also takes 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct HardnessBins {
    pub bins: Vec<HardnessBin>,
}

impl HardnessBins {
    pub fn k(&self) -> usize {
        self.bins.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.members.len()).collect()
    }
}

pub fn bin_index(hardness: f64, k: usize) -> usize {
    ((hardness * k as f64).floor() as usize).min(k - 1)
}

pub fn bin_by_hardness(hardness: &[f64], k: usize) -> Result<HardnessBins> {
    if k == 0 {
        return Err(Error::InvalidBinCount);
    }
    let mut members = vec![Vec::new(); k];
    for (i, &h) in hardness.iter().enumerate() {
        if !(0.0..=1.0).contains(&h) {
            return Err(Error::InvalidHardness(h));
        }
        members[bin_index(h, k)].push(i);
    }
    let bins = members
        .into_iter()
        .map(|m| {
            let mean = (!m.is_empty()).then(|| m.iter().map(|&i| hardness[i]).sum::<f64>() / m.len() as f64);
            HardnessBin { members: m, mean }
        })
        .collect();
    Ok(HardnessBins { bins })
}

/// How many samples each bin contributes to a draw of `target`.
///
/// Non-empty bin `b` has weight `1 / (mean_b + alpha)`; shares are floored
/// and the leftover units go to the largest fractional parts (lower bin
/// index on ties), so the result always sums to `target`. Empty bins get 0.
pub fn allocate(bins: &HardnessBins, alpha: f64, target: usize) -> Result<Vec<usize>> {
    if target == 0 {
        return Err(Error::InvalidTarget(target));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("self-pace factor must be positive, got {alpha}")));
    }
    let weights: Vec<f64> = bins
        .bins
        .iter()
        .map(|b| b.mean.map_or(0.0, |m| 1.0 / (m + alpha)))
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::NoNonEmptyBins);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| target as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..alloc.len()).filter(|&b| weights[b] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    if assigned > target {
        // only reachable through rounding noise; take the excess back from the smallest remainders
        for &b in order.iter().rev().cycle().take(assigned - target) {
            alloc[b] -= 1;
        }
    } else {
        for &b in order.iter().cycle().take(target - assigned) {
            alloc[b] += 1;
        }
    }
    Ok(alloc)
}

/// Draws exactly `target` majority indices according to [`allocate`].
///
/// Within a bin the draw is uniform without replacement; when a bin is
/// asked for more than it holds, every member is taken once and the
/// shortfall is drawn uniformly with replacement.
pub fn self_paced_undersample(bins: &HardnessBins, alpha: f64, target: usize, seed: u64) -> Result<Vec<usize>> {
    let alloc = allocate(bins, alpha, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target);
    for (bin, &want) in bins.bins.iter().zip(&alloc) {
        let size = bin.members.len();
        if want <= size {
            out.extend(index::sample(&mut rng, size, want).into_iter().map(|i| bin.members[i]));
        } else {
            out.extend_from_slice(&bin.members);
            out.extend((0..want - size).map(|_| bin.members[rng.gen_range(0..size)]));
        }
    }
    Ok(out)
}

/// A binary problem oriented so that `majority.len() >= minority.len() >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySplitSet {
    pub majority: Vec<Vec<f64>>,
    pub minority: Vec<Vec<f64>>,
    /// Whether the minority set holds the positive class.
    pub minority_positive: bool,
}

impl BinarySplitSet {
    /// Orients the two classes; positives stay the minority on equal sizes.
    pub fn new(positives: Vec<Vec<f64>>, negatives: Vec<Vec<f64>>) -> Result<Self> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::EmptyClass);
        }
        let d = positives[0].len();
        if positives.iter().chain(&negatives).any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("all samples must have the same dimensionality".into()));
        }
        Ok(if positives.len() <= negatives.len() {
            BinarySplitSet {
                majority: negatives,
                minority: positives,
                minority_positive: true,
            }
        } else {
            BinarySplitSet {
                majority: positives,
                minority: negatives,
                minority_positive: false,
            }
        })
    }

    /// Splits `features` by a boolean label.
    pub fn from_labels(features: &[Vec<f64>], positive: &[bool]) -> Result<Self> {
        if features.len() != positive.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples but {} labels",
                features.len(),
                positive.len()
            )));
        }
        let (pos, neg): (Vec<_>, Vec<_>) = features.iter().zip(positive).partition(|(_, &p)| p);
        Self::new(
            pos.into_iter().map(|(x, _)| x.clone()).collect(),
            neg.into_iter().map(|(x, _)| x.clone()).collect(),
        )
    }

    fn label(positive: bool) -> &'static str {
        if positive {
            POSITIVE
        } else {
            NEGATIVE
        }
    }
}

/// Settings an ensemble was trained with; persisted alongside the trees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleParams {
    pub schedule: SelfPaceSchedule,
    pub bins: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    base_models: Vec<DecisionTreeModel>,
    params: Option<EnsembleParams>,
}

impl EnsembleState {
    /// Wraps already-trained base trees labelled with [`POSITIVE`]/[`NEGATIVE`].
    pub fn from_models(base_models: Vec<DecisionTreeModel>) -> Self {
        EnsembleState {
            base_models,
            params: None,
        }
    }

    pub fn base_models(&self) -> &[DecisionTreeModel] {
        &self.base_models
    }

    pub fn params(&self) -> Option<&EnsembleParams> {
        self.params.as_ref()
    }

    /// Index of the last completed iteration.
    pub fn iteration(&self) -> Option<usize> {
        self.base_models.len().checked_sub(1)
    }

    fn push(&mut self, model: DecisionTreeModel) {
        self.base_models.push(model);
    }

    /// `F(x)`: the fraction of base trees voting positive.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        if self.base_models.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let mut votes = 0usize;
        for m in &self.base_models {
            if m.predict(x)? == POSITIVE {
                votes += 1;
            }
        }
        Ok(votes as f64 / self.base_models.len() as f64)
    }

    /// Positive iff `F(x) >= 0.5`.
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(self.predict_score(x)? >= 0.5)
    }

    pub fn export_text(&self) -> String {
        let mut out = String::from("ensemble");
        if let Some(p) = &self.params {
            let _ = write!(
                out,
                " iterations={} alpha_start={} alpha_end={} bins={} seed={}",
                p.schedule.n_iterations, p.schedule.alpha_start, p.schedule.alpha_end, p.bins, p.seed
            );
        }
        let _ = writeln!(out, " models={}", self.base_models.len());
        for m in &self.base_models {
            out.push_str(&m.export_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let e = read_ensemble(&lines, &mut pos)?;
        expect_end(&lines, pos)?;
        Ok(e)
    }
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::ModelFormat {
        line: line + 1,
        message: message.into(),
    }
}

fn expect_end(lines: &[&str], pos: usize) -> Result<()> {
    match lines.iter().enumerate().skip(pos).find(|(_, l)| !l.trim().is_empty()) {
        Some((i, l)) => Err(format_err(i, format!("trailing content {l:?}"))),
        None => Ok(()),
    }
}

/// Splits `word key=value key=value` into its fields.
pub(crate) fn header_fields<'a>(line: &'a str, word: &str, at: usize) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(word) {
        return Err(format_err(at, format!("expected `{word}` header")));
    }
    parts
        .map(|p| p.split_once('=').ok_or_else(|| format_err(at, format!("bad field {p:?}"))))
        .collect()
}

pub(crate) fn field<T: std::str::FromStr>(fields: &[(&str, &str)], key: &str, at: usize) -> Result<Option<T>> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.parse::<T>().map_err(|_| format_err(at, format!("bad value for {key}"))))
        .transpose()
}

pub(crate) fn read_ensemble(lines: &[&str], pos: &mut usize) -> Result<EnsembleState> {
    let at = *pos;
    let line = lines.get(at).ok_or_else(|| format_err(at, "expected ensemble header"))?;
    let fields = header_fields(line, "ensemble", at)?;
    let models: usize = field(&fields, "models", at)?.ok_or_else(|| format_err(at, "missing models="))?;
    let params = match field::<usize>(&fields, "iterations", at)? {
        None => None,
        Some(n) => {
            let need = |k: &str| -> Result<f64> { field(&fields, k, at)?.ok_or_else(|| format_err(at, format!("missing {k}="))) };
            let schedule = SelfPaceSchedule::new(n, need("alpha_start")?, need("alpha_end")?)
                .map_err(|e| format_err(at, e.to_string()))?;
            Some(EnsembleParams {
                schedule,
                bins: field(&fields, "bins", at)?.ok_or_else(|| format_err(at, "missing bins="))?,
                seed: field(&fields, "seed", at)?.ok_or_else(|| format_err(at, "missing seed="))?,
            })
        }
    };
    *pos += 1;
    let mut base_models = Vec::with_capacity(models);
    for _ in 0..models {
        let m = tree::read_tree(lines, pos)?;
        if m.labels().iter().any(|l| l != POSITIVE && l != NEGATIVE) {
            return Err(format_err(*pos - 1, "base trees must use pos/neg labels"));
        }
        base_models.push(m);
    }
    Ok(EnsembleState { base_models, params })
}

/// `|F(x) - y|` for each sample, with `y` = 1 for positive labels.
pub fn compute_hardness(state: &EnsembleState, features: &[Vec<f64>], positive: &[bool]) -> Result<Vec<f64>> {
    if state.base_models.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if features.len() != positive.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} labels",
            features.len(),
            positive.len()
        )));
    }
    features
        .iter()
        .zip(positive)
        .map(|(x, &p)| {
            let y = if p { 1.0 } else { 0.0 };
            Ok((state.predict_score(x)? - y).abs())
        })
        .collect()
}

/// What one training iteration saw; returned by [`fit_binary_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    /// `None` for the random initial draw.
    pub alpha: Option<f64>,
    pub majority_indices: Vec<usize>,
    pub bin_sizes: Vec<usize>,
    pub training_rows: usize,
    pub minority_rows: usize,
}

fn iteration_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

fn train_balanced(data: &BinarySplitSet, majority_idx: &[usize], config: &TreeConfig) -> Result<DecisionTreeModel> {
    let mut x = Vec::with_capacity(data.minority.len() + majority_idx.len());
    let mut y = Vec::with_capacity(x.capacity());
    x.extend(data.minority.iter().cloned());
    y.extend(std::iter::repeat_n(BinarySplitSet::label(data.minority_positive), data.minority.len()));
    x.extend(majority_idx.iter().map(|&i| data.majority[i].clone()));
    y.extend(std::iter::repeat_n(BinarySplitSet::label(!data.minority_positive), majority_idx.len()));
    DecisionTreeModel::fit(&x, &y, config)
}

pub fn fit_binary(
    data: &BinarySplitSet,
    schedule: &SelfPaceSchedule,
    bins: usize,
    tree_config: &TreeConfig,
    seed: u64,
) -> Result<EnsembleState> {
    fit_binary_traced(data, schedule, bins, tree_config, seed).map(|(s, _)| s)
}

pub fn fit_binary_traced(
    data: &BinarySplitSet,
    schedule: &SelfPaceSchedule,
    bins: usize,
    tree_config: &TreeConfig,
    seed: u64,
) -> Result<(EnsembleState, Vec<IterationTrace>)> {
    schedule.validate()?;
    if bins == 0 {
        return Err(Error::InvalidBinCount);
    }
    if data.minority.is_empty() || data.majority.len() < data.minority.len() {
        return Err(Error::EmptyClass);
    }
    let target = data.minority.len();
    let seeds = iteration_seeds(seed, schedule.n_iterations);
    let majority_labels = vec![!data.minority_positive; data.majority.len()];
    let mut state = EnsembleState {
        base_models: Vec::with_capacity(schedule.n_iterations),
        params: Some(EnsembleParams {
            schedule: *schedule,
            bins,
            seed,
        }),
    };
    let mut trace = Vec::with_capacity(schedule.n_iterations);
    for (i, &iter_seed) in seeds.iter().enumerate() {
        let (chosen, alpha, bin_sizes) = if i == 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(iter_seed);
            let idx = index::sample(&mut rng, data.majority.len(), target).into_vec();
            (idx, None, Vec::new())
        } else {
            let hardness = compute_hardness(&state, &data.majority, &majority_labels)?;
            let binned = bin_by_hardness(&hardness, bins)?;
            let alpha = schedule.alpha(i);
            let idx = self_paced_undersample(&binned, alpha, target, iter_seed)?;
            (idx, Some(alpha), binned.sizes())
        };
        if chosen.len() != target {
            return Err(Error::Invariant(format!(
                "iteration {i} drew {} majority samples for {target} minority samples",
                chosen.len()
            )));
        }
        state.push(train_balanced(data, &chosen, tree_config)?);
        trace.push(IterationTrace {
            iteration: i,
            alpha,
            training_rows: target + chosen.len(),
            minority_rows: target,
            majority_indices: chosen,
            bin_sizes,
        });
    }
    Ok((state, trace))
}

/// One-vs-rest collection of binary ensembles, one per class.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassEnsemble {
    classes: Vec<String>,
    members: Vec<EnsembleState>,
}

/// Seed for the sub-problem of class `class_index`.
pub fn class_seed(seed: u64, class_index: usize) -> u64 {
    let mut z = seed ^ (class_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit_multiclass<L: AsRef<str> + Sync>(
    features: &[Vec<f64>],
    labels: &[L],
    schedule: &SelfPaceSchedule,
    bins: usize,
    tree_config: &TreeConfig,
    seed: u64,
) -> Result<MulticlassEnsemble> {
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut classes: Vec<String> = Vec::new();
    for l in labels {
        tree::check_label(l.as_ref())?;
        classes.push(l.as_ref().to_string());
    }
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClassInput);
    }
    // sub-problems are independent and seeded per class, so the parallel
    // result matches a sequential run exactly
    let members = classes
        .par_iter()
        .enumerate()
        .map(|(c, class)| {
            let positive: Vec<bool> = labels.iter().map(|l| l.as_ref() == class).collect();
            let data = BinarySplitSet::from_labels(features, &positive)?;
            fit_binary(&data, schedule, bins, tree_config, class_seed(seed, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassEnsemble { classes, members })
}

impl MulticlassEnsemble {
    pub fn new(classes: Vec<String>, members: Vec<EnsembleState>) -> Result<Self> {
        if classes.len() != members.len() || classes.len() < 2 {
            return Err(Error::SingleClassInput);
        }
        Ok(MulticlassEnsemble { classes, members })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn members(&self) -> &[EnsembleState] {
        &self.members
    }

    /// Per-class `F(x)`, in class order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.members.iter().map(|m| m.predict_score(x)).collect()
    }

    /// Highest-scoring class; the lowest class index wins ties.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(&self.classes[best])
    }

    pub fn export_text(&self) -> String {
        let mut out = format!("multiclass classes={}\n", self.classes.join(","));
        for m in &self.members {
            out.push_str(&m.export_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let m = read_multiclass(&lines, &mut pos)?;
        expect_end(&lines, pos)?;
        Ok(m)
    }
}

pub(crate) fn read_multiclass(lines: &[&str], pos: &mut usize) -> Result<MulticlassEnsemble> {
    let at = *pos;
    let line = lines.get(at).ok_or_else(|| format_err(at, "expected multiclass header"))?;
    let fields = header_fields(line, "multiclass", at)?;
    let classes: Vec<String> = field::<String>(&fields, "classes", at)?
        .ok_or_else(|| format_err(at, "missing classes="))?
        .split(',')
        .map(str::to_string)
        .collect();
    *pos += 1;
    let members = (0..classes.len())
        .map(|_| read_ensemble(lines, pos))
        .collect::<Result<Vec<_>>>()?;
    MulticlassEnsemble::new(classes, members).map_err(|e| format_err(at, e.to_string()))
}
