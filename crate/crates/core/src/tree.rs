//! CART classification tree with Gini impurity.
//!
//! Used both as the final recommender over fusion vectors and as the base
//! learner inside the self-paced ensemble. Training is greedy and fully
//! deterministic: candidate thresholds are midpoints between consecutive
//! distinct feature values, equal gains go to the lower feature index and
//! then the lower threshold, and leaf ties go to the lexicographically
//! smallest label.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Gains closer than this are treated as equal.
const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

impl TreeConfig {
    pub fn with_max_depth(max_depth: usize) -> Self {
        TreeConfig {
            max_depth: Some(max_depth),
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParameter("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    /// Routes `x` left iff `x[feature] <= threshold`.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    /// `class_counts` is aligned with the model's sorted label set.
    Leaf { label: String, class_counts: Vec<usize> },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Visits every internal node's `(feature, threshold)` pair.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = self
        {
            f(*feature, *threshold);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTreeModel {
    root: TreeNode,
    feature_count: usize,
    labels: Vec<String>,
}

/// Gini impurity `1 - Σ p_c²` of a label multiset.
pub fn gini<L: Ord>(labels: &[L]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let c: Vec<usize> = counts.into_values().collect();
    Ok(gini_counts(&c, labels.len()))
}

fn gini_counts(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

pub(crate) fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(|c: char| c == ',' || c.is_whitespace()) {
        return Err(Error::InvalidLabel(label.to_string()));
    }
    Ok(())
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: Vec<usize>,
    n_classes: usize,
    labels: &'a [String],
    config: TreeConfig,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn leaf(&self, counts: Vec<usize>) -> TreeNode {
        let mut best = 0;
        for (k, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = k;
            }
        }
        TreeNode::Leaf {
            label: self.labels[best].clone(),
            class_counts: counts,
        }
    }

    fn best_split(&self, idx: &[usize], counts: &[usize]) -> Option<Candidate> {
        let n = idx.len();
        let parent = gini_counts(counts, n);
        let n_features = self.x[idx[0]].len();
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            for pos in 1..n {
                let moved = self.y[order[pos - 1]];
                left[moved] += 1;
                right[moved] -= 1;
                let lo = self.x[order[pos - 1]][f];
                let hi = self.x[order[pos]][f];
                if lo == hi {
                    continue;
                }
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                let weighted = (pos as f64 * gini_counts(&left, pos)
                    + (n - pos) as f64 * gini_counts(&right, n - pos))
                    / n as f64;
                let gain = parent - weighted;
                if best.as_ref().is_none_or(|b| gain > b.gain + GAIN_TOLERANCE) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn build(&self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < self.config.min_samples_split || self.config.max_depth == Some(depth) {
            return self.leaf(counts);
        }
        // A zero-gain split is still taken when the node is impure: on
        // XOR-shaped data no single split lowers impurity, yet splitting is
        // the only way to reach pure leaves.
        let Some(split) = self.best_split(&idx, &counts) else {
            return self.leaf(counts);
        };
        if split.gain < -GAIN_TOLERANCE {
            return self.leaf(counts);
        }
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][split.feature] <= split.threshold);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(l, depth + 1)),
            right: Box::new(self.build(r, depth + 1)),
        }
    }
}

impl DecisionTreeModel {
    pub fn fit<L: AsRef<str>>(features: &[Vec<f64>], labels: &[L], config: &TreeConfig) -> Result<Self> {
        config.validate()?;
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let d = features[0].len();
        if let Some(row) = features.iter().position(|r| r.len() != d) {
            return Err(Error::ShapeMismatch(format!(
                "row {row} has {} features, expected {d}",
                features[row].len()
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("features must be finite".into()));
        }
        let mut label_set: Vec<String> = Vec::new();
        for l in labels {
            check_label(l.as_ref())?;
            label_set.push(l.as_ref().to_string());
        }
        label_set.sort();
        label_set.dedup();
        let y = labels
            .iter()
            .map(|l| label_set.binary_search_by(|s| s.as_str().cmp(l.as_ref())).expect("label present"))
            .collect();
        let builder = Builder {
            x: features,
            y,
            n_classes: label_set.len(),
            labels: &label_set,
            config: *config,
        };
        let root = builder.build((0..features.len()).collect(), 0);
        Ok(DecisionTreeModel {
            root,
            feature_count: d,
            labels: label_set,
        })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Sorted class labels seen in training.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn leaf_for(&self, x: &[f64]) -> Result<&TreeNode> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        let mut node = &self.root;
        while let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        Ok(node)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        match self.leaf_for(x)? {
            TreeNode::Leaf { label, .. } => Ok(label),
            TreeNode::Internal { .. } => unreachable!("descent ends at a leaf"),
        }
    }

    /// Class counts of the leaf `x` lands in.
    pub fn leaf_counts(&self, x: &[f64]) -> Result<&[usize]> {
        match self.leaf_for(x)? {
            TreeNode::Leaf { class_counts, .. } => Ok(class_counts),
            TreeNode::Internal { .. } => unreachable!("descent ends at a leaf"),
        }
    }

    /// Line-oriented text form; [`DecisionTreeModel::from_text`] reads it back.
    ///
    /// ```text
    /// tree features=2 labels=a,b
    /// node 0 <= 0.5
    ///   leaf a 3 0
    ///   leaf b 0 2
    /// ```
    pub fn export_text(&self) -> String {
        let mut out = format!("tree features={} labels={}\n", self.feature_count, self.labels.join(","));
        write_node(&self.root, 0, &mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let model = read_tree(&lines, &mut pos)?;
        if let Some((i, l)) = lines.iter().enumerate().skip(pos).find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::ModelFormat {
                line: i + 1,
                message: format!("trailing content {l:?}"),
            });
        }
        Ok(model)
    }
}

fn write_node(node: &TreeNode, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match node {
        TreeNode::Leaf { label, class_counts } => {
            let _ = write!(out, "{indent}leaf {label}");
            for c in class_counts {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "{indent}node {feature} <= {threshold}");
            write_node(left, depth + 1, out);
            write_node(right, depth + 1, out);
        }
    }
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::ModelFormat {
        line: line + 1,
        message: message.into(),
    }
}

/// Parses one `tree ...` block starting at `lines[*pos]`, leaving `*pos`
/// just past it.
pub(crate) fn read_tree(lines: &[&str], pos: &mut usize) -> Result<DecisionTreeModel> {
    let start = *pos;
    let header = lines.get(start).ok_or_else(|| format_err(start, "expected tree header"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("tree") {
        return Err(format_err(start, "expected `tree` header"));
    }
    let mut feature_count = None;
    let mut labels = None;
    for f in fields {
        match f.split_once('=') {
            Some(("features", v)) => {
                feature_count = Some(v.parse::<usize>().map_err(|e| format_err(start, e.to_string()))?)
            }
            Some(("labels", v)) => labels = Some(v.split(',').map(str::to_string).collect::<Vec<_>>()),
            _ => return Err(format_err(start, format!("unknown header field {f:?}"))),
        }
    }
    let feature_count = feature_count.ok_or_else(|| format_err(start, "missing features="))?;
    let labels = labels.ok_or_else(|| format_err(start, "missing labels="))?;
    for l in &labels {
        check_label(l).map_err(|e| format_err(start, e.to_string()))?;
    }
    if labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format_err(start, "labels must be sorted and distinct"));
    }
    *pos += 1;
    let root = read_node(lines, pos, 0, feature_count, &labels)?;
    Ok(DecisionTreeModel {
        root,
        feature_count,
        labels,
    })
}

fn read_node(lines: &[&str], pos: &mut usize, depth: usize, features: usize, labels: &[String]) -> Result<TreeNode> {
    let at = *pos;
    let line = lines.get(at).ok_or_else(|| format_err(at, "unexpected end of tree"))?;
    let indent = "  ".repeat(depth);
    let body = line
        .strip_prefix(&indent)
        .filter(|b| !b.starts_with(' '))
        .ok_or_else(|| format_err(at, format!("expected indentation of {} spaces", depth * 2)))?;
    *pos += 1;
    let tokens: Vec<&str> = body.split_whitespace().collect();
    match tokens.as_slice() {
        ["node", feature, "<=", threshold] => {
            let feature: usize = feature.parse().map_err(|_| format_err(at, "bad feature index"))?;
            if feature >= features {
                return Err(format_err(at, format!("feature {feature} out of range")));
            }
            let threshold: f64 = threshold.parse().map_err(|_| format_err(at, "bad threshold"))?;
            if !threshold.is_finite() {
                return Err(format_err(at, "threshold must be finite"));
            }
            let left = read_node(lines, pos, depth + 1, features, labels)?;
            let right = read_node(lines, pos, depth + 1, features, labels)?;
            Ok(TreeNode::Internal {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        ["leaf", label, counts @ ..] => {
            if !labels.iter().any(|l| l == label) {
                return Err(format_err(at, format!("leaf label {label:?} not in label set")));
            }
            if counts.len() != labels.len() {
                return Err(format_err(at, "leaf needs one count per label"));
            }
            let class_counts = counts
                .iter()
                .map(|c| c.parse::<usize>().map_err(|_| format_err(at, "bad count")))
                .collect::<Result<Vec<_>>>()?;
            if class_counts.iter().all(|&c| c == 0) {
                return Err(format_err(at, "leaf has no samples"));
            }
            Ok(TreeNode::Leaf {
                label: label.to_string(),
                class_counts,
            })
        }
        _ => Err(format_err(at, format!("unrecognized line {body:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&["a", "a", "a"]).unwrap(), 0.0);
        assert_eq!(gini(&["a", "a", "b", "b"]).unwrap(), 0.5);
        assert_eq!(gini(&["a", "a", "a", "b"]).unwrap(), 0.375);
        assert!(matches!(gini::<&str>(&[]), Err(Error::EmptyLabelSet)));
    }

    #[test]
    fn single_example_is_a_leaf() {
        let m = DecisionTreeModel::fit(&[vec![0.3, 7.0]], &["Pizza"], &TreeConfig::default()).unwrap();
        assert!(matches!(m.root(), TreeNode::Leaf { .. }));
        assert_eq!(m.predict(&[100.0, -4.0]).unwrap(), "Pizza");
        assert_eq!(m.export_text(), "tree features=2 labels=Pizza\nleaf Pizza 1\n");
    }

    #[test]
    fn forced_split_at_half() {
        let m = DecisionTreeModel::fit(&[vec![0.0], vec![1.0]], &["a", "b"], &TreeConfig::default()).unwrap();
        match m.root() {
            TreeNode::Internal { feature, threshold, .. } => {
                assert_eq!((*feature, *threshold), (0, 0.5));
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
        assert_eq!(m.predict(&[0.2]).unwrap(), "a");
        assert_eq!(m.predict(&[0.0]).unwrap(), "a");
        assert_eq!(m.predict(&[1.0]).unwrap(), "b");
        assert_eq!(
            m.export_text(),
            "tree features=1 labels=a,b\nnode 0 <= 0.5\n  leaf a 1 0\n  leaf b 0 1\n"
        );
    }

    #[test]
    fn xor_reaches_pure_leaves() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = ["a", "b", "b", "a"];
        let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            assert_eq!(m.predict(xi).unwrap(), yi);
        }
    }

    #[test]
    fn tie_break_prefers_lower_feature() {
        // both features separate the classes perfectly
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let m = DecisionTreeModel::fit(&x, &["a", "b"], &TreeConfig::default()).unwrap();
        assert!(matches!(m.root(), TreeNode::Internal { feature: 0, .. }));
    }

    #[test]
    fn leaf_tie_goes_to_smallest_label() {
        let x = vec![vec![1.0], vec![1.0]];
        let m = DecisionTreeModel::fit(&x, &["zeta", "alpha"], &TreeConfig::default()).unwrap();
        assert_eq!(m.predict(&[1.0]).unwrap(), "alpha");
        assert_eq!(m.leaf_counts(&[1.0]).unwrap(), &[1, 1]);
    }

    #[test]
    fn depth_and_min_samples_limits() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<&str> = (0..8).map(|i| if i % 2 == 0 { "e" } else { "o" }).collect();
        let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::with_max_depth(2)).unwrap();
        assert!(m.root().depth() <= 2);
        let cfg = TreeConfig {
            max_depth: None,
            min_samples_split: 9,
        };
        let m = DecisionTreeModel::fit(&x, &y, &cfg).unwrap();
        assert_eq!(m.root().depth(), 0);
    }

    #[test]
    fn fit_errors() {
        let cfg = TreeConfig::default();
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            DecisionTreeModel::fit::<&str>(&empty, &[], &cfg),
            Err(Error::EmptyTrainingSet)
        ));
        assert!(matches!(
            DecisionTreeModel::fit(&[vec![1.0]], &["a", "b"], &cfg),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            DecisionTreeModel::fit(&[vec![1.0], vec![1.0, 2.0]], &["a", "b"], &cfg),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            DecisionTreeModel::fit(&[vec![1.0]], &["has space"], &cfg),
            Err(Error::InvalidLabel(_))
        ));
        let bad = TreeConfig {
            max_depth: None,
            min_samples_split: 1,
        };
        assert!(DecisionTreeModel::fit(&[vec![1.0]], &["a"], &bad).is_err());
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = DecisionTreeModel::fit(&[vec![0.0, 1.0]], &["a"], &TreeConfig::default()).unwrap();
        assert!(matches!(
            m.predict(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let x = vec![vec![0.0, 0.1], vec![0.3, 1.7], vec![1.0, 0.2], vec![1.25, 1.0]];
        let m = DecisionTreeModel::fit(&x, &["a", "b", "c", "a"], &TreeConfig::default()).unwrap();
        let text = m.export_text();
        assert_eq!(DecisionTreeModel::from_text(&text).unwrap(), m);

        let bad = [
            "",
            "tree features=1\nleaf a 1\n",
            "tree features=1 labels=b,a\nleaf a 1 0\n",
            "tree features=1 labels=a\nnode 3 <= 0.5\n  leaf a 1\n  leaf a 1\n",
            "tree features=1 labels=a\nnode 0 <= 0.5\n  leaf a 1\n",
            "tree features=1 labels=a\nnode 0 <= 0.5\nleaf a 1\nleaf a 1\n",
            "tree features=1 labels=a\nleaf b 1\n",
            "tree features=1 labels=a\nleaf a 0\n",
            "tree features=1 labels=a\nleaf a 1\nleaf a 1\n",
        ];
        for b in bad {
            assert!(DecisionTreeModel::from_text(b).is_err(), "accepted {b:?}");
        }
    }
}
