use std::collections::BTreeMap;

use foodrec::tree::{gini, TreeNode};
use foodrec::{DecisionTreeModel, TreeConfig};
use proptest::prelude::*;

/// Conflict-free data: each distinct row gets one label.
fn conflict_free(binary: bool) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<String>)> {
    let value = if binary {
        prop::sample::select(vec![0.0, 1.0]).boxed()
    } else {
        (0u8..6).prop_map(|v| f64::from(v) / 2.0).boxed()
    };
    (1usize..6, 1usize..40).prop_flat_map(move |(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(value.clone(), d), n),
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), n),
        )
            .prop_map(|(x, y)| {
                let mut first: BTreeMap<Vec<u64>, String> = BTreeMap::new();
                let y = x
                    .iter()
                    .zip(y)
                    .map(|(row, l)| {
                        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
                        first.entry(key).or_insert_with(|| l.to_string()).clone()
                    })
                    .collect();
                (x, y)
            })
    })
}

/// Gini from class counts.
fn gini_oracle(labels: &[&str]) -> f64 {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn thresholds(node: &TreeNode, out: &mut Vec<f64>) {
    if let TreeNode::Internal {
        threshold, left, right, ..
    } = node
    {
        out.push(*threshold);
        thresholds(left, out);
        thresholds(right, out);
    }
}

proptest! {
    #[test]
    fn unbounded_tree_fits_training_data((x, y) in conflict_free(false)) {
        let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).unwrap();
        for (row, label) in x.iter().zip(&y) {
            prop_assert_eq!(m.predict(row).unwrap(), label.as_str());
        }
    }

    #[test]
    fn binary_features_split_at_half((x, y) in conflict_free(true)) {
        let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).unwrap();
        let mut t = Vec::new();
        thresholds(m.root(), &mut t);
        prop_assert!(t.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn export_is_deterministic_and_round_trips((x, y) in conflict_free(false), depth in prop::option::of(1usize..4)) {
        let config = TreeConfig { max_depth: depth, ..TreeConfig::default() };
        let a = DecisionTreeModel::fit(&x, &y, &config).unwrap();
        let b = DecisionTreeModel::fit(&x, &y, &config).unwrap();
        let text = a.export_text();
        prop_assert_eq!(&text, &b.export_text());
        let back = DecisionTreeModel::from_text(&text).unwrap();
        prop_assert_eq!(back.export_text(), text);
        for row in &x {
            prop_assert_eq!(back.predict(row).unwrap(), a.predict(row).unwrap());
        }
        if let Some(d) = depth {
            prop_assert!(a.root().depth() <= d);
        }
    }

    #[test]
    fn gini_matches_counting(labels in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..60)) {
        let g = gini(&labels).unwrap();
        prop_assert!((g - gini_oracle(&labels)).abs() < 1e-12);
        prop_assert!((0.0..1.0).contains(&g));
        let pure = labels.iter().all(|l| *l == labels[0]);
        prop_assert_eq!(g == 0.0, pure);
    }
}

#[test]
fn twenty_random_trees_round_trip() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strat = conflict_free(false);
    for _ in 0..20 {
        let (x, y) = strat.new_tree(&mut runner).unwrap().current();
        let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).unwrap();
        let back = DecisionTreeModel::from_text(&m.export_text()).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn xor_is_learned() {
    let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let y = ["n", "p", "p", "n"];
    let m = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).unwrap();
    for (row, l) in x.iter().zip(y) {
        assert_eq!(m.predict(row).unwrap(), l);
    }
}

#[test]
fn leaf_tie_goes_to_smaller_label() {
    let x = vec![vec![1.0], vec![1.0]];
    let m = DecisionTreeModel::fit(&x, &["zeta", "alpha"], &TreeConfig::default()).unwrap();
    assert_eq!(m.predict(&[1.0]).unwrap(), "alpha");
}
