//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use foodrec::dataset::{split, split_indices, SplitSpec};
use foodrec::ensemble::{allocate, bin_by_hardness, fit_binary_traced, BinarySplitSet, SelfPaceSchedule};
use foodrec::image::{dominant_color, parse_ppm, write_ppm, ColorPalette, PaletteEntry, PpmFormat};
use foodrec::metrics::evaluate;
use foodrec::pipeline::train_pipeline;
use foodrec::schema::{decode, encode, enumerate_combinations};
use foodrec::synthetic::{self, two_clouds, CloudSpec};
use foodrec::{AttributeSchema, DecisionTreeModel, RasterImage, TreeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

struct Counts {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f: f64,
}

/// Recounts everything with one pass over the samples per class.
fn counting_oracle(t: &[usize], p: &[usize], k: usize) -> Counts {
    let n = t.len();
    let correct = (0..n).filter(|&i| t[i] == p[i]).count();
    let (mut ps, mut rs) = (0.0, 0.0);
    for c in 0..k {
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for i in 0..n {
            if p[i] == c && t[i] == c {
                tp += 1;
            } else if p[i] == c {
                fp += 1;
            } else if t[i] == c {
                fneg += 1;
            }
        }
        if tp + fp > 0 {
            ps += tp as f64 / (tp + fp) as f64;
        }
        if tp + fneg > 0 {
            rs += tp as f64 / (tp + fneg) as f64;
        }
    }
    let (precision, recall) = (ps / k as f64, rs / k as f64);
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Counts {
        accuracy: correct as f64 / n as f64,
        precision,
        recall,
        f,
    }
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=10);
        let n = rng.gen_range(1..=10_000);
        let labels: Vec<String> = (0..k).map(|c| format!("class{c}")).collect();
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        // bias predictions toward the truth so per-class values spread out
        let p: Vec<usize> = t
            .iter()
            .map(|&c| if rng.gen_bool(0.6) { c } else { rng.gen_range(0..k) })
            .collect();
        let ts: Vec<&str> = t.iter().map(|&c| labels[c].as_str()).collect();
        let pstr: Vec<&str> = p.iter().map(|&c| labels[c].as_str()).collect();
        let got = evaluate(&ts, &pstr, &labels, 1.0).map_err(|e| e.to_string())?;
        let want = counting_oracle(&t, &p, k);
        for (a, b) in [
            (got.accuracy, want.accuracy),
            (got.macro_precision, want.precision),
            (got.macro_recall, want.recall),
            (got.f_score, want.f),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:e} exceeds 1e-12"))?;
    Ok(format!("1000 random instances, max deviation {worst:e}"))
}

// ---------------------------------------------------------------- 2

fn worked_metric_instance() -> Outcome {
    let r = evaluate(&["a", "a", "b", "b", "c"], &["a", "b", "b", "b", "c"], &["a", "b", "c"], 1.0)
        .map_err(|e| e.to_string())?;
    check(r.accuracy == 0.8, format!("A = {}", r.accuracy))?;
    check((r.macro_precision - 8.0 / 9.0).abs() <= 1e-12, format!("P = {}", r.macro_precision))?;
    check((r.macro_recall - 5.0 / 6.0).abs() <= 1e-12, format!("R = {}", r.macro_recall))?;
    check((r.f_score - 0.8602).abs() < 5e-5, format!("F = {}", r.f_score))?;
    Ok(format!(
        "A={} P={:.6} R={:.6} F={:.4}",
        r.accuracy, r.macro_precision, r.macro_recall, r.f_score
    ))
}

// ---------------------------------------------------------------- 3

fn encoding_bijection() -> Outcome {
    let schema = AttributeSchema::default_schema(false);
    let all = enumerate_combinations(&schema, None).map_err(|e| e.to_string())?;
    check(all.len() == 120, format!("{} combinations", all.len()))?;
    let widths: Vec<usize> = schema.attributes().iter().map(|a| a.values.len()).collect();
    for t in &all {
        let v = encode(&schema, t).map_err(|e| e.to_string())?;
        let back = decode(&schema, &v).map_err(|e| e.to_string())?;
        check(&back == t, format!("{t} decoded as {back}"))?;
        let mut start = 0;
        for w in &widths {
            let ones = v.bits()[start..start + w].iter().filter(|&&b| b == 1).count();
            check(ones == 1, format!("{t}: block at {start} has {ones} set bits"))?;
            start += w;
        }
        check(v.bits().iter().all(|&b| b <= 1), format!("{t}: non-binary value"))?;
    }
    Ok("120 combinations round-trip, one set bit per block".into())
}

// ---------------------------------------------------------------- 4

fn mean_test_accuracy(noise: f64) -> Result<f64, String> {
    let schema = AttributeSchema::default_schema(false);
    let viable = synthetic::viable_combinations();
    let mut total = 0.0;
    for seed in 0..20u64 {
        let survey = synthetic::survey(&viable, noise, seed);
        let parts = split(&survey, &SplitSpec::new(seed)).map_err(|e| e.to_string())?;
        let p = train_pipeline(&parts.train.records, &schema, &TreeConfig::default(), false)
            .map_err(|e| e.to_string())?;
        total += p
            .evaluate_survey(&parts.test.records, &schema)
            .map_err(|e| e.to_string())?
            .accuracy;
    }
    Ok(total / 20.0)
}

fn survey_recommender() -> Outcome {
    let noisy = mean_test_accuracy(0.05)?;
    let clean = mean_test_accuracy(0.0)?;
    check(noisy >= 0.85, format!("5% noise: mean test accuracy {noisy:.4} < 0.85"))?;
    check(clean >= 0.99, format!("0% noise: mean test accuracy {clean:.4} < 0.99"))?;
    Ok(format!(
        "mean test accuracy over 20 seeds: {noisy:.4} at 5% noise, {clean:.4} at 0% noise"
    ))
}

// ---------------------------------------------------------------- 5

/// Macro-F1 over the two classes, via the library's metrics.
fn macro_f1(truth: &[bool], pred: &[bool]) -> Result<f64, String> {
    let name = |b: &bool| if *b { "minority" } else { "majority" };
    let t: Vec<&str> = truth.iter().map(name).collect();
    let p: Vec<&str> = pred.iter().map(name).collect();
    evaluate(&t, &p, &["majority", "minority"], 1.0)
        .map(|r| r.f_score)
        .map_err(|e| e.to_string())
}

fn ensemble_balance_and_benefit() -> Outcome {
    let spec = CloudSpec::default();
    check(
        spec.n_majority == 2000 && spec.n_minority == 100,
        "cloud sizes drifted from 2000/100",
    )?;
    let schedule = SelfPaceSchedule::with_iterations(10).map_err(|e| e.to_string())?;
    let (mut ens_sum, mut tree_sum) = (0.0, 0.0);
    for seed in 0..10u64 {
        let (x, y) = two_clouds(&spec, seed);
        let (xt, yt) = two_clouds(&spec, 10_000 + seed);
        let data = BinarySplitSet::from_labels(&x, &y).map_err(|e| e.to_string())?;
        let (state, trace) =
            fit_binary_traced(&data, &schedule, 5, &TreeConfig::default(), seed).map_err(|e| e.to_string())?;
        check(trace.len() == 10, format!("seed {seed}: {} iterations", trace.len()))?;
        for t in trace.iter().filter(|t| t.iteration > 0) {
            check(
                t.training_rows == 200 && t.majority_indices.len() == 100,
                format!("seed {seed} iteration {}: {} training rows", t.iteration, t.training_rows),
            )?;
        }
        let labels: Vec<&str> = y.iter().map(|&m| if m { "minority" } else { "majority" }).collect();
        let tree = DecisionTreeModel::fit(&x, &labels, &TreeConfig::default()).map_err(|e| e.to_string())?;
        let ens_pred = xt
            .iter()
            .map(|r| state.predict(r))
            .collect::<Result<Vec<bool>, _>>()
            .map_err(|e| e.to_string())?;
        let tree_pred = xt
            .iter()
            .map(|r| tree.predict(r).map(|l| l == "minority"))
            .collect::<Result<Vec<bool>, _>>()
            .map_err(|e| e.to_string())?;
        ens_sum += macro_f1(&yt, &ens_pred)?;
        tree_sum += macro_f1(&yt, &tree_pred)?;
    }
    let (ens, tree) = (ens_sum / 10.0, tree_sum / 10.0);
    check(
        ens - tree >= 0.05,
        format!("ensemble macro-F1 {ens:.4} vs single tree {tree:.4}: margin {:.4} < 0.05", ens - tree),
    )?;
    Ok(format!(
        "every post-initial iteration trains on 200 rows; macro-F1 {ens:.4} vs single tree {tree:.4} (+{:.4})",
        ens - tree
    ))
}

// ---------------------------------------------------------------- 6

fn allocation_closed_form() -> Outcome {
    let mut h = vec![0.1; 30];
    h.extend(vec![0.9; 30]);
    let bins = bin_by_hardness(&h, 2).map_err(|e| e.to_string())?;
    let means: Vec<Option<f64>> = bins.bins.iter().map(|b| b.mean).collect();
    check(
        means.iter().zip([0.1, 0.9]).all(|(m, want)| m.is_some_and(|m| (m - want).abs() < 1e-12)),
        format!("bin means {means:?}"),
    )?;
    let alloc = allocate(&bins, 0.1, 60).map_err(|e| e.to_string())?;
    check(alloc == [50, 10], format!("allocation {alloc:?}"))?;
    Ok("allocation (50, 10)".into())
}

// ---------------------------------------------------------------- 7

fn split_exactness() -> Outcome {
    let [a, b, c] = split_indices(50_000, &SplitSpec::new(0)).map_err(|e| e.to_string())?;
    check(
        (a.len(), b.len(), c.len()) == (40_000, 5_000, 5_000),
        format!("n=50000 gave ({}, {}, {})", a.len(), b.len(), c.len()),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = 0;
    for n in 1..200usize {
        for _ in 0..5 {
            let spec = SplitSpec::new(rng.gen());
            let parts = split_indices(n, &spec).map_err(|e| e.to_string())?;
            let mut seen = HashSet::new();
            for i in parts.iter().flatten() {
                check(*i < n && seen.insert(*i), format!("n={n}: index {i} repeated or out of range"))?;
            }
            check(seen.len() == n, format!("n={n}: {} of {n} indices covered", seen.len()))?;
            check(
                split_indices(n, &spec).map_err(|e| e.to_string())? == parts,
                format!("n={n}: differs between runs"),
            )?;
            cases += 1;
        }
    }
    Ok(format!("(40000, 5000, 5000) at n=50000; {cases} small splits disjoint, covering, repeatable"))
}

// ---------------------------------------------------------------- 8

fn image_layer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let px = (0..w * h).map(|_| rng.gen::<[u8; 3]>()).collect();
        let img = RasterImage::new(w, h, px).map_err(|e| e.to_string())?;
        for format in [PpmFormat::P3, PpmFormat::P6] {
            let back = parse_ppm(&write_ppm(&img, format)).map_err(|e| e.to_string())?;
            check(back == img, format!("{format:?} {w}x{h} round trip differs"))?;
        }
    }
    let entry = |label: &str, anchor: [u8; 3]| PaletteEntry {
        label: label.into(),
        anchor,
    };
    let palette = ColorPalette::new(vec![
        entry("red", [255, 0, 0]),
        entry("green", [0, 255, 0]),
        entry("blue", [0, 0, 255]),
    ])
    .map_err(|e| e.to_string())?;
    for (color, want) in [([230u8, 20, 10], "red"), ([10, 220, 40], "green"), ([5, 30, 240], "blue")] {
        let got = dominant_color(&RasterImage::filled(16, 16, color), &palette, 2, 0).map_err(|e| e.to_string())?;
        check(got == want, format!("pure {color:?} labelled {got}"))?;
    }
    let mut px = vec![[20u8, 200, 30]; 70];
    px.extend(vec![[240u8, 10, 10]; 30]);
    let mixed = RasterImage::new(10, 10, px).map_err(|e| e.to_string())?;
    for seed in 0..10 {
        let got = dominant_color(&mixed, &palette, 2, seed).map_err(|e| e.to_string())?;
        check(got == "green", format!("70/30 image labelled {got} (seed {seed})"))?;
    }
    let warm = dominant_color(&RasterImage::filled(4, 4, [250, 120, 20]), &ColorPalette::warm_cool(), 2, 0)
        .map_err(|e| e.to_string())?;
    check(warm == "warm", format!("orange labelled {warm}"))?;
    Ok("100 random images round-trip in P3 and P6; pure and 70/30 images labelled correctly".into())
}

// ---------------------------------------------------------------- 9

fn tree_determinism() -> Outcome {
    let schema = AttributeSchema::default_schema(false);
    let survey = synthetic::survey(&synthetic::viable_combinations(), 0.1, 9);
    let x: Vec<Vec<f64>> = survey
        .iter()
        .map(|r| encode(&schema, &r.tuple).map(|v| v.to_features()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let y: Vec<&str> = survey.iter().map(|r| r.food.as_str()).collect();
    let first = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).map_err(|e| e.to_string())?;
    let second = DecisionTreeModel::fit(&x, &y, &TreeConfig::default()).map_err(|e| e.to_string())?;
    check(first.export_text() == second.export_text(), "export_text differs between runs")?;
    let wrong = x
        .iter()
        .zip(&y)
        .filter(|(row, label)| first.predict(row).ok() != Some(**label))
        .count();
    check(wrong == 0, format!("{wrong} training rows misclassified"))?;

    // continuous conflict-free data as well
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut table: BTreeMap<Vec<u64>, &str> = BTreeMap::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..300 {
        let row: Vec<f64> = (0..4).map(|_| f64::from(rng.gen_range(0u8..10)) / 3.0).collect();
        let key = row.iter().map(|v| v.to_bits()).collect();
        let label = *table.entry(key).or_insert(["p", "q", "r"][rng.gen_range(0..3)]);
        xs.push(row);
        ys.push(label);
    }
    let m = DecisionTreeModel::fit(&xs, &ys, &TreeConfig::default()).map_err(|e| e.to_string())?;
    let again = DecisionTreeModel::fit(&xs, &ys, &TreeConfig::default()).map_err(|e| e.to_string())?;
    check(m.export_text() == again.export_text(), "export_text differs on continuous data")?;
    let acc = xs.iter().zip(&ys).filter(|(r, l)| m.predict(r).ok() == Some(**l)).count();
    check(acc == xs.len(), format!("training accuracy {acc}/{}", xs.len()))?;
    Ok("byte-identical exports; training accuracy 1.0 on survey and random conflict-free data".into())
}

// ----------------------------------------------------------------

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let instant = Some(Duration::from_secs(1));
    let criteria = [
        Criterion {
            id: "1",
            name: "metrics oracle equivalence",
            limit: Some(Duration::from_secs(10)),
            run: metrics_oracle,
        },
        Criterion {
            id: "2",
            name: "worked metric instance",
            limit: instant,
            run: worked_metric_instance,
        },
        Criterion {
            id: "3",
            name: "encoding bijection",
            limit: instant,
            run: encoding_bijection,
        },
        Criterion {
            id: "4",
            name: "survey recommender accuracy",
            limit: Some(Duration::from_secs(30)),
            run: survey_recommender,
        },
        Criterion {
            id: "5",
            name: "ensemble balance and benefit",
            limit: Some(Duration::from_secs(60)),
            run: ensemble_balance_and_benefit,
        },
        Criterion {
            id: "6",
            name: "self-paced allocation closed form",
            limit: instant,
            run: allocation_closed_form,
        },
        Criterion {
            id: "7",
            name: "split exactness",
            limit: Some(Duration::from_secs(5)),
            run: split_exactness,
        },
        Criterion {
            id: "8",
            name: "image layer",
            limit: Some(Duration::from_secs(5)),
            run: image_layer,
        },
        Criterion {
            id: "9",
            name: "tree determinism",
            limit: instant,
            run: tree_determinism,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS [{}] {}: {detail} ({took:.2?})", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {}: {why} ({took:.2?})", c.id, c.name);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
