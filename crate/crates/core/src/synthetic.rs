//! Deterministic synthetic data: rule-labelled surveys, imbalanced point
//! clouds and scene images. Used by the test suites and by the CLI's
//! `synth-*` commands to produce demo fixtures.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{FoodLabel, ImageManifestEntry, SurveyRecord};
use crate::error::Result;
use crate::image::{dominant_color, ColorPalette, RasterImage, Rgb};
use crate::schema::{enumerate_combinations, AttributeSchema, AttributeTuple};

/// Seed that fixes which 75 of the 120 environment combinations are "viable".
pub const VIABLE_SEED: u64 = 0x5eed_0075;
pub const VIABLE_COUNT: usize = 75;

/// 75 environment combinations drawn once from the 120, in enumeration order.
pub fn viable_combinations() -> Vec<AttributeTuple> {
    let schema = AttributeSchema::default_schema(false);
    let all = enumerate_combinations(&schema, None).expect("unfiltered enumeration");
    let mut rng = ChaCha8Rng::seed_from_u64(VIABLE_SEED);
    let mut picked = index::sample(&mut rng, all.len(), VIABLE_COUNT).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

/// The reference preference rule over (scene, weather, period, dominant_color).
///
/// Snow always means meat; otherwise the scene decides, with beach evenings
/// going to fish.
pub fn food_rule(tuple: &AttributeTuple) -> FoodLabel {
    let scene = tuple.get(0).unwrap_or("");
    let weather = tuple.get(1).unwrap_or("");
    let period = tuple.get(2).unwrap_or("");
    if weather == "snowy" {
        return FoodLabel::Meat;
    }
    match scene {
        "beach" if period == "evening" => FoodLabel::Fish,
        "beach" | "park" => FoodLabel::Fruit,
        "restaurant" | "street" => FoodLabel::Pizza,
        _ => FoodLabel::Meat,
    }
}

/// Labels each combination with [`food_rule`], then replaces each label
/// with probability `noise` by a different, uniformly chosen food.
pub fn survey(combinations: &[AttributeTuple], noise: f64, seed: u64) -> Vec<SurveyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    combinations
        .iter()
        .map(|t| {
            let mut food = food_rule(t);
            if rng.gen::<f64>() < noise {
                let others: Vec<FoodLabel> = FoodLabel::ALL.iter().copied().filter(|f| *f != food).collect();
                food = *others.choose(&mut rng).expect("three alternatives");
            }
            SurveyRecord { tuple: t.clone(), food }
        })
        .collect()
}

/// Two overlapping Gaussian clouds in 2-D plus a sprinkling of majority
/// points inside the minority region, the setting where a single deep tree
/// carves the minority class into fragments.
#[derive(Clone, Copy, Debug)]
pub struct CloudSpec {
    pub n_majority: usize,
    pub n_minority: usize,
    pub minority_center: [f64; 2],
    pub minority_spread: f64,
    /// Fraction of majority points drawn from the minority cloud instead.
    pub majority_intrusion: f64,
}

impl Default for CloudSpec {
    fn default() -> Self {
        CloudSpec {
            n_majority: 2000,
            n_minority: 100,
            minority_center: [2.5, 2.5],
            minority_spread: 0.6,
            majority_intrusion: 0.04,
        }
    }
}

/// Returns `(features, is_minority)` with majority rows first.
pub fn two_clouds(spec: &CloudSpec, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut x = Vec::with_capacity(spec.n_majority + spec.n_minority);
    let mut y = Vec::with_capacity(x.capacity());
    let minority_point = |rng: &mut ChaCha8Rng| {
        vec![
            spec.minority_center[0] + spec.minority_spread * unit.sample(rng),
            spec.minority_center[1] + spec.minority_spread * unit.sample(rng),
        ]
    };
    for _ in 0..spec.n_majority {
        let p = if rng.gen::<f64>() < spec.majority_intrusion {
            minority_point(&mut rng)
        } else {
            vec![unit.sample(&mut rng), unit.sample(&mut rng)]
        };
        x.push(p);
        y.push(false);
    }
    for _ in 0..spec.n_minority {
        x.push(minority_point(&mut rng));
        y.push(true);
    }
    (x, y)
}

/// Base colors per scene; images mix them with per-pixel jitter.
fn scene_palette(scene: &str) -> &'static [Rgb] {
    match scene {
        "beach" => &[[238, 214, 175], [70, 160, 230], [250, 240, 220]],
        "park" => &[[60, 150, 60], [110, 190, 90], [120, 90, 60]],
        "restaurant" => &[[150, 60, 40], [210, 150, 90], [240, 220, 190]],
        "street" => &[[110, 110, 115], [70, 70, 75], [200, 200, 205]],
        _ => &[[200, 180, 80], [90, 160, 70], [150, 200, 240]],
    }
}

fn weather_shift(weather: &str) -> i16 {
    match weather {
        "sunny" => 25,
        "rainy" => -35,
        "cloudy" => -15,
        "snowy" => 45,
        _ => 0,
    }
}

/// A `size`×`size` image whose colors depend on scene and weather.
pub fn scene_image(scene: &str, weather: &str, size: usize, rng: &mut impl Rng) -> RasterImage {
    let base = scene_palette(scene);
    let shift = weather_shift(weather);
    let pixels = (0..size * size)
        .map(|_| {
            let c = base[rng.gen_range(0..base.len())];
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let jitter: i16 = rng.gen_range(-20..=20);
                px[ch] = (i16::from(c[ch]) + shift + jitter).clamp(0, 255) as u8;
            }
            px
        })
        .collect();
    RasterImage::new(size, size, pixels).expect("size*size pixels")
}

/// Generates `per_class` images for every scene, with random weather,
/// period and age labels and a dominant-color label computed from pixels.
/// Returns `(relative file name, image, manifest entry)` triples.
pub fn scene_dataset(
    schema: &AttributeSchema,
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<(String, RasterImage, ImageManifestEntry)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |name: &str, rng: &mut ChaCha8Rng| -> Option<String> {
        schema
            .attribute(name)
            .map(|a| a.values[rng.gen_range(0..a.values.len())].clone())
    };
    let scenes = schema
        .attribute(crate::schema::SCENE)
        .map(|a| a.values.clone())
        .unwrap_or_default();
    let palette = ColorPalette::warm_cool();
    let mut out = Vec::new();
    for scene in &scenes {
        for i in 0..per_class {
            let mut labels = std::collections::BTreeMap::new();
            labels.insert(crate::schema::SCENE.to_string(), scene.clone());
            let weather = pick(crate::schema::WEATHER, &mut rng).unwrap_or_default();
            let img = scene_image(scene, &weather, size, &mut rng);
            if !weather.is_empty() {
                labels.insert(crate::schema::WEATHER.to_string(), weather);
            }
            for attr in [crate::schema::PERIOD, crate::schema::AGE] {
                if let Some(v) = pick(attr, &mut rng) {
                    labels.insert(attr.to_string(), v);
                }
            }
            if schema.attribute(crate::schema::DOMINANT_COLOR).is_some() {
                labels.insert(
                    crate::schema::DOMINANT_COLOR.to_string(),
                    dominant_color(&img, &palette, 3, seed)?,
                );
            }
            let name = format!("{scene}_{i:03}.ppm");
            out.push((
                name.clone(),
                img,
                ImageManifestEntry {
                    path: name.into(),
                    labels,
                },
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viable_set_is_stable() {
        let v = viable_combinations();
        assert_eq!(v.len(), 75);
        assert_eq!(v, viable_combinations());
        let mut sorted = v.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 75);
    }

    #[test]
    fn rule_covers_all_foods() {
        let all = enumerate_combinations(&AttributeSchema::default_schema(false), None).unwrap();
        for f in FoodLabel::ALL {
            assert!(all.iter().any(|t| food_rule(t) == f), "{f} unused");
        }
    }

    #[test]
    fn noise_free_survey_follows_rule() {
        let v = viable_combinations();
        let s = survey(&v, 0.0, 3);
        assert!(s.iter().all(|r| r.food == food_rule(&r.tuple)));
        let noisy = survey(&v, 1.0, 3);
        assert!(noisy.iter().all(|r| r.food != food_rule(&r.tuple)));
    }

    #[test]
    fn clouds_have_requested_sizes() {
        let (x, y) = two_clouds(&CloudSpec::default(), 1);
        assert_eq!(x.len(), 2100);
        assert_eq!(y.iter().filter(|&&m| m).count(), 100);
    }
}
