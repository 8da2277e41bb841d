//! Raster input and classical color features: PPM (P3/P6) I/O, k-means
//! dominant-color labeling against a named palette, and RGB histograms.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Attribute;

pub type Rgb = [u8; 3];

/// Maximum k-means passes before giving up on convergence.
pub const KMEANS_MAX_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width.checked_mul(height) != Some(pixels.len()) {
            return Err(Error::InvalidParameter(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width.saturating_mul(height),
                pixels.len()
            )));
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        RasterImage {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PpmFormat {
    /// ASCII samples.
    P3,
    /// Binary samples.
    P6,
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next unsigned decimal token, or `None` at end of input.
    fn number(&mut self) -> std::result::Result<Option<u64>, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.bytes.get(self.pos) {
                None => Ok(None),
                Some(&b) => Err(format!("unexpected byte 0x{b:02x} at offset {}", self.pos)),
            };
        }
        if self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            return Err(format!("unexpected byte after number at offset {}", self.pos));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(Some)
            .ok_or_else(|| "number out of range".to_string())
    }

    fn header_field(&mut self, what: &str) -> Result<u64> {
        self.number()
            .map_err(Error::BadHeader)?
            .ok_or_else(|| Error::BadHeader(format!("missing {what}")))
    }
}

/// Decodes a P3 or P6 file with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let format = match bytes.get(..2) {
        Some(b"P3") => PpmFormat::P3,
        Some(b"P6") => PpmFormat::P6,
        _ => return Err(Error::BadMagic),
    };
    if bytes.get(2).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        return Err(Error::BadMagic);
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.header_field("width")? as usize;
    let height = cur.header_field("height")? as usize;
    let maxval = cur.header_field("maxval")?;
    if maxval != 255 {
        return Err(Error::MaxvalUnsupported(maxval.min(u64::from(u32::MAX)) as u32));
    }
    let count = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(3).is_some())
        .ok_or_else(|| Error::BadHeader("image dimensions overflow".into()))?;
    let expected = count * 3;

    let samples: Vec<u8> = match format {
        PpmFormat::P6 => {
            let data_start = match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos + 1,
                None if expected == 0 => cur.pos,
                None => return Err(Error::TruncatedPixelData { expected, found: 0 }),
                Some(_) => return Err(Error::BadHeader("maxval must be followed by whitespace".into())),
            };
            let data = &bytes[data_start..];
            if data.len() < expected {
                return Err(Error::TruncatedPixelData {
                    expected,
                    found: data.len(),
                });
            }
            data[..expected].to_vec()
        }
        PpmFormat::P3 => {
            let mut out = Vec::with_capacity(expected);
            while out.len() < expected {
                match cur.number().map_err(Error::BadPixelData)? {
                    Some(v) if v <= 255 => out.push(v as u8),
                    Some(v) => return Err(Error::BadPixelData(format!("sample {v} exceeds maxval"))),
                    None => {
                        return Err(Error::TruncatedPixelData {
                            expected,
                            found: out.len(),
                        })
                    }
                }
            }
            out
        }
    };
    let pixels = samples.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RasterImage::new(width, height, pixels)
}

pub fn write_ppm(image: &RasterImage, format: PpmFormat) -> Vec<u8> {
    let magic = match format {
        PpmFormat::P3 => "P3",
        PpmFormat::P6 => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    match format {
        PpmFormat::P6 => out.extend(image.pixels.iter().flatten()),
        PpmFormat::P3 => {
            // one pixel per line keeps every line under the 70-column limit
            for [r, g, b] in &image.pixels {
                out.extend_from_slice(format!("{r} {g} {b}\n").as_bytes());
            }
        }
    }
    out
}

pub fn load_ppm(path: impl AsRef<std::path::Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub label: String,
    pub anchor: Rgb,
}

/// Named anchor colors; the dominant cluster maps to the nearest anchor's label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PaletteEntry>", into = "Vec<PaletteEntry>")]
pub struct ColorPalette {
    entries: Vec<PaletteEntry>,
}

impl TryFrom<Vec<PaletteEntry>> for ColorPalette {
    type Error = Error;

    fn try_from(entries: Vec<PaletteEntry>) -> Result<Self> {
        ColorPalette::new(entries)
    }
}

impl From<ColorPalette> for Vec<PaletteEntry> {
    fn from(p: ColorPalette) -> Self {
        p.entries
    }
}

impl ColorPalette {
    pub fn new(entries: Vec<PaletteEntry>) -> Result<Self> {
        let labels: BTreeSet<&str> = entries.iter().map(|e| e.label.as_str()).collect();
        let anchors: BTreeSet<Rgb> = entries.iter().map(|e| e.anchor).collect();
        if labels.len() != entries.len() {
            return Err(Error::InvalidPalette("duplicate label".into()));
        }
        if anchors.len() != entries.len() {
            return Err(Error::InvalidPalette("duplicate anchor color".into()));
        }
        Ok(ColorPalette { entries })
    }

    /// warm = (255,128,0), cool = (0,128,255).
    pub fn warm_cool() -> Self {
        ColorPalette {
            entries: vec![
                PaletteEntry {
                    label: "warm".into(),
                    anchor: [255, 128, 0],
                },
                PaletteEntry {
                    label: "cool".into(),
                    anchor: [0, 128, 255],
                },
            ],
        }
    }

    pub fn entries(&self) -> &[PaletteEntry] {
        &self.entries
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that the labels are exactly the attribute's vocabulary.
    pub fn check_covers(&self, attribute: &Attribute) -> Result<()> {
        let ours: BTreeSet<&str> = self.entries.iter().map(|e| e.label.as_str()).collect();
        let theirs: BTreeSet<&str> = attribute.values.iter().map(String::as_str).collect();
        if ours != theirs {
            return Err(Error::InvalidPalette(format!(
                "labels {ours:?} do not match {:?} vocabulary {theirs:?}",
                attribute.name
            )));
        }
        Ok(())
    }

    /// Label of the nearest anchor (squared Euclidean); earlier entries win ties.
    pub fn nearest(&self, color: [f64; 3]) -> Result<&str> {
        let mut best: Option<(&PaletteEntry, f64)> = None;
        for e in &self.entries {
            let d = sq_dist(color, to_f64(e.anchor));
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((e, d));
            }
        }
        best.map(|(e, _)| e.label.as_str()).ok_or(Error::EmptyPalette)
    }
}

fn to_f64(c: Rgb) -> [f64; 3] {
    [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])]
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorClusters {
    pub centroids: Vec<[f64; 3]>,
    /// Pixels assigned to each centroid.
    pub populations: Vec<u64>,
    pub iterations: usize,
}

impl ColorClusters {
    /// Index of the most populous cluster, lowest index on ties.
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.populations.iter().enumerate() {
            if p > self.populations[best] {
                best = i;
            }
        }
        best
    }
}

/// Lloyd's k-means over the image's pixel colors in RGB space.
///
/// Works on the multiset of colors, so pixel order never matters. Initial
/// centroids are `k` distinct colors chosen by `seed` from the sorted
/// distinct-color list (all of them, cycled, when there are at most `k`).
/// Stops when assignments no longer change or after
/// [`KMEANS_MAX_ITERATIONS`]. An empty cluster keeps its previous centroid.
pub fn kmeans_colors(image: &RasterImage, k: usize, seed: u64) -> Result<ColorClusters> {
    if image.is_empty() {
        return Err(Error::EmptyImage);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut counts: BTreeMap<Rgb, u64> = BTreeMap::new();
    for px in &image.pixels {
        *counts.entry(*px).or_default() += 1;
    }
    let colors: Vec<(Rgb, u64)> = counts.into_iter().collect();

    let mut centroids: Vec<[f64; 3]> = if colors.len() <= k {
        (0..k).map(|i| to_f64(colors[i % colors.len()].0)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, colors.len(), k).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| to_f64(colors[i].0)).collect()
    };

    let nearest = |c: [f64; 3], centroids: &[[f64; 3]]| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, m) in centroids.iter().enumerate() {
            let d = sq_dist(c, *m);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    };

    let mut assignment: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERATIONS {
        let next: Vec<usize> = colors.iter().map(|(c, _)| nearest(to_f64(*c), &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        iterations += 1;
        let mut sums = vec![[0u64; 3]; k];
        let mut weights = vec![0u64; k];
        for ((c, n), &j) in colors.iter().zip(&assignment) {
            for ch in 0..3 {
                sums[j][ch] += u64::from(c[ch]) * n;
            }
            weights[j] += n;
        }
        for j in 0..k {
            if weights[j] > 0 {
                let w = weights[j] as f64;
                centroids[j] = [sums[j][0] as f64 / w, sums[j][1] as f64 / w, sums[j][2] as f64 / w];
            }
        }
    }
    if assignment.is_empty() {
        assignment = colors.iter().map(|(c, _)| nearest(to_f64(*c), &centroids)).collect();
    }
    let mut populations = vec![0u64; k];
    for ((_, n), &j) in colors.iter().zip(&assignment) {
        populations[j] += n;
    }
    Ok(ColorClusters {
        centroids,
        populations,
        iterations,
    })
}

/// Palette label nearest to the centroid of the most populous color cluster.
pub fn dominant_color(image: &RasterImage, palette: &ColorPalette, k: usize, seed: u64) -> Result<String> {
    if image.is_empty() {
        return Err(Error::EmptyImage);
    }
    if palette.entries.is_empty() {
        return Err(Error::EmptyPalette);
    }
    let clusters = kmeans_colors(image, k, seed)?;
    palette
        .nearest(clusters.centroids[clusters.dominant()])
        .map(str::to_string)
}

/// Joint RGB histogram with `bins` levels per channel (`bins³` entries),
/// normalized to sum to 1.
pub fn rgb_histogram(image: &RasterImage, bins: usize) -> Result<Vec<f64>> {
    if image.is_empty() {
        return Err(Error::EmptyImage);
    }
    if !(1..=256).contains(&bins) {
        return Err(Error::InvalidParameter(format!("bins per channel must be in 1..=256, got {bins}")));
    }
    let q = |c: u8| usize::from(c) * bins / 256;
    let mut counts = vec![0u64; bins * bins * bins];
    for &[r, g, b] in &image.pixels {
        counts[(q(r) * bins + q(g)) * bins + q(b)] += 1;
    }
    let n = image.pixels.len() as f64;
    let mut hist: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    // fold the rounding residue into the largest bin
    let residue = 1.0 - hist.iter().sum::<f64>();
    if residue != 0.0 {
        let (imax, _) = counts
            .iter()
            .enumerate()
            .max_by_key(|(i, &c)| (c, std::cmp::Reverse(*i)))
            .expect("non-empty histogram");
        hist[imax] += residue;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn red() -> RasterImage {
        RasterImage::filled(1, 1, [255, 0, 0])
    }

    #[test]
    fn p6_single_pixel() {
        let img = parse_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(img, red());
    }

    #[test]
    fn header_comments_allowed() {
        let img = parse_ppm(b"P3 # magic\n# size next\n1 # w\n1\n255 # max\n255 0 # red\n0\n").unwrap();
        assert_eq!(img, red());
    }

    #[test]
    fn truncated_p6_and_p3() {
        let err = parse_ppm(b"P6\n2 2\n255\n\x01\x02\x03\x04\x05\x06\x07\x08\x09").unwrap_err();
        assert!(matches!(err, Error::TruncatedPixelData { expected: 12, found: 9 }));
        let err = parse_ppm(b"P3\n2 2\n255\n1 2 3 4 5 6 7 8 9\n").unwrap_err();
        assert!(matches!(err, Error::TruncatedPixelData { expected: 12, found: 9 }));
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_ppm(b"P5\n1 1\n255\n\0"), Err(Error::BadMagic)));
        assert!(matches!(parse_ppm(b""), Err(Error::BadMagic)));
        assert!(matches!(parse_ppm(b"P6\n1 1\n65535\n"), Err(Error::MaxvalUnsupported(65535))));
        assert!(matches!(parse_ppm(b"P6\n1 x\n255\n"), Err(Error::BadHeader(_))));
        assert!(matches!(parse_ppm(b"P6\n1 1\n"), Err(Error::BadHeader(_))));
        assert!(matches!(parse_ppm(b"P3\n1 1\n255\n256 0 0\n"), Err(Error::BadPixelData(_))));
    }

    #[test]
    fn zero_size_round_trip() {
        let img = RasterImage::new(0, 0, vec![]).unwrap();
        for fmt in [PpmFormat::P3, PpmFormat::P6] {
            let bytes = write_ppm(&img, fmt);
            assert!(bytes.ends_with(b"0 0\n255\n"));
            assert_eq!(parse_ppm(&bytes).unwrap(), img);
        }
    }

    #[test]
    fn red_round_trip() {
        for fmt in [PpmFormat::P3, PpmFormat::P6] {
            assert_eq!(parse_ppm(&write_ppm(&red(), fmt)).unwrap(), red());
        }
    }

    #[test]
    fn raster_checks_pixel_count() {
        assert!(RasterImage::new(2, 2, vec![[0; 3]; 3]).is_err());
    }

    #[test]
    fn dominant_uniform_images() {
        let pal = ColorPalette::warm_cool();
        let img = RasterImage::filled(4, 4, [255, 0, 0]);
        assert_eq!(dominant_color(&img, &pal, 3, 0).unwrap(), "warm");
        let img = RasterImage::filled(4, 4, [0, 128, 255]);
        assert_eq!(dominant_color(&img, &pal, 1, 0).unwrap(), "cool");
    }

    #[test]
    fn dominant_seventy_thirty() {
        let mut px = vec![[250, 60, 30]; 70];
        px.extend(vec![[20, 40, 230]; 30]);
        let img = RasterImage::new(10, 10, px).unwrap();
        let clusters = kmeans_colors(&img, 2, 4).unwrap();
        assert_eq!(clusters.populations.iter().sum::<u64>(), 100);
        let d = clusters.dominant();
        assert_eq!(clusters.populations[d], 70);
        assert_eq!(clusters.centroids[d], [250.0, 60.0, 30.0]);
        assert_eq!(dominant_color(&img, &ColorPalette::warm_cool(), 2, 4).unwrap(), "warm");
    }

    #[test]
    fn dominant_errors() {
        let empty = RasterImage::new(0, 3, vec![]).unwrap();
        let pal = ColorPalette::warm_cool();
        assert!(matches!(dominant_color(&empty, &pal, 2, 0), Err(Error::EmptyImage)));
        let none = ColorPalette::new(vec![]).unwrap();
        assert!(matches!(dominant_color(&red(), &none, 2, 0), Err(Error::EmptyPalette)));
        assert!(dominant_color(&red(), &pal, 0, 0).is_err());
    }

    #[test]
    fn palette_validation() {
        let dup = vec![
            PaletteEntry { label: "a".into(), anchor: [0, 0, 0] },
            PaletteEntry { label: "b".into(), anchor: [0, 0, 0] },
        ];
        assert!(ColorPalette::new(dup).is_err());
        let json = r#"[{"label":"warm","anchor":[255,128,0]},{"label":"cool","anchor":[0,128,255]}]"#;
        let p = ColorPalette::from_json(json).unwrap();
        assert_eq!(p, ColorPalette::warm_cool());
        let attr = Attribute::new("dominant_color", ["warm", "cool"]);
        p.check_covers(&attr).unwrap();
        assert!(p.check_covers(&Attribute::new("dominant_color", ["warm", "neutral"])).is_err());
    }

    #[test]
    fn nearest_tie_goes_to_earlier_entry() {
        let p = ColorPalette::new(vec![
            PaletteEntry { label: "x".into(), anchor: [0, 0, 0] },
            PaletteEntry { label: "y".into(), anchor: [2, 0, 0] },
        ])
        .unwrap();
        assert_eq!(p.nearest([1.0, 0.0, 0.0]).unwrap(), "x");
    }

    #[test]
    fn histogram_cases() {
        let img = RasterImage::filled(3, 3, [10, 200, 90]);
        for b in [1, 2, 4, 8] {
            let h = rgb_histogram(&img, b).unwrap();
            assert_eq!(h.len(), b * b * b);
            assert_eq!(h.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(h.iter().filter(|&&v| v == 0.0).count(), b * b * b - 1);
        }
        let half = RasterImage::new(2, 2, vec![[255, 0, 0], [255, 0, 0], [0, 0, 255], [0, 0, 255]]).unwrap();
        let h = rgb_histogram(&half, 2).unwrap();
        // red -> (1,0,0) -> 4; blue -> (0,0,1) -> 1
        assert_eq!(h, vec![0.0, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(rgb_histogram(&half, 1).unwrap(), vec![1.0]);
        assert!(matches!(
            rgb_histogram(&RasterImage::new(0, 0, vec![]).unwrap(), 2),
            Err(Error::EmptyImage)
        ));
        assert!(rgb_histogram(&half, 0).is_err());
    }
}
