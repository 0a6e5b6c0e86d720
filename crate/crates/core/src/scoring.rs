//! Regional attribute scores in [-1, 1].
//!
//! All four scorers are population statistics over the multiset of region
//! pixels, so they are computed from a color histogram. The retouch solver
//! reuses the same histogram path when it re-scores transformed regions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{luma_of, Image};
use crate::segmentation::{RegionId, SegmentationMap};

pub const ATTRIBUTE_COUNT: usize = 4;

/// The four controllable attributes, in their fixed channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Colorfulness = 0,
    Contrast = 1,
    Temperature = 2,
    Brightness = 3,
}

impl Attribute {
    pub const ALL: [Attribute; ATTRIBUTE_COUNT] = [
        Attribute::Colorfulness,
        Attribute::Contrast,
        Attribute::Temperature,
        Attribute::Brightness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Result<Self> {
        Self::ALL
            .get(k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("attribute index {k} out of range 0..{ATTRIBUTE_COUNT}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Colorfulness => "colorfulness",
            Attribute::Contrast => "contrast",
            Attribute::Temperature => "temperature",
            Attribute::Brightness => "brightness",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown attribute {s:?}")))
    }
}

/// One score per attribute, serialized by name in channel order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeVector {
    pub colorfulness: f64,
    pub contrast: f64,
    pub temperature: f64,
    pub brightness: f64,
}

impl AttributeVector {
    pub const MIDPOINT: AttributeVector = AttributeVector {
        colorfulness: 0.0,
        contrast: 0.0,
        temperature: 0.0,
        brightness: 0.0,
    };

    pub fn from_array(a: [f64; ATTRIBUTE_COUNT]) -> Self {
        Self {
            colorfulness: a[0],
            contrast: a[1],
            temperature: a[2],
            brightness: a[3],
        }
    }

    pub fn to_array(self) -> [f64; ATTRIBUTE_COUNT] {
        [self.colorfulness, self.contrast, self.temperature, self.brightness]
    }

    pub fn get(&self, attr: Attribute) -> f64 {
        self.to_array()[attr.index()]
    }

    pub fn set(&mut self, attr: Attribute, value: f64) {
        let mut a = self.to_array();
        a[attr.index()] = value;
        *self = Self::from_array(a);
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_array(self.to_array().map(f))
    }

    pub fn zip_with(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let a = self.to_array();
        let b = other.to_array();
        Self::from_array(std::array::from_fn(|k| f(a[k], b[k])))
    }

    pub fn clamped(self) -> Self {
        self.map(|v| v.clamp(-1.0, 1.0))
    }

    pub fn in_range(&self) -> bool {
        self.to_array().iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionScores {
    pub region: RegionId,
    pub scores: AttributeVector,
}

/// Normalization anchors for the scorers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreAnchors {
    /// Luma standard deviation that maps to contrast +1.
    pub contrast_sigma: f64,
    /// Hasler-Suesstrunk M that maps to colorfulness +1.
    pub colorfulness_m: f64,
    /// Mean R - B difference (8-bit units) that maps to temperature +1.
    pub temperature_span: f64,
}

impl Default for ScoreAnchors {
    fn default() -> Self {
        Self {
            contrast_sigma: 0.30,
            colorfulness_m: 109.0,
            temperature_span: 128.0,
        }
    }
}

/// Unique colors of a region with their pixel counts, sorted by color.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorHistogram {
    pub entries: Vec<([u8; 3], u64)>,
}

impl ColorHistogram {
    pub fn from_pixels(pixels: impl IntoIterator<Item = [u8; 3]>) -> Self {
        let mut packed: Vec<u32> = pixels
            .into_iter()
            .map(|[r, g, b]| (r as u32) << 16 | (g as u32) << 8 | b as u32)
            .collect();
        packed.sort_unstable();
        let mut entries: Vec<([u8; 3], u64)> = Vec::new();
        for p in packed {
            let rgb = [(p >> 16) as u8, (p >> 8) as u8, p as u8];
            match entries.last_mut() {
                Some((c, n)) if *c == rgb => *n += 1,
                _ => entries.push((rgb, 1)),
            }
        }
        Self { entries }
    }

    pub fn of_region(img: &Image, seg: &SegmentationMap, region: RegionId) -> Self {
        Self::from_indices(img, &seg.pixel_indices(region))
    }

    pub fn from_indices(img: &Image, indices: &[usize]) -> Self {
        Self::from_pixels(indices.iter().map(|&i| img.pixel(i)))
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, n)| n).sum()
    }

    /// Applies `f` to each color, keeping counts.
    pub fn map_colors(&self, f: impl Fn([u8; 3]) -> [u8; 3]) -> Self {
        Self {
            entries: self.entries.iter().map(|&(c, n)| (f(c), n)).collect(),
        }
    }
}

/// Weighted mean and population standard deviation (two-pass).
fn weighted_stats(hist: &ColorHistogram, f: impl Fn([u8; 3]) -> f64) -> (f64, f64) {
    let total = hist.total() as f64;
    match hist.entries.as_slice() {
        [] => return (0.0, 0.0),
        [(c, _)] => return (f(*c), 0.0),
        _ => {}
    }
    let mean = hist.entries.iter().map(|&(c, n)| f(c) * n as f64).sum::<f64>() / total;
    let var = hist
        .entries
        .iter()
        .map(|&(c, n)| {
            let d = f(c) - mean;
            d * d * n as f64
        })
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

pub fn brightness_of(hist: &ColorHistogram) -> f64 {
    let (mean, _) = weighted_stats(hist, luma_of);
    (2.0 * mean - 1.0).clamp(-1.0, 1.0)
}

pub fn contrast_of(hist: &ColorHistogram, anchors: &ScoreAnchors) -> f64 {
    let (_, sigma) = weighted_stats(hist, luma_of);
    (2.0 * (sigma / anchors.contrast_sigma).min(1.0) - 1.0).clamp(-1.0, 1.0)
}

pub fn colorfulness_of(hist: &ColorHistogram, anchors: &ScoreAnchors) -> f64 {
    let (mu_rg, sd_rg) = weighted_stats(hist, |[r, g, _]| r as f64 - g as f64);
    let (mu_yb, sd_yb) = weighted_stats(hist, |[r, g, b]| (r as f64 + g as f64) / 2.0 - b as f64);
    let m = (sd_rg * sd_rg + sd_yb * sd_yb).sqrt() + 0.3 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt();
    (2.0 * (m / anchors.colorfulness_m).min(1.0) - 1.0).clamp(-1.0, 1.0)
}

pub fn temperature_of(hist: &ColorHistogram, anchors: &ScoreAnchors) -> f64 {
    let (mean_rb, _) = weighted_stats(hist, |[r, _, b]| r as f64 - b as f64);
    (mean_rb / anchors.temperature_span).clamp(-1.0, 1.0)
}

pub fn attribute_of(hist: &ColorHistogram, attr: Attribute, anchors: &ScoreAnchors) -> f64 {
    match attr {
        Attribute::Colorfulness => colorfulness_of(hist, anchors),
        Attribute::Contrast => contrast_of(hist, anchors),
        Attribute::Temperature => temperature_of(hist, anchors),
        Attribute::Brightness => brightness_of(hist),
    }
}

pub fn scores_of(hist: &ColorHistogram, anchors: &ScoreAnchors) -> AttributeVector {
    AttributeVector::from_array(Attribute::ALL.map(|a| attribute_of(hist, a, anchors)))
}

fn region_hist(img: &Image, seg: &SegmentationMap, region: RegionId) -> ColorHistogram {
    ColorHistogram::of_region(img, seg, region)
}

/// `2 * mean(luma) - 1` over the region.
pub fn score_brightness(img: &Image, seg: &SegmentationMap, region: RegionId) -> f64 {
    brightness_of(&region_hist(img, seg, region))
}

/// `2 * min(sigma_luma / 0.30, 1) - 1`.
pub fn score_contrast(img: &Image, seg: &SegmentationMap, region: RegionId) -> f64 {
    contrast_of(&region_hist(img, seg, region), &ScoreAnchors::default())
}

/// Hasler-Suesstrunk colorfulness scaled so that M = 109 maps to +1.
pub fn score_colorfulness(img: &Image, seg: &SegmentationMap, region: RegionId) -> f64 {
    colorfulness_of(&region_hist(img, seg, region), &ScoreAnchors::default())
}

/// `(mean(R) - mean(B)) / 128`, positive is warm.
pub fn score_temperature(img: &Image, seg: &SegmentationMap, region: RegionId) -> f64 {
    temperature_of(&region_hist(img, seg, region), &ScoreAnchors::default())
}

pub fn score_region(img: &Image, seg: &SegmentationMap, region: RegionId) -> AttributeVector {
    scores_of(&region_hist(img, seg, region), &ScoreAnchors::default())
}

/// Scores of every region, indexed by region id.
pub fn score_all_regions(img: &Image, seg: &SegmentationMap, anchors: &ScoreAnchors) -> Vec<AttributeVector> {
    let index = seg.index_by_region();
    par::map_slice(&index, |_, idx| scores_of(&ColorHistogram::from_indices(img, idx), anchors))
}

/// Scores of the whole image treated as one region.
pub fn score_image(img: &Image) -> AttributeVector {
    scores_of(&ColorHistogram::from_pixels(img.pixels()), &ScoreAnchors::default())
}
