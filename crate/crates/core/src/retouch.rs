//! The reference parametric generator.
//!
//! Each region's target scores are turned into per-attribute strengths by
//! bisection against the scorer, the strengths are feathered across region
//! boundaries, and four monotone transfer functions are applied per pixel in
//! a fixed order: temperature, brightness, contrast, colorfulness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::parammap::{rasterize_values, ParameterMap};
use crate::raster::{gaussian_blur, Image, Plane, LUMA_WEIGHTS};
use crate::scoring::{attribute_of, Attribute, ColorHistogram, ScoreAnchors, ATTRIBUTE_COUNT};
use crate::segmentation::{RegionId, SegmentationMap};

/// Order in which per-pixel transfers are composed.
pub const COMPOSITION_ORDER: [Attribute; ATTRIBUTE_COUNT] = [
    Attribute::Temperature,
    Attribute::Brightness,
    Attribute::Contrast,
    Attribute::Colorfulness,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Feather width in pixels; `None` means `max(2, 1% of the smaller side)`.
    pub feather_sigma: Option<f64>,
    pub max_iterations: u32,
    pub score_tolerance: f64,
    pub anchors: ScoreAnchors,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            feather_sigma: None,
            max_iterations: 24,
            score_tolerance: 0.02,
            anchors: ScoreAnchors::default(),
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.score_tolerance > 0.0) {
            return Err(Error::invalid("score_tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if let Some(s) = self.feather_sigma {
            if !(s >= 0.0) {
                return Err(Error::invalid("feather_sigma must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn feather_sigma_for(&self, width: u32, height: u32) -> f64 {
        self.feather_sigma
            .unwrap_or_else(|| (0.01 * width.min(height) as f64).max(2.0))
    }
}

#[inline]
fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// One transfer in normalized [0, 1] channel space. `u == 0` is an exact no-op.
#[inline]
pub(crate) fn transfer_unit(rgb: [f64; 3], attr: Attribute, u: f64) -> [f64; 3] {
    if u == 0.0 {
        return rgb;
    }
    match attr {
        Attribute::Brightness => {
            let gain = u.exp2();
            rgb.map(|v| clamp01(v * gain))
        }
        Attribute::Contrast => {
            let k = 1.0 + 0.8 * u;
            rgb.map(|v| clamp01(0.5 + (v - 0.5) * k))
        }
        Attribute::Colorfulness => {
            let k = 1.0 + 0.8 * u;
            let y = LUMA_WEIGHTS[0] * rgb[0] + LUMA_WEIGHTS[1] * rgb[1] + LUMA_WEIGHTS[2] * rgb[2];
            rgb.map(|v| clamp01(y + (v - y) * k))
        }
        Attribute::Temperature => [
            clamp01(rgb[0] * (1.0 + 0.3 * u)),
            rgb[1],
            clamp01(rgb[2] * (1.0 - 0.3 * u)),
        ],
    }
}

#[inline]
fn normalize(rgb: [u8; 3]) -> [f64; 3] {
    rgb.map(|c| c as f64 / 255.0)
}

#[inline]
fn quantize(rgb: [f64; 3]) -> [u8; 3] {
    rgb.map(|v| (clamp01(v) * 255.0).round() as u8)
}

/// Applies one attribute transfer with strength `u` in [-1, 1] and re-quantizes.
pub fn transfer(pixel: [u8; 3], attr: Attribute, u: f64) -> Result<[u8; 3]> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("strength {u} outside [-1, 1]")));
    }
    Ok(transfer_quantized(pixel, attr, u))
}

#[inline]
fn transfer_quantized(pixel: [u8; 3], attr: Attribute, u: f64) -> [u8; 3] {
    if u == 0.0 {
        return pixel;
    }
    quantize(transfer_unit(normalize(pixel), attr, u))
}

/// Applies all four strengths (indexed by attribute) in composition order.
#[inline]
pub fn compose(pixel: [u8; 3], strengths: [f64; ATTRIBUTE_COUNT]) -> [u8; 3] {
    if strengths.iter().all(|&u| u == 0.0) {
        return pixel;
    }
    let mut v = normalize(pixel);
    for attr in COMPOSITION_ORDER {
        v = transfer_unit(v, attr, strengths[attr.index()]);
    }
    quantize(v)
}

/// Per-region soft weights forming a partition of unity at every pixel.
#[derive(Clone, Debug)]
pub struct FeatherField {
    pub weights: Vec<Plane>,
}

impl FeatherField {
    pub fn weight(&self, region: RegionId, x: u32, y: u32) -> f64 {
        self.weights[region as usize].get(x, y)
    }
}

/// Blurs each region indicator and renormalizes pixelwise. `sigma == 0`
/// yields the binary indicators.
pub fn feather(seg: &SegmentationMap, sigma: f64) -> Result<FeatherField> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("feather sigma must be non-negative, got {sigma}")));
    }
    let indicators: Vec<Plane> = (0..seg.region_count())
        .map(|r| Plane {
            width: seg.width(),
            height: seg.height(),
            values: seg
                .labels()
                .iter()
                .map(|&l| if l as usize == r { 1.0 } else { 0.0 })
                .collect(),
        })
        .collect();
    if sigma == 0.0 {
        return Ok(FeatherField { weights: indicators });
    }
    let mut weights = indicators
        .iter()
        .map(|p| gaussian_blur(p, sigma))
        .collect::<Result<Vec<_>>>()?;
    let n = seg.labels().len();
    for i in 0..n {
        let total: f64 = weights.iter().map(|w| w.values[i]).sum();
        for w in &mut weights {
            w.values[i] /= total;
        }
    }
    Ok(FeatherField { weights })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrengthSolution {
    pub strength: f64,
    /// Score of the region after applying `strength`.
    pub achieved: f64,
    /// The target is unattainable, or sits on a clamp boundary the region is
    /// already pinned against.
    pub saturated: bool,
    pub evaluations: u32,
}

/// Bisection for the strength that moves `attr` of the histogram to `target`.
/// Attributes are solved independently; their interaction after composition
/// is left to the agent's feedback loop.
pub fn solve_on_histogram(
    hist: &ColorHistogram,
    attr: Attribute,
    target: f64,
    cfg: &TransferConfig,
) -> StrengthSolution {
    solve_scalar(
        |u| {
            if u == 0.0 {
                attribute_of(hist, attr, &cfg.anchors)
            } else {
                attribute_of(&hist.map_colors(|c| transfer_quantized(c, attr, u)), attr, &cfg.anchors)
            }
        },
        target,
        cfg,
    )
}

/// Bisection on a score that is monotone non-decreasing in `u`. `u = 0` is
/// tried first so targets already met give exactly zero.
fn solve_scalar(mut score_fn: impl FnMut(f64) -> f64, target: f64, cfg: &TransferConfig) -> StrengthSolution {
    let tol = cfg.score_tolerance;
    let mut evaluations = 0u32;
    let mut score = |u: f64| {
        evaluations += 1;
        score_fn(u)
    };

    let s0 = score(0.0);
    let f0 = s0 - target;
    let (strength, achieved) = if f0.abs() <= tol {
        (0.0, s0)
    } else {
        let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
        let s_ext = score(dir);
        let f_ext = s_ext - target;
        if f_ext.signum() == f0.signum() && f_ext.abs() > tol {
            // cannot cross the target even at full strength
            (dir, s_ext)
        } else {
            bisect(&mut score, target, tol, cfg.max_iterations, dir, (dir, s_ext))
        }
    };

    let mut saturated = (achieved - target).abs() > tol;
    if !saturated && target.abs() >= 1.0 - tol {
        let toward = target.signum();
        if strength == toward || (score(toward) - achieved) * toward <= tol {
            saturated = true;
        }
    }
    StrengthSolution {
        strength,
        achieved,
        saturated,
        evaluations,
    }
}

/// Bisects on [0, dir] (sign change known) and returns the best point seen.
fn bisect(
    score: &mut impl FnMut(f64) -> f64,
    target: f64,
    tol: f64,
    max_iterations: u32,
    dir: f64,
    endpoint: (f64, f64),
) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, dir);
    let mut best = endpoint;
    for _ in 0..max_iterations {
        let mid = 0.5 * (lo + hi);
        let s = score(mid);
        let f = s - target;
        if f.abs() < (best.1 - target).abs() {
            best = (mid, s);
        }
        if f.abs() <= tol {
            return (mid, s);
        }
        // f < 0 means the score is still short of the target in the +u direction
        if (f < 0.0) == (dir > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Solves the strength for one region of `img` (unfeathered).
pub fn solve_strength(
    img: &Image,
    seg: &SegmentationMap,
    region: RegionId,
    attr: Attribute,
    target: f64,
    cfg: &TransferConfig,
) -> Result<StrengthSolution> {
    if !(-1.0..=1.0).contains(&target) {
        return Err(Error::invalid(format!("target {target} outside [-1, 1]")));
    }
    seg.require_region(region)?;
    if !seg.matches(img) {
        return Err(Error::invalid("segmentation does not match image size"));
    }
    let hist = ColorHistogram::of_region(img, seg, region);
    Ok(solve_on_histogram(&hist, attr, target, cfg))
}

#[derive(Clone, Debug)]
pub struct RenderReport {
    pub image: Image,
    /// Per region, per attribute (channel order).
    pub solutions: Vec<[StrengthSolution; ATTRIBUTE_COUNT]>,
}

impl RenderReport {
    pub fn any_saturated(&self) -> bool {
        self.solutions.iter().flatten().any(|s| s.saturated)
    }
}

/// Renders `input` so each region's scores move toward `map`'s targets.
pub fn render_detailed(input: &Image, map: &ParameterMap, cfg: &TransferConfig) -> Result<RenderReport> {
    cfg.validate()?;
    let seg = map.seg();
    if !seg.matches(input) {
        return Err(Error::invalid(format!(
            "map is {}x{}, image is {}x{}",
            seg.width(),
            seg.height(),
            input.width(),
            input.height()
        )));
    }
    let index = seg.index_by_region();
    let solutions: Vec<[StrengthSolution; ATTRIBUTE_COUNT]> = par::map_slice(&index, |r, idx| {
        let hist = ColorHistogram::from_indices(input, idx);
        let targets = map.scores()[r];
        Attribute::ALL.map(|a| solve_on_histogram(&hist, a, targets.get(a), cfg))
    });

    let sigma = cfg.feather_sigma_for(input.width(), input.height());
    let planes: Vec<Option<Plane>> = (0..ATTRIBUTE_COUNT)
        .map(|k| {
            let per_region: Vec<f64> = solutions.iter().map(|s| s[k].strength).collect();
            strength_plane(seg, &per_region, sigma)
        })
        .collect::<Result<_>>()?;

    let w = input.width() as usize;
    let src = input.as_raw();
    let mut out = vec![0u8; src.len()];
    par::for_each_chunk(&mut out, w * 3, |y, row| {
        for x in 0..w {
            let i = y * w + x;
            let strengths: [f64; ATTRIBUTE_COUNT] =
                std::array::from_fn(|k| planes[k].as_ref().map_or(0.0, |p| p.values[i]));
            let px = compose([src[i * 3], src[i * 3 + 1], src[i * 3 + 2]], strengths);
            row[x * 3..x * 3 + 3].copy_from_slice(&px);
        }
    });

    Ok(RenderReport {
        image: Image::from_rgb(input.width(), input.height(), out)?,
        solutions,
    })
}

/// Feathered strength plane for one attribute; `None` when every region is 0.
/// Blurring the piecewise-constant raster equals `sum_r w_r(p) * u_r` because
/// the blurred indicators already sum to one.
fn strength_plane(seg: &SegmentationMap, per_region: &[f64], sigma: f64) -> Result<Option<Plane>> {
    if per_region.iter().all(|&u| u == 0.0) {
        return Ok(None);
    }
    let raster = rasterize_values(seg, per_region);
    if sigma == 0.0 || per_region.windows(2).all(|w| w[0] == w[1]) {
        return Ok(Some(raster));
    }
    gaussian_blur(&raster, sigma).map(Some)
}

pub fn render(input: &Image, map: &ParameterMap, cfg: &TransferConfig) -> Result<Image> {
    render_detailed(input, map, cfg).map(|r| r.image)
}

/// Anything that maps (image, parameter map) to a retouched image.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;

    fn render(&self, input: &Image, map: &ParameterMap) -> Result<Image>;
}

/// The built-in deterministic backend.
#[derive(Clone, Debug, Default)]
pub struct ParametricGenerator {
    pub cfg: TransferConfig,
}

impl ParametricGenerator {
    pub fn new(cfg: TransferConfig) -> Self {
        Self { cfg }
    }
}

impl Generator for ParametricGenerator {
    fn name(&self) -> &str {
        "parametric"
    }

    fn render(&self, input: &Image, map: &ParameterMap) -> Result<Image> {
        render(input, map, &self.cfg)
    }
}
