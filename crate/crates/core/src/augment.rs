//! Training-pair preparation: semantic replacement and parameter-map
//! perturbation.
//!
//! Targets are regenerated with the parametric generator after any score edit,
//! so every pair satisfies `target == render(input, map)`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::parammap::{build_map, rasterize_channel, ParameterMap};
use crate::raster::{gaussian_blur, Image, Plane};
use crate::retouch::{render, TransferConfig};
use crate::rng::{self, Rng64};
use crate::scoring::{AttributeVector, RegionScores, ATTRIBUTE_COUNT};
use crate::segmentation::{load_segmentation, sample_region_by_area, RegionId, SegmentationMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub replacement_probability: f64,
    /// Half-width of the uniform per-channel score offset.
    pub jitter_amplitude: f64,
    /// Inclusive range for the per-channel blur sigma, in pixels. A sigma of 0
    /// skips blurring.
    pub blur_sigma_range: [f64; 2],
    pub seed: u64,
    pub transfer: TransferConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            replacement_probability: 0.1,
            jitter_amplitude: 0.05,
            blur_sigma_range: [1.0, 3.0],
            seed: 0,
            transfer: TransferConfig::default(),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replacement_probability) {
            return Err(Error::invalid("replacement_probability must be in [0, 1]"));
        }
        if !(self.jitter_amplitude >= 0.0) {
            return Err(Error::invalid("jitter_amplitude must be non-negative"));
        }
        let [lo, hi] = self.blur_sigma_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid("blur_sigma_range must satisfy 0 <= lo <= hi"));
        }
        self.transfer.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub input: Image,
    pub map: ParameterMap,
    pub target: Image,
}

impl TrainingPair {
    /// Builds a self-consistent pair from measured scores.
    pub fn from_input(input: Image, seg: Arc<SegmentationMap>, transfer: &TransferConfig) -> Result<Self> {
        let map = build_map(&input, seg)?;
        let target = render(&input, &map, transfer)?;
        Ok(Self { input, map, target })
    }
}

/// Where a replacement took its scores from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementRecord {
    pub region: RegionId,
    pub donor_sample: usize,
    pub donor_region: RegionId,
    pub scores: AttributeVector,
}

/// Argmax of Euclidean score distance; ties go to the lowest region id.
pub fn most_divergent_region(src: &AttributeVector, donors: &[RegionScores]) -> Result<RegionId> {
    let mut best: Option<(f64, RegionId)> = None;
    for d in donors {
        let dist = src.distance(&d.scores);
        let better = match best {
            None => true,
            Some((bd, bid)) => dist > bd || (dist == bd && d.region < bid),
        };
        if better {
            best = Some((dist, d.region));
        }
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::invalid("most_divergent_region needs at least one donor"))
}

/// Most divergent region across several maps; ties go to the lowest
/// (sample, region) pair.
fn most_divergent_across<'a>(
    src: &AttributeVector,
    pool: impl IntoIterator<Item = (usize, &'a ParameterMap)>,
) -> Option<(usize, RegionId, AttributeVector)> {
    let mut best: Option<(f64, usize, RegionId, AttributeVector)> = None;
    for (sample, map) in pool {
        let donors: Vec<RegionScores> = map
            .scores()
            .iter()
            .enumerate()
            .map(|(r, &scores)| RegionScores {
                region: r as RegionId,
                scores,
            })
            .collect();
        let Ok(region) = most_divergent_region(src, &donors) else {
            continue;
        };
        let scores = map.scores()[region as usize];
        let dist = src.distance(&scores);
        let better = match best {
            None => true,
            Some((bd, bs, br, _)) => dist > bd || (dist == bd && (sample, region) < (bs, br)),
        };
        if better {
            best = Some((dist, sample, region, scores));
        }
    }
    best.map(|(_, s, r, v)| (s, r, v))
}

/// Score-level replacement without regenerating the target.
fn replace_scores<'a>(
    map: &ParameterMap,
    pool: impl IntoIterator<Item = (usize, &'a ParameterMap)>,
    probability: f64,
    rng: &mut Rng64,
) -> Result<(ParameterMap, Option<ReplacementRecord>)> {
    let gate: f64 = rng.random();
    if gate >= probability {
        return Ok((map.clone(), None));
    }
    let region = sample_region_by_area(map.seg(), rng);
    let src = map.scores()[region as usize];
    let Some((donor_sample, donor_region, scores)) = most_divergent_across(&src, pool) else {
        return Ok((map.clone(), None));
    };
    let next = map.with_region(region, scores)?;
    Ok((
        next,
        Some(ReplacementRecord {
            region,
            donor_sample,
            donor_region,
            scores,
        }),
    ))
}

/// Semantic replacement with the replacement record.
pub fn semantic_replace_traced(
    pair: &TrainingPair,
    pool: &[TrainingPair],
    cfg: &AugmentConfig,
    rng: &mut Rng64,
) -> Result<(TrainingPair, Option<ReplacementRecord>)> {
    if pool.is_empty() {
        return Err(Error::invalid("semantic replacement needs a non-empty donor pool"));
    }
    let (map, record) = replace_scores(
        &pair.map,
        pool.iter().enumerate().map(|(i, p)| (i, &p.map)),
        cfg.replacement_probability,
        rng,
    )?;
    if record.is_none() {
        return Ok((pair.clone(), None));
    }
    let target = render(&pair.input, &map, &cfg.transfer)?;
    Ok((
        TrainingPair {
            input: pair.input.clone(),
            map,
            target,
        },
        record,
    ))
}

/// With probability `replacement_probability`, overwrites the scores of one
/// area-sampled region with the most divergent donor region from `pool`, then
/// regenerates the target.
pub fn semantic_replace(
    pair: &TrainingPair,
    pool: &[TrainingPair],
    cfg: &AugmentConfig,
    rng: &mut Rng64,
) -> Result<TrainingPair> {
    semantic_replace_traced(pair, pool, cfg, rng).map(|(p, _)| p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedMap {
    pub offsets: [f64; ATTRIBUTE_COUNT],
    pub sigmas: [f64; ATTRIBUTE_COUNT],
    /// Rasters after the offset and before blurring, unclamped.
    pub shifted: Vec<Plane>,
    /// Final channels, clamped to [-1, 1].
    pub channels: Vec<Plane>,
}

pub fn perturb_map_traced(pm: &ParameterMap, cfg: &AugmentConfig, rng: &mut Rng64) -> Result<PerturbedMap> {
    cfg.validate()?;
    let a = cfg.jitter_amplitude;
    let [lo, hi] = cfg.blur_sigma_range;
    let mut offsets = [0.0; ATTRIBUTE_COUNT];
    let mut sigmas = [0.0; ATTRIBUTE_COUNT];
    for k in 0..ATTRIBUTE_COUNT {
        offsets[k] = if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        sigmas[k] = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    }
    let mut shifted = Vec::with_capacity(ATTRIBUTE_COUNT);
    let mut channels = Vec::with_capacity(ATTRIBUTE_COUNT);
    for k in 0..ATTRIBUTE_COUNT {
        let mut raster = rasterize_channel(pm, k)?;
        raster.values.iter_mut().for_each(|v| *v += offsets[k]);
        let mut out = if sigmas[k] > 0.0 {
            gaussian_blur(&raster, sigmas[k])?
        } else {
            raster.clone()
        };
        out.values.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        shifted.push(raster);
        channels.push(out);
    }
    Ok(PerturbedMap {
        offsets,
        sigmas,
        shifted,
        channels,
    })
}

/// Per-channel jitter and Gaussian blur of the rasterized map, clamped.
pub fn perturb_map(pm: &ParameterMap, cfg: &AugmentConfig, rng: &mut Rng64) -> Result<Vec<Plane>> {
    perturb_map_traced(pm, cfg, rng).map(|p| p.channels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<TrainingPair>,
    pub perturbed: Vec<Vec<Plane>>,
    pub replacements: Vec<Option<ReplacementRecord>>,
}

/// Builds maps, applies semantic replacement across the batch (donors are the
/// other samples' measured maps), regenerates targets, and perturbs the final
/// maps. Each sample draws from its own split stream, so the result is the
/// same with or without the `parallel` feature.
pub fn prepare_dataset(inputs: &[(Image, SegmentationMap)], cfg: &AugmentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let maps: Vec<ParameterMap> = par::map_slice(inputs, |i, (img, seg)| {
        build_map(img, Arc::new(seg.clone())).map_err(|e| sample_err(i, e))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    type Prepared = (TrainingPair, Vec<Plane>, Option<ReplacementRecord>);
    let prepared: Vec<Result<Prepared>> = par::map_slice(inputs, |i, (img, _)| {
        let run = || -> Result<Prepared> {
            let mut replace_rng = rng::split(cfg.seed, 2 * i as u64);
            let pool = maps.iter().enumerate().filter(|(j, _)| *j != i);
            let (map, record) = replace_scores(&maps[i], pool, cfg.replacement_probability, &mut replace_rng)?;
            let target = render(img, &map, &cfg.transfer)?;
            let mut perturb_rng = rng::split(cfg.seed, 2 * i as u64 + 1);
            let channels = perturb_map(&map, cfg, &mut perturb_rng)?;
            Ok((
                TrainingPair {
                    input: img.clone(),
                    map,
                    target,
                },
                channels,
                record,
            ))
        };
        run().map_err(|e| sample_err(i, e))
    });

    let mut out = Dataset {
        pairs: Vec::with_capacity(inputs.len()),
        perturbed: Vec::with_capacity(inputs.len()),
        replacements: Vec::with_capacity(inputs.len()),
    };
    for p in prepared {
        let (pair, channels, record) = p?;
        out.pairs.push(pair);
        out.perturbed.push(channels);
        out.replacements.push(record);
    }
    Ok(out)
}

fn sample_err(index: usize, e: Error) -> Error {
    Error::Sample {
        index,
        source: Box::new(e),
    }
}

/// One manifest line: an image and its segmentation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
}

/// A loaded manifest sample with its output stem.
pub struct ManifestSample {
    pub stem: String,
    pub image: Image,
    pub seg: SegmentationMap,
}

/// Reads a JSON manifest (a list of `{image, mask}` paths, relative to the
/// manifest's directory) and loads every sample.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("manifest JSON: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut load = || -> Result<ManifestSample> {
                let image_path = base.join(&e.image);
                let stem = image_path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::invalid(format!("no file stem in {}", e.image.display())))?
                    .to_string();
                if !seen.insert(stem.clone()) {
                    return Err(Error::invalid(format!("duplicate output stem {stem:?}")));
                }
                let image = Image::load(&image_path)?;
                let seg = load_segmentation(base.join(&e.mask), image.width(), image.height())?;
                Ok(ManifestSample { stem, image, seg })
            };
            load().map_err(|err| sample_err(i, err))
        })
        .collect()
}

/// Writes `<stem>.pmap.json`, `<stem>.ch<k>.png`, and `<stem>.target.png` for
/// each sample.
pub fn export_dataset(dataset: &Dataset, stems: &[String], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if stems.len() != dataset.pairs.len() {
        return Err(Error::invalid("one stem per sample required"));
    }
    std::fs::create_dir_all(dir)?;
    for ((stem, pair), channels) in stems.iter().zip(&dataset.pairs).zip(&dataset.perturbed) {
        pair.map.save(dir.join(format!("{stem}.pmap.json")))?;
        for (k, ch) in channels.iter().enumerate() {
            std::fs::write(dir.join(format!("{stem}.ch{k}.png")), ch.encode_signed_png()?)?;
        }
        pair.target.save_png(dir.join(format!("{stem}.target.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parammap::{default_map, set_region_score};
    use crate::scoring::Attribute;

    fn rs(region: RegionId, a: [f64; 4]) -> RegionScores {
        RegionScores {
            region,
            scores: AttributeVector::from_array(a),
        }
    }

    #[test]
    fn divergent_examples() {
        let src = AttributeVector::MIDPOINT;
        let donors = [rs(1, [0.1, 0.0, 0.0, 0.0]), rs(2, [1.0; 4])];
        assert_eq!(most_divergent_region(&src, &donors).unwrap(), 2);
        assert_eq!(most_divergent_region(&src, &[rs(5, [0.0; 4])]).unwrap(), 5);
        assert!(most_divergent_region(&src, &[]).is_err());
        // tie goes to the lower id whatever the order
        let tied = [rs(9, [0.5, 0.0, 0.0, 0.0]), rs(3, [0.0, -0.5, 0.0, 0.0])];
        assert_eq!(most_divergent_region(&src, &tied).unwrap(), 3);
    }

    fn seg_two() -> Arc<SegmentationMap> {
        let labels = (0..8).flat_map(|_| (0..8).map(|x| if x < 4 { 0 } else { 1 })).collect();
        Arc::new(SegmentationMap::from_labels(8, 8, labels, vec!["a".into(), "b".into()]).unwrap())
    }

    #[test]
    fn zero_jitter_constant_map_unchanged() {
        let seg = Arc::new(SegmentationMap::single(12, 10, "all").unwrap());
        let pm = set_region_score(&default_map(seg), 0, Attribute::Contrast, 0.4).unwrap();
        let cfg = AugmentConfig {
            jitter_amplitude: 0.0,
            blur_sigma_range: [2.0, 2.0],
            ..AugmentConfig::default()
        };
        let out = perturb_map(&pm, &cfg, &mut rng::seeded(3)).unwrap();
        for k in 0..4 {
            let raster = rasterize_channel(&pm, k).unwrap();
            for (a, b) in out[k].values.iter().zip(&raster.values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_edge_blurs_to_intermediate_values() {
        let pm = default_map(seg_two());
        let pm = set_region_score(&pm, 0, Attribute::Brightness, -1.0).unwrap();
        let pm = set_region_score(&pm, 1, Attribute::Brightness, 1.0).unwrap();
        let cfg = AugmentConfig {
            jitter_amplitude: 0.0,
            blur_sigma_range: [2.0, 2.0],
            ..AugmentConfig::default()
        };
        let out = perturb_map(&pm, &cfg, &mut rng::seeded(1)).unwrap();
        let ch = &out[Attribute::Brightness.index()];
        for y in 0..8 {
            for x in [3, 4] {
                let v = ch.get(x, y);
                assert!(v > -1.0 && v < 1.0, "({x},{y}) = {v}");
            }
        }
    }

    #[test]
    fn probability_zero_is_identity() {
        let transfer = TransferConfig::default();
        let a = TrainingPair::from_input(
            Image::from_fn(8, 8, |x, y| [(x * 20) as u8, (y * 20) as u8, 60]).unwrap(),
            seg_two(),
            &transfer,
        )
        .unwrap();
        let b = TrainingPair::from_input(Image::filled(8, 8, [250, 20, 20]).unwrap(), seg_two(), &transfer).unwrap();
        let cfg = AugmentConfig {
            replacement_probability: 0.0,
            ..AugmentConfig::default()
        };
        for seed in 0..10 {
            let out = semantic_replace(&a, std::slice::from_ref(&b), &cfg, &mut rng::seeded(seed)).unwrap();
            assert_eq!(out, a);
        }
        assert!(semantic_replace(&a, &[], &cfg, &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn empty_dataset() {
        let d = prepare_dataset(&[], &AugmentConfig::default()).unwrap();
        assert!(d.pairs.is_empty());
    }

    #[test]
    fn sample_errors_carry_index() {
        let good = (Image::filled(4, 4, [1, 2, 3]).unwrap(), SegmentationMap::single(4, 4, "a").unwrap());
        let bad = (Image::filled(4, 4, [1, 2, 3]).unwrap(), SegmentationMap::single(5, 4, "a").unwrap());
        match prepare_dataset(&[good, bad], &AugmentConfig::default()) {
            Err(Error::Sample { index, .. }) => assert_eq!(index, 1),
            other => panic!("{:?}", other.map(|d| d.pairs.len())),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = AugmentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.replacement_probability = 1.5;
        assert!(cfg.validate().is_err());
        cfg = AugmentConfig {
            blur_sigma_range: [3.0, 1.0],
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
