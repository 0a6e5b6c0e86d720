//! The multi-channel parameter map: per-region target scores, stored sparsely
//! and rasterized on demand, plus the PMAP JSON interchange format.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, Plane};
use crate::scoring::{score_all_regions, Attribute, AttributeVector, ScoreAnchors};
use crate::segmentation::{decode_regions, RegionId, RegionRecord, Run, SegmentationMap};

/// Attribute names in PMAP channel order.
pub const PMAP_ATTRIBUTES: [&str; 4] = ["colorfulness", "contrast", "temperature", "brightness"];

/// Per-region attribute scores over a shared segmentation. Edits return new
/// maps; the segmentation is shared, never copied.
#[derive(Clone, Debug)]
pub struct ParameterMap {
    seg: Arc<SegmentationMap>,
    scores: Vec<AttributeVector>,
}

impl PartialEq for ParameterMap {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.seg, &other.seg) || self.seg == other.seg) && self.scores == other.scores
    }
}

impl ParameterMap {
    pub fn new(seg: Arc<SegmentationMap>, scores: Vec<AttributeVector>) -> Result<Self> {
        if scores.len() != seg.region_count() {
            return Err(Error::invalid(format!(
                "{} score vectors for {} regions",
                scores.len(),
                seg.region_count()
            )));
        }
        if let Some(i) = scores.iter().position(|v| !v.in_range()) {
            return Err(Error::invalid(format!("region {i} has scores outside [-1, 1]")));
        }
        Ok(Self { seg, scores })
    }

    pub fn seg(&self) -> &SegmentationMap {
        &self.seg
    }

    pub fn shared_seg(&self) -> Arc<SegmentationMap> {
        Arc::clone(&self.seg)
    }

    pub fn scores(&self) -> &[AttributeVector] {
        &self.scores
    }

    pub fn score(&self, region: RegionId) -> Option<AttributeVector> {
        self.scores.get(region as usize).copied()
    }

    pub fn get(&self, region: RegionId, attr: Attribute) -> Option<f64> {
        self.score(region).map(|v| v.get(attr))
    }

    /// Replaces one region's whole vector.
    pub fn with_region(&self, region: RegionId, scores: AttributeVector) -> Result<Self> {
        self.seg.require_region(region)?;
        if !scores.in_range() {
            return Err(Error::invalid("scores outside [-1, 1]"));
        }
        let mut next = self.clone();
        next.scores[region as usize] = scores;
        Ok(next)
    }

    pub fn to_file(&self) -> PmapFile {
        let runs = self.seg.encode_runs();
        PmapFile {
            width: self.seg.width(),
            height: self.seg.height(),
            attributes: PMAP_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
            regions: self
                .seg
                .regions()
                .iter()
                .zip(runs)
                .zip(&self.scores)
                .map(|((r, rle), &scores)| PmapRegion {
                    id: r.id,
                    label: r.label.clone(),
                    rle,
                    scores,
                })
                .collect(),
        }
    }

    pub fn from_file(file: &PmapFile) -> Result<Self> {
        if file.attributes.len() != PMAP_ATTRIBUTES.len()
            || file.attributes.iter().zip(PMAP_ATTRIBUTES).any(|(a, b)| a != b)
        {
            return Err(Error::format(format!(
                "PMAP attributes must be exactly {PMAP_ATTRIBUTES:?}, got {:?}",
                file.attributes
            )));
        }
        let records: Vec<RegionRecord> = file
            .regions
            .iter()
            .map(|r| RegionRecord {
                id: r.id,
                label: r.label.clone(),
                rle: r.rle.clone(),
            })
            .collect();
        let seg = decode_regions(file.width, file.height, &records)?;
        let mut scores = vec![AttributeVector::MIDPOINT; seg.region_count()];
        for r in &file.regions {
            if !r.scores.in_range() {
                return Err(Error::format(format!("region {} has scores outside [-1, 1]", r.id)));
            }
            scores[r.id as usize] = r.scores;
        }
        Ok(Self {
            seg: Arc::new(seg),
            scores,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("PMAP serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("PMAP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PmapFile =
            serde_json::from_str(text).map_err(|e| Error::format(format!("PMAP JSON: {e}")))?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_pretty())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmapRegion {
    pub id: RegionId,
    pub label: String,
    pub rle: Vec<Run>,
    pub scores: AttributeVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmapFile {
    pub width: u32,
    pub height: u32,
    pub attributes: Vec<String>,
    pub regions: Vec<PmapRegion>,
}

/// Scores every region of `img` into a map.
pub fn build_map(img: &Image, seg: Arc<SegmentationMap>) -> Result<ParameterMap> {
    if !seg.matches(img) {
        return Err(Error::invalid(format!(
            "segmentation is {}x{}, image is {}x{}",
            seg.width(),
            seg.height(),
            img.width(),
            img.height()
        )));
    }
    let scores = score_all_regions(img, &seg, &ScoreAnchors::default());
    ParameterMap::new(seg, scores)
}

/// Midpoint map: every score 0.
pub fn default_map(seg: Arc<SegmentationMap>) -> ParameterMap {
    let scores = vec![AttributeVector::MIDPOINT; seg.region_count()];
    ParameterMap { seg, scores }
}

/// Piecewise-constant raster of channel `k`.
pub fn rasterize_channel(pm: &ParameterMap, k: usize) -> Result<Plane> {
    let attr = Attribute::from_index(k)?;
    Ok(rasterize_values(pm.seg(), &pm.scores.iter().map(|v| v.get(attr)).collect::<Vec<_>>()))
}

/// Rasterizes one value per region.
pub(crate) fn rasterize_values(seg: &SegmentationMap, per_region: &[f64]) -> Plane {
    Plane {
        width: seg.width(),
        height: seg.height(),
        values: seg.labels().iter().map(|&l| per_region[l as usize]).collect(),
    }
}

/// Returns a copy of `pm` with one (region, attribute) entry replaced.
pub fn set_region_score(pm: &ParameterMap, region: RegionId, attribute: Attribute, value: f64) -> Result<ParameterMap> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!("score {value} outside [-1, 1]")));
    }
    pm.seg.require_region(region)?;
    let mut next = pm.clone();
    next.scores[region as usize].set(attribute, value);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::grid_segmentation;

    fn two_region_seg() -> Arc<SegmentationMap> {
        let labels = (0..4).flat_map(|_| (0..4).map(|x| if x < 2 { 0 } else { 1 })).collect();
        Arc::new(SegmentationMap::from_labels(4, 4, labels, vec!["a".into(), "b".into()]).unwrap())
    }

    #[test]
    fn gray_single_region_map() {
        let img = Image::filled(3, 3, [128, 128, 128]).unwrap();
        let seg = Arc::new(SegmentationMap::single(3, 3, "all").unwrap());
        let pm = build_map(&img, seg).unwrap();
        assert_eq!(pm.scores().len(), 1);
        let v = pm.score(0).unwrap();
        assert_eq!(v.to_array()[..3], [-1.0, -1.0, 0.0]);
        assert!((v.brightness - 1.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn grid_map_matches_per_tile_scores() {
        let img = Image::from_fn(4, 4, |x, _| if x < 2 { [0, 0, 0] } else { [255, 255, 255] }).unwrap();
        let seg = Arc::new(grid_segmentation(&img, 2, 2).unwrap());
        let pm = build_map(&img, seg).unwrap();
        for (id, expected_b) in [(0, -1.0), (1, 1.0), (2, -1.0), (3, 1.0)] {
            let v = pm.score(id).unwrap();
            assert!((v.brightness - expected_b).abs() < 1e-12);
            assert_eq!(v.contrast, -1.0);
        }
    }

    #[test]
    fn build_rejects_mismatched_segmentation() {
        let img = Image::filled(3, 3, [0, 0, 0]).unwrap();
        let seg = Arc::new(SegmentationMap::single(3, 4, "all").unwrap());
        assert!(matches!(build_map(&img, seg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rasterize_single_and_two_region() {
        let seg = Arc::new(SegmentationMap::single(3, 2, "all").unwrap());
        let pm = set_region_score(&default_map(seg), 0, Attribute::Contrast, 0.3).unwrap();
        assert!(rasterize_channel(&pm, 1).unwrap().values.iter().all(|&v| v == 0.3));

        let pm = default_map(two_region_seg());
        let pm = set_region_score(&pm, 0, Attribute::Brightness, -1.0).unwrap();
        let pm = set_region_score(&pm, 1, Attribute::Brightness, 1.0).unwrap();
        let raster = rasterize_channel(&pm, 3).unwrap();
        let neg = raster.values.iter().filter(|&&v| v == -1.0).count() as u64;
        let pos = raster.values.iter().filter(|&&v| v == 1.0).count() as u64;
        assert_eq!(neg, pm.seg().regions()[0].area);
        assert_eq!(pos, pm.seg().regions()[1].area);
        assert_eq!(neg + pos, 16);
        assert!(matches!(rasterize_channel(&pm, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn set_region_score_contract() {
        let pm = default_map(two_region_seg());
        let edited = set_region_score(&pm, 1, Attribute::Temperature, -0.25).unwrap();
        assert_eq!(edited.get(1, Attribute::Temperature), Some(-0.25));
        assert_eq!(pm.get(1, Attribute::Temperature), Some(0.0));
        assert!(matches!(
            set_region_score(&pm, 1, Attribute::Temperature, 1.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            set_region_score(&pm, 7, Attribute::Temperature, 0.5),
            Err(Error::NotFound { .. })
        ));
    }

    #[test]
    fn default_map_is_midpoint() {
        let labels = vec![0, 1, 2, 2];
        let seg = Arc::new(SegmentationMap::from_labels(2, 2, labels, vec!["a".into(), "b".into(), "c".into()]).unwrap());
        let pm = default_map(seg);
        assert_eq!(pm.scores().len(), 3);
        assert!(pm.scores().iter().all(|v| *v == AttributeVector::MIDPOINT));
        for k in 0..4 {
            assert!(rasterize_channel(&pm, k).unwrap().values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pmap_round_trip_and_attribute_order() {
        let img = Image::from_fn(6, 5, |x, y| [(x * 40) as u8, (y * 50) as u8, 90]).unwrap();
        let seg = Arc::new(grid_segmentation(&img, 2, 3).unwrap());
        let pm = build_map(&img, seg).unwrap();
        let json = pm.to_json();
        assert!(json.contains(r#""attributes":["colorfulness","contrast","temperature","brightness"]"#));
        assert_eq!(ParameterMap::from_json(&json).unwrap(), pm);

        let reordered = json.replace(
            r#"["colorfulness","contrast","temperature","brightness"]"#,
            r#"["contrast","colorfulness","temperature","brightness"]"#,
        );
        assert!(matches!(ParameterMap::from_json(&reordered), Err(Error::Format(_))));
    }
}
