//! Panoptic segmentation maps: RLE JSON interchange, region geometry, grid
//! fallback, and area-weighted region sampling.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng::{self, Rng64};

pub type RegionId = u32;

/// Tight inclusive bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionInfo {
    pub id: RegionId,
    pub label: String,
    pub area: u64,
    pub bbox: BBox,
}

/// Exhaustive pixel-to-region labeling. Region ids are contiguous from 0 and
/// index directly into `regions()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    width: u32,
    height: u32,
    labels: Vec<RegionId>,
    regions: Vec<RegionInfo>,
}

/// One run-length segment: `[start, length]` over the row-major pixel index.
pub type Run = [u64; 2];

/// Serialized region record shared by the segmentation and PMAP formats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRecord {
    pub id: RegionId,
    pub label: String,
    pub rle: Vec<Run>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationFile {
    pub width: u32,
    pub height: u32,
    pub regions: Vec<RegionRecord>,
}

impl SegmentationMap {
    /// Builds a map from per-pixel ids and one label per id.
    pub fn from_labels(width: u32, height: u32, labels: Vec<RegionId>, names: Vec<String>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("segmentation dimensions must be at least 1x1"));
        }
        let n = width as usize * height as usize;
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "label buffer has {} entries, expected {n}",
                labels.len()
            )));
        }
        let mut regions: Vec<RegionInfo> = names
            .into_iter()
            .enumerate()
            .map(|(i, label)| RegionInfo {
                id: i as RegionId,
                label,
                area: 0,
                bbox: BBox {
                    min_x: u32::MAX,
                    min_y: u32::MAX,
                    max_x: 0,
                    max_y: 0,
                },
            })
            .collect();
        for (i, &id) in labels.iter().enumerate() {
            let Some(r) = regions.get_mut(id as usize) else {
                return Err(Error::format(format!("pixel {i} has undeclared region id {id}")));
            };
            let x = (i % width as usize) as u32;
            let y = (i / width as usize) as u32;
            r.area += 1;
            r.bbox.min_x = r.bbox.min_x.min(x);
            r.bbox.min_y = r.bbox.min_y.min(y);
            r.bbox.max_x = r.bbox.max_x.max(x);
            r.bbox.max_y = r.bbox.max_y.max(y);
        }
        if let Some(empty) = regions.iter().find(|r| r.area == 0) {
            return Err(Error::format(format!("region {} has no pixels", empty.id)));
        }
        Ok(Self {
            width,
            height,
            labels,
            regions,
        })
    }

    /// The whole raster as one region.
    pub fn single(width: u32, height: u32, label: &str) -> Result<Self> {
        Self::from_labels(
            width,
            height,
            vec![0; width as usize * height as usize],
            vec![label.to_string()],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[RegionId] {
        &self.labels
    }

    pub fn regions(&self) -> &[RegionInfo] {
        &self.regions
    }

    pub fn region(&self, id: RegionId) -> Option<&RegionInfo> {
        self.regions.get(id as usize)
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn matches(&self, img: &Image) -> bool {
        self.width == img.width() && self.height == img.height()
    }

    pub(crate) fn require_region(&self, id: RegionId) -> Result<&RegionInfo> {
        self.region(id).ok_or_else(|| Error::NotFound {
            what: format!("region {id}"),
            available: self.regions.iter().map(|r| r.id.to_string()).collect(),
        })
    }

    /// Case-insensitive exact label lookup.
    pub fn find_label(&self, name: &str) -> Option<RegionId> {
        self.regions
            .iter()
            .find(|r| r.label.to_lowercase() == name.to_lowercase())
            .map(|r| r.id)
    }

    pub fn label_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.label.clone()).collect()
    }

    /// Row-major pixel indices of one region.
    pub fn pixel_indices(&self, id: RegionId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pixel indices for every region, indexed by region id.
    pub fn index_by_region(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .regions
            .iter()
            .map(|r| Vec::with_capacity(r.area as usize))
            .collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// Row-major runs per region.
    pub fn encode_runs(&self) -> Vec<Vec<Run>> {
        let mut runs: Vec<Vec<Run>> = vec![Vec::new(); self.regions.len()];
        let mut start = 0usize;
        while start < self.labels.len() {
            let id = self.labels[start];
            let mut end = start + 1;
            while end < self.labels.len() && self.labels[end] == id {
                end += 1;
            }
            runs[id as usize].push([start as u64, (end - start) as u64]);
            start = end;
        }
        runs
    }

    pub fn to_file(&self) -> SegmentationFile {
        let runs = self.encode_runs();
        SegmentationFile {
            width: self.width,
            height: self.height,
            regions: self
                .regions
                .iter()
                .zip(runs)
                .map(|(r, rle)| RegionRecord {
                    id: r.id,
                    label: r.label.clone(),
                    rle,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("segmentation serializes")
    }

    pub fn from_file(file: &SegmentationFile) -> Result<Self> {
        decode_regions(file.width, file.height, &file.regions)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SegmentationFile =
            serde_json::from_str(text).map_err(|e| Error::format(format!("segmentation JSON: {e}")))?;
        Self::from_file(&file)
    }
}

/// Decodes region records into a validated map. Runs must be disjoint and
/// jointly cover every pixel; ids must be exactly `0..n`.
pub(crate) fn decode_regions(width: u32, height: u32, records: &[RegionRecord]) -> Result<SegmentationMap> {
    if width == 0 || height == 0 {
        return Err(Error::format("segmentation dimensions must be at least 1x1"));
    }
    let n = width as usize * height as usize;
    let count = records.len();
    let mut names: Vec<Option<String>> = vec![None; count];
    for rec in records {
        let slot = names
            .get_mut(rec.id as usize)
            .ok_or_else(|| Error::format(format!("region id {} is not contiguous from 0", rec.id)))?;
        if slot.is_some() {
            return Err(Error::format(format!("region id {} declared twice", rec.id)));
        }
        *slot = Some(rec.label.clone());
    }

    const UNSET: RegionId = RegionId::MAX;
    let mut labels = vec![UNSET; n];
    for rec in records {
        for &[start, len] in &rec.rle {
            let end = start
                .checked_add(len)
                .filter(|&e| len > 0 && e <= n as u64)
                .ok_or_else(|| {
                    Error::format(format!(
                        "region {}: run [{start}, {len}] is empty or exceeds {n} pixels",
                        rec.id
                    ))
                })?;
            for (i, slot) in labels[start as usize..end as usize].iter_mut().enumerate() {
                if *slot != UNSET {
                    return Err(Error::format(format!(
                        "pixel {} claimed by regions {} and {}",
                        start as usize + i,
                        *slot,
                        rec.id
                    )));
                }
                *slot = rec.id;
            }
        }
    }
    if let Some(p) = labels.iter().position(|&l| l == UNSET) {
        return Err(Error::format(format!("pixel {p} is not covered by any run")));
    }
    let names = names.into_iter().map(|n| n.unwrap_or_default()).collect();
    SegmentationMap::from_labels(width, height, labels, names)
}

/// Reads a segmentation JSON file and checks it against the expected size.
pub fn load_segmentation(path: impl AsRef<Path>, width: u32, height: u32) -> Result<SegmentationMap> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let file: SegmentationFile =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("segmentation JSON: {e}")))?;
    if file.width != width || file.height != height {
        return Err(Error::invalid(format!(
            "segmentation is {}x{}, image is {width}x{height}",
            file.width, file.height
        )));
    }
    SegmentationMap::from_file(&file)
}

/// Splits the image into `rows x cols` rectangles. Remainder pixels go to the
/// last row and column of tiles.
pub fn grid_segmentation(img: &Image, rows: u32, cols: u32) -> Result<SegmentationMap> {
    grid_for_size(img.width(), img.height(), rows, cols)
}

pub fn grid_for_size(width: u32, height: u32, rows: u32, cols: u32) -> Result<SegmentationMap> {
    if rows == 0 || cols == 0 || rows > height || cols > width {
        return Err(Error::invalid(format!(
            "grid {rows}x{cols} does not fit a {width}x{height} image"
        )));
    }
    let tile_h = height / rows;
    let tile_w = width / cols;
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        let r = (y / tile_h).min(rows - 1);
        for x in 0..width {
            let c = (x / tile_w).min(cols - 1);
            labels.push(r * cols + c);
        }
    }
    let names = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| format!("cell_{r}_{c}")))
        .collect();
    SegmentationMap::from_labels(width, height, labels, names)
}

/// Draws a region with probability proportional to its area.
pub fn sample_region_by_area(seg: &SegmentationMap, rng: &mut Rng64) -> RegionId {
    let total: u64 = seg.regions.iter().map(|r| r.area).sum();
    let mut pick = rng.random_range(0..total);
    for r in &seg.regions {
        if pick < r.area {
            return r.id;
        }
        pick -= r.area;
    }
    unreachable!("areas sum to total")
}

/// [`sample_region_by_area`] with a fresh stream from `seed`.
pub fn sample_region_by_area_seeded(seg: &SegmentationMap, seed: u64) -> RegionId {
    sample_region_by_area(seg, &mut rng::seeded(seed))
}
