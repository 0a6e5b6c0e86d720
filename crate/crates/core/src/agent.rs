//! The editing agent: scene tags, the preference memory bank, memory-driven
//! weak edits, and the rethinking loop behind strong edits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruction::{to_target_delta, MagnitudeTable, StrongInstruction, Target};
use crate::par;
use crate::parammap::{build_map, ParameterMap};
use crate::raster::Image;
use crate::retouch::{Generator, ParametricGenerator, TransferConfig};
use crate::rng::{self, Rng64};
use crate::scoring::{attribute_of, score_image, Attribute, AttributeVector, ColorHistogram, ATTRIBUTE_COUNT};
use crate::segmentation::{RegionId, SegmentationMap};

/// Lowercase, non-empty set of scene descriptors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeSet<String>", into = "BTreeSet<String>")]
pub struct SceneTags(BTreeSet<String>);

impl SceneTags {
    /// Lowercases and trims each tag, dropping blanks.
    pub fn new<I, S>(tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = tags
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if set.is_empty() {
            return Err(Error::invalid("scene tags must not be empty"));
        }
        Ok(Self(set))
    }

    pub fn as_set(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn union(&self, other: &SceneTags) -> SceneTags {
        SceneTags(self.0.union(&other.0).cloned().collect())
    }

    /// |A ∩ B| / |A ∪ B|.
    pub fn jaccard(&self, other: &SceneTags) -> f64 {
        let inter = self.0.intersection(&other.0).count();
        let union = self.0.len() + other.0.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl TryFrom<BTreeSet<String>> for SceneTags {
    type Error = Error;

    fn try_from(set: BTreeSet<String>) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::format("scene tags must not be empty"));
        }
        if let Some(bad) = set.iter().find(|t| t.is_empty() || t.to_lowercase() != **t) {
            return Err(Error::format(format!("scene tag {bad:?} is not lowercase")));
        }
        Ok(Self(set))
    }
}

impl From<SceneTags> for BTreeSet<String> {
    fn from(t: SceneTags) -> Self {
        t.0
    }
}

/// Produces scene tags for an image.
pub trait SceneExtractor: Send + Sync {
    fn extract(&self, img: &Image) -> SceneTags;
}

/// Thresholds whole-image scores into coarse scene tags.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScoreTagExtractor;

impl SceneExtractor for ScoreTagExtractor {
    fn extract(&self, img: &Image) -> SceneTags {
        let s = score_image(img);
        let tone = if s.brightness > 0.2 {
            "bright"
        } else if s.brightness < -0.2 {
            "dark"
        } else {
            "midtone"
        };
        let temp = if s.temperature > 0.15 {
            "warm"
        } else if s.temperature < -0.15 {
            "cool"
        } else {
            "neutral"
        };
        let color = if s.colorfulness > 0.0 { "colorful" } else { "muted" };
        SceneTags([tone, temp, color].into_iter().map(String::from).collect())
    }
}

/// Reference tags for `img` unioned with caller-supplied tags.
pub fn extract_scene_tags(img: &Image, extra: &[String]) -> SceneTags {
    let base = ScoreTagExtractor.extract(img);
    match SceneTags::new(extra) {
        Ok(user) => base.union(&user),
        Err(_) => base,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Global,
    Region(String),
}

/// One confirmed edit, stored as score deltas relative to the measured input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRecord {
    #[serde(with = "rfc3339")]
    pub ts: DateTime<Utc>,
    pub tags: SceneTags,
    pub scores: AttributeVector,
    pub scope: Scope,
}

impl MemoryRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.scores.in_range() {
            return Err(Error::invalid("memory record scores must lie in [-1, 1]"));
        }
        if let Scope::Region(label) = &self.scope {
            if label.is_empty() {
                return Err(Error::invalid("region scope needs a label"));
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("memory record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let rec: MemoryRecord = serde_json::from_str(line).map_err(|e| Error::format(e.to_string()))?;
        rec.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(rec)
    }
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// Append-only record list, optionally backed by a JSON Lines file.
#[derive(Debug, Default)]
pub struct MemoryBank {
    records: Vec<MemoryRecord>,
    path: Option<PathBuf>,
}

impl MemoryBank {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or lazily creates) a bank file. A trailing line without a newline
    /// is an interrupted append and is truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let storage = |source| Error::Storage {
            path: path.clone(),
            source,
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(storage(e)),
        };
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            let f = OpenOptions::new().write(true).open(&path).map_err(storage)?;
            f.set_len(complete as u64).map_err(storage)?;
            f.sync_all().map_err(storage)?;
        }
        let text = std::str::from_utf8(&bytes[..complete])
            .map_err(|e| Error::format(format!("memory file is not UTF-8: {e}")))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = MemoryRecord::from_line(line)
                .map_err(|e| Error::format(format!("memory line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Self {
            records,
            path: Some(path),
        })
    }

    /// In-memory copy of the current records, detached from the file.
    pub fn snapshot(&self) -> MemoryBank {
        MemoryBank {
            records: self.records.clone(),
            path: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends and syncs to disk before updating the in-memory list. A
    /// timestamp earlier than the last record is raised to it so the file
    /// stays ordered.
    pub fn append(&mut self, mut record: MemoryRecord) -> Result<&MemoryRecord> {
        record.validate()?;
        if let Some(last) = self.records.last() {
            if record.ts < last.ts {
                record.ts = last.ts;
            }
        }
        if let Some(path) = &self.path {
            let mut line = record.to_line();
            line.push('\n');
            let write = || -> std::io::Result<()> {
                let mut f: File = OpenOptions::new().create(true).append(true).open(path)?;
                f.write_all(line.as_bytes())?;
                f.sync_data()
            };
            write().map_err(|source| Error::Storage {
                path: path.clone(),
                source,
            })?;
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn summary(&self) -> MemorySummary {
        let mut acc: BTreeMap<String, (usize, [f64; ATTRIBUTE_COUNT])> = BTreeMap::new();
        for rec in &self.records {
            for tag in rec.tags.iter() {
                let e = acc.entry(tag.to_string()).or_insert((0, [0.0; ATTRIBUTE_COUNT]));
                e.0 += 1;
                for (s, v) in e.1.iter_mut().zip(rec.scores.to_array()) {
                    *s += v;
                }
            }
        }
        MemorySummary {
            total: self.records.len(),
            tags: acc
                .into_iter()
                .map(|(tag, (count, sums))| {
                    let mean = AttributeVector::from_array(sums.map(|s| s / count as f64));
                    (tag, TagSummary { count, mean_delta: mean })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagSummary {
    pub count: usize,
    pub mean_delta: AttributeVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub total: usize,
    pub tags: BTreeMap<String, TagSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEstimate {
    pub mean: AttributeVector,
    /// Records with non-zero tag similarity to the query.
    pub support: usize,
    /// Weighted standard deviation of the records that formed the mean.
    pub dispersion: AttributeVector,
}

/// Jaccard-weighted mean of global-scope records. Falls back to the plain
/// mean when no record shares a tag, and to the midpoint for an empty bank.
pub fn estimate_preference(records: &[MemoryRecord], query: &SceneTags) -> PreferenceEstimate {
    let global: Vec<&MemoryRecord> = records.iter().filter(|r| r.scope == Scope::Global).collect();
    let mut weights: Vec<f64> = global.iter().map(|r| r.tags.jaccard(query)).collect();
    let support = weights.iter().filter(|&&w| w > 0.0).count();
    if global.is_empty() {
        return PreferenceEstimate {
            mean: AttributeVector::MIDPOINT,
            support: 0,
            dispersion: AttributeVector::MIDPOINT,
        };
    }
    if support == 0 {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let total: f64 = weights.iter().sum();
    let mut mean = [0.0; ATTRIBUTE_COUNT];
    for (r, w) in global.iter().zip(&weights) {
        for (m, v) in mean.iter_mut().zip(r.scores.to_array()) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = [0.0; ATTRIBUTE_COUNT];
    for (r, w) in global.iter().zip(&weights) {
        for ((s, v), m) in var.iter_mut().zip(r.scores.to_array()).zip(mean) {
            *s += w * (v - m) * (v - m);
        }
    }
    PreferenceEstimate {
        mean: AttributeVector::from_array(mean),
        support,
        dispersion: AttributeVector::from_array(var.map(|v| (v / total).sqrt())),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    #[default]
    Mean,
    /// Adds N(0, dispersion) noise per attribute, then clamps.
    Gaussian,
}

pub fn sample_preference(est: &PreferenceEstimate, mode: SampleMode, rng: &mut Rng64) -> AttributeVector {
    match mode {
        SampleMode::Mean => est.mean,
        SampleMode::Gaussian => {
            let mut out = est.mean;
            for a in Attribute::ALL {
                let sigma = est.dispersion.get(a);
                let z: f64 = rng.sample(StandardNormal);
                if sigma > 0.0 {
                    out.set(a, (out.get(a) + sigma * z).clamp(-1.0, 1.0));
                }
            }
            out
        }
    }
}

/// Mean delta of region-scope records for `label` (case-insensitive).
pub fn regional_preference(records: &[MemoryRecord], label: &str) -> Option<AttributeVector> {
    let label = label.to_lowercase();
    let matched: Vec<AttributeVector> = records
        .iter()
        .filter(|r| matches!(&r.scope, Scope::Region(l) if l.to_lowercase() == label))
        .map(|r| r.scores)
        .collect();
    if matched.is_empty() {
        return None;
    }
    let n = matched.len() as f64;
    let sum = matched
        .iter()
        .fold(AttributeVector::MIDPOINT, |acc, v| acc.zip_with(*v, |a, b| a + b));
    Some(sum.map(|s| s / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RethinkConfig {
    pub max_rounds: u32,
    pub tolerance: f64,
    pub gain: f64,
}

impl Default for RethinkConfig {
    fn default() -> Self {
        Self {
            max_rounds: 8,
            tolerance: 0.05,
            gain: 0.5,
        }
    }
}

impl RethinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::invalid("max_rounds must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(Error::invalid("gain must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub transfer: TransferConfig,
    pub rethink: RethinkConfig,
    pub magnitudes: MagnitudeTable,
    pub sample_mode: SampleMode,
    pub seed: u64,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.transfer.validate()?;
        self.rethink.validate()?;
        self.magnitudes.validate()
    }
}

#[derive(Clone, Debug)]
pub struct WeakEdit {
    pub tags: SceneTags,
    pub preference: AttributeVector,
    pub support: usize,
    /// Scores of the unedited input.
    pub measured: ParameterMap,
    pub map: ParameterMap,
    pub image: Image,
}

/// Per-region outcome of a strong edit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionOutcome {
    pub region: RegionId,
    /// Requested score, before clamping to [-1, 1].
    pub target: f64,
    pub achieved: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug)]
pub struct StrongEdit {
    pub map: ParameterMap,
    pub image: Image,
    pub rounds: u32,
    pub converged: bool,
    pub saturated: bool,
    pub outcomes: Vec<RegionOutcome>,
    /// Largest |error| over the designated regions, one entry per round.
    pub error_trace: Vec<f64>,
}

/// Weak and strong edits against a pluggable generator and scene extractor.
pub struct Agent {
    pub cfg: AgentConfig,
    generator: Arc<dyn Generator>,
    extractor: Arc<dyn SceneExtractor>,
}

impl Agent {
    pub fn new(cfg: AgentConfig) -> Result<Self> {
        let generator = Arc::new(ParametricGenerator::new(cfg.transfer));
        Self::with_backends(cfg, generator, Arc::new(ScoreTagExtractor))
    }

    pub fn with_backends(
        cfg: AgentConfig,
        generator: Arc<dyn Generator>,
        extractor: Arc<dyn SceneExtractor>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            generator,
            extractor,
        })
    }

    pub fn generator(&self) -> &dyn Generator {
        self.generator.as_ref()
    }

    pub fn scene_tags(&self, img: &Image, extra: &[String]) -> SceneTags {
        let base = self.extractor.extract(img);
        match SceneTags::new(extra) {
            Ok(user) => base.union(&user),
            Err(_) => base,
        }
    }

    /// The memory-derived weak map and its inputs, without rendering.
    fn weak_map(
        &self,
        img: &Image,
        seg: Arc<SegmentationMap>,
        bank: &MemoryBank,
        extra_tags: &[String],
    ) -> Result<(ParameterMap, ParameterMap, SceneTags, PreferenceEstimate, AttributeVector)> {
        let measured = build_map(img, seg)?;
        let tags = self.scene_tags(img, extra_tags);
        let est = estimate_preference(bank.records(), &tags);
        let pref = sample_preference(&est, self.cfg.sample_mode, &mut rng::seeded(self.cfg.seed));
        let scores = measured
            .scores()
            .iter()
            .map(|m| m.zip_with(pref, |a, d| (a + d).clamp(-1.0, 1.0)))
            .collect();
        let map = ParameterMap::new(measured.shared_seg(), scores)?;
        Ok((measured, map, tags, est, pref))
    }

    /// Applies the memory preference as a uniform delta on every region's
    /// measured scores and renders.
    pub fn weak_edit(
        &self,
        img: &Image,
        seg: Arc<SegmentationMap>,
        bank: &MemoryBank,
        extra_tags: &[String],
    ) -> Result<WeakEdit> {
        let (measured, map, tags, est, preference) = self.weak_map(img, seg, bank, extra_tags)?;
        let image = self.generator.render(img, &map)?;
        Ok(WeakEdit {
            tags,
            preference,
            support: est.support,
            measured,
            map,
            image,
        })
    }

    /// Runs the rethinking loop for one strong instruction.
    ///
    /// `start` is the map to edit; when absent, the weak-edit map is used and
    /// region-scope memory for the named label replaces the global preference
    /// on that region's other attributes.
    pub fn strong_edit(
        &self,
        img: &Image,
        seg: Arc<SegmentationMap>,
        bank: &MemoryBank,
        instr: &StrongInstruction,
        start: Option<&ParameterMap>,
    ) -> Result<StrongEdit> {
        let designated = resolve_target(&seg, &instr.target)?;
        let attr = instr.attribute;
        let k = attr.index();
        let mut map = match start {
            Some(m) => {
                if m.seg() != seg.as_ref() {
                    return Err(Error::invalid("start map segmentation differs from the session's"));
                }
                m.clone()
            }
            None => {
                let (measured, mut map, ..) = self.weak_map(img, seg.clone(), bank, &[])?;
                if let Target::Region(label) = &instr.target {
                    if let Some(delta) = regional_preference(bank.records(), label) {
                        let r = designated[0];
                        let mut v = measured.scores()[r as usize].zip_with(delta, |a, d| (a + d).clamp(-1.0, 1.0));
                        v.set(attr, map.scores()[r as usize].get(attr));
                        map = map.with_region(r, v)?;
                    }
                }
                map
            }
        };

        let change = to_target_delta(instr, &self.cfg.magnitudes);
        let targets: Vec<f64> = designated
            .iter()
            .map(|&r| change.apply(map.scores()[r as usize].to_array()[k]))
            .collect();
        for (&r, &t) in designated.iter().zip(&targets) {
            map = set_entry(&map, r, attr, t.clamp(-1.0, 1.0))?;
        }
        self.refine(img, map, attr, &designated, &targets)
    }

    /// Damped error feedback on `attr` for the designated regions until every
    /// region is within tolerance or saturated, or the round limit is hit.
    /// The map is never changed after the last render.
    pub fn refine(
        &self,
        img: &Image,
        mut map: ParameterMap,
        attr: Attribute,
        designated: &[RegionId],
        targets: &[f64],
    ) -> Result<StrongEdit> {
        let rc = self.cfg.rethink;
        let anchors = self.cfg.transfer.anchors;
        let n = designated.len();
        let mut history: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut saturated = vec![false; n];
        let mut error_trace = Vec::new();
        let mut rounds = 0;
        loop {
            rounds += 1;
            let image = self.generator.render(img, &map)?;
            let seg = map.seg();
            let achieved: Vec<f64> = par::map_slice(designated, |_, &r| {
                attribute_of(&ColorHistogram::of_region(&image, seg, r), attr, &anchors)
            });
            let errors: Vec<f64> = targets.iter().zip(&achieved).map(|(t, s)| t - s).collect();

            let mut open = false;
            for i in 0..n {
                let e = errors[i].abs();
                history[i].push(e);
                if e <= rc.tolerance {
                    saturated[i] = false;
                    continue;
                }
                // the output stopped responding: either the entry is pinned at
                // the clamp or the generator is at its strength limit
                saturated[i] = stalled(&history[i]);
                open |= !saturated[i];
            }
            error_trace.push(errors.iter().fold(0.0, |m: f64, e| m.max(e.abs())));

            if !open || rounds >= rc.max_rounds {
                let outcomes = (0..n)
                    .map(|i| RegionOutcome {
                        region: designated[i],
                        target: targets[i],
                        achieved: achieved[i],
                        saturated: saturated[i],
                    })
                    .collect();
                return Ok(StrongEdit {
                    converged: errors.iter().all(|e| e.abs() <= rc.tolerance),
                    saturated: saturated.iter().any(|&s| s),
                    map,
                    image,
                    rounds,
                    outcomes,
                    error_trace,
                });
            }
            for i in 0..n {
                if errors[i].abs() > rc.tolerance && !saturated[i] {
                    let r = designated[i];
                    let entry = map.scores()[r as usize].get(attr);
                    map = set_entry(&map, r, attr, (entry + rc.gain * errors[i]).clamp(-1.0, 1.0))?;
                }
            }
        }
    }
}

/// True when |e| failed to shrink in each of the last two rounds.
fn stalled(history: &[f64]) -> bool {
    const SLACK: f64 = 1e-9;
    match history {
        [.., a, b, c] => b >= &(a - SLACK) && c >= &(b - SLACK),
        _ => false,
    }
}

fn set_entry(map: &ParameterMap, region: RegionId, attr: Attribute, value: f64) -> Result<ParameterMap> {
    let mut v = map.scores()[region as usize];
    v.set(attr, value);
    map.with_region(region, v)
}

/// Region ids an instruction target refers to.
pub fn resolve_target(seg: &SegmentationMap, target: &Target) -> Result<Vec<RegionId>> {
    match target {
        Target::Global => Ok((0..seg.region_count() as RegionId).collect()),
        Target::Region(label) => seg.find_label(label).map(|r| vec![r]).ok_or_else(|| Error::NotFound {
            what: format!("region {label:?}"),
            available: seg.label_names(),
        }),
    }
}

/// Record for an accepted edit: the area-weighted mean of (map − measured)
/// over all regions for global scope, or the named region's delta. Deltas are
/// clamped to [-1, 1].
pub fn confirmation_record(
    tags: &SceneTags,
    map: &ParameterMap,
    measured: &ParameterMap,
    scope: &Scope,
    ts: DateTime<Utc>,
) -> Result<MemoryRecord> {
    if map.seg() != measured.seg() {
        return Err(Error::invalid("map and measured scores use different segmentations"));
    }
    let delta = |r: usize| map.scores()[r].zip_with(measured.scores()[r], |a, b| a - b);
    let scores = match scope {
        Scope::Global => {
            let seg = map.seg();
            let total: f64 = seg.regions().iter().map(|r| r.area as f64).sum();
            let mut acc = [0.0; ATTRIBUTE_COUNT];
            for (r, info) in seg.regions().iter().enumerate() {
                for (a, d) in acc.iter_mut().zip(delta(r).to_array()) {
                    *a += info.area as f64 * d;
                }
            }
            AttributeVector::from_array(acc.map(|a| a / total))
        }
        Scope::Region(label) => {
            let r = resolve_target(map.seg(), &Target::Region(label.clone()))?[0];
            delta(r as usize)
        }
    };
    Ok(MemoryRecord {
        ts,
        tags: tags.clone(),
        scores: scores.clamped(),
        scope: scope.clone(),
    })
}

/// Appends the confirmation record for an accepted edit and persists it.
pub fn confirm(
    bank: &mut MemoryBank,
    tags: &SceneTags,
    map: &ParameterMap,
    measured: &ParameterMap,
    scope: &Scope,
) -> Result<MemoryRecord> {
    let rec = confirmation_record(tags, map, measured, scope, Utc::now())?;
    bank.append(rec).cloned()
}

/// Timestamp text as written to the memory file.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}
