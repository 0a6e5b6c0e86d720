//! Editing sessions and the shared memory bank, independent of transport.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use retouch_core::agent::{confirm, Agent, MemoryBank, MemoryRecord, MemorySummary, SceneExtractor, ScoreTagExtractor, SceneTags, Scope, StrongEdit};
use retouch_core::instruction::{self, Instruction};
use retouch_core::parammap::{build_map, PmapFile};
use retouch_core::raster::mean_abs_diff;
use retouch_core::retouch::{render, Generator, ParametricGenerator};
use retouch_core::scoring::score_all_regions;
use retouch_core::segmentation::SegmentationFile;
use retouch_core::{Attribute, AttributeVector, Error as CoreError, Image, ParameterMap, RegionId, SegmentationMap};
use serde::{Deserialize, Serialize};

use crate::config::{BackendName, ServiceConfig};
use crate::error::ServiceError;
use crate::remote::{RemoteGenerator, RenderRequest};
use crate::SCHEMA;

type SResult<T> = Result<T, ServiceError>;

/// A segmentation given inline as an object or as JSON text.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MaskPayload {
    File(SegmentationFile),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub image: String,
    pub mask: MaskPayload,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructRequest {
    pub text: String,
}

/// Region by numeric id or by label.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionRef {
    Id(RegionId),
    Label(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustRequest {
    pub region: RegionRef,
    pub attribute: Attribute,
    pub target: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfirmRequest {
    #[serde(default)]
    pub scope: Option<Scope>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub id: RegionId,
    pub label: String,
    pub area: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub region: RegionId,
    pub label: String,
    pub scores: AttributeVector,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub schema: String,
    pub session_id: String,
    pub width: u32,
    pub height: u32,
    pub tags: Vec<String>,
    pub regions: Vec<RegionSummary>,
    pub scores: Vec<LabeledScores>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EditResponse {
    pub schema: String,
    /// Base64 PNG.
    pub output: String,
    /// The exact map that renders `output` from the session input.
    pub map: PmapFile,
    pub instruction: String,
    pub rounds: u32,
    pub saturated: bool,
    pub converged: bool,
    pub per_region_scores: Vec<LabeledScores>,
    /// Mean absolute channel difference from the input, in [0, 1].
    pub mean_abs_diff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfirmResponse {
    pub schema: String,
    pub memory_records_total: usize,
    pub record: MemoryRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditSource {
    Instruct,
    Adjust,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub source: EditSource,
    pub instruction: String,
    pub rounds: u32,
    pub saturated: bool,
    pub accepted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionState {
    pub schema: String,
    pub session_id: String,
    pub width: u32,
    pub height: u32,
    pub tags: Vec<String>,
    pub regions: Vec<RegionSummary>,
    pub measured: Vec<LabeledScores>,
    pub map: Option<PmapFile>,
    pub output: Option<String>,
    pub history: Vec<HistoryEntry>,
}

pub struct Session {
    pub id: String,
    pub input: Image,
    pub seg: Arc<SegmentationMap>,
    pub tags: SceneTags,
    pub measured: ParameterMap,
    /// Current map and the output it renders, once an edit has run.
    pub current: Option<(ParameterMap, Image)>,
    pub history: Vec<HistoryEntry>,
}

/// All live sessions plus the durable memory bank.
pub struct Service {
    cfg: ServiceConfig,
    agent: Agent,
    reference: ParametricGenerator,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    bank: Mutex<MemoryBank>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    pub fn new(cfg: ServiceConfig) -> SResult<Self> {
        cfg.validate()?;
        let generator: Arc<dyn Generator> = match cfg.backend {
            BackendName::Parametric => Arc::new(ParametricGenerator::new(cfg.transfer)),
            BackendName::Remote => Arc::new(RemoteGenerator::new(
                cfg.remote_url.as_deref().unwrap_or_default(),
                Duration::from_secs(cfg.remote_timeout_secs),
            )?),
        };
        let extractor: Arc<dyn SceneExtractor> = Arc::new(ScoreTagExtractor);
        let agent = Agent::with_backends(cfg.agent_config(), generator, extractor)?;
        let bank = MemoryBank::open(&cfg.memory_path)?;
        Ok(Self {
            reference: ParametricGenerator::new(cfg.transfer),
            agent,
            sessions: RwLock::new(HashMap::new()),
            bank: Mutex::new(bank),
            cfg,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn decode_image(&self, b64: &str) -> SResult<Image> {
        let bytes = B64
            .decode(b64.trim())
            .map_err(|e| ServiceError::Input(CoreError::Format(format!("image is not base64: {e}"))))?;
        let (width, height) = Image::peek_dimensions(&bytes).map_err(ServiceError::Input)?;
        if width.max(height) > self.cfg.max_dim {
            return Err(ServiceError::TooLarge {
                width,
                height,
                max: self.cfg.max_dim,
            });
        }
        Image::decode(&bytes).map_err(ServiceError::Input)
    }

    fn session(&self, id: &str) -> SResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> SResult<CreateSessionResponse> {
        let input = self.decode_image(&req.image)?;
        let seg = match req.mask {
            MaskPayload::File(f) => SegmentationMap::from_file(&f),
            MaskPayload::Text(t) => SegmentationMap::from_json(&t),
        }
        .map_err(ServiceError::Input)?;
        if !seg.matches(&input) {
            return Err(ServiceError::Input(CoreError::InvalidArgument(format!(
                "mask is {}x{}, image is {}x{}",
                seg.width(),
                seg.height(),
                input.width(),
                input.height()
            ))));
        }
        let seg = Arc::new(seg);
        let measured = build_map(&input, seg.clone())?;
        let tags = self.agent.scene_tags(&input, &req.tags);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let resp = CreateSessionResponse {
            schema: SCHEMA.into(),
            session_id: id.clone(),
            width: input.width(),
            height: input.height(),
            tags: tags.iter().map(String::from).collect(),
            regions: region_summaries(&seg),
            scores: labeled(&seg, measured.scores()),
        };
        let session = Session {
            id: id.clone(),
            input,
            seg,
            tags,
            measured,
            current: None,
            history: Vec::new(),
        };
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(resp)
    }

    pub fn instruct(&self, id: &str, req: InstructRequest) -> SResult<EditResponse> {
        let instr = instruction::parse(&req.text)?;
        let session = self.session(id)?;
        let mut s = lock(&session);
        let memory = lock(&self.bank).snapshot();
        let (map, image, rounds, saturated, converged) = match &instr {
            Instruction::Weak => {
                let w = self.agent.weak_edit(&s.input, s.seg.clone(), &memory, &[])?;
                (w.map, w.image, 1, false, true)
            }
            Instruction::Strong(strong) => {
                let start = s.current.as_ref().map(|(m, _)| m);
                let e = self.agent.strong_edit(&s.input, s.seg.clone(), &memory, strong, start)?;
                (e.map, e.image, e.rounds, e.saturated, e.converged)
            }
        };
        let text = instruction::format(&instr);
        self.finish_edit(&mut s, EditSource::Instruct, text, map, image, rounds, saturated, converged)
    }

    pub fn adjust(&self, id: &str, req: AdjustRequest) -> SResult<EditResponse> {
        if !req.target.is_finite() {
            return Err(ServiceError::Usage("target must be a finite number".into()));
        }
        let session = self.session(id)?;
        let mut s = lock(&session);
        let found = match &req.region {
            RegionRef::Id(r) => s.seg.region(*r).map(|info| info.id),
            RegionRef::Label(l) => s.seg.find_label(l),
        };
        let Some(region) = found else {
            return Err(ServiceError::Core(CoreError::NotFound {
                what: match &req.region {
                    RegionRef::Id(r) => format!("region {r}"),
                    RegionRef::Label(l) => format!("region {l:?}"),
                },
                available: s.seg.label_names(),
            }));
        };
        let target = req.target.clamp(-1.0, 1.0);
        let start = s.current.as_ref().map_or_else(|| s.measured.clone(), |(m, _)| m.clone());
        let mut v = start.scores()[region as usize];
        v.set(req.attribute, target);
        let map = start.with_region(region, v)?;
        let e: StrongEdit = self.agent.refine(&s.input, map, req.attribute, &[region], &[target])?;
        let label = s.seg.regions()[region as usize].label.clone();
        let text = format!("set {label} {} {target}", req.attribute);
        self.finish_edit(&mut s, EditSource::Adjust, text, e.map, e.image, e.rounds, e.saturated, e.converged)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_edit(
        &self,
        s: &mut Session,
        source: EditSource,
        instruction: String,
        map: ParameterMap,
        image: Image,
        rounds: u32,
        saturated: bool,
        converged: bool,
    ) -> SResult<EditResponse> {
        let scores = score_all_regions(&image, &s.seg, &self.cfg.transfer.anchors);
        let resp = EditResponse {
            schema: SCHEMA.into(),
            output: B64.encode(image.encode_png()?),
            map: map.to_file(),
            instruction: instruction.clone(),
            rounds,
            saturated,
            converged,
            per_region_scores: labeled(&s.seg, &scores),
            mean_abs_diff: mean_abs_diff(&s.input, &image)?,
        };
        s.history.push(HistoryEntry {
            source,
            instruction,
            rounds,
            saturated,
            accepted: false,
        });
        s.current = Some((map, image));
        Ok(resp)
    }

    pub fn confirm(&self, id: &str, req: ConfirmRequest) -> SResult<ConfirmResponse> {
        let session = self.session(id)?;
        let mut s = lock(&session);
        let Some((map, _)) = &s.current else {
            return Err(ServiceError::Conflict("nothing to confirm: the session has no output yet".into()));
        };
        let scope = req.scope.unwrap_or(Scope::Global);
        let mut bank = lock(&self.bank);
        let record = confirm(&mut bank, &s.tags, map, &s.measured, &scope)?;
        let total = bank.len();
        drop(bank);
        if let Some(last) = s.history.last_mut() {
            last.accepted = true;
        }
        Ok(ConfirmResponse {
            schema: SCHEMA.into(),
            memory_records_total: total,
            record,
        })
    }

    pub fn state(&self, id: &str) -> SResult<SessionState> {
        let session = self.session(id)?;
        let s = lock(&session);
        let (map, output) = match &s.current {
            Some((m, img)) => (Some(m.to_file()), Some(B64.encode(img.encode_png()?))),
            None => (None, None),
        };
        Ok(SessionState {
            schema: SCHEMA.into(),
            session_id: s.id.clone(),
            width: s.input.width(),
            height: s.input.height(),
            tags: s.tags.iter().map(String::from).collect(),
            regions: region_summaries(&s.seg),
            measured: labeled(&s.seg, s.measured.scores()),
            map,
            output,
            history: s.history.clone(),
        })
    }

    pub fn memory_summary(&self) -> MemorySummary {
        lock(&self.bank).summary()
    }

    /// Renders with the built-in parametric backend (the remote render
    /// contract served by this process).
    pub fn render(&self, req: RenderRequest) -> SResult<Vec<u8>> {
        if req.schema != SCHEMA {
            return Err(ServiceError::Usage(format!("unsupported schema {:?}", req.schema)));
        }
        let bytes = B64
            .decode(req.image.trim())
            .map_err(|e| ServiceError::Input(CoreError::Format(format!("image is not base64: {e}"))))?;
        let (width, height) = Image::peek_dimensions(&bytes).map_err(ServiceError::Input)?;
        if width.max(height) > self.cfg.max_dim {
            return Err(ServiceError::TooLarge {
                width,
                height,
                max: self.cfg.max_dim,
            });
        }
        let (input, map) = req.decode().map_err(ServiceError::Input)?;
        let out = render(&input, &map, &self.reference.cfg)?;
        Ok(out.encode_png()?)
    }
}

fn region_summaries(seg: &SegmentationMap) -> Vec<RegionSummary> {
    seg.regions()
        .iter()
        .map(|r| RegionSummary {
            id: r.id,
            label: r.label.clone(),
            area: r.area,
        })
        .collect()
}

fn labeled(seg: &SegmentationMap, scores: &[AttributeVector]) -> Vec<LabeledScores> {
    seg.regions()
        .iter()
        .zip(scores)
        .map(|(r, &scores)| LabeledScores {
            region: r.id,
            label: r.label.clone(),
            scores,
        })
        .collect()
}
