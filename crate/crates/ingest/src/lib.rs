//! Client for the Met Open Access collection API: record parsing, the
//! public-domain filter, and a concurrent corpus downloader.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_BASE_URL: &str = "https://collectionapi.metmuseum.org/public/collection/v1";
pub const METADATA_FILE: &str = "metadata.csv";
pub const IMAGE_DIR: &str = "images";

const MAX_IMAGE_BYTES: u64 = 64 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("GET {url} failed{}: {message}", status.map(|s| format!(" with status {s}")).unwrap_or_default())]
    Transport {
        url: String,
        status: Option<u16>,
        message: String,
    },
    #[error("unexpected response schema: {0}")]
    Schema(String),
    #[error("no accepted records among {checked} ids")]
    EmptyCorpus { checked: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing metadata: {0}")]
    Csv(#[from] csv::Error),
}

impl IngestError {
    /// Worth another attempt: connection failures, throttling, server errors.
    pub fn is_transient(&self) -> bool {
        match self {
            IngestError::Transport { status: None, .. } => true,
            IngestError::Transport { status: Some(s), .. } => *s == 429 || *s >= 500,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One collection object, with the API's camel-case names mapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetObjectRecord {
    #[serde(rename = "objectID")]
    pub object_id: u64,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "isPublicDomain", default)]
    pub is_public_domain: bool,
    #[serde(rename = "primaryImage", default)]
    pub primary_image_url: String,
    #[serde(rename = "artistDisplayName", default)]
    pub artist: Option<String>,
    #[serde(rename = "objectDate", default)]
    pub date: Option<String>,
    #[serde(default)]
    pub department: Option<String>,
    #[serde(default)]
    pub culture: Option<String>,
    #[serde(default)]
    pub medium: Option<String>,
    #[serde(default)]
    pub dimensions: Option<String>,
}

/// Parses one object response. Requires a positive `objectID`.
pub fn parse_object(body: &str) -> Result<MetObjectRecord> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| IngestError::Schema(format!("invalid JSON: {e}")))?;
    match value.get("objectID") {
        Some(id) if id.as_u64().is_some_and(|v| v > 0) => {}
        Some(id) => {
            return Err(IngestError::Schema(format!(
                "objectID must be a positive integer, got {id}"
            )))
        }
        None => return Err(IngestError::Schema("missing objectID".into())),
    }
    serde_json::from_value(value).map_err(|e| IngestError::Schema(e.to_string()))
}

/// Public domain, has a primary image, and is not titled as a fragment.
pub fn accepts(record: &MetObjectRecord) -> bool {
    record.is_public_domain
        && !record.primary_image_url.trim().is_empty()
        && !record.title.to_lowercase().contains("fragment")
}

#[derive(Debug, Deserialize)]
struct ObjectList {
    #[serde(rename = "objectIDs", default)]
    object_ids: Option<Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct MetClient {
    base_url: String,
    agent: ureq::Agent,
}

impl MetClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn get(&self, url: &str, limit: u64) -> Result<Vec<u8>> {
        let transport = |status: Option<u16>, message: String| IngestError::Transport {
            url: url.to_string(),
            status,
            message,
        };
        let mut resp = self.agent.get(url).call().map_err(|e| transport(None, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(transport(Some(status), "non-200 response".into()));
        }
        resp.body_mut()
            .with_config()
            .limit(limit)
            .read_to_vec()
            .map_err(|e| transport(Some(status), e.to_string()))
    }

    pub fn fetch_object(&self, object_id: u64) -> Result<MetObjectRecord> {
        if object_id == 0 {
            return Err(IngestError::Precondition("object ids start at 1".into()));
        }
        let body = self.get(&format!("{}/objects/{object_id}", self.base_url), 1 << 20)?;
        parse_object(&String::from_utf8_lossy(&body))
    }

    /// Every object id the API lists, ascending.
    pub fn fetch_object_ids(&self) -> Result<Vec<u64>> {
        let body = self.get(&format!("{}/objects", self.base_url), 64 << 20)?;
        let list: ObjectList = serde_json::from_slice(&body).map_err(|e| IngestError::Schema(e.to_string()))?;
        let mut ids = list.object_ids.unwrap_or_default();
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }

    pub fn download(&self, url: &str) -> Result<Vec<u8>> {
        self.get(url, MAX_IMAGE_BYTES)
    }
}

/// Exponential backoff: `base`, `2 * base`, ... between at most `max_tries`
/// attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub max_tries: usize,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(500),
            max_tries: 4,
        }
    }
}

impl Backoff {
    pub fn delay(&self, attempt: usize) -> Duration {
        self.base.saturating_mul(1u32 << attempt.min(16))
    }

    /// Retries transient failures only.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && attempt + 1 < self.max_tries.max(1) => {
                    log::debug!("retrying after {e}");
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollectConfig {
    pub n_target: usize,
    pub workers: usize,
    pub backoff: Backoff,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            n_target: 100,
            workers: 20,
            backoff: Backoff::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusEntry {
    pub record: MetObjectRecord,
    /// Relative to the corpus directory.
    pub image_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusManifest {
    pub dir: PathBuf,
    pub entries: Vec<CorpusEntry>,
    pub checked: usize,
    pub rejected: usize,
    pub failed: usize,
}

enum Outcome {
    Accepted(Box<MetObjectRecord>, Vec<u8>),
    Rejected,
    Failed,
}

fn process(client: &MetClient, id: u64, backoff: &Backoff) -> Outcome {
    let record = match backoff.run(|| client.fetch_object(id)) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("object {id}: {e}");
            return Outcome::Failed;
        }
    };
    if !accepts(&record) {
        return Outcome::Rejected;
    }
    match backoff.run(|| client.download(&record.primary_image_url)) {
        Ok(bytes) => Outcome::Accepted(Box::new(record), bytes),
        Err(e) => {
            log::warn!("object {id} image: {e}");
            Outcome::Failed
        }
    }
}

fn image_extension(url: &str) -> &'static str {
    let path = url.split(['?', '#']).next().unwrap_or("").to_ascii_lowercase();
    if path.ends_with(".png") {
        "png"
    } else {
        "jpg"
    }
}

/// Downloads images of accepted objects in ascending id order until
/// `n_target` are stored or the ids run out, then writes the metadata CSV.
/// Fetches run on up to `workers` threads; this thread is the only writer
/// and commits results strictly in id order, so the stored set does not
/// depend on timing.
pub fn collect(client: &MetClient, ids: &[u64], config: &CollectConfig, out_dir: &Path) -> Result<CorpusManifest> {
    if config.n_target == 0 {
        return Err(IngestError::Precondition("n_target must be >= 1".into()));
    }
    if config.workers == 0 {
        return Err(IngestError::Precondition("workers must be >= 1".into()));
    }
    let mut ids: Vec<u64> = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();

    let image_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&image_dir).map_err(io_err(&image_dir))?;

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut entries = Vec::new();
    let (mut checked, mut rejected, mut failed) = (0, 0, 0);

    thread::scope(|s| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Outcome)>();
        for _ in 0..config.workers.min(ids.len().max(1)) {
            let tx = tx.clone();
            let (ids, next, stop) = (&ids, &next, &stop);
            s.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(&id) = ids.get(idx) else { break };
                if tx.send((idx, process(client, id, &config.backoff))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        let mut result = Ok(());
        for (idx, outcome) in rx {
            pending.insert(idx, outcome);
            while result.is_ok() && entries.len() < config.n_target {
                let Some(outcome) = pending.remove(&cursor) else { break };
                cursor += 1;
                checked += 1;
                match outcome {
                    Outcome::Rejected => rejected += 1,
                    Outcome::Failed => failed += 1,
                    Outcome::Accepted(record, bytes) => {
                        let name = PathBuf::from(IMAGE_DIR).join(format!(
                            "{}.{}",
                            record.object_id,
                            image_extension(&record.primary_image_url)
                        ));
                        let path = out_dir.join(&name);
                        if let Err(e) = fs::write(&path, &bytes).map_err(io_err(&path)) {
                            result = Err(e);
                            stop.store(true, Ordering::Relaxed);
                            break;
                        }
                        entries.push(CorpusEntry {
                            record: *record,
                            image_file: name,
                        });
                    }
                }
            }
            if entries.len() >= config.n_target || result.is_err() {
                stop.store(true, Ordering::Relaxed);
            }
        }
        result
    })?;

    if entries.is_empty() {
        return Err(IngestError::EmptyCorpus { checked });
    }
    write_metadata(&out_dir.join(METADATA_FILE), &entries)?;
    Ok(CorpusManifest {
        dir: out_dir.to_path_buf(),
        entries,
        checked,
        rejected,
        failed,
    })
}

pub const METADATA_COLUMNS: [&str; 9] = [
    "object_id",
    "title",
    "artist",
    "date",
    "department",
    "culture",
    "medium",
    "dimensions",
    "image_file",
];

pub fn write_metadata(path: &Path, entries: &[CorpusEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METADATA_COLUMNS)?;
    for e in entries {
        let r = &e.record;
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        w.write_record([
            r.object_id.to_string(),
            r.title.clone(),
            opt(&r.artist),
            opt(&r.date),
            opt(&r.department),
            opt(&r.culture),
            opt(&r.medium),
            opt(&r.dimensions),
            e.image_file.to_string_lossy().replace('\\', "/"),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
