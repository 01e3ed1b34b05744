//! On-disk experiment bundles.
//!
//! ```text
//! <out>/manifest.json
//! <out>/sessions/session_000.json
//! <out>/transcripts/session_000.jsonl
//! <out>/exports/
//! ```
//!
//! Nothing wall-clock dependent is written outside transcripts of network
//! providers, so offline runs are byte-identical across invocations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{diff_round, run_session, IntegrityError, SessionError, SessionRecord};
use super::{build_agents, draw_environment, session_runner, ExperimentConfig, ProviderHandle, Providers};
use crate::gateway::{read_transcript, ChatExchange, TranscriptLog};
use crate::llm::TEMPLATE_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatusKind {
    Pending,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub index: u32,
    pub status: SessionStatusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Decision pairs recorded.
    pub decisions: usize,
    /// Model calls logged.
    pub exchanges: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub template_version: String,
    pub config: ExperimentConfig,
    pub sessions: Vec<SessionStatus>,
}

impl Manifest {
    fn fresh(cfg: &ExperimentConfig) -> Self {
        Self {
            tool_version: crate::VERSION.to_string(),
            template_version: TEMPLATE_VERSION.to_string(),
            config: cfg.clone(),
            sessions: (0..cfg.sessions)
                .map(|index| SessionStatus {
                    index,
                    status: SessionStatusKind::Pending,
                    error: None,
                    decisions: 0,
                    exchanges: 0,
                })
                .collect(),
        }
    }

    pub fn complete_sessions(&self) -> impl Iterator<Item = u32> + '_ {
        self.sessions
            .iter()
            .filter(|s| s.status == SessionStatusKind::Complete)
            .map(|s| s.index)
    }
}

/// Paths and typed access to a bundle directory.
#[derive(Debug, Clone)]
pub struct Bundle {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, e: serde_json::Error) -> SessionError {
    SessionError::Setup(format!("{} is not a valid bundle file: {e}", path.display()))
}

impl Bundle {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn session_path(&self, index: u32) -> PathBuf {
        self.root.join("sessions").join(format!("session_{index:03}.json"))
    }

    pub fn transcript_path(&self, index: u32) -> PathBuf {
        self.root.join("transcripts").join(format!("session_{index:03}.jsonl"))
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.root.join("exports")
    }

    fn create_dirs(&self) -> Result<(), SessionError> {
        for dir in ["sessions", "transcripts", "exports"] {
            let p = self.root.join(dir);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(())
    }

    /// Pretty JSON written to a temporary file and renamed into place.
    pub fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), SessionError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| corrupt(path, e))?;
        text.push('\n');
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SessionError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| corrupt(path, e))
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>, SessionError> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        Self::read_json(&path).map(Some)
    }

    pub fn read_session(&self, index: u32) -> Result<SessionRecord, SessionError> {
        Self::read_json(&self.session_path(index))
    }

    /// Every completed session, in index order.
    pub fn read_sessions(&self) -> Result<Vec<SessionRecord>, SessionError> {
        let manifest = self
            .read_manifest()?
            .ok_or_else(|| SessionError::Setup(format!("{} has no manifest.json", self.root.display())))?;
        manifest.complete_sessions().map(|i| self.read_session(i)).collect()
    }

    pub fn read_transcript(&self, index: u32) -> Result<Vec<ChatExchange>, SessionError> {
        let path = self.transcript_path(index);
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_transcript(&path)?)
    }
}

/// What a run produced. Failed sessions do not abort their siblings.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub records: Vec<SessionRecord>,
    pub failures: Vec<(u32, SessionError)>,
}

fn run_one(
    cfg: &ExperimentConfig,
    providers: &Providers,
    bundle: &Bundle,
    index: u32,
) -> (SessionStatus, Result<SessionRecord, SessionError>) {
    let mut status = SessionStatus {
        index,
        status: SessionStatusKind::Failed,
        error: None,
        decisions: 0,
        exchanges: 0,
    };
    let result: Result<SessionRecord, SessionError> = (|| {
        // Replies logged by an interrupted attempt are served again so
        // the resumed session reproduces what already happened.
        let prior = bundle.read_transcript(index)?;
        if !prior.is_empty() {
            log::info!("session {index}: resuming with {} recorded replies", prior.len());
        }
        let runner = session_runner(cfg, index, providers, &prior)?;
        let mut log = TranscriptLog::create(bundle.transcript_path(index))?;
        let outcome = run_session(runner, &mut log);
        status.exchanges = log.len();
        let record = outcome?;
        bundle.write_json(&bundle.session_path(index), &record)?;
        Ok(record)
    })();
    match &result {
        Ok(record) => {
            status.status = SessionStatusKind::Complete;
            status.decisions = record.decision_count();
        }
        Err(e) => status.error = Some(e.to_string()),
    }
    (status, result)
}

/// Runs (or resumes) an experiment into the bundle at `out`.
///
/// Sessions already complete are loaded, not re-run. An existing bundle
/// written for a different configuration is refused.
pub fn run_experiment(cfg: &ExperimentConfig, providers: &Providers, out: &Path) -> Result<RunOutcome, SessionError> {
    let bundle = Bundle::new(out);
    bundle.create_dirs()?;
    let mut manifest = match bundle.read_manifest()? {
        Some(m) if m.config != *cfg => {
            return Err(SessionError::Setup(format!(
                "{} holds a run of a different configuration; choose another output directory",
                out.display()
            )))
        }
        Some(m) => m,
        None => Manifest::fresh(cfg),
    };
    bundle.write_json(&bundle.manifest_path(), &manifest)?;

    let results: Vec<(SessionStatus, Result<SessionRecord, SessionError>)> = manifest
        .sessions
        .clone()
        .into_par_iter()
        .map(|s| {
            if s.status == SessionStatusKind::Complete {
                if let Ok(record) = bundle.read_session(s.index) {
                    return (s, Ok(record));
                }
            }
            run_one(cfg, providers, &bundle, s.index)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    manifest.sessions.clear();
    for (status, result) in results {
        let index = status.index;
        manifest.sessions.push(status);
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                log::error!("session {index} failed: {e}");
                failures.push((index, e));
            }
        }
    }
    bundle.write_json(&bundle.manifest_path(), &manifest)?;
    Ok(RunOutcome {
        manifest,
        records,
        failures,
    })
}

/// Re-executes a recorded session against its transcript and checks every
/// round matches. The environment is re-derived from the seed first.
pub fn replay(cfg: &ExperimentConfig, record: &SessionRecord, transcript: &[ChatExchange]) -> Result<(), SessionError> {
    let index = record.session_index;
    let env = draw_environment(cfg, index);
    if env != record.environment || cfg.environment_seed != record.environment_seed {
        return Err(IntegrityError {
            round: 1,
            detail: "environment does not match the recorded seed".into(),
        }
        .into());
    }
    let providers: Providers = cfg
        .providers
        .iter()
        .map(|(key, p)| {
            let mine = transcript
                .iter()
                .filter(|ex| ex.provider_id == p.provider_id)
                .cloned()
                .collect();
            (key.clone(), ProviderHandle::recorded(p.clone(), mine))
        })
        .collect();
    let (agents, infos) = build_agents(cfg, index, &providers, &[])?;
    let mut runner = super::SessionRunner::new(cfg, index, env, agents, infos).sequential(true);
    for expected in &record.rounds {
        let round = expected.round;
        if runner.is_finished() {
            return Err(IntegrityError {
                round,
                detail: "record has more rounds than the configuration".into(),
            }
            .into());
        }
        let actual = match runner.step() {
            Ok((actual, _)) => actual,
            Err(e) => {
                return Err(IntegrityError {
                    round,
                    detail: e.to_string(),
                }
                .into())
            }
        };
        if let Some(detail) = diff_round(expected, actual) {
            return Err(IntegrityError { round, detail }.into());
        }
    }
    if !runner.is_finished() {
        return Err(IntegrityError {
            round: record.rounds.len() as u32 + 1,
            detail: "record ends early".into(),
        }
        .into());
    }
    let replayed = runner.finish();
    if replayed.payoffs != record.payoffs {
        return Err(IntegrityError {
            round: record.rounds.len() as u32,
            detail: "settled payoffs differ".into(),
        }
        .into());
    }
    Ok(())
}

/// Per-session replay results, in index order.
pub type ReplayReport = Vec<(u32, Result<(), SessionError>)>;

/// Replays every complete session of a bundle.
pub fn replay_bundle(dir: &Path) -> Result<ReplayReport, SessionError> {
    let bundle = Bundle::new(dir);
    let manifest = bundle
        .read_manifest()?
        .ok_or_else(|| SessionError::Setup(format!("{} has no manifest.json", dir.display())))?;
    Ok(manifest
        .complete_sessions()
        .map(|i| {
            let result = bundle
                .read_session(i)
                .and_then(|record| replay(&manifest.config, &record, &bundle.read_transcript(i)?));
            (i, result)
        })
        .collect())
}
