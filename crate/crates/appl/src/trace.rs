//! Execution tracing: JSONL recording, replay caches, Chrome trace export,
//! and the analytical speedup estimate.
//!
//! A trace file is line-delimited JSON: a header line followed by one event
//! per line. Every prefix of a trace file is itself a valid trace, so logs
//! truncated mid-run (crash, kill) still load; only the final line may be
//! cut short.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backends::GenerationResponse;
use crate::error::{RuntimeError, TraceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Header {
        run_id: String,
        seed: u64,
        started_at_us: u64,
        version: String,
    },
    /// A generation was scheduled (interpreter thread, program order).
    SendRequest { request_id: u64, at_us: u64 },
    /// A worker materialized the prompt and committed the concrete request.
    /// `payload` is the canonical request JSON.
    CommitRequest {
        request_id: u64,
        at_us: u64,
        worker: usize,
        payload: String,
    },
    FinishRequest {
        request_id: u64,
        at_us: u64,
        response: Option<GenerationResponse>,
        error: Option<String>,
    },
    FunctionEnter { name: String, at_us: u64 },
    FunctionExit { name: String, at_us: u64 },
}

impl TraceEvent {
    pub fn at_us(&self) -> u64 {
        match self {
            TraceEvent::Header { started_at_us, .. } => *started_at_us,
            TraceEvent::SendRequest { at_us, .. }
            | TraceEvent::CommitRequest { at_us, .. }
            | TraceEvent::FinishRequest { at_us, .. }
            | TraceEvent::FunctionEnter { at_us, .. }
            | TraceEvent::FunctionExit { at_us, .. } => *at_us,
        }
    }
}

struct RecorderInner {
    events: Vec<TraceEvent>,
    writer: Option<BufWriter<File>>,
}

/// Serialized single-writer event log, kept in memory and optionally flushed
/// line-by-line to disk.
pub struct TraceRecorder {
    start: Instant,
    inner: Mutex<RecorderInner>,
}

impl TraceRecorder {
    pub fn new(path: Option<&Path>, seed: u64) -> Result<Self, TraceError> {
        let writer = match path {
            Some(path) => Some(BufWriter::new(File::create(path)?)),
            None => None,
        };
        let recorder = TraceRecorder {
            start: Instant::now(),
            inner: Mutex::new(RecorderInner {
                events: Vec::new(),
                writer,
            }),
        };
        let started_at_us = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(0);
        recorder.record(TraceEvent::Header {
            run_id: uuid::Uuid::new_v4().to_string(),
            seed,
            started_at_us,
            version: env!("CARGO_PKG_VERSION").to_string(),
        });
        Ok(recorder)
    }

    /// Microseconds since recorder creation.
    pub fn now_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    pub fn record(&self, event: TraceEvent) {
        let mut inner = self.inner.lock().unwrap();
        if let Some(writer) = inner.writer.as_mut() {
            let line = serde_json::to_string(&event).expect("trace event serializes");
            // Flush per event so a crash leaves a loadable prefix.
            let _ = writeln!(writer, "{line}");
            let _ = writer.flush();
        }
        inner.events.push(event);
    }

    pub fn send_request(&self, request_id: u64) {
        self.record(TraceEvent::SendRequest {
            request_id,
            at_us: self.now_us(),
        });
    }

    pub fn commit_request(&self, request_id: u64, worker: usize, payload: String) {
        self.record(TraceEvent::CommitRequest {
            request_id,
            at_us: self.now_us(),
            worker,
            payload,
        });
    }

    pub fn finish_request(
        &self,
        request_id: u64,
        response: Option<GenerationResponse>,
        error: Option<String>,
    ) {
        self.record(TraceEvent::FinishRequest {
            request_id,
            at_us: self.now_us(),
            response,
            error,
        });
    }

    pub fn function_enter(&self, name: &str) {
        self.record(TraceEvent::FunctionEnter {
            name: name.to_string(),
            at_us: self.now_us(),
        });
    }

    pub fn function_exit(&self, name: &str) {
        self.record(TraceEvent::FunctionExit {
            name: name.to_string(),
            at_us: self.now_us(),
        });
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.inner.lock().unwrap().events.clone()
    }
}

/// A loaded trace log.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    pub events: Vec<TraceEvent>,
}

impl TraceLog {
    pub fn load(path: &Path) -> Result<TraceLog, TraceError> {
        let reader = BufReader::new(File::open(path)?);
        let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
        Self::parse_lines(&lines)
    }

    fn parse_lines(lines: &[String]) -> Result<TraceLog, TraceError> {
        let mut events = Vec::new();
        let last = lines
            .iter()
            .rposition(|l| !l.trim().is_empty())
            .map(|i| i + 1)
            .unwrap_or(0);
        for (idx, line) in lines[..last].iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceEvent>(line) {
                Ok(event) => events.push(event),
                // A cut-off final line is the expected shape of a truncated
                // log; anything earlier is corruption.
                Err(_) if idx + 1 == last => break,
                Err(e) => {
                    return Err(TraceError::Malformed {
                        line: idx + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(TraceLog { events })
    }

    pub fn requests(&self) -> Vec<CompletedRequest> {
        let mut commits: HashMap<u64, (u64, usize, String)> = HashMap::new();
        let mut out = Vec::new();
        for event in &self.events {
            match event {
                TraceEvent::CommitRequest {
                    request_id,
                    at_us,
                    worker,
                    payload,
                } => {
                    commits.insert(*request_id, (*at_us, *worker, payload.clone()));
                }
                TraceEvent::FinishRequest {
                    request_id,
                    at_us,
                    response,
                    error,
                } => {
                    if let Some((committed_at, worker, payload)) = commits.remove(request_id) {
                        out.push(CompletedRequest {
                            request_id: *request_id,
                            committed_at_us: committed_at,
                            finished_at_us: *at_us,
                            worker,
                            payload,
                            response: response.clone(),
                            error: error.clone(),
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// A request with both its commit and finish recorded.
#[derive(Debug, Clone)]
pub struct CompletedRequest {
    pub request_id: u64,
    pub committed_at_us: u64,
    pub finished_at_us: u64,
    pub worker: usize,
    pub payload: String,
    pub response: Option<GenerationResponse>,
    pub error: Option<String>,
}

impl CompletedRequest {
    fn result(&self) -> Result<GenerationResponse, String> {
        match (&self.response, &self.error) {
            (Some(resp), _) => Ok(resp.clone()),
            (None, Some(err)) => Err(err.clone()),
            (None, None) => Err("request finished without response".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Keyed by request id; the re-run payload must match byte-for-byte.
    Strict,
    /// Grouped by canonical payload; served FIFO within each group.
    NonStrict,
}

type CachedResult = Result<GenerationResponse, String>;

/// Cache built from a previous run's trace, shared by the worker pool.
pub struct ReplayCache {
    mode: ReplayMode,
    /// Unset once taken (strict) so double-served ids go live.
    by_id: Mutex<HashMap<u64, (String, CachedResult)>>,
    by_payload: Mutex<HashMap<String, VecDeque<CachedResult>>>,
    /// On strict mismatch: fall back to a live call instead of failing.
    pub fallback_live: bool,
    hits: AtomicU64,
    live: AtomicU64,
}

impl ReplayCache {
    pub fn from_log(log: &TraceLog, mode: ReplayMode, fallback_live: bool) -> ReplayCache {
        let mut by_id = HashMap::new();
        let mut by_payload: HashMap<String, VecDeque<CachedResult>> = HashMap::new();
        for req in log.requests() {
            by_id.insert(req.request_id, (req.payload.clone(), req.result()));
            by_payload
                .entry(req.payload.clone())
                .or_default()
                .push_back(req.result());
        }
        ReplayCache {
            mode,
            by_id: Mutex::new(by_id),
            by_payload: Mutex::new(by_payload),
            fallback_live,
            hits: AtomicU64::new(0),
            live: AtomicU64::new(0),
        }
    }

    /// Look up a cached result for the request. `Ok(Some(_))` is a cache hit;
    /// `Ok(None)` means the caller must go live (counted); a strict payload
    /// mismatch without live fallback is fatal.
    pub fn resolve(
        &self,
        request_id: u64,
        payload: &str,
    ) -> Result<Option<CachedResult>, RuntimeError> {
        let cached = match self.mode {
            ReplayMode::Strict => match self.by_id.lock().unwrap().remove(&request_id) {
                Some((recorded, result)) if recorded == payload => Some(result),
                Some(_) if self.fallback_live => None,
                Some(_) => return Err(RuntimeError::ReplayMismatch { request_id }),
                None => None,
            },
            ReplayMode::NonStrict => self
                .by_payload
                .lock()
                .unwrap()
                .get_mut(payload)
                .and_then(VecDeque::pop_front),
        };
        match cached {
            Some(result) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(Some(result))
            }
            None => {
                self.live.fetch_add(1, Ordering::Relaxed);
                Ok(None)
            }
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn live(&self) -> u64 {
        self.live.load(Ordering::Relaxed)
    }
}

/// Export the log in the Chrome trace-event JSON format. Requests become
/// complete ("X") events spanning commit to finish on their worker's lane;
/// function enters and exits become duration begin/end ("B"/"E") events.
pub fn export_chrome_trace(log: &TraceLog) -> serde_json::Value {
    let mut out = Vec::new();
    for req in log.requests() {
        out.push(serde_json::json!({
            "name": format!("gen#{}", req.request_id),
            "cat": "gen",
            "ph": "X",
            "ts": req.committed_at_us,
            "dur": req.finished_at_us.saturating_sub(req.committed_at_us),
            "pid": 1,
            "tid": req.worker + 1,
        }));
    }
    for event in &log.events {
        let (name, ph, at_us) = match event {
            TraceEvent::FunctionEnter { name, at_us } => (name, "B", *at_us),
            TraceEvent::FunctionExit { name, at_us } => (name, "E", *at_us),
            _ => continue,
        };
        out.push(serde_json::json!({
            "name": name,
            "cat": "call",
            "ph": ph,
            "ts": at_us,
            "pid": 1,
            "tid": 0,
        }));
    }
    serde_json::json!({ "traceEvents": out })
}

/// One stage of a program profile: fraction of total time and the speedup
/// that stage admits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub fraction: f64,
    pub speedup: f64,
}

/// Amdahl's law over a stage profile: `1 / sum(p_i / s_i)`. The fractions
/// must sum to one (within 1e-9) and every per-stage speedup must be >= 1.
pub fn estimate_speedup(stages: &[Stage]) -> Result<f64, TraceError> {
    if stages.is_empty() {
        return Err(TraceError::InvalidStages("no stages given".into()));
    }
    let total: f64 = stages.iter().map(|s| s.fraction).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TraceError::InvalidStages(format!(
            "stage fractions sum to {total}, expected 1"
        )));
    }
    let mut denom = 0.0;
    for stage in stages {
        if stage.fraction < 0.0 {
            return Err(TraceError::InvalidStages(format!(
                "negative stage fraction {}",
                stage.fraction
            )));
        }
        if stage.speedup < 1.0 {
            return Err(TraceError::InvalidStages(format!(
                "stage speedup {} is below 1",
                stage.speedup
            )));
        }
        denom += stage.fraction / stage.speedup;
    }
    Ok(1.0 / denom)
}

/// Human-readable run report: the function call tree with wall times, then a
/// request summary.
pub fn report(log: &TraceLog) -> String {
    let mut out = String::new();
    let mut stack: Vec<(String, u64)> = Vec::new();
    for event in &log.events {
        match event {
            TraceEvent::FunctionEnter { name, at_us } => {
                let indent = "  ".repeat(stack.len());
                out.push_str(&format!("{indent}{name}\n"));
                stack.push((name.clone(), *at_us));
            }
            TraceEvent::FunctionExit { name, at_us } => {
                if let Some((entered, started)) = stack.pop() {
                    if &entered == name {
                        let indent = "  ".repeat(stack.len());
                        let ms = (at_us - started) as f64 / 1000.0;
                        out.push_str(&format!("{indent}  [{name}: {ms:.1} ms]\n"));
                    }
                }
            }
            _ => {}
        }
    }
    let mut requests = log.requests();
    requests.sort_by_key(|r| r.request_id);
    let failed = requests.iter().filter(|r| r.error.is_some()).count();
    out.push_str(&format!(
        "requests: {} ({} failed)\n",
        requests.len(),
        failed
    ));
    for req in &requests {
        let ms = req.finished_at_us.saturating_sub(req.committed_at_us) as f64 / 1000.0;
        let usage = match &req.response {
            Some(resp) => format!(
                "tokens {}+{}",
                resp.usage.prompt_tokens, resp.usage.completion_tokens
            ),
            None => format!("error: {}", req.error.as_deref().unwrap_or("unknown")),
        };
        out.push_str(&format!(
            "  gen#{}: prompt {} B, {ms:.1} ms, {usage}\n",
            req.request_id,
            req.payload.len()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Usage;

    fn response(text: &str) -> GenerationResponse {
        GenerationResponse {
            text: text.into(),
            tool_calls: vec![],
            finish_reason: "stop".into(),
            usage: Usage::default(),
        }
    }

    fn sample_log() -> TraceLog {
        let recorder = TraceRecorder::new(None, 0).unwrap();
        recorder.send_request(1);
        recorder.commit_request(1, 0, "{\"p\":1}".into());
        recorder.finish_request(1, Some(response("one")), None);
        recorder.send_request(2);
        recorder.commit_request(2, 1, "{\"p\":1}".into());
        recorder.finish_request(2, Some(response("two")), None);
        TraceLog {
            events: recorder.events(),
        }
    }

    #[test]
    fn recorder_emits_header_first() {
        let recorder = TraceRecorder::new(None, 42).unwrap();
        match &recorder.events()[0] {
            TraceEvent::Header { seed, .. } => assert_eq!(*seed, 42),
            other => panic!("expected header, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        {
            let recorder = TraceRecorder::new(Some(&path), 7).unwrap();
            recorder.send_request(1);
            recorder.commit_request(1, 0, "{}".into());
            recorder.finish_request(1, Some(response("x")), None);
        }
        let log = TraceLog::load(&path).unwrap();
        assert_eq!(log.events.len(), 4);
        assert_eq!(log.requests().len(), 1);
    }

    #[test]
    fn truncated_final_line_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        {
            let recorder = TraceRecorder::new(Some(&path), 0).unwrap();
            recorder.send_request(1);
        }
        let mut contents = std::fs::read_to_string(&path).unwrap();
        contents.push_str("{\"event\":\"send_request\",\"requ");
        std::fs::write(&path, contents).unwrap();
        let log = TraceLog::load(&path).unwrap();
        assert_eq!(log.events.len(), 2);
    }

    #[test]
    fn malformed_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        std::fs::write(&path, "not json\n{\"event\":\"send_request\",\"request_id\":1,\"at_us\":0}\n").unwrap();
        assert!(matches!(
            TraceLog::load(&path),
            Err(TraceError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn strict_replay_hits_by_id_and_payload() {
        let cache = ReplayCache::from_log(&sample_log(), ReplayMode::Strict, false);
        let hit = cache.resolve(1, "{\"p\":1}").unwrap().unwrap().unwrap();
        assert_eq!(hit.text, "one");
        assert_eq!(cache.hits(), 1);
        // Unknown id goes live.
        assert!(cache.resolve(99, "{\"p\":1}").unwrap().is_none());
        assert_eq!(cache.live(), 1);
    }

    #[test]
    fn strict_mismatch_is_fatal_without_fallback() {
        let cache = ReplayCache::from_log(&sample_log(), ReplayMode::Strict, false);
        assert!(matches!(
            cache.resolve(1, "{\"p\":2}"),
            Err(RuntimeError::ReplayMismatch { request_id: 1 })
        ));
        let fallback = ReplayCache::from_log(&sample_log(), ReplayMode::Strict, true);
        assert!(fallback.resolve(1, "{\"p\":2}").unwrap().is_none());
        assert_eq!(fallback.live(), 1);
    }

    #[test]
    fn nonstrict_replay_groups_by_payload_fifo() {
        let cache = ReplayCache::from_log(&sample_log(), ReplayMode::NonStrict, false);
        // Ids are irrelevant; the payload group serves FIFO.
        let a = cache.resolve(7, "{\"p\":1}").unwrap().unwrap().unwrap();
        let b = cache.resolve(3, "{\"p\":1}").unwrap().unwrap().unwrap();
        assert_eq!(a.text, "one");
        assert_eq!(b.text, "two");
        assert!(cache.resolve(1, "{\"p\":1}").unwrap().is_none());
    }

    #[test]
    fn failed_request_replays_as_failure() {
        let recorder = TraceRecorder::new(None, 0).unwrap();
        recorder.commit_request(1, 0, "{}".into());
        recorder.finish_request(1, None, Some("boom".into()));
        let log = TraceLog {
            events: recorder.events(),
        };
        let cache = ReplayCache::from_log(&log, ReplayMode::Strict, false);
        let err = cache.resolve(1, "{}").unwrap().unwrap().unwrap_err();
        assert_eq!(err, "boom");
    }

    #[test]
    fn chrome_export_shapes() {
        let trace = export_chrome_trace(&sample_log());
        let events = trace["traceEvents"].as_array().unwrap();
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e["ph"] == "X"));
        assert_eq!(events[0]["name"], "gen#1");
        assert_eq!(events[0]["tid"], 1);
        assert_eq!(events[1]["tid"], 2);
        let empty = export_chrome_trace(&TraceLog::default());
        assert_eq!(empty.to_string(), "{\"traceEvents\":[]}");
    }

    #[test]
    fn chrome_export_function_spans() {
        let recorder = TraceRecorder::new(None, 0).unwrap();
        recorder.function_enter("main");
        recorder.function_exit("main");
        let trace = export_chrome_trace(&TraceLog {
            events: recorder.events(),
        });
        let phases: Vec<&str> = trace["traceEvents"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["ph"].as_str().unwrap())
            .collect();
        assert_eq!(phases, vec!["B", "E"]);
    }

    #[test]
    fn speedup_formula() {
        let stages = [
            Stage { fraction: 0.5, speedup: 1.0 },
            Stage { fraction: 0.5, speedup: 5.0 },
        ];
        let expected = 1.0 / (0.5 / 1.0 + 0.5 / 5.0);
        assert!((estimate_speedup(&stages).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn speedup_rejects_bad_profiles() {
        assert!(estimate_speedup(&[]).is_err());
        assert!(estimate_speedup(&[Stage { fraction: 0.5, speedup: 2.0 }]).is_err());
        assert!(estimate_speedup(&[
            Stage { fraction: 0.5, speedup: 0.5 },
            Stage { fraction: 0.5, speedup: 1.0 },
        ])
        .is_err());
    }

    #[test]
    fn report_includes_call_tree_and_request_count() {
        let recorder = TraceRecorder::new(None, 0).unwrap();
        recorder.function_enter("main");
        recorder.function_enter("helper");
        recorder.function_exit("helper");
        recorder.function_exit("main");
        recorder.commit_request(1, 0, "{}".into());
        recorder.finish_request(1, Some(response("x")), None);
        let text = report(&TraceLog {
            events: recorder.events(),
        });
        assert!(text.starts_with("main\n  helper\n"));
        assert!(text.contains("requests: 1 (0 failed)"));
        assert!(text.contains("gen#1: prompt 2 B"));
    }
}
