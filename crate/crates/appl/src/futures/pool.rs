//! Bounded worker pool executing generation requests off the interpreter
//! thread.
//!
//! Scheduling records `SendRequest` on the caller's thread in program order.
//! A worker then materializes the prompt (blocking on any pending upstream
//! generations), commits the concrete request, serves it from the replay
//! cache or the backend, and resolves the handle. Blocking inside workers
//! cannot deadlock: a request only ever depends on requests with smaller
//! ids, which were queued earlier and are therefore already claimed by some
//! worker or finished.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use crate::backends::{canonical_json, Backend, ConcreteRequest, GenParams, ToolSpec};
use crate::context::Message;
use crate::error::RuntimeError;
use crate::trace::{ReplayCache, TraceRecorder};

use super::GenerationHandle;

pub const DEFAULT_WORKERS: usize = 16;

/// A scheduled generation: messages may still contain pending segments.
pub struct GenerationRequest {
    pub request_id: u64,
    pub messages: Vec<Message>,
    pub params: GenParams,
    pub tool_specs: Vec<ToolSpec>,
    pub handle: GenerationHandle,
}

struct PoolShared {
    backend: Arc<dyn Backend>,
    trace: Arc<TraceRecorder>,
    replay: Option<Arc<ReplayCache>>,
    queue: Mutex<Receiver<GenerationRequest>>,
    in_flight: Mutex<usize>,
    idle: Condvar,
    /// First fatal error observed by any worker (e.g. a replay mismatch).
    fatal: Mutex<Option<RuntimeError>>,
}

pub struct WorkerPool {
    shared: Arc<PoolShared>,
    sender: Option<Sender<GenerationRequest>>,
    workers: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn new(
        workers: usize,
        backend: Arc<dyn Backend>,
        trace: Arc<TraceRecorder>,
        replay: Option<Arc<ReplayCache>>,
    ) -> WorkerPool {
        assert!(workers >= 1, "worker pool needs at least one worker");
        let (sender, receiver) = channel();
        let shared = Arc::new(PoolShared {
            backend,
            trace,
            replay,
            queue: Mutex::new(receiver),
            in_flight: Mutex::new(0),
            idle: Condvar::new(),
            fatal: Mutex::new(None),
        });
        let worker_index = Arc::new(AtomicUsize::new(0));
        let handles = (0..workers)
            .map(|_| {
                let shared = shared.clone();
                let worker_index = worker_index.clone();
                std::thread::spawn(move || {
                    let id = worker_index.fetch_add(1, Ordering::Relaxed);
                    worker_loop(id, &shared);
                })
            })
            .collect();
        WorkerPool {
            shared,
            sender: Some(sender),
            workers: handles,
        }
    }

    /// Queue a request. The `SendRequest` event is recorded here, on the
    /// scheduling thread, so send order equals program order.
    pub fn schedule(&self, request: GenerationRequest) -> Result<(), RuntimeError> {
        let sender = self.sender.as_ref().ok_or(RuntimeError::QueueClosed)?;
        self.shared.trace.send_request(request.request_id);
        *self.shared.in_flight.lock().unwrap() += 1;
        sender.send(request).map_err(|_| RuntimeError::QueueClosed)
    }

    /// Block until every queued request has finished.
    pub fn drain(&self) {
        let mut in_flight = self.shared.in_flight.lock().unwrap();
        while *in_flight > 0 {
            in_flight = self.shared.idle.wait(in_flight).unwrap();
        }
    }

    /// The first fatal worker error, if any.
    pub fn take_fatal(&self) -> Option<RuntimeError> {
        self.shared.fatal.lock().unwrap().take()
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.sender.take();
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

fn worker_loop(worker_id: usize, shared: &PoolShared) {
    loop {
        let request = {
            let queue = shared.queue.lock().unwrap();
            queue.recv()
        };
        let Ok(request) = request else {
            return; // sender dropped: pool is shutting down
        };
        serve(worker_id, shared, request);
        let mut in_flight = shared.in_flight.lock().unwrap();
        *in_flight -= 1;
        if *in_flight == 0 {
            shared.idle.notify_all();
        }
    }
}

fn serve(worker_id: usize, shared: &PoolShared, request: GenerationRequest) {
    request.handle.mark_running();

    // Materialize the prompt, blocking on upstream generations.
    let mut messages = Vec::with_capacity(request.messages.len());
    for message in &request.messages {
        match message.materialize() {
            Ok(wire) => messages.push(wire),
            Err(upstream) => {
                // A failed dependency poisons only this request.
                let message = format!("upstream dependency failed: {upstream}");
                shared
                    .trace
                    .finish_request(request.request_id, None, Some(message.clone()));
                request.handle.fail(message);
                return;
            }
        }
    }

    let concrete = ConcreteRequest {
        request_id: request.request_id,
        messages,
        params: request.params,
        tool_specs: request.tool_specs,
    };
    let payload = canonical_json(&concrete);
    shared
        .trace
        .commit_request(request.request_id, worker_id, payload.clone());

    let cached = match &shared.replay {
        Some(cache) => match cache.resolve(request.request_id, &payload) {
            Ok(cached) => cached,
            Err(fatal) => {
                let message = fatal.to_string();
                shared
                    .trace
                    .finish_request(request.request_id, None, Some(message.clone()));
                shared.fatal.lock().unwrap().get_or_insert(fatal);
                request.handle.fail(message);
                return;
            }
        },
        None => None,
    };

    let result = match cached {
        Some(result) => result,
        None => shared
            .backend
            .complete(&concrete)
            .map_err(|e| e.to_string()),
    };

    match result {
        Ok(response) => {
            shared
                .trace
                .finish_request(request.request_id, Some(response.clone()), None);
            request.handle.resolve(response);
        }
        Err(message) => {
            shared
                .trace
                .finish_request(request.request_id, None, Some(message.clone()));
            request.handle.fail(message);
        }
    }
}
