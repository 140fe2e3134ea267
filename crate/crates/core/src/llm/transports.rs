use super::{ChatRequest, ChatResponse, TranscriptEntry, Transport, TransportError};
use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

type Handler = dyn Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError> + Send + Sync;

/// Transport backed by a closure receiving the request and a zero-based call index.
pub struct FnTransport {
    handler: Box<Handler>,
    calls: Mutex<usize>,
}

impl FnTransport {
    pub fn new(f: impl Fn(&ChatRequest, usize) -> Result<ChatResponse, TransportError> + Send + Sync + 'static) -> Self {
        Self { handler: Box::new(f), calls: Mutex::new(0) }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl Transport for FnTransport {
    fn send(&self, req: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, TransportError> {
        let i = {
            let mut c = self.calls.lock().unwrap();
            *c += 1;
            *c - 1
        };
        (self.handler)(req, i)
    }
}

/// Returns queued replies in order, then fails.
pub struct ScriptedTransport {
    queue: Mutex<VecDeque<Result<String, TransportError>>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        Self { queue: Mutex::new(replies.into_iter().collect()) }
    }

    pub fn texts<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, req: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, TransportError> {
        match self.queue.lock().unwrap().pop_front() {
            Some(Ok(text)) => Ok(ChatResponse::estimated(req, text)),
            Some(Err(e)) => Err(e),
            None => Err(TransportError::Fatal("script exhausted".into())),
        }
    }
}

/// Serves recorded successful responses for identical requests, in recording order.
pub struct ReplayTransport {
    recorded: Mutex<HashMap<String, VecDeque<ChatResponse>>>,
}

impl ReplayTransport {
    pub fn new(entries: &[TranscriptEntry]) -> Self {
        let mut recorded: HashMap<String, VecDeque<ChatResponse>> = HashMap::new();
        for e in entries {
            if let Some(text) = &e.response {
                recorded
                    .entry(e.request.key())
                    .or_default()
                    .push_back(ChatResponse { text: text.clone(), usage: e.usage });
            }
        }
        Self { recorded: Mutex::new(recorded) }
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, TransportError> {
        self.recorded
            .lock()
            .unwrap()
            .get_mut(&req.key())
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| TransportError::Fatal("no recorded response for this request".into()))
    }
}
