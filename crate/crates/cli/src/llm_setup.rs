use crate::config::{config_err, load_dataset};
use anyhow::Result;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use surrogate_core::agent::ModelResponder;
use surrogate_core::dataset::{Dataset, Role};
use surrogate_core::generators::GenSpec;
use surrogate_core::llm::{
    profile, ChatRequest, ChatResponse, FnTransport, HttpTransport, LlmClient, ReplayTransport, Transcript, Transport,
    TransportError,
};
use surrogate_core::schema::Schema;
use surrogate_core::scm::{parse_scm, sample_scm, DEFAULT_MAX_ATTEMPTS};

/// Where completions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum LlmSource {
    /// A named endpoint profile; needs its API key in the environment.
    Live(String),
    /// Responses recorded in an earlier transcript.
    Replay(PathBuf),
    /// Offline stand-in driven by a model document (agent and csv) or a dataset (memorize).
    Mock(PathBuf),
}

impl LlmSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("live", p)) => Ok(Self::Live(p.into())),
            Some(("replay", p)) => Ok(Self::Replay(p.into())),
            Some(("mock", p)) => Ok(Self::Mock(p.into())),
            _ => Err(config_err(format!("--llm must be live:<profile>, replay:<transcript> or mock:<file>, got `{s}`"))),
        }
    }

    pub fn to_arg(&self) -> String {
        match self {
            Self::Live(p) => format!("live:{p}"),
            Self::Replay(p) => format!("replay:{}", p.display()),
            Self::Mock(p) => format!("mock:{}", p.display()),
        }
    }

    /// Model name used in requests.
    pub fn model(&self, explicit: Option<&str>) -> Result<String> {
        if let Some(m) = explicit {
            return Ok(m.to_string());
        }
        match self {
            Self::Live(p) => Ok(profile(p).map_err(|e| config_err(e.to_string()))?.model),
            _ => Ok("mock".into()),
        }
    }
}

pub enum MockKind<'a> {
    Agent(&'a Arc<Schema>),
    Csv(&'a Arc<Schema>),
    Memorize(&'a Dataset),
}

fn mock_transport(path: &Path, kind: MockKind<'_>) -> Result<Arc<dyn Transport>> {
    match kind {
        MockKind::Agent(schema) | MockKind::Csv(schema) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let model = parse_scm(&text, schema).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if let MockKind::Agent(_) = kind {
                return Ok(Arc::new(ModelResponder::new(model)));
            }
            Ok(Arc::new(FnTransport::new(move |req, _| {
                let n = requested_rows(req).ok_or_else(|| TransportError::Fatal("not a row-generation prompt".into()))?;
                let spec = GenSpec::new(n, req.seed.unwrap_or(0)).map_err(|e| TransportError::Fatal(e.to_string()))?;
                let sample = sample_scm(&model, &spec, DEFAULT_MAX_ATTEMPTS).map_err(|e| TransportError::Fatal(e.to_string()))?;
                Ok(ChatResponse::estimated(req, sample.dataset.to_csv_string()))
            })))
        }
        MockKind::Memorize(data) => {
            let full = load_dataset(&data.schema, path, Role::Private)?;
            Ok(Arc::new(regurgitator(full)))
        }
    }
}

fn requested_rows(req: &ChatRequest) -> Option<usize> {
    let text = req.user.first()?;
    let rest = text.split("Generate ").nth(1)?;
    rest.split_whitespace().next()?.parse().ok()
}

/// Answers CSV continuation prompts by looking up the prompted rows in `data`.
fn regurgitator(data: Dataset) -> FnTransport {
    let csv = data.to_csv_string();
    let lines: Vec<String> = csv.lines().skip(1).map(str::to_string).collect();
    FnTransport::new(move |req, _| {
        let prompt = req.user.last().cloned().unwrap_or_default();
        let block: Vec<&str> = prompt.lines().filter(|l| l.contains(',')).skip(1).collect();
        let want = prompt
            .split("with the next ")
            .nth(1)
            .and_then(|r| r.split_whitespace().next())
            .and_then(|n| n.parse::<usize>().ok())
            .unwrap_or(1);
        let start = (0..lines.len().saturating_sub(block.len()))
            .find(|&i| block.iter().enumerate().all(|(j, b)| lines[i + j] == b.trim()))
            .ok_or_else(|| TransportError::Fatal("prompted rows not found".into()))?;
        let from = start + block.len();
        let reply = lines[from..(from + want).min(lines.len())].join("\n");
        Ok(ChatResponse::estimated(req, reply))
    })
}

/// Client for `source`, recording every exchange to `transcript`.
pub fn build_client(source: &LlmSource, kind: MockKind<'_>, transcript: &Path) -> Result<Arc<LlmClient>> {
    let transport: Arc<dyn Transport> = match source {
        LlmSource::Live(name) => {
            let p = profile(name).map_err(|e| config_err(e.to_string()))?;
            Arc::new(HttpTransport::from_profile(p).map_err(|e| config_err(e.to_string()))?)
        }
        LlmSource::Replay(path) => {
            let entries = Transcript::load(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Arc::new(ReplayTransport::new(&entries))
        }
        LlmSource::Mock(path) => mock_transport(path, kind)?,
    };
    let log = Transcript::open(transcript).map_err(|e| anyhow::anyhow!("{}: {e}", transcript.display()))?;
    Ok(Arc::new(LlmClient::new(transport).with_transcript(Arc::new(log))))
}
