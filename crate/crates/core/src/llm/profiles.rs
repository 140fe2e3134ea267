use super::LlmError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// OpenAI chat-completions wire format.
    OpenAi,
    Anthropic,
    /// OpenAI-compatible endpoint hosted by Together.
    Together,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointProfile {
    pub name: String,
    pub provider: Provider,
    pub model: String,
    pub base_url: String,
    /// Environment variable holding the credential.
    pub api_key_env: String,
}

impl EndpointProfile {
    pub fn api_key(&self) -> Result<String, LlmError> {
        std::env::var(&self.api_key_env)
            .map_err(|_| LlmError::Config(format!("profile `{}` needs ${} to be set", self.name, self.api_key_env)))
    }
}

const BUILTIN: &str = include_str!("../../profiles.json");

/// Built-in profiles, or those in the JSON file named by `SURROGATE_PROFILES`.
pub fn profiles() -> Result<Vec<EndpointProfile>, LlmError> {
    let text = match std::env::var("SURROGATE_PROFILES") {
        Ok(path) => std::fs::read_to_string(&path).map_err(|e| LlmError::Config(format!("{path}: {e}")))?,
        Err(_) => BUILTIN.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("profiles: {e}")))
}

pub fn profile(name: &str) -> Result<EndpointProfile, LlmError> {
    profiles()?
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| LlmError::Config(format!("unknown profile `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles() {
        let ps: Vec<EndpointProfile> = serde_json::from_str(BUILTIN).unwrap();
        let models: Vec<&str> = ps.iter().map(|p| p.model.as_str()).collect();
        assert_eq!(models, ["gpt-4o-2024-08-06", "claude-3-5-sonnet-20241022", "meta-llama/Llama-3.3-70B-Instruct-Turbo"]);
        assert_eq!(ps[1].provider, Provider::Anthropic);
        let missing = EndpointProfile { api_key_env: "SURROGATE_TEST_UNSET_KEY".into(), ..ps[0].clone() };
        assert!(matches!(missing.api_key(), Err(LlmError::Config(_))));
    }
}
