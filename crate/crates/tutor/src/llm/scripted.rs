//! Offline chat provider driven by a JSON rule file.
//!
//! ```json
//! {
//!   "version": 1,
//!   "rules": [
//!     {"match": ["schema:IntentSchema", "Pending check: none"], "response": "{\"intent\": \"NewInquiry\"}"},
//!     {"match": "ransomware", "response": "...", "once": true},
//!     {"match": "*", "call": 3, "fail_status": 503, "response": "overloaded"}
//!   ]
//! }
//! ```
//!
//! A rule matches when every `match` substring occurs in the rendered
//! prompt (system text and message contents joined by newlines); `"*"`
//! matches anything. The first matching rule wins. `once` rules are spent
//! after one use, `call` restricts a rule to the n-th request (0-based) the
//! provider receives, and `fail_status` turns the reply into a provider
//! error carrying `response` as the body.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tutor_core::gateway::Usage;
use tutor_core::{ChatProvider, Completion, FinishReason, GatewayError, PromptBundle};

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported script version {0}")]
    Version(u32),
    #[error("rule {0}: empty match pattern")]
    EmptyPattern(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchSpec {
    One(String),
    All(Vec<String>),
}

impl MatchSpec {
    fn patterns(&self) -> &[String] {
        match self {
            MatchSpec::One(p) => std::slice::from_ref(p),
            MatchSpec::All(ps) => ps,
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        self.patterns().iter().all(|p| p == "*" || prompt.contains(p.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(rename = "match")]
    pub pattern: MatchSpec,
    pub response: String,
    #[serde(default)]
    pub once: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_status: Option<u16>,
    /// Simulated latency.
    #[serde(default)]
    pub delay_ms: u64,
}

impl Rule {
    pub fn new(pattern: MatchSpec, response: impl Into<String>) -> Self {
        Self {
            pattern,
            response: response.into(),
            once: false,
            call: None,
            fail_status: None,
            delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub version: u32,
    pub rules: Vec<Rule>,
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let script: Script = serde_json::from_str(text)?;
        if script.version != SCRIPT_VERSION {
            return Err(ScriptError::Version(script.version));
        }
        for (i, r) in script.rules.iter().enumerate() {
            if r.pattern.patterns().is_empty() || r.pattern.patterns().iter().any(String::is_empty) {
                return Err(ScriptError::EmptyPattern(i));
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

struct Cursor {
    calls: u64,
    spent: Vec<bool>,
}

pub struct ScriptedProvider {
    rules: Vec<Rule>,
    cursor: Mutex<Cursor>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        let spent = vec![false; script.rules.len()];
        Self {
            rules: script.rules,
            cursor: Mutex::new(Cursor { calls: 0, spent }),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        Script::load(path).map(Self::new)
    }

    /// Requests answered so far, failed ones included.
    pub fn calls(&self) -> u64 {
        self.cursor.lock().unwrap_or_else(|e| e.into_inner()).calls
    }

    fn select(&self, prompt: &str) -> Option<Rule> {
        let mut cur = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let call = cur.calls;
        cur.calls += 1;
        let pos = self.rules.iter().enumerate().position(|(i, r)| {
            !cur.spent[i] && r.call.is_none_or(|c| c == call) && r.pattern.matches(prompt)
        })?;
        if self.rules[pos].once {
            cur.spent[pos] = true;
        }
        Some(self.rules[pos].clone())
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, bundle: &PromptBundle) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        if bundle.params.stream {
            return Err(GatewayError::StreamingUnsupported);
        }
        let prompt = bundle.render();
        let rule = self.select(&prompt).ok_or(GatewayError::NoScriptMatch)?;
        if rule.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(rule.delay_ms));
        }
        if let Some(status) = rule.fail_status {
            return Err(GatewayError::Provider {
                status,
                body_excerpt: rule.response,
            });
        }
        Ok(Completion {
            usage: Usage {
                prompt_units: word_count(&prompt),
                output_units: word_count(&rule.response),
            },
            text: rule.response,
            finish_reason: FinishReason::Stop,
            latency_ms: started.elapsed().as_millis().try_into().unwrap_or(u64::MAX),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tutor_core::gateway::{ChatMessage, GenParams};

    fn bundle(text: &str) -> PromptBundle {
        PromptBundle {
            system_text: "sys".into(),
            messages: vec![ChatMessage::user(text)],
            params: GenParams::teaching(),
        }
    }

    fn script(json: &str) -> ScriptedProvider {
        ScriptedProvider::new(Script::parse(json).unwrap())
    }

    #[test]
    fn substring_rule() {
        let p = script(r#"{"version":1,"rules":[{"match":"malware","response":"T"}]}"#);
        let c = p.complete(&bundle("tell me about malware")).unwrap();
        assert_eq!((c.text.as_str(), c.finish_reason), ("T", FinishReason::Stop));
        assert_eq!(p.complete(&bundle("hello")).unwrap_err(), GatewayError::NoScriptMatch);
    }

    #[test]
    fn first_match_wins_and_once_rules_are_spent() {
        let p = script(
            r#"{"version":1,"rules":[
                {"match":["sys","a"],"response":"first","once":true},
                {"match":"a","response":"second"},
                {"match":"*","response":"fallback"}]}"#,
        );
        assert_eq!(p.complete(&bundle("a")).unwrap().text, "first");
        assert_eq!(p.complete(&bundle("a")).unwrap().text, "second");
        assert_eq!(p.complete(&bundle("zzz")).unwrap().text, "fallback");
    }

    #[test]
    fn ordinal_rules_and_failures() {
        let p = script(
            r#"{"version":1,"rules":[
                {"match":"*","call":1,"fail_status":503,"response":"busy"},
                {"match":"*","response":"ok"}]}"#,
        );
        assert_eq!(p.complete(&bundle("x")).unwrap().text, "ok");
        assert_eq!(
            p.complete(&bundle("x")).unwrap_err(),
            GatewayError::Provider {
                status: 503,
                body_excerpt: "busy".into()
            }
        );
        assert_eq!(p.complete(&bundle("x")).unwrap().text, "ok");
        assert_eq!(p.calls(), 3);
    }

    #[test]
    fn same_script_same_answers() {
        let json = r#"{"version":1,"rules":[{"match":"q","response":"answer one"},{"match":"*","response":"other"}]}"#;
        let run = || {
            let p = script(json);
            ["q1", "x", "q2"].map(|m| p.complete(&bundle(m)).unwrap().text)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(matches!(Script::parse(r#"{"version":2,"rules":[]}"#), Err(ScriptError::Version(2))));
        assert!(matches!(
            Script::parse(r#"{"version":1,"rules":[{"match":[],"response":"x"}]}"#),
            Err(ScriptError::EmptyPattern(0))
        ));
        assert!(Script::parse(r#"{"version":1,"rules":[{"match":"a","respnse":"x"}]}"#).is_err());
    }

    #[test]
    fn streaming_is_refused() {
        let p = script(r#"{"version":1,"rules":[{"match":"*","response":"x"}]}"#);
        let mut b = bundle("x");
        b.params.stream = true;
        assert_eq!(p.complete(&b).unwrap_err(), GatewayError::StreamingUnsupported);
    }
}
