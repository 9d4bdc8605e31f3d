//! Scripted transcript replay.
//!
//! A scenario is a TOML file listing player messages (platform + text) and
//! optional per-step expectations about the rendered prompt, the reply and
//! the favorability afterwards. Steps run through the real turn pipeline
//! with a scripted backend and a clock that advances one second per step, so
//! a replay against an empty store always produces the same report.
//!
//! ```toml
//! name = "consistency"
//! user_id = "player-001"
//! start = "2025-06-01T20:00:00Z"
//! script = "consistency.script.jsonl"
//!
//! [[steps]]
//! platform = "game"
//! text = "Hi, nice to meet you!"
//! expect = { favorability = 1, prompt_contains = ["platform: game"] }
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::ManualClock;
use crate::domain::{NpcProfile, Platform, Tier, Timestamp, UserId};
use crate::error::{ConfigError, StoreError};
use crate::llm::ScriptedBackend;
use crate::orchestrator::{InboundMessage, Orchestrator, OrchestratorSettings, TurnError};
use crate::store::DialogueStore;

pub const DEFAULT_START: &str = "2025-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read scenario {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("user {0} already has stored dialogue; reset it or replay into another store")]
    DirtyUser(UserId),
    #[error(transparent)]
    Script(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepExpectations {
    pub prompt_contains: Vec<String>,
    pub prompt_lacks: Vec<String>,
    pub reply_contains: Vec<String>,
    /// Whether a script rule (rather than the fallback) produced the reply.
    pub matched: Option<bool>,
    pub favorability: Option<u8>,
    pub tier: Option<Tier>,
    /// The turn is expected to end in a backend error.
    pub fails: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayStep {
    pub platform: Platform,
    pub text: String,
    /// Overrides the scenario's user for this step.
    pub user_id: Option<UserId>,
    #[serde(default)]
    pub expect: StepExpectations,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayScenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub user_id: UserId,
    pub start: Option<Timestamp>,
    /// Script file, relative to the scenario file.
    pub script: Option<PathBuf>,
    pub steps: Vec<ReplayStep>,
}

impl ReplayScenario {
    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let scenario: Self =
            toml::from_str(text).map_err(|e| ReplayError::Invalid(e.message().to_string()))?;
        if scenario.steps.is_empty() {
            return Err(ReplayError::Invalid("scenario has no steps".into()));
        }
        for (i, step) in scenario.steps.iter().enumerate() {
            let user = step.user_id.as_ref().unwrap_or(&scenario.user_id);
            InboundMessage::new(user.as_str(), step.platform, &step.text)
                .map_err(|e| ReplayError::Invalid(format!("step {}: {e}", i + 1)))?;
        }
        Ok(scenario)
    }

    /// Reads a scenario file and resolves its `script` path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ReplayError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut scenario = Self::parse(&text)?;
        if let Some(script) = &scenario.script {
            if script.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                scenario.script = Some(base.join(script));
            }
        }
        Ok(scenario)
    }

    pub fn start(&self) -> Timestamp {
        self.start
            .unwrap_or_else(|| Timestamp::parse(DEFAULT_START).expect("valid default start"))
    }

    pub fn users(&self) -> Vec<UserId> {
        let mut users = vec![self.user_id.clone()];
        for step in &self.steps {
            if let Some(u) = &step.user_id {
                if !users.contains(u) {
                    users.push(u.clone());
                }
            }
        }
        users
    }
}

/// Scenarios shipped with the crate: cross-platform memory and platform rules.
pub mod bundled {
    use super::{ReplayError, ReplayScenario};
    use crate::llm::ScriptedBackend;

    pub const NAMES: [&str; 2] = ["consistency", "platform"];

    pub const CONSISTENCY: &str = include_str!("../fixtures/scenarios/consistency.toml");
    pub const CONSISTENCY_SCRIPT: &str =
        include_str!("../fixtures/scenarios/consistency.script.jsonl");
    pub const PLATFORM: &str = include_str!("../fixtures/scenarios/platform.toml");
    pub const PLATFORM_SCRIPT: &str = include_str!("../fixtures/scenarios/platform.script.jsonl");

    /// Scenario text and script text of a bundled scenario.
    pub fn sources(name: &str) -> Option<(&'static str, &'static str)> {
        match name {
            "consistency" => Some((CONSISTENCY, CONSISTENCY_SCRIPT)),
            "platform" => Some((PLATFORM, PLATFORM_SCRIPT)),
            _ => None,
        }
    }

    pub fn load(name: &str) -> Option<Result<(ReplayScenario, ScriptedBackend), ReplayError>> {
        let (scenario, script) = sources(name)?;
        Some(ReplayScenario::parse(scenario).and_then(|s| {
            let backend = ScriptedBackend::parse(script)
                .map_err(|e| ReplayError::Invalid(format!("bundled script: {e}")))?;
            Ok((s, backend))
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub user_id: UserId,
    pub platform: Platform,
    pub timestamp: Timestamp,
    pub text: String,
    pub reply: Option<String>,
    pub error: Option<String>,
    pub unmatched: bool,
    pub favorability: u8,
    pub tier: Tier,
    pub prompt_tokens: usize,
    pub prompt: String,
    pub checks: Vec<CheckResult>,
}

impl StepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub scenario: String,
    pub npc: String,
    pub steps: Vec<StepReport>,
    pub passed: bool,
}

impl ReplayReport {
    pub fn failed_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter(|s| !s.passed())
            .map(|s| s.step)
            .collect()
    }

    pub fn check_count(&self) -> (usize, usize) {
        let total = self.steps.iter().map(|s| s.checks.len()).sum();
        let failed = self
            .steps
            .iter()
            .flat_map(|s| &s.checks)
            .filter(|c| !c.passed)
            .count();
        (total, failed)
    }

    /// Human-readable report. Contains nothing run-dependent.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "replay {}: {} steps", self.scenario, self.steps.len());
        for s in &self.steps {
            let _ = writeln!(
                out,
                "step {} [{}] {}: {}",
                s.step, s.platform, s.user_id, s.text
            );
            match (&s.reply, &s.error) {
                (Some(reply), _) => {
                    let flag = if s.unmatched {
                        " (no script rule matched)"
                    } else {
                        ""
                    };
                    let _ = writeln!(out, "  -> {}: {reply}{flag}", self.npc);
                }
                (None, Some(err)) => {
                    let _ = writeln!(out, "  -> error: {err}");
                }
                (None, None) => {}
            }
            let _ = writeln!(
                out,
                "  favorability {} ({}), prompt ~{} tokens",
                s.favorability, s.tier, s.prompt_tokens
            );
            for check in &s.checks {
                let mark = if check.passed { "ok  " } else { "FAIL" };
                let _ = writeln!(out, "  {mark} {}", check.description);
            }
        }
        let (total, failed) = self.check_count();
        if self.passed {
            let _ = writeln!(out, "result: PASS ({total} checks)");
        } else {
            let steps: Vec<String> = self.failed_steps().iter().map(|s| s.to_string()).collect();
            let _ = writeln!(
                out,
                "result: FAIL ({failed} of {total} checks failed; steps {})",
                steps.join(", ")
            );
        }
        out
    }
}

fn check(checks: &mut Vec<CheckResult>, description: String, passed: bool) {
    checks.push(CheckResult {
        description,
        passed,
    });
}

/// Feeds every step of `scenario` through the turn pipeline. Each user the
/// scenario touches must have no stored dialogue yet.
pub async fn run(
    scenario: &ReplayScenario,
    backend: Arc<ScriptedBackend>,
    store: Arc<dyn DialogueStore>,
    profile: NpcProfile,
    settings: OrchestratorSettings,
) -> Result<ReplayReport, ReplayError> {
    for user in scenario.users() {
        if store.record_count(&user)? > 0 {
            return Err(ReplayError::DirtyUser(user));
        }
    }
    let start = scenario.start();
    let clock = Arc::new(ManualClock::new(start));
    let npc = profile.name.clone();
    let orch = Orchestrator::new(Arc::clone(&store), backend, profile)
        .with_settings(settings)
        .with_clock(clock.clone());

    let mut steps = Vec::with_capacity(scenario.steps.len());
    for (i, step) in scenario.steps.iter().enumerate() {
        let at = start.plus_seconds(i as i64);
        clock.set(at);
        let user = step
            .user_id
            .clone()
            .unwrap_or_else(|| scenario.user_id.clone());
        let msg = InboundMessage::new(user.as_str(), step.platform, &step.text)
            .map_err(|e| ReplayError::Invalid(format!("step {}: {e}", i + 1)))?;

        let (reply, error, unmatched, prompt, prompt_tokens) = match orch.run_turn(msg).await {
            Ok(turn) => (
                Some(turn.reply.content),
                None,
                turn.unmatched,
                turn.prompt,
                turn.prompt_tokens,
            ),
            Err(TurnError::Backend { source, prompt, .. }) => {
                let tokens = crate::prompt::estimate_tokens(&prompt);
                (None, Some(source.to_string()), false, prompt, tokens)
            }
            Err(TurnError::Store(e)) => return Err(ReplayError::Store(e)),
            Err(e) => return Err(ReplayError::Invalid(format!("step {}: {e}", i + 1))),
        };
        let state = orch
            .get_state(&user)
            .map_err(|e| ReplayError::Invalid(e.to_string()))?;

        let expect = &step.expect;
        let mut checks = Vec::new();
        if expect.fails {
            check(
                &mut checks,
                "turn fails with a backend error".into(),
                error.is_some(),
            );
        } else if error.is_some() {
            check(&mut checks, "turn completes".into(), false);
        }
        for needle in &expect.prompt_contains {
            check(
                &mut checks,
                format!("prompt contains {needle:?}"),
                prompt.contains(needle.as_str()),
            );
        }
        for needle in &expect.prompt_lacks {
            check(
                &mut checks,
                format!("prompt lacks {needle:?}"),
                !prompt.contains(needle.as_str()),
            );
        }
        for needle in &expect.reply_contains {
            let hit = reply
                .as_deref()
                .is_some_and(|r| r.contains(needle.as_str()));
            check(&mut checks, format!("reply contains {needle:?}"), hit);
        }
        if let Some(matched) = expect.matched {
            let actual = reply.is_some() && !unmatched;
            let what = if matched {
                "a script rule fired"
            } else {
                "no script rule fired"
            };
            check(&mut checks, what.into(), actual == matched);
        }
        if let Some(f) = expect.favorability {
            check(
                &mut checks,
                format!("favorability is {f}"),
                state.favorability == f,
            );
        }
        if let Some(t) = expect.tier {
            check(&mut checks, format!("tier is {t}"), state.tier == t);
        }

        steps.push(StepReport {
            step: i + 1,
            user_id: user,
            platform: step.platform,
            timestamp: at,
            text: step.text.clone(),
            reply,
            error,
            unmatched,
            favorability: state.favorability,
            tier: state.tier,
            prompt_tokens,
            prompt,
            checks,
        });
    }

    let passed = steps.iter().all(StepReport::passed);
    Ok(ReplayReport {
        scenario: scenario.name.clone(),
        npc,
        steps,
        passed,
    })
}
