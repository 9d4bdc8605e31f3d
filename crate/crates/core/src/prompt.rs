//! Prompt assembly.
//!
//! [`build_prompt`] gathers everything the model needs for one reply into a
//! [`PromptBundle`]; [`render`] turns the bundle into the plain-text prompt.
//! The rendered layout is a stable interface (scripted backends match against
//! it) and is documented in `docs/prompt-template.md`. Bump
//! [`TEMPLATE_VERSION`] whenever it changes.
//!
//! Favorability is applied in code before this point; platform capabilities
//! are only described here and the model decides how to phrase a refusal.

use crate::domain::{
    Capability, Content, FavorabilityState, NpcProfile, Platform, Speaker, SpeakerKind, UserId,
};
use crate::store::HistoryWindow;

pub const TEMPLATE_VERSION: u32 = 1;

pub const HEADER_SYSTEM: &str = "## System";
pub const HEADER_HISTORY: &str = "## History";
pub const HEADER_CURRENT: &str = "## Current message";
pub const EMPTY_HISTORY: &str = "(no earlier messages)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryTurn {
    pub speaker: Speaker,
    pub platform: Platform,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub npc_name: String,
    pub system_section: String,
    pub history_turns: Vec<HistoryTurn>,
    pub platform: Platform,
    pub player: Speaker,
    pub current_message: String,
}

fn platform_notice(platform: Platform, capability: Capability) -> &'static str {
    match (capability, platform.has(capability)) {
        (Capability::Embodied, true) => {
            "The player is with you inside the game right now, so embodied interaction is possible."
        }
        (Capability::Embodied, false) => {
            "The player is NOT in the game right now, so embodied interaction is impossible here. \
             If the player asks to see you, touch you or do anything physical, say it has to wait \
             and invite them to come back into the game."
        }
    }
}

fn system_section(profile: &NpcProfile, state: &FavorabilityState, platform: Platform) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "You are {}. Stay in this role for the whole conversation.\n",
        profile.name
    ));
    s.push_str("Rules you must follow:\n");
    for rule in &profile.rules {
        s.push_str(&format!("- {rule}\n"));
    }
    s.push_str("Background story:\n");
    s.push_str(&profile.background_story);
    s.push('\n');
    s.push_str(&format!("Tone: {}\n", profile.tone_for(state)));
    s.push_str("Current platform:\n");
    s.push_str(&format!("platform: {}\n", platform.wire_name()));
    for capability in Capability::ALL {
        let flag = if platform.has(capability) {
            "yes"
        } else {
            "no"
        };
        s.push_str(&format!("{}: {flag}\n", capability.wire_name()));
    }
    s.push_str("Capability rules:\n");
    for rule in &profile.capability_rules {
        s.push_str(&format!(
            "- [{}] {}\n",
            rule.capability.wire_name(),
            rule.rule
        ));
    }
    for capability in Capability::ALL {
        s.push_str(platform_notice(platform, capability));
        s.push('\n');
    }
    s
}

/// Assembles the prompt for one NPC reply. Pure and deterministic.
pub fn build_prompt(
    profile: &NpcProfile,
    state: &FavorabilityState,
    user: &UserId,
    platform: Platform,
    window: &HistoryWindow,
    message: &Content,
) -> PromptBundle {
    let history_turns = window
        .records()
        .map(|record| HistoryTurn {
            speaker: Speaker::of_record(record, profile),
            platform: record.platform,
            content: record.content.as_str().to_string(),
        })
        .collect();
    PromptBundle {
        npc_name: profile.name.clone(),
        system_section: system_section(profile, state, platform),
        history_turns,
        platform,
        player: Speaker::user(user),
        current_message: message.as_str().to_string(),
    }
}

fn turn_line(out: &mut String, platform: Platform, speaker: &Speaker, content: &str) {
    let role = match speaker.kind {
        SpeakerKind::User => "user",
        SpeakerKind::Npc => "npc",
    };
    out.push_str(&format!(
        "[{}] {} ({role}): {content}\n",
        platform.wire_name(),
        speaker.name
    ));
}

/// Renders a bundle as text: system section, history (oldest first), current
/// message, reply cue.
pub fn render(bundle: &PromptBundle) -> String {
    let mut out = format!("### NPC PROMPT v{TEMPLATE_VERSION}\n");
    out.push_str(HEADER_SYSTEM);
    out.push('\n');
    out.push_str(&bundle.system_section);
    out.push_str(HEADER_HISTORY);
    out.push('\n');
    if bundle.history_turns.is_empty() {
        out.push_str(EMPTY_HISTORY);
        out.push('\n');
    }
    for turn in &bundle.history_turns {
        turn_line(&mut out, turn.platform, &turn.speaker, &turn.content);
    }
    out.push_str(HEADER_CURRENT);
    out.push('\n');
    turn_line(
        &mut out,
        bundle.platform,
        &bundle.player,
        &bundle.current_message,
    );
    out.push_str(&format!("## Reply as {}\n", bundle.npc_name));
    out
}

/// Splits a rendered prompt into its system part and the conversational
/// remainder, for backends that take separate system and user messages.
/// Text that does not follow the template is returned whole as the remainder.
pub fn split_rendered(prompt: &str) -> (Option<&str>, &str) {
    let marker = format!("\n{HEADER_HISTORY}\n");
    match prompt.find(&marker) {
        Some(at) => (Some(&prompt[..at + 1]), &prompt[at + 1..]),
        None => (None, prompt),
    }
}

/// Rough token count: one token per four characters, rounded up.
/// Reported for budgeting only; nothing is ever truncated on its basis.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}
