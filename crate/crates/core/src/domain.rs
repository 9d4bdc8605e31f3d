//! Domain types shared by every layer of the service, plus the favorability
//! state machine and tone selection.
//!
//! Everything here is an immutable value. Validation happens at construction
//! (and on deserialization), so a value that exists is a value that is valid.

use std::fmt;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::DomainError;

pub const MAX_USER_ID_CHARS: usize = 128;
pub const MAX_CONTENT_CHARS: usize = 4000;
pub const MAX_SCORE: u8 = 100;

/// Opaque player identifier. Compared byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
        let value = value.into();
        if value.is_empty() {
            return Err(DomainError::EmptyUserId);
        }
        let chars = value.chars().count();
        if chars > MAX_USER_ID_CHARS {
            return Err(DomainError::UserIdTooLong(chars));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for UserId {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<UserId> for String {
    fn from(id: UserId) -> Self {
        id.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Something the NPC can do on a platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    /// Visual or physical interaction: being seen, touched, hugged.
    Embodied,
}

impl Capability {
    pub const ALL: [Capability; 1] = [Capability::Embodied];

    pub fn wire_name(self) -> &'static str {
        match self {
            Capability::Embodied => "embodied",
        }
    }
}

/// The surface a message arrives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Game,
    Discord,
}

impl Platform {
    pub const ALL: [Platform; 2] = [Platform::Game, Platform::Discord];

    pub fn wire_name(self) -> &'static str {
        match self {
            Platform::Game => "game",
            Platform::Discord => "discord",
        }
    }

    pub fn has(self, capability: Capability) -> bool {
        match (self, capability) {
            (Platform::Game, Capability::Embodied) => true,
            (Platform::Discord, Capability::Embodied) => false,
        }
    }

    pub fn capabilities(self) -> impl Iterator<Item = Capability> {
        Capability::ALL.into_iter().filter(move |c| self.has(*c))
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl std::str::FromStr for Platform {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "game" => Ok(Platform::Game),
            "discord" => Ok(Platform::Discord),
            other => Err(DomainError::UnknownPlatform(other.to_string())),
        }
    }
}

/// Who said a line. Serialized as the `character` field of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerKind {
    User,
    Npc,
}

impl SpeakerKind {
    pub fn wire_name(self) -> &'static str {
        match self {
            SpeakerKind::User => "user",
            SpeakerKind::Npc => "npc",
        }
    }
}

/// A speaker together with the name shown for it in prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Speaker {
    pub kind: SpeakerKind,
    pub name: String,
}

impl Speaker {
    pub fn user(user_id: &UserId) -> Self {
        Self {
            kind: SpeakerKind::User,
            name: user_id.as_str().to_string(),
        }
    }

    pub fn npc(profile: &NpcProfile) -> Self {
        Self {
            kind: SpeakerKind::Npc,
            name: profile.name.clone(),
        }
    }

    /// Resolves the display name of a stored record's speaker.
    pub fn of_record(record: &DialogueRecord, profile: &NpcProfile) -> Self {
        match record.character {
            SpeakerKind::User => Self::user(&record.user_id),
            SpeakerKind::Npc => Self::npc(profile),
        }
    }
}

/// Favorability score ("haogandu"), always within `0..=100`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

impl Score {
    pub const MIN: Score = Score(0);
    pub const MAX: Score = Score(MAX_SCORE);

    pub fn new(value: u8) -> Result<Self, DomainError> {
        if value > MAX_SCORE {
            return Err(DomainError::ScoreOutOfRange(value.into()));
        }
        Ok(Self(value))
    }

    /// Clamps any integer into range.
    pub fn saturating(value: i64) -> Self {
        Self(value.clamp(0, MAX_SCORE as i64) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn saturating_add(self, increment: u8) -> Self {
        Self::saturating(self.0 as i64 + increment as i64)
    }
}

impl TryFrom<u8> for Score {
    type Error = DomainError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Score> for u8 {
    fn from(score: Score) -> Self {
        score.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Distant,
    Friendly,
    Warm,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Distant, Tier::Friendly, Tier::Warm];

    pub fn wire_name(self) -> &'static str {
        match self {
            Tier::Distant => "distant",
            Tier::Friendly => "friendly",
            Tier::Warm => "warm",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Lowest scores of the Friendly and Warm tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundaries")]
pub struct TierBoundaries {
    friendly_from: u8,
    warm_from: u8,
}

#[derive(Deserialize)]
struct RawBoundaries {
    friendly_from: u8,
    warm_from: u8,
}

impl TryFrom<RawBoundaries> for TierBoundaries {
    type Error = DomainError;

    fn try_from(raw: RawBoundaries) -> Result<Self, Self::Error> {
        Self::new(raw.friendly_from, raw.warm_from)
    }
}

impl TierBoundaries {
    pub fn new(friendly_from: u8, warm_from: u8) -> Result<Self, DomainError> {
        if !(0 < friendly_from && friendly_from < warm_from && warm_from <= MAX_SCORE) {
            return Err(DomainError::InvalidTierBoundaries {
                friendly_from,
                warm_from,
            });
        }
        Ok(Self {
            friendly_from,
            warm_from,
        })
    }

    pub fn friendly_from(&self) -> u8 {
        self.friendly_from
    }

    pub fn warm_from(&self) -> u8 {
        self.warm_from
    }

    pub fn tier_of(&self, score: Score) -> Tier {
        match score.value() {
            s if s >= self.warm_from => Tier::Warm,
            s if s >= self.friendly_from => Tier::Friendly,
            _ => Tier::Distant,
        }
    }
}

impl Default for TierBoundaries {
    fn default() -> Self {
        Self {
            friendly_from: 34,
            warm_from: 67,
        }
    }
}

/// Maps a score to its tier with the default boundaries
/// (0–33 distant, 34–66 friendly, 67–100 warm).
pub fn tier_of(score: Score) -> Tier {
    TierBoundaries::default().tier_of(score)
}

/// Tunables of the favorability state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRules")]
pub struct FavorabilityRules {
    /// Added per user message on an embodied (in-game) platform.
    pub increment: u8,
    #[serde(flatten)]
    pub boundaries: TierBoundaries,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRules {
    increment: Option<u8>,
    friendly_from: Option<u8>,
    warm_from: Option<u8>,
}

impl TryFrom<RawRules> for FavorabilityRules {
    type Error = DomainError;

    fn try_from(raw: RawRules) -> Result<Self, Self::Error> {
        let defaults = TierBoundaries::default();
        Ok(Self {
            increment: raw.increment.unwrap_or(1),
            boundaries: TierBoundaries::new(
                raw.friendly_from.unwrap_or(defaults.friendly_from),
                raw.warm_from.unwrap_or(defaults.warm_from),
            )?,
        })
    }
}

impl Default for FavorabilityRules {
    fn default() -> Self {
        Self {
            increment: 1,
            boundaries: TierBoundaries::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FavorabilityState {
    score: Score,
    tier: Tier,
}

impl FavorabilityState {
    pub fn new(score: Score, rules: &FavorabilityRules) -> Self {
        Self {
            score,
            tier: rules.boundaries.tier_of(score),
        }
    }

    /// State of a player the NPC has never met.
    pub fn initial(rules: &FavorabilityRules) -> Self {
        Self::new(Score::MIN, rules)
    }

    pub fn score(&self) -> Score {
        self.score
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    /// Favorability only grows when the player speaks to the NPC in the
    /// game. Off-game chat and the NPC's own lines leave it untouched.
    pub fn update(
        self,
        platform: Platform,
        speaker: SpeakerKind,
        rules: &FavorabilityRules,
    ) -> Self {
        if platform == Platform::Game && speaker == SpeakerKind::User {
            Self::new(self.score.saturating_add(rules.increment), rules)
        } else {
            Self::new(self.score, rules)
        }
    }
}

/// Free-function form of [`FavorabilityState::update`].
pub fn update_favorability(
    state: FavorabilityState,
    platform: Platform,
    speaker: SpeakerKind,
    rules: &FavorabilityRules,
) -> FavorabilityState {
    state.update(platform, speaker, rules)
}

/// Message text: nonempty, at most 4000 characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Content(String);

impl Content {
    pub fn new(value: impl Into<String>) -> Result<Self, DomainError> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err(DomainError::EmptyContent);
        }
        let chars = value.chars().count();
        if chars > MAX_CONTENT_CHARS {
            return Err(DomainError::ContentTooLong(chars));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Content {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Content> for String {
    fn from(c: Content) -> Self {
        c.0
    }
}

impl fmt::Display for Content {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 128-bit random identifier rendered as 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RecordId(String);

impl RecordId {
    pub fn generate() -> Self {
        Self(format!("{:032x}", rand::random::<u128>()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RecordId {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        let well_formed = value.len() == 32
            && value
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(DomainError::MalformedRecordId(value));
        }
        Ok(Self(value))
    }
}

impl From<RecordId> for String {
    fn from(id: RecordId) -> Self {
        id.0
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// UTC wall-clock instant with millisecond precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(DateTime<Utc>);

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3fZ";

impl Timestamp {
    pub fn from_datetime(at: DateTime<Utc>) -> Self {
        Self(at.trunc_subsecs(3))
    }

    pub fn now() -> Self {
        Self::from_datetime(Utc::now())
    }

    pub fn as_datetime(&self) -> DateTime<Utc> {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        DateTime::parse_from_rfc3339(s)
            .map(|dt| Self::from_datetime(dt.with_timezone(&Utc)))
            .map_err(|_| DomainError::MalformedTimestamp(s.to_string()))
    }

    pub fn plus_seconds(&self, seconds: i64) -> Self {
        Self(self.0 + chrono::Duration::seconds(seconds))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Timestamp::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// A turn that has not been stored yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewRecord {
    pub user_id: UserId,
    pub character: SpeakerKind,
    pub content: Content,
    pub haogandu: Score,
    pub platform: Platform,
    pub timestamp: Timestamp,
}

/// One persisted dialogue turn. Field order is the transcript line order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub record_id: RecordId,
    pub user_id: UserId,
    pub character: SpeakerKind,
    pub content: Content,
    pub haogandu: Score,
    pub platform: Platform,
    pub timestamp: Timestamp,
    pub sequence: u64,
}

impl DialogueRecord {
    pub fn from_new(new: NewRecord, sequence: u64) -> Self {
        Self {
            record_id: RecordId::generate(),
            user_id: new.user_id,
            character: new.character,
            content: new.content,
            haogandu: new.haogandu,
            platform: new.platform,
            timestamp: new.timestamp,
            sequence,
        }
    }
}

/// Tone directive per favorability tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneTable {
    pub distant: String,
    pub friendly: String,
    pub warm: String,
}

impl ToneTable {
    pub fn get(&self, tier: Tier) -> &str {
        match tier {
            Tier::Distant => &self.distant,
            Tier::Friendly => &self.friendly,
            Tier::Warm => &self.warm,
        }
    }
}

impl Default for ToneTable {
    fn default() -> Self {
        Self {
            distant: "polite, reserved, slightly formal".into(),
            friendly: "friendly and relaxed, curious about the player, uses their name".into(),
            warm: "warm, affectionate and familiar, teases the player gently".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityRule {
    pub capability: Capability,
    pub rule: String,
}

/// The single NPC a service instance embodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct NpcProfile {
    pub name: String,
    pub background_story: String,
    pub rules: Vec<String>,
    pub tone_table: ToneTable,
    pub capability_rules: Vec<CapabilityRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: String,
    background_story: String,
    rules: Vec<String>,
    tone_table: ToneTable,
    capability_rules: Vec<CapabilityRule>,
}

impl TryFrom<RawProfile> for NpcProfile {
    type Error = DomainError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        NpcProfile::new(
            raw.name,
            raw.background_story,
            raw.rules,
            raw.tone_table,
            raw.capability_rules,
        )
    }
}

pub const DEFAULT_EMBODIED_RULE: &str = "Seeing you, touching you or any other visual or physical interaction is only possible when the player is with you inside the game.";

impl NpcProfile {
    pub fn new(
        name: String,
        background_story: String,
        rules: Vec<String>,
        tone_table: ToneTable,
        capability_rules: Vec<CapabilityRule>,
    ) -> Result<Self, DomainError> {
        if name.trim().is_empty() {
            return Err(DomainError::InvalidProfile("name is empty".into()));
        }
        if !capability_rules
            .iter()
            .any(|r| r.capability == Capability::Embodied)
        {
            return Err(DomainError::InvalidProfile(
                "capability_rules needs at least one `embodied` rule".into(),
            ));
        }
        Ok(Self {
            name,
            background_story,
            rules,
            tone_table,
            capability_rules,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, DomainError> {
        toml::from_str(text).map_err(|e| DomainError::InvalidProfile(e.message().to_string()))
    }

    pub fn tone_for(&self, state: &FavorabilityState) -> &str {
        self.tone_table.get(state.tier())
    }

    pub fn rules_for(&self, capability: Capability) -> impl Iterator<Item = &str> {
        self.capability_rules
            .iter()
            .filter(move |r| r.capability == capability)
            .map(|r| r.rule.as_str())
    }
}

impl Default for NpcProfile {
    fn default() -> Self {
        Self {
            name: "Lux".into(),
            background_story: "Lux is a quiet young woman with striking blue hair who lives in the small lakeside town where the game takes place. She keeps to herself at first, but she remembers everyone she meets and slowly opens up to people who keep coming back to talk to her.".into(),
            rules: vec![
                "Stay in character as Lux at all times; never mention being an AI or a language model.".into(),
                "Keep replies short: one to three sentences.".into(),
                "Remember what the player told you earlier and refer back to it naturally.".into(),
                "Reply in the language the player uses.".into(),
            ],
            tone_table: ToneTable::default(),
            capability_rules: vec![CapabilityRule {
                capability: Capability::Embodied,
                rule: DEFAULT_EMBODIED_RULE.into(),
            }],
        }
    }
}

/// Tone directive for the profile at the given favorability.
pub fn tone_for<'a>(profile: &'a NpcProfile, state: &FavorabilityState) -> &'a str {
    profile.tone_for(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(v: u8) -> Score {
        Score::new(v).unwrap()
    }

    fn state(v: u8) -> FavorabilityState {
        FavorabilityState::new(score(v), &FavorabilityRules::default())
    }

    #[test]
    fn discord_messages_leave_favorability_alone() {
        let rules = FavorabilityRules::default();
        let next = state(50).update(Platform::Discord, SpeakerKind::User, &rules);
        assert_eq!(next.score().value(), 50);
    }

    #[test]
    fn game_user_message_increments_and_clamps() {
        let rules = FavorabilityRules::default();
        assert_eq!(
            state(0)
                .update(Platform::Game, SpeakerKind::User, &rules)
                .score()
                .value(),
            1
        );
        assert_eq!(
            state(100)
                .update(Platform::Game, SpeakerKind::User, &rules)
                .score()
                .value(),
            100
        );
        assert_eq!(
            state(7)
                .update(Platform::Game, SpeakerKind::Npc, &rules)
                .score()
                .value(),
            7
        );
    }

    #[test]
    fn increment_is_configurable() {
        let rules = FavorabilityRules {
            increment: 40,
            ..Default::default()
        };
        let s = state(70).update(Platform::Game, SpeakerKind::User, &rules);
        assert_eq!(s.score().value(), 100);
        assert_eq!(s.tier(), Tier::Warm);
    }

    #[test]
    fn tier_boundaries() {
        assert_eq!(tier_of(score(0)), Tier::Distant);
        assert_eq!(tier_of(score(33)), Tier::Distant);
        assert_eq!(tier_of(score(34)), Tier::Friendly);
        assert_eq!(tier_of(score(66)), Tier::Friendly);
        assert_eq!(tier_of(score(67)), Tier::Warm);
        assert_eq!(tier_of(score(100)), Tier::Warm);
    }

    #[test]
    fn score_rejects_out_of_range() {
        assert!(Score::new(101).is_err());
        assert!(serde_json::from_str::<Score>("101").is_err());
        assert_eq!(Score::saturating(-5), Score::MIN);
        assert_eq!(Score::saturating(500), Score::MAX);
    }

    #[test]
    fn tier_boundaries_validate_order() {
        assert!(TierBoundaries::new(50, 40).is_err());
        assert!(TierBoundaries::new(0, 40).is_err());
        assert!(TierBoundaries::new(10, 101).is_err());
        let custom = TierBoundaries::new(10, 20).unwrap();
        assert_eq!(custom.tier_of(score(15)), Tier::Friendly);
    }

    #[test]
    fn tone_selection() {
        let profile = NpcProfile::default();
        assert_eq!(
            tone_for(&profile, &state(0)),
            "polite, reserved, slightly formal"
        );
        assert_eq!(tone_for(&profile, &state(100)), profile.tone_table.warm);

        let custom = NpcProfile {
            tone_table: ToneTable {
                distant: "d".into(),
                friendly: "custom friendly tone".into(),
                warm: "w".into(),
            },
            ..NpcProfile::default()
        };
        assert_eq!(tone_for(&custom, &state(40)), "custom friendly tone");
    }

    #[test]
    fn platform_wire_values_and_capabilities() {
        assert_eq!(serde_json::to_string(&Platform::Game).unwrap(), "\"game\"");
        assert_eq!(
            serde_json::to_string(&Platform::Discord).unwrap(),
            "\"discord\""
        );
        assert_eq!(
            serde_json::to_string(&SpeakerKind::User).unwrap(),
            "\"user\""
        );
        assert_eq!(serde_json::to_string(&SpeakerKind::Npc).unwrap(), "\"npc\"");
        assert!(serde_json::from_str::<Platform>("\"Discord\"").is_err());
        assert!(Platform::Game.has(Capability::Embodied));
        assert!(!Platform::Discord.has(Capability::Embodied));
        assert_eq!(Platform::Discord.capabilities().count(), 0);
    }

    #[test]
    fn user_id_limits() {
        assert!(UserId::new("").is_err());
        assert!(UserId::new("x".repeat(128)).is_ok());
        assert!(UserId::new("x".repeat(129)).is_err());
        assert_ne!(UserId::new("Song").unwrap(), UserId::new("song").unwrap());
    }

    #[test]
    fn content_limits() {
        assert!(Content::new("   ").is_err());
        assert!(Content::new("é".repeat(4000)).is_ok());
        assert!(Content::new("a".repeat(4001)).is_err());
    }

    #[test]
    fn timestamp_has_millisecond_wire_format() {
        let ts = Timestamp::parse("2025-03-01T12:00:00.123456Z").unwrap();
        assert_eq!(ts.to_string(), "2025-03-01T12:00:00.123Z");
        assert_eq!(ts.plus_seconds(2).to_string(), "2025-03-01T12:00:02.123Z");
    }

    #[test]
    fn record_ids_are_32_hex() {
        let id = RecordId::generate();
        assert_eq!(id.as_str().len(), 32);
        assert!(RecordId::try_from("XYZ".to_string()).is_err());
        assert_ne!(RecordId::generate(), RecordId::generate());
    }

    #[test]
    fn profile_requires_embodied_rule() {
        let p = NpcProfile::default();
        let err = NpcProfile::new(p.name, p.background_story, p.rules, p.tone_table, vec![]);
        assert!(err.is_err());
    }

    #[test]
    fn profile_toml_needs_every_tier() {
        let text = r#"
name = "Mira"
background_story = "b"
rules = ["r"]
[tone_table]
distant = "d"
friendly = "f"
[[capability_rules]]
capability = "embodied"
rule = "only in game"
"#;
        assert!(NpcProfile::from_toml(text).is_err());
        let full = text.replace("friendly = \"f\"", "friendly = \"f\"\nwarm = \"w\"");
        let profile = NpcProfile::from_toml(&full).unwrap();
        assert_eq!(profile.tone_table.warm, "w");
    }
}
