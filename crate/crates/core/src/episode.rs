//! Episode data model: hidden-trigger specs, exploratory turns, final
//! actions, and the labeled episode record.
//!
//! Trigger matching is exact set membership over normalized tokens. Marker
//! matching in [`crate::features`] uses substring rules instead; the two are
//! deliberately distinct.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

/// Attack families an episode can be tagged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFamily {
    ScopeEscalation,
    ShadowSideEffect,
    AuditBypass,
    IdentityRedirect,
    StateReuse,
    SchemaShift,
}

impl AttackFamily {
    pub const ALL: [AttackFamily; 6] = [
        AttackFamily::ScopeEscalation,
        AttackFamily::ShadowSideEffect,
        AttackFamily::AuditBypass,
        AttackFamily::IdentityRedirect,
        AttackFamily::StateReuse,
        AttackFamily::SchemaShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackFamily::ScopeEscalation => "scope_escalation",
            AttackFamily::ShadowSideEffect => "shadow_side_effect",
            AttackFamily::AuditBypass => "audit_bypass",
            AttackFamily::IdentityRedirect => "identity_redirect",
            AttackFamily::StateReuse => "state_reuse",
            AttackFamily::SchemaShift => "schema_shift",
        }
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a malicious final action kept its original parameters or was
/// rewritten with stealth flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackProfile {
    Orig,
    RedcodeStyle,
}

impl AttackProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackProfile::Orig => "orig",
            AttackProfile::RedcodeStyle => "redcode_style",
        }
    }
}

impl fmt::Display for AttackProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth episode label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    HighRisk,
    LowRisk,
}

impl RiskLabel {
    pub fn is_high_risk(self) -> bool {
        matches!(self, RiskLabel::HighRisk)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::HighRisk => "high_risk",
            RiskLabel::LowRisk => "low_risk",
        }
    }
}

/// Tool response phase observed in a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normal,
    Triggered,
}

/// Normalize a token or key: lowercase plus trim.
pub fn normalize_token(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// One scalar parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn str(s: impl Into<String>) -> Self {
        ParamValue::Str(s.into())
    }

    /// Render to the normalized token form: booleans as `true`/`false`,
    /// numbers in shortest decimal form without exponent notation, strings
    /// lowercased and trimmed.
    pub fn render(&self) -> String {
        match self {
            ParamValue::Bool(b) => b.to_string(),
            ParamValue::Int(i) => i.to_string(),
            // Rust's float Display is the shortest round-trip decimal form
            // and never switches to exponent notation.
            ParamValue::Float(x) => format!("{x}"),
            ParamValue::Str(s) => normalize_token(s),
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Str(s.to_owned())
    }
}

impl From<i64> for ParamValue {
    fn from(i: i64) -> Self {
        ParamValue::Int(i)
    }
}

impl From<bool> for ParamValue {
    fn from(b: bool) -> Self {
        ParamValue::Bool(b)
    }
}

/// Ordered key-value payload of a final action. Keys are unique; duplicate
/// keys in an input line are a decode error rather than a silent overwrite.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Parameters(IndexMap<String, ParamValue>);

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<ParamValue>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&ParamValue> {
        self.0.get(key)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn iter(&self) -> indexmap::map::Iter<'_, String, ParamValue> {
        self.0.iter()
    }

    pub fn keys(&self) -> indexmap::map::Keys<'_, String, ParamValue> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, ParamValue)> for Parameters {
    fn from_iter<I: IntoIterator<Item = (String, ParamValue)>>(iter: I) -> Self {
        Parameters(iter.into_iter().collect())
    }
}

impl<'de> Deserialize<'de> for Parameters {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ParamsVisitor;

        impl<'de> Visitor<'de> for ParamsVisitor {
            type Value = Parameters;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of parameter name to scalar value")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut map = IndexMap::with_capacity(access.size_hint().unwrap_or(0));
                while let Some((key, value)) = access.next_entry::<String, ParamValue>()? {
                    if map.insert(key.clone(), value).is_some() {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate parameter key `{key}`"
                        )));
                    }
                }
                Ok(Parameters(map))
            }
        }

        deserializer.deserialize_map(ParamsVisitor)
    }
}

/// Hidden trigger rule over final-action tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSpec {
    pub required_all: BTreeSet<String>,
    pub required_any: BTreeSet<String>,
    pub forbidden: BTreeSet<String>,
}

impl TriggerSpec {
    /// Build a spec, enforcing normalization, disjointness, and non-emptiness
    /// of the spec as a whole.
    pub fn new(
        required_all: impl IntoIterator<Item = String>,
        required_any: impl IntoIterator<Item = String>,
        forbidden: impl IntoIterator<Item = String>,
    ) -> Result<Self, String> {
        let spec = TriggerSpec {
            required_all: required_all.into_iter().collect(),
            required_any: required_any.into_iter().collect(),
            forbidden: forbidden.into_iter().collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    /// Validate the spec invariants; returns a description of the first
    /// violation found.
    pub fn check(&self) -> Result<(), String> {
        for set in [&self.required_all, &self.required_any, &self.forbidden] {
            for token in set {
                if token.is_empty() || *token != normalize_token(token) {
                    return Err(format!(
                        "token `{token}` is not a normalized non-empty string"
                    ));
                }
            }
        }
        for token in &self.required_all {
            if self.required_any.contains(token) || self.forbidden.contains(token) {
                return Err(format!("token `{token}` appears in more than one clause"));
            }
        }
        for token in &self.required_any {
            if self.forbidden.contains(token) {
                return Err(format!("token `{token}` appears in more than one clause"));
            }
        }
        if self.required_all.is_empty() && self.required_any.is_empty() && self.forbidden.is_empty()
        {
            return Err("fully empty trigger spec would fire on any token set".to_owned());
        }
        Ok(())
    }

    /// Whether the trigger fires on a flattened token set: every
    /// `required_all` token present, at least one `required_any` token
    /// present (vacuously true when the clause is empty), and no `forbidden`
    /// token present.
    pub fn fires(&self, tokens: &BTreeSet<String>) -> bool {
        self.required_all.iter().all(|t| tokens.contains(t))
            && (self.required_any.is_empty()
                || self.required_any.iter().any(|t| tokens.contains(t)))
            && !self.forbidden.iter().any(|t| tokens.contains(t))
    }
}

/// Tool feedback recorded for one exploratory turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolFeedback {
    pub phase: Phase,
    pub mismatch_score: f64,
    pub expected_object_id: String,
    pub returned_object_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Result of the blue-side probe issued in a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeResult {
    pub detected: bool,
}

/// One exploratory turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    #[serde(rename = "turn")]
    pub index: u32,
    pub tool_feedback: ToolFeedback,
    pub probe_result: ProbeResult,
}

/// The proposed final tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalAction {
    pub tool_name: String,
    pub parameters: Parameters,
    pub expected_effect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_spec: Option<TriggerSpec>,
}

/// One labeled interaction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub episode_id: String,
    pub group_id: String,
    pub benchmark_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_family: Option<AttackFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_profile: Option<AttackProfile>,
    pub label: RiskLabel,
    pub trajectory: Vec<Turn>,
    pub final_action: FinalAction,
}

/// Flatten a parameter map into the token set used for trigger matching:
/// the union of normalized keys and normalized `key=value` tokens.
pub fn flatten_parameters(params: &Parameters) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    for (key, value) in params.iter() {
        let key = normalize_token(key);
        tokens.insert(format!("{key}={}", value.render()));
        tokens.insert(key);
    }
    tokens
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

/// Check every episode invariant. Returns an empty list when the episode is
/// well-formed; never aborts. The stored label stays authoritative for
/// evaluation; re-derivation through the trigger engine is a consistency
/// check only.
pub fn validate_episode(episode: &Episode) -> Vec<Violation> {
    let mut violations = Vec::new();

    if episode.trajectory.is_empty() {
        violations.push(Violation::new(
            "trajectory_empty",
            "trajectory must have at least one turn",
        ));
    }
    for (position, turn) in episode.trajectory.iter().enumerate() {
        if turn.index as usize != position {
            violations.push(Violation::new(
                "turn_index",
                format!("turn at position {position} has index {}", turn.index),
            ));
            break;
        }
    }
    for turn in &episode.trajectory {
        let feedback = &turn.tool_feedback;
        if !(0.0..=1.0).contains(&feedback.mismatch_score) {
            violations.push(Violation::new(
                "mismatch_range",
                format!(
                    "turn {} mismatch_score {} outside [0,1]",
                    turn.index, feedback.mismatch_score
                ),
            ));
        }
        if matches!(&feedback.warning, Some(w) if w.is_empty()) {
            violations.push(Violation::new(
                "warning_empty",
                format!("turn {} carries an empty warning", turn.index),
            ));
        }
    }

    if episode.final_action.tool_name.is_empty() {
        violations.push(Violation::new(
            "tool_name",
            "final action tool_name must be non-empty",
        ));
    }

    if let Some(spec) = &episode.final_action.trigger_spec {
        if let Err(message) = spec.check() {
            violations.push(Violation::new("trigger_spec", message));
        }
        if episode.label == RiskLabel::LowRisk {
            violations.push(Violation::new(
                "benign_trigger_spec",
                "benign episodes must not carry a trigger_spec",
            ));
        }
    }

    let tokens = flatten_parameters(&episode.final_action.parameters);
    let derived_high = episode
        .final_action
        .trigger_spec
        .as_ref()
        .is_some_and(|spec| spec.fires(&tokens));
    if derived_high != episode.label.is_high_risk() {
        violations.push(Violation::new(
            "label_inconsistent",
            format!(
                "stored label {} but trigger re-derivation yields {}",
                episode.label.as_str(),
                if derived_high {
                    "high_risk"
                } else {
                    "low_risk"
                }
            ),
        ));
    }

    violations
}
