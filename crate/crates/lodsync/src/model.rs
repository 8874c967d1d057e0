//! Organization model: roles, communication groups, the score coefficient and
//! the group-assignment policy.
//!
//! Every role carries a designer-assigned significance weight (lower weight =
//! more important). At runtime an entity's score is
//!
//! ```text
//! score = weight * current network congestion
//! ```
//!
//! where congestion is the measured packet-loss percentage in `[0, 100]`.
//! The percent convention is a config contract: with the shipped thresholds
//! (7 / 15 / 70) and weights (0.5 / 1 / 1.5), a 10% loss spreads the roles
//! across three groups.
//!
//! An entity's expected group is the one with the lowest threshold that is
//! still strictly greater than its score; scores that clear every finite
//! threshold land in the catch-all group (the one configured without a
//! threshold). A designated entity-of-reference role gates reassignment:
//! the whole organization is reshuffled only when the ER's expected group
//! differs from its current one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// A role: functional kind of entity plus its significance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSpec {
    pub name: String,
    /// Positive, dimensionless. Lower means more important.
    pub weight: f64,
}

/// One communication group. `group_id` is the position in importance order
/// (0 = most important). `threshold` of `None` marks the catch-all group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupConfig {
    pub group_id: u8,
    pub name: String,
    pub period_ms: u64,
    pub threshold: Option<f64>,
}

impl GroupConfig {
    fn threshold_key(&self) -> f64 {
        self.threshold.unwrap_or(f64::INFINITY)
    }
}

/// A game entity as the organization sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub entity_id: u32,
    pub role: String,
    pub current_group: u8,
    /// Opaque game-specific blob, replicated verbatim. At most 65535 bytes.
    pub state: Vec<u8>,
    pub last_update_tick: u32,
}

/// A validated, importance-ordered group list. Constructing one proves the
/// group invariants, which makes [`GroupSet::expected_group`] total.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    groups: Vec<GroupConfig>,
}

/// A single violated group-config invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigViolation {
    NoCatchAll,
    MultipleCatchAlls { names: Vec<String> },
    CatchAllNotLast { name: String },
    ThresholdNotIncreasing { name: String },
    PeriodNotIncreasing { name: String },
    NonPositivePeriod { name: String },
    EmptyGroupList,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::NoCatchAll => write!(f, "no catch-all group (every group has a threshold)"),
            ConfigViolation::MultipleCatchAlls { names } => {
                write!(f, "multiple catch-alls: {}", names.join(", "))
            }
            ConfigViolation::CatchAllNotLast { name } => {
                write!(f, "catch-all group '{name}' is not last in importance order")
            }
            ConfigViolation::ThresholdNotIncreasing { name } => {
                write!(f, "threshold not strictly increasing at group '{name}'")
            }
            ConfigViolation::PeriodNotIncreasing { name } => {
                write!(f, "period not increasing with threshold at group '{name}'")
            }
            ConfigViolation::NonPositivePeriod { name } => {
                write!(f, "group '{name}' has period_ms = 0")
            }
            ConfigViolation::EmptyGroupList => write!(f, "no groups configured"),
        }
    }
}

/// Checks every group invariant and reports all violations. Never fails:
/// a valid config simply returns an empty list.
pub fn validate_group_config(groups: &[GroupConfig]) -> Vec<ConfigViolation> {
    let mut violations = Vec::new();
    if groups.is_empty() {
        violations.push(ConfigViolation::EmptyGroupList);
        return violations;
    }
    let catch_alls: Vec<&GroupConfig> = groups.iter().filter(|g| g.threshold.is_none()).collect();
    match catch_alls.len() {
        0 => violations.push(ConfigViolation::NoCatchAll),
        1 => {
            let ca = catch_alls[0];
            if ca.group_id != groups.last().unwrap().group_id {
                violations.push(ConfigViolation::CatchAllNotLast { name: ca.name.clone() });
            }
        }
        _ => violations.push(ConfigViolation::MultipleCatchAlls {
            names: catch_alls.iter().map(|g| g.name.clone()).collect(),
        }),
    }
    for g in groups {
        if g.period_ms == 0 {
            violations.push(ConfigViolation::NonPositivePeriod { name: g.name.clone() });
        }
    }
    // Importance order in the list must match threshold-ascending order, with
    // periods growing alongside (lower threshold <=> more frequent updates).
    for pair in groups.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.threshold_key() <= a.threshold_key() {
            violations.push(ConfigViolation::ThresholdNotIncreasing { name: b.name.clone() });
        }
        if b.period_ms <= a.period_ms {
            violations.push(ConfigViolation::PeriodNotIncreasing { name: b.name.clone() });
        }
    }
    violations
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("congestion {0} outside [0, 100]; the monitor produced a bad value")]
    CongestionOutOfRange(f64),
    #[error("non-positive significance weight {0}")]
    BadWeight(f64),
    #[error("invalid group config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGroups(Vec<ConfigViolation>),
    #[error("no entity carries the entity-of-reference role '{0}'")]
    NoEntityOfReference(String),
    #[error("role '{0}' is not defined in the organization")]
    UnknownRole(String),
    #[error("group id {0} is not configured")]
    UnknownGroup(u8),
}

/// Runtime score: `weight * congestion`. Congestion is a loss percentage in
/// `[0, 100]`; anything outside that range signals a monitor bug and is
/// rejected.
pub fn score_coefficient(weight: f64, congestion: f64) -> Result<f64, ModelError> {
    if !(weight > 0.0) {
        return Err(ModelError::BadWeight(weight));
    }
    if !(0.0..=100.0).contains(&congestion) {
        return Err(ModelError::CongestionOutOfRange(congestion));
    }
    Ok(weight * congestion)
}

impl GroupSet {
    /// Validates and takes ownership of an importance-ordered group list.
    pub fn new(groups: Vec<GroupConfig>) -> Result<Self, ModelError> {
        let violations = validate_group_config(&groups);
        if violations.is_empty() {
            Ok(GroupSet { groups })
        } else {
            Err(ModelError::InvalidGroups(violations))
        }
    }

    pub fn groups(&self) -> &[GroupConfig] {
        &self.groups
    }

    pub fn get(&self, group_id: u8) -> Option<&GroupConfig> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    pub fn period_ms(&self, group_id: u8) -> Option<u64> {
        self.get(group_id).map(|g| g.period_ms)
    }

    pub fn catch_all(&self) -> &GroupConfig {
        self.groups.iter().find(|g| g.threshold.is_none()).expect("validated: exactly one catch-all")
    }

    /// Assignment policy: among groups whose threshold is strictly greater
    /// than the score, pick the one with the lowest threshold; if none
    /// qualifies, the catch-all takes the entity. Total for every
    /// non-negative score.
    pub fn expected_group(&self, score: f64) -> u8 {
        self.groups
            .iter()
            .filter(|g| g.threshold.map_or(false, |t| score < t))
            .min_by(|a, b| a.threshold_key().partial_cmp(&b.threshold_key()).unwrap())
            .unwrap_or_else(|| self.catch_all())
            .group_id
    }
}

/// Delta produced by a full reassignment: one entry per entity that moved.
pub type AssignmentDelta = Vec<EntityMove>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntityMove {
    pub entity_id: u32,
    pub old_group: u8,
    pub new_group: u8,
}

/// The whole organization: role definitions, validated groups, the entity
/// roster and the designated entity-of-reference role.
#[derive(Debug, Clone)]
pub struct Organization {
    roles: BTreeMap<String, RoleSpec>,
    groups: GroupSet,
    pub entities: BTreeMap<u32, EntityRecord>,
    er_role: String,
}

impl Organization {
    pub fn new(roles: Vec<RoleSpec>, groups: GroupSet, er_role: &str) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for r in roles {
            if !(r.weight > 0.0) {
                return Err(ModelError::BadWeight(r.weight));
            }
            map.insert(r.name.clone(), r);
        }
        if !map.contains_key(er_role) {
            return Err(ModelError::UnknownRole(er_role.to_string()));
        }
        Ok(Organization { roles: map, groups, entities: BTreeMap::new(), er_role: er_role.to_string() })
    }

    pub fn groups(&self) -> &GroupSet {
        &self.groups
    }

    pub fn roles(&self) -> impl Iterator<Item = &RoleSpec> {
        self.roles.values()
    }

    pub fn role(&self, name: &str) -> Option<&RoleSpec> {
        self.roles.get(name)
    }

    pub fn er_role(&self) -> &str {
        &self.er_role
    }

    /// Registers an entity, assigning it the most important group (the
    /// zero-congestion expectation).
    pub fn add_entity(&mut self, entity_id: u32, role: &str, state: Vec<u8>) -> Result<(), ModelError> {
        let spec = self.roles.get(role).ok_or_else(|| ModelError::UnknownRole(role.to_string()))?;
        let group = self.groups.expected_group(score_coefficient(spec.weight, 0.0)?);
        self.entities.insert(
            entity_id,
            EntityRecord { entity_id, role: spec.name.clone(), current_group: group, state, last_update_tick: 0 },
        );
        Ok(())
    }

    fn weight_of(&self, role: &str) -> Result<f64, ModelError> {
        self.roles.get(role).map(|r| r.weight).ok_or_else(|| ModelError::UnknownRole(role.to_string()))
    }

    /// True when the ER's freshly computed expected group differs from its
    /// current group, i.e. when a full reassignment is warranted.
    pub fn er_trigger_check(&self, congestion: f64) -> Result<bool, ModelError> {
        let er = self
            .entities
            .values()
            .find(|e| e.role == self.er_role)
            .ok_or_else(|| ModelError::NoEntityOfReference(self.er_role.clone()))?;
        let score = score_coefficient(self.weight_of(&er.role)?, congestion)?;
        Ok(self.groups.expected_group(score) != er.current_group)
    }

    /// Recomputes every entity's score and moves it to its expected group.
    /// Returns only the entities whose group changed.
    pub fn reassign_all(&mut self, congestion: f64) -> Result<AssignmentDelta, ModelError> {
        let mut delta = Vec::new();
        // Scores are per role, so resolve each role's target group once.
        let mut targets: BTreeMap<String, u8> = BTreeMap::new();
        for role in self.roles.values() {
            let score = score_coefficient(role.weight, congestion)?;
            targets.insert(role.name.clone(), self.groups.expected_group(score));
        }
        for e in self.entities.values_mut() {
            let new_group = targets[&e.role];
            if new_group != e.current_group {
                delta.push(EntityMove { entity_id: e.entity_id, old_group: e.current_group, new_group });
                e.current_group = new_group;
            }
        }
        Ok(delta)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{file}:{line}: {msg}")]
    Line { file: String, line: usize, msg: String },
    #[error("{file}: {msg}")]
    File { file: String, msg: String },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

fn line_err(file: &str, line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Line { file: file.to_string(), line, msg: msg.into() }
}

/// Strips comments and blank lines, yielding (1-based line number, content).
fn meaningful_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

/// Parses a roles file. Line format:
///
/// ```text
/// role <name> weight=<decimal> [er]
/// ```
///
/// Exactly one line must carry the `er` flag; that role becomes the
/// entity of reference.
pub fn parse_roles(text: &str, file: &str) -> Result<(Vec<RoleSpec>, String), ParseError> {
    let mut roles: Vec<RoleSpec> = Vec::new();
    let mut er: Option<String> = None;
    for (n, line) in meaningful_lines(text) {
        let mut parts = line.split_whitespace();
        if parts.next() != Some("role") {
            return Err(line_err(file, n, format!("expected 'role <name> weight=<decimal> [er]', got '{line}'")));
        }
        let name = parts.next().ok_or_else(|| line_err(file, n, "missing role name"))?.to_string();
        if roles.iter().any(|r| r.name == name) {
            return Err(line_err(file, n, format!("duplicate role '{name}'")));
        }
        let weight_kv = parts.next().ok_or_else(|| line_err(file, n, "missing weight=<decimal>"))?;
        let weight: f64 = weight_kv
            .strip_prefix("weight=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| line_err(file, n, format!("bad weight in '{weight_kv}'")))?;
        if !(weight > 0.0) {
            return Err(line_err(file, n, format!("weight must be positive, got {weight}")));
        }
        match parts.next() {
            None => {}
            Some("er") => {
                if let Some(prev) = &er {
                    return Err(line_err(file, n, format!("second 'er' flag; '{prev}' already is the ER")));
                }
                er = Some(name.clone());
            }
            Some(junk) => return Err(line_err(file, n, format!("unexpected token '{junk}'"))),
        }
        roles.push(RoleSpec { name, weight });
    }
    let er = er.ok_or_else(|| ParseError::File { file: file.to_string(), msg: "no role carries the 'er' flag".into() })?;
    if roles.is_empty() {
        return Err(ParseError::File { file: file.to_string(), msg: "no roles defined".into() });
    }
    Ok((roles, er))
}

/// Parses a groups file. Line format, one group per line in importance order:
///
/// ```text
/// group <name> period_ms=<integer> threshold=<decimal|none>
/// ```
pub fn parse_groups(text: &str, file: &str) -> Result<GroupSet, ParseError> {
    let mut groups = Vec::new();
    for (n, line) in meaningful_lines(text) {
        let mut parts = line.split_whitespace();
        if parts.next() != Some("group") {
            return Err(line_err(file, n, format!("expected 'group <name> period_ms=<int> threshold=<decimal|none>', got '{line}'")));
        }
        let name = parts.next().ok_or_else(|| line_err(file, n, "missing group name"))?.to_string();
        let period_kv = parts.next().ok_or_else(|| line_err(file, n, "missing period_ms=<integer>"))?;
        let period_ms: u64 = period_kv
            .strip_prefix("period_ms=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| line_err(file, n, format!("bad period in '{period_kv}'")))?;
        let thr_kv = parts.next().ok_or_else(|| line_err(file, n, "missing threshold=<decimal|none>"))?;
        let thr_str = thr_kv
            .strip_prefix("threshold=")
            .ok_or_else(|| line_err(file, n, format!("bad threshold in '{thr_kv}'")))?;
        let threshold = if thr_str == "none" {
            None
        } else {
            let t: f64 = thr_str
                .parse()
                .map_err(|_| line_err(file, n, format!("bad threshold value '{thr_str}'")))?;
            if t < 0.0 {
                return Err(line_err(file, n, format!("threshold must be non-negative, got {t}")));
            }
            Some(t)
        };
        if let Some(junk) = parts.next() {
            return Err(line_err(file, n, format!("unexpected token '{junk}'")));
        }
        let group_id = u8::try_from(groups.len())
            .map_err(|_| line_err(file, n, "too many groups (max 256)"))?;
        groups.push(GroupConfig { group_id, name, period_ms, threshold });
    }
    GroupSet::new(groups).map_err(|e| ParseError::File { file: file.to_string(), msg: e.to_string() })
}

pub fn load_roles(path: &Path) -> Result<(Vec<RoleSpec>, String), ParseError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io { file: file.clone(), source })?;
    parse_roles(&text, &file)
}

pub fn load_groups(path: &Path) -> Result<GroupSet, ParseError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io { file: file.clone(), source })?;
    parse_groups(&text, &file)
}

/// The four-group server configuration the testbed ships by default:
/// Optimal 5 ms / 7, Enhanced 35 ms / 15, Medium 40 ms / 70, Degraded 75 ms.
pub fn default_groups() -> GroupSet {
    GroupSet::new(vec![
        GroupConfig { group_id: 0, name: "Optimal".into(), period_ms: 5, threshold: Some(7.0) },
        GroupConfig { group_id: 1, name: "Enhanced".into(), period_ms: 35, threshold: Some(15.0) },
        GroupConfig { group_id: 2, name: "Medium".into(), period_ms: 40, threshold: Some(70.0) },
        GroupConfig { group_id: 3, name: "Degraded".into(), period_ms: 75, threshold: None },
    ])
    .expect("default group config is valid")
}

/// Default role weights: reticle 0.5, duck 1 (entity of reference),
/// cloud 1.5; flamingo and gomba ride in the same tier as ducks.
pub fn default_roles() -> (Vec<RoleSpec>, String) {
    (
        vec![
            RoleSpec { name: "reticle".into(), weight: 0.5 },
            RoleSpec { name: "duck".into(), weight: 1.0 },
            RoleSpec { name: "flamingo".into(), weight: 1.0 },
            RoleSpec { name: "gomba".into(), weight: 1.0 },
            RoleSpec { name: "cloud".into(), weight: 1.5 },
        ],
        "duck".to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force assignment oracle, independent of `expected_group`:
    /// linear scan filtering strict C1, then minimum threshold (C2), else
    /// the catch-all.
    pub(crate) fn oracle_expected_group(score: f64, groups: &[GroupConfig]) -> u8 {
        let mut best: Option<&GroupConfig> = None;
        for g in groups {
            if let Some(t) = g.threshold {
                if score < t {
                    best = match best {
                        Some(b) if b.threshold.unwrap() <= t => Some(b),
                        _ => Some(g),
                    };
                }
            }
        }
        match best {
            Some(g) => g.group_id,
            None => groups.iter().find(|g| g.threshold.is_none()).unwrap().group_id,
        }
    }

    fn paper_groups() -> GroupSet {
        default_groups()
    }

    fn name_of(gs: &GroupSet, id: u8) -> &str {
        &gs.get(id).unwrap().name
    }

    #[test]
    fn score_coefficient_is_the_plain_product() {
        assert_eq!(score_coefficient(0.5, 10.0).unwrap(), 5.0);
        assert_eq!(score_coefficient(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(score_coefficient(1.5, 10.0).unwrap(), 15.0);
    }

    #[test]
    fn score_rejects_out_of_range_congestion() {
        assert!(score_coefficient(1.0, -0.1).is_err());
        assert!(score_coefficient(1.0, 100.1).is_err());
        assert!(score_coefficient(1.0, f64::NAN).is_err());
        assert!(score_coefficient(0.0, 10.0).is_err());
    }

    #[test]
    fn expected_group_on_the_shipped_config() {
        let gs = paper_groups();
        assert_eq!(name_of(&gs, gs.expected_group(0.0)), "Optimal");
        // frozen from the linear-scan oracle
        assert_eq!(oracle_expected_group(10.0, gs.groups()), 1);
        assert_eq!(name_of(&gs, gs.expected_group(10.0)), "Enhanced");
        // exactly at a threshold falls through (strict C1)
        assert_eq!(oracle_expected_group(15.0, gs.groups()), 2);
        assert_eq!(name_of(&gs, gs.expected_group(15.0)), "Medium");
        assert_eq!(name_of(&gs, gs.expected_group(1000.0)), "Degraded");
    }

    #[test]
    fn validate_accepts_the_shipped_config() {
        let gs = paper_groups();
        assert!(validate_group_config(gs.groups()).is_empty());
    }

    #[test]
    fn validate_flags_multiple_catch_alls() {
        let groups = vec![
            GroupConfig { group_id: 0, name: "a".into(), period_ms: 5, threshold: None },
            GroupConfig { group_id: 1, name: "b".into(), period_ms: 10, threshold: None },
        ];
        let v = validate_group_config(&groups);
        assert!(v.iter().any(|x| matches!(x, ConfigViolation::MultipleCatchAlls { .. })), "{v:?}");
    }

    #[test]
    fn validate_flags_period_not_increasing() {
        let groups = vec![
            GroupConfig { group_id: 0, name: "a".into(), period_ms: 35, threshold: Some(7.0) },
            GroupConfig { group_id: 1, name: "b".into(), period_ms: 5, threshold: Some(15.0) },
        ];
        let v = validate_group_config(&groups);
        assert!(v.iter().any(|x| matches!(x, ConfigViolation::PeriodNotIncreasing { .. })), "{v:?}");
        // also missing a catch-all; validation reports every violation
        assert!(v.iter().any(|x| matches!(x, ConfigViolation::NoCatchAll)), "{v:?}");
    }

    fn paper_org() -> Organization {
        let (roles, er) = default_roles();
        let mut org = Organization::new(roles, paper_groups(), &er).unwrap();
        org.add_entity(1, "reticle", vec![]).unwrap();
        org.add_entity(2, "duck", vec![]).unwrap();
        org.add_entity(3, "cloud", vec![]).unwrap();
        org
    }

    #[test]
    fn er_trigger_fires_only_on_group_change() {
        let org = paper_org();
        // duck starts in Optimal; congestion 0 keeps it there
        assert!(!org.er_trigger_check(0.0).unwrap());
        // congestion 10 -> duck score 10 -> Enhanced != Optimal
        assert!(org.er_trigger_check(10.0).unwrap());

        let mut moved = paper_org();
        moved.reassign_all(10.0).unwrap();
        // duck now sits in Enhanced; same congestion no longer triggers
        assert!(!moved.er_trigger_check(10.0).unwrap());
    }

    #[test]
    fn er_trigger_without_er_entity_is_an_error() {
        let (roles, er) = default_roles();
        let mut org = Organization::new(roles, paper_groups(), &er).unwrap();
        org.add_entity(1, "reticle", vec![]).unwrap();
        assert!(matches!(org.er_trigger_check(10.0), Err(ModelError::NoEntityOfReference(_))));
    }

    #[test]
    fn reassign_all_matches_the_worked_example() {
        let mut org = paper_org();

        let delta = org.reassign_all(0.0).unwrap();
        assert!(delta.is_empty(), "everything already starts Optimal");
        assert!(org.entities.values().all(|e| e.current_group == 0));

        let delta = org.reassign_all(10.0).unwrap();
        assert_eq!(delta.len(), 2); // reticle stays, duck and cloud move
        assert_eq!(org.entities[&1].current_group, 0); // reticle score 5 -> Optimal
        assert_eq!(org.entities[&2].current_group, 1); // duck score 10 -> Enhanced
        assert_eq!(org.entities[&3].current_group, 2); // cloud score 15 -> Medium

        let delta = org.reassign_all(100.0).unwrap();
        assert!(!delta.is_empty());
        assert_eq!(org.entities[&1].current_group, 2); // 50 -> Medium
        assert_eq!(org.entities[&2].current_group, 3); // 100 >= 70 -> Degraded
        assert_eq!(org.entities[&3].current_group, 3); // 150 -> Degraded
    }

    #[test]
    fn reassign_is_idempotent_at_fixed_congestion() {
        let mut org = paper_org();
        let first = org.reassign_all(37.0).unwrap();
        assert!(!first.is_empty());
        let second = org.reassign_all(37.0).unwrap();
        assert!(second.is_empty());
    }

    #[test]
    fn parse_roles_happy_and_er() {
        let text = "# comment\nrole duck weight=1.0 er\nrole cloud weight=1.5\n";
        let (roles, er) = parse_roles(text, "roles.cfg").unwrap();
        assert_eq!(er, "duck");
        assert_eq!(roles.len(), 2);
        assert_eq!(roles[1].weight, 1.5);
    }

    #[test]
    fn parse_roles_rejects_double_er_and_bad_weight() {
        assert!(parse_roles("role a weight=1 er\nrole b weight=1 er\n", "r").is_err());
        assert!(parse_roles("role a weight=-1 er\n", "r").is_err());
        assert!(parse_roles("role a weight=1\n", "r").is_err(), "missing er flag");
        assert!(parse_roles("role a weight=1 er\nrole a weight=2\n", "r").is_err(), "duplicate name");
    }

    #[test]
    fn parse_groups_shipped_config() {
        let text = "group Optimal period_ms=5 threshold=7\n\
                    group Enhanced period_ms=35 threshold=15\n\
                    group Medium period_ms=40 threshold=70\n\
                    group Degraded period_ms=75 threshold=none\n";
        let gs = parse_groups(text, "groups.cfg").unwrap();
        assert_eq!(gs.groups().len(), 4);
        assert_eq!(gs.catch_all().name, "Degraded");
        assert_eq!(gs.period_ms(1), Some(35));
    }

    #[test]
    fn parse_groups_propagates_validation() {
        let text = "group A period_ms=5 threshold=none\ngroup B period_ms=10 threshold=none\n";
        let err = parse_groups(text, "groups.cfg").unwrap_err();
        assert!(err.to_string().contains("multiple catch-alls"), "{err}");
    }

    /// Random valid group configs for the property tests.
    fn arb_groups() -> impl Strategy<Value = Vec<GroupConfig>> {
        (2usize..6, 0.1f64..20.0, 1u64..30).prop_flat_map(|(n, thr_step, period_step)| {
            (
                proptest::collection::vec(0.1f64..thr_step.max(0.2), n - 1),
                proptest::collection::vec(1u64..period_step.max(2), n),
            )
                .prop_map(move |(thr_incs, period_incs)| {
                    let mut groups = Vec::with_capacity(n);
                    let mut thr = 0.0;
                    let mut period = 0;
                    for i in 0..n {
                        period += period_incs[i];
                        let threshold = if i < n - 1 {
                            thr += thr_incs[i];
                            Some(thr)
                        } else {
                            None
                        };
                        groups.push(GroupConfig {
                            group_id: i as u8,
                            name: format!("g{i}"),
                            period_ms: period,
                            threshold,
                        });
                    }
                    groups
                })
        })
    }

    proptest! {
        #[test]
        fn expected_group_matches_brute_force(groups in arb_groups(), score in 0.0f64..500.0) {
            let ids: Vec<u8> = groups.iter().map(|g| g.group_id).collect();
            let gs = GroupSet::new(groups.clone()).unwrap();
            let got = gs.expected_group(score);
            prop_assert_eq!(got, oracle_expected_group(score, &groups));
            prop_assert!(ids.contains(&got), "totality: always one of the configured groups");
        }

        #[test]
        fn period_is_monotone_in_score(groups in arb_groups(), a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let gs = GroupSet::new(groups).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = gs.period_ms(gs.expected_group(lo)).unwrap();
            let p_hi = gs.period_ms(gs.expected_group(hi)).unwrap();
            prop_assert!(p_lo <= p_hi);
        }

        #[test]
        fn assignment_is_scale_invariant(groups in arb_groups(), weight in 0.1f64..4.0,
                                         congestion in 0.0f64..100.0, k in prop_oneof![Just(0.5), Just(2.0), Just(8.0)]) {
            // Powers of two scale floats exactly, so strict comparisons survive.
            let gs = GroupSet::new(groups.clone()).unwrap();
            let scaled: Vec<GroupConfig> = groups
                .iter()
                .map(|g| GroupConfig { threshold: g.threshold.map(|t| t * k), ..g.clone() })
                .collect();
            let gs2 = GroupSet::new(scaled).unwrap();
            let s1 = score_coefficient(weight, congestion).unwrap();
            let s2 = score_coefficient(weight * k, congestion).unwrap();
            prop_assert_eq!(gs.expected_group(s1), gs2.expected_group(s2));
        }

        #[test]
        fn role_coherence_after_reassign(congestion in 0.0f64..100.0) {
            let mut org = {
                let (roles, er) = default_roles();
                let mut org = Organization::new(roles, default_groups(), &er).unwrap();
                for id in 0..12u32 {
                    let role = ["duck", "cloud", "reticle", "flamingo"][id as usize % 4];
                    org.add_entity(id, role, vec![]).unwrap();
                }
                org
            };
            org.reassign_all(congestion).unwrap();
            let mut by_role: std::collections::HashMap<&str, u8> = Default::default();
            for e in org.entities.values() {
                let g = *by_role.entry(e.role.as_str()).or_insert(e.current_group);
                prop_assert_eq!(g, e.current_group, "entities sharing a role share a group");
            }
        }
    }
}
