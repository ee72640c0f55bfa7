//! Scenario descriptions: what to generate, who consumes it, and which
//! faults strike when. Parsed from line-oriented `key = value` text
//! with repeated `mdt.*`, `group.*`, `ephemeral.*`, `fault.*` stanzas.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use lcap_core::pipeline::PipelineModule;
use lcap_core::record::ExtMask;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line_no}: expected `key = value`, got {line:?}")]
    Syntax { line_no: usize, line: String },
    #[error("line {line_no}: unknown key {key:?}")]
    UnknownKey { line_no: usize, key: String },
    #[error("line {line_no}: bad value for {key}: {reason}")]
    BadValue { line_no: usize, key: String, reason: String },
    #[error("fault {n} names member {member:?} but group {group:?} has no slot {slot}")]
    BadFaultMember { n: u32, member: String, group: String, slot: usize },
    #[error("fault {n} names unknown group {group:?}")]
    UnknownFaultGroup { n: u32, group: String },
    #[error("group {group:?}: {what} list has {got} entries for {members} members")]
    ListLength { group: String, what: &'static str, got: usize, members: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdtSpec {
    pub mdt_id: u32,
    /// Total records the synthetic producer appends.
    pub records: u64,
    /// Records appended per logical step while any remain.
    pub burst: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub name: String,
    pub members: usize,
    /// One window per member.
    pub windows: Vec<u32>,
    pub mask: ExtMask,
    /// Steps between receiving a record and acking it, per member.
    pub delays: Vec<u64>,
    /// Logical step at which the group's members connect.
    pub join_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EphemeralSpec {
    pub id: u32,
    pub join_at: u64,
    /// Records drained from the outbound queue per step; 0 models a
    /// stalled listener that eventually overflows.
    pub drain: u64,
    pub mask: ExtMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultAction {
    Crash,
    Reconnect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultSpec {
    pub n: u32,
    pub at: u64,
    pub action: FaultAction,
    pub group: String,
    /// Member slot within the group (0-based).
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub mdts: Vec<MdtSpec>,
    pub groups: Vec<GroupSpec>,
    pub ephemerals: Vec<EphemeralSpec>,
    pub faults: Vec<FaultSpec>,
    pub pipeline: Vec<PipelineModule>,
    pub hwm: usize,
    pub batch: usize,
    pub eq_limit: usize,
    pub auto_ack_no_groups: bool,
    /// Extra steps allowed after the last append/fault before the run
    /// is declared stuck.
    pub grace: u64,
}

impl Default for ScenarioSpec {
    fn default() -> ScenarioSpec {
        ScenarioSpec {
            seed: 0,
            mdts: vec![MdtSpec { mdt_id: 1, records: 100, burst: 16 }],
            groups: Vec::new(),
            ephemerals: Vec::new(),
            faults: Vec::new(),
            pipeline: Vec::new(),
            hwm: 65536,
            batch: 1024,
            eq_limit: 1024,
            auto_ack_no_groups: false,
            grace: 10_000,
        }
    }
}

impl ScenarioSpec {
    /// True when fairness is a meaningful property of the run: no
    /// faults, and every member of a group drains at the same speed.
    pub fn fairness_applies(&self) -> bool {
        self.faults.is_empty()
            && self.groups.iter().all(|g| {
                g.members > 0
                    && g.windows.windows(2).all(|w| w[0] == w[1])
                    && g.delays.windows(2).all(|d| d[0] == d[1])
            })
    }

    pub fn load(path: &Path) -> Result<ScenarioSpec, SpecError> {
        let text = std::fs::read_to_string(path)?;
        ScenarioSpec::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ScenarioSpec, SpecError> {
        let mut spec = ScenarioSpec { mdts: Vec::new(), ..ScenarioSpec::default() };
        let mut mdts: BTreeMap<u32, MdtSpec> = BTreeMap::new();
        let mut groups: BTreeMap<String, GroupBuilder> = BTreeMap::new();
        let mut group_order: Vec<String> = Vec::new();
        let mut ephemerals: BTreeMap<u32, EphemeralSpec> = BTreeMap::new();
        let mut faults: BTreeMap<u32, FaultBuilder> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SpecError::Syntax { line_no, line: line.to_string() })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: &str| SpecError::BadValue {
                line_no,
                key: key.to_string(),
                reason: reason.to_string(),
            };

            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["seed"] => spec.seed = value.parse().map_err(|_| bad("expected integer"))?,
                ["hwm"] => spec.hwm = parse_positive(value).ok_or_else(|| bad("expected positive integer"))?,
                ["batch"] => spec.batch = parse_positive(value).ok_or_else(|| bad("expected positive integer"))?,
                ["eq_limit"] => spec.eq_limit = parse_positive(value).ok_or_else(|| bad("expected positive integer"))?,
                ["grace"] => spec.grace = value.parse().map_err(|_| bad("expected integer"))?,
                ["auto_ack_no_groups"] => {
                    spec.auto_ack_no_groups = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("expected true or false")),
                    }
                }
                ["pipeline"] => {
                    spec.pipeline = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PipelineModule::from_str)
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(&e.to_string()))?;
                }
                ["mdt", id, field] => {
                    let mdt_id: u32 = id.parse().map_err(|_| bad("mdt id must be an integer"))?;
                    let entry = mdts
                        .entry(mdt_id)
                        .or_insert(MdtSpec { mdt_id, records: 0, burst: 16 });
                    match *field {
                        "records" => entry.records = value.parse().map_err(|_| bad("expected integer"))?,
                        "burst" => {
                            entry.burst =
                                parse_positive(value).ok_or_else(|| bad("expected positive integer"))? as u64
                        }
                        _ => return Err(SpecError::UnknownKey { line_no, key: key.to_string() }),
                    }
                }
                ["group", name, field] => {
                    if !groups.contains_key(*name) {
                        group_order.push(name.to_string());
                    }
                    let entry = groups.entry(name.to_string()).or_default();
                    match *field {
                        "members" => entry.members = parse_positive(value).ok_or_else(|| bad("expected positive integer"))?,
                        "window" => {
                            entry.windows = parse_list(value).ok_or_else(|| bad("expected integer list"))?
                        }
                        "delay" => {
                            entry.delays = parse_list(value).ok_or_else(|| bad("expected integer list"))?
                        }
                        "mask" => entry.mask = parse_mask(value).ok_or_else(|| bad("expected field list or none"))?,
                        "join_at" => entry.join_at = value.parse().map_err(|_| bad("expected integer"))?,
                        _ => return Err(SpecError::UnknownKey { line_no, key: key.to_string() }),
                    }
                }
                ["ephemeral", n, field] => {
                    let id: u32 = n.parse().map_err(|_| bad("ephemeral id must be an integer"))?;
                    let entry = ephemerals.entry(id).or_insert(EphemeralSpec {
                        id,
                        join_at: 0,
                        drain: u64::MAX,
                        mask: ExtMask::EMPTY,
                    });
                    match *field {
                        "join_at" => entry.join_at = value.parse().map_err(|_| bad("expected integer"))?,
                        "drain" => entry.drain = value.parse().map_err(|_| bad("expected integer"))?,
                        "mask" => entry.mask = parse_mask(value).ok_or_else(|| bad("expected field list or none"))?,
                        _ => return Err(SpecError::UnknownKey { line_no, key: key.to_string() }),
                    }
                }
                ["fault", n, field] => {
                    let n: u32 = n.parse().map_err(|_| bad("fault id must be an integer"))?;
                    let entry = faults.entry(n).or_default();
                    match *field {
                        "at" => entry.at = value.parse().map_err(|_| bad("expected integer"))?,
                        "action" => {
                            entry.action = Some(match value {
                                "crash" => FaultAction::Crash,
                                "reconnect" => FaultAction::Reconnect,
                                _ => return Err(bad("expected crash or reconnect")),
                            })
                        }
                        "member" => {
                            let (g, s) = value
                                .split_once(':')
                                .ok_or_else(|| bad("expected group:slot"))?;
                            entry.group = Some(g.trim().to_string());
                            entry.slot =
                                Some(s.trim().parse().map_err(|_| bad("slot must be an integer"))?);
                        }
                        _ => return Err(SpecError::UnknownKey { line_no, key: key.to_string() }),
                    }
                }
                _ => return Err(SpecError::UnknownKey { line_no, key: key.to_string() }),
            }
        }

        if !mdts.is_empty() {
            spec.mdts = mdts.into_values().collect();
        }
        for name in group_order {
            let b = groups.remove(&name).unwrap();
            spec.groups.push(b.build(name)?);
        }
        spec.ephemerals = ephemerals.into_values().collect();
        for (n, b) in faults {
            let action = b.action.ok_or(SpecError::BadValue {
                line_no: 0,
                key: format!("fault.{n}.action"),
                reason: "missing".to_string(),
            })?;
            let group = b.group.clone().ok_or(SpecError::BadValue {
                line_no: 0,
                key: format!("fault.{n}.member"),
                reason: "missing".to_string(),
            })?;
            let slot = b.slot.unwrap();
            let gspec = spec
                .groups
                .iter()
                .find(|g| g.name == group)
                .ok_or_else(|| SpecError::UnknownFaultGroup { n, group: group.clone() })?;
            if slot >= gspec.members {
                return Err(SpecError::BadFaultMember {
                    n,
                    member: format!("{group}:{slot}"),
                    group,
                    slot,
                });
            }
            spec.faults.push(FaultSpec { n, at: b.at, action, group, slot });
        }
        spec.faults.sort_by_key(|f| (f.at, f.n));
        Ok(spec)
    }
}

#[derive(Default)]
struct GroupBuilder {
    members: usize,
    windows: Vec<u32>,
    delays: Vec<u64>,
    mask: ExtMask,
    join_at: u64,
}

impl GroupBuilder {
    fn build(self, name: String) -> Result<GroupSpec, SpecError> {
        let members = self.members.max(1);
        let windows = broadcast(self.windows, members, 16);
        let delays = broadcast(self.delays, members, 0);
        if windows.len() != members {
            return Err(SpecError::ListLength {
                group: name,
                what: "window",
                got: windows.len(),
                members,
            });
        }
        if delays.len() != members {
            return Err(SpecError::ListLength {
                group: name,
                what: "delay",
                got: delays.len(),
                members,
            });
        }
        Ok(GroupSpec { name, members, windows, mask: self.mask, delays, join_at: self.join_at })
    }
}

#[derive(Default)]
struct FaultBuilder {
    at: u64,
    action: Option<FaultAction>,
    group: Option<String>,
    slot: Option<usize>,
}

/// A single value applies to every member; an explicit list must match.
fn broadcast<T: Copy>(list: Vec<T>, members: usize, default: T) -> Vec<T> {
    match list.len() {
        0 => vec![default; members],
        1 => vec![list[0]; members],
        _ => list,
    }
}

fn parse_positive(value: &str) -> Option<usize> {
    value.parse::<usize>().ok().filter(|v| *v > 0)
}

fn parse_list<T: FromStr>(value: &str) -> Option<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().ok())
        .collect()
}

fn parse_mask(value: &str) -> Option<ExtMask> {
    let mut mask = ExtMask::EMPTY;
    if value == "none" || value.is_empty() {
        return Some(mask);
    }
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        mask |= match part {
            "jobid" => ExtMask::JOBID,
            "rename" => ExtMask::RENAME_SOURCE,
            "uidgid" => ExtMask::UIDGID,
            _ => return None,
        };
    }
    Some(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scenario_parses() {
        let text = "\
# fault drill
seed = 42
pipeline = reorder, compensation
hwm = 2048

mdt.1.records = 500
mdt.1.burst = 32
mdt.2.records = 500

group.alpha.members = 3
group.alpha.window = 1,4,16
group.alpha.mask = jobid,uidgid
group.beta.members = 2
group.beta.window = 8
group.beta.delay = 2

ephemeral.1.join_at = 50
ephemeral.1.drain = 10

fault.1.at = 100
fault.1.action = crash
fault.1.member = alpha:2
fault.2.at = 200
fault.2.action = reconnect
fault.2.member = alpha:2
";
        let spec = ScenarioSpec::parse(text).unwrap();
        assert_eq!(spec.seed, 42);
        assert_eq!(spec.pipeline.len(), 2);
        assert_eq!(spec.mdts.len(), 2);
        assert_eq!(spec.mdts[0].burst, 32);
        assert_eq!(spec.mdts[1].burst, 16);
        assert_eq!(spec.groups[0].windows, vec![1, 4, 16]);
        assert_eq!(spec.groups[1].windows, vec![8, 8]);
        assert_eq!(spec.groups[1].delays, vec![2, 2]);
        assert_eq!(spec.ephemerals[0].drain, 10);
        assert_eq!(spec.faults.len(), 2);
        assert_eq!(spec.faults[0].action, FaultAction::Crash);
        assert_eq!(spec.faults[1].action, FaultAction::Reconnect);
        assert!(!spec.fairness_applies(), "faults disable fairness checking");
    }

    #[test]
    fn fault_against_missing_slot_is_rejected() {
        let text = "\
group.g.members = 2
fault.1.at = 5
fault.1.action = crash
fault.1.member = g:7
";
        assert!(matches!(
            ScenarioSpec::parse(text),
            Err(SpecError::BadFaultMember { slot: 7, .. })
        ));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ScenarioSpec::parse("group.g.speed = 9\n").unwrap_err();
        assert!(err.to_string().contains("group.g.speed"), "{err}");
    }

    #[test]
    fn fairness_applies_to_uniform_crash_free_runs() {
        let text = "\
group.g.members = 4
group.g.window = 8
";
        let spec = ScenarioSpec::parse(text).unwrap();
        assert!(spec.fairness_applies());
    }
}
