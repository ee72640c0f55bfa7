//! Log-based verification of the delivery guarantees.
//!
//! Every check here works purely from the scenario's event log plus the
//! scenario description; nothing peeks at broker internals. Group
//! acknowledgment state is reconstructed with the same prefix trackers
//! the broker uses, seeded from the logged group-start prefixes, so a
//! clear that outruns collective acknowledgment is caught exactly.

use std::collections::{BTreeMap, BTreeSet};

use lcap_core::broker::BrokerEvent;
use lcap_core::tracker::AckTracker;

use crate::log::{DeliveryLog, Event};
use crate::spec::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub pass: bool,
    pub witness: String,
}

impl PropertyResult {
    fn from_violation(name: &'static str, violation: Option<String>) -> PropertyResult {
        match violation {
            None => PropertyResult { name, pass: true, witness: String::new() },
            Some(witness) => PropertyResult { name, pass: false, witness },
        }
    }
}

#[derive(Default)]
struct GroupView {
    start_prefix: BTreeMap<u32, u64>,
    trackers: BTreeMap<u32, AckTracker>,
    assigned_unacked: BTreeSet<(u32, u64)>,
    assign_counts: BTreeMap<(u32, u64), u32>,
    delivered: BTreeMap<u32, BTreeSet<u64>>,
    crashed_ever: bool,
}

/// Records a property's first violation; later ones are ignored so the
/// report stays one witness per property.
#[derive(Default)]
struct Violations {
    at_least_once: Option<String>,
    clear_safety: Option<String>,
    window_bound: Option<String>,
    freshness: Option<String>,
    conservation: Option<String>,
    no_dup: Option<String>,
    hwm_bound: Option<String>,
    fairness: Option<String>,
}

fn note(slot: &mut Option<String>, witness: impl FnOnce() -> String) {
    if slot.is_none() {
        *slot = Some(witness());
    }
}

pub fn verify_properties(log: &DeliveryLog, spec: &ScenarioSpec) -> Vec<PropertyResult> {
    let mut v = Violations::default();

    let mut groups: BTreeMap<String, GroupView> = BTreeMap::new();
    let mut dropped: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    let mut ingested: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    let mut buffered: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    let mut in_flight: BTreeMap<u64, u64> = BTreeMap::new();

    for (entry_no, (step, event)) in log.entries.iter().enumerate() {
        match event {
            Event::GroupStart { group, mdt_id, prefix } => {
                let view = groups.entry(group.clone()).or_default();
                view.start_prefix.insert(*mdt_id, *prefix);
                let mut tracker = AckTracker::new(*prefix);
                // Pipeline drops before this group existed are vacuously
                // acked above its floor, exactly as the broker seeds it.
                if let Some(set) = dropped.get(mdt_id) {
                    for &idx in set.range(prefix + 1..) {
                        tracker.add(idx);
                    }
                }
                view.trackers.insert(*mdt_id, tracker);
            }
            Event::Broker(BrokerEvent::Ingested { mdt_id, index }) => {
                ingested.entry(*mdt_id).or_default().insert(*index);
                let buf = buffered.entry(*mdt_id).or_default();
                buf.insert(*index);
                if buf.len() > spec.hwm {
                    note(&mut v.hwm_bound, || {
                        format!(
                            "mdt {mdt_id} holds {} uncleared records over hwm {} at step {step}",
                            buf.len(),
                            spec.hwm
                        )
                    });
                }
            }
            Event::Broker(BrokerEvent::DroppedByPipeline { mdt_id, index }) => {
                dropped.entry(*mdt_id).or_default().insert(*index);
                if let Some(buf) = buffered.get_mut(mdt_id) {
                    buf.remove(index);
                }
                for view in groups.values_mut() {
                    if let Some(t) = view.trackers.get_mut(mdt_id) {
                        t.add(*index);
                    }
                }
            }
            Event::Broker(BrokerEvent::Assigned {
                group,
                consumer_id,
                mdt_id,
                index,
                redelivery,
            }) => {
                let view = groups.entry(group.clone()).or_default();
                let count = view.assign_counts.entry((*mdt_id, *index)).or_insert(0);
                *count += 1;
                if (*count > 1 || *redelivery) && !view.crashed_ever {
                    note(&mut v.no_dup, || {
                        format!(
                            "group {group} saw mdt {mdt_id} index {index} assigned again \
                             without any crash (entry {entry_no})"
                        )
                    });
                }
                view.assigned_unacked.insert((*mdt_id, *index));
                let flight = in_flight.entry(*consumer_id).or_insert(0);
                *flight += 1;
                let window =
                    log.consumers.get(consumer_id).map_or(0, |m| m.window as u64);
                if *flight > window {
                    note(&mut v.window_bound, || {
                        format!(
                            "consumer {consumer_id} holds {flight} unacked over window \
                             {window} at step {step}"
                        )
                    });
                }
            }
            Event::Broker(BrokerEvent::Acked { group, consumer_id, mdt_id, index }) => {
                if let Some(view) = groups.get_mut(group) {
                    view.assigned_unacked.remove(&(*mdt_id, *index));
                    if let Some(t) = view.trackers.get_mut(mdt_id) {
                        t.add(*index);
                    }
                }
                if let Some(flight) = in_flight.get_mut(consumer_id) {
                    *flight = flight.saturating_sub(1);
                }
            }
            Event::Broker(BrokerEvent::ClearedUpstream { mdt_id, index }) => {
                if groups.is_empty() {
                    let head = ingested.get(mdt_id).and_then(|s| s.last()).copied();
                    if !spec.auto_ack_no_groups {
                        note(&mut v.clear_safety, || {
                            format!(
                                "mdt {mdt_id} cleared to {index} with no groups and \
                                 auto-ack off (step {step})"
                            )
                        });
                    } else if head.map_or(true, |h| *index > h) {
                        note(&mut v.clear_safety, || {
                            format!(
                                "mdt {mdt_id} cleared to {index} past ingestion head \
                                 {head:?} (step {step})"
                            )
                        });
                    }
                } else {
                    let allowed = groups
                        .values()
                        .map(|g| g.trackers.get(mdt_id).map_or(0, |t| t.prefix()))
                        .min()
                        .unwrap();
                    if *index > allowed {
                        note(&mut v.clear_safety, || {
                            format!(
                                "mdt {mdt_id} cleared to {index} but the collective \
                                 acked prefix is {allowed} (step {step})"
                            )
                        });
                    }
                }
                if let Some(buf) = buffered.get_mut(mdt_id) {
                    *buf = buf.split_off(&(index + 1));
                }
            }
            Event::Broker(BrokerEvent::EphemeralDelivered { consumer_id, mdt_id, index }) => {
                check_fresh(log, &mut v, *consumer_id, *mdt_id, *index, *step);
            }
            Event::Broker(BrokerEvent::ConsumerLeft { consumer_id, crash }) => {
                if *crash {
                    if let Some(group) =
                        log.consumers.get(consumer_id).and_then(|m| m.group.as_ref())
                    {
                        groups.entry(group.clone()).or_default().crashed_ever = true;
                    }
                }
                in_flight.insert(*consumer_id, 0);
            }
            Event::Delivered { consumer_id, mdt_id, index } => {
                match log.consumers.get(consumer_id).and_then(|m| m.group.clone()) {
                    Some(group) => {
                        groups
                            .entry(group)
                            .or_default()
                            .delivered
                            .entry(*mdt_id)
                            .or_default()
                            .insert(*index);
                    }
                    None => check_fresh(log, &mut v, *consumer_id, *mdt_id, *index, *step),
                }
            }
            Event::Broker(_) => {}
        }
    }

    // Terminal-state properties only mean something once the run has
    // drained; a stuck run already fails the quiescence property.
    if log.quiescent {
        for (group, view) in &groups {
            for (mdt_id, set) in &ingested {
                let start = view.start_prefix.get(mdt_id).copied().unwrap_or(0);
                let none = BTreeSet::new();
                let dropped_set = dropped.get(mdt_id).unwrap_or(&none);
                let got = view.delivered.get(mdt_id).unwrap_or(&none);
                for &index in set.range(start + 1..) {
                    if !dropped_set.contains(&index) && !got.contains(&index) {
                        note(&mut v.at_least_once, || {
                            format!(
                                "group {group} never received mdt {mdt_id} index {index}"
                            )
                        });
                    }
                }

                let head = set.last().copied().unwrap_or(start);
                let prefix = view.trackers.get(mdt_id).map_or(0, |t| t.prefix());
                if prefix < head {
                    note(&mut v.conservation, || {
                        format!(
                            "group {group} finished with mdt {mdt_id} prefix {prefix} \
                             short of head {head}"
                        )
                    });
                }
            }
            if let Some(&(mdt_id, index)) = view.assigned_unacked.iter().next() {
                note(&mut v.conservation, || {
                    format!(
                        "group {group} finished holding mdt {mdt_id} index {index} \
                         assigned but never acked or requeued"
                    )
                });
            }
        }
    }

    if spec.fairness_applies() {
        for (group, view) in &groups {
            let mut counts: BTreeMap<u64, u64> = log
                .consumers
                .iter()
                .filter(|(_, m)| m.group.as_deref() == Some(group))
                .map(|(&cid, _)| (cid, 0))
                .collect();
            debug_assert!(
                view.assign_counts.values().all(|n| *n == 1),
                "fairness implies no redelivery"
            );
            for (_, event) in &log.entries {
                if let Event::Broker(BrokerEvent::Assigned {
                    group: g, consumer_id, ..
                }) = event
                {
                    if g == group {
                        *counts.entry(*consumer_id).or_insert(0) += 1;
                    }
                }
            }
            let min = counts.values().min().copied().unwrap_or(0);
            let max = counts.values().max().copied().unwrap_or(0);
            if max > min + 1 {
                note(&mut v.fairness, || {
                    format!("group {group} assignment spread {counts:?} exceeds one")
                });
            }
        }
    }

    let quiescence = if log.quiescent {
        None
    } else {
        let dump = log.stuck.as_deref().unwrap_or("no progress");
        Some(dump.lines().collect::<Vec<_>>().join("; "))
    };

    vec![
        PropertyResult::from_violation("at-least-once", v.at_least_once),
        PropertyResult::from_violation("clear-safety", v.clear_safety),
        PropertyResult::from_violation("window-bound", v.window_bound),
        PropertyResult::from_violation("ephemeral-freshness", v.freshness),
        PropertyResult::from_violation("conservation", v.conservation),
        PropertyResult::from_violation("no-duplicates-without-crash", v.no_dup),
        PropertyResult::from_violation("hwm-bound", v.hwm_bound),
        PropertyResult::from_violation("fairness", v.fairness),
        PropertyResult::from_violation("quiescence", quiescence),
    ]
}

fn check_fresh(
    log: &DeliveryLog,
    v: &mut Violations,
    consumer_id: u64,
    mdt_id: u32,
    index: u64,
    step: u64,
) {
    let snapshot = log
        .consumers
        .get(&consumer_id)
        .and_then(|m| m.snapshot.get(&mdt_id))
        .copied()
        .unwrap_or(0);
    if index <= snapshot {
        note(&mut v.freshness, || {
            format!(
                "ephemeral {consumer_id} got mdt {mdt_id} index {index} at or below \
                 its join snapshot {snapshot} (step {step})"
            )
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::ConsumerMeta;
    use crate::run::run_scenario;

    fn all_pass(results: &[PropertyResult]) -> bool {
        results.iter().all(|r| r.pass)
    }

    #[test]
    fn healthy_run_passes_every_property() {
        let spec = ScenarioSpec::parse(
            "seed = 3\n\
             mdt.1.records = 400\n\
             pipeline = compensation, reorder\n\
             group.g.members = 4\n\
             group.g.window = 8\n\
             ephemeral.1.join_at = 2\n",
        )
        .unwrap();
        let log = run_scenario(&spec).unwrap();
        let results = verify_properties(&log, &spec);
        for r in &results {
            assert!(r.pass, "{} failed: {}", r.name, r.witness);
        }
    }

    #[test]
    fn fairness_is_checked_on_uniform_runs() {
        let spec = ScenarioSpec::parse(
            "mdt.1.records = 1000\n\
             group.g.members = 4\n\
             group.g.window = 8\n",
        )
        .unwrap();
        assert!(spec.fairness_applies());
        let log = run_scenario(&spec).unwrap();
        let results = verify_properties(&log, &spec);
        assert!(all_pass(&results), "{results:?}");
    }

    #[test]
    fn premature_clear_is_caught() {
        // Hand-built log: the broker claims an upstream clear before the
        // group acknowledged anything.
        let mut log = DeliveryLog::default();
        log.quiescent = true;
        log.consumers.insert(
            1,
            ConsumerMeta { group: Some("g".into()), window: 4, slot: Some(0), ..Default::default() },
        );
        log.entries = vec![
            (0, Event::GroupStart { group: "g".into(), mdt_id: 1, prefix: 0 }),
            (0, Event::Broker(BrokerEvent::Ingested { mdt_id: 1, index: 1 })),
            (
                0,
                Event::Broker(BrokerEvent::Assigned {
                    group: "g".into(),
                    consumer_id: 1,
                    mdt_id: 1,
                    index: 1,
                    redelivery: false,
                }),
            ),
            (1, Event::Broker(BrokerEvent::ClearedUpstream { mdt_id: 1, index: 1 })),
        ];
        let spec = ScenarioSpec::parse("mdt.1.records = 1\n").unwrap();
        let results = verify_properties(&log, &spec);
        let clear = results.iter().find(|r| r.name == "clear-safety").unwrap();
        assert!(!clear.pass);
        assert!(clear.witness.contains("prefix is 0"), "{}", clear.witness);
    }

    #[test]
    fn window_overrun_is_caught() {
        let mut log = DeliveryLog::default();
        log.quiescent = true;
        log.consumers.insert(
            1,
            ConsumerMeta { group: Some("g".into()), window: 1, slot: Some(0), ..Default::default() },
        );
        log.entries = vec![
            (0, Event::GroupStart { group: "g".into(), mdt_id: 1, prefix: 0 }),
            (0, Event::Broker(BrokerEvent::Ingested { mdt_id: 1, index: 1 })),
            (0, Event::Broker(BrokerEvent::Ingested { mdt_id: 1, index: 2 })),
        ];
        for index in [1, 2] {
            log.entries.push((
                0,
                Event::Broker(BrokerEvent::Assigned {
                    group: "g".into(),
                    consumer_id: 1,
                    mdt_id: 1,
                    index,
                    redelivery: false,
                }),
            ));
        }
        let spec = ScenarioSpec::parse("mdt.1.records = 2\n").unwrap();
        let results = verify_properties(&log, &spec);
        let window = results.iter().find(|r| r.name == "window-bound").unwrap();
        assert!(!window.pass, "two in flight over a window of one");
    }

    #[test]
    fn stale_ephemeral_delivery_is_caught() {
        let mut log = DeliveryLog::default();
        log.quiescent = true;
        log.consumers.insert(
            7,
            ConsumerMeta {
                group: None,
                window: 0,
                slot: None,
                snapshot: [(1u32, 5u64)].into_iter().collect(),
            },
        );
        log.entries = vec![(
            3,
            Event::Broker(BrokerEvent::EphemeralDelivered { consumer_id: 7, mdt_id: 1, index: 5 }),
        )];
        let spec = ScenarioSpec::parse("mdt.1.records = 5\n").unwrap();
        let results = verify_properties(&log, &spec);
        let fresh = results.iter().find(|r| r.name == "ephemeral-freshness").unwrap();
        assert!(!fresh.pass);
        assert!(fresh.witness.contains("snapshot 5"), "{}", fresh.witness);
    }
}
