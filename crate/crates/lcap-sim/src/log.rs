//! The scenario event log: every state transition the broker reported
//! plus the consumer-side receipts, totally ordered by logical step.

use std::collections::BTreeMap;

use lcap_core::broker::BrokerEvent;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Broker(BrokerEvent),
    /// A consumer decoded the record from its inbound channel.
    Delivered { consumer_id: u64, mdt_id: u32, index: u64 },
    /// A group came into existence; `prefix` is its tracker's starting
    /// prefix for the MDT (the floor plus any absorbed dropped run).
    GroupStart { group: String, mdt_id: u32, prefix: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConsumerMeta {
    /// None for ephemeral consumers.
    pub group: Option<String>,
    pub window: u32,
    /// Slot within the group's member list, for fault addressing.
    pub slot: Option<usize>,
    /// Ephemeral join snapshot per MDT, decoded from HELLO_ACK.
    pub snapshot: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeliveryLog {
    /// (logical step, event), in exact emission order.
    pub entries: Vec<(u64, Event)>,
    pub consumers: BTreeMap<u64, ConsumerMeta>,
    /// Last appended index per MDT.
    pub heads: BTreeMap<u32, u64>,
    /// Whether the run drained completely within its step budget.
    pub quiescent: bool,
    /// State dump when the run was declared stuck.
    pub stuck: Option<String>,
    pub steps: u64,
}

impl DeliveryLog {
    pub fn count<F: Fn(&Event) -> bool>(&self, pred: F) -> usize {
        self.entries.iter().filter(|(_, e)| pred(e)).count()
    }

    pub fn delivered_count(&self) -> usize {
        self.count(|e| matches!(e, Event::Delivered { .. }))
    }

    pub fn acked_count(&self) -> usize {
        self.count(|e| matches!(e, Event::Broker(BrokerEvent::Acked { .. })))
    }

    pub fn last_cleared(&self, mdt_id: u32) -> Option<u64> {
        self.entries
            .iter()
            .filter_map(|(_, e)| match e {
                Event::Broker(BrokerEvent::ClearedUpstream { mdt_id: m, index })
                    if *m == mdt_id =>
                {
                    Some(*index)
                }
                _ => None,
            })
            .last()
    }
}
