//! Acceptance gate: ten numbered checks covering the codec, remapping,
//! journal retention, delivery guarantees under faults, ephemeral
//! freshness, pipeline replay equivalence, fairness, the ack tracker,
//! and the command-line tools end to end. Each check prints one
//! `PASS criterion N` line; a failed assertion fails the named test.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use lcap_core::broker::{BrokerEvent, BROKER_READER};
use lcap_core::journal::{Journal, JournalOptions};
use lcap_core::pipeline::{pipeline_apply, PipelineModule, PipelineWindow};
use lcap_core::record::{
    decode_record, encode_record, field_offset, remap_record, ChangelogRecord, ExtField, ExtMask,
    Fid, JobId, OpCode, RenameSource,
};
use lcap_core::tracker::AckTracker;
use lcap_core::workload::{OpsMix, WorkloadGen};
use lcap_sim::{oracle_replay, run_scenario, verify_properties, DeliveryLog, Event, ScenarioSpec};

fn all_masks() -> [ExtMask; 8] {
    [
        ExtMask::EMPTY,
        ExtMask::JOBID,
        ExtMask::RENAME_SOURCE,
        ExtMask::UIDGID,
        ExtMask::JOBID | ExtMask::RENAME_SOURCE,
        ExtMask::JOBID | ExtMask::UIDGID,
        ExtMask::RENAME_SOURCE | ExtMask::UIDGID,
        ExtMask::ALL,
    ]
}

/// Encoded size computed from the layout contract alone: fixed header,
/// then jobid, rename source, uid/gid blocks in mask order, then the
/// length-prefixed name.
fn layout_size(rec: &ChangelogRecord) -> usize {
    let mut len = 56;
    if rec.jobid.is_some() {
        len += 32;
    }
    if let Some(rs) = &rec.rename_source {
        len += 16 + 16 + 2 + rs.source_name.len();
    }
    if rec.uid_gid.is_some() {
        len += 8;
    }
    len + 2 + rec.name.len()
}

fn assert_prop(props: &[lcap_sim::PropertyResult], name: &str) {
    let p = props.iter().find(|p| p.name == name).unwrap_or_else(|| panic!("no property {name}"));
    assert!(p.pass, "{name} failed: {}", p.witness);
}

// Scenario runs shared between checks. Criterion 5 sweeps the clear
// rule across every log the suite produces, so runs are cached here
// rather than repeated.

fn fault_drill() -> &'static (ScenarioSpec, DeliveryLog, Duration) {
    static DRILL: OnceLock<(ScenarioSpec, DeliveryLog, Duration)> = OnceLock::new();
    DRILL.get_or_init(|| {
        let spec = ScenarioSpec::parse(
            "\
seed = 4
mdt.1.records = 10000
mdt.1.burst = 64
mdt.2.records = 10000
mdt.2.burst = 64
group.g1.members = 3
group.g1.window = 1,4,16
group.g2.members = 3
group.g2.window = 1,4,16
fault.1.at = 50
fault.1.action = crash
fault.1.member = g1:0
fault.2.at = 150
fault.2.action = crash
fault.2.member = g2:2
fault.3.at = 250
fault.3.action = reconnect
fault.3.member = g1:0
",
        )
        .unwrap();
        let start = Instant::now();
        let log = run_scenario(&spec).unwrap();
        (spec, log, start.elapsed())
    })
}

fn fairness_run() -> &'static (ScenarioSpec, DeliveryLog) {
    static RUN: OnceLock<(ScenarioSpec, DeliveryLog)> = OnceLock::new();
    RUN.get_or_init(|| {
        let spec = ScenarioSpec::parse(
            "\
seed = 8
mdt.1.records = 10000
mdt.1.burst = 50
group.g.members = 4
group.g.window = 8
",
        )
        .unwrap();
        let log = run_scenario(&spec).unwrap();
        (spec, log)
    })
}

fn ephemeral_battery() -> &'static Vec<(u64, ScenarioSpec, DeliveryLog)> {
    static BATTERY: OnceLock<Vec<(u64, ScenarioSpec, DeliveryLog)>> = OnceLock::new();
    BATTERY.get_or_init(|| {
        (0..100u64)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE9E);
                let mut text = format!(
                    "seed = {seed}\nmdt.1.records = {}\nmdt.1.burst = {}\n",
                    300 + rng.random_range(0..300),
                    20 + rng.random_range(0..40)
                );
                for gi in 0..1 + rng.random_range(0..2) {
                    text.push_str(&format!(
                        "group.g{gi}.members = {}\ngroup.g{gi}.window = {}\n",
                        1 + rng.random_range(0..3),
                        2 + rng.random_range(0..30)
                    ));
                }
                for ei in 0..1 + rng.random_range(0..3) {
                    let drain =
                        if rng.random_range(0..5) == 0 { 0 } else { 5 + rng.random_range(0..200) };
                    text.push_str(&format!(
                        "ephemeral.{ei}.join_at = {}\nephemeral.{ei}.drain = {drain}\n",
                        rng.random_range(0..40)
                    ));
                }
                let spec = ScenarioSpec::parse(&text).unwrap();
                let log = run_scenario(&spec).unwrap();
                assert!(log.quiescent, "seed {seed} stuck: {:?}", log.stuck);
                (seed, spec, log)
            })
            .collect()
    })
}

#[test]
fn criterion_01_codec_identity_and_size() {
    let start = Instant::now();
    let mut gen = WorkloadGen::new(0xC0DEC, OpsMix::default_mix(), 8);
    let mut checked = 0u64;
    let mut index = 1u64;
    while checked < 100_000 {
        let rec = gen.next_body().into_record((index % 4) as u32 + 1, index);
        index += 1;
        for mask in all_masks() {
            let r = remap_record(&rec, mask);
            let bytes = encode_record(&r).unwrap();
            assert_eq!(bytes.len(), layout_size(&r), "size drifted for mask {:?}", mask.bits());
            assert_eq!(decode_record(&bytes, r.mdt_id).unwrap(), r);
            checked += 1;
        }
    }

    // Boundary shapes the generator never emits.
    let extremes = [
        ChangelogRecord {
            mdt_id: 0,
            index: 1,
            opcode: OpCode::Mark,
            time_ns: 0,
            target: Fid::NULL,
            parent: Fid::NULL,
            jobid: None,
            rename_source: None,
            uid_gid: None,
            name: Vec::new(),
        },
        ChangelogRecord {
            mdt_id: u32::MAX,
            index: u64::MAX,
            opcode: OpCode::Rename,
            time_ns: u64::MAX,
            target: Fid::new(u64::MAX, u32::MAX, u32::MAX),
            parent: Fid::new(1, 2, 3),
            jobid: Some(JobId::from_raw([0xAB; 32])),
            rename_source: Some(RenameSource {
                source: Fid::new(9, 9, 9),
                source_parent: Fid::new(8, 8, 8),
                source_name: vec![b'x'; 255],
            }),
            uid_gid: Some((u32::MAX, 0)),
            name: vec![b'n'; 255],
        },
    ];
    for rec in &extremes {
        for mask in all_masks() {
            let r = remap_record(rec, mask);
            let bytes = encode_record(&r).unwrap();
            assert_eq!(bytes.len(), layout_size(&r));
            assert_eq!(decode_record(&bytes, r.mdt_id).unwrap(), r);
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "codec sweep took {elapsed:?}");
    println!(
        "PASS criterion 1: {checked} records round-tripped across 8 masks with exact sizes in {elapsed:?}"
    );
}

#[test]
fn criterion_02_remap_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut gen = WorkloadGen::new(0x2E3A9, OpsMix::default_mix(), 6);
    for i in 1..=10_000u64 {
        let rec = gen.next_body().into_record(1, i);
        let target = all_masks()[rng.random_range(0..8)];
        let out = remap_record(&rec, target);

        // Result mask is exactly what was asked for.
        assert_eq!(out.ext_mask(), target);

        // Everything outside the extensions is untouched.
        assert_eq!(
            (out.mdt_id, out.index, out.opcode, out.time_ns, out.target, out.parent, &out.name),
            (rec.mdt_id, rec.index, rec.opcode, rec.time_ns, rec.target, rec.parent, &rec.name)
        );

        // Shared extension fields survive byte for byte; added ones are
        // neutral defaults.
        let shared = out.ext_mask().bits() & rec.ext_mask().bits();
        let rec_bytes = encode_record(&rec).unwrap();
        let out_bytes = encode_record(&out).unwrap();
        for (field, bit, len) in [
            (ExtField::Jobid, ExtMask::JOBID, 32),
            (ExtField::UidGid, ExtMask::UIDGID, 8),
        ] {
            if shared & bit.bits() != 0 {
                let a = field_offset(rec.ext_mask(), field, Some(&rec)).unwrap().unwrap();
                let b = field_offset(out.ext_mask(), field, Some(&out)).unwrap().unwrap();
                assert_eq!(rec_bytes[a..a + len], out_bytes[b..b + len]);
            }
        }
        if shared & ExtMask::RENAME_SOURCE.bits() != 0 {
            assert_eq!(out.rename_source, rec.rename_source);
        }
        if target.contains(ExtMask::JOBID) && rec.jobid.is_none() {
            assert_eq!(out.jobid, Some(JobId::ZERO));
        }
        if target.contains(ExtMask::UIDGID) && rec.uid_gid.is_none() {
            assert_eq!(out.uid_gid, Some((0, 0)));
        }
        if target.contains(ExtMask::RENAME_SOURCE) && rec.rename_source.is_none() {
            let rs = out.rename_source.as_ref().unwrap();
            assert!(rs.source.is_null() && rs.source_parent.is_null() && rs.source_name.is_empty());
        }

        // Idempotence.
        assert_eq!(remap_record(&out, target), out);

        // Widening to a superset and back restores the original.
        let superset = ExtMask::from_bits(
            rec.ext_mask().bits() | all_masks()[rng.random_range(0..8)].bits(),
        )
        .unwrap();
        assert_eq!(remap_record(&remap_record(&rec, superset), rec.ext_mask()), rec);

        // Narrowing through an intermediate mask changes nothing.
        let m2 = ExtMask::from_bits(target.bits() | superset.bits()).unwrap();
        assert_eq!(remap_record(&remap_record(&rec, m2), target), out);
    }
    println!("PASS criterion 2: 10000 remaps hold exactness, byte identity, idempotence, restore");
}

#[test]
fn criterion_03_retention_matches_min_over_readers_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0u64;
    for seq in 0..1000u64 {
        let dir = TempDir::new().unwrap();
        let opts = JournalOptions { fsync: false, segment_bytes: 4096 };
        let mut journal = Journal::create(dir.path(), 1, opts).unwrap();
        let mut gen = WorkloadGen::new(seq, OpsMix::default_mix(), 3);
        journal.append_batch((0..1000).map(|_| gen.next_body()).collect()).unwrap();
        let next = journal.next_index();
        assert_eq!(next, 1001);

        // Oracle state: registered readers and the retention floor.
        let mut readers: BTreeMap<String, u64> = BTreeMap::new();
        let mut floor: u64 = 1;
        let mut fresh = 0u32;

        enum Op {
            Register,
            Deregister,
            Clear,
        }
        for _ in 0..10 + rng.random_range(0..25) {
            let op = match rng.random_range(0..100) {
                0..=24 => Op::Register,
                25..=39 => Op::Deregister,
                _ => Op::Clear,
            };
            let op = if readers.is_empty() && !matches!(op, Op::Register) {
                Op::Register
            } else {
                op
            };
            match op {
                Op::Register => {
                    let id = format!("r{fresh}");
                    fresh += 1;
                    journal.reader_register(&id).unwrap();
                    readers.insert(id, floor - 1);
                }
                Op::Deregister => {
                    let pick = rng.random_range(0..readers.len());
                    let id = readers.keys().nth(pick).unwrap().clone();
                    journal.reader_deregister(&id).unwrap();
                    readers.remove(&id);
                    floor = match readers.values().copied().min() {
                        Some(min) => floor.max(min + 1),
                        None => next,
                    };
                }
                Op::Clear => {
                    let pick = rng.random_range(0..readers.len());
                    let id = readers.keys().nth(pick).unwrap().clone();
                    let to = rng.random_range(1..next);
                    journal.clear(&id, to).unwrap();
                    let cleared = readers.get_mut(&id).unwrap();
                    *cleared = (*cleared).max(to);
                    let min = readers.values().copied().min().unwrap();
                    floor = floor.max(min + 1);
                }
            }

            // The purged prefix is exactly [1, floor).
            assert_eq!(journal.first_index(), floor, "seq {seq}");
            for (id, &cleared) in &readers {
                assert_eq!(journal.cleared_of(id), Some(cleared));
            }
            if floor > 1 {
                assert!(journal.record_at(floor - 1).is_none());
            }
            if floor < next {
                assert_eq!(journal.record_at(floor).map(|r| r.index), Some(floor));
            }
            steps += 1;
        }

        // Retention state survives a reopen, including deleted segments.
        if seq % 97 == 0 {
            drop(journal);
            let reopened = Journal::open(dir.path(), JournalOptions::default()).unwrap();
            assert_eq!(reopened.first_index(), floor);
            assert_eq!(reopened.next_index(), next);
            assert_eq!(reopened.readers().count(), readers.len());
        }
    }
    println!("PASS criterion 3: 1000 reader sequences, {steps} steps matched the min-over-readers oracle");
}

#[test]
fn criterion_04_at_least_once_under_faults() {
    let (spec, log, elapsed) = fault_drill();
    assert!(log.quiescent, "drill stuck: {:?}", log.stuck);
    assert!(*elapsed < Duration::from_secs(30), "drill took {elapsed:?}");

    let props = verify_properties(log, spec);
    assert_prop(&props, "at-least-once");
    assert_prop(&props, "no-duplicates-without-crash");
    assert_prop(&props, "conservation");
    assert_prop(&props, "quiescence");

    let crashes = log.count(|e| {
        matches!(e, Event::Broker(BrokerEvent::ConsumerLeft { crash: true, .. }))
    });
    assert_eq!(crashes, 2, "both injected crashes must land");
    let redelivered = log.count(|e| {
        matches!(e, Event::Broker(BrokerEvent::Assigned { redelivery: true, .. }))
    });
    assert!(redelivered > 0, "crashes with in-flight records must force redelivery");

    println!(
        "PASS criterion 4: 20000 records, 2 crashes, 1 reconnect, {redelivered} redeliveries, zero lost, quiescent in {elapsed:?}"
    );
}

#[test]
fn criterion_05_collective_ack_safety_across_the_suite() {
    let mut scenarios = 0usize;
    let mut clears = 0u64;

    let (drill_spec, drill_log, _) = fault_drill();
    let (fair_spec, fair_log) = fairness_run();
    let battery = ephemeral_battery();

    let mut check = |spec: &ScenarioSpec, log: &DeliveryLog| {
        assert_prop(&verify_properties(log, spec), "clear-safety");
        scenarios += 1;
        clears += log.count(|e| {
            matches!(e, Event::Broker(BrokerEvent::ClearedUpstream { .. }))
        }) as u64;
    };
    check(drill_spec, drill_log);
    check(fair_spec, fair_log);
    for (_seed, spec, log) in battery {
        check(spec, log);
    }

    println!(
        "PASS criterion 5: {clears} upstream clears across {scenarios} scenarios never passed a group's acked prefix"
    );
}

#[test]
fn criterion_06_ephemeral_freshness_and_non_blocking() {
    let battery = ephemeral_battery();
    let mut deliveries = 0u64;
    for (seed, spec, log) in battery {
        let props = verify_properties(log, spec);
        assert_prop(&props, "ephemeral-freshness");
        assert_prop(&props, "quiescence");

        // Listeners never hold clearing back: every journal drains to
        // its head even when a listener stalls completely.
        for (mdt, head) in &log.heads {
            assert_eq!(
                log.last_cleared(*mdt),
                Some(*head),
                "seed {seed}: mdt {mdt} stopped clearing short of {head}"
            );
        }
        deliveries += log.count(|e| {
            matches!(e, Event::Broker(BrokerEvent::EphemeralDelivered { .. }))
        }) as u64;
    }
    println!(
        "PASS criterion 6: 100 scenarios, {deliveries} listener deliveries all past the join snapshot, clearing never blocked"
    );
}

#[test]
fn criterion_07_pipeline_replay_equivalence() {
    let modules = [PipelineModule::Compensation, PipelineModule::Reorder];
    let mut dropped_total = 0u64;
    for w in 0..100u64 {
        let mut gen = WorkloadGen::new(w.wrapping_mul(7919).wrapping_add(1), OpsMix::default_mix(), 4);
        let records: Vec<ChangelogRecord> =
            (1..=10_000).map(|i| gen.next_body().into_record(1, i)).collect();

        let result = pipeline_apply(&modules, PipelineWindow { mdt_id: 1, records: records.clone() });

        // Kept and dropped partition the window.
        let mut indices: Vec<u64> = result.kept.iter().map(|r| r.index).collect();
        assert!(result.kept.iter().all(|r| !result.dropped.contains(&r.index)));
        indices.extend(result.dropped.iter().copied());
        indices.sort_unstable();
        assert!(indices.iter().copied().eq(1..=10_000u64), "window {w} lost or duplicated indices");

        // The surviving stream drives the namespace to the same state.
        assert_eq!(
            oracle_replay(&records).unwrap(),
            oracle_replay(&result.kept).unwrap(),
            "window {w} diverged after filtering and reordering"
        );
        dropped_total += result.dropped.len() as u64;
    }
    assert!(dropped_total > 0, "the workload should contain compensating pairs");
    println!(
        "PASS criterion 7: 100 windows x 10000 ops replay identically; {dropped_total} records dropped with conservation intact"
    );
}

#[test]
fn criterion_08_fairness_within_one() {
    let (spec, log) = fairness_run();
    assert!(log.quiescent, "fairness run stuck: {:?}", log.stuck);
    assert_prop(&verify_properties(log, spec), "fairness");

    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for (_, event) in &log.entries {
        if let Event::Broker(BrokerEvent::Assigned { consumer_id, .. }) = event {
            *counts.entry(*consumer_id).or_default() += 1;
        }
    }
    assert_eq!(counts.len(), 4);
    assert_eq!(counts.values().sum::<u64>(), 10_000);
    for (consumer, n) in &counts {
        assert!(
            (2499..=2501).contains(n),
            "consumer {consumer} got {n} assignments, expected 2500 +/- 1"
        );
    }
    let spread: Vec<u64> = counts.values().copied().collect();
    println!("PASS criterion 8: 10000 records over 4 members split {spread:?}");
}

#[test]
fn criterion_09_tracker_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut insertions = 0u64;
    for _ in 0..10_000 {
        let start_prefix = rng.random_range(0..5u64);
        let len = 1 + rng.random_range(0..40u64);
        let mut order: Vec<u64> = (start_prefix + 1..=start_prefix + len).collect();
        order.shuffle(&mut rng);
        // Duplicates and already-covered indices must be no-ops.
        for _ in 0..rng.random_range(0..4) {
            order.push(order[rng.random_range(0..order.len())]);
        }
        if start_prefix > 0 {
            order.push(rng.random_range(0..start_prefix) + 1);
        }

        let mut tracker = AckTracker::new(start_prefix);
        let mut acked: BTreeSet<u64> = BTreeSet::new();
        for &index in &order {
            let got = tracker.add(index);
            acked.insert(index);
            let mut expect = start_prefix;
            while acked.contains(&(expect + 1)) {
                expect += 1;
            }
            assert_eq!(got, expect, "prefix diverged after inserting {index}");
            assert_eq!(tracker.prefix(), expect);
            assert!(tracker.contains(index));
            assert_eq!(
                tracker.above_count(),
                acked.iter().filter(|&&i| i > expect).count()
            );
            insertions += 1;
        }
    }
    println!("PASS criterion 9: 10000 ack permutations, {insertions} insertions equal the brute-force prefix");
}

// Process plumbing for the end-to-end check.

struct Reap(Child);

impl Drop for Reap {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn wait_timeout(child: &mut Child, limit: Duration) -> Option<ExitStatus> {
    let deadline = Instant::now() + limit;
    while Instant::now() < deadline {
        if let Some(status) = child.try_wait().unwrap() {
            return Some(status);
        }
        thread::sleep(Duration::from_millis(20));
    }
    None
}

fn read_indices(path: &Path) -> Vec<u64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| line.split('\t').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn criterion_10_end_to_end_cli() {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let journal = dir.path().join("j");

    let status = Command::new(env!("CARGO_BIN_EXE_lcap-producer"))
        .arg("--journal")
        .arg(&journal)
        .args(["--mdt-id", "1", "--count", "10000", "--seed", "7"])
        .status()
        .unwrap();
    assert!(status.success());

    let conf = dir.path().join("broker.conf");
    fs::write(
        &conf,
        format!("listen = 127.0.0.1:0\nsource.1.dir = {}\nsource.1.mdt_id = 1\n", journal.display()),
    )
    .unwrap();
    let mut broker = Reap(
        Command::new(env!("CARGO_BIN_EXE_lcap-broker"))
            .arg(&conf)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(broker.0.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let outs = [dir.path().join("c1.txt"), dir.path().join("c2.txt")];
    let mut consumers: Vec<Reap> = outs
        .iter()
        .map(|out| {
            Reap(
                Command::new(env!("CARGO_BIN_EXE_lcap-consumer"))
                    .args(["--server", &addr, "--group", "g"])
                    .arg("--out")
                    .arg(out)
                    .spawn()
                    .unwrap(),
            )
        })
        .collect();

    // Wait until the broker has cleared the whole journal upstream.
    let deadline = Instant::now() + Duration::from_secs(50);
    loop {
        let out = Command::new(env!("CARGO_BIN_EXE_lcap-stat"))
            .args(["--server", &addr])
            .output()
            .unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        if out.status.success() && text.contains("cleared 10000") {
            break;
        }
        assert!(Instant::now() < deadline, "journal never cleared; last stats:\n{text}");
        thread::sleep(Duration::from_millis(100));
    }

    unsafe { libc::kill(broker.0.id() as i32, libc::SIGTERM) };
    assert_eq!(
        wait_timeout(&mut broker.0, Duration::from_secs(10)).and_then(|s| s.code()),
        Some(0)
    );
    for consumer in &mut consumers {
        assert_eq!(
            wait_timeout(&mut consumer.0, Duration::from_secs(10)).and_then(|s| s.code()),
            Some(0)
        );
    }

    // Between them the two members saw every index exactly once.
    let (a, b) = (read_indices(&outs[0]), read_indices(&outs[1]));
    let (sa, sb): (BTreeSet<u64>, BTreeSet<u64>) =
        (a.iter().copied().collect(), b.iter().copied().collect());
    assert_eq!(a.len(), sa.len(), "first member printed duplicates");
    assert_eq!(b.len(), sb.len(), "second member printed duplicates");
    assert!(sa.is_disjoint(&sb), "a record reached both members");
    assert!(!sa.is_empty() && !sb.is_empty(), "one member sat idle");
    let merged: BTreeSet<u64> = sa.union(&sb).copied().collect();
    assert!(merged.iter().copied().eq(1..=10_000u64), "merged outputs are not exactly 1..=10000");

    // The cleared position survived the broker's shutdown.
    let reopened = Journal::open(&journal, JournalOptions::default()).unwrap();
    assert_eq!(reopened.cleared_of(BROKER_READER), Some(10_000));

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "end-to-end run took {elapsed:?}");
    println!(
        "PASS criterion 10: 10000 records split {}:{} across two members, journal cleared, {elapsed:?}",
        sa.len(),
        sb.len()
    );
}
