//! Property tests for the record codec: round-trips, the size law,
//! field offsets, remapping, and stream decoding.

use lcap_core::record::{
    decode_record, decode_record_stream, encode_record, field_offset, remap_record,
    ChangelogRecord, CodecError, ExtField, ExtMask, Fid, JobId, OpCode, RenameSource,
    FIXED_HEADER_LEN, JOBID_LEN,
};
use proptest::prelude::*;

fn arb_fid() -> impl Strategy<Value = Fid> {
    (any::<u64>(), any::<u32>(), any::<u32>()).prop_map(|(seq, oid, ver)| Fid { seq, oid, ver })
}

fn arb_name_byte() -> impl Strategy<Value = u8> {
    (1u8..=255).prop_filter("name bytes exclude '/'", |b| *b != b'/')
}

fn arb_name(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(arb_name_byte(), 0..=max)
}

fn arb_opcode() -> impl Strategy<Value = OpCode> {
    prop::sample::select(OpCode::ALL.to_vec())
}

fn arb_record() -> impl Strategy<Value = ChangelogRecord> {
    (
        any::<u32>(),
        1u64..=u64::MAX,
        arb_opcode(),
        any::<u64>(),
        arb_fid(),
        arb_fid(),
        prop::option::of(any::<[u8; JOBID_LEN]>().prop_map(JobId::from_raw)),
        prop::option::of((arb_fid(), arb_fid(), arb_name(255)).prop_map(
            |(source, source_parent, source_name)| RenameSource {
                source,
                source_parent,
                source_name,
            },
        )),
        prop::option::of((any::<u32>(), any::<u32>())),
        arb_name(255),
    )
        .prop_map(
            |(mdt_id, index, opcode, time_ns, target, parent, jobid, rename_source, uid_gid, name)| {
                ChangelogRecord {
                    mdt_id,
                    index,
                    opcode,
                    time_ns,
                    target,
                    parent,
                    jobid,
                    rename_source,
                    uid_gid,
                    name,
                }
            },
        )
}

fn arb_mask() -> impl Strategy<Value = ExtMask> {
    (0u16..=0b111).prop_map(|bits| ExtMask::from_bits(bits).unwrap())
}

proptest! {
    #[test]
    fn encode_decode_round_trips(rec in arb_record()) {
        let bytes = encode_record(&rec).unwrap();
        let back = decode_record(&bytes, rec.mdt_id).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn encoded_length_obeys_the_size_law(rec in arb_record()) {
        let bytes = encode_record(&rec).unwrap();
        let mut expect = FIXED_HEADER_LEN;
        if let Some(_) = rec.jobid {
            expect += JOBID_LEN;
        }
        if let Some(rs) = &rec.rename_source {
            expect += 16 + 16 + 2 + rs.source_name.len();
        }
        if rec.uid_gid.is_some() {
            expect += 8;
        }
        expect += 2 + rec.name.len();
        prop_assert_eq!(bytes.len(), expect);
        prop_assert_eq!(rec.encoded_len(), expect);
        // reclen field mirrors the buffer length
        let reclen = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        prop_assert_eq!(reclen as usize, bytes.len());
    }

    #[test]
    fn field_offsets_point_at_the_encoded_bytes(rec in arb_record()) {
        let bytes = encode_record(&rec).unwrap();
        let mask = rec.ext_mask();
        if let Some(jobid) = &rec.jobid {
            let off = field_offset(mask, ExtField::Jobid, Some(&rec)).unwrap().unwrap();
            prop_assert_eq!(&bytes[off..off + JOBID_LEN], jobid.as_raw().as_slice());
        }
        if let Some((uid, gid)) = rec.uid_gid {
            let off = field_offset(mask, ExtField::UidGid, Some(&rec)).unwrap().unwrap();
            prop_assert_eq!(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()), uid);
            prop_assert_eq!(u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap()), gid);
        }
        let off = field_offset(mask, ExtField::Name, Some(&rec)).unwrap().unwrap();
        let len = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()) as usize;
        prop_assert_eq!(len, rec.name.len());
        prop_assert_eq!(&bytes[off + 2..off + 2 + len], rec.name.as_slice());
    }

    #[test]
    fn remap_fulfills_the_target_mask(rec in arb_record(), target in arb_mask()) {
        let out = remap_record(&rec, target);
        prop_assert_eq!(out.ext_mask(), target);
        // untouched outside the extension block
        prop_assert_eq!(out.mdt_id, rec.mdt_id);
        prop_assert_eq!(out.index, rec.index);
        prop_assert_eq!(out.opcode, rec.opcode);
        prop_assert_eq!(out.time_ns, rec.time_ns);
        prop_assert_eq!(out.target, rec.target);
        prop_assert_eq!(out.parent, rec.parent);
        prop_assert_eq!(out.name.clone(), rec.name.clone());
        // shared fields copied, grown fields neutral
        let source = rec.ext_mask();
        if target.contains(ExtMask::JOBID) {
            if source.contains(ExtMask::JOBID) {
                prop_assert_eq!(out.jobid, rec.jobid);
            } else {
                prop_assert!(out.jobid.unwrap().is_zero());
            }
        }
        if target.contains(ExtMask::UIDGID) && source.contains(ExtMask::UIDGID) {
            prop_assert_eq!(out.uid_gid, rec.uid_gid);
        } else if target.contains(ExtMask::UIDGID) {
            prop_assert_eq!(out.uid_gid, Some((0, 0)));
        }
        if target.contains(ExtMask::RENAME_SOURCE) && source.contains(ExtMask::RENAME_SOURCE) {
            prop_assert_eq!(out.rename_source.clone(), rec.rename_source.clone());
        } else if target.contains(ExtMask::RENAME_SOURCE) {
            let rs = out.rename_source.clone().unwrap();
            prop_assert!(rs.source.is_null());
            prop_assert!(rs.source_parent.is_null());
            prop_assert!(rs.source_name.is_empty());
        }
        // and the remapped record still encodes
        let bytes = encode_record(&out).unwrap();
        prop_assert_eq!(decode_record(&bytes, out.mdt_id).unwrap(), out);
    }

    #[test]
    fn remap_under_a_superset_and_back_is_identity(rec in arb_record()) {
        let orig = rec.ext_mask();
        let grown = remap_record(&rec, ExtMask::ALL);
        let back = remap_record(&grown, orig);
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn stream_decode_walks_every_record(recs in prop::collection::vec(arb_record(), 1..8)) {
        let mdt = 7u32;
        let mut buf = Vec::new();
        let recs: Vec<ChangelogRecord> = recs
            .into_iter()
            .map(|mut r| {
                r.mdt_id = mdt; // stream decoding is per-source
                r
            })
            .collect();
        for r in &recs {
            buf.extend_from_slice(&encode_record(r).unwrap());
        }
        let mut seen = Vec::new();
        let mut off = 0;
        while let Some((rec, used)) = decode_record_stream(&buf[off..], mdt).unwrap() {
            off += used;
            seen.push(rec);
        }
        prop_assert_eq!(off, buf.len());
        prop_assert_eq!(seen, recs);
        // a truncated tail is reported as incomplete, not an error
        let cut = buf.len() - 1;
        let mut off = 0;
        while let Some((_, used)) = decode_record_stream(&buf[off..cut], mdt).unwrap() {
            off += used;
        }
        prop_assert!(off < cut, "the cut record must not be consumed");
    }

    #[test]
    fn truncation_inside_a_record_is_detected(rec in arb_record(), frac in 0.0f64..1.0) {
        let bytes = encode_record(&rec).unwrap();
        let cut = ((bytes.len() as f64) * frac) as usize;
        if cut < bytes.len() {
            prop_assert!(decode_record(&bytes[..cut], rec.mdt_id).is_err());
        }
    }
}

#[test]
fn reserved_ext_bits_fail_decoding() {
    let rec = ChangelogRecord {
        mdt_id: 1,
        index: 1,
        opcode: OpCode::Creat,
        time_ns: 0,
        target: Fid { seq: 2, oid: 0, ver: 0 },
        parent: Fid { seq: 1, oid: 0, ver: 0 },
        jobid: None,
        rename_source: None,
        uid_gid: None,
        name: b"x".to_vec(),
    };
    let mut bytes = encode_record(&rec).unwrap();
    for bit in 3..16 {
        let bad: u16 = 1 << bit;
        bytes[5..7].copy_from_slice(&bad.to_le_bytes());
        assert!(
            matches!(decode_record(&bytes, 1), Err(CodecError::ReservedMaskBits { .. })),
            "bit {bit} must be rejected"
        );
    }
}
