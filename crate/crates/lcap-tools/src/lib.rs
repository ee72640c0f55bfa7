//! Shared plumbing for the operator binaries.

use lcap_core::record::{ChangelogRecord, ExtMask};

/// Initializes logging from the LCAP_LOG environment variable
/// (error|info|debug; default error). Every binary calls this first.
pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LCAP_LOG", "error"))
        .format_timestamp(None)
        .init();
}

/// Parses a `--fields` style list (jobid, rename, uidgid; empty or
/// "none" for no extensions) into an extension mask.
pub fn parse_fields(list: &str) -> Result<ExtMask, String> {
    let mut mask = ExtMask::EMPTY;
    if list.is_empty() || list == "none" {
        return Ok(mask);
    }
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        mask |= match part {
            "jobid" => ExtMask::JOBID,
            "rename" => ExtMask::RENAME_SOURCE,
            "uidgid" => ExtMask::UIDGID,
            other => return Err(format!("unknown field {other:?}")),
        };
    }
    Ok(mask)
}

/// One tab-separated output line per record: mdt, index, opcode name,
/// target fid, parent fid, entry name, jobid, uid:gid. Fixed column
/// order; fields that are absent (or empty) render as `-`.
pub fn record_line(mdt_id: u32, rec: &ChangelogRecord) -> String {
    let name = if rec.name.is_empty() {
        "-".to_string()
    } else {
        String::from_utf8_lossy(&rec.name).into_owned()
    };
    let jobid = match &rec.jobid {
        Some(j) => {
            let s = j.to_string();
            if s.is_empty() {
                "-".to_string()
            } else {
                s
            }
        }
        None => "-".to_string(),
    };
    let uid_gid = match rec.uid_gid {
        Some((uid, gid)) => format!("{uid}:{gid}"),
        None => "-".to_string(),
    };
    format!(
        "{mdt_id}\t{}\t{}\t{}\t{}\t{name}\t{jobid}\t{uid_gid}",
        rec.index,
        rec.opcode.name(),
        rec.target,
        rec.parent
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use lcap_core::record::{Fid, JobId, OpCode};

    #[test]
    fn line_has_fixed_columns_and_dashes_for_absent_fields() {
        let rec = ChangelogRecord {
            mdt_id: 3,
            index: 17,
            opcode: OpCode::Creat,
            time_ns: 0,
            target: Fid::new(9, 2, 1),
            parent: Fid::new(1, 1, 0),
            jobid: None,
            rename_source: None,
            uid_gid: None,
            name: b"notes.txt".to_vec(),
        };
        let line = record_line(3, &rec);
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(
            cols,
            vec!["3", "17", "creat", "9:2:1", "1:1:0", "notes.txt", "-", "-"]
        );
    }

    #[test]
    fn present_extensions_are_rendered() {
        let rec = ChangelogRecord {
            mdt_id: 1,
            index: 1,
            opcode: OpCode::Sattr,
            time_ns: 0,
            target: Fid::new(2, 1, 0),
            parent: Fid::new(1, 1, 0),
            jobid: Some(JobId::new(b"job_0007").unwrap()),
            rename_source: None,
            uid_gid: Some((1000, 100)),
            name: b"x".to_vec(),
        };
        let line = record_line(1, &rec);
        assert!(line.ends_with("x\tjob_0007\t1000:100"), "{line}");
    }

    #[test]
    fn field_lists_parse() {
        assert_eq!(parse_fields("").unwrap(), ExtMask::EMPTY);
        assert_eq!(parse_fields("none").unwrap(), ExtMask::EMPTY);
        assert_eq!(
            parse_fields("jobid, uidgid").unwrap(),
            ExtMask::JOBID | ExtMask::UIDGID
        );
        assert!(parse_fields("sizes").is_err());
    }
}
