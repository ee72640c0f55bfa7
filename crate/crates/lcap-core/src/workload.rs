//! Deterministic synthetic metadata workload.
//!
//! Draws operations from a weighted mix while tracking a live namespace
//! model, so every generated record is internally consistent: unlinks
//! target live files, rmdirs target empty directories, renames carry
//! their true source location. Same seed, same mix, same records.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::record::{Fid, JobId, OpCode, RecordBody, RenameSource};

/// Root directory every top-level object hangs under. Implicitly alive
/// in all namespace models; never appears as a record target.
pub const ROOT_FID: Fid = Fid { seq: 1, oid: 1, ver: 0 };

/// Per-opcode weights for drawing operations.
#[derive(Debug, Clone)]
pub struct OpsMix {
    weights: [u32; OpCode::ALL.len()],
}

impl OpsMix {
    pub fn new(weights: [u32; OpCode::ALL.len()]) -> Result<OpsMix, String> {
        if weights.iter().all(|w| *w == 0) {
            return Err("ops mix needs at least one positive weight".to_string());
        }
        Ok(OpsMix { weights })
    }

    /// File-heavy default: mostly creates, attribute churn and removals.
    pub fn default_mix() -> OpsMix {
        let mut weights = [0u32; OpCode::ALL.len()];
        weights[OpCode::Creat as usize] = 25;
        weights[OpCode::Mkdir as usize] = 6;
        weights[OpCode::Hlink as usize] = 2;
        weights[OpCode::Slink as usize] = 2;
        weights[OpCode::Mknod as usize] = 1;
        weights[OpCode::Unlink as usize] = 12;
        weights[OpCode::Rmdir as usize] = 2;
        weights[OpCode::Rename as usize] = 6;
        weights[OpCode::Sattr as usize] = 24;
        weights[OpCode::Xattr as usize] = 8;
        weights[OpCode::Close as usize] = 12;
        OpsMix { weights }
    }

    /// Parses `op:weight` pairs, e.g. `creat:30,unlink:10,sattr:20`.
    /// Unnamed opcodes get weight 0.
    pub fn parse(spec: &str) -> Result<OpsMix, String> {
        let mut weights = [0u32; OpCode::ALL.len()];
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, weight) = part
                .split_once(':')
                .ok_or_else(|| format!("expected op:weight, got {part:?}"))?;
            let op = OpCode::from_name(name.trim())
                .ok_or_else(|| format!("unknown opcode {name:?}"))?;
            let w: u32 = weight
                .trim()
                .parse()
                .map_err(|e| format!("bad weight for {name}: {e}"))?;
            weights[op as usize] = w;
        }
        OpsMix::new(weights)
    }

    fn total(&self) -> u64 {
        self.weights.iter().map(|w| *w as u64).sum()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> OpCode {
        let mut ticket = rng.random_range(0..self.total());
        for op in OpCode::ALL {
            let w = self.weights[op as usize] as u64;
            if ticket < w {
                return op;
            }
            ticket -= w;
        }
        unreachable!("total covers all weights")
    }
}

#[derive(Debug, Clone)]
struct Entry {
    parent: Fid,
    name: Vec<u8>,
}

/// Streaming generator of consistent record bodies.
#[derive(Debug)]
pub struct WorkloadGen {
    rng: ChaCha8Rng,
    mix: OpsMix,
    jobids: Vec<JobId>,
    job_counter: u64,
    next_seq: u64,
    time_ns: u64,
    files: Vec<Fid>,
    dirs: Vec<Fid>,
    entries: HashMap<Fid, Entry>,
    child_count: HashMap<Fid, u32>,
}

impl WorkloadGen {
    pub fn new(seed: u64, mix: OpsMix, jobid_pool: usize) -> WorkloadGen {
        let jobids = (0..jobid_pool)
            .map(|k| JobId::new(format!("job_{k:04}").as_bytes()).unwrap())
            .collect();
        WorkloadGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mix,
            jobids,
            job_counter: 0,
            next_seq: 2,
            time_ns: 1_700_000_000_000_000_000,
            files: Vec::new(),
            dirs: Vec::new(),
            entries: HashMap::new(),
            child_count: HashMap::new(),
        }
    }

    pub fn generate(&mut self, count: usize) -> Vec<RecordBody> {
        (0..count).map(|_| self.next_body()).collect()
    }

    pub fn next_body(&mut self) -> RecordBody {
        self.time_ns += self.rng.random_range(100..10_000);
        let op = self.mix.draw(&mut self.rng);
        match op {
            OpCode::Creat | OpCode::Slink | OpCode::Mknod => self.make_create(op),
            OpCode::Mkdir => self.make_mkdir(),
            OpCode::Hlink => self.make_hlink(),
            OpCode::Unlink => self.make_unlink(),
            OpCode::Rmdir => self.make_rmdir(),
            OpCode::Rename => self.make_rename(),
            OpCode::Sattr | OpCode::Xattr | OpCode::Close => self.make_touch(op),
            OpCode::Mark => self.make_mark(),
        }
    }

    fn body(
        &mut self,
        opcode: OpCode,
        target: Fid,
        parent: Fid,
        name: Vec<u8>,
        rename_source: Option<RenameSource>,
    ) -> RecordBody {
        let jobid = if self.jobids.is_empty() {
            None
        } else {
            let j = self.jobids[(self.job_counter as usize) % self.jobids.len()];
            self.job_counter += 1;
            Some(j)
        };
        let uid = 1000 + self.rng.random_range(0..4u32);
        let gid = 1000 + self.rng.random_range(0..2u32);
        RecordBody {
            opcode,
            time_ns: self.time_ns,
            target,
            parent,
            jobid,
            rename_source,
            uid_gid: Some((uid, gid)),
            name,
        }
    }

    fn fresh_fid(&mut self) -> Fid {
        let fid = Fid { seq: self.next_seq, oid: 1, ver: 0 };
        self.next_seq += 1;
        fid
    }

    fn fresh_name(&mut self) -> Vec<u8> {
        const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
        let len = self.rng.random_range(1..=16usize);
        (0..len)
            .map(|_| ALPHABET[self.rng.random_range(0..ALPHABET.len())])
            .collect()
    }

    fn any_dir(&mut self) -> Fid {
        if self.dirs.is_empty() {
            ROOT_FID
        } else {
            // Half the weight on root keeps trees shallow and wide.
            if self.rng.random_range(0..2) == 0 {
                ROOT_FID
            } else {
                self.dirs[self.rng.random_range(0..self.dirs.len())]
            }
        }
    }

    fn attach(&mut self, fid: Fid, parent: Fid, name: Vec<u8>) {
        *self.child_count.entry(parent).or_insert(0) += 1;
        self.entries.insert(fid, Entry { parent, name });
    }

    fn detach(&mut self, fid: Fid) -> Entry {
        let entry = self.entries.remove(&fid).expect("detaching a live entry");
        let n = self.child_count.get_mut(&entry.parent).expect("parent has children");
        *n -= 1;
        entry
    }

    fn make_create(&mut self, op: OpCode) -> RecordBody {
        let fid = self.fresh_fid();
        let parent = self.any_dir();
        let name = self.fresh_name();
        self.files.push(fid);
        self.attach(fid, parent, name.clone());
        self.body(op, fid, parent, name, None)
    }

    fn make_mkdir(&mut self) -> RecordBody {
        let fid = self.fresh_fid();
        let parent = self.any_dir();
        let name = self.fresh_name();
        self.dirs.push(fid);
        self.attach(fid, parent, name.clone());
        self.body(OpCode::Mkdir, fid, parent, name, None)
    }

    fn make_hlink(&mut self) -> RecordBody {
        if self.files.is_empty() {
            return self.make_create(OpCode::Creat);
        }
        let fid = self.files[self.rng.random_range(0..self.files.len())];
        let parent = self.any_dir();
        let name = self.fresh_name();
        self.detach(fid);
        self.attach(fid, parent, name.clone());
        self.body(OpCode::Hlink, fid, parent, name, None)
    }

    fn make_unlink(&mut self) -> RecordBody {
        if self.files.is_empty() {
            return self.make_create(OpCode::Creat);
        }
        let pos = self.rng.random_range(0..self.files.len());
        let fid = self.files.swap_remove(pos);
        let entry = self.detach(fid);
        self.body(OpCode::Unlink, fid, entry.parent, entry.name, None)
    }

    fn make_rmdir(&mut self) -> RecordBody {
        let empties: Vec<usize> = self
            .dirs
            .iter()
            .enumerate()
            .filter(|(_, d)| self.child_count.get(d).copied().unwrap_or(0) == 0)
            .map(|(i, _)| i)
            .collect();
        if empties.is_empty() {
            return self.make_create(OpCode::Creat);
        }
        let pos = empties[self.rng.random_range(0..empties.len())];
        let fid = self.dirs.swap_remove(pos);
        let entry = self.detach(fid);
        self.body(OpCode::Rmdir, fid, entry.parent, entry.name, None)
    }

    fn make_rename(&mut self) -> RecordBody {
        if self.files.is_empty() {
            return self.make_create(OpCode::Creat);
        }
        let pos = self.rng.random_range(0..self.files.len());
        let fid = self.files[pos];
        // A quarter of renames replace an existing file (the victim).
        let victim = if self.files.len() >= 2 && self.rng.random_range(0..4) == 0 {
            let mut vpos = self.rng.random_range(0..self.files.len());
            if vpos == pos {
                vpos = (vpos + 1) % self.files.len();
            }
            Some(self.files.swap_remove(vpos))
        } else {
            None
        };
        if let Some(v) = victim {
            self.detach(v);
        }
        let old = self.detach(fid);
        let parent = self.any_dir();
        let name = self.fresh_name();
        self.attach(fid, parent, name.clone());
        let rs = RenameSource {
            source: victim.unwrap_or(Fid::NULL),
            source_parent: old.parent,
            source_name: old.name,
        };
        self.body(OpCode::Rename, fid, parent, name, Some(rs))
    }

    fn make_touch(&mut self, op: OpCode) -> RecordBody {
        if self.files.is_empty() {
            return self.make_create(OpCode::Creat);
        }
        let fid = self.files[self.rng.random_range(0..self.files.len())];
        let entry = self.entries[&fid].clone();
        self.body(op, fid, entry.parent, entry.name, None)
    }

    fn make_mark(&mut self) -> RecordBody {
        self.body(OpCode::Mark, Fid::NULL, ROOT_FID, Vec::new(), None)
    }
}
