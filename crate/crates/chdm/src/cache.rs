//! Versioned binary cache of a (partially built) opponent model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "CHDMHIER" | u32 version | [u8; 32] config digest
//! u32 k_max | f64 temperature | u32 ego actions | u32 env actions
//! u32 |K| | u32 level × |K|
//! for player in (ego, env), for level in 0..=k_max:
//!     u64 rows | (u64 state, f64 × actions) × rows     (ascending state)
//! ```
//!
//! The augmented kernel is not stored; it is rebuilt from the env tables.

use std::io::{Read, Write};
use std::path::Path;

use chdm_core::game::{Player, PolicyTable};
use chdm_core::hierarchy::Hierarchy;
use chdm_core::inference::{AugmentedKernel, OpponentModel};
use chdm_core::traffic::Scenario;
use chdm_core::Game;
use sha2::{Digest, Sha256};

use crate::Error;

const MAGIC: &[u8; 8] = b"CHDMHIER";
pub const CACHE_VERSION: u32 = 1;

pub fn encode(model: &OpponentModel, digest: &[u8; 32]) -> Vec<u8> {
    let h = &model.hierarchy;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(h.k_max() as u32).to_le_bytes());
    out.extend_from_slice(&h.temperature().to_le_bytes());
    for player in [Player::Ego, Player::Env] {
        out.extend_from_slice(&(h.tables(player)[0].num_actions() as u32).to_le_bytes());
    }
    let levels = model.kernel.levels();
    out.extend_from_slice(&(levels.len() as u32).to_le_bytes());
    for &k in levels {
        out.extend_from_slice(&(k as u32).to_le_bytes());
    }
    for player in [Player::Ego, Player::Env] {
        for table in h.tables(player) {
            out.extend_from_slice(&(table.len() as u64).to_le_bytes());
            for (state, row) in table.iter() {
                out.extend_from_slice(&(state as u64).to_le_bytes());
                for p in row {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], Error> {
        if self.bytes.len() < n {
            return Err(Error::Cache("truncated file".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, Error> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a cache built for `scenario` under the configuration `digest`.
pub fn decode(bytes: &[u8], scenario: &Scenario, digest: &[u8; 32]) -> Result<OpponentModel, Error> {
    let mut r = Reader { bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Cache("not a hierarchy cache".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("version {version}, expected {CACHE_VERSION}")));
    }
    if r.take(32)? != digest {
        return Err(Error::Cache("built for a different configuration".into()));
    }
    let k_max = r.u32()? as usize;
    let temperature = r.f64()?;
    let n1 = r.u32()? as usize;
    let n2 = r.u32()? as usize;
    if n1 != scenario.num_actions(Player::Ego) || n2 != scenario.num_actions(Player::Env) {
        return Err(Error::Cache("action counts do not match the scenario".into()));
    }
    let num_levels = r.u32()? as usize;
    let levels = (0..num_levels).map(|_| r.u32().map(|k| k as usize)).collect::<Result<Vec<_>, _>>()?;
    let mut tables = Vec::new();
    for (player, n) in [(Player::Ego, n1), (Player::Env, n2)] {
        let mut per_level = Vec::new();
        for level in 0..=k_max {
            let mut table = PolicyTable::new(level, player, n);
            let rows = r.u64()?;
            for _ in 0..rows {
                let state = r.u64()? as usize;
                if state >= scenario.num_states() {
                    return Err(Error::Cache(format!("state {state} out of range")));
                }
                let row = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
                table.insert(state, row).map_err(|e| Error::Cache(e.to_string()))?;
            }
            per_level.push(table);
        }
        tables.push(per_level);
    }
    if !r.bytes.is_empty() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    let env = tables.pop().expect("env tables");
    let ego = tables.pop().expect("ego tables");
    let hierarchy = Hierarchy::from_tables(k_max, temperature, ego, env)?;
    let mut kernel = AugmentedKernel::new(scenario.num_states(), n1, levels.clone());
    // Rows exist wherever every modelled level has a policy row.
    let env_tables = hierarchy.env_policies();
    let first = env_tables
        .get(*levels.first().ok_or_else(|| Error::Cache("empty level set".into()))?)
        .ok_or(chdm_core::Error::MissingLevel { level: levels[0] })?;
    let covered: Vec<usize> = first
        .iter()
        .map(|(x, _)| x)
        .filter(|&x| levels.iter().all(|&k| env_tables.get(k).is_some_and(|t| t.contains(x))))
        .collect();
    kernel.extend(scenario, env_tables, covered)?;
    Ok(OpponentModel::new(hierarchy, kernel))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<u8>, Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}
