//! Picks one completed call per function as its documentation example.
//!
//! The random strategy draws from ChaCha8 seeded with `seed_from_u64`, using
//! rejection sampling so every completed call is equally likely. Golden tests
//! pin this stream; changing the generator changes every example.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::model::{CallRecord, IOExample, TraceSession};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionStrategy {
    Random(u64),
    First,
    Last,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{function}: no completed calls to select from")]
pub struct NoCompletedCalls {
    pub function: String,
}

/// Uniform draw from `0..n` (`n > 0`).
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

/// Chooses one completed record. Interrupted records never qualify.
pub fn select_record<'r>(
    records: &'r [CallRecord],
    strategy: SelectionStrategy,
) -> Option<&'r CallRecord> {
    let mut done: Vec<&CallRecord> = records.iter().filter(|r| r.is_completed()).collect();
    done.sort_by_key(|r| r.call_id);
    match strategy {
        SelectionStrategy::First => done.first().copied(),
        SelectionStrategy::Last => done.last().copied(),
        SelectionStrategy::Random(seed) => {
            if done.is_empty() {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(done[uniform_index(&mut rng, done.len())])
        }
    }
}

pub fn select_example(
    records: &[CallRecord],
    strategy: SelectionStrategy,
    source_session: &str,
) -> Result<IOExample, NoCompletedCalls> {
    select_record(records, strategy)
        .map(|r| IOExample { source_session: source_session.to_string(), record: r.clone() })
        .ok_or_else(|| NoCompletedCalls {
            function: records.first().map(|r| r.function.clone()).unwrap_or_default(),
        })
}

/// One example per function of the session that has a completed call.
/// Functions without one are reported in the second list.
pub fn select_session(session: &TraceSession, strategy: SelectionStrategy) -> (Vec<IOExample>, Vec<String>) {
    let id = session.id();
    let mut picked = Vec::new();
    let mut missing = Vec::new();
    for (name, records) in &session.records {
        match select_example(records, strategy, &id) {
            Ok(e) => picked.push(e),
            Err(_) => missing.push(name.clone()),
        }
    }
    (picked, missing)
}

/// Like [`select_session`] over several sessions: the candidate pool of a
/// function is the union of its records across sessions, in session order.
pub fn select_sessions(sessions: &[TraceSession], strategy: SelectionStrategy) -> Vec<IOExample> {
    let mut pools: BTreeMap<&str, Vec<(String, &CallRecord)>> = BTreeMap::new();
    for s in sessions {
        let id = s.id();
        for (name, records) in &s.records {
            let pool = pools.entry(name).or_default();
            pool.extend(records.iter().filter(|r| r.is_completed()).map(|r| (id.clone(), r)));
        }
    }
    pools
        .into_values()
        .filter(|pool| !pool.is_empty())
        .map(|pool| {
            let i = match strategy {
                SelectionStrategy::First => 0,
                SelectionStrategy::Last => pool.len() - 1,
                SelectionStrategy::Random(seed) => uniform_index(&mut ChaCha8Rng::seed_from_u64(seed), pool.len()),
            };
            let (src, r) = &pool[i];
            IOExample { source_session: src.clone(), record: (*r).clone() }
        })
        .collect()
}

/// Default seed when none is given: a hash of the session timestamp.
pub fn default_seed(created_at: &str) -> u64 {
    let mut h = DefaultHasher::new();
    created_at.hash(&mut h);
    h.finish()
}
