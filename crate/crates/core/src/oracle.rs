//! The adjacency-list query oracle: budgets, deterministic random list
//! orderings, label disclosure rules, and transcripts.
//!
//! A session answers queries of the form (vertex, slot): the slot-th
//! neighbor of the vertex under that vertex's fixed uniformly-random
//! ordering, or nothing when the vertex has fewer neighbors. Each vertex's
//! ordering is realized lazily through a keyed index permutation, so a
//! vertex with a near-complete dummy neighborhood costs nothing until
//! queried. Budget accounting is strict: every call costs one query,
//! including repeats (answered from cache) and out-of-range slots.
//!
//! The session intentionally exposes no ground-truth accessor. The only
//! label information that crosses the boundary is what the model grants:
//! the dummy set up front, and the top-level S-labels of vertices when they
//! are touched.

use crate::instance::Instance;
use crate::seed::{derive_seed, IndexPermutation, StreamKind};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("query budget exhausted ({budget} queries)")]
    BudgetExhausted { budget: u64 },
    #[error("unknown vertex {0}")]
    UnknownVertex(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryRecord {
    pub step: u64,
    pub vertex: u32,
    /// 1-based slot index.
    pub slot: u64,
    pub answer: Option<u32>,
}

/// Session state without the instance borrow, so embeddings that own the
/// instance elsewhere (e.g. the Python bindings) can drive it too.
#[derive(Debug, Clone)]
pub struct SessionState {
    budget: u64,
    spent: u64,
    records: Vec<QueryRecord>,
    cache: HashMap<(u32, u64), Option<u32>>,
    perms: HashMap<u32, IndexPermutation>,
    revealed_s: HashMap<u32, u8>,
}

impl SessionState {
    pub fn new(budget: u64) -> SessionState {
        SessionState {
            budget,
            spent: 0,
            records: Vec::new(),
            cache: HashMap::new(),
            perms: HashMap::new(),
            revealed_s: HashMap::new(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }

    pub fn revealed_s(&self) -> &HashMap<u32, u8> {
        &self.revealed_s
    }

    /// Query the `slot`-th neighbor (1-based) of `v`. Returns `None` when
    /// `v` has fewer than `slot` neighbors. Every call costs one query.
    pub fn query(&mut self, inst: &Instance, v: u32, slot: u64) -> Result<Option<u32>, OracleError> {
        if v >= inst.n_total() || slot == 0 {
            return Err(OracleError::UnknownVertex(v));
        }
        if self.spent >= self.budget {
            return Err(OracleError::BudgetExhausted {
                budget: self.budget,
            });
        }
        self.spent += 1;
        let answer = if let Some(&cached) = self.cache.get(&(v, slot)) {
            cached
        } else {
            let deg = inst.degree(v);
            let ans = if slot > deg {
                None
            } else {
                let perm = self.perms.entry(v).or_insert_with(|| {
                    IndexPermutation::new(
                        deg,
                        derive_seed(inst.master_seed, StreamKind::VertexPermutation, v as u64),
                    )
                });
                let rank = perm.apply(slot - 1);
                Some(inst.neighbor_at(v, rank).expect("rank in range"))
            };
            self.cache.insert((v, slot), ans);
            ans
        };
        // Disclosure rule: touching a top-level S vertex reveals its label,
        // whether it was the query target or the answer.
        for touched in [Some(v), answer].into_iter().flatten() {
            if let Some(j) = inst.top_s_label(touched) {
                self.revealed_s.entry(touched).or_insert(j);
            }
        }
        self.records.push(QueryRecord {
            step: self.spent,
            vertex: v,
            slot,
            answer,
        });
        Ok(answer)
    }

    pub fn freeze(&self, inst: &Instance) -> Transcript {
        Transcript::from_records(inst, self.records.clone())
    }
}

/// A budgeted, transcript-keeping view of one instance.
pub struct QuerySession<'a> {
    inst: &'a Instance,
    state: SessionState,
}

/// Open a fresh session. The dummy identities are considered disclosed from
/// the start (`is_dummy` / `dummy_count` are free), matching the model.
pub fn open_session(inst: &Instance, budget: u64) -> QuerySession<'_> {
    QuerySession {
        inst,
        state: SessionState::new(budget),
    }
}

impl<'a> QuerySession<'a> {
    pub fn budget(&self) -> u64 {
        self.state.budget()
    }

    pub fn spent(&self) -> u64 {
        self.state.spent()
    }

    pub fn remaining(&self) -> u64 {
        self.budget() - self.spent()
    }

    /// Total number of vertices (public knowledge).
    pub fn vertex_count(&self) -> u32 {
        self.inst.n_total()
    }

    /// Disclosed up front by the model.
    pub fn is_dummy(&self, v: u32) -> bool {
        self.inst.is_dummy(v)
    }

    pub fn dummy_count(&self) -> u64 {
        2 * self.inst.dummy_half as u64
    }

    /// S-labels revealed so far (vertex -> chain index).
    pub fn revealed_s(&self) -> &HashMap<u32, u8> {
        self.state.revealed_s()
    }

    /// Query the `slot`-th neighbor (1-based) of `v`. Returns `None` when
    /// `v` has fewer than `slot` neighbors. Every call costs one query.
    pub fn query(&mut self, v: u32, slot: u64) -> Result<Option<u32>, OracleError> {
        self.state.query(self.inst, v, slot)
    }

    /// Freeze the transcript so far; the session remains usable.
    pub fn freeze(&self) -> Transcript {
        self.state.freeze(self.inst)
    }
}

/// A frozen query log plus the induced directed discovered graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<QueryRecord>,
    /// Directed discovered core edges (querier -> answer), in discovery
    /// order, deduplicated; dummy endpoints excluded.
    pub core_edges: Vec<(u32, u32)>,
    /// Fingerprint of the instance the transcript was produced on.
    pub instance_seed: u64,
    pub instance_vertices: u32,
}

impl Transcript {
    fn from_records(inst: &Instance, records: Vec<QueryRecord>) -> Transcript {
        let mut seen = std::collections::HashSet::new();
        let mut core_edges = Vec::new();
        for r in &records {
            if let Some(ans) = r.answer {
                if !inst.is_dummy(r.vertex) && !inst.is_dummy(ans) && seen.insert((r.vertex, ans)) {
                    core_edges.push((r.vertex, ans));
                }
            }
        }
        Transcript {
            records,
            core_edges,
            instance_seed: inst.master_seed,
            instance_vertices: inst.n_total(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV lines: step,vertex,slot,answer (empty answer for no-neighbor).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,vertex,slot,answer\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.step,
                r.vertex,
                r.slot,
                r.answer.map(|a| a.to_string()).unwrap_or_default()
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Transcript, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("step,") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(format!("line {}: expected 4 fields", i + 1));
            }
            let parse = |s: &str| -> Result<u64, String> {
                s.trim().parse().map_err(|_| format!("line {}: bad number", i + 1))
            };
            records.push(QueryRecord {
                step: parse(parts[0])?,
                vertex: parse(parts[1])? as u32,
                slot: parse(parts[2])?,
                answer: if parts[3].trim().is_empty() {
                    None
                } else {
                    Some(parse(parts[3])? as u32)
                },
            });
        }
        Ok(Transcript {
            records,
            core_edges: Vec::new(),
            instance_seed: 0,
            instance_vertices: 0,
        })
    }
}

/// Re-execute the (vertex, slot) sequence of a transcript against an
/// instance; returns the answers produced. Deterministic replay must
/// reproduce the recorded answers exactly.
pub fn replay(inst: &Instance, t: &Transcript) -> Result<Vec<Option<u32>>, OracleError> {
    let mut s = open_session(inst, t.records.len() as u64);
    let mut out = Vec::with_capacity(t.records.len());
    for r in &t.records {
        out.push(s.query(r.vertex, r.slot)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::assemble;
    use crate::params::{br, toy_params, Side, ToySpec};

    fn tiny() -> Instance {
        let p = toy_params(ToySpec {
            levels: 1,
            layers: 3,
            block_degrees: vec![4],
            base_width: 72,
            zeta: br(1, 9),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(3, 83),
        })
        .unwrap();
        assemble(&p, Side::Yes, 42).unwrap()
    }

    #[test]
    fn zero_budget_exhausts() {
        let inst = tiny();
        let mut s = open_session(&inst, 0);
        assert_eq!(
            s.query(0, 1),
            Err(OracleError::BudgetExhausted { budget: 0 })
        );
    }

    #[test]
    fn full_enumeration_matches_neighbor_set() {
        let inst = tiny();
        for v in [0u32, 3, 500, 1000, 1031] {
            let deg = inst.degree(v);
            let mut s = open_session(&inst, deg + 1);
            let mut seen = std::collections::HashSet::new();
            for slot in 1..=deg {
                let a = s.query(v, slot).unwrap().expect("in range");
                assert!(seen.insert(a), "duplicate answer {a} for vertex {v}");
                assert!(inst.has_edge(v, a));
            }
            // one past the degree answers empty
            assert_eq!(s.query(v, deg + 1).unwrap(), None);
            assert_eq!(seen.len() as u64, deg);
        }
    }

    #[test]
    fn repeats_cached_and_charged() {
        let inst = tiny();
        let mut s = open_session(&inst, 10);
        let a1 = s.query(5, 1).unwrap();
        let a2 = s.query(5, 1).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(s.spent(), 2);
    }

    #[test]
    fn deterministic_across_sessions() {
        let inst = tiny();
        let mut s1 = open_session(&inst, 100);
        let mut s2 = open_session(&inst, 100);
        for slot in 1..=50 {
            assert_eq!(s1.query(7, slot).unwrap(), s2.query(7, slot).unwrap());
        }
    }

    #[test]
    fn sessions_do_not_interfere() {
        let inst = tiny();
        let mut s1 = open_session(&inst, 100);
        let mut s2 = open_session(&inst, 100);
        let a = s1.query(3, 2).unwrap();
        for slot in [5u64, 1, 9] {
            let _ = s2.query(3, slot).unwrap();
        }
        assert_eq!(s2.query(3, 2).unwrap(), a);
    }

    #[test]
    fn s_labels_disclosed_on_touch() {
        let inst = tiny();
        // find an S vertex and its unique neighbor
        let sv = (0..inst.n_core())
            .find(|&v| inst.top_s_label(v).is_some())
            .unwrap();
        let mut s = open_session(&inst, 1000);
        assert!(s.revealed_s().is_empty());
        let _ = s.query(sv, 1).unwrap();
        assert!(s.revealed_s().contains_key(&sv));
    }

    #[test]
    fn transcript_replay_identical() {
        let inst = tiny();
        let mut s = open_session(&inst, 500);
        use rand::Rng;
        let mut rng = crate::seed::rng_from(9, crate::seed::StreamKind::Probe, 0);
        for _ in 0..300 {
            let v = rng.gen_range(0..inst.n_total());
            let slot = rng.gen_range(1..=12u64);
            let _ = s.query(v, slot).unwrap();
        }
        let t = s.freeze();
        let answers = replay(&inst, &t).unwrap();
        for (r, a) in t.records.iter().zip(answers) {
            assert_eq!(r.answer, a);
        }
        // csv round trip preserves the record sequence
        let csv = t.to_csv();
        let t2 = Transcript::from_csv(&csv).unwrap();
        assert_eq!(t.records, t2.records);
    }

    #[test]
    fn transcript_edges_sound() {
        let inst = tiny();
        let mut s = open_session(&inst, 400);
        use rand::Rng;
        let mut rng = crate::seed::rng_from(10, crate::seed::StreamKind::Probe, 0);
        for _ in 0..400 {
            let v = rng.gen_range(0..inst.n_core());
            let slot = rng.gen_range(1..=6u64);
            let _ = s.query(v, slot).unwrap();
        }
        let t = s.freeze();
        assert!(t.core_edges.len() <= s.spent() as usize);
        for &(u, v) in &t.core_edges {
            assert!(inst.has_edge(u, v));
            assert!(!inst.is_dummy(u) && !inst.is_dummy(v));
        }
    }
}
