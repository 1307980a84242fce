//! Query-bounded algorithms that try to tell the YES side from the NO
//! side through the oracle, and the trial harness measuring their success
//! probability.
//!
//! Algorithms interact with the instance exclusively through a
//! `QuerySession`; the public parameter set is also in scope (the game's
//! distributions are known, only the side and the randomness are hidden).

use crate::exact::max_matching_bipartite;
use crate::instance::assemble;
use crate::oracle::{open_session, OracleError, QuerySession};
use crate::params::{ParamSet, Side};
use crate::seed::{derive_seed, rng_from, StreamKind};
use num::ToPrimitive;
use rand::Rng;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

/// Outcome of one algorithm run. `verdict = None` records abstention
/// (budget starvation); the harness scores it as a fair coin flip.
#[derive(Debug, Clone)]
pub struct Guess {
    pub verdict: Option<Side>,
    /// Estimated matching density mu/n.
    pub estimate: f64,
    pub queries_used: u64,
    pub evidence: BTreeMap<String, String>,
}

impl Guess {
    fn abstain(queries_used: u64, why: &str) -> Guess {
        let mut evidence = BTreeMap::new();
        evidence.insert("abstained".into(), why.to_string());
        Guess {
            verdict: None,
            estimate: 0.0,
            queries_used,
            evidence,
        }
    }
}

/// Read the entire graph through the oracle and decide exactly.
///
/// Requires a budget of sum_v (deg(v) + 1): every list is scanned to its
/// first empty slot. Runs exact matching on the reconstruction and answers
/// YES precisely when a perfect matching exists.
pub fn run_full_scan(s: &mut QuerySession<'_>) -> Guess {
    let n = s.vertex_count();
    let mut edges: HashSet<(u32, u32)> = HashSet::new();
    for v in 0..n {
        let mut slot = 1u64;
        loop {
            match s.query(v, slot) {
                Ok(Some(u)) => {
                    edges.insert((v.min(u), v.max(u)));
                    slot += 1;
                }
                Ok(None) => break,
                Err(OracleError::BudgetExhausted { .. }) => {
                    return Guess::abstain(s.spent(), "budget exhausted mid-scan");
                }
                Err(_) => return Guess::abstain(s.spent(), "oracle error"),
            }
        }
    }
    // 2-color the reconstruction.
    let mut adj: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(u, v) in &edges {
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    let mut color: HashMap<u32, u8> = HashMap::new();
    for start in 0..n {
        if color.contains_key(&start) || !adj.contains_key(&start) {
            continue;
        }
        color.insert(start, 0);
        let mut q = VecDeque::from([start]);
        while let Some(x) = q.pop_front() {
            let cx = color[&x];
            if let Some(next) = adj.get(&x) {
                for &y in next {
                    if let Some(&cy) = color.get(&y) {
                        if cy == cx {
                            return Guess::abstain(s.spent(), "reconstruction not bipartite");
                        }
                    } else {
                        color.insert(y, 1 - cx);
                        q.push_back(y);
                    }
                }
            }
        }
    }
    let edge_list: Vec<(u32, u32)> = edges.iter().copied().collect();
    let cert = match max_matching_bipartite(&edge_list, |v| color.get(&v).copied().unwrap_or(0)) {
        Ok(c) => c,
        Err(_) => return Guess::abstain(s.spent(), "matching failed"),
    };
    let mu = cert.size;
    let mut evidence = BTreeMap::new();
    evidence.insert("mu".into(), mu.to_string());
    Guess {
        verdict: Some(if 2 * mu == n as u64 { Side::Yes } else { Side::No }),
        estimate: mu as f64 / n as f64,
        queries_used: s.spent(),
        evidence,
    }
}

/// Budget needed by `run_full_scan` on an instance: sum_v (deg(v) + 1).
pub fn full_scan_budget(inst: &crate::instance::Instance) -> u64 {
    let core_ends = 2 * inst.core_edge_count();
    let n_core = inst.n_core() as u64;
    let p = inst.dummy_half as u64;
    let h = inst.core_half as u64;
    // every core vertex sees p dummies; each of the 2p dummies has degree h+1
    core_ends + n_core * p + 2 * p * (h + 1) + inst.n_total() as u64
}

/// Sample vertices, probe a prefix of each list, build a greedy matching on
/// the discovered core edges, and extrapolate.
pub fn run_sampled_greedy(
    s: &mut QuerySession<'_>,
    sample_vertices: u64,
    per_vertex_probes: u64,
    p: &ParamSet,
    algo_seed: u64,
) -> Guess {
    let n = s.vertex_count() as u64;
    let n1 = p.base_width.to_u64().unwrap_or(0);
    if sample_vertices == 0 {
        let mut g = Guess::abstain(s.spent(), "");
        g.evidence.clear();
        g.verdict = Some(Side::No);
        g.estimate = 0.0;
        return g;
    }
    let mut rng = rng_from(algo_seed, StreamKind::Probe, 1);
    let mut sampled_core: HashSet<u32> = HashSet::new();
    let mut discovered: Vec<(u32, u32)> = Vec::new();
    for _ in 0..sample_vertices {
        let v = rng.gen_range(0..n) as u32;
        if !s.is_dummy(v) {
            sampled_core.insert(v);
        }
        for slot in 1..=per_vertex_probes {
            match s.query(v, slot) {
                Ok(Some(u)) => {
                    if !s.is_dummy(u) && !s.is_dummy(v) {
                        discovered.push((v, u));
                    }
                }
                Ok(None) => break,
                Err(_) => break,
            }
        }
    }
    // Greedy matching in discovery order.
    let mut used: HashSet<u32> = HashSet::new();
    let mut greedy = 0u64;
    let mut matched_sampled = 0u64;
    for &(u, v) in &discovered {
        if !used.contains(&u) && !used.contains(&v) {
            used.insert(u);
            used.insert(v);
            greedy += 1;
            matched_sampled += sampled_core.contains(&u) as u64 + sampled_core.contains(&v) as u64;
        }
    }
    let dummy_pairs = s.dummy_count() / 2;
    let n_core = n - s.dummy_count();
    let frac = if sampled_core.is_empty() {
        0.0
    } else {
        matched_sampled as f64 / sampled_core.len() as f64
    };
    let mu_hat = dummy_pairs as f64 + frac * n_core as f64 / 2.0;
    let threshold = (n as f64 / 2.0 - n1 as f64 / 4.0) / n as f64;
    let estimate = mu_hat / n as f64;
    let mut evidence = BTreeMap::new();
    evidence.insert("greedy_matched".into(), greedy.to_string());
    evidence.insert("sampled_core".into(), sampled_core.len().to_string());
    Guess {
        verdict: Some(if estimate >= threshold {
            Side::Yes
        } else {
            Side::No
        }),
        estimate,
        queries_used: s.spent(),
        evidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockVerdict {
    SameBlockLikely,
    Different,
    Inconclusive,
}

/// Grow core neighborhoods around `u` and `v` until their discovered sets
/// collide (birthday argument) or the walk budget runs out. Dummy answers
/// are discarded (their identity is disclosed).
pub fn run_block_birthday_test(
    s: &mut QuerySession<'_>,
    u: u32,
    v: u32,
    walk_budget: u64,
) -> BlockVerdict {
    if u == v {
        return BlockVerdict::SameBlockLikely;
    }
    if s.is_dummy(u) || s.is_dummy(v) {
        return BlockVerdict::Different;
    }
    let mut seen: [HashSet<u32>; 2] = [HashSet::from([u]), HashSet::from([v])];
    let mut frontier: [VecDeque<u32>; 2] = [VecDeque::from([u]), VecDeque::from([v])];
    let mut cursor: HashMap<u32, u64> = HashMap::new();
    let mut spent_here = 0u64;
    while spent_here < walk_budget {
        // Expand the smaller side first.
        let mut side = if seen[0].len() <= seen[1].len() { 0 } else { 1 };
        let Some(&x) = frontier[side].front() else {
            side = 1 - side;
            if frontier[side].is_empty() {
                return BlockVerdict::Inconclusive;
            }
            continue;
        };
        let slot = cursor.entry(x).or_insert(0);
        *slot += 1;
        let q = s.query(x, *slot);
        spent_here += 1;
        match q {
            Ok(Some(y)) => {
                if s.is_dummy(y) {
                    continue;
                }
                if seen[1 - side].contains(&y) {
                    return BlockVerdict::SameBlockLikely;
                }
                if seen[side].insert(y) {
                    frontier[side].push_back(y);
                }
            }
            Ok(None) => {
                frontier[side].pop_front();
            }
            Err(_) => return BlockVerdict::Inconclusive,
        }
    }
    BlockVerdict::Inconclusive
}

/// From random starting vertices, repeatedly identify a neighbor leaving
/// the current block (via the birthday test) and chase toward the revealed
/// S vertices. One concrete realization of the block-escape attack; chain
/// lengths land in the evidence map.
pub fn run_special_edge_chaser(
    s: &mut QuerySession<'_>,
    starts: u64,
    p: &ParamSet,
    algo_seed: u64,
) -> Guess {
    if starts == 0 {
        return Guess::abstain(s.spent(), "no starts");
    }
    let r = p.layers;
    let n = s.vertex_count();
    let mut rng = rng_from(algo_seed, StreamKind::Probe, 2);
    let mut chain_lengths: Vec<u64> = Vec::new();
    let mut s_hits = 0u64;
    let per_neighbor_walk = 200u64;
    for _ in 0..starts {
        let mut current = loop {
            let c = rng.gen_range(0..n);
            if !s.is_dummy(c) {
                break c;
            }
        };
        if s.revealed_s().contains_key(&current) {
            chain_lengths.push(0);
            s_hits += 1;
            continue;
        }
        let mut hops = 0u64;
        'chase: while hops < 2 * r {
            // probe a handful of core neighbors of `current`
            let mut slot = 0u64;
            let mut candidates: Vec<u32> = Vec::new();
            while candidates.len() < 6 && slot < 4000 {
                slot += 1;
                match s.query(current, slot) {
                    Ok(Some(y)) if !s.is_dummy(y) => candidates.push(y),
                    Ok(Some(_)) => {}
                    Ok(None) => break,
                    Err(_) => break 'chase,
                }
            }
            let mut next = None;
            for &y in &candidates {
                if s.revealed_s().contains_key(&y) {
                    next = Some(y);
                    break;
                }
                if run_block_birthday_test(s, current, y, per_neighbor_walk)
                    != BlockVerdict::SameBlockLikely
                {
                    next = Some(y);
                    break;
                }
            }
            match next {
                Some(y) => {
                    hops += 1;
                    current = y;
                    if s.revealed_s().contains_key(&y) {
                        s_hits += 1;
                        break;
                    }
                }
                None => break,
            }
        }
        chain_lengths.push(hops);
    }
    let mean_len = chain_lengths.iter().sum::<u64>() as f64 / chain_lengths.len() as f64;
    let hit_rate = s_hits as f64 / starts as f64;
    let mut evidence = BTreeMap::new();
    evidence.insert(
        "chain_lengths".into(),
        format!("{:?}", &chain_lengths[..chain_lengths.len().min(32)]),
    );
    evidence.insert("mean_chain_len".into(), format!("{mean_len:.3}"));
    evidence.insert("s_hit_rate".into(), format!("{hit_rate:.3}"));
    // Weak heuristic verdict; success probability is measured, not assumed.
    Guess {
        verdict: Some(if hit_rate >= 0.5 { Side::Yes } else { Side::No }),
        estimate: 0.5,
        queries_used: s.spent(),
        evidence,
    }
}

// ---------------------------------------------------------------------------
// the distinguishing game

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmConfig {
    FullScan,
    SampledGreedy { sample: u64, probes: u64 },
    SpecialChaser { starts: u64 },
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::FullScan => "full_scan",
            AlgorithmConfig::SampledGreedy { .. } => "sampled_greedy",
            AlgorithmConfig::SpecialChaser { .. } => "special_chaser",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Absolute(u64),
    /// n^x queries.
    Exponent(f64),
    /// Enough to read every adjacency list to its end marker.
    FullRead,
}

impl Budget {
    pub fn resolve(&self, inst: &crate::instance::Instance) -> u64 {
        match *self {
            Budget::Absolute(q) => q,
            Budget::Exponent(x) => (inst.n_total() as f64).powf(x).round() as u64,
            Budget::FullRead => full_scan_budget(inst),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameResult {
    pub algorithm: String,
    pub budget_desc: String,
    pub trials: u64,
    pub successes: u64,
    pub abstentions: u64,
    pub yes_sides: u64,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_queries: f64,
}

impl GameResult {
    pub fn csv_header() -> &'static str {
        "algorithm,budget,trials,successes,abstentions,yes_sides,success_rate,wilson_low,wilson_high,mean_queries"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.1}",
            self.algorithm,
            self.budget_desc,
            self.trials,
            self.successes,
            self.abstentions,
            self.yes_sides,
            self.success_rate,
            self.wilson_low,
            self.wilson_high,
            self.mean_queries
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} correct ({:.1}%), 95% interval [{:.3}, {:.3}], {} abstentions, mean {:.0} queries",
            self.algorithm,
            self.successes,
            self.trials,
            100.0 * self.success_rate,
            self.wilson_low,
            self.wilson_high,
            self.abstentions,
            self.mean_queries
        )
    }
}

/// Wilson 95% score interval.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_985;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (((center - half) / denom).max(0.0), ((center + half) / denom).min(1.0))
}

/// Play the distinguishing game: each trial flips a fair side coin, builds
/// a fresh instance, runs the algorithm in a fresh budgeted session, and
/// scores verdict == side. Abstentions score as an (independently seeded,
/// budget-independent) fair coin and are recorded separately.
pub fn play_game(
    algo: &AlgorithmConfig,
    p: &ParamSet,
    budget: Budget,
    trials: u64,
    master_seed: u64,
) -> Result<GameResult, crate::instance::InstanceError> {
    assert!(trials >= 1);
    let mut successes = 0u64;
    let mut abstentions = 0u64;
    let mut yes_sides = 0u64;
    let mut total_queries = 0u64;
    for t in 0..trials {
        let side = if derive_seed(master_seed, StreamKind::GameTrial, 2 * t) & 1 == 0 {
            Side::Yes
        } else {
            Side::No
        };
        if side == Side::Yes {
            yes_sides += 1;
        }
        let build_seed = derive_seed(master_seed, StreamKind::GameTrial, 2 * t + 1);
        let inst = assemble(p, side, build_seed)?;
        let q = budget.resolve(&inst);
        let mut session = open_session(&inst, q);
        let algo_seed = derive_seed(master_seed, StreamKind::GameTrial, 0x8000_0000 + t);
        let guess = match algo {
            AlgorithmConfig::FullScan => run_full_scan(&mut session),
            AlgorithmConfig::SampledGreedy { sample, probes } => {
                run_sampled_greedy(&mut session, *sample, *probes, p, algo_seed)
            }
            AlgorithmConfig::SpecialChaser { starts } => {
                run_special_edge_chaser(&mut session, *starts, p, algo_seed)
            }
        };
        debug_assert_eq!(guess.queries_used, session.spent());
        total_queries += guess.queries_used;
        match guess.verdict {
            Some(v) => {
                if v == side {
                    successes += 1;
                }
            }
            None => {
                abstentions += 1;
                // budget-independent coin so sweeps stay comparable
                let coin = derive_seed(master_seed, StreamKind::AbstainCoin, t) & 1 == 0;
                let guessed = if coin { Side::Yes } else { Side::No };
                if guessed == side {
                    successes += 1;
                }
            }
        }
    }
    let rate = successes as f64 / trials as f64;
    let (lo, hi) = wilson_interval(successes, trials);
    Ok(GameResult {
        algorithm: algo.name().to_string(),
        budget_desc: match budget {
            Budget::Absolute(q) => q.to_string(),
            Budget::Exponent(x) => format!("n^{x}"),
            Budget::FullRead => "full".to_string(),
        },
        trials,
        successes,
        abstentions,
        yes_sides,
        success_rate: rate,
        wilson_low: lo,
        wilson_high: hi,
        mean_queries: total_queries as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{br, toy_params, ToySpec};

    fn small() -> ParamSet {
        toy_params(ToySpec {
            levels: 1,
            layers: 3,
            block_degrees: vec![4],
            base_width: 72,
            zeta: br(1, 9),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(3, 83),
        })
        .unwrap()
    }

    #[test]
    fn full_scan_exact_on_both_sides() {
        let p = small();
        for (side, want_yes) in [(Side::Yes, true), (Side::No, false)] {
            let inst = assemble(&p, side, 5).unwrap();
            let budget = full_scan_budget(&inst);
            let mut s = open_session(&inst, budget);
            let g = run_full_scan(&mut s);
            assert_eq!(
                g.verdict,
                Some(if want_yes { Side::Yes } else { Side::No })
            );
            if want_yes {
                assert!((g.estimate - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_scan_zero_budget_abstains() {
        let p = small();
        let inst = assemble(&p, Side::Yes, 5).unwrap();
        let mut s = open_session(&inst, 0);
        assert!(run_full_scan(&mut s).verdict.is_none());
    }

    #[test]
    fn game_full_budget_always_wins() {
        let p = small();
        let r = play_game(&AlgorithmConfig::FullScan, &p, Budget::FullRead, 10, 77).unwrap();
        assert_eq!(r.successes, 10);
        assert_eq!(r.abstentions, 0);
    }

    #[test]
    fn game_deterministic() {
        let p = small();
        let a = play_game(
            &AlgorithmConfig::SampledGreedy { sample: 30, probes: 20 },
            &p,
            Budget::Absolute(600),
            8,
            123,
        )
        .unwrap();
        let b = play_game(
            &AlgorithmConfig::SampledGreedy { sample: 30, probes: 20 },
            &p,
            Budget::Absolute(600),
            8,
            123,
        )
        .unwrap();
        assert_eq!(a.successes, b.successes);
        assert_eq!(a.mean_queries, b.mean_queries);
    }

    #[test]
    fn birthday_test_trivial_cases() {
        let p = small();
        let inst = assemble(&p, Side::Yes, 9).unwrap();
        let mut s = open_session(&inst, 10_000);
        assert_eq!(run_block_birthday_test(&mut s, 4, 4, 100), BlockVerdict::SameBlockLikely);
        let dummy = inst.n_core();
        assert_eq!(
            run_block_birthday_test(&mut s, 4, dummy, 100),
            BlockVerdict::Different
        );
    }

    #[test]
    fn sampled_greedy_zero_sample_votes_no() {
        let p = small();
        let inst = assemble(&p, Side::Yes, 9).unwrap();
        let mut s = open_session(&inst, 100);
        let g = run_sampled_greedy(&mut s, 0, 10, &p, 1);
        assert_eq!(g.verdict, Some(Side::No));
        assert_eq!(g.estimate, 0.0);
    }

    #[test]
    fn wilson_sane() {
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.07);
    }
}
