//! Ground truth: exact maximum matching with cover certificates, and the
//! YES/NO gap check.
//!
//! The matcher is augmenting-path based with layered BFS phases and
//! deterministic lowest-index tie-breaking, so certificates are
//! reproducible. Optimality is witnessed by a vertex cover of equal size;
//! `verify_certificate` checks both halves independently of how they were
//! produced.
//!
//! Dummy vertices are never materialized as edges: a maximum matching of
//! the full instance is assembled from a maximum matching of the core plus
//! an arithmetic completion over the dummy layer (dummies are mutually
//! matched, or repair unmatched core vertices pair by pair). Tiny-instance
//! brute force pins this exchange argument down in tests.

use crate::instance::{Instance, LevelGraph};
use crate::params::{ParamSet, Side};
use num::ToPrimitive;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("graph is not bipartite under the declared classes: edge ({0}, {1})")]
    NotBipartite(u32, u32),
}

/// A matching plus a vertex cover of the same size; together they prove
/// optimality of both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingCertificate {
    pub matching: Vec<(u32, u32)>,
    pub cover: Vec<u32>,
    pub size: u64,
}

const UNMATCHED: u32 = u32::MAX;

/// Maximum matching of a bipartite graph given as left-adjacency lists.
/// Returns (match_left, match_right, cover witness) with
/// cover = (L \ Z) ∪ (R ∩ Z), Z the alternating-reachable set from free
/// left vertices after the final phase.
fn hopcroft_karp(nl: usize, nr: usize, adj: &[Vec<u32>]) -> (Vec<u32>, Vec<u32>, Vec<bool>, Vec<bool>) {
    let mut ml = vec![UNMATCHED; nl];
    let mut mr = vec![UNMATCHED; nr];
    let mut dist = vec![u32::MAX; nl];
    let mut queue: std::collections::VecDeque<u32> = std::collections::VecDeque::new();

    loop {
        // BFS layering from free left vertices.
        queue.clear();
        for u in 0..nl {
            if ml[u] == UNMATCHED {
                dist[u] = 0;
                queue.push_back(u as u32);
            } else {
                dist[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u as usize] {
                let w = mr[v as usize];
                if w == UNMATCHED {
                    found = true;
                } else if dist[w as usize] == u32::MAX {
                    dist[w as usize] = dist[u as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        // Layered DFS augmentation, lowest index first.
        fn dfs(
            u: usize,
            adj: &[Vec<u32>],
            ml: &mut [u32],
            mr: &mut [u32],
            dist: &mut [u32],
        ) -> bool {
            let d = dist[u];
            dist[u] = u32::MAX;
            for &v in &adj[u] {
                let w = mr[v as usize];
                if w == UNMATCHED
                    || (dist[w as usize] == d + 1 && dfs(w as usize, adj, ml, mr, dist))
                {
                    ml[u] = v;
                    mr[v as usize] = u as u32;
                    return true;
                }
            }
            false
        }
        let mut any = false;
        for u in 0..nl {
            if ml[u] == UNMATCHED && dist[u] == 0 {
                any |= dfs(u, adj, &mut ml, &mut mr, &mut dist);
            }
        }
        if !any {
            break;
        }
    }

    // Final alternating reachability for the cover.
    let mut zl = vec![false; nl];
    let mut zr = vec![false; nr];
    queue.clear();
    for u in 0..nl {
        if ml[u] == UNMATCHED {
            zl[u] = true;
            queue.push_back(u as u32);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u as usize] {
            if ml[u as usize] == v {
                continue;
            }
            if !zr[v as usize] {
                zr[v as usize] = true;
                let w = mr[v as usize];
                if w != UNMATCHED && !zl[w as usize] {
                    zl[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    (ml, mr, zl, zr)
}

/// Exact maximum matching of an edge list over a declared bipartition.
/// `class_of(v)` must 2-color every edge; vertex ids are global.
pub fn max_matching_bipartite(
    edges: &[(u32, u32)],
    class_of: impl Fn(u32) -> u8,
) -> Result<MatchingCertificate, ExactError> {
    // Index left/right sides compactly.
    let mut left_ids: Vec<u32> = Vec::new();
    let mut right_ids: Vec<u32> = Vec::new();
    let mut left_ix: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    let mut right_ix: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for &(u, v) in edges {
        let (l, r) = match (class_of(u), class_of(v)) {
            (0, 1) => (u, v),
            (1, 0) => (v, u),
            _ => return Err(ExactError::NotBipartite(u, v)),
        };
        left_ix.entry(l).or_insert_with(|| {
            left_ids.push(l);
            left_ids.len() as u32 - 1
        });
        right_ix.entry(r).or_insert_with(|| {
            right_ids.push(r);
            right_ids.len() as u32 - 1
        });
    }
    let nl = left_ids.len();
    let nr = right_ids.len();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); nl];
    for &(u, v) in edges {
        let (l, r) = if class_of(u) == 0 { (u, v) } else { (v, u) };
        adj[left_ix[&l] as usize].push(right_ix[&r]);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let (ml, _mr, zl, zr) = hopcroft_karp(nl, nr, &adj);
    let mut matching = Vec::new();
    for (u, &v) in ml.iter().enumerate() {
        if v != UNMATCHED {
            matching.push((left_ids[u], right_ids[v as usize]));
        }
    }
    let mut cover: Vec<u32> = Vec::new();
    for u in 0..nl {
        if !zl[u] {
            cover.push(left_ids[u]);
        }
    }
    for v in 0..nr {
        if zr[v] {
            cover.push(right_ids[v]);
        }
    }
    cover.sort_unstable();
    let size = matching.len() as u64;
    debug_assert_eq!(cover.len() as u64, size);
    Ok(MatchingCertificate {
        matching,
        cover,
        size,
    })
}

/// Maximum matching of a level graph (no dummy layer).
pub fn max_matching_level(g: &LevelGraph) -> Result<MatchingCertificate, ExactError> {
    let pairs: Vec<(u32, u32)> = g.edges.iter().map(|&(u, v, _)| (u, v)).collect();
    for &(u, v) in &pairs {
        if g.classes[u as usize] == g.classes[v as usize] {
            return Err(ExactError::NotBipartite(u, v));
        }
    }
    max_matching_bipartite(&pairs, |v| g.classes[v as usize])
}

/// Maximum matching of a full instance, dummy layer included.
///
/// With `h` core vertices per side, `p` dummy pairs and a core maximum
/// matching of size `m`, the maximum matching of the whole graph is
/// `min(m + 2p, h + p)`: each dummy pair either matches internally or
/// repairs one unmatched core vertex on each side.
pub fn max_matching(inst: &Instance) -> Result<MatchingCertificate, ExactError> {
    let h = inst.core_half as u64;
    let p = inst.dummy_half as u64;
    let core = max_matching_core(inst)?;
    let m = core.size;

    let mut matching = core.matching.clone();
    let mut matched0 = vec![false; h as usize];
    let mut matched1 = vec![false; h as usize];
    for &(u, v) in &core.matching {
        let (a, b) = if u < inst.core_half { (u, v) } else { (v, u) };
        matched0[a as usize] = true;
        matched1[(b - inst.core_half) as usize] = true;
    }
    let free0: Vec<u32> = (0..inst.core_half).filter(|&v| !matched0[v as usize]).collect();
    let free1: Vec<u32> = (0..inst.core_half)
        .filter(|&v| !matched1[v as usize])
        .map(|v| v + inst.core_half)
        .collect();
    debug_assert_eq!(free0.len(), free1.len());

    let dummy0 = |i: u64| (2 * h + i) as u32;
    let dummy1 = |i: u64| (2 * h + p + i) as u32;
    let rescued = free0.len().min(p as usize);
    for k in 0..rescued {
        // dummy pair k repairs one core vertex on each side
        matching.push((free0[k], dummy1(k as u64)));
        matching.push((free1[k], dummy0(k as u64)));
    }
    for k in rescued as u64..p {
        matching.push((dummy0(k), dummy1(k)));
    }

    let size = m + 2 * rescued as u64 + (p - rescued as u64);
    debug_assert_eq!(size, (m + 2 * p).min(h + p));

    let cover: Vec<u32> = if m + 2 * p >= h + p {
        // Perfect matching: one whole bipartition class is a minimum cover.
        (0..inst.core_half)
            .chain((2 * h as u32)..(2 * h + p) as u32)
            .collect()
    } else {
        // Core cover plus every dummy vertex.
        let mut c = core.cover.clone();
        c.extend((2 * h as u32)..(2 * h + 2 * p) as u32);
        c
    };
    debug_assert_eq!(cover.len() as u64, size);
    Ok(MatchingCertificate {
        matching,
        cover,
        size,
    })
}

fn max_matching_core(inst: &Instance) -> Result<MatchingCertificate, ExactError> {
    let nl = inst.core_half as usize;
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); nl];
    for u in 0..inst.core_half {
        for k in inst.csr_range(u) {
            let v = inst.csr_neighbors[k];
            if v < inst.core_half {
                return Err(ExactError::NotBipartite(u, v));
            }
            adj[u as usize].push(v - inst.core_half);
        }
    }
    let (ml, _mr, zl, zr) = hopcroft_karp(nl, nl, &adj);
    let mut matching = Vec::new();
    for (u, &v) in ml.iter().enumerate() {
        if v != UNMATCHED {
            matching.push((u as u32, v + inst.core_half));
        }
    }
    let mut cover = Vec::new();
    for u in 0..nl {
        if !zl[u] {
            cover.push(u as u32);
        }
    }
    for v in 0..nl {
        if zr[v] {
            cover.push(v as u32 + inst.core_half);
        }
    }
    let size = matching.len() as u64;
    Ok(MatchingCertificate {
        matching,
        cover,
        size,
    })
}

/// Check a certificate against an instance: the matching must consist of
/// pairwise-disjoint real edges, the cover must touch every edge, and the
/// two sizes must agree (which proves both optimal).
pub fn verify_certificate(inst: &Instance, cert: &MatchingCertificate) -> bool {
    use std::collections::HashSet;
    if cert.matching.len() as u64 != cert.size || cert.cover.len() as u64 != cert.size {
        return false;
    }
    let mut used: HashSet<u32> = HashSet::with_capacity(cert.matching.len() * 2);
    for &(u, v) in &cert.matching {
        if !inst.has_edge(u, v) {
            return false;
        }
        if !used.insert(u) || !used.insert(v) {
            return false;
        }
    }
    let cover: HashSet<u32> = cert.cover.iter().copied().collect();
    if cover.len() != cert.cover.len() {
        return false;
    }
    // Core edges.
    for u in 0..2 * inst.core_half {
        if cover.contains(&u) {
            continue;
        }
        for k in inst.csr_range(u) {
            if !cover.contains(&inst.csr_neighbors[k]) {
                return false;
            }
        }
    }
    // Dummy incidences: a core vertex not in the cover needs every
    // opposite-side dummy covered; a free dummy needs the whole opposite
    // core side plus its partner covered.
    let h = inst.core_half;
    let p = inst.dummy_half;
    if p > 0 {
        let dummies_covered = |side: u8| -> bool {
            let base = inst.dummy_base(side);
            (base..base + p).all(|x| cover.contains(&x))
        };
        let core_covered = |side: u8| -> bool {
            let base = side as u32 * h;
            (base..base + h).all(|v| cover.contains(&v))
        };
        let d0 = dummies_covered(0);
        let d1 = dummies_covered(1);
        let c0 = core_covered(0);
        let c1 = core_covered(1);
        for side in 0..2u8 {
            let base = side as u32 * h;
            let need = if side == 0 { d1 } else { d0 };
            if !need {
                for v in base..base + h {
                    if !cover.contains(&v) {
                        return false;
                    }
                }
            }
            let opp_core_full = if side == 0 { c1 } else { c0 };
            let dbase = inst.dummy_base(side);
            for i in 0..p {
                let x = dbase + i;
                if cover.contains(&x) {
                    continue;
                }
                if !opp_core_full {
                    return false;
                }
                if !cover.contains(&inst.dummy_partner(x)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Brute-force maximum matching size by exhaustive search; usable up to a
/// handful of vertices per side. Test oracle for the matcher.
pub fn max_matching_bruteforce(edges: &[(u32, u32)], class_of: impl Fn(u32) -> u8) -> u64 {
    let mut left: Vec<u32> = Vec::new();
    let mut right: Vec<u32> = Vec::new();
    for &(u, v) in edges {
        let (l, r) = if class_of(u) == 0 { (u, v) } else { (v, u) };
        if !left.contains(&l) {
            left.push(l);
        }
        if !right.contains(&r) {
            right.push(r);
        }
    }
    left.sort_unstable();
    right.sort_unstable();
    assert!(right.len() <= 20, "brute force domain too large");
    let radj: Vec<u32> = left
        .iter()
        .map(|&l| {
            let mut mask = 0u32;
            for &(u, v) in edges {
                let (a, b) = if class_of(u) == 0 { (u, v) } else { (v, u) };
                if a == l {
                    mask |= 1 << right.binary_search(&b).unwrap();
                }
            }
            mask
        })
        .collect();
    let mut memo: std::collections::HashMap<(usize, u32), u64> = std::collections::HashMap::new();
    fn rec(
        i: usize,
        used: u32,
        radj: &[u32],
        memo: &mut std::collections::HashMap<(usize, u32), u64>,
    ) -> u64 {
        if i == radj.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = rec(i + 1, used, radj, memo);
        let mut avail = radj[i] & !used;
        while avail != 0 {
            let bit = avail & avail.wrapping_neg();
            avail ^= bit;
            best = best.max(1 + rec(i + 1, used | bit, radj, memo));
        }
        memo.insert((i, used), best);
        best
    }
    rec(0, 0, &radj, &mut memo)
}

/// Exact gap report between a YES and a NO instance.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub n: u64,
    pub base_width: u64,
    pub mu_yes: u64,
    pub mu_no: u64,
    pub gap: i64,
    pub pass_yes: bool,
    pub pass_no: bool,
    pub pass_gap: bool,
    /// Paper-mode extra: eps * n <= N_1 / 2, reported when delta is defined.
    pub eps_n_bound: Option<(f64, bool)>,
    pub paired_seeds: bool,
}

impl GapReport {
    pub fn all_pass(&self) -> bool {
        self.pass_yes && self.pass_no && self.pass_gap
    }

    pub fn json_line(&self) -> String {
        let eps = match &self.eps_n_bound {
            Some((v, ok)) => format!(",\"eps_n\":{v},\"eps_n_ok\":{ok}"),
            None => String::new(),
        };
        format!(
            "{{\"n\":{},\"N1\":{},\"mu_yes\":{},\"mu_no\":{},\"gap\":{},\"pass_yes\":{},\"pass_no\":{},\"pass_gap\":{},\"paired\":{}{}}}",
            self.n,
            self.base_width,
            self.mu_yes,
            self.mu_no,
            self.gap,
            self.pass_yes,
            self.pass_no,
            self.pass_gap,
            self.paired_seeds,
            eps
        )
    }

    pub fn csv_header() -> &'static str {
        "n,N1,mu_yes,mu_no,gap,pass_yes,pass_no,pass_gap,paired"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.base_width,
            self.mu_yes,
            self.mu_no,
            self.gap,
            self.pass_yes,
            self.pass_no,
            self.pass_gap,
            self.paired_seeds
        )
    }
}

/// Verify the exact YES/NO matching-size identities:
/// mu(yes) = n/2, mu(no) <= n/2 - N_1/2, gap >= N_1/2.
pub fn verify_gap(yes: &Instance, no: &Instance, p: &ParamSet) -> Result<GapReport, ExactError> {
    let n = yes.n_total() as u64;
    let n1 = p.base_width.to_u64().unwrap_or(u64::MAX);
    let cy = max_matching(yes)?;
    let cn = max_matching(no)?;
    debug_assert!(verify_certificate(yes, &cy));
    debug_assert!(verify_certificate(no, &cn));
    let mu_yes = cy.size;
    let mu_no = cn.size;
    let pass_yes = yes.side == Side::Yes && 2 * mu_yes == n;
    let pass_no = no.side == Side::No && 2 * mu_no <= n.saturating_sub(n1);
    let gap = mu_yes as i64 - mu_no as i64;
    let pass_gap = 2 * gap >= n1 as i64;
    let eps_n_bound = p.delta.map(|_| {
        let eps_n = p.epsilon * n as f64;
        (eps_n, eps_n <= n1 as f64 / 2.0)
    });
    Ok(GapReport {
        n,
        base_width: n1,
        mu_yes,
        mu_no,
        gap,
        pass_yes,
        pass_no,
        pass_gap,
        eps_n_bound,
        paired_seeds: yes.master_seed == no.master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes_from(edges: &[(u32, u32)], n: u32) -> Vec<u8> {
        // 2-color by BFS; panics on odd cycles (tests use bipartite inputs)
        let mut color = vec![u8::MAX; n as usize];
        let mut adj = vec![Vec::new(); n as usize];
        for &(u, v) in edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for s in 0..n {
            if color[s as usize] != u8::MAX {
                continue;
            }
            color[s as usize] = 0;
            let mut q = std::collections::VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u as usize] {
                    if color[v as usize] == u8::MAX {
                        color[v as usize] = 1 - color[u as usize];
                        q.push_back(v);
                    }
                }
            }
        }
        color.iter().map(|&c| if c == u8::MAX { 0 } else { c }).collect()
    }

    #[test]
    fn empty_graph() {
        let cert = max_matching_bipartite(&[], |_| 0).unwrap();
        assert_eq!(cert.size, 0);
    }

    #[test]
    fn small_path() {
        // path 0-1-2-3 has matching size 2
        let edges = [(0u32, 1u32), (2, 1), (2, 3)];
        let cl = classes_from(&edges, 4);
        let cert = max_matching_bipartite(&edges, |v| cl[v as usize]).unwrap();
        assert_eq!(cert.size, 2);
    }

    #[test]
    fn brute_force_agreement_random() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(3, crate::seed::StreamKind::Gadget, 77);
        for _ in 0..300 {
            let nl = rng.gen_range(1..=7u32);
            let nr = rng.gen_range(1..=7u32);
            let mut edges = Vec::new();
            for u in 0..nl {
                for v in 0..nr {
                    if rng.gen_bool(0.35) {
                        edges.push((u, nl + v));
                    }
                }
            }
            let class = |v: u32| if v < nl { 0 } else { 1 };
            let hk = max_matching_bipartite(&edges, class).unwrap();
            let bf = max_matching_bruteforce(&edges, class);
            assert_eq!(hk.size, bf, "edges: {edges:?}");
            assert_eq!(hk.cover.len() as u64, hk.size);
        }
    }

    #[test]
    fn monotone_under_edge_addition() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(4, crate::seed::StreamKind::Gadget, 78);
        for _ in 0..100 {
            let nl = rng.gen_range(1..=6u32);
            let nr = rng.gen_range(1..=6u32);
            let mut edges = Vec::new();
            for u in 0..nl {
                for v in 0..nr {
                    if rng.gen_bool(0.3) {
                        edges.push((u, nl + v));
                    }
                }
            }
            let class = |v: u32| if v < nl { 0 } else { 1 };
            let before = max_matching_bipartite(&edges, class).unwrap().size;
            let u = rng.gen_range(0..nl);
            let v = nl + rng.gen_range(0..nr);
            if !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
            let after = max_matching_bipartite(&edges, class).unwrap().size;
            assert!(after >= before);
        }
    }
}
