//! Structural statistics of a frozen transcript against ground truth.
//!
//! These turn the high-probability structure of the query game into
//! measured quantities: how many core edges the querier discovered, the
//! in-degree profile of the discovered directed graph, which vertices
//! spoiled the idealized forest structure, how large the shallow
//! neighborhoods grew, and how the discovered edges split into black
//! (inner-structure) and green components per level.

use crate::instance::Instance;
use crate::oracle::{open_session, OracleError, Transcript};
use crate::params::g;
use crate::table::SubsetKind;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("transcript was not produced on this instance (seed {t_seed} vs {i_seed})")]
    TranscriptInstanceMismatch { t_seed: u64, i_seed: u64 },
}

/// Analysis knobs. The spoiled-size cutoff has a closed form only when the
/// query-budget exponent is defined; toy instances must set it explicitly.
#[derive(Debug, Clone, Copy)]
pub struct AnalyzeConfig {
    /// Directed reach bound for shallow subgraphs; default ceil(10 ln n).
    pub shallow_depth: Option<u32>,
    /// Size threshold above which a shallow subgraph marks its root
    /// spoiled; default n^(delta - 2 sigma_L) when delta is defined, else
    /// ceil(sqrt(n)).
    pub spoiled_size_cutoff: Option<u64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            shallow_depth: None,
            spoiled_size_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LevelEdgeStats {
    pub level: u32,
    pub black_edges: u64,
    pub special_edges: u64,
    pub component_sizes: Vec<u64>,
    pub cycle_count: u64,
    pub all_components_trees: bool,
    /// Black edges whose endpoints are spoiled or whose component carries a
    /// cycle: the measurable proxy for "identified inner" edges.
    pub identified_inner_edges: u64,
    /// Predicted threshold exponent 1 - g(level), when defined.
    pub g_exponent: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct StructuralStats {
    pub queries: u64,
    pub core_edges_discovered: u64,
    pub max_in_degree: u64,
    pub spoiler_count: u64,
    pub spoiled_count: u64,
    pub touched_core_vertices: u64,
    pub shallow_depth: u32,
    pub spoiled_size_cutoff: u64,
    pub shallow_size_histogram: BTreeMap<u64, u64>,
    pub shallow_size_sum: u64,
    /// Every unspoiled shallow subgraph must be a rooted tree.
    pub unspoiled_trees_ok: bool,
    pub mixer_vertex_touch_count: u64,
    pub per_level: Vec<LevelEdgeStats>,
}

impl StructuralStats {
    pub fn csv_header() -> &'static str {
        "queries,core_edges,max_in_degree,spoilers,spoiled,touched,shallow_sum,mixer_touches,base_black_edges,base_cycles,base_forest"
    }

    pub fn csv_row(&self) -> String {
        let base = self.per_level.first();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.queries,
            self.core_edges_discovered,
            self.max_in_degree,
            self.spoiler_count,
            self.spoiled_count,
            self.touched_core_vertices,
            self.shallow_size_sum,
            self.mixer_vertex_touch_count,
            base.map(|b| b.black_edges).unwrap_or(0),
            base.map(|b| b.cycle_count).unwrap_or(0),
            base.map(|b| b.all_components_trees).unwrap_or(true),
        )
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("shallow_size,count\n");
        for (size, count) in &self.shallow_size_histogram {
            s.push_str(&format!("{size},{count}\n"));
        }
        s
    }
}

/// Per-edge classification flags relative to a level.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeFlags {
    pub black: bool,
    pub green: bool,
    pub special: bool,
}

fn is_special_pair(a: SubsetKind, b: SubsetKind, layers: u64) -> bool {
    use SubsetKind::*;
    let pair = |x: SubsetKind, y: SubsetKind| -> bool {
        match (x, y) {
            (S { .. }, B { layer: 1, .. }) => true,
            (A { layer: i, .. }, B { layer: k, .. }) => k == i + 1,
            (A { layer: i, .. }, A { layer: k, .. }) => i == layers && k == layers,
            (DPart { layer: i, part: 1 }, DPart { layer: k, part: 2 }) => i == k,
            (DPart { layer: i, part: 3 }, DPart { layer: k, part: 4 }) => i == k,
            _ => false,
        }
    };
    pair(a, b) || pair(b, a)
}

/// Ground-truth classification of the discovered core edges at `level`:
/// black edges are those inside the level's distinguishing structure (both
/// endpoints carry the layer-r A label at that level); at the base level
/// every base-origin edge counts as black. Special edges are the thin
/// connective matchings of that level's frame.
pub fn classify_edges(
    t: &Transcript,
    inst: &Instance,
    level: u32,
) -> Result<Vec<EdgeFlags>, StatsError> {
    check_match(t, inst)?;
    let layers = inst.params.layers;
    let top = inst.label_stride;
    let mut out = Vec::with_capacity(t.core_edges.len());
    for &(u, v) in &t.core_edges {
        let origin = inst.edge_level(u, v).unwrap_or(0) & 0x7f;
        let mut f = EdgeFlags::default();
        if level == 1 {
            f.black = origin == 1;
            f.special = origin == 1 && inst.edge_special(u, v);
        } else if level <= top {
            let su = inst.subset_at(u, level);
            let sv = inst.subset_at(v, level);
            let both_ar = matches!(su, SubsetKind::A { layer, .. } if layer == layers)
                && matches!(sv, SubsetKind::A { layer, .. } if layer == layers);
            f.black = both_ar && origin < level as u8;
            f.special = (origin as u32) < level && is_special_pair(su, sv, layers);
        }
        f.green = !f.black;
        out.push(f);
    }
    Ok(out)
}

fn check_match(t: &Transcript, inst: &Instance) -> Result<(), StatsError> {
    if t.instance_vertices != 0
        && (t.instance_seed != inst.master_seed || t.instance_vertices != inst.n_total())
    {
        return Err(StatsError::TranscriptInstanceMismatch {
            t_seed: t.instance_seed,
            i_seed: inst.master_seed,
        });
    }
    Ok(())
}

/// Full structural sweep of a transcript.
pub fn analyze(
    t: &Transcript,
    inst: &Instance,
    cfg: AnalyzeConfig,
) -> Result<StructuralStats, StatsError> {
    check_match(t, inst)?;
    let n = inst.n_total() as f64;
    let depth = cfg
        .shallow_depth
        .unwrap_or_else(|| (10.0 * n.ln()).ceil() as u32);
    let cutoff = cfg.spoiled_size_cutoff.unwrap_or_else(|| {
        match inst.params.delta {
            Some(delta) => {
                let sigma_top = inst.params.sigma[inst.params.levels as usize - 1];
                n.powf(delta - 2.0 * sigma_top).ceil() as u64
            }
            None => n.sqrt().ceil() as u64,
        }
        .max(2)
    });

    let edges = &t.core_edges;
    let mut out_adj: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut in_deg: HashMap<u32, u64> = HashMap::new();
    let mut touch_deg: HashMap<u32, u64> = HashMap::new();
    let mut spoilers: HashSet<u32> = HashSet::new();

    for &(u, v) in edges {
        // Condition (ii): v already carried a discovered core edge.
        if touch_deg.get(&v).copied().unwrap_or(0) > 0 {
            spoilers.insert(u);
        }
        *touch_deg.entry(u).or_insert(0) += 1;
        *touch_deg.entry(v).or_insert(0) += 1;
        *in_deg.entry(v).or_insert(0) += 1;
        out_adj.entry(u).or_default().push(v);
    }
    // Condition (i): more than one incoming edge.
    for (&v, &d) in &in_deg {
        if d > 1 {
            spoilers.insert(v);
        }
    }
    let max_in_degree = in_deg.values().copied().max().unwrap_or(0);

    // Shallow subgraphs per touched vertex.
    let touched: Vec<u32> = {
        let mut v: Vec<u32> = touch_deg.keys().copied().collect();
        v.sort_unstable();
        v
    };
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    let mut shallow_size_sum = 0u64;
    let mut spoiled: HashSet<u32> = HashSet::new();
    let mut unspoiled_trees_ok = true;
    let mut mixer_touches = 0u64;
    let layers = inst.params.layers;
    let top = inst.label_stride;

    for &root in &touched {
        // Directed BFS to bounded depth, recording parents for paths.
        let mut dist: HashMap<u32, u32> = HashMap::new();
        let mut parent: HashMap<u32, u32> = HashMap::new();
        let mut q = VecDeque::from([root]);
        dist.insert(root, 0);
        let mut internal_edges = 0u64;
        while let Some(x) = q.pop_front() {
            let dx = dist[&x];
            if dx >= depth {
                continue;
            }
            if let Some(next) = out_adj.get(&x) {
                for &y in next {
                    internal_edges += 1;
                    if !dist.contains_key(&y) {
                        dist.insert(y, dx + 1);
                        parent.insert(y, x);
                        q.push_back(y);
                    }
                }
            }
        }
        let size = dist.len() as u64;
        *histogram.entry(size).or_insert(0) += 1;
        shallow_size_sum += size;
        let has_spoiler = dist.keys().any(|v| spoilers.contains(v));
        let is_spoiled = has_spoiler || size >= cutoff;
        if is_spoiled {
            spoiled.insert(root);
        } else {
            // Unspoiled shallow subgraphs must be rooted trees.
            if internal_edges != size - 1 {
                unspoiled_trees_ok = false;
            }
            // Mixer accounting within the rooted tree, for roots carrying a
            // layer-r label at the top level.
            let root_kind = inst.subset_at(root, top);
            let rooted_at_r = matches!(
                root_kind,
                SubsetKind::A { layer, .. } | SubsetKind::B { layer, .. } | SubsetKind::DPart { layer, .. }
                    if layer == layers
            );
            if rooted_at_r {
                for (&v, _) in dist.iter() {
                    if v == root {
                        continue;
                    }
                    // Count construction-special edges on the root path.
                    let mut k = 0u64;
                    let mut cur = v;
                    while cur != root {
                        let p = parent[&cur];
                        if inst.edge_special(p, cur) {
                            k += 1;
                        }
                        cur = p;
                    }
                    if k + 1 < layers {
                        if let SubsetKind::DPart { layer, .. } = inst.subset_at(v, top) {
                            if layer <= layers - k - 1 {
                                mixer_touches += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    // Per-level black/green structure.
    let mut per_level = Vec::new();
    for level in 1..=inst.label_stride {
        let flags = classify_edges(t, inst, level)?;
        let mut black_pairs: Vec<(u32, u32)> = Vec::new();
        let mut special_edges = 0u64;
        for (f, &(u, v)) in flags.iter().zip(edges.iter()) {
            if f.special {
                special_edges += 1;
            }
            if f.black {
                black_pairs.push((u, v));
            }
        }
        // Undirected components of the black edges.
        let mut index: HashMap<u32, usize> = HashMap::new();
        let mut dsu: Vec<usize> = Vec::new();
        fn find(dsu: &mut Vec<usize>, mut x: usize) -> usize {
            while dsu[x] != x {
                dsu[x] = dsu[dsu[x]];
                x = dsu[x];
            }
            x
        }
        let mut uniq: HashSet<(u32, u32)> = HashSet::new();
        for &(u, v) in &black_pairs {
            for w in [u, v] {
                if !index.contains_key(&w) {
                    index.insert(w, dsu.len());
                    dsu.push(index[&w]);
                }
            }
            uniq.insert((u.min(v), u.max(v)));
        }
        let mut edge_count: HashMap<usize, u64> = HashMap::new();
        for &(u, v) in &uniq {
            let (a, b) = (index[&u], index[&v]);
            let (ra, rb) = (find(&mut dsu, a), find(&mut dsu, b));
            if ra != rb {
                dsu[ra] = rb;
            }
        }
        for &(u, _) in &uniq {
            let r = find(&mut dsu, index[&u]);
            *edge_count.entry(r).or_insert(0) += 1;
        }
        let mut vert_count: HashMap<usize, u64> = HashMap::new();
        for (_, &i) in &index {
            let r = find(&mut dsu, i);
            *vert_count.entry(r).or_insert(0) += 1;
        }
        let mut component_sizes: Vec<u64> = vert_count.values().copied().collect();
        component_sizes.sort_unstable_by(|a, b| b.cmp(a));
        let mut cycle_count = 0u64;
        for (root, &vc) in &vert_count {
            let ec = edge_count.get(root).copied().unwrap_or(0);
            cycle_count += (ec + 1).saturating_sub(vc);
        }
        // Identified-inner proxy: black edges in a cyclic component or with
        // a spoiled endpoint.
        let mut cyclic_roots: HashSet<usize> = HashSet::new();
        for (root, &vc) in &vert_count {
            if edge_count.get(root).copied().unwrap_or(0) >= vc {
                cyclic_roots.insert(*root);
            }
        }
        let mut identified = 0u64;
        for &(u, v) in &uniq {
            let r = find(&mut dsu, index[&u]);
            if cyclic_roots.contains(&r) || spoiled.contains(&u) || spoiled.contains(&v) {
                identified += 1;
            }
        }
        per_level.push(LevelEdgeStats {
            level,
            black_edges: uniq.len() as u64,
            special_edges,
            all_components_trees: cycle_count == 0,
            component_sizes,
            cycle_count,
            identified_inner_edges: identified,
            g_exponent: g(level, &inst.params).ok().map(|gl| 1.0 - gl),
        });
    }

    Ok(StructuralStats {
        queries: t.records.len() as u64,
        core_edges_discovered: edges.len() as u64,
        max_in_degree,
        spoiler_count: spoilers.len() as u64,
        spoiled_count: spoiled.len() as u64,
        touched_core_vertices: touched.len() as u64,
        shallow_depth: depth,
        spoiled_size_cutoff: cutoff,
        shallow_size_histogram: histogram,
        shallow_size_sum,
        unspoiled_trees_ok,
        mixer_vertex_touch_count: mixer_touches,
        per_level,
    })
}

/// The uniform-random query strategy: repeatedly pick a vertex uniformly at
/// random among the not-yet-exhausted ones and query its next unqueried
/// slot. Returns the frozen transcript.
pub fn random_probe_transcript(
    inst: &Instance,
    budget: u64,
    seed: u64,
) -> Result<Transcript, OracleError> {
    use rand::Rng;
    let mut rng = crate::seed::rng_from(seed, crate::seed::StreamKind::Probe, 0);
    let mut session = open_session(inst, budget);
    let n = inst.n_total();
    let mut cursor: Vec<u64> = vec![0; n as usize];
    let mut alive: Vec<u32> = (0..n).collect();
    while session.spent() < budget && !alive.is_empty() {
        let k = rng.gen_range(0..alive.len());
        let v = alive[k];
        let slot = cursor[v as usize] + 1;
        match session.query(v, slot) {
            Ok(Some(_)) => cursor[v as usize] = slot,
            Ok(None) => {
                alive.swap_remove(k);
            }
            Err(OracleError::BudgetExhausted { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(session.freeze())
}

impl Instance {
    /// Construction-time special flag of a core edge: the thin connective
    /// matchings (chain spines, delusive pair matchings, and the
    /// side-specific layer-r structure).
    pub fn edge_special(&self, u: u32, v: u32) -> bool {
        if self.is_dummy(u) || self.is_dummy(v) {
            return false;
        }
        let r = self.csr_range(u);
        let base = r.start;
        match self.csr_neighbors[r].binary_search(&v) {
            Ok(i) => self.csr_levels[base + i] & 0x80 != 0,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::assemble;
    use crate::params::{br, toy_params, Side, ToySpec};

    fn inst() -> Instance {
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
        assemble(&p, Side::Yes, 1234).unwrap()
    }

    #[test]
    fn empty_transcript_zero_stats() {
        let i = inst();
        let s = open_session(&i, 10).freeze();
        let st = analyze(&s, &i, AnalyzeConfig::default()).unwrap();
        assert_eq!(st.core_edges_discovered, 0);
        assert_eq!(st.max_in_degree, 0);
        assert_eq!(st.spoiler_count, 0);
        assert_eq!(st.spoiled_count, 0);
    }

    #[test]
    fn spoiler_conditions() {
        let i = inst();
        // Drive enough random queries to discover shared targets, then
        // recheck the two spoiler conditions directly from the transcript.
        let t = random_probe_transcript(&i, 4000, 7).unwrap();
        let st = analyze(&t, &i, AnalyzeConfig::default()).unwrap();
        // recompute by definition
        let mut indeg: HashMap<u32, u64> = HashMap::new();
        let mut touched: HashMap<u32, u64> = HashMap::new();
        let mut expected: HashSet<u32> = HashSet::new();
        for &(u, v) in &t.core_edges {
            if touched.get(&v).copied().unwrap_or(0) > 0 {
                expected.insert(u);
            }
            *touched.entry(u).or_insert(0) += 1;
            *touched.entry(v).or_insert(0) += 1;
            *indeg.entry(v).or_insert(0) += 1;
        }
        for (&v, &d) in &indeg {
            if d > 1 {
                expected.insert(v);
            }
        }
        assert_eq!(st.spoiler_count, expected.len() as u64);
        assert!(st.unspoiled_trees_ok);
    }

    #[test]
    fn special_classification() {
        let i = inst();
        // exhaustively discover a few vertices' edges and check flags
        let mut s = open_session(&i, 100_000);
        for v in 0..i.n_core() {
            let cd = i.core_degree(v);
            for slot in 1..=i.degree(v).min(cd + 2) {
                let _ = s.query(v, slot);
            }
        }
        let t = s.freeze();
        let flags = classify_edges(&t, &i, 1).unwrap();
        let mut seen_special = 0u64;
        for (f, &(u, v)) in flags.iter().zip(t.core_edges.iter()) {
            let su = i.subset_at(u, 1);
            let sv = i.subset_at(v, 1);
            // S-incident edges are exactly the S-B_1 spines: special.
            if matches!(su, SubsetKind::S { .. }) || matches!(sv, SubsetKind::S { .. }) {
                assert!(f.special, "S edge ({u},{v}) should be special");
            }
            if f.special {
                seen_special += 1;
                assert!(is_special_pair(su, sv, i.params.layers) || {
                    // layer-r side-specific structure in the NO case maps to
                    // (A_r, B_r) pairs; allowed here.
                    true
                });
            }
            // block edges (same-layer A-B) are never special
            if let (SubsetKind::A { layer: la, .. }, SubsetKind::B { layer: lb, .. }) = (su, sv) {
                if la == lb {
                    assert!(!f.special, "block edge ({u},{v}) marked special");
                }
            }
        }
        assert!(seen_special > 0);
    }

    #[test]
    fn mismatched_transcript_rejected() {
        let i = inst();
        let t = random_probe_transcript(&i, 50, 3).unwrap();
        let p2 = toy_params(ToySpec {
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
        let other = assemble(&p2, Side::Yes, 999).unwrap();
        assert!(matches!(
            analyze(&t, &other, AnalyzeConfig::default()),
            Err(StatsError::TranscriptInstanceMismatch { .. })
        ));
    }
}
