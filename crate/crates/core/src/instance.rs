//! Instance construction: base level, recursive hierarchy, dummy layer,
//! ground-truth labels, and persistence.
//!
//! A level graph is built bottom-up. The base level wires the two chains
//! (S, A_i, B_i) with blocks, unit matchings and the layer-r structure that
//! differs between the YES and the NO side; higher levels embed complete
//! lower-level graphs between their subset pairs and add their own skeleton
//! gadgets on top. Every vertex carries its full membership path as hidden
//! ground truth.
//!
//! Gadget seeds are derived structurally (from the position in the
//! recursion, never from build order), so building the YES and the NO side
//! from the same master seed shares all common randomness: the two edge
//! sets then differ exactly in the distinguishing structure at the bottom
//! of the nested layer-r chain.

use crate::gadgets::{
    sample_biregular, sample_biregular_excluding, sample_perfect_matching, BipartiteGadget,
    GadgetError,
};
use crate::params::{ParamSet, Side};
use crate::seed::{gadget_tag, rng_from, StreamKind};
use crate::table::{DegreeTable, LevelShape, SubsetKind};
use num::ToPrimitive;
use rand::seq::SliceRandom;
use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parameters do not validate: {0}")]
    Invalid(String),
    #[error("parameter set exceeds buildable limits: {0}")]
    InfeasibleScale(String),
    #[error("gadget sampling failed: {0}")]
    Gadget(#[from] GadgetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unrecognized or unsupported file format (version {found})")]
    FormatVersionMismatch { found: u32 },
    #[error("checksum mismatch or truncated file")]
    ChecksumMismatch,
    #[error("malformed instance file: {0}")]
    Malformed(String),
}

/// One level of the recursive construction, on local vertex ids.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    pub level: u32,
    pub side: Side,
    pub vertex_count: u32,
    /// Bipartition class per vertex.
    pub classes: Vec<u8>,
    /// Membership path per vertex, this level first, encoded subset codes;
    /// fixed stride equal to `level`.
    pub labels: Vec<u32>,
    /// (u, v, origin level).
    pub edges: Vec<(u32, u32, u8)>,
}

impl LevelGraph {
    pub fn label_path(&self, v: u32) -> &[u32] {
        let s = self.level as usize;
        &self.labels[v as usize * s..(v as usize + 1) * s]
    }

    /// Subset of vertex `v` at `level` (<= this graph's level).
    pub fn subset_at(&self, v: u32, level: u32) -> SubsetKind {
        let code = self.label_path(v)[(self.level - level) as usize];
        SubsetKind::decode(code).expect("valid label code")
    }
}

// ---------------------------------------------------------------------------
// construction

/// High bit of the per-edge origin byte marks the thin connective
/// matchings (chain spines, delusive pair matchings, side-specific layer-r
/// structure) as special.
pub const SPECIAL_FLAG: u8 = 0x80;

/// Family codes for structural seed tags.
const FAM_SPINE_SB: u32 = 1;
const FAM_SPINE_AB: u32 = 2;
const FAM_BLOCK: u32 = 3;
const FAM_XI_PM: u32 = 4;
const FAM_XI_FILL: u32 = 5;
const FAM_QUOTA: u32 = 6;
const FAM_CROSS: u32 = 7;
const FAM_D_PM: u32 = 8;
const FAM_D_FILL: u32 = 9;
const FAM_D_BAL: u32 = 10;
const FAM_DISTINGUISH: u32 = 11;
const FAM_EMBED: u32 = 12;

fn slot(kind: u32, a: u64, b: u64, c: u64) -> u64 {
    crate::seed::mix64(
        (kind as u64) ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.rotate_left(21) ^ c.rotate_left(42),
    )
}

struct LevelBuilder<'a> {
    shapes: &'a [LevelShape],
    copies_per_family: u64,
    master: u64,
}

struct Offsets {
    map: BTreeMap<SubsetKind, (u32, u32)>, // kind -> (start, size)
}

impl Offsets {
    fn get(&self, k: SubsetKind) -> (u32, u32) {
        *self.map.get(&k).unwrap_or_else(|| panic!("unknown subset {k}"))
    }
}

fn layout(shape: &LevelShape) -> Result<(Offsets, u32, Vec<u8>, Vec<u32>), InstanceError> {
    let mut map = BTreeMap::new();
    let mut cursor: u64 = 0;
    let mut order: Vec<(SubsetKind, u64)> = Vec::new();
    for j in 1..=2u8 {
        order.push((SubsetKind::S { j }, shape.chain_size));
    }
    for layer in 1..=shape.layers {
        for j in 1..=2u8 {
            let a = SubsetKind::A { layer, j };
            let size = if layer == shape.layers {
                shape.ar_size
            } else {
                shape.chain_size
            };
            order.push((a, size));
            order.push((SubsetKind::B { layer, j }, shape.chain_size));
        }
        for part in 1..=4u8 {
            order.push((SubsetKind::DPart { layer, part }, shape.dpart_size));
        }
    }
    for &(kind, size) in &order {
        map.insert(kind, (cursor as u32, size as u32));
        cursor += size;
        if cursor > u32::MAX as u64 {
            return Err(InstanceError::InfeasibleScale(format!(
                "level {} exceeds u32 vertex ids",
                shape.level
            )));
        }
    }
    let n = cursor as u32;
    let mut classes = vec![0u8; n as usize];
    let mut codes = vec![0u32; n as usize];
    for (kind, &(start, size)) in &map {
        let class = kind.class();
        let code = kind.encode();
        for v in start..start + size {
            classes[v as usize] = class;
            codes[v as usize] = code;
        }
    }
    Ok((Offsets { map }, n, classes, codes))
}

impl<'a> LevelBuilder<'a> {
    fn shape(&self, level: u32) -> &LevelShape {
        &self.shapes[level as usize - 1]
    }

    fn gadget_rng(&self, path: &[(u32, u64)], s: u64) -> rand_chacha::ChaCha8Rng {
        rng_from(self.master, StreamKind::Gadget, gadget_tag(path, s))
    }

    fn build(
        &self,
        level: u32,
        side: Side,
        path: &mut Vec<(u32, u64)>,
    ) -> Result<LevelGraph, InstanceError> {
        if level == 1 {
            self.build_base(side, path)
        } else {
            self.build_upper(level, side, path)
        }
    }

    fn push_gadget(
        edges: &mut Vec<(u32, u32, u8)>,
        g: &BipartiteGadget,
        left: (u32, u32),
        right: (u32, u32),
        origin: u8,
    ) {
        debug_assert_eq!(g.left_size as u32, left.1);
        debug_assert_eq!(g.right_size as u32, right.1);
        for &(u, v) in &g.edges {
            edges.push((left.0 + u, right.0 + v, origin));
        }
    }

    fn build_base(
        &self,
        side: Side,
        path: &mut Vec<(u32, u64)>,
    ) -> Result<LevelGraph, InstanceError> {
        let shape = self.shape(1);
        let r = shape.layers;
        let (off, n, classes, codes) = layout(shape)?;
        let mut edges: Vec<(u32, u32, u8)> = Vec::new();
        let s = |k: u32, a: u64, b: u64, c: u64| slot(k, a, b, c);

        // Unit matchings along the chains.
        for j in 1..=2u8 {
            let g = sample_perfect_matching(
                shape.chain_size,
                &mut self.gadget_rng(path, s(FAM_SPINE_SB, j as u64, 0, 0)),
            );
            Self::push_gadget(
                &mut edges,
                &g,
                off.get(SubsetKind::S { j }),
                off.get(SubsetKind::B { layer: 1, j }),
                1 | SPECIAL_FLAG,
            );
            for i in 1..r {
                let g = sample_perfect_matching(
                    shape.chain_size,
                    &mut self.gadget_rng(path, s(FAM_SPINE_AB, i, j as u64, 0)),
                );
                Self::push_gadget(
                    &mut edges,
                    &g,
                    off.get(SubsetKind::A { layer: i, j }),
                    off.get(SubsetKind::B { layer: i + 1, j }),
                    1 | SPECIAL_FLAG,
                );
            }
        }

        // Blocks.
        for j in 1..=2u8 {
            for i in 1..=r {
                let (asz, bdeg) = if i == r {
                    (shape.ar_size, shape.arbr_b_degree)
                } else {
                    (shape.chain_size, shape.block)
                };
                let g = sample_biregular(
                    asz,
                    shape.chain_size,
                    shape.block,
                    bdeg,
                    &mut self.gadget_rng(path, s(FAM_BLOCK, i, j as u64, 0)),
                )?;
                Self::push_gadget(
                    &mut edges,
                    &g,
                    off.get(SubsetKind::A { layer: i, j }),
                    off.get(SubsetKind::B { layer: i, j }),
                    1,
                );
            }
        }

        // Layer-r cross structure between the two B_r subsets: an explicit
        // matching plus a filler keeping the xi-degree. Both are common to
        // the two sides; the NO side drops part of the matching below.
        let br1 = off.get(SubsetKind::B { layer: r, j: 1 });
        let br2 = off.get(SubsetKind::B { layer: r, j: 2 });
        let xi_pm = sample_perfect_matching(
            shape.chain_size,
            &mut self.gadget_rng(path, s(FAM_XI_PM, 0, 0, 0)),
        );
        if shape.xi_degree > 1 {
            let forbidden: HashSet<(u32, u32)> = xi_pm.edges.iter().copied().collect();
            let g = sample_biregular_excluding(
                shape.chain_size,
                shape.chain_size,
                shape.xi_degree - 1,
                shape.xi_degree - 1,
                &forbidden,
                &mut self.gadget_rng(path, s(FAM_XI_FILL, 0, 0, 0)),
            )?;
            Self::push_gadget(&mut edges, &g, br1, br2, 1);
        }

        // Delusive quota gadgets: class-0 chains send to class-1 parts and
        // vice versa, always landing on a cover part.
        for k in 1..=r {
            for i in 1..=k {
                let q = shape.quota(k, i);
                if q == 0 {
                    continue;
                }
                let routes = [
                    (SubsetKind::A { layer: k, j: 2 }, 1u8),
                    (SubsetKind::A { layer: k, j: 1 }, 3),
                    (SubsetKind::B { layer: k, j: 1 }, 4),
                    (SubsetKind::B { layer: k, j: 2 }, 2),
                ];
                for (snd, part) in routes {
                    let (sz, mult) = match snd {
                        SubsetKind::A { layer, .. } if layer == r => {
                            (shape.ar_size, shape.ratio_ar)
                        }
                        _ => (shape.chain_size, shape.ratio_chain),
                    };
                    let g = sample_biregular(
                        sz,
                        shape.dpart_size,
                        q,
                        q * mult,
                        &mut self.gadget_rng(
                            path,
                            s(FAM_QUOTA, k * 8 + part as u64, i, snd.encode() as u64),
                        ),
                    )?;
                    Self::push_gadget(
                        &mut edges,
                        &g,
                        off.get(snd),
                        off.get(SubsetKind::DPart { layer: i, part }),
                        1,
                    );
                }
            }
        }

        // Cross-layer delusive gadgets (free part <-> cover part).
        self.cross_layer_gadgets(shape, &off, path, &mut edges, 1)?;

        // Delusive internal wiring.
        self.delusive_internal(shape, &off, path, &mut edges, 1, None)?;

        // Distinguishing structure.
        let ar1 = off.get(SubsetKind::A { layer: r, j: 1 });
        let ar2 = off.get(SubsetKind::A { layer: r, j: 2 });
        match side {
            Side::Yes => {
                // Full cross matching plus the layer-r pairing.
                Self::push_gadget(&mut edges, &xi_pm, br1, br2, 1);
                let g = sample_perfect_matching(
                    shape.ar_size,
                    &mut self.gadget_rng(path, s(FAM_DISTINGUISH, 1, 0, 0)),
                );
                Self::push_gadget(&mut edges, &g, ar1, ar2, 1 | SPECIAL_FLAG);
            }
            Side::No => {
                // Remove ar_size edges of the cross matching; the freed
                // endpoints absorb the layer-r A subsets instead.
                let mut pairs = xi_pm.edges.clone();
                let mut rng = self.gadget_rng(path, s(FAM_DISTINGUISH, 2, 0, 0));
                pairs.shuffle(&mut rng);
                let removed: Vec<(u32, u32)> = pairs[..shape.ar_size as usize].to_vec();
                for &(u, v) in &pairs[shape.ar_size as usize..] {
                    edges.push((br1.0 + u, br2.0 + v, 1));
                }
                let mut b1bar: Vec<u32> = removed.iter().map(|&(u, _)| u).collect();
                let mut b2bar: Vec<u32> = removed.iter().map(|&(_, v)| v).collect();
                b1bar.sort_unstable();
                b2bar.sort_unstable();
                for (j, bbar, ar_off) in [(1u64, &b1bar, ar1), (2, &b2bar, ar2)] {
                    let g = sample_perfect_matching(
                        shape.ar_size,
                        &mut self.gadget_rng(path, s(FAM_DISTINGUISH, 3, j, 0)),
                    );
                    for &(a, idx) in &g.edges {
                        let b = bbar[idx as usize];
                        let bro = if j == 1 { br1 } else { br2 };
                        edges.push((ar_off.0 + a, bro.0 + b, 1 | SPECIAL_FLAG));
                    }
                }
            }
        }

        Ok(LevelGraph {
            level: 1,
            side,
            vertex_count: n,
            classes,
            labels: codes,
            edges,
        })
    }

    fn cross_layer_gadgets(
        &self,
        shape: &LevelShape,
        off: &Offsets,
        path: &[(u32, u64)],
        edges: &mut Vec<(u32, u32, u8)>,
        origin: u8,
    ) -> Result<(), InstanceError> {
        if shape.cross == 0 {
            return Ok(());
        }
        let r = shape.layers;
        for i in 1..=r {
            for k in (i + 1)..=r {
                // free part of one layer to cover part of the other
                let pairs = [
                    (SubsetKind::DPart { layer: i, part: 1 }, SubsetKind::DPart { layer: k, part: 2 }),
                    (SubsetKind::DPart { layer: i, part: 2 }, SubsetKind::DPart { layer: k, part: 1 }),
                    (SubsetKind::DPart { layer: i, part: 3 }, SubsetKind::DPart { layer: k, part: 4 }),
                    (SubsetKind::DPart { layer: i, part: 4 }, SubsetKind::DPart { layer: k, part: 3 }),
                ];
                for (t, (a, b)) in pairs.into_iter().enumerate() {
                    let g = sample_biregular(
                        shape.dpart_size,
                        shape.dpart_size,
                        shape.cross,
                        shape.cross,
                        &mut self.gadget_rng(path, slot(FAM_CROSS, i, k, t as u64)),
                    )?;
                    Self::push_gadget(edges, &g, off.get(a), off.get(b), origin);
                }
            }
        }
        Ok(())
    }

    /// Internal delusive wiring: pair matchings at the base (the embedded
    /// copies replace them above), fillers toward the degree target, and
    /// the part1-part3 balance gadget.
    fn delusive_internal(
        &self,
        shape: &LevelShape,
        off: &Offsets,
        path: &[(u32, u64)],
        edges: &mut Vec<(u32, u32, u8)>,
        origin: u8,
        copy_exclusions: Option<&BTreeMap<(u64, u8), HashSet<(u32, u32)>>>,
    ) -> Result<(), InstanceError> {
        for i in 1..=shape.layers {
            let f = shape.filler[i as usize - 1];
            let b = shape.balance[i as usize - 1];
            for (pa, pb, t) in [(1u8, 2u8, 0u64), (3, 4, 1)] {
                let mut forbidden: HashSet<(u32, u32)> = HashSet::new();
                if shape.level == 1 {
                    let pm = sample_perfect_matching(
                        shape.dpart_size,
                        &mut self.gadget_rng(path, slot(FAM_D_PM, i, t, 0)),
                    );
                    Self::push_gadget(
                        edges,
                        &pm,
                        off.get(SubsetKind::DPart { layer: i, part: pa }),
                        off.get(SubsetKind::DPart { layer: i, part: pb }),
                        origin | SPECIAL_FLAG,
                    );
                    forbidden.extend(pm.edges.iter().copied());
                } else if let Some(map) = copy_exclusions {
                    if let Some(set) = map.get(&(i, pa)) {
                        forbidden.extend(set.iter().copied());
                    }
                }
                if f > 0 {
                    let g = sample_biregular_excluding(
                        shape.dpart_size,
                        shape.dpart_size,
                        f,
                        f,
                        &forbidden,
                        &mut self.gadget_rng(path, slot(FAM_D_FILL, i, t, 0)),
                    )?;
                    Self::push_gadget(
                        edges,
                        &g,
                        off.get(SubsetKind::DPart { layer: i, part: pa }),
                        off.get(SubsetKind::DPart { layer: i, part: pb }),
                        origin,
                    );
                }
            }
            if b > 0 {
                let g = sample_biregular(
                    shape.dpart_size,
                    shape.dpart_size,
                    b,
                    b,
                    &mut self.gadget_rng(path, slot(FAM_D_BAL, i, 0, 0)),
                )?;
                Self::push_gadget(
                    edges,
                    &g,
                    off.get(SubsetKind::DPart { layer: i, part: 1 }),
                    off.get(SubsetKind::DPart { layer: i, part: 3 }),
                    origin,
                );
            }
        }
        Ok(())
    }

    fn build_upper(
        &self,
        level: u32,
        side: Side,
        path: &mut Vec<(u32, u64)>,
    ) -> Result<LevelGraph, InstanceError> {
        let shape = self.shape(level);
        let r = shape.layers;
        let (off, n, classes, codes) = layout(shape)?;
        let mut edges: Vec<(u32, u32, u8)> = Vec::new();
        let stride = level as usize;
        let mut labels = vec![0u32; n as usize * stride];
        for v in 0..n as usize {
            labels[v * stride] = codes[v];
        }
        let child_half = self.shape(level - 1).total_vertices() / 2;

        // Embedded copy families: (host0, host1, copy count, child side).
        let mut families: Vec<(SubsetKind, SubsetKind, u64, Side, u32)> = Vec::new();
        for j in 1..=2u8 {
            families.push((
                SubsetKind::S { j },
                SubsetKind::B { layer: 1, j },
                self.copies_per_family,
                Side::Yes,
                (j as u32) << 8,
            ));
            for i in 1..r {
                families.push((
                    SubsetKind::A { layer: i, j },
                    SubsetKind::B { layer: i + 1, j },
                    self.copies_per_family,
                    Side::Yes,
                    ((j as u32) << 8) | (i as u32 + 2) << 10,
                ));
            }
        }
        families.push((
            SubsetKind::A { layer: r, j: 1 },
            SubsetKind::A { layer: r, j: 2 },
            self.copies_per_family,
            side,
            1 << 22,
        ));
        for i in 1..=r {
            families.push((
                SubsetKind::DPart { layer: i, part: 1 },
                SubsetKind::DPart { layer: i, part: 2 },
                1,
                Side::Yes,
                (2 << 22) | (i as u32),
            ));
            families.push((
                SubsetKind::DPart { layer: i, part: 3 },
                SubsetKind::DPart { layer: i, part: 4 },
                1,
                Side::Yes,
                (3 << 22) | (i as u32),
            ));
        }

        // Copy edges inside the part1-part2 pairs must be excluded from the
        // filler gadgets there.
        let mut copy_exclusions: BTreeMap<(u64, u8), HashSet<(u32, u32)>> = BTreeMap::new();

        for (host0, host1, count, child_side, fam_code) in families {
            let (o0, sz0) = off.get(host0);
            let (o1, sz1) = off.get(host1);
            debug_assert_eq!(sz0 as u64, count * child_half);
            debug_assert_eq!(sz1 as u64, count * child_half);
            for c in 0..count {
                path.push((FAM_EMBED | (fam_code << 4), c));
                let child = self.build(level - 1, child_side, path)?;
                path.pop();
                // Split child vertices by class, ascending local id.
                let mut map = vec![0u32; child.vertex_count as usize];
                let mut i0 = 0u32;
                let mut i1 = 0u32;
                for v in 0..child.vertex_count {
                    if child.classes[v as usize] == 0 {
                        map[v as usize] = o0 + (c * child_half) as u32 + i0;
                        i0 += 1;
                    } else {
                        map[v as usize] = o1 + (c * child_half) as u32 + i1;
                        i1 += 1;
                    }
                }
                debug_assert_eq!(i0 as u64, child_half);
                debug_assert_eq!(i1 as u64, child_half);
                let is_dpair = matches!(host0, SubsetKind::DPart { .. });
                let dpair_key = match host0 {
                    SubsetKind::DPart { layer, part } => (layer, part),
                    _ => (0, 0),
                };
                for &(u, v, lvl) in &child.edges {
                    let (gu, gv) = (map[u as usize], map[v as usize]);
                    edges.push((gu, gv, lvl));
                    if is_dpair {
                        // record in subset-local coordinates of (part a, part b)
                        let (lu, lv) = if child.classes[u as usize] == 0 {
                            (gu - o0, gv - o1)
                        } else {
                            (gv - o0, gu - o1)
                        };
                        copy_exclusions
                            .entry(dpair_key)
                            .or_default()
                            .insert((lu, lv));
                    }
                }
                // Labels: host entry then the child's path.
                let cs = (level - 1) as usize;
                for v in 0..child.vertex_count as usize {
                    let g = map[v] as usize;
                    labels[g * stride + 1..(g + 1) * stride]
                        .copy_from_slice(&child.labels[v * cs..(v + 1) * cs]);
                }
            }
        }

        // Skeleton gadgets of this level.
        for j in 1..=2u8 {
            for i in 1..=r {
                let g = sample_biregular(
                    shape.chain_size,
                    shape.chain_size,
                    shape.block,
                    shape.block,
                    &mut self.gadget_rng(path, slot(FAM_BLOCK, i, j as u64, 0)),
                )?;
                Self::push_gadget(
                    &mut edges,
                    &g,
                    off.get(SubsetKind::A { layer: i, j }),
                    off.get(SubsetKind::B { layer: i, j }),
                    level as u8,
                );
            }
        }
        for k in 1..=r {
            for i in 1..=k {
                let q = shape.quota(k, i);
                if q == 0 {
                    continue;
                }
                let routes = [
                    (SubsetKind::A { layer: k, j: 2 }, 1u8),
                    (SubsetKind::A { layer: k, j: 1 }, 3),
                    (SubsetKind::B { layer: k, j: 1 }, 4),
                    (SubsetKind::B { layer: k, j: 2 }, 2),
                ];
                for (snd, part) in routes {
                    let g = sample_biregular(
                        shape.chain_size,
                        shape.dpart_size,
                        q,
                        q * shape.ratio_chain,
                        &mut self.gadget_rng(
                            path,
                            slot(FAM_QUOTA, k * 8 + part as u64, i, snd.encode() as u64),
                        ),
                    )?;
                    Self::push_gadget(
                        &mut edges,
                        &g,
                        off.get(snd),
                        off.get(SubsetKind::DPart { layer: i, part }),
                        level as u8,
                    );
                }
            }
        }
        self.cross_layer_gadgets(shape, &off, path, &mut edges, level as u8)?;
        self.delusive_internal(shape, &off, path, &mut edges, level as u8, Some(&copy_exclusions))?;

        Ok(LevelGraph {
            level,
            side,
            vertex_count: n,
            classes,
            labels,
            edges,
        })
    }
}

impl LevelShape {
    pub fn total_vertices(&self) -> u64 {
        2 * self.chain_size
            + (self.layers - 1) * 2 * self.chain_size
            + 2 * self.ar_size
            + self.layers * 2 * self.chain_size
            + self.layers * 4 * self.dpart_size
    }
}

/// Build one level graph (exposed for tests and gap checks on bare levels).
pub fn build_level_graph(
    p: &ParamSet,
    level: u32,
    side: Side,
    master_seed: u64,
) -> Result<LevelGraph, InstanceError> {
    let rep = crate::params::validate(p);
    if !rep.ok() {
        return Err(InstanceError::Invalid(format!("{rep}")));
    }
    let table = DegreeTable::build(p).map_err(InstanceError::Invalid)?;
    let shapes: Vec<LevelShape> = table
        .levels
        .iter()
        .map(|lt| lt.to_shape())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| InstanceError::InfeasibleScale("sizes exceed u64".into()))?;
    let copies = (crate::params::br_u64(4) / &p.zeta)
        .to_integer()
        .to_u64()
        .ok_or_else(|| InstanceError::InfeasibleScale("copy count exceeds u64".into()))?;
    let b = LevelBuilder {
        shapes: &shapes,
        copies_per_family: copies,
        master: master_seed,
    };
    let mut path = Vec::new();
    let g = b.build(level, side, &mut path)?;
    debug_assert_eq!(
        g.vertex_count as u64,
        p.level_counts[level as usize - 1].to_u64().unwrap_or(0)
    );
    Ok(g)
}

// ---------------------------------------------------------------------------
// assembled instance

/// A complete built instance: core adjacency in CSR form, ground-truth
/// labels, and the (arithmetic) dummy layer.
///
/// Vertex layout: core class 0 in `[0, h)`, core class 1 in `[h, 2h)`,
/// dummy class 0 in `[2h, 2h+p)`, dummy class 1 in `[2h+p, 2h+2p)`.
/// Each dummy is adjacent to every core vertex of the opposite class and to
/// its dummy partner (same index, other class); those edges are computed on
/// demand rather than stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub params: ParamSet,
    pub side: Side,
    pub master_seed: u64,
    pub core_half: u32,
    pub dummy_half: u32,
    pub label_stride: u32,
    pub labels: Vec<u32>,
    pub csr_offsets: Vec<u64>,
    pub csr_neighbors: Vec<u32>,
    pub csr_levels: Vec<u8>,
}

impl Instance {
    pub fn n_core(&self) -> u32 {
        2 * self.core_half
    }

    pub fn n_total(&self) -> u32 {
        2 * self.core_half + 2 * self.dummy_half
    }

    pub fn is_dummy(&self, v: u32) -> bool {
        v >= self.n_core() && v < self.n_total()
    }

    /// Bipartition class of any vertex.
    pub fn class_of(&self, v: u32) -> u8 {
        if v < self.core_half {
            0
        } else if v < self.n_core() {
            1
        } else if v < self.n_core() + self.dummy_half {
            0
        } else {
            1
        }
    }

    pub fn dummy_base(&self, class: u8) -> u32 {
        self.n_core() + class as u32 * self.dummy_half
    }

    pub fn dummy_partner(&self, x: u32) -> u32 {
        debug_assert!(self.is_dummy(x));
        if x < self.dummy_base(1) {
            x + self.dummy_half
        } else {
            x - self.dummy_half
        }
    }

    pub fn csr_range(&self, v: u32) -> std::ops::Range<usize> {
        self.csr_offsets[v as usize] as usize..self.csr_offsets[v as usize + 1] as usize
    }

    pub fn core_degree(&self, v: u32) -> u64 {
        if self.is_dummy(v) {
            0
        } else {
            (self.csr_offsets[v as usize + 1] - self.csr_offsets[v as usize]) as u64
        }
    }

    /// Full degree in the instance, dummy edges included.
    pub fn degree(&self, v: u32) -> u64 {
        if self.is_dummy(v) {
            self.core_half as u64 + 1
        } else {
            self.core_degree(v) + self.dummy_half as u64
        }
    }

    /// Neighbor at `rank` (0-based) in the canonical order: sorted core
    /// neighbors first, then the opposite-class dummy range (for core
    /// vertices); opposite core ids then the partner (for dummies).
    pub fn neighbor_at(&self, v: u32, rank: u64) -> Option<u32> {
        if self.is_dummy(v) {
            let h = self.core_half as u64;
            let opp = 1 - self.class_of(v);
            if rank < h {
                Some(opp as u32 * self.core_half + rank as u32)
            } else if rank == h {
                Some(self.dummy_partner(v))
            } else {
                None
            }
        } else {
            let cd = self.core_degree(v);
            if rank < cd {
                Some(self.csr_neighbors[self.csr_offsets[v as usize] as usize + rank as usize])
            } else if rank < cd + self.dummy_half as u64 {
                let opp = 1 - self.class_of(v);
                Some(self.dummy_base(opp) + (rank - cd) as u32)
            } else {
                None
            }
        }
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        if u == v || u >= self.n_total() || v >= self.n_total() {
            return false;
        }
        match (self.is_dummy(u), self.is_dummy(v)) {
            (false, false) => {
                let r = self.csr_range(u);
                self.csr_neighbors[r].binary_search(&v).is_ok()
            }
            (true, true) => self.dummy_partner(u) == v,
            (true, false) => self.class_of(u) != self.class_of(v),
            (false, true) => self.class_of(u) != self.class_of(v),
        }
    }

    /// Origin level of a core edge (0 for dummy edges, None if absent).
    pub fn edge_level(&self, u: u32, v: u32) -> Option<u8> {
        if !self.has_edge(u, v) {
            return None;
        }
        if self.is_dummy(u) || self.is_dummy(v) {
            return Some(0);
        }
        let r = self.csr_range(u);
        let base = r.start;
        self.csr_neighbors[r]
            .binary_search(&v)
            .ok()
            .map(|i| self.csr_levels[base + i] & !SPECIAL_FLAG)
    }

    pub fn label_path(&self, v: u32) -> &[u32] {
        debug_assert!(!self.is_dummy(v));
        let s = self.label_stride as usize;
        &self.labels[v as usize * s..(v as usize + 1) * s]
    }

    /// Ground-truth subset of core vertex `v` at `level`.
    pub fn subset_at(&self, v: u32, level: u32) -> SubsetKind {
        let code = self.label_path(v)[(self.label_stride - level) as usize];
        SubsetKind::decode(code).expect("valid label code")
    }

    /// Is `v` a top-level S vertex (the only label the oracle discloses)?
    pub fn top_s_label(&self, v: u32) -> Option<u8> {
        if self.is_dummy(v) {
            return None;
        }
        match self.subset_at(v, self.label_stride) {
            SubsetKind::S { j } => Some(j),
            _ => None,
        }
    }

    pub fn core_edge_count(&self) -> u64 {
        self.csr_neighbors.len() as u64 / 2
    }

    /// Human-readable manifest mirroring the binary header.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.params.to_kv());
        s.push_str(&format!("side = {}\n", self.side));
        s.push_str(&format!("master_seed = {}\n", self.master_seed));
        s.push_str(&format!("core_half = {}\n", self.core_half));
        s.push_str(&format!("dummy_half = {}\n", self.dummy_half));
        s.push_str(&format!("core_edges = {}\n", self.core_edge_count()));
        s.push_str(&format!("format_version = {FORMAT_VERSION}\n"));
        s
    }
}

/// Build a complete instance: top level graph plus the dummy layer.
pub fn assemble(p: &ParamSet, side: Side, master_seed: u64) -> Result<Instance, InstanceError> {
    let n_total = p
        .total_vertices
        .to_u64()
        .filter(|&n| n <= u32::MAX as u64)
        .ok_or_else(|| {
            InstanceError::InfeasibleScale(format!(
                "total vertex count {} exceeds u32 ids",
                p.total_vertices
            ))
        })?;
    let top = build_level_graph(p, p.levels, side, master_seed)?;
    let n_core = top.vertex_count;
    let dummies = p.dummy_count.to_u64().unwrap();
    debug_assert_eq!(n_core as u64 + dummies, n_total);

    // Re-lay vertices so that class 0 occupies [0, h).
    let mut perm = vec![0u32; n_core as usize];
    let mut next0 = 0u32;
    let h = (0..n_core).filter(|&v| top.classes[v as usize] == 0).count() as u32;
    if h * 2 != n_core {
        return Err(InstanceError::Invalid(format!(
            "bipartition classes unbalanced: {h} vs {}",
            n_core - h
        )));
    }
    let mut next1 = h;
    for v in 0..n_core {
        if top.classes[v as usize] == 0 {
            perm[v as usize] = next0;
            next0 += 1;
        } else {
            perm[v as usize] = next1;
            next1 += 1;
        }
    }

    let stride = top.level as usize;
    let mut labels = vec![0u32; n_core as usize * stride];
    for v in 0..n_core as usize {
        let g = perm[v] as usize;
        labels[g * stride..(g + 1) * stride]
            .copy_from_slice(&top.labels[v * stride..(v + 1) * stride]);
    }

    // CSR over remapped ids.
    let m = top.edges.len();
    let mut deg = vec![0u32; n_core as usize];
    for &(u, v, _) in &top.edges {
        deg[perm[u as usize] as usize] += 1;
        deg[perm[v as usize] as usize] += 1;
    }
    let mut offsets = vec![0u64; n_core as usize + 1];
    for v in 0..n_core as usize {
        offsets[v + 1] = offsets[v] + deg[v] as u64;
    }
    let mut neighbors = vec![0u32; 2 * m];
    let mut levels = vec![0u8; 2 * m];
    let mut cursor: Vec<u64> = offsets[..n_core as usize].to_vec();
    for &(u, v, l) in &top.edges {
        let (gu, gv) = (perm[u as usize], perm[v as usize]);
        neighbors[cursor[gu as usize] as usize] = gv;
        levels[cursor[gu as usize] as usize] = l;
        cursor[gu as usize] += 1;
        neighbors[cursor[gv as usize] as usize] = gu;
        levels[cursor[gv as usize] as usize] = l;
        cursor[gv as usize] += 1;
    }
    // Sort each adjacency row (levels ride along).
    for v in 0..n_core as usize {
        let r = offsets[v] as usize..offsets[v + 1] as usize;
        let mut row: Vec<(u32, u8)> = neighbors[r.clone()]
            .iter()
            .copied()
            .zip(levels[r.clone()].iter().copied())
            .collect();
        row.sort_unstable();
        for (k, (nb, lv)) in row.into_iter().enumerate() {
            neighbors[r.start + k] = nb;
            levels[r.start + k] = lv;
        }
    }

    Ok(Instance {
        params: p.clone(),
        side,
        master_seed,
        core_half: h,
        dummy_half: (dummies / 2) as u32,
        label_stride: top.level,
        labels,
        csr_offsets: offsets,
        csr_neighbors: neighbors,
        csr_levels: levels,
    })
}

// ---------------------------------------------------------------------------
// persistence

pub const FORMAT_MAGIC: &[u8; 4] = b"MBND";
pub const FORMAT_VERSION: u32 = 1;

struct Crc64 {
    table: [u64; 256],
}

impl Crc64 {
    // ECMA-182 polynomial.
    fn new() -> Self {
        let mut table = [0u64; 256];
        for (i, entry) in table.iter_mut().enumerate() {
            let mut c = i as u64;
            for _ in 0..8 {
                c = if c & 1 == 1 {
                    0xC96C_5795_D787_0F42 ^ (c >> 1)
                } else {
                    c >> 1
                };
            }
            *entry = c;
        }
        Crc64 { table }
    }

    fn compute(&self, data: &[u8]) -> u64 {
        let mut crc = !0u64;
        for &b in data {
            crc = self.table[((crc ^ b as u64) & 0xff) as usize] ^ (crc >> 8);
        }
        !crc
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

impl Instance {
    /// Serialize to the binary instance format and write the text manifest
    /// sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), InstanceError> {
        let mut buf: Vec<u8> = Vec::with_capacity(
            64 + self.labels.len() * 4 + self.csr_offsets.len() * 8 + self.csr_neighbors.len() * 5,
        );
        buf.extend_from_slice(FORMAT_MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        let kv = self.params.to_kv();
        put_u32(&mut buf, kv.len() as u32);
        buf.extend_from_slice(kv.as_bytes());
        put_u64(&mut buf, self.master_seed);
        buf.push(match self.side {
            Side::Yes => 0,
            Side::No => 1,
        });
        put_u32(&mut buf, self.core_half);
        put_u32(&mut buf, self.dummy_half);
        put_u32(&mut buf, self.label_stride);
        put_u64(&mut buf, self.labels.len() as u64);
        for &x in &self.labels {
            put_u32(&mut buf, x);
        }
        put_u64(&mut buf, self.csr_offsets.len() as u64);
        for &x in &self.csr_offsets {
            put_u64(&mut buf, x);
        }
        put_u64(&mut buf, self.csr_neighbors.len() as u64);
        for &x in &self.csr_neighbors {
            put_u32(&mut buf, x);
        }
        put_u64(&mut buf, self.csr_levels.len() as u64);
        buf.extend_from_slice(&self.csr_levels);
        let crc = Crc64::new().compute(&buf);
        put_u64(&mut buf, crc);

        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&buf)?;
        f.flush()?;
        let manifest_path = path.with_extension(format!(
            "{}manifest.txt",
            path.extension()
                .map(|e| format!("{}.", e.to_string_lossy()))
                .unwrap_or_default()
        ));
        std::fs::write(manifest_path, self.manifest())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Instance, InstanceError> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        if data.len() < 16 || &data[..4] != FORMAT_MAGIC {
            return Err(InstanceError::FormatVersionMismatch { found: 0 });
        }
        let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(InstanceError::FormatVersionMismatch { found: version });
        }
        let body = &data[..data.len() - 8];
        let stored = u64::from_le_bytes(data[data.len() - 8..].try_into().unwrap());
        if Crc64::new().compute(body) != stored {
            return Err(InstanceError::ChecksumMismatch);
        }
        let mut pos = 8usize;
        let mut take = |n: usize| -> Result<&[u8], InstanceError> {
            if pos + n > body.len() {
                return Err(InstanceError::Malformed("unexpected end of file".into()));
            }
            let s = &body[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let kv_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let kv = String::from_utf8(take(kv_len)?.to_vec())
            .map_err(|_| InstanceError::Malformed("params block not utf-8".into()))?;
        let params = ParamSet::from_kv(&kv, &[])
            .map_err(|e| InstanceError::Malformed(format!("params block: {e}")))?;
        let master_seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let side = match take(1)?[0] {
            0 => Side::Yes,
            1 => Side::No,
            other => return Err(InstanceError::Malformed(format!("bad side byte {other}"))),
        };
        let core_half = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let dummy_half = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let label_stride = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let n_labels = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(n_labels * 4)?;
        let labels: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_off = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(n_off * 8)?;
        let csr_offsets: Vec<u64> = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_nb = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(n_nb * 4)?;
        let csr_neighbors: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_lv = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let csr_levels = take(n_lv)?.to_vec();
        if pos != body.len() {
            return Err(InstanceError::Malformed("trailing bytes".into()));
        }
        let inst = Instance {
            params,
            side,
            master_seed,
            core_half,
            dummy_half,
            label_stride,
            labels,
            csr_offsets,
            csr_neighbors,
            csr_levels,
        };
        if inst.csr_offsets.len() != inst.n_core() as usize + 1
            || inst.labels.len() != inst.n_core() as usize * inst.label_stride as usize
            || inst.csr_neighbors.len() != inst.csr_levels.len()
        {
            return Err(InstanceError::Malformed("inconsistent section sizes".into()));
        }
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{br, toy_params, ToySpec};

    pub(crate) fn preset_l1() -> ParamSet {
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

    pub(crate) fn preset_l2() -> ParamSet {
        toy_params(ToySpec {
            levels: 2,
            layers: 2,
            block_degrees: vec![4, 16],
            base_width: 48,
            zeta: br(1, 4),
            xi: br(1, 4),
            gamma: br(1, 1000),
            tau: br(24, 40320),
        })
        .unwrap()
    }

    fn check_bipartite(g: &LevelGraph) {
        for &(u, v, _) in &g.edges {
            assert_ne!(
                g.classes[u as usize], g.classes[v as usize],
                "edge ({u},{v}) inside one class"
            );
        }
    }

    #[test]
    fn base_level_structure() {
        let p = preset_l1();
        let g = build_level_graph(&p, 1, Side::Yes, 7).unwrap();
        assert_eq!(g.vertex_count, 996);
        check_bipartite(&g);
        // every S vertex has degree exactly 1
        let mut deg = vec![0u64; g.vertex_count as usize];
        for &(u, v, _) in &g.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        for v in 0..g.vertex_count {
            if matches!(g.subset_at(v, 1), SubsetKind::S { .. }) {
                assert_eq!(deg[v as usize], 1, "S vertex {v}");
            }
        }
    }

    #[test]
    fn base_matching_identities() {
        let p = preset_l1();
        for seed in [1u64, 2, 3] {
            let gy = build_level_graph(&p, 1, Side::Yes, seed).unwrap();
            let cy = crate::exact::max_matching_level(&gy).unwrap();
            assert_eq!(cy.size * 2, gy.vertex_count as u64, "yes seed {seed}");
            let gn = build_level_graph(&p, 1, Side::No, seed).unwrap();
            let cn = crate::exact::max_matching_level(&gn).unwrap();
            // mu(no) <= n_1/2 - (1 - xi) N_1 = 498 - 54
            assert!(cn.size <= 498 - 54, "no seed {seed}: {}", cn.size);
        }
    }

    #[test]
    fn level2_counts_and_bipartite() {
        let p = preset_l2();
        let g = build_level_graph(&p, 2, Side::Yes, 5).unwrap();
        assert_eq!(g.vertex_count, 40320);
        check_bipartite(&g);
    }

    #[test]
    fn assemble_and_degrees() {
        let p = preset_l1();
        let inst = assemble(&p, Side::Yes, 11).unwrap();
        assert_eq!(inst.n_total(), 1032);
        assert_eq!(inst.dummy_half, 18);
        // every core vertex sees exactly dummy_half dummies
        for v in [0u32, 5, 100, 995] {
            assert_eq!(inst.degree(v), inst.core_degree(v) + 18);
        }
        // degree table contract, vertex by vertex
        let table = DegreeTable::build(&p).unwrap();
        for v in 0..inst.n_core() {
            let path: Vec<(u32, SubsetKind)> = (1..=inst.label_stride)
                .rev()
                .map(|l| (l, inst.subset_at(v, l)))
                .collect();
            let expect = table.path_degree(&path).to_u64().unwrap();
            assert_eq!(inst.core_degree(v), expect, "vertex {v} path {path:?}");
        }
    }

    #[test]
    fn yes_no_symmetric_difference_confined() {
        let p = preset_l1();
        let y = assemble(&p, Side::Yes, 21).unwrap();
        let n = assemble(&p, Side::No, 21).unwrap();
        let collect = |i: &Instance| -> std::collections::HashSet<(u32, u32)> {
            let mut s = std::collections::HashSet::new();
            for u in 0..i.n_core() {
                for k in i.csr_range(u) {
                    let v = i.csr_neighbors[k];
                    if u < v {
                        s.insert((u, v));
                    }
                }
            }
            s
        };
        let ey = collect(&y);
        let en = collect(&n);
        let r = p.layers;
        for e in ey.symmetric_difference(&en) {
            for &v in [e.0, e.1].iter() {
                let k = y.subset_at(v, 1);
                assert!(
                    matches!(k, SubsetKind::A { layer, .. } | SubsetKind::B { layer, .. } if layer == r),
                    "sym-diff edge touches {k}"
                );
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let p = preset_l1();
        let inst = assemble(&p, Side::No, 3).unwrap();
        let dir = std::env::temp_dir().join("mbnd-test-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.mbnd");
        inst.save(&path).unwrap();
        let back = Instance::load(&path).unwrap();
        assert_eq!(inst, back);
        // truncation is detected
        let data = std::fs::read(&path).unwrap();
        let cut = &data[..data.len() - 3];
        let path2 = dir.join("cut.mbnd");
        std::fs::write(&path2, cut).unwrap();
        assert!(matches!(
            Instance::load(&path2),
            Err(InstanceError::ChecksumMismatch) | Err(InstanceError::Malformed(_))
        ));
    }

    #[test]
    fn deterministic_rebuild() {
        let p = preset_l1();
        let a = assemble(&p, Side::Yes, 99).unwrap();
        let b = assemble(&p, Side::Yes, 99).unwrap();
        assert_eq!(a, b);
        let c = assemble(&p, Side::Yes, 100).unwrap();
        assert_ne!(a.csr_neighbors, c.csr_neighbors);
    }
}
