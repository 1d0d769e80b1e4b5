use super::{SegmentationHierarchy, SupervoxelLabeling, MAX_LEVELS};
use crate::error::{Error, Result};
use crate::tensor::{LabelGrid, Volume};
use std::collections::HashMap;

/// One agglomeration event: regions `a` and `b` (current representatives,
/// `a < b`) merge at `height`, the ultrametric boundary strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent {
    pub a: u32,
    pub b: u32,
    pub height: f32,
}

/// Binary merge tree from K leaves to one root; heights are non-decreasing
/// along the event sequence, which makes the induced distance ultrametric.
#[derive(Debug, Clone)]
pub struct MergeTree {
    pub num_leaves: usize,
    pub events: Vec<MergeEvent>,
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
        }
    }
    fn find(&mut self, x: u32) -> u32 {
        let mut r = x;
        while self.parent[r as usize] != r {
            r = self.parent[r as usize];
        }
        let mut c = x;
        while self.parent[c as usize] != r {
            let next = self.parent[c as usize];
            self.parent[c as usize] = r;
            c = next;
        }
        r
    }
    // smaller id stays the representative
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop as usize] = keep;
        keep
    }
}

/// Greedy agglomeration on the region-adjacency graph.
///
/// Boundary strength between two regions is the mean absolute intensity
/// difference across their shared 6-neighbor faces. The cheapest boundary
/// merges first (ties broken by the smaller region-id pair); each event's
/// height is clamped to `max(link strength, previous height)` so heights
/// never decrease.
pub fn build_merge_tree(l: &SupervoxelLabeling, v: &Volume) -> Result<MergeTree> {
    if l.dims() != v.dims() {
        return Err(Error::DimMismatch {
            expected: v.dims(),
            got: l.dims(),
        });
    }
    l.validate_partition()?;
    let k = l.num_regions;
    if k == 1 {
        return Ok(MergeTree {
            num_leaves: 1,
            events: vec![],
        });
    }

    // accumulate (sum |dI|, face count) for every adjacent label pair
    let mut edges: HashMap<(u32, u32), (f64, u64)> = HashMap::new();
    let (dx, dy, dz) = v.dims();
    let labels = &l.labels.data;
    let data = v.data();
    let mut add = |ia: usize, ib: usize| {
        let (la, lb) = (labels[ia], labels[ib]);
        if la != lb {
            let key = if la < lb { (la, lb) } else { (lb, la) };
            let e = edges.entry(key).or_insert((0.0, 0));
            e.0 += (data[ia] as f64 - data[ib] as f64).abs();
            e.1 += 1;
        }
    };
    for z in 0..dz {
        for y in 0..dy {
            for x in 0..dx {
                let i = x + dx * (y + dy * z);
                if x + 1 < dx {
                    add(i, i + 1);
                }
                if y + 1 < dy {
                    add(i, i + dx);
                }
                if z + 1 < dz {
                    add(i, i + dx * dy);
                }
            }
        }
    }

    // adjacency between *representative* regions, ids are 1-based
    let mut adj: Vec<HashMap<u32, (f64, u64)>> = vec![HashMap::new(); k + 1];
    for (&(a, b), &(s, c)) in &edges {
        adj[a as usize].insert(b, (s, c));
        adj[b as usize].insert(a, (s, c));
    }

    let mut dsu = Dsu::new(k + 1);
    let mut alive: Vec<bool> = vec![true; k + 1];
    alive[0] = false;
    let mut events = Vec::with_capacity(k - 1);
    let mut last_height = f32::NEG_INFINITY;

    for _ in 0..k - 1 {
        // cheapest live boundary, ties to the smaller (a, b) pair
        let mut best: Option<(f64, u32, u32)> = None;
        for a in 1..=k as u32 {
            if !alive[a as usize] {
                continue;
            }
            for (&b, &(s, c)) in &adj[a as usize] {
                if b <= a {
                    continue;
                }
                let strength = s / c as f64;
                let cand = (strength, a, b);
                if best.map_or(true, |cur| cand < cur) {
                    best = Some(cand);
                }
            }
        }
        let (strength, a, b) = best.ok_or_else(|| {
            Error::InvalidArgument("region adjacency graph is disconnected".into())
        })?;

        let height = (strength as f32).max(last_height);
        last_height = height;
        events.push(MergeEvent { a, b, height });

        let keep = dsu.union(a, b); // keep == a since a < b
        debug_assert_eq!(keep, a);
        alive[b as usize] = false;
        let b_adj: Vec<(u32, (f64, u64))> =
            adj[b as usize].iter().map(|(&n, &e)| (n, e)).collect();
        adj[b as usize].clear();
        adj[a as usize].remove(&b);
        for (n, (s, c)) in b_adj {
            if n == a {
                continue;
            }
            adj[n as usize].remove(&b);
            let ea = adj[a as usize].entry(n).or_insert((0.0, 0));
            ea.0 += s;
            ea.1 += c;
            let en = adj[n as usize].entry(a).or_insert((0.0, 0));
            en.0 += s;
            en.1 += c;
        }
    }

    Ok(MergeTree {
        num_leaves: k,
        events,
    })
}

impl MergeTree {
    /// Region labeling obtained by applying every merge with height <= `t`
    /// to the base labeling, with labels renumbered 1..K' by first
    /// appearance in voxel order.
    pub fn cut(&self, base: &SupervoxelLabeling, t: f32) -> Result<SupervoxelLabeling> {
        let mut dsu = Dsu::new(self.num_leaves + 1);
        for e in &self.events {
            if e.height <= t {
                dsu.union(e.a, e.b);
            } else {
                break; // heights are non-decreasing
            }
        }
        let mut canon: HashMap<u32, u32> = HashMap::new();
        let mut next = 1u32;
        let mut out = Vec::with_capacity(base.labels.data.len());
        for &l in &base.labels.data {
            let rep = dsu.find(l);
            let lab = *canon.entry(rep).or_insert_with(|| {
                let v = next;
                next += 1;
                v
            });
            out.push(lab);
        }
        Ok(SupervoxelLabeling {
            labels: LabelGrid::new(base.dims(), out)?,
            num_regions: (next - 1) as usize,
        })
    }
}

/// Cuts the merge tree at `n` evenly spaced quantiles of its merge heights.
///
/// Level 1 is always the base labeling; the last level is the full merge.
/// Consecutive levels that come out identical are deduplicated, so the
/// returned hierarchy may have fewer than `n` levels.
pub fn extract_hierarchy(
    t: &MergeTree,
    base: &SupervoxelLabeling,
    n: usize,
) -> Result<SegmentationHierarchy> {
    if n == 0 || n > MAX_LEVELS {
        return Err(Error::InvalidArgument(format!(
            "level count must be in 1..={MAX_LEVELS}, got {n}"
        )));
    }
    if base.num_regions != t.num_leaves {
        return Err(Error::InvalidArgument(format!(
            "base labeling has {} regions but tree has {} leaves",
            base.num_regions, t.num_leaves
        )));
    }
    let m = t.events.len();
    let mut levels = Vec::new();
    let mut cut_heights = Vec::new();
    for lvl in 0..n {
        // merge count for this level, spaced evenly from 0 to m
        let merges = if n == 1 { 0 } else { (lvl * m) / (n - 1) };
        let height = if merges == 0 {
            -1.0
        } else {
            t.events[merges - 1].height
        };
        // no merges means the base labeling itself, label ids untouched
        let labeling = if merges == 0 {
            base.clone()
        } else {
            t.cut(base, height)?
        };
        if levels
            .last()
            .map_or(true, |prev: &SupervoxelLabeling| prev != &labeling)
        {
            levels.push(labeling);
            cut_heights.push(height);
        }
    }
    let h = SegmentationHierarchy {
        levels,
        cut_heights,
    };
    h.validate_nesting()?;
    Ok(h)
}
