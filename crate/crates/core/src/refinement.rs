//! Marking, conforming refinement (newest vertex bisection or red–green–blue),
//! lifting of new nodes, coarsening by collapsing refinement families, and the
//! nodal transfer of finite element functions between meshes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::fem::FeFunction;
use crate::geometry::{lift, LevelSetSurface};
use crate::mesh::{Ancestor, MeshId, Split, SurfaceMesh, Tag, TriangleInfo};
use crate::{Error, Result};

/// Refinement strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Newest vertex bisection.
    Nvb,
    /// Red refinement of marked triangles with green/blue closure.
    Rgb,
}

/// Marking criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Elements whose indicator is within a factor θ of the largest one.
    Bulk,
    /// Smallest set of largest elements carrying a fixed share of η².
    Doerfler,
}

/// A set of triangle ids selected for refinement or coarsening.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkSet {
    /// Sorted, without duplicates.
    pub marked: Vec<usize>,
    /// Criterion and parameter that produced the set, if any.
    pub rule: Option<(Criterion, f64)>,
}

impl MarkSet {
    pub fn empty() -> Self {
        MarkSet { marked: Vec::new(), rule: None }
    }

    pub fn from_triangles(ids: impl IntoIterator<Item = usize>) -> Self {
        let marked: BTreeSet<usize> = ids.into_iter().collect();
        MarkSet { marked: marked.into_iter().collect(), rule: None }
    }

    pub fn all(mesh: &SurfaceMesh) -> Self {
        MarkSet { marked: (0..mesh.triangle_count()).collect(), rule: None }
    }

    pub fn is_empty(&self) -> bool {
        self.marked.is_empty()
    }

    pub fn len(&self) -> usize {
        self.marked.len()
    }

    fn mask(&self, n: usize) -> Result<Vec<bool>> {
        let mut mask = alloc::vec![false; n];
        for &t in &self.marked {
            *mask.get_mut(t).ok_or(Error::InvalidConfig("mark refers to a missing triangle"))? = true;
        }
        Ok(mask)
    }
}

/// Where a node of a new mesh takes its value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSource {
    Retained(usize),
    /// Midpoint of the edge between two old nodes.
    Midpoint(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Refine,
    Coarsen,
}

/// Node correspondence between two consecutive meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMap {
    pub source: MeshId,
    pub target: MeshId,
    pub direction: Direction,
    pub nodes: Vec<NodeSource>,
}

impl TransferMap {
    pub fn identity(mesh: &SurfaceMesh) -> Self {
        TransferMap {
            source: mesh.id(),
            target: mesh.id(),
            direction: Direction::Refine,
            nodes: (0..mesh.node_count()).map(NodeSource::Retained).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.source == self.target
    }
}

fn descending(indicators: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    order
}

/// Selects elements for refinement from elementwise indicators η(T).
///
/// Bulk: all T with η(T) ≥ θ·max η. Dörfler: the fewest largest elements with
/// Σ η(T)² ≥ (1 − θ)·Σ η². Ties go to the lower triangle id. All-zero
/// indicators give an empty set.
pub fn mark_refine(indicators: &[f64], theta: f64, criterion: Criterion) -> MarkSet {
    let rule = Some((criterion, theta));
    let max = indicators.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return MarkSet { marked: Vec::new(), rule };
    }
    let marked = match criterion {
        Criterion::Bulk => (0..indicators.len()).filter(|&t| indicators[t] >= theta * max).collect(),
        Criterion::Doerfler => {
            let total: f64 = indicators.iter().map(|e| e * e).sum();
            let goal = (1.0 - theta) * total;
            let mut sum = 0.0;
            let mut marked = Vec::new();
            for t in descending(indicators) {
                if sum >= goal {
                    break;
                }
                sum += indicators[t] * indicators[t];
                marked.push(t);
            }
            marked.sort_unstable();
            marked
        }
    };
    MarkSet { marked, rule }
}

/// Selects elements for coarsening.
///
/// Bulk: all T with η(T) ≤ θ*·max η. Dörfler: the smallest elements, added in
/// increasing order while Σ η(T)² ≤ θ*·Σ η².
pub fn mark_coarsen(indicators: &[f64], theta_star: f64, criterion: Criterion) -> MarkSet {
    let rule = Some((criterion, theta_star));
    let marked = match criterion {
        Criterion::Bulk => {
            let max = indicators.iter().cloned().fold(0.0, f64::max);
            (0..indicators.len()).filter(|&t| indicators[t] <= theta_star * max).collect()
        }
        Criterion::Doerfler => {
            let total: f64 = indicators.iter().map(|e| e * e).sum();
            let budget = theta_star * total;
            let mut order = descending(indicators);
            order.reverse();
            // reversing also reverses the id tie-break; restore it
            order.sort_by(|&a, &b| indicators[a].total_cmp(&indicators[b]).then(a.cmp(&b)));
            let mut sum = 0.0;
            let mut marked = Vec::new();
            for t in order {
                let next = sum + indicators[t] * indicators[t];
                if next > budget {
                    break;
                }
                sum = next;
                marked.push(t);
            }
            marked.sort_unstable();
            marked
        }
    };
    MarkSet { marked, rule }
}

fn check_strategy(mesh: &SurfaceMesh, requested: Strategy) -> Result<()> {
    match mesh.strategy() {
        Some(s) if s != requested => Err(Error::StrategyMismatch { mesh: s, requested }),
        _ => Ok(()),
    }
}

struct Refiner<'a> {
    old: &'a SurfaceMesh,
    strategy: Strategy,
    /// First edge with each lower endpoint; edges are sorted by endpoints.
    edge_start: Vec<usize>,
    /// New node on each old edge, `usize::MAX` if the edge is not split.
    midpoints: Vec<usize>,
    triangles: Vec<[usize; 3]>,
    info: Vec<TriangleInfo>,
    history: BTreeMap<u64, Ancestor>,
    next_ancestor: u64,
    node_generation: Vec<u32>,
    epoch: u32,
}

impl Refiner<'_> {
    fn midpoint(&self, a: usize, b: usize) -> Option<usize> {
        let (lo, hi) = (a.min(b), a.max(b));
        if hi >= self.old.node_count() {
            return None;
        }
        let range = self.edge_start[lo]..self.edge_start[lo + 1];
        let k = self.old.edges[range.clone()].binary_search_by_key(&hi, |e| e.nodes[1]).ok()?;
        Some(self.midpoints[range.start + k]).filter(|&m| m != usize::MAX)
    }

    fn archive(&mut self, vertices: [usize; 3], info: TriangleInfo, split: Split, created: [usize; 3]) -> u64 {
        let id = self.next_ancestor;
        self.next_ancestor += 1;
        for &m in &created[..split.created_count()] {
            let g = &mut self.node_generation[m];
            *g = (*g).max(info.generation + 1);
        }
        self.history.insert(id, Ancestor { vertices, info, split, created, epoch: self.epoch });
        id
    }

    fn child_info(parent: u64, parent_info: &TriangleInfo, slot: u8, tag: Tag) -> TriangleInfo {
        TriangleInfo { generation: parent_info.generation + 1, tag, parent: Some(parent), child_slot: slot }
    }

    /// Subdivides `tri` according to the marked edges it contains.
    fn split(&mut self, tri: [usize; 3], info: TriangleInfo, bisection_tag: Tag) {
        let [a, b, c] = tri;
        let Some(m) = self.midpoint(b, c) else {
            self.triangles.push(tri);
            self.info.push(info);
            return;
        };
        let m_ca = self.midpoint(c, a);
        let m_ab = self.midpoint(a, b);
        if let (Strategy::Rgb, Some(m_ca), Some(m_ab)) = (self.strategy, m_ca, m_ab) {
            let id = self.archive(tri, info, Split::Red, [m, m_ca, m_ab]);
            let children = [[a, m_ab, m_ca], [m_ab, b, m], [m_ca, m, c], [m, m_ca, m_ab]];
            for (slot, child) in children.into_iter().enumerate() {
                self.triangles.push(child);
                self.info.push(Self::child_info(id, &info, slot as u8, Tag::Red));
            }
            return;
        }
        let tag = match (self.strategy, bisection_tag) {
            (Strategy::Nvb, _) => Tag::Bisection,
            (Strategy::Rgb, Tag::Blue) => Tag::Blue,
            (Strategy::Rgb, _) if m_ca.is_some() || m_ab.is_some() => Tag::Blue,
            (Strategy::Rgb, _) => Tag::Green,
        };
        let id = self.archive(tri, info, Split::Bisection, [m, usize::MAX, usize::MAX]);
        self.split([m, a, b], Self::child_info(id, &info, 0, tag), tag);
        self.split([m, c, a], Self::child_info(id, &info, 1, tag), tag);
    }
}

/// Refines the marked triangles and closes the mesh conformingly.
///
/// All three edges of a marked triangle are marked; any triangle with a
/// marked edge gets its refinement edge marked as well, until no hanging node
/// is left. A triangle with only its refinement edge marked is bisected
/// (green), with two marked edges bisected twice (blue). With all three edges
/// marked, NVB bisects three times and RGB splits red. New nodes are appended
/// after the old ones at the edge midpoints and are not lifted.
pub fn refine(mesh: &SurfaceMesh, marks: &MarkSet, strategy: Strategy) -> Result<(SurfaceMesh, TransferMap)> {
    if !mesh.has_refinement_edges() {
        return Err(Error::MetadataMissing);
    }
    check_strategy(mesh, strategy)?;
    let tri_marked = marks.mask(mesh.triangle_count())?;
    if marks.is_empty() {
        return Ok((mesh.clone(), TransferMap::identity(mesh)));
    }

    let edges = mesh.edges();
    let tri_edges = mesh.triangle_edges();
    let mut edge_marked = alloc::vec![false; edges.len()];
    let mut queue = Vec::new();
    for (t, &m) in tri_marked.iter().enumerate() {
        if m {
            for &e in &tri_edges[t] {
                edge_marked[e] = true;
            }
            queue.push(t);
        }
    }
    for e in 0..edges.len() {
        if edge_marked[e] {
            queue.extend_from_slice(&edges[e].triangles);
        }
    }
    while let Some(t) = queue.pop() {
        let r = tri_edges[t][0];
        if !edge_marked[r] && tri_edges[t].iter().any(|&e| edge_marked[e]) {
            edge_marked[r] = true;
            queue.extend_from_slice(&edges[r].triangles);
        }
    }

    let old_count = mesh.node_count();
    let mut nodes = mesh.nodes.clone();
    let mut sources: Vec<NodeSource> = (0..old_count).map(NodeSource::Retained).collect();
    let mut midpoints = alloc::vec![usize::MAX; edges.len()];
    let mut edge_start = alloc::vec![0; old_count + 1];
    for edge in edges {
        edge_start[edge.nodes[0] + 1] += 1;
    }
    for i in 0..old_count {
        edge_start[i + 1] += edge_start[i];
    }
    for (e, edge) in edges.iter().enumerate() {
        if edge_marked[e] {
            let [p, q] = edge.nodes;
            midpoints[e] = nodes.len();
            nodes.push((mesh.nodes[p] + mesh.nodes[q]) * 0.5);
            sources.push(NodeSource::Midpoint(p, q));
        }
    }

    let mut node_generation = mesh.node_generation.clone();
    node_generation.resize(nodes.len(), 0);
    let mut refiner = Refiner {
        old: mesh,
        strategy,
        edge_start,
        midpoints,
        triangles: Vec::with_capacity(mesh.triangle_count() + 4 * marks.len()),
        info: Vec::with_capacity(mesh.triangle_count() + 4 * marks.len()),
        history: mesh.history.clone(),
        next_ancestor: mesh.next_ancestor,
        node_generation,
        epoch: mesh.epoch + 1,
    };
    for t in 0..refiner.old.triangle_count() {
        let tri = refiner.old.triangles[t];
        let info = refiner.old.info[t];
        refiner.split(tri, info, Tag::Green);
    }

    let mut refined = SurfaceMesh {
        id: MeshId::fresh(),
        nodes,
        triangles: refiner.triangles,
        info: refiner.info,
        node_generation: refiner.node_generation,
        edges: Vec::new(),
        triangle_edges: Vec::new(),
        history: refiner.history,
        next_ancestor: refiner.next_ancestor,
        epoch: refiner.epoch,
        strategy: Some(strategy),
        refinement_edges: true,
        unlifted_from: mesh.unlifted_from.min(old_count),
    };
    refined.rebuild_edges()?;
    let map = TransferMap { source: mesh.id(), target: refined.id(), direction: Direction::Refine, nodes: sources };
    Ok((refined, map))
}

/// Refines every triangle once.
pub fn refine_uniform(mesh: &SurfaceMesh, strategy: Strategy) -> Result<(SurfaceMesh, TransferMap)> {
    refine(mesh, &MarkSet::all(mesh), strategy)
}

/// Nodal values on the target mesh of `map`: retained nodes keep their value,
/// midpoints take the mean of the two edge endpoints.
pub fn transfer(u_old: &FeFunction, map: &TransferMap) -> Result<FeFunction> {
    if u_old.mesh() != map.source {
        return Err(Error::GenerationMismatch { expected: map.source, found: u_old.mesh() });
    }
    let v = u_old.values();
    let values = map
        .nodes
        .iter()
        .map(|s| match *s {
            NodeSource::Retained(i) => v[i],
            NodeSource::Midpoint(a, b) => 0.5 * (v[a] + v[b]),
        })
        .collect();
    Ok(FeFunction::from_parts(map.target, values))
}

/// Moves every node created since the last lift onto the surface.
pub fn lift_new_nodes<S: LevelSetSurface + ?Sized>(mesh: &mut SurfaceMesh, surface: &S) -> Result<()> {
    for i in mesh.unlifted_nodes() {
        mesh.nodes[i] = lift(surface, &mesh.nodes[i])?;
    }
    mesh.unlifted_from = mesh.nodes.len();
    Ok(())
}

/// Result of [`coarsen`].
#[derive(Debug, Clone)]
pub struct Coarsened {
    pub mesh: SurfaceMesh,
    pub functions: Vec<FeFunction>,
    pub removed: usize,
    pub map: TransferMap,
}

/// Families selected for collapse by [`coarsen`], indexed by position in `ids`.
struct CollapsePlan {
    ids: Vec<u64>,
    alive: Vec<bool>,
    /// Enclosing candidate from the same refinement call.
    outer: Vec<Option<usize>>,
}

impl CollapsePlan {
    fn new(mesh: &SurfaceMesh, marked: &[bool]) -> Option<Self> {
        let history = &mesh.history;
        let mut ids: Vec<u64> = Vec::new();
        for i in &mesh.info {
            let Some(mut p) = i.parent else { continue };
            ids.push(p);
            let epoch = history[&p].epoch;
            while let Some(q) = history[&p].info.parent.filter(|q| history[q].epoch == epoch) {
                ids.push(q);
                p = q;
            }
        }
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return None;
        }
        let index = |id: u64| ids.binary_search(&id).ok();
        let outer: Vec<Option<usize>> = ids
            .iter()
            .map(|id| {
                let anc = &history[id];
                anc.info.parent.filter(|q| history[q].epoch == anc.epoch).and_then(index)
            })
            .collect();
        let mut leaf_children = alloc::vec![0usize; ids.len()];
        let mut unmarked = alloc::vec![false; ids.len()];
        for (t, i) in mesh.info.iter().enumerate() {
            if let Some(c) = i.parent.and_then(index) {
                leaf_children[c] += 1;
                unmarked[c] |= !marked[t];
            }
        }
        let leaf_parent: Vec<Option<usize>> = mesh.info.iter().map(|i| i.parent.and_then(index)).collect();
        let mut plan = CollapsePlan { alive: alloc::vec![true; ids.len()], ids, outer };
        let child_count: Vec<usize> = plan.ids.iter().map(|id| history[id].split.child_count()).collect();

        loop {
            // completeness: every child is a marked leaf or a live nested candidate
            loop {
                let mut nested = alloc::vec![0usize; plan.ids.len()];
                for c in 0..plan.ids.len() {
                    if let (true, Some(o)) = (plan.alive[c], plan.outer[c]) {
                        nested[o] += 1;
                    }
                }
                let mut changed = false;
                for c in 0..plan.ids.len() {
                    if plan.alive[c] && (unmarked[c] || leaf_children[c] + nested[c] != child_count[c]) {
                        plan.alive[c] = false;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            // created nodes must not survive in the coarsened mesh
            let mut usage = alloc::vec![0u32; mesh.node_count()];
            let mut emitted = alloc::vec![false; plan.ids.len()];
            for (t, tri) in mesh.triangles.iter().enumerate() {
                match leaf_parent[t].and_then(|c| plan.top_of(c)) {
                    Some(c) if !emitted[c] => {
                        emitted[c] = true;
                        history[&plan.ids[c]].vertices.iter().for_each(|&v| usage[v] += 1);
                    }
                    Some(_) => {}
                    None => tri.iter().for_each(|&v| usage[v] += 1),
                }
            }
            let mut blocked = false;
            for c in 0..plan.ids.len() {
                if plan.alive[c] && history[&plan.ids[c]].created().iter().any(|&m| usage[m] > 0) {
                    plan.alive[c] = false;
                    blocked = true;
                }
            }
            if !blocked {
                break;
            }
        }
        plan.alive.iter().any(|&a| a).then_some(plan)
    }

    fn top_of(&self, mut c: usize) -> Option<usize> {
        if !self.alive[c] {
            return None;
        }
        while let Some(o) = self.outer[c].filter(|&o| self.alive[o]) {
            c = o;
        }
        Some(c)
    }

    fn top(&self, parent: Option<u64>) -> Option<usize> {
        parent.and_then(|p| self.ids.binary_search(&p).ok()).and_then(|c| self.top_of(c))
    }
}

/// Undoes the most recent refinement of marked regions.
///
/// A refinement family (the children of one split ancestor) is collapsed
/// when each child is a current, marked triangle or a collapsed family from
/// the same refinement call, and none of the nodes it created is used by the
/// coarsened mesh. One call undoes at most one refinement call per region.
/// Functions are restricted to the surviving nodes.
pub fn coarsen(
    mesh: &SurfaceMesh,
    marks: &MarkSet,
    functions: &[&FeFunction],
    strategy: Strategy,
) -> Result<Coarsened> {
    check_strategy(mesh, strategy)?;
    for f in functions {
        if f.mesh() != mesh.id() {
            return Err(Error::GenerationMismatch { expected: mesh.id(), found: f.mesh() });
        }
    }
    let unchanged = || Coarsened {
        mesh: mesh.clone(),
        functions: functions.iter().map(|f| (*f).clone()).collect(),
        removed: 0,
        map: TransferMap::identity(mesh),
    };
    if marks.is_empty() {
        return Ok(unchanged());
    }

    let marked = marks.mask(mesh.triangle_count())?;
    let Some(plan) = CollapsePlan::new(mesh, &marked) else {
        return Ok(unchanged());
    };

    let mut history = mesh.history.clone();
    let mut triangles = Vec::with_capacity(mesh.triangle_count());
    let mut info = Vec::with_capacity(mesh.triangle_count());
    let mut emitted = alloc::vec![false; plan.ids.len()];
    for t in 0..mesh.triangle_count() {
        match plan.top(mesh.info[t].parent) {
            Some(c) => {
                if !emitted[c] {
                    emitted[c] = true;
                    let anc = &mesh.history[&plan.ids[c]];
                    triangles.push(anc.vertices);
                    info.push(anc.info);
                }
            }
            None => {
                triangles.push(mesh.triangles[t]);
                info.push(mesh.info[t]);
            }
        }
    }
    for (c, id) in plan.ids.iter().enumerate() {
        if plan.alive[c] {
            history.remove(id);
        }
    }

    let mut used = alloc::vec![false; mesh.node_count()];
    triangles.iter().flatten().for_each(|&v| used[v] = true);
    let mut new_index = alloc::vec![usize::MAX; mesh.node_count()];
    let mut kept = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            new_index[i] = kept.len();
            kept.push(i);
        }
    }
    let removed = mesh.node_count() - kept.len();
    triangles.iter_mut().flatten().for_each(|v| *v = new_index[*v]);
    for anc in history.values_mut() {
        anc.vertices.iter_mut().for_each(|v| *v = new_index[*v]);
        anc.created.iter_mut().for_each(|v| {
            if *v != usize::MAX {
                *v = new_index[*v]
            }
        });
    }

    let mut coarse = SurfaceMesh {
        id: MeshId::fresh(),
        nodes: kept.iter().map(|&i| mesh.nodes[i]).collect(),
        triangles,
        info,
        node_generation: kept.iter().map(|&i| mesh.node_generation[i]).collect(),
        edges: Vec::new(),
        triangle_edges: Vec::new(),
        history,
        next_ancestor: mesh.next_ancestor,
        epoch: mesh.epoch,
        strategy: mesh.strategy,
        refinement_edges: true,
        unlifted_from: kept.iter().take_while(|&&i| i < mesh.unlifted_from).count(),
    };
    coarse.rebuild_edges()?;
    let map = TransferMap {
        source: mesh.id(),
        target: coarse.id(),
        direction: Direction::Coarsen,
        nodes: kept.iter().map(|&i| NodeSource::Retained(i)).collect(),
    };
    let functions = functions.iter().map(|f| transfer(f, &map)).collect::<Result<Vec<_>>>()?;
    Ok(Coarsened { mesh: coarse, functions, removed, map })
}
