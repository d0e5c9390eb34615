//! Active constraint graphs, the table of complete 3-tree templates, and
//! completion of a partial 3-tree into a set of Cayley parameters.
//!
//! Intra-set edges are implicit: each side is a clique. With that convention
//! every complete 3-tree on two sides carries exactly six inter-set edges,
//! which on a 3×3 support form a staircase:
//!
//! ```text
//!        a0 a1 a2
//!   b0 [  x  x  x ]
//!   b1 [  x  x  . ]
//!   b2 [  x  .  . ]
//! ```
//!
//! realized as three tetrahedra `(a0 a1 a2 | b0)`, `(a0 a1 b0 | b1)`,
//! `(a0 b0 b1 | b2)` with A held fixed.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use itertools::Itertools;
use thiserror::Error;

use crate::model::{PairId, Problem, Side};

/// Ambient dimension of the pose space of one rigid body relative to another.
pub const AMBIENT_DIM: usize = 6;

/// Largest support per side covered by the template table.
pub const MAX_TEMPLATE_SIDE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcgError {
    #[error("graph is not a partial 3-tree")]
    NotPartial3Tree,
    #[error("point-set {0} has no three non-collinear points to complete the support")]
    DegenerateSupport(Side),
}

/// A graph vertex: a point of A or of B, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    A(usize),
    B(usize),
}

/// Active edges of a region. Sorted and deduplicated, so structural equality
/// is label equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ActiveConstraintGraph {
    edges: Vec<PairId>,
}

impl ActiveConstraintGraph {
    pub fn new(edges: impl IntoIterator<Item = PairId>) -> Self {
        let mut edges: Vec<PairId> = edges.into_iter().collect();
        edges.sort();
        edges.dedup();
        Self { edges }
    }

    pub fn edges(&self) -> &[PairId] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: PairId) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn with_edge(&self, e: PairId) -> Self {
        let mut edges = self.edges.clone();
        if let Err(pos) = edges.binary_search(&e) {
            edges.insert(pos, e);
        }
        Self { edges }
    }

    pub fn without_edge(&self, e: PairId) -> Self {
        Self {
            edges: self.edges.iter().copied().filter(|x| *x != e).collect(),
        }
    }

    /// `6 - |H|`, saturating at zero.
    pub fn dof(&self) -> usize {
        AMBIENT_DIM.saturating_sub(self.edges.len())
    }

    pub fn is_minimally_rigid(&self) -> bool {
        self.edges.len() == AMBIENT_DIM
    }

    pub fn support_a(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.a).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn support_b(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.b).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Canonical text label, e.g. `a1-b1,a2-b3`, edges in input order.
    pub fn label(&self, problem: &Problem) -> String {
        self.edges.iter().map(|e| problem.pair_label(*e)).join(",")
    }

    /// Inverse of [`label`](Self::label).
    pub fn parse_label(problem: &Problem, s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Self::default());
        }
        let mut edges = Vec::new();
        for part in s.split(',') {
            let (a, b) = part.split_once('-')?;
            edges.push(problem.pair_by_labels(a, b).ok()?);
        }
        Some(Self::new(edges))
    }

    pub fn is_partial_3tree(&self) -> bool {
        ThreeTreeTable::global().embeds(self)
    }
}

impl fmt::Display for ActiveConstraintGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.edges.iter().map(|e| format!("{}:{}", e.a, e.b)).join(",");
        write!(f, "{{{s}}}")
    }
}

/// Root graphs: one per pair with positive interval width (or one per pair of
/// such pairs when `root_size == 2`), restricted to the interest set.
pub fn build_root_graphs(problem: &Problem, root_size: usize) -> Vec<ActiveConstraintGraph> {
    let candidates: Vec<PairId> = problem.pairs().filter(|p| problem.delta(*p) > 0.0).collect();
    let keep = |g: &ActiveConstraintGraph| match &problem.interest {
        Some(is) => is.intersects(g.edges()),
        None => true,
    };
    let mut out: Vec<ActiveConstraintGraph> = if root_size >= 2 {
        candidates
            .iter()
            .tuple_combinations()
            .map(|(x, y)| ActiveConstraintGraph::new([*x, *y]))
            .filter(keep)
            .collect()
    } else {
        candidates
            .iter()
            .map(|p| ActiveConstraintGraph::new([*p]))
            .filter(keep)
            .collect()
    };
    out.sort();
    out.dedup();
    out
}

/// Inter-set edge pattern on an `na × nb` support, bit `i * 4 + j` set when
/// A-slot `i` is joined to B-slot `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template {
    pub na: usize,
    pub nb: usize,
    pub inter: u16,
}

impl Template {
    pub fn has(&self, i: usize, j: usize) -> bool {
        self.inter & bit(i, j) != 0
    }

    pub fn edge_count(&self) -> u32 {
        self.inter.count_ones()
    }
}

fn bit(i: usize, j: usize) -> u16 {
    1u16 << (i * MAX_TEMPLATE_SIDE + j)
}

/// All complete 3-trees (with both sides cliques) on supports up to 4×4, up to
/// relabeling within each side.
#[derive(Debug, Clone)]
pub struct ThreeTreeTable {
    pub templates: Vec<Template>,
}

/// Local graph on at most 8 vertices: A-slots `0..na`, B-slots `4..4+nb`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct SmallGraph {
    present: u8,
    adj: [u8; 8],
}

impl SmallGraph {
    fn complete(na: usize, nb: usize) -> Self {
        let mut g = SmallGraph {
            present: 0,
            adj: [0; 8],
        };
        let vs: Vec<usize> = (0..na).chain(4..4 + nb).collect();
        for &v in &vs {
            g.present |= 1 << v;
        }
        for &u in &vs {
            for &v in &vs {
                if u != v {
                    g.adj[u] |= 1 << v;
                }
            }
        }
        g
    }

    fn count(&self, side_a: bool) -> usize {
        let mask = if side_a { 0x0f } else { 0xf0 };
        (self.present & mask).count_ones() as usize
    }

    fn template(&self) -> Template {
        let mut inter = 0;
        for i in 0..4 {
            for j in 0..4 {
                if self.adj[i] & (1 << (4 + j)) != 0 {
                    inter |= bit(i, j);
                }
            }
        }
        canonical(Template {
            na: self.count(true),
            nb: self.count(false),
            inter,
        })
    }
}

/// Smallest inter mask over all side-respecting relabelings.
fn canonical(t: Template) -> Template {
    let mut best = u16::MAX;
    for pa in (0..t.na).permutations(t.na) {
        for pb in (0..t.nb).permutations(t.nb) {
            let mut m = 0;
            for i in 0..t.na {
                for j in 0..t.nb {
                    if t.has(i, j) {
                        m |= bit(pa[i], pb[j]);
                    }
                }
            }
            best = best.min(m);
        }
    }
    Template {
        inter: if t.na == 0 || t.nb == 0 { 0 } else { best },
        ..t
    }
}

/// Independent check: build the full graph (cliques on each side plus the
/// inter edges) and peel simplicial degree-3 vertices down to a clique of at
/// most 4 vertices.
pub fn is_complete_3tree(t: &Template) -> bool {
    let mut adj = [0u8; 8];
    let mut present = 0u8;
    let vs: Vec<usize> = (0..t.na).chain(4..4 + t.nb).collect();
    for &v in &vs {
        present |= 1 << v;
    }
    for &u in &vs {
        for &v in &vs {
            if u == v {
                continue;
            }
            let same = (u < 4) == (v < 4);
            let linked = same
                || (u < 4 && t.has(u, v - 4))
                || (v < 4 && t.has(v, u - 4));
            if linked {
                adj[u] |= 1 << v;
            }
        }
    }
    loop {
        let n = present.count_ones();
        if n <= 4 {
            return (0..8)
                .filter(|v| present & (1 << v) != 0)
                .all(|v| adj[v] & present == present & !(1 << v));
        }
        let pick = (0..8).find(|&v| {
            if present & (1 << v) == 0 {
                return false;
            }
            let nb = adj[v] & present;
            nb.count_ones() == 3
                && (0..8)
                    .filter(|u| nb & (1 << u) != 0)
                    .all(|u| adj[u] & nb == nb & !(1 << u))
        });
        match pick {
            Some(v) => present &= !(1 << v),
            None => return false,
        }
    }
}

impl ThreeTreeTable {
    /// Build by pasting: start from every 4-vertex clique split across the two
    /// sides and repeatedly glue a new vertex onto a triangle. A new vertex on
    /// side S must see every existing S-vertex, so the triangle has to contain
    /// them all.
    pub fn generate() -> Self {
        let mut seen: BTreeSet<Template> = BTreeSet::new();
        let mut visited: std::collections::HashSet<SmallGraph> = Default::default();
        let mut stack = Vec::new();
        for na in 0..=MAX_TEMPLATE_SIDE {
            for nb in 0..=MAX_TEMPLATE_SIDE {
                if na + nb >= 1 && na + nb <= 4 {
                    stack.push(SmallGraph::complete(na, nb));
                }
            }
        }
        while let Some(g) = stack.pop() {
            if !visited.insert(g) {
                continue;
            }
            seen.insert(g.template());
            if (g.present.count_ones() as usize) < 4 {
                continue;
            }
            for side_a in [true, false] {
                let count = g.count(side_a);
                if count >= MAX_TEMPLATE_SIDE {
                    continue;
                }
                let new_v = if side_a { count } else { 4 + count };
                let same_mask: u8 = if side_a { 0x0f } else { 0xf0 };
                let same = g.present & same_mask;
                let verts: Vec<usize> = (0..8).filter(|v| g.present & (1 << v) != 0).collect();
                for tri in verts.iter().copied().combinations(3) {
                    let tmask = tri.iter().fold(0u8, |m, v| m | (1 << v));
                    if same & !tmask != 0 {
                        continue;
                    }
                    let is_triangle = tri.iter().all(|&u| adj_has(&g, u, tmask));
                    if !is_triangle {
                        continue;
                    }
                    let mut h = g;
                    h.present |= 1 << new_v;
                    h.adj[new_v] = tmask;
                    for &u in &tri {
                        h.adj[u] |= 1 << new_v;
                    }
                    stack.push(h);
                }
            }
        }
        Self {
            templates: seen.into_iter().collect(),
        }
    }

    pub fn global() -> &'static ThreeTreeTable {
        static TABLE: OnceLock<ThreeTreeTable> = OnceLock::new();
        TABLE.get_or_init(ThreeTreeTable::generate)
    }

    /// Whether the graph is a subgraph of some template under a side-respecting
    /// injection of its support.
    pub fn embeds(&self, g: &ActiveConstraintGraph) -> bool {
        let sa = g.support_a();
        let sb = g.support_b();
        if sa.len() > MAX_TEMPLATE_SIDE || sb.len() > MAX_TEMPLATE_SIDE {
            return false;
        }
        let local: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .map(|e| {
                (
                    sa.binary_search(&e.a).unwrap(),
                    sb.binary_search(&e.b).unwrap(),
                )
            })
            .collect();
        self.templates.iter().any(|t| {
            t.na >= sa.len()
                && t.nb >= sb.len()
                && (0..t.na).permutations(sa.len()).any(|pa| {
                    (0..t.nb)
                        .permutations(sb.len())
                        .any(|pb| local.iter().all(|&(i, j)| t.has(pa[i], pb[j])))
                })
        })
    }
}

fn adj_has(g: &SmallGraph, u: usize, tmask: u8) -> bool {
    g.adj[u] & tmask == tmask & !(1 << u)
}

/// Staircase slots: A-slot `i` and B-slot `j` are joined iff `i + j <= 2`.
pub fn staircase_has(i: usize, j: usize) -> bool {
    i + j <= 2
}

/// One tetrahedron of the construction sequence: `apex` is placed from the
/// three `base` vertices already in position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tet {
    pub base: [Vertex; 3],
    pub apex: Vertex,
}

/// A partial 3-tree completed onto concrete points: support slots, the
/// tetrahedron sequence, and the Cayley parameters `F` (staircase edges not in
/// `H`) in sampling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub a_slots: [usize; 3],
    pub b_slots: [usize; 3],
    pub tets: [Tet; 3],
    pub params: Vec<PairId>,
}

impl Completion {
    /// All six inter-set edges of the completed graph.
    pub fn staircase_edges(&self) -> Vec<PairId> {
        let mut out = Vec::with_capacity(6);
        for j in 0..3 {
            for i in 0..3 {
                if staircase_has(i, j) {
                    out.push(PairId::new(self.a_slots[i], self.b_slots[j]));
                }
            }
        }
        out
    }

    /// Index of the tetrahedron whose apex closes the given inter edge.
    pub fn tet_of(&self, e: PairId) -> Option<usize> {
        let j = self.b_slots.iter().position(|b| *b == e.b)?;
        let i = self.a_slots.iter().position(|a| *a == e.a)?;
        staircase_has(i, j).then_some(j)
    }
}

fn staircase_tets(a: [usize; 3], b: [usize; 3]) -> [Tet; 3] {
    use Vertex::{A, B};
    [
        Tet {
            base: [A(a[0]), A(a[1]), A(a[2])],
            apex: B(b[0]),
        },
        Tet {
            base: [A(a[0]), A(a[1]), B(b[0])],
            apex: B(b[1]),
        },
        Tet {
            base: [A(a[0]), B(b[0]), B(b[1])],
            apex: B(b[2]),
        },
    ]
}

/// Pick three points of one side: those in `used` first, padded in input order
/// with the first choice that makes a non-degenerate triangle.
fn pad_support(problem: &Problem, side: Side, used: &[usize]) -> Result<[usize; 3], AcgError> {
    let set = match side {
        Side::A => &problem.a,
        Side::B => &problem.b,
    };
    if used.len() > 3 || set.len() < 3 {
        return Err(AcgError::DegenerateSupport(side));
    }
    let s2 = problem.scale() * problem.scale();
    let rest: Vec<usize> = (0..set.len()).filter(|i| !used.contains(i)).collect();
    for pad in rest.iter().copied().combinations(3 - used.len()) {
        let tri: Vec<usize> = used.iter().copied().chain(pad).collect();
        let (p, q, r) = (
            set.points[tri[0]].pos,
            set.points[tri[1]].pos,
            set.points[tri[2]].pos,
        );
        if (q - p).cross(&(r - p)).norm() * 0.5 > 1e-9 * s2 {
            return Ok([tri[0], tri[1], tri[2]]);
        }
    }
    Err(AcgError::DegenerateSupport(side))
}

/// Complete `g` to the staircase 3-tree on a padded 3×3 support. Among valid
/// slot assignments, prefer the one putting the most active edges into the
/// earliest tetrahedra; this keeps every parameter range bounded.
pub fn complete_3tree(g: &ActiveConstraintGraph, problem: &Problem) -> Result<Completion, AcgError> {
    let sa = g.support_a();
    let sb = g.support_b();
    if sa.len() > 3 || sb.len() > 3 {
        return Err(AcgError::NotPartial3Tree);
    }
    let pa = pad_support(problem, Side::A, &sa)?;
    let pb = pad_support(problem, Side::B, &sb)?;

    let mut best: Option<([usize; 3], [usize; 3], [usize; 3])> = None;
    for perm_a in (0..3).permutations(3) {
        let a_slots = [pa[perm_a[0]], pa[perm_a[1]], pa[perm_a[2]]];
        for perm_b in (0..3).permutations(3) {
            let b_slots = [pb[perm_b[0]], pb[perm_b[1]], pb[perm_b[2]]];
            let mut score = [0usize; 3];
            let ok = g.edges().iter().all(|e| {
                let i = a_slots.iter().position(|x| *x == e.a).unwrap();
                let j = b_slots.iter().position(|x| *x == e.b).unwrap();
                score[j] += 1;
                staircase_has(i, j)
            });
            if ok && best.is_none_or(|(_, _, s)| score > s) {
                best = Some((a_slots, b_slots, score));
            }
        }
    }
    let (a_slots, b_slots, _) = best.ok_or(AcgError::NotPartial3Tree)?;
    let mut params = Vec::with_capacity(6 - g.len());
    for (j, &b) in b_slots.iter().enumerate() {
        for (i, &a) in a_slots.iter().enumerate() {
            let e = PairId::new(a, b);
            if staircase_has(i, j) && !g.contains(e) {
                params.push(e);
            }
        }
    }
    Ok(Completion {
        a_slots,
        b_slots,
        tets: staircase_tets(a_slots, b_slots),
        params,
    })
}

/// Fraction of labeled active-edge sets of the given size on a 3×3 support
/// that are partial 3-trees: `(partial, total)`.
pub fn partial_3tree_census(size: usize) -> (usize, usize) {
    let all: Vec<PairId> = (0..3)
        .flat_map(|a| (0..3).map(move |b| PairId::new(a, b)))
        .collect();
    let mut partial = 0;
    let mut total = 0;
    for edges in all.into_iter().combinations(size) {
        total += 1;
        if ActiveConstraintGraph::new(edges).is_partial_3tree() {
            partial += 1;
        }
    }
    (partial, total)
}
