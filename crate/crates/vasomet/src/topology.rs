//! Disc-rooted vessel forests: root attachment, outward orientation with
//! cycle breaking, Strahler ordering, and junction classification.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{angle_between_deg, Vec2};
use crate::graph::{Edge, EdgeId, Node, NodeId, NodeKind, SkeletonGraph};
use crate::ingest::DiscAnnotation;
use crate::morphometry::edge_direction_at_junction;
use crate::raster::Mask;
use crate::{Point, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum System {
    Artery,
    Vein,
}

impl System {
    pub const ALL: [System; 2] = [System::Artery, System::Vein];

    pub fn label(self) -> &'static str {
        match self {
            System::Artery => "artery",
            System::Vein => "vein",
        }
    }

    pub fn other(self) -> System {
        match self {
            System::Artery => System::Vein,
            System::Vein => System::Artery,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for System {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> serde::Deserialize<'de> for System {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::ALL
            .iter()
            .copied()
            .find(|sys| sys.label() == s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown system `{s}`")))
    }
}

/// A skeleton graph with disc attachments resolved. Rooting may split edges
/// at the attachment pixel, so the graph here supersedes the one passed to
/// [`find_roots`].
#[derive(Debug, Clone)]
pub struct RootedGraph {
    pub graph: SkeletonGraph,
    /// One root node per rooted component, ascending by node id.
    pub roots: Vec<NodeId>,
    /// Components that never approach the disc (peripheral fragments).
    pub unrooted_components: usize,
}

fn pixel_point(p: (usize, usize)) -> Point {
    Vec2::new(p.0 as Scalar, p.1 as Scalar)
}

/// Attach each vessel component to the disc. A component is rootable when it
/// comes within `attach_factor` disc radii of the disc center; its root is
/// the polyline pixel nearest the disc-boundary circle, splitting the edge
/// there when the pixel is interior. Components that stay farther out are
/// peripheral fragments and are left unrooted.
pub fn find_roots(
    graph: &SkeletonGraph,
    disc: &DiscAnnotation,
    attach_factor: Scalar,
    system: System,
) -> Result<RootedGraph> {
    let r = disc.radius();
    let n_nodes = graph.nodes.len();
    let mut uf: Vec<usize> = (0..n_nodes).collect();
    fn find(uf: &mut Vec<usize>, mut i: usize) -> usize {
        while uf[i] != i {
            uf[i] = uf[uf[i]];
            i = uf[i];
        }
        i
    }
    for e in &graph.edges {
        let (ra, rb) = (find(&mut uf, e.a.0), find(&mut uf, e.b.0));
        uf[ra] = rb;
    }

    // Best attachment candidate and closest approach per component.
    struct Cand {
        score: Scalar,
        raster: usize,
        edge: usize,
        k: usize,
    }
    let mut best: HashMap<usize, Cand> = HashMap::new();
    let mut min_dist: HashMap<usize, Scalar> = HashMap::new();
    let stride = graph_width_hint(graph);
    for e in &graph.edges {
        let comp = find(&mut uf, e.a.0);
        for (k, &p) in e.polyline.iter().enumerate() {
            let d = pixel_point(p).dist(disc.center);
            let score = (d - r).abs();
            let raster = p.1 * stride + p.0;
            let md = min_dist.entry(comp).or_insert(Scalar::INFINITY);
            if d < *md {
                *md = d;
            }
            let better = match best.get(&comp) {
                None => true,
                Some(c) => (score, raster, e.id.0, k) < (c.score, c.raster, c.edge, c.k),
            };
            if better {
                best.insert(
                    comp,
                    Cand {
                        score,
                        raster,
                        edge: e.id.0,
                        k,
                    },
                );
            }
        }
    }

    let mut rooted = graph.clone();
    let mut roots = Vec::new();
    let mut unrooted = 0usize;
    let mut cands: Vec<(usize, Cand)> = best.into_iter().collect();
    cands.sort_by_key(|(_, c)| (c.edge, c.k));
    for (comp, c) in cands {
        if min_dist[&comp] > attach_factor * r {
            unrooted += 1;
            continue;
        }
        let last = rooted.edges[c.edge].polyline.len() - 1;
        let root = if c.k == 0 {
            rooted.edges[c.edge].a
        } else if c.k == last {
            rooted.edges[c.edge].b
        } else {
            split_edge(&mut rooted, c.edge, c.k)
        };
        roots.push(root);
    }
    if roots.is_empty() {
        return Err(Error::NoRootedVessels {
            system: system.label(),
        });
    }
    roots.sort_by_key(|n| n.0);
    Ok(RootedGraph {
        graph: rooted,
        roots,
        unrooted_components: unrooted,
    })
}

// Raster tie-break only needs a consistent row stride; the true image width
// is not stored on the graph.
fn graph_width_hint(graph: &SkeletonGraph) -> usize {
    graph
        .edges
        .iter()
        .flat_map(|e| e.polyline.iter().map(|p| p.0 + 1))
        .max()
        .unwrap_or(1)
}

fn split_edge(g: &mut SkeletonGraph, e: usize, k: usize) -> NodeId {
    let (tail_poly, tail_radii, b_old) = {
        let edge = &mut g.edges[e];
        let tp = edge.polyline[k..].to_vec();
        let tr = edge.radii[k..].to_vec();
        edge.polyline.truncate(k + 1);
        edge.radii.truncate(k + 1);
        (tp, tr, edge.b)
    };
    let pk = tail_poly[0];
    let root = NodeId(g.nodes.len());
    g.nodes.push(Node {
        id: root,
        pos: pixel_point(pk),
        kind: NodeKind::Root,
        pixels: vec![pk],
    });
    g.edges[e].b = root;
    let id = EdgeId(g.edges.len());
    g.edges.push(Edge {
        id,
        a: root,
        b: b_old,
        polyline: tail_poly,
        radii: tail_radii,
    });
    root
}

/// One oriented edge of a [`VesselTree`]; `parent_node` is proximal.
#[derive(Debug, Clone)]
pub struct TreeEdge {
    pub edge: EdgeId,
    pub parent_node: NodeId,
    pub child_node: NodeId,
    /// Strahler order; 0 until [`assign_strahler`] runs.
    pub order: u32,
    pub mean_radius: Scalar,
    /// 2 × median polyline radius.
    pub diameter: Scalar,
    pub length_px: Scalar,
}

/// An acyclic vessel component oriented away from its disc root. Edges are
/// stored in breadth-first discovery order, so a parent edge always precedes
/// its daughters.
#[derive(Debug, Clone)]
pub struct VesselTree {
    pub system: System,
    pub root: NodeId,
    pub edges: Vec<TreeEdge>,
    pub root_diameter: Scalar,
    daughters: HashMap<usize, Vec<usize>>,
    parent_edge: HashMap<usize, usize>,
}

const NO_DAUGHTERS: &[usize] = &[];

impl VesselTree {
    /// Tree-edge indices emanating from `n`.
    pub fn daughters(&self, n: NodeId) -> &[usize] {
        self.daughters.get(&n.0).map_or(NO_DAUGHTERS, |v| v)
    }

    /// Tree-edge index arriving at `n`; None for the root.
    pub fn parent_edge(&self, n: NodeId) -> Option<usize> {
        self.parent_edge.get(&n.0).copied()
    }

    pub fn max_order(&self) -> u32 {
        self.edges.iter().map(|e| e.order).max().unwrap_or(0)
    }
}

/// Orient every rooted component outward from its root, breaking cycles by
/// dropping the thinnest (minimal mean radius) edge of each. Returns the
/// forest and the number of deleted cycle edges.
pub fn orient_and_break_cycles(rooted: &RootedGraph, system: System) -> (Vec<VesselTree>, usize) {
    let g = &rooted.graph;
    let n_edges = g.edges.len();
    let mean: Vec<Scalar> = g.edges.iter().map(Edge::mean_radius).collect();

    // Maximum spanning forest by mean radius keeps the thickest path across
    // every cycle, i.e. deletes each cycle's thinnest edge.
    let mut order: Vec<usize> = (0..n_edges).collect();
    order.sort_by(|&i, &j| {
        mean[j]
            .partial_cmp(&mean[i])
            .expect("radii are finite")
            .then(i.cmp(&j))
    });
    let mut uf: Vec<usize> = (0..g.nodes.len()).collect();
    fn find(uf: &mut Vec<usize>, mut i: usize) -> usize {
        while uf[i] != i {
            uf[i] = uf[uf[i]];
            i = uf[i];
        }
        i
    }
    let mut kept = vec![false; n_edges];
    for i in order {
        let (ra, rb) = (
            find(&mut uf, g.edges[i].a.0),
            find(&mut uf, g.edges[i].b.0),
        );
        if ra != rb {
            uf[ra] = rb;
            kept[i] = true;
        }
    }
    let root_comps: Vec<usize> = rooted
        .roots
        .iter()
        .map(|r| find(&mut uf, r.0))
        .collect();
    let deleted = (0..n_edges)
        .filter(|&i| !kept[i] && root_comps.contains(&find(&mut uf, g.edges[i].a.0)))
        .count();

    let inc = g.incidence();
    let mut used = vec![false; n_edges];
    let mut trees = Vec::with_capacity(rooted.roots.len());
    for &root in &rooted.roots {
        let mut edges: Vec<TreeEdge> = Vec::new();
        let mut daughters: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut parent_edge: HashMap<usize, usize> = HashMap::new();
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &eid in &inc[u.0] {
                if !kept[eid.0] || used[eid.0] {
                    continue;
                }
                used[eid.0] = true;
                let e = g.edge(eid);
                let v = e.other_end(u);
                let idx = edges.len();
                edges.push(TreeEdge {
                    edge: eid,
                    parent_node: u,
                    child_node: v,
                    order: 0,
                    mean_radius: mean[eid.0],
                    diameter: 2.0 * e.median_radius(),
                    length_px: e.length_px(),
                });
                daughters.entry(u.0).or_default().push(idx);
                parent_edge.insert(v.0, idx);
                queue.push_back(v);
            }
        }
        let root_diameter = daughters
            .get(&root.0)
            .map(|ds| {
                ds.iter()
                    .map(|&i| edges[i].diameter)
                    .fold(0.0, Scalar::max)
            })
            .unwrap_or(0.0);
        trees.push(VesselTree {
            system,
            root,
            edges,
            root_diameter,
            daughters,
            parent_edge,
        });
    }
    (trees, deleted)
}

/// Strahler orders for abstract segments: `daughters[i]` lists the daughter
/// segment indices of segment `i`. Leaves get order 1; a parent takes its
/// top daughter order, plus one when the top two tie.
pub fn strahler_orders(daughters: &[Vec<usize>]) -> Vec<u32> {
    let n = daughters.len();
    let mut order = vec![0u32; n];
    let mut is_daughter = vec![false; n];
    for ds in daughters {
        for &d in ds {
            is_daughter[d] = true;
        }
    }
    for root in 0..n {
        if is_daughter[root] {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        while let Some((seg, i)) = stack.pop() {
            if i < daughters[seg].len() {
                stack.push((seg, i + 1));
                stack.push((daughters[seg][i], 0));
            } else if daughters[seg].is_empty() {
                order[seg] = 1;
            } else {
                let (mut o1, mut o2) = (0u32, 0u32);
                for &d in &daughters[seg] {
                    let o = order[d];
                    if o > o1 {
                        o2 = o1;
                        o1 = o;
                    } else if o > o2 {
                        o2 = o;
                    }
                }
                order[seg] = if o1 == o2 { o1 + 1 } else { o1 };
            }
        }
    }
    order
}

pub fn assign_strahler(tree: &mut VesselTree) {
    let daughters: Vec<Vec<usize>> = tree
        .edges
        .iter()
        .map(|te| tree.daughters(te.child_node).to_vec())
        .collect();
    let orders = strahler_orders(&daughters);
    for (te, o) in tree.edges.iter_mut().zip(orders) {
        te.order = o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JunctionKind {
    Branching,
    Bifurcation,
    CrossingExcluded,
}

impl JunctionKind {
    pub fn label(self) -> &'static str {
        match self {
            JunctionKind::Branching => "branching",
            JunctionKind::Bifurcation => "bifurcation",
            JunctionKind::CrossingExcluded => "crossing_excluded",
        }
    }
}

impl Serialize for JunctionKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

/// One classified junction. Trifurcations yield several entries for the same
/// node: the two largest-diameter daughters form the primary pair and every
/// extra daughter is a Branching against that largest daughter.
#[derive(Debug, Clone)]
pub struct JunctionClass {
    pub node: NodeId,
    pub kind: JunctionKind,
    pub parent_edge: EdgeId,
    /// The daughter pair measured (diameter-descending); all daughters for
    /// CrossingExcluded.
    pub daughters: Vec<EdgeId>,
}

/// Classify every junction (≥ 2 daughters; the root attachment is not a
/// junction). `other_dilated` is the other system's mask already dilated by
/// the crossing tolerance.
pub fn classify_junctions(
    tree: &VesselTree,
    graph: &SkeletonGraph,
    other_dilated: &Mask,
    collinear_tol_deg: Scalar,
    direction_window_px: usize,
) -> Vec<JunctionClass> {
    let mut out = Vec::new();
    for te in &tree.edges {
        let v = te.child_node;
        let ds = tree.daughters(v);
        if ds.len() < 2 {
            continue;
        }
        let parent = te.edge;
        let window = direction_window_px.max(te.diameter.ceil() as usize);

        let overlap = graph
            .node(v)
            .pixels
            .iter()
            .any(|&(x, y)| other_dilated.get(x, y));
        let crossing = overlap
            || (ds.len() == 3
                && collinear_x(tree, graph, v, te, ds, collinear_tol_deg, window));
        if crossing {
            out.push(JunctionClass {
                node: v,
                kind: JunctionKind::CrossingExcluded,
                parent_edge: parent,
                daughters: ds.iter().map(|&i| tree.edges[i].edge).collect(),
            });
            continue;
        }

        let mut by_diameter: Vec<usize> = ds.to_vec();
        by_diameter.sort_by(|&i, &j| {
            tree.edges[j]
                .diameter
                .partial_cmp(&tree.edges[i].diameter)
                .expect("diameters are finite")
                .then(tree.edges[i].edge.0.cmp(&tree.edges[j].edge.0))
        });
        let (d0, d1) = (&tree.edges[by_diameter[0]], &tree.edges[by_diameter[1]]);
        let kind = if d0.order == d1.order {
            JunctionKind::Bifurcation
        } else {
            JunctionKind::Branching
        };
        out.push(JunctionClass {
            node: v,
            kind,
            parent_edge: parent,
            daughters: vec![d0.edge, d1.edge],
        });
        for &extra in &by_diameter[2..] {
            out.push(JunctionClass {
                node: v,
                kind: JunctionKind::Branching,
                parent_edge: parent,
                daughters: vec![tree.edges[extra].edge, d0.edge],
            });
        }
    }
    out
}

// Degree-4 self-crossing: the four tangents pair into two near-collinear
// through-lines under some perfect matching.
fn collinear_x(
    tree: &VesselTree,
    graph: &SkeletonGraph,
    v: NodeId,
    parent: &TreeEdge,
    ds: &[usize],
    tol_deg: Scalar,
    window: usize,
) -> bool {
    let ids = [
        parent.edge,
        tree.edges[ds[0]].edge,
        tree.edges[ds[1]].edge,
        tree.edges[ds[2]].edge,
    ];
    let mut tangents = Vec::with_capacity(4);
    for id in ids {
        match edge_direction_at_junction(graph, id, v, window, 0.0) {
            Ok(t) => tangents.push(t),
            Err(_) => return false,
        }
    }
    let collinear = |i: usize, j: usize| {
        angle_between_deg(tangents[i], tangents[j])
            .map(|a| a >= 180.0 - tol_deg)
            .unwrap_or(false)
    };
    const MATCHINGS: [[(usize, usize); 2]; 3] =
        [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];
    MATCHINGS
        .iter()
        .any(|m| m.iter().all(|&(i, j)| collinear(i, j)))
}

/// JSON dump of a system's forest with its junction classes (parallel to
/// `trees`).
pub fn forest_to_json_string(
    system: System,
    trees: &[VesselTree],
    classes: &[Vec<JunctionClass>],
) -> String {
    #[derive(Serialize)]
    struct EdgeDump {
        id: usize,
        parent: usize,
        order: u32,
        mean_radius_px: f64,
        length_px: f64,
    }
    #[derive(Serialize)]
    struct JunctionDump {
        id: usize,
        class: &'static str,
    }
    #[derive(Serialize)]
    struct ForestDump {
        system: &'static str,
        roots: Vec<usize>,
        edges: Vec<EdgeDump>,
        junctions: Vec<JunctionDump>,
    }
    let dump = ForestDump {
        system: system.label(),
        roots: trees.iter().map(|t| t.root.0).collect(),
        edges: trees
            .iter()
            .flat_map(|t| {
                t.edges.iter().map(|te| EdgeDump {
                    id: te.edge.0,
                    parent: te.parent_node.0,
                    order: te.order,
                    mean_radius_px: te.mean_radius,
                    length_px: te.length_px,
                })
            })
            .collect(),
        junctions: classes
            .iter()
            .flat_map(|cs| {
                cs.iter().map(|c| JunctionDump {
                    id: c.node.0,
                    class: c.kind.label(),
                })
            })
            .collect(),
    };
    serde_json::to_string_pretty(&dump).expect("forest dump serializes")
}
