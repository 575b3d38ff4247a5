//! Skeleton-to-graph extraction: nodes at endpoints and junction clusters,
//! edges as traced centerline chains carrying per-pixel radius samples.

use serde::Serialize;

use crate::geom::Vec2;
use crate::raster::{neighbors8, Mask};
use crate::skeleton::Skeleton;
use crate::{Point, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    Endpoint,
    Junction,
    /// Disc attachment inserted by rooting when it splits an edge.
    Root,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
    pub kind: NodeKind,
    /// Skeleton pixels merged into this node; a single pixel for endpoints,
    /// the whole cluster for junctions.
    pub pixels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    /// 8-connected chain including the attachment pixel at each end.
    pub polyline: Vec<(usize, usize)>,
    /// Distance-transform radius at each polyline pixel.
    pub radii: Vec<Scalar>,
}

impl Edge {
    pub fn length_px(&self) -> Scalar {
        self.polyline
            .windows(2)
            .map(|w| {
                let dx = w[1].0 as Scalar - w[0].0 as Scalar;
                let dy = w[1].1 as Scalar - w[0].1 as Scalar;
                (dx * dx + dy * dy).sqrt()
            })
            .sum()
    }

    pub fn mean_radius(&self) -> Scalar {
        self.radii.iter().sum::<Scalar>() / self.radii.len() as Scalar
    }

    pub fn median_radius(&self) -> Scalar {
        let mut v = self.radii.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("radii are finite"));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    pub fn other_end(&self, n: NodeId) -> NodeId {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }

    /// Polyline oriented to start at node `n`'s end.
    pub fn polyline_from(&self, n: NodeId) -> Vec<(usize, usize)> {
        if n == self.a {
            self.polyline.clone()
        } else {
            self.polyline.iter().rev().copied().collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkeletonGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Pure cycles (every pixel degree 2) have no node to anchor an edge
    /// and are dropped.
    pub dropped_rings: usize,
    /// Isolated skeleton pixels (degree 0) are dropped.
    pub dropped_isolated: usize,
}

impl SkeletonGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    /// Incident edge ids per node; self-loops appear twice.
    pub fn incidence(&self) -> Vec<Vec<EdgeId>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            inc[e.a.0].push(e.id);
            inc[e.b.0].push(e.id);
        }
        inc
    }

    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct NodeDump {
            id: usize,
            x: f64,
            y: f64,
            kind: &'static str,
        }
        #[derive(Serialize)]
        struct EdgeDump {
            id: usize,
            a: usize,
            b: usize,
            length_px: f64,
            mean_radius_px: f64,
        }
        #[derive(Serialize)]
        struct GraphDump {
            nodes: Vec<NodeDump>,
            edges: Vec<EdgeDump>,
        }
        let dump = GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id.0,
                    x: n.pos.x,
                    y: n.pos.y,
                    kind: match n.kind {
                        NodeKind::Endpoint => "endpoint",
                        NodeKind::Junction => "junction",
                        NodeKind::Root => "root",
                    },
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDump {
                    id: e.id.0,
                    a: e.a.0,
                    b: e.b.0,
                    length_px: e.length_px(),
                    mean_radius_px: e.mean_radius(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("graph dump serializes")
    }
}

fn centroid(pixels: &[(usize, usize)]) -> Point {
    let n = pixels.len() as Scalar;
    let sx: Scalar = pixels.iter().map(|p| p.0 as Scalar).sum();
    let sy: Scalar = pixels.iter().map(|p| p.1 as Scalar).sum();
    Vec2::new(sx / n, sy / n)
}

/// Extract the node/edge graph of a skeleton. `mask` is the raster the
/// skeleton was thinned from; its distance transform provides the radius
/// samples. Junction pixels within Chebyshev distance 2 merge into one
/// node, and junction-junction edges shorter than 3 px (thinning artifacts,
/// including intra-cluster stubs) are contracted away.
pub fn extract_graph(skel: &Skeleton, mask: &Mask) -> SkeletonGraph {
    let m = skel.mask();
    let (w, h) = (m.width(), m.height());
    assert_eq!(
        (mask.width(), mask.height()),
        (w, h),
        "skeleton and mask dimensions differ"
    );
    let edt = mask.edt();

    let mut deg = vec![0u8; w * h];
    for (x, y) in m.pixels_fg() {
        deg[y * w + x] = neighbors8(x, y, w, h).filter(|&(nx, ny)| m.get(nx, ny)).count() as u8;
    }

    // Assign node ownership per pixel: endpoints singly, junction pixels by
    // Chebyshev-2 clustering, raster order of first encounter.
    const UNASSIGNED: usize = usize::MAX;
    let mut node_of = vec![UNASSIGNED; w * h];
    let mut node_pixels: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut node_kind: Vec<NodeKind> = Vec::new();
    let mut dropped_isolated = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !m.get(x, y) || node_of[i] != UNASSIGNED {
                continue;
            }
            match deg[i] {
                0 => dropped_isolated += 1,
                1 => {
                    node_of[i] = node_pixels.len();
                    node_pixels.push(vec![(x, y)]);
                    node_kind.push(NodeKind::Endpoint);
                }
                2 => {}
                _ => {
                    let id = node_pixels.len();
                    let mut cluster = Vec::new();
                    let mut stack = vec![(x, y)];
                    node_of[i] = id;
                    while let Some((cx, cy)) = stack.pop() {
                        cluster.push((cx, cy));
                        for dy in -2i64..=2 {
                            for dx in -2i64..=2 {
                                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                                    continue;
                                }
                                let (nx, ny) = (nx as usize, ny as usize);
                                let j = ny * w + nx;
                                if m.get(nx, ny) && deg[j] >= 3 && node_of[j] == UNASSIGNED {
                                    node_of[j] = id;
                                    stack.push((nx, ny));
                                }
                            }
                        }
                    }
                    cluster.sort_unstable_by_key(|&(px, py)| py * w + px);
                    node_pixels.push(cluster);
                    node_kind.push(NodeKind::Junction);
                }
            }
        }
    }

    // Trace maximal chains between node pixels.
    struct RawEdge {
        a: usize,
        b: usize,
        polyline: Vec<(usize, usize)>,
    }
    let mut raw_edges: Vec<RawEdge> = Vec::new();
    let mut chain_visited = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !m.get(x, y) || node_of[i] == UNASSIGNED {
                continue;
            }
            let a = node_of[i];
            for (nx, ny) in neighbors8(x, y, w, h) {
                if !m.get(nx, ny) {
                    continue;
                }
                let j = ny * w + nx;
                if node_of[j] != UNASSIGNED {
                    // Direct node-node adjacency; trace once, skip pairs
                    // inside one cluster.
                    if node_of[j] != a && i < j {
                        raw_edges.push(RawEdge {
                            a,
                            b: node_of[j],
                            polyline: vec![(x, y), (nx, ny)],
                        });
                    }
                    continue;
                }
                if chain_visited[j] {
                    continue;
                }
                chain_visited[j] = true;
                let mut polyline = vec![(x, y), (nx, ny)];
                let (mut px, mut py) = (x, y);
                let (mut cx, mut cy) = (nx, ny);
                let b = loop {
                    let next = neighbors8(cx, cy, w, h)
                        .find(|&(qx, qy)| m.get(qx, qy) && (qx, qy) != (px, py))
                        .expect("chain pixel has a continuation");
                    let qj = next.1 * w + next.0;
                    polyline.push(next);
                    if node_of[qj] != UNASSIGNED {
                        break node_of[qj];
                    }
                    chain_visited[qj] = true;
                    (px, py) = (cx, cy);
                    (cx, cy) = next;
                };
                raw_edges.push(RawEdge { a, b, polyline });
            }
        }
    }

    // Remaining untouched degree-2 pixels belong to pure rings.
    let mut dropped_rings = 0usize;
    let mut ring_seen = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !m.get(x, y)
                || deg[i] == 0
                || node_of[i] != UNASSIGNED
                || chain_visited[i]
                || ring_seen[i]
            {
                continue;
            }
            dropped_rings += 1;
            let mut stack = vec![(x, y)];
            ring_seen[i] = true;
            while let Some((cx, cy)) = stack.pop() {
                for (qx, qy) in neighbors8(cx, cy, w, h) {
                    let j = qy * w + qx;
                    if m.get(qx, qy) && !ring_seen[j] && node_of[j] == UNASSIGNED {
                        ring_seen[j] = true;
                        stack.push((qx, qy));
                    }
                }
            }
        }
    }

    // Contract short junction-junction edges (self-loops included); their
    // pixels join the junction cluster. An edge no longer than the blob
    // radius it runs through is a fragment of one junction, not a segment —
    // acute forks split this way, with the side branch rooted a few pixels
    // down a stub that hugs the merged ribbon.
    let poly_len = |poly: &[(usize, usize)]| -> f64 {
        poly.windows(2)
            .map(|s| {
                let dx = s[1].0 as f64 - s[0].0 as f64;
                let dy = s[1].1 as f64 - s[0].1 as f64;
                (dx * dx + dy * dy).sqrt()
            })
            .sum()
    };
    let mut parent: Vec<usize> = (0..node_pixels.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let up = parent[c];
            parent[c] = r;
            c = up;
        }
        r
    }
    let mut edge_removed = vec![false; raw_edges.len()];
    loop {
        let mut changed = false;
        for (idx, e) in raw_edges.iter().enumerate() {
            if edge_removed[idx] {
                continue;
            }
            let ra = find(&mut parent, e.a);
            let rb = find(&mut parent, e.b);
            let blob = e
                .polyline
                .iter()
                .map(|&(px, py)| edt[py * w + px])
                .fold(0.0, Scalar::max);
            if node_kind[ra] == NodeKind::Junction
                && node_kind[rb] == NodeKind::Junction
                && poly_len(&e.polyline) < (1.5 * blob).max(3.0)
            {
                edge_removed[idx] = true;
                let root = ra.min(rb);
                parent[ra.max(rb)] = root;
                let interior: Vec<(usize, usize)> =
                    e.polyline[1..e.polyline.len() - 1].to_vec();
                node_pixels[root].extend(interior);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Compact to final ids: merged clusters fold into their root.
    let roots: Vec<usize> = (0..node_pixels.len())
        .map(|i| find(&mut parent, i))
        .collect();
    for i in 0..node_pixels.len() {
        if roots[i] != i {
            let moved = std::mem::take(&mut node_pixels[i]);
            node_pixels[roots[i]].extend(moved);
        }
    }
    let mut final_id = vec![usize::MAX; node_pixels.len()];
    let mut nodes = Vec::new();
    for i in 0..node_pixels.len() {
        if roots[i] != i {
            continue;
        }
        let mut pixels = std::mem::take(&mut node_pixels[i]);
        pixels.sort_unstable_by_key(|&(px, py)| py * w + px);
        pixels.dedup();
        let id = NodeId(nodes.len());
        final_id[i] = id.0;
        nodes.push(Node {
            id,
            pos: centroid(&pixels),
            kind: node_kind[i],
            pixels,
        });
    }

    let mut edges = Vec::new();
    for (idx, e) in raw_edges.into_iter().enumerate() {
        if edge_removed[idx] {
            continue;
        }
        let a = NodeId(final_id[roots[e.a]]);
        let b = NodeId(final_id[roots[e.b]]);
        let radii: Vec<Scalar> = e
            .polyline
            .iter()
            .map(|&(px, py)| edt[py * w + px].max(0.5))
            .collect();
        edges.push(Edge {
            id: EdgeId(edges.len()),
            a,
            b,
            polyline: e.polyline,
            radii,
        });
    }

    SkeletonGraph {
        nodes,
        edges,
        dropped_rings,
        dropped_isolated,
    }
}
