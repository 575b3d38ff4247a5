//! Measurement-zone morphometry: MA, BA, BC, BEA, BEC per image and system.

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::geom::{angle_between_deg, fit_direction, Vec2};
use crate::graph::{extract_graph, Edge, EdgeId, NodeId, SkeletonGraph};
use crate::ingest::{DiscAnnotation, LabeledFundus};
use crate::raster::Mask;
use crate::skeleton::{preprocess_mask, thin};
use crate::topology::{
    assign_strahler, classify_junctions, find_roots, orient_and_break_cycles, JunctionClass,
    JunctionKind, RootedGraph, System, VesselTree,
};
use crate::{Point, Scalar};

/// Annulus in which junction parameters are measured: radial distance from
/// the disc center between `inner_dd` and `outer_dd` disc diameters,
/// inclusive. The defaults (1.0, 2.5) are 0.5–2.0 DD from the disc edge.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementZone {
    pub disc: DiscAnnotation,
    pub inner_dd: Scalar,
    pub outer_dd: Scalar,
}

impl MeasurementZone {
    pub fn new(disc: DiscAnnotation, inner_dd: Scalar, outer_dd: Scalar) -> Result<Self> {
        if !(inner_dd > 0.0 && outer_dd > inner_dd) {
            return Err(crate::Error::Config(format!(
                "measurement zone needs 0 < inner < outer, got [{inner_dd}, {outer_dd}]"
            )));
        }
        Ok(MeasurementZone {
            disc,
            inner_dd,
            outer_dd,
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        let d = p.dist(self.disc.center);
        let dd = self.disc.diameter_px;
        d >= self.inner_dd * dd && d <= self.outer_dd * dd
    }
}

/// Direction of the least-squares line through a `window`-pixel run of the
/// polyline of `edge` leaving `node`, oriented away from the node centroid.
/// Pixels within `skip_px` of the node are left out first — the skeleton
/// there still curves through the junction blob — unless skipping would
/// leave fewer than two pixels.
pub fn edge_direction_at_junction(
    graph: &SkeletonGraph,
    edge: EdgeId,
    node: NodeId,
    window: usize,
    skip_px: Scalar,
) -> Result<Point> {
    let e = graph.edge(edge);
    let poly = e.polyline_from(node);
    let node_pos = graph.node(node).pos;
    let as_point = |&(x, y): &(usize, usize)| Vec2::new(x as Scalar, y as Scalar);
    let mut start = poly
        .iter()
        .position(|p| as_point(p).dist(node_pos) >= skip_px)
        .unwrap_or(poly.len());
    if poly.len() - start < 2 {
        start = 0;
    }
    let n = (poly.len() - start).min(window.max(2));
    let pts: Vec<Point> = poly[start..start + n].iter().map(as_point).collect();
    fit_direction(&pts, node_pos)
}

/// (d1² + d2²) / d0² with d0 the parent diameter.
pub fn branching_coefficient(d0: Scalar, d1: Scalar, d2: Scalar) -> Scalar {
    (d1 * d1 + d2 * d2) / (d0 * d0)
}

/// Vessel diameter as 2 × median distance-transform radius, skipping
/// polyline pixels within `exclude_px` of either endpoint node where the
/// transform is inflated by the junction blob. Falls back to every pixel
/// when the exclusion empties the run.
pub fn edge_diameter_px(edge: &Edge, a_pos: Point, b_pos: Point, exclude_px: Scalar) -> Scalar {
    let interior: Vec<Scalar> = edge
        .polyline
        .iter()
        .zip(&edge.radii)
        .filter(|(&(x, y), _)| {
            let p = Vec2::new(x as Scalar, y as Scalar);
            p.dist(a_pos) >= exclude_px && p.dist(b_pos) >= exclude_px
        })
        .map(|(_, &r)| r)
        .collect();
    let vals = if interior.is_empty() {
        edge.radii.clone()
    } else {
        interior
    };
    2.0 * median(vals)
}

fn median(mut v: Vec<Scalar>) -> Scalar {
    v.sort_by(|a, b| a.partial_cmp(b).expect("radii are finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct JunctionCounts {
    pub branching: usize,
    pub bifurcation: usize,
    pub crossing_excluded: usize,
    /// Junctions in zone whose daughter directions could not be fitted.
    pub skipped: usize,
}

/// One in-zone junction with its measured values, kept alongside the flat
/// parameter lists so callers can match junctions back to positions.
#[derive(Debug, Clone)]
pub struct MeasuredJunction {
    pub node: NodeId,
    pub position: Point,
    pub kind: JunctionKind,
    pub angle_deg: Option<Scalar>,
    pub coefficient: Option<Scalar>,
}

#[derive(Debug, Clone, Default)]
pub struct BranchMeasurements {
    pub ba_deg: Vec<Scalar>,
    pub bc: Vec<Scalar>,
    pub bea_deg: Vec<Scalar>,
    pub bec: Vec<Scalar>,
    pub counts: JunctionCounts,
    pub junctions: Vec<MeasuredJunction>,
}

impl BranchMeasurements {
    fn extend(&mut self, other: BranchMeasurements) {
        self.ba_deg.extend(other.ba_deg);
        self.bc.extend(other.bc);
        self.bea_deg.extend(other.bea_deg);
        self.bec.extend(other.bec);
        self.counts.branching += other.counts.branching;
        self.counts.bifurcation += other.counts.bifurcation;
        self.counts.crossing_excluded += other.counts.crossing_excluded;
        self.counts.skipped += other.counts.skipped;
        self.junctions.extend(other.junctions);
    }
}

/// Branch angles and coefficients for every classified junction inside the
/// zone. Branching junctions feed (BA, BC), bifurcations (BEA, BEC).
pub fn measure_branch_params(
    tree: &VesselTree,
    classes: &[JunctionClass],
    graph: &SkeletonGraph,
    zone: &MeasurementZone,
    direction_window_px: usize,
) -> BranchMeasurements {
    let mut out = BranchMeasurements::default();
    for class in classes {
        let node = class.node;
        let position = graph.node(node).pos;
        if !zone.contains(position) {
            continue;
        }
        let unmeasured = |kind| MeasuredJunction {
            node,
            position,
            kind,
            angle_deg: None,
            coefficient: None,
        };
        if class.kind == JunctionKind::CrossingExcluded {
            out.counts.crossing_excluded += 1;
            out.junctions.push(unmeasured(JunctionKind::CrossingExcluded));
            continue;
        }
        let parent = graph.edge(class.parent_edge);
        // Provisional parent diameter sets the exclusion distance, the
        // tangent window, and how far the tangent fit stands off from the
        // junction blob: the fork's merged centerline extends roughly one
        // daughter radius over sin(θ/2) from the vertex, which the parent
        // diameter bounds for any daughter angle ≥ 60°. The refined value
        // below feeds the coefficient.
        let provisional = 2.0 * parent.median_radius();
        let window = direction_window_px.max((2.0 * provisional).ceil() as usize);
        let fit_dirs = |standoff: Scalar| -> Vec<Point> {
            class
                .daughters
                .iter()
                .filter_map(|&d| edge_direction_at_junction(graph, d, node, window, standoff).ok())
                .collect()
        };
        let mut dirs = fit_dirs(provisional);
        // An acute fork's merge zone outruns the parent diameter, so size a
        // second pass from the first-pass angle estimate.
        if let [u, v] = dirs[..] {
            if let Ok(first) = angle_between_deg(u, v) {
                if first < 60.0 {
                    let r = class
                        .daughters
                        .iter()
                        .map(|&d| graph.edge(d).median_radius())
                        .fold(0.0, Scalar::max);
                    let need = (r / (first.to_radians() / 2.0).sin()).min(3.0 * provisional);
                    if need > provisional {
                        let refit = fit_dirs(need);
                        if refit.len() == 2 {
                            dirs = refit;
                        }
                    }
                }
            }
        }
        let angle = match &dirs[..] {
            [u, v] => match angle_between_deg(*u, *v) {
                Ok(a) => a,
                Err(_) => {
                    out.counts.skipped += 1;
                    out.junctions.push(unmeasured(class.kind));
                    continue;
                }
            },
            _ => {
                out.counts.skipped += 1;
                out.junctions.push(unmeasured(class.kind));
                continue;
            }
        };
        let diameter = |id: EdgeId| {
            let e = graph.edge(id);
            edge_diameter_px(
                e,
                graph.node(e.a).pos,
                graph.node(e.b).pos,
                provisional,
            )
        };
        let d0 = diameter(class.parent_edge);
        let coeff =
            branching_coefficient(d0, diameter(class.daughters[0]), diameter(class.daughters[1]));
        match class.kind {
            JunctionKind::Branching => {
                out.ba_deg.push(angle);
                out.bc.push(coeff);
                out.counts.branching += 1;
            }
            JunctionKind::Bifurcation => {
                out.bea_deg.push(angle);
                out.bec.push(coeff);
                out.counts.bifurcation += 1;
            }
            JunctionKind::CrossingExcluded => unreachable!("handled above"),
        }
        out.junctions.push(MeasuredJunction {
            node,
            position,
            kind: class.kind,
            angle_deg: Some(angle),
            coefficient: Some(coeff),
        });
        let _ = tree;
    }
    out
}

/// Main angle: pick the largest-root-diameter tree in each hemifield (split
/// by the horizontal through the disc center), walk each from the root along
/// edges carrying the tree's maximal Strahler order, and measure the angle
/// at the disc center between the rays to the two distal nodes. Absent when
/// a hemifield has no tree or a ray degenerates.
pub fn measure_main_angle(
    trees: &[VesselTree],
    graph: &SkeletonGraph,
    disc: DiscAnnotation,
) -> Option<Scalar> {
    let hemifield_best = |superior: bool| {
        trees
            .iter()
            .filter(|t| {
                let y = graph.node(t.root).pos.y;
                if superior {
                    y < disc.center.y
                } else {
                    y >= disc.center.y
                }
            })
            .fold(None::<&VesselTree>, |best, t| match best {
                Some(b) if b.root_diameter >= t.root_diameter => Some(b),
                _ => Some(t),
            })
    };
    let upper = hemifield_best(true)?;
    let lower = hemifield_best(false)?;
    let ray = |tree: &VesselTree| {
        let distal = distal_of_max_order_path(tree);
        graph.node(distal).pos.sub(disc.center)
    };
    angle_between_deg(ray(upper), ray(lower)).ok()
}

// Follows maximal-order edges outward; ties (possible at a split root whose
// two sides reach the same order) go to the thicker, then longer, daughter.
fn distal_of_max_order_path(tree: &VesselTree) -> NodeId {
    let max_order = tree.max_order();
    let mut at = tree.root;
    let mut distal = tree.root;
    loop {
        let next = tree
            .daughters(at)
            .iter()
            .map(|&i| &tree.edges[i])
            .filter(|te| te.order == max_order)
            .fold(None::<&crate::topology::TreeEdge>, |best, te| match best {
                Some(b)
                    if (b.diameter, b.length_px, std::cmp::Reverse(b.edge.0))
                        >= (te.diameter, te.length_px, std::cmp::Reverse(te.edge.0)) =>
                {
                    Some(b)
                }
                _ => Some(te),
            });
        match next {
            Some(te) => {
                distal = te.child_node;
                at = te.child_node;
            }
            None => return distal,
        }
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct MorphometryRecord {
    pub id: String,
    pub system: System,
    pub ma_deg: Option<Scalar>,
    pub ba_deg: Vec<Scalar>,
    pub bc: Vec<Scalar>,
    pub bea_deg: Vec<Scalar>,
    pub bec: Vec<Scalar>,
    pub counts: JunctionCounts,
}

impl MorphometryRecord {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

/// Everything produced for one vascular system of one image; `record` is the
/// part that feeds statistics, the rest supports dumps and diagnostics.
#[derive(Debug, Clone)]
pub struct SystemAnalysis {
    pub record: MorphometryRecord,
    pub rooted: RootedGraph,
    pub trees: Vec<VesselTree>,
    pub classes: Vec<Vec<JunctionClass>>,
    pub junctions: Vec<MeasuredJunction>,
    pub deleted_cycle_edges: usize,
}

#[derive(Debug)]
pub struct ImageAnalysis {
    pub id: String,
    pub artery: Result<SystemAnalysis>,
    pub vein: Result<SystemAnalysis>,
}

/// Full per-image pipeline, each system independently: preprocess → thin →
/// graph → roots → orient → Strahler → classify → zone measurements. One
/// system failing (say, no vessels reach the disc) leaves the other intact.
pub fn analyze_image(rec: &LabeledFundus, cfg: &RunConfig) -> Result<ImageAnalysis> {
    let zone = MeasurementZone::new(rec.disc, cfg.zone_inner_dd, cfg.zone_outer_dd)?;
    let artery_pre = preprocess_mask(&rec.artery_mask, &cfg.preprocess);
    let vein_pre = preprocess_mask(&rec.vein_mask, &cfg.preprocess);
    let artery_dil = artery_pre.dilated(cfg.crossing_dilation_px);
    let vein_dil = vein_pre.dilated(cfg.crossing_dilation_px);
    Ok(ImageAnalysis {
        id: rec.id.clone(),
        artery: analyze_system(&rec.id, System::Artery, &artery_pre, &vein_dil, &zone, cfg),
        vein: analyze_system(&rec.id, System::Vein, &vein_pre, &artery_dil, &zone, cfg),
    })
}

fn analyze_system(
    id: &str,
    system: System,
    pre: &Mask,
    other_dilated: &Mask,
    zone: &MeasurementZone,
    cfg: &RunConfig,
) -> Result<SystemAnalysis> {
    let skel = thin(pre);
    let graph = extract_graph(&skel, pre);
    let rooted = find_roots(&graph, &zone.disc, cfg.root_attach_radius_factor, system)?;
    let (mut trees, deleted_cycle_edges) = orient_and_break_cycles(&rooted, system);
    for t in &mut trees {
        assign_strahler(t);
    }
    let classes: Vec<Vec<JunctionClass>> = trees
        .iter()
        .map(|t| {
            classify_junctions(
                t,
                &rooted.graph,
                other_dilated,
                cfg.collinear_tol_deg,
                cfg.direction_window_px,
            )
        })
        .collect();
    let mut measures = BranchMeasurements::default();
    for (t, cs) in trees.iter().zip(&classes) {
        measures.extend(measure_branch_params(
            t,
            cs,
            &rooted.graph,
            zone,
            cfg.direction_window_px,
        ));
    }
    let ma_deg = measure_main_angle(&trees, &rooted.graph, zone.disc);
    let record = MorphometryRecord {
        id: id.to_string(),
        system,
        ma_deg,
        ba_deg: measures.ba_deg,
        bc: measures.bc,
        bea_deg: measures.bea_deg,
        bec: measures.bec,
        counts: measures.counts,
    };
    Ok(SystemAnalysis {
        record,
        rooted,
        trees,
        classes,
        junctions: measures.junctions,
        deleted_cycle_edges,
    })
}

fn mean(xs: &[Scalar]) -> Option<Scalar> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<Scalar>() / xs.len() as Scalar)
    }
}

/// Flattened CSV, one row per image × system; list-valued parameters are
/// summarized as mean and count.
pub fn records_to_csv_string(records: &[MorphometryRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "system",
        "ma_deg",
        "ba_deg_mean",
        "ba_n",
        "bc_mean",
        "bc_n",
        "bea_deg_mean",
        "bea_n",
        "bec_mean",
        "bec_n",
        "branching",
        "bifurcation",
        "crossing_excluded",
        "skipped",
    ])
    .map_err(csv_err)?;
    let fmt = |v: Option<Scalar>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.id.clone(),
            r.system.label().to_string(),
            fmt(r.ma_deg),
            fmt(mean(&r.ba_deg)),
            r.ba_deg.len().to_string(),
            fmt(mean(&r.bc)),
            r.bc.len().to_string(),
            fmt(mean(&r.bea_deg)),
            r.bea_deg.len().to_string(),
            fmt(mean(&r.bec)),
            r.bec.len().to_string(),
            r.counts.branching.to_string(),
            r.counts.bifurcation.to_string(),
            r.counts.crossing_excluded.to_string(),
            r.counts.skipped.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err_str(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| csv_err_str(e.to_string()))
}

pub fn records_to_json_string(records: &[MorphometryRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

fn csv_err(e: csv::Error) -> crate::Error {
    csv_err_str(e.to_string())
}

fn csv_err_str(msg: String) -> crate::Error {
    crate::Error::Input(format!("metrics csv: {msg}"))
}
