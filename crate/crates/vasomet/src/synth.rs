//! Scripted vascular forests with exact ground truth, a capped-stroke
//! rasterizer that turns them into mask pairs, cohort simulation with
//! injected group effects, and scoring of pipeline output against truth.
//!
//! Tree shape: each trunk runs outward from the disc edge and sheds one
//! terminal side twig per level while the main line continues (a "spine").
//! Scripted Strahler orders make every spine junction a Branching except the
//! deepest, whose two order-1 daughters form the one Bifurcation per trunk.
//! The spine strictly dominates its twigs in order (and in diameter at the
//! deepest junction), so the measured main-angle walk is unambiguous.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{angle_between_deg, Vec2};
use crate::ingest::{
    classify_refraction, write_manifest, DiscAnnotation, Eye, LabeledFundus, ManifestEntry,
    RefractionGroup,
};
use crate::morphometry::{branching_coefficient, ImageAnalysis, SystemAnalysis};
use crate::raster::Mask;
use crate::topology::{JunctionKind, System};
use crate::{Point, Scalar};

/// One tree root on the disc rim.
#[derive(Debug, Clone)]
pub struct TrunkSpec {
    /// Polar angle of the origin on the disc edge, degrees from +x with y
    /// pointing down (negative angles are superior).
    pub polar_deg: Scalar,
    /// Heading offset from radially-outward; 0 leaves the disc straight.
    pub elevation_deg: Scalar,
    pub radius_px: Scalar,
}

/// One branching level along a spine.
#[derive(Debug, Clone)]
pub struct LevelSpec {
    /// Opening angle between the two daughters.
    pub daughter_angle_deg: Scalar,
    /// Continuing daughter length; the last level's is the spine tip.
    pub main_len_px: Scalar,
    /// Terminal side-twig length.
    pub side_len_px: Scalar,
}

#[derive(Debug, Clone)]
pub struct BranchingProgram {
    /// Disc edge to the first junction.
    pub trunk_len_px: Scalar,
    pub levels: Vec<LevelSpec>,
    /// Murray exponent e: r0^e = r1^e + r2^e at every junction.
    pub murray_exponent: Scalar,
    /// Side-twig radius as a fraction of the parent segment radius; the main
    /// daughter takes the Murray remainder.
    pub side_fraction: Scalar,
}

#[derive(Debug, Clone, Default)]
pub struct NoiseSpec {
    /// SD of per-junction daughter-angle jitter.
    pub angle_jitter_deg: Scalar,
    /// SD of multiplicative per-segment radius jitter.
    pub radius_jitter_frac: Scalar,
    /// SD of the per-system main angle; each trunk is rotated about the disc
    /// center by N(0, this/√2).
    pub ma_jitter_deg: Scalar,
}

/// Scripted A/V overlap: a bar of the *other* system is drawn straight
/// through the named junction so the pipeline must exclude it.
#[derive(Debug, Clone)]
pub struct CrossingSpec {
    /// System owning the crossed junction.
    pub system: System,
    pub trunk: usize,
    pub level: usize,
    /// Absolute bar direction, degrees.
    pub angle_deg: Scalar,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub disc: DiscAnnotation,
    pub arteries: Vec<TrunkSpec>,
    pub veins: Vec<TrunkSpec>,
    pub program: BranchingProgram,
    pub noise: NoiseSpec,
    pub crossings: Vec<CrossingSpec>,
    pub seed: u64,
}

const CROSSING_BAR_HALF_LEN_PX: Scalar = 24.0;
const CROSSING_BAR_RADIUS_PX: Scalar = 2.5;

impl SynthSpec {
    /// Four-trunk fundus on a 1024² raster: arteries straddle the temporal
    /// horizontal at ±60°, veins the nasal at ±120°, four levels deep.
    pub fn default_image(id: impl Into<String>, seed: u64) -> SynthSpec {
        let trunk = |polar_deg: Scalar| TrunkSpec {
            polar_deg,
            elevation_deg: 0.0,
            radius_px: 4.5,
        };
        let level = |daughter_angle_deg, main_len_px, side_len_px| LevelSpec {
            daughter_angle_deg,
            main_len_px,
            side_len_px,
        };
        SynthSpec {
            id: id.into(),
            width: 1024,
            height: 1024,
            disc: DiscAnnotation {
                center: Vec2::new(512.0, 512.0),
                diameter_px: 120.0,
            },
            arteries: vec![trunk(-60.0), trunk(60.0)],
            veins: vec![trunk(-120.0), trunk(120.0)],
            program: BranchingProgram {
                trunk_len_px: 85.0,
                levels: vec![
                    level(78.0, 36.0, 30.0),
                    level(74.0, 34.0, 28.0),
                    level(70.0, 32.0, 26.0),
                    level(70.0, 30.0, 26.0),
                ],
                murray_exponent: 3.0,
                side_fraction: 0.62,
            },
            noise: NoiseSpec::default(),
            crossings: Vec::new(),
            seed,
        }
    }

    fn trunks(&self, system: System) -> &[TrunkSpec] {
        match system {
            System::Artery => &self.arteries,
            System::Vein => &self.veins,
        }
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GtJunction {
    pub system: System,
    pub trunk: usize,
    pub level: usize,
    pub position: Point,
    pub class: JunctionKind,
    pub daughter_angle_deg: Scalar,
    pub parent_diameter_px: Scalar,
    /// Main first, then side twig.
    pub daughter_diameters_px: [Scalar; 2],
    pub coefficient: Scalar,
    pub parent_order: u32,
    pub daughter_orders: [u32; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct GtTree {
    pub system: System,
    pub trunk: usize,
    pub superior: bool,
    pub root: Point,
    pub tip: Point,
    pub trunk_radius_px: Scalar,
    /// Scripted Strahler orders: trunk, then per level main then side, the
    /// last main being the spine tip.
    pub segment_orders: Vec<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub junctions: Vec<GtJunction>,
    pub trees: Vec<GtTree>,
    pub artery_ma_deg: Option<Scalar>,
    pub vein_ma_deg: Option<Scalar>,
}

impl GroundTruth {
    pub fn expected_ma(&self, system: System) -> Option<Scalar> {
        match system {
            System::Artery => self.artery_ma_deg,
            System::Vein => self.vein_ma_deg,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

#[derive(Debug, Clone)]
struct Stroke {
    /// Segment path, e.g. "a0", "a0.ms", "x1" — named in bounds errors.
    name: String,
    /// Mask the stroke lands in.
    system: System,
    a: Point,
    b: Point,
    radius: Scalar,
}

struct Build {
    strokes: Vec<Stroke>,
    gt: GroundTruth,
}

fn unit(deg: Scalar) -> Point {
    let r = deg.to_radians();
    Vec2::new(r.cos(), r.sin())
}

fn draw_normal(rng: &mut ChaCha8Rng, sd: Scalar) -> Scalar {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    } else {
        0.0
    }
}

fn build(spec: &SynthSpec) -> Result<Build> {
    let prog = &spec.program;
    if !(prog.murray_exponent > 0.0) {
        return Err(Error::SynthSpec {
            segment: "program".into(),
            msg: format!("murray exponent must be positive, got {}", prog.murray_exponent),
        });
    }
    if !(prog.side_fraction > 0.0 && prog.side_fraction < 1.0) {
        return Err(Error::SynthSpec {
            segment: "program".into(),
            msg: format!("side fraction must be in (0,1), got {}", prog.side_fraction),
        });
    }
    for (i, level) in prog.levels.iter().enumerate() {
        let a = level.daughter_angle_deg;
        if !(a > 0.0 && a < 180.0) {
            return Err(Error::SynthSpec {
                segment: format!("level {i}"),
                msg: format!("daughter angle must be in (0,180), got {a}"),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut strokes = Vec::new();
    let mut junctions = Vec::new();
    let mut trees = Vec::new();
    for system in System::ALL {
        for (trunk_idx, trunk) in spec.trunks(system).iter().enumerate() {
            let tree = build_tree(spec, system, trunk_idx, trunk, &mut rng)?;
            strokes.extend(tree.strokes);
            junctions.extend(tree.junctions);
            trees.push(tree.gt_tree);
        }
    }

    for (i, cross) in spec.crossings.iter().enumerate() {
        let segment = format!("x{i}");
        let junction = junctions
            .iter()
            .find(|j: &&GtJunction| {
                j.system == cross.system && j.trunk == cross.trunk && j.level == cross.level
            })
            .ok_or_else(|| Error::SynthSpec {
                segment: segment.clone(),
                msg: format!(
                    "no {} junction at trunk {} level {}",
                    cross.system, cross.trunk, cross.level
                ),
            })?;
        let u = unit(cross.angle_deg);
        let p = junction.position;
        strokes.push(Stroke {
            name: segment,
            system: cross.system.other(),
            a: p - u * CROSSING_BAR_HALF_LEN_PX,
            b: p + u * CROSSING_BAR_HALF_LEN_PX,
            radius: CROSSING_BAR_RADIUS_PX,
        });
    }
    // Re-mark crossed junctions after the borrow above ends.
    for cross in &spec.crossings {
        for j in junctions.iter_mut() {
            if j.system == cross.system && j.trunk == cross.trunk && j.level == cross.level {
                j.class = JunctionKind::CrossingExcluded;
            }
        }
    }

    for s in &strokes {
        let margin = s.radius + 1.0;
        let inside = |p: Point| {
            p.x - margin >= 0.0
                && p.y - margin >= 0.0
                && p.x + margin <= (spec.width - 1) as Scalar
                && p.y + margin <= (spec.height - 1) as Scalar
        };
        if !inside(s.a) || !inside(s.b) {
            return Err(Error::SynthSpec {
                segment: s.name.clone(),
                msg: format!(
                    "stroke leaves the {}x{} raster",
                    spec.width, spec.height
                ),
            });
        }
    }

    let ma_of = |system: System| -> Option<Scalar> {
        let best = |superior: bool| {
            trees
                .iter()
                .filter(|t| t.system == system && t.superior == superior)
                .fold(None::<&GtTree>, |best, t| match best {
                    Some(b) if b.trunk_radius_px >= t.trunk_radius_px => Some(b),
                    _ => Some(t),
                })
        };
        let up = best(true)?;
        let down = best(false)?;
        angle_between_deg(up.tip - spec.disc.center, down.tip - spec.disc.center).ok()
    };
    let gt = GroundTruth {
        artery_ma_deg: ma_of(System::Artery),
        vein_ma_deg: ma_of(System::Vein),
        junctions,
        trees,
    };
    Ok(Build { strokes, gt })
}

struct TreeBuild {
    strokes: Vec<Stroke>,
    junctions: Vec<GtJunction>,
    gt_tree: GtTree,
}

fn build_tree(
    spec: &SynthSpec,
    system: System,
    trunk_idx: usize,
    trunk: &TrunkSpec,
    rng: &mut ChaCha8Rng,
) -> Result<TreeBuild> {
    let prog = &spec.program;
    let depth = prog.levels.len();
    let base = match system {
        System::Artery => "a",
        System::Vein => "v",
    };
    let trunk_name = format!("{base}{trunk_idx}");
    if trunk.radius_px < 1.0 {
        return Err(Error::SynthSpec {
            segment: trunk_name,
            msg: format!("trunk radius {} < 1 px", trunk.radius_px),
        });
    }

    // Main-angle jitter rotates the whole trunk about the disc center, so a
    // per-system MA offset or jitter maps 1:1 onto the tip-ray angle.
    let polar = trunk.polar_deg + draw_normal(rng, spec.noise.ma_jitter_deg / Scalar::sqrt(2.0));
    let root = spec.disc.center + unit(polar) * spec.disc.radius();
    let mut heading = polar + trunk.elevation_deg;
    let mut pos = root + unit(heading) * prog.trunk_len_px;
    let mut radius = trunk.radius_px;

    let murray_main = |r: Scalar| {
        r * (1.0 - prog.side_fraction.powf(prog.murray_exponent))
            .powf(1.0 / prog.murray_exponent)
    };

    let mut strokes = vec![Stroke {
        name: trunk_name.clone(),
        system,
        a: root,
        b: pos,
        radius,
    }];
    let mut junctions = Vec::new();
    let mut orders = vec![if depth == 0 { 1 } else { 2 }];
    for (i, level) in prog.levels.iter().enumerate() {
        let scripted_side = prog.side_fraction * radius;
        let scripted_main = murray_main(radius);
        if scripted_side < 1.0 || scripted_main < 1.0 {
            return Err(Error::SynthSpec {
                segment: format!("{trunk_name}.{}{}", "m".repeat(i), "s"),
                msg: format!(
                    "scripted radius falls below 1 px at level {i} ({:.2}/{:.2})",
                    scripted_main, scripted_side
                ),
            });
        }
        let angle = (level.daughter_angle_deg + draw_normal(rng, spec.noise.angle_jitter_deg))
            .clamp(2.0, 178.0);
        let r_main =
            (scripted_main * (1.0 + draw_normal(rng, spec.noise.radius_jitter_frac))).max(1.0);
        let r_side =
            (scripted_side * (1.0 + draw_normal(rng, spec.noise.radius_jitter_frac))).max(1.0);
        // The side alternates around the spine; the main line takes a fifth
        // of the opening so the spine stays roughly radial.
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let main_heading = heading - sign * 0.2 * angle;
        let side_heading = heading + sign * 0.8 * angle;
        let last = i + 1 == depth;
        let main_order = if last { 1 } else { 2 };
        junctions.push(GtJunction {
            system,
            trunk: trunk_idx,
            level: i,
            position: pos,
            class: if main_order == 1 {
                JunctionKind::Bifurcation
            } else {
                JunctionKind::Branching
            },
            daughter_angle_deg: angle,
            parent_diameter_px: 2.0 * radius,
            daughter_diameters_px: [2.0 * r_main, 2.0 * r_side],
            coefficient: branching_coefficient(2.0 * radius, 2.0 * r_main, 2.0 * r_side),
            parent_order: 2,
            daughter_orders: [main_order, 1],
        });
        let spine = "m".repeat(i + 1);
        strokes.push(Stroke {
            name: format!("{trunk_name}.{}s", "m".repeat(i)),
            system,
            a: pos,
            b: pos + unit(side_heading) * level.side_len_px,
            radius: r_side,
        });
        strokes.push(Stroke {
            name: format!("{trunk_name}.{spine}"),
            system,
            a: pos,
            b: pos + unit(main_heading) * level.main_len_px,
            radius: r_main,
        });
        orders.push(main_order);
        orders.push(1);
        heading = main_heading;
        pos = pos + unit(main_heading) * level.main_len_px;
        radius = r_main;
    }

    Ok(TreeBuild {
        junctions,
        gt_tree: GtTree {
            system,
            trunk: trunk_idx,
            superior: polar.to_radians().sin() < 0.0,
            root,
            tip: pos,
            trunk_radius_px: trunk.radius_px,
            segment_orders: orders,
        },
        strokes,
    })
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

fn stamp(mask: &mut Mask, s: &Stroke) {
    let r = s.radius;
    let (lo_x, hi_x) = (s.a.x.min(s.b.x) - r - 1.0, s.a.x.max(s.b.x) + r + 1.0);
    let (lo_y, hi_y) = (s.a.y.min(s.b.y) - r - 1.0, s.a.y.max(s.b.y) + r + 1.0);
    let x0 = lo_x.floor().max(0.0) as usize;
    let y0 = lo_y.floor().max(0.0) as usize;
    let x1 = (hi_x.ceil() as usize).min(mask.width() - 1);
    let y1 = (hi_y.ceil() as usize).min(mask.height() - 1);
    let ab = s.b - s.a;
    let len2 = ab.dot(ab);
    let r2 = r * r;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Vec2::new(x as Scalar, y as Scalar);
            let t = if len2 > 0.0 {
                (p - s.a).dot(ab).clamp(0.0, len2) / len2
            } else {
                0.0
            };
            let q = s.a + ab * t;
            let d = p - q;
            if d.dot(d) <= r2 {
                mask.set(x, y, true);
            }
        }
    }
}

/// Rasterize a scripted forest: capped strokes of scripted radius, binary,
/// deterministic for a fixed spec + seed.
pub fn generate(spec: &SynthSpec) -> Result<(LabeledFundus, GroundTruth)> {
    let built = build(spec)?;
    let mut artery_mask = Mask::new(spec.width, spec.height);
    let mut vein_mask = Mask::new(spec.width, spec.height);
    for s in &built.strokes {
        match s.system {
            System::Artery => stamp(&mut artery_mask, s),
            System::Vein => stamp(&mut vein_mask, s),
        }
    }
    Ok((
        LabeledFundus {
            id: spec.id.clone(),
            eye: Eye::Right,
            ser: 0.0,
            age: None,
            artery_mask,
            vein_mask,
            disc: spec.disc,
        },
        built.gt,
    ))
}

/// Ground truth alone — same construction and RNG stream as `generate`, no
/// raster.
pub fn ground_truth(spec: &SynthSpec) -> Result<GroundTruth> {
    Ok(build(spec)?.gt)
}

// ---------------------------------------------------------------------------
// Cohorts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GroupEffect {
    pub artery_ma_offset_deg: Scalar,
    pub vein_ma_offset_deg: Scalar,
}

#[derive(Debug, Clone)]
pub struct CohortSpec {
    /// Template image; its id and seed are replaced per image.
    pub base: SynthSpec,
    pub n_per_group: usize,
    /// Indexed in `RefractionGroup::ALL` order.
    pub effects: [GroupEffect; 4],
    pub seed: u64,
}

impl CohortSpec {
    pub fn new(base: SynthSpec, n_per_group: usize, seed: u64) -> CohortSpec {
        CohortSpec {
            base,
            n_per_group,
            effects: [GroupEffect::default(); 4],
            seed,
        }
    }

    pub fn effect_mut(&mut self, group: RefractionGroup) -> &mut GroupEffect {
        let i = RefractionGroup::ALL
            .iter()
            .position(|&g| g == group)
            .expect("group in ALL");
        &mut self.effects[i]
    }

    pub fn effect(&self, group: RefractionGroup) -> GroupEffect {
        let i = RefractionGroup::ALL
            .iter()
            .position(|&g| g == group)
            .expect("group in ALL");
        self.effects[i]
    }
}

#[derive(Debug, Clone)]
pub struct PlannedImage {
    pub id: String,
    pub group: RefractionGroup,
    pub eye: Eye,
    pub age: f64,
    pub ser: f64,
    pub spec: SynthSpec,
    pub gt: GroundTruth,
}

fn wrap_deg(d: Scalar) -> Scalar {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    }
    if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Rotate each trunk away from the pair's bisector by half the offset, so
/// the scripted MA shifts by exactly `offset_deg`.
fn apply_ma_offset(trunks: &mut [TrunkSpec], offset_deg: Scalar) {
    if offset_deg == 0.0 || trunks.is_empty() {
        return;
    }
    let (sin_sum, cos_sum) = trunks.iter().fold((0.0, 0.0), |(s, c), t| {
        let r = t.polar_deg.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let bisector = Scalar::atan2(sin_sum, cos_sum).to_degrees();
    for t in trunks {
        let side = wrap_deg(t.polar_deg - bisector);
        t.polar_deg += side.signum() * offset_deg * 0.5;
    }
}

/// Lay out a 4-group cohort: per-image SER drawn inside the group interval,
/// per-group MA offsets applied by rotating trunks about the disc center,
/// fresh seed per image. No rasterization.
pub fn plan_cohort(cohort: &CohortSpec) -> Result<Vec<PlannedImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cohort.seed);
    let mut out = Vec::with_capacity(4 * cohort.n_per_group);
    for &group in &RefractionGroup::ALL {
        let effect = cohort.effect(group);
        for i in 0..cohort.n_per_group {
            let id = format!("{}-{:04}", group.label(), i);
            let (lo, hi) = group.ser_interval();
            let mut ser = rng.gen_range(lo..hi);
            while classify_refraction(ser)? != group {
                ser = rng.gen_range(lo..hi);
            }
            let eye = if i % 2 == 0 { Eye::Right } else { Eye::Left };
            let age = rng.gen_range(6.0..18.0_f64).round();
            let mut spec = cohort.base.clone();
            spec.id = id.clone();
            spec.seed = rng.gen();
            apply_ma_offset(&mut spec.arteries, effect.artery_ma_offset_deg);
            apply_ma_offset(&mut spec.veins, effect.vein_ma_offset_deg);
            let gt = ground_truth(&spec)?;
            out.push(PlannedImage {
                id,
                group,
                eye,
                age,
                ser,
                spec,
                gt,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectLedgerRow {
    pub group: RefractionGroup,
    pub n: usize,
    pub artery_ma_offset_deg: Scalar,
    pub vein_ma_offset_deg: Scalar,
    /// Noise-free MA the group's spec scripts, when defined.
    pub scripted_artery_ma_deg: Option<Scalar>,
    pub scripted_vein_ma_deg: Option<Scalar>,
}

/// True injected effects per group, written next to a generated cohort.
pub fn effect_ledger(cohort: &CohortSpec) -> Result<Vec<EffectLedgerRow>> {
    let mut rows = Vec::new();
    for &group in &RefractionGroup::ALL {
        let effect = cohort.effect(group);
        let mut spec = cohort.base.clone();
        spec.noise = NoiseSpec::default();
        spec.id = format!("scripted-{}", group.label());
        apply_ma_offset(&mut spec.arteries, effect.artery_ma_offset_deg);
        apply_ma_offset(&mut spec.veins, effect.vein_ma_offset_deg);
        let gt = ground_truth(&spec)?;
        rows.push(EffectLedgerRow {
            group,
            n: cohort.n_per_group,
            artery_ma_offset_deg: effect.artery_ma_offset_deg,
            vein_ma_offset_deg: effect.vein_ma_offset_deg,
            scripted_artery_ma_deg: gt.artery_ma_deg,
            scripted_vein_ma_deg: gt.vein_ma_deg,
        });
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct CohortSummary {
    pub manifest: PathBuf,
    pub ledger: PathBuf,
    pub images: usize,
}

/// Generate and write a full cohort: PNG mask pairs and disc JSON per image
/// under `images/`, ground-truth sidecars under `gt/`, a manifest CSV, and
/// the effect ledger.
pub fn write_cohort(cohort: &CohortSpec, dir: &Path) -> Result<CohortSummary> {
    let images_dir = dir.join("images");
    let gt_dir = dir.join("gt");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    std::fs::create_dir_all(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;

    let planned = plan_cohort(cohort)?;
    let mut entries = Vec::with_capacity(planned.len());
    for p in &planned {
        let (fundus, gt) = generate(&p.spec)?;
        let artery_rel = PathBuf::from("images").join(format!("{}_artery.png", p.id));
        let vein_rel = PathBuf::from("images").join(format!("{}_vein.png", p.id));
        let disc_rel = PathBuf::from("images").join(format!("{}_disc.json", p.id));
        fundus.artery_mask.to_png(&dir.join(&artery_rel))?;
        fundus.vein_mask.to_png(&dir.join(&vein_rel))?;
        p.spec.disc.to_json_file(&dir.join(&disc_rel))?;
        let gt_path = gt_dir.join(format!("{}.json", p.id));
        std::fs::write(&gt_path, gt.to_json_string()).map_err(|e| Error::io(&gt_path, e))?;
        entries.push(ManifestEntry {
            id: p.id.clone(),
            eye: p.eye,
            ser: p.ser,
            age: Some(p.age),
            artery_mask: artery_rel,
            vein_mask: vein_rel,
            disc_json: disc_rel,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    let ledger = dir.join("effects.json");
    let rows = effect_ledger(cohort)?;
    let text = serde_json::to_string_pretty(&rows).expect("ledger serializes");
    std::fs::write(&ledger, text).map_err(|e| Error::io(&ledger, e))?;
    Ok(CohortSummary {
        manifest,
        ledger,
        images: planned.len(),
    })
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

pub const MATCH_RADIUS_PX: Scalar = 5.0;

#[derive(Debug, Clone, Serialize)]
pub struct JunctionScore {
    pub system: System,
    pub gt_index: usize,
    pub position_err_px: Scalar,
    pub class_match: bool,
    pub angle_err_deg: Option<Scalar>,
    pub coeff_rel_err: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub matches: Vec<JunctionScore>,
    pub gt_junctions: usize,
    pub measured_junctions: usize,
    pub recall: Scalar,
    /// None when nothing was measured.
    pub precision: Option<Scalar>,
    pub artery_ma_err_deg: Option<Scalar>,
    pub vein_ma_err_deg: Option<Scalar>,
}

/// Match measured junctions to ground truth greedily by distance (nearest
/// first, one-to-one, within 5 px) and report detection and value errors.
pub fn score_pipeline(gt: &GroundTruth, analysis: &ImageAnalysis) -> ScoreReport {
    let sys_of = |system: System| -> Option<&SystemAnalysis> {
        match system {
            System::Artery => analysis.artery.as_ref().ok(),
            System::Vein => analysis.vein.as_ref().ok(),
        }
    };
    let mut candidates = Vec::new();
    let mut measured_total = 0;
    for system in System::ALL {
        let Some(sys) = sys_of(system) else { continue };
        measured_total += sys.junctions.len();
        for (mi, m) in sys.junctions.iter().enumerate() {
            for (gi, g) in gt.junctions.iter().enumerate() {
                if g.system != system {
                    continue;
                }
                let d = m.position.dist(g.position);
                if d <= MATCH_RADIUS_PX {
                    candidates.push((d, system, gi, mi));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut gt_used = vec![false; gt.junctions.len()];
    let mut measured_used = std::collections::HashSet::new();
    let mut matches = Vec::new();
    for (d, system, gi, mi) in candidates {
        if gt_used[gi] || measured_used.contains(&(system, mi)) {
            continue;
        }
        gt_used[gi] = true;
        measured_used.insert((system, mi));
        let g = &gt.junctions[gi];
        let m = &sys_of(system).expect("candidate came from it").junctions[mi];
        matches.push(JunctionScore {
            system,
            gt_index: gi,
            position_err_px: d,
            class_match: m.kind == g.class,
            angle_err_deg: m.angle_deg.map(|a| (a - g.daughter_angle_deg).abs()),
            coeff_rel_err: m
                .coefficient
                .map(|c| (c - g.coefficient).abs() / g.coefficient),
        });
    }
    let recall = if gt.junctions.is_empty() {
        1.0
    } else {
        matches.len() as Scalar / gt.junctions.len() as Scalar
    };
    let precision = if measured_total == 0 {
        None
    } else {
        Some(matches.len() as Scalar / measured_total as Scalar)
    };
    let ma_err = |system: System| -> Option<Scalar> {
        let measured = sys_of(system)?.record.ma_deg?;
        Some((measured - gt.expected_ma(system)?).abs())
    };
    ScoreReport {
        artery_ma_err_deg: ma_err(System::Artery),
        vein_ma_err_deg: ma_err(System::Vein),
        matches,
        gt_junctions: gt.junctions.len(),
        measured_junctions: measured_total,
        recall,
        precision,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RunConfig;

    fn small_disc() -> DiscAnnotation {
        DiscAnnotation {
            center: Vec2::new(192.0, 192.0),
            diameter_px: 40.0,
        }
    }

    /// One artery trunk on a 384² raster, `depth` levels.
    fn small_spec(depth: usize, theta: Scalar, seed: u64) -> SynthSpec {
        SynthSpec {
            id: "t".into(),
            width: 384,
            height: 384,
            disc: small_disc(),
            arteries: vec![TrunkSpec {
                polar_deg: -30.0,
                elevation_deg: 0.0,
                radius_px: 4.0,
            }],
            veins: vec![],
            program: BranchingProgram {
                trunk_len_px: 45.0,
                levels: (0..depth)
                    .map(|_| LevelSpec {
                        daughter_angle_deg: theta,
                        main_len_px: 30.0,
                        side_len_px: 26.0,
                    })
                    .collect(),
                murray_exponent: 3.0,
                side_fraction: 0.62,
            },
            noise: NoiseSpec::default(),
            crossings: vec![],
            seed,
        }
    }

    #[test]
    fn bare_trunk_has_no_junctions() {
        let spec = small_spec(0, 70.0, 1);
        let (fundus, gt) = generate(&spec).unwrap();
        assert!(gt.junctions.is_empty());
        assert_eq!(gt.trees.len(), 1);
        assert_eq!(gt.trees[0].segment_orders, vec![1]);
        assert!(fundus.artery_mask.count_fg() > 0);
        assert_eq!(fundus.vein_mask.count_fg(), 0);
        // One hemifield only: no MA.
        assert!(gt.artery_ma_deg.is_none() && gt.vein_ma_deg.is_none());
    }

    #[test]
    fn symmetric_y_scripts_one_bifurcation() {
        let mut spec = small_spec(1, 70.0, 2);
        // Equal daughters: side fraction 2^(-1/3) makes Murray split evenly.
        spec.program.side_fraction = 0.5f64.powf(1.0 / 3.0);
        let gt = ground_truth(&spec).unwrap();
        assert_eq!(gt.junctions.len(), 1);
        let j = &gt.junctions[0];
        assert_eq!(j.class, JunctionKind::Bifurcation);
        assert_eq!(j.daughter_orders, [1, 1]);
        assert!((j.daughter_angle_deg - 70.0).abs() < 1e-12);
        let cbrt2 = 2.0f64.powf(1.0 / 3.0);
        assert!((j.coefficient - cbrt2).abs() < 1e-9, "{}", j.coefficient);
        // Murray closure from stored diameters.
        let [d1, d2] = j.daughter_diameters_px;
        let d0 = j.parent_diameter_px;
        assert!((d0.powi(3) - d1.powi(3) - d2.powi(3)).abs() < 1e-9);
        // Stored coefficient is exactly the formula of the stored diameters.
        assert_eq!(j.coefficient, branching_coefficient(d0, d1, d2));
    }

    #[test]
    fn spine_classes_are_branching_then_bifurcation() {
        let gt = ground_truth(&small_spec(3, 72.0, 3)).unwrap();
        let classes: Vec<JunctionKind> = gt.junctions.iter().map(|j| j.class).collect();
        assert_eq!(
            classes,
            vec![
                JunctionKind::Branching,
                JunctionKind::Branching,
                JunctionKind::Bifurcation
            ]
        );
        assert_eq!(gt.trees[0].segment_orders, vec![2, 2, 1, 2, 1, 1, 1]);
    }

    #[test]
    fn generation_is_deterministic_with_noise() {
        let mut spec = SynthSpec::default_image("d", 99);
        spec.noise = NoiseSpec {
            angle_jitter_deg: 3.0,
            radius_jitter_frac: 0.04,
            ma_jitter_deg: 3.0,
        };
        let (f1, g1) = generate(&spec).unwrap();
        let (f2, g2) = generate(&spec).unwrap();
        let px = |m: &Mask| m.pixels_fg().collect::<Vec<_>>();
        assert_eq!(px(&f1.artery_mask), px(&f2.artery_mask));
        assert_eq!(px(&f1.vein_mask), px(&f2.vein_mask));
        assert_eq!(g1.to_json_string(), g2.to_json_string());
        // A different seed moves something.
        let mut other = spec.clone();
        other.seed = 100;
        let (_, g3) = generate(&other).unwrap();
        assert_ne!(g1.to_json_string(), g3.to_json_string());
    }

    #[test]
    fn default_image_main_angles_are_scripted() {
        let gt = ground_truth(&SynthSpec::default_image("ma", 5)).unwrap();
        // Trunks at ±60 and ±120 with straight spines bent symmetrically:
        // both systems' tip rays still open at their scripted trunk spread.
        let a = gt.artery_ma_deg.unwrap();
        let v = gt.vein_ma_deg.unwrap();
        assert!((a - 120.0).abs() < 16.0, "artery MA {a}");
        assert!((v - 120.0).abs() < 16.0, "vein MA {v}");
        // The two systems are mirror images: identical MA.
        assert!((a - v).abs() < 1e-9);
    }

    #[test]
    fn out_of_bounds_stroke_names_the_segment() {
        let mut spec = small_spec(0, 70.0, 4);
        spec.program.trunk_len_px = 400.0;
        match generate(&spec) {
            Err(Error::SynthSpec { segment, .. }) => assert_eq!(segment, "a0"),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn radius_collapse_names_the_level() {
        let mut spec = small_spec(4, 70.0, 5);
        spec.arteries[0].radius_px = 1.5;
        match ground_truth(&spec) {
            Err(Error::SynthSpec { segment, msg }) => {
                assert!(segment.starts_with("a0."), "{segment}");
                assert!(msg.contains("below 1 px"), "{msg}");
            }
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn crossing_bar_lands_in_other_mask_and_marks_class() {
        let mut spec = small_spec(2, 70.0, 6);
        spec.crossings.push(CrossingSpec {
            system: System::Artery,
            trunk: 0,
            level: 0,
            angle_deg: 60.0,
        });
        let (fundus, gt) = generate(&spec).unwrap();
        assert_eq!(gt.junctions[0].class, JunctionKind::CrossingExcluded);
        assert_eq!(gt.junctions[1].class, JunctionKind::Bifurcation);
        let p = gt.junctions[0].position;
        assert!(fundus.vein_mask.count_fg() > 0);
        assert!(fundus
            .vein_mask
            .get(p.x.round() as usize, p.y.round() as usize));
        // Unknown junction reference errors with the bar's name.
        spec.crossings[0].level = 9;
        match ground_truth(&spec) {
            Err(Error::SynthSpec { segment, .. }) => assert_eq!(segment, "x0"),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn cohort_plan_draws_ser_inside_groups_and_shifts_ma() {
        let mut cohort = CohortSpec::new(SynthSpec::default_image("c", 0), 2, 42);
        cohort.effect_mut(RefractionGroup::HighMyopia).vein_ma_offset_deg = -10.0;
        let planned = plan_cohort(&cohort).unwrap();
        assert_eq!(planned.len(), 8);
        let mut ids: Vec<&str> = planned.iter().map(|p| p.id.as_str()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 8);
        for p in &planned {
            assert_eq!(classify_refraction(p.ser).unwrap(), p.group);
        }
        // Zero noise: scripted vein MA shifts by exactly the offset.
        let ledger = effect_ledger(&cohort).unwrap();
        let base_v = ledger[0].scripted_vein_ma_deg.unwrap();
        let high_v = ledger[3].scripted_vein_ma_deg.unwrap();
        assert!((base_v - high_v - 10.0).abs() < 1e-9, "{base_v} {high_v}");
        let base_a = ledger[0].scripted_artery_ma_deg.unwrap();
        let high_a = ledger[3].scripted_artery_ma_deg.unwrap();
        assert!((base_a - high_a).abs() < 1e-9);
    }

    #[test]
    fn clean_y_roundtrip_scores_perfectly() {
        let mut spec = small_spec(1, 75.0, 7);
        spec.program.side_fraction = 0.5f64.powf(1.0 / 3.0);
        let (fundus, gt) = generate(&spec).unwrap();
        let cfg = RunConfig::default();
        let analysis = crate::morphometry::analyze_image(&fundus, &cfg).unwrap();
        let art = analysis.artery.as_ref().unwrap();
        assert_eq!(art.record.counts.bifurcation, 1, "{:?}", art.record.counts);
        let report = score_pipeline(&gt, &analysis);
        assert_eq!(report.recall, 1.0, "matches: {:?}", report.matches);
        assert_eq!(report.precision, Some(1.0));
        let m = &report.matches[0];
        assert!(m.class_match);
        assert!(m.angle_err_deg.unwrap() <= 3.0, "{:?}", m.angle_err_deg);
        assert!(m.coeff_rel_err.unwrap() <= 0.15, "{:?}", m.coeff_rel_err);
    }

    #[test]
    fn score_of_failed_analysis_is_zero_recall() {
        let gt = ground_truth(&small_spec(2, 70.0, 8)).unwrap();
        let analysis = ImageAnalysis {
            id: "t".into(),
            artery: Err(Error::NoRootedVessels { system: "artery" }),
            vein: Err(Error::NoRootedVessels { system: "vein" }),
        };
        let report = score_pipeline(&gt, &analysis);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.precision, None);
        assert!(report.artery_ma_err_deg.is_none());
    }
}
