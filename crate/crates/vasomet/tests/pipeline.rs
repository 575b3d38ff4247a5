//! End-to-end pipeline checks on scripted rasters: synthesize a vessel
//! layout with known geometry, push the PNG-level masks through the full
//! analysis, and compare against the script.

use vasomet::geom::Vec2;
use vasomet::ingest::DiscAnnotation;
use vasomet::morphometry::analyze_image;
use vasomet::synth::{generate, BranchingProgram, LevelSpec, NoiseSpec, SynthSpec, TrunkSpec};
use vasomet::{RunConfig, Scalar};

fn disc() -> DiscAnnotation {
    DiscAnnotation {
        center: Vec2::new(192.0, 192.0),
        diameter_px: 40.0,
    }
}

fn y_spec(daughter_angle_deg: Scalar) -> SynthSpec {
    SynthSpec {
        id: "y".into(),
        width: 384,
        height: 384,
        disc: disc(),
        arteries: vec![TrunkSpec {
            polar_deg: -35.0,
            elevation_deg: 0.0,
            radius_px: 4.0,
        }],
        veins: vec![TrunkSpec {
            polar_deg: 145.0,
            elevation_deg: 0.0,
            radius_px: 4.0,
        }],
        program: BranchingProgram {
            trunk_len_px: 45.0,
            levels: vec![LevelSpec {
                daughter_angle_deg,
                main_len_px: 30.0,
                side_len_px: 26.0,
            }],
            murray_exponent: 3.0,
            // Equal daughters: the split is a bifurcation.
            side_fraction: 0.5f64.powf(1.0 / 3.0),
        },
        noise: NoiseSpec::default(),
        crossings: Vec::new(),
        seed: 3,
    }
}

#[test]
fn seventy_degree_y_measures_seventy() {
    let (fundus, gt) = generate(&y_spec(70.0)).unwrap();
    let analysis = analyze_image(&fundus, &RunConfig::default()).unwrap();
    let art = analysis.artery.unwrap();
    assert_eq!(art.record.counts.bifurcation, 1);
    let bea = art.record.bea_deg[0];
    assert!((67.0..=73.0).contains(&bea), "measured {bea}");
    let bec = art.record.bec[0];
    let scripted = gt.junctions[0].coefficient;
    assert!(
        ((bec - scripted) / scripted).abs() <= 0.15,
        "bec {bec} vs scripted {scripted}"
    );
}

#[test]
fn default_image_main_angle_within_two_degrees() {
    let spec = SynthSpec::default_image("ma", 1);
    let (fundus, gt) = generate(&spec).unwrap();
    let analysis = analyze_image(&fundus, &RunConfig::default()).unwrap();
    for (res, want) in [
        (&analysis.artery, gt.artery_ma_deg.unwrap()),
        (&analysis.vein, gt.vein_ma_deg.unwrap()),
    ] {
        let got = res.as_ref().unwrap().record.ma_deg.unwrap();
        assert!((got - want).abs() <= 2.0, "measured {got} scripted {want}");
    }
}

#[test]
fn integer_translation_leaves_measurements_unchanged() {
    let mut base = y_spec(74.0);
    // A second artery trunk in the inferior hemifield so MA is defined.
    base.arteries.push(TrunkSpec {
        polar_deg: 35.0,
        elevation_deg: 0.0,
        radius_px: 4.0,
    });
    let mut moved = base.clone();
    moved.disc.center = base.disc.center.add(Vec2::new(20.0, 10.0));

    let run = |spec: &SynthSpec| {
        let (fundus, _) = generate(spec).unwrap();
        analyze_image(&fundus, &RunConfig::default())
            .unwrap()
            .artery
            .unwrap()
            .record
    };
    let a = run(&base);
    let b = run(&moved);
    // Strokes shift by whole pixels, so the rasters are translates of each
    // other and every scalar output matches up to float noise.
    assert_eq!(a.counts, b.counts);
    assert!((a.ma_deg.unwrap() - b.ma_deg.unwrap()).abs() < 1e-6);
    assert_eq!(a.bea_deg.len(), b.bea_deg.len());
    for (x, y) in a.bea_deg.iter().zip(&b.bea_deg) {
        assert!((x - y).abs() < 1e-6);
    }
    for (x, y) in a.bec.iter().zip(&b.bec) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn quarter_turn_preserves_branch_measurements() {
    // MA is excluded here: a 90° turn moves both trunks of a system into one
    // hemifield, where MA is legitimately undefined.
    let base = SynthSpec::default_image("rot", 1);
    let mut turned = base.clone();
    for t in turned.arteries.iter_mut().chain(turned.veins.iter_mut()) {
        t.polar_deg += 90.0;
    }

    let run = |spec: &SynthSpec| {
        let (fundus, _) = generate(spec).unwrap();
        let analysis = analyze_image(&fundus, &RunConfig::default()).unwrap();
        (
            analysis.artery.unwrap().record,
            analysis.vein.unwrap().record,
        )
    };
    let (a0, v0) = run(&base);
    let (a1, v1) = run(&turned);
    for (r0, r1) in [(a0, a1), (v0, v1)] {
        assert_eq!(r0.counts, r1.counts);
        for (x0, x1) in [(&r0.ba_deg, &r1.ba_deg), (&r0.bea_deg, &r1.bea_deg)] {
            let mut x0 = x0.clone();
            let mut x1 = x1.clone();
            x0.sort_by(|a, b| a.total_cmp(b));
            x1.sort_by(|a, b| a.total_cmp(b));
            assert_eq!(x0.len(), x1.len());
            // Each measurement carries its own staircase error, so paired
            // values may drift up to twice the single-image budget; the mean
            // has to hold much tighter.
            for (a, b) in x0.iter().zip(&x1) {
                assert!((a - b).abs() <= 6.0, "rotated angle {a} vs {b}");
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!((mean(&x0) - mean(&x1)).abs() <= 2.0);
        }
    }
}

#[test]
fn half_turn_preserves_main_angle() {
    // A 180° turn is a point reflection about the (integer) disc center, so
    // the raster maps pixel-for-pixel and MA survives almost exactly.
    let base = SynthSpec::default_image("flip", 1);
    let mut turned = base.clone();
    for t in turned.arteries.iter_mut().chain(turned.veins.iter_mut()) {
        t.polar_deg += 180.0;
    }

    let run = |spec: &SynthSpec| {
        let (fundus, _) = generate(spec).unwrap();
        let analysis = analyze_image(&fundus, &RunConfig::default()).unwrap();
        (
            analysis.artery.unwrap().record.ma_deg.unwrap(),
            analysis.vein.unwrap().record.ma_deg.unwrap(),
        )
    };
    let (a0, v0) = run(&base);
    let (a1, v1) = run(&turned);
    assert!((a0 - a1).abs() <= 0.5, "artery MA {a0} vs {a1}");
    assert!((v0 - v1).abs() <= 0.5, "vein MA {v0} vs {v1}");
}

#[test]
fn widening_the_zone_only_adds_junctions() {
    let spec = SynthSpec::default_image("zone", 1);
    let (fundus, _) = generate(&spec).unwrap();

    let measure = |outer: f64| {
        let mut cfg = RunConfig::default();
        cfg.zone_outer_dd = outer;
        let analysis = analyze_image(&fundus, &cfg).unwrap();
        let r = analysis.artery.unwrap().record;
        (r.counts, r.ba_deg.len() + r.bea_deg.len())
    };
    let (narrow_counts, narrow_n) = measure(1.8);
    let (wide_counts, wide_n) = measure(2.5);
    assert!(narrow_n <= wide_n);
    assert!(narrow_counts.branching <= wide_counts.branching);
    assert!(narrow_counts.bifurcation <= wide_counts.bifurcation);
}
