use vasomet::morphometry::analyze_image;
use vasomet::synth::{generate, score_pipeline, NoiseSpec, SynthSpec};
use vasomet::RunConfig;

#[test]
fn dump() {
    let cfg = RunConfig::default();
    let mut unmatched = 0usize;
    let mut total = 0usize;
    let mut errs: Vec<(f64, usize, String)> = Vec::new();
    for i in 0..30u64 {
        let mut s = SynthSpec::default_image(format!("rt{i:03}"), 4000 + i);
        s.noise = NoiseSpec {
            angle_jitter_deg: 1.0,
            radius_jitter_frac: 0.02,
            ma_jitter_deg: 1.0,
        };
        let (f, gt) = generate(&s).unwrap();
        let a = analyze_image(&f, &cfg).unwrap();
        let sc = score_pipeline(&gt, &a);
        total += gt.junctions.len();
        let mut seen = vec![false; gt.junctions.len()];
        for m in &sc.matches {
            seen[m.gt_index] = true;
            let g = &gt.junctions[m.gt_index];
            if let Some(e) = m.angle_err_deg {
                errs.push((e, g.level, format!("{} {:?} t{} pos ({:.0},{:.0}) pdia {:.1}", s.id, g.system, g.trunk, g.position.x, g.position.y, g.parent_diameter_px)));
            } else {
                println!("match without angle: {} level {} class {:?}", s.id, g.level, g.class);
            }
        }
        for (gi, s2) in seen.iter().enumerate() {
            if !s2 {
                let g = &gt.junctions[gi];
                unmatched += 1;
                println!("UNMATCHED {} {:?} t{} lvl{} pos ({:.1},{:.1})", s.id, g.system, g.trunk, g.level, g.position.x, g.position.y);
            }
        }
    }
    errs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    println!("total {total} unmatched {unmatched}");
    let over: Vec<_> = errs.iter().filter(|e| e.0 > 3.0).collect();
    println!("over 3deg: {} of {}", over.len(), errs.len());
    for (e, lvl, info) in errs.iter().take(25) {
        println!("{e:6.2}  lvl{lvl}  {info}");
    }
    let mut by_level = [(0usize, 0usize); 4];
    for (e, lvl, _) in &errs {
        by_level[*lvl].1 += 1;
        if *e > 3.0 {
            by_level[*lvl].0 += 1;
        }
    }
    println!("per level over3/n: {by_level:?}");
}
