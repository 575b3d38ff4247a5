//! Grouped bar charts of the cohort tables as standalone SVG text.
//!
//! One chart per (parameter, system): group means as bars, sample-SD
//! whiskers, and a bracket with `*` over every pair whose post-hoc p < 0.05.
//! The output is assembled from fixed-precision numbers only, so a rerun on
//! the same tables is byte-identical.

use std::fmt::Write;

use crate::ingest::RefractionGroup;
use crate::stats::{CohortTables, Param, PARAMS};
use crate::topology::System;
use crate::Scalar;

/// Default chart set: the three headline parameters, per system.
pub const FIG_PARAMS: [Param; 3] = [Param::MaDeg, Param::BaDeg, Param::Bec];

const LEFT: Scalar = 64.0;
const RIGHT: Scalar = 616.0;
const BASE: Scalar = 360.0;
const TOP: Scalar = 48.0;
const BAR_W: Scalar = 80.0;
const BRACKET_STEP: Scalar = 18.0;
const BAR_FILLS: [&str; 4] = ["#d7d7d7", "#ababab", "#7d7d7d", "#4b4b4b"];

fn param_title(p: Param) -> &'static str {
    match p {
        Param::MaDeg => "Main angle",
        Param::BaDeg => "Branching angle",
        Param::Bc => "Branching coefficient",
        Param::BeaDeg => "Bifurcation angle",
        Param::Bec => "Bifurcation coefficient",
    }
}

fn axis_label(p: Param) -> &'static str {
    match p {
        Param::MaDeg => "main angle (deg)",
        Param::BaDeg => "branching angle (deg)",
        Param::Bc => "branching coefficient",
        Param::BeaDeg => "bifurcation angle (deg)",
        Param::Bec => "bifurcation coefficient",
    }
}

pub fn chart_filename(param: Param, system: System) -> String {
    format!("{}_{}.svg", param.label(), system.label())
}

// Smallest 1/2/2.5/5 × 10^k ≥ raw.
fn nice_step(raw: Scalar) -> Scalar {
    let mag = (10.0 as Scalar).powf(raw.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0] {
        if m * mag >= raw {
            return m * mag;
        }
    }
    10.0 * mag
}

fn tick_label(v: Scalar, step: Scalar) -> String {
    if step >= 1.0 {
        format!("{v:.0}")
    } else if step >= 0.1 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn n2(x: Scalar) -> String {
    format!("{x:.2}")
}

/// Render the chart for one parameter/system. Groups without a mean get an
/// `n/a` slot instead of a bar; missing p-values never earn a bracket.
pub fn render_chart(tables: &CohortTables, param: Param, system: System) -> String {
    let groups = RefractionGroup::ALL;
    let cells: Vec<Option<(Scalar, Option<Scalar>)>> = groups
        .iter()
        .map(|&g| {
            tables
                .table1
                .iter()
                .find(|r| r.parameter == param && r.system == system && r.group == g)
                .and_then(|r| r.mean.map(|m| (m, r.sd)))
        })
        .collect();

    let idx = |g: RefractionGroup| groups.iter().position(|&x| x == g).unwrap_or(0);
    let mut pairs: Vec<(usize, usize)> = tables
        .table2
        .iter()
        .chain(&tables.table3)
        .filter(|r| r.parameter == param && r.system == system)
        .filter(|r| r.p_value.is_some_and(|p| p < 0.05))
        .map(|r| {
            let (a, b) = (idx(r.group_a), idx(r.group_b));
            (a.min(b), a.max(b))
        })
        .collect();
    pairs.sort_by_key(|&(i, j)| (j - i, i, j));
    pairs.dedup();

    let raw_max = cells
        .iter()
        .flatten()
        .map(|&(m, sd)| m + sd.unwrap_or(0.0))
        .fold(0.0 as Scalar, Scalar::max)
        .max(1e-9);
    let step = nice_step(raw_max / 5.0);
    let ymax = 5.0 * step;
    let data_top = TOP + pairs.len() as Scalar * BRACKET_STEP + 6.0;
    let y_of = |v: Scalar| data_top + (1.0 - v / ymax) * (BASE - data_top);
    let slot = (RIGHT - LEFT) / groups.len() as Scalar;
    let cx = |i: usize| LEFT + (i as Scalar + 0.5) * slot;

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" \
         viewBox=\"0 0 640 420\">"
    )
    .unwrap();
    writeln!(
        w,
        "<style>text{{font-family:'DejaVu Sans','Helvetica',sans-serif;fill:#222222}}</style>"
    )
    .unwrap();
    writeln!(w, "<rect x=\"0\" y=\"0\" width=\"640\" height=\"420\" fill=\"#ffffff\"/>").unwrap();
    writeln!(
        w,
        "<text x=\"340\" y=\"26\" font-size=\"15\" text-anchor=\"middle\">{} \
         &#8212; {}</text>",
        param_title(param),
        system.label()
    )
    .unwrap();
    writeln!(
        w,
        "<text x=\"20\" y=\"{mid}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 20 {mid})\">{label}</text>",
        mid = n2((data_top + BASE) / 2.0),
        label = axis_label(param)
    )
    .unwrap();

    for t in 0..=5 {
        let v = t as Scalar * step;
        let y = n2(y_of(v));
        writeln!(
            w,
            "<line x1=\"58\" y1=\"{y}\" x2=\"{LEFT}\" y2=\"{y}\" stroke=\"#222222\" \
             stroke-width=\"1\"/>"
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"54\" y=\"{ty}\" font-size=\"11\" text-anchor=\"end\">{lbl}</text>",
            ty = n2(y_of(v) + 4.0),
            lbl = tick_label(v, step)
        )
        .unwrap();
    }

    for (i, (&g, cell)) in groups.iter().zip(&cells).enumerate() {
        let center = cx(i);
        match *cell {
            Some((mean, sd)) => {
                let top = y_of(mean.max(0.0).min(ymax));
                writeln!(
                    w,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{BAR_W}\" height=\"{h}\" \
                     fill=\"{fill}\" stroke=\"#333333\" stroke-width=\"0.5\"/>",
                    x = n2(center - BAR_W / 2.0),
                    y = n2(top),
                    h = n2(BASE - top),
                    fill = BAR_FILLS[i]
                )
                .unwrap();
                if let Some(sd) = sd {
                    let hi = n2(y_of((mean + sd).min(ymax)));
                    let lo = n2(y_of((mean - sd).max(0.0)));
                    let c = n2(center);
                    for seg in [
                        format!("<line x1=\"{c}\" y1=\"{hi}\" x2=\"{c}\" y2=\"{lo}\""),
                        format!(
                            "<line x1=\"{a}\" y1=\"{hi}\" x2=\"{b}\" y2=\"{hi}\"",
                            a = n2(center - 10.0),
                            b = n2(center + 10.0)
                        ),
                        format!(
                            "<line x1=\"{a}\" y1=\"{lo}\" x2=\"{b}\" y2=\"{lo}\"",
                            a = n2(center - 10.0),
                            b = n2(center + 10.0)
                        ),
                    ] {
                        writeln!(w, "{seg} stroke=\"#222222\" stroke-width=\"1.5\"/>").unwrap();
                    }
                }
            }
            None => {
                writeln!(
                    w,
                    "<text x=\"{x}\" y=\"352\" font-size=\"11\" text-anchor=\"middle\" \
                     fill=\"#777777\">n/a</text>",
                    x = n2(center)
                )
                .unwrap();
            }
        }
        writeln!(
            w,
            "<text x=\"{x}\" y=\"380\" font-size=\"12\" text-anchor=\"middle\">{name}</text>",
            x = n2(center),
            name = g.display_name()
        )
        .unwrap();
    }

    // Short spans sit closest to the bars; the widest bracket goes on top.
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let y = TOP + (pairs.len() - 1 - k) as Scalar * BRACKET_STEP + 10.0;
        let (a, b) = (n2(cx(i)), n2(cx(j)));
        let (yt, yd) = (n2(y), n2(y + 5.0));
        writeln!(
            w,
            "<path d=\"M {a} {yd} L {a} {yt} L {b} {yt} L {b} {yd}\" fill=\"none\" \
             stroke=\"#222222\" stroke-width=\"1\"/>"
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{x}\" y=\"{ty}\" font-size=\"14\" text-anchor=\"middle\">*</text>",
            x = n2((cx(i) + cx(j)) / 2.0),
            ty = n2(y - 2.0)
        )
        .unwrap();
    }

    writeln!(
        w,
        "<line x1=\"{LEFT}\" y1=\"{BASE}\" x2=\"{RIGHT}\" y2=\"{BASE}\" stroke=\"#222222\" \
         stroke-width=\"1\"/>"
    )
    .unwrap();
    writeln!(
        w,
        "<line x1=\"{LEFT}\" y1=\"{top}\" x2=\"{LEFT}\" y2=\"{BASE}\" stroke=\"#222222\" \
         stroke-width=\"1\"/>",
        top = n2(data_top)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// All charts, named by [`chart_filename`]: the figure set by default, every
/// parameter with `all_params`.
pub fn render_charts(tables: &CohortTables, all_params: bool) -> Vec<(String, String)> {
    let params: &[Param] = if all_params { &PARAMS } else { &FIG_PARAMS };
    let mut out = Vec::with_capacity(params.len() * System::ALL.len());
    for &param in params {
        for system in System::ALL {
            out.push((chart_filename(param, system), render_chart(tables, param, system)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ComparisonRow, Table1Row};

    fn t1(g: RefractionGroup, mean: Option<Scalar>) -> Table1Row {
        Table1Row {
            parameter: Param::MaDeg,
            system: System::Vein,
            group: g,
            n: if mean.is_some() { 3 } else { 0 },
            mean,
            sd: mean.map(|_| 3.0),
            ci_low: None,
            ci_high: None,
            anova_p: Some(0.01),
        }
    }

    fn cmp(a: RefractionGroup, b: RefractionGroup, p: Option<Scalar>) -> ComparisonRow {
        ComparisonRow {
            parameter: Param::MaDeg,
            system: System::Vein,
            group_a: a,
            group_b: b,
            md: Some(1.0),
            ci_low: Some(0.0),
            ci_high: Some(2.0),
            p_value: p,
        }
    }

    fn fixture() -> CohortTables {
        use RefractionGroup::*;
        CohortTables {
            table1: vec![
                t1(Normal, Some(120.0)),
                t1(LowMyopia, Some(118.0)),
                t1(ModerateMyopia, Some(115.0)),
                t1(HighMyopia, Some(110.0)),
            ],
            table2: vec![
                cmp(Normal, LowMyopia, Some(0.20)),
                cmp(Normal, ModerateMyopia, Some(0.04)),
                cmp(Normal, HighMyopia, Some(0.0001)),
            ],
            table3: vec![
                cmp(LowMyopia, ModerateMyopia, Some(0.60)),
                cmp(LowMyopia, HighMyopia, None),
                cmp(ModerateMyopia, HighMyopia, Some(0.049)),
            ],
        }
    }

    #[test]
    fn default_set_is_six_charts_all_params_ten() {
        let t = fixture();
        let names: Vec<String> = render_charts(&t, false).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "ma_deg_artery.svg",
                "ma_deg_vein.svg",
                "ba_deg_artery.svg",
                "ba_deg_vein.svg",
                "bec_artery.svg",
                "bec_vein.svg"
            ]
        );
        assert_eq!(render_charts(&t, true).len(), 10);
    }

    #[test]
    fn stars_mark_exactly_the_significant_pairs() {
        let svg = render_chart(&fixture(), Param::MaDeg, System::Vein);
        // p = 0.04, 0.0001, 0.049 qualify; 0.20, 0.60, and the missing p do not.
        assert_eq!(svg.matches(">*</text>").count(), 3);
        assert_eq!(svg.matches("<rect").count(), 1 + 4);
        // Whiskers: three <line> segments per bar, plus axes and six ticks.
        assert_eq!(svg.matches("<line").count(), 4 * 3 + 2 + 6);
    }

    #[test]
    fn missing_cells_render_na_and_no_bar() {
        let mut t = fixture();
        t.table1[3] = t1(RefractionGroup::HighMyopia, None);
        let svg = render_chart(&t, Param::MaDeg, System::Vein);
        assert_eq!(svg.matches("<rect").count(), 1 + 3);
        assert!(svg.contains(">n/a</text>"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn axis_covers_mean_plus_sd_and_rerun_is_byte_identical() {
        let t = fixture();
        let svg = render_chart(&t, Param::MaDeg, System::Vein);
        // raw max 123 → step 25 → top tick 125.
        assert!(svg.contains(">125</text>"));
        assert_eq!(svg, render_chart(&t, Param::MaDeg, System::Vein));
    }

    #[test]
    fn chart_for_absent_parameter_is_empty_but_valid() {
        let svg = render_chart(&fixture(), Param::Bc, System::Artery);
        assert_eq!(svg.matches("<rect").count(), 1);
        assert_eq!(svg.matches(">*</text>").count(), 0);
        assert!(svg.ends_with("</svg>\n"));
    }
}
