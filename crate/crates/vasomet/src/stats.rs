//! Group descriptives, one-way ANOVA, and pairwise mean differences with
//! 95% CIs, plus the t/F distribution machinery they need.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::RefractionGroup;
use crate::morphometry::MorphometryRecord;
use crate::num::Real;
use crate::topology::System;
use crate::Scalar;

// ---------------------------------------------------------------------------
// Distribution functions
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 8] = [
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function (Lanczos, g = 7), valid for z > 0.
pub fn ln_gamma<F: Real>(z: F) -> F {
    let half = F::of(0.5);
    if z < half {
        // Reflection: Γ(z) Γ(1−z) = π / sin(πz).
        let pi = F::of(std::f64::consts::PI);
        return (pi / (pi * z).sin()).ln() - ln_gamma(F::one() - z);
    }
    let z = z - F::one();
    let mut x = F::of(0.999_999_999_999_809_93);
    for (i, &c) in LANCZOS.iter().enumerate() {
        x = x + F::of(c) / (z + F::of(i as f64 + 1.0));
    }
    let t = z + F::of(LANCZOS_G + 0.5);
    let ln_sqrt_2pi = F::of(0.918_938_533_204_672_74);
    ln_sqrt_2pi + (z + half) * t.ln() - t + x.ln()
}

// Continued fraction for the incomplete beta (modified Lentz).
fn betacf<F: Real>(a: F, b: F, x: F) -> F {
    let tiny = F::of(1e-30);
    let eps = F::of(3e-14);
    let one = F::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=300 {
        let mf = F::of(m as f64);
        let m2 = mf + mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h = h * del;
        if (del - one).abs() < eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0.
pub fn reg_inc_beta<F: Real>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (F::one() - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only below the mean; use the
    // symmetry I_x(a,b) = 1 − I_{1−x}(b,a) otherwise.
    if x < (a + F::one()) / (a + b + F::of(2.0)) {
        front * betacf(a, b, x) / a
    } else {
        F::one() - front * betacf(b, a, F::one() - x) / b
    }
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf<F: Real>(t: F, df: F) -> F {
    let half = F::of(0.5);
    let x = df / (df + t * t);
    let tail = half * reg_inc_beta(df * half, half, x);
    if t >= F::zero() {
        F::one() - tail
    } else {
        tail
    }
}

/// Two-sided p-value for a t statistic.
pub fn t_p_two_sided<F: Real>(t: F, df: F) -> F {
    let half = F::of(0.5);
    reg_inc_beta(df * half, half, df / (df + t * t))
}

/// Upper-tail probability of the F distribution at (d1, d2) df.
pub fn f_sf<F: Real>(f: F, d1: F, d2: F) -> F {
    if f <= F::zero() {
        return F::one();
    }
    let half = F::of(0.5);
    reg_inc_beta(d2 * half, d1 * half, d2 / (d2 + d1 * f))
}

/// Student-t quantile by bisection on the CDF; `p` in (0, 1).
pub fn t_quantile<F: Real>(p: F, df: F) -> F {
    let half = F::of(0.5);
    if p < half {
        return -t_quantile(F::one() - p, df);
    }
    if p == half {
        return F::zero();
    }
    let mut hi = F::one();
    while t_cdf(hi, df) < p && hi < F::of(1e12) {
        hi = hi + hi;
    }
    let mut lo = F::zero();
    for _ in 0..200 {
        let mid = (lo + hi) * half;
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= F::of(1e-13) * hi.max(F::one()) {
            break;
        }
    }
    (lo + hi) * half
}

// ---------------------------------------------------------------------------
// Sample-level statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GroupSample {
    pub group: RefractionGroup,
    pub values: Vec<Scalar>,
}

impl GroupSample {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Describe {
    pub n: usize,
    pub mean: Scalar,
    pub sd: Scalar,
    pub ci_low: Scalar,
    pub ci_high: Scalar,
}

/// Mean, sample SD, and t-based 95% CI of the mean. Needs n ≥ 2.
pub fn describe(values: &[Scalar]) -> Result<Describe> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "describe needs n >= 2, got {n}"
        )));
    }
    let nf = n as Scalar;
    let mean = values.iter().sum::<Scalar>() / nf;
    let ss: Scalar = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    let half_width = t_quantile(0.975, nf - 1.0) * sd / nf.sqrt();
    Ok(Describe {
        n,
        mean,
        sd,
        ci_low: mean - half_width,
        ci_high: mean + half_width,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnovaResult {
    pub f_stat: Scalar,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: Scalar,
    pub mse_within: Scalar,
}

/// One-way ANOVA over ≥ 2 groups, each with n ≥ 2.
pub fn one_way_anova(samples: &[GroupSample]) -> Result<AnovaResult> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "anova needs >= 2 groups, got {}",
            samples.len()
        )));
    }
    for s in samples {
        if s.n() < 2 {
            return Err(Error::InsufficientData(format!(
                "anova group {} has n = {}",
                s.group.label(),
                s.n()
            )));
        }
    }
    let total_n: usize = samples.iter().map(GroupSample::n).sum();
    let grand = samples.iter().flat_map(|s| &s.values).sum::<Scalar>() / total_n as Scalar;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for s in samples {
        let nf = s.n() as Scalar;
        let mean = s.values.iter().sum::<Scalar>() / nf;
        ssb += nf * (mean - grand) * (mean - grand);
        ssw += s.values.iter().map(|v| (v - mean) * (v - mean)).sum::<Scalar>();
    }
    let df_between = samples.len() - 1;
    let df_within = total_n - samples.len();
    let mse_within = ssw / df_within as Scalar;
    let (f_stat, p_value) = if ssw == 0.0 {
        if ssb == 0.0 {
            (0.0, 1.0)
        } else {
            (Scalar::INFINITY, 0.0)
        }
    } else {
        let f = (ssb / df_between as Scalar) / mse_within;
        (f, f_sf(f, df_between as Scalar, df_within as Scalar))
    };
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        mse_within,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairwiseComparison {
    pub group_a: RefractionGroup,
    pub group_b: RefractionGroup,
    pub md: Scalar,
    pub ci_low: Scalar,
    pub ci_high: Scalar,
    pub p_value: Scalar,
}

/// Fisher-LSD pairwise mean difference a − b with a 95% CI from the pooled
/// within-group MSE. With `bonferroni` the p-value and CI level are adjusted
/// for all k(k−1)/2 comparisons among `samples`.
pub fn pairwise_md(
    samples: &[GroupSample],
    a: RefractionGroup,
    b: RefractionGroup,
    anova: &AnovaResult,
    bonferroni: bool,
) -> Result<PairwiseComparison> {
    if a == b {
        return Err(Error::Input(format!(
            "pairwise comparison of {} with itself",
            a.label()
        )));
    }
    let get = |g: RefractionGroup| {
        samples
            .iter()
            .find(|s| s.group == g)
            .ok_or_else(|| Error::Input(format!("group {} not in samples", g.label())))
    };
    let sa = get(a)?;
    let sb = get(b)?;
    let (na, nb) = (sa.n() as Scalar, sb.n() as Scalar);
    let md = sa.values.iter().sum::<Scalar>() / na - sb.values.iter().sum::<Scalar>() / nb;
    let se = (anova.mse_within * (1.0 / na + 1.0 / nb)).sqrt();
    let df = anova.df_within as Scalar;
    let m = if bonferroni {
        let k = samples.len();
        (k * (k - 1) / 2) as Scalar
    } else {
        1.0
    };
    let t_crit = t_quantile(1.0 - 0.025 / m, df);
    let p_raw = if se == 0.0 {
        if md == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        t_p_two_sided(md / se, df)
    };
    Ok(PairwiseComparison {
        group_a: a,
        group_b: b,
        md,
        ci_low: md - t_crit * se,
        ci_high: md + t_crit * se,
        p_value: (p_raw * m).min(1.0),
    })
}

// ---------------------------------------------------------------------------
// Cohort tables
// ---------------------------------------------------------------------------

pub const PARAMS: [Param; 5] = [Param::MaDeg, Param::BaDeg, Param::Bc, Param::BeaDeg, Param::Bec];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    MaDeg,
    BaDeg,
    Bc,
    BeaDeg,
    Bec,
}

impl Param {
    pub fn label(self) -> &'static str {
        match self {
            Param::MaDeg => "ma_deg",
            Param::BaDeg => "ba_deg",
            Param::Bc => "bc",
            Param::BeaDeg => "bea_deg",
            Param::Bec => "bec",
        }
    }

    /// Per-image value entering group statistics: MA directly, the others as
    /// the per-image mean over junctions.
    pub fn per_image_value(self, r: &MorphometryRecord) -> Option<Scalar> {
        let mean = |xs: &[Scalar]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<Scalar>() / xs.len() as Scalar)
            }
        };
        match self {
            Param::MaDeg => r.ma_deg,
            Param::BaDeg => mean(&r.ba_deg),
            Param::Bc => mean(&r.bc),
            Param::BeaDeg => mean(&r.bea_deg),
            Param::Bec => mean(&r.bec),
        }
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> serde::Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PARAMS
            .iter()
            .copied()
            .find(|p| p.label() == s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct Table1Row {
    pub parameter: Param,
    pub system: System,
    pub group: RefractionGroup,
    pub n: usize,
    pub mean: Option<Scalar>,
    pub sd: Option<Scalar>,
    pub ci_low: Option<Scalar>,
    pub ci_high: Option<Scalar>,
    pub anova_p: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ComparisonRow {
    pub parameter: Param,
    pub system: System,
    pub group_a: RefractionGroup,
    pub group_b: RefractionGroup,
    pub md: Option<Scalar>,
    pub ci_low: Option<Scalar>,
    pub ci_high: Option<Scalar>,
    pub p_value: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct CohortTables {
    pub table1: Vec<Table1Row>,
    pub table2: Vec<ComparisonRow>,
    pub table3: Vec<ComparisonRow>,
}

/// Paper-shaped summary tables: per-group descriptives with omnibus ANOVA
/// (table 1), Normal vs each myopia group (table 2), and myopia groups
/// pairwise (table 3). Cells that lack the data for an estimate stay empty.
pub fn cohort_tables(
    rows: &[(RefractionGroup, &MorphometryRecord)],
    bonferroni: bool,
) -> Result<CohortTables> {
    {
        let mut groups: Vec<RefractionGroup> = rows.iter().map(|(g, _)| *g).collect();
        groups.sort();
        groups.dedup();
        if groups.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "cohort has {} group(s), need >= 2",
                groups.len()
            )));
        }
    }
    let mut values: HashMap<(System, Param, RefractionGroup), Vec<Scalar>> = HashMap::new();
    for (group, rec) in rows {
        for param in PARAMS {
            if let Some(v) = param.per_image_value(rec) {
                values
                    .entry((rec.system, param, *group))
                    .or_default()
                    .push(v);
            }
        }
    }

    let mut table1 = Vec::new();
    let mut table2 = Vec::new();
    let mut table3 = Vec::new();
    for system in System::ALL {
        for param in PARAMS {
            let group_values = |g: RefractionGroup| {
                values
                    .get(&(system, param, g))
                    .map_or(&[] as &[Scalar], |v| v)
            };
            let samples: Vec<GroupSample> = RefractionGroup::ALL
                .iter()
                .map(|&g| GroupSample {
                    group: g,
                    values: group_values(g).to_vec(),
                })
                .filter(|s| s.n() >= 2)
                .collect();
            let anova = if samples.len() >= 2 {
                one_way_anova(&samples).ok()
            } else {
                None
            };
            for &group in &RefractionGroup::ALL {
                let vals = group_values(group);
                let d = describe(vals).ok();
                table1.push(Table1Row {
                    parameter: param,
                    system,
                    group,
                    n: vals.len(),
                    mean: d.map(|d| d.mean),
                    sd: d.map(|d| d.sd),
                    ci_low: d.map(|d| d.ci_low),
                    ci_high: d.map(|d| d.ci_high),
                    anova_p: anova.map(|a| a.p_value),
                });
            }
            let compare = |a: RefractionGroup, b: RefractionGroup| -> ComparisonRow {
                let cmp = anova.as_ref().and_then(|an| {
                    pairwise_md(&samples, a, b, an, bonferroni).ok()
                });
                ComparisonRow {
                    parameter: param,
                    system,
                    group_a: a,
                    group_b: b,
                    md: cmp.map(|c| c.md),
                    ci_low: cmp.map(|c| c.ci_low),
                    ci_high: cmp.map(|c| c.ci_high),
                    p_value: cmp.map(|c| c.p_value),
                }
            };
            use RefractionGroup::*;
            for myopia in [LowMyopia, ModerateMyopia, HighMyopia] {
                table2.push(compare(Normal, myopia));
            }
            let myopia_pairs = [
                (LowMyopia, ModerateMyopia),
                (LowMyopia, HighMyopia),
                (ModerateMyopia, HighMyopia),
            ];
            for (a, b) in myopia_pairs {
                table3.push(compare(a, b));
            }
        }
    }
    Ok(CohortTables {
        table1,
        table2,
        table3,
    })
}

impl CohortTables {
    pub fn table1_csv_string(&self) -> String {
        let mut out = String::from("parameter,system,group,n,mean,sd,ci_low,ci_high,anova_p\n");
        let f = fmt_opt;
        for r in &self.table1 {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.parameter.label(),
                r.system.label(),
                r.group.label(),
                r.n,
                f(r.mean),
                f(r.sd),
                f(r.ci_low),
                f(r.ci_high),
                f(r.anova_p),
            ));
        }
        out
    }

    pub fn table2_csv_string(&self) -> String {
        comparison_csv(&self.table2)
    }

    pub fn table3_csv_string(&self) -> String {
        comparison_csv(&self.table3)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }
}

fn fmt_opt(v: Option<Scalar>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out =
        String::from("parameter,system,comparison,group_a,group_b,md,ci_low,ci_high,p_value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}_vs_{},{},{},{},{},{},{}\n",
            r.parameter.label(),
            r.system.label(),
            r.group_a.label(),
            r.group_b.label(),
            r.group_a.label(),
            r.group_b.label(),
            fmt_opt(r.md),
            fmt_opt(r.ci_low),
            fmt_opt(r.ci_high),
            fmt_opt(r.p_value),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphometry::JunctionCounts;
    use proptest::prelude::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0f64).abs() < 1e-12);
        assert!(ln_gamma(2.0f64).abs() < 1e-12);
        assert!((ln_gamma(5.0f64) - 24.0f64.ln()).abs() < 1e-12);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((ln_gamma(0.5f64) - sqrt_pi.ln()).abs() < 1e-12);
        // Reflection: Γ(z)Γ(1−z) = π / sin(πz) at z = 0.3.
        let z = 0.3f64;
        let lhs = ln_gamma(z) + ln_gamma(1.0 - z);
        let rhs = (std::f64::consts::PI / (std::f64::consts::PI * z).sin()).ln();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1,1) = x; I_x(a,1) = x^a; I_x(1,b) = 1 − (1−x)^b.
        for &x in &[0.05, 0.3, 0.5, 0.9] {
            assert!((reg_inc_beta(1.0f64, 1.0, x) - x).abs() < 1e-12);
            assert!((reg_inc_beta(3.0f64, 1.0, x) - x.powi(3)).abs() < 1e-12);
            assert!((reg_inc_beta(1.0f64, 4.0, x) - (1.0 - (1.0 - x).powi(4))).abs() < 1e-12);
        }
        // Symmetry point.
        assert!((reg_inc_beta(2.5f64, 2.5, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_matches_cauchy_and_normal_limits() {
        // df = 1 is Cauchy: F(t) = 1/2 + atan(t)/π.
        for &t in &[-3.0f64, -1.0, 0.0, 0.5, 2.0] {
            let exact = 0.5 + t.atan() / std::f64::consts::PI;
            assert!((t_cdf(t, 1.0f64) - exact).abs() < 1e-10, "t={t}");
        }
        assert!((t_cdf(0.0f64, 7.0) - 0.5).abs() < 1e-14);
        // Symmetry.
        assert!((t_cdf(1.7f64, 5.0) + t_cdf(-1.7f64, 5.0) - 1.0).abs() < 1e-12);
        // Large df approaches the normal quantile.
        assert!((t_cdf(1.959964f64, 1e6) - 0.975).abs() < 1e-4);
    }

    #[test]
    fn t_quantiles_match_published_values() {
        assert!((t_quantile(0.975f64, 2.0) - 4.302653).abs() < 1e-5);
        assert!((t_quantile(0.975f64, 6.0) - 2.446912).abs() < 1e-5);
        assert!((t_quantile(0.025f64, 6.0) + 2.446912).abs() < 1e-5);
        assert_eq!(t_quantile(0.5f64, 9.0), 0.0);
        // Round trip.
        for &p in &[0.6, 0.9, 0.975, 0.999] {
            let q = t_quantile(p, 11.0f64);
            assert!((t_cdf(q, 11.0) - p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn f_upper_tail_exact_point() {
        // d2/(d2 + d1 f) = 0.5 and I_[0.5](3,1) = 0.125 exactly.
        assert!((f_sf(3.0f64, 2.0, 6.0) - 0.125).abs() < 1e-12);
        assert_eq!(f_sf(0.0f64, 2.0, 6.0), 1.0);
        assert_eq!(f_sf(-1.0f64, 2.0, 6.0), 1.0);
    }

    #[test]
    fn distributions_instantiate_at_f32() {
        let p = t_cdf(1.5f32, 8.0);
        assert!((p - t_cdf(1.5f64, 8.0) as f32).abs() < 1e-4);
    }

    #[test]
    fn describe_fixtures() {
        let d = describe(&[5.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!((d.mean, d.sd), (5.0, 0.0));
        assert_eq!((d.ci_low, d.ci_high), (5.0, 5.0));

        let d = describe(&[1.0, 2.0, 3.0]).unwrap();
        assert!((d.mean - 2.0).abs() < 1e-12);
        assert!((d.sd - 1.0).abs() < 1e-12);
        let half = 4.302653 / 3.0f64.sqrt();
        assert!((d.ci_low - (2.0 - half)).abs() < 5e-6, "{}", d.ci_low);
        assert!((d.ci_high - (2.0 + half)).abs() < 5e-6, "{}", d.ci_high);

        assert!(describe(&[]).is_err());
        assert!(describe(&[1.0]).is_err());
    }

    fn fixture() -> Vec<GroupSample> {
        use RefractionGroup::*;
        vec![
            GroupSample {
                group: Normal,
                values: vec![1.0, 2.0, 3.0],
            },
            GroupSample {
                group: LowMyopia,
                values: vec![2.0, 3.0, 4.0],
            },
            GroupSample {
                group: ModerateMyopia,
                values: vec![3.0, 4.0, 5.0],
            },
        ]
    }

    #[test]
    fn anova_hand_computed_fixture() {
        let a = one_way_anova(&fixture()).unwrap();
        assert!((a.f_stat - 3.0).abs() < 1e-12);
        assert_eq!((a.df_between, a.df_within), (2, 6));
        assert!((a.mse_within - 1.0).abs() < 1e-12);
        assert!((a.p_value - 0.125).abs() < 5e-4);
    }

    #[test]
    fn anova_degenerate_cases() {
        use RefractionGroup::*;
        let same = vec![
            GroupSample {
                group: Normal,
                values: vec![1.0, 2.0],
            },
            GroupSample {
                group: HighMyopia,
                values: vec![1.0, 2.0],
            },
        ];
        let a = one_way_anova(&same).unwrap();
        assert_eq!(a.f_stat, 0.0);
        assert_eq!(a.p_value, 1.0);

        let constant = vec![
            GroupSample {
                group: Normal,
                values: vec![2.0, 2.0],
            },
            GroupSample {
                group: HighMyopia,
                values: vec![2.0, 2.0],
            },
        ];
        let a = one_way_anova(&constant).unwrap();
        assert_eq!((a.f_stat, a.p_value), (0.0, 1.0));

        let bad = vec![
            GroupSample {
                group: Normal,
                values: vec![1.0],
            },
            GroupSample {
                group: HighMyopia,
                values: vec![1.0, 2.0],
            },
        ];
        assert!(one_way_anova(&bad).is_err());
        assert!(one_way_anova(&fixture()[..1]).is_err());
    }

    #[test]
    fn pairwise_fixture_normal_vs_moderate() {
        use RefractionGroup::*;
        let samples = fixture();
        let anova = one_way_anova(&samples).unwrap();
        let c = pairwise_md(&samples, Normal, ModerateMyopia, &anova, false).unwrap();
        assert!((c.md + 2.0).abs() < 1e-12);
        assert!((c.ci_low + 3.998).abs() < 5e-4, "{}", c.ci_low);
        assert!((c.ci_high + 0.002).abs() < 5e-4, "{}", c.ci_high);
        // t² = 6 at 6 df, so p = I_{1/2}(3, 1/2); substituting v = 1−u makes
        // the beta integral elementary and gives p = 1 − 43√2/64.
        let exact = 1.0 - 43.0 * 2.0f64.sqrt() / 64.0;
        assert!((c.p_value - exact).abs() < 1e-9, "{}", c.p_value);
        // CI excludes zero iff p < 0.05.
        assert!(c.p_value < 0.05 && c.ci_high < 0.0);
        // Bonferroni (3 comparisons) pushes this past 0.05 and keeps CI/p
        // consistent.
        let cb = pairwise_md(&samples, Normal, ModerateMyopia, &anova, true).unwrap();
        assert!(cb.p_value > 0.05 && cb.ci_low < 0.0 && cb.ci_high > 0.0);
        assert!(pairwise_md(&samples, Normal, Normal, &anova, false).is_err());
        assert!(pairwise_md(&samples, Normal, HighMyopia, &anova, false).is_err());
    }

    #[test]
    fn pairwise_identical_groups_is_null() {
        use RefractionGroup::*;
        let samples = vec![
            GroupSample {
                group: Normal,
                values: vec![1.0, 2.0, 3.0],
            },
            GroupSample {
                group: HighMyopia,
                values: vec![1.0, 2.0, 3.0],
            },
        ];
        let anova = one_way_anova(&samples).unwrap();
        let c = pairwise_md(&samples, Normal, HighMyopia, &anova, false).unwrap();
        assert_eq!(c.md, 0.0);
        assert!((c.ci_low + c.ci_high).abs() < 1e-12);
        assert!((c.p_value - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn anova_location_and_scale_invariance(
            g1 in proptest::collection::vec(-50.0f64..50.0, 2..12),
            g2 in proptest::collection::vec(-50.0f64..50.0, 2..12),
            g3 in proptest::collection::vec(-50.0f64..50.0, 2..12),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            use RefractionGroup::*;
            let mk = |vs: &[f64]| vec![
                GroupSample { group: Normal, values: vs.to_vec() },
                GroupSample { group: LowMyopia, values: g2.clone() },
                GroupSample { group: HighMyopia, values: g3.clone() },
            ];
            let base = one_way_anova(&mk(&g1)).unwrap();
            let moved: Vec<GroupSample> = mk(&g1)
                .into_iter()
                .map(|s| GroupSample {
                    group: s.group,
                    values: s.values.iter().map(|v| v * scale + shift).collect(),
                })
                .collect();
            let trans = one_way_anova(&moved).unwrap();
            if base.f_stat.is_finite() {
                prop_assert!((base.f_stat - trans.f_stat).abs()
                    <= 1e-6 * (1.0 + base.f_stat.abs()));
                prop_assert!((base.p_value - trans.p_value).abs() < 1e-6);
            }
        }

        #[test]
        fn pairwise_ci_and_p_agree(
            g1 in proptest::collection::vec(-50.0f64..50.0, 3..12),
            g2 in proptest::collection::vec(-50.0f64..50.0, 3..12),
        ) {
            use RefractionGroup::*;
            let samples = vec![
                GroupSample { group: Normal, values: g1 },
                GroupSample { group: HighMyopia, values: g2 },
            ];
            let anova = one_way_anova(&samples).unwrap();
            let c = pairwise_md(&samples, Normal, HighMyopia, &anova, false).unwrap();
            prop_assert!(c.ci_low <= c.md && c.md <= c.ci_high);
            let excludes = c.ci_low > 0.0 || c.ci_high < 0.0;
            if (c.p_value - 0.05).abs() > 1e-9 {
                prop_assert_eq!(c.p_value < 0.05, excludes);
            }
        }
    }

    fn mk_record(id: &str, system: System, ma: Option<f64>, ba: Vec<f64>) -> MorphometryRecord {
        MorphometryRecord {
            id: id.into(),
            system,
            ma_deg: ma,
            ba_deg: ba,
            bc: vec![],
            bea_deg: vec![],
            bec: vec![],
            counts: JunctionCounts::default(),
        }
    }

    #[test]
    fn cohort_tables_join_and_missing_cells() {
        use RefractionGroup::*;
        let mut recs = Vec::new();
        let groups = [
            (Normal, 120.0),
            (LowMyopia, 118.0),
            (ModerateMyopia, 115.0),
            (HighMyopia, 110.0),
        ];
        for (g, base) in groups {
            for i in 0..3 {
                recs.push((
                    g,
                    mk_record(
                        &format!("{}{}", g.label(), i),
                        System::Vein,
                        Some(base + i as f64),
                        vec![],
                    ),
                ));
            }
        }
        // One artery record: n = 1 everywhere → inferential cells missing.
        recs.push((Normal, mk_record("a0", System::Artery, Some(100.0), vec![60.0, 70.0])));
        let borrowed: Vec<(RefractionGroup, &MorphometryRecord)> =
            recs.iter().map(|(g, r)| (*g, r)).collect();
        let t = cohort_tables(&borrowed, false).unwrap();

        assert_eq!(t.table1.len(), 2 * 5 * 4);
        let vein_ma_normal = t
            .table1
            .iter()
            .find(|r| r.system == System::Vein && r.parameter == Param::MaDeg && r.group == Normal)
            .unwrap();
        assert_eq!(vein_ma_normal.n, 3);
        assert!((vein_ma_normal.mean.unwrap() - 121.0).abs() < 1e-12);
        assert!(vein_ma_normal.anova_p.is_some());

        let artery_ba_normal = t
            .table1
            .iter()
            .find(|r| {
                r.system == System::Artery && r.parameter == Param::BaDeg && r.group == Normal
            })
            .unwrap();
        assert_eq!(artery_ba_normal.n, 1);
        assert!(artery_ba_normal.mean.is_none() && artery_ba_normal.anova_p.is_none());

        let nh = t
            .table2
            .iter()
            .find(|r| {
                r.system == System::Vein
                    && r.parameter == Param::MaDeg
                    && r.group_a == Normal
                    && r.group_b == HighMyopia
            })
            .unwrap();
        assert!((nh.md.unwrap() - 10.0).abs() < 1e-12);
        assert!(nh.p_value.unwrap() < 0.001);

        assert_eq!(t.table3.len(), 2 * 5 * 3);
        let csv = t.table1_csv_string();
        assert!(csv.starts_with("parameter,system,group,n,mean"));
        assert!(csv.lines().count() == 1 + 40);
        let j: serde_json::Value = serde_json::from_str(&t.to_json_string()).unwrap();
        assert!(j["table2"].as_array().unwrap().len() == 2 * 5 * 3);

        // A single group cannot form a cohort.
        let solo: Vec<_> = borrowed
            .iter()
            .filter(|(g, _)| *g == Normal)
            .cloned()
            .collect();
        assert!(cohort_tables(&solo, false).is_err());
    }
}
