//! `vasomet`: analyze labeled fundus masks, batch-process manifests, build
//! cohort tables and charts, and synthesize ground-truthed test data.
//!
//! Exit codes: 0 success, 1 usage/config/input error, 2 partial failure
//! (some output produced, some skipped). Batch treats per-row failures as
//! data, not errors: they land in the summary and the exit code stays 0.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use vasomet::ingest::{
    classify_refraction, quality_gate, read_manifest, write_manifest, DiscAnnotation, Eye,
    GateReason, LabeledFundus, ManifestEntry, RefractionGroup,
};
use vasomet::morphometry::{analyze_image, records_to_json_string, MorphometryRecord};
use vasomet::plot::render_charts;
use vasomet::raster::Mask;
use vasomet::geom::Vec2;
use vasomet::stats::{cohort_tables, CohortTables};
use vasomet::synth::{generate, write_cohort, CohortSpec, SynthSpec};
use vasomet::{Error, Result, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "vasomet",
    version,
    about = "Retinal vascular morphometry from labeled artery/vein masks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// key=value config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (for `analyze`: output file).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for batch processing; 0 = one per CPU.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// RNG seed for synthetic data.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// Per-item progress on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Measure one labeled image; metrics JSON to stdout or --out.
    Analyze(AnalyzeArgs),
    /// Measure every manifest row; per-image metrics plus a summary CSV.
    Batch(BatchArgs),
    /// Cohort tables (three CSVs and a combined JSON) from batch metrics.
    Stats(StatsArgs),
    /// SVG bar charts from a stats tables JSON.
    Plot(PlotArgs),
    /// Generate a ground-truthed synthetic image or four-group cohort.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Artery mask PNG.
    #[arg(long, value_name = "PNG")]
    artery: PathBuf,
    /// Vein mask PNG.
    #[arg(long, value_name = "PNG")]
    vein: PathBuf,
    /// Disc annotation JSON.
    #[arg(long, value_name = "JSON")]
    disc: PathBuf,
    /// Image id stamped into the metrics.
    #[arg(long, default_value = "image")]
    id: String,
    /// Spherical equivalent refraction, diopters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ser: f64,
}

#[derive(Args, Debug)]
struct BatchArgs {
    /// Manifest CSV; mask and disc paths resolve against its directory.
    #[arg(long, value_name = "CSV")]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Manifest CSV supplying SER (and so group) per image id.
    #[arg(long, value_name = "CSV")]
    manifest: PathBuf,
    /// Directory of per-image metrics JSON written by `batch`.
    #[arg(long, value_name = "DIR")]
    metrics: PathBuf,
    /// Bonferroni-adjust the pairwise comparisons.
    #[arg(long)]
    bonferroni: bool,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// tables.json written by `stats`.
    #[arg(long, value_name = "JSON")]
    tables: PathBuf,
    /// Chart all five parameters instead of the MA/BA/BEC set.
    #[arg(long)]
    all_params: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Images per group; selects cohort mode (4·N images + manifest + ledger).
    #[arg(long, value_name = "N")]
    cohort_n: Option<usize>,
    /// Image id in single-image mode.
    #[arg(long, default_value = "synthetic")]
    id: String,
    /// Vein main-angle offset for the HighMyopia group, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    high_vein_ma_offset: f64,
    /// Artery main-angle offset for the HighMyopia group, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    high_artery_ma_offset: f64,
    /// SD of per-system main-angle jitter, degrees.
    #[arg(long, default_value_t = 0.0)]
    ma_noise_deg: f64,
    /// SD of per-junction daughter-angle jitter, degrees.
    #[arg(long, default_value_t = 0.0)]
    angle_noise_deg: f64,
    /// Raster width and height, pixels.
    #[arg(long, default_value_t = 1024)]
    size: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = cli.global.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.global.out {
        cfg.out = Some(o.clone());
    }
    let verbose = cli.global.verbose;
    match cli.cmd {
        Cmd::Analyze(args) => cmd_analyze(args, &cfg),
        Cmd::Batch(args) => cmd_batch(args, &cfg, verbose),
        Cmd::Stats(args) => cmd_stats(args, &cfg),
        Cmd::Plot(args) => cmd_plot(args, &cfg, verbose),
        Cmd::Synth(args) => cmd_synth(args, &cfg),
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn cmd_analyze(args: AnalyzeArgs, cfg: &RunConfig) -> Result<ExitCode> {
    let fundus = LabeledFundus {
        id: args.id.clone(),
        eye: Eye::Right,
        ser: args.ser,
        age: None,
        artery_mask: Mask::from_png(&args.artery)?,
        vein_mask: Mask::from_png(&args.vein)?,
        disc: DiscAnnotation::from_json_file(&args.disc)?,
    };
    // A sparse or empty mask only dooms its own system (exit 2 below); the
    // record-level gate reasons reject the whole image.
    let fatal: Vec<String> = quality_gate(&fundus, &cfg.quality)
        .into_iter()
        .filter(|r| !matches!(r, GateReason::EmptyMask { .. }))
        .map(|r| r.to_string())
        .collect();
    if !fatal.is_empty() {
        return Err(Error::Input(format!(
            "{}: rejected by quality gate: {}",
            args.id,
            fatal.join(", ")
        )));
    }
    let analysis = analyze_image(&fundus, cfg)?;
    let mut records = Vec::new();
    let mut partial = false;
    for (label, res) in [("artery", &analysis.artery), ("vein", &analysis.vein)] {
        match res {
            Ok(sys) => records.push(sys.record.clone()),
            Err(e) => {
                partial = true;
                eprintln!("{}: {label}: {e}", args.id);
            }
        }
    }
    let json = records_to_json_string(&records);
    match &cfg.out {
        Some(path) => write_text(path, &json)?,
        None => println!("{json}"),
    }
    Ok(ExitCode::from(if partial { 2 } else { 0 }))
}

// ---------------------------------------------------------------------------
// batch
// ---------------------------------------------------------------------------

struct RowOutcome {
    id: String,
    status: &'static str,
    detail: String,
    records: Vec<MorphometryRecord>,
}

fn process_row(
    row: Result<ManifestEntry>,
    base: &Path,
    cfg: &RunConfig,
) -> RowOutcome {
    let fail = |id: String, detail: String| RowOutcome {
        id,
        status: "failed",
        detail,
        records: Vec::new(),
    };
    let entry = match row {
        Ok(entry) => entry,
        Err(e) => {
            let id = match &e {
                Error::ManifestRow { line, .. } => format!("manifest-line-{line}"),
                _ => "manifest-row".to_string(),
            };
            return fail(id, e.to_string());
        }
    };
    let fundus = match entry.load(base) {
        Ok(f) => f,
        Err(e) => return fail(entry.id.clone(), e.to_string()),
    };
    let gate = quality_gate(&fundus, &cfg.quality);
    if !gate.is_empty() {
        let reasons: Vec<String> = gate.iter().map(|r| r.to_string()).collect();
        return RowOutcome {
            id: entry.id,
            status: "rejected",
            detail: reasons.join("; "),
            records: Vec::new(),
        };
    }
    let analysis = match analyze_image(&fundus, cfg) {
        Ok(a) => a,
        Err(e) => return fail(entry.id.clone(), e.to_string()),
    };
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (label, res) in [("artery", &analysis.artery), ("vein", &analysis.vein)] {
        match res {
            Ok(sys) => records.push(sys.record.clone()),
            Err(e) => problems.push(format!("{label}: {e}")),
        }
    }
    if records.is_empty() {
        return fail(entry.id, problems.join("; "));
    }
    RowOutcome {
        id: entry.id,
        status: "accepted",
        detail: problems.join("; "),
        records,
    }
}

fn cmd_batch(args: BatchArgs, cfg: &RunConfig, verbose: bool) -> Result<ExitCode> {
    let dir = out_dir(cfg);
    let metrics_dir = dir.join("metrics");
    fs::create_dir_all(&metrics_dir).map_err(|e| Error::io(&metrics_dir, e))?;
    let base = args
        .manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let rows = read_manifest(&args.manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut outcomes: Vec<RowOutcome> =
        pool.install(|| rows.into_par_iter().map(|row| process_row(row, &base, cfg)).collect());
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));

    let mut summary = SummaryCsv::new();
    let mut counts = [0usize; 3];
    for o in &outcomes {
        if !o.records.is_empty() {
            let path = metrics_dir.join(format!("{}.json", o.id));
            write_text(&path, &records_to_json_string(&o.records))?;
        }
        match o.status {
            "accepted" => counts[0] += 1,
            "rejected" => counts[1] += 1,
            _ => counts[2] += 1,
        }
        summary.row(&o.id, o.status, &o.detail);
        if verbose {
            eprintln!("batch: {} {}{}", o.id, o.status, fmt_detail(&o.detail));
        }
    }
    write_text(&dir.join("summary.csv"), &summary.finish())?;
    eprintln!(
        "batch: {} rows: {} accepted, {} rejected, {} failed",
        outcomes.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(ExitCode::SUCCESS)
}

fn fmt_detail(detail: &str) -> String {
    if detail.is_empty() {
        String::new()
    } else {
        format!(" ({detail})")
    }
}

// Three-column summary CSV; error text may contain commas, so fields are
// quoted when needed.
struct SummaryCsv {
    buf: String,
}

impl SummaryCsv {
    fn new() -> Self {
        SummaryCsv {
            buf: "id,status,detail\n".to_string(),
        }
    }

    fn row(&mut self, id: &str, status: &str, detail: &str) {
        for (i, field) in [id, status, detail].into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            if field.contains([',', '"', '\n']) {
                self.buf.push('"');
                self.buf.push_str(&field.replace('"', "\"\""));
                self.buf.push('"');
            } else {
                self.buf.push_str(field);
            }
        }
        self.buf.push('\n');
    }

    fn finish(self) -> String {
        self.buf
    }
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

fn cmd_stats(args: StatsArgs, cfg: &RunConfig) -> Result<ExitCode> {
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows = read_manifest(&args.manifest)?;
    let mut pairs: Vec<(RefractionGroup, MorphometryRecord)> = Vec::new();
    for row in rows {
        let entry = match row {
            Ok(entry) => entry,
            Err(e) => {
                eprintln!("stats: skipping manifest row: {e}");
                continue;
            }
        };
        let group = match classify_refraction(entry.ser) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("stats: skipping {}: {e}", entry.id);
                continue;
            }
        };
        let path = args.metrics.join(format!("{}.json", entry.id));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("stats: skipping {}: {e}", path.display());
                continue;
            }
        };
        let records: Vec<MorphometryRecord> = serde_json::from_str(&text).map_err(|e| {
            Error::Json {
                path: path.clone(),
                msg: e.to_string(),
            }
        })?;
        pairs.extend(records.into_iter().map(|r| (group, r)));
    }
    let refs: Vec<(RefractionGroup, &MorphometryRecord)> =
        pairs.iter().map(|(g, r)| (*g, r)).collect();
    let tables = cohort_tables(&refs, cfg.bonferroni || args.bonferroni)?;
    write_text(&dir.join("table1.csv"), &tables.table1_csv_string())?;
    write_text(&dir.join("table2.csv"), &tables.table2_csv_string())?;
    write_text(&dir.join("table3.csv"), &tables.table3_csv_string())?;
    write_text(&dir.join("tables.json"), &tables.to_json_string())?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

fn cmd_plot(args: PlotArgs, cfg: &RunConfig, verbose: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.tables).map_err(|e| Error::io(&args.tables, e))?;
    let tables: CohortTables = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: args.tables.clone(),
        msg: e.to_string(),
    })?;
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (name, svg) in render_charts(&tables, cfg.plot_all_params || args.all_params) {
        write_text(&dir.join(&name), &svg)?;
        if verbose {
            eprintln!("plot: {name}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: SynthArgs, cfg: &RunConfig) -> Result<ExitCode> {
    let dir = out_dir(cfg);
    let mut base = SynthSpec::default_image(args.id.clone(), cfg.seed);
    base.noise.ma_jitter_deg = args.ma_noise_deg;
    base.noise.angle_jitter_deg = args.angle_noise_deg;
    base.width = args.size;
    base.height = args.size;
    base.disc.center = Vec2::new(args.size as f64 / 2.0, args.size as f64 / 2.0);
    match args.cohort_n {
        Some(n) => {
            let mut cohort = CohortSpec::new(base, n, cfg.seed);
            let high = cohort.effect_mut(RefractionGroup::HighMyopia);
            high.vein_ma_offset_deg = args.high_vein_ma_offset;
            high.artery_ma_offset_deg = args.high_artery_ma_offset;
            let summary = write_cohort(&cohort, &dir)?;
            eprintln!(
                "synth: {} images, manifest {}, ledger {}",
                summary.images,
                summary.manifest.display(),
                summary.ledger.display()
            );
        }
        None => {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let (fundus, gt) = generate(&base)?;
            let artery_rel = PathBuf::from(format!("{}_artery.png", args.id));
            let vein_rel = PathBuf::from(format!("{}_vein.png", args.id));
            let disc_rel = PathBuf::from(format!("{}_disc.json", args.id));
            fundus.artery_mask.to_png(&dir.join(&artery_rel))?;
            fundus.vein_mask.to_png(&dir.join(&vein_rel))?;
            fundus.disc.to_json_file(&dir.join(&disc_rel))?;
            write_text(&dir.join(format!("{}_gt.json", args.id)), &gt.to_json_string())?;
            let entry = ManifestEntry {
                id: args.id.clone(),
                eye: fundus.eye,
                ser: fundus.ser,
                age: fundus.age,
                artery_mask: artery_rel,
                vein_mask: vein_rel,
                disc_json: disc_rel,
            };
            write_manifest(&dir.join("manifest.csv"), &[entry])?;
            eprintln!("synth: wrote {} into {}", args.id, dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
