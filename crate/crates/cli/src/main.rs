//! `obbkit` command-line tool.
//!
//! Every subcommand reads plain-text or tensor files, runs one library stage
//! and prints fixed six-decimal text. Exit status is 0 on success, 2 for
//! usage errors and 1 for bad input data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use obbkit::coder::{decode, encode};
use obbkit::eval::{evaluate_map, proposal_hits, ApMetric, GtInstance, ImageEval};
use obbkit::io::{
    fmt6, format_annotations, format_detections, parse_annotations, parse_detections, parse_rows, read_tensor,
    ClassMap,
};
use obbkit::nms::{nms, per_class_nms, IouKind};
use obbkit::overlap::{hbox_iou, ConvexQuad};
use obbkit::pipeline::{merge_patches, postprocess_detections, select_proposals, Proposal, ProposalConfig};
use obbkit::roi_align::{project_rroi, rroi_align, FeatureMap, RRoI};
use obbkit::tiling::{clip_annotations_to_tile, tile_offsets, TileScheme};
use obbkit::{vertices_from_midpoint, Delta6, HBox, MidpointBox, Quad, RotatedRect, ScoredBox};

#[derive(Parser, Debug)]
#[command(name = "obbkit", version, about = "Oriented object detection kernels")]
struct Cli {
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// IoU of corresponding rows in two box files.
    Iou(IouArgs),
    /// Greedy non-maximum suppression over a detection file.
    Nms(NmsArgs),
    /// Apply regression offsets to anchors.
    Decode(DecodeArgs),
    /// Regression offsets of midpoint-offset boxes relative to anchors.
    Encode(EncodeArgs),
    /// Rotated RoIAlign of one RoI over a (C, H, W) tensor file.
    Roialign(RoiAlignArgs),
    /// Per-level top-k and horizontal NMS, then global top-k of proposals.
    Proposals(ProposalArgs),
    /// Score filtering and per-class polygon NMS of detections.
    Postprocess(PostprocessArgs),
    /// Patch offsets for an image, optionally splitting annotations per patch.
    Tile(TileArgs),
    /// Merge per-patch detections into image coordinates.
    Merge(MergeArgs),
    /// Per-class AP and mAP of detections against annotations.
    EvalMap(EvalMapArgs),
    /// Recall of the top-k proposals against annotations.
    EvalRecall(EvalRecallArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct IouInputs {
    /// Two files of quads, one `x1 y1 x2 y2 x3 y3 x4 y4` per line.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    quads: Option<Vec<PathBuf>>,
    /// Two files of axis-aligned boxes, one `cx cy w h` per line.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    hboxes: Option<Vec<PathBuf>>,
}

#[derive(Args, Debug)]
struct IouArgs {
    #[command(flatten)]
    inputs: IouInputs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// External axis-aligned rectangles.
    Hbox,
    /// Exact polygon overlap.
    Quad,
}

#[derive(Args, Debug)]
struct NmsArgs {
    /// Detection file (`class score x1 y1 ... x4 y4`).
    #[arg(long)]
    dets: PathBuf,
    /// Suppress boxes whose IoU with a kept box exceeds this.
    #[arg(long, default_value_t = 0.1, value_parser = unit_interval)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = KindArg::Quad)]
    kind: KindArg,
    /// Suppress only within each class.
    #[arg(long)]
    per_class: bool,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Anchors, one `cx cy w h` per line.
    #[arg(long)]
    anchors: PathBuf,
    /// Offsets, one `dx dy dw dh dalpha dbeta` per line.
    #[arg(long)]
    deltas: PathBuf,
    /// Print the four vertices instead of `cx cy w h da db`.
    #[arg(long)]
    vertices: bool,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Anchors, one `cx cy w h` per line.
    #[arg(long)]
    anchors: PathBuf,
    /// Targets, one midpoint-offset box `cx cy w h da db` per line.
    #[arg(long)]
    boxes: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct RoiInput {
    /// RoI in feature coordinates: "xr yr wr hr theta".
    #[arg(long, allow_hyphen_values = true)]
    roi: Option<String>,
    /// Image-space rectangle "cx cy w h theta", projected with --stride.
    #[arg(long, allow_hyphen_values = true)]
    rect: Option<String>,
}

#[derive(Args, Debug)]
struct RoiAlignArgs {
    /// Feature tensor with dims (C, H, W).
    #[arg(long)]
    feat: PathBuf,
    #[command(flatten)]
    input: RoiInput,
    /// Feature stride in pixels (4, 8, 16 or 32).
    #[arg(long, default_value_t = 4)]
    stride: u32,
    /// Output bins per side.
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u32).range(1..))]
    m: u32,
    /// Sample points per bin along each axis.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
}

#[derive(Args, Debug)]
struct ProposalArgs {
    /// Proposals, one `level score cx cy w h da db` per line.
    #[arg(long)]
    input: PathBuf,
    /// Proposals kept per level before NMS.
    #[arg(long, default_value_t = 2000)]
    per_level: usize,
    /// Horizontal NMS threshold on external rectangles.
    #[arg(long, default_value_t = 0.8, value_parser = unit_interval)]
    nms_h: f64,
    /// Proposals kept over all levels.
    #[arg(long, default_value_t = 1000)]
    topk: usize,
}

#[derive(Args, Debug)]
struct PostprocessArgs {
    #[arg(long)]
    dets: PathBuf,
    /// Keep detections scoring strictly above this.
    #[arg(long, default_value_t = 0.05, value_parser = unit_interval)]
    score_thr: f64,
    /// Per-class polygon NMS threshold.
    #[arg(long, default_value_t = 0.1, value_parser = unit_interval)]
    nms_poly: f64,
}

#[derive(Args, Debug)]
struct TileArgs {
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// Patch side in pixels.
    #[arg(long, default_value_t = 1024)]
    patch: u32,
    /// Step between patch origins in pixels.
    #[arg(long, default_value_t = 824)]
    stride: u32,
    /// Annotation file to split; requires --out-dir.
    #[arg(long, requires = "out_dir")]
    annotations: Option<PathBuf>,
    /// Directory receiving one `<ox>_<oy>.txt` annotation file per patch.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MergeArgs {
    /// Per-patch detection files.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Patch origins `ox,oy`, one per input file.
    #[arg(long, num_args = 1.., required = true, value_parser = parse_offset)]
    offsets: Vec<(u32, u32)>,
    /// Per-class polygon NMS threshold.
    #[arg(long, default_value_t = 0.1, value_parser = unit_interval)]
    nms_poly: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    /// 11-point interpolated AP.
    Voc07,
    /// Area under the precision envelope.
    Voc12,
}

#[derive(Args, Debug)]
struct EvalMapArgs {
    /// Detection files, one per image.
    #[arg(long, num_args = 1.., required = true)]
    dets: Vec<PathBuf>,
    /// Annotation files, paired with --dets by position.
    #[arg(long, num_args = 1.., required = true)]
    gts: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricArg::Voc07)]
    metric: MetricArg,
    /// Comma-separated class list; otherwise classes are taken from the files.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// IoU needed for a true positive.
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    iou: f64,
}

#[derive(Args, Debug)]
struct EvalRecallArgs {
    /// Proposal files (detection format), one per image.
    #[arg(long, num_args = 1.., required = true)]
    proposals: Vec<PathBuf>,
    /// Annotation files, paired with --proposals by position.
    #[arg(long, num_args = 1.., required = true)]
    gts: Vec<PathBuf>,
    /// Proposal budgets, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = [300, 1000, 2000])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    iou: f64,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_offset(s: &str) -> Result<(u32, u32), String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("offset {s:?} must look like ox,oy"))?;
    let p = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad offset component {t:?}"));
    Ok((p(x)?, p(y)?))
}

/// Flag combinations clap cannot express; reported with exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    parse_rows(&read_text(path)?, width).with_context(|| format!("parsing {}", path.display()))
}

fn five(s: &str, what: &str) -> Result<[f64; 5]> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--{what} must be five numbers, got {s:?}")))?;
    v.try_into()
        .map_err(|_| usage(format!("--{what} must be five numbers, got {s:?}")))
}

fn hbox_row(r: &[f64]) -> Result<HBox> {
    Ok(HBox::new(r[0], r[1], r[2], r[3])?)
}

fn quad_row(r: &[f64]) -> Quad {
    Quad::from_coords(r.try_into().expect("row width checked by parse_rows"))
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        bail!("{what}: {a} vs {b} rows");
    }
    Ok(())
}

fn cmd_iou(a: &IouArgs) -> Result<String> {
    let mut out = String::new();
    if let Some(files) = &a.inputs.quads {
        let (qa, qb) = (rows(&files[0], 8)?, rows(&files[1], 8)?);
        same_len(qa.len(), qb.len(), "quad files differ in length")?;
        for (ra, rb) in qa.iter().zip(&qb) {
            let (x, y) = (ConvexQuad::new(&quad_row(ra))?, ConvexQuad::new(&quad_row(rb))?);
            writeln!(out, "{}", fmt6(x.iou(&y)))?;
        }
    } else if let Some(files) = &a.inputs.hboxes {
        let (ha, hb) = (rows(&files[0], 4)?, rows(&files[1], 4)?);
        same_len(ha.len(), hb.len(), "box files differ in length")?;
        for (ra, rb) in ha.iter().zip(&hb) {
            writeln!(out, "{}", fmt6(hbox_iou(&hbox_row(ra)?, &hbox_row(rb)?)))?;
        }
    }
    Ok(out)
}

fn load_dets(path: &Path, classes: &mut ClassMap) -> Result<Vec<ScoredBox>> {
    parse_detections(&read_text(path)?, classes).with_context(|| format!("parsing {}", path.display()))
}

fn load_gts(path: &Path, classes: &mut ClassMap) -> Result<Vec<GtInstance>> {
    parse_annotations(&read_text(path)?, classes).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_nms(a: &NmsArgs) -> Result<String> {
    let mut classes = ClassMap::open();
    let dets = load_dets(&a.dets, &mut classes)?;
    let kind = match a.kind {
        KindArg::Hbox => IouKind::Hbox,
        KindArg::Quad => IouKind::Quad,
    };
    let keep = if a.per_class {
        per_class_nms(&dets, a.iou, kind)
    } else {
        nms(&dets, a.iou, kind)
    };
    let kept: Vec<ScoredBox> = keep.into_iter().map(|i| dets[i]).collect();
    Ok(format_detections(&kept, &classes))
}

fn write_row(out: &mut String, vals: &[f64]) {
    let line: Vec<String> = vals.iter().map(|&v| fmt6(v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

fn cmd_decode(a: &DecodeArgs) -> Result<String> {
    let (anchors, deltas) = (rows(&a.anchors, 4)?, rows(&a.deltas, 6)?);
    same_len(anchors.len(), deltas.len(), "anchors and deltas differ in length")?;
    let mut out = String::new();
    for (ra, rd) in anchors.iter().zip(&deltas) {
        let d = Delta6::from_array(rd.as_slice().try_into()?);
        let b = decode(&hbox_row(ra)?, &d);
        if a.vertices {
            write_row(&mut out, &vertices_from_midpoint(&b)?.coords());
        } else {
            write_row(&mut out, &[b.cx, b.cy, b.w, b.h, b.da, b.db]);
        }
    }
    Ok(out)
}

fn cmd_encode(a: &EncodeArgs) -> Result<String> {
    let (anchors, boxes) = (rows(&a.anchors, 4)?, rows(&a.boxes, 6)?);
    same_len(anchors.len(), boxes.len(), "anchors and boxes differ in length")?;
    let mut out = String::new();
    for (ra, rb) in anchors.iter().zip(&boxes) {
        let gt = MidpointBox::new(rb[0], rb[1], rb[2], rb[3], rb[4], rb[5])?;
        write_row(&mut out, &encode(&hbox_row(ra)?, &gt)?.to_array());
    }
    Ok(out)
}

fn cmd_roialign(a: &RoiAlignArgs) -> Result<String> {
    let tensor = read_tensor(&a.feat).with_context(|| format!("reading {}", a.feat.display()))?;
    let feat = FeatureMap::from_tensor(&tensor, a.stride)?;
    let roi = if let Some(s) = &a.input.roi {
        let [xr, yr, wr, hr, theta] = five(s, "roi")?;
        RRoI { xr, yr, wr, hr, theta }
    } else {
        let [cx, cy, w, h, t] = five(a.input.rect.as_deref().unwrap_or_default(), "rect")?;
        project_rroi(&RotatedRect::new(cx, cy, w, h, t)?, a.stride)
    };
    let pooled = rroi_align(&feat, &roi, a.m as usize, a.samples as usize)?;
    let mut out = String::new();
    for bin in pooled.data.chunks(pooled.channels) {
        write_row(&mut out, bin);
    }
    Ok(out)
}

fn cmd_proposals(a: &ProposalArgs) -> Result<String> {
    let mut levels: Vec<Vec<Proposal>> = Vec::new();
    for r in rows(&a.input, 8)? {
        if r[0] < 0.0 || r[0].fract() != 0.0 || r[0] > 64.0 {
            bail!("level {} must be a small non-negative integer", r[0]);
        }
        let level = r[0] as usize;
        if levels.len() <= level {
            levels.resize_with(level + 1, Vec::new);
        }
        levels[level].push(Proposal {
            bbox: MidpointBox::new(r[2], r[3], r[4], r[5], r[6], r[7])?,
            score: r[1],
        });
    }
    let cfg = ProposalConfig {
        per_level: a.per_level,
        nms_iou: a.nms_h,
        max_total: a.topk,
    };
    let props = select_proposals(&levels, &cfg)?;
    Ok(format_detections(&props, &ClassMap::closed(&["proposal"])))
}

fn cmd_postprocess(a: &PostprocessArgs) -> Result<String> {
    let mut classes = ClassMap::open();
    let dets = load_dets(&a.dets, &mut classes)?;
    Ok(format_detections(
        &postprocess_detections(&dets, a.score_thr, a.nms_poly),
        &classes,
    ))
}

fn cmd_tile(a: &TileArgs) -> Result<String> {
    let scheme = TileScheme::new(a.patch, a.stride).map_err(|e| usage(e.to_string()))?;
    if a.width == 0 || a.height == 0 {
        return Err(usage("--width and --height must be positive"));
    }
    let offsets = tile_offsets(a.width, a.height, &scheme)?;
    let mut out = String::new();
    for (ox, oy) in &offsets {
        writeln!(out, "{ox} {oy}")?;
    }
    if let (Some(ann), Some(dir)) = (&a.annotations, &a.out_dir) {
        let mut classes = ClassMap::open();
        let gts = load_gts(ann, &mut classes)?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for &(ox, oy) in &offsets {
            let tile = clip_annotations_to_tile(&gts, (ox, oy), a.patch);
            let path = dir.join(format!("{ox}_{oy}.txt"));
            fs::write(&path, format_annotations(&tile, &classes))
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(out)
}

fn cmd_merge(a: &MergeArgs) -> Result<String> {
    if a.inputs.len() != a.offsets.len() {
        return Err(usage(format!(
            "{} input files but {} offsets",
            a.inputs.len(),
            a.offsets.len()
        )));
    }
    let mut classes = ClassMap::open();
    let per_patch = a
        .inputs
        .iter()
        .map(|p| load_dets(p, &mut classes))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_patches(&per_patch, &a.offsets, a.nms_poly)?;
    Ok(format_detections(&merged, &classes))
}

fn paired(a: &[PathBuf], b: &[PathBuf], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(usage(format!("{} {what} files but {} annotation files", a.len(), b.len())));
    }
    Ok(())
}

fn cmd_eval_map(a: &EvalMapArgs) -> Result<String> {
    paired(&a.dets, &a.gts, "detection")?;
    let mut classes = match &a.classes {
        Some(names) => ClassMap::closed(names),
        None => ClassMap::open(),
    };
    let gts = a
        .gts
        .iter()
        .map(|p| load_gts(p, &mut classes))
        .collect::<Result<Vec<_>>>()?;
    let dets = a
        .dets
        .iter()
        .map(|p| load_dets(p, &mut classes))
        .collect::<Result<Vec<_>>>()?;
    let images: Vec<ImageEval> = dets
        .iter()
        .zip(&gts)
        .map(|(d, g)| ImageEval {
            detections: d,
            ground_truth: g,
        })
        .collect();
    let metric = match a.metric {
        MetricArg::Voc07 => ApMetric::Voc07,
        MetricArg::Voc12 => ApMetric::Voc12,
    };
    let report = evaluate_map(&images, classes.len(), metric, a.iou)?;
    let mut out = String::new();
    for (name, ap) in classes.names().iter().zip(&report.per_class) {
        match ap {
            Some(ap) => writeln!(out, "{name} {}", fmt6(*ap))?,
            None => writeln!(out, "{name} n/a")?,
        }
    }
    writeln!(out, "mAP {}", fmt6(report.map))?;
    Ok(out)
}

fn cmd_eval_recall(a: &EvalRecallArgs) -> Result<String> {
    paired(&a.proposals, &a.gts, "proposal")?;
    let mut classes = ClassMap::open();
    let mut scenes = Vec::new();
    for (p, g) in a.proposals.iter().zip(&a.gts) {
        let gts = load_gts(g, &mut classes)?;
        // proposals are class-agnostic; their class token is ignored
        let props = load_dets(p, &mut ClassMap::open())?;
        scenes.push((props, gts));
    }
    let mut out = String::new();
    for &k in &a.k {
        let (mut hit, mut total) = (0, 0);
        for (props, gts) in &scenes {
            let (h, t) = proposal_hits(props, gts, k, a.iou);
            hit += h;
            total += t;
        }
        let recall = if total == 0 { 1.0 } else { hit as f64 / total as f64 };
        writeln!(out, "recall@{k} {}", fmt6(recall))?;
    }
    Ok(out)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("OBB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("OBB_THREADS must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let text = match &cli.command {
        Command::Iou(a) => cmd_iou(a)?,
        Command::Nms(a) => cmd_nms(a)?,
        Command::Decode(a) => cmd_decode(a)?,
        Command::Encode(a) => cmd_encode(a)?,
        Command::Roialign(a) => cmd_roialign(a)?,
        Command::Proposals(a) => cmd_proposals(a)?,
        Command::Postprocess(a) => cmd_postprocess(a)?,
        Command::Tile(a) => cmd_tile(a)?,
        Command::Merge(a) => cmd_merge(a)?,
        Command::EvalMap(a) => cmd_eval_map(a)?,
        Command::EvalRecall(a) => cmd_eval_recall(a)?,
    };
    match &cli.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
