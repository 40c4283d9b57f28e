//! Command-line front end: rasterize annotations, vectorize masks, build
//! meshes and heatmap targets, score predictions and run the whole chain.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use planvec::augment::{augment_pair, AugmentError, AugmentSpec};
use planvec::heatmap::{encode_heatmap_png, heatmap_meta, opening_heatmaps, HeatmapError};
use planvec::mask_io::{encode_mask_with, load_mask, ClassId, MaskError, SegMask};
use planvec::metrics::{confusion, report, ClassMerge, MetricsError};
use planvec::reconstruct::{export_obj, extrude, ExtrudeOptions, ReconstructError};
use planvec::svg_annotations::{parse_annotation_with, rasterize_annotations, SvgError, Vocabulary};
use planvec::vectorize::{
    parse_polygons_text, polygons_to_geojson, polygons_to_text, vectorize_mask, PolygonSet, VectorizeError,
};
use rayon::prelude::*;
use thiserror::Error;

pub use config::PipelineConfig;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PLANVEC_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input not found: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput(_) => 2,
            CliError::Parse(_) => 3,
            CliError::ShapeMismatch(_) => 4,
            CliError::Config(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    fn at(path: &Path, e: impl std::fmt::Display) -> String {
        format!("{}: {e}", path.display())
    }
}

fn mask_error(path: &Path, e: MaskError) -> CliError {
    match e {
        MaskError::Image(image::ImageError::IoError(io)) => CliError::Other(CliError::at(path, io)),
        other => CliError::Parse(CliError::at(path, other)),
    }
}

fn svg_error(path: &Path, e: SvgError) -> CliError {
    match e {
        SvgError::MalformedDocument { .. } | SvgError::UnparseableGeometry { .. } => {
            CliError::Parse(CliError::at(path, e))
        }
        SvgError::Config(c) => CliError::Config(CliError::at(path, c)),
        other => CliError::Other(CliError::at(path, other)),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(CliError::at(path, e))
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    require(path)?;
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

fn png_bytes(mask: &SegMask, cfg: &PipelineConfig) -> Result<Vec<u8>, CliError> {
    let mut out = Cursor::new(Vec::new());
    encode_mask_with(mask, &cfg.palette)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| CliError::Other(e.to_string()))?;
    Ok(out.into_inner())
}

fn load(path: &Path, cfg: &PipelineConfig) -> Result<SegMask, CliError> {
    require(path)?;
    load_mask(path, &cfg.palette).map_err(|e| mask_error(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "planvec", version, about = "Floor-plan mask vectorization and 3D extrusion")]
pub struct Cli {
    /// key=value configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (also capped by PLANVEC_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ThresholdFlags {
    /// Minimum rectangle fitting score.
    #[arg(long)]
    pub eps_u: Option<f64>,
    /// Vertex merge distance in pixels.
    #[arg(long)]
    pub eps_d: Option<f64>,
    /// Collinearity angle in degrees.
    #[arg(long)]
    pub eps_a_deg: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize an SVG annotation into a class mask.
    Rasterize {
        svg: PathBuf,
        out: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// token=Kind lines extending the class-attribute vocabulary.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Turn a class mask into polygons.
    Vectorize {
        mask: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdFlags,
        /// Also write a GeoJSON feature collection.
        #[arg(long)]
        geojson: Option<PathBuf>,
    },
    /// Extrude a polygon file into an OBJ mesh.
    Reconstruct {
        polygons: PathBuf,
        out: PathBuf,
        #[arg(long)]
        pixel_scale: Option<f64>,
        /// Fail on self-intersecting polygons instead of skipping them.
        #[arg(long)]
        strict: bool,
    },
    /// Write endpoint heatmap targets for every opening class.
    Heatmaps {
        mask: PathBuf,
        out_dir: PathBuf,
        /// Comma-separated Gaussian spreads.
        #[arg(long)]
        betas: Option<String>,
    },
    /// Score a predicted mask against ground truth.
    Evaluate {
        pred: PathBuf,
        truth: PathBuf,
        /// Merged row, e.g. `door+window=openings`. Repeatable.
        #[arg(long = "merge")]
        merges: Vec<String>,
        /// Key-value output instead of a table.
        #[arg(long)]
        kv: bool,
    },
    /// Vectorize and extrude one or more masks.
    Pipeline {
        #[arg(required = true)]
        masks: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdFlags,
        #[arg(long)]
        pixel_scale: Option<f64>,
    },
    /// Augment image/mask pairs listed in a manifest.
    Augment {
        /// Lines of `image mask out_image out_mask`.
        manifest: PathBuf,
        /// key=value augment spec.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn thread_count(requested: Option<usize>) -> Result<usize, CliError> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        ),
        Err(_) => None,
    };
    let want = requested
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    Ok(cap.map_or(want, |c| want.min(c)))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 5 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("planvec: error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns what it would print on stdout.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_config(&read_text(p)?).map_err(|e| CliError::Config(CliError::at(p, e)))?,
        None => PipelineConfig::default(),
    };
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let threads = thread_count(cli.threads.or(cfg.threads))?;
    cfg.threads = Some(threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    pool.install(|| dispatch(cli.command, cfg))
}

fn dispatch(command: Command, mut cfg: PipelineConfig) -> Result<String, CliError> {
    match command {
        Command::Rasterize { svg, out, width, height, vocab } => {
            let vocab = match vocab {
                Some(p) => Vocabulary::from_config(&read_text(&p)?).map_err(|e| svg_error(&p, e))?,
                None => Vocabulary::default(),
            };
            let text = read_text(&svg)?;
            let parsed = parse_annotation_with(&text, &vocab).map_err(|e| svg_error(&svg, e))?;
            let dim = |flag: Option<usize>, doc: Option<f64>, name: &str| {
                flag.or_else(|| doc.filter(|v| *v > 0.0).map(|v| v.ceil() as usize))
                    .ok_or_else(|| CliError::Parse(CliError::at(&svg, format!("no {name}; pass --{name}"))))
            };
            let (w, h) = (dim(width, parsed.width, "width")?, dim(height, parsed.height, "height")?);
            let mask = rasterize_annotations(&parsed.shapes, w, h).map_err(|e| svg_error(&svg, e))?;
            write_atomic(&out, &png_bytes(&mask, &cfg)?)?;
            Ok(format!("shapes={} skipped={}\n", parsed.shapes.len(), parsed.skipped))
        }
        Command::Vectorize { mask, out, thresholds, geojson } => {
            cfg.apply_thresholds(&thresholds)?;
            let m = load(&mask, &cfg)?;
            let set = vectorize(&m, &cfg)?;
            write_atomic(&out, polygons_to_text(&set).as_bytes())?;
            if let Some(g) = geojson {
                write_atomic(&g, polygons_to_geojson(&set).to_string().as_bytes())?;
            }
            Ok(format!("polygons={}\n", set.len()))
        }
        Command::Reconstruct { polygons, out, pixel_scale, strict } => {
            cfg.apply_pixel_scale(pixel_scale)?;
            let text = read_text(&polygons)?;
            let set = parse_polygons_text(&text).map_err(|e| CliError::Parse(CliError::at(&polygons, e)))?;
            let (bytes, faces, skipped) = reconstruct(&set, &cfg, strict)?;
            write_atomic(&out, &bytes)?;
            Ok(format!("faces={faces} skipped={skipped}\n"))
        }
        Command::Heatmaps { mask, out_dir, betas } => {
            if let Some(b) = betas {
                cfg.betas = b.parse().map_err(|e: HeatmapError| CliError::Config(e.to_string()))?;
            }
            let m = load(&mask, &cfg)?;
            let maps = opening_heatmaps(&m, &cfg.betas).map_err(|e| CliError::Other(e.to_string()))?;
            let mut report = String::new();
            for (class, map) in &maps {
                let path = out_dir.join(format!("{}.png", class.slug()));
                let png = encode_heatmap_png(map).map_err(|e| CliError::Other(e.to_string()))?;
                write_atomic(&path, &png)?;
                write_atomic(&path.with_extension("meta"), heatmap_meta(&cfg.betas).as_bytes())?;
                writeln!(report, "{}", path.display()).unwrap();
            }
            Ok(report)
        }
        Command::Evaluate { pred, truth, merges, kv } => {
            let merges = merges.iter().map(|m| parse_merge(m)).collect::<Result<Vec<_>, _>>()?;
            let p = load(&pred, &cfg)?;
            let t = load(&truth, &cfg)?;
            let classes: Vec<ClassId> = ClassId::structural().collect();
            let cm = confusion(&p, &t, &classes).map_err(|e| match e {
                MetricsError::DimensionMismatch(..) => CliError::ShapeMismatch(e.to_string()),
                other => CliError::Other(other.to_string()),
            })?;
            let r = report(&cm, &merges).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(if kv { r.to_key_value() } else { r.to_table() })
        }
        Command::Pipeline { masks, out, thresholds, pixel_scale } => {
            cfg.apply_thresholds(&thresholds)?;
            cfg.apply_pixel_scale(pixel_scale)?;
            for m in &masks {
                require(m)?;
            }
            let single = masks.len() == 1;
            let lines = masks
                .par_iter()
                .map(|m| {
                    let dir = if single { out.clone() } else { out.join(stem(m)) };
                    pipeline_one(m, &dir, &cfg)
                })
                .collect::<Result<Vec<String>, CliError>>()?;
            Ok(lines.concat())
        }
        Command::Augment { manifest, spec } => {
            let spec = match spec {
                Some(p) => AugmentSpec::from_config(&read_text(&p)?).map_err(|e| CliError::Config(CliError::at(&p, e)))?,
                None => AugmentSpec::default(),
            };
            let text = read_text(&manifest)?;
            let jobs = parse_manifest(&manifest, &text)?;
            let lines = jobs
                .par_iter()
                .map(|(i, job)| augment_one(*i, job, &spec, &cfg))
                .collect::<Result<Vec<String>, CliError>>()?;
            Ok(lines.concat())
        }
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mask".into())
}

fn vectorize(mask: &SegMask, cfg: &PipelineConfig) -> Result<PolygonSet, CliError> {
    vectorize_mask(mask, &cfg.thresholds).map_err(|e| match e {
        VectorizeError::InvalidThreshold(..) => CliError::Config(e.to_string()),
        other => CliError::Other(other.to_string()),
    })
}

fn reconstruct(set: &PolygonSet, cfg: &PipelineConfig, strict: bool) -> Result<(Vec<u8>, usize, usize), CliError> {
    let ex = extrude(set, &cfg.profile, &ExtrudeOptions { strict }).map_err(|e| match e {
        ReconstructError::InvalidProfile(_) | ReconstructError::Config(_) => CliError::Config(e.to_string()),
        ReconstructError::SelfIntersectingPolygon(_) | ReconstructError::DegeneratePolygon(_) => {
            CliError::Parse(e.to_string())
        }
    })?;
    Ok((export_obj(&ex.mesh), ex.mesh.faces.len(), ex.skipped.len()))
}

fn pipeline_one(mask: &Path, dir: &Path, cfg: &PipelineConfig) -> Result<String, CliError> {
    let start = Instant::now();
    let m = load(mask, cfg)?;
    let t0 = Instant::now();
    let set = vectorize(&m, cfg)?;
    let vectorize_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let (obj, faces, skipped) = reconstruct(&set, cfg, false)?;
    let reconstruct_ms = t1.elapsed().as_secs_f64() * 1e3;
    write_atomic(&dir.join("polygons.txt"), polygons_to_text(&set).as_bytes())?;
    write_atomic(&dir.join("polygons.geojson"), polygons_to_geojson(&set).to_string().as_bytes())?;
    write_atomic(&dir.join("mesh.obj"), &obj)?;
    let mut manifest = String::new();
    writeln!(manifest, "input={}", mask.display()).unwrap();
    writeln!(manifest, "width={}\nheight={}", m.width(), m.height()).unwrap();
    manifest.push_str(&cfg.to_config());
    writeln!(manifest, "polygons={}\nfaces={faces}\nskipped={skipped}", set.len()).unwrap();
    writeln!(manifest, "vectorize_ms={vectorize_ms:.3}\nreconstruct_ms={reconstruct_ms:.3}").unwrap();
    writeln!(manifest, "total_ms={:.3}", start.elapsed().as_secs_f64() * 1e3).unwrap();
    write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())?;
    Ok(format!("{} polygons={} faces={faces}\n", dir.display(), set.len()))
}

/// `door+window=openings`
pub fn parse_merge(spec: &str) -> Result<ClassMerge, CliError> {
    let bad = || CliError::Config(format!("invalid merge {spec:?}; expected class+class=name"));
    let (classes, name) = spec.split_once('=').ok_or_else(bad)?;
    let classes = classes
        .split('+')
        .map(|s| ClassId::from_slug(s.trim()).ok_or_else(bad))
        .collect::<Result<Vec<_>, _>>()?;
    let name = name.trim();
    if name.is_empty() || classes.is_empty() {
        return Err(bad());
    }
    Ok(ClassMerge::new(name, &classes))
}

struct AugmentJob {
    image: PathBuf,
    mask: PathBuf,
    out_image: PathBuf,
    out_mask: PathBuf,
}

fn parse_manifest(path: &Path, text: &str) -> Result<Vec<(usize, AugmentJob)>, CliError> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut jobs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let [image, mask, out_image, out_mask] = f[..] else {
            return Err(CliError::Parse(CliError::at(
                path,
                format!("line {}: expected 4 paths, found {}", i + 1, f.len()),
            )));
        };
        jobs.push((jobs.len(), AugmentJob {
            image: base.join(image),
            mask: base.join(mask),
            out_image: base.join(out_image),
            out_mask: base.join(out_mask),
        }));
    }
    Ok(jobs)
}

fn augment_one(index: usize, job: &AugmentJob, spec: &AugmentSpec, cfg: &PipelineConfig) -> Result<String, CliError> {
    require(&job.image)?;
    let image = image::open(&job.image)
        .map_err(|e| CliError::Parse(CliError::at(&job.image, e)))?
        .to_rgb8();
    let mask = load(&job.mask, cfg)?;
    // every pair gets its own stream, independent of scheduling
    let spec = AugmentSpec { seed: spec.seed.wrapping_add(index as u64), ..spec.clone() };
    let (img, m, t) = augment_pair(&image, &mask, &spec).map_err(|e| match e {
        AugmentError::DimensionMismatch(..) => CliError::ShapeMismatch(CliError::at(&job.image, e)),
        AugmentError::EmptyCrop(..) => CliError::Other(CliError::at(&job.image, e)),
        other => CliError::Config(other.to_string()),
    })?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&job.out_image, &buf.into_inner())?;
    write_atomic(&job.out_mask, &png_bytes(&m, cfg)?)?;
    Ok(format!(
        "{} hflip={} vflip={} rotation={}\n",
        job.out_mask.display(),
        t.horizontal_flip,
        t.vertical_flip,
        t.rotation.degrees()
    ))
}
