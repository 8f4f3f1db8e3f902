//! The `bsb` command line. Every subcommand prints JSON on stdout; failures
//! print `{"error": "..."}` on stderr and exit 1, usage errors exit 2.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::distill::{distill_features, ViewFeatureSet};
use crate::eval::{ablate_k, eval_success_rate, fidelity_iou_stats, load_cases, Method};
use crate::matcher::{bsb_match, bsb_match_reverse, nn_baseline, random_candidate_baseline, ClickContext, ReverseContext, DEFAULT_K};
use crate::mesh::{load_mesh, Mesh};
use crate::raster::{render, sample_views, standard_view_grid, Camera, DEFAULT_SIZE};
use crate::segmenters::{correspond, ProviderSpec};
use crate::service::{serve, DEFAULT_SESSION_CAP};
use crate::tensor_io::{load_manifest, read_header_file, resolve_path, FeatureImage, Mask2D, Pixel, VertexFeatureField};

#[derive(Debug, Parser)]
#[command(name = "bsb", version, about = "Segment-level image-to-mesh correspondence", arg_required_else_help = true)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a camera manifest (and optional debug renders) for a mesh.
    Render(RenderArgs),
    /// Average per-view feature images onto mesh vertices.
    Distill(DistillArgs),
    /// Match one click (or, with --reverse, one vertex).
    Match(MatchArgs),
    /// Success rate of a method over a case manifest.
    Eval(EvalArgs),
    /// Success rate for a list of candidate budgets.
    Ablate(AblateArgs),
    /// Mean achieved IoU in regions with and without a 3D counterpart.
    Fidelity(FidelityArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Summarize a BSBT container or OBJ mesh.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct ViewChoice {
    /// The 60-view grid (5 elevations × 12 azimuths).
    #[arg(long, conflicts_with = "random")]
    grid: bool,
    /// N uniformly sampled views (needs --seed).
    #[arg(long, value_name = "N", requires = "seed")]
    random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Square render size in pixels.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    size: usize,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Output directory for views.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    views: ViewChoice,
    /// Also write depth (PGM) and vertex-id (PPM) images per view.
    #[arg(long)]
    debug_images: bool,
}

#[derive(Debug, Args)]
struct DistillArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// View manifest: {"views": [{"camera": {...}, "features": "f.bsbt"}]}.
    #[arg(long)]
    views: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    image_features: PathBuf,
    #[arg(long)]
    vertex_features: PathBuf,
    /// Pixel to match, as X,Y.
    #[arg(long, value_parser = parse_pixel, required_unless_present = "reverse")]
    click: Option<Pixel>,
    /// Part mask of the click; asked from --seg2d when absent.
    #[arg(long)]
    part_mask: Option<PathBuf>,
    #[arg(long)]
    object_mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// 2D provider: synthetic:<labels.bsbt> or files:<index.json>[:exact|:nearest].
    #[arg(long)]
    seg2d: Option<String>,
    /// 3D provider: synthetic:<labels.bsbt>, files:<index.json>[:mode] or floodfill:<tau>.
    #[arg(long)]
    seg3d: Option<String>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value = "bsb")]
    method: Method,
    #[arg(long)]
    seed: Option<u64>,
    /// Match a vertex to an image region instead.
    #[arg(long, requires_all = ["vertex", "seg3d"])]
    reverse: bool,
    #[arg(long)]
    vertex: Option<usize>,
    /// Candidate pixels for --reverse; whole image when absent.
    #[arg(long)]
    scope: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "bsb")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,25,50,100")]
    ks: Vec<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FidelityArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "BSB_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, env = "BSB_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "BSB_SESSION_CAP", default_value_t = DEFAULT_SESSION_CAP)]
    session_cap: usize,
}

#[derive(Debug, Args)]
struct InspectArgs {
    path: PathBuf,
}

fn parse_pixel(s: &str) -> Result<Pixel, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Pixel::new(p(x)?, p(y)?))
}

/// One entry of a view manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub camera: Camera,
    pub features: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViewManifest {
    pub views: Vec<ViewEntry>,
}

type CliResult = Result<Value, Box<dyn std::error::Error + Send + Sync>>;

fn fail(msg: impl Into<String>) -> Box<dyn std::error::Error + Send + Sync> {
    msg.into().into()
}

/// Runs the CLI with process stdout/stderr and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level).try_init();

    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(fail(e.to_string())),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).expect("json value");
            let _ = writeln!(out, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(err, "{}", json!({ "error": e.to_string() }));
            1
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Render(a) => cmd_render(a),
        Command::Distill(a) => cmd_distill(a),
        Command::Match(a) => cmd_match(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Fidelity(a) => cmd_fidelity(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn write_report(path: &Option<PathBuf>, v: &Value) -> Result<(), std::io::Error> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(v).expect("json value") + "\n")?;
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> CliResult {
    let mesh = load_mesh(&a.mesh)?;
    let cameras: Vec<Camera> = match (a.views.grid, a.views.random) {
        (_, Some(n)) => sample_views(n, a.views.seed.ok_or_else(|| fail("--random needs --seed"))?),
        _ => standard_view_grid(),
    };
    let cameras: Vec<Camera> = cameras.into_iter().map(|c| c.with_size(a.views.size, a.views.size)).collect();
    std::fs::create_dir_all(&a.out)?;
    let mut views = Vec::with_capacity(cameras.len());
    let mut visible = Vec::with_capacity(cameras.len());
    for (i, cam) in cameras.iter().enumerate() {
        cam.validate()?;
        let map = render(&mesh, cam);
        if a.debug_images {
            map.write_depth_pgm(a.out.join(format!("view_{i:03}_depth.pgm")))?;
            map.write_vertex_id_ppm(a.out.join(format!("view_{i:03}_ids.ppm")))?;
        }
        visible.push(map.visible_count());
        views.push(ViewEntry {
            camera: *cam,
            features: PathBuf::from(format!("view_{i:03}.bsbt")),
        });
    }
    let manifest = ViewManifest { views };
    let path = a.out.join("views.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(json!({ "views": path, "count": cameras.len(), "visible_vertices": visible }))
}

fn cmd_distill(a: DistillArgs) -> CliResult {
    let mesh = load_mesh(&a.mesh)?;
    let text = std::fs::read_to_string(&a.views).map_err(|e| fail(format!("{}: {e}", a.views.display())))?;
    let manifest: ViewManifest = serde_json::from_str(&text)?;
    let base = a.views.parent().unwrap_or(Path::new(""));
    let views = manifest
        .views
        .iter()
        .map(|v| Ok((v.camera, FeatureImage::load(resolve_path(base, &v.features))?)))
        .collect::<Result<Vec<_>, crate::tensor_io::TensorError>>()?;
    let set = ViewFeatureSet::new(views)?;
    let field = distill_features(&mesh, &set)?;
    field.save(&a.out)?;
    Ok(json!({
        "out": a.out,
        "vertices": field.len(),
        "dim": field.dim(),
        "valid": field.valid_count(),
        "views": set.len(),
    }))
}

fn load_mesh_arc(p: &Option<PathBuf>) -> Result<Option<Arc<Mesh>>, crate::mesh::MeshError> {
    p.as_ref().map(|p| load_mesh(p).map(Arc::new)).transpose()
}

fn cmd_match(a: MatchArgs) -> CliResult {
    let image = FeatureImage::load(&a.image_features)?;
    let vertices = Arc::new(VertexFeatureField::load(&a.vertex_features)?);
    let mesh = load_mesh_arc(&a.mesh)?;
    if let Some(m) = &mesh {
        if m.vertex_count() != vertices.len() {
            return Err(fail(format!(
                "mesh has {} vertices, vertex features have {}",
                m.vertex_count(),
                vertices.len()
            )));
        }
    }
    let seg2d = a.seg2d.as_deref().map(|s| s.parse::<ProviderSpec>()?.build_seg2d()).transpose()?;
    let seg3d = a
        .seg3d
        .as_deref()
        .map(|s| s.parse::<ProviderSpec>()?.build_seg3d(Some(vertices.clone()), mesh.clone()))
        .transpose()?;

    if a.reverse {
        let v = a.vertex.expect("clap requires --vertex");
        let seg3d = seg3d.expect("clap requires --seg3d");
        let scope = match &a.scope {
            Some(p) => Mask2D::load(p)?,
            None => Mask2D::full(image.width(), image.height()),
        };
        if v >= vertices.len() {
            return Err(fail(format!("vertex {v} out of range ({} vertices)", vertices.len())));
        }
        let part3d = seg3d.query(v)?;
        let ctx = ReverseContext {
            image: &image,
            scope: &scope,
            vertices: &vertices,
            vertex: v,
            part3d: &part3d,
            k: a.k,
        };
        let r = bsb_match_reverse(&ctx, seg3d.as_ref())?;
        let mut out = serde_json::to_value(&r)?;
        out["mask3d"] = json!(part3d.indices());
        if let (Some(p), Some(seg)) = (r.pixel, &seg2d) {
            out["mask2d"] = json!(seg.query(p)?.part.to_rle());
        }
        return Ok(out);
    }

    let click = a.click.expect("clap requires --click");
    let (part, object) = match (&a.part_mask, &a.object_mask, &seg2d) {
        (Some(p), Some(o), _) => (Mask2D::load(p)?, Mask2D::load(o)?),
        (None, None, Some(seg)) => {
            if !image.contains(click) {
                return Err(fail(format!("click {click} outside image {}x{}", image.width(), image.height())));
            }
            let m = seg.query(click)?;
            (m.part, m.object)
        }
        _ => return Err(fail("give both --part-mask and --object-mask, or neither together with --seg2d")),
    };
    let ctx = ClickContext::new(&image, click, &part, &object, &vertices, a.k)?;
    match a.method {
        Method::Nn => Ok(json!({ "method": "nn", "vertex": nn_baseline(&ctx)? })),
        Method::Random => {
            let seed = a.seed.ok_or_else(|| fail("--method random needs --seed"))?;
            Ok(json!({ "method": "random", "seed": seed, "vertex": random_candidate_baseline(&ctx, seed)? }))
        }
        Method::Bsb => {
            let seg2d = seg2d.ok_or_else(|| fail("--method bsb needs --seg2d"))?;
            match seg3d {
                Some(seg3d) => {
                    let c = correspond(&ctx, seg2d.as_ref(), seg3d.as_ref())?;
                    let mut out = serde_json::to_value(&c.result)?;
                    out["mask3d"] = json!(c.mask3d.indices());
                    out["match_mask"] = json!(c.result.match_mask.as_ref().map(Mask2D::to_rle));
                    Ok(out)
                }
                None => {
                    let r = bsb_match(&ctx, seg2d.as_ref())?;
                    let mut out = serde_json::to_value(&r)?;
                    out["match_mask"] = json!(r.match_mask.as_ref().map(Mask2D::to_rle));
                    Ok(out)
                }
            }
        }
    }
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    if a.method == Method::Random && a.seed.is_none() {
        return Err(fail("--method random needs --seed"));
    }
    let manifest = load_manifest(&a.manifest)?;
    let cases = load_cases(&manifest)?;
    let report = serde_json::to_value(eval_success_rate(&cases, a.method, a.k, a.seed)?)?;
    write_report(&a.report, &report)?;
    Ok(report)
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let cases = load_cases(&manifest)?;
    let report = serde_json::to_value(ablate_k(&cases, &a.ks)?)?;
    write_report(&a.report, &report)?;
    Ok(report)
}

fn cmd_fidelity(a: FidelityArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let cases = load_cases(&manifest)?;
    Ok(serde_json::to_value(fidelity_iou_stats(&cases, a.samples, a.k, a.seed)?)?)
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(addr, a.session_cap))?;
    Ok(json!({ "stopped": addr.to_string() }))
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let is_obj = a
        .path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    if is_obj {
        let m = load_mesh(&a.path)?;
        let (lo, hi) = m.bounding_box();
        return Ok(json!({
            "path": a.path,
            "kind": "mesh",
            "vertices": m.vertex_count(),
            "faces": m.face_count(),
            "bbox": [lo, hi],
        }));
    }
    let h = read_header_file(&a.path)?;
    let bytes = std::fs::metadata(&a.path)?.len();
    Ok(json!({
        "path": a.path,
        "kind": "tensor",
        "dtype": h.dtype,
        "dims": h.dims,
        "elements": h.element_count(),
        "bytes": bytes,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("bsb").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn no_args_is_usage() {
        let (code, _, err) = run_capture(&[]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn bad_flag_is_usage() {
        assert_eq!(run_capture(&["eval", "--bogus"]).0, 2);
        assert_eq!(run_capture(&["match", "--image-features", "a", "--vertex-features", "b", "--click", "1"]).0, 2);
    }

    #[test]
    fn missing_file_is_data_error() {
        let (code, out, err) = run_capture(&["inspect", "/nonexistent/x.bsbt"]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert!(v["error"].as_str().unwrap().contains("/nonexistent/x.bsbt"));
    }

    #[test]
    fn pixel_parsing() {
        assert_eq!(parse_pixel("3,4").unwrap(), Pixel::new(3, 4));
        assert!(parse_pixel("3").is_err());
        assert!(parse_pixel("-1,2").is_err());
    }
}
