use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvdi_core::blockio::read_matrix;
use mvdi_core::depthio::{load_boxes, load_skeleton, load_video, save_video, synth_dataset, write_pgm8, SynthConfig};
use mvdi_core::features::{
    default_c_grid, default_pca_dim, pca_fit, pca_transform, save_pca, save_svm, svm_cv_select, svm_predict,
    svm_train_k, SvmParams,
};
use mvdi_core::minicnn::{gradient_check, init_model, save_model, Arch};
use mvdi_core::pipeline::{report_timings, run_ablation, run_with, train_network, AblationAxis, PipelineConfig, RunOptions};
use mvdi_core::proposal::{boxes_from_skeleton, crop_video, extend_cube, merge_boxes, scaled_margin, NATIVE_MARGIN};
use mvdi_core::rankpool::{compute_dmm, rank_pool, to_dynamic_image, PoolConfig, PoolVariant, DEFAULT_DMM_EPSILON};
use mvdi_core::viewsynth::{project_video, ProjectionConfig, ViewSpec};
use mvdi_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mvdi", version, about = "Multi-view dynamic images for depth-video action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic labelled corpus with box and skeleton sidecars.
    Synth(SynthArgs),
    /// Re-image a depth video from a virtual viewpoint.
    Project(ProjectArgs),
    /// Rank-pool a video into an 8-bit dynamic image.
    Pool(PoolArgs),
    /// Depth motion map of a video as an 8-bit image.
    Dmm(DmmArgs),
    /// Crop a video to the merged, extended human box.
    Propose(ProposeArgs),
    /// Train the multi-stream network on every sample of a manifest.
    Train(TrainArgs),
    /// Finite-difference gradient check on a random small model.
    Gradcheck(GradcheckArgs),
    /// PCA + linear SVM on feature matrices.
    Classify(ClassifyArgs),
    /// End-to-end train and evaluate run.
    Run(RunArgs),
    /// Repeat a run across the settings of one axis.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    depth_scale: f64,
    #[arg(long, default_value_t = 1)]
    hole_fill_radius: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    video: PathBuf,
    /// exact | approx-prefix | approx-frames
    #[arg(long, default_value = "exact")]
    variant: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Output graymap.
    #[arg(long)]
    out: PathBuf,
    /// Raw ranking vector: u64 width, u64 height, then little-endian f64s.
    #[arg(long)]
    dump_u: Option<PathBuf>,
}

#[derive(Args)]
struct DmmArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DMM_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProposeArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long, conflicts_with = "from_skeleton", required_unless_present = "from_skeleton")]
    boxes: Option<PathBuf>,
    #[arg(long)]
    from_skeleton: Option<PathBuf>,
    /// Defaults to the native margin scaled to the frame width.
    #[arg(long)]
    margin: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Uses the first N default view groups.
    #[arg(long, default_value_t = 5)]
    groups: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "input=8;conv=3x3x3/s1/p1/pool;conv=4x3x3/s1/p1;dense=6")]
    arch: String,
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    /// Exit with status 4 when the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Training feature matrix.
    #[arg(long)]
    features: PathBuf,
    /// One integer label per line, matching the feature rows.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, requires = "test_labels")]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    pca_dim: Option<usize>,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving pca.bin and svm.bin.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// representation | view_groups | proposal | classifier
    #[arg(long)]
    axis: String,
    #[arg(long)]
    threads: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn run_options(threads: Option<usize>) -> RunOptions {
    RunOptions { threads }
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(|_| Error::Data(format!("{}: bad label {l:?}", path.display()))))
        .collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_classes: a.classes,
        samples_per_class: a.per_class,
        width: a.size,
        height: a.size,
        frames: a.frames,
        ..SynthConfig::default()
    };
    let m = synth_dataset(&cfg, a.seed, &a.out)?;
    println!("wrote {} samples to {}", m.records.len(), a.out.join("manifest.csv").display());
    Ok(())
}

fn project(a: ProjectArgs) -> Result<()> {
    let video = load_video(&a.video)?;
    let cfg = ProjectionConfig { depth_scale: a.depth_scale, hole_fill_radius: a.hole_fill_radius, ..ProjectionConfig::default() };
    let view = ViewSpec::new(a.alpha, a.beta)?;
    let out = project_video(&video, &[view], &cfg)?;
    save_video(&out[0], &a.out)
}

fn pool(a: PoolArgs) -> Result<()> {
    let variant = PoolVariant::parse(&a.variant).ok_or_else(|| invalid(format!("unknown pooling variant {:?}", a.variant)))?;
    let cfg = PoolConfig { lambda: a.lambda, max_iters: a.max_iters, variant, ..PoolConfig::default() };
    let video = load_video(&a.video)?;
    let u = rank_pool(&video, &cfg)?;
    if let Some(p) = &a.dump_u {
        fs::write(p, u.to_le_bytes()).map_err(|e| Error::Io { path: p.clone(), source: e })?;
    }
    let img = to_dynamic_image(&u);
    write_pgm8(&a.out, img.width, img.height, &img.pixels)
}

fn dmm(a: DmmArgs) -> Result<()> {
    let video = load_video(&a.video)?;
    let img = compute_dmm(&video, a.epsilon)?;
    write_pgm8(&a.out, img.width, img.height, &img.pixels)
}

fn propose(a: ProposeArgs) -> Result<()> {
    let video = load_video(&a.video)?;
    let boxes = match (&a.boxes, &a.from_skeleton) {
        (Some(b), _) => load_boxes(b)?,
        (None, Some(s)) => boxes_from_skeleton(&load_skeleton(s)?),
        (None, None) => return Err(invalid("one of --boxes or --from-skeleton is required")),
    };
    let (w, h) = (video.width(), video.height());
    let margin = a.margin.unwrap_or_else(|| scaled_margin(NATIVE_MARGIN, w));
    let cube = extend_cube(merge_boxes(&boxes)?, margin, w, h);
    let cropped = crop_video(&video, &cube)?;
    save_video(&cropped, &a.out)?;
    println!("x={}..{} y={}..{} t={}..={}", cube.x0, cube.x1, cube.y0, cube.y1, cube.t0, cube.t1);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let split = mvdi_core::depthio::SplitSpec::CrossSubject { train_subjects: Default::default(), test_subjects: None };
    let mut cfg = PipelineConfig::new(&a.manifest, split);
    if a.groups == 0 || a.groups > cfg.view_groups.len() {
        return Err(invalid(format!("--groups must be in 1..={}", cfg.view_groups.len())));
    }
    cfg.active_groups = (1..=a.groups).collect();
    cfg.seed = a.seed;
    cfg.train.iters = a.iters;
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(s) = &a.arch {
        cfg.arch = s.parse()?;
    }
    let (model, trace) = train_network(&cfg, &run_options(a.threads))?;
    save_model(&model, &a.out)?;
    for r in &trace {
        println!("{} {} {:.6}", r.iteration, r.group, r.loss);
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let arch: Arch = a.arch.parse()?;
    let classes = 3;
    let mut model = init_model(&arch, a.groups, classes, a.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for b in model.all_blocks_mut() {
        b.iter_mut().for_each(|v| *v += 0.05 * (rng.random::<f64>() - 0.5));
    }
    let n = arch.input * arch.input;
    let images: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let labels: Vec<usize> = (0..4).map(|i| i % classes).collect();
    let refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
    let mut worst = 0.0f64;
    for g in 0..a.groups {
        let r = gradient_check(&model, g, &refs, &labels, 1e-3, a.h)?;
        println!(
            "group {g}: max_rel_error {:.3e} checked {} skipped {} kinked {}",
            r.max_rel_error, r.checked, r.skipped, r.kinked
        );
        worst = worst.max(r.max_rel_error);
    }
    if worst > a.tolerance {
        return Err(Error::Numeric(format!("gradient check failed: {worst:.3e} > {:.3e}", a.tolerance)));
    }
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let x = read_matrix(&a.features)?;
    let y = read_labels(&a.labels)?;
    if x.len() != y.len() {
        return Err(Error::Data(format!("{} feature rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Data("need at least two training rows".into()));
    }
    let d = x[0].len();
    let k = a.pca_dim.unwrap_or_else(|| default_pca_dim(x.len(), d));
    let pca = pca_fit(&x, k)?;
    let z: Vec<Vec<f64>> = x.iter().map(|r| pca_transform(&pca, r)).collect::<Result<_>>()?;
    let grid = a.c_grid.unwrap_or_else(default_c_grid);
    let params = SvmParams { seed: a.seed, ..SvmParams::default() };
    let cv = svm_cv_select(&z, &y, &grid, a.folds.min(x.len()), &params)?;
    let num_classes = y.iter().max().map_or(0, |m| m + 1);
    let svm = svm_train_k(&z, &y, num_classes, &SvmParams { c: cv.best_c, ..params })?;
    println!("pca_dim = {k}");
    println!("chosen_c = {}", cv.best_c);
    println!("cv_stratified = {}", cv.stratified);
    if let (Some(tf), Some(tl)) = (&a.test_features, &a.test_labels) {
        let tx = read_matrix(tf)?;
        let ty = read_labels(tl)?;
        if tx.len() != ty.len() {
            return Err(Error::Data(format!("{} test rows but {} test labels", tx.len(), ty.len())));
        }
        let mut correct = 0;
        for (i, (r, &l)) in tx.iter().zip(&ty).enumerate() {
            let p = svm_predict(&svm, &pca_transform(&pca, r)?)?.0;
            correct += usize::from(p == l);
            println!("{i} {l} {p}");
        }
        println!("accuracy = {:.6}", correct as f64 / tx.len().max(1) as f64);
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        save_pca(&pca, &dir.join("pca.bin"))?;
        save_svm(&svm, &dir.join("svm.bin"))?;
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    let report = run_with(&cfg, &run_options(a.threads))?;
    print!("{}", report.to_text());
    eprint!("{}", report_timings(&report).to_text());
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let axis = AblationAxis::parse(&a.axis).ok_or_else(|| invalid(format!("unknown ablation axis {:?}", a.axis)))?;
    let cfg = PipelineConfig::load(&a.config)?;
    let table = run_ablation(&cfg, axis, &run_options(a.threads))?;
    print!("{}", table.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Project(a) => project(a),
        Command::Pool(a) => pool(a),
        Command::Dmm(a) => dmm(a),
        Command::Propose(a) => propose(a),
        Command::Train(a) => train(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
