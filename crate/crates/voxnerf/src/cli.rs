//! Command-line driver: dataset generation, octree building, training,
//! rendering, evaluation, and the ablation matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::field::FieldConfig;
use crate::io;
use crate::metrics::evaluate;
use crate::raycast::Camera;
use crate::render::{render_image, RenderOptions};
use crate::sampler::{SamplerConfig, Strategy};
use crate::svo::{build_octree, LeafSize, SparseVoxelOctree};
use crate::synth::{make_dataset, sample_prior_cloud, Split, SyntheticScene, Trajectory};
use crate::train::{train, TrainConfig, T_NEAR};

#[derive(Parser)]
#[command(name = "voxnerf", version, about = "Voxel-guided radiance fields on CPU")]
pub struct Cli {
    /// Worker threads (default: all cores); results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and noisy prior point cloud.
    SynthGen(SynthGenArgs),
    /// Build the sparse voxel octree from a prior point cloud.
    BuildSvo(BuildSvoArgs),
    /// Optimize a radiance field on a dataset.
    Train(TrainArgs),
    /// Render one view from a checkpoint.
    Render(RenderArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run the sampling-strategy x depth-loss ablation matrix.
    Ablate(AblateArgs),
    /// Summarize datasets, priors, octrees, or checkpoints.
    Info(InfoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrajectoryArg {
    InsideOut,
    Orbit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Interp,
    Extrap,
}

impl SplitArg {
    fn to_split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Interp => Split::TestInterp,
            SplitArg::Extrap => Split::TestExtrap,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Guided,
    Uniform,
}

impl StrategyArg {
    fn to_strategy(self) -> Strategy {
        match self {
            StrategyArg::Guided => Strategy::Guided,
            StrategyArg::Uniform => Strategy::Uniform,
        }
    }
}

#[derive(Args)]
struct SynthGenArgs {
    /// Scene JSON; defaults to the built-in toy room.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    train: usize,
    #[arg(long, default_value_t = 6)]
    test: usize,
    #[arg(long, value_enum, default_value_t = TrajectoryArg::InsideOut)]
    trajectory: TrajectoryArg,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise sigma on prior points, meters.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Fraction of prior points replaced by room-interior outliers.
    #[arg(long, default_value_t = 0.01)]
    outliers: f64,
    #[arg(long, default_value_t = 50_000)]
    points: usize,
}

#[derive(Args)]
struct BuildSvoArgs {
    /// Prior cloud: .ply or whitespace text "x y z [sigma]".
    #[arg(long)]
    prior: PathBuf,
    /// Global noise sigma for clouds without a per-point sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// Explicit leaf size override, meters.
    #[arg(long)]
    leaf: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a text dump ("level code x y z" per leaf).
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Octree JSON, or "auto" to build from the dataset's prior.ply.
    #[arg(long, default_value = "auto")]
    svo: String,
    /// TrainConfig JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// FieldConfig JSON; defaults to the paper-scale field.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Disable the robust depth loss (sets lambda_d = 0).
    #[arg(long)]
    no_depth_loss: bool,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to the checkpoint path with .csv.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    svo: String,
    #[arg(long)]
    view: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional raw depth output path.
    #[arg(long)]
    depth_out: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    svo: String,
    #[arg(long, value_enum)]
    split: SplitArg,
    /// Report JSON path; a CSV is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Guided)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 128)]
    n_important: usize,
    #[arg(long, default_value_t = 128)]
    n_free: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplerArgs {
    fn to_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_important: self.n_important,
            n_free: self.n_free,
            seed: self.seed,
            strategy: self.strategy.to_strategy(),
        }
    }
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "auto")]
    svo: String,
    /// Matrix JSON: strategies, depth-loss settings, seeds.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Base TrainConfig JSON shared by all arms.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Scene JSON for prior-vs-surface statistics.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    svo: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AblationMatrix {
    strategies: Vec<Strategy>,
    depth_loss: Vec<bool>,
    seeds: Vec<u64>,
}

impl Default for AblationMatrix {
    fn default() -> Self {
        AblationMatrix {
            strategies: vec![Strategy::Guided, Strategy::Uniform],
            depth_loss: vec![true, false],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    n_points: usize,
    noise_sigma: f64,
    outlier_frac: f64,
    n_train: usize,
    n_test: usize,
    trajectory: Trajectory,
    width: u32,
    height: u32,
    /// The only timestamp in any artifact; everything else is seed-determined.
    created_unix: u64,
}

/// Exit codes: 0 success, 1 I/O, 2 usage/config, 3 numeric abort.
pub fn exit_code(e: &VoxError) -> i32 {
    match e {
        VoxError::Io(_) | VoxError::Parse { .. } => 1,
        VoxError::Numeric(_) => 3,
        _ => 2,
    }
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // ignore failure when a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthGen(args) => synth_gen(args),
        Command::BuildSvo(args) => build_svo_cmd(args),
        Command::Train(args) => train_cmd(args),
        Command::Render(args) => render_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Ablate(args) => ablate_cmd(args),
        Command::Info(args) => info_cmd(args),
    }
}

fn load_scene(path: &Option<PathBuf>) -> Result<SyntheticScene> {
    match path {
        Some(p) => io::scene::read_scene(p),
        None => Ok(SyntheticScene::toy_room()),
    }
}

fn synth_gen(args: SynthGenArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let trajectory = match args.trajectory {
        TrajectoryArg::InsideOut => Trajectory::InsideOut,
        TrajectoryArg::Orbit => Trajectory::Orbit,
    };
    let dataset = make_dataset(
        &scene,
        args.train,
        args.test,
        trajectory,
        args.width,
        args.height,
    )?;
    let cloud = sample_prior_cloud(&scene, args.points, args.noise, args.outliers, args.seed)?;
    fs::create_dir_all(&args.out)?;
    io::dataset::save_dataset(&args.out, &dataset)?;
    io::ply::write_ply(&args.out.join("prior.ply"), &cloud, true)?;
    io::scene::write_scene(&args.out.join("scene.json"), &scene)?;
    let manifest = Manifest {
        command: "synth-gen".into(),
        seed: args.seed,
        n_points: args.points,
        noise_sigma: args.noise,
        outlier_frac: args.outliers,
        n_train: args.train,
        n_test: args.test,
        trajectory,
        width: args.width,
        height: args.height,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "wrote {} views ({} train) and {} prior points to {}",
        dataset.cameras.len(),
        args.train,
        cloud.points.len(),
        args.out.display()
    );
    Ok(())
}

fn read_prior(path: &Path, sigma: Option<f64>) -> Result<crate::svo::PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => io::ply::read_ply(path, sigma),
        _ => io::ply::read_xyz(path, sigma),
    }
}

fn build_svo_cmd(args: BuildSvoArgs) -> Result<()> {
    let cloud = read_prior(&args.prior, args.sigma)?;
    let leaf = match args.leaf {
        Some(v) => LeafSize::Explicit(v),
        None => LeafSize::Auto,
    };
    let svo = build_octree(&cloud, leaf)?;
    io::svo::write_svo(&args.out, &svo)?;
    if let Some(dump) = &args.dump {
        fs::write(dump, svo.debug_dump())?;
    }
    println!(
        "octree: {} leaves at level {} (leaf {:.4} m) from {} points",
        svo.occupied_leaves().len(),
        svo.max_level,
        svo.leaf_size,
        cloud.points.len()
    );
    Ok(())
}

fn load_svo(spec: &str, data: &Path) -> Result<SparseVoxelOctree> {
    if spec == "auto" {
        let cloud = io::ply::read_ply(&data.join("prior.ply"), None)?;
        build_octree(&cloud, LeafSize::Auto)
    } else {
        io::svo::read_svo(Path::new(spec))
    }
}

fn read_json_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let dataset = io::dataset::load_dataset(&args.data)?;
    let svo = load_svo(&args.svo, &args.data)?;
    let mut cfg: TrainConfig = read_json_config(&args.config)?;
    let field_cfg: FieldConfig = read_json_config(&args.field)?;
    if let Some(i) = args.iterations {
        cfg.iterations = i;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s.to_strategy();
    }
    if args.no_depth_loss {
        cfg.loss.lambda_d = 0.0;
    }
    cfg.validate()?;
    let (_state, log) = train(&dataset, &svo, field_cfg, &cfg, Some(&args.out))?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("csv"));
    io::log::write_log(&log_path, &log)?;
    if let Some(last) = log.last() {
        println!("final train PSNR: {:.2} dB", last.psnr_train_patch);
    }
    println!("checkpoint: {}", args.out.display());
    Ok(())
}

/// Shared far plane covering the root cube from every camera.
fn far_plane(svo: &SparseVoxelOctree, cameras: &[Camera]) -> f64 {
    let root = svo.root_bounds;
    cameras
        .iter()
        .map(|c| (c.translation - root.center()).norm() + 0.75 * root.diagonal())
        .fold(0.0, f64::max)
}

fn render_cmd(args: RenderArgs) -> Result<()> {
    let dataset = io::dataset::load_dataset(&args.data)?;
    let svo = load_svo(&args.svo, &args.data)?;
    let (field, _, _) = io::checkpoint::load_checkpoint(&args.ckpt)?;
    if args.view >= dataset.cameras.len() {
        return Err(VoxError::Contract(format!(
            "view {} out of range ({} views)",
            args.view,
            dataset.cameras.len()
        )));
    }
    let sampler_cfg = args.sampler.to_config();
    let t_far = far_plane(&svo, &dataset.cameras);
    let (image, depth) = render_image(
        &field,
        &svo,
        &dataset.cameras[args.view],
        &sampler_cfg,
        &RenderOptions::default(),
        T_NEAR,
        t_far,
        sampler_cfg.seed,
    )?;
    io::ppm::write_ppm(&args.out, &image)?;
    if let Some(d) = &args.depth_out {
        io::depth::write_depth(d, &depth)?;
    }
    println!("rendered view {} to {}", args.view, args.out.display());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let dataset = io::dataset::load_dataset(&args.data)?;
    let svo = load_svo(&args.svo, &args.data)?;
    let (field, _, iteration) = io::checkpoint::load_checkpoint(&args.ckpt)?;
    let sampler_cfg = args.sampler.to_config();
    let t_far = far_plane(&svo, &dataset.cameras);
    let report = evaluate(
        &field,
        &svo,
        &dataset,
        args.split.to_split(),
        &sampler_cfg,
        &RenderOptions::default(),
        T_NEAR,
        t_far,
        iteration,
    )?;
    io::report::write_report_json(&args.out, &report)?;
    io::report::write_report_csv(&args.out.with_extension("csv"), &report)?;
    println!(
        "{:?}: mean PSNR {:.2} dB, mean SSIM {:.4}",
        report.split, report.mean_psnr, report.mean_ssim
    );
    Ok(())
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Guided => "guided",
        Strategy::Uniform => "uniform",
    }
}

fn ablate_cmd(args: AblateArgs) -> Result<()> {
    let dataset = io::dataset::load_dataset(&args.data)?;
    let svo = load_svo(&args.svo, &args.data)?;
    let matrix: AblationMatrix = read_json_config(&args.matrix)?;
    let base: TrainConfig = read_json_config(&args.config)?;
    let field_cfg: FieldConfig = read_json_config(&args.field)?;
    fs::create_dir_all(&args.out)?;

    let mut rows: Vec<(String, bool, u64, f64, f64, Option<f64>)> = Vec::new();
    for &strategy in &matrix.strategies {
        for &depth_on in &matrix.depth_loss {
            for &seed in &matrix.seeds {
                let mut cfg = base;
                cfg.strategy = strategy;
                cfg.seed = seed;
                if let Some(i) = args.iterations {
                    cfg.iterations = i;
                }
                if !depth_on {
                    cfg.loss.lambda_d = 0.0;
                }
                cfg.validate()?;
                let arm = format!(
                    "{}_{}_s{}",
                    strategy_name(strategy),
                    if depth_on { "depth" } else { "nodepth" },
                    seed
                );
                let ckpt = args.out.join(format!("{arm}.vxnf"));
                let (state, log) = train(&dataset, &svo, field_cfg, &cfg, Some(&ckpt))?;
                io::log::write_log(&args.out.join(format!("{arm}.csv")), &log)?;
                let sampler_cfg = SamplerConfig {
                    n_important: cfg.n_important,
                    n_free: cfg.n_free,
                    seed,
                    strategy,
                };
                let t_far = far_plane(&svo, &dataset.cameras);
                let report = evaluate(
                    &state.field,
                    &svo,
                    &dataset,
                    Split::TestInterp,
                    &sampler_cfg,
                    &RenderOptions::default(),
                    T_NEAR,
                    t_far,
                    cfg.iterations,
                )?;
                io::report::write_report_json(&args.out.join(format!("{arm}.json")), &report)?;
                println!(
                    "{arm}: PSNR {:.2} dB, SSIM {:.4}",
                    report.mean_psnr, report.mean_ssim
                );
                rows.push((
                    strategy_name(strategy).to_string(),
                    depth_on,
                    seed,
                    report.mean_psnr,
                    report.mean_ssim,
                    report.mean_depth_mae,
                ));
            }
        }
    }

    // per-arm means over seeds
    let mut arms: BTreeMap<(String, bool), Vec<&(String, bool, u64, f64, f64, Option<f64>)>> =
        BTreeMap::new();
    for row in &rows {
        arms.entry((row.0.clone(), row.1)).or_default().push(row);
    }

    let mut csv = String::from("strategy,depth_loss,seed,psnr,ssim,depth_mae\n");
    for (s, d, seed, p, ss, mae) in &rows {
        let _ = writeln!(
            csv,
            "{s},{d},{seed},{p},{ss},{}",
            mae.map_or(String::new(), |m| m.to_string())
        );
    }
    let mut md = String::from(
        "| strategy | depth loss | mean PSNR (dB) | mean SSIM | mean depth MAE (m) |\n\
         |---|---|---|---|---|\n",
    );
    for ((s, d), group) in &arms {
        let n = group.len() as f64;
        let p = group.iter().map(|r| r.3).sum::<f64>() / n;
        let ss = group.iter().map(|r| r.4).sum::<f64>() / n;
        let maes: Vec<f64> = group.iter().filter_map(|r| r.5).collect();
        let mae = if maes.is_empty() {
            "-".to_string()
        } else {
            format!("{:.4}", maes.iter().sum::<f64>() / maes.len() as f64)
        };
        let _ = writeln!(
            md,
            "| {s} | {} | {p:.2} | {ss:.4} | {mae} |",
            if *d { "on" } else { "off" }
        );
    }
    fs::write(args.out.join("table.csv"), csv)?;
    fs::write(args.out.join("table.md"), &md)?;
    println!("{md}");
    Ok(())
}

fn info_cmd(args: InfoArgs) -> Result<()> {
    let mut printed = false;
    if let Some(data) = &args.data {
        let dataset = io::dataset::load_dataset(data)?;
        let count = |s: Split| dataset.views_in(s).len();
        println!(
            "dataset {}: {} views ({} train, {} interp, {} extrap), {}x{}",
            data.display(),
            dataset.cameras.len(),
            count(Split::Train),
            count(Split::TestInterp),
            count(Split::TestExtrap),
            dataset.cameras[0].width,
            dataset.cameras[0].height
        );
        printed = true;
    }
    if let Some(prior) = &args.prior {
        let cloud = read_prior(prior, args.sigma)?;
        let max_sigma = cloud
            .points
            .iter()
            .map(|p| p.noise_sigma)
            .fold(0.0f64, f64::max);
        println!(
            "prior {}: {} points, bounds {:?} .. {:?}, max sigma {max_sigma}",
            prior.display(),
            cloud.points.len(),
            cloud.bounds.min.to_array(),
            cloud.bounds.max.to_array()
        );
        if let Some(scene_path) = &args.scene {
            let scene = io::scene::read_scene(scene_path)?;
            let dists: Vec<f64> = cloud
                .points
                .iter()
                .map(|p| crate::synth::surface_distance(&scene, p.position))
                .collect();
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            let max = dists.iter().fold(0.0f64, |a, &b| a.max(b));
            println!("  surface distance: mean {mean:.6} m, max {max:.6} m");
        }
        printed = true;
    }
    if let Some(svo_path) = &args.svo {
        let svo = io::svo::read_svo(svo_path)?;
        println!(
            "octree {}: level {}, {} leaves, leaf {:.4} m, root side {:.3} m",
            svo_path.display(),
            svo.max_level,
            svo.occupied_leaves().len(),
            svo.leaf_size,
            svo.root_bounds.extent().x
        );
        printed = true;
    }
    if let Some(ckpt) = &args.ckpt {
        let (field, opt, iteration) = io::checkpoint::load_checkpoint(ckpt)?;
        println!(
            "checkpoint {}: iteration {iteration}, {} parameters, optimizer {}",
            ckpt.display(),
            field.params.len(),
            if opt.is_some() { "present" } else { "absent" }
        );
        printed = true;
    }
    if !printed {
        return Err(VoxError::Contract(
            "info: pass at least one of --data, --prior, --svo, --ckpt".into(),
        ));
    }
    Ok(())
}
