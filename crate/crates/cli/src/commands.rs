use std::path::{Path, PathBuf};

use egopose_core::hash::{config_hash, sha256_hex};
use egopose_core::metrics::aggregate;
use egopose_core::record::{DatasetManifest, FrameRecord, Split};
use egopose_core::spawner::{place_characters, Scene, SpawnConfig};
use egopose_core::stats::{write_scatter_plots, DistributionReport, KeypointClouds};
use egopose_core::synth::profile::CharacterProfile;
use egopose_core::synth::{build_dataset, GenConfig};
use egopose_core::PoseFrame;
use egopose_model::Variant;
use egopose_train::run::{run_dir, EXPERIMENT_FILE};
use egopose_train::{
    ablation_suite, ablation_table, evaluate, evaluate_oracle, load_run, train_runs, AblationGrid, Datasets,
    Experiment, SplitData, Strategy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::provenance::{Provenance, Versions};
use crate::{AblateArgs, Cli, Command, EvalArgs, GenArgs, ModelOverrides, SpawnArgs, StatsArgs, TrainArgs};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Spawn(a) => spawn(a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::Ablate(a) => ablate(cli, a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// The dataset root from the flag/environment, else from the experiment file.
fn data_root(cli: &Cli, configured: Option<&str>) -> CliResult<PathBuf> {
    let root = cli
        .data_root
        .clone()
        .or_else(|| configured.map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("no dataset root: pass --data-root or set EGOPOSE_DATA_ROOT".into()))?;
    if !root.is_dir() {
        return Err(CliError::Data(format!("dataset root {} does not exist", root.display())));
    }
    Ok(root)
}

fn parse_split(s: &str) -> CliResult<Split> {
    Split::parse(s).ok_or_else(|| CliError::Usage(format!("unknown split {s:?} (expected train, val or test)")))
}

fn parse_strategy(s: &str) -> CliResult<Strategy> {
    Strategy::parse(s).ok_or_else(|| CliError::Usage(format!("unknown strategy {s:?} (expected separate or end2end)")))
}

fn parse_variant(s: &str) -> CliResult<Variant> {
    Variant::parse(s).ok_or_else(|| {
        CliError::Usage(format!("unknown variant {s:?} (expected stereo-shared, stereo-dual or monocular)"))
    })
}

fn manifest_checksums(root: &Path) -> CliResult<Vec<(String, String)>> {
    Split::ALL
        .iter()
        .map(|s| {
            let path = DatasetManifest::path(root, *s);
            let bytes = std::fs::read(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok((DatasetManifest::file_name(*s), sha256_hex(&bytes)))
        })
        .collect()
}

fn gen(cli: &Cli, a: &GenArgs) -> CliResult<()> {
    let mut cfg: GenConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GenConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.motions {
        cfg.motions = m;
    }
    if let Some(c) = &a.categories {
        cfg.categories = c.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(d) = a.duration {
        cfg.duration_s = d;
    }
    if let Some(f) = a.frame_stride {
        cfg.frame_stride = f;
    }
    if let Some(scene) = &a.scene {
        cfg.scene = Scene::load(scene)?;
    }
    cfg.validate()?;
    let out = a
        .out
        .clone()
        .or_else(|| cli.data_root.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or --data-root".into()))?;
    let summary = build_dataset(&cfg, &out)?;
    let mut categories: Vec<&str> = summary
        .manifests
        .iter()
        .flat_map(|m| m.motions.iter().map(|x| x.category.as_str()))
        .collect();
    categories.sort_unstable();
    categories.dedup();
    println!("dataset: {}", out.display());
    println!("motions: {}", summary.motions());
    println!("frames: {}", summary.frames());
    println!("categories: {} ({})", categories.len(), categories.join(", "));
    for m in &summary.manifests {
        println!("  {:<5} {:>4} motions {:>6} frames", m.split.name(), m.motions.len(), m.frame_count());
    }
    for (name, sum) in manifest_checksums(&out)? {
        println!("{name} sha256 {sum}");
    }
    Provenance {
        command: "gen",
        config_hash: config_hash(&cfg),
        seeds: vec![cfg.seed],
        data_root: Some(out.display().to_string()),
        versions: Versions::current(),
    }
    .write(&out)
}

#[derive(Serialize)]
struct PlacedGroup {
    anchor_region: usize,
    neighbors: Vec<usize>,
    requested: usize,
    placements: Vec<PlacedCharacter>,
    warning: Option<String>,
}

#[derive(Serialize)]
struct PlacedCharacter {
    position: [f64; 3],
    z_offset: f64,
    region: usize,
}

fn spawn(a: &SpawnArgs) -> CliResult<()> {
    let scene = match &a.scene {
        Some(p) => Scene::load(p)?,
        None => Scene::default_floor(),
    };
    let mut cfg = SpawnConfig {
        seed: a.seed,
        ..SpawnConfig::default()
    };
    if let Some(v) = a.neighbor_radius {
        cfg.neighbor_radius = v;
    }
    if let Some(v) = a.min_separation {
        cfg.min_separation = v;
    }
    if let Some(v) = a.group_size_mean {
        cfg.group_size_mean = v;
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lowest = [CharacterProfile::nominal(0).lowest_point()];
    let mut groups = Vec::with_capacity(a.groups);
    for _ in 0..a.groups {
        let g = place_characters(&scene.regions, &cfg, &lowest, &mut rng)?;
        groups.push(PlacedGroup {
            anchor_region: g.anchor_region,
            neighbors: g.neighbors,
            requested: g.requested,
            placements: g
                .placements
                .into_iter()
                .map(|p| PlacedCharacter {
                    position: p.position,
                    z_offset: p.z_offset,
                    region: p.region,
                })
                .collect(),
            warning: g.warning,
        });
    }
    let text = serde_json::to_string_pretty(&groups).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment(o: &ModelOverrides) -> CliResult<Experiment> {
    let mut exp = match &o.config {
        Some(p) => Experiment::load(p)?,
        None => Experiment::default(),
    };
    if let Some(s) = o.seed {
        exp.train.seed = s;
        exp.train.seeds.clear();
    }
    if let Some(s) = &o.strategy {
        exp.train.strategy = parse_strategy(s)?;
    }
    if let Some(v) = &o.variant {
        exp.model.pose2d.variant = parse_variant(v)?;
    }
    if let Some(b) = o.backbone {
        exp.model.pose2d.backbone_depth = b;
    }
    if let Some(w) = o.weight_sharing {
        exp.model.pose2d.weight_sharing = w;
    }
    if let Some(r) = o.runs {
        exp.train.runs = r;
    }
    if let Some(e) = o.epochs {
        exp.train.epochs = e;
    }
    if let Some(b) = o.batch_size {
        exp.train.batch_size = b;
    }
    if let Some(w) = o.base_width {
        exp.model.pose2d.base_width = w;
    }
    exp.validate()?;
    Ok(exp)
}

fn train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let exp = experiment(&a.model)?;
    let root = data_root(cli, exp.data_root.as_deref())?;
    let data = Datasets::open(&root, &exp)?;
    let (reports, eval) = train_runs(&data, &exp, &a.out)?;
    for r in &reports {
        println!(
            "seed {}: MPJPE {:.2} mm, PA-MPJPE {:.2} mm, 2D within {} cells {:.1}% ({:.1}s)",
            r.seed,
            r.scores.overall.mpjpe,
            r.scores.overall.pa_mpjpe,
            r.keypoints.radius_cells,
            100.0 * r.keypoints.fraction(),
            r.wall_clock_s
        );
        println!("  report {}", run_dir(&a.out, r.seed).join("report.json").display());
    }
    print!("{}", eval.to_table(false));
    Provenance {
        command: "train",
        config_hash: exp.config_hash(),
        seeds: exp.train.run_seeds(),
        data_root: Some(root.display().to_string()),
        versions: Versions::current(),
    }
    .write(&a.out)
}

fn eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let split = parse_split(&a.split)?;
    let run_exp = match &a.run {
        Some(dir) => {
            let path = dir.join(EXPERIMENT_FILE);
            if !path.is_file() {
                return Err(CliError::Data(format!("{} not found; is {} a training output?", path.display(), dir.display())));
            }
            Some(Experiment::load(&path)?)
        }
        None => None,
    };
    let exp = match (&a.config, &run_exp) {
        (Some(p), _) => Experiment::load(p)?,
        (None, Some(e)) => e.clone(),
        (None, None) if a.oracle => Experiment::default(),
        (None, None) => return Err(CliError::Usage("eval needs --run (or --oracle)".into())),
    };
    let root = data_root(cli, exp.data_root.as_deref().or(run_exp.as_ref().and_then(|e| e.data_root.as_deref())))?;
    let data = SplitData::open(&root, split, a.max_frames, &exp.model.pose2d, 0)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{} split under {} is empty", split.name(), root.display())));
    }
    let mut runs = Vec::new();
    let mut seeds = Vec::new();
    if a.oracle {
        runs.push(evaluate_oracle(&data)?);
    } else {
        let dir = a.run.as_ref().expect("checked above");
        for seed in run_exp.as_ref().expect("checked above").train.run_seeds() {
            let models = load_run(&exp.model, &run_dir(dir, seed))?;
            let ev = evaluate(&models, &data, exp.train.batch_size)?;
            println!(
                "seed {seed}: 2D keypoints within {} cells {:.1}% ({}/{})",
                ev.keypoints.radius_cells,
                100.0 * ev.keypoints.fraction(),
                ev.keypoints.within,
                ev.keypoints.visible
            );
            runs.push(ev.frames);
            seeds.push(seed);
        }
    }
    let report = aggregate(PoseFrame::Device, &runs)?;
    let table = report.to_table(a.by_category);
    print!("{table}");
    let out = a.out.clone().or_else(|| a.run.clone());
    if let Some(out) = out {
        create_dir(&out)?;
        let stem = if a.oracle { format!("oracle_{}", split.name()) } else { format!("eval_{}", split.name()) };
        write_json(&out.join(format!("{stem}.json")), &report)?;
        write_text(&out.join(format!("{stem}.txt")), &table)?;
        Provenance {
            command: "eval",
            config_hash: exp.config_hash(),
            seeds,
            data_root: Some(root.display().to_string()),
            versions: Versions::current(),
        }
        .write(&out)?;
    }
    Ok(())
}

fn stats(cli: &Cli, a: &StatsArgs) -> CliResult<()> {
    let root = data_root(cli, None)?;
    let splits = if a.split == "all" { Split::ALL.to_vec() } else { vec![parse_split(&a.split)?] };
    let mut records = Vec::new();
    for split in splits {
        if !DatasetManifest::path(&root, split).is_file() {
            continue;
        }
        let m = DatasetManifest::load(&root, split)?;
        for motion in &m.motions {
            for f in &motion.frames {
                records.push(FrameRecord::load(&root.join(f))?);
            }
        }
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("no frames found under {}", root.display())));
    }
    let clouds = KeypointClouds::from_records(&records);
    let report = DistributionReport::from_clouds(&clouds).map_err(|e| CliError::Data(e.to_string()))?;
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("stats.json"), &report)?;
        write_text(&out.join("stats.txt"), &table)?;
        write_scatter_plots(&clouds, out)?;
    }
    Ok(())
}

fn ablate(cli: &Cli, a: &AblateArgs) -> CliResult<()> {
    let exp = experiment(&a.model)?;
    let root = data_root(cli, exp.data_root.as_deref())?;
    let mut grid: AblationGrid = match &a.grid {
        Some(p) => read_json(p)?,
        None => AblationGrid::default(),
    };
    if let Some(b) = &a.backbones {
        grid.backbones = b.clone();
    }
    if let Some(v) = &a.variants {
        grid.variants = v.iter().map(|s| parse_variant(s)).collect::<CliResult<_>>()?;
    }
    if let Some(s) = &a.strategies {
        grid.strategies = s.iter().map(|s| parse_strategy(s)).collect::<CliResult<_>>()?;
    }
    if let Some(w) = &a.sharing {
        grid.weight_sharing = w.clone();
    }
    if grid.cells().is_empty() {
        return Err(CliError::Usage("the ablation grid has no valid cells".into()));
    }
    let results = ablation_suite(&root, &exp, &grid, Some(&a.out))?;
    print!("{}", ablation_table(&results));
    Provenance {
        command: "ablate",
        config_hash: config_hash(&(&exp.model, &exp.train, &grid)),
        seeds: exp.train.run_seeds(),
        data_root: Some(root.display().to_string()),
        versions: Versions::current(),
    }
    .write(&a.out)?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::Internal(format!("{failed} of {} ablation cells failed", results.len())));
    }
    Ok(())
}
