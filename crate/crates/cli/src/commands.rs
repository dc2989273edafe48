use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pointnet_kan::checkpoint;
use pointnet_kan::config::RunConfig;
use pointnet_kan::data::{
    convert_modelnet, convert_shapenet_part, gen_part_dataset, gen_scene_dataset, gen_shape_dataset, read_dataset,
    write_dataset, BlockOptions, ConvertOptions, Dataset, PointCloud, ShapeClass, SynthOptions, Task,
};
use pointnet_kan::layers::CountKind;
use pointnet_kan::models::Model;
use pointnet_kan::train::{
    ablate, alpha_beta_settings, degree_settings, format_ablation, format_robustness, point_predictions,
    predict_logits, robustness_sweep, train, EpochLog, EvalOptions, Metrics,
};
use pointnet_kan::{Error, Result};

use crate::{AblateArgs, Cli, Command, ConvertArgs, CountArgs, EvalArgs, PredictArgs, RobustnessArgs, SynthArgs, SynthKind, TrainArgs};

pub(crate) fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::ConvertOff(a) => convert(cli, a, false),
        Command::ConvertShapenet(a) => convert(cli, a, true),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(a),
        Command::Robustness(a) => robustness(cli, a),
        Command::Count(a) => count(cli, a),
        Command::Predict(a) => predict(a),
        Command::Ablate(a) => ablate_cmd(cli, a),
    }
}

fn seed(cli: &Cli) -> Result<u64> {
    Ok(cli.run_config()?.seed)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn summary(ds: &Dataset) -> String {
    let splits: Vec<String> = ds.splits.iter().map(|(n, s)| format!("{n}={}", s.len())).collect();
    format!(
        "task={} d={} classes={} {}",
        ds.task.as_str(),
        ds.dim,
        ds.num_classes(),
        splits.join(" ")
    )
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let seed = seed(cli)?;
    let mut opts = SynthOptions {
        train_per_class: a.train,
        test_per_class: a.test,
        points: a.points,
        with_normals: a.normals,
        rotate: !a.no_rotate,
        seed,
        ..SynthOptions::default()
    };
    if !a.classes.is_empty() {
        opts.classes = a.classes.iter().map(|c| ShapeClass::parse(c.trim())).collect::<Result<_>>()?;
    }
    let ds = match a.kind {
        SynthKind::Shapes => gen_shape_dataset(&opts)?,
        SynthKind::Mug => gen_part_dataset(&opts)?,
        SynthKind::Scene => {
            let block = BlockOptions {
                points_per_block: a.points,
                seed,
                ..BlockOptions::default()
            };
            gen_scene_dataset(a.train, a.test, a.density, &block)?
        }
    };
    write_dataset(&ds, &a.out)?;
    println!("{}: {}", a.out.display(), summary(&ds));
    println!("sha256 {}", ds.content_hash());
    Ok(())
}

fn convert(cli: &Cli, a: &ConvertArgs, shapenet: bool) -> Result<()> {
    let opts = ConvertOptions {
        points: a.points,
        with_normals: a.normals,
        seed: seed(cli)?,
    };
    let ds = if shapenet {
        convert_shapenet_part(&a.root, &opts)?
    } else {
        convert_modelnet(&a.root, &opts)?
    };
    write_dataset(&ds, &a.out)?;
    println!("{}: {}", a.out.display(), summary(&ds));
    Ok(())
}

/// Creates the CSV log and writes each epoch line as it arrives.
struct LogSink {
    path: PathBuf,
    out: BufWriter<File>,
    failed: Option<std::io::Error>,
}

impl LogSink {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", EpochLog::CSV_HEADER).map_err(|e| io_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
            failed: None,
        })
    }

    fn push(&mut self, line: &str) {
        if self.failed.is_none() {
            if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
                self.failed = Some(e);
            }
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.failed.take() {
            Some(e) => Err(io_err(&self.path, e)),
            None => self.out.flush().map_err(|e| io_err(&self.path, e)),
        }
    }
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg = cli.run_config()?;
    if let Some(p) = &a.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(p) = &a.checkpoint {
        cfg.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.log {
        cfg.log = Some(p.clone());
    }
    let ds_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("no dataset: pass --dataset or set data.dataset".into()))?;
    let ckpt = cfg.checkpoint.clone().unwrap_or_else(|| PathBuf::from("model.pkan"));
    let log_path = cfg.log.clone().unwrap_or_else(|| ckpt.with_extension("csv"));
    let ds = read_dataset(&ds_path)?;
    check_compatible(&cfg, &ds)?;
    let mut model = Model::build(&cfg.model, cfg.seed)?;
    log::info!("{} parameters, dataset {}", model.param_count(), summary(&ds));

    let mut sink = LogSink::create(&log_path)?;
    let outcome = train(&mut model, &ds, &cfg.train, &mut |e: &EpochLog| {
        log::info!("{}", e.csv_line());
        sink.push(&e.csv_line());
    })?;
    sink.finish()?;
    checkpoint::save(&ckpt, &model, Some(&outcome.optimizer))?;
    write_text(&ckpt.with_extension("cfg"), &cfg.to_text())?;
    let best = outcome.best_score.map_or("n/a".into(), |s| format!("{s:.6}"));
    println!(
        "trained {} epochs ({} steps); best epoch {} score {best}",
        outcome.log.len(),
        outcome.steps,
        outcome.best_epoch
    );
    println!("checkpoint {}", ckpt.display());
    println!("log {}", log_path.display());
    Ok(())
}

fn check_compatible(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    if cfg.model.input_dim != ds.dim {
        return Err(Error::Config(format!(
            "model.input_dim = {} but the dataset has {} features per point",
            cfg.model.input_dim, ds.dim
        )));
    }
    if cfg.task() != ds.task {
        return Err(Error::Config(format!(
            "branch '{}' trains task '{}' but the dataset is '{}'",
            cfg.model.branch.as_str(),
            cfg.task().as_str(),
            ds.task.as_str()
        )));
    }
    if cfg.model.num_classes < ds.num_classes() {
        return Err(Error::Config(format!(
            "model.num_classes = {} but the dataset has {} classes",
            cfg.model.num_classes,
            ds.num_classes()
        )));
    }
    if ds.task == Task::PartSeg && cfg.model.one_hot_size < ds.categories.len() {
        return Err(Error::Config(format!(
            "model.one_hot_size = {} but the dataset has {} categories",
            cfg.model.one_hot_size,
            ds.categories.len()
        )));
    }
    Ok(())
}

fn eval_options(a: &EvalArgs) -> EvalOptions {
    EvalOptions {
        batch_size: a.batch_size,
        restrict_parts: !a.unrestricted,
    }
}

/// Loads checkpoint and dataset and checks they fit together.
fn load_pair(a: &EvalArgs) -> Result<(Model, Dataset)> {
    let (model, _) = checkpoint::load(&a.checkpoint)?;
    let ds = read_dataset(&a.dataset)?;
    if model.config.input_dim != ds.dim {
        return Err(Error::Config(format!(
            "checkpoint expects {} features per point, dataset has {}",
            model.config.input_dim, ds.dim
        )));
    }
    if model.task() != ds.task {
        return Err(Error::Config(format!(
            "checkpoint task '{}' does not match dataset task '{}'",
            model.task().as_str(),
            ds.task.as_str()
        )));
    }
    Ok((model, ds))
}

fn format_metrics(task: Task, m: &Metrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "samples\t{}", m.count);
    let _ = writeln!(s, "overall_accuracy\t{:.6}", m.overall_accuracy);
    let _ = writeln!(s, "mean_class_accuracy\t{:.6}", m.mean_class_accuracy);
    if task != Task::Classification {
        let _ = writeln!(s, "mean_iou\t{:.6}", m.mean_iou);
        if task == Task::PartSeg {
            let _ = writeln!(s, "category_mean_iou\t{:.6}", m.category_mean_iou);
        }
        for (name, v) in &m.per_category_iou {
            let _ = writeln!(s, "iou/{name}\t{v:.6}");
        }
    }
    s
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let (model, ds) = load_pair(a)?;
    let m = pointnet_kan::train::evaluate(&model, &ds, &a.split, &eval_options(a))?;
    print!("{}", format_metrics(ds.task, &m));
    Ok(())
}

fn robustness(cli: &Cli, a: &RobustnessArgs) -> Result<()> {
    let (model, ds) = load_pair(&a.eval)?;
    let samples = ds.require_split(&a.eval.split)?;
    let curve = robustness_sweep(&model, &ds, samples, &a.keeps, seed(cli)?, &eval_options(&a.eval))?;
    let table = format_robustness(&curve);
    print!("{table}");
    if let Some(p) = &a.out {
        write_text(p, &table)?;
    }
    Ok(())
}

fn count(cli: &Cli, a: &CountArgs) -> Result<()> {
    let model = match &a.checkpoint {
        Some(p) => checkpoint::load(p)?.0,
        None => {
            let cfg = cli.run_config()?;
            Model::build(&cfg.model, cfg.seed)?
        }
    };
    let b = model.param_breakdown();
    println!("layer\tkind\td_in\td_out\tparams");
    for l in &b.layers {
        let kind = match l.kind {
            CountKind::Kan { degree } => format!("kan(n={degree})"),
            CountKind::Mlp => "mlp".into(),
            CountKind::BatchNorm => "batchnorm".into(),
        };
        println!("{}\t{kind}\t{}\t{}\t{}", l.name, l.d_in, l.d_out, l.params);
    }
    println!("total_params\t{}", b.total());
    println!("params_per_degree\t{}", b.kan_degree_increment());
    let f = model.flops_estimate(a.points);
    println!();
    println!("stage\tops (N={})", a.points);
    for (name, ops) in &f.stages {
        println!("{name}\t{ops}");
    }
    println!("total_ops\t{}", f.total());
    println!("convention: {}", f.convention);
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let (model, ds) = load_pair(&a.eval)?;
    let samples = ds.require_split(&a.eval.split)?;
    let clouds: Vec<&PointCloud> = samples.iter().map(|s| &s.cloud).collect();
    let logits = predict_logits(&model, &clouds, a.eval.batch_size)?;
    let mut out = String::new();
    for (s, l) in samples.iter().zip(&logits) {
        if ds.task == Task::Classification {
            let p = point_predictions(&l.clone().reshape(vec![1, l.len()])?, None)[0];
            let name = ds.class_names.get(p).map_or("?", |s| s.as_str());
            let _ = writeln!(out, "{}\t{p}\t{name}", s.name);
        } else {
            let parts = s
                .cloud
                .category
                .and_then(|c| ds.categories.get(c))
                .map(|c| c.parts.as_slice())
                .filter(|_| ds.task == Task::PartSeg && !a.eval.unrestricted);
            let labels: Vec<String> = point_predictions(l, parts).iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{}\t{}", s.name, labels.join(" "));
        }
    }
    write_text(&a.out, &out)?;
    println!("{} predictions written to {}", samples.len(), a.out.display());
    Ok(())
}

fn ablate_cmd(cli: &Cli, a: &AblateArgs) -> Result<()> {
    let mut cfg = cli.run_config()?;
    if let Some(p) = &a.dataset {
        cfg.dataset = Some(p.clone());
    }
    let ds_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("no dataset: pass --dataset or set data.dataset".into()))?;
    let ds = read_dataset(&ds_path)?;
    check_compatible(&cfg, &ds)?;
    let p = cfg.model.poly;
    let mut settings = Vec::new();
    if let Some((lo, hi)) = a.degrees {
        settings.extend(degree_settings(lo, hi, p.alpha(), p.beta()));
    }
    if a.alpha_beta {
        settings.extend(alpha_beta_settings(p.degree()));
    }
    if settings.is_empty() {
        return Err(Error::Config("nothing to sweep: pass --degrees lo..hi and/or --alpha-beta".into()));
    }
    let rows = ablate(&cfg.model, &cfg.train, &ds, &settings, &a.split, cfg.seed)?;
    let table = format_ablation(&rows);
    print!("{table}");
    if let Some(p) = &a.out {
        write_text(p, &table)?;
    }
    Ok(())
}
