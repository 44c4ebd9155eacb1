use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bcos::data::{by_class, compose_grid, read_cifar10, read_image, synth_dataset_sized, write_image, ImageFormat, Sample};
use bcos::explain::{
    contribution_map, extract_row, mean_corrected_row, render, AttributionMethod, MethodRegistry, Target,
};
use bcos::layers::NormKind;
use bcos::model::Model;
use bcos::pointing::{run_game, GameOptions};
use bcos::presets;
use bcos::training::{accuracy, evaluate_loss, train as fit, TargetKind, TrainConfig};
use bcos::{Error, Result, Tensor};
use clap::ValueEnum;

use crate::manifest::{write_file, Manifest};
use crate::{ArchArgs, Common, Dataset, EvalArgs, ExplainArgs, InspectArgs, OutFormat, PointingArgs, Preset, TrainArgs};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn preset_config(arch: &ArchArgs) -> Result<String> {
    Ok(match arch.preset {
        Preset::SynthCnn => presets::synth_cnn(arch.b, arch.size),
        Preset::MaxoutCnn => presets::maxout_cnn(arch.b, arch.size),
        Preset::ResidualCnn => presets::residual_cnn(NormKind::parse(&arch.norm)?, arch.b, arch.size),
        Preset::TinyVit => presets::tiny_vit(arch.b, arch.size),
        Preset::CifarPlain => presets::cifar_plain(arch.b)?,
    })
}

/// Config text from --config, else the preset.
fn config_text(common: &Common, arch: Option<&ArchArgs>) -> Result<Option<String>> {
    match (&common.config, arch) {
        (Some(p), _) => read_text(p).map(Some),
        (None, Some(a)) => preset_config(a).map(Some),
        (None, None) => Ok(None),
    }
}

fn load_checkpoint(common: &Common) -> Result<Model> {
    let path = common
        .checkpoint
        .as_ref()
        .ok_or_else(|| invalid("--checkpoint is required"))?;
    match &common.config {
        Some(c) => Model::load_matching(path, &read_text(c)?),
        None => Model::load(path),
    }
}

fn record_common(m: &mut Manifest, c: &Common) {
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    m.set("seed", c.seed)
        .set("config", path(&c.config))
        .set("checkpoint", path(&c.checkpoint))
        .set("out_dir", c.out_dir.display())
        .set("dataset", c.dataset.to_possible_value().expect("named").get_name())
        .set("data_dir", path(&c.data_dir))
        .set("data_seed", c.data_seed)
        .set("train_per_class", c.train_per_class)
        .set("test_per_class", c.test_per_class);
}

/// Train and held-out splits sized for `model`.
fn datasets(common: &Common, model: &Model) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let input = &model.header().input;
    match common.dataset {
        Dataset::Synth => {
            if input.len() != 3 || input[0] != 3 || input[1] != input[2] {
                return Err(invalid(format!("synthetic data needs a square RGB input, model takes {input:?}")));
            }
            if model.classes() != bcos::data::SYNTH_CLASSES.len() {
                return Err(invalid(format!(
                    "synthetic data has {} classes, model has {}",
                    bcos::data::SYNTH_CLASSES.len(),
                    model.classes()
                )));
            }
            Ok((
                synth_dataset_sized(common.train_per_class, input[1], common.data_seed)?,
                synth_dataset_sized(common.test_per_class, input[1], common.data_seed + 1)?,
            ))
        }
        Dataset::Cifar10 => {
            let dir = common
                .data_dir
                .as_ref()
                .ok_or_else(|| invalid("--dataset cifar10 needs --data-dir"))?;
            if input.as_slice() != [3, 32, 32] || model.classes() != 10 {
                return Err(invalid("CIFAR-10 needs a 3x32x32 input and 10 classes"));
            }
            read_cifar10(dir)
        }
    }
}

pub fn train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let c = &a.common;
    let cfg_text = config_text(c, Some(&a.arch))?;
    let mut model = match &c.checkpoint {
        Some(_) => load_checkpoint(c)?,
        None => Model::build(cfg_text.as_deref().unwrap_or_default(), c.seed)?,
    };
    create_out_dir(&c.out_dir)?;
    let model_path = c.out_dir.join("model.bcos");
    if let (Some(ck), Ok(out)) = (&c.checkpoint, model_path.canonicalize()) {
        if ck.canonicalize().ok().as_ref() == Some(&out) {
            return Err(invalid("refusing to overwrite the input checkpoint; choose another --out-dir"));
        }
    }
    let (train_set, test_set) = datasets(c, &model)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        lr_end: a.lr_end,
        warmup_steps: a.warmup_steps,
        clip_norm: (a.clip_norm > 0.0).then_some(a.clip_norm),
        target: TargetKind::parse(&a.target)?,
        augment: a.augment,
        seed: c.seed,
    };

    let mut m = Manifest::new("train", argv);
    record_common(&mut m, c);
    if c.config.is_none() && c.checkpoint.is_none() {
        m.set("preset", a.arch.preset.to_possible_value().expect("named").get_name())
            .set("b", a.arch.b)
            .set("size", a.arch.size)
            .set("norm", &a.arch.norm);
    }
    m.set("epochs", cfg.epochs)
        .set("batch_size", cfg.batch_size)
        .set("lr", cfg.lr)
        .set("lr_end", cfg.lr_end)
        .set("warmup_steps", cfg.warmup_steps)
        .set("clip_norm", a.clip_norm)
        .set("target", &a.target)
        .set("augment", cfg.augment)
        .set("model_config", "model.cfg");
    write_file(&c.out_dir.join("model.cfg"), model.config().as_bytes())?;
    m.write(&c.out_dir)?;

    let mut log = String::new();
    let log_path = c.out_dir.join("metrics.log");
    let res = fit(&mut model, &train_set, &test_set, &cfg, |e| {
        let line = e.line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    });
    write_file(&log_path, log.as_bytes())?;
    let metrics = res?;
    model.save(&model_path)?;
    if let Some(last) = metrics.last() {
        m.set("final_accuracy", last.accuracy);
    }
    m.write(&c.out_dir)
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> Result<()> {
    let c = &a.common;
    let model = load_checkpoint(c)?;
    let (_, test) = datasets(c, &model)?;
    let acc = accuracy(&model, &test, a.batch_size)?;
    let loss = evaluate_loss(&model, &test, TargetKind::OneHot)?;
    let report = format!("samples={}\naccuracy={acc:.6}\nloss={loss:.6}\n", test.len());
    print!("{report}");
    create_out_dir(&c.out_dir)?;
    write_file(&c.out_dir.join("eval.txt"), report.as_bytes())?;
    let mut m = Manifest::new("eval", argv);
    record_common(&mut m, c);
    m.set("batch_size", a.batch_size).write(&c.out_dir)
}

fn argmax(v: &[f32]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b })
}

/// Positive values in red, negative in blue, opacity by magnitude.
fn heatmap(map: &Tensor) -> Result<Tensor> {
    let (h, w) = (map.dims()[0], map.dims()[1]);
    let peak = map.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    let d = map.data();
    Tensor::from_fn(vec![4, h, w], |i| {
        let (ch, p) = (i / (h * w), i % (h * w));
        let v = d[p];
        match ch {
            0 => (v > 0.0) as u8 as f32,
            1 => 0.0,
            2 => (v < 0.0) as u8 as f32,
            _ if peak > 0.0 => v.abs() / peak,
            _ => 0.0,
        }
    })
}

fn spatial_csv(map: &Tensor) -> String {
    let w = *map.dims().last().unwrap();
    let mut s = String::from("y,x,contribution\n");
    for (i, v) in map.data().iter().enumerate() {
        writeln!(s, "{},{},{v:e}", i / w, i % w).unwrap();
    }
    s
}

pub fn explain(a: &ExplainArgs, argv: &[String]) -> Result<()> {
    let c = &a.common;
    let model = load_checkpoint(c)?;
    let image = read_image(&a.image)?;
    let x = model.encode(&image)?;
    let mut batch_dims = vec![1];
    batch_dims.extend_from_slice(image.dims());
    let logits = model.forward(&image.reshape(batch_dims)?)?;

    let target = match (a.layer, a.neuron, a.class) {
        (Some(layer), Some(index), _) => Target::Neuron { layer, index },
        (_, _, Some(class)) => Target::Class(class),
        _ => Target::Class(argmax(logits.data())),
    };
    let row = match (a.mean_corrected, target) {
        (true, Target::Class(j)) => mean_corrected_row(&model, &x, j)?,
        (true, Target::Neuron { .. }) => return Err(invalid("--mean-corrected applies to classes only")),
        (false, t) => extract_row(&model, &x, t)?,
    };

    let (img, spatial) = if a.method == "inherent" {
        (render(&row.row, &x)?, contribution_map(&row.row, &x)?.spatial)
    } else {
        let Target::Class(j) = target else {
            return Err(invalid(format!("method {} explains classes only", a.method)));
        };
        if a.mean_corrected {
            return Err(invalid("--mean-corrected applies to the inherent method only"));
        }
        let registry = MethodRegistry::default();
        let map = registry.get(&a.method)?.attribute(&model, &x, &[j])?.remove(0);
        (heatmap(&map)?, map)
    };

    create_out_dir(&c.out_dir)?;
    let format = match a.format {
        OutFormat::Png => ImageFormat::Png,
        OutFormat::Ppm => ImageFormat::Ppm,
    };
    let out = c.out_dir.join(format!("explanation.{}", format.extension()));
    write_image(&img, &out, format)?;
    write_file(&c.out_dir.join("contributions.csv"), spatial_csv(&spatial).as_bytes())?;

    let target_desc = match target {
        Target::Class(j) => format!("class={j}"),
        Target::Neuron { layer, index } => format!("layer={layer} neuron={index}"),
    };
    println!("{target_desc}");
    println!("output={:e}", row.output);
    println!("completeness_residual={:e}", row.completeness_residual());

    let mut m = Manifest::new("explain", argv);
    record_common(&mut m, c);
    m.set("image", a.image.display())
        .set("target", target_desc)
        .set("method", &a.method)
        .set("mean_corrected", a.mean_corrected)
        .set("format", format.extension())
        .set("completeness_residual", format!("{:e}", row.completeness_residual()))
        .write(&c.out_dir)
}

pub fn pointing(a: &PointingArgs, argv: &[String]) -> Result<()> {
    let c = &a.common;
    let model = load_checkpoint(c)?;
    let (_, test) = datasets(c, &model)?;
    let grids = compose_grid(&by_class(&test, model.classes()), a.grid_size, &model, a.grids, c.seed)?;
    let registry = MethodRegistry::default();
    let methods = a
        .methods
        .iter()
        .map(|n| registry.get(n.trim()))
        .collect::<Result<Vec<&dyn AttributionMethod>>>()?;
    let mut opts = GameOptions {
        top_n: a.top_n,
        smoothing: !a.no_smoothing,
        sliding_window: a.sliding_window,
        ..GameOptions::default()
    };
    if let Some(t) = a.threads {
        opts.threads = t;
    }
    let res = run_game(&model, &methods, &grids, &opts)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }

    create_out_dir(&c.out_dir)?;
    write_file(&c.out_dir.join("pointing.csv"), res.to_csv().as_bytes())?;
    let mut summary = String::new();
    for s in res.summary() {
        writeln!(
            summary,
            "method={} mean={:.6} q1={:.6} median={:.6} q3={:.6} n={}",
            s.method, s.mean, s.q1, s.median, s.q3, s.count
        )
        .unwrap();
    }
    print!("{summary}");
    write_file(&c.out_dir.join("summary.txt"), summary.as_bytes())?;

    let mut m = Manifest::new("pointing", argv);
    record_common(&mut m, c);
    m.set("grids", a.grids)
        .set("grid_size", a.grid_size)
        .set("methods", a.methods.join(","))
        .set("top_n", a.top_n.map(|t| t.to_string()).unwrap_or_default())
        .set("sliding_window", a.sliding_window)
        .set("smoothing", opts.smoothing)
        .set("threads", opts.threads)
        .set("warnings", res.warnings.len())
        .write(&c.out_dir)
}

pub fn inspect(a: &InspectArgs, argv: &[String]) -> Result<()> {
    let c = &a.common;
    let model = match &c.checkpoint {
        Some(_) => load_checkpoint(c)?,
        None => Model::build(&config_text(c, Some(&a.arch))?.unwrap_or_default(), c.seed)?,
    };
    let h = model.header();
    let mut out = String::new();
    writeln!(
        out,
        "input={:?} classes={} temperature={} logit_bias={}",
        h.input, h.classes, h.temperature, h.logit_bias
    )
    .unwrap();
    for (i, l) in model.layers().iter().enumerate() {
        writeln!(out, "layer{i} kind={} output={:?}", l.kind(), l.output_shape()).unwrap();
    }
    let mut total = 0;
    for (name, t) in model.named_tensors() {
        writeln!(out, "tensor {name} {:?}", t.dims()).unwrap();
        total += t.numel();
    }
    writeln!(out, "parameters={total}").unwrap();
    print!("{out}");
    create_out_dir(&c.out_dir)?;
    let mut m = Manifest::new("inspect", argv);
    record_common(&mut m, c);
    m.write(&c.out_dir)
}
