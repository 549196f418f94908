//! The six subcommands. Each one validates flags, defers real work to the
//! library, and prints a stable plain-text report.

use std::time::Instant;

use bnnx::data::Dataset;
use bnnx::io::{
    export_extractor, load_bundle, parse_pnm, read_feature_cache, save_model, write_feature_cache,
};
use bnnx::layers::Layer;
use bnnx::train::{evaluate, Trainer};
use bnnx::transfer::{extract_features, fingerprint_hex, retrain_head, split_model, HeadKind};
use bnnx::{FloatTensor, Model};

use crate::data::{ensure_writable, load_idx_pair, read_bytes, read_model, write_bytes};
use crate::{arch, report, CliError, CliResult, Located};
use crate::{
    Command, EvaluateArgs, ExportArgs, FeaturesArgs, FinetuneArgs, HeadArg, InspectArgs,
    PretrainArgs,
};

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Pretrain(args) => pretrain(args),
        Command::Finetune(args) => finetune(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Features(args) => features(args),
        Command::Export(args) => export(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn pretrain(args: PretrainArgs) -> CliResult<()> {
    let started = Instant::now();
    ensure_writable(&args.out, args.force)?;
    if let Some(csv) = &args.csv {
        ensure_writable(csv, args.force)?;
    }
    let cfg = args.train.to_config()?;
    let parsed = arch::parse(&args.arch, cfg.seed)?;

    let train = load_idx_pair(
        &args.data.images,
        &args.data.labels,
        args.data.classes,
        args.preprocess.build(false)?,
    )?;
    let val = match (&args.val_images, &args.val_labels) {
        (Some(images), Some(labels)) => Some(load_idx_pair(
            images,
            labels,
            Some(train.num_classes()),
            args.preprocess.build(true)?,
        )?),
        _ => None,
    };

    // the arch owns the class count; the labels have to agree
    if parsed.classes != train.num_classes() {
        return Err(CliError::usage(format!(
            "--arch ends in {} classes but the dataset has {}",
            parsed.classes,
            train.num_classes()
        )));
    }
    check_model_fits(&parsed, &train)?;

    let mut trainer = Trainer::new(parsed.model, cfg);
    let records = trainer.run(&train, val.as_ref())?;
    let model = trainer.into_model();

    write_bytes(&args.out, &save_model(&model)?)?;
    if let Some(csv) = &args.csv {
        report::write_csv(csv, &records)?;
    }
    report::print_train_summary("pretrain", &cfg, &records, started.elapsed());
    println!("model written to {}", args.out.display());
    Ok(())
}

/// The arch parser already proved the stages fit each other, so matching
/// the declared input against one post-preprocess sample is enough to
/// fail a bad --arch up front, not mid-epoch.
fn check_model_fits(parsed: &arch::ParsedArch, data: &Dataset) -> CliResult<()> {
    let (probe, _) = data.batch_eval(&[0])?;
    if probe.shape()[1..] != parsed.input_shape[..] {
        return Err(CliError::usage(format!(
            "--arch expects {:?} input but the data yields {:?} samples",
            parsed.input_shape,
            &probe.shape()[1..]
        )));
    }
    Ok(())
}

fn finetune(args: FinetuneArgs) -> CliResult<()> {
    let started = Instant::now();
    ensure_writable(&args.head_out, args.force)?;
    if let Some(csv) = &args.csv {
        ensure_writable(csv, args.force)?;
    }
    let cfg = args.train.to_config()?;
    let head_kind = match args.head {
        HeadArg::Binary => HeadKind::Binary,
        HeadArg::Float => HeadKind::Float,
    };

    let model = read_model(&args.model)?;
    let split_at = resolve_split(&model, args.split_index)?;
    let split = split_model(model, split_at)?;

    let cache = match (&args.features, &args.images, &args.labels) {
        (Some(path), None, None) => read_feature_cache(&read_bytes(path)?).at(path)?,
        (None, Some(images), Some(labels)) => {
            let data = load_idx_pair(images, labels, args.classes, args.preprocess.build(true)?)?;
            extract_features(split.extractor(), &data, cfg.batch_size)?
        }
        _ => {
            return Err(CliError::usage(
                "pass either --features or --images with --labels",
            ))
        }
    };
    let val_cache = match (&args.val_images, &args.val_labels) {
        (Some(images), Some(labels)) => {
            let data = load_idx_pair(
                images,
                labels,
                Some(cache.num_classes()),
                args.preprocess.build(true)?,
            )?;
            Some(extract_features(split.extractor(), &data, cfg.batch_size)?)
        }
        _ => None,
    };

    let outcome = retrain_head(&split, &cache, head_kind, &cfg, val_cache.as_ref())?;
    write_bytes(&args.head_out, &save_model(&outcome.head)?)?;
    if let Some(csv) = &args.csv {
        report::write_csv(csv, &outcome.records)?;
    }
    report::print_train_summary("finetune", &cfg, &outcome.records, started.elapsed());
    println!(
        "{} head written to {} (extractor untouched)",
        head_kind.name(),
        args.head_out.display()
    );
    Ok(())
}

/// The default head is the last layer.
fn resolve_split(model: &Model, flag: Option<usize>) -> CliResult<usize> {
    let n = model.len();
    let at = flag.unwrap_or_else(|| n.saturating_sub(1));
    if n < 2 || at == 0 || at >= n {
        return Err(CliError::usage(format!(
            "--split-index {at} out of range: the model has {n} layers, so valid boundaries are 1..{n}"
        )));
    }
    Ok(at)
}

fn evaluate_cmd(args: EvaluateArgs) -> CliResult<()> {
    let model = match (&args.model, &args.bundle, &args.head) {
        (Some(path), None, None) => read_model(path)?,
        (None, Some(stem), Some(head_path)) => {
            let bundle = load_bundle(stem).at(stem)?;
            let extractor = bundle.load_extractor().at(stem)?;
            let head = read_model(head_path)?;
            let mut layers = extractor.into_layers();
            layers.extend(head.into_layers());
            Model::new(layers)
        }
        _ => return Err(CliError::usage("pass --model, or --bundle with --head")),
    };

    match (&args.images, &args.labels, &args.image) {
        (Some(images), Some(labels), None) => {
            let data = load_idx_pair(images, labels, args.classes, args.preprocess.build(true)?)?;
            let metrics = evaluate(&model, &data, args.batch_size)?;
            println!("samples {}", data.len());
            println!("loss {}", metrics.loss);
            println!("top1 {}", metrics.top1);
            println!("top5 {}", metrics.top5);
        }
        (None, None, Some(path)) => {
            let image = parse_pnm(&read_bytes(path)?).at(path)?;
            let x = single_image_batch(image.to_tensor().at(path)?, &args)?;
            let logits = model.forward_infer(&x)?;
            let row = logits.data();
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            println!("prediction {}", order[0]);
            for (rank, &class) in order.iter().take(row.len().min(5)).enumerate() {
                println!("rank {} class {} logit {}", rank + 1, class, row[class]);
            }
        }
        _ => {
            return Err(CliError::usage(
                "pass --images with --labels, or a single --image",
            ))
        }
    }
    Ok(())
}

/// Runs one image through the same eval-time preprocessing a dataset gets,
/// then prepends the batch axis.
fn single_image_batch(x: FloatTensor, args: &EvaluateArgs) -> CliResult<FloatTensor> {
    match args.preprocess.build(true)? {
        Some(cfg) => {
            let probe = Dataset::new(vec![x], vec![0], 1)?.with_preprocess(cfg)?;
            Ok(probe.batch_eval(&[0])?.0)
        }
        None => {
            let mut shape = vec![1];
            shape.extend_from_slice(x.shape());
            Ok(FloatTensor::new(shape, x.data().to_vec())?)
        }
    }
}

fn features(args: FeaturesArgs) -> CliResult<()> {
    ensure_writable(&args.out, args.force)?;
    let model = read_model(&args.model)?;
    let split_at = resolve_split(&model, args.split_index)?;
    let split = split_model(model, split_at)?;
    let data = load_idx_pair(
        &args.data.images,
        &args.data.labels,
        args.data.classes,
        args.preprocess.build(true)?,
    )?;
    let cache = extract_features(split.extractor(), &data, args.batch_size)?;
    write_bytes(&args.out, &write_feature_cache(&cache))?;
    println!("features written to {}", args.out.display());
    println!(
        "rows {} dim {} classes {}",
        cache.len(),
        cache.feature_dim(),
        cache.num_classes()
    );
    println!("extractor sha256 {}", fingerprint_hex(cache.fingerprint()));
    Ok(())
}

fn export(args: ExportArgs) -> CliResult<()> {
    ensure_writable(&args.stem.with_extension("bnnx"), args.force)?;
    ensure_writable(&args.stem.with_extension("manifest"), args.force)?;
    let model = read_model(&args.model)?;
    let split_at = resolve_split(&model, args.split_index)?;
    let split = split_model(model, split_at)?;
    let bundle = export_extractor(&split, args.fold_shifts)?;
    let (blob, manifest) = bundle.write_to(&args.stem).at(&args.stem)?;
    println!("extractor written to {}", blob.display());
    println!("manifest written to {}", manifest.display());
    println!(
        "feature dim {} classes {} head {}",
        bundle.feature_dim,
        bundle.num_classes,
        bundle.head_kind.name()
    );
    println!("extractor sha256 {}", fingerprint_hex(&bundle.fingerprint));
    Ok(())
}

fn inspect(args: InspectArgs) -> CliResult<()> {
    let bytes = read_bytes(&args.model)?;
    let model = bnnx::io::load_model(&bytes).at(&args.model)?;
    println!("model {}", args.model.display());
    println!(
        "layers {} parameters {} file bytes {}",
        model.len(),
        model.param_count(),
        bytes.len()
    );
    let mut packed_bytes = 0usize;
    for (i, layer) in model.layers().iter().enumerate() {
        let mut line = format!("{i:>3}  {}", layer.describe());
        let params = layer.param_count();
        if params > 0 {
            line.push_str(&format!("  params {params}"));
        }
        if let Some(bits) = binary_bits(layer) {
            // one bit per weight, rounded up to whole bytes per layer
            let bytes = bits.div_ceil(8);
            line.push_str(&format!("  binary {bits} bits -> {bytes} bytes"));
            packed_bytes += bytes;
        }
        println!("{line}");
    }
    if packed_bytes > 0 {
        println!("packed binary weight bytes {packed_bytes}");
    }
    if let Some(classes) = model.output_classes() {
        println!("classes {classes}");
    }
    Ok(())
}

fn binary_bits(layer: &Layer) -> Option<usize> {
    match layer {
        Layer::BinaryDense(l) => Some(l.weight().numel()),
        Layer::BinaryConv2d(l) => Some(l.weight().numel()),
        _ => None,
    }
}
