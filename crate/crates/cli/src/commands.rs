//! Implementations behind the subcommands: load data, run the core library,
//! write artifacts, stamp a manifest.

use crate::manifest::{sha256_hex, DatasetStamp, RunManifest};
use crate::metrics;
use crate::model_io::LoadedModel;
use crate::{Command, DataArgs, ForestFlags, OptimizerArg, OutArgs, TrainFlags};
use dndt_core::analysis::{analyze, cutpoint_sweep, dndt_importance, rank_descending};
use dndt_core::binning::TemperatureSchedule;
use dndt_core::cart::fit_cart;
use dndt_core::data::{builtin_csv, load_csv_reader, CsvLoad, Dataset, LoadOptions, BUILTIN_NAMES};
use dndt_core::forest::{
    fit_forest, should_use_forest, ForestConfig, DEFAULT_SUBSET_SIZE, DEFAULT_TREES,
    FOREST_FEATURE_THRESHOLD,
};
use dndt_core::model::{ModelFile, ModelPayload};
use dndt_core::train::{fit, fit_with_validation, Optimizer, TrainConfig};
use dndt_core::{Error, Result};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            data,
            train,
            forest,
            out,
        } => cmd_train(&data, &train, &forest, &out),
        Command::Eval { model, data, out } => cmd_eval(&model, &data, &out),
        Command::Analyze {
            data,
            train,
            runs,
            out,
        } => cmd_analyze(&data, &train, runs, &out),
        Command::Sweep {
            data,
            train,
            counts,
            runs,
            out,
        } => cmd_sweep(&data, &train, &counts, runs, &out),
        Command::Compare {
            data,
            train,
            runs,
            out,
        } => cmd_compare(&data, &train, runs, &out),
        Command::Export { model, data, out } => cmd_export(&model, &data, &out),
    }
}

/// A parsed dataset plus the provenance stamp that goes into the manifest.
struct LoadedData {
    load: CsvLoad,
    stamp: DatasetStamp,
}

fn load_data(args: &DataArgs) -> Result<LoadedData> {
    let options = LoadOptions {
        label: args.label_col.clone(),
        categorical: args.categorical.clone(),
    };
    let (source, bytes): (String, Vec<u8>) = match (&args.dataset, &args.csv) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "--dataset and --csv are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "one of --dataset or --csv is required".into(),
            ))
        }
        (Some(name), None) => {
            let text = builtin_csv(name).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown bundled dataset '{}'; available: {}",
                    name,
                    BUILTIN_NAMES.join(", ")
                ))
            })?;
            (format!("builtin:{}", name), text.as_bytes().to_vec())
        }
        (None, Some(path)) => (path.display().to_string(), std::fs::read(path)?),
    };
    let load = load_csv_reader(bytes.as_slice(), &options)?;
    if load.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} row(s) with missing values",
            load.dropped_rows
        );
    }
    let stamp = DatasetStamp {
        source,
        sha256: sha256_hex(&bytes),
        instances: load.dataset.n_instances(),
        features: load.dataset.n_features(),
        classes: load.dataset.n_classes(),
        dropped_rows: load.dropped_rows,
        label_column: load.label_column.clone(),
        encoded_columns: load.encoded_columns.clone(),
    };
    Ok(LoadedData { load, stamp })
}

impl TrainFlags {
    /// Lay the flags over a base configuration. `full_batch` backs the
    /// `--batch 0` convention (one whole-dataset step per epoch).
    fn resolve(&self, base: TrainConfig, full_batch: usize) -> TrainConfig {
        let mut c = base;
        if let Some(n) = self.cutpoints {
            c.cutpoints_per_feature = n;
        }
        match (self.tau, self.anneal) {
            (Some(tau), None) => c.temperature = TemperatureSchedule::constant(tau),
            (tau, Some(decay)) => {
                let initial = tau.unwrap_or(c.temperature.initial);
                c.temperature = TemperatureSchedule::annealed(initial, decay, 0.01);
            }
            (None, None) => {}
        }
        if self.st_gumbel {
            c.st_gumbel = true;
        }
        if let Some(opt) = self.optimizer {
            c.optimizer = match opt {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Momentum => Optimizer::momentum(),
                OptimizerArg::Adam => Optimizer::adam(),
            };
        }
        if let Some(lr) = self.lr {
            c.learning_rate = lr;
        }
        if let Some(batch) = self.batch {
            c.batch_size = if batch == 0 { full_batch.max(1) } else { batch };
        }
        if let Some(epochs) = self.epochs {
            c.epochs = epochs;
        }
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(wd) = self.weight_decay {
            c.weight_decay = wd;
        }
        if let Some(split) = self.validation_split {
            c.validation_split = split;
        }
        c
    }
}

impl OutArgs {
    fn resolve(&self) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os("DNDT_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("dndt-out"));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_artifact(
    out_dir: &Path,
    name: &str,
    content: &str,
    manifest: &mut RunManifest,
) -> Result<()> {
    std::fs::write(out_dir.join(name), content)?;
    manifest.artifacts.push(name.to_string());
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    train: &TrainFlags,
    forest: &ForestFlags,
    out: &OutArgs,
) -> Result<()> {
    let total = Instant::now();
    let loaded = load_data(data)?;
    let (norm, _) = loaded.load.dataset.normalize();
    let config = train.resolve(TrainConfig::default(), norm.n_instances());
    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("train");
    manifest.dataset = Some(loaded.stamp);
    manifest.seed = Some(config.seed);

    let forest_requested = forest.trees.is_some() || forest.subset.is_some();
    if forest_requested || should_use_forest(norm.n_features()) {
        let forest_config = ForestConfig {
            n_trees: forest.trees.unwrap_or(DEFAULT_TREES),
            subset_size: forest
                .subset
                .unwrap_or_else(|| DEFAULT_SUBSET_SIZE.min(norm.n_features())),
        };
        if !forest_requested {
            println!(
                "{} features exceed the single-tree limit of {}; training a random-subspace forest",
                norm.n_features(),
                FOREST_FEATURE_THRESHOLD
            );
        }
        println!(
            "forest: {} trees x {} features each",
            forest_config.n_trees, forest_config.subset_size
        );
        let step = Instant::now();
        let model = fit_forest(&norm, &config, &forest_config)?;
        manifest
            .timings_ms
            .insert("train".into(), step.elapsed().as_millis());
        let train_accuracy = model.accuracy(&norm)?;
        let file = ModelFile::new(ModelPayload::Forest(model.to_doc()));
        write_artifact(&out_dir, "model.json", &file.to_json_pretty()?, &mut manifest)?;
        manifest.config = json!({ "train": config, "forest": forest_config });
        println!("training accuracy: {:.4}", train_accuracy);
    } else {
        let step = Instant::now();
        let outcome = fit(&norm, &config)?;
        manifest
            .timings_ms
            .insert("train".into(), step.elapsed().as_millis());
        let file = ModelFile::new(ModelPayload::Tree(outcome.model.to_doc()));
        write_artifact(&out_dir, "model.json", &file.to_json_pretty()?, &mut manifest)?;
        write_artifact(
            &out_dir,
            "train_report.csv",
            &outcome.report.to_csv_string(),
            &mut manifest,
        )?;
        let view = outcome.model.to_tree_view(&norm)?;
        write_artifact(&out_dir, "tree.dot", &view.to_dot(), &mut manifest)?;
        manifest.config = json!({ "train": config });
        if let Some(last) = outcome.report.final_record() {
            print!(
                "epoch {}: loss {:.4}, train accuracy {:.4}",
                last.epoch, last.loss, last.train_accuracy
            );
            match last.validation_accuracy {
                Some(v) => println!(", validation accuracy {:.4}", v),
                None => println!(),
            }
        }
    }

    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;
    println!("artifacts in {}", out_dir.display());
    Ok(())
}

/// Rebuild the dataset with labels mapped into the model's class order.
/// Errors when the data contains a class the model has never seen.
fn align_to_model_classes(dataset: &Dataset, model_classes: &[String]) -> Result<Dataset> {
    let mapping: Vec<usize> = dataset
        .class_names()
        .iter()
        .map(|name| {
            model_classes
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Data(format!("dataset class '{}' is unknown to the model", name)))
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = (0..dataset.n_instances())
        .flat_map(|i| dataset.row(i).iter().copied())
        .collect();
    let y: Vec<usize> = dataset.labels().iter().map(|&k| mapping[k]).collect();
    Dataset::from_parts(
        x,
        y,
        dataset.feature_names().to_vec(),
        model_classes.to_vec(),
    )
}

fn check_feature_count(dataset: &Dataset, model: &LoadedModel) -> Result<()> {
    if dataset.n_features() != model.n_features() {
        return Err(Error::Data(format!(
            "dataset has {} features but the model expects {}",
            dataset.n_features(),
            model.n_features()
        )));
    }
    Ok(())
}

fn cmd_eval(model_path: &Path, data: &DataArgs, out: &OutArgs) -> Result<()> {
    let total = Instant::now();
    let model = LoadedModel::load(model_path)?;
    let loaded = load_data(data)?;
    check_feature_count(&loaded.load.dataset, &model)?;
    let aligned = align_to_model_classes(&loaded.load.dataset, model.class_names())?;
    let norm = aligned.normalize_with(model.feature_ranges()?)?;

    let predictions: Vec<usize> = (0..norm.n_instances())
        .map(|i| model.predict(norm.row(i)))
        .collect::<Result<_>>()?;
    let summary = metrics::evaluate(norm.labels(), &predictions, model.class_names());

    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("eval");
    manifest.dataset = Some(loaded.stamp);
    manifest.config = json!({
        "model": model_path.display().to_string(),
        "model_kind": model.kind(),
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write_artifact(&out_dir, "eval.json", &text, &mut manifest)?;
    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;

    println!(
        "accuracy {:.4} on {} instances ({} model)",
        summary.accuracy,
        summary.n_instances,
        model.kind()
    );
    println!(
        "{:<16} {:>9} {:>9} {:>9} {:>9}",
        "class", "precision", "recall", "f1", "support"
    );
    for m in &summary.per_class {
        println!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            m.class, m.precision, m.recall, m.f1, m.support
        );
    }
    Ok(())
}

fn cmd_analyze(data: &DataArgs, train: &TrainFlags, runs: usize, out: &OutArgs) -> Result<()> {
    let total = Instant::now();
    let loaded = load_data(data)?;
    let (norm, _) = loaded.load.dataset.normalize();
    let config = train.resolve(
        TrainConfig::feature_study(norm.n_instances()),
        norm.n_instances(),
    );

    let step = Instant::now();
    let report = analyze(&norm, &config, runs)?;
    let analyze_ms = step.elapsed().as_millis();

    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("analyze");
    manifest.dataset = Some(loaded.stamp);
    manifest.seed = Some(config.seed);
    manifest.config = json!({ "train": config, "runs": runs });
    write_artifact(&out_dir, "analysis.json", &report.to_json_pretty()?, &mut manifest)?;
    write_artifact(&out_dir, "analysis.csv", &report.to_csv_string(), &mut manifest)?;
    manifest.timings_ms.insert("analyze".into(), analyze_ms);
    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;

    println!(
        "{:<20} {:>7} {:>7} {:>12}",
        "feature", "active", "total", "ignored-%"
    );
    for (d, name) in report.feature_names.iter().enumerate() {
        println!(
            "{:<20} {:>7} {:>7} {:>12.1}",
            name,
            report.active.per_feature_active[d],
            report.active.flags[d].len(),
            report.ignore_rate_percent[d]
        );
    }
    let names = |ranking: &[usize]| {
        ranking
            .iter()
            .map(|&d| report.feature_names[d].as_str())
            .collect::<Vec<_>>()
            .join(" > ")
    };
    println!("importance ({} runs): {}", report.n_runs, names(&report.ranking));
    println!("cart importance:      {}", names(&report.cart_ranking));
    println!("kendall tau: {:.4}", report.kendall_tau);
    Ok(())
}

fn cmd_sweep(
    data: &DataArgs,
    train: &TrainFlags,
    counts: &[usize],
    runs: usize,
    out: &OutArgs,
) -> Result<()> {
    let total = Instant::now();
    let loaded = load_data(data)?;
    let (norm, _) = loaded.load.dataset.normalize();
    let config = train.resolve(TrainConfig::default(), norm.n_instances());

    let step = Instant::now();
    let points = cutpoint_sweep(&norm, &config, counts, runs)?;
    let sweep_ms = step.elapsed().as_millis();

    let mut csv = String::from("cutpoints,mean_test_accuracy,mean_active_fraction\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{}\n",
            p.cutpoints_per_feature, p.mean_test_accuracy, p.mean_active_fraction
        ));
    }

    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("sweep");
    manifest.dataset = Some(loaded.stamp);
    manifest.seed = Some(config.seed);
    manifest.config = json!({ "train": config, "counts": counts, "runs": runs });
    write_artifact(&out_dir, "sweep.csv", &csv, &mut manifest)?;
    let json_text = serde_json::to_string_pretty(&points)? + "\n";
    write_artifact(&out_dir, "sweep.json", &json_text, &mut manifest)?;
    manifest.timings_ms.insert("sweep".into(), sweep_ms);
    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;

    println!(
        "{:>9} {:>14} {:>15}  ({} splits each)",
        "cutpoints", "mean test acc", "active fraction", runs
    );
    for p in &points {
        println!(
            "{:>9} {:>14.4} {:>15.4}",
            p.cutpoints_per_feature, p.mean_test_accuracy, p.mean_active_fraction
        );
    }
    Ok(())
}

fn cmd_compare(data: &DataArgs, train: &TrainFlags, runs: usize, out: &OutArgs) -> Result<()> {
    let total = Instant::now();
    let loaded = load_data(data)?;
    let (norm, _) = loaded.load.dataset.normalize();
    let config = train.resolve(TrainConfig::default(), norm.n_instances());
    if config.validation_split == 0.0 {
        return Err(Error::InvalidConfig(
            "compare measures held-out accuracy; validation split must be above zero".into(),
        ));
    }
    let (train_ds, test_ds) =
        norm.stratified_split(1.0 - config.validation_split, config.seed)?;

    let step = Instant::now();
    let outcome = fit_with_validation(&train_ds, None, &config)?;
    let dndt_test_accuracy = outcome.model.accuracy(&test_ds)?;
    let dndt_ms = step.elapsed().as_millis();

    let cart = fit_cart(&train_ds, None)?;
    let cart_test_accuracy = cart.accuracy(&test_ds)?;
    let cart_importance = cart.gini_importance();
    let cart_ranking = rank_descending(&cart_importance);

    // Importance needs repeated runs; use the feature-study protocol on the
    // training split at this command's seed.
    let step = Instant::now();
    let mut study = TrainConfig::feature_study(train_ds.n_instances());
    study.seed = config.seed;
    let importance = dndt_importance(&train_ds, &study, runs)?;
    let importance_ms = step.elapsed().as_millis();
    let tau = dndt_core::analysis::ranking_agreement(&importance.ranking, &cart)?;

    let comparison = json!({
        "test_fraction": config.validation_split,
        "dndt": {
            "test_accuracy": dndt_test_accuracy,
            "importance_ranking": importance.ranking,
            "ignore_rate_percent": importance.ignore_rate_percent,
            "importance_runs": importance.n_runs,
        },
        "cart": {
            "test_accuracy": cart_test_accuracy,
            "gini_importance": cart_importance,
            "importance_ranking": cart_ranking,
        },
        "kendall_tau": tau,
    });

    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("compare");
    manifest.dataset = Some(loaded.stamp);
    manifest.seed = Some(config.seed);
    manifest.config = json!({ "train": config, "study": study, "runs": runs });
    let text = serde_json::to_string_pretty(&comparison)? + "\n";
    write_artifact(&out_dir, "compare.json", &text, &mut manifest)?;
    let tree_file = ModelFile::new(ModelPayload::Tree(outcome.model.to_doc()));
    write_artifact(
        &out_dir,
        "dndt_model.json",
        &tree_file.to_json_pretty()?,
        &mut manifest,
    )?;
    let cart_file = ModelFile::new(ModelPayload::Cart(cart));
    write_artifact(
        &out_dir,
        "cart_model.json",
        &cart_file.to_json_pretty()?,
        &mut manifest,
    )?;
    manifest.timings_ms.insert("dndt_train".into(), dndt_ms);
    manifest
        .timings_ms
        .insert("dndt_importance".into(), importance_ms);
    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;

    println!("test accuracy: gradient tree {:.4}, cart {:.4}", dndt_test_accuracy, cart_test_accuracy);
    println!("kendall tau between importance rankings: {:.4}", tau);
    Ok(())
}

fn cmd_export(model_path: &Path, data: &DataArgs, out: &OutArgs) -> Result<()> {
    let total = Instant::now();
    let model = LoadedModel::load(model_path)?;
    let mut dataset_stamp = None;
    let dot = match &model {
        LoadedModel::Tree(tree) => {
            if data.dataset.is_none() && data.csv.is_none() {
                return Err(Error::InvalidConfig(
                    "exporting a gradient tree needs --dataset or --csv to tally leaf populations"
                        .into(),
                ));
            }
            let loaded = load_data(data)?;
            check_feature_count(&loaded.load.dataset, &model)?;
            let aligned = align_to_model_classes(&loaded.load.dataset, model.class_names())?;
            let norm = aligned.normalize_with(tree.feature_ranges())?;
            dataset_stamp = Some(loaded.stamp);
            tree.to_tree_view(&norm)?.to_dot()
        }
        LoadedModel::Cart(cart) => cart.to_dot(),
        LoadedModel::Forest(_) => {
            return Err(Error::InvalidConfig(
                "a forest has no single-tree rendering; export applies to tree and cart models"
                    .into(),
            ))
        }
    };

    let out_dir = out.resolve()?;
    let mut manifest = RunManifest::new("export");
    manifest.dataset = dataset_stamp;
    manifest.config = json!({
        "model": model_path.display().to_string(),
        "model_kind": model.kind(),
    });
    write_artifact(&out_dir, "tree.dot", &dot, &mut manifest)?;
    manifest
        .timings_ms
        .insert("total".into(), total.elapsed().as_millis());
    manifest.write(&out_dir)?;
    println!("wrote {}", out_dir.join("tree.dot").display());
    Ok(())
}
