//! Pipeline stage implementations behind the subcommands.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use hypercast::data::{
    impute_missing, normalize, read_format_a, read_format_b, synth_generate, write_format_b,
    write_impute_sidecar, SplitConfig, SynthConfig, TrafficGrid,
};
use hypercast::knn::{build_pair_corpus, nearest, train_distance_net, DistanceConfig, DistanceNet};
use hypercast::learner::{FitnessEvaluator, Schema, Strategy, Task, TrainConfig};
use hypercast::meta::{
    entropy_report, select_meta_features, CharacteristicSet, LabeledTask, MetaFeatureSpec,
};
use hypercast::optim::baselines::{run_baseline, BaselineContext, BaselineKind};
use hypercast::optim::{run_algorithm1, AgaConfig, EliteRule, MetaLearner, OptimizationResult};
use hypercast::rng;
use hypercast::screen::{train_screener, ScreenerConfig, ScreenerNet};
use hypercast::store::{
    assemble_meta_samples, build_fitness_table, load_corpus, load_feature_spec,
    load_meta_samples, load_table, save_corpus, save_feature_spec, save_meta_samples,
    screener_corpus, FitnessTable, MetaSample,
};

use crate::config::{ExperimentConfig, OutPaths};
use crate::manifest::Manifest;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn split_cfg(cfg: &ExperimentConfig) -> SplitConfig {
    SplitConfig {
        train_frac: cfg.train_frac,
        validation_within_train: cfg.valid_frac,
    }
}

fn train_cfg(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        weight_decay: cfg.weight_decay,
        shuffle: true,
    }
}

fn aga_cfg(cfg: &ExperimentConfig) -> AgaConfig {
    AgaConfig {
        population: cfg.population,
        offspring: cfg.offspring,
        generations: cfg.generations,
        elite_fraction: cfg.elite_fraction,
        mutation_prob: cfg.mutation_prob,
        screen_multiplier: cfg.screen_multiplier,
        elite_rule: if cfg.elite_rule == "pseudocode" {
            EliteRule::Pseudocode
        } else {
            EliteRule::Text
        },
        seed: cfg.seed,
        max_actual_evals: if cfg.budget > 0 { Some(cfg.budget) } else { None },
    }
}

fn screener_cfg(cfg: &ExperimentConfig) -> ScreenerConfig {
    let mut sc = match cfg.screener_preset.as_str() {
        "paper" => ScreenerConfig::paper(),
        _ => ScreenerConfig::desk(),
    };
    if cfg.screener_epochs > 0 {
        sc.epochs = cfg.screener_epochs;
    }
    sc.seed = cfg.seed;
    sc
}

fn load_grid(paths: &OutPaths) -> Result<TrafficGrid> {
    read_format_b(&paths.grid()).map_err(|e| anyhow!("{e}"))
}

/// Deterministic task split: a seeded shuffle of the cells, first
/// `store_size` as meta tasks, next `test_tasks` as test tasks.
fn partition_tasks(cfg: &ExperimentConfig, grid: &TrafficGrid) -> Result<(Vec<Task>, Vec<Task>)> {
    let needed = cfg.store_size + cfg.test_tasks;
    if grid.cells.len() < needed {
        bail!(
            "grid has {} cells but store_size + test_tasks = {}",
            grid.cells.len(),
            needed
        );
    }
    let order = rng::shuffled_indices(grid.cells.len(), &[cfg.seed, 0x7a5c]);
    let task_of = |i: usize| {
        let cell = &grid.cells[i];
        Task::new(cell.cell_id, normalize(cell), split_cfg(cfg))
    };
    let meta: Vec<Task> = order[..cfg.store_size].iter().map(|&i| task_of(i)).collect();
    let test: Vec<Task> = order[cfg.store_size..needed]
        .iter()
        .map(|&i| task_of(i))
        .collect();
    Ok((meta, test))
}

fn raw_characteristics(tasks: &[Task], set: &CharacteristicSet) -> Vec<Vec<f64>> {
    tasks.iter().map(|t| set.compute(&t.series)).collect()
}

// ---------------------------------------------------------------------------
// Data stages
// ---------------------------------------------------------------------------

pub fn cmd_synth(cfg: &ExperimentConfig, paths: &OutPaths, manifest: &mut Manifest) -> Result<()> {
    let synth = SynthConfig::new(cfg.synth_cells, cfg.synth_intervals, cfg.seed);
    let grid = synth_generate(&synth).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(paths.grid().parent().unwrap())?;
    write_format_b(&paths.grid(), &grid).map_err(|e| anyhow!("{e}"))?;
    manifest.record("synth", &[&paths.grid()])?;
    println!(
        "synth: {} cells x {} intervals -> {}",
        grid.cells.len(),
        grid.intervals,
        paths.grid().display()
    );
    Ok(())
}

pub fn cmd_ingest(cfg: &ExperimentConfig, paths: &OutPaths, manifest: &mut Manifest) -> Result<()> {
    if cfg.data_source == "synth" {
        bail!("ingest needs data_source = <path to records file>; got 'synth'");
    }
    let src = Path::new(&cfg.data_source);
    let mut grid = read_format_a(src).map_err(|e| anyhow!("{e}"))?;
    let filled = impute_missing(&mut grid).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(paths.grid().parent().unwrap())?;
    write_format_b(&paths.grid(), &grid).map_err(|e| anyhow!("{e}"))?;
    write_impute_sidecar(&paths.imputed(), &filled).map_err(|e| anyhow!("{e}"))?;
    manifest.record("ingest", &[&paths.grid(), &paths.imputed()])?;
    println!(
        "ingest: {} cells x {} intervals, {} values imputed",
        grid.cells.len(),
        grid.intervals,
        filled.len()
    );
    Ok(())
}

fn require_data(manifest: &Manifest) -> Result<()> {
    if !manifest.has_stage("synth") && !manifest.has_stage("ingest") {
        bail!("missing prerequisite stage 'synth' or 'ingest': generate or ingest data first");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Meta-store stages
// ---------------------------------------------------------------------------

pub fn cmd_build_meta(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    require_data(manifest)?;
    let schema = cfg.schema();
    let grid = load_grid(paths)?;
    let (meta_tasks, _) = partition_tasks(cfg, &grid)?;
    let store = paths.store();
    fs::create_dir_all(store.dir.join("tables"))?;

    let mut new_evals = 0u64;
    let mut tables: Vec<FitnessTable> = Vec::with_capacity(meta_tasks.len());
    for task in &meta_tasks {
        let (table, evals) = build_fitness_table(
            &store.table(task.task_id),
            task,
            &schema,
            train_cfg(cfg),
            cfg.seed,
        )
        .map_err(|e| anyhow!("{e}"))?;
        new_evals += evals;
        tables.push(table);
    }
    println!(
        "build-meta: {} tasks x {} strategies, {} new evaluations",
        meta_tasks.len(),
        schema.grid_len(),
        new_evals
    );

    // Entropy analysis over the labeled store drives feature selection.
    let set = CharacteristicSet::standard();
    let chars = raw_characteristics(&meta_tasks, &set);
    let labeled: Vec<LabeledTask> = tables
        .iter()
        .zip(&chars)
        .map(|(t, c)| {
            Ok(LabeledTask {
                task_id: t.task_id,
                label: schema.strategy_at(t.argmax().map_err(|e| anyhow!("{e}"))?).clone(),
                characteristics: c.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let gene_names: Vec<String> = schema.genes().iter().map(|g| g.name.clone()).collect();
    let report = entropy_report(&labeled, &gene_names, &set.names, cfg.entropy_bins)
        .map_err(|e| anyhow!("{e}"))?;
    let spec = select_meta_features(&report, cfg.meta_features.min(set.len()), &labeled)
        .map_err(|e| anyhow!("{e}"))?;
    save_feature_spec(&store.feature_spec(), &spec).map_err(|e| anyhow!("{e}"))?;
    write_entropy_file(&store.entropy_report(), &report)?;

    let features: Vec<Vec<f64>> = chars.iter().map(|c| spec.scale(c)).collect();
    let samples = assemble_meta_samples(&tables, &features, &schema).map_err(|e| anyhow!("{e}"))?;
    save_meta_samples(&store.meta_samples(), &samples, &schema).map_err(|e| anyhow!("{e}"))?;
    let corpus = screener_corpus(&tables, &features, &schema).map_err(|e| anyhow!("{e}"))?;
    save_corpus(&store.screener_corpus(), &corpus).map_err(|e| anyhow!("{e}"))?;

    println!(
        "build-meta: {} meta-samples, {} screener rows, features [{}]",
        samples.len(),
        corpus.rows.len(),
        spec.names.join(", ")
    );
    manifest.record(
        "build-meta",
        &[
            &store.meta_samples(),
            &store.feature_spec(),
            &store.entropy_report(),
            &store.screener_corpus(),
        ],
    )?;
    Ok(())
}

fn write_entropy_file(path: &Path, report: &hypercast::meta::EntropyReport) -> Result<()> {
    let mut out = String::from("gene,characteristic,H_gene,H_conditional\n");
    for row in report.to_rows() {
        out.push_str(&row);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn cmd_entropy_report(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    manifest.require_stage("build-meta")?;
    let schema = cfg.schema();
    let grid = load_grid(paths)?;
    let (meta_tasks, _) = partition_tasks(cfg, &grid)?;
    let store = paths.store();
    let set = CharacteristicSet::standard();
    let chars = raw_characteristics(&meta_tasks, &set);
    let mut labeled = Vec::with_capacity(meta_tasks.len());
    for (task, c) in meta_tasks.iter().zip(&chars) {
        let table =
            load_table(&store.table(task.task_id), &schema).map_err(|e| anyhow!("{e}"))?;
        labeled.push(LabeledTask {
            task_id: task.task_id,
            label: schema
                .strategy_at(table.argmax().map_err(|e| anyhow!("{e}"))?)
                .clone(),
            characteristics: c.clone(),
        });
    }
    let gene_names: Vec<String> = schema.genes().iter().map(|g| g.name.clone()).collect();
    let report = entropy_report(&labeled, &gene_names, &set.names, cfg.entropy_bins)
        .map_err(|e| anyhow!("{e}"))?;
    write_entropy_file(&store.entropy_report(), &report)?;
    for (g, name) in report.gene_names.iter().enumerate() {
        println!("entropy-report: H({name}) = {:.4} bits", report.h_gene[g]);
    }
    manifest.record("entropy-report", &[&store.entropy_report()])?;
    println!("entropy-report: wrote {}", store.entropy_report().display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Net training stages
// ---------------------------------------------------------------------------

struct LoadedStore {
    schema: Schema,
    spec: MetaFeatureSpec,
    samples: Vec<MetaSample>,
    tables: Vec<FitnessTable>,
}

fn load_store(cfg: &ExperimentConfig, paths: &OutPaths) -> Result<LoadedStore> {
    let schema = cfg.schema();
    let store = paths.store();
    let spec = load_feature_spec(&store.feature_spec()).map_err(|e| anyhow!("{e}"))?;
    let samples = load_meta_samples(&store.meta_samples(), &schema, spec.feature_count())
        .map_err(|e| anyhow!("{e}"))?;
    let mut tables = Vec::with_capacity(samples.len());
    for s in &samples {
        tables.push(load_table(&store.table(s.task_id), &schema).map_err(|e| anyhow!("{e}"))?);
    }
    Ok(LoadedStore {
        schema,
        spec,
        samples,
        tables,
    })
}

fn write_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    fs::create_dir_all(path.parent().unwrap())?;
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn cmd_train_distance(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    manifest.require_stage("build-meta")?;
    let loaded = load_store(cfg, paths)?;
    let pairs = build_pair_corpus(&loaded.samples, &loaded.tables, &loaded.schema)
        .map_err(|e| anyhow!("{e}"))?;
    let dc = DistanceConfig {
        epochs: cfg.distance_epochs,
        seed: cfg.seed,
        ..DistanceConfig::default()
    };
    let mut net = DistanceNet::new(loaded.spec.feature_count(), &dc);
    let curve = train_distance_net(&mut net, &pairs, &dc).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(paths.distance_ckpt().parent().unwrap())?;
    net.save(&paths.distance_ckpt()).map_err(|e| anyhow!("{e}"))?;
    write_curve(&paths.distance_curve(), &curve)?;
    println!(
        "train-distance: {} pairs, final loss {:.6}",
        pairs.len(),
        curve.last().unwrap()
    );
    manifest.record(
        "train-distance",
        &[&paths.distance_ckpt(), &paths.distance_curve()],
    )?;
    Ok(())
}

pub fn cmd_train_screener(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    manifest.require_stage("build-meta")?;
    let loaded = load_store(cfg, paths)?;
    let store = paths.store();
    let corpus = load_corpus(
        &store.screener_corpus(),
        loaded.spec.feature_count(),
        loaded.schema.gene_count(),
    )
    .map_err(|e| anyhow!("{e}"))?;
    let sc = screener_cfg(cfg);
    println!(
        "train-screener: preset={} lr={} batch={} epochs={} width={}",
        cfg.screener_preset, sc.learning_rate, sc.batch_size, sc.epochs, sc.width
    );
    let mut net = ScreenerNet::new(loaded.spec.feature_count(), loaded.schema.gene_count(), &sc);
    let curve = train_screener(&mut net, &corpus, &sc).map_err(|e| anyhow!("{e}"))?;
    fs::create_dir_all(paths.screener_ckpt().parent().unwrap())?;
    net.save(&paths.screener_ckpt()).map_err(|e| anyhow!("{e}"))?;
    write_curve(&paths.screener_curve(), &curve)?;
    println!(
        "train-screener: {} rows, final loss {:.6}",
        corpus.rows.len(),
        curve.last().unwrap()
    );
    manifest.record(
        "train-screener",
        &[&paths.screener_ckpt(), &paths.screener_curve()],
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Optimization stages
// ---------------------------------------------------------------------------

fn write_run_artifacts(
    paths: &OutPaths,
    method: &str,
    task_id: u32,
    result: &OptimizationResult,
) -> Result<()> {
    let log = paths.run_log(method, task_id);
    fs::create_dir_all(log.parent().unwrap())?;
    let mut out = String::from("generation,best_fitness,mean_fitness,actual_evals_cum,wall_ms\n");
    for row in result.log_rows() {
        out.push_str(&row);
        out.push('\n');
    }
    fs::write(&log, out)?;

    // Plot data: the same trajectory without the wall-clock column.
    let plot = paths.plot_data(method, task_id);
    fs::create_dir_all(plot.parent().unwrap())?;
    let mut out = String::from("generation,best_fitness,mean_fitness,actual_evals_cum\n");
    for g in &result.history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            g.generation, g.best_fitness, g.mean_fitness, g.actual_evals_cum
        ));
    }
    fs::write(&plot, out)?;
    Ok(())
}

fn append_result_row(
    paths: &OutPaths,
    method: &str,
    schema: &Schema,
    task: &Task,
    best: &Strategy,
    report: hypercast::learner::EvalReport,
    train_runs: u64,
) -> Result<()> {
    let path = paths.results(method);
    fs::create_dir_all(path.parent().unwrap())?;
    let mut line = format!(
        "{},{},{},{},{},{}\n",
        task.task_id,
        schema.kind().as_str(),
        schema.format_strategy(best),
        report.mse,
        report.r2,
        train_runs
    );
    if !path.exists() {
        line = format!("task_id,kind,strategy,mse,r2,train_runs\n{line}");
        fs::write(&path, line)?;
    } else {
        use std::io::Write;
        let mut f = fs::OpenOptions::new().append(true).open(&path)?;
        f.write_all(line.as_bytes())?;
    }
    Ok(())
}

struct OnlineParts {
    store: LoadedStore,
    distance: DistanceNet,
    screener: ScreenerNet,
    characteristics: CharacteristicSet,
}

fn load_online_parts(cfg: &ExperimentConfig, paths: &OutPaths) -> Result<OnlineParts> {
    let store = load_store(cfg, paths)?;
    let dc = DistanceConfig {
        epochs: cfg.distance_epochs,
        seed: cfg.seed,
        ..DistanceConfig::default()
    };
    let mut distance = DistanceNet::new(store.spec.feature_count(), &dc);
    distance
        .load_into(&paths.distance_ckpt())
        .map_err(|e| anyhow!("{e}"))?;
    let sc = screener_cfg(cfg);
    let mut screener = ScreenerNet::new(store.spec.feature_count(), store.schema.gene_count(), &sc);
    screener
        .load_into(&paths.screener_ckpt())
        .map_err(|e| anyhow!("{e}"))?;
    Ok(OnlineParts {
        store,
        distance,
        screener,
        characteristics: CharacteristicSet::standard(),
    })
}

pub fn cmd_optimize(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    manifest.require_stage("train-distance")?;
    manifest.require_stage("train-screener")?;
    let parts = load_online_parts(cfg, paths)?;
    let grid = load_grid(paths)?;
    let (_, test_tasks) = partition_tasks(cfg, &grid)?;
    let results_path = paths.results("algorithm1");
    fs::remove_file(&results_path).ok();

    for task in &test_tasks {
        let evaluator = FitnessEvaluator::new(task, &parts.store.schema, train_cfg(cfg), cfg.seed);
        let learner = MetaLearner {
            store: &parts.store.samples,
            feature_spec: &parts.store.spec,
            characteristics: &parts.characteristics,
            distance: &parts.distance,
            screener: &parts.screener,
            neighbors: cfg.knn_k,
        };
        // Log the retrieval that seeds the first generation.
        let features = parts
            .store
            .spec
            .vector_for_series(&task.series, &parts.characteristics);
        let picked = nearest(&parts.distance, &parts.store.samples, &features, cfg.knn_k)
            .map_err(|e| anyhow!("{e}"))?;
        let knn_log = paths
            .root
            .join(format!("runs/neighbors_task{}.csv", task.task_id));
        fs::create_dir_all(knn_log.parent().unwrap())?;
        let mut rows = String::from("query_task,rank,source_task,distance\n");
        for row in hypercast::knn::format_retrieval(task.task_id, &picked) {
            rows.push_str(&row);
            rows.push('\n');
        }
        fs::write(&knn_log, rows)?;

        let result = run_algorithm1(
            &task.series,
            &evaluator,
            &learner,
            &parts.store.schema,
            &aga_cfg(cfg),
        )
        .map_err(|e| anyhow!("{e}"))?;
        write_run_artifacts(paths, "algorithm1", task.task_id, &result)?;
        let report = evaluator
            .test_report(&result.best)
            .map_err(|e| anyhow!("{e}"))?;
        append_result_row(
            paths,
            "algorithm1",
            &parts.store.schema,
            task,
            &result.best,
            report,
            result.actual_evaluations,
        )?;
        println!(
            "optimize: task {} best {} fitness {:.4} evals {} test mse {:.6}",
            task.task_id,
            parts.store.schema.format_strategy(&result.best),
            result.best_fitness,
            result.actual_evaluations,
            report.mse
        );
    }
    manifest.record("optimize", &[&results_path])?;
    Ok(())
}

pub fn cmd_baseline(
    cfg: &ExperimentConfig,
    paths: &OutPaths,
    manifest: &mut Manifest,
) -> Result<()> {
    require_data(manifest)?;
    let schema = cfg.schema();
    let grid = load_grid(paths)?;
    let (_, test_tasks) = partition_tasks(cfg, &grid)?;

    let methods: Vec<BaselineKind> = cfg
        .methods
        .iter()
        .filter(|m| m.as_str() != "algorithm1")
        .map(|m| BaselineKind::parse(m).map_err(|e| anyhow!("{e}")))
        .collect::<Result<_>>()?;
    let needs_store = methods
        .iter()
        .any(|k| matches!(k, BaselineKind::GaKnn | BaselineKind::Aga));
    let parts = if needs_store {
        manifest.require_stage("train-distance")?;
        manifest.require_stage("train-screener")?;
        Some(load_online_parts(cfg, paths)?)
    } else {
        None
    };

    let budget = if cfg.budget > 0 {
        cfg.budget
    } else {
        schema.grid_len() as u64
    };

    let mut artifacts = Vec::new();
    for kind in methods {
        let results_path = paths.results(kind.as_str());
        fs::remove_file(&results_path).ok();
        for task in &test_tasks {
            let evaluator = FitnessEvaluator::new(task, &schema, train_cfg(cfg), cfg.seed);
            let (warm_seeds, query_features) = match (&parts, kind) {
                (Some(p), BaselineKind::GaKnn | BaselineKind::Aga) => {
                    let features = p
                        .store
                        .spec
                        .vector_for_series(&task.series, &p.characteristics);
                    let seeds = if kind == BaselineKind::GaKnn {
                        nearest(&p.distance, &p.store.samples, &features, cfg.knn_k)
                            .map_err(|e| anyhow!("{e}"))?
                            .into_iter()
                            .map(|n| p.store.samples[n.store_index].label.clone())
                            .collect()
                    } else {
                        Vec::new()
                    };
                    (seeds, features)
                }
                _ => (Vec::new(), Vec::new()),
            };
            let ctx = BaselineContext {
                fitness: &evaluator,
                schema: &schema,
                budget,
                seed: cfg.seed,
                ga: aga_cfg(cfg),
                warm_seeds,
                screener: parts.as_ref().map(|p| &p.screener as _),
                query_features,
            };
            let result = run_baseline(kind, &ctx).map_err(|e| anyhow!("{e}"))?;
            write_run_artifacts(paths, kind.as_str(), task.task_id, &result)?;
            let report = evaluator
                .test_report(&result.best)
                .map_err(|e| anyhow!("{e}"))?;
            append_result_row(
                paths,
                kind.as_str(),
                &schema,
                task,
                &result.best,
                report,
                result.actual_evaluations,
            )?;
            println!(
                "baseline {}: task {} fitness {:.4} evals {} test mse {:.6}",
                kind.as_str(),
                task.task_id,
                result.best_fitness,
                result.actual_evaluations,
                report.mse
            );
        }
        artifacts.push(results_path);
    }
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    manifest.record("baseline", &refs)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MethodStats {
    method: String,
    mean_mse: f64,
    mean_r2: f64,
    mean_evals: f64,
    mean_wall_ms: f64,
    tasks: usize,
}

pub fn cmd_report(cfg: &ExperimentConfig, paths: &OutPaths, manifest: &mut Manifest) -> Result<()> {
    let mut stats = Vec::new();
    for method in &cfg.methods {
        let path = paths.results(method);
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let mut mse_sum = 0.0;
        let mut r2_sum = 0.0;
        let mut evals_sum = 0.0;
        let mut wall_sum = 0.0;
        let mut n = 0usize;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                continue;
            }
            let task_id: u32 = cols[0].parse()?;
            mse_sum += cols[3].parse::<f64>()?;
            r2_sum += cols[4].parse::<f64>()?;
            evals_sum += cols[5].parse::<f64>()?;
            // Wall time comes from the run log's last row, keeping every
            // reported number traceable to a logged file.
            let log = fs::read_to_string(paths.run_log(method, task_id))?;
            let last = log.lines().last().unwrap_or_default();
            wall_sum += last.split(',').nth(4).unwrap_or("0").parse::<f64>().unwrap_or(0.0);
            n += 1;
        }
        if n > 0 {
            stats.push(MethodStats {
                method: method.clone(),
                mean_mse: mse_sum / n as f64,
                mean_r2: r2_sum / n as f64,
                mean_evals: evals_sum / n as f64,
                mean_wall_ms: wall_sum / n as f64,
                tasks: n,
            });
        }
    }
    if stats.is_empty() {
        bail!("no results found; run `optimize` and/or `baseline` first");
    }

    let mut csv = String::from("method,mean_mse,mean_r2,mean_actual_evals,mean_wall_ms\n");
    for s in &stats {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.method, s.mean_mse, s.mean_r2, s.mean_evals, s.mean_wall_ms
        ));
    }
    fs::write(paths.report_csv(), &csv)?;

    let mut txt = String::new();
    txt.push_str(&format!(
        "{:<12} {:>12} {:>10} {:>12} {:>14} {:>7}\n",
        "method", "mean_mse", "mean_r2", "mean_evals", "mean_wall_ms", "tasks"
    ));
    for s in &stats {
        txt.push_str(&format!(
            "{:<12} {:>12.6} {:>10.4} {:>12.1} {:>14.1} {:>7}\n",
            s.method, s.mean_mse, s.mean_r2, s.mean_evals, s.mean_wall_ms, s.tasks
        ));
    }
    fs::write(paths.report_txt(), &txt)?;
    print!("{txt}");
    manifest.record("report", &[&paths.report_csv(), &paths.report_txt()])?;
    Ok(())
}
