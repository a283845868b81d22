//! The meta-knowledge store: per-task fitness tables over the full strategy
//! grid, meta-samples labeled with each task's grid-search optimum, and the
//! derived training corpus for the fitness screener.
//!
//! Everything persists as line-record text with a version header, one file
//! per fitness table, so the expensive offline grid-search phase can resume
//! after an interruption. Real values are written with shortest round-trip
//! formatting and reload bit-exactly.
//!
//! On-disk layout under a store directory:
//!
//! ```text
//! tables/task_<id>.tbl   header `fitness_table 1` + `task,kind,schema_hash`
//!                        rows `gene1,..,geneG,mse,fitness`
//! meta_samples.txt       rows `task_id,f1..fI,label_gene1..geneG,label_fitness`
//! feature_spec.txt       rows `name,source_index,min,max`
//! entropy_report.txt     rows `gene,characteristic,H_gene,H_conditional`
//! screener_corpus.txt    rows `task_id,f1..fI,e1..eG,fitness`
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learner::{
    FitnessEvaluator, FitnessRecord, FitnessSource, Schema, Strategy, Task, TrainConfig,
};
use crate::meta::MetaFeatureSpec;
use crate::screen::encode_strategy;

/// Strategies evaluated between persistence points while building a table.
const BUILD_CHUNK: usize = 8;

// ---------------------------------------------------------------------------
// Fitness tables
// ---------------------------------------------------------------------------

/// Fitness of every strategy in the grid for one task; entries fill in as
/// grid search progresses and the table is complete when none is missing.
#[derive(Debug, Clone)]
pub struct FitnessTable {
    pub task_id: u32,
    pub schema_hash: u64,
    pub kind: String,
    entries: Vec<Option<FitnessRecord>>,
}

impl FitnessTable {
    pub fn empty(task_id: u32, schema: &Schema) -> Self {
        FitnessTable {
            task_id,
            schema_hash: schema.schema_hash(),
            kind: schema.kind().as_str().to_string(),
            entries: vec![None; schema.grid_len()],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn filled(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(|e| e.is_some())
    }

    pub fn get(&self, grid_index: usize) -> Option<FitnessRecord> {
        self.entries[grid_index]
    }

    pub fn set(&mut self, grid_index: usize, record: FitnessRecord) {
        self.entries[grid_index] = Some(record);
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| if e.is_none() { Some(i) } else { None })
            .collect()
    }

    /// Grid index of the maximal-fitness entry; equal fitness resolves to
    /// the lower grid index. Errors when the table is incomplete.
    pub fn argmax(&self) -> Result<usize> {
        if !self.is_complete() {
            return Err(Error::Invalid(format!(
                "fitness table for task {} is incomplete ({}/{})",
                self.task_id,
                self.filled(),
                self.len()
            )));
        }
        let mut best = 0usize;
        for (i, e) in self.entries.iter().enumerate() {
            if e.unwrap().fitness > self.entries[best].unwrap().fitness {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn max_fitness(&self) -> Result<f64> {
        Ok(self.entries[self.argmax()?].unwrap().fitness)
    }

    pub fn min_mse(&self) -> Result<f64> {
        Ok(self.entries[self.argmax()?].unwrap().validation_mse)
    }
}

const TABLE_MAGIC: &str = "fitness_table 1";

pub fn save_table(path: &Path, table: &FitnessTable, schema: &Schema) -> Result<()> {
    let mut out = String::new();
    out.push_str(TABLE_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{:016x}\n",
        table.task_id, table.kind, table.schema_hash
    ));
    for (i, e) in table.entries.iter().enumerate() {
        if let Some(rec) = e {
            out.push_str(&table_row(schema, i, rec));
            out.push('\n');
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn table_row(schema: &Schema, grid_index: usize, rec: &FitnessRecord) -> String {
    let values = schema.values(schema.strategy_at(grid_index));
    let mut row: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    row.push(rec.validation_mse.to_string());
    row.push(rec.fitness.to_string());
    row.join(",")
}

fn append_table_rows(
    path: &Path,
    schema: &Schema,
    rows: &[(usize, FitnessRecord)],
) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    for (i, rec) in rows {
        out.push_str(&table_row(schema, *i, rec));
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: &Path, schema: &Schema) -> Result<FitnessTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == TABLE_MAGIC => {}
        _ => return Err(Error::parse(path, 1, "missing fitness_table header")),
    }
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 2, "missing table metadata"))?;
    let parts: Vec<&str> = header.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::parse(path, 2, "malformed table metadata"));
    }
    let task_id: u32 = parts[0]
        .parse()
        .map_err(|_| Error::parse(path, 2, "bad task id"))?;
    let kind = parts[1].to_string();
    let hash = u64::from_str_radix(parts[2], 16)
        .map_err(|_| Error::parse(path, 2, "bad schema hash"))?;
    if hash != schema.schema_hash() {
        return Err(Error::Invalid(format!(
            "{}: schema hash mismatch — the grid changed and the store is invalid",
            path.display()
        )));
    }
    if kind != schema.kind().as_str() {
        return Err(Error::Invalid(format!(
            "{}: table is for kind {kind}, schema is {}",
            path.display(),
            schema.kind().as_str()
        )));
    }
    let mut table = FitnessTable::empty(task_id, schema);
    let g = schema.gene_count();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != g + 2 {
            return Err(Error::parse(path, lineno, "bad column count"));
        }
        let values = cols[..g]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad gene value '{c}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mse: f64 = cols[g]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad mse"))?;
        let fitness: f64 = cols[g + 1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad fitness"))?;
        let strategy = schema.strategy_from_values(&values)?;
        let grid_index = schema.grid_index(&strategy).unwrap();
        table.set(
            grid_index,
            FitnessRecord {
                validation_mse: mse,
                fitness,
                diverged: !mse.is_finite(),
            },
        );
    }
    Ok(table)
}

/// Grid search over every strategy for one task, resuming from whatever the
/// table file already holds. Evaluations run in parallel within chunks and
/// each finished chunk is appended to disk, so an interruption loses at most
/// one chunk. Returns the completed table and the number of evaluations this
/// call actually performed.
pub fn build_fitness_table(
    path: &Path,
    task: &Task,
    schema: &Schema,
    train_cfg: TrainConfig,
    seed: u64,
) -> Result<(FitnessTable, u64)> {
    let mut table = if path.exists() {
        load_table(path, schema)?
    } else {
        let empty = FitnessTable::empty(task.task_id, schema);
        save_table(path, &empty, schema)?;
        empty
    };
    if table.task_id != task.task_id {
        return Err(Error::Invalid(format!(
            "{}: table belongs to task {}, not {}",
            path.display(),
            table.task_id,
            task.task_id
        )));
    }
    let evaluator = FitnessEvaluator::new(task, schema, train_cfg, seed);
    let missing = table.missing_indices();
    for chunk in missing.chunks(BUILD_CHUNK) {
        let results: Vec<(usize, FitnessRecord)> = chunk
            .par_iter()
            .map(|&gi| (gi, evaluator.record(schema.strategy_at(gi))))
            .collect();
        append_table_rows(path, schema, &results)?;
        for (gi, rec) in results {
            table.set(gi, rec);
        }
    }
    Ok((table, evaluator.actual_evaluations()))
}

// ---------------------------------------------------------------------------
// Meta-samples
// ---------------------------------------------------------------------------

/// A task's scaled meta-feature vector labeled with its grid-search-optimal
/// strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSample {
    pub task_id: u32,
    pub features: Vec<f64>,
    pub label: Strategy,
    pub label_fitness: f64,
}

/// One meta-sample per complete table; `features[i]` must align with
/// `tables[i]`. Argmax ties resolve to the lower grid index.
pub fn assemble_meta_samples(
    tables: &[FitnessTable],
    features: &[Vec<f64>],
    schema: &Schema,
) -> Result<Vec<MetaSample>> {
    if tables.len() != features.len() {
        return Err(Error::Invalid(
            "tables and feature vectors must align".into(),
        ));
    }
    let mut samples = Vec::with_capacity(tables.len());
    for (table, feats) in tables.iter().zip(features) {
        let best = table.argmax().map_err(|_| {
            Error::Invalid(format!(
                "cannot assemble meta-samples: table for task {} is incomplete",
                table.task_id
            ))
        })?;
        samples.push(MetaSample {
            task_id: table.task_id,
            features: feats.clone(),
            label: schema.strategy_at(best).clone(),
            label_fitness: table.get(best).unwrap().fitness,
        });
    }
    Ok(samples)
}

pub fn save_meta_samples(path: &Path, samples: &[MetaSample], schema: &Schema) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        let mut row: Vec<String> = vec![s.task_id.to_string()];
        row.extend(s.features.iter().map(|v| v.to_string()));
        row.extend(schema.values(&s.label).iter().map(|v| v.to_string()));
        row.push(s.label_fitness.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_meta_samples(
    path: &Path,
    schema: &Schema,
    feature_count: usize,
) -> Result<Vec<MetaSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let g = schema.gene_count();
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 1 + feature_count + g + 1 {
            return Err(Error::parse(path, lineno, "bad column count"));
        }
        let task_id: u32 = cols[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, "bad task id"))?;
        let parse_f = |c: &str| {
            c.parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad value '{c}'")))
        };
        let features = cols[1..1 + feature_count]
            .iter()
            .map(|c| parse_f(c))
            .collect::<Result<Vec<f64>>>()?;
        let gene_values = cols[1 + feature_count..1 + feature_count + g]
            .iter()
            .map(|c| parse_f(c))
            .collect::<Result<Vec<f64>>>()?;
        let label_fitness = parse_f(cols[1 + feature_count + g])?;
        samples.push(MetaSample {
            task_id,
            features,
            label: schema.strategy_from_values(&gene_values)?,
            label_fitness,
        });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Screener corpus
// ---------------------------------------------------------------------------

/// One supervised row for the screener: a task's meta-features, an encoded
/// strategy, and the measured fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenerRow {
    pub task_id: u32,
    pub features: Vec<f64>,
    pub encoded: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenerCorpus {
    pub rows: Vec<ScreenerRow>,
}

/// Every (task, strategy, fitness) triple becomes one row; row count is the
/// sum of grid sizes over tasks.
pub fn screener_corpus(
    tables: &[FitnessTable],
    features: &[Vec<f64>],
    schema: &Schema,
) -> Result<ScreenerCorpus> {
    if tables.len() != features.len() {
        return Err(Error::Invalid(
            "tables and feature vectors must align".into(),
        ));
    }
    let mut rows = Vec::with_capacity(tables.len() * schema.grid_len());
    for (table, feats) in tables.iter().zip(features) {
        if !table.is_complete() {
            return Err(Error::Invalid(format!(
                "cannot build screener corpus: table for task {} is incomplete",
                table.task_id
            )));
        }
        for gi in 0..schema.grid_len() {
            rows.push(ScreenerRow {
                task_id: table.task_id,
                features: feats.clone(),
                encoded: encode_strategy(schema, schema.strategy_at(gi)),
                fitness: table.get(gi).unwrap().fitness,
            });
        }
    }
    Ok(ScreenerCorpus { rows })
}

pub fn save_corpus(path: &Path, corpus: &ScreenerCorpus) -> Result<()> {
    let mut out = String::new();
    for r in &corpus.rows {
        let mut row: Vec<String> = vec![r.task_id.to_string()];
        row.extend(r.features.iter().map(|v| v.to_string()));
        row.extend(r.encoded.iter().map(|v| v.to_string()));
        row.push(r.fitness.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path, feature_count: usize, gene_count: usize) -> Result<ScreenerCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 1 + feature_count + gene_count + 1 {
            return Err(Error::parse(path, lineno, "bad column count"));
        }
        let parse_f = |c: &str| {
            c.parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad value '{c}'")))
        };
        rows.push(ScreenerRow {
            task_id: cols[0]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad task id"))?,
            features: cols[1..1 + feature_count]
                .iter()
                .map(|c| parse_f(c))
                .collect::<Result<_>>()?,
            encoded: cols[1 + feature_count..1 + feature_count + gene_count]
                .iter()
                .map(|c| parse_f(c))
                .collect::<Result<_>>()?,
            fitness: parse_f(cols[1 + feature_count + gene_count])?,
        });
    }
    Ok(ScreenerCorpus { rows })
}

// ---------------------------------------------------------------------------
// Feature spec persistence
// ---------------------------------------------------------------------------

pub fn save_feature_spec(path: &Path, spec: &MetaFeatureSpec) -> Result<()> {
    let mut out = String::new();
    for k in 0..spec.names.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            spec.names[k], spec.source_indices[k], spec.min[k], spec.max[k]
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_feature_spec(path: &Path) -> Result<MetaFeatureSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec = MetaFeatureSpec {
        names: Vec::new(),
        source_indices: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::parse(path, lineno, "expected `name,index,min,max`"));
        }
        spec.names.push(cols[0].to_string());
        spec.source_indices.push(
            cols[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad index"))?,
        );
        spec.min.push(
            cols[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad min"))?,
        );
        spec.max.push(
            cols[3]
                .parse()
                .map_err(|_| Error::parse(path, lineno, "bad max"))?,
        );
    }
    Ok(spec)
}

/// Canonical file locations inside a store directory.
pub struct StorePaths {
    pub dir: PathBuf,
}

impl StorePaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StorePaths { dir: dir.into() }
    }

    pub fn table(&self, task_id: u32) -> PathBuf {
        self.dir.join("tables").join(format!("task_{task_id}.tbl"))
    }

    pub fn meta_samples(&self) -> PathBuf {
        self.dir.join("meta_samples.txt")
    }

    pub fn feature_spec(&self) -> PathBuf {
        self.dir.join("feature_spec.txt")
    }

    pub fn entropy_report(&self) -> PathBuf {
        self.dir.join("entropy_report.txt")
    }

    pub fn screener_corpus(&self) -> PathBuf {
        self.dir.join("screener_corpus.txt")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, synth_generate, SplitConfig, SynthConfig};
    use crate::learner::ModelKind;

    fn tiny_schema() -> Schema {
        Schema::new(
            ModelKind::Mlp,
            vec![
                crate::learner::GeneDef::linear("n_s", &[6.0]),
                crate::learner::GeneDef::log10("c", &[0.01, 0.001]),
                crate::learner::GeneDef::linear("layers", &[1.0]),
                crate::learner::GeneDef::linear("neure", &[4.0, 8.0]),
            ],
        )
        .unwrap()
    }

    fn tiny_task(seed: u64) -> Task {
        let grid = synth_generate(&SynthConfig::new(1, 300, seed)).unwrap();
        Task::new(1, normalize(&grid.cells[0]), SplitConfig::default())
    }

    fn fast_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 32,
            weight_decay: 0.0,
            shuffle: true,
        }
    }

    #[test]
    fn toy_grid_table_has_every_entry() {
        let dir = std::env::temp_dir().join("hypercast_store_toy");
        fs::create_dir_all(dir.join("tables")).unwrap();
        let schema = tiny_schema();
        assert_eq!(schema.grid_len(), 4);
        let task = tiny_task(31);
        let path = dir.join("tables/task_1.tbl");
        fs::remove_file(&path).ok();
        let (table, evals) =
            build_fitness_table(&path, &task, &schema, fast_cfg(), 1).unwrap();
        assert!(table.is_complete());
        assert_eq!(table.len(), 4);
        assert_eq!(evals, 4);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn argmax_matches_exhaustive_oracle_and_ties_break_low() {
        let schema = tiny_schema();
        let mut table = FitnessTable::empty(9, &schema);
        let recs = [1.0, 5.0, 5.0, 2.0];
        for (i, f) in recs.iter().enumerate() {
            table.set(
                i,
                FitnessRecord {
                    validation_mse: 1.0 / f,
                    fitness: *f,
                    diverged: false,
                },
            );
        }
        // Oracle: scan for max, lowest index wins.
        assert_eq!(table.argmax().unwrap(), 1);
    }

    #[test]
    fn resume_performs_only_missing_evaluations() {
        let dir = std::env::temp_dir().join("hypercast_store_resume");
        fs::create_dir_all(dir.join("tables")).unwrap();
        let schema = tiny_schema();
        let task = tiny_task(32);
        let path = dir.join("tables/task_1.tbl");
        fs::remove_file(&path).ok();

        // Simulate an interrupted build: persist a table holding only the
        // first two strategies.
        let evaluator = FitnessEvaluator::new(&task, &schema, fast_cfg(), 1);
        let mut partial = FitnessTable::empty(1, &schema);
        for gi in 0..2 {
            partial.set(gi, evaluator.record(schema.strategy_at(gi)));
        }
        save_table(&path, &partial, &schema).unwrap();

        let (table, new_evals) =
            build_fitness_table(&path, &task, &schema, fast_cfg(), 1).unwrap();
        assert!(table.is_complete());
        assert_eq!(new_evals, 2, "resume must only evaluate the missing half");

        // Resuming a complete table does nothing at all.
        let (_, zero) = build_fitness_table(&path, &task, &schema, fast_cfg(), 1).unwrap();
        assert_eq!(zero, 0);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn table_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("hypercast_store_roundtrip");
        fs::create_dir_all(&dir).unwrap();
        let schema = tiny_schema();
        let mut table = FitnessTable::empty(3, &schema);
        let mut r = crate::rng::stream(&[17]);
        for gi in 0..schema.grid_len() {
            let mse: f64 = rand::Rng::gen::<f64>(&mut r) * 0.37;
            table.set(
                gi,
                FitnessRecord {
                    validation_mse: mse,
                    fitness: 1.0 / mse,
                    diverged: false,
                },
            );
        }
        let path = dir.join("t.tbl");
        save_table(&path, &table, &schema).unwrap();
        let back = load_table(&path, &schema).unwrap();
        for gi in 0..schema.grid_len() {
            let a = table.get(gi).unwrap();
            let b = back.get(gi).unwrap();
            assert_eq!(a.validation_mse.to_bits(), b.validation_mse.to_bits());
            assert_eq!(a.fitness.to_bits(), b.fitness.to_bits());
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn schema_change_invalidates_stored_tables() {
        let dir = std::env::temp_dir().join("hypercast_store_hash");
        fs::create_dir_all(&dir).unwrap();
        let schema = tiny_schema();
        let table = FitnessTable::empty(5, &schema);
        let path = dir.join("t.tbl");
        save_table(&path, &table, &schema).unwrap();
        let other = Schema::mlp_desk();
        assert!(load_table(&path, &other).is_err());
        fs::remove_dir_all(&dir).ok();
    }

    fn complete_table(task_id: u32, schema: &Schema, seed: u64) -> FitnessTable {
        let mut t = FitnessTable::empty(task_id, schema);
        let mut r = crate::rng::stream(&[seed]);
        for gi in 0..schema.grid_len() {
            let mse = 0.01 + rand::Rng::gen::<f64>(&mut r);
            t.set(
                gi,
                FitnessRecord {
                    validation_mse: mse,
                    fitness: 1.0 / mse,
                    diverged: false,
                },
            );
        }
        t
    }

    #[test]
    fn meta_sample_assembly_and_removal() {
        let schema = tiny_schema();
        let tables: Vec<FitnessTable> = (1..=5u32)
            .map(|id| complete_table(id, &schema, id as u64))
            .collect();
        let features: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0, 0.5]).collect();
        let samples = assemble_meta_samples(&tables, &features, &schema).unwrap();
        assert_eq!(samples.len(), 5);
        for (s, t) in samples.iter().zip(&tables) {
            assert_eq!(s.task_id, t.task_id);
            assert_eq!(schema.grid_index(&s.label).unwrap(), t.argmax().unwrap());
        }
        // Dropping one task drops exactly its sample.
        let fewer = assemble_meta_samples(&tables[1..], &features[1..], &schema).unwrap();
        assert_eq!(fewer.len(), 4);
        assert!(fewer.iter().all(|s| s.task_id != 1));
    }

    #[test]
    fn assembly_rejects_incomplete_tables() {
        let schema = tiny_schema();
        let full = complete_table(7, &schema, 3);
        let mut partial = FitnessTable::empty(7, &schema);
        for gi in 0..schema.grid_len() - 1 {
            partial.set(gi, full.get(gi).unwrap());
        }
        let err = assemble_meta_samples(&[partial], &[vec![0.0]], &schema).unwrap_err();
        assert!(format!("{err}").contains("task 7"));
    }

    #[test]
    fn equal_max_fitness_resolves_to_lower_grid_index() {
        let schema = tiny_schema();
        let mut t = FitnessTable::empty(1, &schema);
        for gi in 0..schema.grid_len() {
            t.set(
                gi,
                FitnessRecord {
                    validation_mse: 0.5,
                    fitness: 2.0,
                    diverged: false,
                },
            );
        }
        assert_eq!(t.argmax().unwrap(), 0);
    }

    #[test]
    fn corpus_row_count_is_tasks_times_grid() {
        let schema = tiny_schema();
        let tables: Vec<FitnessTable> = (1..=3u32)
            .map(|id| complete_table(id, &schema, 40 + id as u64))
            .collect();
        let features: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let corpus = screener_corpus(&tables, &features, &schema).unwrap();
        assert_eq!(corpus.rows.len(), 3 * schema.grid_len());
        // All targets positive in the absence of divergence.
        assert!(corpus.rows.iter().all(|r| r.fitness > 0.0));
        // The labeled strategy's row carries the task's maximal target.
        for t in &tables {
            let best = t.argmax().unwrap();
            let best_fitness = t.get(best).unwrap().fitness;
            let max_row = corpus
                .rows
                .iter()
                .filter(|r| r.task_id == t.task_id)
                .map(|r| r.fitness)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(max_row, best_fitness);
        }
    }

    #[test]
    fn corpus_and_samples_round_trip() {
        let dir = std::env::temp_dir().join("hypercast_store_corpus_rt");
        fs::create_dir_all(&dir).unwrap();
        let schema = tiny_schema();
        let tables: Vec<FitnessTable> = (1..=2u32)
            .map(|id| complete_table(id, &schema, 50 + id as u64))
            .collect();
        let features: Vec<Vec<f64>> = vec![vec![0.25, 0.75], vec![1.0, 0.0]];
        let corpus = screener_corpus(&tables, &features, &schema).unwrap();
        let cpath = dir.join("corpus.txt");
        save_corpus(&cpath, &corpus).unwrap();
        let back = load_corpus(&cpath, 2, schema.gene_count()).unwrap();
        assert_eq!(corpus, back);

        let samples = assemble_meta_samples(&tables, &features, &schema).unwrap();
        let spath = dir.join("samples.txt");
        save_meta_samples(&spath, &samples, &schema).unwrap();
        let back = load_meta_samples(&spath, &schema, 2).unwrap();
        assert_eq!(samples, back);
        fs::remove_dir_all(&dir).ok();
    }
}
