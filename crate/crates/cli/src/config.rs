//! Declarative experiment configuration: one `key = value` per line,
//! `#` comments, unknown keys rejected. A stable hash of the resolved
//! config ties every artifact in an output directory to the settings that
//! produced it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use hypercast::learner::Schema;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // data
    pub data_source: String,
    pub synth_cells: usize,
    pub synth_intervals: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    // base learner
    pub schema_preset: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    // meta store
    pub store_size: usize,
    pub test_tasks: usize,
    pub knn_k: usize,
    pub meta_features: usize,
    pub entropy_bins: usize,
    // nets
    pub screener_preset: String,
    pub distance_epochs: usize,
    pub screener_epochs: usize,
    // optimization
    pub methods: Vec<String>,
    pub budget: u64,
    pub population: usize,
    pub offspring: usize,
    pub generations: usize,
    pub elite_fraction: f64,
    pub mutation_prob: f64,
    pub screen_multiplier: f64,
    pub elite_rule: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_source: "synth".into(),
            synth_cells: 36,
            synth_intervals: 600,
            train_frac: 0.8,
            valid_frac: 0.2,
            schema_preset: "mlp_desk".into(),
            epochs: 12,
            batch_size: 32,
            weight_decay: 0.01,
            store_size: 160,
            test_tasks: 5,
            knn_k: 8,
            meta_features: 6,
            entropy_bins: 5,
            screener_preset: "desk".into(),
            distance_epochs: 200,
            screener_epochs: 300,
            methods: vec![
                "algorithm1".into(),
                "gs".into(),
                "ss".into(),
                "ga".into(),
                "ga_knn".into(),
                "aga".into(),
                "pso".into(),
                "bo".into(),
            ],
            budget: 0,
            population: 10,
            offspring: 100,
            generations: 10,
            elite_fraction: 0.10,
            mutation_prob: 0.20,
            screen_multiplier: 2.0,
            elite_rule: "text".into(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = ExperimentConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), i + 1);
            };
            cfg.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! parse {
            () => {
                value.parse().with_context(|| format!("bad value for {key}: '{value}'"))?
            };
        }
        match key {
            "data_source" => self.data_source = value.into(),
            "synth_cells" => self.synth_cells = parse!(),
            "synth_intervals" => self.synth_intervals = parse!(),
            "train_frac" => self.train_frac = parse!(),
            "valid_frac" => self.valid_frac = parse!(),
            "schema" => self.schema_preset = value.into(),
            "epochs" => self.epochs = parse!(),
            "batch_size" => self.batch_size = parse!(),
            "weight_decay" => self.weight_decay = parse!(),
            "store_size" => self.store_size = parse!(),
            "test_tasks" => self.test_tasks = parse!(),
            "knn_k" => self.knn_k = parse!(),
            "meta_features" => self.meta_features = parse!(),
            "entropy_bins" => self.entropy_bins = parse!(),
            "screener_preset" => self.screener_preset = value.into(),
            "distance_epochs" => self.distance_epochs = parse!(),
            "screener_epochs" => self.screener_epochs = parse!(),
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|m| m.trim().to_string())
                    .filter(|m| !m.is_empty())
                    .collect()
            }
            "budget" => self.budget = parse!(),
            "population" => self.population = parse!(),
            "offspring" => self.offspring = parse!(),
            "generations" => self.generations = parse!(),
            "elite_fraction" => self.elite_fraction = parse!(),
            "mutation_prob" => self.mutation_prob = parse!(),
            "screen_multiplier" => self.screen_multiplier = parse!(),
            "elite_rule" => self.elite_rule = value.into(),
            "seed" => self.seed = parse!(),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k > self.store_size {
            bail!(
                "knn_k = {} must not exceed store_size = {}",
                self.knn_k,
                self.store_size
            );
        }
        if self.knn_k > self.population {
            bail!(
                "knn_k = {} must not exceed population = {}",
                self.knn_k,
                self.population
            );
        }
        Schema::by_preset(&self.schema_preset)
            .map_err(|e| anyhow::anyhow!("schema preset: {e}"))?;
        match self.elite_rule.as_str() {
            "text" | "pseudocode" => {}
            other => bail!("elite_rule must be text or pseudocode, got '{other}'"),
        }
        match self.screener_preset.as_str() {
            "desk" | "paper" => {}
            other => bail!("screener_preset must be desk or paper, got '{other}'"),
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema::by_preset(&self.schema_preset).expect("validated preset")
    }

    /// Canonical text snapshot; its hash keys the run manifest.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        w("data_source", self.data_source.clone());
        w("synth_cells", self.synth_cells.to_string());
        w("synth_intervals", self.synth_intervals.to_string());
        w("train_frac", self.train_frac.to_string());
        w("valid_frac", self.valid_frac.to_string());
        w("schema", self.schema_preset.clone());
        w("epochs", self.epochs.to_string());
        w("batch_size", self.batch_size.to_string());
        w("weight_decay", self.weight_decay.to_string());
        w("store_size", self.store_size.to_string());
        w("test_tasks", self.test_tasks.to_string());
        w("knn_k", self.knn_k.to_string());
        w("meta_features", self.meta_features.to_string());
        w("entropy_bins", self.entropy_bins.to_string());
        w("screener_preset", self.screener_preset.clone());
        w("distance_epochs", self.distance_epochs.to_string());
        w("screener_epochs", self.screener_epochs.to_string());
        w("methods", self.methods.join(","));
        w("budget", self.budget.to_string());
        w("population", self.population.to_string());
        w("offspring", self.offspring.to_string());
        w("generations", self.generations.to_string());
        w("elite_fraction", self.elite_fraction.to_string());
        w("mutation_prob", self.mutation_prob.to_string());
        w("screen_multiplier", self.screen_multiplier.to_string());
        w("elite_rule", self.elite_rule.clone());
        w("seed", self.seed.to_string());
        s
    }

    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.snapshot().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
}

/// Output-directory layout.
pub struct OutPaths {
    pub root: PathBuf,
}

impl OutPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutPaths { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.txt")
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }

    pub fn grid(&self) -> PathBuf {
        self.root.join("data/grid.csv")
    }

    pub fn imputed(&self) -> PathBuf {
        self.root.join("data/imputed.csv")
    }

    pub fn store(&self) -> hypercast::store::StorePaths {
        hypercast::store::StorePaths::new(self.root.join("store"))
    }

    pub fn distance_ckpt(&self) -> PathBuf {
        self.root.join("nets/distance.ckpt")
    }

    pub fn distance_curve(&self) -> PathBuf {
        self.root.join("nets/distance_curve.csv")
    }

    pub fn screener_ckpt(&self) -> PathBuf {
        self.root.join("nets/screener.ckpt")
    }

    pub fn screener_curve(&self) -> PathBuf {
        self.root.join("nets/screener_curve.csv")
    }

    pub fn run_log(&self, method: &str, task_id: u32) -> PathBuf {
        self.root.join(format!("runs/{method}_task{task_id}.log"))
    }

    pub fn plot_data(&self, method: &str, task_id: u32) -> PathBuf {
        self.root.join(format!("plot/{method}_task{task_id}.csv"))
    }

    pub fn results(&self, method: &str) -> PathBuf {
        self.root.join(format!("runs/results_{method}.csv"))
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.root.join("report.txt")
    }
}
