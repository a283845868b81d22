//! Intrinsic series characteristics and entropy-based meta-feature
//! selection.
//!
//! Across a store of solved tasks, each hyper-parameter gene has an
//! empirical distribution of optimal values; its information entropy says
//! how unpredictable the optimum is a priori. Conditioning on a series
//! characteristic (discretized by equal-frequency binning) reduces that
//! entropy, and characteristics with the lowest mean conditional entropy
//! across genes carry the most information about the optimum — those become
//! the meta-features.

use crate::data::{autocorrelation, NormalizedSeries, INTERVALS_PER_DAY};
use crate::error::{Error, Result};
use crate::learner::Strategy;

/// Number of bins used for conditional entropy unless configured otherwise.
pub const DEFAULT_ENTROPY_BINS: usize = 5;
/// Default number of selected meta-features.
pub const DEFAULT_META_FEATURES: usize = 6;

/// The standard 11-characteristic catalog, in canonical order.
pub const STANDARD_CHARACTERISTICS: [&str; 11] = [
    "mean",
    "variance",
    "median",
    "skewness",
    "kurtosis",
    "maximum",
    "minimum",
    "autocorr_lag1",
    "autocorr_daily",
    "trend_slope",
    "coeff_variation",
];

/// An ordered selection of characteristics from the catalog; configurable so
/// the feature set can be swapped without code changes.
#[derive(Debug, Clone)]
pub struct CharacteristicSet {
    pub names: Vec<String>,
}

impl CharacteristicSet {
    pub fn standard() -> Self {
        CharacteristicSet {
            names: STANDARD_CHARACTERISTICS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn from_names(names: &[String]) -> Result<Self> {
        for n in names {
            if !STANDARD_CHARACTERISTICS.contains(&n.as_str()) {
                return Err(Error::Config(format!("unknown characteristic '{n}'")));
            }
        }
        Ok(CharacteristicSet {
            names: names.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Computes the characteristic vector of a normalized series,
    /// deterministic and finite by construction.
    pub fn compute(&self, series: &NormalizedSeries) -> Vec<f64> {
        self.names
            .iter()
            .map(|n| characteristic(n, &series.values))
            .collect()
    }
}

/// One named characteristic of a value sequence. Degenerate inputs
/// (constant series, zero mean) report 0 for the affected moments.
pub fn characteristic(name: &str, values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Exactly-constant input has zero variance by definition; computing it
    // in floating point can leave a spurious residue.
    let var = if values.iter().all(|&v| v == values[0]) {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    };
    match name {
        "mean" => mean,
        "variance" => var,
        "median" => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 0 {
                (sorted[mid - 1] + sorted[mid]) / 2.0
            } else {
                sorted[mid]
            }
        }
        "skewness" => {
            if var == 0.0 {
                0.0
            } else {
                let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
                m3 / var.powf(1.5)
            }
        }
        "kurtosis" => {
            if var == 0.0 {
                0.0
            } else {
                let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
                m4 / (var * var) - 3.0
            }
        }
        "maximum" => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "minimum" => values.iter().cloned().fold(f64::INFINITY, f64::min),
        "autocorr_lag1" => autocorrelation(values, 1),
        "autocorr_daily" => autocorrelation(values, INTERVALS_PER_DAY),
        "trend_slope" => {
            // OLS slope of value against interval index.
            let tm = (n - 1.0) / 2.0;
            let mut cov = 0.0;
            let mut var_t = 0.0;
            for (t, v) in values.iter().enumerate() {
                let dt = t as f64 - tm;
                cov += dt * (v - mean);
                var_t += dt * dt;
            }
            if var_t == 0.0 {
                0.0
            } else {
                cov / var_t
            }
        }
        "coeff_variation" => {
            if mean == 0.0 {
                0.0
            } else {
                var.sqrt() / mean
            }
        }
        other => panic!("unknown characteristic '{other}'"),
    }
}

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

/// One solved task as the entropy analysis sees it: its id, the
/// grid-search-optimal strategy, and the raw characteristic vector.
#[derive(Debug, Clone)]
pub struct LabeledTask {
    pub task_id: u32,
    pub label: Strategy,
    pub characteristics: Vec<f64>,
}

/// Marginal entropy per gene plus conditional entropy per
/// (gene, characteristic) pair, in bits.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub gene_names: Vec<String>,
    pub characteristic_names: Vec<String>,
    /// `h_gene[g]` = H of gene g's optimal values across tasks.
    pub h_gene: Vec<f64>,
    /// `h_cond[g][c]` = H(gene g | characteristic c).
    pub h_cond: Vec<Vec<f64>>,
}

/// Shannon entropy in bits of a discrete sample given as category counts.
fn entropy_bits(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let tf = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / tf;
            -p * p.log2()
        })
        .sum()
}

/// Computes the entropy report over a labeled store.
///
/// Continuous characteristics are discretized by equal-frequency binning:
/// tasks sorted by (value, task_id) split into `bins` near-equal groups. The
/// (value, task_id) order makes the report invariant under task reordering.
pub fn entropy_report(
    tasks: &[LabeledTask],
    gene_names: &[String],
    characteristic_names: &[String],
    bins: usize,
) -> Result<EntropyReport> {
    if tasks.len() < 2 {
        return Err(Error::Config(
            "entropy analysis needs at least two labeled tasks".into(),
        ));
    }
    if bins < 2 {
        return Err(Error::Config("entropy binning needs at least 2 bins".into()));
    }
    let n_genes = gene_names.len();
    let n_chars = characteristic_names.len();
    for t in tasks {
        if t.label.0.len() != n_genes || t.characteristics.len() != n_chars {
            return Err(Error::Invalid(format!(
                "task {} has mismatched label or characteristic arity",
                t.task_id
            )));
        }
    }

    let mut h_gene = Vec::with_capacity(n_genes);
    for g in 0..n_genes {
        let max_idx = tasks.iter().map(|t| t.label.gene(g)).max().unwrap();
        let mut counts = vec![0usize; max_idx + 1];
        for t in tasks {
            counts[t.label.gene(g)] += 1;
        }
        h_gene.push(entropy_bits(&counts));
    }

    let mut h_cond = vec![vec![0.0; n_chars]; n_genes];
    for c in 0..n_chars {
        // Stable order: characteristic value, then task id.
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.sort_by(|&a, &b| {
            tasks[a].characteristics[c]
                .partial_cmp(&tasks[b].characteristics[c])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(tasks[a].task_id.cmp(&tasks[b].task_id))
        });
        // Equal-frequency bin of the rank-r task, with runs of equal values
        // forced into one bin: splitting ties across bins would make an
        // uninformative (constant) characteristic look perfectly predictive.
        let bin_of_rank = |r: usize| (r * bins / tasks.len()).min(bins - 1);
        let mut bin_of_task = vec![0usize; tasks.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len()
                && tasks[order[j + 1]].characteristics[c] == tasks[order[i]].characteristics[c]
            {
                j += 1;
            }
            for k in i..=j {
                bin_of_task[order[k]] = bin_of_rank(i);
            }
            i = j + 1;
        }
        for g in 0..n_genes {
            let max_idx = tasks.iter().map(|t| t.label.gene(g)).max().unwrap();
            let mut per_bin = vec![vec![0usize; max_idx + 1]; bins];
            for &ti in order.iter() {
                per_bin[bin_of_task[ti]][tasks[ti].label.gene(g)] += 1;
            }
            let mut ce = 0.0;
            for bin_counts in &per_bin {
                let bin_total: usize = bin_counts.iter().sum();
                if bin_total == 0 {
                    continue;
                }
                ce += bin_total as f64 / tasks.len() as f64 * entropy_bits(bin_counts);
            }
            h_cond[g][c] = ce;
        }
    }

    Ok(EntropyReport {
        gene_names: gene_names.to_vec(),
        characteristic_names: characteristic_names.to_vec(),
        h_gene,
        h_cond,
    })
}

impl EntropyReport {
    /// Mean conditional entropy of a characteristic across genes — the
    /// selection criterion (lower is more informative).
    pub fn mean_conditional(&self, char_index: usize) -> f64 {
        let s: f64 = self.h_cond.iter().map(|row| row[char_index]).sum();
        s / self.h_cond.len() as f64
    }

    /// Export rows `gene, characteristic, H_gene, H_conditional`; marginal
    /// rows carry `-` in the characteristic column.
    pub fn to_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for (g, gname) in self.gene_names.iter().enumerate() {
            rows.push(format!("{},-,{},-", gname, self.h_gene[g]));
            for (c, cname) in self.characteristic_names.iter().enumerate() {
                rows.push(format!(
                    "{},{},{},{}",
                    gname, cname, self.h_gene[g], self.h_cond[g][c]
                ));
            }
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// Meta-feature selection and scaling
// ---------------------------------------------------------------------------

/// The selected meta-features with the per-feature raw ranges used for
/// min-max scaling into [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatureSpec {
    pub names: Vec<String>,
    /// Index of each selected feature in the originating characteristic set.
    pub source_indices: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Ranks characteristics by mean conditional entropy (ascending, ties by
/// name) and selects the first `i`, recording store-wide ranges for scaling.
pub fn select_meta_features(
    report: &EntropyReport,
    i: usize,
    tasks: &[LabeledTask],
) -> Result<MetaFeatureSpec> {
    let n_chars = report.characteristic_names.len();
    if i == 0 || i > n_chars {
        return Err(Error::Config(format!(
            "cannot select {i} of {n_chars} characteristics"
        )));
    }
    let mut order: Vec<usize> = (0..n_chars).collect();
    order.sort_by(|&a, &b| {
        report
            .mean_conditional(a)
            .partial_cmp(&report.mean_conditional(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(report.characteristic_names[a].cmp(&report.characteristic_names[b]))
    });
    let selected = &order[..i];
    let mut min = vec![f64::INFINITY; i];
    let mut max = vec![f64::NEG_INFINITY; i];
    for t in tasks {
        for (k, &c) in selected.iter().enumerate() {
            min[k] = min[k].min(t.characteristics[c]);
            max[k] = max[k].max(t.characteristics[c]);
        }
    }
    Ok(MetaFeatureSpec {
        names: selected
            .iter()
            .map(|&c| report.characteristic_names[c].clone())
            .collect(),
        source_indices: selected.to_vec(),
        min,
        max,
    })
}

impl MetaFeatureSpec {
    pub fn feature_count(&self) -> usize {
        self.names.len()
    }

    /// Scales a full characteristic vector down to the selected features in
    /// [0,1]; out-of-range values clip, and a zero-width range maps to 0.
    pub fn scale(&self, characteristics: &[f64]) -> Vec<f64> {
        self.source_indices
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let span = self.max[k] - self.min[k];
                if span == 0.0 {
                    0.0
                } else {
                    ((characteristics[c] - self.min[k]) / span).clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Inverse of [`MetaFeatureSpec::scale`] for in-range values.
    pub fn unscale(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(k, &v)| self.min[k] + v * (self.max[k] - self.min[k]))
            .collect()
    }

    /// The meta-feature vector of a series: selected characteristics,
    /// min-max scaled by the stored ranges.
    pub fn vector_for_series(
        &self,
        series: &NormalizedSeries,
        set: &CharacteristicSet,
    ) -> Vec<f64> {
        self.scale(&set.compute(series))
    }
}
