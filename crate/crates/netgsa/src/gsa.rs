//! Multi-gene-set orchestration: run the per-set network difference test on
//! shared random data splits, adjust per split across sets, aggregate
//! p-values over splits by the median, and optionally combine with a
//! mean-shift gene-set statistic.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::diffnet::{diffnet_on_split, split_data, NullStrategy, ScreenOptions, SplitData};
use crate::error::{Error, Result};
use crate::ggm::standardize;
use crate::seed::{child_seed, task_rng};
use crate::stats::{bh_adjust, median, shapiro_wilk};
use crate::types::ExpressionMatrix;

/// One gene set: a name and the expression-matrix columns it covers.
#[derive(Debug, Clone)]
pub struct GeneSet {
    pub name: String,
    pub columns: Vec<usize>,
}

/// Retained gene sets over a fixed gene panel. Sets may overlap; each
/// retained set has at least `min_size` resolved columns.
#[derive(Debug, Clone)]
pub struct GeneSetCollection {
    sets: Vec<GeneSet>,
    n_genes: usize,
}

pub const DEFAULT_MIN_SET_SIZE: usize = 5;

impl GeneSetCollection {
    /// Build from (name, column indices). Duplicate names are an error;
    /// duplicate columns within a set are dropped; sets smaller than
    /// `min_size` are excluded. At least one set must survive.
    pub fn new(
        sets: Vec<(String, Vec<usize>)>,
        n_genes: usize,
        min_size: usize,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut retained = Vec::new();
        for (name, columns) in sets {
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateSet { name });
            }
            let mut unique = Vec::with_capacity(columns.len());
            let mut present = std::collections::BTreeSet::new();
            for c in columns {
                if c >= n_genes {
                    return Err(Error::DimensionMismatch {
                        context: "gene set column index",
                        expected: n_genes,
                        got: c,
                    });
                }
                if present.insert(c) {
                    unique.push(c);
                }
            }
            if unique.len() < min_size {
                log::info!(
                    "excluding gene-set {name}: {} genes < minimum {min_size}",
                    unique.len()
                );
                continue;
            }
            retained.push(GeneSet {
                name,
                columns: unique,
            });
        }
        if retained.is_empty() {
            return Err(Error::InvalidInput(
                "no gene-sets retained after size filtering".into(),
            ));
        }
        Ok(GeneSetCollection {
            sets: retained,
            n_genes,
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    /// Restriction to a subset of sets, by index into `sets()`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut sets = Vec::with_capacity(indices.len());
        for &i in indices {
            let set = self.sets.get(i).ok_or(Error::DimensionMismatch {
                context: "gene set subset index",
                expected: self.sets.len(),
                got: i,
            })?;
            sets.push(set.clone());
        }
        if sets.is_empty() {
            return Err(Error::InvalidInput("empty gene-set subset".into()));
        }
        Ok(GeneSetCollection {
            sets,
            n_genes: self.n_genes,
        })
    }
}

/// Configuration for the multi-split engine.
#[derive(Debug, Clone, Copy)]
pub struct NetgsaConfig {
    pub screen: ScreenOptions,
    pub strategy: NullStrategy,
    pub splits: usize,
    pub level: f64,
}

impl Default for NetgsaConfig {
    fn default() -> Self {
        NetgsaConfig {
            screen: ScreenOptions::default(),
            strategy: NullStrategy::Nested,
            splits: 50,
            level: 0.05,
        }
    }
}

/// Aggregated result for one gene set.
#[derive(Debug, Clone)]
pub struct GeneSetResultRow {
    pub name: String,
    pub size: usize,
    /// Median over non-failed splits of the per-split adjusted p-values;
    /// absent when more than half the splits failed.
    pub p_net_median: Option<f64>,
    pub p_classic: Option<f64>,
    /// Uncorrected minimum of the classic and network p-values.
    pub p_combined: Option<f64>,
    pub failed_splits: usize,
}

/// Median-over-splits absolute partial correlation matrices for one set.
#[derive(Debug, Clone)]
pub struct SetNetworks {
    pub name: String,
    pub pcorr_x: Array2<f64>,
    pub pcorr_y: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct NetgsaOutput {
    /// Rows sorted ascending by median network p-value, missing values last.
    pub rows: Vec<GeneSetResultRow>,
    /// Populated only for requested sets.
    pub networks: Vec<SetNetworks>,
}

fn extract_split(split: &SplitData, columns: &[usize]) -> SplitData {
    SplitData {
        x_in: split.x_in.select_genes(columns),
        x_out: split.x_out.select_genes(columns),
        y_in: split.y_in.select_genes(columns),
        y_out: split.y_out.select_genes(columns),
    }
}

type SplitNetworks = Vec<Option<(Array2<f64>, Array2<f64>)>>;

/// One shared split for all sets: test each set on it, then adjust across
/// the sets that succeeded. Returns per-set adjusted p-values (None marks a
/// failed set) and, for requested sets, the fitted partial correlations.
fn single_split(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    sets: &GeneSetCollection,
    config: &NetgsaConfig,
    seed: u64,
    network_sets: &[bool],
) -> Result<(Vec<Option<f64>>, SplitNetworks)> {
    let mut split_rng = task_rng(seed, &[0]);
    let split = split_data(x, y, &mut split_rng)?;

    let outcomes: Vec<(Option<f64>, Option<(Array2<f64>, Array2<f64>)>)> = sets
        .sets()
        .par_iter()
        .enumerate()
        .map(|(s, set)| {
            let sub = extract_split(&split, &set.columns);
            let set_seed = child_seed(seed, &[1 + s as u64]);
            match diffnet_on_split(&sub, &config.screen, config.strategy, set_seed) {
                Ok(outcome) => {
                    let nets = network_sets[s].then(|| {
                        (
                            outcome.omega_x.partial_correlations().mapv(f64::abs),
                            outcome.omega_y.partial_correlations().mapv(f64::abs),
                        )
                    });
                    (Some(outcome.p_value), nets)
                }
                Err(err) => {
                    log::warn!("set {} failed on split seed {seed}: {err}", set.name);
                    (None, None)
                }
            }
        })
        .collect();

    // Adjust across the sets that produced a p-value on this split.
    let raw: Vec<f64> = outcomes.iter().filter_map(|(p, _)| *p).collect();
    let adjusted = bh_adjust(&raw)?;
    let mut iter = adjusted.into_iter();
    let mut per_set = Vec::with_capacity(outcomes.len());
    let mut networks = Vec::with_capacity(outcomes.len());
    for (p, nets) in outcomes {
        per_set.push(p.map(|_| iter.next().expect("adjusted count matches")));
        networks.push(nets);
    }
    Ok((per_set, networks))
}

/// Algorithm-level single split: per-set adjusted p-values for one shared
/// random split of the standardized data.
pub fn run_single_split(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    sets: &GeneSetCollection,
    config: &NetgsaConfig,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    check_inputs(x, y, sets)?;
    let none = vec![false; sets.len()];
    single_split(x, y, sets, config, seed, &none).map(|(p, _)| p)
}

fn check_inputs(x: &ExpressionMatrix, y: &ExpressionMatrix, sets: &GeneSetCollection) -> Result<()> {
    if x.n_genes() != sets.n_genes() {
        return Err(Error::DimensionMismatch {
            context: "gene count of X vs gene-set panel",
            expected: sets.n_genes(),
            got: x.n_genes(),
        });
    }
    if y.n_genes() != sets.n_genes() {
        return Err(Error::DimensionMismatch {
            context: "gene count of Y vs gene-set panel",
            expected: sets.n_genes(),
            got: y.n_genes(),
        });
    }
    Ok(())
}

/// The multi-split engine: B shared splits, per-split adjustment across
/// sets, median aggregation per set. `network_sets` names the sets whose
/// median fitted networks should be returned.
pub fn run_netgsa(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    sets: &GeneSetCollection,
    config: &NetgsaConfig,
    master_seed: u64,
    network_sets: Option<&[String]>,
) -> Result<NetgsaOutput> {
    check_inputs(x, y, sets)?;
    let b = config.splits;
    if b < 1 {
        return Err(Error::InvalidInput("splits must be >= 1".into()));
    }
    let wanted: Vec<bool> = match network_sets {
        None => vec![false; sets.len()],
        Some(names) => {
            for name in names {
                if !sets.sets().iter().any(|s| &s.name == name) {
                    return Err(Error::InvalidInput(format!(
                        "unknown gene-set {name} requested for network emission"
                    )));
                }
            }
            sets.sets()
                .iter()
                .map(|s| names.iter().any(|n| n == &s.name))
                .collect()
        }
    };

    let per_split: Vec<Result<(Vec<Option<f64>>, SplitNetworks)>> = (0..b)
        .into_par_iter()
        .map(|split_index| {
            let seed = child_seed(master_seed, &[split_index as u64]);
            single_split(x, y, sets, config, seed, &wanted)
        })
        .collect();

    let mut split_ps: Vec<Vec<Option<f64>>> = Vec::with_capacity(b);
    let mut split_nets: Vec<SplitNetworks> = Vec::with_capacity(b);
    for result in per_split {
        let (p, nets) = result?;
        split_ps.push(p);
        split_nets.push(nets);
    }

    let mut rows = Vec::with_capacity(sets.len());
    for (s, set) in sets.sets().iter().enumerate() {
        let observed: Vec<f64> = split_ps.iter().filter_map(|split| split[s]).collect();
        let failed = b - observed.len();
        let p_net_median = if failed * 2 > b {
            log::warn!(
                "set {}: {failed}/{b} splits failed; reporting no network p-value",
                set.name
            );
            None
        } else {
            median(&observed)
        };
        rows.push(GeneSetResultRow {
            name: set.name.clone(),
            size: set.columns.len(),
            p_net_median,
            p_classic: None,
            p_combined: None,
            failed_splits: failed,
        });
    }
    sort_rows(&mut rows);

    let mut networks = Vec::new();
    for (s, set) in sets.sets().iter().enumerate() {
        if !wanted[s] {
            continue;
        }
        let collected: Vec<&(Array2<f64>, Array2<f64>)> = split_nets
            .iter()
            .filter_map(|split| split[s].as_ref())
            .collect();
        if collected.is_empty() {
            log::warn!("set {}: no successful splits; skipping networks", set.name);
            continue;
        }
        let d = set.columns.len();
        let mut pcorr_x = Array2::zeros((d, d));
        let mut pcorr_y = Array2::zeros((d, d));
        let mut buffer = Vec::with_capacity(collected.len());
        for i in 0..d {
            for j in 0..d {
                buffer.clear();
                buffer.extend(collected.iter().map(|(mx, _)| mx[[i, j]]));
                pcorr_x[[i, j]] = median(&buffer).expect("non-empty");
                buffer.clear();
                buffer.extend(collected.iter().map(|(_, my)| my[[i, j]]));
                pcorr_y[[i, j]] = median(&buffer).expect("non-empty");
            }
        }
        networks.push(SetNetworks {
            name: set.name.clone(),
            pcorr_x,
            pcorr_y,
        });
    }

    Ok(NetgsaOutput { rows, networks })
}

/// Ascending by median network p-value; missing medians sort last; ties keep
/// name order for stability.
pub fn sort_rows(rows: &mut [GeneSetResultRow]) {
    rows.sort_by(|a, b| match (a.p_net_median, b.p_net_median) {
        (Some(pa), Some(pb)) => pa
            .partial_cmp(&pb)
            .unwrap()
            .then_with(|| a.name.cmp(&b.name)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.name.cmp(&b.name),
    });
}

/// Aggregate a set's gene-level z-scores into a two-sided normal p-value.
pub(crate) fn set_pvalue(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let e = d.sqrt() * z.iter().sum::<f64>() / d;
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - normal.cdf(e.abs()))).clamp(0.0, 1.0)
}

/// Mean-shift gene-set analysis: per-gene two-sample t-statistics with
/// pooled variance, mapped through the t CDF (Welch–Satterthwaite degrees of
/// freedom) to normal scores, aggregated per set, BH-adjusted across sets.
/// Inputs are used as given: this branch runs on unnormalized data.
pub fn classic_gsa(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    sets: &GeneSetCollection,
) -> Result<Vec<f64>> {
    check_inputs(x, y, sets)?;
    let n_x = x.n_samples();
    let n_y = y.n_samples();
    if n_x < 2 || n_y < 2 {
        return Err(Error::TooFewSamples {
            context: "classic_gsa",
            needed: 2,
            got: n_x.min(n_y),
        });
    }
    let d = x.n_genes();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let nxf = n_x as f64;
    let nyf = n_y as f64;

    let mut z = vec![0.0f64; d];
    for j in 0..d {
        let col_x = x.data().column(j);
        let col_y = y.data().column(j);
        let mean_x = col_x.sum() / nxf;
        let mean_y = col_y.sum() / nyf;
        let var_x = col_x.iter().map(|v| (v - mean_x).powi(2)).sum::<f64>() / (nxf - 1.0);
        let var_y = col_y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / (nyf - 1.0);
        let pooled = ((nxf - 1.0) * var_x + (nyf - 1.0) * var_y) / (nxf + nyf - 2.0);
        if pooled <= 0.0 {
            log::warn!("gene {j}: zero pooled variance; score set to 0");
            continue;
        }
        let t = (mean_x - mean_y) / (pooled * (1.0 / nxf + 1.0 / nyf)).sqrt();
        let a = var_x / nxf;
        let b = var_y / nyf;
        let df = (a + b).powi(2)
            / (a * a / (nxf - 1.0) + b * b / (nyf - 1.0)).max(f64::MIN_POSITIVE);
        let df = df.max(1.0);
        let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|_| {
            Error::InvalidInput(format!("bad t degrees of freedom {df} for gene {j}"))
        })?;
        let cdf = t_dist.cdf(t).clamp(1e-16, 1.0 - 1e-16);
        z[j] = normal.inverse_cdf(cdf);
    }

    let raw: Vec<f64> = sets
        .sets()
        .iter()
        .map(|set| {
            let zs: Vec<f64> = set.columns.iter().map(|&j| z[j]).collect();
            set_pvalue(&zs)
        })
        .collect();
    bh_adjust(&raw)
}

/// Elementwise minimum with pass-through for missing operands.
pub fn combine_min(
    p_classic: &[Option<f64>],
    p_net: &[Option<f64>],
) -> Result<Vec<Option<f64>>> {
    if p_classic.len() != p_net.len() {
        return Err(Error::DimensionMismatch {
            context: "combine_min lengths",
            expected: p_classic.len(),
            got: p_net.len(),
        });
    }
    Ok(p_classic
        .iter()
        .zip(p_net)
        .map(|(c, n)| match (c, n) {
            (Some(c), Some(n)) => Some(c.min(*n)),
            (Some(c), None) => Some(*c),
            (None, Some(n)) => Some(*n),
            (None, None) => None,
        })
        .collect())
}

/// Normality filter: Shapiro–Wilk per gene per condition, BH-adjusted across
/// all 2d tests; a gene survives only if both conditions' adjusted p-values
/// reach `level`. Returns retained column indices. Zero-range columns are
/// treated as maximally non-normal.
pub fn shapiro_filter(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    level: f64,
) -> Result<Vec<usize>> {
    if x.n_genes() != y.n_genes() {
        return Err(Error::DimensionMismatch {
            context: "shapiro_filter gene counts",
            expected: x.n_genes(),
            got: y.n_genes(),
        });
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidInput(
            "shapiro level must be in [0, 1)".into(),
        ));
    }
    let d = x.n_genes();
    let mut raw = Vec::with_capacity(2 * d);
    for m in [x, y] {
        for j in 0..d {
            let column: Vec<f64> = m.data().column(j).to_vec();
            let range_zero = column
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if range_zero.1 - range_zero.0 <= 0.0 {
                raw.push(0.0);
            } else {
                raw.push(shapiro_wilk(&column)?.p_value);
            }
        }
    }
    let adjusted = bh_adjust(&raw)?;
    Ok((0..d)
        .filter(|&j| adjusted[j] >= level && adjusted[d + j] >= level)
        .collect())
}

/// Pool both conditions, randomly re-partition into the original sizes, and
/// re-run the engine on the given sets. Returns, per set, how many repeats
/// still called it significant. Each repartitioned condition is standardized
/// before testing.
pub fn backtest(
    x: &ExpressionMatrix,
    y: &ExpressionMatrix,
    sets: &GeneSetCollection,
    config: &NetgsaConfig,
    repeats: usize,
    master_seed: u64,
) -> Result<Vec<usize>> {
    check_inputs(x, y, sets)?;
    if repeats == 0 {
        return Err(Error::InvalidInput("backtest needs repeats >= 1".into()));
    }
    let pooled = x.vstack(y)?;
    let n_x = x.n_samples();
    let n_total = pooled.n_samples();
    let mut counts = vec![0usize; sets.len()];
    for r in 0..repeats {
        let seed = child_seed(master_seed, &[r as u64]);
        let mut rng = task_rng(seed, &[0]);
        let mut rows: Vec<usize> = (0..n_total).collect();
        rows.shuffle(&mut rng);
        let mut first: Vec<usize> = rows[..n_x].to_vec();
        let mut second: Vec<usize> = rows[n_x..].to_vec();
        first.sort_unstable();
        second.sort_unstable();
        let new_x = standardize(&pooled.select_samples(&first))?;
        let new_y = standardize(&pooled.select_samples(&second))?;
        let output = run_netgsa(&new_x, &new_y, sets, config, child_seed(seed, &[1]), None)?;
        for row in &output.rows {
            if let Some(p) = row.p_net_median {
                if p < config.level {
                    let index = sets
                        .sets()
                        .iter()
                        .position(|s| s.name == row.name)
                        .expect("row name from collection");
                    counts[index] += 1;
                }
            }
        }
    }
    Ok(counts)
}
