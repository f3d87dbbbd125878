//! Synthetic classification data and non-IID client partitions.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dimension {
                context: "dataset labels",
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Config(format!(
                "label {l} at sample {i} is outside 0..{classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn empty(classes: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.classes];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }
}

/// Class means used by [`generate_synthetic`]: points on a circle in the
/// first two coordinates whose nearest-neighbour distance equals `separation`.
pub fn class_means(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let radius = separation / (2.0 * (std::f64::consts::PI / classes as f64).sin());
    (0..classes)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
            let mut mean = vec![0.0; dim];
            mean[0] = radius * angle.cos();
            mean[1] = radius * angle.sin();
            mean
        })
        .collect()
}

pub const DEFAULT_SEPARATION: f64 = 4.0;

/// Unit-variance Gaussian blobs, `per_class` samples for each of `classes`
/// classes, class-major order.
pub fn generate_synthetic(classes: usize, dim: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    generate_synthetic_with(classes, dim, per_class, DEFAULT_SEPARATION, seed)
}

pub fn generate_synthetic_with(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || dim < 2 || per_class < 1 {
        return Err(Error::Config(format!(
            "synthetic data needs classes >= 2, dim >= 2, per_class >= 1 (got {classes}, {dim}, {per_class})"
        )));
    }
    if !(separation >= 3.0) {
        return Err(Error::Config(format!(
            "class separation must be at least 3 standard deviations, got {separation}"
        )));
    }
    let means = class_means(classes, dim, separation);
    let mut rng = SeedTree::new(seed).rng(Stream::Data, &[]);
    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            features.push(
                mean.iter()
                    .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            labels.push(class);
        }
    }
    Dataset::new(features, labels, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Skew {
    Iid,
    Dirichlet { alpha: f64 },
    Explicit { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients: usize,
    pub train_per_client: usize,
    pub test_per_client: usize,
    /// Per-client `(train, test)` sizes replacing the defaults above.
    #[serde(default)]
    pub size_overrides: BTreeMap<usize, (usize, usize)>,
    pub skew: Skew,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn sizes(&self) -> Vec<(usize, usize)> {
        (0..self.clients)
            .map(|c| {
                self.size_overrides
                    .get(&c)
                    .copied()
                    .unwrap_or((self.train_per_client, self.test_per_client))
            })
            .collect()
    }

    /// Class-proportion row for every client.
    pub fn proportion_rows(&self, classes: usize) -> Result<Vec<Vec<f64>>> {
        match &self.skew {
            Skew::Iid => Ok(vec![vec![1.0 / classes as f64; classes]; self.clients]),
            Skew::Dirichlet { alpha } if alpha.is_infinite() && *alpha > 0.0 => {
                Ok(vec![vec![1.0 / classes as f64; classes]; self.clients])
            }
            Skew::Dirichlet { alpha } => {
                let gamma = Gamma::new(*alpha, 1.0).map_err(|e| {
                    Error::Config(format!("dirichlet alpha must be positive, got {alpha}: {e}"))
                })?;
                let mut rng = SeedTree::new(self.seed).rng(Stream::Partition, &[0]);
                Ok((0..self.clients)
                    .map(|_| {
                        let draws: Vec<f64> = (0..classes).map(|_| gamma.sample(&mut rng)).collect();
                        let total: f64 = draws.iter().sum();
                        if total > 0.0 {
                            draws.iter().map(|d| d / total).collect()
                        } else {
                            // every gamma draw underflowed; fall back to a single class
                            let mut row = vec![0.0; classes];
                            row[rng.random_range(0..classes)] = 1.0;
                            row
                        }
                    })
                    .collect())
            }
            Skew::Explicit { rows } => {
                if rows.len() != self.clients {
                    return Err(Error::Config(format!(
                        "explicit skew has {} rows for {} clients",
                        rows.len(),
                        self.clients
                    )));
                }
                for (i, row) in rows.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.len() != classes || (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                        return Err(Error::Config(format!(
                            "proportion row {i} must have {classes} non-negative entries summing to 1, got {row:?}"
                        )));
                    }
                }
                Ok(rows.clone())
            }
        }
    }
}

/// Largest-remainder rounding of `total * row`; ties go to the lower class.
pub fn quantize(row: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = row.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Splits `data` into disjoint per-client train/test shards following the
/// class proportions of `spec`.
pub fn partition(data: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    let classes = data.classes;
    let rows = spec.proportion_rows(classes)?;
    let sizes = spec.sizes();
    let plan: Vec<(Vec<usize>, Vec<usize>)> = rows
        .iter()
        .zip(&sizes)
        .map(|(row, &(train, test))| (quantize(row, train), quantize(row, test)))
        .collect();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let deficits: Vec<String> = (0..classes)
        .filter_map(|k| {
            let needed: usize = plan.iter().map(|(tr, te)| tr[k] + te[k]).sum();
            let have = by_class[k].len();
            (needed > have).then(|| format!("class {k}: need {needed}, have {have} (deficit {})", needed - have))
        })
        .collect();
    if !deficits.is_empty() {
        return Err(Error::Infeasible(deficits.join("; ")));
    }

    let mut rng = SeedTree::new(spec.seed).rng(Stream::Partition, &[1]);
    for pool in &mut by_class {
        pool.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; classes];
    let mut take = |k: usize, n: usize, into: &mut Vec<usize>| {
        into.extend_from_slice(&by_class[k][cursor[k]..cursor[k] + n]);
        cursor[k] += n;
    };
    Ok(plan
        .iter()
        .map(|(train_counts, test_counts)| {
            let mut train_indices = Vec::new();
            let mut test_indices = Vec::new();
            for k in 0..classes {
                take(k, train_counts[k], &mut train_indices);
                take(k, test_counts[k], &mut test_indices);
            }
            ClientShard {
                train: data.subset(&train_indices),
                test: data.subset(&test_indices),
                train_indices,
                test_indices,
            }
        })
        .collect())
}

/// Reads a headerless CSV where each row is `label,feature_1,...,feature_d`.
/// Lines starting with `#` are ignored. When `classes` is `None` the class
/// count is one more than the largest label.
pub fn load_external(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, classes)
}

pub fn read_csv<R: std::io::Read>(input: R, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() < 2 {
            return Err(parse_err("row needs a label and at least one feature".into()));
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(format!("expected {w} cells, found {}", record.len())))
            }
            _ => {}
        }
        let label: usize = record[0]
            .parse()
            .map_err(|_| parse_err(format!("label `{}` is not a non-negative integer", &record[0])))?;
        if let Some(c) = classes {
            if label >= c {
                return Err(parse_err(format!("label {label} is not below the declared class count {c}")));
            }
        }
        let row = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(format!("cell `{cell}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no rows".into(),
        });
    }
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(features, labels, classes)
}
