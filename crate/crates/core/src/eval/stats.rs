use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Per-dataset ranks of each method (1 = best, ties share the mean rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// datasets x methods
    pub ranks: Array2<f64>,
    pub average_rank: Vec<f64>,
}

/// Ranks of `values` with ties given the mean of the positions they span.
pub fn fractional_ranks(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].total_cmp(&values[b]);
        if higher_is_better {
            c.reverse()
        } else {
            c
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Ranks methods within each dataset and averages over datasets.
/// `values` is datasets x methods; a NaN marks a missing result.
pub fn rank_methods(
    methods: &[String],
    datasets: &[String],
    values: &Array2<f64>,
    higher_is_better: bool,
) -> Result<RankTable> {
    if values.dim() != (datasets.len(), methods.len()) {
        return Err(Error::Dimension {
            expected: datasets.len() * methods.len(),
            actual: values.len(),
        });
    }
    if datasets.is_empty() || methods.is_empty() {
        return Err(Error::Param("rank table needs at least one dataset and method".into()));
    }
    if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| v.is_nan()) {
        return Err(Error::Data(format!(
            "no result for method {} on dataset {}",
            methods[c], datasets[r]
        )));
    }
    let mut ranks = Array2::zeros(values.dim());
    for (r, row) in values.rows().into_iter().enumerate() {
        let rr = fractional_ranks(&row.to_vec(), higher_is_better);
        ranks.row_mut(r).assign(&ndarray::Array1::from(rr));
    }
    let average_rank = ranks.mean_axis(ndarray::Axis(0)).expect("nonempty").to_vec();
    Ok(RankTable {
        methods: methods.to_vec(),
        datasets: datasets.to_vec(),
        ranks,
        average_rank,
    })
}

/// Critical values of the two-tailed Nemenyi test (studentized range
/// divided by sqrt 2) for K = 2..=10 methods.
const Q_005: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_010: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

pub fn nemenyi_q(alpha: f64, k: usize) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_005
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_010
    } else {
        return Err(Error::Param(format!(
            "no Nemenyi table for alpha = {alpha} (use 0.05 or 0.10)"
        )));
    };
    if !(2..=10).contains(&k) {
        return Err(Error::Param(format!("Nemenyi table covers 2 to 10 methods, got {k}")));
    }
    Ok(table[k - 2])
}

pub fn critical_difference(alpha: f64, k: usize, n_datasets: usize) -> Result<f64> {
    if n_datasets < 2 {
        return Err(Error::Param("Nemenyi test needs at least two datasets".into()));
    }
    let q = nemenyi_q(alpha, k)?;
    Ok(q * ((k * (k + 1)) as f64 / (6.0 * n_datasets as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub rank_difference: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub alpha: f64,
    pub q_alpha: f64,
    pub n_datasets: usize,
    pub critical_difference: f64,
    pub average_rank: Vec<(String, f64)>,
    pub pairs: Vec<PairComparison>,
}

impl NemenyiResult {
    pub fn significant(&self, a: &str, b: &str) -> Option<bool> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.significant)
    }
}

/// Pairwise Nemenyi comparison from average ranks.
pub fn nemenyi_from_ranks(
    methods: &[String],
    average_rank: &[f64],
    n_datasets: usize,
    alpha: f64,
) -> Result<NemenyiResult> {
    if methods.len() != average_rank.len() {
        return Err(Error::Dimension {
            expected: methods.len(),
            actual: average_rank.len(),
        });
    }
    let k = methods.len();
    let q_alpha = nemenyi_q(alpha, k)?;
    let cd = critical_difference(alpha, k, n_datasets)?;
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = (average_rank[i] - average_rank[j]).abs();
            pairs.push(PairComparison {
                a: methods[i].clone(),
                b: methods[j].clone(),
                rank_difference: diff,
                significant: diff > cd,
            });
        }
    }
    Ok(NemenyiResult {
        alpha,
        q_alpha,
        n_datasets,
        critical_difference: cd,
        average_rank: methods.iter().cloned().zip(average_rank.iter().copied()).collect(),
        pairs,
    })
}

pub fn nemenyi(table: &RankTable, alpha: f64) -> Result<NemenyiResult> {
    nemenyi_from_ranks(&table.methods, &table.average_rank, table.datasets.len(), alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi_square: f64,
    pub chi_square_p: f64,
    /// Iman-Davenport correction; `None` when every dataset ranks the
    /// methods identically.
    pub f_statistic: Option<f64>,
    pub f_p: Option<f64>,
}

pub fn friedman(table: &RankTable) -> Result<FriedmanResult> {
    let n = table.datasets.len() as f64;
    let k = table.methods.len() as f64;
    if table.datasets.len() < 2 || table.methods.len() < 2 {
        return Err(Error::Param(
            "Friedman test needs at least two datasets and two methods".into(),
        ));
    }
    let sum_sq: f64 = table.average_rank.iter().map(|r| r * r).sum();
    let chi = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
    let chi = chi.max(0.0);
    let dist = ChiSquared::new(k - 1.0).map_err(|e| Error::Param(e.to_string()))?;
    let chi_square_p = 1.0 - dist.cdf(chi);
    let denom = n * (k - 1.0) - chi;
    let (f_statistic, f_p) = if denom > 0.0 {
        let f = (n - 1.0) * chi / denom;
        let fd = FisherSnedecor::new(k - 1.0, (k - 1.0) * (n - 1.0)).map_err(|e| Error::Param(e.to_string()))?;
        (Some(f), Some(1.0 - fd.cdf(f)))
    } else {
        (None, None)
    };
    Ok(FriedmanResult {
        chi_square: chi,
        chi_square_p,
        f_statistic,
        f_p,
    })
}
