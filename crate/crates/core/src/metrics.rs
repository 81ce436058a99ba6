//! External clustering metrics: NMI, ACC and ARI.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VtccError};
use crate::hungarian::hungarian;

/// `counts[i][j]` = number of samples predicted `i` with true class `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(VtccError::Contract(format!(
                "prediction/label lengths differ: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(VtccError::Contract("metrics need at least one sample".into()));
        }
        let rows = pred.iter().max().map_or(0, |m| m + 1);
        let cols = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len() as u64,
        })
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(VtccError::Contract("ragged contingency table".into()));
        }
        let n = counts.iter().flatten().sum();
        Ok(ContingencyTable { counts, n })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

fn entropy(marginal: &[u64], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// True when the two partitions are identical up to relabelling.
fn is_bijection(table: &ContingencyTable) -> bool {
    let nonzero = |cells: &mut dyn Iterator<Item = u64>| cells.filter(|&c| c > 0).count() <= 1;
    let cols = table.counts.first().map_or(0, Vec::len);
    table.counts.iter().all(|r| nonzero(&mut r.iter().copied()))
        && (0..cols).all(|j| nonzero(&mut table.counts.iter().map(|r| r[j])))
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(table: &ContingencyTable) -> f64 {
    let n = table.n as f64;
    let (rows, cols) = (table.row_sums(), table.col_sums());
    let (hu, hv) = (entropy(&rows, n), entropy(&cols, n));
    if is_bijection(table) {
        return 1.0;
    }
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    (mi / (hu * hv).sqrt()).clamp(0.0, 1.0)
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(table: &ContingencyTable) -> Result<f64> {
    if table.n < 2 {
        return Err(VtccError::Contract("ARI needs at least 2 samples".into()));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_sums().into_iter().map(pairs).sum();
    let b: f64 = table.col_sums().into_iter().map(pairs).sum();
    let expected = a * b / pairs(table.n);
    let max = 0.5 * (a + b);
    if max - expected == 0.0 {
        // both partitions are all-singletons or all-one-cluster
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Best one-to-one cluster-to-class mapping and its accuracy.
pub fn best_mapping(table: &ContingencyTable) -> Result<(Vec<usize>, f64)> {
    let rows = table.counts.len();
    let cols = table.counts.first().map_or(0, Vec::len);
    let k = rows.max(cols);
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| -(table.counts.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let mapping = hungarian(&cost)?;
    let hits: f64 = -crate::hungarian::assignment_cost(&cost, &mapping);
    Ok((mapping[..rows].to_vec(), hits / table.n as f64))
}

pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(best_mapping(&ContingencyTable::new(pred, truth)?)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    /// Number of samples assigned to each cluster.
    pub cluster_sizes: Vec<usize>,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[usize], truth: &[usize], clusters: usize) -> Result<Self> {
        let table = ContingencyTable::new(pred, truth)?;
        let mut cluster_sizes = vec![0; clusters.max(table.counts.len())];
        for &p in pred {
            cluster_sizes[p] += 1;
        }
        Ok(MetricsReport {
            nmi: nmi(&table),
            acc: best_mapping(&table)?.1,
            ari: ari(&table)?,
            cluster_sizes,
            n: pred.len(),
        })
    }

    /// Share of samples in the most populated cluster.
    pub fn largest_cluster_fraction(&self) -> f64 {
        self.cluster_sizes.iter().copied().max().unwrap_or(0) as f64 / self.n.max(1) as f64
    }

    /// Entropy of the hard cluster-size histogram.
    pub fn size_entropy(&self) -> f64 {
        let sizes: Vec<u64> = self.cluster_sizes.iter().map(|&s| s as u64).collect();
        entropy(&sizes, self.n.max(1) as f64)
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "nmi={:.6}", self.nmi)?;
        writeln!(f, "acc={:.6}", self.acc)?;
        write!(f, "ari={:.6}", self.ari)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        let t = ContingencyTable::new(&[0, 0, 1, 1, 2], &[0, 1, 0, 1, 1]).unwrap();
        assert_eq!(t.counts, vec![vec![1, 1], vec![1, 1], vec![0, 1]]);
        assert_eq!(t.n, 5);
        assert!(ContingencyTable::new(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nmi_values() {
        let t = ContingencyTable::from_counts(vec![vec![5, 1], vec![1, 5]]).unwrap();
        assert!((nmi(&t) - 0.349_977_578_351_645_8).abs() < 1e-12);
        let same = ContingencyTable::new(&[0, 1, 2, 1], &[2, 0, 1, 0]).unwrap();
        assert!((nmi(&same) - 1.0).abs() < 1e-12);
        let constant = ContingencyTable::new(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap();
        assert_eq!(nmi(&constant), 0.0);
        let single = ContingencyTable::new(&[0, 0], &[0, 0]).unwrap();
        assert_eq!(nmi(&single), 1.0);
    }

    #[test]
    fn ari_values() {
        let t = ContingencyTable::new(&[0, 0, 1, 1, 1], &[0, 0, 0, 1, 1]).unwrap();
        assert!((ari(&t).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let constant = ContingencyTable::new(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(ari(&constant).unwrap(), 0.0);
        let same = ContingencyTable::new(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(ari(&same).unwrap(), 1.0);
        assert!(ari(&ContingencyTable::new(&[0], &[0]).unwrap()).is_err());
    }

    #[test]
    fn accuracy_values() {
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert_eq!(clustering_accuracy(&[2, 2, 0, 1], &[0, 0, 1, 2]).unwrap(), 1.0);
        // more predicted clusters than classes
        assert_eq!(clustering_accuracy(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap(), 0.5);
    }

    #[test]
    fn report_sizes() {
        let r = MetricsReport::compute(&[0, 0, 0, 1], &[0, 0, 1, 1], 3).unwrap();
        assert_eq!(r.cluster_sizes, vec![3, 1, 0]);
        assert_eq!(r.largest_cluster_fraction(), 0.75);
        assert_eq!(r.to_string().lines().count(), 3);
    }
}
