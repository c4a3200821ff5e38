//! Returns, distances and summary statistics.

use crate::error::{Error, Result};

/// `Σ_t γ^t · r_{t+1}`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} outside (0, 1)"
        )));
    }
    let mut sum = KahanSum::default();
    let mut discount = 1.0;
    for &r in rewards {
        sum.add(discount * r);
        discount *= gamma;
    }
    Ok(sum.value())
}

/// `Σ_i |p_i - q_i|`, twice the total variation distance.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for v in [p, q] {
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Compensated summation (Neumaier's variant).
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sample mean and the half-width of its normal-approximation 95% interval.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<KahanSum>().value() / n;
    let var = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<KahanSum>()
        .value()
        / (n - 1.0);
    Ok((mean, 1.96 * (var / n).sqrt()))
}

/// Empirical CCDF: each distinct value with the fraction of samples `>=` it,
/// ascending by value.
pub fn ccdf_export(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("NaN sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut table = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i == 0 || sorted[i - 1] != v {
            table.push((v, (sorted.len() - i) as f64 / n));
        }
    }
    Ok(table)
}
