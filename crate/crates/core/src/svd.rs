//! Standardized SVD basis for scenario feature vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::Category;

/// Slot layout of a feature vector: `series` resampled to `grid_length`
/// points each, followed by one slot per scalar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub grid_length: usize,
    pub series: Vec<String>,
    pub scalars: Vec<String>,
}

impl FeatureLayout {
    pub fn dimension(&self) -> usize {
        self.grid_length * self.series.len() + self.scalars.len()
    }

    /// Slot range of series `name`.
    pub fn series_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let k = self.series.iter().position(|s| s == name)?;
        Some(k * self.grid_length..(k + 1) * self.grid_length)
    }

    pub fn scalar_slot(&self, name: &str) -> Option<usize> {
        let k = self.scalars.iter().position(|s| s == name)?;
        Some(self.grid_length * self.series.len() + k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdBasis {
    pub category: Category,
    pub layout: FeatureLayout,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub singular_values: Vec<f64>,
    /// Orthonormal components ordered by decreasing singular value.
    pub components: Vec<Vec<f64>>,
}

const ZERO_VARIANCE: f64 = 1e-12;

impl SvdBasis {
    /// Fits the basis to feature rows that follow `layout`.
    pub fn fit(category: Category, layout: FeatureLayout, rows: &[Vec<f64>]) -> Result<Self> {
        let p = layout.dimension();
        if rows.len() < 2 {
            return Err(Error::DegenerateBasis(format!(
                "{category}: need at least 2 instances, got {}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Dimension {
                expected: p,
                got: bad.len(),
            });
        }
        let n = rows.len() as f64;
        let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let stds: Vec<f64> = (0..p)
            .map(|j| (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        if stds.iter().all(|&s| s <= ZERO_VARIANCE) {
            return Err(Error::DegenerateBasis(format!(
                "{category}: corpus has zero variance in every slot"
            )));
        }
        let scales: Vec<f64> = stds
            .iter()
            .map(|&s| if s <= ZERO_VARIANCE { 1.0 } else { s })
            .collect();
        // zero rows pad a short corpus so the right singular vectors span every slot
        let m = rows.len().max(p);
        let z = DMatrix::from_fn(m, p, |i, j| {
            rows.get(i).map_or(0.0, |r| (r[j] - means[j]) / scales[j])
        });
        let svd = z.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let singular_values = order.iter().map(|&k| svd.singular_values[k]).collect();
        let components = order
            .iter()
            .map(|&k| {
                let mut c: Vec<f64> = v_t.row(k).iter().copied().collect();
                let pivot = c
                    .iter()
                    .copied()
                    .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                    .unwrap_or(0.0);
                if pivot < 0.0 {
                    c.iter_mut().for_each(|x| *x = -*x);
                }
                c
            })
            .collect();
        Ok(SvdBasis {
            category,
            layout,
            means,
            scales,
            singular_values,
            components,
        })
    }

    pub fn dimension(&self) -> usize {
        self.means.len()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: len,
            });
        }
        Ok(())
    }

    /// Coefficients of the first `d` components.
    pub fn reduce(&self, features: &[f64], d: usize) -> Result<Vec<f64>> {
        self.check_len(features.len())?;
        if d > self.components.len() {
            return Err(Error::Dimension {
                expected: self.components.len(),
                got: d,
            });
        }
        let z: Vec<f64> = features
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        Ok(self.components[..d]
            .iter()
            .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Feature vector from coefficients of the leading components.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() > self.components.len() {
            return Err(Error::Dimension {
                expected: self.components.len(),
                got: coefficients.len(),
            });
        }
        let mut z = vec![0.0; self.dimension()];
        for (c, comp) in coefficients.iter().zip(&self.components) {
            for (zi, vi) in z.iter_mut().zip(comp) {
                *zi += c * vi;
            }
        }
        Ok(z
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(z, (m, s))| z * s + m)
            .collect())
    }

    /// Share of squared singular-value mass in the first `d` components.
    pub fn energy(&self, d: usize) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.singular_values.iter().take(d).map(|s| s * s).sum::<f64>() / total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: SvdBasis = serde_json::from_str(s)?;
        let p = b.layout.dimension();
        for len in [b.means.len(), b.scales.len()]
            .into_iter()
            .chain(b.components.iter().map(Vec::len))
        {
            if len != p {
                return Err(Error::Dimension { expected: p, got: len });
            }
        }
        Ok(b)
    }
}
