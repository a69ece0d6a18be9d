//! Sampling grids and finite sampled functions.

use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;

/// Point placement rule for a [`GridSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    Logarithmic,
}

/// A one-dimensional probe grid: `count` points from `lo` to `hi`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub scale: GridScale,
}

impl GridSpec {
    pub fn linear(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(lo, hi, count, GridScale::Linear)
    }

    pub fn logarithmic(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(lo, hi, count, GridScale::Logarithmic)
    }

    pub fn new(lo: f64, hi: f64, count: usize, scale: GridScale) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid(format!("need finite lo < hi, got [{lo}, {hi}]")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("count must be >= 2, got {count}")));
        }
        if scale == GridScale::Logarithmic && lo <= 0.0 {
            return Err(Error::InvalidGrid(format!("logarithmic grid needs lo > 0, got {lo}")));
        }
        Ok(Self { lo, hi, count, scale })
    }

    /// Strictly increasing sample points; the endpoints are hit exactly.
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        let mut pts = Vec::with_capacity(n);
        match self.scale {
            GridScale::Linear => {
                let span = self.hi - self.lo;
                for i in 0..n {
                    pts.push(self.lo + span * i as f64 / (n - 1) as f64);
                }
            }
            GridScale::Logarithmic => {
                let llo = self.lo.ln();
                let lhi = self.hi.ln();
                for i in 0..n {
                    let t = llo + (lhi - llo) * i as f64 / (n - 1) as f64;
                    pts.push(t.exp());
                }
            }
        }
        pts[0] = self.lo;
        pts[n - 1] = self.hi;
        pts
    }

    /// Same window, twice as dense (count -> 2*count - 1 keeps old points on linear grids).
    pub fn refined(&self) -> Self {
        Self { count: 2 * self.count - 1, ..*self }
    }

    /// Same density class, window stretched by `factor` on the high side.
    pub fn widened(&self, factor: f64) -> Self {
        Self { hi: self.hi * factor, ..*self }
    }
}

/// A real function sampled on a strictly increasing grid.
///
/// `meta` is a free-form provenance tag (source operation and parameters).
#[derive(Debug, Clone, Serialize)]
pub struct GridFunction {
    xs: Vec<f64>,
    values: Vec<f64>,
    pub meta: String,
}

impl GridFunction {
    pub fn from_samples(xs: Vec<f64>, values: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "xs/values length mismatch: {} vs {}",
                xs.len(),
                values.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidGrid("need at least two samples".into()));
        }
        for w in xs.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidGrid(format!(
                    "xs must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (&x, &v) in xs.iter().zip(&values) {
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "grid function value".into(), x });
            }
        }
        Ok(Self { xs, values, meta: meta.into() })
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(f64) -> f64, meta: impl Into<String>) -> Result<Self> {
        let xs = spec.points();
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::from_samples(xs, values, meta)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.values.iter().copied())
    }

    /// Piecewise-linear evaluation, constant extension outside the window.
    pub fn interpolate(&self, x: f64) -> f64 {
        let xs = &self.xs;
        if x <= xs[0] {
            return self.values[0];
        }
        if x >= xs[xs.len() - 1] {
            return self.values[xs.len() - 1];
        }
        let j = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(j) => return self.values[j],
            Err(j) => j,
        };
        let (x0, x1) = (xs[j - 1], xs[j]);
        let t = (x - x0) / (x1 - x0);
        self.values[j - 1] * (1.0 - t) + self.values[j] * t
    }

    /// Discrete slopes between consecutive samples.
    pub fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    /// CSV with a `# meta:` comment line and `x,value` header.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "# meta: {}", self.meta)?;
        writeln!(out, "x,value")?;
        for (x, v) in self.iter() {
            writeln!(out, "{},{}", fmt_f64(x), fmt_f64(v))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Shortest round-trip decimal for `v` (Rust's `Display` for f64), which stays
/// within 17 significant digits. Non-finite values are spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_points_hit_endpoints() {
        let g = GridSpec::linear(0.0, 1.0, 5).unwrap();
        let pts = g.points();
        assert_eq!(pts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn log_grid_rejects_nonpositive_lo() {
        assert!(GridSpec::logarithmic(0.0, 1.0, 4).is_err());
        assert!(GridSpec::logarithmic(1e-3, 30.0, 4).is_ok());
    }

    #[test]
    fn count_below_two_rejected() {
        assert!(GridSpec::linear(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn grid_function_rejects_non_monotone_xs() {
        let err = GridFunction::from_samples(vec![0.0, 0.0], vec![1.0, 2.0], "t");
        assert!(err.is_err());
    }

    #[test]
    fn grid_function_rejects_non_finite_values() {
        let err = GridFunction::from_samples(vec![0.0, 1.0], vec![1.0, f64::INFINITY], "t");
        assert!(err.is_err());
    }

    #[test]
    fn csv_has_meta_and_header() {
        let g = GridFunction::from_samples(vec![0.0, 1.0], vec![1.5, 2.5], "unit").unwrap();
        let csv = g.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# meta: unit");
        assert_eq!(lines.next().unwrap(), "x,value");
        assert_eq!(lines.next().unwrap(), "0,1.5");
    }

    #[test]
    fn interpolation_is_exact_at_samples() {
        let g = GridFunction::from_samples(vec![0.0, 1.0, 3.0], vec![1.0, 2.0, 0.0], "t").unwrap();
        assert_eq!(g.interpolate(1.0), 2.0);
        assert_eq!(g.interpolate(2.0), 1.0);
        assert_eq!(g.interpolate(-5.0), 1.0);
        assert_eq!(g.interpolate(9.0), 0.0);
    }
}
