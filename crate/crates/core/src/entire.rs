//! Entire functions: complex evaluation, derivatives by Cauchy-circle
//! quadrature, Taylor extension from derivative data at the origin, and
//! growth profiles along horizontal lines.
//!
//! Derivatives are never taken by finite differences: analyticity is a
//! standing hypothesis here and the circle quadrature is spectrally accurate.

use crate::error::{Error, Result};
use crate::grid::{fmt_f64, GridFunction, GridSpec};
use crate::numeric::{ln_factorial, refine_max};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

type ComplexFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;
type GrowthFn = Arc<dyn Fn(u32, f64) -> f64 + Send + Sync>;

/// An entire function with optional Taylor data and growth certificate.
#[derive(Clone)]
pub struct EntireFunction {
    name: String,
    eval: ComplexFn,
    taylor: Option<Vec<Complex64>>,
    /// `(m, y) -> bound on sup_x (1+|x+iy|)^m |f(x+iy)|`.
    growth: Option<GrowthFn>,
}

impl fmt::Debug for EntireFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntireFunction")
            .field("name", &self.name)
            .field("taylor_len", &self.taylor.as_ref().map(Vec::len))
            .finish()
    }
}

impl EntireFunction {
    pub fn new(name: impl Into<String>, eval: ComplexFn) -> Self {
        Self { name: name.into(), eval, taylor: None, growth: None }
    }

    pub fn with_taylor(mut self, coeffs: Vec<Complex64>) -> Self {
        self.taylor = Some(coeffs);
        self
    }

    pub fn with_growth(mut self, growth: GrowthFn) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.eval)(z)
    }

    pub fn eval_real(&self, x: f64) -> Complex64 {
        self.eval(Complex64::new(x, 0.0))
    }

    pub fn taylor(&self) -> Option<&[Complex64]> {
        self.taylor.as_deref()
    }

    pub fn growth_certificate(&self) -> Option<GrowthFn> {
        self.growth.clone()
    }

    pub fn scale(&self, a: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        let taylor = self.taylor.as_ref().map(|c| c.iter().map(|v| v * a).collect());
        Self {
            name: format!("{}*{a}", self.name),
            eval: Arc::new(move |z| a * inner(z)),
            taylor,
            growth: None,
        }
    }

    pub fn linear_combination(a: f64, f: &EntireFunction, b: f64, g: &EntireFunction) -> Self {
        let fe = Arc::clone(&f.eval);
        let ge = Arc::clone(&g.eval);
        Self::new(
            format!("{}*{} + {}*{}", a, f.name, b, g.name),
            Arc::new(move |z| a * fe(z) + b * ge(z)),
        )
    }
}

/// `exp(-z^2)`.
pub fn gaussian() -> EntireFunction {
    let coeffs: Vec<Complex64> = (0..=128)
        .map(|n| {
            if n % 2 == 0 {
                let k = n / 2;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(sign * (-ln_factorial(k)).exp(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    EntireFunction::new("gaussian", Arc::new(|z: Complex64| (-z * z).exp()))
        .with_taylor(coeffs)
        .with_growth(Arc::new(|m, y| {
            let half = (m as f64 / 2.0).sqrt();
            (1.0 + y.abs() + half).powi(m as i32) * (y * y).exp()
        }))
}

/// `exp(z)`.
pub fn exp_z() -> EntireFunction {
    let coeffs: Vec<Complex64> =
        (0..=128).map(|n| Complex64::new((-ln_factorial(n)).exp(), 0.0)).collect();
    EntireFunction::new("exp_z", Arc::new(|z: Complex64| z.exp())).with_taylor(coeffs)
}

/// `z^k`.
pub fn monomial(k: u32) -> EntireFunction {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k as usize + 1];
    coeffs[k as usize] = Complex64::new(1.0, 0.0);
    EntireFunction::new(format!("z^{k}"), Arc::new(move |z: Complex64| z.powu(k)))
        .with_taylor(coeffs)
}

pub fn constant(c: f64) -> EntireFunction {
    EntireFunction::new(format!("const:{c}"), Arc::new(move |_| Complex64::new(c, 0.0)))
        .with_taylor(vec![Complex64::new(c, 0.0)])
}

pub fn zero() -> EntireFunction {
    constant(0.0).with_growth(Arc::new(|_, _| 0.0))
}

/// Built-ins exposed to the batch runner.
pub fn make_entire(name: &str, params: &[f64]) -> Result<EntireFunction> {
    match name {
        "gaussian" => Ok(gaussian()),
        "zero" => Ok(zero()),
        "const" => {
            let c = match params {
                [] => 1.0,
                [c] => *c,
                _ => {
                    return Err(Error::InvalidParameter {
                        name: "params",
                        reason: "const takes at most one parameter".into(),
                    })
                }
            };
            Ok(constant(c))
        }
        other => Err(Error::UnknownName(other.to_string())),
    }
}

/// Spec'd default contour for order `n`: radius `max(1, n/3)`.
pub fn default_radius(n: u32) -> f64 {
    (n as f64 / 3.0).max(1.0)
}

/// Radius balancing factorial growth against Gaussian-type decay of Taylor
/// coefficients; a better default for rapidly decreasing functions.
pub fn balanced_radius(n: u32) -> f64 {
    (n as f64 / 2.0 + 1.0).sqrt()
}

pub fn default_nodes(n: u32) -> usize {
    (4 * n as usize).max(64)
}

/// One derivative by the Cauchy integral on the circle `|zeta - x| = radius`.
#[derive(Debug, Clone, Copy)]
pub struct CauchyDerivative {
    pub value: Complex64,
    /// |Im| / |value|; a diagnostic for functions real on the real line.
    pub imag_fraction: f64,
}

pub fn cauchy_derivative(
    f: &EntireFunction,
    x: f64,
    n: u32,
    radius: f64,
    nodes: usize,
) -> Result<CauchyDerivative> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("need radius > 0, got {radius}"),
        });
    }
    if nodes < 16 {
        return Err(Error::InvalidParameter {
            name: "nodes",
            reason: format!("need at least 16 nodes, got {nodes}"),
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..nodes {
        let theta = 2.0 * PI * k as f64 / nodes as f64;
        let zeta = Complex64::new(x + radius * theta.cos(), radius * theta.sin());
        let fv = f.eval(zeta);
        if !fv.re.is_finite() || !fv.im.is_finite() {
            return Err(Error::Precondition(format!(
                "contour overflow at |zeta - {x}| = {radius}; use a smaller radius"
            )));
        }
        let phase = Complex64::from_polar(1.0, -(n as f64) * theta);
        acc += fv * phase;
    }
    // n! / (N * R^n), carried in logs for large n
    let scale = (ln_factorial(n) - n as f64 * radius.ln()).exp() / nodes as f64;
    let value = acc * scale;
    let imag_fraction = value.im.abs() / value.norm().max(1e-300);
    Ok(CauchyDerivative { value, imag_fraction })
}

/// `f^{(n)}(x)` for `0 <= n <= n_max` over a real grid.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    xs: Vec<f64>,
    n_max: u32,
    values: Vec<Vec<Complex64>>,
    radii: Vec<Vec<f64>>,
}

impl DerivativeTable {
    pub fn from_cauchy(
        f: &EntireFunction,
        xs: &[f64],
        n_max: u32,
        radius: impl Fn(u32) -> f64,
        nodes: impl Fn(u32) -> usize,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(xs.len());
        let mut radii = Vec::with_capacity(xs.len());
        for &x in xs {
            let mut row = Vec::with_capacity(n_max as usize + 1);
            let mut rrow = Vec::with_capacity(n_max as usize + 1);
            for n in 0..=n_max {
                let r = radius(n);
                let d = cauchy_derivative(f, x, n, r, nodes(n))?;
                row.push(d.value);
                rrow.push(r);
            }
            values.push(row);
            radii.push(rrow);
        }
        Ok(Self { xs: xs.to_vec(), n_max, values, radii })
    }

    /// Synthetic table from closed-form derivatives; entries carry a nominal
    /// radius of 1.
    pub fn from_exact(xs: &[f64], n_max: u32, f: impl Fn(f64, u32) -> Complex64) -> Result<Self> {
        let mut values = Vec::with_capacity(xs.len());
        for &x in xs {
            let row: Vec<Complex64> = (0..=n_max).map(|n| f(x, n)).collect();
            for (n, v) in row.iter().enumerate() {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("derivative table entry n = {n}"),
                        x,
                    });
                }
            }
            values.push(row);
        }
        let radii = vec![vec![1.0; n_max as usize + 1]; xs.len()];
        Ok(Self { xs: xs.to_vec(), n_max, values, radii })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn value(&self, i: usize, n: u32) -> Complex64 {
        self.values[i][n as usize]
    }

    pub fn radius_used(&self, i: usize, n: u32) -> f64 {
        self.radii[i][n as usize]
    }

    pub fn scale(&self, a: f64) -> Self {
        let values = self.values.iter().map(|row| row.iter().map(|v| v * a).collect()).collect();
        Self { xs: self.xs.clone(), n_max: self.n_max, values, radii: self.radii.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.xs != other.xs || self.n_max != other.n_max {
            return Err(Error::Precondition("derivative tables are not aligned".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
            .collect();
        Ok(Self { xs: self.xs.clone(), n_max: self.n_max, values, radii: self.radii.clone() })
    }

    /// CSV rows `x,n,value_re,value_im,radius`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "x,n,value_re,value_im,radius")?;
        for (i, &x) in self.xs.iter().enumerate() {
            for n in 0..=self.n_max {
                let v = self.value(i, n);
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_f64(x),
                    n,
                    fmt_f64(v.re),
                    fmt_f64(v.im),
                    fmt_f64(self.radius_used(i, n))
                )?;
            }
        }
        Ok(())
    }
}

/// Entire extension assembled from derivative data at the origin.
#[derive(Debug, Clone)]
pub struct TaylorExtension {
    pub function: EntireFunction,
    pub degree: u32,
    /// Estimated sup of the dropped tail on `|z| <= r_probe`.
    pub tail_bound: f64,
    /// Worst relative mismatch against the table's 0th-derivative row.
    pub realline_max_err: f64,
}

/// Builds the power-series extension from the table column at x = 0.
///
/// The coefficient tail on `|z| <= r_probe` must close below `tol` within the
/// table's order budget, witnessed by a geometric bound on paired terms
/// (pairing rides out parity-zero coefficients).
pub fn taylor_extend(table: &DerivativeTable, r_probe: f64, tol: f64) -> Result<TaylorExtension> {
    let i0 = table
        .xs()
        .iter()
        .position(|&x| x.abs() < 1e-12)
        .ok_or_else(|| Error::Precondition("derivative table has no x = 0 column".into()))?;
    let n_max = table.n_max();
    let coeffs: Vec<Complex64> = (0..=n_max)
        .map(|n| table.value(i0, n) * (-ln_factorial(n)).exp())
        .collect();
    let t: Vec<f64> = coeffs.iter().enumerate().map(|(n, c)| c.norm() * r_probe.powi(n as i32)).collect();

    let pairs: Vec<f64> = t.chunks(2).map(|c| c.iter().sum()).collect();
    let mut rho: f64 = 0.0;
    let mut ratios_seen = 0;
    for w in pairs.windows(2).rev().take(4) {
        if w[0] > 0.0 {
            rho = rho.max(w[1] / w[0]);
            ratios_seen += 1;
        }
    }
    let all_zero = t.iter().all(|&v| v == 0.0);
    if !all_zero && (ratios_seen == 0 || rho >= 1.0) {
        return Err(Error::InsufficientData(format!(
            "coefficient tail is not contracting on |z| <= {r_probe} (pair ratio {rho:.3})"
        )));
    }
    let beyond = if all_zero { 0.0 } else { pairs.last().unwrap() * rho / (1.0 - rho) };

    // smallest degree whose dropped tail stays below tol
    let mut suffix = vec![0.0; t.len() + 1];
    for n in (0..t.len()).rev() {
        suffix[n] = suffix[n + 1] + t[n];
    }
    let mut degree = None;
    for n in 0..t.len() {
        if suffix[n + 1] + beyond <= tol {
            degree = Some(n as u32);
            break;
        }
    }
    let Some(degree) = degree else {
        return Err(Error::InsufficientData(format!(
            "tail bound {:.3e} does not close below {tol} within n_max = {n_max}",
            suffix[t.len()] + beyond
        )));
    };
    let tail_bound = suffix[degree as usize + 1] + beyond;

    let kept: Vec<Complex64> = coeffs[..=degree as usize].to_vec();
    let eval: ComplexFn = Arc::new(move |z: Complex64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in kept.iter().rev() {
            acc = acc * z + c;
        }
        acc
    });
    let function = EntireFunction::new("taylor_extension", eval).with_taylor(coeffs);

    let mut realline_max_err = 0.0_f64;
    for (i, &x) in table.xs().iter().enumerate() {
        let fx = function.eval_real(x);
        let tx = table.value(i, 0);
        let err = (fx - tx).norm() / (1.0 + tx.norm());
        realline_max_err = realline_max_err.max(err);
    }

    Ok(TaylorExtension { function, degree, tail_bound, realline_max_err })
}

/// `sup_x (1 + |x + iy|)^m |f(x + iy)|` per `y`, with edge diagnostics.
#[derive(Debug, Clone)]
pub struct GrowthProfile {
    pub grid: GridFunction,
    /// Fraction of rows whose sup sat on the x-window edge.
    pub boundary_fraction: f64,
}

pub fn growth_profile(
    f: &EntireFunction,
    m: u32,
    y_grid: &GridSpec,
    x_window: &GridSpec,
) -> Result<GrowthProfile> {
    let xs = x_window.points();
    let ys = y_grid.points();
    let mut vals = Vec::with_capacity(ys.len());
    let mut edge_hits = 0usize;
    for &y in &ys {
        let h = |x: f64| {
            let z = Complex64::new(x, y);
            (1.0 + z.norm()).powi(m as i32) * f.eval(z).norm()
        };
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (i, &x) in xs.iter().enumerate() {
            let v = h(x);
            if v.is_finite() && v > best {
                best = v;
                arg = i;
            }
        }
        if arg == 0 || arg == xs.len() - 1 {
            edge_hits += 1;
        }
        let lo = if arg == 0 { xs[0] } else { xs[arg - 1] };
        let hi = if arg + 1 == xs.len() { xs[arg] } else { xs[arg + 1] };
        let (_, refined) = refine_max(h, lo, hi, 120);
        vals.push(refined.max(best));
    }
    let grid = GridFunction::from_samples(
        ys,
        vals,
        format!("source=growth_profile;m={m};x_window=[{},{}]", x_window.lo, x_window.hi),
    )?;
    Ok(GrowthProfile { grid, boundary_fraction: edge_hits as f64 / grid.len() as f64 })
}
