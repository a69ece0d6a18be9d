//! Weight functions on the half-line and their structural checks.
//!
//! A weight is a nonnegative nondecreasing continuous function on `[0, inf)`.
//! The admissibility conditions checked here are: superlinear growth of
//! `phi(x)/x`, the doubling bound `2*phi(x) <= phi(h*x) + K_h` for every
//! `h > 1`, and convexity of `psi(x) = phi(e^x)`.

use crate::conjugate::PointwiseConjugate;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridScale, GridSpec};
use crate::numeric::{bisect_boundary, refine_max};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A weight function with metadata and an optional exact Young conjugate.
#[derive(Clone)]
pub struct WeightFunction {
    name: String,
    params: Vec<f64>,
    eval: EvalFn,
    exact_conjugate: Option<EvalFn>,
    convex_on_halfline: Option<bool>,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("convex_on_halfline", &self.convex_on_halfline)
            .finish()
    }
}

impl WeightFunction {
    pub fn new(
        name: impl Into<String>,
        params: Vec<f64>,
        eval: EvalFn,
        exact_conjugate: Option<EvalFn>,
        convex_on_halfline: Option<bool>,
    ) -> Self {
        Self { name: name.into(), params, eval, exact_conjugate, convex_on_halfline }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn evaluator(&self) -> EvalFn {
        Arc::clone(&self.eval)
    }

    pub fn exact_conjugate(&self) -> Option<EvalFn> {
        self.exact_conjugate.clone()
    }

    pub fn convex_on_halfline(&self) -> Option<bool> {
        self.convex_on_halfline
    }

    /// Weight backed by a user table, linearly interpolated, extended left by
    /// the first value and right by the final slope.
    pub fn from_table(table: GridFunction) -> Result<Self> {
        for w in table.values().windows(2) {
            if w[1] < w[0] {
                return Err(Error::Precondition(format!(
                    "user table is not nondecreasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if table.values().iter().any(|&v| v < 0.0) {
            return Err(Error::Precondition("user table has negative values".into()));
        }
        let n = table.len();
        let last_slope = {
            let xs = table.xs();
            let vs = table.values();
            (vs[n - 1] - vs[n - 2]) / (xs[n - 1] - xs[n - 2])
        };
        let (x_end, v_end) = (table.xs()[n - 1], table.values()[n - 1]);
        let t = table.clone();
        let eval: EvalFn = Arc::new(move |x| {
            if x > x_end {
                v_end + last_slope * (x - x_end)
            } else {
                t.interpolate(x)
            }
        });
        Ok(Self::new("table", Vec::new(), eval, None, None))
    }

    /// Largest `x <= hi` where the evaluator is finite.
    pub fn finite_cap(&self, hi: f64) -> f64 {
        let eval = Arc::clone(&self.eval);
        bisect_boundary(move |x| eval(x).is_finite(), hi)
    }
}

/// Built-in weights.
///
/// * `exp_power` with parameter `alpha > 0`: `phi(x) = exp(x^alpha)`
/// * `exp`: `phi(x) = exp(x)`
/// * `power` with parameter `p > 1`: `phi(x) = x^p` (fails the doubling
///   condition for small `h`; kept as a negative control)
pub fn make_weight(name: &str, params: &[f64]) -> Result<WeightFunction> {
    match name {
        "exp_power" => {
            let [alpha] = params else {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: format!("exp_power takes one parameter, got {}", params.len()),
                });
            };
            let alpha = *alpha;
            if !(alpha > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    reason: format!("need alpha > 0, got {alpha}"),
                });
            }
            let eval: EvalFn = Arc::new(move |x: f64| x.powf(alpha).exp());
            let exact = (alpha == 1.0).then(exp_exact_conjugate);
            Ok(WeightFunction::new("exp_power", vec![alpha], eval, exact, Some(alpha >= 1.0)))
        }
        "exp" => {
            if !params.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: "exp takes no parameters".into(),
                });
            }
            let eval: EvalFn = Arc::new(|x: f64| x.exp());
            Ok(WeightFunction::new("exp", vec![], eval, Some(exp_exact_conjugate()), Some(true)))
        }
        "power" => {
            let [p] = params else {
                return Err(Error::InvalidParameter {
                    name: "params",
                    reason: format!("power takes one parameter, got {}", params.len()),
                });
            };
            let p = *p;
            if !(p > 1.0) {
                return Err(Error::InvalidParameter {
                    name: "p",
                    reason: format!("need p > 1, got {p}"),
                });
            }
            let eval: EvalFn = Arc::new(move |x: f64| x.powf(p));
            let q = p / (p - 1.0);
            let exact: EvalFn = Arc::new(move |x: f64| {
                if x <= 0.0 {
                    0.0
                } else {
                    (p - 1.0) * (x / p).powf(q)
                }
            });
            Ok(WeightFunction::new("power", vec![p], eval, Some(exact), Some(true)))
        }
        "table" => Err(Error::Precondition(
            "table weights carry their own samples; build them with WeightFunction::from_table".into(),
        )),
        other => Err(Error::UnknownName(other.to_string())),
    }
}

// sup_{y >= 0} (x*y - e^y): x ln x - x for x >= 1, else -1 (supremum at y = 0).
fn exp_exact_conjugate() -> EvalFn {
    Arc::new(|x: f64| if x >= 1.0 { x * x.ln() - x } else { -1.0 })
}

/// `psi(x) = phi(e^x)`. The result is evaluable on all of the real line as
/// long as the source weight is total on `(0, inf)`.
pub fn compose_exp(w: &WeightFunction) -> WeightFunction {
    let inner = w.evaluator();
    let eval: EvalFn = Arc::new(move |x: f64| inner(x.exp()));
    WeightFunction::new(format!("{}_of_exp", w.name()), w.params().to_vec(), eval, None, None)
}

/// Outcome of a doubling-constant estimate.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DoublingOutcome {
    Finite { k: f64, argmax: f64 },
    Divergent { tail_growth: f64 },
}

impl DoublingOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, DoublingOutcome::Finite { .. })
    }

    pub fn k(&self) -> Option<f64> {
        match self {
            DoublingOutcome::Finite { k, .. } => Some(*k),
            DoublingOutcome::Divergent { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityOptions {
    /// phi(x)/x must exceed this at the end of the probe window.
    pub superlinear_threshold: f64,
    /// Relative tolerance for monotonicity and second-difference checks.
    pub rel_tol: f64,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        Self { superlinear_threshold: 1e3, rel_tol: 1e-9 }
    }
}

/// Grid-witnessed admissibility of a weight.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub superlinear_ok: bool,
    /// phi(x)/x over the final quarter of the probe window.
    pub superlinear_ratios: Vec<f64>,
    pub doubling: Vec<(f64, DoublingOutcome)>,
    pub log_convexity_ok: bool,
    pub worst_second_difference: f64,
    pub probe_grid: GridSpec,
    pub warnings: Vec<String>,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.superlinear_ok
            && self.log_convexity_ok
            && self.doubling.iter().all(|(_, o)| o.is_finite())
    }
}

/// Default probe window for weights. `exp_power` weights overflow beyond
/// roughly x = 30 in double precision for alpha = 2, so that is the
/// documented default window; overflowing points are dropped with a warning.
pub fn default_weight_grid() -> GridSpec {
    GridSpec { lo: 1e-3, hi: 30.0, count: 2048, scale: GridScale::Logarithmic }
}

pub fn check_admissibility(
    w: &WeightFunction,
    grid: &GridSpec,
    h_list: &[f64],
    opts: &AdmissibilityOptions,
) -> Result<AdmissibilityReport> {
    for &h in h_list {
        if !(h > 1.0) {
            return Err(Error::InvalidParameter {
                name: "h_list",
                reason: format!("doubling ratios need h > 1, got {h}"),
            });
        }
    }
    let mut warnings = Vec::new();
    let all_points = grid.points();
    let points: Vec<f64> = all_points.iter().copied().filter(|&x| w.evaluate(x).is_finite()).collect();
    if points.len() < all_points.len() {
        warnings.push(format!(
            "{} probe points dropped where the weight overflows",
            all_points.len() - points.len()
        ));
    }
    if points.len() < 32 {
        warnings.push("probe grid too coarse to witness tail behavior".into());
    }

    // Condition 1: phi(x)/x increasing over the tail quarter and large at the end.
    let tail_start = points.len() - points.len() / 4;
    let ratios: Vec<f64> = points[tail_start..].iter().map(|&x| w.evaluate(x) / x).collect();
    let ratios_increasing = ratios
        .windows(2)
        .all(|p| p[1] >= p[0] - opts.rel_tol * (1.0 + p[0].abs()));
    let superlinear_ok =
        ratios_increasing && ratios.last().copied().unwrap_or(0.0) > opts.superlinear_threshold;

    // Condition 2 per h. The sup over [0, inf) is truncated to the probe
    // window; x = 0 is always probed since built-ins attain the sup there.
    let mut doubling = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let d = |x: f64| 2.0 * w.evaluate(x) - w.evaluate(h * x);
        let mut pts: Vec<f64> = Vec::with_capacity(points.len() + 1);
        pts.push(0.0);
        pts.extend(points.iter().copied().filter(|&x| d(x).is_finite()));
        if pts.len() < 16 {
            warnings.push(format!("h = {h}: too few finite probes for the doubling check"));
        }
        let vals: Vec<f64> = pts.iter().map(|&x| d(x)).collect();
        let tail = vals.len() - vals.len() / 4;
        let tail_decreasing = vals[tail..]
            .windows(2)
            .all(|p| p[1] <= p[0] + opts.rel_tol * (1.0 + p[0].abs()));
        if tail_decreasing {
            let (bi, _) = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, v)| (i, *v))
                .unwrap();
            let lo = if bi == 0 { pts[0] } else { pts[bi - 1] };
            let hi = if bi + 1 == pts.len() { pts[bi] } else { pts[bi + 1] };
            let (argmax, k) = refine_max(d, lo, hi, 200);
            doubling.push((h, DoublingOutcome::Finite { k, argmax }));
        } else {
            let tail_growth = vals[vals.len() - 1] - vals[tail];
            doubling.push((h, DoublingOutcome::Divergent { tail_growth }));
        }
    }

    // Condition 3: second differences of psi(x) = phi(e^x) on a uniform grid.
    let psi = compose_exp(w);
    let psi_hi = {
        let cap = w.finite_cap(grid.hi);
        cap.ln()
    };
    let psi_grid = GridSpec::linear(0.0, psi_hi.max(1.0), grid.count)?;
    let psi_vals: Vec<f64> = psi_grid.points().iter().map(|&x| psi.evaluate(x)).collect();
    let mut worst_second_difference = f64::INFINITY;
    for win in psi_vals.windows(3) {
        let dd = win[2] - 2.0 * win[1] + win[0];
        let norm = dd / (1.0 + win[1].abs());
        if norm < worst_second_difference {
            worst_second_difference = norm;
        }
    }
    let log_convexity_ok = worst_second_difference >= -opts.rel_tol;

    Ok(AdmissibilityReport {
        superlinear_ok,
        superlinear_ratios: ratios,
        doubling,
        log_convexity_ok,
        worst_second_difference,
        probe_grid: *grid,
        warnings,
    })
}

/// Doubling constant on the psi side: `K = sup 2*psi(x) - psi(x + ln h)`.
/// The sup runs over the whole real line, so the probe grid may (and for
/// built-ins should) extend to negative x.
pub fn doubling_condition_psi(
    psi: &WeightFunction,
    h: f64,
    grid: &GridSpec,
) -> Result<DoublingOutcome> {
    if !(h > 1.0) {
        return Err(Error::InvalidParameter { name: "h", reason: format!("need h > 1, got {h}") });
    }
    let shift = h.ln();
    let d = |x: f64| 2.0 * psi.evaluate(x) - psi.evaluate(x + shift);
    let pts: Vec<f64> = grid.points().into_iter().filter(|&x| d(x).is_finite()).collect();
    if pts.len() < 16 {
        return Err(Error::Precondition("too few finite probes for the psi doubling check".into()));
    }
    let vals: Vec<f64> = pts.iter().map(|&x| d(x)).collect();
    let tail = vals.len() - vals.len() / 4;
    let tail_decreasing = vals[tail..].windows(2).all(|p| p[1] <= p[0] + 1e-9 * (1.0 + p[0].abs()));
    if !tail_decreasing {
        return Ok(DoublingOutcome::Divergent { tail_growth: vals[vals.len() - 1] - vals[tail] });
    }
    let (bi, _) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, v)| (i, *v))
        .unwrap();
    let lo = if bi == 0 { pts[0] } else { pts[bi - 1] };
    let hi = if bi + 1 == pts.len() { pts[bi] } else { pts[bi + 1] };
    let (argmax, k) = refine_max(d, lo, hi, 200);
    Ok(DoublingOutcome::Finite { k, argmax })
}

#[derive(Debug, Clone, Copy)]
pub struct RegularizeOptions {
    /// Geometric step of the junction scan.
    pub junction_step: f64,
    /// Maximum number of junction candidates before giving up.
    pub max_scan: usize,
    /// High end of the window on which the conjugate gaps s, s1 are measured.
    pub gap_hi: f64,
    pub gap_count: usize,
}

impl Default for RegularizeOptions {
    fn default() -> Self {
        Self { junction_step: 1.05, max_scan: 220, gap_hi: 160.0, gap_count: 1025 }
    }
}

/// A weight patched near the origin so that `phi1(x)/x -> 0` as `x -> 0+`.
#[derive(Debug, Clone)]
pub struct Regularized {
    pub weight: WeightFunction,
    /// End of the quadratic patch; the weight is untouched from here on.
    pub junction: f64,
    /// s: sup of |phi* - phi1*| over the gap window.
    pub phi_star_gap: f64,
    /// s1: sup of |psi* - psi1*| over the gap window.
    pub psi_star_gap: f64,
    pub gap_window: (f64, f64),
}

/// Replaces the weight on `[0, j]` with the quadratic `phi(j) * (x/j)^2`,
/// where the junction `j` is the smallest point `>= d` at which the patch
/// slope `2*phi(j)/j` does not exceed the weight's right slope. A junction
/// strictly above the requested `d` is reported, not an error: for weights
/// like `exp` no continuous convex sub-linear patch exists on `[0, 1]`.
pub fn regularize_at_zero(w: &WeightFunction, d: f64) -> Result<Regularized> {
    regularize_at_zero_with(w, d, &RegularizeOptions::default())
}

pub fn regularize_at_zero_with(
    w: &WeightFunction,
    d: f64,
    opts: &RegularizeOptions,
) -> Result<Regularized> {
    if !(d > 0.0) {
        return Err(Error::InvalidParameter { name: "d", reason: format!("need d > 0, got {d}") });
    }
    match w.convex_on_halfline() {
        Some(true) => {}
        Some(false) => {
            return Err(Error::Precondition(format!(
                "weight `{}` is not convex on the half-line",
                w.name()
            )))
        }
        None => {
            let probe = GridSpec::linear(0.0, 8.0 * d.max(1.0), 2049)?;
            let vals: Vec<f64> = probe.points().iter().map(|&x| w.evaluate(x)).collect();
            for win in vals.windows(3) {
                if win[2] - 2.0 * win[1] + win[0] < -1e-9 * (1.0 + win[1].abs()) {
                    return Err(Error::Precondition(
                        "weight failed the numeric convexity witness".into(),
                    ));
                }
            }
        }
    }

    let mut junction = None;
    let mut cand = d;
    for _ in 0..opts.max_scan {
        if junction_feasible(w, cand) && patch_convex_witness(w, cand) {
            junction = Some(cand);
            break;
        }
        cand *= opts.junction_step;
    }
    let Some(j) = junction else {
        return Err(Error::RegularizationInfeasible(format!(
            "no junction in [{d}, {cand}] admits a convex quadratic patch"
        )));
    };

    let weight = patched_weight(w, j);

    // Measure s and s1 by conjugating both weights pointwise on a shared window.
    let xs = GridSpec::linear(0.0, opts.gap_hi, opts.gap_count)?.points();
    let phi_star_gap = conjugate_gap(w, &weight, &xs, false)?;
    let psi_star_gap = {
        let psi = compose_exp(w);
        let psi1 = compose_exp(&weight);
        conjugate_gap(&psi, &psi1, &xs, true)?
    };

    Ok(Regularized { weight, junction: j, phi_star_gap, psi_star_gap, gap_window: (0.0, opts.gap_hi) })
}

fn junction_feasible(w: &WeightFunction, j: f64) -> bool {
    let value = w.evaluate(j);
    if !value.is_finite() || value <= 0.0 {
        return false;
    }
    let left_slope = 2.0 * value / j;
    let delta = 1e-6 * j.max(1.0);
    let right_slope = (w.evaluate(j + delta) - value) / delta;
    right_slope.is_finite() && left_slope <= right_slope * (1.0 + 1e-9) + 1e-12
}

fn patch_convex_witness(w: &WeightFunction, j: f64) -> bool {
    let patched = patched_weight(w, j);
    let probe = match GridSpec::linear(0.0, 4.0 * j, 2049) {
        Ok(g) => g,
        Err(_) => return false,
    };
    let vals: Vec<f64> = probe.points().iter().map(|&x| patched.evaluate(x)).collect();
    vals.windows(3)
        .all(|win| win[2] - 2.0 * win[1] + win[0] >= -1e-9 * (1.0 + win[1].abs()))
}

fn patched_weight(w: &WeightFunction, j: f64) -> WeightFunction {
    let inner = w.evaluator();
    let scale = w.evaluate(j) / (j * j);
    let eval: EvalFn = Arc::new(move |x: f64| if x < j { scale * x * x } else { inner(x) });
    WeightFunction::new(
        format!("{}_regularized", w.name()),
        w.params().to_vec(),
        eval,
        None,
        Some(true),
    )
}

fn conjugate_gap(
    a: &WeightFunction,
    b: &WeightFunction,
    xs: &[f64],
    nondecreasing_from_negative: bool,
) -> Result<f64> {
    let x_max = xs.last().copied().unwrap_or(1.0);
    // psi lives on the whole line but its conjugate sup runs over y >= 0.
    let lo = 0.0;
    let _ = nondecreasing_from_negative;
    let conj_a = match a.exact_conjugate() {
        Some(exact) => PointwiseConjugate::exact(exact),
        None => PointwiseConjugate::scan(a.evaluator(), lo, sup_window(a, x_max), 2048, 160),
    };
    let conj_b = PointwiseConjugate::scan(b.evaluator(), lo, sup_window(b, x_max), 2048, 160);
    let mut gap = 0.0_f64;
    for &x in xs {
        let va = conj_a.eval(x);
        let vb = conj_b.eval(x);
        if !va.is_finite() || !vb.is_finite() {
            return Err(Error::NonFinite { context: "conjugate gap".into(), x });
        }
        gap = gap.max((va - vb).abs());
    }
    Ok(gap)
}

/// Window high end for `sup_y (x*y - g(y))`: doubles `y` until the secant
/// slope of `g` exceeds every slope that will be queried, so maximizers stay
/// interior; capped where `g` stops being finite.
pub fn sup_window(g: &WeightFunction, x_max: f64) -> f64 {
    let cap = g.finite_cap(1e9);
    let mut y = 1.0_f64;
    while y < cap / 2.0 {
        let slope = (g.evaluate(2.0 * y) - g.evaluate(y)) / y;
        if !slope.is_finite() || slope > 2.0 * x_max.max(1.0) {
            break;
        }
        y *= 2.0;
    }
    (2.0 * y).min(cap * 0.999)
}
