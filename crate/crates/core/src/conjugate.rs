//! Discrete Young conjugation `g*(x) = sup_y (x*y - g(y))` and the checks
//! built on it: the `x ln x` upper bound for conjugates of exponentially
//! dominated functions, approximate subadditivity under the doubling
//! condition, factorial-series convergence, conjugate slope divergence, and
//! the change-of-variables identity for log-composed convex functions.
//!
//! The discrete sup is a max over grid samples (no interpolation inside the
//! sup), so every computed conjugate is a lower bound of the true one.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::numeric::{ln_factorial, refine_max};
use crate::weight::{sup_window, WeightFunction};
use serde::Serialize;
use std::sync::Arc;

type EvalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Where the discrete maximizer landed for one output point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryHit {
    Interior,
    Lower,
    Upper,
}

/// A conjugate computed on a grid, with per-point maximizer diagnostics.
#[derive(Debug, Clone)]
pub struct DiscreteConjugate {
    pub grid: GridFunction,
    pub hits: Vec<BoundaryHit>,
    pub boundary_fraction: f64,
    /// Set when more than 5% of the maximizers sat on the sup-grid boundary.
    pub truncated: bool,
}

impl DiscreteConjugate {
    pub fn value(&self, i: usize) -> f64 {
        self.grid.values()[i]
    }
}

/// Conjugate values of sampled `(ys, g(ys))` at arbitrary sorted targets.
///
/// `convex_fast` uses the monotone-maximizer merge (linear time); it requires
/// the sample slopes to be nondecreasing and must match the quadratic scan.
pub fn young_conjugate_at(
    ys: &[f64],
    gv: &[f64],
    xs: &[f64],
    convex_fast: bool,
) -> Result<(Vec<f64>, Vec<BoundaryHit>)> {
    if ys.len() != gv.len() || ys.len() < 2 {
        return Err(Error::InvalidGrid("conjugate needs matching sample arrays".into()));
    }
    for (&y, &g) in ys.iter().zip(gv) {
        if !g.is_finite() {
            return Err(Error::NonFinite { context: "conjugate input".into(), x: y });
        }
    }
    let n = ys.len();
    let mut vals = Vec::with_capacity(xs.len());
    let mut hits = Vec::with_capacity(xs.len());
    if convex_fast {
        let mut prev_slope = f64::NEG_INFINITY;
        for w in 0..n - 1 {
            let s = (gv[w + 1] - gv[w]) / (ys[w + 1] - ys[w]);
            if s < prev_slope - 1e-9 * (1.0 + prev_slope.abs()) {
                return Err(Error::Precondition(format!(
                    "samples are not convex near y = {}",
                    ys[w]
                )));
            }
            prev_slope = s;
        }
        let mut p = 0usize;
        let mut last_x = f64::NEG_INFINITY;
        for &x in xs {
            if x < last_x {
                return Err(Error::InvalidGrid("targets must be sorted ascending".into()));
            }
            last_x = x;
            while p + 1 < n && x * ys[p + 1] - gv[p + 1] >= x * ys[p] - gv[p] {
                p += 1;
            }
            vals.push(x * ys[p] - gv[p]);
            hits.push(hit_of(p, n));
        }
    } else {
        for &x in xs {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for j in 0..n {
                let v = x * ys[j] - gv[j];
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            vals.push(best);
            hits.push(hit_of(arg, n));
        }
    }
    Ok((vals, hits))
}

fn hit_of(j: usize, n: usize) -> BoundaryHit {
    if j == 0 {
        BoundaryHit::Lower
    } else if j == n - 1 {
        BoundaryHit::Upper
    } else {
        BoundaryHit::Interior
    }
}

fn assemble(xs: Vec<f64>, vals: Vec<f64>, hits: Vec<BoundaryHit>, meta: String) -> Result<DiscreteConjugate> {
    let boundary = hits.iter().filter(|h| **h != BoundaryHit::Interior).count();
    let frac = boundary as f64 / hits.len() as f64;
    let truncated = frac > 0.05;
    let meta = if truncated { format!("{meta};warning=truncated sup ({boundary} boundary maximizers)") } else { meta };
    Ok(DiscreteConjugate {
        grid: GridFunction::from_samples(xs, vals, meta)?,
        hits,
        boundary_fraction: frac,
        truncated,
    })
}

/// Young conjugate of an evaluator by quadratic scan over `y_grid`.
pub fn young_conjugate(
    g: impl Fn(f64) -> f64,
    y_grid: &GridSpec,
    x_grid: &GridSpec,
) -> Result<DiscreteConjugate> {
    let ys = y_grid.points();
    let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
    let xs = x_grid.points();
    let (vals, hits) = young_conjugate_at(&ys, &gv, &xs, false)?;
    let meta = format!("source=young_conjugate;y_window=[{},{}];y_count={}", y_grid.lo, y_grid.hi, y_grid.count);
    assemble(xs, vals, hits, meta)
}

/// Linear-time conjugate for convex samples; agrees with [`young_conjugate`].
pub fn young_conjugate_convex(
    g: impl Fn(f64) -> f64,
    y_grid: &GridSpec,
    x_grid: &GridSpec,
) -> Result<DiscreteConjugate> {
    let ys = y_grid.points();
    let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
    let xs = x_grid.points();
    let (vals, hits) = young_conjugate_at(&ys, &gv, &xs, true)?;
    let meta = format!("source=young_conjugate_convex;y_window=[{},{}];y_count={}", y_grid.lo, y_grid.hi, y_grid.count);
    assemble(xs, vals, hits, meta)
}

/// Conjugate of an already-sampled function.
pub fn young_conjugate_grid(g: &GridFunction, x_grid: &GridSpec) -> Result<DiscreteConjugate> {
    let xs = x_grid.points();
    let (vals, hits) = young_conjugate_at(g.xs(), g.values(), &xs, false)?;
    assemble(xs, vals, hits, format!("source=young_conjugate_grid;of={}", g.meta))
}

/// Pointwise conjugate evaluator: a fresh 1-D maximization per call
/// (coarse scan plus golden refinement), or an exact closed form.
#[derive(Clone)]
pub struct PointwiseConjugate {
    kind: PointwiseKind,
}

#[derive(Clone)]
enum PointwiseKind {
    Exact(EvalFn),
    Scan { g: EvalFn, lo: f64, hi: f64, scan: usize, refine: usize },
}

impl PointwiseConjugate {
    pub fn exact(f: EvalFn) -> Self {
        Self { kind: PointwiseKind::Exact(f) }
    }

    pub fn scan(g: EvalFn, lo: f64, hi: f64, scan: usize, refine: usize) -> Self {
        Self { kind: PointwiseKind::Scan { g, lo, hi, scan: scan.max(8), refine } }
    }

    /// Conjugate of a weight over `y in [0, window]`, window sized so that
    /// maximizers for arguments up to `x_max` stay interior.
    pub fn for_weight(w: &WeightFunction, x_max: f64) -> Self {
        match w.exact_conjugate() {
            Some(f) => Self::exact(f),
            None => Self::scan(w.evaluator(), 0.0, sup_window(w, x_max), 2048, 160),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_hit(x).0
    }

    pub fn eval_with_hit(&self, x: f64) -> (f64, BoundaryHit) {
        match &self.kind {
            PointwiseKind::Exact(f) => (f(x), BoundaryHit::Interior),
            PointwiseKind::Scan { g, lo, hi, scan, refine } => {
                let obj = |y: f64| x * y - g(y);
                let n = *scan;
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for j in 0..n {
                    let y = lo + (hi - lo) * j as f64 / (n - 1) as f64;
                    let v = obj(y);
                    if v.is_finite() && v > best {
                        best = v;
                        arg = j;
                    }
                }
                let step = (hi - lo) / (n - 1) as f64;
                let bl = (lo + step * arg.saturating_sub(1) as f64).max(*lo);
                let bh = (lo + step * (arg + 1) as f64).min(*hi);
                let (_, refined) = refine_max(obj, bl, bh, *refine);
                (refined.max(best), hit_of(arg, n))
            }
        }
    }
}

/// Conjugation health report: Fenchel-Young gap, biconjugate deviation on
/// interior probes, and convexity of the conjugate.
#[derive(Debug, Clone, Serialize)]
pub struct ConjugacyReport {
    #[serde(skip)]
    pub conjugate: GridFunction,
    /// min over probed pairs of g(y) + g*(x) - x*y (raw units).
    pub fenchel_young_worst_gap: f64,
    /// Same, normalized by 1 + magnitudes of the participating terms.
    pub fenchel_young_worst_gap_rel: f64,
    pub biconjugate_max_dev: f64,
    pub interior_probes: usize,
    pub slopes_monotone: bool,
    /// x-indices whose maximizer sat on the upper sup boundary (the true
    /// conjugate is +inf or the window is too small there).
    pub divergent_columns: Vec<usize>,
}

/// Conjugate twice and compare with the input on probes whose maximizers
/// stayed interior on both passes.
pub fn biconjugate_check(
    g: impl Fn(f64) -> f64,
    y_grid: &GridSpec,
    u_grid: &GridSpec,
) -> Result<ConjugacyReport> {
    let ys = y_grid.points();
    let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
    let us = u_grid.points();
    let (star, hits1) = young_conjugate_at(&ys, &gv, &us, false)?;

    // Fenchel-Young on the full pair set.
    let mut worst = f64::INFINITY;
    let mut worst_rel = f64::INFINITY;
    for (j, &y) in ys.iter().enumerate() {
        for (i, &u) in us.iter().enumerate() {
            let gap = gv[j] + star[i] - u * y;
            let rel = gap / (1.0 + gv[j].abs() + star[i].abs() + (u * y).abs());
            if gap < worst {
                worst = gap;
            }
            if rel < worst_rel {
                worst_rel = rel;
            }
        }
    }

    // Second pass back onto the y grid. Because the probes are exactly the
    // sample points of the first pass, biconjugate <= g holds exactly.
    let mut dev = 0.0_f64;
    let mut interior = 0usize;
    for (j, &y) in ys.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (i, &u) in us.iter().enumerate() {
            let v = y * u - star[i];
            if v > best {
                best = v;
                arg = i;
            }
        }
        let clean = hit_of(arg, us.len()) == BoundaryHit::Interior
            && hits1[arg] == BoundaryHit::Interior
            && hit_of(j, ys.len()) == BoundaryHit::Interior;
        if clean {
            interior += 1;
            dev = dev.max((best - gv[j]).abs());
        }
    }

    let conj = GridFunction::from_samples(us.clone(), star.clone(), "source=biconjugate_check")?;
    let slopes = conj.slopes();
    let slopes_monotone =
        slopes.windows(2).all(|p| p[1] >= p[0] - 1e-9 * (1.0 + p[0].abs()));
    let divergent_columns = hits1
        .iter()
        .enumerate()
        .filter_map(|(i, h)| (*h == BoundaryHit::Upper).then_some(i))
        .collect();

    Ok(ConjugacyReport {
        conjugate: conj,
        fenchel_young_worst_gap: worst,
        fenchel_young_worst_gap_rel: worst_rel,
        biconjugate_max_dev: dev,
        interior_probes: interior,
        slopes_monotone,
        divergent_columns,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Lemma1Grids {
    pub y: GridSpec,
    pub x: GridSpec,
}

impl Lemma1Grids {
    /// Windows sized for `psi`: the y window stays where psi is finite, the
    /// x window is the caller's argument range.
    pub fn for_psi(psi: &WeightFunction, x_hi: f64, count: usize) -> Result<Self> {
        let y_hi = sup_window(psi, x_hi);
        Ok(Self {
            y: GridSpec::linear(0.0, y_hi, count)?,
            x: GridSpec::linear(1e-3, x_hi, count)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    /// Constant used in the bound; clamped to be nonnegative.
    pub a_m: f64,
    /// Raw grid maximum of M*e^y - psi(y) (may be negative).
    pub a_m_raw: f64,
    pub argmax_y: f64,
    /// min over x of (x ln(x/M) - x + A_M - psi*(x)) / (1 + x).
    pub worst_margin_rel: f64,
    pub tail_ok: bool,
}

/// Checks `psi*(x) <= x ln(x/M) - x + A_M` with `A_M` fitted from the grid.
pub fn lemma1_check(psi: &WeightFunction, m_const: f64, grids: &Lemma1Grids) -> Result<Lemma1Report> {
    if !(m_const > 0.0) {
        return Err(Error::InvalidParameter { name: "M", reason: format!("need M > 0, got {m_const}") });
    }
    let obj = |y: f64| m_const * y.exp() - psi.evaluate(y);
    let pts = grids.y.points();
    let vals: Vec<f64> = pts.iter().map(|&y| obj(y)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "lemma1 objective".into(), x: grids.y.hi });
    }
    let tail = vals.len() - vals.len() / 4;
    let tail_ok = vals[tail..].windows(2).all(|p| p[1] <= p[0] + 1e-9 * (1.0 + p[0].abs()));
    let (bi, _) = vals.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    let lo = if bi == 0 { pts[0] } else { pts[bi - 1] };
    let hi = if bi + 1 == pts.len() { pts[bi] } else { pts[bi + 1] };
    let (argmax_y, a_m_raw) = refine_max(obj, lo, hi, 200);
    let a_m = a_m_raw.max(0.0);

    let conj = PointwiseConjugate::scan(psi.evaluator(), 0.0, grids.y.hi, 2048, 160);
    let mut worst = f64::INFINITY;
    for x in grids.x.points() {
        let bound = if x == 0.0 { a_m } else { x * (x / m_const).ln() - x + a_m };
        let margin = (bound - conj.eval(x)) / (1.0 + x);
        if margin < worst {
            worst = margin;
        }
    }

    Ok(Lemma1Report { a_m, a_m_raw, argmax_y, worst_margin_rel: worst, tail_ok })
}

#[derive(Debug, Clone, Copy)]
pub struct Lemma2Grids {
    /// Pairs (x, y) are drawn from `pair_count` uniform points on [0, pair_hi].
    pub pair_hi: f64,
    pub pair_count: usize,
    /// Window for the inner sup of the conjugate.
    pub y: GridSpec,
    /// Window on which B is fitted.
    pub b_probe: GridSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Forward {
    pub b_eps: f64,
    pub inf_g: f64,
    /// max(B, inf g) — the constant the subadditivity bound is checked with.
    pub c_eps: f64,
    /// max(B, -inf g), reported alongside since both sign conventions appear
    /// in the derivation.
    pub c_eps_alt: f64,
    /// max over pairs of the normalized violation of
    /// g*(x+y) <= g*(x) + g*(y) + eps(x+y) + C.
    pub worst_violation_rel: f64,
}

/// Forward direction: a doubling bound on `g` yields approximate
/// subadditivity of `g*` with `C = max(B, inf g)`.
pub fn lemma2_forward_check(
    g: impl Fn(f64) -> f64,
    eps: f64,
    grids: &Lemma2Grids,
) -> Result<Lemma2Forward> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("need eps > 0, got {eps}") });
    }
    let d = |x: f64| 2.0 * g(x) - g(x + eps);
    let pts = grids.b_probe.points();
    let vals: Vec<f64> = pts.iter().map(|&x| d(x)).collect();
    let tail = vals.len() - vals.len() / 4;
    let tail_decreasing = vals[tail..].windows(2).all(|p| p[1] <= p[0] + 1e-9 * (1.0 + p[0].abs()));
    if !tail_decreasing {
        return Err(Error::Precondition(format!(
            "B_eps fit diverges on the probe tail for eps = {eps}"
        )));
    }
    let (bi, _) = vals.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
    let lo = if bi == 0 { pts[0] } else { pts[bi - 1] };
    let hi = if bi + 1 == pts.len() { pts[bi] } else { pts[bi + 1] };
    let (_, b_eps) = refine_max(d, lo, hi, 200);

    let grid_min = pts.iter().map(|&x| g(x)).fold(f64::INFINITY, f64::min);
    let (_, refined_neg) = refine_max(|x| -g(x), pts[0], pts[pts.len() - 1], 200);
    let inf_g = grid_min.min(-refined_neg);

    let c_eps = b_eps.max(inf_g);
    let c_eps_alt = b_eps.max(-inf_g);

    // Conjugate on a uniform grid so that pair sums land on grid points.
    let h = grids.pair_hi / (grids.pair_count - 1) as f64;
    let m = 2 * grids.pair_count - 1;
    let xs: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
    let ys = grids.y.points();
    let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
    let (star, _) = young_conjugate_at(&ys, &gv, &xs, false)?;

    let mut worst = f64::NEG_INFINITY;
    for i in 0..grids.pair_count {
        for j in 0..grids.pair_count {
            let lhs = star[i + j];
            let rhs = star[i] + star[j] + eps * (xs[i] + xs[j]) + c_eps;
            let scale = 1.0 + lhs.abs() + star[i].abs() + star[j].abs() + eps * (xs[i] + xs[j]) + c_eps.abs();
            let viol = (lhs - rhs) / scale;
            if viol > worst {
                worst = viol;
            }
        }
    }

    Ok(Lemma2Forward { b_eps, inf_g, c_eps, c_eps_alt, worst_violation_rel: worst })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Reverse {
    pub b_eps: f64,
    /// max over x of normalized (2g(x) - g(x+eps) - C).
    pub worst_violation_rel: f64,
}

/// Reverse direction: reconstruct `g = (g*)*` from a sampled conjugate and
/// check the doubling bound with the given constant.
pub fn lemma2_reverse_check(
    gstar: &GridFunction,
    eps: f64,
    c_eps: f64,
    x_grid: &GridSpec,
) -> Result<Lemma2Reverse> {
    let slopes = gstar.slopes();
    if !slopes.windows(2).all(|p| p[1] >= p[0] - 1e-9 * (1.0 + p[0].abs())) {
        return Err(Error::Precondition("conjugate samples are not convex".into()));
    }
    let g_back = |x: f64| {
        gstar
            .iter()
            .map(|(u, s)| x * u - s)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut b_emp = f64::NEG_INFINITY;
    let mut worst = f64::NEG_INFINITY;
    for x in x_grid.points() {
        let d = 2.0 * g_back(x) - g_back(x + eps);
        if d > b_emp {
            b_emp = d;
        }
        let scale = 1.0 + d.abs() + c_eps.abs();
        let viol = (d - c_eps) / scale;
        if viol > worst {
            worst = viol;
        }
    }
    Ok(Lemma2Reverse { b_eps: b_emp, worst_violation_rel: worst })
}

/// Values of a conjugate at integer arguments `0..=k_max`.
///
/// Built either fresh per integer from an evaluator (preferred; norm
/// formulas are exponentially sensitive to these values) or by
/// interpolating a sampled conjugate.
#[derive(Debug, Clone, Serialize)]
pub struct PsiStarTable {
    values: Vec<f64>,
}

impl PsiStarTable {
    pub fn from_psi(psi: &WeightFunction, k_max: u32) -> Result<Self> {
        let conj = PointwiseConjugate::for_weight(psi, k_max as f64);
        let mut values = Vec::with_capacity(k_max as usize + 1);
        for k in 0..=k_max {
            let v = conj.eval(k as f64);
            if !v.is_finite() {
                return Err(Error::NonFinite { context: "psi* at integer".into(), x: k as f64 });
            }
            values.push(v);
        }
        Ok(Self { values })
    }

    pub fn from_grid(gf: &GridFunction, k_max: u32) -> Result<Self> {
        let hi = gf.xs()[gf.len() - 1];
        if (k_max as f64) > hi {
            return Err(Error::InsufficientData(format!(
                "conjugate samples end at {hi}, need integer arguments up to {k_max}"
            )));
        }
        Ok(Self { values: (0..=k_max).map(|k| gf.interpolate(k as f64)).collect() })
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn k_max(&self) -> u32 {
        (self.values.len() - 1) as u32
    }

    pub fn get(&self, k: u32) -> f64 {
        self.values[k as usize]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesSum {
    pub value: f64,
    pub terms_used: u32,
}

/// Sums `e^{psi*(j)} / (b^j j!)` in log space until three consecutive terms
/// drop below `tol` times the running sum.
pub fn corollary1_series(psi_star: &PsiStarTable, b: f64, tol: f64, j_max: u32) -> Result<SeriesSum> {
    if !(b > 0.0) {
        return Err(Error::InvalidParameter { name: "b", reason: format!("need b > 0, got {b}") });
    }
    let j_max = j_max.min(psi_star.k_max());
    let ln_b = b.ln();
    // running sum = s * e^m
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0_f64;
    let mut small_streak = 0u32;
    for j in 0..=j_max {
        let ln_term = psi_star.get(j) - j as f64 * ln_b - ln_factorial(j);
        if ln_term > m {
            s = s * (m - ln_term).exp() + 1.0;
            m = ln_term;
        } else {
            s += (ln_term - m).exp();
        }
        let ln_total = m + s.ln();
        if ln_term < tol.ln() + ln_total {
            small_streak += 1;
            if small_streak >= 3 {
                return Ok(SeriesSum { value: s * m.exp(), terms_used: j + 1 });
            }
        } else {
            small_streak = 0;
        }
    }
    Err(Error::DivergenceSuspected(format!(
        "series stop rule not met within {j_max} terms (conjugate data inconsistent with factorial decay)"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeDivergence {
    #[serde(skip)]
    pub ratios: GridFunction,
    pub tail_increasing: bool,
    pub growth_ok: bool,
    pub end_over_start: f64,
    pub truncated: bool,
}

impl SlopeDivergence {
    pub fn pass(&self) -> bool {
        self.tail_increasing && self.growth_ok
    }
}

/// Sequence `r(x) = (g*((1+delta)x) - g*(x)) / x`, with a verdict that it
/// climbs on the grid tail and grows by `factor` end over start.
pub fn lemma4_slope_check(
    g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    delta: f64,
    x_grid: &GridSpec,
    y_window: (f64, f64),
    factor: f64,
) -> Result<SlopeDivergence> {
    if delta < 0.0 {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("need delta >= 0, got {delta}") });
    }
    let conj = PointwiseConjugate::scan(Arc::new(g), y_window.0, y_window.1, 2048, 160);
    let xs = x_grid.points();
    let mut rs = Vec::with_capacity(xs.len());
    let mut truncated = false;
    for &x in &xs {
        let (a, ha) = conj.eval_with_hit((1.0 + delta) * x);
        let (b, hb) = conj.eval_with_hit(x);
        if ha == BoundaryHit::Upper || hb == BoundaryHit::Upper {
            truncated = true;
        }
        rs.push((a - b) / x);
    }
    let tail = rs.len() - rs.len() / 4;
    let tail_increasing = rs[tail..].windows(2).all(|p| p[1] >= p[0] - 1e-9 * (1.0 + p[0].abs()));
    let start = rs[0];
    let end = rs[rs.len() - 1];
    let growth_ok = if start > 1e-12 { end / start > factor } else { end > 1e-12 };
    let end_over_start = if start.abs() > 1e-300 { end / start } else { f64::INFINITY };
    let ratios = GridFunction::from_samples(
        xs,
        rs,
        format!("source=lemma4_slope_check;delta={delta};y_window=[{},{}]", y_window.0, y_window.1),
    )?;
    Ok(SlopeDivergence { ratios, tail_increasing, growth_ok, end_over_start, truncated })
}

#[derive(Debug, Clone, Copy)]
pub struct Eq21Grids {
    /// Log-variable grid shared by both outer conjugates; extends below zero
    /// because the underlying sup runs over the whole line.
    pub y: GridSpec,
    /// Inner grid on which u* is computed.
    pub s: GridSpec,
    /// Probe grid for the head/tail witnesses on u.
    pub witness: GridSpec,
}

impl Default for Eq21Grids {
    fn default() -> Self {
        Self {
            y: GridSpec { lo: -14.0, hi: 4.0, count: 8192, scale: crate::grid::GridScale::Linear },
            s: GridSpec { lo: 1e-9, hi: 60.0, count: 8192, scale: crate::grid::GridScale::Linear },
            witness: GridSpec { lo: 1e-6, hi: 1e3, count: 512, scale: crate::grid::GridScale::Logarithmic },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Eq21Report {
    pub max_abs_err: f64,
    #[serde(skip)]
    pub errors: GridFunction,
    pub head_ok: bool,
    pub tail_ok: bool,
}

/// Checks `(u∘exp)*(x) + (u*∘exp)*(x) = x ln x - x` on the given arguments.
///
/// Requires `u` increasing and convex, superlinear at infinity and sublinear
/// at the origin; both witnesses are probed before any conjugation.
pub fn eq21_identity_check(
    u: impl Fn(f64) -> f64,
    xs: &[f64],
    grids: &Eq21Grids,
) -> Result<Eq21Report> {
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidParameter {
            name: "xs",
            reason: "the identity is probed on positive arguments".into(),
        });
    }
    // u(t)/t must climb past 100 at the window tail, t/u(t) past 100 at the head.
    let wpts = grids.witness.points();
    let quarter = wpts.len() / 4;
    let tail_ratios: Vec<f64> = wpts[wpts.len() - quarter..].iter().map(|&t| u(t) / t).collect();
    let tail_ok = tail_ratios.windows(2).all(|p| p[1] >= p[0] - 1e-9 * (1.0 + p[0].abs()))
        && tail_ratios.last().copied().unwrap_or(0.0) > 1e2;
    let head_ratios: Vec<f64> = wpts[..quarter].iter().map(|&t| t / u(t)).collect();
    let head_ok = head_ratios.windows(2).all(|p| p[1] <= p[0] + 1e-9 * (1.0 + p[0].abs()))
        && head_ratios.first().copied().unwrap_or(0.0) > 1e2;
    if !tail_ok || !head_ok {
        return Err(Error::Precondition(format!(
            "eq21 witnesses failed (head_ok={head_ok}, tail_ok={tail_ok})"
        )));
    }

    let ys = grids.y.points();
    // outer conjugate of u∘exp
    let g1: Vec<f64> = ys.iter().map(|&y| u(y.exp())).collect();
    let (c1, _) = young_conjugate_at(&ys, &g1, xs, true)?;
    // u* sampled at e^{y_j} via the inner grid, then the outer conjugate again
    let ss = grids.s.points();
    let uv: Vec<f64> = ss.iter().map(|&s| u(s)).collect();
    let targets: Vec<f64> = ys.iter().map(|&y| y.exp()).collect();
    let (ustar, _) = young_conjugate_at(&ss, &uv, &targets, true)?;
    let (c2, _) = young_conjugate_at(&ys, &ustar, xs, true)?;

    let mut errs = Vec::with_capacity(xs.len());
    let mut max_err = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let rhs = if x == 0.0 { 0.0 } else { x * x.ln() - x };
        let e = (c1[i] + c2[i] - rhs).abs();
        errs.push(e);
        if e > max_err {
            max_err = e;
        }
    }
    let errors = GridFunction::from_samples(xs.to_vec(), errs, "source=eq21_identity_check")?;
    Ok(Eq21Report { max_abs_err: max_err, errors, head_ok, tail_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::{compose_exp, make_weight};

    const E: f64 = std::f64::consts::E;

    fn square(y: f64) -> f64 {
        y * y
    }

    #[test]
    fn conjugate_of_square_at_two() {
        let yg = GridSpec::linear(1e-6, 8.0, 4096).unwrap();
        let xg = GridSpec::linear(0.0, 4.0, 5).unwrap();
        let c = young_conjugate(square, &yg, &xg).unwrap();
        // x = 2 sits at index 2; analytic maximizer y = 1, value 1
        assert!((c.value(2) - 1.0).abs() < 1e-4);
        assert_eq!(c.hits[2], BoundaryHit::Interior);
    }

    #[test]
    fn conjugate_of_exp_at_e_vanishes() {
        let yg = GridSpec::linear(1e-6, 4.0, 4096).unwrap();
        let ys = yg.points();
        let gv: Vec<f64> = ys.iter().map(|&y| y.exp()).collect();
        let (vals, hits) = young_conjugate_at(&ys, &gv, &[E], false).unwrap();
        assert!(vals[0].abs() < 1e-4);
        assert_eq!(hits[0], BoundaryHit::Interior);
    }

    #[test]
    fn conjugate_of_square_at_zero_hits_lower_boundary() {
        let yg = GridSpec::linear(1e-6, 8.0, 512).unwrap();
        let xg = GridSpec::linear(0.0, 1.0, 3).unwrap();
        let c = young_conjugate(square, &yg, &xg).unwrap();
        assert!(c.value(0).abs() <= 1e-9);
        assert_eq!(c.hits[0], BoundaryHit::Lower);
    }

    #[test]
    fn convex_fast_path_agrees_with_quadratic_scan() {
        let yg = GridSpec::linear(1e-6, 6.0, 2048).unwrap();
        let xg = GridSpec::linear(0.0, 30.0, 257).unwrap();
        let doubly = |y: f64| (y.exp()).exp();
        for g in [square as fn(f64) -> f64, f64::exp, doubly] {
            let slow = young_conjugate(g, &yg, &xg).unwrap();
            let fast = young_conjugate_convex(g, &yg, &xg).unwrap();
            for i in 0..slow.grid.len() {
                let (a, b) = (slow.value(i), fast.value(i));
                assert!(
                    (a - b).abs() <= 1e-10 * (1.0 + a.abs()),
                    "disagreement at x index {i}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn fast_path_rejects_nonconvex_samples() {
        let yg = GridSpec::linear(0.0, 4.0, 64).unwrap();
        let xg = GridSpec::linear(0.0, 1.0, 4).unwrap();
        let bumpy = |y: f64| (2.0 * y).sin();
        assert!(young_conjugate_convex(bumpy, &yg, &xg).is_err());
    }

    #[test]
    fn affine_conjugate_flags_divergent_columns() {
        let yg = GridSpec::linear(1e-6, 10.0, 1024).unwrap();
        let ug = GridSpec::linear(0.0, 4.0, 9).unwrap();
        let rep = biconjugate_check(|y| 2.0 * y + 1.0, &yg, &ug).unwrap();
        // columns with x > 2 ride the upper boundary
        assert!(rep.divergent_columns.contains(&7));
        assert!(rep.divergent_columns.contains(&8));
        // at x = 2 the value is exactly -1
        assert!((rep.conjugate.values()[4] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn biconjugate_of_square_is_tight_on_interior() {
        let yg = GridSpec::linear(1e-6, 8.0, 4096).unwrap();
        let ug = GridSpec::linear(0.0, 20.0, 4096).unwrap();
        let rep = biconjugate_check(square, &yg, &ug).unwrap();
        assert!(rep.biconjugate_max_dev < 5e-3, "dev = {}", rep.biconjugate_max_dev);
        assert!(rep.fenchel_young_worst_gap_rel >= -1e-9);
        assert!(rep.slopes_monotone);
        assert!(rep.interior_probes > 3000);
    }

    #[test]
    fn biconjugate_never_exceeds_input() {
        // kinked convex input; same-grid probes make the bound exact
        let g = |y: f64| (y - 1.0).abs() + y * y;
        let yg = GridSpec::linear(1e-6, 6.0, 1024).unwrap();
        let ug = GridSpec::linear(0.0, 14.0, 1024).unwrap();
        let ys = yg.points();
        let gv: Vec<f64> = ys.iter().map(|&y| g(y)).collect();
        let us = ug.points();
        let (star, _) = young_conjugate_at(&ys, &gv, &us, false).unwrap();
        for (j, &y) in ys.iter().enumerate() {
            let back = us.iter().zip(&star).map(|(&u, &s)| y * u - s).fold(f64::NEG_INFINITY, f64::max);
            assert!(back <= gv[j] + 1e-12, "biconjugate exceeded input at y = {y}");
        }
    }

    #[test]
    fn pointwise_conjugate_matches_exact_for_exp_weight() {
        let w = make_weight("exp", &[]).unwrap();
        let scan = PointwiseConjugate::scan(w.evaluator(), 0.0, 12.0, 2048, 160);
        let exact = w.exact_conjugate().unwrap();
        for x in [0.0, 0.5, 1.0, 2.0, 10.0, 40.0] {
            let a = scan.eval(x);
            let b = exact(x);
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn lemma1_constant_vanishes_for_exp_weight_at_m_e() {
        let psi = compose_exp(&make_weight("exp", &[]).unwrap());
        let grids = Lemma1Grids::for_psi(&psi, 40.0, 2048).unwrap();
        let rep = lemma1_check(&psi, E, &grids).unwrap();
        assert!(rep.a_m.abs() < 1e-6, "A_e = {}", rep.a_m);
        assert!(rep.tail_ok);
        assert!(rep.worst_margin_rel >= -1e-6, "margin {}", rep.worst_margin_rel);
    }

    #[test]
    fn lemma1_margin_holds_for_m_one() {
        let psi = compose_exp(&make_weight("exp", &[]).unwrap());
        let grids = Lemma1Grids::for_psi(&psi, 40.0, 2048).unwrap();
        let rep = lemma1_check(&psi, 1.0, &grids).unwrap();
        // raw maximum of e^y - e^{e^y} is 1 - e < 0; the used constant clamps at 0
        assert!((rep.a_m_raw - (1.0 - E)).abs() < 1e-6);
        assert_eq!(rep.a_m, 0.0);
        assert!(rep.worst_margin_rel >= -1e-6);
    }

    fn psi_exp() -> impl Fn(f64) -> f64 + Copy {
        |x: f64| x.exp().exp()
    }

    fn lemma2_grids() -> Lemma2Grids {
        Lemma2Grids {
            pair_hi: 20.0,
            pair_count: 128,
            y: GridSpec::linear(1e-6, 6.2, 4096).unwrap(),
            b_probe: GridSpec::linear(0.0, 6.0, 4096).unwrap(),
        }
    }

    #[test]
    fn lemma2_forward_constants_for_doubly_exponential() {
        let rep = lemma2_forward_check(psi_exp(), 0.5, &lemma2_grids()).unwrap();
        let b_expected = 2.0 * E - (0.5_f64.exp()).exp();
        assert!((rep.b_eps - b_expected).abs() < 1e-9, "B = {}", rep.b_eps);
        assert!((rep.inf_g - E).abs() < 1e-9);
        assert!((rep.c_eps - E).abs() < 1e-9);
        assert!(rep.worst_violation_rel <= 1e-6, "violation {}", rep.worst_violation_rel);
    }

    #[test]
    fn lemma2_forward_interior_maximum_at_quarter_eps() {
        let eps = 0.25_f64;
        let rep = lemma2_forward_check(psi_exp(), eps, &lemma2_grids()).unwrap();
        // stationary point of 2 e^t - e^{a t} (a = e^eps) at t = (ln2 - eps)/(a - 1)
        let a = eps.exp();
        let t = (2.0_f64.ln() - eps) / (a - 1.0);
        let expected = 2.0 * t.exp() - (a * t).exp();
        assert!((rep.b_eps - expected).abs() < 1e-9, "B = {} vs {}", rep.b_eps, expected);
        assert!(rep.b_eps > 2.0 && rep.b_eps < 2.2);
        assert!(rep.worst_violation_rel <= 1e-6);
    }

    #[test]
    fn lemma2_exponential_needs_large_enough_eps() {
        // for g = e^{2x} the doubling margin flips sign at eps = ln(2)/2
        let g = |x: f64| (2.0 * x).exp();
        assert!(lemma2_forward_check(g, 0.5, &lemma2_grids()).is_ok());
        assert!(matches!(
            lemma2_forward_check(g, 0.1, &lemma2_grids()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lemma2_zero_row_is_automatic() {
        let grids = lemma2_grids();
        let ys = grids.y.points();
        let gv: Vec<f64> = ys.iter().map(|&y| psi_exp()(y)).collect();
        let (star, _) = young_conjugate_at(&ys, &gv, &[0.0], false).unwrap();
        let rep = lemma2_forward_check(psi_exp(), 0.5, &grids).unwrap();
        assert!(star[0] + rep.c_eps >= -1e-6);
    }

    #[test]
    fn lemma2_reverse_roundtrip_stays_within_constant() {
        let grids = lemma2_grids();
        for eps in [0.25, 0.5] {
            let fwd = lemma2_forward_check(psi_exp(), eps, &grids).unwrap();
            let ys = grids.y.points();
            let gv: Vec<f64> = ys.iter().map(|&y| psi_exp()(y)).collect();
            let xg = GridSpec::linear(0.0, 40.0, 1024).unwrap();
            let star = young_conjugate_at(&ys, &gv, &xg.points(), false).unwrap().0;
            let gf = GridFunction::from_samples(xg.points(), star, "gstar").unwrap();
            let back_grid = GridSpec::linear(0.0, 4.0, 512).unwrap();
            let rev = lemma2_reverse_check(&gf, eps, fwd.c_eps, &back_grid).unwrap();
            assert!(rev.b_eps <= fwd.c_eps + 1e-6, "B {} vs C {}", rev.b_eps, fwd.c_eps);
            assert!(rev.worst_violation_rel <= 1e-6);
        }
    }

    #[test]
    fn lemma2_reverse_b_monotone_in_eps() {
        let grids = lemma2_grids();
        let ys = grids.y.points();
        let gv: Vec<f64> = ys.iter().map(|&y| psi_exp()(y)).collect();
        let xg = GridSpec::linear(0.0, 40.0, 1024).unwrap();
        let star = young_conjugate_at(&ys, &gv, &xg.points(), false).unwrap().0;
        let gf = GridFunction::from_samples(xg.points(), star, "gstar").unwrap();
        let back_grid = GridSpec::linear(0.0, 4.0, 256).unwrap();
        let b1 = lemma2_reverse_check(&gf, 0.25, E, &back_grid).unwrap().b_eps;
        let b2 = lemma2_reverse_check(&gf, 0.5, E, &back_grid).unwrap().b_eps;
        assert!(b2 <= b1 + 1e-12);
    }

    #[test]
    fn lemma2_reverse_rejects_nonconvex_input() {
        let gf = GridFunction::from_samples(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0], "cap").unwrap();
        let back_grid = GridSpec::linear(0.0, 1.0, 16).unwrap();
        assert!(lemma2_reverse_check(&gf, 0.5, 1.0, &back_grid).is_err());
    }

    #[test]
    fn series_of_zero_conjugate_is_exponential() {
        let table = PsiStarTable::from_values(vec![0.0; 65]);
        let sum = corollary1_series(&table, 2.0, 1e-12, 64).unwrap();
        assert!((sum.value - 0.5_f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn series_converges_for_exp_weight() {
        let psi = compose_exp(&make_weight("exp", &[]).unwrap());
        let table = PsiStarTable::from_psi(&psi, 64).unwrap();
        // psi*(0) and psi*(1) sit at -e for this weight
        assert!((table.get(0) + E).abs() < 1e-9);
        assert!((table.get(1) + E).abs() < 1e-9);
        let sum = corollary1_series(&table, 10.0, 1e-12, 64).unwrap();
        assert!(sum.terms_used <= 64);
        assert!(sum.value.is_finite() && sum.value > 0.0);
    }

    #[test]
    fn series_diverges_for_growing_terms() {
        // fake conjugate values that outgrow j ln j
        let vals: Vec<f64> = (0..=64).map(|j| 3.0 * (j as f64) * (1.0 + j as f64).ln()).collect();
        let table = PsiStarTable::from_values(vals);
        assert!(corollary1_series(&table, 10.0, 1e-12, 64).is_err());
    }

    #[test]
    fn slope_divergence_linear_for_square() {
        let xg = GridSpec::linear(1.0, 40.0, 128).unwrap();
        let delta = 0.5;
        let rep = lemma4_slope_check(square, delta, &xg, (1e-6, 40.0), 10.0).unwrap();
        // conjugate of y^2 is x^2/4, so r(x) = ((1+d)^2 - 1) x / 4
        let slope = ((1.0 + delta) * (1.0 + delta) - 1.0) / 4.0;
        for (x, r) in rep.ratios.iter() {
            assert!((r - slope * x).abs() < 1e-3 * (1.0 + slope * x), "x = {x}");
        }
        assert!(rep.pass());
    }

    #[test]
    fn slope_divergence_zero_delta_is_flat() {
        let xg = GridSpec::linear(1.0, 10.0, 32).unwrap();
        let rep = lemma4_slope_check(square, 0.0, &xg, (1e-6, 12.0), 10.0).unwrap();
        for (_, r) in rep.ratios.iter() {
            assert_eq!(r, 0.0);
        }
        assert!(!rep.growth_ok);
    }

    #[test]
    fn slope_divergence_for_doubly_exponential() {
        let xg = GridSpec::linear(1.0, 40.0, 256).unwrap();
        let rep = lemma4_slope_check(|y: f64| y.exp().exp(), 0.5, &xg, (0.0, 6.2), 10.0).unwrap();
        assert!(rep.tail_increasing);
        assert!(rep.growth_ok, "end/start = {}", rep.end_over_start);
    }

    #[test]
    fn eq21_identity_for_half_square() {
        let u = |y: f64| 0.5 * y * y;
        let mut xs: Vec<f64> = GridSpec::linear(0.5, 10.0, 256).unwrap().points();
        xs.push(E);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rep = eq21_identity_check(u, &xs, &Eq21Grids::default()).unwrap();
        assert!(rep.max_abs_err < 5e-3, "max err {}", rep.max_abs_err);
        // spot values: x = e gives 0 per term; x = 1 gives -1/2 per term
        let at = |x: f64| {
            let i = xs.iter().position(|&p| p == x).unwrap();
            rep.errors.values()[i]
        };
        assert!(at(E) < 1e-3);
        assert!(at(1.0) < 1e-3);
    }

    #[test]
    fn eq21_rejects_superlinear_origin() {
        // u(x)/x -> 1 at 0, head witness fails
        let u = |y: f64| y + y * y;
        let xs = [1.0, 2.0];
        assert!(matches!(
            eq21_identity_check(u, &xs, &Eq21Grids::default()),
            Err(Error::Precondition(_))
        ));
    }
}
