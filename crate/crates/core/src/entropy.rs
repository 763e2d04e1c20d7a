//! Closed-form entropy solutions, the entropy-inequality residual and L¹ errors
//! of scheme runs.
//!
//! Two families, both shifted in time by `ε > 0` so that they are bounded:
//!
//! * Burgers: `u(x,t) = x / (2qτ)` on `[0, (4qτ)^{1/2}]`, `τ = t + ε`, solving
//!   `u_t + (qu²)_x = 0` with a rarefaction on the left and a shock on the right;
//! * porous medium: `v(x,t) = max(¾((2/(9τ))^{1/3} − 2x²/(9τ)), 0)`, solving
//!   `v_t = (v²/2)_xx`.
//!
//! For a test function `φ ≥ 0` and a constant `c` the residual is
//!
//! ```text
//! ∬_{t>0} sgn(u−c)[(u−c)φ_t + (f(u) − f(c) − ∂_x K(u))φ_x] dx dt + ∫ |u(x,0) − c| φ(x,0) dx
//! ```
//!
//! which is non-negative for entropy solutions.

use serde::{Deserialize, Serialize};

use crate::dist::{Piece, PiecewisePoly};
use crate::scheme::{init_scheme, FluxPair, Preset, SchemeState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Burgers { q: f64, eps: f64 },
    Pme { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySolution {
    pub family: Family,
    pub horizon: f64,
}

impl EntropySolution {
    pub fn new(family: Family, horizon: f64) -> Result<Self> {
        let eps = match family {
            Family::Burgers { q, eps } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidParameter(format!("q must lie in (0,1), got {q}")));
                }
                eps
            }
            Family::Pme { eps } => eps,
        };
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("ε must lie in (0,1), got {eps}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { family, horizon })
    }

    pub fn burgers(q: f64, eps: f64, horizon: f64) -> Result<Self> {
        Self::new(Family::Burgers { q, eps }, horizon)
    }

    pub fn pme(eps: f64, horizon: f64) -> Result<Self> {
        Self::new(Family::Pme { eps }, horizon)
    }

    pub fn label(&self) -> &'static str {
        match self.family {
            Family::Burgers { .. } => "burgers",
            Family::Pme { .. } => "pme",
        }
    }

    pub fn eps(&self) -> f64 {
        match self.family {
            Family::Burgers { eps, .. } | Family::Pme { eps } => eps,
        }
    }

    fn tau(&self, t: f64) -> f64 {
        t + self.eps()
    }

    /// The matching scheme preset.
    pub fn preset(&self) -> Preset {
        match self.family {
            Family::Burgers { q, .. } => Preset::Burgers { q },
            Family::Pme { .. } => Preset::Pme,
        }
    }

    pub fn flux(&self) -> FluxPair {
        self.preset().flux()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "t = {t} lies outside [0, {}]",
                self.horizon
            )))
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.value(x, t))
    }

    fn value(&self, x: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        match self.family {
            Family::Burgers { q, .. } => {
                if (0.0..=(4.0 * q * tau).sqrt()).contains(&x) {
                    x / (2.0 * q * tau)
                } else {
                    0.0
                }
            }
            Family::Pme { .. } => {
                (0.75 * ((2.0 / (9.0 * tau)).cbrt() - 2.0 * x * x / (9.0 * tau))).max(0.0)
            }
        }
    }

    /// `∂_x K(u)`: zero for Burgers, `−v x / (3τ)` for the porous medium.
    fn flux_gradient(&self, x: f64, t: f64) -> f64 {
        match self.family {
            Family::Burgers { .. } => 0.0,
            Family::Pme { .. } => -self.value(x, t) * x / (3.0 * self.tau(t)),
        }
    }

    fn f(&self, u: f64) -> f64 {
        match self.family {
            Family::Burgers { q, .. } => q * u * u,
            Family::Pme { .. } => 0.0,
        }
    }

    /// Support of `u(·, t)`.
    pub fn support(&self, t: f64) -> (f64, f64) {
        let tau = self.tau(t);
        match self.family {
            Family::Burgers { q, .. } => (0.0, (4.0 * q * tau).sqrt()),
            Family::Pme { .. } => {
                let r = (4.5 * tau).cbrt();
                (-r, r)
            }
        }
    }

    /// `sup_x u(x, t)`.
    pub fn sup(&self, t: f64) -> f64 {
        let tau = self.tau(t);
        match self.family {
            Family::Burgers { q, .. } => (q * tau).sqrt().recip(),
            Family::Pme { .. } => 0.75 * (2.0 / (9.0 * tau)).cbrt(),
        }
    }

    /// `u(·, t)` as a piecewise polynomial.
    pub fn profile(&self, t: f64) -> Result<PiecewisePoly> {
        self.check_time(t)?;
        match self.family {
            Family::Burgers { q, .. } => PiecewisePoly::burgers_profile(q, self.tau(t)),
            Family::Pme { .. } => PiecewisePoly::pme_profile(self.tau(t)),
        }
    }

    /// Points in `x` where `u(·, t)` or `sgn(u − c)` is not smooth.
    fn breakpoints(&self, t: f64, c: f64) -> Vec<f64> {
        let tau = self.tau(t);
        let (lo, hi) = self.support(t);
        let mut pts = vec![lo, hi];
        match self.family {
            Family::Burgers { q, .. } => {
                let xc = 2.0 * q * tau * c;
                if xc > lo && xc < hi {
                    pts.push(xc);
                }
            }
            Family::Pme { .. } => {
                let a = (2.0 / (9.0 * tau)).cbrt();
                let s = (a - 4.0 * c / 3.0) * 4.5 * tau;
                if c > 0.0 && s > 0.0 {
                    pts.push(s.sqrt());
                    pts.push(-s.sqrt());
                }
            }
        }
        pts
    }
}

/// `ψ(s) = exp(−1/(1−s²))` on `|s| < 1`, zero elsewhere, and its derivative.
fn bump(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let d = 1.0 - s * s;
    let v = (-1.0 / d).exp();
    (v, v * (-2.0 * s / (d * d)))
}

/// `φ(x,t) = A ψ((x−x₀)/r_x) ψ((t−t₀)/r_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub x0: f64,
    pub t0: f64,
    pub rx: f64,
    pub rt: f64,
    pub amplitude: f64,
}

impl TestFunction {
    /// Requires `t₀ + r_t ≤ T` so that `φ` vanishes from the horizon on.
    pub fn new(x0: f64, t0: f64, rx: f64, rt: f64, amplitude: f64, horizon: f64) -> Result<Self> {
        if !(rx > 0.0 && rt > 0.0 && amplitude >= 0.0) {
            return Err(Error::InvalidParameter(
                "test function needs positive radii and a non-negative amplitude".into(),
            ));
        }
        if t0 + rt > horizon {
            return Err(Error::InvalidParameter(format!(
                "test function reaches t = {} beyond the horizon {horizon}",
                t0 + rt
            )));
        }
        Ok(Self { x0, t0, rx, rt, amplitude })
    }

    /// `(φ, ∂_x φ, ∂_t φ)` at `(x, t)`.
    pub fn eval(&self, x: f64, t: f64) -> (f64, f64, f64) {
        let (px, dpx) = bump((x - self.x0) / self.rx);
        let (pt, dpt) = bump((t - self.t0) / self.rt);
        let a = self.amplitude;
        (a * px * pt, a * dpx * pt / self.rx, a * px * dpt / self.rt)
    }
}

/// Composite midpoint rule for `g` on `[a, b]`, split at `cuts`, with about
/// `n` cells in total allotted by piece length.
fn midpoint_split(a: f64, b: f64, cuts: &[f64], n: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let cells = ((n as f64 * len / (b - a)).ceil() as usize).max(1);
        let h = len / cells as f64;
        total += h * (0..cells).map(|i| g(w[0] + (i as f64 + 0.5) * h)).sum::<f64>();
    }
    total
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Midpoint-rule value of the entropy residual with `quad_n` cells per axis.
pub fn entropy_residual(sol: &EntropySolution, phi: &TestFunction, c: f64, quad_n: usize) -> Result<f64> {
    if quad_n == 0 {
        return Err(Error::InvalidParameter("quad_n must be positive".into()));
    }
    if phi.t0 + phi.rt > sol.horizon {
        return Err(Error::InvalidParameter(
            "test function is not supported inside the horizon".into(),
        ));
    }
    let (xa, xb) = (phi.x0 - phi.rx, phi.x0 + phi.rx);
    let fc = sol.f(c);
    let inner = |t: f64| {
        midpoint_split(xa, xb, &sol.breakpoints(t, c), quad_n, |x| {
            let u = sol.value(x, t);
            let s = sgn(u - c);
            if s == 0.0 {
                return 0.0;
            }
            let (_, px, pt) = phi.eval(x, t);
            s * ((u - c) * pt + (sol.f(u) - fc - sol.flux_gradient(x, t)) * px)
        })
    };
    let (ta, tb) = ((phi.t0 - phi.rt).max(0.0), phi.t0 + phi.rt);
    let bulk = if tb > ta {
        midpoint_split(ta, tb, &[], quad_n, inner)
    } else {
        0.0
    };
    let initial = midpoint_split(xa, xb, &sol.breakpoints(0.0, c), quad_n, |x| {
        (sol.value(x, 0.0) - c).abs() * phi.eval(x, 0.0).0
    });
    Ok(bulk + initial)
}

/// Tolerance for residuals at `quad_n` cells per axis: `A / quad_n` with `A`
/// chosen so that 512 cells give `1e-4`.
pub fn residual_tolerance(quad_n: usize) -> f64 {
    0.0512 / quad_n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub family: &'static str,
    pub c: f64,
    pub phi: TestFunction,
    pub residual: f64,
    /// `c = 0` or `c ≥ sup u`: the residual is an identity and should vanish.
    pub identity_case: bool,
}

/// Constants and bumps probed by [`residual_battery`]: 5 constants × 12 bumps.
pub fn battery_pairs(sol: &EntropySolution) -> Result<Vec<(f64, TestFunction, bool)>> {
    let t_centres = [0.1, 0.4, 0.75];
    let (rx, rt) = (0.4, 0.2);
    let horizon = sol.horizon;
    if horizon < 0.95 {
        return Err(Error::InvalidParameter(
            "the residual battery needs a horizon of at least 0.95".into(),
        ));
    }
    let top = 1.1 * sol.sup(0.0);
    let cs: Vec<f64> = match sol.family {
        Family::Burgers { .. } => vec![0.0, 0.3, 0.8, 1.5, top],
        Family::Pme { .. } => vec![0.0, 0.1, 0.3, 0.6, top],
    };
    let mut bumps = Vec::new();
    for &t0 in &t_centres {
        let (lo, hi) = sol.support(t0);
        let xs = match sol.family {
            Family::Burgers { .. } => [0.3, 0.7, hi, hi + 0.5],
            Family::Pme { .. } => [lo, 0.0, 0.5, hi],
        };
        for x0 in xs {
            bumps.push(TestFunction::new(x0, t0, rx, rt, 1.0, horizon)?);
        }
    }
    let mut pairs = Vec::new();
    for &c in &cs {
        for &phi in &bumps {
            pairs.push((c, phi, c == 0.0 || c >= sol.sup(0.0)));
        }
    }
    Ok(pairs)
}

pub fn residual_battery(sol: &EntropySolution, quad_n: usize) -> Result<Vec<BatteryEntry>> {
    use rayon::prelude::*;
    battery_pairs(sol)?
        .into_par_iter()
        .map(|(c, phi, identity_case)| {
            Ok(BatteryEntry {
                family: sol.label(),
                c,
                phi,
                residual: entropy_residual(sol, &phi, c, quad_n)?,
                identity_case,
            })
        })
        .collect()
}

/// A space-time window `[x_lo, x_hi] × [t_lo, t_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// `∫_a^b |p|` for a polynomial of degree at most 2.
fn abs_integral(p: &Piece, a: f64, b: f64) -> f64 {
    let c = |k: usize| p.coeffs.get(k).copied().unwrap_or(0.0);
    let mut cuts = vec![a];
    let (c0, c1, c2) = (c(0), c(1), c(2));
    if c2 != 0.0 {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc > 0.0 {
            let s = disc.sqrt();
            cuts.push((-c1 + s) / (2.0 * c2));
            cuts.push((-c1 - s) / (2.0 * c2));
        }
    } else if c1 != 0.0 {
        cuts.push(-c0 / c1);
    }
    cuts.push(b);
    cuts.retain(|&x| x >= a && x <= b);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| p.integral(w[0], w[1]).abs()).sum()
}

/// `∫_{x_lo}^{x_hi} |g − u|` where `g` is piecewise constant on cells of width
/// `dx` (`values` starting at cell `offset`) and `u` a piecewise polynomial.
pub fn l1_distance_at(
    dx: f64,
    offset: i64,
    values: &[f64],
    u: &PiecewisePoly,
    x_lo: f64,
    x_hi: f64,
) -> f64 {
    if x_hi <= x_lo {
        return 0.0;
    }
    // Breakpoints: cell edges of g and piece edges of u, inside the window.
    let mut cuts = vec![x_lo, x_hi];
    let j_lo = (x_lo / dx).floor() as i64;
    let j_hi = (x_hi / dx).ceil() as i64;
    cuts.extend((j_lo..=j_hi).map(|j| j as f64 * dx));
    for p in u.pieces() {
        cuts.push(p.lo);
        cuts.push(p.hi);
    }
    cuts.retain(|&x| x >= x_lo && x <= x_hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let g = |x: f64| {
        let j = (x / dx).floor() as i64 - offset;
        if j < 0 || j >= values.len() as i64 {
            0.0
        } else {
            values[j as usize]
        }
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let level = g(mid);
        let poly = u
            .pieces()
            .iter()
            .find(|p| p.lo <= mid && mid <= p.hi)
            .map(|p| p.coeffs.clone())
            .unwrap_or_default();
        let mut coeffs = poly;
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        coeffs[0] -= level;
        total += abs_integral(&Piece::new(a, b, coeffs), a, b);
    }
    total
}

/// `∫ |A_M u(·,t) − u(·,t)| dx`, where `A_M` takes cell averages on the mesh `1/M`.
pub fn l1_profile_error(sol: &EntropySolution, t: f64, mesh: u32) -> Result<f64> {
    let profile = sol.profile(t)?;
    let m = mesh as f64;
    let (first, cells) = profile.cell_integrals(m);
    let averages: Vec<f64> = cells.iter().map(|v| v * m).collect();
    let (lo, hi) = profile.bounds();
    Ok(l1_distance_at(1.0 / m, first, &averages, &profile, lo - 1.0, hi + 1.0))
}

/// `∫∫_window |u^M − u| dx dt` for the scheme started from the cell averages of
/// `u(·, 0)`. The time integral uses `time_samples` midpoints of `[t_lo, t_hi]`;
/// at each the scheme value is the one of the step in progress, and the space
/// integral is exact.
pub fn l1_error(sol: &EntropySolution, mesh: u32, window: Window, time_samples: usize) -> Result<f64> {
    if !(window.t_lo >= 0.0 && window.t_hi <= sol.horizon && window.t_lo < window.t_hi) {
        return Err(Error::InvalidParameter("window must lie within the horizon".into()));
    }
    if window.x_hi <= window.x_lo || time_samples == 0 {
        return Err(Error::InvalidParameter("empty window or no time samples".into()));
    }
    let preset = sol.preset();
    let flux = preset.flux();
    let mut state: SchemeState = init_scheme(&sol.profile(0.0)?, mesh, preset)?;
    let h = (window.t_hi - window.t_lo) / time_samples as f64;
    let mut total = 0.0;
    for i in 0..time_samples {
        let t = window.t_lo + (i as f64 + 0.5) * h;
        let n = (t / state.dt).floor() as u64;
        while state.time_index < n {
            state.advance(&flux);
        }
        let u = sol.profile(t)?;
        total += h * l1_distance_at(state.dx, state.offset, &state.cells, &u, window.x_lo, window.x_hi);
    }
    Ok(total)
}
