//! Explicit finite-difference scheme for `u_t + f(u)_x = K(u)_xx`:
//!
//! ```text
//! U'_j = U_j − (Δt/Δx)(f(U_j) − f(U_{j−1})) + (Δt/Δx²)(K(U_{j+1}) − 2K(U_j) + K(U_{j−1}))
//! ```
//!
//! With `Δx = 1/M` and `U_j = M p_j`, the Burgers preset (`f = qu²`, `Δt = Δx²`)
//! is the totally asymmetric walk recurrence and the porous-medium preset
//! (`K = u²/2`, `Δt = Δx³`) is the symmetric walk recurrence.

use serde::{Deserialize, Serialize};

use crate::dist::{pmf_from_density, PiecewisePoly};
use crate::evolution::{Evolver, Flavor};
use crate::{Error, Result};

/// A polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Degree, with `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0.0)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    fn scaled(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly((0..n).map(|k| self.coeff(k) + other.coeff(k)).collect())
    }
}

/// Convection flux `f` and diffusion flux `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxPair {
    pub f: Poly,
    pub k: Poly,
}

impl FluxPair {
    /// `f = qu²`, `K = 0`.
    pub fn burgers(q: f64) -> Self {
        Self {
            f: Poly(vec![0.0, 0.0, q]),
            k: Poly::default(),
        }
    }

    /// `f = 0`, `K = u²/2`.
    pub fn pme() -> Self {
        Self {
            f: Poly::default(),
            k: Poly(vec![0.0, 0.0, 0.5]),
        }
    }
}

/// Built-in flux pairs with their mesh couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Preset {
    /// `Δt = Δx²`.
    Burgers { q: f64 },
    /// `Δt = Δx³`.
    Pme,
}

impl Preset {
    pub fn flux(&self) -> FluxPair {
        match self {
            Preset::Burgers { q } => FluxPair::burgers(*q),
            Preset::Pme => FluxPair::pme(),
        }
    }

    /// `k` in `Δt = M^{−k}`.
    pub fn time_exponent(&self) -> i32 {
        match self {
            Preset::Burgers { .. } => 2,
            Preset::Pme => 3,
        }
    }

    pub fn dx(&self, mesh: u32) -> f64 {
        1.0 / mesh as f64
    }

    pub fn dt(&self, mesh: u32) -> f64 {
        1.0 / (mesh as f64).powi(self.time_exponent())
    }

    /// The walk whose root law this preset evolves.
    pub fn flavor(&self) -> Flavor {
        match self {
            Preset::Burgers { q } => Flavor::TotallyAsymmetric { q: *q },
            Preset::Pme => Flavor::Symmetric,
        }
    }

    /// Quadratic coefficients `(a_{−1}, a_0, a_{+1})` of the walk recurrence
    /// written as `p'_j = p_j + Σ_k a_k p_{j+k}²`.
    pub fn recurrence_coefficients(&self) -> [f64; 3] {
        match self {
            Preset::Burgers { q } => [*q, -q, 0.0],
            Preset::Pme => [0.5, -1.0, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Preset::Burgers { q } if !(*q > 0.0 && *q < 1.0) => Err(Error::InvalidParameter(
                format!("q must lie in (0,1), got {q}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Grid values `U_j` on cells `[jΔx, (j+1)Δx)`, `j = offset..offset+len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeState {
    pub dx: f64,
    pub dt: f64,
    pub offset: i64,
    pub cells: Vec<f64>,
    pub time_index: u64,
}

impl SchemeState {
    pub fn new(dx: f64, dt: f64, offset: i64, cells: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0 && dx.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need Δx, Δt > 0, got Δx={dx}, Δt={dt}"
            )));
        }
        if cells.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidParameter("cell values must be finite".into()));
        }
        Ok(Self {
            dx,
            dt,
            offset,
            cells,
            time_index: 0,
        })
    }

    pub fn get(&self, j: i64) -> f64 {
        let i = j - self.offset;
        if i < 0 || i >= self.cells.len() as i64 {
            0.0
        } else {
            self.cells[i as usize]
        }
    }

    /// `Σ_j U_j Δx`.
    pub fn mass(&self) -> f64 {
        self.cells.iter().sum::<f64>() * self.dx
    }

    pub fn time(&self) -> f64 {
        self.time_index as f64 * self.dt
    }

    /// `(j, U_j)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &u)| (self.offset + i as i64, u))
    }

    /// Applies one step in place; the grid grows by one cell per side and
    /// exact zeros at either end are dropped.
    pub fn advance(&mut self, flux: &FluxPair) {
        let lambda = self.dt / self.dx;
        let mu = self.dt / (self.dx * self.dx);
        let len = self.cells.len();
        // Two zeros of padding each side so every stencil read is in range.
        let mut u = Vec::with_capacity(len + 4);
        u.extend_from_slice(&[0.0, 0.0]);
        u.extend_from_slice(&self.cells);
        u.extend_from_slice(&[0.0, 0.0]);
        let fu: Vec<f64> = u.iter().map(|&x| flux.f.eval(x)).collect();
        let ku: Vec<f64> = u.iter().map(|&x| flux.k.eval(x)).collect();
        let mut out: Vec<f64> = (1..len + 3)
            .map(|i| {
                u[i] - lambda * (fu[i] - fu[i - 1]) + mu * (ku[i + 1] - 2.0 * ku[i] + ku[i - 1])
            })
            .collect();
        let first = out.iter().position(|&x| x != 0.0);
        let mut offset = self.offset - 1;
        match first {
            Some(first) => {
                let last = out.iter().rposition(|&x| x != 0.0).unwrap_or(first);
                out.truncate(last + 1);
                out.drain(..first);
                offset += first as i64;
            }
            None => out.clear(),
        }
        self.cells = out;
        self.offset = offset;
        self.time_index += 1;
    }

    pub fn run(&mut self, flux: &FluxPair, steps: u64) {
        for _ in 0..steps {
            self.advance(flux);
        }
    }
}

/// Cell averages of `u0` on the preset's mesh `Δx = 1/M`.
pub fn init_scheme(u0: &PiecewisePoly, mesh: u32, preset: Preset) -> Result<SchemeState> {
    if mesh == 0 {
        return Err(Error::InvalidParameter("mesh M must be positive".into()));
    }
    preset.validate()?;
    check_recurrence_match(preset, mesh)?;
    let m = mesh as f64;
    let (first, integrals) = u0.cell_integrals(m);
    let cells = integrals.into_iter().map(|v| v * m).collect();
    SchemeState::new(preset.dx(mesh), preset.dt(mesh), first, cells)
}

/// One step of the scheme, returning the new state.
pub fn scheme_step(state: &SchemeState, flux: &FluxPair) -> SchemeState {
    let mut next = state.clone();
    next.advance(flux);
    next
}

/// Coefficients of the update for quadratic fluxes, written as
/// `U'_j = U_j + Σ_k (l_k U_{j+k} + s_k U_{j+k}²)` over `k ∈ {−1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilCoefficients {
    pub linear: [f64; 3],
    pub quadratic: [f64; 3],
}

pub fn stencil_coefficients(flux: &FluxPair, dx: f64, dt: f64) -> Result<StencilCoefficients> {
    let deg = flux.f.degree().max(flux.k.degree()).unwrap_or(0);
    if deg > 2 {
        return Err(Error::InvalidParameter(
            "stencil coefficients are only defined for fluxes of degree <= 2".into(),
        ));
    }
    let lambda = dt / dx;
    let mu = dt / (dx * dx);
    let coeffs = |k: usize| {
        let f = flux.f.coeff(k);
        let kk = flux.k.coeff(k);
        [lambda * f + mu * kk, -lambda * f - 2.0 * mu * kk, mu * kk]
    };
    Ok(StencilCoefficients {
        linear: coeffs(1),
        quadratic: coeffs(2),
    })
}

/// Checks that, with `U = M p`, the preset's update coincides with the walk
/// recurrence coefficient by coefficient.
fn check_recurrence_match(preset: Preset, mesh: u32) -> Result<()> {
    let m = mesh as f64;
    let s = stencil_coefficients(&preset.flux(), preset.dx(mesh), preset.dt(mesh))?;
    let want = preset.recurrence_coefficients();
    for k in 0..3 {
        let got = s.quadratic[k] * m;
        if s.linear[k] != 0.0 || (got - want[k]).abs() > 1e-14 * want[k].abs().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "stencil does not reproduce the walk recurrence at M={mesh}"
            )));
        }
    }
    Ok(())
}

/// Outcome of [`monotone_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub interval: (f64, f64),
    pub verdict: bool,
    /// A triple `(u⁻, u, u⁺)` in `I³` where some partial derivative of the
    /// update is negative.
    pub witness: Option<(f64, f64, f64)>,
    /// Largest `u` keeping the update non-decreasing, for pure quadratic fluxes.
    pub closed_form_threshold: Option<f64>,
    /// Whether `I ⊆ [0, threshold]`.
    pub within_threshold: Option<bool>,
    /// Minimum of each partial derivative over `I`, in `(u⁻, u, u⁺)` order.
    pub partial_minima: [f64; 3],
}

/// Minimum of a polynomial over `[lo, hi]` and where it is attained.
///
/// Exact (endpoints and stationary points) up to degree 3; otherwise the
/// polynomial is sampled on `grid + 1` points.
fn poly_min(p: &Poly, lo: f64, hi: f64, grid: usize) -> (f64, f64) {
    let mut candidates = vec![lo, hi];
    let d = p.derivative();
    match d.degree() {
        None | Some(0) => {}
        Some(1) => candidates.push(-d.coeff(0) / d.coeff(1)),
        Some(2) => {
            let (c, b, a) = (d.coeff(0), d.coeff(1), d.coeff(2));
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                candidates.push((-b + s) / (2.0 * a));
                candidates.push((-b - s) / (2.0 * a));
            }
        }
        Some(_) => {
            let n = grid.max(1);
            candidates.extend((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
        }
    }
    candidates
        .into_iter()
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| (p.eval(x), x))
        .fold((f64::INFINITY, lo), |best, c| if c.0 < best.0 { c } else { best })
}

/// Decides whether `S(u⁻, u, u⁺)` is non-decreasing in each argument on `I³`.
///
/// Each partial derivative of `S` depends on one argument only:
/// `∂S/∂u⁻ = λf'(u⁻) + μK'(u⁻)`, `∂S/∂u = 1 − λf'(u) − 2μK'(u)`,
/// `∂S/∂u⁺ = μK'(u⁺)` with `λ = Δt/Δx`, `μ = Δt/Δx²`.
pub fn monotone_check(flux: &FluxPair, dx: f64, dt: f64, interval: (f64, f64), grid: usize) -> Result<MonotonicityReport> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter(format!(
            "interval [{lo}, {hi}] must be bounded and ordered"
        )));
    }
    if !(dx > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter("need Δx, Δt > 0".into()));
    }
    let lambda = dt / dx;
    let mu = dt / (dx * dx);
    let fp = flux.f.derivative();
    let kp = flux.k.derivative();
    let d_minus = fp.scaled(lambda).add(&kp.scaled(mu));
    let d_center = Poly(vec![1.0]).add(&fp.scaled(-lambda)).add(&kp.scaled(-2.0 * mu));
    let d_plus = kp.scaled(mu);
    let mins = [
        poly_min(&d_minus, lo, hi, grid),
        poly_min(&d_center, lo, hi, grid),
        poly_min(&d_plus, lo, hi, grid),
    ];
    let tol = 1e-12;
    let witness = mins
        .iter()
        .position(|m| m.0 < -tol)
        .map(|k| {
            let mut w = (lo, lo, lo);
            match k {
                0 => w.0 = mins[0].1,
                1 => w.1 = mins[1].1,
                _ => w.2 = mins[2].1,
            }
            w
        });
    let pure_quadratic = |p: &Poly| p.0.iter().enumerate().all(|(k, &c)| k == 2 || c == 0.0);
    let (a, b) = (flux.f.coeff(2), flux.k.coeff(2));
    let closed_form_threshold = (pure_quadratic(&flux.f)
        && pure_quadratic(&flux.k)
        && a >= 0.0
        && b >= 0.0
        && a + b > 0.0)
        .then(|| 1.0 / (2.0 * a * lambda + 4.0 * b * mu));
    Ok(MonotonicityReport {
        interval,
        verdict: witness.is_none(),
        witness,
        within_threshold: closed_form_threshold.map(|t| lo >= 0.0 && hi <= t),
        closed_form_threshold,
        partial_minima: [mins[0].0, mins[1].0, mins[2].0],
    })
}

/// Which walk/preset pair [`verify_scheme_pmf_identity`] compares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentityFlavor {
    TotallyAsymmetric { q: f64 },
    Symmetric,
}

impl IdentityFlavor {
    pub fn preset(&self) -> Preset {
        match self {
            IdentityFlavor::TotallyAsymmetric { q } => Preset::Burgers { q: *q },
            IdentityFlavor::Symmetric => Preset::Pme,
        }
    }
}

/// Runs the scheme from the cell averages of `rho` and the walk evolution from
/// its discretization side by side, returning `max_{n ≤ n_max, j} |U^n_j − M p^n_j|`.
pub fn verify_scheme_pmf_identity(flavor: IdentityFlavor, rho: &PiecewisePoly, mesh: u32, n_max: u64) -> Result<f64> {
    let preset = flavor.preset();
    let mut state = init_scheme(rho, mesh, preset)?;
    let flux = preset.flux();
    let m = mesh as f64;
    let p0 = pmf_from_density(rho, m)?;
    let mut ev = Evolver::new(&p0, &preset.flavor())?;
    let deviation = |state: &SchemeState, ev: &Evolver| {
        let p = ev.snapshot();
        let (plo, phi) = p.support();
        let lo = plo.min(state.offset);
        let hi = phi.max(state.offset + state.cells.len() as i64 - 1);
        (lo..=hi)
            .map(|j| (state.get(j) - m * p.get(j)).abs())
            .fold(0.0, f64::max)
    };
    let mut worst = deviation(&state, &ev);
    for _ in 0..n_max {
        state.advance(&flux);
        ev.step();
        worst = worst.max(deviation(&state, &ev));
    }
    Ok(worst)
}
