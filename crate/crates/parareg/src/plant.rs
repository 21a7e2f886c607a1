//! Parabolic agent in original coordinates, the Crank–Nicolson
//! method-of-lines stepper, and the normalization transforms (spatial
//! rescaling plus Hopf–Cole state scaling) onto the unit domain with
//! constant diffusion and zero convection.

use crate::exosys::Exosystem;
use crate::grid::{interp_cubic_uniform, solve_tridiagonal, Grid};
use crate::signal::{Expr, SpaceTimeCoeff, TimeSignal, Var};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

// Gauss–Legendre 5-point rule on [-1, 1], reused by the map construction.
const GL5_X: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL5_W: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// One parabolic agent in original coordinates:
/// `ẋ = λ(z) x'' + φ(z) x' + a(z,t) x + g₁ᵀ(z,t) d(t)` on `[0, ℓ]` with
/// Robin boundary data, boundary input `b·u` and disturbance couplings.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub length: f64,
    pub lambda: Expr,
    pub convection: Expr,
    pub reaction: SpaceTimeCoeff,
    pub q0: TimeSignal,
    pub ql: TimeSignal,
    pub b: f64,
    pub c: f64,
    pub c_m: f64,
    pub g1: Vec<SpaceTimeCoeff>,
    pub g2: Vec<TimeSignal>,
    pub g3: Vec<TimeSignal>,
    pub g4: Vec<TimeSignal>,
    /// Local disturbance model `(S_i, P_i)`; `P_i` has one row per
    /// disturbance channel.
    pub disturbance: Exosystem,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::Plant("domain length must be positive".into()));
        }
        if self.b == 0.0 || self.c == 0.0 || self.c_m == 0.0 {
            return Err(Error::Plant("b, c and c_m must be nonzero".into()));
        }
        if self.lambda.uses_time() {
            return Err(Error::Plant("λ must not depend on time".into()));
        }
        if self.convection.uses_time() {
            return Err(Error::Plant("φ must not depend on time".into()));
        }
        let m = self.disturbance.n_out();
        for (name, len) in [
            ("g1", self.g1.len()),
            ("g2", self.g2.len()),
            ("g3", self.g3.len()),
            ("g4", self.g4.len()),
        ] {
            if len != m {
                return Err(Error::Plant(format!(
                    "{name} has {len} components but the disturbance has {m} channels"
                )));
            }
        }
        // λ bounded away from zero on a sampling of the domain
        for i in 0..=200 {
            let z = self.length * i as f64 / 200.0;
            let l = self.lambda.eval(z, 0.0);
            if !(l > 0.0) {
                return Err(Error::Plant(format!(
                    "λ({z:.4}) = {l:.4e} is not strictly positive"
                )));
            }
        }
        Ok(())
    }

    pub fn n_dist_channels(&self) -> usize {
        self.disturbance.n_out()
    }
}

/// Coefficient access used by the Crank–Nicolson stepper; implemented by the
/// original agent and by its normalized image.
pub trait AgentDynamics: Sync {
    fn length(&self) -> f64;
    fn lambda_at(&self, z: f64) -> f64;
    fn convection_at(&self, z: f64) -> f64;
    fn reaction_at(&self, z: f64, t: f64) -> f64;
    fn q0_at(&self, t: f64) -> f64;
    fn ql_at(&self, t: f64) -> f64;
    fn b(&self) -> f64;
    fn c(&self) -> f64;
    fn c_m(&self) -> f64;
    fn n_dist(&self) -> usize;
    fn g1_at(&self, z: f64, t: f64, out: &mut [f64]);
    fn g2_at(&self, t: f64, out: &mut [f64]);
    fn g3_at(&self, t: f64, out: &mut [f64]);
    fn g4_at(&self, t: f64, out: &mut [f64]);
}

impl AgentDynamics for AgentSpec {
    fn length(&self) -> f64 {
        self.length
    }
    fn lambda_at(&self, z: f64) -> f64 {
        self.lambda.eval(z, 0.0)
    }
    fn convection_at(&self, z: f64) -> f64 {
        self.convection.eval(z, 0.0)
    }
    fn reaction_at(&self, z: f64, t: f64) -> f64 {
        self.reaction.eval(z, t)
    }
    fn q0_at(&self, t: f64) -> f64 {
        self.q0.eval(t)
    }
    fn ql_at(&self, t: f64) -> f64 {
        self.ql.eval(t)
    }
    fn b(&self) -> f64 {
        self.b
    }
    fn c(&self) -> f64 {
        self.c
    }
    fn c_m(&self) -> f64 {
        self.c_m
    }
    fn n_dist(&self) -> usize {
        self.g1.len()
    }
    fn g1_at(&self, z: f64, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.g1) {
            *o = g.eval(z, t);
        }
    }
    fn g2_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.g2) {
            *o = g.eval(t);
        }
    }
    fn g3_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.g3) {
            *o = g.eval(t);
        }
    }
    fn g4_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.g4) {
            *o = g.eval(t);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Crank–Nicolson stepper with ghost-node Robin boundary conditions; one
/// instance per agent, reused across steps.
pub struct PlantStepper<'a, D: AgentDynamics + ?Sized> {
    pub dynamics: &'a D,
    pub grid: Grid,
    lambda: Vec<f64>,
    phi: Vec<f64>,
    m: usize,
}

struct RowData {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    cst: Vec<f64>,
}

impl<'a, D: AgentDynamics + ?Sized> PlantStepper<'a, D> {
    pub fn new(dynamics: &'a D, nz: usize) -> Self {
        let grid = Grid::new(0.0, dynamics.length(), nz);
        let lambda = grid.points().iter().map(|&z| dynamics.lambda_at(z)).collect();
        let phi = grid.points().iter().map(|&z| dynamics.convection_at(z)).collect();
        PlantStepper {
            dynamics,
            grid,
            lambda,
            phi,
            m: dynamics.n_dist(),
        }
    }

    /// Tridiagonal rows of `A(t)` plus the constant forcing vector, so that
    /// `ẋ = A(t)x + cst(t)`.
    fn assemble(&self, t: f64, u: f64, d: &[f64]) -> RowData {
        let n = self.grid.n;
        let h = self.grid.h();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut cst = vec![0.0; n];
        let dynx = self.dynamics;
        let mut gbuf = vec![0.0; self.m];

        let q0 = dynx.q0_at(t);
        let ql = dynx.ql_at(t);
        dynx.g2_at(t, &mut gbuf);
        let gd2 = dot(&gbuf, d);
        dynx.g3_at(t, &mut gbuf);
        let gd3 = dot(&gbuf, d);

        for i in 0..n {
            let z = self.grid.point(i);
            let (lam, phi) = (self.lambda[i], self.phi[i]);
            let a = dynx.reaction_at(z, t);
            dynx.g1_at(z, t, &mut gbuf);
            cst[i] = dot(&gbuf, d);
            if i == 0 {
                // ghost node from x'(0) = q0 x(0) + g2ᵀd
                diag[0] = -2.0 * lam / (h * h) - 2.0 * lam * q0 / h + phi * q0 + a;
                sup[0] = 2.0 * lam / (h * h);
                cst[0] += (-2.0 * lam / h + phi) * gd2;
            } else if i == n - 1 {
                // ghost node from x'(ℓ) = ql x(ℓ) + b u + g3ᵀd
                sub[n - 1] = 2.0 * lam / (h * h);
                diag[n - 1] = -2.0 * lam / (h * h) + 2.0 * lam * ql / h + phi * ql + a;
                cst[n - 1] += (2.0 * lam / h + phi) * (dynx.b() * u + gd3);
            } else {
                sub[i] = lam / (h * h) - phi / (2.0 * h);
                diag[i] = -2.0 * lam / (h * h) + a;
                sup[i] = lam / (h * h) + phi / (2.0 * h);
            }
        }
        RowData { sub, diag, sup, cst }
    }

    /// One implicit trapezoidal step from `t` to `t + dt`; the control `u`
    /// is held over the step, disturbance samples are taken at both ends.
    pub fn step(&self, x: &mut Vec<f64>, t: f64, dt: f64, u: f64, d_now: &[f64], d_next: &[f64]) {
        let n = self.grid.n;
        let now = self.assemble(t, u, d_now);
        let next = self.assemble(t + dt, u, d_next);
        // rhs = (I + dt/2 A(t)) x + dt/2 (cst(t) + cst(t+dt))
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let mut v = x[i] + 0.5 * dt * (now.diag[i] * x[i] + now.cst[i] + next.cst[i]);
            if i > 0 {
                v += 0.5 * dt * now.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                v += 0.5 * dt * now.sup[i] * x[i + 1];
            }
            rhs[i] = v;
        }
        let sub: Vec<f64> = next.sub.iter().map(|v| -0.5 * dt * v).collect();
        let sup: Vec<f64> = next.sup.iter().map(|v| -0.5 * dt * v).collect();
        let diag: Vec<f64> = next.diag.iter().map(|v| 1.0 - 0.5 * dt * v).collect();
        *x = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    }
}

/// Controlled output `y = c x(0) + g₄ᵀ d` and collocated measurement
/// `η = c_m x(ℓ)`.
pub fn read_outputs<D: AgentDynamics + ?Sized>(
    dynamics: &D,
    x: &[f64],
    t: f64,
    d: &[f64],
) -> (f64, f64) {
    let mut g4 = vec![0.0; dynamics.n_dist()];
    dynamics.g4_at(t, &mut g4);
    let y = dynamics.c() * x[0] + dot(&g4, d);
    let eta = dynamics.c_m() * x[x.len() - 1];
    (y, eta)
}

// ---------------------------------------------------------------------------
// Normalization.
// ---------------------------------------------------------------------------

const MAP_FINE_POINTS: usize = 4001;

/// Bijection `[0, ℓ] ↔ [0, 1]` with the Hopf–Cole state scaling that renders
/// the diffusion constant and removes convection.
///
/// Spatial map: `z̃(z) = ∫₀ᶻ λ^{-1/2} / ∫₀^ℓ λ^{-1/2}`, giving constant
/// diffusion `λ̃ = 1/(∫₀^ℓ λ^{-1/2})²`. State scaling:
/// `x̃(z̃) = ρ(z̃) x(z)` with `ρ = exp(∫ φ̃/(2λ̃))`, where `φ̃` is the
/// convection induced by the spatial map.
#[derive(Debug, Clone)]
pub struct CoordinateMap {
    pub length: f64,
    pub lambda_tilde: f64,
    /// `dz̃/dz` at the ends.
    pub hprime_0: f64,
    pub hprime_l: f64,
    /// `φ̃/(2λ̃)` at `z̃ = 0` and `z̃ = 1`.
    pub g_0: f64,
    pub g_1: f64,
    /// `ρ(1)`.
    pub rho_end: f64,
    fine_z: Grid,
    fine_zt: Vec<f64>,
    fine_hp: Vec<f64>,
    fine_hpp: Vec<f64>,
    fine_e: Vec<f64>,
    fine_ep: Vec<f64>,
}

impl CoordinateMap {
    fn hermite(x: f64, grid: &Grid, vals: &[f64], derivs: &[f64]) -> f64 {
        let h = grid.h();
        let s = ((x - grid.a) / h).clamp(0.0, (grid.n - 1) as f64);
        let i = (s.floor() as usize).min(grid.n - 2);
        let u = s - i as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * vals[i]
            + (u3 - 2.0 * u2 + u) * h * derivs[i]
            + (-2.0 * u3 + 3.0 * u2) * vals[i + 1]
            + (u3 - u2) * h * derivs[i + 1]
    }

    /// `z̃(z)`.
    pub fn z_normalized(&self, z: f64) -> f64 {
        Self::hermite(z, &self.fine_z, &self.fine_zt, &self.fine_hp).clamp(0.0, 1.0)
    }

    /// Inverse map `z(z̃)` by bisection bracket plus Newton refinement.
    pub fn z_original(&self, zt: f64) -> f64 {
        let zt = zt.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0usize, self.fine_zt.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.fine_zt[mid] <= zt {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.fine_z.h();
        let mut z = self.fine_z.point(lo)
            + h * (zt - self.fine_zt[lo]) / (self.fine_zt[hi] - self.fine_zt[lo]).max(1e-300);
        for _ in 0..4 {
            let f = Self::hermite(z, &self.fine_z, &self.fine_zt, &self.fine_hp) - zt;
            let fp = Self::hermite(z, &self.fine_z, &self.fine_hp, &self.fine_hpp);
            if fp.abs() < 1e-300 {
                break;
            }
            z = (z - f / fp).clamp(0.0, self.length);
        }
        z
    }

    /// `ρ(z̃)`.
    pub fn rho(&self, zt: f64) -> f64 {
        let z = self.z_original(zt);
        Self::hermite(z, &self.fine_z, &self.fine_e, &self.fine_ep).exp()
    }

    /// Map a profile on the original grid to the normalized grid.
    pub fn to_normalized(&self, x: &[f64], grid_orig: &Grid, nz_norm: usize) -> Vec<f64> {
        let gn = Grid::unit(nz_norm);
        (0..nz_norm)
            .map(|i| {
                let zt = gn.point(i);
                let z = self.z_original(zt);
                self.rho(zt) * interp_cubic_uniform(x, grid_orig, z)
            })
            .collect()
    }

    /// Map a normalized profile back to the original grid.
    pub fn from_normalized(&self, xt: &[f64], grid_norm: &Grid, nz_orig: usize) -> Vec<f64> {
        let go = Grid::new(0.0, self.length, nz_orig);
        (0..nz_orig)
            .map(|i| {
                let z = go.point(i);
                let zt = self.z_normalized(z);
                interp_cubic_uniform(xt, grid_norm, zt) / self.rho(zt)
            })
            .collect()
    }
}

/// Agent mapped to the unit domain: constant diffusion, zero convection,
/// transformed boundary/output coefficients and disturbance couplings.
#[derive(Clone)]
pub struct NormalizedAgent {
    pub map: Arc<CoordinateMap>,
    spec: Arc<AgentSpec>,
    pub lambda: f64,
    pub b: f64,
    pub c: f64,
    pub c_m: f64,
    g2_scale: f64,
    g3_scale: f64,
}

impl std::fmt::Debug for NormalizedAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormalizedAgent")
            .field("lambda", &self.lambda)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("c_m", &self.c_m)
            .finish()
    }
}

/// Build the coordinate map and the normalized agent.
pub fn normalize_agent(spec: &AgentSpec) -> Result<NormalizedAgent> {
    spec.validate()?;
    let l = spec.length;
    let fine_z = Grid::new(0.0, l, MAP_FINE_POINTS);
    let h = fine_z.h();

    // cumulative ∫ λ^{-1/2} via per-cell Gauss quadrature
    let inv_sqrt = |z: f64| spec.lambda.eval(z, 0.0).powf(-0.5);
    let mut cum = vec![0.0; MAP_FINE_POINTS];
    for i in 0..MAP_FINE_POINTS - 1 {
        let a = fine_z.point(i);
        let mut cell = 0.0;
        for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
            cell += w * inv_sqrt(a + 0.5 * h * (x + 1.0));
        }
        cum[i + 1] = cum[i] + 0.5 * h * cell;
    }
    let c_h = cum[MAP_FINE_POINTS - 1];
    let lambda_tilde = 1.0 / (c_h * c_h);
    let fine_zt: Vec<f64> = cum.iter().map(|v| v / c_h).collect();
    let fine_hp: Vec<f64> = fine_z.points().iter().map(|&z| inv_sqrt(z) / c_h).collect();
    // d²z̃/dz² = -λ'/(2 λ^{3/2} c_h), used by the Newton refinement
    let fine_hpp: Vec<f64> = fine_z
        .points()
        .iter()
        .map(|&z| {
            let lam = spec.lambda.derivs(Var::Space, z, 0.0, 1).expect("λ jet");
            -0.5 * lam[1] * lam[0].powf(-1.5) / c_h
        })
        .collect();

    // induced convection φ̃(z̃) = [φ(z) − λ'(z)/2]·λ^{-1/2}/c_h and its
    // Hopf–Cole exponent E(z) = ∫₀ᶻ g(z̃(ζ)) h'(ζ) dζ with g = φ̃/(2λ̃)
    let g_of_z = |z: f64| -> f64 {
        let lam = spec.lambda.derivs(Var::Space, z, 0.0, 1).expect("λ jet");
        let phi = spec.convection.eval(z, 0.0);
        let phit = (phi - 0.5 * lam[1]) * lam[0].powf(-0.5) / c_h;
        phit / (2.0 * lambda_tilde)
    };
    let mut fine_e = vec![0.0; MAP_FINE_POINTS];
    let mut fine_ep = vec![0.0; MAP_FINE_POINTS];
    for (i, ep) in fine_ep.iter_mut().enumerate() {
        let z = fine_z.point(i);
        *ep = g_of_z(z) * inv_sqrt(z) / c_h;
    }
    for i in 0..MAP_FINE_POINTS - 1 {
        let a = fine_z.point(i);
        let mut cell = 0.0;
        for (x, w) in GL5_X.iter().zip(GL5_W.iter()) {
            let z = a + 0.5 * h * (x + 1.0);
            cell += w * g_of_z(z) * inv_sqrt(z) / c_h;
        }
        fine_e[i + 1] = fine_e[i] + 0.5 * h * cell;
    }
    let rho_end = fine_e[MAP_FINE_POINTS - 1].exp();
    let hprime_0 = fine_hp[0];
    let hprime_l = fine_hp[MAP_FINE_POINTS - 1];
    let g_0 = g_of_z(0.0);
    let g_1 = g_of_z(l);

    let map = CoordinateMap {
        length: l,
        lambda_tilde,
        hprime_0,
        hprime_l,
        g_0,
        g_1,
        rho_end,
        fine_z,
        fine_zt,
        fine_hp,
        fine_hpp,
        fine_e,
        fine_ep,
    };

    Ok(NormalizedAgent {
        map: Arc::new(map),
        spec: Arc::new(spec.clone()),
        lambda: lambda_tilde,
        b: spec.b * rho_end / hprime_l,
        c: spec.c,
        c_m: spec.c_m / rho_end,
        g2_scale: 1.0 / hprime_0,
        g3_scale: rho_end / hprime_l,
    })
}

impl NormalizedAgent {
    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    /// Local disturbance model.
    pub fn disturbance(&self) -> &Exosystem {
        &self.spec.disturbance
    }

    pub fn n_v(&self) -> usize {
        self.spec.disturbance.dim()
    }

    /// `g(z̃)` and its z̃-derivative, both exact through coefficient jets.
    fn g_and_gprime(&self, zt: f64) -> (f64, f64) {
        let map = &self.map;
        let z = map.z_original(zt);
        let lam = self.spec.lambda.derivs(Var::Space, z, 0.0, 2).expect("λ jet");
        let phi = self.spec.convection.derivs(Var::Space, z, 0.0, 1).expect("φ jet");
        let c_h = 1.0 / map.lambda_tilde.sqrt();
        let li = lam[0].powf(-0.5);
        let phit = (phi[0] - 0.5 * lam[1]) * li / c_h;
        // d/dz of φ̃, then chain rule dz/dz̃ = 1/h'(z)
        let dphit_dz =
            ((phi[1] - 0.5 * lam[2]) * li + (phi[0] - 0.5 * lam[1]) * (-0.5) * li / lam[0] * lam[1])
                / c_h;
        let hp = li / c_h;
        let g = phit / (2.0 * map.lambda_tilde);
        let gp = dphit_dz / hp / (2.0 * map.lambda_tilde);
        (g, gp)
    }

    /// Transformed reaction coefficient `ã(z̃, t)`.
    pub fn reaction(&self, zt: f64, t: f64) -> f64 {
        let (g, gp) = self.g_and_gprime(zt);
        let z = self.map.z_original(zt);
        self.spec.reaction.eval(z, t) - self.map.lambda_tilde * (g * g + gp)
    }

    /// Transformed Robin coefficient at `z̃ = 0`.
    pub fn q0(&self, t: f64) -> f64 {
        self.spec.q0.eval(t) / self.map.hprime_0 + self.map.g_0
    }

    /// Transformed Robin coefficient at `z̃ = 1`.
    pub fn ql(&self, t: f64) -> f64 {
        self.spec.ql.eval(t) / self.map.hprime_l + self.map.g_1
    }

    /// Time derivatives `d^j/dt^j` of `g̃₂(t) = P_iᵀ ĝ₂(t)` for `j = 0..=order`.
    pub fn g2_tilde_derivs(&self, t: f64, order: usize) -> Result<Vec<DVector<f64>>> {
        self.coupling_derivs(&self.spec.g2, self.g2_scale, t, order)
    }

    pub fn g3_tilde_derivs(&self, t: f64, order: usize) -> Result<Vec<DVector<f64>>> {
        self.coupling_derivs(&self.spec.g3, self.g3_scale, t, order)
    }

    pub fn g4_tilde_derivs(&self, t: f64, order: usize) -> Result<Vec<DVector<f64>>> {
        self.coupling_derivs(&self.spec.g4, 1.0, t, order)
    }

    /// Time derivatives of `g̃₁(z̃, t) = P_iᵀ ĝ₁(z̃, t)` at fixed `z̃`.
    pub fn g1_tilde_derivs(&self, zt: f64, t: f64, order: usize) -> Result<Vec<DVector<f64>>> {
        let p = &self.spec.disturbance.out;
        let n_v = p.ncols();
        let z = self.map.z_original(zt);
        let rho = self.map.rho(zt);
        let mut out = vec![DVector::<f64>::zeros(n_v); order + 1];
        for (ch, g) in self.spec.g1.iter().enumerate() {
            let der = g.expr().derivs(Var::Time, z, t, order)?;
            for (j, dj) in der.iter().enumerate() {
                for k in 0..n_v {
                    out[j][k] += rho * dj * p[(ch, k)];
                }
            }
        }
        Ok(out)
    }

    fn coupling_derivs(
        &self,
        sig: &[TimeSignal],
        scale: f64,
        t: f64,
        order: usize,
    ) -> Result<Vec<DVector<f64>>> {
        let p = &self.spec.disturbance.out;
        let n_v = p.ncols();
        let mut out = vec![DVector::<f64>::zeros(n_v); order + 1];
        for (ch, g) in sig.iter().enumerate() {
            let der = g.derivs(t, order)?;
            for (j, dj) in der.iter().enumerate() {
                for k in 0..n_v {
                    out[j][k] += scale * dj * p[(ch, k)];
                }
            }
        }
        Ok(out)
    }

    /// Disturbance-model matrices.
    pub fn s_dist(&self) -> &DMatrix<f64> {
        &self.spec.disturbance.s
    }
}

impl AgentDynamics for NormalizedAgent {
    fn length(&self) -> f64 {
        1.0
    }
    fn lambda_at(&self, _z: f64) -> f64 {
        self.lambda
    }
    fn convection_at(&self, _z: f64) -> f64 {
        0.0
    }
    fn reaction_at(&self, z: f64, t: f64) -> f64 {
        self.reaction(z, t)
    }
    fn q0_at(&self, t: f64) -> f64 {
        self.q0(t)
    }
    fn ql_at(&self, t: f64) -> f64 {
        self.ql(t)
    }
    fn b(&self) -> f64 {
        self.b
    }
    fn c(&self) -> f64 {
        self.c
    }
    fn c_m(&self) -> f64 {
        self.c_m
    }
    fn n_dist(&self) -> usize {
        self.spec.g1.len()
    }
    fn g1_at(&self, z: f64, t: f64, out: &mut [f64]) {
        let zo = self.map.z_original(z);
        let rho = self.map.rho(z);
        for (o, g) in out.iter_mut().zip(&self.spec.g1) {
            *o = rho * g.eval(zo, t);
        }
    }
    fn g2_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.spec.g2) {
            *o = self.g2_scale * g.eval(t);
        }
    }
    fn g3_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.spec.g3) {
            *o = self.g3_scale * g.eval(t);
        }
    }
    fn g4_at(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.spec.g4) {
            *o = g.eval(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_norm, trapezoid};
    use crate::signal::parse_expr;

    fn empty_disturbance() -> Exosystem {
        Exosystem::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap()
    }

    fn simple_agent(length: f64, lambda: &str, convection: &str) -> AgentSpec {
        AgentSpec {
            length,
            lambda: parse_expr(lambda).unwrap(),
            convection: parse_expr(convection).unwrap(),
            reaction: SpaceTimeCoeff::parse("0").unwrap(),
            q0: TimeSignal::zero(),
            ql: TimeSignal::zero(),
            b: 1.0,
            c: 1.0,
            c_m: 1.0,
            g1: vec![SpaceTimeCoeff::parse("0").unwrap()],
            g2: vec![TimeSignal::zero()],
            g3: vec![TimeSignal::zero()],
            g4: vec![TimeSignal::zero()],
            disturbance: empty_disturbance(),
        }
    }

    #[test]
    fn identity_map_for_normalized_input() {
        let spec = simple_agent(1.0, "1", "0");
        let norm = normalize_agent(&spec).unwrap();
        assert!((norm.lambda - 1.0).abs() < 1e-12);
        assert!((norm.map.rho_end - 1.0).abs() < 1e-12);
        for i in 0..=10 {
            let z = i as f64 / 10.0;
            assert!((norm.map.z_normalized(z) - z).abs() < 1e-12);
            assert!((norm.map.z_original(z) - z).abs() < 1e-12);
            assert!((norm.map.rho(z) - 1.0).abs() < 1e-12);
        }
        assert!((norm.b - 1.0).abs() < 1e-12);
        assert!((norm.c_m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn length_two_scaling() {
        let spec = simple_agent(2.0, "1", "0");
        let norm = normalize_agent(&spec).unwrap();
        assert!((norm.lambda - 0.25).abs() < 1e-12, "λ̃ = λ/4");
        assert!((norm.map.z_normalized(1.0) - 0.5).abs() < 1e-12, "z̃ = z/2");
        assert!((norm.map.z_original(0.25) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_everything_stays_zero() {
        let spec = simple_agent(1.0, "1", "0");
        let stepper = PlantStepper::new(&spec, 21);
        let mut x = vec![0.0; 21];
        for k in 0..50 {
            stepper.step(&mut x, k as f64 * 0.01, 0.01, 0.0, &[0.0], &[0.0]);
        }
        assert!(x.iter().all(|v| v.abs() == 0.0));
    }

    #[test]
    fn outputs_formulae() {
        let mut spec = simple_agent(1.0, "1", "0");
        spec.c = 2.0;
        spec.g4 = vec![TimeSignal::constant(3.0)];
        let x = vec![1.0; 11];
        let (y, eta) = read_outputs(&spec, &x, 0.0, &[1.0]);
        assert_eq!(y, 5.0);
        assert_eq!(eta, 1.0);
        // measurement carries no disturbance term
        let (_, eta2) = read_outputs(&spec, &x, 0.0, &[77.0]);
        assert_eq!(eta2, eta);
    }

    #[test]
    fn neumann_diffusion_conserves_mass() {
        let spec = simple_agent(1.0, "1", "0");
        let stepper = PlantStepper::new(&spec, 41);
        let g = Grid::unit(41);
        let mut x: Vec<f64> = g
            .points()
            .iter()
            .map(|z| 1.0 + (3.0 * std::f64::consts::PI * z).cos())
            .collect();
        let m0 = trapezoid(&x, g.h());
        let dt = 1e-3;
        for k in 0..1000 {
            stepper.step(&mut x, k as f64 * dt, dt, 0.0, &[0.0], &[0.0]);
        }
        let m1 = trapezoid(&x, g.h());
        assert!((m1 - m0).abs() < 1e-8, "mass drift {}", (m1 - m0).abs());
    }

    #[test]
    fn decay_rate_matches_discrete_spectrum_oracle() {
        // a ≡ −μ, Neumann: slowest discrete mode decays at −μ exactly
        let mu = 4.0;
        let mut spec = simple_agent(1.0, "1", "0");
        spec.reaction = SpaceTimeCoeff::parse("-4").unwrap();
        let nz = 41;
        let stepper = PlantStepper::new(&spec, nz);
        let g = Grid::unit(nz);

        // dense discrete operator for the oracle
        let rows = stepper.assemble(0.0, 0.0, &[0.0]);
        let mut a = DMatrix::<f64>::zeros(nz, nz);
        for i in 0..nz {
            a[(i, i)] = rows.diag[i];
            if i > 0 {
                a[(i, i - 1)] = rows.sub[i];
            }
            if i + 1 < nz {
                a[(i, i + 1)] = rows.sup[i];
            }
        }
        let max_re = crate::linalg::max_re_eigenvalue(&a);
        assert!((max_re + mu).abs() < 1e-9);

        let mut x: Vec<f64> = g.points().iter().map(|z| 1.0 + 0.3 * (std::f64::consts::PI * z).cos()).collect();
        let dt = 5e-4;
        let mut ts = Vec::new();
        let mut norms = Vec::new();
        for k in 0..2000 {
            ts.push(k as f64 * dt);
            norms.push(l2_norm(&x, g.h()));
            stepper.step(&mut x, k as f64 * dt, dt, 0.0, &[0.0], &[0.0]);
        }
        let slope = crate::grid::fit_log_slope(&ts, &norms, 0.3, 0.9, 1e-12).unwrap();
        assert!(
            (slope - max_re).abs() < 0.02 * mu,
            "slope {slope} vs oracle {max_re}"
        );
    }

    #[test]
    fn manufactured_solution_second_order() {
        // x* = cos(πz) e^{-t} with matched interior source via g1·d, d ≡ 1
        let pi = std::f64::consts::PI;
        let exact = |z: f64, t: f64| (pi * z).cos() * (-t).exp();
        let source = "exp(-t) * ((1 + 0.3*z) * pi^2 * cos(pi*z) + 0.5*z*pi*sin(pi*z))";
        let mk = |_| {
            let mut s = simple_agent(1.0, "1 + 0.3*z", "0.5*z");
            s.reaction = SpaceTimeCoeff::parse("-1").unwrap();
            s.g1 = vec![SpaceTimeCoeff::parse(source).unwrap()];
            s
        };
        let run = |nz: usize, dt: f64| -> f64 {
            let spec = mk(());
            let stepper = PlantStepper::new(&spec, nz);
            let g = Grid::unit(nz);
            let mut x: Vec<f64> = g.points().iter().map(|&z| exact(z, 0.0)).collect();
            let steps = (0.5 / dt).round() as usize;
            for k in 0..steps {
                stepper.step(&mut x, k as f64 * dt, dt, 0.0, &[1.0], &[1.0]);
            }
            let t_end = steps as f64 * dt;
            g.points()
                .iter()
                .zip(&x)
                .map(|(&z, v)| (v - exact(z, t_end)).abs())
                .fold(0.0, f64::max)
        };
        let e1 = run(41, 2e-3);
        let e2 = run(81, 1e-3);
        let ratio = e1 / e2;
        assert!(
            (3.2..=4.8).contains(&ratio),
            "convergence ratio {ratio} (errors {e1:.3e}, {e2:.3e})"
        );
    }

    #[test]
    fn normalization_equivalence_smooth_agent() {
        // dual simulation: original vs normalized with mapped state and inputs
        let mut spec = simple_agent(1.0, "3 + sin(z)", "z^2");
        spec.reaction = SpaceTimeCoeff::parse("sin(z) - 2").unwrap();
        spec.q0 = TimeSignal::parse("0.3").unwrap();
        spec.ql = TimeSignal::parse("1 + 0.5*sin(t)").unwrap();
        let norm = normalize_agent(&spec).unwrap();

        let nz = 101;
        let go = Grid::new(0.0, spec.length, nz);
        let gn = Grid::unit(nz);
        let x0: Vec<f64> = go.points().iter().map(|&z| 1.0 + 0.2 * z).collect();
        let mut x = x0.clone();
        let mut xt = norm.map.to_normalized(&x0, &go, nz);

        let so = PlantStepper::new(&spec, nz);
        let sn = PlantStepper::new(&norm, nz);
        let dt = 5e-4;
        let u = |t: f64| (2.0 * t).sin();
        for k in 0..2000 {
            let t = k as f64 * dt;
            so.step(&mut x, t, dt, u(t), &[0.0], &[0.0]);
            sn.step(&mut xt, t, dt, u(t), &[0.0], &[0.0]);
        }
        let mapped_back = norm.map.from_normalized(&xt, &gn, nz);
        let diff: f64 = x
            .iter()
            .zip(&mapped_back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale: f64 = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        assert!(diff / scale < 2e-3, "relative mismatch {}", diff / scale);
        // boundary outputs are invariant under the transformation
        let (y_o, eta_o) = read_outputs(&spec, &x, 1.0, &[0.0]);
        let (y_n, eta_n) = read_outputs(&norm, &xt, 1.0, &[0.0]);
        assert!((y_o - y_n).abs() / scale < 2e-3);
        assert!((eta_o - eta_n).abs() / scale < 2e-3);
    }

    #[test]
    fn lambda_crossing_zero_rejected() {
        let spec = simple_agent(1.0, "0.5 - z", "0");
        assert!(normalize_agent(&spec).is_err());
    }
}
