//! Time-varying backstepping kernel equations on triangular domains, solved
//! by successive approximation in characteristic coordinates.
//!
//! Controller kernel (lower triangle `0 ≤ ζ ≤ z ≤ 1`):
//! `k_t = λ(k_zz − k_ζζ) − (a(ζ,t) + μ)k`, Robin data `k_ζ(z,0) = q k(z,0)`
//! and diagonal trace `k(z,z,t) = q(t) − ∫₀ᶻ (a+μ)/(2λ)`.
//!
//! Observer kernel (upper triangle `0 ≤ z ≤ ζ ≤ 1`):
//! `p_t = λ(p_zz − p_ζζ) + (a(z,t) + μ̄)p`, `p_z(0,ζ) = q p(0,ζ)`, same
//! diagonal trace form.
//!
//! In the characteristic variables `ξ = z + ζ`, `η = |z − ζ|` both problems
//! live on the same triangle `{η ≤ ξ ≤ 2 − η}` and differ only in the sign
//! of the time-derivative source:
//! `G_ξη = [(a((ξ−η)/2, t) + μ) G ± G_t] / (4λ)`.
//! Integrating the wave operator exactly yields a Volterra-type fixed point;
//! the time derivative is taken from the previous iterate by second-order
//! finite differences on the time grid.

use crate::grid::{trap_weight, Grid, TimeGrid};
use crate::{Error, Result};

/// Which triangular domain (and time-derivative sign) a kernel lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// State-feedback kernel on `0 ≤ ζ ≤ z ≤ 1`.
    Controller,
    /// Observer kernel on `0 ≤ z ≤ ζ ≤ 1`.
    Observer,
}

/// Coefficients the kernel equations take from a normalized agent.
pub struct KernelProblem<'a> {
    /// Constant diffusion of the normalized agent.
    pub lambda: f64,
    /// Target-system decay rate (`μ` or `μ̄`).
    pub mu: f64,
    /// Reaction coefficient `a(z, t)` (without `μ`).
    pub reaction: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    /// Robin coefficient `q(t)` at the uncontrolled boundary.
    pub robin: &'a (dyn Fn(f64) -> f64 + Sync),
}

/// Backstepping kernel sampled on its triangular domain × time grid.
#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub kind: KernelKind,
    /// Spatial nodes per axis on `[0, 1]`.
    pub n: usize,
    pub tgrid: TimeGrid,
    /// Triangle-packed samples per time slice.
    data: Vec<f64>,
    tri_size: usize,
    /// Successive-approximation sweeps used.
    pub iterations: usize,
    /// Relative sup-norm change at termination.
    pub final_change: f64,
}

impl KernelSolution {
    fn tri_index(&self, i: usize, j: usize) -> usize {
        match self.kind {
            KernelKind::Controller => {
                debug_assert!(j <= i && i < self.n);
                i * (i + 1) / 2 + j
            }
            KernelKind::Observer => {
                debug_assert!(i <= j && j < self.n);
                i * (2 * self.n - i + 1) / 2 + (j - i)
            }
        }
    }

    /// Kernel value `k(z_i, ζ_j, t_it)`; `(i, j)` must lie in the domain
    /// triangle.
    #[inline]
    pub fn value(&self, it: usize, i: usize, j: usize) -> f64 {
        self.data[it * self.tri_size + self.tri_index(i, j)]
    }

    pub fn grid(&self) -> Grid {
        Grid::unit(self.n)
    }

    /// Diagonal corner trace `k(1, 1, t)`.
    pub fn corner_trace(&self, it: usize) -> f64 {
        self.value(it, self.n - 1, self.n - 1)
    }

    /// `k(z_i, 0, t)` (controller domain).
    pub fn edge_zeta0(&self, it: usize) -> Vec<f64> {
        assert_eq!(self.kind, KernelKind::Controller);
        (0..self.n).map(|i| self.value(it, i, 0)).collect()
    }

    /// `p(z_i, 1, t)` (observer domain).
    pub fn edge_zeta1(&self, it: usize) -> Vec<f64> {
        assert_eq!(self.kind, KernelKind::Observer);
        (0..self.n).map(|i| self.value(it, i, self.n - 1)).collect()
    }

    /// `k_z(1, ζ_j, t)` by one-sided differences in `z` (controller domain);
    /// the last two nodes fall back to first-order and extrapolation.
    pub fn dz_at_z1(&self, it: usize) -> Vec<f64> {
        assert_eq!(self.kind, KernelKind::Controller);
        let n = self.n;
        let h = self.grid().h();
        let mut out = vec![0.0; n];
        for j in 0..n {
            out[j] = if j + 3 <= n - 1 {
                (3.0 * self.value(it, n - 1, j) - 4.0 * self.value(it, n - 2, j)
                    + self.value(it, n - 3, j))
                    / (2.0 * h)
            } else if j + 2 <= n - 1 {
                (self.value(it, n - 1, j) - self.value(it, n - 2, j)) / h
            } else {
                0.0 // filled by extrapolation below
            };
        }
        if n >= 3 {
            out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
        }
        out
    }

    /// `p_ζ(z_i, 1, t)` by one-sided differences in `ζ` (observer domain).
    pub fn dzeta_at_zeta1(&self, it: usize) -> Vec<f64> {
        assert_eq!(self.kind, KernelKind::Observer);
        let n = self.n;
        let h = self.grid().h();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = if i + 3 <= n - 1 {
                (3.0 * self.value(it, i, n - 1) - 4.0 * self.value(it, i, n - 2)
                    + self.value(it, i, n - 3))
                    / (2.0 * h)
            } else if i + 2 <= n - 1 {
                (self.value(it, i, n - 1) - self.value(it, i, n - 2)) / h
            } else {
                0.0
            };
        }
        if n >= 3 {
            out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
        }
        out
    }

    /// Apply the Volterra transform `x(z) − ∫ k(z, ζ, t) x(ζ) dζ` with
    /// trapezoid quadrature over the kernel's triangle.
    pub fn apply(&self, it: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "profile length must match the kernel grid");
        let n = self.n;
        let h = self.grid().h();
        let mut out = vec![0.0; n];
        match self.kind {
            KernelKind::Controller => {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += trap_weight(j, i, h) * self.value(it, i, j) * x[j];
                    }
                    out[i] = x[i] - acc;
                }
            }
            KernelKind::Observer => {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in i..n {
                        acc += trap_weight(j - i, n - 1 - i, h) * self.value(it, i, j) * x[j];
                    }
                    out[i] = x[i] - acc;
                }
            }
        }
        out
    }

    /// Inverse (resolvent) kernel: a kernel of the same orientation whose
    /// [`apply`](Self::apply) inverts this transform exactly on the grid.
    /// Obtained by solving the discrete Volterra system `(I − K)X = I`
    /// slice by slice via triangular substitution.
    pub fn invert(&self) -> KernelSolution {
        let n = self.n;
        let h = self.grid().h();
        let mut inv = KernelSolution {
            kind: self.kind,
            n,
            tgrid: self.tgrid,
            data: vec![0.0; self.data.len()],
            tri_size: self.tri_size,
            iterations: 0,
            final_change: 0.0,
        };
        for it in 0..self.tgrid.nt {
            match self.kind {
                KernelKind::Controller => {
                    // forward substitution per column j of (I − W∘K)X = I
                    for j in 0..n {
                        let mut col = vec![0.0; n];
                        for i in j..n {
                            let mut rhs = if i == j { 1.0 } else { 0.0 };
                            for s in j..i {
                                rhs += trap_weight(s, i, h) * self.value(it, i, s) * col[s];
                            }
                            let diag = 1.0 - trap_weight(i, i, h) * self.value(it, i, i);
                            col[i] = rhs / diag;
                        }
                        for i in j..n {
                            let r = if i == j { col[i] - 1.0 } else { col[i] };
                            let w = trap_weight(j, i, h);
                            // the z = 0 row carries no quadrature weight
                            let v = if w > 0.0 { -r / w } else { self.value(it, i, j) };
                            let idx = it * self.tri_size + inv.tri_index(i, j);
                            inv.data[idx] = v;
                        }
                    }
                }
                KernelKind::Observer => {
                    for j in 0..n {
                        let mut col = vec![0.0; n];
                        for i in (0..=j).rev() {
                            let mut rhs = if i == j { 1.0 } else { 0.0 };
                            for s in i + 1..=j {
                                rhs += trap_weight(s - i, n - 1 - i, h)
                                    * self.value(it, i, s)
                                    * col[s];
                            }
                            let diag =
                                1.0 - trap_weight(0, n - 1 - i, h) * self.value(it, i, i);
                            col[i] = rhs / diag;
                        }
                        for i in 0..=j {
                            let r = if i == j { col[i] - 1.0 } else { col[i] };
                            let w = trap_weight(j - i, n - 1 - i, h);
                            let v = if w > 0.0 { -r / w } else { self.value(it, i, j) };
                            let idx = it * self.tri_size + inv.tri_index(i, j);
                            inv.data[idx] = v;
                        }
                    }
                }
            }
        }
        inv
    }

    /// Sup norm of the discrete PDE residual on strictly interior nodes,
    /// away from the first/last time slices (centered second differences).
    pub fn interior_pde_residual(&self, problem: &KernelProblem) -> f64 {
        let n = self.n;
        let nt = self.tgrid.nt;
        if n < 5 || nt < 5 {
            return 0.0;
        }
        let h = self.grid().h();
        let dt = self.tgrid.dt;
        let lam = problem.lambda;
        let mut worst = 0.0_f64;
        for it in 2..nt - 2 {
            let t = self.tgrid.t(it);
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let inside = match self.kind {
                        KernelKind::Controller => i >= j + 2,
                        KernelKind::Observer => j >= i + 2,
                    };
                    if !inside {
                        continue;
                    }
                    let v = |di: i64, dj: i64, dit: i64| {
                        self.value(
                            (it as i64 + dit) as usize,
                            (i as i64 + di) as usize,
                            (j as i64 + dj) as usize,
                        )
                    };
                    let kt = (v(0, 0, 1) - v(0, 0, -1)) / (2.0 * dt);
                    let kzz = (v(1, 0, 0) - 2.0 * v(0, 0, 0) + v(-1, 0, 0)) / (h * h);
                    let kqq = (v(0, 1, 0) - 2.0 * v(0, 0, 0) + v(0, -1, 0)) / (h * h);
                    let (za, sign) = match self.kind {
                        KernelKind::Controller => (self.grid().point(j), -1.0),
                        KernelKind::Observer => (self.grid().point(i), 1.0),
                    };
                    let reac = (problem.reaction)(za, t) + problem.mu;
                    let res = kt - lam * (kzz - kqq) - sign * reac * v(0, 0, 0);
                    worst = worst.max(res.abs());
                }
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Characteristic-plane successive approximation.
// ---------------------------------------------------------------------------

/// Lattice bookkeeping for the triangle `{η_b ≤ ξ_a ≤ 2 − η_b}` with common
/// step `h` on both axes.
struct CharLattice {
    n: usize,
    offsets: Vec<usize>,
    size: usize,
}

impl CharLattice {
    fn new(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for b in 0..n {
            offsets.push(acc);
            acc += 2 * (n - 1 - b) + 1;
        }
        CharLattice {
            n,
            offsets,
            size: acc,
        }
    }

    #[inline]
    fn idx(&self, a: usize, b: usize) -> usize {
        debug_assert!(b <= a && a + b <= 2 * (self.n - 1));
        self.offsets[b] + (a - b)
    }

    #[inline]
    fn row_max_a(&self, b: usize) -> usize {
        2 * (self.n - 1) - b
    }
}

struct SliceCoeffs {
    /// `a((m·h)/2, t) + μ` on the half-step lattice, `m = 0..=2(n−1)`.
    r_half: Vec<f64>,
    /// Diagonal data `f(ξ_a) = q(t) − ∫₀^{ξ_a/2} (a+μ)/(2λ)`.
    f: Vec<f64>,
    /// `f'(ξ_a) = −(a(ξ_a/2, t)+μ)/(4λ)`.
    fp: Vec<f64>,
    q: f64,
}

fn slice_coeffs(problem: &KernelProblem, n: usize, t: f64) -> SliceCoeffs {
    let h = 1.0 / (n - 1) as f64;
    let nh = 2 * (n - 1) + 1;
    let lam = problem.lambda;
    let mut r_half = vec![0.0; nh];
    for (m, r) in r_half.iter_mut().enumerate() {
        *r = (problem.reaction)(0.5 * h * m as f64, t) + problem.mu;
    }
    let q = (problem.robin)(t);
    // cumulative trapezoid of (a+μ)/(2λ) with step h/2 along the diagonal
    let mut f = vec![0.0; nh];
    let mut acc = 0.0;
    f[0] = q;
    for m in 1..nh {
        acc += 0.25 * h * (r_half[m - 1] + r_half[m]) / (2.0 * lam);
        f[m] = q - acc;
    }
    let fp = r_half.iter().map(|r| -r / (4.0 * lam)).collect();
    SliceCoeffs { r_half, f, fp, q }
}

/// Solve a kernel problem by successive approximation. `n` is the node
/// count per spatial axis, `tol` the relative sup-norm stopping threshold.
pub fn solve_kernel(
    kind: KernelKind,
    problem: &KernelProblem,
    n: usize,
    tgrid: TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    if n < 3 {
        return Err(Error::Kernel("kernel grid needs at least 3 nodes".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Kernel("stopping tolerance must be positive".into()));
    }
    let lat = CharLattice::new(n);
    let h = 1.0 / (n - 1) as f64;
    let nt = tgrid.nt;
    let lam = problem.lambda;
    let time_sign = match kind {
        KernelKind::Controller => 1.0,
        KernelKind::Observer => -1.0,
    };

    let coeffs: Vec<SliceCoeffs> = (0..nt)
        .map(|it| slice_coeffs(problem, n, tgrid.t(it)))
        .collect();

    let vol = lat.size * nt;
    let mut g_prev = vec![0.0; vol];
    let mut g_next = vec![0.0; vol];
    let mut phi = vec![0.0; lat.size];
    let mut i1 = vec![0.0; lat.size];
    let mut psi = vec![0.0; n];
    let mut iterations = 0;
    let mut rel_change = f64::INFINITY;

    for sweep in 0..max_iter {
        let mut max_delta = 0.0_f64;
        let mut max_val = 0.0_f64;
        for it in 0..nt {
            let co = &coeffs[it];
            let base = it * lat.size;
            // Φ from the previous iterate (reaction + time-derivative source)
            {
                let (w_m1, w_0, w_p1, off) = if nt < 3 {
                    (0.0, 0.0, 0.0, 0i64)
                } else if it == 0 {
                    (-3.0, 4.0, -1.0, 1) // one-sided over slices 0, 1, 2
                } else if it == nt - 1 {
                    (1.0, -4.0, 3.0, -1)
                } else {
                    (-1.0, 0.0, 1.0, 0)
                };
                let s_m1 = ((it as i64 + off - 1).max(0) as usize) * lat.size;
                let s_0 = ((it as i64 + off).max(0) as usize) * lat.size;
                let s_p1 = (((it as i64 + off + 1).max(0) as usize).min(nt - 1)) * lat.size;
                let inv2dt = 1.0 / (2.0 * tgrid.dt);
                for b in 0..n {
                    for a in b..=lat.row_max_a(b) {
                        let k = lat.idx(a, b);
                        let gt = if nt < 3 {
                            0.0
                        } else {
                            (w_m1 * g_prev[s_m1 + k]
                                + w_0 * g_prev[s_0 + k]
                                + w_p1 * g_prev[s_p1 + k])
                                * inv2dt
                        };
                        phi[k] =
                            (co.r_half[a - b] * g_prev[base + k] + time_sign * gt) / (4.0 * lam);
                    }
                }
            }
            // I1(a, b) = ∫₀^{η_b} Φ(ξ_a, ·), trapezoid marching in b
            for a in 0..=lat.row_max_a(0) {
                i1[lat.idx(a, 0)] = 0.0;
            }
            for b in 1..n {
                for a in b..=lat.row_max_a(b) {
                    i1[lat.idx(a, b)] = i1[lat.idx(a, b - 1)]
                        + 0.5 * h * (phi[lat.idx(a, b - 1)] + phi[lat.idx(a, b)]);
                }
            }
            // boundary ODE ψ' + qψ = 2f' + 2 I1 along the ξ = η edge
            psi[0] = co.f[0];
            for s in 0..n - 1 {
                let r0 = 2.0 * co.fp[s] + 2.0 * i1[lat.idx(s, s)];
                let r1 = 2.0 * co.fp[s + 1] + 2.0 * i1[lat.idx(s + 1, s + 1)];
                psi[s + 1] = ((1.0 - 0.5 * co.q * h) * psi[s] + 0.5 * h * (r0 + r1))
                    / (1.0 + 0.5 * co.q * h);
            }
            // G_new = ψ(η) + f(ξ) − f(η) + ∫∫ Φ, marching the outer integral
            for b in 0..n {
                let mut d = 0.0;
                for a in b..=lat.row_max_a(b) {
                    if a > b {
                        d += 0.5 * h * (i1[lat.idx(a - 1, b)] + i1[lat.idx(a, b)]);
                    }
                    let k = lat.idx(a, b);
                    let val = psi[b] + co.f[a] - co.f[b] + d;
                    max_delta = max_delta.max((val - g_prev[base + k]).abs());
                    max_val = max_val.max(val.abs());
                    g_next[base + k] = val;
                }
            }
        }
        iterations = sweep + 1;
        rel_change = if max_val > 0.0 {
            max_delta / max_val
        } else {
            0.0
        };
        std::mem::swap(&mut g_prev, &mut g_next);
        if rel_change <= tol {
            break;
        }
    }
    if rel_change > tol {
        return Err(Error::Kernel(format!(
            "successive approximation did not reach tol {tol:.1e} within {max_iter} sweeps \
             (last relative change {rel_change:.3e})"
        )));
    }

    // sample down to the (z, ζ) triangle: k(z_i, ζ_j) = G(ξ_{i+j}, η_{|i−j|})
    let tri_size = n * (n + 1) / 2;
    let mut sol = KernelSolution {
        kind,
        n,
        tgrid,
        data: vec![0.0; tri_size * nt],
        tri_size,
        iterations,
        final_change: rel_change,
    };
    for it in 0..nt {
        let base = it * lat.size;
        for i in 0..n {
            match kind {
                KernelKind::Controller => {
                    for j in 0..=i {
                        let v = g_prev[base + lat.idx(i + j, i - j)];
                        let idx = it * tri_size + sol.tri_index(i, j);
                        sol.data[idx] = v;
                    }
                }
                KernelKind::Observer => {
                    for j in i..n {
                        let v = g_prev[base + lat.idx(i + j, j - i)];
                        let idx = it * tri_size + sol.tri_index(i, j);
                        sol.data[idx] = v;
                    }
                }
            }
        }
    }
    Ok(sol)
}

/// Controller kernel for a normalized agent description.
pub fn solve_controller_kernel(
    problem: &KernelProblem,
    n: usize,
    tgrid: TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    solve_kernel(KernelKind::Controller, problem, n, tgrid, tol, max_iter)
}

/// Observer kernel for a normalized agent description.
pub fn solve_observer_kernel(
    problem: &KernelProblem,
    n: usize,
    tgrid: TimeGrid,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    solve_kernel(KernelKind::Observer, problem, n, tgrid, tol, max_iter)
}
