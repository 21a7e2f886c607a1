//! Uniform grids, quadrature and finite-difference helpers shared by the
//! PDE solvers.

/// Uniform spatial grid on `[a, b]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2 && b > a);
        Grid { a, b, n }
    }

    /// Unit grid `[0, 1]`.
    pub fn unit(n: usize) -> Self {
        Grid::new(0.0, 1.0, n)
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.a + self.h() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }
}

/// Uniform time grid: `nt` nodes starting at `t0` with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, nt: usize) -> Self {
        assert!(nt >= 2 && dt > 0.0);
        TimeGrid { t0, dt, nt }
    }

    /// Grid covering `[t0, t1]` with step at most `dt` (node count rounded up).
    pub fn covering(t0: f64, t1: f64, dt: f64) -> Self {
        let nt = ((t1 - t0) / dt).ceil() as usize + 1;
        TimeGrid::new(t0, (t1 - t0) / (nt - 1) as f64, nt.max(2))
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.nt - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|i| self.t(i)).collect()
    }

    /// Fractional index of time `t`, clamped to the grid range.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.nt - 1) as f64);
        let i = (s.floor() as usize).min(self.nt - 2);
        (i, s - i as f64)
    }
}

/// Composite trapezoid on a uniform grid.
pub fn trapezoid(vals: &[f64], h: f64) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.5 * (vals[0] + vals[n - 1]);
    for v in &vals[1..n - 1] {
        s += v;
    }
    s * h
}

/// Trapezoid weight of node `j` in the prefix integral over nodes `0..=i`.
#[inline]
pub fn trap_weight(j: usize, i: usize, h: f64) -> f64 {
    if i == 0 {
        0.0
    } else if j == 0 || j == i {
        0.5 * h
    } else {
        h
    }
}

/// Composite Simpson on a uniform grid; odd interval counts are handled with
/// a 3/8 rule on the final three intervals (plain trapezoid when only one
/// interval is available).
pub fn simpson(vals: &[f64], h: f64) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let m = n - 1; // interval count
    if m == 1 {
        return 0.5 * h * (vals[0] + vals[1]);
    }
    if m == 2 {
        return h / 3.0 * (vals[0] + 4.0 * vals[1] + vals[2]);
    }
    if m % 2 == 0 {
        let mut s = vals[0] + vals[m];
        for (k, v) in vals.iter().enumerate().take(m).skip(1) {
            s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    } else {
        // Simpson on the even prefix, 3/8 on the last three intervals.
        let head = simpson(&vals[..n - 3], h);
        let tail = 3.0 * h / 8.0
            * (vals[n - 4] + 3.0 * vals[n - 3] + 3.0 * vals[n - 2] + vals[n - 1]);
        head + tail
    }
}

/// Cumulative trapezoid: `out[i] = ∫` over nodes `0..=i`.
pub fn cumulative_trapezoid(vals: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; vals.len()];
    for i in 1..vals.len() {
        out[i] = out[i - 1] + 0.5 * h * (vals[i - 1] + vals[i]);
    }
    out
}

/// Discrete L2 norm of a grid function (trapezoid quadrature of the square).
pub fn l2_norm(vals: &[f64], h: f64) -> f64 {
    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
    trapezoid(&sq, h).max(0.0).sqrt()
}

/// Linear interpolation on a uniform grid.
pub fn lerp_uniform(vals: &[f64], grid: &Grid, x: f64) -> f64 {
    let h = grid.h();
    let s = ((x - grid.a) / h).clamp(0.0, (grid.n - 1) as f64);
    let i = (s.floor() as usize).min(grid.n - 2);
    let w = s - i as f64;
    vals[i] * (1.0 - w) + vals[i + 1] * w
}

/// Fornberg finite-difference weights: for nodes `x` and expansion point
/// `x0`, returns `w[m][j]` such that `f^(m)(x0) ≈ Σ_j w[m][j] f(x[j])` for
/// all `m = 0..=max_order`. Exact for polynomials of degree `< x.len()`.
pub fn fornberg_weights(x0: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    assert!(max_order < n);
    let m = max_order;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    // transpose to w[m][j]
    (0..=m)
        .map(|k| (0..n).map(|j| c[j][k]).collect())
        .collect()
}

/// Stencil half-width used for local polynomial time differentiation.
const STENCIL_POINTS: usize = 7;

/// Differentiate a uniformly sampled series `order` times using sliding
/// degree-6 local polynomial fits (7-point stencils, shifted at the ends).
pub fn differentiate_series(vals: &[f64], dt: f64, order: usize) -> Vec<f64> {
    let n = vals.len();
    assert!(order < STENCIL_POINTS);
    if n < STENCIL_POINTS {
        // short series: single global fit
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        return (0..n)
            .map(|i| {
                let w = fornberg_weights(xs[i], &xs, order.min(n - 1));
                w[order.min(n - 1)]
                    .iter()
                    .zip(vals)
                    .map(|(wj, v)| wj * v)
                    .sum()
            })
            .collect();
    }
    let half = STENCIL_POINTS / 2;
    // precompute weights for each offset of the evaluation point inside the stencil
    let nodes: Vec<f64> = (0..STENCIL_POINTS).map(|i| i as f64 * dt).collect();
    let weights: Vec<Vec<f64>> = (0..STENCIL_POINTS)
        .map(|off| fornberg_weights(nodes[off], &nodes, order)[order].clone())
        .collect();
    (0..n)
        .map(|i| {
            let (start, off) = if i < half {
                (0, i)
            } else if i + half >= n {
                (n - STENCIL_POINTS, i - (n - STENCIL_POINTS))
            } else {
                (i - half, half)
            };
            weights[off]
                .iter()
                .zip(&vals[start..start + STENCIL_POINTS])
                .map(|(w, v)| w * v)
                .sum()
        })
        .collect()
}

/// Thomas algorithm for a tridiagonal system; `sub[0]` and `sup[n-1]` are
/// ignored. Overwrites nothing; returns the solution.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / m } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Cubic (4-point sliding Lagrange) interpolation on a uniform grid.
pub fn interp_cubic_uniform(vals: &[f64], grid: &Grid, x: f64) -> f64 {
    let n = grid.n;
    if n < 4 {
        return lerp_uniform(vals, grid, x);
    }
    let h = grid.h();
    let s = ((x - grid.a) / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n - 4);
    let u = s - start as f64; // position relative to the 4-point window
    let mut out = 0.0;
    for (k, v) in vals[start..start + 4].iter().enumerate() {
        let mut w = 1.0;
        for j in 0..4 {
            if j != k {
                w *= (u - j as f64) / (k as f64 - j as f64);
            }
        }
        out += w * v;
    }
    out
}

/// Least-squares straight-line fit; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// Fit the exponential decay rate of a positive series on `[t_lo, t_hi]`,
/// ignoring samples below `floor`. Returns `None` when fewer than four
/// usable samples remain.
pub fn fit_log_slope(ts: &[f64], vals: &[f64], t_lo: f64, t_hi: f64, floor: f64) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, v) in ts.iter().zip(vals) {
        if *t >= t_lo && *t <= t_hi && *v > floor {
            xs.push(*t);
            ys.push(v.ln());
        }
    }
    if xs.len() < 4 {
        return None;
    }
    Some(linear_fit(&xs, &ys).0)
}

/// Dense rectangular table over (space × time), `n_comp` components per node.
/// Layout: `data[((it * nz) + iz) * n_comp + k]`.
#[derive(Debug, Clone)]
pub struct Field {
    pub nz: usize,
    pub nt: usize,
    pub n_comp: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(nz: usize, nt: usize, n_comp: usize) -> Self {
        Field {
            nz,
            nt,
            n_comp,
            data: vec![0.0; nz * nt * n_comp],
        }
    }

    #[inline]
    pub fn idx(&self, iz: usize, it: usize, k: usize) -> usize {
        (it * self.nz + iz) * self.n_comp + k
    }

    #[inline]
    pub fn get(&self, iz: usize, it: usize, k: usize) -> f64 {
        self.data[self.idx(iz, it, k)]
    }

    #[inline]
    pub fn set(&mut self, iz: usize, it: usize, k: usize, v: f64) {
        let i = self.idx(iz, it, k);
        self.data[i] = v;
    }

    /// Contiguous slice of all components at one (space, time) node.
    #[inline]
    pub fn at(&self, iz: usize, it: usize) -> &[f64] {
        let i = (it * self.nz + iz) * self.n_comp;
        &self.data[i..i + self.n_comp]
    }

    /// Spatial profile of component `k` at time index `it`.
    pub fn profile(&self, it: usize, k: usize) -> Vec<f64> {
        (0..self.nz).map(|iz| self.get(iz, it, k)).collect()
    }

    /// Time series of component `k` at space index `iz`.
    pub fn series(&self, iz: usize, k: usize) -> Vec<f64> {
        (0..self.nt).map(|it| self.get(iz, it, k)).collect()
    }

    /// Linear interpolation in time of all components at node `iz`.
    pub fn interp_time(&self, tgrid: &TimeGrid, iz: usize, t: f64, out: &mut [f64]) {
        let (it, w) = tgrid.locate(t);
        for k in 0..self.n_comp {
            out[k] = self.get(iz, it, k) * (1.0 - w) + self.get(iz, it + 1, k) * w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_exactness() {
        let g = Grid::unit(11);
        let xs = g.points();
        // trapezoid exact for linear
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&lin, g.h()) - 2.0).abs() < 1e-14);
        // Simpson exact for cubics, both parities of interval count
        for n in [9usize, 10] {
            let g = Grid::unit(n);
            let c: Vec<f64> = g.points().iter().map(|x| x.powi(3)).collect();
            assert!((simpson(&c, g.h()) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn fornberg_matches_known_stencils() {
        let nodes = [-1.0, 0.0, 1.0];
        let w = fornberg_weights(0.0, &nodes, 2);
        assert!((w[1][0] + 0.5).abs() < 1e-14 && (w[1][2] - 0.5).abs() < 1e-14);
        assert!((w[2][0] - 1.0).abs() < 1e-14 && (w[2][1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn series_differentiation_accuracy() {
        let dt = 1e-2;
        let n = 201;
        let vals: Vec<f64> = (0..n).map(|i| (3.0 * (i as f64) * dt).sin()).collect();
        let d1 = differentiate_series(&vals, dt, 1);
        let d3 = differentiate_series(&vals, dt, 3);
        for i in 0..n {
            let t = i as f64 * dt;
            assert!((d1[i] - 3.0 * (3.0 * t).cos()).abs() < 1e-8);
            assert!((d3[i] + 27.0 * (3.0 * t).cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn slope_fit_recovers_rate() {
        let ts: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<f64> = ts.iter().map(|t| 5.0 * (-7.0 * t).exp()).collect();
        let s = fit_log_slope(&ts, &vals, 0.0, 1.0, 1e-12).unwrap();
        assert!((s + 7.0).abs() < 1e-9);
    }
}
