//! Finite-dimensional signal generators: the global reference model and the
//! local disturbance models, `ẋ = S x`, output `C x`, with `σ(S)` on the
//! imaginary axis.

use crate::grid::TimeGrid;
use crate::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

/// Marginally stable signal generator with output map.
#[derive(Debug, Clone)]
pub struct Exosystem {
    /// Generator matrix `S`.
    pub s: DMatrix<f64>,
    /// Output map (`pᵀ` as a single row for the leader, `P_i` with one row
    /// per disturbance channel otherwise).
    pub out: DMatrix<f64>,
}

impl Exosystem {
    pub fn new(s: DMatrix<f64>, out: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::Exosys("generator matrix must be square".into()));
        }
        if out.ncols() != s.nrows() {
            return Err(Error::Exosys(format!(
                "output map has {} columns but the state dimension is {}",
                out.ncols(),
                s.nrows()
            )));
        }
        Ok(Exosystem { s, out })
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Number of output channels.
    pub fn n_out(&self) -> usize {
        self.out.nrows()
    }

    /// Exact one-step propagator `exp(S dt)`.
    pub fn propagator(&self, dt: f64) -> DMatrix<f64> {
        (self.s.clone() * dt).exp()
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.out * x
    }

    /// Time derivatives of the output along the flow:
    /// `d^j/dt^j (C x(t)) = C S^j x(t)` for `j = 0..=order`.
    pub fn output_derivs(&self, x: &DVector<f64>, order: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(order + 1);
        let mut v = x.clone();
        for _ in 0..=order {
            out.push(&self.out * &v);
            v = &self.s * v;
        }
        out
    }

    /// Propagate the state over a uniform grid by the matrix exponential.
    pub fn simulate(&self, x0: &DVector<f64>, tgrid: &TimeGrid) -> Result<Vec<DVector<f64>>> {
        if x0.len() != self.dim() {
            return Err(Error::Exosys(format!(
                "initial state has dimension {}, expected {}",
                x0.len(),
                self.dim()
            )));
        }
        let prop = self.propagator(tgrid.dt);
        let mut states = Vec::with_capacity(tgrid.nt);
        let mut x = x0.clone();
        for _ in 0..tgrid.nt {
            states.push(x.clone());
            x = &prop * x;
        }
        Ok(states)
    }

    /// Structured validation diagnostics (never an error).
    pub fn validate(&self) -> ExoDiagnostics {
        let n = self.dim();
        let eigs = self.s.clone().complex_eigenvalues();
        let eig_real_parts: Vec<f64> = eigs.iter().map(|l| l.re).collect();
        let scale = eigs.iter().map(|l| l.norm()).fold(1.0_f64, f64::max);
        let spectrum_on_axis = eig_real_parts.iter().all(|r| r.abs() <= 1e-9 * scale);

        // observability of (C, S): rank of the stacked observability matrix
        let p = self.n_out();
        let mut obs = DMatrix::<f64>::zeros(n * p, n);
        let mut block = self.out.clone();
        for k in 0..n {
            obs.rows_mut(k * p, p).copy_from(&block);
            block = &block * &self.s;
        }
        let observability_rank = obs.svd(false, false).rank(1e-10 * scale.max(1.0));

        let diagonalizable = self.is_diagonalizable(&eigs, scale);

        ExoDiagnostics {
            eig_real_parts,
            spectrum_on_axis,
            observability_rank,
            observable: observability_rank == n,
            diagonalizable,
        }
    }

    fn is_diagonalizable(&self, eigs: &DVector<Complex<f64>>, scale: f64) -> bool {
        let n = self.dim();
        let tol = 1e-8 * scale.max(1.0);
        // cluster eigenvalues, then compare geometric multiplicities
        let mut remaining: Vec<Complex<f64>> = eigs.iter().cloned().collect();
        let mut total_geo = 0;
        while let Some(lambda) = remaining.first().cloned() {
            let before = remaining.len();
            remaining.retain(|l| (l - lambda).norm() > tol);
            let algebraic = before - remaining.len();
            let mut shifted = DMatrix::<Complex<f64>>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    shifted[(i, j)] = Complex::new(self.s[(i, j)], 0.0);
                }
                shifted[(i, i)] -= lambda;
            }
            let rank = shifted.svd(false, false).rank(tol);
            let geometric = n - rank;
            if geometric < algebraic {
                return false;
            }
            total_geo += geometric;
        }
        total_geo >= n
    }
}

/// Validation report for an exosystem.
#[derive(Debug, Clone)]
pub struct ExoDiagnostics {
    pub eig_real_parts: Vec<f64>,
    pub spectrum_on_axis: bool,
    pub observability_rank: usize,
    pub observable: bool,
    pub diagonalizable: bool,
}

impl ExoDiagnostics {
    /// Requirements for the global reference model.
    pub fn passes_leader(&self) -> bool {
        self.spectrum_on_axis && self.observable
    }

    /// Requirements for a local disturbance model.
    pub fn passes_disturbance(&self) -> bool {
        self.spectrum_on_axis && self.observable && self.diagonalizable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::differentiate_series;

    fn leader() -> Exosystem {
        Exosystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, -50.0, 50.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn leader_reference_initial_value() {
        // w(0) = [5, -5]ᵀ gives r(0) = 5
        let exo = leader();
        let w0 = DVector::from_column_slice(&[5.0, -5.0]);
        let tg = TimeGrid::new(0.0, 1e-3, 101);
        let traj = exo.simulate(&w0, &tg).unwrap();
        assert!((exo.output(&traj[0])[0] - 5.0).abs() < 1e-14);
        // matches one-shot matrix exponential propagation
        let t_end = tg.t_end();
        let direct = (exo.s.clone() * t_end).exp() * &w0;
        assert!((&direct - &traj[100]).amax() < 1e-10);
    }

    #[test]
    fn skew_generator_conserves_norm() {
        let exo = leader();
        let w0 = DVector::from_column_slice(&[5.0, -5.0]);
        let tg = TimeGrid::new(0.0, 1e-3, 500);
        let traj = exo.simulate(&w0, &tg).unwrap();
        for w in &traj {
            assert!((w.norm() - w0.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_generator_constant_trajectory() {
        let exo = Exosystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let x0 = DVector::from_column_slice(&[3.0, -1.0]);
        let traj = exo.simulate(&x0, &TimeGrid::new(0.0, 0.1, 20)).unwrap();
        for x in &traj {
            assert_eq!(x.as_slice(), x0.as_slice());
        }
    }

    #[test]
    fn ode_residual_via_series_differentiation() {
        let exo = leader();
        let w0 = DVector::from_column_slice(&[5.0, -5.0]);
        let tg = TimeGrid::new(0.0, 1e-4, 2001);
        let traj = exo.simulate(&w0, &tg).unwrap();
        for comp in 0..2 {
            let series: Vec<f64> = traj.iter().map(|w| w[comp]).collect();
            let dser = differentiate_series(&series, tg.dt, 1);
            for (i, w) in traj.iter().enumerate().skip(3).take(tg.nt - 6) {
                let rhs = (&exo.s * w)[comp];
                assert!((dser[i] - rhs).abs() < 1e-8 * w0.norm());
            }
        }
    }

    #[test]
    fn validation_cases() {
        let good = leader().validate();
        assert!(good.passes_leader());
        assert_eq!(good.observability_rank, 2);

        let off_axis = Exosystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap()
        .validate();
        assert!(!off_axis.spectrum_on_axis);

        let unobservable = Exosystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, -50.0, 50.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
        )
        .unwrap()
        .validate();
        assert!(!unobservable.observable);

        // Jordan block is not diagonalizable
        let jordan = Exosystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap()
        .validate();
        assert!(!jordan.diagonalizable);
    }
}
