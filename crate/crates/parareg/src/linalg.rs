//! Small dense linear-algebra routines for the gain designs: characteristic
//! polynomials, Ackermann placement, Lyapunov and Riccati solvers.

use crate::{Error, Result};
use nalgebra::{Complex, DMatrix, DVector};

/// Monic characteristic polynomial coefficients `[c_0, c_1, …, c_{n-1}, 1]`
/// of `det(sI − A)` via the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        m = a * &m;
        for i in 0..n {
            m[(i, i)] += coeffs[n - k + 1];
        }
        coeffs[n - k] = -(a * &m).trace() / k as f64;
    }
    coeffs
}

/// Real monic polynomial with the given roots; the set must be closed under
/// conjugation (within `tol` on the imaginary pairing).
pub fn poly_from_roots(roots: &[Complex<f64>]) -> Result<Vec<f64>> {
    let mut coeffs: Vec<Complex<f64>> = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        coeffs = next;
    }
    let tol = 1e-9
        * roots
            .iter()
            .map(|r| r.norm().max(1.0))
            .fold(1.0_f64, f64::max)
            .powi(roots.len() as i32);
    // coeffs are already in ascending powers
    let mut out = Vec::with_capacity(coeffs.len());
    for c in &coeffs {
        if c.im.abs() > tol {
            return Err(Error::GainDesign(format!(
                "eigenvalue targets not closed under conjugation (residual {:.3e})",
                c.im
            )));
        }
        out.push(c.re);
    }
    Ok(out)
}

/// Evaluate a polynomial (ascending coefficients) at a matrix argument.
pub fn poly_at_matrix(coeffs: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for &c in coeffs.iter().rev() {
        acc = a * acc;
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}

/// Observability matrix `[cᵀ; cᵀA; …; cᵀA^{n-1}]` of a single-output pair.
pub fn observability_matrix(c: &DVector<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut rows = DMatrix::<f64>::zeros(n, n);
    let mut row = c.transpose();
    for i in 0..n {
        rows.set_row(i, &row);
        row = &row * a;
    }
    rows
}

/// Ackermann observer-gain placement for a single-output pair `(cᵀ, A)`:
/// returns `l` such that `σ(A − l cᵀ)` equals the target set.
pub fn ackermann_observer(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    targets: &[Complex<f64>],
) -> Result<DVector<f64>> {
    let n = a.nrows();
    if targets.len() != n {
        return Err(Error::GainDesign(format!(
            "expected {} eigenvalue targets, got {}",
            n,
            targets.len()
        )));
    }
    let obs = observability_matrix(c, a);
    let lu = obs.clone().lu();
    let mut en = DVector::<f64>::zeros(n);
    en[n - 1] = 1.0;
    let sol = lu.solve(&en).ok_or_else(|| {
        Error::GainDesign("pair (cᵀ, A) is not observable (singular observability matrix)".into())
    })?;
    let chi = poly_at_matrix(&poly_from_roots(targets)?, a);
    Ok(chi * sol)
}

/// Solve the Lyapunov equation `Aᵀ X + X A + Q = 0` by Kronecker
/// vectorization (suitable for the small matrices used here).
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX + XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X)  (column-major vec)
    let big = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = DVector::from_column_slice(&(-q).as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::GainDesign("singular Lyapunov operator".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Result of the Riccati solve `SQ + QSᵀ − 2ν Q p pᵀ Q + aI = 0`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub q: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton–Kleinman iteration for `SQ + QSᵀ − 2ν Q p pᵀ Q + aI = 0`,
/// initialized from a pole-placement stabilizing gain. Returns the
/// symmetric positive definite solution with `l_w = Q p`.
pub fn solve_riccati(
    s: &DMatrix<f64>,
    p: &DVector<f64>,
    nu: f64,
    a_coeff: f64,
) -> Result<RiccatiSolution> {
    if nu <= 0.0 || a_coeff <= 0.0 {
        return Err(Error::GainDesign("Riccati requires ν > 0 and a > 0".into()));
    }
    let n = s.nrows();
    // Standard form with A = Sᵀ, B = √(2ν) p, C = aI:
    //   AᵀQ + QA − Q BBᵀ Q + C = 0.
    let a_mat = s.transpose();
    let b = p * (2.0 * nu).sqrt();
    let c_mat = DMatrix::<f64>::identity(n, n) * a_coeff;

    // Stabilizing initial gain: place σ(A − B kᵀ) at distinct negative reals.
    let targets: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(-(1.0 + i as f64), 0.0))
        .collect();
    // A − B kᵀ ≡ (Aᵀ − k Bᵀ)ᵀ, so design k as an observer gain for (Bᵀ, Aᵀ).
    let k0 = ackermann_observer(&a_mat.transpose(), &b, &targets)
        .map_err(|e| Error::GainDesign(format!("Riccati initialization failed: {e}")))?;

    let residual_of = |q: &DMatrix<f64>| -> f64 {
        let r = s * q + q * s.transpose() - q * p * p.transpose() * q * (2.0 * nu)
            + DMatrix::<f64>::identity(n, n) * a_coeff;
        r.amax()
    };

    let mut k = k0;
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut final_res = f64::INFINITY;
    let max_iter = 100;
    for it in 0..max_iter {
        let acl = &a_mat - &b * k.transpose();
        let rhs = &c_mat + &k * k.transpose();
        q = lyapunov_solve(&acl, &rhs)?;
        q = (&q + q.transpose()) * 0.5;
        k = q.transpose() * &b; // Bᵀ Q as column
        final_res = residual_of(&q);
        if final_res <= 1e-10 {
            return Ok(RiccatiSolution {
                q,
                residual: final_res,
                iterations: it + 1,
            });
        }
    }
    if final_res <= 1e-8 {
        return Ok(RiccatiSolution {
            q,
            residual: final_res,
            iterations: max_iter,
        });
    }
    Err(Error::GainDesign(format!(
        "Riccati iteration did not converge (residual {final_res:.3e})"
    )))
}

/// All eigenvalues have `Re λ < -margin`.
pub fn is_hurwitz(a: &DMatrix<f64>, margin: f64) -> bool {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .all(|l| l.re < -margin)
}

/// Maximum real part over the spectrum.
pub fn max_re_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leader_s() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -50.0, 50.0, 0.0])
    }

    #[test]
    fn char_poly_of_rotation() {
        // det(sI − S) = s² + 2500
        let c = char_poly(&leader_s());
        assert!((c[0] - 2500.0).abs() < 1e-9);
        assert!(c[1].abs() < 1e-9 && (c[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ackermann_places_poles() {
        let s = leader_s();
        let p = DVector::from_column_slice(&[1.0, 0.0]);
        let targets = [Complex::new(-10.0, 48.99), Complex::new(-10.0, -48.99)];
        let l = ackermann_observer(&s, &p, &targets).unwrap();
        let cl = &s - &l * p.transpose();
        let cp = char_poly(&cl);
        // s² + 20 s + (10² + 48.99²)
        assert!((cp[1] - 20.0).abs() < 1e-8);
        assert!((cp[0] - (100.0 + 48.99_f64.powi(2))).abs() < 1e-6);
    }

    #[test]
    fn ackermann_rejects_unobservable() {
        let s = leader_s();
        let p = DVector::from_column_slice(&[0.0, 0.0]);
        let targets = [Complex::new(-1.0, 0.0), Complex::new(-2.0, 0.0)];
        assert!(ackermann_observer(&s, &p, &targets).is_err());
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let q = DMatrix::<f64>::identity(2, 2);
        let x = lyapunov_solve(&a, &q).unwrap();
        let r = a.transpose() * &x + &x * &a + &q;
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn riccati_scalar_closed_form() {
        // −2Q² + 1 = 0 → Q = 1/√2
        let s = DMatrix::from_row_slice(1, 1, &[0.0]);
        let p = DVector::from_column_slice(&[1.0]);
        let sol = solve_riccati(&s, &p, 1.0, 1.0).unwrap();
        assert!((sol.q[(0, 0)] - 0.5_f64.sqrt()).abs() < 1e-10);
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn riccati_scaling_law() {
        // scalar case: a → 4a scales Q by 2
        let s = DMatrix::from_row_slice(1, 1, &[0.0]);
        let p = DVector::from_column_slice(&[1.0]);
        let q1 = solve_riccati(&s, &p, 1.0, 1.0).unwrap().q[(0, 0)];
        let q4 = solve_riccati(&s, &p, 1.0, 4.0).unwrap().q[(0, 0)];
        assert!((q4 - 2.0 * q1).abs() < 1e-9);
    }

    #[test]
    fn riccati_deterministic() {
        let s = leader_s();
        let p = DVector::from_column_slice(&[1.0, 0.0]);
        let a = solve_riccati(&s, &p, 1.0, 500.0).unwrap();
        let b = solve_riccati(&s, &p, 1.0, 500.0).unwrap();
        assert_eq!(a.q.as_slice(), b.q.as_slice());
        assert!(a.residual < 1e-8);
        // solution is SPD
        let eig = a.q.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e > 0.0));
    }
}
