//! Cone-constrained quadratic programs `min 0.5 x^T Q x + q^T x  s.t.  K x - b in -cone`.

use std::sync::Arc;

use super::functions::{AffineMap, QuadraticForm};
use crate::error::{invalid, Result};
use crate::problem::{CompositeProblem, KnownOptimum, Mapping, Matrix, ProxTerm, SmoothTerm, Vector};
use crate::prox::{Cone, NegativeConeIndicator, ZeroFunction};

const KKT_TOL: f64 = 1e-10;

pub fn build_cone_qp(q_mat: &Matrix, q_vec: &Vector, k: &Matrix, b: &Vector, cone: Cone) -> Result<CompositeProblem> {
    let p = q_mat.nrows();
    if q_mat.ncols() != p || q_vec.len() != p || k.ncols() != p || k.nrows() != b.len() {
        return invalid("inconsistent cone QP dimensions");
    }
    if k.nrows() == 0 {
        return invalid("need at least one constraint row");
    }
    let scale = q_mat.amax().max(1.0);
    if (q_mat - q_mat.transpose()).amax() > 1e-12 * scale {
        return invalid("Q must be symmetric");
    }
    let eig = q_mat.clone().symmetric_eigenvalues();
    if eig.min() < -1e-12 * scale {
        return invalid(format!("Q must be positive semidefinite, smallest eigenvalue {}", eig.min()));
    }
    let l_f = eig.max().max(0.0);
    let mu_f = if l_f > 0.0 { eig.min().max(0.0) } else { 0.0 };
    let f = SmoothTerm::new(Arc::new(QuadraticForm { q_mat: q_mat.clone(), q_vec: q_vec.clone() }), l_f, mu_f)?;
    let h = ProxTerm::new(Arc::new(ZeroFunction), 0.0, 0.0)?;
    let outer = ProxTerm::new(Arc::new(NegativeConeIndicator(cone)), 0.0, f64::INFINITY)?;
    let m_gi: Vec<f64> = k.row_iter().map(|r| r.norm()).collect();
    let l_gi = vec![0.0; k.nrows()];
    let g = Mapping::new(Arc::new(AffineMap { k: k.clone(), b: b.clone() }), m_gi, l_gi, true, None)?;
    let prob = CompositeProblem::new("cone_qp", f, h, outer, g, p)?.with_cone(cone);
    Ok(match kkt_oracle(q_mat, q_vec, k, b, cone) {
        Some(opt) => prob.with_optimum(opt),
        None => prob,
    })
}

/// Solves the KKT system by enumerating active sets. Supported for the
/// orthant (inequalities) and the zero cone (equalities) with at most 16 rows.
fn kkt_oracle(q_mat: &Matrix, q_vec: &Vector, k: &Matrix, b: &Vector, cone: Cone) -> Option<KnownOptimum> {
    let m = k.nrows();
    let p = q_mat.nrows();
    let subsets: Vec<Vec<usize>> = match cone {
        Cone::Zero => vec![(0..m).collect()],
        Cone::Orthant if m <= 16 => {
            (0u32..(1 << m)).map(|mask| (0..m).filter(|i| mask >> i & 1 == 1).collect()).collect()
        }
        _ => return None,
    };
    let objective = |x: &Vector| 0.5 * x.dot(&(q_mat * x)) + q_vec.dot(x);
    let mut best: Option<(Vector, Vector, f64)> = None;
    for active in subsets {
        let a = active.len();
        let mut kkt = Matrix::zeros(p + a, p + a);
        kkt.view_mut((0, 0), (p, p)).copy_from(q_mat);
        let mut rhs = Vector::zeros(p + a);
        rhs.rows_mut(0, p).copy_from(&(-q_vec));
        for (r, &i) in active.iter().enumerate() {
            for j in 0..p {
                kkt[(p + r, j)] = k[(i, j)];
                kkt[(j, p + r)] = k[(i, j)];
            }
            rhs[p + r] = b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, p).into_owned();
        let mut y = Vector::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            y[i] = sol[p + r];
        }
        let residual = k * &x - b;
        let feasible = match cone {
            Cone::Zero => residual.amax() <= KKT_TOL,
            _ => residual.max() <= KKT_TOL && y.min() >= -KKT_TOL,
        };
        let stationarity = (q_mat * &x + q_vec + k.tr_mul(&y)).amax();
        if !feasible || stationarity > KKT_TOL {
            continue;
        }
        let val = objective(&x);
        if best.as_ref().is_none_or(|(_, _, bv)| val < *bv) {
            best = Some((x, y, val));
        }
    }
    best.map(|(x, y, value)| KnownOptimum {
        x,
        y: Some(y),
        value,
        accuracy: 1e-12 * (1.0 + value.abs()),
        method: "KKT active-set enumeration".into(),
    })
}

/// `min 0.5|x|^2 - x_1 - x_2  s.t.  x_1 + x_2 <= 1`, with solution `(1/2, 1/2)`.
pub fn example_cone_qp() -> CompositeProblem {
    build_cone_qp(
        &Matrix::identity(2, 2),
        &Vector::from_vec(vec![-1.0, -1.0]),
        &Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
        &Vector::from_element(1, 1.0),
        Cone::Orthant,
    )
    .expect("valid example")
}
