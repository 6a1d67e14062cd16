//! Closed-form evaluations of the linear residual recursions, plus the
//! invertibility checks the closed forms rely on.
//!
//! Everything here is dense and independent of the tensor engine, so it can
//! serve as a second route for the iterative implementations.

mod lemmas;
pub mod verify;

pub use lemmas::{check_lemma1, check_lemma2, ConditionReport};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Largest order for which every binomial coefficient is exact in `f64`.
pub const MAX_BINOMIAL_ORDER: usize = 30;

/// Maximum tolerated relative residual of an LU solve.
pub const SOLVE_RESIDUAL_LIMIT: f64 = 1e-9;

/// A linear residual recursion.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearKind {
    /// `H_k = (I + N) H_{k−1}`, `H_0 = H`.
    ResGcn,
    /// `H_k = α H + (1 − α) N H_{k−1}`, `H_0 = H`.
    Appnp { alpha: f64 },
    /// `H_1 = N H`, `H_k = H_1 + Λ_{k−1}(H_1 − N H_{k−1})`. Entry `j − 1`
    /// holds the diagonal of `Λ_j`.
    Psnr { lambdas: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamic {
    pub kind: LinearKind,
    pub n: Mat,
    pub h: Mat,
    pub k: usize,
}

fn check_dims(n: &Mat, h: &Mat) -> Result<()> {
    if n.rows() != n.cols() || n.cols() != h.rows() {
        return Err(Error::shape(
            "linear-dynamic",
            format!("N {:?} with H {:?}", n.shape(), h.shape()),
        ));
    }
    Ok(())
}

fn check_lambdas(n: usize, lambdas: &[Vec<f64>]) -> Result<()> {
    for (j, l) in lambdas.iter().enumerate() {
        if l.len() != n {
            return Err(Error::shape(
                "lambda",
                format!("Λ_{} has {} entries for {n} nodes", j + 1, l.len()),
            ));
        }
        if let Some(v) = l.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain(format!("Λ_{} entry {v} outside (0,1)", j + 1)));
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(())
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.matmul(b).expect("oracle shapes are checked up front")
}

/// Runs the recursion step by step.
pub fn iterate_linear(dyn_: &LinearDynamic) -> Result<Mat> {
    let LinearDynamic { kind, n, h, k } = dyn_;
    check_dims(n, h)?;
    match kind {
        LinearKind::ResGcn => {
            let mut cur = h.clone();
            for _ in 0..*k {
                cur = cur.add(&mm(n, &cur));
            }
            Ok(cur)
        }
        LinearKind::Appnp { alpha } => {
            // α = 1 is allowed here as the fixed-point boundary
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(Error::Domain(format!("alpha {alpha} outside (0,1]")));
            }
            let mut cur = h.clone();
            for _ in 0..*k {
                cur = h.scale(*alpha).add(&mm(n, &cur).scale(1.0 - alpha));
            }
            Ok(cur)
        }
        LinearKind::Psnr { lambdas } => {
            if *k == 0 {
                return Err(Error::Range("the PSNR recursion starts at k = 1".into()));
            }
            if lambdas.len() + 1 < *k {
                return Err(Error::Contract(format!(
                    "order {k} needs {} Λ matrices, got {}",
                    k - 1,
                    lambdas.len()
                )));
            }
            check_lambdas(n.rows(), &lambdas[..k - 1])?;
            let h1 = mm(n, h);
            let mut cur = h1.clone();
            for lambda in &lambdas[..k - 1] {
                let diff = h1.sub(&mm(n, &cur));
                cur = h1.add(&diff.scale_rows(lambda));
            }
            Ok(cur)
        }
    }
}

fn binomial(k: usize, j: usize) -> f64 {
    let j = j.min(k - j);
    let mut c = 1u64;
    for i in 0..j {
        c = c * (k - i) as u64 / (i + 1) as u64;
    }
    c as f64
}

/// `Σ_{j=0}^{k} C(k, j) N^j H`.
pub fn closed_resgcn(n: &Mat, h: &Mat, k: usize) -> Result<Mat> {
    check_dims(n, h)?;
    if k > MAX_BINOMIAL_ORDER {
        return Err(Error::Range(format!(
            "order {k} exceeds {MAX_BINOMIAL_ORDER}; binomial coefficients lose exactness"
        )));
    }
    let mut power = h.clone();
    let mut out = h.clone();
    for j in 1..=k {
        power = mm(n, &power);
        out.axpy(binomial(k, j), &power);
    }
    Ok(out)
}

/// `((1 − α)N)^k H + α Σ_{j=0}^{k−1} ((1 − α)N)^j H`.
pub fn closed_appnp(n: &Mat, h: &Mat, alpha: f64, k: usize) -> Result<Mat> {
    check_dims(n, h)?;
    check_alpha(alpha)?;
    if k == 0 {
        return Err(Error::Range("closed APPNP form needs k >= 1".into()));
    }
    let p = n.scale(1.0 - alpha);
    let mut power = h.clone();
    let mut series = Mat::zeros(h.rows(), h.cols());
    for _ in 0..k {
        series.add_assign(&power);
        power = mm(&p, &power);
    }
    let mut out = power;
    out.axpy(alpha, &series);
    Ok(out)
}

/// APPNP through its shifted fixed point: with
/// `T = α((1 − α)N − I)^{-1} H`, `H_k = ((1 − α)N)^k (H + T) − T`.
pub fn appnp_shift_form(n: &Mat, h: &Mat, alpha: f64, k: usize) -> Result<Mat> {
    check_dims(n, h)?;
    check_alpha(alpha)?;
    let size = n.rows();
    let p = n.scale(1.0 - alpha);
    let a = p.sub(&Mat::identity(size));
    let t = lu_solve(&a, &h.scale(alpha))?;
    let mut cur = h.add(&t);
    for _ in 0..k {
        cur = mm(&p, &cur);
    }
    Ok(cur.sub(&t))
}

/// Solves `A X = B` by partial-pivot LU and rejects solutions whose relative
/// residual exceeds [`SOLVE_RESIDUAL_LIMIT`].
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let (x, residual) = lu_solve_with_residual(a, b)?;
    if residual > SOLVE_RESIDUAL_LIMIT {
        return Err(Error::Numeric(format!(
            "LU solve residual {residual:e} exceeds {SOLVE_RESIDUAL_LIMIT:e}"
        )));
    }
    Ok(x)
}

pub(crate) fn lu_solve_with_residual(a: &Mat, b: &Mat) -> Result<(Mat, f64)> {
    let lu = a.to_nalgebra().lu();
    let x: DMatrix<f64> = lu
        .solve(&b.to_nalgebra())
        .ok_or_else(|| Error::Numeric("LU factorization is singular".into()))?;
    let x = Mat::from_nalgebra(&x);
    if !x.is_finite() {
        return Err(Error::Numeric("LU solve produced non-finite values".into()));
    }
    let residual = mm(a, &x).sub(b).max_abs() / b.max_abs().max(1.0);
    Ok((x, residual))
}

/// Closed form of the PSNR recursion for `k = lambdas.len() + 1`:
///
/// `H_k = Σ_{i=2}^{k−1} (Ñ_{k−1}⋯Ñ_i)(M_i − M_{i−1}) + (Ñ_{k−1}⋯Ñ_1)(H_1 + M_1) − M_{k−1}`
///
/// with `Ñ_i = −Λ_i N` and `M_i = −(Λ_i N + I)^{-1}(I + Λ_i) H_1`.
/// Products grow by successive left-multiplication starting from `Ñ_i`.
pub fn closed_psnr(n: &Mat, h: &Mat, lambdas: &[Vec<f64>]) -> Result<Mat> {
    check_dims(n, h)?;
    check_lambdas(n.rows(), lambdas)?;
    let h1 = mm(n, h);
    let k = lambdas.len() + 1;
    if k == 1 {
        return Ok(h1);
    }
    let size = n.rows();
    let eye = Mat::identity(size);
    // index 0 unused so that ntilde[i] / m[i] match the 1-based formula
    let mut ntilde = vec![Mat::zeros(0, 0)];
    let mut m = vec![Mat::zeros(0, 0)];
    for lambda in lambdas {
        let ln = n.scale_rows(lambda);
        ntilde.push(ln.scale(-1.0));
        let lhs = ln.add(&eye);
        let onep: Vec<f64> = lambda.iter().map(|l| 1.0 + l).collect();
        let rhs = h1.scale_rows(&onep);
        m.push(lu_solve(&lhs, &rhs)?.scale(-1.0));
    }
    let chain = |from: usize| -> Mat {
        let mut prod = ntilde[from].clone();
        for nt in &ntilde[from + 1..k] {
            prod = mm(nt, &prod);
        }
        prod
    };
    let mut out = Mat::zeros(h.rows(), h.cols());
    for i in 2..k {
        out.add_assign(&mm(&chain(i), &m[i].sub(&m[i - 1])));
    }
    out.add_assign(&mm(&chain(1), &h1.add(&m[1])));
    Ok(out.sub(&m[k - 1]))
}
