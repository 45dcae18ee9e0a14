//! Log-barrier interior-point solver for small concave programs over
//! Hermitian PSD blocks and real scalars.
//!
//! A [`ConicProgram`] maximizes a weighted sum of log-determinants of
//! affine Hermitian expressions plus a linear functional, subject to affine
//! scalar inequalities (`<= 0`) and linear matrix inequalities (`>= 0`).
//! Every matrix variable is implicitly constrained PSD.

mod barrier;
mod compile;

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitize, logdet_nat, min_eigenvalue, ComplexMatrix, HermitianMatrix};

pub use barrier::{solve, solve_with_trace, BarrierTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVar {
    pub name: String,
    /// `None` for a free variable.
    pub lower: Option<f64>,
}

/// Linear map applied to one Hermitian variable block.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixMap {
    Identity,
    /// `X -> G^H X G`
    Congruence(ComplexMatrix),
    /// `X -> K (x) X`
    KronLeft(ComplexMatrix),
}

impl MatrixMap {
    pub fn out_dim(&self, n: usize) -> usize {
        match self {
            MatrixMap::Identity => n,
            MatrixMap::Congruence(g) => g.ncols(),
            MatrixMap::KronLeft(k) => k.nrows() * n,
        }
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        match self {
            MatrixMap::Identity => x.clone(),
            MatrixMap::Congruence(g) => g.adjoint() * x * g,
            MatrixMap::KronLeft(k) => k.kronecker(x),
        }
    }
}

/// `scale * map(X_var)` placed as a diagonal block starting at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTerm {
    pub var: usize,
    pub map: MatrixMap,
    pub scale: f64,
    pub offset: usize,
}

/// `constant + sum scale * map(X) + sum x_s C_s`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    pub constant: HermitianMatrix,
    pub matrix_terms: Vec<MatrixTerm>,
    pub scalar_terms: Vec<(usize, HermitianMatrix)>,
}

impl AffineMatrix {
    pub fn new(constant: HermitianMatrix) -> Self {
        Self { constant, matrix_terms: Vec::new(), scalar_terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn with_matrix(mut self, var: usize, map: MatrixMap, scale: f64, offset: usize) -> Self {
        self.matrix_terms.push(MatrixTerm { var, map, scale, offset });
        self
    }

    pub fn with_scalar(mut self, var: usize, coeff: HermitianMatrix) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }

    pub fn eval(&self, point: &Point) -> HermitianMatrix {
        let mut acc = self.constant.as_matrix().clone();
        for t in &self.matrix_terms {
            let x = point.matrices[t.var].as_matrix();
            let img = t.map.apply(x) * c64(t.scale, 0.0);
            let k = img.nrows();
            let mut view = acc.view_mut((t.offset, t.offset), (k, k));
            view += img;
        }
        for (s, c) in &self.scalar_terms {
            acc += c.as_matrix() * c64(point.scalars[*s], 0.0);
        }
        hermitize(&acc).expect("square")
    }
}

/// `constant + sum Re Tr(C X) + sum a_s x_s`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineScalar {
    pub constant: f64,
    pub matrix_terms: Vec<(usize, HermitianMatrix)>,
    pub scalar_terms: Vec<(usize, f64)>,
}

impl AffineScalar {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Default::default() }
    }

    pub fn with_matrix(mut self, var: usize, coeff: HermitianMatrix) -> Self {
        self.matrix_terms.push((var, coeff));
        self
    }

    pub fn with_scalar(mut self, var: usize, coeff: f64) -> Self {
        self.scalar_terms.push((var, coeff));
        self
    }

    pub fn eval(&self, point: &Point) -> f64 {
        let mut acc = self.constant;
        for (v, c) in &self.matrix_terms {
            acc += c.inner(&point.matrices[*v]);
        }
        for (s, a) in &self.scalar_terms {
            acc += a * point.scalars[*s];
        }
        acc
    }
}

/// `weight * ln det(arg)`
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetTerm {
    pub weight: f64,
    pub arg: AffineMatrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub matrix_vars: Vec<MatrixVar>,
    pub scalar_vars: Vec<ScalarVar>,
    pub log_dets: Vec<LogDetTerm>,
    pub linear: AffineScalar,
    /// Each required `<= 0`.
    pub scalar_ineqs: Vec<AffineScalar>,
    /// Each required PSD.
    pub lmis: Vec<AffineMatrix>,
}

impl ConicProgram {
    pub fn add_matrix_var(&mut self, name: &str, dim: usize) -> usize {
        self.matrix_vars.push(MatrixVar { name: name.to_string(), dim });
        self.matrix_vars.len() - 1
    }

    pub fn add_scalar_var(&mut self, name: &str, lower: Option<f64>) -> usize {
        self.scalar_vars.push(ScalarVar { name: name.to_string(), lower });
        self.scalar_vars.len() - 1
    }

    pub fn matrix_var(&self, name: &str) -> Option<usize> {
        self.matrix_vars.iter().position(|v| v.name == name)
    }

    pub fn scalar_var(&self, name: &str) -> Option<usize> {
        self.scalar_vars.iter().position(|v| v.name == name)
    }

    pub fn zero_point(&self) -> Point {
        Point {
            matrices: self.matrix_vars.iter().map(|v| HermitianMatrix::zeros(v.dim)).collect(),
            scalars: vec![0.0; self.scalar_vars.len()],
        }
    }

    /// Checks that every term references an existing variable with
    /// consistent dimensions.
    pub fn validate(&self) -> Result<()> {
        let check_matrix = |a: &AffineMatrix, what: &str| -> Result<()> {
            let d = a.dim();
            for t in &a.matrix_terms {
                let var = self.matrix_vars.get(t.var).ok_or_else(|| {
                    Error::DimensionMismatch(format!("{what}: unknown matrix variable {}", t.var))
                })?;
                if let MatrixMap::Congruence(g) = &t.map {
                    if g.nrows() != var.dim {
                        return Err(Error::DimensionMismatch(format!("{what}: congruence rows")));
                    }
                }
                if let MatrixMap::KronLeft(k) = &t.map {
                    if !k.is_square() {
                        return Err(Error::DimensionMismatch(format!("{what}: Kronecker factor not square")));
                    }
                }
                if t.offset + t.map.out_dim(var.dim) > d {
                    return Err(Error::DimensionMismatch(format!("{what}: block exceeds dimension {d}")));
                }
            }
            for (s, c) in &a.scalar_terms {
                if *s >= self.scalar_vars.len() || c.dim() != d {
                    return Err(Error::DimensionMismatch(format!("{what}: bad scalar term")));
                }
            }
            Ok(())
        };
        let check_scalar = |a: &AffineScalar, what: &str| -> Result<()> {
            for (v, c) in &a.matrix_terms {
                match self.matrix_vars.get(*v) {
                    Some(var) if var.dim == c.dim() => {}
                    _ => return Err(Error::DimensionMismatch(format!("{what}: bad matrix term"))),
                }
            }
            if a.scalar_terms.iter().any(|(s, _)| *s >= self.scalar_vars.len()) {
                return Err(Error::DimensionMismatch(format!("{what}: unknown scalar variable")));
            }
            Ok(())
        };
        for (i, l) in self.log_dets.iter().enumerate() {
            check_matrix(&l.arg, &format!("log-det term {i}"))?;
        }
        for (i, l) in self.lmis.iter().enumerate() {
            check_matrix(l, &format!("LMI {i}"))?;
        }
        check_scalar(&self.linear, "objective")?;
        for (i, s) in self.scalar_ineqs.iter().enumerate() {
            check_scalar(s, &format!("inequality {i}"))?;
        }
        Ok(())
    }
}

/// Values of every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub matrices: Vec<HermitianMatrix>,
    pub scalars: Vec<f64>,
}

impl Point {
    fn check_shape(&self, p: &ConicProgram) -> Result<()> {
        let ok = self.matrices.len() == p.matrix_vars.len()
            && self.scalars.len() == p.scalar_vars.len()
            && self.matrices.iter().zip(&p.matrix_vars).all(|(m, v)| m.dim() == v.dim);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("point does not match program variables".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Initial barrier weight (the barrier is scaled by `1 / t`, `t = 1 / weight`).
    pub barrier_initial: f64,
    pub barrier_decrease_factor: f64,
    /// Centering stops when half the squared Newton decrement, divided by
    /// the objective weight `t`, falls below this.
    pub newton_tolerance: f64,
    pub max_outer_iters: usize,
    pub max_newton_iters: usize,
    pub feasibility_tolerance: f64,
    /// Optimality when the barrier gap bound is below `gap_tolerance (1 + |objective|)`.
    pub gap_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            barrier_initial: 1.0,
            barrier_decrease_factor: 0.2,
            newton_tolerance: 1e-8,
            max_outer_iters: 60,
            max_newton_iters: 50,
            feasibility_tolerance: 1e-8,
            gap_tolerance: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.barrier_initial > 0.0
            && self.barrier_decrease_factor > 0.0
            && self.barrier_decrease_factor < 1.0
            && self.newton_tolerance > 0.0
            && self.feasibility_tolerance > 0.0
            && self.gap_tolerance > 0.0
            && self.max_outer_iters > 0
            && self.max_newton_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid solver settings".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub point: Point,
    pub objective: f64,
    /// Final centering residual in objective units (see [`SolverSettings::newton_tolerance`]).
    pub kkt_residual: f64,
    pub status: SolveStatus,
    /// Barrier duality-gap bound at the returned point.
    pub gap_bound: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
}

/// Exact residual report for a candidate point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// `-inf` when some log-det argument is not positive definite.
    pub objective: f64,
    pub objective_defined: bool,
    /// Largest scalar constraint value (inequalities and variable lower
    /// bounds, both written as `g <= 0`); `-inf` when there are none.
    pub worst_scalar_violation: f64,
    /// Smallest eigenvalue over all LMIs and matrix-variable blocks;
    /// `+inf` when there are none.
    pub worst_lmi_min_eig: f64,
}

pub fn evaluate(p: &ConicProgram, point: &Point) -> Result<Evaluation> {
    point.check_shape(p)?;
    let mut objective = p.linear.eval(point);
    let mut defined = true;
    for term in &p.log_dets {
        match logdet_nat(&term.arg.eval(point)) {
            Ok(v) => objective += term.weight * v,
            Err(_) => defined = false,
        }
    }
    if !defined {
        objective = f64::NEG_INFINITY;
    }
    let mut worst_scalar = f64::NEG_INFINITY;
    for g in &p.scalar_ineqs {
        worst_scalar = worst_scalar.max(g.eval(point));
    }
    for (v, x) in p.scalar_vars.iter().zip(&point.scalars) {
        if let Some(lb) = v.lower {
            worst_scalar = worst_scalar.max(lb - x);
        }
    }
    let mut worst_eig = f64::INFINITY;
    for l in &p.lmis {
        worst_eig = worst_eig.min(min_eigenvalue(&l.eval(point)));
    }
    for m in &point.matrices {
        worst_eig = worst_eig.min(min_eigenvalue(m));
    }
    Ok(Evaluation {
        objective,
        objective_defined: defined,
        worst_scalar_violation: worst_scalar,
        worst_lmi_min_eig: worst_eig,
    })
}

/// True iff every scalar constraint is `<= tol` and every LMI and block has
/// minimum eigenvalue `>= -tol`.
pub fn check_feasible(p: &ConicProgram, point: &Point, tol: f64) -> bool {
    match evaluate(p, point) {
        Ok(e) => e.worst_scalar_violation <= tol && e.worst_lmi_min_eig >= -tol,
        Err(_) => false,
    }
}

/// Builds a Hermitian matrix with a single `value` in the diagonal slot `(i, i)`.
pub fn diagonal_unit(dim: usize, i: usize, value: f64) -> HermitianMatrix {
    let mut d = vec![0.0; dim];
    d[i] = value;
    HermitianMatrix::from_real_diagonal(&d)
}
