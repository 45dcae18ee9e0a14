//! Damped Newton on the log-barrier, with a phase-I shift when the
//! supplied start is not strictly feasible.

use faer::solvers::SpSolver;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::compile::{
    compile_block, compile_matrix, compile_scalar, hermitian_basis, Basis, CompiledMatrix, CompiledScalar, Layout,
};
use super::{check_feasible, evaluate, ConicProgram, MatrixMap, Point, Solution, SolveStatus, SolverSettings};
use crate::error::Result;
use crate::linalg::{
    c64, cholesky_lower, hermitize, inverse_from_cholesky, logdet_from_cholesky, min_eigenvalue, ComplexMatrix,
};

const LINE_SEARCH_ALPHA: f64 = 0.3;
const LINE_SEARCH_BETA: f64 = 0.5;
const PHASE_ONE_BOX: f64 = 1e3;

/// One record per completed centering step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierTrace {
    /// 1 for the feasibility phase, 2 for the main solve.
    pub phase: u8,
    pub iteration: usize,
    pub barrier_weight: f64,
    pub objective: f64,
    pub newton_decrement: f64,
    pub newton_steps: usize,
}

/// Maximize `sum w ln det G(x) + c.x` over the interior of the cones.
#[derive(Clone)]
struct Problem {
    n: usize,
    obj_logdets: Vec<(f64, CompiledMatrix)>,
    obj_linear: CompiledScalar,
    psd_cones: Vec<CompiledMatrix>,
    /// Each required `> 0`.
    lin_cones: Vec<CompiledScalar>,
    elim: Option<Elimination>,
}

struct Factored {
    s: Vec<Complex64>,
    l: ComplexMatrix,
    dim: usize,
}

fn factor(m: &CompiledMatrix, x: &[f64]) -> Option<(f64, Factored)> {
    let f = m.eval(x);
    let l = cholesky_lower(&f)?;
    let logdet = logdet_from_cholesky(&l);
    let s = inverse_from_cholesky(&l);
    Some((logdet, Factored { s: s.as_slice().to_vec(), l, dim: m.dim }))
}

/// A matrix variable whose Hessian block is eliminated by a Schur
/// complement. It may appear in exactly two matrix cones, each through an
/// identity map: its own PSD block and one LMI. The block of the barrier
/// Hessian is then `s^2 S_L (.) S_L + S_X (.) S_X`, which a congruence
/// diagonalizes.
#[derive(Debug, Clone)]
struct Elimination {
    start: usize,
    dim: usize,
    lmi_cone: usize,
    lmi_scale: f64,
    block_cone: usize,
    /// Remaining coordinates, in order.
    rest: Vec<usize>,
    /// Position of each coordinate in `rest`; unused for eliminated ones.
    rpos: Vec<usize>,
}

impl Elimination {
    fn is_x(&self, c: usize) -> bool {
        c >= self.start && c < self.start + self.dim * self.dim
    }
}

enum HessianSink<'a> {
    Dense(&'a mut DMatrix<f64>),
    Reduced { el: &'a Elimination, h_rr: &'a mut DMatrix<f64>, h_xr: &'a mut DMatrix<f64> },
}

impl HessianSink<'_> {
    fn is_x(&self, c: usize) -> bool {
        match self {
            HessianSink::Dense(_) => false,
            HessianSink::Reduced { el, .. } => el.is_x(c),
        }
    }

    /// Adds `val` at `(i, j)` and `(j, i)`; `i` is never eliminated.
    fn add(&mut self, i: usize, j: usize, val: f64) {
        match self {
            HessianSink::Dense(h) => {
                h[(i, j)] += val;
                if i != j {
                    h[(j, i)] += val;
                }
            }
            HessianSink::Reduced { el, h_rr, h_xr } => {
                let ri = el.rpos[i];
                if el.is_x(j) {
                    h_xr[(j - el.start, ri)] += val;
                } else {
                    let rj = el.rpos[j];
                    h_rr[(ri, rj)] += val;
                    if ri != rj {
                        h_rr[(rj, ri)] += val;
                    }
                }
            }
        }
    }
}

/// Adds `coef * grad ln det F` and `coef * hess ln det F` for one compiled
/// term. Pairs of eliminated coordinates are skipped.
fn accumulate_logdet(m: &CompiledMatrix, fac: &Factored, coef: f64, grad: &mut [f64], sink: &mut HessianSink) {
    let d = fac.dim;
    let s = &fac.s;
    let at = |r: usize, c: usize| s[r + c * d];
    for (i, entries) in &m.coeffs {
        let mut g = 0.0;
        for &(a, b, v) in entries {
            g += (v * at(b, a)).re;
        }
        grad[*i] += coef * g;
    }
    let mut w = vec![Complex64::new(0.0, 0.0); d * d];
    for (p, (i, fi)) in m.coeffs.iter().enumerate() {
        if sink.is_x(*i) {
            continue;
        }
        w.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        // W = S F_i S
        for &(a, b, v) in fi {
            let col_a = &s[a * d..(a + 1) * d];
            for q in 0..d {
                let sbq = v * at(b, q);
                let wq = &mut w[q * d..(q + 1) * d];
                for (wp, sa) in wq.iter_mut().zip(col_a) {
                    *wp += sa * sbq;
                }
            }
        }
        for (q, (j, fj)) in m.coeffs.iter().enumerate() {
            if q < p && !sink.is_x(*j) {
                continue;
            }
            let mut h = 0.0;
            for &(c, dd, u) in fj {
                h += (u * w[dd + c * d]).re;
            }
            sink.add(*i, *j, -coef * h);
        }
    }
}

/// Eliminated-block data of one Newton system.
struct Reduced {
    h_rr: DMatrix<f64>,
    h_xr: DMatrix<f64>,
    /// Congruence `P` and eigenvalues `lam` with `K^{-1}(R) = P W P^H`,
    /// `W_ij = (P^H R P)_ij / (1 + lam_i lam_j)`.
    p: ComplexMatrix,
    lam: Vec<f64>,
    /// `S_X = X^{-1}` and `s S_L`, for applying the block exactly.
    s_x: ComplexMatrix,
    s_l_scaled: ComplexMatrix,
    /// Rank-one terms `w a a^T` from linear cones touching the block.
    low_rank: Vec<(Vec<f64>, f64)>,
}

enum NewtonSystem {
    Dense(DMatrix<f64>),
    Reduced(Reduced),
}

impl Problem {
    fn degree(&self) -> f64 {
        self.psd_cones.iter().map(|c| c.dim as f64).sum::<f64>() + self.lin_cones.len() as f64
    }

    fn objective(&self, x: &[f64]) -> Option<f64> {
        let mut obj = self.obj_linear.eval(x);
        for (w, m) in &self.obj_logdets {
            let l = cholesky_lower(&m.eval(x))?;
            obj += w * logdet_from_cholesky(&l);
        }
        Some(obj)
    }

    /// `-t obj(x) - sum ln l_j(x) - sum ln det F_k(x)`, or `None` outside the domain.
    fn potential(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut phi = -t * self.objective(x)?;
        for c in &self.lin_cones {
            let v = c.eval(x);
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        for m in &self.psd_cones {
            let l = cholesky_lower(&m.eval(x))?;
            phi -= logdet_from_cholesky(&l);
        }
        phi.is_finite().then_some(phi)
    }

    /// Gradient and Newton system of the potential; `reduced` selects the
    /// eliminated form when an elimination exists.
    fn derivatives(&self, x: &[f64], t: f64, reduced: bool) -> Option<(Vec<f64>, NewtonSystem)> {
        let mut grad = vec![0.0; self.n];
        for &(i, a) in &self.obj_linear.coeffs {
            grad[i] -= t * a;
        }
        match self.elim.as_ref().filter(|_| reduced) {
            None => {
                let mut hess = DMatrix::<f64>::zeros(self.n, self.n);
                let mut sink = HessianSink::Dense(&mut hess);
                for (w, m) in &self.obj_logdets {
                    let (_, fac) = factor(m, x)?;
                    accumulate_logdet(m, &fac, -t * w, &mut grad, &mut sink);
                }
                for m in &self.psd_cones {
                    let (_, fac) = factor(m, x)?;
                    accumulate_logdet(m, &fac, -1.0, &mut grad, &mut sink);
                }
                for c in &self.lin_cones {
                    let v = c.eval(x);
                    if !(v > 0.0) {
                        return None;
                    }
                    for &(i, a) in &c.coeffs {
                        grad[i] -= a / v;
                        for &(j, b) in &c.coeffs {
                            hess[(i, j)] += a * b / (v * v);
                        }
                    }
                }
                Some((grad, NewtonSystem::Dense(hess)))
            }
            Some(el) => {
                let nr = el.rest.len();
                let d = el.dim;
                let mut h_rr = DMatrix::<f64>::zeros(nr, nr);
                let mut h_xr = DMatrix::<f64>::zeros(d * d, nr);
                let mut s_lmi = None;
                let mut l_block = None;
                {
                    let mut sink = HessianSink::Reduced { el, h_rr: &mut h_rr, h_xr: &mut h_xr };
                    for (w, m) in &self.obj_logdets {
                        let (_, fac) = factor(m, x)?;
                        accumulate_logdet(m, &fac, -t * w, &mut grad, &mut sink);
                    }
                    for (k, m) in self.psd_cones.iter().enumerate() {
                        let (_, fac) = factor(m, x)?;
                        accumulate_logdet(m, &fac, -1.0, &mut grad, &mut sink);
                        if k == el.lmi_cone {
                            s_lmi = Some(ComplexMatrix::from_column_slice(fac.dim, fac.dim, &fac.s));
                        } else if k == el.block_cone {
                            l_block = Some(fac.l);
                        }
                    }
                }
                let mut low_rank = Vec::new();
                for c in &self.lin_cones {
                    let v = c.eval(x);
                    if !(v > 0.0) {
                        return None;
                    }
                    for &(i, a) in &c.coeffs {
                        grad[i] -= a / v;
                    }
                    if c.coeffs.iter().any(|(i, _)| el.is_x(*i)) {
                        let mut a = vec![0.0; self.n];
                        for &(i, ai) in &c.coeffs {
                            a[i] += ai;
                        }
                        low_rank.push((a, 1.0 / (v * v)));
                    } else {
                        for &(i, a) in &c.coeffs {
                            for &(j, b) in &c.coeffs {
                                h_rr[(el.rpos[i], el.rpos[j])] += a * b / (v * v);
                            }
                        }
                    }
                }
                let (s_l, l) = (s_lmi?, l_block?);
                let g = hermitize(&((l.adjoint() * &s_l * &l) * c64(el.lmi_scale, 0.0))).ok()?;
                let eig = nalgebra::SymmetricEigen::new(g.into_matrix());
                let p = &l * &eig.eigenvectors;
                let lam = eig.eigenvalues.iter().copied().collect();
                let s_x = inverse_from_cholesky(&l);
                let s_l_scaled = s_l * c64(el.lmi_scale, 0.0);
                Some((grad, NewtonSystem::Reduced(Reduced { h_rr, h_xr, p, lam, s_x, s_l_scaled, low_rank })))
            }
        }
    }

    /// Strictly inside every cone and every log-det argument.
    fn is_interior(&self, x: &[f64]) -> bool {
        self.lin_cones.iter().all(|c| c.eval(x) > 0.0)
            && self.psd_cones.iter().all(|m| cholesky_lower(&m.eval(x)).is_some())
            && self.obj_logdets.iter().all(|(_, m)| cholesky_lower(&m.eval(x)).is_some())
    }
}

fn dense_direction(grad: &[f64], hess: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = grad.len();
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| -grad[i]);
    let mut h = faer::Mat::<f64>::from_fn(n, n, |i, j| hess[(i, j)]);
    let solve = |h: &faer::Mat<f64>| {
        h.cholesky(faer::Side::Lower).ok().map(|ch| {
            let x = ch.solve(&rhs);
            (0..n).map(|i| x.read(i, 0)).collect::<Vec<f64>>()
        })
    };
    if let Some(x) = solve(&h) {
        return Some(x);
    }
    let mut lambda = 1e-10 * (hess.trace().abs() / n.max(1) as f64).max(1e-300);
    for _ in 0..30 {
        for i in 0..n {
            h.write(i, i, h.read(i, i) + lambda);
        }
        if let Some(x) = solve(&h) {
            return Some(x);
        }
        lambda *= 10.0;
    }
    None
}

/// Applies the inverse of the eliminated Hessian block to coordinates `r`.
fn block_inverse(red: &Reduced, dim: usize, r: &[f64]) -> Vec<f64> {
    let mut rm = ComplexMatrix::zeros(dim, dim);
    for (k, basis) in hermitian_basis(dim).enumerate() {
        let v = r[k];
        match basis {
            Basis::Diag(i) => rm[(i, i)] = c64(v, 0.0),
            Basis::Re(i, j) => {
                rm[(i, j)].re = 0.5 * v;
                rm[(j, i)].re = 0.5 * v;
            }
            Basis::Im(i, j) => {
                rm[(i, j)].im = 0.5 * v;
                rm[(j, i)].im = -0.5 * v;
            }
        }
    }
    let mut w = red.p.adjoint() * rm * &red.p;
    for j in 0..dim {
        for i in 0..dim {
            w[(i, j)] /= 1.0 + red.lam[i] * red.lam[j];
        }
    }
    let y = &red.p * w * red.p.adjoint();
    hermitian_basis(dim)
        .map(|basis| match basis {
            Basis::Diag(i) => y[(i, i)].re,
            Basis::Re(i, j) => y[(i, j)].re,
            Basis::Im(i, j) => y[(i, j)].im,
        })
        .collect()
}

fn coords_to_matrix(dim: usize, y: &[f64]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (k, basis) in hermitian_basis(dim).enumerate() {
        match basis {
            Basis::Diag(i) => m[(i, i)] = c64(y[k], 0.0),
            Basis::Re(i, j) => {
                m[(i, j)].re = y[k];
                m[(j, i)].re = y[k];
            }
            Basis::Im(i, j) => {
                m[(i, j)].im = y[k];
                m[(j, i)].im = -y[k];
            }
        }
    }
    m
}

/// The eliminated Hessian block applied to coordinates `y`; inverse of
/// [`block_inverse`].
fn block_apply(red: &Reduced, dim: usize, y: &[f64]) -> Vec<f64> {
    let ym = coords_to_matrix(dim, y);
    let z = &red.s_x * &ym * &red.s_x + &red.s_l_scaled * &ym * &red.s_l_scaled;
    hermitian_basis(dim)
        .map(|basis| match basis {
            Basis::Diag(i) => z[(i, i)].re,
            Basis::Re(i, j) => 2.0 * z[(i, j)].re,
            Basis::Im(i, j) => 2.0 * z[(i, j)].im,
        })
        .collect()
}

/// Full Hessian times `v` from the reduced representation.
fn reduced_apply(el: &Elimination, red: &Reduced, v: &[f64]) -> Vec<f64> {
    let d2 = el.dim * el.dim;
    let vx = &v[el.start..el.start + d2];
    let vr = DVector::from_iterator(el.rest.len(), el.rest.iter().map(|&c| v[c]));
    let mut out = vec![0.0; v.len()];
    let hx = DVector::from_vec(block_apply(red, el.dim, vx)) + &red.h_xr * &vr;
    out[el.start..el.start + d2].copy_from_slice(hx.as_slice());
    let hr = red.h_xr.transpose() * DVector::from_column_slice(vx) + &red.h_rr * &vr;
    for (q, &c) in el.rest.iter().enumerate() {
        out[c] = hr[q];
    }
    for (a, w) in &red.low_rank {
        let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
        for (o, x) in out.iter_mut().zip(a) {
            *o += w * dot * x;
        }
    }
    out
}

fn spd_solve(mut a: DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let mut lambda = 1e-10 * (a.trace().abs() / n.max(1) as f64).max(1e-300);
    for _ in 0..30 {
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        if let Some(ch) = a.clone().cholesky() {
            return Some(ch.solve(rhs));
        }
        lambda *= 10.0;
    }
    None
}

/// Newton direction by Schur complement on the eliminated block, then a
/// Woodbury correction for the rank-one linear-cone terms.
fn reduced_direction(el: &Elimination, grad: &[f64], red: &Reduced) -> Option<Vec<f64>> {
    let n = grad.len();
    let d2 = el.dim * el.dim;
    let nr = el.rest.len();
    let mut kc = DMatrix::<f64>::zeros(d2, nr);
    for j in 0..nr {
        let col: Vec<f64> = red.h_xr.column(j).iter().copied().collect();
        let y = block_inverse(red, el.dim, &col);
        kc.column_mut(j).copy_from_slice(&y);
    }
    let schur = &red.h_rr - red.h_xr.transpose() * &kc;
    // Columns: the right-hand side, then one per rank-one term.
    let mut rhs_full: Vec<Vec<f64>> = vec![grad.iter().map(|g| -g).collect()];
    rhs_full.extend(red.low_rank.iter().map(|(a, _)| a.clone()));
    let k = rhs_full.len();
    let mut ys = Vec::with_capacity(k);
    let mut rr = DMatrix::<f64>::zeros(nr, k);
    for (c, r) in rhs_full.iter().enumerate() {
        let y = block_inverse(red, el.dim, &r[el.start..el.start + d2]);
        let cty = red.h_xr.transpose() * DVector::from_column_slice(&y);
        for (q, &coord) in el.rest.iter().enumerate() {
            rr[(q, c)] = r[coord] - cty[q];
        }
        ys.push(y);
    }
    let zr = spd_solve(schur, &rr)?;
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (c, y) in ys.iter().enumerate() {
        let zr_c = zr.column(c);
        let zx = DVector::from_column_slice(y) - &kc * zr_c;
        let mut z = vec![0.0; n];
        z[el.start..el.start + d2].copy_from_slice(zx.as_slice());
        for (q, &coord) in el.rest.iter().enumerate() {
            z[coord] = zr_c[q];
        }
        zs.push(z);
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut dx = zs[0].clone();
    let m = red.low_rank.len();
    if m > 0 {
        let mut small = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DMatrix::<f64>::zeros(m, 1);
        for (a, (ua, wa)) in red.low_rank.iter().enumerate() {
            small[(a, a)] += 1.0 / wa;
            for b in 0..m {
                small[(a, b)] += dot(ua, &zs[b + 1]);
            }
            rhs[(a, 0)] = dot(ua, &zs[0]);
        }
        let small = (&small + small.transpose()) * 0.5;
        let c = spd_solve(small, &rhs)?;
        for b in 0..m {
            for (x, z) in dx.iter_mut().zip(&zs[b + 1]) {
                *x -= c[(b, 0)] * z;
            }
        }
    }
    Some(dx)
}

/// Relative residual above which a reduced Newton direction is rejected.
const REDUCED_RESIDUAL_TOL: f64 = 1e-8;

fn newton_direction(prob: &Problem, grad: &[f64], system: &NewtonSystem) -> Option<Vec<f64>> {
    match (system, &prob.elim) {
        (NewtonSystem::Dense(h), _) => dense_direction(grad, h),
        (NewtonSystem::Reduced(red), Some(el)) => reduced_direction(el, grad, red),
        (NewtonSystem::Reduced(_), None) => None,
    }
}

/// Newton direction, from the reduced system while it stays accurate.
/// Near the boundary the Schur complement loses definiteness to
/// cancellation; `dense` then switches to the full system for good.
fn checked_direction(prob: &Problem, x: &[f64], t: f64, dense: &mut bool) -> Option<(Vec<f64>, Vec<f64>)> {
    if !*dense && prob.elim.is_some() {
        let (grad, system) = prob.derivatives(x, t, true)?;
        if let Some(dx) = newton_direction(prob, &grad, &system) {
            if reduced_residual(prob, &grad, &system, &dx) <= REDUCED_RESIDUAL_TOL {
                return Some((grad, dx));
            }
        }
        *dense = true;
    }
    let (grad, system) = prob.derivatives(x, t, false)?;
    let dx = newton_direction(prob, &grad, &system)?;
    Some((grad, dx))
}

fn reduced_residual(prob: &Problem, grad: &[f64], system: &NewtonSystem, dx: &[f64]) -> f64 {
    let (NewtonSystem::Reduced(red), Some(el)) = (system, &prob.elim) else { return 0.0 };
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let h = reduced_apply(el, red, dx);
    norm(&mut h.iter().zip(grad).map(|(a, g)| a + g)) / norm(&mut grad.iter().copied()).max(f64::MIN_POSITIVE)
}

struct Centering {
    half_decrement_sq: f64,
    steps: usize,
}

fn center(prob: &Problem, x: &mut Vec<f64>, t: f64, settings: &SolverSettings, dense: &mut bool) -> Centering {
    let mut last = f64::INFINITY;
    let mut steps = 0;
    for _ in 0..settings.max_newton_iters {
        let Some((grad, dx)) = checked_direction(prob, x, t, dense) else { break };
        let slope: f64 = grad.iter().zip(&dx).map(|(g, d)| g * d).sum();
        // Half the squared decrement, in objective units.
        last = -slope / (2.0 * t);
        if last <= settings.newton_tolerance {
            break;
        }
        let Some(phi0) = prob.potential(x, t) else { break };
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            if let Some(phi) = prob.potential(&trial, t) {
                if phi <= phi0 + LINE_SEARCH_ALPHA * step * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= LINE_SEARCH_BETA;
        }
        steps += 1;
        match accepted {
            Some(next) => *x = next,
            // No further progress is representable at this barrier weight.
            None => break,
        }
    }
    Centering { half_decrement_sq: last, steps }
}

struct RunOutcome {
    x: Vec<f64>,
    status: SolveStatus,
    gap: f64,
    decrement: f64,
    outer: usize,
    newton_steps: usize,
}

fn run(
    prob: &Problem,
    mut x: Vec<f64>,
    settings: &SolverSettings,
    phase: u8,
    early_exit: &dyn Fn(&[f64]) -> bool,
    trace: &mut dyn FnMut(&BarrierTrace),
) -> RunOutcome {
    let theta = prob.degree();
    let mut t = 1.0 / settings.barrier_initial;
    let mut newton_steps = 0;
    let mut decrement = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut dense = false;
    for outer in 1..=settings.max_outer_iters {
        let c = center(prob, &mut x, t, settings, &mut dense);
        newton_steps += c.steps;
        decrement = c.half_decrement_sq;
        let obj = prob.objective(&x).unwrap_or(f64::NAN);
        gap = theta / t;
        trace(&BarrierTrace {
            phase,
            iteration: outer,
            barrier_weight: 1.0 / t,
            objective: obj,
            newton_decrement: decrement,
            newton_steps: c.steps,
        });
        if early_exit(&x) || gap <= settings.gap_tolerance * (1.0 + obj.abs()) {
            return RunOutcome { x, status: SolveStatus::Optimal, gap, decrement, outer, newton_steps };
        }
        t /= settings.barrier_decrease_factor;
    }
    RunOutcome {
        x,
        status: SolveStatus::MaxIters,
        gap,
        decrement,
        outer: settings.max_outer_iters,
        newton_steps,
    }
}

fn min_eig_compiled(m: &CompiledMatrix, x: &[f64]) -> f64 {
    min_eigenvalue(&hermitize(&m.eval(x)).expect("square"))
}

/// Phase I: maximize `-s` with every cone shifted by `s`, stopping at the
/// first centered point with `s < 0`.
fn phase_one(
    prob: &Problem,
    x0: &[f64],
    settings: &SolverSettings,
    trace: &mut dyn FnMut(&BarrierTrace),
) -> Option<(Vec<f64>, usize)> {
    let n = prob.n;
    let s_coord = n;
    let mut worst: f64 = 0.0;
    let mut psd = Vec::new();
    for m in prob.psd_cones.iter().chain(prob.obj_logdets.iter().map(|(_, m)| m)) {
        worst = worst.max(-min_eig_compiled(m, x0));
        psd.push(m.clone().with_identity_coeff(s_coord));
    }
    let mut lin = Vec::new();
    for c in &prob.lin_cones {
        worst = worst.max(-c.eval(x0));
        let mut shifted = c.clone();
        shifted.coeffs.push((s_coord, 1.0));
        lin.push(shifted);
    }
    // s >= -1 and a wide box around the start keep the phase-I program bounded.
    lin.push(CompiledScalar { constant: 1.0, coeffs: vec![(s_coord, 1.0)] });
    let radius = PHASE_ONE_BOX * (1.0 + x0.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    for (i, &v) in x0.iter().enumerate() {
        lin.push(CompiledScalar { constant: radius - v, coeffs: vec![(i, 1.0)] });
        lin.push(CompiledScalar { constant: radius + v, coeffs: vec![(i, -1.0)] });
    }
    let aux = Problem {
        n: n + 1,
        obj_logdets: Vec::new(),
        obj_linear: CompiledScalar { constant: 0.0, coeffs: vec![(s_coord, -1.0)] },
        psd_cones: psd,
        lin_cones: lin,
        elim: None,
    };
    let mut start = x0.to_vec();
    start.push(worst + 1.0);
    let outcome = run(&aux, start, settings, 1, &|x: &[f64]| x[s_coord] < 0.0, trace);
    let x = outcome.x;
    (x[s_coord] < 0.0 && prob.is_interior(&x[..n])).then(|| (x[..n].to_vec(), outcome.newton_steps))
}

/// Blocks smaller than this are left in the dense Newton system.
const ELIMINATION_MIN_DIM: usize = 4;

fn find_elimination(p: &ConicProgram, layout: &Layout, prob: &Problem) -> Option<Elimination> {
    let mut best: Option<Elimination> = None;
    for (v, var) in p.matrix_vars.iter().enumerate() {
        let d = var.dim;
        if d < ELIMINATION_MIN_DIM || best.as_ref().is_some_and(|b| b.dim >= d) {
            continue;
        }
        let start = layout.matrix_offsets[v];
        let touches = |m: &CompiledMatrix| m.coeffs.iter().any(|(c, _)| *c >= start && *c < start + d * d);
        if prob.obj_logdets.iter().any(|(_, m)| touches(m)) {
            continue;
        }
        let block_cone = p.lmis.len() + v;
        let others: Vec<usize> =
            (0..prob.psd_cones.len()).filter(|&k| k != block_cone && touches(&prob.psd_cones[k])).collect();
        let [lmi_cone] = others[..] else { continue };
        let lmi = &p.lmis[lmi_cone];
        let terms: Vec<_> = lmi.matrix_terms.iter().filter(|t| t.var == v).collect();
        let [term] = terms[..] else { continue };
        if term.map != MatrixMap::Identity || term.offset != 0 || lmi.dim() != d || term.scale == 0.0 {
            continue;
        }
        let rest: Vec<usize> = (0..layout.len).filter(|c| *c < start || *c >= start + d * d).collect();
        let mut rpos = vec![usize::MAX; layout.len];
        for (q, &c) in rest.iter().enumerate() {
            rpos[c] = q;
        }
        best = Some(Elimination { start, dim: d, lmi_cone, lmi_scale: term.scale, block_cone, rest, rpos });
    }
    best
}

fn lower(p: &ConicProgram) -> (Layout, Problem) {
    let layout = Layout::new(p);
    let obj_logdets = p.log_dets.iter().map(|l| (l.weight, compile_matrix(&l.arg, &layout))).collect();
    let obj_linear = compile_scalar(&p.linear, &layout);
    let mut psd_cones: Vec<CompiledMatrix> = p.lmis.iter().map(|a| compile_matrix(a, &layout)).collect();
    for v in 0..p.matrix_vars.len() {
        psd_cones.push(compile_block(v, &layout));
    }
    let mut lin_cones: Vec<CompiledScalar> =
        p.scalar_ineqs.iter().map(|g| compile_scalar(g, &layout).negated()).collect();
    for (s, v) in p.scalar_vars.iter().enumerate() {
        if let Some(lb) = v.lower {
            lin_cones.push(CompiledScalar { constant: -lb, coeffs: vec![(layout.scalar_offsets[s], 1.0)] });
        }
    }
    let n = layout.len;
    let mut prob = Problem { n, obj_logdets, obj_linear, psd_cones, lin_cones, elim: None };
    prob.elim = find_elimination(p, &layout, &prob);
    (layout, prob)
}

/// Solves `p` from `start` (or the all-zero point). A start that is not
/// strictly feasible triggers phase I.
pub fn solve(p: &ConicProgram, settings: &SolverSettings, start: Option<&Point>) -> Result<Solution> {
    solve_with_trace(p, settings, start, &mut |_| {})
}

pub fn solve_with_trace(
    p: &ConicProgram,
    settings: &SolverSettings,
    start: Option<&Point>,
    trace: &mut dyn FnMut(&BarrierTrace),
) -> Result<Solution> {
    p.validate()?;
    settings.validate()?;
    let (layout, prob) = lower(p);
    let start = match start {
        Some(s) => {
            s.check_shape(p)?;
            s.clone()
        }
        None => p.zero_point(),
    };
    let x0 = layout.to_coords(&start);
    let mut phase_one_steps = 0;
    let x0 = if prob.is_interior(&x0) {
        x0
    } else {
        match phase_one(&prob, &x0, settings, trace) {
            Some((x, steps)) => {
                phase_one_steps = steps;
                x
            }
            None => {
                let eval = evaluate(p, &start)?;
                return Ok(Solution {
                    point: start,
                    objective: eval.objective,
                    kkt_residual: f64::INFINITY,
                    status: SolveStatus::Infeasible,
                    gap_bound: f64::INFINITY,
                    outer_iterations: 0,
                    newton_steps: phase_one_steps,
                });
            }
        }
    };
    let out = run(&prob, x0, settings, 2, &|_| false, trace);
    let point = layout.to_point(&out.x);
    let eval = evaluate(p, &point)?;
    let mut status = out.status;
    if status == SolveStatus::Optimal
        && (out.decrement > settings.newton_tolerance || !check_feasible(p, &point, settings.feasibility_tolerance))
    {
        status = SolveStatus::MaxIters;
    }
    Ok(Solution {
        point,
        objective: eval.objective,
        kkt_residual: out.decrement,
        status,
        gap_bound: out.gap,
        outer_iterations: out.outer,
        newton_steps: out.newton_steps + phase_one_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gaussian_matrix;
    use crate::linalg::HermitianMatrix;
    use crate::rng::stream;
    use crate::solver::{AffineMatrix, AffineScalar, LogDetTerm};

    /// `max ln det(I + G^H Q G) - t` with a worst-case-expectation style
    /// block `M >= blockdiag(A^T (x) Q, c(t, mu))`.
    fn structured_program(seed: u64) -> (ConicProgram, Point) {
        let mut rng = stream(seed);
        let g = gaussian_matrix(&mut rng, 2, 2);
        let a = gaussian_matrix(&mut rng, 2, 2);
        let a = hermitize(&(&a * a.adjoint() + ComplexMatrix::identity(2, 2))).unwrap();
        let pi_root = gaussian_matrix(&mut rng, 5, 5);
        let pi = hermitize(&(&pi_root * pi_root.adjoint())).unwrap();
        let mut p = ConicProgram::default();
        let q = p.add_matrix_var("Q", 2);
        let m = p.add_matrix_var("M", 5);
        let t = p.add_scalar_var("t", Some(0.0));
        let mu = p.add_scalar_var("mu", None);
        p.log_dets.push(LogDetTerm {
            weight: 1.0,
            arg: AffineMatrix::new(HermitianMatrix::identity(2)).with_matrix(q, MatrixMap::Congruence(g), 1.0, 0),
        });
        p.linear = AffineScalar::constant(0.0).with_scalar(t, -1.0);
        p.scalar_ineqs.push(AffineScalar::constant(-1.0).with_matrix(q, HermitianMatrix::identity(2)));
        p.scalar_ineqs.push(AffineScalar::constant(0.0).with_scalar(mu, 1.0).with_matrix(m, pi.scale(10.0)));
        let corner = HermitianMatrix::from_real_diagonal(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        p.lmis.push(
            AffineMatrix::new(HermitianMatrix::zeros(5))
                .with_matrix(m, MatrixMap::Identity, 1.0, 0)
                .with_matrix(q, MatrixMap::KronLeft(a.as_matrix().transpose()), -1.0, 0)
                .with_scalar(t, corner.clone())
                .with_scalar(mu, corner),
        );
        let mut start = p.zero_point();
        start.matrices[q] = HermitianMatrix::scaled_identity(2, 0.25);
        start.matrices[m] = HermitianMatrix::scaled_identity(5, 3.0);
        let mu0 = -10.0 * pi.inner(&start.matrices[m]) - 1.0;
        start.scalars = vec![-mu0 + 1.0, mu0];
        (p, start)
    }

    #[test]
    fn reduced_newton_direction_matches_dense() {
        for seed in 0..4 {
            let (p, start) = structured_program(seed);
            let (layout, prob) = lower(&p);
            let el = prob.elim.as_ref().expect("M is eliminable");
            assert_eq!(el.dim, 5);
            let x = layout.to_coords(&start);
            assert!(prob.is_interior(&x));
            let t = 3.0;
            let (g1, sys) = prob.derivatives(&x, t, true).unwrap();
            let reduced = newton_direction(&prob, &g1, &sys).unwrap();
            let dense_prob = Problem { elim: None, ..prob };
            let (g2, sys2) = dense_prob.derivatives(&x, t, true).unwrap();
            let dense = newton_direction(&dense_prob, &g2, &sys2).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-10);
            }
            let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in reduced.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-8 * (1.0 + scale), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn reduced_and_dense_solves_agree() {
        let (p, start) = structured_program(7);
        let s = SolverSettings::default();
        let reduced = solve(&p, &s, Some(&start)).unwrap();
        let (_, prob) = lower(&p);
        let dense_prob = Problem { elim: None, ..prob };
        let layout = Layout::new(&p);
        let out = run(&dense_prob, layout.to_coords(&start), &s, 2, &|_| false, &mut |_| {});
        let dense_obj = dense_prob.objective(&out.x).unwrap();
        assert_eq!(reduced.status, SolveStatus::Optimal);
        assert!((reduced.objective - dense_obj).abs() < 1e-6, "{} vs {dense_obj}", reduced.objective);
    }

}