//! Lowers a [`ConicProgram`] onto a real coordinate vector.
//!
//! A Hermitian block of dimension `n` uses `n^2` real coordinates: the
//! diagonal, then for every `k < l` the real and imaginary parts of
//! `X[k, l]`. Each affine Hermitian expression becomes a constant plus, for
//! every coordinate it depends on, the sparse image of that coordinate's
//! basis matrix.

use num_complex::Complex64;

use super::{AffineMatrix, AffineScalar, ConicProgram, MatrixMap, Point};
use crate::linalg::{c64, hermitize, ComplexMatrix, HermitianMatrix};

pub(super) type Entry = (usize, usize, Complex64);

#[derive(Debug, Clone)]
pub(super) struct CompiledMatrix {
    pub dim: usize,
    pub constant: ComplexMatrix,
    /// `(coordinate, nonzero entries of its coefficient matrix)`
    pub coeffs: Vec<(usize, Vec<Entry>)>,
}

impl CompiledMatrix {
    pub fn eval(&self, x: &[f64]) -> ComplexMatrix {
        let mut m = self.constant.clone();
        for (i, entries) in &self.coeffs {
            let xi = x[*i];
            if xi == 0.0 {
                continue;
            }
            for &(r, c, v) in entries {
                m[(r, c)] += v * xi;
            }
        }
        m
    }

    /// Adds `s * I`, used by the phase-I shift.
    pub fn with_identity_coeff(mut self, coord: usize) -> Self {
        let entries = (0..self.dim).map(|k| (k, k, c64(1.0, 0.0))).collect();
        self.coeffs.push((coord, entries));
        self
    }
}

#[derive(Debug, Clone, Default)]
pub(super) struct CompiledScalar {
    pub constant: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl CompiledScalar {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(i, a)| a * x[*i]).sum::<f64>()
    }

    pub fn negated(&self) -> Self {
        Self { constant: -self.constant, coeffs: self.coeffs.iter().map(|&(i, a)| (i, -a)).collect() }
    }
}

/// Offsets of each variable in the coordinate vector.
#[derive(Debug, Clone)]
pub(super) struct Layout {
    pub matrix_offsets: Vec<usize>,
    pub matrix_dims: Vec<usize>,
    pub scalar_offsets: Vec<usize>,
    pub len: usize,
}

impl Layout {
    pub fn new(p: &ConicProgram) -> Self {
        let mut off = 0;
        let mut matrix_offsets = Vec::new();
        let mut matrix_dims = Vec::new();
        for v in &p.matrix_vars {
            matrix_offsets.push(off);
            matrix_dims.push(v.dim);
            off += v.dim * v.dim;
        }
        let mut scalar_offsets = Vec::new();
        for _ in &p.scalar_vars {
            scalar_offsets.push(off);
            off += 1;
        }
        Self { matrix_offsets, matrix_dims, scalar_offsets, len: off }
    }

    pub fn to_coords(&self, point: &Point) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for (v, m) in point.matrices.iter().enumerate() {
            let n = self.matrix_dims[v];
            let base = self.matrix_offsets[v];
            for (k, basis) in hermitian_basis(n).enumerate() {
                x[base + k] = match basis {
                    Basis::Diag(i) => m.as_matrix()[(i, i)].re,
                    Basis::Re(i, j) => m.as_matrix()[(i, j)].re,
                    Basis::Im(i, j) => m.as_matrix()[(i, j)].im,
                };
            }
        }
        for (s, &val) in point.scalars.iter().enumerate() {
            x[self.scalar_offsets[s]] = val;
        }
        x
    }

    pub fn to_point(&self, x: &[f64]) -> Point {
        let matrices = self
            .matrix_dims
            .iter()
            .zip(&self.matrix_offsets)
            .map(|(&n, &base)| {
                let mut m = ComplexMatrix::zeros(n, n);
                for (k, basis) in hermitian_basis(n).enumerate() {
                    let v = x[base + k];
                    match basis {
                        Basis::Diag(i) => m[(i, i)] = c64(v, 0.0),
                        Basis::Re(i, j) => {
                            m[(i, j)].re = v;
                            m[(j, i)].re = v;
                        }
                        Basis::Im(i, j) => {
                            m[(i, j)].im = v;
                            m[(j, i)].im = -v;
                        }
                    }
                }
                hermitize(&m).expect("square")
            })
            .collect();
        let scalars = self.scalar_offsets.iter().map(|&o| x[o]).collect();
        Point { matrices, scalars }
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) enum Basis {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

impl Basis {
    pub fn matrix(self, n: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        match self {
            Basis::Diag(i) => m[(i, i)] = c64(1.0, 0.0),
            Basis::Re(i, j) => {
                m[(i, j)] = c64(1.0, 0.0);
                m[(j, i)] = c64(1.0, 0.0);
            }
            Basis::Im(i, j) => {
                m[(i, j)] = c64(0.0, 1.0);
                m[(j, i)] = c64(0.0, -1.0);
            }
        }
        m
    }
}

pub(super) fn hermitian_basis(n: usize) -> impl Iterator<Item = Basis> {
    let diag = (0..n).map(Basis::Diag);
    let off = (0..n).flat_map(move |i| ((i + 1)..n).flat_map(move |j| [Basis::Re(i, j), Basis::Im(i, j)]));
    diag.chain(off)
}

fn sparse(m: &ComplexMatrix, offset: usize) -> Vec<Entry> {
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((r + offset, c + offset, v));
            }
        }
    }
    out
}

fn merge(coeffs: &mut Vec<(usize, Vec<Entry>)>, coord: usize, entries: Vec<Entry>) {
    if entries.is_empty() {
        return;
    }
    match coeffs.iter_mut().find(|(c, _)| *c == coord) {
        Some((_, existing)) => {
            for (r, c, v) in entries {
                match existing.iter_mut().find(|(er, ec, _)| *er == r && *ec == c) {
                    Some(e) => e.2 += v,
                    None => existing.push((r, c, v)),
                }
            }
        }
        None => coeffs.push((coord, entries)),
    }
}

pub(super) fn compile_matrix(a: &AffineMatrix, layout: &Layout) -> CompiledMatrix {
    let dim = a.dim();
    let mut coeffs: Vec<(usize, Vec<Entry>)> = Vec::new();
    for t in &a.matrix_terms {
        let n = layout.matrix_dims[t.var];
        let base = layout.matrix_offsets[t.var];
        for (k, basis) in hermitian_basis(n).enumerate() {
            let img = match (&t.map, basis) {
                // Identity images are already sparse; skip the dense product.
                (MatrixMap::Identity, b) => b.matrix(n),
                (map, b) => map.apply(&b.matrix(n)),
            } * c64(t.scale, 0.0);
            merge(&mut coeffs, base + k, sparse(&img, t.offset));
        }
    }
    for (s, c) in &a.scalar_terms {
        merge(&mut coeffs, layout.scalar_offsets[*s], sparse(c.as_matrix(), 0));
    }
    coeffs.sort_by_key(|(c, _)| *c);
    CompiledMatrix { dim, constant: a.constant.as_matrix().clone(), coeffs }
}

pub(super) fn compile_scalar(a: &AffineScalar, layout: &Layout) -> CompiledScalar {
    let mut dense = vec![0.0; layout.len];
    for (v, c) in &a.matrix_terms {
        let n = layout.matrix_dims[*v];
        let base = layout.matrix_offsets[*v];
        for (k, basis) in hermitian_basis(n).enumerate() {
            let e = HermitianMatrix::new(basis.matrix(n)).expect("basis is Hermitian");
            dense[base + k] += c.inner(&e);
        }
    }
    for (s, a) in &a.scalar_terms {
        dense[layout.scalar_offsets[*s]] += a;
    }
    let coeffs = dense.into_iter().enumerate().filter(|(_, a)| *a != 0.0).collect();
    CompiledScalar { constant: a.constant, coeffs }
}

/// Block PSD constraint `X_var >= 0` as a compiled identity map.
pub(super) fn compile_block(var: usize, layout: &Layout) -> CompiledMatrix {
    let n = layout.matrix_dims[var];
    let a = AffineMatrix::new(HermitianMatrix::zeros(n)).with_matrix(var, MatrixMap::Identity, 1.0, 0);
    compile_matrix(&a, layout)
}
