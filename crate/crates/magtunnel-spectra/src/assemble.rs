//! Gauge-covariant five-point discretization of `(-i h grad - A)^2`.

use crate::error::{Result, SpectraError};
use crate::gauge::{edge_integrals, EdgeIntegrals, GaugeChoice};
use crate::grid::GridSpec;
use faer::sparse::{SparseColMat, Triplet};
use magtunnel::field_model::FieldSpec;
use magtunnel::C64;
use rayon::prelude::*;
use std::io::Write;

/// Relative agreement required before mirror edges are tied together.
const PARITY_TIE_TOL: f64 = 1e-12;

/// The Dirichlet matrix with Peierls links
/// `H[n, n'] = -(h / d)^2 exp(-(i/h) int_n^{n'} A . dl)` and diagonal
/// `2 h^2 / d1^2 + 2 h^2 / d2^2`.
#[derive(Debug, Clone)]
pub struct MagneticOperator {
    pub grid: GridSpec,
    pub h: f64,
    pub gauge: GaugeChoice,
    pub diag: f64,
    /// `H[(i, j), (i, j + 1)]`, row-major over `n1 x (n2 - 1)`.
    pub vlink: Vec<C64>,
    /// `H[(i, j), (i + 1, j)]`, row-major over `(n1 - 1) x n2`.
    pub hlink: Vec<C64>,
    /// Whether mirror links were tied so that `H` commutes with `U f(q) = f(-q)`.
    pub parity_symmetric: bool,
}

fn link(t: f64, theta: f64, h: f64) -> C64 {
    let (s, c) = (theta / h).sin_cos();
    C64::new(-t * c, t * s)
}

/// Assembles the operator after checking the resolution rules.
pub fn assemble(f: &FieldSpec, gauge: GaugeChoice, grid: &GridSpec, h: f64) -> Result<MagneticOperator> {
    grid.validate(h)?;
    let mut e = edge_integrals(f, gauge, grid);
    let parity_symmetric = e.symmetrize(PARITY_TIE_TOL);
    Ok(from_edges(&e, gauge, h, parity_symmetric))
}

/// Assembly from precomputed edge integrals without the resolution check.
pub fn from_edges(e: &EdgeIntegrals, gauge: GaugeChoice, h: f64, parity_symmetric: bool) -> MagneticOperator {
    let grid = e.grid;
    let [d1, d2] = grid.spacing();
    let (t1, t2) = (h * h / (d1 * d1), h * h / (d2 * d2));
    MagneticOperator {
        grid,
        h,
        gauge,
        diag: 2.0 * t1 + 2.0 * t2,
        vlink: e.vertical.iter().map(|&th| link(t2, th, h)).collect(),
        hlink: e.horizontal.iter().map(|&th| link(t1, th, h)).collect(),
        parity_symmetric,
    }
}

impl MagneticOperator {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Gershgorin bound on `||H||_2`.
    pub fn norm_bound(&self) -> f64 {
        let [d1, d2] = self.grid.spacing();
        let h2 = self.h * self.h;
        self.diag + 2.0 * h2 / (d1 * d1) + 2.0 * h2 / (d2 * d2)
    }

    #[inline]
    fn v_at(&self, i: usize, j: usize) -> C64 {
        self.vlink[i * (self.grid.points[1] - 1) + j]
    }

    #[inline]
    fn h_at(&self, i: usize, j: usize) -> C64 {
        self.hlink[i * self.grid.points[1] + j]
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let [n1, n2] = self.grid.points;
        assert_eq!(x.len(), n1 * n2);
        assert_eq!(y.len(), n1 * n2);
        y.par_chunks_mut(n2).enumerate().for_each(|(i, row)| {
            for (j, out) in row.iter_mut().enumerate() {
                let idx = i * n2 + j;
                let mut acc = x[idx] * self.diag;
                if j + 1 < n2 {
                    acc += self.v_at(i, j) * x[idx + 1];
                }
                if j > 0 {
                    acc += self.v_at(i, j - 1).conj() * x[idx - 1];
                }
                if i + 1 < n1 {
                    acc += self.h_at(i, j) * x[idx + n2];
                }
                if i > 0 {
                    acc += self.h_at(i - 1, j).conj() * x[idx - n2];
                }
                *out = acc;
            }
        });
    }

    /// Stored entries `(row, col, value)` of the lower triangle, column by column.
    pub fn lower_triplets(&self, shift: f64) -> Vec<(usize, usize, C64)> {
        let [n1, n2] = self.grid.points;
        let mut out = Vec::with_capacity(3 * n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let idx = i * n2 + j;
                out.push((idx, idx, C64::new(self.diag - shift, 0.0)));
                if j + 1 < n2 {
                    out.push((idx + 1, idx, self.v_at(i, j).conj()));
                }
                if i + 1 < n1 {
                    out.push((idx + n2, idx, self.h_at(i, j).conj()));
                }
            }
        }
        out
    }

    /// Entry `H[r, c]`, zero off the stencil.
    pub fn entry(&self, r: usize, c: usize) -> C64 {
        let n2 = self.grid.points[1];
        let (ir, jr) = (r / n2, r % n2);
        if r == c {
            return C64::new(self.diag, 0.0);
        }
        if c == r + 1 && jr + 1 < n2 {
            return self.v_at(ir, jr);
        }
        if r == c + 1 && jr > 0 {
            return self.v_at(ir, jr - 1).conj();
        }
        if c == r + n2 {
            return self.h_at(ir, jr);
        }
        if r == c + n2 {
            return self.h_at(ir - 1, jr).conj();
        }
        C64::new(0.0, 0.0)
    }

    /// `max |H - H^*|` over the stored entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for (r, c, _) in self.lower_triplets(0.0) {
            m = m.max((self.entry(r, c) - self.entry(c, r).conj()).norm());
        }
        m
    }

    /// `max |(H U - U H)[r, c]| = max |H[U r, U c] - H[r, c]|` over the stencil.
    pub fn parity_commutator(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for (r, c, _) in self.lower_triplets(0.0) {
            m = m.max((self.entry(g.mirror(r), g.mirror(c)) - self.entry(r, c)).norm());
            m = m.max((self.entry(g.mirror(c), g.mirror(r)) - self.entry(c, r)).norm());
        }
        m
    }

    /// Sparse lower triangle of `H - shift` for the Cholesky factorization.
    pub fn shifted_lower(&self, shift: f64) -> Result<SparseColMat<usize, C64>> {
        let t: Vec<_> = self.lower_triplets(shift).into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.dim(), self.dim(), &t).map_err(|e| SpectraError::Factorization(format!("{e:?}")))
    }

    /// Writes the lower triangle in Matrix Market coordinate format
    /// (`complex hermitian`, one-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let t = self.lower_triplets(0.0);
        writeln!(w, "%%MatrixMarket matrix coordinate complex hermitian")?;
        writeln!(w, "% magnetic Laplacian: h = {:e}, gauge = {:?}, grid = {:?}", self.h, self.gauge, self.grid)?;
        writeln!(w, "{} {} {}", self.dim(), self.dim(), t.len())?;
        for (r, c, v) in t {
            writeln!(w, "{} {} {:.17e} {:.17e}", r + 1, c + 1, v.re, v.im)?;
        }
        Ok(())
    }
}
