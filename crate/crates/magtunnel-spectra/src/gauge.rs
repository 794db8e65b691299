//! Gauges with `curl A = B` and their edge integrals on a grid.

use crate::error::Result;
use crate::grid::GridSpec;
use magtunnel::field_model::FieldSpec;
use magtunnel::quad::{gk15, integrate, QuadOptions};
use magtunnel::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeChoice {
    /// `A = (0, int_0^{q1} B(s, q2) ds)`.
    LandauX,
    /// `A = (-int_0^{q2} B(q1, s) ds, 0)`.
    LandauY,
    /// Average of the two Landau gauges.
    Symmetric,
}

impl GaugeChoice {
    pub const ALL: [GaugeChoice; 3] = [GaugeChoice::LandauX, GaugeChoice::LandauY, GaugeChoice::Symmetric];
}

/// Three-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[inline]
fn field(f: &FieldSpec, q1: f64, q2: f64) -> f64 {
    f.eval(C64::new(q1, 0.0), q2).re
}

/// `int_0^{x_k} g` at every node of the ascending list `x`, by Gauss-Kronrod
/// on each cell and cumulative sums outward from zero.
fn primitive_at_nodes<G: Fn(f64) -> f64>(g: G, x: &[f64]) -> Vec<f64> {
    let mut gm = |t: f64| g(t);
    let mut cell = |a: f64, b: f64| gk15::<f64, f64, _>(&mut gm, a, b).0;
    let n = x.len();
    let mut out = vec![0.0; n];
    let first_pos = x.partition_point(|&v| v < 0.0);
    if first_pos < n {
        out[first_pos] = cell(0.0, x[first_pos]);
        for k in first_pos + 1..n {
            out[k] = out[k - 1] + cell(x[k - 1], x[k]);
        }
    }
    if first_pos > 0 {
        let k0 = first_pos - 1;
        out[k0] = cell(0.0, x[k0]);
        for k in (0..k0).rev() {
            out[k] = out[k + 1] + cell(x[k + 1], x[k]);
        }
    }
    out
}

/// Edge integrals `int_edge A . dl` on the interior grid.
///
/// `vertical[i][j]` runs from node `(i, j)` to `(i, j + 1)`; `horizontal[i][j]`
/// from `(i, j)` to `(i + 1, j)`. Both are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIntegrals {
    pub grid: GridSpec,
    pub vertical: Vec<f64>,
    pub horizontal: Vec<f64>,
}

impl EdgeIntegrals {
    #[inline]
    pub fn vertical_at(&self, i: usize, j: usize) -> f64 {
        self.vertical[i * (self.grid.points[1] - 1) + j]
    }

    #[inline]
    pub fn horizontal_at(&self, i: usize, j: usize) -> f64 {
        self.horizontal[i * self.grid.points[1] + j]
    }

    /// Counter-clockwise circulation around the plaquette with lower-left node `(i, j)`.
    pub fn circulation(&self, i: usize, j: usize) -> f64 {
        self.horizontal_at(i, j) + self.vertical_at(i + 1, j) - self.horizontal_at(i, j + 1) - self.vertical_at(i, j)
    }

    /// Imposes `theta(-e) = -theta(e)` for mirror edges when the computed values
    /// already agree to `tol` (relative); returns whether it did.
    ///
    /// For a field with `B(-q) = B(q)` and an odd gauge this holds in exact
    /// arithmetic; enforcing it bitwise makes the matrix commute exactly with
    /// the parity.
    pub fn symmetrize(&mut self, tol: f64) -> bool {
        let [n1, n2] = self.grid.points;
        let mv = |i: usize, j: usize| (n1 - 1 - i) * (n2 - 1) + (n2 - 2 - j);
        let mh = |i: usize, j: usize| (n1 - 2 - i) * n2 + (n2 - 1 - j);
        let scale = self
            .vertical
            .iter()
            .chain(self.horizontal.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let ok_v = (0..n1).all(|i| (0..n2 - 1).all(|j| (self.vertical[i * (n2 - 1) + j] + self.vertical[mv(i, j)]).abs() <= tol * scale));
        let ok_h = (0..n1 - 1).all(|i| (0..n2).all(|j| (self.horizontal[i * n2 + j] + self.horizontal[mh(i, j)]).abs() <= tol * scale));
        if !(ok_v && ok_h) {
            return false;
        }
        for i in 0..n1 {
            for j in 0..n2 - 1 {
                let (a, b) = (i * (n2 - 1) + j, mv(i, j));
                if a <= b {
                    let t = 0.5 * (self.vertical[a] - self.vertical[b]);
                    self.vertical[a] = t;
                    self.vertical[b] = -t;
                    if a == b {
                        self.vertical[a] = 0.0;
                    }
                }
            }
        }
        for i in 0..n1 - 1 {
            for j in 0..n2 {
                let (a, b) = (i * n2 + j, mh(i, j));
                if a <= b {
                    let t = 0.5 * (self.horizontal[a] - self.horizontal[b]);
                    self.horizontal[a] = t;
                    self.horizontal[b] = -t;
                    if a == b {
                        self.horizontal[a] = 0.0;
                    }
                }
            }
        }
        true
    }
}

/// `int A2 dq2` along vertical edges for `A2 = int_0^{q1} B(s, q2) ds`.
fn landau_x_vertical(f: &FieldSpec, g: &GridSpec) -> Vec<f64> {
    let [n1, n2] = g.points;
    let d2 = g.spacing()[1];
    let x1 = g.nodes(0);
    // A2 on every q1 node at each Gauss point of each vertical cell.
    let cols: Vec<[Vec<f64>; 3]> = (0..n2 - 1)
        .into_par_iter()
        .map(|j| {
            let q2 = g.coord(1, j);
            GL3_X.map(|t| {
                let s = q2 + 0.5 * d2 * (1.0 + t);
                primitive_at_nodes(|u| field(f, u, s), &x1)
            })
        })
        .collect();
    let mut out = vec![0.0; n1 * (n2 - 1)];
    for i in 0..n1 {
        for j in 0..n2 - 1 {
            let c = &cols[j];
            out[i * (n2 - 1) + j] = 0.5 * d2 * (GL3_W[0] * c[0][i] + GL3_W[1] * c[1][i] + GL3_W[2] * c[2][i]);
        }
    }
    out
}

/// `int A1 dq1` along horizontal edges for `A1 = -int_0^{q2} B(q1, s) ds`.
fn landau_y_horizontal(f: &FieldSpec, g: &GridSpec) -> Vec<f64> {
    let [n1, n2] = g.points;
    let d1 = g.spacing()[0];
    let x2 = g.nodes(1);
    let rows: Vec<[Vec<f64>; 3]> = (0..n1 - 1)
        .into_par_iter()
        .map(|i| {
            let q1 = g.coord(0, i);
            GL3_X.map(|t| {
                let s = q1 + 0.5 * d1 * (1.0 + t);
                primitive_at_nodes(|u| field(f, s, u), &x2)
            })
        })
        .collect();
    let mut out = vec![0.0; (n1 - 1) * n2];
    for i in 0..n1 - 1 {
        let r = &rows[i];
        for j in 0..n2 {
            out[i * n2 + j] = -0.5 * d1 * (GL3_W[0] * r[0][j] + GL3_W[1] * r[1][j] + GL3_W[2] * r[2][j]);
        }
    }
    out
}

/// Edge integrals of the chosen gauge.
pub fn edge_integrals(f: &FieldSpec, gauge: GaugeChoice, g: &GridSpec) -> EdgeIntegrals {
    let [n1, n2] = g.points;
    let (vertical, horizontal) = match gauge {
        GaugeChoice::LandauX => (landau_x_vertical(f, g), vec![0.0; (n1 - 1) * n2]),
        GaugeChoice::LandauY => (vec![0.0; n1 * (n2 - 1)], landau_y_horizontal(f, g)),
        GaugeChoice::Symmetric => {
            let v = landau_x_vertical(f, g).into_iter().map(|x| 0.5 * x).collect();
            let h = landau_y_horizontal(f, g).into_iter().map(|x| 0.5 * x).collect();
            (v, h)
        }
    };
    EdgeIntegrals { grid: *g, vertical, horizontal }
}

/// Flux of `B` through the plaquette with lower-left node `(i, j)` by nested
/// adaptive quadrature.
pub fn plaquette_flux(f: &FieldSpec, g: &GridSpec, i: usize, j: usize) -> Result<f64> {
    let (a1, a2) = (g.coord(0, i), g.coord(1, j));
    let [d1, d2] = g.spacing();
    let opts = QuadOptions::rel(1e-14);
    let r = integrate(
        |q1: f64| integrate(|q2: f64| field(f, q1, q2), a2, a2 + d2, opts).map(|r| r.value).unwrap_or(f64::NAN),
        a1,
        a1 + d1,
        opts,
    )
    .map_err(magtunnel::Error::from)?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use magtunnel::field_model::{make_example_field, ExampleFieldParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn preset() -> FieldSpec {
        make_example_field(ExampleFieldParams { b0: 1.0, eps1: 0.1, eps2: 0.0755, c_u: 0.8, beta: 1.0, strip_r: 0.75, eps: None }).unwrap()
    }

    #[test]
    fn primitive_matches_closed_form() {
        let x: Vec<f64> = (0..41).map(|k| -2.0 + 0.1 * k as f64 + 0.013).collect();
        let p = primitive_at_nodes(|t| t.cos(), &x);
        for (xi, pi) in x.iter().zip(&p) {
            assert!((pi - xi.sin()).abs() < 1e-15, "{xi} {pi}");
        }
    }

    #[test]
    fn circulation_equals_flux_on_random_plaquettes() {
        let f = preset();
        let g = GridSpec::new([1.5, 2.0], [37, 51]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for gauge in GaugeChoice::ALL {
            let e = edge_integrals(&f, gauge, &g);
            for _ in 0..25 {
                let i = rng.gen_range(0..g.points[0] - 1);
                let j = rng.gen_range(0..g.points[1] - 1);
                let flux = plaquette_flux(&f, &g, i, j).unwrap();
                let c = e.circulation(i, j);
                assert!((c - flux).abs() <= 1e-10 * flux.abs(), "{gauge:?} ({i},{j}): {c} vs {flux}");
            }
        }
    }

    #[test]
    fn symmetric_field_gives_odd_edge_integrals() {
        let f = preset();
        let g = GridSpec::new([1.5, 2.0], [20, 25]).unwrap();
        for gauge in GaugeChoice::ALL {
            let mut e = edge_integrals(&f, gauge, &g);
            let before = e.clone();
            assert!(e.symmetrize(1e-12), "{gauge:?}");
            for (a, b) in e.vertical.iter().zip(&before.vertical) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}
