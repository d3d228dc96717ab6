//! Extrinsic geometry of the graph `F(x, y) = (x, y, f(x, y), g(x, y))` of a
//! torus map inside the flat product `T^2 x T^2`, evaluated node by node from
//! periodic finite differences.

use rayon::prelude::*;

use crate::error::{LagflowError, Result};
use crate::grid::MapGrid;
use crate::stencil::{DerivativeOrder, PeriodicStencil};
use crate::tensor::BTensor;

pub(crate) type Vec4 = [f64; 4];

#[inline]
pub(crate) fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
fn axpy4(a: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2], a * x[3] + y[3]]
}

#[inline]
fn scale4(a: f64, x: &Vec4) -> Vec4 {
    [a * x[0], a * x[1], a * x[2], a * x[3]]
}

/// Complex structure of `omega' = omega_1 - omega_2` in flat coordinates.
#[inline]
pub fn j_prime(v: &Vec4) -> Vec4 {
    [-v[1], v[0], v[3], -v[2]]
}

/// Symmetric 2x2 matrix stored as `[m11, m12, m22]`.
pub type Sym2 = [f64; 3];

/// Pointwise geometry of the graph at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeGeometry {
    /// `Df = [[f_x, f_y], [g_x, g_y]]`.
    pub differential: [[f64; 2]; 2],
    pub metric: Sym2,
    pub inv_metric: Sym2,
    /// `sqrt(det g)`.
    pub volume_density: f64,
    /// Normal-projected second derivatives `A_11, A_12, A_22` in R^4.
    pub second_ff: [Vec4; 3],
    pub mean_curvature: Vec4,
    pub a_norm2: f64,
    pub h_norm2: f64,
    pub b_tensor: BTensor,
    pub sigma: [f64; 2],
    /// `*(omega_1 + omega_2) = (1 + Jac) / sqrt(det g)`.
    pub eta: f64,
    /// `2 / sqrt(1 + |Df|^2 + Jac^2)`, equal to `eta` when `Jac = 1`.
    pub eta_closed_form: f64,
    /// `f_x g_y - f_y g_x`.
    pub jacobian: f64,
    pub lag_defect: f64,
}

/// Evaluates the node geometry from the differential of the map and the
/// second derivatives `[xx, xy, yy]` of both height functions.
pub fn node_geometry(
    df: [[f64; 2]; 2],
    hess_f: [f64; 3],
    hess_g: [f64; 3],
) -> std::result::Result<NodeGeometry, String> {
    let [[fx, fy], [gx, gy]] = df;
    let tx: Vec4 = [1.0, 0.0, fx, gx];
    let ty: Vec4 = [0.0, 1.0, fy, gy];
    let g11 = dot4(&tx, &tx);
    let g12 = dot4(&tx, &ty);
    let g22 = dot4(&ty, &ty);
    let det = g11 * g22 - g12 * g12;
    if !(det > 0.0 && g11 > 0.0) || !det.is_finite() {
        return Err(format!("metric not positive definite (det = {det:e})"));
    }
    let inv = [g22 / det, -g12 / det, g11 / det];

    // normal projection: v - g^{kl} <v, F_l> F_k
    let project = |v: &Vec4| -> Vec4 {
        let a = dot4(v, &tx);
        let b = dot4(v, &ty);
        let cx = inv[0] * a + inv[1] * b;
        let cy = inv[1] * a + inv[2] * b;
        axpy4(-cy, &ty, &axpy4(-cx, &tx, v))
    };
    let second = [
        project(&[0.0, 0.0, hess_f[0], hess_g[0]]),
        project(&[0.0, 0.0, hess_f[1], hess_g[1]]),
        project(&[0.0, 0.0, hess_f[2], hess_g[2]]),
    ];
    let mean = axpy4(
        inv[2],
        &second[2],
        &axpy4(2.0 * inv[1], &second[1], &scale4(inv[0], &second[0])),
    );

    // |A|^2 = g^{ik} g^{jl} <A_ij, A_kl>
    let ginv = [[inv[0], inv[1]], [inv[1], inv[2]]];
    let a_of = |i: usize, j: usize| &second[i + j];
    let mut a_norm2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    a_norm2 += ginv[i][k] * ginv[j][l] * dot4(a_of(i, j), a_of(k, l));
                }
            }
        }
    }

    // Gram-Schmidt frame; e_i = sum_p c[i][p] F_p
    let len_x = g11.sqrt();
    let len_w = (det / g11).sqrt();
    if !(len_w > 1e-300) {
        return Err("tangent frame degenerate".into());
    }
    let coeffs = [[1.0 / len_x, 0.0], [-(g12 / g11) / len_w, 1.0 / len_w]];
    let frame = [
        scale4(coeffs[0][0], &tx),
        axpy4(coeffs[1][1], &ty, &scale4(coeffs[1][0], &tx)),
    ];
    let a_frame = |i: usize, j: usize| -> Vec4 {
        let mut out = [0.0; 4];
        for p in 0..2 {
            for q in 0..2 {
                out = axpy4(coeffs[i][p] * coeffs[j][q], a_of(p, q), &out);
            }
        }
        out
    };
    let normals = [j_prime(&frame[0]), j_prime(&frame[1])];
    let mut b = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in i..2 {
            let aij = a_frame(i, j);
            for k in 0..2 {
                let val = -dot4(&aij, &normals[k]);
                b[k][i][j] = val;
                b[k][j][i] = val;
            }
        }
    }
    let sigma = [dot4(&normals[0], &mean), dot4(&normals[1], &mean)];

    let jac = fx * gy - fy * gx;
    let sqrt_det = det.sqrt();
    let eta = (1.0 + jac) / sqrt_det;
    let eta_closed_form = 2.0 / (1.0 + fx * fx + fy * fy + gx * gx + gy * gy + jac * jac).sqrt();

    Ok(NodeGeometry {
        differential: df,
        metric: [g11, g12, g22],
        inv_metric: inv,
        volume_density: sqrt_det,
        second_ff: second,
        mean_curvature: mean,
        a_norm2,
        h_norm2: dot4(&mean, &mean),
        b_tensor: BTensor(b),
        sigma,
        eta,
        eta_closed_form,
        jacobian: jac,
        lag_defect: jac - 1.0,
    })
}

/// Geometry of the whole graph, one [`NodeGeometry`] per grid node.
#[derive(Clone, Debug)]
pub struct GeometryField {
    n: usize,
    order: DerivativeOrder,
    nodes: Vec<NodeGeometry>,
}

/// Sup and area-weighted L2 norms of `Jac - 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectNorms {
    pub sup: f64,
    pub l2: f64,
}

pub fn compute_geometry(map: &MapGrid, order: DerivativeOrder) -> Result<GeometryField> {
    let n = map.n();
    let st = PeriodicStencil::new(n, order);
    let lin = map.linear();
    let nodes: Vec<std::result::Result<NodeGeometry, (usize, String)>> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let pu = st.partials(map.u(), i, j);
            let pv = st.partials(map.v(), i, j);
            let df = [
                [lin[0][0] + pu.x, lin[0][1] + pu.y],
                [lin[1][0] + pv.x, lin[1][1] + pv.y],
            ];
            node_geometry(df, [pu.xx, pu.xy, pu.yy], [pv.xx, pv.xy, pv.yy]).map_err(|e| (k, e))
        })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for node in nodes {
        match node {
            Ok(g) => {
                if !(g.a_norm2.is_finite() && g.eta.is_finite()) {
                    return Err(LagflowError::NonFinite("geometry field".into()));
                }
                out.push(g)
            }
            Err((k, detail)) => {
                return Err(LagflowError::DegenerateGraph { i: k / n, j: k % n, detail })
            }
        }
    }
    Ok(GeometryField { n, order, nodes: out })
}

impl GeometryField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> DerivativeOrder {
        self.order
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn node(&self, i: usize, j: usize) -> &NodeGeometry {
        &self.nodes[i * self.n + j]
    }

    /// Quadrature weight of one node in parameter space.
    pub fn cell_area(&self) -> f64 {
        let h = 1.0 / self.n as f64;
        h * h
    }

    /// `eta` per node.
    pub fn eta_field(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.eta).collect()
    }

    /// Largest `|eta - eta_closed_form|`; vanishes exactly where `Jac = 1`.
    pub fn eta_consistency(&self) -> f64 {
        self.nodes
            .iter()
            .map(|g| (g.eta - g.eta_closed_form).abs())
            .fold(0.0, f64::max)
    }

    pub fn lagrangian_defect(&self) -> DefectNorms {
        let w = self.cell_area();
        let mut sup = 0.0f64;
        let mut acc = 0.0;
        for g in &self.nodes {
            sup = sup.max(g.lag_defect.abs());
            acc += g.lag_defect * g.lag_defect * g.volume_density * w;
        }
        DefectNorms { sup, l2: acc.sqrt() }
    }

    /// `(B, sigma)` per node.
    pub fn b_sigma(&self) -> Vec<(BTensor, [f64; 2])> {
        self.nodes.iter().map(|g| (g.b_tensor, g.sigma)).collect()
    }

    /// Largest deviation of `B` from full symmetry.
    pub fn b_symmetry_defect(&self) -> f64 {
        self.nodes
            .iter()
            .map(|g| g.b_tensor.symmetry_defect())
            .fold(0.0, f64::max)
    }

    pub fn min_jacobian(&self) -> f64 {
        self.nodes.iter().map(|g| g.jacobian).fold(f64::INFINITY, f64::min)
    }

    /// Midpoint quadrature of `w * sqrt(det g)`.
    pub fn integrate(&self, w: impl Fn(&NodeGeometry) -> f64) -> f64 {
        let cell = self.cell_area();
        self.nodes.iter().map(|g| w(g) * g.volume_density * cell).sum()
    }

    pub fn area(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}
