//! Rotationally equivariant twist maps of the round sphere,
//! `(theta, phi) -> (theta, phi + h(theta))`, and their graphs in `S^2 x S^2`.
//!
//! Every twist map is area preserving. The graph is invariant under the
//! diagonal rotation about the z axis, so all geometry is evaluated on the
//! meridian `phi = 0` with `phi` derivatives taken analytically.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::error::{LagflowError, Result};
use crate::flow::{continue_run, FlowConfig, FlowHooks, FlowModel, FlowResult, FlowState, NoHooks};
use crate::observables::{willmore, Curvature, ObservableRow};
use crate::stencil::DerivativeOrder;
use crate::tensor::BTensor;

type Vec3 = [f64; 3];
type Vec6 = [f64; 6];

#[inline]
fn dot6(a: &Vec6, b: &Vec6) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy6(a: f64, x: &Vec6, y: &Vec6) -> Vec6 {
    std::array::from_fn(|k| a * x[k] + y[k])
}

#[inline]
fn join(a: Vec3, b: Vec3) -> Vec6 {
    [a[0], a[1], a[2], b[0], b[1], b[2]]
}

#[inline]
fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Minimum number of colatitude nodes.
pub const MIN_NODES: usize = 32;

/// Twist function sampled at cell centres `theta_i = (i + 1/2) pi / m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistProfile {
    h: Vec<f64>,
}

impl TwistProfile {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.len() < MIN_NODES {
            return Err(LagflowError::InvalidArgument(format!(
                "twist profile needs at least {MIN_NODES} nodes, got {}",
                h.len()
            )));
        }
        if let Some(k) = h.iter().position(|x| !x.is_finite()) {
            return Err(LagflowError::NonFinite(format!("twist entry {k}")));
        }
        Ok(Self { h })
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..m).map(|i| f(Self::theta_of(m, i))).collect())
    }

    pub fn constant(m: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; m])
    }

    fn theta_of(m: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * PI / m as f64
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn spacing(&self) -> f64 {
        PI / self.h.len() as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        Self::theta_of(self.m(), i)
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn mean(&self) -> f64 {
        self.h.iter().sum::<f64>() / self.m() as f64
    }

    /// `max |h - mean(h)|`.
    pub fn drift(&self) -> f64 {
        let mean = self.mean();
        self.h.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
    }

    // reflected ghost nodes: h(-theta) = h(theta) and h(2 pi - theta) = h(theta)
    fn ghost(&self, k: isize) -> f64 {
        let m = self.m() as isize;
        let idx = if k < 0 {
            -k - 1
        } else if k >= m {
            2 * m - 1 - k
        } else {
            k
        };
        self.h[idx as usize]
    }

    /// `(h', h'')` at node `i`.
    pub fn derivatives(&self, i: usize, order: DerivativeOrder) -> (f64, f64) {
        let d = self.spacing();
        let k = i as isize;
        let at = |o: isize| self.ghost(k + o);
        match order {
            DerivativeOrder::Second => (
                (at(1) - at(-1)) / (2.0 * d),
                (at(1) - 2.0 * at(0) + at(-1)) / (d * d),
            ),
            DerivativeOrder::Fourth => (
                (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * d),
                (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * d * d),
            ),
        }
    }

    pub(crate) fn with_values(&self, h: Vec<f64>) -> Self {
        Self { h }
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# lagflow-twist m={}", self.m())?;
        for (i, h) in self.h.iter().enumerate() {
            writeln!(w, "{} {:.16e} {:.16e}", i, self.theta(i), h)?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or(LagflowError::Parse { line: 1, msg: "empty profile".into() })??;
        let m: usize = header
            .strip_prefix("# lagflow-twist m=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or(LagflowError::Parse { line: 1, msg: format!("bad header {header:?}") })?;
        let mut h = vec![f64::NAN; m];
        let mut seen = 0;
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| LagflowError::Parse { line: k + 2, msg: msg.into() };
            let mut it = line.split_whitespace();
            let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad i"))?;
            let _theta: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad theta"))?;
            let val: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad h"))?;
            if i >= m {
                return Err(bad("node index out of range"));
            }
            h[i] = val;
            seen += 1;
        }
        if seen != m {
            return Err(LagflowError::Parse { line: 0, msg: format!("expected {m} rows, found {seen}") });
        }
        Self::new(h)
    }
}

/// Geometry of the graph at one colatitude node (on the meridian `phi = 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereNode {
    pub theta: f64,
    /// `(p, q)` with `p` on the source and `q` on the target sphere.
    pub point: Vec6,
    /// `[g_tt, g_tp, g_pp]` in `(theta, phi)` coordinates.
    pub metric: [f64; 3],
    pub volume_density: f64,
    /// Mean curvature in `S^2 x S^2`.
    pub mean_curvature: Vec6,
    pub a_norm2: f64,
    pub h_norm2: f64,
    pub eta: f64,
    pub b_tensor: BTensor,
    pub sigma: [f64; 2],
    /// Normal part of the twist deformation field `(0, dq/dphi)`.
    pub twist_field: Vec6,
    /// Twist rate whose normal velocity best matches `H`.
    pub hdot: f64,
    /// `|H - hdot W|`.
    pub twist_residual: f64,
}

/// Evaluates the node geometry from `theta`, `h` and its first two derivatives.
pub fn sphere_node(theta: f64, h: f64, hp: f64, hpp: f64) -> std::result::Result<SphereNode, String> {
    let (s, c) = theta.sin_cos();
    let (sp, cp) = h.sin_cos();
    let p = [s, 0.0, c];
    let p_t = [c, 0.0, -s];
    let p_p = [0.0, s, 0.0];
    let p_tt = [-s, 0.0, -c];
    let p_tp = [0.0, c, 0.0];
    let p_pp = [-s, 0.0, 0.0];
    let q = [s * cp, s * sp, c];
    let q_t = [c * cp, c * sp, -s];
    let q_p = [-s * sp, s * cp, 0.0];
    let q_tt = [-s * cp, -s * sp, -c];
    let q_tp = [-c * sp, c * cp, 0.0];
    let q_pp = [-s * cp, -s * sp, 0.0];
    let lin = |terms: &[(f64, &Vec3)]| -> Vec3 {
        let mut out = [0.0; 3];
        for (a, v) in terms {
            for k in 0..3 {
                out[k] += a * v[k];
            }
        }
        out
    };

    let f_t = join(p_t, lin(&[(1.0, &q_t), (hp, &q_p)]));
    let f_p = join(p_p, q_p);
    let f_tt = join(p_tt, lin(&[(1.0, &q_tt), (2.0 * hp, &q_tp), (hp * hp, &q_pp), (hpp, &q_p)]));
    let f_tp = join(p_tp, lin(&[(1.0, &q_tp), (hp, &q_pp)]));
    let f_pp = join(p_pp, q_pp);

    let g11 = dot6(&f_t, &f_t);
    let g12 = dot6(&f_t, &f_p);
    let g22 = dot6(&f_p, &f_p);
    let det = g11 * g22 - g12 * g12;
    if !(det > 0.0 && det.is_finite()) {
        return Err(format!("metric not positive definite (det = {det:e})"));
    }
    let inv = [g22 / det, -g12 / det, g11 / det];

    // orthonormal frame: two radial directions, then Gram-Schmidt on the tangents
    let r1 = join(p, [0.0; 3]);
    let r2 = join([0.0; 3], q);
    let len1 = g11.sqrt();
    let e1: Vec6 = std::array::from_fn(|k| f_t[k] / len1);
    let w = axpy6(-dot6(&f_p, &e1), &e1, &f_p);
    let lenw = dot6(&w, &w).sqrt();
    if !(lenw > 1e-300) {
        return Err("tangent frame degenerate".into());
    }
    let e2: Vec6 = std::array::from_fn(|k| w[k] / lenw);
    let project = |v: &Vec6| -> Vec6 {
        let mut out = *v;
        for basis in [&r1, &r2, &e1, &e2] {
            out = axpy6(-dot6(v, basis), basis, &out);
        }
        out
    };

    let second = [project(&f_tt), project(&f_tp), project(&f_pp)];
    let mean = axpy6(inv[2], &second[2], &axpy6(2.0 * inv[1], &second[1], &std::array::from_fn(|k| inv[0] * second[0][k])));
    let ginv = [[inv[0], inv[1]], [inv[1], inv[2]]];
    let mut a_norm2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    a_norm2 += ginv[i][k] * ginv[j][l] * dot6(&second[i + j], &second[k + l]);
                }
            }
        }
    }

    // frame coefficients e_i = sum_a coeffs[i][a] F_a
    let coeffs = [[1.0 / len1, 0.0], [-(g12 / g11) / lenw, 1.0 / lenw]];
    let a_frame = |i: usize, j: usize| -> Vec6 {
        let mut out = [0.0; 6];
        for a in 0..2 {
            for b in 0..2 {
                out = axpy6(coeffs[i][a] * coeffs[j][b], &second[a + b], &out);
            }
        }
        out
    };
    // J' = (J_1, -J_2), J_i the rotation by +90 degrees in each factor
    let j_prime = |v: &Vec6| -> Vec6 {
        let a = cross(&p, &[v[0], v[1], v[2]]);
        let b = cross(&q, &[v[3], v[4], v[5]]);
        [a[0], a[1], a[2], -b[0], -b[1], -b[2]]
    };
    let normals = [j_prime(&e1), j_prime(&e2)];
    let mut b = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in i..2 {
            let aij = a_frame(i, j);
            for k in 0..2 {
                let val = -dot6(&aij, &normals[k]);
                b[k][i][j] = val;
                b[k][j][i] = val;
            }
        }
    }
    let sigma = [dot6(&normals[0], &mean), dot6(&normals[1], &mean)];

    let twist = project(&join([0.0; 3], q_p));
    let w2 = dot6(&twist, &twist);
    let hdot = if w2 > 0.0 { dot6(&mean, &twist) / w2 } else { 0.0 };
    let rest = axpy6(-hdot, &twist, &mean);

    let sqrt_det = det.sqrt();
    Ok(SphereNode {
        theta,
        point: join(p, q),
        metric: [g11, g12, g22],
        volume_density: sqrt_det,
        mean_curvature: mean,
        a_norm2,
        h_norm2: dot6(&mean, &mean),
        // *omega_1 = *omega_2 = sin(theta) / sqrt(det g)
        eta: 2.0 * s / sqrt_det,
        b_tensor: BTensor(b),
        sigma,
        twist_field: twist,
        hdot,
        twist_residual: dot6(&rest, &rest).sqrt(),
    })
}

/// Geometry along the whole colatitude line.
#[derive(Clone, Debug)]
pub struct SphereGeometry {
    nodes: Vec<SphereNode>,
    dtheta: f64,
}

pub fn sphere_geometry(profile: &TwistProfile, order: DerivativeOrder) -> Result<SphereGeometry> {
    let nodes = (0..profile.m())
        .map(|i| {
            let (hp, hpp) = profile.derivatives(i, order);
            sphere_node(profile.theta(i), profile.values()[i], hp, hpp).map_err(|detail| {
                LagflowError::DegenerateGraph { i, j: 0, detail }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if nodes.iter().any(|g| !(g.a_norm2.is_finite() && g.hdot.is_finite())) {
        return Err(LagflowError::NonFinite("sphere geometry".into()));
    }
    Ok(SphereGeometry { nodes, dtheta: profile.spacing() })
}

/// Below this `|W|` the reduced velocity is not computed.
pub const MIN_TWIST_FIELD: f64 = 1e-10;

impl SphereGeometry {
    pub fn nodes(&self) -> &[SphereNode] {
        &self.nodes
    }

    /// Midpoint quadrature of `w * sqrt(det g)` over `theta` and the full circle.
    pub fn integrate(&self, w: impl Fn(&SphereNode) -> f64) -> f64 {
        2.0 * PI * self.dtheta * self.nodes.iter().map(|g| w(g) * g.volume_density).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    /// Reduced velocity `hdot` and residual per node.
    pub fn twist_velocity(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        for (node, g) in self.nodes.iter().enumerate() {
            let norm = dot6(&g.twist_field, &g.twist_field).sqrt();
            if norm < MIN_TWIST_FIELD {
                return Err(LagflowError::NearPole { node, norm });
            }
        }
        Ok(self.nodes.iter().map(|g| (g.hdot, g.twist_residual)).unzip())
    }

    /// Largest inverse-metric coefficient `g^{theta theta}`.
    pub fn max_inv_metric_tt(&self) -> f64 {
        self.nodes
            .iter()
            .map(|g| g.metric[2] / (g.metric[0] * g.metric[2] - g.metric[1] * g.metric[1]))
            .fold(0.0, f64::max)
    }
}

/// Largest distance from the graph of the twist map to the diagonal,
/// `max d_{S^2}(x, f(x)) / sqrt(2)`.
pub fn max_rho_sphere(profile: &TwistProfile) -> f64 {
    (0..profile.m())
        .map(|i| {
            let s = profile.theta(i).sin();
            let h = profile.values()[i];
            // p = (s, 0, c), q = (s cos h, s sin h, c)
            let (sh, ch) = h.sin_cos();
            let c = profile.theta(i).cos();
            let p = [s, 0.0, c];
            let q = [s * ch, s * sh, c];
            let x = cross(&p, &q);
            let sin_d = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let cos_d = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
            sin_d.atan2(cos_d)
        })
        .fold(0.0, f64::max)
        / std::f64::consts::SQRT_2
}

fn sphere_row(geom: &SphereGeometry, profile: &TwistProfile) -> ObservableRow {
    let mut min_eta = f64::INFINITY;
    let mut max_eta = f64::NEG_INFINITY;
    let mut sup_h2 = 0.0f64;
    let mut sup_a2 = 0.0f64;
    let mut ratio = 0.0f64;
    let mut residual = 0.0f64;
    for g in geom.nodes() {
        min_eta = min_eta.min(g.eta);
        max_eta = max_eta.max(g.eta);
        sup_h2 = sup_h2.max(g.h_norm2);
        sup_a2 = sup_a2.max(g.a_norm2);
        residual = residual.max(g.twist_residual);
        if let Some(r) = g.b_tensor.sigma_ratio() {
            ratio = ratio.max(r);
        }
    }
    let int_h2 = geom.integrate(|g| g.h_norm2);
    ObservableRow {
        t: 0.0,
        dt: 0.0,
        area: geom.area(),
        min_eta,
        max_eta,
        eta_bound: 0.0,
        sup_h2,
        int_h2,
        sup_a2,
        int_a2: geom.integrate(|g| g.a_norm2),
        lag_defect_sup: 0.0,
        lag_defect_l2: 0.0,
        max_rho: max_rho_sphere(profile),
        willmore: willmore(int_h2, Curvature::Positive),
        sigma_ratio_max: ratio,
        twist_residual_sup: residual,
    }
}

/// Reduced flow of twist profiles in `S^2 x S^2`.
#[derive(Clone, Debug)]
pub struct SphereFlow {
    pub cfl: f64,
    pub order: DerivativeOrder,
    /// Colatitude spacing, for the resolution guard.
    pub dtheta: f64,
}

impl SphereFlow {
    pub fn from_config(config: &FlowConfig) -> Self {
        Self {
            cfl: config.cfl,
            order: config.order,
            dtheta: PI / config.n as f64,
        }
    }
}

impl FlowModel for SphereFlow {
    type Map = TwistProfile;

    fn curvature(&self) -> Curvature {
        Curvature::Positive
    }

    fn stable_dt(&self, map: &TwistProfile) -> Result<f64> {
        let geom = sphere_geometry(map, self.order)?;
        let d = map.spacing();
        Ok(self.cfl * d * d / (2.0 * geom.max_inv_metric_tt()))
    }

    fn advance(&self, map: &TwistProfile, dt: f64) -> Result<TwistProfile> {
        let geom = sphere_geometry(map, self.order)?;
        let (hdot, _) = geom.twist_velocity()?;
        let next: Vec<f64> = map.values().iter().zip(&hdot).map(|(h, v)| h + dt * v).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(LagflowError::NonFinite("twist profile after step".into()));
        }
        Ok(map.with_values(next))
    }

    fn observe(&self, map: &TwistProfile) -> Result<ObservableRow> {
        let geom = sphere_geometry(map, self.order)?;
        Ok(sphere_row(&geom, map))
    }

    fn unresolved(&self, row: &ObservableRow) -> Option<f64> {
        let v = row.sup_a2 * self.dtheta * self.dtheta;
        (v > 1.0).then_some(v)
    }
}

/// Runs the reduced sphere flow from `initial`.
pub fn run_sphere(config: &FlowConfig, initial: TwistProfile) -> Result<FlowResult<TwistProfile>> {
    run_sphere_with_hooks(config, FlowState::new(initial), &mut NoHooks)
}

pub fn run_sphere_with_hooks(
    config: &FlowConfig,
    state: FlowState<TwistProfile>,
    hooks: &mut dyn FlowHooks<TwistProfile>,
) -> Result<FlowResult<TwistProfile>> {
    if state.map.m() != config.n {
        return Err(LagflowError::InvalidArgument(format!(
            "profile has {} nodes but n = {}",
            state.map.m(),
            config.n
        )));
    }
    continue_run(&SphereFlow::from_config(config), config, state, hooks)
}
