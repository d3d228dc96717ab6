//! Construction and validation of area-preserving initial maps.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{LagflowError, Result};
use crate::grid::MapGrid;
use crate::sphere::{sphere_geometry, TwistProfile};
use crate::stencil::DerivativeOrder;
use crate::torus::compute_geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, arg: f64) -> (f64, f64, f64) {
        // value, first and second derivative with respect to arg
        let (s, c) = arg.sin_cos();
        match self {
            Trig::Sin => (s, c, -s),
            Trig::Cos => (c, -s, -c),
        }
    }
}

/// One term `coeff * trig_x(2 pi kx x) * trig_y(2 pi ky y)` of a stream function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMode {
    pub coeff: f64,
    pub kx: u32,
    pub ky: u32,
    pub x: Trig,
    pub y: Trig,
}

/// Recipe for an initial map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `u = a sin(2 pi k y)`, `v = 0`.
    Shear { amplitude: f64, wavenumber: u32 },
    /// x-shear by `a` followed by y-shear by `b`.
    DoubleShear { amplitude: [f64; 2], wavenumber: u32 },
    /// Time-one map of the Hamiltonian field of a periodic stream function.
    Hamiltonian { modes: Vec<StreamMode>, substeps: usize },
    /// `h(theta) = a (1 - cos theta) + sum_j modes[j] cos(j theta)`.
    SphereTwist {
        #[serde(default)]
        amplitude: f64,
        #[serde(default)]
        modes: Vec<f64>,
    },
    /// Children applied in order: the first child's map acts first.
    Compose { children: Vec<GeneratorSpec> },
}

/// Implicit-midpoint Newton tolerance.
pub const MIDPOINT_TOL: f64 = 1e-13;
const MIDPOINT_MAX_ITER: usize = 50;
pub const MIN_HAMILTONIAN_SUBSTEPS: usize = 16;

impl GeneratorSpec {
    pub fn is_sphere(&self) -> bool {
        matches!(self, GeneratorSpec::SphereTwist { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LagflowError::InvalidArgument(m));
        match self {
            GeneratorSpec::Shear { amplitude, wavenumber } => {
                if *wavenumber < 1 {
                    return bad("wavenumber must be >= 1".into());
                }
                if !amplitude.is_finite() {
                    return bad("amplitude must be finite".into());
                }
            }
            GeneratorSpec::DoubleShear { amplitude, wavenumber } => {
                if *wavenumber < 1 {
                    return bad("wavenumber must be >= 1".into());
                }
                if amplitude.iter().any(|a| !a.is_finite()) {
                    return bad("amplitudes must be finite".into());
                }
            }
            GeneratorSpec::Hamiltonian { modes, substeps } => {
                if *substeps < MIN_HAMILTONIAN_SUBSTEPS {
                    return bad(format!("substeps must be >= {MIN_HAMILTONIAN_SUBSTEPS}, got {substeps}"));
                }
                for m in modes {
                    if !m.coeff.is_finite() {
                        return bad("stream coefficients must be finite".into());
                    }
                    if m.kx == 0 && m.ky == 0 {
                        return bad("stream mode needs kx >= 1 or ky >= 1".into());
                    }
                }
            }
            GeneratorSpec::SphereTwist { amplitude, modes } => {
                if !amplitude.is_finite() || modes.iter().any(|c| !c.is_finite()) {
                    return bad("twist coefficients must be finite".into());
                }
            }
            GeneratorSpec::Compose { children } => {
                if children.is_empty() {
                    return bad("compose needs at least one child".into());
                }
                for c in children {
                    if c.is_sphere() {
                        return bad("compose only accepts torus generators".into());
                    }
                    c.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// A generated initial map.
#[derive(Clone, Debug)]
pub enum Generated {
    Torus {
        map: MapGrid,
        /// Intrinsic area defect the generator can certify, independent of
        /// finite differences: 0 for closed-form maps, the tangent-map
        /// `|det - 1|` for integrated ones, and `None` when resampling makes
        /// no such statement possible.
        certified_defect: Option<f64>,
    },
    Sphere(TwistProfile),
}

pub fn generate(spec: &GeneratorSpec, n: usize) -> Result<Generated> {
    spec.validate()?;
    match spec {
        GeneratorSpec::Shear { amplitude, wavenumber } => {
            let (a, k) = (*amplitude, *wavenumber as f64);
            let map = MapGrid::from_fn(n, |_, y| (a * (TAU * k * y).sin(), 0.0))?;
            Ok(Generated::Torus { map, certified_defect: Some(0.0) })
        }
        GeneratorSpec::DoubleShear { amplitude, wavenumber } => {
            let ([a, b], k) = (*amplitude, *wavenumber as f64);
            let map = MapGrid::from_fn(n, |x, y| {
                let du = a * (TAU * k * y).sin();
                (du, b * (TAU * k * (x + du)).sin())
            })?;
            Ok(Generated::Torus { map, certified_defect: Some(0.0) })
        }
        GeneratorSpec::Hamiltonian { modes, substeps } => {
            let (map, defect) = hamiltonian_map(modes, *substeps, n)?;
            Ok(Generated::Torus { map, certified_defect: Some(defect) })
        }
        GeneratorSpec::SphereTwist { amplitude, modes } => {
            let a = *amplitude;
            let prof = TwistProfile::from_fn(n, |t| {
                a * (1.0 - t.cos())
                    + modes
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * (j as f64 * t).cos())
                        .sum::<f64>()
            })?;
            Ok(Generated::Sphere(prof))
        }
        GeneratorSpec::Compose { children } => {
            let mut maps = Vec::with_capacity(children.len());
            for c in children {
                match generate(c, n)? {
                    Generated::Torus { map, .. } => maps.push(map),
                    Generated::Sphere(_) => unreachable!("validated"),
                }
            }
            let mut acc = maps.remove(0);
            for next in &maps {
                acc = compose(&acc, next)?;
            }
            let st = compute_geometry(&acc, DerivativeOrder::Second)?;
            if !(st.min_jacobian() > 0.0) {
                return Err(LagflowError::Generator(format!(
                    "composed map is not a diffeomorphism (min Jacobian {:e})",
                    st.min_jacobian()
                )));
            }
            Ok(Generated::Torus { map: acc, certified_defect: None })
        }
    }
}

/// `psi` and its derivatives `[psi_x, psi_y, psi_xx, psi_xy, psi_yy]`.
fn stream(modes: &[StreamMode], x: f64, y: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for m in modes {
        let (wx, wy) = (TAU * m.kx as f64, TAU * m.ky as f64);
        let (a, da, dda) = m.x.eval(wx * x);
        let (b, db, ddb) = m.y.eval(wy * y);
        out[0] += m.coeff * wx * da * b;
        out[1] += m.coeff * a * wy * db;
        out[2] += m.coeff * wx * wx * dda * b;
        out[3] += m.coeff * wx * da * wy * db;
        out[4] += m.coeff * a * wy * wy * ddb;
    }
    out
}

/// Field `X = (psi_y, -psi_x)` and its Jacobian.
fn hamiltonian_field(modes: &[StreamMode], z: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let [px, py, pxx, pxy, pyy] = stream(modes, z[0], z[1]);
    ([py, -px], [[pxy, pyy], [-pxx, -pxy]])
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn mat_inv(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    (det.abs() > 1e-300).then(|| [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

/// Integrates one node with the implicit midpoint rule, returning the end
/// point and the product of the step tangent maps.
pub(crate) fn midpoint_flow(
    modes: &[StreamMode],
    start: [f64; 2],
    substeps: usize,
) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let tau = 1.0 / substeps as f64;
    let mut z = start;
    let mut tangent = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..substeps {
        // solve mid = z + tau/2 X(mid) by Newton
        let mut mid = z;
        let mut converged = false;
        for _ in 0..MIDPOINT_MAX_ITER {
            let (x, dx) = hamiltonian_field(modes, mid);
            let r = [mid[0] - z[0] - 0.5 * tau * x[0], mid[1] - z[1] - 0.5 * tau * x[1]];
            let jac = [
                [1.0 - 0.5 * tau * dx[0][0], -0.5 * tau * dx[0][1]],
                [-0.5 * tau * dx[1][0], 1.0 - 0.5 * tau * dx[1][1]],
            ];
            let inv = mat_inv(jac).ok_or_else(|| LagflowError::Generator("singular midpoint Jacobian".into()))?;
            let delta = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
            mid = [mid[0] - delta[0], mid[1] - delta[1]];
            if delta[0].abs().max(delta[1].abs()) <= MIDPOINT_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(LagflowError::Generator(format!(
                "implicit midpoint solve did not converge at ({}, {})",
                start[0], start[1]
            )));
        }
        let (_, dx) = hamiltonian_field(modes, mid);
        let plus = [[1.0 + 0.5 * tau * dx[0][0], 0.5 * tau * dx[0][1]], [0.5 * tau * dx[1][0], 1.0 + 0.5 * tau * dx[1][1]]];
        let minus = [[1.0 - 0.5 * tau * dx[0][0], -0.5 * tau * dx[0][1]], [-0.5 * tau * dx[1][0], 1.0 - 0.5 * tau * dx[1][1]]];
        let step = mat_mul(mat_inv(minus).ok_or_else(|| LagflowError::Generator("singular tangent step".into()))?, plus);
        tangent = mat_mul(step, tangent);
        z = [2.0 * mid[0] - z[0], 2.0 * mid[1] - z[1]];
    }
    Ok((z, tangent))
}

fn hamiltonian_map(modes: &[StreamMode], substeps: usize, n: usize) -> Result<(MapGrid, f64)> {
    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let start = [i as f64 / n as f64, j as f64 / n as f64];
            let (end, tangent) = midpoint_flow(modes, start, substeps)?;
            u[i * n + j] = end[0] - start[0];
            v[i * n + j] = end[1] - start[1];
            let det = tangent[0][0] * tangent[1][1] - tangent[0][1] * tangent[1][0];
            defect = defect.max((det - 1.0).abs());
        }
    }
    Ok((MapGrid::new(n, u, v)?, defect))
}

// Keys cubic convolution weights, a = -1/2
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Bicubic periodic interpolation of a node field at `(x, y)` (torus units).
pub fn bicubic_periodic(field: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let sx = x * n as f64;
    let sy = y * n as f64;
    let (fx, fy) = (sx.floor(), sy.floor());
    let wx = cubic_weights(sx - fx);
    let wy = cubic_weights(sy - fy);
    let (ix, iy) = (fx as i64, fy as i64);
    let nn = n as i64;
    let mut acc = 0.0;
    for (a, wa) in wx.iter().enumerate() {
        let ii = (ix + a as i64 - 1).rem_euclid(nn) as usize;
        for (b, wb) in wy.iter().enumerate() {
            let jj = (iy + b as i64 - 1).rem_euclid(nn) as usize;
            acc += wa * wb * field[ii * n + jj];
        }
    }
    acc
}

/// `second o first`, resampling `second` bicubically.
pub fn compose(first: &MapGrid, second: &MapGrid) -> Result<MapGrid> {
    let n = first.n();
    if second.n() != n || !first.has_identity_linear_part() || !second.has_identity_linear_part() {
        return Err(LagflowError::Generator("compose needs equal grids without linear parts".into()));
    }
    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let [px, py] = first.image(i, j);
            let (a, b) = first.displacement(i, j);
            u[i * n + j] = a + bicubic_periodic(second.u(), n, px, py);
            v[i * n + j] = b + bicubic_periodic(second.v(), n, px, py);
        }
    }
    MapGrid::new(n, u, v)
}

/// Validity report of an initial map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationReport {
    pub jacobian_min: f64,
    pub defect_sup: f64,
    pub defect_l2: f64,
    pub min_eta: f64,
    pub is_diffeo: bool,
}

pub fn validate_map(map: &MapGrid, order: DerivativeOrder) -> Result<ValidationReport> {
    let geom = compute_geometry(map, order)?;
    let jacobian_min = geom.min_jacobian();
    let defect = geom.lagrangian_defect();
    let min_eta = geom.nodes().iter().map(|g| g.eta).fold(f64::INFINITY, f64::min);
    Ok(ValidationReport {
        jacobian_min,
        defect_sup: defect.sup,
        defect_l2: defect.l2,
        min_eta,
        is_diffeo: jacobian_min > 0.0,
    })
}

/// Twist maps are area preserving for every profile; only `eta` varies.
pub fn validate_profile(profile: &TwistProfile, order: DerivativeOrder) -> Result<ValidationReport> {
    let geom = sphere_geometry(profile, order)?;
    let min_eta = geom.nodes().iter().map(|g| g.eta).fold(f64::INFINITY, f64::min);
    Ok(ValidationReport {
        jacobian_min: 1.0,
        defect_sup: 0.0,
        defect_l2: 0.0,
        min_eta,
        is_diffeo: true,
    })
}

impl Generated {
    pub fn validate(&self, order: DerivativeOrder) -> Result<ValidationReport> {
        match self {
            Generated::Torus { map, .. } => validate_map(map, order),
            Generated::Sphere(p) => validate_profile(p, order),
        }
    }
}
