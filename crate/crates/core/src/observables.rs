//! Scalar monitors recorded along a flow: area, eta bounds, curvature
//! integrals, distance to the diagonal, Gaussian density and the CSV
//! time-series format.

use std::io::Write;

use crate::error::{LagflowError, Result};
use crate::grid::MapGrid;
use crate::torus::GeometryField;

/// Sign of the ambient curvature constant `c` in `Ric = c g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    /// Flat torus factors, `c = 0`, Euler number 0.
    Flat,
    /// Unit round spheres, `c = 1`, Euler number 2.
    Positive,
}

impl Curvature {
    pub fn c(self) -> f64 {
        match self {
            Curvature::Flat => 0.0,
            Curvature::Positive => 1.0,
        }
    }

    pub fn euler_characteristic(self) -> i32 {
        match self {
            Curvature::Flat => 0,
            Curvature::Positive => 2,
        }
    }
}

/// Lower bound `alpha e^{ct} / sqrt(1 + alpha^2 e^{2ct})` for `eta` at time `t`,
/// where `alpha / sqrt(1 + alpha^2) = eta0_min`.
pub fn comparison_bound(t: f64, eta0_min: f64, curvature: Curvature) -> Result<f64> {
    if !(eta0_min > 0.0 && eta0_min <= 1.0) {
        return Err(LagflowError::InvalidArgument(format!(
            "initial minimum of eta must lie in (0, 1], got {eta0_min}"
        )));
    }
    if eta0_min == 1.0 {
        return Ok(1.0);
    }
    // 1 / alpha^2 = (1 - eta0^2) / eta0^2
    let inv_alpha2 = (1.0 - eta0_min) * (1.0 + eta0_min) / (eta0_min * eta0_min);
    Ok(1.0 / (1.0 + inv_alpha2 * (-2.0 * curvature.c() * t).exp()).sqrt())
}

/// `alpha = eta0 / sqrt(1 - eta0^2)`.
pub fn comparison_alpha(eta0_min: f64) -> f64 {
    eta0_min / ((1.0 - eta0_min) * (1.0 + eta0_min)).sqrt()
}

/// Largest distance from the graph of a torus map to the diagonal:
/// `max_x d(x, f(x)) / sqrt(2)` with the wrapped flat distance.
pub fn max_rho_torus(map: &MapGrid) -> f64 {
    let n = map.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = map.node_coords(i, j);
            let [fx, fy] = map.image(i, j);
            let dx = fx - x;
            let dy = fy - y;
            let dx = dx - dx.round();
            let dy = dy - dy.round();
            worst = worst.max((dx * dx + dy * dy).sqrt());
        }
    }
    worst / std::f64::consts::SQRT_2
}

/// `0.5 * int |H|^2 dmu - chi`.
pub fn willmore(int_h2: f64, curvature: Curvature) -> f64 {
    0.5 * int_h2 - curvature.euler_characteristic() as f64
}

/// One time-stamped record of every monitored scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableRow {
    pub t: f64,
    pub dt: f64,
    pub area: f64,
    pub min_eta: f64,
    pub max_eta: f64,
    pub eta_bound: f64,
    pub sup_h2: f64,
    pub int_h2: f64,
    pub sup_a2: f64,
    pub int_a2: f64,
    pub lag_defect_sup: f64,
    pub lag_defect_l2: f64,
    pub max_rho: f64,
    pub willmore: f64,
    /// Max of `|sigma|^2 / |B|^2` over nodes with `|B|^2 > 1e-14`; 0 when no
    /// node qualifies.
    pub sigma_ratio_max: f64,
    pub twist_residual_sup: f64,
}

pub const CSV_HEADER: &str = "t,dt,area,min_eta,max_eta,eta_bound,sup_H2,int_H2,sup_A2,int_A2,\
lag_defect_sup,lag_defect_l2,max_rho,willmore,sigma_ratio_max,twist_residual_sup";

impl ObservableRow {
    pub fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.dt,
            self.area,
            self.min_eta,
            self.max_eta,
            self.eta_bound,
            self.sup_h2,
            self.int_h2,
            self.sup_a2,
            self.int_a2,
            self.lag_defect_sup,
            self.lag_defect_l2,
            self.max_rho,
            self.willmore,
            self.sigma_ratio_max,
            self.twist_residual_sup,
        ]
    }

    pub fn from_values(v: [f64; 16]) -> Self {
        Self {
            t: v[0],
            dt: v[1],
            area: v[2],
            min_eta: v[3],
            max_eta: v[4],
            eta_bound: v[5],
            sup_h2: v[6],
            int_h2: v[7],
            sup_a2: v[8],
            int_a2: v[9],
            lag_defect_sup: v[10],
            lag_defect_l2: v[11],
            max_rho: v[12],
            willmore: v[13],
            sigma_ratio_max: v[14],
            twist_residual_sup: v[15],
        }
    }

    pub fn sup_h(&self) -> f64 {
        self.sup_h2.sqrt()
    }
}

/// Writes rows with 17 significant digits and no trailing whitespace.
pub fn write_csv<W: Write>(mut w: W, rows: &[ObservableRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        let line: Vec<String> = row.values().iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<ObservableRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(LagflowError::Parse { line: 1, msg: "unexpected CSV header".into() }),
    }
    let mut rows = Vec::new();
    for (k, line) in lines {
        let bad = |msg: String| LagflowError::Parse { line: k + 1, msg };
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(e.to_string()))?;
        let arr: [f64; 16] = vals
            .try_into()
            .map_err(|v: Vec<f64>| bad(format!("expected 16 columns, got {}", v.len())))?;
        rows.push(ObservableRow::from_values(arr));
    }
    Ok(rows)
}

/// Torus-specific part of a row, everything except `t`, `dt` and `eta_bound`.
pub(crate) fn torus_row(geom: &GeometryField, map: &MapGrid) -> ObservableRow {
    let mut min_eta = f64::INFINITY;
    let mut max_eta = f64::NEG_INFINITY;
    let mut sup_h2 = 0.0f64;
    let mut sup_a2 = 0.0f64;
    let mut ratio = 0.0f64;
    for g in geom.nodes() {
        min_eta = min_eta.min(g.eta);
        max_eta = max_eta.max(g.eta);
        sup_h2 = sup_h2.max(g.h_norm2);
        sup_a2 = sup_a2.max(g.a_norm2);
        if let Some(r) = g.b_tensor.sigma_ratio() {
            ratio = ratio.max(r);
        }
    }
    let int_h2 = geom.integrate(|g| g.h_norm2);
    let defect = geom.lagrangian_defect();
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
        lag_defect_sup: defect.sup,
        lag_defect_l2: defect.l2,
        max_rho: max_rho_torus(map),
        willmore: willmore(int_h2, Curvature::Flat),
        sigma_ratio_max: ratio,
        twist_residual_sup: 0.0,
    }
}

/// A point of space-time in `R^D x R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimePoint<const D: usize> {
    pub x: [f64; D],
    pub t: f64,
}

/// Parabolic rescaling about `center` by `lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleSpec<const D: usize> {
    pub center: SpaceTimePoint<D>,
    pub lambda: f64,
}

/// `(x, t) -> (lambda (x - x0), lambda^2 (t - t0))`.
pub fn parabolic_rescale<const D: usize>(
    points: &[SpaceTimePoint<D>],
    spec: &RescaleSpec<D>,
) -> Result<Vec<SpaceTimePoint<D>>> {
    let lambda = spec.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LagflowError::InvalidArgument(format!(
            "rescale factor must be positive, got {lambda}"
        )));
    }
    Ok(points
        .iter()
        .map(|p| {
            let mut x = [0.0; D];
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = lambda * (p.x[k] - spec.center.x[k]);
            }
            SpaceTimePoint { x, t: lambda * lambda * (p.t - spec.center.t) }
        })
        .collect())
}

/// Kernel terms below this factor are dropped from the lattice sum.
pub const KERNEL_CUTOFF: f64 = 1e-16;

/// Smallest `tau / h^2` at which the grid quadrature of the kernel is trusted:
/// the aliasing error of the midpoint rule is about `2 exp(-4 pi^2 tau / h^2)`.
pub const MIN_RESOLVED_TAU_OVER_H2: f64 = 0.5;

/// Whether `t0 - t = tau` is resolved by grid spacing `h`.
pub fn density_resolved(tau: f64, h: f64) -> bool {
    tau >= MIN_RESOLVED_TAU_OVER_H2 * h * h
}

/// Backward heat kernel `(4 pi tau)^{-1} exp(-|d|^2 / (4 tau))`, `tau = t0 - t`.
pub fn backward_heat_kernel(dist2: f64, tau: f64) -> f64 {
    (-dist2 / (4.0 * tau)).exp() / (4.0 * std::f64::consts::PI * tau)
}

/// `int rho_{y0,t0} dmu_t` over the graph of `map` (the surface at time `t`),
/// lifted to R^4 and summed over all lattice translates in Z^4.
pub fn gaussian_density(
    map: &MapGrid,
    geom: &GeometryField,
    t: f64,
    center: &SpaceTimePoint<4>,
) -> Result<f64> {
    let tau = center.t - t;
    if !(tau > 0.0) {
        return Err(LagflowError::InvalidArgument(format!(
            "density needs t < t0 (t = {t}, t0 = {})",
            center.t
        )));
    }
    if geom.n() != map.n() {
        return Err(LagflowError::InvalidArgument("geometry does not match map".into()));
    }
    let radius2 = -4.0 * tau * KERNEL_CUTOFF.ln();
    let n = map.n();
    let cell = geom.cell_area();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = map.lifted_point(i, j);
            let mut d = [0.0; 4];
            for k in 0..4 {
                let r = p[k] - center.x[k];
                d[k] = r - r.round();
            }
            let s = lattice_gaussian_sum(&d, radius2, tau);
            total += s * geom.node(i, j).volume_density * cell;
        }
    }
    Ok(total / (4.0 * std::f64::consts::PI * tau))
}

// sum over m in Z^4 of exp(-|d + m|^2 / 4 tau) restricted to |d + m|^2 <= radius2
fn lattice_gaussian_sum(d: &[f64; 4], radius2: f64, tau: f64) -> f64 {
    fn range(c: f64, rem: f64) -> std::ops::RangeInclusive<i64> {
        let r = rem.max(0.0).sqrt();
        ((-r - c).ceil() as i64)..=((r - c).floor() as i64)
    }
    let mut sum = 0.0;
    for m0 in range(d[0], radius2) {
        let s0 = (d[0] + m0 as f64).powi(2);
        for m1 in range(d[1], radius2 - s0) {
            let s1 = s0 + (d[1] + m1 as f64).powi(2);
            for m2 in range(d[2], radius2 - s1) {
                let s2 = s1 + (d[2] + m2 as f64).powi(2);
                for m3 in range(d[3], radius2 - s2) {
                    let s3 = s2 + (d[3] + m3 as f64).powi(2);
                    sum += (-s3 / (4.0 * tau)).exp();
                }
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::DerivativeOrder;
    use crate::torus::compute_geometry;

    #[test]
    fn comparison_bound_basics() {
        assert_eq!(comparison_bound(0.0, 0.8, Curvature::Positive).unwrap(), 0.8);
        assert!((comparison_alpha(0.8) - 4.0 / 3.0).abs() < 1e-15);
        for t in [0.0, 0.5, 3.0, 100.0] {
            assert!((comparison_bound(t, 0.37, Curvature::Flat).unwrap() - 0.37).abs() < 1e-15);
        }
        assert_eq!(comparison_bound(2.0, 1.0, Curvature::Positive).unwrap(), 1.0);
        assert!(comparison_bound(1.0, 0.0, Curvature::Positive).is_err());
        assert!(comparison_bound(1.0, 1.2, Curvature::Flat).is_err());
    }

    #[test]
    fn comparison_bound_at_unit_time() {
        // frozen from a 40-digit evaluation of (4/3)e / sqrt(1 + (16/9)e^2)
        let b = comparison_bound(1.0, 0.8, Curvature::Positive).unwrap();
        assert!((b - 0.963_980_876_124_467_7).abs() < 1e-15, "{b}");
    }

    #[test]
    fn rho_of_translation_and_shear() {
        assert_eq!(max_rho_torus(&MapGrid::identity(8).unwrap()), 0.0);
        let tr = MapGrid::from_fn(8, |_, _| (0.1, 0.0)).unwrap();
        assert!((max_rho_torus(&tr) - 0.1 / 2f64.sqrt()).abs() < 1e-15);
        let sh = MapGrid::from_fn(64, |_, y| (0.2 * (std::f64::consts::TAU * y).sin(), 0.0)).unwrap();
        assert!((max_rho_torus(&sh) - 0.2 / 2f64.sqrt()).abs() < 1e-15);
        // wrapping: a displacement of 0.9 is 0.1 away on the torus
        let wr = MapGrid::from_fn(8, |_, _| (0.9, 0.0)).unwrap();
        assert!((max_rho_torus(&wr) - 0.1 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn willmore_of_identities() {
        assert_eq!(willmore(0.0, Curvature::Flat), 0.0);
        assert_eq!(willmore(0.0, Curvature::Positive), -2.0);
    }

    #[test]
    fn rescale_identity_scaling_and_composition() {
        let pts = [
            SpaceTimePoint { x: [0.3, -1.0, 2.0, 0.5], t: 0.7 },
            SpaceTimePoint { x: [1.3, 0.25, -2.0, 4.5], t: 1.5 },
        ];
        let origin = SpaceTimePoint { x: [0.0; 4], t: 0.0 };
        let id = parabolic_rescale(&pts, &RescaleSpec { center: origin, lambda: 1.0 }).unwrap();
        assert_eq!(id, pts);

        let c = SpaceTimePoint { x: [1.0, 2.0], t: 3.0 };
        let one = [SpaceTimePoint { x: [1.5, 2.25], t: 3.125 }];
        let r = parabolic_rescale(&one, &RescaleSpec { center: c, lambda: 2.0 }).unwrap();
        assert_eq!(r[0], SpaceTimePoint { x: [1.0, 0.5], t: 0.5 });

        let a = parabolic_rescale(&pts, &RescaleSpec { center: origin, lambda: 1.5 }).unwrap();
        let ab = parabolic_rescale(&a, &RescaleSpec { center: origin, lambda: 2.5 }).unwrap();
        let direct = parabolic_rescale(&pts, &RescaleSpec { center: origin, lambda: 3.75 }).unwrap();
        for (p, q) in ab.iter().zip(&direct) {
            for k in 0..4 {
                assert!((p.x[k] - q.x[k]).abs() < 1e-14);
            }
            assert!((p.t - q.t).abs() < 1e-14);
        }
        assert!(parabolic_rescale(&pts, &RescaleSpec { center: origin, lambda: 0.0 }).is_err());
    }

    fn identity_sheet_sum(tau: f64) -> f64 {
        // parallel sheets (0, 0, p, q) of the diagonal sit at distance sqrt((p^2 + q^2) / 2)
        let mut s = 0.0;
        for p in -20i32..=20 {
            for q in -20i32..=20 {
                s += (-((p * p + q * q) as f64) / (8.0 * tau)).exp();
            }
        }
        s
    }

    #[test]
    fn flat_plane_density_is_one_at_small_scales() {
        let map = MapGrid::identity(64).unwrap();
        let geom = compute_geometry(&map, DerivativeOrder::Second).unwrap();
        let y0 = SpaceTimePoint { x: [0.3, 0.7, 0.3, 0.7], t: 1.0 };
        for tau in [0.005, 0.002] {
            let d = gaussian_density(&map, &geom, 1.0 - tau, &y0).unwrap();
            assert!((d - 1.0).abs() <= 1e-6, "tau {tau}: {d}");
        }
    }

    #[test]
    fn flat_plane_density_counts_lattice_sheets() {
        let map = MapGrid::from_fn(32, |_, _| (0.25, -0.1)).unwrap();
        let geom = compute_geometry(&map, DerivativeOrder::Second).unwrap();
        let p = map.lifted_point(3, 5);
        let y0 = SpaceTimePoint { x: p, t: 0.2 };
        for tau in [0.1, 0.05, 0.01] {
            let d = gaussian_density(&map, &geom, 0.2 - tau, &y0).unwrap();
            assert!((d - identity_sheet_sum(tau)).abs() < 1e-9, "tau {tau}: {d}");
        }
    }

    #[test]
    fn far_center_has_negligible_density() {
        let map = MapGrid::identity(32).unwrap();
        let geom = compute_geometry(&map, DerivativeOrder::Second).unwrap();
        // nearest sheets of the lifted diagonal sit at distance 1/(2 sqrt 2)
        let y0 = SpaceTimePoint { x: [0.25, 0.25, 0.25 - 0.5, 0.25], t: 1.0 };
        let d = gaussian_density(&map, &geom, 1.0 - 0.001, &y0).unwrap();
        assert!(d <= 1e-8, "{d}");
        assert!(gaussian_density(&map, &geom, 1.0, &y0).is_err());
    }

    #[test]
    fn csv_roundtrip_and_format() {
        let row = ObservableRow::from_values(std::array::from_fn(|k| k as f64 * 0.1 - 0.5));
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| !l.ends_with(' ')));
        assert!(text.starts_with("t,dt,area,min_eta"));
        assert!(text.lines().nth(1).unwrap().starts_with("-5.0000000000000000e-1,"));
        assert_eq!(read_csv(&text).unwrap(), vec![row]);
    }
}
