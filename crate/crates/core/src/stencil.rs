//! Centered periodic finite-difference stencils on an `n x n` node grid.
//!
//! Fields are stored row-major with the x index outermost: `idx = i * n + j`,
//! node `(i, j)` sitting at `(i / n, j / n)` on the unit torus.

use serde::{Deserialize, Serialize};

use crate::error::LagflowError;

/// Accuracy order of the centered difference stencils.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DerivativeOrder {
    Second,
    Fourth,
}

impl DerivativeOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            DerivativeOrder::Second => 2,
            DerivativeOrder::Fourth => 4,
        }
    }
}

impl Default for DerivativeOrder {
    fn default() -> Self {
        DerivativeOrder::Second
    }
}

impl TryFrom<u8> for DerivativeOrder {
    type Error = LagflowError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            2 => Ok(DerivativeOrder::Second),
            4 => Ok(DerivativeOrder::Fourth),
            other => Err(LagflowError::InvalidArgument(format!(
                "derivative order must be 2 or 4, got {other}"
            ))),
        }
    }
}

impl From<DerivativeOrder> for u8 {
    fn from(o: DerivativeOrder) -> u8 {
        o.as_u8()
    }
}

/// First and second partial derivatives of one scalar field at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Partials {
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// Precomputed wrap tables for a periodic grid.
#[derive(Clone, Debug)]
pub struct PeriodicStencil {
    n: usize,
    h: f64,
    order: DerivativeOrder,
    // wrapped index of k + offset, offset in -2..=2, stored at [offset + 2]
    wrap: Vec<[usize; 5]>,
}

// order-4 first-derivative weights for offsets -2..=2 (divide by 12h)
const D1_O4: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];

impl PeriodicStencil {
    pub fn new(n: usize, order: DerivativeOrder) -> Self {
        let wrap = (0..n)
            .map(|k| {
                let mut w = [0usize; 5];
                for (slot, off) in (-2isize..=2).enumerate() {
                    w[slot] = (k as isize + off).rem_euclid(n as isize) as usize;
                }
                w
            })
            .collect();
        Self {
            n,
            h: 1.0 / n as f64,
            order,
            wrap,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> DerivativeOrder {
        self.order
    }

    #[inline]
    fn at(&self, f: &[f64], i: usize, di: isize, j: usize, dj: isize) -> f64 {
        let ii = self.wrap[i][(di + 2) as usize];
        let jj = self.wrap[j][(dj + 2) as usize];
        f[ii * self.n + jj]
    }

    /// First derivatives only.
    #[inline]
    pub fn gradient(&self, f: &[f64], i: usize, j: usize) -> [f64; 2] {
        let h = self.h;
        match self.order {
            DerivativeOrder::Second => [
                (self.at(f, i, 1, j, 0) - self.at(f, i, -1, j, 0)) / (2.0 * h),
                (self.at(f, i, 0, j, 1) - self.at(f, i, 0, j, -1)) / (2.0 * h),
            ],
            DerivativeOrder::Fourth => {
                let mut dx = 0.0;
                let mut dy = 0.0;
                for (k, w) in D1_O4.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let off = k as isize - 2;
                    dx += w * self.at(f, i, off, j, 0);
                    dy += w * self.at(f, i, 0, j, off);
                }
                [dx / (12.0 * h), dy / (12.0 * h)]
            }
        }
    }

    /// First and second derivatives at node `(i, j)`.
    #[inline]
    pub fn partials(&self, f: &[f64], i: usize, j: usize) -> Partials {
        let h = self.h;
        let c = self.at(f, i, 0, j, 0);
        match self.order {
            DerivativeOrder::Second => {
                let xp = self.at(f, i, 1, j, 0);
                let xm = self.at(f, i, -1, j, 0);
                let yp = self.at(f, i, 0, j, 1);
                let ym = self.at(f, i, 0, j, -1);
                let pp = self.at(f, i, 1, j, 1);
                let pm = self.at(f, i, 1, j, -1);
                let mp = self.at(f, i, -1, j, 1);
                let mm = self.at(f, i, -1, j, -1);
                Partials {
                    x: (xp - xm) / (2.0 * h),
                    y: (yp - ym) / (2.0 * h),
                    xx: (xp - 2.0 * c + xm) / (h * h),
                    yy: (yp - 2.0 * c + ym) / (h * h),
                    xy: (pp - pm - mp + mm) / (4.0 * h * h),
                }
            }
            DerivativeOrder::Fourth => {
                let x2p = self.at(f, i, 2, j, 0);
                let xp = self.at(f, i, 1, j, 0);
                let xm = self.at(f, i, -1, j, 0);
                let x2m = self.at(f, i, -2, j, 0);
                let y2p = self.at(f, i, 0, j, 2);
                let yp = self.at(f, i, 0, j, 1);
                let ym = self.at(f, i, 0, j, -1);
                let y2m = self.at(f, i, 0, j, -2);
                let mut xy = 0.0;
                for (a, wa) in D1_O4.iter().enumerate() {
                    if *wa == 0.0 {
                        continue;
                    }
                    for (b, wb) in D1_O4.iter().enumerate() {
                        if *wb == 0.0 {
                            continue;
                        }
                        xy += wa * wb * self.at(f, i, a as isize - 2, j, b as isize - 2);
                    }
                }
                Partials {
                    x: (x2m - 8.0 * xm + 8.0 * xp - x2p) / (12.0 * h),
                    y: (y2m - 8.0 * ym + 8.0 * yp - y2p) / (12.0 * h),
                    xx: (-x2p + 16.0 * xp - 30.0 * c + 16.0 * xm - x2m) / (12.0 * h * h),
                    yy: (-y2p + 16.0 * yp - 30.0 * c + 16.0 * ym - y2m) / (12.0 * h * h),
                    xy: xy / (144.0 * h * h),
                }
            }
        }
    }

    fn rows<'a>(&self, f: &'a [f64], i: usize) -> [&'a [f64]; 5] {
        let n = self.n;
        self.wrap[i].map(|r| &f[r * n..(r + 1) * n])
    }

    /// First derivatives along row `i`, matching [`Self::gradient`].
    pub fn row_gradients(&self, f: &[f64], i: usize, out: &mut [[f64; 2]]) {
        let r = self.rows(f, i);
        let c = r[2];
        match self.order {
            DerivativeOrder::Second => {
                let s = 0.5 / self.h;
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &self.wrap[j];
                    *o = [(r[3][j] - r[1][j]) * s, (c[w[3]] - c[w[1]]) * s];
                }
            }
            DerivativeOrder::Fourth => {
                let s = 1.0 / (12.0 * self.h);
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &self.wrap[j];
                    *o = [
                        (r[0][j] - 8.0 * r[1][j] + 8.0 * r[3][j] - r[4][j]) * s,
                        (c[w[0]] - 8.0 * c[w[1]] + 8.0 * c[w[3]] - c[w[4]]) * s,
                    ];
                }
            }
        }
    }

    /// All partials along row `i`, matching [`Self::partials`] to rounding.
    pub fn row_partials(&self, f: &[f64], i: usize, out: &mut [Partials]) {
        let r = self.rows(f, i);
        let c = r[2];
        let h = self.h;
        match self.order {
            DerivativeOrder::Second => {
                let (s1, s2, s11) = (0.5 / h, 1.0 / (h * h), 0.25 / (h * h));
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &self.wrap[j];
                    let (jm, jp) = (w[1], w[3]);
                    let (xm, xp, cc) = (r[1][j], r[3][j], c[j]);
                    let (ym, yp) = (c[jm], c[jp]);
                    *o = Partials {
                        x: (xp - xm) * s1,
                        y: (yp - ym) * s1,
                        xx: (xp - 2.0 * cc + xm) * s2,
                        yy: (yp - 2.0 * cc + ym) * s2,
                        xy: (r[3][jp] - r[3][jm] - r[1][jp] + r[1][jm]) * s11,
                    };
                }
            }
            DerivativeOrder::Fourth => {
                let (s1, s2, s11) = (1.0 / (12.0 * h), 1.0 / (12.0 * h * h), 1.0 / (144.0 * h * h));
                let d1 = |row: &[f64], w: &[usize; 5]| {
                    row[w[0]] - 8.0 * row[w[1]] + 8.0 * row[w[3]] - row[w[4]]
                };
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &self.wrap[j];
                    let cc = c[j];
                    *o = Partials {
                        x: (r[0][j] - 8.0 * r[1][j] + 8.0 * r[3][j] - r[4][j]) * s1,
                        y: d1(c, w) * s1,
                        xx: (-r[4][j] + 16.0 * r[3][j] - 30.0 * cc + 16.0 * r[1][j] - r[0][j]) * s2,
                        yy: (-c[w[4]] + 16.0 * c[w[3]] - 30.0 * cc + 16.0 * c[w[1]] - c[w[0]]) * s2,
                        xy: (d1(r[0], w) - 8.0 * d1(r[1], w) + 8.0 * d1(r[3], w) - d1(r[4], w)) * s11,
                    };
                }
            }
        }
    }

    /// Adjoint of [`Self::gradient`]: accumulates `D^T w` into `out` for the x
    /// (`axis = 0`) or y (`axis = 1`) difference operator.
    pub fn gradient_adjoint(&self, w: &[f64], axis: usize, out: &mut [f64]) {
        let n = self.n;
        let h = self.h;
        let (weights, scale): (&[f64], f64) = match self.order {
            DerivativeOrder::Second => (&[0.0, -1.0, 0.0, 1.0, 0.0], 2.0 * h),
            DerivativeOrder::Fourth => (&D1_O4, 12.0 * h),
        };
        for i in 0..n {
            for j in 0..n {
                let val = w[i * n + j] / scale;
                if val == 0.0 {
                    continue;
                }
                for (k, wk) in weights.iter().enumerate() {
                    if *wk == 0.0 {
                        continue;
                    }
                    let (ii, jj) = if axis == 0 {
                        (self.wrap[i][k], j)
                    } else {
                        (i, self.wrap[j][k])
                    };
                    out[ii * n + jj] += wk * val;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sample(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = f(i as f64 / n as f64, j as f64 / n as f64);
            }
        }
        out
    }

    #[test]
    fn derivatives_of_trig_product_converge() {
        let exact = |x: f64, y: f64| Partials {
            x: TAU * (TAU * x).cos() * (TAU * y).sin(),
            y: TAU * (TAU * x).sin() * (TAU * y).cos(),
            xx: -TAU * TAU * (TAU * x).sin() * (TAU * y).sin(),
            xy: TAU * TAU * (TAU * x).cos() * (TAU * y).cos(),
            yy: -TAU * TAU * (TAU * x).sin() * (TAU * y).sin(),
        };
        for (order, expect_ratio) in [(DerivativeOrder::Second, 4.0), (DerivativeOrder::Fourth, 16.0)] {
            let mut errs = Vec::new();
            for n in [16usize, 32] {
                let f = sample(n, |x, y| (TAU * x).sin() * (TAU * y).sin());
                let st = PeriodicStencil::new(n, order);
                let (i, j) = (n / 8, 3 * n / 16);
                let p = st.partials(&f, i, j);
                let e = exact(i as f64 / n as f64, j as f64 / n as f64);
                let err = [p.x - e.x, p.y - e.y, p.xx - e.xx, p.xy - e.xy, p.yy - e.yy]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                errs.push(err);
            }
            let ratio = errs[0] / errs[1];
            assert!((ratio / expect_ratio - 1.0).abs() < 0.1, "{order:?}: ratio {ratio}");
        }
    }

    #[test]
    fn adjoint_matches_inner_product() {
        for order in [DerivativeOrder::Second, DerivativeOrder::Fourth] {
            let n = 8;
            let st = PeriodicStencil::new(n, order);
            let a = sample(n, |x, y| (3.0 * x + 0.3).sin() * (y * 5.0).cos() + x * y);
            let b = sample(n, |x, y| (x * 2.0).cos() + (y * 7.0 + 1.0).sin());
            for axis in 0..2 {
                // <D a, b> == <a, D^T b>
                let mut lhs = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        lhs += st.gradient(&a, i, j)[axis] * b[i * n + j];
                    }
                }
                let mut dt_b = vec![0.0; n * n];
                st.gradient_adjoint(&b, axis, &mut dt_b);
                let rhs: f64 = a.iter().zip(&dt_b).map(|(x, y)| x * y).sum();
                assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn row_kernels_match_pointwise_stencils() {
        let n = 12;
        let f = sample(n, |x, y| (TAU * x).sin() * (2.0 * TAU * y).cos() + 0.3 * (TAU * (x + y)).sin());
        for order in [DerivativeOrder::Second, DerivativeOrder::Fourth] {
            let st = PeriodicStencil::new(n, order);
            let mut p = vec![Partials::default(); n];
            let mut g = vec![[0.0; 2]; n];
            for i in 0..n {
                st.row_partials(&f, i, &mut p);
                st.row_gradients(&f, i, &mut g);
                for j in 0..n {
                    let q = st.partials(&f, i, j);
                    let d = [p[j].x - q.x, p[j].y - q.y, p[j].xx - q.xx, p[j].xy - q.xy, p[j].yy - q.yy];
                    assert!(d.iter().all(|e| e.abs() < 1e-10), "{order:?} {i} {j} {d:?}");
                    assert_eq!(g[j], [p[j].x, p[j].y]);
                }
            }
        }
    }

    #[test]
    fn order_parses_from_integer() {
        assert_eq!(DerivativeOrder::try_from(4).unwrap(), DerivativeOrder::Fourth);
        assert!(DerivativeOrder::try_from(3).is_err());
    }
}
