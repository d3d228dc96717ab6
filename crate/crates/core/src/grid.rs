//! Periodic displacement grids representing maps of the unit torus.

use std::io::{BufRead, Write};

use crate::error::{LagflowError, Result};

pub(crate) const IDENTITY_LINEAR: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// A map of the unit torus sampled on an `n x n` node grid.
///
/// The represented map is `f(p) = L p + (u(p), v(p))` where `u`, `v` are
/// periodic displacement fields and `L` is a constant linear part. For maps
/// of the torus homotopic to the identity `L` is the identity; other values
/// are only meaningful locally (affine test surfaces on a lattice patch).
#[derive(Clone, Debug, PartialEq)]
pub struct MapGrid {
    n: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    linear: [[f64; 2]; 2],
}

impl MapGrid {
    pub const MIN_RESOLUTION: usize = 8;

    pub fn new(n: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::with_linear(n, u, v, IDENTITY_LINEAR)
    }

    pub fn with_linear(n: usize, u: Vec<f64>, v: Vec<f64>, linear: [[f64; 2]; 2]) -> Result<Self> {
        if n < Self::MIN_RESOLUTION {
            return Err(LagflowError::InvalidArgument(format!(
                "grid resolution must be at least {}, got {n}",
                Self::MIN_RESOLUTION
            )));
        }
        if u.len() != n * n || v.len() != n * n {
            return Err(LagflowError::InvalidArgument(format!(
                "displacement fields must hold {} entries",
                n * n
            )));
        }
        if let Some(k) = u.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(LagflowError::NonFinite(format!("displacement entry {k}")));
        }
        if linear.iter().flatten().any(|x| !x.is_finite()) {
            return Err(LagflowError::NonFinite("linear part".into()));
        }
        Ok(Self { n, u, v, linear })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n], vec![0.0; n * n])
    }

    /// Samples `(u, v) = disp(x, y)` at the nodes.
    pub fn from_fn(n: usize, disp: impl Fn(f64, f64) -> (f64, f64)) -> Result<Self> {
        let mut u = vec![0.0; n * n];
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = disp(i as f64 / n as f64, j as f64 / n as f64);
                u[i * n + j] = a;
                v[i * n + j] = b;
            }
        }
        Self::new(n, u, v)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn linear(&self) -> [[f64; 2]; 2] {
        self.linear
    }

    pub fn has_identity_linear_part(&self) -> bool {
        self.linear == IDENTITY_LINEAR
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn node_coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 / self.n as f64, j as f64 / self.n as f64)
    }

    pub fn displacement(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.index(i, j);
        (self.u[k], self.v[k])
    }

    /// Image of node `(i, j)` in the universal cover, unreduced.
    pub fn image(&self, i: usize, j: usize) -> [f64; 2] {
        let (x, y) = self.node_coords(i, j);
        let (a, b) = self.displacement(i, j);
        let l = self.linear;
        [l[0][0] * x + l[0][1] * y + a, l[1][0] * x + l[1][1] * y + b]
    }

    /// Point of the graph surface `(x, y, f(x, y))` in the covering space R^4.
    pub fn lifted_point(&self, i: usize, j: usize) -> [f64; 4] {
        let (x, y) = self.node_coords(i, j);
        let [f, g] = self.image(i, j);
        [x, y, f, g]
    }

    pub(crate) fn replace_fields(&self, u: Vec<f64>, v: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), self.n * self.n);
        Self {
            n: self.n,
            u,
            v,
            linear: self.linear,
        }
    }

    /// Writes the text snapshot: header line, then `i j u v` rows.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# lagflow-map n={}", self.n)?;
        if !self.has_identity_linear_part() {
            let l = self.linear;
            writeln!(
                w,
                "# linear {:.16e} {:.16e} {:.16e} {:.16e}",
                l[0][0], l[0][1], l[1][0], l[1][1]
            )?;
        }
        for i in 0..self.n {
            for j in 0..self.n {
                let k = self.index(i, j);
                writeln!(w, "{} {} {:.16e} {:.16e}", i, j, self.u[k], self.v[k])?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(LagflowError::Parse { line: 1, msg: "empty snapshot".into() })?;
        let header = header?;
        let n: usize = header
            .strip_prefix("# lagflow-map n=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or(LagflowError::Parse {
                line: 1,
                msg: format!("bad header {header:?}"),
            })?;
        let mut linear = IDENTITY_LINEAR;
        let mut u = vec![f64::NAN; n * n];
        let mut v = vec![f64::NAN; n * n];
        let mut seen = 0usize;
        for (lineno, line) in lines {
            let line = line?;
            let lineno = lineno + 1;
            let bad = |msg: &str| LagflowError::Parse { line: lineno, msg: msg.to_string() };
            if let Some(rest) = line.strip_prefix("# linear") {
                let vals: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(&e.to_string()))?;
                if vals.len() != 4 {
                    return Err(bad("linear line needs 4 values"));
                }
                linear = [[vals[0], vals[1]], [vals[2], vals[3]]];
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || it.next().ok_or_else(|| bad("expected `i j u v`"));
            let i: usize = next()?.parse().map_err(|_| bad("bad i"))?;
            let j: usize = next()?.parse().map_err(|_| bad("bad j"))?;
            let a: f64 = next()?.parse().map_err(|_| bad("bad u"))?;
            let b: f64 = next()?.parse().map_err(|_| bad("bad v"))?;
            if i >= n || j >= n {
                return Err(bad("node index out of range"));
            }
            u[i * n + j] = a;
            v[i * n + j] = b;
            seen += 1;
        }
        if seen != n * n {
            return Err(LagflowError::Parse {
                line: 0,
                msg: format!("expected {} rows, found {seen}", n * n),
            });
        }
        Self::with_linear(n, u, v, linear)
    }
}
