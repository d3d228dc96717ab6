//! The three-tensor `B` and one-form `sigma` attached to a Lagrangian surface,
//! and the algebraic identities relating them to the second fundamental form.
//!
//! Components are taken in an orthonormal tangent frame `{e1, e2}` with the
//! normal frame `{J'e1, J'e2}`. The first index of `B` is the one paired with
//! `J'`: `B[k][i][j] = -<A(e_i, e_j), J'e_k>`, so the normal components of
//! the second fundamental form are `h3_ij = -B[0][i][j]`, `h4_ij = -B[1][i][j]`.

/// Below this `|B|^2` the ratio `|sigma|^2 / |B|^2` is reported as undefined.
pub const RATIO_FLOOR: f64 = 1e-14;

/// Largest possible value of `|sigma|^2 / |B|^2` for a symmetric `B`.
pub const SIGMA_RATIO_BOUND: f64 = 4.0 / 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BTensor(pub [[[f64; 2]; 2]; 2]);

impl BTensor {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Fully symmetric tensor from its four independent components.
    pub fn symmetric(b111: f64, b112: f64, b122: f64, b222: f64) -> Self {
        Self([[[b111, b112], [b112, b122]], [[b112, b122], [b122, b222]]])
    }

    /// Builds `B` from the normal components `h3`, `h4` of the second
    /// fundamental form.
    pub fn from_second_fundamental_form(h3: [[f64; 2]; 2], h4: [[f64; 2]; 2]) -> Self {
        let mut b = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                b[0][i][j] = -h3[i][j];
                b[1][i][j] = -h4[i][j];
            }
        }
        Self(b)
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.0[k][i][j]
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().flatten().flatten().map(|x| x * x).sum()
    }

    /// `h3_ij = -B_1ij` and `h4_ij = -B_2ij`.
    pub fn second_fundamental_form(&self) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
        let mut h3 = [[0.0; 2]; 2];
        let mut h4 = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h3[i][j] = -self.0[0][i][j];
                h4[i][j] = -self.0[1][i][j];
            }
        }
        (h3, h4)
    }

    /// `sigma_k = -sum_i B_kii`, the one-form of the trace `H = sum_i A(e_i, e_i)`.
    pub fn trace_sigma(&self) -> [f64; 2] {
        [
            -(self.0[0][0][0] + self.0[0][1][1]),
            -(self.0[1][0][0] + self.0[1][1][1]),
        ]
    }

    /// Fully symmetric part: the average over permutations of `(k, i, j)`.
    pub fn symmetrized(&self) -> Self {
        let b = &self.0;
        let b112 = (b[0][0][1] + b[0][1][0] + b[1][0][0]) / 3.0;
        let b122 = (b[0][1][1] + b[1][0][1] + b[1][1][0]) / 3.0;
        Self::symmetric(b[0][0][0], b112, b122, b[1][1][1])
    }

    /// `|sigma|^2 / |B|^2` of the symmetric part, with `sigma` its trace form;
    /// `None` where `|B|^2 <= RATIO_FLOOR`.
    pub fn sigma_ratio(&self) -> Option<f64> {
        let s = self.symmetrized();
        let b2 = s.norm2();
        let [s1, s2] = s.trace_sigma();
        (b2 > RATIO_FLOOR).then(|| (s1 * s1 + s2 * s2) / b2)
    }

    /// Largest deviation from full symmetry, `max |B_kij - B_ikj|`.
    /// Symmetry in the last two indices holds by construction.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max((self.0[k][i][j] - self.0[i][k][j]).abs());
                    worst = worst.max((self.0[k][i][j] - self.0[k][j][i]).abs());
                }
            }
        }
        worst
    }
}

/// Both sides of `2|B|^2 - |sigma|^2 = sum_k (h3_1k - h4_2k)^2 + (h3_2k + h4_1k)^2`
/// and the ratio bounded by 4/3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BIdentity {
    pub lhs: f64,
    pub rhs: f64,
    /// `|sigma|^2 / |B|^2`, `None` where `|B|^2 <= RATIO_FLOOR`.
    pub ratio: Option<f64>,
    /// Set when `B` is not symmetric within `tol`; the identity assumes symmetry.
    pub asymmetric: bool,
}

pub fn b_identities(b: &BTensor, sigma: [f64; 2], tol: f64) -> BIdentity {
    let b2 = b.norm2();
    let s2 = sigma[0] * sigma[0] + sigma[1] * sigma[1];
    let (h3, h4) = b.second_fundamental_form();
    let mut rhs = 0.0;
    for k in 0..2 {
        let p = h3[0][k] - h4[1][k];
        let q = h3[1][k] + h4[0][k];
        rhs += p * p + q * q;
    }
    BIdentity {
        lhs: 2.0 * b2 - s2,
        rhs,
        ratio: (b2 > RATIO_FLOOR).then(|| s2 / b2),
        asymmetric: b.symmetry_defect() > tol,
    }
}
