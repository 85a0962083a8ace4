//! Diagonal-norm summation-by-parts first-derivative operators and their
//! tensor-product extensions.

use crate::linalg::{DenseMatrix, SparseMatrix};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbpError {
    #[error("degree {0} is not supported (expected 1, 2 or 3)")]
    UnsupportedDegree(usize),
    #[error("degree {degree} needs at least {min} nodes, got {n}")]
    TooFewNodes { degree: usize, n: usize, min: usize },
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("operator failed self-verification: {0}")]
    Verification(String),
    #[error("axis {axis} out of range for a {dim}-dimensional operator set")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
}

/// Side of a reference-coordinate axis: α is the low end, β the high end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Alpha,
    Beta,
}

/// A face of the reference box: the set of nodes where coordinate `axis`
/// takes its `side` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    /// All 2d faces of a d-dimensional box, ordered (0,α), (0,β), (1,α), ...
    pub fn all(dim: usize) -> Vec<Face> {
        (0..dim).flat_map(|a| [Face::new(a, Side::Alpha), Face::new(a, Side::Beta)]).collect()
    }

    /// +1 on β faces, −1 on α faces.
    pub fn sign(&self) -> f64 {
        match self.side {
            Side::Alpha => -1.0,
            Side::Beta => 1.0,
        }
    }
}

impl std::fmt::Display for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self.side {
            Side::Alpha => "alpha",
            Side::Beta => "beta",
        };
        write!(f, "{s}{}", self.axis + 1)
    }
}

/// Smallest node count accepted for each degree.
pub fn min_nodes(degree: usize) -> Result<usize, SbpError> {
    match degree {
        1 => Ok(3),
        2 => Ok(9),
        3 => Ok(13),
        d => Err(SbpError::UnsupportedDegree(d)),
    }
}

struct Closure {
    /// Boundary norm weights (in units of h).
    weights: Vec<f64>,
    /// Boundary derivative rows (in units of 1/h).
    rows: Vec<Vec<f64>>,
    /// Interior central stencil, offsets −r..=r.
    interior: Vec<f64>,
}

fn closure(degree: usize) -> Result<Closure, SbpError> {
    let c = match degree {
        1 => Closure {
            weights: vec![0.5],
            rows: vec![vec![-1.0, 1.0]],
            interior: vec![-0.5, 0.0, 0.5],
        },
        2 => Closure {
            weights: vec![17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0],
            rows: vec![
                vec![-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0],
                vec![-0.5, 0.0, 0.5],
                vec![4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0],
                vec![3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
            ],
            interior: vec![1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        },
        3 => Closure {
            weights: vec![
                13649.0 / 43200.0,
                12013.0 / 8640.0,
                2711.0 / 4320.0,
                5359.0 / 4320.0,
                7877.0 / 8640.0,
                43801.0 / 43200.0,
            ],
            rows: vec![
                vec![
                    -21600.0 / 13649.0,
                    104009.0 / 54596.0,
                    30443.0 / 81894.0,
                    -33311.0 / 27298.0,
                    16863.0 / 27298.0,
                    -15025.0 / 163788.0,
                ],
                vec![
                    -104009.0 / 240260.0,
                    0.0,
                    -311.0 / 72078.0,
                    20229.0 / 24026.0,
                    -24337.0 / 48052.0,
                    36661.0 / 360390.0,
                ],
                vec![
                    -30443.0 / 162660.0,
                    311.0 / 32532.0,
                    0.0,
                    -11155.0 / 16266.0,
                    41287.0 / 32532.0,
                    -21999.0 / 54220.0,
                ],
                vec![
                    33311.0 / 107180.0,
                    -20229.0 / 21436.0,
                    485.0 / 1398.0,
                    0.0,
                    4147.0 / 21436.0,
                    25427.0 / 321540.0,
                    72.0 / 5359.0,
                ],
                vec![
                    -16863.0 / 78770.0,
                    24337.0 / 31508.0,
                    -41287.0 / 47262.0,
                    -4147.0 / 15754.0,
                    0.0,
                    342523.0 / 472620.0,
                    -1296.0 / 7877.0,
                    144.0 / 7877.0,
                ],
                vec![
                    15025.0 / 525612.0,
                    -36661.0 / 262806.0,
                    21999.0 / 87602.0,
                    -25427.0 / 262806.0,
                    -342523.0 / 525612.0,
                    0.0,
                    32400.0 / 43801.0,
                    -6480.0 / 43801.0,
                    720.0 / 43801.0,
                ],
            ],
            interior: vec![
                -1.0 / 60.0,
                3.0 / 20.0,
                -3.0 / 4.0,
                0.0,
                3.0 / 4.0,
                -3.0 / 20.0,
                1.0 / 60.0,
            ],
        },
        d => return Err(SbpError::UnsupportedDegree(d)),
    };
    Ok(c)
}

/// A degree-p diagonal-norm SBP first-derivative operator on a uniform grid.
#[derive(Debug, Clone)]
pub struct SbpOperator1d {
    degree: usize,
    nodes: Vec<f64>,
    h: f64,
    d: SparseMatrix,
    p: Vec<f64>,
}

/// Builds the classical operator (interior order 2p, boundary order p) on
/// `n` uniform nodes spanning [a, b] and verifies its defining properties.
pub fn build_sbp_1d(degree: usize, n: usize, a: f64, b: f64) -> Result<SbpOperator1d, SbpError> {
    let min = min_nodes(degree)?;
    if n < min {
        return Err(SbpError::TooFewNodes { degree, n, min });
    }
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(SbpError::InvalidInterval(a, b));
    }
    let c = closure(degree)?;
    let h = (b - a) / (n - 1) as f64;
    let nb = c.weights.len();
    let r = c.interior.len() / 2;

    let mut p = vec![h; n];
    for (i, w) in c.weights.iter().enumerate() {
        p[i] = w * h;
        p[n - 1 - i] = w * h;
    }

    let mut t = Vec::new();
    for i in 0..n {
        if i < nb {
            t.extend(c.rows[i].iter().enumerate().filter(|e| *e.1 != 0.0).map(|(j, v)| (i, j, v / h)));
        } else if i >= n - nb {
            let m = n - 1 - i;
            t.extend(
                c.rows[m].iter().enumerate().filter(|e| *e.1 != 0.0).map(|(j, v)| (i, n - 1 - j, -v / h)),
            );
        } else {
            t.extend(
                c.interior.iter().enumerate().filter(|e| *e.1 != 0.0).map(|(k, v)| (i, i + k - r, v / h)),
            );
        }
    }
    let d = SparseMatrix::from_triplets(n, n, &t).expect("stencil indices in range");
    let nodes = (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
        .collect();
    let op = SbpOperator1d { degree, nodes, h, d, p };
    op.verify()?;
    Ok(op)
}

impl SbpOperator1d {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn d(&self) -> &SparseMatrix {
        &self.d
    }

    /// Diagonal of the norm matrix P.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Q = P D.
    pub fn q(&self) -> SparseMatrix {
        self.d.scale_rows(&self.p)
    }

    /// E = diag(−1, 0, …, 0, 1).
    pub fn e(&self) -> SparseMatrix {
        let n = self.len();
        SparseMatrix::from_triplets(n, n, &[(0, 0, -1.0), (n - 1, n - 1, 1.0)]).expect("in range")
    }

    /// Boundary selector row e_α (or e_β) as a 1×N matrix.
    pub fn boundary_selector(&self, side: Side) -> SparseMatrix {
        let j = match side {
            Side::Alpha => 0,
            Side::Beta => self.len() - 1,
        };
        SparseMatrix::from_triplets(1, self.len(), &[(0, j, 1.0)]).expect("in range")
    }

    /// ‖Q + Qᵀ − E‖max.
    pub fn sbp_residual(&self) -> f64 {
        let q = self.q();
        q.add(&q.transpose()).sub(&self.e()).max_abs()
    }

    /// max over r ≤ p of ‖D x^r − r x^{r−1}‖∞ / max|x|^r, plus ‖D 1‖∞.
    pub fn accuracy_residual(&self) -> f64 {
        let x = &self.nodes;
        let ones = vec![1.0; self.len()];
        let mut worst = self.d.matvec(&ones).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for r in 1..=self.degree {
            let xr: Vec<f64> = x.iter().map(|v| v.powi(r as i32)).collect();
            let dx = self.d.matvec(&xr);
            let err = dx
                .iter()
                .zip(x)
                .map(|(d, xi)| (d - r as f64 * xi.powi(r as i32 - 1)).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err / xmax.powi(r as i32));
        }
        worst
    }

    /// ‖P D² − (E D − Dᵀ P D)‖max.
    pub fn second_derivative_residual(&self) -> f64 {
        let pd = self.q();
        let lhs = pd.matmul(&self.d);
        let rhs = self.e().matmul(&self.d).sub(&self.d.transpose().matmul(&pd));
        lhs.sub(&rhs).max_abs()
    }

    fn verify(&self) -> Result<(), SbpError> {
        let sbp = self.sbp_residual();
        if sbp > 1e-13 {
            return Err(SbpError::Verification(format!("Q + Q^T - E residual {sbp:e}")));
        }
        let acc = self.accuracy_residual();
        if acc > 1e-11 {
            return Err(SbpError::Verification(format!("accuracy residual {acc:e}")));
        }
        if self.p.iter().any(|w| *w <= 0.0) {
            return Err(SbpError::Verification("nonpositive norm weight".into()));
        }
        Ok(())
    }

    pub fn d_dense(&self) -> DenseMatrix {
        self.d.to_dense()
    }
}

/// Directional operators for one axis of a tensor-product grid.
#[derive(Debug, Clone)]
pub struct AxisOperators {
    pub d: SparseMatrix,
    pub r_alpha: SparseMatrix,
    pub r_beta: SparseMatrix,
    /// Diagonal of the perpendicular norm for faces normal to this axis.
    pub perp_norm: Vec<f64>,
}

/// Extends per-axis 1D operators to the directional operators of `axis`:
/// D_{ξ_1} = D ⊗ I ⊗ I, R_{α_1} = e_α ⊗ I ⊗ I, P̄_{⊥ξ_1} = P₂ ⊗ P₃ and cyclic
/// analogues.
pub fn extend_to_axis(ops: &[SbpOperator1d], axis: usize) -> Result<AxisOperators, SbpError> {
    let dim = ops.len();
    if !(1..=3).contains(&dim) {
        return Err(SbpError::BadDimension(dim));
    }
    if axis >= dim {
        return Err(SbpError::AxisOutOfRange { axis, dim });
    }
    let kron_with = |mid: SparseMatrix| {
        let mut m = SparseMatrix::identity(1);
        for (k, op) in ops.iter().enumerate() {
            let factor = if k == axis { mid.clone() } else { SparseMatrix::identity(op.len()) };
            m = m.kron(&factor);
        }
        m
    };
    let op = &ops[axis];
    let mut perp_norm = vec![1.0];
    for (k, o) in ops.iter().enumerate() {
        if k != axis {
            perp_norm = perp_norm.iter().flat_map(|a| o.p().iter().map(move |b| a * b)).collect();
        }
    }
    Ok(AxisOperators {
        d: kron_with(op.d().clone()),
        r_alpha: kron_with(op.boundary_selector(Side::Alpha)),
        r_beta: kron_with(op.boundary_selector(Side::Beta)),
        perp_norm,
    })
}

/// Multi-dimensional SBP operators on a d-dimensional tensor grid.
///
/// Nodes are ordered with the first axis varying slowest.
#[derive(Debug, Clone)]
pub struct TensorOperatorSet {
    axes: Vec<SbpOperator1d>,
    dirs: Vec<AxisOperators>,
    norm: Vec<f64>,
}

impl TensorOperatorSet {
    pub fn new(axes: Vec<SbpOperator1d>) -> Result<Self, SbpError> {
        let dirs = (0..axes.len()).map(|l| extend_to_axis(&axes, l)).collect::<Result<Vec<_>, _>>()?;
        let mut norm = vec![1.0];
        for op in &axes {
            norm = norm.iter().flat_map(|a| op.p().iter().map(move |b| a * b)).collect();
        }
        Ok(Self { axes, dirs, norm })
    }

    /// Same degree and node count on every axis of the unit reference box.
    pub fn uniform(dim: usize, degree: usize, n: usize) -> Result<Self, SbpError> {
        Self::on_box(degree, &vec![n; dim])
    }

    /// Operators on [0,1]^d with `counts[l]` nodes along axis l.
    pub fn on_box(degree: usize, counts: &[usize]) -> Result<Self, SbpError> {
        if !(1..=3).contains(&counts.len()) {
            return Err(SbpError::BadDimension(counts.len()));
        }
        let axes = counts.iter().map(|&n| build_sbp_1d(degree, n, 0.0, 1.0)).collect::<Result<_, _>>()?;
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norm.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.axes[0].degree()
    }

    pub fn axis(&self, l: usize) -> &SbpOperator1d {
        &self.axes[l]
    }

    /// D_{ξ_l}.
    pub fn d(&self, l: usize) -> &SparseMatrix {
        &self.dirs[l].d
    }

    /// Diagonal of the volume norm P̄.
    pub fn norm(&self) -> &[f64] {
        &self.norm
    }

    /// R_{α_l} or R_{β_l}.
    pub fn restriction(&self, face: Face) -> &SparseMatrix {
        match face.side {
            Side::Alpha => &self.dirs[face.axis].r_alpha,
            Side::Beta => &self.dirs[face.axis].r_beta,
        }
    }

    /// Diagonal of P̄_{⊥ξ_l}.
    pub fn perp_norm(&self, axis: usize) -> &[f64] {
        &self.dirs[axis].perp_norm
    }

    /// E_{ξ_l} = R_βᵀ P̄⊥ R_β − R_αᵀ P̄⊥ R_α.
    pub fn surface_matrix(&self, axis: usize) -> SparseMatrix {
        let w = self.perp_norm(axis);
        let part = |side| {
            let r = self.restriction(Face::new(axis, side));
            r.transpose().scale_cols(w).matmul(r)
        };
        part(Side::Beta).sub(&part(Side::Alpha))
    }

    /// Volume indices of the nodes on `face`, in face order.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        let r = self.restriction(face);
        (0..r.rows()).map(|i| r.row_entries(i).next().expect("selector row").0).collect()
    }

    /// Multi-index of volume node `k`.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let counts = self.counts();
        let mut idx = vec![0; counts.len()];
        for l in (0..counts.len()).rev() {
            idx[l] = k % counts[l];
            k /= counts[l];
        }
        idx
    }

    /// Reference coordinates of every node, one vector per axis.
    pub fn reference_nodes(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.len()); self.dim()];
        for k in 0..self.len() {
            for (l, i) in self.multi_index(k).into_iter().enumerate() {
                out[l].push(self.axes[l].nodes()[i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_three_nodes_matches_hand_derivation() {
        let op = build_sbp_1d(1, 3, 0.0, 1.0).unwrap();
        let h = 0.5;
        assert_eq!(op.p(), &[h / 2.0, h, h / 2.0]);
        assert_eq!(op.d().get(0, 0), -1.0 / h);
        assert_eq!(op.d().get(0, 1), 1.0 / h);
        assert_eq!(op.d().get(0, 2), 0.0);
        assert!(op.sbp_residual() < 1e-15);
    }

    #[test]
    fn rejects_small_grids_and_bad_degrees() {
        assert!(matches!(build_sbp_1d(2, 8, 0.0, 1.0), Err(SbpError::TooFewNodes { .. })));
        assert!(matches!(build_sbp_1d(3, 12, 0.0, 1.0), Err(SbpError::TooFewNodes { .. })));
        assert!(matches!(build_sbp_1d(4, 30, 0.0, 1.0), Err(SbpError::UnsupportedDegree(4))));
        assert!(build_sbp_1d(3, 13, 0.0, 1.0).is_ok());
    }

    #[test]
    fn second_derivative_identity() {
        for (p, n, tol) in [(1, 10, 1e-13), (2, 18, 1e-12), (3, 26, 1e-12)] {
            let op = build_sbp_1d(p, n, 0.0, 1.0).unwrap();
            let res = op.second_derivative_residual();
            assert!(res < tol, "p={p}: {res}");
        }
    }

    #[test]
    fn tensor_faces_and_linear_exactness() {
        let ops = TensorOperatorSet::uniform(2, 2, 9).unwrap();
        let xi = ops.reference_nodes();
        let d1 = ops.d(0).matvec(&xi[0]);
        assert!(d1.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let d1y = ops.d(0).matvec(&xi[1]);
        assert!(d1y.iter().all(|v| v.abs() < 1e-12));
        let beta = ops.face_nodes(Face::new(0, Side::Beta));
        assert!(beta.iter().all(|&k| xi[0][k] == 1.0));
        let u: Vec<f64> = (0..ops.len()).map(|k| k as f64).collect();
        let ru = ops.restriction(Face::new(0, Side::Beta)).matvec(&u);
        assert_eq!(ru, beta.iter().map(|&k| u[k]).collect::<Vec<_>>());
    }
}
