//! The variational proposal: a Gaussian factor `N(μ, CCᵀ)` composed with one
//! monotone transform per coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VgcError};
use crate::specfun::{norm_ln_pdf, LN_2PI};
use crate::support::Support;
use crate::transform::MarginalTransform;

/// Floor on the diagonal of the Cholesky factor.
pub const DELTA_DIAG: f64 = 1e-8;

/// Square lower-triangular matrix stored packed by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl LowerTriangular {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * (n + 1) / 2],
        }
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, s);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    /// From dense rows; entries above the diagonal must be zero.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(VgcError::Invariant(format!("row {i} has length {}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                if j > i {
                    if *v != 0.0 {
                        return Err(VgcError::Invariant(format!(
                            "entry ({i},{j}) above the diagonal is {v}"
                        )));
                    }
                } else {
                    m.set(i, j, *v);
                }
            }
        }
        Ok(m)
    }

    /// From row-major packed lower entries `C00, C10, C11, C20, ...`.
    pub fn from_packed(data: Vec<f64>) -> Result<Self> {
        let len = data.len();
        let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        if n * (n + 1) / 2 != len {
            return Err(VgcError::Invariant(format!(
                "{len} packed entries do not form a triangle"
            )));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[packed_index(i, j)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i, "({i},{j}) is above the diagonal");
        self.data[packed_index(i, j)] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[packed_index(i, 0)..=packed_index(i, i)]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Solves `C x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&x).map(|(a, b)| a * b).sum();
            x[i] = (b[i] - s) / row[i];
        }
        x
    }

    /// Solves `Cᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i];
            for (j, c) in self.row(i)[..i].iter().enumerate() {
                x[j] -= c * xi;
            }
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).ln()).sum()
    }

    /// `C Cᵀ` as dense rows.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for j in 0..=i {
                let v: f64 = self.row(i)[..=j]
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }
}

/// `μ` and the Cholesky factor `C` of `Σ = CCᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFactor {
    mu: Vec<f64>,
    c: LowerTriangular,
}

impl GaussianFactor {
    pub fn new(mu: Vec<f64>, c: LowerTriangular) -> Result<Self> {
        if mu.len() != c.dim() {
            return Err(VgcError::Invariant(format!(
                "mean has length {} but factor is {}x{}",
                mu.len(),
                c.dim(),
                c.dim()
            )));
        }
        if mu.iter().chain(c.packed()).any(|v| !v.is_finite()) {
            return Err(VgcError::Invariant("non-finite Gaussian parameter".into()));
        }
        for i in 0..c.dim() {
            let d = c.get(i, i);
            if d < DELTA_DIAG {
                return Err(VgcError::SingularFactor {
                    index: i,
                    value: d,
                    floor: DELTA_DIAG,
                });
            }
        }
        Ok(Self { mu, c })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn factor(&self) -> &LowerTriangular {
        &self.c
    }

    pub fn into_parts(self) -> (Vec<f64>, LowerTriangular) {
        (self.mu, self.c)
    }

    /// Marginal standard deviation of coordinate `j`.
    ///
    /// This is the Euclidean norm of row `j` of `C`, which equals `C_jj`
    /// only when the factor is diagonal.
    pub fn sigma(&self, j: usize) -> f64 {
        self.c.row(j).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `z̃ = μ + Cε`.
    pub fn sample(&self, eps: &[f64]) -> Vec<f64> {
        let mut z = self.c.mul_vec(eps);
        for (zi, m) in z.iter_mut().zip(&self.mu) {
            *zi += m;
        }
        z
    }

    /// `C⁻¹(z̃ - μ)`.
    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = z.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        self.c.solve(&r)
    }

    /// `ln N(z̃; μ, Σ)`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let e = self.whiten(z);
        -0.5 * self.dim() as f64 * LN_2PI - self.c.log_det() - 0.5 * e.iter().map(|v| v * v).sum::<f64>()
    }

    /// `ln N(μ + Cε; μ, Σ)` without the solve.
    pub fn log_density_at_eps(&self, eps: &[f64]) -> f64 {
        -0.5 * self.dim() as f64 * LN_2PI - self.c.log_det() - 0.5 * eps.iter().map(|v| v * v).sum::<f64>()
    }

    /// `∇ ln N(z̃; μ, Σ) = -C⁻ᵀC⁻¹(z̃ - μ)`.
    pub fn score(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_diagonal()?;
        Ok(self.score_at_eps(&self.whiten(z)))
    }

    /// `-C⁻ᵀε`.
    pub fn score_at_eps(&self, eps: &[f64]) -> Vec<f64> {
        self.c.solve_transpose(eps).into_iter().map(|v| -v).collect()
    }

    fn check_diagonal(&self) -> Result<()> {
        for i in 0..self.dim() {
            let d = self.c.get(i, i);
            if d < DELTA_DIAG {
                return Err(VgcError::SingularFactor {
                    index: i,
                    value: d,
                    floor: DELTA_DIAG,
                });
            }
        }
        Ok(())
    }

    /// `Υ = D^{-1/2} Σ D^{-1/2}`.
    pub fn correlation(&self) -> Vec<Vec<f64>> {
        let sigma = self.c.gram();
        let p = self.dim();
        let sd: Vec<f64> = (0..p).map(|i| sigma[i][i].sqrt()).collect();
        let mut out = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                out[i][j] = if i == j {
                    1.0
                } else {
                    (sigma[i][j] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
                };
            }
        }
        out
    }
}

/// Gaussian factor plus one transform per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateJson", try_from = "StateJson")]
pub struct VgcState {
    gauss: GaussianFactor,
    transforms: Vec<MarginalTransform>,
}

/// Default starting scale of the Cholesky diagonal.
pub const INIT_SCALE: f64 = 0.1;

impl VgcState {
    pub fn new(gauss: GaussianFactor, transforms: Vec<MarginalTransform>) -> Result<Self> {
        if transforms.len() != gauss.dim() {
            return Err(VgcError::Invariant(format!(
                "{} transforms for a {}-dimensional factor",
                transforms.len(),
                gauss.dim()
            )));
        }
        Ok(Self { gauss, transforms })
    }

    /// `μ = 0`, `C = 0.1 I` with the given transforms.
    pub fn initial(transforms: Vec<MarginalTransform>) -> Result<Self> {
        let p = transforms.len();
        Self::new(
            GaussianFactor::new(vec![0.0; p], LowerTriangular::scaled_identity(p, INIT_SCALE))?,
            transforms,
        )
    }

    /// Checks that each transform maps onto the matching model support.
    pub fn check_supports(&self, supports: &[Support]) -> Result<()> {
        if supports.len() != self.dim() {
            return Err(VgcError::Invariant(format!(
                "model has {} coordinates, state has {}",
                supports.len(),
                self.dim()
            )));
        }
        for (j, (t, s)) in self.transforms.iter().zip(supports).enumerate() {
            if t.support() != *s {
                return Err(VgcError::Invariant(format!(
                    "transform {j} maps onto {:?} but the model needs {s:?}",
                    t.support()
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.gauss.dim()
    }

    pub fn gauss(&self) -> &GaussianFactor {
        &self.gauss
    }

    pub fn transforms(&self) -> &[MarginalTransform] {
        &self.transforms
    }

    pub fn into_parts(self) -> (GaussianFactor, Vec<MarginalTransform>) {
        (self.gauss, self.transforms)
    }

    /// `(z̃, x)` with `z̃ = μ + Cε` and `x_j = h_j(z̃_j)`.
    pub fn push_sample(&self, eps: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.gauss.sample(eps);
        let x = z
            .iter()
            .zip(&self.transforms)
            .map(|(zj, t)| t.forward(*zj))
            .collect::<Result<Vec<_>>>()?;
        Ok((z, x))
    }

    pub fn correlation_of(&self) -> Vec<Vec<f64>> {
        self.gauss.correlation()
    }

    /// Recovered margin `f_j(x) = N(h⁻¹(x); μ_j, σ_j²) / h'(h⁻¹(x))`.
    pub fn marginal_pdf(&self, j: usize, x: f64) -> Result<f64> {
        Ok(self.marginal_ln_pdf(j, x)?.exp())
    }

    /// In-support points beyond what `h_j` reaches in double precision get
    /// `-inf`; the density there is far below `exp(-1000)`.
    pub fn marginal_ln_pdf(&self, j: usize, x: f64) -> Result<f64> {
        let t = &self.transforms[j];
        let z = match t.inverse(x) {
            Ok(z) => z,
            Err(VgcError::Range { .. }) if t.support().contains(x) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let s = self.gauss.sigma(j);
        let w = (z - self.gauss.mu[j]) / s;
        Ok(norm_ln_pdf(w) - s.ln() - t.eval(z)?.ln_deriv)
    }

    /// `ln q(x) = ln N(h⁻¹(x); μ, Σ) - Σ_j ln h_j'(h_j⁻¹(x_j))`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let mut z = Vec::with_capacity(x.len());
        let mut jac = 0.0;
        for (t, xj) in self.transforms.iter().zip(x) {
            let zj = match t.inverse(*xj) {
                Ok(z) => z,
                Err(VgcError::Range { .. }) if t.support().contains(*xj) => {
                    return Ok(f64::NEG_INFINITY)
                }
                Err(e) => return Err(e),
            };
            jac += t.eval(zj)?.ln_deriv;
            z.push(zj);
        }
        Ok(self.gauss.log_density(&z) - jac)
    }

    pub fn gaussian_score(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.gauss.score(z)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateJson {
    mu: Vec<f64>,
    #[serde(rename = "C_rowmajor_lower")]
    c_rowmajor_lower: Vec<f64>,
    transforms: Vec<MarginalTransform>,
}

impl From<VgcState> for StateJson {
    fn from(s: VgcState) -> Self {
        StateJson {
            mu: s.gauss.mu,
            c_rowmajor_lower: s.gauss.c.data,
            transforms: s.transforms,
        }
    }
}

impl TryFrom<StateJson> for VgcState {
    type Error = VgcError;

    fn try_from(j: StateJson) -> Result<Self> {
        let c = LowerTriangular::from_packed(j.c_rowmajor_lower)?;
        VgcState::new(GaussianFactor::new(j.mu, c)?, j.transforms)
    }
}
