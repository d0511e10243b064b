//! Seeded test problems with solution oracles that do not share code with the
//! solver: closed forms, dense linear algebra and active-set enumeration.

mod affine;
mod lasso;
mod skew;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{BlockDescriptor, DenseMatrix};
use crate::product_space::{DenseMap, GammaMetric, LinearMap, LinearOpFamily, Matrix, ProductPoint, Vector};
use crate::separator::{residuals, BlockTriple, Residuals};
use crate::solver::Problem;

pub use affine::{affine_from_parts, make_affine_feasibility};
pub use lasso::{first_difference, fused_from_parts, lasso_from_parts, make_fused, make_lasso};
pub use skew::{make_skew_saddle, skew_from_parts, SKEW_ORACLE_MAX_DIM};

/// Raw data of a generated instance, kept for objectives and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemData {
    /// `z ∈ {A₁z = b₁} ∩ {A₂z = b₂}`
    AffineFeasibility {
        a1: DenseMatrix,
        b1: Vec<f64>,
        a2: DenseMatrix,
        b2: Vec<f64>,
    },
    /// `min ½||Az − b||² + μ||z||₁`
    Lasso { a: DenseMatrix, b: Vec<f64>, mu: f64 },
    /// `min ½||Az − b||² + μ||Dz||₁`
    Fused { a: DenseMatrix, b: Vec<f64>, mu: f64 },
    /// `0 ∈ N_box(z) + Mz` with skew `M`.
    SkewSaddle {
        m: DenseMatrix,
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
}

impl ProblemData {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemData::AffineFeasibility { .. } => "affine",
            ProblemData::Lasso { .. } => "lasso",
            ProblemData::Fused { .. } => "fused",
            ProblemData::SkewSaddle { .. } => "skew",
        }
    }

    /// Objective value for the optimization instances.
    pub fn objective(&self, z: &Vector) -> Option<f64> {
        let fit = |a: &DenseMatrix, b: &[f64]| -> Option<f64> {
            let a = a.to_matrix().ok()?;
            Some(0.5 * (&a * z - Vector::from_column_slice(b)).norm_squared())
        };
        match self {
            ProblemData::Lasso { a, b, mu } => Some(fit(a, b)? + mu * z.lp_norm(1)),
            ProblemData::Fused { a, b, mu } => {
                let d = first_difference(z.len());
                Some(fit(a, b)? + mu * (d * z).lp_norm(1))
            }
            _ => None,
        }
    }
}

/// Ground truth for an instance whose extended-solution set is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    /// A primal solution `z*`.
    #[serde(with = "crate::serde_vec::vector")]
    pub z: Vector,
    /// Dual certificates `w₁*, …, wₙ₋₁*` paired with `z`.
    #[serde(with = "crate::serde_vec::vectors")]
    pub w: Vec<Vector>,
    /// `P_{S_e}(p⁰)`; independent of γ for every generator here, since each
    /// extended-solution set is a product or a singleton.
    pub projection: ProductPoint,
}

impl Oracle {
    pub fn point(&self) -> ProductPoint {
        ProductPoint::new(self.z.clone(), self.w.clone())
    }

    /// `d_{0,γ} = ||p⁰ − P_{S_e}(p⁰)||_γ`
    pub fn d0(&self, p0: &ProductPoint, metric: &GammaMetric) -> f64 {
        metric.distance(p0, &self.projection)
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub seed: u64,
    pub data: ProblemData,
    pub problem: Problem,
    pub p0: ProductPoint,
    pub oracle: Option<Oracle>,
}

impl ProblemInstance {
    pub fn name(&self) -> &'static str {
        self.data.name()
    }

    /// Exact graph points `(Gᵢz*, wᵢ*)` built from the oracle, with `wₙ*` implied.
    pub fn oracle_triples(&self) -> Option<Vec<BlockTriple>> {
        let o = self.oracle.as_ref()?;
        let fam = &self.problem.family;
        let n = fam.n();
        let p = o.point();
        let wn = crate::product_space::implied_dual_block(&p, fam);
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let x = fam.apply(i, &o.z).ok()?;
            let y = if i == n { wn.clone() } else { o.w[i - 1].clone() };
            out.push(BlockTriple {
                x,
                y,
                eps: 0.0,
                lambda: 1.0,
            });
        }
        Some(out)
    }

    pub fn oracle_residuals(&self) -> Option<Residuals> {
        residuals(&self.oracle_triples()?, &self.problem.family).ok()
    }

    pub fn to_file(&self) -> Result<InstanceFile> {
        let maps = self
            .problem
            .family
            .maps()
            .iter()
            .map(|g| {
                let m = g
                    .as_dense()
                    .ok_or_else(|| Error::Unsupported("only dense linear maps can be serialized".into()))?;
                Ok(MapFile {
                    matrix: DenseMatrix::from(m),
                    norm: g.norm_hint(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let blocks = self
            .problem
            .blocks
            .iter()
            .map(|b| {
                b.descriptor()
                    .ok_or_else(|| Error::Unsupported("operator has no descriptor".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InstanceFile {
            seed: self.seed,
            dim0: self.problem.family.dim0(),
            maps,
            blocks,
            p0: self.p0.clone(),
            oracle: self.oracle.clone(),
            data: self.data.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_file()?).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub matrix: DenseMatrix,
    #[serde(default)]
    pub norm: Option<f64>,
}

/// On-disk form of a [`ProblemInstance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub seed: u64,
    pub dim0: usize,
    /// `G₁, …, Gₙ₋₁`
    pub maps: Vec<MapFile>,
    pub blocks: Vec<BlockDescriptor>,
    pub p0: ProductPoint,
    #[serde(default)]
    pub oracle: Option<Oracle>,
    pub data: ProblemData,
}

impl InstanceFile {
    pub fn build(&self) -> Result<ProblemInstance> {
        let ops = self
            .maps
            .iter()
            .map(|m| {
                let matrix = m.matrix.to_matrix()?;
                let map: Arc<dyn LinearMap> = Arc::new(match m.norm {
                    Some(norm) => DenseMap::with_norm(matrix, norm),
                    None => DenseMap::new(matrix),
                });
                Ok(map)
            })
            .collect::<Result<Vec<_>>>()?;
        let family = LinearOpFamily::new(self.dim0, ops)?;
        let blocks = self.blocks.iter().map(|b| b.build()).collect::<Result<Vec<_>>>()?;
        let problem = Problem::new(family, blocks)?;
        problem.family.check_point(&self.p0)?;
        if let Some(o) = &self.oracle {
            problem.family.check_point(&o.point())?;
            problem.family.check_point(&o.projection)?;
        }
        Ok(ProblemInstance {
            seed: self.seed,
            data: self.data.clone(),
            problem,
            p0: self.p0.clone(),
            oracle: self.oracle.clone(),
        })
    }
}

pub(crate) fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub(crate) fn random_vector(dim: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
}

pub(crate) fn spectral_norm(m: &Matrix) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Orthonormal basis (as columns) of the range of `m`.
pub(crate) fn range_basis(m: &Matrix, tol: f64) -> Matrix {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cols: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol * smax.max(1.0))
        .map(|(j, _)| u.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(m.nrows(), 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Orthonormal basis (as columns) of the null space of `m`.
pub(crate) fn null_basis(m: &Matrix, tol: f64) -> Matrix {
    // Null space of m = orthogonal complement of range(mᵀ), from the full SVD of mᵀ m.
    let n = m.ncols();
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigen();
    let emax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cols: Vec<Vector> = (0..n)
        .filter(|&j| eig.eigenvalues[j] <= tol * emax.max(1.0))
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}
