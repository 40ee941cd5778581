//! Differentiable mesh generators. The provided generator is a linear
//! blendshape model `template + basis·z` fitted by PCA over a family of
//! same-topology meshes; the optimizer only depends on [`ShapeGenerator`].

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::transforms::{
    apply_similarity, similarity_jacobian, so3_exp_jacobian, SimilarityParams, DEFAULT_TAYLOR_ORDER,
};

/// Latent code plus similarity transform: the full optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeState {
    pub code: Vec<f64>,
    pub transform: SimilarityParams,
}

/// JSON form `{code, s, omega, t}` of a [`ShapeState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub code: Vec<f64>,
    pub s: f64,
    pub omega: [f64; 3],
    pub t: [f64; 3],
}

impl ShapeState {
    pub fn new(code: Vec<f64>, transform: SimilarityParams) -> Self {
        ShapeState { code, transform }
    }

    pub fn zeros(k: usize) -> Self {
        ShapeState::new(vec![0.0; k], SimilarityParams::identity())
    }

    pub fn dim(&self) -> usize {
        self.code.len() + SimilarityParams::DIM
    }

    /// Flattened `[z'; s; ω; t]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.code.clone();
        v.extend_from_slice(&self.transform.to_array());
        v
    }

    pub fn from_slice(values: &[f64], code_dim: usize) -> Result<Self> {
        if values.len() != code_dim + SimilarityParams::DIM {
            return Err(Error::DimensionMismatch {
                expected: code_dim + SimilarityParams::DIM,
                actual: values.len(),
            });
        }
        Ok(ShapeState {
            code: values[..code_dim].to_vec(),
            transform: SimilarityParams::from_slice(&values[code_dim..])?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.code.iter().all(|x| x.is_finite()) && self.transform.is_finite()
    }

    pub fn to_record(&self) -> StateRecord {
        let th = &self.transform;
        StateRecord {
            code: self.code.clone(),
            s: th.s,
            omega: [th.omega.x, th.omega.y, th.omega.z],
            t: [th.t.x, th.t.y, th.t.z],
        }
    }

    pub fn from_record(rec: &StateRecord) -> Self {
        ShapeState {
            code: rec.code.clone(),
            transform: SimilarityParams {
                s: rec.s,
                omega: Vector3::from(rec.omega),
                t: Vector3::from(rec.t),
            },
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_record())?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let rec: StateRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(ShapeState::from_record(&rec))
    }
}

/// A differentiable map from a latent code to canonical-frame vertices.
pub trait ShapeGenerator {
    fn code_dim(&self) -> usize;

    fn faces(&self) -> &[[usize; 3]];

    /// Canonical (pre-transform) vertices for `code`.
    fn decode(&self, code: &[f64]) -> Result<Vec<Vector3<f64>>>;

    /// Vector–Jacobian product: maps `∂L/∂v'` over canonical vertices to `∂L/∂z'`.
    fn decode_vjp(&self, code: &[f64], grad: &[Vector3<f64>]) -> Result<Vec<f64>>;
}

/// `T(G(z'); θ)` as a mesh with the generator's topology.
pub fn generate<G: ShapeGenerator + ?Sized>(prior: &G, state: &ShapeState) -> Result<TriangleMesh> {
    let canonical = prior.decode(&state.code)?;
    Ok(TriangleMesh {
        vertices: apply_similarity(&canonical, &state.transform),
        faces: prior.faces().to_vec(),
        colors: None,
    })
}

/// Pulls per-vertex world-space gradients back to `∂L/∂z` over `[z'; θ]`.
pub fn backpropagate<G: ShapeGenerator + ?Sized>(
    prior: &G,
    state: &ShapeState,
    vertex_grad: &[Vector3<f64>],
) -> Result<Vec<f64>> {
    let canonical = prior.decode(&state.code)?;
    if vertex_grad.len() != canonical.len() {
        return Err(Error::DimensionMismatch {
            expected: canonical.len(),
            actual: vertex_grad.len(),
        });
    }
    let th = &state.transform;
    let scale = th.scale();
    let r = th.rotation();
    let dr = so3_exp_jacobian(&th.omega, DEFAULT_TAYLOR_ORDER);
    let rt = r.transpose() * scale;

    let mut d_s = 0.0;
    let mut d_w = Vector3::zeros();
    let mut d_t = Vector3::zeros();
    let mut canon_grad = Vec::with_capacity(canonical.len());
    for (v, g) in canonical.iter().zip(vertex_grad) {
        d_s += g.dot(&(r * v)) * scale;
        for k in 0..3 {
            d_w[k] += g.dot(&(dr[k] * v)) * scale;
        }
        d_t += g;
        canon_grad.push(rt * g);
    }
    let mut out = prior.decode_vjp(&state.code, &canon_grad)?;
    out.extend_from_slice(&[d_s, d_w.x, d_w.y, d_w.z, d_t.x, d_t.y, d_t.z]);
    Ok(out)
}

/// Linear latent shape model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearShapePrior {
    pub template: TriangleMesh,
    /// `3N × K`; row `3i + d` is coordinate `d` of vertex `i`.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorRecord {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    template: Vec<f64>,
    faces: Vec<[usize; 3]>,
    /// Row-major `3N × K`.
    basis: Vec<f64>,
    singular_values: Vec<f64>,
}

fn flatten(vertices: &[Vector3<f64>]) -> DVector<f64> {
    DVector::from_iterator(vertices.len() * 3, vertices.iter().flat_map(|v| [v.x, v.y, v.z]))
}

fn unflatten(x: &DVector<f64>) -> Vec<Vector3<f64>> {
    x.as_slice()
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

impl LinearShapePrior {
    pub fn new(template: TriangleMesh, basis: DMatrix<f64>, singular_values: Vec<f64>) -> Result<Self> {
        template.validate()?;
        if basis.nrows() != 3 * template.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: 3 * template.vertices.len(),
                actual: basis.nrows(),
            });
        }
        if singular_values.len() != basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                actual: singular_values.len(),
            });
        }
        Ok(LinearShapePrior {
            template,
            basis,
            singular_values,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.template.vertices.len()
    }

    fn check_code(&self, code: &[f64]) -> Result<()> {
        if code.len() != self.basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.ncols(),
                actual: code.len(),
            });
        }
        Ok(())
    }

    /// `∂vertices/∂z` over `[z'; θ]`, shape `3N × (K + 7)`.
    pub fn generate_jacobian(&self, state: &ShapeState) -> Result<DMatrix<f64>> {
        self.check_code(&state.code)?;
        let k = self.code_dim();
        let n = self.num_vertices();
        let canonical = self.decode(&state.code)?;
        let sr = state.transform.rotation() * state.transform.scale();
        let mut j = DMatrix::zeros(3 * n, k + SimilarityParams::DIM);
        for (i, v) in canonical.iter().enumerate() {
            let block = self.basis.rows(3 * i, 3);
            j.view_mut((3 * i, 0), (3, k)).copy_from(&(sr * block));
            j.view_mut((3 * i, k), (3, 7))
                .copy_from(&similarity_jacobian(v, &state.transform));
        }
        Ok(j)
    }

    /// Least-squares code of `mesh` in this basis.
    pub fn encode(&self, mesh: &TriangleMesh) -> Result<Vec<f64>> {
        if !self.template.same_topology(mesh) {
            return Err(Error::TopologyMismatch);
        }
        let d = flatten(&mesh.vertices) - flatten(&self.template.vertices);
        Ok((self.basis.transpose() * d).as_slice().to_vec())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let (rows, cols) = self.basis.shape();
        let mut basis = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                basis.push(self.basis[(r, c)]);
            }
        }
        let rec = PriorRecord {
            k: cols,
            n: self.num_vertices(),
            template: flatten(&self.template.vertices).as_slice().to_vec(),
            faces: self.template.faces.clone(),
            basis,
            singular_values: self.singular_values.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: PriorRecord = serde_json::from_str(text)?;
        if rec.template.len() != 3 * rec.n || rec.basis.len() != 3 * rec.n * rec.k {
            return Err(Error::Parse("prior arrays do not match K and N".into()));
        }
        let template = TriangleMesh::new(unflatten(&DVector::from_vec(rec.template)), rec.faces)?;
        let basis = DMatrix::from_row_slice(3 * rec.n, rec.k, &rec.basis);
        LinearShapePrior::new(template, basis, rec.singular_values)
    }
}

impl ShapeGenerator for LinearShapePrior {
    fn code_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn faces(&self) -> &[[usize; 3]] {
        &self.template.faces
    }

    fn decode(&self, code: &[f64]) -> Result<Vec<Vector3<f64>>> {
        self.check_code(code)?;
        let offset = &self.basis * DVector::from_column_slice(code);
        Ok(self
            .template
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| v + Vector3::new(offset[3 * i], offset[3 * i + 1], offset[3 * i + 2]))
            .collect())
    }

    fn decode_vjp(&self, code: &[f64], grad: &[Vector3<f64>]) -> Result<Vec<f64>> {
        self.check_code(code)?;
        if grad.len() != self.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: self.num_vertices(),
                actual: grad.len(),
            });
        }
        Ok((self.basis.transpose() * flatten(grad)).as_slice().to_vec())
    }
}

/// Fits a `k`-dimensional PCA prior: the template is the vertex-wise mean and
/// the basis holds the top-`k` left singular vectors of the centered data.
pub fn fit_prior(meshes: &[TriangleMesh], k: usize) -> Result<LinearShapePrior> {
    if k == 0 {
        return Err(Error::InvalidConfig("latent dimension must be positive".into()));
    }
    if meshes.len() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "{} meshes for a {k}-dimensional prior",
            meshes.len()
        )));
    }
    let first = &meshes[0];
    if meshes.iter().any(|m| !first.same_topology(m)) {
        return Err(Error::TopologyMismatch);
    }
    let dim = 3 * first.vertices.len();
    if k > dim {
        return Err(Error::InsufficientData(format!("k = {k} exceeds 3N = {dim}")));
    }
    let columns: Vec<DVector<f64>> = meshes.iter().map(|m| flatten(&m.vertices)).collect();
    let mean = columns.iter().fold(DVector::zeros(dim), |acc, c| acc + c) / meshes.len() as f64;
    let centered = DMatrix::from_columns(&columns.iter().map(|c| c - &mean).collect::<Vec<_>>());

    let svd = centered.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::InsufficientData("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let order = &order[..k];

    let mut basis = DMatrix::zeros(dim, k);
    for (c, &src) in order.iter().enumerate() {
        let mut col = u.column(src).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col = -col;
        }
        basis.set_column(c, &col);
    }
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let template = TriangleMesh {
        vertices: unflatten(&mean),
        faces: first.faces.clone(),
        colors: None,
    };
    LinearShapePrior::new(template, basis, singular_values)
}
