//! Networks, origin-destination paths and the path cost model `C(f) = A f + beta`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Directed graph with one origin-destination pair and affine edge costs `alpha * x + beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub vertices: usize,
    pub edges: Vec<Edge>,
    pub origin: usize,
    pub destination: usize,
}

impl Network {
    pub fn new(vertices: usize, edges: Vec<Edge>, origin: usize, destination: usize) -> Result<Self> {
        let net = Self { vertices, edges, origin, destination };
        net.validate()?;
        Ok(net)
    }

    /// Checks vertex ids, cost signs and the absence of self-loops.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidNetwork(msg));
        if self.origin >= self.vertices || self.destination >= self.vertices {
            return bad("origin or destination out of range".into());
        }
        if self.origin == self.destination {
            return bad("origin equals destination".into());
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.tail >= self.vertices || e.head >= self.vertices {
                return bad(format!("edge {} has an endpoint out of range", k + 1));
            }
            if e.tail == e.head {
                return bad(format!("edge {} is a self-loop", k + 1));
            }
            if !(e.alpha.is_finite() && e.alpha >= 0.0) || !(e.beta.is_finite() && e.beta >= 0.0) {
                return bad(format!("edge {} needs finite nonnegative alpha and beta", k + 1));
            }
        }
        Ok(())
    }
}

/// A simple path, stored as edge indices from origin to destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub edges: Vec<usize>,
}

/// All simple origin-destination paths in lexicographic order of their edge index lists.
pub fn enumerate_paths(net: &Network, cap: usize) -> Result<Vec<Path>> {
    net.validate()?;
    let mut out_edges = vec![Vec::new(); net.vertices];
    for (k, e) in net.edges.iter().enumerate() {
        out_edges[e.tail].push(k);
    }
    let mut visited = vec![false; net.vertices];
    let mut stack = Vec::new();
    let mut paths = Vec::new();
    visited[net.origin] = true;
    dfs(net, &out_edges, net.origin, &mut visited, &mut stack, &mut paths, cap)?;
    if paths.is_empty() {
        return Err(Error::NoPath);
    }
    paths.sort();
    Ok(paths)
}

fn dfs(
    net: &Network,
    out_edges: &[Vec<usize>],
    v: usize,
    visited: &mut [bool],
    stack: &mut Vec<usize>,
    paths: &mut Vec<Path>,
    cap: usize,
) -> Result<()> {
    if v == net.destination {
        if paths.len() == cap {
            return Err(Error::PathExplosion(cap));
        }
        paths.push(Path { edges: stack.clone() });
        return Ok(());
    }
    for &k in &out_edges[v] {
        let w = net.edges[k].head;
        if visited[w] {
            continue;
        }
        visited[w] = true;
        stack.push(k);
        dfs(net, out_edges, w, visited, stack, paths, cap)?;
        stack.pop();
        visited[w] = false;
    }
    Ok(())
}

/// Reorders enumerated paths to follow `order`, which must list exactly the same paths.
pub fn order_paths(enumerated: &[Path], order: &[Vec<usize>]) -> Result<Vec<Path>> {
    let mut seen = vec![false; enumerated.len()];
    let mut out = Vec::with_capacity(order.len());
    for edges in order {
        let Some(k) = find_path(enumerated, edges) else {
            return Err(Error::InvalidNetwork(format!("listed path {edges:?} is not a simple origin-destination path")));
        };
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::InvalidNetwork(format!("path {edges:?} listed twice")));
        }
        out.push(enumerated[k].clone());
    }
    if out.len() != enumerated.len() {
        return Err(Error::InvalidNetwork(format!(
            "path list has {} entries, network has {} paths",
            out.len(),
            enumerated.len()
        )));
    }
    Ok(out)
}

/// Index of the path with the given edge sequence.
pub fn find_path(paths: &[Path], edges: &[usize]) -> Option<usize> {
    paths.iter().position(|p| p.edges == edges)
}

/// Path-space cost model. `incidence` is the edge-path matrix `B` (q x n) and
/// `slopes` the diagonal of `Q`, so that `A = Bᵀ Q B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCostModel {
    pub paths: Vec<Path>,
    pub a: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub incidence: DMatrix<f64>,
    pub slopes: DVector<f64>,
}

pub fn build_cost_model(net: &Network, paths: &[Path]) -> Result<PathCostModel> {
    let q = net.edges.len();
    let mut incidence = DMatrix::zeros(q, paths.len());
    for (p, path) in paths.iter().enumerate() {
        for &e in &path.edges {
            if e >= q {
                return Err(Error::DimensionMismatch(format!("path {} uses unknown edge {}", p + 1, e)));
            }
            incidence[(e, p)] = 1.0;
        }
    }
    let slopes = DVector::from_iterator(q, net.edges.iter().map(|e| e.alpha));
    let offsets = DVector::from_iterator(q, net.edges.iter().map(|e| e.beta));
    PathCostModel::from_incidence(paths.to_vec(), incidence, slopes, &offsets)
}

impl PathCostModel {
    /// Builds the model from an arbitrary 0/1 incidence matrix, edge slopes and edge offsets.
    pub fn from_incidence(
        paths: Vec<Path>,
        incidence: DMatrix<f64>,
        slopes: DVector<f64>,
        offsets: &DVector<f64>,
    ) -> Result<Self> {
        let (q, n) = incidence.shape();
        if slopes.len() != q || offsets.len() != q || paths.len() != n {
            return Err(Error::DimensionMismatch("incidence, slopes and offsets disagree".into()));
        }
        let a = incidence.transpose() * DMatrix::from_diagonal(&slopes) * &incidence;
        let beta = incidence.transpose() * offsets;
        Ok(Self { paths, a, beta, incidence, slopes })
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.nrows()
    }

    /// Path cost vector `A f + beta`.
    pub fn cost(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.a * f + &self.beta
    }

    /// Beckmann potential `½ fᵀ A f + betaᵀ f`.
    pub fn potential(&self, f: &DVector<f64>) -> f64 {
        0.5 * f.dot(&(&self.a * f)) + self.beta.dot(f)
    }

    /// Smallest eigenvalue of `A`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.a.is_empty() {
            return 0.0;
        }
        self.a.clone().symmetric_eigen().eigenvalues.min()
    }

    /// Edges with a positive slope; equal flow on these edges means equal costs.
    pub fn sloped_edges(&self) -> Vec<usize> {
        (0..self.n_edges()).filter(|&e| self.slopes[e] > 0.0).collect()
    }

    pub fn label(p: usize) -> String {
        format!("p{}", p + 1)
    }
}

/// Edge flows `B f` induced by path flows `f`.
pub fn edge_flow(model: &PathCostModel, f: &DVector<f64>) -> Result<DVector<f64>> {
    if f.len() != model.n_paths() {
        return Err(Error::DimensionMismatch(format!(
            "flow has length {}, model has {} paths",
            f.len(),
            model.n_paths()
        )));
    }
    Ok(&model.incidence * f)
}
