//! Pixel-lattice graphs and their Laplacian operators.
//!
//! Vertices are indexed row-major and 0-based: `(r, c)` is vertex `r * cols + c`.
//! Boundary pixels simply have fewer neighbors; there is no wraparound.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Which lattice neighbors a pixel is joined to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    /// The 4 axis-aligned neighbors at distance 1.
    Adjacent4,
    /// The 4 axis-aligned neighbors plus the 4 diagonals.
    Adjacent8,
    /// The 4 axis-aligned pixels `skip_step` away (default step 2).
    Skip4,
    /// As [`Pattern::Skip4`] with a wider default step (3).
    Skip4Wide,
}

impl Pattern {
    pub fn default_skip_step(self) -> usize {
        match self {
            Pattern::Adjacent4 | Pattern::Adjacent8 => 1,
            Pattern::Skip4 => 2,
            Pattern::Skip4Wide => 3,
        }
    }

    pub fn is_skipping(self) -> bool {
        matches!(self, Pattern::Skip4 | Pattern::Skip4Wide)
    }

    pub fn max_degree(self) -> usize {
        match self {
            Pattern::Adjacent8 => 8,
            _ => 4,
        }
    }

    fn unit_offsets(self) -> &'static [(isize, isize)] {
        const AXIS: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const ALL: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Pattern::Adjacent8 => &ALL,
            _ => &AXIS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Every edge weighs 1.
    Binary,
    /// `exp(-d² / (2σ²))` with `d` the Euclidean pixel distance.
    GaussianDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub pattern: Pattern,
    pub skip_step: usize,
    pub weighting: Weighting,
    pub gaussian_sigma: f64,
}

impl NeighborhoodSpec {
    /// Binary weights and the pattern's default step.
    pub fn new(pattern: Pattern) -> Self {
        let skip_step = pattern.default_skip_step();
        Self {
            pattern,
            skip_step,
            weighting: Weighting::Binary,
            gaussian_sigma: skip_step as f64,
        }
    }

    pub fn with_skip_step(mut self, skip_step: usize) -> Self {
        self.skip_step = skip_step;
        self.gaussian_sigma = skip_step as f64;
        self
    }

    pub fn with_gaussian(mut self, sigma: f64) -> Self {
        self.weighting = Weighting::GaussianDistance;
        self.gaussian_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.pattern {
            Pattern::Adjacent4 | Pattern::Adjacent8 if self.skip_step != 1 => {
                return Err(Error::invalid(format!(
                    "{:?} requires skip_step = 1, got {}",
                    self.pattern, self.skip_step
                )))
            }
            Pattern::Skip4 | Pattern::Skip4Wide if self.skip_step < 2 => {
                return Err(Error::invalid(format!(
                    "{:?} requires skip_step >= 2, got {}",
                    self.pattern, self.skip_step
                )))
            }
            _ => {}
        }
        if self.weighting == Weighting::GaussianDistance
            && !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite())
        {
            return Err(Error::invalid(format!(
                "gaussian_sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }

    fn edge_weight(&self, dist: f64) -> f64 {
        match self.weighting {
            Weighting::Binary => 1.0,
            Weighting::GaussianDistance => {
                (-dist * dist / (2.0 * self.gaussian_sigma * self.gaussian_sigma)).exp()
            }
        }
    }
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self::new(Pattern::Skip4)
    }
}

#[derive(Clone, Debug)]
pub struct GridGraph {
    rows: usize,
    cols: usize,
    adjacency: CsrMatrix,
    spec: NeighborhoodSpec,
}

impl GridGraph {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_vertices(&self) -> usize {
        self.rows * self.cols
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn spec(&self) -> &NeighborhoodSpec {
        &self.spec
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v / self.cols, v % self.cols)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(v).map(|(c, _)| c)
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }

    /// Writes one `i j weight` line per undirected edge, `i < j`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n_vertices() {
            for (j, w) in self.adjacency.row(i) {
                if i < j {
                    writeln!(out, "{i} {j} {w}")?;
                }
            }
        }
        Ok(())
    }
}

pub fn build_grid_graph(rows: usize, cols: usize, spec: NeighborhoodSpec) -> Result<GridGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    spec.validate()?;
    let step = spec.skip_step;
    if spec.pattern.is_skipping() && step >= rows.min(cols) {
        return Err(Error::invalid(format!(
            "skip_step {step} must be smaller than min(rows, cols) = {}",
            rows.min(cols)
        )));
    }

    let mut triplets = Vec::with_capacity(rows * cols * spec.pattern.max_degree());
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            for &(dr, dc) in spec.pattern.unit_offsets() {
                let nr = r as isize + dr * step as isize;
                let nc = c as isize + dc * step as isize;
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                let dist = step as f64 * ((dr * dr + dc * dc) as f64).sqrt();
                triplets.push((i, j, spec.edge_weight(dist)));
            }
        }
    }
    let adjacency = CsrMatrix::from_triplets(rows * cols, &triplets)?;
    Ok(GridGraph {
        rows,
        cols,
        adjacency,
        spec,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaplacianKind {
    /// `D − W`.
    Combinatorial,
    /// `I − D^{-1/2} W D^{-1/2}`.
    Normalized,
    /// `(2/λ_max) L − I`, spectrum in `[−1, 1]`.
    ScaledShifted,
}

#[derive(Clone, Debug)]
pub struct LaplacianOperator {
    matrix: CsrMatrix,
    kind: LaplacianKind,
    lambda_max: Option<f64>,
}

impl LaplacianOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    /// The spectral bound used to build a scaled-shifted operator.
    pub fn lambda_max(&self) -> Option<f64> {
        self.lambda_max
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Wraps an arbitrary symmetric matrix. Used by tests and fault injection.
    pub fn from_parts(matrix: CsrMatrix, kind: LaplacianKind, lambda_max: Option<f64>) -> Self {
        Self {
            matrix,
            kind,
            lambda_max,
        }
    }
}

pub fn combinatorial_laplacian(graph: &GridGraph) -> LaplacianOperator {
    let degrees = graph.degrees();
    let n = graph.n_vertices();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(graph.adjacency.nnz() + n);
    for (i, &d) in degrees.iter().enumerate() {
        triplets.push((i, i, d));
        triplets.extend(graph.adjacency.row(i).map(|(j, w)| (i, j, -w)));
    }
    LaplacianOperator {
        matrix: CsrMatrix::from_triplets(n, &triplets).expect("indices in range"),
        kind: LaplacianKind::Combinatorial,
        lambda_max: None,
    }
}

/// `I − D^{-1/2} W D^{-1/2}`. Isolated vertices get a zero row and column.
pub fn normalized_laplacian(graph: &GridGraph) -> LaplacianOperator {
    let inv_sqrt: Vec<f64> = graph
        .degrees()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = graph.n_vertices();
    let mut triplets = Vec::with_capacity(graph.adjacency.nnz() + n);
    for i in 0..n {
        if inv_sqrt[i] > 0.0 {
            triplets.push((i, i, 1.0));
        }
        triplets.extend(
            graph
                .adjacency
                .row(i)
                .map(|(j, w)| (i, j, -w * inv_sqrt[i] * inv_sqrt[j])),
        );
    }
    LaplacianOperator {
        matrix: CsrMatrix::from_triplets(n, &triplets).expect("indices in range"),
        kind: LaplacianKind::Normalized,
        lambda_max: None,
    }
}

/// `(2/λ_max) L − I`.
pub fn scaled_laplacian(lap: &LaplacianOperator, lambda_max: f64) -> Result<LaplacianOperator> {
    if lap.kind != LaplacianKind::Normalized {
        return Err(Error::invalid(format!(
            "scaled_laplacian expects a normalized Laplacian, got {:?}",
            lap.kind
        )));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    let n = lap.dim();
    let factor = 2.0 / lambda_max;
    let mut triplets = Vec::with_capacity(lap.matrix.nnz() + n);
    for i in 0..n {
        triplets.push((i, i, -1.0));
        triplets.extend(lap.matrix.row(i).map(|(j, v)| (i, j, factor * v)));
    }
    Ok(LaplacianOperator {
        matrix: CsrMatrix::from_triplets(n, &triplets)?,
        kind: LaplacianKind::ScaledShifted,
        lambda_max: Some(lambda_max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LambdaMaxMode {
    /// The constant 2, an upper bound for every normalized Laplacian.
    #[default]
    Bound2,
    PowerIteration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIterationOptions {
    pub max_iterations: usize,
    /// Stop once `‖Lv − ρv‖ ≤ tolerance · ρ`.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

pub fn estimate_lambda_max(lap: &LaplacianOperator, mode: LambdaMaxMode) -> Result<f64> {
    estimate_lambda_max_with(lap, mode, &PowerIterationOptions::default())
}

pub fn estimate_lambda_max_with(
    lap: &LaplacianOperator,
    mode: LambdaMaxMode,
    opts: &PowerIterationOptions,
) -> Result<f64> {
    if lap.kind != LaplacianKind::Normalized {
        return Err(Error::invalid(format!(
            "lambda_max estimation expects a normalized Laplacian, got {:?}",
            lap.kind
        )));
    }
    match mode {
        LambdaMaxMode::Bound2 => Ok(2.0),
        LambdaMaxMode::PowerIteration => power_iteration(&lap.matrix, opts),
    }
}

/// Dominant eigenvalue of a PSD matrix. The returned value is the Rayleigh
/// quotient plus the final residual norm, capped at 2, so it sits at or just
/// above the eigenvalue it converged to.
fn power_iteration(m: &CsrMatrix, opts: &PowerIterationOptions) -> Result<f64> {
    let n = m.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    for _ in 0..opts.max_iterations {
        m.mul_vec_into(&v, &mut w);
        let rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if rho <= 0.0 && residual == 0.0 {
            return Err(Error::invalid("operator has no positive eigenvalue"));
        }
        if residual <= opts.tolerance * rho {
            return Ok((rho + residual).min(2.0));
        }
        std::mem::swap(&mut v, &mut w);
        if normalize(&mut v) == 0.0 {
            return Err(Error::invalid("operator has no positive eigenvalue"));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
    })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Breadth-first edge count from `i` to `j`; `None` when unreachable.
pub fn hop_distance(graph: &GridGraph, i: usize, j: usize) -> Result<Option<usize>> {
    let n = graph.n_vertices();
    if i >= n || j >= n {
        return Err(Error::invalid(format!(
            "vertex index out of range for {n} vertices"
        )));
    }
    Ok(hop_distances_from(graph, i)[j])
}

/// Hop distances from `source` to every vertex.
pub fn hop_distances_from(graph: &GridGraph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.n_vertices()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let next = dist[u].unwrap() + 1;
        for v in graph.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    dist
}
