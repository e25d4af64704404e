use ndarray::Array2;

/// Which metric on cell centers the ground cost uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `((p−p')² + (q−q')²) / m²`; separable, exact optimum is a discretized W₂².
    SquaredEuclidean,
    /// `sqrt((p−p')² + (q−q')²) / m`; a true metric, so the exact optimum is W₁.
    Euclidean,
}

/// Ground cost between the `m²` cells of an `m × m` grid on `[0,1]²`.
///
/// Cells are addressed by flat index `p * m + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundCost {
    m: usize,
    kind: CostKind,
    /// one-axis squared distances `(p − p')² / m²`
    axis: Array2<f64>,
}

impl GroundCost {
    pub fn new(m: usize, kind: CostKind) -> Self {
        let mf = (m * m) as f64;
        let axis = Array2::from_shape_fn((m, m), |(a, b)| {
            let d = a.abs_diff(b) as f64;
            d * d / mf
        });
        Self { m, kind, axis }
    }

    pub fn squared_euclidean(m: usize) -> Self {
        Self::new(m, CostKind::SquaredEuclidean)
    }

    pub fn euclidean(m: usize) -> Self {
        Self::new(m, CostKind::Euclidean)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn n_cells(&self) -> usize {
        self.m * self.m
    }

    /// Cost between flat cells `i` and `j`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (i / self.m, i % self.m);
        let (pp, qq) = (j / self.m, j % self.m);
        let (dp, dq) = (p.abs_diff(pp), q.abs_diff(qq));
        let sq = (dp * dp + dq * dq) as f64 / (self.m * self.m) as f64;
        match self.kind {
            CostKind::SquaredEuclidean => sq,
            CostKind::Euclidean => sq.sqrt(),
        }
    }

    /// The full `m² × m²` cost matrix.
    pub fn dense(&self) -> Array2<f64> {
        let n = self.n_cells();
        Array2::from_shape_fn((n, n), |(i, j)| self.entry(i, j))
    }

    /// One-axis factor `A` with `cost[(p,q),(p',q')] = A[p,p'] + A[q,q']`, when separable.
    pub fn axis_factor(&self) -> Option<&Array2<f64>> {
        match self.kind {
            CostKind::SquaredEuclidean => Some(&self.axis),
            CostKind::Euclidean => None,
        }
    }
}
