//! Structured rectangular grids over a box domain, and scalar fields on them.
//!
//! Nodes are ordered row-major over the axes in declared order: the last
//! axis varies fastest. All file formats and tie-breaking rules in the
//! toolkit rely on this ordering.

use crate::error::{CophikError, Result};

/// A location in the d-dimensional domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl From<Vec<f64>> for Point {
    fn from(coords: Vec<f64>) -> Self {
        Point { coords }
    }
}

/// One axis of a structured grid: `nodes` equally spaced points on
/// `[lower, upper]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl GridAxis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn extent(&self) -> f64 {
        self.upper - self.lower
    }

    fn coord(&self, i: usize) -> f64 {
        if i == self.nodes - 1 {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }
}

/// Structured rectangular evaluation grid over a box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<GridAxis>,
    /// strides[k] = number of nodes spanned by one step along axis k.
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(CophikError::InvalidArgument("grid needs at least one axis".into()));
        }
        for ax in &axes {
            if !(ax.lower < ax.upper) || !ax.lower.is_finite() || !ax.upper.is_finite() {
                return Err(CophikError::InvalidArgument(format!(
                    "axis bounds must be finite with lower < upper, got [{}, {}]",
                    ax.lower, ax.upper
                )));
            }
            if ax.nodes < 2 {
                return Err(CophikError::InvalidArgument(format!(
                    "axis needs at least 2 nodes, got {}",
                    ax.nodes
                )));
            }
        }
        let d = axes.len();
        let mut strides = vec![1usize; d];
        for k in (0..d - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        Ok(Grid { axes, strides })
    }

    /// Uniform grid on a box, `nodes` per axis entry.
    pub fn uniform(bounds: &[(f64, f64)], nodes: &[usize]) -> Result<Self> {
        if bounds.len() != nodes.len() {
            return Err(CophikError::DimensionMismatch {
                expected: bounds.len(),
                got: nodes.len(),
            });
        }
        Grid::new(
            bounds
                .iter()
                .zip(nodes)
                .map(|(&(lower, upper), &n)| GridAxis { lower, upper, nodes: n })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn num_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    /// Per-axis node index of a flat node index.
    pub fn node_multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(&s, ax)| {
                let i = rem / s;
                rem %= s;
                debug_assert!(i < ax.nodes);
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }

    /// Coordinates of a node.
    pub fn node_point(&self, node: usize) -> Point {
        let multi = self.node_multi_index(node);
        Point::new(
            multi
                .iter()
                .zip(&self.axes)
                .map(|(&i, ax)| ax.coord(i))
                .collect(),
        )
    }

    /// Nearest grid node to `p` and the Euclidean distance to it.
    pub fn nearest_node(&self, p: &Point) -> Result<(usize, f64)> {
        if p.dim() != self.dim() {
            return Err(CophikError::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        let mut multi = Vec::with_capacity(self.dim());
        for (x, ax) in p.coords.iter().zip(&self.axes) {
            let t = ((x - ax.lower) / ax.spacing()).round();
            let i = t.clamp(0.0, (ax.nodes - 1) as f64) as usize;
            multi.push(i);
        }
        let node = self.flat_index(&multi);
        let q = self.node_point(node);
        let dist = p
            .coords
            .iter()
            .zip(&q.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok((node, dist))
    }

    /// Node index of `p` if it coincides with a grid node (within 1e-9 of
    /// the smallest axis spacing); error otherwise.
    pub fn node_index_of(&self, p: &Point) -> Result<usize> {
        let (node, dist) = self.nearest_node(p)?;
        let h = self
            .axes
            .iter()
            .map(|a| a.spacing())
            .fold(f64::INFINITY, f64::min);
        if dist <= 1e-9 * h {
            Ok(node)
        } else {
            Err(CophikError::ObservationOffGrid {
                coords: p.coords.clone(),
                distance: dist,
            })
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.coords
                .iter()
                .zip(&self.axes)
                .all(|(x, ax)| *x >= ax.lower && *x <= ax.upper)
    }

    pub fn extents(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.extent()).collect()
    }
}

/// Scalar values of a state on a grid, one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(CophikError::DimensionMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CophikError::NonFinite { context: "field values" });
        }
        Ok(Field { grid, values })
    }

    /// Evaluate `f` at every grid node.
    pub fn from_fn(grid: Grid, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let values = (0..grid.num_nodes())
            .map(|i| f(&grid.node_point(i)))
            .collect();
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Multilinear interpolation of the field at an interior point.
    /// Points within 1e-9 of a node snap to the node value, so sampling a
    /// field at its own nodes is exact.
    pub fn interpolate(&self, p: &Point) -> Result<f64> {
        if p.dim() != self.grid.dim() {
            return Err(CophikError::DimensionMismatch {
                expected: self.grid.dim(),
                got: p.dim(),
            });
        }
        let d = self.grid.dim();
        // Per axis: lower cell index and fractional offset in [0, 1].
        let mut cell = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for (x, ax) in p.coords.iter().zip(self.grid.axes()) {
            let u = (x - ax.lower) / ax.spacing();
            let u = u.clamp(0.0, (ax.nodes - 1) as f64);
            let mut i = u.floor() as usize;
            let mut t = u - i as f64;
            if t < 1e-9 {
                t = 0.0;
            } else if t > 1.0 - 1e-9 {
                i += 1;
                t = 0.0;
            }
            if i >= ax.nodes - 1 && t > 0.0 {
                i = ax.nodes - 2;
            }
            cell.push(i.min(ax.nodes - 1));
            frac.push(t);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut multi = Vec::with_capacity(d);
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    multi.push(cell[k] + 1);
                } else {
                    w *= 1.0 - frac[k];
                    multi.push(cell[k]);
                }
            }
            if w != 0.0 {
                acc += w * self.values[self.grid.flat_index(&multi)];
            }
        }
        Ok(acc)
    }

    /// Resample onto another grid by multilinear interpolation.
    pub fn resample(&self, target: &Grid) -> Result<Field> {
        let values = (0..target.num_nodes())
            .map(|i| self.interpolate(&target.node_point(i)))
            .collect::<Result<Vec<_>>>()?;
        Field::new(target.clone(), values)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Relative Frobenius error of a reconstruction against a reference,
/// ||reconstructed - reference|| / ||reference|| over all grid nodes.
pub fn relative_error(reconstructed: &Field, reference: &Field) -> Result<f64> {
    if reconstructed.grid() != reference.grid() {
        return Err(CophikError::GridMismatch("relative error of fields on different grids".into()));
    }
    let denom = reference.frobenius_norm();
    if denom == 0.0 {
        return Err(CophikError::Degenerate("reference field has zero norm".into()));
    }
    let num = reconstructed
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_2d() -> Grid {
        Grid::uniform(&[(0.0, 1.0), (0.0, 2.0)], &[3, 5]).unwrap()
    }

    #[test]
    fn row_major_ordering_last_axis_fastest() {
        let g = grid_2d();
        assert_eq!(g.num_nodes(), 15);
        // node 0 = (0,0), node 1 steps along the last axis
        assert_eq!(g.node_point(0).coords, vec![0.0, 0.0]);
        assert_eq!(g.node_point(1).coords, vec![0.0, 0.5]);
        assert_eq!(g.node_point(5).coords, vec![0.5, 0.0]);
        assert_eq!(g.node_point(14).coords, vec![1.0, 2.0]);
    }

    #[test]
    fn flat_and_multi_index_roundtrip() {
        let g = grid_2d();
        for node in 0..g.num_nodes() {
            let multi = g.node_multi_index(node);
            assert_eq!(g.flat_index(&multi), node);
        }
    }

    #[test]
    fn nearest_node_snaps_and_reports_distance() {
        let g = grid_2d();
        let (node, dist) = g.nearest_node(&Point::new(vec![0.26, 1.01])).unwrap();
        assert_eq!(g.node_point(node).coords, vec![0.5, 1.0]);
        assert_relative_eq!(dist, (0.24f64.powi(2) + 0.01f64.powi(2)).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn node_index_of_rejects_off_grid() {
        let g = grid_2d();
        assert!(g.node_index_of(&Point::new(vec![0.3, 1.0])).is_err());
        assert_eq!(g.node_index_of(&Point::new(vec![0.5, 1.0])).unwrap(), 7);
    }

    #[test]
    fn interpolation_exact_at_nodes_and_linear_inside() {
        let g = grid_2d();
        // f(x, y) = 2x + 3y is reproduced exactly by multilinear interpolation
        let f = Field::from_fn(g.clone(), |p| 2.0 * p.coords[0] + 3.0 * p.coords[1]).unwrap();
        for node in 0..g.num_nodes() {
            let p = g.node_point(node);
            assert_eq!(f.interpolate(&p).unwrap(), f.value(node));
        }
        let v = f.interpolate(&Point::new(vec![0.31, 1.17])).unwrap();
        assert_relative_eq!(v, 2.0 * 0.31 + 3.0 * 1.17, max_relative = 1e-12);
    }

    #[test]
    fn field_rejects_wrong_length_and_nonfinite() {
        let g = grid_2d();
        assert!(Field::new(g.clone(), vec![0.0; 3]).is_err());
        let mut vals = vec![0.0; 15];
        vals[4] = f64::NAN;
        assert!(Field::new(g, vals).is_err());
    }
}
