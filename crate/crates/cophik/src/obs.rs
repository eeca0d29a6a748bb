//! Observation sets: locations plus noiseless values.

use crate::error::{CophikError, Result};
use crate::grid::{Grid, Point};

/// N observation locations and their values. Observations are noiseless;
/// any regularization applied downstream is numerical only.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    locations: Vec<Point>,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(locations: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(CophikError::InvalidArgument("observation set is empty".into()));
        }
        if locations.len() != values.len() {
            return Err(CophikError::DimensionMismatch {
                expected: locations.len(),
                got: values.len(),
            });
        }
        let d = locations[0].dim();
        for p in &locations {
            if p.dim() != d {
                return Err(CophikError::DimensionMismatch { expected: d, got: p.dim() });
            }
            if p.coords.iter().any(|c| !c.is_finite()) {
                return Err(CophikError::NonFinite { context: "observation location" });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CophikError::NonFinite { context: "observation values" });
        }
        for i in 0..locations.len() {
            for j in i + 1..locations.len() {
                if locations[i] == locations[j] {
                    return Err(CophikError::InvalidArgument(format!(
                        "duplicate observation location {:?}",
                        locations[i].coords
                    )));
                }
            }
        }
        Ok(ObservationSet { locations, values })
    }

    /// Observations sitting exactly on grid nodes.
    pub fn from_grid_nodes(grid: &Grid, nodes: &[usize], values: &[f64]) -> Result<Self> {
        ObservationSet::new(
            nodes.iter().map(|&n| grid.node_point(n)).collect(),
            values.to_vec(),
        )
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].dim()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Check every location lies inside the grid's box domain.
    pub fn validate_in_domain(&self, grid: &Grid) -> Result<()> {
        for p in &self.locations {
            if !grid.contains(p) {
                return Err(CophikError::InvalidArgument(format!(
                    "observation {:?} outside the domain box",
                    p.coords
                )));
            }
        }
        Ok(())
    }

    /// Map every location to the grid node it coincides with.
    pub fn node_indices(&self, grid: &Grid) -> Result<Vec<usize>> {
        self.locations.iter().map(|p| grid.node_index_of(p)).collect()
    }

    /// Extended set with one more observation appended.
    pub fn with_observation(&self, location: Point, value: f64) -> Result<Self> {
        let mut locations = self.locations.clone();
        let mut values = self.values.clone();
        locations.push(location);
        values.push(value);
        ObservationSet::new(locations, values)
    }
}
