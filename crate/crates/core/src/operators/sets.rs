use crate::error::{check_dim, Error, Result};
use crate::product_space::Vector;

use super::SetDescriptor;

/// Closed convex set with a cheap projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectableSet {
    Whole {
        dim: usize,
    },
    /// Infinite bounds are allowed.
    Box {
        lower: Vector,
        upper: Vector,
    },
}

impl ProjectableSet {
    pub fn new_box(lower: Vector, upper: Vector) -> Result<Self> {
        validate_bounds(&lower, &upper)?;
        Ok(ProjectableSet::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            ProjectableSet::Whole { dim } => *dim,
            ProjectableSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn project(&self, x: &Vector) -> Vector {
        match self {
            ProjectableSet::Whole { .. } => x.clone(),
            ProjectableSet::Box { lower, upper } => clamp(x, lower, upper),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        match self {
            ProjectableSet::Whole { dim } => x.len() == *dim,
            ProjectableSet::Box { lower, upper } => {
                x.len() == lower.len()
                    && x.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
            }
        }
    }

    pub fn descriptor(&self) -> SetDescriptor {
        match self {
            ProjectableSet::Whole { dim } => SetDescriptor::Whole { dim: *dim },
            ProjectableSet::Box { lower, upper } => SetDescriptor::Box {
                lower: encode_bounds(lower),
                upper: encode_bounds(upper),
            },
        }
    }
}

pub(crate) fn validate_bounds(lower: &Vector, upper: &Vector) -> Result<()> {
    check_dim("box bounds", lower.len(), upper.len())?;
    for (i, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!(
                "box coordinate {i} has empty range [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

pub(crate) fn clamp(x: &Vector, lower: &Vector, upper: &Vector) -> Vector {
    Vector::from_fn(x.len(), |i, _| x[i].max(lower[i]).min(upper[i]))
}

// JSON has no infinities, so unbounded sides are stored as null.
pub(crate) fn encode_bounds(v: &Vector) -> Vec<Option<f64>> {
    v.iter().map(|&x| if x.is_finite() { Some(x) } else { None }).collect()
}

pub(crate) fn decode_bounds(v: &[Option<f64>], missing: f64) -> Vector {
    Vector::from_iterator(v.len(), v.iter().map(|x| x.unwrap_or(missing)))
}
