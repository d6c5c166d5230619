//! Finite jump measures.
//!
//! The non-local parts of the equations integrate over jump marks `e` with
//! respect to a measure `lambda`. This crate restricts `lambda` to finite
//! sums of point masses, which keeps every integral an exact weighted sum and
//! makes the compensated drift of the simulated state available in closed
//! form.

use crate::{Error, Result};

/// One point mass: a mark in `R^l` together with a strictly positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub mark: Vec<f64>,
    pub weight: f64,
}

/// A finite measure on the mark space `R^l`, stored as an ordered list of
/// atoms. The order is part of the value: integrals are accumulated
/// left-to-right so results are bit-for-bit reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLevyMeasure {
    mark_dim: usize,
    atoms: Vec<Atom>,
}

impl FiniteLevyMeasure {
    /// Builds a measure from atoms whose marks all live in `R^mark_dim`.
    ///
    /// Fails if any weight is not strictly positive and finite, or if a mark
    /// has the wrong dimension or a non-finite coordinate. An empty atom list
    /// is valid and represents the zero measure (no jumps).
    pub fn new(mark_dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        for (idx, atom) in atoms.iter().enumerate() {
            if atom.mark.len() != mark_dim {
                return Err(Error::Invalid(format!(
                    "atom {idx} has mark dimension {}, expected {mark_dim}",
                    atom.mark.len()
                )));
            }
            if !atom.mark.iter().all(|c| c.is_finite()) {
                return Err(Error::Invalid(format!("atom {idx} has a non-finite mark")));
            }
            if !(atom.weight > 0.0 && atom.weight.is_finite()) {
                return Err(Error::Invalid(format!(
                    "atom {idx} has weight {}, expected a finite weight > 0",
                    atom.weight
                )));
            }
        }
        Ok(Self { mark_dim, atoms })
    }

    /// The zero measure on `R^mark_dim`.
    pub fn zero(mark_dim: usize) -> Self {
        Self { mark_dim, atoms: Vec::new() }
    }

    /// Dimension `l` of the mark space.
    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    /// The atoms in their fixed order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Integrates `f` against the measure: the weighted sum of `f` over the
    /// atoms, accumulated in atom order.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        for atom in &self.atoms {
            acc += atom.weight * f(&atom.mark);
        }
        acc
    }

    /// Total mass of the measure; equals `integrate(|_| 1.0)`.
    pub fn total_mass(&self) -> f64 {
        let mut acc = 0.0;
        for atom in &self.atoms {
            acc += atom.weight;
        }
        acc
    }
}
