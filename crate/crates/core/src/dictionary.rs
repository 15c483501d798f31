use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A wide matrix whose columns (atoms) span the signal space.
///
/// Learned LR dictionaries keep unit-norm atoms; an HR dictionary solved in
/// closed form is stored in the same type but is not norm-constrained.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::invalid("dictionary must have at least one atom and one row"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary has non-finite entries"));
        }
        Ok(Dictionary { atoms })
    }

    /// Builds a dictionary and scales every nonzero atom to unit norm.
    pub fn normalized(mut atoms: DMatrix<f64>) -> Result<Self> {
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        Dictionary::new(atoms)
    }

    /// Signal dimension `d`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Atom count `K`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.atoms.as_slice()[j * d..(j + 1) * d]
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.atoms
    }

    pub fn atom_norms(&self) -> Vec<f64> {
        self.atoms.column_iter().map(|c| c.norm()).collect()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.atom_norms().iter().all(|n| (n - 1.0).abs() <= tol)
    }
}

/// Scales each atom of `atoms` to unit norm and multiplies the matching row
/// of `codes` by the old norm, leaving the product unchanged. Returns the
/// scale factors that were applied to the atoms. Zero atoms are left alone.
pub(crate) fn normalize_with_codes(atoms: &mut DMatrix<f64>, codes: &mut DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(atoms.ncols(), codes.nrows());
    let mut scales = vec![1.0; atoms.ncols()];
    for (j, scale) in scales.iter_mut().enumerate() {
        let n = atoms.column(j).norm();
        if n > 0.0 && n != 1.0 {
            atoms.column_mut(j).scale_mut(1.0 / n);
            codes.row_mut(j).scale_mut(n);
            *scale = 1.0 / n;
        }
    }
    scales
}
