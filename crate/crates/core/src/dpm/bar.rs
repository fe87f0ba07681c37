//! Axial bar discretized with linear two-node elements.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::scalar::Real;
use crate::system::SecondOrderSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassModel {
    Consistent,
    Lumped,
}

/// Uniform bar clamped at `x = 0`, loaded and observed at `x = L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarSpec {
    pub length: f64,
    pub area: f64,
    pub youngs_modulus: f64,
    pub density: f64,
    pub elements: usize,
    /// `(α, β)` of `R = αM + βK`.
    #[serde(default)]
    pub rayleigh: (f64, f64),
    #[serde(default = "consistent")]
    pub mass_model: MassModel,
}

fn consistent() -> MassModel {
    MassModel::Consistent
}

impl BarSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("area", self.area),
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("bar {name} must be positive, got {v}")));
            }
        }
        if self.elements == 0 {
            return Err(Error::InvalidModel("bar needs at least one element".into()));
        }
        let (a, b) = self.rayleigh;
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidModel(format!("Rayleigh coefficients must be non-negative, got ({a}, {b})")));
        }
        Ok(())
    }

    /// `ρ·A·L`.
    pub fn total_mass(&self) -> f64 {
        self.density * self.area * self.length
    }

    /// Mass remaining after the clamped node is eliminated.
    pub fn clamped_mass(&self) -> f64 {
        let removed = match self.mass_model {
            MassModel::Consistent => 2.0 / 3.0,
            MassModel::Lumped => 0.5,
        };
        self.total_mass() * (1.0 - removed / self.elements as f64)
    }

    /// `(π/2)·√(E/ρ)/L`, first natural frequency of the continuous bar.
    pub fn exact_first_frequency(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 * (self.youngs_modulus / self.density).sqrt() / self.length
    }
}

/// Mass and stiffness of the unconstrained bar (`elements + 1` nodes).
pub fn bar_free_matrices<T: Real>(spec: &BarSpec) -> Result<(SparseMatrix<T>, SparseMatrix<T>)> {
    spec.validate()?;
    let ne = spec.elements;
    let le = spec.length / ne as f64;
    let ke = T::lit(spec.youngs_modulus * spec.area / le);
    let me = spec.density * spec.area * le;
    let (m_diag, m_off) = match spec.mass_model {
        MassModel::Consistent => (T::lit(me / 3.0), T::lit(me / 6.0)),
        MassModel::Lumped => (T::lit(me / 2.0), T::zero()),
    };
    let mut mt = Vec::with_capacity(4 * ne);
    let mut kt = Vec::with_capacity(4 * ne);
    for e in 0..ne {
        let (i, j) = (e, e + 1);
        kt.extend([(i, i, ke), (j, j, ke), (i, j, -ke), (j, i, -ke)]);
        mt.extend([(i, i, m_diag), (j, j, m_diag)]);
        if m_off != T::zero() {
            mt.extend([(i, j, m_off), (j, i, m_off)]);
        }
    }
    Ok((
        SparseMatrix::from_triplets(ne + 1, ne + 1, &mt)?,
        SparseMatrix::from_triplets(ne + 1, ne + 1, &kt)?,
    ))
}

/// Clamped bar with Rayleigh damping, unit end force input and end
/// displacement output.
pub fn assemble_bar_fem<T: Real>(spec: &BarSpec) -> Result<SecondOrderSystem<T>> {
    let (m, k) = bar_free_matrices::<T>(spec)?;
    let (m, k) = (m.eliminate(0), k.eliminate(0));
    let n = spec.elements;
    let (alpha, beta) = spec.rayleigh;
    let r = m.lin_comb(T::lit(alpha), &k, T::lit(beta))?;
    let mut f = DMatrix::zeros(n, 1);
    f[(n - 1, 0)] = T::one();
    let cout = super::build_boi_selector::<T>(n, &[n - 1], &[1.0])?;
    SecondOrderSystem::new(m, k, r, f, cout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(elements: usize, mass_model: MassModel) -> BarSpec {
        BarSpec {
            length: 1.0,
            area: 1.0,
            youngs_modulus: 1.0,
            density: 1.0,
            elements,
            rayleigh: (0.0, 0.0),
            mass_model,
        }
    }

    #[test]
    fn single_lumped_element() {
        let sys = assemble_bar_fem::<f64>(&unit(1, MassModel::Lumped)).unwrap();
        assert_eq!(sys.mass().to_dense()[(0, 0)], 0.5);
        assert_eq!(sys.stiffness().to_dense()[(0, 0)], 1.0);
        assert_eq!(super::super::dpm_total_mass(&sys), 0.5);
    }

    #[test]
    fn two_consistent_elements() {
        let spec = BarSpec {
            length: 2.0,
            ..unit(2, MassModel::Consistent)
        };
        let sys = assemble_bar_fem::<f64>(&spec).unwrap();
        assert_eq!(sys.stiffness().to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn zero_rayleigh_gives_zero_damping() {
        let sys = assemble_bar_fem::<f64>(&unit(5, MassModel::Consistent)).unwrap();
        assert!(sys.damping().to_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn free_consistent_mass_sums_to_rho_a_l() {
        for ne in [1, 3, 17] {
            let spec = BarSpec {
                density: 5.0,
                ..unit(ne, MassModel::Consistent)
            };
            let (m, _) = bar_free_matrices::<f64>(&spec).unwrap();
            assert!((m.sum() - 5.0).abs() < 1e-13);
        }
    }

    #[test]
    fn clamped_mass_formula() {
        for mm in [MassModel::Consistent, MassModel::Lumped] {
            let spec = BarSpec {
                density: 3.0,
                ..unit(7, mm)
            };
            let sys = assemble_bar_fem::<f64>(&spec).unwrap();
            assert!((super::super::dpm_total_mass(&sys) - spec.clamped_mass()).abs() < 1e-13);
        }
    }
}
