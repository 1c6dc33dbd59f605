use serde::{Deserialize, Serialize};

use super::{FieldError, OrderField, TorusGrid};
use crate::basis::{QTensor, Vec3};

/// Closed-form director fields on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DirectorSpec {
    Constant { n: [f64; 3] },
    /// `(cos qx₃, sin qx₃, 0)`.
    Twist { q: f64 },
    /// `(sin qx₃, 0, cos qx₃)`.
    SplayBend { q: f64 },
}

impl DirectorSpec {
    pub fn eval(&self, x: &Vec3) -> Vec3 {
        match self {
            DirectorSpec::Constant { n } => Vec3::new(n[0], n[1], n[2]),
            DirectorSpec::Twist { q } => {
                let (s, c) = (q * x[2]).sin_cos();
                Vec3::new(c, s, 0.0)
            }
            DirectorSpec::SplayBend { q } => {
                let (s, c) = (q * x[2]).sin_cos();
                Vec3::new(s, 0.0, c)
            }
        }
    }

    pub fn sample(&self, grid: TorusGrid) -> Result<DirectorField, FieldError> {
        let values = (0..grid.len())
            .map(|i| {
                let v = self.eval(&grid.point(i));
                let n = v.norm();
                if n < 1e-12 {
                    Err(FieldError::ZeroDirector(i))
                } else {
                    Ok(v / n)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DirectorField { grid, values })
    }
}

/// Unit vectors on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField {
    pub grid: TorusGrid,
    pub values: Vec<Vec3>,
}

impl DirectorField {
    pub fn normalized(grid: TorusGrid, raw: Vec<Vec3>) -> Result<Self, FieldError> {
        let values = raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let n = v.norm();
                if n < 1e-12 {
                    Err(FieldError::ZeroDirector(i))
                } else {
                    Ok(v / n)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DirectorField { grid, values })
    }
}

/// `Q(x) = s*(n(x)⊗n(x) − I/3)`.
pub fn director_to_field(n: &DirectorField, s_star: f64) -> OrderField {
    OrderField {
        grid: n.grid,
        values: n.values.iter().map(|v| QTensor::uniaxial(s_star, v)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::dist_to_m;

    #[test]
    fn constant_director_lies_on_manifold() {
        let g = TorusGrid::new(8).unwrap();
        let n = DirectorSpec::Constant { n: [0.0, 0.0, 2.0] }.sample(g).unwrap();
        let f = director_to_field(&n, 0.7);
        assert!(f.values.iter().all(|q| dist_to_m(q, 0.7) < 1e-14 && *q == f.values[0]));
    }

    #[test]
    fn twist_field_is_periodic_and_on_manifold() {
        let g = TorusGrid::new(16).unwrap();
        let f = director_to_field(&DirectorSpec::Twist { q: 1.0 }.sample(g).unwrap(), 0.5);
        assert!(f.values.iter().all(|q| dist_to_m(q, 0.5) < 1e-13));
        let spec = DirectorSpec::Twist { q: 1.0 };
        let a = spec.eval(&Vec3::new(0.0, 0.0, 0.3));
        let b = spec.eval(&Vec3::new(0.0, 0.0, 0.3 + std::f64::consts::TAU));
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn head_tail_symmetry() {
        let g = TorusGrid::new(8).unwrap();
        let n = DirectorSpec::SplayBend { q: 1.0 }.sample(g).unwrap();
        let m = DirectorField {
            grid: g,
            values: n.values.iter().map(|v| -v).collect(),
        };
        assert_eq!(director_to_field(&n, 0.6), director_to_field(&m, 0.6));
    }

    #[test]
    fn zero_director_rejected() {
        let g = TorusGrid::new(8).unwrap();
        assert!(matches!(
            DirectorSpec::Constant { n: [0.0; 3] }.sample(g),
            Err(FieldError::ZeroDirector(0))
        ));
    }
}
