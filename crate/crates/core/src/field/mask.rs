use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{FieldError, TorusGrid};
use crate::basis::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    Ball { center: [f64; 3], radius: f64 },
    Box { lo: [f64; 3], hi: [f64; 3] },
}

impl Geometry {
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            Geometry::Ball { center, radius } => (x - Vec3::from(*center)).norm() < *radius,
            Geometry::Box { lo, hi } => (0..3).all(|a| x[a] > lo[a] && x[a] < hi[a]),
        }
    }

    /// Distance from the domain to the boundary of the cube `[0, 2π]³`.
    pub fn margin(&self) -> f64 {
        match self {
            Geometry::Ball { center, radius } => center
                .iter()
                .map(|c| (c - radius).min(TAU - c - radius))
                .fold(f64::INFINITY, f64::min),
            Geometry::Box { lo, hi } => (0..3)
                .map(|a| lo[a].min(TAU - hi[a]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Geometry::Ball { radius, .. } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Geometry::Box { lo, hi } => (0..3).map(|a| hi[a] - lo[a]).product(),
        }
    }
}

/// Parameters of the collar width law `δ_ε = c₆ ε^α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollarLaw {
    pub alpha: f64,
    pub c6: f64,
    pub c7: f64,
    pub delta1: f64,
}

impl Default for CollarLaw {
    fn default() -> Self {
        CollarLaw {
            alpha: 0.25,
            c6: 0.5,
            c7: 1.0,
            delta1: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Interior = 0,
    Collar = 1,
    Exterior = 2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMask {
    pub grid: TorusGrid,
    pub labels: Vec<Label>,
    pub geometry: Geometry,
    pub law: CollarLaw,
    pub epsilon: f64,
    /// Achieved collar width.
    pub delta_eps: f64,
}

impl DomainMask {
    pub fn cells(&self, label: Label) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, l)| **l == label).map(|(i, _)| i)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    pub fn in_domain(&self, idx: usize) -> bool {
        self.labels[idx] != Label::Exterior
    }

    /// Cells whose values are fixed by boundary data.
    pub fn is_frozen(&self, idx: usize) -> bool {
        self.labels[idx] != Label::Interior
    }

    pub fn collar_volume(&self) -> f64 {
        self.count(Label::Collar) as f64 * self.grid.cell_volume()
    }

    pub fn as_bytes(&self) -> Vec<u8> {
        self.labels.iter().map(|l| *l as u8).collect()
    }
}

/// Labels cells as interior `Ω_ε`, collar `Ω∖Ω_ε` or exterior.
pub fn build_mask(
    geometry: &Geometry,
    epsilon: f64,
    law: &CollarLaw,
    grid: TorusGrid,
    decay_exponent: Option<f64>,
) -> Result<DomainMask, FieldError> {
    if !(law.delta1 > 0.0) || geometry.margin() < law.delta1 {
        return Err(FieldError::Config(format!(
            "domain is {:.3} from the cube boundary, need at least delta1 = {}",
            geometry.margin(),
            law.delta1
        )));
    }
    if !(law.alpha > 0.0 && law.alpha < 1.0) {
        return Err(FieldError::Config(format!("alpha = {} must lie in (0, 1)", law.alpha)));
    }
    if !(law.c6 > 0.0 && law.c7 > law.c6) {
        return Err(FieldError::Config("collar constants need 0 < c6 < c7".into()));
    }
    if let Some(p) = decay_exponent {
        if p.is_finite() && (1.0 - law.alpha) * (p - 3.0) <= 2.0 {
            return Err(FieldError::Config(format!(
                "(1 - alpha)(p - 3) = {} must exceed 2",
                (1.0 - law.alpha) * (p - 3.0)
            )));
        }
    }
    if !(epsilon > 0.0) {
        return Err(FieldError::Config("epsilon must be positive".into()));
    }
    let delta = law.c6 * epsilon.powf(law.alpha);
    let inside: Vec<bool> = (0..grid.len()).map(|i| geometry.contains(&grid.point(i))).collect();
    let reach = (delta / grid.h).floor() as i64;
    let mut offsets = Vec::new();
    for a in -reach..=reach {
        for b in -reach..=reach {
            for c in -reach..=reach {
                if ((a * a + b * b + c * c) as f64).sqrt() * grid.h <= delta {
                    offsets.push([a, b, c]);
                }
            }
        }
    }
    let labels = (0..grid.len())
        .map(|i| {
            if !inside[i] {
                Label::Exterior
            } else if offsets.iter().any(|d| !inside[grid.shifted(i, *d)]) {
                Label::Collar
            } else {
                Label::Interior
            }
        })
        .collect();
    Ok(DomainMask {
        grid,
        labels,
        geometry: geometry.clone(),
        law: *law,
        epsilon,
        delta_eps: delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ball() -> Geometry {
        Geometry::Ball {
            center: [PI; 3],
            radius: 2.0,
        }
    }

    #[test]
    fn collar_width_law() {
        let g = TorusGrid::new(32).unwrap();
        let m = build_mask(&ball(), 0.2, &CollarLaw::default(), g, Some(6.0)).unwrap();
        assert!((m.delta_eps - 0.5 * 0.2f64.powf(0.25)).abs() < 1e-15);
        assert!((m.delta_eps - 0.334).abs() < 1e-3);
        assert!(m.count(Label::Collar) > 0 && m.count(Label::Interior) > 0);
        assert_eq!(m.count(Label::Interior) + m.count(Label::Collar) + m.count(Label::Exterior), g.len());
    }

    #[test]
    fn interior_cells_are_far_from_exterior() {
        let g = TorusGrid::new(24).unwrap();
        let m = build_mask(&ball(), 0.3, &CollarLaw::default(), g, None).unwrap();
        let ext: Vec<Vec3> = m.cells(Label::Exterior).map(|i| g.point(i)).collect();
        for i in m.cells(Label::Interior) {
            let x = g.point(i);
            assert!(ext.iter().all(|y| (x - y).norm() > m.delta_eps));
        }
    }

    #[test]
    fn collar_shrinks_with_epsilon() {
        let g = TorusGrid::new(32).unwrap();
        let vols: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&e| build_mask(&ball(), e, &CollarLaw::default(), g, None).unwrap().collar_volume())
            .collect();
        assert!(vols.windows(2).all(|w| w[1] <= w[0]), "{vols:?}");
    }

    #[test]
    fn rejects_bad_configuration() {
        let g = TorusGrid::new(16).unwrap();
        let touching = Geometry::Box {
            lo: [0.0, 1.0, 1.0],
            hi: [3.0, 3.0, 3.0],
        };
        assert!(matches!(build_mask(&touching, 0.2, &CollarLaw::default(), g, None), Err(FieldError::Config(_))));
        let law = CollarLaw { alpha: 0.5, ..Default::default() };
        assert!(build_mask(&ball(), 0.2, &law, g, Some(6.0)).is_err());
    }
}
