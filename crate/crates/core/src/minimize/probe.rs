use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyError;
use crate::fft::Fft3;
use crate::field::{OrderField, PeriodizedKernelGrid};
use crate::maxent::{project_q, BulkData};
use crate::QTensor;

use super::{minimize_feps, MinimizeError, MinimizeOptions, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    pub trials: usize,
    /// `L²` norm of each perturbation before projection.
    pub amplitude: f64,
    /// A trial counts as returned when the translated distance is below this.
    pub return_tol: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            trials: 8,
            amplitude: 1e-3,
            return_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrial {
    pub energy: f64,
    pub shift: [i64; 3],
    pub distance: f64,
    pub returned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub reference_energy: f64,
    pub trials: Vec<ProbeTrial>,
    pub fraction: f64,
}

/// Lattice shift `d` minimizing `‖reference − other(· + d h)‖` and that
/// distance, found from the cross-correlation over all shifts.
pub fn best_shift(reference: &OrderField, other: &OrderField) -> ([i64; 3], f64) {
    let g = reference.grid;
    let fft = Fft3::new(g.n);
    let mut corr = vec![Complex64::default(); g.len()];
    for a in 0..5 {
        let mut r: Vec<Complex64> = reference.values.iter().map(|q| Complex64::new(q.0[a], 0.0)).collect();
        let mut o: Vec<Complex64> = other.values.iter().map(|q| Complex64::new(q.0[a], 0.0)).collect();
        fft.forward(&mut r);
        fft.forward(&mut o);
        for (c, (rk, ok)) in corr.iter_mut().zip(r.iter().zip(&o)) {
            *c += rk.conj() * ok;
        }
    }
    fft.inverse(&mut corr);
    let best = (0..g.len()).fold(0, |b, i| if corr[i].re > corr[b].re { i } else { b });
    let c = g.coords(best);
    let d = [c[0] as i64, c[1] as i64, c[2] as i64].map(|v| if v >= g.n as i64 / 2 { v - g.n as i64 } else { v });
    (d, reference.l2_distance(&other.translated(d)))
}

/// Perturbs a converged minimizer of the periodic energy, re-minimizes and
/// reports how often the descent comes back to it modulo translations.
pub fn local_min_probe(
    field: &OrderField,
    kgrid: &PeriodizedKernelGrid,
    bulk: &BulkData,
    epsilon: f64,
    probe: &ProbeOptions,
    opts: &MinimizeOptions,
) -> Result<ProbeReport> {
    if !(probe.amplitude >= 0.0) || probe.return_tol < 0.0 {
        return Err(MinimizeError::Config(format!("invalid probe options {probe:?}")));
    }
    let reference = minimize_feps(field, kgrid, bulk, epsilon, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let w = field.grid.cell_volume();
    let mut trials = Vec::with_capacity(probe.trials);
    for _ in 0..probe.trials {
        let noise: Vec<[f64; 5]> = (0..field.len())
            .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng)))
            .collect();
        let norm = (w * noise.iter().flatten().map(|v| v * v).sum::<f64>()).sqrt();
        let scale = if norm > 0.0 { probe.amplitude / norm } else { 0.0 };
        let start = OrderField {
            grid: field.grid,
            values: reference
                .field
                .values
                .iter()
                .zip(&noise)
                .map(|(q, n)| project_q(&(*q + QTensor::new(*n) * scale), opts.projection_margin))
                .collect(),
        };
        let outcome = match minimize_feps(&start, kgrid, bulk, epsilon, opts) {
            Ok(r) => r,
            // a stalled trial is reported as not returning rather than aborting the probe
            Err(MinimizeError::Stall { energy, .. }) => {
                trials.push(ProbeTrial {
                    energy,
                    shift: [0; 3],
                    distance: f64::INFINITY,
                    returned: false,
                });
                continue;
            }
            Err(MinimizeError::Energy(EnergyError::Saturated { .. })) => continue,
            Err(e) => return Err(e),
        };
        let (shift, distance) = best_shift(&reference.field, &outcome.field);
        trials.push(ProbeTrial {
            energy: outcome.energy.total,
            shift,
            distance,
            returned: distance <= probe.return_tol,
        });
    }
    let fraction = if trials.is_empty() {
        1.0
    } else {
        trials.iter().filter(|t| t.returned).count() as f64 / trials.len() as f64
    };
    Ok(ProbeReport {
        reference_energy: reference.energy.total,
        trials,
        fraction,
    })
}
