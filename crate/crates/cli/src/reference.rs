//! Published reference values for the `r⁻⁶` kernel with inner cutoff 0.1,
//! quoted per unit profile coefficient. These are the only literature
//! numbers in the program; everything else is computed.

/// Moment constants per unit coefficient of the profile they belong to.
pub const G1_100: f64 = 41.32;
pub const G2_110: f64 = 8.264;
pub const G2_200: f64 = 24.79;
pub const G3_111: f64 = 1.181;
pub const G3_210: f64 = 3.542;
pub const G3_300: f64 = 17.71;

/// `k₀ ≈ a₁c₁ + a₂c₂ + a₃c₃`. The third coefficient disagrees with the
/// analytic value (≈ 558.5) and is reported without a pass/fail verdict.
pub const K0: [f64; 3] = [4058.0, 1353.0, 811.0];

/// `K₁/(s*)² ≈ 83c₁ + 33c₂ + 14c₃`.
pub const K1: [f64; 3] = [83.0, 33.0, 14.0];
/// `K₂/(s*)² ≈ 83c₁ + 17c₂ + 4.7c₃`.
pub const K2: [f64; 3] = [83.0, 17.0, 4.7];

/// `|K₁−K₂|/K₁` for roughly equal coefficients.
pub const RATIO_EQUAL: f64 = 0.2;
/// Upper bound of `|K₁−K₂|/K₁` when `c₁ ≥ c₂, c₃ ≥ 0`.
pub const RATIO_DOMINANT_BOUND: f64 = 0.3;

/// Relative deviation accepted as a match for the moment and Frank rows.
pub const MATCH_REL: f64 = 0.02;
/// Relative deviation accepted as a match for the `k₀` rows.
pub const MATCH_K0_REL: f64 = 0.05;
/// Absolute deviation accepted for the ratio.
pub const MATCH_RATIO_ABS: f64 = 0.01;

pub fn dot(a: &[f64; 3], c: &[f64; 3]) -> f64 {
    a[0] * c[0] + a[1] * c[1] + a[2] * c[2]
}
