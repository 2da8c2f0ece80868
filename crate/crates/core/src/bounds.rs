//! Frozen regression constants.
//!
//! Each value is 1.2 times the largest ratio observed on the pinned seeds of
//! the acceptance suite, the unit tests and the demo configurations. A
//! measured ratio above the frozen value signals a regression.

/// Parabolic Poincare ratio.
pub const POINCARE: f64 = 0.298;

/// Gagliardo-Nirenberg ratio.
pub const GAGLIARDO_NIRENBERG: f64 = 0.517;

/// Time-slice estimate ratio.
pub const TIME_SLICE: f64 = 0.791;

/// Global a priori estimate ratio.
pub const APRIORI: f64 = 0.306;

/// Caccioppoli ratio on intrinsic cylinders at the initial time.
pub const CACCIOPPOLI: f64 = 1.52;

/// Reverse Holder ratio on intrinsic cylinders at the initial time.
pub const REVERSE_HOLDER: f64 = 5.12;

/// Higher integrability ratio.
pub const HIGHER_INTEGRABILITY: f64 = 0.0228;

/// Largest number of Whitney cylinders meeting one quadrupled cylinder or
/// neighbouring one cylinder.
pub const WHITNEY_OVERLAP: usize = 60;

/// Scaled derivative sum of the Whitney partition of unity.
pub const WHITNEY_DERIVATIVE: f64 = 210.0;

/// Ratios of the truncation bounds.
pub const TRUNCATION: crate::truncation::TruncationBounds = crate::truncation::TruncationBounds {
    sup: 1.22,
    gradient: 7.65,
    average_jump: 2.40,
    time_derivative: 0.239,
    product: 8.1e-7,
    lp: 1.16,
};

/// `L^theta` ratio of the strong maximal function.
pub const MAXIMAL_STRONG: f64 = 3.76;

/// Energy of a computed solution against its data.
pub const ENERGY: f64 = 0.459;

/// Certified metric Lipschitz constant of the truncation divided by the level.
pub const TRUNCATION_LIPSCHITZ: f64 = 13.2;
