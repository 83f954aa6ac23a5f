//! Central table of numerical tolerances and default discretization knobs.

/// Target relative accuracy of `bessel_k`.
pub const BESSEL_K_REL_TOL: f64 = 1e-12;
/// Target accuracy of `bessel_j`.
pub const BESSEL_J_TOL: f64 = 1e-10;

/// Below this argument the integer-order K uses the logarithmic power series.
pub const BESSEL_K_SERIES_SWITCH: f64 = 2.0;
/// Above this argument the integer-order K uses the Hankel asymptotic expansion;
/// between the two switches Steed's continued fraction is used.
pub const BESSEL_K_ASYMPTOTIC_SWITCH: f64 = 30.0;
/// `exp(-z)` underflows beyond this; K saturates to zero.
pub const BESSEL_K_UNDERFLOW: f64 = 745.0;

/// J0 power series is used up to this argument.
pub const BESSEL_J0_SERIES_SWITCH: f64 = 4.0;
/// J0 Hankel asymptotic form is used from this argument on.
pub const BESSEL_J0_ASYMPTOTIC_SWITCH: f64 = 25.0;

/// Decay rate used for the Matérn decay certificate.
pub const MATERN_DECAY_ALPHA: f64 = 0.9;
/// Number of radii sampled when fitting the decay amplitude.
pub const DECAY_SAMPLES: usize = 10_000;
/// Radius range of the decay certificate.
pub const DECAY_RADIUS_MAX: f64 = 50.0;

/// Default symbol grid size per axis.
pub const DEFAULT_GRID: usize = 64;
/// Largest grid size per axis the coefficient doubling loop may reach.
pub const MAX_GRID_1D: usize = 4096;
pub const MAX_GRID_2D: usize = 1024;
pub const MAX_GRID_3D: usize = 64;

/// Default relative tolerance for symbol truncation.
pub const DEFAULT_SYMBOL_TOL: f64 = 1e-14;
/// Default relative tolerance for Lagrange coefficients (relative to the largest coefficient).
pub const DEFAULT_COEFF_TOL: f64 = 1e-15;
/// Smallest rounding floor of the coefficient DFT relative to the largest coefficient;
/// coefficient tolerances below it are raised to it.
pub const COEFF_NOISE_FLOOR: f64 = 32.0 * f64::EPSILON;
/// Default absolute tolerance for truncated Lagrange series.
pub const DEFAULT_EVAL_TOL: f64 = 1e-11;

/// Cap on the spatial symbol truncation radius, per dimension.
pub const SPATIAL_CAP_1D: usize = 20_000;
pub const SPATIAL_CAP_2D: usize = 1_500;
pub const SPATIAL_CAP_3D: usize = 120;

/// Cap on the plain truncated Poisson lattice sum radius, per dimension.
pub const POISSON_CAP_1D: usize = 200_000;
pub const POISSON_CAP_2D: usize = 2_000;
pub const POISSON_CAP_3D: usize = 150;

/// Cardinal conditions are checked for `|j|_inf <= CARDINAL_RADIUS`.
pub const CARDINAL_RADIUS: i64 = 5;
pub const CARDINAL_TOL: f64 = 1e-8;

/// Smallest |χ| admitted into a decay fit.
pub const DECAY_FLOOR: f64 = 1e-13;
/// Samples must exceed this multiple of their rounding-noise estimate.
pub const DECAY_NOISE_FACTOR: f64 = 100.0;
pub const DECAY_MIN_SAMPLES: usize = 10;

/// Lebesgue sampling points per axis on the unit cell.
pub const LEBESGUE_SAMPLES: usize = 33;
/// Error sampling offsets per cell and axis.
pub const ERROR_OFFSETS: usize = 7;
/// Largest halo width used for truncated Lagrange series.
pub const MAX_HALO: usize = 400;

/// Convergence errors below this are treated as the floating-point floor.
pub const ERROR_FLOOR: f64 = 100.0 * f64::EPSILON;
