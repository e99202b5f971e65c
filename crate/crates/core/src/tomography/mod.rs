//! Phase-binned marginals and Wigner reconstruction by filtered back-projection.

mod analysis;
mod fbp;
mod marginals;
mod wigner;

pub use analysis::{analyze, GaussianFit, WignerReport};
pub use fbp::{
    density_l1, inverse_radon, inverse_radon_with, project_marginal, project_marginal_on, resolution_variance,
    FbpOptions,
    DEFAULT_GRID_SIZE,
};
pub use marginals::{
    bin_marginals, bin_marginals_with, default_grid, symmetric_grid, MarginalSet, DEFAULT_MIN_OCCUPANCY,
    DEFAULT_N_ANGLES, DEFAULT_Z_BINS, DEFAULT_Z_HALF_WIDTH_SD, MIN_ANGLES, MIN_PERIODS,
};
pub use wigner::{square_axis, WignerGrid};
