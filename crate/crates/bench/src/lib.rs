//! Fixtures shared by the solver benchmarks.

use heatfk::{Coefficients, GramFactor, Kernel, ScalarFn, SpaceGrid, TimeGrid};

pub fn line_grid(points: usize) -> SpaceGrid {
    SpaceGrid::line(-4.0, 4.0, points).expect("valid grid")
}

pub fn gaussian_factor(points: usize) -> GramFactor {
    let kernel = Kernel::gaussian(1.0, 0.5).expect("valid kernel");
    GramFactor::build(&kernel, &line_grid(points), 1e-12).expect("factorizable")
}

pub fn linear_coefficients() -> Coefficients {
    Coefficients::new(
        ScalarFn::Zero,
        ScalarFn::Identity,
        ScalarFn::Sin { amplitude: 0.5, frequency: 1.0, offset: 1.0 },
        1.0,
    )
    .expect("valid coefficients")
}

pub fn time_grid(steps: usize) -> TimeGrid {
    TimeGrid::new(0.25, steps).expect("valid time grid")
}
