//! Thread-pool drivers. Work items are produced independently and merged in
//! index order, so results never depend on the number of workers.

use locstat_core::diagnostics::{ErgodicObserver, Estimate, Observable};
use locstat_core::effective::{
    effective_point_with, tabulate_from, EffectiveTensors, GeometryReport, PointTensors, YGrid,
};
use locstat_core::galerkin::GalerkinBasis;
use locstat_core::medium::MediumSpec;
use locstat_core::sde::{SimConfig, Simulator, TrajectoryEnsemble};
use locstat_core::Result;
use rayon::prelude::*;

pub fn pool(threads: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

pub fn run(sim: &Simulator<'_>) -> Result<TrajectoryEnsemble> {
    let outputs = (0..sim.config().paths as u64).into_par_iter().map(|id| sim.path(id)).collect::<Result<Vec<_>>>()?;
    sim.assemble(outputs)
}

pub fn simulate_two_scale(config: &SimConfig, medium: &MediumSpec) -> Result<TrajectoryEnsemble> {
    run(&Simulator::two_scale(config, medium)?)
}

pub fn simulate_limit(
    config: &SimConfig,
    tensors: &EffectiveTensors,
    medium: &MediumSpec,
) -> Result<TrajectoryEnsemble> {
    run(&Simulator::limit(config, tensors, medium.potential)?)
}

pub fn ergodic_sup_error(sim: &Simulator<'_>, observable: Observable) -> Result<Estimate> {
    let samples = (0..sim.config().paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut obs = ErgodicObserver::new(observable);
            sim.path_observed(id, &mut obs)?;
            Ok(obs.sup_squared())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&samples))
}

pub fn effective_points(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    grid: &YGrid,
    ladder: &[f64],
) -> Result<Vec<PointTensors>> {
    let gradients = basis.gradient_matrices();
    grid.points().par_iter().map(|y| effective_point_with(medium, basis, &gradients, y.as_slice(), ladder)).collect()
}

pub fn tabulate(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    grid: &YGrid,
    ladder: &[f64],
) -> Result<(EffectiveTensors, GeometryReport)> {
    let pts = effective_points(medium, basis, grid, ladder)?;
    tabulate_from(medium, grid, &pts)
}
