//! World sources and estimator closures for the coverage subcommand.

use ppi::dataio::Dataset;
use ppi::engine::EngineConfig;
use ppi::error::{Error, Result};
use ppi::rng::substream;
use ppi::synthcov::{
    fit_world_from_pool, gen_binary, BinaryWorld, RegimeBiasWorld, SxsWorld, World, WorldSampler,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::run::{run_method, MethodOpts};

/// Appendix-style heterogeneous binary protocol: a handful of synthetic
/// pools, each fit into a posterior the trial worlds are drawn from.
pub const A3_POOLS: usize = 10;
pub const A3_POOL_SIZE: usize = 2000;
pub const A3_N_REF: usize = 300;

pub fn a3_sampler(seed: u64) -> Result<WorldSampler> {
    let mut pools = Vec::with_capacity(A3_POOLS);
    for i in 0..A3_POOLS {
        let mut rng = substream(seed, &[90, i as u64]);
        let p_a = rng.gen_range(0.55..0.78);
        let q1 = rng.gen_range(0.80..0.92);
        let q0 = rng.gen_range(0.20..0.38);
        let world = BinaryWorld::from_conditionals(p_a, q1, q0)?;
        let pool = gen_binary(&world, A3_POOL_SIZE, 1, &mut rng);
        pools.push(fit_world_from_pool(&pool, A3_N_REF)?);
    }
    WorldSampler::new(pools)
}

/// Fixed side-by-side world: clear preference for model A, a noisy but
/// informative autorater.
pub fn sxs_preset() -> SxsWorld {
    let e = 0.075;
    let confusion = [[0.85, e, e], [e, 0.85, e], [e, e, 0.85]];
    SxsWorld::from_h_marginal([0.35, 0.25, 0.40], confusion).expect("valid preset")
}

/// A closure drawing one world per trial for a named world family.
pub fn world_source(
    name: &str,
    seed: u64,
) -> Result<Box<dyn Fn(&mut ChaCha8Rng) -> Result<World> + Sync>> {
    match name {
        "fig1" => Ok(Box::new(|_| Ok(World::Binary(BinaryWorld::fig1_preset())))),
        "a3" => {
            let sampler = a3_sampler(seed)?;
            Ok(Box::new(move |rng| Ok(World::Binary(sampler.sample(rng)?))))
        }
        "regime" => Ok(Box::new(|_| Ok(World::Regime(RegimeBiasWorld::two_regime_preset())))),
        "bimodal" => Ok(Box::new(|_| Ok(World::Regime(RegimeBiasWorld::bimodal_preset())))),
        "sxs" => {
            let world = sxs_preset();
            Ok(Box::new(move |_| Ok(World::Sxs(world.clone()))))
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown world {name:?} (expected fig1, a3, regime, bimodal or sxs)"
        ))),
    }
}

/// A (lo, hi) estimator closure for coverage trials, dispatching through
/// the same method table as cmd_estimate.
pub fn estimator_for(
    method: String,
    cfg: EngineConfig,
    opts: MethodOpts,
) -> impl Fn(&Dataset, u64) -> Result<(f64, f64)> + Sync {
    move |data, seed| {
        let cfg = EngineConfig { seed, ..cfg.clone() };
        let report = run_method(data, &method, &cfg, &opts)?;
        Ok((report.interval.lo, report.interval.hi))
    }
}
