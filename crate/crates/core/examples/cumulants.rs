//! Sample cumulants of a skewed pair and the matricized population array.

use nalgebra::DMatrix;
use ngdim::cumulant::{sample_cumulants, CumulantMatrix, MultiIndex};
use ngdim::shocks::ShockDistribution;
use ngdim::{rng, TimeSeriesMatrix};

fn main() -> ngdim::Result<()> {
    let t = 20_000;
    let skewed = ShockDistribution::Exponential.sampler()?;
    let normal = ShockDistribution::Gaussian.sampler()?;
    let mut r = rng::stream(7, &[]);
    let data = TimeSeriesMatrix::new(DMatrix::from_fn(t, 2, |_, j| {
        if j == 0 {
            skewed.sample(&mut r)
        } else {
            normal.sample(&mut r)
        }
    }));

    let k3 = sample_cumulants(&data, 3)?;
    println!("third-order cumulants (T = {t}):");
    for idx in MultiIndex::enumerate_distinct(2, 3) {
        println!("  kappa{:?} = {:+.4}", idx.entries(), k3.get(&idx));
    }

    let pop = CumulantMatrix::from_marginals(3, &[2.0, 0.0])?;
    println!("population matricization (d^2 x d):{}", pop.values());
    println!("sample matricization:{:.4}", k3.matricize().values());
    Ok(())
}
