//! Gradient descent on a balanced depth-3 chain: each signed singular value
//! of the product moves at the rate `−N (σ²)^{1−1/N} uᵀ∇ℓ v`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sgmc::metrics::{max_trajectory_residual, predicted_rates};
use sgmc::trainer::{track_chain_dynamics, FactorChain};
use sgmc::MaskedMatrix;

fn main() -> sgmc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let target = Array2::from_shape_fn((10, 8), |_| StandardNormal.sample(&mut rng));
    let x0: Array2<f64> = Array2::from_shape_fn((10, 8), |_| StandardNormal.sample(&mut rng));
    let target = MaskedMatrix::fully_observed(target)?;

    for lr in [1e-3, 1e-4, 1e-5] {
        let mut chain = FactorChain::balanced_from(&x0.view(), 3, 5)?;
        let start = chain.clone();
        let dynamics = track_chain_dynamics(&mut chain, &target, lr, 100, 3)?;
        let worst = max_trajectory_residual(&start, &dynamics, lr)?;
        println!("lr {lr:.0e}: max relative residual over 100 steps {worst:.2e}");
    }

    let mut chain = FactorChain::balanced_from(&x0.view(), 3, 5)?;
    let dynamics = track_chain_dynamics(&mut chain, &target, 1e-3, 2000, 3)?;
    for t in [0, 500, 1000, 1999] {
        let pred = predicted_rates(&dynamics.triplets[t], &dynamics.loss_gradients[t].view(), 3);
        println!("step {t:>4}: σ {:.4}  dσ/dt {:.4}", dynamics.triplets[t].values, pred);
    }
    println!("balance residual after training {:.2e}", chain.balance_residual());
    Ok(())
}
