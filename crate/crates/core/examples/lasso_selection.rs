//! Cross-validated LASSO support recovery on a sparse regression.

use biosig_affect::features::{lasso_select, LassoConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = Normal::new(0.0, 1.0)?;
    let (n, p) = (200, 36);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| z.sample(&mut rng)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] - 0.7 * r[1] + 0.5 * r[2] + 0.05 * z.sample(&mut rng)).collect();
    let sel = lasso_select(&x, &y, &LassoConfig::default())?;
    println!("lambda {:.2e}, selected columns {:?}", sel.lambda, sel.selected());
    for j in sel.selected() {
        println!("  w[{j}] = {:+.4}", sel.coefficients[j]);
    }
    Ok(())
}
