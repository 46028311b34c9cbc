//! Polynomial least squares on log10 fines with coefficients reported in raw
//! feature units, plus k-fold R².
//!
//! cargo run --release --example fine_regression

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use riskgrid::learn::cv::LinRegLearner;
use riskgrid::learn::{cross_validate, fit_linreg};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = Normal::new(0.0, 0.25)?;
    // log10 fine = 5.2 - 0.0008 * distance_m + 0.6 * density
    let x: Vec<Vec<f64>> = (0..800).map(|_| vec![rng.random_range(0.0..2000.0), rng.random_range(0.0..3.0)]).collect();
    let y: Vec<f64> = x.iter().map(|r| 5.2 - 0.0008 * r[0] + 0.6 * r[1] + noise.sample(&mut rng)).collect();

    for degree in [1, 2] {
        let model = fit_linreg(&x, &y, degree)?;
        println!("degree {degree}: {} terms, residual sigma {:.4}", model.expansion().len(), model.residual_sigma);
        println!("  intercept {:.4}", model.raw_intercept());
        for (term, c) in model.expansion().terms().iter().zip(model.raw_coefficients()) {
            println!("  x{term:?} {c:>12.6}");
        }
        let report = cross_validate(&LinRegLearner { degree }, &x, &y, 5, 1)?;
        print!("{report}");
        let q = [500.0, 1.0];
        println!("  predicted fine at {q:?}: {:.0} USD\n", 10f64.powf(model.predict(&q)?));
    }
    Ok(())
}
