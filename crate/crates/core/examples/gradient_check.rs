//! Compare the analytic gradients of every loss against central finite
//! differences, for a linear and a small feedforward mapper.
//!
//! run with `cargo run --example gradient_check`

use bdma::linalg::{gaussian, normalize_rows};
use bdma::losses::{grad_check, kink_margin, CandidatePools};
use bdma::mapper::Network;
use bdma::{LossKind, Mapper};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bdma::Result<()> {
    let (d, h, batch) = (12, 8, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = normalize_rows(gaussian(batch, d, &mut rng).view());
    let xt = normalize_rows(gaussian(batch, d, &mut rng).view());
    let pool_t = normalize_rows(gaussian(64, d, &mut rng).view());
    let pool_s = normalize_rows(gaussian(64, d, &mut rng).view());
    let pools = CandidatePools { target: pool_t.view(), source: pool_s.view(), k: 10 };

    let linear = Mapper::linear(gaussian(d, d, &mut rng) / (d as f64).sqrt())?;
    let ffn = Mapper::from_networks(
        Network::Ffn {
            w1: gaussian(h, d, &mut rng) / (d as f64).sqrt(),
            w2: gaussian(d, h, &mut rng) / (h as f64).sqrt(),
        },
        None,
    )?;

    for (name, m) in [("linear", &linear), ("ffn", &ffn)] {
        // |cos| has a kink at zero; finite differences need some distance from it.
        assert!(kink_margin(m, xs.view(), xt.view())? > 1e-2);
        for kind in [LossKind::Mse, LossKind::Cosine, LossKind::Rcsls, LossKind::CosineRcsls] {
            let r = grad_check(m, xs.view(), xt.view(), kind, Some(&pools), Some(0.001), 1e-3, 1e-5)?;
            println!("{name:>6} {:>9}  max rel err {:.2e}", kind.name(), r.max_rel_err);
        }
    }
    Ok(())
}
