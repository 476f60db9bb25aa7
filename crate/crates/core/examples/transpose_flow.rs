//! One set of weights, two directions: the reverse flow applies each layer
//! transposed, in reverse order. For an orthogonal matrix it is the exact
//! inverse.
//!
//! run with `cargo run --example transpose_flow`

use bdma::linalg::{gaussian, orthogonality_defect, qr_orthogonal};
use bdma::{Mapper, MapperKind, Sharing};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bdma::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = qr_orthogonal(&gaussian(6, 6, &mut rng));
    let rotation = Mapper::linear(q)?;
    let x = gaussian(4, 6, &mut rng);

    let y = rotation.forward(x.view())?;
    let back = rotation.reverse(y.view())?;
    let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("rotation: max |reverse(forward(x)) - x| = {err:.2e}");
    println!("rotation: ||W^T W - I||_F = {:.2e}", orthogonality_defect(rotation.linear_weight().unwrap().view()));

    // A feedforward mapper shares W1 and W2 between both flows.
    let ffn = Mapper::init(MapperKind::Ffn, 6, 16, Sharing::Shared, 3)?;
    let y = ffn.forward(x.view())?;
    let back = ffn.reverse(y.view())?;
    println!("ffn: forward {:?} -> reverse {:?}", y.dim(), back.dim());
    println!("ffn: {} parameter tensors", ffn.params().len());
    Ok(())
}
