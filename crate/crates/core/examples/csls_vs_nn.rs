//! A hub target that is every query's nearest neighbour gets demoted by
//! CSLS, which discounts crowded neighbourhoods.
//!
//! run with `cargo run --example csls_vs_nn`

use bdma::linalg::normalize_rows;
use bdma::retrieval::{csls_retrieve, nn_retrieve};
use ndarray::array;

fn main() -> bdma::Result<()> {
    let queries = normalize_rows(array![[-1.0, -0.8], [-0.6, -0.2], [-0.1, 0.8], [-0.4, -1.0]].view());
    let targets = normalize_rows(array![[0.7, -0.9], [-0.8, 0.9], [0.5, -0.3], [-0.7, -0.2]].view());

    let nn = nn_retrieve(queries.view(), targets.view(), 1)?;
    let csls = csls_retrieve(queries.view(), targets.view(), queries.view(), 2)?;
    for (q, (a, b)) in nn.iter().zip(&csls).enumerate() {
        println!("query {q}: nn -> {}  csls -> {}", a[0], b[0]);
    }
    Ok(())
}
