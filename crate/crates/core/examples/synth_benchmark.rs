//! Generate each synthetic transform kind and check how well its
//! ground-truth map scores, and what a do-nothing identity mapper scores.
//!
//! run with `cargo run --release --example synth_benchmark`

use bdma::retrieval::precision_at_k;
use bdma::synth::{generate, GroundTruth, SynthSpec, TransformKind};
use bdma::{Direction, Mapper, RetrievalMethod};
use ndarray::Array2;

fn main() -> bdma::Result<()> {
    let csls = RetrievalMethod::Csls { k: 10 };
    for kind in [
        TransformKind::Identity,
        TransformKind::Orthogonal,
        TransformKind::GeneralLinear,
        TransformKind::Nonlinear,
    ] {
        let spec = SynthSpec { n: 1000, d: 30, noise: 0.02, kind, ..SynthSpec::default() };
        let data = generate(&spec)?;
        let (groups, _) = data.test.eval_groups(&data.src, &data.tgt)?;
        let identity = Mapper::linear(Array2::eye(spec.d))?;
        let base = precision_at_k(&identity, Direction::Forward, &groups, &data.src, &data.tgt, csls, None)?;
        let oracle = match &data.truth {
            GroundTruth::Linear(m) if kind == TransformKind::Orthogonal => {
                let m = Mapper::linear(m.clone())?;
                Some(precision_at_k(&m, Direction::Forward, &groups, &data.src, &data.tgt, csls, None)?.p_at_1)
            }
            _ => None,
        };
        println!(
            "{kind:>14}: {} train / {} val / {} test, identity P@1 {:.3}, oracle P@1 {}",
            data.train.len(),
            data.val.len(),
            data.test.len(),
            base.p_at_1,
            oracle.map_or("n/a".to_string(), |p| format!("{p:.3}")),
        );
    }
    Ok(())
}
