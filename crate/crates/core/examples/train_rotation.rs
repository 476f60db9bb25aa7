//! Recover a random rotation between two synthetic spaces with one linear
//! mapper, then translate in both directions with the same parameters.
//!
//! run with `cargo run --release --example train_rotation`
//! (pass `ffn` as the first argument for the 1-hidden-layer mapper)

use bdma::linalg::orthogonality_defect;
use bdma::retrieval::{cycle_error, precision_at_k};
use bdma::synth::{generate, SynthSpec};
use bdma::{Direction, MapperKind, RetrievalMethod, TrainingConfig};

fn main() -> bdma::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let ffn = std::env::args().nth(1).as_deref() == Some("ffn");

    let data = generate(&SynthSpec::default())?;
    let pairs = data.train.bind(&data.src, &data.tgt)?;
    let (val, _) = data.val.eval_groups(&data.src, &data.tgt)?;

    let cfg = TrainingConfig {
        kind: if ffn { MapperKind::Ffn } else { MapperKind::Linear },
        hidden: 256,
        ..TrainingConfig::default()
    };
    let (mapper, report) = bdma::trainer::train(&data.src, &data.tgt, &pairs, &val, &cfg)?;
    for e in &report.epochs {
        println!("epoch {:2}  loss {:9.5}  val P@1 {:.3}  lr {:.6}", e.epoch, e.loss, e.val_p1, e.lr);
    }
    println!("best epoch {} ({:.2?})", report.best_epoch, report.wall_time);

    let csls = RetrievalMethod::Csls { k: 10 };
    let (fwd, _) = data.test.eval_groups(&data.src, &data.tgt)?;
    let (rev, _) = data.test.reversed().eval_groups(&data.tgt, &data.src)?;
    let f = precision_at_k(&mapper, Direction::Forward, &fwd, &data.src, &data.tgt, csls, None)?;
    let r = precision_at_k(&mapper, Direction::Reverse, &rev, &data.src, &data.tgt, csls, None)?;
    println!("test P@1 forward {:.3} reverse {:.3}", f.p_at_1, r.p_at_1);

    let test_rows = data.src.rows(&data.test.bind(&data.src, &data.tgt)?.source_indices());
    println!("cycle error {:.4}", cycle_error(&mapper, test_rows.view())?);
    if let Some(w) = mapper.linear_weight() {
        println!("||W^T W - I||_F = {:.4}", orthogonality_defect(w.view()));
    }
    Ok(())
}
