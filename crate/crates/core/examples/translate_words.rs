//! Train on a small synthetic rotation, save the model, load it back and
//! look up translations in both directions.
//!
//! run with `cargo run --release --example translate_words`

use bdma::retrieval::translate;
use bdma::synth::{generate, SynthSpec};
use bdma::{Direction, Mapper, RetrievalMethod, TrainingConfig};

fn main() -> bdma::Result<()> {
    let data = generate(&SynthSpec { n: 600, d: 20, ..SynthSpec::default() })?;
    let pairs = data.train.bind(&data.src, &data.tgt)?;
    let (val, _) = data.val.eval_groups(&data.src, &data.tgt)?;
    // Few pairs means few Adam steps per epoch; a larger rate makes up for it.
    let cfg = TrainingConfig { epochs: 30, learning_rate: 0.01, ..TrainingConfig::default() };
    let (mapper, _) = bdma::trainer::train(&data.src, &data.tgt, &pairs, &val, &cfg)?;

    let path = std::env::temp_dir().join("bdma_translate_words.bin");
    mapper.save(&path)?;
    let mapper = Mapper::load(&path)?;

    let method = RetrievalMethod::Csls { k: 10 };
    let fwd = translate(&mapper, &["s590", "s595", "nope"], Direction::Forward, &data.src, &data.tgt, method, 3)?;
    let rev = translate(&mapper, &["t590", "t595"], Direction::Reverse, &data.src, &data.tgt, method, 3)?;
    for (w, t) in ["s590", "s595", "nope"].iter().zip(fwd) {
        println!("{w} -> {t:?}");
    }
    for (w, t) in ["t590", "t595"].iter().zip(rev) {
        println!("{w} -> {t:?}");
    }
    Ok(())
}
