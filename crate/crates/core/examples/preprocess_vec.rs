//! Parse a small `.vec` stream, run normalize, center, normalize, and write
//! the result back out.
//!
//! run with `cargo run --example preprocess_vec`

use std::io::Cursor;

use bdma::EmbeddingSet;

const VEC: &str = "4 3\n\
the 0.5 1.5 -0.2\n\
cat 2.0 0.1 0.3\n\
the 9 9 9\n\
dog 1.8 0.2 0.4\n";

fn main() -> bdma::Result<()> {
    let (raw, stats) = EmbeddingSet::parse_vec(Cursor::new(VEC), 200_000)?;
    println!("{} words, dim {}, {} duplicate(s) skipped", raw.len(), raw.dim(), stats.duplicates_skipped);

    let clean = raw.preprocess()?;
    for (i, w) in clean.words().iter().enumerate() {
        let r = clean.row(i);
        println!("{w:>4}  norm {:.6}", r.dot(&r).sqrt());
    }

    let mut out = Vec::new();
    clean.write_vec(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
