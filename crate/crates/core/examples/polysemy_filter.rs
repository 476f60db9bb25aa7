//! Drop every dictionary pair whose source or target word occurs in more
//! than one pair.
//!
//! run with `cargo run --example polysemy_filter`

use std::io::Cursor;

use bdma::BilingualDictionary;

fn main() -> bdma::Result<()> {
    let text = "bank banco\nbank orilla\nriver rio\ncat gato\nkitty gato\ndog perro\n";
    let dict = BilingualDictionary::parse(Cursor::new(text))?;
    let unique = dict.filter_unique();
    println!("{} pairs in, {} kept:", dict.len(), unique.len());
    print!("{}", unique.to_text());
    Ok(())
}
