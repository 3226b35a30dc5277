//! Writes a synthetic raw corpus and its lexicon.
//!
//! `cargo run -p morphnlg --features testkit --example make_sample -- DIR [N] [SEED]`

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use morphnlg::io::write_raw;
use morphnlg::testkit::{restaurant_lexicon, restaurant_raw};

fn main() -> morphnlg::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/sample".to_owned()));
    let n: usize = args.next().map_or(400, |s| s.parse().expect("N must be a number"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("SEED must be a number"));
    fs::create_dir_all(&dir)?;
    write_raw(BufWriter::new(File::create(dir.join("raw.jsonl"))?), &restaurant_raw(n, seed))?;
    fs::write(dir.join("lexicon.tsv"), restaurant_lexicon().to_file_string())?;
    println!("wrote {n} rows to {}", dir.display());
    Ok(())
}
