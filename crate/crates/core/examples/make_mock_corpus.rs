//! Regenerates the bundled mock corpus: `cargo run --example make_mock_corpus -- <dir>`.

use std::path::PathBuf;

use perturbench::synth::{write_mock_corpus, MockCorpusSpec};

fn main() {
    let dir: PathBuf = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| "fixtures/mock_corpus".into());
    match write_mock_corpus(&dir, &MockCorpusSpec::default()) {
        Ok(m) => println!("wrote {} frames to {}", m.len(), dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
