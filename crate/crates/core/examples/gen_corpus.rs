//! Regenerates `crates/core/corpus/`: `cargo run --example gen_corpus`.

use std::fs;
use std::path::Path;

use mpe_core::corpus::{corpus_entries, manifest};

fn main() -> mpe_core::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    fs::create_dir_all(&dir)?;
    let entries = corpus_entries();
    for e in &entries {
        fs::write(
            dir.join(&e.file),
            serde_json::to_string_pretty(&e.game.to_file())? + "\n",
        )?;
    }
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest(&entries))? + "\n",
    )?;
    println!("wrote {} games to {}", entries.len(), dir.display());
    Ok(())
}
