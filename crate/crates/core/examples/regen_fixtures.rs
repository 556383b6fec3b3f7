//! Rewrites the recorded transcripts of every bundled case.
//!
//! Run after changing prompts, templates or role definitions:
//! `cargo run -p mare-core --example regen_fixtures`

use std::path::Path;

use mare_core::evaluation::GoldCase;
use mare_core::fixtures::{record_transcript, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut ids: Vec<String> = std::fs::read_dir(&root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("gold.json").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    for id in ids {
        let dir = root.join(&id);
        let gold = GoldCase::from_file(&dir.join("gold.json"))?;
        for (file, scenario) in [("happy.jsonl", Scenario::Happy), ("fail_once.jsonl", Scenario::FailOnce)] {
            let t = record_transcript(&gold, scenario);
            std::fs::write(dir.join(file), t.to_jsonl())?;
            println!("{id}/{file}: {} entries", t.len());
        }
    }
    Ok(())
}
