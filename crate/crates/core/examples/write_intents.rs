//! Regenerates `data/intents.jsonl`: `cargo run -p autonlu-core --example write_intents -- data/intents.jsonl`.

use autonlu_core::corpus::write_classification_jsonl;
use autonlu_core::synthetic::intent_corpus;

fn main() -> autonlu_core::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/intents.jsonl".into());
    let corpus = intent_corpus(200, 0)?;
    write_classification_jsonl(&path, corpus.samples())?;
    println!("wrote {} samples to {path}", corpus.len());
    Ok(())
}
