//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tablescope_core::synth::{random_document, SynthSpec};
use tablescope_core::Document;

/// A seeded synthetic document with `tables` tables and `texts` text blocks.
pub fn document(tables: usize, texts: usize) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64((tables * 1000 + texts) as u64);
    random_document(
        &mut rng,
        &SynthSpec {
            doc_id: format!("bench-{tables}x{texts}"),
            source: "synthetic".into(),
            n_pages: (texts / 10).max(1) as u32,
            n_tables: tables,
            n_texts: texts,
        },
    )
}
