//! Generated corpora for tests and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabelledCorpus;
use crate::label::LabelCode;

/// First codepoint of the Unicode cuneiform block.
const CUNEIFORM_BASE: u32 = 0x12000;

/// The `size` signs reserved for `label`; blocks of different labels are
/// disjoint.
pub fn class_alphabet(label: LabelCode, size: usize) -> Vec<char> {
    let start = CUNEIFORM_BASE + (label.index() * size) as u32;
    (start..start + size as u32)
        .map(|c| char::from_u32(c).expect("cuneiform block"))
        .collect()
}

/// A random text of 2-6 space-separated words of 1-5 signs each.
pub fn random_text(alphabet: &[char], rng: &mut impl Rng) -> String {
    let words = rng.gen_range(2..=6);
    (0..words)
        .map(|_| {
            let len = rng.gen_range(1..=5);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `per_class` documents for each of the seven labels, every label writing
/// with its own 20-sign alphabet, interleaved by label.
pub fn disjoint_corpus(per_class: usize, seed: u64) -> LabelledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabets: Vec<Vec<char>> = LabelCode::ALL.iter().map(|&l| class_alphabet(l, 20)).collect();
    let mut pairs = Vec::with_capacity(per_class * LabelCode::ALL.len());
    for _ in 0..per_class {
        for (l, alphabet) in LabelCode::ALL.iter().zip(&alphabets) {
            pairs.push((*l, random_text(alphabet, &mut rng)));
        }
    }
    LabelledCorpus::from_pairs(pairs).expect("generated texts are valid")
}
