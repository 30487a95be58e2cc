//! Seeded fixtures shared by the benchmarks.

use ampgen_core::features::featurize;
use ampgen_core::gbdt::{LabeledExample, Provenance};
use ampgen_core::seq::{PeptideSequence, Residue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_sequences(n: usize, max_len: usize, seed: u64) -> Vec<PeptideSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            PeptideSequence::new(
                (0..len)
                    .map(|_| Residue::ALL[rng.random_range(0..20)])
                    .collect(),
            )
            .expect("length within bounds")
        })
        .collect()
}

/// Half positives rich in K/R/L/W, half uniform random negatives.
pub fn labeled_dataset(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cationic: Vec<Residue> = "KRLW".chars().filter_map(Residue::from_char).collect();
    (0..n)
        .map(|i| {
            let label = i % 2 == 0;
            let len = rng.random_range(8..=40);
            let residues = (0..len)
                .map(|_| {
                    if label && rng.random_bool(0.5) {
                        cationic[rng.random_range(0..4)]
                    } else {
                        Residue::ALL[rng.random_range(0..20)]
                    }
                })
                .collect();
            let s = PeptideSequence::new(residues).expect("length within bounds");
            let prov = if label {
                Provenance::EV
            } else {
                Provenance::SyntheticR
            };
            LabeledExample::new(featurize(&s), label, prov).expect("positives are EV")
        })
        .collect()
}
