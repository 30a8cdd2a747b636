use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::balanced_labels;
use crate::bagcore::{Bag, BagDataset, Task};
use crate::error::{MilError, Result};
use crate::rng::{seeded, MilRng};

pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpiSpec {
    pub num_bags: usize,
    #[serde(default = "defaults::seq_len")]
    pub seq_len: usize,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default = "defaults::stride")]
    pub stride: usize,
    #[serde(default = "defaults::motif1")]
    pub motif1: String,
    #[serde(default = "defaults::motif2")]
    pub motif2: String,
    #[serde(default = "defaults::alphabet")]
    pub alphabet: String,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn seq_len() -> usize {
        50
    }
    pub fn window() -> usize {
        10
    }
    pub fn stride() -> usize {
        5
    }
    pub fn motif1() -> String {
        "KLMNPQR".into()
    }
    pub fn motif2() -> String {
        "STVWYAC".into()
    }
    pub fn alphabet() -> String {
        super::AMINO_ACIDS.into()
    }
}

impl PpiSpec {
    pub fn new(num_bags: usize, seed: u64) -> Self {
        PpiSpec {
            num_bags,
            seq_len: defaults::seq_len(),
            window: defaults::window(),
            stride: defaults::stride(),
            motif1: defaults::motif1(),
            motif2: defaults::motif2(),
            alphabet: defaults::alphabet(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window > self.seq_len {
            return Err(MilError::config("need 1 <= window <= seq_len"));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(MilError::config("need 1 <= stride <= window"));
        }
        for motif in [&self.motif1, &self.motif2] {
            if motif.is_empty() || motif.len() > self.window {
                return Err(MilError::config(format!(
                    "motif {motif:?} must be non-empty and no longer than the window"
                )));
            }
            if let Some(c) = motif.chars().find(|c| !self.alphabet.contains(*c)) {
                return Err(MilError::config(format!("motif letter {c:?} is not in the alphabet")));
            }
        }
        if self.num_bags == 0 || !self.num_bags.is_multiple_of(2) {
            return Err(MilError::config("num_bags must be even and positive"));
        }
        let mut seen = self.alphabet.chars().collect::<Vec<_>>();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.alphabet.chars().count() || !self.alphabet.is_ascii() {
            return Err(MilError::config("alphabet must be distinct ASCII letters"));
        }
        Ok(())
    }

    pub fn instances_per_bag(&self) -> usize {
        window_offsets(self.seq_len, self.window, self.stride).len().pow(2)
    }
}

/// Window start positions `0, stride, 2*stride, ...` that fit in the sequence.
pub fn window_offsets(seq_len: usize, window: usize, stride: usize) -> Vec<usize> {
    if window > seq_len || stride == 0 {
        return Vec::new();
    }
    (0..=seq_len - window).step_by(stride).collect()
}

/// Concatenated one-hot encoding of two equal-length windows.
pub fn encode_window_pair(w1: &str, w2: &str, alphabet: &str) -> Result<Vec<f64>> {
    if w1.len() != w2.len() {
        return Err(MilError::data("windows must have equal length"));
    }
    let k = alphabet.len();
    let mut out = vec![0.0; 2 * w1.len() * k];
    for (block, w) in [w1, w2].into_iter().enumerate() {
        for (p, c) in w.chars().enumerate() {
            let idx = alphabet
                .find(c)
                .ok_or_else(|| MilError::data(format!("letter {c:?} is not in the alphabet")))?;
            out[block * w1.len() * k + p * k + idx] = 1.0;
        }
    }
    Ok(out)
}

fn random_sequence(len: usize, letters: &[u8], rng: &mut MilRng) -> Vec<u8> {
    (0..len).map(|_| *letters.choose(rng).expect("alphabet")).collect()
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// A random sequence free of every motif in `avoid`.
fn clean_sequence(len: usize, letters: &[u8], avoid: &[&[u8]], rng: &mut MilRng) -> Vec<u8> {
    loop {
        let s = random_sequence(len, letters, rng);
        if !avoid.iter().any(|m| contains(&s, m)) {
            return s;
        }
    }
}

/// Start positions at which `motif_len` letters fit entirely inside some window.
fn insertion_offsets(offsets: &[usize], window: usize, motif_len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = offsets.iter().flat_map(|&w| w..=w + window - motif_len).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Protein-pair bags: every instance pairs a window of protein 1 with a window
/// of protein 2. Positive pairs carry motif 1 in protein 1 and motif 2 in
/// protein 2; negatives carry neither.
pub fn generate_ppi_bags(spec: &PpiSpec) -> Result<BagDataset> {
    spec.validate()?;
    let letters = spec.alphabet.as_bytes();
    let m1 = spec.motif1.as_bytes();
    let m2 = spec.motif2.as_bytes();
    let offsets = window_offsets(spec.seq_len, spec.window, spec.stride);
    let slots1 = insertion_offsets(&offsets, spec.window, m1.len());
    let slots2 = insertion_offsets(&offsets, spec.window, m2.len());
    let mut rng = seeded(spec.seed);
    let labels = balanced_labels(spec.num_bags, &mut rng);
    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut masks = Vec::with_capacity(spec.num_bags);
    for &y in &labels {
        let mut p1 = clean_sequence(spec.seq_len, letters, &[m1, m2], &mut rng);
        let mut p2 = clean_sequence(spec.seq_len, letters, &[m1, m2], &mut rng);
        if y == 1.0 {
            let at = *slots1.choose(&mut rng).expect("slot");
            p1[at..at + m1.len()].copy_from_slice(m1);
            let at = *slots2.choose(&mut rng).expect("slot");
            p2[at..at + m2.len()].copy_from_slice(m2);
        }
        let mut instances = Vec::with_capacity(offsets.len().pow(2));
        let mut mask = Vec::with_capacity(offsets.len().pow(2));
        for &a in &offsets {
            let w1 = &p1[a..a + spec.window];
            for &b in &offsets {
                let w2 = &p2[b..b + spec.window];
                let s1 = std::str::from_utf8(w1).expect("ascii");
                let s2 = std::str::from_utf8(w2).expect("ascii");
                instances.push(encode_window_pair(s1, s2, &spec.alphabet)?);
                mask.push(contains(w1, m1) && contains(w2, m2));
            }
        }
        bags.push(Bag::new(instances)?);
        masks.push(mask);
    }
    BagDataset::new(bags, labels, Task::Classification)?.with_key_masks(masks)
}
