/// Dimension of the stub embedding.
pub const STUB_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Character trigrams of `text` padded with `^^` and `$$`.
pub fn trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = "^^".chars().chain(text.chars()).chain("$$".chars()).collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn bucket(trigram: &str) -> usize {
    (fnv1a64(trigram.as_bytes()) % STUB_DIM as u64) as usize
}

/// Deterministic bag-of-trigrams embedding, L2-normalized. The empty string
/// maps to the uniform vector.
pub fn stub_embed(text: &str) -> Vec<f32> {
    if text.is_empty() {
        return vec![1.0 / (STUB_DIM as f32).sqrt(); STUB_DIM];
    }
    let mut v = vec![0f32; STUB_DIM];
    for t in trigrams(text) {
        v[bucket(&t)] += 1.0;
    }
    normalize(&mut v);
    v
}

pub fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
