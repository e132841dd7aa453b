use sha2::{Digest, Sha256};

use super::{EmbedKind, EmbedRequest, EmbedResponse};

/// Deterministic stand-in embedding for a request the fixtures don't cover.
///
/// The rule only needs SHA-256, so other implementations can reproduce it
/// bit for bit:
///
/// 1. `d = sha256(kind ":" payload)` where `kind` is `image` or `text` and
///    `payload` is the request payload string (base64 for images).
/// 2. For `i` in `0..dim`: `b = sha256(seed_u64_le || d || i_u32_le)`,
///    `x = u64_le(b[0..8]) >> 11`, component `c_i = 2 * x / 2^53 - 1`.
/// 3. Divide every component by `sqrt(sum c_i^2)` (summed in index order).
pub fn mock_embedding(seed: u64, request: &EmbedRequest, space_tag: &str, dim: usize) -> EmbedResponse {
    let kind = match request.kind {
        EmbedKind::Image => "image",
        EmbedKind::Text => "text",
    };
    let digest = Sha256::digest(format!("{kind}:{}", request.payload).as_bytes());

    let mut values: Vec<f64> = (0..dim as u32)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(digest);
            h.update(i.to_le_bytes());
            let block = h.finalize();
            let x = u64::from_le_bytes(block[..8].try_into().expect("8 bytes")) >> 11;
            2.0 * (x as f64 / (1u64 << 53) as f64) - 1.0
        })
        .collect();

    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    } else if let Some(first) = values.first_mut() {
        *first = 1.0;
    }

    EmbedResponse { space_tag: space_tag.to_owned(), dim, values }
}
