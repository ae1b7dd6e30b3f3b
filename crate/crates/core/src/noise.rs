//! Character-level typo model: per-character substitution, deletion and
//! adjacent swap at a configurable rate.

use rand::Rng;

use crate::alphabet;

/// Applies typos to `text`. Each character independently mutates with
/// probability `rate`; the mutation kind is drawn uniformly. Whitespace is
/// left untouched so token boundaries survive, and a deletion is skipped
/// when it would empty a token.
pub fn inject_typos<R: Rng>(text: &str, rate: f64, rng: &mut R) -> String {
    if rate <= 0.0 {
        return text.to_string();
    }
    let letters = alphabet::letters();
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<char> = Vec::with_capacity(chars.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || !rng.gen_bool(rate.min(1.0)) {
            out.push(c);
            i += 1;
            continue;
        }
        match rng.gen_range(0..3u8) {
            // substitution
            0 => {
                let mut sub = letters[rng.gen_range(0..letters.len())];
                if sub == c {
                    sub = letters[(letters.iter().position(|&l| l == sub).unwrap() + 1) % letters.len()];
                }
                out.push(sub);
                i += 1;
            }
            // deletion, unless the token is a single char
            1 => {
                let prev_ws = i == 0 || chars[i - 1].is_whitespace();
                let next_ws = i + 1 >= chars.len() || chars[i + 1].is_whitespace();
                if prev_ws && next_ws {
                    out.push(c);
                }
                i += 1;
            }
            // adjacent swap within the same token
            _ => {
                if i + 1 < chars.len() && !chars[i + 1].is_whitespace() {
                    out.push(chars[i + 1]);
                    out.push(c);
                    i += 2;
                } else {
                    out.push(c);
                    i += 1;
                }
            }
        }
    }
    out.into_iter().collect()
}
