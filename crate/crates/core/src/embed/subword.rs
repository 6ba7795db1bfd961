/// Character n-grams of the boundary-marked form `<word>` with lengths in
/// `n_min..=n_max`, ordered by start position then length. The bare markers
/// `<` and `>` are never emitted on their own.
pub fn ngrams(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let marked: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let len = marked.len();
    let mut out = Vec::new();
    for start in 0..len {
        for n in n_min.max(1)..=n_max {
            if start + n > len {
                break;
            }
            if n == 1 && (start == 0 || start == len - 1) {
                continue;
            }
            out.push(marked[start..start + n].iter().collect());
        }
    }
    out
}

/// 32-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a32(s: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in s.as_bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

pub fn bucket(ngram: &str, buckets: u32) -> u32 {
    fnv1a32(ngram) % buckets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_cases() {
        assert_eq!(ngrams("ab", 3, 3), vec!["<ab", "ab>"]);
        assert_eq!(ngrams("a", 3, 3), vec!["<a>"]);
        assert_eq!(ngrams("ab", 1, 2), vec!["<a", "a", "ab", "b", "b>"]);
    }

    #[test]
    fn lengths_within_range() {
        for w in ["nyaman", "kamar", "é", "lengket-lengketnya"] {
            for g in ngrams(w, 3, 6) {
                let n = g.chars().count();
                assert!((3..=6).contains(&n), "{g}");
            }
        }
    }

    #[test]
    fn multibyte_characters_are_units() {
        assert_eq!(ngrams("éa", 3, 3), vec!["<éa", "éa>"]);
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 32-bit test vectors.
        assert_eq!(fnv1a32(""), 0x811c9dc5);
        assert_eq!(fnv1a32("a"), 0xe40c292c);
        assert_eq!(fnv1a32("foobar"), 0xbf9cf968);
    }
}
