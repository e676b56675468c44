//! Minimal edit distance by exhaustive search over edit scripts.

use std::collections::{HashMap, VecDeque};

/// Every string over `alphabet` with length at most `max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let next: Vec<String> = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |&c| format!("{s}{c}")))
            .collect();
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Strings one insertion, deletion or substitution away from `s`, staying
/// within `max_len` characters.
fn neighbours(s: &[char], alphabet: &[char], max_len: usize) -> Vec<Vec<char>> {
    let mut out = Vec::new();
    for i in 0..s.len() {
        let mut d = s.to_vec();
        d.remove(i);
        out.push(d);
        for &c in alphabet {
            if c != s[i] {
                let mut t = s.to_vec();
                t[i] = c;
                out.push(t);
            }
        }
    }
    if s.len() < max_len {
        for i in 0..=s.len() {
            for &c in alphabet {
                let mut t = s.to_vec();
                t.insert(i, c);
                out.push(t);
            }
        }
    }
    out
}

/// Distances from `source` to every string reachable with single-character
/// edits over `alphabet`, never exceeding `max_len` characters on the way.
///
/// A shortest edit script between strings no longer than `max_len` never
/// needs a longer intermediate, so the bound does not change distances
/// between such strings.
pub fn distances_from(source: &str, alphabet: &[char], max_len: usize) -> HashMap<String, usize> {
    let mut dist = HashMap::new();
    dist.insert(source.to_owned(), 0);
    let mut queue = VecDeque::from([source.chars().collect::<Vec<_>>()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s.iter().collect::<String>()];
        for n in neighbours(&s, alphabet, max_len) {
            let key: String = n.iter().collect();
            if !dist.contains_key(&key) {
                dist.insert(key, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Minimal number of single-character edits turning `a` into `b`.
pub fn brute_force_distance(a: &str, b: &str) -> usize {
    let mut alphabet: Vec<char> = a.chars().chain(b.chars()).collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let max_len = a.chars().count().max(b.chars().count());
    distances_from(a, &alphabet, max_len)[b]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_all_binary_strings() {
        assert_eq!(all_strings(&['a', 'b'], 5).len(), 63);
    }

    #[test]
    fn small_cases() {
        assert_eq!(brute_force_distance("QIN", "KIN"), 1);
        assert_eq!(brute_force_distance("ABCDE", "A"), 4);
        assert_eq!(brute_force_distance("", "ab"), 2);
        assert_eq!(brute_force_distance("ab", "ba"), 2);
    }
}
