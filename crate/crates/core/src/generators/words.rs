use crate::structures::{Elem, Signature, Structure};

use super::GeneratorError;

/// The word structure σ_w: positions `1..=n` with `V`, successor `E`,
/// letter relations `P_α` and constants `b`, `e` for the ends.
pub fn word_to_structure(w: &str) -> Result<Structure, GeneratorError> {
    if w.is_empty() {
        return Err(GeneratorError::EmptyWord);
    }
    let letters: Vec<char> = w.chars().collect();
    let mut sig = Signature::with_relations(&[("V", 1), ("E", 2), ("P_a", 1), ("P_b", 1)]);
    for &c in &letters {
        let rel = format!("P_{c}");
        if !sig.has_relation(&rel) {
            sig.add_relation(&rel, 1)?;
        }
    }
    sig.add_constant("b")?;
    sig.add_constant("e")?;
    let mut s = Structure::new(sig);
    let n = letters.len() as Elem;
    for (i, &c) in letters.iter().enumerate() {
        let p = i as Elem + 1;
        s.insert("V", vec![p])?;
        s.insert(&format!("P_{c}"), vec![p])?;
        if p < n {
            s.insert("E", vec![p, p + 1])?;
        }
    }
    s.set_constant("b", 1)?;
    s.set_constant("e", n)?;
    Ok(s)
}

/// K_n over `V/1`, `E/2` with both orientations of every edge.
pub fn clique_structure(n: usize) -> Structure {
    let mut s = Structure::new(Signature::with_relations(&[("V", 1), ("E", 2)]));
    let n = n as Elem;
    for a in 1..=n {
        s.insert("V", vec![a]).expect("declared");
        for b in 1..=n {
            if a != b {
                s.insert("E", vec![a, b]).expect("declared");
            }
        }
    }
    s
}

/// All words over `alphabet` with length in `1..=max_len`, shortest first.
pub fn words_up_to(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for &c in alphabet {
                let mut v = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ab_structure() {
        let s = word_to_structure("ab").unwrap();
        assert!(s.contains("V", &[1]) && s.contains("V", &[2]));
        assert!(s.contains("E", &[1, 2]));
        assert!(s.contains("P_a", &[1]) && s.contains("P_b", &[2]));
        assert_eq!(s.num_tuples(), 5);
        assert_eq!((s.constant("b"), s.constant("e")), (Some(1), Some(2)));
    }

    #[test]
    fn single_letter() {
        let s = word_to_structure("a").unwrap();
        assert_eq!(s.tuples("E").count(), 0);
        assert_eq!((s.constant("b"), s.constant("e")), (Some(1), Some(1)));
        assert_eq!(word_to_structure(""), Err(GeneratorError::EmptyWord));
    }

    #[test]
    fn cliques() {
        let k2 = clique_structure(2);
        assert_eq!(k2.all_tuples().len(), 4);
        assert!(k2.contains("E", &[1, 2]) && k2.contains("E", &[2, 1]));
        assert_eq!(clique_structure(4).tuples("E").count(), 12);
    }

    #[test]
    fn word_enumeration() {
        assert_eq!(words_up_to(&['a', 'b'], 2), vec!["a", "b", "aa", "ab", "ba", "bb"]);
    }
}
