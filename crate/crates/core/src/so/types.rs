//! Monadic back-and-forth types.
//!
//! A rank-0 type is the truth table of the atomic sentences over the
//! constants. A rank-(r+1) type is the pair of sets of rank-r types reached
//! by naming one more element, respectively by adding one more unary
//! relation. Two structures share a rank-r type exactly when they agree on
//! every MSO sentence of quantifier rank at most r.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use rustc_hash::{FxHashMap, FxHashSet};

use super::SoError;
use crate::structures::{forget_constant, glue, pad, Elem, Structure};

/// Spec default domain cap for types of rank 2 and above.
pub const DEFAULT_TYPE_DOMAIN_CAP: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeValue {
    Atoms(Vec<u64>),
    Node(BTreeSet<TypeValue>, BTreeSet<TypeValue>),
}

impl fmt::Display for TypeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeValue::Atoms(bits) => {
                f.write_str("[")?;
                for (i, w) in bits.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{w:x}")?;
                }
                f.write_str("]")
            }
            TypeValue::Node(a, b) => {
                f.write_str("{{")?;
                for (i, t) in a.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("},{")?;
                for (i, t) in b.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("}}")
            }
        }
    }
}

/// Rank-r type of a structure over a fixed signature.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MsoType {
    pub rank: usize,
    pub relations: Vec<(String, usize)>,
    pub constants: Vec<String>,
    pub value: Arc<TypeValue>,
}

impl fmt::Display for MsoType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rels: Vec<String> = self.relations.iter().map(|(r, a)| format!("{r}/{a}")).collect();
        write!(f, "r{}[{}][{}]{}", self.rank, rels.join(","), self.constants.join(","), self.value)
    }
}

/// Largest evaluation domain accepted at rank `r`.
fn domain_cap(r: usize) -> usize {
    match r {
        0 | 1 => 64,
        2 => 10,
        _ => DEFAULT_TYPE_DOMAIN_CAP,
    }
}

pub fn mso_type(s: &Structure, domain: &BTreeSet<Elem>, r: usize) -> Result<MsoType, SoError> {
    mso_type_with_cap(s, domain, r, domain_cap(r))
}

pub fn mso_type_with_cap(s: &Structure, domain: &BTreeSet<Elem>, r: usize, cap: usize) -> Result<MsoType, SoError> {
    if !s.domain().is_subset(domain) {
        return Err(SoError::DomainTooSmall);
    }
    if domain.len() > cap.min(64) {
        return Err(SoError::TooLarge(format!("type of rank {r} over {} elements (cap {cap})", domain.len())));
    }
    let mut relations: Vec<(String, usize)> = s.signature().relations().to_vec();
    relations.sort();
    let mut constants: Vec<String> = s.signature().constants().to_vec();
    constants.sort();
    let dom: Vec<Elem> = domain.iter().copied().collect();
    let index: FxHashMap<Elem, usize> = dom.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut consts = Vec::new();
    for c in &constants {
        let v = s.constant(c).ok_or_else(|| SoError::UnknownConstant(c.clone()))?;
        consts.push(index[&v]);
    }
    let rels: Vec<(usize, FxHashSet<Vec<usize>>)> = relations
        .iter()
        .map(|(r, a)| (*a, s.tuples(r).map(|t| t.iter().map(|e| index[e]).collect()).collect()))
        .collect();
    let ctx = Ctx { n: dom.len(), rels };
    let value = ctx.ty(r, &mut consts, &mut Vec::new());
    Ok(MsoType { rank: r, relations, constants, value: Arc::new(value) })
}

struct Ctx {
    n: usize,
    rels: Vec<(usize, FxHashSet<Vec<usize>>)>,
}

impl Ctx {
    fn atoms(&self, consts: &[usize], sets: &[u64]) -> Vec<u64> {
        let mut bits = Vec::new();
        let mut word = 0u64;
        let mut k = 0;
        let mut push = |b: bool, bits: &mut Vec<u64>| {
            if b {
                word |= 1 << k;
            }
            k += 1;
            if k == 64 {
                bits.push(word);
                word = 0;
                k = 0;
            }
        };
        for i in 0..consts.len() {
            for j in i + 1..consts.len() {
                push(consts[i] == consts[j], &mut bits);
            }
        }
        let m = consts.len();
        for (arity, tuples) in &self.rels {
            let count = m.pow(*arity as u32);
            let mut t = vec![0usize; *arity];
            for code in 0..count {
                let mut c = code;
                for slot in t.iter_mut().rev() {
                    *slot = consts[c % m];
                    c /= m;
                }
                push(tuples.contains(&t), &mut bits);
            }
        }
        for set in sets {
            for &c in consts {
                push(set >> c & 1 == 1, &mut bits);
            }
        }
        if k > 0 {
            bits.push(word);
        }
        bits
    }

    fn ty(&self, r: usize, consts: &mut Vec<usize>, sets: &mut Vec<u64>) -> TypeValue {
        if r == 0 {
            return TypeValue::Atoms(self.atoms(consts, sets));
        }
        let mut fo = BTreeSet::new();
        for a in 0..self.n {
            consts.push(a);
            fo.insert(self.ty(r - 1, consts, sets));
            consts.pop();
        }
        let mut so = BTreeSet::new();
        if r == 1 {
            // Only membership of named elements is visible at rank 0.
            let named: Vec<usize> = consts.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            for mask in 0u64..(1u64 << named.len()) {
                let set = named.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).fold(0u64, |acc, (_, &e)| acc | 1 << e);
                sets.push(set);
                so.insert(self.ty(0, consts, sets));
                sets.pop();
            }
        } else {
            let full = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
            let mut set = 0u64;
            loop {
                sets.push(set);
                so.insert(self.ty(r - 1, consts, sets));
                sets.pop();
                if set == full {
                    break;
                }
                set += 1;
            }
        }
        TypeValue::Node(fo, so)
    }
}

/// Representative structures of computed types.
#[derive(Default)]
pub struct Registry {
    reps: Mutex<FxHashMap<MsoType, Structure>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide registry.
    pub fn global() -> &'static Registry {
        static GLOBAL: OnceLock<Registry> = OnceLock::new();
        GLOBAL.get_or_init(Registry::new)
    }

    /// Records `s` as a representative of `t`, keeping an existing one.
    pub fn register(&self, t: &MsoType, s: &Structure) {
        self.reps.lock().expect("registry lock").entry(t.clone()).or_insert_with(|| s.clone());
    }

    pub fn representative(&self, t: &MsoType) -> Option<Structure> {
        self.reps.lock().expect("registry lock").get(t).cloned()
    }

    pub fn len(&self) -> usize {
        self.reps.lock().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all registered types and their representatives.
    pub fn entries(&self) -> BTreeMap<String, Structure> {
        self.reps.lock().expect("registry lock").iter().map(|(t, s)| (t.to_string(), s.clone())).collect()
    }
}

/// Rank-r type of `s` evaluated over `Dom(s)` plus `2^r` padding elements;
/// `s` is registered as a representative.
pub fn padded_type(s: &Structure, r: usize, registry: &Registry) -> Result<MsoType, SoError> {
    let t = mso_type(s, &pad(s, 1 << r).domain, r)?;
    registry.register(&t, s);
    Ok(t)
}

/// Type of the glue of representatives of `t1` and `t2`.
pub fn abstract_glue(t1: &MsoType, t2: &MsoType, registry: &Registry) -> Result<MsoType, SoError> {
    if t1.rank != t2.rank {
        return Err(SoError::RankMismatch { expected: t1.rank, got: t2.rank });
    }
    let a = registry.representative(t1).ok_or(SoError::UnregisteredType)?;
    let b = registry.representative(t2).ok_or(SoError::UnregisteredType)?;
    padded_type(&glue(&a, &b)?, t1.rank, registry)
}

/// Type of a representative of `t` with constant `c` forgotten.
pub fn abstract_forget(t: &MsoType, c: &str, registry: &Registry) -> Result<MsoType, SoError> {
    let a = registry.representative(t).ok_or(SoError::UnregisteredType)?;
    if !a.signature().has_constant(c) {
        return Err(SoError::UnknownConstant(c.to_string()));
    }
    padded_type(&forget_constant(&a, c)?, t.rank, registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::word_to_structure;
    use crate::so::{eval_so, parse_so};
    use crate::structures::{pad, Store};

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    #[test]
    fn rank_zero_sees_constant_equality() {
        let eq = st("rel R 1\nconst c1 1\nconst c2 1\ntuple R 1");
        let ne = st("rel R 1\nconst c1 1\nconst c2 2\ntuple R 1");
        let t1 = mso_type(&eq, &eq.domain(), 0).unwrap();
        let t2 = mso_type(&ne, &ne.domain(), 0).unwrap();
        assert_ne!(t1, t2);
    }

    #[test]
    fn isomorphic_structures_share_types() {
        let a = st("rel E 2\ntuple E 1 2\ntuple E 2 3");
        let b = st("rel E 2\ntuple E 7 5\ntuple E 5 9");
        for r in 0..=2 {
            assert_eq!(mso_type(&a, &pad(&a, 1 << r).domain, r).unwrap(), mso_type(&b, &pad(&b, 1 << r).domain, r).unwrap());
        }
    }

    #[test]
    fn one_letter_words_differ_at_rank_one() {
        let a = word_to_structure("a").unwrap();
        let b = word_to_structure("b").unwrap();
        let ta = mso_type(&a, &pad(&a, 2).domain, 1).unwrap();
        let tb = mso_type(&b, &pad(&b, 2).domain, 1).unwrap();
        assert_ne!(ta, tb);
        let f = parse_so("P_a(b)").unwrap();
        assert_ne!(
            eval_so(&a, &a.domain(), &Store::new(), &f).unwrap(),
            eval_so(&b, &b.domain(), &Store::new(), &f).unwrap()
        );
    }

    #[test]
    fn caps_are_enforced() {
        let s = crate::generators::clique_structure(3);
        let big = pad(&s, 20).domain;
        assert!(matches!(mso_type(&s, &big, 2), Err(SoError::TooLarge(_))));
        assert!(mso_type(&s, &big, 1).is_ok());
    }

    #[test]
    fn abstract_operations() {
        let reg = Registry::new();
        let a = st("rel E 2\nconst c1 1\ntuple E 1 2");
        let b = st("rel E 2\nconst c1 5\ntuple E 6 5");
        let ta = padded_type(&a, 1, &reg).unwrap();
        let tb = padded_type(&b, 1, &reg).unwrap();
        let ab = abstract_glue(&ta, &tb, &reg).unwrap();
        let ba = abstract_glue(&tb, &ta, &reg).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab, padded_type(&glue(&a, &b).unwrap(), 1, &Registry::new()).unwrap());
        let f = abstract_forget(&ab, "c1", &reg).unwrap();
        assert!(f.constants.is_empty());
        let unknown = padded_type(&a, 0, &Registry::new()).unwrap();
        assert_eq!(abstract_forget(&unknown, "c1", &reg), Err(SoError::UnregisteredType));
        assert!(matches!(abstract_glue(&ta, &unknown, &reg), Err(SoError::RankMismatch { .. })));
    }
}
