//! Signatures, finite structures over natural-number elements, stores, and the
//! structure algebra (composition, glue, forget, D-extensions, port encoding,
//! padding).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element of the countable universe.
pub type Elem = u32;

/// Name of the unary gadget relation used by D-extensions.
pub const D_REL: &str = "D";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("relation {0} has conflicting arities")]
    ArityConflict(String),
    #[error("tuple for {rel} has length {got}, expected {expected}")]
    ArityMismatch { rel: String, expected: usize, got: usize },
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("unknown constant {0}")]
    UnknownConstant(String),
    #[error("duplicate declaration of {0}")]
    Duplicate(String),
    #[error("tuple {rel}{tuple:?} occurs in both structures")]
    NotDisjoint { rel: String, tuple: Vec<Elem> },
    #[error("constant {0} is interpreted differently")]
    Incompatible(String),
    #[error("signatures differ")]
    SignatureMismatch,
    #[error("unbound variable {0}")]
    UnboundVariable(String),
}

/// Ordered relation symbols with arities plus ordered constant symbols.
///
/// Equality ignores declaration order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Signature {
    relations: Vec<(String, usize)>,
    constants: Vec<String>,
}

impl PartialEq for Signature {
    fn eq(&self, other: &Self) -> bool {
        self.relation_set() == other.relation_set() && self.constant_set() == other.constant_set()
    }
}

impl Eq for Signature {}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_relations(rels: &[(&str, usize)]) -> Self {
        let mut sig = Self::new();
        for (name, arity) in rels {
            sig.add_relation(name, *arity).expect("distinct relation names");
        }
        sig
    }

    pub fn relations(&self) -> &[(String, usize)] {
        &self.relations
    }

    pub fn constants(&self) -> &[String] {
        &self.constants
    }

    pub fn arity(&self, rel: &str) -> Option<usize> {
        self.relations.iter().find(|(n, _)| n == rel).map(|(_, a)| *a)
    }

    pub fn has_relation(&self, rel: &str) -> bool {
        self.arity(rel).is_some()
    }

    pub fn has_constant(&self, c: &str) -> bool {
        self.constants.iter().any(|x| x == c)
    }

    fn relation_set(&self) -> BTreeSet<(&str, usize)> {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a)).collect()
    }

    fn constant_set(&self) -> BTreeSet<&str> {
        self.constants.iter().map(String::as_str).collect()
    }

    /// Adds a relation; re-adding with the same arity is a no-op.
    pub fn add_relation(&mut self, name: &str, arity: usize) -> Result<(), StructureError> {
        match self.arity(name) {
            Some(a) if a == arity => Ok(()),
            Some(_) => Err(StructureError::ArityConflict(name.to_string())),
            None => {
                if self.has_constant(name) || arity == 0 {
                    return Err(StructureError::Duplicate(name.to_string()));
                }
                self.relations.push((name.to_string(), arity));
                Ok(())
            }
        }
    }

    pub fn add_constant(&mut self, name: &str) -> Result<(), StructureError> {
        if self.has_relation(name) {
            return Err(StructureError::Duplicate(name.to_string()));
        }
        if !self.has_constant(name) {
            self.constants.push(name.to_string());
        }
        Ok(())
    }

    pub fn remove_constant(&mut self, name: &str) {
        self.constants.retain(|c| c != name);
    }

    pub fn remove_relation(&mut self, name: &str) {
        self.relations.retain(|(r, _)| r != name);
    }

    /// Union of two signatures; fails on conflicting arities.
    pub fn union(&self, other: &Signature) -> Result<Signature, StructureError> {
        let mut out = self.clone();
        for (r, a) in &other.relations {
            out.add_relation(r, *a)?;
        }
        for c in &other.constants {
            out.add_constant(c)?;
        }
        Ok(out)
    }
}

/// A finite structure: relation interpretations and constant values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    signature: Signature,
    tuples: BTreeMap<String, BTreeSet<Vec<Elem>>>,
    constants: BTreeMap<String, Elem>,
}

impl Structure {
    /// Structure without tuples. Every constant of `sig` must be assigned
    /// with [`Structure::set_constant`] before use.
    pub fn new(sig: Signature) -> Self {
        let tuples = sig.relations.iter().map(|(r, _)| (r.clone(), BTreeSet::new())).collect();
        Structure { signature: sig, tuples, constants: BTreeMap::new() }
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn declare_relation(&mut self, rel: &str, arity: usize) -> Result<(), StructureError> {
        self.signature.add_relation(rel, arity)?;
        self.tuples.entry(rel.to_string()).or_default();
        Ok(())
    }

    /// Inserts a tuple; returns whether it was new.
    pub fn insert(&mut self, rel: &str, tuple: Vec<Elem>) -> Result<bool, StructureError> {
        let arity = self
            .signature
            .arity(rel)
            .ok_or_else(|| StructureError::UnknownRelation(rel.to_string()))?;
        if tuple.len() != arity {
            return Err(StructureError::ArityMismatch { rel: rel.to_string(), expected: arity, got: tuple.len() });
        }
        Ok(self.tuples.entry(rel.to_string()).or_default().insert(tuple))
    }

    pub fn remove(&mut self, rel: &str, tuple: &[Elem]) -> bool {
        self.tuples.get_mut(rel).is_some_and(|s| s.remove(tuple))
    }

    /// Assigns a constant, declaring it if necessary.
    pub fn set_constant(&mut self, name: &str, value: Elem) -> Result<(), StructureError> {
        self.signature.add_constant(name)?;
        self.constants.insert(name.to_string(), value);
        Ok(())
    }

    pub fn constant(&self, name: &str) -> Option<Elem> {
        self.constants.get(name).copied()
    }

    pub fn constant_values(&self) -> &BTreeMap<String, Elem> {
        &self.constants
    }

    pub fn tuples(&self, rel: &str) -> impl Iterator<Item = &Vec<Elem>> {
        self.tuples.get(rel).into_iter().flatten()
    }

    pub fn contains(&self, rel: &str, tuple: &[Elem]) -> bool {
        self.tuples.get(rel).is_some_and(|s| s.contains(tuple))
    }

    /// All tuples, in signature order then tuple order.
    pub fn all_tuples(&self) -> Vec<(String, Vec<Elem>)> {
        let mut out = Vec::new();
        for (r, _) in &self.signature.relations {
            for t in self.tuples(r) {
                out.push((r.clone(), t.clone()));
            }
        }
        out
    }

    pub fn num_tuples(&self) -> usize {
        self.tuples.values().map(BTreeSet::len).sum()
    }

    /// Rel(σ): elements occurring in some tuple.
    pub fn rel_elements(&self) -> BTreeSet<Elem> {
        self.tuples.values().flatten().flatten().copied().collect()
    }

    /// Dom(σ): Rel(σ) plus constant values.
    pub fn domain(&self) -> BTreeSet<Elem> {
        let mut d = self.rel_elements();
        d.extend(self.constants.values().copied());
        d
    }

    /// Checks that every declared constant has a value.
    pub fn validate(&self) -> Result<(), StructureError> {
        for c in &self.signature.constants {
            if !self.constants.contains_key(c) {
                return Err(StructureError::UnknownConstant(c.clone()));
            }
        }
        Ok(())
    }

    /// Applies an element renaming.
    pub fn relabel(&self, f: impl Fn(Elem) -> Elem) -> Structure {
        let mut out = Structure::new(self.signature.clone());
        for (r, set) in &self.tuples {
            let s = out.tuples.entry(r.clone()).or_default();
            for t in set {
                s.insert(t.iter().map(|&e| f(e)).collect());
            }
        }
        for (c, &v) in &self.constants {
            out.constants.insert(c.clone(), f(v));
        }
        out
    }

    /// The `m` smallest ids outside Dom(σ), ascending.
    pub fn fresh_ids(&self, m: usize) -> Vec<Elem> {
        fresh_ids_avoiding(&self.domain(), m)
    }

    pub fn parse(text: &str) -> Result<Structure, StructureError> {
        parse_structure(text)
    }
}

/// The `m` smallest non-negative ids not in `used`.
pub fn fresh_ids_avoiding(used: &BTreeSet<Elem>, m: usize) -> Vec<Elem> {
    let mut out = Vec::with_capacity(m);
    let mut next = 0;
    while out.len() < m {
        if !used.contains(&next) {
            out.push(next);
        }
        next += 1;
    }
    out
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, a) in &self.signature.relations {
            writeln!(f, "rel {r} {a}")?;
        }
        for c in &self.signature.constants {
            match self.constants.get(c) {
                Some(v) => writeln!(f, "const {c} {v}")?,
                None => writeln!(f, "# const {c} unassigned")?,
            }
        }
        for (r, t) in self.all_tuples() {
            write!(f, "tuple {r}")?;
            for e in t {
                write!(f, " {e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn parse_structure(text: &str) -> Result<Structure, StructureError> {
    let mut s = Structure::new(Signature::new());
    let err = |line: usize, msg: String| StructureError::Parse { line, msg };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let num = |w: &str| w.parse::<u64>().map_err(|_| err(line, format!("expected a number, found `{w}`")));
        match words[0] {
            "rel" => {
                if words.len() != 3 {
                    return Err(err(line, "expected `rel <name> <arity>`".into()));
                }
                let name = words[1];
                check_ident(name).map_err(|m| err(line, m))?;
                if s.signature.has_relation(name) || s.signature.has_constant(name) {
                    return Err(err(line, format!("duplicate declaration of {name}")));
                }
                let arity = num(words[2])? as usize;
                if arity == 0 {
                    return Err(err(line, "arity must be positive".into()));
                }
                s.declare_relation(name, arity).map_err(|e| err(line, e.to_string()))?;
            }
            "const" => {
                if words.len() != 3 {
                    return Err(err(line, "expected `const <name> <id>`".into()));
                }
                let name = words[1];
                check_ident(name).map_err(|m| err(line, m))?;
                if s.signature.has_relation(name) || s.signature.has_constant(name) {
                    return Err(err(line, format!("duplicate declaration of {name}")));
                }
                let v = to_elem(num(words[2])?).map_err(|m| err(line, m))?;
                s.set_constant(name, v).map_err(|e| err(line, e.to_string()))?;
            }
            "tuple" => {
                if words.len() < 2 {
                    return Err(err(line, "expected `tuple <rel> <id>...`".into()));
                }
                let rel = words[1];
                let mut t = Vec::new();
                for w in &words[2..] {
                    t.push(to_elem(num(w)?).map_err(|m| err(line, m))?);
                }
                let fresh = s.insert(rel, t).map_err(|e| err(line, e.to_string()))?;
                if !fresh {
                    return Err(err(line, format!("duplicate tuple for {rel}")));
                }
            }
            other => return Err(err(line, format!("unknown directive `{other}`"))),
        }
    }
    Ok(s)
}

fn to_elem(v: u64) -> Result<Elem, String> {
    Elem::try_from(v).map_err(|_| format!("element id {v} out of range"))
}

pub(crate) fn check_ident(name: &str) -> Result<(), String> {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return Err(format!("invalid identifier `{name}`")),
    }
    if chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'') {
        Ok(())
    } else {
        Err(format!("invalid identifier `{name}`"))
    }
}

/// First- and second-order variable assignment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub first_order: BTreeMap<String, Elem>,
    pub second_order: BTreeMap<String, (usize, BTreeSet<Vec<Elem>>)>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(&str, Elem)]) -> Self {
        let mut s = Store::new();
        for (x, v) in pairs {
            s.first_order.insert(x.to_string(), *v);
        }
        s
    }

    pub fn get(&self, x: &str) -> Option<Elem> {
        self.first_order.get(x).copied()
    }

    pub fn set(&mut self, x: &str, v: Elem) {
        self.first_order.insert(x.to_string(), v);
    }

    /// Adds a second-order binding, rejecting tuples of the wrong arity.
    pub fn set_relation(&mut self, x: &str, arity: usize, tuples: BTreeSet<Vec<Elem>>) -> Result<(), StructureError> {
        if let Some(t) = tuples.iter().find(|t| t.len() != arity) {
            return Err(StructureError::ArityMismatch { rel: x.to_string(), expected: arity, got: t.len() });
        }
        self.second_order.insert(x.to_string(), (arity, tuples));
        Ok(())
    }
}

/// σ1 • σ2: union of two tuple-disjoint structures over the same signature.
pub fn compose(a: &Structure, b: &Structure) -> Result<Structure, StructureError> {
    if a.signature != b.signature {
        return Err(StructureError::SignatureMismatch);
    }
    for c in &a.signature.constants {
        if a.constant(c) != b.constant(c) {
            return Err(StructureError::Incompatible(c.clone()));
        }
    }
    let mut out = a.clone();
    for (r, t) in b.all_tuples() {
        if a.contains(&r, &t) {
            return Err(StructureError::NotDisjoint { rel: r, tuple: t });
        }
        out.insert(&r, t)?;
    }
    Ok(out)
}

/// Disjoint union followed by fusion of shared constants.
///
/// Elements are renumbered from 0 by first occurrence: constants of `a`,
/// tuples of `a`, constants of `b`, tuples of `b`.
pub fn glue(a: &Structure, b: &Structure) -> Result<Structure, StructureError> {
    let sig = a.signature.union(&b.signature)?;
    // Tagged elements: (side, id) -> dense index.
    let mut index: BTreeMap<(u8, Elem), usize> = BTreeMap::new();
    let mut order: Vec<(u8, Elem)> = Vec::new();
    let mut touch = |side: u8, e: Elem, index: &mut BTreeMap<(u8, Elem), usize>| {
        *index.entry((side, e)).or_insert_with(|| {
            order.push((side, e));
            order.len() - 1
        })
    };
    for (side, s) in [(0u8, a), (1u8, b)] {
        for c in &s.signature.constants {
            let v = s.constant(c).ok_or_else(|| StructureError::UnknownConstant(c.clone()))?;
            touch(side, v, &mut index);
        }
        for (_, t) in s.all_tuples() {
            for e in t {
                touch(side, e, &mut index);
            }
        }
    }
    let mut uf = UnionFind::new(index.len());
    for c in &a.signature.constants {
        if let (Some(va), Some(vb)) = (a.constant(c), b.constant(c)) {
            uf.union(index[&(0, va)], index[&(1, vb)]);
        }
    }
    // Canonical class ids by first occurrence of any member.
    let mut class_id: BTreeMap<usize, Elem> = BTreeMap::new();
    let mut rename = vec![0 as Elem; index.len()];
    for (i, key) in order.iter().enumerate() {
        let root = uf.find(index[key]);
        let next = class_id.len() as Elem;
        rename[i] = *class_id.entry(root).or_insert(next);
    }
    let map = |side: u8, e: Elem| rename[index[&(side, e)]];
    let mut out = Structure::new(sig);
    for (side, s) in [(0u8, a), (1u8, b)] {
        for (r, t) in s.all_tuples() {
            out.insert(&r, t.iter().map(|&e| map(side, e)).collect())?;
        }
    }
    for c in &out.signature.constants.clone() {
        let v = match a.constant(c) {
            Some(v) => map(0, v),
            None => map(1, b.constant(c).expect("constant from union")),
        };
        out.constants.insert(c.clone(), v);
    }
    Ok(out)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Drops constant `c` from the signature; tuples are unchanged.
pub fn forget_constant(s: &Structure, c: &str) -> Result<Structure, StructureError> {
    if !s.signature.has_constant(c) {
        return Err(StructureError::UnknownConstant(c.to_string()));
    }
    let mut out = s.clone();
    out.signature.remove_constant(c);
    out.constants.remove(c);
    Ok(out)
}

/// Returns an isomorphism Dom(a) → Dom(b) if one exists.
pub fn find_isomorphism(a: &Structure, b: &Structure) -> Result<Option<BTreeMap<Elem, Elem>>, StructureError> {
    if a.signature != b.signature {
        return Err(StructureError::SignatureMismatch);
    }
    let (da, db) = (a.domain(), b.domain());
    if da.len() != db.len() || a.num_tuples() != b.num_tuples() {
        return Ok(None);
    }
    for (r, _) in &a.signature.relations {
        if a.tuples(r).count() != b.tuples(r).count() {
            return Ok(None);
        }
    }
    let inv_a = element_invariants(a);
    let inv_b = element_invariants(b);
    let mut map: BTreeMap<Elem, Elem> = BTreeMap::new();
    for c in &a.signature.constants {
        let (va, vb) = (a.constant(c).unwrap_or(0), b.constant(c).unwrap_or(0));
        match map.get(&va) {
            Some(&w) if w != vb => return Ok(None),
            _ => {
                map.insert(va, vb);
            }
        }
    }
    let images: BTreeSet<Elem> = map.values().copied().collect();
    if images.len() != map.len() {
        return Ok(None);
    }
    if map.iter().any(|(x, y)| inv_a.get(x) != inv_b.get(y)) {
        return Ok(None);
    }
    let mut rest: Vec<Elem> = da.iter().copied().filter(|e| !map.contains_key(e)).collect();
    // Most constrained (rarest invariant) elements first.
    rest.sort_by_key(|e| db.iter().filter(|f| inv_b.get(f) == inv_a.get(e)).count());
    let tuples_a = a.all_tuples();
    let mut used: BTreeSet<Elem> = images;
    if iso_search(b, &tuples_a, &inv_a, &inv_b, &db, &rest, 0, &mut map, &mut used) {
        Ok(Some(map))
    } else {
        Ok(None)
    }
}

pub fn is_isomorphic(a: &Structure, b: &Structure) -> Result<bool, StructureError> {
    Ok(find_isomorphism(a, b)?.is_some())
}

type Invariant = Vec<(String, usize, usize)>;

fn element_invariants(s: &Structure) -> BTreeMap<Elem, Invariant> {
    let mut counts: BTreeMap<Elem, BTreeMap<(String, usize), usize>> = BTreeMap::new();
    for e in s.domain() {
        counts.entry(e).or_default();
    }
    for (r, t) in s.all_tuples() {
        for (i, e) in t.iter().enumerate() {
            *counts.entry(*e).or_default().entry((r.clone(), i)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(e, m)| (e, m.into_iter().map(|((r, i), n)| (r, i, n)).collect()))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn iso_search(
    b: &Structure,
    tuples_a: &[(String, Vec<Elem>)],
    inv_a: &BTreeMap<Elem, Invariant>,
    inv_b: &BTreeMap<Elem, Invariant>,
    db: &BTreeSet<Elem>,
    rest: &[Elem],
    pos: usize,
    map: &mut BTreeMap<Elem, Elem>,
    used: &mut BTreeSet<Elem>,
) -> bool {
    // Every fully mapped tuple must have its image in b.
    for (r, t) in tuples_a {
        if let Some(img) = t.iter().map(|e| map.get(e).copied()).collect::<Option<Vec<_>>>() {
            if !b.contains(r, &img) {
                return false;
            }
        }
    }
    if pos == rest.len() {
        return true;
    }
    let e = rest[pos];
    for &f in db {
        if used.contains(&f) || inv_a.get(&e) != inv_b.get(&f) {
            continue;
        }
        map.insert(e, f);
        used.insert(f);
        if iso_search(b, tuples_a, inv_a, inv_b, db, rest, pos + 1, map, used) {
            return true;
        }
        map.remove(&e);
        used.remove(&f);
    }
    false
}

/// True iff `ext` is `base` plus a unary `D` covering Rel(base).
pub fn d_extension_check(base: &Structure, ext: &Structure) -> Result<bool, StructureError> {
    let mut expected = base.signature.clone();
    expected.add_relation(D_REL, 1)?;
    if ext.signature != expected || base.signature.has_relation(D_REL) {
        return Err(StructureError::SignatureMismatch);
    }
    for (r, _) in &base.signature.relations {
        if !base.tuples(r).eq(ext.tuples(r)) {
            return Ok(false);
        }
    }
    if base.constants != ext.constants {
        return Ok(false);
    }
    let covered: BTreeSet<Elem> = ext.tuples(D_REL).map(|t| t[0]).collect();
    Ok(base.rel_elements().is_subset(&covered))
}

/// Removes the unary `D` relation.
pub fn strip_d(s: &Structure) -> Result<Structure, StructureError> {
    if s.signature.arity(D_REL) != Some(1) {
        return Err(StructureError::UnknownRelation(D_REL.to_string()));
    }
    let mut out = s.clone();
    out.signature.remove_relation(D_REL);
    out.tuples.remove(D_REL);
    Ok(out)
}

/// Adds `D(u)` for every `u` in `elems`.
pub fn add_d(s: &Structure, elems: impl IntoIterator<Item = Elem>) -> Result<Structure, StructureError> {
    let mut out = s.clone();
    out.declare_relation(D_REL, 1)?;
    for e in elems {
        out.insert(D_REL, vec![e])?;
    }
    Ok(out)
}

/// Name of the i-th port constant (1-based) over a signature with `m` constants.
pub fn port_name(m: usize, i: usize) -> String {
    format!("c{}", m + i)
}

/// Adds port constants `c_{M+1..}` mapped to the store values of `vars`.
pub fn encode_ports(s: &Structure, store: &Store, vars: &[&str]) -> Result<Structure, StructureError> {
    let m = s.signature.constants.len();
    let mut out = s.clone();
    for (i, x) in vars.iter().enumerate() {
        let v = store.get(x).ok_or_else(|| StructureError::UnboundVariable(x.to_string()))?;
        let name = port_name(m, i + 1);
        if out.signature.has_constant(&name) || out.signature.has_relation(&name) {
            return Err(StructureError::Duplicate(name));
        }
        out.set_constant(&name, v)?;
    }
    Ok(out)
}

/// A structure with an explicit finite evaluation domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedStructure {
    pub structure: Structure,
    pub domain: BTreeSet<Elem>,
}

impl PaddedStructure {
    pub fn padding(&self) -> BTreeSet<Elem> {
        let dom = self.structure.domain();
        self.domain.difference(&dom).copied().collect()
    }
}

/// Dom(s) plus the `m` smallest ids outside it.
pub fn pad(s: &Structure, m: usize) -> PaddedStructure {
    let mut domain = s.domain();
    domain.extend(s.fresh_ids(m));
    PaddedStructure { structure: s.clone(), domain }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(text: &str) -> Structure {
        Structure::parse(text).unwrap()
    }

    #[test]
    fn compose_disjoint_union() {
        let a = st("rel R 2\ntuple R 1 2");
        let b = st("rel R 2\ntuple R 3 4");
        let c = compose(&a, &b).unwrap();
        assert_eq!(c.num_tuples(), 2);
        assert_eq!(compose(&a, &a), Err(StructureError::NotDisjoint { rel: "R".into(), tuple: vec![1, 2] }));
    }

    #[test]
    fn compose_constant_clash() {
        let a = st("rel R 1\nconst c 1\ntuple R 1");
        let b = st("rel R 1\nconst c 2");
        assert_eq!(compose(&a, &b), Err(StructureError::Incompatible("c".into())));
    }

    #[test]
    fn glue_fuses_shared_constant() {
        let a = st("rel P 1\nconst c 1\ntuple P 1");
        let b = st("rel Q 1\nconst c 9\ntuple Q 9");
        let g = glue(&a, &b).unwrap();
        assert_eq!(g.domain().len(), 1);
        let e = g.constant("c").unwrap();
        assert!(g.contains("P", &[e]) && g.contains("Q", &[e]));
    }

    #[test]
    fn glue_of_empty_copies() {
        let a = st("const c 0");
        let g = glue(&a, &a).unwrap();
        assert_eq!(g.domain(), BTreeSet::from([0]));
        assert_eq!(g.num_tuples(), 0);
    }

    #[test]
    fn glue_three_case_union() {
        let a = st("rel E 2\nconst c 1\nconst d 2\ntuple E 1 2");
        let b = st("rel P 1\nconst c 5\ntuple P 5");
        let g = glue(&a, &b).unwrap();
        let (c, d) = (g.constant("c").unwrap(), g.constant("d").unwrap());
        assert!(g.contains("E", &[c, d]));
        assert!(g.contains("P", &[c]));
        assert_eq!(g.num_tuples(), 2);
        assert_eq!((c, d), (0, 1));
    }

    #[test]
    fn forget_keeps_tuples() {
        let s = st("rel R 1\nconst c 1\nconst d 2\ntuple R 1");
        let f = forget_constant(&s, "d").unwrap();
        assert_eq!(f.domain(), BTreeSet::from([1]));
        assert!(!f.signature().has_constant("d"));
        assert!(matches!(forget_constant(&s, "z"), Err(StructureError::UnknownConstant(_))));
    }

    #[test]
    fn isomorphism_examples() {
        let a = st("rel R 2\ntuple R 1 2");
        let b = st("rel R 2\ntuple R 7 9");
        let h = find_isomorphism(&a, &b).unwrap().unwrap();
        assert_eq!(h, BTreeMap::from([(1, 7), (2, 9)]));
        let diag = st("rel R 2\ntuple R 1 1");
        assert!(!is_isomorphic(&diag, &a).unwrap());
        let c1 = st("rel R 1\nconst c 1\ntuple R 1");
        let c2 = st("rel R 1\nconst c 2\ntuple R 3");
        assert!(!is_isomorphic(&c1, &c2).unwrap());
        let other = st("rel S 2\ntuple S 1 2");
        assert_eq!(is_isomorphic(&a, &other), Err(StructureError::SignatureMismatch));
    }

    #[test]
    fn d_extensions() {
        let base = st("rel E 2\ntuple E 1 2");
        let ext = |ds: &[Elem]| add_d(&base, ds.iter().copied()).unwrap();
        assert!(d_extension_check(&base, &ext(&[1, 2])).unwrap());
        assert!(!d_extension_check(&base, &ext(&[1])).unwrap());
        assert!(d_extension_check(&base, &ext(&[1, 2, 7])).unwrap());
        assert_eq!(strip_d(&ext(&[1, 2])).unwrap(), base);
        let only_d = st("rel D 1\ntuple D 5");
        assert_eq!(strip_d(&only_d).unwrap().num_tuples(), 0);
    }

    #[test]
    fn ports_and_padding() {
        let s = st("rel E 2\ntuple E 1 2");
        let store = Store::from_pairs(&[("x1", 1), ("x2", 2)]);
        let p = encode_ports(&s, &store, &["x1", "x2"]).unwrap();
        assert_eq!(p.constant("c1"), Some(1));
        assert_eq!(p.constant("c2"), Some(2));
        let back = forget_constant(&forget_constant(&p, "c1").unwrap(), "c2").unwrap();
        assert_eq!(back, s);
        assert!(matches!(encode_ports(&s, &store, &["y"]), Err(StructureError::UnboundVariable(_))));

        let r = st("rel R 1\ntuple R 1");
        assert_eq!(pad(&r, 0).domain, BTreeSet::from([1]));
        assert_eq!(pad(&r, 2).domain, BTreeSet::from([0, 1, 2]));
        assert_eq!(pad(&r, 2).padding(), BTreeSet::from([0, 2]));
    }

    #[test]
    fn strict_parsing() {
        assert!(Structure::parse("rel R 2\ntuple R 1").is_err());
        assert!(Structure::parse("rel R 2\nrel R 2").is_err());
        assert!(Structure::parse("const c 1\nconst c 2").is_err());
        assert!(Structure::parse("tuple R 1").is_err());
        assert!(Structure::parse("rel R 1\ntuple R 1\ntuple R 1").is_err());
        let s = st("# comment\nrel R 2 # trailing\nconst c 3\ntuple R 3 4\n");
        assert_eq!(Structure::parse(&s.to_string()).unwrap(), s);
    }
}
