//! Constructive SID generators: Δ(k), its type annotation Δ(k, φ), and the
//! encoding of context-free grammars with word structures.

mod cfg;
mod twk;
mod twk_mso;
mod words;

use thiserror::Error;

pub use cfg::{cfg_to_sid, cyk_member, greibach_normalize, is_greibach, nonterminal_predicate, Cfg, Symbol};
pub use twk::{gen_twk_sid, top_predicate, TWK_PREDICATE};
pub use twk_mso::{gen_twk_mso_sid, mso_top_predicate, MsoSidOptions, DEFAULT_TYPE_CAP};
pub use words::{clique_structure, word_to_structure, words_up_to};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("symbol {0} is reserved by the generator")]
    ReservedSymbol(String),
    #[error("the grammar derives the empty word")]
    EmptyWordDerivable,
    #[error("production {0} is not in Greibach normal form")]
    NotGreibach(String),
    #[error("word structures need a non-empty word")]
    EmptyWord,
    #[error("grammar syntax error on line {line}: {msg}")]
    Grammar { line: usize, msg: String },
    #[error("quantifier rank {0} exceeds the supported bound")]
    RankTooLarge(usize),
    #[error("type discovery exceeded the cap of {0} types")]
    TypeCapExceeded(usize),
    #[error("formula is not monadic second-order")]
    NotMonadic,
    #[error("formula is not a sentence: free variable {0}")]
    NotSentence(String),
    #[error(transparent)]
    So(#[from] crate::so::SoError),
    #[error(transparent)]
    Structure(#[from] crate::structures::StructureError),
}
