//! Discriminative lexicon modelling of inflected word forms.
//!
//! Word forms are coded as sets of letter n-grams ([`cues`]), meanings as
//! embedding vectors ([`embeddings`]). Linear and deep mappings between the
//! two spaces ([`mappings`]) model comprehension and production; their
//! quality is judged by nearest-neighbour accuracy ([`evaluation`]) and by
//! the weaving-plus-synthesis pipeline ([`production`]). Two analyses sit
//! on top: class productivity ([`productivity`]) and discriminant probes of
//! the embedding space ([`probe`]).

pub mod cues;
pub mod embeddings;
pub mod evaluation;
pub mod lexicon;
pub mod linalg;
pub mod mappings;
pub mod probe;
pub mod production;
pub mod productivity;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cues.md")]
    mod cues {}
    #[doc = include_str!("../../../book/src/mappings.md")]
    mod mappings {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/production.md")]
    mod production {}
    #[doc = include_str!("../../../book/src/productivity.md")]
    mod productivity {}
    #[doc = include_str!("../../../book/src/probes.md")]
    mod probes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
