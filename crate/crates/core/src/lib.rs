pub mod clustering;
pub mod features;
pub mod numeric;
pub mod preprocess;
pub mod session;
pub mod stats;
pub mod synth;

// The guide in book/ is compiled here so that its listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    pub mod sessions {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    pub mod preprocessing {}
    #[doc = include_str!("../../../book/src/features.md")]
    pub mod features {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    pub mod statistics {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    pub mod clustering {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    pub mod synthetic_data {}
}
