pub mod exact;
pub mod speclang;
pub mod model;
pub mod problem;
pub mod analyzer;
pub mod metamorphic;
pub mod dispatch;
pub mod orchestrator;

/// The guide's chapters, compiled so that their snippets run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/spec-language.md")]
    pub mod spec_language {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/problems.md")]
    pub mod problems {}
    #[doc = include_str!("../../../book/src/analyzer.md")]
    pub mod analyzer {}
    #[doc = include_str!("../../../book/src/metamorphic.md")]
    pub mod metamorphic {}
    #[doc = include_str!("../../../book/src/dispatch.md")]
    pub mod dispatch {}
    #[doc = include_str!("../../../book/src/orchestration.md")]
    pub mod orchestration {}
    #[doc = include_str!("../../../book/src/formats.md")]
    pub mod formats {}
}
