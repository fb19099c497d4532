//! Doc-test harness for the guide under `book/`.
//!
//! mdBook cannot run book snippets against crate dependencies, so each
//! chapter is included here as a doc comment; `cargo test --doc -p
//! dslbench-book` compiles and runs every code block. One module per
//! chapter keeps failures attributable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/linearized-documents.md")]
pub mod linearized_documents {}

#[doc = include_str!("../../../book/src/diffs-and-tokens.md")]
pub mod diffs_and_tokens {}

#[doc = include_str!("../../../book/src/change-similarity.md")]
pub mod change_similarity {}

#[doc = include_str!("../../../book/src/structural-fidelity.md")]
pub mod structural_fidelity {}

#[doc = include_str!("../../../book/src/evaluating-predictions.md")]
pub mod evaluating_predictions {}

#[doc = include_str!("../../../book/src/building-datasets.md")]
pub mod building_datasets {}

#[doc = include_str!("../../../book/src/toy-dsl.md")]
pub mod toy_dsl {}

#[doc = include_str!("../../../book/src/prompting-runs.md")]
pub mod prompting_runs {}

#[doc = include_str!("../../../book/src/cli-reference.md")]
pub mod cli_reference {}
