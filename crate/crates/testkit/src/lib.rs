//! Test support: a reference line classifier, seeded source generators and
//! synthetic corpus builders.

pub mod corpus;
pub mod gen;
pub mod oracle;

pub use corpus::{synthetic_corpus, write_file, SyntheticStats};
pub use gen::{random_source, GenProfile};
pub use oracle::{naive_classify, NaiveClass, Syntax};
