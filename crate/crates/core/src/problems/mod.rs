//! Problem builders: closed-form toys, planted instances with exact
//! certificates, compressed sensing, and sparse logistic regression.

pub mod cs;
pub mod libsvm;
pub mod logistic;
pub mod planted;
pub mod toy;

pub use cs::{build_compressed_sensing, CsInstance, CsSpec, Transform};
pub use libsvm::{parse_libsvm, parse_libsvm_str};
pub use logistic::{build_logistic, split_train_test, synthetic_mushrooms, Dataset, SparseRow};
pub use planted::{planted_instance, PlantedOptions};
pub use toy::{toy1d, toy3d, toy3d_default, KnownSolution};
