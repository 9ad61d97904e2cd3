pub mod error;
pub mod fpfactor;
pub mod markov;
pub mod perm_group;
pub mod groups;
pub mod harness;
pub mod theorems;
pub mod tree;
