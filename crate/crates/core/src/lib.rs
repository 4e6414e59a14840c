//! Competitive binary search trees on a metered pointer-machine model.

pub mod bst_model;
pub mod reference_tree;
pub mod aux_redblack;
pub mod extraction;
pub mod competitive;
pub mod tango_tree;
pub mod hybrid_tree;
pub mod zipper_tree;
pub mod multipop_stack;
pub mod bench;
