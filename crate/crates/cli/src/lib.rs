//! Document schema shared by the `ocifuse` binary and its tests.

pub mod document;
