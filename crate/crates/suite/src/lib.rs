//! Holds the acceptance suite in `tests/acceptance.rs`; there is no library code.
