//! Holds the acceptance runner (`tests/acceptance.rs`); no library code.
