//! Command-line experiments; populated alongside the binary.
