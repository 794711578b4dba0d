//! Holds the `acceptance` test target. Run it with
//! `cargo test -p hybrid-cartpole-acceptance`.
