//! Library side of the `fireline` binary: the HTTP game service.

pub mod service;
