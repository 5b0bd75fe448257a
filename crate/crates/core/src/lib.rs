pub mod advanced;
pub mod backyard;
pub mod error;
pub mod fixed;
pub mod hashing;
pub mod ram;
pub mod resizable;
pub mod retrieval;
pub mod stats;
pub mod store;
pub mod trace;
pub mod verify;
pub mod warmup;
