pub mod bench;
pub mod broker;
pub mod codec;
mod net;
pub mod pose;
pub mod metrics;
pub mod relay;
pub mod store;
