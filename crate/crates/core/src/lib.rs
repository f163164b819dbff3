pub mod bench;
pub mod device;
pub mod navigator;
pub mod oracle;
pub mod refine;
pub mod scorer;
pub mod trigger;
pub mod ui;
