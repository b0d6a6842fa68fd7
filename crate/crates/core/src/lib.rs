//! Knowledge-based generation of traffic scenes for motorway test catalogs.

pub mod export;
pub mod format;
pub mod kb;
pub mod layout;
pub mod pipeline;
pub mod reasoner;
pub mod sample;
pub mod scene;
