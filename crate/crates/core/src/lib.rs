pub mod bath;
pub mod dyson;
pub mod error;
pub mod fock;
pub mod optics;
pub mod oracle;
pub mod phase_space;
pub(crate) mod quad;
pub mod table;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/fock.md")]
    mod fock {}
    #[doc = include_str!("../../../book/src/interferometer.md")]
    mod interferometer {}
    #[doc = include_str!("../../../book/src/baths.md")]
    mod baths {}
    #[doc = include_str!("../../../book/src/evolution.md")]
    mod evolution {}
    #[doc = include_str!("../../../book/src/phase_space.md")]
    mod phase_space {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
}
