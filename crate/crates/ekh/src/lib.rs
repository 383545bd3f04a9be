//! Khovanov homology and equivariant Khovanov homology of periodic links over the integers.

pub mod arcalg;
pub mod chain;
pub mod cobordism;
pub mod corpus;
pub mod diagram;
pub mod equivariant;
pub mod khovanov;
pub mod par;
pub mod zlinalg;
