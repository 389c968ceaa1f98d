pub mod autodiff;
pub mod fd;
pub mod fem;
pub mod optimize;
pub mod sparse;
pub mod surrogate;
