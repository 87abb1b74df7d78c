//! Small numerical kernels shared by the solver modules.

pub mod dopri;
pub mod quad;
pub mod roots;
