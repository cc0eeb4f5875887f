//! Published reference values of the universal constants.

pub const XI0: f64 = -0.768_183_653_14;
pub const THETA0: f64 = 0.590_106_124_95;
pub const U0_AT_0: f64 = 0.873_043_138_51;
pub const DELTA0: f64 = 0.585_512_900_29;
