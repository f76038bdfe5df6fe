//! Frequency bookkeeping. Everything inside the crate is angular (rad/s);
//! helpers here convert at the I/O boundary where values are quoted as f = ω/2π.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Hz → rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

/// MHz → rad/s.
#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// GHz → rad/s.
#[inline]
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

/// rad/s → Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}

/// rad/s → MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}

pub const NS: f64 = 1e-9;
pub const FF: f64 = 1e-15;
pub const NH: f64 = 1e-9;

/// Power ratio → dB.
#[inline]
pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}
