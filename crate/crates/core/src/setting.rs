//! Analyzer settings and spin outcomes.

use std::fmt;
use std::ops::{Mul, Neg};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A measurement direction on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector3([f64; 3]);

impl UnitVector3 {
    /// Largest deviation of the input norm from 1 that [`UnitVector3::new`]
    /// accepts before rescaling.
    pub const NORM_TOLERANCE: f64 = 1e-9;

    pub const X: UnitVector3 = UnitVector3([1.0, 0.0, 0.0]);
    pub const Y: UnitVector3 = UnitVector3([0.0, 1.0, 0.0]);
    pub const Z: UnitVector3 = UnitVector3([0.0, 0.0, 1.0]);

    /// Accepts components whose norm is within [`Self::NORM_TOLERANCE`] of 1
    /// and rescales them onto the sphere.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = norm([x, y, z])?;
        if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::domain(format!(
                "setting ({x}, {y}, {z}) has norm {norm}, not 1 (tolerance {})",
                Self::NORM_TOLERANCE
            )));
        }
        Ok(Self([x / norm, y / norm, z / norm]))
    }

    /// Rescales any finite nonzero vector onto the sphere.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = norm([x, y, z])?;
        Ok(Self([x / norm, y / norm, z / norm]))
    }

    /// Coplanar setting `(cos t, sin t, 0)` for an angle in degrees.
    pub fn from_degrees(degrees: f64) -> Self {
        let t = degrees.to_radians();
        Self([t.cos(), t.sin(), 0.0])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    /// Component `k` for `k = 1, 2, 3`.
    pub fn component(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }
}

fn norm(c: [f64; 3]) -> Result<f64> {
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("setting components must be finite"));
    }
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if norm == 0.0 {
        return Err(Error::domain("setting must be nonzero"));
    }
    Ok(norm)
}

impl TryFrom<[f64; 3]> for UnitVector3 {
    type Error = Error;

    fn try_from(c: [f64; 3]) -> Result<Self> {
        UnitVector3::new(c[0], c[1], c[2])
    }
}

impl From<UnitVector3> for [f64; 3] {
    fn from(v: UnitVector3) -> Self {
        v.0
    }
}

impl FromStr for UnitVector3 {
    type Err = Error;

    /// Parses `x,y,z`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = parse_triple(s)?;
        UnitVector3::new(parts[0], parts[1], parts[2])
    }
}

/// Parses a comma-separated triple of reals without normalizing it.
pub fn parse_triple(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::domain(format!(
            "expected three comma-separated components, got `{s}`"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| Error::domain(format!("`{part}` is not a number")))?;
    }
    Ok(out)
}

impl fmt::Display for UnitVector3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

/// Sign with the convention `sign(0) = +1`.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// A measured spin value, `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn from_sign(x: f64) -> Spin {
        if x >= 0.0 {
            Spin::Up
        } else {
            Spin::Down
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }
}

impl Neg for Spin {
    type Output = Spin;

    fn neg(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

impl Mul for Spin {
    type Output = Spin;

    fn mul(self, rhs: Spin) -> Spin {
        if self == rhs {
            Spin::Up
        } else {
            Spin::Down
        }
    }
}

impl From<Spin> for i8 {
    fn from(s: Spin) -> i8 {
        s.value()
    }
}

impl TryFrom<i8> for Spin {
    type Error = String;

    fn try_from(v: i8) -> Result<Spin, String> {
        match v {
            1 => Ok(Spin::Up),
            -1 => Ok(Spin::Down),
            other => Err(format!("spin must be +1 or -1, got {other}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_input() {
        assert!(UnitVector3::new(1.0, 1.0, 0.0).is_err());
        assert!(UnitVector3::new(0.0, 0.0, 0.0).is_err());
        assert!(UnitVector3::new(f64::NAN, 0.0, 1.0).is_err());
        let v = UnitVector3::new(0.6, 0.8, 1e-10).unwrap();
        assert!((v.dot(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_accepts_any_direction() {
        let v = UnitVector3::normalize(3.0, 4.0, 0.0).unwrap();
        assert_eq!(v.components(), [0.6, 0.8, 0.0]);
    }

    #[test]
    fn parses_triples() {
        let v: UnitVector3 = "0, 1, 0".parse().unwrap();
        assert_eq!(v, UnitVector3::Y);
        assert!("1,0".parse::<UnitVector3>().is_err());
        assert!("1,0,x".parse::<UnitVector3>().is_err());
    }

    #[test]
    fn sign_of_zero_is_plus() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn spin_algebra() {
        assert_eq!(Spin::Up * Spin::Down, Spin::Down);
        assert_eq!(Spin::Down * Spin::Down, Spin::Up);
        assert_eq!(-Spin::Up, Spin::Down);
        assert_eq!(serde_json::to_string(&Spin::Down).unwrap(), "-1");
        assert!(serde_json::from_str::<Spin>("0").is_err());
    }
}
