use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `1/r`
    Laplace3d,
    /// `-log r`
    Laplace2d,
    /// `exp(-r^2/sigma^2)`
    Gaussian,
    /// Constant 1.
    One,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Laplace3d => "laplace3d",
            KernelKind::Laplace2d => "laplace2d",
            KernelKind::Gaussian => "gaussian",
            KernelKind::One => "one",
        }
    }

    pub(crate) fn code(&self) -> u32 {
        match self {
            KernelKind::Laplace3d => 0,
            KernelKind::Laplace2d => 1,
            KernelKind::Gaussian => 2,
            KernelKind::One => 3,
        }
    }

    pub(crate) fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => KernelKind::Laplace3d,
            1 => KernelKind::Laplace2d,
            2 => KernelKind::Gaussian,
            3 => KernelKind::One,
            other => return Err(Error::Format(format!("unknown kernel code {other}"))),
        })
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace3d" => Ok(KernelKind::Laplace3d),
            "laplace2d" => Ok(KernelKind::Laplace2d),
            "gaussian" => Ok(KernelKind::Gaussian),
            "one" => Ok(KernelKind::One),
            other => Err(Error::Config(format!("unsupported kernel '{other}'"))),
        }
    }
}

/// Kernel with regularisation `delta`: `r` is replaced by `sqrt(r^2 + delta^2)`.
///
/// The singular kernels evaluate to 0 where the regularised distance vanishes, so a
/// diagonal with `delta = 0` contributes nothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub regularization: f64,
    /// Width of the Gaussian; ignored by the other kinds.
    pub sigma: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        KernelSpec { kind, regularization: 0.0, sigma: 1.0 }
    }

    pub fn with_regularization(mut self, delta: f64) -> Self {
        self.regularization = delta;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return Err(Error::Config(format!("regularization must be >= 0, got {}", self.regularization)));
        }
        if self.kind == KernelKind::Gaussian && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("gaussian sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, p: [f64; 3], q: [f64; 3]) -> f64 {
        let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + self.regularization * self.regularization;
        match self.kind {
            KernelKind::Laplace3d => {
                if r2 > 0.0 {
                    1.0 / r2.sqrt()
                } else {
                    0.0
                }
            }
            KernelKind::Laplace2d => {
                if r2 > 0.0 {
                    -0.5 * r2.ln()
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-r2 / (self.sigma * self.sigma)).exp(),
            KernelKind::One => 1.0,
        }
    }

    /// Fill `out` (column-major, `sources.len()` rows by `targets.len()` columns) with
    /// `out[t * ns + s] = K(targets[t], sources[s])`.
    pub(crate) fn fill(&self, targets: &[[f64; 3]], sources: &[[f64; 3]], out: &mut [f64]) {
        let ns = sources.len();
        debug_assert_eq!(out.len(), ns * targets.len());
        let d2 = self.regularization * self.regularization;
        match self.kind {
            KernelKind::Laplace3d => fill_with(targets, sources, out, d2, |r2| {
                if r2 > 0.0 {
                    1.0 / r2.sqrt()
                } else {
                    0.0
                }
            }),
            KernelKind::Laplace2d => fill_with(targets, sources, out, d2, |r2| {
                if r2 > 0.0 {
                    -0.5 * r2.ln()
                } else {
                    0.0
                }
            }),
            KernelKind::Gaussian => {
                let s2 = self.sigma * self.sigma;
                fill_with(targets, sources, out, d2, |r2| (-r2 / s2).exp())
            }
            KernelKind::One => out.fill(1.0),
        }
    }
}

#[inline(always)]
fn fill_with(
    targets: &[[f64; 3]],
    sources: &[[f64; 3]],
    out: &mut [f64],
    d2: f64,
    f: impl Fn(f64) -> f64,
) {
    let ns = sources.len();
    for (t, p) in targets.iter().enumerate() {
        let col = &mut out[t * ns..(t + 1) * ns];
        for (o, q) in col.iter_mut().zip(sources) {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            let dz = p[2] - q[2];
            *o = f(dx * dx + dy * dy + dz * dz + d2);
        }
    }
}
