//! Text-encoded network architecture.
//!
//! ```text
//! input=32;conv=8x5x5/s1/p2/pool;conv=16x3x3/s1/p1/pool;dense=64/drop
//! ```
//!
//! Dense entries are the hidden layers of every stream. The class-logit
//! layer is appended implicitly, and the last hidden layer is the feature
//! layer (the stack's output when there are no hidden layers).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_ARCH: &str =
    "input=32;conv=8x5x5/s1/p2/pool;conv=16x3x3/s1/p1/pool;dense=64/drop";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// 2×2 max-pool with stride 2 after the rectifier.
    pub pool: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSpec {
    pub units: usize,
    pub dropout: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    /// Square single-channel input side.
    pub input: usize,
    pub convs: Vec<ConvSpec>,
    pub dense: Vec<DenseSpec>,
}

/// Spatial geometry of one conv layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// Before pooling.
    pub conv_h: usize,
    pub conv_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Default for Arch {
    fn default() -> Self {
        DEFAULT_ARCH.parse().expect("default architecture parses")
    }
}

impl Arch {
    /// Per-layer geometry; fails if any layer collapses to zero size.
    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>> {
        if self.input == 0 {
            return Err(Error::InvalidArgument("input size must be >= 1".into()));
        }
        let (mut c, mut h, mut w) = (1, self.input, self.input);
        let mut out = Vec::with_capacity(self.convs.len());
        for (i, s) in self.convs.iter().enumerate() {
            if s.filters == 0 || s.kernel == 0 || s.stride == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv layer {i} has a zero dimension"
                )));
            }
            if h + 2 * s.padding < s.kernel || w + 2 * s.padding < s.kernel {
                return Err(Error::InvalidArgument(format!(
                    "conv layer {i}: kernel {} larger than padded {h}x{w} input",
                    s.kernel
                )));
            }
            let conv_h = (h + 2 * s.padding - s.kernel) / s.stride + 1;
            let conv_w = (w + 2 * s.padding - s.kernel) / s.stride + 1;
            let (out_h, out_w) = if s.pool {
                (conv_h / 2, conv_w / 2)
            } else {
                (conv_h, conv_w)
            };
            if out_h == 0 || out_w == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv layer {i} pools a 1-pixel map"
                )));
            }
            out.push(ConvShape {
                in_c: c,
                in_h: h,
                in_w: w,
                conv_h,
                conv_w,
                out_h,
                out_w,
            });
            c = s.filters;
            h = out_h;
            w = out_w;
        }
        Ok(out)
    }

    /// Flattened size of the shared stack's output.
    pub fn conv_output_dim(&self) -> Result<usize> {
        let shapes = self.conv_shapes()?;
        Ok(match (shapes.last(), self.convs.last()) {
            (Some(sh), Some(s)) => s.filters * sh.out_h * sh.out_w,
            _ => self.input * self.input,
        })
    }

    pub fn feature_dim(&self) -> Result<usize> {
        match self.dense.last() {
            Some(d) => Ok(d.units),
            None => self.conv_output_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_shapes()?;
        if self.dense.iter().any(|d| d.units == 0) {
            return Err(Error::InvalidArgument("dense layer with zero units".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input={}", self.input)?;
        for c in &self.convs {
            write!(
                f,
                ";conv={}x{}x{}/s{}/p{}",
                c.filters, c.kernel, c.kernel, c.stride, c.padding
            )?;
            if c.pool {
                f.write_str("/pool")?;
            }
        }
        for d in &self.dense {
            write!(f, ";dense={}", d.units)?;
            if d.dropout {
                f.write_str("/drop")?;
            }
        }
        Ok(())
    }
}

fn bad(entry: &str) -> Error {
    Error::InvalidArgument(format!("cannot parse architecture entry '{entry}'"))
}

fn num(s: &str, entry: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(entry))
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut convs = Vec::new();
        let mut dense = Vec::new();
        for entry in s.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            let (key, value) = entry.split_once('=').ok_or_else(|| bad(entry))?;
            match key.trim() {
                "input" => input = Some(num(value.trim(), entry)?),
                "conv" => {
                    let mut parts = value.trim().split('/');
                    let dims: Vec<&str> =
                        parts.next().ok_or_else(|| bad(entry))?.split('x').collect();
                    if dims.len() != 3 || dims[1] != dims[2] {
                        return Err(bad(entry));
                    }
                    let mut spec = ConvSpec {
                        filters: num(dims[0], entry)?,
                        kernel: num(dims[1], entry)?,
                        stride: 1,
                        padding: 0,
                        pool: false,
                    };
                    for p in parts {
                        if p == "pool" {
                            spec.pool = true;
                        } else if let Some(v) = p.strip_prefix('s') {
                            spec.stride = num(v, entry)?;
                        } else if let Some(v) = p.strip_prefix('p') {
                            spec.padding = num(v, entry)?;
                        } else {
                            return Err(bad(entry));
                        }
                    }
                    if !dense.is_empty() {
                        return Err(Error::InvalidArgument(
                            "conv layers must precede dense layers".into(),
                        ));
                    }
                    convs.push(spec);
                }
                "dense" => {
                    let mut parts = value.trim().split('/');
                    let units = num(parts.next().ok_or_else(|| bad(entry))?, entry)?;
                    let mut dropout = false;
                    for p in parts {
                        if p == "drop" {
                            dropout = true;
                        } else {
                            return Err(bad(entry));
                        }
                    }
                    dense.push(DenseSpec { units, dropout });
                }
                _ => return Err(bad(entry)),
            }
        }
        let arch = Arch {
            input: input
                .ok_or_else(|| Error::InvalidArgument("architecture lacks input=".into()))?,
            convs,
            dense,
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let a = Arch::default();
        let sh = a.conv_shapes().unwrap();
        assert_eq!((sh[0].conv_h, sh[0].out_h), (32, 16));
        assert_eq!((sh[1].in_c, sh[1].conv_h, sh[1].out_h), (8, 16, 8));
        assert_eq!(a.conv_output_dim().unwrap(), 16 * 8 * 8);
        assert_eq!(a.feature_dim().unwrap(), 64);
    }

    #[test]
    fn text_round_trip() {
        let a = Arch::default();
        assert_eq!(a.to_string(), DEFAULT_ARCH);
        assert_eq!(a.to_string().parse::<Arch>().unwrap(), a);
        let b: Arch = "input=3;conv=1x2x2".parse().unwrap();
        assert_eq!(
            b.convs[0],
            ConvSpec {
                filters: 1,
                kernel: 2,
                stride: 1,
                padding: 0,
                pool: false
            }
        );
        assert_eq!(b.feature_dim().unwrap(), 4);
    }

    #[test]
    fn rejects_bad_chains() {
        assert!("input=4;conv=2x7x7".parse::<Arch>().is_err());
        assert!("input=2;conv=2x2x2/pool".parse::<Arch>().is_err());
        assert!("conv=2x3x3".parse::<Arch>().is_err());
        assert!("input=8;dense=4;conv=2x3x3".parse::<Arch>().is_err());
        assert!("input=8;conv=2x3x4".parse::<Arch>().is_err());
    }
}
