//! JSON channel files.
//!
//! ```json
//! {"name": "h1", "field": "real", "m": 2, "N": 2,
//!  "coeffs": [[1.0, -0.5], [[1.0, 0.0], [0.25, 0.0]]]}
//! ```
//!
//! Each coefficient is either a bare number (real part only) or a
//! `[re, im]` pair. Complex channels may use bare numbers too.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Channel;
use crate::error::{Error, Result};
use crate::scalar::{cplx, Field, Real};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum Coeff {
    Bare(f64),
    Pair([f64; 2]),
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    name: String,
    field: Field,
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    coeffs: Vec<Vec<Coeff>>,
}

fn located(src: &str, e: &serde_json::Error) -> Error {
    let line = src.lines().nth(e.line().saturating_sub(1)).unwrap_or("").trim();
    Error::Parse(format!("{e}; near `{line}`"))
}

/// Parses a channel from JSON text.
pub fn parse_channel<T: Real>(src: &str) -> Result<Channel<T>> {
    let file: ChannelFile = serde_json::from_str(src).map_err(|e| located(src, &e))?;
    if file.coeffs.len() != file.m {
        return Err(Error::Parse(format!(
            "`coeffs` has {} rows but m = {}",
            file.coeffs.len(),
            file.m
        )));
    }
    if let Some((l, row)) = file.coeffs.iter().enumerate().find(|(_, r)| r.len() != file.n) {
        return Err(Error::Parse(format!(
            "subchannel {l} has {} taps but N = {}",
            row.len(),
            file.n
        )));
    }
    let coeffs = DMatrix::from_fn(file.m, file.n, |l, i| match file.coeffs[l][i] {
        Coeff::Bare(x) => cplx(T::lit(x), T::zero()),
        Coeff::Pair([re, im]) => cplx(T::lit(re), T::lit(im)),
    });
    Channel::new(file.name, file.field, coeffs)
}

/// Reads a channel file from disk.
pub fn read_channel<T: Real>(path: impl AsRef<std::path::Path>) -> Result<Channel<T>> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path)?;
    parse_channel(&src).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Serializes a channel. Real channels are written with bare numbers.
pub fn channel_to_json<T: Real>(ch: &Channel<T>) -> String {
    let coeffs = (0..ch.m())
        .map(|l| {
            ch.subchannel(l)
                .into_iter()
                .map(|z| match ch.field() {
                    Field::Real => Coeff::Bare(z.re.to_f64_lossy()),
                    Field::Complex => Coeff::Pair([z.re.to_f64_lossy(), z.im.to_f64_lossy()]),
                })
                .collect()
        })
        .collect();
    let file = ChannelFile {
        name: ch.name().to_string(),
        field: ch.field(),
        m: ch.m(),
        n: ch.taps(),
        coeffs,
    };
    serde_json::to_string_pretty(&file).expect("channel serializes")
}

/// Channel `H1` shipped as a fixture (m = 2, N = 4, real).
pub const H1_JSON: &str = include_str!("../../fixtures/h1.json");

/// Channel `H2` shipped as a fixture (m = 2, N = 4, real).
pub const H2_JSON: &str = include_str!("../../fixtures/h2.json");

pub fn fixture_h1<T: Real>() -> Channel<T> {
    parse_channel(H1_JSON).expect("h1 fixture is valid")
}

pub fn fixture_h2<T: Real>() -> Channel<T> {
    parse_channel(H2_JSON).expect("h2 fixture is valid")
}
