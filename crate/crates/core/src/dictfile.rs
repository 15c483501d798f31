//! On-disk format for trained dictionary pairs.
//!
//! ```text
//! "SRDICT1"                 7-byte magic
//! header length             u32, little endian
//! header                    UTF-8, one `key=value` per line
//! payload                   D_l then D_h, f64 little endian, column-major
//! ```
//!
//! The payload is exactly `8·K·(p² + (p·s)²)` bytes for `K` atoms, LR patch
//! side `p` and scale `s`. Floats in the header use the shortest decimal
//! form that parses back to the same bits, so reading and re-writing a
//! file reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::coding::SolverSettings;
use crate::dictionary::Dictionary;
use crate::engine::{DictionaryPair, Method, Provenance, TrainRequest};
use crate::error::{Error, Result};
use crate::learning::{RidgeEpsilon, TrainConfig};
use crate::patches::PatchGeometry;

pub const MAGIC: &[u8; 7] = b"SRDICT1";
pub const GENERATOR: &str = concat!("sparse-sr ", env!("CARGO_PKG_VERSION"));

fn header(pair: &DictionaryPair) -> String {
    let req = &pair.provenance.request;
    let cfg = &req.config;
    let ridge = match cfg.ridge {
        RidgeEpsilon::Auto => "auto".to_string(),
        RidgeEpsilon::Fixed(e) => e.to_string(),
    };
    let lines: Vec<(&str, String)> = vec![
        ("method", pair.method.to_string()),
        ("lr_patch", pair.geometry.lr_patch.to_string()),
        ("scale", pair.geometry.scale.to_string()),
        ("lr_stride", pair.geometry.lr_stride.to_string()),
        ("atoms", pair.atoms().to_string()),
        ("lambda", pair.lambda.to_string()),
        ("seed", cfg.seed.to_string()),
        ("patches", req.patches.to_string()),
        ("variance_floor", req.variance_floor.to_string()),
        ("outer_iterations", cfg.outer_iterations.to_string()),
        ("solver_max_iterations", cfg.solver.max_iterations.to_string()),
        ("solver_tolerance", cfg.solver.tolerance.to_string()),
        ("solver_zero_threshold", cfg.solver.zero_threshold.to_string()),
        ("ridge_epsilon", ridge),
        ("block_weighting", cfg.block_weighting.to_string()),
        ("renormalize_split", cfg.renormalize_split.to_string()),
        ("corpus_digest", pair.provenance.corpus_digest.clone()),
        ("generator", GENERATOR.to_string()),
    ];
    lines.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn to_bytes(pair: &DictionaryPair) -> Result<Vec<u8>> {
    pair.validate()?;
    let header = header(pair);
    let k = pair.atoms();
    let payload_len = 8 * k * (pair.d_l.dim() + pair.d_h.dim());
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in pair.d_l.atoms().iter().chain(pair.d_h.atoms().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write(path: impl AsRef<Path>, pair: &DictionaryPair) -> Result<()> {
    let bytes = to_bytes(pair)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<DictionaryPair> {
    from_bytes(&fs::read(path)?)
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("header is missing '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("header field '{key}' has invalid value '{raw}'")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<DictionaryPair> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(MAGIC.len())]).into_owned();
        return Err(Error::Format(format!(
            "bad magic: expected \"SRDICT1\", found {found:?}"
        )));
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 4 {
        return Err(Error::Format("truncated header length".into()));
    }
    let hlen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        return Err(Error::Format("truncated header".into()));
    }
    let text = std::str::from_utf8(&rest[..hlen]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header line '{line}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let f = Fields(map);

    let geometry = PatchGeometry::new(f.parse("lr_patch")?, f.parse("scale")?, f.parse("lr_stride")?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let k: usize = f.parse("atoms")?;
    let method: Method = f.get("method")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
    let ridge = match f.get("ridge_epsilon")? {
        "auto" => RidgeEpsilon::Auto,
        _ => RidgeEpsilon::Fixed(f.parse("ridge_epsilon")?),
    };
    let lambda: f64 = f.parse("lambda")?;
    let config = TrainConfig {
        dict_size: k,
        lambda,
        outer_iterations: f.parse("outer_iterations")?,
        solver: SolverSettings {
            max_iterations: f.parse("solver_max_iterations")?,
            tolerance: f.parse("solver_tolerance")?,
            zero_threshold: f.parse("solver_zero_threshold")?,
        },
        seed: f.parse("seed")?,
        ridge,
        block_weighting: f.parse("block_weighting")?,
        renormalize_split: f.parse("renormalize_split")?,
    };

    let payload = &rest[hlen..];
    let (dl, dh) = (geometry.lr_dim(), geometry.hr_dim());
    let expected = 8 * k * (dl + dh);
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {expected} for {k} atoms",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let d_l = Dictionary::new(DMatrix::from_column_slice(dl, k, &values[..dl * k]))
        .map_err(|e| Error::Format(format!("D_l: {e}")))?;
    let d_h = Dictionary::new(DMatrix::from_column_slice(dh, k, &values[dl * k..]))
        .map_err(|e| Error::Format(format!("D_h: {e}")))?;

    let pair = DictionaryPair {
        d_l,
        d_h,
        geometry,
        lambda,
        method,
        provenance: Provenance {
            request: TrainRequest {
                config,
                geometry,
                method,
                patches: f.parse("patches")?,
                variance_floor: f.parse("variance_floor")?,
            },
            corpus_digest: f.get("corpus_digest")?.to_string(),
        },
    };
    pair.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(pair)
}
