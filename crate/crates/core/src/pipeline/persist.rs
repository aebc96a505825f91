//! Dataset file format.
//!
//! ```text
//! # twinbeam-dataset v1; kind=<kind>; seed=<seed>; n=<count>
//! {"kind":...,"detectors":[...],...}
//! pulse_id,s1,s2
//! 0,1.2345678901234567e5,...
//! # sha256=<hex of every preceding byte>
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every f64.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Dataset, DatasetKind, PulseRecord};

pub const FORMAT_TAG: &str = "twinbeam-dataset";
const VERSION: &str = "v1";
const CSV_HEADER: &str = "pulse_id,s1,s2";
const CHECKSUM_PREFIX: &str = "# sha256=";

pub fn write_dataset(ds: &Dataset) -> String {
    let mut out = String::with_capacity(64 * ds.len() + 512);
    writeln!(
        out,
        "# {FORMAT_TAG} {VERSION}; kind={}; seed={}; n={}",
        ds.kind,
        ds.seed,
        ds.len()
    )
    .unwrap();
    out.push_str(&serde_json::to_string(ds).expect("metadata serializes"));
    out.push('\n');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &ds.records {
        writeln!(out, "{},{:.16e},{:.16e}", r.pulse_id, r.s1, r.s2).unwrap();
    }
    let digest = hex::encode(Sha256::digest(out.as_bytes()));
    writeln!(out, "{CHECKSUM_PREFIX}{digest}").unwrap();
    out
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    super::write_atomic(path.as_ref(), write_dataset(ds).as_bytes())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&text, path)
}

struct Header {
    kind: DatasetKind,
    seed: u64,
    n: usize,
}

fn parse_header(line: &str, origin: &Path) -> Result<Header> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let rest = line
        .strip_prefix("# ")
        .and_then(|l| l.strip_prefix(FORMAT_TAG))
        .ok_or_else(|| parse_err(format!("not a {FORMAT_TAG} file")))?;
    let mut parts = rest.trim_start().split("; ");
    let version = parts.next().unwrap_or_default();
    if version != VERSION {
        return Err(Error::Version {
            found: version.to_string(),
            expected: VERSION.to_string(),
        });
    }
    let (mut kind, mut seed, mut n) = (None, None, None);
    for part in parts {
        match part.split_once('=') {
            Some(("kind", v)) => kind = DatasetKind::parse(v),
            Some(("seed", v)) => seed = v.parse().ok(),
            Some(("n", v)) => n = v.parse().ok(),
            _ => return Err(parse_err(format!("unexpected header field `{part}`"))),
        }
    }
    match (kind, seed, n) {
        (Some(kind), Some(seed), Some(n)) => Ok(Header { kind, seed, n }),
        _ => Err(parse_err("header needs valid kind, seed and n".into())),
    }
}

pub fn read_dataset(text: &str, origin: &Path) -> Result<Dataset> {
    let origin: PathBuf = origin.to_path_buf();
    let first = text.lines().next().unwrap_or_default();
    let header = parse_header(first, &origin)?;

    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body_len, stored) = match trimmed.rfind('\n') {
        Some(i) if trimmed[i + 1..].starts_with(CHECKSUM_PREFIX) => {
            (i + 1, trimmed[i + 1 + CHECKSUM_PREFIX.len()..].trim().to_string())
        }
        _ => {
            return Err(Error::Truncated {
                path: origin,
                message: "missing checksum line".into(),
            })
        }
    };
    let body = &text[..body_len];
    let computed = hex::encode(Sha256::digest(body.as_bytes()));
    if computed != stored {
        return Err(Error::Checksum {
            path: origin,
            stored,
            computed,
        });
    }

    let parse_err = |message: String| Error::Parse {
        path: origin.clone(),
        message,
    };
    let mut lines = body.lines().skip(1);
    let meta_line = lines.next().ok_or_else(|| Error::Truncated {
        path: origin.clone(),
        message: "missing metadata line".into(),
    })?;
    let mut ds: Dataset = serde_json::from_str(meta_line).map_err(|e| parse_err(format!("metadata: {e}")))?;
    if ds.kind != header.kind || ds.seed != header.seed {
        return Err(parse_err("header and metadata disagree".into()));
    }
    if lines.next() != Some(CSV_HEADER) {
        return Err(parse_err(format!("expected CSV header `{CSV_HEADER}`")));
    }

    let mut records = Vec::with_capacity(header.n);
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| parse_err(format!("row {row}: missing {name}")))
        };
        let pulse_id = next("pulse_id")?
            .parse::<u64>()
            .map_err(|e| parse_err(format!("row {row}: pulse_id: {e}")))?;
        let s1 = next("s1")?
            .parse::<f64>()
            .map_err(|e| parse_err(format!("row {row}: s1: {e}")))?;
        let s2 = next("s2")?
            .parse::<f64>()
            .map_err(|e| parse_err(format!("row {row}: s2: {e}")))?;
        if fields.next().is_some() {
            return Err(parse_err(format!("row {row}: too many fields")));
        }
        if !s1.is_finite() || !s2.is_finite() {
            return Err(parse_err(format!("row {row}: non-finite value")));
        }
        records.push(PulseRecord { pulse_id, s1, s2 });
    }
    if records.len() != header.n {
        return Err(Error::Truncated {
            path: origin,
            message: format!("header declares {} records, found {}", header.n, records.len()),
        });
    }
    ds.records = records;
    Ok(ds)
}
