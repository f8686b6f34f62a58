//! Versioned JSON persistence of a landscape database. Every float is stored
//! as the 16-hex-digit IEEE-754 bit pattern, so a round trip is bit-exact
//! (NaN payloads and signed zeros included).

use std::path::Path;

use serde::{Deserialize, Serialize};
use weightscape_core::landscape::Fingerprint;
use weightscape_core::{Architecture, LandscapeDatabase, Minimum, TransitionState};

use crate::error::{Error, Result};
use crate::fsutil;

pub const FORMAT_VERSION: u32 = 1;

/// Float as its bit pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexF64(pub f64);

impl Serialize for HexF64 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0.to_bits()))
    }
}

impl<'de> Deserialize<'de> for HexF64 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom(format!(
                "float '{s}' is not 16 hex digits"
            )));
        }
        u64::from_str_radix(&s, 16)
            .map(|b| HexF64(f64::from_bits(b)))
            .map_err(serde::de::Error::custom)
    }
}

fn hex_vec(v: &[f64]) -> Vec<HexF64> {
    v.iter().copied().map(HexF64).collect()
}

fn unhex(v: Vec<HexF64>) -> Vec<f64> {
    v.into_iter().map(|h| h.0).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDoc {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: String,
}

impl ArchDoc {
    pub fn of(arch: &Architecture) -> Self {
        Self {
            input: arch.input_dim(),
            hidden: arch.hidden_layers().to_vec(),
            output: arch.output_dim(),
            activation: arch.activation().name().to_string(),
        }
    }

    pub fn to_arch(&self) -> Result<Architecture> {
        let arch = Architecture::new(self.input, self.hidden.clone(), self.output)?;
        if self.activation != arch.activation().name() {
            return Err(Error::Config(format!(
                "unsupported activation '{}'",
                self.activation
            )));
        }
        Ok(arch)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MinimumDoc {
    id: u64,
    loss: HexF64,
    grad_norm: HexF64,
    params: Vec<HexF64>,
    discovery_count: u64,
    min_hessian_eigenvalue: Option<HexF64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TsDoc {
    id: u64,
    loss: HexF64,
    grad_norm: HexF64,
    neg_eig: HexF64,
    min_a: u64,
    min_b: u64,
    params: Vec<HexF64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DbDoc {
    version: u32,
    fingerprint: String,
    arch: ArchDoc,
    next_min_id: u64,
    next_ts_id: u64,
    minima: Vec<MinimumDoc>,
    transition_states: Vec<TsDoc>,
}

pub fn to_json(db: &LandscapeDatabase) -> Vec<u8> {
    let (next_min_id, next_ts_id) = db.next_ids();
    let doc = DbDoc {
        version: FORMAT_VERSION,
        fingerprint: db.fingerprint().to_string(),
        arch: ArchDoc::of(db.arch()),
        next_min_id,
        next_ts_id,
        minima: db
            .minima()
            .iter()
            .map(|m| MinimumDoc {
                id: m.id,
                loss: HexF64(m.loss),
                grad_norm: HexF64(m.grad_norm),
                params: hex_vec(&m.params),
                discovery_count: m.discovery_count,
                min_hessian_eigenvalue: m.min_hessian_eigenvalue.map(HexF64),
            })
            .collect(),
        transition_states: db
            .transition_states()
            .iter()
            .map(|t| TsDoc {
                id: t.id,
                loss: HexF64(t.loss),
                grad_norm: HexF64(t.grad_norm),
                neg_eig: HexF64(t.negative_eigenvalue),
                min_a: t.min_a,
                min_b: t.min_b,
                params: hex_vec(&t.params),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("database serializes");
    out.push(b'\n');
    out
}

/// Parses a database document; `path` is only used in error messages.
pub fn from_json(bytes: &[u8], path: &Path) -> Result<LandscapeDatabase> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let doc: DbDoc =
        serde_json::from_slice(bytes).map_err(|e| bad(format!("not a landscape database: {e}")))?;
    if doc.version != FORMAT_VERSION {
        return Err(bad(format!(
            "database format version {} (this build reads {FORMAT_VERSION})",
            doc.version
        )));
    }
    let fp = u64::from_str_radix(&doc.fingerprint, 16)
        .map_err(|_| bad(format!("bad fingerprint '{}'", doc.fingerprint)))?;
    let arch = doc.arch.to_arch()?;
    let minima = doc
        .minima
        .into_iter()
        .map(|m| Minimum {
            id: m.id,
            params: unhex(m.params),
            loss: m.loss.0,
            grad_norm: m.grad_norm.0,
            discovery_count: m.discovery_count,
            min_hessian_eigenvalue: m.min_hessian_eigenvalue.map(|h| h.0),
        })
        .collect();
    let ts = doc
        .transition_states
        .into_iter()
        .map(|t| TransitionState {
            id: t.id,
            params: unhex(t.params),
            loss: t.loss.0,
            grad_norm: t.grad_norm.0,
            negative_eigenvalue: t.neg_eig.0,
            min_a: t.min_a,
            min_b: t.min_b,
        })
        .collect();
    LandscapeDatabase::from_parts(
        Fingerprint(fp),
        arch,
        minima,
        ts,
        doc.next_min_id,
        doc.next_ts_id,
    )
    .map_err(|e| bad(format!("inconsistent database: {e}")))
}

pub fn save_db(path: &Path, db: &LandscapeDatabase) -> Result<()> {
    fsutil::write_atomic(path, &to_json(db))
}

pub fn load_db(path: &Path) -> Result<LandscapeDatabase> {
    from_json(&fsutil::read(path)?, path)
}

/// Loads and checks that the database belongs to the loss surface `fp`.
pub fn load_db_for(path: &Path, fp: Fingerprint) -> Result<LandscapeDatabase> {
    let db = load_db(path)?;
    db.check_fingerprint(fp)?;
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use weightscape_core::landscape::{MinimumCandidate, TsCandidate};

    pub(crate) fn sample_db(n: usize) -> LandscapeDatabase {
        let arch = Architecture::parse("2-3-2").unwrap();
        let fp = Fingerprint(0xfeed);
        let mut db = LandscapeDatabase::new(fp, arch.clone());
        for i in 0..n {
            let params: Vec<f64> = (0..arch.parameter_count())
                .map(|k| ((i * 31 + k * 7) as f64).sin() * (i + 1) as f64)
                .collect();
            let eig = (i % 2 == 0).then_some(1.0 / (i as f64 + 3.0));
            db.insert_minimum(
                fp,
                MinimumCandidate {
                    params,
                    loss: 0.1 + 0.01 * i as f64 + 1.0 / 3.0,
                    grad_norm: 1e-7,
                    min_hessian_eigenvalue: eig,
                },
            )
            .unwrap();
        }
        for i in 1..n as u64 {
            let params: Vec<f64> = (0..arch.parameter_count())
                .map(|k| (k as f64 + i as f64 * 0.1).cos())
                .collect();
            db.insert_transition_state(
                fp,
                TsCandidate {
                    params,
                    loss: 2.0 / 3.0 + i as f64,
                    grad_norm: 3e-6,
                    negative_eigenvalue: -0.1 / 7.0,
                    min_a: i,
                    min_b: i + 1,
                },
            )
            .unwrap();
        }
        db
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for n in [1, 50] {
            let db = sample_db(n);
            let back = from_json(&to_json(&db), Path::new("db.json")).unwrap();
            assert_eq!(back, db);
            assert_eq!(to_json(&back), to_json(&db));
        }
    }

    #[test]
    fn truncated_or_wrong_version_fails() {
        let text = to_json(&sample_db(3));
        assert!(from_json(&text[..text.len() / 2], Path::new("x")).is_err());
        let bumped = String::from_utf8(text)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            from_json(bumped.as_bytes(), Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn hex_float_forms() {
        let v = serde_json::to_string(&HexF64(0.5)).unwrap();
        assert_eq!(v, "\"3fe0000000000000\"");
        let back: HexF64 = serde_json::from_str("\"8000000000000000\"").unwrap();
        assert!(back.0 == 0.0 && back.0.is_sign_negative());
        assert!(serde_json::from_str::<HexF64>("\"3fe\"").is_err());
    }
}
