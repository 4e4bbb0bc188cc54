//! On-disk instance format: a `meta.json` / `data.csv` pair.
//!
//! `data.csv` has the header `index,x_1,...,x_p,y,b,eps,is_clean`, one row per
//! sample, floats written with 17 significant digits so that a round trip is
//! lossless. `meta.json` records the generating spec, the ground-truth
//! model(s), and the SHA-256 digest of `data.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{InstanceSpec, RegressionInstance};
use crate::error::{Error, Result};
use crate::linalg::{ActiveSet, DataMatrix, Model};

pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.csv";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub format_version: u32,
    pub spec: InstanceSpec,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub w_star: Model,
    #[serde(default)]
    pub theta_tilde: Option<Model>,
    /// Hex SHA-256 of the `data.csv` bytes.
    pub data_sha256: String,
}

/// Columns of `data.csv` after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceData {
    pub x: DataMatrix,
    pub y: Vec<f64>,
    pub b: Vec<f64>,
    pub eps: Vec<f64>,
    pub clean_set: ActiveSet,
}

fn push_float(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

/// Renders `data.csv` for an instance.
pub fn render_data_csv(inst: &RegressionInstance) -> String {
    let p = inst.x.p();
    let mut out = String::with_capacity(inst.x.n() * (p + 4) * 24);
    out.push_str("index");
    for j in 1..=p {
        write!(out, ",x_{j}").unwrap();
    }
    out.push_str(",y,b,eps,is_clean\r\n");
    for i in 0..inst.x.n() {
        write!(out, "{i}").unwrap();
        for &v in inst.x.sample(i) {
            out.push(',');
            push_float(&mut out, v);
        }
        for v in [inst.y[i], inst.b[i], inst.eps[i]] {
            out.push(',');
            push_float(&mut out, v);
        }
        out.push_str(if inst.clean_set.contains(i) { ",1\r\n" } else { ",0\r\n" });
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest identifying an instance's data, as stored in `meta.json`.
pub fn instance_digest(inst: &RegressionInstance) -> String {
    sha256_hex(render_data_csv(inst).as_bytes())
}

pub fn build_meta(inst: &RegressionInstance, data_csv: &str) -> InstanceMeta {
    InstanceMeta {
        format_version: FORMAT_VERSION,
        spec: inst.spec.clone(),
        p: inst.x.p(),
        n: inst.x.n(),
        seed: inst.spec.seed,
        w_star: inst.w_star.clone(),
        theta_tilde: inst.theta_tilde.clone(),
        data_sha256: sha256_hex(data_csv.as_bytes()),
    }
}

/// Writes `meta.json` and `data.csv` into `dir` (created if missing).
pub fn write_instance(dir: &Path, inst: &RegressionInstance) -> Result<InstanceMeta> {
    fs::create_dir_all(dir)?;
    let csv = render_data_csv(inst);
    let meta = build_meta(inst, &csv);
    fs::write(dir.join(DATA_FILE), &csv)?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(meta)
}

pub fn parse_meta(text: &str) -> Result<InstanceMeta> {
    let meta: InstanceMeta = serde_json::from_str(text)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }
    if meta.p == 0 || meta.n == 0 || meta.w_star.len() != meta.p {
        return Err(Error::Parse("meta.json dimensions are inconsistent".into()));
    }
    if meta.theta_tilde.as_ref().is_some_and(|t| t.len() != meta.p) {
        return Err(Error::Parse("theta_tilde has the wrong length".into()));
    }
    if meta.data_sha256.len() != 64 || !meta.data_sha256.bytes().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::Parse("data_sha256 is not a hex SHA-256 digest".into()));
    }
    Ok(meta)
}

fn parse_float(field: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: `{field}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("row {row}: non-finite value")))
    }
}

/// Parses `data.csv`. The feature count is taken from the header.
pub fn parse_data_csv(text: &str) -> Result<InstanceData> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty data file".into()))?
        .split(',')
        .collect();
    if header.len() < 5
        || header[0] != "index"
        || header[header.len() - 4..] != ["y", "b", "eps", "is_clean"]
    {
        return Err(Error::Parse("unexpected data.csv header".into()));
    }
    let p = header.len() - 5;
    if header[1..=p]
        .iter()
        .enumerate()
        .any(|(j, h)| *h != format!("x_{}", j + 1))
    {
        return Err(Error::Parse("feature columns must be x_1..x_p".into()));
    }
    if p == 0 {
        return Err(Error::Parse("data.csv has no feature columns".into()));
    }

    let (mut entries, mut y, mut b, mut eps, mut clean) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let row = y.len();
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 5 {
            return Err(Error::Parse(format!(
                "row {row}: expected {} fields, found {}",
                p + 5,
                fields.len()
            )));
        }
        if fields[0].trim().parse::<usize>().ok() != Some(row) {
            return Err(Error::Parse(format!("row {row}: index out of sequence")));
        }
        for f in &fields[1..=p] {
            entries.push(parse_float(f, row)?);
        }
        y.push(parse_float(fields[p + 1], row)?);
        b.push(parse_float(fields[p + 2], row)?);
        eps.push(parse_float(fields[p + 3], row)?);
        match fields[p + 4].trim() {
            "1" => clean.push(row),
            "0" => {}
            other => {
                return Err(Error::Parse(format!("row {row}: is_clean must be 0 or 1, got `{other}`")))
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Parse("data.csv has no rows".into()));
    }
    Ok(InstanceData {
        x: DataMatrix::from_column_major(p, n, entries)
            .map_err(|e| Error::Parse(e.to_string()))?,
        y,
        b,
        eps,
        clean_set: ActiveSet::from_sorted(clean, n).expect("rows are visited in order"),
    })
}

/// Reads an instance directory and checks the data digest and dimensions.
pub fn read_instance(dir: &Path) -> Result<RegressionInstance> {
    let meta = parse_meta(&fs::read_to_string(dir.join(META_FILE))?)?;
    let csv = fs::read_to_string(dir.join(DATA_FILE))?;
    let digest = sha256_hex(csv.as_bytes());
    if digest != meta.data_sha256 {
        return Err(Error::Parse(format!(
            "data.csv digest {digest} does not match meta.json {}",
            meta.data_sha256
        )));
    }
    let data = parse_data_csv(&csv)?;
    if data.x.p() != meta.p || data.x.n() != meta.n {
        return Err(Error::Parse("data.csv shape disagrees with meta.json".into()));
    }
    Ok(RegressionInstance {
        spec: meta.spec,
        x: data.x,
        y: data.y,
        w_star: meta.w_star,
        theta_tilde: meta.theta_tilde,
        b: data.b,
        eps: data.eps,
        clean_set: data.clean_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_instance;

    #[test]
    fn round_trip_is_lossless() {
        let inst = gen_instance(&InstanceSpec::gaussian(3, 25, 0.2, 0.1, 42)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let meta = write_instance(dir.path(), &inst).unwrap();
        assert_eq!(meta.data_sha256, instance_digest(&inst));
        let back = read_instance(dir.path()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn tampered_data_is_rejected() {
        let inst = gen_instance(&InstanceSpec::gaussian(2, 5, 0.2, 0.0, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_instance(dir.path(), &inst).unwrap();
        let path = dir.path().join(DATA_FILE);
        let text = fs::read_to_string(&path).unwrap().replacen(",1\r\n", ",0\r\n", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(read_instance(dir.path()), Err(Error::Parse(_))));
    }

    #[test]
    fn malformed_csv() {
        for text in [
            "",
            "index,y,b,eps,is_clean\n",
            "index,x_1,y,b,eps,is_clean\n0,1,2,3,4,2\n",
            "index,x_1,y,b,eps,is_clean\n1,1,2,3,4,1\n",
            "index,x_1,y,b,eps,is_clean\n0,nan,2,3,4,1\n",
            "index,x_1,y,b,eps,is_clean\n0,1,2,3,4\n",
            "index,x_2,y,b,eps,is_clean\n0,1,2,3,4,1\n",
            "index,x_1,y,b,eps,is_clean\n",
        ] {
            assert!(parse_data_csv(text).is_err(), "{text:?}");
        }
        let ok = parse_data_csv("index,x_1,y,b,eps,is_clean\n0,1,2,0,0,1\n1,2,9,5,0,0\n").unwrap();
        assert_eq!(ok.clean_set.indices(), &[0]);
        assert_eq!(ok.y, vec![2.0, 9.0]);
    }
}
