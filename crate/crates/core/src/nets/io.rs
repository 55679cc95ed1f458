use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// First line of every manifest.
pub const MANIFEST_HEADER: &str = "homac-params v1";

pub type Shapes = Vec<(String, Vec<usize>)>;

/// Writes `stem.bin` (little-endian `f64`s) and `stem.manifest` (one
/// `name d1xd2...` line per tensor) into `dir`.
pub fn save_params(dir: &Path, stem: &str, params: &[f64], shapes: &[(String, Vec<usize>)]) -> Result<()> {
    let declared: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if declared != params.len() {
        return Err(Error::Dimension(format!(
            "manifest declares {declared} values but {} were given",
            params.len()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(dir.join(format!("{stem}.bin")), bytes)?;
    let mut text = format!("{MANIFEST_HEADER}\ntotal {}\n", params.len());
    for (name, shape) in shapes {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        text.push_str(&format!("{name} {}\n", dims.join("x")));
    }
    fs::write(dir.join(format!("{stem}.manifest")), text)?;
    Ok(())
}

pub fn load_params(dir: &Path, stem: &str) -> Result<(Vec<f64>, Shapes)> {
    let text = fs::read_to_string(dir.join(format!("{stem}.manifest")))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Parse(format!("{stem}.manifest: unknown header")));
    }
    let total: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("total "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("{stem}.manifest: missing total")))?;
    let mut shapes = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let (name, dims) = line
            .rsplit_once(' ')
            .ok_or_else(|| Error::Parse(format!("bad manifest line '{line}'")))?;
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("bad shape in '{line}': {e}")))?;
        shapes.push((name.to_string(), shape));
    }
    let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
    if bytes.len() != total * 8 {
        return Err(Error::Parse(format!(
            "{stem}.bin holds {} bytes, manifest expects {} values",
            bytes.len(),
            total
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((params, shapes))
}
