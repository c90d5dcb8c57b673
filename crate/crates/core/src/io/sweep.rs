//! LiDAR sweeps.
//!
//! ```text
//! magic "SWP1", u32 version = 1, u64 N
//! N x (3 f64 x, y, z (m), u32 row, u32 col)
//! ```
//!
//! The CSV form has the header `x,y,z,row,col`.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::binary::{Reader, Writer};
use super::{read_bytes, write_atomic};
use crate::lidar_sim::Sweep;
use crate::occupancy::LabeledPoint;
use crate::{Error, Result};

pub const SWP_MAGIC: &[u8; 4] = b"SWP1";
const VERSION: u32 = 1;
const FORMAT: &str = "sweep";

pub fn encode_sweep(sweep: &Sweep) -> Result<Vec<u8>> {
    check(sweep)?;
    let mut w = Writer::new(SWP_MAGIC, VERSION);
    w.u64(sweep.points.len() as u64);
    for (p, &(row, col)) in sweep.points.iter().zip(&sweep.beam_ids) {
        w.vec3(p);
        w.u32(row);
        w.u32(col);
    }
    Ok(w.buf)
}

pub fn decode_sweep(bytes: &[u8]) -> Result<Sweep> {
    let (mut r, version) = Reader::open(bytes, SWP_MAGIC, FORMAT)?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let n = usize::try_from(r.u64()?).map_err(|_| r.error("point count overflows"))?;
    r.expect(n, 32)?;
    let mut sweep = Sweep {
        points: Vec::with_capacity(n),
        beam_ids: Vec::with_capacity(n),
    };
    for _ in 0..n {
        sweep.points.push(r.vec3()?);
        sweep.beam_ids.push((r.u32()?, r.u32()?));
    }
    r.finish()?;
    Ok(sweep)
}

fn check(sweep: &Sweep) -> Result<()> {
    if sweep.points.len() != sweep.beam_ids.len() {
        return Err(Error::Dimension {
            what: "sweep beam ids",
            expected: sweep.points.len(),
            got: sweep.beam_ids.len(),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    z: f64,
    row: u32,
    col: u32,
}

pub fn write_sweep(path: &Path, sweep: &Sweep) -> Result<()> {
    write_atomic(path, &encode_sweep(sweep)?)
}

pub fn read_sweep(path: &Path) -> Result<Sweep> {
    decode_sweep(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { format, message } => Error::Format {
            format,
            message: format!("{}: {message}", path.display()),
        },
        e => e,
    })
}

pub fn write_sweep_csv(path: &Path, sweep: &Sweep) -> Result<()> {
    check(sweep)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (p, &(row, col)) in sweep.points.iter().zip(&sweep.beam_ids) {
        w.serialize(Row { x: p.x, y: p.y, z: p.z, row, col })
            .map_err(|e| Error::format("csv", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_sweep_csv(path: &Path) -> Result<Sweep> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let mut sweep = Sweep::default();
    for rec in reader.deserialize::<Row>() {
        let r = rec.map_err(|e| csv_error(path, e))?;
        sweep.points.push(Vector3::new(r.x, r.y, r.z));
        sweep.beam_ids.push((r.row, r.col));
    }
    Ok(sweep)
}

#[derive(Serialize, Deserialize)]
struct LabeledRow {
    x: f64,
    y: f64,
    z: f64,
    class: u8,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Semantic points as CSV with header `x,y,z,class`.
pub fn read_labeled_points(path: &Path) -> Result<Vec<LabeledPoint>> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    reader
        .deserialize::<LabeledRow>()
        .map(|rec| {
            let r = rec.map_err(|e| csv_error(path, e))?;
            Ok(LabeledPoint {
                position: Vector3::new(r.x, r.y, r.z),
                class: r.class,
            })
        })
        .collect()
}

pub fn write_labeled_points(path: &Path, points: &[LabeledPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(LabeledRow {
            x: p.position.x,
            y: p.position.y,
            z: p.position.z,
            class: p.class,
        })
        .map_err(|e| Error::format("csv", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Reads a sweep in either form, choosing CSV for a `.csv` extension.
pub fn read_point_cloud(path: &Path) -> Result<Sweep> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let sweep = if is_csv { read_sweep_csv(path)? } else { read_sweep(path)? };
    if let Some(i) = sweep.points.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::Domain(format!("{}: point {i} is not finite", path.display())));
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Sweep {
        Sweep {
            points: vec![Vector3::new(1.0, -2.5, 0.125), Vector3::new(0.1, 0.2, 0.3)],
            beam_ids: vec![(0, 5), (127, 2047)],
        }
    }

    #[test]
    fn binary_round_trip() {
        let s = sample();
        let bytes = encode_sweep(&s).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 32);
        assert_eq!(decode_sweep(&bytes).unwrap(), s);
        assert!(decode_sweep(&bytes[..40]).is_err());
        assert!(decode_sweep(b"SWP2\x01\0\0\0").is_err());
    }

    #[test]
    fn csv_round_trip_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.csv");
        write_sweep_csv(&p, &sample()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x,y,z,row,col\n"));
        assert_eq!(read_point_cloud(&p).unwrap(), sample());

        std::fs::write(&p, "x,y,z,row,col\n1,2,3,0,0\n1,2,zz,0,1\n").unwrap();
        match read_point_cloud(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        std::fs::write(&p, "x,y,z,row,col\n1,2,NaN,0,0\n").unwrap();
        assert!(read_point_cloud(&p).is_err());
    }

    #[test]
    fn labeled_points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labeled.csv");
        let pts = vec![
            LabeledPoint { position: Vector3::new(1.0, 2.0, 3.0), class: 5 },
            LabeledPoint { position: Vector3::new(-1.5, 0.0, 0.25), class: 9 },
        ];
        write_labeled_points(&p, &pts).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("x,y,z,class\n"));
        assert_eq!(read_labeled_points(&p).unwrap(), pts);
        std::fs::write(&p, "x,y,z,class\n1,2,3,-4\n").unwrap();
        assert!(matches!(read_labeled_points(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn binary_file_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.swp");
        write_sweep(&p, &sample()).unwrap();
        assert_eq!(read_point_cloud(&p).unwrap(), sample());
    }
}
