//! File formats.
//!
//! Binary formats are little-endian and start with a four-byte magic string
//! followed by a `u32` format version:
//!
//! - body-model archives (`BMA1`), see [`write_body_model`];
//! - LiDAR sweeps (`SWP1`), see [`write_sweep`], plus an `x,y,z,row,col` CSV form;
//! - voxel grids (`VOX1`), see [`write_voxel_grid`], plus a CSV dump.
//!
//! Parameters, keypoints, cameras and manifests are JSON. Every writer goes
//! through a temporary file in the target directory and a rename.

mod archive;
mod binary;
mod sweep;
mod voxel;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use archive::{decode_body_model, encode_body_model, read_body_model, write_body_model, BMA_MAGIC};
pub use sweep::{
    decode_sweep, encode_sweep, read_labeled_points, read_point_cloud, read_sweep, read_sweep_csv, write_labeled_points, write_sweep, write_sweep_csv, SWP_MAGIC,
};
pub use voxel::{decode_voxel_grid, encode_voxel_grid, read_voxel_grid, voxel_grid_csv, write_voxel_grid, VOX_MAGIC};

use crate::{Error, Result};

/// Writes `bytes` to `path` so that readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    // Temporary files are created owner-only; give the result ordinary permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| with_path(e, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::BodyParams;
    use crate::visibility::{Keypoint, Keypoints2D};

    #[test]
    fn json_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.json");
        let params = BodyParams::zeros(2, 3);
        write_json(&p, &params).unwrap();
        assert_eq!(read_json::<BodyParams>(&p).unwrap(), params);

        let k = dir.path().join("kp.json");
        std::fs::write(&k, "[\n  {\"joint_id\": 0, \"x\": 1.0, \"y\": 2.0, \"conf\": 0.5},\n  {\"joint_id\": 1, \"x\": oops}\n]").unwrap();
        match read_json::<Keypoints2D>(&k) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let kp = Keypoints2D::new(vec![Keypoint { joint_id: 3, x: 1.0, y: 2.0, conf: 0.9 }]).unwrap();
        let text = to_json(&kp).unwrap();
        assert!(text.trim_start().starts_with('['));
        assert!(matches!(read_json::<BodyParams>(&dir.path().join("missing.json")), Err(Error::Io(_))));
    }

    #[test]
    fn json_floats_are_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.json");
        let mut params = BodyParams::zeros(3, 2);
        params.beta = vec![0.023669906098281762, 0.09196515939662361, -0.10765947895126103];
        params.t_cam = nalgebra::Vector3::new(0.9513857468892207, 1.0 / 3.0, std::f64::consts::PI);
        write_json(&p, &params).unwrap();
        let back: BodyParams = read_json(&p).unwrap();
        for (a, b) in back.beta.iter().chain(back.t_cam.iter()).zip(params.beta.iter().chain(params.t_cam.iter())) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.bin");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
