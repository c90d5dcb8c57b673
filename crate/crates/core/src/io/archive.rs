//! Body-model archive.
//!
//! ```text
//! magic "BMA1", u32 version = 1
//! u32 V, F, J, B, P (parts), K (keypoint links), H (hinges)
//! V x 3 f64        template vertices (m)
//! F x 3 u32        faces
//! V x B x 3 f64    shape directions, vertex-major
//! J x V f64        joint regressor, row-major
//! J i32            parents, -1 for the root
//! V x J f64        skinning weights, row-major
//! V u32            part of each vertex
//! J u32            part of each joint
//! K x (u32, u32)   (model joint, detector joint id)
//! P x (u32 n, n x u32)   detector joints informative for each part
//! H x (u32 joint, u32 axis, f64 sign)   hinge flexion coordinates
//! ```

use std::path::Path;

use super::binary::{Reader, Writer};
use super::{read_bytes, write_atomic};
use crate::body_model::{BodyModel, BodyModelData, HingeJoint, KeypointLink};
use crate::{Error, Result};

pub const BMA_MAGIC: &[u8; 4] = b"BMA1";
const VERSION: u32 = 1;
const FORMAT: &str = "body-model archive";

pub fn encode_body_model(model: &BodyModel) -> Result<Vec<u8>> {
    let d = model.data();
    let mut w = Writer::new(BMA_MAGIC, VERSION);
    for n in [
        d.template_vertices.len(),
        d.faces.len(),
        d.parents.len(),
        d.num_betas,
        d.part_joint_sets.len(),
        d.keypoint_map.len(),
        d.hinges.len(),
    ] {
        w.len(n)?;
    }
    d.template_vertices.iter().for_each(|v| w.vec3(v));
    for f in &d.faces {
        for &i in f {
            w.len(i)?;
        }
    }
    d.shape_dirs.iter().for_each(|v| w.vec3(v));
    d.joint_regressor.iter().for_each(|&x| w.f64(x));
    for p in &d.parents {
        w.i32(p.map_or(-1, |p| p as i32));
    }
    d.skinning_weights.iter().for_each(|&x| w.f64(x));
    d.part_of_vertex.iter().for_each(|&x| w.u32(x));
    d.part_of_joint.iter().for_each(|&x| w.u32(x));
    for k in &d.keypoint_map {
        w.len(k.joint)?;
        w.len(k.detector)?;
    }
    for set in &d.part_joint_sets {
        w.len(set.len())?;
        for &j in set {
            w.len(j)?;
        }
    }
    for h in &d.hinges {
        w.len(h.joint)?;
        w.len(h.axis)?;
        w.f64(h.sign);
    }
    Ok(w.buf)
}

pub fn decode_body_model(bytes: &[u8]) -> Result<BodyModel> {
    let (mut r, version) = Reader::open(bytes, BMA_MAGIC, FORMAT)?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let mut counts = [0usize; 7];
    for c in &mut counts {
        *c = r.len()?;
    }
    let [v, f, j, b, p, k, h] = counts;

    r.expect(v, 24)?;
    let template_vertices = (0..v).map(|_| r.vec3()).collect::<Result<Vec<_>>>()?;
    r.expect(f, 12)?;
    let faces = (0..f).map(|_| Ok([r.len()?, r.len()?, r.len()?])).collect::<Result<Vec<_>>>()?;
    r.expect(v.saturating_mul(b), 24)?;
    let shape_dirs = (0..v * b).map(|_| r.vec3()).collect::<Result<Vec<_>>>()?;
    r.expect(j.saturating_mul(v), 8)?;
    let joint_regressor = (0..j * v).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let parents = (0..j)
        .map(|_| {
            let p = r.i32()?;
            match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(r.error(format!("invalid parent index {p}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    r.expect(v.saturating_mul(j), 8)?;
    let skinning_weights = (0..v * j).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let part_of_vertex = (0..v).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let part_of_joint = (0..j).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    r.expect(k, 8)?;
    let keypoint_map = (0..k)
        .map(|_| {
            Ok(KeypointLink {
                joint: r.len()?,
                detector: r.len()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut part_joint_sets = Vec::with_capacity(p.min(r.remaining()));
    for _ in 0..p {
        let n = r.len()?;
        r.expect(n, 4)?;
        part_joint_sets.push((0..n).map(|_| r.len()).collect::<Result<Vec<_>>>()?);
    }
    r.expect(h, 16)?;
    let hinges = (0..h)
        .map(|_| {
            Ok(HingeJoint {
                joint: r.len()?,
                axis: r.len()?,
                sign: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;

    BodyModel::new(BodyModelData {
        template_vertices,
        faces,
        shape_dirs,
        num_betas: b,
        joint_regressor,
        parents,
        skinning_weights,
        part_of_vertex,
        part_of_joint,
        keypoint_map,
        part_joint_sets,
        hinges,
    })
}

pub fn write_body_model(path: &Path, model: &BodyModel) -> Result<()> {
    write_atomic(path, &encode_body_model(model)?)
}

pub fn read_body_model(path: &Path) -> Result<BodyModel> {
    decode_body_model(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { format, message } => Error::Format {
            format,
            message: format!("{}: {message}", path.display()),
        },
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{toy_model, ToyModelConfig};

    #[test]
    fn round_trip_is_exact() {
        let model = toy_model(&ToyModelConfig::coarse()).unwrap();
        let bytes = encode_body_model(&model).unwrap();
        assert_eq!(&bytes[..4], b"BMA1");
        let back = decode_body_model(&bytes).unwrap();
        assert_eq!(back.data(), model.data());
        assert_eq!(encode_body_model(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corrupt_archives() {
        let model = toy_model(&ToyModelConfig::coarse()).unwrap();
        let bytes = encode_body_model(&model).unwrap();
        assert!(matches!(decode_body_model(b"NOPE"), Err(Error::Format { .. })));
        assert!(matches!(decode_body_model(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_body_model(&extra).is_err());
        // a vertex count far beyond the payload is caught before allocating
        let mut huge = bytes.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_body_model(&huge), Err(Error::Format { .. })));
        // well-formed bytes but invalid model content
        let mut bad_face = bytes;
        let face_start = 8 + 7 * 4 + model.num_vertices() * 24;
        bad_face[face_start..face_start + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_body_model(&bad_face), Err(Error::Model(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.bma");
        let model = toy_model(&ToyModelConfig::coarse()).unwrap();
        write_body_model(&path, &model).unwrap();
        assert_eq!(read_body_model(&path).unwrap().data(), model.data());
    }
}
