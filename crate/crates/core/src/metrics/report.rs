use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ave, mpere, mpjpe, occ_iou, pa_mpjpe, panoptic_quality, pve, AveMode, IouReport, Mpere, PanopticReport};
use crate::geometry::TriangleMesh;
use crate::occupancy::{class, VoxelGrid};
use crate::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshReport {
    pub pve_mm: f64,
    pub mpjpe_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa_mpjpe_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpere: Option<Mpere>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AveReport {
    pub t: Option<f64>,
    pub d: Option<f64>,
    pub o: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub iou: IouReport,
    pub panoptic: PanopticReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ave: Option<AveReport>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omitted {
    pub metric: String,
    pub reason: String,
}

/// Evaluation output. Serialized as JSON:
///
/// ```json
/// {
///   "mesh": {"pve_mm": 0.0, "mpjpe_mm": 0.0, "pa_mpjpe_mm": 0.0,
///            "mpere": {"value": 0.0, "edges": 120, "zero_length": 0}},
///   "occupancy": {
///     "iou": {"per_class": {"1": 1.0, "2": null}, "miou": 1.0, "geometric": 1.0},
///     "panoptic": {"pq": 1.0, "sq": 1.0, "rq": 1.0, "pq_dagger": 1.0,
///                  "per_class": {"1": {"pq": 1.0, "sq": 1.0, "rq": 1.0, "tp": 1, "fp": 0, "fn": 0, "iou": 0.0}},
///                  "pedestrian": {"pq": 1.0, "...": "..."}},
///     "ave": {"t": 0.0, "d": 0.0, "o": 0.0}
///   },
///   "omitted": [{"metric": "ave", "reason": "grids carry no velocities"}]
/// }
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancyReport>,
    #[serde(default)]
    pub omitted: Vec<Omitted>,
}

/// Fitted and reference meshes with their joints.
pub struct MeshPair<'a> {
    pub pred: &'a TriangleMesh,
    pub gt: &'a TriangleMesh,
    pub pred_joints: &'a [Vector3<f64>],
    pub gt_joints: &'a [Vector3<f64>],
}

impl MetricsReport {
    fn omit(&mut self, metric: &str, reason: impl Into<String>) {
        self.omitted.push(Omitted {
            metric: metric.into(),
            reason: reason.into(),
        });
    }

    pub fn add_mesh(&mut self, m: &MeshPair) -> Result<()> {
        let mut r = MeshReport {
            pve_mm: pve(&m.pred.vertices, &m.gt.vertices)?,
            mpjpe_mm: mpjpe(m.pred_joints, m.gt_joints)?,
            ..Default::default()
        };
        match pa_mpjpe(m.pred_joints, m.gt_joints) {
            Ok(v) => r.pa_mpjpe_mm = Some(v),
            Err(e) => self.omit("pa_mpjpe", e.to_string()),
        }
        match mpere(m.pred, m.gt) {
            Ok(v) => r.mpere = Some(v),
            Err(e) => self.omit("mpere", e.to_string()),
        }
        self.mesh = Some(r);
        Ok(())
    }

    pub fn add_occupancy(&mut self, pred: &VoxelGrid, gt: &VoxelGrid) -> Result<()> {
        let iou = occ_iou(pred, gt, &class::ALL)?;
        let panoptic = panoptic_quality(pred, gt)?;
        let ave_report = if pred.has_velocity() || gt.has_velocity() {
            let r = AveReport {
                t: ave(pred, gt, AveMode::T)?,
                d: ave(pred, gt, AveMode::D)?,
                o: ave(pred, gt, AveMode::O)?,
            };
            for (name, v) in [("ave_t", r.t), ("ave_d", r.d), ("ave_o", r.o)] {
                if v.is_none() {
                    self.omit(name, "no pedestrian voxels or detections to evaluate");
                }
            }
            Some(r)
        } else {
            self.omit("ave", "grids carry no velocities");
            None
        };
        self.occupancy = Some(OccupancyReport {
            iou,
            panoptic,
            ave: ave_report,
        });
        Ok(())
    }

    pub fn omit_mesh(&mut self, reason: &str) {
        for m in ["pve", "mpjpe", "pa_mpjpe", "mpere"] {
            self.omit(m, reason);
        }
    }

    pub fn omit_occupancy(&mut self, reason: &str) {
        for m in ["iou", "panoptic", "ave"] {
            self.omit(m, reason);
        }
    }

    /// Two-column plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = Vec::new();
        let num = |v: f64| format!("{v:.6}");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), num);
        if let Some(m) = &self.mesh {
            rows.push(("PVE (mm)".into(), num(m.pve_mm)));
            rows.push(("MPJPE (mm)".into(), num(m.mpjpe_mm)));
            if let Some(v) = m.pa_mpjpe_mm {
                rows.push(("PA-MPJPE (mm)".into(), num(v)));
            }
            if let Some(v) = m.mpere {
                rows.push(("MPERE".into(), num(v.value)));
            }
        }
        if let Some(o) = &self.occupancy {
            rows.push(("IoU".into(), opt(o.iou.geometric)));
            rows.push(("mIoU".into(), opt(o.iou.miou)));
            for (&c, &v) in &o.iou.per_class {
                rows.push((format!("IoU {}", class::name(c).unwrap_or("?")), opt(v)));
            }
            let p = &o.panoptic;
            rows.push(("PQ".into(), num(p.pq)));
            rows.push(("SQ".into(), num(p.sq)));
            rows.push(("RQ".into(), num(p.rq)));
            rows.push(("PQ-dagger".into(), num(p.pq_dagger)));
            if let Some(c) = p.pedestrian {
                rows.push(("PQ pedestrian".into(), num(c.pq)));
            }
            if let Some(a) = &o.ave {
                rows.push(("AVE-T (m/s)".into(), opt(a.t)));
                rows.push(("AVE-D (m/s)".into(), opt(a.d)));
                rows.push(("AVE-O (m/s)".into(), opt(a.o)));
            }
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        for o in &self.omitted {
            let _ = writeln!(out, "omitted {}: {}", o.metric, o.reason);
        }
        out
    }
}
