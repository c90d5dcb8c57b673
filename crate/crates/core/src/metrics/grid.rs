use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::occupancy::{check_spec, class, Cell, CellState, VoxelGrid};
use crate::{Error, Result};

/// Center distance (m, in the ground plane) within which AVE-D pairs detections.
pub const AVE_D_RADIUS: f64 = 1.0;

/// Cells observed in both grids, as `(index, pred, gt)`.
fn evaluated_cells(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<Vec<(usize, Cell, Cell)>> {
    check_spec("predicted grid", pred.spec(), gt.spec())?;
    Ok(gt
        .known_cells()
        .into_iter()
        .filter_map(|(i, g)| {
            let p = pred.get(i);
            (p.state != CellState::Unknown).then_some((i, p, g))
        })
        .collect())
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `None` for classes absent from both grids.
    pub per_class: BTreeMap<u8, Option<f64>>,
    /// Mean over the classes that occur in either grid.
    pub miou: Option<f64>,
    /// Occupied versus free, ignoring class.
    pub geometric: Option<f64>,
}

/// Voxel IoU per class, its mean, and class-agnostic geometric IoU.
/// Cells unknown in either grid are left out.
pub fn occ_iou(pred: &VoxelGrid, gt: &VoxelGrid, classes: &[u8]) -> Result<IouReport> {
    let cells = evaluated_cells(pred, gt)?;
    let mut inter = BTreeMap::<u8, usize>::new();
    let mut union = BTreeMap::<u8, usize>::new();
    let (mut g_inter, mut g_union) = (0, 0);
    for (_, p, g) in &cells {
        let (po, go) = (p.state == CellState::Occupied, g.state == CellState::Occupied);
        g_inter += (po && go) as usize;
        g_union += (po || go) as usize;
        if po && go && p.class == g.class {
            *inter.entry(p.class).or_default() += 1;
            *union.entry(p.class).or_default() += 1;
        } else {
            for c in [po.then_some(p.class), go.then_some(g.class)].into_iter().flatten() {
                *union.entry(c).or_default() += 1;
            }
        }
    }
    let per_class: BTreeMap<u8, Option<f64>> = classes
        .iter()
        .map(|&c| (c, ratio(inter.get(&c).copied().unwrap_or(0), union.get(&c).copied().unwrap_or(0))))
        .collect();
    let present: Vec<f64> = per_class.values().flatten().copied().collect();
    Ok(IouReport {
        miou: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
        per_class,
        geometric: ratio(g_inter, g_union),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPanoptic {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Plain IoU of the class segments; only meaningful for stuff classes.
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanopticReport {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    /// Stuff classes contribute their IoU instead of PQ.
    pub pq_dagger: f64,
    /// Classes occurring in either grid.
    pub per_class: BTreeMap<u8, ClassPanoptic>,
    pub pedestrian: Option<ClassPanoptic>,
}

type Segment = (u8, u16);

/// Panoptic quality over the observed cells of both grids.
///
/// Every pedestrian instance is a segment; each stuff class is one segment.
/// Segments of the same class match when their IoU exceeds 0.5.
pub fn panoptic_quality(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<PanopticReport> {
    let cells = evaluated_cells(pred, gt)?;
    let mut pred_size = BTreeMap::<Segment, usize>::new();
    let mut gt_size = BTreeMap::<Segment, usize>::new();
    let mut inter = BTreeMap::<(Segment, Segment), usize>::new();
    let segment = |c: &Cell, which: &str, i: usize| -> Result<Option<Segment>> {
        if c.state != CellState::Occupied {
            return Ok(None);
        }
        if class::is_thing(c.class) && c.instance == 0 {
            return Err(Error::Domain(format!("{which} cell {i}: {} without an instance id", class::name(c.class).unwrap_or("?"))));
        }
        Ok(Some((c.class, c.instance)))
    };
    for (i, p, g) in &cells {
        let ps = segment(p, "predicted", *i)?;
        let gs = segment(g, "ground-truth", *i)?;
        if let Some(s) = ps {
            *pred_size.entry(s).or_default() += 1;
        }
        if let Some(s) = gs {
            *gt_size.entry(s).or_default() += 1;
        }
        if let (Some(a), Some(b)) = (ps, gs) {
            if a.0 == b.0 {
                *inter.entry((a, b)).or_default() += 1;
            }
        }
    }

    let classes: BTreeSet<u8> = pred_size.keys().chain(gt_size.keys()).map(|s| s.0).collect();
    let mut per_class = BTreeMap::new();
    for c in classes {
        let mut matched_pred = BTreeSet::new();
        let mut matched_gt = BTreeSet::new();
        let mut iou_sum = 0.0;
        let mut stuff_iou = 0.0;
        for (&(ps, gs), &n) in inter.range(((c, 0), (c, 0))..=((c, u16::MAX), (c, u16::MAX))) {
            let iou = n as f64 / (pred_size[&ps] + gt_size[&gs] - n) as f64;
            if !class::is_thing(c) {
                stuff_iou = iou;
            }
            // IoU above one half makes the match unique.
            if iou > 0.5 {
                matched_pred.insert(ps);
                matched_gt.insert(gs);
                iou_sum += iou;
            }
        }
        let tp = matched_gt.len();
        let fp = pred_size.keys().filter(|s| s.0 == c && !matched_pred.contains(s)).count();
        let fn_ = gt_size.keys().filter(|s| s.0 == c && !matched_gt.contains(s)).count();
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
        let rq = tp as f64 / denom;
        per_class.insert(
            c,
            ClassPanoptic {
                pq: iou_sum / denom,
                sq,
                rq,
                tp,
                fp,
                fn_,
                iou: stuff_iou,
            },
        );
    }

    let mean = |f: &dyn Fn(u8, &ClassPanoptic) -> f64| {
        if per_class.is_empty() {
            1.0
        } else {
            per_class.iter().map(|(&c, p)| f(c, p)).sum::<f64>() / per_class.len() as f64
        }
    };
    Ok(PanopticReport {
        pq: mean(&|_, p| p.pq),
        sq: mean(&|_, p| p.sq),
        rq: mean(&|_, p| p.rq),
        pq_dagger: mean(&|c, p| if class::is_thing(c) { p.pq } else { p.iou }),
        pedestrian: per_class.get(&class::PEDESTRIAN).copied(),
        per_class,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AveMode {
    /// Every ground-truth pedestrian voxel.
    T,
    /// Pedestrian instances matched by center distance.
    D,
    /// Voxels labeled pedestrian in both grids.
    O,
}

fn velocity(c: &Cell) -> Vector2<f64> {
    c.velocity.map_or(Vector2::zeros(), |v| Vector2::new(v[0] as f64, v[1] as f64))
}

#[derive(Default)]
struct Instance {
    center: Vector2<f64>,
    velocity: Vector2<f64>,
    n: usize,
}

fn pedestrian_instances(cells: &[(usize, Cell)], grid: &VoxelGrid) -> BTreeMap<u16, Instance> {
    let mut out = BTreeMap::<u16, Instance>::new();
    for (i, c) in cells {
        if c.state == CellState::Occupied && c.class == class::PEDESTRIAN {
            let p = grid.spec().cell_center(grid.spec().unlinear(*i));
            let e = out.entry(c.instance).or_default();
            e.center += p.xy();
            e.velocity += velocity(c);
            e.n += 1;
        }
    }
    for e in out.values_mut() {
        e.center /= e.n as f64;
        e.velocity /= e.n as f64;
    }
    out
}

/// Absolute velocity error in m/s; `None` when the mode has nothing to count.
/// A missing velocity counts as zero.
pub fn ave(pred: &VoxelGrid, gt: &VoxelGrid, mode: AveMode) -> Result<Option<f64>> {
    let cells = evaluated_cells(pred, gt)?;
    let is_ped = |c: &Cell| c.state == CellState::Occupied && c.class == class::PEDESTRIAN;
    let errors: Vec<f64> = match mode {
        AveMode::T | AveMode::O => cells
            .iter()
            .filter(|(_, p, g)| is_ped(g) && (mode == AveMode::T || is_ped(p)))
            .map(|(_, p, g)| (velocity(p) - velocity(g)).norm())
            .collect(),
        AveMode::D => {
            let gi = pedestrian_instances(&cells.iter().map(|(i, _, g)| (*i, *g)).collect::<Vec<_>>(), gt);
            let pi = pedestrian_instances(&cells.iter().map(|(i, p, _)| (*i, *p)).collect::<Vec<_>>(), pred);
            let mut pairs: Vec<(f64, u16, u16)> = gi
                .iter()
                .flat_map(|(&g, gv)| pi.iter().map(move |(&p, pv)| ((gv.center - pv.center).norm(), g, p)))
                .filter(|(d, _, _)| *d <= AVE_D_RADIUS)
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let (mut used_g, mut used_p) = (BTreeSet::new(), BTreeSet::new());
            let mut errors = Vec::new();
            for (_, g, p) in pairs {
                if used_g.contains(&g) || used_p.contains(&p) {
                    continue;
                }
                used_g.insert(g);
                used_p.insert(p);
                errors.push((pi[&p].velocity - gi[&g].velocity).norm());
            }
            errors
        }
    };
    Ok((!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::GridSpec;

    fn spec() -> GridSpec {
        GridSpec::new([0.0; 3], [4.0, 4.0, 1.0], 0.5).unwrap()
    }

    fn grid(cells: &[(usize, Cell)]) -> VoxelGrid {
        let mut g = VoxelGrid::new(spec());
        for &(i, c) in cells {
            g.set(i, c).unwrap();
        }
        g
    }

    fn ped(id: u16) -> Cell {
        Cell::occupied(class::PEDESTRIAN, id, None)
    }

    fn stuff(c: u8) -> Cell {
        Cell::occupied(c, 0, None)
    }

    /// Cells `0..n` free, then `occupied` written on top.
    fn scene(n: usize, occupied: &[(usize, Cell)]) -> VoxelGrid {
        let mut cells: Vec<(usize, Cell)> = (0..n).map(|i| (i, Cell::FREE)).collect();
        cells.extend_from_slice(occupied);
        grid(&cells)
    }

    #[test]
    fn iou_examples() {
        let a = scene(10, &[(0, stuff(class::CAR)), (1, stuff(class::CAR)), (2, stuff(class::CAR))]);
        let r = occ_iou(&a, &a, &class::ALL).unwrap();
        assert_eq!(r.per_class[&class::CAR], Some(1.0));
        assert_eq!(r.per_class[&class::ROAD], None);
        assert_eq!(r.miou, Some(1.0));
        assert_eq!(r.geometric, Some(1.0));

        let b = scene(10, &[(5, stuff(class::CAR)), (6, stuff(class::CAR))]);
        let r = occ_iou(&a, &b, &class::ALL).unwrap();
        assert_eq!(r.per_class[&class::CAR], Some(0.0));
        assert_eq!(r.geometric, Some(0.0));

        // two shared cells, one exclusive to each side
        let p = scene(10, &[(0, stuff(class::CAR)), (1, stuff(class::CAR)), (2, stuff(class::CAR))]);
        let g = scene(10, &[(0, stuff(class::CAR)), (1, stuff(class::CAR)), (3, stuff(class::CAR))]);
        let r = occ_iou(&p, &g, &[class::CAR]).unwrap();
        assert_eq!(r.per_class[&class::CAR], Some(0.5));
        assert_eq!(r.geometric, Some(0.5));
    }

    #[test]
    fn iou_ignores_unknown_cells() {
        let p = scene(10, &[(0, stuff(class::CAR)), (1, stuff(class::CAR))]);
        // cell 1 unobserved in the ground truth
        let g = grid(&[(0, stuff(class::CAR)), (2, Cell::FREE)]);
        let r = occ_iou(&p, &g, &[class::CAR]).unwrap();
        assert_eq!(r.per_class[&class::CAR], Some(1.0));
        let other = VoxelGrid::new(GridSpec::new([0.0; 3], [1.0; 3], 0.5).unwrap());
        assert!(occ_iou(&other, &g, &[]).is_err());
    }

    #[test]
    fn class_confusion_counts_against_both_classes() {
        let p = scene(4, &[(0, stuff(class::CAR))]);
        let g = scene(4, &[(0, stuff(class::TRUCK))]);
        let r = occ_iou(&p, &g, &[class::CAR, class::TRUCK]).unwrap();
        assert_eq!(r.per_class[&class::CAR], Some(0.0));
        assert_eq!(r.per_class[&class::TRUCK], Some(0.0));
        assert_eq!(r.geometric, Some(1.0));
    }

    #[test]
    fn panoptic_examples() {
        let g = scene(10, &(0..5).map(|i| (i, ped(1))).collect::<Vec<_>>());
        let perfect = panoptic_quality(&g, &g).unwrap();
        assert_eq!((perfect.pq, perfect.sq, perfect.rq), (1.0, 1.0, 1.0));

        // 3 of 5 cells: IoU 0.6
        let p = scene(10, &(0..3).map(|i| (i, ped(7))).collect::<Vec<_>>());
        let r = panoptic_quality(&p, &g).unwrap();
        let c = r.pedestrian.unwrap();
        assert!((c.pq - 0.6).abs() < 1e-12 && (c.sq - 0.6).abs() < 1e-12 && c.rq == 1.0);
        assert!((r.pq - 0.6).abs() < 1e-12);

        // 2 of 5 cells: IoU 0.4, one false positive and one false negative
        let p = scene(10, &(0..2).map(|i| (i, ped(7))).collect::<Vec<_>>());
        let c = panoptic_quality(&p, &g).unwrap().pedestrian.unwrap();
        assert_eq!((c.pq, c.tp, c.fp, c.fn_), (0.0, 0, 1, 1));
    }

    #[test]
    fn pq_dagger_uses_stuff_iou() {
        let p = scene(10, &[(0, stuff(class::ROAD)), (1, stuff(class::ROAD))]);
        let g = scene(10, &[(0, stuff(class::ROAD)), (2, stuff(class::ROAD)), (3, stuff(class::ROAD))]);
        let r = panoptic_quality(&p, &g).unwrap();
        // IoU 1/4 fails the match threshold but counts in PQ-dagger
        assert_eq!(r.pq, 0.0);
        assert!((r.pq_dagger - 0.25).abs() < 1e-12);
    }

    #[test]
    fn panoptic_requires_instances_on_pedestrians() {
        let g = scene(4, &[(0, ped(0))]);
        assert!(panoptic_quality(&g, &g).is_err());
    }

    fn random_grid(rng: &mut ChaCha8Rng) -> VoxelGrid {
        let n = spec().num_cells();
        let cells: Vec<(usize, Cell)> = (0..n)
            .map(|i| {
                let c = match rng.random_range(0..10) {
                    0 => Cell::UNKNOWN,
                    1..=4 => Cell::FREE,
                    5..=7 => ped(rng.random_range(1..4)),
                    _ => stuff(rng.random_range(2..=4)),
                };
                (i, c)
            })
            .collect();
        grid(&cells)
    }

    #[test]
    fn pq_factorizes_per_class_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let g = random_grid(&mut rng);
            // perturb a copy so that some segments match and some do not
            let mut p = g.clone();
            for i in 0..spec().num_cells() {
                if rng.random_bool(0.2) {
                    p.set(i, random_grid(&mut rng).get(i)).unwrap();
                }
            }
            let r = panoptic_quality(&p, &g).unwrap();
            for c in r.per_class.values() {
                assert!((c.pq - c.sq * c.rq).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn metrics_ignore_instance_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_grid(&mut rng);
        let p = random_grid(&mut rng);
        let relabel = |grid: &VoxelGrid| {
            let mut out = VoxelGrid::new(spec());
            for (i, mut c) in grid.known_cells() {
                if c.instance != 0 {
                    c.instance = 10 - c.instance;
                }
                out.set(i, c).unwrap();
            }
            out
        };
        assert_eq!(panoptic_quality(&p, &g).unwrap(), panoptic_quality(&relabel(&p), &relabel(&g)).unwrap());
        let a = occ_iou(&p, &g, &class::ALL).unwrap();
        assert_eq!(a, occ_iou(&relabel(&p), &relabel(&g), &class::ALL).unwrap());
        assert_eq!(a.geometric, occ_iou(&g, &p, &class::ALL).unwrap().geometric);
    }

    #[test]
    fn ave_examples() {
        let v = |x: f32| Cell::occupied(class::PEDESTRIAN, 1, Some([x, 0.0]));
        let g = scene(6, &[(0, v(1.0)), (1, v(1.0)), (2, v(1.0))]);
        for mode in [AveMode::T, AveMode::D, AveMode::O] {
            assert_eq!(ave(&g, &g, mode).unwrap(), Some(0.0));
        }
        let off = scene(6, &[(0, v(2.0)), (1, v(2.0)), (2, v(2.0))]);
        for mode in [AveMode::T, AveMode::D, AveMode::O] {
            assert!((ave(&off, &g, mode).unwrap().unwrap() - 1.0).abs() < 1e-12);
        }
        // cell 2 predicted as a car: AVE-O sees only cells 0 and 1
        let p = scene(6, &[(0, v(1.5)), (1, v(1.5)), (2, stuff(class::CAR))]);
        assert!((ave(&p, &g, AveMode::O).unwrap().unwrap() - 0.5).abs() < 1e-12);
        // AVE-T also counts cell 2 with zero predicted velocity
        assert!((ave(&p, &g, AveMode::T).unwrap().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let empty = scene(6, &[]);
        assert_eq!(ave(&empty, &empty, AveMode::T).unwrap(), None);
    }

    #[test]
    fn ave_d_matches_within_radius_greedily() {
        let s = spec();
        let at = |x: usize, y: usize| s.linear([x, y, 0]);
        let c = |id: u16, vx: f32| Cell::occupied(class::PEDESTRIAN, id, Some([vx, 0.0]));
        // two GT people 1.5 m apart; the prediction for person 1 sits 0.5 m away
        let g = scene(s.num_cells(), &[(at(0, 0), c(1, 1.0)), (at(3, 0), c(2, 1.0))]);
        let p = scene(s.num_cells(), &[(at(1, 0), c(5, 2.0)), (at(7, 7), c(6, 0.0))]);
        assert!((ave(&p, &g, AveMode::D).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let far = scene(s.num_cells(), &[(at(7, 7), c(6, 0.0))]);
        assert_eq!(ave(&far, &g, AveMode::D).unwrap(), None);
    }
}
