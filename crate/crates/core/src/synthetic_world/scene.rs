use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera_geometry::Pose;
use crate::error::{Error, Result};
use crate::occlusion::Obstacle;

use super::geometry::{bbox, convex_overlap, oriented_rect, point_in_polygon, Polygon};

pub const STATIC_CLASSES: [&str; 4] = ["drivable", "crossing", "walkway", "carpark"];
/// Index 0 is background.
pub const OBJECT_CLASSES: [&str; 4] = ["background", "car", "truck", "pedestrian"];

pub const DRIVABLE: usize = 0;
pub const CROSSING: usize = 1;
pub const WALKWAY: usize = 2;
pub const CARPARK: usize = 3;

const SEGMENT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Lateral half-extent of the world around the road centerline.
    pub world_half_width: f64,
    /// Road arc length before and after the ego start.
    pub road_behind: f64,
    pub road_ahead: f64,
    pub road_width: [f64; 2],
    pub walkway_width: [f64; 2],
    pub max_curvature: f64,
    pub crossing_spacing: [f64; 2],
    pub carpark_probability: f64,
    pub carpark_depth: [f64; 2],
    pub vehicle_count: [usize; 2],
    pub truck_fraction: f64,
    pub pedestrian_probability: f64,
    pub occluder_count: [usize; 2],
    pub occluder_size: [f64; 2],
    pub occluder_height: [f64; 2],
    /// Arc-length window (relative to the ego start) where occluders go.
    pub occluder_span: [f64; 2],
    pub ego_speed: f64,
    pub time_step: f64,
    pub trajectory_steps: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            world_half_width: 80.0,
            road_behind: 40.0,
            road_ahead: 160.0,
            road_width: [7.0, 10.0],
            walkway_width: [2.0, 3.5],
            max_curvature: 0.01,
            crossing_spacing: [18.0, 30.0],
            carpark_probability: 0.6,
            carpark_depth: [8.0, 15.0],
            vehicle_count: [3, 7],
            truck_fraction: 0.3,
            pedestrian_probability: 0.7,
            occluder_count: [2, 5],
            occluder_size: [4.0, 10.0],
            occluder_height: [4.0, 10.0],
            occluder_span: [5.0, 85.0],
            ego_speed: 5.0,
            time_step: 0.5,
            trajectory_steps: 13,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() || (positive && r[0] <= 0.0) {
        return Err(Error::Generation(format!("bad {name} range {r:?}")));
    }
    Ok(())
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        check_range("road width", self.road_width, true)?;
        check_range("walkway width", self.walkway_width, true)?;
        check_range("crossing spacing", self.crossing_spacing, true)?;
        check_range("carpark depth", self.carpark_depth, true)?;
        check_range("occluder size", self.occluder_size, true)?;
        check_range("occluder height", self.occluder_height, true)?;
        check_range("occluder span", self.occluder_span, false)?;
        if self.vehicle_count[0] > self.vehicle_count[1] || self.occluder_count[0] > self.occluder_count[1] {
            return Err(Error::Generation("count ranges must be ordered".into()));
        }
        let used = 0.5 * self.road_width[1] + self.walkway_width[1] + self.carpark_depth[1];
        if used >= self.world_half_width {
            return Err(Error::Generation(format!(
                "road, walkways and carparks need {used} m but the world is {} m wide on each side",
                self.world_half_width
            )));
        }
        if !(self.ego_speed >= 0.0 && self.time_step > 0.0) || self.trajectory_steps == 0 {
            return Err(Error::Generation("ego motion needs a positive time step and steps".into()));
        }
        let travel = self.ego_speed * self.time_step * (self.trajectory_steps - 1) as f64;
        if self.road_behind < 0.0 || self.road_ahead < travel + 60.0 {
            return Err(Error::Generation(format!(
                "road must extend at least {} m ahead of the ego start",
                travel + 60.0
            )));
        }
        if !(0.0..=1.0).contains(&self.carpark_probability)
            || !(0.0..=1.0).contains(&self.truck_fraction)
            || !(0.0..=1.0).contains(&self.pedestrian_probability)
            || !(self.max_curvature >= 0.0)
        {
            return Err(Error::Generation("probabilities and curvature out of range".into()));
        }
        Ok(())
    }
}

/// Road centerline sampled every 5 m, with the heading of each segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub s_start: f64,
    pub width: f64,
    pub walkway_width: f64,
    pub vertices: Vec<[f64; 2]>,
    pub headings: Vec<f64>,
}

impl Road {
    fn segment(&self, s: f64) -> (usize, f64) {
        let last = self.headings.len() - 1;
        let k = ((s - self.s_start) / SEGMENT).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(last) };
        (k, s - self.s_start - k as f64 * SEGMENT)
    }

    /// World position and heading at arc length `s` and signed lateral
    /// offset (positive to the left).
    pub fn frame_at(&self, s: f64, lateral: f64) -> ([f64; 2], f64) {
        let (k, a) = self.segment(s);
        let psi = self.headings[k];
        let (sn, cs) = psi.sin_cos();
        let c = self.vertices[k];
        ([c[0] + cs * a - sn * lateral, c[1] + sn * a + cs * lateral], psi)
    }

    /// Mitered offset of vertex `i`; consecutive quads share edges exactly.
    fn offset(&self, i: usize, lateral: f64) -> [f64; 2] {
        let n = self.headings.len();
        let before = self.headings[i.saturating_sub(1).min(n - 1)];
        let after = self.headings[i.min(n - 1)];
        let half = 0.5 * (after - before);
        let bis = before + half;
        let d = lateral / half.cos();
        let c = self.vertices[i];
        [c[0] - bis.sin() * d, c[1] + bis.cos() * d]
    }

    fn band(&self, i: usize, lo: f64, hi: f64) -> Polygon {
        vec![
            self.offset(i, lo),
            self.offset(i + 1, lo),
            self.offset(i + 1, hi),
            self.offset(i, hi),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    /// 1-based index into the object classes.
    pub class_id: usize,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub trajectory: Vec<ObjectState>,
}

impl DynamicObject {
    /// Linear interpolation between trajectory samples, clamped at the ends.
    pub fn state_at(&self, t: f64) -> ObjectState {
        let tr = &self.trajectory;
        if t <= tr[0].t {
            return tr[0];
        }
        for w in tr.windows(2) {
            if t <= w[1].t {
                let f = (t - w[0].t) / (w[1].t - w[0].t);
                let mut dh = w[1].heading - w[0].heading;
                dh = (dh + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
                return ObjectState {
                    t,
                    x: w[0].x + f * (w[1].x - w[0].x),
                    y: w[0].y + f * (w[1].y - w[0].y),
                    heading: w[0].heading + f * dh,
                };
            }
        }
        *tr.last().unwrap()
    }

    pub fn footprint_at(&self, t: f64) -> Polygon {
        let s = self.state_at(t);
        oriented_rect([s.x, s.y], s.heading, self.length, self.width)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub footprint: Polygon,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub params: SceneParams,
    pub road: Road,
    /// Polygons per static class. Crossing polygons start with an edge along
    /// the road; their second edge runs across it.
    pub static_layers: Vec<Vec<Polygon>>,
    pub objects: Vec<DynamicObject>,
    pub occluders: Vec<Occluder>,
    pub ego_trajectory: Vec<ObjectState>,
}

impl Scene {
    pub fn steps(&self) -> usize {
        self.ego_trajectory.len()
    }

    pub fn timestamp(&self, step: usize) -> f64 {
        self.ego_trajectory[step].t
    }

    /// Ego-to-world pose at a trajectory step. The ego frame looks along +y.
    pub fn ego_pose(&self, step: usize) -> Pose<f64> {
        let e = self.ego_trajectory[step];
        Pose::planar(e.x, e.y, e.heading - FRAC_PI_2)
    }

    /// Occluders as obstacles in the ego frame of `reference` (ego-to-world).
    pub fn obstacles_in(&self, reference: &Pose<f64>) -> Vec<Obstacle<f64>> {
        let inv = reference.inverse();
        self.occluders
            .iter()
            .map(|o| {
                let mut fp: Vec<[f64; 2]> = o
                    .footprint
                    .iter()
                    .map(|p| {
                        let q = inv.transform_point(&crate::linalg::Vec3::new(p[0], p[1], 0.0));
                        [q.x(), q.y()]
                    })
                    .collect();
                if super::geometry::polygon_area(&fp) < 0.0 {
                    fp.reverse();
                }
                Obstacle {
                    footprint: fp,
                    height: o.height,
                }
            })
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn count(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    rng.gen_range(r[0]..=r[1])
}

pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = uniform(&mut rng, params.road_width);
    let walk = uniform(&mut rng, params.walkway_width);
    let half = 0.5 * width;

    // centerline with piecewise constant curvature, origin at s = 0
    let segments = ((params.road_behind + params.road_ahead) / SEGMENT).ceil() as usize;
    let mut headings = Vec::with_capacity(segments);
    let mut psi = FRAC_PI_2 + rng.gen_range(-0.1..0.1);
    let mut kappa = 0.0;
    for i in 0..segments {
        if i % 4 == 0 {
            kappa = uniform(&mut rng, [-params.max_curvature, params.max_curvature]);
        }
        headings.push(psi);
        psi += kappa * SEGMENT;
    }
    let mut vertices = vec![[0.0, 0.0]];
    for &h in &headings {
        let p = *vertices.last().unwrap();
        vertices.push([p[0] + SEGMENT * h.cos(), p[1] + SEGMENT * h.sin()]);
    }
    let s_start = -(params.road_behind / SEGMENT).ceil() * SEGMENT;
    let origin_vertex = (-s_start / SEGMENT) as usize;
    let o = vertices[origin_vertex];
    for v in &mut vertices {
        v[0] -= o[0];
        v[1] -= o[1];
    }
    let road = Road {
        s_start,
        width,
        walkway_width: walk,
        vertices,
        headings,
    };

    let mut layers: Vec<Vec<Polygon>> = vec![Vec::new(); STATIC_CLASSES.len()];
    for i in 0..segments {
        layers[DRIVABLE].push(road.band(i, -half, half));
        layers[WALKWAY].push(road.band(i, -half - walk, -half));
        layers[WALKWAY].push(road.band(i, half, half + walk));
    }

    // crossings sit inside a single segment, so they are drivable by construction
    let s_end = s_start + segments as f64 * SEGMENT;
    let mut s = rng.gen_range(15.0..35.0);
    let mut crossing_segments = Vec::new();
    while s < s_end - SEGMENT {
        let (k, _) = road.segment(s);
        let len = rng.gen_range(3.0..4.0);
        let h = half - 0.05;
        let a0 = 0.5 * (SEGMENT - len);
        let c = road.vertices[k];
        let (sn, cs) = road.headings[k].sin_cos();
        let at = |a: f64, l: f64| [c[0] + cs * a - sn * l, c[1] + sn * a + cs * l];
        layers[CROSSING].push(vec![at(a0, -h), at(a0 + len, -h), at(a0 + len, h), at(a0, h)]);
        crossing_segments.push((k, a0, len));
        s += uniform(&mut rng, params.crossing_spacing);
    }

    for side in [-1.0, 1.0] {
        if rng.gen_bool(params.carpark_probability) {
            let s_mid = rng.gen_range(10.0..80.0);
            let len = rng.gen_range(10.0..20.0);
            let depth = uniform(&mut rng, params.carpark_depth);
            let inner = half + walk;
            let (c, psi) = road.frame_at(s_mid, side * (inner + 0.5 * depth));
            layers[CARPARK].push(oriented_rect(c, psi, len, depth));
        }
    }

    let mut occluders: Vec<Occluder> = Vec::new();
    let n_occ = count(&mut rng, params.occluder_count);
    let mut attempts = 0;
    while occluders.len() < n_occ && attempts < 50 * n_occ.max(1) {
        attempts += 1;
        let s = uniform(&mut rng, params.occluder_span);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let a = uniform(&mut rng, params.occluder_size);
        let b = uniform(&mut rng, params.occluder_size);
        let gap = rng.gen_range(1.0..12.0);
        let (c, psi) = road.frame_at(s, side * (half + walk + gap + 0.5 * b));
        let fp = oriented_rect(c, psi, a, b);
        let clash = occluders.iter().any(|o| convex_overlap(&o.footprint, &fp))
            || layers
                .iter()
                .flatten()
                .any(|p| convex_overlap(p, &fp));
        if !clash {
            occluders.push(Occluder {
                footprint: fp,
                height: uniform(&mut rng, params.occluder_height),
            });
        }
    }

    let dt = params.time_step;
    let times: Vec<f64> = (0..params.trajectory_steps).map(|k| k as f64 * dt).collect();
    let lane = 0.25 * width;
    let sample = |s_of: &dyn Fn(f64) -> f64, lateral: f64, reverse: bool| -> Vec<ObjectState> {
        times
            .iter()
            .map(|&t| {
                let (p, mut h) = road.frame_at(s_of(t), lateral);
                if reverse {
                    h += std::f64::consts::PI;
                }
                ObjectState {
                    t,
                    x: p[0],
                    y: p[1],
                    heading: h,
                }
            })
            .collect()
    };

    let ego_trajectory = sample(&|t| params.ego_speed * t, -lane, false);

    let mut objects = Vec::new();
    for _ in 0..count(&mut rng, params.vehicle_count) {
        let truck = rng.gen_bool(params.truck_fraction);
        let (class_id, length, w, height) = if truck {
            (2, 8.0, 2.5, 3.0)
        } else {
            (1, 4.4, 1.8, 1.5)
        };
        let trajectory = if rng.gen_bool(0.4) {
            // same lane as the ego, same speed, kept well ahead
            let s0 = rng.gen_range(12.0..70.0);
            let v = params.ego_speed;
            sample(&move |t| s0 + v * t, -lane, false)
        } else {
            let s0 = rng.gen_range(0.0..s_end - 20.0);
            let v = rng.gen_range(0.0..8.0);
            sample(&move |t| s0 - v * t, lane, true)
        };
        objects.push(DynamicObject {
            class_id,
            length,
            width: w,
            height,
            trajectory,
        });
    }
    for &(k, a0, len) in &crossing_segments {
        if !rng.gen_bool(params.pedestrian_probability) {
            continue;
        }
        let lim = half - 0.4;
        let l0 = rng.gen_range(-lim..lim);
        let along = k as f64 * SEGMENT + road.s_start + a0 + rng.gen_range(0.4..len - 0.4);
        let v = rng.gen_range(1.0..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let trajectory = times
            .iter()
            .map(|&t| {
                // bounce between the curbs
                let span = 2.0 * lim;
                let u = (l0 + lim + v * t).rem_euclid(2.0 * span);
                let (l, dir) = if u <= span { (u - lim, v) } else { (2.0 * span - u - lim, -v) };
                let (p, psi) = road.frame_at(along, l);
                ObjectState {
                    t,
                    x: p[0],
                    y: p[1],
                    heading: psi + dir.signum() * FRAC_PI_2,
                }
            })
            .collect();
        objects.push(DynamicObject {
            class_id: 3,
            length: 0.6,
            width: 0.6,
            height: 1.7,
            trajectory,
        });
    }

    Ok(Scene {
        seed,
        params: params.clone(),
        road,
        static_layers: layers,
        objects,
        occluders,
        ego_trajectory,
    })
}

/// Uniform-bucket lookup of static polygons.
pub struct LayerIndex {
    origin: [f64; 2],
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<(usize, usize)>>,
}

impl LayerIndex {
    pub fn new(scene: &Scene) -> Self {
        let cell = 4.0;
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in scene.static_layers.iter().flatten() {
            let q = bbox(p);
            b = [b[0].min(q[0]), b[1].max(q[1]), b[2].min(q[2]), b[3].max(q[3])];
        }
        if !b[0].is_finite() {
            b = [0.0, 1.0, 0.0, 1.0];
        }
        let cols = ((b[1] - b[0]) / cell).ceil() as usize + 1;
        let rows = ((b[3] - b[2]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); rows * cols];
        for (layer, polys) in scene.static_layers.iter().enumerate() {
            for (i, p) in polys.iter().enumerate() {
                let q = bbox(p);
                let c0 = ((q[0] - b[0]) / cell).floor() as usize;
                let c1 = ((q[1] - b[0]) / cell).floor() as usize;
                let r0 = ((q[2] - b[2]) / cell).floor() as usize;
                let r1 = ((q[3] - b[2]) / cell).floor() as usize;
                for r in r0..=r1.min(rows - 1) {
                    for c in c0..=c1.min(cols - 1) {
                        buckets[r * cols + c].push((layer, i));
                    }
                }
            }
        }
        LayerIndex {
            origin: [b[0], b[2]],
            cell,
            cols,
            rows,
            buckets,
        }
    }

    pub fn candidates(&self, p: [f64; 2]) -> &[(usize, usize)] {
        let c = ((p[0] - self.origin[0]) / self.cell).floor();
        let r = ((p[1] - self.origin[1]) / self.cell).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return &[];
        }
        &self.buckets[r as usize * self.cols + c as usize]
    }

    /// Static multi-label membership at a world point.
    pub fn classify(&self, scene: &Scene, p: [f64; 2]) -> [bool; 4] {
        let mut out = [false; 4];
        for &(layer, i) in self.candidates(p) {
            if !out[layer] && point_in_polygon(p, &scene.static_layers[layer][i]) {
                out[layer] = true;
            }
        }
        out
    }

    /// First containing crossing polygon, for stripe phase.
    pub fn crossing_at<'a>(&self, scene: &'a Scene, p: [f64; 2]) -> Option<&'a Polygon> {
        self.candidates(p)
            .iter()
            .filter(|&&(l, _)| l == CROSSING)
            .map(|&(_, i)| &scene.static_layers[CROSSING][i])
            .find(|poly| point_in_polygon(p, poly))
    }
}
