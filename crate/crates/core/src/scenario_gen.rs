//! Synthetic benchmark videos.
//!
//! A scenario is 2 or 3 elliptical instances moving along cubic Bezier
//! curves over a fixed number of frames. Track-kind videos follow the
//! curves throughout. Swap-kind videos pick one instance pair and, at an
//! intermediate frame, exchange their positions: from that frame on each of
//! the two follows the other's curve while keeping its own appearance. Any
//! tracker that leans on location alone will follow the positions and
//! switch identities there.
//!
//! Randomness is split into independent ChaCha streams (geometry, swap
//! choice, detector simulation) so a swap video and the track video drawn
//! from the same seed share every instance and differ only from the swap
//! frame on.
//!
//! Frame indices are 0-based in memory; files number frames from 1.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset_io::{rle_encode_bits, RleMask};
use crate::error::{invalid, Error, Result};
use crate::scalar::{dot, normalize_in_place};
use crate::similarity::EmbeddingSet;
use crate::tracker::FrameDetections;

const STREAM_GEOMETRY: u64 = 0;
const STREAM_SWAP: u64 = 1;
const STREAM_DETECTOR: u64 = 2;

/// Position in normalized scene coordinates (`[0, 1]` spans the frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierTrajectory {
    pub control: [Point; 4],
    /// Frames over which the curve is traversed.
    pub duration: usize,
}

impl BezierTrajectory {
    /// Position at frame `t` of `duration` (the curve parameter runs 0..=1).
    pub fn at_frame(&self, t: usize) -> Point {
        let s = if self.duration <= 1 {
            0.0
        } else {
            (t as f64 / (self.duration - 1) as f64).min(1.0)
        };
        de_casteljau(&self.control, s)
    }
}

fn de_casteljau(p: &[Point; 4], t: f64) -> Point {
    let a = p[0].lerp(p[1], t);
    let b = p[1].lerp(p[2], t);
    let c = p[2].lerp(p[3], t);
    let d = a.lerp(b, t);
    let e = b.lerp(c, t);
    d.lerp(e, t)
}

/// Cubic Bezier evaluation at `t` in `[0, 1]`.
pub fn eval_bezier(b: &BezierTrajectory, t: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("curve parameter {t} outside [0, 1]")));
    }
    Ok(de_casteljau(&b.control, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Track,
    Swap,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Track => "track",
            ScenarioKind::Swap => "swap",
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "track" => Ok(ScenarioKind::Track),
            "swap" => Ok(ScenarioKind::Swap),
            other => Err(invalid(format!("unknown scenario kind {other:?}"))),
        }
    }
}

/// How long a swapped pair keeps the exchanged trajectories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapMode {
    /// From the swap frame to the end of the video.
    #[default]
    Permanent,
    /// For the swap frame only.
    Momentary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub frame: usize,
    pub pair: (u32, u32),
    pub mode: SwapMode,
}

impl SwapEvent {
    fn active(&self, t: usize) -> bool {
        match self.mode {
            SwapMode::Permanent => t >= self.frame,
            SwapMode::Momentary => t == self.frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: u32,
    pub class_id: u32,
    /// Ellipse semi-axes (horizontal, vertical) in nominal pixels.
    pub semi_axes: (f64, f64),
    /// Smaller is nearer the camera.
    pub depth_rank: u32,
    /// Unit vector standing in for the instance's look.
    pub latent_appearance: Vec<f64>,
    pub trajectory: BezierTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub video_id: String,
    pub kind: ScenarioKind,
    pub frames: usize,
    /// Nominal `(width, height)`.
    pub resolution: (u32, u32),
    /// Size of the rasterized masks.
    pub raster: (u32, u32),
    pub instances: Vec<InstanceSpec>,
    pub swap: Option<SwapEvent>,
    pub seed: u64,
}

impl Scenario {
    /// Center of instance `k` at frame `t`, after any swap.
    pub fn center(&self, k: usize, t: usize) -> Point {
        let id = self.instances[k].id;
        let source = match self.swap {
            Some(sw) if sw.active(t) && sw.pair.0 == id => sw.pair.1,
            Some(sw) if sw.active(t) && sw.pair.1 == id => sw.pair.0,
            _ => id,
        };
        self.instances[source as usize].trajectory.at_frame(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.instances.len();
        if !(2..=3).contains(&n) {
            return Err(invalid(format!("{n} instances; expected 2 or 3")));
        }
        if self.frames < 2 {
            return Err(invalid("a scenario needs at least two frames"));
        }
        for (k, inst) in self.instances.iter().enumerate() {
            if inst.id as usize != k {
                return Err(invalid(format!("instance {k} carries id {}", inst.id)));
            }
        }
        let mut ranks: Vec<u32> = self.instances.iter().map(|i| i.depth_rank).collect();
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.len() != n {
            return Err(invalid("depth ranks must be unique"));
        }
        match (self.kind, &self.swap) {
            (ScenarioKind::Track, None) => {}
            (ScenarioKind::Swap, Some(sw)) => {
                if !(sw.frame > 1 && sw.frame + 1 < self.frames) {
                    return Err(invalid(format!(
                        "swap frame {} outside (1, {})",
                        sw.frame,
                        self.frames - 1
                    )));
                }
                let (a, b) = sw.pair;
                if a == b || a as usize >= n || b as usize >= n {
                    return Err(invalid(format!("bad swap pair {:?}", sw.pair)));
                }
            }
            (kind, _) => {
                return Err(invalid(format!("swap event inconsistent with kind {kind}")));
            }
        }
        Ok(())
    }
}

/// Ground truth of one instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFrame {
    pub center: Point,
    /// Visible share of the in-frame silhouette; 0 when it is entirely out
    /// of frame.
    pub visibility: f64,
    /// Full silhouette, ignoring occluders.
    pub amodal: RleMask,
    /// Silhouette minus pixels owned by nearer instances.
    pub visible: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Indexed `[frame][instance]`.
    pub frames: Vec<Vec<InstanceFrame>>,
}

impl GroundTruth {
    pub fn n_instances(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub frames: usize,
    /// Fixed instance count; drawn from {2, 3} when unset.
    pub instance_count: Option<usize>,
    /// Candidate side lengths; width and height are drawn independently.
    pub resolutions: Vec<u32>,
    /// How far (as a fraction of the frame) centers may leave each side.
    pub out_of_frame_margin: f64,
    /// Semi-axis bounds as fractions of the shorter frame side.
    pub semi_axis_range: (f64, f64),
    pub raster_scale: f64,
    pub embedding_dim: usize,
    pub num_classes: u32,
    pub swap_mode: SwapMode,
    /// Swaps are placed where the pair is at least this far apart, when the
    /// trajectories allow it.
    pub min_swap_separation: f64,
    /// Make the latent appearances within a video mutually orthogonal.
    pub orthogonal_appearance: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            frames: 36,
            instance_count: None,
            resolutions: vec![600, 700, 800, 900],
            out_of_frame_margin: 0.2,
            semi_axis_range: (0.06, 0.14),
            raster_scale: 0.25,
            embedding_dim: 16,
            num_classes: 21,
            swap_mode: SwapMode::Permanent,
            min_swap_separation: 0.3,
            orthogonal_appearance: true,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self, kind: ScenarioKind) -> Result<()> {
        if self.frames < 2 {
            return Err(invalid("frames must be at least 2"));
        }
        if kind == ScenarioKind::Swap && self.frames < 4 {
            return Err(invalid("a swap needs at least 4 frames"));
        }
        if let Some(n) = self.instance_count {
            if !(2..=3).contains(&n) {
                return Err(invalid(format!("instance count {n} not in {{2, 3}}")));
            }
        }
        if self.resolutions.is_empty() || self.resolutions.contains(&0) {
            return Err(invalid("resolutions must be non-empty and positive"));
        }
        if !(self.out_of_frame_margin >= 0.0 && self.out_of_frame_margin.is_finite()) {
            return Err(invalid("out-of-frame margin must be non-negative"));
        }
        let (lo, hi) = self.semi_axis_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid("semi-axis range must satisfy 0 < lo <= hi"));
        }
        if !(self.raster_scale > 0.0 && self.raster_scale <= 1.0) {
            return Err(invalid("raster scale must be in (0, 1]"));
        }
        if self.embedding_dim < 4 || !self.embedding_dim.is_multiple_of(4) {
            return Err(invalid("embedding dimension must be a positive multiple of 4"));
        }
        if self.num_classes == 0 {
            return Err(invalid("need at least one class"));
        }
        if self.min_swap_separation.is_nan() || self.min_swap_separation < 0.0 {
            return Err(invalid("minimum swap separation must be non-negative"));
        }
        Ok(())
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if crate::scalar::norm(&v) > 1e-9 {
            normalize_in_place(&mut v);
            return v;
        }
    }
}

/// Samples the scenario description for `seed`. Ground truth is produced by
/// [`render_ground_truth`].
pub fn sample_scenario(
    video_id: impl Into<String>,
    seed: u64,
    kind: ScenarioKind,
    params: &ScenarioParams,
) -> Result<Scenario> {
    params.validate(kind)?;
    let mut rng = stream(seed, STREAM_GEOMETRY);
    let w = *params.resolutions.choose(&mut rng).expect("non-empty");
    let h = *params.resolutions.choose(&mut rng).expect("non-empty");
    let n = params.instance_count.unwrap_or_else(|| rng.random_range(2..=3));
    let short = w.min(h) as f64;
    let m = params.out_of_frame_margin;
    let (lo, hi) = params.semi_axis_range;

    let mut instances = Vec::with_capacity(n);
    for id in 0..n as u32 {
        let class_id = rng.random_range(0..params.num_classes);
        let semi_axes = (
            rng.random_range(lo..=hi) * short,
            rng.random_range(lo..=hi) * short,
        );
        // The curve stays inside the convex hull of its control points.
        let mut cp = || Point::new(rng.random_range(-m..=1.0 + m), rng.random_range(-m..=1.0 + m));
        let control = [cp(), cp(), cp(), cp()];
        let latent_appearance = random_unit(&mut rng, params.embedding_dim);
        instances.push(InstanceSpec {
            id,
            class_id,
            semi_axes,
            depth_rank: 0,
            latent_appearance,
            trajectory: BezierTrajectory {
                control,
                duration: params.frames,
            },
        });
    }
    if params.orthogonal_appearance {
        orthogonalize(&mut instances);
    }
    let mut ranks: Vec<u32> = (0..n as u32).collect();
    ranks.shuffle(&mut rng);
    for (inst, r) in instances.iter_mut().zip(ranks) {
        inst.depth_rank = r;
    }

    let raster = (
        ((w as f64 * params.raster_scale).round() as u32).max(1),
        ((h as f64 * params.raster_scale).round() as u32).max(1),
    );
    let mut sc = Scenario {
        video_id: video_id.into(),
        kind,
        frames: params.frames,
        resolution: (w, h),
        raster,
        instances,
        swap: None,
        seed,
    };
    if kind == ScenarioKind::Swap {
        sc.swap = Some(choose_swap(&sc, seed, params));
    }
    sc.validate()?;
    Ok(sc)
}

/// Gram-Schmidt over the latent appearances, in id order, so that distinct
/// instances never look alike by chance.
fn orthogonalize(instances: &mut [InstanceSpec]) {
    for k in 0..instances.len() {
        let (done, rest) = instances.split_at_mut(k);
        let v = &mut rest[0].latent_appearance;
        for prev in done.iter() {
            let d = dot(v, &prev.latent_appearance);
            for (x, &p) in v.iter_mut().zip(&prev.latent_appearance) {
                *x -= d * p;
            }
        }
        normalize_in_place(v);
    }
}

fn choose_swap(sc: &Scenario, seed: u64, params: &ScenarioParams) -> SwapEvent {
    let mut rng = stream(seed, STREAM_SWAP);
    let n = sc.instances.len();
    let mut candidates = Vec::new();
    let mut farthest = (0usize, 1usize, 2usize, f64::NEG_INFINITY);
    for a in 0..n {
        for b in a + 1..n {
            for t in 2..sc.frames - 1 {
                let d = sc.instances[a]
                    .trajectory
                    .at_frame(t)
                    .distance(sc.instances[b].trajectory.at_frame(t));
                if d >= params.min_swap_separation {
                    candidates.push((a, b, t));
                }
                if d > farthest.3 {
                    farthest = (a, b, t, d);
                }
            }
        }
    }
    let (a, b, t) = candidates
        .choose(&mut rng)
        .copied()
        .unwrap_or((farthest.0, farthest.1, farthest.2));
    SwapEvent {
        frame: t,
        pair: (a as u32, b as u32),
        mode: params.swap_mode,
    }
}

/// Rasterizes every frame with depth-resolved occlusion.
pub fn render_ground_truth(sc: &Scenario) -> Result<GroundTruth> {
    sc.validate()?;
    let (rw, rh) = sc.raster;
    let sx = rw as f64 / sc.resolution.0 as f64;
    let sy = rh as f64 / sc.resolution.1 as f64;
    let n = sc.instances.len();
    let npx = rw as usize * rh as usize;

    let mut near_first: Vec<usize> = (0..n).collect();
    near_first.sort_by_key(|&k| sc.instances[k].depth_rank);

    let mut frames = Vec::with_capacity(sc.frames);
    let mut owner = vec![u8::MAX; npx];
    let mut amodal = vec![vec![false; npx]; n];
    for t in 0..sc.frames {
        owner.fill(u8::MAX);
        let centers: Vec<Point> = (0..n).map(|k| sc.center(k, t)).collect();
        for &k in &near_first {
            let bits = &mut amodal[k];
            bits.fill(false);
            let (a, b) = sc.instances[k].semi_axes;
            let cx = centers[k].x * rw as f64;
            let cy = centers[k].y * rh as f64;
            let (a, b) = (a * sx, b * sy);
            let r0 = (cy - b).floor().max(0.0) as usize;
            let r1 = ((cy + b).ceil().max(0.0) as usize).min(rh as usize);
            let c0 = (cx - a).floor().max(0.0) as usize;
            let c1 = ((cx + a).ceil().max(0.0) as usize).min(rw as usize);
            for r in r0..r1 {
                let dy = (r as f64 + 0.5 - cy) / b;
                for c in c0..c1 {
                    let dx = (c as f64 + 0.5 - cx) / a;
                    if dx * dx + dy * dy <= 1.0 {
                        let p = r * rw as usize + c;
                        bits[p] = true;
                        if owner[p] == u8::MAX {
                            owner[p] = k as u8;
                        }
                    }
                }
            }
        }
        let per_instance = (0..n)
            .map(|k| {
                let visible_bits: Vec<bool> = amodal[k]
                    .iter()
                    .zip(&owner)
                    .map(|(&on, &o)| on && o as usize == k)
                    .collect();
                let full = rle_encode_bits(rw, rh, &amodal[k]);
                let visible = rle_encode_bits(rw, rh, &visible_bits);
                let total = full.foreground();
                let visibility = if total == 0 {
                    0.0
                } else {
                    visible.foreground() as f64 / total as f64
                };
                InstanceFrame {
                    center: centers[k],
                    visibility,
                    amodal: full,
                    visible,
                }
            })
            .collect();
        frames.push(per_instance);
    }
    Ok(GroundTruth { frames })
}

/// Samples a scenario and renders its ground truth.
pub fn generate_scenario(
    video_id: impl Into<String>,
    seed: u64,
    kind: ScenarioKind,
    params: &ScenarioParams,
) -> Result<(Scenario, GroundTruth)> {
    let sc = sample_scenario(video_id, seed, kind, params)?;
    let gt = render_ground_truth(&sc)?;
    Ok((sc, gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorParams {
    /// Weight of the positional code in object embeddings.
    pub alpha_loc: f64,
    pub obj_noise: f64,
    pub app_noise: f64,
    pub conf_noise: f64,
    /// Probability that a frame loses its appearance signal (confidence 0,
    /// appearance embedding replaced by noise).
    pub dropout_rate: f64,
    /// Lowest angular frequency of the positional code; each further level
    /// doubles it.
    pub base_frequency: f64,
    pub include_masks: bool,
}

impl Default for SimulatorParams {
    fn default() -> Self {
        Self {
            alpha_loc: 0.8,
            obj_noise: 0.03,
            app_noise: 0.1,
            conf_noise: 0.05,
            dropout_rate: 0.0,
            base_frequency: std::f64::consts::FRAC_PI_4,
            include_masks: true,
        }
    }
}

impl SimulatorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.alpha_loc) {
            return Err(invalid(format!("alpha_loc {} outside [0, 1]", self.alpha_loc)));
        }
        if !unit(self.dropout_rate) {
            return Err(invalid(format!("dropout rate {} outside [0, 1]", self.dropout_rate)));
        }
        for (name, s) in [
            ("obj_noise", self.obj_noise),
            ("app_noise", self.app_noise),
            ("conf_noise", self.conf_noise),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid(format!("{name} must be a non-negative finite sigma")));
            }
        }
        if !(self.base_frequency > 0.0 && self.base_frequency.is_finite()) {
            return Err(invalid("base frequency must be positive"));
        }
        Ok(())
    }
}

/// Unit-norm sinusoidal code of a normalized position.
///
/// Level `l` contributes `sin/cos(f_l x)` and `sin/cos(f_l y)` with
/// `f_l = base * 2^l`, so the inner product of two codes is the mean of
/// `cos(f_l dx)` and `cos(f_l dy)` over levels.
pub fn positional_code(p: Point, dim: usize, base_frequency: f64) -> Vec<f64> {
    let levels = dim / 4;
    let scale = (1.0 / (2 * levels) as f64).sqrt();
    let mut v = Vec::with_capacity(dim);
    for l in 0..levels {
        let f = base_frequency * (1u64 << l) as f64;
        let (sx, cx) = (f * p.x).sin_cos();
        let (sy, cy) = (f * p.y).sin_cos();
        v.extend([sx * scale, cx * scale, sy * scale, cy * scale]);
    }
    v
}

/// Stand-in for a query-based detector: one detection per instance per
/// frame, in a shuffled order.
pub fn simulate_detections(
    sc: &Scenario,
    gt: &GroundTruth,
    sim: &SimulatorParams,
) -> Result<Vec<FrameDetections<f64>>> {
    sim.validate()?;
    if gt.frames.len() != sc.frames || gt.n_instances() != sc.instances.len() {
        return Err(Error::Shape("ground truth does not match scenario".into()));
    }
    let n = sc.instances.len();
    let dim = sc.instances[0].latent_appearance.len();
    let mut rng = stream(sc.seed, STREAM_DETECTOR);
    let gauss = |rng: &mut ChaCha8Rng, sigma: f64| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        }
    };

    let mut out = Vec::with_capacity(sc.frames);
    for (t, truth) in gt.frames.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let dropped = rng.random_bool(sim.dropout_rate);
        let mut e_obj = Vec::with_capacity(n * dim);
        let mut e_app = Vec::with_capacity(n * dim);
        let mut conf = Vec::with_capacity(n);
        for &k in &order {
            let inst = &sc.instances[k];
            let vis = truth[k].visibility;
            let phi = positional_code(truth[k].center, dim, sim.base_frequency);
            let mut obj: Vec<f64> = phi
                .iter()
                .zip(&inst.latent_appearance)
                .map(|(&p, &l)| sim.alpha_loc * p + (1.0 - sim.alpha_loc) * l)
                .collect();
            for x in &mut obj {
                *x += gauss(&mut rng, sim.obj_noise);
            }
            normalize_in_place(&mut obj);
            let signal = if dropped { 0.0 } else { vis };
            let mut app: Vec<f64> = inst
                .latent_appearance
                .iter()
                .map(|&l| l * signal)
                .collect();
            for x in &mut app {
                *x += gauss(&mut rng, sim.app_noise);
            }
            normalize_in_place(&mut app);
            let c = if dropped {
                0.0
            } else {
                (vis + gauss(&mut rng, sim.conf_noise)).clamp(0.0, 1.0)
            };
            e_obj.extend(obj);
            e_app.extend(app);
            conf.push(c);
        }
        out.push(FrameDetections {
            frame_index: t,
            e_obj: EmbeddingSet::new(n, dim, e_obj)?,
            e_app: EmbeddingSet::new(n, dim, e_app)?,
            conf,
            class_ids: order.iter().map(|&k| sc.instances[k].class_id).collect(),
            masks: sim
                .include_masks
                .then(|| order.iter().map(|&k| truth[k].visible.clone()).collect()),
            gt_ids: Some(order.iter().map(|&k| k as u32).collect()),
        });
    }
    Ok(out)
}
