//! Deterministic, seedable pixel-rendered simulation tasks.
//!
//! Reaching: a 2-DOF arm anchored at the image center rotates one joint per
//! step by a fixed angle; reward is the negative pixel distance between the
//! hand and a fixed target. Tracking: an 84×84 frame slides horizontally
//! inside a 120×180 world chasing a disk that sweeps along a circular arc;
//! two consecutive RGB frames form the observation.
//!
//! Rendering is a pure function of state; (seed, action sequence) fully
//! determines every observation and reward.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng;
use crate::tensor::PixelTensor;

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: PixelTensor,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

pub trait Environment {
    /// Start a new episode. Reaching ignores the seed (fixed initial state).
    fn reset(&mut self, seed: u64) -> PixelTensor;
    fn step(&mut self, action: usize) -> StepResult;
    fn n_actions(&self) -> usize;
    fn obs_shape(&self) -> (usize, usize, usize);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Reaching,
    Tracking,
}

impl EnvKind {
    pub fn n_actions(self) -> usize {
        match self {
            EnvKind::Reaching => 14,
            EnvKind::Tracking => 7,
        }
    }

    pub fn obs_shape(self) -> (usize, usize, usize) {
        match self {
            EnvKind::Reaching => (1, 84, 84),
            EnvKind::Tracking => (6, 84, 84),
        }
    }

    /// Default per-episode step cap: reaching 20, tracking 40.
    pub fn default_steps(self) -> usize {
        match self {
            EnvKind::Reaching => 20,
            EnvKind::Tracking => 40,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reaching => "reaching",
            EnvKind::Tracking => "tracking",
        }
    }
}

pub fn make_env(kind: EnvKind, max_steps: usize) -> Box<dyn Environment> {
    match kind {
        EnvKind::Reaching => Box::new(ReachingEnv::new(max_steps)),
        EnvKind::Tracking => Box::new(TrackingEnv::new(max_steps)),
    }
}

// ---------------------------------------------------------------------------
// Reaching
// ---------------------------------------------------------------------------

pub const REACH_SIZE: usize = 84;
const REACH_CENTER: (f64, f64) = (42.0, 42.0);
const LINK1: f64 = 20.0;
const LINK2: f64 = 16.0;
/// Joint rotation levels, degrees. Actions are (joint, angle) pairs:
/// action = joint·7 + angle index.
pub const REACH_ANGLES: [f64; 7] = [-90.0, -45.0, -30.0, 0.0, 30.0, 45.0, 90.0];
const REACH_INIT: (f64, f64) = (90.0, 0.0);
/// Target = hand position at these joint angles, so zero distance is
/// attainable on the 15°-multiple angle grid the actions span.
const REACH_TARGET_ANGLES: (f64, f64) = (210.0, 60.0);

#[derive(Debug, Clone)]
pub struct ReachingEnv {
    phi1: f64,
    phi2: f64,
    target: (f64, f64),
    steps: usize,
    max_steps: usize,
}

fn wrap_deg(deg: f64) -> f64 {
    let r = libm::fmod(deg, 360.0);
    if r < 0.0 {
        r + 360.0
    } else {
        r
    }
}

fn deg_cos_sin(deg: f64) -> (f64, f64) {
    let r = deg.to_radians();
    (libm::cos(r), libm::sin(r))
}

fn forward_kinematics(phi1: f64, phi2: f64) -> ((f64, f64), (f64, f64)) {
    let (c1, s1) = deg_cos_sin(phi1);
    let (c12, s12) = deg_cos_sin(phi1 + phi2);
    let elbow = (REACH_CENTER.0 + LINK1 * c1, REACH_CENTER.1 + LINK1 * s1);
    let hand = (elbow.0 + LINK2 * c12, elbow.1 + LINK2 * s12);
    (elbow, hand)
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::sqrt((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1))
}

impl ReachingEnv {
    pub fn new(max_steps: usize) -> Self {
        let (_, target) = forward_kinematics(REACH_TARGET_ANGLES.0, REACH_TARGET_ANGLES.1);
        Self { phi1: REACH_INIT.0, phi2: REACH_INIT.1, target, steps: 0, max_steps }
    }

    pub fn hand(&self) -> (f64, f64) {
        forward_kinematics(self.phi1, self.phi2).1
    }

    pub fn target(&self) -> (f64, f64) {
        self.target
    }

    pub fn joint_angles(&self) -> (f64, f64) {
        (self.phi1, self.phi2)
    }

    fn render(&self) -> PixelTensor {
        let mut img = vec![0u8; REACH_SIZE * REACH_SIZE];
        // target: 3-px white square
        stamp_square(&mut img, REACH_SIZE, REACH_SIZE, self.target, 255);
        // arm: two 3-px-wide white segments
        let (elbow, hand) = forward_kinematics(self.phi1, self.phi2);
        draw_segment(&mut img, REACH_SIZE, REACH_SIZE, REACH_CENTER, elbow, 255);
        draw_segment(&mut img, REACH_SIZE, REACH_SIZE, elbow, hand, 255);
        PixelTensor::new(img, vec![1, REACH_SIZE, REACH_SIZE])
    }
}

impl Environment for ReachingEnv {
    fn reset(&mut self, _seed: u64) -> PixelTensor {
        self.phi1 = REACH_INIT.0;
        self.phi2 = REACH_INIT.1;
        self.steps = 0;
        self.render()
    }

    fn step(&mut self, action: usize) -> StepResult {
        assert!(action < 14, "reaching action {action} out of range");
        let joint = action / 7;
        let delta = REACH_ANGLES[action % 7];
        if joint == 0 {
            self.phi1 = wrap_deg(self.phi1 + delta);
        } else {
            self.phi2 = wrap_deg(self.phi2 + delta);
        }
        self.steps += 1;
        let reward = -euclid(self.hand(), self.target);
        StepResult {
            observation: self.render(),
            reward,
            terminated: false, // reaching episodes end only by step cap
            truncated: self.steps >= self.max_steps,
        }
    }

    fn n_actions(&self) -> usize {
        14
    }

    fn obs_shape(&self) -> (usize, usize, usize) {
        (1, REACH_SIZE, REACH_SIZE)
    }
}

fn stamp_square(img: &mut [u8], h: usize, w: usize, center: (f64, f64), value: u8) {
    let (cx, cy) = (libm::round(center.0) as i64, libm::round(center.1) as i64);
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                img[y as usize * w + x as usize] = value;
            }
        }
    }
}

fn draw_segment(img: &mut [u8], h: usize, w: usize, a: (f64, f64), b: (f64, f64), value: u8) {
    let len = euclid(a, b).max(1e-9);
    let steps = (len * 2.0) as usize + 1;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let p = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        stamp_square(img, h, w, p, value);
    }
}

// ---------------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------------

pub const WORLD_H: usize = 120;
pub const WORLD_W: usize = 180;
pub const FRAME: usize = 84;
/// Frame vertical center is fixed; only horizontal motion is controllable.
const FRAME_CY: f64 = 60.0;
const FRAME_HALF: f64 = 42.0;
/// Horizontal pixel moves available to the agent.
pub const TRACK_MOVES: [f64; 7] = [-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0];
/// Target arc: a radius-60 circle whose center sits below the visible band,
/// swept back and forth over ±45° at one full circle's angle per 120 steps
/// (2π/120 rad ≈ 3.14 px of arc per step). The bounded sweep keeps the
/// target inside the frame's fixed vertical span, so failure is always a
/// horizontal (policy-controllable) event.
pub const ARC_RADIUS: f64 = 60.0;
const ARC_CENTER: (f64, f64) = (90.0, 118.0);
const ARC_HALF_SPAN: f64 = core::f64::consts::FRAC_PI_4; // ±45°
const ARC_STEP: f64 = core::f64::consts::TAU / 120.0;
pub const TARGET_RADIUS: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct TrackingEnv {
    frame_x: f64,
    phase: f64,
    direction: f64,
    prev_frame: Vec<u8>, // 3×84×84 CHW of the previous rendered frame
    steps: usize,
    max_steps: usize,
}

impl TrackingEnv {
    pub fn new(max_steps: usize) -> Self {
        Self {
            frame_x: 90.0,
            phase: 0.0,
            direction: 1.0,
            prev_frame: vec![0; 3 * FRAME * FRAME],
            steps: 0,
            max_steps,
        }
    }

    pub fn target_center(&self) -> (f64, f64) {
        (
            ARC_CENTER.0 + ARC_RADIUS * libm::sin(self.phase),
            ARC_CENTER.1 - ARC_RADIUS * libm::cos(self.phase),
        )
    }

    pub fn frame_center(&self) -> (f64, f64) {
        (self.frame_x, FRAME_CY)
    }

    fn target_in_frame(&self) -> bool {
        let (tx, ty) = self.target_center();
        let in_x = tx >= self.frame_x - FRAME_HALF && tx <= self.frame_x + FRAME_HALF;
        let in_y = ty >= FRAME_CY - FRAME_HALF && ty <= FRAME_CY + FRAME_HALF;
        in_x && in_y
    }

    /// Render the current 84×84 crop (CHW, 3 channels).
    fn render_frame(&self) -> Vec<u8> {
        let mut img = vec![255u8; 3 * FRAME * FRAME]; // white world
        let (tx, ty) = self.target_center();
        let x0 = self.frame_x - FRAME_HALF;
        let y0 = FRAME_CY - FRAME_HALF;
        // solid blue target disk
        let r2 = TARGET_RADIUS * TARGET_RADIUS;
        let cy_lo = ((ty - TARGET_RADIUS - y0).max(0.0)) as usize;
        let cy_hi = (((ty + TARGET_RADIUS - y0) as isize).min(FRAME as isize - 1)).max(0) as usize;
        for cy in cy_lo..=cy_hi.min(FRAME - 1) {
            let wy = y0 + cy as f64;
            for cx in 0..FRAME {
                let wx = x0 + cx as f64;
                if (wx - tx) * (wx - tx) + (wy - ty) * (wy - ty) <= r2 {
                    let i = cy * FRAME + cx;
                    img[i] = 0; // R
                    img[FRAME * FRAME + i] = 0; // G
                    img[2 * FRAME * FRAME + i] = 255; // B
                }
            }
        }
        // red frame border, 2 px
        for b in 0..2 {
            for cx in 0..FRAME {
                for cy in [b, FRAME - 1 - b] {
                    set_rgb(&mut img, cy * FRAME + cx, 255, 0, 0);
                }
            }
            for cy in 0..FRAME {
                for cx in [b, FRAME - 1 - b] {
                    set_rgb(&mut img, cy * FRAME + cx, 255, 0, 0);
                }
            }
        }
        img
    }

    fn observation(&self, current: &[u8]) -> PixelTensor {
        let mut data = Vec::with_capacity(6 * FRAME * FRAME);
        data.extend_from_slice(&self.prev_frame);
        data.extend_from_slice(current);
        PixelTensor::new(data, vec![6, FRAME, FRAME])
    }
}

fn set_rgb(img: &mut [u8], i: usize, r: u8, g: u8, b: u8) {
    img[i] = r;
    img[FRAME * FRAME + i] = g;
    img[2 * FRAME * FRAME + i] = b;
}

impl Environment for TrackingEnv {
    fn reset(&mut self, seed: u64) -> PixelTensor {
        let mut rng = rng::stream(seed, rng::tags::ENV, 0, 0);
        self.phase = rng.gen_range(-ARC_HALF_SPAN..ARC_HALF_SPAN);
        self.direction = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        // place the frame so the target starts inside it
        let (tx, _) = self.target_center();
        let lo = libm::ceil((tx - FRAME_HALF).max(FRAME_HALF)) as i64;
        let hi = libm::floor((tx + FRAME_HALF).min(WORLD_W as f64 - FRAME_HALF)) as i64;
        self.frame_x = rng.gen_range(lo..=hi) as f64;
        self.steps = 0;
        let frame = self.render_frame();
        self.prev_frame.copy_from_slice(&frame); // first frame duplicated
        self.observation(&frame)
    }

    fn step(&mut self, action: usize) -> StepResult {
        assert!(action < 7, "tracking action {action} out of range");
        self.frame_x = (self.frame_x + TRACK_MOVES[action])
            .clamp(FRAME_HALF, WORLD_W as f64 - FRAME_HALF);
        // target advances at fixed angular speed, reversing at the arc ends
        self.phase += self.direction * ARC_STEP;
        if self.phase > ARC_HALF_SPAN {
            self.phase = ARC_HALF_SPAN - (self.phase - ARC_HALF_SPAN);
            self.direction = -1.0;
        } else if self.phase < -ARC_HALF_SPAN {
            self.phase = -ARC_HALF_SPAN - (self.phase + ARC_HALF_SPAN);
            self.direction = 1.0;
        }
        self.steps += 1;

        let reward = -euclid(self.frame_center(), self.target_center());
        let terminated = !self.target_in_frame();
        let truncated = !terminated && self.steps >= self.max_steps;

        let frame = self.render_frame();
        let obs = self.observation(&frame);
        self.prev_frame.copy_from_slice(&frame);

        StepResult { observation: obs, reward, terminated, truncated }
    }

    fn n_actions(&self) -> usize {
        7
    }

    fn obs_shape(&self) -> (usize, usize, usize) {
        (6, FRAME, FRAME)
    }
}
