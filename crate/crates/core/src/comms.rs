//! Simulated opportunistic peer-to-peer channel: range-gated encounters,
//! relative-pose establishment, Bernoulli packet loss, binary message
//! serialization, bandwidth accounting and a reproducible delivery log.
//!
//! Delivery outcomes are drawn from a counter-style hash of the message
//! coordinates (seed, tick, sender, receiver, kind), never from a shared
//! stream, so disabling one traffic class cannot shift the fate of another.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{FrameTransform, Point2, Pose2};
use crate::rng;
use crate::topology::ContourSet;
use crate::trajopt::{KnotState, PiecewiseTrajectory};

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("message truncated at byte {0}")]
    Truncated(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Topology,
    State,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::Topology => "topology",
            MessageKind::State => "state",
        }
    }
}

/// Strategic-layer payload: the sender's simplified fused contours plus its
/// goal, all in the sender's frame. Only the contours travel on the wire;
/// receivers rebuild graphs locally and ignore teammate goals.
#[derive(Debug, Clone)]
pub struct TopologyMessage {
    pub sender: u16,
    pub timestep: u32,
    pub contours: ContourSet,
    pub sender_goal: Point2,
}

impl TopologyMessage {
    pub fn byte_size(&self) -> usize {
        serialize_topology(self).len()
    }
}

/// Tactical-layer payload: pose, commanded velocities and the currently
/// executed trajectory in the sender's frame. Evaluation past the end of
/// the trajectory holds the terminal state, which pads short trajectories
/// over any receiver's horizon.
#[derive(Debug, Clone)]
pub struct StateMessage {
    pub sender: u16,
    pub timestep: u32,
    pub pose: Pose2,
    pub velocity: (f64, f64),
    pub trajectory: PiecewiseTrajectory,
    /// Time already elapsed on the trajectory when the message was sent.
    pub trajectory_age: f64,
}

impl StateMessage {
    pub fn byte_size(&self) -> usize {
        serialize_state(self).len()
    }
}

#[derive(Debug, Clone)]
pub enum Payload {
    Topology(TopologyMessage),
    State(StateMessage),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Topology(_) => MessageKind::Topology,
            Payload::State(_) => MessageKind::State,
        }
    }

    pub fn byte_size(&self) -> usize {
        match self {
            Payload::Topology(m) => m.byte_size(),
            Payload::State(m) => m.byte_size(),
        }
    }
}

/// A message as seen by the receiving planner, with the established
/// sender-to-receiver frame transform attached.
#[derive(Debug, Clone)]
pub struct ReceivedMessage {
    pub from: usize,
    pub transform: FrameTransform,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelConfig {
    pub comm_range: f64,
    /// Delivery probability of topology messages (the swept knob).
    pub delivery_probability: f64,
    /// Delivery probability of state beacons; modeled as reliable local RF
    /// by default.
    pub state_delivery_probability: f64,
    pub latency_ticks: u64,
    /// Gaussian perturbation of established relative poses (meters on
    /// translation, radians on rotation).
    pub rel_noise_sigma: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            comm_range: 8.0,
            delivery_probability: 1.0,
            state_delivery_probability: 1.0,
            latency_ticks: 0,
            rel_noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub tick: u64,
    pub sender: usize,
    pub receiver: usize,
    pub kind: MessageKind,
    pub bytes: usize,
    pub delivered: bool,
    pub in_range: bool,
}

/// Pairs of robots within communication range.
pub fn detect_encounters(positions: &[Point2], comm_range: f64) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if positions[i].distance(positions[j]) <= comm_range {
                pairs.insert((i, j));
            }
        }
    }
    pairs
}

/// Tick-synchronous message bus owned by the orchestrator.
pub struct Channel {
    config: ChannelConfig,
    seed: u64,
    robot_count: usize,
    /// Frame anchors (world pose of each robot's private frame).
    anchors: Vec<Pose2>,
    in_range: BTreeSet<(usize, usize)>,
    /// Directed transforms receiver <- sender, established on encounter.
    transforms: BTreeMap<(usize, usize), FrameTransform>,
    pending: BTreeMap<u64, Vec<(usize, ReceivedMessage)>>,
    log: Vec<DeliveryRecord>,
    bytes_sent: Vec<u64>,
}

impl Channel {
    pub fn new(config: ChannelConfig, seed: u64, anchors: Vec<Pose2>) -> Self {
        let robot_count = anchors.len();
        Self {
            config,
            seed,
            robot_count,
            anchors,
            in_range: BTreeSet::new(),
            transforms: BTreeMap::new(),
            pending: BTreeMap::new(),
            log: Vec::new(),
            bytes_sent: vec![0; robot_count],
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    /// Update the encounter set from ground-truth positions; newly formed
    /// pairs get fresh relative transforms (both directions independently
    /// perturbed when localization noise is configured).
    pub fn update_encounters(&mut self, tick: u64, positions: &[Point2]) {
        let now = detect_encounters(positions, self.config.comm_range);
        for &(i, j) in &now {
            if !self.in_range.contains(&(i, j)) {
                self.establish(tick, i, j);
                self.establish(tick, j, i);
            }
        }
        self.in_range = now;
    }

    fn establish(&mut self, tick: u64, receiver: usize, sender: usize) {
        // receiver <- sender maps sender-frame coordinates into the
        // receiver frame.
        let truth = FrameTransform::from_pose(&self.anchors[receiver].inverse())
            .compose(&FrameTransform::from_pose(&self.anchors[sender]));
        let t = if self.config.rel_noise_sigma > 0.0 {
            let mut stream = rng::stream(
                self.seed,
                "relative-localization",
                rng::mix(tick ^ ((receiver as u64) << 20) ^ ((sender as u64) << 40)),
            );
            let normal = Normal::new(0.0, self.config.rel_noise_sigma).expect("sigma > 0");
            FrameTransform {
                rotation: truth.rotation + normal.sample(&mut stream),
                translation: (
                    truth.translation.0 + normal.sample(&mut stream),
                    truth.translation.1 + normal.sample(&mut stream),
                ),
            }
        } else {
            truth
        };
        self.transforms.insert((receiver, sender), t);
    }

    pub fn in_range(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.in_range.contains(&key)
    }

    pub fn peers_in_range(&self, robot: usize) -> Vec<usize> {
        (0..self.robot_count)
            .filter(|&p| p != robot && self.in_range(robot, p))
            .collect()
    }

    pub fn transform_into(&self, receiver: usize, sender: usize) -> Option<FrameTransform> {
        self.transforms.get(&(receiver, sender)).copied()
    }

    /// Attempt delivery of `payload` to one receiver. Bytes are charged to
    /// the sender whether or not the packet survives; out-of-range sends
    /// are dropped with distinct accounting.
    pub fn transmit(&mut self, tick: u64, sender: usize, receiver: usize, payload: Payload) {
        let kind = payload.kind();
        let bytes = payload.byte_size();
        self.bytes_sent[sender] += bytes as u64;
        if !self.in_range(sender, receiver) {
            self.log.push(DeliveryRecord {
                tick,
                sender,
                receiver,
                kind,
                bytes,
                delivered: false,
                in_range: false,
            });
            return;
        }
        let p = match kind {
            MessageKind::Topology => self.config.delivery_probability,
            MessageKind::State => self.config.state_delivery_probability,
        };
        let key = rng::derive(
            self.seed,
            "delivery",
            rng::mix(tick)
                ^ rng::mix(((sender as u64) << 1) | 1)
                ^ rng::mix(((receiver as u64) << 17) | 3)
                ^ if kind == MessageKind::Topology { 0 } else { 0x5a5a },
        );
        let delivered = rng::hash_bernoulli(key, p);
        self.log.push(DeliveryRecord {
            tick,
            sender,
            receiver,
            kind,
            bytes,
            delivered,
            in_range: true,
        });
        if delivered {
            let transform = self
                .transform_into(receiver, sender)
                .expect("in-range pair has a transform");
            let due = tick + self.config.latency_ticks;
            self.pending.entry(due).or_default().push((
                receiver,
                ReceivedMessage {
                    from: sender,
                    transform,
                    payload,
                },
            ));
        }
    }

    /// All messages due at or before `tick` for `robot`, ordered by
    /// (due tick, sender).
    pub fn take_inbox(&mut self, tick: u64, robot: usize) -> Vec<ReceivedMessage> {
        let mut out = Vec::new();
        let due_ticks: Vec<u64> = self.pending.range(..=tick).map(|(&t, _)| t).collect();
        for due in due_ticks {
            if let Some(list) = self.pending.get_mut(&due) {
                let mut kept = Vec::with_capacity(list.len());
                for (receiver, msg) in list.drain(..) {
                    if receiver == robot {
                        out.push(msg);
                    } else {
                        kept.push((receiver, msg));
                    }
                }
                *list = kept;
                if list.is_empty() {
                    self.pending.remove(&due);
                }
            }
        }
        out
    }

    pub fn delivery_log(&self) -> &[DeliveryRecord] {
        &self.log
    }

    pub fn bytes_sent(&self, robot: usize) -> u64 {
        self.bytes_sent[robot]
    }

    /// Bytes charged to `robot` within each whole-second window.
    pub fn bandwidth_windows(&self, robot: usize, ticks_per_second: u64) -> Vec<u64> {
        let mut windows: Vec<u64> = Vec::new();
        for rec in &self.log {
            if rec.sender != robot {
                continue;
            }
            let w = (rec.tick / ticks_per_second) as usize;
            if windows.len() <= w {
                windows.resize(w + 1, 0);
            }
            windows[w] += rec.bytes as u64;
        }
        windows
    }
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn read_f32(buf: &[u8], at: &mut usize) -> Result<f64, DecodeError> {
    let end = *at + 4;
    let bytes = buf.get(*at..end).ok_or(DecodeError::Truncated(*at))?;
    *at = end;
    Ok(f32::from_le_bytes(bytes.try_into().unwrap()) as f64)
}

fn read_u16(buf: &[u8], at: &mut usize) -> Result<u16, DecodeError> {
    let end = *at + 2;
    let bytes = buf.get(*at..end).ok_or(DecodeError::Truncated(*at))?;
    *at = end;
    Ok(u16::from_le_bytes(bytes.try_into().unwrap()))
}

fn read_u32(buf: &[u8], at: &mut usize) -> Result<u32, DecodeError> {
    let end = *at + 4;
    let bytes = buf.get(*at..end).ok_or(DecodeError::Truncated(*at))?;
    *at = end;
    Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
}

/// Wire layout (little-endian): sender u16, timestep u32, contour count
/// u16, then per contour a point count u16 followed by the points as f32
/// pairs. The sender goal is local metadata and does not travel.
pub fn serialize_topology(msg: &TopologyMessage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + msg.contours.total_points() * 8);
    buf.extend_from_slice(&msg.sender.to_le_bytes());
    buf.extend_from_slice(&msg.timestep.to_le_bytes());
    buf.extend_from_slice(&(msg.contours.contours.len() as u16).to_le_bytes());
    for contour in &msg.contours.contours {
        buf.extend_from_slice(&(contour.len() as u16).to_le_bytes());
        for p in contour {
            push_f32(&mut buf, p.x);
            push_f32(&mut buf, p.y);
        }
    }
    buf
}

pub fn deserialize_topology(buf: &[u8], frame_tag: &str) -> Result<TopologyMessage, DecodeError> {
    let mut at = 0usize;
    let sender = read_u16(buf, &mut at)?;
    let timestep = read_u32(buf, &mut at)?;
    let count = read_u16(buf, &mut at)?;
    let mut contours = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let points = read_u16(buf, &mut at)?;
        let mut contour = Vec::with_capacity(points as usize);
        for _ in 0..points {
            let x = read_f32(buf, &mut at)?;
            let y = read_f32(buf, &mut at)?;
            contour.push(Point2::new(x, y));
        }
        contours.push(contour);
    }
    Ok(TopologyMessage {
        sender,
        timestep,
        contours: ContourSet {
            contours,
            frame_tag: frame_tag.to_string(),
        },
        sender_goal: Point2::default(),
    })
}

/// Wire layout (little-endian): sender u16, timestep u32, pose 3xf32,
/// velocity 2xf32, trajectory age f32, segment count u16, then knot states
/// as 6xf32 (one more than segments) and durations as f32.
pub fn serialize_state(msg: &StateMessage) -> Vec<u8> {
    let traj = &msg.trajectory;
    let mut buf = Vec::with_capacity(32 + traj.knots().len() * 24 + traj.durations().len() * 4);
    buf.extend_from_slice(&msg.sender.to_le_bytes());
    buf.extend_from_slice(&msg.timestep.to_le_bytes());
    push_f32(&mut buf, msg.pose.position.x);
    push_f32(&mut buf, msg.pose.position.y);
    push_f32(&mut buf, msg.pose.heading);
    push_f32(&mut buf, msg.velocity.0);
    push_f32(&mut buf, msg.velocity.1);
    push_f32(&mut buf, msg.trajectory_age);
    buf.extend_from_slice(&(traj.durations().len() as u16).to_le_bytes());
    for k in traj.knots() {
        for v in [k.pos.x, k.pos.y, k.vel.x, k.vel.y, k.acc.x, k.acc.y] {
            push_f32(&mut buf, v);
        }
    }
    for &d in traj.durations() {
        push_f32(&mut buf, d);
    }
    buf
}

pub fn deserialize_state(buf: &[u8]) -> Result<StateMessage, DecodeError> {
    let mut at = 0usize;
    let sender = read_u16(buf, &mut at)?;
    let timestep = read_u32(buf, &mut at)?;
    let px = read_f32(buf, &mut at)?;
    let py = read_f32(buf, &mut at)?;
    let heading = read_f32(buf, &mut at)?;
    let v = read_f32(buf, &mut at)?;
    let omega = read_f32(buf, &mut at)?;
    let age = read_f32(buf, &mut at)?;
    let segments = read_u16(buf, &mut at)? as usize;
    let mut knots = Vec::with_capacity(segments + 1);
    for _ in 0..=segments {
        let vals: Result<Vec<f64>, _> = (0..6).map(|_| read_f32(buf, &mut at)).collect();
        let vals = vals?;
        knots.push(KnotState {
            pos: Point2::new(vals[0], vals[1]),
            vel: Point2::new(vals[2], vals[3]),
            acc: Point2::new(vals[4], vals[5]),
        });
    }
    let mut durations = Vec::with_capacity(segments);
    for _ in 0..segments {
        durations.push(read_f32(buf, &mut at)?.max(1e-3));
    }
    Ok(StateMessage {
        sender,
        timestep,
        pose: Pose2::new(px, py, heading),
        velocity: (v, omega),
        trajectory: PiecewiseTrajectory::new(knots, durations),
        trajectory_age: age,
    })
}
