//! Discretized objective: closed-form squared-jerk integral, total time,
//! and cubic soft penalties (static clearance, velocity, angular rate,
//! inter-robot distance) sampled at fixed per-segment fractions, with the
//! exact reverse-mode gradient of that discretization.
//!
//! Interior knot states and log-durations form the decision vector; the
//! boundary states stay fixed. Teammate placements are looked up on the
//! time schedule of the initial trajectory and stay frozen during the
//! optimization, so the objective remains a smooth deterministic function
//! of the decision vector.

use crate::geometry::{smooth_signed_distance_placed, ConvexPolygon, Point2};
use crate::local_planner::{LocalGrid, TeammatePrediction};

use super::poly::{backprop_coeffs, eval_quintic, jerk_integral, jerk_integral_grad, quintic_coeffs};
use super::{KnotState, OptParams, PiecewiseTrajectory};

#[derive(Debug, Clone, Copy)]
struct TmPlacement {
    teammate: usize,
    pos: Point2,
    rot: (f64, f64),
    radius: f64,
}

/// Cost terms evaluated separately; useful in tests and reports.
#[derive(Debug, Clone, Copy, Default)]
pub struct CostBreakdown {
    pub jerk: f64,
    pub time: f64,
    pub velocity: f64,
    pub omega: f64,
    pub static_clearance: f64,
    pub inter_robot: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.jerk + self.time + self.velocity + self.omega + self.static_clearance + self.inter_robot
    }
}

/// A frozen optimization instance.
pub struct Problem<'a> {
    start: KnotState,
    end: KnotState,
    segments: usize,
    samples_per_seg: Vec<usize>,
    /// Per (segment, sample): teammate placements at the frozen schedule.
    placements: Vec<Vec<Vec<TmPlacement>>>,
    teammate_shapes: Vec<&'a ConvexPolygon>,
    grid: Option<&'a LocalGrid>,
    own_shape: &'a ConvexPolygon,
    own_radius: f64,
    params: &'a OptParams,
}

impl<'a> Problem<'a> {
    pub fn new(
        init: &PiecewiseTrajectory,
        grid: Option<&'a LocalGrid>,
        teammates: &'a [TeammatePrediction],
        teammate_dt: f64,
        own_shape: &'a ConvexPolygon,
        params: &'a OptParams,
    ) -> Self {
        let m = init.segment_count();
        let samples_per_seg: Vec<usize> = init
            .durations()
            .iter()
            .map(|&t| ((t / params.sample_dt).ceil() as usize).clamp(2, 40))
            .collect();
        let teammate_shapes: Vec<&ConvexPolygon> = teammates.iter().map(|t| &t.shape).collect();
        let mut placements = Vec::with_capacity(m);
        let mut t_base = 0.0;
        for (seg, &t_seg) in init.durations().iter().enumerate() {
            let kappa = samples_per_seg[seg];
            let mut per_sample = Vec::with_capacity(kappa);
            for q in 0..kappa {
                let t_abs = t_base + (q as f64 + 0.5) / kappa as f64 * t_seg;
                let mut at_sample = Vec::new();
                for (ti, tm) in teammates.iter().enumerate() {
                    if tm.poses.is_empty() {
                        continue;
                    }
                    let idx = ((t_abs / teammate_dt).round() as usize).min(tm.poses.len() - 1);
                    let pose = tm.poses[idx];
                    at_sample.push(TmPlacement {
                        teammate: ti,
                        pos: pose.position,
                        rot: (pose.heading.cos(), pose.heading.sin()),
                        radius: tm.shape.bounding_radius(),
                    });
                }
                per_sample.push(at_sample);
            }
            placements.push(per_sample);
            t_base += t_seg;
        }
        Self {
            start: init.knots()[0],
            end: init.knots()[m],
            segments: m,
            samples_per_seg,
            placements,
            teammate_shapes,
            grid,
            own_shape,
            own_radius: own_shape.bounding_radius(),
            params,
        }
    }

    pub fn dim(&self) -> usize {
        6 * (self.segments - 1) + self.segments
    }

    pub fn max_iters(&self) -> usize {
        self.params.max_iters
    }

    pub fn tol(&self) -> f64 {
        self.params.tol
    }

    pub fn pack(&self, traj: &PiecewiseTrajectory) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        for k in traj.knots().iter().take(self.segments).skip(1) {
            z.extend_from_slice(&[k.pos.x, k.pos.y, k.vel.x, k.vel.y, k.acc.x, k.acc.y]);
        }
        for &t in traj.durations() {
            z.push(t.ln());
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> (Vec<KnotState>, Vec<f64>) {
        let m = self.segments;
        let mut knots = Vec::with_capacity(m + 1);
        knots.push(self.start);
        for i in 1..m {
            let o = 6 * (i - 1);
            knots.push(KnotState {
                pos: Point2::new(z[o], z[o + 1]),
                vel: Point2::new(z[o + 2], z[o + 3]),
                acc: Point2::new(z[o + 4], z[o + 5]),
            });
        }
        knots.push(self.end);
        let durations: Vec<f64> = z[6 * (m - 1)..].iter().map(|&l| l.exp()).collect();
        (knots, durations)
    }

    pub fn trajectory(&self, z: &[f64]) -> PiecewiseTrajectory {
        let (knots, durations) = self.unpack(z);
        PiecewiseTrajectory::new(knots, durations)
    }

    pub fn cost(&self, z: &[f64]) -> f64 {
        self.evaluate(z, None, None)
    }

    pub fn cost_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim()];
        let j = self.evaluate(z, Some(&mut grad), None);
        (j, grad)
    }

    pub fn breakdown(&self, z: &[f64]) -> CostBreakdown {
        let mut b = CostBreakdown::default();
        self.evaluate(z, None, Some(&mut b));
        b
    }

    /// Single evaluation path for cost, gradient and breakdown so the three
    /// can never drift apart.
    fn evaluate(
        &self,
        z: &[f64],
        mut grad: Option<&mut Vec<f64>>,
        mut breakdown: Option<&mut CostBreakdown>,
    ) -> f64 {
        let p = self.params;
        let (knots, durations) = self.unpack(z);
        let m = self.segments;
        let mut total = 0.0;

        for seg in 0..m {
            let a = knots[seg];
            let b = knots[seg + 1];
            let t = durations[seg];
            let cx = quintic_coeffs(a.pos.x, a.vel.x, a.acc.x, b.pos.x, b.vel.x, b.acc.x, t);
            let cy = quintic_coeffs(a.pos.y, a.vel.y, a.acc.y, b.pos.y, b.vel.y, b.acc.y, t);
            let mut gcx = [0.0; 6];
            let mut gcy = [0.0; 6];
            let mut gt = 0.0;

            // Smoothness: closed-form squared-jerk integral.
            let jerk = jerk_integral(&cx, t) + jerk_integral(&cy, t);
            total += jerk;
            if let Some(bd) = breakdown.as_deref_mut() {
                bd.jerk += jerk;
            }
            if grad.is_some() {
                let ([g3, g4, g5], gtx) = jerk_integral_grad(&cx, t);
                gcx[3] += g3;
                gcx[4] += g4;
                gcx[5] += g5;
                let ([h3, h4, h5], gty) = jerk_integral_grad(&cy, t);
                gcy[3] += h3;
                gcy[4] += h4;
                gcy[5] += h5;
                gt += gtx + gty;
            }

            // Time.
            total += p.w_time * t;
            gt += p.w_time;
            if let Some(bd) = breakdown.as_deref_mut() {
                bd.time += p.w_time * t;
            }

            // Soft constraints at fixed per-segment fractions.
            let kappa = self.samples_per_seg[seg];
            let weight = t / kappa as f64;
            for q in 0..kappa {
                let u = (q as f64 + 0.5) / kappa as f64;
                let tau = u * t;
                let (px, vx, ax, jx) = eval_quintic(&cx, tau);
                let (py, vy, ay, jy) = eval_quintic(&cy, tau);
                let pos = Point2::new(px, py);
                let vel = Point2::new(vx, vy);
                let acc = Point2::new(ax, ay);
                let jrk = Point2::new(jx, jy);

                let mut pen = 0.0; // weighted penalty sum at this sample
                let mut gp = Point2::default();
                let mut gv = Point2::default();
                let mut ga = Point2::default();

                // Velocity limit.
                let ev = vel.norm_sq() - p.v_max * p.v_max;
                if ev > 0.0 {
                    let term = p.w_vel * ev * ev * ev;
                    pen += term;
                    if let Some(bd) = breakdown.as_deref_mut() {
                        bd.velocity += weight * term;
                    }
                    gv = gv + vel * (p.w_vel * 6.0 * ev * ev);
                }

                // Angular rate from the flat output.
                let den = vel.norm_sq() + p.eps_v_sq;
                let num = vel.cross(acc);
                let om = num / den;
                let eo = om * om - p.omega_max * p.omega_max;
                if eo > 0.0 {
                    let term = p.w_omega * eo * eo * eo;
                    pen += term;
                    if let Some(bd) = breakdown.as_deref_mut() {
                        bd.omega += weight * term;
                    }
                    let dom = p.w_omega * 6.0 * eo * eo * om;
                    let den2 = den * den;
                    gv.x += dom * (acc.y * den - num * 2.0 * vel.x) / den2;
                    gv.y += dom * (-acc.x * den - num * 2.0 * vel.y) / den2;
                    ga.x += dom * (-vel.y / den);
                    ga.y += dom * (vel.x / den);
                }

                // Soft-normalized body direction used for footprint
                // placement; smooth through standstill.
                let s = (vel.norm_sq() + p.eps_v_sq).sqrt();
                let udir = vel * (1.0 / s);
                let chain_dir = |gq: Point2, vel: Point2, s: f64| -> Point2 {
                    // (I/s - v v^T / s^3) gq
                    let vdotg = vel.dot(gq);
                    Point2::new(gq.x / s - vel.x * vdotg / (s * s * s), gq.y / s - vel.y * vdotg / (s * s * s))
                };

                // Static clearance through a two-disc footprint cover.
                if let Some(grid) = self.grid {
                    for sign in [-1.0, 1.0] {
                        let center = pos + udir * (sign * p.disc_offset);
                        let (d, dgrad) = grid.interpolate_clearance(center);
                        let es = (p.static_margin + p.disc_radius) - d;
                        if es > 0.0 {
                            let term = p.w_static * es * es * es;
                            pen += term;
                            if let Some(bd) = breakdown.as_deref_mut() {
                                bd.static_clearance += weight * term;
                            }
                            let gq = dgrad * (-p.w_static * 3.0 * es * es);
                            gp = gp + gq;
                            gv = gv + chain_dir(gq, vel, s) * (sign * p.disc_offset);
                        }
                    }
                }

                // Inter-robot clearance via the smoothed signed distance.
                for tm in &self.placements[seg][q] {
                    let gate = self.own_radius + tm.radius + p.d_min + 0.75;
                    if pos.distance(tm.pos) > gate {
                        continue;
                    }
                    let (sd, ga_own, _gb) = smooth_signed_distance_placed(
                        self.own_shape,
                        pos,
                        (udir.x, udir.y),
                        self.teammate_shapes[tm.teammate],
                        tm.pos,
                        tm.rot,
                        p.mu,
                    );
                    let er = p.d_min - sd;
                    if er > 0.0 {
                        let term = p.w_robot * er * er * er;
                        pen += term;
                        if let Some(bd) = breakdown.as_deref_mut() {
                            bd.inter_robot += weight * term;
                        }
                        let dsd = -p.w_robot * 3.0 * er * er;
                        gp = gp + ga_own.pos * dsd;
                        let grot = Point2::new(ga_own.rot.0 * dsd, ga_own.rot.1 * dsd);
                        gv = gv + chain_dir(grot, vel, s);
                    }
                }

                total += weight * pen;
                if grad.is_some() {
                    // Quadrature weight and sample-time chain.
                    gt += pen / kappa as f64
                        + weight * (gp.dot(vel) + gv.dot(acc) + ga.dot(jrk)) * u;
                    let mut tp = 1.0; // tau^k
                    let mut tm1 = 0.0; // k tau^(k-1)
                    let mut tm2 = 0.0; // k(k-1) tau^(k-2)
                    for k in 0..6 {
                        let kf = k as f64;
                        gcx[k] += weight * (gp.x * tp + gv.x * tm1 + ga.x * tm2);
                        gcy[k] += weight * (gp.y * tp + gv.y * tm1 + ga.y * tm2);
                        // advance powers: k -> k+1
                        tm2 = (kf + 1.0) * kf * safe_pow(tau, k as i32 - 1);
                        tm1 = (kf + 1.0) * tp;
                        tp *= tau;
                    }
                }
            }

            if let Some(g) = grad.as_deref_mut() {
                let bx = backprop_coeffs(&gcx, a.pos.x, a.vel.x, a.acc.x, b.pos.x, b.vel.x, b.acc.x, t);
                let by = backprop_coeffs(&gcy, a.pos.y, a.vel.y, a.acc.y, b.pos.y, b.vel.y, b.acc.y, t);
                let gt_total = gt + bx.t + by.t;
                // Interior knot contributions; boundary knots are fixed.
                if seg > 0 {
                    let o = 6 * (seg - 1);
                    g[o] += bx.p0;
                    g[o + 1] += by.p0;
                    g[o + 2] += bx.v0;
                    g[o + 3] += by.v0;
                    g[o + 4] += bx.a0;
                    g[o + 5] += by.a0;
                }
                if seg + 1 < m {
                    let o = 6 * seg;
                    g[o] += bx.p1;
                    g[o + 1] += by.p1;
                    g[o + 2] += bx.v1;
                    g[o + 3] += by.v1;
                    g[o + 4] += bx.a1;
                    g[o + 5] += by.a1;
                }
                g[6 * (m - 1) + seg] += gt_total * t; // d/d(log T)
            }
        }
        total
    }
}

fn safe_pow(x: f64, e: i32) -> f64 {
    if e < 0 {
        0.0 // only reached with coefficient k(k-1) == 0
    } else {
        x.powi(e)
    }
}
