//! The decision layer: a common policy interface, the deterministic
//! rule-based baseline, the four-network neural policy, and exploration
//! noise for fine-tuning rollouts.
//!
//! All reasoning happens in normalized local coordinates, where the
//! reference vertex sits at the origin and its right neighbour at (1, 0).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand::RngCore;
use rand_distr::{Dirichlet, Distribution, Normal};

use crate::front::{LocalState, PolarPlacement, UpdateAction, UpdateKind};
use crate::geom::{ccw_angle, Point2, Vec2};
use crate::net::{forward, HeadKind, NetParams, NetSpec, Workspace};
use crate::reward::corner_jacobians;

/// Seal only if the consumed corner stays comfortably off flat.
const SEAL_MIN_JACOBIAN: f64 = 0.05;
/// Reject placements closer than this (in local mean-edge units) to one of
/// the three nearest outside vertices; the squeeze risks splitting the
/// region.
const GUARD_FACTOR: f64 = 0.5;

/// One policy answer: the acceptance pair, the type distribution, and the
/// concrete action for the argmax (or sampled) type.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDecision {
    pub accept: bool,
    /// (P_acc, P_rej); sums to one.
    pub accept_probs: [f64; 2],
    /// Sums to one.
    pub type_probs: [f64; 4],
    pub action: UpdateAction,
}

/// A front-update decision maker. Implementations are immutable; any
/// randomness comes through the caller's generator.
pub trait Policy {
    fn decide(&self, state: &LocalState, rng: &mut dyn RngCore) -> PolicyDecision;

    /// Stable identifier recorded in mesh provenance.
    fn id(&self) -> &str;
}

/// Rule thresholds, in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleConfig {
    /// Below this, try to seal with existing vertices.
    pub seal_below: f64,
    /// At or above this, fan with two new vertices.
    pub fan_at: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            seal_below: 135.0,
            fan_at: 240.0,
        }
    }
}

/// The deterministic baseline that both bootstraps training data and backs
/// up learned policies when they emit invalid geometry.
#[derive(Clone, Debug, Default)]
pub struct RulePolicy {
    pub cfg: RuleConfig,
}

impl RulePolicy {
    pub fn new() -> Self {
        Self::default()
    }

    fn decide_inner(&self, state: &LocalState) -> PolicyDecision {
        let theta = state.reference_angle().to_degrees();
        let p0 = state.p0;
        let r = &state.right;
        let l = &state.left;
        // Local mean edge length; |p0 - right[0]| is 1 by construction.
        let h = 0.5 * (1.0 + p0.dist(l[0]));
        let six = state.six_segment_len();

        let quad_ok = |pts: &[Point2; 4]| {
            corner_jacobians(pts)
                .into_iter()
                .all(|j| j > SEAL_MIN_JACOBIAN)
        };

        if theta < self.cfg.seal_below {
            let jac_min = |pts: &[Point2; 4]| {
                corner_jacobians(pts)
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            };
            let left_j = jac_min(&[l[1], l[0], p0, r[0]]);
            let right_j = jac_min(&[l[0], p0, r[0], r[1]]);
            if left_j > SEAL_MIN_JACOBIAN || right_j > SEAL_MIN_JACOBIAN {
                let kind = if left_j >= right_j {
                    UpdateKind::SealLeft
                } else {
                    UpdateKind::SealRight
                };
                return self.finish(state, kind, None, None, true);
            }
            // No compatible neighbour: place a vertex across the corner.
        }

        if theta < self.cfg.fan_at {
            // One vertex on the bisector. The distance follows the corner
            // opening: near 90 degrees the parallelogram completion makes a
            // square cell, flattening toward one edge length on open fronts.
            let depth = h * (2.0 * (0.5 * state.reference_angle()).cos()).clamp(0.9, 1.45);
            let ang = 0.5 * state.reference_angle();
            let v = Point2::new(depth * ang.cos(), depth * ang.sin());
            let placement = PolarPlacement {
                theta: 0.5,
                rho: depth / six,
            };
            let accept = theta < 180.0
                && self.clearance_ok(state, v, h)
                && quad_ok(&[l[0], p0, r[0], v]);
            return self.finish(state, UpdateKind::InsertOne, Some(placement), None, accept);
        }

        // Reflex fan: slice one third of the wedge off the right edge.
        let ang1 = state.reference_angle() / 3.0;
        let v1 = Point2::new(h * ang1.cos(), h * ang1.sin());
        let v2 = v1.add(Vec2::new(h, 0.0));
        let p1 = PolarPlacement {
            theta: 1.0 / 3.0,
            rho: h / six,
        };
        let p2 = state.encode_placement(v2);
        let accept = self.clearance_ok(state, v1, h)
            && self.clearance_ok(state, v2, h)
            && quad_ok(&[p0, r[0], v2, v1]);
        self.finish(state, UpdateKind::InsertTwo, Some(p1), Some(p2), accept)
    }

    fn clearance_ok(&self, state: &LocalState, v: Point2, h: f64) -> bool {
        state
            .closest
            .iter()
            .all(|c| c.dist(v) >= GUARD_FACTOR * h)
    }

    fn finish(
        &self,
        _state: &LocalState,
        kind: UpdateKind,
        new1: Option<PolarPlacement>,
        new2: Option<PolarPlacement>,
        accept: bool,
    ) -> PolicyDecision {
        let mut type_probs = [0.0; 4];
        type_probs[(kind.type_id() - 1) as usize] = 1.0;
        PolicyDecision {
            accept,
            accept_probs: if accept { [1.0, 0.0] } else { [0.0, 1.0] },
            type_probs,
            action: UpdateAction {
                kind,
                new1,
                new2,
            },
        }
    }
}

impl Policy for RulePolicy {
    fn decide(&self, state: &LocalState, _rng: &mut dyn RngCore) -> PolicyDecision {
        self.decide_inner(state)
    }

    fn id(&self) -> &str {
        "rule"
    }
}

/// The four trained networks of one policy.
#[derive(Clone, Debug)]
pub struct PolicyNets {
    pub accept: (NetSpec, NetParams),
    pub update_type: (NetSpec, NetParams),
    pub place_one: (NetSpec, NetParams),
    pub place_two: (NetSpec, NetParams),
}

impl PolicyNets {
    /// Specs must carry the right heads and matching parameter blobs.
    pub fn validate(&self) -> bool {
        self.accept.0.head == HeadKind::Binary
            && self.update_type.0.head == HeadKind::FourClass
            && self.place_one.0.head == HeadKind::Regress2
            && self.place_two.0.head == HeadKind::Regress4
            && self.accept.1.matches(&self.accept.0)
            && self.update_type.1.matches(&self.update_type.0)
            && self.place_one.1.matches(&self.place_one.0)
            && self.place_two.1.matches(&self.place_two.0)
    }
}

/// Exploration noise: Dirichlet blending for the two classification heads
/// and isotropic Gaussian jitter for the regression heads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Mixture weight on the policy distribution.
    pub eta: f64,
    /// Dirichlet concentration.
    pub dirichlet_alpha: f64,
    /// Gaussian variance per regression coordinate.
    pub sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            eta: 0.99,
            dirichlet_alpha: 0.05,
            sigma: 1e-4,
        }
    }
}

impl NoiseConfig {
    /// True when sampling degenerates to the greedy decision.
    pub fn is_disabled(&self) -> bool {
        self.eta >= 1.0 && self.sigma <= 0.0
    }
}

/// Blend `probs` with a Dirichlet draw and sample a class. Returns the
/// sampled class and the blended distribution.
pub fn sample_class<R: RngCore + ?Sized>(
    probs: &[f64],
    noise: &NoiseConfig,
    rng: &mut R,
) -> (usize, Vec<f64>) {
    let mut blended: Vec<f64> = probs.to_vec();
    if noise.eta < 1.0 {
        let draw: Vec<f64> = match probs.len() {
            2 => Dirichlet::<f64, 2>::new([noise.dirichlet_alpha; 2])
                .expect("alpha > 0")
                .sample(rng)
                .to_vec(),
            4 => Dirichlet::<f64, 4>::new([noise.dirichlet_alpha; 4])
                .expect("alpha > 0")
                .sample(rng)
                .to_vec(),
            n => panic!("unsupported class count {n}"),
        };
        for (b, q) in blended.iter_mut().zip(draw.iter()) {
            *b = noise.eta * *b + (1.0 - noise.eta) * q;
        }
    }
    let mut u: f64 = rng.random();
    let mut idx = blended.len() - 1;
    for (i, &p) in blended.iter().enumerate() {
        if u < p {
            idx = i;
            break;
        }
        u -= p;
    }
    (idx, blended)
}

/// Gaussian jitter clamped to the unit interval.
pub fn jitter_unit<R: RngCore + ?Sized>(x: f64, noise: &NoiseConfig, rng: &mut R) -> f64 {
    if noise.sigma <= 0.0 {
        return x.clamp(0.0, 1.0);
    }
    let n = Normal::new(0.0, noise.sigma.sqrt()).expect("sigma valid");
    (x + n.sample(rng)).clamp(0.0, 1.0)
}

/// How the neural policy turns head outputs into choices.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Selection {
    Greedy,
    Noisy(NoiseConfig),
}

/// Policy backed by the four networks. Greedy by default; wrap the same
/// nets with [`NeuralPolicy::with_noise`] for exploration rollouts.
pub struct NeuralPolicy {
    nets: PolicyNets,
    selection: Selection,
    id: String,
}

impl NeuralPolicy {
    pub fn greedy(nets: PolicyNets, id: String) -> Self {
        assert!(nets.validate(), "mismatched policy networks");
        NeuralPolicy {
            nets,
            selection: Selection::Greedy,
            id,
        }
    }

    pub fn with_noise(nets: PolicyNets, noise: NoiseConfig, id: String) -> Self {
        assert!(nets.validate(), "mismatched policy networks");
        NeuralPolicy {
            nets,
            selection: Selection::Noisy(noise),
            id,
        }
    }

    pub fn nets(&self) -> &PolicyNets {
        &self.nets
    }

    fn run_head(&self, which: &(NetSpec, NetParams), x: &[f64]) -> crate::net::HeadOut {
        let mut ws = Workspace::new(&which.0);
        forward(&which.0, &which.1, x, &mut ws)
    }
}

impl Policy for NeuralPolicy {
    fn decide(&self, state: &LocalState, rng: &mut dyn RngCore) -> PolicyDecision {
        let x = state.features();
        let acc_out = self.run_head(&self.nets.accept, &x);
        let type_out = self.run_head(&self.nets.update_type, &x);
        let mut accept_probs = [acc_out.as_slice()[0], acc_out.as_slice()[1]];
        let mut type_probs = [0.0f64; 4];
        type_probs.copy_from_slice(type_out.as_slice());

        let (accept_idx, type_idx) = match self.selection {
            Selection::Greedy => {
                // Argmax; ties fall to the lower index.
                let a = if accept_probs[1] > accept_probs[0] { 1 } else { 0 };
                let t = type_out.argmax();
                (a, t)
            }
            Selection::Noisy(noise) if noise.is_disabled() => {
                let a = if accept_probs[1] > accept_probs[0] { 1 } else { 0 };
                let t = type_out.argmax();
                (a, t)
            }
            Selection::Noisy(noise) => {
                let (a, blended_a) = sample_class(&accept_probs, &noise, rng);
                let (t, blended_t) = sample_class(&type_probs, &noise, rng);
                accept_probs = [blended_a[0], blended_a[1]];
                type_probs.copy_from_slice(&blended_t);
                (a, t)
            }
        };

        let kind = UpdateKind::from_type_id(type_idx as u8 + 1).unwrap();
        let jitter = |v: f64, rng: &mut dyn RngCore| match self.selection {
            Selection::Noisy(noise) if !noise.is_disabled() => jitter_unit(v, &noise, rng),
            _ => v.clamp(0.0, 1.0),
        };
        let (new1, new2) = match kind {
            UpdateKind::InsertOne => {
                let out = self.run_head(&self.nets.place_one, &x);
                let v = out.as_slice();
                (
                    Some(PolarPlacement {
                        theta: jitter(v[0], rng),
                        rho: jitter(v[1], rng),
                    }),
                    None,
                )
            }
            UpdateKind::InsertTwo => {
                let out = self.run_head(&self.nets.place_two, &x);
                let v = out.as_slice();
                (
                    Some(PolarPlacement {
                        theta: jitter(v[0], rng),
                        rho: jitter(v[1], rng),
                    }),
                    Some(PolarPlacement {
                        theta: jitter(v[2], rng),
                        rho: jitter(v[3], rng),
                    }),
                )
            }
            _ => (None, None),
        };

        PolicyDecision {
            accept: accept_idx == 0,
            accept_probs,
            type_probs,
            action: UpdateAction { kind, new1, new2 },
        }
    }

    fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Debug for NeuralPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeuralPolicy")
            .field("id", &self.id)
            .field("selection", &self.selection)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::Front;
    use crate::geom::Aabb;
    use crate::mesh::MeshBuilder;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn state_for(pts: &[Point2], at_pos: Point2) -> LocalState {
        let mut b = MeshBuilder::new();
        let f = Front::from_seed_loop(
            &mut b,
            pts,
            Aabb {
                min: p(-10.0, -10.0),
                max: p(10.0, 10.0),
            },
            0.5,
            1e-9,
        );
        let at = f
            .node_ids()
            .into_iter()
            .find(|&n| b.pos(f.vertex(n)) == at_pos)
            .unwrap();
        f.extract_state(&b, at)
    }

    fn regular_ngon(n: usize, r: f64) -> alloc::vec::Vec<Point2> {
        (0..n)
            .map(|i| {
                let a = 2.0 * core::f64::consts::PI * i as f64 / n as f64;
                p(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    #[test]
    fn rule_straight_front_inserts_on_bisector() {
        // All six segments around the reference have unit length.
        let pts = [
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(3.0, 0.0),
            p(4.0, 0.0),
            p(5.0, 0.0),
            p(6.0, 0.0),
            p(6.0, 3.0),
            p(3.0, 3.0),
            p(0.0, 3.0),
        ];
        let s = state_for(&pts, p(3.0, 0.0));
        assert_relative_eq!(s.reference_angle().to_degrees(), 180.0, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = RulePolicy::new().decide(&s, &mut rng);
        assert_eq!(d.action.kind, UpdateKind::InsertOne);
        let placement = d.action.new1.unwrap();
        assert_relative_eq!(placement.theta, 0.5, epsilon = 1e-12);
        // Unit spacing: the radius sits at 0.9 edge lengths, about one
        // sixth of the six surrounding segments.
        assert_relative_eq!(placement.rho, 0.9 / 6.0, epsilon = 1e-9);
        assert!((placement.rho - 1.0 / 6.0).abs() < 0.03);
        // Exactly straight references are handed over, not meshed directly.
        assert!(!d.accept);
    }

    #[test]
    fn rule_near_straight_is_accepted() {
        let s = state_for(&regular_ngon(16, 2.0), p(2.0, 0.0));
        let deg = s.reference_angle().to_degrees();
        assert!((135.0..180.0).contains(&deg), "angle {deg}");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = RulePolicy::new().decide(&s, &mut rng);
        assert!(d.accept);
        assert_eq!(d.action.kind, UpdateKind::InsertOne);
        assert_eq!(d.accept_probs, [1.0, 0.0]);
        assert_eq!(d.type_probs, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rule_square_corner_seals() {
        // The corner cell of a 2x1 rectangle: the right neighbour is itself
        // a square corner, so sealing toward it wins.
        let pts = [
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 1.0),
            p(1.0, 1.0),
            p(0.0, 1.0),
        ];
        let s = state_for(&pts, p(2.0, 0.0));
        assert_relative_eq!(s.reference_angle().to_degrees(), 90.0, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = RulePolicy::new().decide(&s, &mut rng);
        assert!(d.accept);
        assert_eq!(d.action.kind, UpdateKind::SealRight);
        // A square corner flanked by straight runs cannot seal; it falls
        // back to completing the cell with one inserted vertex.
        let flat_pts = [
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(2.0, 1.0),
            p(2.0, 2.0),
            p(0.0, 2.0),
        ];
        let s2 = state_for(&flat_pts, p(2.0, 0.0));
        let d2 = RulePolicy::new().decide(&s2, &mut rng);
        assert_eq!(d2.action.kind, UpdateKind::InsertOne);
    }

    #[test]
    fn rule_reflex_fans_in_thirds() {
        let pts = [
            p(0.0, 0.0),
            p(4.0, 0.0),
            p(4.0, 4.0),
            p(3.0, 4.0),
            p(3.0, 1.0),
            p(0.0, 1.0),
        ];
        let s = state_for(&pts, p(3.0, 1.0));
        assert_relative_eq!(s.reference_angle().to_degrees(), 270.0, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = RulePolicy::new().decide(&s, &mut rng);
        assert_eq!(d.action.kind, UpdateKind::InsertTwo);
        let p1 = d.action.new1.unwrap();
        assert_relative_eq!(p1.theta, 1.0 / 3.0, epsilon = 1e-12);
        // The slice angle at the reference is a third of 270 degrees.
        let local = s.decode_placement(p1);
        let ang = ccw_angle(Vec2::new(1.0, 0.0), local.sub(p(0.0, 0.0))).to_degrees();
        assert_relative_eq!(ang, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn rule_rejects_squeezed_placement() {
        // A narrow channel: the opposite wall sits within half a local edge
        // of the bisector placement.
        let pts = [
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            p(3.0, 0.0),
            p(4.0, 0.0),
            p(5.0, 0.0),
            p(5.0, 0.55),
            p(4.0, 0.55),
            p(3.0, 0.55),
            p(2.0, 0.55),
            p(1.0, 0.55),
            p(0.0, 0.55),
        ];
        let s = state_for(&pts, p(2.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = RulePolicy::new().decide(&s, &mut rng);
        assert!(!d.accept, "squeezed insert must be rejected");
    }

    fn untrained_nets(width: usize) -> PolicyNets {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mk = |head| {
            let spec = NetSpec::with_dims(head, 2, width);
            let params = NetParams::init(&spec, &mut rng);
            (spec, params)
        };
        PolicyNets {
            accept: mk(HeadKind::Binary),
            update_type: mk(HeadKind::FourClass),
            place_one: mk(HeadKind::Regress2),
            place_two: mk(HeadKind::Regress4),
        }
    }

    #[test]
    fn untrained_policy_is_uniform_and_accepts() {
        let s = state_for(&regular_ngon(12, 1.0), p(1.0, 0.0));
        let pol = NeuralPolicy::greedy(untrained_nets(8), String::from("sl"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = pol.decide(&s, &mut rng);
        assert!(d.accept, "tie goes to the lower index, accept");
        assert_eq!(d.action.kind, UpdateKind::InsertOne);
        for &pr in &d.type_probs {
            assert_relative_eq!(pr, 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn disabled_noise_matches_greedy() {
        let s = state_for(&regular_ngon(12, 1.0), p(1.0, 0.0));
        let nets = untrained_nets(8);
        let greedy = NeuralPolicy::greedy(nets.clone(), String::from("sl"));
        let noisy = NeuralPolicy::with_noise(
            nets,
            NoiseConfig {
                eta: 1.0,
                sigma: 0.0,
                ..Default::default()
            },
            String::from("rl"),
        );
        let mut r1 = ChaCha8Rng::seed_from_u64(2);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(greedy.decide(&s, &mut r1), noisy.decide(&s, &mut r2));
    }

    #[test]
    fn noise_mixture_mean_matches_analytic() {
        // Mean of the blended first component: eta*0.9 + (1-eta)*0.5.
        let noise = NoiseConfig {
            eta: 0.99,
            dirichlet_alpha: 0.05,
            sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let (_, blended) = sample_class(&[0.9, 0.1], &noise, &mut rng);
            acc += blended[0];
        }
        let mean = acc / n as f64;
        assert!((mean - 0.896).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn jitter_std_tracks_sigma() {
        let noise = NoiseConfig {
            eta: 1.0,
            dirichlet_alpha: 0.05,
            sigma: 1e-4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let v = jitter_unit(0.5, &noise, &mut rng);
            acc += v;
            acc2 += v * v;
        }
        let mean = acc / n as f64;
        let std = (acc2 / n as f64 - mean * mean).sqrt();
        assert!((std - 0.01).abs() < 0.001, "std {std}");
    }

    #[test]
    fn argmax_rarely_flips_under_default_noise() {
        let noise = NoiseConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let probs = [0.75, 0.15, 0.07, 0.03];
        let mut flips = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let (c, _) = sample_class(&probs, &noise, &mut rng);
            if c != 0 {
                flips += 1;
            }
        }
        assert!(
            (flips as f64) < 0.30 * n as f64,
            "flips {flips} of {n}"
        );
    }
}
