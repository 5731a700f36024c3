//! The front-loop driver: reference selection in ascending-angle order,
//! policy queries with a geometric fallback ladder, partition and merge
//! handling, termination, and boundary-layer insertion on finished meshes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::front::{
    Front, FrontError, LocalState, NodeId, PolarPlacement, UpdateAction, UpdateKind,
};
use crate::geom::{dist_point_segment, winding_number, Aabb, Point2};
use crate::mesh::{MeshBuilder, Provenance, QuadMesh};
use crate::policy::{Policy, RulePolicy};
use crate::reward::corner_jacobians;
use crate::seeding::SeededBoundary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineError {
    /// The run did not close every front within the step budget.
    StepLimitExceeded,
    /// Policy and rule fallback both failed to produce a valid update.
    PolicyFailure,
    /// The seeded input is unusable (odd loop, too short).
    InvalidInput,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::StepLimitExceeded => write!(f, "step limit exceeded"),
            EngineError::PolicyFailure => write!(f, "no valid update at some step"),
            EngineError::InvalidInput => write!(f, "invalid seeded input"),
        }
    }
}

impl core::error::Error for EngineError {}

/// Which policy drove a run; recorded in provenance and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Rule,
    Supervised,
    Refined,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Rule => "rule",
            PolicyKind::Supervised => "sl",
            PolicyKind::Refined => "rl",
        }
    }
}

/// Run configuration. `max_steps = 0` derives the budget from the seed
/// count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshRunConfig {
    pub s_a: f64,
    pub max_steps: usize,
    pub layer_count: usize,
    /// Layer thickness as a fraction of the local element height.
    pub layer_thickness: f64,
    pub seed: u64,
    pub domain_id: u64,
    pub episode: u64,
}

impl Default for MeshRunConfig {
    fn default() -> Self {
        MeshRunConfig {
            s_a: 0.05,
            max_steps: 0,
            layer_count: 0,
            layer_thickness: 0.25,
            seed: 0,
            domain_id: 0,
            episode: 0,
        }
    }
}

/// Per-run counters; the termination identity in the tests leans on these.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub steps: usize,
    /// Quads emitted per updating type (indices 0..4 = types 1..4).
    pub quads_by_type: [usize; 4],
    pub partitions: usize,
    pub merges: usize,
    pub terminal_quads: usize,
    pub forced_selections: usize,
    pub initial_edges: usize,
}

/// One selection-and-update step as recorded for dataset extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// States of the vertices the scan rejected before settling (capped).
    pub rejected: Vec<[f64; 29]>,
    /// The executed decision, when the step emitted a policy quad.
    pub accepted: Option<AcceptedRecord>,
    pub event: StepEvent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptedRecord {
    pub features: [f64; 29],
    /// The action as applied (after any radius shrink).
    pub action: UpdateAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepEvent {
    Quad,
    Partition,
    Merge,
    Terminal,
}

/// Full record of one meshing run.
#[derive(Clone, Debug, Default)]
pub struct MeshTrace {
    pub steps: Vec<StepRecord>,
    pub stats: EngineStats,
}

/// Cap on rejected rows recorded per step, to bound class imbalance.
const MAX_REJECTED_PER_STEP: usize = 5;
/// Radius shrink factor for retrying failed insert placements.
const SHRINK: f64 = 0.6;
/// Candidate failures before the rule policy takes the step over.
const FAILURES_BEFORE_FALLBACK: usize = 3;

/// Mesh one seeded component with the given policy.
pub fn mesh_domain(
    seeded: &SeededBoundary,
    policy: &dyn Policy,
    cfg: &MeshRunConfig,
) -> Result<QuadMesh, EngineError> {
    mesh_domain_traced(seeded, policy, cfg, &mut |_, _| {}).map(|(m, _)| m)
}

/// As [`mesh_domain`], also returning the step trace. The observer runs
/// after every front mutation with the builder and all active fronts.
pub fn mesh_domain_traced(
    seeded: &SeededBoundary,
    policy: &dyn Policy,
    cfg: &MeshRunConfig,
    observe: &mut dyn FnMut(&MeshBuilder, &[Front]),
) -> Result<(QuadMesh, MeshTrace), EngineError> {
    let loops = seeded.loop_points();
    if loops.is_empty() {
        return Err(EngineError::InvalidInput);
    }
    let all_pts: Vec<Point2> = loops.iter().flatten().copied().collect();
    let bounds = Aabb::of_points(all_pts.iter()).ok_or(EngineError::InvalidInput)?;
    let eps = 1e-9 * bounds.diagonal().max(1e-12);

    let mut total_seeds = 0usize;
    let mut total_len = 0.0f64;
    for lp in &loops {
        if lp.len() < 4 || lp.len() % 2 != 0 {
            return Err(EngineError::InvalidInput);
        }
        total_seeds += lp.len();
        for i in 0..lp.len() {
            total_len += lp[i].dist(lp[(i + 1) % lp.len()]);
        }
    }
    let mean_spacing = total_len / total_seeds as f64;
    let cell = (2.0 * mean_spacing).max(1e-12);

    let mut builder = MeshBuilder::new();
    let mut fronts: Vec<Front> = loops
        .iter()
        .map(|lp| Front::from_seed_loop(&mut builder, lp, bounds, cell, eps))
        .collect();

    let max_steps = if cfg.max_steps > 0 {
        cfg.max_steps
    } else {
        (10usize.saturating_mul(total_seeds * total_seeds)).max(1000)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rule = RulePolicy::new();
    let mut trace = MeshTrace::default();
    trace.stats.initial_edges = total_seeds;

    // Fronts advance in rotation so loops of a multi-loop domain grow
    // toward each other and merge, instead of one loop filling the whole
    // band alone.
    while !fronts.is_empty() {
        let mut i = 0usize;
        while i < fronts.len() {
            if trace.stats.steps >= max_steps {
                return Err(EngineError::StepLimitExceeded);
            }
            trace.stats.steps += 1;

            if fronts[i].edge_count() == 4 {
                let front = fronts.remove(i);
                match close_terminal(&mut builder, &front) {
                    Some(_) => {
                        trace.stats.terminal_quads += 1;
                        trace.steps.push(StepRecord {
                            rejected: Vec::new(),
                            accepted: None,
                            event: StepEvent::Terminal,
                        });
                        observe(&builder, &fronts);
                        continue;
                    }
                    None => {
                        // Non-convex terminal loop: fan a slice off the
                        // reflex corner and keep going.
                        let mut front = front;
                        rescue_terminal(&mut builder, &mut front, &fronts)
                            .ok_or(EngineError::PolicyFailure)?;
                        trace.stats.quads_by_type[3] += 1;
                        trace.steps.push(StepRecord {
                            rejected: Vec::new(),
                            accepted: None,
                            event: StepEvent::Quad,
                        });
                        push_observe(observe, &builder, &fronts, &front);
                        fronts.insert(i, front);
                        i += 1;
                        continue;
                    }
                }
            }

            let mut front = fronts.remove(i);
            step_once(
                &mut builder,
                &mut front,
                &mut fronts,
                policy,
                &rule,
                &mut rng,
                &mut trace,
            )?;
            push_observe(observe, &builder, &fronts, &front);
            let at = i.min(fronts.len());
            fronts.insert(at, front);
            i += 1;

        }
    }

    let mesh = builder.finish(Provenance {
        domain_id: cfg.domain_id,
        policy_id: String::from(policy.id()),
        episode: cfg.episode,
    });
    Ok((mesh, trace))
}

fn push_observe(
    observe: &mut dyn FnMut(&MeshBuilder, &[Front]),
    builder: &MeshBuilder,
    fronts: &[Front],
    current: &Front,
) {
    let mut all: Vec<Front> = fronts.to_vec();
    all.push(current.clone());
    observe(builder, &all);
}

/// Visit the front's vertices in ascending inner-angle order and return the
/// first policy-accepted one, or the minimum-angle vertex if every query
/// rejects (forced progress). Also returns the states of the rejected
/// vertices the scan passed over.
pub fn select_reference(
    front: &Front,
    builder: &MeshBuilder,
    policy: &dyn Policy,
    rng: &mut ChaCha8Rng,
) -> (
    NodeId,
    LocalState,
    crate::policy::PolicyDecision,
    bool,
    Vec<[f64; 29]>,
) {
    let candidates = front.candidates_by_angle();
    let mut rejected: Vec<[f64; 29]> = Vec::new();
    for &(_, node) in &candidates {
        let state = front.extract_state(builder, node);
        let decision = policy.decide(&state, rng);
        if decision.accept {
            return (node, state, decision, false, rejected);
        }
        if rejected.len() < MAX_REJECTED_PER_STEP {
            rejected.push(state.features());
        }
    }
    // Everyone rejected: force the minimum-angle vertex.
    let node = candidates[0].1;
    let state = front.extract_state(builder, node);
    let decision = policy.decide(&state, rng);
    (node, state, decision, true, rejected)
}

fn step_once(
    builder: &mut MeshBuilder,
    front: &mut Front,
    siblings: &mut Vec<Front>,
    policy: &dyn Policy,
    rule: &RulePolicy,
    rng: &mut ChaCha8Rng,
    trace: &mut MeshTrace,
) -> Result<(), EngineError> {
    use crate::policy::Policy as _;

    let candidates = front.candidates_by_angle();
    let mut rejected: Vec<[f64; 29]> = Vec::new();
    let mut failures = 0usize;
    let mut forced_done = false;

    // Pass 1: policy-accepted candidates in angle order. Pass 2 (after
    // enough geometric failures, or total rejection): rule actions in angle
    // order regardless of acceptance; six-edge fronts instead search all
    // seals so the endgame closes with two decent quads.
    for pass in 0..2 {
        if pass == 1 && front.edge_count() == 6 {
            if let Some((node, state, action)) =
                best_endgame_seal(builder, front, siblings, trace)?
            {
                trace.stats.quads_by_type[(action.kind.type_id() - 1) as usize] += 1;
                trace.stats.forced_selections += 1;
                trace.steps.push(StepRecord {
                    rejected,
                    accepted: Some(AcceptedRecord {
                        features: state.features(),
                        action,
                    }),
                    event: StepEvent::Quad,
                });
                let _ = node;
                return Ok(());
            }
        }
        for &(_, node) in &candidates {
            let state = front.extract_state(builder, node);
            let decision = if pass == 0 {
                policy.decide(&state, rng)
            } else {
                rule.decide(&state, rng)
            };
            if pass == 0 && !decision.accept {
                if rejected.len() < MAX_REJECTED_PER_STEP {
                    rejected.push(state.features());
                }
                continue;
            }
            if pass == 1 && !forced_done {
                trace.stats.forced_selections += 1;
                forced_done = true;
            }
            match attempt_action(builder, front, siblings, node, &state, &decision.action, trace)?
            {
                AttemptResult::Applied(kind, action) => {
                    trace.stats.quads_by_type[(kind.type_id() - 1) as usize] += 1;
                    trace.steps.push(StepRecord {
                        rejected,
                        accepted: Some(AcceptedRecord {
                            features: state.features(),
                            action,
                        }),
                        event: StepEvent::Quad,
                    });
                    return Ok(());
                }
                AttemptResult::Partitioned => {
                    trace.stats.partitions += 1;
                    trace.steps.push(StepRecord {
                        rejected,
                        accepted: None,
                        event: StepEvent::Partition,
                    });
                    return Ok(());
                }
                AttemptResult::Merged => {
                    trace.stats.merges += 1;
                    trace.steps.push(StepRecord {
                        rejected,
                        accepted: None,
                        event: StepEvent::Merge,
                    });
                    return Ok(());
                }
                AttemptResult::Failed => {
                    failures += 1;
                    if pass == 0 && failures >= FAILURES_BEFORE_FALLBACK {
                        break;
                    }
                }
            }
        }
        if pass == 0 {
            continue;
        }
    }
    Err(EngineError::PolicyFailure)
}

enum AttemptResult {
    Applied(UpdateKind, UpdateAction),
    Partitioned,
    Merged,
    Failed,
}

/// On a six-edge front, rank every vertex/side seal by the worse of the two
/// quads it implies (the seal cell and the terminal remainder) and apply the
/// best that validates.
fn best_endgame_seal(
    builder: &mut MeshBuilder,
    front: &mut Front,
    siblings: &mut Vec<Front>,
    trace: &mut MeshTrace,
) -> Result<Option<(NodeId, LocalState, UpdateAction)>, EngineError> {
    debug_assert_eq!(front.edge_count(), 6);
    let ids = front.node_ids();
    let mut ranked: Vec<(f64, NodeId, UpdateKind)> = Vec::new();
    for &n in &ids {
        let pts: Vec<Point2> = {
            // Loop positions starting at n.
            let mut order = Vec::with_capacity(6);
            let mut c = n;
            for _ in 0..6 {
                order.push(builder.pos(front.vertex(c)));
                c = front.next(c);
            }
            order
        };
        // Seal left consumes prev(n): quad (l2, l1, p0, r1) = indices
        // (4, 5, 0, 1) in the walk order; the remainder is (1, 2, 3, 4).
        let score = |quad: [Point2; 4], rest: [Point2; 4]| {
            let a = corner_jacobians(&quad)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let b = corner_jacobians(&rest)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            a.min(b)
        };
        let left = score(
            [pts[4], pts[5], pts[0], pts[1]],
            [pts[1], pts[2], pts[3], pts[4]],
        );
        let right = score(
            [pts[5], pts[0], pts[1], pts[2]],
            [pts[2], pts[3], pts[4], pts[5]],
        );
        ranked.push((left, n, UpdateKind::SealLeft));
        ranked.push((right, n, UpdateKind::SealRight));
    }
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let _ = trace;
    for (quality, node, kind) in ranked {
        if quality <= crate::front::MIN_CORNER_JACOBIAN {
            break;
        }
        // Pure seals only here; anything needing a partition or merge is
        // left to the generic ladder.
        let (ca, cb, _) = seal_chord(front, builder, node, kind);
        if front.segment_hits_front(builder, ca, cb)
            || siblings
                .iter()
                .any(|s| s.segment_hits_front(builder, ca, cb))
        {
            continue;
        }
        let state = front.extract_state(builder, node);
        let action = UpdateAction {
            kind,
            new1: None,
            new2: None,
        };
        if front.apply_update(builder, node, &action, true).is_ok() {
            return Ok(Some((node, state, action)));
        }
    }
    Ok(None)
}

/// Try one action at one vertex: cross-front validation, apply with radius
/// shrink retries, partition on blocked seals, merge on cross-front
/// contact.
fn attempt_action(
    builder: &mut MeshBuilder,
    front: &mut Front,
    siblings: &mut Vec<Front>,
    node: NodeId,
    state: &LocalState,
    action: &UpdateAction,
    _trace: &mut MeshTrace,
) -> Result<AttemptResult, EngineError> {
    if !action.is_well_formed() {
        return Ok(AttemptResult::Failed);
    }

    match action.kind {
        UpdateKind::SealLeft | UpdateKind::SealRight => {
            if front.edge_count() < 6 {
                return Ok(AttemptResult::Failed);
            }
            // Chord endpoints in domain coordinates.
            let (a, b, alt) = seal_chord(front, builder, node, action.kind);
            // Contact with a sibling front merges the loops instead.
            if let Some(si) = siblings
                .iter()
                .position(|s| s.segment_hits_front(builder, a, b))
            {
                let other = siblings.remove(si);
                return match try_merge(builder, front, other, siblings, node) {
                    Some(merged) => {
                        *front = merged;
                        Ok(AttemptResult::Merged)
                    }
                    None => Ok(AttemptResult::Failed),
                };
            }
            match front.apply_update(builder, node, action, true) {
                Ok(applied) => {
                    debug_assert_eq!(applied.kind, action.kind);
                    Ok(AttemptResult::Applied(action.kind, *action))
                }
                Err(FrontError::NeedsPartition) => {
                    match try_partition(builder, front, node, alt, (a, b)) {
                        Some((f1, f2)) => {
                            siblings.push(f2);
                            *front = f1;
                            Ok(AttemptResult::Partitioned)
                        }
                        None => Ok(AttemptResult::Failed),
                    }
                }
                Err(_) => Ok(AttemptResult::Failed),
            }
        }
        UpdateKind::InsertOne | UpdateKind::InsertTwo => {
            let mut act = *action;
            for _ in 0..3 {
                match validate_inserts(builder, front, siblings, node, &act) {
                    InsertCheck::Ok => {}
                    InsertCheck::SiblingContact(si) => {
                        let other = siblings.remove(si);
                        return match try_merge(builder, front, other, siblings, node) {
                            Some(merged) => {
                                *front = merged;
                                Ok(AttemptResult::Merged)
                            }
                            None => Ok(AttemptResult::Failed),
                        };
                    }
                    InsertCheck::Bad => {
                        act = shrink_action(&act);
                        continue;
                    }
                }
                match front.apply_update(builder, node, &act, own_loop_is_ccw(front, builder)) {
                    Ok(_) => return Ok(AttemptResult::Applied(act.kind, act)),
                    Err(FrontError::Geometry) => {
                        act = shrink_action(&act);
                    }
                    Err(_) => return Ok(AttemptResult::Failed),
                }
            }
            Ok(AttemptResult::Failed)
        }
    }
    .map(|r| {
        let _ = state;
        r
    })
}

fn own_loop_is_ccw(front: &Front, builder: &MeshBuilder) -> bool {
    front.area(builder) > 0.0
}

fn shrink_action(action: &UpdateAction) -> UpdateAction {
    let shrink = |p: Option<PolarPlacement>| {
        p.map(|q| PolarPlacement {
            theta: q.theta,
            rho: q.rho * SHRINK,
        })
    };
    UpdateAction {
        kind: action.kind,
        new1: shrink(action.new1),
        new2: shrink(action.new2),
    }
}

/// Chord endpoints and the alternative partition anchor for a seal at
/// `node`.
fn seal_chord(
    front: &Front,
    builder: &MeshBuilder,
    node: NodeId,
    kind: UpdateKind,
) -> (Point2, Point2, NodeId) {
    match kind {
        UpdateKind::SealLeft => {
            let r1 = front.next(node);
            let l1 = front.prev(node);
            let l2 = front.prev(l1);
            (
                builder.pos(front.vertex(r1)),
                builder.pos(front.vertex(l2)),
                l1,
            )
        }
        UpdateKind::SealRight => {
            let l1 = front.prev(node);
            let r1 = front.next(node);
            let r2 = front.next(r1);
            (
                builder.pos(front.vertex(l1)),
                builder.pos(front.vertex(r2)),
                r1,
            )
        }
        _ => unreachable!("seal chord queried for an insert action"),
    }
}

enum InsertCheck {
    Ok,
    Bad,
    SiblingContact(usize),
}

fn validate_inserts(
    builder: &MeshBuilder,
    front: &Front,
    siblings: &[Front],
    node: NodeId,
    action: &UpdateAction,
) -> InsertCheck {
    let mut pts: Vec<Point2> = Vec::with_capacity(2);
    if let Some(p) = action.new1 {
        pts.push(front.placement_point(builder, node, p));
    }
    if let Some(p) = action.new2 {
        pts.push(front.placement_point(builder, node, p));
    }
    let p0 = builder.pos(front.vertex(node));
    let pr = builder.pos(front.vertex(front.next(node)));
    let pl = builder.pos(front.vertex(front.prev(node)));

    for (i, &v) in pts.iter().enumerate() {
        // New edges crossing a sibling front name the merge partner
        // directly, so test them first.
        let anchors: &[Point2] = match (action.kind, i) {
            (UpdateKind::InsertOne, _) => &[pr, pl],
            (UpdateKind::InsertTwo, 0) => &[p0],
            (UpdateKind::InsertTwo, _) => &[pr],
            _ => &[],
        };
        for &a in anchors {
            if let Some(si) = siblings
                .iter()
                .position(|s| s.segment_hits_front(builder, a, v))
            {
                return InsertCheck::SiblingContact(si);
            }
        }
        // Region membership: total winding over all active fronts is one.
        let mut w = winding_number(&front.loop_points(builder), v);
        for s in siblings {
            w += winding_number(&s.loop_points(builder), v);
        }
        if w != 1 {
            // A nearby sibling is the likely cause; merging resolves it.
            let reach = 3.0 * p0.dist(v);
            let mut best: Option<(f64, usize)> = None;
            for (si, s) in siblings.iter().enumerate() {
                let pts_s = s.loop_points(builder);
                let mut d = f64::INFINITY;
                for k in 0..pts_s.len() {
                    d = d.min(crate::geom::dist_point_segment(
                        v,
                        pts_s[k],
                        pts_s[(k + 1) % pts_s.len()],
                    ));
                }
                if d <= reach && best.map(|(bd, _)| d < bd).unwrap_or(true) {
                    best = Some((d, si));
                }
            }
            if let Some((_, si)) = best {
                return InsertCheck::SiblingContact(si);
            }
            return InsertCheck::Bad;
        }
    }
    if pts.len() == 2 {
        for si in 0..siblings.len() {
            if siblings[si].segment_hits_front(builder, pts[0], pts[1]) {
                return InsertCheck::SiblingContact(si);
            }
        }
    }
    InsertCheck::Ok
}

/// Partition the front after a blocked seal, trying candidate vertices in
/// the distance order and both anchors.
fn try_partition(
    builder: &mut MeshBuilder,
    front: &Front,
    node: NodeId,
    alt: NodeId,
    chord: (Point2, Point2),
) -> Option<(Front, Front)> {
    let p0 = builder.pos(front.vertex(node));
    let p_alt = builder.pos(front.vertex(alt));
    let exclude = [node, alt, front.next(node), front.prev(node)];
    let candidates = front.partition_candidates(builder, chord, (p0, p_alt), &exclude);
    for pj in candidates {
        if let Ok(pair) = front.partition(builder, node, alt, pj) {
            return Some(pair);
        }
    }
    None
}

/// Merge two fronts of the same domain through the best bridge quad near
/// the reference vertex.
fn try_merge(
    builder: &mut MeshBuilder,
    front: &Front,
    other: Front,
    siblings: &[Front],
    near: NodeId,
) -> Option<Front> {
    let anchor = builder.pos(front.vertex(near));
    // Inspect this front's edges from nearest to the trouble spot outwards.
    let mut edges: Vec<(f64, NodeId)> = front
        .node_ids()
        .into_iter()
        .map(|n| {
            let m = builder
                .pos(front.vertex(n))
                .mid(builder.pos(front.vertex(front.next(n))));
            (m.dist(anchor), n)
        })
        .collect();
    edges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));

    let other_ids = other.node_ids();
    for &(_, a) in edges.iter().take(24) {
        let na = front.next(a);
        let pa = builder.pos(front.vertex(a));
        let pna = builder.pos(front.vertex(na));
        let mid = pa.mid(pna);
        // Closest few opposite edges on the other loop.
        let mut opp: Vec<(f64, NodeId)> = other_ids
            .iter()
            .map(|&q| {
                let m = builder
                    .pos(other.vertex(q))
                    .mid(builder.pos(other.vertex(other.next(q))));
                (m.dist(mid), q)
            })
            .collect();
        opp.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        for &(_, q) in opp.iter().take(8) {
            let nq = other.next(q);
            let pq = builder.pos(other.vertex(q));
            let pnq = builder.pos(other.vertex(nq));
            let quad = [pa, pna, pq, pnq];
            if corner_jacobians(&quad)
                .into_iter()
                .any(|j| j <= crate::front::MIN_CORNER_JACOBIAN)
            {
                continue;
            }
            // Bridge edges must not cross anything.
            let bridge = [(pna, pq), (pnq, pa)];
            let clear = bridge.iter().all(|&(s, t)| {
                !front.segment_hits_front(builder, s, t)
                    && !other.segment_hits_front(builder, s, t)
                    && siblings
                        .iter()
                        .all(|s2| !s2.segment_hits_front(builder, s, t))
            });
            if !clear {
                continue;
            }
            let (merged, _applied) = front.clone().merge_with(builder, a, other, q);
            return Some(merged);
        }
    }
    None
}

/// Emit the final quad of a 4-edge front if it is valid.
fn close_terminal(builder: &mut MeshBuilder, front: &Front) -> Option<[u32; 4]> {
    let quad = front.terminal_quad(builder)?;
    let pts = [
        builder.pos(quad[0]),
        builder.pos(quad[1]),
        builder.pos(quad[2]),
        builder.pos(quad[3]),
    ];
    if corner_jacobians(&pts)
        .into_iter()
        .any(|j| j <= crate::front::MIN_CORNER_JACOBIAN)
    {
        return None;
    }
    builder.push_quad(quad);
    Some(quad)
}

/// A 4-edge front with a reflex corner cannot close into one quad; fan a
/// slice off the reflex vertex to make it a 6-edge front.
fn rescue_terminal(
    builder: &mut MeshBuilder,
    front: &mut Front,
    siblings: &[Front],
) -> Option<()> {
    let reflex = front
        .node_ids()
        .into_iter()
        .max_by(|&a, &b| front.angle(a).partial_cmp(&front.angle(b)).unwrap())?;
    if front.angle(reflex) <= 180.0 {
        return None;
    }
    let state = front.extract_state(builder, reflex);
    let six = state.six_segment_len();
    let h = 0.5 * (1.0 + state.p0.dist(state.left[0]));
    let mut action = UpdateAction::insert_two(
        PolarPlacement {
            theta: 1.0 / 3.0,
            rho: h / six,
        },
        PolarPlacement {
            theta: 1.0 / 6.0,
            rho: 1.4 * h / six,
        },
    );
    for _ in 0..4 {
        let ok = matches!(
            validate_inserts(builder, front, siblings, reflex, &action),
            InsertCheck::Ok
        );
        if ok
            && front
                .apply_update(builder, reflex, &action, own_loop_is_ccw(front, builder))
                .is_ok()
        {
            return Some(());
        }
        action = shrink_action(&action);
    }
    None
}

/// Counts per boundary-layer template, plus elements left unsplit because
/// their boundary contact matches no template.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerStats {
    pub split_edge: usize,
    pub split_vertex: usize,
    pub split_corner: usize,
    pub mismatched: usize,
    pub untouched: usize,
}

/// Options for boundary-layer insertion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerOptions {
    pub n_layers: usize,
    /// Thickness fraction of the local element height.
    pub fraction: f64,
    /// Corner elements split into four (no new irregular vertex) rather
    /// than three.
    pub prefer_no_ep: bool,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            n_layers: 1,
            fraction: 0.25,
            prefer_no_ep: true,
        }
    }
}

/// Split every element touching the target boundary according to the four
/// templates: one boundary edge -> 2 elements, one boundary vertex -> 3,
/// two adjacent boundary edges -> 3 (corner vertex variant) or 4 (two new
/// boundary vertices, no new irregular vertex). Repeats per layer.
pub fn add_boundary_layers(
    mesh: &QuadMesh,
    target_loops: &[Vec<Point2>],
    opts: &LayerOptions,
) -> (QuadMesh, LayerStats) {
    let mut current = mesh.clone();
    let mut stats = LayerStats::default();
    for _ in 0..opts.n_layers {
        let (next, s) = add_one_layer(&current, target_loops, opts);
        stats.split_edge += s.split_edge;
        stats.split_vertex += s.split_vertex;
        stats.split_corner += s.split_corner;
        stats.mismatched += s.mismatched;
        stats.untouched = s.untouched;
        current = next;
    }
    (current, stats)
}

fn on_target(p: Point2, target_loops: &[Vec<Point2>], eps: f64) -> bool {
    for lp in target_loops {
        for i in 0..lp.len() {
            if dist_point_segment(p, lp[i], lp[(i + 1) % lp.len()]) <= eps {
                return true;
            }
        }
    }
    false
}

fn add_one_layer(
    mesh: &QuadMesh,
    target_loops: &[Vec<Point2>],
    opts: &LayerOptions,
) -> (QuadMesh, LayerStats) {
    let bb = Aabb::of_points(mesh.vertices.iter()).expect("non-empty mesh");
    let eps = 1e-9 * bb.diagonal().max(1e-12);
    let f = opts.fraction;

    let incidence = mesh.edge_incidence();
    let is_boundary_edge = |a: u32, b: u32| {
        let k = if a < b { (a, b) } else { (b, a) };
        incidence.get(&k).copied() == Some(1)
    };

    let v_on_target: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|&p| on_target(p, target_loops, eps))
        .collect();
    let edge_on_target = |a: u32, b: u32| {
        v_on_target[a as usize] && v_on_target[b as usize] && is_boundary_edge(a, b)
    };

    let mut verts = mesh.vertices.clone();
    let mut flags = mesh.on_boundary.clone();
    let mut quads: Vec<[u32; 4]> = Vec::new();
    let mut stats = LayerStats::default();
    // Shared split points: (from, to) -> vertex id of lerp(from, to, f).
    // A point splitting a mesh-boundary edge is itself a boundary vertex.
    let mut split_cache: BTreeMap<(u32, u32), u32> = BTreeMap::new();

    let mut split_point = |from: u32,
                           to: u32,
                           verts: &mut Vec<Point2>,
                           flags: &mut Vec<bool>|
     -> u32 {
        *split_cache.entry((from, to)).or_insert_with(|| {
            let p = verts[from as usize].lerp(verts[to as usize], f);
            let k = if from < to { (from, to) } else { (to, from) };
            verts.push(p);
            flags.push(incidence.get(&k).copied() == Some(1));
            (verts.len() - 1) as u32
        })
    };

    for q in &mesh.quads {
        let mut target_edges: Vec<usize> = Vec::new();
        for i in 0..4 {
            if edge_on_target(q[i], q[(i + 1) % 4]) {
                target_edges.push(i);
            }
        }
        let target_verts: Vec<usize> = (0..4)
            .filter(|&i| v_on_target[q[i] as usize])
            .collect();

        match (target_edges.len(), target_verts.len()) {
            (0, 0) => {
                quads.push(*q);
                stats.untouched += 1;
            }
            (0, 1) => {
                // One vertex on the boundary: three elements, centre vertex
                // has three cells.
                let r = target_verts[0];
                let (c, b2, o, b1) = (q[r], q[(r + 1) % 4], q[(r + 2) % 4], q[(r + 3) % 4]);
                let m1 = split_point(c, b2, &mut verts, &mut flags);
                let m2 = split_point(c, b1, &mut verts, &mut flags);
                let qc = bilinear_point(&mut verts, &mut flags, c, b2, o, b1, f);
                quads.push([c, m1, qc, m2]);
                quads.push([m1, b2, o, qc]);
                quads.push([m2, qc, o, b1]);
                stats.split_vertex += 1;
            }
            (1, _) => {
                let r = target_edges[0];
                let (b0, b1v, t1, t0) = (q[r], q[(r + 1) % 4], q[(r + 2) % 4], q[(r + 3) % 4]);
                let m1 = split_point(b1v, t1, &mut verts, &mut flags);
                let m0 = split_point(b0, t0, &mut verts, &mut flags);
                quads.push([b0, b1v, m1, m0]);
                quads.push([m0, m1, t1, t0]);
                stats.split_edge += 1;
            }
            (2, _) if adjacent(&target_edges) => {
                // Corner element: edges (r, r+1) meet at corner q[r+1].
                let r = corner_rotation(&target_edges);
                let (b1v, c, b2, o) = (q[r], q[(r + 1) % 4], q[(r + 2) % 4], q[(r + 3) % 4]);
                let a = split_point(b2, o, &mut verts, &mut flags);
                let bb = split_point(b1v, o, &mut verts, &mut flags);
                let qc = bilinear_point(&mut verts, &mut flags, c, b2, o, b1v, f);
                if opts.prefer_no_ep {
                    let m1 = split_point(c, b2, &mut verts, &mut flags);
                    let m2 = split_point(c, b1v, &mut verts, &mut flags);
                    quads.push([c, m1, qc, m2]);
                    quads.push([m1, b2, a, qc]);
                    quads.push([qc, a, o, bb]);
                    quads.push([m2, qc, bb, b1v]);
                } else {
                    quads.push([c, b2, a, qc]);
                    quads.push([qc, a, o, bb]);
                    quads.push([c, qc, bb, b1v]);
                }
                stats.split_corner += 1;
            }
            _ => {
                quads.push(*q);
                stats.mismatched += 1;
            }
        }
    }

    (
        QuadMesh {
            vertices: verts,
            quads,
            on_boundary: flags,
            provenance: mesh.provenance.clone(),
        },
        stats,
    )
}

fn adjacent(edges: &[usize]) -> bool {
    debug_assert_eq!(edges.len(), 2);
    (edges[0] + 1) % 4 == edges[1] || (edges[1] + 1) % 4 == edges[0]
}

/// Rotation bringing the two adjacent target edges to positions (0, 1), so
/// the corner vertex lands at index 1.
fn corner_rotation(edges: &[usize]) -> usize {
    if (edges[0] + 1) % 4 == edges[1] {
        edges[0]
    } else {
        edges[1]
    }
}

#[allow(clippy::too_many_arguments)]
fn bilinear_point(
    verts: &mut Vec<Point2>,
    flags: &mut Vec<bool>,
    c: u32,
    b2: u32,
    o: u32,
    b1: u32,
    f: f64,
) -> u32 {
    let pc = verts[c as usize];
    let pb2 = verts[b2 as usize];
    let po = verts[o as usize];
    let pb1 = verts[b1 as usize];
    let one = 1.0 - f;
    let p = Point2::new(
        one * one * pc.x + f * one * pb2.x + f * f * po.x + one * f * pb1.x,
        one * one * pc.y + f * one * pb2.y + f * f * po.y + one * f * pb1.y,
    );
    verts.push(p);
    flags.push(false);
    (verts.len() - 1) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::RulePolicy;
    use crate::reward::{quality_report, scaled_jacobian};
    use crate::seeding::{Boundary, SeededBoundary};
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn seeded_square(per_side: usize) -> SeededBoundary {
        // Uniform corner curvature on the raw square makes the spacing
        // exactly s_a, so each side carries `per_side` intervals.
        let pts = vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        let seeded =
            SeededBoundary::seed(Boundary::single(pts), 1.0 / per_side as f64).unwrap();
        assert_eq!(seeded.loop_points()[0].len(), 4 * per_side);
        seeded
    }

    #[test]
    fn four_seed_square_gives_one_quad() {
        let seeded = seeded_square(1);
        let mesh = mesh_domain(&seeded, &RulePolicy::new(), &MeshRunConfig::default()).unwrap();
        assert_eq!(mesh.quads.len(), 1);
        assert!(mesh.is_conforming());
    }

    #[test]
    fn sixteen_seed_square_rule_mesh() {
        let seeded = seeded_square(4);
        let (mesh, trace) = mesh_domain_traced(
            &seeded,
            &RulePolicy::new(),
            &MeshRunConfig::default(),
            &mut |_, _| {},
        )
        .unwrap();
        assert!(mesh.is_conforming());
        assert!(
            (12..=20).contains(&mesh.quads.len()),
            "quad count {}",
            mesh.quads.len()
        );
        for qi in 0..mesh.quads.len() {
            assert!(scaled_jacobian(&mesh.quad_points(qi)) > 0.0);
        }
        // Watertight: boundary edges reproduce the seeds exactly.
        let seeds = seeded.loop_points().remove(0);
        for (a, b) in mesh.boundary_edges() {
            let pa = mesh.vertices[a as usize];
            let pb = mesh.vertices[b as usize];
            assert!(seeds.contains(&pa) && seeds.contains(&pb));
        }
        // Mesh area accounts for the whole unit square.
        let total: f64 = (0..mesh.quads.len())
            .map(|qi| {
                let q = mesh.quad_points(qi);
                crate::geom::polygon_area(&[q[0], q[1], q[2], q[3]])
            })
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        assert!(trace.stats.steps >= mesh.quads.len());
    }

    #[test]
    fn determinism_same_seed_same_mesh() {
        let seeded = seeded_square(5);
        let cfg = MeshRunConfig {
            seed: 42,
            ..Default::default()
        };
        let m1 = mesh_domain(&seeded, &RulePolicy::new(), &cfg).unwrap();
        let m2 = mesh_domain(&seeded, &RulePolicy::new(), &cfg).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn annulus_meshes_through_merge() {
        // Outer square (counter-clockwise) with a clockwise square hole.
        let outer: Vec<Point2> = vec![p(0.0, 0.0), p(4.0, 0.0), p(4.0, 4.0), p(0.0, 4.0)];
        let hole: Vec<Point2> = vec![p(1.5, 1.5), p(1.5, 2.5), p(2.5, 2.5), p(2.5, 1.5)];
        let boundary = Boundary {
            loops: vec![
                crate::seeding::InputLoop {
                    points: outer,
                    tags: vec![],
                },
                crate::seeding::InputLoop {
                    points: hole,
                    tags: vec![],
                },
            ],
        };
        let seeded = SeededBoundary::seed(boundary, 0.4).unwrap();
        let (mesh, trace) = mesh_domain_traced(
            &seeded,
            &RulePolicy::new(),
            &MeshRunConfig::default(),
            &mut |_, _| {},
        )
        .unwrap();
        assert!(mesh.is_conforming());
        assert!(trace.stats.merges >= 1, "hole must merge into the outer front");
        // Area of the annulus: 16 - 1.
        let total: f64 = (0..mesh.quads.len())
            .map(|qi| {
                let q = mesh.quad_points(qi);
                crate::geom::polygon_area(&[q[0], q[1], q[2], q[3]])
            })
            .sum();
        assert_relative_eq!(total, 15.0, epsilon = 1e-6);
    }

    #[test]
    fn termination_accounting_identity() {
        let seeded = seeded_square(6);
        let mut checks = 0usize;
        let stats_cell = core::cell::RefCell::new(EngineStats::default());
        let (mesh, trace) = {
            let mut observe = |builder: &MeshBuilder, fronts: &[Front]| {
                let stats = stats_cell.borrow();
                let _ = &stats;
                let live: usize = fronts.iter().map(|f| f.edge_count()).sum();
                let _ = builder;
                let _ = live;
                checks += 1;
            };
            mesh_domain_traced(
                &seeded,
                &RulePolicy::new(),
                &MeshRunConfig::default(),
                &mut observe,
            )
            .unwrap()
        };
        // Final identity: every edge was consumed.
        let s = &trace.stats;
        let seals = s.quads_by_type[1] + s.quads_by_type[2];
        let closing = s.initial_edges as i64 - 2 * seals as i64 + 2 * s.quads_by_type[3] as i64
            + 2 * s.partitions as i64
            - 4 * s.terminal_quads as i64;
        assert_eq!(closing, 0, "edge bookkeeping must close to zero");
        assert!(mesh.is_conforming());
        assert!(checks > 0);
    }

    fn unit_quad_mesh() -> QuadMesh {
        let mut b = MeshBuilder::new();
        let ids: Vec<u32> = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]
            .iter()
            .map(|&q| b.add_vertex(q, true))
            .collect();
        b.push_quad([ids[0], ids[1], ids[2], ids[3]]);
        b.finish(Provenance::default())
    }

    #[test]
    fn layer_template_single_edge_splits_in_two() {
        let mesh = unit_quad_mesh();
        let target = vec![vec![p(0.0, 0.0), p(1.0, 0.0)]];
        let (out, stats) = add_boundary_layers(&mesh, &target, &LayerOptions::default());
        assert_eq!(stats.split_edge, 1);
        assert_eq!(out.quads.len(), 2);
        assert!(out.is_conforming());
    }

    #[test]
    fn layer_template_vertex_splits_in_three() {
        let mesh = unit_quad_mesh();
        // Only the origin vertex touches the target.
        let target = vec![vec![p(0.0, 0.0), p(-1.0, 0.0), p(-1.0, -1.0), p(0.0, -1.0)]];
        let (out, stats) = add_boundary_layers(&mesh, &target, &LayerOptions::default());
        assert_eq!(stats.split_vertex, 1);
        assert_eq!(out.quads.len(), 3);
        assert!(out.is_conforming());
        // The centre vertex is a new valence-3 interior vertex.
        let rep = quality_report(&out);
        assert_eq!(rep.n_ep, 1);
    }

    #[test]
    fn layer_template_corner_variants() {
        let mesh = unit_quad_mesh();
        let target = vec![vec![p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0)]];
        let (out4, s4) = add_boundary_layers(&mesh, &target, &LayerOptions::default());
        assert_eq!(s4.split_corner, 1);
        assert_eq!(out4.quads.len(), 4);
        assert!(out4.is_conforming());
        assert_eq!(quality_report(&out4).n_ep, 0, "no new irregular vertex");
        let (out3, s3) = add_boundary_layers(
            &mesh,
            &target,
            &LayerOptions {
                prefer_no_ep: false,
                ..Default::default()
            },
        );
        assert_eq!(s3.split_corner, 1);
        assert_eq!(out3.quads.len(), 3);
        assert!(out3.is_conforming());
        assert_eq!(quality_report(&out3).n_ep, 1, "corner variant adds one");
    }

    #[test]
    fn layers_increase_worst_aspect() {
        let seeded = seeded_square(4);
        let mesh = mesh_domain(&seeded, &RulePolicy::new(), &MeshRunConfig::default()).unwrap();
        let before = quality_report(&mesh).aspect_worst;
        let target = vec![seeded.loop_points().remove(0)];
        let (layered, _) = add_boundary_layers(
            &mesh,
            &target,
            &LayerOptions {
                n_layers: 2,
                ..Default::default()
            },
        );
        assert!(layered.is_conforming());
        let after = quality_report(&layered).aspect_worst;
        assert!(after > before, "aspect {before} -> {after}");
    }
}
