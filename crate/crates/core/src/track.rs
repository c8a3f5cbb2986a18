//! Closed-track geometry, obstacle field, and the state-dependent costs.
//!
//! The centerline is an ordered, G1-continuous loop of straights and circular
//! arcs. Queries project a point to the nearest centerline point, returning
//! arc-length progress `s`, signed lateral deviation `e` (positive left of
//! travel), and signed boundary distance `d = half_width - |e|` (positive
//! inside the track).

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::rng::{StreamDomain, Streams};

#[derive(Debug, thiserror::Error)]
pub enum TrackError {
    #[error("track must contain at least one segment")]
    Empty,
    #[error("half_width must be > 0, got {0}")]
    BadHalfWidth(f64),
    #[error("segment {index}: {reason}")]
    BadSegment { index: usize, reason: String },
    #[error("centerline is not closed: position gap {position_gap:.3e} m, heading gap {heading_gap:.3e} rad")]
    NotClosed { position_gap: f64, heading_gap: f64 },
    #[error("obstacle {index} has non-positive radius {radius}")]
    BadObstacle { index: usize, radius: f64 },
    #[error("could not place {requested} obstacles after {attempts} attempts; relax spacing or count")]
    PlacementFailed { requested: usize, attempts: usize },
    #[error("track config supplies both an explicit obstacle list and a placement block; choose one")]
    ConflictingObstacles,
}

/// Circular obstacle on the track plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Result of projecting a point onto the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arc-length progress from the start line, in `[0, total_length)`.
    pub s: f64,
    /// Signed lateral deviation (m), positive left of the travel direction.
    pub e: f64,
    /// Index of the winning segment (lowest index wins ties).
    pub segment: usize,
}

/// Projection plus the signed boundary distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackProbe {
    pub s: f64,
    pub e: f64,
    /// `half_width - |e|`: positive inside the track, negative outside.
    pub d: f64,
    pub segment: usize,
}

/// Running- and terminal-cost weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { c1: 2.0, c2: 1.0, c3: 0.1, c4: 0.6, c5: 2.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
        ] {
            if !(v >= 0.0) {
                return Err(format!("cost weight {name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Smooth step penalizing proximity to the boundary: `max{0, atan(-100 d)/pi + 1/2}`.
#[inline]
pub fn boundary_cost(d: f64) -> f64 {
    ((-100.0 * d).atan() / std::f64::consts::PI + 0.5).max(0.0)
}

/// Terminal cost on progress gained over the horizon: `max{0, c4 - c5 * progress}`.
#[inline]
pub fn terminal_cost(progress: f64, w: &CostWeights) -> f64 {
    (w.c4 - w.c5 * progress).max(0.0)
}

#[derive(Clone, Debug)]
enum SegmentKind {
    Straight {
        start: [f64; 2],
        dir: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        theta0: f64,
        /// Signed sweep: positive = left/counterclockwise.
        sweep: f64,
        /// Unit radial vectors at travel start and end.
        r0: [f64; 2],
        r1: [f64; 2],
    },
}

#[derive(Clone, Debug)]
struct Segment {
    kind: SegmentKind,
    length: f64,
    s_offset: f64,
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}


enum Nearest {
    StraightAt(f64),
    ArcInterior,
    ArcEnd { at_end: bool },
}

impl Segment {
    /// Squared distance from `p` to the nearest point of this segment, plus
    /// enough information to recover `(s, e)` for the winner only.
    fn nearest(&self, p: [f64; 2]) -> (f64, Nearest) {
        match &self.kind {
            SegmentKind::Straight { start, dir } => {
                let rel = sub(p, *start);
                let t = dot(rel, *dir).clamp(0.0, self.length);
                let q = [start[0] + t * dir[0], start[1] + t * dir[1]];
                let dv = sub(p, q);
                (dot(dv, dv), Nearest::StraightAt(t))
            }
            SegmentKind::Arc { center, radius, sweep, r0, r1, .. } => {
                let d = sub(p, *center);
                let (ccw_start, ccw_end) = if *sweep > 0.0 { (*r0, *r1) } else { (*r1, *r0) };
                let extent = sweep.abs();
                let inside = if extent <= std::f64::consts::PI {
                    cross(ccw_start, d) >= 0.0 && cross(d, ccw_end) >= 0.0
                } else {
                    // Complement wedge (the gap) is < pi; inside = not in gap.
                    !(cross(ccw_end, d) > 0.0 && cross(d, ccw_start) > 0.0)
                };
                if inside {
                    let rho = dot(d, d).sqrt();
                    let gap = rho - radius;
                    (gap * gap, Nearest::ArcInterior)
                } else {
                    let p0 = [center[0] + radius * r0[0], center[1] + radius * r0[1]];
                    let p1 = [center[0] + radius * r1[0], center[1] + radius * r1[1]];
                    let d0 = sub(p, p0);
                    let d1 = sub(p, p1);
                    let (q0, q1) = (dot(d0, d0), dot(d1, d1));
                    if q1 < q0 {
                        (q1, Nearest::ArcEnd { at_end: true })
                    } else {
                        (q0, Nearest::ArcEnd { at_end: false })
                    }
                }
            }
        }
    }

    /// Full `(s_local, e)` for the winning candidate.
    fn resolve(&self, p: [f64; 2], nearest: &Nearest) -> (f64, f64) {
        match (&self.kind, nearest) {
            (SegmentKind::Straight { start, dir }, Nearest::StraightAt(t)) => {
                let q = [start[0] + t * dir[0], start[1] + t * dir[1]];
                (*t, cross(*dir, sub(p, q)))
            }
            (SegmentKind::Arc { center, radius, theta0, sweep, .. }, Nearest::ArcInterior) => {
                let d = sub(p, *center);
                let rho = dot(d, d).sqrt();
                let phi = d[1].atan2(d[0]);
                // theta0 is wrapped at build time, so the difference lies in
                // (-tau, tau) and a single shift lands in [0, tau).
                let rel = if *sweep > 0.0 { phi - theta0 } else { theta0 - phi };
                let t_ang = (if rel < 0.0 { rel + std::f64::consts::TAU } else { rel })
                    .min(sweep.abs());
                let e = if *sweep > 0.0 { radius - rho } else { rho - radius };
                (radius * t_ang, e)
            }
            (SegmentKind::Arc { center, radius, theta0, sweep, r0, r1 }, Nearest::ArcEnd { at_end }) => {
                let (radial, s_local, phi) = if *at_end {
                    (*r1, self.length, theta0 + sweep)
                } else {
                    (*r0, 0.0, *theta0)
                };
                let endpoint = [center[0] + radius * radial[0], center[1] + radius * radial[1]];
                let tangent = arc_tangent(phi, *sweep);
                (s_local, cross(tangent, sub(p, endpoint)))
            }
            _ => unreachable!("nearest candidate kind matches segment kind"),
        }
    }

    fn frame_at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        match &self.kind {
            SegmentKind::Straight { start, dir } => {
                ([start[0] + t * dir[0], start[1] + t * dir[1]], *dir)
            }
            SegmentKind::Arc { center, radius, theta0, sweep, .. } => {
                let phi = theta0 + sweep.signum() * t / radius;
                let (sin_phi, cos_phi) = phi.sin_cos();
                let point = [center[0] + radius * cos_phi, center[1] + radius * sin_phi];
                (point, arc_tangent(phi, *sweep))
            }
        }
    }
}

#[inline]
fn arc_tangent(phi: f64, sweep: f64) -> [f64; 2] {
    let (sin_phi, cos_phi) = phi.sin_cos();
    if sweep > 0.0 {
        [-sin_phi, cos_phi]
    } else {
        [sin_phi, -cos_phi]
    }
}

/// Spatial acceleration structure: for each grid cell, the segments that can
/// be nearest to some point of the cell and the obstacles that can contain
/// one. Query results are identical to a full scan (candidate sets provably
/// contain every possible winner); points outside the grid fall back to the
/// full scan.
#[derive(Clone, Debug)]
struct QueryGrid {
    min: [f64; 2],
    inv_cell: f64,
    nx: usize,
    ny: usize,
    seg_offsets: Vec<u32>,
    seg_data: Vec<u8>,
    obs_offsets: Vec<u32>,
    obs_data: Vec<u8>,
}

impl QueryGrid {
    const CELL: f64 = 0.05;

    /// Placeholder with no cells: every lookup falls back to the full scan.
    fn unbounded() -> Self {
        Self {
            min: [0.0; 2],
            inv_cell: 0.0,
            nx: 0,
            ny: 0,
            seg_offsets: vec![0],
            seg_data: Vec::new(),
            obs_offsets: vec![0],
            obs_data: Vec::new(),
        }
    }

    fn build(segments: &[Segment], obstacles: &[Obstacle], half_width: f64) -> Self {
        // Bounding box from the swept centerline plus obstacles and margin.
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for seg in segments {
            let steps = (seg.length / 0.02).ceil() as usize + 1;
            for i in 0..=steps {
                let t = seg.length * i as f64 / steps as f64;
                let (p, _) = seg.frame_at(t);
                for a in 0..2 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        for o in obstacles {
            lo[0] = lo[0].min(o.x - o.radius);
            lo[1] = lo[1].min(o.y - o.radius);
            hi[0] = hi[0].max(o.x + o.radius);
            hi[1] = hi[1].max(o.y + o.radius);
        }
        let margin = half_width + 0.5;
        let min = [lo[0] - margin, lo[1] - margin];
        let max = [hi[0] + margin, hi[1] + margin];
        let nx = ((max[0] - min[0]) / Self::CELL).ceil() as usize + 1;
        let ny = ((max[1] - min[1]) / Self::CELL).ceil() as usize + 1;
        // A query point anywhere in a cell is within half the diagonal of the
        // cell center; a segment can win only if its center distance is
        // within the minimum plus the full diagonal.
        let half_diag = Self::CELL * std::f64::consts::SQRT_2 / 2.0;

        let mut seg_offsets = Vec::with_capacity(nx * ny + 1);
        let mut seg_data = Vec::new();
        let mut obs_offsets = Vec::with_capacity(nx * ny + 1);
        let mut obs_data = Vec::new();
        seg_offsets.push(0u32);
        obs_offsets.push(0u32);
        let mut dists = vec![0.0f64; segments.len()];
        for j in 0..ny {
            for i in 0..nx {
                let center = [
                    min[0] + (i as f64 + 0.5) * Self::CELL,
                    min[1] + (j as f64 + 0.5) * Self::CELL,
                ];
                let mut best = f64::INFINITY;
                for (idx, seg) in segments.iter().enumerate() {
                    let (d2, _) = seg.nearest(center);
                    dists[idx] = d2.sqrt();
                    best = best.min(dists[idx]);
                }
                for (idx, d) in dists.iter().enumerate() {
                    if *d <= best + 2.0 * half_diag + 1e-9 {
                        seg_data.push(idx as u8);
                    }
                }
                seg_offsets.push(seg_data.len() as u32);
                for (idx, o) in obstacles.iter().enumerate() {
                    let dx = center[0] - o.x;
                    let dy = center[1] - o.y;
                    if (dx * dx + dy * dy).sqrt() < o.radius + half_diag + 1e-9 {
                        obs_data.push(idx as u8);
                    }
                }
                obs_offsets.push(obs_data.len() as u32);
            }
        }
        Self { min, inv_cell: 1.0 / Self::CELL, nx, ny, seg_offsets, seg_data, obs_offsets, obs_data }
    }

    #[inline]
    fn cell(&self, p: [f64; 2]) -> Option<usize> {
        let fx = (p[0] - self.min[0]) * self.inv_cell;
        let fy = (p[1] - self.min[1]) * self.inv_cell;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        Some(j * self.nx + i)
    }

    #[inline]
    fn segment_candidates(&self, cell: usize) -> &[u8] {
        &self.seg_data[self.seg_offsets[cell] as usize..self.seg_offsets[cell + 1] as usize]
    }

    #[inline]
    fn obstacle_candidates(&self, cell: usize) -> &[u8] {
        &self.obs_data[self.obs_offsets[cell] as usize..self.obs_offsets[cell + 1] as usize]
    }
}

/// Closed track: centerline loop, half-width, and obstacle field. Immutable
/// after construction; all queries are read-only.
#[derive(Clone, Debug)]
pub struct Track {
    segments: Vec<Segment>,
    half_width: f64,
    total_length: f64,
    obstacles: Vec<Obstacle>,
    grid: QueryGrid,
}

impl Track {
    pub fn build(config: &TrackConfig) -> Result<Self, TrackError> {
        if config.segments.is_empty() {
            return Err(TrackError::Empty);
        }
        if !(config.half_width > 0.0) {
            return Err(TrackError::BadHalfWidth(config.half_width));
        }

        let start_pos = [config.start_pose.x, config.start_pose.y];
        let mut pos = start_pos;
        let mut heading = config.start_pose.heading_deg.to_radians();
        let start_heading = heading;

        let mut segments = Vec::with_capacity(config.segments.len());
        let mut s_offset = 0.0;
        for (index, seg) in config.segments.iter().enumerate() {
            let (segment, next_pos, next_heading) = match seg {
                SegmentConfig::Straight { straight } => {
                    if !(*straight > 0.0) {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: format!("straight length must be > 0, got {straight}"),
                        });
                    }
                    let dir = [heading.cos(), heading.sin()];
                    let end = [pos[0] + straight * dir[0], pos[1] + straight * dir[1]];
                    (
                        Segment {
                            kind: SegmentKind::Straight { start: pos, dir },
                            length: *straight,
                            s_offset,
                        },
                        end,
                        heading,
                    )
                }
                SegmentConfig::Arc { arc } => {
                    if !(arc.radius > 0.0) {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: format!("arc radius must be > 0, got {}", arc.radius),
                        });
                    }
                    if !(arc.angle_deg > 0.0) {
                        return Err(TrackError::BadSegment {
                            index,
                            reason: format!("arc angle must be > 0 degrees, got {}", arc.angle_deg),
                        });
                    }
                    let delta = arc.angle_deg.to_radians();
                    let (center, theta0, sweep, end_heading) = match arc.direction {
                        ArcDirection::Left => {
                            let center = [pos[0] - heading.sin() * arc.radius, pos[1] + heading.cos() * arc.radius];
                            (center, heading - std::f64::consts::FRAC_PI_2, delta, heading + delta)
                        }
                        ArcDirection::Right => {
                            let center = [pos[0] + heading.sin() * arc.radius, pos[1] - heading.cos() * arc.radius];
                            (center, heading + std::f64::consts::FRAC_PI_2, -delta, heading - delta)
                        }
                    };
                    // Wrapped at build time so the interior resolve can use a
                    // single-shift angle difference.
                    let theta0 = crate::dynamics::wrap_angle(theta0);
                    let theta1 = theta0 + sweep;
                    let r0 = [theta0.cos(), theta0.sin()];
                    let r1 = [theta1.cos(), theta1.sin()];
                    let end = [center[0] + arc.radius * r1[0], center[1] + arc.radius * r1[1]];
                    (
                        Segment {
                            kind: SegmentKind::Arc {
                                center,
                                radius: arc.radius,
                                theta0,
                                sweep,
                                r0,
                                r1,
                            },
                            length: arc.radius * delta,
                            s_offset,
                        },
                        end,
                        end_heading,
                    )
                }
            };
            s_offset += segment.length;
            segments.push(segment);
            pos = next_pos;
            heading = next_heading;
        }

        let position_gap = sub(pos, start_pos);
        let position_gap = dot(position_gap, position_gap).sqrt();
        let heading_gap = crate::dynamics::wrap_angle(heading - start_heading).abs();
        if position_gap > 1e-9 || heading_gap > 1e-9 {
            return Err(TrackError::NotClosed { position_gap, heading_gap });
        }

        if segments.len() > u8::MAX as usize {
            return Err(TrackError::BadSegment {
                index: segments.len(),
                reason: "at most 255 segments are supported".into(),
            });
        }

        let mut track = Track {
            segments,
            half_width: config.half_width,
            total_length: s_offset,
            obstacles: Vec::new(),
            grid: QueryGrid::unbounded(),
        };

        match (&config.obstacles[..], &config.obstacle_placement) {
            ([], None) => {}
            (explicit, None) => {
                for (index, o) in explicit.iter().enumerate() {
                    if !(o.radius > 0.0) {
                        return Err(TrackError::BadObstacle { index, radius: o.radius });
                    }
                }
                track.obstacles = explicit.to_vec();
            }
            ([], Some(pc)) => {
                track.obstacles = track.place_obstacles(pc)?;
            }
            (_, Some(_)) => return Err(TrackError::ConflictingObstacles),
        }
        if track.obstacles.len() > u8::MAX as usize {
            return Err(TrackError::BadObstacle {
                index: track.obstacles.len(),
                radius: 0.0,
            });
        }
        track.grid = QueryGrid::build(&track.segments, &track.obstacles, track.half_width);
        Ok(track)
    }

    /// Seeded rejection sampling along the centerline. A minimum arc-length
    /// spacing between centers keeps obstacle chords from overlapping in `s`,
    /// which bounds the blocked lateral band per cross-section and preserves a
    /// passable corridor.
    fn place_obstacles(&self, pc: &PlacementConfig) -> Result<Vec<Obstacle>, TrackError> {
        if !(pc.radius > 0.0) {
            return Err(TrackError::BadObstacle { index: 0, radius: pc.radius });
        }
        let mut rng = Streams::new(pc.seed).stream(StreamDomain::ObstaclePlacement, 0, 0, 0);
        let mut placed: Vec<(f64, [f64; 2])> = Vec::with_capacity(pc.count);
        let mut attempts = 0usize;
        let max_attempts = 20_000;
        while placed.len() < pc.count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(TrackError::PlacementFailed { requested: pc.count, attempts });
            }
            let s = rng.uniform() * self.total_length;
            let e = rng.symmetric(pc.max_offset);
            if placed
                .iter()
                .any(|(ps, _)| wrap_distance(s, *ps, self.total_length) < pc.min_spacing)
            {
                continue;
            }
            let (point, tangent) = self.frame_at(s);
            let normal = [-tangent[1], tangent[0]];
            let center = [point[0] + e * normal[0], point[1] + e * normal[1]];
            if placed.iter().any(|(_, c)| {
                let dv = sub(center, *c);
                dot(dv, dv).sqrt() < 2.0 * pc.radius + 0.02
            }) {
                continue;
            }
            placed.push((s, center));
        }
        Ok(placed
            .into_iter()
            .map(|(_, c)| Obstacle { x: c[0], y: c[1], radius: pc.radius })
            .collect())
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    #[inline]
    fn scan_segments(&self, point: [f64; 2], indices: &[u8]) -> (usize, Nearest) {
        let mut best_dist = f64::INFINITY;
        let mut best_index = 0;
        let mut best_nearest = Nearest::StraightAt(0.0);
        for &index in indices {
            let (dist2, nearest) = self.segments[index as usize].nearest(point);
            if dist2 < best_dist {
                best_dist = dist2;
                best_index = index as usize;
                best_nearest = nearest;
            }
        }
        (best_index, best_nearest)
    }

    /// Nearest-centerline projection; ties break to the lowest segment index.
    pub fn project(&self, point: [f64; 2]) -> Projection {
        let (best_index, best_nearest) = match self.grid.cell(point) {
            Some(cell) => self.scan_segments(point, self.grid.segment_candidates(cell)),
            None => {
                let all: Vec<u8> = (0..self.segments.len() as u8).collect();
                self.scan_segments(point, &all)
            }
        };
        let segment = &self.segments[best_index];
        let (s_local, e) = segment.resolve(point, &best_nearest);
        let mut s = segment.s_offset + s_local;
        if s >= self.total_length {
            s -= self.total_length;
        }
        Projection { s, e, segment: best_index }
    }

    /// Average segment candidates per grid cell; diagnostics for tuning.
    pub fn grid_mean_candidates(&self) -> f64 {
        let cells = (self.grid.seg_offsets.len() - 1).max(1);
        self.grid.seg_data.len() as f64 / cells as f64
    }

    /// Projection plus signed boundary distance in one query.
    #[inline]
    pub fn probe(&self, point: [f64; 2]) -> TrackProbe {
        let p = self.project(point);
        TrackProbe { s: p.s, e: p.e, d: self.half_width - p.e.abs(), segment: p.segment }
    }

    /// Signed distance to the nearest track boundary (positive inside).
    pub fn boundary_distance(&self, point: [f64; 2]) -> f64 {
        self.probe(point).d
    }

    /// Number of obstacles strictly containing `point`.
    #[inline]
    pub fn obstacle_cost(&self, point: [f64; 2]) -> f64 {
        let contains = |o: &Obstacle| {
            let dx = point[0] - o.x;
            let dy = point[1] - o.y;
            dx * dx + dy * dy < o.radius * o.radius
        };
        let mut hits = 0u32;
        match self.grid.cell(point) {
            Some(cell) => {
                for &index in self.grid.obstacle_candidates(cell) {
                    if contains(&self.obstacles[index as usize]) {
                        hits += 1;
                    }
                }
            }
            None => {
                for o in &self.obstacles {
                    if contains(o) {
                        hits += 1;
                    }
                }
            }
        }
        hits as f64
    }

    /// State-dependent running cost:
    /// `c1 * boundary + c2 * obstacles + c3 * deviation^2`.
    pub fn running_cost(&self, state: &State, w: &CostWeights) -> f64 {
        self.step_cost(state.position(), w).0
    }

    /// Fused rollout query: running cost plus arc-length progress in one grid
    /// lookup. Identical arithmetic to `running_cost` and `probe`.
    #[inline]
    pub fn step_cost(&self, point: [f64; 2], w: &CostWeights) -> (f64, f64) {
        let cell = self.grid.cell(point);
        let (best_index, best_nearest) = match cell {
            Some(c) => self.scan_segments(point, self.grid.segment_candidates(c)),
            None => {
                let all: Vec<u8> = (0..self.segments.len() as u8).collect();
                self.scan_segments(point, &all)
            }
        };
        let segment = &self.segments[best_index];
        let (s_local, e) = segment.resolve(point, &best_nearest);
        let mut s = segment.s_offset + s_local;
        if s >= self.total_length {
            s -= self.total_length;
        }
        let d = self.half_width - e.abs();
        let contains = |o: &Obstacle| {
            let dx = point[0] - o.x;
            let dy = point[1] - o.y;
            dx * dx + dy * dy < o.radius * o.radius
        };
        let mut hits = 0u32;
        match cell {
            Some(c) => {
                for &index in self.grid.obstacle_candidates(c) {
                    if contains(&self.obstacles[index as usize]) {
                        hits += 1;
                    }
                }
            }
            None => {
                for o in &self.obstacles {
                    if contains(o) {
                        hits += 1;
                    }
                }
            }
        }
        let q = w.c1 * boundary_cost(d) + w.c2 * hits as f64 + w.c3 * e * e;
        (q, s)
    }

    /// Shortest signed arc difference from `s_start` to `s_end`, in
    /// `(-total_length/2, total_length/2]`.
    #[inline]
    pub fn progress_delta(&self, s_start: f64, s_end: f64) -> f64 {
        let half = 0.5 * self.total_length;
        let raw = (s_end - s_start).rem_euclid(self.total_length);
        if raw > half {
            raw - self.total_length
        } else {
            raw
        }
    }

    /// Centerline point and unit tangent at arc length `s`.
    pub fn frame_at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let s = s.rem_euclid(self.total_length);
        let mut index = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if s < seg.s_offset + seg.length {
                index = i;
                break;
            }
        }
        let seg = &self.segments[index];
        seg.frame_at(s - seg.s_offset)
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        self.frame_at(s).0
    }

    /// Narrowest passable lateral gap over the whole loop, sampled every
    /// `step` meters of arc length. Obstacle disks crossing a cross-section
    /// block a lateral band; the result is the smallest over all sections of
    /// the widest remaining free interval.
    pub fn min_corridor_width(&self, step: f64) -> f64 {
        let mut min_gap = 2.0 * self.half_width;
        let sections = (self.total_length / step).ceil() as usize;
        for i in 0..sections {
            let s = i as f64 * step;
            let (point, tangent) = self.frame_at(s);
            let normal = [-tangent[1], tangent[0]];
            let mut bands: Vec<(f64, f64)> = Vec::new();
            for o in &self.obstacles {
                let dv = sub([o.x, o.y], point);
                let along = dot(dv, normal);
                let disc = along * along - dot(dv, dv) + o.radius * o.radius;
                if disc > 0.0 {
                    let half = disc.sqrt();
                    let lo = (along - half).max(-self.half_width);
                    let hi = (along + half).min(self.half_width);
                    if lo < hi {
                        bands.push((lo, hi));
                    }
                }
            }
            bands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut widest: f64 = 0.0;
            let mut cursor = -self.half_width;
            for (lo, hi) in bands {
                if lo > cursor {
                    widest = widest.max(lo - cursor);
                }
                cursor = cursor.max(hi);
            }
            widest = widest.max(self.half_width - cursor);
            min_gap = min_gap.min(widest);
        }
        min_gap
    }
}

#[inline]
fn wrap_distance(a: f64, b: f64, total: f64) -> f64 {
    let d = (a - b).abs();
    d.min(total - d)
}

// --- configuration -----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcDirection {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcConfig {
    pub radius: f64,
    pub angle_deg: f64,
    pub direction: ArcDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SegmentConfig {
    Straight { straight: f64 },
    Arc { arc: ArcConfig },
}

/// Seeded obstacle placement parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub seed: u64,
    pub count: usize,
    pub radius: f64,
    /// Minimum arc-length spacing between obstacle centers (m).
    #[serde(default = "default_min_spacing")]
    pub min_spacing: f64,
    /// Maximum |lateral offset| of obstacle centers (m).
    #[serde(default = "default_max_offset")]
    pub max_offset: f64,
}

fn default_min_spacing() -> f64 {
    0.35
}

fn default_max_offset() -> f64 {
    0.25
}

/// Track description as read from the scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub half_width: f64,
    pub start_pose: StartPose,
    pub segments: Vec<SegmentConfig>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub obstacle_placement: Option<PlacementConfig>,
}

impl TrackConfig {
    /// Rounded-rectangle course: 10.9 m centerline, 0.6 m width, 0.3 m
    /// corners, ten seeded obstacles of radius 0.1 m.
    pub fn stadium() -> Self {
        let long = 3.0;
        // Chosen so 2*(long + short) + 2*pi*0.3 = 10.9 exactly.
        let short = 1.5075222039230622;
        let arc = SegmentConfig::Arc {
            arc: ArcConfig { radius: 0.3, angle_deg: 90.0, direction: ArcDirection::Left },
        };
        Self {
            half_width: 0.3,
            start_pose: StartPose { x: 0.0, y: 0.0, heading_deg: 0.0 },
            segments: vec![
                SegmentConfig::Straight { straight: long },
                arc,
                SegmentConfig::Straight { straight: short },
                arc,
                SegmentConfig::Straight { straight: long },
                arc,
                SegmentConfig::Straight { straight: short },
                arc,
            ],
            obstacles: Vec::new(),
            obstacle_placement: Some(PlacementConfig {
                seed: 7,
                count: 10,
                radius: 0.1,
                min_spacing: default_min_spacing(),
                max_offset: default_max_offset(),
            }),
        }
    }

    /// Same geometry with no obstacles.
    pub fn stadium_clear() -> Self {
        let mut c = Self::stadium();
        c.obstacle_placement = None;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stadium() -> Track {
        Track::build(&TrackConfig::stadium()).unwrap()
    }

    fn stadium_clear() -> Track {
        Track::build(&TrackConfig::stadium_clear()).unwrap()
    }

    #[test]
    fn stadium_centerline_length_is_ten_point_nine() {
        let t = stadium_clear();
        assert_relative_eq!(t.total_length(), 10.9, epsilon = 1e-9);
    }

    #[test]
    fn start_point_projects_to_origin_of_s() {
        let t = stadium_clear();
        let p = t.project([0.0, 0.0]);
        assert_eq!(p.s, 0.0);
        assert_eq!(p.e, 0.0);
        assert_eq!(p.segment, 0);
    }

    #[test]
    fn point_left_of_straight_midpoint() {
        let t = stadium_clear();
        // First segment runs along +x from the origin; left is +y.
        let p = t.project([1.5, 0.1]);
        assert_relative_eq!(p.e, 0.1, epsilon = 1e-12);
        assert_relative_eq!(p.s, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn arc_center_projects_with_full_radius_deviation() {
        let t = stadium_clear();
        // First corner is a left arc centered at (3.0, 0.3).
        let p = t.project([3.0, 0.3]);
        assert_relative_eq!(p.e, 0.3, epsilon = 1e-12);
        assert_eq!(p.segment, 1);
    }

    #[test]
    fn boundary_distance_cases() {
        let t = stadium_clear();
        assert_relative_eq!(t.boundary_distance([1.0, 0.0]), 0.3, epsilon = 1e-12);
        assert_relative_eq!(t.boundary_distance([1.0, 0.3]), 0.0, epsilon = 1e-12);
        assert_relative_eq!(t.boundary_distance([1.0, 0.4]), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn boundary_cost_matches_independent_evaluation() {
        assert_relative_eq!(boundary_cost(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(boundary_cost(-0.1), 0.9682744825694465, epsilon = 1e-14);
        assert_relative_eq!(boundary_cost(0.1), 0.03172551743055352, epsilon = 1e-14);
    }

    #[test]
    fn obstacle_cost_counts_strict_containment() {
        let mut config = TrackConfig::stadium_clear();
        config.obstacles = vec![
            Obstacle { x: 1.0, y: 0.0, radius: 0.1 },
            Obstacle { x: 1.05, y: 0.0, radius: 0.1 },
        ];
        let t = Track::build(&config).unwrap();
        assert_eq!(t.obstacle_cost([2.5, 0.0]), 0.0);
        assert_eq!(t.obstacle_cost([1.0, 0.0]), 2.0);
        // Exactly on the rim: strict inequality keeps the cost at zero.
        assert_eq!(t.obstacle_cost([1.0, 0.1]), 1.0);
        assert_eq!(t.obstacle_cost([1.05 + 0.1, 0.0]), 0.0);
    }

    #[test]
    fn running_cost_composes_boundary_deviation_and_obstacles() {
        let mut config = TrackConfig::stadium_clear();
        config.obstacles = vec![Obstacle { x: 2.0, y: 0.0, radius: 0.1 }];
        let t = Track::build(&config).unwrap();
        let w = CostWeights::default();

        // e = 0.1, d = 0.2, no obstacle nearby.
        let state = State::new(1.0, 0.1, 0.0, 0.0);
        let expected = 2.0 * boundary_cost(0.2) + 0.1 * 0.01;
        assert_relative_eq!(t.running_cost(&state, &w), expected, epsilon = 1e-12);

        // Inside the obstacle on the centerline: the c2 term adds exactly 1.
        let inside = State::new(2.0, 0.0, 0.0, 0.0);
        let outside = State::new(2.3, 0.0, 0.0, 0.0);
        assert_relative_eq!(
            t.running_cost(&inside, &w) - t.running_cost(&outside, &w),
            1.0,
            epsilon = 1e-12
        );

        // Centerline far from obstacles: only the boundary term survives.
        let center = State::new(0.5, 0.0, 0.0, 0.0);
        assert_relative_eq!(
            t.running_cost(&center, &w),
            2.0 * boundary_cost(0.3),
            epsilon = 1e-15
        );
    }

    #[test]
    fn terminal_cost_clamps_at_zero() {
        let w = CostWeights::default();
        assert_relative_eq!(terminal_cost(0.0, &w), 0.6, epsilon = 1e-15);
        assert_relative_eq!(terminal_cost(0.3, &w), 0.0, epsilon = 1e-15);
        assert_eq!(terminal_cost(0.5, &w), 0.0);
        // Backward motion is penalized without a clamp.
        assert_relative_eq!(terminal_cost(-0.1, &w), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn progress_delta_handles_wrap() {
        let t = stadium_clear();
        assert_relative_eq!(t.progress_delta(0.0, 0.1), 0.1, epsilon = 1e-12);
        assert_relative_eq!(t.progress_delta(10.85, 0.05), 0.1, epsilon = 1e-9);
        assert_relative_eq!(t.progress_delta(0.05, 10.85), -0.1, epsilon = 1e-9);
    }

    #[test]
    fn unclosed_track_is_rejected() {
        let config = TrackConfig {
            half_width: 0.3,
            start_pose: StartPose { x: 0.0, y: 0.0, heading_deg: 0.0 },
            segments: vec![SegmentConfig::Straight { straight: 1.0 }],
            obstacles: Vec::new(),
            obstacle_placement: None,
        };
        assert!(matches!(Track::build(&config), Err(TrackError::NotClosed { .. })));
    }

    #[test]
    fn placement_is_deterministic_and_keeps_a_corridor() {
        for seed in [1u64, 7, 42, 1234] {
            let mut config = TrackConfig::stadium();
            config.obstacle_placement.as_mut().unwrap().seed = seed;
            let a = Track::build(&config).unwrap();
            let b = Track::build(&config).unwrap();
            assert_eq!(a.obstacles(), b.obstacles());
            assert_eq!(a.obstacles().len(), 10);
            let corridor = a.min_corridor_width(0.02);
            assert!(corridor >= 0.15, "seed {seed}: corridor {corridor}");
        }
    }

    #[test]
    fn default_obstacles_stay_near_the_track() {
        let t = stadium();
        for o in t.obstacles() {
            let probe = t.probe([o.x, o.y]);
            assert!(probe.e.abs() <= 0.25 + 1e-9);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn boundary_cost_is_monotone_and_bounded(
                d1 in -2.0..2.0f64,
                d2 in -2.0..2.0f64,
            ) {
                let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
                prop_assert!(boundary_cost(lo) >= boundary_cost(hi));
                for d in [d1, d2] {
                    let c = boundary_cost(d);
                    prop_assert!((0.0..1.0).contains(&c));
                }
                // Complement identity away from the (inactive) clamp.
                prop_assert!((boundary_cost(d1) + boundary_cost(-d1) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn projection_round_trips_through_unprojection(
                s in 0.0..10.9f64,
                e in -0.25..0.25f64,
            ) {
                let t = stadium_clear();
                let (point, tangent) = t.frame_at(s);
                let normal = [-tangent[1], tangent[0]];
                let query = [point[0] + e * normal[0], point[1] + e * normal[1]];
                let p = t.project(query);
                let (rp, rt) = t.frame_at(p.s);
                let rn = [-rt[1], rt[0]];
                let rebuilt = [rp[0] + p.e * rn[0], rp[1] + p.e * rn[1]];
                prop_assert!((rebuilt[0] - query[0]).abs() < 1e-9);
                prop_assert!((rebuilt[1] - query[1]).abs() < 1e-9);
            }

            #[test]
            fn projection_is_nearest_among_dense_centerline_samples(
                x in -1.0..4.5f64,
                y in -1.0..3.0f64,
            ) {
                let t = stadium();
                let p = t.project([x, y]);
                let proj_dist = p.e.abs();
                for i in 0..500 {
                    let s = t.total_length() * i as f64 / 500.0;
                    let c = t.point_at(s);
                    let d = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
                    prop_assert!(d >= proj_dist - 1e-6, "s={s}: {d} < {proj_dist}");
                }
                // The reported deviation is realized by the projected point.
                let (c, tangent) = t.frame_at(p.s);
                let n = [-tangent[1], tangent[0]];
                let q = [c[0] + p.e * n[0], c[1] + p.e * n[1]];
                let gap = ((x - q[0]).powi(2) + (y - q[1]).powi(2)).sqrt();
                prop_assert!(gap < 1e-7, "gap {gap}");
            }

            #[test]
            fn obstacle_cost_matches_naive_containment_count(
                x in -1.0..4.5f64,
                y in -1.0..3.0f64,
            ) {
                let t = stadium();
                let naive = t
                    .obstacles()
                    .iter()
                    .filter(|o| {
                        let dx = x - o.x;
                        let dy = y - o.y;
                        dx * dx + dy * dy < o.radius * o.radius
                    })
                    .count() as f64;
                prop_assert_eq!(t.obstacle_cost([x, y]), naive);
            }

            #[test]
            fn progress_delta_is_antisymmetric(
                a in 0.0..10.9f64,
                b in 0.0..10.9f64,
            ) {
                let t = stadium_clear();
                let fwd = t.progress_delta(a, b);
                let back = t.progress_delta(b, a);
                // Antisymmetric modulo the wrap rule (half-length ties map to
                // the same representative).
                let sum = fwd + back;
                prop_assert!(sum.abs() < 1e-9 || (sum.abs() - t.total_length()).abs() < 1e-9);
            }

            #[test]
            fn running_cost_is_nonnegative(
                x in -1.0..4.5f64,
                y in -1.0..3.0f64,
            ) {
                let t = stadium();
                let w = CostWeights::default();
                prop_assert!(t.running_cost(&State::new(x, y, 0.0, 0.0), &w) >= 0.0);
            }
        }
    }
}
